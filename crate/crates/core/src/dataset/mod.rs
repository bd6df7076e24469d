//! Ground-truth datasets: the JSON Lines manifest, the BDD100K adapter and
//! image helpers.

mod bdd100k;
mod imaging;

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::CategorySchema;

pub use bdd100k::{adapt_bdd100k, AdaptWarning, Bdd100kAdaptation};
pub use imaging::{image_mime, resize_image, ImageError};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("sample {sample_id:?}: {reason} ({category:?} = {tag:?})")]
    Label {
        sample_id: String,
        category: String,
        tag: String,
        reason: LabelProblem,
    },
    #[error("malformed BDD100K label file: {0}")]
    Bdd100k(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelProblem {
    UnknownCategory,
    TagNotInVocabulary,
}

impl std::fmt::Display for LabelProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LabelProblem::UnknownCategory => "unknown category",
            LabelProblem::TagNotInVocabulary => "tag not in vocabulary",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub sample_id: String,
    pub image_path: PathBuf,
    #[serde(default)]
    pub labels: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub dataset_name: String,
    pub samples: Vec<SampleRecord>,
}

impl Manifest {
    pub fn sample(&self, sample_id: &str) -> Option<&SampleRecord> {
        self.samples.iter().find(|s| s.sample_id == sample_id)
    }

    /// Makes relative image paths relative to `base` instead of the
    /// working directory.
    pub fn resolve_paths(&mut self, base: &Path) {
        for s in &mut self.samples {
            if s.image_path.is_relative() {
                s.image_path = base.join(&s.image_path);
            }
        }
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for s in &self.samples {
            serde_json::to_writer(&mut out, s)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Checks one label against the schema and returns the canonical
/// (category, tag) spelling.
fn check_label(
    schema: &CategorySchema,
    sample_id: &str,
    category: &str,
    tag: &str,
) -> Result<(String, String), DatasetError> {
    let err = |reason| DatasetError::Label {
        sample_id: sample_id.to_string(),
        category: category.to_string(),
        tag: tag.to_string(),
        reason,
    };
    let cat = schema.category(category).ok_or_else(|| err(LabelProblem::UnknownCategory))?;
    let canonical = cat.canonical_tag(tag).ok_or_else(|| err(LabelProblem::TagNotInVocabulary))?;
    Ok((cat.name.clone(), canonical.to_string()))
}

fn parse_lines<R: BufRead>(source: R) -> Result<Vec<SampleRecord>, DatasetError> {
    let mut samples = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: SampleRecord = serde_json::from_str(&line).map_err(|e| DatasetError::Syntax {
            line: i + 1,
            message: e.to_string(),
        })?;
        if !ids.insert(sample.sample_id.clone()) {
            return Err(DatasetError::Syntax {
                line: i + 1,
                message: format!("duplicate sample_id {:?}", sample.sample_id),
            });
        }
        samples.push(sample);
    }
    Ok(samples)
}

/// Reads a JSON Lines manifest and checks every label against `schema`.
pub fn load_manifest<R: BufRead>(source: R, schema: &CategorySchema) -> Result<Manifest, DatasetError> {
    let mut samples = parse_lines(source)?;
    for s in &mut samples {
        let mut labels = BTreeMap::new();
        for (c, t) in &s.labels {
            let (c, t) = check_label(schema, &s.sample_id, c, t)?;
            labels.insert(c, t);
        }
        s.labels = labels;
    }
    Ok(Manifest { dataset_name: String::new(), samples })
}

/// Like [`load_manifest`] but reports every label problem instead of the
/// first one. Syntax errors still abort.
pub fn manifest_violations<R: BufRead>(
    source: R,
    schema: &CategorySchema,
) -> Result<Vec<DatasetError>, DatasetError> {
    let samples = parse_lines(source)?;
    Ok(samples
        .iter()
        .flat_map(|s| {
            s.labels
                .iter()
                .filter_map(|(c, t)| check_label(schema, &s.sample_id, c, t).err())
        })
        .collect())
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("clip has no frames")]
pub struct EmptyClip;

/// Picks the lower median of a time-ordered frame list.
pub fn select_median_frame<T>(frames: &[T]) -> Result<&T, EmptyClip> {
    if frames.is_empty() {
        return Err(EmptyClip);
    }
    Ok(&frames[(frames.len() - 1) / 2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::builtin_schema;

    #[test]
    fn single_sample_manifest() {
        let doc = r#"{"sample_id":"a","image_path":"a.png","labels":{"person":"Yes"}}"#;
        let m = load_manifest(doc.as_bytes(), &builtin_schema()).unwrap();
        assert_eq!(m.samples.len(), 1);
        assert_eq!(m.samples[0].labels["Person"], "yes");
    }

    #[test]
    fn bad_tag_and_category() {
        let s = builtin_schema();
        let doc = r#"{"sample_id":"a","image_path":"a.png","labels":{"Weather":"sunny"}}"#;
        match load_manifest(doc.as_bytes(), &s) {
            Err(DatasetError::Label { sample_id, category, tag, reason }) => {
                assert_eq!((sample_id.as_str(), category.as_str(), tag.as_str()), ("a", "Weather", "sunny"));
                assert_eq!(reason, LabelProblem::TagNotInVocabulary);
            }
            other => panic!("{other:?}"),
        }
        let doc = r#"{"sample_id":"a","image_path":"a.png","labels":{"colour":"red"}}"#;
        assert!(matches!(
            load_manifest(doc.as_bytes(), &s),
            Err(DatasetError::Label { reason: LabelProblem::UnknownCategory, .. })
        ));
    }

    #[test]
    fn duplicate_ids_and_garbage() {
        let s = builtin_schema();
        let doc = "{\"sample_id\":\"a\",\"image_path\":\"a.png\"}\n{\"sample_id\":\"a\",\"image_path\":\"b.png\"}\n";
        assert!(matches!(load_manifest(doc.as_bytes(), &s), Err(DatasetError::Syntax { line: 2, .. })));
        assert!(matches!(load_manifest(&b"nope"[..], &s), Err(DatasetError::Syntax { line: 1, .. })));
    }

    #[test]
    fn violations_are_all_listed() {
        let doc = r#"{"sample_id":"a","image_path":"a.png","labels":{"Weather":"sunny","Person":"maybe","Time of day":"daytime"}}"#;
        let v = manifest_violations(doc.as_bytes(), &builtin_schema()).unwrap();
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn median_frame() {
        let five = ["f0", "f1", "f2", "f3", "f4"];
        assert_eq!(*select_median_frame(&five).unwrap(), "f2");
        assert_eq!(*select_median_frame(&five[..4]).unwrap(), "f1");
        assert_eq!(*select_median_frame(&five[..1]).unwrap(), "f0");
        assert_eq!(select_median_frame::<&str>(&[]), Err(EmptyClip));
    }

    #[test]
    fn resolve_relative_paths() {
        let mut m = Manifest {
            dataset_name: "d".into(),
            samples: vec![
                SampleRecord { sample_id: "a".into(), image_path: "img/a.png".into(), labels: BTreeMap::new() },
                SampleRecord { sample_id: "b".into(), image_path: "/abs/b.png".into(), labels: BTreeMap::new() },
            ],
        };
        m.resolve_paths(Path::new("/data"));
        assert_eq!(m.samples[0].image_path, Path::new("/data/img/a.png"));
        assert_eq!(m.samples[1].image_path, Path::new("/abs/b.png"));
    }
}
