//! Conversion of BDD100K per-split label files into manifests.
//!
//! The label file is a JSON array of frames, each with a `name` and an
//! `attributes` object carrying `weather`, `scene` and `timeofday`.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{DatasetError, Manifest, SampleRecord};
use crate::schema::CategorySchema;

const WEATHER: &str = "Weather";
const ENVIRONMENT: &str = "Environment";
const TIME_OF_DAY: &str = "Time of day";

#[derive(Debug, Deserialize)]
struct Frame {
    name: String,
    #[serde(default)]
    attributes: Attributes,
}

#[derive(Debug, Default, Deserialize)]
struct Attributes {
    weather: Option<String>,
    scene: Option<String>,
    timeofday: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdaptWarning {
    MissingImage { sample_id: String, path: PathBuf },
    UnmappedValue {
        sample_id: String,
        attribute: &'static str,
        value: String,
        /// Tag used instead, if the category has a fallback.
        replaced_by: Option<String>,
    },
    MissingCategory { category: &'static str },
}

impl std::fmt::Display for AdaptWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AdaptWarning::MissingImage { sample_id, path } => {
                write!(f, "{sample_id}: image not found at {}", path.display())
            }
            AdaptWarning::UnmappedValue { sample_id, attribute, value, replaced_by: Some(t) } => {
                write!(f, "{sample_id}: {attribute}={value:?} has no mapping, using {t:?}")
            }
            AdaptWarning::UnmappedValue { sample_id, attribute, value, replaced_by: None } => {
                write!(f, "{sample_id}: {attribute}={value:?} has no mapping, label dropped")
            }
            AdaptWarning::MissingCategory { category } => {
                write!(f, "schema has no {category:?} category, attribute ignored")
            }
        }
    }
}

#[derive(Debug)]
pub struct Bdd100kAdaptation {
    pub manifest: Manifest,
    pub warnings: Vec<AdaptWarning>,
}

type Mapper = fn(&str) -> Option<&str>;

fn map_scene(v: &str) -> Option<&'static str> {
    Some(match v {
        "residential" => "residential area",
        "gas stations" => "gas station",
        "highway" => "highway",
        "city street" => "city street",
        "parking lot" => "parking lot",
        "tunnel" => "tunnel",
        "undefined" => "undefined",
        _ => return None,
    })
}

fn map_timeofday(v: &str) -> Option<&'static str> {
    Some(match v {
        "dawn/dusk" => "twilight",
        "night" => "nighttime",
        "daytime" => "daytime",
        "undefined" => "undefined",
        _ => return None,
    })
}

fn map_weather(v: &str) -> Option<&str> {
    Some(v)
}

pub fn adapt_bdd100k<R: Read>(
    label_file: R,
    image_root: &Path,
    schema: &CategorySchema,
) -> Result<Bdd100kAdaptation, DatasetError> {
    let frames: Vec<Frame> = serde_json::from_reader(label_file)?;
    let mut warnings = Vec::new();
    for category in [WEATHER, ENVIRONMENT, TIME_OF_DAY] {
        if schema.category(category).is_none() {
            warnings.push(AdaptWarning::MissingCategory { category });
        }
    }

    let mut samples = Vec::with_capacity(frames.len());
    let mut seen = std::collections::HashSet::new();
    for frame in frames {
        let sample_id = Path::new(&frame.name)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| frame.name.clone());
        if !seen.insert(sample_id.clone()) {
            return Err(DatasetError::Syntax {
                line: samples.len() + 1,
                message: format!("duplicate frame name {:?}", frame.name),
            });
        }
        let image_path = image_root.join(&frame.name);
        if !image_path.is_file() {
            warnings.push(AdaptWarning::MissingImage { sample_id: sample_id.clone(), path: image_path.clone() });
        }

        let mut labels = BTreeMap::new();
        let attrs = &frame.attributes;
        let mappings: [(&'static str, &'static str, Option<&String>, Mapper); 3] = [
            ("weather", WEATHER, attrs.weather.as_ref(), map_weather),
            ("scene", ENVIRONMENT, attrs.scene.as_ref(), |v| map_scene(v)),
            ("timeofday", TIME_OF_DAY, attrs.timeofday.as_ref(), |v| map_timeofday(v)),
        ];
        for (attribute, category, value, map) in mappings {
            let (Some(value), Some(cat)) = (value, schema.category(category)) else {
                continue;
            };
            match map(value).and_then(|t| cat.canonical_tag(t)) {
                Some(tag) => {
                    labels.insert(cat.name.clone(), tag.to_string());
                }
                None => {
                    let replaced_by = cat.fallback_tag.clone();
                    if let Some(fb) = &replaced_by {
                        labels.insert(cat.name.clone(), fb.clone());
                    }
                    warnings.push(AdaptWarning::UnmappedValue {
                        sample_id: sample_id.clone(),
                        attribute,
                        value: value.clone(),
                        replaced_by,
                    });
                }
            }
        }
        samples.push(SampleRecord { sample_id, image_path, labels });
    }

    Ok(Bdd100kAdaptation {
        manifest: Manifest { dataset_name: "bdd100k".to_string(), samples },
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::builtin_schema;

    fn adapt(json: &str) -> Bdd100kAdaptation {
        adapt_bdd100k(json.as_bytes(), Path::new("/nonexistent"), &builtin_schema()).unwrap()
    }

    #[test]
    fn identity_and_value_mappings() {
        let a = adapt(
            r#"[{"name":"x.jpg","attributes":{"weather":"clear","scene":"city street","timeofday":"daytime"}},
                {"name":"y.jpg","attributes":{"weather":"partly cloudy","scene":"gas stations","timeofday":"dawn/dusk"}},
                {"name":"z.jpg","attributes":{"weather":"foggy","scene":"residential","timeofday":"night"}}]"#,
        );
        let l = |i: usize| &a.manifest.samples[i].labels;
        assert_eq!(l(0)["Weather"], "clear");
        assert_eq!(l(0)["Environment"], "city street");
        assert_eq!(l(0)["Time of day"], "daytime");
        assert_eq!(l(1)["Weather"], "partly cloudy");
        assert_eq!(l(1)["Environment"], "gas station");
        assert_eq!(l(1)["Time of day"], "twilight");
        assert_eq!(l(2)["Environment"], "residential area");
        assert_eq!(l(2)["Time of day"], "nighttime");
        assert_eq!(a.manifest.samples[0].sample_id, "x");
        // all three images are missing under /nonexistent
        assert_eq!(a.warnings.iter().filter(|w| matches!(w, AdaptWarning::MissingImage { .. })).count(), 3);
    }

    #[test]
    fn unknown_values_fall_back() {
        let a = adapt(r#"[{"name":"x.jpg","attributes":{"scene":"airport","weather":"hail"}}]"#);
        let labels = &a.manifest.samples[0].labels;
        assert_eq!(labels["Environment"], "undefined");
        assert_eq!(labels["Weather"], "undefined");
        assert!(!labels.contains_key("Time of day"));
        assert!(a.warnings.contains(&AdaptWarning::UnmappedValue {
            sample_id: "x".into(),
            attribute: "scene",
            value: "airport".into(),
            replaced_by: Some("undefined".into()),
        }));
    }

    #[test]
    fn drops_without_fallback() {
        let mut schema = builtin_schema();
        for c in &mut schema.categories {
            c.fallback_tag = None;
        }
        let a = adapt_bdd100k(
            r#"[{"name":"x.jpg","attributes":{"scene":"airport"}}]"#.as_bytes(),
            Path::new("/nonexistent"),
            &schema,
        )
        .unwrap();
        assert!(a.manifest.samples[0].labels.is_empty());
        assert!(a.warnings.iter().any(|w| matches!(w, AdaptWarning::UnmappedValue { replaced_by: None, .. })));
    }

    #[test]
    fn malformed() {
        assert!(adapt_bdd100k(&b"{}"[..], Path::new("."), &builtin_schema()).is_err());
    }
}
