//! Confusion matrices, accuracy, macro-F1 and circular-shift consistency.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::dataset::Manifest;
use crate::record::PredictionRecord;
use crate::schema::Category;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("truth has {truth} entries but predictions have {pred}")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("tag {0:?} is not in the vocabulary")]
    UnknownTag(String),
    #[error("nothing to evaluate")]
    EmptyEvaluation,
    #[error("no sample carries a label for category {0:?}")]
    NoLabeledSamples(String),
    #[error("shift {shift} covers a different sample set than shift {reference}")]
    SampleSetMismatch { reference: usize, shift: usize },
}

/// How zero-support tags enter the macro average.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum F1Averaging {
    /// Mean over the full vocabulary; a tag that never occurs in truth or
    /// predictions contributes an F1 of 0.
    #[default]
    FullVocabulary,
    /// Mean over tags that occur in the ground truth or the predictions.
    ObservedOnly,
}

/// Rows are true tags, columns predicted tags.
///
/// Samples whose answer could not be mapped to a tag are tallied per true
/// tag in `unparsed`, a column outside the vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub tags: Vec<String>,
    pub counts: Vec<Vec<u64>>,
    pub unparsed: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TagScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryScores {
    pub category_name: String,
    pub n: u64,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_tag: BTreeMap<String, TagScores>,
    #[serde(skip)]
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanScores {
    pub mean_accuracy: f64,
    pub mean_macro_f1: f64,
}

impl ConfusionMatrix {
    pub fn empty(vocabulary: &[String]) -> Self {
        let k = vocabulary.len();
        Self {
            tags: vocabulary.to_vec(),
            counts: vec![vec![0; k]; k],
            unparsed: vec![0; k],
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum::<u64>() + self.unparsed.iter().sum::<u64>()
    }

    pub fn trace(&self) -> u64 {
        (0..self.tags.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Samples whose true tag is `i`, including unparsed answers.
    pub fn support(&self, i: usize) -> u64 {
        self.counts[i].iter().sum::<u64>() + self.unparsed[i]
    }

    fn predicted(&self, j: usize) -> u64 {
        self.counts.iter().map(|row| row[j]).sum()
    }

    pub fn tag_scores(&self, i: usize) -> TagScores {
        let tp = self.counts[i][i] as f64;
        let predicted = self.predicted(i) as f64;
        let support = self.support(i);
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = if support > 0 { tp / support as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        TagScores { precision, recall, f1, support }
    }
}

fn index_of(vocabulary: &[String], tag: &str) -> Result<usize, MetricsError> {
    vocabulary
        .iter()
        .position(|t| t == tag)
        .ok_or_else(|| MetricsError::UnknownTag(tag.to_string()))
}

pub fn confusion<S: AsRef<str>>(
    truth: &[S],
    pred: &[S],
    vocabulary: &[String],
) -> Result<ConfusionMatrix, MetricsError> {
    if truth.len() != pred.len() {
        return Err(MetricsError::LengthMismatch { truth: truth.len(), pred: pred.len() });
    }
    let mut cm = ConfusionMatrix::empty(vocabulary);
    for (t, p) in truth.iter().zip(pred) {
        let i = index_of(vocabulary, t.as_ref())?;
        let j = index_of(vocabulary, p.as_ref())?;
        cm.counts[i][j] += 1;
    }
    Ok(cm)
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    let n = cm.total();
    if n == 0 {
        return Err(MetricsError::EmptyEvaluation);
    }
    Ok(cm.trace() as f64 / n as f64)
}

pub fn macro_f1(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    macro_f1_with(cm, F1Averaging::default())
}

pub fn macro_f1_with(cm: &ConfusionMatrix, averaging: F1Averaging) -> Result<f64, MetricsError> {
    if cm.total() == 0 {
        return Err(MetricsError::EmptyEvaluation);
    }
    let included: Vec<usize> = (0..cm.tags.len())
        .filter(|&i| match averaging {
            F1Averaging::FullVocabulary => true,
            F1Averaging::ObservedOnly => cm.support(i) > 0 || cm.predicted(i) > 0,
        })
        .collect();
    if included.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = included.iter().map(|&i| cm.tag_scores(i).f1).sum();
    Ok(sum / included.len() as f64)
}

/// Scores one model's predictions for one category against the manifest.
///
/// Every sample labeled for the category counts towards `n`. A sample with
/// no usable prediction counts as a miss for its true tag.
pub fn score_category(
    records: &[PredictionRecord],
    manifest: &Manifest,
    category: &Category,
) -> Result<CategoryScores, MetricsError> {
    score_category_with(records, manifest, category, F1Averaging::default())
}

pub fn score_category_with(
    records: &[PredictionRecord],
    manifest: &Manifest,
    category: &Category,
    averaging: F1Averaging,
) -> Result<CategoryScores, MetricsError> {
    let mut predictions: HashMap<&str, Option<&str>> = HashMap::new();
    for r in records.iter().filter(|r| r.category == category.name) {
        predictions.entry(r.sample_id.as_str()).or_insert(r.tag.as_deref());
    }
    let mut cm = ConfusionMatrix::empty(&category.tags);
    for sample in &manifest.samples {
        let Some(truth) = sample.labels.get(&category.name) else {
            continue;
        };
        let i = index_of(&category.tags, truth)?;
        match predictions.get(sample.sample_id.as_str()).copied().flatten() {
            Some(p) => match category.tag_index(p) {
                Some(j) => cm.counts[i][j] += 1,
                None => cm.unparsed[i] += 1,
            },
            None => cm.unparsed[i] += 1,
        }
    }
    if cm.total() == 0 {
        return Err(MetricsError::NoLabeledSamples(category.name.clone()));
    }
    Ok(CategoryScores {
        category_name: category.name.clone(),
        n: cm.total(),
        accuracy: accuracy(&cm)?,
        macro_f1: macro_f1_with(&cm, averaging)?,
        per_tag: (0..cm.tags.len())
            .map(|i| (cm.tags[i].clone(), cm.tag_scores(i)))
            .collect(),
        confusion: cm,
    })
}

pub fn mean_scores(per_category: &[CategoryScores]) -> Result<MeanScores, MetricsError> {
    if per_category.is_empty() {
        return Err(MetricsError::EmptyEvaluation);
    }
    let n = per_category.len() as f64;
    Ok(MeanScores {
        mean_accuracy: per_category.iter().map(|s| s.accuracy).sum::<f64>() / n,
        mean_macro_f1: per_category.iter().map(|s| s.macro_f1).sum::<f64>() / n,
    })
}

/// Fraction of samples whose parsed tag is the same under every shift.
///
/// Input is one category's records grouped by shift. A sample that fails to
/// parse counts as consistent only if it fails under every shift.
pub fn shift_consistency(
    records_by_shift: &BTreeMap<usize, Vec<PredictionRecord>>,
) -> Result<f64, MetricsError> {
    let mut shifts = records_by_shift.iter();
    let Some((&reference, first)) = shifts.next() else {
        return Err(MetricsError::EmptyEvaluation);
    };
    let outcomes = |records: &[PredictionRecord]| -> BTreeMap<String, Option<String>> {
        records.iter().map(|r| (r.sample_id.clone(), r.tag.clone())).collect()
    };
    let base = outcomes(first);
    if base.is_empty() {
        return Err(MetricsError::EmptyEvaluation);
    }
    let ids: BTreeSet<&String> = base.keys().collect();
    let mut consistent: BTreeMap<&String, bool> = ids.iter().map(|id| (*id, true)).collect();
    for (&shift, records) in shifts {
        let other = outcomes(records);
        if other.keys().collect::<BTreeSet<_>>() != ids {
            return Err(MetricsError::SampleSetMismatch { reference, shift });
        }
        for (id, ok) in consistent.iter_mut() {
            *ok &= base[*id] == other[*id];
        }
    }
    let hits = consistent.values().filter(|ok| **ok).count();
    Ok(hits as f64 / ids.len() as f64)
}

pub fn write_scores_csv<W: Write>(
    out: W,
    model_scores: &[(String, CategoryScores)],
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["category", "model", "n", "accuracy", "macro_f1"])?;
    for (model, s) in model_scores {
        w.write_record([
            s.category_name.as_str(),
            model,
            &s.n.to_string(),
            &s.accuracy.to_string(),
            &s.macro_f1.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_per_tag_csv<W: Write>(
    out: W,
    model_scores: &[(String, CategoryScores)],
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["category", "model", "tag", "precision", "recall", "f1", "support"])?;
    for (model, s) in model_scores {
        for tag in &s.confusion.tags {
            let t = &s.per_tag[tag];
            w.write_record([
                s.category_name.as_str(),
                model,
                tag,
                &t.precision.to_string(),
                &t.recall.to_string(),
                &t.f1.to_string(),
                &t.support.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
