//! Comparison tables across models: best model per category, per-model
//! means, latency rows and long-form plot data.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no score cells to report")]
    EmptyInput,
    #[error("{model}/{category}: {metric} = {value} is outside [0, 100]")]
    OutOfRange { model: String, category: String, metric: &'static str, value: f64 },
    #[error("duplicate cell for {model}/{category}")]
    DuplicateCell { model: String, category: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Scores of one model on one category, in percent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelCategoryCell {
    pub model: String,
    pub category: String,
    pub accuracy: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelMean {
    pub model: String,
    pub mean_accuracy: f64,
    pub mean_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub model: String,
    pub latency_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportBundle {
    pub best_by_category: Vec<ModelCategoryCell>,
    pub model_means: Vec<ModelMean>,
    /// Sorted fastest first.
    pub latency_rows: Vec<LatencyRow>,
    pub plot_data: Vec<ModelCategoryCell>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

/// Picks, per category, the cell with the highest macro-F1. Ties go to the
/// higher accuracy, then the model name that sorts first. Categories keep
/// their first-appearance order.
pub fn best_by_f1(cells: &[ModelCategoryCell]) -> Result<Vec<ModelCategoryCell>, ReportError> {
    if cells.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    let mut order: Vec<&str> = Vec::new();
    let mut best: BTreeMap<&str, &ModelCategoryCell> = BTreeMap::new();
    for cell in cells {
        match best.get(cell.category.as_str()) {
            None => {
                order.push(&cell.category);
                best.insert(&cell.category, cell);
            }
            Some(cur) => {
                let better = cell
                    .macro_f1
                    .total_cmp(&cur.macro_f1)
                    .then(cell.accuracy.total_cmp(&cur.accuracy))
                    .then(cur.model.cmp(&cell.model))
                    .is_gt();
                if better {
                    best.insert(&cell.category, cell);
                }
            }
        }
    }
    Ok(order.into_iter().map(|c| best[c].clone()).collect())
}

impl ReportBundle {
    pub fn build(cells: Vec<ModelCategoryCell>, mut latency_rows: Vec<LatencyRow>) -> Result<Self, ReportError> {
        let mut seen = std::collections::HashSet::new();
        for c in &cells {
            for (metric, value) in [("accuracy", c.accuracy), ("macro_f1", c.macro_f1)] {
                if !(0.0..=100.0).contains(&value) {
                    return Err(ReportError::OutOfRange {
                        model: c.model.clone(),
                        category: c.category.clone(),
                        metric,
                        value,
                    });
                }
            }
            if !seen.insert((&c.model, &c.category)) {
                return Err(ReportError::DuplicateCell { model: c.model.clone(), category: c.category.clone() });
            }
        }
        let best_by_category = best_by_f1(&cells)?;

        let mut sums: BTreeMap<&str, (f64, f64, usize)> = BTreeMap::new();
        for c in &cells {
            let e = sums.entry(&c.model).or_default();
            e.0 += c.accuracy;
            e.1 += c.macro_f1;
            e.2 += 1;
        }
        let model_means = sums
            .into_iter()
            .map(|(model, (acc, f1, n))| ModelMean {
                model: model.to_string(),
                mean_accuracy: acc / n as f64,
                mean_f1: f1 / n as f64,
            })
            .collect();

        latency_rows.sort_by(|a, b| a.latency_s.total_cmp(&b.latency_s).then(a.model.cmp(&b.model)));
        Ok(Self { best_by_category, model_means, latency_rows, plot_data: cells })
    }

    pub fn fastest(&self) -> Option<&LatencyRow> {
        self.latency_rows.first()
    }
}

pub fn render_tables(bundle: &ReportBundle, format: TableFormat) -> Vec<u8> {
    match format {
        TableFormat::Markdown => render_markdown(bundle).into_bytes(),
        TableFormat::Csv => render_csv(bundle),
    }
}

fn render_markdown(b: &ReportBundle) -> String {
    let mut s = String::new();
    s.push_str("## Best model per category (by macro-F1)\n\n");
    s.push_str("| Category | Model | Acc | F1 |\n|---|---|---:|---:|\n");
    for c in &b.best_by_category {
        let _ = writeln!(s, "| {} | {} | {:.1} | {:.1} |", c.category, c.model, c.accuracy, c.macro_f1);
    }
    s.push_str("\n## Mean scores per model\n\n");
    s.push_str("| Model | Mean Acc | Mean F1 |\n|---|---:|---:|\n");
    for m in &b.model_means {
        let _ = writeln!(s, "| {} | {:.1} | {:.1} |", m.model, m.mean_accuracy, m.mean_f1);
    }
    if !b.latency_rows.is_empty() {
        s.push_str("\n## Latency per image\n\n");
        s.push_str("| Model | Latency [s] |\n|---|---:|\n");
        for r in &b.latency_rows {
            let _ = writeln!(s, "| {} | {:.3} |", r.model, r.latency_s);
        }
    }
    s
}

fn render_csv(b: &ReportBundle) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let rows = b
        .best_by_category
        .iter()
        .map(|c| ["best_by_category".into(), c.category.clone(), c.model.clone(), format!("{:.1}", c.accuracy), format!("{:.1}", c.macro_f1), String::new()])
        .chain(b.model_means.iter().map(|m| {
            ["model_means".into(), String::new(), m.model.clone(), format!("{:.1}", m.mean_accuracy), format!("{:.1}", m.mean_f1), String::new()]
        }))
        .chain(b.latency_rows.iter().map(|r| {
            ["latency".into(), String::new(), r.model.clone(), String::new(), String::new(), format!("{:.3}", r.latency_s)]
        }));
    w.write_record(["table", "category", "model", "accuracy", "macro_f1", "latency_s"]).unwrap();
    for row in rows {
        w.write_record(&row).unwrap();
    }
    w.into_inner().expect("in-memory writer")
}

/// Long-form `model,category,metric,value` rows for external plotting.
pub fn export_plot_data(bundle: &ReportBundle) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "category", "metric", "value"]).unwrap();
    for c in &bundle.plot_data {
        for (metric, value) in [("accuracy", c.accuracy), ("macro_f1", c.macro_f1)] {
            w.write_record([c.model.as_str(), &c.category, metric, &value.to_string()]).unwrap();
        }
    }
    w.into_inner().expect("in-memory writer")
}

#[derive(Debug, Deserialize)]
struct ScoreRow {
    category: String,
    model: String,
    #[allow(dead_code)]
    n: Option<u64>,
    accuracy: f64,
    macro_f1: f64,
}

/// Reads a scores CSV (`category,model,n,accuracy,macro_f1`, fractions in
/// [0, 1]) into percent cells.
pub fn read_scores_csv<R: Read>(input: R) -> Result<Vec<ModelCategoryCell>, ReportError> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize::<ScoreRow>()
        .map(|row| {
            let row = row?;
            Ok(ModelCategoryCell {
                model: row.model,
                category: row.category,
                accuracy: row.accuracy * 100.0,
                macro_f1: row.macro_f1 * 100.0,
            })
        })
        .collect()
}

/// Reads a `model,latency_s` CSV.
pub fn read_latency_csv<R: Read>(input: R) -> Result<Vec<LatencyRow>, ReportError> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

pub fn write_latency_csv(rows: &[LatencyRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).unwrap();
    }
    w.into_inner().expect("in-memory writer")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(model: &str, category: &str, acc: f64, f1: f64) -> ModelCategoryCell {
        ModelCategoryCell { model: model.into(), category: category.into(), accuracy: acc, macro_f1: f1 }
    }

    #[test]
    fn f1_decides_then_accuracy_then_name() {
        let cells = [
            cell("a", "Weather", 90.0, 30.0),
            cell("b", "Weather", 70.0, 40.0),
            cell("c", "Person", 80.0, 50.0),
            cell("d", "Person", 90.0, 50.0),
            cell("f", "VIB", 80.0, 50.0),
            cell("e", "VIB", 80.0, 50.0),
        ];
        let best = best_by_f1(&cells).unwrap();
        let picked: Vec<_> = best.iter().map(|c| (c.category.as_str(), c.model.as_str())).collect();
        assert_eq!(picked, [("Weather", "b"), ("Person", "d"), ("VIB", "e")]);
        assert!(matches!(best_by_f1(&[]), Err(ReportError::EmptyInput)));
    }

    #[test]
    fn latency_section_only_when_present() {
        let b = ReportBundle::build(vec![cell("a", "x", 50.0, 40.0)], vec![]).unwrap();
        let md = String::from_utf8(render_tables(&b, TableFormat::Markdown)).unwrap();
        assert!(!md.contains("Latency"));
        assert!(md.contains("| x | a | 50.0 | 40.0 |"));

        let rows = vec![
            LatencyRow { model: "slow".into(), latency_s: 1.5 },
            LatencyRow { model: "fast".into(), latency_s: 0.25 },
        ];
        let b = ReportBundle::build(vec![cell("a", "x", 50.0, 40.0)], rows).unwrap();
        assert_eq!(b.fastest().unwrap().model, "fast");
        let md = String::from_utf8(render_tables(&b, TableFormat::Markdown)).unwrap();
        assert!(md.contains("| fast | 0.250 |\n| slow | 1.500 |"));
        let csv = String::from_utf8(render_tables(&b, TableFormat::Csv)).unwrap();
        assert!(csv.contains("latency,,fast,,,0.250"));
    }

    #[test]
    fn plot_rows_are_cartesian() {
        let cells: Vec<_> = ["m1", "m2"]
            .iter()
            .flat_map(|m| ["c1", "c2", "c3"].map(|c| cell(m, c, 12.345678, 1.0 / 3.0)))
            .collect();
        let b = ReportBundle::build(cells, vec![]).unwrap();
        let out = String::from_utf8(export_plot_data(&b)).unwrap();
        let lines: Vec<_> = out.lines().collect();
        assert_eq!(lines[0], "model,category,metric,value");
        assert_eq!(lines.len(), 13);
        assert!(out.contains("m1,c1,accuracy,12.345678\n"));
        assert!(out.contains("m1,c1,macro_f1,0.3333333333333333\n"));
    }

    #[test]
    fn rejects_bad_cells() {
        assert!(matches!(
            ReportBundle::build(vec![cell("a", "x", 101.0, 1.0)], vec![]),
            Err(ReportError::OutOfRange { .. })
        ));
        assert!(matches!(
            ReportBundle::build(vec![cell("a", "x", 1.0, 1.0), cell("a", "x", 2.0, 1.0)], vec![]),
            Err(ReportError::DuplicateCell { .. })
        ));
    }

    #[test]
    fn scores_csv_to_percent() {
        let csv = "category,model,n,accuracy,macro_f1\nPerson,m,4,0.75,0.5\nWeather,m,,1,1\n";
        let cells = read_scores_csv(csv.as_bytes()).unwrap();
        assert_eq!(cells[0], cell("m", "Person", 75.0, 50.0));
        assert_eq!(cells[1].accuracy, 100.0);
    }
}
