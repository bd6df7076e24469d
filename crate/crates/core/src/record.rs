//! One row of a results file.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::parsing::MatchTier;

/// Outcome of one (sample, category, model) request.
///
/// Exactly one of `tag` and `error` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sample_id: String,
    pub category: String,
    pub model: String,
    pub raw_text: Option<String>,
    pub tag: Option<String>,
    pub tier: Option<MatchTier>,
    pub shift: usize,
    pub latency_s: f64,
    pub from_cache: bool,
    pub error: Option<String>,
    /// Byte span of the match inside the normalized answer; not persisted.
    #[serde(skip)]
    pub matched_span: Option<(usize, usize)>,
}

impl PredictionRecord {
    pub fn failed(sample_id: &str, category: &str, model: &str, shift: usize, error: String) -> Self {
        Self {
            sample_id: sample_id.to_string(),
            category: category.to_string(),
            model: model.to_string(),
            raw_text: None,
            tag: None,
            tier: None,
            shift,
            latency_s: 0.0,
            from_cache: false,
            error: Some(error),
            matched_span: None,
        }
    }
}

pub fn write_jsonl<W: Write>(mut out: W, records: &[PredictionRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<PredictionRecord>, serde_json::Error> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line.map_err(serde_json::Error::io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_line_has_the_documented_keys() {
        let r = PredictionRecord {
            sample_id: "s01".into(),
            category: "Person".into(),
            model: "m".into(),
            raw_text: Some("Yes.".into()),
            tag: Some("yes".into()),
            tier: Some(MatchTier::Exact),
            shift: 0,
            latency_s: 0.25,
            from_cache: false,
            error: None,
            matched_span: Some((0, 3)),
        };
        let mut buf = Vec::new();
        write_jsonl(&mut buf, std::slice::from_ref(&r)).unwrap();
        let line = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            line,
            "{\"sample_id\":\"s01\",\"category\":\"Person\",\"model\":\"m\",\"raw_text\":\"Yes.\",\
             \"tag\":\"yes\",\"tier\":\"exact\",\"shift\":0,\"latency_s\":0.25,\"from_cache\":false,\"error\":null}\n"
        );
        let back = read_jsonl(&buf[..]).unwrap();
        assert_eq!(back[0].tag, r.tag);
        assert_eq!(back[0].matched_span, None);
    }
}
