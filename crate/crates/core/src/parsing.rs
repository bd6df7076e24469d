//! Maps a model's free-text answer onto exactly one tag of a category.
//!
//! Matching runs through four tiers in priority order on the normalized
//! answer: exact tag, exact synonym, word-bounded substring (tags first,
//! then synonyms) and finally the category's fallback tag in lenient mode.
//!
//! Among substring hits, a hit lying inside a strictly longer hit is
//! discarded, so a multi-word tag beats its own sub-phrases. The earliest
//! remaining hit wins; equal starts prefer the longer string, then the
//! vocabulary order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::PredictionRecord;
use crate::schema::{Category, CategorySchema};
use crate::text::{collapse_whitespace, fold, key};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchTier {
    Exact,
    Synonym,
    Substring,
    Fallback,
}

impl MatchTier {
    pub fn as_str(self) -> &'static str {
        match self {
            MatchTier::Exact => "exact",
            MatchTier::Synonym => "synonym",
            MatchTier::Substring => "substring",
            MatchTier::Fallback => "fallback",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedAnswer {
    pub tag: String,
    pub tier: MatchTier,
    pub matched_span: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("answer {raw:?} matches no tag of category {category:?}")]
pub struct ParseError {
    pub raw: String,
    pub category: String,
    pub sample_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown category {0:?}")]
pub struct UnknownCategory(pub String);

fn is_trim_char(c: char) -> bool {
    c.is_whitespace() || matches!(c, '"' | '\'' | '`' | '.' | '\u{201c}' | '\u{201d}' | '\u{2018}' | '\u{2019}')
}

pub fn normalize_text(raw: &str) -> String {
    let mut s = collapse_whitespace(&fold(raw));
    loop {
        let trimmed = s.trim_matches(is_trim_char);
        let stripped = trimmed.strip_prefix("answer:").unwrap_or(trimmed);
        if stripped.len() == s.len() {
            return s;
        }
        s = stripped.to_string();
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// All word-bounded occurrences of `needle` in `hay`, as byte spans.
fn bounded_occurrences(hay: &str, needle: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    if needle.is_empty() {
        return out;
    }
    let mut from = 0;
    while let Some(pos) = hay[from..].find(needle) {
        let start = from + pos;
        let end = start + needle.len();
        let before_ok = hay[..start].chars().next_back().is_none_or(|c| !is_word_char(c));
        let after_ok = hay[end..].chars().next().is_none_or(|c| !is_word_char(c));
        if before_ok && after_ok {
            out.push((start, end));
        }
        from = start + hay[start..].chars().next().map_or(1, char::len_utf8);
    }
    out
}

struct Hit {
    span: (usize, usize),
    rank: usize,
    tag_index: usize,
}

fn best_hit(text: &str, candidates: &[(String, usize)]) -> Option<Hit> {
    let hits: Vec<Hit> = candidates
        .iter()
        .enumerate()
        .flat_map(|(rank, (needle, tag_index))| {
            bounded_occurrences(text, needle)
                .into_iter()
                .map(move |span| Hit { span, rank, tag_index: *tag_index })
        })
        .collect();
    let len = |h: &Hit| h.span.1 - h.span.0;
    hits.iter()
        .filter(|h| {
            !hits.iter().any(|o| {
                o.span.0 <= h.span.0 && h.span.1 <= o.span.1 && len(o) > len(h)
            })
        })
        .min_by_key(|h| (h.span.0, std::cmp::Reverse(len(h)), h.rank))
        .map(|h| Hit { span: h.span, rank: h.rank, tag_index: h.tag_index })
}

fn synonym_candidates(category: &Category) -> Vec<(String, usize)> {
    let mut out = Vec::new();
    for (i, tag) in category.tags.iter().enumerate() {
        let tk = key(tag);
        for (target, alts) in &category.synonyms {
            if key(target) == tk {
                out.extend(alts.iter().map(|a| (key(a), i)));
            }
        }
    }
    out
}

pub fn match_tag(raw: &str, category: &Category, strict: bool) -> Result<ParsedAnswer, ParseError> {
    let text = normalize_text(raw);
    let tags: Vec<(String, usize)> = category.tags.iter().enumerate().map(|(i, t)| (key(t), i)).collect();
    let synonyms = synonym_candidates(category);
    let found = |tier, i: usize, span| ParsedAnswer {
        tag: category.tags[i].clone(),
        tier,
        matched_span: Some(span),
    };

    if let Some((_, i)) = tags.iter().find(|(k, _)| *k == text) {
        return Ok(found(MatchTier::Exact, *i, (0, text.len())));
    }
    if let Some((_, i)) = synonyms.iter().find(|(k, _)| *k == text) {
        return Ok(found(MatchTier::Synonym, *i, (0, text.len())));
    }
    for pool in [&tags, &synonyms] {
        if let Some(hit) = best_hit(&text, pool) {
            return Ok(found(MatchTier::Substring, hit.tag_index, hit.span));
        }
    }
    match (&category.fallback_tag, strict) {
        (Some(fb), false) => Ok(ParsedAnswer {
            tag: category.canonical_tag(fb).unwrap_or(fb).to_string(),
            tier: MatchTier::Fallback,
            matched_span: None,
        }),
        _ => Err(ParseError {
            raw: raw.to_string(),
            category: category.name.clone(),
            sample_id: None,
        }),
    }
}

#[derive(Debug, Clone)]
pub struct RawAnswer {
    pub sample_id: String,
    pub category: String,
    pub raw: String,
}

/// Parses a batch of answers, collecting per-row failures instead of
/// stopping at the first one.
pub fn parse_batch(
    rows: &[RawAnswer],
    schema: &CategorySchema,
    model: &str,
    strict: bool,
) -> Result<(Vec<PredictionRecord>, Vec<ParseError>), UnknownCategory> {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for row in rows {
        let category = schema
            .category(&row.category)
            .ok_or_else(|| UnknownCategory(row.category.clone()))?;
        match match_tag(&row.raw, category, strict) {
            Ok(p) => records.push(PredictionRecord {
                sample_id: row.sample_id.clone(),
                category: category.name.clone(),
                model: model.to_string(),
                raw_text: Some(row.raw.clone()),
                tag: Some(p.tag),
                tier: Some(p.tier),
                shift: 0,
                latency_s: 0.0,
                from_cache: false,
                error: None,
                matched_span: p.matched_span,
            }),
            Err(mut e) => {
                e.sample_id = Some(row.sample_id.clone());
                errors.push(e);
            }
        }
    }
    Ok((records, errors))
}
