//! Case folding and whitespace normalization shared by the schema validator
//! and the answer parser.

/// Case-folds `s` by mapping through upper case and then lower case.
///
/// The round trip makes the fold idempotent under `to_uppercase`, so
/// `fold(s) == fold(&s.to_uppercase())` for every string.
pub fn fold(s: &str) -> String {
    s.to_uppercase().to_lowercase()
}

/// Collapses runs of whitespace into single spaces and trims both ends.
pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Comparison key for tags, synonyms and category names.
pub fn key(s: &str) -> String {
    collapse_whitespace(&fold(s))
}
