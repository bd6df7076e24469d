//! C interface to the scenetag schema, answer parser, prompt renderer and
//! metrics.
//!
//! Every fallible function returns a [`ScenetagStatus`]. On failure a
//! description is available from [`scenetag_last_error`] on the same thread.
//! Strings handed out by this library must be released with
//! [`scenetag_string_free`]; schema handles with [`scenetag_schema_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use scenetag::metrics::{accuracy, macro_f1, ConfusionMatrix};
use scenetag::parsing::{match_tag, MatchTier};
use scenetag::prompting::{render_prompt, PromptTemplate};
use scenetag::schema::{load_schema, CategorySchema, SchemaError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenetagStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidSchema = 3,
    UnknownCategory = 4,
    /// The answer matched no tag and no fallback applied.
    NoMatch = 5,
    InvalidInput = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenetagMatchTier {
    Exact = 0,
    Synonym = 1,
    Substring = 2,
    Fallback = 3,
}

impl From<MatchTier> for ScenetagMatchTier {
    fn from(t: MatchTier) -> Self {
        match t {
            MatchTier::Exact => ScenetagMatchTier::Exact,
            MatchTier::Synonym => ScenetagMatchTier::Synonym,
            MatchTier::Substring => ScenetagMatchTier::Substring,
            MatchTier::Fallback => ScenetagMatchTier::Fallback,
        }
    }
}

/// Opaque handle to a validated category schema.
pub struct ScenetagSchema {
    inner: CategorySchema,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

type Failure = (ScenetagStatus, String);

fn guarded(f: impl FnOnce() -> Result<(), Failure>) -> ScenetagStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ScenetagStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            ScenetagStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err((ScenetagStatus::NullArgument, format!("{name} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (ScenetagStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn schema_arg<'a>(p: *const ScenetagSchema) -> Result<&'a CategorySchema, Failure> {
    p.as_ref()
        .map(|s| &s.inner)
        .ok_or_else(|| (ScenetagStatus::NullArgument, "schema is NULL".to_string()))
}

fn out_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| (ScenetagStatus::InvalidInput, "result contains a NUL byte".to_string()))
}

/// Message for the most recent failure on this thread, or an empty string.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn scenetag_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn scenetag_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// The built-in 16-category schema. Never NULL.
#[no_mangle]
pub extern "C" fn scenetag_schema_builtin() -> *mut ScenetagSchema {
    Box::into_raw(Box::new(ScenetagSchema { inner: scenetag::builtin_schema() }))
}

/// Parses and validates a JSON schema document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn scenetag_schema_from_json(json: *const c_char, out: *mut *mut ScenetagSchema) -> ScenetagStatus {
    guarded(|| {
        if out.is_null() {
            return Err((ScenetagStatus::NullArgument, "out is NULL".into()));
        }
        *out = ptr::null_mut();
        let text = str_arg(json, "json")?;
        let schema = load_schema(text.as_bytes()).map_err(|e| {
            let msg = match &e {
                SchemaError::Validation(v) => v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; "),
                other => other.to_string(),
            };
            (ScenetagStatus::InvalidSchema, msg)
        })?;
        *out = Box::into_raw(Box::new(ScenetagSchema { inner: schema }));
        Ok(())
    })
}

/// # Safety
/// `schema` must be NULL or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn scenetag_schema_free(schema: *mut ScenetagSchema) {
    if !schema.is_null() {
        drop(Box::from_raw(schema));
    }
}

/// Number of categories, or 0 for a NULL handle.
///
/// # Safety
/// `schema` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn scenetag_schema_category_count(schema: *const ScenetagSchema) -> usize {
    schema.as_ref().map_or(0, |s| s.inner.categories.len())
}

/// Maps a free-text answer onto one tag of `category`. On success `*out_tag`
/// receives a newly allocated string and `*out_tier` the matching tier
/// (`out_tier` may be NULL).
///
/// # Safety
/// String arguments must be NUL-terminated; `out_tag` must be writable.
#[no_mangle]
pub unsafe extern "C" fn scenetag_match_tag(
    schema: *const ScenetagSchema,
    category: *const c_char,
    raw: *const c_char,
    strict: bool,
    out_tag: *mut *mut c_char,
    out_tier: *mut ScenetagMatchTier,
) -> ScenetagStatus {
    guarded(|| {
        if out_tag.is_null() {
            return Err((ScenetagStatus::NullArgument, "out_tag is NULL".into()));
        }
        *out_tag = ptr::null_mut();
        let schema = schema_arg(schema)?;
        let name = str_arg(category, "category")?;
        let raw = str_arg(raw, "raw")?;
        let cat = schema
            .category(name)
            .ok_or_else(|| (ScenetagStatus::UnknownCategory, format!("unknown category {name:?}")))?;
        let parsed = match_tag(raw, cat, strict).map_err(|e| (ScenetagStatus::NoMatch, e.to_string()))?;
        *out_tag = out_string(parsed.tag)?;
        if !out_tier.is_null() {
            *out_tier = parsed.tier.into();
        }
        Ok(())
    })
}

/// Renders the default prompt for `category` with its tag list rotated left
/// by `shift`.
///
/// # Safety
/// String arguments must be NUL-terminated; `out_text` must be writable.
#[no_mangle]
pub unsafe extern "C" fn scenetag_render_prompt(
    schema: *const ScenetagSchema,
    category: *const c_char,
    shift: usize,
    out_text: *mut *mut c_char,
) -> ScenetagStatus {
    guarded(|| {
        if out_text.is_null() {
            return Err((ScenetagStatus::NullArgument, "out_text is NULL".into()));
        }
        *out_text = ptr::null_mut();
        let schema = schema_arg(schema)?;
        let name = str_arg(category, "category")?;
        let cat = schema
            .category(name)
            .ok_or_else(|| (ScenetagStatus::UnknownCategory, format!("unknown category {name:?}")))?;
        let prompt = render_prompt(cat, &PromptTemplate::default(), shift)
            .map_err(|e| (ScenetagStatus::InvalidInput, e.to_string()))?;
        *out_text = out_string(prompt.text)?;
        Ok(())
    })
}

/// Accuracy and full-vocabulary macro-F1 of `n` predictions. A NULL entry in
/// `pred` is an unparsed answer and counts as a miss.
///
/// # Safety
/// `truth` and `pred` must point to `n` entries and `vocabulary` to
/// `n_vocabulary` NUL-terminated strings; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn scenetag_scores(
    truth: *const *const c_char,
    pred: *const *const c_char,
    n: usize,
    vocabulary: *const *const c_char,
    n_vocabulary: usize,
    out_accuracy: *mut f64,
    out_macro_f1: *mut f64,
) -> ScenetagStatus {
    guarded(|| {
        if truth.is_null() || pred.is_null() || vocabulary.is_null() || out_accuracy.is_null() || out_macro_f1.is_null() {
            return Err((ScenetagStatus::NullArgument, "NULL array or output pointer".into()));
        }
        let vocab = (0..n_vocabulary)
            .map(|i| str_arg(*vocabulary.add(i), "vocabulary entry").map(str::to_string))
            .collect::<Result<Vec<_>, _>>()?;
        let index = |s: &str| {
            vocab
                .iter()
                .position(|v| v == s)
                .ok_or_else(|| (ScenetagStatus::InvalidInput, format!("tag {s:?} is not in the vocabulary")))
        };
        let mut cm = ConfusionMatrix::empty(&vocab);
        for k in 0..n {
            let i = index(str_arg(*truth.add(k), "truth entry")?)?;
            let p = *pred.add(k);
            if p.is_null() {
                cm.unparsed[i] += 1;
            } else {
                cm.counts[i][index(str_arg(p, "pred entry")?)?] += 1;
            }
        }
        let invalid = |e: scenetag::metrics::MetricsError| (ScenetagStatus::InvalidInput, e.to_string());
        *out_accuracy = accuracy(&cm).map_err(invalid)?;
        *out_macro_f1 = macro_f1(&cm).map_err(invalid)?;
        Ok(())
    })
}
