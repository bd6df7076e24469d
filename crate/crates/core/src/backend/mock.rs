//! Deterministic offline backends selected with `mock:` URLs.
//!
//! | spec                  | answer                                          |
//! |-----------------------|-------------------------------------------------|
//! | `mock:oracle`         | the sample's ground-truth tag                   |
//! | `mock:constant=<tag>` | `<tag>`                                         |
//! | `mock:firsttag`       | the first tag in the rendered order             |
//! | `mock:delay=<ms>`     | a fixed sentence after sleeping `<ms>`          |
//! | `mock:gibberish`      | text that matches no tag                        |
//! | `mock:fail=<status>`  | always fails with HTTP `<status>`               |

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use super::{BackendError, CallError, InferenceRequest, RequestContext, VisionBackend};
use crate::dataset::Manifest;

#[derive(Debug, Clone, PartialEq)]
pub enum MockBehavior {
    /// Ground truth keyed by (sample id, category name).
    Oracle(HashMap<(String, String), String>),
    Constant(String),
    FirstTag,
    Delay(Duration),
    Gibberish,
    Fail(u16),
}

#[derive(Debug)]
pub struct MockBackend {
    behavior: MockBehavior,
    calls: AtomicUsize,
}

impl MockBackend {
    pub fn new(behavior: MockBehavior) -> Self {
        Self { behavior, calls: AtomicUsize::new(0) }
    }

    pub fn from_spec(spec: &str, manifest: Option<&Manifest>) -> Result<Self, BackendError> {
        let bad = || BackendError::InvalidConfig(format!("unknown mock backend {spec:?}"));
        let rest = spec.strip_prefix("mock:").ok_or_else(bad)?;
        let (kind, arg) = match rest.split_once('=') {
            Some((k, a)) => (k, Some(a)),
            None => (rest, None),
        };
        let behavior = match (kind, arg) {
            ("oracle", None) => {
                let manifest = manifest.ok_or_else(|| {
                    BackendError::InvalidConfig("mock:oracle needs a manifest".into())
                })?;
                MockBehavior::Oracle(
                    manifest
                        .samples
                        .iter()
                        .flat_map(|s| {
                            s.labels
                                .iter()
                                .map(|(c, t)| ((s.sample_id.clone(), c.clone()), t.clone()))
                        })
                        .collect(),
                )
            }
            ("constant", Some(tag)) => MockBehavior::Constant(tag.to_string()),
            ("firsttag", None) => MockBehavior::FirstTag,
            ("gibberish", None) => MockBehavior::Gibberish,
            ("delay", Some(ms)) => {
                let ms: u64 = ms.trim_end_matches("ms").parse().map_err(|_| bad())?;
                MockBehavior::Delay(Duration::from_millis(ms))
            }
            ("fail", Some(code)) => MockBehavior::Fail(code.parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        };
        Ok(Self::new(behavior))
    }

    /// Number of requests answered or failed so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl VisionBackend for MockBackend {
    fn complete(&self, _: &InferenceRequest, ctx: &RequestContext<'_>) -> Result<String, CallError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        match &self.behavior {
            MockBehavior::Oracle(truth) => {
                let label = ctx
                    .sample_id
                    .zip(ctx.category)
                    .and_then(|(s, c)| truth.get(&(s.to_string(), c.name.clone())));
                Ok(label.cloned().unwrap_or_else(|| "I cannot tell.".to_string()))
            }
            MockBehavior::Constant(tag) => Ok(tag.clone()),
            MockBehavior::FirstTag => ctx
                .tag_order
                .first()
                .cloned()
                .ok_or_else(|| CallError::Malformed("no tags were rendered".into())),
            MockBehavior::Delay(d) => {
                std::thread::sleep(*d);
                Ok("A street scene seen from a vehicle.".to_string())
            }
            MockBehavior::Gibberish => Ok("blorp zzgl qwix".to_string()),
            MockBehavior::Fail(status) => Err(CallError::Status { status: *status, body: "mock failure".into() }),
        }
    }
}
