use std::fs;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use super::{BackendError, Decoding, Endpoint, InferenceRequest, RequestContext, ResponseCache};
use crate::dataset::{image_mime, resize_image, SampleRecord};
use crate::parsing::match_tag;
use crate::prompting::{render_prompt, PromptError, PromptTemplate};
use crate::record::PredictionRecord;
use crate::schema::CategorySchema;

pub const BENCH_PROMPT: &str = "Tell me about the image.";
pub const BENCH_MAX_OUTPUT_TOKENS: u32 = 10;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error(transparent)]
    Template(#[from] PromptError),
    #[error("job refers to sample {sample} / category {category}, which do not exist")]
    InvalidJob { sample: usize, category: usize },
    #[error("n_runs must be at least 1")]
    NoRuns,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Image(#[from] crate::dataset::ImageError),
}

#[derive(Debug, Clone, Default)]
pub struct CampaignOptions {
    pub template: PromptTemplate,
    pub strict: bool,
    pub resize_long_side: Option<u32>,
}

/// One request: a sample (index into the sample list), a category (index
/// into the schema) and a rotation of its tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Job {
    pub sample: usize,
    pub category: usize,
    pub shift: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyStats {
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

struct LoadedImage {
    bytes: Arc<Vec<u8>>,
    mime: &'static str,
}

enum Slot {
    Pending,
    Ready(Arc<LoadedImage>),
    Failed(String),
}

/// Lazily loaded images, released once every job of a sample has finished.
struct ImageSlots<'a> {
    samples: &'a [SampleRecord],
    resize: Option<u32>,
    slots: Vec<Mutex<Slot>>,
    remaining: Vec<AtomicUsize>,
}

impl<'a> ImageSlots<'a> {
    fn new(samples: &'a [SampleRecord], jobs: &[Job], resize: Option<u32>) -> Self {
        let remaining: Vec<AtomicUsize> = samples.iter().map(|_| AtomicUsize::new(0)).collect();
        for j in jobs {
            remaining[j.sample].fetch_add(1, Ordering::Relaxed);
        }
        Self {
            samples,
            resize,
            slots: samples.iter().map(|_| Mutex::new(Slot::Pending)).collect(),
            remaining,
        }
    }

    fn load(&self, i: usize) -> Result<Arc<LoadedImage>, String> {
        let mut slot = self.slots[i].lock().unwrap();
        match &*slot {
            Slot::Ready(img) => return Ok(img.clone()),
            Slot::Failed(e) => return Err(e.clone()),
            Slot::Pending => {}
        }
        let path = &self.samples[i].image_path;
        let loaded = fs::read(path)
            .map_err(|e| format!("cannot read image {}: {e}", path.display()))
            .and_then(|bytes| match self.resize {
                Some(side) => resize_image(&bytes, side).map_err(|e| e.to_string()),
                None => Ok(bytes),
            })
            .and_then(|bytes| {
                let mime = image_mime(&bytes).map_err(|e| format!("{}: {e}", path.display()))?;
                Ok(Arc::new(LoadedImage { bytes: Arc::new(bytes), mime }))
            });
        *slot = match &loaded {
            Ok(img) => Slot::Ready(img.clone()),
            Err(e) => Slot::Failed(e.clone()),
        };
        loaded
    }

    fn finished(&self, i: usize) {
        if self.remaining[i].fetch_sub(1, Ordering::AcqRel) == 1 {
            *self.slots[i].lock().unwrap() = Slot::Pending;
        }
    }
}

/// Runs every category of `schema` against every sample at one rotation.
///
/// Output is ordered by sample id and then schema category order, whatever
/// order the requests complete in.
pub fn run_campaign(
    endpoint: &Endpoint,
    samples: &[SampleRecord],
    schema: &CategorySchema,
    options: &CampaignOptions,
    shift: usize,
    cache: &ResponseCache,
) -> Result<Vec<PredictionRecord>, CampaignError> {
    let jobs = (0..samples.len())
        .flat_map(|sample| (0..schema.categories.len()).map(move |category| Job { sample, category, shift }))
        .collect();
    run_jobs(endpoint, samples, schema, options, jobs, cache)
}

/// Dispatches arbitrary jobs with at most `max_in_flight` requests
/// outstanding. Per-request failures become error records.
pub fn run_jobs(
    endpoint: &Endpoint,
    samples: &[SampleRecord],
    schema: &CategorySchema,
    options: &CampaignOptions,
    mut jobs: Vec<Job>,
    cache: &ResponseCache,
) -> Result<Vec<PredictionRecord>, CampaignError> {
    options.template.validate()?;
    for j in &jobs {
        if j.sample >= samples.len() || j.category >= schema.categories.len() {
            return Err(CampaignError::InvalidJob { sample: j.sample, category: j.category });
        }
    }
    jobs.sort_by(|a, b| {
        let key = |j: &Job| (&samples[j.sample].sample_id, j.category, j.shift % schema.categories[j.category].tags.len());
        key(a).cmp(&key(b))
    });

    let images = ImageSlots::new(samples, &jobs, options.resize_long_side);
    let results: Vec<Mutex<Option<PredictionRecord>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = endpoint.config.max_in_flight.min(jobs.len()).max(1);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let record = run_one(endpoint, samples, schema, options, &images, job, cache);
                images.finished(job.sample);
                *results[i].lock().unwrap() = Some(record);
            });
        }
    });

    Ok(results
        .into_iter()
        .map(|r| r.into_inner().unwrap().expect("every job produces a record"))
        .collect())
}

fn run_one(
    endpoint: &Endpoint,
    samples: &[SampleRecord],
    schema: &CategorySchema,
    options: &CampaignOptions,
    images: &ImageSlots<'_>,
    job: &Job,
    cache: &ResponseCache,
) -> PredictionRecord {
    let sample = &samples[job.sample];
    let category = &schema.categories[job.category];
    let model = endpoint.config.name.as_str();
    let shift = job.shift % category.tags.len();
    let fail = |e: String| PredictionRecord::failed(&sample.sample_id, &category.name, model, shift, e);

    let image = match images.load(job.sample) {
        Ok(img) => img,
        Err(e) => return fail(e),
    };
    let prompt = match render_prompt(category, &options.template, shift) {
        Ok(p) => p,
        Err(e) => return fail(e.to_string()),
    };
    let request = InferenceRequest {
        prompt_text: prompt.text,
        image_bytes: image.bytes.clone(),
        image_mime: image.mime,
        decoding: endpoint.decoding(),
    };
    let ctx = RequestContext {
        sample_id: Some(&sample.sample_id),
        category: Some(category),
        tag_order: &prompt.tag_order,
    };
    let response = match endpoint.classify_image(&request, &ctx, cache) {
        Ok(r) => r,
        Err(e) => return fail(e.to_string()),
    };
    let mut record = PredictionRecord {
        sample_id: sample.sample_id.clone(),
        category: category.name.clone(),
        model: model.to_string(),
        raw_text: Some(response.text.clone()),
        tag: None,
        tier: None,
        shift,
        latency_s: response.latency,
        from_cache: response.from_cache,
        error: None,
        matched_span: None,
    };
    match match_tag(&response.text, category, options.strict) {
        Ok(p) => {
            record.tag = Some(p.tag);
            record.tier = Some(p.tier);
            record.matched_span = p.matched_span;
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    record
}

/// Times `n_runs` sequential uncached requests with a fixed descriptive
/// prompt and a 10-token output cap.
pub fn bench_latency(endpoint: &Endpoint, image: &[u8], n_runs: usize) -> Result<LatencyStats, CampaignError> {
    if n_runs == 0 {
        return Err(CampaignError::NoRuns);
    }
    let request = InferenceRequest {
        prompt_text: BENCH_PROMPT.to_string(),
        image_bytes: Arc::new(image.to_vec()),
        image_mime: image_mime(image)?,
        decoding: Decoding {
            max_output_tokens: BENCH_MAX_OUTPUT_TOKENS,
            temperature: endpoint.config.temperature,
        },
    };
    let cache = ResponseCache::Disabled;
    let mut times = Vec::with_capacity(n_runs);
    for _ in 0..n_runs {
        let started = Instant::now();
        endpoint.classify_image(&request, &RequestContext::default(), &cache)?;
        times.push(started.elapsed().as_secs_f64());
    }
    Ok(latency_stats(&mut times))
}

fn latency_stats(times: &mut [f64]) -> LatencyStats {
    times.sort_by(f64::total_cmp);
    let n = times.len();
    let median = if n % 2 == 1 {
        times[n / 2]
    } else {
        (times[n / 2 - 1] + times[n / 2]) / 2.0
    };
    LatencyStats {
        mean: times.iter().sum::<f64>() / n as f64,
        median,
        min: times[0],
        max: times[n - 1],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats() {
        let s = latency_stats(&mut [0.4, 0.1, 0.3, 0.2]);
        assert_eq!((s.min, s.max), (0.1, 0.4));
        assert!((s.mean - 0.25).abs() < 1e-12);
        assert!((s.median - 0.25).abs() < 1e-12);
        assert_eq!(latency_stats(&mut [0.5, 0.1, 0.2]).median, 0.2);
    }
}
