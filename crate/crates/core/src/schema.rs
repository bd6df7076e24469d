//! Category taxonomy: the set of classification axes, their tag vocabularies
//! and the question used to prompt for each of them.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::key;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("malformed schema document: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("failed to read schema: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid schema: {}", join_violations(.0))]
    Validation(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Detection,
    Reasoning,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Detection => "detection",
            TaskKind::Reasoning => "reasoning",
        })
    }
}

/// One classification axis with a closed, ordered tag vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Category {
    pub name: String,
    pub task: TaskKind,
    pub tags: Vec<String>,
    /// Alternative surface strings, keyed by the tag they stand for.
    #[serde(default)]
    pub synonyms: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub question: String,
    #[serde(default)]
    pub fallback_tag: Option<String>,
}

impl Category {
    pub fn tag_index(&self, tag: &str) -> Option<usize> {
        let k = key(tag);
        self.tags.iter().position(|t| key(t) == k)
    }

    /// Returns the canonical spelling of `tag` if it belongs to the vocabulary.
    pub fn canonical_tag(&self, tag: &str) -> Option<&str> {
        self.tag_index(tag).map(|i| self.tags[i].as_str())
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.tag_index(tag).is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategorySchema {
    pub schema_version: String,
    pub categories: Vec<Category>,
}

impl CategorySchema {
    /// Looks up a category by name, ignoring case and whitespace differences.
    pub fn category(&self, name: &str) -> Option<&Category> {
        let k = key(name);
        self.categories.iter().find(|c| key(&c.name) == k)
    }

    pub fn category_index(&self, name: &str) -> Option<usize> {
        let k = key(name);
        self.categories.iter().position(|c| key(&c.name) == k)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    EmptySchema,
    EmptyName,
    DuplicateName,
    TooFewTags,
    EmptyTag,
    DuplicateTag,
    OrphanSynonym,
    EmptySynonym,
    SynonymShadowsTag,
    DuplicateSynonym,
    FallbackNotInTags,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::EmptySchema => "schema has no categories",
            Rule::EmptyName => "category name is empty",
            Rule::DuplicateName => "duplicate category name",
            Rule::TooFewTags => "vocabulary needs at least two tags",
            Rule::EmptyTag => "empty tag",
            Rule::DuplicateTag => "duplicate tag",
            Rule::OrphanSynonym => "synonym refers to a tag outside the vocabulary",
            Rule::EmptySynonym => "empty synonym",
            Rule::SynonymShadowsTag => "synonym equals another tag",
            Rule::DuplicateSynonym => "synonym listed more than once",
            Rule::FallbackNotInTags => "fallback tag is not in the vocabulary",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub category: Option<String>,
    pub rule: Rule,
    pub value: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.category {
            Some(c) => write!(f, "category {c:?}: {} ({:?})", self.rule, self.value),
            None => write!(f, "{} ({:?})", self.rule, self.value),
        }
    }
}

/// Parses and validates a JSON schema document.
pub fn load_schema<R: Read>(source: R) -> Result<CategorySchema, SchemaError> {
    let schema: CategorySchema = serde_json::from_reader(source)?;
    let violations = validate_schema(&schema);
    if violations.is_empty() {
        Ok(schema)
    } else {
        Err(SchemaError::Validation(violations))
    }
}

pub fn validate_schema(schema: &CategorySchema) -> Vec<Violation> {
    let mut out = Vec::new();
    if schema.categories.is_empty() {
        out.push(Violation {
            category: None,
            rule: Rule::EmptySchema,
            value: String::new(),
        });
    }
    let mut names = HashSet::new();
    for cat in &schema.categories {
        let cname = Some(cat.name.clone());
        let mut push = |rule, value: &str| {
            out.push(Violation {
                category: cname.clone(),
                rule,
                value: value.to_string(),
            })
        };
        if key(&cat.name).is_empty() {
            push(Rule::EmptyName, &cat.name);
        } else if !names.insert(key(&cat.name)) {
            push(Rule::DuplicateName, &cat.name);
        }
        if cat.tags.len() < 2 {
            push(Rule::TooFewTags, &cat.tags.len().to_string());
        }
        let mut tag_keys: HashMap<String, &str> = HashMap::new();
        for tag in &cat.tags {
            let k = key(tag);
            if k.is_empty() {
                push(Rule::EmptyTag, tag);
            } else if tag_keys.insert(k, tag).is_some() {
                push(Rule::DuplicateTag, tag);
            }
        }
        let mut seen_synonyms = HashSet::new();
        for (target, alts) in &cat.synonyms {
            let target_key = key(target);
            if !tag_keys.contains_key(&target_key) {
                push(Rule::OrphanSynonym, target);
            }
            for alt in alts {
                let k = key(alt);
                if k.is_empty() {
                    push(Rule::EmptySynonym, alt);
                } else if tag_keys.contains_key(&k) && k != target_key {
                    push(Rule::SynonymShadowsTag, alt);
                } else if !seen_synonyms.insert(k) {
                    push(Rule::DuplicateSynonym, alt);
                }
            }
        }
        if let Some(fb) = &cat.fallback_tag {
            if !tag_keys.contains_key(&key(fb)) {
                push(Rule::FallbackNotInTags, fb);
            }
        }
    }
    out
}

/// The built-in 16-category traffic-scene taxonomy.
///
/// Question texts are this crate's own wording; the tag list is inserted by
/// the prompt template.
pub fn builtin_schema() -> CategorySchema {
    use TaskKind::*;
    let cats = vec![
        cat(Detection, "Person", &["yes", "no"],
            "Is there at least one person visible in the image?", &[]),
        cat(Detection, "Traffic sign for ego-vehicle", &["yes", "no"],
            "Is there a traffic sign that applies to the vehicle from which the image was taken?", &[]),
        cat(Detection, "Traffic light for ego-vehicle", &["yes", "no"],
            "Is there a traffic light that applies to the vehicle from which the image was taken?", &[]),
        cat(Detection, "Number of vulnerable road users", &["none", "few", "several", "many"],
            "How many vulnerable road users, such as pedestrians and cyclists, are in the scene?",
            &[("none", &["zero", "no vulnerable road users"])]),
        cat(Detection, "Lane marks", &["normal lane marks", "crosswalk", "bus lane", "no lane marks"],
            "Which kind of lane marking is most prominent on the road ahead?",
            &[("crosswalk", &["zebra crossing", "pedestrian crossing"])]),
        cat(Reasoning, "Vision impairing brightness (VIB)", &["yes", "no"],
            "Is the camera view impaired by glare or excessive brightness?", &[]),
        cat(Reasoning, "Weather", &["rainy", "snowy", "clear", "overcast", "partly cloudy", "foggy", "undefined"],
            "What is the weather in this scene?",
            &[("clear", &["sunny"]), ("overcast", &["cloudy"]), ("rainy", &["raining"]), ("snowy", &["snowing"])]),
        cat(Reasoning, "Time of day", &["twilight", "daytime", "nighttime", "undefined"],
            "At what time of day was this image taken?",
            &[("daytime", &["day"]), ("nighttime", &["night"]), ("twilight", &["dusk", "dawn"])]),
        cat(Reasoning, "Land use", &["urban area", "rural area", "suburban area", "industrial area", "nature"],
            "What kind of area is the vehicle driving through?", &[]),
        cat(Reasoning, "Environment", &["tunnel", "residential area", "parking lot", "city street", "gas station", "highway", "undefined"],
            "What kind of driving environment is shown?",
            &[("highway", &["motorway", "freeway"])]),
        cat(Reasoning, "Road condition", &["dry road", "wet road", "snowy road", "icy road", "muddy road"],
            "What is the condition of the road surface?",
            &[("dry road", &["dry"]), ("wet road", &["wet"]), ("icy road", &["icy"]), ("muddy road", &["muddy"])]),
        cat(Reasoning, "Street configuration", &["one-way street", "two-way street"],
            "Is the vehicle driving on a one-way or a two-way street?", &[]),
        cat(Reasoning, "Number of lanes", &["0", "1", "2", "3", "4", "5", "6"],
            "How many lanes does the road in the direction of travel have?",
            &[("0", &["zero"]), ("1", &["one"]), ("2", &["two"]), ("3", &["three"]),
              ("4", &["four"]), ("5", &["five"]), ("6", &["six"])]),
        cat(Reasoning, "Traffic scene", &["free-flowing traffic", "congested traffic", "traffic accident", "construction zone"],
            "Which description best fits the traffic situation?",
            &[("congested traffic", &["traffic jam"])]),
        cat(Reasoning, "Road intersection", &["yes", "no"],
            "Is the vehicle at or approaching a road intersection?", &[]),
        cat(Reasoning, "Vehicle manoeuvre", &["moving forward", "stopped", "turning", "lane changing", "parking"],
            "What manoeuvre is the vehicle from which the image was taken performing?",
            &[("moving forward", &["driving forward", "driving straight"]), ("lane changing", &["changing lanes"])]),
    ];
    CategorySchema {
        schema_version: "1.0".to_string(),
        categories: cats,
    }
}

fn cat(
    task: TaskKind,
    name: &str,
    tags: &[&str],
    question: &str,
    synonyms: &[(&str, &[&str])],
) -> Category {
    let tags: Vec<String> = tags.iter().map(|t| t.to_string()).collect();
    let fallback_tag = tags.iter().find(|t| *t == "undefined").cloned();
    Category {
        name: name.to_string(),
        task,
        tags,
        synonyms: synonyms
            .iter()
            .map(|(t, alts)| (t.to_string(), alts.iter().map(|a| a.to_string()).collect()))
            .collect(),
        question: question.to_string(),
        fallback_tag,
    }
}
