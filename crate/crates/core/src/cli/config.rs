//! Run configuration: a JSON document overridable by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CliError, CommonArgs};
use crate::backend::BackendConfig;
use crate::prompting::PromptTemplate;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Shifts {
    #[default]
    None,
    All,
    Explicit(Vec<usize>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ShiftsRepr {
    Word(String),
    List(Vec<usize>),
}

impl Serialize for Shifts {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Shifts::None => ShiftsRepr::Word("none".into()),
            Shifts::All => ShiftsRepr::Word("all".into()),
            Shifts::Explicit(v) => ShiftsRepr::List(v.clone()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Shifts {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match ShiftsRepr::deserialize(d)? {
            ShiftsRepr::Word(w) => w.parse().map_err(serde::de::Error::custom),
            ShiftsRepr::List(v) => Ok(Shifts::Explicit(v)),
        }
    }
}

impl std::str::FromStr for Shifts {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "none" => Ok(Shifts::None),
            "all" => Ok(Shifts::All),
            list => list
                .split(',')
                .map(|k| k.trim().parse::<usize>().map_err(|_| format!("bad shift {k:?}")))
                .collect::<Result<Vec<_>, _>>()
                .map(Shifts::Explicit),
        }
    }
}

/// On-disk shape of the `--config` document. Relative paths are resolved
/// against the document's directory.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfigFile {
    pub schema: Option<String>,
    pub manifest: Option<PathBuf>,
    pub backends: Vec<BackendConfig>,
    pub template: Option<PromptTemplate>,
    pub strict: Option<bool>,
    pub shifts: Option<Shifts>,
    pub cache_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub resize_long_side: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SchemaSource {
    Builtin,
    File(PathBuf),
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub schema: SchemaSource,
    pub manifest_path: Option<PathBuf>,
    pub backends: Vec<BackendConfig>,
    pub template: PromptTemplate,
    pub strict: bool,
    pub shifts: Shifts,
    pub cache_dir: PathBuf,
    pub output_dir: PathBuf,
    pub resize_long_side: Option<u32>,
}

fn schema_source(s: &str, base: &Path) -> SchemaSource {
    if s == "builtin" {
        SchemaSource::Builtin
    } else {
        SchemaSource::File(base.join(s))
    }
}

/// Parses a `--backend` value: a `mock:` spec or `<model_id>@<base_url>`.
pub fn parse_backend_flag(spec: &str) -> Result<BackendConfig, CliError> {
    if spec.starts_with("mock:") {
        return Ok(BackendConfig::mock(spec));
    }
    let (model, url) = spec
        .split_once('@')
        .ok_or_else(|| CliError::Domain(format!("--backend {spec:?}: expected mock:<kind> or <model>@<url>")))?;
    let mut cfg = BackendConfig::mock("mock:unused");
    cfg.name = model.to_string();
    cfg.model_id = model.to_string();
    cfg.base_url = url.to_string();
    Ok(cfg)
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs) -> Result<Self, CliError> {
        let (file, base) = match &args.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Env(format!("cannot read config {}: {e}", path.display())))?;
                let file: RunConfigFile = serde_json::from_str(&text)
                    .map_err(|e| CliError::Domain(format!("invalid config {}: {e}", path.display())))?;
                let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
                (file, base)
            }
            None => (RunConfigFile::default(), PathBuf::new()),
        };

        let schema = match (&args.schema, &file.schema) {
            (Some(s), _) => schema_source(s, Path::new("")),
            (None, Some(s)) => schema_source(s, &base),
            (None, None) => SchemaSource::Builtin,
        };
        let backends = if args.backend.is_empty() {
            file.backends
        } else {
            args.backend.iter().map(|b| parse_backend_flag(b)).collect::<Result<_, _>>()?
        };
        let strict = if args.lenient {
            false
        } else if args.strict {
            true
        } else {
            file.strict.unwrap_or(true)
        };
        let output_dir = args
            .out
            .clone()
            .or_else(|| file.output_dir.map(|p| base.join(p)))
            .unwrap_or_else(|| PathBuf::from("scenetag-out"));
        let cache_dir = args
            .cache_dir
            .clone()
            .or_else(|| file.cache_dir.map(|p| base.join(p)))
            .unwrap_or_else(|| output_dir.join("cache"));
        Ok(Self {
            schema,
            manifest_path: args.manifest.clone().or_else(|| file.manifest.map(|p| base.join(p))),
            backends,
            template: file.template.unwrap_or_default(),
            strict,
            shifts: args.shifts.clone().or(file.shifts).unwrap_or_default(),
            cache_dir,
            output_dir,
            resize_long_side: args.resize.or(file.resize_long_side),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shifts_parse() {
        assert_eq!("none".parse::<Shifts>().unwrap(), Shifts::None);
        assert_eq!("all".parse::<Shifts>().unwrap(), Shifts::All);
        assert_eq!("0, 2".parse::<Shifts>().unwrap(), Shifts::Explicit(vec![0, 2]));
        assert!("x".parse::<Shifts>().is_err());
        let f: RunConfigFile = serde_json::from_str(r#"{"shifts":"all"}"#).unwrap();
        assert_eq!(f.shifts, Some(Shifts::All));
        let f: RunConfigFile = serde_json::from_str(r#"{"shifts":[1,3]}"#).unwrap();
        assert_eq!(f.shifts, Some(Shifts::Explicit(vec![1, 3])));
        let f: RunConfigFile = serde_json::from_str(r#"{"shifts":"none"}"#).unwrap();
        assert_eq!(f.shifts, Some(Shifts::None));
        assert!(serde_json::from_str::<RunConfigFile>(r#"{"shifts":"some"}"#).is_err());
    }

    #[test]
    fn backend_flags() {
        assert!(parse_backend_flag("mock:oracle").unwrap().is_mock());
        let b = parse_backend_flag("llava-1.5@http://localhost:8000/v1").unwrap();
        assert_eq!((b.name.as_str(), b.base_url.as_str()), ("llava-1.5", "http://localhost:8000/v1"));
        assert!(parse_backend_flag("nonsense").is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(
            &path,
            r#"{"schema":"my_schema.json","manifest":"m.jsonl","strict":false,"output_dir":"out",
                "backends":[{"name":"gpt","base_url":"https://api.example.com/v1","model_id":"gpt-4o"}],
                "template":{"body":"{tags}?","qa_wrap":false}}"#,
        )
        .unwrap();
        let args = CommonArgs { config: Some(path.clone()), ..Default::default() };
        let c = RunConfig::resolve(&args).unwrap();
        assert_eq!(c.schema, SchemaSource::File(dir.path().join("my_schema.json")));
        assert_eq!(c.manifest_path, Some(dir.path().join("m.jsonl")));
        assert!(!c.strict);
        assert_eq!(c.backends[0].name, "gpt");
        assert_eq!(c.template.body, "{tags}?");
        assert_eq!(c.template.tag_separator, ", ");
        assert_eq!(c.cache_dir, dir.path().join("out").join("cache"));

        let args = CommonArgs {
            config: Some(path),
            schema: Some("builtin".into()),
            backend: vec!["mock:oracle".into()],
            strict: true,
            ..Default::default()
        };
        let c = RunConfig::resolve(&args).unwrap();
        assert_eq!(c.schema, SchemaSource::Builtin);
        assert!(c.strict);
        assert_eq!(c.backends[0].base_url, "mock:oracle");
    }
}
