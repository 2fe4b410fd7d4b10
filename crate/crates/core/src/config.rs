//! Run configuration files.
//!
//! TOML with one section per module. Keys left out take their defaults,
//! unknown keys are errors. Command-line overrides are applied on top of the
//! file, and the resolved configuration can be echoed back with the origin
//! of every key annotated.
//!
//! ```toml
//! seed = 7
//! iterations = 10
//!
//! [corpus]
//! train = 500
//!
//! [consensus]
//! lambda = 0.5
//!
//! [extractor.optimizer]
//! kind = "sgd"
//! momentum = 0.9
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;
use toml::{Table, Value};

use crate::emloop::RunConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {msg}")]
    Read { path: String, msg: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: expected {expected}, found {found}")]
    Type { key: String, expected: &'static str, found: &'static str },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Default,
    File,
    Flag,
}

impl Origin {
    fn as_str(self) -> &'static str {
        match self {
            Origin::Default => "default",
            Origin::File => "file",
            Origin::Flag => "flag",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub config: RunConfig,
    /// Dotted key path to where its value came from.
    pub origins: BTreeMap<String, Origin>,
}

fn kind_name(v: &Value) -> &'static str {
    match v {
        Value::String(_) => "string",
        Value::Integer(_) => "integer",
        Value::Float(_) => "float",
        Value::Boolean(_) => "boolean",
        Value::Datetime(_) => "datetime",
        Value::Array(_) => "array",
        Value::Table(_) => "table",
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

fn mark(v: &Value, prefix: &str, origin: Origin, origins: &mut BTreeMap<String, Origin>) {
    match v {
        Value::Table(t) => {
            for (k, v) in t {
                mark(v, &join(prefix, k), origin, origins);
            }
        }
        _ => {
            origins.insert(prefix.to_string(), origin);
        }
    }
}

/// Merges `src` into `dst`, checking keys and scalar types against `dst`.
/// A table that names its `kind` replaces the destination wholesale, since
/// its other keys depend on the variant.
fn overlay(dst: &mut Table, src: &Table, prefix: &str, origin: Origin, origins: &mut BTreeMap<String, Origin>) -> Result<(), ConfigError> {
    for (k, v) in src {
        let path = join(prefix, k);
        let Some(slot) = dst.get_mut(k) else {
            return Err(ConfigError::UnknownKey(path));
        };
        match (slot, v) {
            (Value::Table(d), Value::Table(s)) if s.contains_key("kind") => {
                origins.retain(|key, _| !key.starts_with(&format!("{path}.")));
                *d = s.clone();
                mark(v, &path, origin, origins);
            }
            (Value::Table(d), Value::Table(s)) => overlay(d, s, &path, origin, origins)?,
            (slot @ Value::Float(_), Value::Integer(i)) => {
                *slot = Value::Float(*i as f64);
                origins.insert(path, origin);
            }
            (slot, v) if std::mem::discriminant(slot) == std::mem::discriminant(v) => {
                *slot = v.clone();
                origins.insert(path, origin);
            }
            (slot, v) => {
                return Err(ConfigError::Type {
                    key: path,
                    expected: kind_name(slot),
                    found: kind_name(v),
                })
            }
        }
    }
    Ok(())
}

/// Turns `a.b.c = value` pairs into a nested table.
fn nest(pairs: &[(String, Value)]) -> Table {
    let mut root = Table::new();
    for (key, v) in pairs {
        let parts: Vec<&str> = key.split('.').collect();
        let mut t = &mut root;
        for p in &parts[..parts.len() - 1] {
            t = t
                .entry(p.to_string())
                .or_insert_with(|| Value::Table(Table::new()))
                .as_table_mut()
                .expect("override paths do not collide");
        }
        t.insert(parts[parts.len() - 1].to_string(), v.clone());
    }
    root
}

/// Resolves defaults, then the file text, then the flag overrides.
pub fn resolve(file: Option<&str>, flags: &[(String, Value)]) -> Result<Resolved, ConfigError> {
    let defaults = Value::try_from(RunConfig::default()).expect("defaults serialize");
    let Value::Table(mut table) = defaults else {
        unreachable!("config serializes to a table")
    };
    let mut origins = BTreeMap::new();
    mark(&Value::Table(table.clone()), "", Origin::Default, &mut origins);
    if let Some(text) = file {
        let parsed: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        overlay(&mut table, &parsed, "", Origin::File, &mut origins)?;
    }
    overlay(&mut table, &nest(flags), "", Origin::Flag, &mut origins)?;
    let config: RunConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Invalid(e.message().to_string()))?;
    Ok(Resolved { config, origins })
}

/// Reads a config file (if any) and applies the flag overrides.
pub fn load_config(path: Option<&Path>, flags: &[(String, Value)]) -> Result<Resolved, ConfigError> {
    let text = path
        .map(|p| {
            std::fs::read_to_string(p).map_err(|e| ConfigError::Read {
                path: p.display().to_string(),
                msg: e.to_string(),
            })
        })
        .transpose()?;
    resolve(text.as_deref(), flags)
}

fn write_table(out: &mut String, t: &Table, prefix: &str, origins: &BTreeMap<String, Origin>) {
    for (k, v) in t {
        if !v.is_table() {
            let path = join(prefix, k);
            let origin = origins.get(&path).copied().unwrap_or(Origin::Default);
            let _ = writeln!(out, "{k} = {v}  # {}", origin.as_str());
        }
    }
    for (k, v) in t {
        if let Value::Table(sub) = v {
            let path = join(prefix, k);
            let _ = writeln!(out, "\n[{path}]");
            write_table(out, sub, &path, origins);
        }
    }
}

impl Resolved {
    /// The resolved configuration as a loadable file, each key annotated
    /// with its origin.
    pub fn echo(&self) -> String {
        let Value::Table(t) = Value::try_from(&self.config).expect("config serializes") else {
            unreachable!("config serializes to a table")
        };
        let mut out = String::from("# origin of each value: default | file | flag\n");
        write_table(&mut out, &t, "", &self.origins);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let r = resolve(Some(""), &[]).unwrap();
        assert_eq!(r.config, RunConfig::default());
        assert_eq!(r.config.iterations, 100);
        assert_eq!(r.config.consensus.lambda, 0.5);
        assert_eq!(r.config.encoder.topics, 32);
        assert!(r.origins.values().all(|o| *o == Origin::Default));
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let file = "iterations = 7\nseed = 3\n[consensus]\nlambda = 1\n";
        let flags = vec![("iterations".to_string(), Value::Integer(2))];
        let r = resolve(Some(file), &flags).unwrap();
        assert_eq!(r.config.iterations, 2);
        assert_eq!(r.config.seed, 3);
        assert_eq!(r.config.consensus.lambda, 1.0);
        assert_eq!(r.origins["iterations"], Origin::Flag);
        assert_eq!(r.origins["seed"], Origin::File);
        assert_eq!(r.origins["consensus.lambda"], Origin::File);
        assert_eq!(r.origins["consensus.epochs"], Origin::Default);
        let echo = r.echo();
        assert!(echo.contains("iterations = 2  # flag"));
        assert!(echo.contains("seed = 3  # file"));
        assert!(echo.contains("epochs = 25000  # default"));
    }

    #[test]
    fn unknown_keys_and_bad_types_are_rejected() {
        let e = resolve(Some("[consensus]\nlamda = 0.5\n"), &[]).unwrap_err();
        assert!(matches!(e, ConfigError::UnknownKey(ref k) if k == "consensus.lamda"), "{e}");
        let e = resolve(Some("iterations = \"ten\"\n"), &[]).unwrap_err();
        assert!(matches!(e, ConfigError::Type { ref key, .. } if key == "iterations"), "{e}");
        assert!(matches!(resolve(Some("iterations = \n"), &[]), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn optimizer_variant_can_be_switched() {
        let r = resolve(Some("[extractor.optimizer]\nkind = \"sgd\"\nmomentum = 0.5\n"), &[]).unwrap();
        assert_eq!(r.config.extractor.optimizer, crate::nn::OptimizerKind::Sgd { momentum: 0.5 });
        let again = resolve(Some(&r.echo()), &[]).unwrap();
        assert_eq!(again.config, r.config);
    }

    #[test]
    fn echo_round_trips() {
        let file = "seed = 11\nskip_em = true\n[sat]\ngoal_weight = 3.25\n[sat.solver]\nnovelty = 0.125\n[encoder]\nlr = 0.003\n";
        let flags = vec![
            ("corpus.train".to_string(), Value::Integer(40)),
            ("threads".to_string(), Value::Integer(2)),
        ];
        let r = resolve(Some(file), &flags).unwrap();
        let back = resolve(Some(&r.echo()), &[]).unwrap();
        assert_eq!(back.config, r.config);
    }
}
