//! Config files: TOML with `model`, `train` and `experiment` sections, plus
//! `--set section.key=value` overrides applied before validation.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use toml::{Table, Value};

use crate::Failure;

pub const DEFAULT_SEED: u64 = 42;

/// A parsed config file with overrides applied.
#[derive(Debug, Clone)]
pub struct RawConfig {
    pub table: Table,
    /// Directory relative paths in the file resolve against.
    pub base_dir: PathBuf,
}

impl RawConfig {
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, Failure> {
        let (mut table, base_dir) = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Failure::config(format!("{}: {e}", p.display())))?;
                let table: Table =
                    toml::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", p.display())))?;
                let dir = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (table, dir)
            }
            None => (Table::new(), PathBuf::from(".")),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Ok(Self { table, base_dir })
    }

    /// `--seed` wins, then a top-level `seed` key, then the default.
    pub fn seed(&mut self, flag: Option<u64>) -> Result<u64, Failure> {
        if let Some(Value::Table(train)) = self.table.get("train") {
            if train.contains_key("seed") {
                return Err(Failure::config("set the seed at the top level or with --seed, not in [train]"));
            }
        }
        let file = match self.table.remove("seed") {
            None => None,
            Some(Value::Integer(s)) if s >= 0 => Some(s as u64),
            Some(other) => return Err(Failure::config(format!("seed must be a nonnegative integer, got {other}"))),
        };
        Ok(flag.or(file).unwrap_or(DEFAULT_SEED))
    }

    pub fn parse<T: DeserializeOwned>(&self) -> Result<T, Failure> {
        Value::Table(self.table.clone()).try_into().map_err(|e: toml::de::Error| Failure::config(e.to_string()))
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }
}

fn parse_value(raw: &str) -> Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<Table>(&doc) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

/// Applies `a.b.c=value`, creating intermediate tables. The value is read
/// as a TOML literal when it parses as one, otherwise as a bare string.
pub fn apply_override(table: &mut Table, spec: &str) -> Result<(), Failure> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Failure::config(format!("override {spec:?} is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Failure::config(format!("override key {key:?} is malformed")));
    }
    let mut current = table;
    for part in &parts[..parts.len() - 1] {
        let entry = current.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()));
        current = match entry {
            Value::Table(t) => t,
            _ => return Err(Failure::config(format!("override {key:?}: {part} is not a section"))),
        };
    }
    current.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_parse_literals() {
        let mut t: Table = toml::from_str("[train]\nepochs = 10\n").unwrap();
        apply_override(&mut t, "train.epochs=0").unwrap();
        apply_override(&mut t, "train.learning_rate = 1e-2").unwrap();
        apply_override(&mut t, "experiment.methods=[\"whitening\"]").unwrap();
        apply_override(&mut t, "model.activation=tanh_only").unwrap();
        assert_eq!(t["train"]["epochs"], Value::Integer(0));
        assert_eq!(t["train"]["learning_rate"], Value::Float(1e-2));
        assert_eq!(t["experiment"]["methods"], Value::Array(vec![Value::String("whitening".into())]));
        assert_eq!(t["model"]["activation"], Value::String("tanh_only".into()));
        assert!(apply_override(&mut t, "train").is_err());
        assert!(apply_override(&mut t, "train.epochs.x=1").is_err());
        assert!(apply_override(&mut t, ".a=1").is_err());
    }

    #[test]
    fn seed_precedence() {
        let mut c = RawConfig { table: toml::from_str("seed = 7").unwrap(), base_dir: PathBuf::new() };
        assert_eq!(c.clone().seed(None).unwrap(), 7);
        assert_eq!(c.seed(Some(3)).unwrap(), 3);
        let mut empty = RawConfig { table: Table::new(), base_dir: PathBuf::new() };
        assert_eq!(empty.seed(None).unwrap(), DEFAULT_SEED);
        let mut bad = RawConfig { table: toml::from_str("[train]\nseed = 1").unwrap(), base_dir: PathBuf::new() };
        assert!(bad.seed(None).is_err());
    }
}
