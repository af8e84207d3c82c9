//! Dataset registry: a plain text file with one dataset per line,
//!
//! ```text
//! # name = path, convention[, channels]
//! ETTh1 = data/ETTh1.csv, ett_hour, 7
//! Traffic = data/traffic.csv, ratio, 862
//! ```
//!
//! Relative paths are resolved against the registry file's directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{load_csv, Convention, CsvSchema, Dataset};
use crate::error::{HadlError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RegistryEntry {
    pub path: PathBuf,
    pub convention: Convention,
    pub channels: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Registry {
    pub entries: BTreeMap<String, RegistryEntry>,
}

impl Registry {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: &str| HadlError::Config(format!("registry line {}: {m}", i + 1));
            let (name, rest) = line.split_once('=').ok_or_else(|| err("expected 'name = path, convention'"))?;
            let fields: Vec<&str> = rest.split(',').map(str::trim).collect();
            if fields.len() < 2 || fields.len() > 3 || fields[0].is_empty() {
                return Err(err("expected 'path, convention[, channels]'"));
            }
            let p = PathBuf::from(fields[0]);
            let path = if p.is_absolute() { p } else { base.join(p) };
            let convention = fields[1].parse()?;
            let channels = match fields.get(2) {
                Some(c) => Some(c.parse().map_err(|_| err("channels must be an integer"))?),
                None => None,
            };
            entries.insert(
                name.trim().to_string(),
                RegistryEntry {
                    path,
                    convention,
                    channels,
                },
            );
        }
        Ok(Self { entries })
    }

    pub fn get(&self, name: &str) -> Option<&RegistryEntry> {
        self.entries.get(name)
    }

    /// Loads a registered dataset, validating its channel count.
    pub fn open(&self, name: &str) -> Result<(Dataset, Convention)> {
        let entry = self
            .get(name)
            .ok_or_else(|| HadlError::Config(format!("dataset '{name}' is not in the registry")))?;
        let mut schema = CsvSchema::for_name(name);
        if entry.channels.is_some() {
            schema.expected_channels = entry.channels;
        }
        Ok((load_csv(&entry.path, &schema)?, entry.convention))
    }
}
