//! Key-value configuration files with `[section]` headers. Values parsed on
//! demand; command-line flags take precedence over file entries.

use std::collections::BTreeMap;
use std::path::Path;

use crate::CliError;

#[derive(Debug, Default, Clone)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        let mut sections = BTreeMap::new();
        let mut current = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                current = line[1..line.len() - 1].trim().to_string();
                sections.entry(current.clone()).or_insert_with(BTreeMap::new);
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Schema(format!("config line {}: expected key = value", i + 1))
            })?;
            sections
                .entry(current.clone())
                .or_insert_with(BTreeMap::new)
                .insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { sections })
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .get(section)
            .and_then(|s| s.get(key))
            .map(|s| s.as_str())
    }

    pub fn get_f64(&self, section: &str, key: &str) -> Result<Option<f64>, CliError> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::Schema(format!("config {section}.{key}: bad number `{v}`"))),
        }
    }

    pub fn get_usize(&self, section: &str, key: &str) -> Result<Option<usize>, CliError> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::Schema(format!("config {section}.{key}: bad count `{v}`"))),
        }
    }

    pub fn get_u64(&self, section: &str, key: &str) -> Result<Option<u64>, CliError> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::Schema(format!("config {section}.{key}: bad seed `{v}`"))),
        }
    }

    pub fn get_bool(&self, section: &str, key: &str) -> Result<Option<bool>, CliError> {
        match self.get(section, key) {
            None => Ok(None),
            Some("true") | Some("1") | Some("yes") => Ok(Some(true)),
            Some("false") | Some("0") | Some("no") => Ok(Some(false)),
            Some(v) => Err(CliError::Schema(format!(
                "config {section}.{key}: bad flag `{v}`"
            ))),
        }
    }

    pub fn get_f64_list(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => parse_f64_list(v)
                .map(Some)
                .map_err(|e| CliError::Schema(format!("config {section}.{key}: {e}"))),
        }
    }
}

pub fn parse_f64_list(s: &str) -> Result<Vec<f64>, String> {
    let values: Result<Vec<f64>, _> = s
        .split(',')
        .map(|tok| tok.trim().parse::<f64>())
        .collect();
    match values {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => Err(format!("expected a comma-separated number list, got `{s}`")),
    }
}
