//! Reading scenario files and turning failures into line-anchored messages.

use std::fmt;
use std::path::{Path, PathBuf};

use qhd::scenario::ScenarioConfig;

/// A scenario file that failed to parse or validate.
#[derive(Debug)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{}: {}", self.path.display(), l, self.message),
            None => write!(f, "{}: {}", self.path.display(), self.message),
        }
    }
}

/// Command-line overrides applied before validation.
#[derive(Clone, Copy, Debug, Default)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
}

/// A parsed, overridden and validated scenario together with its source text.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub path: PathBuf,
    pub text: String,
    pub config: ScenarioConfig,
}

impl LoadedConfig {
    pub fn base_dir(&self) -> &Path {
        self.path.parent().unwrap_or(Path::new("."))
    }

    /// Anchor a validation failure on `key` to the line that sets it.
    pub fn error_at(&self, key: &str, message: String) -> ConfigError {
        ConfigError { path: self.path.clone(), line: locate_key(&self.text, key), message }
    }
}

pub fn load(path: &Path, overrides: Overrides) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        path: path.to_path_buf(),
        line: None,
        message: e.to_string(),
    })?;
    let mut config: ScenarioConfig = toml::from_str(&text).map_err(|e| ConfigError {
        path: path.to_path_buf(),
        line: e.span().map(|s| line_of(&text, s.start)),
        message: e.message().trim_end().to_string(),
    })?;
    if let Some(dt) = overrides.dt {
        config.integration.dt = dt;
    }
    if let Some(t) = overrides.t_end {
        config.integration.t_end = t;
    }
    let loaded = LoadedConfig { path: path.to_path_buf(), text, config };
    if let Err(e) = loaded.config.validate() {
        return Err(match e {
            qhd::Error::Config { key, message } => loaded.error_at(&key, format!("`{key}` {message}")),
            other => ConfigError { path: loaded.path.clone(), line: None, message: other.to_string() },
        });
    }
    Ok(loaded)
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// 1-based line of the dotted `key`, falling back to its enclosing table
/// header. Only the plain `[table]` / `key = value` layout is recognised,
/// which is all the shipped scenarios use.
pub fn locate_key(text: &str, key: &str) -> Option<usize> {
    let (table, leaf) = match key.rsplit_once('.') {
        Some((t, l)) => (t, l),
        None => ("", key),
    };
    let mut current = String::new();
    let mut header_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some(h) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = h.trim().to_string();
            if current == key {
                return Some(i + 1);
            }
            if current == table {
                header_line = Some(i + 1);
            }
            continue;
        }
        if current == table {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == leaf {
                    return Some(i + 1);
                }
            }
        }
    }
    header_line
}
