//! Session config files (TOML).

use std::fmt;
use std::path::{Path, PathBuf};

use myotwin_core::protocol::{ConfigError, SessionConfig};

#[derive(Debug)]
pub enum LoadError {
    Io { path: PathBuf, source: std::io::Error },
    Parse { path: PathBuf, message: String },
    Invalid { path: PathBuf, line: Option<usize>, source: ConfigError },
}

impl fmt::Display for LoadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoadError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            LoadError::Parse { path, message } => write!(f, "{}: {}", path.display(), message.trim_end()),
            LoadError::Invalid {
                path,
                line: Some(line),
                source,
            } => write!(f, "{}:{line}: {source}", path.display()),
            LoadError::Invalid { path, line: None, source } => write!(f, "{}: {source}", path.display()),
        }
    }
}

impl std::error::Error for LoadError {}

/// Section a validation error belongs to, for pointing at its header line.
fn section_of(err: &ConfigError) -> &'static [&'static str] {
    match err {
        ConfigError::Trajectory(_) => &["trajectory"],
        ConfigError::Dynamics(_) => &["impedance_overrides", "subject"],
        ConfigError::Muscle(_) => &["synergy", "fatigue", "emg"],
        ConfigError::Processing(_) => &["processing"],
        ConfigError::Timing(_) => &["session"],
        ConfigError::Split(_) => &["split"],
        ConfigError::Train(_) => &["train"],
    }
}

fn header_line(text: &str, sections: &[&str]) -> Option<usize> {
    text.lines().enumerate().find_map(|(i, line)| {
        let name = line.trim().strip_prefix('[')?.split(']').next()?.trim();
        let top = name.split('.').next()?;
        sections.contains(&top).then_some(i + 1)
    })
}

/// Parses and validates config text. `path` only labels diagnostics.
pub fn parse_config(text: &str, path: &Path) -> Result<SessionConfig, LoadError> {
    let cfg: SessionConfig = toml::from_str(text).map_err(|e| LoadError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    cfg.validate().map_err(|source| LoadError::Invalid {
        path: path.to_path_buf(),
        line: header_line(text, section_of(&source)),
        source,
    })?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<SessionConfig, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, path)
}

/// The fully resolved config as TOML, written next to outputs for provenance.
pub fn to_toml(cfg: &SessionConfig) -> String {
    toml::to_string(cfg).expect("session config always serialises")
}
