//! TOML run configs: loading, path rebasing and output-directory resolution.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const OUTPUT_DIR_ENV: &str = "INODO_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "inodo-out";

/// A value given inline in the config or as a path to a TOML/JSON file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Source<T> {
    Path(PathBuf),
    Inline(T),
}

impl<T: DeserializeOwned> Source<T> {
    pub fn rebase(&mut self, base: &Path) {
        if let Source::Path(p) = self {
            *p = rebase(base, p);
        }
    }

    pub fn resolve(self, what: &str) -> CliResult<T> {
        match self {
            Source::Inline(v) => Ok(v),
            Source::Path(p) => read_structured(&p).map_err(|e| e.context(what)),
        }
    }
}

pub fn rebase(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Parses `.json` files as JSON and everything else as TOML.
pub fn read_structured<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|x| x == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| CliError::config(format!("invalid {}: {e}", path.display())))
}

/// Loads the config at `path` (or the defaults) and the directory that relative paths in it refer to.
pub fn load<C: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<(C, PathBuf)> {
    match path {
        None => Ok((C::default(), PathBuf::from("."))),
        Some(p) => {
            let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
            Ok((read_structured(p)?, base))
        }
    }
}

/// Flag, then config, then the environment, then `inodo-out`.
pub fn output_dir(flag: Option<PathBuf>, config: Option<PathBuf>) -> CliResult<PathBuf> {
    let dir = flag
        .or(config)
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::config(format!("cannot create output dir {}: {e}", dir.display())))?;
    Ok(dir)
}
