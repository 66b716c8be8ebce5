use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;

/// A parsed config plus the directory its relative paths are resolved from.
pub struct Loaded<T> {
    pub value: T,
    pub base: PathBuf,
}

impl<T> Loaded<T> {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }
}

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<Loaded<T>> {
    let Some(path) = path else {
        return Ok(Loaded {
            value: T::default(),
            base: PathBuf::from("."),
        });
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let value = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    let base = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok(Loaded { value, base })
}
