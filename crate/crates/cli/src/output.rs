use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self { root: root.to_path_buf() })
    }

    /// Writes through a temporary sibling and renames it into place.
    pub fn write(&self, name: &str, contents: &[u8]) -> Result<PathBuf> {
        let dest = self.root.join(name);
        let tmp = self.root.join(format!(".{name}.tmp{}", std::process::id()));
        {
            let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
            f.write_all(contents)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &dest).with_context(|| format!("renaming into {}", dest.display()))?;
        Ok(dest)
    }

    pub fn write_str(&self, name: &str, contents: &str) -> Result<PathBuf> {
        self.write(name, contents.as_bytes())
    }
}

/// Formats `value` or returns `-` when `None`.
pub fn cell(value: Option<f64>) -> String {
    value.map(hdl_core::format::fmt_f64).unwrap_or_else(|| "-".into())
}
