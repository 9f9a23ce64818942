// SPDX-License-Identifier: Apache-2.0

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

/// Where results go: files in a directory, or standard output.
pub struct Sink {
    dir: Option<PathBuf>,
    force: bool,
}

impl Sink {
    pub fn new(dir: Option<PathBuf>, force: bool) -> Result<Self> {
        if let Some(d) = &dir {
            std::fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
        }
        Ok(Sink { dir, force })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Writes `name` atomically in the output directory, or prints the
    /// contents when there is none.
    pub fn emit(&self, name: &str, contents: &str) -> Result<()> {
        match &self.dir {
            Some(dir) => {
                let path = dir.join(name);
                write_atomic(&path, contents.as_bytes(), self.force)?;
                eprintln!("wrote {}", path.display());
                Ok(())
            }
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(contents.as_bytes())?;
                out.flush()?;
                Ok(())
            }
        }
    }

    /// Like [`Sink::emit`] but skipped without an output directory.
    pub fn emit_file_only(&self, name: &str, contents: &str) -> Result<()> {
        if self.dir.is_some() {
            self.emit(name, contents)
        } else {
            eprintln!("note: {name} needs --out-dir; skipped");
            Ok(())
        }
    }
}

/// Writes through a temporary file in the same directory and renames it
/// into place. Refuses to replace an existing file unless `force`.
pub fn write_atomic(path: &Path, bytes: &[u8], force: bool) -> Result<()> {
    if !force && path.exists() {
        bail!("{} exists; pass --force to overwrite", path.display());
    }
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    if force {
        tmp.persist(path)?;
    } else {
        tmp.persist_noclobber(path)
            .with_context(|| format!("{} exists; pass --force to overwrite", path.display()))?;
    }
    Ok(())
}
