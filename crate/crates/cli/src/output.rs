use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

/// Files written by one command. Everything registered here is deleted again
/// if the command fails, so a nonzero exit never leaves partial results.
pub struct Outputs {
    dir: Option<PathBuf>,
    created_dir: bool,
    files: Vec<PathBuf>,
}

impl Outputs {
    /// Output directory, created if missing.
    pub fn dir(dir: &Path) -> Result<Self> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Outputs {
            dir: Some(dir.to_path_buf()),
            created_dir,
            files: Vec::new(),
        })
    }

    /// Loose files only (no owning directory).
    pub fn files() -> Self {
        Outputs {
            dir: None,
            created_dir: false,
            files: Vec::new(),
        }
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        let path = match &self.dir {
            Some(d) => d.join(name),
            None => PathBuf::from(name),
        };
        self.files.push(path.clone());
        path
    }

    pub fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.path(name);
        let file = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
        Ok(BufWriter::new(file))
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    pub fn discard(self) {
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        if let (Some(dir), true) = (&self.dir, self.created_dir) {
            let _ = fs::remove_dir(dir);
        }
    }
}
