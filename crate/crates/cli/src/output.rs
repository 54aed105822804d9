//! Artifact writer confined to one output directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

pub struct Output {
    dir: PathBuf,
    report: Vec<String>,
}

impl Output {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Output { dir: dir.to_path_buf(), report: Vec::new() })
    }

    pub fn path(&self, name: &str) -> Result<PathBuf> {
        if name.contains(['/', '\\']) || name.starts_with('.') {
            bail!("artifact name `{name}` must be a plain file name");
        }
        Ok(self.dir.join(name))
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let p = self.path(name)?;
        std::fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))
    }

    pub fn csv<I>(&self, name: &str, header: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        self.write(name, &w.into_inner()?)
    }

    pub fn line(&mut self, s: impl Into<String>) {
        self.report.push(s.into());
    }

    /// Prints the report and saves it as `<name>_report.txt`.
    pub fn finish(self, name: &str) -> Result<()> {
        let mut text = self.report.join("\n");
        text.push('\n');
        print!("{text}");
        self.write(&format!("{name}_report.txt"), text.as_bytes())
    }
}

/// Shortest round-trip scientific notation, as used in every CSV.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}
