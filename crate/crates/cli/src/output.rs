//! Result files. Every file carries the resolved configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{io, CliError, CliResult};

pub struct OutputDir {
    root: PathBuf,
    echo: String,
}

impl OutputDir {
    pub fn create(root: PathBuf, config: &impl Serialize) -> CliResult<Self> {
        fs::create_dir_all(&root).map_err(io(&root))?;
        let echo = serde_json::to_string(config).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(Self { root, echo })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_json(&self, name: &str, value: &impl Serialize) -> CliResult<PathBuf> {
        let mut text =
            serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
        text.push('\n');
        write(&self.path(name), &text)
    }

    /// Writes a CSV whose first line is a `# config:` comment.
    pub fn write_csv(
        &self,
        name: &str,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> CliResult<PathBuf> {
        let path = self.path(name);
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        w.write_record(header)
            .map_err(|e| CliError::Data(e.to_string()))?;
        for r in rows {
            w.write_record(r)
                .map_err(|e| CliError::Data(e.to_string()))?;
        }
        let body = w.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
        let mut text = format!("# config: {}\n", self.echo);
        text.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
        write(&path, &text)
    }
}

fn write(path: &Path, text: &str) -> CliResult<PathBuf> {
    fs::write(path, text).map_err(io(path))?;
    Ok(path.to_path_buf())
}

/// Shortest text that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v}")
}
