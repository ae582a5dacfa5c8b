use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub experiment: String,
    pub config_digest: String,
    pub seed: u64,
    pub passed: bool,
    pub verdicts: Vec<Verdict>,
    pub tables: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Collects verdicts and output tables for one run.
pub struct Run {
    out: PathBuf,
    pub verdicts: Vec<Verdict>,
    pub tables: Vec<String>,
}

impl Run {
    pub fn new(out: &Path) -> Self {
        Run { out: out.to_path_buf(), verdicts: Vec::new(), tables: Vec::new() }
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.verdicts.push(Verdict { name: name.to_string(), passed, detail: detail.into() });
    }

    pub fn table(&mut self, file: &str, body: &str) -> std::io::Result<()> {
        write_atomic(&self.out.join(file), body.as_bytes())?;
        self.tables.push(file.to_string());
        Ok(())
    }
}

/// Writes to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}
