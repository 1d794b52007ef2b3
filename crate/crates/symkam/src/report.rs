//! Output persistence: a deterministic report.json, plot-ready CSV tables,
//! a human log and a separate metadata file for anything time-dependent.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::{Error, Result};

pub struct OutputSink {
    dir: PathBuf,
    started: std::time::Instant,
    log_lines: Vec<String>,
}

impl OutputSink {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir.join("tables"))
            .map_err(|e| Error::Param(format!("cannot create output dir {}: {e}", dir.display())))?;
        Ok(OutputSink {
            dir: dir.to_path_buf(),
            started: std::time::Instant::now(),
            log_lines: Vec::new(),
        })
    }

    pub fn log(&mut self, line: impl Into<String>) {
        let line = line.into();
        eprintln!("{line}");
        self.log_lines.push(line);
    }

    pub fn table(&self, name: &str, csv: &str) -> Result<()> {
        let path = self.dir.join("tables").join(name);
        std::fs::write(&path, csv)
            .map_err(|e| Error::Param(format!("cannot write {}: {e}", path.display())))
    }

    /// Write the deterministic report plus log.txt and meta.json; timestamps
    /// and wall-clock data stay out of report.json so identical configs
    /// reproduce it byte for byte.
    pub fn finish<T: Serialize>(self, report: &T) -> Result<()> {
        let json = serde_json::to_string_pretty(report)
            .map_err(|e| Error::Param(format!("report serialization failed: {e}")))?;
        let path = self.dir.join("report.json");
        std::fs::write(&path, format!("{json}\n"))
            .map_err(|e| Error::Param(format!("cannot write {}: {e}", path.display())))?;
        let log = self.log_lines.join("\n");
        std::fs::write(self.dir.join("log.txt"), format!("{log}\n"))
            .map_err(|e| Error::Param(format!("cannot write log: {e}")))?;
        let meta = serde_json::json!({
            "artifact_version": env!("CARGO_PKG_VERSION"),
            "created_unix_ms": SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
            "elapsed_ms": self.started.elapsed().as_millis() as u64,
        });
        std::fs::write(
            self.dir.join("meta.json"),
            format!("{}\n", serde_json::to_string_pretty(&meta).unwrap()),
        )
        .map_err(|e| Error::Param(format!("cannot write meta: {e}")))?;
        Ok(())
    }
}
