//! `run.txt` provenance records.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use codedstereo::io::{dump_config, RunConfig};
use codedstereo::{Error, Result};

/// What a run did, written next to its outputs when it ends.
pub struct Provenance {
    command_line: String,
    threads: usize,
    started: Instant,
    started_unix: u64,
    subcommand: String,
    seed: Option<u64>,
    config: Option<RunConfig>,
    out_dir: Option<PathBuf>,
    notes: Vec<(String, String)>,
}

impl Provenance {
    pub fn start(argv: &[String], threads: usize) -> Self {
        Self {
            command_line: argv.join(" "),
            threads,
            started: Instant::now(),
            started_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            subcommand: argv.get(1).cloned().unwrap_or_default(),
            seed: None,
            config: None,
            out_dir: None,
            notes: Vec::new(),
        }
    }

    /// Record the effective configuration and the output directory.
    pub fn set_run(&mut self, config: &RunConfig, out_dir: &Path, seed: Option<u64>) {
        self.config = Some(config.clone());
        self.out_dir = Some(out_dir.to_path_buf());
        self.seed = seed;
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.notes.push((key.to_string(), value.to_string()));
    }

    fn render(&self, result: &Result<()>) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command = {}", self.command_line);
        let _ = writeln!(s, "subcommand = {}", self.subcommand);
        match self.seed {
            Some(seed) => {
                let _ = writeln!(s, "seed = {seed}");
            }
            None => s.push_str("seed = none\n"),
        }
        let _ = writeln!(s, "codedstereo_version = {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(
            s,
            "parallel = {}",
            if codedstereo::par::is_parallel() {
                "rayon"
            } else {
                "sequential"
            }
        );
        let _ = writeln!(s, "threads = {}", self.threads);
        let _ = writeln!(s, "started_unix_s = {}", self.started_unix);
        let _ = writeln!(s, "wall_time_s = {:.3}", self.started.elapsed().as_secs_f64());
        match result {
            Ok(()) => s.push_str("status = ok\n"),
            Err(e) => {
                let _ = writeln!(s, "status = error (exit {}): {e}", e.exit_code());
            }
        }
        for (k, v) in &self.notes {
            let _ = writeln!(s, "{k} = {v}");
        }
        if let Some(cfg) = &self.config {
            s.push_str("\n# effective configuration\n");
            s.push_str(&dump_config(cfg));
        }
        s
    }

    /// Write `run.txt` if the run got far enough to know its output directory.
    pub fn finish(&self, result: &Result<()>) -> Result<()> {
        let Some(dir) = &self.out_dir else {
            return Ok(());
        };
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        let path = dir.join("run.txt");
        std::fs::write(&path, self.render(result)).map_err(|e| io_error(&path, e))
    }
}

pub fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}
