//! Artifact files: a `#` manifest header followed by CSV, plus the run manifest.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;

/// `git describe` of the build, or `unknown` outside a checkout.
pub const GIT_DESCRIBE: &str = env!("SMALLDEV_GIT_DESCRIBE");

pub fn version_string() -> String {
    format!("smalldev {} ({GIT_DESCRIBE})", env!("CARGO_PKG_VERSION"))
}

pub struct Artifacts {
    dir: PathBuf,
    header: String,
    written: Vec<String>,
}

impl Artifacts {
    pub fn create(dir: &Path, config: &ExperimentConfig) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        let header = format!("# {}\n# experiment: {}\n# config: {}\n", version_string(), config.kind(), config.echo());
        Ok(Self { dir: dir.to_path_buf(), header, written: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes `name` as the header followed by whatever `body` emits.
    pub fn write(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut BufWriter<fs::File>) -> io::Result<()>,
    ) -> io::Result<()> {
        let mut out = BufWriter::new(fs::File::create(self.dir.join(name))?);
        out.write_all(self.header.as_bytes())?;
        body(&mut out)?;
        out.flush()?;
        self.written.push(name.to_owned());
        Ok(())
    }

    /// One-row CSV from `(column, value)` pairs.
    pub fn write_row(&mut self, name: &str, row: &[(&str, String)]) -> io::Result<()> {
        let keys: Vec<&str> = row.iter().map(|(k, _)| *k).collect();
        let vals: Vec<&str> = row.iter().map(|(_, v)| v.as_str()).collect();
        self.write(name, |w| {
            writeln!(w, "{}", keys.join(","))?;
            writeln!(w, "{}", vals.join(","))
        })
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    /// `run_manifest.json`: config echo, version, artifact list and wall time. It is
    /// the only file that differs between otherwise identical runs.
    pub fn finish(&self, config: &ExperimentConfig, wall_time_s: f64, exit_code: u8) -> io::Result<()> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            version: String,
            config: serde_json::Value,
            artifacts: &'a [String],
            threads: usize,
            exit_code: u8,
            wall_time_s: f64,
        }
        let config = serde_json::from_str(&config.echo()).map_err(io::Error::other)?;
        let m = Manifest {
            version: version_string(),
            config,
            artifacts: &self.written,
            threads: rayon::current_num_threads(),
            exit_code,
            wall_time_s,
        };
        let text = serde_json::to_string_pretty(&m).map_err(io::Error::other)?;
        fs::write(self.dir.join("run_manifest.json"), text + "\n")
    }
}
