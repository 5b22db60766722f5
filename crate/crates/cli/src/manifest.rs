use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use stackelberg_core::RunConfig;

/// Record of one run. Written last, so its presence marks a complete output directory.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub artifact_version: &'static str,
    pub subcommand: String,
    pub config_path: Option<String>,
    pub config: RunConfig,
    pub output_dir: String,
    pub seed: u64,
    pub threads: usize,
    pub outputs: Vec<String>,
    pub timings: Vec<Timing>,
}

#[derive(Debug, Serialize)]
pub struct Timing {
    pub phase: String,
    pub seconds: f64,
}

/// Collects outputs and phase timings while a subcommand runs.
pub struct Recorder {
    dir: PathBuf,
    outputs: Vec<String>,
    timings: Vec<Timing>,
}

impl Recorder {
    pub fn new(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Recorder {
            dir: dir.to_path_buf(),
            outputs: Vec::new(),
            timings: Vec::new(),
        })
    }

    pub fn phase<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push(Timing {
            phase: name.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    /// Writes `name` through a buffered file handle and registers it.
    pub fn csv<F>(&mut self, name: &str, write: F) -> std::io::Result<()>
    where
        F: FnOnce(BufWriter<fs::File>) -> std::io::Result<BufWriter<fs::File>>,
    {
        let file = fs::File::create(self.dir.join(name))?;
        let mut w = write(BufWriter::new(file))?;
        w.flush()?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    pub fn finish(
        self,
        subcommand: String,
        config_path: Option<String>,
        config: RunConfig,
        threads: usize,
    ) -> std::io::Result<()> {
        let manifest = RunManifest {
            artifact_version: env!("CARGO_PKG_VERSION"),
            subcommand,
            config_path,
            seed: config.simulation.seed,
            config,
            output_dir: self.dir.display().to_string(),
            threads,
            outputs: self.outputs,
            timings: self.timings,
        };
        let tmp = self.dir.join("manifest.json.tmp");
        fs::write(
            &tmp,
            serde_json::to_vec_pretty(&manifest).map_err(std::io::Error::other)?,
        )?;
        fs::rename(tmp, self.dir.join("manifest.json"))
    }
}
