//! Config-driven experiments and their CSV/SVG reports.

pub mod audit;
pub mod config;
pub mod correlations;
pub mod estimate;
pub mod plot;
pub mod threewave;

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub use config::{ExperimentConfig, ExperimentKind};

/// One output file, kept in memory until the whole run succeeded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn new(name: impl Into<String>, bytes: Vec<u8>) -> Self {
        Self {
            name: name.into(),
            bytes,
        }
    }
}

/// Everything an experiment produced.
#[derive(Clone, Debug, Default)]
pub struct RunOutput {
    pub artifacts: Vec<Artifact>,
    /// Audit rows that failed; other experiments leave this at 0.
    pub failures: usize,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    pub plots: bool,
    pub dump_frames: bool,
}

pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutput> {
    cfg.validate()?;
    let mut out = match cfg.experiment {
        ExperimentKind::Correlations => correlations::run(cfg, opts.plots)?,
        ExperimentKind::Threewave => threewave::run(cfg, opts.plots)?,
        ExperimentKind::Estimate => estimate::run(cfg, opts.dump_frames)?,
        ExperimentKind::Audit => audit::run(cfg)?,
    };
    out.artifacts
        .push(Artifact::new("config.toml", cfg.to_toml()?.into_bytes()));
    Ok(out)
}

/// Writes artifacts to `{root}/{experiment}-{hash}/` and returns that path.
pub fn emit_report(cfg: &ExperimentConfig, output: &RunOutput, root: &Path) -> Result<PathBuf> {
    let dir = root.join(format!("{}-{}", cfg.experiment.name(), cfg.hash()?));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for a in &output.artifacts {
        let path = dir.join(&a.name);
        std::fs::write(&path, &a.bytes).map_err(|e| Error::io(&path, e))?;
    }
    Ok(dir)
}

/// Serializes rows through the csv writer into memory.
pub(crate) fn csv_bytes<I, R>(header: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| Error::io("<memory>", e.into_error()))
}
