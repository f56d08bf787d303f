//! Pairwise Pearson correlations of readout on `|0...0>`.
//!
//! Direct readout correlates the raw `+-1` outcomes. Randomized methods
//! correlate each qubit's single-shot Z estimator `3 m n_z` (times the kernel
//! weight for pole-concentrated frames), which reduces to the bit correlation
//! when every frame is `+z`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::estimator::{reduce_indexed, Moments};
use crate::mitigation::fmt;
use crate::simulator::{run_plan, Scheme, ShotBatch, StateSpec};

use super::{csv_bytes, plot, Artifact, ExperimentConfig, RunOutput};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub method: Scheme,
    pub n_shots: usize,
    /// Symmetric with unit diagonal.
    pub matrix: Vec<Vec<f64>>,
    /// `2 / sqrt(N)`: the two-sigma band of the null distribution.
    pub band: f64,
    pub histogram: Vec<HistogramBin>,
}

impl CorrelationReport {
    pub fn n_qubits(&self) -> usize {
        self.matrix.len()
    }

    pub fn off_diagonal(&self) -> Vec<(usize, usize, f64)> {
        let q = self.n_qubits();
        (0..q)
            .flat_map(|a| (a + 1..q).map(move |b| (a, b)))
            .map(|(a, b)| (a, b, self.matrix[a][b]))
            .collect()
    }

    /// Fraction of off-diagonal entries inside the null band.
    pub fn within_band(&self) -> f64 {
        let pairs = self.off_diagonal();
        pairs.iter().filter(|(_, _, c)| c.abs() < self.band).count() as f64 / pairs.len() as f64
    }
}

/// Per-shot per-qubit values fed to the Pearson estimate.
fn qubit_values(batch: &ShotBatch, i: usize, out: &mut [f64]) {
    let q = batch.n_qubits;
    match batch.scheme.sampler() {
        None => {
            for (j, v) in out.iter_mut().enumerate().take(q) {
                *v = batch.outcome(i, j) as f64;
            }
        }
        Some(kind) => {
            for (j, v) in out.iter_mut().enumerate().take(q) {
                let (n, w) = batch.code(i, j).direction(kind, batch.lfsr_width);
                *v = 3.0 * batch.outcome(i, j) as f64 * n[2] * w;
            }
        }
    }
}

/// Pearson matrix over all shots of `batches`. A qubit with zero variance
/// gets zero correlation with every other qubit.
pub fn pearson_matrix(batches: &[ShotBatch]) -> Vec<Vec<f64>> {
    let q = batches.first().map_or(0, |b| b.n_qubits);
    let pairs: Vec<(usize, usize)> = (0..q).flat_map(|a| (a + 1..q).map(move |b| (a, b))).collect();
    let width = q + pairs.len();
    let mut total = vec![Moments::default(); width];
    for b in batches {
        let part = reduce_indexed(
            b.len(),
            width,
            || vec![0.0; q],
            |x, i, out| {
                qubit_values(b, i, x);
                out[..q].copy_from_slice(x);
                for (k, &(a, c)) in pairs.iter().enumerate() {
                    out[q + k] = x[a] * x[c];
                }
            },
        );
        for (t, m) in total.iter_mut().zip(&part) {
            t.merge(m);
        }
    }
    let mut matrix = vec![vec![0.0; q]; q];
    for (j, row) in matrix.iter_mut().enumerate() {
        row[j] = 1.0;
    }
    for (k, &(a, c)) in pairs.iter().enumerate() {
        let (ma, mc) = (&total[a], &total[c]);
        let n = ma.n as f64;
        let denom = (ma.m2 / n * mc.m2 / n).sqrt();
        let cov = total[q + k].mean - ma.mean * mc.mean;
        let r = if denom > 0.0 {
            (cov / denom).clamp(-1.0, 1.0)
        } else {
            0.0
        };
        matrix[a][c] = r;
        matrix[c][a] = r;
    }
    matrix
}

pub fn histogram(values: &[f64], bins: usize, half_width: f64) -> Vec<HistogramBin> {
    let step = 2.0 * half_width / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|k| HistogramBin {
            lo: -half_width + k as f64 * step,
            hi: -half_width + (k + 1) as f64 * step,
            count: 0,
        })
        .collect();
    for &v in values {
        let k = (((v + half_width) / step).floor().max(0.0) as usize).min(bins - 1);
        out[k].count += 1;
    }
    out
}

/// One method's report.
pub fn correlate(cfg: &ExperimentConfig, method: Scheme) -> Result<CorrelationReport> {
    let tag = 0xC0_0000 + method as u64;
    let plan = cfg.main_plan(StateSpec::Zero, method, tag)?;
    let batches = run_plan(&plan)?;
    let matrix = pearson_matrix(&batches);
    let n = cfg.shots.main;
    let band = 2.0 / (n as f64).sqrt();
    let mut report = CorrelationReport {
        method,
        n_shots: n,
        matrix,
        band,
        histogram: Vec::new(),
    };
    let values: Vec<f64> = report.off_diagonal().iter().map(|t| t.2).collect();
    let extent = values.iter().fold(2.0 * band, |m, v| m.max(v.abs()));
    report.histogram = histogram(&values, cfg.correlations.bins, extent);
    Ok(report)
}

pub fn run_correlations(cfg: &ExperimentConfig) -> Result<Vec<CorrelationReport>> {
    cfg.correlations
        .methods
        .par_iter()
        .map(|&m| correlate(cfg, m))
        .collect()
}

pub fn run(cfg: &ExperimentConfig, plots: bool) -> Result<RunOutput> {
    let reports = run_correlations(cfg)?;
    let mut artifacts = Vec::new();
    for r in &reports {
        let name = r.method.name();
        let rows = r
            .off_diagonal()
            .into_iter()
            .map(|(a, b, c)| [a.to_string(), b.to_string(), fmt(c)]);
        artifacts.push(Artifact::new(
            format!("correlations_{name}.csv"),
            csv_bytes(&["qubit_a", "qubit_b", "pearson"], rows)?,
        ));
        let rows = r.histogram.iter().map(|h| [fmt(h.lo), fmt(h.hi), h.count.to_string()]);
        artifacts.push(Artifact::new(
            format!("correlations_{name}_histogram.csv"),
            csv_bytes(&["bin_lo", "bin_hi", "count"], rows)?,
        ));
        if plots {
            artifacts.push(Artifact::new(
                format!("correlations_{name}.svg"),
                plot::histogram_svg(&format!("{name} pairwise Pearson"), &r.histogram, r.band).into_bytes(),
            ));
        }
    }
    let rows = reports.iter().map(|r| {
        let max = r.off_diagonal().iter().fold(0.0f64, |m, t| m.max(t.2.abs()));
        [
            r.method.name().to_string(),
            r.n_shots.to_string(),
            fmt(r.band),
            fmt(max),
            fmt(r.within_band()),
        ]
    });
    artifacts.push(Artifact::new(
        "correlations_summary.csv",
        csv_bytes(&["method", "n_shots", "band", "max_abs", "fraction_within_band"], rows)?,
    ));
    Ok(RunOutput { artifacts, failures: 0 })
}
