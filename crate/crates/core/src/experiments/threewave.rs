//! The three-wave interaction restricted to its four-level conserved sector,
//! simulated on two qubits.
//!
//! Sector basis `|k> = |n1 = 3 - k, n2 = k, n3 = k>`, encoded as the two-qubit
//! basis state with index `k` (qubit 0 is the high bit).

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::linalg::{self, c, CMatrix, MatrixSpec};
use crate::mitigation::{
    estimate_noisy_terms, estimate_suppression, estimate_suppression_tensor, fmt, masks_for, mitigate, SuppressionMode,
};
use crate::pauli::{decompose, Observable, PauliString};
use crate::simulator::{run_plan, run_schedule, shot_set, Origin, Scheme, StateSpec};

use super::{csv_bytes, plot, Artifact, ExperimentConfig, RunOutput};

pub const LEVELS: usize = 4;

/// `H = i g a1^dag a2 a3 - i g a1 a2^dag a3^dag` on the sector, with real `g`.
pub fn three_wave_hamiltonian(g: f64) -> CMatrix {
    let mut h = CMatrix::zeros(LEVELS, LEVELS);
    for k in 1..LEVELS {
        // <k-1| a1^dag a2 a3 |k> = sqrt(4 - k) * k
        let amp = (k as f64) * ((LEVELS - k) as f64).sqrt();
        h[(k - 1, k)] = c(0.0, g * amp);
        h[(k, k - 1)] = c(0.0, -g * amp);
    }
    h
}

/// `exp(-i H t) |0>`.
pub fn evolve(g: f64, t: f64) -> Vec<Complex64> {
    if t == 0.0 || g == 0.0 {
        let mut psi = vec![Complex64::new(0.0, 0.0); LEVELS];
        psi[0] = Complex64::new(1.0, 0.0);
        return psi;
    }
    let u = linalg::unitary_propagator(&three_wave_hamiltonian(g), t);
    (0..LEVELS).map(|k| u[(k, 0)]).collect()
}

pub fn exact_populations(g: f64, t: f64) -> [f64; LEVELS] {
    let psi = evolve(g, t);
    std::array::from_fn(|k| psi[k].norm_sqr())
}

/// `|k><k|` on two qubits as a Pauli sum.
pub fn projector(k: usize) -> Result<Observable> {
    let mut m = CMatrix::zeros(LEVELS, LEVELS);
    m[(k, k)] = c(1.0, 0.0);
    decompose(&m)
}

pub fn state_label(k: usize) -> String {
    format!("{:02b}", k)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PopulationRow {
    pub t: f64,
    pub state: String,
    pub exact: f64,
    pub direct: f64,
    pub direct_stderr: f64,
    pub mitigated: f64,
    pub stderr: f64,
}

/// Exact, direct and mitigated populations at one time point.
pub fn run_point(cfg: &ExperimentConfig, index: usize, t: f64) -> Result<Vec<PopulationRow>> {
    let tw = &cfg.threewave;
    let psi = evolve(tw.g, t);
    let rho = CMatrix::from_fn(LEVELS, LEVELS, |a, b| psi[a] * psi[b].conj());
    let state = StateSpec::Dense {
        matrix: MatrixSpec::from_matrix(&rho),
    };
    let exact = exact_populations(tw.g, t);

    let direct_plan = cfg.main_plan(state.clone(), Scheme::Direct, 0xD1_0000 + index as u64)?;
    let direct = run_plan(&direct_plan)?;
    let mut counts = [0usize; LEVELS];
    for b in &direct {
        for i in 0..b.len() {
            counts[b.bits(i) as usize] += 1;
        }
    }
    let n_direct = cfg.shots.main as f64;

    let main = cfg.main_plan(state, cfg.sampler.into(), 0x3A_0000 + index as u64)?;
    let cal = cfg.calibration_plan(&main);
    let batches = run_schedule(&main, &cal, cfg.schedule)?;
    let main_src = shot_set(&batches, Origin::Main)?;
    let cal_src = shot_set(&batches, Origin::Calibration)?;

    let projectors: Vec<Observable> = (0..LEVELS).map(projector).collect::<Result<_>>()?;
    let terms: Vec<PauliString> = projectors.iter().flat_map(|o| o.strings()).collect();
    let noisy = estimate_noisy_terms(&main_src, &terms)?;
    let table = match cfg.mitigation.mode {
        SuppressionMode::PerMask => {
            let masks: Vec<_> = projectors.iter().flat_map(masks_for).collect();
            estimate_suppression(&cal_src, &masks)?
        }
        SuppressionMode::TensorProduct => estimate_suppression_tensor(&cal_src, &[0, 1])?,
    };

    let mut rows = Vec::with_capacity(LEVELS);
    for (k, o) in projectors.iter().enumerate() {
        let m = mitigate(&noisy, &table, o, cfg.mitigation.floor)?;
        let p = counts[k] as f64 / n_direct;
        let mitigated = if tw.clip { m.value.clamp(0.0, 1.0) } else { m.value };
        rows.push(PopulationRow {
            t,
            state: state_label(k),
            exact: exact[k],
            direct: p,
            direct_stderr: (p * (1.0 - p) / n_direct).sqrt(),
            mitigated,
            stderr: m.stderr,
        });
    }
    Ok(rows)
}

pub fn run_threewave(cfg: &ExperimentConfig) -> Result<Vec<PopulationRow>> {
    let grid = cfg.threewave.grid();
    let per_point: Vec<Vec<PopulationRow>> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &t)| run_point(cfg, i, t))
        .collect::<Result<_>>()?;
    Ok(per_point.into_iter().flatten().collect())
}

/// Mean absolute errors `(direct, mitigated)` against the exact populations.
pub fn mean_abs_errors(rows: &[PopulationRow]) -> (f64, f64) {
    let n = rows.len() as f64;
    let d = rows.iter().map(|r| (r.direct - r.exact).abs()).sum::<f64>() / n;
    let m = rows.iter().map(|r| (r.mitigated - r.exact).abs()).sum::<f64>() / n;
    (d, m)
}

pub fn run(cfg: &ExperimentConfig, plots: bool) -> Result<RunOutput> {
    let rows = run_threewave(cfg)?;
    let csv = csv_bytes(
        &["t", "state", "exact", "direct", "mitigated", "stderr"],
        rows.iter().map(|r| {
            [
                fmt(r.t),
                r.state.clone(),
                fmt(r.exact),
                fmt(r.direct),
                fmt(r.mitigated),
                fmt(r.stderr),
            ]
        }),
    )?;
    let (direct_err, mitigated_err) = mean_abs_errors(&rows);
    let summary = csv_bytes(
        &["points", "mean_abs_error_direct", "mean_abs_error_mitigated"],
        [[
            cfg.threewave.grid().len().to_string(),
            fmt(direct_err),
            fmt(mitigated_err),
        ]],
    )?;
    let mut artifacts = vec![
        Artifact::new("threewave.csv", csv),
        Artifact::new("threewave_summary.csv", summary),
    ];
    if plots {
        let mut series: BTreeMap<String, Vec<(f64, f64, f64, f64)>> = BTreeMap::new();
        for r in &rows {
            series
                .entry(r.state.clone())
                .or_default()
                .push((r.t, r.exact, r.direct, r.mitigated));
        }
        artifacts.push(Artifact::new(
            "threewave.svg",
            plot::timeseries_svg(&series).into_bytes(),
        ));
    }
    Ok(RunOutput { artifacts, failures: 0 })
}
