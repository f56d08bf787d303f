//! Mitigated estimate of one configured observable.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::MAX_DENSE_QUBITS;
use crate::mitigation::{
    estimate_noisy_terms, estimate_suppression, estimate_suppression_tensor, fmt, masks_for, mitigate, Budget,
    MitigationResult, SuppressionMode,
};
use crate::pauli::expectation_exact;
use crate::simulator::{run_schedule, shot_set, write_batches, Origin, ShotBatch};

use super::{csv_bytes, Artifact, ExperimentConfig, RunOutput};

#[derive(Clone, Debug, Serialize)]
pub struct EstimateReport {
    pub result: MitigationResult,
    /// Exact value when the state is small enough to build densely.
    pub exact: Option<f64>,
}

pub fn run_estimate(cfg: &ExperimentConfig) -> Result<(EstimateReport, Vec<ShotBatch>)> {
    let est = cfg
        .estimate
        .as_ref()
        .ok_or_else(|| Error::Config("estimate experiment needs an [estimate] section".into()))?;
    let o = est.observable(cfg.qubits)?;
    let main = cfg.main_plan(est.state.clone(), cfg.sampler.into(), 0xE5)?;
    let cal = cfg.calibration_plan(&main);
    let batches = run_schedule(&main, &cal, cfg.schedule)?;
    let main_src = shot_set(&batches, Origin::Main)?;
    let cal_src = shot_set(&batches, Origin::Calibration)?;
    let noisy = estimate_noisy_terms(&main_src, &o.strings())?;
    let table = match cfg.mitigation.mode {
        SuppressionMode::PerMask => estimate_suppression(&cal_src, &masks_for(&o))?,
        SuppressionMode::TensorProduct => {
            let qubits: Vec<usize> = masks_for(&o)
                .iter()
                .flat_map(|m| m.qubits().collect::<Vec<_>>())
                .collect();
            estimate_suppression_tensor(&cal_src, &qubits)?
        }
    };
    let result = mitigate(&noisy, &table, &o, cfg.mitigation.floor)?.with_budget(Budget {
        n_main: cfg.shots.main,
        n_cal: cfg.shots.calibration,
        b: cfg.shots.calibration as f64 / cfg.shots.main as f64,
    });
    let exact = if cfg.qubits <= MAX_DENSE_QUBITS {
        Some(expectation_exact(&est.state.density_matrix(cfg.qubits)?, &o)?)
    } else {
        None
    };
    Ok((EstimateReport { result, exact }, batches))
}

pub fn run(cfg: &ExperimentConfig, dump_frames: bool) -> Result<RunOutput> {
    let (report, batches) = run_estimate(cfg)?;
    let mut terms = Vec::new();
    report.result.write_csv(&mut terms)?;
    let r = &report.result;
    let summary = csv_bytes(
        &[
            "mitigated",
            "stderr",
            "raw",
            "raw_stderr",
            "exact",
            "n_main",
            "n_calibration",
        ],
        [[
            fmt(r.value),
            fmt(r.stderr),
            fmt(r.raw_value),
            fmt(r.raw_stderr),
            report.exact.map(fmt).unwrap_or_default(),
            cfg.shots.main.to_string(),
            cfg.shots.calibration.to_string(),
        ]],
    )?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Config(e.to_string()))?;
    let mut artifacts = vec![
        Artifact::new("estimate_terms.csv", terms),
        Artifact::new("estimate.csv", summary),
        Artifact::new("estimate.json", json.into_bytes()),
    ];
    if dump_frames {
        let mut bytes = Vec::new();
        write_batches(&batches, &mut bytes)?;
        artifacts.push(Artifact::new("shots.csv", bytes));
    }
    Ok(RunOutput { artifacts, failures: 0 })
}
