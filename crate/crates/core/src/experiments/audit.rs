//! Oracle audit: analytic constants, the 2-design identity, suppression
//! cross-checks and generator sanity, each reported as a pass/fail row.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::channels::{Mask, QuantumChannel, ReadoutErrorModel};
use crate::error::Result;
use crate::estimator::second_moment_oracle;
use crate::linalg::{self, c, CMatrix};
use crate::mitigation::fmt;
use crate::pauli::{gaussian, Pauli};
use crate::sampling::{
    haar_two_copy_average, tetra_two_copy_average, virtual_z_decompose, virtual_z_unitary, Lfsr, SamplerKind,
};

use super::{csv_bytes, Artifact, ExperimentConfig, RunOutput};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// `|computed - reference| <= tolerance`
    Close,
    /// `computed > reference`
    Above,
    /// `computed < reference`
    Below,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditRow {
    pub check: String,
    pub computed: f64,
    pub reference: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
    pub pass: bool,
}

impl AuditRow {
    fn new(check: impl Into<String>, computed: f64, reference: f64, tolerance: f64, comparison: Comparison) -> Self {
        let pass = match comparison {
            Comparison::Close => (computed - reference).abs() <= tolerance,
            Comparison::Above => computed > reference,
            Comparison::Below => computed < reference,
        };
        Self {
            check: check.into(),
            computed,
            reference,
            tolerance,
            comparison,
            pass,
        }
    }

    fn close(check: impl Into<String>, computed: f64, reference: f64, tolerance: f64) -> Self {
        Self::new(check, computed, reference, tolerance, Comparison::Close)
    }
}

fn second_moment_rows(rows: &mut Vec<AuditRow>) {
    let up = [0.0, 0.0, 1.0];
    let paulis = [Pauli::X, Pauli::Y, Pauli::Z];
    for kind in [SamplerKind::Spherical, SamplerKind::Tetrahedral] {
        for &r in &paulis {
            for &s in &paulis {
                let reference = if r == s { 3.0 } else { 0.0 };
                rows.push(AuditRow::close(
                    format!("{kind} second moment ({},{})", r.symbol(), s.symbol()),
                    second_moment_oracle(r, s, kind, up),
                    reference,
                    1e-6,
                ));
            }
        }
    }
    let pole = SamplerKind::PoleConcentrated;
    let p2 = PI * PI;
    for (r, s, reference) in [
        (Pauli::Z, Pauli::Z, 9.0 * p2 / 32.0),
        (Pauli::X, Pauli::X, 27.0 * p2 / 64.0),
        (Pauli::Y, Pauli::Y, 27.0 * p2 / 64.0),
        (Pauli::I, Pauli::I, p2 / 8.0),
        // Tr[rho Z] = 1 on |0>.
        (Pauli::I, Pauli::Z, 3.0 * p2 / 32.0),
    ] {
        rows.push(AuditRow::close(
            format!("pole_concentrated second moment ({},{})", r.symbol(), s.symbol()),
            second_moment_oracle(r, s, pole, up),
            reference,
            1e-6,
        ));
    }
}

fn two_design_row(rows: &mut Vec<AuditRow>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let g = CMatrix::from_fn(4, 4, |_, _| c(gaussian(&mut rng), gaussian(&mut rng)));
        let rho = &g * g.adjoint();
        let rho = &rho / rho.trace();
        worst = worst.max(linalg::max_abs_diff(
            &tetra_two_copy_average(&rho),
            &haar_two_copy_average(&rho),
        ));
    }
    rows.push(AuditRow::close("tetrahedral 2-design max deviation", worst, 0.0, 1e-9));
}

fn suppression_rows(rows: &mut Vec<AuditRow>) -> Result<()> {
    let z = Mask::single(1, 0);
    let twirl_gap = {
        let e = QuantumChannel::pauli_channel([0.7, 0.2, 0.05, 0.05])?;
        (e.suppression_factor(&z)? - e.twirled_suppression(&z)?).abs()
    };
    rows.push(AuditRow::new(
        "twirl vs readout gap (asymmetric Pauli channel)",
        twirl_gap,
        1e-2,
        0.0,
        Comparison::Above,
    ));
    let depol_gap = {
        let e = QuantumChannel::depolarizing(1, 0.3)?;
        (e.suppression_factor(&z)? - e.twirled_suppression(&z)?).abs()
    };
    rows.push(AuditRow::close(
        "twirl vs readout gap (depolarizing)",
        depol_gap,
        0.0,
        1e-9,
    ));

    let flip = QuantumChannel::bit_flip(0.1)?;
    rows.push(AuditRow::close(
        "bit flip p=0.1 suppression",
        flip.suppression_factor(&z)?,
        0.8,
        1e-12,
    ));
    let pair = ReadoutErrorModel::TensorFlip { p: vec![0.03, 0.03] }.as_channel(2)?;
    rows.push(AuditRow::close(
        "tensor flips p=0.03 mask ZZ suppression",
        pair.suppression_factor(&"ZZ".parse()?)?,
        0.94 * 0.94,
        1e-12,
    ));
    let asym = ReadoutErrorModel::TensorConfusion {
        p01: vec![0.03],
        p10: vec![0.07],
    }
    .as_channel(1)?;
    rows.push(AuditRow::close(
        "asymmetric confusion 0.03/0.07 suppression",
        asym.suppression_factor(&z)?,
        0.9,
        1e-12,
    ));
    let ptm = QuantumChannel::depolarizing(1, 0.2)?.ptm_element(&"X".parse()?, &"X".parse()?)?;
    rows.push(AuditRow::close("depolarizing p=0.2 PTM (X,X)", ptm, 0.8, 1e-12));
    Ok(())
}

fn generator_rows(rows: &mut Vec<AuditRow>, seed: u64) -> Result<()> {
    let mut g = Lfsr::new(0xACE1)?;
    let start = g.state();
    let mut period = 0u64;
    loop {
        g.step();
        period += 1;
        if g.state() == start || period > 1 << 17 {
            break;
        }
    }
    rows.push(AuditRow::close("16-bit LFSR period", period as f64, 65535.0, 0.0));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let axis = [gaussian(&mut rng), gaussian(&mut rng), gaussian(&mut rng)];
        let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        let v = linalg::rotation(axis.map(|x| x / norm), 4.0 * gaussian(&mut rng));
        let (a, b) = virtual_z_decompose(&v);
        let got = linalg::measured_direction(&virtual_z_unitary(a, b));
        let want = linalg::measured_direction(&v);
        worst = (0..3).fold(worst, |m, k| m.max((got[k] - want[k]).abs()));
    }
    rows.push(AuditRow::close(
        "virtual-Z decomposition direction error",
        worst,
        0.0,
        1e-10,
    ));
    Ok(())
}

pub fn run_audit(cfg: &ExperimentConfig) -> Result<Vec<AuditRow>> {
    let mut rows = Vec::new();
    second_moment_rows(&mut rows);
    two_design_row(&mut rows, cfg.sub_seed(0xA0));
    suppression_rows(&mut rows)?;
    generator_rows(&mut rows, cfg.sub_seed(0xA1))?;
    Ok(rows)
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let rows = run_audit(cfg)?;
    let failures = rows.iter().filter(|r| !r.pass).count();
    let csv = csv_bytes(
        &["check", "computed", "reference", "tolerance", "comparison", "verdict"],
        rows.iter().map(|r| {
            [
                r.check.clone(),
                fmt(r.computed),
                fmt(r.reference),
                format!("{:e}", r.tolerance),
                format!("{:?}", r.comparison).to_lowercase(),
                if r.pass { "pass" } else { "fail" }.to_string(),
            ]
        }),
    )?;
    Ok(RunOutput {
        artifacts: vec![Artifact::new("audit.csv", csv)],
        failures,
    })
}
