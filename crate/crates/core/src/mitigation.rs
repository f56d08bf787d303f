//! Readout-error mitigation: noisy term estimates divided by suppression
//! factors calibrated on `|0...0>`, plus ratio variances and shot budgets.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channels::Mask;
use crate::error::{Error, Result};
use crate::estimator::{estimate_terms, seminorm, Moments, ShotSource};
use crate::pauli::{Observable, Pauli, PauliString};
use crate::sampling::SamplerKind;

pub const DEFAULT_FLOOR: f64 = 0.01;
/// Prior for `Tr[rho P]` when budgeting without knowledge of the state.
pub const DEFAULT_PRIOR: f64 = 1.0;

/// A Monte Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n_shots: usize,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            stderr: 0.0,
            n_shots: 0,
        }
    }

    /// Variance of the mean.
    pub fn variance(&self) -> f64 {
        self.stderr * self.stderr
    }
}

impl From<Moments> for Estimate {
    fn from(m: Moments) -> Self {
        Self {
            value: m.mean,
            stderr: m.stderr(),
            n_shots: m.n as usize,
        }
    }
}

/// Noisy estimates `f(E, rho, P)` for each distinct term.
pub fn estimate_noisy_terms<S: ShotSource + ?Sized>(
    main: &S,
    terms: &[PauliString],
) -> Result<BTreeMap<PauliString, Estimate>> {
    let unique: Vec<PauliString> = terms.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let moments = estimate_terms(main, &unique)?;
    Ok(unique
        .into_iter()
        .zip(moments.into_iter().map(Estimate::from))
        .collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuppressionMode {
    #[default]
    PerMask,
    TensorProduct,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuppressionTable {
    pub mode: SuppressionMode,
    pub n_qubits: usize,
    pub kind: SamplerKind,
    pub per_mask: BTreeMap<Mask, Estimate>,
    pub per_qubit: BTreeMap<usize, Estimate>,
}

impl SuppressionTable {
    /// Suppression estimate for a mask. Tensor mode multiplies per-qubit
    /// factors and propagates their errors to first order.
    pub fn lookup(&self, mask: &Mask) -> Result<Estimate> {
        if mask.n_qubits() != self.n_qubits {
            return Err(Error::QubitMismatch {
                expected: self.n_qubits,
                found: mask.n_qubits(),
            });
        }
        if mask.is_identity() {
            return Ok(Estimate::exact(1.0));
        }
        match self.mode {
            SuppressionMode::PerMask => self
                .per_mask
                .get(mask)
                .copied()
                .ok_or_else(|| Error::MissingMask(mask.to_string())),
            SuppressionMode::TensorProduct => {
                let mut value = 1.0;
                let mut rel_var = 0.0;
                let mut n_shots = usize::MAX;
                for q in mask.qubits() {
                    let f = self
                        .per_qubit
                        .get(&q)
                        .ok_or_else(|| Error::MissingMask(mask.to_string()))?;
                    value *= f.value;
                    if f.value != 0.0 {
                        rel_var += f.variance() / (f.value * f.value);
                    }
                    n_shots = n_shots.min(f.n_shots);
                }
                Ok(Estimate {
                    value,
                    stderr: value.abs() * rel_var.sqrt(),
                    n_shots,
                })
            }
        }
    }
}

/// Per-mask calibration: the randomized estimate of each mask's Z-string on
/// the calibration shots. Duplicate masks are estimated once.
pub fn estimate_suppression<S: ShotSource + ?Sized>(cal: &S, masks: &[Mask]) -> Result<SuppressionTable> {
    if let Some(m) = masks.iter().find(|m| m.n_qubits() != cal.n_qubits()) {
        return Err(Error::QubitMismatch {
            expected: cal.n_qubits(),
            found: m.n_qubits(),
        });
    }
    let unique: Vec<Mask> = masks.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let strings: Vec<PauliString> = unique.iter().map(Mask::z_string).collect();
    let moments = estimate_terms(cal, &strings)?;
    Ok(SuppressionTable {
        mode: SuppressionMode::PerMask,
        n_qubits: cal.n_qubits(),
        kind: cal.kind(),
        per_mask: unique
            .into_iter()
            .zip(moments.into_iter().map(Estimate::from))
            .collect(),
        per_qubit: BTreeMap::new(),
    })
}

/// Tensor-product calibration: one single-qubit Z factor per listed qubit.
pub fn estimate_suppression_tensor<S: ShotSource + ?Sized>(cal: &S, qubits: &[usize]) -> Result<SuppressionTable> {
    let q = cal.n_qubits();
    if let Some(&bad) = qubits.iter().find(|&&j| j >= q) {
        return Err(Error::QubitMismatch {
            expected: q,
            found: bad + 1,
        });
    }
    let unique: Vec<usize> = qubits.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let strings: Vec<PauliString> = unique.iter().map(|&j| PauliString::single(q, j, Pauli::Z)).collect();
    let moments = estimate_terms(cal, &strings)?;
    Ok(SuppressionTable {
        mode: SuppressionMode::TensorProduct,
        n_qubits: q,
        kind: cal.kind(),
        per_mask: BTreeMap::new(),
        per_qubit: unique
            .into_iter()
            .zip(moments.into_iter().map(Estimate::from))
            .collect(),
    })
}

/// Masks needed to mitigate an observable.
pub fn masks_for(o: &Observable) -> Vec<Mask> {
    o.strings()
        .iter()
        .map(Mask::from_pauli)
        .filter(|m| !m.is_identity())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Second-order variance of `noisy / supp` from `(value, variance)` pairs.
pub fn ratio_variance(noisy: (f64, f64), supp: (f64, f64)) -> Result<f64> {
    let (n, var_n) = noisy;
    let (s, var_s) = supp;
    if s == 0.0 {
        return Err(Error::ZeroSuppression);
    }
    // (n/s)^2 (var_n/n^2 + var_s/s^2), written to stay finite at n = 0.
    Ok(var_n / (s * s) + n * n * var_s / (s * s * s * s))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TermResult {
    pub term: PauliString,
    pub coefficient: f64,
    pub raw: Estimate,
    pub suppression: Estimate,
    pub mitigated: f64,
    pub stderr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Budget {
    pub n_main: usize,
    pub n_cal: usize,
    pub b: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MitigationResult {
    pub terms: Vec<TermResult>,
    pub value: f64,
    pub stderr: f64,
    /// Unmitigated `sum_i c_i f(E, rho, P_i)` for comparison.
    pub raw_value: f64,
    pub raw_stderr: f64,
    pub mode: SuppressionMode,
    pub budget: Option<Budget>,
}

/// Divides each noisy term by its mask's suppression. The total's error
/// treats terms as independent.
pub fn mitigate(
    noisy: &BTreeMap<PauliString, Estimate>,
    table: &SuppressionTable,
    o: &Observable,
    floor: f64,
) -> Result<MitigationResult> {
    if o.n_qubits() != table.n_qubits {
        return Err(Error::QubitMismatch {
            expected: table.n_qubits,
            found: o.n_qubits(),
        });
    }
    let mut terms = Vec::with_capacity(o.len());
    let (mut value, mut var, mut raw_value, mut raw_var) = (0.0, 0.0, 0.0, 0.0);
    for (p, c) in o.terms() {
        let raw = *noisy
            .get(p)
            .ok_or_else(|| Error::InvalidPlan(format!("no noisy estimate for term {p}")))?;
        let suppression = table.lookup(&Mask::from_pauli(p))?;
        if suppression.value.abs() < floor {
            return Err(Error::Unmitigable {
                term: p.to_string(),
                suppression: suppression.value,
                floor,
            });
        }
        let mitigated = raw.value / suppression.value;
        let term_var = ratio_variance((raw.value, raw.variance()), (suppression.value, suppression.variance()))?;
        value += c * mitigated;
        var += c * c * term_var;
        raw_value += c * raw.value;
        raw_var += c * c * raw.variance();
        terms.push(TermResult {
            term: p.clone(),
            coefficient: c,
            raw,
            suppression,
            mitigated,
            stderr: term_var.sqrt(),
        });
    }
    Ok(MitigationResult {
        terms,
        value,
        stderr: var.sqrt(),
        raw_value,
        raw_stderr: raw_var.sqrt(),
        mode: table.mode,
        budget: None,
    })
}

impl MitigationResult {
    pub fn with_budget(mut self, budget: Budget) -> Self {
        self.budget = Some(budget);
        self
    }

    /// `term,coefficient,raw,raw_stderr,suppression,suppression_stderr,mitigated,stderr`
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "term",
            "coefficient",
            "raw",
            "raw_stderr",
            "suppression",
            "suppression_stderr",
            "mitigated",
            "stderr",
        ])?;
        for t in &self.terms {
            w.write_record([
                t.term.to_string(),
                fmt(t.coefficient),
                fmt(t.raw.value),
                fmt(t.raw.stderr),
                fmt(t.suppression.value),
                fmt(t.suppression.stderr),
                fmt(t.mitigated),
                fmt(t.stderr),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("mitigation results serialize")
    }
}

/// Fixed-precision float formatting shared by CSV writers so output is
/// byte-stable.
pub fn fmt(x: f64) -> String {
    let s = format!("{x:.9}");
    if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// `b = N_c / N_rho = Tr[rho P]^2 ||M||^2 / ||P||^2`, raised to `min_ratio`.
pub fn optimal_shot_ratio(p: &PauliString, expected: f64, kind: SamplerKind, min_ratio: f64) -> Result<f64> {
    if !(expected.abs() <= 1.0) {
        return Err(Error::InvalidProbability {
            name: "expected".into(),
            value: expected,
        });
    }
    let (np, nm) = norms_sq(p, kind)?;
    Ok((expected * expected * nm / np).max(min_ratio))
}

/// `(||P||^2, ||M||^2)` with the seminorm matching the sampler.
fn norms_sq(p: &PauliString, kind: SamplerKind) -> Result<(f64, f64)> {
    let np = seminorm(&Observable::single(p.clone(), 1.0)?, kind).powi(2);
    let nm = seminorm(&Observable::single(Mask::from_pauli(p).z_string(), 1.0)?, kind).powi(2);
    if np == 0.0 {
        return Err(Error::IdentityMask);
    }
    Ok((np, nm))
}

/// Total shots at the budgeting optimum:
/// `2 ||P||^2 / (eps^2 f^2) * (1 + Tr^2 ||M||^2 / ||P||^2)`.
pub fn total_shots(epsilon: f64, p: &PauliString, suppression: f64, expected: f64, kind: SamplerKind) -> Result<u64> {
    check_budget_inputs(epsilon, suppression)?;
    let (np, nm) = norms_sq(p, kind)?;
    let n = 2.0 * np / (epsilon * epsilon * suppression * suppression) * (1.0 + expected * expected * nm / np);
    Ok(n.ceil() as u64)
}

/// Total shots `N_rho (1 + b)` meeting `epsilon` at an arbitrary ratio `b`.
pub fn total_shots_for_ratio(
    epsilon: f64,
    p: &PauliString,
    suppression: f64,
    expected: f64,
    b: f64,
    kind: SamplerKind,
) -> Result<u64> {
    check_budget_inputs(epsilon, suppression)?;
    if !(b > 0.0) {
        return Err(Error::Config(format!("shot ratio b = {b} must be positive")));
    }
    let (np, nm) = norms_sq(p, kind)?;
    let n_rho = (np + expected * expected * nm / b) / (epsilon * epsilon * suppression * suppression);
    Ok((n_rho * (1.0 + b)).ceil() as u64)
}

fn check_budget_inputs(epsilon: f64, suppression: f64) -> Result<()> {
    if suppression == 0.0 {
        return Err(Error::ZeroSuppression);
    }
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("target stderr {epsilon} must be positive")));
    }
    Ok(())
}

/// Splits `n_total` shots into `(N_rho, N_c)` with `N_c / N_rho = b`.
pub fn split_shots(n_total: usize, b: f64) -> (usize, usize) {
    let n_rho = ((n_total as f64) / (1.0 + b)).round() as usize;
    let n_rho = n_rho.clamp(1, n_total.saturating_sub(1).max(1));
    (n_rho, n_total - n_rho)
}
