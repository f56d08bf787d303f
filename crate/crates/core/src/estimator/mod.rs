//! Single-shot kernel estimators, Monte Carlo means, seminorms and variance
//! bounds.

pub mod quadrature;

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pauli::{Observable, Pauli, PauliString};
use crate::sampling::{tetrahedral_group, MeasurementFrame, SamplerKind};

/// One frame and the per-qubit `+-1` outcomes observed in it.
#[derive(Clone, Debug, PartialEq)]
pub struct ShotRecord {
    pub frame: MeasurementFrame,
    pub outcomes: Vec<i8>,
}

impl ShotRecord {
    pub fn new(frame: MeasurementFrame, outcomes: Vec<i8>) -> Result<Self> {
        if frame.n_qubits() != outcomes.len() {
            return Err(Error::QubitMismatch {
                expected: frame.n_qubits(),
                found: outcomes.len(),
            });
        }
        if let Some(bad) = outcomes.iter().find(|&&m| m != 1 && m != -1) {
            return Err(Error::InvalidPlan(format!("outcome {bad} is not +-1")));
        }
        Ok(Self { frame, outcomes })
    }

    pub fn n_qubits(&self) -> usize {
        self.outcomes.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EstimateResult {
    pub value: f64,
    pub stderr: f64,
    pub n_shots: usize,
    pub kind: SamplerKind,
}

/// What the estimators need to know about one qubit in one shot.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QubitSample {
    pub direction: [f64; 3],
    /// Kernel weight: 1 for unweighted samplers.
    pub weight: f64,
    pub m: f64,
}

/// Random-access view of a set of shots.
pub trait ShotSource: Sync {
    fn n_qubits(&self) -> usize;
    fn kind(&self) -> SamplerKind;
    fn len(&self) -> usize;
    fn load(&self, index: usize, out: &mut [QubitSample]);

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Shot records tagged with the sampler that produced them.
pub struct Records<'a> {
    records: &'a [ShotRecord],
    kind: SamplerKind,
    n_qubits: usize,
}

impl<'a> Records<'a> {
    pub fn new(records: &'a [ShotRecord], kind: SamplerKind) -> Result<Self> {
        let first = records.first().ok_or(Error::EmptyShots)?;
        let n_qubits = first.n_qubits();
        for r in records {
            if r.n_qubits() != n_qubits {
                return Err(Error::QubitMismatch {
                    expected: n_qubits,
                    found: r.n_qubits(),
                });
            }
            check_frame_kind(&r.frame, kind)?;
        }
        Ok(Self {
            records,
            kind,
            n_qubits,
        })
    }
}

fn check_frame_kind(frame: &MeasurementFrame, kind: SamplerKind) -> Result<()> {
    if let Some(e) = frame.entries.iter().find(|e| e.kind() != kind) {
        return Err(Error::InvalidPlan(format!(
            "frame sampled as {} evaluated with the {kind} estimator",
            e.kind()
        )));
    }
    Ok(())
}

impl ShotSource for Records<'_> {
    fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    fn kind(&self) -> SamplerKind {
        self.kind
    }

    fn len(&self) -> usize {
        self.records.len()
    }

    fn load(&self, index: usize, out: &mut [QubitSample]) {
        let r = &self.records[index];
        for ((slot, e), &m) in out.iter_mut().zip(&r.frame.entries).zip(&r.outcomes) {
            *slot = QubitSample {
                direction: e.direction,
                weight: e.weight(),
                m: m as f64,
            };
        }
    }
}

/// Concatenation of several sources sharing qubit count and sampler.
pub struct ShotSet<S: ShotSource> {
    parts: Vec<S>,
    ends: Vec<usize>,
}

impl<S: ShotSource> ShotSet<S> {
    pub fn new(parts: impl IntoIterator<Item = S>) -> Result<Self> {
        let parts: Vec<S> = parts.into_iter().filter(|p| !p.is_empty()).collect();
        let first = parts.first().ok_or(Error::EmptyShots)?;
        let (q, kind) = (first.n_qubits(), first.kind());
        let mut ends = Vec::with_capacity(parts.len());
        let mut total = 0;
        for p in &parts {
            if p.n_qubits() != q {
                return Err(Error::QubitMismatch {
                    expected: q,
                    found: p.n_qubits(),
                });
            }
            if p.kind() != kind {
                return Err(Error::IncompatiblePlans(format!(
                    "mixed samplers {kind} and {}",
                    p.kind()
                )));
            }
            total += p.len();
            ends.push(total);
        }
        Ok(Self { parts, ends })
    }
}

impl<S: ShotSource> ShotSource for ShotSet<S> {
    fn n_qubits(&self) -> usize {
        self.parts[0].n_qubits()
    }

    fn kind(&self) -> SamplerKind {
        self.parts[0].kind()
    }

    fn len(&self) -> usize {
        *self.ends.last().unwrap_or(&0)
    }

    fn load(&self, index: usize, out: &mut [QubitSample]) {
        let part = self.ends.partition_point(|&e| e <= index);
        let start = if part == 0 { 0 } else { self.ends[part - 1] };
        self.parts[part].load(index - start, out);
    }
}

/// Running count, mean and sum of squared deviations.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let w = other.n as f64 / n as f64;
        self.mean += delta * w;
        self.m2 += other.m2 + delta * delta * self.n as f64 * w;
        self.n = n;
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }

    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Self {
        let mut m = Moments::default();
        for v in values {
            m.push(v);
        }
        m
    }
}

/// Shots per reduction chunk; chunks are merged in index order so the result
/// does not depend on the thread count.
pub const CHUNK: usize = 4096;

/// Per-shot statistics of `width` values computed by `f` from each shot.
pub fn reduce_shots<S, F>(src: &S, width: usize, f: F) -> Vec<Moments>
where
    S: ShotSource + ?Sized,
    F: Fn(&[QubitSample], &mut [f64]) + Sync,
{
    let q = src.n_qubits();
    reduce_indexed(
        src.len(),
        width,
        || vec![QubitSample::default(); q],
        |samples, i, values| {
            src.load(i, samples);
            f(samples, values);
        },
    )
}

/// Moments of `width` values produced for each index in `0..n`, with a
/// per-thread scratch value from `init`.
pub fn reduce_indexed<T, I, F>(n: usize, width: usize, init: I, f: F) -> Vec<Moments>
where
    I: Fn() -> T + Sync,
    F: Fn(&mut T, usize, &mut [f64]) + Sync,
{
    let chunks: Vec<Vec<Moments>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map_init(
            || (init(), vec![0.0; width]),
            |(scratch, values), c| {
                let mut acc = vec![Moments::default(); width];
                for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                    f(scratch, i, values);
                    for (m, &v) in acc.iter_mut().zip(values.iter()) {
                        m.push(v);
                    }
                }
                acc
            },
        )
        .collect();
    let mut total = vec![Moments::default(); width];
    for c in &chunks {
        for (t, m) in total.iter_mut().zip(c) {
            t.merge(m);
        }
    }
    total
}

/// Single-qubit kernel factor: 1 for the identity, `3 m n_axis` otherwise.
#[inline]
fn factor(s: &QubitSample, p: Pauli) -> f64 {
    match p {
        Pauli::I => 1.0,
        Pauli::X => 3.0 * s.m * s.direction[0],
        Pauli::Y => 3.0 * s.m * s.direction[1],
        Pauli::Z => 3.0 * s.m * s.direction[2],
    }
}

/// Single-shot estimator of one Pauli string from loaded samples.
#[inline]
pub fn term_value(samples: &[QubitSample], labels: &[Pauli], weighted: bool) -> f64 {
    let mut v = 1.0;
    if weighted {
        for (s, &p) in samples.iter().zip(labels) {
            v *= factor(s, p) * s.weight;
        }
    } else {
        for (s, &p) in samples.iter().zip(labels) {
            if p != Pauli::I {
                v *= factor(s, p);
            }
        }
    }
    v
}

pub fn single_shot(shot: &ShotRecord, p: &PauliString, kind: SamplerKind) -> Result<f64> {
    if shot.n_qubits() != p.n_qubits() {
        return Err(Error::QubitMismatch {
            expected: shot.n_qubits(),
            found: p.n_qubits(),
        });
    }
    check_frame_kind(&shot.frame, kind)?;
    let samples: Vec<QubitSample> = shot
        .frame
        .entries
        .iter()
        .zip(&shot.outcomes)
        .map(|(e, &m)| QubitSample {
            direction: e.direction,
            weight: e.weight(),
            m: m as f64,
        })
        .collect();
    Ok(term_value(&samples, p.labels(), kind.is_weighted()))
}

fn check_observable<S: ShotSource + ?Sized>(src: &S, o: &Observable) -> Result<()> {
    if src.len() < 2 {
        return Err(if src.is_empty() {
            Error::EmptyShots
        } else {
            Error::TooFewShots {
                needed: 2,
                got: src.len(),
            }
        });
    }
    if o.n_qubits() != src.n_qubits() {
        return Err(Error::QubitMismatch {
            expected: src.n_qubits(),
            found: o.n_qubits(),
        });
    }
    Ok(())
}

/// Sample mean of `sum_i c_i R[P_i]` over all shots.
pub fn estimate<S: ShotSource + ?Sized>(src: &S, o: &Observable) -> Result<EstimateResult> {
    check_observable(src, o)?;
    let terms: Vec<(Vec<Pauli>, f64)> = o.terms().map(|(p, c)| (p.labels().to_vec(), c)).collect();
    let weighted = src.kind().is_weighted();
    let m = reduce_shots(src, 1, |s, out| {
        out[0] = terms.iter().map(|(l, c)| c * term_value(s, l, weighted)).sum();
    })[0];
    Ok(EstimateResult {
        value: m.mean,
        stderr: m.stderr(),
        n_shots: m.n as usize,
        kind: src.kind(),
    })
}

/// Independent means of several Pauli strings from the same shots.
pub fn estimate_terms<S: ShotSource + ?Sized>(src: &S, terms: &[PauliString]) -> Result<Vec<Moments>> {
    if src.is_empty() {
        return Err(Error::EmptyShots);
    }
    if let Some(p) = terms.iter().find(|p| p.n_qubits() != src.n_qubits()) {
        return Err(Error::QubitMismatch {
            expected: src.n_qubits(),
            found: p.n_qubits(),
        });
    }
    let labels: Vec<Vec<Pauli>> = terms.iter().map(|p| p.labels().to_vec()).collect();
    let weighted = src.kind().is_weighted();
    Ok(reduce_shots(src, labels.len(), |s, out| {
        for (o, l) in out.iter_mut().zip(&labels) {
            *o = term_value(s, l, weighted);
        }
    }))
}

pub fn mean_estimate(shots: &[ShotRecord], o: &Observable, kind: SamplerKind) -> Result<EstimateResult> {
    if shots.is_empty() {
        return Err(Error::EmptyShots);
    }
    estimate(&Records::new(shots, kind)?, o)
}

/// Whether two strings act with different non-identity Paulis on some qubit.
fn conflict(a: &PauliString, b: &PauliString) -> bool {
    a.labels()
        .iter()
        .zip(b.labels())
        .any(|(&x, &y)| x != Pauli::I && y != Pauli::I && x != y)
}

/// `sqrt(sum_{i,k != 0} 3^{r_ik} Delta_ik |c_i||c_k|)` for uniform sampling.
pub fn seminorm_spherical(o: &Observable) -> f64 {
    let terms: Vec<(&PauliString, f64)> = o.terms().filter(|(p, c)| !p.is_identity() && *c != 0.0).collect();
    let mut total = 0.0;
    for (pi, ci) in &terms {
        for (pk, ck) in &terms {
            if conflict(pi, pk) {
                continue;
            }
            let r = pi
                .labels()
                .iter()
                .zip(pk.labels())
                .filter(|(&x, &y)| x != Pauli::I && y != Pauli::I)
                .count();
            total += 3f64.powi(r as i32) * ci.abs() * ck.abs();
        }
    }
    total.sqrt()
}

/// Per-qubit bound on `<R'_1[sigma_a] R'_1[sigma_b]>` for pole-concentrated
/// sampling.
pub fn pole_constant(a: Pauli, b: Pauli) -> f64 {
    let p2 = PI * PI;
    match (a, b) {
        (Pauli::I, Pauli::I) => p2 / 8.0,
        (Pauli::X, Pauli::X) | (Pauli::Y, Pauli::Y) => 27.0 * p2 / 64.0,
        (Pauli::Z, Pauli::Z) => 9.0 * p2 / 32.0,
        (Pauli::I, Pauli::X) | (Pauli::X, Pauli::I) | (Pauli::I, Pauli::Y) | (Pauli::Y, Pauli::I) => 9.0 * p2 / 64.0,
        (Pauli::I, Pauli::Z) | (Pauli::Z, Pauli::I) => 3.0 * p2 / 32.0,
        _ => 0.0,
    }
}

/// `Delta'_{ik}`: the product of per-qubit constants.
pub fn delta_prime(a: &PauliString, b: &PauliString) -> f64 {
    a.labels()
        .iter()
        .zip(b.labels())
        .map(|(&x, &y)| pole_constant(x, y))
        .product::<f64>()
        .abs()
}

/// `sqrt(sum_{i,k} |c_i||c_k| Delta'_ik)`, identity terms included.
pub fn seminorm_pole(o: &Observable) -> f64 {
    let terms: Vec<(&PauliString, f64)> = o.terms().filter(|(_, c)| *c != 0.0).collect();
    let mut total = 0.0;
    for (pi, ci) in &terms {
        for (pk, ck) in &terms {
            total += ci.abs() * ck.abs() * delta_prime(pi, pk);
        }
    }
    total.sqrt()
}

pub fn seminorm(o: &Observable, kind: SamplerKind) -> f64 {
    match kind {
        SamplerKind::PoleConcentrated => seminorm_pole(o),
        _ => seminorm_spherical(o),
    }
}

/// `||O||^2 / N` with the seminorm matching the sampler.
pub fn variance_bound(o: &Observable, kind: SamplerKind, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::TooFewShots { needed: 1, got: 0 });
    }
    Ok(seminorm(o, kind).powi(2) / n as f64)
}

/// `<R_1[sigma_r] R_1[sigma_s]>` for one qubit with Bloch vector `bloch`,
/// integrated over the sampler's measure (an exact group average for the
/// tetrahedral sampler, Gauss-Legendre quadrature otherwise).
pub fn second_moment_oracle(r: Pauli, s: Pauli, kind: SamplerKind, bloch: [f64; 3]) -> f64 {
    // sum_m p(m|n) f_r f_s with p(m|n) = (1 + m n.b)/2 and f = 1 or 3 m n_axis.
    let integrand = |n: [f64; 3], w: f64| -> f64 {
        let nb = n[0] * bloch[0] + n[1] * bloch[1] + n[2] * bloch[2];
        [1.0, -1.0]
            .iter()
            .map(|&m| {
                let f = |p: Pauli| match p.axis() {
                    None => w,
                    Some(a) => 3.0 * m * n[a] * w,
                };
                0.5 * (1.0 + m * nb) * f(r) * f(s)
            })
            .sum()
    };
    let dir = |theta: f64, phi: f64| [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()];
    match kind {
        SamplerKind::Spherical => {
            quadrature::integrate_sphere_angles(|t, p| t.sin() / (4.0 * PI) * integrand(dir(t, p), 1.0))
        }
        SamplerKind::PoleConcentrated => {
            quadrature::integrate_sphere_angles(|t, p| integrand(dir(t, p), 0.5 * PI * t.sin()) / (2.0 * PI * PI))
        }
        SamplerKind::Tetrahedral => {
            tetrahedral_group()
                .iter()
                .map(|g| integrand(g.direction, 1.0))
                .sum::<f64>()
                / 12.0
        }
    }
}
