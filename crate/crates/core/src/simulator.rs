//! Shot-level simulation of randomized readout with injected readout errors.
//!
//! A plan is executed batch by batch. Frames come from per-qubit LFSR streams
//! seeded per batch; outcomes come from a separate ChaCha stream positioned by
//! `(batch, shot)`, so results do not depend on how shots are spread across
//! threads.

use std::f64::consts::FRAC_1_SQRT_2;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{correlated_pair_map, QuantumChannel, ReadoutErrorModel};
use crate::error::{Error, Result};
use crate::estimator::{QubitSample, ShotRecord, ShotSet, ShotSource};
use crate::linalg::{self, c, CMatrix, Mat2, MatrixSpec, MAX_DENSE_QUBITS, ONE, ZERO};
use crate::pauli::{single_qubit_state, DensityMatrix};
use crate::sampling::{batch_streams, splitmix64, FrameCode, FrameEntry, MeasurementFrame, SamplerKind};

/// How each shot is measured: in the computational basis, or through one of
/// the random-frame samplers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Direct,
    Spherical,
    PoleConcentrated,
    Tetrahedral,
}

impl Scheme {
    pub fn sampler(self) -> Option<SamplerKind> {
        match self {
            Scheme::Direct => None,
            Scheme::Spherical => Some(SamplerKind::Spherical),
            Scheme::PoleConcentrated => Some(SamplerKind::PoleConcentrated),
            Scheme::Tetrahedral => Some(SamplerKind::Tetrahedral),
        }
    }

    pub fn name(self) -> &'static str {
        match self.sampler() {
            None => "direct",
            Some(k) => k.name(),
        }
    }
}

impl From<SamplerKind> for Scheme {
    fn from(k: SamplerKind) -> Self {
        match k {
            SamplerKind::Spherical => Scheme::Spherical,
            SamplerKind::PoleConcentrated => Scheme::PoleConcentrated,
            SamplerKind::Tetrahedral => Scheme::Tetrahedral,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Main,
    Calibration,
}

/// A gate in a preparation circuit applied to `|0...0>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub name: String,
    pub qubits: Vec<usize>,
    #[serde(default)]
    pub params: Vec<f64>,
}

impl Gate {
    pub fn new(name: &str, qubits: &[usize], params: &[f64]) -> Self {
        Self {
            name: name.to_string(),
            qubits: qubits.to_vec(),
            params: params.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateSpec {
    Zero,
    /// Per-qubit Bloch vectors.
    Product {
        bloch: Vec<[f64; 3]>,
    },
    Circuit {
        gates: Vec<Gate>,
    },
    Dense {
        matrix: MatrixSpec,
    },
}

impl StateSpec {
    /// The exact density matrix (for oracles; capped at the dense limit).
    pub fn density_matrix(&self, n_qubits: usize) -> Result<DensityMatrix> {
        match self {
            StateSpec::Zero => DensityMatrix::zero_state(n_qubits),
            StateSpec::Product { bloch } => {
                check_len("bloch", bloch.len(), n_qubits)?;
                DensityMatrix::product(bloch)
            }
            StateSpec::Circuit { gates } => {
                let psi = run_circuit(n_qubits, gates)?;
                DensityMatrix::from_state_vector(&psi)
            }
            StateSpec::Dense { matrix } => {
                let m = matrix
                    .to_matrix()
                    .ok_or_else(|| Error::InvalidDensityMatrix("ragged matrix".into()))?;
                let rho = DensityMatrix::new(m)?;
                if rho.n_qubits() != n_qubits {
                    return Err(Error::QubitMismatch {
                        expected: n_qubits,
                        found: rho.n_qubits(),
                    });
                }
                Ok(rho)
            }
        }
    }
}

fn check_len(what: &str, len: usize, n_qubits: usize) -> Result<()> {
    if len != n_qubits {
        return Err(Error::InvalidPlan(format!(
            "{what} has {len} entries for {n_qubits} qubits"
        )));
    }
    Ok(())
}

/// State vector produced by a gate sequence on `|0...0>`.
pub fn run_circuit(n_qubits: usize, gates: &[Gate]) -> Result<Vec<Complex64>> {
    if n_qubits == 0 || n_qubits > MAX_DENSE_QUBITS {
        return Err(Error::TooManyQubits {
            what: "preparation circuit",
            max: MAX_DENSE_QUBITS,
            requested: n_qubits,
        });
    }
    let mut psi = vec![ZERO; 1 << n_qubits];
    psi[0] = ONE;
    for g in gates {
        if let Some(&q) = g.qubits.iter().find(|&&q| q >= n_qubits) {
            return Err(Error::InvalidPlan(format!(
                "gate {} on qubit {q} of {n_qubits}",
                g.name
            )));
        }
        let param = |i: usize| {
            g.params
                .get(i)
                .copied()
                .ok_or_else(|| Error::InvalidPlan(format!("gate {} needs parameter {i}", g.name)))
        };
        let single = match g.name.to_ascii_lowercase().as_str() {
            "h" => Some(Mat2::new(
                c(FRAC_1_SQRT_2, 0.0),
                c(FRAC_1_SQRT_2, 0.0),
                c(FRAC_1_SQRT_2, 0.0),
                c(-FRAC_1_SQRT_2, 0.0),
            )),
            "x" => Some(crate::pauli::Pauli::X.matrix()),
            "y" => Some(crate::pauli::Pauli::Y.matrix()),
            "z" => Some(crate::pauli::Pauli::Z.matrix()),
            "s" => Some(Mat2::new(ONE, ZERO, ZERO, c(0.0, 1.0))),
            "sdg" => Some(Mat2::new(ONE, ZERO, ZERO, c(0.0, -1.0))),
            "t" => Some(Mat2::new(
                ONE,
                ZERO,
                ZERO,
                Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4),
            )),
            "rx" => Some(linalg::rx(param(0)?)),
            "ry" => Some(linalg::rotation([0.0, 1.0, 0.0], param(0)?)),
            "rz" => Some(linalg::rz(param(0)?)),
            _ => None,
        };
        let arity = if single.is_some() { 1 } else { 2 };
        if g.qubits.len() != arity || (arity == 2 && g.qubits[0] == g.qubits[1]) {
            return Err(Error::InvalidPlan(format!(
                "gate {} applied to qubits {:?}",
                g.name, g.qubits
            )));
        }
        let bit = |q: usize| 1usize << (n_qubits - 1 - q);
        if let Some(u) = single {
            let b = bit(g.qubits[0]);
            for i in 0..psi.len() {
                if i & b == 0 {
                    let (a0, a1) = (psi[i], psi[i | b]);
                    psi[i] = u[(0, 0)] * a0 + u[(0, 1)] * a1;
                    psi[i | b] = u[(1, 0)] * a0 + u[(1, 1)] * a1;
                }
            }
            continue;
        }
        let (b0, b1) = (bit(g.qubits[0]), bit(g.qubits[1]));
        match g.name.to_ascii_lowercase().as_str() {
            "cx" | "cnot" => {
                for i in 0..psi.len() {
                    if i & b0 != 0 && i & b1 == 0 {
                        psi.swap(i, i | b1);
                    }
                }
            }
            "cz" => {
                for (i, a) in psi.iter_mut().enumerate() {
                    if i & b0 != 0 && i & b1 != 0 {
                        *a = -*a;
                    }
                }
            }
            "swap" => {
                for i in 0..psi.len() {
                    if i & b0 != 0 && i & b1 == 0 {
                        psi.swap(i, (i & !b0) | b1);
                    }
                }
            }
            other => return Err(Error::InvalidPlan(format!("unknown gate {other:?}"))),
        }
    }
    Ok(psi)
}

/// Linear drift: error strengths are multiplied by `1 + rate * clock`, where
/// the clock runs from 0 to 1 over the schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    pub rate: f64,
}

impl Drift {
    pub fn factor(&self, clock: f64) -> f64 {
        1.0 + self.rate * clock
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub n_qubits: usize,
    pub state: StateSpec,
    pub n_shots: usize,
    pub scheme: Scheme,
    #[serde(default)]
    pub error_model: ReadoutErrorModel,
    /// One nonzero LFSR seed per qubit.
    pub seeds: Vec<u64>,
    pub outcome_seed: u64,
    pub batch_size: usize,
    #[serde(default)]
    pub drift: Option<Drift>,
    pub origin: Origin,
    /// Per-qubit bit-flip probability during state preparation.
    #[serde(default)]
    pub prep_error: f64,
    pub lfsr_width: u32,
}

impl ExperimentPlan {
    pub const DEFAULT_BATCH: usize = 10_000;
    pub const DEFAULT_WIDTH: u32 = 32;

    pub fn new(n_qubits: usize, state: StateSpec, n_shots: usize, scheme: Scheme, seed: u64) -> Self {
        Self {
            n_qubits,
            state,
            n_shots,
            scheme,
            error_model: ReadoutErrorModel::None,
            seeds: seeds_from(seed, n_qubits),
            outcome_seed: splitmix64(seed ^ 0x6F75_7463_6F6D_6573),
            batch_size: Self::DEFAULT_BATCH,
            drift: None,
            origin: Origin::Main,
            prep_error: 0.0,
            lfsr_width: Self::DEFAULT_WIDTH,
        }
    }

    pub fn with_error_model(mut self, model: ReadoutErrorModel) -> Self {
        self.error_model = model;
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size;
        self
    }

    pub fn with_drift(mut self, drift: Drift) -> Self {
        self.drift = Some(drift);
        self
    }

    pub fn with_lfsr_width(mut self, width: u32) -> Self {
        self.lfsr_width = width;
        self
    }

    /// Matching calibration plan: `|0...0>`, same sampler, channel and drift,
    /// with independent seeds.
    pub fn calibration(&self, n_shots: usize) -> Self {
        Self {
            n_qubits: self.n_qubits,
            state: StateSpec::Zero,
            n_shots,
            scheme: self.scheme,
            error_model: self.error_model.clone(),
            seeds: self.seeds.iter().map(|&s| nonzero(splitmix64(s ^ 0xCA11))).collect(),
            outcome_seed: splitmix64(self.outcome_seed ^ 0xCA11),
            batch_size: self.batch_size,
            drift: self.drift,
            origin: Origin::Calibration,
            prep_error: 0.0,
            lfsr_width: self.lfsr_width,
        }
    }

    pub fn n_batches(&self) -> usize {
        self.n_shots.div_ceil(self.batch_size.max(1))
    }

    pub fn batch_len(&self, batch_index: usize) -> usize {
        let start = batch_index * self.batch_size;
        self.batch_size.min(self.n_shots.saturating_sub(start))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 || self.n_qubits > 64 {
            return Err(Error::InvalidPlan(format!("{} qubits not in 1..=64", self.n_qubits)));
        }
        if self.n_shots == 0 {
            return Err(Error::InvalidPlan("n_shots must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidPlan("batch_size must be at least 1".into()));
        }
        check_len("seeds", self.seeds.len(), self.n_qubits)?;
        if self.seeds.contains(&0) {
            return Err(Error::ZeroSeed);
        }
        if crate::sampling::maximal_taps(self.lfsr_width).is_none() {
            return Err(Error::InvalidLfsr(format!("unsupported width {}", self.lfsr_width)));
        }
        if !(0.0..=1.0).contains(&self.prep_error) {
            return Err(Error::InvalidProbability {
                name: "prep_error".into(),
                value: self.prep_error,
            });
        }
        self.error_model.validate(self.n_qubits)?;
        if let Some(d) = self.drift {
            self.error_model.scaled(d.factor(1.0))?.validate(self.n_qubits)?;
        }
        match &self.state {
            StateSpec::Zero => Ok(()),
            StateSpec::Product { bloch } => {
                check_len("bloch", bloch.len(), self.n_qubits)?;
                if bloch.iter().any(|r| r.iter().map(|x| x * x).sum::<f64>() > 1.0 + 1e-12) {
                    return Err(Error::InvalidDensityMatrix("Bloch vector longer than 1".into()));
                }
                Ok(())
            }
            s => s.density_matrix(self.n_qubits).map(|_| ()),
        }
    }
}

/// Per-qubit LFSR seeds derived from one master seed.
pub fn seeds_from(seed: u64, n_qubits: usize) -> Vec<u64> {
    (0..n_qubits as u64)
        .map(|j| nonzero(splitmix64(seed.wrapping_add(j.wrapping_mul(0x9E37)))))
        .collect()
}

fn nonzero(x: u64) -> u64 {
    if x == 0 {
        1
    } else {
        x
    }
}

/// The shots of one execution batch, stored compactly: raw LFSR words per
/// qubit and the observed basis index per shot (qubit 0 is the high bit).
#[derive(Clone, Debug, PartialEq)]
pub struct ShotBatch {
    pub batch_index: usize,
    pub origin: Origin,
    pub scheme: Scheme,
    pub n_qubits: usize,
    pub lfsr_width: u32,
    /// Drift clock in `[0, 1)` this batch ran at.
    pub clock: f64,
    codes: Vec<FrameCode>,
    outcomes: Vec<u64>,
}

impl ShotBatch {
    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// Observed basis index of shot `i`.
    pub fn bits(&self, i: usize) -> u64 {
        self.outcomes[i]
    }

    /// `+1` for bit 0, `-1` for bit 1.
    pub fn outcome(&self, i: usize, qubit: usize) -> i8 {
        if (self.outcomes[i] >> (self.n_qubits - 1 - qubit)) & 1 == 0 {
            1
        } else {
            -1
        }
    }

    pub fn code(&self, i: usize, qubit: usize) -> FrameCode {
        self.codes[i * self.n_qubits + qubit]
    }

    pub fn frame(&self, i: usize) -> MeasurementFrame {
        match self.scheme.sampler() {
            None => MeasurementFrame::computational(self.n_qubits),
            Some(kind) => MeasurementFrame {
                entries: (0..self.n_qubits)
                    .map(|j| self.code(i, j).decode(kind, self.lfsr_width))
                    .collect(),
            },
        }
    }

    pub fn record(&self, i: usize) -> ShotRecord {
        ShotRecord {
            frame: self.frame(i),
            outcomes: (0..self.n_qubits).map(|j| self.outcome(i, j)).collect(),
        }
    }

    /// Estimator view of this batch; direct batches have no random frames.
    pub fn shots(&self) -> Result<BatchShots<'_>> {
        let kind = self
            .scheme
            .sampler()
            .ok_or_else(|| Error::InvalidPlan("direct-readout batches carry no random frames".into()))?;
        Ok(BatchShots { batch: self, kind })
    }
}

pub struct BatchShots<'a> {
    batch: &'a ShotBatch,
    kind: SamplerKind,
}

impl ShotSource for BatchShots<'_> {
    fn n_qubits(&self) -> usize {
        self.batch.n_qubits
    }

    fn kind(&self) -> SamplerKind {
        self.kind
    }

    fn len(&self) -> usize {
        self.batch.len()
    }

    #[inline]
    fn load(&self, index: usize, out: &mut [QubitSample]) {
        let b = self.batch;
        let bits = b.outcomes[index];
        let q = b.n_qubits;
        for (j, slot) in out.iter_mut().enumerate() {
            let (direction, weight) = b.codes[index * q + j].direction(self.kind, b.lfsr_width);
            let m = if (bits >> (q - 1 - j)) & 1 == 0 { 1.0 } else { -1.0 };
            *slot = QubitSample { direction, weight, m };
        }
    }
}

/// All shots of the given batches with the requested origin, as one source.
pub fn shot_set(batches: &[ShotBatch], origin: Origin) -> Result<ShotSet<BatchShots<'_>>> {
    let parts = batches
        .iter()
        .filter(|b| b.origin == origin)
        .map(ShotBatch::shots)
        .collect::<Result<Vec<_>>>()?;
    ShotSet::new(parts)
}

/// Applies the frame rotations, then `channel`, and samples a basis outcome.
/// This dense reference path backs the batch simulator's tests.
pub fn noisy_measure<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    frame: &MeasurementFrame,
    channel: &QuantumChannel,
    rng: &mut R,
) -> Result<Vec<i8>> {
    let q = rho.n_qubits();
    if frame.n_qubits() != q || channel.n_qubits() != q {
        return Err(Error::QubitMismatch {
            expected: q,
            found: if frame.n_qubits() != q {
                frame.n_qubits()
            } else {
                channel.n_qubits()
            },
        });
    }
    let factors: Vec<CMatrix> = frame.entries.iter().map(|e| linalg::mat2_to_dense(&e.gate())).collect();
    let u = linalg::kron_all(&factors);
    let rotated = &u * rho.matrix() * u.adjoint();
    let out = channel.apply_operator(&rotated)?;
    let probs: Vec<f64> = (0..out.nrows()).map(|y| out[(y, y)].re).collect();
    check_probabilities(&probs)?;
    let y = sample_index(&probs, rng.random::<f64>());
    Ok((0..q)
        .map(|j| if linalg::qubit_bit(y, j, q) == 0 { 1 } else { -1 })
        .collect())
}

fn check_probabilities(probs: &[f64]) -> Result<()> {
    if let Some(&p) = probs.iter().find(|&&p| !(-1e-9..=1.0 + 1e-9).contains(&p)) {
        return Err(Error::ProbabilityOutOfRange(p));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::ProbabilityOutOfRange(total));
    }
    Ok(())
}

#[inline]
fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Readout error specialised for fast sampling.
enum Readout {
    Ideal,
    PerQubit { p01: Vec<f64>, p10: Vec<f64> },
    Pair { bits: [u32; 2], map: [[f64; 4]; 4] },
    Full(Vec<Vec<f64>>),
    Coherent(Vec<Mat2>),
    Povm(Vec<CMatrix>),
}

impl Readout {
    fn compile(model: &ReadoutErrorModel, q: usize) -> Result<Self> {
        Ok(match model {
            ReadoutErrorModel::None => Readout::Ideal,
            ReadoutErrorModel::TensorFlip { p } => Readout::PerQubit {
                p01: p.clone(),
                p10: p.clone(),
            },
            ReadoutErrorModel::TensorConfusion { p01, p10 } => Readout::PerQubit {
                p01: p01.clone(),
                p10: p10.clone(),
            },
            ReadoutErrorModel::CorrelatedFlip {
                qubits,
                joint,
                p01,
                p10,
            } => Readout::Pair {
                bits: [(q - 1 - qubits[0]) as u32, (q - 1 - qubits[1]) as u32],
                map: correlated_pair_map(*joint, *p01, *p10),
            },
            ReadoutErrorModel::Confusion { matrix } => {
                let d = matrix.len();
                Readout::Full((0..d).map(|x| (0..d).map(|y| matrix[y][x]).collect()).collect())
            }
            ReadoutErrorModel::Coherent { angles } => {
                Readout::Coherent(angles.iter().map(|&a| linalg::rx(a)).collect())
            }
            ReadoutErrorModel::Kraus { .. } => Readout::Povm(model.as_channel(q)?.povm_effects()),
        })
    }

    /// Classical corruption of an ideal outcome.
    #[inline]
    fn corrupt(&self, y: u64, q: usize, rng: &mut ChaCha8Rng) -> u64 {
        match self {
            Readout::PerQubit { p01, p10 } => {
                let mut out = y;
                for j in 0..q {
                    let shift = q - 1 - j;
                    let bit = (y >> shift) & 1;
                    let p = if bit == 0 { p01[j] } else { p10[j] };
                    if rng.random::<f64>() < p {
                        out ^= 1 << shift;
                    }
                }
                out
            }
            Readout::Pair { bits, map } => {
                let x = (((y >> bits[0]) & 1) << 1 | ((y >> bits[1]) & 1)) as usize;
                let u = rng.random::<f64>();
                let mut acc = 0.0;
                let mut obs = 3;
                for (k, row) in map.iter().enumerate() {
                    acc += row[x];
                    if u < acc {
                        obs = k;
                        break;
                    }
                }
                let cleared = y & !((1 << bits[0]) | (1 << bits[1]));
                cleared | ((obs as u64 >> 1) << bits[0]) | ((obs as u64 & 1) << bits[1])
            }
            Readout::Full(cols) => sample_index(&cols[y as usize], rng.random::<f64>()) as u64,
            Readout::Ideal | Readout::Coherent(_) | Readout::Povm(_) => y,
        }
    }
}

enum Prepared {
    Product(Vec<[f64; 3]>),
    Dense(Vec<Complex64>),
}

fn prepare(plan: &ExperimentPlan, dense_needed: bool) -> Result<Prepared> {
    let q = plan.n_qubits;
    let flip = plan.prep_error;
    // A bit flip with probability p maps (x, y, z) to (x, (1-2p) y, (1-2p) z).
    let product = match &plan.state {
        StateSpec::Zero => Some(vec![[0.0, 0.0, 1.0]; q]),
        StateSpec::Product { bloch } => Some(bloch.clone()),
        _ => None,
    };
    if let (Some(bloch), false) = (&product, dense_needed) {
        let s = 1.0 - 2.0 * flip;
        return Ok(Prepared::Product(
            bloch.iter().map(|r| [r[0], s * r[1], s * r[2]]).collect(),
        ));
    }
    let rho = match product {
        Some(bloch) => {
            let factors: Vec<CMatrix> = bloch.iter().map(|&r| single_qubit_state(r)).collect();
            linalg::kron_all(&factors)
        }
        None => plan.state.density_matrix(q)?.matrix().clone(),
    };
    let mut buf = linalg::to_row_major(&rho);
    if flip > 0.0 {
        let x = crate::pauli::Pauli::X.matrix();
        for j in 0..q {
            let mut flipped = buf.clone();
            linalg::conjugate_qubit(&mut flipped, q, j, &x);
            for (a, b) in buf.iter_mut().zip(&flipped) {
                *a = *a * (1.0 - flip) + b * flip;
            }
        }
    }
    Ok(Prepared::Dense(buf))
}

/// u32 words of the outcome stream reserved per shot.
fn words_per_shot(q: usize) -> u128 {
    4 * q as u128 + 8
}

fn outcome_rng(plan: &ExperimentPlan, batch_index: usize) -> ChaCha8Rng {
    let tag = match plan.origin {
        Origin::Main => 0x4D41_494E,
        Origin::Calibration => 0x4341_4C42,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(plan.outcome_seed ^ tag));
    rng.set_stream(batch_index as u64);
    rng
}

/// Executes one batch of `plan` at drift clock `clock`.
pub fn run_batch(plan: &ExperimentPlan, batch_index: usize, clock: f64) -> Result<ShotBatch> {
    let q = plan.n_qubits;
    let n = plan.batch_len(batch_index);
    if n == 0 {
        return Err(Error::InvalidPlan(format!(
            "batch {batch_index} is past the end of the plan"
        )));
    }
    let model = match plan.drift {
        Some(d) => plan.error_model.scaled(d.factor(clock))?,
        None => plan.error_model.clone(),
    };
    let readout = Readout::compile(&model, q)?;
    let dense_needed = matches!(readout, Readout::Povm(_));
    let prepared = prepare(plan, dense_needed)?;
    let kind = plan.scheme.sampler();

    let mut codes = Vec::new();
    if let Some(kind) = kind {
        codes = vec![FrameCode::default(); n * q];
        let mut streams = batch_streams(&plan.seeds, batch_index as u64, plan.lfsr_width)?;
        for (j, g) in streams.iter_mut().enumerate() {
            for i in 0..n {
                codes[i * q + j] = FrameCode::draw(kind, g);
            }
        }
    }

    let base = outcome_rng(plan, batch_index);
    let stride = words_per_shot(q);
    let width = plan.lfsr_width;
    let mut outcomes = vec![0u64; n];
    const SIM_CHUNK: usize = 1024;
    outcomes
        .par_chunks_mut(SIM_CHUNK)
        .enumerate()
        .map_init(
            || (base.clone(), Scratch::new(q, &prepared)),
            |(rng, scratch), (chunk, out)| -> Result<()> {
                for (k, slot) in out.iter_mut().enumerate() {
                    let i = chunk * SIM_CHUNK + k;
                    rng.set_word_pos(i as u128 * stride);
                    let shot_codes = if codes.is_empty() {
                        &[][..]
                    } else {
                        &codes[i * q..(i + 1) * q]
                    };
                    *slot = simulate_shot(&prepared, &readout, kind, width, shot_codes, q, rng, scratch)?;
                }
                Ok(())
            },
        )
        .collect::<Result<Vec<()>>>()?;

    Ok(ShotBatch {
        batch_index,
        origin: plan.origin,
        scheme: plan.scheme,
        n_qubits: q,
        lfsr_width: width,
        clock,
        codes,
        outcomes,
    })
}

struct Scratch {
    rho: Vec<Complex64>,
    probs: Vec<f64>,
}

impl Scratch {
    fn new(q: usize, prepared: &Prepared) -> Self {
        match prepared {
            Prepared::Product(_) => Self {
                rho: Vec::new(),
                probs: Vec::new(),
            },
            Prepared::Dense(buf) => Self {
                rho: buf.clone(),
                probs: vec![0.0; 1 << q],
            },
        }
    }
}

fn entry_for(kind: Option<SamplerKind>, codes: &[FrameCode], j: usize, width: u32) -> Option<FrameEntry> {
    kind.map(|k| codes[j].decode(k, width))
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn simulate_shot(
    prepared: &Prepared,
    readout: &Readout,
    kind: Option<SamplerKind>,
    width: u32,
    codes: &[FrameCode],
    q: usize,
    rng: &mut ChaCha8Rng,
    scratch: &mut Scratch,
) -> Result<u64> {
    let ideal = match prepared {
        Prepared::Product(bloch) => {
            let mut y = 0u64;
            for (j, r) in bloch.iter().enumerate() {
                let n = match (readout, kind) {
                    (Readout::Coherent(rots), _) => {
                        let u = entry_for(kind, codes, j, width).map_or(Mat2::identity(), |e| e.gate());
                        linalg::measured_direction(&(rots[j] * u))
                    }
                    (_, Some(k)) => codes[j].direction(k, width).0,
                    (_, None) => [0.0, 0.0, 1.0],
                };
                let p0 = 0.5 * (1.0 + n[0] * r[0] + n[1] * r[1] + n[2] * r[2]);
                if !(-1e-9..=1.0 + 1e-9).contains(&p0) {
                    return Err(Error::ProbabilityOutOfRange(p0));
                }
                let bit = (rng.random::<f64>() >= p0) as u64;
                y |= bit << (q - 1 - j);
            }
            y
        }
        Prepared::Dense(rho0) => {
            scratch.rho.copy_from_slice(rho0);
            for j in 0..q {
                let mut u = entry_for(kind, codes, j, width).map_or(Mat2::identity(), |e| e.gate());
                if let Readout::Coherent(rots) = readout {
                    u = rots[j] * u;
                }
                linalg::conjugate_qubit(&mut scratch.rho, q, j, &u);
            }
            let d = 1usize << q;
            match readout {
                Readout::Povm(effects) => {
                    for (p, e) in scratch.probs.iter_mut().zip(effects) {
                        // Tr[E rho] with rho row-major.
                        let mut acc = ZERO;
                        for a in 0..d {
                            for b in 0..d {
                                acc += e[(b, a)] * scratch.rho[a * d + b];
                            }
                        }
                        *p = acc.re;
                    }
                }
                _ => {
                    for (y, p) in scratch.probs.iter_mut().enumerate() {
                        *p = scratch.rho[y * d + y].re;
                    }
                }
            }
            check_probabilities(&scratch.probs)?;
            sample_index(&scratch.probs, rng.random::<f64>()) as u64
        }
    };
    Ok(readout.corrupt(ideal, q, rng))
}

/// Runs every batch of a plan; the drift clock is `batch / n_batches`.
pub fn run_plan(plan: &ExperimentPlan) -> Result<Vec<ShotBatch>> {
    plan.validate()?;
    let nb = plan.n_batches();
    (0..nb).map(|b| run_batch(plan, b, b as f64 / nb as f64)).collect()
}

/// Order in which main and calibration batches execute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Interleaved,
    CalibrationFirst,
}

/// Batch origins in execution order. The interleaved order is a
/// ratio-preserving round robin: a main batch goes next whenever main is not
/// ahead of its share.
pub fn schedule_order(n_main: usize, n_cal: usize, schedule: Schedule) -> Vec<Origin> {
    match schedule {
        Schedule::CalibrationFirst => {
            let mut v = vec![Origin::Calibration; n_cal];
            v.extend(std::iter::repeat_n(Origin::Main, n_main));
            v
        }
        Schedule::Interleaved => {
            let (mut m, mut cnt) = (0, 0);
            let mut v = Vec::with_capacity(n_main + n_cal);
            while m + cnt < n_main + n_cal {
                let main_next = cnt == n_cal || (m < n_main && (m + 1) * n_cal <= (cnt + 1) * n_main);
                if main_next {
                    v.push(Origin::Main);
                    m += 1;
                } else {
                    v.push(Origin::Calibration);
                    cnt += 1;
                }
            }
            v
        }
    }
}

/// Executes main and calibration plans on one shared drift clock.
pub fn run_schedule(main: &ExperimentPlan, cal: &ExperimentPlan, schedule: Schedule) -> Result<Vec<ShotBatch>> {
    main.validate()?;
    cal.validate()?;
    if main.n_qubits != cal.n_qubits {
        return Err(Error::IncompatiblePlans(format!(
            "{} vs {} qubits",
            main.n_qubits, cal.n_qubits
        )));
    }
    if main.scheme != cal.scheme {
        return Err(Error::IncompatiblePlans(format!(
            "{} vs {} sampling",
            main.scheme.name(),
            cal.scheme.name()
        )));
    }
    if main.origin != Origin::Main || cal.origin != Origin::Calibration {
        return Err(Error::IncompatiblePlans(
            "expected one main and one calibration plan".into(),
        ));
    }
    let order = schedule_order(main.n_batches(), cal.n_batches(), schedule);
    let total = order.len() as f64;
    let (mut m, mut k) = (0, 0);
    order
        .iter()
        .enumerate()
        .map(|(slot, origin)| {
            let clock = slot as f64 / total;
            match origin {
                Origin::Main => {
                    m += 1;
                    run_batch(main, m - 1, clock)
                }
                Origin::Calibration => {
                    k += 1;
                    run_batch(cal, k - 1, clock)
                }
            }
        })
        .collect()
}

pub fn interleave(main: &ExperimentPlan, cal: &ExperimentPlan) -> Result<Vec<ShotBatch>> {
    run_schedule(main, cal, Schedule::Interleaved)
}

/// Writes one row per shot: batch, origin, shot index, then per qubit the raw
/// LFSR words and the `+-1` outcome.
pub fn write_batches<W: std::io::Write>(batches: &[ShotBatch], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let q = batches.first().map_or(0, |b| b.n_qubits);
    let mut header = vec!["batch".to_string(), "origin".into(), "shot".into(), "scheme".into()];
    for j in 0..q {
        header.extend([format!("q{j}_w0"), format!("q{j}_w1"), format!("q{j}_m")]);
    }
    w.write_record(&header)?;
    for b in batches {
        let origin = match b.origin {
            Origin::Main => "main",
            Origin::Calibration => "calibration",
        };
        for i in 0..b.len() {
            let mut row = vec![
                b.batch_index.to_string(),
                origin.into(),
                i.to_string(),
                b.scheme.name().into(),
            ];
            for j in 0..b.n_qubits {
                let code = if b.codes.is_empty() {
                    FrameCode::default()
                } else {
                    b.code(i, j)
                };
                row.extend([code.w0.to_string(), code.w1.to_string(), b.outcome(i, j).to_string()]);
            }
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| Error::io("<shots>", e))?;
    Ok(())
}

pub fn write_batches_csv(batches: &[ShotBatch], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_batches(batches, std::io::BufWriter::new(file))
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{estimate, mean_estimate};
    use crate::pauli::{expectation_exact, Observable, PauliString};

    fn ps(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    #[test]
    fn noisy_measure_examples() {
        let zero = DensityMatrix::zero_state(1).unwrap();
        let frame = MeasurementFrame::computational(1);
        let mut rng = seeded_rng(1);
        let ideal = QuantumChannel::identity(1).unwrap();
        for _ in 0..100 {
            assert_eq!(noisy_measure(&zero, &frame, &ideal, &mut rng).unwrap(), vec![1]);
        }
        let flip = QuantumChannel::bit_flip(0.1).unwrap();
        let n = 100_000;
        let ones = (0..n)
            .filter(|_| noisy_measure(&zero, &frame, &flip, &mut rng).unwrap()[0] == -1)
            .count();
        let sigma = (n as f64 * 0.1 * 0.9).sqrt();
        assert!((ones as f64 - 0.1 * n as f64).abs() < 3.0 * sigma);
        let plus = DensityMatrix::product(&[[1.0, 0.0, 0.0]]).unwrap();
        let ups = (0..n)
            .filter(|_| noisy_measure(&plus, &frame, &ideal, &mut rng).unwrap()[0] == 1)
            .count();
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((ups as f64 - 0.5 * n as f64).abs() < 3.0 * sigma);
    }

    #[test]
    fn run_plan_is_deterministic() {
        for scheme in [
            Scheme::Direct,
            Scheme::Spherical,
            Scheme::PoleConcentrated,
            Scheme::Tetrahedral,
        ] {
            let plan = ExperimentPlan::new(2, StateSpec::Zero, 10, scheme, 42)
                .with_error_model(ReadoutErrorModel::TensorFlip { p: vec![0.1, 0.2] })
                .with_batch_size(3);
            let a = run_plan(&plan).unwrap();
            let b = run_plan(&plan).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.iter().map(ShotBatch::len).sum::<usize>(), 10);
            assert_eq!(a.len(), 4);
        }
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let plan = ExperimentPlan::new(
            3,
            StateSpec::Product {
                bloch: vec![[0.3, 0.2, 0.5]; 3],
            },
            5000,
            Scheme::Spherical,
            7,
        )
        .with_error_model(ReadoutErrorModel::TensorFlip { p: vec![0.05; 3] });
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| run_plan(&plan)).unwrap();
        let b = three.install(|| run_plan(&plan)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn product_and_dense_paths_agree_in_distribution() {
        // Same frames, different sampling code paths: compare means.
        let bloch = vec![[0.5, -0.3, 0.6], [0.0, 0.8, -0.2]];
        let product = ExperimentPlan::new(
            2,
            StateSpec::Product { bloch: bloch.clone() },
            200_000,
            Scheme::Spherical,
            3,
        );
        let rho = DensityMatrix::product(&bloch).unwrap();
        let dense = ExperimentPlan {
            state: StateSpec::Dense {
                matrix: MatrixSpec::from_matrix(rho.matrix()),
            },
            ..product.clone()
        };
        for p in ["XI", "IY", "ZZ", "XY"] {
            let o = Observable::single(ps(p), 1.0).unwrap();
            let exact = expectation_exact(&rho, &o).unwrap();
            for plan in [&product, &dense] {
                let batches = run_plan(plan).unwrap();
                let r = estimate(&shot_set(&batches, Origin::Main).unwrap(), &o).unwrap();
                assert!(
                    (r.value - exact).abs() < 4.5 * r.stderr,
                    "{p}: {} vs {exact} ({})",
                    r.value,
                    r.stderr
                );
            }
        }
    }

    #[test]
    fn records_round_trip_through_mean_estimate() {
        let plan = ExperimentPlan::new(1, StateSpec::Zero, 2000, Scheme::PoleConcentrated, 9);
        let batches = run_plan(&plan).unwrap();
        let records: Vec<ShotRecord> = batches.iter().flat_map(|b| (0..b.len()).map(|i| b.record(i))).collect();
        let o = Observable::single(ps("Z"), 1.0).unwrap();
        let a = mean_estimate(&records, &o, SamplerKind::PoleConcentrated).unwrap();
        let b = estimate(&shot_set(&batches, Origin::Main).unwrap(), &o).unwrap();
        assert_eq!(a.value, b.value);
        assert_eq!(a.stderr, b.stderr);
    }

    #[test]
    fn schedule_orders() {
        use Origin::{Calibration as C, Main as M};
        assert_eq!(
            schedule_order(4, 4, Schedule::Interleaved),
            vec![M, C, M, C, M, C, M, C]
        );
        assert_eq!(
            schedule_order(6, 3, Schedule::Interleaved),
            vec![M, M, C, M, M, C, M, M, C]
        );
        assert_eq!(schedule_order(2, 3, Schedule::CalibrationFirst), vec![C, C, C, M, M]);
        let o = schedule_order(5, 2, Schedule::Interleaved);
        assert_eq!(o.iter().filter(|&&x| x == M).count(), 5);
        assert_eq!(o.len(), 7);
    }

    #[test]
    fn interleave_rejects_incompatible_plans() {
        let main = ExperimentPlan::new(2, StateSpec::Zero, 10, Scheme::Tetrahedral, 1);
        let other = ExperimentPlan::new(3, StateSpec::Zero, 10, Scheme::Tetrahedral, 1).calibration(10);
        assert!(matches!(interleave(&main, &other), Err(Error::IncompatiblePlans(_))));
        let sph = ExperimentPlan::new(2, StateSpec::Zero, 10, Scheme::Spherical, 1).calibration(10);
        assert!(matches!(interleave(&main, &sph), Err(Error::IncompatiblePlans(_))));
        let cal = main.calibration(5);
        let merged = interleave(&main.clone().with_batch_size(5), &cal.with_batch_size(5)).unwrap();
        assert_eq!(
            merged.iter().map(|b| b.origin).collect::<Vec<_>>(),
            vec![Origin::Main, Origin::Main, Origin::Calibration]
        );
    }

    #[test]
    fn circuit_preparation() {
        let bell = run_circuit(2, &[Gate::new("h", &[0], &[]), Gate::new("cx", &[0, 1], &[])]).unwrap();
        let h = FRAC_1_SQRT_2;
        assert!((bell[0].re - h).abs() < 1e-15 && (bell[3].re - h).abs() < 1e-15);
        assert!(bell[1].norm() < 1e-15 && bell[2].norm() < 1e-15);
        let x1 = run_circuit(2, &[Gate::new("x", &[1], &[])]).unwrap();
        assert_eq!(x1[1], ONE);
        let sw = run_circuit(2, &[Gate::new("x", &[1], &[]), Gate::new("swap", &[0, 1], &[])]).unwrap();
        assert_eq!(sw[2], ONE);
        assert!(run_circuit(2, &[Gate::new("foo", &[0, 1], &[])]).is_err());
        assert!(run_circuit(2, &[Gate::new("rx", &[0], &[])]).is_err());
        assert!(run_circuit(2, &[Gate::new("h", &[2], &[])]).is_err());
    }

    #[test]
    fn plan_validation() {
        let ok = ExperimentPlan::new(2, StateSpec::Zero, 10, Scheme::Spherical, 1);
        assert!(ok.validate().is_ok());
        let mut bad = ok.clone();
        bad.seeds[1] = 0;
        assert!(matches!(bad.validate(), Err(Error::ZeroSeed)));
        let mut bad = ok.clone();
        bad.n_shots = 0;
        assert!(bad.validate().is_err());
        let bad = ok
            .clone()
            .with_error_model(ReadoutErrorModel::TensorFlip { p: vec![0.6, 0.6] })
            .with_drift(Drift { rate: 1.0 });
        assert!(bad.validate().is_err());
        let mut bad = ok;
        bad.lfsr_width = 12;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn plan_serde_round_trip() {
        let plan = ExperimentPlan::new(
            2,
            StateSpec::Product {
                bloch: vec![[0.0, 0.0, 1.0]; 2],
            },
            10,
            Scheme::Tetrahedral,
            5,
        )
        .with_error_model(ReadoutErrorModel::TensorFlip { p: vec![0.01, 0.02] })
        .with_drift(Drift { rate: 0.5 });
        let text = toml::to_string(&plan).unwrap();
        let back: ExperimentPlan = toml::from_str(&text).unwrap();
        assert_eq!(back, plan);
    }

    #[test]
    fn batch_csv_export() {
        let dir = tempfile::tempdir().unwrap();
        let plan = ExperimentPlan::new(2, StateSpec::Zero, 5, Scheme::Tetrahedral, 5);
        let batches = run_plan(&plan).unwrap();
        let path = dir.path().join("shots.csv");
        write_batches_csv(&batches, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("batch,origin,shot,scheme,q0_w0,q0_w1,q0_m,q1_w0,q1_w1,q1_m"));
        assert_eq!(text.lines().count(), 6);
    }
}
