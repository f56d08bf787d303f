//! Quantum channels, readout-error models and suppression factors.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, MatrixSpec, ONE, ZERO};
use crate::pauli::{gaussian, DensityMatrix, Pauli, PauliString};

/// Largest register for which Kraus operators are materialized densely.
pub const MAX_KRAUS_QUBITS: usize = 6;
/// Largest register for which a full classical `2^Q x 2^Q` map is built.
pub const MAX_CLASSICAL_QUBITS: usize = 10;

const TP_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
enum Repr {
    Kraus(Vec<CMatrix>),
    /// Dephase in the computational basis, then apply the column-stochastic
    /// map `T[observed][true]` to the populations.
    Classical(DMatrix<f64>),
}

/// Completely positive trace-preserving map on `n_qubits` qubits.
#[derive(Clone, Debug)]
pub struct QuantumChannel {
    n_qubits: usize,
    repr: Repr,
}

impl QuantumChannel {
    pub fn from_kraus(ops: Vec<CMatrix>) -> Result<Self> {
        let first = ops
            .first()
            .ok_or_else(|| Error::InvalidChannel("no Kraus operators".into()))?;
        let d = first.nrows();
        let q = linalg::qubits_for_dim(d).ok_or(Error::DimensionMismatch {
            expected: d.next_power_of_two().max(2),
            found: d,
        })?;
        guard("Kraus channel", q, MAX_KRAUS_QUBITS)?;
        if let Some(bad) = ops.iter().find(|k| k.shape() != (d, d)) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: bad.nrows().max(bad.ncols()),
            });
        }
        let mut sum = CMatrix::zeros(d, d);
        for k in &ops {
            sum += k.adjoint() * k;
        }
        let residual = linalg::max_abs_diff(&sum, &CMatrix::identity(d, d));
        if residual > TP_TOL {
            return Err(Error::NotTracePreserving { residual });
        }
        Ok(Self {
            n_qubits: q,
            repr: Repr::Kraus(ops),
        })
    }

    /// Classical readout map from a column-stochastic matrix `T[observed][true]`.
    pub fn from_confusion(t: DMatrix<f64>) -> Result<Self> {
        let d = t.nrows();
        if !t.is_square() {
            return Err(Error::InvalidConfusion(format!("shape {:?} is not square", t.shape())));
        }
        let q = linalg::qubits_for_dim(d)
            .ok_or_else(|| Error::InvalidConfusion(format!("dimension {d} is not a power of two")))?;
        guard("classical channel", q, MAX_CLASSICAL_QUBITS)?;
        for (idx, &v) in t.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfusion(format!(
                    "entry ({}, {}) = {v} outside [0, 1]",
                    idx % d,
                    idx / d
                )));
            }
        }
        for col in 0..d {
            let s: f64 = t.column(col).sum();
            if (s - 1.0).abs() > TP_TOL {
                return Err(Error::InvalidConfusion(format!("column {col} sums to {s}")));
            }
        }
        Ok(Self {
            n_qubits: q,
            repr: Repr::Classical(t),
        })
    }

    pub fn identity(n_qubits: usize) -> Result<Self> {
        let d = 1usize << n_qubits;
        Self::from_kraus(vec![CMatrix::identity(d, d)])
    }

    pub fn unitary(u: CMatrix) -> Result<Self> {
        Self::from_kraus(vec![u])
    }

    /// `sqrt(1-p) I`, `sqrt(p) X`.
    pub fn bit_flip(p: f64) -> Result<Self> {
        check_probability("bit-flip p", p)?;
        Self::pauli_channel([1.0 - p, p, 0.0, 0.0])
    }

    pub fn phase_flip(p: f64) -> Result<Self> {
        check_probability("phase-flip p", p)?;
        Self::pauli_channel([1.0 - p, 0.0, 0.0, p])
    }

    /// Single-qubit Pauli channel with probabilities for I, X, Y, Z.
    pub fn pauli_channel(probs: [f64; 4]) -> Result<Self> {
        for (p, name) in probs.iter().zip(["p_I", "p_X", "p_Y", "p_Z"]) {
            check_probability(name, *p)?;
        }
        let ops = Pauli::ALL
            .iter()
            .zip(probs)
            .filter(|(_, p)| *p > 0.0)
            .map(|(s, p)| linalg::mat2_to_dense(&s.matrix()) * c(p.sqrt(), 0.0))
            .collect();
        Self::from_kraus(ops)
    }

    /// `rho -> (1-p) rho + p I / 2^Q`.
    pub fn depolarizing(n_qubits: usize, p: f64) -> Result<Self> {
        check_probability("depolarizing p", p)?;
        guard("Kraus channel", n_qubits, MAX_KRAUS_QUBITS)?;
        let d2 = (1usize << (2 * n_qubits)) as f64;
        let ops = PauliString::all(n_qubits)
            .map(|s| {
                let w = if s.is_identity() { 1.0 - p + p / d2 } else { p / d2 };
                crate::pauli::pauli_matrix(&s) * c(w.sqrt(), 0.0)
            })
            .collect();
        Self::from_kraus(ops)
    }

    pub fn amplitude_damping(gamma: f64) -> Result<Self> {
        check_probability("damping gamma", gamma)?;
        let k0 = CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, c((1.0 - gamma).sqrt(), 0.0)]);
        let k1 = CMatrix::from_row_slice(2, 2, &[ZERO, c(gamma.sqrt(), 0.0), ZERO, ZERO]);
        Self::from_kraus(vec![k0, k1])
    }

    /// Random channel with `rank` Kraus operators, `K_k = G_k (G^dagger G)^{-1/2}`
    /// for a stacked complex Ginibre matrix `G`.
    pub fn random<R: Rng + ?Sized>(n_qubits: usize, rank: usize, rng: &mut R) -> Result<Self> {
        guard("Kraus channel", n_qubits, MAX_KRAUS_QUBITS)?;
        let d = 1usize << n_qubits;
        let rank = rank.max(1);
        let blocks: Vec<CMatrix> = (0..rank)
            .map(|_| CMatrix::from_fn(d, d, |_, _| c(gaussian(rng), gaussian(rng))))
            .collect();
        let mut s = CMatrix::zeros(d, d);
        for g in &blocks {
            s += g.adjoint() * g;
        }
        let inv = linalg::inverse_sqrt_psd(&s);
        Self::from_kraus(blocks.iter().map(|g| g * &inv).collect())
    }

    /// `self (x) other`, with `self` on the leading qubits.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        if let (Repr::Classical(a), Repr::Classical(b)) = (&self.repr, &other.repr) {
            return Self::from_confusion(a.kronecker(b));
        }
        let (ka, kb) = (self.kraus_ops(), other.kraus_ops());
        let mut ops = Vec::with_capacity(ka.len() * kb.len());
        for a in &ka {
            for b in &kb {
                ops.push(a.kronecker(b));
            }
        }
        Self::from_kraus(ops)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn is_classical(&self) -> bool {
        matches!(self.repr, Repr::Classical(_))
    }

    /// The stochastic map for classical readout channels.
    pub fn classical_map(&self) -> Option<&DMatrix<f64>> {
        match &self.repr {
            Repr::Classical(t) => Some(t),
            Repr::Kraus(_) => None,
        }
    }

    /// Kraus operators; classical maps expand to `sqrt(T[y][x]) |y><x|`.
    pub fn kraus_ops(&self) -> Vec<CMatrix> {
        match &self.repr {
            Repr::Kraus(ops) => ops.clone(),
            Repr::Classical(t) => {
                let d = t.nrows();
                let mut ops = Vec::new();
                for y in 0..d {
                    for x in 0..d {
                        if t[(y, x)] > 0.0 {
                            let mut k = CMatrix::zeros(d, d);
                            k[(y, x)] = c(t[(y, x)].sqrt(), 0.0);
                            ops.push(k);
                        }
                    }
                }
                ops
            }
        }
    }

    /// Applies the channel to an arbitrary operator (linear extension).
    pub fn apply_operator(&self, m: &CMatrix) -> Result<CMatrix> {
        let d = self.dim();
        if m.shape() != (d, d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: m.nrows(),
            });
        }
        Ok(match &self.repr {
            Repr::Kraus(ops) => {
                let mut out = CMatrix::zeros(d, d);
                for k in ops {
                    out += k * m * k.adjoint();
                }
                out
            }
            Repr::Classical(t) => {
                let diag: Vec<_> = (0..d).map(|x| m[(x, x)]).collect();
                let mut out = CMatrix::zeros(d, d);
                for y in 0..d {
                    out[(y, y)] = (0..d).map(|x| diag[x] * t[(y, x)]).sum();
                }
                out
            }
        })
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        let out = self.apply_operator(rho.matrix())?;
        let tr = out.trace();
        if (tr - ONE).norm() > TP_TOL {
            return Err(Error::NotTracePreserving {
                residual: (tr - ONE).norm(),
            });
        }
        Ok(DensityMatrix::from_matrix_unchecked(out))
    }

    /// PTM entry `Tr[P_row E(P_col)] / 2^Q`.
    pub fn ptm_element(&self, row: &PauliString, col: &PauliString) -> Result<f64> {
        for p in [row, col] {
            if p.n_qubits() != self.n_qubits {
                return Err(Error::QubitMismatch {
                    expected: self.n_qubits,
                    found: p.n_qubits(),
                });
            }
        }
        let image = self.apply_operator(&crate::pauli::pauli_matrix(col))?;
        Ok(row.trace_with(&image).re / self.dim() as f64)
    }

    /// `(1/2^Q) Tr[M E(M)]` for the Z-string `M` selected by `mask`.
    pub fn suppression_factor(&self, mask: &Mask) -> Result<f64> {
        if mask.n_qubits() != self.n_qubits {
            return Err(Error::QubitMismatch {
                expected: self.n_qubits,
                found: mask.n_qubits(),
            });
        }
        let d = self.dim();
        let sign = |y: usize| mask.sign(y);
        let total = match &self.repr {
            Repr::Classical(t) => {
                let mut s = 0.0;
                for y in 0..d {
                    let col: f64 = (0..d).map(|x| t[(y, x)] * sign(x)).sum();
                    s += sign(y) * col;
                }
                s
            }
            Repr::Kraus(_) => {
                let image = self.apply_operator(&mask.operator())?;
                (0..d).map(|y| sign(y) * image[(y, y)].re).sum()
            }
        };
        Ok(total / d as f64)
    }

    /// Mean PTM diagonal over the `3^{Q_P}` Pauli strings supported on `mask`.
    pub fn twirled_suppression(&self, mask: &Mask) -> Result<f64> {
        if mask.n_qubits() != self.n_qubits {
            return Err(Error::QubitMismatch {
                expected: self.n_qubits,
                found: mask.n_qubits(),
            });
        }
        if mask.is_identity() {
            return Err(Error::IdentityMask);
        }
        let strings = mask.supported_strings();
        let mut total = 0.0;
        for p in &strings {
            total += self.ptm_element(p, p)?;
        }
        Ok(total / strings.len() as f64)
    }

    /// POVM effects `E_y = sum_K K^dagger |y><y| K` of measuring after the channel.
    pub fn povm_effects(&self) -> Vec<CMatrix> {
        let d = self.dim();
        match &self.repr {
            Repr::Classical(t) => (0..d)
                .map(|y| CMatrix::from_fn(d, d, |r, col| if r == col { c(t[(y, r)], 0.0) } else { ZERO }))
                .collect(),
            Repr::Kraus(ops) => (0..d)
                .map(|y| {
                    let mut e = CMatrix::zeros(d, d);
                    for k in ops {
                        let row = k.row(y);
                        e += row.adjoint() * row;
                    }
                    e
                })
                .collect(),
        }
    }
}

fn guard(what: &'static str, q: usize, max: usize) -> Result<()> {
    if q > max {
        return Err(Error::TooManyQubits {
            what,
            max,
            requested: q,
        });
    }
    Ok(())
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidProbability {
            name: name.to_string(),
            value: p,
        });
    }
    Ok(())
}

/// Non-identity positions of a Pauli string.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Mask {
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn from_pauli(p: &PauliString) -> Self {
        Self {
            bits: p.labels().iter().map(|&l| l != Pauli::I).collect(),
        }
    }

    /// Mask with a single set bit.
    pub fn single(n_qubits: usize, qubit: usize) -> Self {
        let mut bits = vec![false; n_qubits];
        bits[qubit] = true;
        Self { bits }
    }

    /// All `2^Q` masks in binary order.
    pub fn all(n_qubits: usize) -> impl Iterator<Item = Mask> {
        (0..1usize << n_qubits).map(move |code| Mask {
            bits: (0..n_qubits).map(|j| (code >> (n_qubits - 1 - j)) & 1 == 1).collect(),
        })
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn n_qubits(&self) -> usize {
        self.bits.len()
    }

    pub fn weight(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_identity(&self) -> bool {
        self.weight() == 0
    }

    pub fn qubits(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(j, _)| j)
    }

    /// Basis-index bit pattern of the masked qubits.
    pub fn basis_bits(&self) -> usize {
        let n = self.n_qubits();
        self.qubits().fold(0, |acc, j| acc | (1 << (n - 1 - j)))
    }

    /// Diagonal entry of the mask operator at basis index `y`.
    #[inline]
    pub fn sign(&self, y: usize) -> f64 {
        if (y & self.basis_bits()).count_ones().is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }

    /// `sigma_z` on masked qubits, identity elsewhere.
    pub fn z_string(&self) -> PauliString {
        PauliString::new(self.bits.iter().map(|&b| if b { Pauli::Z } else { Pauli::I }).collect())
            .expect("mask has at least one qubit")
    }

    pub fn operator(&self) -> CMatrix {
        mask_operator(self)
    }

    /// Every Pauli string with exactly this support.
    pub fn supported_strings(&self) -> Vec<PauliString> {
        let support: Vec<usize> = self.qubits().collect();
        let count = 3usize.pow(support.len() as u32);
        (0..count)
            .map(|mut code| {
                let mut labels = vec![Pauli::I; self.n_qubits()];
                for &j in support.iter().rev() {
                    labels[j] = Pauli::ALL[1 + code % 3];
                    code /= 3;
                }
                PauliString::new(labels).expect("non-empty")
            })
            .collect()
    }
}

/// Diagonal `+-1` operator `(x)_j (I or sigma_z)`.
pub fn mask_operator(mask: &Mask) -> CMatrix {
    let d = 1usize << mask.n_qubits();
    CMatrix::from_fn(d, d, |r, col| if r == col { c(mask.sign(r), 0.0) } else { ZERO })
}

impl fmt::Display for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.z_string())
    }
}

impl FromStr for Mask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(Mask::from_pauli(&s.parse()?))
    }
}

impl Serialize for Mask {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Mask {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(de)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Readout-error models, all reducible to a channel on the measured register.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[derive(Default)]
pub enum ReadoutErrorModel {
    #[default]
    None,
    /// Full stochastic map, `matrix[observed][true]`.
    Confusion {
        matrix: Vec<Vec<f64>>,
    },
    /// Independent symmetric bit flips with per-qubit probabilities.
    TensorFlip {
        p: Vec<f64>,
    },
    /// Independent asymmetric flips: `p01[j]` reads 1 for a true 0.
    TensorConfusion {
        p01: Vec<f64>,
        p10: Vec<f64>,
    },
    /// Joint flip of a qubit pair plus asymmetric single-qubit flips on it.
    CorrelatedFlip {
        qubits: [usize; 2],
        joint: f64,
        #[serde(default)]
        p01: f64,
        #[serde(default)]
        p10: f64,
    },
    /// Per-qubit `R_X(angle)` just before measurement.
    Coherent {
        angles: Vec<f64>,
    },
    Kraus {
        operators: Vec<MatrixSpec>,
    },
}

impl ReadoutErrorModel {
    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        let len_check = |name: &str, len: usize| {
            if len != n_qubits {
                Err(Error::Config(format!("{name} has {len} entries for {n_qubits} qubits")))
            } else {
                Ok(())
            }
        };
        match self {
            ReadoutErrorModel::None => Ok(()),
            ReadoutErrorModel::Confusion { matrix } => {
                let d = 1usize << n_qubits;
                if matrix.len() != d || matrix.iter().any(|r| r.len() != d) {
                    return Err(Error::InvalidConfusion(format!("expected a {d}x{d} matrix")));
                }
                QuantumChannel::from_confusion(confusion_matrix(matrix)).map(|_| ())
            }
            ReadoutErrorModel::TensorFlip { p } => {
                len_check("p", p.len())?;
                p.iter().try_for_each(|&v| check_probability("flip p", v))
            }
            ReadoutErrorModel::TensorConfusion { p01, p10 } => {
                len_check("p01", p01.len())?;
                len_check("p10", p10.len())?;
                p01.iter().chain(p10).try_for_each(|&v| check_probability("flip p", v))
            }
            ReadoutErrorModel::CorrelatedFlip {
                qubits,
                joint,
                p01,
                p10,
            } => {
                if qubits[0] == qubits[1] || qubits.iter().any(|&j| j >= n_qubits) {
                    return Err(Error::Config(format!(
                        "invalid qubit pair {qubits:?} for {n_qubits} qubits"
                    )));
                }
                check_probability("joint", *joint)?;
                check_probability("p01", *p01)?;
                check_probability("p10", *p10)
            }
            ReadoutErrorModel::Coherent { angles } => {
                len_check("angles", angles.len())?;
                if angles.iter().any(|a| !a.is_finite()) {
                    return Err(Error::Config("non-finite rotation angle".into()));
                }
                Ok(())
            }
            ReadoutErrorModel::Kraus { .. } => {
                let ch = self.as_channel(n_qubits)?;
                if ch.n_qubits() != n_qubits {
                    return Err(Error::QubitMismatch {
                        expected: n_qubits,
                        found: ch.n_qubits(),
                    });
                }
                Ok(())
            }
        }
    }

    /// Channel on the full `n_qubits` register.
    pub fn as_channel(&self, n_qubits: usize) -> Result<QuantumChannel> {
        match self {
            ReadoutErrorModel::None => QuantumChannel::identity(n_qubits),
            ReadoutErrorModel::Confusion { matrix } => {
                self.validate(n_qubits)?;
                QuantumChannel::from_confusion(confusion_matrix(matrix))
            }
            ReadoutErrorModel::TensorFlip { p } => {
                self.validate(n_qubits)?;
                if n_qubits <= MAX_KRAUS_QUBITS {
                    tensor_all(p.iter().map(|&v| QuantumChannel::bit_flip(v)))
                } else {
                    QuantumChannel::from_confusion(product_map(p, p))
                }
            }
            ReadoutErrorModel::TensorConfusion { p01, p10 } => {
                self.validate(n_qubits)?;
                QuantumChannel::from_confusion(product_map(p01, p10))
            }
            ReadoutErrorModel::CorrelatedFlip {
                qubits,
                joint,
                p01,
                p10,
            } => {
                self.validate(n_qubits)?;
                guard("classical channel", n_qubits, MAX_CLASSICAL_QUBITS)?;
                let t4 = correlated_pair_map(*joint, *p01, *p10);
                let d = 1usize << n_qubits;
                let (a, b) = (qubits[0], qubits[1]);
                let pair = |y: usize| 2 * linalg::qubit_bit(y, a, n_qubits) + linalg::qubit_bit(y, b, n_qubits);
                let pair_bits = (1 << (n_qubits - 1 - a)) | (1 << (n_qubits - 1 - b));
                let t = DMatrix::from_fn(d, d, |y, x| {
                    if (y & !pair_bits) == (x & !pair_bits) {
                        t4[pair(y)][pair(x)]
                    } else {
                        0.0
                    }
                });
                QuantumChannel::from_confusion(t)
            }
            ReadoutErrorModel::Coherent { angles } => {
                self.validate(n_qubits)?;
                guard("Kraus channel", n_qubits, MAX_KRAUS_QUBITS)?;
                let factors: Vec<CMatrix> = angles.iter().map(|&a| linalg::mat2_to_dense(&linalg::rx(a))).collect();
                QuantumChannel::unitary(linalg::kron_all(&factors))
            }
            ReadoutErrorModel::Kraus { operators } => {
                let ops = operators
                    .iter()
                    .map(|m| {
                        m.to_matrix()
                            .ok_or_else(|| Error::InvalidChannel("ragged Kraus operator".into()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let ch = QuantumChannel::from_kraus(ops)?;
                if ch.n_qubits() != n_qubits {
                    return Err(Error::QubitMismatch {
                        expected: n_qubits,
                        found: ch.n_qubits(),
                    });
                }
                Ok(ch)
            }
        }
    }

    /// The model with every error strength multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let scale = |v: &[f64]| v.iter().map(|x| x * factor).collect::<Vec<_>>();
        Ok(match self {
            ReadoutErrorModel::None => ReadoutErrorModel::None,
            ReadoutErrorModel::Confusion { matrix } => {
                let d = matrix.len();
                ReadoutErrorModel::Confusion {
                    matrix: (0..d)
                        .map(|y| {
                            (0..d)
                                .map(|x| {
                                    let id = if x == y { 1.0 } else { 0.0 };
                                    id + factor * (matrix[y][x] - id)
                                })
                                .collect()
                        })
                        .collect(),
                }
            }
            ReadoutErrorModel::TensorFlip { p } => ReadoutErrorModel::TensorFlip { p: scale(p) },
            ReadoutErrorModel::TensorConfusion { p01, p10 } => ReadoutErrorModel::TensorConfusion {
                p01: scale(p01),
                p10: scale(p10),
            },
            ReadoutErrorModel::CorrelatedFlip {
                qubits,
                joint,
                p01,
                p10,
            } => ReadoutErrorModel::CorrelatedFlip {
                qubits: *qubits,
                joint: joint * factor,
                p01: p01 * factor,
                p10: p10 * factor,
            },
            ReadoutErrorModel::Coherent { angles } => ReadoutErrorModel::Coherent { angles: scale(angles) },
            ReadoutErrorModel::Kraus { .. } => {
                return Err(Error::Config(
                    "drift needs a parametric error model, not raw Kraus operators".into(),
                ))
            }
        })
    }
}

fn confusion_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let d = rows.len();
    DMatrix::from_fn(d, d, |y, x| rows[y][x])
}

fn tensor_all(parts: impl Iterator<Item = Result<QuantumChannel>>) -> Result<QuantumChannel> {
    let mut acc: Option<QuantumChannel> = None;
    for part in parts {
        let part = part?;
        acc = Some(match acc {
            None => part,
            Some(a) => a.tensor(&part)?,
        });
    }
    acc.ok_or_else(|| Error::InvalidChannel("empty tensor product".into()))
}

/// Single-qubit stochastic map `[[1-p01, p10], [p01, 1-p10]]`.
pub fn flip_map(p01: f64, p10: f64) -> [[f64; 2]; 2] {
    [[1.0 - p01, p10], [p01, 1.0 - p10]]
}

fn product_map(p01: &[f64], p10: &[f64]) -> DMatrix<f64> {
    let mut t = DMatrix::from_element(1, 1, 1.0);
    for (&a, &b) in p01.iter().zip(p10) {
        let f = flip_map(a, b);
        t = t.kronecker(&DMatrix::from_fn(2, 2, |y, x| f[y][x]));
    }
    t
}

/// Two-qubit map indexed by `2*bit_a + bit_b`: joint flip with probability
/// `joint`, followed by independent asymmetric flips on each qubit.
pub fn correlated_pair_map(joint: f64, p01: f64, p10: f64) -> [[f64; 4]; 4] {
    let f = flip_map(p01, p10);
    let mut out = [[0.0; 4]; 4];
    for x in 0..4 {
        for (mid, w) in [(x, 1.0 - joint), (x ^ 3, joint)] {
            for (y, row) in out.iter_mut().enumerate() {
                row[x] += w * f[y >> 1][mid >> 1] * f[y & 1][mid & 1];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::pauli_matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ps(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    /// Reference `sum_K K rho K^dagger` written independently of `apply_operator`.
    fn kraus_sum(ops: &[CMatrix], rho: &CMatrix) -> CMatrix {
        ops.iter().fold(CMatrix::zeros(rho.nrows(), rho.ncols()), |acc, k| {
            acc + k * rho * k.adjoint()
        })
    }

    #[test]
    fn identity_channel_preserves_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = DensityMatrix::random(2, 4, &mut rng).unwrap();
        let out = QuantumChannel::identity(2).unwrap().apply(&rho).unwrap();
        assert!(linalg::max_abs_diff(out.matrix(), rho.matrix()) < 1e-15);
    }

    #[test]
    fn half_bit_flip_on_zero_is_mixed() {
        let out = QuantumChannel::bit_flip(0.5)
            .unwrap()
            .apply(&DensityMatrix::zero_state(1).unwrap())
            .unwrap();
        let mixed = DensityMatrix::maximally_mixed(1).unwrap();
        assert!(linalg::max_abs_diff(out.matrix(), mixed.matrix()) < 1e-15);
    }

    #[test]
    fn depolarizing_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = 0.3;
        let rho = DensityMatrix::random(2, 2, &mut rng).unwrap();
        let out = QuantumChannel::depolarizing(2, p).unwrap().apply(&rho).unwrap();
        let expect = rho.matrix() * c(1.0 - p, 0.0) + CMatrix::identity(4, 4) * c(p / 4.0, 0.0);
        assert!(linalg::max_abs_diff(out.matrix(), &expect) < 1e-12);
    }

    #[test]
    fn ptm_examples() {
        let p = 0.1;
        close(
            QuantumChannel::identity(1)
                .unwrap()
                .ptm_element(&ps("Z"), &ps("Z"))
                .unwrap(),
            1.0,
            1e-15,
        );
        let bf = QuantumChannel::bit_flip(p).unwrap();
        let oracle = kraus_sum(&bf.kraus_ops(), &pauli_matrix(&ps("Z")));
        let zz = (pauli_matrix(&ps("Z")) * oracle).trace().re / 2.0;
        close(bf.ptm_element(&ps("Z"), &ps("Z")).unwrap(), zz, 1e-14);
        close(zz, 1.0 - 2.0 * p, 1e-14);
        let dep = QuantumChannel::depolarizing(1, p).unwrap();
        close(dep.ptm_element(&ps("X"), &ps("X")).unwrap(), 1.0 - p, 1e-14);
        close(dep.ptm_element(&ps("I"), &ps("I")).unwrap(), 1.0, 1e-14);
    }

    #[test]
    fn mask_operators() {
        let m = |b: &[bool]| mask_operator(&Mask::new(b.to_vec()));
        let diag = |v: &[f64]| {
            CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(v.len(), v.iter().map(|&x| c(x, 0.0))))
        };
        assert_eq!(m(&[true]), diag(&[1.0, -1.0]));
        assert_eq!(m(&[false, false]), CMatrix::identity(4, 4));
        assert_eq!(m(&[true, true]), diag(&[1.0, -1.0, -1.0, 1.0]));
        assert_eq!(m(&[true, false]), pauli_matrix(&ps("ZI")));
    }

    #[test]
    fn suppression_examples() {
        let noiseless = QuantumChannel::identity(2).unwrap();
        for mask in Mask::all(2) {
            close(noiseless.suppression_factor(&mask).unwrap(), 1.0, 1e-15);
        }
        let p = 0.07;
        let two = QuantumChannel::bit_flip(p)
            .unwrap()
            .tensor(&QuantumChannel::bit_flip(p).unwrap())
            .unwrap();
        close(
            two.suppression_factor(&Mask::new(vec![true, true])).unwrap(),
            (1.0 - 2.0 * p).powi(2),
            1e-14,
        );
        let conf = ReadoutErrorModel::TensorConfusion {
            p01: vec![p],
            p10: vec![p],
        }
        .as_channel(1)
        .unwrap();
        close(
            conf.suppression_factor(&Mask::new(vec![true])).unwrap(),
            1.0 - 2.0 * p,
            1e-14,
        );
    }

    #[test]
    fn confusion_suppression_is_one_minus_a_minus_b() {
        let (a, b) = (0.03, 0.05);
        let model = ReadoutErrorModel::Confusion {
            matrix: vec![vec![1.0 - a, b], vec![a, 1.0 - b]],
        };
        let ch = model.as_channel(1).unwrap();
        // Classical oracle: <Z> after readout of |0> and |1>, averaged with signs.
        let z0 = (1.0 - a) - a;
        let z1 = b - (1.0 - b);
        let oracle = (z0 - z1) / 2.0;
        close(ch.suppression_factor(&Mask::new(vec![true])).unwrap(), oracle, 1e-15);
        close(oracle, 0.92, 1e-15);
    }

    #[test]
    fn suppression_equals_z_string_ptm_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for q in 1..=3 {
            let ch = QuantumChannel::random(q, 3, &mut rng).unwrap();
            for mask in Mask::all(q) {
                let z = mask.z_string();
                close(
                    ch.suppression_factor(&mask).unwrap(),
                    ch.ptm_element(&z, &z).unwrap(),
                    1e-12,
                );
            }
        }
    }

    #[test]
    fn twirled_suppression_examples() {
        let dep = QuantumChannel::depolarizing(2, 0.2).unwrap();
        for mask in Mask::all(2).skip(1) {
            close(
                dep.twirled_suppression(&mask).unwrap(),
                dep.suppression_factor(&mask).unwrap(),
                1e-12,
            );
        }
        close(
            QuantumChannel::identity(1)
                .unwrap()
                .twirled_suppression(&Mask::new(vec![true]))
                .unwrap(),
            1.0,
            1e-14,
        );
        assert!(matches!(
            dep.twirled_suppression(&Mask::new(vec![false, false])),
            Err(Error::IdentityMask)
        ));
    }

    #[test]
    fn twirl_differs_for_asymmetric_pauli_channel() {
        // PTM diagonal of a Pauli channel: lambda_k = sum_j p_j s_jk.
        let probs = [0.7, 0.2, 0.05, 0.05];
        let ch = QuantumChannel::pauli_channel(probs).unwrap();
        let lx = probs[0] + probs[1] - probs[2] - probs[3];
        let ly = probs[0] - probs[1] + probs[2] - probs[3];
        let lz = probs[0] - probs[1] - probs[2] + probs[3];
        let mask = Mask::new(vec![true]);
        close(ch.twirled_suppression(&mask).unwrap(), (lx + ly + lz) / 3.0, 1e-14);
        close(ch.suppression_factor(&mask).unwrap(), lz, 1e-14);
        assert!((lz - (lx + ly + lz) / 3.0).abs() > 1e-2);
    }

    #[test]
    fn tensor_flip_kraus_form() {
        let ch = ReadoutErrorModel::TensorFlip { p: vec![0.02] }.as_channel(1).unwrap();
        let ops = ch.kraus_ops();
        assert_eq!(ops.len(), 2);
        let x = linalg::mat2_to_dense(&Pauli::X.matrix());
        assert!(linalg::max_abs_diff(&ops[0], &(CMatrix::identity(2, 2) * c(0.98f64.sqrt(), 0.0))) < 1e-15);
        assert!(linalg::max_abs_diff(&ops[1], &(x * c(0.02f64.sqrt(), 0.0))) < 1e-15);
        let none = ReadoutErrorModel::None.as_channel(1).unwrap();
        assert_eq!(none.kraus_ops(), vec![CMatrix::identity(2, 2)]);
    }

    #[test]
    fn invalid_models_rejected() {
        let bad_cols = ReadoutErrorModel::Confusion {
            matrix: vec![vec![0.9, 0.1], vec![0.2, 0.9]],
        };
        assert!(matches!(bad_cols.as_channel(1), Err(Error::InvalidConfusion(_))));
        assert!(ReadoutErrorModel::TensorFlip { p: vec![1.2] }.as_channel(1).is_err());
        assert!(ReadoutErrorModel::TensorFlip { p: vec![0.1] }.as_channel(2).is_err());
        let not_tp = vec![CMatrix::identity(2, 2) * c(0.5, 0.0)];
        assert!(matches!(
            QuantumChannel::from_kraus(not_tp),
            Err(Error::NotTracePreserving { .. })
        ));
    }

    #[test]
    fn correlated_pair_map_is_stochastic_and_matches_enumeration() {
        let (q, a, b) = (0.01, 0.02, 0.05);
        let t = correlated_pair_map(q, a, b);
        for x in 0..4 {
            let s: f64 = (0..4).map(|y| t[y][x]).sum();
            close(s, 1.0, 1e-15);
        }
        // From |00>: joint flip -> |11>; then independent flips.
        let from_00 = |y: usize| {
            let single = |bit_true: usize, bit_obs: usize| flip_map(a, b)[bit_obs][bit_true];
            (1.0 - q) * single(0, y >> 1) * single(0, y & 1) + q * single(1, y >> 1) * single(1, y & 1)
        };
        for y in 0..4 {
            close(t[y][0], from_00(y), 1e-15);
        }
    }

    #[test]
    fn correlated_channel_embeds_pair() {
        let model = ReadoutErrorModel::CorrelatedFlip {
            qubits: [0, 2],
            joint: 0.1,
            p01: 0.0,
            p10: 0.0,
        };
        let ch = model.as_channel(3).unwrap();
        // Joint flips preserve Z0 Z2 parity but hit the single-qubit Z0.
        close(ch.suppression_factor(&"ZIZ".parse().unwrap()).unwrap(), 1.0, 1e-14);
        close(ch.suppression_factor(&"ZII".parse().unwrap()).unwrap(), 0.8, 1e-14);
        close(ch.suppression_factor(&"IZI".parse().unwrap()).unwrap(), 1.0, 1e-14);
    }

    #[test]
    fn povm_effects_sum_to_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ch = QuantumChannel::random(2, 2, &mut rng).unwrap();
        let sum = ch.povm_effects().into_iter().fold(CMatrix::zeros(4, 4), |a, e| a + e);
        assert!(linalg::max_abs_diff(&sum, &CMatrix::identity(4, 4)) < 1e-12);
    }

    #[test]
    fn scaled_models() {
        let m = ReadoutErrorModel::TensorFlip { p: vec![0.02, 0.04] }
            .scaled(2.0)
            .unwrap();
        assert_eq!(m, ReadoutErrorModel::TensorFlip { p: vec![0.04, 0.08] });
        let conf = ReadoutErrorModel::Confusion {
            matrix: vec![vec![0.9, 0.2], vec![0.1, 0.8]],
        }
        .scaled(0.5)
        .unwrap();
        assert_eq!(
            conf,
            ReadoutErrorModel::Confusion {
                matrix: vec![vec![0.95, 0.1], vec![0.05, 0.9]]
            }
        );
    }

    #[test]
    fn model_serde_round_trip() {
        let m = ReadoutErrorModel::CorrelatedFlip {
            qubits: [2, 3],
            joint: 0.01,
            p01: 0.02,
            p10: 0.0,
        };
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains("\"kind\":\"correlated_flip\""));
        assert_eq!(serde_json::from_str::<ReadoutErrorModel>(&s).unwrap(), m);
    }
}
