//! Pauli strings, observables and exact density-matrix expectation values.
//!
//! Qubit 0 is the leftmost tensor factor everywhere, which makes it the most
//! significant bit of a computational-basis index.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, Mat2, MAX_DENSE_QUBITS, ONE, ZERO};

/// Single-qubit Pauli operator, labelled 0..3 as I, X, Y, Z.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Pauli> {
        Self::ALL.get(i).copied()
    }

    /// Bloch axis (0 = x, 1 = y, 2 = z), `None` for the identity.
    pub fn axis(self) -> Option<usize> {
        match self {
            Pauli::I => None,
            p => Some(p.index() - 1),
        }
    }

    pub fn matrix(self) -> Mat2 {
        match self {
            Pauli::I => Mat2::new(ONE, ZERO, ZERO, ONE),
            Pauli::X => Mat2::new(ZERO, ONE, ONE, ZERO),
            Pauli::Y => Mat2::new(ZERO, c(0.0, -1.0), c(0.0, 1.0), ZERO),
            Pauli::Z => Mat2::new(ONE, ZERO, ZERO, -ONE),
        }
    }

    pub fn symbol(self) -> char {
        ['I', 'X', 'Y', 'Z'][self.index()]
    }
}

/// Tensor product of single-qubit Paulis.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PauliString {
    labels: Vec<Pauli>,
}

impl PauliString {
    pub fn new(labels: Vec<Pauli>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidPauli("a Pauli string needs at least one qubit".into()));
        }
        Ok(Self { labels })
    }

    /// Build from integer labels in {0, 1, 2, 3}.
    pub fn from_indices(indices: &[usize]) -> Result<Self> {
        let labels = indices
            .iter()
            .map(|&i| Pauli::from_index(i).ok_or_else(|| Error::InvalidPauli(format!("label {i} not in 0..=3"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(labels)
    }

    pub fn identity(n_qubits: usize) -> Self {
        Self {
            labels: vec![Pauli::I; n_qubits.max(1)],
        }
    }

    /// `p` on `qubit`, identity elsewhere.
    pub fn single(n_qubits: usize, qubit: usize, p: Pauli) -> Self {
        let mut s = Self::identity(n_qubits);
        s.labels[qubit] = p;
        s
    }

    pub fn n_qubits(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[Pauli] {
        &self.labels
    }

    pub fn get(&self, qubit: usize) -> Pauli {
        self.labels[qubit]
    }

    /// Number of non-identity factors.
    pub fn weight(&self) -> usize {
        self.labels.iter().filter(|&&p| p != Pauli::I).count()
    }

    pub fn is_identity(&self) -> bool {
        self.weight() == 0
    }

    /// Every string over `n_qubits` qubits, in lexicographic label order.
    pub fn all(n_qubits: usize) -> impl Iterator<Item = PauliString> {
        let total = 1usize << (2 * n_qubits);
        (0..total).map(move |mut code| {
            let mut labels = vec![Pauli::I; n_qubits];
            for j in (0..n_qubits).rev() {
                labels[j] = Pauli::ALL[code & 3];
                code >>= 2;
            }
            PauliString { labels }
        })
    }

    /// Basis action `P|y> = phase(y) |y xor flip>`: returns the flip mask.
    pub(crate) fn flip_mask(&self) -> usize {
        let n = self.n_qubits();
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, p)| matches!(p, Pauli::X | Pauli::Y))
            .fold(0, |acc, (j, _)| acc | (1 << (n - 1 - j)))
    }

    /// The phase in `P|y> = phase(y) |y xor flip>`.
    pub(crate) fn phase(&self, y: usize) -> Complex64 {
        let n = self.n_qubits();
        let mut ph = ONE;
        for (j, p) in self.labels.iter().enumerate() {
            let bit = linalg::qubit_bit(y, j, n);
            match p {
                Pauli::I | Pauli::X => {}
                Pauli::Y => ph *= if bit == 0 { c(0.0, 1.0) } else { c(0.0, -1.0) },
                Pauli::Z => {
                    if bit == 1 {
                        ph = -ph
                    }
                }
            }
        }
        ph
    }

    /// `Tr[P M]` in O(2^Q) using the permutation structure of `P`.
    pub(crate) fn trace_with(&self, m: &CMatrix) -> Complex64 {
        let flip = self.flip_mask();
        (0..m.nrows()).map(|y| self.phase(y) * m[(y, y ^ flip)]).sum()
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.labels {
            write!(f, "{}", p.symbol())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let labels = s
            .trim()
            .chars()
            .map(|ch| match ch.to_ascii_uppercase() {
                'I' | '0' => Ok(Pauli::I),
                'X' | '1' => Ok(Pauli::X),
                'Y' | '2' => Ok(Pauli::Y),
                'Z' | '3' => Ok(Pauli::Z),
                other => Err(Error::InvalidPauli(format!("unknown label {other:?} in {s:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(labels)
    }
}

impl Serialize for PauliString {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PauliString {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Dense matrix of a Pauli string.
pub fn pauli_matrix(p: &PauliString) -> CMatrix {
    let d = 1usize << p.n_qubits();
    let flip = p.flip_mask();
    let mut m = CMatrix::zeros(d, d);
    for y in 0..d {
        m[(y ^ flip, y)] = p.phase(y);
    }
    m
}

/// Real linear combination of Pauli strings over a fixed register.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    n_qubits: usize,
    terms: BTreeMap<PauliString, f64>,
}

impl Observable {
    pub fn new(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            terms: BTreeMap::new(),
        }
    }

    pub fn from_terms(n_qubits: usize, terms: impl IntoIterator<Item = (PauliString, f64)>) -> Result<Self> {
        let mut o = Self::new(n_qubits);
        for (p, coef) in terms {
            o.add_term(p, coef)?;
        }
        Ok(o)
    }

    pub fn single(p: PauliString, coefficient: f64) -> Result<Self> {
        Self::from_terms(p.n_qubits(), [(p, coefficient)])
    }

    /// Adds `coefficient * p`, merging with an existing term for `p`.
    pub fn add_term(&mut self, p: PauliString, coefficient: f64) -> Result<()> {
        if p.n_qubits() != self.n_qubits {
            return Err(Error::QubitMismatch {
                expected: self.n_qubits,
                found: p.n_qubits(),
            });
        }
        if !coefficient.is_finite() {
            return Err(Error::InvalidPauli(format!(
                "coefficient {coefficient} for {p} is not finite"
            )));
        }
        *self.terms.entry(p).or_insert(0.0) += coefficient;
        Ok(())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn terms(&self) -> impl Iterator<Item = (&PauliString, f64)> {
        self.terms.iter().map(|(p, &c)| (p, c))
    }

    pub fn strings(&self) -> Vec<PauliString> {
        self.terms.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, p: &PauliString) -> f64 {
        self.terms.get(p).copied().unwrap_or(0.0)
    }

    /// Sum of absolute coefficients, an upper bound on `|Tr[rho O]|`.
    pub fn l1_norm(&self) -> f64 {
        self.terms.values().map(|c| c.abs()).sum()
    }

    /// Drops terms with `|c| <= tol`.
    pub fn pruned(&self, tol: f64) -> Self {
        Self {
            n_qubits: self.n_qubits,
            terms: self
                .terms
                .iter()
                .filter(|(_, c)| c.abs() > tol)
                .map(|(p, &c)| (p.clone(), c))
                .collect(),
        }
    }

    /// Dense matrix `sum c P`.
    pub fn to_matrix(&self) -> Result<CMatrix> {
        dense_guard("Observable::to_matrix", self.n_qubits)?;
        let d = 1usize << self.n_qubits;
        let mut m = CMatrix::zeros(d, d);
        for (p, coef) in self.terms() {
            let flip = p.flip_mask();
            for y in 0..d {
                m[(y ^ flip, y)] += p.phase(y) * coef;
            }
        }
        Ok(m)
    }
}

/// Pauli decomposition `O = sum Tr[P O]/2^Q P` of a Hermitian matrix.
pub fn decompose(m: &CMatrix) -> Result<Observable> {
    let q = linalg::qubits_for_dim(m.nrows()).ok_or(Error::DimensionMismatch {
        expected: m.nrows().next_power_of_two().max(2),
        found: m.nrows(),
    })?;
    if m.ncols() != m.nrows() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    dense_guard("decompose", q)?;
    let residual = linalg::hermitian_residual(m);
    if residual > 1e-9 {
        return Err(Error::NotHermitian { residual });
    }
    let d = (1usize << q) as f64;
    let mut o = Observable::new(q);
    for p in PauliString::all(q) {
        let coef = p.trace_with(m).re / d;
        if coef != 0.0 {
            o.terms.insert(p, coef);
        }
    }
    Ok(o)
}

fn dense_guard(what: &'static str, q: usize) -> Result<()> {
    if q > MAX_DENSE_QUBITS {
        return Err(Error::TooManyQubits {
            what,
            max: MAX_DENSE_QUBITS,
            requested: q,
        });
    }
    Ok(())
}

/// Validated `2^Q x 2^Q` density matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    n_qubits: usize,
    matrix: CMatrix,
}

impl DensityMatrix {
    pub const HERMITIAN_TOL: f64 = 1e-10;
    pub const TRACE_TOL: f64 = 1e-10;
    pub const EIGEN_TOL: f64 = 1e-9;

    pub fn new(matrix: CMatrix) -> Result<Self> {
        let q = linalg::qubits_for_dim(matrix.nrows())
            .filter(|_| matrix.is_square())
            .ok_or_else(|| Error::InvalidDensityMatrix(format!("shape {:?} is not 2^Q square", matrix.shape())))?;
        dense_guard("DensityMatrix", q)?;
        let residual = linalg::hermitian_residual(&matrix);
        if residual > Self::HERMITIAN_TOL {
            return Err(Error::NotHermitian { residual });
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > Self::TRACE_TOL || tr.im.abs() > Self::TRACE_TOL {
            return Err(Error::InvalidDensityMatrix(format!("trace {tr} != 1")));
        }
        let min_eig = linalg::hermitian_eigenvalues(&matrix)[0];
        if min_eig < -Self::EIGEN_TOL {
            return Err(Error::InvalidDensityMatrix(format!(
                "negative eigenvalue {min_eig:.3e}"
            )));
        }
        Ok(Self { n_qubits: q, matrix })
    }

    pub(crate) fn from_matrix_unchecked(matrix: CMatrix) -> Self {
        let n_qubits = matrix.nrows().trailing_zeros() as usize;
        Self { n_qubits, matrix }
    }

    /// `|0...0><0...0|`.
    pub fn zero_state(n_qubits: usize) -> Result<Self> {
        dense_guard("DensityMatrix", n_qubits)?;
        let d = 1usize << n_qubits;
        let mut m = CMatrix::zeros(d, d);
        m[(0, 0)] = ONE;
        Ok(Self { n_qubits, matrix: m })
    }

    pub fn maximally_mixed(n_qubits: usize) -> Result<Self> {
        dense_guard("DensityMatrix", n_qubits)?;
        let d = 1usize << n_qubits;
        Ok(Self {
            n_qubits,
            matrix: CMatrix::identity(d, d) / c(d as f64, 0.0),
        })
    }

    /// Pure state from a (not necessarily normalized) state vector.
    pub fn from_state_vector(psi: &[Complex64]) -> Result<Self> {
        let q = linalg::qubits_for_dim(psi.len())
            .ok_or_else(|| Error::InvalidDensityMatrix(format!("state vector length {} is not 2^Q", psi.len())))?;
        dense_guard("DensityMatrix", q)?;
        let norm: f64 = psi.iter().map(|a| a.norm_sqr()).sum::<f64>();
        if norm <= 0.0 {
            return Err(Error::InvalidDensityMatrix("zero state vector".into()));
        }
        let d = psi.len();
        let m = CMatrix::from_fn(d, d, |r, col| psi[r] * psi[col].conj() / norm);
        Ok(Self { n_qubits: q, matrix: m })
    }

    /// Product state from per-qubit Bloch vectors (each of norm <= 1).
    pub fn product(bloch: &[[f64; 3]]) -> Result<Self> {
        if bloch.is_empty() {
            return Err(Error::InvalidDensityMatrix("no qubits".into()));
        }
        dense_guard("DensityMatrix", bloch.len())?;
        let factors = bloch
            .iter()
            .map(|r| {
                let len = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
                if len > 1.0 + 1e-12 {
                    return Err(Error::InvalidDensityMatrix(format!("Bloch vector {r:?} longer than 1")));
                }
                Ok(single_qubit_state(*r))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_matrix_unchecked(linalg::kron_all(&factors)))
    }

    /// Random state of the given rank from a Ginibre ensemble.
    pub fn random<R: Rng + ?Sized>(n_qubits: usize, rank: usize, rng: &mut R) -> Result<Self> {
        dense_guard("DensityMatrix", n_qubits)?;
        let d = 1usize << n_qubits;
        let rank = rank.clamp(1, d);
        let g = CMatrix::from_fn(d, rank, |_, _| c(gaussian(rng), gaussian(rng)));
        let m = &g * g.adjoint();
        let tr = m.trace().re;
        Ok(Self::from_matrix_unchecked(m / c(tr, 0.0)))
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// `Tr[rho P]`.
    pub fn pauli_expectation(&self, p: &PauliString) -> Result<f64> {
        if p.n_qubits() != self.n_qubits {
            return Err(Error::QubitMismatch {
                expected: self.n_qubits,
                found: p.n_qubits(),
            });
        }
        Ok(p.trace_with(&self.matrix).re)
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.matrix[(i, i)].re).collect()
    }
}

pub(crate) fn single_qubit_state(r: [f64; 3]) -> CMatrix {
    CMatrix::from_row_slice(
        2,
        2,
        &[
            c(0.5 * (1.0 + r[2]), 0.0),
            c(0.5 * r[0], -0.5 * r[1]),
            c(0.5 * r[0], 0.5 * r[1]),
            c(0.5 * (1.0 - r[2]), 0.0),
        ],
    )
}

pub(crate) fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Box-Muller; one variate per call keeps the stream layout simple.
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// `Tr[rho O]` from the exact density matrix.
pub fn expectation_exact(rho: &DensityMatrix, o: &Observable) -> Result<f64> {
    if o.n_qubits() != rho.n_qubits() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: 1 << o.n_qubits(),
        });
    }
    let mut total = 0.0;
    for (p, coef) in o.terms() {
        total += coef * p.trace_with(rho.matrix()).re;
    }
    Ok(total)
}
