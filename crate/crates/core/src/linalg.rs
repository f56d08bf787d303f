//! Small dense complex linear algebra used by the exact (oracle) objects and
//! by the per-shot simulator kernels.

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub type CMatrix = DMatrix<Complex64>;
pub type Mat2 = Matrix2<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Largest qubit count for which dense `2^Q x 2^Q` objects are built.
pub const MAX_DENSE_QUBITS: usize = 12;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Kronecker product of a sequence of matrices, first factor leftmost.
pub fn kron_all<'a>(factors: impl IntoIterator<Item = &'a CMatrix>) -> CMatrix {
    let mut out = CMatrix::from_element(1, 1, ONE);
    for f in factors {
        out = out.kronecker(f);
    }
    out
}

pub fn mat2_to_dense(m: &Mat2) -> CMatrix {
    CMatrix::from_fn(2, 2, |r, col| m[(r, col)])
}

/// Largest entrywise modulus of `m - m^dagger`.
pub fn hermitian_residual(m: &CMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for r in 0..m.nrows() {
        for col in r..m.ncols() {
            worst = worst.max((m[(r, col)] - m[(col, r)].conj()).norm());
        }
    }
    worst
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Returns `q` such that `dim == 2^q`.
pub fn qubits_for_dim(dim: usize) -> Option<usize> {
    (dim.is_power_of_two() && dim >= 2).then(|| dim.trailing_zeros() as usize)
}

/// Bit of qubit `j` in basis index `idx` (qubit 0 is the most significant bit).
#[inline]
pub fn qubit_bit(idx: usize, qubit: usize, n_qubits: usize) -> usize {
    (idx >> (n_qubits - 1 - qubit)) & 1
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let eig = m.clone().symmetric_eigen();
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    vals
}

/// `exp(-i H t)` for Hermitian `H`, through its eigendecomposition.
pub fn unitary_propagator(h: &CMatrix, t: f64) -> CMatrix {
    let eig = h.clone().symmetric_eigen();
    let v = &eig.eigenvectors;
    let phases = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&e| Complex64::from_polar(1.0, -e * t)),
    ));
    v * phases * v.adjoint()
}

/// Inverse square root of a Hermitian positive-definite matrix.
pub fn inverse_sqrt_psd(m: &CMatrix) -> CMatrix {
    let eig = m.clone().symmetric_eigen();
    let v = &eig.eigenvectors;
    let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&e| c(1.0 / e.max(1e-300).sqrt(), 0.0)),
    ));
    v * d * v.adjoint()
}

/// Single-qubit rotation `exp(-i angle/2 (axis . sigma))` for a unit `axis`.
pub fn rotation(axis: [f64; 3], angle: f64) -> Mat2 {
    let (s, co) = (angle / 2.0).sin_cos();
    let [x, y, z] = axis;
    Mat2::new(c(co, -s * z), c(-s * y, -s * x), c(s * y, -s * x), c(co, s * z))
}

pub fn rx(angle: f64) -> Mat2 {
    rotation([1.0, 0.0, 0.0], angle)
}

pub fn rz(angle: f64) -> Mat2 {
    rotation([0.0, 0.0, 1.0], angle)
}

/// Bloch vector of the Hermitian traceless part of a 2x2 operator,
/// `r_k = Re Tr[A sigma_k]`.
pub fn bloch_of(a: &Mat2) -> [f64; 3] {
    [
        (a[(0, 1)] + a[(1, 0)]).re,
        (c(0.0, 1.0) * a[(0, 1)] - c(0.0, 1.0) * a[(1, 0)]).re,
        (a[(0, 0)] - a[(1, 1)]).re,
    ]
}

/// Measuring Z after `u` measures `n . sigma` with `n` returned here.
pub fn measured_direction(u: &Mat2) -> [f64; 3] {
    let z = Mat2::new(ONE, ZERO, ZERO, -ONE);
    let op = u.adjoint() * z * u;
    let b = bloch_of(&op);
    [b[0] / 2.0, b[1] / 2.0, b[2] / 2.0]
}

/// In-place conjugation `rho -> U_q rho U_q^dagger` of a row-major `d x d`
/// buffer by a single-qubit unitary acting on `qubit`.
pub fn conjugate_qubit(rho: &mut [Complex64], n_qubits: usize, qubit: usize, u: &Mat2) {
    let d = 1usize << n_qubits;
    let stride = 1usize << (n_qubits - 1 - qubit);
    let (u00, u01, u10, u11) = (u[(0, 0)], u[(0, 1)], u[(1, 0)], u[(1, 1)]);
    // Left multiplication on rows.
    for r0 in 0..d {
        if r0 & stride != 0 {
            continue;
        }
        let r1 = r0 | stride;
        for col in 0..d {
            let a = rho[r0 * d + col];
            let b = rho[r1 * d + col];
            rho[r0 * d + col] = u00 * a + u01 * b;
            rho[r1 * d + col] = u10 * a + u11 * b;
        }
    }
    // Right multiplication by U^dagger on columns.
    let (v00, v01, v10, v11) = (u00.conj(), u10.conj(), u01.conj(), u11.conj());
    for row in 0..d {
        let base = row * d;
        for c0 in 0..d {
            if c0 & stride != 0 {
                continue;
            }
            let c1 = c0 | stride;
            let a = rho[base + c0];
            let b = rho[base + c1];
            rho[base + c0] = a * v00 + b * v10;
            rho[base + c1] = a * v01 + b * v11;
        }
    }
}

pub fn to_row_major(m: &CMatrix) -> Vec<Complex64> {
    let (r, cdim) = m.shape();
    let mut out = Vec::with_capacity(r * cdim);
    for i in 0..r {
        for j in 0..cdim {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Embed a single-qubit operator on `qubit` of an `n_qubits` register.
pub fn embed_single(op: &Mat2, qubit: usize, n_qubits: usize) -> CMatrix {
    let id = CMatrix::identity(2, 2);
    let op = mat2_to_dense(op);
    let factors: Vec<&CMatrix> = (0..n_qubits).map(|j| if j == qubit { &op } else { &id }).collect();
    kron_all(factors)
}

/// Serializable complex matrix as row-major real and imaginary parts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixSpec {
    pub re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<Vec<f64>>>,
}

impl MatrixSpec {
    pub fn from_matrix(m: &CMatrix) -> Self {
        let rows = |f: fn(&Complex64) -> f64| {
            (0..m.nrows())
                .map(|r| (0..m.ncols()).map(|col| f(&m[(r, col)])).collect())
                .collect()
        };
        Self {
            re: rows(|z| z.re),
            im: Some(rows(|z| z.im)),
        }
    }

    /// Returns `None` when the rows are ragged or the parts disagree in shape.
    pub fn to_matrix(&self) -> Option<CMatrix> {
        let nr = self.re.len();
        let nc = self.re.first().map_or(0, Vec::len);
        if nr == 0 || self.re.iter().any(|r| r.len() != nc) {
            return None;
        }
        if let Some(im) = &self.im {
            if im.len() != nr || im.iter().any(|r| r.len() != nc) {
                return None;
            }
        }
        Some(CMatrix::from_fn(nr, nc, |r, col| {
            c(self.re[r][col], self.im.as_ref().map_or(0.0, |im| im[r][col]))
        }))
    }
}
