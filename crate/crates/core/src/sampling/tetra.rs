//! The 12-element tetrahedral rotation group as single-qubit unitaries.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::linalg::{self, c, CMatrix, Mat2};

use super::virtual_z::phases_for_direction;

#[derive(Clone, Debug)]
pub struct TetraElement {
    /// Rotation axis (unnormalized) and angle; the identity has angle 0.
    pub axis: [f64; 3],
    pub angle: f64,
    pub unitary: Mat2,
    /// Measured Bloch direction, exactly one of the six signed axes.
    pub direction: [f64; 3],
    pub phases: (f64, f64),
}

/// Identity, pi about x/y/z, then +-2pi/3 about each cube body diagonal.
pub fn tetrahedral_group() -> &'static [TetraElement; 12] {
    static GROUP: OnceLock<[TetraElement; 12]> = OnceLock::new();
    GROUP.get_or_init(|| {
        let mut rotations: Vec<([f64; 3], f64)> = vec![
            ([0.0, 0.0, 1.0], 0.0),
            ([1.0, 0.0, 0.0], PI),
            ([0.0, 1.0, 0.0], PI),
            ([0.0, 0.0, 1.0], PI),
        ];
        for diag in [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]] {
            rotations.push((diag, 2.0 * PI / 3.0));
            rotations.push((diag, -2.0 * PI / 3.0));
        }
        let elements: Vec<TetraElement> = rotations
            .into_iter()
            .map(|(axis, angle)| {
                let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
                let unit = [axis[0] / norm, axis[1] / norm, axis[2] / norm];
                let unitary = linalg::rotation(unit, angle);
                let direction = linalg::measured_direction(&unitary).map(f64::round);
                TetraElement {
                    axis,
                    angle,
                    unitary,
                    direction,
                    phases: phases_for_direction(direction),
                }
            })
            .collect();
        elements.try_into().expect("twelve elements")
    })
}

/// Exact Haar average of `U (x) U rho U^dagger (x) U^dagger` over single-qubit
/// unitaries for a 4x4 two-copy operator: `a I + b SWAP`.
pub fn haar_two_copy_average(rho: &CMatrix) -> CMatrix {
    let d = 2.0;
    let swap = swap_operator();
    let tr = rho.trace();
    let tr_swap = (rho * &swap).trace();
    let a = (tr - tr_swap / d) / (d * d - 1.0);
    let b = (tr_swap - tr / d) / (d * d - 1.0);
    CMatrix::identity(4, 4) * a + swap * b
}

/// `(1/12) sum_U U (x) U rho U^dagger (x) U^dagger` over the group.
pub fn tetra_two_copy_average(rho: &CMatrix) -> CMatrix {
    let mut acc = CMatrix::zeros(4, 4);
    for g in tetrahedral_group() {
        let u = linalg::mat2_to_dense(&g.unitary);
        let uu = u.kronecker(&u);
        acc += &uu * rho * uu.adjoint();
    }
    acc / c(12.0, 0.0)
}

fn swap_operator() -> CMatrix {
    CMatrix::from_fn(4, 4, |r, col| {
        let swapped = ((col & 1) << 1) | (col >> 1);
        if r == swapped {
            c(1.0, 0.0)
        } else {
            c(0.0, 0.0)
        }
    })
}
