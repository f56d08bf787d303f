//! Virtual-Z decomposition `R_X(pi/2) R_Z(beta) R_X(pi/2) R_Z(alpha)` with the
//! trailing `R_Z(gamma)` dropped, since it commutes with a Z measurement.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::linalg::{self, Mat2};

/// The reconstructed pre-measurement gate for phases `(alpha, beta)`.
pub fn virtual_z_unitary(alpha: f64, beta: f64) -> Mat2 {
    linalg::rx(FRAC_PI_2) * linalg::rz(beta) * linalg::rx(FRAC_PI_2) * linalg::rz(alpha)
}

/// Phases measuring along the unit vector `n`.
///
/// The gate above measures `(sin b cos a, -sin b sin a, -cos b)`, so
/// `alpha = -phi` and `beta = pi - theta`. At the poles `phi` is undefined and
/// set to zero.
pub fn phases_for_direction(n: [f64; 3]) -> (f64, f64) {
    let theta = n[2].clamp(-1.0, 1.0).acos();
    let rho = n[0].hypot(n[1]);
    let phi = if rho < 1e-14 { 0.0 } else { n[1].atan2(n[0]) };
    (-phi, PI - theta)
}

/// Phases whose reconstructed gate yields the same Z-basis statistics as `v`.
pub fn virtual_z_decompose(v: &Mat2) -> (f64, f64) {
    phases_for_direction(linalg::measured_direction(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, rotation, ONE, ZERO};
    use crate::pauli::gaussian;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn z_populations(u: &Mat2, rho: &Mat2) -> [f64; 2] {
        let out = u * rho * u.adjoint();
        [out[(0, 0)].re, out[(1, 1)].re]
    }

    fn haar_unitary(rng: &mut ChaCha8Rng) -> Mat2 {
        // A normalized Gaussian quaternion is Haar-distributed on SU(2).
        let q: Vec<f64> = (0..4).map(|_| gaussian(rng)).collect();
        let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        let (a, b, cc, d) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
        Mat2::new(c(a, b), c(cc, d), c(-cc, d), c(a, -b))
    }

    fn random_state(rng: &mut ChaCha8Rng) -> Mat2 {
        let r: Vec<f64> = (0..3).map(|_| gaussian(rng)).collect();
        let n = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        let len = 0.999 * n.min(1.0);
        let b = [r[0] / n * len, r[1] / n * len, r[2] / n * len];
        Mat2::new(
            c(0.5 * (1.0 + b[2]), 0.0),
            c(0.5 * b[0], -0.5 * b[1]),
            c(0.5 * b[0], 0.5 * b[1]),
            c(0.5 * (1.0 - b[2]), 0.0),
        )
    }

    #[test]
    fn measured_direction_formula() {
        for &(a, b) in &[(0.3, 1.1), (-2.0, 0.4), (1.0, 3.0)] {
            let n = linalg::measured_direction(&virtual_z_unitary(a, b));
            let expect = [f64::sin(b) * f64::cos(a), -f64::sin(b) * f64::sin(a), -f64::cos(b)];
            for k in 0..3 {
                assert!((n[k] - expect[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn z_measurement_unchanged_for_identity() {
        let (a, b) = virtual_z_decompose(&Mat2::identity());
        let u = virtual_z_unitary(a, b);
        let zero = Mat2::new(ONE, ZERO, ZERO, ZERO);
        let one = Mat2::new(ZERO, ZERO, ZERO, ONE);
        assert!((z_populations(&u, &zero)[0] - 1.0).abs() < 1e-12);
        assert!((z_populations(&u, &one)[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn x_measurement_on_plus_is_certain() {
        let (a, b) = phases_for_direction([1.0, 0.0, 0.0]);
        let u = virtual_z_unitary(a, b);
        let plus = Mat2::new(c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0));
        assert!((z_populations(&u, &plus)[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn haar_random_gates_reproduce_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let v = haar_unitary(&mut rng);
            let (a, b) = virtual_z_decompose(&v);
            let u = virtual_z_unitary(a, b);
            let rho = random_state(&mut rng);
            let (pv, pu) = (z_populations(&v, &rho), z_populations(&u, &rho));
            assert!((pv[0] - pu[0]).abs() < 1e-10, "{pv:?} {pu:?}");
        }
    }

    #[test]
    fn pole_directions() {
        for n in [[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]] {
            let (a, b) = phases_for_direction(n);
            let got = linalg::measured_direction(&virtual_z_unitary(a, b));
            assert!((got[2] - n[2]).abs() < 1e-12);
        }
        let v = rotation([0.0, 1.0, 0.0], 0.7);
        let got = linalg::measured_direction(&virtual_z_unitary(virtual_z_decompose(&v).0, virtual_z_decompose(&v).1));
        let want = linalg::measured_direction(&v);
        for k in 0..3 {
            assert!((got[k] - want[k]).abs() < 1e-12);
        }
    }
}
