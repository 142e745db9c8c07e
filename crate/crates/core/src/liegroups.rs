//! SO(3)/SE(3) primitives: hat/vee maps, exponential and logarithm, orthogonal
//! projection, and isotropic Langevin sampling.
//!
//! Rotations are stored as 3×3 matrices (no quaternions; the double cover is a
//! known source of sign trouble for the relaxations built on top of this
//! module). All values are immutable and cheap to copy.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use std::f64::consts::PI;
use thiserror::Error;

/// Axis–angle tangent vector (radians, axis scaled by angle).
pub type AxisAngle = Vector3<f64>;

/// Default elementwise tolerance for rotation validation.
pub const ROTATION_RESIDUAL_TOL: f64 = 1e-9;
/// Margin below π where the logarithm is rejected.
pub const LOG_ANGLE_MARGIN: f64 = 1e-6;
/// Relative singular-value cutoff for the Procrustes projection.
pub const PROCRUSTES_RANK_TOL: f64 = 1e-12;
/// Frobenius tolerance on `S + Sᵀ` accepted by [`vee`].
pub const SKEW_RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LieError {
    #[error("matrix is not skew-symmetric (‖S + Sᵀ‖ = {0:.3e})")]
    NotSkew(f64),
    #[error("rotation angle {0:.9} is within the rejection margin of π")]
    NearPiAngle(f64),
    #[error("matrix is rank deficient (σ_min/σ_max = {0:.3e})")]
    RankDeficient(f64),
    #[error("matrix is not a rotation (orthogonality/determinant residual = {0:.3e})")]
    NotARotation(f64),
}

/// An element of SO(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Wraps a matrix after checking `RᵀR = I` and `det R = 1` to
    /// [`ROTATION_RESIDUAL_TOL`] elementwise.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, LieError> {
        let residual = Self::rotation_residual(&m);
        if residual > ROTATION_RESIDUAL_TOL {
            return Err(LieError::NotARotation(residual));
        }
        Ok(Rotation(m))
    }

    /// Wraps a matrix without validation. Callers must guarantee the invariants.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Rotation(m)
    }

    /// Max elementwise residual of `RᵀR − I`, combined with `|det R − 1|`.
    pub fn rotation_residual(m: &Matrix3<f64>) -> f64 {
        let gram = m.transpose() * m - Matrix3::identity();
        gram.amax().max((m.determinant() - 1.0).abs())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Rotation {
        Rotation(self.0.transpose())
    }

    pub fn inverse(&self) -> Rotation {
        self.transpose()
    }

    /// Rotation angle in radians, in `[0, π]`.
    pub fn angle(&self) -> f64 {
        ((self.0.trace() - 1.0) * 0.5).clamp(-1.0, 1.0).acos()
    }

    /// Geodesic distance to `other` in radians. Always defined, including at π.
    pub fn geodesic_angle(&self, other: &Rotation) -> f64 {
        (self.transpose() * *other).angle()
    }

    /// Column-major vectorization `vec(R) ∈ R⁹`.
    pub fn vectorize(&self) -> [f64; 9] {
        let mut out = [0.0; 9];
        for c in 0..3 {
            for r in 0..3 {
                out[3 * c + r] = self.0[(r, c)];
            }
        }
        out
    }

    /// Haar-uniform rotation (via a uniform unit quaternion).
    pub fn sample_uniform<R: Rng + ?Sized>(rng: &mut R) -> Rotation {
        loop {
            let q: [f64; 4] = [randn(rng), randn(rng), randn(rng), randn(rng)];
            let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
            if n < 1e-6 {
                continue;
            }
            let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
            let m = Matrix3::new(
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            );
            return Rotation(m);
        }
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl std::ops::Mul<Vector3<f64>> for Rotation {
    type Output = Vector3<f64>;
    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

/// An element of SE(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Pose { rotation: Rotation::identity(), translation: Vector3::zeros() }
    }

    pub fn new(rotation: Rotation, translation: Vector3<f64>) -> Self {
        Pose { rotation, translation }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose { rotation: rt, translation: -(rt * self.translation) }
    }

    /// 4×4 homogeneous matrix, row-major when flattened.
    pub fn to_homogeneous(&self) -> [[f64; 4]; 4] {
        let r = self.rotation.matrix();
        let t = self.translation;
        [
            [r[(0, 0)], r[(0, 1)], r[(0, 2)], t[0]],
            [r[(1, 0)], r[(1, 1)], r[(1, 2)], t[1]],
            [r[(2, 0)], r[(2, 1)], r[(2, 2)], t[2]],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }
}

impl std::ops::Mul for Pose {
    type Output = Pose;
    fn mul(self, rhs: Pose) -> Pose {
        Pose {
            rotation: self.rotation * rhs.rotation,
            translation: self.rotation * rhs.translation + self.translation,
        }
    }
}

/// Standard normal draw; pinned to f64 to avoid `Distribution` ambiguity.
pub(crate) fn randn<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    use rand_distr::Distribution;
    rand_distr::StandardNormal.sample(rng)
}

/// Skew-symmetric (wedge) operator: `hat(v)·w = v × w`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v[2], v[1], v[2], 0.0, -v[0], -v[1], v[0], 0.0)
}

/// Inverse of [`hat`]. Fails if `S` is not skew-symmetric to [`SKEW_RESIDUAL_TOL`].
pub fn vee(s: &Matrix3<f64>) -> Result<Vector3<f64>, LieError> {
    let sym = (s + s.transpose()).norm();
    if sym > SKEW_RESIDUAL_TOL {
        return Err(LieError::NotSkew(sym));
    }
    Ok(Vector3::new(s[(2, 1)], s[(0, 2)], s[(1, 0)]))
}

/// SO(3) exponential via the Rodrigues formula, with series branches near zero.
pub fn exp_so3(v: &AxisAngle) -> Rotation {
    let theta2 = v.norm_squared();
    let theta = theta2.sqrt();
    let (a, b) = if theta < 1e-4 {
        // sinθ/θ and (1−cosθ)/θ²
        (
            1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0,
            0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0,
        )
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let k = hat(v);
    Rotation(Matrix3::identity() + k * a + k * k * b)
}

/// SO(3) logarithm. Rejects angles within [`LOG_ANGLE_MARGIN`] of π rather than
/// resolving the antipodal axis-sign ambiguity.
pub fn log_so3(r: &Rotation) -> Result<AxisAngle, LieError> {
    let m = r.matrix();
    let cos = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = cos.acos();
    if theta > PI - LOG_ANGLE_MARGIN {
        return Err(LieError::NearPiAngle(theta));
    }
    // w = sinθ · axis
    let w = Vector3::new(
        m[(2, 1)] - m[(1, 2)],
        m[(0, 2)] - m[(2, 0)],
        m[(1, 0)] - m[(0, 1)],
    ) * 0.5;
    if theta < 1e-6 {
        // θ/sinθ ≈ 1 + θ²/6
        return Ok(w * (1.0 + theta * theta / 6.0));
    }
    if theta < 3.0 * PI / 4.0 {
        return Ok(w * (theta / theta.sin()));
    }
    // Close to π the skew part cancels; recover the axis from the symmetric part
    // R + Rᵀ = 2cosθ·I + 2(1−cosθ)·aaᵀ and take the sign from w.
    let one_minus = 1.0 - cos;
    let mut axis = Vector3::new(
        ((m[(0, 0)] - cos) / one_minus).max(0.0).sqrt(),
        ((m[(1, 1)] - cos) / one_minus).max(0.0).sqrt(),
        ((m[(2, 2)] - cos) / one_minus).max(0.0).sqrt(),
    );
    let k = axis.imax();
    let sym = (m + m.transpose()) * 0.5;
    for i in 0..3 {
        if i != k {
            axis[i] = sym[(i, k)] / (one_minus * axis[k]);
        }
    }
    axis.normalize_mut();
    if axis.dot(&w) < 0.0 {
        axis = -axis;
    }
    Ok(axis * theta)
}

/// Orthogonal Procrustes projection: the SO(3) element closest to `m` in
/// Frobenius norm. The sign of the last singular direction is flipped when
/// needed so the determinant is +1.
pub fn project_to_so3(m: &Matrix3<f64>) -> Result<Rotation, LieError> {
    let svd = nalgebra::SVD::new(*m, true, true);
    let s = svd.singular_values;
    let ratio = s[2] / s[0];
    if !(ratio > PROCRUSTES_RANK_TOL) {
        return Err(LieError::RankDeficient(ratio));
    }
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let det = (u * vt).determinant();
    let mut d = Matrix3::identity();
    d[(2, 2)] = det.signum();
    Ok(Rotation(u * d * vt))
}

/// Draws `mode · E` with `E` from the isotropic Langevin distribution over SO(3)
/// with density ∝ exp(κ·tr(E)).
///
/// Exact rejection sampler in axis-angle coordinates: the angle density is
/// ∝ exp(2κ·cosθ)(1−cosθ) on [0, π] (the Haar measure carries the (1−cosθ)
/// factor). The proposal is a scaled χ₃ draw θ = σ‖n‖, n ~ N(0, I₃) with
/// σ² = min(π²/4, π²/(8κ)); since 1−cosθ ≥ 2θ²/π² on [0, π] the acceptance
/// ratio is provably ≤ 1 and the sampler stays O(1) per draw for all κ ≥ 0.
pub fn sample_langevin<R: Rng + ?Sized>(mode: &Rotation, kappa: f64, rng: &mut R) -> Rotation {
    debug_assert!(kappa >= 0.0, "Langevin concentration must be nonnegative");
    let kappa = kappa.max(0.0);

    let sigma2 = if kappa >= 0.5 { PI * PI / (8.0 * kappa) } else { PI * PI / 4.0 };
    let sigma = sigma2.sqrt();
    // Envelope constants: exponent ≤ 0 for κ ≥ 1/2, ≤ 2 otherwise.
    let log_k = if kappa >= 0.5 { (0.5f64).ln() } else { (0.5f64).ln() + 2.0 };

    let theta = loop {
        let n = Vector3::new(randn(rng), randn(rng), randn(rng));
        let theta: f64 = sigma * n.norm();
        if theta > PI || theta == 0.0 {
            continue;
        }
        let half = 0.5 * theta;
        let sin_half2 = half.sin() * half.sin();
        // log target/proposal: log[(1−cosθ)/θ²] + 2κ(cosθ−1) + θ²/(2σ²) − log K
        let log_ratio = (2.0 * sin_half2 / (theta * theta)).ln()
            + (-4.0 * kappa * sin_half2)
            + theta * theta / (2.0 * sigma2)
            - log_k;
        debug_assert!(log_ratio <= 1e-12, "rejection envelope violated");
        let u: f64 = rng.random();
        if u.ln() < log_ratio {
            break theta;
        }
    };

    let axis: Vector3<f64> = loop {
        let n = Vector3::new(randn(rng), randn(rng), randn(rng));
        let norm = n.norm();
        if norm > 1e-6 {
            break n / norm;
        }
    };
    *mode * exp_so3(&(axis * theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    fn random_axis_angle<R: Rng>(r: &mut R, max_angle: f64) -> AxisAngle {
        let v = Vector3::new(randn(r), randn(r), randn(r));
        let angle: f64 = r.random_range(0.0..max_angle);
        v.normalize() * angle
    }

    #[test]
    fn hat_zero_and_pattern() {
        assert_eq!(hat(&Vector3::zeros()), Matrix3::zeros());
        let h = hat(&Vector3::new(0.0, 0.0, 1.0));
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(h, expected);
    }

    #[test]
    fn hat_matches_cross_product() {
        let mut r = rng(1);
        for _ in 0..100 {
            let v = random_axis_angle(&mut r, 2.0);
            let w = random_axis_angle(&mut r, 2.0);
            let cross = Vector3::new(
                v[1] * w[2] - v[2] * w[1],
                v[2] * w[0] - v[0] * w[2],
                v[0] * w[1] - v[1] * w[0],
            );
            assert_abs_diff_eq!(hat(&v) * w, cross, epsilon = 1e-14);
        }
    }

    #[test]
    fn vee_round_trip_and_rejection() {
        assert_eq!(vee(&Matrix3::zeros()).unwrap(), Vector3::zeros());
        let v = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(vee(&hat(&v)).unwrap(), v);
        let mut r = rng(2);
        for _ in 0..50 {
            let s = hat(&random_axis_angle(&mut r, 3.0));
            assert_abs_diff_eq!(hat(&vee(&s).unwrap()), s, epsilon = 1e-14);
        }
        let not_skew = Matrix3::new(0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert!(matches!(vee(&not_skew), Err(LieError::NotSkew(_))));
    }

    #[test]
    fn exp_zero_and_quarter_turn() {
        assert_abs_diff_eq!(
            *exp_so3(&Vector3::zeros()).matrix(),
            Matrix3::identity(),
            epsilon = 1e-15
        );
        let q = exp_so3(&Vector3::new(0.0, 0.0, PI / 2.0));
        assert_abs_diff_eq!(q * Vector3::x(), Vector3::y(), epsilon = 1e-12);
    }

    #[test]
    fn log_exp_round_trip() {
        let mut r = rng(3);
        for _ in 0..200 {
            let v = random_axis_angle(&mut r, PI - 1e-3);
            let back = log_so3(&exp_so3(&v)).unwrap();
            assert_abs_diff_eq!(back, v, epsilon = 1e-10);
            assert_abs_diff_eq!(exp_so3(&v).angle(), v.norm(), epsilon = 1e-9);
        }
    }

    #[test]
    fn log_rejects_near_pi() {
        let v = Vector3::new(1.0, 0.0, 0.0) * (PI - 1e-8);
        assert!(matches!(log_so3(&exp_so3(&v)), Err(LieError::NearPiAngle(_))));
    }

    #[test]
    fn exp_stays_on_manifold_and_composition_closes() {
        let mut r = rng(4);
        for _ in 0..100 {
            let a = exp_so3(&random_axis_angle(&mut r, PI - 0.01));
            let b = exp_so3(&random_axis_angle(&mut r, PI - 0.01));
            assert!(Rotation::rotation_residual(a.matrix()) < 1e-12);
            assert!(Rotation::rotation_residual((a * b).matrix()) < 1e-12);
        }
    }

    #[test]
    fn projection_idempotent_scale_invariant_and_minimal() {
        let mut r = rng(5);
        for _ in 0..50 {
            let rot = exp_so3(&random_axis_angle(&mut r, 3.0));
            let p = project_to_so3(rot.matrix()).unwrap();
            assert_abs_diff_eq!(*p.matrix(), *rot.matrix(), epsilon = 1e-12);
            let p2 = project_to_so3(&(rot.matrix() * 2.0)).unwrap();
            assert_abs_diff_eq!(*p2.matrix(), *rot.matrix(), epsilon = 1e-12);
        }
        // Small perturbations stay close in the geodesic metric.
        for _ in 0..50 {
            let rot = exp_so3(&random_axis_angle(&mut r, 3.0));
            let mut m = *rot.matrix();
            for i in 0..3 {
                for j in 0..3 {
                    m[(i, j)] += 0.01 * (r.random::<f64>() - 0.5);
                }
            }
            let p = project_to_so3(&m).unwrap();
            assert!(p.geodesic_angle(&rot) < 0.05);
        }
        // Frobenius minimality against random SO(3) candidates.
        let mut m = *exp_so3(&random_axis_angle(&mut r, 2.0)).matrix();
        m[(0, 1)] += 0.3;
        m[(2, 0)] -= 0.2;
        let p = project_to_so3(&m).unwrap();
        let best = (m - p.matrix()).norm();
        for _ in 0..100 {
            let s = Rotation::sample_uniform(&mut r);
            assert!(best <= (m - s.matrix()).norm() + 1e-12);
        }
    }

    #[test]
    fn projection_rejects_rank_deficient() {
        let m = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0);
        assert!(matches!(project_to_so3(&m), Err(LieError::RankDeficient(_))));
    }

    #[test]
    fn langevin_concentrates_at_large_kappa() {
        let mut r = rng(6);
        let mode = exp_so3(&Vector3::new(0.3, -0.2, 0.9));
        for _ in 0..100 {
            let s = sample_langevin(&mode, 1e8, &mut r);
            assert!(mode.geodesic_angle(&s) < 1e-3);
        }
    }

    #[test]
    fn langevin_kappa_zero_is_haar() {
        let mut r = rng(7);
        let n = 100_000;
        let mut mean_tr = 0.0;
        for _ in 0..n {
            let s = sample_langevin(&Rotation::identity(), 0.0, &mut r);
            mean_tr += s.matrix().trace();
        }
        mean_tr /= n as f64;
        assert!(mean_tr.abs() < 0.02, "mean trace {mean_tr}");
    }

    #[test]
    fn langevin_angle_scale_matches_gaussian_approximation() {
        // The deflection of a tracked direction under Lang(I, κ) is the
        // von-Mises-like observable; its RMS is 1/√κ asymptotically.
        let mut r = rng(8);
        for kappa in [12.0, 125.0] {
            let n = 100_000;
            let v = Vector3::z();
            let mut sum_sq = 0.0;
            for _ in 0..n {
                let s = sample_langevin(&Rotation::identity(), kappa, &mut r);
                let c = (s * v).dot(&v).clamp(-1.0, 1.0);
                let d = c.acos();
                sum_sq += d * d;
            }
            let rms = (sum_sq / n as f64).sqrt();
            let expected = 1.0 / kappa.sqrt();
            assert!(
                (rms - expected).abs() < 0.1 * expected,
                "kappa {kappa}: rms {rms} vs {expected}"
            );
        }
    }

    #[test]
    fn langevin_seeded_reproducibility() {
        let mode = exp_so3(&Vector3::new(0.1, 0.2, 0.3));
        let a = sample_langevin(&mode, 50.0, &mut rng(99));
        let b = sample_langevin(&mode, 50.0, &mut rng(99));
        assert_eq!(a.matrix(), b.matrix());
    }

    #[test]
    fn pose_compose_inverse() {
        let mut r = rng(9);
        for _ in 0..50 {
            let p = Pose::new(
                exp_so3(&random_axis_angle(&mut r, 3.0)),
                Vector3::new(r.random(), r.random(), r.random()),
            );
            let id = p * p.inverse();
            assert_abs_diff_eq!(*id.rotation.matrix(), Matrix3::identity(), epsilon = 1e-12);
            assert_abs_diff_eq!(id.translation, Vector3::zeros(), epsilon = 1e-12);
        }
    }
}
