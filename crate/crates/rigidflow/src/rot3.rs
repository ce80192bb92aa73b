//! SO(3)/SE(3) geometry: hat/vee maps, Rodrigues exponential and logarithm,
//! geodesics, the bi-invariant metric and Haar-uniform sampling.
//!
//! Conventions (shared by every module in this crate):
//! * coordinates are ROW vectors and rotations act on the right, `p ↦ p·R`;
//! * tangent vectors are body-frame axis-angle coefficients `w` at a base
//!   rotation, `exp_at(R, w) = R · exp(ŵ)`;
//! * the metric is `⟨U, V⟩ = ½ Tr(UᵀV)`, under which `‖ŵ‖ = ‖w‖`.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::Real;

/// Angle (rad) below which exp/log switch to Taylor expansions.
const SMALL_ANGLE: f64 = 1e-4;
/// Angle gap to π below which the logarithm is refused (cut locus).
const ANTIPODE_CUT: f64 = 1e-6;
/// Angle gap to π below which the log switches to the symmetric-part
/// eigenvector branch.
const NEAR_PI: f64 = 1e-2;
/// Frobenius drift of `RᵀR − I` beyond which compositions re-orthonormalise.
const DRIFT_LIMIT: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Rot3Error {
    /// The target lies within the cut-locus margin of the base's antipode;
    /// the logarithm's axis is ill-defined and the caller must perturb.
    #[error("rotation angle {angle} rad is within {margin} of pi (cut locus)")]
    AngleNearPi { angle: f64, margin: f64 },
    #[error("matrix is not a proper rotation: {0}")]
    NotARotation(String),
}

fn c<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant must convert to the scalar type")
}

fn to_f64<T: Real>(x: T) -> f64 {
    nalgebra::try_convert::<T, f64>(x).unwrap_or(f64::NAN)
}

/// Skew-symmetric matrix `ŵ` of a 3-vector, so that `ŵ·v = w × v`.
pub fn hat<T: Real>(w: &Vector3<T>) -> Matrix3<T> {
    Matrix3::new(
        T::zero(),
        -w.z,
        w.y,
        w.z,
        T::zero(),
        -w.x,
        -w.y,
        w.x,
        T::zero(),
    )
}

/// Inverse of [`hat`]. Does not check skew-symmetry.
pub fn vee<T: Real>(m: &Matrix3<T>) -> Vector3<T> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Rodrigues closed form of `exp(ŵ)`.
fn exp_so3<T: Real>(w: &Vector3<T>) -> Matrix3<T> {
    let theta_sq = w.norm_squared();
    let theta = theta_sq.sqrt();
    let (a, b) = if theta < c(SMALL_ANGLE) {
        // sinθ/θ and (1−cosθ)/θ² by Taylor expansion.
        (
            T::one() - theta_sq / c(6.0) + theta_sq * theta_sq / c(120.0),
            c::<T>(0.5) - theta_sq / c(24.0) + theta_sq * theta_sq / c(720.0),
        )
    } else {
        (theta.sin() / theta, (T::one() - theta.cos()) / theta_sq)
    };
    let k = hat(w);
    Matrix3::identity() + k * a + k * k * b
}

/// Rotation angle of a proper rotation matrix, accurate over all of `[0, π]`.
fn matrix_angle<T: Real>(m: &Matrix3<T>) -> T {
    let sin_half = ((m - Matrix3::identity()).norm() / c(8.0f64.sqrt())).clamp(T::zero(), T::one());
    let cos_half = (((m + Matrix3::identity()).norm_squared() - c(4.0)) / c(8.0))
        .max(T::zero())
        .sqrt();
    c::<T>(2.0) * sin_half.atan2(cos_half)
}

/// Axis-angle coefficients of `log(m)` for a proper rotation `m`.
fn log_so3<T: Real>(m: &Matrix3<T>) -> Result<Vector3<T>, Rot3Error> {
    let theta = matrix_angle(m);
    let skew = (m - m.transpose()) / c::<T>(2.0);

    if theta < c(SMALL_ANGLE) {
        // θ/(2 sinθ) = ½ + θ²/12 + 7θ⁴/720 + O(θ⁶)
        let t2 = theta * theta;
        let factor = c::<T>(0.5) + t2 / c(12.0) + t2 * t2 * c(7.0 / 720.0);
        return Ok(vee(&skew) * (factor * c(2.0)));
    }
    if theta > c(std::f64::consts::PI - ANTIPODE_CUT) {
        return Err(Rot3Error::AngleNearPi {
            angle: to_f64(theta),
            margin: ANTIPODE_CUT,
        });
    }
    if theta > c(std::f64::consts::PI - NEAR_PI) {
        // Near π the skew part degenerates; recover the axis as the dominant
        // eigenvector of (M + Mᵀ)/2 = cosθ·I + (1−cosθ)·aaᵀ (eigenvalue 1),
        // with the sign fixed by the remaining skew component sinθ·â.
        let sym = (m + m.transpose()) / c::<T>(2.0);
        let eig = sym.symmetric_eigen();
        let mut idx = 0;
        for i in 1..3 {
            if eig.eigenvalues[i] > eig.eigenvalues[idx] {
                idx = i;
            }
        }
        let mut axis: Vector3<T> = eig.eigenvectors.column(idx).into();
        axis /= axis.norm();
        if vee(&skew).dot(&axis) < T::zero() {
            axis = -axis;
        }
        return Ok(axis * theta);
    }
    Ok(vee(&skew) * (theta / theta.sin()))
}

/// A proper rotation matrix (orthonormal, determinant +1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation<T: Real> {
    m: Matrix3<T>,
}

impl<T: Real> Rotation<T> {
    pub fn identity() -> Self {
        Rotation {
            m: Matrix3::identity(),
        }
    }

    /// Wraps a matrix after checking the rotation invariants to 1e-9.
    pub fn from_matrix(m: Matrix3<T>) -> Result<Self, Rot3Error> {
        let drift = (m.transpose() * m - Matrix3::identity()).norm();
        if drift > c(1e-9) {
            return Err(Rot3Error::NotARotation(format!(
                "orthogonality drift {}",
                to_f64(drift)
            )));
        }
        let det = m.determinant();
        if (det - T::one()).abs() > c(1e-9) {
            return Err(Rot3Error::NotARotation(format!(
                "determinant {}",
                to_f64(det)
            )));
        }
        Ok(Rotation { m })
    }

    /// Wraps a matrix that is already known to be a proper rotation.
    pub fn from_matrix_unchecked(m: Matrix3<T>) -> Self {
        Rotation { m }
    }

    pub fn matrix(&self) -> &Matrix3<T> {
        &self.m
    }

    pub fn transposed(&self) -> Self {
        Rotation {
            m: self.m.transpose(),
        }
    }

    /// Group inverse; equal to the transpose.
    pub fn inverse(&self) -> Self {
        self.transposed()
    }

    /// Matrix product `self · other`, re-orthonormalised when drift exceeds
    /// the composition limit.
    pub fn compose(&self, other: &Self) -> Self {
        let mut m = self.m * other.m;
        let drift = (m.transpose() * m - Matrix3::identity()).norm();
        if drift > c(DRIFT_LIMIT) {
            m = polar_project(&m);
        }
        Rotation { m }
    }

    /// Row-vector action `p ↦ p·R` on a point stored as a column.
    pub fn apply_row(&self, p: &Vector3<T>) -> Vector3<T> {
        self.m.transpose() * p
    }

    /// Frobenius drift `‖RᵀR − I‖_F`, exposed for drift tests.
    pub fn orthogonality_drift(&self) -> T {
        (self.m.transpose() * self.m - Matrix3::identity()).norm()
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> T {
        geodesic_dist(self, &Rotation::identity())
    }

    /// Nearest proper rotation in the Frobenius sense (polar projection).
    pub fn project(m: &Matrix3<T>) -> Self {
        Rotation {
            m: polar_project(m),
        }
    }
}

fn polar_project<T: Real>(m: &Matrix3<T>) -> Matrix3<T> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    let det = (u * v_t).determinant();
    let sign = if det < T::zero() { -T::one() } else { T::one() };
    let d = Matrix3::from_diagonal(&Vector3::new(T::one(), T::one(), sign));
    u * d * v_t
}

/// Body-frame tangent vector at a base rotation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentVec<T: Real> {
    pub w: Vector3<T>,
    pub base: Rotation<T>,
}

impl<T: Real> TangentVec<T> {
    pub fn new(w: Vector3<T>, base: Rotation<T>) -> Self {
        TangentVec { w, base }
    }

    pub fn zero(base: Rotation<T>) -> Self {
        TangentVec {
            w: Vector3::zeros(),
            base,
        }
    }

    /// Metric norm; equals the Euclidean norm of the coefficients.
    pub fn norm(&self) -> T {
        self.w.norm()
    }
}

/// `base · exp(ŵ)` with `w` read in the body frame of `base`.
pub fn exp_at<T: Real>(base: &Rotation<T>, v: &TangentVec<T>) -> Rotation<T> {
    debug_assert!(
        (v.base.m - base.m).norm() < c(1e-6),
        "tangent vector based at a different rotation"
    );
    base.compose(&Rotation {
        m: exp_so3(&v.w),
    })
}

/// Logarithm computed through the relative rotation `baseᵀ·target`.
pub fn log_at<T: Real>(base: &Rotation<T>, target: &Rotation<T>) -> Result<TangentVec<T>, Rot3Error> {
    let rel = base.m.transpose() * target.m;
    let w = log_so3(&rel)?;
    Ok(TangentVec { w, base: *base })
}

/// Constant-speed geodesic `exp_{r0}(t · log_{r0}(r1))`.
pub fn geodesic<T: Real>(
    r0: &Rotation<T>,
    r1: &Rotation<T>,
    t: T,
) -> Result<Rotation<T>, Rot3Error> {
    let v = log_at(r0, r1)?;
    Ok(exp_at(
        r0,
        &TangentVec {
            w: v.w * t,
            base: *r0,
        },
    ))
}

/// Geodesic distance `arccos((Tr(aᵀb) − 1)/2)` in radians.
///
/// Evaluated through `atan2` of the half-angle sine and cosine
/// (`‖a−b‖_F = 2√2·sin(θ/2)`, `‖a+b‖_F² = 4 + 8·cos²(θ/2)`), which is the
/// same function as the clamped-arccos trace formula but stays accurate at
/// both ends of `[0, π]`.
pub fn geodesic_dist<T: Real>(a: &Rotation<T>, b: &Rotation<T>) -> T {
    matrix_angle(&(a.m.transpose() * b.m))
}

/// Haar-uniform rotation from a normalised 4-component Gaussian quaternion.
///
/// Quaternion `(w, x, y, z)` maps to the matrix with rows
/// `[1−2(y²+z²), 2(xy+wz), 2(xz−wy)]`, … — the transpose of the common
/// column-action matrix, so that `p ↦ p·R` rotates by angle `2·acos(|w|)`
/// about `(x, y, z)`. Uniformity is unaffected by the transpose.
pub fn sample_uniform_so3<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Rotation<T> {
    loop {
        let q: [f64; 4] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        if n < 1e-9 {
            continue;
        }
        let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
        let m = Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y + w * z),
            2.0 * (x * z - w * y),
            2.0 * (x * y - w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z + w * x),
            2.0 * (x * z + w * y),
            2.0 * (y * z - w * x),
            1.0 - 2.0 * (x * x + y * y),
        );
        return Rotation {
            m: m.map(|e| c(e)),
        };
    }
}

/// Rigid SE(3) element: rotation plus translation, acting on row vectors as
/// `p ↦ p·R + xᵀ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidFrame<T: Real> {
    pub rot: Rotation<T>,
    pub trans: Vector3<T>,
}

impl<T: Real> RigidFrame<T> {
    pub fn identity() -> Self {
        RigidFrame {
            rot: Rotation::identity(),
            trans: Vector3::zeros(),
        }
    }

    pub fn new(rot: Rotation<T>, trans: Vector3<T>) -> Self {
        RigidFrame { rot, trans }
    }

    pub fn apply(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rot.apply_row(p) + self.trans
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    type Rot = Rotation<f64>;

    fn rot_z(theta: f64) -> Rot {
        Rotation::from_matrix_unchecked(exp_so3(&Vector3::new(0.0, 0.0, theta)))
    }

    fn random_tangent(rng: &mut ChaCha8Rng, max_norm: f64) -> Vector3<f64> {
        loop {
            let v = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let n = v.norm();
            if n > 1e-6 && n <= 1.0 {
                return v * (max_norm * rng.gen_range(0.0..1.0) / n);
            }
        }
    }

    #[test]
    fn exp_zero_is_identity() {
        let base = Rot::identity();
        let q = exp_at(&base, &TangentVec::zero(base));
        assert_abs_diff_eq!((q.matrix() - Matrix3::identity()).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn exp_quarter_turn_about_z() {
        // Rodrigues by hand: [[0,−1,0],[1,0,0],[0,0,1]].
        let base = Rot::identity();
        let q = exp_at(&base, &TangentVec::new(Vector3::new(0.0, 0.0, PI / 2.0), base));
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_abs_diff_eq!((q.matrix() - expected).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn log_identity_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r: Rot = sample_uniform_so3(&mut rng);
        let v = log_at(&r, &r).unwrap();
        assert!(v.norm() < 1e-12);
    }

    #[test]
    fn log_quarter_turn_about_z() {
        let v = log_at(&Rot::identity(), &rot_z(PI / 2.0)).unwrap();
        assert_abs_diff_eq!((v.w - Vector3::new(0.0, 0.0, PI / 2.0)).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn exp_distance_matches_tangent_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let base: Rot = sample_uniform_so3(&mut rng);
            let w = random_tangent(&mut rng, PI - 0.1);
            let q = exp_at(&base, &TangentVec::new(w, base));
            assert_abs_diff_eq!(geodesic_dist(&q, &base), w.norm(), epsilon = 1e-9);
        }
    }

    #[test]
    fn log_exp_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let base: Rot = sample_uniform_so3(&mut rng);
            let w = random_tangent(&mut rng, PI - 0.1);
            let q = exp_at(&base, &TangentVec::new(w, base));
            let v = log_at(&base, &q).unwrap();
            assert!((v.w - w).norm() < 1e-9, "roundtrip error {}", (v.w - w).norm());
        }
    }

    #[test]
    fn log_near_pi_branch_recovers_axis() {
        for gap in [5e-3, 1e-4, 2e-6] {
            let theta = PI - gap;
            let axis = Vector3::new(1.0, 2.0, -0.5).normalize();
            let q = Rotation::from_matrix_unchecked(exp_so3(&(axis * theta)));
            let v = log_at(&Rot::identity(), &q).unwrap();
            assert!((v.w - axis * theta).norm() < 1e-6, "gap {gap}");
        }
    }

    #[test]
    fn log_at_cut_locus_errors() {
        let q = rot_z(PI - 1e-9);
        let err = log_at(&Rot::identity(), &q).unwrap_err();
        assert!(matches!(err, Rot3Error::AngleNearPi { .. }));
    }

    #[test]
    fn geodesic_endpoints_and_midpoint() {
        let r = rot_z(PI / 2.0);
        let same = geodesic(&r, &r, 0.5).unwrap();
        assert!(geodesic_dist(&same, &r) < 1e-12);

        let half = geodesic(&Rot::identity(), &r, 0.5).unwrap();
        assert!(geodesic_dist(&half, &rot_z(PI / 4.0)) < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let a: Rot = sample_uniform_so3(&mut rng);
            let b: Rot = sample_uniform_so3(&mut rng);
            if geodesic_dist(&a, &b) > PI - 1e-3 {
                continue;
            }
            let end = geodesic(&a, &b, 1.0).unwrap();
            assert!(geodesic_dist(&end, &b) < 1e-9);
        }
    }

    #[test]
    fn geodesic_is_constant_speed() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let a: Rot = sample_uniform_so3(&mut rng);
            let b: Rot = sample_uniform_so3(&mut rng);
            let d = geodesic_dist(&a, &b);
            if d > PI - 0.05 {
                continue;
            }
            let stops = [0.0, 0.25, 0.5, 0.75, 1.0];
            let points: Vec<Rot> = stops
                .iter()
                .map(|&t| geodesic(&a, &b, t).unwrap())
                .collect();
            for (i, &s) in stops.iter().enumerate() {
                for (j, &t) in stops.iter().enumerate() {
                    let dist = geodesic_dist(&points[i], &points[j]);
                    assert!((dist - (s - t).abs() * d).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn distance_trace_formula_and_triangle_inequality() {
        assert_abs_diff_eq!(
            geodesic_dist(&Rot::identity(), &rot_z(PI / 2.0)),
            PI / 2.0,
            epsilon = 1e-12
        );
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..1000 {
            let a: Rot = sample_uniform_so3(&mut rng);
            let b: Rot = sample_uniform_so3(&mut rng);
            let m: Rot = sample_uniform_so3(&mut rng);
            let d_ab = geodesic_dist(&a, &b);
            // Agreement with the clamped-arccos trace form.
            let tr = (a.matrix().transpose() * b.matrix()).trace();
            let acos_form = ((tr - 1.0) / 2.0).clamp(-1.0, 1.0).acos();
            assert!((d_ab - acos_form).abs() < 1e-7);
            assert!((d_ab - geodesic_dist(&b, &a)).abs() < 1e-12);
            assert!(d_ab <= geodesic_dist(&a, &m) + geodesic_dist(&m, &b) + 1e-12);
        }
    }

    #[test]
    fn haar_sampling_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mut trace_sum = 0.0;
        let mut angles: Vec<f64> = Vec::with_capacity(n);
        for _ in 0..n {
            let r: Rot = sample_uniform_so3(&mut rng);
            trace_sum += r.matrix().trace();
            angles.push(r.angle());
        }
        assert!((trace_sum / n as f64).abs() < 0.02, "mean trace off");

        // KS statistic against the Haar angle CDF (θ − sinθ)/π.
        angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut ks: f64 = 0.0;
        for (i, &theta) in angles.iter().enumerate() {
            let cdf = (theta - theta.sin()) / PI;
            let emp_hi = (i + 1) as f64 / n as f64;
            let emp_lo = i as f64 / n as f64;
            ks = ks.max((cdf - emp_lo).abs()).max((cdf - emp_hi).abs());
        }
        assert!(ks < 0.01, "KS statistic {ks}");
    }

    #[test]
    fn haar_angle_invariant_under_fixed_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let fixed = rot_z(1.234);
        let n = 100_000;
        let mut plain: Vec<f64> = Vec::with_capacity(n);
        let mut shifted: Vec<f64> = Vec::with_capacity(n);
        for _ in 0..n {
            let r: Rot = sample_uniform_so3(&mut rng);
            plain.push(r.angle());
            shifted.push(r.compose(&fixed).angle());
        }
        plain.sort_by(|a, b| a.partial_cmp(b).unwrap());
        shifted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // Two-sample KS on the sorted lists.
        let mut ks: f64 = 0.0;
        let (mut i, mut j) = (0usize, 0usize);
        while i < n && j < n {
            if plain[i] <= shifted[j] {
                i += 1;
            } else {
                j += 1;
            }
            ks = ks.max((i as f64 / n as f64 - j as f64 / n as f64).abs());
        }
        assert!(ks < 0.01, "KS statistic {ks}");
    }

    #[test]
    fn long_composition_chain_stays_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut r: Rot = Rotation::identity();
        for _ in 0..10_000 {
            let w = random_tangent(&mut rng, 0.5);
            r = exp_at(&r, &TangentVec::new(w, r));
        }
        assert!(r.orthogonality_drift() < 1e-9);
    }

    #[test]
    fn works_in_single_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let base: Rotation<f32> = sample_uniform_so3(&mut rng);
        let w = Vector3::new(0.3f32, -0.2, 0.5);
        let q = exp_at(&base, &TangentVec::new(w, base));
        let v = log_at(&base, &q).unwrap();
        assert!((v.w - w).norm() < 1e-5);
    }
}
