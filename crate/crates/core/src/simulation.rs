//! Synthetic data generation and error metrics.
//!
//! Two simulated systems are provided:
//!
//! * **Sphere** — a hand-mounted camera collecting measurements from poses on a
//!   sphere around the target, optical axis pointed at the target. The
//!   `TwoSphere` variant splits the trajectory across radii 1.0 m and 0.3 m,
//!   which is what makes the monocular problem well posed.
//! * **MultiCamera** — four fixed cameras on a circle observing a hand-mounted
//!   target through 108 manipulator poses.
//!
//! Ground-truth chains are exact (`A X = Y B` holds to round-off before noise);
//! translation noise is Gaussian, rotation noise is a right Langevin
//! perturbation, and monocular datasets scale the noisy `B` translations by α.
//! Everything is a pure function of the scenario seed.

use crate::graph::{MeasurementPair, ProblemGraph};
use crate::liegroups::{randn, Pose, Rotation};
use crate::solution::{CalibrationSolution, Mode};
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error("solution has {got_x} X / {got_y} Y variables, ground truth has {want_x} / {want_y}")]
    VariableMismatch { got_x: usize, got_y: usize, want_x: usize, want_y: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Sphere,
    TwoSphere,
    MultiCamera,
}

/// Ground-truth extrinsics for a scenario.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub xs: Vec<Pose>,
    pub ys: Vec<Pose>,
    pub alpha: f64,
}

/// Scenario description; fully determines a dataset through `seed`.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub num_poses: usize,
    /// Translation noise std (meters) of the B measurements.
    pub sigma: f64,
    /// Langevin concentration of the B rotations.
    pub kappa: f64,
    /// True scale (1 for standard mode, 0.5 in the monocular studies).
    pub alpha: f64,
    pub mode: Mode,
    /// Noise seed; the ground truth is fixed per scenario kind.
    pub seed: u64,
    /// When false, no noise is injected; σ and κ are kept as weights only.
    pub inject_noise: bool,
    /// Polar-angle band of the spiral trajectories (radians from the pole).
    pub polar_range: (f64, f64),
    /// Number of full azimuth turns of the spiral.
    pub azimuth_turns: f64,
    pub ground_truth: GroundTruth,
}

/// Ground truths are sampled once per scenario family from fixed seeds:
/// translations uniform in [−1, 1]³ (target offsets in [−0.3, 0.3]³ for the
/// hand-mounted target) and Haar rotations. Camera placements in the
/// multi-camera scene are constructed, not sampled.
fn family_ground_truth(kind: ScenarioKind, alpha: f64) -> GroundTruth {
    match kind {
        ScenarioKind::Sphere | ScenarioKind::TwoSphere => {
            let mut rng = ChaCha12Rng::seed_from_u64(0x5EED_5053_u64);
            let x = random_pose_in(&mut rng, 1.0);
            let y = random_pose_in(&mut rng, 1.0);
            GroundTruth { xs: vec![x], ys: vec![y], alpha }
        }
        ScenarioKind::MultiCamera => {
            let mut rng = ChaCha12Rng::seed_from_u64(0x5EED_4D43_u64);
            let center = Vector3::new(0.0, 0.0, 0.8);
            let xs = (0..4)
                .map(|j| {
                    let angle = std::f64::consts::FRAC_PI_2 * j as f64;
                    let height = if j % 2 == 0 { 0.4 } else { 1.2 };
                    let pos = Vector3::new(2.0 * angle.cos(), 2.0 * angle.sin(), height);
                    look_at_pose(pos, center)
                })
                .collect();
            let mut y = random_pose_in(&mut rng, 0.3);
            y.rotation = Rotation::sample_uniform(&mut rng);
            GroundTruth { xs, ys: vec![y], alpha }
        }
    }
}

fn random_pose_in<R: Rng>(rng: &mut R, half_extent: f64) -> Pose {
    Pose::new(
        Rotation::sample_uniform(rng),
        Vector3::new(
            rng.random_range(-half_extent..half_extent),
            rng.random_range(-half_extent..half_extent),
            rng.random_range(-half_extent..half_extent),
        ),
    )
}

/// Pose at `pos` with the z-axis toward `target` and y chosen world-down-ish.
fn look_at_pose(pos: Vector3<f64>, target: Vector3<f64>) -> Pose {
    let z = (target - pos).normalize();
    let down = Vector3::new(0.0, 0.0, -1.0);
    let mut y = down - z * down.dot(&z);
    if y.norm() < 1e-6 {
        y = Vector3::x() - z * Vector3::x().dot(&z);
    }
    let y = y.normalize();
    let x = y.cross(&z);
    Pose::new(frame_from_columns(x, y, z), pos)
}

fn frame_from_columns(x: Vector3<f64>, y: Vector3<f64>, z: Vector3<f64>) -> Rotation {
    let m = Matrix3::from_columns(&[x, y, z]);
    Rotation::from_matrix_unchecked(m)
}

impl ScenarioSpec {
    pub fn sphere(seed: u64) -> Self {
        Self {
            kind: ScenarioKind::Sphere,
            num_poses: 100,
            sigma: 0.01,
            kappa: 125.0,
            alpha: 1.0,
            mode: Mode::Standard,
            seed,
            inject_noise: true,
            polar_range: (20f64.to_radians(), 70f64.to_radians()),
            azimuth_turns: 2.0,
            ground_truth: family_ground_truth(ScenarioKind::Sphere, 1.0),
        }
    }

    pub fn two_sphere(seed: u64) -> Self {
        Self {
            kind: ScenarioKind::TwoSphere,
            num_poses: 100,
            sigma: 0.01,
            kappa: 125.0,
            alpha: 0.5,
            mode: Mode::Monocular,
            seed,
            inject_noise: true,
            polar_range: (20f64.to_radians(), 70f64.to_radians()),
            azimuth_turns: 2.0,
            ground_truth: family_ground_truth(ScenarioKind::TwoSphere, 0.5),
        }
    }

    pub fn multi_camera(seed: u64) -> Self {
        Self {
            kind: ScenarioKind::MultiCamera,
            num_poses: 108,
            sigma: 0.01,
            kappa: 125.0,
            alpha: 1.0,
            mode: Mode::Standard,
            seed,
            inject_noise: true,
            polar_range: (20f64.to_radians(), 70f64.to_radians()),
            azimuth_turns: 2.0,
            ground_truth: family_ground_truth(ScenarioKind::MultiCamera, 1.0),
        }
    }

    pub fn with_noise(mut self, sigma: f64, kappa: f64) -> Self {
        self.sigma = sigma;
        self.kappa = kappa;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_alpha(mut self, alpha: f64, mode: Mode) -> Self {
        self.alpha = alpha;
        self.mode = mode;
        self.ground_truth.alpha = alpha;
        self
    }

    /// Noiseless copy: no noise is injected, σ and κ stay as weights.
    pub fn noiseless(mut self) -> Self {
        self.inject_noise = false;
        self
    }
}

/// Camera pose on a sphere of radius `radius` around the target at the origin:
/// polar angle `theta` (from the north pole) and azimuth `phi`. The optical
/// z-axis points at the target, y points along the meridian toward the south
/// pole, and x completes the right-handed frame.
pub fn sphere_pose(radius: f64, theta: f64, phi: f64) -> Pose {
    let (st, ct) = (theta.sin(), theta.cos());
    let (sp, cp) = (phi.sin(), phi.cos());
    let unit = Vector3::new(st * cp, st * sp, ct);
    let pos = unit * radius;
    let z = -unit;
    // Meridian tangent toward the south pole; well defined at the poles.
    let y = Vector3::new(ct * cp, ct * sp, -st);
    let x = y.cross(&z);
    Pose::new(frame_from_columns(x, y, z), pos)
}

/// Ground-truth camera poses (the metric `B` values) for the sphere scenarios:
/// a latitude–longitude spiral over the cap θ ∈ [20°, 70°] with two full
/// azimuth turns, which excites rotations about more than one axis.
pub fn generate_sphere_trajectory(spec: &ScenarioSpec) -> Vec<Pose> {
    let n = spec.num_poses.max(2);
    let (theta0, theta1) = spec.polar_range;
    (0..n)
        .map(|i| {
            let f = i as f64 / (n - 1) as f64;
            let theta = theta0 + (theta1 - theta0) * f;
            let phi = 2.0 * std::f64::consts::PI * spec.azimuth_turns * f;
            let radius = match spec.kind {
                ScenarioKind::TwoSphere if i >= n / 2 => 0.3,
                _ => 1.0,
            };
            sphere_pose(radius, theta, phi)
        })
        .collect()
}

/// Hand poses `T_bh(i)` for the multi-camera scene: a spiral cap of radius
/// 0.5 m around the workspace center with sphere-frame orientations.
fn generate_hand_trajectory(spec: &ScenarioSpec) -> Vec<Pose> {
    let n = spec.num_poses.max(2);
    let center = Vector3::new(0.0, 0.0, 0.8);
    let (theta0, theta1) = spec.polar_range;
    (0..n)
        .map(|i| {
            let f = i as f64 / (n - 1) as f64;
            let theta = theta0 + (theta1 - theta0) * f;
            let phi = 2.0 * std::f64::consts::PI * spec.azimuth_turns * f;
            let mut p = sphere_pose(0.5, theta, phi);
            p.translation += center;
            p
        })
        .collect()
}

/// Builds the measurement graph with seeded noise. The pre-noise chains
/// satisfy `A X = Y B` exactly; `A` stays noiseless.
pub fn synthesize_dataset(spec: &ScenarioSpec) -> (ProblemGraph, GroundTruth) {
    let truth = spec.ground_truth.clone();
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    match spec.kind {
        ScenarioKind::Sphere | ScenarioKind::TwoSphere => {
            let x = truth.xs[0];
            let y = truth.ys[0];
            let mut graph = ProblemGraph::new(1, 1);
            for b_metric in generate_sphere_trajectory(spec) {
                let a = y * b_metric * x.inverse();
                let b = apply_noise(spec, &mut rng, b_metric);
                graph
                    .add_measurement(0, 0, MeasurementPair::new(a, b, spec.sigma, spec.kappa).unwrap())
                    .unwrap();
            }
            (graph, truth)
        }
        ScenarioKind::MultiCamera => {
            let y = truth.ys[0];
            let mut graph = ProblemGraph::new(truth.xs.len(), 1);
            let hands = generate_hand_trajectory(spec);
            for (j, x) in truth.xs.iter().enumerate() {
                for t_bh in &hands {
                    let a = t_bh.inverse();
                    let b_metric = y.inverse() * a * *x;
                    debug_assert!({
                        let lhs = a * *x;
                        let rhs = y * b_metric;
                        (lhs.translation - rhs.translation).norm() < 1e-9
                    });
                    let b = apply_noise(spec, &mut rng, b_metric);
                    graph
                        .add_measurement(j, 0, MeasurementPair::new(a, b, spec.sigma, spec.kappa).unwrap())
                        .unwrap();
                }
            }
            (graph, truth)
        }
    }
}

fn apply_noise(spec: &ScenarioSpec, rng: &mut ChaCha12Rng, mut b: Pose) -> Pose {
    if spec.inject_noise {
        b.translation += Vector3::new(randn(rng), randn(rng), randn(rng)) * spec.sigma;
        b.rotation = crate::liegroups::sample_langevin(&b.rotation, spec.kappa, rng);
    }
    if spec.mode == Mode::Monocular {
        b.translation *= spec.alpha;
    }
    b
}

/// Per-variable error metrics against ground truth. Translation errors are in
/// meters, rotation errors in degrees, scale error in percent.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ErrorMetrics {
    pub t_x: Vec<f64>,
    pub r_x: Vec<f64>,
    pub t_y: Vec<f64>,
    pub r_y: Vec<f64>,
    pub alpha_pct: f64,
}

pub fn compute_errors(
    solution: &CalibrationSolution,
    truth: &GroundTruth,
) -> Result<ErrorMetrics, SimulationError> {
    if solution.xs.len() != truth.xs.len() || solution.ys.len() != truth.ys.len() {
        return Err(SimulationError::VariableMismatch {
            got_x: solution.xs.len(),
            got_y: solution.ys.len(),
            want_x: truth.xs.len(),
            want_y: truth.ys.len(),
        });
    }
    let pose_errors = |est: &[Pose], truth: &[Pose]| -> (Vec<f64>, Vec<f64>) {
        est.iter()
            .zip(truth)
            .map(|(e, t)| {
                (
                    (e.translation - t.translation).norm(),
                    e.rotation.geodesic_angle(&t.rotation).to_degrees(),
                )
            })
            .unzip()
    };
    let (t_x, r_x) = pose_errors(&solution.xs, &truth.xs);
    let (t_y, r_y) = pose_errors(&solution.ys, &truth.ys);
    let alpha_pct = (solution.alpha - truth.alpha).abs() / truth.alpha.abs() * 100.0;
    Ok(ErrorMetrics { t_x, r_x, t_y, r_y, alpha_pct })
}
