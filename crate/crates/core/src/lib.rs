//! Generalized robot-world and hand-eye calibration (RWHEC).
//!
//! Estimates rigid sensor extrinsics `X_1..X_M`, target poses `Y_1..Y_P`, and an
//! optional monocular scale `α` from pose-pair measurements `(A, B)` satisfying
//! the kinematic loop `A X = Y B` on a bipartite measurement graph.
//!
//! Three solvers are provided:
//!
//! * [`certifier::certifiable_rwhec`] — a semidefinite relaxation of the maximum
//!   likelihood problem. The translations (and scale) are eliminated analytically,
//!   the rotation-only QCQP is relaxed to a dual SDP, and the solution is
//!   extracted from the kernel of the dual certificate matrix `Z(λ*)`. The duality
//!   gap yields a numerical certificate of global optimality.
//! * [`local::solve_local`] — a Lie-algebraic Levenberg–Marquardt refinement over
//!   the pose variables with analytic Jacobians.
//! * [`linear::solve_linear`] — a two-stage closed-form initializer (least-squares
//!   rotations projected to SO(3), then linear translations).
//!
//! [`identifiability`] provides executable uniqueness checks (graph connectivity,
//! per-edge rotation-axis and translation-range tests), and [`simulation`] holds
//! the synthetic scenario generators and the Monte-Carlo benchmark harness.
//!
//! With the default `parallel` feature, benchmark trials and measurement-level
//! accumulation fan out over a rayon pool; reductions are performed in a fixed
//! order so results are identical to the sequential build.

pub mod assembly;
pub mod benchmark;
pub mod certifier;
pub mod config;
pub mod graph;
pub mod identifiability;
pub mod liegroups;
pub mod linear;
pub mod local;
pub mod par;
pub mod reduction;
pub mod sdp;
pub mod simulation;
pub mod solution;

pub use config::Tolerances;
pub use graph::{MeasurementPair, ProblemGraph, StateLayout};
pub use liegroups::{AxisAngle, Pose, Rotation};
pub use solution::{CalibrationSolution, Mode};

#[cfg(test)]
pub(crate) fn test_rng(seed: u64) -> rand_chacha::ChaCha12Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha12Rng::seed_from_u64(seed)
}

#[cfg(test)]
pub(crate) fn random_pose<R: rand::Rng>(rng: &mut R) -> Pose {
    use nalgebra::Vector3;
    Pose::new(
        Rotation::sample_uniform(rng),
        Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ),
    )
}

#[cfg(test)]
pub(crate) fn random_pair<R: rand::Rng>(rng: &mut R) -> MeasurementPair {
    MeasurementPair::new(random_pose(rng), random_pose(rng), 1.0, 1.0).unwrap()
}
