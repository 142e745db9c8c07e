//! Two-stage closed-form baseline.
//!
//! Stage one stacks the vectorized rotation constraints
//! `(I ⊗ R_A)·r_Xj − (R_Bᵀ ⊗ I)·r_Yk = 0` over every measurement of every edge
//! and takes the right-singular vector of the smallest singular value as the
//! joint rotation estimate; under the identifiability conditions that kernel is
//! one-dimensional. The vector is scaled so the first block has unit
//! determinant and every block is projected to SO(3). Stage two fixes the
//! rotations and solves the stacked translation least squares.
//!
//! Standard mode only (scale fixed at 1): this is the initializer for the
//! local solver and the accuracy baseline in the benchmark tables.

use crate::assembly::kron3;
use crate::graph::ProblemGraph;
use crate::liegroups::{project_to_so3, LieError, Pose, Rotation};
use crate::solution::{CalibrationSolution, Mode};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use thiserror::Error;

/// Relative singular-value tolerance for the kernel-dimension check.
pub const KERNEL_RANK_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinearError {
    #[error("stacked rotation system has kernel dimension > 1 (σ ratio {0:.3e}); rotations unidentifiable")]
    RankDeficient(f64),
    #[error("translation normal equations are singular; translations unidentifiable")]
    TranslationSingular,
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error("graph has no measurements")]
    Empty,
}

/// Joint least-squares rotations (SVD kernel + SO(3) projection), then linear
/// translations. Assumes known scale (α = 1).
pub fn solve_linear(graph: &ProblemGraph) -> Result<CalibrationSolution, LinearError> {
    let layout = graph.layout();
    let n = layout.num_nodes();
    let num_pairs = graph.num_pairs();
    if num_pairs == 0 {
        return Err(LinearError::Empty);
    }

    // Stage 1: rotations from the kernel of the stacked system.
    let mut stack = DMatrix::zeros(9 * num_pairs, 9 * n);
    let mut row = 0;
    for (&(j, k), pairs) in graph.edges() {
        for pair in pairs {
            let id = Matrix3::identity();
            stack
                .view_mut((row, 9 * j), (9, 9))
                .copy_from(&kron3(&id, pair.a.rotation.matrix()));
            stack.view_mut((row, 9 * (layout.num_x + k)), (9, 9)).copy_from(&(-kron3(
                &pair.b.rotation.matrix().transpose(),
                &id,
            )));
            row += 9;
        }
    }
    let svd = stack.svd(false, true);
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[a].total_cmp(&sv[b]));
    let smax = sv[order[sv.len() - 1]];
    let second_smallest = sv[order[1]];
    if second_smallest <= KERNEL_RANK_TOL * smax {
        return Err(LinearError::RankDeficient(second_smallest / smax));
    }
    let vt = svd.v_t.unwrap();
    let kernel = vt.row(order[0]).transpose();

    // Normalize so the first block has det = 1, then project each block.
    let first = reshape(&kernel, 0);
    let det = first.determinant();
    let eta = if det.abs() > 1e-300 {
        let inv = 1.0 / det;
        inv.signum() * inv.abs().cbrt()
    } else {
        return Err(LinearError::RankDeficient(0.0));
    };
    let mut rotations = Vec::with_capacity(n);
    for l in 0..n {
        rotations.push(project_to_so3(&(reshape(&kernel, 9 * l) * eta))?);
    }

    // Stage 2: translations with rotations fixed.
    let mut a = DMatrix::zeros(3 * num_pairs, 3 * n);
    let mut rhs = DVector::zeros(3 * num_pairs);
    let mut row = 0;
    for (&(j, k), pairs) in graph.edges() {
        let r_y = &rotations[layout.num_x + k];
        for pair in pairs {
            a.view_mut((row, 3 * j), (3, 3)).copy_from(pair.a.rotation.matrix());
            a.view_mut((row, 3 * (layout.num_x + k)), (3, 3))
                .copy_from(&(-Matrix3::identity()));
            let b = *r_y * pair.b.translation - pair.a.translation;
            for d in 0..3 {
                rhs[row + d] = b[d];
            }
            row += 3;
        }
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > KERNEL_RANK_TOL * smax) {
        return Err(LinearError::TranslationSingular);
    }
    let t = svd.solve(&rhs, 0.0).map_err(|_| LinearError::TranslationSingular)?;

    let mut xs = Vec::with_capacity(layout.num_x);
    for j in 0..layout.num_x {
        xs.push(Pose::new(rotations[j], Vector3::new(t[3 * j], t[3 * j + 1], t[3 * j + 2])));
    }
    let mut ys = Vec::with_capacity(layout.num_y);
    for k in 0..layout.num_y {
        let base = 3 * (layout.num_x + k);
        ys.push(Pose::new(
            rotations[layout.num_x + k],
            Vector3::new(t[base], t[base + 1], t[base + 2]),
        ));
    }
    Ok(CalibrationSolution { mode: Mode::Standard, xs, ys, alpha: 1.0 })
}

fn reshape(v: &DVector<f64>, offset: usize) -> Matrix3<f64> {
    Matrix3::from_fn(|r, c| v[offset + 3 * c + r])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::MeasurementPair;
    use crate::liegroups::exp_so3;
    use nalgebra::Vector3;
    use rand::Rng;

    #[test]
    fn exact_recovery_on_noiseless_data() {
        let mut rng = crate::test_rng(61);
        let x = crate::random_pose(&mut rng);
        let y = crate::random_pose(&mut rng);
        let mut g = ProblemGraph::new(1, 1);
        for _ in 0..10 {
            let b = crate::random_pose(&mut rng);
            let a = y * b * x.inverse();
            g.add_measurement(0, 0, MeasurementPair::new(a, b, 0.01, 125.0).unwrap()).unwrap();
        }
        let sol = solve_linear(&g).unwrap();
        assert!(sol.xs[0].rotation.geodesic_angle(&x.rotation) < 1e-9);
        assert!((sol.xs[0].translation - x.translation).norm() < 1e-9);
        assert!((sol.ys[0].translation - y.translation).norm() < 1e-9);
    }

    #[test]
    fn single_axis_data_is_rank_deficient() {
        let mut rng = crate::test_rng(62);
        let x = crate::random_pose(&mut rng);
        let y = crate::random_pose(&mut rng);
        let mut g = ProblemGraph::new(1, 1);
        for i in 0..10 {
            // Rotations about z only; translations vary.
            let b = Pose::new(
                exp_so3(&Vector3::new(0.0, 0.0, 0.3 * i as f64)),
                Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.5),
            );
            let a = y * b * x.inverse();
            g.add_measurement(0, 0, MeasurementPair::new(a, b, 0.01, 125.0).unwrap()).unwrap();
        }
        assert!(matches!(solve_linear(&g), Err(LinearError::RankDeficient(_))));
    }

    #[test]
    fn multi_x_graph_recovers_all_variables() {
        let spec = crate::simulation::ScenarioSpec::multi_camera(9).noiseless();
        let (g, truth) = crate::simulation::synthesize_dataset(&spec);
        let sol = solve_linear(&g).unwrap();
        for (est, tru) in sol.xs.iter().zip(&truth.xs) {
            assert!(est.rotation.geodesic_angle(&tru.rotation) < 1e-8);
            assert!((est.translation - tru.translation).norm() < 1e-8);
        }
    }
}
