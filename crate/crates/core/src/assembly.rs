//! Builds the quadratic maximum-likelihood objective.
//!
//! Two equivalent routes exist and the test suite holds them to 1e-12 relative
//! agreement: per-pair row blocks ([`pair_rotation_matrix`], [`pair_translation_matrix`])
//! whose weighted Gram sum gives the full cost, and the graph-structured block
//! matrices ([`build_cost_blocks`]) that assemble the same cost edge by edge.
//!
//! Blocks are accumulated in sorted edge order and stored pair order, so the
//! assembled matrices are bit-identical regardless of insertion order.
//!
//! Sign conventions: the translation residual for a pair on edge `(j, k)` is
//! `R_A t_Xj + α t_A − t_Yk − R_Yk t_B`, and the rotation residual is
//! `R_A R_Xj − R_Yk R_B` (Frobenius). The full objective is half the weighted
//! sum of squared residuals, with per-pair weights `1/σ²` and `κ`.

use crate::graph::{GraphError, MeasurementPair, ProblemGraph, StateLayout};
use crate::liegroups::Pose;
use nalgebra::{DMatrix, DVector, Matrix3};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("block dimensions inconsistent with layout: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Graph-structured blocks of the quadratic objective.
///
/// `l_tau` couples translations, `l_rho` couples rotations, `sigma_blk` is the
/// rotation-only Gram of the `t_B` terms, `u_mat`/`u_vec`/`v_vec`/`v_scal` are
/// the translation–rotation and scale couplings. The full matrix is assembled
/// by [`assemble_full_q`].
#[derive(Debug, Clone)]
pub struct CostBlocks {
    pub layout: StateLayout,
    pub l_tau: DMatrix<f64>,
    pub l_rho: DMatrix<f64>,
    pub sigma_blk: DMatrix<f64>,
    pub u_mat: DMatrix<f64>,
    pub u_vec: DVector<f64>,
    pub v_vec: DVector<f64>,
    pub v_scal: f64,
}

pub(crate) fn kron3(a: &Matrix3<f64>, b: &Matrix3<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(9, 9);
    for i in 0..3 {
        for j in 0..3 {
            let s = a[(i, j)];
            if s != 0.0 {
                for p in 0..3 {
                    for q in 0..3 {
                        out[(3 * i + p, 3 * j + q)] = s * b[(p, q)];
                    }
                }
            }
        }
    }
    out
}

/// `M_R` row block for one pair: `I ⊗ R_A` in the `r_Xj` columns and
/// `−R_Bᵀ ⊗ I` in the `r_Yk` columns, so that `M_R·x = vec(R_A R_Xj − R_Yk R_B)`.
pub fn pair_rotation_matrix(
    pair: &MeasurementPair,
    layout: &StateLayout,
    j: usize,
    k: usize,
) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(9, layout.dim());
    let ra = pair.a.rotation.matrix();
    let rb = pair.b.rotation.matrix();
    let id = Matrix3::identity();
    m.view_mut((0, layout.r_x(j)), (9, 9)).copy_from(&kron3(&id, ra));
    m.view_mut((0, layout.r_y(k)), (9, 9)).copy_from(&(-kron3(&rb.transpose(), &id)));
    m
}

/// `M_t` row block for one pair: `R_A` at `t_Xj`, `−I` at `t_Yk`,
/// `−t_Bᵀ ⊗ I` at `r_Yk`, `t_A` at the scale slot, so that
/// `M_t·x = R_A t_Xj + α t_A − t_Yk − R_Yk t_B`.
pub fn pair_translation_matrix(
    pair: &MeasurementPair,
    layout: &StateLayout,
    j: usize,
    k: usize,
) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(3, layout.dim());
    let ra = pair.a.rotation.matrix();
    let tb = pair.b.translation;
    m.view_mut((0, layout.t_x(j)), (3, 3)).copy_from(ra);
    m.view_mut((0, layout.t_y(k)), (3, 3)).copy_from(&(-Matrix3::identity()));
    // −t_Bᵀ ⊗ I₃ is the 3×9 block [−tb₀·I | −tb₁·I | −tb₂·I].
    for c in 0..3 {
        for r in 0..3 {
            m[(r, layout.r_y(k) + 3 * c + r)] = -tb[c];
        }
    }
    m.view_mut((0, layout.alpha()), (3, 1)).copy_from(&pair.a.translation);
    m
}

/// Assembles the graph-structured blocks from per-pair sums.
///
/// Diagonal weights use the per-pair values `Σᵢ 1/σᵢ²` and `Σᵢ κᵢ`, which
/// reduce to `N_e/σ_e²` and `N_e·κ_e` when an edge carries constant precisions.
pub fn build_cost_blocks(graph: &ProblemGraph) -> Result<CostBlocks, AssemblyError> {
    graph.validate_edges()?;
    let layout = graph.layout();
    let n = layout.num_nodes();
    let mut blocks = CostBlocks {
        layout,
        l_tau: DMatrix::zeros(3 * n, 3 * n),
        l_rho: DMatrix::zeros(9 * n, 9 * n),
        sigma_blk: DMatrix::zeros(9 * n, 9 * n),
        u_mat: DMatrix::zeros(3 * n, 9 * n),
        u_vec: DVector::zeros(9 * n),
        v_vec: DVector::zeros(3 * n),
        v_scal: 0.0,
    };
    for (&(j, k), pairs) in graph.edges() {
        let xj = 3 * j;
        let yk = 3 * (layout.num_x + k);
        let rxj = 9 * j;
        let ryk = 9 * (layout.num_x + k);
        for pair in pairs {
            let wt = 1.0 / (pair.sigma * pair.sigma);
            let wr = pair.kappa;
            let ra = pair.a.rotation.matrix();
            let rb = pair.b.rotation.matrix();
            let ta = pair.a.translation;
            let tb = pair.b.translation;

            // L(Gᵗ): diagonals Σ 1/σ²·I, off-diagonal −1/σ²·R_Aᵀ.
            for d in 0..3 {
                blocks.l_tau[(xj + d, xj + d)] += wt;
                blocks.l_tau[(yk + d, yk + d)] += wt;
            }
            let off = -(wt * ra.transpose());
            for r in 0..3 {
                for c in 0..3 {
                    blocks.l_tau[(xj + r, yk + c)] += off[(r, c)];
                    blocks.l_tau[(yk + c, xj + r)] += off[(r, c)];
                }
            }

            // v: 1/σ²·R_Aᵀ t_A on the X side, −1/σ²·t_A on the Y side.
            let vx = wt * (ra.transpose() * ta);
            for d in 0..3 {
                blocks.v_vec[xj + d] += vx[d];
                blocks.v_vec[yk + d] -= wt * ta[d];
            }
            blocks.v_scal += wt * ta.dot(&ta);

            // U: diagonal 1/σ²·t_Bᵀ ⊗ I on the Y node, off-diagonal −1/σ²·t_Bᵀ ⊗ R_Aᵀ.
            let rat = ra.transpose();
            for c in 0..3 {
                for r in 0..3 {
                    blocks.u_mat[(yk + r, ryk + 3 * c + r)] += wt * tb[c];
                    for rr in 0..3 {
                        blocks.u_mat[(xj + rr, ryk + 3 * c + r)] -= wt * tb[c] * rat[(rr, r)];
                    }
                }
            }

            // u: −1/σ²·t_B ⊗ t_A on the Y node.
            for c in 0..3 {
                for r in 0..3 {
                    blocks.u_vec[ryk + 3 * c + r] -= wt * tb[c] * ta[r];
                }
            }

            // Σ: 1/σ²·(t_B t_Bᵀ) ⊗ I on the Y node.
            for c1 in 0..3 {
                for c2 in 0..3 {
                    let s = wt * tb[c1] * tb[c2];
                    for d in 0..3 {
                        blocks.sigma_blk[(ryk + 3 * c1 + d, ryk + 3 * c2 + d)] += s;
                    }
                }
            }

            // L(Gʳ): diagonals κ·I₉, off-diagonal −κ·(R_Bᵀ ⊗ R_Aᵀ).
            for d in 0..9 {
                blocks.l_rho[(rxj + d, rxj + d)] += wr;
                blocks.l_rho[(ryk + d, ryk + d)] += wr;
            }
            let off = -(wr * kron3(&rb.transpose(), &rat));
            for r in 0..9 {
                for c in 0..9 {
                    blocks.l_rho[(rxj + r, ryk + c)] += off[(r, c)];
                    blocks.l_rho[(ryk + c, rxj + r)] += off[(r, c)];
                }
            }
        }
    }
    Ok(blocks)
}

/// Full objective matrix `Q = ½·[[L(Gᵗ), v, U], [vᵀ, v, uᵀ], [Uᵀ, u, Σ + L(Gʳ)]]`
/// over the packed state `[t, α, r]`, so that `xᵀQx` is the MLE objective.
pub fn assemble_full_q(blocks: &CostBlocks) -> Result<DMatrix<f64>, AssemblyError> {
    let layout = blocks.layout;
    let n = layout.num_nodes();
    let (tn, rn) = (3 * n, 9 * n);
    if blocks.l_tau.nrows() != tn
        || blocks.l_rho.nrows() != rn
        || blocks.u_mat.shape() != (tn, rn)
        || blocks.u_vec.len() != rn
        || blocks.v_vec.len() != tn
    {
        return Err(AssemblyError::DimensionMismatch(format!(
            "blocks for M={} P={} have shapes l_tau {:?}, l_rho {:?}, U {:?}",
            layout.num_x,
            layout.num_y,
            blocks.l_tau.shape(),
            blocks.l_rho.shape(),
            blocks.u_mat.shape()
        )));
    }
    let dim = layout.dim();
    let a = layout.alpha();
    let mut q = DMatrix::zeros(dim, dim);
    q.view_mut((0, 0), (tn, tn)).copy_from(&blocks.l_tau);
    q.view_mut((0, a), (tn, 1)).copy_from(&blocks.v_vec);
    q.view_mut((a, 0), (1, tn)).copy_from(&blocks.v_vec.transpose());
    q[(a, a)] = blocks.v_scal;
    q.view_mut((0, a + 1), (tn, rn)).copy_from(&blocks.u_mat);
    q.view_mut((a + 1, 0), (rn, tn)).copy_from(&blocks.u_mat.transpose());
    q.view_mut((a, a + 1), (1, rn)).copy_from(&blocks.u_vec.transpose());
    q.view_mut((a + 1, a), (rn, 1)).copy_from(&blocks.u_vec);
    q.view_mut((a + 1, a + 1), (rn, rn))
        .copy_from(&(&blocks.sigma_blk + &blocks.l_rho));
    q *= 0.5;
    Ok(q)
}

/// Packs poses into the state vector `[t, α, r]`. Translations are stored in
/// their scale-absorbed form `α·t`, matching the quadratic objective.
pub fn lift_state(
    layout: &StateLayout,
    xs: &[Pose],
    ys: &[Pose],
    alpha: f64,
) -> DVector<f64> {
    assert_eq!(xs.len(), layout.num_x);
    assert_eq!(ys.len(), layout.num_y);
    let mut x = DVector::zeros(layout.dim());
    for (j, p) in xs.iter().enumerate() {
        let t = p.translation * alpha;
        for d in 0..3 {
            x[layout.t_x(j) + d] = t[d];
        }
        let r = p.rotation.vectorize();
        for d in 0..9 {
            x[layout.r_x(j) + d] = r[d];
        }
    }
    for (k, p) in ys.iter().enumerate() {
        let t = p.translation * alpha;
        for d in 0..3 {
            x[layout.t_y(k) + d] = t[d];
        }
        let r = p.rotation.vectorize();
        for d in 0..9 {
            x[layout.r_y(k) + d] = r[d];
        }
    }
    x[layout.alpha()] = alpha;
    x
}

/// Stacked rotation vector `[vec(R_X1), …, vec(R_YP)]` of dimension `9(M+P)`.
pub fn rotation_state(layout: &StateLayout, xs: &[Pose], ys: &[Pose]) -> DVector<f64> {
    let mut r = DVector::zeros(layout.rot_dim());
    for (j, p) in xs.iter().enumerate() {
        let v = p.rotation.vectorize();
        for d in 0..9 {
            r[9 * j + d] = v[d];
        }
    }
    for (k, p) in ys.iter().enumerate() {
        let v = p.rotation.vectorize();
        for d in 0..9 {
            r[9 * (layout.num_x + k) + d] = v[d];
        }
    }
    r
}

/// Maximum-likelihood objective evaluated through the per-pair residuals:
/// `½ Σ (1/σ²)‖R_A(α t_X) + α t_A − α t_Y − R_Y t_B‖² + ½ Σ κ‖R_A R_X − R_Y R_B‖²_F`.
///
/// Translations in `xs`/`ys` are metric; the scale absorption is applied here.
pub fn mle_objective(graph: &ProblemGraph, xs: &[Pose], ys: &[Pose], alpha: f64) -> f64 {
    let mut cost = 0.0;
    for (&(j, k), pairs) in graph.edges() {
        let x = &xs[j];
        let y = &ys[k];
        for pair in pairs {
            let wt = 1.0 / (pair.sigma * pair.sigma);
            let e_t = pair.a.rotation * (x.translation * alpha) + pair.a.translation * alpha
                - y.translation * alpha
                - y.rotation * pair.b.translation;
            let e_r = pair.a.rotation.matrix() * x.rotation.matrix()
                - y.rotation.matrix() * pair.b.rotation.matrix();
            cost += 0.5 * wt * e_t.norm_squared() + 0.5 * pair.kappa * e_r.norm_squared();
        }
    }
    cost
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liegroups::{Pose, Rotation};
    use approx::assert_abs_diff_eq;
    use nalgebra::Vector3;
    use rand::Rng;

    fn identity_pair() -> MeasurementPair {
        MeasurementPair::new(Pose::identity(), Pose::identity(), 1.0, 1.0).unwrap()
    }

    #[test]
    fn rotation_block_identity_case() {
        let layout = StateLayout { num_x: 1, num_y: 1 };
        let m = pair_rotation_matrix(&identity_pair(), &layout, 0, 0);
        let mut x = DVector::zeros(layout.dim());
        for d in 0..9 {
            x[layout.r_x(0) + d] = (d + 1) as f64;
            x[layout.r_y(0) + d] = 2.0 * (d + 1) as f64;
        }
        let res = &m * &x;
        for d in 0..9 {
            assert_abs_diff_eq!(res[d], -((d + 1) as f64), epsilon = 1e-15);
        }
        assert_eq!(&m * DVector::zeros(layout.dim()), DVector::zeros(9));
    }

    #[test]
    fn rotation_block_matches_frobenius_residual() {
        let mut rng = crate::test_rng(11);
        let layout = StateLayout { num_x: 1, num_y: 1 };
        for _ in 0..50 {
            let pair = crate::random_pair(&mut rng);
            let rx = Rotation::sample_uniform(&mut rng);
            let ry = Rotation::sample_uniform(&mut rng);
            let m = pair_rotation_matrix(&pair, &layout, 0, 0);
            let x = lift_state(
                &layout,
                &[Pose::new(rx, Vector3::zeros())],
                &[Pose::new(ry, Vector3::zeros())],
                1.0,
            );
            let direct = (pair.a.rotation.matrix() * rx.matrix()
                - ry.matrix() * pair.b.rotation.matrix())
            .norm_squared();
            assert_abs_diff_eq!((&m * &x).norm_squared(), direct, epsilon = 1e-12);
        }
    }

    #[test]
    fn translation_block_matches_residual() {
        let mut rng = crate::test_rng(12);
        let layout = StateLayout { num_x: 1, num_y: 1 };
        // All-identity poses with zero translations: residual is t_X − t_Y.
        let m = pair_translation_matrix(&identity_pair(), &layout, 0, 0);
        let x = lift_state(
            &layout,
            &[Pose::new(Rotation::identity(), Vector3::new(1.0, 2.0, 3.0))],
            &[Pose::new(Rotation::identity(), Vector3::new(0.5, 0.5, 0.5))],
            1.0,
        );
        let res = &m * &x;
        for (d, want) in [0.5, 1.5, 2.5].iter().enumerate() {
            assert_abs_diff_eq!(res[d], *want, epsilon = 1e-15);
        }

        for _ in 0..50 {
            let pair = crate::random_pair(&mut rng);
            let px = crate::random_pose(&mut rng);
            let py = crate::random_pose(&mut rng);
            let alpha: f64 = rng.random_range(0.2..2.0);
            let m = pair_translation_matrix(&pair, &layout, 0, 0);
            let x = lift_state(&layout, &[px], &[py], alpha);
            let direct = pair.a.rotation * (px.translation * alpha)
                + pair.a.translation * alpha
                - py.translation * alpha
                - py.rotation * pair.b.translation;
            let res = &m * &x;
            for d in 0..3 {
                assert_abs_diff_eq!(res[d], direct[d], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn exact_chain_has_zero_residual() {
        let mut rng = crate::test_rng(13);
        let layout = StateLayout { num_x: 1, num_y: 1 };
        let x = crate::random_pose(&mut rng);
        let y = crate::random_pose(&mut rng);
        let b = crate::random_pose(&mut rng);
        let a = y * b * x.inverse();
        let pair = MeasurementPair::new(a, b, 1.0, 1.0).unwrap();
        let state = lift_state(&layout, &[x], &[y], 1.0);
        let mt = pair_translation_matrix(&pair, &layout, 0, 0);
        let mr = pair_rotation_matrix(&pair, &layout, 0, 0);
        assert!((&mt * &state).norm() < 1e-13);
        assert!((&mr * &state).norm() < 1e-13);
    }

    #[test]
    fn single_identity_pair_l_tau() {
        let mut g = ProblemGraph::new(1, 1);
        g.add_measurement(0, 0, identity_pair()).unwrap();
        let blocks = build_cost_blocks(&g).unwrap();
        let expected = DMatrix::from_row_slice(
            6,
            6,
            &[
                1.0, 0.0, 0.0, -1.0, 0.0, 0.0, //
                0.0, 1.0, 0.0, 0.0, -1.0, 0.0, //
                0.0, 0.0, 1.0, 0.0, 0.0, -1.0, //
                -1.0, 0.0, 0.0, 1.0, 0.0, 0.0, //
                0.0, -1.0, 0.0, 0.0, 1.0, 0.0, //
                0.0, 0.0, -1.0, 0.0, 0.0, 1.0,
            ],
        );
        assert_abs_diff_eq!(blocks.l_tau, expected, epsilon = 1e-15);
    }

    #[test]
    fn zero_tb_zeroes_sigma_and_u_offdiagonals() {
        let mut rng = crate::test_rng(14);
        let mut g = ProblemGraph::new(1, 1);
        for _ in 0..4 {
            let mut pair = crate::random_pair(&mut rng);
            pair.b.translation = Vector3::zeros();
            g.add_measurement(0, 0, pair).unwrap();
        }
        let blocks = build_cost_blocks(&g).unwrap();
        assert_eq!(blocks.sigma_blk.norm(), 0.0);
        assert_eq!(blocks.u_mat.norm(), 0.0);
        assert_eq!(blocks.u_vec.norm(), 0.0);
    }

    #[test]
    fn full_q_shape_and_symmetry() {
        let mut rng = crate::test_rng(15);
        let mut g = ProblemGraph::new(1, 1);
        for _ in 0..5 {
            g.add_measurement(0, 0, crate::random_pair(&mut rng)).unwrap();
        }
        let q = assemble_full_q(&build_cost_blocks(&g).unwrap()).unwrap();
        assert_eq!(q.shape(), (25, 25));
        assert!((q.clone() - q.transpose()).amax() < 1e-14);
    }

    #[test]
    fn noiseless_objective_is_zero_through_residual_route() {
        let mut rng = crate::test_rng(16);
        let x = crate::random_pose(&mut rng);
        let y = crate::random_pose(&mut rng);
        let mut g = ProblemGraph::new(1, 1);
        for _ in 0..20 {
            let b = crate::random_pose(&mut rng);
            let a = y * b * x.inverse();
            g.add_measurement(0, 0, MeasurementPair::new(a, b, 0.01, 125.0).unwrap())
                .unwrap();
        }
        let cost = mle_objective(&g, &[x], &[y], 1.0);
        assert!(cost < 1e-18, "cost {cost}");
        // The assembled quadratic agrees up to cancellation error.
        let q = assemble_full_q(&build_cost_blocks(&g).unwrap()).unwrap();
        let state = lift_state(&g.layout(), &[x], &[y], 1.0);
        assert!((&q * &state).amax() < 1e-8 * q.amax());
    }

    #[test]
    fn insertion_order_is_bit_identical() {
        let mut rng = crate::test_rng(17);
        let pairs: Vec<(usize, usize, MeasurementPair)> = (0..12)
            .map(|i| (i % 2, (i / 2) % 2, crate::random_pair(&mut rng)))
            .collect();
        let mut g1 = ProblemGraph::new(2, 2);
        for (j, k, p) in &pairs {
            g1.add_measurement(*j, *k, *p).unwrap();
        }
        let mut g2 = ProblemGraph::new(2, 2);
        // Insert edges in reverse edge order but keep per-edge pair order.
        for key in [(1, 1), (1, 0), (0, 1), (0, 0)] {
            for (j, k, p) in &pairs {
                if (*j, *k) == key {
                    g2.add_measurement(*j, *k, *p).unwrap();
                }
            }
        }
        let q1 = assemble_full_q(&build_cost_blocks(&g1).unwrap()).unwrap();
        let q2 = assemble_full_q(&build_cost_blocks(&g2).unwrap()).unwrap();
        assert_eq!(q1, q2);
    }
}
