//! Generalized-Schur-complement elimination of translations (and scale).
//!
//! For fixed rotations the objective is an unconstrained quadratic in the
//! translations (and scale), so they can be eliminated analytically. The
//! reduced matrix `Q′` acts on the stacked rotation vector; the eliminated
//! variables are recovered exactly by a precomputed linear map.
//!
//! In monocular mode the pair `(t, α)` is eliminated and `Q′` is a pure
//! rotation matrix of size `9(M+P)`. In standard mode only `t` is eliminated;
//! the homogenization coordinate `s` survives with its couplings folded into a
//! bordered `(9(M+P)+1)`-dimensional matrix, ordered `[r, s]`.

use crate::assembly::CostBlocks;
use crate::graph::StateLayout;
use crate::solution::Mode;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Relative singular-value cutoff for the translation-block pseudoinverse. A
/// singular translation system signals an unidentifiable problem; the cutoff
/// turns it into a detectable near-zero scale or a large residual rather than
/// NaN.
pub const PINV_CUTOFF: f64 = 1e-10;

/// Monocular scale magnitude below which recovery reports a degenerate solve.
pub const SCALE_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReductionError {
    #[error("recovered scale {0:.3e} is below the degeneracy floor")]
    ScaleNearZero(f64),
    #[error("rotation vector has length {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
}

/// Reduced quadratic objective plus the exact recovery map for the eliminated
/// translations (and scale).
#[derive(Debug, Clone)]
pub struct ReducedCost {
    pub mode: Mode,
    pub layout: StateLayout,
    /// Symmetric PSD matrix over `r` (monocular, `9(M+P)`) or `[r, s]`
    /// (standard, `9(M+P)+1`).
    pub q_prime: DMatrix<f64>,
    /// Monocular: maps `r` to `[t, α]`. Standard: maps `[r, s]` to `t`.
    recovery: DMatrix<f64>,
}

/// Moore-Penrose pseudoinverse with relative cutoff `PINV_CUTOFF·σ_max`.
fn pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().unwrap();
    let vt = svd.v_t.as_ref().unwrap();
    let smax = svd.singular_values.max();
    let mut inv = DMatrix::zeros(m.ncols(), m.nrows());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > PINV_CUTOFF * smax {
            let row = u.column(i) / s;
            let col = vt.row(i).transpose();
            inv += col * row.transpose();
        }
    }
    inv
}

/// Eliminates the translation block from the assembled cost.
pub fn schur_reduce(blocks: &CostBlocks, mode: Mode) -> ReducedCost {
    let layout = blocks.layout;
    let n = layout.num_nodes();
    let (tn, rn) = (3 * n, 9 * n);
    match mode {
        Mode::Monocular => {
            // Eliminate (t, α): T = [[L(Gᵗ), v], [vᵀ, v]], coupling C = [U; uᵀ].
            let mut t = DMatrix::zeros(tn + 1, tn + 1);
            t.view_mut((0, 0), (tn, tn)).copy_from(&blocks.l_tau);
            t.view_mut((0, tn), (tn, 1)).copy_from(&blocks.v_vec);
            t.view_mut((tn, 0), (1, tn)).copy_from(&blocks.v_vec.transpose());
            t[(tn, tn)] = blocks.v_scal;
            let mut c = DMatrix::zeros(tn + 1, rn);
            c.view_mut((0, 0), (tn, rn)).copy_from(&blocks.u_mat);
            c.view_mut((tn, 0), (1, rn)).copy_from(&blocks.u_vec.transpose());

            let recovery = -(pinv(&t) * &c);
            let mut q = &blocks.sigma_blk + &blocks.l_rho;
            q += c.transpose() * &recovery;
            q *= 0.5;
            // Symmetrize away round-off.
            let q = (&q + &q.transpose()) * 0.5;
            ReducedCost { mode, layout, q_prime: q, recovery }
        }
        Mode::Standard => {
            // Eliminate t only: T = L(Gᵗ), coupling to [r, s] is [U | v].
            let mut c = DMatrix::zeros(tn, rn + 1);
            c.view_mut((0, 0), (tn, rn)).copy_from(&blocks.u_mat);
            c.view_mut((0, rn), (tn, 1)).copy_from(&blocks.v_vec);

            let recovery = -(pinv(&blocks.l_tau) * &c);
            let mut q = DMatrix::zeros(rn + 1, rn + 1);
            q.view_mut((0, 0), (rn, rn))
                .copy_from(&(&blocks.sigma_blk + &blocks.l_rho));
            q.view_mut((0, rn), (rn, 1)).copy_from(&blocks.u_vec);
            q.view_mut((rn, 0), (1, rn)).copy_from(&blocks.u_vec.transpose());
            q[(rn, rn)] = blocks.v_scal;
            q += c.transpose() * &recovery;
            q *= 0.5;
            let q = (&q + &q.transpose()) * 0.5;
            ReducedCost { mode, layout, q_prime: q, recovery }
        }
    }
}

impl ReducedCost {
    /// Dimension of the reduced quadratic (`9(M+P)` monocular, `+1` standard).
    pub fn dim(&self) -> usize {
        self.q_prime.nrows()
    }

    /// Reduced objective `rᵀ Q′ r` at a rotation vector (with trailing `s` in
    /// standard mode).
    pub fn objective(&self, r: &DVector<f64>) -> f64 {
        (r.transpose() * &self.q_prime * r)[(0, 0)]
    }

    /// Recovers the eliminated variables at the optimum for fixed rotations.
    ///
    /// Monocular input is the `9(M+P)` rotation vector; standard input is
    /// `[r, s]` with the homogeneous coordinate last. Returns the stacked
    /// translations (scale-absorbed in monocular mode) and the scale slot
    /// value (`α` monocular, `s ≈ ±1` standard).
    pub fn recover_translations(
        &self,
        r_star: &DVector<f64>,
    ) -> Result<(DVector<f64>, f64), ReductionError> {
        let expected = self.dim();
        if r_star.len() != expected {
            return Err(ReductionError::DimensionMismatch { got: r_star.len(), expected });
        }
        match self.mode {
            Mode::Monocular => {
                let out = &self.recovery * r_star;
                let tn = self.layout.trans_dim();
                let alpha = out[tn];
                if alpha.abs() < SCALE_FLOOR {
                    return Err(ReductionError::ScaleNearZero(alpha));
                }
                Ok((out.rows(0, tn).into_owned(), alpha))
            }
            Mode::Standard => {
                let t = &self.recovery * r_star;
                Ok((t, r_star[expected - 1]))
            }
        }
    }
}
