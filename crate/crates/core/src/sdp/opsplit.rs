//! First-order operator-splitting (ADMM) backend.
//!
//! Splits the dual SDP as
//!
//! ```text
//!   min −bᵀλ + I_PSD(S)   s.t.  Q̃ + Σ_j λ_j G_j = S
//! ```
//!
//! and alternates a prefactored least-squares multiplier update, a PSD cone
//! projection with over-relaxation, and a scaled dual ascent step. Constraint
//! matrices are normalized to unit Frobenius norm and the penalty is rebalanced
//! from the residual ratio. The scaled dual variable converges to (minus) the
//! primal moment matrix.
//!
//! Linear convergence only: reaching certification-grade accuracy can take
//! `1e5`–`1e6` iterations, which is why the interior-point backend is the
//! default. This backend exists as the contract's first-order reference.

use super::{ConicSolver, ConstraintSet, SdpError, SdpSolution};
use crate::config::SdpOptions;
use nalgebra::{DMatrix, DVector};

pub struct OperatorSplitting;

const OVER_RELAXATION: f64 = 1.6;

fn psd_project(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let n = m.nrows();
    let mut scaled = eig.eigenvectors.clone();
    for c in 0..n {
        let v = eig.eigenvalues[c].max(0.0);
        for r in 0..n {
            scaled[(r, c)] *= v;
        }
    }
    &scaled * eig.eigenvectors.transpose()
}

impl ConicSolver for OperatorSplitting {
    fn solve(
        &self,
        q_tilde: &DMatrix<f64>,
        constraints: &ConstraintSet,
        opts: &SdpOptions,
    ) -> Result<SdpSolution, SdpError> {
        let n = constraints.dim;
        if q_tilde.nrows() != n || q_tilde.ncols() != n {
            return Err(SdpError::DimensionMismatch { got: q_tilde.nrows(), expected: n });
        }
        let m = constraints.len();
        let cnorm = {
            let f = q_tilde.norm();
            if f > 1e-300 {
                f
            } else {
                1.0
            }
        };
        let q = q_tilde / cnorm;

        // Unit-norm constraint scaling: λ̂_j·Ĝ_j = λ_j·G_j with Ĝ_j = G_j/g_j.
        let g_norms: Vec<f64> = constraints.matrices.iter().map(|g| g.norm()).collect();
        let entries: Vec<Vec<(usize, usize, f64)>> = constraints
            .matrices
            .iter()
            .zip(&g_norms)
            .map(|(g, &gn)| {
                g.full_entries().into_iter().map(|(r, c, v)| (r, c, v / gn)).collect()
            })
            .collect();
        let mut b = DVector::zeros(m);
        let s_idx = constraints.lambda_s_index();
        b[s_idx] = 1.0 / g_norms[s_idx];

        // Gram of the scaled constraints, prefactored once.
        let mut gram = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let mut acc = 0.0;
                for &(r, c, vi) in &entries[i] {
                    for &(p, qq, vj) in &entries[j] {
                        if r == p && c == qq {
                            acc += vi * vj;
                        }
                    }
                }
                gram[(i, j)] = acc;
                gram[(j, i)] = acc;
            }
        }
        // The row/column trace constraints overlap per block (the redundancy is
        // deliberate), so the Gram matrix is rank-deficient; use its
        // pseudoinverse for a min-norm multiplier step.
        let gram_pinv = {
            let eig = nalgebra::SymmetricEigen::new(gram.clone());
            let floor = eig.eigenvalues.max() * 1e-12;
            let mut scaled = eig.eigenvectors.clone();
            for c in 0..m {
                let v = eig.eigenvalues[c];
                let inv = if v > floor { 1.0 / v } else { 0.0 };
                for r in 0..m {
                    scaled[(r, c)] *= inv;
                }
            }
            &scaled * eig.eigenvectors.transpose()
        };

        let apply = |mat: &DMatrix<f64>| -> DVector<f64> {
            DVector::from_fn(m, |j, _| {
                entries[j].iter().map(|&(r, c, v)| v * mat[(r, c)]).sum()
            })
        };
        let apply_star = |lam: &DVector<f64>| -> DMatrix<f64> {
            let mut out = DMatrix::zeros(n, n);
            for (j, es) in entries.iter().enumerate() {
                let l = lam[j];
                if l != 0.0 {
                    for &(r, c, v) in es {
                        out[(r, c)] += l * v;
                    }
                }
            }
            out
        };

        let mut rho = 1.0;
        let mut s = DMatrix::<f64>::zeros(n, n);
        let mut u = DMatrix::<f64>::zeros(n, n);
        let mut lam = DVector::<f64>::zeros(m);
        let tol = opts.tolerance.max(1e-12);
        let max_iter = opts.max_iterations.max(100);

        let mut rp = f64::INFINITY;
        let mut rd = f64::INFINITY;
        let mut iterations = 0;
        for iter in 0..max_iter {
            iterations = iter + 1;
            // Multiplier step: Gram·λ = b/ρ + A(S − U − Q̂).
            let rhs = &b / rho + apply(&(&s - &u - &q));
            lam = &gram_pinv * &rhs;
            let h = &q + apply_star(&lam);

            // PSD projection with over-relaxation.
            let h_or = &h * OVER_RELAXATION + &s * (1.0 - OVER_RELAXATION);
            let s_prev = s.clone();
            s = psd_project(&(&h_or + &u));
            u += &h_or - &s;

            rp = (&h - &s).norm() / (1.0 + q.norm());
            rd = rho * apply(&(&s - &s_prev)).norm() / (1.0 + b.norm());
            if rp < tol && rd < tol {
                break;
            }
            // Residual balancing; U is the scaled dual, so it rescales with ρ.
            if iter % 100 == 99 {
                if rp > 10.0 * rd {
                    rho *= 2.0;
                    u /= 2.0;
                } else if rd > 10.0 * rp {
                    rho /= 2.0;
                    u *= 2.0;
                }
            }
            if opts.verbose && iter % 1000 == 0 {
                eprintln!("opsplit iter {iter}: rp {rp:.3e} rd {rd:.3e} rho {rho:.1e}");
            }
        }

        if !(rp < tol.sqrt().max(100.0 * tol) && rd < tol.sqrt().max(100.0 * tol)) {
            return Err(SdpError::SolverFailure {
                backend: "operator-splitting",
                iterations,
                primal: rp,
                dual: rd,
                gap: f64::NAN,
            });
        }

        // Unscale: λ_j = cnorm·λ̂_j/g_j, Z = cnorm·S, moment X = −ρ·U.
        let lambda = DVector::from_fn(m, |j, _| cnorm * lam[j] / g_norms[j]);
        let d_star = lambda[s_idx];
        let moment = -(&u * rho);
        Ok(SdpSolution {
            lambda,
            d_star,
            z: &s * cnorm,
            moment: Some(moment),
            iterations,
            primal_residual: rp,
            dual_residual: rd,
            gap: f64::NAN,
        })
    }
}
