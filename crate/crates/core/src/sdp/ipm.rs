//! Primal-dual interior-point solver with Nesterov–Todd scaling and a
//! Mehrotra-style adaptive centering parameter.
//!
//! Solves the pair
//!
//! ```text
//!   (P)  min ⟨C, X⟩  s.t. ⟨A_j, X⟩ = b_j,  X ⪰ 0
//!   (D)  max bᵀy     s.t. S = C − Σ_j y_j A_j ⪰ 0
//! ```
//!
//! with `C = Q̃`, `A_j = −G_j`, and `b = e_{λ_s}`, so the dual slack `S` is the
//! certificate matrix `Z(λ)` and the primal optimum `X` is the moment matrix
//! of the Shor relaxation. The primal start `X₀ = Diag(⅓I₉, …, 1)` is strictly
//! feasible for every problem in this family; the dual start is infeasible and
//! the dual residual is driven to zero along the way.

use super::{ConicSolver, ConstraintSet, SdpError, SdpSolution};
use crate::config::SdpOptions;
use nalgebra::{DMatrix, DVector};

pub struct InteriorPoint;

/// IPM iterations are superlinear; anything beyond this means stagnation.
const MAX_IPM_ITERATIONS: usize = 300;

type Entries = Vec<(usize, usize, f64)>;

fn apply_a(a: &[Entries], x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(a.len(), |j, _| {
        a[j].iter().map(|&(r, c, v)| v * x[(r, c)]).sum()
    })
}

fn apply_a_star(a: &[Entries], y: &DVector<f64>, n: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(n, n);
    for (j, entries) in a.iter().enumerate() {
        let yj = y[j];
        if yj != 0.0 {
            for &(r, c, v) in entries {
                out[(r, c)] += yj * v;
            }
        }
    }
    out
}

/// `M_ij = ⟨A_i, W A_j W⟩`, symmetric positive definite for W ≻ 0.
fn build_schur(a: &[Entries], w: &DMatrix<f64>) -> DMatrix<f64> {
    let m = a.len();
    let mut out = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let mut acc = 0.0;
            for &(r, c, vi) in &a[i] {
                for &(p, q, vj) in &a[j] {
                    acc += vi * vj * w[(c, p)] * w[(q, r)];
                }
            }
            out[(i, j)] = acc;
            out[(j, i)] = acc;
        }
    }
    out
}

struct SymDecomp {
    vectors: DMatrix<f64>,
    values: DVector<f64>,
}

fn sym_eigen(m: &DMatrix<f64>) -> SymDecomp {
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    SymDecomp { vectors: eig.eigenvectors, values: eig.eigenvalues }
}

impl SymDecomp {
    /// `U f(D) Uᵀ` with eigenvalues clamped below at `floor`.
    fn map(&self, floor: f64, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for c in 0..n {
            let v = f(self.values[c].max(floor));
            for r in 0..n {
                scaled[(r, c)] *= v;
            }
        }
        &scaled * self.vectors.transpose()
    }

    fn min(&self) -> f64 {
        self.values.min()
    }
}

/// Largest step α ∈ (0, 1] with `X + α·ΔX ⪰ 0`, scaled by τ.
fn max_step(x_eig: &SymDecomp, dx: &DMatrix<f64>, tau: f64) -> f64 {
    let floor = x_eig.values.max().abs().max(1e-300) * 1e-15;
    let isqrt = x_eig.map(floor, |v| 1.0 / v.sqrt());
    let m = &isqrt * dx * &isqrt;
    let lmin = sym_eigen(&((&m + m.transpose()) * 0.5)).min();
    if lmin >= -1e-13 {
        1.0
    } else {
        (tau * (-1.0 / lmin)).min(1.0)
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

impl ConicSolver for InteriorPoint {
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
        let scale = {
            let f = q_tilde.norm();
            if f > 1e-300 {
                f
            } else {
                1.0
            }
        };
        let c = q_tilde / scale;

        // A_j = −G_j.
        let a: Vec<Entries> = constraints
            .matrices
            .iter()
            .map(|g| g.full_entries().into_iter().map(|(r, cc, v)| (r, cc, -v)).collect())
            .collect();
        let mut b = DVector::zeros(m);
        b[constraints.lambda_s_index()] = 1.0;

        // Strictly feasible primal start; infeasible dual start.
        let mut x = DMatrix::identity(n, n) * (1.0 / 3.0);
        x[(n - 1, n - 1)] = 1.0;
        let mut y = DVector::zeros(m);
        let mut s = &c + DMatrix::identity(n, n);

        let tol = opts.tolerance.max(1e-13);
        // Once the target tolerance is met, keep iterating toward a stretch
        // goal while progress holds; certificates sharpen with the gap.
        let stretch = (tol * 1e-3).max(1e-13);
        let mut target_met = false;
        let mut stall = 0usize;
        let max_iter = opts.max_iterations.min(MAX_IPM_ITERATIONS).max(10);
        let mut best: Option<(f64, SdpSolution)> = None;

        let mut iterations = 0;
        for iter in 0..max_iter {
            iterations = iter + 1;
            let gap = x.dot(&s);
            let mu = gap / n as f64;
            let ax = apply_a(&a, &x);
            let rp = &b - &ax;
            let rd = &c - &s - apply_a_star(&a, &y, n);
            let pobj = c.dot(&x);
            let dobj = b.dot(&y);
            let rel_gap = gap.abs() / (1.0 + pobj.abs() + dobj.abs());
            let rp_rel = rp.norm() / 2.0;
            let rd_rel = rd.norm() / (1.0 + 1.0);

            let make_solution = |iters: usize| SdpSolution {
                lambda: &y * scale,
                d_star: dobj * scale,
                z: &s * scale,
                moment: Some(x.clone()),
                iterations: iters,
                primal_residual: rp_rel,
                dual_residual: rd_rel,
                gap: rel_gap,
            };
            let score = rel_gap.max(rp_rel).max(rd_rel);
            if !score.is_finite() {
                break;
            }
            if best.as_ref().map_or(true, |(s0, _)| score < *s0) {
                best = Some((score, make_solution(iterations)));
                stall = 0;
            } else {
                stall += 1;
            }
            if rel_gap < tol && rp_rel < tol && rd_rel < tol {
                target_met = true;
                if rel_gap < stretch && rp_rel < stretch && rd_rel < stretch {
                    break;
                }
            }
            if target_met && stall >= 3 {
                break;
            }

            // Nesterov-Todd scaling point W with W S W = X.
            let s_eig = sym_eigen(&s);
            let floor_s = s_eig.values.max().abs().max(1e-300) * 1e-16;
            let s_half = s_eig.map(floor_s, |v| v.sqrt());
            let s_ihalf = s_eig.map(floor_s, |v| 1.0 / v.sqrt());
            let s_inv = s_eig.map(floor_s, |v| 1.0 / v);
            let t = &s_half * &x * &s_half;
            let t_eig = sym_eigen(&((&t + t.transpose()) * 0.5));
            let floor_t = t_eig.values.max().abs().max(1e-300) * 1e-16;
            let t_half = t_eig.map(floor_t, |v| v.sqrt());
            let w = &s_ihalf * &t_half * &s_ihalf;
            let w = (&w + w.transpose()) * 0.5;

            let schur = build_schur(&a, &w);
            let mut chol = None;
            for attempt in 0..4 {
                let jitter = if attempt == 0 {
                    0.0
                } else {
                    1e-14 * 10f64.powi(attempt) * (schur.trace() / m as f64).max(1e-30)
                };
                let mut mj = schur.clone();
                for d in 0..m {
                    mj[(d, d)] += jitter;
                }
                if let Some(f) = nalgebra::Cholesky::new(mj) {
                    chol = Some(f);
                    break;
                }
            }
            let Some(chol) = chol else {
                break;
            };
            let solve_refined = |rhs: &DVector<f64>| -> DVector<f64> {
                let mut sol = chol.solve(rhs);
                let resid = rhs - &schur * &sol;
                sol += chol.solve(&resid);
                sol
            };

            let x_eig = sym_eigen(&x);
            let tau = if mu > 1e-6 { 0.98 } else { 0.99 };

            // Predictor (σ = 0).
            let rc_aff = -&x;
            let rhs_aff = &rp - apply_a(&a, &(&rc_aff - &w * &rd * &w));
            let dy_aff = solve_refined(&rhs_aff);
            let ds_aff = &rd - apply_a_star(&a, &dy_aff, n);
            let mut dx_aff = &rc_aff - &w * &ds_aff * &w;
            symmetrize(&mut dx_aff);
            let ap_aff = max_step(&x_eig, &dx_aff, tau);
            let ad_aff = max_step(&s_eig, &ds_aff, tau);
            let gap_aff = (&x + &dx_aff * ap_aff).dot(&(&s + &ds_aff * ad_aff));
            let sigma = (gap_aff / gap).clamp(0.0, 1.0).powi(3).clamp(1e-10, 1.0);

            // Corrector with centering σμ.
            let rc = &s_inv * (sigma * mu) - &x;
            let rhs = &rp - apply_a(&a, &(&rc - &w * &rd * &w));
            let dy = solve_refined(&rhs);
            let ds = &rd - apply_a_star(&a, &dy, n);
            let mut dx = &rc - &w * &ds * &w;
            symmetrize(&mut dx);
            let ap = max_step(&x_eig, &dx, tau);
            let ad = max_step(&s_eig, &ds, tau);

            x += &dx * ap;
            y += &dy * ad;
            s += &ds * ad;
            symmetrize(&mut x);
            symmetrize(&mut s);

            if opts.verbose {
                eprintln!(
                    "ipm iter {iter:3}: gap {rel_gap:.3e} rp {rp_rel:.3e} rd {rd_rel:.3e} σ {sigma:.2e} α ({ap:.2}, {ad:.2})"
                );
            }
        }

        // Accept a near-converged iterate; otherwise report failure.
        if let Some((score, sol)) = best {
            if target_met || score < tol.sqrt().max(100.0 * tol) {
                return Ok(sol);
            }
            return Err(SdpError::SolverFailure {
                backend: "interior-point",
                iterations,
                primal: sol.primal_residual,
                dual: sol.dual_residual,
                gap: sol.gap,
            });
        }
        Err(SdpError::SolverFailure {
            backend: "interior-point",
            iterations,
            primal: f64::NAN,
            dual: f64::NAN,
            gap: f64::NAN,
        })
    }
}
