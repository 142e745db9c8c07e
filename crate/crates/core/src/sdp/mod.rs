//! Dual semidefinite programming layer.
//!
//! The rotation-only QCQP is relaxed through its Lagrangian dual
//!
//! ```text
//!   max λ_s   s.t.   Z(λ) = Q̃ + Σ_j λ_j G_j ⪰ 0,
//! ```
//!
//! where the `G_j` encode the homogenized SO(3) constraints
//! `RᵀR = s²I`, `RRᵀ = s²I`, the nine cyclic handedness constraints
//! `r_i × r_j = s·r_k`, and the homogenization `s² = 1` itself. Both row and
//! column orthogonality are always included; the redundancy strengthens the
//! relaxation and is load-bearing for tightness.
//!
//! Each rotation block carries 6 + 6 + 9 = 21 scalar multipliers, so the dual
//! variable has `21(M+P) + 1` entries in total.
//!
//! Two interchangeable backends implement [`ConicSolver`]: a Nesterov–Todd
//! primal-dual interior-point method ([`ipm`], the default) and a first-order
//! operator-splitting method ([`opsplit`]). Both return the dual multipliers,
//! the PSD slack `Z(λ*)`, and the moment matrix of the corresponding primal
//! relaxation, which the certifier uses to cross-check extraction.

pub mod ipm;
pub mod opsplit;

use crate::config::{SdpBackend, SdpOptions};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use thiserror::Error;

#[derive(Debug, Error, Clone)]
pub enum SdpError {
    #[error("{backend} failed after {iterations} iterations (primal {primal:.2e}, dual {dual:.2e}, gap {gap:.2e})")]
    SolverFailure {
        backend: &'static str,
        iterations: usize,
        primal: f64,
        dual: f64,
        gap: f64,
    },
    #[error("objective matrix is {got}×{got}, constraints expect {expected}")]
    DimensionMismatch { got: usize, expected: usize },
}

/// Symmetric matrix stored as upper-triangle triplets `(r, c, v)` with `r ≤ c`;
/// off-diagonal values apply to both mirror entries.
#[derive(Debug, Clone)]
pub struct SparseSym {
    pub dim: usize,
    pub upper: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    fn new(dim: usize) -> Self {
        Self { dim, upper: Vec::new() }
    }

    fn push(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.dim && c < self.dim);
        if r <= c {
            self.upper.push((r, c, v));
        } else {
            self.upper.push((c, r, v));
        }
    }

    /// All entries including mirrored ones.
    pub fn full_entries(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.upper.len() * 2);
        for &(r, c, v) in &self.upper {
            out.push((r, c, v));
            if r != c {
                out.push((c, r, v));
            }
        }
        out
    }

    /// `out += scale · G`.
    pub fn add_to(&self, out: &mut DMatrix<f64>, scale: f64) {
        for &(r, c, v) in &self.upper {
            out[(r, c)] += scale * v;
            if r != c {
                out[(c, r)] += scale * v;
            }
        }
    }

    /// `⟨G, X⟩ = tr(GᵀX)` for symmetric `X`.
    pub fn inner(&self, x: &DMatrix<f64>) -> f64 {
        let mut acc = 0.0;
        for &(r, c, v) in &self.upper {
            acc += v * x[(r, c)];
            if r != c {
                acc += v * x[(c, r)];
            }
        }
        acc
    }

    pub fn norm(&self) -> f64 {
        self.full_entries().iter().map(|&(_, _, v)| v * v).sum::<f64>().sqrt()
    }
}

/// The constraint matrices of the homogenized SO(3) variety for `blocks`
/// rotation variables, over the `[r, s]` coordinates of dimension `9·blocks + 1`.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    pub dim: usize,
    pub blocks: usize,
    pub matrices: Vec<SparseSym>,
}

/// Multiplier count per rotation block: two symmetric 3×3 (12 scalars) plus
/// nine handedness scalars.
pub const MULTIPLIERS_PER_BLOCK: usize = 21;

/// Symmetric 3×3 basis order used for the orthogonality multipliers.
const SYM_BASIS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

/// Cyclic permutations `(i, j, k)` of the handedness constraints
/// `col_i × col_j = s·col_k`.
const HAND_PERMS: [(usize, usize, usize); 3] = [(0, 1, 2), (1, 2, 0), (2, 0, 1)];

pub fn so3_constraints(blocks: usize) -> ConstraintSet {
    let dim = 9 * blocks + 1;
    let corner = dim - 1;
    let mut matrices = Vec::with_capacity(MULTIPLIERS_PER_BLOCK * blocks + 1);
    for l in 0..blocks {
        let base = 9 * l;
        // Column orthogonality: −(E_ab ⊗ I₃) on the block, tr(E_ab)·s².
        for &(a, b) in &SYM_BASIS {
            let mut g = SparseSym::new(dim);
            for d in 0..3 {
                g.push(base + 3 * a + d, base + 3 * b + d, -1.0);
            }
            if a == b {
                g.push(corner, corner, 1.0);
            }
            matrices.push(g);
        }
        // Row orthogonality: −(I₃ ⊗ E_ab) on the block, tr(E_ab)·s².
        for &(a, b) in &SYM_BASIS {
            let mut g = SparseSym::new(dim);
            for c in 0..3 {
                g.push(base + 3 * c + a, base + 3 * c + b, -1.0);
            }
            if a == b {
                g.push(corner, corner, 1.0);
            }
            matrices.push(g);
        }
        // Handedness: for multiplier component e_c of permutation (i, j, k),
        // the block pattern is −e_c^∧ at (i, j) (mirrored with +e_c^∧) and the
        // border column gets −e_c at rows of block k; the quadratic form is
        // 2·e_cᵀ(r_i × r_j − s·r_k).
        for &(i, j, k) in &HAND_PERMS {
            for c in 0..3 {
                let mut g = SparseSym::new(dim);
                let h = crate::liegroups::hat(&unit3(c));
                for r in 0..3 {
                    for cc in 0..3 {
                        let v = -h[(r, cc)];
                        if v != 0.0 {
                            g.push(base + 3 * i + r, base + 3 * j + cc, v);
                        }
                    }
                }
                g.push(base + 3 * k + c, corner, -1.0);
                matrices.push(g);
            }
        }
    }
    // Homogenization s² = 1: contributes −λ_s at the corner.
    let mut g = SparseSym::new(dim);
    g.push(corner, corner, -1.0);
    matrices.push(g);
    ConstraintSet { dim, blocks, matrices }
}

fn unit3(c: usize) -> Vector3<f64> {
    let mut v = Vector3::zeros();
    v[c] = 1.0;
    v
}

impl ConstraintSet {
    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    /// Index of the homogenization multiplier `λ_s` (the objective).
    pub fn lambda_s_index(&self) -> usize {
        self.matrices.len() - 1
    }

    /// Constraint residuals `x ↦ (quadratic form of G_j at x)`; zero on
    /// feasible homogenized states.
    pub fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.len());
        for (idx, g) in self.matrices.iter().enumerate() {
            let mut acc = 0.0;
            for &(r, c, v) in &g.upper {
                acc += if r == c { v * x[r] * x[r] } else { 2.0 * v * x[r] * x[c] };
            }
            // The s² = 1 multiplier has an inhomogeneous part: λ_s(1 − s²).
            if idx == self.lambda_s_index() {
                acc += 1.0;
            }
            out[idx] = acc;
        }
        out
    }
}

/// Structured view of the dual multipliers.
#[derive(Debug, Clone)]
pub struct DualVariables {
    /// `2(M+P)` symmetric 3×3 orthogonality multipliers (column then row, per block).
    pub big_lambda: Vec<Matrix3<f64>>,
    /// Per block, the three handedness 3-vectors `(λ_ijk, λ_jki, λ_kij)`.
    pub small_lambda: Vec<[Vector3<f64>; 3]>,
    /// Homogenization multiplier; equals the dual objective.
    pub lambda_s: f64,
}

impl DualVariables {
    pub fn from_vector(lam: &DVector<f64>, blocks: usize) -> Self {
        assert_eq!(lam.len(), MULTIPLIERS_PER_BLOCK * blocks + 1);
        let mut big = Vec::with_capacity(2 * blocks);
        let mut small = Vec::with_capacity(blocks);
        for l in 0..blocks {
            let base = MULTIPLIERS_PER_BLOCK * l;
            for half in 0..2 {
                let mut m = Matrix3::zeros();
                for (idx, &(a, b)) in SYM_BASIS.iter().enumerate() {
                    let v = lam[base + 6 * half + idx];
                    m[(a, b)] = v;
                    m[(b, a)] = v;
                }
                big.push(m);
            }
            let mut h = [Vector3::zeros(); 3];
            for p in 0..3 {
                for c in 0..3 {
                    h[p][c] = lam[base + 12 + 3 * p + c];
                }
            }
            small.push(h);
        }
        DualVariables { big_lambda: big, small_lambda: small, lambda_s: lam[lam.len() - 1] }
    }

    pub fn scalar_count(blocks: usize) -> usize {
        MULTIPLIERS_PER_BLOCK * blocks + 1
    }
}

/// `Z(λ) = Q̃ + Σ_j λ_j G_j`.
pub fn build_z(
    q_tilde: &DMatrix<f64>,
    constraints: &ConstraintSet,
    lam: &DVector<f64>,
) -> Result<DMatrix<f64>, SdpError> {
    if q_tilde.nrows() != constraints.dim {
        return Err(SdpError::DimensionMismatch {
            got: q_tilde.nrows(),
            expected: constraints.dim,
        });
    }
    let mut z = q_tilde.clone();
    for (g, &l) in constraints.matrices.iter().zip(lam.iter()) {
        if l != 0.0 {
            g.add_to(&mut z, l);
        }
    }
    Ok(z)
}

/// Output of a conic solve, in the units of the objective matrix passed in.
#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub lambda: DVector<f64>,
    /// Dual optimum `λ_s` (a lower bound on the QCQP optimum).
    pub d_star: f64,
    /// PSD dual slack `Z(λ*)`.
    pub z: DMatrix<f64>,
    /// Moment matrix of the primal relaxation, when the backend provides it.
    pub moment: Option<DMatrix<f64>>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
}

/// Backend contract: given the objective matrix and the constraint set, return
/// multipliers maximizing `λ_s` subject to `Z(λ) ⪰ 0`.
pub trait ConicSolver {
    fn solve(
        &self,
        q_tilde: &DMatrix<f64>,
        constraints: &ConstraintSet,
        opts: &SdpOptions,
    ) -> Result<SdpSolution, SdpError>;
}

pub fn solver_for(backend: SdpBackend) -> Box<dyn ConicSolver> {
    match backend {
        SdpBackend::InteriorPoint => Box::new(ipm::InteriorPoint),
        SdpBackend::OperatorSplitting => Box::new(opsplit::OperatorSplitting),
    }
}

/// Smallest two eigenvalues (ascending) and the eigenvector of the smallest.
pub(crate) fn smallest_eigenpair(m: &DMatrix<f64>) -> (f64, f64, DVector<f64>) {
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let v = eig.eigenvectors.column(idx[0]).into_owned();
    (eig.eigenvalues[idx[0]], eig.eigenvalues[idx[1]], v)
}
