//! Shared numeric tolerances and solver options.
//!
//! Every threshold used by the library is collected here so that experiments can
//! be reproduced from a single configuration document. Defaults match the values
//! the test suite pins.

use serde::{Deserialize, Serialize};

/// Numeric tolerances used across the library.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Elementwise orthogonality / determinant residual accepted by [`crate::Rotation::from_matrix`].
    pub rotation_residual: f64,
    /// Skew-symmetry residual accepted by `vee`.
    pub skew_residual: f64,
    /// Rejection margin below π for the SO(3) logarithm.
    pub log_angle_margin: f64,
    /// Relative singular-value cutoff for `project_to_so3` rank check.
    pub procrustes_rank: f64,
    /// Relative singular-value cutoff for the translation-block pseudoinverse.
    pub pinv_cutoff: f64,
    /// Monocular scale below which recovery reports a degenerate solve.
    pub scale_floor: f64,
    /// Relative duality gap below which a solve is declared tight.
    pub tightness: f64,
    /// Absolute (scale-normalized) gap threshold when the dual optimum is near zero.
    pub degenerate_gap: f64,
    /// Dual optimum magnitude below which the absolute-gap fallback applies.
    pub degenerate_dual: f64,
    /// Kernel eigenvalue ratio below which extraction is flagged ambiguous.
    pub kernel_gap_floor: f64,
    /// Minimum relative rotation angle for a usable identifiability axis.
    pub axis_theta_min: f64,
    /// Minimum axis separation for an informative measurement triple.
    pub axis_phi_min: f64,
    /// Relative residual above which a translation stack is outside the edge range.
    pub range_residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rotation_residual: 1e-9,
            skew_residual: 1e-9,
            log_angle_margin: 1e-6,
            procrustes_rank: 1e-12,
            pinv_cutoff: 1e-10,
            scale_floor: 1e-6,
            tightness: 1e-6,
            degenerate_gap: 1e-9,
            degenerate_dual: 1e-12,
            kernel_gap_floor: 1e2,
            axis_theta_min: 1e-3,
            axis_phi_min: 1e-3,
            range_residual: 1e-6,
        }
    }
}

/// Conic solver backend selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdpBackend {
    /// Primal-dual interior-point method with Nesterov-Todd scaling.
    InteriorPoint,
    /// First-order operator-splitting (ADMM) method.
    OperatorSplitting,
}

/// Options forwarded to the conic solver.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SdpOptions {
    pub backend: SdpBackend,
    /// Residual-norm convergence tolerance (applied to the scale-normalized problem).
    pub tolerance: f64,
    pub max_iterations: usize,
    pub verbose: bool,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            backend: SdpBackend::InteriorPoint,
            tolerance: 1e-9,
            max_iterations: 1_000_000,
            verbose: false,
        }
    }
}

/// Options for the local on-manifold solver.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalOptions {
    pub max_iterations: usize,
    pub function_tolerance: f64,
    pub gradient_tolerance: f64,
    pub step_tolerance: f64,
    /// Initial Levenberg-Marquardt damping; ×10 on reject, ÷10 on accept.
    pub initial_damping: f64,
    /// Residual model: `true` selects the chordal rotation residuals that
    /// reproduce the certified maximum-likelihood objective exactly.
    pub chordal_residuals: bool,
}

impl Default for LocalOptions {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            function_tolerance: 1e-15,
            gradient_tolerance: 1e-12,
            step_tolerance: 1e-12,
            initial_damping: 1e-4,
            chordal_residuals: false,
        }
    }
}
