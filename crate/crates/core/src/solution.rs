//! Calibration result types shared by every solver.

use crate::graph::ProblemGraph;
use crate::liegroups::Pose;

/// Whether the measurement translations carry a known scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Scale known and fixed to 1; the extra state slot is the homogenization
    /// variable `s` with `s² = 1`.
    Standard,
    /// Translations of `B` carry an unknown common scale `α`, estimated jointly.
    Monocular,
}

/// Estimated extrinsics: `M` sensor poses, `P` target poses, and the scale.
#[derive(Debug, Clone)]
pub struct CalibrationSolution {
    pub mode: Mode,
    pub xs: Vec<Pose>,
    pub ys: Vec<Pose>,
    /// Estimated scale (1 in standard mode).
    pub alpha: f64,
}

impl CalibrationSolution {
    /// Maximum-likelihood objective of this solution, evaluated through the
    /// per-pair residuals (numerically exact near zero, unlike the assembled
    /// quadratic form).
    pub fn objective(&self, graph: &ProblemGraph) -> f64 {
        crate::assembly::mle_objective(graph, &self.xs, &self.ys, self.alpha)
    }
}
