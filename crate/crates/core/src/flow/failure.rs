use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    /// Smallest eigenvalue of g₀⁻¹g fell below the configured floor.
    EigenvalueFloor,
    NonFinite,
    /// Gauge displacement moved more than one grid cell in a single step.
    GaugeMotion,
    DisplacementOutOfGrid,
}

/// Why a flow step was rejected, with the offending diagnostic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepFailure {
    pub kind: FailureKind,
    pub t: f64,
    pub node: Option<usize>,
    pub value: f64,
}

impl fmt::Display for StepFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            FailureKind::EigenvalueFloor => "eigenvalue of g0^-1 g below floor",
            FailureKind::NonFinite => "non-finite metric component",
            FailureKind::GaugeMotion => "gauge displacement exceeded one cell",
            FailureKind::DisplacementOutOfGrid => "gauge displacement left the grid",
        };
        write!(f, "{what} at t = {:.6e}", self.t)?;
        if let Some(n) = self.node {
            write!(f, ", node {n}")?;
        }
        write!(f, " (value {:.3e})", self.value)
    }
}
