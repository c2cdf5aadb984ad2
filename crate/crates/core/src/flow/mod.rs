//! Cutoff-localized Ricci flow `∂g/∂t = −2φ²Ric(g)`, integrated directly or
//! through the DeTurck-gauged system with its diffeomorphism ODE.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvature::ricci_at;
use crate::cutoff::CutoffFunction;
use crate::error::{Error, Result};
use crate::field::{MetricField, TensorField};
use crate::grid::{sym_len, ChartGrid};
use crate::linalg;
use crate::tensor::{Symmetry, TensorLayout, Valence};

mod deturck;
mod failure;
mod interp;
mod run;

pub use deturck::{deturck_vector_field, gauge_pullback, lie_derivative_metric, step_deturck};
pub use failure::{FailureKind, StepFailure};
pub use run::{
    condition_violations, run_flow, sample_metric, FlowCondition, FlowConditionFailure, FlowSample,
    FlowSettings, FlowTrajectory, CSV_HEADER,
};

/// Default rejection floor for eigenvalues of `g₀⁻¹g`.
pub const EIGEN_FLOOR: f64 = 1e-6;

pub const DEFAULT_CFL: f64 = 0.25;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowMode {
    #[default]
    Direct,
    Deturck,
}

pub fn vector_layout(dim: usize) -> Arc<TensorLayout> {
    TensorLayout::new(dim, 1, Symmetry::None)
}

#[derive(Clone, Debug)]
pub struct FlowState {
    pub t: f64,
    /// The evolving metric (the gauged metric `ḡ` in DeTurck mode).
    pub g: MetricField,
    pub g0: MetricField,
    /// DeTurck reference metric `ĝ` (defaults to `g₀`).
    pub hat_g: MetricField,
    pub epsilon: f64,
    /// `Φ_t − id` as a contravariant vector field (DeTurck mode only).
    pub gauge_displacement: Option<TensorField>,
    pub dt_last: f64,
    pub eigen_floor: f64,
}

impl FlowState {
    pub fn new(g0: MetricField) -> Self {
        FlowState {
            t: 0.0,
            g: g0.clone(),
            hat_g: g0.clone(),
            g0,
            epsilon: 0.0,
            gauge_displacement: None,
            dt_last: 0.0,
            eigen_floor: EIGEN_FLOOR,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon {epsilon} must be finite and non-negative"
            )));
        }
        self.epsilon = epsilon;
        Ok(self)
    }

    pub fn with_reference(mut self, hat_g: MetricField) -> Result<Self> {
        if !hat_g.grid().same_shape(self.g.grid()) {
            return Err(Error::GridMismatch);
        }
        self.hat_g = hat_g;
        Ok(self)
    }

    /// Start tracking the gauge diffeomorphism at the identity.
    pub fn with_gauge(mut self) -> Self {
        let grid = *self.g.grid();
        self.gauge_displacement = Some(TensorField::zeros(
            grid,
            vec![Valence::Contravariant],
            vector_layout(grid.dim()),
        ));
        self
    }

    pub fn grid(&self) -> &ChartGrid {
        self.g.grid()
    }
}

/// Nodes that may evolve: frozen-chart collars never move.
pub(crate) fn evolving(grid: &ChartGrid, node: usize) -> bool {
    grid.is_periodic() || !grid.in_collar(node)
}

/// Fill node-major data in parallel; a node returning `false` fails the fill,
/// and the smallest failing node is reported regardless of scheduling.
pub(crate) fn try_fill<F>(len: usize, ncomp: usize, f: F) -> std::result::Result<Vec<f64>, usize>
where
    F: Fn(usize, &mut [f64]) -> bool + Sync,
{
    let mut data = vec![0.0; len * ncomp];
    let bad = data
        .par_chunks_mut(ncomp)
        .enumerate()
        .filter_map(|(k, o)| (!f(k, o)).then_some(k))
        .min();
    match bad {
        Some(k) => Err(k),
        None => Ok(data),
    }
}

/// Classical RK4 on a flat state vector; `f` evaluates the right-hand side.
pub(crate) fn rk4<F>(y: &[f64], dt: f64, f: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let stage = |k: &[f64], c: f64| -> Vec<f64> {
        y.par_iter().zip(k).map(|(a, b)| a + c * dt * b).collect()
    };
    let k1 = f(y)?;
    let k2 = f(&stage(&k1, 0.5))?;
    let k3 = f(&stage(&k2, 0.5))?;
    let k4 = f(&stage(&k3, 1.0))?;
    Ok((0..y.len())
        .into_par_iter()
        .map(|i| {
            let inc = k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i];
            if inc == 0.0 {
                y[i]
            } else {
                y[i] + dt / 6.0 * inc
            }
        })
        .collect())
}

pub(crate) fn stage_failure(kind: FailureKind, t: f64, node: Option<usize>, value: f64) -> Error {
    Error::Step(StepFailure {
        kind,
        t,
        node,
        value,
    })
}

/// Reject non-finite entries and eigenvalues of `g₀⁻¹g` below the floor.
pub(crate) fn validate(g: &[f64], g0: &MetricField, floor: f64, t: f64) -> Result<()> {
    let grid = *g0.grid();
    let n = grid.dim();
    let nc = sym_len(n);
    if let Some(k) = (0..g.len())
        .into_par_iter()
        .find_first(|&k| !g[k].is_finite())
    {
        return Err(stage_failure(FailureKind::NonFinite, t, Some(k / nc), g[k]));
    }
    let bad = (0..grid.len()).into_par_iter().find_first(|&node| {
        let m = linalg::unpack(&g[node * nc..(node + 1) * nc], n);
        let m0 = g0.at(node);
        let mut shifted = m;
        for i in 0..n {
            for j in 0..n {
                shifted[i][j] -= floor * m0[i][j];
            }
        }
        linalg::cholesky(&shifted, n).is_none()
    });
    if let Some(node) = bad {
        let m = linalg::unpack(&g[node * nc..(node + 1) * nc], n);
        let value = linalg::generalized_eigenvalues(&g0.at(node), &m, n)
            .map(|e| e[0])
            .unwrap_or(f64::NAN);
        return Err(stage_failure(
            FailureKind::EigenvalueFloor,
            t,
            Some(node),
            value,
        ));
    }
    Ok(())
}

/// Largest stable step `cfl·h²/max(ψ²·tr g⁻¹)` for a pointwise weight `psi2`.
pub fn stable_dt(g: &MetricField, psi2: impl Fn(usize) -> f64 + Sync, cfl: f64) -> Result<f64> {
    let grid = *g.grid();
    let n = grid.dim();
    let rate = (0..grid.len())
        .into_par_iter()
        .map(|node| {
            let w = psi2(node);
            if w == 0.0 || !evolving(&grid, node) {
                return Ok::<f64, Error>(0.0);
            }
            let (gi, _) =
                linalg::spd_inverse(&g.at(node), n).ok_or(Error::SingularMetric { node })?;
            Ok(w * (0..n).map(|a| gi[a][a]).sum::<f64>())
        })
        .try_reduce(|| 0.0, |a, b| Ok(f64::max(a, b)))?;
    let h = grid.min_spacing();
    Ok(if rate > 0.0 {
        cfl * h * h / rate
    } else {
        f64::INFINITY
    })
}

/// `−2φ²Ric(g)` at every node (zero where φ vanishes or the chart is frozen).
fn direct_rhs(g: &MetricField, phi: &[f64], t: f64) -> Result<Vec<f64>> {
    let grid = *g.grid();
    let nc = g.ncomp();
    try_fill(grid.len(), nc, |node, out| {
        let p = phi[node];
        if p == 0.0 || !evolving(&grid, node) {
            return true;
        }
        match ricci_at(g, node, out) {
            Ok(_) => {
                for v in out.iter_mut() {
                    *v *= -2.0 * p * p;
                }
                true
            }
            Err(_) => false,
        }
    })
    .map_err(|node| stage_failure(FailureKind::EigenvalueFloor, t, Some(node), f64::NAN))
}

/// One explicit RK4 step of `∂g/∂t = −2φ²Ric(g)`. Nodes with `φ = 0` are
/// never written, so the metric there stays bit-identical.
pub fn step_direct(state: &FlowState, cutoff: &CutoffFunction, dt: f64) -> Result<FlowState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "time step {dt} must be positive"
        )));
    }
    let grid = *state.grid();
    if !cutoff.grid().same_shape(&grid) {
        return Err(Error::GridMismatch);
    }
    let phi = cutoff.phi.values();
    let next = rk4(state.g.data(), dt, |y| {
        direct_rhs(&MetricField::from_raw(grid, y.to_vec()), phi, state.t)
    })?;
    let t = state.t + dt;
    validate(&next, &state.g0, state.eigen_floor, t)?;
    let mut out = state.clone();
    out.g = MetricField::from_raw(grid, next);
    out.t = t;
    out.dt_last = dt;
    Ok(out)
}
