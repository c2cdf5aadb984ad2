use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{
    evolving, gauge_pullback, stable_dt, step_deturck, step_direct, FlowMode, FlowState,
    StepFailure, DEFAULT_CFL, EIGEN_FLOOR,
};
use crate::calculus::{det_sum_nodes, volume_weights};
use crate::curvature::ricci_at;
use crate::cutoff::{CutoffFunction, CutoffShape};
use crate::error::{Error, Result};
use crate::field::MetricField;
use crate::sobolev::{estimate_sobolev, SobolevDomain, DEFAULT_SAFETY};

pub const CSV_HEADER: &str =
    "t,dt,sup_phi2_Rm,L2_Rm_supp,eig_min_ratio,eig_max_ratio,sobolev_A,vol_ball";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowSettings {
    pub mode: FlowMode,
    pub epsilon: f64,
    pub t_target: f64,
    pub cfl: f64,
    /// Record a sample every this many accepted steps (and at the end).
    pub record_stride: usize,
    /// Keep a metric snapshot every this many samples (0 = none).
    pub snapshot_stride: usize,
    /// Candidate budget of the per-sample Sobolev estimate (0 = skip).
    pub sobolev_budget: usize,
    pub eigen_floor: f64,
    pub max_steps: usize,
}

impl Default for FlowSettings {
    fn default() -> Self {
        FlowSettings {
            mode: FlowMode::Direct,
            epsilon: 0.0,
            t_target: 0.01,
            cfl: DEFAULT_CFL,
            record_stride: 1,
            snapshot_stride: 0,
            sobolev_budget: 0,
            eigen_floor: EIGEN_FLOOR,
            max_steps: 1_000_000,
        }
    }
}

impl FlowSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.t_target > 0.0 && self.t_target.is_finite()) {
            return bad(format!("t_target {} must be positive", self.t_target));
        }
        if !(self.cfl > 0.0 && self.cfl <= 0.5) {
            return bad(format!("cfl {} outside (0, 0.5]", self.cfl));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon {} must be non-negative", self.epsilon));
        }
        if self.record_stride == 0 {
            return bad("record_stride must be at least 1".into());
        }
        if !(self.eigen_floor > 0.0 && self.eigen_floor < 1.0) {
            return bad(format!("eigen_floor {} outside (0, 1)", self.eigen_floor));
        }
        Ok(())
    }
}

/// Diagnostics of the physical metric at one sample time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSample {
    pub t: f64,
    pub dt: f64,
    /// `max φ²|Rm|_g`.
    pub sup_phi2_rm: f64,
    /// `‖Rm‖_{L²}` over `supp φ`.
    pub l2_rm_supp: f64,
    /// Extreme eigenvalues of `g₀⁻¹g(t)` over all nodes.
    pub eig_min_ratio: f64,
    pub eig_max_ratio: f64,
    pub sobolev_a: Option<f64>,
    /// `Vol_{g(t)}(supp φ)`.
    pub vol_ball: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowCondition {
    /// Sobolev drift `A(g(t)) ≤ 4 A(g₀)`.
    SobolevDrift,
    /// `½g₀ ≤ g(t) ≤ 2g₀`.
    MetricEquivalence,
    /// `‖Rm(g(t))‖₂ ≤ e‖Rm(g₀)‖₂` on `supp φ`.
    CurvatureL2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConditionFailure {
    pub condition: FlowCondition,
    pub t: f64,
}

/// Conditions violated by `sample` relative to the initial sample.
pub fn condition_violations(sample: &FlowSample, initial: &FlowSample) -> Vec<FlowCondition> {
    let mut out = Vec::new();
    if let (Some(a), Some(a0)) = (sample.sobolev_a, initial.sobolev_a) {
        if a > 4.0 * a0 {
            out.push(FlowCondition::SobolevDrift);
        }
    }
    if !(sample.eig_min_ratio >= 0.5 && sample.eig_max_ratio <= 2.0) {
        out.push(FlowCondition::MetricEquivalence);
    }
    if sample.l2_rm_supp > std::f64::consts::E * initial.l2_rm_supp + 1e-12 {
        out.push(FlowCondition::CurvatureL2);
    }
    out
}

#[derive(Clone, Debug)]
pub struct FlowTrajectory {
    pub mode: FlowMode,
    pub samples: Vec<FlowSample>,
    pub snapshots: Vec<(f64, MetricField)>,
    pub steps: usize,
    /// Step rejection that ended the run early, if any.
    pub failure: Option<StepFailure>,
    pub first_condition_failure: Option<FlowConditionFailure>,
    /// Physical metric at the last accepted step.
    pub final_metric: MetricField,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.12e}")).unwrap_or_default()
}

impl FlowTrajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for p in &self.samples {
            let _ = writeln!(
                s,
                "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{},{:.12e}",
                p.t,
                p.dt,
                p.sup_phi2_rm,
                p.l2_rm_supp,
                p.eig_min_ratio,
                p.eig_max_ratio,
                fmt_opt(p.sobolev_a),
                p.vol_ball
            );
        }
        s
    }
}

/// Diagnostics of `g` against `g0` for cutoff `cutoff`.
pub fn sample_metric(
    g: &MetricField,
    g0: &MetricField,
    cutoff: &CutoffFunction,
    t: f64,
    dt: f64,
    sobolev_budget: usize,
) -> Result<FlowSample> {
    let grid = *g.grid();
    let nc = g.ncomp();
    let phi = cutoff.phi.values();
    let rm = crate::field::par_fill(grid.len(), 1, |node, out| {
        if phi[node] > 0.0 && evolving(&grid, node) {
            let mut ric = [0.0; 10];
            out[0] = ricci_at(g, node, &mut ric[..nc]).unwrap_or(f64::NAN);
        }
    });
    if let Some(node) = rm.iter().position(|v| !v.is_finite()) {
        return Err(Error::SingularMetric { node });
    }
    let w = volume_weights(g)?;
    let sup = rm
        .iter()
        .zip(phi)
        .fold(0.0f64, |m, (r, p)| m.max(p * p * r));
    let l2 = det_sum_nodes(grid.len(), |k| {
        if phi[k] > 0.0 {
            rm[k] * rm[k] * w[k]
        } else {
            0.0
        }
    })
    .sqrt();
    let vol = det_sum_nodes(grid.len(), |k| if phi[k] > 0.0 { w[k] } else { 0.0 });
    let eig = g0.relative_eigen_range(g)?;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &(l, h)| {
        (a.min(l), b.max(h))
    });
    let sobolev_a = if sobolev_budget == 0 {
        None
    } else {
        let domain = match cutoff.shape {
            CutoffShape::Ball { .. } => Some(SobolevDomain::Cutoff(cutoff)),
            CutoffShape::Constant(_) if !grid.is_periodic() => Some(SobolevDomain::WholeGrid),
            CutoffShape::Constant(_) => None,
        };
        match domain {
            Some(d) => match estimate_sobolev(d, g, sobolev_budget, DEFAULT_SAFETY) {
                Ok(e) => Some(e.constant),
                Err(Error::DegenerateDomain(_)) => None,
                Err(e) => return Err(e),
            },
            None => None,
        }
    };
    Ok(FlowSample {
        t,
        dt,
        sup_phi2_rm: sup,
        l2_rm_supp: l2,
        eig_min_ratio: lo,
        eig_max_ratio: hi,
        sobolev_a,
        vol_ball: vol,
    })
}

fn physical(state: &FlowState) -> Result<MetricField> {
    match state.gauge_displacement {
        Some(_) => gauge_pullback(state),
        None => Ok(state.g.clone()),
    }
}

/// Evolve `g0` to `t_target` with parabolic step control, recording
/// diagnostics. A step failure ends the run early (recorded in the
/// trajectory) unless it happens on the very first step.
pub fn run_flow(
    g0: MetricField,
    cutoff: &CutoffFunction,
    settings: &FlowSettings,
) -> Result<FlowTrajectory> {
    settings.validate()?;
    if !cutoff.grid().same_shape(g0.grid()) {
        return Err(Error::GridMismatch);
    }
    let mut state = FlowState::new(g0.clone()).with_epsilon(settings.epsilon)?;
    state.eigen_floor = settings.eigen_floor;
    if settings.mode == FlowMode::Deturck {
        state = state.with_gauge();
    }
    let phi = cutoff.phi.values();
    let phi_max = cutoff.phi.max();
    let e2 = settings.epsilon * settings.epsilon;
    let initial = sample_metric(&g0, &g0, cutoff, 0.0, 0.0, settings.sobolev_budget)?;
    let mut samples = vec![initial.clone()];
    let mut snapshots = Vec::new();
    if settings.snapshot_stride > 0 {
        snapshots.push((0.0, g0.clone()));
    }
    let mut failure = None;
    let mut steps = 0usize;
    let mut current = g0.clone();
    let t_end = settings.t_target;
    while state.t < t_end * (1.0 - 1e-12) && steps < settings.max_steps {
        let dt_stable = match settings.mode {
            FlowMode::Direct => stable_dt(&state.g, |k| phi[k] * phi[k], settings.cfl)?,
            FlowMode::Deturck => stable_dt(&state.g, |_| phi_max * phi_max + e2, settings.cfl)?,
        };
        let dt = dt_stable.min(t_end - state.t);
        let stepped = match settings.mode {
            FlowMode::Direct => step_direct(&state, cutoff, dt),
            FlowMode::Deturck => step_deturck(&state, cutoff, dt),
        };
        state = match stepped {
            Ok(s) => s,
            Err(Error::Step(f)) if steps == 0 => return Err(Error::Step(f)),
            Err(Error::Step(f)) => {
                log::warn!("flow stopped: {f}");
                failure = Some(f);
                break;
            }
            Err(e) => return Err(e),
        };
        steps += 1;
        let done = state.t >= t_end * (1.0 - 1e-12);
        if steps.is_multiple_of(settings.record_stride) || done {
            current = physical(&state)?;
            let s = sample_metric(&current, &g0, cutoff, state.t, dt, settings.sobolev_budget)?;
            samples.push(s);
            if settings.snapshot_stride > 0 && (samples.len() - 1) % settings.snapshot_stride == 0 {
                snapshots.push((state.t, current.clone()));
            }
            log::debug!("t = {:.4e}, step {steps}", state.t);
        }
    }
    if samples.last().map(|s| s.t) != Some(state.t) {
        current = physical(&state)?;
        samples.push(sample_metric(
            &current,
            &g0,
            cutoff,
            state.t,
            state.dt_last,
            settings.sobolev_budget,
        )?);
    }
    let first_condition_failure = samples.iter().find_map(|s| {
        condition_violations(s, &initial)
            .first()
            .map(|&c| FlowConditionFailure {
                condition: c,
                t: s.t,
            })
    });
    Ok(FlowTrajectory {
        mode: settings.mode,
        samples,
        snapshots,
        steps,
        failure,
        first_condition_failure,
        final_metric: current,
    })
}
