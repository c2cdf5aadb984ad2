use super::{InputsDigest, VerificationReport};
use crate::cutoff::CutoffFunction;
use crate::error::{Error, Result};
use crate::flow::{FlowCondition, FlowTrajectory};

/// Minimum number of positive-time samples for the smoothing check.
pub const MIN_SMOOTHING_SAMPLES: usize = 10;

fn digest(tag: &str, traj: &FlowTrajectory, extra: &[f64]) -> String {
    let mut d = InputsDigest::new(tag);
    d.text(&traj.to_csv()).values(extra);
    d.finish()
}

/// `(t, q(t))` with `q = ‖φ²Rm‖∞·t / (C_s(t‖∇φ‖²∞ + 1))` for samples with `t > 0`.
pub fn smoothing_quotients(
    traj: &FlowTrajectory,
    phi: &CutoffFunction,
    c_s: f64,
) -> Result<Vec<(f64, f64)>> {
    if traj.samples.is_empty() {
        return Err(Error::EmptyWindow("empty trajectory".into()));
    }
    if !(c_s > 0.0 && c_s.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "C_s = {c_s} must be positive"
        )));
    }
    let grad2 = phi.sup_grad * phi.sup_grad;
    Ok(traj
        .samples
        .iter()
        .filter(|s| s.t > 0.0)
        .map(|s| (s.t, s.sup_phi2_rm * s.t / (c_s * (s.t * grad2 + 1.0))))
        .collect())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Boundedness shape-check of `q(t)`: `sup q ≤ 10·median q` and the mean of
/// the last quarter of samples at most twice the mean of the first quarter.
pub fn check_smoothing_bound(
    traj: &FlowTrajectory,
    phi: &CutoffFunction,
    c_s: f64,
) -> Result<VerificationReport> {
    let q = smoothing_quotients(traj, phi, c_s)?;
    if q.len() < MIN_SMOOTHING_SAMPLES {
        return Err(Error::EmptyWindow(format!(
            "{} samples with t > 0, need at least {MIN_SMOOTHING_SAMPLES}",
            q.len()
        )));
    }
    let values: Vec<f64> = q.iter().map(|p| p.1).collect();
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let median = if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    };
    let sup = sorted[m - 1];
    let quarter = (m / 4).max(1);
    let first = mean(&values[..quarter]);
    let last = mean(&values[m - quarter..]);
    let mut r = VerificationReport::new(
        "smoothing_bound",
        digest("smoothing_bound", traj, &[c_s, phi.sup_grad]),
    );
    r.compare("sup_le_10_median", sup, 10.0 * median, 0.0);
    r.compare("no_upward_trend", last, 2.0 * first, 0.0);
    r.fit("c3_fitted", sup);
    r.fit("trend_ratio", if first > 0.0 { last / first } else { 0.0 });
    r.fit("c_s", c_s);
    r.fit("sup_grad_phi", phi.sup_grad);
    r.record("t", q.iter().map(|p| p.0).collect());
    r.record("q", values);
    Ok(r.finish())
}

/// Negative control: multiply `‖φ²Rm‖∞` by `factor^{t/T}`.
pub fn inject_curvature_growth(traj: &FlowTrajectory, factor: f64) -> FlowTrajectory {
    let mut out = traj.clone();
    let t_end = traj
        .samples
        .last()
        .map_or(1.0, |s| s.t)
        .max(f64::MIN_POSITIVE);
    for s in &mut out.samples {
        s.sup_phi2_rm = (s.sup_phi2_rm + 1.0) * factor.powf(s.t / t_end);
    }
    out
}

/// Conditions (12)–(14) in shape form at every sample: eigenvalues of
/// `g₀⁻¹g(t)` in `[½, 2]`, `‖Rm‖₂` on `supp φ` at most `e` times its initial
/// value, and Sobolev drift `A(t)/A(0) ≤ 4` when estimates were recorded.
pub fn check_flow_conditions(traj: &FlowTrajectory) -> Result<VerificationReport> {
    let first = traj
        .samples
        .first()
        .ok_or_else(|| Error::EmptyWindow("empty trajectory".into()))?;
    let mut r = VerificationReport::new("flow_conditions", digest("flow_conditions", traj, &[]));
    let eig_min = traj
        .samples
        .iter()
        .map(|s| s.eig_min_ratio)
        .fold(f64::INFINITY, f64::min);
    let eig_max = traj
        .samples
        .iter()
        .map(|s| s.eig_max_ratio)
        .fold(0.0, f64::max);
    let l2_max = traj
        .samples
        .iter()
        .map(|s| s.l2_rm_supp)
        .fold(0.0, f64::max);
    r.compare("metric_equivalence_lower", 0.5, eig_min, 0.0);
    r.compare("metric_equivalence_upper", eig_max, 2.0, 0.0);
    r.compare(
        "curvature_l2",
        l2_max,
        std::f64::consts::E * first.l2_rm_supp,
        1e-12,
    );
    if let Some(a0) = first.sobolev_a {
        let drift = traj
            .samples
            .iter()
            .filter_map(|s| s.sobolev_a)
            .map(|a| a / a0)
            .fold(0.0, f64::max);
        r.compare("sobolev_drift", drift, 4.0, 0.0);
        r.record(
            "sobolev_a",
            traj.samples
                .iter()
                .map(|s| s.sobolev_a.unwrap_or(f64::NAN))
                .collect(),
        );
    } else {
        r.note("no Sobolev estimates recorded; drift condition not evaluated");
    }
    for cond in [
        FlowCondition::MetricEquivalence,
        FlowCondition::CurvatureL2,
        FlowCondition::SobolevDrift,
    ] {
        let t = traj
            .samples
            .iter()
            .find(|s| crate::flow::condition_violations(s, first).contains(&cond))
            .map(|s| s.t);
        if let Some(t) = t {
            r.fit(format!("first_failure_t.{}", condition_name(cond)), t);
        }
    }
    if let Some(f) = &traj.failure {
        r.note(format!("run ended early: {f}"));
    }
    r.record("t", traj.times());
    r.record(
        "eig_min_ratio",
        traj.samples.iter().map(|s| s.eig_min_ratio).collect(),
    );
    r.record(
        "eig_max_ratio",
        traj.samples.iter().map(|s| s.eig_max_ratio).collect(),
    );
    r.record(
        "l2_rm_supp",
        traj.samples.iter().map(|s| s.l2_rm_supp).collect(),
    );
    Ok(r.finish())
}

fn condition_name(c: FlowCondition) -> &'static str {
    match c {
        FlowCondition::SobolevDrift => "sobolev_drift",
        FlowCondition::MetricEquivalence => "metric_equivalence",
        FlowCondition::CurvatureL2 => "curvature_l2",
    }
}
