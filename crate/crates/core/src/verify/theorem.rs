use serde::{Deserialize, Serialize};

use super::{check_flow_conditions, check_smoothing_bound, InputsDigest, VerificationReport};
use crate::calculus::pointwise_tensor_norm;
use crate::curvature::CurvaturePack;
use crate::cutoff::{make_cutoff, Profile};
use crate::error::{Error, Result};
use crate::field::MetricField;
use crate::flow::{run_flow, FlowSettings, FlowTrajectory};
use crate::geometry::{ball_integral, distance_for_radius, volume_growth_table, VolumeTable};
use crate::sobolev::{estimate_sobolev, SobolevDomain, DEFAULT_SAFETY};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoremOneConfig {
    /// Smallness threshold on `‖Rm‖_{L²(B(p,2r))}`.
    pub epsilon0: f64,
    /// Admissible `max Vol/r⁴`.
    pub c_budget: f64,
    /// Sobolev constant of the cutoff domain; estimated when absent.
    pub c_s: Option<f64>,
    /// Candidate budget of the Sobolev estimate.
    pub sobolev_budget: usize,
    pub profile: Profile,
    /// Ball radii as fractions of `r`.
    pub radius_fractions: Vec<f64>,
    pub flow: FlowSettings,
}

impl Default for TheoremOneConfig {
    fn default() -> Self {
        TheoremOneConfig {
            epsilon0: 5.0,
            c_budget: 6.0,
            c_s: None,
            sobolev_budget: 64,
            profile: Profile::Cos2,
            radius_fractions: vec![0.5, 0.75, 1.0],
            flow: FlowSettings::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TheoremOneOutcome {
    pub report: VerificationReport,
    pub trajectory: Option<FlowTrajectory>,
    pub initial_volumes: Option<VolumeTable>,
    pub final_volumes: Option<VolumeTable>,
}

/// The Theorem 1.1 pipeline at `center` and radius `r` on a 4-metric: the
/// smallness hypothesis on `B(p, 2r)`, the localized flow with a cutoff of
/// coordinate radius `2r`, its condition and smoothing checks, and volume
/// growth under `g` and under `g(t*)` at the end of the verified window.
pub fn theorem_one_report(
    g: &MetricField,
    center: usize,
    r: f64,
    cfg: &TheoremOneConfig,
) -> Result<TheoremOneOutcome> {
    if g.dim() != 4 {
        return Err(Error::Dimension(format!(
            "Theorem 1.1 is four-dimensional, got {}",
            g.dim()
        )));
    }
    if cfg.radius_fractions.is_empty()
        || cfg.radius_fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0))
    {
        return Err(Error::Config("radius fractions must lie in (0, 1]".into()));
    }
    let mut d = InputsDigest::new("theorem_one");
    d.metric(g)
        .values(&[center as f64, r])
        .text(&serde_json::to_string(cfg)?);
    let mut rep = VerificationReport::new("theorem_one", d.finish());

    let pack = CurvaturePack::compute(g)?.with_full_bach(g)?;
    let rm = pointwise_tensor_norm(&pack.riemann, g)?.map(|v| v * v);
    let bach = pointwise_tensor_norm(pack.bach.as_ref().expect("with_full_bach fills bach"), g)?
        .map(|v| v * v);
    let dist = distance_for_radius(g, center, 2.0 * r)?;
    let rm_l2 = ball_integral(g, &dist, 2.0 * r, &rm)?.sqrt();
    let bach_l2 = ball_integral(g, &dist, 2.0 * r, &bach)?.sqrt();
    rep.fit("rm_l2_ball_2r", rm_l2);
    rep.fit("bach_l2_ball_2r", bach_l2);
    rep.fit("epsilon0", cfg.epsilon0);
    let small = rep.hypothesis("rm_l2_below_epsilon0", rm_l2, cfg.epsilon0, 0.0);
    let finite = rep.hypothesis("bach_l2_finite", bach_l2, f64::MAX / 2.0, 0.0);
    if !(small && finite) {
        rep.note("hypothesis unmet: the conclusion is not tested");
        return Ok(TheoremOneOutcome {
            report: rep.finish(),
            trajectory: None,
            initial_volumes: None,
            final_volumes: None,
        });
    }

    let cutoff = make_cutoff(g.grid(), center, 2.0 * r, cfg.profile)?;
    let c_s = match cfg.c_s {
        Some(c) => c,
        None => estimate_sobolev(
            SobolevDomain::Cutoff(&cutoff),
            g,
            cfg.sobolev_budget,
            DEFAULT_SAFETY,
        )?
        .usable(),
    };
    rep.fit("c_s", c_s);
    let traj = run_flow(g.clone(), &cutoff, &cfg.flow)?;
    if let Some(f) = &traj.failure {
        rep.note(format!("flow stopped early: {f}"));
    }
    let conditions = check_flow_conditions(&traj)?;
    rep.absorb("flow_conditions", &conditions);
    let smoothing = check_smoothing_bound(&traj, &cutoff, c_s)?;
    rep.absorb("smoothing", &smoothing);
    let t_star = traj.samples.last().map_or(0.0, |s| s.t);
    rep.fit("t_star", t_star);
    rep.compare(
        "flow_reached_target",
        cfg.flow.t_target,
        t_star,
        1e-9 * cfg.flow.t_target,
    );

    let radii: Vec<f64> = cfg.radius_fractions.iter().map(|f| f * r).collect();
    let before = volume_growth_table(g, center, &radii)?;
    let after = volume_growth_table(&traj.final_metric, center, &radii)?;
    rep.record("radii", radii);
    rep.record(
        "vol_over_r4_initial",
        before.rows.iter().map(|row| row.vol_over_r4).collect(),
    );
    rep.record(
        "vol_over_r4_final",
        after.rows.iter().map(|row| row.vol_over_r4).collect(),
    );
    rep.fit("max_vol_over_r4_initial", before.max_ratio);
    rep.fit("max_vol_over_r4_final", after.max_ratio);
    rep.fit("c_budget", cfg.c_budget);
    rep.compare(
        "volume_initial_within_budget",
        before.max_ratio,
        cfg.c_budget,
        0.0,
    );
    rep.compare(
        "volume_final_within_budget",
        after.max_ratio,
        cfg.c_budget,
        0.0,
    );
    Ok(TheoremOneOutcome {
        report: rep.finish(),
        trajectory: Some(traj),
        initial_volumes: Some(before),
        final_volumes: Some(after),
    })
}
