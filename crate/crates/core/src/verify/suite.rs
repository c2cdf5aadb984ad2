//! Verification suites: a JSON list of named checks, run task-parallel and
//! merged deterministically by name.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::oracles::{
    bach_crosscheck, curvature_oracles, default_bach_cases, flow_oracle, volume_oracle, BachCase,
    CurvatureOracleConfig, FlowOracleConfig, VolumeOracleConfig,
};
use super::{
    check_flow_conditions, check_smoothing_bound, check_sup_bound, elliptic_stability,
    flow_witness, heat_witness, ibp_corpus, inject_curvature_growth, sup_bound_constant,
    theorem_one_report, InputsDigest, TheoremOneConfig, Verdict, VerificationReport,
};
use crate::cutoff::{center_node, constant_cutoff, make_cutoff, Profile};
use crate::error::{Error, Result};
use crate::flow::{run_flow, FlowSettings};
use crate::scenario::{scenario_on_default_grid, ScenarioParams};
use crate::sobolev::{estimate_sobolev, moser_schedule, SobolevDomain, DEFAULT_SAFETY};

pub const SUMMARY_CSV_HEADER: &str = "name,check,verdict,comparisons,failed_comparisons";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub checks: Vec<CheckSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    pub name: String,
    pub check: CheckKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CheckKind {
    CurvatureOracles(CurvatureOracleConfig),
    BachCrosscheck(BachCheck),
    FlowOracle(FlowOracleConfig),
    Smoothing(SmoothingCheck),
    FlowConditionsControl(ConditionsControl),
    IbpCorpus(IbpCheck),
    MoserRecursion(MoserCheck),
    EllipticL4(EllipticCheck),
    VolumeGrowth(VolumeOracleConfig),
    TheoremOne(TheoremCheck),
}

impl CheckKind {
    pub fn kind(&self) -> &'static str {
        match self {
            CheckKind::CurvatureOracles(_) => "curvature_oracles",
            CheckKind::BachCrosscheck(_) => "bach_crosscheck",
            CheckKind::FlowOracle(_) => "flow_oracle",
            CheckKind::Smoothing(_) => "smoothing",
            CheckKind::FlowConditionsControl(_) => "flow_conditions_control",
            CheckKind::IbpCorpus(_) => "ibp_corpus",
            CheckKind::MoserRecursion(_) => "moser_recursion",
            CheckKind::EllipticL4(_) => "elliptic_l4",
            CheckKind::VolumeGrowth(_) => "volume_growth",
            CheckKind::TheoremOne(_) => "theorem_one",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BachCheck {
    pub cases: Vec<BachCase>,
}

impl Default for BachCheck {
    fn default() -> Self {
        BachCheck {
            cases: default_bach_cases(),
        }
    }
}

fn s4_params() -> ScenarioParams {
    ScenarioParams {
        amplitude: Some(0.05),
        wavenumber: Some(2),
        seed: Some(7),
        ..Default::default()
    }
}

/// Localized flow on a scenario with a ball cutoff at the chart center.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothingCheck {
    pub scenario: String,
    pub params: ScenarioParams,
    pub dim: usize,
    pub n: usize,
    /// Coordinate radius of the cutoff support.
    pub radius: f64,
    pub profile: Profile,
    pub flow: FlowSettings,
    /// Sobolev constant for the smoothing quotient; estimated when absent.
    pub c_s: Option<f64>,
    pub sobolev_budget: usize,
    /// Growth factor of the injected-curvature negative control.
    pub growth_control: f64,
    /// `c₀` of the report-only flow witness (needs metric snapshots).
    pub witness_c0: f64,
}

impl Default for SmoothingCheck {
    fn default() -> Self {
        SmoothingCheck {
            scenario: "perturbed_flat".into(),
            params: s4_params(),
            dim: 4,
            n: 20,
            radius: 0.4,
            profile: Profile::Cos2,
            flow: FlowSettings {
                t_target: 0.02,
                record_stride: 2,
                snapshot_stride: 8,
                ..Default::default()
            },
            c_s: None,
            sobolev_budget: 64,
            growth_control: 1e3,
            witness_c0: 1.0,
        }
    }
}

/// Large conformal data on the 2-torus: the metric-equivalence condition
/// must be flagged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConditionsControl {
    pub amplitude: f64,
    pub n: usize,
    pub t_target: f64,
}

impl Default for ConditionsControl {
    fn default() -> Self {
        ConditionsControl {
            amplitude: 0.9,
            n: 32,
            t_target: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IbpCheck {
    /// Corpus seed; the suite seed when absent.
    pub seed: Option<u64>,
    pub cases: usize,
    pub n: usize,
}

impl Default for IbpCheck {
    fn default() -> Self {
        IbpCheck {
            seed: None,
            cases: 200,
            n: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MoserCheck {
    pub p0: f64,
    pub levels: Vec<usize>,
    pub t_end: f64,
    pub samples: usize,
}

impl Default for MoserCheck {
    fn default() -> Self {
        MoserCheck {
            p0: 3.0,
            levels: vec![16, 32, 64],
            t_end: 0.5,
            samples: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EllipticCheck {
    pub scenario: String,
    pub params: ScenarioParams,
    /// Dyadic resolutions, coarsest first.
    pub levels: Vec<usize>,
    pub radius: f64,
    pub lambda: f64,
}

impl Default for EllipticCheck {
    fn default() -> Self {
        EllipticCheck {
            scenario: "perturbed_flat".into(),
            params: ScenarioParams {
                amplitude: Some(0.05),
                wavenumber: Some(1),
                seed: Some(7),
                ..Default::default()
            },
            levels: vec![12, 24],
            radius: 0.375,
            lambda: 1.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoremCheck {
    pub scenario: String,
    pub params: ScenarioParams,
    pub n: usize,
    pub radius: f64,
    pub config: TheoremOneConfig,
    /// `pass`, or `hypothesis_unmet` for a hypothesis-gate control.
    pub expect: Verdict,
}

impl Default for TheoremCheck {
    fn default() -> Self {
        TheoremCheck {
            scenario: "perturbed_flat".into(),
            params: s4_params(),
            n: 20,
            radius: 0.2,
            config: TheoremOneConfig {
                flow: FlowSettings {
                    t_target: 0.02,
                    record_stride: 2,
                    ..Default::default()
                },
                ..Default::default()
            },
            expect: Verdict::Pass,
        }
    }
}

/// One finished check with the CSV artifacts it produced.
#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: String,
    pub kind: &'static str,
    pub report: VerificationReport,
    pub artifacts: Vec<(String, String)>,
}

#[derive(Clone, Debug)]
pub struct SuiteOutcome {
    pub name: String,
    pub checks: Vec<CheckOutcome>,
}

impl SuiteOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| !c.report.is_failure())
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from(SUMMARY_CSV_HEADER);
        s.push('\n');
        for c in &self.checks {
            let failed = c.report.comparisons.iter().filter(|x| !x.holds).count();
            let verdict = serde_json::to_value(c.report.verdict)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                c.name,
                c.kind,
                verdict,
                c.report.comparisons.len(),
                failed
            );
        }
        s
    }

    /// `<name>.json` per check, artifacts, and `summary.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for c in &self.checks {
            let mut text = serde_json::to_string_pretty(&c.report)?;
            text.push('\n');
            fs::write(dir.join(format!("{}.json", c.name)), text)?;
            for (file, body) in &c.artifacts {
                fs::write(dir.join(file), body)?;
            }
        }
        fs::write(dir.join("summary.csv"), self.summary_csv())?;
        Ok(())
    }
}

pub fn load_suite(path: &Path) -> Result<Suite> {
    let suite: Suite = serde_json::from_str(&fs::read_to_string(path)?)?;
    validate_suite(&suite)?;
    Ok(suite)
}

pub fn validate_suite(suite: &Suite) -> Result<()> {
    let mut seen = BTreeSet::new();
    for c in &suite.checks {
        let ok = !c.name.is_empty()
            && c.name
                .chars()
                .all(|ch| ch.is_ascii_alphanumeric() || ch == '_' || ch == '-');
        if !ok {
            return Err(Error::Config(format!(
                "check name `{}` must be non-empty [A-Za-z0-9_-]",
                c.name
            )));
        }
        if !seen.insert(c.name.as_str()) {
            return Err(Error::Config(format!("duplicate check name `{}`", c.name)));
        }
    }
    Ok(())
}

/// Run every check in parallel; outcomes are ordered by check name.
pub fn run_suite(suite: &Suite) -> Result<SuiteOutcome> {
    validate_suite(suite)?;
    let mut checks = suite
        .checks
        .par_iter()
        .map(|spec| run_check(spec, suite.seed))
        .collect::<Vec<Result<CheckOutcome>>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    checks.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(SuiteOutcome {
        name: suite.name.clone(),
        checks,
    })
}

pub fn run_check(spec: &CheckSpec, seed: u64) -> Result<CheckOutcome> {
    let name = spec.name.clone();
    let kind = spec.check.kind();
    let mut artifacts = Vec::new();
    let report = match &spec.check {
        CheckKind::CurvatureOracles(cfg) => curvature_oracles(cfg)?,
        CheckKind::BachCrosscheck(cfg) => bach_crosscheck(&cfg.cases)?,
        CheckKind::FlowOracle(cfg) => flow_oracle(cfg)?,
        CheckKind::Smoothing(cfg) => smoothing(cfg, &name, &mut artifacts)?,
        CheckKind::FlowConditionsControl(cfg) => conditions_control(cfg)?,
        CheckKind::IbpCorpus(cfg) => ibp_corpus(cfg.seed.unwrap_or(seed), cfg.cases, cfg.n)?,
        CheckKind::MoserRecursion(cfg) => moser(cfg)?,
        CheckKind::EllipticL4(cfg) => {
            let levels = cfg
                .levels
                .iter()
                .map(|&n| {
                    let g = scenario_on_default_grid(&cfg.scenario, &cfg.params, 4, n)?.metric;
                    let c = center_node(g.grid());
                    Ok((g, c))
                })
                .collect::<Result<Vec<_>>>()?;
            elliptic_stability(&levels, cfg.radius, cfg.lambda)?
        }
        CheckKind::VolumeGrowth(cfg) => {
            let rep = volume_oracle(cfg)?;
            let mut csv = String::from(crate::geometry::VOLUME_CSV_HEADER);
            csv.push('\n');
            let ratios = &rep.quantities["vol_over_r4"];
            for (r, q) in cfg.radii.iter().zip(ratios) {
                let _ = writeln!(csv, "{r:.12e},{:.12e},{q:.12e}", q * r.powi(4));
            }
            artifacts.push((format!("{name}_volume.csv"), csv));
            rep
        }
        CheckKind::TheoremOne(cfg) => theorem(cfg, &name, &mut artifacts)?,
    };
    Ok(CheckOutcome {
        name,
        kind,
        report,
        artifacts,
    })
}

fn smoothing(
    cfg: &SmoothingCheck,
    name: &str,
    artifacts: &mut Vec<(String, String)>,
) -> Result<VerificationReport> {
    let sc = scenario_on_default_grid(&cfg.scenario, &cfg.params, cfg.dim, cfg.n)?;
    let g0 = sc.metric;
    let grid = *g0.grid();
    let cutoff = make_cutoff(&grid, center_node(&grid), cfg.radius, cfg.profile)?;
    let c_s = match cfg.c_s {
        Some(c) => c,
        None => estimate_sobolev(
            SobolevDomain::Cutoff(&cutoff),
            &g0,
            cfg.sobolev_budget,
            DEFAULT_SAFETY,
        )?
        .usable(),
    };
    let traj = run_flow(g0.clone(), &cutoff, &cfg.flow)?;
    artifacts.push((format!("{name}_trajectory.csv"), traj.to_csv()));

    let mut d = InputsDigest::new("smoothing");
    d.metric(&g0).text(&serde_json::to_string(cfg)?);
    let mut rep = VerificationReport::new("smoothing", d.finish());
    rep.fit("c_s", c_s);
    if let Some(f) = &traj.failure {
        rep.note(format!("flow stopped early: {f}"));
    }
    let t_end = traj.samples.last().map_or(0.0, |s| s.t);
    rep.compare(
        "flow_reached_target",
        cfg.flow.t_target,
        t_end,
        1e-9 * cfg.flow.t_target,
    );
    let nc = g0.ncomp();
    let mut outside = 0.0f64;
    for k in 0..grid.len() {
        if cutoff.phi.values()[k] == 0.0 {
            for c in 0..nc {
                outside = outside
                    .max((traj.final_metric.data()[k * nc + c] - g0.data()[k * nc + c]).abs());
            }
        }
    }
    rep.compare("locality_outside_support", outside, 0.0, 0.0);
    rep.absorb("flow_conditions", &check_flow_conditions(&traj)?);
    rep.absorb(
        "smoothing_bound",
        &check_smoothing_bound(&traj, &cutoff, c_s)?,
    );
    let control = check_smoothing_bound(
        &inject_curvature_growth(&traj, cfg.growth_control),
        &cutoff,
        c_s,
    )?;
    rep.compare(
        "control_injected_growth_flagged",
        if control.verdict == Verdict::Fail {
            0.0
        } else {
            1.0
        },
        0.0,
        0.0,
    );
    rep.record(
        "control_q",
        control.quantities.get("q").cloned().unwrap_or_default(),
    );
    if traj.snapshots.len() >= 2 {
        let witness = flow_witness(&traj, &cutoff, cfg.witness_c0, c_s)?;
        rep.fit("flow_witness_c_star", sup_bound_constant(&witness, 3.0)?);
        rep.fit("flow_witness_mu", witness.mu);
        rep.note("flow witness (f = |Rm|, u = c0|Rm|) is report-only");
    }
    Ok(rep.finish())
}

fn conditions_control(cfg: &ConditionsControl) -> Result<VerificationReport> {
    let params = ScenarioParams {
        amplitude: Some(cfg.amplitude),
        ..Default::default()
    };
    let g = scenario_on_default_grid("conformal_torus", &params, 2, cfg.n)?.metric;
    let grid = *g.grid();
    let settings = FlowSettings {
        t_target: cfg.t_target,
        ..Default::default()
    };
    let traj = run_flow(g.clone(), &constant_cutoff(&grid, 1.0)?, &settings)?;
    let sub = check_flow_conditions(&traj)?;
    let mut d = InputsDigest::new("flow_conditions_control");
    d.metric(&g).values(&[cfg.t_target]);
    let mut rep = VerificationReport::new("flow_conditions_control", d.finish());
    let key = "first_failure_t.metric_equivalence";
    match sub.fitted.get(key) {
        Some(&t) => {
            rep.fit(key, t);
            rep.compare("metric_equivalence_flagged", t, cfg.t_target, 0.0);
        }
        None => {
            rep.compare("metric_equivalence_flagged", 1.0, 0.0, 0.0);
        }
    }
    rep.compare(
        "sub_check_fails",
        if sub.verdict == Verdict::Fail {
            0.0
        } else {
            1.0
        },
        0.0,
        0.0,
    );
    rep.record(
        "eig_min_ratio",
        sub.quantities
            .get("eig_min_ratio")
            .cloned()
            .unwrap_or_default(),
    );
    Ok(rep.finish())
}

fn moser(cfg: &MoserCheck) -> Result<VerificationReport> {
    let mut d = InputsDigest::new("moser_recursion");
    d.text(&serde_json::to_string(cfg)?);
    let mut rep = VerificationReport::new("moser_recursion", d.finish());
    let sched = moser_schedule(cfg.p0, cfg.t_end)?;
    let nu: f64 = 1.5;
    let mut worst = 0.0f64;
    for k in 0..sched.p.len() {
        let p = cfg.p0 * nu.powi(k as i32);
        let mut geo = 0.0;
        for j in 0..k {
            geo += nu.powi(j as i32);
        }
        let pp = (cfg.p0 - 2.0) * nu.powi(k as i32) + geo;
        let tau = cfg.t_end * (1.0 - nu.powi(6).powi(-(k as i32)));
        worst = worst
            .max((sched.p[k] - p).abs())
            .max((sched.p_prime[k] - pp).abs())
            .max((sched.tau[k] - tau).abs());
    }
    rep.compare("schedule_matches_formula", worst, 0.0, 1e-12);
    if cfg.p0 == 3.0 && sched.p.len() > 2 {
        rep.compare("p2_is_6.75", (sched.p[2] - 6.75).abs(), 0.0, 1e-12);
        rep.compare(
            "p_prime2_is_4.75",
            (sched.p_prime[2] - 4.75).abs(),
            0.0,
            1e-12,
        );
    }
    rep.record("p", sched.p.clone());
    rep.record("p_prime", sched.p_prime.clone());
    rep.record("tau", sched.tau.clone());
    let family = cfg
        .levels
        .iter()
        .map(|&n| heat_witness(n, cfg.t_end, cfg.samples))
        .collect::<Result<Vec<_>>>()?;
    rep.absorb("sup_bound", &check_sup_bound(&family, cfg.p0)?);
    Ok(rep.finish())
}

fn theorem(
    cfg: &TheoremCheck,
    name: &str,
    artifacts: &mut Vec<(String, String)>,
) -> Result<VerificationReport> {
    let g = scenario_on_default_grid(&cfg.scenario, &cfg.params, 4, cfg.n)?.metric;
    let center = center_node(g.grid());
    let out = theorem_one_report(&g, center, cfg.radius, &cfg.config)?;
    if let Some(t) = &out.trajectory {
        artifacts.push((format!("{name}_trajectory.csv"), t.to_csv()));
    }
    if let Some(v) = &out.initial_volumes {
        artifacts.push((format!("{name}_volume_initial.csv"), v.to_csv()));
    }
    if let Some(v) = &out.final_volumes {
        artifacts.push((format!("{name}_volume_final.csv"), v.to_csv()));
    }
    match cfg.expect {
        Verdict::Pass => Ok(out.report),
        Verdict::HypothesisUnmet => {
            // The gate control passes when the smallness hypothesis is rejected.
            let inner = out.report;
            let mut rep = VerificationReport::new("theorem_one_gate", inner.inputs_digest.clone());
            for h in &inner.hypotheses {
                rep.record(
                    format!("hypothesis.{}", h.label),
                    vec![h.lhs, h.rhs, h.tolerance],
                );
            }
            let gate = inner
                .hypotheses
                .iter()
                .find(|h| h.label == "rm_l2_below_epsilon0");
            match gate {
                Some(h) => rep.compare("hypothesis_rejected", h.rhs + h.tolerance, h.lhs, 0.0),
                None => rep.compare("hypothesis_rejected", 1.0, 0.0, 0.0),
            };
            for (k, v) in &inner.fitted {
                rep.fit(k.clone(), *v);
            }
            Ok(rep.finish())
        }
        other => Err(Error::Config(format!(
            "theorem_one checks expect `pass` or `hypothesis_unmet`, not {other:?}"
        ))),
    }
}
