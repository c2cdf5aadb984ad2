use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use locflow::config::{node_near, RunCheck, RunConfig};
use locflow::curvature::{summarize, CurvaturePack};
use locflow::cutoff::{center_node, make_cutoff};
use locflow::field::{MetricField, TensorField};
use locflow::flow::run_flow;
use locflow::geometry::volume_growth_table;
use locflow::io::{read_metric, write_field};
use locflow::scenario::{scenario_on_default_grid, ScenarioParams};
use locflow::sobolev::{estimate_sobolev, SobolevDomain};
use locflow::verify::suite::{load_suite, run_suite};
use locflow::verify::{check_flow_conditions, check_smoothing_bound, VerificationReport};
use serde_json::json;

use crate::{CurvatureArgs, FlowArgs, ScenarioArgs, SobolevArgs, Status, VerifyArgs, VolumeArgs};

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn center_of(g: &MetricField, center: Option<&[f64]>) -> Result<usize> {
    Ok(match center {
        Some(x) => node_near(g.grid(), x)?,
        None => center_node(g.grid()),
    })
}

pub fn scenario(a: ScenarioArgs, seed: Option<u64>) -> Result<Status> {
    let params = ScenarioParams {
        amplitude: a.amplitude,
        wavenumber: a.wavenumber,
        kx: a.kx,
        ky: a.ky,
        radius: a.radius,
        radius2: a.radius2,
        seed,
    };
    let sc = scenario_on_default_grid(&a.name, &params, a.dim, a.n)?;
    out_dir(&a.out)?;
    write_field(&a.out.join("metric.json"), &sc.metric.clone().into())?;
    let grid = sc.metric.grid();
    let manifest = json!({
        "scenario": sc.name,
        "params": sc.params,
        "dimension": grid.dim(),
        "extents": grid.extents(),
        "spacing": grid.spacing(),
        "origin": grid.origin(),
        "boundary": grid.boundary(),
        "metric_file": "metric.json",
        "oracle": sc.oracle,
    });
    write_json(&a.out.join("manifest.json"), &manifest)?;
    Ok(Status::Ok)
}

pub fn curvature(a: CurvatureArgs) -> Result<Status> {
    let g = read_metric(&a.metric)?;
    let pack = CurvaturePack::full(&g)?;
    out_dir(&a.out)?;
    let tensors: Vec<(&str, Option<&TensorField>)> = vec![
        ("christoffel", Some(&pack.christoffel)),
        ("riemann", Some(&pack.riemann)),
        ("ricci", Some(&pack.ricci)),
        ("weyl", pack.weyl.as_ref()),
        ("weyl_plus", pack.weyl_plus.as_ref()),
        ("weyl_minus", pack.weyl_minus.as_ref()),
        ("bach", pack.bach.as_ref()),
        ("bach_plus", pack.bach_plus.as_ref()),
    ];
    let mut summaries = Vec::new();
    for (name, t) in tensors {
        if let Some(t) = t {
            write_field(&a.out.join(format!("{name}.json")), &t.clone().into())?;
            summaries.push(summarize(name, t, &g)?);
        }
    }
    write_field(&a.out.join("scalar.json"), &pack.scalar.clone().into())?;
    let bach_difference = match (&pack.bach, &pack.bach_plus) {
        (Some(b), Some(bp)) => Some(summarize("bach_difference", &b.difference(bp)?, &g)?),
        _ => None,
    };
    let summary = json!({
        "tensors": summaries,
        "scalar": { "max_abs": pack.scalar.max_abs() },
        "bach_difference": bach_difference,
    });
    write_json(&a.out.join("summary.json"), &summary)?;
    Ok(Status::Ok)
}

pub fn sobolev(a: SobolevArgs) -> Result<Status> {
    let g = read_metric(&a.metric)?;
    let est = match a.radius {
        Some(r) => {
            let c = make_cutoff(
                g.grid(),
                center_of(&g, a.center.as_deref())?,
                r,
                a.profile.into(),
            )?;
            estimate_sobolev(SobolevDomain::Cutoff(&c), &g, a.budget, a.safety)?
        }
        None => {
            if a.center.is_some() {
                bail!("--center needs --radius");
            }
            estimate_sobolev(SobolevDomain::WholeGrid, &g, a.budget, a.safety)?
        }
    };
    out_dir(&a.out)?;
    write_field(&a.out.join("witness.json"), &est.witness.clone().into())?;
    let report = json!({
        "A": est.usable(),
        "constant": est.constant,
        "safety_factor": est.safety_factor,
        "sample_count": est.sample_count,
        "witness_index": est.witness_index,
        "witness_file": "witness.json",
    });
    write_json(&a.out.join("sobolev.json"), &report)?;
    Ok(Status::Ok)
}

pub fn flow(a: FlowArgs, seed: Option<u64>) -> Result<Status> {
    let cfg =
        RunConfig::load(&a.config).with_context(|| format!("loading {}", a.config.display()))?;
    let Some(out) = a.out.or_else(|| cfg.out.clone()) else {
        bail!("no output directory: pass --out or set `out` in the config");
    };
    let g0 = cfg.initial_metric(seed)?;
    let cutoff = cfg.cutoff(g0.grid())?;
    let traj = run_flow(g0, &cutoff, &cfg.flow)?;
    out_dir(&out)?;
    fs::write(out.join("trajectory.csv"), traj.to_csv())?;
    for (i, (_, g)) in traj.snapshots.iter().enumerate() {
        write_field(
            &out.join(format!("snapshot_{i:04}.json")),
            &g.clone().into(),
        )?;
    }
    write_field(
        &out.join("final_metric.json"),
        &traj.final_metric.clone().into(),
    )?;
    let mut failed = false;
    let mut reports: Vec<VerificationReport> = Vec::new();
    for check in &cfg.checks {
        let rep = match check {
            RunCheck::FlowConditions => check_flow_conditions(&traj)?,
            RunCheck::Smoothing => {
                let c_s = match cfg.c_s {
                    Some(c) => c,
                    None => {
                        let g0 = cfg.initial_metric(seed)?;
                        estimate_sobolev(
                            SobolevDomain::Cutoff(&cutoff),
                            &g0,
                            64,
                            locflow::sobolev::DEFAULT_SAFETY,
                        )?
                        .usable()
                    }
                };
                check_smoothing_bound(&traj, &cutoff, c_s)?
            }
        };
        failed |= rep.is_failure();
        write_json(&out.join(format!("{}.json", rep.check)), &rep)?;
        reports.push(rep);
    }
    let summary = json!({
        "steps": traj.steps,
        "t_end": traj.samples.last().map(|s| s.t),
        "failure": traj.failure,
        "first_condition_failure": traj.first_condition_failure,
        "snapshots": traj.snapshots.iter().map(|(t, _)| *t).collect::<Vec<_>>(),
        "checks": reports.iter().map(|r| json!({"check": r.check, "verdict": r.verdict})).collect::<Vec<_>>(),
    });
    write_json(&out.join("flow.json"), &summary)?;
    if let Some(f) = &traj.failure {
        log::error!("flow step failed: {f}");
        return Ok(Status::StepFailed);
    }
    Ok(if failed {
        Status::ChecksFailed
    } else {
        Status::Ok
    })
}

pub fn volume(a: VolumeArgs) -> Result<Status> {
    let g = read_metric(&a.metric)?;
    let table = volume_growth_table(&g, center_of(&g, a.center.as_deref())?, &a.radii)?;
    out_dir(&a.out)?;
    fs::write(a.out.join("volume.csv"), table.to_csv())?;
    Ok(Status::Ok)
}

pub fn verify(a: VerifyArgs, seed: Option<u64>) -> Result<Status> {
    let mut suite =
        load_suite(&a.suite).with_context(|| format!("loading {}", a.suite.display()))?;
    if let Some(s) = seed {
        suite.seed = s;
    }
    let outcome = run_suite(&suite)?;
    outcome.write(&a.out)?;
    for c in &outcome.checks {
        log::info!("{}: {:?}", c.name, c.report.verdict);
    }
    print!("{}", outcome.summary_csv());
    Ok(if outcome.passed() {
        Status::Ok
    } else {
        Status::ChecksFailed
    })
}
