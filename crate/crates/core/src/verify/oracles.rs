//! Closed-form and independent-solver checks of the curvature engine, the
//! two Bach forms, the flow integrators and the volume computation.

use serde::{Deserialize, Serialize};

use super::{fitted_order, InputsDigest, VerificationReport};
use crate::calculus::pointwise_tensor_norm;
use crate::curvature::{CurvaturePack, BACH_MARGIN};
use crate::cutoff::{center_node, constant_cutoff, make_cutoff, CutoffFunction, Profile};
use crate::error::Result;
use crate::field::MetricField;
use crate::flow::{gauge_pullback, stable_dt, step_deturck, step_direct, FlowState, DEFAULT_CFL};
use crate::geometry::volume_growth_table;
use crate::grid::ChartGrid;
use crate::linalg;
use crate::scenario::{scalar_conformal_flow, scenario_on_default_grid, ScenarioParams};

/// Interior nodes: away from frozen edges by `margin`, every node when periodic.
fn interior(grid: &ChartGrid, margin: usize) -> impl Iterator<Item = usize> + '_ {
    (0..grid.len()).filter(move |&k| grid.is_inner(k, margin))
}

fn max_over(values: &[f64], nodes: impl Iterator<Item = usize>) -> f64 {
    nodes.fold(0.0, |m, k| m.max(values[k].abs()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurvatureOracleConfig {
    pub flat_n: usize,
    /// Dyadic S² resolutions, finest last.
    pub sphere2_levels: Vec<usize>,
    pub sphere4_n: usize,
}

impl Default for CurvatureOracleConfig {
    fn default() -> Self {
        CurvatureOracleConfig {
            flat_n: 12,
            sphere2_levels: vec![32, 64, 128],
            sphere4_n: 24,
        }
    }
}

/// Flat data has no curvature, the round S² has scalar curvature 2 with
/// second-order convergence, and the round S⁴ is Einstein with constant 3
/// and vanishing Weyl and Bach tensors. `|W|` is compared with the curvature
/// scale `κ = max|Rm|`, and `|B|` (two more derivatives) with `κ²`.
pub fn curvature_oracles(cfg: &CurvatureOracleConfig) -> Result<VerificationReport> {
    let mut d = InputsDigest::new("curvature_oracles");
    d.text(&serde_json::to_string(cfg)?);
    let mut rep = VerificationReport::new("curvature_oracles", d.finish());

    let flat = scenario_on_default_grid("flat", &ScenarioParams::default(), 4, cfg.flat_n)?.metric;
    let pack = CurvaturePack::full(&flat)?;
    let mut worst = pack
        .christoffel
        .max_abs()
        .max(pack.riemann.max_abs())
        .max(pack.ricci.max_abs())
        .max(pack.scalar.max_abs());
    for t in [
        &pack.weyl,
        &pack.weyl_plus,
        &pack.weyl_minus,
        &pack.bach,
        &pack.bach_plus,
    ]
    .into_iter()
    .flatten()
    {
        worst = worst.max(t.max_abs());
    }
    rep.compare("flat_all_tensors", worst, 1e-10, 0.0);

    let mut h = Vec::new();
    let mut errs = Vec::new();
    for &n in &cfg.sphere2_levels {
        let g = scenario_on_default_grid("sphere_stereo", &ScenarioParams::default(), 2, n)?.metric;
        let pack = CurvaturePack::compute(&g)?;
        let grid = *g.grid();
        let err =
            interior(&grid, 3).fold(0.0f64, |m, k| m.max((pack.scalar.values()[k] - 2.0).abs()));
        h.push(grid.max_spacing());
        errs.push(err / 2.0);
    }
    rep.record("sphere2_h", h.clone());
    rep.record("sphere2_rel_err", errs.clone());
    if let Some(&last) = errs.last() {
        rep.compare("sphere2_scalar_within_1pct", last, 0.01, 0.0);
    }
    if errs.len() >= 2 {
        let order = fitted_order(&h, &errs);
        rep.fit("sphere2_order", order);
        rep.compare("sphere2_order_at_least_1.9", 1.9, order, 0.0);
    }

    let g = scenario_on_default_grid(
        "sphere_stereo",
        &ScenarioParams::default(),
        4,
        cfg.sphere4_n,
    )?
    .metric;
    let pack = CurvaturePack::full(&g)?;
    let grid = *g.grid();
    let mut eig_err = 0.0f64;
    for k in interior(&grid, 3) {
        let ric = linalg::unpack(pack.ricci.node(k), 4);
        if let Some(e) = linalg::generalized_eigenvalues(&g.at(k), &ric, 4) {
            eig_err = e.iter().fold(eig_err, |m, v| m.max((v - 3.0).abs() / 3.0));
        } else {
            eig_err = f64::INFINITY;
        }
    }
    rep.compare("sphere4_ricci_eigenvalues_within_5pct", eig_err, 0.05, 0.0);
    let rm = pointwise_tensor_norm(&pack.riemann, &g)?;
    let kappa = max_over(rm.values(), interior(&grid, 3));
    let w = pointwise_tensor_norm(pack.weyl.as_ref().expect("4-d pack has Weyl"), &g)?;
    let b = pointwise_tensor_norm(pack.bach.as_ref().expect("full pack has Bach"), &g)?;
    let w_max = max_over(w.values(), interior(&grid, 3));
    let b_max = max_over(b.values(), interior(&grid, BACH_MARGIN));
    rep.fit("sphere4_curvature_scale", kappa);
    rep.compare("sphere4_weyl_small", w_max, 1e-2 * kappa, 0.0);
    rep.compare("sphere4_bach_small", b_max, 1e-2 * kappa * kappa, 0.0);
    Ok(rep.finish())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BachCase {
    pub scenario: String,
    #[serde(default)]
    pub params: ScenarioParams,
    pub n: usize,
    /// Both forms must vanish (Einstein or conformally flat data).
    #[serde(default)]
    pub vanishing: bool,
}

pub fn default_bach_cases() -> Vec<BachCase> {
    let case = |s: &str, params: ScenarioParams, vanishing| BachCase {
        scenario: s.into(),
        params,
        n: 16,
        vanishing,
    };
    vec![
        case("flat", ScenarioParams::default(), true),
        case("sphere_stereo", ScenarioParams::default(), true),
        case("s2xs2", ScenarioParams::default(), true),
        case(
            "s2xs2",
            ScenarioParams {
                radius2: Some(2.0),
                ..Default::default()
            },
            false,
        ),
        case("conformal_torus", ScenarioParams::default(), false),
        case(
            "perturbed_flat",
            ScenarioParams {
                amplitude: Some(0.05),
                wavenumber: Some(1),
                seed: Some(3),
                ..Default::default()
            },
            false,
        ),
    ]
}

/// The full-Weyl and self-dual Bach forms agree: `max|B − B⁺| ≤ 5%` of
/// `max(|B|, |B⁺|, 10⁻²κ²)`, and both stay below `10⁻²κ²` on cases marked
/// vanishing, with `κ = max|Rm|` over the interior.
pub fn bach_crosscheck(cases: &[BachCase]) -> Result<VerificationReport> {
    let mut d = InputsDigest::new("bach_crosscheck");
    d.text(&serde_json::to_string(cases)?);
    let mut rep = VerificationReport::new("bach_crosscheck", d.finish());
    for (i, case) in cases.iter().enumerate() {
        let tag = format!("{i}_{}", case.scenario);
        let g = scenario_on_default_grid(&case.scenario, &case.params, 4, case.n)?.metric;
        let pack = CurvaturePack::full(&g)?;
        let grid = *g.grid();
        let b = pack.bach.as_ref().expect("full pack has Bach");
        let bp = pack.bach_plus.as_ref().expect("full pack has Bach");
        let diff = b.difference(bp)?;
        let nodes = || interior(&grid, BACH_MARGIN);
        let kappa = max_over(pointwise_tensor_norm(&pack.riemann, &g)?.values(), nodes());
        let b_max = max_over(pointwise_tensor_norm(b, &g)?.values(), nodes());
        let bp_max = max_over(pointwise_tensor_norm(bp, &g)?.values(), nodes());
        let diff_max = max_over(pointwise_tensor_norm(&diff, &g)?.values(), nodes());
        let floor = 1e-2 * kappa * kappa;
        let scale = b_max.max(bp_max).max(floor);
        let ratio = if diff_max == 0.0 {
            0.0
        } else {
            diff_max / scale
        };
        rep.record(format!("{tag}.norms"), vec![kappa, b_max, bp_max, diff_max]);
        rep.fit(format!("{tag}.difference_ratio"), ratio);
        rep.compare(format!("{tag}.forms_agree"), ratio, 0.05, 0.0);
        if case.vanishing {
            rep.compare(format!("{tag}.full_vanishes"), b_max, floor, 0.0);
            rep.compare(format!("{tag}.self_dual_vanishes"), bp_max, floor, 0.0);
        }
    }
    Ok(rep.finish())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowOracleConfig {
    /// Dyadic resolutions of the conformal torus, finest last.
    pub levels: Vec<usize>,
    pub t_end: f64,
    pub gauge_n: usize,
    pub gauge_t_end: f64,
    /// Resolution of the 3-d case with a moving gauge (0 = skip).
    pub moving_gauge_n: usize,
}

impl Default for FlowOracleConfig {
    fn default() -> Self {
        FlowOracleConfig {
            levels: vec![32, 64, 128],
            t_end: 0.02,
            gauge_n: 32,
            gauge_t_end: 0.01,
            moving_gauge_n: 20,
        }
    }
}

fn conformal_u(g: &MetricField) -> Vec<f64> {
    (0..g.grid().len())
        .map(|k| 0.5 * g.node(k)[0].ln())
        .collect()
}

fn rel_linf(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
        / scale
}

fn integrate_direct(g: MetricField, cutoff: &CutoffFunction, t_end: f64) -> Result<FlowState> {
    let phi = cutoff.phi.values();
    let mut s = FlowState::new(g);
    while s.t < t_end * (1.0 - 1e-12) {
        let dt = stable_dt(&s.g, |k| phi[k] * phi[k], DEFAULT_CFL)?.min(t_end - s.t);
        s = step_direct(&s, cutoff, dt)?;
    }
    Ok(s)
}

/// Largest metric difference between the pulled-back DeTurck run and the
/// direct run, with the bound `5(h² + dt²)`.
fn gauge_agreement(
    g: MetricField,
    hat: MetricField,
    cutoff: &CutoffFunction,
    t_end: f64,
) -> Result<(f64, f64, f64)> {
    let direct = integrate_direct(g.clone(), cutoff, t_end)?;
    let mut s = FlowState::new(g).with_reference(hat)?.with_gauge();
    let mut dt_max = 0.0f64;
    while s.t < t_end * (1.0 - 1e-12) {
        let dt = stable_dt(&s.g, |_| 1.0, DEFAULT_CFL)?.min(t_end - s.t);
        dt_max = dt_max.max(dt);
        s = step_deturck(&s, cutoff, dt)?;
    }
    let moved = s.gauge_displacement.as_ref().map_or(0.0, |x| x.max_abs());
    let pulled = gauge_pullback(&s)?;
    let h = s.grid().max_spacing();
    let diff = pulled
        .data()
        .iter()
        .zip(direct.g.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok((diff, 5.0 * (h * h + dt_max * dt_max), moved))
}

/// The conformal 2-torus flow against the pseudo-spectral scalar solver
/// (`≤ 1%` at the finest level, fitted order `≥ 1.8`), and direct against
/// pulled-back DeTurck runs (ε = 0) within `5(h² + dt²)`.
pub fn flow_oracle(cfg: &FlowOracleConfig) -> Result<VerificationReport> {
    let mut d = InputsDigest::new("flow_oracle");
    d.text(&serde_json::to_string(cfg)?);
    let mut rep = VerificationReport::new("flow_oracle", d.finish());
    let params = ScenarioParams::default();
    let mut h = Vec::new();
    let mut errs = Vec::new();
    for &n in &cfg.levels {
        let g = scenario_on_default_grid("conformal_torus", &params, 2, n)?.metric;
        let grid = *g.grid();
        let u0 = conformal_u(&g);
        let s = integrate_direct(g, &constant_cutoff(&grid, 1.0)?, cfg.t_end)?;
        let oracle =
            scalar_conformal_flow(&u0, n, n, grid.period(0), grid.period(1), 1.0, cfg.t_end);
        h.push(grid.max_spacing());
        errs.push(rel_linf(&conformal_u(&s.g), &oracle));
    }
    rep.record("conformal_h", h.clone());
    rep.record("conformal_rel_err", errs.clone());
    if let Some(&last) = errs.last() {
        rep.compare("conformal_within_1pct", last, 0.01, 0.0);
    }
    if errs.len() >= 2 {
        let order = fitted_order(&h, &errs);
        rep.fit("conformal_order", order);
        rep.compare("conformal_order_at_least_1.8", 1.8, order, 0.0);
    }

    let g = scenario_on_default_grid("conformal_torus", &params, 2, cfg.gauge_n)?.metric;
    let grid = *g.grid();
    let (diff, bound, _) =
        gauge_agreement(g.clone(), g, &constant_cutoff(&grid, 1.0)?, cfg.gauge_t_end)?;
    rep.compare("deturck_pullback_conformal", diff, bound, 0.0);

    if cfg.moving_gauge_n > 0 {
        let p = ScenarioParams {
            amplitude: Some(0.1),
            wavenumber: Some(1),
            seed: Some(11),
            ..Default::default()
        };
        let g = scenario_on_default_grid("perturbed_flat", &p, 3, cfg.moving_gauge_n)?.metric;
        let grid = *g.grid();
        let cut = make_cutoff(&grid, center_node(&grid), 0.45, Profile::Quintic)?;
        let (diff, bound, moved) = gauge_agreement(g, MetricField::flat(grid), &cut, 2e-3)?;
        rep.fit("moving_gauge_displacement", moved);
        rep.compare("deturck_pullback_moving_gauge", diff, bound, 0.0);
    }
    Ok(rep.finish())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VolumeOracleConfig {
    pub n: usize,
    pub half_width: f64,
    pub radii: Vec<f64>,
}

impl Default for VolumeOracleConfig {
    fn default() -> Self {
        VolumeOracleConfig {
            n: 29,
            half_width: 1.3,
            radii: vec![0.5, 0.75, 1.0],
        }
    }
}

/// Euclidean 4-balls: `Vol(B(1)) = π²/2` within 5% and `Vol/r⁴` constant
/// within 6% across the radii.
pub fn volume_oracle(cfg: &VolumeOracleConfig) -> Result<VerificationReport> {
    let mut d = InputsDigest::new("volume_oracle");
    d.text(&serde_json::to_string(cfg)?);
    let mut rep = VerificationReport::new("volume_oracle", d.finish());
    let grid = ChartGrid::frozen_cube(4, cfg.n, -cfg.half_width, cfg.half_width)?;
    let g = MetricField::flat(grid);
    let table = volume_growth_table(&g, center_node(&grid), &cfg.radii)?;
    let exact = 0.5 * std::f64::consts::PI.powi(2);
    let ratios: Vec<f64> = table.rows.iter().map(|r| r.vol_over_r4).collect();
    for row in &table.rows {
        if (row.r - 1.0).abs() < 1e-12 {
            rep.compare(
                "unit_ball_within_5pct",
                (row.vol / exact - 1.0).abs(),
                0.05,
                0.0,
            );
        }
    }
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    rep.compare("vol_over_r4_constant_within_6pct", hi / lo - 1.0, 0.06, 0.0);
    rep.record("radii", cfg.radii.clone());
    rep.record("vol_over_r4", ratios);
    rep.fit("max_vol_over_r4", table.max_ratio);
    Ok(rep.finish())
}
