use super::flow_checks::MIN_SMOOTHING_SAMPLES;
use super::suite::{run_check, validate_suite, CheckKind, CheckSpec, ConditionsControl, Suite};
use super::*;
use crate::cutoff::{center_node, constant_cutoff, make_cutoff, Profile};
use crate::field::{MetricField, ScalarField};
use crate::flow::{run_flow, FlowSettings};
use crate::grid::ChartGrid;
use crate::scenario::{scenario_on_default_grid, ScenarioParams};

fn torus(n: usize) -> MetricField {
    MetricField::flat(ChartGrid::periodic_cube(2, n, std::f64::consts::TAU).unwrap())
}

#[test]
fn comparison_verdicts() {
    let mut r = VerificationReport::new("t", "d".into());
    assert!(r.compare("a", 1.0, 2.0, 0.0));
    assert!(r.compare("b", 2.0, 1.0, 1.0));
    assert_eq!(r.clone().finish().verdict, Verdict::Pass);
    assert!(!r.compare("c", 3.0, 1.0, 1.0));
    assert_eq!(r.finish().verdict, Verdict::Fail);
    let mut h = VerificationReport::new("t", "d".into());
    h.hypothesis("small", 2.0, 1.0, 0.0);
    h.compare("x", 0.0, 1.0, 0.0);
    assert_eq!(h.finish().verdict, Verdict::HypothesisUnmet);
}

#[test]
fn spread_and_order() {
    assert_eq!(spread(&[0.0, 0.0]), 1.0);
    assert!((spread(&[1.0, 3.0]) - 3.0).abs() < 1e-15);
    let h = [0.4, 0.2, 0.1];
    let e: Vec<f64> = h.iter().map(|x| 3.0 * x * x).collect();
    assert!((fitted_order(&h, &e) - 2.0).abs() < 1e-12);
}

#[test]
fn ibp_identity_at_p2_with_constant_psi() {
    // With ψ ≡ 1 and p = 2 the lemma's first term is ∫|∇f|² exactly.
    let g = torus(48);
    let grid = *g.grid();
    let f = ScalarField::from_fn(grid, |x| 1.5 + 0.4 * x[0].sin() * x[1].cos());
    let one = ScalarField::constant(grid, 1.0);
    let s = ibp_sides(&f, &one, 2.0, &g).unwrap();
    assert!(s.t2.abs() < 1e-20);
    assert!(
        (s.lhs - s.t1).abs() <= 1e-3 * s.lhs,
        "{} vs {}",
        s.lhs,
        s.t1
    );
    assert!(
        check_ibp_lemma(&f, &one, 2.0, &g, calibrate_ibp_margin(&g).unwrap())
            .unwrap()
            .passed()
    );
}

#[test]
fn ibp_rejects_bad_inputs() {
    let g = torus(16);
    let grid = *g.grid();
    let one = ScalarField::constant(grid, 1.0);
    let neg = ScalarField::constant(grid, -1.0);
    assert!(ibp_sides(&neg, &one, 2.0, &g).is_err());
    assert!(ibp_sides(&one, &one, 1.0, &g).is_err());
    let zero = ScalarField::zeros(grid);
    assert!(ibp_sides(&zero, &one, 1.5, &g).is_err());
}

#[test]
fn ibp_corpus_passes_and_controls_fail() {
    let r = ibp_corpus(11, 24, 32).unwrap();
    assert_eq!(
        r.verdict,
        Verdict::Pass,
        "{:?}",
        r.comparisons.iter().find(|c| !c.holds)
    );
    let controls = r
        .comparisons
        .iter()
        .filter(|c| c.label.starts_with("control_"))
        .count();
    assert_eq!(controls, 3);
    assert_eq!(r, ibp_corpus(11, 24, 32).unwrap());
}

#[test]
fn sup_bound_zero_witness_has_zero_constant() {
    let mut w = heat_witness(16, 0.2, 8).unwrap();
    let zero = ScalarField::zeros(*w.grid());
    for f in &mut w.f {
        *f = zero.clone();
    }
    assert_eq!(sup_bound_constant(&w, 3.0).unwrap(), 0.0);
}

#[test]
fn sup_bound_stable_on_heat_family() {
    let family: Vec<_> = [16, 32]
        .iter()
        .map(|&n| heat_witness(n, 0.5, 20).unwrap())
        .collect();
    let (worst, scale) = family[1].residual().unwrap();
    assert!(worst >= -0.05 * scale);
    let r = check_sup_bound(&family, 3.0).unwrap();
    assert_eq!(r.verdict, Verdict::Pass);
    let single = check_sup_bound(&family[..1], 3.0).unwrap();
    assert!(single.report_only);
}

fn flat_flow(samples: usize) -> (crate::flow::FlowTrajectory, crate::cutoff::CutoffFunction) {
    let grid = ChartGrid::periodic_cube(2, 32, 1.0).unwrap();
    let cutoff = make_cutoff(&grid, center_node(&grid), 0.3, Profile::Cos2).unwrap();
    let settings = FlowSettings {
        t_target: 5e-3,
        record_stride: 1,
        ..Default::default()
    };
    let traj = run_flow(MetricField::flat(grid), &cutoff, &settings).unwrap();
    assert!(traj.samples.len() > samples);
    (traj, cutoff)
}

#[test]
fn smoothing_flat_passes_and_injected_growth_fails() {
    let (traj, cutoff) = flat_flow(MIN_SMOOTHING_SAMPLES);
    let q = smoothing_quotients(&traj, &cutoff, 1.0).unwrap();
    assert!(q.iter().all(|p| p.1 == 0.0));
    assert_eq!(
        check_smoothing_bound(&traj, &cutoff, 1.0).unwrap().verdict,
        Verdict::Pass
    );
    let bad = inject_curvature_growth(&traj, 1e3);
    assert_eq!(
        check_smoothing_bound(&bad, &cutoff, 1.0).unwrap().verdict,
        Verdict::Fail
    );
}

#[test]
fn smoothing_needs_enough_samples() {
    let (mut traj, cutoff) = flat_flow(MIN_SMOOTHING_SAMPLES);
    traj.samples.truncate(5);
    assert!(check_smoothing_bound(&traj, &cutoff, 1.0).is_err());
}

#[test]
fn flow_conditions_flat_pass_and_large_data_flagged() {
    let (traj, _) = flat_flow(1);
    assert_eq!(check_flow_conditions(&traj).unwrap().verdict, Verdict::Pass);
    let spec = CheckSpec {
        name: "ctrl".into(),
        check: CheckKind::FlowConditionsControl(ConditionsControl {
            n: 24,
            ..Default::default()
        }),
    };
    let out = run_check(&spec, 0).unwrap();
    assert_eq!(
        out.report.verdict,
        Verdict::Pass,
        "{:?}",
        out.report.comparisons
    );
}

#[test]
fn flow_conditions_negative_curvature_growth() {
    let (mut traj, _) = flat_flow(1);
    traj.samples[0].l2_rm_supp = 1.0;
    let last = traj.samples.len() - 1;
    traj.samples[last].l2_rm_supp = 3.0;
    let r = check_flow_conditions(&traj).unwrap();
    assert_eq!(r.verdict, Verdict::Fail);
    assert!(r.fitted.contains_key("first_failure_t.curvature_l2"));
}

#[test]
fn elliptic_flat_constants_vanish() {
    let g = MetricField::flat(ChartGrid::periodic_cube(4, 12, 1.0).unwrap());
    let s = elliptic_sides(&g, center_node(g.grid()), 0.375).unwrap();
    assert_eq!((s.c_ric(), s.c_rm()), (0.0, 0.0));
    // The r/2 sweep resolves B(r/8) with fewer than half a cell.
    assert!(check_elliptic_l4(&g, 0.375, center_node(g.grid())).is_err());
    assert!(elliptic_sides(&g, 0, 0.1).is_err());
}

#[test]
fn theorem_gate_rejects_large_curvature() {
    let params = ScenarioParams {
        amplitude: Some(0.1),
        wavenumber: Some(2),
        seed: Some(7),
        ..Default::default()
    };
    let g = scenario_on_default_grid("perturbed_flat", &params, 4, 16)
        .unwrap()
        .metric;
    let cfg = TheoremOneConfig {
        epsilon0: 1e-3,
        ..Default::default()
    };
    let out = theorem_one_report(&g, center_node(g.grid()), 0.2, &cfg).unwrap();
    assert_eq!(out.report.verdict, Verdict::HypothesisUnmet);
    assert!(out.trajectory.is_none());
}

#[test]
fn theorem_requires_four_dimensions() {
    let g = torus(16);
    assert!(theorem_one_report(&g, 0, 0.5, &TheoremOneConfig::default()).is_err());
}

#[test]
fn suite_rejects_unknown_keys_and_duplicates() {
    let bad =
        r#"{"name":"s","checks":[{"name":"a","check":{"ibp_corpus":{"cases":3,"bogus":1}}}]}"#;
    assert!(serde_json::from_str::<Suite>(bad).is_err());
    let dup = r#"{"name":"s","checks":[{"name":"a","check":{"ibp_corpus":{}}},{"name":"a","check":{"ibp_corpus":{}}}]}"#;
    let suite: Suite = serde_json::from_str(dup).unwrap();
    assert!(validate_suite(&suite).is_err());
}

#[test]
fn constant_cutoff_flow_is_global() {
    let g = torus(16);
    let c = constant_cutoff(g.grid(), 1.0).unwrap();
    assert_eq!(c.support_count(), g.grid().len());
}
