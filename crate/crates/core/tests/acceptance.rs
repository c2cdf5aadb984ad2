//! Acceptance criteria 1–9 against the committed suite `suites/acceptance.json`.
//! Prints one PASS/FAIL line per criterion and exits non-zero on any
//! unexpected failure.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use locflow::flow::FlowSettings;
use locflow::scenario::ScenarioParams;
use locflow::verify::oracles::BachCase;
use locflow::verify::suite::BachCheck;
use locflow::verify::suite::{
    run_check, run_suite, CheckKind, CheckOutcome, CheckSpec, SmoothingCheck, Suite, SuiteOutcome,
};

const SUITE: &str = include_str!("../../../suites/acceptance.json");

struct Criterion {
    id: u8,
    title: &'static str,
    checks: &'static [&'static str],
    budget_s: Option<f64>,
}

const CRITERIA: &[Criterion] = &[
    Criterion {
        id: 1,
        title: "curvature oracles",
        checks: &["curvature_oracles"],
        budget_s: Some(120.0),
    },
    Criterion {
        id: 2,
        title: "Bach W+ vs full-W cross-check",
        checks: &["bach_crosscheck"],
        budget_s: None,
    },
    Criterion {
        id: 3,
        title: "flow oracle",
        checks: &["flow_oracle"],
        budget_s: Some(180.0),
    },
    Criterion {
        id: 4,
        title: "smoothing scenario S4",
        checks: &["smoothing_s4", "flow_conditions_control"],
        budget_s: Some(600.0),
    },
    Criterion {
        id: 5,
        title: "integration-by-parts corpus",
        checks: &["ibp_corpus"],
        budget_s: Some(60.0),
    },
    Criterion {
        id: 6,
        title: "Moser schedule and H-recursion",
        checks: &["moser_recursion"],
        budget_s: None,
    },
    Criterion {
        id: 7,
        title: "elliptic L4 lemmas",
        checks: &["elliptic_l4"],
        budget_s: None,
    },
    Criterion {
        id: 8,
        title: "volume growth and theorem pipeline",
        checks: &[
            "volume_growth",
            "theorem_one_flat",
            "theorem_one_s4",
            "theorem_one_gate",
        ],
        budget_s: Some(300.0),
    },
];

/// Criteria that are red for a documented reason: the only failing
/// comparisons allowed are those whose label ends with the given suffix.
/// On S4 the quotient q(t) rises roughly linearly over the window because
/// ‖φ²Rm‖∞ decays slowly under the localized flow; see the README.
const KNOWN_RED: &[(u8, &str)] = &[(4, "no_upward_trend"), (8, "no_upward_trend")];

/// Checks rerun under different thread counts for criterion 9.
const DETERMINISM_CHECKS: &[&str] = &[
    "flow_conditions_control",
    "flow_oracle",
    "ibp_corpus",
    "moser_recursion",
    "volume_growth",
];

fn out_root() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in fs::read_dir(dir).expect("output dir") {
        let e = e.expect("dir entry");
        out.insert(
            e.file_name().to_string_lossy().into_owned(),
            fs::read(e.path()).expect("read output"),
        );
    }
    out
}

fn determinism_suite(base: &Suite) -> Suite {
    let mut checks: Vec<CheckSpec> = base
        .checks
        .iter()
        .filter(|c| DETERMINISM_CHECKS.contains(&c.name.as_str()))
        .cloned()
        .collect();
    checks.push(CheckSpec {
        name: "smoothing_3d".into(),
        check: CheckKind::Smoothing(SmoothingCheck {
            params: ScenarioParams {
                amplitude: Some(0.08),
                wavenumber: Some(2),
                seed: Some(3),
                ..Default::default()
            },
            dim: 3,
            n: 24,
            radius: 0.4,
            flow: FlowSettings {
                t_target: 0.01,
                record_stride: 2,
                snapshot_stride: 6,
                ..Default::default()
            },
            ..Default::default()
        }),
    });
    checks.push(CheckSpec {
        name: "bach_perturbed".into(),
        check: CheckKind::BachCrosscheck(BachCheck {
            cases: vec![BachCase {
                scenario: "perturbed_flat".into(),
                params: ScenarioParams {
                    amplitude: Some(0.05),
                    wavenumber: Some(1),
                    seed: Some(3),
                    ..Default::default()
                },
                n: 12,
                vanishing: false,
            }],
        }),
    });
    Suite {
        name: "determinism".into(),
        seed: base.seed,
        checks,
    }
}

fn run_with_threads(suite: &Suite, threads: usize, dir: &Path) -> SuiteOutcome {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool");
    let outcome = pool
        .install(|| run_suite(suite))
        .expect("determinism suite runs");
    let _ = fs::remove_dir_all(dir);
    outcome.write(dir).expect("write outputs");
    outcome
}

fn criterion_nine(base: &Suite, main_dir: &Path) -> (bool, String) {
    let suite = determinism_suite(base);
    let root = out_root();
    let a = root.join("determinism_t1");
    let b = root.join("determinism_t3");
    let b2 = root.join("determinism_t3_again");
    run_with_threads(&suite, 1, &a);
    run_with_threads(&suite, 3, &b);
    run_with_threads(&suite, 3, &b2);
    let (fa, fb, fb2) = (files(&a), files(&b), files(&b2));
    let mut diffs: Vec<String> = Vec::new();
    if fa != fb || fb != fb2 {
        for (k, v) in &fa {
            if fb.get(k) != Some(v) || fb2.get(k) != Some(v) {
                diffs.push(k.clone());
            }
        }
    }
    // The same checks inside the full run (default pool) must match too.
    let main = files(main_dir);
    for (k, v) in &fa {
        let shared = DETERMINISM_CHECKS.iter().any(|c| k.starts_with(c));
        if shared && main.get(k) != Some(v) {
            diffs.push(format!("{k} (vs full run)"));
        }
    }
    let detail = format!(
        "{} files compared across 1/3/3 threads and the full run",
        fa.len()
    );
    if diffs.is_empty() {
        (true, detail)
    } else {
        (false, format!("{detail}; differing: {}", diffs.join(", ")))
    }
}

fn main() -> ExitCode {
    let suite: Suite = serde_json::from_str(SUITE).expect("committed suite parses");
    let mut runs: BTreeMap<String, (CheckOutcome, f64)> = BTreeMap::new();
    for spec in &suite.checks {
        let t = Instant::now();
        let out = run_check(spec, suite.seed)
            .unwrap_or_else(|e| panic!("check {} errored: {e}", spec.name));
        runs.insert(spec.name.clone(), (out, t.elapsed().as_secs_f64()));
    }
    let main_dir = out_root().join("suite");
    let _ = fs::remove_dir_all(&main_dir);
    let outcome = SuiteOutcome {
        name: suite.name.clone(),
        checks: runs.values().map(|(o, _)| o.clone()).collect(),
    };
    outcome.write(&main_dir).expect("write suite outputs");

    let mut unexpected = 0;
    for c in CRITERIA {
        let mut ok = true;
        let mut secs = 0.0;
        let mut failing: Vec<String> = Vec::new();
        for name in c.checks {
            let (out, t) = runs
                .get(*name)
                .unwrap_or_else(|| panic!("suite lacks check {name}"));
            secs += t;
            if !out.report.passed() {
                ok = false;
                failing.extend(
                    out.report
                        .comparisons
                        .iter()
                        .filter(|x| !x.holds)
                        .map(|x| format!("{name}.{}", x.label)),
                );
                if out.report.comparisons.iter().all(|x| x.holds) {
                    failing.push(format!("{name}: verdict {:?}", out.report.verdict));
                }
            }
        }
        let in_budget = c.budget_s.is_none_or(|b| secs <= b);
        let budget = c
            .budget_s
            .map_or(String::new(), |b| format!(" <= {b:.0} s"));
        let status = if ok && in_budget { "PASS" } else { "FAIL" };
        let mut line = format!(
            "criterion {} {status}: {} ({secs:.1} s{budget})",
            c.id, c.title
        );
        if !failing.is_empty() {
            line.push_str(&format!("; failing: {}", failing.join(", ")));
        }
        if !in_budget {
            line.push_str("; over runtime budget");
        }
        if !(ok && in_budget) {
            let documented =
                KNOWN_RED
                    .iter()
                    .find(|(id, _)| *id == c.id)
                    .is_some_and(|(_, suffix)| {
                        in_budget
                            && !failing.is_empty()
                            && failing.iter().all(|f| f.ends_with(suffix))
                    });
            if documented {
                line.push_str(" [known red, documented]");
            } else {
                unexpected += 1;
            }
        }
        println!("{line}");
    }

    let t = Instant::now();
    let (ok, detail) = criterion_nine(&suite, &main_dir);
    println!(
        "criterion 9 {}: determinism ({detail}; {:.1} s)",
        if ok { "PASS" } else { "FAIL" },
        t.elapsed().as_secs_f64()
    );
    if !ok {
        unexpected += 1;
    }
    println!("outputs in {}", out_root().display());
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{unexpected} criteria failed unexpectedly");
        ExitCode::FAILURE
    }
}
