//! Empirical checks of the a priori estimates: every check fits the unknown
//! constant of an inequality and tests the shape of the claim (boundedness,
//! stability under refinement and scaling) rather than a literal constant.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::field::{MetricField, ScalarField};
use crate::grid::ChartGrid;

mod elliptic;
mod flow_checks;
mod heat;
mod ibp;
pub mod oracles;
pub mod suite;
mod theorem;

pub use elliptic::{check_elliptic_l4, elliptic_sides, elliptic_stability, EllipticSides};
pub use flow_checks::{
    check_flow_conditions, check_smoothing_bound, inject_curvature_growth, smoothing_quotients,
};
pub use heat::{
    check_sup_bound, flow_witness, heat_witness, recursion_constants, sup_bound_constant,
    HeatFlowWitness,
};
pub use ibp::{
    calibrate_ibp_margin, check_ibp_lemma, ibp_corpus, ibp_sides, IbpCoefficients, IbpSides,
};
pub use theorem::{theorem_one_report, TheoremOneConfig, TheoremOneOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// Quantities are recorded without a pass/fail claim.
    ReportOnly,
    /// A hypothesis of the estimate does not hold, so its conclusion is not tested.
    HypothesisUnmet,
}

/// `lhs ≤ rhs + tolerance`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub label: String,
    pub lhs: f64,
    pub rhs: f64,
    pub tolerance: f64,
    pub holds: bool,
}

impl Comparison {
    pub fn le(label: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let finite = |v: f64| if v.is_finite() { v } else { f64::MAX };
        let (lhs, rhs, tolerance) = (finite(lhs), finite(rhs), finite(tolerance));
        let mut c = Comparison {
            label: label.into(),
            lhs,
            rhs,
            tolerance,
            holds: false,
        };
        c.holds = c.evaluate();
        c
    }

    pub fn evaluate(&self) -> bool {
        self.lhs < f64::MAX && self.lhs <= self.rhs + self.tolerance
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub check: String,
    pub inputs_digest: String,
    pub hypotheses: Vec<Comparison>,
    pub comparisons: Vec<Comparison>,
    pub fitted: BTreeMap<String, f64>,
    pub quantities: BTreeMap<String, Vec<f64>>,
    pub notes: Vec<String>,
    pub report_only: bool,
    pub verdict: Verdict,
}

impl VerificationReport {
    pub fn new(check: impl Into<String>, inputs_digest: String) -> Self {
        VerificationReport {
            check: check.into(),
            inputs_digest,
            hypotheses: Vec::new(),
            comparisons: Vec::new(),
            fitted: BTreeMap::new(),
            quantities: BTreeMap::new(),
            notes: Vec::new(),
            report_only: false,
            verdict: Verdict::ReportOnly,
        }
    }

    pub fn compare(
        &mut self,
        label: impl Into<String>,
        lhs: f64,
        rhs: f64,
        tolerance: f64,
    ) -> bool {
        let c = Comparison::le(label, lhs, rhs, tolerance);
        let holds = c.holds;
        self.comparisons.push(c);
        holds
    }

    pub fn hypothesis(
        &mut self,
        label: impl Into<String>,
        lhs: f64,
        rhs: f64,
        tolerance: f64,
    ) -> bool {
        let c = Comparison::le(label, lhs, rhs, tolerance);
        let holds = c.holds;
        self.hypotheses.push(c);
        holds
    }

    pub fn fit(&mut self, name: impl Into<String>, value: f64) {
        self.fitted.insert(
            name.into(),
            if value.is_finite() { value } else { f64::MAX },
        );
    }

    pub fn record(&mut self, name: impl Into<String>, values: Vec<f64>) {
        let values = values
            .into_iter()
            .map(|v| if v.is_finite() { v } else { f64::MAX })
            .collect();
        self.quantities.insert(name.into(), values);
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    /// The verdict implied by the recorded comparisons alone.
    pub fn evaluate(&self) -> Verdict {
        if self.report_only {
            Verdict::ReportOnly
        } else if self.hypotheses.iter().any(|c| !c.evaluate()) {
            Verdict::HypothesisUnmet
        } else if self.comparisons.iter().all(Comparison::evaluate) {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn finish(mut self) -> Self {
        for c in self
            .hypotheses
            .iter_mut()
            .chain(self.comparisons.iter_mut())
        {
            c.holds = c.evaluate();
        }
        self.verdict = self.evaluate();
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// Counts against a suite: a failed check or an unexpected unmet hypothesis.
    pub fn is_failure(&self) -> bool {
        matches!(self.verdict, Verdict::Fail | Verdict::HypothesisUnmet)
    }

    /// Fold a sub-report into this one, prefixing its labels.
    pub fn absorb(&mut self, prefix: &str, sub: &VerificationReport) {
        for c in &sub.hypotheses {
            let mut c = c.clone();
            c.label = format!("{prefix}.{}", c.label);
            self.hypotheses.push(c);
        }
        if !sub.report_only {
            for c in &sub.comparisons {
                let mut c = c.clone();
                c.label = format!("{prefix}.{}", c.label);
                self.comparisons.push(c);
            }
        }
        for (k, v) in &sub.fitted {
            self.fitted.insert(format!("{prefix}.{k}"), *v);
        }
        for (k, v) in &sub.quantities {
            self.quantities.insert(format!("{prefix}.{k}"), v.clone());
        }
        for n in &sub.notes {
            self.notes.push(format!("{prefix}: {n}"));
        }
    }
}

/// SHA-256 over the exact inputs of a check.
pub struct InputsDigest(Sha256);

impl InputsDigest {
    pub fn new(tag: &str) -> Self {
        let mut h = Sha256::new();
        h.update(tag.as_bytes());
        InputsDigest(h)
    }

    pub fn text(&mut self, s: &str) -> &mut Self {
        self.0.update((s.len() as u64).to_le_bytes());
        self.0.update(s.as_bytes());
        self
    }

    pub fn values(&mut self, v: &[f64]) -> &mut Self {
        self.0.update((v.len() as u64).to_le_bytes());
        for x in v {
            self.0.update(x.to_le_bytes());
        }
        self
    }

    pub fn grid(&mut self, grid: &ChartGrid) -> &mut Self {
        let extents: Vec<f64> = grid.extents().iter().map(|&e| e as f64).collect();
        self.values(&extents)
            .values(grid.spacing())
            .values(grid.origin())
            .text(&format!("{:?}", grid.boundary()))
    }

    pub fn metric(&mut self, g: &MetricField) -> &mut Self {
        self.grid(g.grid()).values(g.data())
    }

    pub fn scalar(&mut self, f: &ScalarField) -> &mut Self {
        self.grid(f.grid()).values(f.values())
    }

    pub fn finish(self) -> String {
        self.0
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Ratio of the largest to the smallest of positive values (1 for a single
/// value, infinity when any value is zero or negative).
pub fn spread(values: &[f64]) -> f64 {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(0.0f64, f64::max);
    if values.is_empty() {
        1.0
    } else if lo > 0.0 {
        hi / lo
    } else if hi == 0.0 {
        1.0
    } else {
        f64::INFINITY
    }
}

/// Least-squares slope of `log e` against `log h`.
pub fn fitted_order(h: &[f64], e: &[f64]) -> f64 {
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests;
