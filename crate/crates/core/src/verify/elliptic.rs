use serde::{Deserialize, Serialize};

use super::{spread, InputsDigest, VerificationReport};
use crate::calculus::pointwise_tensor_norm;
use crate::curvature::CurvaturePack;
use crate::error::{Error, Result};
use crate::field::{MetricField, ScalarField};
use crate::geometry::{ball_integral, cell_diameter_bound, distance_for_radius};

/// Both sides of the two elliptic `L⁴` lemmas with `C ≡ 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticSides {
    pub r: f64,
    /// `(∫_{B(r/2)}|Ric|⁴)^{1/2}`.
    pub ric_lhs: f64,
    /// `(∫_{B(r/4)}|Rm|⁴)^{1/2}`.
    pub rm_lhs: f64,
    /// `∫_{B(r)}|Ric|²`, `∫_{B(r)}|Rm|²`, `∫_{B(r)}|B|²`.
    pub ric_l2_sq: f64,
    pub rm_l2_sq: f64,
    pub bach_l2_sq: f64,
}

impl EllipticSides {
    pub fn cross(&self) -> f64 {
        (self.ric_l2_sq * self.bach_l2_sq).sqrt()
    }

    pub fn ric_rhs(&self) -> f64 {
        self.ric_l2_sq / (self.r * self.r) + self.cross()
    }

    pub fn rm_rhs(&self) -> f64 {
        self.rm_l2_sq / (self.r * self.r) + self.cross()
    }

    pub fn c_ric(&self) -> f64 {
        ratio(self.ric_lhs, self.ric_rhs())
    }

    pub fn c_rm(&self) -> f64 {
        ratio(self.rm_lhs, self.rm_rhs())
    }
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if rhs > 0.0 {
        lhs / rhs
    } else if lhs == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn rel_change(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a / b - 1.0).abs()
    }
}

struct Norms {
    ric: ScalarField,
    rm: ScalarField,
    bach: ScalarField,
}

fn norms(g: &MetricField) -> Result<Norms> {
    if g.dim() != 4 {
        return Err(Error::Dimension(format!(
            "the elliptic lemmas are four-dimensional, got {}",
            g.dim()
        )));
    }
    let pack = CurvaturePack::compute(g)?.with_full_bach(g)?;
    let bach = pack.bach.as_ref().expect("with_full_bach fills bach");
    Ok(Norms {
        ric: pointwise_tensor_norm(&pack.ricci, g)?,
        rm: pointwise_tensor_norm(&pack.riemann, g)?,
        bach: pointwise_tensor_norm(bach, g)?,
    })
}

fn sides_from(g: &MetricField, n: &Norms, center: usize, r: f64) -> Result<EllipticSides> {
    let cell = cell_diameter_bound(g);
    if !(0.25 * r >= 0.5 * cell) {
        return Err(Error::Verification(format!(
            "ball B(r/4) with r = {r} is under-resolved (cell diameter {cell})"
        )));
    }
    let d = distance_for_radius(g, center, r)?;
    let pow = |f: &ScalarField, p: i32| f.map(|v| v.powi(p));
    Ok(EllipticSides {
        r,
        ric_lhs: ball_integral(g, &d, 0.5 * r, &pow(&n.ric, 4))?.sqrt(),
        rm_lhs: ball_integral(g, &d, 0.25 * r, &pow(&n.rm, 4))?.sqrt(),
        ric_l2_sq: ball_integral(g, &d, r, &pow(&n.ric, 2))?,
        rm_l2_sq: ball_integral(g, &d, r, &pow(&n.rm, 2))?,
        bach_l2_sq: ball_integral(g, &d, r, &pow(&n.bach, 2))?,
    })
}

/// Both sides of both lemmas on geodesic balls around `center`.
pub fn elliptic_sides(g: &MetricField, center: usize, r: f64) -> Result<EllipticSides> {
    sides_from(g, &norms(g)?, center, r)
}

fn record_sides(rep: &mut VerificationReport, tag: &str, s: &EllipticSides) {
    rep.record(
        format!("{tag}.sides"),
        vec![
            s.r,
            s.ric_lhs,
            s.ric_rhs(),
            s.rm_lhs,
            s.rm_rhs(),
            s.ric_l2_sq,
            s.rm_l2_sq,
            s.bach_l2_sq,
        ],
    );
    rep.fit(format!("{tag}.c_ric"), s.c_ric());
    rep.fit(format!("{tag}.c_rm"), s.c_rm());
    rep.fit(format!("{tag}.rm_l2"), s.rm_l2_sq.sqrt());
}

fn radius_sweep(
    g: &MetricField,
    n: &Norms,
    center: usize,
    r: f64,
    rep: &mut VerificationReport,
    tag: &str,
) -> Result<EllipticSides> {
    let full = sides_from(g, n, center, r)?;
    let half = sides_from(g, n, center, 0.5 * r)?;
    record_sides(rep, &format!("{tag}.r"), &full);
    record_sides(rep, &format!("{tag}.r_half"), &half);
    rep.fit(
        format!("{tag}.radius_spread_ric"),
        spread(&[full.c_ric(), half.c_ric()]),
    );
    rep.fit(
        format!("{tag}.radius_spread_rm"),
        spread(&[full.c_rm(), half.c_rm()]),
    );
    Ok(full)
}

/// Fit `C*` for both lemmas at radii `r` and `r/2` on one metric. Both
/// sides must be finite; the radius spread is recorded, not compared.
pub fn check_elliptic_l4(g: &MetricField, r: f64, center: usize) -> Result<VerificationReport> {
    let mut d = InputsDigest::new("elliptic_l4");
    d.metric(g).values(&[r, center as f64]);
    let mut rep = VerificationReport::new("elliptic_l4", d.finish());
    let n = norms(g)?;
    let s = radius_sweep(g, &n, center, r, &mut rep, "level_0")?;
    rep.compare(
        "sides_finite",
        if s.ric_rhs().is_finite() && s.rm_rhs().is_finite() {
            0.0
        } else {
            1.0
        },
        0.0,
        0.0,
    );
    Ok(rep.finish())
}

/// Stability of `C*` across a dyadic refinement family (metrics of the same
/// geometry, centers at the same point, coarsest first), a recorded radius
/// sweep on the finest level, and scale covariance on the coarsest level: the metric
/// `λ²g` with radius `λr` must reproduce each `C*` within 5%.
pub fn elliptic_stability(
    levels: &[(MetricField, usize)],
    r: f64,
    lambda: f64,
) -> Result<VerificationReport> {
    if levels.is_empty() {
        return Err(Error::InvalidParameter("no refinement levels".into()));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "scale λ = {lambda} must be positive"
        )));
    }
    let mut d = InputsDigest::new("elliptic_stability");
    d.values(&[r, lambda]);
    for (g, c) in levels {
        d.metric(g).values(&[*c as f64]);
    }
    let mut rep = VerificationReport::new("elliptic_stability", d.finish());
    let mut at_r = Vec::new();
    for (i, (g, center)) in levels.iter().enumerate() {
        let n = norms(g)?;
        let tag = format!("level_{i}");
        if i + 1 == levels.len() {
            at_r.push(radius_sweep(g, &n, *center, r, &mut rep, &tag)?);
        } else {
            let s = sides_from(g, &n, *center, r)?;
            record_sides(&mut rep, &format!("{tag}.r"), &s);
            at_r.push(s);
        }
    }
    let c_ric: Vec<f64> = at_r.iter().map(EllipticSides::c_ric).collect();
    let c_rm: Vec<f64> = at_r.iter().map(EllipticSides::c_rm).collect();
    rep.compare("refinement_spread_ric", spread(&c_ric), 2.0, 0.0);
    rep.compare("refinement_spread_rm", spread(&c_rm), 2.0, 0.0);
    rep.record("c_ric", c_ric);
    rep.record("c_rm", c_rm);
    rep.record(
        "h",
        levels.iter().map(|(g, _)| g.grid().max_spacing()).collect(),
    );

    let (g0, c0) = &levels[0];
    let scaled = g0.scaled(lambda * lambda)?;
    let s = elliptic_sides(&scaled, *c0, lambda * r)?;
    record_sides(&mut rep, "scaled", &s);
    let base = &at_r[0];
    rep.compare(
        "scaling_ric",
        rel_change(s.c_ric(), base.c_ric()),
        0.05,
        0.0,
    );
    rep.compare("scaling_rm", rel_change(s.c_rm(), base.c_rm()), 0.05, 0.0);
    rep.fit("lambda", lambda);
    Ok(rep.finish())
}
