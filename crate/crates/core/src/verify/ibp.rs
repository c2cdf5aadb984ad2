use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{InputsDigest, VerificationReport};
use crate::calculus::{gradient_norm_sq, integrate, laplacian};
use crate::error::{Error, Result};
use crate::field::{MetricField, ScalarField};
use crate::grid::ChartGrid;

/// Coefficients of `∫|∇(ψf^{p/2})|² ≤ a∫ψ²f^{p−1}(−Δf) + b∫|∇ψ|²f^p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IbpCoefficients {
    pub a: f64,
    pub b: f64,
}

impl IbpCoefficients {
    pub fn lemma(p: f64) -> Self {
        IbpCoefficients {
            a: p * p / (2.0 * (p - 1.0)),
            b: 1.0 + 1.0 / ((p - 1.0) * (p - 1.0)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IbpSides {
    /// `∫|∇(ψf^{p/2})|²`.
    pub lhs: f64,
    /// `∫ψ²f^{p−1}(−Δf)`.
    pub t1: f64,
    /// `∫|∇ψ|²f^p`.
    pub t2: f64,
    pub h: f64,
}

impl IbpSides {
    pub fn rhs(&self, c: IbpCoefficients) -> f64 {
        c.a * self.t1 + c.b * self.t2
    }

    /// `C_disc·h²` times the magnitude of the terms.
    pub fn tolerance(&self, c: IbpCoefficients, c_disc: f64) -> f64 {
        c_disc * self.h * self.h * (self.lhs.abs() + (c.a * self.t1).abs() + (c.b * self.t2).abs())
    }
}

pub fn ibp_sides(f: &ScalarField, psi: &ScalarField, p: f64, g: &MetricField) -> Result<IbpSides> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("p = {p} must exceed 1")));
    }
    if !f.grid().same_shape(g.grid()) || !psi.grid().same_shape(g.grid()) {
        return Err(Error::GridMismatch);
    }
    let fmin = f.min();
    if fmin < 0.0 || (fmin == 0.0 && p < 2.0) {
        return Err(Error::Verification(format!(
            "f reaches {fmin}; the lemma needs f > 0 when p < 2"
        )));
    }
    let w = psi.zip_map(f, |s, v| s * v.powf(0.5 * p))?;
    let lhs = integrate(&gradient_norm_sq(&w, g)?, g)?;
    let lap = laplacian(f, g)?;
    let i1 = ScalarField::new(
        *g.grid(),
        (0..lap.values().len())
            .map(|k| -psi.values()[k].powi(2) * f.values()[k].powf(p - 1.0) * lap.values()[k])
            .collect(),
    )?;
    let t1 = integrate(&i1, g)?;
    let i2 = gradient_norm_sq(psi, g)?.zip_map(f, |d, v| d * v.powf(p))?;
    let t2 = integrate(&i2, g)?;
    Ok(IbpSides {
        lhs,
        t1,
        t2,
        h: g.grid().max_spacing(),
    })
}

fn sides_report(
    check: &str,
    digest: String,
    sides: &IbpSides,
    p: f64,
    c: IbpCoefficients,
    c_disc: f64,
) -> VerificationReport {
    let mut r = VerificationReport::new(check, digest);
    r.compare(
        "lhs_le_rhs",
        sides.lhs,
        sides.rhs(c),
        sides.tolerance(c, c_disc),
    );
    r.fit("p", p);
    r.fit("a", c.a);
    r.fit("b", c.b);
    r.fit("c_disc", c_disc);
    r.record("sides", vec![sides.lhs, sides.t1, sides.t2]);
    r
}

/// Compare both sides of the lemma with margin `c_disc·h²`.
pub fn check_ibp_lemma(
    f: &ScalarField,
    psi: &ScalarField,
    p: f64,
    g: &MetricField,
    c_disc: f64,
) -> Result<VerificationReport> {
    let sides = ibp_sides(f, psi, p, g)?;
    let mut d = InputsDigest::new("ibp_lemma");
    d.scalar(f).scalar(psi).metric(g).values(&[p, c_disc]);
    Ok(sides_report(
        "ibp_lemma",
        d.finish(),
        &sides,
        p,
        IbpCoefficients::lemma(p),
        c_disc,
    )
    .finish())
}

/// Smallest admissible margin constant.
const MIN_C_DISC: f64 = 1e-6;

/// Calibrate `C_disc` on the exact identity `∫|∇f|² = ∫f(−Δf)` (ψ ≡ 1, p = 2):
/// ten times its relative quadrature defect, per `h²`.
pub fn calibrate_ibp_margin(g: &MetricField) -> Result<f64> {
    let grid = *g.grid();
    if !grid.is_periodic() {
        return Err(Error::Verification(
            "margin calibration needs a periodic chart".into(),
        ));
    }
    let n = grid.dim();
    let k: Vec<f64> = (0..n)
        .map(|a| 2.0 * std::f64::consts::PI / grid.period(a))
        .collect();
    let f = ScalarField::from_fn(grid, |x| {
        1.0 + 0.3 * (0..n).map(|a| (k[a] * x[a]).sin()).product::<f64>()
    });
    let one = ScalarField::constant(grid, 1.0);
    let s = ibp_sides(&f, &one, 2.0, g)?;
    let defect = (s.lhs - s.t1).abs() / (s.lhs.abs() + s.t1.abs());
    let h = grid.max_spacing();
    Ok((10.0 * defect / (h * h)).max(MIN_C_DISC))
}

/// `Σ c_m cos(m·x + θ_m)` over integer modes `1 ≤ |m|_∞ ≤ 2`, `Σ|c_m| = amp`.
fn trig_polynomial(grid: ChartGrid, rng: &mut ChaCha8Rng, amp: f64, constant: f64) -> ScalarField {
    let modes: Vec<(f64, f64)> = (-2i32..=2)
        .flat_map(|i| (-2i32..=2).map(move |j| (i as f64, j as f64)))
        .filter(|&(i, j)| i != 0.0 || j != 0.0)
        .collect();
    let raw: Vec<(f64, f64, f64, f64)> = modes
        .iter()
        .map(|&(i, j)| {
            (
                i,
                j,
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let total: f64 = raw.iter().map(|m| m.2.abs()).sum();
    let scale = amp / total;
    let (lx, ly) = (grid.period(0), grid.period(1));
    let (kx, ky) = (std::f64::consts::TAU / lx, std::f64::consts::TAU / ly);
    ScalarField::from_fn(grid, move |x| {
        constant
            + raw
                .iter()
                .map(|&(i, j, c, th)| scale * c * (i * kx * x[0] + j * ky * x[1] + th).cos())
                .sum::<f64>()
    })
}

fn control(
    r: &mut VerificationReport,
    name: &str,
    sides: &IbpSides,
    c: IbpCoefficients,
    c_disc: f64,
) {
    // Holds exactly when the control case violates the inequality.
    r.compare(
        format!("control_{name}_fails"),
        sides.rhs(c) + sides.tolerance(c, c_disc),
        sides.lhs,
        0.0,
    );
    r.record(
        format!("control_{name}"),
        vec![sides.lhs, sides.rhs(c), sides.tolerance(c, c_disc)],
    );
}

/// The seeded randomized corpus on the flat 2-torus `[0, 2π)²` with `n²`
/// nodes, plus three negative controls that must violate the inequality.
pub fn ibp_corpus(seed: u64, cases: usize, n: usize) -> Result<VerificationReport> {
    let grid = ChartGrid::periodic_cube(2, n, std::f64::consts::TAU)?;
    let g = MetricField::flat(grid);
    let c_disc = calibrate_ibp_margin(&g)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = InputsDigest::new("ibp_corpus");
    d.grid(&grid).values(&[seed as f64, cases as f64]);
    let mut r = VerificationReport::new("ibp_corpus", d.finish());
    r.fit("c_disc", c_disc);
    let mut ratios = Vec::with_capacity(cases);
    let mut worst = f64::NEG_INFINITY;
    for case in 0..cases {
        let p = [2.0, 3.0, 4.0][case % 3];
        let amp_f = rng.gen_range(0.2..0.8);
        let log_f = trig_polynomial(grid, &mut rng, amp_f, 0.0);
        let f = log_f.map(f64::exp);
        let amp_psi = rng.gen_range(0.5..2.0);
        let offset = rng.gen_range(-1.0..1.0);
        let psi = trig_polynomial(grid, &mut rng, amp_psi, offset);
        let sides = ibp_sides(&f, &psi, p, &g)?;
        let c = IbpCoefficients::lemma(p);
        let holds = r.compare(
            format!("case_{case:03}"),
            sides.lhs,
            sides.rhs(c),
            sides.tolerance(c, c_disc),
        );
        let ratio = sides.lhs / sides.rhs(c);
        worst = worst.max(ratio);
        ratios.push(ratio);
        if !holds {
            r.note(format!(
                "case {case} (p = {p}) violates the inequality: lhs {} rhs {}",
                sides.lhs,
                sides.rhs(c)
            ));
        }
    }
    r.fit("max_lhs_over_rhs", worst);
    r.record("lhs_over_rhs", ratios);

    let one = ScalarField::constant(grid, 1.0);
    let psi = trig_polynomial(grid, &mut rng, 1.0, 0.5);
    let sides = ibp_sides(&one, &psi, 3.0, &g)?;
    let c = IbpCoefficients::lemma(3.0);
    control(
        &mut r,
        "a_halved_b",
        &sides,
        IbpCoefficients {
            a: c.a,
            b: 0.5 * c.b,
        },
        c_disc,
    );

    let f = trig_polynomial(grid, &mut rng, 0.6, 0.0).map(f64::exp);
    let sides = ibp_sides(&f, &one, 2.0, &g)?;
    let c = IbpCoefficients::lemma(2.0);
    control(
        &mut r,
        "b_shrunk_a",
        &sides,
        IbpCoefficients {
            a: 0.4 * c.a,
            b: c.b,
        },
        c_disc,
    );

    let sides = ibp_sides(&f, &one, 3.0, &g)?;
    let flipped = IbpSides {
        t1: -sides.t1,
        ..sides
    };
    control(
        &mut r,
        "c_flipped_laplacian",
        &flipped,
        IbpCoefficients::lemma(3.0),
        c_disc,
    );
    Ok(r.finish())
}
