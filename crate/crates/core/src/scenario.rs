//! Closed-form and randomized test metrics with attached analytic oracles.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::MetricField;
use crate::grid::{Boundary, ChartGrid};

pub const SCENARIO_NAMES: [&str; 7] = [
    "flat",
    "periodic",
    "polar_flat",
    "conformal_torus",
    "sphere_stereo",
    "s2xs2",
    "perturbed_flat",
];

/// Generator parameters; unused fields are ignored by scenarios that do not
/// need them, unknown fields are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioParams {
    pub amplitude: Option<f64>,
    pub wavenumber: Option<u32>,
    pub kx: Option<f64>,
    pub ky: Option<f64>,
    pub radius: Option<f64>,
    pub radius2: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// Follows from the definitions alone.
    Trivial,
    /// Closed-form or independent-solver result.
    Derived,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClosedForm {
    /// `diag(1, r²)` in (r, θ) coordinates.
    Polar,
    /// `e^{2u}δ`, `u = A sin(kx x) sin(ky y)`; evolves by `u_t = e^{−2u}Δ₀u`.
    ConformalFlow { amplitude: f64, kx: f64, ky: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Oracle {
    pub provenance: Provenance,
    pub description: String,
    pub riemann_zero: bool,
    /// `Ric = λ g`.
    pub einstein_constant: Option<f64>,
    pub scalar: Option<f64>,
    pub weyl_zero: bool,
    pub bach_zero: bool,
    pub weyl_norm_sq: Option<f64>,
    pub closed_form: Option<ClosedForm>,
}

impl Oracle {
    fn new(provenance: Provenance, description: &str) -> Self {
        Oracle {
            provenance,
            description: description.into(),
            riemann_zero: false,
            einstein_constant: None,
            scalar: None,
            weyl_zero: false,
            bach_zero: false,
            weyl_norm_sq: None,
            closed_form: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub params: ScenarioParams,
    pub metric: MetricField,
    pub oracle: Option<Oracle>,
}

/// The canonical chart for a scenario with `n` nodes per axis.
pub fn default_grid(name: &str, dim: usize, n: usize) -> Result<ChartGrid> {
    match name {
        "flat" | "periodic" | "perturbed_flat" => ChartGrid::periodic_cube(dim, n, 1.0),
        "conformal_torus" => ChartGrid::periodic_cube(dim, n, 2.0 * PI),
        "polar_flat" => {
            if dim != 2 {
                return Err(Error::InvalidParameter(
                    "polar_flat is two-dimensional".into(),
                ));
            }
            ChartGrid::new(
                &[n, n],
                &[1.0 / (n - 1) as f64, 1.0 / (n - 1) as f64],
                &[1.0, 0.0],
                Boundary::Frozen,
            )
        }
        "sphere_stereo" => ChartGrid::frozen_cube(dim, n, -1.0, 1.0),
        "s2xs2" => {
            if dim != 4 {
                return Err(Error::InvalidParameter("s2xs2 is four-dimensional".into()));
            }
            ChartGrid::frozen_cube(4, n, -1.0, 1.0)
        }
        other => Err(Error::UnknownScenario(other.into())),
    }
}

fn positive(v: Option<f64>, default: f64, what: &str) -> Result<f64> {
    let v = v.unwrap_or(default);
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "{what} must be positive, got {v}"
        )));
    }
    Ok(v)
}

/// Stereographic conformal factor of a sphere of radius `rho`.
fn stereo_factor(x: &[f64], rho: f64) -> f64 {
    let s: f64 = x.iter().map(|v| v * v).sum();
    4.0 * rho * rho / ((1.0 + s) * (1.0 + s))
}

pub fn build_scenario(name: &str, params: &ScenarioParams, grid: &ChartGrid) -> Result<Scenario> {
    let grid = *grid;
    let n = grid.dim();
    let (metric, oracle) = match name {
        "flat" | "periodic" => {
            if name == "periodic" && !grid.is_periodic() {
                return Err(Error::InvalidParameter(
                    "the periodic scenario needs a periodic chart".into(),
                ));
            }
            let mut o = Oracle::new(
                Provenance::Trivial,
                "flat metric: every curvature tensor vanishes",
            );
            o.riemann_zero = true;
            o.einstein_constant = Some(0.0);
            o.scalar = Some(0.0);
            o.weyl_zero = true;
            o.bach_zero = true;
            o.weyl_norm_sq = Some(0.0);
            (MetricField::flat(grid), o)
        }
        "polar_flat" => {
            if n != 2 || grid.is_periodic() || grid.origin()[0] <= 0.0 {
                return Err(Error::InvalidParameter(
                    "polar_flat needs a frozen 2-d chart with r > 0".into(),
                ));
            }
            let m = MetricField::from_fn(grid, |x, m| {
                m[0][0] = 1.0;
                m[1][1] = x[0] * x[0];
            })?;
            let mut o = Oracle::new(
                Provenance::Derived,
                "flat plane in polar coordinates: Γ^r_θθ = −r, Γ^θ_rθ = 1/r",
            );
            o.riemann_zero = true;
            o.scalar = Some(0.0);
            o.closed_form = Some(ClosedForm::Polar);
            (m, o)
        }
        "conformal_torus" => {
            if !grid.is_periodic() {
                return Err(Error::InvalidParameter(
                    "conformal_torus needs a periodic chart".into(),
                ));
            }
            let a = params.amplitude.unwrap_or(0.2);
            if !(a.abs() <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "amplitude {a} outside [-1, 1]"
                )));
            }
            let kx = params.kx.unwrap_or(1.0);
            let ky = params.ky.unwrap_or(1.0);
            for (k, axis) in [(kx, 0), (ky, 1)] {
                let cycles = k * grid.period(axis) / (2.0 * PI);
                if (cycles - cycles.round()).abs() > 1e-9 || k <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "wavenumber {k} is not periodic on axis {axis}"
                    )));
                }
            }
            let m = MetricField::conformal(grid, |x| a * (kx * x[0]).sin() * (ky * x[1]).sin());
            let mut o = Oracle::new(
                Provenance::Derived,
                "conformal flow u_t = e^{-2u} Δ₀u (pseudo-spectral solver)",
            );
            o.closed_form = Some(ClosedForm::ConformalFlow {
                amplitude: a,
                kx,
                ky,
            });
            (m, o)
        }
        "sphere_stereo" => {
            let rho = positive(params.radius, 1.0, "radius")?;
            let m = MetricField::conformal(grid, |x| 0.5 * stereo_factor(x, rho).ln());
            let nf = n as f64;
            let mut o = Oracle::new(
                Provenance::Derived,
                "round sphere: Ric = (n-1)/ρ² g, R = n(n-1)/ρ², W = 0, B = 0",
            );
            o.einstein_constant = Some((nf - 1.0) / (rho * rho));
            o.scalar = Some(nf * (nf - 1.0) / (rho * rho));
            o.weyl_zero = n >= 3;
            o.bach_zero = n == 4;
            o.weyl_norm_sq = Some(0.0);
            (m, o)
        }
        "s2xs2" => {
            if n != 4 {
                return Err(Error::InvalidParameter("s2xs2 needs a 4-d chart".into()));
            }
            let r1 = positive(params.radius, 1.0, "radius")?;
            let r2 = positive(params.radius2, r1, "radius2")?;
            let m = MetricField::from_fn(grid, |x, m| {
                let f1 = stereo_factor(&x[..2], r1);
                let f2 = stereo_factor(&x[2..4], r2);
                m[0][0] = f1;
                m[1][1] = f1;
                m[2][2] = f2;
                m[3][3] = f2;
            })?;
            let (k1, k2) = (1.0 / (r1 * r1), 1.0 / (r2 * r2));
            let einstein = (r1 - r2).abs() <= 1e-14 * r1;
            let mut o = Oracle::new(Provenance::Derived, "S²(ρ₁)×S²(ρ₂): R = 2K₁+2K₂, |W|² = 4(K₁+K₂)²/3; Einstein and Bach-flat iff ρ₁ = ρ₂");
            o.scalar = Some(2.0 * (k1 + k2));
            o.weyl_norm_sq = Some(4.0 * (k1 + k2) * (k1 + k2) / 3.0);
            if einstein {
                o.einstein_constant = Some(k1);
                o.bach_zero = true;
            }
            (m, o)
        }
        "perturbed_flat" => {
            if !grid.is_periodic() {
                return Err(Error::InvalidParameter(
                    "perturbed_flat needs a periodic chart".into(),
                ));
            }
            let a = params.amplitude.unwrap_or(0.05);
            let k = params.wavenumber.unwrap_or(2);
            let seed = params.seed.unwrap_or(0);
            if !(a >= 0.0 && a < 1.0 / (2.0 * n as f64)) {
                return Err(Error::InvalidParameter(format!(
                    "amplitude {a} outside [0, 1/(2n))"
                )));
            }
            if k == 0 || k > 8 {
                return Err(Error::InvalidParameter(format!(
                    "wavenumber {k} outside 1..=8"
                )));
            }
            (
                perturbed_flat(&grid, a, k, seed)?,
                Oracle::new(
                    Provenance::Trivial,
                    "deterministic for fixed (params, grid, seed)",
                ),
            )
        }
        other => return Err(Error::UnknownScenario(other.into())),
    };
    Ok(Scenario {
        name: name.into(),
        params: params.clone(),
        metric,
        oracle: Some(oracle),
    })
}

/// Convenience: canonical chart plus scenario.
pub fn scenario_on_default_grid(
    name: &str,
    params: &ScenarioParams,
    dim: usize,
    n: usize,
) -> Result<Scenario> {
    let grid = default_grid(name, dim, n)?;
    build_scenario(name, params, &grid)
}

struct Mode {
    m: [i32; 4],
    coef: f64,
    phase: f64,
}

/// `δ + a·h` with each `h_ij` a random trig polynomial over wave vectors with
/// `|m|₁ ≤ k`, normalized so `|h_ij| ≤ 1`; positive definite for `a < 1/n`.
fn perturbed_flat(grid: &ChartGrid, a: f64, k: u32, seed: u64) -> Result<MetricField> {
    let n = grid.dim();
    let k = k as i32;
    let mut waves = Vec::new();
    let mut m = [0i32; 4];
    fn rec(a: usize, n: usize, k: i32, m: &mut [i32; 4], out: &mut Vec<[i32; 4]>) {
        if a == n {
            if m.iter().map(|v| v.abs()).sum::<i32>() <= k {
                out.push(*m);
            }
            return;
        }
        for v in -k..=k {
            m[a] = v;
            rec(a + 1, n, k, m, out);
        }
        m[a] = 0;
    }
    rec(0, n, k, &mut m, &mut waves);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ncomp = n * (n + 1) / 2;
    let mut comps: Vec<Vec<Mode>> = Vec::with_capacity(ncomp);
    for _ in 0..ncomp {
        let mut modes: Vec<Mode> = waves
            .iter()
            .map(|w| Mode {
                m: *w,
                coef: rng.gen_range(-1.0..1.0),
                phase: rng.gen_range(0.0..2.0 * PI),
            })
            .collect();
        let total: f64 = modes.iter().map(|md| md.coef.abs()).sum();
        for md in &mut modes {
            md.coef /= total;
        }
        comps.push(modes);
    }
    let periods: Vec<f64> = (0..n).map(|ax| grid.period(ax)).collect();
    MetricField::from_fn(*grid, |x, mat| {
        let mut p = 0;
        for i in 0..n {
            for j in 0..=i {
                let mut h = 0.0;
                for md in &comps[p] {
                    let mut arg = md.phase;
                    for ax in 0..n {
                        arg += 2.0 * PI * md.m[ax] as f64 * x[ax] / periods[ax];
                    }
                    h += md.coef * arg.cos();
                }
                let v = if i == j { 1.0 + a * h } else { a * h };
                mat[i][j] = v;
                mat[j][i] = v;
                p += 1;
            }
        }
    })
}

/// Pseudo-spectral solver for the conformal Ricci flow of a 2-d torus metric
/// `e^{2u}δ`: `u_t = κ e^{−2u} Δ₀u`, classical RK4 in time. `u0` is sampled
/// on an `nx × ny` periodic grid of periods `lx × ly` (row-major, y fastest).
pub fn scalar_conformal_flow(
    u0: &[f64],
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    kappa: f64,
    t: f64,
) -> Vec<f64> {
    let mut planner = FftPlanner::<f64>::new();
    let fx = planner.plan_fft_forward(nx);
    let bx = planner.plan_fft_inverse(nx);
    let fy = planner.plan_fft_forward(ny);
    let by = planner.plan_fft_inverse(ny);
    let wave = |i: usize, n: usize, l: f64| {
        let k = if i <= n / 2 {
            i as f64
        } else {
            i as f64 - n as f64
        };
        2.0 * PI * k / l
    };
    let k2: Vec<f64> = (0..nx * ny)
        .map(|p| {
            let (i, j) = (p / ny, p % ny);
            let a = wave(i, nx, lx);
            let b = wave(j, ny, ly);
            a * a + b * b
        })
        .collect();
    let lap = |u: &[f64]| -> Vec<f64> {
        let mut c: Vec<Complex<f64>> = u.iter().map(|&v| Complex::new(v, 0.0)).collect();
        for row in c.chunks_mut(ny) {
            fy.process(row);
        }
        let mut col = vec![Complex::new(0.0, 0.0); nx];
        for j in 0..ny {
            for i in 0..nx {
                col[i] = c[i * ny + j];
            }
            fx.process(&mut col);
            for i in 0..nx {
                col[i] *= -k2[i * ny + j];
            }
            bx.process(&mut col);
            for i in 0..nx {
                c[i * ny + j] = col[i];
            }
        }
        for row in c.chunks_mut(ny) {
            by.process(row);
        }
        let s = 1.0 / (nx * ny) as f64;
        c.iter().map(|v| v.re * s).collect()
    };
    let rhs = |u: &[f64]| -> Vec<f64> {
        let l = lap(u);
        u.iter()
            .zip(&l)
            .map(|(&v, &d)| kappa * (-2.0 * v).exp() * d)
            .collect()
    };
    let kmax = k2.iter().cloned().fold(0.0, f64::max);
    let mut u = u0.to_vec();
    if t <= 0.0 {
        return u;
    }
    let diff = u0
        .iter()
        .map(|v| kappa * (-2.0 * v).exp())
        .fold(0.0, f64::max);
    let dt_max = 0.5 * 2.78 / (kmax * diff.max(1e-300));
    let steps = (t / dt_max).ceil().max(1.0) as usize;
    let dt = t / steps as f64;
    let axpy = |u: &[f64], k: &[f64], s: f64| -> Vec<f64> {
        u.iter().zip(k).map(|(a, b)| a + s * b).collect()
    };
    for _ in 0..steps {
        let k1 = rhs(&u);
        let k2v = rhs(&axpy(&u, &k1, 0.5 * dt));
        let k3 = rhs(&axpy(&u, &k2v, 0.5 * dt));
        let k4 = rhs(&axpy(&u, &k3, dt));
        for p in 0..u.len() {
            u[p] += dt / 6.0 * (k1[p] + 2.0 * k2v[p] + 2.0 * k3[p] + k4[p]);
        }
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perturbed_flat_is_deterministic() {
        let p = ScenarioParams {
            amplitude: Some(0.05),
            wavenumber: Some(2),
            seed: Some(7),
            ..Default::default()
        };
        let a = scenario_on_default_grid("perturbed_flat", &p, 4, 8).unwrap();
        let b = scenario_on_default_grid("perturbed_flat", &p, 4, 8).unwrap();
        let bytes = |m: &MetricField| {
            m.data()
                .iter()
                .flat_map(|v| v.to_le_bytes())
                .collect::<Vec<u8>>()
        };
        assert_eq!(bytes(&a.metric), bytes(&b.metric));
        let c = scenario_on_default_grid(
            "perturbed_flat",
            &ScenarioParams { seed: Some(8), ..p },
            4,
            8,
        )
        .unwrap();
        assert_ne!(bytes(&a.metric), bytes(&c.metric));
    }

    #[test]
    fn rejects_unknown_and_out_of_range() {
        assert!(matches!(
            default_grid("torus", 2, 8),
            Err(Error::UnknownScenario(_))
        ));
        let p = ScenarioParams {
            amplitude: Some(0.2),
            ..Default::default()
        };
        assert!(scenario_on_default_grid("perturbed_flat", &p, 4, 8).is_err());
        let bad: std::result::Result<ScenarioParams, _> =
            serde_json::from_str(r#"{"amplitud": 0.1}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn sphere_oracle_constants() {
        let s =
            scenario_on_default_grid("sphere_stereo", &ScenarioParams::default(), 4, 8).unwrap();
        let o = s.oracle.unwrap();
        assert_eq!(o.einstein_constant, Some(3.0));
        assert_eq!(o.scalar, Some(12.0));
    }

    #[test]
    fn spectral_solver_decays_single_mode() {
        // Linearized: small u decays like e^{-2t} for the (1,1) mode.
        let n = 32;
        let h = 2.0 * PI / n as f64;
        let u0: Vec<f64> = (0..n * n)
            .map(|p| 1e-6 * ((p / n) as f64 * h).sin() * ((p % n) as f64 * h).sin())
            .collect();
        let u = scalar_conformal_flow(&u0, n, n, 2.0 * PI, 2.0 * PI, 1.0, 0.1);
        let ratio = u[n + 1] / u0[n + 1];
        assert!((ratio - (-0.2f64).exp()).abs() < 1e-5, "{ratio}");
    }
}
