use super::{spread, InputsDigest, VerificationReport};
use crate::calculus::{gradient_norm_sq, laplacian, volume_weights};
use crate::curvature::riemann_norm;
use crate::cutoff::{constant_cutoff, CutoffFunction};
use crate::error::{Error, Result};
use crate::field::{MetricField, ScalarField};
use crate::flow::FlowTrajectory;
use crate::grid::ChartGrid;
use crate::sobolev::{h_functional, moser_schedule, TimeSample};

/// Space-time data of the sub-solution inequality
/// `∂f/∂t ≤ φ²(Δf + uf) + 2aφ|∇φ||∇f| + b(|∇φ|² − φΔφ)f`
/// with `∂_t dV ≤ cφ²u dV` and `(∫φ²u³)^{1/3} ≤ μt^{−1/3}`.
#[derive(Clone, Debug)]
pub struct HeatFlowWitness {
    pub times: Vec<f64>,
    pub f: Vec<ScalarField>,
    pub u: Vec<ScalarField>,
    pub phi: CutoffFunction,
    pub metrics: Vec<MetricField>,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub mu: f64,
    pub sobolev_a: f64,
}

impl HeatFlowWitness {
    fn validate(&self) -> Result<()> {
        let n = self.times.len();
        if n < 2 || self.f.len() != n || self.u.len() != n || self.metrics.len() != n {
            return Err(Error::EmptyWindow(
                "a witness needs at least two consistent samples".into(),
            ));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) || self.times[0] != 0.0 {
            return Err(Error::EmptyWindow(
                "witness times must start at 0 and increase".into(),
            ));
        }
        if self.f.iter().chain(&self.u).any(|s| s.min() < 0.0) {
            return Err(Error::Verification(
                "witness f and u must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn grid(&self) -> &ChartGrid {
        self.metrics[0].grid()
    }

    fn weights(&self) -> Result<Vec<Vec<f64>>> {
        self.metrics.iter().map(volume_weights).collect()
    }

    /// Right-hand side of the sub-solution inequality at sample `i`.
    fn rhs(&self, i: usize) -> Result<Vec<f64>> {
        let g = &self.metrics[i];
        let f = &self.f[i];
        let phi = &self.phi.phi;
        let lap_f = laplacian(f, g)?;
        let lap_phi = laplacian(phi, g)?;
        let grad_f = gradient_norm_sq(f, g)?;
        let grad_phi = gradient_norm_sq(phi, g)?;
        Ok((0..f.values().len())
            .map(|k| {
                let (p, fv, u) = (phi.values()[k], f.values()[k], self.u[i].values()[k]);
                let gp = grad_phi.values()[k].sqrt();
                p * p * (lap_f.values()[k] + u * fv)
                    + 2.0 * self.a * p * gp * grad_f.values()[k].sqrt()
                    + self.b * (gp * gp - p * lap_phi.values()[k]) * fv
            })
            .collect())
    }

    /// Smallest residual (RHS − ∂f/∂t) over sample intervals, with the
    /// right-hand side averaged over each interval, and the scale `max|∂f/∂t|`.
    pub fn residual(&self) -> Result<(f64, f64)> {
        let mut rhs_prev = self.rhs(0)?;
        let (mut worst, mut scale) = (f64::INFINITY, 0.0f64);
        for i in 1..self.times.len() {
            let rhs = self.rhs(i)?;
            let dt = self.times[i] - self.times[i - 1];
            for k in 0..rhs.len() {
                let ft = (self.f[i].values()[k] - self.f[i - 1].values()[k]) / dt;
                scale = scale.max(ft.abs());
                worst = worst.min(0.5 * (rhs[k] + rhs_prev[k]) - ft);
            }
            rhs_prev = rhs;
        }
        Ok((worst, scale))
    }
}

/// `μ = max_t t^{1/3}(∫φ²u³)^{1/3}`.
fn witness_mu(
    times: &[f64],
    u: &[ScalarField],
    phi: &ScalarField,
    metrics: &[MetricField],
) -> Result<f64> {
    let mut mu = 0.0f64;
    for ((&t, u), g) in times.iter().zip(u).zip(metrics) {
        let w = volume_weights(g)?;
        let s = crate::calculus::det_sum_nodes(w.len(), |k| {
            phi.values()[k].powi(2) * u.values()[k].powi(3) * w[k]
        });
        mu = mu.max((t * s).cbrt());
    }
    Ok(mu)
}

/// The pure heat equation `f_t = Δf` on the flat 2-torus `[0, 2π)²` with
/// `n²` nodes, `φ ≡ 1`, `u ≡ 0`, recorded at `samples + 1` uniform times up
/// to `t_end`. A closed manifold has no Sobolev inequality for constants, so
/// the witness uses `A = 1`.
pub fn heat_witness(n: usize, t_end: f64, samples: usize) -> Result<HeatFlowWitness> {
    if samples < 2 || !(t_end > 0.0) {
        return Err(Error::InvalidParameter(
            "heat witness needs t_end > 0 and at least two samples".into(),
        ));
    }
    let grid = ChartGrid::periodic_cube(2, n, std::f64::consts::TAU)?;
    let g = MetricField::flat(grid);
    let mut f = ScalarField::from_fn(grid, |x| {
        1.0 + 0.25 * x[0].cos() + 0.15 * (2.0 * x[1]).sin() + 0.1 * (x[0] + x[1]).cos()
    });
    let h = grid.max_spacing();
    let out_dt = t_end / samples as f64;
    let substeps = (out_dt / (0.2 * h * h)).ceil() as usize;
    let dt = out_dt / substeps as f64;
    let mut times = vec![0.0];
    let mut fs = vec![f.clone()];
    for s in 1..=samples {
        for _ in 0..substeps {
            let rhs = |v: &[f64]| -> Result<Vec<f64>> {
                Ok(laplacian(&ScalarField::new(grid, v.to_vec())?, &g)?.into_values())
            };
            f = ScalarField::new(grid, crate::flow::rk4(f.values(), dt, rhs)?)?;
        }
        times.push(s as f64 * out_dt);
        fs.push(f.clone());
    }
    let zero = ScalarField::zeros(grid);
    let metrics = vec![g; times.len()];
    let u = vec![zero; times.len()];
    Ok(HeatFlowWitness {
        phi: constant_cutoff(&grid, 1.0)?,
        f: fs,
        u,
        metrics,
        times,
        a: 0.0,
        b: 0.0,
        c: 0.0,
        mu: 0.0,
        sobolev_a: 1.0,
    })
}

/// Witness built from flow snapshots: `f = |Rm|`, `u = c₀|Rm|`. Needs
/// snapshots including `t = 0`.
pub fn flow_witness(
    traj: &FlowTrajectory,
    phi: &CutoffFunction,
    c0: f64,
    sobolev_a: f64,
) -> Result<HeatFlowWitness> {
    if traj.snapshots.len() < 2 {
        return Err(Error::EmptyWindow(
            "flow witness needs at least two metric snapshots".into(),
        ));
    }
    let mut times = Vec::new();
    let mut f = Vec::new();
    let mut metrics = Vec::new();
    for (t, g) in &traj.snapshots {
        times.push(*t);
        f.push(riemann_norm(g)?);
        metrics.push(g.clone());
    }
    let u: Vec<ScalarField> = f.iter().map(|s| s.map(|v| c0 * v)).collect();
    let mu = witness_mu(&times, &u, &phi.phi, &metrics)?;
    Ok(HeatFlowWitness {
        times,
        f,
        u,
        phi: phi.clone(),
        metrics,
        a: 1.0,
        b: 1.0,
        c: 2.0 / c0.max(f64::MIN_POSITIVE),
        mu,
        sobolev_a,
    })
}

fn samples_upto<'a>(
    w: &'a HeatFlowWitness,
    weights: &'a [Vec<f64>],
    t: f64,
) -> Vec<TimeSample<'a>> {
    w.times
        .iter()
        .zip(&w.f)
        .zip(weights)
        .take_while(|((&s, _), _)| s <= t)
        .map(|((&t, f), wt)| TimeSample { t, f, weights: wt })
        .collect()
}

/// `C* = max_{x,t} φ²f / (A^{2/p₀}[‖∇φ‖²∞ + t⁻¹(1+A²μ³)]^{3/p₀}(∫₀^t∫φ^{2p₀−4}f^{p₀})^{1/p₀})`
/// over samples with `t > 0`.
pub fn sup_bound_constant(w: &HeatFlowWitness, p0: f64) -> Result<f64> {
    w.validate()?;
    let weights = w.weights()?;
    let grad2 = w.phi.sup_grad * w.phi.sup_grad;
    let a = w.sobolev_a;
    let mut best = 0.0f64;
    for i in 1..w.times.len() {
        let t = w.times[i];
        let lhs = w.f[i]
            .values()
            .iter()
            .zip(w.phi.phi.values())
            .fold(0.0f64, |m, (f, p)| m.max(p * p * f));
        if lhs == 0.0 {
            continue;
        }
        let samples = samples_upto(w, &weights, t);
        let integral = h_functional(&samples, &w.phi.phi, p0, p0 - 2.0, 0.0, t)?;
        let bracket = grad2 + (1.0 + a * a * w.mu.powi(3)) / t;
        let rhs = a.powf(2.0 / p0) * bracket.powf(3.0 / p0) * integral.powf(1.0 / p0);
        if !(rhs > 0.0) {
            return Err(Error::Verification(format!(
                "sup-bound right-hand side vanishes at t = {t} while φ²f = {lhs}"
            )));
        }
        best = best.max(lhs / rhs);
    }
    Ok(best)
}

/// Per-step constants `K_k = H_{k+1} / (A[‖∇φ‖² + (1+μ³A²)η/(η−1)·t⁻¹]^ν η^{kν} H_k^ν)`
/// of the `H(p_k, p′_k, τ_k)` sequence along the Moser schedule ending at
/// the last sample time.
pub fn recursion_constants(w: &HeatFlowWitness, p0: f64) -> Result<Vec<f64>> {
    w.validate()?;
    let weights = w.weights()?;
    let t = *w.times.last().expect("validated");
    let sched = moser_schedule(p0, t)?;
    let samples = samples_upto(w, &weights, t);
    let h: Vec<f64> = (0..sched.p.len())
        .map(|k| {
            h_functional(
                &samples,
                &w.phi.phi,
                sched.p[k],
                sched.p_prime[k],
                sched.tau[k],
                t,
            )
        })
        .collect::<Result<_>>()?;
    let a = w.sobolev_a;
    let grad2 = w.phi.sup_grad * w.phi.sup_grad;
    let bracket = grad2 + (1.0 + w.mu.powi(3) * a * a) * sched.eta / (sched.eta - 1.0) / t;
    Ok((0..h.len() - 1)
        .map(|k| {
            h[k + 1]
                / (a * bracket.powf(sched.nu)
                    * sched.eta.powf(k as f64 * sched.nu)
                    * h[k].powf(sched.nu))
        })
        .collect())
}

/// Fit `C*` and the recursion constants on each witness of a family that
/// differs only in resolution; pass iff each varies by at most 2× across the
/// family. A single witness is reported without a verdict.
pub fn check_sup_bound(family: &[HeatFlowWitness], p0: f64) -> Result<VerificationReport> {
    if family.is_empty() {
        return Err(Error::EmptyWindow("no witnesses".into()));
    }
    let mut d = InputsDigest::new("sup_bound");
    d.values(&[p0]);
    for w in family {
        d.grid(w.grid())
            .values(&w.times)
            .values(&[w.a, w.b, w.c, w.mu, w.sobolev_a]);
        for f in &w.f {
            d.values(f.values());
        }
    }
    let mut r = VerificationReport::new("sup_bound", d.finish());
    r.report_only = family.len() < 2;
    let mut cs = Vec::new();
    let mut ks: Vec<Vec<f64>> = Vec::new();
    let mut residuals = Vec::new();
    for (i, w) in family.iter().enumerate() {
        let (worst, scale) = w.residual()?;
        residuals.push(worst);
        r.hypothesis(
            format!("witness_{i}_subsolution"),
            0.0,
            worst,
            0.05 * scale + 1e-12,
        );
        cs.push(sup_bound_constant(w, p0)?);
        ks.push(recursion_constants(w, p0)?);
        r.record(format!("witness_{i}_recursion"), ks[i].clone());
    }
    r.record("c_star", cs.clone());
    r.record("subsolution_residual", residuals);
    r.record("h", family.iter().map(|w| w.grid().max_spacing()).collect());
    r.fit("c_star_max", cs.iter().copied().fold(0.0, f64::max));
    r.fit("mu", family[0].mu);
    r.fit("sobolev_a", family[0].sobolev_a);
    r.compare("c_star_spread", spread(&cs), 2.0, 0.0);
    let steps = ks.iter().map(Vec::len).min().unwrap_or(0);
    for k in 0..steps {
        let vals: Vec<f64> = ks.iter().map(|v| v[k]).collect();
        r.compare(format!("recursion_{k}_spread"), spread(&vals), 2.0, 0.0);
    }
    Ok(r.finish())
}
