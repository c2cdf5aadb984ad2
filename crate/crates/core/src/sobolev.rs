//! Local Sobolev-constant estimation, the Moser exponent schedule and the
//! space-time functional `H(p, p′, τ)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::{det_sum_nodes, volume_weights};
use crate::cutoff::CutoffFunction;
use crate::error::{Error, Result};
use crate::field::{MetricField, ScalarField};
use crate::grid::{sym_len, ChartGrid, MAX_DIM};
use crate::linalg;

/// Minimum number of domain nodes (`8³`).
pub const MIN_DOMAIN_NODES: usize = 512;

pub const DEFAULT_SAFETY: f64 = 2.0;

/// Bump widths in grid spacings.
const WIDTH_LADDER: [f64; 8] = [4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0, 48.0];

const REFINEMENTS: usize = 4;

#[derive(Clone, Copy, Debug)]
pub enum SobolevDomain<'a> {
    /// Nodes where the cutoff is positive.
    Cutoff(&'a CutoffFunction),
    /// Every node outside the frozen collar (frozen charts only).
    WholeGrid,
}

#[derive(Clone, Debug)]
pub struct SobolevEstimate {
    /// Largest ratio `‖f‖₄² / ‖∇f‖₂²` found (a lower bound for the true constant).
    pub constant: f64,
    pub safety_factor: f64,
    pub witness: ScalarField,
    /// Candidate index of the witness (bumps first, then refinements).
    pub witness_index: usize,
    pub sample_count: usize,
}

impl SobolevEstimate {
    /// The constant the estimates consume: `safety_factor · constant`.
    pub fn usable(&self) -> f64 {
        self.safety_factor * self.constant
    }
}

struct Geometry {
    grid: ChartGrid,
    weights: Vec<f64>,
    ginv: Vec<f64>,
}

impl Geometry {
    fn new(g: &MetricField) -> Result<Self> {
        Ok(Geometry {
            grid: *g.grid(),
            weights: volume_weights(g)?,
            ginv: g.inverse()?,
        })
    }

    fn grad_sq(&self, f: &[f64], node: usize) -> f64 {
        let n = self.grid.dim();
        let nc = sym_len(n);
        let mut d = [0.0; MAX_DIM];
        self.grid.local_stencil(node).first(f, 1, &mut d[..n]);
        let gi = linalg::unpack(&self.ginv[node * nc..(node + 1) * nc], n);
        let mut s = 0.0;
        for a in 0..n {
            for b in 0..n {
                s += gi[a][b] * d[a] * d[b];
            }
        }
        s
    }

    /// `(‖f‖₄², ‖∇f‖₂²)` over the listed nodes (f must vanish elsewhere, and
    /// `reach` must contain every node whose stencil touches the support).
    fn norms(&self, f: &[f64], support: &[usize], reach: &[usize]) -> (f64, f64) {
        let l4: f64 = support
            .iter()
            .map(|&k| f[k].powi(4) * self.weights[k])
            .sum();
        let gr: f64 = reach
            .iter()
            .map(|&k| self.grad_sq(f, k) * self.weights[k])
            .sum();
        (l4.sqrt(), gr)
    }
}

/// Node offsets within a box of half-width `half` (per axis) around `center`;
/// `None` if the box leaves a frozen chart.
fn box_nodes(grid: &ChartGrid, center: usize, half: &[usize]) -> Option<Vec<usize>> {
    let n = grid.dim();
    let mut out = Vec::new();
    let mut off = [0isize; MAX_DIM];
    for a in 0..n {
        off[a] = -(half[a] as isize);
    }
    loop {
        let mut node = center;
        for a in 0..n {
            node = grid.shift(node, a, off[a])?;
        }
        out.push(node);
        let mut a = n;
        loop {
            if a == 0 {
                return Some(out);
            }
            a -= 1;
            off[a] += 1;
            if off[a] <= half[a] as isize {
                break;
            }
            off[a] = -(half[a] as isize);
        }
    }
}

struct Candidate {
    center: usize,
    width: f64,
}

fn enumerate_candidates(grid: &ChartGrid, mask: &[bool], budget: usize) -> Vec<Candidate> {
    let n = grid.dim();
    let h = grid.max_spacing();
    let mut mult = 1usize;
    loop {
        let mut out = Vec::new();
        for &w in WIDTH_LADDER.iter() {
            let width = w * h;
            let stride = ((w / 2.0).round() as usize).max(1) * mult;
            'centers: for node in 0..grid.len() {
                let idx = grid.multi_index(node);
                if (0..n).any(|a| !idx[a].is_multiple_of(stride)) || !mask[node] {
                    continue;
                }
                let half: Vec<usize> = (0..n)
                    .map(|a| (width / grid.spacing()[a]).ceil() as usize)
                    .collect();
                if grid.is_periodic() && (0..n).any(|a| 2 * half[a] + 1 > grid.extents()[a]) {
                    continue;
                }
                let Some(nodes) = box_nodes(grid, node, &half) else {
                    continue;
                };
                let c = grid.position(node);
                for &k in &nodes {
                    let d = grid.displacement(&c[..n], &grid.position(k)[..n]);
                    let s2: f64 = d[..n].iter().map(|v| v * v).sum();
                    if s2 < width * width && !mask[k] {
                        continue 'centers;
                    }
                }
                out.push(Candidate {
                    center: node,
                    width,
                });
            }
        }
        if out.len() + REFINEMENTS <= budget.max(REFINEMENTS + 1) || mult > 64 {
            out.truncate(budget.saturating_sub(REFINEMENTS).max(1));
            return out;
        }
        mult *= 2;
    }
}

fn bump(grid: &ChartGrid, c: &Candidate) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    let n = grid.dim();
    let half: Vec<usize> = (0..n)
        .map(|a| (c.width / grid.spacing()[a]).ceil() as usize + 2)
        .collect();
    let nodes = box_nodes(grid, c.center, &half).unwrap_or_default();
    let x0 = grid.position(c.center);
    let mut support = Vec::new();
    let mut vals = Vec::new();
    for &k in &nodes {
        let d = grid.displacement(&x0[..n], &grid.position(k)[..n]);
        let s2: f64 = d[..n].iter().map(|v| v * v).sum::<f64>() / (c.width * c.width);
        if s2 < 1.0 {
            support.push(k);
            vals.push((1.0 - s2).powi(3));
        }
    }
    (support, nodes, vals)
}

/// Conservative second-order operator `−∂_a(√g g^{aa} ∂_a f)` on the mask with
/// zero Dirichlet data outside, solved by conjugate gradients.
struct CompactOperator {
    nodes: Vec<usize>,
    /// Per compact node: (neighbor compact index, coefficient).
    links: Vec<Vec<(usize, f64)>>,
    diag: Vec<f64>,
}

impl CompactOperator {
    fn new(geo: &Geometry, mask: &[bool]) -> Self {
        let grid = geo.grid;
        let n = grid.dim();
        let nc = sym_len(n);
        let mut index = vec![usize::MAX; grid.len()];
        let nodes: Vec<usize> = (0..grid.len()).filter(|&k| mask[k]).collect();
        for (i, &k) in nodes.iter().enumerate() {
            index[k] = i;
        }
        let coef = |k: usize, a: usize| {
            let sd = geo.weights[k] / grid.cell_volume();
            sd * geo.ginv[k * nc + crate::grid::sym_index(a, a)]
        };
        let mut links = Vec::with_capacity(nodes.len());
        let mut diag = Vec::with_capacity(nodes.len());
        for &k in &nodes {
            let mut l = Vec::new();
            let mut d = 0.0;
            for a in 0..n {
                let h2 = grid.spacing()[a].powi(2);
                for delta in [-1isize, 1] {
                    let ca = match grid.shift(k, a, delta) {
                        Some(nb) => {
                            let c = 0.5 * (coef(k, a) + coef(nb, a)) / h2;
                            if mask[nb] {
                                l.push((index[nb], c));
                            }
                            c
                        }
                        None => coef(k, a) / h2,
                    };
                    d += ca;
                }
            }
            links.push(l);
            diag.push(d);
        }
        CompactOperator { nodes, links, diag }
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let mut s = self.diag[i] * x[i];
            for &(j, c) in &self.links[i] {
                s -= c * x[j];
            }
            *yi = s;
        });
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let m = b.len();
        let dot = |a: &[f64], b: &[f64]| det_sum_nodes(a.len(), |k| a[k] * b[k]);
        let mut x = vec![0.0; m];
        let mut r = b.to_vec();
        let mut z: Vec<f64> = r.iter().zip(&self.diag).map(|(r, d)| r / d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let b2 = dot(b, b).sqrt();
        let mut ap = vec![0.0; m];
        for _ in 0..2000 {
            self.apply(&p, &mut ap);
            let alpha = rz / dot(&p, &ap);
            for k in 0..m {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            if dot(&r, &r).sqrt() <= 1e-10 * b2 {
                break;
            }
            for k in 0..m {
                z[k] = r[k] / self.diag[k];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..m {
                p[k] = z[k] + beta * p[k];
            }
        }
        x
    }
}

fn domain_mask(domain: SobolevDomain<'_>, grid: &ChartGrid) -> Result<Vec<bool>> {
    let mask: Vec<bool> = match domain {
        SobolevDomain::Cutoff(c) => {
            if !c.grid().same_shape(grid) {
                return Err(Error::GridMismatch);
            }
            if c.support_radius.is_infinite() {
                return Err(Error::DegenerateDomain(
                    "constant cutoffs have no compact support".into(),
                ));
            }
            c.support_mask()
        }
        SobolevDomain::WholeGrid => {
            if grid.is_periodic() {
                return Err(Error::DegenerateDomain(
                    "a whole periodic chart has no boundary".into(),
                ));
            }
            (0..grid.len()).map(|k| !grid.in_collar(k)).collect()
        }
    };
    let count = mask.iter().filter(|&&m| m).count();
    if count < MIN_DOMAIN_NODES {
        return Err(Error::DegenerateDomain(format!(
            "{count} nodes, need at least {MIN_DOMAIN_NODES}"
        )));
    }
    Ok(mask)
}

/// Lower-bound estimate of the constant in `‖f‖₄² ≤ A ‖∇f‖₂²` over functions
/// supported in the domain. The exponent pair is fixed at (4, 2) in every
/// dimension (scale-invariant in dimension 4 only).
pub fn estimate_sobolev(
    domain: SobolevDomain<'_>,
    g: &MetricField,
    budget: usize,
    safety: f64,
) -> Result<SobolevEstimate> {
    let grid = *g.grid();
    if !(safety >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "safety factor {safety} below 1"
        )));
    }
    let mask = domain_mask(domain, &grid)?;
    let geo = Geometry::new(g)?;
    let cands = enumerate_candidates(&grid, &mask, budget);
    if cands.is_empty() {
        return Err(Error::DegenerateDomain("no bump fits in the domain".into()));
    }
    let ratios: Vec<f64> = cands
        .par_iter()
        .map(|c| {
            let (support, reach, vals) = bump(&grid, c);
            let mut f = vec![0.0; grid.len()];
            for (&k, &v) in support.iter().zip(&vals) {
                f[k] = v;
            }
            let (l4, gr) = geo.norms(&f, &support, &reach);
            if gr > 0.0 {
                l4 / gr
            } else {
                0.0
            }
        })
        .collect();
    let mut best = 0;
    // Ties (mirror-symmetric candidates) go to the earliest index regardless of rounding.
    for (i, &r) in ratios.iter().enumerate() {
        if r > ratios[best] * (1.0 + 1e-9) {
            best = i;
        }
    }
    let mut best_ratio = ratios[best];
    let mut witness = {
        let (support, _, vals) = bump(&grid, &cands[best]);
        let mut f = vec![0.0; grid.len()];
        for (&k, &v) in support.iter().zip(&vals) {
            f[k] = v;
        }
        f
    };
    let mut witness_index = best;
    let mut sample_count = cands.len();

    // Inverse-power refinement towards the first Dirichlet eigenfunction of the
    // domain; the critical nonlinear iteration concentrates below grid scale.
    let op = CompactOperator::new(&geo, &mask);
    let support: Vec<usize> = op.nodes.clone();
    let reach: Vec<usize> = (0..grid.len())
        .filter(|&k| {
            mask[k]
                || (0..grid.dim())
                    .any(|a| (-2..=2).any(|d| grid.shift(k, a, d).is_some_and(|nb| mask[nb])))
        })
        .collect();
    let mut f = witness.clone();
    for step in 0..REFINEMENTS {
        let rhs: Vec<f64> = op
            .nodes
            .iter()
            .map(|&k| f[k] * geo.weights[k] / grid.cell_volume())
            .collect();
        let sol = op.solve(&rhs);
        let peak = sol.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(peak > 0.0) || !peak.is_finite() {
            break;
        }
        let mut next = vec![0.0; grid.len()];
        for (i, &k) in op.nodes.iter().enumerate() {
            next[k] = sol[i] / peak;
        }
        let (l4, gr) = geo.norms(&next, &support, &reach);
        sample_count += 1;
        let ratio = if gr > 0.0 { l4 / gr } else { 0.0 };
        if ratio > best_ratio {
            best_ratio = ratio;
            witness = next.clone();
            witness_index = cands.len() + step;
        }
        f = next;
    }
    Ok(SobolevEstimate {
        constant: best_ratio,
        safety_factor: safety,
        witness: ScalarField::new(grid, witness)?,
        witness_index,
        sample_count,
    })
}

/// `(‖f‖₄², ‖∇f‖₂²)` of an arbitrary field (for checking a witness).
pub fn sobolev_sides(f: &ScalarField, g: &MetricField) -> Result<(f64, f64)> {
    let geo = Geometry::new(g)?;
    let all: Vec<usize> = (0..geo.grid.len()).collect();
    Ok(geo.norms(f.values(), &all, &all))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoserSchedule {
    pub p0: f64,
    pub nu: f64,
    pub eta: f64,
    pub t: f64,
    pub p: Vec<f64>,
    pub p_prime: Vec<f64>,
    pub tau: Vec<f64>,
}

/// `p_k = p₀ν^k`, `p′_k = (p₀−2)ν^k + Σ_{j<k} ν^j`, `τ_k = t(1 − η^{−k})`,
/// `ν = 3/2`, `η = ν⁶`, up to the first `k` with `η^{−k} < 10⁻¹²`.
pub fn moser_schedule(p0: f64, t: f64) -> Result<MoserSchedule> {
    if !(p0 > 2.0) || !p0.is_finite() {
        return Err(Error::InvalidParameter(format!("p0 = {p0} must exceed 2")));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!("t = {t} must be positive")));
    }
    let nu: f64 = 1.5;
    let eta = nu.powi(6);
    let (mut p, mut pp, mut tau) = (Vec::new(), Vec::new(), Vec::new());
    let mut k = 0i32;
    loop {
        let nk = nu.powi(k);
        let geo: f64 = (0..k).map(|j| nu.powi(j)).sum();
        p.push(p0 * nk);
        pp.push((p0 - 2.0) * nk + geo);
        let decay = eta.powi(-k);
        tau.push(t * (1.0 - decay));
        if decay < 1e-12 {
            break;
        }
        k += 1;
    }
    Ok(MoserSchedule {
        p0,
        nu,
        eta,
        t,
        p,
        p_prime: pp,
        tau,
    })
}

/// One time sample of a space-time series.
#[derive(Clone, Debug)]
pub struct TimeSample<'a> {
    pub t: f64,
    pub f: &'a ScalarField,
    /// Volume weights of `g(t)` (see [`volume_weights`]).
    pub weights: &'a [f64],
}

/// `H(p, p′, τ) = ∫_τ^T ∫ φ^{2p′} f^p dV_{g(t)} dt` with trapezoidal time
/// quadrature; the spatial integral is interpolated linearly at `τ` and `T`.
pub fn h_functional(
    samples: &[TimeSample<'_>],
    phi: &ScalarField,
    p: f64,
    p_prime: f64,
    tau: f64,
    t_end: f64,
) -> Result<f64> {
    if !(p >= p_prime && p_prime >= 0.0 && p >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need p ≥ p′ ≥ 0 and p ≥ 1 (p = {p}, p′ = {p_prime})"
        )));
    }
    if !(tau < t_end) {
        return Err(Error::EmptyWindow(format!(
            "τ = {tau} is not below T = {t_end}"
        )));
    }
    if samples.len() < 2 || samples.windows(2).any(|w| !(w[1].t > w[0].t)) {
        return Err(Error::EmptyWindow(
            "need at least two strictly increasing samples".into(),
        ));
    }
    let (t0, t1) = (samples[0].t, samples[samples.len() - 1].t);
    if tau < t0 - 1e-12 || t_end > t1 + 1e-12 {
        return Err(Error::EmptyWindow(format!(
            "samples cover [{t0}, {t1}], window is [{tau}, {t_end}]"
        )));
    }
    let phi_pow: Vec<f64> = phi
        .values()
        .iter()
        .map(|&v| v.max(0.0).powf(2.0 * p_prime))
        .collect();
    let space: Vec<f64> = samples
        .iter()
        .map(|s| {
            det_sum_nodes(phi_pow.len(), |k| {
                phi_pow[k] * s.f.values()[k].max(0.0).powf(p) * s.weights[k]
            })
        })
        .collect();
    let at = |t: f64| -> f64 {
        let i = samples
            .partition_point(|s| s.t <= t)
            .clamp(1, samples.len() - 1);
        let (a, b) = (&samples[i - 1], &samples[i]);
        let w = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        space[i - 1] * (1.0 - w) + space[i] * w
    };
    let mut pts: Vec<(f64, f64)> = vec![(tau, at(tau))];
    for (s, &v) in samples.iter().zip(&space) {
        if s.t > tau && s.t < t_end {
            pts.push((s.t, v));
        }
    }
    pts.push((t_end, at(t_end)));
    Ok(pts
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cutoff::{center_node, make_cutoff, Profile};

    #[test]
    fn schedule_values() {
        let s = moser_schedule(3.0, 1.0).unwrap();
        assert_eq!(s.p[0], 3.0);
        assert_eq!(s.p_prime[0], 1.0);
        assert_eq!(s.tau[0], 0.0);
        assert!((s.p[2] - 6.75).abs() < 1e-15);
        assert!((s.p_prime[2] - 4.75).abs() < 1e-15);
        assert!((s.tau[2] - (1.0 - 1.5f64.powi(-12))).abs() < 1e-15);
        assert!((s.tau[2] - 0.9922927).abs() < 1e-7);
        assert!(s.tau.windows(2).all(|w| w[1] > w[0] && w[1] < 1.0));
        assert!(1.5f64.powi(6).powi(-(s.p.len() as i32 - 1)) < 1e-12);
        assert!(moser_schedule(2.0, 1.0).is_err());
    }

    fn unit_samples(
        grid: ChartGrid,
        f: impl Fn(f64) -> f64,
        n: usize,
    ) -> (Vec<f64>, Vec<ScalarField>, Vec<f64>) {
        let w = volume_weights(&MetricField::flat(grid)).unwrap();
        let times: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let fields = times
            .iter()
            .map(|&t| ScalarField::constant(grid, f(t)))
            .collect();
        (times, fields, w)
    }

    #[test]
    fn h_functional_oracles() {
        let grid = ChartGrid::periodic_cube(2, 8, 1.0).unwrap();
        let phi = ScalarField::constant(grid, 1.0);
        let (times, fields, w) = unit_samples(grid, |_| 1.0, 10);
        let samples: Vec<TimeSample> = times
            .iter()
            .zip(&fields)
            .map(|(&t, f)| TimeSample { t, f, weights: &w })
            .collect();
        assert!((h_functional(&samples, &phi, 2.0, 1.0, 0.0, 1.0).unwrap() - 1.0).abs() < 1e-10);

        let (times, fields, w) = unit_samples(grid, |t| (-t).exp(), 2000);
        let samples: Vec<TimeSample> = times
            .iter()
            .zip(&fields)
            .map(|(&t, f)| TimeSample { t, f, weights: &w })
            .collect();
        let h = h_functional(&samples, &phi, 2.0, 1.0, 0.0, 1.0).unwrap();
        assert!((h - (1.0 - (-2.0f64).exp()) / 2.0).abs() < 1e-6, "{h}");
        // Monotone in the window.
        let a = h_functional(&samples, &phi, 2.0, 1.0, 0.3, 0.9).unwrap();
        let b = h_functional(&samples, &phi, 2.0, 1.0, 0.2, 0.9).unwrap();
        let c = h_functional(&samples, &phi, 2.0, 1.0, 0.2, 1.0).unwrap();
        assert!(a <= b && b <= c);

        let zero = ScalarField::zeros(grid);
        let zs: Vec<TimeSample> = times
            .iter()
            .map(|&t| TimeSample {
                t,
                f: &zero,
                weights: &w,
            })
            .collect();
        assert_eq!(h_functional(&zs, &phi, 2.0, 1.0, 0.0, 1.0).unwrap(), 0.0);
        assert!(matches!(
            h_functional(&zs, &phi, 2.0, 1.0, 0.5, 0.5),
            Err(Error::EmptyWindow(_))
        ));
    }

    #[test]
    fn sobolev_witness_and_scaling() {
        let grid = ChartGrid::frozen_cube(4, 24, -1.0, 1.0).unwrap();
        let g = MetricField::conformal(grid, |x| 0.1 * x[0]);
        let cut = make_cutoff(
            &grid,
            center_node(&grid),
            8.0 * grid.max_spacing(),
            Profile::Cos2,
        )
        .unwrap();
        let est = estimate_sobolev(SobolevDomain::Cutoff(&cut), &g, 200, DEFAULT_SAFETY).unwrap();
        let (l4, gr) = sobolev_sides(&est.witness, &g).unwrap();
        assert!((l4 - est.constant * gr).abs() <= 1e-8 * l4);
        let scaled = g.scaled(9.0).unwrap();
        let est2 =
            estimate_sobolev(SobolevDomain::Cutoff(&cut), &scaled, 200, DEFAULT_SAFETY).unwrap();
        assert!(
            (est2.constant / est.constant - 1.0).abs() < 0.02,
            "{} {} {} {}",
            est.constant,
            est2.constant,
            est.witness_index,
            est2.witness_index
        );
    }

    #[test]
    fn degenerate_domains_are_rejected() {
        let grid = ChartGrid::periodic_cube(2, 16, 1.0).unwrap();
        let g = MetricField::flat(grid);
        assert!(matches!(
            estimate_sobolev(SobolevDomain::WholeGrid, &g, 10, 2.0),
            Err(Error::DegenerateDomain(_))
        ));
        let grid = ChartGrid::frozen_cube(3, 10, 0.0, 1.0).unwrap();
        let g = MetricField::flat(grid);
        assert!(matches!(
            estimate_sobolev(SobolevDomain::WholeGrid, &g, 10, 2.0),
            Err(Error::DegenerateDomain(_))
        ));
    }
}
