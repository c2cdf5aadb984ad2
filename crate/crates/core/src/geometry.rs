//! Geodesic distance fields and geodesic-ball volumes.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::det_sum;
use crate::error::{Error, Result};
use crate::field::{MetricField, ScalarField};
use crate::grid::{sym_index, ChartGrid, MAX_DIM};

pub const VOLUME_CSV_HEADER: &str = "r,vol,vol_over_r4";

/// Gauss–Legendre nodes on [0, 1] and weights summing to 1.
const GAUSS: [&[(f64, f64)]; 4] = [
    &[(0.5, 1.0)],
    &[
        (0.211_324_865_405_187_1, 0.5),
        (0.788_675_134_594_812_9, 0.5),
    ],
    &[
        (0.112_701_665_379_258_3, 5.0 / 18.0),
        (0.5, 8.0 / 18.0),
        (0.887_298_334_620_741_7, 5.0 / 18.0),
    ],
    &[
        (0.069_431_844_202_973_7, 0.173_927_422_568_726_9),
        (0.330_009_478_207_571_9, 0.326_072_577_431_273_1),
        (0.669_990_521_792_428_1, 0.326_072_577_431_273_1),
        (0.930_568_155_797_026_3, 0.173_927_422_568_726_9),
    ],
];

/// Geodesic distance estimates from one source node. Nodes beyond the
/// requested limit keep `f64::INFINITY`.
#[derive(Clone, Debug)]
pub struct DistanceField {
    pub source: usize,
    pub values: Vec<f64>,
    /// Every node with a true distance below this value is settled.
    pub limit: f64,
    grid: ChartGrid,
}

impl DistanceField {
    pub fn grid(&self) -> &ChartGrid {
        &self.grid
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    d: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .d
            .total_cmp(&self.d)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Segments<'a> {
    grid: ChartGrid,
    g: &'a [f64],
    nc: usize,
}

impl Segments<'_> {
    /// Multilinearly interpolated packed metric at fractional index `q`.
    fn metric_at(&self, q: &[f64], out: &mut [f64]) {
        let grid = &self.grid;
        let n = grid.dim();
        let mut lo = [0usize; MAX_DIM];
        let mut hi = [0usize; MAX_DIM];
        let mut frac = [0.0; MAX_DIM];
        for a in 0..n {
            let len = grid.extents()[a] as isize;
            let mut b = q[a].floor() as isize;
            if !grid.is_periodic() {
                b = b.clamp(0, len - 2);
            }
            frac[a] = q[a] - b as f64;
            lo[a] = b.rem_euclid(len) as usize * grid.strides()[a];
            hi[a] = (b + 1).rem_euclid(len) as usize * grid.strides()[a];
        }
        let nc = self.nc;
        out[..nc].fill(0.0);
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            let mut node = 0;
            for a in 0..n {
                if (corner >> a) & 1 == 1 {
                    w *= frac[a];
                    node += hi[a];
                } else {
                    w *= 1.0 - frac[a];
                    node += lo[a];
                }
            }
            if w != 0.0 {
                let src = &self.g[node * nc..(node + 1) * nc];
                for c in 0..nc {
                    out[c] += w * src[c];
                }
            }
        }
    }

    fn quadratic(&self, gm: &[f64], dx: &[f64]) -> f64 {
        let n = self.grid.dim();
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..=i {
                let f = if i == j { 1.0 } else { 2.0 };
                quad += f * gm[sym_index(i, j)] * dx[i] * dx[j];
            }
        }
        quad.max(0.0).sqrt()
    }

    /// Length of a neighbor edge with the metric averaged over its endpoints.
    fn edge(&self, a: usize, b: usize, offset: &[isize]) -> f64 {
        let n = self.grid.dim();
        let nc = self.nc;
        let mut gm = [0.0; 10];
        for c in 0..nc {
            gm[c] = 0.5 * (self.g[a * nc + c] + self.g[b * nc + c]);
        }
        let mut dx = [0.0; MAX_DIM];
        for k in 0..n {
            dx[k] = offset[k] as f64 * self.grid.spacing()[k];
        }
        self.quadratic(&gm, &dx[..n])
    }

    /// Metric length of the coordinate segment from node `a` to node `b`
    /// (minimal periodic image), by Gauss–Legendre quadrature.
    fn length(&self, a: usize, b: usize) -> f64 {
        let grid = &self.grid;
        let n = grid.dim();
        let pa = grid.position(a);
        let dx = grid.displacement(&pa[..n], &grid.position(b)[..n]);
        let qa = grid.fractional_index(&pa[..n]);
        let cells = (0..n)
            .map(|k| (dx[k] / grid.spacing()[k]).abs())
            .fold(0.0, f64::max);
        let rule = GAUSS[((cells / 3.0) as usize).min(GAUSS.len() - 1)];
        let mut gm = [0.0; 10];
        let mut total = 0.0;
        for &(s, w) in rule {
            let mut q = [0.0; MAX_DIM];
            for k in 0..n {
                q[k] = qa[k] + s * dx[k] / grid.spacing()[k];
            }
            self.metric_at(&q[..n], &mut gm);
            total += w * self.quadratic(&gm, &dx[..n]);
        }
        total
    }
}

/// Offsets of the 3ⁿ − 1 neighbor nodes.
fn neighbor_offsets(n: usize) -> Vec<[isize; MAX_DIM]> {
    let mut out = Vec::new();
    for k in 0..3usize.pow(n as u32) {
        let mut o = [0isize; MAX_DIM];
        let mut rest = k;
        for a in 0..n {
            o[a] = (rest % 3) as isize - 1;
            rest /= 3;
        }
        if o.iter().any(|&v| v != 0) {
            out.push(o);
        }
    }
    out
}

fn offset_node(grid: &ChartGrid, node: usize, o: &[isize]) -> Option<usize> {
    let mut m = node;
    for (a, &d) in o.iter().enumerate() {
        if d != 0 {
            m = grid.shift(m, a, d)?;
        }
    }
    Some(m)
}

/// Geodesic distance from `source` over the whole chart.
pub fn geodesic_distance(g: &MetricField, source: usize) -> Result<DistanceField> {
    geodesic_distance_within(g, source, f64::INFINITY)
}

/// Any-angle Dijkstra: every node relaxes its 3ⁿ − 1 neighbors both through
/// itself and by a straight segment from its own parent, with segment
/// lengths integrated along the chart line. Stops once the frontier passes
/// `limit`.
pub fn geodesic_distance_within(
    g: &MetricField,
    source: usize,
    limit: f64,
) -> Result<DistanceField> {
    let grid = *g.grid();
    if source >= grid.len() {
        return Err(Error::InvalidParameter(format!(
            "source node {source} outside the grid"
        )));
    }
    if !grid.is_periodic() && grid.in_collar(source) {
        return Err(Error::InvalidParameter(format!(
            "source node {source} lies in the boundary collar"
        )));
    }
    if let Some(k) = g.data().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("metric component {k}")));
    }
    let n = grid.dim();
    let seg = Segments {
        grid,
        g: g.data(),
        nc: g.ncomp(),
    };
    let offsets = neighbor_offsets(n);
    let mut dist = vec![f64::INFINITY; grid.len()];
    let mut parent = vec![usize::MAX; grid.len()];
    let mut done = vec![false; grid.len()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    parent[source] = source;
    heap.push(Entry {
        d: 0.0,
        node: source,
    });
    while let Some(Entry { d, node: u }) = heap.pop() {
        if done[u] || d > dist[u] {
            continue;
        }
        if d > limit {
            break;
        }
        done[u] = true;
        let pu = parent[u];
        for o in &offsets {
            let Some(v) = offset_node(&grid, u, &o[..n]) else {
                continue;
            };
            if done[v] {
                continue;
            }
            let mut best = dist[u] + seg.edge(u, v, &o[..n]);
            let mut from = u;
            if pu != u {
                let through = dist[pu] + seg.length(pu, v);
                if through < best {
                    best = through;
                    from = pu;
                }
            }
            if best < dist[v] {
                dist[v] = best;
                parent[v] = from;
                heap.push(Entry { d: best, node: v });
            }
        }
    }
    for (k, d) in dist.iter_mut().enumerate() {
        if !done[k] {
            *d = f64::INFINITY;
        }
    }
    Ok(DistanceField {
        source,
        values: dist,
        limit,
        grid,
    })
}

/// Distance fields from several sources, computed in parallel.
pub fn geodesic_distances(
    g: &MetricField,
    sources: &[usize],
    limit: f64,
) -> Result<Vec<DistanceField>> {
    sources
        .par_iter()
        .map(|&s| geodesic_distance_within(g, s, limit))
        .collect()
}

/// Measure of `{y ∈ [0,1]ⁿ : a·y ≤ b}` for `a ≥ 0`.
fn box_halfspace_fraction(a: &[f64], b: f64) -> f64 {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(*v));
    let active: Vec<f64> = a.iter().copied().filter(|&v| v > 1e-9 * scale).collect();
    let total: f64 = active.iter().sum();
    if b <= 0.0 {
        return 0.0;
    }
    if b >= total {
        return 1.0;
    }
    let m = active.len();
    let mut sum = 0.0;
    for subset in 0..(1usize << m) {
        let mut s = b;
        let mut sign = 1.0;
        for (i, v) in active.iter().enumerate() {
            if (subset >> i) & 1 == 1 {
                s -= v;
                sign = -sign;
            }
        }
        if s > 0.0 {
            sum += sign * s.powi(m as i32);
        }
    }
    let fact: f64 = (1..=m).map(|k| k as f64).product();
    (sum / (fact * active.iter().product::<f64>())).clamp(0.0, 1.0)
}

/// Fraction of a cell where the linear fit of its corner distances is below `r`.
fn cell_fraction(corners: &[f64], n: usize, r: f64) -> f64 {
    if corners.iter().all(|&d| d < r) {
        return 1.0;
    }
    if corners.iter().all(|&d| d >= r) {
        return 0.0;
    }
    let count = corners.len() as f64;
    let mean = corners.iter().sum::<f64>() / count;
    let mut a = [0.0; MAX_DIM];
    for (axis, slot) in a.iter_mut().enumerate().take(n) {
        let mut diff = 0.0;
        for (c, &d) in corners.iter().enumerate() {
            diff += if (c >> axis) & 1 == 1 { d } else { -d };
        }
        *slot = diff / (count / 2.0);
    }
    // d(y) ≈ mean + Σ a_i (y_i − ½); flip axes with a_i < 0 so all slopes are ≥ 0.
    let mut b = r - mean;
    let mut pos = [0.0; MAX_DIM];
    for i in 0..n {
        b += 0.5 * a[i].abs();
        pos[i] = a[i].abs();
    }
    box_halfspace_fraction(&pos[..n], b)
}

fn check_radius(r: f64) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "radius {r} must be positive"
        )));
    }
    Ok(())
}

/// `Vol_g({d < r})`, integrating `√det g` cell by cell with the exact measure
/// of the sub-cell region below the linearized level set.
pub fn ball_volume(g: &MetricField, d: &DistanceField, r: f64) -> Result<f64> {
    ball_sum(g, d, r, None)
}

/// `∫_{d < r} f dV_g` with the same partial-cell weighting as [`ball_volume`].
pub fn ball_integral(g: &MetricField, d: &DistanceField, r: f64, f: &ScalarField) -> Result<f64> {
    if !f.grid().same_shape(g.grid()) {
        return Err(Error::GridMismatch);
    }
    ball_sum(g, d, r, Some(f.values()))
}

fn ball_sum(g: &MetricField, d: &DistanceField, r: f64, integrand: Option<&[f64]>) -> Result<f64> {
    let grid = *g.grid();
    check_radius(r)?;
    if !d.grid.same_shape(&grid) {
        return Err(Error::GridMismatch);
    }
    if r + cell_diameter_bound(g) > d.limit {
        return Err(Error::InvalidParameter(format!(
            "distance field limit {} too small for radius {r}",
            d.limit
        )));
    }
    let n = grid.dim();
    let sd = g.sqrt_det()?;
    let sd = sd.values();
    let src = grid.position(d.source);
    let mut cells: Vec<usize> = Vec::new();
    for node in 0..grid.len() {
        if d.values[node] >= r {
            continue;
        }
        if grid.is_periodic() {
            let dx = grid.displacement(&src[..n], &grid.position(node)[..n]);
            if (0..n).any(|a| dx[a].abs() > 0.5 * grid.period(a) - 1.5 * grid.spacing()[a]) {
                return Err(Error::BallTouchesBoundary { radius: r });
            }
        } else if grid.in_collar(node) {
            return Err(Error::BallTouchesBoundary { radius: r });
        }
        for corner in 0..(1usize << n) {
            let mut base = node;
            let mut ok = true;
            for a in 0..n {
                if (corner >> a) & 1 == 1 {
                    match grid.shift(base, a, -1) {
                        Some(b) => base = b,
                        None => ok = false,
                    }
                }
            }
            if ok {
                cells.push(base);
            }
        }
    }
    cells.sort_unstable();
    cells.dedup();
    let mut contributions = Vec::with_capacity(cells.len());
    let mut corners = vec![0.0; 1 << n];
    for &base in &cells {
        let mut weight = 0.0;
        for (c, slot) in corners.iter_mut().enumerate() {
            let mut m = base;
            for a in 0..n {
                if (c >> a) & 1 == 1 {
                    m = grid
                        .shift(m, a, 1)
                        .ok_or(Error::BallTouchesBoundary { radius: r })?;
                }
            }
            *slot = d.values[m];
            weight += sd[m] * integrand.map_or(1.0, |v| v[m]);
        }
        let frac = cell_fraction(&corners, n, r);
        if frac > 0.0 {
            contributions.push(frac * weight / corners.len() as f64);
        }
    }
    Ok(det_sum(&contributions) * grid.cell_volume())
}

/// Upper bound on the metric diameter of one grid cell (Gershgorin bound on
/// the largest eigenvalue).
pub(crate) fn cell_diameter_bound(g: &MetricField) -> f64 {
    let grid = g.grid();
    let n = grid.dim();
    let row_max = (0..grid.len())
        .map(|k| {
            let m = g.node(k);
            (0..n)
                .map(|i| (0..n).map(|j| m[sym_index(i, j)].abs()).sum::<f64>())
                .fold(0.0f64, f64::max)
        })
        .fold(0.0f64, f64::max);
    let diag: f64 = grid.spacing().iter().map(|h| h * h).sum();
    (row_max * diag).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeRow {
    pub r: f64,
    pub vol: f64,
    pub vol_over_r4: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeTable {
    pub center: usize,
    pub rows: Vec<VolumeRow>,
    /// `max_r Vol/r⁴`, the empirical growth constant.
    pub max_ratio: f64,
}

impl VolumeTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(VOLUME_CSV_HEADER);
        s.push('\n');
        for row in &self.rows {
            let _ = writeln!(
                s,
                "{:.12e},{:.12e},{:.12e}",
                row.r, row.vol, row.vol_over_r4
            );
        }
        s
    }
}

/// `(r, Vol(B(p, r)), Vol/r⁴)` for each radius, sharing one distance field.
pub fn volume_growth_table(g: &MetricField, center: usize, radii: &[f64]) -> Result<VolumeTable> {
    if radii.is_empty() {
        return Err(Error::InvalidParameter("no radii given".into()));
    }
    for &r in radii {
        check_radius(r)?;
    }
    let r_max = radii.iter().fold(0.0f64, |m, &r| m.max(r));
    let d = geodesic_distance_within(g, center, r_max + cell_diameter_bound(g))?;
    let rows = radii
        .iter()
        .map(|&r| {
            let vol = ball_volume(g, &d, r)?;
            Ok(VolumeRow {
                r,
                vol,
                vol_over_r4: vol / r.powi(4),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_ratio = rows.iter().fold(0.0f64, |m, row| m.max(row.vol_over_r4));
    Ok(VolumeTable {
        center,
        rows,
        max_ratio,
    })
}

/// Distance field suitable for `ball_volume` up to radius `r`.
pub fn distance_for_radius(g: &MetricField, center: usize, r: f64) -> Result<DistanceField> {
    geodesic_distance_within(g, center, r + cell_diameter_bound(g))
}

#[cfg(test)]
mod tests;
