//! Rectangular coordinate charts and the finite-difference stencils used on them.
//!
//! Nodes are stored row-major (last axis fastest). Interior derivatives use
//! fourth-order central stencils; on frozen charts the two outermost nodes of
//! each axis fall back to second-order stencils (central one node in, one-sided
//! on the edge itself).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 4;

/// Width (in nodes) of the boundary collar held fixed on frozen charts.
pub const COLLAR: usize = 3;

/// Default cap on the number of grid nodes.
pub const DEFAULT_POINT_BUDGET: usize = 8_000_000;

pub const MIN_EXTENT: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    Frozen,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChartGrid {
    dim: usize,
    extents: [usize; MAX_DIM],
    spacing: [f64; MAX_DIM],
    origin: [f64; MAX_DIM],
    boundary: Boundary,
    strides: [usize; MAX_DIM],
    len: usize,
}

impl ChartGrid {
    pub fn new(
        extents: &[usize],
        spacing: &[f64],
        origin: &[f64],
        boundary: Boundary,
    ) -> Result<Self> {
        Self::with_budget(extents, spacing, origin, boundary, DEFAULT_POINT_BUDGET)
    }

    pub fn with_budget(
        extents: &[usize],
        spacing: &[f64],
        origin: &[f64],
        boundary: Boundary,
        budget: usize,
    ) -> Result<Self> {
        let dim = extents.len();
        if !(2..=MAX_DIM).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in 2..=4")));
        }
        if spacing.len() != dim || origin.len() != dim {
            return Err(Error::InvalidGrid(
                "extents, spacing and origin lengths differ".into(),
            ));
        }
        let mut g = ChartGrid {
            dim,
            extents: [1; MAX_DIM],
            spacing: [1.0; MAX_DIM],
            origin: [0.0; MAX_DIM],
            boundary,
            strides: [0; MAX_DIM],
            len: 0,
        };
        let mut points: usize = 1;
        for a in 0..dim {
            if extents[a] < MIN_EXTENT {
                return Err(Error::InvalidGrid(format!(
                    "extent {} < {MIN_EXTENT} on axis {a}",
                    extents[a]
                )));
            }
            if !(spacing[a] > 0.0) || !spacing[a].is_finite() {
                return Err(Error::InvalidGrid(format!(
                    "spacing on axis {a} must be positive"
                )));
            }
            if !origin[a].is_finite() {
                return Err(Error::InvalidGrid("non-finite origin".into()));
            }
            g.extents[a] = extents[a];
            g.spacing[a] = spacing[a];
            g.origin[a] = origin[a];
            points = points.checked_mul(extents[a]).ok_or(Error::GridTooLarge {
                points: usize::MAX,
                budget,
            })?;
        }
        if points > budget {
            return Err(Error::GridTooLarge { points, budget });
        }
        let mut stride = 1;
        for a in (0..dim).rev() {
            g.strides[a] = stride;
            stride *= extents[a];
        }
        g.len = points;
        Ok(g)
    }

    /// Periodic cube `[0, length)^dim` with `n` nodes per axis.
    pub fn periodic_cube(dim: usize, n: usize, length: f64) -> Result<Self> {
        let h = length / n as f64;
        Self::new(
            &vec![n; dim],
            &vec![h; dim],
            &vec![0.0; dim],
            Boundary::Periodic,
        )
    }

    /// Frozen cube `[lo, hi]^dim` with `n` nodes per axis (both ends are nodes).
    pub fn frozen_cube(dim: usize, n: usize, lo: f64, hi: f64) -> Result<Self> {
        let h = (hi - lo) / (n - 1) as f64;
        Self::new(
            &vec![n; dim],
            &vec![h; dim],
            &vec![lo; dim],
            Boundary::Frozen,
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents[..self.dim]
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing[..self.dim]
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin[..self.dim]
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn is_periodic(&self) -> bool {
        self.boundary == Boundary::Periodic
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides[..self.dim]
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().iter().product()
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing().iter().cloned().fold(0.0, f64::max)
    }

    /// Length of the periodic cell along `axis`.
    pub fn period(&self, axis: usize) -> f64 {
        self.extents[axis] as f64 * self.spacing[axis]
    }

    pub fn index(&self, idx: &[usize]) -> usize {
        let mut n = 0;
        for a in 0..self.dim {
            n += idx[a] * self.strides[a];
        }
        n
    }

    pub fn multi_index(&self, node: usize) -> [usize; MAX_DIM] {
        let mut idx = [0; MAX_DIM];
        let mut rem = node;
        for a in 0..self.dim {
            idx[a] = rem / self.strides[a];
            rem %= self.strides[a];
        }
        idx
    }

    pub fn position(&self, node: usize) -> [f64; MAX_DIM] {
        let idx = self.multi_index(node);
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.dim {
            x[a] = self.origin[a] + idx[a] as f64 * self.spacing[a];
        }
        x
    }

    /// Node reached by moving `delta` steps along `axis`; `None` when it falls
    /// off a frozen chart.
    pub fn shift(&self, node: usize, axis: usize, delta: isize) -> Option<usize> {
        let i = (node / self.strides[axis]) % self.extents[axis];
        let n = self.extents[axis] as isize;
        let mut j = i as isize + delta;
        if self.is_periodic() {
            j = j.rem_euclid(n);
        } else if j < 0 || j >= n {
            return None;
        }
        Some((node as isize + (j - i as isize) * self.strides[axis] as isize) as usize)
    }

    /// Distance in nodes to the nearest chart edge (`usize::MAX` on periodic charts).
    pub fn edge_distance(&self, node: usize) -> usize {
        if self.is_periodic() {
            return usize::MAX;
        }
        let idx = self.multi_index(node);
        (0..self.dim)
            .map(|a| idx[a].min(self.extents[a] - 1 - idx[a]))
            .min()
            .unwrap_or(0)
    }

    pub fn in_collar(&self, node: usize) -> bool {
        self.edge_distance(node) < COLLAR
    }

    /// True when every node within `margin` nodes of `node` exists.
    pub fn is_inner(&self, node: usize, margin: usize) -> bool {
        self.edge_distance(node) >= margin
    }

    /// Coordinate displacement from `from` to `to` along each axis, using the
    /// minimal periodic image where applicable.
    pub fn displacement(&self, from: &[f64], to: &[f64]) -> [f64; MAX_DIM] {
        let mut d = [0.0; MAX_DIM];
        for a in 0..self.dim {
            let mut v = to[a] - from[a];
            if self.is_periodic() {
                let p = self.period(a);
                v -= p * (v / p).round();
            }
            d[a] = v;
        }
        d
    }

    /// Fractional index coordinates of a point (no wrapping applied).
    pub fn fractional_index(&self, x: &[f64]) -> [f64; MAX_DIM] {
        let mut s = [0.0; MAX_DIM];
        for a in 0..self.dim {
            s[a] = (x[a] - self.origin[a]) / self.spacing[a];
        }
        s
    }

    pub fn same_shape(&self, other: &ChartGrid) -> bool {
        self.dim == other.dim
            && self.extents == other.extents
            && self.boundary == other.boundary
            && self
                .spacing()
                .iter()
                .zip(other.spacing())
                .all(|(a, b)| (a - b).abs() <= 1e-14 * a.abs().max(1.0))
    }

    /// The same chart with every spacing (and origin) multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let sp: Vec<f64> = self.spacing().iter().map(|h| h * factor).collect();
        let or: Vec<f64> = self.origin().iter().map(|o| o * factor).collect();
        Self::new(self.extents(), &sp, &or, self.boundary)
    }

    pub fn local_stencil(&self, node: usize) -> LocalStencil {
        LocalStencil::new(self, node)
    }
}

// Tap tables: (offset, weight) with weights for unit spacing.
const D1_C4: [(isize, f64); 4] = [
    (-2, 1.0 / 12.0),
    (-1, -8.0 / 12.0),
    (1, 8.0 / 12.0),
    (2, -1.0 / 12.0),
];
const D1_C2: [(isize, f64); 2] = [(-1, -0.5), (1, 0.5)];
const D1_LEFT: [(isize, f64); 3] = [(0, -1.5), (1, 2.0), (2, -0.5)];
const D1_RIGHT: [(isize, f64); 3] = [(-2, 0.5), (-1, -2.0), (0, 1.5)];
const D2_C4: [(isize, f64); 5] = [
    (-2, -1.0 / 12.0),
    (-1, 16.0 / 12.0),
    (0, -30.0 / 12.0),
    (1, 16.0 / 12.0),
    (2, -1.0 / 12.0),
];
const D2_C2: [(isize, f64); 3] = [(-1, 1.0), (0, -2.0), (1, 1.0)];
const D2_LEFT: [(isize, f64); 4] = [(0, 2.0), (1, -5.0), (2, 4.0), (3, -1.0)];
const D2_RIGHT: [(isize, f64); 4] = [(-3, -1.0), (-2, 4.0), (-1, -5.0), (0, 2.0)];

/// Unit-spacing first-derivative taps for position `i` of an axis with `n` nodes.
pub fn d1_taps(i: usize, n: usize, periodic: bool) -> &'static [(isize, f64)] {
    if periodic || (i >= 2 && i + 2 < n) {
        &D1_C4
    } else if i == 0 {
        &D1_LEFT
    } else if i + 1 == n {
        &D1_RIGHT
    } else {
        &D1_C2
    }
}

pub fn d2_taps(i: usize, n: usize, periodic: bool) -> &'static [(isize, f64)] {
    if periodic || (i >= 2 && i + 2 < n) {
        &D2_C4
    } else if i == 0 {
        &D2_LEFT
    } else if i + 1 == n {
        &D2_RIGHT
    } else {
        &D2_C2
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Tap {
    pub node: usize,
    pub weight: f64,
}

/// Resolved derivative taps around one node: absolute neighbor indices with
/// weights already divided by the spacing.
#[derive(Clone, Debug)]
pub struct LocalStencil {
    pub dim: usize,
    pub node: usize,
    d1: [[Tap; 4]; MAX_DIM],
    d1_len: [usize; MAX_DIM],
    d2: [[Tap; 5]; MAX_DIM],
    d2_len: [usize; MAX_DIM],
}

impl LocalStencil {
    fn new(grid: &ChartGrid, node: usize) -> Self {
        let empty = Tap {
            node: 0,
            weight: 0.0,
        };
        let mut st = LocalStencil {
            dim: grid.dim,
            node,
            d1: [[empty; 4]; MAX_DIM],
            d1_len: [0; MAX_DIM],
            d2: [[empty; 5]; MAX_DIM],
            d2_len: [0; MAX_DIM],
        };
        let idx = grid.multi_index(node);
        let periodic = grid.is_periodic();
        for a in 0..grid.dim {
            let n = grid.extents[a];
            let h = grid.spacing[a];
            let taps = d1_taps(idx[a], n, periodic);
            for (k, &(off, w)) in taps.iter().enumerate() {
                let nb = grid.shift(node, a, off).expect("stencil inside chart");
                st.d1[a][k] = Tap {
                    node: nb,
                    weight: w / h,
                };
            }
            st.d1_len[a] = taps.len();
            let taps = d2_taps(idx[a], n, periodic);
            for (k, &(off, w)) in taps.iter().enumerate() {
                let nb = grid.shift(node, a, off).expect("stencil inside chart");
                st.d2[a][k] = Tap {
                    node: nb,
                    weight: w / (h * h),
                };
            }
            st.d2_len[a] = taps.len();
        }
        st
    }

    pub fn d1(&self, axis: usize) -> &[Tap] {
        &self.d1[axis][..self.d1_len[axis]]
    }

    pub fn d2(&self, axis: usize) -> &[Tap] {
        &self.d2[axis][..self.d2_len[axis]]
    }

    /// First derivatives of every component of a node-major field.
    /// `out[axis * ncomp + c]`. Taps act on differences from the center value
    /// (the weights sum to zero), so constants differentiate to exactly zero.
    pub fn first(&self, data: &[f64], ncomp: usize, out: &mut [f64]) {
        let center = &data[self.node * ncomp..(self.node + 1) * ncomp];
        for a in 0..self.dim {
            let o = &mut out[a * ncomp..(a + 1) * ncomp];
            o.iter_mut().for_each(|v| *v = 0.0);
            for t in self.d1(a) {
                let src = &data[t.node * ncomp..(t.node + 1) * ncomp];
                for c in 0..ncomp {
                    o[c] += t.weight * (src[c] - center[c]);
                }
            }
        }
    }

    /// Second derivatives for every unordered axis pair, `out[pair(a,b) * ncomp + c]`.
    /// Mixed derivatives are tensor products of first-derivative taps, which is
    /// valid because each tap node is shifted along one axis only.
    pub fn second(&self, data: &[f64], ncomp: usize, out: &mut [f64]) {
        let center = &data[self.node * ncomp..(self.node + 1) * ncomp];
        for a in 0..self.dim {
            for b in a..self.dim {
                let p = sym_index(a, b);
                let o = &mut out[p * ncomp..(p + 1) * ncomp];
                o.iter_mut().for_each(|v| *v = 0.0);
                if a == b {
                    for t in self.d2(a) {
                        let src = &data[t.node * ncomp..(t.node + 1) * ncomp];
                        for c in 0..ncomp {
                            o[c] += t.weight * (src[c] - center[c]);
                        }
                    }
                } else {
                    for tb in self.d1(b) {
                        let db = tb.node as isize - self.node as isize;
                        for ta in self.d1(a) {
                            let nb = (ta.node as isize + db) as usize;
                            let w = ta.weight * tb.weight;
                            let src = &data[nb * ncomp..(nb + 1) * ncomp];
                            for c in 0..ncomp {
                                o[c] += w * (src[c] - center[c]);
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Packed index of the unordered pair `(a, b)` (lower-triangle order).
#[inline]
pub fn sym_index(a: usize, b: usize) -> usize {
    let (i, j) = if a >= b { (a, b) } else { (b, a) };
    i * (i + 1) / 2 + j
}

#[inline]
pub fn sym_len(n: usize) -> usize {
    n * (n + 1) / 2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_grids() {
        assert!(ChartGrid::new(&[8], &[1.0], &[0.0], Boundary::Periodic).is_err());
        assert!(ChartGrid::new(&[8, 7], &[1.0, 1.0], &[0.0, 0.0], Boundary::Periodic).is_err());
        assert!(ChartGrid::new(&[8, 8], &[1.0, 0.0], &[0.0, 0.0], Boundary::Periodic).is_err());
        let err = ChartGrid::with_budget(&[10, 10], &[1.0, 1.0], &[0.0, 0.0], Boundary::Frozen, 50);
        assert!(matches!(
            err,
            Err(Error::GridTooLarge {
                points: 100,
                budget: 50
            })
        ));
    }

    #[test]
    fn index_round_trip() {
        let g = ChartGrid::new(&[8, 9, 10], &[1.0; 3], &[0.0; 3], Boundary::Frozen).unwrap();
        for node in [0, 17, 333, g.len() - 1] {
            let idx = g.multi_index(node);
            assert_eq!(g.index(&idx[..3]), node);
        }
    }

    #[test]
    fn periodic_shift_wraps() {
        let g = ChartGrid::periodic_cube(2, 8, 1.0).unwrap();
        let n = g.index(&[0, 7]);
        assert_eq!(g.shift(n, 1, 1), Some(g.index(&[0, 0])));
        assert_eq!(g.shift(n, 0, -1), Some(g.index(&[7, 7])));
        let f = ChartGrid::frozen_cube(2, 8, 0.0, 1.0).unwrap();
        assert_eq!(f.shift(0, 0, -1), None);
    }

    #[test]
    fn stencil_weights_sum_to_zero() {
        for n in [8usize, 12] {
            for i in 0..n {
                for periodic in [true, false] {
                    let s1: f64 = d1_taps(i, n, periodic).iter().map(|t| t.1).sum();
                    let s2: f64 = d2_taps(i, n, periodic).iter().map(|t| t.1).sum();
                    assert!(s1.abs() < 1e-14 && s2.abs() < 1e-14);
                }
            }
        }
    }
}
