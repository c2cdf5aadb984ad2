use crate::error::{Error, Result};
use crate::field::MetricField;
use crate::grid::{sym_index, sym_len, MAX_DIM};
use crate::linalg::{self, Mat};
use crate::tensor::TensorLayout;

type T3 = [[[f64; MAX_DIM]; MAX_DIM]; MAX_DIM];

/// Metric, inverse, derivatives and connection at a single node.
#[derive(Clone, Debug)]
pub struct PointGeometry {
    pub n: usize,
    pub g: Mat,
    pub gi: Mat,
    pub det: f64,
    /// `dg[c][i][j] = ∂_c g_{ij}`.
    pub dg: T3,
    /// `ddg[sym_index(c, d)][sym_index(i, j)] = ∂_c∂_d g_{ij}` (zero unless requested).
    pub ddg: [[f64; 10]; 10],
    /// `gamma[i][j][k] = Γ^i_{jk}`.
    pub gamma: T3,
}

impl PointGeometry {
    pub fn new(g: &MetricField, node: usize, second: bool) -> Result<Self> {
        let n = g.dim();
        let nc = sym_len(n);
        let gm = g.at(node);
        let (gi, det) = linalg::spd_inverse(&gm, n).ok_or(Error::SingularMetric { node })?;
        let st = g.grid().local_stencil(node);
        let mut d1 = [0.0; MAX_DIM * 10];
        st.first(g.data(), nc, &mut d1);
        let mut dg = [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM];
        for c in 0..n {
            for i in 0..n {
                for j in 0..n {
                    dg[c][i][j] = d1[c * nc + sym_index(i, j)];
                }
            }
        }
        let mut ddg = [[0.0; 10]; 10];
        if second {
            let mut d2 = [0.0; 100];
            st.second(g.data(), nc, &mut d2);
            for (p, row) in ddg.iter_mut().enumerate().take(nc) {
                row[..nc].copy_from_slice(&d2[p * nc..(p + 1) * nc]);
            }
        }
        let mut pg = PointGeometry {
            n,
            g: gm,
            gi,
            det,
            dg,
            ddg,
            gamma: [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM],
        };
        pg.gamma = pg.christoffel_from_dg();
        Ok(pg)
    }

    /// `Γ_{l,jk} = ½(∂_k g_{jl} + ∂_j g_{kl} − ∂_l g_{jk})`.
    pub fn gamma_lower(&self) -> T3 {
        let n = self.n;
        let d = &self.dg;
        let mut low = [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM];
        for l in 0..n {
            for j in 0..n {
                for k in 0..n {
                    low[l][j][k] = 0.5 * (d[k][j][l] + d[j][k][l] - d[l][j][k]);
                }
            }
        }
        low
    }

    fn christoffel_from_dg(&self) -> T3 {
        let n = self.n;
        let low = self.gamma_lower();
        let mut up = [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    up[i][j][k] = (0..n).map(|l| self.gi[i][l] * low[l][j][k]).sum();
                }
            }
        }
        up
    }

    #[inline]
    fn ddg(&self, c: usize, d: usize, i: usize, j: usize) -> f64 {
        self.ddg[sym_index(c, d)][sym_index(i, j)]
    }

    /// One all-covariant Riemann component.
    fn riemann_component(&self, low: &T3, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let n = self.n;
        let second = 0.5
            * (self.ddg(j, k, i, l) + self.ddg(i, l, j, k)
                - self.ddg(j, l, i, k)
                - self.ddg(i, k, j, l));
        let mut quad = 0.0;
        for p in 0..n {
            quad += self.gamma[p][j][k] * low[p][i][l] - self.gamma[p][j][l] * low[p][i][k];
        }
        second + quad
    }

    /// `Γ_{p,il} = g_{pq} Γ^q_{il}` from the current (possibly externally set) `gamma`.
    fn lowered_current(&self) -> T3 {
        let n = self.n;
        let mut low = [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM];
        for p in 0..n {
            for i in 0..n {
                for l in 0..n {
                    low[p][i][l] = (0..n).map(|q| self.g[p][q] * self.gamma[q][i][l]).sum();
                }
            }
        }
        low
    }

    /// Independent Riemann components in `layout` order.
    pub fn riemann_stored(&self, layout: &TensorLayout, out: &mut [f64]) {
        let n = self.n;
        let low = self.lowered_current();
        for (s, o) in out.iter_mut().enumerate().take(layout.ncomp()) {
            let f = layout.representative(s);
            let (i, j, k, l) = (f / (n * n * n), (f / (n * n)) % n, (f / n) % n, f % n);
            *o = self.riemann_component(&low, i, j, k, l);
        }
    }

    /// Full `n⁴` Riemann array with exact index symmetries.
    pub fn riemann_full(&self, out: &mut [f64]) {
        let layout = riemann_layout_cached(self.n);
        let mut stored = [0.0; 21];
        self.riemann_stored(layout, &mut stored);
        layout.expand(&stored[..layout.ncomp()], out);
    }
}

fn riemann_layout_cached(n: usize) -> &'static TensorLayout {
    use std::sync::OnceLock;
    static LAYOUTS: OnceLock<Vec<std::sync::Arc<TensorLayout>>> = OnceLock::new();
    let all = LAYOUTS.get_or_init(|| {
        (0..=MAX_DIM)
            .map(|d| super::riemann_layout(d.max(2)))
            .collect()
    });
    &all[n]
}

/// Permutation symbol `[ijkl]` on four indices (full 4⁴ array).
pub fn levi_civita() -> [f64; 256] {
    let mut e = [0.0; 256];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                for l in 0..4 {
                    let p = [i, j, k, l];
                    let mut distinct = true;
                    let mut sign = 1.0;
                    for a in 0..4 {
                        for b in a + 1..4 {
                            if p[a] == p[b] {
                                distinct = false;
                            } else if p[a] > p[b] {
                                sign = -sign;
                            }
                        }
                    }
                    if distinct {
                        e[((i * 4 + j) * 4 + k) * 4 + l] = sign;
                    }
                }
            }
        }
    }
    e
}
