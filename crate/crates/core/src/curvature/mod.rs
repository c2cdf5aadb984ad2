//! Connection and curvature of a sampled metric.
//!
//! Curvature convention: `R_{ijkl}` is all-covariant with
//! `R_{ijkl} = K (g_{ik} g_{jl} − g_{il} g_{jk})` on a space of constant
//! sectional curvature `K`, and `Ric_{jl} = g^{ik} R_{ijkl}`. Riemann is
//! evaluated pointwise from `∂g`, `∂²g` and `Γ` (no nested differencing).

mod bach;
mod point;

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::{det_sum_nodes, pointwise_tensor_norm, tensor_norm_full};
use crate::error::{Error, Result};
use crate::field::{par_fill, sym2_layout, MetricField, ScalarField, TensorField};
use crate::grid::{sym_index, sym_len, ChartGrid, MAX_DIM};
use crate::linalg;
use crate::tensor::{SlotPair, Symmetry, TensorLayout, Valence};

pub use bach::{bach, bach_full_weyl, elliptic_residual, BachPair};
pub use point::{levi_civita, PointGeometry};

/// Nodes this far from a frozen edge see only fourth-order interior stencils
/// through the full Bach pipeline (three nested derivative passes).
pub const BACH_MARGIN: usize = 6;

pub fn christoffel_layout(dim: usize) -> Arc<TensorLayout> {
    TensorLayout::new(dim, 3, Symmetry::Pairs(vec![SlotPair::sym(1, 2)]))
}

pub fn riemann_layout(dim: usize) -> Arc<TensorLayout> {
    TensorLayout::new(dim, 4, Symmetry::Riemann)
}

fn covariant(rank: usize) -> Vec<Valence> {
    vec![Valence::Covariant; rank]
}

fn check_metric(g: &MetricField) -> Result<Vec<f64>> {
    g.inverse()
}

/// Christoffel symbols of the second kind `Γ^i_{jk}`, symmetric in `(j, k)`.
pub fn christoffel(g: &MetricField) -> Result<TensorField> {
    check_metric(g)?;
    let grid = *g.grid();
    let n = grid.dim();
    let layout = christoffel_layout(n);
    let nc = layout.ncomp();
    let data = par_fill(grid.len(), nc, |node, out| {
        let pg = PointGeometry::new(g, node, false).expect("metric checked");
        for (s, o) in out.iter_mut().enumerate() {
            let idx = crate::tensor::unflatten(layout.representative(s), n, 3);
            *o = pg.gamma[idx[0]][idx[1]][idx[2]];
        }
    });
    let mut valence = covariant(3);
    valence[0] = Valence::Contravariant;
    Ok(TensorField::from_raw(grid, valence, layout, data))
}

fn same_grid(a: &ChartGrid, b: &ChartGrid) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// All-covariant Riemann tensor from the metric and its Christoffel symbols.
pub fn riemann(g: &MetricField, gamma: &TensorField) -> Result<TensorField> {
    same_grid(g.grid(), gamma.grid())?;
    if gamma.rank() != 3 {
        return Err(Error::Valence("christoffel field must have rank 3".into()));
    }
    check_metric(g)?;
    let grid = *g.grid();
    let n = grid.dim();
    let layout = riemann_layout(n);
    let nc = layout.ncomp();
    let data = par_fill(grid.len(), nc, |node, out| {
        let mut pg = PointGeometry::new(g, node, true).expect("metric checked");
        let mut full = [0.0; MAX_DIM * MAX_DIM * MAX_DIM];
        gamma.expand_node(node, &mut full[..n * n * n]);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    pg.gamma[i][j][k] = full[(i * n + j) * n + k];
                }
            }
        }
        pg.riemann_stored(&layout, out);
    });
    Ok(TensorField::from_raw(grid, covariant(4), layout, data))
}

/// `Ric_{jl} = g^{ik} R_{ijkl}`.
pub fn ricci(g: &MetricField, rm: &TensorField) -> Result<TensorField> {
    same_grid(g.grid(), rm.grid())?;
    if !matches!(rm.symmetry(), Symmetry::Riemann) {
        return Err(Error::Valence("ricci expects riemann-type storage".into()));
    }
    let gi = check_metric(g)?;
    let grid = *g.grid();
    let n = grid.dim();
    let nc = sym_len(n);
    let data = par_fill(grid.len(), nc, |node, out| {
        let ginv = linalg::unpack(&gi[node * nc..(node + 1) * nc], n);
        let mut full = [0.0; 256];
        rm.expand_node(node, &mut full[..n.pow(4)]);
        ricci_from_full(&full, &ginv, n, out);
    });
    Ok(TensorField::from_raw(
        grid,
        covariant(2),
        sym2_layout(n),
        data,
    ))
}

pub(crate) fn ricci_from_full(full: &[f64], ginv: &linalg::Mat, n: usize, out: &mut [f64]) {
    for j in 0..n {
        for l in 0..=j {
            let mut s = 0.0;
            for i in 0..n {
                for k in 0..n {
                    s += ginv[i][k] * full[((i * n + j) * n + k) * n + l];
                }
            }
            out[sym_index(j, l)] = s;
        }
    }
}

pub fn scalar_curvature(g: &MetricField, ric: &TensorField) -> Result<ScalarField> {
    same_grid(g.grid(), ric.grid())?;
    if ric.rank() != 2 {
        return Err(Error::Valence("ricci must have rank 2".into()));
    }
    let gi = check_metric(g)?;
    let n = g.dim();
    let nc = sym_len(n);
    let values = (0..g.grid().len())
        .into_par_iter()
        .map(|node| trace_packed(&gi[node * nc..(node + 1) * nc], ric.node(node), n))
        .collect();
    Ok(ScalarField::from_raw(*g.grid(), values))
}

/// `g^{ij} T_{ij}` for packed symmetric `g^{-1}` and `T`.
pub fn trace_packed(ginv: &[f64], t: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += ginv[sym_index(i, j)] * t[sym_index(i, j)];
        }
    }
    s
}

#[derive(Clone, Debug)]
pub struct WeylParts {
    pub weyl: TensorField,
    /// Present in dimension 4 only.
    pub plus: Option<TensorField>,
    pub minus: Option<TensorField>,
}

/// Weyl tensor `W = Rm − P ⊙ g` with the Schouten tensor `P`, plus the
/// self-dual / anti-self-dual split in dimension 4.
pub fn weyl_decompose(
    g: &MetricField,
    rm: &TensorField,
    ric: &TensorField,
    r: &ScalarField,
) -> Result<WeylParts> {
    same_grid(g.grid(), rm.grid())?;
    same_grid(g.grid(), ric.grid())?;
    same_grid(g.grid(), r.grid())?;
    let n = g.dim();
    if n < 3 {
        return Err(Error::Dimension(
            "the Weyl tensor needs dimension at least 3".into(),
        ));
    }
    g.inverse()?;
    let grid = *g.grid();
    let layout = riemann_layout(n);
    let nc = layout.ncomp();
    let split = n == 4;
    let width = if split { 3 * nc } else { nc };
    let packed = par_fill(grid.len(), width, |node, out| {
        let gm = g.at(node);
        let mut full = [0.0; 256];
        rm.expand_node(node, &mut full[..n.pow(4)]);
        let ricm = linalg::unpack(ric.node(node), n);
        weyl_from_full(&mut full, &gm, &ricm, r.values()[node], n);
        layout.compress(&full[..n.pow(4)], &mut out[..nc]);
        if split {
            let (gi, det) = linalg::spd_inverse(&gm, n).expect("metric checked");
            let (p, m) = out[nc..].split_at_mut(nc);
            self_dual_split(&full, &gi, det.sqrt(), &layout, p, m);
        }
    });
    let take = |k: usize| -> Vec<f64> {
        packed
            .par_chunks(width)
            .flat_map_iter(|c| c[k * nc..(k + 1) * nc].iter().cloned())
            .collect()
    };
    let weyl = TensorField::from_raw(grid, covariant(4), layout.clone(), take(0));
    let (plus, minus) = if split {
        (
            Some(TensorField::from_raw(
                grid,
                covariant(4),
                layout.clone(),
                take(1),
            )),
            Some(TensorField::from_raw(
                grid,
                covariant(4),
                layout.clone(),
                take(2),
            )),
        )
    } else {
        (None, None)
    };
    Ok(WeylParts { weyl, plus, minus })
}

/// Overwrite a full Riemann array with its Weyl part.
pub(crate) fn weyl_from_full(
    full: &mut [f64],
    g: &linalg::Mat,
    ric: &linalg::Mat,
    r: f64,
    n: usize,
) {
    let nf = n as f64;
    let mut p = linalg::ZERO;
    for i in 0..n {
        for j in 0..n {
            p[i][j] = (ric[i][j] - r * g[i][j] / (2.0 * (nf - 1.0))) / (nf - 2.0);
        }
    }
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let kn = p[i][k] * g[j][l] + p[j][l] * g[i][k]
                        - p[i][l] * g[j][k]
                        - p[j][k] * g[i][l];
                    full[((i * n + j) * n + k) * n + l] -= kn;
                }
            }
        }
    }
}

/// `W± = ½W ± ¼(⋆W + W⋆)` in dimension 4, from the full Weyl array.
pub(crate) fn self_dual_split(
    w: &[f64],
    gi: &linalg::Mat,
    sqrt_det: f64,
    layout: &TensorLayout,
    plus: &mut [f64],
    minus: &mut [f64],
) {
    let n = 4;
    let at = |i: usize, j: usize, k: usize, l: usize| ((i * n + j) * n + k) * n + l;
    // Raise the first pair: U^{ab}_{kl} = g^{ac} g^{bd} W_{cdkl}.
    let mut u = [0.0; 256];
    let mut tmp = [0.0; 256];
    for a in 0..n {
        for d in 0..n {
            for k in 0..n {
                for l in 0..n {
                    tmp[at(a, d, k, l)] = (0..n).map(|c| gi[a][c] * w[at(c, d, k, l)]).sum();
                }
            }
        }
    }
    for a in 0..n {
        for b in 0..n {
            for k in 0..n {
                for l in 0..n {
                    u[at(a, b, k, l)] = (0..n).map(|d| gi[b][d] * tmp[at(a, d, k, l)]).sum();
                }
            }
        }
    }
    let eps = levi_civita();
    let mut star = [0.0; 256];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let mut s = 0.0;
                    for a in 0..n {
                        for b in 0..n {
                            let e = eps[at(i, j, a, b)];
                            if e != 0.0 {
                                s += e * u[at(a, b, k, l)];
                            }
                        }
                    }
                    star[at(i, j, k, l)] = 0.5 * sqrt_det * s;
                }
            }
        }
    }
    let mut fp = [0.0; 256];
    let mut fm = [0.0; 256];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let f = at(i, j, k, l);
                    let sym = 0.25 * (star[f] + star[at(k, l, i, j)]);
                    fp[f] = 0.5 * w[f] + sym;
                    fm[f] = 0.5 * w[f] - sym;
                }
            }
        }
    }
    layout.compress(&fp, plus);
    layout.compress(&fm, minus);
}

#[derive(Clone, Debug)]
pub struct CurvaturePack {
    pub christoffel: TensorField,
    pub riemann: TensorField,
    pub ricci: TensorField,
    pub scalar: ScalarField,
    pub weyl: Option<TensorField>,
    pub weyl_plus: Option<TensorField>,
    pub weyl_minus: Option<TensorField>,
    /// Full-Weyl form `∇^k∇^l W_{ikjl} + ½R^{kl}W_{ikjl}` (dimension 4).
    pub bach: Option<TensorField>,
    /// Self-dual form `2∇^k∇^l W⁺_{ikjl} + R^{kl}W⁺_{ikjl}` (dimension 4).
    pub bach_plus: Option<TensorField>,
}

impl CurvaturePack {
    /// Everything up to the Weyl split; Bach is filled by [`CurvaturePack::with_bach`].
    pub fn compute(g: &MetricField) -> Result<Self> {
        let christoffel = christoffel(g)?;
        let riemann = riemann(g, &christoffel)?;
        let ricci = ricci(g, &riemann)?;
        let scalar = scalar_curvature(g, &ricci)?;
        let (weyl, weyl_plus, weyl_minus) = if g.dim() >= 3 {
            let w = weyl_decompose(g, &riemann, &ricci, &scalar)?;
            (Some(w.weyl), w.plus, w.minus)
        } else {
            (None, None, None)
        };
        Ok(CurvaturePack {
            christoffel,
            riemann,
            ricci,
            scalar,
            weyl,
            weyl_plus,
            weyl_minus,
            bach: None,
            bach_plus: None,
        })
    }

    /// Full pack including both Bach variants in dimension 4.
    pub fn full(g: &MetricField) -> Result<Self> {
        let pack = Self::compute(g)?;
        if g.dim() == 4 {
            pack.with_bach(g)
        } else {
            Ok(pack)
        }
    }

    pub fn with_bach(mut self, g: &MetricField) -> Result<Self> {
        let b = bach(g, &self)?;
        self.bach = Some(b.full_weyl);
        self.bach_plus = Some(b.self_dual);
        Ok(self)
    }

    /// Fills only the full-W Bach form, leaving `bach_plus` empty.
    pub fn with_full_bach(mut self, g: &MetricField) -> Result<Self> {
        self.bach = Some(bach::bach_full_weyl(g, &self)?);
        Ok(self)
    }
}

/// Pointwise `Ric` (packed) and `|Rm|_g` at one node, straight from the metric.
pub fn ricci_at(g: &MetricField, node: usize, ric: &mut [f64]) -> Result<f64> {
    let n = g.dim();
    let pg = PointGeometry::new(g, node, true)?;
    let mut full = [0.0; 256];
    pg.riemann_full(&mut full[..n.pow(4)]);
    ricci_from_full(&full[..n.pow(4)], &pg.gi, n, ric);
    Ok(tensor_norm_full(
        &full[..n.pow(4)],
        &[Valence::Covariant; 4],
        &pg.g,
        &pg.gi,
        n,
    ))
}

/// `|Rm|_g` at every node.
pub fn riemann_norm(g: &MetricField) -> Result<ScalarField> {
    let pack_rm = riemann(g, &christoffel(g)?)?;
    pointwise_tensor_norm(&pack_rm, g)
}

/// Summary statistics of a tensor field for reports.
#[derive(Clone, Debug, Serialize)]
pub struct FieldSummary {
    pub name: String,
    pub max_norm: f64,
    pub l2_norm: f64,
}

pub fn summarize(name: &str, t: &TensorField, g: &MetricField) -> Result<FieldSummary> {
    let nrm = pointwise_tensor_norm(t, g)?;
    let w = crate::calculus::volume_weights(g)?;
    let l2 = det_sum_nodes(w.len(), |k| nrm.values()[k].powi(2) * w[k]).sqrt();
    Ok(FieldSummary {
        name: name.into(),
        max_norm: nrm.max_abs(),
        l2_norm: l2,
    })
}

/// Max of a scalar over nodes at least `margin` nodes from a frozen edge.
pub fn interior_max(f: &ScalarField, margin: usize) -> f64 {
    let grid = f.grid();
    f.values()
        .iter()
        .enumerate()
        .filter(|(k, _)| grid.is_inner(*k, margin))
        .fold(0.0, |m, (_, v)| m.max(v.abs()))
}

#[cfg(test)]
mod tests;
