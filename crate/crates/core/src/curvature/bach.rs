use rayon::prelude::*;

use super::{CurvaturePack, PointGeometry};
use crate::error::{Error, Result};
use crate::field::{par_fill, sym2_layout, MetricField, ScalarField, TensorField};
use crate::grid::{sym_index, MAX_DIM};
use crate::linalg::{self, Mat};
use crate::tensor::{SlotPair, Symmetry, TensorLayout, Valence};

type T3 = [[[f64; MAX_DIM]; MAX_DIM]; MAX_DIM];

#[derive(Clone, Debug)]
pub struct BachPair {
    /// `∇^k∇^l W_{ikjl} + ½ R^{kl} W_{ikjl}`.
    pub full_weyl: TensorField,
    /// `2∇^k∇^l W⁺_{ikjl} + R^{kl} W⁺_{ikjl}`.
    pub self_dual: TensorField,
}

/// Full `∇_a T_{i₁…i_r}` at one node for an all-covariant field, written as a
/// row-major array with the derivative index first. Partial derivatives come
/// from the stencil applied to stored components; the connection terms use the
/// node's Christoffel symbols.
pub(crate) fn covariant_derivative_node(t: &TensorField, node: usize, gamma: &T3, out: &mut [f64]) {
    let grid = t.grid();
    let n = grid.dim();
    let r = t.rank();
    let nc = t.ncomp();
    let full_len = n.pow(r as u32);
    let layout = t.layout();
    let mut d = [0.0; MAX_DIM * 40];
    grid.local_stencil(node)
        .first(t.data(), nc, &mut d[..n * nc]);
    let mut tf = [0.0; 256];
    t.expand_node(node, &mut tf[..full_len]);
    for a in 0..n {
        let o = &mut out[a * full_len..(a + 1) * full_len];
        layout.expand(&d[a * nc..(a + 1) * nc], o);
        for (f, ov) in o.iter_mut().enumerate() {
            let mut corr = 0.0;
            let mut stride = full_len;
            for _slot in 0..r {
                stride /= n;
                let i = (f / stride) % n;
                let base = f - i * stride;
                for p in 0..n {
                    corr += gamma[p][a][i] * tf[base + p * stride];
                }
            }
            *ov -= corr;
        }
    }
}

fn d_layout() -> std::sync::Arc<TensorLayout> {
    TensorLayout::new(4, 3, Symmetry::Pairs(vec![SlotPair::anti(0, 1)]))
}

/// `D_{ikj} = g^{lb} ∇_b W_{ikjl}`.
fn weyl_divergence(g: &MetricField, w: &TensorField) -> TensorField {
    let grid = *g.grid();
    let layout = d_layout();
    let nc = layout.ncomp();
    let data = par_fill(grid.len(), nc, |node, out| {
        let pg = PointGeometry::new(g, node, false).expect("metric checked");
        let mut dw = [0.0; 1024];
        covariant_derivative_node(w, node, &pg.gamma, &mut dw);
        let mut full = [0.0; 64];
        for i in 0..4 {
            for k in 0..4 {
                for j in 0..4 {
                    let mut s = 0.0;
                    for b in 0..4 {
                        for l in 0..4 {
                            s += pg.gi[l][b] * dw[(((b * 4 + i) * 4 + k) * 4 + j) * 4 + l];
                        }
                    }
                    full[(i * 4 + k) * 4 + j] = s;
                }
            }
        }
        layout.compress(&full, out);
    });
    TensorField::from_raw(grid, vec![Valence::Covariant; 3], layout, data)
}

fn raise_pair(ric: &[f64], gi: &Mat) -> Mat {
    let r = linalg::unpack(ric, 4);
    let t = linalg::mul(gi, &r, 4);
    linalg::mul(&t, gi, 4)
}

/// `coef · g^{ka}∇_a D_{ikj} + rcoef · R^{kl} W_{ikjl}`, symmetrized and packed.
fn bach_from_divergence(
    g: &MetricField,
    dfield: &TensorField,
    w: &TensorField,
    ric: &TensorField,
    coef: f64,
    rcoef: f64,
) -> TensorField {
    let grid = *g.grid();
    let data = par_fill(grid.len(), 10, |node, out| {
        let pg = PointGeometry::new(g, node, false).expect("metric checked");
        let mut dd = [0.0; 256];
        covariant_derivative_node(dfield, node, &pg.gamma, &mut dd);
        let mut wf = [0.0; 256];
        w.expand_node(node, &mut wf);
        let rup = raise_pair(ric.node(node), &pg.gi);
        let mut b = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                let mut s = 0.0;
                for k in 0..4 {
                    for a in 0..4 {
                        s += coef * pg.gi[k][a] * dd[((a * 4 + i) * 4 + k) * 4 + j];
                    }
                    for l in 0..4 {
                        s += rcoef * rup[k][l] * wf[((i * 4 + k) * 4 + j) * 4 + l];
                    }
                }
                b[i][j] = s;
            }
        }
        for i in 0..4 {
            for j in 0..=i {
                out[sym_index(i, j)] = 0.5 * (b[i][j] + b[j][i]);
            }
        }
    });
    TensorField::from_raw(grid, vec![Valence::Covariant; 2], sym2_layout(4), data)
}

/// Both Bach variants of a dimension-4 metric.
pub fn bach(g: &MetricField, pack: &CurvaturePack) -> Result<BachPair> {
    if g.dim() != 4 {
        return Err(Error::Dimension(format!(
            "Bach tensor needs dimension 4, got {}",
            g.dim()
        )));
    }
    let (Some(_), Some(wp)) = (&pack.weyl, &pack.weyl_plus) else {
        return Err(Error::Valence("curvature pack lacks the Weyl split".into()));
    };
    let full_weyl = bach_full_weyl(g, pack)?;
    let dp = weyl_divergence(g, wp);
    let self_dual = bach_from_divergence(g, &dp, wp, &pack.ricci, 2.0, 1.0);
    Ok(BachPair {
        full_weyl,
        self_dual,
    })
}

/// The full-W Bach form alone.
pub fn bach_full_weyl(g: &MetricField, pack: &CurvaturePack) -> Result<TensorField> {
    if g.dim() != 4 {
        return Err(Error::Dimension(format!(
            "Bach tensor needs dimension 4, got {}",
            g.dim()
        )));
    }
    let Some(w) = &pack.weyl else {
        return Err(Error::Valence(
            "curvature pack lacks the Weyl tensor".into(),
        ));
    };
    g.inverse()?;
    let d = weyl_divergence(g, w);
    Ok(bach_from_divergence(g, &d, w, &pack.ricci, 1.0, 0.5))
}

/// Pointwise `|ΔRic − Rm∗Ric − B|_g` with
/// `(Rm∗Ric)_{ij} = 2 R_{ikjl} R^{kl} − 2 R_{ik} R^k_j`.
pub fn elliptic_residual(
    g: &MetricField,
    pack: &CurvaturePack,
    b: &TensorField,
) -> Result<ScalarField> {
    if g.dim() != 4 {
        return Err(Error::Dimension(format!(
            "elliptic residual needs dimension 4, got {}",
            g.dim()
        )));
    }
    if !b.grid().same_shape(g.grid()) {
        return Err(Error::GridMismatch);
    }
    g.inverse()?;
    let grid = *g.grid();
    let n = 4;
    let ric = &pack.ricci;
    let e_layout = TensorLayout::new(n, 3, Symmetry::Pairs(vec![SlotPair::sym(1, 2)]));
    let e_nc = e_layout.ncomp();
    let e_data = par_fill(grid.len(), e_nc, |node, out| {
        let pg = PointGeometry::new(g, node, false).expect("metric checked");
        let mut dr = [0.0; 64];
        covariant_derivative_node(ric, node, &pg.gamma, &mut dr);
        e_layout.compress(&dr, out);
    });
    let e = TensorField::from_raw(grid, vec![Valence::Covariant; 3], e_layout, e_data);
    let values = (0..grid.len())
        .into_par_iter()
        .map(|node| {
            let pg = PointGeometry::new(g, node, false).expect("metric checked");
            let mut de = [0.0; 256];
            covariant_derivative_node(&e, node, &pg.gamma, &mut de);
            let mut rf = [0.0; 256];
            pack.riemann.expand_node(node, &mut rf);
            let rm = linalg::unpack(ric.node(node), n);
            let rup = raise_pair(ric.node(node), &pg.gi);
            let mixed = linalg::mul(&pg.gi, &rm, n);
            let bm = linalg::unpack(b.node(node), n);
            let mut t = linalg::ZERO;
            for i in 0..n {
                for j in 0..n {
                    let mut lap = 0.0;
                    for a in 0..n {
                        for c in 0..n {
                            lap += pg.gi[a][c] * de[((a * n + c) * n + i) * n + j];
                        }
                    }
                    let mut star = 0.0;
                    for k in 0..n {
                        for l in 0..n {
                            star += 2.0 * rf[((i * n + k) * n + j) * n + l] * rup[k][l];
                        }
                        star -= 2.0 * rm[i][k] * mixed[k][j];
                    }
                    t[i][j] = lap - star - bm[i][j];
                }
            }
            let tu = linalg::mul(&linalg::mul(&pg.gi, &t, n), &pg.gi, n);
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s += t[i][j] * tu[i][j];
                }
            }
            s.max(0.0).sqrt()
        })
        .collect();
    Ok(ScalarField::from_raw(grid, values))
}
