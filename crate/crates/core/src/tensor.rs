//! Index layouts for tensors with declared symmetries.
//!
//! A layout maps every full multi-index to a stored slot and a sign (or to
//! "identically zero"), so symmetric and antisymmetric slot pairs are exact by
//! construction.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Valence {
    Covariant,
    Contravariant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotPair {
    pub a: usize,
    pub b: usize,
    pub antisymmetric: bool,
}

impl SlotPair {
    pub fn sym(a: usize, b: usize) -> Self {
        SlotPair {
            a,
            b,
            antisymmetric: false,
        }
    }

    pub fn anti(a: usize, b: usize) -> Self {
        SlotPair {
            a,
            b,
            antisymmetric: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetry {
    None,
    /// Disjoint slot pairs, each symmetric or antisymmetric.
    Pairs(Vec<SlotPair>),
    /// Rank-4 curvature symmetries: antisymmetric in (0,1) and (2,3),
    /// symmetric under exchange of the two pairs.
    Riemann,
}

#[derive(Debug)]
pub struct TensorLayout {
    pub dim: usize,
    pub rank: usize,
    pub symmetry: Symmetry,
    /// Per full index (row-major over slots): (stored slot, sign); sign 0 = zero.
    full: Vec<(u32, i8)>,
    /// A representative full index for each stored slot.
    reps: Vec<usize>,
}

impl TensorLayout {
    pub fn new(dim: usize, rank: usize, symmetry: Symmetry) -> Arc<Self> {
        if let Symmetry::Riemann = symmetry {
            assert_eq!(rank, 4, "riemann symmetry needs rank 4");
        }
        let total = dim.pow(rank as u32);
        let mut canon: BTreeMap<Vec<usize>, u32> = BTreeMap::new();
        let mut entries: Vec<(Option<Vec<usize>>, i8)> = Vec::with_capacity(total);
        for f in 0..total {
            let idx = unflatten(f, dim, rank);
            match canonicalize(&idx, &symmetry) {
                Some((mut c, s)) => {
                    // Keys are stored reversed so slots are in colexicographic
                    // order; for symmetric pairs this matches `grid::sym_index`.
                    c.reverse();
                    canon.entry(c.clone()).or_insert(0);
                    entries.push((Some(c), s));
                }
                None => entries.push((None, 0)),
            }
        }
        let mut reps = Vec::with_capacity(canon.len());
        for (slot, (k, v)) in canon.iter_mut().enumerate() {
            *v = slot as u32;
            let idx: Vec<usize> = k.iter().rev().cloned().collect();
            reps.push(flatten(&idx, dim));
        }
        let full = entries
            .into_iter()
            .map(|(c, s)| match c {
                Some(c) => (canon[&c], s),
                None => (0, 0),
            })
            .collect();
        Arc::new(TensorLayout {
            dim,
            rank,
            symmetry,
            full,
            reps,
        })
    }

    pub fn ncomp(&self) -> usize {
        self.reps.len()
    }

    pub fn full_len(&self) -> usize {
        self.full.len()
    }

    #[inline]
    pub fn lookup(&self, full_index: usize) -> (usize, f64) {
        let (s, sign) = self.full[full_index];
        (s as usize, sign as f64)
    }

    pub fn representative(&self, slot: usize) -> usize {
        self.reps[slot]
    }

    /// Expand stored components to the full array.
    pub fn expand(&self, stored: &[f64], out: &mut [f64]) {
        for (f, &(s, sign)) in self.full.iter().enumerate() {
            out[f] = if sign == 0 {
                0.0
            } else {
                sign as f64 * stored[s as usize]
            };
        }
    }

    /// Compress a full array, reading each stored slot from its representative.
    pub fn compress(&self, full: &[f64], out: &mut [f64]) {
        for (s, &r) in self.reps.iter().enumerate() {
            out[s] = full[r];
        }
    }

    /// Compress after averaging over the symmetry orbit of each component, so
    /// a nearly symmetric full array is projected onto the layout.
    pub fn project(&self, full: &[f64], out: &mut [f64]) {
        let mut count = vec![0.0; self.ncomp()];
        out[..self.ncomp()].iter_mut().for_each(|v| *v = 0.0);
        for (f, &(s, sign)) in self.full.iter().enumerate() {
            if sign != 0 {
                out[s as usize] += sign as f64 * full[f];
                count[s as usize] += 1.0;
            }
        }
        for (o, c) in out.iter_mut().zip(count) {
            if c > 0.0 {
                *o /= c;
            }
        }
    }
}

pub fn unflatten(mut f: usize, dim: usize, rank: usize) -> Vec<usize> {
    let mut idx = vec![0; rank];
    for k in (0..rank).rev() {
        idx[k] = f % dim;
        f /= dim;
    }
    idx
}

pub fn flatten(idx: &[usize], dim: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * dim + i)
}

fn canonicalize(idx: &[usize], sym: &Symmetry) -> Option<(Vec<usize>, i8)> {
    let mut c = idx.to_vec();
    let mut sign = 1i8;
    match sym {
        Symmetry::None => {}
        Symmetry::Pairs(pairs) => {
            for p in pairs {
                if c[p.a] == c[p.b] && p.antisymmetric {
                    return None;
                }
                if c[p.a] > c[p.b] {
                    c.swap(p.a, p.b);
                    if p.antisymmetric {
                        sign = -sign;
                    }
                }
            }
        }
        Symmetry::Riemann => {
            if c[0] == c[1] || c[2] == c[3] {
                return None;
            }
            if c[0] > c[1] {
                c.swap(0, 1);
                sign = -sign;
            }
            if c[2] > c[3] {
                c.swap(2, 3);
                sign = -sign;
            }
            if (c[0], c[1]) > (c[2], c[3]) {
                c.swap(0, 2);
                c.swap(1, 3);
            }
        }
    }
    Some((c, sign))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn component_counts() {
        assert_eq!(TensorLayout::new(4, 4, Symmetry::Riemann).ncomp(), 21);
        assert_eq!(TensorLayout::new(2, 4, Symmetry::Riemann).ncomp(), 1);
        assert_eq!(TensorLayout::new(3, 4, Symmetry::Riemann).ncomp(), 6);
        assert_eq!(
            TensorLayout::new(4, 2, Symmetry::Pairs(vec![SlotPair::sym(0, 1)])).ncomp(),
            10
        );
        assert_eq!(
            TensorLayout::new(4, 3, Symmetry::Pairs(vec![SlotPair::sym(1, 2)])).ncomp(),
            40
        );
        assert_eq!(
            TensorLayout::new(4, 3, Symmetry::Pairs(vec![SlotPair::anti(0, 1)])).ncomp(),
            24
        );
        assert_eq!(TensorLayout::new(3, 2, Symmetry::None).ncomp(), 9);
    }

    #[test]
    fn symmetric_pairs_follow_packed_metric_order() {
        let l = TensorLayout::new(4, 2, Symmetry::Pairs(vec![SlotPair::sym(0, 1)]));
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(
                    l.lookup(flatten(&[i, j], 4)).0,
                    crate::grid::sym_index(i, j)
                );
            }
        }
    }

    #[test]
    fn riemann_expansion_is_exactly_symmetric() {
        let l = TensorLayout::new(4, 4, Symmetry::Riemann);
        let stored: Vec<f64> = (0..l.ncomp()).map(|k| (k as f64 + 1.0).sqrt()).collect();
        let mut full = vec![0.0; l.full_len()];
        l.expand(&stored, &mut full);
        for f in 0..full.len() {
            let i = unflatten(f, 4, 4);
            let at = |a: usize, b: usize, c: usize, d: usize| full[flatten(&[a, b, c, d], 4)];
            assert_eq!(at(i[0], i[1], i[2], i[3]), -at(i[1], i[0], i[2], i[3]));
            assert_eq!(at(i[0], i[1], i[2], i[3]), -at(i[0], i[1], i[3], i[2]));
            assert_eq!(at(i[0], i[1], i[2], i[3]), at(i[2], i[3], i[0], i[1]));
        }
        let mut back = vec![0.0; l.ncomp()];
        l.compress(&full, &mut back);
        assert_eq!(back, stored);
    }
}
