//! Scalar, tensor and metric fields sampled on a chart grid.
//!
//! All fields are node-major: the components of node `k` occupy
//! `data[k * ncomp .. (k + 1) * ncomp]`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{sym_len, ChartGrid};
use crate::linalg::{self, Mat};
use crate::tensor::{SlotPair, Symmetry, TensorLayout, Valence};

/// Fill a node-major buffer in parallel; each node is written independently so
/// the result does not depend on the thread count.
pub fn par_fill<F>(len: usize, ncomp: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let mut data = vec![0.0; len * ncomp];
    if ncomp == 0 {
        return data;
    }
    data.par_chunks_mut(ncomp)
        .enumerate()
        .for_each(|(node, out)| f(node, out));
    data
}

fn check_finite(data: &[f64], what: &str) -> Result<()> {
    if let Some(k) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{what} (entry {k})")));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: ChartGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: ChartGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "{} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        check_finite(&values, "scalar field")?;
        Ok(ScalarField { grid, values })
    }

    pub(crate) fn from_raw(grid: ChartGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        ScalarField { grid, values }
    }

    pub fn constant(grid: ChartGrid, c: f64) -> Self {
        ScalarField {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn zeros(grid: ChartGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Sample a function of the node position.
    pub fn from_fn<F>(grid: ChartGrid, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let n = grid.dim();
        let values = par_fill(grid.len(), 1, |node, out| {
            out[0] = f(&grid.position(node)[..n]);
        });
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &ChartGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map<F: Fn(f64) -> f64 + Sync>(&self, f: F) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.par_iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map<F: Fn(f64, f64) -> f64 + Sync>(
        &self,
        other: &ScalarField,
        f: F,
    ) -> Result<ScalarField> {
        if !self.grid.same_shape(&other.grid) {
            return Err(Error::GridMismatch);
        }
        let values = self
            .values
            .par_iter()
            .zip(other.values.par_iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(ScalarField {
            grid: self.grid,
            values,
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug)]
pub struct TensorField {
    grid: ChartGrid,
    valence: Vec<Valence>,
    layout: Arc<TensorLayout>,
    data: Vec<f64>,
}

impl TensorField {
    pub fn new(
        grid: ChartGrid,
        valence: Vec<Valence>,
        layout: Arc<TensorLayout>,
        data: Vec<f64>,
    ) -> Result<Self> {
        if layout.dim != grid.dim() {
            return Err(Error::Dimension(format!(
                "layout dim {} on a {}-d grid",
                layout.dim,
                grid.dim()
            )));
        }
        if valence.len() != layout.rank {
            return Err(Error::Valence(format!(
                "{} valence flags for rank {}",
                valence.len(),
                layout.rank
            )));
        }
        if data.len() != grid.len() * layout.ncomp() {
            return Err(Error::Dimension(format!(
                "{} components for {} nodes x {} stored",
                data.len(),
                grid.len(),
                layout.ncomp()
            )));
        }
        check_finite(&data, "tensor field")?;
        Ok(TensorField {
            grid,
            valence,
            layout,
            data,
        })
    }

    pub(crate) fn from_raw(
        grid: ChartGrid,
        valence: Vec<Valence>,
        layout: Arc<TensorLayout>,
        data: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(data.len(), grid.len() * layout.ncomp());
        TensorField {
            grid,
            valence,
            layout,
            data,
        }
    }

    pub fn zeros(grid: ChartGrid, valence: Vec<Valence>, layout: Arc<TensorLayout>) -> Self {
        let data = vec![0.0; grid.len() * layout.ncomp()];
        TensorField {
            grid,
            valence,
            layout,
            data,
        }
    }

    /// All-covariant field with the given symmetry.
    pub fn covariant(
        grid: ChartGrid,
        rank: usize,
        symmetry: Symmetry,
        data: Vec<f64>,
    ) -> Result<Self> {
        let layout = TensorLayout::new(grid.dim(), rank, symmetry);
        Self::new(grid, vec![Valence::Covariant; rank], layout, data)
    }

    pub fn grid(&self) -> &ChartGrid {
        &self.grid
    }

    pub fn rank(&self) -> usize {
        self.layout.rank
    }

    pub fn valence(&self) -> &[Valence] {
        &self.valence
    }

    pub fn layout(&self) -> &Arc<TensorLayout> {
        &self.layout
    }

    pub fn symmetry(&self) -> &Symmetry {
        &self.layout.symmetry
    }

    pub fn ncomp(&self) -> usize {
        self.layout.ncomp()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn node(&self, node: usize) -> &[f64] {
        let c = self.ncomp();
        &self.data[node * c..(node + 1) * c]
    }

    /// Component at a full multi-index (row-major over slots).
    pub fn get(&self, node: usize, full_index: usize) -> f64 {
        let (s, sign) = self.layout.lookup(full_index);
        sign * self.node(node)[s]
    }

    pub fn expand_node(&self, node: usize, out: &mut [f64]) {
        self.layout.expand(self.node(node), out);
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `self − other` for fields of identical grid, valence and layout.
    pub fn difference(&self, other: &TensorField) -> Result<TensorField> {
        if !self.grid.same_shape(&other.grid) {
            return Err(Error::GridMismatch);
        }
        if self.valence != other.valence
            || (self.layout.dim, self.layout.rank, &self.layout.symmetry)
                != (other.layout.dim, other.layout.rank, &other.layout.symmetry)
        {
            return Err(Error::Valence(
                "difference of tensors with different layouts".into(),
            ));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(TensorField::from_raw(
            self.grid,
            self.valence.clone(),
            self.layout.clone(),
            data,
        ))
    }
}

/// Layout of a symmetric 2-tensor (same packing as the metric).
pub fn sym2_layout(dim: usize) -> Arc<TensorLayout> {
    TensorLayout::new(dim, 2, Symmetry::Pairs(vec![SlotPair::sym(0, 1)]))
}

#[derive(Clone, Debug)]
pub struct MetricField {
    grid: ChartGrid,
    data: Vec<f64>,
}

impl MetricField {
    /// Validates finiteness and positive definiteness at every node.
    pub fn new(grid: ChartGrid, data: Vec<f64>) -> Result<Self> {
        let nc = sym_len(grid.dim());
        if data.len() != grid.len() * nc {
            return Err(Error::Dimension(format!(
                "{} metric components for {} nodes",
                data.len(),
                grid.len()
            )));
        }
        check_finite(&data, "metric")?;
        let m = MetricField { grid, data };
        m.check_positive()?;
        Ok(m)
    }

    pub(crate) fn from_raw(grid: ChartGrid, data: Vec<f64>) -> Self {
        MetricField { grid, data }
    }

    pub fn flat(grid: ChartGrid) -> Self {
        Self::conformal(grid, |_| 0.0)
    }

    /// `e^{2u} δ`.
    pub fn conformal<F>(grid: ChartGrid, u: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let n = grid.dim();
        Self::from_fn(grid, |x, m| {
            let s = (2.0 * u(x)).exp();
            for (i, row) in m.iter_mut().enumerate().take(n) {
                row[i] = s;
            }
        })
        .expect("conformal metric is positive definite")
    }

    /// Build from a function writing the full matrix at a position.
    pub fn from_fn<F>(grid: ChartGrid, f: F) -> Result<Self>
    where
        F: Fn(&[f64], &mut Mat) + Sync,
    {
        let n = grid.dim();
        let data = par_fill(grid.len(), sym_len(n), |node, out| {
            let mut m = linalg::ZERO;
            f(&grid.position(node)[..n], &mut m);
            linalg::pack(&m, n, out);
        });
        Self::new(grid, data)
    }

    pub fn check_positive(&self) -> Result<()> {
        let n = self.dim();
        let bad = (0..self.grid.len())
            .into_par_iter()
            .find_first(|&node| linalg::cholesky(&self.at(node), n).is_none());
        match bad {
            Some(node) => Err(Error::SingularMetric { node }),
            None => Ok(()),
        }
    }

    pub fn grid(&self) -> &ChartGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn ncomp(&self) -> usize {
        sym_len(self.dim())
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn node(&self, node: usize) -> &[f64] {
        let c = self.ncomp();
        &self.data[node * c..(node + 1) * c]
    }

    pub fn at(&self, node: usize) -> Mat {
        linalg::unpack(self.node(node), self.dim())
    }

    /// Inverse metric (packed) at every node.
    pub fn inverse(&self) -> Result<Vec<f64>> {
        let n = self.dim();
        let nc = self.ncomp();
        let mut out = vec![0.0; self.data.len()];
        out.par_chunks_mut(nc)
            .enumerate()
            .try_for_each(|(node, o)| {
                let (inv, _) =
                    linalg::spd_inverse(&self.at(node), n).ok_or(Error::SingularMetric { node })?;
                linalg::pack(&inv, n, o);
                Ok::<(), Error>(())
            })?;
        Ok(out)
    }

    pub fn sqrt_det(&self) -> Result<ScalarField> {
        let n = self.dim();
        let mut values = vec![0.0; self.grid.len()];
        values
            .par_iter_mut()
            .enumerate()
            .try_for_each(|(node, v)| {
                let (_, det) =
                    linalg::spd_inverse(&self.at(node), n).ok_or(Error::SingularMetric { node })?;
                *v = det.sqrt();
                Ok::<(), Error>(())
            })?;
        Ok(ScalarField::from_raw(self.grid, values))
    }

    /// `c · g` for a constant `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "metric scale {c} must be positive"
            )));
        }
        Ok(MetricField {
            grid: self.grid,
            data: self.data.iter().map(|v| v * c).collect(),
        })
    }

    /// Per-node (min, max) eigenvalue of `self⁻¹ other`.
    pub fn relative_eigen_range(&self, other: &MetricField) -> Result<Vec<(f64, f64)>> {
        if !self.grid.same_shape(&other.grid) {
            return Err(Error::GridMismatch);
        }
        let n = self.dim();
        (0..self.grid.len())
            .into_par_iter()
            .map(|node| {
                let ev = linalg::generalized_eigenvalues(&self.at(node), &other.at(node), n)
                    .ok_or(Error::SingularMetric { node })?;
                Ok((ev[0], ev[n - 1]))
            })
            .collect()
    }

    pub fn as_tensor(&self) -> TensorField {
        TensorField::from_raw(
            self.grid,
            vec![Valence::Covariant; 2],
            sym2_layout(self.dim()),
            self.data.clone(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Boundary;

    #[test]
    fn rejects_indefinite_and_non_finite() {
        let g = ChartGrid::new(&[8, 8], &[1.0, 1.0], &[0.0, 0.0], Boundary::Periodic).unwrap();
        let mut data = MetricField::flat(g).into_data();
        data[3 * 3 + 2] = -1.0;
        assert!(matches!(
            MetricField::new(g, data.clone()),
            Err(Error::SingularMetric { node: 3 })
        ));
        data[3 * 3 + 2] = f64::NAN;
        assert!(matches!(
            MetricField::new(g, data),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn inverse_metric_is_accurate() {
        let g = ChartGrid::periodic_cube(3, 8, 1.0).unwrap();
        let m = MetricField::from_fn(g, |x, m| {
            for i in 0..3 {
                m[i][i] = 2.0 + x[i].sin();
            }
            m[0][1] = 0.3 * x[2].cos();
            m[1][0] = m[0][1];
        })
        .unwrap();
        let inv = m.inverse().unwrap();
        for node in 0..g.len() {
            let a = m.at(node);
            let b = linalg::unpack(&inv[node * 6..node * 6 + 6], 3);
            assert!(linalg::max_abs_diff_identity(&linalg::mul(&a, &b, 3), 3) <= 1e-10);
        }
    }
}
