//! Finite-difference calculus, quadrature and norms on chart grids.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{par_fill, MetricField, ScalarField, TensorField};
use crate::grid::{sym_index, sym_len, ChartGrid, MAX_DIM};
use crate::linalg;
use crate::tensor::{flatten, unflatten, SlotPair, Symmetry, TensorLayout, Valence};

const CHUNK: usize = 4096;

/// Deterministic sum: fixed-size chunks summed in parallel, partials combined
/// in chunk order, so the result does not depend on the thread count.
pub fn det_sum(values: &[f64]) -> f64 {
    let partials: Vec<f64> = values
        .par_chunks(CHUNK)
        .map(|c| c.iter().sum::<f64>())
        .collect();
    partials.iter().sum()
}

/// Deterministic sum of `f(node)` over all nodes.
pub fn det_sum_nodes<F: Fn(usize) -> f64 + Sync>(len: usize, f: F) -> f64 {
    let chunks = len.div_ceil(CHUNK);
    let partials: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| (c * CHUNK..((c + 1) * CHUNK).min(len)).map(&f).sum::<f64>())
        .collect();
    partials.iter().sum()
}

fn ensure_finite(data: &[f64], what: &str) -> Result<()> {
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what.into()));
    }
    Ok(())
}

impl ScalarField {
    /// View as a rank-0 tensor field.
    pub fn as_tensor(&self) -> TensorField {
        let layout = TensorLayout::new(self.grid().dim(), 0, Symmetry::None);
        TensorField::from_raw(*self.grid(), vec![], layout, self.values().to_vec())
    }
}

/// Componentwise derivative `∂_axis` (order 1) or `∂²_axis` (order 2) of every
/// stored component; the layout is unchanged. See [`gradient`] for the version
/// that adds a covariant slot.
pub fn partial_derivative(field: &TensorField, axis: usize, order: u8) -> Result<TensorField> {
    let grid = *field.grid();
    if axis >= grid.dim() {
        return Err(Error::AxisOutOfRange {
            axis,
            dim: grid.dim(),
        });
    }
    if order != 1 && order != 2 {
        return Err(Error::InvalidParameter(format!(
            "derivative order {order} not in {{1, 2}}"
        )));
    }
    ensure_finite(field.data(), "derivative input")?;
    let nc = field.ncomp();
    let src = field.data();
    let data = par_fill(grid.len(), nc, |node, out| {
        let st = grid.local_stencil(node);
        let taps = if order == 1 { st.d1(axis) } else { st.d2(axis) };
        for t in taps {
            for c in 0..nc {
                out[c] += t.weight * src[t.node * nc + c];
            }
        }
    });
    Ok(TensorField::from_raw(
        grid,
        field.valence().to_vec(),
        field.layout().clone(),
        data,
    ))
}

pub fn partial_derivative_scalar(f: &ScalarField, axis: usize, order: u8) -> Result<ScalarField> {
    let t = partial_derivative(&f.as_tensor(), axis, order)?;
    Ok(ScalarField::from_raw(*f.grid(), t.data().to_vec()))
}

/// `∂_a T_{...}` with the derivative index as a new leading covariant slot.
/// Symmetric/antisymmetric pairs of the input are carried over.
pub fn gradient(field: &TensorField) -> Result<TensorField> {
    let grid = *field.grid();
    let n = grid.dim();
    let sym = match field.symmetry() {
        Symmetry::None => Symmetry::None,
        Symmetry::Pairs(p) => Symmetry::Pairs(
            p.iter()
                .map(|s| SlotPair {
                    a: s.a + 1,
                    b: s.b + 1,
                    antisymmetric: s.antisymmetric,
                })
                .collect(),
        ),
        Symmetry::Riemann => {
            return Err(Error::Valence(
                "gradient of riemann-type storage is not supported".into(),
            ))
        }
    };
    ensure_finite(field.data(), "gradient input")?;
    let rank = field.rank();
    let layout = TensorLayout::new(n, rank + 1, sym);
    let in_layout = field.layout().clone();
    let nc_in = field.ncomp();
    let nc = layout.ncomp();
    let src = field.data();
    let data = par_fill(grid.len(), nc, |node, out| {
        let st = grid.local_stencil(node);
        let mut d = vec![0.0; n * nc_in];
        st.first(src, nc_in, &mut d);
        for s in 0..nc {
            let f = layout.representative(s);
            let idx = unflatten(f, n, rank + 1);
            let (slot, sign) = in_layout.lookup(flatten(&idx[1..], n));
            out[s] = sign * d[idx[0] * nc_in + slot];
        }
    });
    let mut valence = vec![Valence::Covariant];
    valence.extend_from_slice(field.valence());
    Ok(TensorField::from_raw(grid, valence, layout, data))
}

/// Per-node quadrature weight `√det g · Πh`, halved per frozen-chart edge axis
/// (trapezoidal rule).
pub fn volume_weights(g: &MetricField) -> Result<Vec<f64>> {
    let grid = *g.grid();
    let sd = g.sqrt_det()?;
    let cell = grid.cell_volume();
    Ok(sd
        .values()
        .par_iter()
        .enumerate()
        .map(|(node, s)| s * cell * trapezoid_factor(&grid, node))
        .collect())
}

pub fn trapezoid_factor(grid: &ChartGrid, node: usize) -> f64 {
    if grid.is_periodic() {
        return 1.0;
    }
    let idx = grid.multi_index(node);
    let mut w = 1.0;
    for a in 0..grid.dim() {
        if idx[a] == 0 || idx[a] + 1 == grid.extents()[a] {
            w *= 0.5;
        }
    }
    w
}

pub fn integrate_weighted(values: &[f64], weights: &[f64]) -> f64 {
    det_sum_nodes(values.len(), |k| values[k] * weights[k])
}

/// `∫ f dV_g`.
pub fn integrate(field: &ScalarField, weight: &MetricField) -> Result<f64> {
    if !field.grid().same_shape(weight.grid()) {
        return Err(Error::GridMismatch);
    }
    ensure_finite(field.values(), "integrand")?;
    let w = volume_weights(weight)?;
    Ok(integrate_weighted(field.values(), &w))
}

pub fn lp_norm(field: &ScalarField, p: f64, weight: &MetricField) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "p = {p} must be at least 1"
        )));
    }
    let pw = field.map(|v| v.abs().powf(p));
    Ok(integrate(&pw, weight)?.powf(1.0 / p))
}

/// Raise (covariant → contravariant) or lower one slot of a full component array.
fn move_slot(full: &[f64], n: usize, rank: usize, slot: usize, m: &linalg::Mat, out: &mut [f64]) {
    let stride = n.pow((rank - 1 - slot) as u32);
    for (f, o) in out.iter_mut().enumerate() {
        let i = (f / stride) % n;
        let base = f - i * stride;
        let mut s = 0.0;
        for b in 0..n {
            s += m[i][b] * full[base + b * stride];
        }
        *o = s;
    }
}

/// `|T|_g` at one node from its full component array.
pub fn tensor_norm_full(
    full: &[f64],
    valence: &[Valence],
    g: &linalg::Mat,
    ginv: &linalg::Mat,
    n: usize,
) -> f64 {
    let rank = valence.len();
    let mut cur = full.to_vec();
    let mut tmp = vec![0.0; full.len()];
    for (slot, v) in valence.iter().enumerate() {
        let m = match v {
            Valence::Covariant => ginv,
            Valence::Contravariant => g,
        };
        move_slot(&cur, n, rank, slot, m, &mut tmp);
        std::mem::swap(&mut cur, &mut tmp);
    }
    let s: f64 = full.iter().zip(&cur).map(|(a, b)| a * b).sum();
    s.max(0.0).sqrt()
}

/// Pointwise `√(T · T)` with all indices contracted through `g`.
pub fn pointwise_tensor_norm(t: &TensorField, g: &MetricField) -> Result<ScalarField> {
    if !t.grid().same_shape(g.grid()) {
        return Err(Error::GridMismatch);
    }
    if t.valence().len() != t.rank() {
        return Err(Error::Valence("valence list does not match rank".into()));
    }
    let n = g.dim();
    let full_len = t.layout().full_len();
    let mut values = vec![0.0; g.grid().len()];
    values
        .par_iter_mut()
        .enumerate()
        .try_for_each(|(node, v)| {
            let gm = g.at(node);
            let (gi, _) = linalg::spd_inverse(&gm, n).ok_or(Error::SingularMetric { node })?;
            let mut full = vec![0.0; full_len];
            t.expand_node(node, &mut full);
            *v = tensor_norm_full(&full, t.valence(), &gm, &gi, n);
            Ok::<(), Error>(())
        })?;
    Ok(ScalarField::from_raw(*g.grid(), values))
}

/// Per-node first derivatives of the packed metric, `out[a * sym_len + p]`.
pub fn metric_first_derivatives(g: &MetricField, node: usize, out: &mut [f64]) {
    let st = g.grid().local_stencil(node);
    st.first(g.data(), g.ncomp(), out);
}

/// Contracted Christoffel symbols `g^{ab} Γ^c_{ab}` at one node.
pub fn contracted_christoffel(g: &MetricField, node: usize, ginv: &linalg::Mat) -> [f64; MAX_DIM] {
    let n = g.dim();
    let nc = sym_len(n);
    let mut dg = [0.0; MAX_DIM * 10];
    metric_first_derivatives(g, node, &mut dg);
    let d = |c: usize, i: usize, j: usize| dg[c * nc + sym_index(i, j)];
    // Γ_{l a b} contracted with g^{ab}: g^{ab}(∂_a g_bl - ½ ∂_l g_ab)
    let mut low = [0.0; MAX_DIM];
    for (l, lv) in low.iter_mut().enumerate().take(n) {
        let mut s = 0.0;
        for a in 0..n {
            for b in 0..n {
                s += ginv[a][b] * (d(a, b, l) - 0.5 * d(l, a, b));
            }
        }
        *lv = s;
    }
    let mut out = [0.0; MAX_DIM];
    for c in 0..n {
        out[c] = (0..n).map(|l| ginv[c][l] * low[l]).sum();
    }
    out
}

/// Laplace–Beltrami operator `Δf = g^{ab}(∂_a∂_b f − Γ^c_{ab}∂_c f)`.
pub fn laplacian(f: &ScalarField, g: &MetricField) -> Result<ScalarField> {
    if !f.grid().same_shape(g.grid()) {
        return Err(Error::GridMismatch);
    }
    let grid = *g.grid();
    let n = grid.dim();
    let src = f.values();
    let mut values = vec![0.0; grid.len()];
    values
        .par_iter_mut()
        .enumerate()
        .try_for_each(|(node, v)| {
            let (gi, _) =
                linalg::spd_inverse(&g.at(node), n).ok_or(Error::SingularMetric { node })?;
            let st = grid.local_stencil(node);
            let mut d1 = [0.0; MAX_DIM];
            let mut d2 = [0.0; 10];
            st.first(src, 1, &mut d1);
            st.second(src, 1, &mut d2);
            let gam = contracted_christoffel(g, node, &gi);
            let mut s = 0.0;
            for a in 0..n {
                for b in 0..n {
                    s += gi[a][b] * d2[sym_index(a, b)];
                }
                s -= gam[a] * d1[a];
            }
            *v = s;
            Ok::<(), Error>(())
        })?;
    Ok(ScalarField::from_raw(grid, values))
}

/// `g(∇f, ∇h)` pointwise, using the interior fourth-order gradient.
pub fn gradient_dot(f: &ScalarField, h: &ScalarField, g: &MetricField) -> Result<ScalarField> {
    if !f.grid().same_shape(g.grid()) || !h.grid().same_shape(g.grid()) {
        return Err(Error::GridMismatch);
    }
    let grid = *g.grid();
    let n = grid.dim();
    let mut values = vec![0.0; grid.len()];
    values
        .par_iter_mut()
        .enumerate()
        .try_for_each(|(node, v)| {
            let (gi, _) =
                linalg::spd_inverse(&g.at(node), n).ok_or(Error::SingularMetric { node })?;
            let st = grid.local_stencil(node);
            let mut df = [0.0; MAX_DIM];
            let mut dh = [0.0; MAX_DIM];
            st.first(f.values(), 1, &mut df);
            st.first(h.values(), 1, &mut dh);
            let mut s = 0.0;
            for a in 0..n {
                for b in 0..n {
                    s += gi[a][b] * df[a] * dh[b];
                }
            }
            *v = s;
            Ok::<(), Error>(())
        })?;
    Ok(ScalarField::from_raw(grid, values))
}

pub fn gradient_norm_sq(f: &ScalarField, g: &MetricField) -> Result<ScalarField> {
    gradient_dot(f, f, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Boundary;
    use std::f64::consts::PI;

    fn sin_field(n: usize) -> ScalarField {
        let g = ChartGrid::new(
            &[n, 8],
            &[2.0 * PI / n as f64, 1.0],
            &[0.0, 0.0],
            Boundary::Periodic,
        )
        .unwrap();
        ScalarField::from_fn(g, |x| x[0].sin())
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        let g = ChartGrid::frozen_cube(3, 9, 0.0, 1.0).unwrap();
        let f = ScalarField::constant(g, 3.5);
        for axis in 0..3 {
            for order in [1, 2] {
                assert!(
                    partial_derivative_scalar(&f, axis, order)
                        .unwrap()
                        .max_abs()
                        < 1e-10
                );
            }
        }
        assert!(matches!(
            partial_derivative_scalar(&f, 3, 1),
            Err(Error::AxisOutOfRange { axis: 3, dim: 3 })
        ));
    }

    #[test]
    fn sine_derivative_oracle() {
        // The fourth-order stencil's leading error is h⁴/30 ≈ 3.1e-6 at
        // h = 2π/64; 1e-6 is reached from h = 2π/96 on.
        for (n, tol) in [(64usize, 3.2e-6), (128, 1e-6)] {
            let f = sin_field(n);
            let d = partial_derivative_scalar(&f, 0, 1).unwrap();
            let err = (0..f.grid().len())
                .map(|k| (d.values()[k] - f.grid().position(k)[0].cos()).abs())
                .fold(0.0, f64::max);
            assert!(err <= tol, "n = {n}: {err}");
        }
    }

    #[test]
    fn quadratic_second_derivative_on_frozen_chart() {
        let g = ChartGrid::frozen_cube(2, 12, -1.0, 2.0).unwrap();
        let f = ScalarField::from_fn(g, |x| x[0] * x[0]);
        let d = partial_derivative_scalar(&f, 0, 2).unwrap();
        assert!(d.values().iter().all(|v| (v - 2.0).abs() < 1e-8));
    }

    #[test]
    fn fourth_order_convergence() {
        let errs: Vec<f64> = [16usize, 32, 64]
            .iter()
            .map(|&n| {
                let f = sin_field(n);
                let d = partial_derivative_scalar(&f, 0, 1).unwrap();
                (0..f.grid().len())
                    .map(|k| (d.values()[k] - f.grid().position(k)[0].cos()).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() >= 3.5);
        }
    }

    #[test]
    fn integrals() {
        let g = ChartGrid::periodic_cube(4, 8, 1.0).unwrap();
        let one = ScalarField::constant(g, 1.0);
        assert!((integrate(&one, &MetricField::flat(g)).unwrap() - 1.0).abs() < 1e-12);
        assert!(
            (lp_norm(&ScalarField::constant(g, 2.0), 3.0, &MetricField::flat(g)).unwrap() - 2.0)
                .abs()
                < 1e-12
        );

        let f = sin_field(64);
        let flat = MetricField::flat(*f.grid());
        let sq = f.map(|v| v * v);
        // The second axis has length 8 with h = 1.
        assert!((integrate(&sq, &flat).unwrap() / 8.0 - PI).abs() < 1e-8);
        assert!((lp_norm(&f, 2.0, &flat).unwrap() / 8f64.sqrt() - PI.sqrt()).abs() < 1e-8);
        let l4 = lp_norm(&f, 4.0, &flat).unwrap();
        let alt = lp_norm(&sq, 2.0, &flat).unwrap().sqrt();
        assert!((l4 - alt).abs() < 1e-12);
    }

    #[test]
    fn conformal_volume_matches_1d_quadrature() {
        let g = ChartGrid::periodic_cube(2, 64, 2.0 * PI).unwrap();
        let m = MetricField::conformal(g, |x| 0.1 * x[0].sin());
        let vol = integrate(&ScalarField::constant(g, 1.0), &m).unwrap();
        // ∫∫ e^{2u} = 2π ∫ e^{0.2 sin x} dx = 4π² I₀(0.2)
        let n = 20000;
        let h = 2.0 * PI / n as f64;
        let oracle: f64 = (0..n)
            .map(|k| (0.2 * (k as f64 * h).sin()).exp() * h)
            .sum::<f64>()
            * 2.0
            * PI;
        assert!((vol - oracle).abs() < 1e-6);
    }

    #[test]
    fn tensor_norms() {
        let g = ChartGrid::periodic_cube(4, 8, 1.0).unwrap();
        let m = MetricField::conformal(g, |x| 0.2 * (2.0 * PI * x[1]).sin());
        let layout = TensorLayout::new(4, 2, Symmetry::None);
        let data = par_fill(g.len(), 16, |_, o| {
            for i in 0..4 {
                o[i * 4 + i] = 1.0;
            }
        });
        let id = TensorField::new(
            g,
            vec![Valence::Contravariant, Valence::Covariant],
            layout,
            data,
        )
        .unwrap();
        let nrm = pointwise_tensor_norm(&id, &m).unwrap();
        assert!(nrm.values().iter().all(|v| (v - 2.0).abs() < 1e-12));
        let gt = m.as_tensor();
        let nrm = pointwise_tensor_norm(&gt, &m).unwrap();
        assert!(nrm.values().iter().all(|v| (v - 2.0).abs() < 1e-12));
    }

    #[test]
    fn integration_by_parts_defect_is_small() {
        let g = ChartGrid::periodic_cube(2, 48, 2.0 * PI).unwrap();
        let m = MetricField::conformal(g, |x| 0.2 * x[0].cos() * x[1].sin());
        let psi = ScalarField::from_fn(g, |x| (x[0] + 2.0 * x[1]).sin());
        let f = ScalarField::from_fn(g, |x| 1.0 + 0.3 * (2.0 * x[0]).cos());
        let a = integrate(&gradient_dot(&psi, &f, &m).unwrap(), &m).unwrap();
        let lap = laplacian(&f, &m).unwrap();
        let b = integrate(&psi.zip_map(&lap, |p, l| p * l).unwrap(), &m).unwrap();
        let h = g.max_spacing();
        assert!((a + b).abs() <= 10.0 * h * h, "{}", a + b);
    }

    #[test]
    fn gradient_carries_symmetry() {
        let g = ChartGrid::periodic_cube(3, 8, 1.0).unwrap();
        let m = MetricField::conformal(g, |x| 0.1 * (2.0 * PI * x[0]).sin());
        let d = gradient(&m.as_tensor()).unwrap();
        assert_eq!(d.ncomp(), 18);
        assert_eq!(d.valence().len(), 3);
    }
}
