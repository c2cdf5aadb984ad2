use super::interp::interpolate;
use super::{
    evolving, rk4, stage_failure, try_fill, validate, vector_layout, FailureKind, FlowState,
};
use crate::curvature::{ricci_at, PointGeometry};
use crate::cutoff::{CutoffFunction, CutoffShape};
use crate::error::{Error, Result};
use crate::field::{sym2_layout, MetricField, TensorField};
use crate::grid::{sym_index, sym_len, ChartGrid, MAX_DIM};
use crate::linalg;
use crate::tensor::Valence;

/// `X^p = −g^{pi}g^{kl}(g_{ik,l} − ½g_{kl,i})` with commas denoting
/// `ĝ`-covariant derivatives.
pub fn deturck_vector_field(g: &MetricField, hat_g: &MetricField) -> Result<TensorField> {
    let grid = *g.grid();
    if !hat_g.grid().same_shape(&grid) {
        return Err(Error::GridMismatch);
    }
    let n = grid.dim();
    let data = try_fill(grid.len(), n, |node, out| {
        let (Ok(pg), Ok(hat)) = (
            PointGeometry::new(g, node, false),
            PointGeometry::new(hat_g, node, false),
        ) else {
            return false;
        };
        // cov[k][j][l] = g_{jl,k}, written through h = g − ĝ because ĝ_{jl,k} = 0.
        let mut cov = [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM];
        for k in 0..n {
            for j in 0..n {
                for l in 0..n {
                    let mut v = pg.dg[k][j][l] - hat.dg[k][j][l];
                    for s in 0..n {
                        v -= (pg.g[s][l] - hat.g[s][l]) * hat.gamma[s][k][j]
                            + (pg.g[j][s] - hat.g[j][s]) * hat.gamma[s][k][l];
                    }
                    cov[k][j][l] = v;
                }
            }
        }
        for (p, o) in out.iter_mut().enumerate() {
            let mut x = 0.0;
            for i in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        x -= pg.gi[p][i] * pg.gi[k][l] * (cov[l][i][k] - 0.5 * cov[i][k][l]);
                    }
                }
            }
            *o = x;
        }
        true
    })
    .map_err(|node| Error::SingularMetric { node })?;
    TensorField::new(grid, vec![Valence::Contravariant], vector_layout(n), data)
}

/// `(L_X g)_{kl} = ∂_k X^p g_{pl} + ∂_l X^p g_{kp} + X^p ∂_p g_{kl}`.
pub fn lie_derivative_metric(x: &TensorField, g: &MetricField) -> Result<TensorField> {
    let grid = *g.grid();
    if !x.grid().same_shape(&grid) {
        return Err(Error::GridMismatch);
    }
    if x.valence() != [Valence::Contravariant] {
        return Err(Error::Valence(
            "Lie derivative needs a contravariant vector field".into(),
        ));
    }
    let n = grid.dim();
    let nc = sym_len(n);
    let data = try_fill(grid.len(), nc, |node, out| {
        let st = grid.local_stencil(node);
        let mut dx = [0.0; MAX_DIM * MAX_DIM];
        st.first(x.data(), n, &mut dx[..n * n]);
        let mut dg = [0.0; MAX_DIM * 10];
        st.first(g.data(), nc, &mut dg[..n * nc]);
        let gm = g.at(node);
        let xv = x.node(node);
        for k in 0..n {
            for l in 0..=k {
                let mut v = 0.0;
                for p in 0..n {
                    v += dx[k * n + p] * gm[p][l]
                        + dx[l * n + p] * gm[k][p]
                        + xv[p] * dg[p * nc + sym_index(k, l)];
                }
                out[sym_index(k, l)] = v;
            }
        }
        out.iter().all(|v| v.is_finite())
    })
    .map_err(|node| Error::NonFinite(format!("Lie derivative at node {node}")))?;
    TensorField::new(grid, vec![Valence::Covariant; 2], sym2_layout(n), data)
}

/// Approximate `Φ⁻¹(y)` for `Φ = id + D` by fixed-point iteration.
fn inverse_map(grid: &ChartGrid, disp: &[f64], node: usize) -> [f64; MAX_DIM] {
    let n = grid.dim();
    let y = grid.position(node);
    let mut x = y;
    for a in 0..n {
        x[a] -= disp[node * n + a];
    }
    let mut d = [0.0; MAX_DIM];
    for _ in 0..3 {
        if !interpolate(grid, disp, n, &x[..n], &mut d[..n]) {
            break;
        }
        for a in 0..n {
            x[a] = y[a] - d[a];
        }
    }
    x
}

/// `ψ² = (φ∘Φ⁻¹)² + ε²` at every node.
fn psi_squared(grid: &ChartGrid, cutoff: &CutoffFunction, disp: &[f64], epsilon: f64) -> Vec<f64> {
    let e2 = epsilon * epsilon;
    match cutoff.shape {
        CutoffShape::Constant(c) => vec![c * c + e2; grid.len()],
        CutoffShape::Ball { .. } => {
            let n = grid.dim();
            crate::field::par_fill(grid.len(), 1, |node, out| {
                let x = inverse_map(grid, disp, node);
                out[0] = cutoff.eval(grid, &x[..n]).powi(2) + e2;
            })
        }
    }
}

struct GaugedRhs<'a> {
    grid: ChartGrid,
    hat_g: &'a MetricField,
    cutoff: &'a CutoffFunction,
    epsilon: f64,
    t: f64,
}

impl GaugedRhs<'_> {
    /// `(∂ḡ/∂t, ∂D/∂t)` with `∂ḡ/∂t = ψ²(−2Ric(ḡ) − L_Xḡ) − P` and
    /// `∂D/∂t = (ψ²X)(x + D(x))`.
    fn eval(&self, y: &[f64]) -> Result<Vec<f64>> {
        let grid = self.grid;
        let n = grid.dim();
        let nc = sym_len(n);
        let m = grid.len() * nc;
        let gbar = MetricField::from_raw(grid, y[..m].to_vec());
        let disp = &y[m..];
        let singular = |e: Error| match e {
            Error::SingularMetric { node } => {
                stage_failure(FailureKind::EigenvalueFloor, self.t, Some(node), f64::NAN)
            }
            other => other,
        };
        let x = deturck_vector_field(&gbar, self.hat_g).map_err(singular)?;
        let lie = lie_derivative_metric(&x, &gbar)?;
        let psi2 = psi_squared(&grid, self.cutoff, disp, self.epsilon);
        let mut rhs = try_fill(grid.len(), nc, |node, out| {
            if !evolving(&grid, node) {
                return true;
            }
            let mut dpsi = [0.0; MAX_DIM];
            grid.local_stencil(node).first(&psi2, 1, &mut dpsi[..n]);
            let w = psi2[node];
            if w == 0.0 && dpsi[..n].iter().all(|&v| v == 0.0) {
                return true;
            }
            let mut ric = [0.0; 10];
            if ricci_at(&gbar, node, &mut ric[..nc]).is_err() {
                return false;
            }
            let gm = gbar.at(node);
            let xv = x.node(node);
            let xlow: Vec<f64> = (0..n)
                .map(|j| (0..n).map(|p| gm[j][p] * xv[p]).sum())
                .collect();
            let l = lie.node(node);
            for i in 0..n {
                for j in 0..=i {
                    let s = sym_index(i, j);
                    out[s] = w * (-2.0 * ric[s] - l[s]) - (dpsi[i] * xlow[j] + dpsi[j] * xlow[i]);
                }
            }
            true
        })
        .map_err(|node| {
            stage_failure(FailureKind::EigenvalueFloor, self.t, Some(node), f64::NAN)
        })?;
        let v: Vec<f64> = x
            .data()
            .iter()
            .enumerate()
            .map(|(k, &xv)| psi2[k / n] * xv)
            .collect();
        let dd = try_fill(grid.len(), n, |node, out| {
            if !evolving(&grid, node) {
                return true;
            }
            let mut p = grid.position(node);
            for a in 0..n {
                p[a] += disp[node * n + a];
            }
            interpolate(&grid, &v, n, &p[..n], out)
        })
        .map_err(|node| {
            stage_failure(
                FailureKind::DisplacementOutOfGrid,
                self.t,
                Some(node),
                f64::NAN,
            )
        })?;
        rhs.extend_from_slice(&dd);
        Ok(rhs)
    }
}

/// One RK4 step of the gauged system together with the gauge ODE
/// `dΦ/dt = ψ²X(Φ)`.
pub fn step_deturck(state: &FlowState, cutoff: &CutoffFunction, dt: f64) -> Result<FlowState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "time step {dt} must be positive"
        )));
    }
    let grid = *state.grid();
    if !cutoff.grid().same_shape(&grid) {
        return Err(Error::GridMismatch);
    }
    let n = grid.dim();
    let nc = sym_len(n);
    let m = grid.len() * nc;
    let state = if state.gauge_displacement.is_some() {
        state.clone()
    } else {
        state.clone().with_gauge()
    };
    let disp = state
        .gauge_displacement
        .as_ref()
        .expect("gauge initialized");
    let mut y = state.g.data().to_vec();
    y.extend_from_slice(disp.data());
    let rhs = GaugedRhs {
        grid,
        hat_g: &state.hat_g,
        cutoff,
        epsilon: state.epsilon,
        t: state.t,
    };
    let next = rk4(&y, dt, |s| rhs.eval(s))?;
    let t = state.t + dt;
    validate(&next[..m], &state.g0, state.eigen_floor, t)?;
    for node in 0..grid.len() {
        let mut p = grid.position(node);
        for a in 0..n {
            let k = m + node * n + a;
            let moved = (next[k] - y[k]).abs() / grid.spacing()[a];
            if !next[k].is_finite() {
                return Err(stage_failure(
                    FailureKind::NonFinite,
                    t,
                    Some(node),
                    next[k],
                ));
            }
            if moved > 1.0 {
                return Err(stage_failure(
                    FailureKind::GaugeMotion,
                    t,
                    Some(node),
                    moved,
                ));
            }
            p[a] += next[k];
        }
        if !grid.is_periodic() {
            let q = grid.fractional_index(&p[..n]);
            if (0..n).any(|a| q[a] < 0.0 || q[a] > (grid.extents()[a] - 1) as f64) {
                return Err(stage_failure(
                    FailureKind::DisplacementOutOfGrid,
                    t,
                    Some(node),
                    q[0],
                ));
            }
        }
    }
    let mut out = state.clone();
    out.g = MetricField::from_raw(grid, next[..m].to_vec());
    out.gauge_displacement = Some(TensorField::new(
        grid,
        vec![Valence::Contravariant],
        vector_layout(n),
        next[m..].to_vec(),
    )?);
    out.t = t;
    out.dt_last = dt;
    Ok(out)
}

/// `Φ_t^*ḡ`: `g_{ij}(x) = ∂_iΦ^a ∂_jΦ^b ḡ_{ab}(Φ(x))` with cubic interpolation
/// of `ḡ` and a finite-differenced Jacobian of the displacement.
pub fn gauge_pullback(state: &FlowState) -> Result<MetricField> {
    let Some(disp) = &state.gauge_displacement else {
        return Ok(state.g.clone());
    };
    let grid = *state.grid();
    let n = grid.dim();
    let nc = sym_len(n);
    let gbar = state.g.data();
    let d = disp.data();
    let data = try_fill(grid.len(), nc, |node, out| {
        let mut p = grid.position(node);
        for a in 0..n {
            p[a] += d[node * n + a];
        }
        let mut gb = [0.0; 10];
        if !interpolate(&grid, gbar, nc, &p[..n], &mut gb[..nc]) {
            return false;
        }
        let gm = linalg::unpack(&gb[..nc], n);
        let mut dd = [0.0; MAX_DIM * MAX_DIM];
        grid.local_stencil(node).first(d, n, &mut dd[..n * n]);
        // jac[a][i] = ∂_i Φ^a
        let mut jac = linalg::identity(n);
        for i in 0..n {
            for a in 0..n {
                jac[a][i] += dd[i * n + a];
            }
        }
        for i in 0..n {
            for j in 0..=i {
                let mut v = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        v += jac[a][i] * jac[b][j] * gm[a][b];
                    }
                }
                out[sym_index(i, j)] = v;
            }
        }
        true
    })
    .map_err(|node| Error::DisplacementOutOfGrid { node })?;
    MetricField::new(grid, data)
}
