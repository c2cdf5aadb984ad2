//! Radial cutoff functions with cached derivative data.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::calculus::{det_sum_nodes, partial_derivative_scalar};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{ChartGrid, COLLAR, MAX_DIM};

/// Smallest admissible support radius, in grid spacings.
pub const MIN_RADIUS_CELLS: f64 = 8.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// `cos²(πρ/2)` on the ramp; max slope `π/r`.
    #[default]
    Cos2,
    /// `1 − (6ρ⁵ − 15ρ⁴ + 10ρ³)`; max slope `15/(4r)`, two continuous derivatives.
    Quintic,
}

impl Profile {
    /// Profile value for ramp coordinate `rho ∈ [0, 1]`.
    pub fn value(self, rho: f64) -> f64 {
        let rho = rho.clamp(0.0, 1.0);
        match self {
            Profile::Cos2 => (0.5 * PI * rho).cos().powi(2),
            Profile::Quintic => 1.0 - rho * rho * rho * (10.0 - 15.0 * rho + 6.0 * rho * rho),
        }
    }

    /// `C_prof` with `‖∇φ‖∞ = C_prof / r`.
    pub fn slope_constant(self) -> f64 {
        match self {
            Profile::Cos2 => PI,
            Profile::Quintic => 3.75,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffShape {
    /// `φ = 1` for coordinate distance `≤ r/2`, `0` for `≥ r`.
    Ball {
        center: [f64; MAX_DIM],
        radius: f64,
        profile: Profile,
    },
    Constant(f64),
}

#[derive(Clone, Debug)]
pub struct CutoffFunction {
    pub shape: CutoffShape,
    pub phi: ScalarField,
    /// Coordinate-gradient magnitude `|∇φ|`.
    pub grad_norm: ScalarField,
    /// Coordinate Laplacian `Σ ∂²_a φ`.
    pub laplacian: ScalarField,
    pub sup_grad: f64,
    /// `r` for balls, `+∞` for constants.
    pub support_radius: f64,
    pub center: Option<usize>,
}

impl CutoffFunction {
    /// Evaluate at an arbitrary chart point (used for `φ ∘ Φ⁻¹`).
    pub fn eval(&self, grid: &ChartGrid, x: &[f64]) -> f64 {
        match self.shape {
            CutoffShape::Constant(c) => c,
            CutoffShape::Ball {
                center,
                radius,
                profile,
            } => {
                let d = grid.displacement(&center[..grid.dim()], x);
                let s = d[..grid.dim()].iter().map(|v| v * v).sum::<f64>().sqrt();
                ball_value(s, radius, profile)
            }
        }
    }

    pub fn grid(&self) -> &ChartGrid {
        self.phi.grid()
    }

    /// Nodes with `φ > 0`.
    pub fn support_mask(&self) -> Vec<bool> {
        self.phi.values().iter().map(|&v| v > 0.0).collect()
    }

    pub fn support_count(&self) -> usize {
        det_sum_nodes(self.phi.values().len(), |k| {
            (self.phi.values()[k] > 0.0) as u8 as f64
        }) as usize
    }
}

fn ball_value(s: f64, r: f64, profile: Profile) -> f64 {
    if s <= 0.5 * r {
        1.0
    } else if s >= r {
        0.0
    } else {
        profile.value((s - 0.5 * r) / (0.5 * r))
    }
}

fn derived(grid: ChartGrid, phi: ScalarField) -> Result<(ScalarField, ScalarField, f64)> {
    let n = grid.dim();
    let mut g2 = vec![0.0; grid.len()];
    let mut lap = vec![0.0; grid.len()];
    for a in 0..n {
        let d1 = partial_derivative_scalar(&phi, a, 1)?;
        let d2 = partial_derivative_scalar(&phi, a, 2)?;
        for k in 0..grid.len() {
            g2[k] += d1.values()[k].powi(2);
            lap[k] += d2.values()[k];
        }
    }
    let grad = ScalarField::new(grid, g2.into_iter().map(f64::sqrt).collect())?;
    let sup = grad.max_abs();
    Ok((grad, ScalarField::new(grid, lap)?, sup))
}

/// Radial cutoff centered on a grid node, with background (coordinate) distance.
pub fn make_cutoff(
    grid: &ChartGrid,
    center: usize,
    r: f64,
    profile: Profile,
) -> Result<CutoffFunction> {
    let grid = *grid;
    if center >= grid.len() {
        return Err(Error::Cutoff(format!(
            "center node {center} outside the grid"
        )));
    }
    if !(r.is_finite() && r >= MIN_RADIUS_CELLS * grid.max_spacing() * (1.0 - 1e-12)) {
        return Err(Error::Cutoff(format!(
            "radius {r} is under-resolved (needs at least {MIN_RADIUS_CELLS} spacings = {})",
            MIN_RADIUS_CELLS * grid.max_spacing()
        )));
    }
    let idx = grid.multi_index(center);
    for a in 0..grid.dim() {
        let cells = r / grid.spacing()[a];
        if grid.is_periodic() {
            if r >= 0.5 * grid.period(a) {
                return Err(Error::Cutoff(format!(
                    "radius {r} reaches half the period on axis {a}"
                )));
            }
        } else {
            let room = idx[a].min(grid.extents()[a] - 1 - idx[a]) as f64;
            if cells + COLLAR as f64 > room {
                return Err(Error::Cutoff(format!(
                    "ball of radius {r} does not fit with a {COLLAR}-node margin on axis {a}"
                )));
            }
        }
    }
    let mut c = [0.0; MAX_DIM];
    c[..grid.dim()].copy_from_slice(&grid.position(center)[..grid.dim()]);
    let shape = CutoffShape::Ball {
        center: c,
        radius: r,
        profile,
    };
    let n = grid.dim();
    let phi = ScalarField::from_fn(grid, |x| {
        let d = grid.displacement(&c[..n], x);
        ball_value(d[..n].iter().map(|v| v * v).sum::<f64>().sqrt(), r, profile)
    });
    let (grad_norm, laplacian, sup_grad) = derived(grid, phi.clone())?;
    Ok(CutoffFunction {
        shape,
        phi,
        grad_norm,
        laplacian,
        sup_grad,
        support_radius: r,
        center: Some(center),
    })
}

/// `φ ≡ c` (no localization).
pub fn constant_cutoff(grid: &ChartGrid, c: f64) -> Result<CutoffFunction> {
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::Cutoff(format!("constant cutoff {c} outside [0, 1]")));
    }
    Ok(CutoffFunction {
        shape: CutoffShape::Constant(c),
        phi: ScalarField::constant(*grid, c),
        grad_norm: ScalarField::zeros(*grid),
        laplacian: ScalarField::zeros(*grid),
        sup_grad: 0.0,
        support_radius: f64::INFINITY,
        center: None,
    })
}

/// Node closest to the chart center.
pub fn center_node(grid: &ChartGrid) -> usize {
    let idx: Vec<usize> = grid.extents().iter().map(|&e| e / 2).collect();
    grid.index(&idx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_and_support() {
        let grid = ChartGrid::frozen_cube(2, 65, -2.0, 2.0).unwrap();
        let c = center_node(&grid);
        let cut = make_cutoff(&grid, c, 1.0, Profile::Cos2).unwrap();
        assert_eq!(cut.phi.values()[c], 1.0);
        for k in 0..grid.len() {
            let x = grid.position(k);
            let s = (x[0] * x[0] + x[1] * x[1]).sqrt();
            let v = cut.phi.values()[k];
            assert!((0.0..=1.0).contains(&v));
            if s >= 1.0 {
                assert_eq!(v, 0.0);
            }
            if s <= 0.5 {
                assert_eq!(v, 1.0);
            }
            assert!(
                cut.grad_norm.values()[k].powi(2) - v * cut.laplacian.values()[k]
                    >= -cut.laplacian.max_abs()
            );
        }
        assert_eq!(cut.eval(&grid, &[3.0, 0.0]), 0.0);
    }

    #[test]
    fn cos2_slope_matches_analytic_maximum() {
        let grid = ChartGrid::frozen_cube(2, 161, -2.0, 2.0).unwrap();
        let cut = make_cutoff(&grid, center_node(&grid), 1.0, Profile::Cos2).unwrap();
        let exact = PI / 2.0 / 0.5;
        assert!(
            (cut.sup_grad / exact - 1.0).abs() <= 0.05,
            "{}",
            cut.sup_grad
        );
        let q = make_cutoff(&grid, center_node(&grid), 1.0, Profile::Quintic).unwrap();
        assert!((q.sup_grad / 3.75 - 1.0).abs() <= 0.05, "{}", q.sup_grad);
    }

    #[test]
    fn rejects_unfit_balls() {
        let grid = ChartGrid::frozen_cube(2, 33, 0.0, 1.0).unwrap();
        let c = center_node(&grid);
        assert!(make_cutoff(&grid, c, 0.2, Profile::Cos2).is_err());
        assert!(make_cutoff(&grid, c, 0.49, Profile::Cos2).is_err());
        assert!(make_cutoff(&grid, c, 0.3, Profile::Cos2).is_ok());
        let per = ChartGrid::periodic_cube(2, 32, 1.0).unwrap();
        assert!(make_cutoff(&per, 0, 0.5, Profile::Cos2).is_err());
        assert!(make_cutoff(&per, 0, 0.3, Profile::Cos2).is_ok());
    }
}
