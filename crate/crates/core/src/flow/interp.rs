use crate::grid::{ChartGrid, MAX_DIM};

/// Lagrange weights for nodes at offsets −1, 0, 1, 2 evaluated at `s`.
fn cubic_weights(s: f64) -> [f64; 4] {
    [
        -s * (s - 1.0) * (s - 2.0) / 6.0,
        (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0,
        -(s + 1.0) * s * (s - 2.0) / 2.0,
        (s + 1.0) * s * (s - 1.0) / 6.0,
    ]
}

/// Tensor-product cubic interpolation of node-major data at chart point `x`.
/// Returns `false` (leaving `out` untouched) when `x` lies outside a frozen chart.
pub(crate) fn interpolate(
    grid: &ChartGrid,
    data: &[f64],
    ncomp: usize,
    x: &[f64],
    out: &mut [f64],
) -> bool {
    let n = grid.dim();
    let q = grid.fractional_index(x);
    let mut base = [0isize; MAX_DIM];
    let mut w = [[0.0; 4]; MAX_DIM];
    for a in 0..n {
        let len = grid.extents()[a];
        let slack = 1e-9;
        if !grid.is_periodic() && (q[a] < -slack || q[a] > (len - 1) as f64 + slack) {
            return false;
        }
        let mut b = q[a].floor() as isize;
        if !grid.is_periodic() {
            b = b.clamp(1, len as isize - 3);
        }
        base[a] = b;
        w[a] = cubic_weights(q[a] - b as f64);
    }
    out[..ncomp].fill(0.0);
    let total = 4usize.pow(n as u32);
    for combo in 0..total {
        let mut weight = 1.0;
        let mut node = 0usize;
        let mut rest = combo;
        for a in (0..n).rev() {
            let o = rest % 4;
            rest /= 4;
            weight *= w[a][o];
            let len = grid.extents()[a] as isize;
            let i = (base[a] + o as isize - 1).rem_euclid(len) as usize;
            node += i * grid.strides()[a];
        }
        for c in 0..ncomp {
            out[c] += weight * data[node * ncomp + c];
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_cubics_and_wraps() {
        let grid = ChartGrid::frozen_cube(2, 9, 0.0, 1.0).unwrap();
        let f = |x: &[f64]| x[0].powi(3) - 2.0 * x[0] * x[1] * x[1] + 0.5;
        let data: Vec<f64> = (0..grid.len()).map(|k| f(&grid.position(k)[..2])).collect();
        let mut out = [0.0];
        for p in [[0.01, 0.99], [0.5, 0.33], [1.0, 0.0], [0.93, 0.07]] {
            assert!(interpolate(&grid, &data, 1, &p, &mut out));
            assert!((out[0] - f(&p)).abs() < 1e-12);
        }
        assert!(!interpolate(&grid, &data, 1, &[1.01, 0.5], &mut out));

        let per = ChartGrid::periodic_cube(2, 64, 1.0).unwrap();
        let s: Vec<f64> = (0..per.len())
            .map(|k| (2.0 * std::f64::consts::PI * per.position(k)[0]).sin())
            .collect();
        assert!(interpolate(&per, &s, 1, &[-0.01, 1.3], &mut out));
        assert!((out[0] - (-0.02 * std::f64::consts::PI).sin()).abs() < 1e-5);
    }
}
