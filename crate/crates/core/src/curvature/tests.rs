use super::*;
use crate::scenario::{scenario_on_default_grid, ScenarioParams};
use crate::tensor::{flatten, unflatten};

fn scenario(name: &str, dim: usize, n: usize) -> MetricField {
    scenario_on_default_grid(name, &ScenarioParams::default(), dim, n)
        .unwrap()
        .metric
}

#[test]
fn flat_metric_has_no_curvature() {
    for dim in [2, 3, 4] {
        let g = scenario("flat", dim, 8);
        let pack = CurvaturePack::full(&g).unwrap();
        assert!(pack.christoffel.max_abs() <= 1e-10);
        assert!(pack.riemann.max_abs() <= 1e-10);
        assert!(pack.ricci.max_abs() <= 1e-10);
        assert!(pack.scalar.max_abs() <= 1e-10);
        if dim == 4 {
            assert!(pack.bach.as_ref().unwrap().max_abs() <= 1e-10);
            assert!(pack.bach_plus.as_ref().unwrap().max_abs() <= 1e-10);
        }
    }
}

#[test]
fn polar_christoffel_oracle() {
    let g = scenario("polar_flat", 2, 17);
    let gam = christoffel(&g).unwrap();
    for node in 0..g.grid().len() {
        let r = g.grid().position(node)[0];
        assert!((gam.get(node, flatten(&[0, 1, 1], 2)) + r).abs() <= 1e-6);
        assert!((gam.get(node, flatten(&[1, 0, 1], 2)) - 1.0 / r).abs() <= 1e-6);
        assert!((gam.get(node, flatten(&[1, 1, 0], 2)) - 1.0 / r).abs() <= 1e-6);
        assert!(gam.get(node, flatten(&[0, 0, 0], 2)).abs() <= 1e-6);
    }
    let rm = riemann(&g, &gam).unwrap();
    assert!(rm.max_abs() <= 1e-8);
}

#[test]
fn conformal_christoffel_oracle() {
    let grid = ChartGrid::periodic_cube(3, 32, 2.0 * std::f64::consts::PI).unwrap();
    let u = |x: &[f64]| 0.2 * x[0].sin() * x[1].cos() + 0.1 * x[2].sin();
    let du = |x: &[f64]| {
        [
            0.2 * x[0].cos() * x[1].cos(),
            -0.2 * x[0].sin() * x[1].sin(),
            0.1 * x[2].cos(),
        ]
    };
    let g = MetricField::conformal(grid, u);
    let gam = christoffel(&g).unwrap();
    let h = grid.max_spacing();
    let mut err: f64 = 0.0;
    for node in 0..grid.len() {
        let x = grid.position(node);
        let d = du(&x[..3]);
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let dij = (i == j) as u8 as f64;
                    let dik = (i == k) as u8 as f64;
                    let djk = (j == k) as u8 as f64;
                    let oracle = dij * d[k] + dik * d[j] - djk * d[i];
                    err = err.max((gam.get(node, flatten(&[i, j, k], 3)) - oracle).abs());
                }
            }
        }
    }
    assert!(err <= 10.0 * h.powi(4), "{err}");
}

#[test]
fn riemann_symmetries_and_bianchi() {
    let p = ScenarioParams {
        amplitude: Some(0.05),
        wavenumber: Some(1),
        seed: Some(3),
        ..Default::default()
    };
    let g = scenario_on_default_grid("perturbed_flat", &p, 4, 12)
        .unwrap()
        .metric;
    let pack = CurvaturePack::compute(&g).unwrap();
    let rm = &pack.riemann;
    let h = g.grid().max_spacing();
    let scale = rm.max_abs();
    let mut bianchi: f64 = 0.0;
    let mut full = vec![0.0; 256];
    for node in (0..g.grid().len()).step_by(37) {
        rm.expand_node(node, &mut full);
        for f in 0..256 {
            let [i, j, k, l] = <[usize; 4]>::try_from(unflatten(f, 4, 4)).unwrap();
            let at = |a, b, c, d| full[flatten(&[a, b, c, d], 4)];
            assert_eq!(at(i, j, k, l), -at(j, i, k, l));
            assert_eq!(at(i, j, k, l), -at(i, j, l, k));
            assert_eq!(at(i, j, k, l), at(k, l, i, j));
            bianchi = bianchi.max((at(i, j, k, l) + at(i, k, l, j) + at(i, l, j, k)).abs());
        }
    }
    assert!(bianchi <= 10.0 * h * h * scale, "{bianchi} vs {}", scale);
    // Scalar curvature against an independent contraction of Rm.
    let gi = g.inverse().unwrap();
    for node in (0..g.grid().len()).step_by(101) {
        rm.expand_node(node, &mut full);
        let ginv = linalg::unpack(&gi[node * 10..node * 10 + 10], 4);
        let mut r = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    for l in 0..4 {
                        r += ginv[i][k] * ginv[j][l] * full[flatten(&[i, j, k, l], 4)];
                    }
                }
            }
        }
        assert!((r - pack.scalar.values()[node]).abs() <= 1e-10 * r.abs().max(1.0));
    }
}

#[test]
fn sphere_curvature_coarse() {
    let g = scenario("sphere_stereo", 2, 48);
    let pack = CurvaturePack::compute(&g).unwrap();
    let grid = *g.grid();
    let err = (0..grid.len())
        .filter(|&k| grid.is_inner(k, 3))
        .map(|k| (pack.scalar.values()[k] - 2.0).abs())
        .fold(0.0, f64::max);
    assert!(err < 0.02, "{err}");
    let nrm = pointwise_tensor_norm(&pack.ricci, &g).unwrap();
    let err = (0..grid.len())
        .filter(|&k| grid.is_inner(k, 3))
        .map(|k| (nrm.values()[k] - 2f64.sqrt()).abs())
        .fold(0.0, f64::max);
    assert!(err < 0.02 * 2f64.sqrt(), "{err}");
}

#[test]
fn weyl_split_sums_and_vanishes_on_sphere() {
    let g = scenario("sphere_stereo", 4, 12);
    let pack = CurvaturePack::compute(&g).unwrap();
    let w = pack.weyl.as_ref().unwrap();
    let wp = pack.weyl_plus.as_ref().unwrap();
    let wm = pack.weyl_minus.as_ref().unwrap();
    for k in 0..w.data().len() {
        assert!((w.data()[k] - wp.data()[k] - wm.data()[k]).abs() <= 1e-10 * w.max_abs().max(1.0));
    }
    let wn = pointwise_tensor_norm(w, &g).unwrap();
    let rn = pointwise_tensor_norm(&pack.riemann, &g).unwrap();
    assert!(interior_max(&wn, 3) <= 2e-2 * interior_max(&rn, 3));
}

#[test]
fn weyl_rejects_low_dimension_and_ricci_flat_is_identity() {
    let g = scenario("sphere_stereo", 2, 16);
    let pack = CurvaturePack::compute(&g).unwrap();
    assert!(pack.weyl.is_none());
    assert!(weyl_decompose(&g, &pack.riemann, &pack.ricci, &pack.scalar).is_err());

    // Synthetic Ricci-flat data: W is Rm when Ric and R are zero.
    let g4 = scenario("perturbed_flat", 4, 8);
    let pack = CurvaturePack::compute(&g4).unwrap();
    let zero_ric = TensorField::zeros(*g4.grid(), vec![Valence::Covariant; 2], sym2_layout(4));
    let zero_r = ScalarField::zeros(*g4.grid());
    let w = weyl_decompose(&g4, &pack.riemann, &zero_ric, &zero_r).unwrap();
    assert_eq!(w.weyl.data(), pack.riemann.data());
}

#[test]
fn product_of_spheres_weyl_norm() {
    let g = scenario("s2xs2", 4, 14);
    let pack = CurvaturePack::compute(&g).unwrap();
    let wn = pointwise_tensor_norm(pack.weyl.as_ref().unwrap(), &g).unwrap();
    let wp = pointwise_tensor_norm(pack.weyl_plus.as_ref().unwrap(), &g).unwrap();
    let grid = *g.grid();
    let center = grid.index(&[7, 7, 7, 7]);
    assert!(
        (wn.values()[center].powi(2) - 16.0 / 3.0).abs() < 0.02 * 16.0 / 3.0,
        "{}",
        wn.values()[center]
    );
    assert!(wp.values()[center] > 0.5);
}

#[test]
fn bach_is_conformally_covariant() {
    // B(e^{2u} g) = e^{-2u} B(g) for any 4-metric; the non-Einstein product
    // S²(1)×S²(2) has B ≠ 0, so this pins the sign of the R·W term.
    let params = ScenarioParams {
        radius: Some(1.0),
        radius2: Some(2.0),
        ..Default::default()
    };
    let grid = ChartGrid::frozen_cube(4, 17, -0.5, 0.5).unwrap();
    let base = crate::scenario::build_scenario("s2xs2", &params, &grid)
        .unwrap()
        .metric;
    let u = |x: &[f64]| 0.1 * (x[0] + 0.5 * x[2]);
    let scaled = MetricField::from_fn(grid, |x, m| {
        let node = grid.index(&[
            ((x[0] + 0.5) / grid.spacing()[0]).round() as usize,
            ((x[1] + 0.5) / grid.spacing()[1]).round() as usize,
            ((x[2] + 0.5) / grid.spacing()[2]).round() as usize,
            ((x[3] + 0.5) / grid.spacing()[3]).round() as usize,
        ]);
        *m = linalg::unpack(base.node(node), 4);
        let s = (2.0 * u(x)).exp();
        for row in m.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
    })
    .unwrap();
    let b0 = CurvaturePack::full(&base).unwrap().bach.unwrap();
    let b1 = CurvaturePack::full(&scaled).unwrap().bach.unwrap();
    let center = grid.index(&[8, 8, 8, 8]);
    let x = grid.position(center);
    let f = (-2.0 * u(&x[..4])).exp();
    let mut scale: f64 = 0.0;
    let mut err: f64 = 0.0;
    for c in 0..10 {
        scale = scale.max(b0.node(center)[c].abs());
        err = err.max((b1.node(center)[c] - f * b0.node(center)[c]).abs());
    }
    assert!(scale > 1e-2, "{scale}");
    assert!(err < 0.05 * scale, "{err} vs {scale}");
}
