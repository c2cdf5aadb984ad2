use std::f64::consts::PI;

use super::*;
use crate::grid::ChartGrid;

fn euclid(grid: &ChartGrid, a: usize, b: usize) -> f64 {
    let n = grid.dim();
    let d = grid.displacement(&grid.position(a)[..n], &grid.position(b)[..n]);
    d[..n].iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[test]
fn flat_distances_are_euclidean() {
    let grid = ChartGrid::frozen_cube(2, 41, -1.0, 1.0).unwrap();
    let g = MetricField::flat(grid);
    let src = grid.index(&[20, 20]);
    let d = geodesic_distance(&g, src).unwrap();
    let h = grid.spacing()[0];
    assert!((d.values[grid.index(&[21, 20])] - h).abs() < 1e-12);
    assert_eq!(d.values[src], 0.0);
    let mut worst = 0.0f64;
    for node in 0..grid.len() {
        if node != src {
            worst = worst.max((d.values[node] / euclid(&grid, src, node) - 1.0).abs());
        }
    }
    assert!(worst < 0.01, "{worst}");

    let c = 0.3f64;
    let gc = MetricField::conformal(grid, |_| c);
    let dc = geodesic_distance(&gc, src).unwrap();
    for node in (0..grid.len()).step_by(37) {
        assert!(
            (dc.values[node] - c.exp() * d.values[node]).abs() <= 1e-9 * (1.0 + d.values[node])
        );
    }
}

#[test]
fn distance_triangle_inequality_and_ordering() {
    let grid = ChartGrid::frozen_cube(2, 33, -1.0, 1.0).unwrap();
    let g1 = MetricField::conformal(grid, |x| 0.2 * (2.0 * x[0]).sin() * x[1].cos());
    let g2 = MetricField::conformal(grid, |x| {
        0.2 * (2.0 * x[0]).sin() * x[1].cos() + 0.1 + 0.05 * x[0] * x[0]
    });
    let a = grid.index(&[16, 16]);
    let b = grid.index(&[10, 20]);
    let c = grid.index(&[22, 9]);
    let da = geodesic_distance(&g1, a).unwrap();
    let db = geodesic_distance(&g1, b).unwrap();
    let tol = 2.0 * grid.spacing()[0] * 0.05;
    for node in 0..grid.len() {
        assert!(da.values[node] <= da.values[b] + db.values[node] + tol);
    }
    assert!(da.values[c] <= da.values[b] + db.values[c] + tol);
    let d2 = geodesic_distance(&g2, a).unwrap();
    for node in 0..grid.len() {
        assert!(da.values[node] <= d2.values[node] + 1e-12);
    }
}

#[test]
fn disk_area_and_small_balls() {
    let grid = ChartGrid::frozen_cube(2, 81, -1.25, 1.25).unwrap();
    let g = MetricField::flat(grid);
    let center = grid.index(&[40, 40]);
    let d = geodesic_distance(&g, center).unwrap();
    let area = ball_volume(&g, &d, 1.0).unwrap();
    assert!((area / PI - 1.0).abs() < 0.05, "{area}");
    assert!((area / PI - 1.0).abs() < 0.005, "{area}");
    let h = grid.spacing()[0];
    let tiny = ball_volume(&g, &d, 0.5 * h).unwrap();
    assert!(tiny > 0.0 && tiny <= h * h, "{tiny}");
    let mut last = 0.0;
    for k in 1..=20 {
        let v = ball_volume(&g, &d, 0.05 * k as f64).unwrap();
        assert!(v >= last);
        last = v;
    }
    assert!(matches!(
        ball_volume(&g, &d, 1.2),
        Err(Error::BallTouchesBoundary { .. })
    ));
}

#[test]
fn conformal_pairs_order_volumes() {
    let grid = ChartGrid::frozen_cube(2, 49, -1.0, 1.0).unwrap();
    let g1 = MetricField::conformal(grid, |x| 0.1 * x[0].sin());
    let g2 = MetricField::conformal(grid, |x| 0.1 * x[0].sin() + 0.2);
    let center = grid.index(&[24, 24]);
    let d1 = geodesic_distance(&g1, center).unwrap();
    let d2 = geodesic_distance(&g2, center).unwrap();
    let r = 0.5;
    // A fixed coordinate region is measured larger by g2, while its geodesic
    // ball occupies a smaller coordinate region.
    let coord_ball = |d: &DistanceField| (0..grid.len()).filter(|&k| d.values[k] < r).count();
    assert!(coord_ball(&d2) <= coord_ball(&d1));
    let v1 = ball_volume(&g1, &d1, r).unwrap();
    let v2 = ball_volume(&g2, &d2, r).unwrap();
    assert!((v1 / v2 - 1.0).abs() < 0.05, "{v1} {v2}");
}

#[test]
fn four_ball_volume_growth() {
    let grid = ChartGrid::frozen_cube(4, 29, -1.3, 1.3).unwrap();
    let g = MetricField::flat(grid);
    let center = grid.index(&[14, 14, 14, 14]);
    let table = volume_growth_table(&g, center, &[0.5, 0.75, 1.0]).unwrap();
    let exact = PI * PI / 2.0;
    for row in &table.rows {
        assert!((row.vol_over_r4 / exact - 1.0).abs() < 0.05, "{row:?}");
    }
    assert_eq!(table.to_csv().lines().count(), 4);

    let lambda = 1.7;
    let scaled = g.scaled(lambda * lambda).unwrap();
    let st = volume_growth_table(&scaled, center, &[0.5 * lambda, 0.75 * lambda, lambda]).unwrap();
    for (a, b) in table.rows.iter().zip(&st.rows) {
        assert!(
            (a.vol * lambda.powi(4) / b.vol - 1.0).abs() < 1e-9,
            "{a:?} {b:?}"
        );
    }
    let single = volume_growth_table(&g, center, &[0.6]).unwrap();
    assert_eq!(single.rows.len(), 1);
}
