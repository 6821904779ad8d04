//! Ordinary kriging at a single target by assembling and solving the full
//! bordered system from scratch.

use crate::linalg::gauss_solve;

pub struct PointSolution {
    pub prediction: f64,
    pub variance: f64,
    pub weights: Vec<f64>,
    pub lagrange: f64,
}

/// Distance in latitude-degrees on a plane whose longitude axis is shrunk by
/// `cos(ref_lat)`.
pub fn planar_distance(a: (f64, f64), b: (f64, f64), ref_lat_deg: f64) -> f64 {
    let dy = a.0 - b.0;
    let dx = (a.1 - b.1) * ref_lat_deg.to_radians().cos();
    (dx * dx + dy * dy).sqrt()
}

/// `data` holds `(lat, lon, value)`; `gamma` is the semivariogram with
/// `gamma(0) == 0`.
pub fn krige_point(
    data: &[(f64, f64, f64)],
    target: (f64, f64),
    gamma: &dyn Fn(f64) -> f64,
    ref_lat_deg: f64,
) -> Option<PointSolution> {
    let n = data.len();
    let mut a = vec![vec![0.0; n + 1]; n + 1];
    let mut b = vec![0.0; n + 1];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = if i == j {
                0.0
            } else {
                gamma(planar_distance((data[i].0, data[i].1), (data[j].0, data[j].1), ref_lat_deg))
            };
        }
        a[i][n] = 1.0;
        a[n][i] = 1.0;
        b[i] = gamma(planar_distance((data[i].0, data[i].1), target, ref_lat_deg));
    }
    b[n] = 1.0;
    let x = gauss_solve(&a, &b)?;
    let weights = x[..n].to_vec();
    let lagrange = x[n];
    let prediction = weights.iter().zip(data).map(|(w, d)| w * d.2).sum();
    let variance = weights.iter().zip(&b).map(|(w, g)| w * g).sum::<f64>() + lagrange;
    Some(PointSolution { prediction, variance, weights, lagrange })
}
