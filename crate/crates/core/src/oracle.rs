//! Reference opacity along a ray by dense quadrature of the density.
//!
//! The ray is cut into `resolution` uniform cells; every cell (split further at
//! the requested query points) is integrated with adaptive Simpson refinement,
//! which in turn is the Richardson extrapolation of successive trapezoid
//! estimates. The whole computation is repeated at twice the resolution and
//! the two opacity curves must agree to within [`RICHARDSON_LIMIT`].
//!
//! Nothing here shares code with the Riemann-sum estimator in
//! [`crate::bounds`].

use crate::bounds::Ray;
use crate::density::DensityParams;
use crate::error::{contract, Error, Result};
use crate::sdf::SdfScene;

pub const MIN_RESOLUTION: usize = 1 << 14;
pub const DEFAULT_RESOLUTION: usize = 1 << 16;
/// Largest opacity change tolerated when the resolution is doubled.
pub const RICHARDSON_LIMIT: f64 = 1e-8;

/// Optical-depth tolerance for a whole ray; split over cells by length.
const DEPTH_TOLERANCE: f64 = 1e-11;
/// Refinement levels below a base cell. Near very sharp surfaces the density's
/// own rounding noise exceeds the tolerance, so depth has to be capped.
const MAX_DEPTH: u32 = 12;

/// Reference optical depth and opacity at query positions.
#[derive(Debug, Clone, PartialEq)]
pub struct OpacityCurve {
    pub t: Vec<f64>,
    pub optical_depth: Vec<f64>,
    pub opacity: Vec<f64>,
}

/// Reference opacity `O(t) = 1 - exp(-int_0^t sigma)` at every `t` in `at`
/// (any order, each within `[0, far]`).
pub fn opacity_oracle(
    scene: &SdfScene,
    ray: &Ray,
    params: &DensityParams,
    resolution: usize,
    at: &[f64],
) -> Result<OpacityCurve> {
    if resolution < MIN_RESOLUTION {
        return Err(contract(format!(
            "oracle resolution must be at least {MIN_RESOLUTION}, got {resolution}"
        )));
    }
    let far = ray.far();
    if let Some(t) = at.iter().find(|t| !(0.0..=far).contains(*t)) {
        return Err(contract(format!("oracle query t = {t} outside [0, {far}]")));
    }
    let sigma = |t: f64| params.sigma(scene.eval(ray.at(t)));
    let coarse = optical_depths(&sigma, far, resolution, at);
    let fine = optical_depths(&sigma, far, 2 * resolution, at);
    let change = coarse
        .iter()
        .zip(&fine)
        .map(|(a, b)| (to_opacity(*a) - to_opacity(*b)).abs())
        .fold(0.0, f64::max);
    if change >= RICHARDSON_LIMIT {
        return Err(Error::OracleRichardson {
            resolution,
            change,
            limit: RICHARDSON_LIMIT,
        });
    }
    Ok(OpacityCurve {
        t: at.to_vec(),
        opacity: fine.iter().map(|&d| to_opacity(d)).collect(),
        optical_depth: fine,
    })
}

#[inline]
fn to_opacity(depth: f64) -> f64 {
    -(-depth).exp_m1()
}

/// Cumulative integral of `f` over `[0, t]` for every query `t`.
pub fn optical_depths(f: &impl Fn(f64) -> f64, far: f64, cells: usize, at: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..at.len()).collect();
    order.sort_by(|&a, &b| at[a].total_cmp(&at[b]));
    let mut out = vec![0.0; at.len()];
    let mut next = 0;
    let h = far / cells as f64;
    let tol_per_length = DEPTH_TOLERANCE / far;

    let mut acc = 0.0;
    let mut a = 0.0;
    let mut fa = f(a);
    while next < order.len() && at[order[next]] <= 0.0 {
        out[order[next]] = 0.0;
        next += 1;
    }
    for j in 1..=cells {
        let cell_end = if j == cells { far } else { j as f64 * h };
        // Split the cell at every query point it contains.
        loop {
            let (b, is_query) = match order.get(next) {
                Some(&q) if at[q] < cell_end => (at[q], true),
                _ => (cell_end, false),
            };
            if b > a {
                let fb = f(b);
                acc += integrate_piece(f, a, b, fa, fb, tol_per_length * (b - a));
                a = b;
                fa = fb;
            }
            if !is_query {
                break;
            }
            out[order[next]] = acc;
            next += 1;
        }
        while next < order.len() && at[order[next]] <= cell_end {
            out[order[next]] = acc;
            next += 1;
        }
    }
    out
}

fn integrate_piece(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fb: f64, tol: f64) -> f64 {
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_simpson(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    let noise = 64.0 * f64::EPSILON * (left.abs() + right.abs());
    if depth == 0 || diff.abs() <= (15.0 * tol).max(noise) {
        return left + right + diff / 15.0;
    }
    adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec3;
    use crate::sdf::SdfNode;

    #[test]
    fn rejects_low_resolution_and_bad_queries() {
        let scene = SdfScene::empty(3.0).unwrap();
        let ray = Ray::new(Vec3::ZERO, Vec3::X, 6.0).unwrap();
        let p = DensityParams::coupled(0.1).unwrap();
        assert!(opacity_oracle(&scene, &ray, &p, 1 << 13, &[1.0]).is_err());
        assert!(opacity_oracle(&scene, &ray, &p, MIN_RESOLUTION, &[6.5]).is_err());
    }

    #[test]
    fn zero_density_gives_zero_opacity() {
        let f = |_t: f64| 0.0;
        let d = optical_depths(&f, 4.0, 1024, &[0.0, 1.0, 4.0]);
        assert_eq!(d, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn constant_density_closed_form() {
        let scene = SdfScene::with_root(SdfNode::plane(Vec3::Z, 100.0).unwrap(), 1000.0).unwrap();
        let ray = Ray::new(Vec3::ZERO, Vec3::X, 5.0).unwrap();
        let p = DensityParams::decoupled(1.3, 0.5).unwrap();
        let at = [5.0, 0.0, 0.123, 2.5, 4.999, 1.0];
        let curve = opacity_oracle(&scene, &ray, &p, MIN_RESOLUTION, &at).unwrap();
        for (t, o) in curve.t.iter().zip(&curve.opacity) {
            assert!((o - (1.0 - (-1.3 * t).exp())).abs() < 1e-10, "t = {t}");
        }
    }

    #[test]
    fn polynomial_integrands_are_exact() {
        let f = |t: f64| 3.0 * t * t - t + 0.5;
        let at = [0.7, 2.0, 0.0, 1.9999];
        let got = optical_depths(&f, 2.0, 64, &at);
        for (t, v) in at.iter().zip(got) {
            let exact = t * t * t - 0.5 * t * t + 0.5 * t;
            assert!((v - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn query_points_next_to_cell_edges_are_cheap() {
        let scene = SdfScene::with_root(SdfNode::sphere(Vec3::ZERO, 1.0).unwrap(), 3.0).unwrap();
        let ray = Ray::towards(&scene, Vec3::new(0.5, 2.1, -1.6), Vec3::new(-0.4, -0.8, 0.45)).unwrap();
        let p = DensityParams::coupled(1e-3).unwrap();
        let at: Vec<f64> = (0..=2048).map(|k| ray.far() * k as f64 / 2048.0).collect();
        let curve = opacity_oracle(&scene, &ray, &p, MIN_RESOLUTION, &at).unwrap();
        assert!(curve.opacity.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn sharp_sphere_curve_is_monotone_and_saturates() {
        let scene = SdfScene::with_root(SdfNode::sphere(Vec3::ZERO, 1.0).unwrap(), 3.0).unwrap();
        let ray = Ray::towards(&scene, Vec3::new(0.0, 0.0, -2.5), Vec3::Z).unwrap();
        let p = DensityParams::coupled(0.01).unwrap();
        let at: Vec<f64> = (0..=600).map(|i| i as f64 * 0.01).collect();
        let curve = opacity_oracle(&scene, &ray, &p, MIN_RESOLUTION, &at).unwrap();
        assert!(curve.opacity.windows(2).all(|w| w[1] >= w[0]));
        assert!(*curve.opacity.last().unwrap() > 1.0 - 1e-6);
        // Before the surface only the Laplace tail contributes.
        assert!(curve.opacity[100] < 1e-6);
    }
}
