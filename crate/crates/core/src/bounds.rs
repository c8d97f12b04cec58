//! Opacity along a ray, its left-Riemann-sum estimate, and certified bounds
//! on the estimate's error.
//!
//! For knots `0 = t_1 < ... < t_n = M` with `sigma_i = sigma(x(t_i))`:
//!
//! * `R(t)` is the left Riemann sum of the density up to `t` and
//!   `O_hat(t) = 1 - exp(-R(t))` the estimated opacity;
//! * on each interval the density is Lipschitz with constant
//!   `alpha / (2 beta) * exp(-d*_i / beta)`, where `d*_i` (see [`d_star`]) is a
//!   lower bound on the distance from the segment to the surface;
//! * integrating that constant gives `E(t)`, a bound on the optical-depth
//!   error, and `exp(-R(t_k)) * (exp(E(t_{k+1})) - 1)` bounds the opacity
//!   error on interval `k`. The maximum over intervals is the global bound `B`.

use std::io::{self, Write};

use crate::csv::fmt_f64;
use crate::density::DensityParams;
use crate::error::{contract, param, Result};
use crate::math::Vec3;
use crate::sdf::SdfScene;

/// A ray `x(t) = origin + t * direction` for `t` in `[0, far]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    origin: Vec3,
    direction: Vec3,
    far: f64,
}

impl Ray {
    /// `direction` must already have unit length (within 1e-9).
    pub fn new(origin: Vec3, direction: Vec3, far: f64) -> Result<Self> {
        if !origin.is_finite() || !direction.is_finite() {
            return Err(param("ray origin and direction must be finite"));
        }
        let len = direction.norm();
        if (len - 1.0).abs() > 1e-9 {
            return Err(param(format!("ray direction must be unit length, got {len}")));
        }
        if !(far.is_finite() && far > 0.0) {
            return Err(param(format!("ray far bound must be finite and > 0, got {far}")));
        }
        Ok(Self {
            origin,
            direction,
            far,
        })
    }

    /// Normalizes `direction` and uses the `far = 2r` convention for the scene.
    pub fn towards(scene: &SdfScene, origin: Vec3, direction: Vec3) -> Result<Self> {
        let dir = direction
            .try_normalize()
            .ok_or_else(|| param("ray direction must be non-zero"))?;
        Self::new(origin, dir, 2.0 * scene.bounding_radius())
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn direction(&self) -> Vec3 {
        self.direction
    }

    pub fn far(&self) -> f64 {
        self.far
    }

    #[inline]
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// Lower bound on the distance between the segment `[x(t_i), x(t_{i+1})]` and
/// the complement of the two open balls of radius `|d_i|`, `|d_next|` centred
/// at the endpoints.
///
/// Three cases: disjoint balls give 0; when one endpoint angle of the triangle
/// `(x_i, b, x_{i+1})` is not acute the nearer endpoint radius is the answer;
/// otherwise the answer is the height of the triangle with sides
/// `delta, |d_i|, |d_next|` (Heron's formula).
pub fn d_star(d_i: f64, d_next: f64, delta: f64) -> f64 {
    debug_assert!(delta > 0.0);
    let a = d_i.abs();
    let b = d_next.abs();
    if a + b <= delta {
        return 0.0;
    }
    if (a * a - b * b).abs() >= delta * delta {
        return a.min(b);
    }
    let s = 0.5 * (delta + a + b);
    let radicand = s * (s - delta) * (s - a) * (s - b);
    if radicand <= 0.0 {
        return 0.0;
    }
    2.0 / delta * radicand.sqrt()
}

/// Lipschitz constant of the density along an interval.
pub fn lipschitz_bound(d_i: f64, d_next: f64, delta: f64, params: &DensityParams) -> f64 {
    params.peak_rate() * (-d_star(d_i, d_next, delta) / params.beta()).exp()
}

/// `exp(-r) * (exp(e) - 1)`, computed without overflow or `0 * inf`.
#[inline]
pub fn opacity_error_bound(r_hat: f64, e_hat: f64) -> f64 {
    if e_hat <= 0.0 {
        return 0.0;
    }
    let growth = e_hat.exp_m1();
    if growth.is_finite() {
        (-r_hat).exp() * growth
    } else {
        // exp(e) - 1 < exp(e)
        (e_hat - r_hat).exp()
    }
}

/// Factors of the per-interval opacity error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpacityError {
    pub interval: usize,
    /// `exp(-R(t_k))`
    pub lower_factor: f64,
    /// `exp(E(t_{k+1})) - 1`
    pub growth_factor: f64,
    pub bound: f64,
}

/// Sorted knots along one ray with cached distances, densities, Riemann
/// prefix sums, optical-depth error bounds and opacity error bounds.
///
/// Distances and `d*` values do not depend on the density parameters; the
/// remaining caches are tied to [`SampleTrack::params`] and are rebuilt by
/// [`SampleTrack::set_params`]. Intervals are left-closed: a query at a knot
/// `t_k` belongs to interval `k` (the far bound belongs to the last interval).
#[derive(Debug, Clone)]
pub struct SampleTrack {
    ray: Ray,
    knots: Vec<f64>,
    dists: Vec<f64>,
    d_star: Vec<f64>,
    params: DensityParams,
    sigma: Vec<f64>,
    r_hat: Vec<f64>,
    e_hat: Vec<f64>,
    bounds: Vec<f64>,
    global: f64,
}

impl SampleTrack {
    pub fn new(scene: &SdfScene, ray: Ray, knots: Vec<f64>, params: DensityParams) -> Result<Self> {
        validate_knots(&knots, ray.far())?;
        let dists: Vec<f64> = knots.iter().map(|&t| scene.eval(ray.at(t))).collect();
        let d_star = knots
            .windows(2)
            .zip(dists.windows(2))
            .map(|(t, d)| d_star(d[0], d[1], t[1] - t[0]))
            .collect();
        let mut track = Self {
            ray,
            knots,
            dists,
            d_star,
            params,
            sigma: Vec::new(),
            r_hat: Vec::new(),
            e_hat: Vec::new(),
            bounds: Vec::new(),
            global: 0.0,
        };
        track.rebuild();
        Ok(track)
    }

    /// Uniform knots `t_k = k * M / (n - 1)`, `k = 0..n`.
    pub fn uniform(scene: &SdfScene, ray: Ray, n: usize, params: DensityParams) -> Result<Self> {
        if n < 2 {
            return Err(contract(format!("a track needs at least 2 knots, got {n}")));
        }
        Self::new(scene, ray, uniform_knots(ray.far(), n), params)
    }

    pub fn ray(&self) -> &Ray {
        &self.ray
    }

    pub fn params(&self) -> &DensityParams {
        &self.params
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    pub fn num_intervals(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn dists(&self) -> &[f64] {
        &self.dists
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigma
    }

    pub fn d_stars(&self) -> &[f64] {
        &self.d_star
    }

    /// `R(t_k)` for every knot.
    pub fn prefix_sums(&self) -> &[f64] {
        &self.r_hat
    }

    /// `E(t_k)` for every knot.
    pub fn error_sums(&self) -> &[f64] {
        &self.e_hat
    }

    /// Opacity error bound of every interval.
    pub fn interval_bounds(&self) -> &[f64] {
        &self.bounds
    }

    pub fn widths(&self) -> impl Iterator<Item = f64> + '_ {
        self.knots.windows(2).map(|w| w[1] - w[0])
    }

    /// Re-evaluates the parameter-dependent caches.
    pub fn set_params(&mut self, params: DensityParams) {
        self.params = params;
        self.rebuild();
    }

    pub fn with_params(&self, params: DensityParams) -> Self {
        let mut t = self.clone();
        t.set_params(params);
        t
    }

    fn rebuild(&mut self) {
        let n = self.knots.len();
        let p = self.params;
        self.sigma = self.dists.iter().map(|&d| p.sigma(d)).collect();
        self.r_hat.clear();
        self.e_hat.clear();
        self.bounds.clear();
        self.r_hat.reserve(n);
        self.e_hat.reserve(n);
        self.bounds.reserve(n - 1);
        let scale = p.alpha() / (4.0 * p.beta());
        let (mut r, mut e) = (0.0, 0.0);
        self.r_hat.push(r);
        self.e_hat.push(e);
        let mut global: f64 = 0.0;
        for k in 0..n - 1 {
            let delta = self.knots[k + 1] - self.knots[k];
            let e_next = e + scale * delta * delta * (-self.d_star[k] / p.beta()).exp();
            let b = opacity_error_bound(r, e_next);
            self.bounds.push(b);
            global = global.max(b);
            r += delta * self.sigma[k];
            e = e_next;
            self.r_hat.push(r);
            self.e_hat.push(e);
        }
        self.global = global;
    }

    /// Global bound `B` for the cached parameters.
    pub fn global_bound(&self) -> f64 {
        self.global
    }

    /// Global bound `B` for other density parameters on the same knots,
    /// without touching the caches.
    pub fn global_bound_at(&self, params: &DensityParams) -> f64 {
        let scale = params.alpha() / (4.0 * params.beta());
        let (mut r, mut e) = (0.0, 0.0);
        let mut global: f64 = 0.0;
        for k in 0..self.knots.len() - 1 {
            let delta = self.knots[k + 1] - self.knots[k];
            e += scale * delta * delta * (-self.d_star[k] / params.beta()).exp();
            global = global.max(opacity_error_bound(r, e));
            r += delta * params.sigma(self.dists[k]);
        }
        global
    }

    /// Interval containing `t` under the left-closed convention.
    pub fn locate(&self, t: f64) -> Result<usize> {
        let far = self.ray.far();
        if !(0.0..=far).contains(&t) {
            return Err(contract(format!("t = {t} outside [0, {far}]")));
        }
        let k = self.knots.partition_point(|&x| x <= t);
        Ok(k.saturating_sub(1).min(self.knots.len() - 2))
    }

    /// Left Riemann sum `R(t)`.
    pub fn rectangle_sum(&self, t: f64) -> Result<f64> {
        let k = self.locate(t)?;
        Ok(self.r_hat[k] + (t - self.knots[k]) * self.sigma[k])
    }

    /// Estimated opacity `1 - exp(-R(t))`.
    pub fn opacity_hat(&self, t: f64) -> Result<f64> {
        Ok(-(-self.rectangle_sum(t)?).exp_m1())
    }

    /// Bound `E(t)` on the optical-depth error of the Riemann sum.
    pub fn error_hat(&self, t: f64) -> Result<f64> {
        let k = self.locate(t)?;
        let p = &self.params;
        let dt = t - self.knots[k];
        Ok(self.e_hat[k] + p.alpha() / (4.0 * p.beta()) * dt * dt * (-self.d_star[k] / p.beta()).exp())
    }

    /// Pointwise bound `exp(-R(t)) * (exp(E(t)) - 1)` on `|O(t) - O_hat(t)|`.
    pub fn pointwise_bound(&self, t: f64) -> Result<f64> {
        Ok(opacity_error_bound(self.rectangle_sum(t)?, self.error_hat(t)?))
    }

    /// Bound on `max |O - O_hat|` over interval `k` (0-based).
    pub fn interval_bound(&self, k: usize) -> Result<OpacityError> {
        if k + 1 >= self.knots.len() {
            return Err(contract(format!(
                "interval {k} out of range for {} knots",
                self.knots.len()
            )));
        }
        let r = self.r_hat[k];
        let e = self.e_hat[k + 1];
        Ok(OpacityError {
            interval: k,
            lower_factor: (-r).exp(),
            growth_factor: e.exp_m1(),
            bound: self.bounds[k],
        })
    }

    /// Estimated opacity at every knot.
    pub fn opacity_at_knots(&self) -> Vec<f64> {
        self.r_hat.iter().map(|r| -(-r).exp_m1()).collect()
    }

    /// Inserts `counts[k]` equispaced knots inside interval `k`. Only the new
    /// knots are evaluated against the scene; `d*` is recomputed for split
    /// intervals only.
    pub fn subdivide(&mut self, scene: &SdfScene, counts: &[usize]) -> Result<()> {
        if counts.len() != self.num_intervals() {
            return Err(contract(format!(
                "{} allocation entries for {} intervals",
                counts.len(),
                self.num_intervals()
            )));
        }
        let extra: usize = counts.iter().sum();
        let mut knots = Vec::with_capacity(self.knots.len() + extra);
        let mut dists = Vec::with_capacity(knots.capacity());
        let mut d_star_v = Vec::with_capacity(knots.capacity());
        for k in 0..self.num_intervals() {
            let (t0, t1) = (self.knots[k], self.knots[k + 1]);
            knots.push(t0);
            dists.push(self.dists[k]);
            let c = counts[k];
            if c == 0 {
                d_star_v.push(self.d_star[k]);
                continue;
            }
            let step = (t1 - t0) / (c + 1) as f64;
            for j in 1..=c {
                let t = t0 + step * j as f64;
                // Skip knots that collapse onto a neighbour in floating point.
                if t <= *knots.last().unwrap() || t >= t1 {
                    continue;
                }
                let d_prev = *dists.last().unwrap();
                let d = scene.eval(self.ray.at(t));
                d_star_v.push(d_star(d_prev, d, t - knots.last().unwrap()));
                knots.push(t);
                dists.push(d);
            }
            let d_prev = *dists.last().unwrap();
            d_star_v.push(d_star(d_prev, self.dists[k + 1], t1 - knots.last().unwrap()));
        }
        knots.push(*self.knots.last().unwrap());
        dists.push(*self.dists.last().unwrap());
        self.knots = knots;
        self.dists = dists;
        self.d_star = d_star_v;
        self.rebuild();
        Ok(())
    }

    /// Per-knot diagnostic dump with columns
    /// `t,d,sigma,R_hat,O_hat,d_star_next,interval_bound`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,d,sigma,R_hat,O_hat,d_star_next,interval_bound")?;
        for k in 0..self.knots.len() {
            let o_hat = -(-self.r_hat[k]).exp_m1();
            let (ds, b) = if k + 1 < self.knots.len() {
                (fmt_f64(self.d_star[k]), fmt_f64(self.bounds[k]))
            } else {
                (String::new(), String::new())
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                fmt_f64(self.knots[k]),
                fmt_f64(self.dists[k]),
                fmt_f64(self.sigma[k]),
                fmt_f64(self.r_hat[k]),
                fmt_f64(o_hat),
                ds,
                b
            )?;
        }
        Ok(())
    }
}

pub fn uniform_knots(far: f64, n: usize) -> Vec<f64> {
    let step = far / (n - 1) as f64;
    let mut v: Vec<f64> = (0..n).map(|k| k as f64 * step).collect();
    v[n - 1] = far;
    v
}

fn validate_knots(knots: &[f64], far: f64) -> Result<()> {
    if knots.len() < 2 {
        return Err(contract(format!("a track needs at least 2 knots, got {}", knots.len())));
    }
    if knots[0] != 0.0 || *knots.last().unwrap() != far {
        return Err(contract(format!(
            "knots must start at 0 and end at the far bound {far}, got [{}, {}]",
            knots[0],
            knots.last().unwrap()
        )));
    }
    if let Some(w) = knots.windows(2).find(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
        return Err(contract(format!(
            "knots must be strictly increasing, found {} then {}",
            w[0], w[1]
        )));
    }
    Ok(())
}
