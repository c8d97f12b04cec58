//! Error-driven ray sampling.
//!
//! Starting from uniform knots and a relaxed scale `beta_plus` that certifies
//! the opacity error bound at `epsilon`, the sampler repeatedly adds knots
//! where the per-interval bound is largest and shrinks `beta_plus` by
//! bisection while keeping the certificate. The final knots and `beta_plus`
//! define an estimated opacity whose piecewise-linear inverse produces the
//! integration samples.

use std::io::{self, Write};

use rand::Rng;

use crate::bounds::{Ray, SampleTrack};
use crate::csv::fmt_f64;
use crate::density::DensityParams;
use crate::error::{contract, param, Result};
use crate::rng::{self, Purpose};
use crate::sdf::SdfScene;

/// Slack allowed on the certificate for floating-point rounding.
pub const CERTIFICATE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FinalSampleMode {
    /// One uniformly jittered target per stratum.
    RandomStratified,
    /// Stratum midpoints.
    Regular,
}

impl FinalSampleMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FinalSampleMode::RandomStratified => "random",
            FinalSampleMode::Regular => "regular",
        }
    }
}

impl std::str::FromStr for FinalSampleMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "random" | "random-stratified" | "stratified" => Ok(FinalSampleMode::RandomStratified),
            "regular" => Ok(FinalSampleMode::Regular),
            other => Err(format!("unknown sample mode `{other}` (expected `random` or `regular`)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub epsilon: f64,
    pub n_init: usize,
    pub m_final: usize,
    pub max_outer_iters: usize,
    pub max_bisect_iters: usize,
    pub rng_seed: u64,
    pub final_sample_mode: FinalSampleMode,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            n_init: 128,
            m_final: 64,
            max_outer_iters: 5,
            max_bisect_iters: 10,
            rng_seed: 0,
            final_sample_mode: FinalSampleMode::RandomStratified,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(param(format!("epsilon must be finite and > 0, got {}", self.epsilon)));
        }
        if self.n_init < 2 {
            return Err(param(format!("n_init must be >= 2, got {}", self.n_init)));
        }
        if self.m_final < 2 {
            return Err(param(format!("m_final must be >= 2, got {}", self.m_final)));
        }
        if self.max_outer_iters < 1 {
            return Err(param("max_outer_iters must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerReport {
    pub beta: f64,
    pub beta_plus: f64,
    /// `beta_plus` reached the target scale.
    pub converged: bool,
    pub outer_iters_used: usize,
    pub total_knots: usize,
    /// Global opacity error bound of the final knots at `beta_plus`.
    pub certified_bound: f64,
    /// Sorted integration samples in `[0, far]`.
    pub samples: Vec<f64>,
}

/// One row of the optional per-ray trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub outer_iter: usize,
    pub knot_count: usize,
    pub beta_plus: f64,
    pub bound_at_beta: f64,
    pub bound_at_beta_plus: f64,
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], mut w: W) -> io::Result<()> {
    writeln!(w, "outer_iter,knot_count,beta_plus,B_at_beta,B_at_beta_plus")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.outer_iter,
            r.knot_count,
            fmt_f64(r.beta_plus),
            fmt_f64(r.bound_at_beta),
            fmt_f64(r.bound_at_beta_plus)
        )?;
    }
    Ok(())
}

/// Everything a sampler run produces: the report, the final knots (with
/// caches at `beta_plus`) and the iteration trace.
#[derive(Debug, Clone)]
pub struct SamplerRun {
    pub report: SamplerReport,
    pub track: SampleTrack,
    pub trace: Vec<TraceRow>,
}

/// Smallest scale that certifies `epsilon` on `n` uniform knots over `[0, far]`
/// regardless of the geometry, never below `beta`.
///
/// With a fixed `alpha` this is `alpha far^2 / (4 (n - 1) ln(1 + epsilon))`.
/// Coupled parameters scale `alpha` along with `beta`, which turns the same
/// condition into `beta^2 >= far^2 / (4 (n - 1) ln(1 + epsilon))`.
pub fn beta_plus_init(params: &DensityParams, far: f64, n: usize, epsilon: f64) -> Result<f64> {
    if n < 2 {
        return Err(contract(format!("beta_plus_init needs n >= 2, got {n}")));
    }
    let budget = 4.0 * (n - 1) as f64 * epsilon.ln_1p();
    let relaxed = if params.is_coupled() {
        (far * far / budget).sqrt()
    } else {
        params.alpha() * far * far / budget
    };
    Ok(params.beta().max(relaxed))
}

/// Splits `n_add` new knots across intervals in proportion to `bounds`
/// (largest-remainder rounding, lowest index first on ties). Every interval
/// attaining the maximal bound receives at least one knot when `n_add` allows
/// it. All-zero (or non-finite) bounds fall back to an even split.
pub fn allocate(bounds: &[f64], n_add: usize) -> Vec<usize> {
    let n = bounds.len();
    let total: f64 = bounds.iter().sum();
    let weights: Vec<f64> = if total > 0.0 && total.is_finite() {
        bounds.iter().map(|b| b / total).collect()
    } else {
        vec![1.0 / n as f64; n]
    };
    let quotas: Vec<f64> = weights.iter().map(|w| w * n_add as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().take(n_add.saturating_sub(assigned)) {
        counts[k] += 1;
    }

    let max = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let argmax: Vec<usize> = (0..n).filter(|&k| weights[k] == max).collect();
    for &k in &argmax {
        if counts[k] > 0 {
            continue;
        }
        // Take a knot from the most generously served interval that can spare one.
        let donor = (0..n)
            .filter(|&j| counts[j] > 1 || (counts[j] == 1 && weights[j] < max))
            .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)));
        match donor {
            Some(j) => {
                counts[j] -= 1;
                counts[k] += 1;
            }
            None => break,
        }
    }
    counts
}

/// Adds `n_add` knots, distributed by [`allocate`] and equispaced inside
/// each chosen interval.
pub fn upsample(scene: &SdfScene, track: &SampleTrack, bounds: &[f64], n_add: usize) -> Result<SampleTrack> {
    if n_add < 1 {
        return Err(contract("upsample needs n_add >= 1"));
    }
    if bounds.len() != track.num_intervals() {
        return Err(contract(format!(
            "{} bounds for {} intervals",
            bounds.len(),
            track.num_intervals()
        )));
    }
    let mut refined = track.clone();
    refined.subdivide(scene, &allocate(bounds, n_add))?;
    Ok(refined)
}

/// Bisects `[beta_lo, beta_hi]` for at most `max_iters` steps and returns the
/// upper end of the final bracket, which always certifies `epsilon`.
///
/// Requires `B(beta_lo) > epsilon >= B(beta_hi)`. Bounds are evaluated at the
/// track's `alpha` with the trial scale.
pub fn bisect_beta(track: &SampleTrack, beta_lo: f64, beta_hi: f64, epsilon: f64, max_iters: usize) -> Result<f64> {
    let base = *track.params();
    let bound = |beta: f64| -> Result<f64> { Ok(track.global_bound_at(&base.with_beta(beta)?)) };
    if !(beta_lo > 0.0 && beta_lo < beta_hi) {
        return Err(contract(format!("invalid bracket [{beta_lo}, {beta_hi}]")));
    }
    let (b_lo, b_hi) = (bound(beta_lo)?, bound(beta_hi)?);
    if !(b_lo > epsilon && b_hi <= epsilon) {
        return Err(contract(format!(
            "bracket does not straddle epsilon = {epsilon}: B(lo) = {b_lo}, B(hi) = {b_hi}"
        )));
    }
    let (mut lo, mut hi) = (beta_lo, beta_hi);
    for _ in 0..max_iters {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if bound(mid)? <= epsilon {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Draws `m` samples from the piecewise-linear interpolation of the track's
/// estimated opacity, normalized by its value at the far bound. A track with
/// negligible total opacity falls back to the uniform distribution.
pub fn inverse_cdf_sample<R: Rng + ?Sized>(
    track: &SampleTrack,
    m: usize,
    mode: FinalSampleMode,
    rng: &mut R,
) -> Vec<f64> {
    let far = track.ray().far();
    let knots = track.knots();
    let opacity = track.opacity_at_knots();
    let total = *opacity.last().unwrap();
    let targets = (1..=m).map(|j| {
        let zeta = match mode {
            FinalSampleMode::Regular => 0.5,
            FinalSampleMode::RandomStratified => rng.random::<f64>(),
        };
        (j as f64 - zeta) / m as f64
    });
    let mut out: Vec<f64> = if total < 1e-12 {
        targets.map(|u| (u * far).clamp(0.0, far)).collect()
    } else {
        targets
            .map(|u| {
                let v = u * total;
                let k = opacity.partition_point(|&o| o <= v);
                if k == 0 {
                    0.0
                } else if k >= knots.len() {
                    far
                } else {
                    let (o0, o1) = (opacity[k - 1], opacity[k]);
                    let (t0, t1) = (knots[k - 1], knots[k]);
                    (t0 + (v - o0) / (o1 - o0) * (t1 - t0)).clamp(t0, t1)
                }
            })
            .collect()
    };
    out.sort_by(f64::total_cmp);
    out
}

/// Runs the sampler on one ray with an explicit random stream for the final
/// samples.
pub fn run_sampler<R: Rng + ?Sized>(
    scene: &SdfScene,
    ray: &Ray,
    params: &DensityParams,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<SamplerRun> {
    config.validate()?;
    let eps = config.epsilon;
    let beta = params.beta();

    let mut beta_plus = beta_plus_init(params, ray.far(), config.n_init, eps)?;
    let mut track = SampleTrack::uniform(scene, *ray, config.n_init, params.with_beta(beta_plus)?)?;
    let mut bound_at_beta = track.global_bound_at(params);
    if bound_at_beta <= eps {
        beta_plus = beta;
        track.set_params(*params);
    }
    let mut trace = vec![TraceRow {
        outer_iter: 0,
        knot_count: track.len(),
        beta_plus,
        bound_at_beta,
        bound_at_beta_plus: track.global_bound(),
    }];

    let mut iters = 0;
    while bound_at_beta > eps && iters < config.max_outer_iters {
        iters += 1;
        let refined = upsample(scene, &track, track.interval_bounds(), config.n_init)?;
        bound_at_beta = refined.global_bound_at(params);
        if bound_at_beta <= eps {
            beta_plus = beta;
            track = refined.with_params(*params);
        } else {
            let bound_at_plus = refined.global_bound();
            if bound_at_plus > eps {
                // Refinement loosened the certificate at the current scale;
                // keep the previous, certified knots.
                break;
            }
            track = refined;
            if bound_at_plus < eps {
                beta_plus = bisect_beta(&track, beta, beta_plus, eps, config.max_bisect_iters)?;
                track.set_params(params.with_beta(beta_plus)?);
            }
        }
        trace.push(TraceRow {
            outer_iter: iters,
            knot_count: track.len(),
            beta_plus,
            bound_at_beta,
            bound_at_beta_plus: track.global_bound(),
        });
    }

    let certified_bound = track.global_bound();
    debug_assert!(
        certified_bound <= eps + CERTIFICATE_SLACK,
        "certificate broken: B = {certified_bound} > {eps}"
    );
    let samples = inverse_cdf_sample(&track, config.m_final, config.final_sample_mode, rng);
    Ok(SamplerRun {
        report: SamplerReport {
            beta,
            beta_plus,
            converged: beta_plus == beta,
            outer_iters_used: iters,
            total_knots: track.len(),
            certified_bound,
            samples,
        },
        track,
        trace,
    })
}

/// [`run_sampler`] with the per-ray stream derived from the config seed.
pub fn run_sampler_indexed(
    scene: &SdfScene,
    ray: &Ray,
    params: &DensityParams,
    config: &SamplerConfig,
    index: u64,
) -> Result<SamplerRun> {
    let mut rng = rng::stream(config.rng_seed, index, Purpose::Sampler);
    run_sampler(scene, ray, params, config, &mut rng)
}
