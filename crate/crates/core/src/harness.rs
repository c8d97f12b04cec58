//! Command implementations behind the `sdfvol` binary: rendering a scene
//! file, certifying sampled rays against the reference oracle, and comparing
//! sampling strategies.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand_distr::{Distribution, UnitBall, UnitSphere};
use rayon::prelude::*;

use crate::bounds::{Ray, SampleTrack};
use crate::csv::fmt_f64;
use crate::density::DensityParams;
use crate::error::{param, Error, Result};
use crate::math::Vec3;
use crate::oracle::opacity_oracle;
use crate::render::{render_image, with_workers, RenderSettings, RenderedImage};
use crate::rng::{self, Purpose};
use crate::sampler::{inverse_cdf_sample, run_sampler, SamplerConfig};
use crate::scene_file::SceneFile;
use crate::sdf::SdfScene;

/// Slack on both certification inequalities.
pub const CERTIFY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the scene file's sampler seed.
    pub seed: Option<u64>,
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
    /// Directory for outputs with relative paths.
    pub out_dir: PathBuf,
}

impl RunOptions {
    fn seed_for(&self, file: &SceneFile) -> u64 {
        self.seed.unwrap_or(file.sampler.rng_seed)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out_dir.join(p)
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err)?;
    }
    File::create(path).map(BufWriter::new).map_err(io_err)
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scene".to_string())
}

pub fn render_scene_file(file: &SceneFile, seed: u64, threads: usize) -> Result<RenderedImage> {
    let scene = file.to_scene()?;
    let sampler = SamplerConfig {
        rng_seed: seed,
        ..file.sampler
    };
    let settings = RenderSettings {
        scene: &scene,
        params: &file.density,
        radiance: &file.radiance,
        sampler: &sampler,
        background: file.output.background,
    };
    render_image(&settings, &file.camera.to_camera()?, threads)
}

#[derive(Debug)]
pub struct RenderOutcome {
    pub image: RenderedImage,
    pub image_path: PathBuf,
    pub csv_path: Option<PathBuf>,
}

pub fn cmd_render(scene_path: &Path, opts: &RunOptions) -> Result<RenderOutcome> {
    let file = SceneFile::load(scene_path)?;
    let image = render_scene_file(&file, opts.seed_for(&file), opts.threads)?;
    let image_path = opts.resolve(&file.output.image);
    write_file(&image_path, |w| image.write_ppm(w))?;
    let csv_path = file.output.csv.as_deref().map(|p| opts.resolve(p));
    if let Some(p) = &csv_path {
        write_file(p, |w| image.write_diagnostics(w))?;
    }
    Ok(RenderOutcome {
        image,
        image_path,
        csv_path,
    })
}

/// Random test ray `index`: origin uniform on the sphere of radius `r / 1.1`,
/// aimed at a uniform point of the ball of radius `r / 2`.
pub fn random_ray(scene: &SdfScene, seed: u64, index: u64) -> Result<Ray> {
    let r = scene.bounding_radius();
    let mut rng = rng::stream(seed, index, Purpose::RayGeometry);
    let origin = Vec3::from(UnitSphere.sample(&mut rng)) * (r / 1.1);
    let target = Vec3::from(UnitBall.sample(&mut rng)) * (0.5 * r);
    Ray::towards(scene, origin, target - origin)
}

/// First crossing of the unclamped geometry by sphere tracing, if any.
pub fn first_hit(scene: &SdfScene, ray: &Ray) -> Option<f64> {
    let root = scene.root()?;
    let mut t = 0.0;
    for _ in 0..10_000 {
        let d = root.eval(ray.at(t));
        if d <= 1e-9 {
            return Some(t);
        }
        t += d;
        if t > ray.far() {
            return None;
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RayStatus {
    Ok,
    Violation,
    OracleFailed,
}

impl RayStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RayStatus::Ok => "ok",
            RayStatus::Violation => "violation",
            RayStatus::OracleFailed => "oracle_failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifyRow {
    pub ray: usize,
    pub origin: Vec3,
    pub direction: Vec3,
    pub hits_surface: bool,
    pub beta: f64,
    pub beta_plus: f64,
    pub converged: bool,
    pub outer_iters: usize,
    pub knots: usize,
    pub certified_bound: f64,
    /// Largest `|O - O_hat|` over knots and interval midpoints.
    pub oracle_max_error: Option<f64>,
    pub status: RayStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifyReport {
    pub rows: Vec<CertifyRow>,
    pub epsilon: f64,
}

impl CertifyReport {
    pub fn violations(&self) -> usize {
        self.count(RayStatus::Violation)
    }

    pub fn oracle_failures(&self) -> usize {
        self.count(RayStatus::OracleFailed)
    }

    fn count(&self, s: RayStatus) -> usize {
        self.rows.iter().filter(|r| r.status == s).count()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "ray,origin_x,origin_y,origin_z,dir_x,dir_y,dir_z,hits_surface,beta,beta_plus,converged,outer_iters,knots,certified_bound,oracle_max_error,status"
        )?;
        for r in &self.rows {
            let [ox, oy, oz] = r.origin.to_array().map(fmt_f64);
            let [dx, dy, dz] = r.direction.to_array().map(fmt_f64);
            writeln!(
                w,
                "{},{ox},{oy},{oz},{dx},{dy},{dz},{},{},{},{},{},{},{},{},{}",
                r.ray,
                r.hits_surface,
                fmt_f64(r.beta),
                fmt_f64(r.beta_plus),
                r.converged,
                r.outer_iters,
                r.knots,
                fmt_f64(r.certified_bound),
                r.oracle_max_error.map(fmt_f64).unwrap_or_default(),
                r.status.as_str()
            )?;
        }
        Ok(())
    }
}

/// Runs the sampler on one ray and checks
/// `max |O - O_hat| <= certified bound <= epsilon` (each with
/// [`CERTIFY_TOLERANCE`] slack), the reference opacity being taken at the
/// scale the certificate was issued for.
pub fn certify_ray(
    scene: &SdfScene,
    ray: &Ray,
    params: &DensityParams,
    config: &SamplerConfig,
    oracle_resolution: usize,
    index: u64,
) -> Result<CertifyRow> {
    let mut rng = rng::stream(config.rng_seed, index, Purpose::Sampler);
    let run = run_sampler(scene, ray, params, config, &mut rng)?;
    let track = &run.track;
    let knots = track.knots();
    let mids: Vec<f64> = knots.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let mut queries = knots.to_vec();
    queries.extend_from_slice(&mids);

    let mut estimate = track.opacity_at_knots();
    for &t in &mids {
        estimate.push(track.opacity_hat(t)?);
    }

    let report = &run.report;
    let (oracle_max_error, status) = match opacity_oracle(scene, ray, track.params(), oracle_resolution, &queries) {
        Ok(curve) => {
            let err = curve
                .opacity
                .iter()
                .zip(&estimate)
                .map(|(o, e)| (o - e).abs())
                .fold(0.0, f64::max);
            let ok = err <= report.certified_bound + CERTIFY_TOLERANCE
                && report.certified_bound <= config.epsilon + CERTIFY_TOLERANCE;
            (Some(err), if ok { RayStatus::Ok } else { RayStatus::Violation })
        }
        Err(Error::OracleRichardson { .. }) => (None, RayStatus::OracleFailed),
        Err(e) => return Err(e),
    };
    Ok(CertifyRow {
        ray: index as usize,
        origin: ray.origin(),
        direction: ray.direction(),
        hits_surface: first_hit(scene, ray).is_some(),
        beta: params.beta(),
        beta_plus: report.beta_plus,
        converged: report.converged,
        outer_iters: report.outer_iters_used,
        knots: track.len(),
        certified_bound: report.certified_bound,
        oracle_max_error,
        status,
    })
}

pub fn certify(file: &SceneFile, trials: usize, oracle_resolution: usize, seed: u64, threads: usize) -> Result<CertifyReport> {
    if trials < 1 {
        return Err(param("certify needs at least one trial"));
    }
    let scene = file.to_scene()?;
    let config = SamplerConfig {
        rng_seed: seed,
        ..file.sampler
    };
    let rows = with_workers(threads, || {
        (0..trials as u64)
            .into_par_iter()
            .map(|i| {
                let ray = random_ray(&scene, seed, i)?;
                certify_ray(&scene, &ray, &file.density, &config, oracle_resolution, i)
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(CertifyReport {
        rows,
        epsilon: config.epsilon,
    })
}

pub fn cmd_certify(
    scene_path: &Path,
    trials: usize,
    oracle_resolution: usize,
    opts: &RunOptions,
) -> Result<(CertifyReport, PathBuf)> {
    let file = SceneFile::load(scene_path)?;
    let report = certify(&file, trials, oracle_resolution, opts.seed_for(&file), opts.threads)?;
    let path = opts.out_dir.join(format!("{}_certify.csv", stem(scene_path)));
    write_file(&path, |w| report.write_csv(w))?;
    Ok((report, path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    Uniform256,
    Hierarchical2Level,
    Alg1Iter1,
    Alg1Iter5,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Uniform256,
        Strategy::Hierarchical2Level,
        Strategy::Alg1Iter1,
        Strategy::Alg1Iter5,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Uniform256 => "uniform-256",
            Strategy::Hierarchical2Level => "hierarchical-2level",
            Strategy::Alg1Iter1 => "alg1-iter1",
            Strategy::Alg1Iter5 => "alg1-iter5",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub ray: usize,
    pub hits_surface: bool,
    pub strategy: Strategy,
    /// Knots of the opacity estimate.
    pub knots: usize,
    /// Density evaluations spent choosing them.
    pub samples: usize,
    /// Largest `|O - O_hat|` at the true scale.
    pub max_error: f64,
    pub certified_bound: Option<f64>,
    pub beta_plus: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationResult {
    pub rows: Vec<AblationRow>,
    /// Summed per-ray time of each strategy, in [`Strategy::ALL`] order.
    pub wall_time: Vec<Duration>,
}

impl AblationResult {
    pub fn errors(&self, s: Strategy, surface_only: bool) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.strategy == s && (r.hits_surface || !surface_only))
            .map(|r| r.max_error)
            .collect()
    }

    /// Deterministic per-ray table; timings are left out.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "ray,hits_surface,strategy,knots,samples,max_error,certified_bound,beta_plus")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.ray,
                r.hits_surface,
                r.strategy.name(),
                r.knots,
                r.samples,
                fmt_f64(r.max_error),
                r.certified_bound.map(fmt_f64).unwrap_or_default(),
                r.beta_plus.map(fmt_f64).unwrap_or_default()
            )?;
        }
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "{:<22}{:>14}{:>14}{:>12}{:>12}\n",
            "strategy", "median_error", "max_error", "mean_knots", "time_s"
        );
        for (i, strat) in Strategy::ALL.iter().enumerate() {
            let errs = self.errors(*strat, false);
            let rows: Vec<&AblationRow> = self.rows.iter().filter(|r| r.strategy == *strat).collect();
            let mean_knots = rows.iter().map(|r| r.knots as f64).sum::<f64>() / rows.len().max(1) as f64;
            s.push_str(&format!(
                "{:<22}{:>14.3e}{:>14.3e}{:>12.1}{:>12.3}\n",
                strat.name(),
                median(&errs),
                errs.iter().cloned().fold(0.0, f64::max),
                mean_knots,
                self.wall_time[i].as_secs_f64()
            ));
        }
        s
    }
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Evaluation grid size for ablation errors, on top of each strategy's knots.
pub const ABLATION_GRID: usize = 2049;

struct StrategyRun {
    track: SampleTrack,
    samples: usize,
    certified_bound: Option<f64>,
    beta_plus: Option<f64>,
    elapsed: Duration,
}

fn run_strategy(
    strategy: Strategy,
    scene: &SdfScene,
    ray: &Ray,
    params: &DensityParams,
    config: &SamplerConfig,
    index: u64,
) -> Result<StrategyRun> {
    let start = Instant::now();
    let mut rng = rng::stream(config.rng_seed, index, Purpose::Sampler);
    let (track, samples, certified_bound, beta_plus) = match strategy {
        Strategy::Uniform256 => (SampleTrack::uniform(scene, *ray, 256, *params)?, 256, None, None),
        Strategy::Hierarchical2Level => {
            let coarse = SampleTrack::uniform(scene, *ray, 64, *params)?;
            let fine = inverse_cdf_sample(&coarse, 128, config.final_sample_mode, &mut rng);
            let mut knots: Vec<f64> = coarse.knots().iter().chain(&fine).copied().collect();
            knots.sort_by(f64::total_cmp);
            knots.dedup();
            (SampleTrack::new(scene, *ray, knots, *params)?, 64 + 128, None, None)
        }
        Strategy::Alg1Iter1 | Strategy::Alg1Iter5 => {
            let cfg = SamplerConfig {
                max_outer_iters: if strategy == Strategy::Alg1Iter1 { 1 } else { 5 },
                ..*config
            };
            let run = run_sampler(scene, ray, params, &cfg, &mut rng)?;
            let samples = run.track.len();
            (
                run.track.with_params(*params),
                samples,
                Some(run.report.certified_bound),
                Some(run.report.beta_plus),
            )
        }
    };
    Ok(StrategyRun {
        track,
        samples,
        certified_bound,
        beta_plus,
        elapsed: start.elapsed(),
    })
}

fn ablate_ray(
    scene: &SdfScene,
    params: &DensityParams,
    config: &SamplerConfig,
    oracle_resolution: usize,
    seed: u64,
    index: u64,
) -> Result<(Vec<AblationRow>, Vec<Duration>)> {
    let ray = random_ray(scene, seed, index)?;
    let hits_surface = first_hit(scene, &ray).is_some();
    let runs = Strategy::ALL
        .iter()
        .map(|s| run_strategy(*s, scene, &ray, params, config, index))
        .collect::<Result<Vec<_>>>()?;

    let grid: Vec<f64> = (0..ABLATION_GRID)
        .map(|i| ray.far() * i as f64 / (ABLATION_GRID - 1) as f64)
        .collect();
    let mut queries = grid.clone();
    for r in &runs {
        queries.extend_from_slice(r.track.knots());
    }
    let curve = opacity_oracle(scene, &ray, params, oracle_resolution, &queries)
        .map_err(|e| Error::Contract(format!("ablation ray {index}: {e}")))?;

    let mut rows = Vec::with_capacity(runs.len());
    let mut offset = grid.len();
    for (strategy, run) in Strategy::ALL.iter().zip(&runs) {
        let n = run.track.len();
        let own = offset..offset + n;
        offset += n;
        let mut err: f64 = 0.0;
        for (i, &t) in grid.iter().enumerate() {
            err = err.max((curve.opacity[i] - run.track.opacity_hat(t)?).abs());
        }
        for (i, o) in own.zip(run.track.opacity_at_knots()) {
            err = err.max((curve.opacity[i] - o).abs());
        }
        rows.push(AblationRow {
            ray: index as usize,
            hits_surface,
            strategy: *strategy,
            knots: n,
            samples: run.samples,
            max_error: err,
            certified_bound: run.certified_bound,
            beta_plus: run.beta_plus,
        });
    }
    Ok((rows, runs.iter().map(|r| r.elapsed).collect()))
}

pub fn ablate(file: &SceneFile, rays: usize, oracle_resolution: usize, seed: u64, threads: usize) -> Result<AblationResult> {
    if rays < 1 {
        return Err(param("ablate needs at least one ray"));
    }
    let scene = file.to_scene()?;
    let config = SamplerConfig {
        rng_seed: seed,
        ..file.sampler
    };
    let per_ray = with_workers(threads, || {
        (0..rays as u64)
            .into_par_iter()
            .map(|i| ablate_ray(&scene, &file.density, &config, oracle_resolution, seed, i))
            .collect::<Result<Vec<_>>>()
    })??;
    let mut wall_time = vec![Duration::ZERO; Strategy::ALL.len()];
    let mut rows = Vec::with_capacity(rays * Strategy::ALL.len());
    for (r, times) in per_ray {
        rows.extend(r);
        for (acc, t) in wall_time.iter_mut().zip(times) {
            *acc += t;
        }
    }
    Ok(AblationResult { rows, wall_time })
}

pub fn cmd_ablate(
    scene_path: &Path,
    rays: usize,
    oracle_resolution: usize,
    opts: &RunOptions,
) -> Result<(AblationResult, PathBuf)> {
    let file = SceneFile::load(scene_path)?;
    let result = ablate(&file, rays, oracle_resolution, opts.seed_for(&file), opts.threads)?;
    let path = opts.out_dir.join(format!("{}_ablate.csv", stem(scene_path)));
    write_file(&path, |w| result.write_csv(w))?;
    Ok((result, path))
}
