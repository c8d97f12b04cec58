//! Discrete volume rendering over sampler output, analytic radiance models,
//! pinhole cameras and image output.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::bounds::Ray;
use crate::csv::fmt_f64;
use crate::density::DensityParams;
use crate::error::{param, Result};
use crate::math::{Rgb, Vec3};
use crate::rng::{self, Purpose};
use crate::sampler::{run_sampler, SamplerConfig};
use crate::sdf::SdfScene;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadianceModel {
    /// `albedo * (ambient + (1 - ambient) * max(0, n . l))`.
    Lambertian { albedo: Rgb, light_dir: Vec3, ambient: f64 },
    /// `(n + 1) / 2`.
    NormalShading,
    /// Diffuse plus a white specular lobe around the mirrored light direction.
    Phong {
        albedo: Rgb,
        light_dir: Vec3,
        specular: f64,
        shininess: f64,
    },
    ConstantEmission(Rgb),
}

impl RadianceModel {
    pub fn validate(&self) -> Result<()> {
        let unit = |l: &Vec3| {
            if (l.norm() - 1.0).abs() <= 1e-9 {
                Ok(())
            } else {
                Err(param(format!("light_dir must be a unit vector, got {l:?}")))
            }
        };
        let color = |c: &Rgb, what: &str| {
            if c.is_finite() && [c.r, c.g, c.b].iter().all(|v| (0.0..=1.0).contains(v)) {
                Ok(())
            } else {
                Err(param(format!("{what} components must lie in [0, 1], got {c:?}")))
            }
        };
        match self {
            RadianceModel::Lambertian {
                albedo,
                light_dir,
                ambient,
            } => {
                color(albedo, "albedo")?;
                unit(light_dir)?;
                if !(0.0..=1.0).contains(ambient) {
                    return Err(param(format!("ambient must lie in [0, 1], got {ambient}")));
                }
            }
            RadianceModel::NormalShading => {}
            RadianceModel::Phong {
                albedo,
                light_dir,
                specular,
                shininess,
            } => {
                color(albedo, "albedo")?;
                unit(light_dir)?;
                if !(specular.is_finite() && *specular >= 0.0) {
                    return Err(param(format!("specular must be >= 0, got {specular}")));
                }
                if !(shininess.is_finite() && *shininess > 0.0) {
                    return Err(param(format!("shininess must be > 0, got {shininess}")));
                }
            }
            RadianceModel::ConstantEmission(c) => color(c, "color")?,
        }
        Ok(())
    }

    /// Radiance leaving `_x` with unit normal `n` towards a viewer looking
    /// along `v`. Clamped to `[0, 1]`.
    pub fn eval(&self, _x: Vec3, n: Vec3, v: Vec3) -> Rgb {
        let out = match *self {
            RadianceModel::Lambertian {
                albedo,
                light_dir,
                ambient,
            } => albedo.scale(ambient + (1.0 - ambient) * n.dot(light_dir).max(0.0)),
            RadianceModel::NormalShading => Rgb::new(0.5 * (n.x + 1.0), 0.5 * (n.y + 1.0), 0.5 * (n.z + 1.0)),
            RadianceModel::Phong {
                albedo,
                light_dir,
                specular,
                shininess,
            } => {
                let ndl = n.dot(light_dir);
                let diffuse = albedo.scale(ndl.max(0.0));
                let reflected = n * (2.0 * ndl) - light_dir;
                let spec = if ndl > 0.0 {
                    specular * reflected.dot(-v).max(0.0).powf(shininess)
                } else {
                    0.0
                };
                diffuse + Rgb::new(spec, spec, spec)
            }
            RadianceModel::ConstantEmission(c) => c,
        };
        out.clamp01()
    }
}

/// Pinhole camera; rays pass through pixel centres, rows from the top.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    position: Vec3,
    forward: Vec3,
    right: Vec3,
    up: Vec3,
    tan_half_fov: f64,
    width: usize,
    height: usize,
}

impl Camera {
    pub fn new(position: Vec3, look_at: Vec3, up: Vec3, fov_y: f64, width: usize, height: usize) -> Result<Self> {
        if !(position.is_finite() && look_at.is_finite() && up.is_finite()) {
            return Err(param("camera vectors must be finite"));
        }
        let forward = (look_at - position)
            .try_normalize()
            .ok_or_else(|| param("camera look_at must differ from position"))?;
        let right = forward
            .cross(up)
            .try_normalize()
            .ok_or_else(|| param("camera up must be non-zero and not parallel to the view direction"))?;
        if !(fov_y > 0.0 && fov_y < std::f64::consts::PI) {
            return Err(param(format!("field of view must lie in (0, pi), got {fov_y}")));
        }
        if width < 1 || height < 1 {
            return Err(param(format!("image size must be at least 1x1, got {width}x{height}")));
        }
        Ok(Self {
            position,
            forward,
            right,
            up: right.cross(forward),
            tan_half_fov: (0.5 * fov_y).tan(),
            width,
            height,
        })
    }

    pub fn position(&self) -> Vec3 {
        self.position
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn direction(&self, px: usize, py: usize) -> Vec3 {
        let aspect = self.width as f64 / self.height as f64;
        let u = (2.0 * (px as f64 + 0.5) / self.width as f64 - 1.0) * self.tan_half_fov * aspect;
        let v = (1.0 - 2.0 * (py as f64 + 0.5) / self.height as f64) * self.tan_half_fov;
        (self.forward + self.right * u + self.up * v).normalize()
    }

    pub fn ray(&self, scene: &SdfScene, px: usize, py: usize) -> Result<Ray> {
        Ray::towards(scene, self.position, self.direction(px, py))
    }
}

/// Compositing weights for sorted samples: `tau[i] = (1 - p_i) prod_{j<i} p_j`
/// with `p_i = exp(-sigma_i delta_i)`, and the transmittance left after the
/// last segment.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositingWeights {
    /// One weight per segment (`m - 1` entries).
    pub tau: Vec<f64>,
    /// Weight of the last sample: `prod_{j<m} p_j`.
    pub residual: f64,
}

impl CompositingWeights {
    pub fn total(&self) -> f64 {
        self.tau.iter().sum::<f64>() + self.residual
    }
}

pub fn discrete_weights(samples: &[f64], sigmas: &[f64]) -> Result<CompositingWeights> {
    if samples.len() < 2 || samples.len() != sigmas.len() {
        return Err(param(format!(
            "need at least two samples with one density each, got {} samples and {} densities",
            samples.len(),
            sigmas.len()
        )));
    }
    let mut transmittance = 1.0;
    let mut tau = Vec::with_capacity(samples.len() - 1);
    for (w, sigma) in samples.windows(2).zip(sigmas) {
        let depth = sigma * (w[1] - w[0]);
        tau.push(transmittance * -(-depth).exp_m1());
        transmittance *= (-depth).exp();
    }
    Ok(CompositingWeights {
        tau,
        residual: transmittance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelSample {
    pub color: Rgb,
    /// `sum_i tau_i s_i` over the segments.
    pub expected_depth: f64,
    pub residual_transmittance: f64,
    pub beta_plus: f64,
    pub outer_iters: usize,
    pub converged: bool,
    pub certified_bound: f64,
}

/// Shared inputs of every ray in a render.
#[derive(Debug, Clone, Copy)]
pub struct RenderSettings<'a> {
    pub scene: &'a SdfScene,
    pub params: &'a DensityParams,
    pub radiance: &'a RadianceModel,
    pub sampler: &'a SamplerConfig,
    pub background: Rgb,
}

/// Renders one ray, drawing the final samples from the stream of `index`.
///
/// The quadrature nodes are the ray start, the sampler output and the far
/// bound; the last node's weight is composited over the background.
pub fn render_ray(settings: &RenderSettings, ray: &Ray, index: u64) -> Result<PixelSample> {
    let RenderSettings {
        scene,
        params,
        radiance,
        sampler,
        background,
    } = *settings;
    let mut rng = rng::stream(sampler.rng_seed, index, Purpose::Sampler);
    let run = run_sampler(scene, ray, params, sampler, &mut rng)?;
    let report = &run.report;

    let mut nodes = Vec::with_capacity(report.samples.len() + 2);
    nodes.push(0.0);
    for &s in report.samples.iter().chain(std::iter::once(&ray.far())) {
        if s > *nodes.last().unwrap() {
            nodes.push(s);
        }
    }
    let points: Vec<Vec3> = nodes.iter().map(|&t| ray.at(t)).collect();
    let sigmas: Vec<f64> = points.iter().map(|&x| params.sigma(scene.eval(x))).collect();
    let weights = discrete_weights(&nodes, &sigmas)?;

    let mut color = background.scale(weights.residual);
    let mut depth = 0.0;
    for ((&tau, &t), &x) in weights.tau.iter().zip(&nodes).zip(&points) {
        if tau == 0.0 {
            continue;
        }
        let n = scene.gradient(x).grad.try_normalize().unwrap_or(-ray.direction());
        color += radiance.eval(x, n, ray.direction()).scale(tau);
        depth += tau * t;
    }
    Ok(PixelSample {
        color,
        expected_depth: depth,
        residual_transmittance: weights.residual,
        beta_plus: report.beta_plus,
        outer_iters: report.outer_iters_used,
        converged: report.converged,
        certified_bound: report.certified_bound,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedImage {
    pub width: usize,
    pub height: usize,
    /// Row-major, top row first.
    pub pixels: Vec<PixelSample>,
}

/// Runs `f` on a pool of `workers` threads (0 picks the rayon default).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| param(format!("cannot start {workers} worker threads: {e}")))?;
    Ok(pool.install(f))
}

pub fn render_image(settings: &RenderSettings, camera: &Camera, workers: usize) -> Result<RenderedImage> {
    let scene = settings.scene;
    if camera.position().norm() >= scene.bounding_radius() {
        return Err(param(format!(
            "camera at distance {} from the origin lies outside the bounding radius {}",
            camera.position().norm(),
            scene.bounding_radius()
        )));
    }
    settings.radiance.validate()?;
    settings.sampler.validate()?;
    let (w, h) = (camera.width(), camera.height());
    let pixels = with_workers(workers, || {
        (0..w * h)
            .into_par_iter()
            .map(|i| {
                let ray = camera.ray(scene, i % w, i / w)?;
                render_ray(settings, &ray, i as u64)
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(RenderedImage {
        width: w,
        height: h,
        pixels,
    })
}

/// Linear value to an 8-bit code: gamma 1/2.2, then round half up.
pub fn encode_channel(v: f64) -> u8 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (v.powf(1.0 / 2.2) * 255.0 + 0.5).floor().min(255.0) as u8
}

impl RenderedImage {
    pub fn write_ppm<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        let mut bytes = Vec::with_capacity(3 * self.pixels.len());
        for p in &self.pixels {
            bytes.extend(p.color.to_array().map(encode_channel));
        }
        w.write_all(&bytes)
    }

    pub fn write_diagnostics<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "pixel_x,pixel_y,expected_depth,residual_T,beta_plus,outer_iters")?;
        for (i, p) in self.pixels.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                i % self.width,
                i / self.width,
                fmt_f64(p.expected_depth),
                fmt_f64(p.residual_transmittance),
                fmt_f64(p.beta_plus),
                p.outer_iters
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdf::SdfNode;
    use proptest::prelude::*;

    fn sphere_scene() -> SdfScene {
        SdfScene::with_root(SdfNode::sphere(Vec3::ZERO, 1.0).unwrap(), 3.0).unwrap()
    }

    #[test]
    fn weight_examples() {
        let s = [0.0, 1.0, 2.0, 3.0];
        let w = discrete_weights(&s, &[0.0; 4]).unwrap();
        assert_eq!(w.tau, vec![0.0; 3]);
        assert_eq!(w.residual, 1.0);

        let w = discrete_weights(&s, &[1e6, 1.0, 1.0, 1.0]).unwrap();
        assert!((w.tau[0] - 1.0).abs() < 1e-12);
        assert!(w.tau[1..].iter().all(|t| *t < 1e-12) && w.residual < 1e-12);

        assert!(discrete_weights(&[0.0], &[1.0]).is_err());
        assert!(discrete_weights(&s, &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn weights_sum_to_one(
            raw in prop::collection::vec((1e-6f64..1.0, 0.0f64..1e3), 2..200),
        ) {
            let mut t = 0.0;
            let samples: Vec<f64> = raw.iter().map(|(d, _)| { t += d; t }).collect();
            let sigmas: Vec<f64> = raw.iter().map(|(_, s)| *s).collect();
            let w = discrete_weights(&samples, &sigmas).unwrap();
            prop_assert!(w.tau.iter().all(|x| *x >= 0.0) && w.residual >= 0.0);
            prop_assert!((w.total() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn constant_emission_through_center_is_white() {
        let scene = sphere_scene();
        let params = DensityParams::coupled(1e-3).unwrap();
        let radiance = RadianceModel::ConstantEmission(Rgb::WHITE);
        let sampler = SamplerConfig::default();
        let settings = RenderSettings {
            scene: &scene,
            params: &params,
            radiance: &radiance,
            sampler: &sampler,
            background: Rgb::BLACK,
        };
        let ray = Ray::towards(&scene, Vec3::new(0.0, 0.0, -2.5), Vec3::Z).unwrap();
        let px = render_ray(&settings, &ray, 0).unwrap();
        for c in px.color.to_array() {
            assert!((c - 1.0).abs() < 1e-3, "{:?}", px.color);
        }
        let tol = 5.0 * 1e-3 * (1e3f64).ln();
        assert!((px.expected_depth - 1.5).abs() < tol, "{}", px.expected_depth);
    }

    #[test]
    fn clamp_is_shaded_when_nothing_else_is_hit() {
        let scene = SdfScene::empty(3.0).unwrap();
        let params = DensityParams::coupled(1e-2).unwrap();
        let radiance = RadianceModel::NormalShading;
        let sampler = SamplerConfig::default();
        let settings = RenderSettings {
            scene: &scene,
            params: &params,
            radiance: &radiance,
            sampler: &sampler,
            background: Rgb::BLACK,
        };
        let ray = Ray::towards(&scene, Vec3::ZERO, Vec3::X).unwrap();
        let px = render_ray(&settings, &ray, 0).unwrap();
        // Inward clamp normal (-1, 0, 0) shades as (0, 0.5, 0.5).
        assert!(px.residual_transmittance < 1e-6);
        assert!((px.color.r - 0.0).abs() < 1e-2 && (px.color.g - 0.5).abs() < 1e-2);
        assert!((px.expected_depth - 3.0).abs() < 0.05);
    }

    #[test]
    fn radiance_models() {
        let l = Vec3::new(0.0, 0.0, -1.0);
        let lam = RadianceModel::Lambertian {
            albedo: Rgb::new(0.8, 0.4, 0.2),
            light_dir: l,
            ambient: 0.25,
        };
        let c = lam.eval(Vec3::ZERO, -Vec3::Z, Vec3::Z);
        assert!((c.r - 0.8).abs() < 1e-15 && (c.b - 0.2).abs() < 1e-15);
        let c = lam.eval(Vec3::ZERO, Vec3::Z, Vec3::Z);
        assert!((c.r - 0.2).abs() < 1e-15);
        let n = RadianceModel::NormalShading.eval(Vec3::ZERO, Vec3::X, Vec3::Z);
        assert_eq!(n, Rgb::new(1.0, 0.5, 0.5));
        let phong = RadianceModel::Phong {
            albedo: Rgb::new(0.5, 0.5, 0.5),
            light_dir: l,
            specular: 0.7,
            shininess: 16.0,
        };
        // Head-on: the mirrored light points back at the viewer.
        let c = phong.eval(Vec3::ZERO, -Vec3::Z, Vec3::Z);
        assert_eq!(c, Rgb::new(1.0, 1.0, 1.0));
        let bad = RadianceModel::Lambertian {
            albedo: Rgb::WHITE,
            light_dir: Vec3::new(1.0, 1.0, 0.0),
            ambient: 0.0,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn camera_geometry() {
        let cam = Camera::new(Vec3::new(0.0, 0.0, -2.0), Vec3::ZERO, Vec3::Y, 0.5 * std::f64::consts::PI, 2, 2).unwrap();
        let d = cam.direction(0, 0);
        // Top-left pixel looks up and to the left (right = forward x up = -x).
        assert!(d.y > 0.0 && d.x > 0.0 && d.z > 0.0);
        let one = Camera::new(Vec3::new(0.0, 0.0, -2.0), Vec3::ZERO, Vec3::Y, 1.0, 1, 1).unwrap();
        assert_eq!(one.direction(0, 0), Vec3::Z);
        assert!(Camera::new(Vec3::ZERO, Vec3::ZERO, Vec3::Y, 1.0, 1, 1).is_err());
        assert!(Camera::new(Vec3::ZERO, Vec3::Z, Vec3::Z, 1.0, 1, 1).is_err());
        assert!(Camera::new(Vec3::ZERO, Vec3::Z, Vec3::Y, 0.0, 1, 1).is_err());
        assert!(Camera::new(Vec3::ZERO, Vec3::Z, Vec3::Y, 1.0, 0, 1).is_err());
    }

    #[test]
    fn ppm_encoding() {
        assert_eq!(encode_channel(0.0), 0);
        assert_eq!(encode_channel(1.0), 255);
        assert_eq!(encode_channel(2.0), 255);
        assert_eq!(encode_channel(f64::NAN), 0);
        // 0.5^(1/2.2) * 255 = 186.08...
        assert_eq!(encode_channel(0.5), 186);
        let px = PixelSample {
            color: Rgb::new(1.0, 0.0, 0.5),
            expected_depth: 1.0,
            residual_transmittance: 0.0,
            beta_plus: 0.1,
            outer_iters: 2,
            converged: false,
            certified_bound: 0.1,
        };
        let img = RenderedImage {
            width: 1,
            height: 1,
            pixels: vec![px],
        };
        let mut buf = Vec::new();
        img.write_ppm(&mut buf).unwrap();
        assert_eq!(buf, b"P6\n1 1\n255\n\xff\x00\xba".to_vec());
        let mut csv = Vec::new();
        img.write_diagnostics(&mut csv).unwrap();
        assert_eq!(
            String::from_utf8(csv).unwrap(),
            "pixel_x,pixel_y,expected_depth,residual_T,beta_plus,outer_iters\n0,0,1.0,0.0,0.1,2\n"
        );
    }

    #[test]
    fn single_pixel_image_is_the_central_ray() {
        let scene = sphere_scene();
        let params = DensityParams::coupled(1e-2).unwrap();
        let radiance = RadianceModel::NormalShading;
        let sampler = SamplerConfig::default();
        let settings = RenderSettings {
            scene: &scene,
            params: &params,
            radiance: &radiance,
            sampler: &sampler,
            background: Rgb::BLACK,
        };
        let cam = Camera::new(Vec3::new(0.3, 0.1, -2.5), Vec3::ZERO, Vec3::Y, 0.8, 1, 1).unwrap();
        let img = render_image(&settings, &cam, 1).unwrap();
        let ray = Ray::towards(&scene, cam.position(), -cam.position()).unwrap();
        assert_eq!(img.pixels[0], render_ray(&settings, &ray, 0).unwrap());
        let outside = Camera::new(Vec3::new(0.0, 0.0, -5.0), Vec3::ZERO, Vec3::Y, 0.8, 1, 1).unwrap();
        assert!(render_image(&settings, &outside, 1).is_err());
    }
}
