//! Signed-distance volume rendering with certified opacity error bounds.

pub mod bounds;
pub mod csv;
pub mod density;
pub mod error;
pub mod harness;
pub mod math;
pub mod oracle;
pub mod render;
pub mod rng;
pub mod sampler;
pub mod scene_file;
pub mod sdf;

pub use bounds::{d_star, lipschitz_bound, opacity_error_bound, OpacityError, Ray, SampleTrack};
pub use density::{density_at, laplace_cdf, laplace_pdf, DensityParams};
pub use error::{Error, Result};
pub use math::{Rgb, Vec3};
pub use oracle::{opacity_oracle, OpacityCurve};
pub use sampler::{run_sampler, run_sampler_indexed, FinalSampleMode, SamplerConfig, SamplerReport, SamplerRun};
pub use sdf::{eval_sdf, grad_sdf, SdfGradient, SdfNode, SdfScene};
pub use render::{discrete_weights, render_image, render_ray, Camera, PixelSample, RadianceModel, RenderSettings, RenderedImage};
pub use scene_file::SceneFile;
