//! Density as a transformed signed distance: `sigma(x) = alpha * Psi_beta(-d(x))`
//! where `Psi_beta` is the zero-mean Laplace CDF with scale `beta`.

use crate::error::{param, Result};
use crate::math::Vec3;
use crate::sdf::SdfScene;

/// Laplace CDF with zero mean and scale `beta`.
///
/// Each branch only exponentiates a non-positive argument, so the function
/// never overflows; far tails underflow to exactly 0 or saturate to 1.
#[inline]
pub fn laplace_cdf(s: f64, beta: f64) -> f64 {
    if s <= 0.0 {
        0.5 * (s / beta).exp()
    } else {
        1.0 - 0.5 * (-s / beta).exp()
    }
}

/// Laplace PDF with zero mean and scale `beta`.
#[inline]
pub fn laplace_pdf(s: f64, beta: f64) -> f64 {
    (-s.abs() / beta).exp() / (2.0 * beta)
}

/// Density rate `alpha` and Laplace scale `beta`.
///
/// When `coupled` is set the pair satisfies `alpha = 1 / beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityParams {
    alpha: f64,
    beta: f64,
    coupled: bool,
}

impl DensityParams {
    /// `alpha = 1 / beta`.
    pub fn coupled(beta: f64) -> Result<Self> {
        check_scale(beta)?;
        Ok(Self {
            alpha: 1.0 / beta,
            beta,
            coupled: true,
        })
    }

    pub fn decoupled(alpha: f64, beta: f64) -> Result<Self> {
        check_scale(beta)?;
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(param(format!("alpha must be finite and > 0, got {alpha}")));
        }
        Ok(Self {
            alpha,
            beta,
            coupled: false,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn is_coupled(&self) -> bool {
        self.coupled
    }

    /// Same parameterization at a different scale: coupled parameters stay
    /// coupled (`alpha = 1 / beta`), decoupled ones keep their `alpha`.
    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        check_scale(beta)?;
        if beta == self.beta {
            return Ok(*self);
        }
        if self.coupled {
            Self::coupled(beta)
        } else {
            Self::decoupled(self.alpha, beta)
        }
    }

    /// Density for a signed distance `d`.
    #[inline]
    pub fn sigma(&self, d: f64) -> f64 {
        self.alpha * laplace_cdf(-d, self.beta)
    }

    /// Global Lipschitz constant of the density along any unit-speed path.
    pub fn peak_rate(&self) -> f64 {
        self.alpha / (2.0 * self.beta)
    }
}

fn check_scale(beta: f64) -> Result<()> {
    if beta.is_finite() && beta > 0.0 {
        Ok(())
    } else {
        Err(param(format!("beta must be finite and > 0, got {beta}")))
    }
}

pub fn density_at(scene: &SdfScene, params: &DensityParams, x: Vec3) -> f64 {
    params.sigma(scene.eval(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdf::SdfNode;
    use proptest::prelude::*;

    #[test]
    fn cdf_examples() {
        for beta in [1e-8, 1e-3, 0.5, 7.0] {
            assert_eq!(laplace_cdf(0.0, beta), 0.5);
            assert_eq!(laplace_cdf(f64::INFINITY, beta), 1.0);
            assert_eq!(laplace_cdf(f64::NEG_INFINITY, beta), 0.0);
            assert_eq!(laplace_cdf(1e6, beta), 1.0);
            assert_eq!(laplace_cdf(-1e6, beta), 0.0);
            let q = laplace_cdf(-beta * std::f64::consts::LN_2, beta);
            assert!((q - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn pdf_examples() {
        for beta in [1e-3, 0.25, 2.0] {
            assert_eq!(laplace_pdf(0.0, beta), 1.0 / (2.0 * beta));
            assert_eq!(laplace_pdf(0.3, beta), laplace_pdf(-0.3, beta));
        }
    }

    #[test]
    fn pdf_integrates_to_one() {
        // Trapezoid rule on [-10 beta, 10 beta] with 10^6 points; the tails
        // beyond carry e^-10 of the mass.
        let beta = 0.37;
        let n = 1_000_000;
        let (a, b) = (-10.0 * beta, 10.0 * beta);
        let h = (b - a) / (n - 1) as f64;
        let mut sum = 0.5 * (laplace_pdf(a, beta) + laplace_pdf(b, beta));
        for i in 1..n - 1 {
            sum += laplace_pdf(a + i as f64 * h, beta);
        }
        let tails = (-10.0f64).exp();
        assert!((sum * h + tails - 1.0).abs() < 1e-6, "{}", sum * h);
    }

    #[test]
    fn pdf_is_cdf_derivative() {
        let beta = 0.2;
        for s in [-0.7, -0.1, 0.05, 0.4] {
            let h = 1e-6;
            let fd = (laplace_cdf(s + h, beta) - laplace_cdf(s - h, beta)) / (2.0 * h);
            assert!((fd - laplace_pdf(s, beta)).abs() < 1e-6);
        }
    }

    #[test]
    fn density_examples() {
        let scene = SdfScene::with_root(SdfNode::sphere(Vec3::ZERO, 1.0).unwrap(), 3.0).unwrap();
        let p = DensityParams::decoupled(3.0, 0.1).unwrap();
        assert_eq!(density_at(&scene, &p, Vec3::new(1.0, 0.0, 0.0)), 1.5);
        assert_eq!(p.sigma(-1.0), 3.0 * (1.0 - 0.5 * (-10.0f64).exp()));

        let sharp = DensityParams::decoupled(1000.0, 0.001).unwrap();
        let v = density_at(&scene, &sharp, Vec3::new(0.5, 0.0, 0.0));
        assert!(v.is_finite());
        assert_eq!(v, 1000.0 * (1.0 - 0.5 * (-500.0f64).exp()));
    }

    #[test]
    fn params_validation() {
        assert!(DensityParams::coupled(0.0).is_err());
        assert!(DensityParams::coupled(-1.0).is_err());
        assert!(DensityParams::decoupled(0.0, 1.0).is_err());
        assert!(DensityParams::decoupled(f64::INFINITY, 1.0).is_err());
        for beta in [1e-8, 1e-3, 0.1, 3.0] {
            let p = DensityParams::coupled(beta).unwrap();
            assert!((p.alpha() * p.beta() - 1.0).abs() <= 1e-12);
            assert!(p.is_coupled());
        }
        let p = DensityParams::coupled(0.01).unwrap();
        let q = p.with_beta(0.5).unwrap();
        assert_eq!(q.alpha(), 2.0);
        assert!(q.is_coupled());
        assert_eq!(p.with_beta(0.01).unwrap(), p);
        let p = DensityParams::decoupled(7.0, 0.01).unwrap();
        let q = p.with_beta(0.5).unwrap();
        assert_eq!(q.alpha(), 7.0);
        assert!(!q.is_coupled());
    }

    #[test]
    fn converges_to_scaled_indicator() {
        let alpha = 4.0;
        for d in [-0.5, -0.01, 0.02, 0.3] {
            for beta in [1e-1, 1e-3, 1e-6] {
                let p = DensityParams::decoupled(alpha, beta).unwrap();
                let indicator = if d < 0.0 { alpha } else { 0.0 };
                let tol = alpha * (-(d as f64).abs() / beta).exp();
                assert!((p.sigma(d) - indicator).abs() <= tol);
            }
        }
    }

    proptest! {
        #[test]
        fn nonincreasing_in_distance(mut ds in proptest::collection::vec(-5.0f64..5.0, 2..50),
                                     beta in 1e-6f64..2.0, alpha in 1e-3f64..1e4) {
            let p = DensityParams::decoupled(alpha, beta).unwrap();
            ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for w in ds.windows(2) {
                prop_assert!(p.sigma(w[1]) <= p.sigma(w[0]));
            }
        }

        #[test]
        fn finite_and_in_range(d in -1e6f64..1e6, log_beta in -8.0f64..1.0) {
            let beta = 10f64.powf(log_beta);
            let p = DensityParams::coupled(beta).unwrap();
            let s = p.sigma(d);
            prop_assert!(s.is_finite());
            prop_assert!((0.0..=p.alpha()).contains(&s));
        }

        #[test]
        fn globally_lipschitz_along_rays(s in 0.0f64..4.0, t in 0.0f64..4.0,
                                         dir in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0),
                                         log_beta in -3.0f64..0.0) {
            let v = Vec3::new(dir.0, dir.1, dir.2);
            prop_assume!(v.norm() > 1e-3);
            let v = v.normalize();
            let scene = SdfScene::with_root(SdfNode::sphere(Vec3::ZERO, 1.0).unwrap(), 3.0).unwrap();
            let p = DensityParams::coupled(10f64.powf(log_beta)).unwrap();
            let c = Vec3::new(0.0, 0.0, -2.0);
            let ds = density_at(&scene, &p, c + v * s);
            let dt = density_at(&scene, &p, c + v * t);
            prop_assert!((ds - dt).abs() <= p.peak_rate() * (s - t).abs() * (1.0 + 1e-12) + 1e-12);
        }
    }
}
