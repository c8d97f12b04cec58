//! Analytic signed-distance scenes.
//!
//! Distances are negative inside an object and positive in free space. Every
//! node evaluates to a 1-Lipschitz function: primitives are exact distance
//! functions and the CSG nodes combine children with `min`, `max` and negation.
//! A scene additionally clamps the root with its bounding sphere,
//! `d(x) = min(d_root(x), r - |x|)`, so that every ray leaving the sphere is
//! eventually occluded.
//!
//! `Intersection` gives a distance that is conservative (never larger in
//! magnitude than the true distance) but not exact near the composed surface.

use crate::error::{Error, Result};
use crate::math::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub enum SdfNode {
    Sphere {
        center: Vec3,
        radius: f64,
    },
    Box {
        center: Vec3,
        half_extents: Vec3,
    },
    /// Torus lying in the xz-plane around the y axis through `center`.
    Torus {
        center: Vec3,
        major_radius: f64,
        minor_radius: f64,
    },
    /// Half-space `normal . x <= offset`.
    Plane {
        normal: Vec3,
        offset: f64,
    },
    Translate {
        child: Box<SdfNode>,
        offset: Vec3,
    },
    Union(Vec<SdfNode>),
    Intersection(Vec<SdfNode>),
    Complement(Box<SdfNode>),
}

/// Gradient of the distance field together with a flag telling whether the
/// point is a smooth point of the field. At creases (exact CSG ties),
/// primitive centres and similar singular points the gradient of a
/// deterministically chosen branch is returned and `smooth` is false.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdfGradient {
    pub grad: Vec3,
    pub smooth: bool,
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    dist: f64,
    grad: Vec3,
    smooth: bool,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Geometry(format!("{name} must be finite and > 0, got {v}")))
    }
}

fn check_finite_vec(name: &str, v: Vec3) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Geometry(format!("{name} must be finite, got {v:?}")))
    }
}

impl SdfNode {
    pub fn sphere(center: Vec3, radius: f64) -> Result<Self> {
        let node = SdfNode::Sphere { center, radius };
        node.validate()?;
        Ok(node)
    }

    pub fn cuboid(center: Vec3, half_extents: Vec3) -> Result<Self> {
        let node = SdfNode::Box {
            center,
            half_extents,
        };
        node.validate()?;
        Ok(node)
    }

    pub fn torus(center: Vec3, major_radius: f64, minor_radius: f64) -> Result<Self> {
        let node = SdfNode::Torus {
            center,
            major_radius,
            minor_radius,
        };
        node.validate()?;
        Ok(node)
    }

    pub fn plane(normal: Vec3, offset: f64) -> Result<Self> {
        let node = SdfNode::Plane { normal, offset };
        node.validate()?;
        Ok(node)
    }

    pub fn translate(self, offset: Vec3) -> Self {
        SdfNode::Translate {
            child: Box::new(self),
            offset,
        }
    }

    pub fn complement(self) -> Self {
        SdfNode::Complement(Box::new(self))
    }

    /// Checks the construction invariants recursively.
    pub fn validate(&self) -> Result<()> {
        match self {
            SdfNode::Sphere { center, radius } => {
                check_finite_vec("sphere center", *center)?;
                check_positive("sphere radius", *radius)
            }
            SdfNode::Box {
                center,
                half_extents,
            } => {
                check_finite_vec("box center", *center)?;
                check_positive("box half-extent x", half_extents.x)?;
                check_positive("box half-extent y", half_extents.y)?;
                check_positive("box half-extent z", half_extents.z)
            }
            SdfNode::Torus {
                center,
                major_radius,
                minor_radius,
            } => {
                check_finite_vec("torus center", *center)?;
                check_positive("torus major radius", *major_radius)?;
                check_positive("torus minor radius", *minor_radius)
            }
            SdfNode::Plane { normal, offset } => {
                check_finite_vec("plane normal", *normal)?;
                if !offset.is_finite() {
                    return Err(Error::Geometry(format!("plane offset must be finite, got {offset}")));
                }
                let n = normal.norm();
                if (n - 1.0).abs() > 1e-9 {
                    return Err(Error::Geometry(format!(
                        "plane normal must have unit length (within 1e-9), got length {n}"
                    )));
                }
                Ok(())
            }
            SdfNode::Translate { child, offset } => {
                check_finite_vec("translation", *offset)?;
                child.validate()
            }
            SdfNode::Union(children) | SdfNode::Intersection(children) => {
                if children.is_empty() {
                    return Err(Error::Geometry("CSG node needs at least one child".into()));
                }
                children.iter().try_for_each(SdfNode::validate)
            }
            SdfNode::Complement(child) => child.validate(),
        }
    }

    /// Signed distance at `x`.
    pub fn eval(&self, x: Vec3) -> f64 {
        match self {
            SdfNode::Sphere { center, radius } => (x - *center).norm() - radius,
            SdfNode::Box {
                center,
                half_extents,
            } => {
                let q = (x - *center).abs() - *half_extents;
                let outside = q.max_scalar(0.0).norm();
                let inside = q.x.max(q.y).max(q.z).min(0.0);
                outside + inside
            }
            SdfNode::Torus {
                center,
                major_radius,
                minor_radius,
            } => {
                let p = x - *center;
                let rho = (p.x * p.x + p.z * p.z).sqrt();
                (rho - major_radius).hypot(p.y) - minor_radius
            }
            SdfNode::Plane { normal, offset } => normal.dot(x) - offset,
            SdfNode::Translate { child, offset } => child.eval(x - *offset),
            SdfNode::Union(children) => children
                .iter()
                .map(|c| c.eval(x))
                .fold(f64::INFINITY, f64::min),
            SdfNode::Intersection(children) => children
                .iter()
                .map(|c| c.eval(x))
                .fold(f64::NEG_INFINITY, f64::max),
            SdfNode::Complement(child) => -child.eval(x),
        }
    }

    /// Gradient at `x` (see [`SdfGradient`] for the behaviour at singular points).
    pub fn gradient(&self, x: Vec3) -> SdfGradient {
        let s = self.sample(x);
        SdfGradient {
            grad: s.grad,
            smooth: s.smooth,
        }
    }

    fn sample(&self, x: Vec3) -> Sample {
        match self {
            SdfNode::Sphere { center, radius } => {
                let p = x - *center;
                let r = p.norm();
                match p.try_normalize() {
                    Some(g) => Sample {
                        dist: r - radius,
                        grad: g,
                        smooth: true,
                    },
                    None => Sample {
                        dist: -radius,
                        grad: Vec3::Z,
                        smooth: false,
                    },
                }
            }
            SdfNode::Box {
                center,
                half_extents,
            } => box_sample(x - *center, *half_extents),
            SdfNode::Torus {
                center,
                major_radius,
                minor_radius,
            } => torus_sample(x - *center, *major_radius, *minor_radius),
            SdfNode::Plane { normal, offset } => Sample {
                dist: normal.dot(x) - offset,
                grad: *normal,
                smooth: true,
            },
            SdfNode::Translate { child, offset } => child.sample(x - *offset),
            SdfNode::Union(children) => select(children, x, |cand, best| cand < best),
            SdfNode::Intersection(children) => select(children, x, |cand, best| cand > best),
            SdfNode::Complement(child) => {
                let s = child.sample(x);
                Sample {
                    dist: -s.dist,
                    grad: -s.grad,
                    smooth: s.smooth,
                }
            }
        }
    }
}

/// Picks the child preferred by `better`; the lowest index wins exact ties,
/// which are reported as non-smooth.
fn select(children: &[SdfNode], x: Vec3, better: impl Fn(f64, f64) -> bool) -> Sample {
    let mut best = children[0].sample(x);
    let mut tied = false;
    for child in &children[1..] {
        let s = child.sample(x);
        if better(s.dist, best.dist) {
            best = s;
            tied = false;
        } else if s.dist == best.dist {
            tied = true;
        }
    }
    best.smooth &= !tied;
    best
}

fn sign_or_plus(v: f64) -> (f64, bool) {
    if v > 0.0 {
        (1.0, true)
    } else if v < 0.0 {
        (-1.0, true)
    } else {
        (1.0, false)
    }
}

fn box_sample(p: Vec3, h: Vec3) -> Sample {
    let q = p.abs() - h;
    let qmax = q.x.max(q.y).max(q.z);
    if qmax > 0.0 {
        let pos = q.max_scalar(0.0);
        let len = pos.norm();
        let signs = Vec3::new(p.x.signum(), p.y.signum(), p.z.signum());
        return Sample {
            dist: len,
            grad: pos.mul_elem(signs) / len,
            smooth: true,
        };
    }
    // Inside: the nearest face is the axis with the largest q.
    let mut axis = 0;
    for a in 1..3 {
        if q[a] > q[axis] {
            axis = a;
        }
    }
    let tied = (0..3).any(|a| a != axis && q[a] == q[axis]);
    let (sign, clean) = sign_or_plus(p[axis]);
    let mut grad = [0.0; 3];
    grad[axis] = sign;
    Sample {
        dist: qmax,
        grad: Vec3::from(grad),
        smooth: clean && !tied,
    }
}

fn torus_sample(p: Vec3, major: f64, minor: f64) -> Sample {
    let rho = (p.x * p.x + p.z * p.z).sqrt();
    let qx = rho - major;
    let qlen = qx.hypot(p.y);
    let dist = qlen - minor;
    if rho == 0.0 {
        // On the symmetry axis every radial direction is equivalent.
        let g = Vec3::new(qx, p.y, 0.0).try_normalize().unwrap_or(Vec3::Y);
        return Sample {
            dist,
            grad: g,
            smooth: false,
        };
    }
    let radial = Vec3::new(p.x / rho, 0.0, p.z / rho);
    if qlen == 0.0 {
        return Sample {
            dist,
            grad: radial,
            smooth: false,
        };
    }
    Sample {
        dist,
        grad: radial * (qx / qlen) + Vec3::Y * (p.y / qlen),
        smooth: true,
    }
}

/// A scene: an optional root node (an empty scene holds only the background
/// clamp) and the bounding-sphere radius `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct SdfScene {
    root: Option<SdfNode>,
    bounding_radius: f64,
}

impl SdfScene {
    pub fn new(root: Option<SdfNode>, bounding_radius: f64) -> Result<Self> {
        if !(bounding_radius.is_finite() && bounding_radius > 0.0) {
            return Err(Error::Geometry(format!(
                "bounding radius must be finite and > 0, got {bounding_radius}"
            )));
        }
        if let Some(root) = &root {
            root.validate()?;
        }
        Ok(Self {
            root,
            bounding_radius,
        })
    }

    pub fn with_root(root: SdfNode, bounding_radius: f64) -> Result<Self> {
        Self::new(Some(root), bounding_radius)
    }

    pub fn empty(bounding_radius: f64) -> Result<Self> {
        Self::new(None, bounding_radius)
    }

    pub fn root(&self) -> Option<&SdfNode> {
        self.root.as_ref()
    }

    pub fn bounding_radius(&self) -> f64 {
        self.bounding_radius
    }

    /// Effective signed distance `min(d_root(x), r - |x|)`.
    pub fn eval(&self, x: Vec3) -> f64 {
        let clamp = self.bounding_radius - x.norm();
        match &self.root {
            Some(root) => root.eval(x).min(clamp),
            None => clamp,
        }
    }

    /// Gradient of the clamped field; the root wins ties with the clamp.
    pub fn gradient(&self, x: Vec3) -> SdfGradient {
        let clamp_dist = self.bounding_radius - x.norm();
        let (clamp_grad, clamp_smooth) = match x.try_normalize() {
            Some(n) => (-n, true),
            None => (-Vec3::Z, false),
        };
        match &self.root {
            Some(root) => {
                let s = root.sample(x);
                if s.dist < clamp_dist {
                    SdfGradient {
                        grad: s.grad,
                        smooth: s.smooth,
                    }
                } else if s.dist == clamp_dist {
                    SdfGradient {
                        grad: s.grad,
                        smooth: false,
                    }
                } else {
                    SdfGradient {
                        grad: clamp_grad,
                        smooth: clamp_smooth,
                    }
                }
            }
            None => SdfGradient {
                grad: clamp_grad,
                smooth: clamp_smooth,
            },
        }
    }
}

/// Free-function form of [`SdfScene::eval`].
pub fn eval_sdf(scene: &SdfScene, x: Vec3) -> f64 {
    scene.eval(x)
}

/// Free-function form of [`SdfScene::gradient`].
pub fn grad_sdf(scene: &SdfScene, x: Vec3) -> SdfGradient {
    scene.gradient(x)
}
