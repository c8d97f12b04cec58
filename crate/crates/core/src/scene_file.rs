//! Sectioned `key = value` scene description.
//!
//! ```text
//! [scene]
//! bounding_radius = 3.0
//!
//! [object]
//! type = sphere
//! center = 0, 0, 0
//! radius = 1.0
//! role = union
//!
//! [density]
//! beta = 0.001
//! coupled = true
//!
//! [camera]
//! position = 0, 0, -2.5
//! look_at = 0, 0, 0
//! up = 0, 1, 0
//! fov_deg = 40
//! width = 128
//! height = 128
//! ```
//!
//! `[sampler]`, `[radiance]` and `[output]` are optional. Objects are folded
//! left to right: `union` adds, `intersection` intersects and `subtract`
//! removes the object from everything before it. Lines starting with `#` or
//! `;` are comments.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::csv::fmt_f64;
use crate::density::DensityParams;
use crate::error::{Error, Result};
use crate::math::{Rgb, Vec3};
use crate::render::{Camera, RadianceModel};
use crate::sampler::SamplerConfig;
use crate::sdf::{SdfNode, SdfScene};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Sphere { center: Vec3, radius: f64 },
    Box { center: Vec3, half_extents: Vec3 },
    Torus { center: Vec3, major_radius: f64, minor_radius: f64 },
    Plane { normal: Vec3, offset: f64 },
}

impl Shape {
    pub fn to_node(&self) -> Result<SdfNode> {
        match *self {
            Shape::Sphere { center, radius } => SdfNode::sphere(center, radius),
            Shape::Box { center, half_extents } => SdfNode::cuboid(center, half_extents),
            Shape::Torus {
                center,
                major_radius,
                minor_radius,
            } => SdfNode::torus(center, major_radius, minor_radius),
            Shape::Plane { normal, offset } => SdfNode::plane(normal, offset),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsgRole {
    Union,
    Intersection,
    Subtract,
}

impl CsgRole {
    fn as_str(&self) -> &'static str {
        match self {
            CsgRole::Union => "union",
            CsgRole::Intersection => "intersection",
            CsgRole::Subtract => "subtract",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectSpec {
    pub shape: Shape,
    pub role: CsgRole,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraSpec {
    pub position: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    pub fov_deg: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraSpec {
    pub fn to_camera(&self) -> Result<Camera> {
        Camera::new(
            self.position,
            self.look_at,
            self.up,
            self.fov_deg.to_radians(),
            self.width,
            self.height,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub image: PathBuf,
    pub csv: Option<PathBuf>,
    pub background: Rgb,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            image: PathBuf::from("render.ppm"),
            csv: None,
            background: Rgb::BLACK,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneFile {
    pub bounding_radius: f64,
    pub objects: Vec<ObjectSpec>,
    pub density: DensityParams,
    pub camera: CameraSpec,
    pub sampler: SamplerConfig,
    pub radiance: RadianceModel,
    pub output: OutputSpec,
}

impl SceneFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    /// Parses `text`; `origin` only labels error messages.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        Parser::new(text, origin)?.finish()
    }

    pub fn to_scene(&self) -> Result<SdfScene> {
        let mut root: Option<SdfNode> = None;
        for (i, obj) in self.objects.iter().enumerate() {
            let node = obj.shape.to_node()?;
            root = Some(match (root, obj.role) {
                (None, CsgRole::Union) => node,
                (None, role) => {
                    return Err(Error::Parameter(format!(
                        "object {} cannot use role `{}`: nothing to combine with",
                        i + 1,
                        role.as_str()
                    )))
                }
                (Some(SdfNode::Union(mut v)), CsgRole::Union) => {
                    v.push(node);
                    SdfNode::Union(v)
                }
                (Some(acc), CsgRole::Union) => SdfNode::Union(vec![acc, node]),
                (Some(SdfNode::Intersection(mut v)), CsgRole::Intersection) => {
                    v.push(node);
                    SdfNode::Intersection(v)
                }
                (Some(acc), CsgRole::Intersection) => SdfNode::Intersection(vec![acc, node]),
                (Some(acc), CsgRole::Subtract) => SdfNode::Intersection(vec![acc, node.complement()]),
            });
        }
        SdfScene::new(root, self.bounding_radius)
    }

    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let v = |v: Vec3| format!("{}, {}, {}", fmt_f64(v.x), fmt_f64(v.y), fmt_f64(v.z));
        let c = |c: Rgb| format!("{}, {}, {}", fmt_f64(c.r), fmt_f64(c.g), fmt_f64(c.b));
        let _ = writeln!(s, "[scene]\nbounding_radius = {}", fmt_f64(self.bounding_radius));
        for obj in &self.objects {
            s.push_str("\n[object]\n");
            match obj.shape {
                Shape::Sphere { center, radius } => {
                    let _ = writeln!(s, "type = sphere\ncenter = {}\nradius = {}", v(center), fmt_f64(radius));
                }
                Shape::Box { center, half_extents } => {
                    let _ = writeln!(s, "type = box\ncenter = {}\nhalf_extents = {}", v(center), v(half_extents));
                }
                Shape::Torus {
                    center,
                    major_radius,
                    minor_radius,
                } => {
                    let _ = writeln!(
                        s,
                        "type = torus\ncenter = {}\nmajor_radius = {}\nminor_radius = {}",
                        v(center),
                        fmt_f64(major_radius),
                        fmt_f64(minor_radius)
                    );
                }
                Shape::Plane { normal, offset } => {
                    let _ = writeln!(s, "type = plane\nnormal = {}\noffset = {}", v(normal), fmt_f64(offset));
                }
            }
            let _ = writeln!(s, "role = {}", obj.role.as_str());
        }
        let _ = writeln!(s, "\n[density]\nbeta = {}", fmt_f64(self.density.beta()));
        if self.density.is_coupled() {
            s.push_str("coupled = true\n");
        } else {
            let _ = writeln!(s, "alpha = {}", fmt_f64(self.density.alpha()));
        }
        let cam = &self.camera;
        let _ = writeln!(
            s,
            "\n[camera]\nposition = {}\nlook_at = {}\nup = {}\nfov_deg = {}\nwidth = {}\nheight = {}",
            v(cam.position),
            v(cam.look_at),
            v(cam.up),
            fmt_f64(cam.fov_deg),
            cam.width,
            cam.height
        );
        let sm = &self.sampler;
        let _ = writeln!(
            s,
            "\n[sampler]\nepsilon = {}\nn_init = {}\nm_final = {}\nmax_outer_iters = {}\nmax_bisect_iters = {}\nseed = {}\nmode = {}",
            fmt_f64(sm.epsilon),
            sm.n_init,
            sm.m_final,
            sm.max_outer_iters,
            sm.max_bisect_iters,
            sm.rng_seed,
            sm.final_sample_mode.as_str()
        );
        s.push_str("\n[radiance]\n");
        match self.radiance {
            RadianceModel::Lambertian {
                albedo,
                light_dir,
                ambient,
            } => {
                let _ = writeln!(
                    s,
                    "model = lambertian\nalbedo = {}\nlight_dir = {}\nambient = {}",
                    c(albedo),
                    v(light_dir),
                    fmt_f64(ambient)
                );
            }
            RadianceModel::NormalShading => s.push_str("model = normal\n"),
            RadianceModel::Phong {
                albedo,
                light_dir,
                specular,
                shininess,
            } => {
                let _ = writeln!(
                    s,
                    "model = phong\nalbedo = {}\nlight_dir = {}\nspecular = {}\nshininess = {}",
                    c(albedo),
                    v(light_dir),
                    fmt_f64(specular),
                    fmt_f64(shininess)
                );
            }
            RadianceModel::ConstantEmission(col) => {
                let _ = writeln!(s, "model = constant\ncolor = {}", c(col));
            }
        }
        let out = &self.output;
        let _ = writeln!(s, "\n[output]\nimage = {}", out.image.display());
        if let Some(csv) = &out.csv {
            let _ = writeln!(s, "csv = {}", csv.display());
        }
        let _ = writeln!(s, "background = {}", c(out.background));
        s
    }
}

struct Entry {
    value: String,
    line: usize,
    used: bool,
}

struct Section {
    name: String,
    line: usize,
    entries: HashMap<String, Entry>,
    order: Vec<String>,
}

struct Parser<'a> {
    origin: &'a Path,
    sections: Vec<Section>,
}

const SECTIONS: [&str; 7] = ["scene", "object", "density", "camera", "sampler", "radiance", "output"];

impl<'a> Parser<'a> {
    fn new(text: &str, origin: &'a Path) -> Result<Self> {
        let mut p = Parser {
            origin,
            sections: Vec::new(),
        };
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let l = raw.trim();
            if l.is_empty() || l.starts_with('#') || l.starts_with(';') {
                continue;
            }
            if let Some(name) = l.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| p.err(line, "", "malformed section header"))?
                    .trim();
                if !SECTIONS.contains(&name) {
                    return Err(p.err(line, name, "unknown section"));
                }
                if name != "object" && p.sections.iter().any(|s| s.name == name) {
                    return Err(p.err(line, name, "duplicate section"));
                }
                p.sections.push(Section {
                    name: name.to_string(),
                    line,
                    entries: HashMap::new(),
                    order: Vec::new(),
                });
                continue;
            }
            let (key, value) = l
                .split_once('=')
                .ok_or_else(|| p.err(line, "", "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            let Some(section) = p.sections.last_mut() else {
                return Err(p.err(line, key, "key outside of any section"));
            };
            if section.entries.contains_key(key) {
                return Err(p.err(line, key, "duplicate key"));
            }
            section.order.push(key.to_string());
            section.entries.insert(
                key.to_string(),
                Entry {
                    value: value.to_string(),
                    line,
                    used: false,
                },
            );
        }
        Ok(p)
    }

    fn err(&self, line: usize, key: &str, message: impl Into<String>) -> Error {
        Error::Parse {
            file: self.origin.to_path_buf(),
            line,
            key: key.to_string(),
            message: message.into(),
        }
    }

    fn finish(mut self) -> Result<SceneFile> {
        for required in ["scene", "density", "camera"] {
            if !self.sections.iter().any(|s| s.name == required) {
                return Err(self.err(0, "", format!("missing required section [{required}]")));
            }
        }
        let mut sections = std::mem::take(&mut self.sections);
        let mut scene = None;
        let mut objects = Vec::new();
        let mut density = None;
        let mut camera = None;
        let mut sampler = SamplerConfig::default();
        let mut radiance = default_radiance();
        let mut output = OutputSpec::default();
        for sec in &mut sections {
            let mut f = Fields { parser: &self, sec };
            match f.sec.name.as_str() {
                "scene" => scene = Some(f.positive("bounding_radius")?),
                "object" => objects.push(f.object()?),
                "density" => density = Some(f.density()?),
                "camera" => camera = Some(f.camera()?),
                "sampler" => sampler = f.sampler()?,
                "radiance" => radiance = f.radiance()?,
                "output" => output = f.output()?,
                _ => unreachable!(),
            }
            f.reject_unused()?;
        }
        let file = SceneFile {
            bounding_radius: scene.unwrap(),
            objects,
            density: density.unwrap(),
            camera: camera.unwrap(),
            sampler,
            radiance,
            output,
        };
        file.to_scene()?;
        Ok(file)
    }
}

pub fn default_radiance() -> RadianceModel {
    RadianceModel::Lambertian {
        albedo: Rgb::new(0.8, 0.8, 0.8),
        light_dir: Vec3::new(-1.0, 1.0, -1.0).normalize(),
        ambient: 0.1,
    }
}

struct Fields<'p, 'a> {
    parser: &'p Parser<'a>,
    sec: &'p mut Section,
}

impl Fields<'_, '_> {
    fn err(&self, key: &str, message: impl Into<String>) -> Error {
        let line = self.sec.entries.get(key).map_or(self.sec.line, |e| e.line);
        self.parser.err(line, key, message)
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.sec.entries.get_mut(key).map(|e| {
            e.used = true;
            e.value.clone()
        })
    }

    fn required(&mut self, key: &str) -> Result<String> {
        self.take(key).ok_or_else(|| {
            self.parser.err(
                self.sec.line,
                key,
                format!("missing required key in [{}]", self.sec.name),
            )
        })
    }

    fn parsed<T: FromStr>(&mut self, key: &str, raw: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        raw.parse::<T>()
            .map_err(|e| self.err(key, format!("invalid value `{raw}`: {e}")))
    }

    fn get<T: FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.required(key)?;
        self.parsed(key, &raw)
    }

    fn get_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.take(key) {
            Some(raw) => self.parsed(key, &raw),
            None => Ok(default),
        }
    }

    fn finite(&mut self, key: &str) -> Result<f64> {
        let v: f64 = self.get(key)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.err(key, format!("must be finite, got {v}")))
        }
    }

    fn positive(&mut self, key: &str) -> Result<f64> {
        let v = self.finite(key)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(self.err(key, format!("must be > 0, got {v}")))
        }
    }

    fn triple_raw(&mut self, key: &str, raw: &str) -> Result<[f64; 3]> {
        let parts: Vec<&str> = raw
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if parts.len() != 3 {
            return Err(self.err(key, format!("expected three numbers, got `{raw}`")));
        }
        let mut out = [0.0; 3];
        for (o, p) in out.iter_mut().zip(parts) {
            *o = self.parsed::<f64>(key, p)?;
            if !o.is_finite() {
                return Err(self.err(key, format!("components must be finite, got `{raw}`")));
            }
        }
        Ok(out)
    }

    fn vec3(&mut self, key: &str) -> Result<Vec3> {
        let raw = self.required(key)?;
        Ok(Vec3::from(self.triple_raw(key, &raw)?))
    }

    fn unit(&mut self, key: &str) -> Result<Vec3> {
        let v = self.vec3(key)?;
        if (v.norm() - 1.0).abs() <= 1e-9 {
            Ok(v)
        } else {
            Err(self.err(key, format!("must be a unit vector, got {v:?}")))
        }
    }

    fn rgb(&mut self, key: &str, default: Option<Rgb>) -> Result<Rgb> {
        let raw = match (self.take(key), default) {
            (Some(raw), _) => raw,
            (None, Some(d)) => return Ok(d),
            (None, None) => return Err(self.err(key, format!("missing required key in [{}]", self.sec.name))),
        };
        let [r, g, b] = self.triple_raw(key, &raw)?;
        if [r, g, b].iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(self.err(key, format!("colour components must lie in [0, 1], got `{raw}`")));
        }
        Ok(Rgb::new(r, g, b))
    }

    fn reject_unused(&self) -> Result<()> {
        match self.sec.order.iter().find(|k| !self.sec.entries[*k].used) {
            Some(k) => Err(self.err(k, format!("unknown key in [{}]", self.sec.name))),
            None => Ok(()),
        }
    }

    fn object(&mut self) -> Result<ObjectSpec> {
        let ty = self.required("type")?;
        let shape = match ty.as_str() {
            "sphere" => Shape::Sphere {
                center: self.vec3("center")?,
                radius: self.positive("radius")?,
            },
            "box" => {
                let center = self.vec3("center")?;
                let half_extents = self.vec3("half_extents")?;
                if half_extents.to_array().iter().any(|h| *h <= 0.0) {
                    return Err(self.err("half_extents", "half extents must be > 0"));
                }
                Shape::Box { center, half_extents }
            }
            "torus" => {
                let center = self.vec3("center")?;
                let major_radius = self.positive("major_radius")?;
                let minor_radius = self.positive("minor_radius")?;
                if minor_radius >= major_radius {
                    return Err(self.err("minor_radius", "minor radius must be smaller than the major radius"));
                }
                Shape::Torus {
                    center,
                    major_radius,
                    minor_radius,
                }
            }
            "plane" => Shape::Plane {
                normal: self.unit("normal")?,
                offset: self.finite("offset")?,
            },
            other => return Err(self.err("type", format!("unknown object type `{other}`"))),
        };
        let role = match self.take("role").as_deref() {
            None | Some("union") => CsgRole::Union,
            Some("intersection") => CsgRole::Intersection,
            Some("subtract") => CsgRole::Subtract,
            Some(other) => {
                return Err(self.err(
                    "role",
                    format!("unknown role `{other}` (expected union, intersection or subtract)"),
                ))
            }
        };
        shape.to_node().map_err(|e| self.err("type", e.to_string()))?;
        Ok(ObjectSpec { shape, role })
    }

    fn density(&mut self) -> Result<DensityParams> {
        let beta = self.positive("beta")?;
        let coupled: Option<bool> = match self.take("coupled") {
            Some(raw) => Some(self.parsed("coupled", &raw)?),
            None => None,
        };
        let alpha = match self.take("alpha") {
            Some(raw) => Some(self.parsed::<f64>("alpha", &raw)?),
            None => None,
        };
        let params = match (coupled, alpha) {
            (Some(true), Some(_)) => return Err(self.err("alpha", "`alpha` conflicts with `coupled = true`")),
            (Some(false), None) => return Err(self.err("coupled", "`coupled = false` requires `alpha`")),
            (_, Some(alpha)) => DensityParams::decoupled(alpha, beta),
            (_, None) => DensityParams::coupled(beta),
        };
        params.map_err(|e| self.err(if alpha.is_some() { "alpha" } else { "beta" }, e.to_string()))
    }

    fn camera(&mut self) -> Result<CameraSpec> {
        let spec = CameraSpec {
            position: self.vec3("position")?,
            look_at: self.vec3("look_at")?,
            up: self.vec3("up")?,
            fov_deg: self.finite("fov_deg")?,
            width: self.get("width")?,
            height: self.get("height")?,
        };
        spec.to_camera().map_err(|e| self.err("", e.to_string()))?;
        Ok(spec)
    }

    fn sampler(&mut self) -> Result<SamplerConfig> {
        let d = SamplerConfig::default();
        let cfg = SamplerConfig {
            epsilon: self.get_or("epsilon", d.epsilon)?,
            n_init: self.get_or("n_init", d.n_init)?,
            m_final: self.get_or("m_final", d.m_final)?,
            max_outer_iters: self.get_or("max_outer_iters", d.max_outer_iters)?,
            max_bisect_iters: self.get_or("max_bisect_iters", d.max_bisect_iters)?,
            rng_seed: self.get_or("seed", d.rng_seed)?,
            final_sample_mode: self.get_or("mode", d.final_sample_mode)?,
        };
        cfg.validate().map_err(|e| self.err("", e.to_string()))?;
        Ok(cfg)
    }

    fn radiance(&mut self) -> Result<RadianceModel> {
        let model = self.required("model")?;
        let m = match model.as_str() {
            "lambertian" => RadianceModel::Lambertian {
                albedo: self.rgb("albedo", None)?,
                light_dir: self.unit("light_dir")?,
                ambient: self.get_or("ambient", 0.0)?,
            },
            "normal" => RadianceModel::NormalShading,
            "phong" => RadianceModel::Phong {
                albedo: self.rgb("albedo", None)?,
                light_dir: self.unit("light_dir")?,
                specular: self.finite("specular")?,
                shininess: self.finite("shininess")?,
            },
            "constant" => RadianceModel::ConstantEmission(self.rgb("color", None)?),
            other => {
                return Err(self.err(
                    "model",
                    format!("unknown model `{other}` (expected lambertian, normal, phong or constant)"),
                ))
            }
        };
        m.validate().map_err(|e| self.err("", e.to_string()))?;
        Ok(m)
    }

    fn output(&mut self) -> Result<OutputSpec> {
        let d = OutputSpec::default();
        Ok(OutputSpec {
            image: self.take("image").map(PathBuf::from).unwrap_or(d.image),
            csv: self.take("csv").map(PathBuf::from),
            background: self.rgb("background", Some(d.background))?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SPHERE: &str = "\
# unit sphere
[scene]
bounding_radius = 3.0

[object]
type = sphere
center = 0, 0, 0
radius = 1.0

[density]
beta = 0.01

[camera]
position = 0 0 -2.5
look_at = 0, 0, 0
up = 0, 1, 0
fov_deg = 40
width = 8
height = 6
";

    fn parse(text: &str) -> Result<SceneFile> {
        SceneFile::parse(text, Path::new("test.scene"))
    }

    #[test]
    fn parses_minimal_file_with_defaults() {
        let f = parse(SPHERE).unwrap();
        assert_eq!(f.bounding_radius, 3.0);
        assert_eq!(f.objects.len(), 1);
        assert!(f.density.is_coupled());
        assert_eq!(f.camera.width, 8);
        assert_eq!(f.sampler, SamplerConfig::default());
        assert_eq!(f.output, OutputSpec::default());
        let scene = f.to_scene().unwrap();
        assert_eq!(scene.eval(Vec3::ZERO), -1.0);
    }

    #[test]
    fn missing_section_is_named() {
        let text = SPHERE.replace("[density]\nbeta = 0.01\n", "");
        let msg = parse(&text).unwrap_err().to_string();
        assert!(msg.contains("[density]"), "{msg}");
        assert!(msg.contains("test.scene"), "{msg}");
    }

    #[test]
    fn unknown_key_reports_file_line_and_key() {
        let text = SPHERE.replace("radius = 1.0", "radius = 1.0\ncolour = red");
        let err = parse(&text).unwrap_err();
        match &err {
            Error::Parse { line, key, .. } => {
                assert_eq!(*line, 9);
                assert_eq!(key, "colour");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().starts_with("test.scene:9: `colour`"), "{err}");
    }

    #[test]
    fn rejections() {
        for (from, to) in [
            ("radius = 1.0", "radius = -1.0"),
            ("radius = 1.0", "radius = abc"),
            ("[camera]", "[cameras]"),
            ("beta = 0.01", "beta = 0.01\nbeta = 0.02"),
            ("beta = 0.01", "beta = 0.01\ncoupled = false"),
            ("beta = 0.01", "beta = 0.01\nalpha = 5\ncoupled = true"),
            ("width = 8", "width = 0"),
            ("center = 0, 0, 0", "center = 0, 0"),
            ("type = sphere", "type = cone"),
            ("type = sphere\n", "type = sphere\nrole = intersection\n"),
            ("fov_deg = 40", "fov_deg = 180"),
        ] {
            assert!(parse(&SPHERE.replace(from, to)).is_err(), "{to}");
        }
        assert!(parse("bounding_radius = 3\n").is_err());
    }

    #[test]
    fn csg_roles_fold_left() {
        let text = format!(
            "{SPHERE}\n[object]\ntype = sphere\ncenter = 0.5, 0, 0\nradius = 0.5\nrole = subtract\n\n[object]\ntype = box\ncenter = 0, 0, 0\nhalf_extents = 2, 2, 2\nrole = intersection\n"
        );
        let f = parse(&text).unwrap();
        let scene = f.to_scene().unwrap();
        // Inside the big sphere but carved out by the small one.
        assert!(scene.eval(Vec3::new(0.6, 0.0, 0.0)) > 0.0);
        assert!(scene.eval(Vec3::new(-0.6, 0.0, 0.0)) < 0.0);
    }

    #[test]
    fn full_file_round_trips() {
        let text = format!(
            "{SPHERE}\n[object]\ntype = torus\ncenter = 0, 0.1, 0\nmajor_radius = 1\nminor_radius = 0.25\n\n[object]\ntype = plane\nnormal = 0, 1, 0\noffset = -1\n\n[object]\ntype = box\ncenter = 0,0,0\nhalf_extents = 0.3 0.3 0.3\n\n[sampler]\nepsilon = 0.05\nmode = regular\nseed = 42\n\n[radiance]\nmodel = phong\nalbedo = 0.5, 0.2, 0.1\nlight_dir = 0, 1, 0\nspecular = 0.3\nshininess = 8\n\n[output]\nimage = out/a.ppm\ncsv = out/a.csv\nbackground = 0.1, 0.1, 0.1\n"
        )
        .replace("beta = 0.01", "beta = 0.01\nalpha = 50");
        let f = parse(&text).unwrap();
        let again = parse(&f.serialize()).unwrap();
        assert_eq!(f, again);
        assert_eq!(again.serialize(), f.serialize());
    }

    proptest! {
        #[test]
        fn random_files_round_trip(
            r in 0.5f64..10.0,
            radius in 0.01f64..2.0,
            c in prop::array::uniform3(-1.0f64..1.0),
            beta in 1e-4f64..1.0,
            alpha in prop::option::of(0.1f64..1e3),
            eps in 1e-4f64..1.0,
            seed in any::<u64>(),
            w in 1usize..64,
            h in 1usize..64,
            ambient in 0.0f64..1.0,
        ) {
            let density = match alpha {
                Some(a) => DensityParams::decoupled(a, beta).unwrap(),
                None => DensityParams::coupled(beta).unwrap(),
            };
            let f = SceneFile {
                bounding_radius: r,
                objects: vec![ObjectSpec { shape: Shape::Sphere { center: Vec3::from(c), radius }, role: CsgRole::Union }],
                density,
                camera: CameraSpec {
                    position: Vec3::new(0.0, 0.0, -0.4 * r),
                    look_at: Vec3::ZERO,
                    up: Vec3::Y,
                    fov_deg: 45.0,
                    width: w,
                    height: h,
                },
                sampler: SamplerConfig { epsilon: eps, rng_seed: seed, ..Default::default() },
                radiance: RadianceModel::Lambertian {
                    albedo: Rgb::new(0.3, 0.6, 0.9),
                    light_dir: Vec3::new(1.0, 2.0, -3.0).normalize(),
                    ambient,
                },
                output: OutputSpec::default(),
            };
            let back = parse(&f.serialize()).unwrap();
            prop_assert_eq!(back, f);
        }
    }
}
