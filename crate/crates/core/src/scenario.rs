//! Experiment descriptions: the [`Scenario`] type, its TOML config format and
//! the built-in presets.
//!
//! Config keys (defaults in brackets):
//!
//! ```toml
//! name = "ball_pt1"          # ["custom"]
//! kind = "near"              # near | far ["near"]
//! quadrature_h = 0.05        # voxel spacing of the forward quadrature [0.05]
//! zero_mode = "extend"       # extend | drop ["extend"]
//! noise = 0.05               # relative noise level [0.0]
//! seed = 1                   # noise / test-function seed [1]
//! iso = [0.7]                # iso-values for masks [[0.7]]
//!
//! [[support]]                # one table per component, at least one
//! shape = "ball"             # ball | cube | rounded_cylinder | peanut | l_shape
//! amplitude = 1.0            # [1.0]
//! center = [0.0, 0.0, 0.0]   # ball, cube
//! radius = 1.0               # ball, rounded_cylinder, peanut
//! # half_widths = [1, 1, 1]  # cube
//! # half_height = 1.0        # rounded_cylinder
//! # centers = [[0.5,0,0], [-0.5,0,0]]         # peanut
//! # boxes = [[[min], [max]], [[min], [max]]]  # l_shape
//!
//! [sensors]                  # near: points / polar; far: directions / polar
//! points = [[3.0, 0.0, 0.0]]
//! polar = [[0.0, 90.0, 3.0]] # [phi, theta, r] in degrees; far accepts [phi, theta]
//!
//! [frequencies]
//! k_max = 11.0               # [11.0]
//! count = 11                 # [11]
//!
//! [grid]
//! min = [-3.0, -3.0, -3.0]   # [[-3, -3, -3]]
//! max = [3.0, 3.0, 3.0]      # [[3, 3, 3]]
//! resolution = [48, 48, 48]  # [[48, 48, 48]]
//! ```

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::forward::{FrequencyGrid, MeasurementKind, MeasurementSet, ZeroMode};
use crate::geometry::{Aabb, Component, Point, QuadratureRule, Shape, SourceSupport};
use crate::imaging::SamplingGrid;

pub const DEFAULT_QUADRATURE_H: f64 = 0.05;
pub const DEFAULT_RESOLUTION: usize = 48;

/// A complete experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub support: SourceSupport,
    pub quadrature_h: f64,
    pub sensors: MeasurementSet,
    pub frequencies: FrequencyGrid,
    pub noise_level: f64,
    pub seed: u64,
    pub sampling: SamplingGrid,
    pub zero_mode: ZeroMode,
    pub iso_values: Vec<f64>,
}

impl Scenario {
    pub fn kind(&self) -> MeasurementKind {
        self.sensors.kind()
    }

    pub fn quadrature(&self) -> Result<QuadratureRule> {
        QuadratureRule::voxel(&self.support, self.quadrature_h)
    }

    /// Cross-checks the parts against each other.
    pub fn validate(&self) -> Result<()> {
        if !(self.quadrature_h > 0.0 && self.quadrature_h.is_finite()) {
            return Err(Error::config("quadrature_h", format!("must be positive, got {}", self.quadrature_h)));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return Err(Error::config("noise", format!("must be nonnegative, got {}", self.noise_level)));
        }
        for (i, iso) in self.iso_values.iter().enumerate() {
            if !(*iso > 0.0 && *iso < 1.0) {
                return Err(Error::config(format!("iso[{i}]"), format!("must lie in (0, 1), got {iso}")));
            }
        }
        if self.kind() == MeasurementKind::Near {
            for (i, p) in self.sensors.points().iter().enumerate() {
                if self.support.annulus_radii(p).is_err() {
                    return Err(Error::config(
                        format!("sensors[{i}]"),
                        format!("sensor {i} at ({}, {}, {}) lies inside the source support", p[0], p[1], p[2]),
                    ));
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical config text, first 16 hex digits. The
    /// sampling grid and iso-values are left out: they do not change the data,
    /// so a dataset can be imaged on any grid.
    pub fn hash(&self) -> String {
        let data_part = Scenario {
            sampling: SamplingGrid::cube(3.0, 1).expect("valid grid"),
            iso_values: Vec::new(),
            ..self.clone()
        };
        let digest = Sha256::digest(write_config(&data_part).as_bytes());
        digest.iter().take(8).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// Copy with the noise level set to zero.
    pub fn noiseless(&self) -> Scenario {
        Scenario { noise_level: 0.0, ..self.clone() }
    }

    /// One-line description for reports.
    pub fn summary(&self) -> String {
        format!(
            "{} ({} kind, {} sensors, J={}, k_max={}, h={}, noise={}, seed={})",
            self.name,
            self.kind().as_str(),
            self.sensors.len(),
            self.frequencies.count(),
            self.frequencies.k_max(),
            self.quadrature_h,
            self.noise_level,
            self.seed
        )
    }
}

/// `(r sinθ cosφ, r sinθ sinφ, r cosθ)` with angles in degrees.
pub fn polar_point(phi_deg: f64, theta_deg: f64, r: f64) -> Point {
    let (phi, theta) = (phi_deg.to_radians(), theta_deg.to_radians());
    Point::new(r * theta.sin() * phi.cos(), r * theta.sin() * phi.sin(), r * theta.cos())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    quadrature_h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    zero_mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    iso: Option<Vec<f64>>,
    support: Vec<ComponentConfig>,
    sensors: SensorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    frequencies: Option<FrequencyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid: Option<GridConfig>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComponentConfig {
    shape: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    center: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    half_widths: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    half_height: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    centers: Option<[[f64; 3]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    boxes: Option<[[[f64; 3]; 2]; 2]>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SensorConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    points: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    directions: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    polar: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrequencyConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    count: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    min: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    resolution: Option<[usize; 3]>,
}

fn p3(a: [f64; 3]) -> Point {
    Point::new(a[0], a[1], a[2])
}

fn a3(p: &Point) -> [f64; 3] {
    [p[0], p[1], p[2]]
}

fn component_from_config(i: usize, c: &ComponentConfig) -> Result<Component> {
    let key = |k: &str| format!("support[{i}].{k}");
    let need =
        |v: Option<f64>, k: &str| v.ok_or_else(|| Error::config(key(k), format!("required for shape `{}`", c.shape)));
    let need3 = |v: Option<[f64; 3]>, k: &str| {
        v.map(p3).ok_or_else(|| Error::config(key(k), format!("required for shape `{}`", c.shape)))
    };
    let (shape, allowed): (Shape, &[&str]) = match c.shape.as_str() {
        "ball" => (
            Shape::Ball { center: need3(c.center, "center")?, radius: need(c.radius, "radius")? },
            &["center", "radius"],
        ),
        "cube" => (
            Shape::Cube { center: need3(c.center, "center")?, half_widths: need3(c.half_widths, "half_widths")? },
            &["center", "half_widths"],
        ),
        "rounded_cylinder" => (
            Shape::RoundedCylinder {
                radius: need(c.radius, "radius")?,
                half_height: need(c.half_height, "half_height")?,
            },
            &["radius", "half_height"],
        ),
        "peanut" => {
            let centers = c.centers.ok_or_else(|| Error::config(key("centers"), "required for shape `peanut`"))?;
            (
                Shape::Peanut { centers: [p3(centers[0]), p3(centers[1])], radius: need(c.radius, "radius")? },
                &["centers", "radius"],
            )
        }
        "l_shape" => {
            let b = c.boxes.ok_or_else(|| Error::config(key("boxes"), "required for shape `l_shape`"))?;
            (
                Shape::LShape { boxes: [Aabb::new(p3(b[0][0]), p3(b[0][1])), Aabb::new(p3(b[1][0]), p3(b[1][1]))] },
                &["boxes"],
            )
        }
        other => return Err(Error::config(key("shape"), format!("unknown shape `{other}`"))),
    };
    let present = [
        ("center", c.center.is_some()),
        ("radius", c.radius.is_some()),
        ("half_widths", c.half_widths.is_some()),
        ("half_height", c.half_height.is_some()),
        ("centers", c.centers.is_some()),
        ("boxes", c.boxes.is_some()),
    ];
    if let Some((k, _)) = present.iter().find(|(k, set)| *set && !allowed.contains(k)) {
        return Err(Error::config(key(k), format!("not a parameter of shape `{}`", c.shape)));
    }
    Ok(Component { shape, amplitude: c.amplitude.unwrap_or(1.0) })
}

fn component_to_config(c: &Component) -> ComponentConfig {
    let mut out = ComponentConfig { amplitude: Some(c.amplitude), ..Default::default() };
    match &c.shape {
        Shape::Ball { center, radius } => {
            out.shape = "ball".into();
            out.center = Some(a3(center));
            out.radius = Some(*radius);
        }
        Shape::Cube { center, half_widths } => {
            out.shape = "cube".into();
            out.center = Some(a3(center));
            out.half_widths = Some(a3(half_widths));
        }
        Shape::RoundedCylinder { radius, half_height } => {
            out.shape = "rounded_cylinder".into();
            out.radius = Some(*radius);
            out.half_height = Some(*half_height);
        }
        Shape::Peanut { centers, radius } => {
            out.shape = "peanut".into();
            out.centers = Some([a3(&centers[0]), a3(&centers[1])]);
            out.radius = Some(*radius);
        }
        Shape::LShape { boxes } => {
            out.shape = "l_shape".into();
            out.boxes = Some([[a3(&boxes[0].min), a3(&boxes[0].max)], [a3(&boxes[1].min), a3(&boxes[1].max)]]);
        }
    }
    out
}

fn sensors_from_config(kind: MeasurementKind, s: &SensorConfig) -> Result<MeasurementSet> {
    let mut pts: Vec<Point> = Vec::new();
    match kind {
        MeasurementKind::Near => {
            if s.directions.is_some() {
                return Err(Error::config("sensors.directions", "only valid for kind = \"far\""));
            }
            pts.extend(s.points.iter().flatten().map(|a| p3(*a)));
        }
        MeasurementKind::Far => {
            if s.points.is_some() {
                return Err(Error::config("sensors.points", "only valid for kind = \"near\"; use `directions`"));
            }
            for (i, d) in s.directions.iter().flatten().enumerate() {
                let p = p3(*d);
                if (p.norm() - 1.0).abs() > crate::forward::UNIT_TOLERANCE {
                    return Err(Error::config(format!("sensors.directions[{i}]"), "direction must have unit norm"));
                }
                pts.push(p);
            }
        }
    }
    for (i, row) in s.polar.iter().flatten().enumerate() {
        let p = match (kind, row.len()) {
            (MeasurementKind::Near, 3) => polar_point(row[0], row[1], row[2]),
            (MeasurementKind::Far, 2) | (MeasurementKind::Far, 3) => polar_point(row[0], row[1], 1.0),
            _ => {
                return Err(Error::config(
                    format!("sensors.polar[{i}]"),
                    "expected [phi, theta, r] (near) or [phi, theta] (far), angles in degrees",
                ))
            }
        };
        pts.push(p);
    }
    if pts.is_empty() {
        return Err(Error::config("sensors", "at least one sensor is required"));
    }
    match kind {
        MeasurementKind::Near => MeasurementSet::near(pts),
        MeasurementKind::Far => MeasurementSet::far(pts),
    }
}

fn scenario_from_config(cfg: ConfigFile) -> Result<Scenario> {
    let kind_str = cfg.kind.as_deref().unwrap_or("near");
    let kind = MeasurementKind::parse(kind_str)
        .ok_or_else(|| Error::config("kind", format!("expected `near` or `far`, got `{kind_str}`")))?;
    let zero_str = cfg.zero_mode.as_deref().unwrap_or("extend");
    let zero_mode = ZeroMode::parse(zero_str)
        .ok_or_else(|| Error::config("zero_mode", format!("expected `extend` or `drop`, got `{zero_str}`")))?;
    if cfg.support.is_empty() {
        return Err(Error::config("support", "at least one component is required"));
    }
    let components =
        cfg.support.iter().enumerate().map(|(i, c)| component_from_config(i, c)).collect::<Result<Vec<_>>>()?;
    let support = SourceSupport::new(components).map_err(|e| Error::config("support", e.to_string()))?;
    let sensors = sensors_from_config(kind, &cfg.sensors)?;
    let (k_max, count) = cfg.frequencies.as_ref().map_or((None, None), |f| (f.k_max, f.count));
    let frequencies = FrequencyGrid::new(k_max.unwrap_or(11.0), count.unwrap_or(11))
        .map_err(|e| Error::config("frequencies", e.to_string()))?;
    let g = cfg.grid.as_ref();
    let min = g.and_then(|g| g.min).unwrap_or([-3.0; 3]);
    let max = g.and_then(|g| g.max).unwrap_or([3.0; 3]);
    let res = g.and_then(|g| g.resolution).unwrap_or([DEFAULT_RESOLUTION; 3]);
    let sampling =
        SamplingGrid::new(Aabb::new(p3(min), p3(max)), res).map_err(|e| Error::config("grid", e.to_string()))?;
    let scenario = Scenario {
        name: cfg.name.unwrap_or_else(|| "custom".into()),
        support,
        quadrature_h: cfg.quadrature_h.unwrap_or(DEFAULT_QUADRATURE_H),
        sensors,
        frequencies,
        noise_level: cfg.noise.unwrap_or(0.0),
        seed: cfg.seed.unwrap_or(1),
        sampling,
        zero_mode,
        iso_values: cfg.iso.unwrap_or_else(|| vec![0.7]),
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Parses config text.
pub fn parse_config_str(text: &str) -> Result<Scenario> {
    let cfg: ConfigFile = toml::from_str(text).map_err(|e| {
        let msg = e.message().to_string();
        let key = msg
            .split('`')
            .nth(1)
            .filter(|_| msg.starts_with("unknown field") || msg.starts_with("missing field"))
            .map(str::to_string)
            .unwrap_or_else(|| "config".to_string());
        Error::config(key, e.to_string().trim_end().to_string())
    })?;
    scenario_from_config(cfg)
}

/// Reads and parses a config file.
pub fn parse_config(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text)
}

/// Canonical config text; every value is written explicitly.
pub fn write_config(s: &Scenario) -> String {
    let pts: Vec<[f64; 3]> = s.sensors.points().iter().map(a3).collect();
    let (points, directions) = match s.kind() {
        MeasurementKind::Near => (Some(pts), None),
        MeasurementKind::Far => (None, Some(pts)),
    };
    let cfg = ConfigFile {
        name: Some(s.name.clone()),
        kind: Some(s.kind().as_str().into()),
        quadrature_h: Some(s.quadrature_h),
        zero_mode: Some(s.zero_mode.as_str().into()),
        noise: Some(s.noise_level),
        seed: Some(s.seed),
        iso: Some(s.iso_values.clone()),
        support: s.support.components().iter().map(component_to_config).collect(),
        sensors: SensorConfig { points, directions, polar: None },
        frequencies: Some(FrequencyConfig { k_max: Some(s.frequencies.k_max()), count: Some(s.frequencies.count()) }),
        grid: Some(GridConfig {
            min: Some(a3(&s.sampling.bounds.min)),
            max: Some(a3(&s.sampling.bounds.max)),
            resolution: Some(s.sampling.resolution),
        }),
    };
    toml::to_string(&cfg).expect("config serializes")
}

/// Built-in scenarios reproducing the reference experiments.
pub mod presets {
    use super::*;
    use crate::geometry::shapes;

    pub const NAMES: [&str; 9] = [
        "ball_pt1",
        "ball_pt3",
        "ball_pt14",
        "cube_pt14",
        "cylinder_pt14",
        "peanut_pt14",
        "lshape_pt14",
        "twoballs_pt14",
        "ball_far14",
    ];

    /// `(φ, θ)` in degrees of the three upper-hemisphere sensors.
    pub const TABLE_3: [(f64, f64); 3] = [(-180.0, 45.0), (-90.0, 45.0), (0.0, 45.0)];

    /// `(φ, θ)` in degrees of the fourteen sensors spread over the sphere.
    pub const TABLE_14: [(f64, f64); 14] = [
        (0.0, 90.0),
        (180.0, 90.0),
        (90.0, 90.0),
        (-90.0, 90.0),
        (90.0, 0.0),
        (90.0, 180.0),
        (45.0, 54.735_610_317_245_346),
        (45.0, 125.264_389_682_754_65),
        (-45.0, 54.735_610_317_245_346),
        (-45.0, 125.264_389_682_754_65),
        (135.0, 54.735_610_317_245_346),
        (135.0, 125.264_389_682_754_65),
        (-135.0, 54.735_610_317_245_346),
        (-135.0, 125.264_389_682_754_65),
    ];

    pub fn table2_points(r: f64) -> Vec<Point> {
        TABLE_14.iter().map(|&(phi, theta)| polar_point(phi, theta, r)).collect()
    }

    pub fn table1_points(r: f64) -> Vec<Point> {
        TABLE_3.iter().map(|&(phi, theta)| polar_point(phi, theta, r)).collect()
    }

    fn base(name: &str, support: SourceSupport, sensors: MeasurementSet, iso: &[f64]) -> Scenario {
        Scenario {
            name: name.into(),
            support,
            quadrature_h: DEFAULT_QUADRATURE_H,
            sensors,
            frequencies: FrequencyGrid::new(11.0, 11).expect("valid grid"),
            noise_level: 0.05,
            seed: 1,
            sampling: SamplingGrid::cube(3.0, DEFAULT_RESOLUTION).expect("valid grid"),
            zero_mode: ZeroMode::Extend,
            iso_values: iso.to_vec(),
        }
    }

    fn near14() -> MeasurementSet {
        MeasurementSet::near(table2_points(3.0)).expect("nonempty")
    }

    pub fn get(name: &str) -> Option<Scenario> {
        let s = match name {
            "ball_pt1" => base(
                name,
                shapes::unit_ball(),
                MeasurementSet::near(vec![Point::new(3.0, 0.0, 0.0)]).expect("nonempty"),
                &[0.7],
            ),
            "ball_pt3" => base(
                name,
                shapes::unit_ball(),
                MeasurementSet::near(table1_points(3.0)).expect("nonempty"),
                &[0.85, 0.8],
            ),
            "ball_pt14" => base(name, shapes::unit_ball(), near14(), &[0.7, 0.75]),
            "cube_pt14" => base(name, shapes::cube(), near14(), &[0.7, 0.8]),
            "cylinder_pt14" => base(name, shapes::rounded_cylinder(), near14(), &[0.75, 0.8]),
            "peanut_pt14" => base(name, shapes::peanut(), near14(), &[0.75, 0.8]),
            "lshape_pt14" => base(name, shapes::l_shape(), near14(), &[0.87]),
            "twoballs_pt14" => base(name, shapes::two_balls(), near14(), &[0.85]),
            "ball_far14" => base(
                name,
                shapes::unit_ball(),
                MeasurementSet::far(table2_points(1.0)).expect("unit directions"),
                &[0.7],
            ),
            _ => return None,
        };
        Some(s)
    }

    pub fn all() -> Vec<Scenario> {
        NAMES.iter().map(|n| get(n).expect("listed preset exists")).collect()
    }
}
