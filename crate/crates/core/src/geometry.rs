//! Parametric source supports, voxel quadrature and per-sensor annulus radii.
//!
//! A [`SourceSupport`] is a union of primitive components, each carrying the
//! constant value the source takes on it. All membership tests are strict (the
//! components are open sets); where components overlap the first one listed
//! determines the amplitude.

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// A point (or direction) in three-dimensional space.
pub type Point = Vector3<f64>;

/// Axis-aligned box given by its two extreme corners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub fn new(min: Point, max: Point) -> Self {
        Aabb { min, max }
    }

    fn contains_open(&self, p: &Point) -> bool {
        (0..3).all(|i| p[i] > self.min[i] && p[i] < self.max[i])
    }

    fn union(&self, other: &Aabb) -> Aabb {
        Aabb { min: self.min.inf(&other.min), max: self.max.sup(&other.max) }
    }

    fn is_proper(&self) -> bool {
        (0..3).all(|i| self.max[i] > self.min[i]) && self.min.iter().chain(self.max.iter()).all(|v| v.is_finite())
    }

    /// Distance from `p` to the closed box (zero inside).
    fn distance(&self, p: &Point) -> f64 {
        let nearest = p.sup(&self.min).inf(&self.max);
        (p - nearest).norm()
    }

    fn farthest_distance(&self, p: &Point) -> f64 {
        // The farthest point of a box is always a vertex; per axis pick the far side.
        let far = Point::from_fn(|i, _| {
            if (p[i] - self.min[i]).abs() >= (p[i] - self.max[i]).abs() {
                self.min[i]
            } else {
                self.max[i]
            }
        });
        (p - far).norm()
    }

    pub fn extents(&self) -> Point {
        self.max - self.min
    }
}

/// Primitive region shapes.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Ball {
        center: Point,
        radius: f64,
    },
    /// Axis-aligned box `|x_i - c_i| < half_widths_i`.
    Cube {
        center: Point,
        half_widths: Point,
    },
    /// Cylinder of the given radius along the x3 axis for `|x3| < half_height`,
    /// capped at `x3 = ±half_height` by balls of the same radius.
    RoundedCylinder {
        radius: f64,
        half_height: f64,
    },
    /// Union of two balls of equal radius.
    Peanut {
        centers: [Point; 2],
        radius: f64,
    },
    /// Union of two axis-aligned boxes.
    LShape {
        boxes: [Aabb; 2],
    },
}

fn segment_distance(p: &Point, a: &Point, b: &Point) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + ab * t)).norm()
}

impl Shape {
    fn validate(&self) -> Result<()> {
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Geometry(format!("{what} must be positive and finite, got {v}")))
            }
        };
        match self {
            Shape::Ball { radius, .. } => positive(*radius, "ball radius"),
            Shape::Cube { half_widths, .. } => half_widths.iter().try_for_each(|&w| positive(w, "cube half-width")),
            Shape::RoundedCylinder { radius, half_height } => {
                positive(*radius, "cylinder radius")?;
                positive(*half_height, "cylinder half-height")
            }
            Shape::Peanut { radius, .. } => positive(*radius, "peanut radius"),
            Shape::LShape { boxes } => {
                if boxes.iter().all(Aabb::is_proper) {
                    Ok(())
                } else {
                    Err(Error::Geometry("L-shape boxes need min < max on every axis".into()))
                }
            }
        }
    }

    pub fn contains(&self, p: &Point) -> bool {
        match self {
            Shape::Ball { center, radius } => (p - center).norm_squared() < radius * radius,
            Shape::Cube { center, half_widths } => (0..3).all(|i| (p[i] - center[i]).abs() < half_widths[i]),
            Shape::RoundedCylinder { radius, half_height } => {
                let (a, b) = capsule_axis(*half_height);
                segment_distance(p, &a, &b) < *radius
            }
            Shape::Peanut { centers, radius } => centers.iter().any(|c| (p - c).norm_squared() < radius * radius),
            Shape::LShape { boxes } => boxes.iter().any(|b| b.contains_open(p)),
        }
    }

    pub fn bounding_box(&self) -> Aabb {
        match self {
            Shape::Ball { center, radius } => {
                let r = Point::repeat(*radius);
                Aabb::new(center - r, center + r)
            }
            Shape::Cube { center, half_widths } => Aabb::new(center - half_widths, center + half_widths),
            Shape::RoundedCylinder { radius, half_height } => {
                let ext = Point::new(*radius, *radius, half_height + radius);
                Aabb::new(-ext, ext)
            }
            Shape::Peanut { centers, radius } => {
                let r = Point::repeat(*radius);
                Aabb::new(centers[0] - r, centers[0] + r).union(&Aabb::new(centers[1] - r, centers[1] + r))
            }
            Shape::LShape { boxes } => boxes[0].union(&boxes[1]),
        }
    }

    /// Exact infimum and supremum of `|x - y|` over the shape.
    fn distance_range(&self, x: &Point) -> (f64, f64) {
        match self {
            Shape::Ball { center, radius } => {
                let d = (x - center).norm();
                ((d - radius).max(0.0), d + radius)
            }
            Shape::Cube { center, half_widths } => {
                let b = Aabb::new(center - half_widths, center + half_widths);
                (b.distance(x), b.farthest_distance(x))
            }
            Shape::RoundedCylinder { radius, half_height } => {
                let (a, b) = capsule_axis(*half_height);
                let near = (segment_distance(x, &a, &b) - radius).max(0.0);
                let far = (x - a).norm().max((x - b).norm()) + radius;
                (near, far)
            }
            Shape::Peanut { centers, radius } => centers
                .iter()
                .map(|c| {
                    let d = (x - c).norm();
                    ((d - radius).max(0.0), d + radius)
                })
                .fold((f64::INFINITY, 0.0), |acc, r| (acc.0.min(r.0), acc.1.max(r.1))),
            Shape::LShape { boxes } => boxes
                .iter()
                .map(|b| (b.distance(x), b.farthest_distance(x)))
                .fold((f64::INFINITY, 0.0), |acc, r| (acc.0.min(r.0), acc.1.max(r.1))),
        }
    }
}

fn capsule_axis(half_height: f64) -> (Point, Point) {
    (Point::new(0.0, 0.0, -half_height), Point::new(0.0, 0.0, half_height))
}

/// One component of a source support: a shape and the constant source value on it.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub shape: Shape,
    pub amplitude: f64,
}

/// The support `D` of the source together with the piecewise-constant source `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSupport {
    components: Vec<Component>,
}

impl SourceSupport {
    /// Builds a support from one or more components, validating positive measure
    /// and that all amplitudes are nonzero with a common sign.
    pub fn new(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Geometry("support needs at least one component".into()));
        }
        for c in &components {
            c.shape.validate()?;
            if c.amplitude == 0.0 || !c.amplitude.is_finite() {
                return Err(Error::Geometry(format!(
                    "component amplitude must be nonzero and finite, got {}",
                    c.amplitude
                )));
            }
        }
        let positive = components[0].amplitude > 0.0;
        if components.iter().any(|c| (c.amplitude > 0.0) != positive) {
            return Err(Error::Geometry("all component amplitudes must share the same sign".into()));
        }
        Ok(SourceSupport { components })
    }

    pub fn single(shape: Shape, amplitude: f64) -> Result<Self> {
        Self::new(vec![Component { shape, amplitude }])
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.components.iter().any(|c| c.shape.contains(p))
    }

    /// Source value at `p`, or `None` outside the support.
    pub fn amplitude_at(&self, p: &Point) -> Option<f64> {
        self.components.iter().find(|c| c.shape.contains(p)).map(|c| c.amplitude)
    }

    /// `(c_f, C_f)`: the smallest and largest source modulus.
    pub fn amplitude_bounds(&self) -> (f64, f64) {
        self.components
            .iter()
            .fold((f64::INFINITY, 0.0), |(lo, hi), c| (lo.min(c.amplitude.abs()), hi.max(c.amplitude.abs())))
    }

    pub fn bounding_box(&self) -> Aabb {
        self.components
            .iter()
            .map(|c| c.shape.bounding_box())
            .reduce(|a, b| a.union(&b))
            .expect("support has at least one component")
    }

    /// Radii `(r1, r2)` of the smallest annulus centred at `x` containing the support.
    pub fn annulus_radii(&self, x: &Point) -> Result<(f64, f64)> {
        let (r1, r2) = self
            .components
            .iter()
            .map(|c| c.shape.distance_range(x))
            .fold((f64::INFINITY, 0.0_f64), |acc, r| (acc.0.min(r.0), acc.1.max(r.1)));
        if r1 <= 0.0 {
            return Err(Error::PointInsideSupport(x[0], x[1], x[2]));
        }
        Ok((r1, r2))
    }
}

/// Midpoint voxel rule discretizing volume integrals over a support.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<Point>,
    weights: Vec<f64>,
    spacing: f64,
}

impl QuadratureRule {
    /// Voxelizes the support's bounding box at spacing `h`, keeping the
    /// midpoints that lie inside. Nodes are ordered lexicographically by voxel
    /// index with the x1 index varying slowest.
    pub fn voxel(support: &SourceSupport, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!("quadrature spacing must be positive, got {h}")));
        }
        let bbox = support.bounding_box();
        let ext = bbox.extents();
        let counts: Vec<usize> = (0..3).map(|i| ((ext[i] / h - 1e-9).ceil() as usize).max(1)).collect();
        let weight = h * h * h;
        let mut nodes = Vec::new();
        for i in 0..counts[0] {
            let x = bbox.min[0] + (i as f64 + 0.5) * h;
            for j in 0..counts[1] {
                let y = bbox.min[1] + (j as f64 + 0.5) * h;
                for k in 0..counts[2] {
                    let p = Point::new(x, y, bbox.min[2] + (k as f64 + 0.5) * h);
                    if support.contains(&p) {
                        nodes.push(p);
                    }
                }
            }
        }
        if nodes.is_empty() {
            return Err(Error::EmptyQuadrature { h });
        }
        let weights = vec![weight; nodes.len()];
        Ok(QuadratureRule { nodes, weights, spacing: h })
    }

    /// Builds a rule from explicit nodes and weights.
    pub fn from_parts(nodes: Vec<Point>, weights: Vec<f64>, spacing: f64) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != weights.len() {
            return Err(Error::InvalidArgument("nodes and weights must be nonempty and equal in length".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidArgument("quadrature weights must be positive".into()));
        }
        Ok(QuadratureRule { nodes, weights, spacing })
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Source values at the nodes; fails if a node falls outside the support.
    pub fn amplitudes(&self, support: &SourceSupport) -> Result<Vec<f64>> {
        self.nodes
            .iter()
            .map(|p| {
                support
                    .amplitude_at(p)
                    .ok_or_else(|| Error::Geometry(format!("quadrature node {p:?} is outside the support")))
            })
            .collect()
    }
}

/// The five supports used in the reference experiments, plus the two-ball union.
pub mod shapes {
    use super::*;

    pub fn unit_ball() -> SourceSupport {
        ball(Point::zeros(), 1.0, 1.0)
    }

    pub fn ball(center: Point, radius: f64, amplitude: f64) -> SourceSupport {
        SourceSupport::single(Shape::Ball { center, radius }, amplitude).expect("valid ball")
    }

    pub fn cube() -> SourceSupport {
        SourceSupport::single(Shape::Cube { center: Point::zeros(), half_widths: Point::repeat(1.0) }, 1.0)
            .expect("valid cube")
    }

    pub fn rounded_cylinder() -> SourceSupport {
        SourceSupport::single(Shape::RoundedCylinder { radius: 1.0, half_height: 1.0 }, 1.0).expect("valid cylinder")
    }

    pub fn peanut() -> SourceSupport {
        SourceSupport::single(
            Shape::Peanut { centers: [Point::new(0.5, 0.0, 0.0), Point::new(-0.5, 0.0, 0.0)], radius: 1.0 },
            1.0,
        )
        .expect("valid peanut")
    }

    pub fn l_shape() -> SourceSupport {
        SourceSupport::single(
            Shape::LShape {
                boxes: [
                    Aabb::new(Point::new(-0.5, -0.5, -0.25), Point::new(0.0, 1.5, 0.25)),
                    Aabb::new(Point::new(0.0, -0.5, -0.25), Point::new(1.5, 0.0, 0.25)),
                ],
            },
            1.0,
        )
        .expect("valid L-shape")
    }

    pub fn two_balls() -> SourceSupport {
        SourceSupport::new(vec![
            Component { shape: Shape::Ball { center: Point::new(-1.0, 0.0, 0.0), radius: 0.5 }, amplitude: 1.0 },
            Component { shape: Shape::Ball { center: Point::new(1.0, 0.0, 0.0), radius: 0.5 }, amplitude: 1.0 },
        ])
        .expect("valid two-ball union")
    }
}

#[cfg(test)]
mod tests {
    use super::shapes::*;
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn all_shapes() -> Vec<SourceSupport> {
        vec![unit_ball(), cube(), rounded_cylinder(), peanut(), l_shape(), two_balls()]
    }

    #[test]
    fn ball_membership() {
        let b = unit_ball();
        assert!(b.contains(&Point::zeros()));
        assert!(!b.contains(&Point::new(2.0, 0.0, 0.0)));
        assert!(!b.contains(&Point::new(1.0, 0.0, 0.0)), "boundary is excluded");
    }

    #[test]
    fn l_shape_membership() {
        let l = l_shape();
        assert!(l.contains(&Point::new(-0.25, 1.0, 0.0)));
        assert!(l.contains(&Point::new(1.0, -0.25, 0.0)));
        assert!(!l.contains(&Point::new(1.0, 1.0, 0.0)), "the notch is outside");
        assert!(!l.contains(&Point::new(-0.25, 1.0, 0.3)));
    }

    #[test]
    fn rounded_cylinder_membership() {
        let c = rounded_cylinder();
        assert!(c.contains(&Point::new(0.9, 0.0, 0.9)));
        assert!(c.contains(&Point::new(0.0, 0.0, 1.95)));
        assert!(!c.contains(&Point::new(0.9, 0.0, 1.9)), "outside the spherical cap");
        assert!(!c.contains(&Point::new(0.0, 0.0, 2.01)));
    }

    #[test]
    fn invalid_supports_are_rejected() {
        assert!(SourceSupport::single(Shape::Ball { center: Point::zeros(), radius: 0.0 }, 1.0).is_err());
        assert!(SourceSupport::single(Shape::Ball { center: Point::zeros(), radius: 1.0 }, 0.0).is_err());
        let mixed = SourceSupport::new(vec![
            Component { shape: Shape::Ball { center: Point::zeros(), radius: 1.0 }, amplitude: 1.0 },
            Component { shape: Shape::Ball { center: Point::repeat(3.0), radius: 1.0 }, amplitude: -1.0 },
        ]);
        assert!(mixed.is_err());
        assert!(SourceSupport::new(vec![]).is_err());
    }

    #[test]
    fn cube_rule_is_exact() {
        let rule = QuadratureRule::voxel(&cube(), 0.5).unwrap();
        assert_eq!(rule.len(), 64);
        assert_eq!(rule.total_weight(), 8.0);
        assert!(rule.weights().iter().all(|&w| w == 0.125));
    }

    #[test]
    fn ball_rule_volume_within_one_percent() {
        let rule = QuadratureRule::voxel(&unit_ball(), 0.05).unwrap();
        let exact = 4.0 * PI / 3.0;
        assert!((rule.total_weight() - exact).abs() / exact < 0.01);
    }

    #[test]
    fn coarse_rule_is_an_error() {
        assert!(matches!(QuadratureRule::voxel(&unit_ball(), 10.0), Err(Error::EmptyQuadrature { .. })));
        assert!(QuadratureRule::voxel(&unit_ball(), -1.0).is_err());
    }

    #[test]
    fn ball_volume_converges() {
        let exact = 4.0 * PI / 3.0;
        let err = |h: f64| (QuadratureRule::voxel(&unit_ball(), h).unwrap().total_weight() - exact).abs();
        let (coarse, fine) = (err(0.2), err(0.05));
        assert!(fine < coarse, "coarse {coarse} fine {fine}");
        // At least first order: quartering h at least quarters the error (with slack).
        assert!(fine < coarse / 2.0);
    }

    #[test]
    fn nodes_lie_inside_and_are_lexicographic() {
        for s in all_shapes() {
            let rule = QuadratureRule::voxel(&s, 0.1).unwrap();
            assert!(rule.nodes().iter().all(|p| s.contains(p)));
            let sorted = rule.nodes().windows(2).all(|w| (w[0][0], w[0][1], w[0][2]) < (w[1][0], w[1][1], w[1][2]));
            assert!(sorted);
            assert_eq!(rule.amplitudes(&s).unwrap().len(), rule.len());
        }
    }

    #[test]
    fn annulus_of_ball() {
        let (r1, r2) = unit_ball().annulus_radii(&Point::new(3.0, 0.0, 0.0)).unwrap();
        assert_eq!((r1, r2), (2.0, 4.0));
        assert!(unit_ball().annulus_radii(&Point::new(0.5, 0.0, 0.0)).is_err());
        assert!(unit_ball().annulus_radii(&Point::new(1.0, 0.0, 0.0)).is_err(), "closure counts as inside");
    }

    #[test]
    fn annulus_of_two_balls() {
        let (r1, r2) = two_balls().annulus_radii(&Point::new(3.0, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(r1, 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r2, 4.5, epsilon = 1e-15);
    }

    #[test]
    fn annulus_of_cube_and_capsule() {
        let (r1, r2) = cube().annulus_radii(&Point::new(3.0, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(r1, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r2, (16.0f64 + 1.0 + 1.0).sqrt(), epsilon = 1e-15);
        let (r1, r2) = rounded_cylinder().annulus_radii(&Point::new(0.0, 0.0, 3.0)).unwrap();
        assert_abs_diff_eq!(r1, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r2, 5.0, epsilon = 1e-15);
    }

    /// Brute-force oracle: node distances bracket the analytic radii and approach them.
    #[test]
    fn annulus_brute_force_oracle() {
        let sensors = [
            Point::new(3.0, 0.0, 0.0),
            Point::new(2.1213203435596424, 0.0, 2.1213203435596424),
            Point::new(-1.7320508075688772, 1.7320508075688772, -1.7320508075688772),
            Point::new(0.0, 0.0, -3.0),
        ];
        for s in all_shapes() {
            for x in &sensors {
                let (r1, r2) = s.annulus_radii(x).unwrap();
                let spread = |h: f64| {
                    let rule = QuadratureRule::voxel(&s, h).unwrap();
                    rule.nodes().iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), y| {
                        let d = (x - y).norm();
                        (lo.min(d), hi.max(d))
                    })
                };
                let (lo_c, hi_c) = spread(0.1);
                let (lo_f, hi_f) = spread(0.025);
                assert!(lo_c >= r1 && hi_c <= r2);
                assert!(lo_f >= r1 && hi_f <= r2);
                assert!(lo_f - r1 < 0.05 && r2 - hi_f < 0.05, "{lo_f} vs {r1}, {hi_f} vs {r2}");
            }
        }
    }

    #[test]
    fn amplitude_bounds_use_modulus() {
        let s = SourceSupport::new(vec![
            Component { shape: Shape::Ball { center: Point::zeros(), radius: 0.5 }, amplitude: -2.0 },
            Component { shape: Shape::Ball { center: Point::repeat(2.0), radius: 0.5 }, amplitude: -0.5 },
        ])
        .unwrap();
        assert_eq!(s.amplitude_bounds(), (0.5, 2.0));
    }
}
