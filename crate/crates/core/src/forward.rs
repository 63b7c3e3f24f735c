//! Synthetic multi-frequency data by quadrature of the radiating-solution and
//! far-field integral representations.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Point, QuadratureRule, SourceSupport};
use crate::scenario::Scenario;

/// Tolerance on `|x̂| = 1` for far-field directions.
pub const UNIT_TOLERANCE: f64 = 1e-12;

/// Uniform discretization of the band `(0, k_max]` with `count` nodes
/// `k_j = j Δk`, plus the difference nodes `m Δk` for `|m| <= count`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid {
    k_max: f64,
    count: usize,
}

impl FrequencyGrid {
    pub fn new(k_max: f64, count: usize) -> Result<Self> {
        if !(k_max > 0.0 && k_max.is_finite()) {
            return Err(Error::InvalidArgument(format!("k_max must be positive, got {k_max}")));
        }
        if count < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 frequencies, got {count}")));
        }
        Ok(FrequencyGrid { k_max, count })
    }

    pub fn k_max(&self) -> f64 {
        self.k_max
    }

    /// Number of positive nodes `J`.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn spacing(&self) -> f64 {
        self.k_max / self.count as f64
    }

    /// Positive node `k_j` for `j = 1..=J`.
    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (1..=self.count).map(|j| self.node(j)).collect()
    }

    /// Difference node `m Δk` for `m = -J..=J`.
    pub fn difference(&self, m: i64) -> f64 {
        m as f64 * self.spacing()
    }

    /// Number of difference nodes, `2J + 1`.
    pub fn difference_count(&self) -> usize {
        2 * self.count + 1
    }
}

/// Near-field data at points, or far-field data along directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasurementKind {
    Near,
    Far,
}

impl MeasurementKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MeasurementKind::Near => "near",
            MeasurementKind::Far => "far",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "near" => Some(MeasurementKind::Near),
            "far" => Some(MeasurementKind::Far),
            _ => None,
        }
    }
}

/// Sensor locations (near) or observation directions (far).
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    kind: MeasurementKind,
    points: Vec<Point>,
}

fn check_unit(d: &Point) -> Result<()> {
    if (d.norm() - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::NonUnitDirection(d[0], d[1], d[2]));
    }
    Ok(())
}

impl MeasurementSet {
    pub fn near(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("measurement set is empty".into()));
        }
        Ok(MeasurementSet { kind: MeasurementKind::Near, points })
    }

    /// Far directions; any direction whose negation is missing gets it appended.
    pub fn far(directions: Vec<Point>) -> Result<Self> {
        if directions.is_empty() {
            return Err(Error::InvalidArgument("measurement set is empty".into()));
        }
        directions.iter().try_for_each(check_unit)?;
        let mut closed = directions.clone();
        for d in &directions {
            let neg = -d;
            if !closed.iter().any(|c| (c - neg).norm() <= UNIT_TOLERANCE) {
                closed.push(neg);
            }
        }
        Ok(MeasurementSet { kind: MeasurementKind::Far, points: closed })
    }

    pub fn kind(&self) -> MeasurementKind {
        self.kind
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of `-x̂` for every far direction.
    pub fn negation_indices(&self) -> Result<Vec<usize>> {
        self.points
            .iter()
            .map(|d| {
                self.points
                    .iter()
                    .position(|c| (c + d).norm() <= UNIT_TOLERANCE)
                    .ok_or_else(|| Error::InvalidArgument(format!("direction {d:?} has no negation in the set")))
            })
            .collect()
    }

    /// Near sensors must lie outside the closed support.
    pub fn validate_against(&self, support: &SourceSupport) -> Result<()> {
        if self.kind == MeasurementKind::Near {
            for p in &self.points {
                support.annulus_radii(p)?;
            }
        }
        Ok(())
    }
}

/// Treatment of the zero difference frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZeroMode {
    /// Continuous extension `k -> 0` of the kernel.
    #[default]
    Extend,
    /// Zero the `m = 0` column.
    Drop,
}

impl ZeroMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ZeroMode::Extend => "extend",
            ZeroMode::Drop => "drop",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "extend" => Some(ZeroMode::Extend),
            "drop" => Some(ZeroMode::Drop),
            _ => None,
        }
    }
}

/// Complex samples `u(x_ℓ, m Δk)` for every sensor and every difference index
/// `m = -J..=J`, stored row-major over (sensor, m).
#[derive(Debug, Clone, PartialEq)]
pub struct MultiFreqDataset {
    pub kind: MeasurementKind,
    pub sensors: MeasurementSet,
    pub grid: FrequencyGrid,
    pub zero_mode: ZeroMode,
    pub noise_level: f64,
    pub seed: u64,
    values: Vec<Complex64>,
}

impl MultiFreqDataset {
    pub fn from_values(
        sensors: MeasurementSet,
        grid: FrequencyGrid,
        values: Vec<Complex64>,
        zero_mode: ZeroMode,
        noise_level: f64,
        seed: u64,
    ) -> Result<Self> {
        let expected = sensors.len() * grid.difference_count();
        if values.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "dataset needs {expected} values ({} sensors x {} columns), got {}",
                sensors.len(),
                grid.difference_count(),
                values.len()
            )));
        }
        Ok(MultiFreqDataset { kind: sensors.kind(), sensors, grid, zero_mode, noise_level, seed, values })
    }

    pub fn sensor_count(&self) -> usize {
        self.sensors.len()
    }

    fn column(&self, m: i64) -> usize {
        (m + self.grid.count() as i64) as usize
    }

    /// Sample at sensor `l`, difference index `m` in `-J..=J`.
    pub fn value(&self, l: usize, m: i64) -> Complex64 {
        self.values[l * self.grid.difference_count() + self.column(m)]
    }

    /// Row of sensor `l`, ordered `m = -J..=J`.
    pub fn row(&self, l: usize) -> &[Complex64] {
        let n = self.grid.difference_count();
        &self.values[l * n..(l + 1) * n]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn check_sensor(&self, l: usize) -> Result<()> {
        if l >= self.sensor_count() {
            return Err(Error::SensorIndex { index: l, count: self.sensor_count() });
        }
        Ok(())
    }

    /// Copy with every sample multiplied by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Outgoing Helmholtz fundamental solution `e^{ik|x-y|} / (4π|x-y|)`.
pub fn fundamental_solution(k: f64, x: &Point, y: &Point) -> Result<Complex64> {
    let r = (x - y).norm();
    if r == 0.0 {
        return Err(Error::SingularKernel);
    }
    Ok(Complex64::cis(k * r) / (4.0 * PI * r))
}

fn near_sum(x: &Point, rule: &QuadratureRule, amplitudes: &[f64], k: f64) -> Result<Complex64> {
    let mut acc = Complex64::new(0.0, 0.0);
    for ((y, w), f) in rule.nodes().iter().zip(rule.weights()).zip(amplitudes) {
        acc += fundamental_solution(k, x, y)? * (w * f);
    }
    Ok(acc)
}

fn far_sum(xhat: &Point, rule: &QuadratureRule, amplitudes: &[f64], k: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for ((y, w), f) in rule.nodes().iter().zip(rule.weights()).zip(amplitudes) {
        acc += Complex64::cis(-k * xhat.dot(y)) * (w * f);
    }
    acc
}

/// Radiating field `u^s(x, k)` of the source at an exterior point.
pub fn near_field(support: &SourceSupport, rule: &QuadratureRule, x: &Point, k: f64) -> Result<Complex64> {
    if support.contains(x) {
        return Err(Error::PointInsideSupport(x[0], x[1], x[2]));
    }
    near_sum(x, rule, &rule.amplitudes(support)?, k)
}

/// Far-field pattern `u^∞(x̂, k)`.
pub fn far_field(support: &SourceSupport, rule: &QuadratureRule, xhat: &Point, k: f64) -> Result<Complex64> {
    check_unit(xhat)?;
    Ok(far_sum(xhat, rule, &rule.amplitudes(support)?, k))
}

/// Noiseless dataset for a scenario, using the scenario's own quadrature rule.
pub fn generate_dataset(scenario: &Scenario) -> Result<MultiFreqDataset> {
    let rule = scenario.quadrature()?;
    generate_with_rule(&scenario.support, &rule, &scenario.sensors, scenario.frequencies, scenario.zero_mode)
}

/// Evaluates `m = 0..=J` directly and fills `m < 0` by symmetry: conjugation for
/// near data, direction negation for far data.
pub fn generate_with_rule(
    support: &SourceSupport,
    rule: &QuadratureRule,
    sensors: &MeasurementSet,
    grid: FrequencyGrid,
    zero_mode: ZeroMode,
) -> Result<MultiFreqDataset> {
    sensors.validate_against(support)?;
    let amplitudes = rule.amplitudes(support)?;
    let j_count = grid.count() as i64;

    // Non-negative columns m = 0..=J, one row per sensor.
    let positive: Vec<Vec<Complex64>> = sensors
        .points()
        .par_iter()
        .map(|p| {
            (0..=j_count)
                .map(|m| {
                    let k = grid.difference(m);
                    match sensors.kind() {
                        MeasurementKind::Near => near_sum(p, rule, &amplitudes, k),
                        MeasurementKind::Far => Ok(far_sum(p, rule, &amplitudes, k)),
                    }
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let negation = match sensors.kind() {
        MeasurementKind::Far => Some(sensors.negation_indices()?),
        MeasurementKind::Near => None,
    };

    let cols = grid.difference_count();
    let mut values = vec![Complex64::new(0.0, 0.0); sensors.len() * cols];
    for l in 0..sensors.len() {
        let row = &mut values[l * cols..(l + 1) * cols];
        for m in 0..=j_count {
            row[(m + j_count) as usize] = positive[l][m as usize];
            if m > 0 {
                row[(j_count - m) as usize] = match &negation {
                    None => positive[l][m as usize].conj(),
                    Some(neg) => positive[neg[l]][m as usize],
                };
            }
        }
        if zero_mode == ZeroMode::Drop {
            row[j_count as usize] = Complex64::new(0.0, 0.0);
        }
    }
    MultiFreqDataset::from_values(sensors.clone(), grid, values, zero_mode, 0.0, 0)
}

fn entry_rng(seed: u64, entry: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(entry);
    rng
}

/// Adds complex circular Gaussian noise scaled per sensor by the row's RMS
/// magnitude. Every entry draws from its own counter-derived stream, so the
/// result does not depend on evaluation order.
pub fn add_noise(data: &MultiFreqDataset, level: f64, seed: u64) -> Result<MultiFreqDataset> {
    if !(level >= 0.0 && level.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise level must be nonnegative, got {level}")));
    }
    let mut out = data.clone();
    out.noise_level = level;
    out.seed = seed;
    if level == 0.0 {
        return Ok(out);
    }
    let cols = data.grid.difference_count();
    for l in 0..data.sensor_count() {
        let row = data.row(l);
        let rms = (row.iter().map(|v| v.norm_sqr()).sum::<f64>() / cols as f64).sqrt();
        let scale = level * rms / std::f64::consts::SQRT_2;
        for c in 0..cols {
            let entry = (l * cols + c) as u64;
            let mut rng = entry_rng(seed, entry);
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            out.values[l * cols + c] += Complex64::new(re, im) * scale;
        }
    }
    Ok(out)
}
