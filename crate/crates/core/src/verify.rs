//! Numerical certificates: factorization identity, coercivity sandwich, PSF
//! properties and data symmetries, each packaged as a [`VerificationReport`].

use std::fmt;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::forward::{self, FrequencyGrid, MeasurementKind, MultiFreqDataset};
use crate::imaging::{psf_closed_form, psf_discrete};
use crate::operators::{self, FreqFunction};
use crate::scenario::Scenario;

pub const FACTORIZATION_TOL: f64 = 1e-10;
pub const COERCIVITY_SLACK: f64 = 1e-10;
pub const SYMMETRY_TOL: f64 = 1e-14;
/// Required shrink of the worst PSF quadrature error when `J` grows tenfold.
pub const PSF_CONVERGENCE_RATIO: f64 = 0.2;

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub name: String,
    pub scenario: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub runtime_s: f64,
    pub details: Vec<(String, f64)>,
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "check: {}", self.name)?;
        writeln!(f, "scenario: {}", self.scenario)?;
        writeln!(f, "measured: {:e}", self.measured)?;
        writeln!(f, "tolerance: {:e}", self.tolerance)?;
        writeln!(f, "passed: {}", self.passed)?;
        writeln!(f, "runtime_s: {:e}", self.runtime_s)?;
        for (k, v) in &self.details {
            writeln!(f, "detail.{k}: {v:e}")?;
        }
        Ok(())
    }
}

/// Serializes reports as blank-line separated records.
pub fn write_reports(reports: &[VerificationReport]) -> String {
    reports.iter().map(|r| r.to_string()).collect::<Vec<_>>().join("\n")
}

/// Inverse of [`write_reports`].
pub fn parse_reports(text: &str) -> Result<Vec<VerificationReport>> {
    let bad = |msg: String| Error::InvalidArgument(format!("report: {msg}"));
    let mut out = Vec::new();
    for record in text.split("\n\n").map(str::trim).filter(|r| !r.is_empty()) {
        let mut r = VerificationReport {
            name: String::new(),
            scenario: String::new(),
            measured: f64::NAN,
            tolerance: f64::NAN,
            passed: false,
            runtime_s: 0.0,
            details: Vec::new(),
        };
        for line in record.lines() {
            let (key, value) = line.split_once(": ").ok_or_else(|| bad(format!("no `key: value` in {line:?}")))?;
            let num = || value.parse::<f64>().map_err(|_| bad(format!("`{key}` is not a number: {value:?}")));
            match key {
                "check" => r.name = value.to_string(),
                "scenario" => r.scenario = value.to_string(),
                "measured" => r.measured = num()?,
                "tolerance" => r.tolerance = num()?,
                "passed" => r.passed = value.parse().map_err(|_| bad(format!("`passed` is not a bool: {value:?}")))?,
                "runtime_s" => r.runtime_s = num()?,
                k => match k.strip_prefix("detail.") {
                    Some(d) => r.details.push((d.to_string(), num()?)),
                    None => return Err(bad(format!("unknown key `{k}`"))),
                },
            }
        }
        out.push(r);
    }
    Ok(out)
}

fn require_noiseless(scenario: &Scenario, check: &str) -> Result<()> {
    if scenario.noise_level != 0.0 {
        return Err(Error::Precondition(format!(
            "{check} needs noiseless data, scenario `{}` has noise {}",
            scenario.name, scenario.noise_level
        )));
    }
    Ok(())
}

/// Relative residual of the factorization for one sensor; the far identity is
/// used automatically for far-kind scenarios.
pub fn check_factorization(scenario: &Scenario, sensor: usize, trials: usize, tol: f64) -> Result<VerificationReport> {
    require_noiseless(scenario, "factorization check")?;
    let start = Instant::now();
    let residual = operators::factorization_residual(scenario, sensor, trials)?;
    Ok(VerificationReport {
        name: format!("factorization_{}", scenario.kind().as_str()),
        scenario: scenario.summary(),
        measured: residual,
        tolerance: tol,
        passed: residual <= tol,
        runtime_s: start.elapsed().as_secs_f64(),
        details: vec![("sensor".into(), sensor as f64), ("trials".into(), trials as f64)],
    })
}

/// [`check_factorization`] for every sensor, sharing one dataset.
pub fn check_factorization_all(scenario: &Scenario, trials: usize, tol: f64) -> Result<Vec<VerificationReport>> {
    require_noiseless(scenario, "factorization check")?;
    let start = Instant::now();
    let residuals = operators::factorization_residuals(scenario, trials)?;
    let per_sensor = start.elapsed().as_secs_f64() / residuals.len() as f64;
    Ok(residuals
        .into_iter()
        .enumerate()
        .map(|(sensor, residual)| VerificationReport {
            name: format!("factorization_{}", scenario.kind().as_str()),
            scenario: scenario.summary(),
            measured: residual,
            tolerance: tol,
            passed: residual <= tol,
            runtime_s: per_sensor,
            details: vec![("sensor".into(), sensor as f64), ("trials".into(), trials as f64)],
        })
        .collect())
}

/// Admissible interval for `|(N g, g)| / ‖P* g‖²` (near) or
/// `|(F φ, φ)| / ‖Q* φ‖²` (far).
pub fn coercivity_bounds(scenario: &Scenario, sensor: usize) -> Result<(f64, f64)> {
    let (c_f, big_c_f) = scenario.support.amplitude_bounds();
    let x = scenario
        .sensors
        .points()
        .get(sensor)
        .ok_or(Error::SensorIndex { index: sensor, count: scenario.sensors.len() })?;
    match scenario.kind() {
        MeasurementKind::Near => {
            let (r1, r2) = scenario.support.annulus_radii(x)?;
            let four_pi = 4.0 * std::f64::consts::PI;
            Ok((c_f / (four_pi * r2), big_c_f / (four_pi * r1)))
        }
        MeasurementKind::Far => Ok((c_f, big_c_f)),
    }
}

/// Checks every observed ratio against [`coercivity_bounds`].
pub fn check_coercivity(scenario: &Scenario, sensor: usize, trials: usize) -> Result<VerificationReport> {
    require_noiseless(scenario, "coercivity check")?;
    let start = Instant::now();
    let (lo, hi) = coercivity_bounds(scenario, sensor)?;
    let rule = scenario.quadrature()?;
    let data = forward::generate_with_rule(
        &scenario.support,
        &rule,
        &scenario.sensors,
        scenario.frequencies,
        scenario.zero_mode,
    )?;
    let x = scenario.sensors.points()[sensor];
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let (mut min_ratio, mut max_ratio) = (f64::INFINITY, 0.0_f64);
    let mut redraws = 0usize;
    let mut done = 0usize;
    while done < trials {
        let g = FreqFunction::random(data.grid, &mut rng);
        let (form, image) = match scenario.kind() {
            MeasurementKind::Near => {
                (operators::near_quadratic_form(&data, sensor, &g)?, operators::apply_p_star(&x, &rule, &g)?)
            }
            MeasurementKind::Far => {
                (operators::far_quadratic_form(&data, sensor, &g)?, operators::apply_q_star(&x, &rule, &g))
            }
        };
        let denom = image.norm_sqr(&rule);
        if !(denom > 1e-24 * g.norm().powi(2)) {
            redraws += 1;
            if redraws > 100 {
                return Err(Error::Degenerate("repeated zero-norm draws in coercivity check".into()));
            }
            continue;
        }
        let ratio = form.norm() / denom;
        min_ratio = min_ratio.min(ratio);
        max_ratio = max_ratio.max(ratio);
        done += 1;
    }
    // Worst relative excursion outside the interval; <= 0 means inside.
    let excursion = ((lo - min_ratio) / lo).max((max_ratio - hi) / hi);
    Ok(VerificationReport {
        name: format!("coercivity_{}", scenario.kind().as_str()),
        scenario: scenario.summary(),
        measured: excursion,
        tolerance: COERCIVITY_SLACK,
        passed: excursion <= COERCIVITY_SLACK,
        runtime_s: start.elapsed().as_secs_f64(),
        details: vec![
            ("sensor".into(), sensor as f64),
            ("trials".into(), trials as f64),
            ("lower_bound".into(), lo),
            ("upper_bound".into(), hi),
            ("min_ratio".into(), min_ratio),
            ("max_ratio".into(), max_ratio),
        ],
    })
}

/// `count` evenly spaced samples on `[-half, half]`.
pub fn psf_samples(half: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![0.0];
    }
    (0..count).map(|i| -half + 2.0 * half * i as f64 / (count - 1) as f64).collect()
}

/// Bound `|psf| <= min(k_max, 2/|t|)` with equality only at `t = 0`, plus
/// convergence of the rectangle rule: the worst closed-form mismatch must
/// shrink by [`PSF_CONVERGENCE_RATIO`] when `J` grows tenfold. The discrete
/// sum is `2π/Δk` periodic, so convergence is judged on `|t| <= π/Δk` only.
pub fn check_psf(grid: &FrequencyGrid, t_samples: &[f64]) -> Result<VerificationReport> {
    if t_samples.is_empty() {
        return Err(Error::InvalidArgument("check_psf needs at least one sample".into()));
    }
    let start = Instant::now();
    let k_max = grid.k_max();
    let fine = FrequencyGrid::new(k_max, grid.count() * 10)?;
    let mut bound_excess = f64::NEG_INFINITY;
    let mut peak_violations = 0usize;
    let (mut err_coarse, mut err_fine) = (0.0_f64, 0.0_f64);
    for &t in t_samples {
        let closed = psf_closed_form(t, k_max);
        let modulus = closed.norm();
        let bound = if t == 0.0 { k_max } else { k_max.min(2.0 / t.abs()) };
        bound_excess = bound_excess.max((modulus - bound) / bound);
        if t == 0.0 {
            if modulus != k_max {
                peak_violations += 1;
            }
        } else if t.abs() * k_max > 1e-6 && modulus >= k_max {
            peak_violations += 1;
        }
        if t.abs() * grid.spacing() <= std::f64::consts::PI {
            err_coarse = err_coarse.max((psf_discrete(t, grid) - closed).norm());
            err_fine = err_fine.max((psf_discrete(t, &fine) - closed).norm());
        }
    }
    let ratio = if err_coarse > 0.0 { err_fine / err_coarse } else { 0.0 };
    let bound_ok = bound_excess <= 1e-12;
    let converges = ratio <= PSF_CONVERGENCE_RATIO || err_fine <= 1e-12;
    Ok(VerificationReport {
        name: "psf".into(),
        scenario: format!("k_max={k_max}, J={}, {} samples", grid.count(), t_samples.len()),
        measured: bound_excess.max(0.0),
        tolerance: 1e-12,
        passed: bound_ok && converges && peak_violations == 0,
        runtime_s: start.elapsed().as_secs_f64(),
        details: vec![
            ("peak_violations".into(), peak_violations as f64),
            ("quadrature_error".into(), err_coarse),
            ("quadrature_error_10x".into(), err_fine),
            ("convergence_ratio".into(), ratio),
        ],
    })
}

/// Largest symmetry violation relative to the row norm: conjugate symmetry
/// for near data, `u(x̂, -k) = u(-x̂, k)` for far data.
pub fn symmetry_violation(data: &MultiFreqDataset) -> Result<f64> {
    let j = data.grid.count() as i64;
    let partner: Vec<usize> = match data.kind {
        MeasurementKind::Near => (0..data.sensor_count()).collect(),
        MeasurementKind::Far => data.sensors.negation_indices()?,
    };
    let mut worst = 0.0_f64;
    for l in 0..data.sensor_count() {
        let norm = data.row(l).iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        for m in 0..=j {
            let lhs = data.value(l, -m);
            let rhs = match data.kind {
                MeasurementKind::Near => data.value(l, m).conj(),
                MeasurementKind::Far => data.value(partner[l], m),
            };
            worst = worst.max((lhs - rhs).norm() / norm);
        }
    }
    Ok(worst)
}

pub fn check_symmetries(data: &MultiFreqDataset) -> Result<VerificationReport> {
    let start = Instant::now();
    let violation = symmetry_violation(data)?;
    Ok(VerificationReport {
        name: format!("symmetry_{}", data.kind.as_str()),
        scenario: format!(
            "{} sensors, J={}, noise={}, seed={}",
            data.sensor_count(),
            data.grid.count(),
            data.noise_level,
            data.seed
        ),
        measured: violation,
        tolerance: SYMMETRY_TOL,
        passed: violation <= SYMMETRY_TOL,
        runtime_s: start.elapsed().as_secs_f64(),
        details: vec![("noise_level".into(), data.noise_level)],
    })
}
