//! Discrete multi-frequency near/far field operators and their factors.
//!
//! Integrals over the band `K` use the rectangle rule on the nodes
//! `k_j = j Δk`, so `k_j - k_l` is always a difference node of the dataset and
//! the factorizations hold as algebraic identities on matched quadrature.
//! Integrals over the support use the quadrature rule weights.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::forward::{self, FrequencyGrid, MeasurementKind, MultiFreqDataset};
use crate::geometry::{Point, QuadratureRule, SourceSupport};
use crate::scenario::Scenario;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Element of `L²(K)` sampled on the positive frequency nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqFunction {
    pub grid: FrequencyGrid,
    pub samples: Vec<Complex64>,
}

impl FreqFunction {
    pub fn new(grid: FrequencyGrid, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != grid.count() {
            return Err(Error::GridMismatch(format!(
                "function has {} samples, grid has {} nodes",
                samples.len(),
                grid.count()
            )));
        }
        if samples.iter().any(|s| !(s.re.is_finite() && s.im.is_finite())) {
            return Err(Error::InvalidArgument("non-finite sample".into()));
        }
        Ok(FreqFunction { grid, samples })
    }

    pub fn zeros(grid: FrequencyGrid) -> Self {
        FreqFunction { grid, samples: vec![ZERO; grid.count()] }
    }

    /// Independent standard complex Gaussian samples.
    pub fn random(grid: FrequencyGrid, rng: &mut impl Rng) -> Self {
        let samples = (0..grid.count()).map(|_| standard_complex(rng)).collect();
        FreqFunction { grid, samples }
    }

    pub fn scaled(&self, alpha: Complex64) -> Self {
        FreqFunction { grid: self.grid, samples: self.samples.iter().map(|s| s * alpha).collect() }
    }

    /// Discrete `L²(K)` inner product `Δk Σ_j a_j conj(b_j)`.
    pub fn inner(&self, other: &FreqFunction) -> Complex64 {
        self.samples.iter().zip(&other.samples).map(|(a, b)| a * b.conj()).sum::<Complex64>() * self.grid.spacing()
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).re.max(0.0).sqrt()
    }
}

/// Element of `L²(D)` sampled on the quadrature nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportFunction {
    pub samples: Vec<Complex64>,
}

impl SupportFunction {
    pub fn new(rule: &QuadratureRule, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != rule.len() {
            return Err(Error::InvalidArgument(format!(
                "support function has {} samples, rule has {} nodes",
                samples.len(),
                rule.len()
            )));
        }
        Ok(SupportFunction { samples })
    }

    pub fn random(rule: &QuadratureRule, rng: &mut impl Rng) -> Self {
        SupportFunction { samples: (0..rule.len()).map(|_| standard_complex(rng)).collect() }
    }

    /// Discrete `L²(D)` inner product `Σ_q w_q a_q conj(b_q)`.
    pub fn inner(&self, other: &SupportFunction, rule: &QuadratureRule) -> Complex64 {
        self.samples.iter().zip(&other.samples).zip(rule.weights()).map(|((a, b), w)| a * b.conj() * w).sum()
    }

    pub fn norm_sqr(&self, rule: &QuadratureRule) -> f64 {
        self.samples.iter().zip(rule.weights()).map(|(a, w)| a.norm_sqr() * w).sum()
    }
}

pub(crate) fn standard_complex(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) / std::f64::consts::SQRT_2
}

fn check_data(data: &MultiFreqDataset, kind: MeasurementKind, sensor: usize, grid: &FrequencyGrid) -> Result<()> {
    if data.kind != kind {
        return Err(Error::KindMismatch { expected: kind.as_str(), found: data.kind.as_str() });
    }
    data.check_sensor(sensor)?;
    if data.grid != *grid {
        return Err(Error::GridMismatch(format!("dataset grid {:?} vs function grid {:?}", data.grid, grid)));
    }
    Ok(())
}

/// `(A g)(k_j) = Δk Σ_l u(k_j - k_l) g(k_l)` for a dataset row.
fn apply_difference_kernel(data: &MultiFreqDataset, sensor: usize, g: &FreqFunction) -> FreqFunction {
    let j_count = g.grid.count();
    let dk = g.grid.spacing();
    let samples = (1..=j_count)
        .map(|j| {
            g.samples
                .iter()
                .enumerate()
                .map(|(l0, gl)| data.value(sensor, j as i64 - (l0 as i64 + 1)) * gl)
                .sum::<Complex64>()
                * dk
        })
        .collect();
    FreqFunction { grid: g.grid, samples }
}

/// `Δk² Σ_j Σ_l u(k_j - k_l) g(k_l) conj(g(k_j))`, summed with j outer, l inner.
fn difference_kernel_form(data: &MultiFreqDataset, sensor: usize, g: &FreqFunction) -> Complex64 {
    let dk = g.grid.spacing();
    let mut acc = ZERO;
    for (j0, gj) in g.samples.iter().enumerate() {
        let gj = gj.conj();
        for (l0, gl) in g.samples.iter().enumerate() {
            acc += data.value(sensor, j0 as i64 - l0 as i64) * gl * gj;
        }
    }
    acc * (dk * dk)
}

/// Multi-frequency near field operator of one sensor applied to `g`.
pub fn apply_near_operator(data: &MultiFreqDataset, sensor: usize, g: &FreqFunction) -> Result<FreqFunction> {
    check_data(data, MeasurementKind::Near, sensor, &g.grid)?;
    Ok(apply_difference_kernel(data, sensor, g))
}

/// `(N_x g, g)` in `L²(K)`.
pub fn near_quadratic_form(data: &MultiFreqDataset, sensor: usize, g: &FreqFunction) -> Result<Complex64> {
    check_data(data, MeasurementKind::Near, sensor, &g.grid)?;
    Ok(difference_kernel_form(data, sensor, g))
}

/// Multi-frequency far field operator of one direction applied to `phi`.
pub fn apply_far_operator(data: &MultiFreqDataset, sensor: usize, phi: &FreqFunction) -> Result<FreqFunction> {
    check_data(data, MeasurementKind::Far, sensor, &phi.grid)?;
    Ok(apply_difference_kernel(data, sensor, phi))
}

/// `(F_x̂ φ, φ)` in `L²(K)`.
pub fn far_quadratic_form(data: &MultiFreqDataset, sensor: usize, phi: &FreqFunction) -> Result<Complex64> {
    check_data(data, MeasurementKind::Far, sensor, &phi.grid)?;
    Ok(difference_kernel_form(data, sensor, phi))
}

fn check_exterior(x: &Point, rule: &QuadratureRule) -> Result<()> {
    if rule.nodes().iter().any(|y| (x - y).norm() == 0.0) {
        return Err(Error::SingularKernel);
    }
    Ok(())
}

/// `(P*_x φ)(y_q) = Δk Σ_l e^{-i k_l |x - y_q|} φ(k_l)`.
pub fn apply_p_star(x: &Point, rule: &QuadratureRule, phi: &FreqFunction) -> Result<SupportFunction> {
    check_exterior(x, rule)?;
    let dk = phi.grid.spacing();
    let samples = rule
        .nodes()
        .iter()
        .map(|y| {
            let d = (x - y).norm();
            phi.samples
                .iter()
                .enumerate()
                .map(|(l0, p)| Complex64::cis(-phi.grid.node(l0 + 1) * d) * p)
                .sum::<Complex64>()
                * dk
        })
        .collect();
    Ok(SupportFunction { samples })
}

/// `(P_x ψ)(k_j) = Σ_q w_q e^{i k_j |x - y_q|} ψ(y_q)`.
pub fn apply_p(x: &Point, rule: &QuadratureRule, grid: FrequencyGrid, psi: &SupportFunction) -> Result<FreqFunction> {
    check_exterior(x, rule)?;
    if psi.samples.len() != rule.len() {
        return Err(Error::InvalidArgument("support function does not match rule".into()));
    }
    let dist: Vec<f64> = rule.nodes().iter().map(|y| (x - y).norm()).collect();
    let samples = (1..=grid.count())
        .map(|j| {
            let k = grid.node(j);
            dist.iter().zip(rule.weights()).zip(&psi.samples).map(|((d, w), s)| Complex64::cis(k * d) * s * w).sum()
        })
        .collect();
    Ok(FreqFunction { grid, samples })
}

/// `(T_x h)(y_q) = f(y_q) / (4π |x - y_q|) h(y_q)`.
pub fn apply_t(
    x: &Point,
    support: &SourceSupport,
    rule: &QuadratureRule,
    h: &SupportFunction,
) -> Result<SupportFunction> {
    check_exterior(x, rule)?;
    let amps = rule.amplitudes(support)?;
    let samples = rule
        .nodes()
        .iter()
        .zip(&amps)
        .zip(&h.samples)
        .map(|((y, f), v)| v * (f / (4.0 * PI * (x - y).norm())))
        .collect();
    Ok(SupportFunction { samples })
}

/// `(Q*_x̂ φ)(y_q) = Δk Σ_l e^{i k_l x̂·y_q} φ(k_l)`.
pub fn apply_q_star(xhat: &Point, rule: &QuadratureRule, phi: &FreqFunction) -> SupportFunction {
    let dk = phi.grid.spacing();
    let samples = rule
        .nodes()
        .iter()
        .map(|y| {
            let s = xhat.dot(y);
            phi.samples
                .iter()
                .enumerate()
                .map(|(l0, p)| Complex64::cis(phi.grid.node(l0 + 1) * s) * p)
                .sum::<Complex64>()
                * dk
        })
        .collect();
    SupportFunction { samples }
}

/// `(Q_x̂ ψ)(k_j) = Σ_q w_q e^{-i k_j x̂·y_q} ψ(y_q)`.
pub fn apply_q(xhat: &Point, rule: &QuadratureRule, grid: FrequencyGrid, psi: &SupportFunction) -> FreqFunction {
    let proj: Vec<f64> = rule.nodes().iter().map(|y| xhat.dot(y)).collect();
    let samples = (1..=grid.count())
        .map(|j| {
            let k = grid.node(j);
            proj.iter().zip(rule.weights()).zip(&psi.samples).map(|((s, w), v)| Complex64::cis(-k * s) * v * w).sum()
        })
        .collect();
    FreqFunction { grid, samples }
}

/// Far middle operator: multiplication by the source `f`.
pub fn apply_far_t(support: &SourceSupport, rule: &QuadratureRule, h: &SupportFunction) -> Result<SupportFunction> {
    let amps = rule.amplitudes(support)?;
    Ok(SupportFunction { samples: h.samples.iter().zip(&amps).map(|(v, f)| v * f).collect() })
}

fn generic_residual(
    data: &MultiFreqDataset,
    support: &SourceSupport,
    rule: &QuadratureRule,
    sensor: usize,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if data.noise_level != 0.0 {
        return Err(Error::Precondition("factorization is only claimed for noiseless data".into()));
    }
    data.check_sensor(sensor)?;
    let x = data.sensors.points()[sensor];
    check_exterior(&x, rule)?;
    let amps = rule.amplitudes(support)?;
    let j_count = data.grid.count();
    let dk = data.grid.spacing();
    // e^{i k_l τ_q} with τ = |x - y| (near) or -x̂·y (far), and the middle multiplier
    let (tau, middle): (Vec<f64>, Vec<f64>) = rule
        .nodes()
        .iter()
        .zip(&amps)
        .map(|(y, f)| match data.kind {
            MeasurementKind::Near => {
                let d = (x - y).norm();
                (d, f / (4.0 * PI * d))
            }
            MeasurementKind::Far => (-x.dot(y), *f),
        })
        .unzip();
    let phases: Vec<Complex64> =
        tau.iter().flat_map(|t| (1..=j_count).map(move |l| Complex64::cis(data.grid.node(l) * t))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..trials.max(1) {
        let g = FreqFunction::random(data.grid, &mut rng);
        let lhs = apply_difference_kernel(data, sensor, &g);
        let mut rhs = vec![ZERO; j_count];
        for (q, row) in phases.chunks_exact(j_count).enumerate() {
            let adj: Complex64 = row.iter().zip(&g.samples).map(|(e, v)| e.conj() * v).sum::<Complex64>() * dk;
            let h = adj * (middle[q] * rule.weights()[q]);
            for (r, e) in rhs.iter_mut().zip(row) {
                *r += e * h;
            }
        }
        let denom = lhs.norm();
        if !(denom > 0.0) {
            return Err(Error::Degenerate("operator image has zero norm".into()));
        }
        let diff =
            FreqFunction { grid: data.grid, samples: lhs.samples.iter().zip(&rhs).map(|(a, b)| a - b).collect() };
        worst = worst.max(diff.norm() / denom);
    }
    Ok(worst)
}

/// Max relative residual `‖N g - P T P* g‖ / ‖N g‖` (or the far analogue
/// `F = Q T Q*`) over `trials` random `g`, on a dataset generated with the
/// scenario's own quadrature rule.
pub fn factorization_residual(scenario: &Scenario, sensor: usize, trials: usize) -> Result<f64> {
    if scenario.noise_level != 0.0 {
        return Err(Error::Precondition(format!(
            "factorization check needs noiseless data, scenario has noise {}",
            scenario.noise_level
        )));
    }
    let rule = scenario.quadrature()?;
    let data = forward::generate_with_rule(
        &scenario.support,
        &rule,
        &scenario.sensors,
        scenario.frequencies,
        scenario.zero_mode,
    )?;
    factorization_residual_for(&data, &scenario.support, &rule, sensor, trials, scenario.seed)
}

/// [`factorization_residual`] for every sensor, sharing one dataset.
pub fn factorization_residuals(scenario: &Scenario, trials: usize) -> Result<Vec<f64>> {
    if scenario.noise_level != 0.0 {
        return Err(Error::Precondition(format!(
            "factorization check needs noiseless data, scenario has noise {}",
            scenario.noise_level
        )));
    }
    let rule = scenario.quadrature()?;
    let data = forward::generate_with_rule(
        &scenario.support,
        &rule,
        &scenario.sensors,
        scenario.frequencies,
        scenario.zero_mode,
    )?;
    (0..data.sensor_count())
        .map(|l| factorization_residual_for(&data, &scenario.support, &rule, l, trials, scenario.seed))
        .collect()
}

/// As [`factorization_residual`], for an existing noiseless dataset and the rule it was built with.
pub fn factorization_residual_for(
    data: &MultiFreqDataset,
    support: &SourceSupport,
    rule: &QuadratureRule,
    sensor: usize,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    generic_residual(data, support, rule, sensor, trials, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{generate_with_rule, MeasurementSet, ZeroMode};
    use crate::geometry::shapes;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Toy J = 2 near dataset with hand-picked samples for m = -2..=2.
    fn toy() -> MultiFreqDataset {
        let grid = FrequencyGrid::new(1.0, 2).unwrap();
        let sensors = MeasurementSet::near(vec![Point::new(3.0, 0.0, 0.0)]).unwrap();
        let vals = vec![c(5.0, 1.0), c(1.0, -2.0), c(4.0, 0.0), c(1.0, 2.0), c(5.0, -1.0)];
        MultiFreqDataset::from_values(sensors, grid, vals, ZeroMode::Extend, 0.0, 0).unwrap()
    }

    #[test]
    fn toy_operator_matches_hand_computation() {
        // Δk = 0.5; matrix [[u0, u-1], [u1, u0]] = [[4, 1-2i], [1+2i, 4]].
        let d = toy();
        let g = FreqFunction::new(d.grid, vec![c(1.0, 0.0), c(0.0, 1.0)]).unwrap();
        let ng = apply_near_operator(&d, 0, &g).unwrap();
        // row 1: 4*1 + (1-2i)*i = 4 + i + 2 = 6 + i ; row 2: (1+2i) + 4i = 1 + 6i
        assert_eq!(ng.samples, vec![c(3.0, 0.5), c(0.5, 3.0)]);
        // (Ng, g) = Δk (ng1 * 1 + ng2 * (-i)) = 0.5 * (3 + 0.5i + 3 - 0.5i) = 3
        let q = near_quadratic_form(&d, 0, &g).unwrap();
        assert_abs_diff_eq!(q.re, 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_input_gives_zero() {
        let d = toy();
        let z = FreqFunction::zeros(d.grid);
        assert!(apply_near_operator(&d, 0, &z).unwrap().samples.iter().all(|v| *v == ZERO));
        assert_eq!(near_quadratic_form(&d, 0, &z).unwrap(), ZERO);
    }

    #[test]
    fn grid_and_kind_mismatch_are_errors() {
        let d = toy();
        let other = FreqFunction::zeros(FrequencyGrid::new(2.0, 2).unwrap());
        assert!(matches!(apply_near_operator(&d, 0, &other), Err(Error::GridMismatch(_))));
        let g = FreqFunction::zeros(d.grid);
        assert!(matches!(far_quadratic_form(&d, 0, &g), Err(Error::KindMismatch { .. })));
        assert!(matches!(near_quadratic_form(&d, 3, &g), Err(Error::SensorIndex { .. })));
    }

    #[test]
    fn quadratic_form_is_operator_inner_product() {
        let d = toy();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let g = FreqFunction::random(d.grid, &mut rng);
            let a = near_quadratic_form(&d, 0, &g).unwrap();
            let b = apply_near_operator(&d, 0, &g).unwrap().inner(&g);
            assert!((a - b).norm() <= 1e-14 * (1.0 + a.norm()));
        }
    }

    struct Fixture {
        support: SourceSupport,
        rule: QuadratureRule,
        grid: FrequencyGrid,
        x: Point,
    }

    fn fixture() -> Fixture {
        let support = shapes::unit_ball();
        Fixture {
            rule: QuadratureRule::voxel(&support, 0.25).unwrap(),
            support,
            grid: FrequencyGrid::new(11.0, 11).unwrap(),
            x: Point::new(3.0, 0.0, 0.0),
        }
    }

    #[test]
    fn p_and_p_star_are_adjoint() {
        let fx = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let psi = SupportFunction::random(&fx.rule, &mut rng);
            let phi = FreqFunction::random(fx.grid, &mut rng);
            let lhs = apply_p(&fx.x, &fx.rule, fx.grid, &psi).unwrap().inner(&phi);
            let rhs = psi.inner(&apply_p_star(&fx.x, &fx.rule, &phi).unwrap(), &fx.rule);
            assert!((lhs - rhs).norm() <= 1e-12 * lhs.norm().max(1.0));
        }
    }

    #[test]
    fn q_and_q_star_are_adjoint() {
        let fx = fixture();
        let xhat = Point::new(0.6, 0.0, -0.8);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let psi = SupportFunction::random(&fx.rule, &mut rng);
            let phi = FreqFunction::random(fx.grid, &mut rng);
            let lhs = apply_q(&xhat, &fx.rule, fx.grid, &psi).inner(&phi);
            let rhs = psi.inner(&apply_q_star(&xhat, &fx.rule, &phi), &fx.rule);
            assert!((lhs - rhs).norm() <= 1e-12 * lhs.norm().max(1.0));
        }
    }

    #[test]
    fn single_node_p() {
        let y0 = Point::new(0.1, 0.2, -0.3);
        let rule = QuadratureRule::from_parts(vec![y0], vec![0.125], 0.5).unwrap();
        let grid = FrequencyGrid::new(4.0, 4).unwrap();
        let x = Point::new(3.0, 0.0, 0.0);
        let psi = SupportFunction::new(&rule, vec![c(1.0, 0.0)]).unwrap();
        let out = apply_p(&x, &rule, grid, &psi).unwrap();
        let d = (x - y0).norm();
        for (j, v) in out.samples.iter().enumerate() {
            assert_eq!(*v, Complex64::cis(grid.node(j + 1) * d) * 0.125);
        }
        let zero = SupportFunction::new(&rule, vec![ZERO]).unwrap();
        assert!(apply_p(&x, &rule, grid, &zero).unwrap().samples.iter().all(|v| *v == ZERO));
    }

    #[test]
    fn p_star_conjugation_identity() {
        // conj(P* φ) = Δk Σ e^{+ik d} conj(φ): applying P* to conj(φ) equals the
        // conjugate of the reversed-phase sum.
        let fx = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let phi = FreqFunction::random(fx.grid, &mut rng);
        let conj_phi = FreqFunction::new(fx.grid, phi.samples.iter().map(|v| v.conj()).collect()).unwrap();
        let a = apply_p_star(&fx.x, &fx.rule, &conj_phi).unwrap();
        for (q, y) in fx.rule.nodes().iter().enumerate() {
            let d = (fx.x - y).norm();
            let reversed: Complex64 = phi
                .samples
                .iter()
                .enumerate()
                .map(|(l, p)| Complex64::cis(fx.grid.node(l + 1) * d) * p)
                .sum::<Complex64>()
                * fx.grid.spacing();
            assert!((a.samples[q] - reversed.conj()).norm() < 1e-13);
        }
    }

    #[test]
    fn t_is_self_adjoint_and_coercive() {
        let fx = fixture();
        let (r1, r2) = fx.support.annulus_radii(&fx.x).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let h1 = SupportFunction::random(&fx.rule, &mut rng);
            let h2 = SupportFunction::random(&fx.rule, &mut rng);
            let t1 = apply_t(&fx.x, &fx.support, &fx.rule, &h1).unwrap();
            let t2 = apply_t(&fx.x, &fx.support, &fx.rule, &h2).unwrap();
            let a = t1.inner(&h2, &fx.rule);
            let b = h1.inner(&t2, &fx.rule);
            assert!((a - b).norm() < 1e-13);
            let form = t1.inner(&h1, &fx.rule);
            assert!(form.im.abs() < 1e-14 * form.re);
            let n2 = h1.norm_sqr(&fx.rule);
            assert!(form.re >= n2 / (4.0 * PI * r2));
            assert!(form.re <= n2 / (4.0 * PI * r1));
        }
    }

    #[test]
    fn t_single_node_multiplier() {
        let rule = QuadratureRule::from_parts(vec![Point::new(1.0, 0.0, 0.0)], vec![1.0], 1.0).unwrap();
        let support = shapes::ball(Point::new(1.0, 0.0, 0.0), 0.1, 1.0);
        let h = SupportFunction::new(&rule, vec![c(1.0, 0.0)]).unwrap();
        let out = apply_t(&Point::new(3.0, 0.0, 0.0), &support, &rule, &h).unwrap();
        assert_abs_diff_eq!(out.samples[0].re, 1.0 / (8.0 * PI), epsilon = 1e-17);
    }

    /// One node, two frequencies: N = P T P* written out entry by entry.
    #[test]
    fn factorization_symbolic_two_by_two() {
        let y0 = Point::new(0.2, 0.1, 0.0);
        let support = shapes::ball(Point::zeros(), 0.5, 1.5);
        let rule = QuadratureRule::from_parts(vec![y0], vec![0.01], 0.1).unwrap();
        let grid = FrequencyGrid::new(2.0, 2).unwrap();
        let x = Point::new(3.0, 0.0, 0.0);
        let sensors = MeasurementSet::near(vec![x]).unwrap();
        let data = generate_with_rule(&support, &rule, &sensors, grid, ZeroMode::Extend).unwrap();
        let d = (x - y0).norm();
        let amp = 0.01 * 1.5 / (4.0 * PI * d);
        for m in -2..=2i64 {
            let expect = Complex64::cis(m as f64 * d) * amp;
            assert!((data.value(0, m) - expect).norm() < 1e-17);
        }
        // N_{jl} = Δk u(j-l) = Δk w f/(4πd) e^{i(j-l)d} = (P T P*)_{jl}
        let r = factorization_residual_for(&data, &support, &rule, 0, 5, 1).unwrap();
        assert!(r < 1e-15, "{r}");
    }

    #[test]
    fn factorization_holds_on_matched_quadrature() {
        let fx = fixture();
        let sensors = MeasurementSet::near(vec![fx.x, Point::new(0.0, -2.0, 2.0)]).unwrap();
        let data = generate_with_rule(&fx.support, &fx.rule, &sensors, fx.grid, ZeroMode::Extend).unwrap();
        for s in 0..2 {
            let r = factorization_residual_for(&data, &fx.support, &fx.rule, s, 20, 9).unwrap();
            assert!(r <= 1e-10, "{r}");
        }
        let noisy = forward::add_noise(&data, 0.05, 1).unwrap();
        assert!(matches!(
            factorization_residual_for(&noisy, &fx.support, &fx.rule, 0, 5, 1),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn far_factorization_holds() {
        let fx = fixture();
        let sensors = MeasurementSet::far(vec![Point::new(0.0, 0.6, 0.8), Point::x()]).unwrap();
        let data = generate_with_rule(&fx.support, &fx.rule, &sensors, fx.grid, ZeroMode::Extend).unwrap();
        for s in 0..sensors.len() {
            let r = factorization_residual_for(&data, &fx.support, &fx.rule, s, 20, 4).unwrap();
            assert!(r <= 1e-10, "{r}");
        }
    }

    /// The residual path uses a phase table; the public factors must compose to the same operator.
    #[test]
    fn public_factors_compose_to_operator() {
        let fx = fixture();
        let near = MeasurementSet::near(vec![fx.x]).unwrap();
        let far = MeasurementSet::far(vec![Point::new(0.0, 0.6, 0.8)]).unwrap();
        let dn = generate_with_rule(&fx.support, &fx.rule, &near, fx.grid, ZeroMode::Extend).unwrap();
        let df = generate_with_rule(&fx.support, &fx.rule, &far, fx.grid, ZeroMode::Extend).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let g = FreqFunction::random(fx.grid, &mut rng);
            let inner = apply_t(&fx.x, &fx.support, &fx.rule, &apply_p_star(&fx.x, &fx.rule, &g).unwrap()).unwrap();
            let ptp = apply_p(&fx.x, &fx.rule, fx.grid, &inner).unwrap();
            let ng = apply_near_operator(&dn, 0, &g).unwrap();
            let xhat = far.points()[0];
            let inner = apply_far_t(&fx.support, &fx.rule, &apply_q_star(&xhat, &fx.rule, &g)).unwrap();
            let qtq = apply_q(&xhat, &fx.rule, fx.grid, &inner);
            let fg = apply_far_operator(&df, 0, &g).unwrap();
            for j in 0..fx.grid.count() {
                assert!((ptp.samples[j] - ng.samples[j]).norm() <= 1e-12 * ng.norm());
                assert!((qtq.samples[j] - fg.samples[j]).norm() <= 1e-12 * fg.norm());
            }
        }
    }

    #[test]
    fn drop_mode_breaks_the_identity() {
        let fx = fixture();
        let sensors = MeasurementSet::near(vec![fx.x]).unwrap();
        let data = generate_with_rule(&fx.support, &fx.rule, &sensors, fx.grid, ZeroMode::Drop).unwrap();
        let r = factorization_residual_for(&data, &fx.support, &fx.rule, 0, 20, 2).unwrap();
        // The missing diagonal Δk u(0) g is a finite fraction of N g.
        assert!(r > 1e-3 && r < 1.5, "{r}");
    }

    #[test]
    fn far_sandwich_holds() {
        let fx = fixture();
        let sensors = MeasurementSet::far(vec![Point::new(0.0, 0.6, 0.8)]).unwrap();
        let data = generate_with_rule(&fx.support, &fx.rule, &sensors, fx.grid, ZeroMode::Extend).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let phi = FreqFunction::random(fx.grid, &mut rng);
            let form = far_quadratic_form(&data, 0, &phi).unwrap().norm();
            let n2 = apply_q_star(&sensors.points()[0], &fx.rule, &phi).norm_sqr(&fx.rule);
            // c_f = C_f = 1
            assert!((form - n2).abs() <= 1e-10 * n2, "{form} vs {n2}");
        }
        assert_eq!(far_quadratic_form(&data, 0, &FreqFunction::zeros(fx.grid)).unwrap(), ZERO);
    }

    proptest! {
        #[test]
        fn near_operator_is_linear(seed in 0u64..1000, a_re in -3.0f64..3.0, a_im in -3.0f64..3.0) {
            let d = toy();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = FreqFunction::random(d.grid, &mut rng);
            let h = FreqFunction::random(d.grid, &mut rng);
            let alpha = c(a_re, a_im);
            let sum = FreqFunction::new(d.grid, g.samples.iter().zip(&h.samples).map(|(x, y)| x * alpha + y).collect()).unwrap();
            let lhs = apply_near_operator(&d, 0, &sum).unwrap();
            let ng = apply_near_operator(&d, 0, &g).unwrap();
            let nh = apply_near_operator(&d, 0, &h).unwrap();
            for j in 0..2 {
                let rhs = ng.samples[j] * alpha + nh.samples[j];
                prop_assert!((lhs.samples[j] - rhs).norm() < 1e-12 * (1.0 + rhs.norm()));
            }
        }

        #[test]
        fn residual_is_scale_invariant(alpha in 0.01f64..100.0) {
            let fx = fixture();
            let sensors = MeasurementSet::near(vec![fx.x]).unwrap();
            let data = generate_with_rule(&fx.support, &fx.rule, &sensors, fx.grid, ZeroMode::Drop).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let g = FreqFunction::random(fx.grid, &mut rng);
            let res = |g: &FreqFunction| {
                let lhs = apply_near_operator(&data, 0, g).unwrap();
                let inner = apply_t(&fx.x, &fx.support, &fx.rule, &apply_p_star(&fx.x, &fx.rule, g).unwrap()).unwrap();
                let rhs = apply_p(&fx.x, &fx.rule, fx.grid, &inner).unwrap();
                let diff = FreqFunction::new(fx.grid, lhs.samples.iter().zip(&rhs.samples).map(|(a, b)| a - b).collect()).unwrap();
                diff.norm() / lhs.norm()
            };
            let r1 = res(&g);
            let r2 = res(&g.scaled(c(alpha, 0.0)));
            prop_assert!((r1 - r2).abs() <= 1e-10 * r1);
        }
    }
}
