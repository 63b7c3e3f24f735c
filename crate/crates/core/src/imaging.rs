//! Test functions, point spread function and the sampling indicators.
//!
//! For a near sensor `x` and sampling point `z` the test function is
//! `g(k) = e^{ik|x-z|}`; for a far direction `x̂` it is `φ(k) = e^{-ik x̂·z}`,
//! so that `Q*φ` depends on `x̂·(z - y)`. Both have the form `e^{ikτ}` with a
//! real phase distance `τ`, and the quadratic form then collapses to a
//! Toeplitz sum `Σ_m (J - |m|) Δk² u(mΔk) e^{-imΔkτ}`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward::{FrequencyGrid, MeasurementKind, MultiFreqDataset};
use crate::geometry::{Aabb, Point};
use crate::operators::{far_quadratic_form, near_quadratic_form, FreqFunction};

/// Axis-aligned voxel lattice of sampling points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingGrid {
    pub bounds: Aabb,
    pub resolution: [usize; 3],
}

impl SamplingGrid {
    pub fn new(bounds: Aabb, resolution: [usize; 3]) -> Result<Self> {
        if (0..3).any(|i| !(bounds.max[i] > bounds.min[i])) {
            return Err(Error::InvalidArgument("sampling bounds need min < max on every axis".into()));
        }
        if resolution.contains(&0) {
            return Err(Error::InvalidArgument("sampling resolution must be at least 1 per axis".into()));
        }
        Ok(SamplingGrid { bounds, resolution })
    }

    /// Cube `[-half, half]³` with `n` voxels per axis.
    pub fn cube(half: f64, n: usize) -> Result<Self> {
        Self::new(Aabb::new(Point::repeat(-half), Point::repeat(half)), [n; 3])
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn voxel_size(&self, axis: usize) -> f64 {
        (self.bounds.max[axis] - self.bounds.min[axis]) / self.resolution[axis] as f64
    }

    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        self.bounds.min[axis] + (i as f64 + 0.5) * self.voxel_size(axis)
    }

    /// Row-major linear index, x1 slowest.
    pub fn index(&self, i: [usize; 3]) -> usize {
        (i[0] * self.resolution[1] + i[1]) * self.resolution[2] + i[2]
    }

    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let n2 = self.resolution[2];
        let n1 = self.resolution[1];
        [idx / (n1 * n2), (idx / n2) % n1, idx % n2]
    }

    pub fn center(&self, idx: usize) -> Point {
        let i = self.unravel(idx);
        Point::new(self.coordinate(0, i[0]), self.coordinate(1, i[1]), self.coordinate(2, i[2]))
    }

    pub fn centers(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.len()).map(|i| self.center(i))
    }
}

/// Nonnegative indicator values over a sampling grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorField {
    pub grid: SamplingGrid,
    pub values: Vec<f64>,
    pub normalized: bool,
}

impl IndicatorField {
    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }
}

fn phase_samples(tau: f64, grid: &FrequencyGrid) -> FreqFunction {
    let samples = (1..=grid.count()).map(|j| Complex64::cis(grid.node(j) * tau)).collect();
    FreqFunction { grid: *grid, samples }
}

/// `g_xz(k_j) = e^{i k_j |x - z|}`.
pub fn g_test(x: &Point, z: &Point, grid: &FrequencyGrid) -> FreqFunction {
    phase_samples((x - z).norm(), grid)
}

/// `φ_x̂z(k_j) = e^{-i k_j x̂·z}`.
pub fn phi_test(xhat: &Point, z: &Point, grid: &FrequencyGrid) -> Result<FreqFunction> {
    if (xhat.norm() - 1.0).abs() > crate::forward::UNIT_TOLERANCE {
        return Err(Error::NonUnitDirection(xhat[0], xhat[1], xhat[2]));
    }
    Ok(phase_samples(-xhat.dot(z), grid))
}

/// `∫_0^{k_max} e^{ist} ds`, evaluated as `e^{i t k/2} · 2 sin(t k/2) / t`.
pub fn psf_closed_form(t: f64, k_max: f64) -> Complex64 {
    if t == 0.0 {
        return Complex64::new(k_max, 0.0);
    }
    let half = 0.5 * t * k_max;
    Complex64::cis(half) * (2.0 * half.sin() / t)
}

/// Rectangle-rule counterpart `Δk Σ_j e^{i k_j t}` on the frequency grid.
pub fn psf_discrete(t: f64, grid: &FrequencyGrid) -> Complex64 {
    (1..=grid.count()).map(|j| Complex64::cis(grid.node(j) * t)).sum::<Complex64>() * grid.spacing()
}

/// Per-sensor coefficients `Δk² (J - |m|) u(mΔk)`, indexed `m + J - 1` for `|m| < J`.
fn toeplitz_coefficients(data: &MultiFreqDataset, sensor: usize) -> Vec<(f64, Complex64)> {
    let j_count = data.grid.count() as i64;
    let dk = data.grid.spacing();
    (-(j_count - 1)..j_count)
        .map(|m| (m as f64 * dk, data.value(sensor, m) * ((j_count - m.abs()) as f64 * dk * dk)))
        .collect()
}

fn toeplitz_form(coeffs: &[(f64, Complex64)], tau: f64) -> Complex64 {
    coeffs.iter().map(|(mk, a)| a * Complex64::cis(-mk * tau)).sum()
}

fn phase_distance(kind: MeasurementKind, sensor: &Point, z: &Point) -> f64 {
    match kind {
        MeasurementKind::Near => (sensor - z).norm(),
        MeasurementKind::Far => -sensor.dot(z),
    }
}

fn indicator_fast(data: &MultiFreqDataset, grid: &SamplingGrid, kind: MeasurementKind) -> Result<IndicatorField> {
    if data.kind != kind {
        return Err(Error::KindMismatch { expected: kind.as_str(), found: data.kind.as_str() });
    }
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty sampling grid".into()));
    }
    let coeffs: Vec<_> = (0..data.sensor_count()).map(|l| toeplitz_coefficients(data, l)).collect();
    let sensors = data.sensors.points();
    let values = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let z = grid.center(idx);
            sensors.iter().zip(&coeffs).map(|(x, c)| toeplitz_form(c, phase_distance(kind, x, &z)).norm()).sum()
        })
        .collect();
    Ok(IndicatorField { grid: *grid, values, normalized: false })
}

/// `I(z) = Σ_x |(N_x g_xz, g_xz)|` over the sampling grid (unnormalized).
pub fn indicator_near(data: &MultiFreqDataset, grid: &SamplingGrid) -> Result<IndicatorField> {
    indicator_fast(data, grid, MeasurementKind::Near)
}

/// `I(z) = Σ_x̂ |(F_x̂ φ_x̂z, φ_x̂z)|` over the sampling grid (unnormalized).
pub fn indicator_far(data: &MultiFreqDataset, grid: &SamplingGrid) -> Result<IndicatorField> {
    indicator_fast(data, grid, MeasurementKind::Far)
}

/// Indicator evaluated through the explicit test functions and quadratic forms.
pub fn indicator_direct(data: &MultiFreqDataset, grid: &SamplingGrid) -> Result<IndicatorField> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty sampling grid".into()));
    }
    let values = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let z = grid.center(idx);
            let mut acc = 0.0;
            for (l, x) in data.sensors.points().iter().enumerate() {
                let form = match data.kind {
                    MeasurementKind::Near => near_quadratic_form(data, l, &g_test(x, &z, &data.grid))?,
                    MeasurementKind::Far => far_quadratic_form(data, l, &phi_test(x, &z, &data.grid)?)?,
                };
                acc += form.norm();
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    Ok(IndicatorField { grid: *grid, values, normalized: false })
}

/// Indicator of the data's own kind.
pub fn indicator(data: &MultiFreqDataset, grid: &SamplingGrid) -> Result<IndicatorField> {
    indicator_fast(data, grid, data.kind)
}

/// Divides by the maximum so that the peak is exactly 1.
pub fn normalize(field: &IndicatorField) -> Result<IndicatorField> {
    let max = field.max();
    if !(max > 0.0) {
        return Err(Error::Degenerate("indicator field is identically zero".into()));
    }
    Ok(IndicatorField { grid: field.grid, values: field.values.iter().map(|v| v / max).collect(), normalized: true })
}

/// A 2D layer of the field orthogonal to one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSection {
    /// Normal axis, 1-based.
    pub axis: usize,
    pub layer: usize,
    /// Coordinate of the extracted layer's voxel centres along the normal axis.
    pub coordinate: f64,
    pub u_coords: Vec<f64>,
    pub v_coords: Vec<f64>,
    /// Row-major with `u` outer.
    pub values: Vec<f64>,
}

impl CrossSection {
    pub fn dims(&self) -> (usize, usize) {
        (self.u_coords.len(), self.v_coords.len())
    }

    pub fn value(&self, iu: usize, iv: usize) -> f64 {
        self.values[iu * self.v_coords.len() + iv]
    }

    /// The two in-plane axes, 1-based, in increasing order.
    pub fn plane_axes(&self) -> (usize, usize) {
        match self.axis {
            1 => (2, 3),
            2 => (1, 3),
            _ => (1, 2),
        }
    }
}

/// Extracts the voxel layer nearest to `coordinate` along `axis` (1, 2 or 3).
pub fn cross_section(field: &IndicatorField, axis: usize, coordinate: f64) -> Result<CrossSection> {
    if !(1..=3).contains(&axis) {
        return Err(Error::InvalidArgument(format!("axis must be 1, 2 or 3, got {axis}")));
    }
    let a = axis - 1;
    let g = &field.grid;
    if !(coordinate >= g.bounds.min[a] && coordinate <= g.bounds.max[a]) {
        return Err(Error::InvalidArgument(format!(
            "coordinate {coordinate} outside [{}, {}] on axis {axis}",
            g.bounds.min[a], g.bounds.max[a]
        )));
    }
    let layer = (0..g.resolution[a])
        .min_by(|&i, &j| {
            let di = (g.coordinate(a, i) - coordinate).abs();
            let dj = (g.coordinate(a, j) - coordinate).abs();
            di.total_cmp(&dj)
        })
        .expect("resolution >= 1");
    let (u, v) = match a {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let u_coords: Vec<f64> = (0..g.resolution[u]).map(|i| g.coordinate(u, i)).collect();
    let v_coords: Vec<f64> = (0..g.resolution[v]).map(|i| g.coordinate(v, i)).collect();
    let mut values = Vec::with_capacity(u_coords.len() * v_coords.len());
    for iu in 0..u_coords.len() {
        for iv in 0..v_coords.len() {
            let mut idx = [0; 3];
            idx[a] = layer;
            idx[u] = iu;
            idx[v] = iv;
            values.push(field.values[g.index(idx)]);
        }
    }
    Ok(CrossSection { axis, layer, coordinate: g.coordinate(a, layer), u_coords, v_coords, values })
}

/// Superlevel set `{I >= iso}` of a normalized field.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelMask {
    pub grid: SamplingGrid,
    pub iso: f64,
    pub cells: Vec<bool>,
}

impl VoxelMask {
    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.cells.iter().enumerate().filter(|(_, &c)| c).map(|(i, _)| i)
    }

    /// Mean voxel centre of the mask.
    pub fn centroid(&self) -> Option<Point> {
        centroid_of(&self.grid, self.indices())
    }

    /// Bounding box of the mask's voxel centres.
    pub fn bounding_box(&self) -> Option<Aabb> {
        self.indices().map(|i| self.grid.center(i)).fold(None, |acc, p| match acc {
            None => Some(Aabb::new(p, p)),
            Some(b) => Some(Aabb::new(b.min.inf(&p), b.max.sup(&p))),
        })
    }

    /// Run-length encoding over linear index: `(start, length)` of each set run.
    pub fn runs(&self) -> Vec<(usize, usize)> {
        let mut runs = Vec::new();
        let mut i = 0;
        while i < self.cells.len() {
            if self.cells[i] {
                let start = i;
                while i < self.cells.len() && self.cells[i] {
                    i += 1;
                }
                runs.push((start, i - start));
            } else {
                i += 1;
            }
        }
        runs
    }

    /// Face-connected (6-neighbour) components, largest first.
    pub fn components(&self) -> Vec<MaskComponent> {
        let g = &self.grid;
        let mut label = vec![usize::MAX; self.cells.len()];
        let mut out = Vec::new();
        for seed in self.indices() {
            if label[seed] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut members = Vec::new();
            let mut stack = vec![seed];
            label[seed] = id;
            while let Some(cur) = stack.pop() {
                members.push(cur);
                let c = g.unravel(cur);
                for axis in 0..3 {
                    for step in [-1i64, 1] {
                        let n = c[axis] as i64 + step;
                        if n < 0 || n >= g.resolution[axis] as i64 {
                            continue;
                        }
                        let mut nb = c;
                        nb[axis] = n as usize;
                        let ni = g.index(nb);
                        if self.cells[ni] && label[ni] == usize::MAX {
                            label[ni] = id;
                            stack.push(ni);
                        }
                    }
                }
            }
            members.sort_unstable();
            let centroid = centroid_of(g, members.iter().copied()).expect("nonempty component");
            out.push(MaskComponent { voxels: members, centroid });
        }
        out.sort_by(|a, b| b.voxels.len().cmp(&a.voxels.len()).then(a.voxels[0].cmp(&b.voxels[0])));
        out
    }
}

/// One connected piece of a mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskComponent {
    pub voxels: Vec<usize>,
    pub centroid: Point,
}

fn centroid_of(grid: &SamplingGrid, idx: impl Iterator<Item = usize>) -> Option<Point> {
    let (sum, n) = idx.fold((Point::zeros(), 0usize), |(s, n), i| (s + grid.center(i), n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn threshold_mask(field: &IndicatorField, iso: f64) -> Result<VoxelMask> {
    if !field.normalized {
        return Err(Error::Precondition("threshold needs a normalized field".into()));
    }
    if !(iso > 0.0 && iso < 1.0) {
        return Err(Error::InvalidArgument(format!("iso value must lie in (0, 1), got {iso}")));
    }
    Ok(VoxelMask { grid: field.grid, iso, cells: field.values.iter().map(|&v| v >= iso).collect() })
}
