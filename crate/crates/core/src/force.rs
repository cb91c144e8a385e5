//! Contact force model, surface height map, calibration sweeps and parameter fits.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::chain::forward_chain;
use crate::error::{Error, Result};
use crate::kinematics::EndEffectorState;
use crate::tip::{ToolTipState, WidthConvention};

/// Linear force map `F = theta·(z − z_ref) + theta0`, floored at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceModelParams {
    /// N/m; negative when pressing down (z below z_ref) increases force.
    pub theta: f64,
    /// N.
    pub theta0: f64,
}

impl ForceModelParams {
    pub fn new(theta: f64, theta0: f64) -> Self {
        Self { theta, theta0 }
    }

    /// Force at height `z` over a surface at `z_ref`. Never negative.
    pub fn force(&self, z: f64, z_ref: f64) -> f64 {
        self.force_at_offset(z - z_ref)
    }

    pub fn force_at_offset(&self, offset: f64) -> f64 {
        (self.theta * offset + self.theta0).max(0.0)
    }
}

/// Free-function form of [`ForceModelParams::force`].
pub fn force(params: &ForceModelParams, z: f64, z_ref: f64) -> f64 {
    params.force(z, z_ref)
}

/// Contact heights on a regular grid, bilinearly interpolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceMap {
    pub origin: (f64, f64),
    pub spacing: f64,
    pub nx: usize,
    pub ny: usize,
    /// Row-major, `heights[iy * nx + ix]`.
    pub heights: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SurfaceHeader {
    origin: (f64, f64),
    spacing: f64,
    nx: usize,
    ny: usize,
}

impl SurfaceMap {
    pub fn new(origin: (f64, f64), spacing: f64, nx: usize, ny: usize, heights: Vec<f64>) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidParameter("surface grid needs at least 2x2 nodes".into()));
        }
        if !(spacing > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "grid spacing must be positive, got {spacing}"
            )));
        }
        if heights.len() != nx * ny {
            return Err(Error::LengthMismatch {
                expected: nx * ny,
                actual: heights.len(),
            });
        }
        if let Some(index) = heights.iter().position(|h| !h.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            origin,
            spacing,
            nx,
            ny,
            heights,
        })
    }

    pub fn flat(origin: (f64, f64), spacing: f64, nx: usize, ny: usize, height: f64) -> Result<Self> {
        Self::new(origin, spacing, nx, ny, vec![height; nx * ny])
    }

    /// Grid filled from `f(x, y)` evaluated at every node.
    pub fn from_fn(
        origin: (f64, f64),
        spacing: f64,
        nx: usize,
        ny: usize,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let mut heights = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                heights.push(f(origin.0 + ix as f64 * spacing, origin.1 + iy as f64 * spacing));
            }
        }
        Self::new(origin, spacing, nx, ny, heights)
    }

    pub fn node(&self, ix: usize, iy: usize) -> f64 {
        self.heights[iy * self.nx + ix]
    }

    pub fn extent(&self) -> ((f64, f64), (f64, f64)) {
        let (x0, y0) = self.origin;
        (
            (x0, y0),
            (
                x0 + (self.nx - 1) as f64 * self.spacing,
                y0 + (self.ny - 1) as f64 * self.spacing,
            ),
        )
    }

    pub fn center(&self) -> (f64, f64) {
        let (lo, hi) = self.extent();
        ((lo.0 + hi.0) / 2.0, (lo.1 + hi.1) / 2.0)
    }

    pub fn min_height(&self) -> f64 {
        self.heights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_height(&self) -> f64 {
        self.heights.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Bilinear interpolation of the surrounding four nodes.
    pub fn height_at(&self, x: f64, y: f64) -> Result<f64> {
        let fx = (x - self.origin.0) / self.spacing;
        let fy = (y - self.origin.1) / self.spacing;
        let max_x = (self.nx - 1) as f64;
        let max_y = (self.ny - 1) as f64;
        if !(0.0..=max_x).contains(&fx) || !(0.0..=max_y).contains(&fy) {
            return Err(Error::OutOfBounds { x, y });
        }
        let ix = (fx.floor() as usize).min(self.nx - 2);
        let iy = (fy.floor() as usize).min(self.ny - 2);
        let tx = fx - ix as f64;
        let ty = fy - iy as f64;
        let h00 = self.node(ix, iy);
        let h10 = self.node(ix + 1, iy);
        let h01 = self.node(ix, iy + 1);
        let h11 = self.node(ix + 1, iy + 1);
        Ok((1.0 - ty) * ((1.0 - tx) * h00 + tx * h10) + ty * ((1.0 - tx) * h01 + tx * h11))
    }

    /// Writes the grid as CSV (one row per `y` line) plus a JSON header next to it
    /// (same stem, `.json` extension).
    pub fn write(&self, csv_path: &Path) -> Result<()> {
        let header = SurfaceHeader {
            origin: self.origin,
            spacing: self.spacing,
            nx: self.nx,
            ny: self.ny,
        };
        std::fs::write(csv_path.with_extension("json"), serde_json::to_string_pretty(&header)?)?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(csv_path)?;
        for row in self.heights.chunks(self.nx) {
            w.write_record(row.iter().map(|h| h.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(csv_path: &Path) -> Result<Self> {
        let header: SurfaceHeader = serde_json::from_str(&std::fs::read_to_string(csv_path.with_extension("json"))?)?;
        let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(csv_path)?;
        let mut heights = Vec::with_capacity(header.nx * header.ny);
        for record in r.records() {
            for field in record?.iter() {
                let h: f64 = field.trim().parse().map_err(|_| Error::Format {
                    path: csv_path.to_path_buf(),
                    reason: format!("bad height {field:?}"),
                })?;
                heights.push(h);
            }
        }
        Self::new(header.origin, header.spacing, header.nx, header.ny, heights)
    }
}

/// Free-function form of [`SurfaceMap::height_at`].
pub fn height_at(surface: &SurfaceMap, x: f64, y: f64) -> Result<f64> {
    surface.height_at(x, y)
}

/// One calibration measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    /// `z − z_ref`, meters; negative while pressing into the surface.
    #[serde(rename = "penetration_m")]
    pub penetration: f64,
    #[serde(rename = "force_n")]
    pub force: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CalibrationSet {
    pub rows: Vec<CalibrationRow>,
}

impl CalibrationSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn extend(&mut self, other: &CalibrationSet) {
        self.rows.extend_from_slice(&other.rows);
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let rows = r
            .deserialize()
            .collect::<std::result::Result<Vec<CalibrationRow>, _>>()?;
        Ok(Self { rows })
    }
}

/// Simulated calibration: for each depth, a sinusoidal press from zero to that depth and
/// back, sampled `samples_per_depth` times at the surface center.
///
/// `true_force` maps `z − z_ref` to newtons; gaussian noise with `noise_sd` is added.
pub fn sweep_calibration(
    surface: &SurfaceMap,
    true_force: impl Fn(f64) -> f64,
    depths: &[f64],
    samples_per_depth: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<CalibrationSet> {
    if depths.is_empty() {
        return Err(Error::EmptyDepths);
    }
    if !(noise_sd >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "noise sd must be >= 0, got {noise_sd}"
        )));
    }
    if let Some(d) = depths.iter().find(|d| !(**d >= 0.0) || !d.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "sweep depth {d} must be finite and >= 0"
        )));
    }
    let (cx, cy) = surface.center();
    let z_ref = surface.height_at(cx, cy)?;
    let noise = Normal::new(0.0, noise_sd).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(depths.len() * samples_per_depth);
    for &depth in depths {
        for k in 0..samples_per_depth {
            let phase = 2.0 * std::f64::consts::PI * k as f64 / samples_per_depth as f64;
            let press = depth * (1.0 - phase.cos()) / 2.0;
            let z = z_ref - press;
            let penetration = z - z_ref;
            let measured = true_force(penetration) + if noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            rows.push(CalibrationRow {
                penetration,
                force: measured,
            });
        }
    }
    Ok(CalibrationSet { rows })
}

/// Ordinary least squares on regressor rows `[z − z_ref, 1]`.
pub fn fit_force(data: &CalibrationSet) -> Result<ForceModelParams> {
    let n = data.rows.len();
    if n < 2 {
        return Err(Error::RankDeficient);
    }
    // Centered form of (ZᵀZ)⁻¹ZᵀF; algebraically identical, better conditioned for
    // millimeter-scale regressors next to a column of ones.
    let nf = n as f64;
    let mean_p = data.rows.iter().map(|r| r.penetration).sum::<f64>() / nf;
    let mean_f = data.rows.iter().map(|r| r.force).sum::<f64>() / nf;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for r in &data.rows {
        let dp = r.penetration - mean_p;
        sxx += dp * dp;
        sxy += dp * (r.force - mean_f);
    }
    let spread = data
        .rows
        .iter()
        .map(|r| (r.penetration - mean_p).abs())
        .fold(0.0, f64::max);
    if spread == 0.0 || sxx <= f64::EPSILON * f64::EPSILON * mean_p * mean_p * nf {
        return Err(Error::RankDeficient);
    }
    let theta = sxy / sxx;
    Ok(ForceModelParams {
        theta,
        theta0: mean_f - theta * mean_p,
    })
}

/// Root-mean-square residual of `params` over `data`.
pub fn force_residual_rms(params: &ForceModelParams, data: &CalibrationSet) -> f64 {
    if data.rows.is_empty() {
        return 0.0;
    }
    let ss: f64 = data
        .rows
        .iter()
        .map(|r| {
            let e = r.force - (params.theta * r.penetration + params.theta0);
            e * e
        })
        .sum();
    (ss / data.rows.len() as f64).sqrt()
}

/// Search settings for [`fit_degradation_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradationFitOptions {
    /// Upper end of the search interval for `K_d`.
    pub k_max: f64,
    pub convention: WidthConvention,
    pub iterations: usize,
}

impl Default for DegradationFitOptions {
    fn default() -> Self {
        Self {
            k_max: 1.0,
            convention: WidthConvention::MajorAlongNormal,
            iterations: 200,
        }
    }
}

/// Fits the wear gain so the modelled widths along the executed `trajectory` match
/// `widths_measured` (`None` marks samples without a measurement).
pub fn fit_degradation(
    widths_measured: &[Option<f64>],
    trajectory: &[EndEffectorState],
    tip_template: &ToolTipState,
    params: &ForceModelParams,
    surface: &SurfaceMap,
) -> Result<f64> {
    fit_degradation_with(
        widths_measured,
        trajectory,
        tip_template,
        params,
        surface,
        &DegradationFitOptions::default(),
    )
    .map(|fit| fit.k_d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradationFit {
    pub k_d: f64,
    /// Sum of squared width errors at the optimum, m².
    pub sse: f64,
    /// Plane offset predicted at the last sample.
    pub final_offset: f64,
}

pub fn fit_degradation_with(
    widths_measured: &[Option<f64>],
    trajectory: &[EndEffectorState],
    tip_template: &ToolTipState,
    params: &ForceModelParams,
    surface: &SurfaceMap,
    options: &DegradationFitOptions,
) -> Result<DegradationFit> {
    let segment = DegradationSegment {
        widths_measured,
        trajectory,
        tip_template: *tip_template,
    };
    fit_degradation_segments(&[segment], params, surface, options)
}

/// One executed stroke for [`fit_degradation_segments`]: its own starting tip, shared gain.
#[derive(Debug, Clone, Copy)]
pub struct DegradationSegment<'a> {
    pub widths_measured: &'a [Option<f64>],
    pub trajectory: &'a [EndEffectorState],
    pub tip_template: ToolTipState,
}

/// Fits one wear gain to several strokes at once. `final_offset` refers to the last segment.
pub fn fit_degradation_segments(
    segments: &[DegradationSegment<'_>],
    params: &ForceModelParams,
    surface: &SurfaceMap,
    options: &DegradationFitOptions,
) -> Result<DegradationFit> {
    if !(options.k_max > 0.0) {
        return Err(Error::InvalidParameter("k_max must be positive".into()));
    }
    let mut all_heights = Vec::with_capacity(segments.len());
    for seg in segments {
        if seg.widths_measured.len() != seg.trajectory.len() {
            return Err(Error::LengthMismatch {
                expected: seg.trajectory.len(),
                actual: seg.widths_measured.len(),
            });
        }
        let heights = seg
            .trajectory
            .iter()
            .map(|s| surface.height_at(s.x, s.y))
            .collect::<Result<Vec<_>>>()?;
        all_heights.push(heights);
    }
    let touches = segments
        .iter()
        .zip(&all_heights)
        .any(|(seg, h)| seg.trajectory.iter().zip(h).any(|(s, &h)| s.z <= h));
    if !touches {
        return Err(Error::NoContact);
    }
    let chain = |seg: &DegradationSegment<'_>, heights: &[f64], k: f64| {
        forward_chain(
            seg.trajectory,
            heights,
            &seg.tip_template.with_wear_gain(k),
            params,
            options.convention,
        )
    };
    let sse = |k: f64| -> f64 {
        segments
            .iter()
            .zip(&all_heights)
            .map(|(seg, h)| {
                chain(seg, h, k)
                    .widths
                    .iter()
                    .zip(seg.widths_measured)
                    .filter_map(|(w, m)| m.map(|m| (w - m) * (w - m)))
                    .sum::<f64>()
            })
            .sum()
    };

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0, options.k_max);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (sse(x1), sse(x2));
    for _ in 0..options.iterations {
        if hi - lo <= 1e-14 * options.k_max {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = sse(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = sse(x2);
        }
    }
    let mut best = (lo + hi) / 2.0;
    let mut best_sse = sse(best);
    for edge in [0.0, options.k_max] {
        let e = sse(edge);
        if e < best_sse {
            best = edge;
            best_sse = e;
        }
    }
    let last = segments.len() - 1;
    let final_offset = chain(&segments[last], &all_heights[last], best)
        .offsets
        .last()
        .copied()
        .unwrap_or(segments[last].tip_template.d);
    Ok(DegradationFit {
        k_d: best,
        sse: best_sse,
        final_offset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::forward_chain;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn flat() -> SurfaceMap {
        SurfaceMap::flat((0.0, 0.0), 1e-3, 11, 11, 0.0).unwrap()
    }

    #[test]
    fn force_examples() {
        let p = ForceModelParams::new(-800.0, 0.3);
        assert_relative_eq!(p.force(-0.001, 0.0), 1.1, max_relative = 1e-12);
        assert_eq!(p.force(0.2, 0.2), 0.3);
        assert_eq!(ForceModelParams::new(-800.0, -0.3).force(0.0, 0.0), 0.0);
        assert_eq!(p.force(0.01, 0.0), 0.0);
    }

    #[test]
    fn height_examples() {
        let s = SurfaceMap::from_fn((0.0, 0.0), 1e-3, 3, 3, |x, y| x * 0.1 + y * 0.2).unwrap();
        assert_eq!(s.height_at(1e-3, 2e-3).unwrap(), s.node(1, 2));
        assert_eq!(flat().height_at(3.3e-3, 7.1e-3).unwrap(), 0.0);
        let cell = SurfaceMap::new((0.0, 0.0), 1e-3, 2, 2, vec![0.0, 0.0, 1e-3, 1e-3]).unwrap();
        assert_relative_eq!(cell.height_at(0.5e-3, 0.5e-3).unwrap(), 0.5e-3, max_relative = 1e-12);
        assert!(matches!(cell.height_at(2e-3, 0.0), Err(Error::OutOfBounds { .. })));
    }

    #[test]
    fn surface_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("surface.csv");
        let s = SurfaceMap::from_fn((0.001, -0.002), 5e-4, 4, 3, |x, y| 1e-4 * (x * 300.0).sin() + y).unwrap();
        s.write(&path).unwrap();
        assert_eq!(SurfaceMap::read(&path).unwrap(), s);
    }

    #[test]
    fn sweep_contract() {
        let truth = ForceModelParams::new(-800.0, 0.3);
        let set = sweep_calibration(
            &flat(),
            |p| truth.force_at_offset(p),
            &[0.5e-3, 1.0e-3, 1.5e-3],
            100,
            0.0,
            1,
        )
        .unwrap();
        assert_eq!(set.len(), 300);
        assert!(set.rows.iter().all(|r| (-1.5e-3..=0.0).contains(&r.penetration)));
        assert!(set
            .rows
            .iter()
            .all(|r| (r.force - truth.force_at_offset(r.penetration)).abs() < 1e-15));

        let a = sweep_calibration(&flat(), |p| truth.force_at_offset(p), &[1e-3], 50, 0.05, 9).unwrap();
        let b = sweep_calibration(&flat(), |p| truth.force_at_offset(p), &[1e-3], 50, 0.05, 9).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            sweep_calibration(&flat(), |p| p, &[], 10, 0.0, 0),
            Err(Error::EmptyDepths)
        ));
    }

    #[test]
    fn fit_recovers_line() {
        let rows = [-1e-3, -2e-3, -3e-3]
            .iter()
            .map(|&p| CalibrationRow {
                penetration: p,
                force: -800.0 * p + 0.3,
            })
            .collect();
        let fit = fit_force(&CalibrationSet { rows }).unwrap();
        assert_relative_eq!(fit.theta, -800.0, max_relative = 1e-9);
        assert_relative_eq!(fit.theta0, 0.3, max_relative = 1e-9);
    }

    #[test]
    fn fit_rank_deficient() {
        let rows = vec![
            CalibrationRow {
                penetration: -1e-3,
                force: 1.0
            };
            5
        ];
        assert!(matches!(fit_force(&CalibrationSet { rows }), Err(Error::RankDeficient)));
    }

    #[test]
    fn noisy_fit_within_standard_errors() {
        let truth = ForceModelParams::new(-800.0, 0.3);
        let sd = 0.05;
        let mut within = 0;
        for seed in 0..20 {
            let set = sweep_calibration(
                &flat(),
                |p| truth.force_at_offset(p),
                &[0.5e-3, 1.0e-3, 1.5e-3, 2e-3],
                2500,
                sd,
                seed,
            )
            .unwrap();
            let fit = fit_force(&set).unwrap();
            let n = set.len() as f64;
            let mean = set.rows.iter().map(|r| r.penetration).sum::<f64>() / n;
            let sxx: f64 = set.rows.iter().map(|r| (r.penetration - mean).powi(2)).sum();
            let se_theta = sd / sxx.sqrt();
            let se_theta0 = sd * (1.0 / n + mean * mean / sxx).sqrt();
            if (fit.theta - truth.theta).abs() <= 3.0 * se_theta && (fit.theta0 - truth.theta0).abs() <= 3.0 * se_theta0
            {
                within += 1;
            }
        }
        assert!(within >= 19, "only {within}/20 fits within 3 standard errors");
    }

    fn straight_contact_path(n: usize) -> Vec<EndEffectorState> {
        (0..n)
            .map(|t| EndEffectorState::new(1e-3 + t as f64 * 2e-4, 5e-3, -(0.5e-3 + 1e-5 * t as f64), 0.3))
            .collect()
    }

    #[test]
    fn degradation_fit_recovers_gain() {
        let surface = flat();
        let path = straight_contact_path(40);
        let params = ForceModelParams::new(-800.0, 0.3);
        let tip = ToolTipState::from_tilt_degrees(5.45, 50.0, 1e-4, 0.02, 5e-3).unwrap();
        let heights = vec![0.0; path.len()];
        let trace = forward_chain(&path, &heights, &tip, &params, WidthConvention::MajorAlongNormal);
        let measured: Vec<Option<f64>> = trace.widths.iter().map(|&w| Some(w)).collect();
        let k = fit_degradation(&measured, &path, &tip.with_wear_gain(0.0), &params, &surface).unwrap();
        assert_relative_eq!(k, 0.02, max_relative = 1e-4);

        let trace = forward_chain(
            &path,
            &heights,
            &tip.with_wear_gain(0.0),
            &params,
            WidthConvention::MajorAlongNormal,
        );
        let measured: Vec<Option<f64>> = trace.widths.iter().map(|&w| Some(w)).collect();
        let k = fit_degradation(&measured, &path, &tip, &params, &surface).unwrap();
        assert!(k <= 1e-8, "k = {k}");
    }

    #[test]
    fn degradation_fit_needs_contact() {
        let mut path = straight_contact_path(10);
        for s in &mut path {
            s.z = 1e-3;
        }
        let tip = ToolTipState::from_tilt_degrees(5.45, 50.0, 1e-4, 0.0, 5e-3).unwrap();
        let measured = vec![None; path.len()];
        assert!(matches!(
            fit_degradation(&measured, &path, &tip, &ForceModelParams::new(-800.0, 0.3), &flat()),
            Err(Error::NoContact)
        ));
    }

    proptest! {
        #[test]
        fn exact_recovery_and_orthogonality(theta in -5000.0f64..-10.0, theta0 in -1.0f64..2.0, noise in prop::collection::vec(-0.1f64..0.1, 30)) {
            let rows: Vec<CalibrationRow> = (0..30)
                .map(|i| {
                    let p = -(i as f64) * 1e-4 - 1e-5;
                    CalibrationRow { penetration: p, force: theta * p + theta0 }
                })
                .collect();
            let fit = fit_force(&CalibrationSet { rows: rows.clone() }).unwrap();
            prop_assert!((fit.theta - theta).abs() <= 1e-9 * theta.abs());
            prop_assert!((fit.theta0 - theta0).abs() <= 1e-9 * theta0.abs().max(1e-3));

            let noisy: Vec<CalibrationRow> = rows.iter().zip(&noise).map(|(r, e)| CalibrationRow { force: r.force + e, ..*r }).collect();
            let fit = fit_force(&CalibrationSet { rows: noisy.clone() }).unwrap();
            let (mut g0, mut g1, mut norm) = (0.0, 0.0, 0.0);
            for r in &noisy {
                let e = r.force - (fit.theta * r.penetration + fit.theta0);
                g0 += r.penetration * e;
                g1 += e;
                norm += r.force * r.force;
            }
            prop_assert!(g0.abs() <= 1e-8 * norm.sqrt());
            prop_assert!(g1.abs() <= 1e-8 * norm.sqrt());
        }

        #[test]
        fn force_nonincreasing_in_height(theta in -5000.0f64..-1.0, theta0 in -1.0f64..2.0, z1 in -3e-3f64..1e-3, dz in 0.0f64..1e-3) {
            let p = ForceModelParams::new(theta, theta0);
            prop_assert!(p.force(z1 + dz, 0.0) <= p.force(z1, 0.0));
        }

        #[test]
        fn bilinear_is_linear_on_edges(h in prop::array::uniform4(-1e-3f64..1e-3), t in 0.0f64..1.0) {
            let s = SurfaceMap::new((0.0, 0.0), 1.0, 2, 2, h.to_vec()).unwrap();
            let along_bottom = s.height_at(t, 0.0).unwrap();
            prop_assert!((along_bottom - ((1.0 - t) * h[0] + t * h[1])).abs() <= 1e-15);
            let along_left = s.height_at(0.0, t).unwrap();
            prop_assert!((along_left - ((1.0 - t) * h[0] + t * h[2])).abs() <= 1e-15);
        }
    }
}
