//! Reference strokes: sampled paths with a target width per sample.

use std::path::Path;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One sample of a reference stroke, all in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrokeSample {
    #[serde(rename = "x_m")]
    pub x: f64,
    #[serde(rename = "y_m")]
    pub y: f64,
    #[serde(rename = "w_m")]
    pub width: f64,
}

impl StrokeSample {
    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }
}

/// A reference stroke sampled once per control step.
///
/// Holds `horizon() + 1` samples; sample `t` is the target at control step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceStroke {
    samples: Vec<StrokeSample>,
    dt: f64,
}

/// Local tangent/normal pair of a stroke at one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrokeFrame {
    pub tangent: Vector2<f64>,
    pub normal: Vector2<f64>,
}

impl StrokeFrame {
    /// Frame whose tangent points along `direction`; the normal is the tangent rotated +90°.
    pub fn from_direction(direction: Vector2<f64>) -> Option<Self> {
        let len = direction.norm();
        if !(len > 0.0) || !len.is_finite() {
            return None;
        }
        let tangent = direction / len;
        Some(Self {
            tangent,
            normal: Vector2::new(-tangent.y, tangent.x),
        })
    }
}

impl ReferenceStroke {
    /// Validates and wraps a sample list. A single sample (zero horizon) is allowed.
    pub fn new(samples: Vec<StrokeSample>, dt: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::TooFewSamples { min: 1, actual: 0 });
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        for (index, s) in samples.iter().enumerate() {
            if !s.x.is_finite() || !s.y.is_finite() || !s.width.is_finite() {
                return Err(Error::NonFinite { index });
            }
            if s.width <= 0.0 {
                return Err(Error::NonPositiveWidth { index, value: s.width });
            }
        }
        Ok(Self { samples, dt })
    }

    pub fn samples(&self) -> &[StrokeSample] {
        &self.samples
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of control steps N; there are N + 1 samples.
    pub fn horizon(&self) -> usize {
        self.samples.len() - 1
    }

    pub fn widths(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.width)
    }

    pub fn max_width(&self) -> f64 {
        self.widths().fold(0.0, f64::max)
    }

    /// Axis-aligned bounding box `(min, max)` of the sample positions.
    pub fn bounding_box(&self) -> (Vector2<f64>, Vector2<f64>) {
        let mut lo = Vector2::repeat(f64::INFINITY);
        let mut hi = Vector2::repeat(f64::NEG_INFINITY);
        for s in &self.samples {
            lo = lo.inf(&s.position());
            hi = hi.sup(&s.position());
        }
        (lo, hi)
    }

    /// Tangent and normal at sample `t`.
    ///
    /// Central difference in the interior, one-sided differences at the two ends.
    pub fn frame_at(&self, t: usize) -> Result<StrokeFrame> {
        let n = self.horizon();
        if t > n {
            return Err(Error::InvalidParameter(format!("sample index {t} beyond horizon {n}")));
        }
        if n == 0 {
            return Err(Error::DegenerateTangent { index: t });
        }
        let (a, b) = match t {
            0 => (0, 1),
            t if t == n => (n - 1, n),
            t => (t - 1, t + 1),
        };
        let diff = self.samples[b].position() - self.samples[a].position();
        StrokeFrame::from_direction(diff).ok_or(Error::DegenerateTangent { index: t })
    }

    pub fn read_csv(path: &Path, dt: f64) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let samples = reader
            .deserialize()
            .collect::<std::result::Result<Vec<StrokeSample>, _>>()?;
        Self::new(samples, dt)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        for s in &self.samples {
            writer.serialize(s)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Builds a stroke from matching point and width lists.
pub fn build_polyline_stroke(points: &[(f64, f64)], widths: &[f64], dt: f64) -> Result<ReferenceStroke> {
    if points.len() != widths.len() {
        return Err(Error::LengthMismatch {
            expected: points.len(),
            actual: widths.len(),
        });
    }
    if points.len() < 2 {
        return Err(Error::TooFewSamples {
            min: 2,
            actual: points.len(),
        });
    }
    let samples = points
        .iter()
        .zip(widths)
        .map(|(&(x, y), &width)| StrokeSample { x, y, width })
        .collect();
    ReferenceStroke::new(samples, dt)
}

/// Geometry of the two-leg test stroke: a rightward leg followed by a downward leg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LStrokeSpec {
    /// Start point of the rightward leg.
    pub start: (f64, f64),
    pub right_length_m: f64,
    pub down_length_m: f64,
    pub right_steps: usize,
    pub down_steps: usize,
    pub right_width_m: f64,
    pub down_width_m: f64,
}

impl Default for LStrokeSpec {
    fn default() -> Self {
        Self {
            start: (0.0, 0.0),
            right_length_m: 0.01,
            down_length_m: 0.01,
            right_steps: 50,
            down_steps: 50,
            right_width_m: 1.0e-3,
            down_width_m: 0.7e-3,
        }
    }
}

/// Samples the L-shaped stroke: `right_steps` moves along +x, then `down_steps` moves along −y.
///
/// The corner sample belongs to the rightward leg.
pub fn l_stroke(spec: &LStrokeSpec, dt: f64) -> Result<ReferenceStroke> {
    if spec.right_steps == 0 || spec.down_steps == 0 {
        return Err(Error::InvalidParameter("L-stroke legs need at least one step".into()));
    }
    let (x0, y0) = spec.start;
    let mut points = Vec::with_capacity(spec.right_steps + spec.down_steps + 1);
    let mut widths = Vec::with_capacity(points.capacity());
    for i in 0..=spec.right_steps {
        points.push((x0 + spec.right_length_m * i as f64 / spec.right_steps as f64, y0));
        widths.push(spec.right_width_m);
    }
    let corner_x = x0 + spec.right_length_m;
    for j in 1..=spec.down_steps {
        points.push((corner_x, y0 - spec.down_length_m * j as f64 / spec.down_steps as f64));
        widths.push(spec.down_width_m);
    }
    build_polyline_stroke(&points, &widths, dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn two_point_stroke() {
        let s = build_polyline_stroke(&[(0.0, 0.0), (0.001, 0.0)], &[1e-3, 1e-3], 0.008).unwrap();
        assert_eq!(s.horizon(), 1);
        assert!(s.widths().all(|w| w == 1e-3));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            build_polyline_stroke(&[(0.0, 0.0), (1.0, 0.0)], &[1e-3, 0.0], 0.008),
            Err(Error::NonPositiveWidth { index: 1, .. })
        ));
        assert!(matches!(
            build_polyline_stroke(&[(0.0, 0.0), (1.0, 0.0)], &[1e-3], 0.008),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn l_stroke_widths_follow_legs() {
        let s = l_stroke(&LStrokeSpec::default(), 0.008).unwrap();
        assert_eq!(s.horizon(), 100);
        let samples = s.samples();
        assert!(samples[..=50].iter().all(|p| p.width == 1.0e-3 && p.y == 0.0));
        assert!(samples[51..].iter().all(|p| p.width == 0.7e-3 && p.x == 0.01));
        assert!(samples[100].y < samples[51].y);
    }

    #[test]
    fn frames() {
        let s = build_polyline_stroke(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)], &[1.0; 3], 1.0).unwrap();
        for t in 0..3 {
            let f = s.frame_at(t).unwrap();
            assert_eq!(f.tangent, Vector2::new(1.0, 0.0));
            assert_eq!(f.normal, Vector2::new(0.0, 1.0));
        }
        let s = build_polyline_stroke(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)], &[1.0; 3], 1.0).unwrap();
        let f = s.frame_at(1).unwrap();
        assert_abs_diff_eq!(f.tangent.x, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
        assert_abs_diff_eq!(f.tangent.y, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);

        let s = build_polyline_stroke(&[(0.0, 0.0), (0.0, 0.0), (1.0, 0.0)], &[1.0; 3], 1.0).unwrap();
        assert!(matches!(s.frame_at(0), Err(Error::DegenerateTangent { index: 0 })));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stroke.csv");
        let s = l_stroke(&LStrokeSpec::default(), 0.008).unwrap();
        s.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x_m,y_m,w_m\n"));
        assert_eq!(ReferenceStroke::read_csv(&path, 0.008).unwrap(), s);
    }

    proptest! {
        #[test]
        fn tangents_are_unit(steps in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..30)) {
            let mut points = vec![(0.0, 0.0)];
            for (dx, dy) in &steps {
                let (x, y) = *points.last().unwrap();
                // keep consecutive points distinct and away from exact reversal
                points.push((x + dx.abs() + 1e-3, y + dy));
            }
            let widths = vec![1e-3; points.len()];
            let s = build_polyline_stroke(&points, &widths, 0.008).unwrap();
            let read_back: Vec<(f64, f64)> = s.samples().iter().map(|p| (p.x, p.y)).collect();
            prop_assert_eq!(read_back, points);
            for t in 0..=s.horizon() {
                let f = s.frame_at(t).unwrap();
                prop_assert!((f.tangent.norm() - 1.0).abs() <= 1e-12);
                prop_assert!(f.tangent.dot(&f.normal).abs() <= 1e-12);
            }
        }
    }
}
