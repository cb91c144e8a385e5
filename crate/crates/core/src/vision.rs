//! Measuring drawn width from a raster: threshold, contour tracing, normal scanlines
//! and the summed absolute width error.

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::canvas::{Canvas, CanvasGeometry};
use crate::error::{Error, Result};
use crate::stroke::ReferenceStroke;

/// Binary image, row-major, same layout as [`Canvas`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn get(&self, col: usize, row: usize) -> bool {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, value: bool) {
        self.data[row * self.width + col] = value;
    }

    /// Out-of-range coordinates read as background.
    fn at(&self, col: isize, row: isize) -> bool {
        col >= 0
            && row >= 0
            && (col as usize) < self.width
            && (row as usize) < self.height
            && self.get(col as usize, row as usize)
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Pixels at or above `level`. Levels above 255 give an empty mask.
pub fn threshold(canvas: &Canvas, level: u16) -> Mask {
    let g = canvas.geometry();
    Mask {
        width: g.width,
        height: g.height,
        data: canvas.pixels().iter().map(|&p| u16::from(p) >= level).collect(),
    }
}

/// Moore neighbourhood in clockwise order (rows grow downward in this picture),
/// starting from west.
const RING: [(isize, isize); 8] = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)];

fn ring_index(from: (isize, isize), to: (isize, isize)) -> usize {
    let d = (to.0 - from.0, to.1 - from.1);
    RING.iter().position(|&r| r == d).expect("neighbouring pixels")
}

/// Outer boundary of every 8-connected component, traced by Moore-neighbour following
/// with Jacob's stopping rule. Each contour starts at its component's first pixel in
/// raster order; pixels are `(col, row)`.
pub fn extract_contour(mask: &Mask) -> Result<Vec<Vec<(usize, usize)>>> {
    if mask.count() == 0 {
        return Err(Error::EmptyMask);
    }
    let mut seen = vec![false; mask.data.len()];
    let mut contours = Vec::new();
    for row in 0..mask.height {
        for col in 0..mask.width {
            let idx = row * mask.width + col;
            if !mask.data[idx] || seen[idx] {
                continue;
            }
            flood(mask, &mut seen, col, row);
            contours.push(trace(mask, (col as isize, row as isize)));
        }
    }
    Ok(contours)
}

fn flood(mask: &Mask, seen: &mut [bool], col: usize, row: usize) {
    let mut queue = VecDeque::from([(col as isize, row as isize)]);
    seen[row * mask.width + col] = true;
    while let Some((c, r)) = queue.pop_front() {
        for (dc, dr) in RING {
            let (nc, nr) = (c + dc, r + dr);
            if mask.at(nc, nr) {
                let i = nr as usize * mask.width + nc as usize;
                if !seen[i] {
                    seen[i] = true;
                    queue.push_back((nc, nr));
                }
            }
        }
    }
}

fn trace(mask: &Mask, start: (isize, isize)) -> Vec<(usize, usize)> {
    let as_pixel = |p: (isize, isize)| (p.0 as usize, p.1 as usize);
    let mut contour = vec![as_pixel(start)];
    // raster order guarantees the west neighbour of the start is background
    let start_back = (start.0 - 1, start.1);
    let (mut p, mut back) = (start, start_back);
    loop {
        let b = ring_index(p, back);
        let mut next = None;
        for k in 1..=8 {
            let dir = RING[(b + k) % 8];
            let q = (p.0 + dir.0, p.1 + dir.1);
            if mask.at(q.0, q.1) {
                let prev = RING[(b + k - 1) % 8];
                next = Some((q, (p.0 + prev.0, p.1 + prev.1)));
                break;
            }
        }
        let Some((q, new_back)) = next else {
            // isolated pixel
            return contour;
        };
        p = q;
        back = new_back;
        if p == start && back == start_back {
            return contour;
        }
        contour.push(as_pixel(p));
    }
}

/// Measured width at one reference sample; `w_a` is `None` when the scanline found no deposit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WidthSample {
    pub t: usize,
    pub w_ref: f64,
    pub w_a: Option<f64>,
}

impl WidthSample {
    pub fn valid(&self) -> bool {
        self.w_a.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WidthProfile {
    pub samples: Vec<WidthSample>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProfileRow {
    t: usize,
    w_ref_m: f64,
    w_a_m: Option<f64>,
    valid: bool,
}

impl WidthProfile {
    pub fn measured(&self) -> Vec<Option<f64>> {
        self.samples.iter().map(|s| s.w_a).collect()
    }

    pub fn invalid_count(&self) -> usize {
        self.samples.iter().filter(|s| !s.valid()).count()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for s in &self.samples {
            w.serialize(ProfileRow {
                t: s.t,
                w_ref_m: s.w_ref,
                w_a_m: s.w_a,
                valid: s.valid(),
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut samples = Vec::new();
        for row in r.deserialize() {
            let row: ProfileRow = row?;
            if row.valid != row.w_a_m.is_some() {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    reason: format!("row {}: valid flag disagrees with width", row.t),
                });
            }
            samples.push(WidthSample {
                t: row.t,
                w_ref: row.w_ref_m,
                w_a: row.w_a_m,
            });
        }
        Ok(Self { samples })
    }
}

/// Half-length of the measuring scanline as a multiple of the widest reference width.
pub const DEFAULT_SEARCH_FACTOR: f64 = 1.5;

/// Width along the stroke normal at every reference sample.
///
/// Walks the exact sequence of pixels crossed by the normal line through the sample
/// (within `±1.5·max W_ref`) and takes the contiguous run of mask pixels that contains the
/// sample point, or else the run closest to it. The width is the run's length along the line.
pub fn width_profile(mask: &Mask, stroke: &ReferenceStroke, geometry: &CanvasGeometry) -> WidthProfile {
    width_profile_with(mask, stroke, geometry, DEFAULT_SEARCH_FACTOR * stroke.max_width())
}

pub fn width_profile_with(
    mask: &Mask,
    stroke: &ReferenceStroke,
    geometry: &CanvasGeometry,
    half_length: f64,
) -> WidthProfile {
    let samples = stroke
        .samples()
        .iter()
        .enumerate()
        .map(|(t, s)| {
            let w_a = stroke
                .frame_at(t)
                .ok()
                .and_then(|f| scan_width(mask, geometry, (s.x, s.y), (f.normal.x, f.normal.y), half_length));
            WidthSample { t, w_ref: s.width, w_a }
        })
        .collect();
    WidthProfile { samples }
}

/// Length of the chosen mask run along `center + s·dir`, `s ∈ [−half, half]` (meters).
fn scan_width(mask: &Mask, g: &CanvasGeometry, center: (f64, f64), dir: (f64, f64), half: f64) -> Option<f64> {
    let runs = runs_along(mask, g, center, dir, half);
    let containing = runs.iter().find(|r| r.0 <= 0.0 && 0.0 <= r.1);
    let chosen = containing.or_else(|| runs.iter().min_by(|a, b| gap_to_origin(a).total_cmp(&gap_to_origin(b))))?;
    Some(chosen.1 - chosen.0)
}

fn gap_to_origin(run: &&(f64, f64)) -> f64 {
    if run.1 < 0.0 {
        -run.1
    } else {
        run.0
    }
}

/// Contiguous foreground intervals `(s_start, s_end)` crossed by the segment, in meters
/// from `center`. Uses an exact cell-by-cell traversal of the segment.
fn runs_along(mask: &Mask, g: &CanvasGeometry, center: (f64, f64), dir: (f64, f64), half: f64) -> Vec<(f64, f64)> {
    let (x0, y0) = g.to_pixel(center.0 - half * dir.0, center.1 - half * dir.1);
    let (x1, y1) = g.to_pixel(center.0 + half * dir.0, center.1 + half * dir.1);
    let (dx, dy) = (x1 - x0, y1 - y0);
    let param_to_s = |t: f64| -half + 2.0 * half * t;

    let mut cell = (x0.floor() as isize, y0.floor() as isize);
    let step = (if dx > 0.0 { 1 } else { -1 }, if dy > 0.0 { 1 } else { -1 });
    let first_boundary = |p: f64, d: f64| {
        if d > 0.0 {
            (p.floor() + 1.0 - p) / d
        } else if d < 0.0 {
            (p - p.floor()) / -d
        } else {
            f64::INFINITY
        }
    };
    let mut t_max = (first_boundary(x0, dx), first_boundary(y0, dy));
    let t_delta = (
        if dx != 0.0 { 1.0 / dx.abs() } else { f64::INFINITY },
        if dy != 0.0 { 1.0 / dy.abs() } else { f64::INFINITY },
    );

    let mut runs = Vec::new();
    let mut open: Option<(f64, f64)> = None;
    let mut t_enter = 0.0;
    while t_enter < 1.0 {
        let t_exit = t_max.0.min(t_max.1).min(1.0);
        if t_exit > t_enter {
            if mask.at(cell.0, cell.1) {
                let (s0, s1) = (param_to_s(t_enter), param_to_s(t_exit));
                open = Some(match open {
                    Some((start, _)) => (start, s1),
                    None => (s0, s1),
                });
            } else if let Some(run) = open.take() {
                runs.push(run);
            }
        }
        if t_exit >= 1.0 {
            break;
        }
        // crossing exactly through a corner moves diagonally
        if t_max.0 <= t_max.1 {
            if t_max.0 == t_max.1 {
                cell.1 += step.1;
                t_max.1 += t_delta.1;
            }
            cell.0 += step.0;
            t_max.0 += t_delta.0;
        } else {
            cell.1 += step.1;
            t_max.1 += t_delta.1;
        }
        t_enter = t_exit;
    }
    if let Some(run) = open {
        runs.push(run);
    }
    runs
}

/// Summed absolute width error; samples without a measurement count their full reference width.
pub fn error_metric(profile: &WidthProfile, stroke: &ReferenceStroke) -> Result<f64> {
    let refs = stroke.samples();
    if profile.samples.len() != refs.len() {
        return Err(Error::LengthMismatch {
            expected: refs.len(),
            actual: profile.samples.len(),
        });
    }
    Ok(profile
        .samples
        .iter()
        .zip(refs)
        .map(|(p, r)| match p.w_a {
            Some(w) => (w - r.width).abs(),
            None => r.width,
        })
        .sum())
}

/// Median of the valid widths, if any.
pub fn median_width(profile: &WidthProfile) -> Option<f64> {
    let mut w: Vec<f64> = profile.samples.iter().filter_map(|s| s.w_a).collect();
    if w.is_empty() {
        return None;
    }
    w.sort_by(f64::total_cmp);
    let n = w.len();
    Some(if n % 2 == 1 {
        w[n / 2]
    } else {
        (w[n / 2 - 1] + w[n / 2]) / 2.0
    })
}
