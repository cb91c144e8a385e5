//! Raster canvas and the ground-truth simulator that draws on it.
//!
//! Executes a plan open loop against the true force/wear models and stamps the exact
//! elliptical footprint at sub-pixel spacing along the executed path.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::force::SurfaceMap;
use crate::kinematics::{simulate, EndEffectorState};
use crate::planner::Plan;
use crate::tip::ToolTipState;

/// Placement of a pixel grid in the world.
///
/// Pixel `(col, row)` covers `[ox + col·s, ox + (col+1)·s) × [oy + row·s, oy + (row+1)·s)`;
/// rows grow with `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanvasGeometry {
    pub origin: (f64, f64),
    /// Meters per pixel.
    pub scale: f64,
    pub width: usize,
    pub height: usize,
}

impl CanvasGeometry {
    pub fn new(origin: (f64, f64), scale: f64, width: usize, height: usize) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "canvas scale must be positive, got {scale}"
            )));
        }
        if !origin.0.is_finite() || !origin.1.is_finite() {
            return Err(Error::InvalidParameter("canvas origin must be finite".into()));
        }
        Ok(Self {
            origin,
            scale,
            width,
            height,
        })
    }

    /// Smallest grid covering `[lo, hi]` grown by `margin` on every side.
    pub fn covering(lo: (f64, f64), hi: (f64, f64), margin: f64, scale: f64) -> Result<Self> {
        let origin = (lo.0 - margin, lo.1 - margin);
        let width = ((hi.0 - lo.0 + 2.0 * margin) / scale).ceil() as usize;
        let height = ((hi.1 - lo.1 + 2.0 * margin) / scale).ceil() as usize;
        Self::new(origin, scale, width, height)
    }

    pub fn pixel_center(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.origin.0 + (col as f64 + 0.5) * self.scale,
            self.origin.1 + (row as f64 + 0.5) * self.scale,
        )
    }

    /// World point to continuous pixel coordinates (pixel `i` spans `[i, i+1)`).
    pub fn to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.origin.0) / self.scale, (y - self.origin.1) / self.scale)
    }

    fn contains_box(&self, lo: (f64, f64), hi: (f64, f64)) -> bool {
        let (c0, r0) = self.to_pixel(lo.0, lo.1);
        let (c1, r1) = self.to_pixel(hi.0, hi.1);
        c0 >= 0.0 && r0 >= 0.0 && c1 <= self.width as f64 && r1 <= self.height as f64
    }
}

/// Binary grayscale raster: 0 is blank paper, 255 is deposit.
#[derive(Debug, Clone, PartialEq)]
pub struct Canvas {
    geometry: CanvasGeometry,
    pixels: Vec<u8>,
}

impl Canvas {
    pub fn blank(geometry: CanvasGeometry) -> Self {
        Self {
            pixels: vec![0; geometry.width * geometry.height],
            geometry,
        }
    }

    pub fn from_pixels(geometry: CanvasGeometry, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != geometry.width * geometry.height {
            return Err(Error::LengthMismatch {
                expected: geometry.width * geometry.height,
                actual: pixels.len(),
            });
        }
        Ok(Self { geometry, pixels })
    }

    pub fn geometry(&self) -> &CanvasGeometry {
        &self.geometry
    }

    /// Row-major pixel buffer.
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, col: usize, row: usize) -> u8 {
        self.pixels[row * self.geometry.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, value: u8) {
        self.pixels[row * self.geometry.width + col] = value;
    }

    pub fn filled_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p > 0).count()
    }

    /// Fills every pixel whose center lies in the footprint of `tip` with the tool axis at
    /// `axis` and the footprint's major axis along the unit vector `major`.
    ///
    /// Returns `false` (and draws nothing) if the footprint would leave the canvas.
    pub fn stamp_footprint(&mut self, tip: &ToolTipState, axis: (f64, f64), major: Vector2<f64>) -> bool {
        let axes = tip.axes_at(tip.d);
        let (sa, sb) = (axes.major / 2.0, axes.minor / 2.0);
        if !(sa > 0.0) {
            return true;
        }
        let minor = Vector2::new(-major.y, major.x);
        let off = tip.center_offset();
        let c = (axis.0 + off * major.x, axis.1 + off * major.y);
        let hx = (sa * sa * major.x * major.x + sb * sb * minor.x * minor.x).sqrt();
        let hy = (sa * sa * major.y * major.y + sb * sb * minor.y * minor.y).sqrt();
        if !self.geometry.contains_box((c.0 - hx, c.1 - hy), (c.0 + hx, c.1 + hy)) {
            return false;
        }
        let inside = |p: (f64, f64)| {
            let (dx, dy) = (p.0 - axis.0, p.1 - axis.1);
            tip.footprint_implicit(dx * major.x + dy * major.y, dx * minor.x + dy * minor.y) <= 0.0
        };

        let g = self.geometry;
        let s = g.scale;
        // quadratic in dx for a fixed row: q2·dx² + q1·dx + q0 <= 0
        let (ia, ib) = (1.0 / (sa * sa), 1.0 / (sb * sb));
        let q2 = major.x * major.x * ia + minor.x * minor.x * ib;
        let cross = major.x * major.y * ia + minor.x * minor.y * ib;
        let yy = major.y * major.y * ia + minor.y * minor.y * ib;

        let (_, r_lo) = g.to_pixel(0.0, c.1 - hy);
        let (_, r_hi) = g.to_pixel(0.0, c.1 + hy);
        let row_lo = (r_lo.floor() as isize - 1).max(0) as usize;
        let row_hi = ((r_hi.floor() as isize + 1).max(0) as usize).min(g.height.saturating_sub(1));
        let last_col = g.width as isize - 1;
        for row in row_lo..=row_hi {
            let yc = g.origin.1 + (row as f64 + 0.5) * s;
            let dy = yc - c.1;
            let q1 = 2.0 * cross * dy;
            let q0 = yy * dy * dy - 1.0;
            let disc = q1 * q1 - 4.0 * q2 * q0;
            let vertex = -q1 / (2.0 * q2);
            let (lo, hi) = if disc >= 0.0 {
                let r = disc.sqrt() / (2.0 * q2);
                (vertex - r, vertex + r)
            } else {
                (vertex, vertex)
            };
            // columns whose centers fall inside [lo, hi], padded by one for the exact test
            let col_of = |dx: f64| (c.0 + dx - g.origin.0) / s - 0.5;
            let first = (col_of(lo).ceil() as isize - 1).max(0);
            let last = (col_of(hi).floor() as isize + 1).min(last_col);
            if first > last {
                continue;
            }
            let base = row * g.width;
            // interior columns are at least one pixel from the boundary: fill directly
            let (mut i, mut j) = (first, last);
            while i <= j && !inside(g.pixel_center(i as usize, row)) {
                i += 1;
            }
            while j >= i && !inside(g.pixel_center(j as usize, row)) {
                j -= 1;
            }
            if i <= j {
                self.pixels[base + i as usize..=base + j as usize].fill(255);
            }
        }
        true
    }

    /// Writes a plain (P2) PGM; origin and scale travel in a comment line.
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_pgm())?;
        Ok(())
    }

    pub fn to_pgm(&self) -> String {
        let g = &self.geometry;
        let mut out = String::with_capacity(self.pixels.len() * 2 + 64);
        out.push_str("P2\n");
        let _ = writeln!(
            out,
            "# origin_m {:e} {:e} scale_m {:e}",
            g.origin.0, g.origin.1, g.scale
        );
        let _ = writeln!(out, "{} {}\n255", g.width, g.height);
        let names: Vec<String> = (0..=255u8).map(|v| v.to_string()).collect();
        for row in self.pixels.chunks(g.width.max(1)) {
            // plain PGM asks for lines of at most 70 characters
            let mut line_len = 0;
            for &p in row {
                let token = &names[p as usize];
                if line_len > 0 {
                    if line_len + 1 + token.len() > 70 {
                        out.push('\n');
                        line_len = 0;
                    } else {
                        out.push(' ');
                        line_len += 1;
                    }
                }
                out.push_str(token);
                line_len += token.len();
            }
            out.push('\n');
        }
        out
    }

    /// Reads a P2 PGM. Files without the geometry comment get origin `(0, 0)` and 10 µm pixels.
    pub fn read_pgm(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_pgm(&text).map_err(|reason| Error::Format {
            path: path.to_path_buf(),
            reason,
        })
    }

    fn parse_pgm(text: &str) -> std::result::Result<Self, String> {
        let mut origin = (0.0, 0.0);
        let mut scale = 1e-5;
        let mut tokens = Vec::new();
        for line in text.lines() {
            let (body, comment) = match line.find('#') {
                Some(i) => (&line[..i], Some(&line[i + 1..])),
                None => (line, None),
            };
            if let Some(c) = comment {
                let f: Vec<&str> = c.split_whitespace().collect();
                if f.len() == 5 && f[0] == "origin_m" && f[3] == "scale_m" {
                    let num = |s: &str| s.parse::<f64>().map_err(|e| format!("bad geometry comment: {e}"));
                    origin = (num(f[1])?, num(f[2])?);
                    scale = num(f[4])?;
                }
            }
            tokens.extend(body.split_whitespace());
        }
        let mut it = tokens.into_iter();
        if it.next() != Some("P2") {
            return Err("not a plain PGM (missing P2 magic)".into());
        }
        let mut header = |what: &str| -> std::result::Result<usize, String> {
            it.next()
                .ok_or(format!("missing {what}"))?
                .parse::<usize>()
                .map_err(|e| format!("bad {what}: {e}"))
        };
        let width = header("width")?;
        let height = header("height")?;
        let maxval = header("maxval")?;
        if maxval == 0 || maxval > 255 {
            return Err(format!("unsupported maxval {maxval}"));
        }
        let pixels = it
            .map(|t| t.parse::<u8>().map_err(|e| format!("bad pixel {t:?}: {e}")))
            .collect::<std::result::Result<Vec<u8>, String>>()?;
        if pixels.len() != width * height {
            return Err(format!("expected {} pixels, found {}", width * height, pixels.len()));
        }
        let geometry = CanvasGeometry::new(origin, scale, width, height).map_err(|e| e.to_string())?;
        Ok(Self { geometry, pixels })
    }
}

/// The "real" system the plan runs on.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Linear force coefficient, N/m (negative: pressing down increases force).
    pub theta: f64,
    pub theta0: f64,
    /// Coefficient on `(z − z_ref)²`, N/m².
    pub quadratic: f64,
    /// Std-dev of additive force-sensor noise, N.
    pub noise_sd: f64,
    pub k_d: f64,
    pub surface: SurfaceMap,
    pub seed: u64,
}

impl GroundTruth {
    /// Noise-free contact force at penetration `z − z_ref`, floored at zero.
    pub fn force(&self, penetration: f64) -> f64 {
        (self.theta * penetration + self.theta0 + self.quadratic * penetration * penetration).max(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sd >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise sd must be >= 0, got {}",
                self.noise_sd
            )));
        }
        if !(self.k_d >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "true K_d must be >= 0, got {}",
                self.k_d
            )));
        }
        Ok(())
    }
}

/// What happened when a plan was executed on the ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub states: Vec<EndEffectorState>,
    /// True surface height under each state.
    pub surface_heights: Vec<f64>,
    pub contact: Vec<bool>,
    /// Noise-free force; this is what wears the tip.
    pub forces: Vec<f64>,
    /// Force as the sensor reports it (true force plus noise).
    pub measured_forces: Vec<f64>,
    /// True plane offset at each sample.
    pub offsets: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRow {
    t: usize,
    x: f64,
    y: f64,
    z: f64,
    psi: f64,
    #[serde(rename = "F_true")]
    f_true: f64,
    d_true: f64,
    #[serde(rename = "F_meas")]
    f_meas: f64,
    z_ref: f64,
}

impl Execution {
    /// Final true tip after the stroke (wear continues into the last step).
    pub fn final_offset(&self) -> Option<f64> {
        self.offsets.last().copied()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for t in 0..self.states.len() {
            let s = self.states[t];
            w.serialize(TraceRow {
                t,
                x: s.x,
                y: s.y,
                z: s.z,
                psi: s.psi,
                f_true: self.forces[t],
                d_true: self.offsets[t],
                f_meas: self.measured_forces[t],
                z_ref: self.surface_heights[t],
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let rows = r.deserialize().collect::<std::result::Result<Vec<TraceRow>, _>>()?;
        Ok(Self {
            states: rows
                .iter()
                .map(|r| EndEffectorState::new(r.x, r.y, r.z, r.psi))
                .collect(),
            surface_heights: rows.iter().map(|r| r.z_ref).collect(),
            contact: rows.iter().map(|r| r.z <= r.z_ref).collect(),
            forces: rows.iter().map(|r| r.f_true).collect(),
            measured_forces: rows.iter().map(|r| r.f_meas).collect(),
            offsets: rows.iter().map(|r| r.d_true).collect(),
        })
    }
}

/// Runs `plan` open loop on the ground truth and deposits onto `canvas`.
///
/// The footprint is stamped at every sample and at sub-steps no more than one pixel apart
/// between samples, using the true offset of the step's starting sample. Its minor axis
/// sits at `psi` from the executed motion direction. The true tip wears once per step
/// with the noise-free force; `tip0.k_d` is ignored in favour of `truth.k_d`.
pub fn execute(plan: &Plan, truth: &GroundTruth, tip0: &ToolTipState, canvas: &mut Canvas) -> Result<Execution> {
    truth.validate()?;
    tip0.validate()?;
    let initial = *plan
        .predicted_states
        .first()
        .ok_or_else(|| Error::InvalidParameter("plan has no initial state".into()))?;
    let states = simulate(initial, &plan.inputs, plan.dt);
    let n = plan.inputs.len();

    let mut rng = ChaCha8Rng::seed_from_u64(truth.seed);
    let noise = Normal::new(0.0, truth.noise_sd).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut tip = tip0.with_wear_gain(truth.k_d);

    let mut surface_heights = Vec::with_capacity(n + 1);
    let mut contact = Vec::with_capacity(n + 1);
    let mut forces = Vec::with_capacity(n + 1);
    let mut measured = Vec::with_capacity(n + 1);
    let mut offsets = Vec::with_capacity(n + 1);

    // motion directions per step; stationary steps borrow the nearest moving one
    let mut dirs: Vec<Option<Vector2<f64>>> = states
        .windows(2)
        .map(|w| {
            let v = Vector2::new(w[1].x - w[0].x, w[1].y - w[0].y);
            let len = v.norm();
            (len > 0.0).then(|| v / len)
        })
        .collect();
    let first_dir = dirs.iter().flatten().next().copied().unwrap_or(Vector2::new(1.0, 0.0));
    let mut last = first_dir;
    for d in dirs.iter_mut() {
        match d {
            Some(v) => last = *v,
            None => *d = Some(last),
        }
    }
    let dirs: Vec<Vector2<f64>> = dirs.into_iter().flatten().collect();

    let scale = canvas.geometry().scale;
    for t in 0..=n {
        let s = states[t];
        let zr = truth.surface.height_at(s.x, s.y)?;
        let touching = s.z <= zr;
        let f = if touching { truth.force(s.z - zr) } else { 0.0 };
        surface_heights.push(zr);
        contact.push(touching);
        forces.push(f);
        measured.push(
            f + if truth.noise_sd > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            },
        );
        offsets.push(tip.d);

        let tangent = if t < n {
            dirs[t]
        } else {
            dirs.last().copied().unwrap_or(first_dir)
        };
        let next = states.get(t + 1).copied().unwrap_or(s);
        let len = (next.x - s.x).hypot(next.y - s.y);
        let subs = if t < n {
            ((len / scale).ceil() as usize).max(1)
        } else {
            1
        };
        for k in 0..subs {
            let f = k as f64 / subs as f64;
            let p = EndEffectorState::new(
                s.x + f * (next.x - s.x),
                s.y + f * (next.y - s.y),
                s.z + f * (next.z - s.z),
                s.psi + f * (next.psi - s.psi),
            );
            let zr_p = if k == 0 { zr } else { truth.surface.height_at(p.x, p.y)? };
            if p.z > zr_p {
                continue;
            }
            let normal = Vector2::new(-tangent.y, tangent.x);
            let (c, sn) = (p.psi.cos(), p.psi.sin());
            let major = Vector2::new(c * normal.x - sn * normal.y, sn * normal.x + c * normal.y);
            if !canvas.stamp_footprint(&tip, (p.x, p.y), major) {
                return Err(Error::CanvasOverflow { step: t });
            }
        }
        if t < n {
            tip = tip.degrade(f, len);
        }
    }

    Ok(Execution {
        states,
        surface_heights,
        contact,
        forces,
        measured_forces: measured,
        offsets,
    })
}
