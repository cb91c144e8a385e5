//! Conical tool tip cut by a tilted contact plane.
//!
//! The contact footprint is the ellipse where the plane `z = a·x + d` (cone frame)
//! meets a cone of slope `m`. Wear pushes the plane further into the cone, growing
//! `d` and with it both footprint axes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometric and wear state of the tool tip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToolTipState {
    /// Cone slope.
    pub m: f64,
    /// Plane slope, `tan(gamma)`.
    pub a: f64,
    /// Plane offset from the cone apex, meters.
    pub d: f64,
    /// Wear gain, meters of offset per newton-meter travelled.
    pub k_d: f64,
    /// Offset at which the plane would leave the cone; wear saturates here.
    pub d_max: f64,
}

/// Full axis lengths of the footprint ellipse, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipseAxes {
    pub major: f64,
    pub minor: f64,
}

/// Which footprint axis projects onto the stroke normal at `psi = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidthConvention {
    /// `W = max(major·|cos psi|, minor·|sin psi|)`.
    #[default]
    MajorAlongNormal,
    /// `W = max(major·|sin psi|, minor·|cos psi|)`.
    Swapped,
    /// Exact extent of the ellipse along the normal, `sqrt((major·cos psi)² + (minor·sin psi)²)`.
    /// Already smooth; `kappa` is ignored.
    Extent,
}

impl ToolTipState {
    pub fn new(m: f64, a: f64, d: f64, k_d: f64, d_max: f64) -> Result<Self> {
        let tip = Self { m, a, d, k_d, d_max };
        tip.validate()?;
        Ok(tip)
    }

    pub fn from_tilt_degrees(m: f64, gamma_deg: f64, d: f64, k_d: f64, d_max: f64) -> Result<Self> {
        Self::new(m, gamma_deg.to_radians().tan(), d, k_d, d_max)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.m, self.a, self.d, self.k_d, self.d_max];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidTip("non-finite parameter".into()));
        }
        if !(self.m > 0.0) {
            return Err(Error::InvalidTip(format!(
                "cone slope must be positive, got {}",
                self.m
            )));
        }
        if !(self.a.abs() < self.m.abs()) {
            return Err(Error::InvalidTip(format!(
                "plane slope |{}| must be shallower than cone slope {}",
                self.a, self.m
            )));
        }
        if self.d < 0.0 || self.d > self.d_max {
            return Err(Error::InvalidTip(format!(
                "offset {} outside [0, {}]",
                self.d, self.d_max
            )));
        }
        if self.k_d < 0.0 {
            return Err(Error::InvalidTip(format!("negative wear gain {}", self.k_d)));
        }
        Ok(())
    }

    /// Same tip with a different plane offset (used for resharpening and estimates).
    pub fn with_offset(&self, d: f64) -> Self {
        Self { d, ..*self }
    }

    pub fn with_wear_gain(&self, k_d: f64) -> Self {
        Self { k_d, ..*self }
    }

    pub fn tilt_degrees(&self) -> f64 {
        self.a.atan().to_degrees()
    }

    /// Axis lengths per unit offset: `(major/d, minor/d)`.
    pub fn axis_factors(&self) -> (f64, f64) {
        let (m, a) = (self.m, self.a);
        let root_gap = (m * m - a * a).sqrt();
        let minor = 2.0 / root_gap;
        // written as minor·(m·sqrt(1 + a²)/sqrt(m² − a²)) so a = 0 gives major == minor exactly
        (minor * (m * (1.0 + a * a).sqrt() / root_gap), minor)
    }

    /// Footprint axes at the current offset.
    pub fn axes(&self) -> Result<EllipseAxes> {
        if self.d == 0.0 {
            return Err(Error::DegenerateTip);
        }
        Ok(self.axes_at(self.d))
    }

    /// Axes for an arbitrary offset; zero offset gives zero axes.
    pub fn axes_at(&self, d: f64) -> EllipseAxes {
        let (fa, fb) = self.axis_factors();
        EllipseAxes {
            major: fa * d,
            minor: fb * d,
        }
    }

    /// Wear after travelling `step_len` meters under force `force`, saturating at `d_max`.
    pub fn degrade(&self, force: f64, step_len: f64) -> Self {
        self.with_offset(self.degraded_offset(force, step_len))
    }

    pub fn degraded_offset(&self, force: f64, step_len: f64) -> f64 {
        (self.d + self.k_d * force * step_len).min(self.d_max)
    }

    /// In-plane distance from the tool axis to the footprint center, along the tilt direction.
    ///
    /// The cone-frame center sits at `x = a·d / (m² − a²)`; in-plane lengths along the
    /// tilt direction are longer by `sqrt(1 + a²)`.
    pub fn center_offset(&self) -> f64 {
        let (m, a) = (self.m, self.a);
        a * self.d / (m * m - a * a) * (1.0 + a * a).sqrt()
    }

    /// Left-hand side of the cone/plane ellipse equation minus one, in cone-frame coordinates
    /// `(x, y)` measured from the cone axis. Negative inside the footprint.
    pub fn ellipse_implicit(&self, x: f64, y: f64) -> f64 {
        let (m, a, d) = (self.m, self.a, self.d);
        let gap = m * m - a * a;
        let shifted = x + a * d / (a * a - m * m);
        gap * gap * shifted * shifted / (m * m * d * d) + gap * y * y / (d * d) - 1.0
    }

    /// The implicit equation evaluated at an in-plane point: `u` along the tilt direction,
    /// `v` across it, both measured from where the tool axis meets the plane.
    pub fn footprint_implicit(&self, u: f64, v: f64) -> f64 {
        self.ellipse_implicit(u / (1.0 + self.a * self.a).sqrt(), v)
    }
}

/// Projections `(A, B)` of the two axes onto the stroke normal, before taking the max.
fn projections(psi: f64, convention: WidthConvention) -> (f64, f64, f64, f64) {
    let (c, s, dc, ds) = match convention {
        WidthConvention::MajorAlongNormal | WidthConvention::Extent => (psi.cos(), psi.sin(), -psi.sin(), psi.cos()),
        WidthConvention::Swapped => (psi.sin(), psi.cos(), psi.cos(), -psi.sin()),
    };
    // (|c|, |s|, d|c|/dpsi, d|s|/dpsi)
    (c.abs(), s.abs(), c.signum() * dc, s.signum() * ds)
}

/// Deposited width: the larger of the two axis projections onto the stroke normal.
pub fn deposition_width(axes: EllipseAxes, psi: f64) -> f64 {
    deposition_width_with(axes, psi, WidthConvention::MajorAlongNormal)
}

pub fn deposition_width_with(axes: EllipseAxes, psi: f64, convention: WidthConvention) -> f64 {
    let (c, s, _, _) = projections(psi, convention);
    if convention == WidthConvention::Extent {
        return (axes.major * c).hypot(axes.minor * s);
    }
    (axes.major * c).max(axes.minor * s)
}

/// Log-sum-exp surrogate of [`deposition_width`] with temperature `kappa` (meters).
///
/// Bounded by `W <= W_kappa <= W + kappa·ln 2`.
pub fn smooth_deposition_width(axes: EllipseAxes, psi: f64, kappa: f64) -> f64 {
    smooth_width_grad(axes, psi, kappa, WidthConvention::MajorAlongNormal).value
}

/// Smoothed width together with its partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WidthGrad {
    pub value: f64,
    pub d_major: f64,
    pub d_minor: f64,
    pub d_psi: f64,
}

pub fn smooth_width_grad(axes: EllipseAxes, psi: f64, kappa: f64, convention: WidthConvention) -> WidthGrad {
    debug_assert!(kappa > 0.0);
    if convention == WidthConvention::Extent {
        return extent_grad(axes, psi);
    }
    let (c, s, dc, ds) = projections(psi, convention);
    let pa = axes.major * c;
    let pb = axes.minor * s;
    let hi = pa.max(pb);
    let gap = (pa - pb).abs() / kappa;
    let value = hi + kappa * (-gap).exp().ln_1p();
    // weight on the major projection
    let wa = 1.0 / (1.0 + ((pb - pa) / kappa).exp());
    let wb = 1.0 - wa;
    WidthGrad {
        value,
        d_major: wa * c,
        d_minor: wb * s,
        d_psi: wa * axes.major * dc + wb * axes.minor * ds,
    }
}

fn extent_grad(axes: EllipseAxes, psi: f64) -> WidthGrad {
    let (s, c) = psi.sin_cos();
    let value = (axes.major * c).hypot(axes.minor * s);
    if value == 0.0 {
        return WidthGrad {
            value,
            d_major: c.abs(),
            d_minor: s.abs(),
            d_psi: 0.0,
        };
    }
    WidthGrad {
        value,
        d_major: axes.major * c * c / value,
        d_minor: axes.minor * s * s / value,
        d_psi: (axes.minor * axes.minor - axes.major * axes.major) * s * c / value,
    }
}

/// Heading in `[0, pi/2]` whose exact width is closest to `target`; ties go to the
/// candidate nearest `prefer`.
pub fn heading_for_width(axes: EllipseAxes, target: f64, prefer: f64, convention: WidthConvention) -> f64 {
    let (big, small) = (axes.major, axes.minor);
    let half_pi = std::f64::consts::FRAC_PI_2;
    // phi measures the angle of the major-axis projection term: W = max(big·cos phi, small·sin phi)
    let to_psi = |phi: f64| match convention {
        WidthConvention::MajorAlongNormal | WidthConvention::Extent => phi,
        WidthConvention::Swapped => half_pi - phi,
    };
    if !(big > 0.0) {
        return prefer;
    }
    if (big - small).abs() <= 1e-15 * big {
        // circular footprint: every heading on the cos branch gives the same width
        return prefer;
    }
    if convention == WidthConvention::Extent {
        // monotone on [0, pi/2]: W² = big² − (big² − small²)·sin²
        let lo = big.min(small);
        let hi = big.max(small);
        let t = target.clamp(lo, hi);
        let s2 = ((big * big - t * t) / (big * big - small * small)).clamp(0.0, 1.0);
        return s2.sqrt().asin();
    }
    let phi_min = big.atan2(small);
    let w_min = big * small / big.hypot(small);
    if target >= big {
        return to_psi(0.0);
    }
    if target <= w_min {
        return to_psi(phi_min);
    }
    let mut candidates = vec![to_psi((target / big).acos())];
    if target <= small {
        candidates.push(to_psi((target / small).asin()));
    }
    candidates
        .into_iter()
        .min_by(|p, q| (p - prefer).abs().total_cmp(&(q - prefer).abs()))
        .unwrap_or(prefer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, LN_2, PI};

    fn paper_tip(gamma: f64) -> ToolTipState {
        ToolTipState::from_tilt_degrees(5.45, gamma, 1e-4, 0.0, 5e-3).unwrap()
    }

    #[test]
    fn perpendicular_tip_is_circular() {
        let ax = paper_tip(0.0).axes().unwrap();
        assert_eq!(ax.major, ax.minor);
        assert_relative_eq!(ax.major, 3.669724770642202e-5, max_relative = 1e-12);
    }

    #[test]
    fn tilted_tip_axes() {
        let ax = paper_tip(50.0).axes().unwrap();
        assert_relative_eq!(ax.major, 5.995776742236067e-5, max_relative = 1e-12);
        assert_relative_eq!(ax.minor, 3.760739240406624e-5, max_relative = 1e-12);
    }

    #[test]
    fn zero_offset_is_degenerate() {
        assert!(matches!(
            paper_tip(50.0).with_offset(0.0).axes(),
            Err(Error::DegenerateTip)
        ));
    }

    #[test]
    fn invalid_tips() {
        assert!(ToolTipState::new(1.0, 1.0, 1e-4, 0.0, 1.0).is_err());
        assert!(ToolTipState::new(5.0, 0.0, 2.0, 0.0, 1.0).is_err());
        assert!(ToolTipState::new(5.0, 0.0, 1e-4, -1.0, 1.0).is_err());
    }

    #[test]
    fn degrade_examples() {
        let tip = ToolTipState::new(5.45, 0.0, 1.0e-4, 0.02, 1e-3).unwrap();
        assert_eq!(tip.degrade(0.0, 1.0), tip);
        assert_eq!(tip.degrade(3.0, 0.0), tip);
        assert_relative_eq!(tip.degrade(1.5, 2e-4).d, 1.06e-4, max_relative = 1e-12);
        assert_eq!(tip.degrade(1e6, 1.0).d, 1e-3);
    }

    #[test]
    fn width_examples() {
        let ax = EllipseAxes {
            major: 5.996e-5,
            minor: 3.761e-5,
        };
        assert_eq!(deposition_width(ax, 0.0), ax.major);
        assert_relative_eq!(deposition_width(ax, FRAC_PI_2), ax.minor, max_relative = 1e-15);
        assert_relative_eq!(
            deposition_width(ax, FRAC_PI_4),
            5.996e-5 * 2f64.sqrt() / 2.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            deposition_width_with(ax, FRAC_PI_2, WidthConvention::Swapped),
            ax.major,
            max_relative = 1e-15
        );
    }

    #[test]
    fn smooth_width_examples() {
        let ax = EllipseAxes {
            major: 1e-4,
            minor: 1e-4,
        };
        let w = deposition_width(ax, FRAC_PI_4);
        let wk = smooth_deposition_width(ax, FRAC_PI_4, 1e-6);
        assert_relative_eq!(wk, w + 1e-6 * LN_2, max_relative = 1e-12);

        let ax = EllipseAxes {
            major: 1e-4,
            minor: 5e-5,
        };
        let wk = smooth_deposition_width(ax, 0.0, 1e-6);
        assert!((1e-4..=1e-4 + 6.94e-7).contains(&wk));
    }

    #[test]
    fn center_satisfies_implicit_equation() {
        let tip = paper_tip(50.0).with_offset(3e-4);
        let ax = tip.axes().unwrap();
        let c = tip.center_offset();
        // ends of both axes lie on the ellipse
        for (u, v) in [
            (c + ax.major / 2.0, 0.0),
            (c - ax.major / 2.0, 0.0),
            (c, ax.minor / 2.0),
            (c, -ax.minor / 2.0),
        ] {
            assert!(tip.footprint_implicit(u, v).abs() < 1e-12);
        }
        assert!(tip.footprint_implicit(c, 0.0) < 0.0);
    }

    #[test]
    fn heading_inversion() {
        let tip = paper_tip(50.0).with_offset(1.6e-3);
        let ax = tip.axes().unwrap();
        for target in [0.6e-3, 0.7e-3, 0.8e-3, 0.95e-3] {
            let psi = heading_for_width(ax, target, 0.0, WidthConvention::MajorAlongNormal);
            assert_relative_eq!(deposition_width(ax, psi), target, max_relative = 1e-12);
            let psi = heading_for_width(ax, target, 0.0, WidthConvention::Swapped);
            assert_relative_eq!(
                deposition_width_with(ax, psi, WidthConvention::Swapped),
                target,
                max_relative = 1e-12
            );
        }
        assert_eq!(heading_for_width(ax, 1.0, 0.3, WidthConvention::MajorAlongNormal), 0.0);
    }

    proptest! {
            #[test]
            fn axis_ratio_independent_of_offset(m in 0.5f64..10.0, frac in -0.95f64..0.95, d1 in 1e-5f64..1e-2, d2 in 1e-5f64..1e-2) {
                let tip = ToolTipState::new(m, frac * m, d1, 0.0, 1.0).unwrap();
                let a1 = tip.axes_at(d1);
                let a2 = tip.axes_at(d2);
                prop_assert!((a1.major / a1.minor - a2.major / a2.minor).abs() <= 1e-12 * a1.major / a1.minor);
                prop_assert!(a1.major >= a1.minor);
                if frac != 0.0 {
                    prop_assert!(a1.major > a1.minor);
                }
            }

            #[test]
            fn wear_is_monotone_and_additive(d in 0.0f64..1e-3, k in 0.0f64..0.1, f in 0.0f64..5.0, l1 in 0.0f64..1e-3, l2 in 0.0f64..1e-3) {
                let tip = ToolTipState::new(5.45, 0.5, d, k, 1.0).unwrap();
                let once = tip.degrade(f, l1 + l2);
                let twice = tip.degrade(f, l1).degrade(f, l2);
                prop_assert!(once.d >= tip.d);
                prop_assert!((once.d - twice.d).abs() <= 1e-15);
            }

            #[test]
            fn width_period_and_parity(major in 1e-5f64..1e-3, ratio in 0.1f64..1.0, psi in -10.0f64..10.0) {
                let ax = EllipseAxes { major, minor: major * ratio };
                let w = deposition_width(ax, psi);
                prop_assert!((w - deposition_width(ax, psi + PI)).abs() <= 1e-12 * major);
                prop_assert!((w - deposition_width(ax, -psi)).abs() <= 1e-12 * major);
            }

            #[test]
            fn smooth_width_bounds(major in 1e-5f64..1e-3, ratio in 0.1f64..1.0, psi in -4.0f64..4.0, kappa in 1e-8f64..1e-5) {
                let ax = EllipseAxes { major, minor: major * ratio };
                let gap = smooth_deposition_width(ax, psi, kappa) - deposition_width(ax, psi);
                prop_assert!(gap >= -1e-18 && gap <= kappa * LN_2 * (1.0 + 1e-12));
            }

            #[test]
            fn smooth_width_psi_derivative(major in 1e-4f64..1e-3, ratio in 0.2f64..0.9, psi in 0.05f64..1.5) {
                let ax = EllipseAxes { major, minor: major * ratio };
                let kappa = 1e-5;
                let h = 1e-6;
                let g = smooth_width_grad(ax, psi, kappa, WidthConvention::MajorAlongNormal);
                let fd = (smooth_deposition_width(ax, psi + h, kappa) - smooth_deposition_width(ax, psi - h, kappa)) / (2.0 * h);
                prop_assert!((g.d_psi - fd).abs() <= 1e-5 * (fd.abs() + major));
            }

            #[test]
            fn extent_is_ellipse_support_width(major in 1e-5f64..1e-3, ratio in 0.1f64..1.0, psi in -3.2f64..3.2) {
                let ax = EllipseAxes { major, minor: major * ratio };
                // brute-force support function: boundary point (a cos t, b sin t), normal at angle psi from the major axis
                let (a, b) = (major / 2.0, major * ratio / 2.0);
                let mut hi = f64::MIN;
                for k in 0..20000 {
                    let t = k as f64 * std::f64::consts::TAU / 20000.0;
                    hi = hi.max(a * t.cos() * psi.cos() + b * t.sin() * psi.sin());
                }
                let w = deposition_width_with(ax, psi, WidthConvention::Extent);
                prop_assert!((w - 2.0 * hi).abs() <= 1e-6 * major);
                prop_assert!(w >= deposition_width(ax, psi) - 1e-15);
                let g = smooth_width_grad(ax, psi, 1e-6, WidthConvention::Extent);
                let h = 1e-6;
                let fd = (deposition_width_with(ax, psi + h, WidthConvention::Extent)
                    - deposition_width_with(ax, psi - h, WidthConvention::Extent)) / (2.0 * h);
                prop_assert!((g.d_psi - fd).abs() <= 1e-5 * major);
            }

            #[test]
            fn extent_heading_inverts(major in 1e-4f64..1e-3, ratio in 0.1f64..0.95, frac in 0.0f64..1.0) {
                let ax = EllipseAxes { major, minor: major * ratio };
                let target = ax.minor + frac * (ax.major - ax.minor);
                let psi = heading_for_width(ax, target, 0.0, WidthConvention::Extent);
                prop_assert!((deposition_width_with(ax, psi, WidthConvention::Extent) - target).abs() <= 1e-9 * major);
            }
    }
}
