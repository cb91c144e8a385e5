//! Forward chain from end-effector states to force, wear and deposited width.

use crate::force::ForceModelParams;
use crate::kinematics::EndEffectorState;
use crate::tip::{deposition_width_with, ToolTipState, WidthConvention};

/// Per-sample outputs of the chain along a trajectory of `N + 1` states.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChainTrace {
    /// Plane offset `d(t)` at each sample.
    pub offsets: Vec<f64>,
    /// Contact force `F(t)`; zero when not touching the surface.
    pub forces: Vec<f64>,
    /// Exact deposited width `W(t)`; zero when not touching the surface.
    pub widths: Vec<f64>,
    pub contact: Vec<bool>,
}

/// Evaluates force, wear and width along `states`, with `surface_heights[t]` the contact
/// height used at sample `t`.
///
/// The tool touches the surface when `z <= z_ref`.
pub fn forward_chain(
    states: &[EndEffectorState],
    surface_heights: &[f64],
    tip0: &ToolTipState,
    params: &ForceModelParams,
    convention: WidthConvention,
) -> ChainTrace {
    assert_eq!(states.len(), surface_heights.len());
    let n = states.len();
    let mut trace = ChainTrace {
        offsets: Vec::with_capacity(n),
        forces: Vec::with_capacity(n),
        widths: Vec::with_capacity(n),
        contact: Vec::with_capacity(n),
    };
    let mut tip = *tip0;
    for (t, (s, &zr)) in states.iter().zip(surface_heights).enumerate() {
        let touching = s.z <= zr;
        let force = if touching { params.force(s.z, zr) } else { 0.0 };
        let width = if touching {
            deposition_width_with(tip.axes_at(tip.d), s.psi, convention)
        } else {
            0.0
        };
        trace.offsets.push(tip.d);
        trace.forces.push(force);
        trace.widths.push(width);
        trace.contact.push(touching);
        if let Some(next) = states.get(t + 1) {
            let step_len = (next.x - s.x).hypot(next.y - s.y);
            tip = tip.degrade(force, step_len);
        }
    }
    trace
}
