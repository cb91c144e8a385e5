//! Single-integrator end-effector model with axis-aligned state/input boxes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// End-effector pose: position in meters, heading `psi` in radians.
///
/// `psi` is the angle between the footprint's minor axis and the stroke tangent.
/// It is never wrapped; bounds constrain it instead.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EndEffectorState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub psi: f64,
}

/// Velocity command applied for one sampling interval.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InputSample {
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
    pub wpsi: f64,
}

impl EndEffectorState {
    pub fn new(x: f64, y: f64, z: f64, psi: f64) -> Self {
        Self { x, y, z, psi }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.z, self.psi]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

impl InputSample {
    pub fn new(vx: f64, vy: f64, vz: f64, wpsi: f64) -> Self {
        Self { vx, vy, vz, wpsi }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.vx, self.vy, self.vz, self.wpsi]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

/// One step of `x(t+1) = x(t) + dt·u(t)`.
pub fn step(state: EndEffectorState, input: InputSample, dt: f64) -> EndEffectorState {
    EndEffectorState {
        x: state.x + dt * input.vx,
        y: state.y + dt * input.vy,
        z: state.z + dt * input.vz,
        psi: state.psi + dt * input.wpsi,
    }
}

/// Rolls `inputs` forward from `initial`; returns `inputs.len() + 1` states.
pub fn simulate(initial: EndEffectorState, inputs: &[InputSample], dt: f64) -> Vec<EndEffectorState> {
    let mut states = Vec::with_capacity(inputs.len() + 1);
    states.push(initial);
    let mut s = initial;
    for &u in inputs {
        s = step(s, u, dt);
        states.push(s);
    }
    states
}

/// Closed boxes on the state `(x, y, z, psi)` and input `(vx, vy, vz, wpsi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxConstraints {
    pub state_lower: [f64; 4],
    pub state_upper: [f64; 4],
    pub input_lower: [f64; 4],
    pub input_upper: [f64; 4],
}

impl BoxConstraints {
    pub fn new(
        state_lower: [f64; 4],
        state_upper: [f64; 4],
        input_lower: [f64; 4],
        input_upper: [f64; 4],
    ) -> Result<Self> {
        let c = Self {
            state_lower,
            state_upper,
            input_lower,
            input_upper,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..4 {
            if !(self.state_lower[i] <= self.state_upper[i]) {
                return Err(Error::InvalidParameter(format!("state bound {i}: lower > upper")));
            }
            if !(self.input_lower[i] <= self.input_upper[i]) {
                return Err(Error::InvalidParameter(format!("input bound {i}: lower > upper")));
            }
        }
        Ok(())
    }

    pub fn state_ok(&self, state: &EndEffectorState) -> bool {
        within(&state.to_array(), &self.state_lower, &self.state_upper)
    }

    pub fn input_ok(&self, input: &InputSample) -> bool {
        within(&input.to_array(), &self.input_lower, &self.input_upper)
    }
}

fn within(v: &[f64; 4], lo: &[f64; 4], hi: &[f64; 4]) -> bool {
    v.iter().zip(lo).zip(hi).all(|((v, lo), hi)| lo <= v && v <= hi)
}

pub fn check_feasible(state: &EndEffectorState, input: &InputSample, constraints: &BoxConstraints) -> bool {
    constraints.state_ok(state) && constraints.input_ok(input)
}
