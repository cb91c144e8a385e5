//! Batch open-loop stroke planning.
//!
//! The whole input sequence is optimized at once (single shooting) against a quadratic
//! tracking cost on `s(t) = [x, y, W]`. The width inside the objective uses the
//! log-sum-exp surrogate so the cost is differentiable in the heading; reported widths
//! and costs use the exact max. Box constraints are enforced by a forward projection
//! after every step, so every returned plan is feasible by construction.

use std::path::Path;

use nalgebra::Matrix3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{forward_chain, ChainTrace};
use crate::error::{Error, Result};
use crate::force::{ForceModelParams, SurfaceMap};
use crate::kinematics::{simulate, BoxConstraints, EndEffectorState, InputSample};
use crate::stroke::ReferenceStroke;
use crate::tip::{heading_for_width, smooth_width_grad, ToolTipState, WidthConvention};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Weight on `[x − x_ref, y − y_ref, W − W_ref]`; symmetric positive definite.
    pub q: [[f64; 3]; 3],
    /// Smoothing temperature of the width surrogate, meters.
    pub kappa_m: f64,
    pub max_iterations: usize,
    /// Stop once the relative cost decrease of an accepted step falls below this.
    pub step_tolerance: f64,
    /// Number of optimized starts; start 0 is the unperturbed warm start.
    pub restarts: usize,
    pub seed: u64,
    /// Penetration depth held by the warm start, meters.
    pub nominal_depth_m: f64,
    /// Std-dev of warm-start perturbations, as a fraction of each input's half range.
    pub perturbation: f64,
    pub width_convention: WidthConvention,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            q: [[1e6, 0.0, 0.0], [0.0, 1e6, 0.0], [0.0, 0.0, 1e8]],
            kappa_m: 1e-6,
            max_iterations: 300,
            step_tolerance: 1e-10,
            restarts: 3,
            seed: 0,
            nominal_depth_m: 5e-4,
            perturbation: 0.1,
            width_convention: WidthConvention::MajorAlongNormal,
        }
    }
}

impl PlannerConfig {
    pub fn q_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.q[i][j])
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.q_matrix();
        if (q - q.transpose()).abs().max() > 1e-12 * q.abs().max() {
            return Err(Error::InvalidParameter("Q must be symmetric".into()));
        }
        if q.cholesky().is_none() {
            return Err(Error::InvalidParameter("Q must be positive definite".into()));
        }
        if !(self.kappa_m > 0.0) {
            return Err(Error::InvalidParameter("kappa must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be at least 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidParameter("restarts must be at least 1".into()));
        }
        if !(self.nominal_depth_m >= 0.0) || !(self.perturbation >= 0.0) {
            return Err(Error::InvalidParameter(
                "nominal depth and perturbation must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Result of [`rollout`]: states plus the force/wear/width chain along them.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub states: Vec<EndEffectorState>,
    pub tips: Vec<ToolTipState>,
    pub forces: Vec<f64>,
    pub widths: Vec<f64>,
}

/// Contact heights the planner uses: the surface sampled along the reference path.
pub fn reference_heights(stroke: &ReferenceStroke, surface: &SurfaceMap) -> Result<Vec<f64>> {
    stroke.samples().iter().map(|s| surface.height_at(s.x, s.y)).collect()
}

/// Forward-simulates kinematics, force, wear and exact width for `inputs`.
///
/// `z_refs` holds one contact height per state (`inputs.len() + 1`).
pub fn rollout(
    initial: EndEffectorState,
    tip0: &ToolTipState,
    inputs: &[InputSample],
    params: &ForceModelParams,
    z_refs: &[f64],
    dt: f64,
    convention: WidthConvention,
) -> Result<Rollout> {
    if z_refs.len() != inputs.len() + 1 {
        return Err(Error::LengthMismatch {
            expected: inputs.len() + 1,
            actual: z_refs.len(),
        });
    }
    let states = simulate(initial, inputs, dt);
    let ChainTrace {
        offsets,
        forces,
        widths,
        ..
    } = forward_chain(&states, z_refs, tip0, params, convention);
    let tips = offsets.iter().map(|&d| tip0.with_offset(d)).collect();
    Ok(Rollout {
        states,
        tips,
        forces,
        widths,
    })
}

/// Quadratic tracking cost `Σ (s − s_ref)ᵀ Q (s − s_ref)` over all samples.
pub fn cost(states: &[EndEffectorState], widths: &[f64], stroke: &ReferenceStroke, q: &Matrix3<f64>) -> Result<f64> {
    let n = stroke.samples().len();
    if states.len() != n || widths.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: states.len().min(widths.len()),
        });
    }
    Ok(states
        .iter()
        .zip(widths)
        .zip(stroke.samples())
        .map(|((s, &w), r)| {
            let e = nalgebra::Vector3::new(s.x - r.x, s.y - r.y, w - r.width);
            e.dot(&(q * e))
        })
        .sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub dt: f64,
    pub inputs: Vec<InputSample>,
    pub predicted_states: Vec<EndEffectorState>,
    pub predicted_widths: Vec<f64>,
    pub predicted_offsets: Vec<f64>,
    pub predicted_forces: Vec<f64>,
    /// Exact tracking cost of the prediction.
    pub predicted_cost: f64,
    /// Exact tracking cost of the warm start, for reference.
    pub warm_start_cost: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct PlanRow {
    t: usize,
    vx: Option<f64>,
    vy: Option<f64>,
    vz: Option<f64>,
    wpsi: Option<f64>,
    x: f64,
    y: f64,
    z: f64,
    psi: f64,
    w_pred: f64,
}

impl Plan {
    pub fn initial_state(&self) -> EndEffectorState {
        self.predicted_states[0]
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for (t, (s, &wp)) in self.predicted_states.iter().zip(&self.predicted_widths).enumerate() {
            let u = self.inputs.get(t);
            w.serialize(PlanRow {
                t,
                vx: u.map(|u| u.vx),
                vy: u.map(|u| u.vy),
                vz: u.map(|u| u.vz),
                wpsi: u.map(|u| u.wpsi),
                x: s.x,
                y: s.y,
                z: s.z,
                psi: s.psi,
                w_pred: wp,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a plan back. Offsets, forces and costs are not stored and come back empty/NaN.
    pub fn read_csv(path: &Path, dt: f64) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let rows = r.deserialize().collect::<std::result::Result<Vec<PlanRow>, _>>()?;
        let bad = |reason: &str| Error::Format {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        if rows.is_empty() {
            return Err(bad("empty plan"));
        }
        let mut inputs = Vec::with_capacity(rows.len() - 1);
        for row in &rows[..rows.len() - 1] {
            match (row.vx, row.vy, row.vz, row.wpsi) {
                (Some(vx), Some(vy), Some(vz), Some(wpsi)) => inputs.push(InputSample::new(vx, vy, vz, wpsi)),
                _ => return Err(bad("missing input on a non-terminal row")),
            }
        }
        Ok(Self {
            dt,
            inputs,
            predicted_states: rows
                .iter()
                .map(|r| EndEffectorState::new(r.x, r.y, r.z, r.psi))
                .collect(),
            predicted_widths: rows.iter().map(|r| r.w_pred).collect(),
            predicted_offsets: Vec::new(),
            predicted_forces: Vec::new(),
            predicted_cost: f64::NAN,
            warm_start_cost: f64::NAN,
        })
    }
}

/// Everything the objective needs, fixed for one planning call.
struct Problem<'a> {
    stroke: &'a ReferenceStroke,
    initial: EndEffectorState,
    tip0: ToolTipState,
    params: ForceModelParams,
    z_refs: Vec<f64>,
    constraints: BoxConstraints,
    q: Matrix3<f64>,
    kappa: f64,
    convention: WidthConvention,
}

impl Problem<'_> {
    fn horizon(&self) -> usize {
        self.stroke.horizon()
    }

    fn dt(&self) -> f64 {
        self.stroke.dt()
    }

    /// Clamps inputs into the input box, then walks forward and shortens any input that
    /// would carry the state outside the state box. Afterwards every input and every
    /// state reached by exact re-simulation is inside its box.
    fn project(&self, u: &mut [f64]) {
        let dt = self.dt();
        let c = &self.constraints;
        let mut x = self.initial.to_array();
        for chunk in u.chunks_exact_mut(4) {
            for i in 0..4 {
                let mut v = chunk[i].clamp(c.input_lower[i], c.input_upper[i]);
                let (lo, hi) = (c.state_lower[i], c.state_upper[i]);
                let mut next = x[i] + dt * v;
                if next > hi || next < lo {
                    v = (next.clamp(lo, hi) - x[i]) / dt;
                    next = x[i] + dt * v;
                    // rounding can leave the state one ulp outside; walk the input back
                    while next > hi {
                        v = v.next_down();
                        next = x[i] + dt * v;
                    }
                    while next < lo {
                        v = v.next_up();
                        next = x[i] + dt * v;
                    }
                }
                chunk[i] = v;
                x[i] = next;
            }
        }
    }

    fn to_inputs(u: &[f64]) -> Vec<InputSample> {
        u.chunks_exact(4)
            .map(|c| InputSample::new(c[0], c[1], c[2], c[3]))
            .collect()
    }

    fn exact_rollout(&self, u: &[f64]) -> Rollout {
        rollout(
            self.initial,
            &self.tip0,
            &Self::to_inputs(u),
            &self.params,
            &self.z_refs,
            self.dt(),
            self.convention,
        )
        .expect("heights sized to the stroke")
    }

    fn exact_cost(&self, u: &[f64]) -> f64 {
        let r = self.exact_rollout(u);
        cost(&r.states, &r.widths, self.stroke, &self.q).expect("rollout sized to the stroke")
    }

    /// Smoothed objective and its gradient with respect to the flattened inputs.
    fn objective_grad(&self, u: &[f64]) -> (f64, Vec<f64>) {
        let n = self.horizon();
        let dt = self.dt();
        let tip = &self.tip0;
        let (fa, fb) = tip.axis_factors();
        let theta = self.params.theta;
        let refs = self.stroke.samples();

        // forward pass
        let mut x = Vec::with_capacity(n + 1);
        let mut d = Vec::with_capacity(n + 1);
        let mut force = vec![0.0; n];
        let mut dforce_dz = vec![0.0; n];
        let mut step_len = vec![0.0; n];
        let mut passes = vec![false; n];
        x.push(self.initial.to_array());
        d.push(tip.d);
        for t in 0..n {
            let s = x[t];
            let ut = &u[4 * t..4 * t + 4];
            let zr = self.z_refs[t];
            if s[2] <= zr {
                let raw = theta * (s[2] - zr) + self.params.theta0;
                if raw > 0.0 {
                    force[t] = raw;
                    dforce_dz[t] = theta;
                }
            }
            step_len[t] = (dt * ut[0]).hypot(dt * ut[1]);
            let grown = d[t] + tip.k_d * force[t] * step_len[t];
            passes[t] = grown < tip.d_max;
            d.push(grown.min(tip.d_max));
            x.push([
                s[0] + dt * ut[0],
                s[1] + dt * ut[1],
                s[2] + dt * ut[2],
                s[3] + dt * ut[3],
            ]);
        }

        // cost and backward pass
        let mut value = 0.0;
        let mut grad = vec![0.0; 4 * n];
        let mut lam_x = [0.0; 4];
        let mut lam_d = 0.0;
        for t in (0..=n).rev() {
            let s = x[t];
            let touching = s[2] <= self.z_refs[t];
            let (w, dw_dd, dw_dpsi) = if touching {
                let g = smooth_width_grad(tip.axes_at(d[t]), s[3], self.kappa, self.convention);
                (g.value, g.d_major * fa + g.d_minor * fb, g.d_psi)
            } else {
                (0.0, 0.0, 0.0)
            };
            let e = nalgebra::Vector3::new(s[0] - refs[t].x, s[1] - refs[t].y, w - refs[t].width);
            let qe = self.q * e;
            value += e.dot(&qe);
            let ge = 2.0 * qe;
            let gx = [ge[0], ge[1], 0.0, ge[2] * dw_dpsi];
            let gd = ge[2] * dw_dd;

            if t == n {
                lam_x = gx;
                lam_d = gd;
                continue;
            }
            // lam_x, lam_d currently belong to sample t + 1
            let ut = &u[4 * t..4 * t + 4];
            let wear_weight = if passes[t] { lam_d * tip.k_d } else { 0.0 };
            for i in 0..4 {
                grad[4 * t + i] = dt * lam_x[i];
            }
            if step_len[t] > 0.0 && wear_weight != 0.0 {
                let speed = ut[0].hypot(ut[1]);
                grad[4 * t] += wear_weight * force[t] * dt * ut[0] / speed;
                grad[4 * t + 1] += wear_weight * force[t] * dt * ut[1] / speed;
            }
            let mut next_lam_x = gx;
            for i in 0..4 {
                next_lam_x[i] += lam_x[i];
            }
            next_lam_x[2] += wear_weight * step_len[t] * dforce_dz[t];
            lam_x = next_lam_x;
            lam_d = gd + if passes[t] { lam_d } else { 0.0 };
        }
        (value, grad)
    }

    fn smoothed_value(&self, u: &[f64]) -> f64 {
        self.objective_grad(u).0
    }

    /// Kinematic warm start: track the reference path exactly, hold the nominal depth,
    /// and steer the heading toward the reference width under the predicted wear.
    fn warm_start(&self, nominal_depth: f64) -> Vec<f64> {
        let n = self.horizon();
        let dt = self.dt();
        let refs = self.stroke.samples();
        let mut u = vec![0.0; 4 * n];
        let mut x = self.initial.to_array();
        for t in 0..n {
            u[4 * t] = (refs[t + 1].x - x[0]) / dt;
            u[4 * t + 1] = (refs[t + 1].y - x[1]) / dt;
            u[4 * t + 2] = (self.z_refs[t + 1] - nominal_depth - x[2]) / dt;
            x = [
                x[0] + dt * u[4 * t],
                x[1] + dt * u[4 * t + 1],
                x[2] + dt * u[4 * t + 2],
                x[3],
            ];
        }
        self.project(&mut u);

        // heading does not feed back into wear, so one rollout fixes the offsets
        let offsets = self.exact_rollout(&u).tips.iter().map(|t| t.d).collect::<Vec<_>>();
        let mut psi = self.initial.psi;
        for t in 0..n {
            let target = heading_for_width(
                self.tip0.axes_at(offsets[t + 1]),
                refs[t + 1].width,
                psi,
                self.convention,
            );
            u[4 * t + 3] = (target - psi) / dt;
            psi += dt * u[4 * t + 3];
        }
        self.project(&mut u);
        u
    }

    /// Half range of each input, used to scale the search space.
    fn input_scales(&self) -> [f64; 4] {
        let c = &self.constraints;
        std::array::from_fn(|i| {
            let span = c.input_upper[i] - c.input_lower[i];
            if span.is_finite() {
                span / 2.0
            } else {
                1.0
            }
        })
    }

    fn perturb(&self, u: &mut [f64], scale: f64, rng: &mut ChaCha8Rng) {
        let s = self.input_scales();
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        for chunk in u.chunks_exact_mut(4) {
            // perturb depth and heading rates; the path itself stays on the reference
            for i in [2, 3] {
                chunk[i] += scale * s[i] * unit.sample(rng);
            }
        }
        self.project(u);
    }

    /// Spectral projected gradient with Armijo backtracking, in input-scaled coordinates.
    fn descend(&self, mut u: Vec<f64>, max_iterations: usize, tolerance: f64) -> Vec<f64> {
        if u.is_empty() {
            return u;
        }
        let scales = self.input_scales();
        let scale_of = |k: usize| scales[k % 4];
        let (mut f, mut g) = self.objective_grad(&u);
        // gradient in scaled coordinates: dJ/dv = s·dJ/du
        let scaled = |g: &[f64]| g.iter().enumerate().map(|(k, gk)| gk * scale_of(k)).collect::<Vec<_>>();
        let mut gs = scaled(&g);
        let gmax = gs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gmax == 0.0 {
            return u;
        }
        let mut step = 1e-2 / gmax;
        for _ in 0..max_iterations {
            let mut accepted = None;
            let mut trial_step = step;
            for _ in 0..40 {
                let mut cand: Vec<f64> = u
                    .iter()
                    .enumerate()
                    .map(|(k, &uk)| uk - trial_step * scale_of(k) * gs[k])
                    .collect();
                self.project(&mut cand);
                // directional term of the Armijo test, in scaled coordinates
                let decrease: f64 = cand
                    .iter()
                    .zip(&u)
                    .enumerate()
                    .map(|(k, (c, o))| {
                        let s = scale_of(k);
                        if s > 0.0 {
                            gs[k] * (c - o) / s
                        } else {
                            0.0
                        }
                    })
                    .sum();
                if decrease >= 0.0 {
                    break;
                }
                let fc = self.smoothed_value(&cand);
                if fc <= f + 1e-4 * decrease {
                    accepted = Some((cand, fc));
                    break;
                }
                trial_step *= 0.25;
            }
            let Some((cand, fc)) = accepted else { break };
            let (_, gc) = self.objective_grad(&cand);
            let gcs = scaled(&gc);
            // Barzilai-Borwein step from the scaled displacement and gradient change
            let (mut ss, mut sy) = (0.0, 0.0);
            for k in 0..u.len() {
                let sk = scale_of(k);
                if sk > 0.0 {
                    let dv = (cand[k] - u[k]) / sk;
                    ss += dv * dv;
                    sy += dv * (gcs[k] - gs[k]);
                }
            }
            step = if sy > 0.0 {
                (ss / sy).clamp(1e-20, 1e20)
            } else {
                trial_step * 4.0
            };
            let rel = (f - fc) / f.abs().max(f64::MIN_POSITIVE);
            u = cand;
            f = fc;
            g = gc;
            gs = gcs;
            if rel < tolerance {
                break;
            }
        }
        let _ = g;
        u
    }
}

/// Plans the full input sequence for one stroke.
///
/// Runs `cfg.restarts` descents (start 0 from the warm start, the rest from seeded
/// perturbations of it) and returns the lowest exact cost among them and the warm start
/// itself; ties go to the earliest candidate.
#[allow(clippy::too_many_arguments)]
pub fn plan_stroke(
    stroke: &ReferenceStroke,
    initial: EndEffectorState,
    tip0: &ToolTipState,
    params: &ForceModelParams,
    surface: &SurfaceMap,
    constraints: &BoxConstraints,
    cfg: &PlannerConfig,
) -> Result<Plan> {
    let z_refs = reference_heights(stroke, surface)?;
    plan_stroke_with_heights(stroke, initial, tip0, params, z_refs, constraints, cfg)
}

/// [`plan_stroke`] with contact heights supplied directly, one per stroke sample.
pub fn plan_stroke_with_heights(
    stroke: &ReferenceStroke,
    initial: EndEffectorState,
    tip0: &ToolTipState,
    params: &ForceModelParams,
    z_refs: Vec<f64>,
    constraints: &BoxConstraints,
    cfg: &PlannerConfig,
) -> Result<Plan> {
    cfg.validate()?;
    constraints.validate()?;
    tip0.validate()?;
    if z_refs.len() != stroke.samples().len() {
        return Err(Error::LengthMismatch {
            expected: stroke.samples().len(),
            actual: z_refs.len(),
        });
    }
    if !initial.is_finite() || !constraints.state_ok(&initial) {
        return Err(Error::InfeasibleStart);
    }
    let problem = Problem {
        stroke,
        initial,
        tip0: *tip0,
        params: *params,
        z_refs,
        constraints: *constraints,
        q: cfg.q_matrix(),
        kappa: cfg.kappa_m,
        convention: cfg.width_convention,
    };

    let warm = problem.warm_start(cfg.nominal_depth_m);
    let warm_cost = problem.exact_cost(&warm);

    let runs: Vec<(Vec<f64>, f64)> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut start = warm.clone();
            if r > 0 {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(r as u64));
                problem.perturb(&mut start, cfg.perturbation, &mut rng);
            }
            let u = problem.descend(start, cfg.max_iterations, cfg.step_tolerance);
            let c = problem.exact_cost(&u);
            (u, c)
        })
        .collect();

    let mut best = (warm, warm_cost);
    for (u, c) in runs {
        if c < best.1 {
            best = (u, c);
        }
    }
    let (u, best_cost) = best;
    let r = problem.exact_rollout(&u);
    Ok(Plan {
        dt: stroke.dt(),
        inputs: Problem::to_inputs(&u),
        predicted_offsets: r.tips.iter().map(|t| t.d).collect(),
        predicted_states: r.states,
        predicted_widths: r.widths,
        predicted_forces: r.forces,
        predicted_cost: best_cost,
        warm_start_cost: warm_cost,
    })
}

/// Smoothed objective and its adjoint gradient for a given input sequence.
///
/// Exposed for gradient verification; `inputs` are used as given (not projected).
#[allow(clippy::too_many_arguments)]
pub fn smoothed_objective(
    stroke: &ReferenceStroke,
    initial: EndEffectorState,
    tip0: &ToolTipState,
    params: &ForceModelParams,
    z_refs: Vec<f64>,
    inputs: &[InputSample],
    cfg: &PlannerConfig,
) -> Result<(f64, Vec<f64>)> {
    if inputs.len() != stroke.horizon() {
        return Err(Error::LengthMismatch {
            expected: stroke.horizon(),
            actual: inputs.len(),
        });
    }
    if z_refs.len() != stroke.samples().len() {
        return Err(Error::LengthMismatch {
            expected: stroke.samples().len(),
            actual: z_refs.len(),
        });
    }
    let unbounded = BoxConstraints {
        state_lower: [f64::NEG_INFINITY; 4],
        state_upper: [f64::INFINITY; 4],
        input_lower: [f64::NEG_INFINITY; 4],
        input_upper: [f64::INFINITY; 4],
    };
    let problem = Problem {
        stroke,
        initial,
        tip0: *tip0,
        params: *params,
        z_refs,
        constraints: unbounded,
        q: cfg.q_matrix(),
        kappa: cfg.kappa_m,
        convention: cfg.width_convention,
    };
    let u: Vec<f64> = inputs.iter().flat_map(|i| i.to_array()).collect();
    Ok(problem.objective_grad(&u))
}
