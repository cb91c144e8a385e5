//! End-to-end workflow: calibrate the force model, then repeatedly plan, execute on the
//! simulated ground truth, measure and refit; compare an untilted and a tilted tool.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::canvas::{execute, Canvas, CanvasGeometry, Execution, GroundTruth};
use crate::chain::forward_chain;
use crate::error::{Error, Result};
use crate::force::{
    fit_degradation_segments, fit_force, force_residual_rms, sweep_calibration, CalibrationRow, CalibrationSet,
    DegradationFitOptions, DegradationSegment, ForceModelParams, SurfaceMap,
};
use crate::kinematics::{BoxConstraints, EndEffectorState};
use crate::planner::{plan_stroke, Plan, PlannerConfig};
use crate::stroke::{l_stroke, LStrokeSpec, ReferenceStroke};
use crate::tip::{deposition_width_with, ToolTipState, WidthConvention};
use crate::vision::{error_metric, threshold, width_profile, WidthProfile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrokeSpec {
    LStroke(LStrokeSpec),
    /// `x_m,y_m,w_m` CSV; relative paths resolve against the config file's directory.
    Csv {
        path: PathBuf,
    },
}

impl Default for StrokeSpec {
    fn default() -> Self {
        StrokeSpec::LStroke(LStrokeSpec::default())
    }
}

/// One tool configuration; the comparison runs two of these on the same ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArmConfig {
    pub name: String,
    pub tilt_deg: f64,
    pub cone_slope: f64,
    pub d0_m: f64,
    pub d_max_m: f64,
    /// Initial wear-gain estimate the planner starts from, 1/N.
    pub kd_estimate: f64,
    pub initial_heading_deg: f64,
    /// Pin the heading rate to zero.
    pub lock_heading: bool,
}

impl Default for ArmConfig {
    fn default() -> Self {
        Self {
            name: "tilted".into(),
            tilt_deg: 50.0,
            cone_slope: 5.45,
            d0_m: 1e-4,
            d_max_m: 5e-3,
            kd_estimate: 0.0,
            initial_heading_deg: 0.0,
            lock_heading: false,
        }
    }
}

impl ArmConfig {
    pub fn baseline() -> Self {
        Self {
            name: "baseline".into(),
            tilt_deg: 0.0,
            lock_heading: true,
            ..Self::default()
        }
    }

    pub fn tip(&self, d: f64, k_d: f64) -> Result<ToolTipState> {
        ToolTipState::from_tilt_degrees(self.cone_slope, self.tilt_deg, d, k_d, self.d_max_m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurfaceSpec {
    pub origin_m: (f64, f64),
    pub spacing_m: f64,
    pub nx: usize,
    pub ny: usize,
    pub height_m: f64,
    /// Height gradient, m/m.
    pub slope_x: f64,
    pub slope_y: f64,
}

impl Default for SurfaceSpec {
    fn default() -> Self {
        Self {
            origin_m: (-0.01, -0.02),
            spacing_m: 1e-3,
            nx: 31,
            ny: 31,
            height_m: 0.0,
            slope_x: 0.0,
            slope_y: 0.0,
        }
    }
}

impl SurfaceSpec {
    pub fn build(&self) -> Result<SurfaceMap> {
        let (ox, oy) = self.origin_m;
        SurfaceMap::from_fn(self.origin_m, self.spacing_m, self.nx, self.ny, |x, y| {
            self.height_m + self.slope_x * (x - ox) + self.slope_y * (y - oy)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruthSpec {
    pub theta: f64,
    pub theta0: f64,
    pub quadratic: f64,
    pub noise_sd: f64,
    pub k_d: f64,
    pub surface: SurfaceSpec,
}

impl Default for TruthSpec {
    fn default() -> Self {
        Self {
            theta: -800.0,
            theta0: 0.05,
            quadratic: 0.0,
            noise_sd: 0.0,
            k_d: 0.02,
            surface: SurfaceSpec::default(),
        }
    }
}

impl TruthSpec {
    pub fn ground_truth(&self, seed: u64) -> Result<GroundTruth> {
        Ok(GroundTruth {
            theta: self.theta,
            theta0: self.theta0,
            quadratic: self.quadratic,
            noise_sd: self.noise_sd,
            k_d: self.k_d,
            surface: self.surface.build()?,
            seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationSpec {
    /// Peak press depths of the sinusoidal sweeps, meters.
    pub depths_m: Vec<f64>,
    pub samples_per_depth: usize,
    pub noise_sd: f64,
}

impl Default for CalibrationSpec {
    fn default() -> Self {
        Self {
            depths_m: vec![5e-4, 1e-3, 1.5e-3, 2e-3, 2.5e-3],
            samples_per_depth: 60,
            noise_sd: 0.0,
        }
    }
}

/// Box constraints in config units (meters, degrees).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstraintSpec {
    pub x_m: [f64; 2],
    pub y_m: [f64; 2],
    pub z_m: [f64; 2],
    pub psi_deg: [f64; 2],
    pub vx_m_s: [f64; 2],
    pub vy_m_s: [f64; 2],
    pub vz_m_s: [f64; 2],
    pub omega_deg_s: [f64; 2],
}

impl Default for ConstraintSpec {
    fn default() -> Self {
        Self {
            x_m: [-0.005, 0.015],
            y_m: [-0.015, 0.005],
            z_m: [-2.5e-3, -2e-5],
            psi_deg: [-100.0, 100.0],
            vx_m_s: [-0.05, 0.05],
            vy_m_s: [-0.05, 0.05],
            vz_m_s: [-0.5, 0.5],
            omega_deg_s: [-3000.0, 3000.0],
        }
    }
}

impl ConstraintSpec {
    pub fn boxes(&self, lock_heading: bool) -> Result<BoxConstraints> {
        let omega = if lock_heading {
            [0.0, 0.0]
        } else {
            [self.omega_deg_s[0].to_radians(), self.omega_deg_s[1].to_radians()]
        };
        BoxConstraints::new(
            [self.x_m[0], self.y_m[0], self.z_m[0], self.psi_deg[0].to_radians()],
            [self.x_m[1], self.y_m[1], self.z_m[1], self.psi_deg[1].to_radians()],
            [self.vx_m_s[0], self.vy_m_s[0], self.vz_m_s[0], omega[0]],
            [self.vx_m_s[1], self.vy_m_s[1], self.vz_m_s[1], omega[1]],
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefitSpec {
    pub force: bool,
    pub wear_gain: bool,
    /// Re-anchor the stroke's starting offset to the first measured width instead of
    /// trusting the previous iteration's prediction.
    pub offset: bool,
    /// Upper end of the wear-gain search, 1/N.
    pub kd_max: f64,
    /// Width model used to explain measured widths. The planner's max-of-projections
    /// model under-reads the drawn swath at intermediate headings, which a wear fit
    /// would otherwise absorb into an inflated gain.
    pub measurement_model: WidthConvention,
}

impl Default for RefitSpec {
    fn default() -> Self {
        Self {
            force: true,
            wear_gain: true,
            offset: true,
            kd_max: 1.0,
            measurement_model: WidthConvention::Extent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CanvasSpec {
    pub scale_m: f64,
    /// Blank border around the stroke's bounding box.
    pub margin_m: f64,
    pub threshold: u16,
    /// Write `canvas.pgm` for every iteration.
    pub save: bool,
}

impl Default for CanvasSpec {
    fn default() -> Self {
        Self {
            scale_m: 1e-5,
            margin_m: 2.5e-3,
            threshold: 128,
            save: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub iterations: usize,
    pub dt: f64,
    pub output_dir: PathBuf,
    pub stroke: StrokeSpec,
    pub baseline: ArmConfig,
    pub tilted: ArmConfig,
    pub truth: TruthSpec,
    pub calibration: CalibrationSpec,
    pub planner: PlannerConfig,
    pub constraints: ConstraintSpec,
    pub refit: RefitSpec,
    pub canvas: CanvasSpec,
    /// Directory relative stroke paths resolve against; set by [`ExperimentConfig::load`].
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            iterations: 10,
            dt: 0.008,
            output_dir: PathBuf::from("out"),
            stroke: StrokeSpec::default(),
            baseline: ArmConfig::baseline(),
            tilted: ArmConfig::default(),
            truth: TruthSpec::default(),
            calibration: CalibrationSpec::default(),
            planner: PlannerConfig {
                // wear grows with distance travelled, so a cheap position term lets the
                // optimizer zig-zag off the path to wear the tip faster
                q: [[1e10, 0.0, 0.0], [0.0, 1e10, 0.0], [0.0, 0.0, 1e8]],
                ..PlannerConfig::default()
            },
            constraints: ConstraintSpec::default(),
            refit: RefitSpec::default(),
            canvas: CanvasSpec::default(),
            base_dir: PathBuf::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Self =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if !(self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        for arm in [&self.baseline, &self.tilted] {
            arm.tip(arm.d0_m, arm.kd_estimate)
                .map_err(|e| Error::Config(format!("arm {:?}: {e}", arm.name)))?;
        }
        if self.baseline.name == self.tilted.name {
            return bad("arms need distinct names".into());
        }
        self.planner
            .validate()
            .map_err(|e| Error::Config(format!("planner: {e}")))?;
        self.constraints
            .boxes(false)
            .map_err(|e| Error::Config(format!("constraints: {e}")))?;
        if !(self.canvas.scale_m > 0.0) || !(self.canvas.margin_m >= 0.0) {
            return bad("canvas scale must be positive and margin non-negative".into());
        }
        if !(self.truth.noise_sd >= 0.0) || !(self.calibration.noise_sd >= 0.0) {
            return bad("noise levels must be non-negative".into());
        }
        if self.refit.wear_gain && !(self.refit.kd_max > 0.0) {
            return bad("kd_max must be positive".into());
        }
        Ok(())
    }

    pub fn reference_stroke(&self) -> Result<ReferenceStroke> {
        match &self.stroke {
            StrokeSpec::LStroke(spec) => l_stroke(spec, self.dt),
            StrokeSpec::Csv { path } => ReferenceStroke::read_csv(&self.base_dir.join(path), self.dt),
        }
    }

    pub fn output_path(&self) -> PathBuf {
        self.base_dir.join(&self.output_dir)
    }

    pub fn arm(&self, name: &str) -> Result<&ArmConfig> {
        [&self.baseline, &self.tilted]
            .into_iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::Config(format!("no arm named {name:?}")))
    }

    pub fn canvas_geometry(&self, stroke: &ReferenceStroke) -> Result<CanvasGeometry> {
        let (lo, hi) = stroke.bounding_box();
        CanvasGeometry::covering((lo.x, lo.y), (hi.x, hi.y), self.canvas.margin_m, self.canvas.scale_m)
    }
}

/// Mixes a run seed with a stream index so every iteration draws independent noise.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed
        ^ stream
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub params: ForceModelParams,
    pub residual_rms: f64,
    pub samples: usize,
}

/// Generates the sweep data against the ground truth and fits the linear force model.
pub fn calibrate(config: &ExperimentConfig) -> Result<(CalibrationSet, ForceModelParams)> {
    let truth = config.truth.ground_truth(config.seed)?;
    let data = sweep_calibration(
        &truth.surface,
        |p| truth.force(p),
        &config.calibration.depths_m,
        config.calibration.samples_per_depth,
        config.calibration.noise_sd,
        derive_seed(config.seed, 0),
    )?;
    let params = fit_force(&data)?;
    Ok((data, params))
}

/// [`calibrate`], writing `calibration.csv` and `calibration_fit.json` to `out`.
pub fn run_calibration(config: &ExperimentConfig, out: &Path) -> Result<ForceModelParams> {
    let (data, params) = calibrate(config)?;
    std::fs::create_dir_all(out)?;
    data.write_csv(&out.join("calibration.csv"))?;
    let result = CalibrationResult {
        params,
        residual_rms: force_residual_rms(&params, &data),
        samples: data.len(),
    };
    std::fs::write(out.join("calibration_fit.json"), serde_json::to_string_pretty(&result)?)?;
    Ok(params)
}

/// Parameter estimates the planner uses at one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelEstimate {
    pub theta: f64,
    pub theta0: f64,
    pub k_d: f64,
    /// Estimated plane offset at the start of the stroke.
    pub d: f64,
}

impl ModelEstimate {
    pub fn params(&self) -> ForceModelParams {
        ForceModelParams::new(self.theta, self.theta0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub arm: String,
    #[serde(rename = "V_m")]
    pub v_m: f64,
    /// Estimates after this iteration's refit.
    pub theta: f64,
    pub theta0: f64,
    pub kd: f64,
}

/// Everything produced by one iteration, beyond the summary record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationDetail {
    pub record: IterationRecord,
    /// Estimates the plan was made with.
    pub planned_with: ModelEstimate,
    pub refit: ModelEstimate,
    pub true_offset_start: f64,
    pub true_offset_end: f64,
    pub predicted_cost: f64,
    pub warm_start_cost: f64,
    /// RMS residual of the refit force model over all force data so far, N.
    pub force_residual_rms: f64,
    pub invalid_samples: usize,
    pub artifacts: Option<PathBuf>,
}

/// In-memory outputs of one iteration.
pub struct IterationOutput {
    pub plan: Plan,
    pub canvas: Canvas,
    pub execution: Execution,
    pub profile: WidthProfile,
    pub v: f64,
}

/// State carried from one iteration to the next within an arm.
struct ArmState {
    estimate: ModelEstimate,
    true_offset: f64,
    force_data: CalibrationSet,
    /// Executed strokes with their estimated starting offsets, for the wear-gain fit.
    strokes: Vec<WearRecord>,
}

struct WearRecord {
    widths: Vec<Option<f64>>,
    states: Vec<EndEffectorState>,
    start: f64,
}

pub struct ArmRun<'a> {
    config: &'a ExperimentConfig,
    arm: &'a ArmConfig,
    stroke: ReferenceStroke,
    surface: SurfaceMap,
    constraints: BoxConstraints,
    state: ArmState,
    iteration: usize,
}

impl<'a> ArmRun<'a> {
    pub fn new(config: &'a ExperimentConfig, arm: &'a ArmConfig) -> Result<Self> {
        let (data, params) = calibrate(config)?;
        Self::with_calibration(config, arm, data, params)
    }

    pub fn with_calibration(
        config: &'a ExperimentConfig,
        arm: &'a ArmConfig,
        data: CalibrationSet,
        params: ForceModelParams,
    ) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            stroke: config.reference_stroke()?,
            surface: config.truth.surface.build()?,
            constraints: config.constraints.boxes(arm.lock_heading)?,
            state: ArmState {
                estimate: ModelEstimate {
                    theta: params.theta,
                    theta0: params.theta0,
                    k_d: arm.kd_estimate,
                    d: arm.d0_m,
                },
                true_offset: arm.d0_m,
                force_data: data,
                strokes: Vec::new(),
            },
            config,
            arm,
            iteration: 0,
        })
    }

    pub fn stroke(&self) -> &ReferenceStroke {
        &self.stroke
    }

    pub fn estimate(&self) -> ModelEstimate {
        self.state.estimate
    }

    pub fn true_offset(&self) -> f64 {
        self.state.true_offset
    }

    pub fn model_tip(&self) -> Result<ToolTipState> {
        self.arm.tip(self.state.estimate.d, self.state.estimate.k_d)
    }

    pub fn initial_state(&self) -> Result<EndEffectorState> {
        let s0 = self.stroke.samples()[0];
        let z_ref = self.surface.height_at(s0.x, s0.y)?;
        Ok(EndEffectorState::new(
            s0.x,
            s0.y,
            z_ref - self.config.planner.nominal_depth_m,
            self.arm.initial_heading_deg.to_radians(),
        ))
    }

    pub fn plan(&self) -> Result<Plan> {
        let cfg = PlannerConfig {
            seed: derive_seed(self.config.seed, 1000 + self.iteration as u64),
            ..self.config.planner.clone()
        };
        plan_stroke(
            &self.stroke,
            self.initial_state()?,
            &self.model_tip()?,
            &self.state.estimate.params(),
            &self.surface,
            &self.constraints,
            &cfg,
        )
    }

    /// Runs `plan` on the ground truth with the current (persistent) true tip.
    pub fn execute(&self, plan: &Plan) -> Result<(Canvas, Execution)> {
        let truth = self
            .config
            .truth
            .ground_truth(derive_seed(self.config.seed, 2000 + self.iteration as u64))?;
        let mut canvas = Canvas::blank(self.config.canvas_geometry(&self.stroke)?);
        let tip = self.arm.tip(self.state.true_offset, self.config.truth.k_d)?;
        let ex = execute(plan, &truth, &tip, &mut canvas)?;
        Ok((canvas, ex))
    }

    pub fn measure(&self, canvas: &Canvas) -> Result<(WidthProfile, f64)> {
        let mask = threshold(canvas, self.config.canvas.threshold);
        let profile = width_profile(&mask, &self.stroke, canvas.geometry());
        let v = error_metric(&profile, &self.stroke)?;
        Ok((profile, v))
    }

    /// One plan → execute → measure → refit cycle. Artifacts go to `out` when given.
    pub fn step(&mut self, out: Option<&Path>) -> Result<(IterationDetail, IterationOutput)> {
        self.iteration += 1;
        let planned_with = self.state.estimate;
        let plan = self.plan()?;
        let (canvas, execution) = self.execute(&plan)?;
        let (profile, v) = self.measure(&canvas)?;

        let true_offset_start = self.state.true_offset;
        self.state.true_offset = execution.final_offset().unwrap_or(true_offset_start);
        self.refit(&execution, &profile)?;

        let record = IterationRecord {
            iteration: self.iteration,
            arm: self.arm.name.clone(),
            v_m: v,
            theta: self.state.estimate.theta,
            theta0: self.state.estimate.theta0,
            kd: self.state.estimate.k_d,
        };
        let artifacts = match out {
            Some(dir) => {
                let dir = dir.join(&self.arm.name).join(format!("iter_{:02}", self.iteration));
                std::fs::create_dir_all(&dir)?;
                plan.write_csv(&dir.join("plan.csv"))?;
                execution.write_csv(&dir.join("trace.csv"))?;
                profile.write_csv(&dir.join("profile.csv"))?;
                if self.config.canvas.save {
                    canvas.write_pgm(&dir.join("canvas.pgm"))?;
                }
                Some(dir)
            }
            None => None,
        };
        let detail = IterationDetail {
            record,
            planned_with,
            refit: self.state.estimate,
            true_offset_start,
            true_offset_end: self.state.true_offset,
            predicted_cost: plan.predicted_cost,
            warm_start_cost: plan.warm_start_cost,
            force_residual_rms: force_residual_rms(&self.state.estimate.params(), &self.state.force_data),
            invalid_samples: profile.invalid_count(),
            artifacts: artifacts.clone(),
        };
        if let Some(dir) = &artifacts {
            std::fs::write(dir.join("params.json"), serde_json::to_string_pretty(&detail)?)?;
        }
        Ok((
            detail,
            IterationOutput {
                plan,
                canvas,
                execution,
                profile,
                v,
            },
        ))
    }

    fn refit(&mut self, execution: &Execution, profile: &WidthProfile) -> Result<()> {
        let mut est = self.state.estimate;
        if self.config.refit.force {
            let rows = execution
                .states
                .iter()
                .zip(&execution.surface_heights)
                .zip(&execution.measured_forces)
                .zip(&execution.contact)
                .filter(|(_, &c)| c)
                .map(|(((s, &zr), &f), _)| CalibrationRow {
                    penetration: s.z - zr,
                    force: f,
                });
            self.state.force_data.rows.extend(rows);
            // a single-depth trace adds no slope information; keep the old fit then
            if let Ok(p) = fit_force(&self.state.force_data) {
                est.theta = p.theta;
                est.theta0 = p.theta0;
            }
        }
        let params = est.params();
        let measured = profile.measured();
        let convention = self.config.refit.measurement_model;

        let start = match (self.config.refit.offset, measured.first().copied().flatten()) {
            (true, Some(w0)) => self.offset_from_width(w0, execution.states[0].psi)?.unwrap_or(est.d),
            _ => est.d,
        };
        let template = self.arm.tip(start, est.k_d)?;
        self.state.strokes.push(WearRecord {
            widths: measured,
            states: execution.states.clone(),
            start,
        });
        let fitted = if self.config.refit.wear_gain {
            let options = DegradationFitOptions {
                k_max: self.config.refit.kd_max,
                convention,
                ..Default::default()
            };
            let segments = self
                .state
                .strokes
                .iter()
                .map(|r| {
                    Ok(DegradationSegment {
                        widths_measured: &r.widths,
                        trajectory: &r.states,
                        tip_template: self.arm.tip(r.start, est.k_d)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            match fit_degradation_segments(&segments, &params, &self.surface, &options) {
                Ok(fit) => Some(fit),
                Err(Error::NoContact) => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        match fitted {
            Some(fit) => {
                est.k_d = fit.k_d;
                est.d = fit.final_offset;
            }
            None => {
                // fixed wear gain: advance the offset with the model along the executed path
                let heights = execution
                    .states
                    .iter()
                    .map(|s| self.surface.height_at(s.x, s.y))
                    .collect::<Result<Vec<_>>>()?;
                let trace = forward_chain(&execution.states, &heights, &template, &params, convention);
                est.d = trace.offsets.last().copied().unwrap_or(start);
            }
        }
        self.state.estimate = est;
        Ok(())
    }

    /// Offset whose modelled width at heading `psi` equals `width`, anchoring the offset
    /// estimate to a direct measurement at the start of the stroke.
    fn offset_from_width(&self, width: f64, psi: f64) -> Result<Option<f64>> {
        let tip = self.arm.tip(self.arm.d0_m, 0.0)?;
        let per_meter = deposition_width_with(tip.axes_at(1.0), psi, self.config.refit.measurement_model);
        if !(per_meter > 0.0) {
            return Ok(None);
        }
        Ok(Some((width / per_meter).clamp(f64::MIN_POSITIVE, self.arm.d_max_m)))
    }
}

/// Runs every iteration of one arm. Artifacts are written under `out` when given.
pub fn run_iterations(config: &ExperimentConfig, arm: &ArmConfig, out: Option<&Path>) -> Result<Vec<IterationDetail>> {
    let mut run = ArmRun::new(config, arm)?;
    (0..config.iterations).map(|_| run.step(out).map(|(d, _)| d)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub baseline: String,
    pub tilted: String,
    pub baseline_v_m: Vec<f64>,
    pub tilted_v_m: Vec<f64>,
    /// `100·(V_baseline − V_tilted)/V_baseline` per iteration.
    pub improvement_pct: Vec<f64>,
    pub final_improvement_pct: f64,
    pub tilted_better_every_iteration: bool,
}

impl ComparisonSummary {
    pub fn from_records(baseline: &[IterationDetail], tilted: &[IterationDetail]) -> Self {
        let bv: Vec<f64> = baseline.iter().map(|d| d.record.v_m).collect();
        let tv: Vec<f64> = tilted.iter().map(|d| d.record.v_m).collect();
        let improvement: Vec<f64> = bv.iter().zip(&tv).map(|(b, t)| 100.0 * (b - t) / b).collect();
        Self {
            baseline: baseline.first().map(|d| d.record.arm.clone()).unwrap_or_default(),
            tilted: tilted.first().map(|d| d.record.arm.clone()).unwrap_or_default(),
            final_improvement_pct: improvement.last().copied().unwrap_or(0.0),
            tilted_better_every_iteration: bv.iter().zip(&tv).all(|(b, t)| t < b),
            baseline_v_m: bv,
            tilted_v_m: tv,
            improvement_pct: improvement,
        }
    }
}

/// Runs both arms on identical ground truth and seeds (concurrently), and writes
/// `iterations.csv` and `summary.json` to `out` when given.
pub fn run_comparison(
    config: &ExperimentConfig,
    out: Option<&Path>,
) -> Result<(ComparisonSummary, Vec<IterationDetail>, Vec<IterationDetail>)> {
    let (b, t) = rayon::join(
        || run_iterations(config, &config.baseline, out),
        || run_iterations(config, &config.tilted, out),
    );
    let (b, t) = (b?, t?);
    let summary = ComparisonSummary::from_records(&b, &t);
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        write_iterations_csv(&dir.join("iterations.csv"), b.iter().chain(&t).map(|d| &d.record))?;
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    }
    Ok((summary, b, t))
}

pub fn write_iterations_csv<'r>(path: &Path, records: impl IntoIterator<Item = &'r IterationRecord>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
