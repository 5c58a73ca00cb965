//! Sweep harness: JSON configuration, per-ε orchestration of lift → Picard
//! iteration → reconstruction → audits, log–log rate fits, and emission of
//! CSV tables, a gnuplot script and a JSON summary.
//!
//! Every output is a pure function of the configuration: sweep points are
//! dispatched to a bounded worker pool but merged back in configuration
//! order, dense kernels run single-threaded inside each worker, and no
//! timing information is written to disk.

use crate::background::{self, BoundaryData, FlowParams, Profile};
use crate::error::{Error, Result};
use crate::estimates::{self, EstimateAudit};
use crate::grid::{self, Grid, ScalarField, VectorField};
use crate::homogenize::{self, Lift};
use crate::linsolve::{LinearInput, LinearOutput, LinearSolver};
use crate::picard::{self, Frame, IterationRow, PicardOptions, State};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Complete harness configuration (one JSON document).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub grid: GridConfig,
    pub params: ParamsConfig,
    pub boundary_data: BoundaryDataConfig,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
}

/// Grid section: node counts per direction (the grid is square in index
/// space) and the channel length L.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub nodes: Vec<usize>,
    pub length: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            nodes: vec![129],
            length: 0.25,
        }
    }
}

/// Flow parameters that do not vary along the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsConfig {
    pub gamma: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub sigma: f64,
    pub delta: f64,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        let p = FlowParams::with_eps(0.5);
        ParamsConfig {
            gamma: p.gamma,
            alpha0: p.alpha0,
            alpha1: p.alpha1,
            alpha2: p.alpha2,
            sigma: p.sigma,
            delta: p.delta,
        }
    }
}

/// A boundary profile: an expression string in the profile's variable or
/// uniform samples covering the side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileSpec {
    Expr(String),
    Samples(Vec<f64>),
}

impl ProfileSpec {
    fn build(&self, var: char, name: &str) -> Result<Profile> {
        match self {
            ProfileSpec::Expr(s) => Profile::expr(var, s),
            ProfileSpec::Samples(v) => Profile::samples(var, v.clone()),
        }
        .map_err(|e| Error::Config(format!("boundary_data.{name}: {e}")))
    }
}

/// Boundary-data shapes. With `h0_in_eta2_units` the density profile is
/// multiplied by η² at each point, so the expression gives the shape of
/// η⁻²h0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundaryDataConfig {
    pub a1: ProfileSpec,
    pub a2: ProfileSpec,
    pub a3: ProfileSpec,
    pub a4: ProfileSpec,
    pub b0: ProfileSpec,
    pub b1: ProfileSpec,
    pub h0: ProfileSpec,
    pub h0_in_eta2_units: bool,
}

impl Default for BoundaryDataConfig {
    fn default() -> Self {
        let e = |s: &str| ProfileSpec::Expr(s.to_string());
        BoundaryDataConfig {
            a1: e("sin(pi*y/2)"),
            a2: e("0.2*sin(pi*y)"),
            a3: e("0.3*sin(pi*y) + 0.1*y^2*(2-y)^2"),
            a4: e("0.5*sin(pi*y)"),
            b0: e("(pi/2)*cos(pi*x/0.25)"),
            b1: e("-(pi/2)*cos(pi*x/0.25)"),
            h0: e("cos(pi*y)"),
            h0_in_eta2_units: true,
        }
    }
}

impl BoundaryDataConfig {
    /// All-zero perturbation data.
    pub fn zero() -> Self {
        let z = || ProfileSpec::Expr("0".into());
        BoundaryDataConfig {
            a1: z(),
            a2: z(),
            a3: z(),
            a4: z(),
            b0: z(),
            b1: z(),
            h0: z(),
            h0_in_eta2_units: true,
        }
    }

    /// The unscaled shapes at Mach number `eta`.
    pub fn shapes(&self, eta: f64) -> Result<BoundaryData> {
        let h0 = self.h0.build('y', "h0")?;
        Ok(BoundaryData {
            a1: self.a1.build('y', "a1")?,
            a2: self.a2.build('y', "a2")?,
            a3: self.a3.build('y', "a3")?,
            a4: self.a4.build('y', "a4")?,
            b0: self.b0.build('x', "b0")?,
            b1: self.b1.build('x', "b1")?,
            h0: if self.h0_in_eta2_units { h0.scaled(eta * eta) } else { h0 },
        })
    }
}

/// Which velocity gaps the gated rate checks use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GapMode {
    /// u^ε − u_s − ū with the boundary lift subtracted (isolates the
    /// ε-scaling remainder when the data dominate the gap).
    #[default]
    Remainder,
    /// u^ε − u_s.
    Full,
}

/// Pass/fail thresholds of the summary checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub rho_slope_min: f64,
    pub gap_slope_min: f64,
    pub contraction_max: f64,
    /// Contraction and iteration-count checks apply for ε at or below this.
    pub contraction_eps_max: f64,
    pub max_iterations: usize,
    pub bound_ratio_max: f64,
    pub identity_tol: f64,
    pub bc_tol: f64,
    pub gauge_tol: f64,
    pub audit_spread_max: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            rho_slope_min: 0.85,
            gap_slope_min: 0.425,
            contraction_max: 0.5,
            contraction_eps_max: 1e-2,
            max_iterations: 15,
            bound_ratio_max: 1.0,
            identity_tol: 1e-8,
            bc_tol: 1e-6,
            gauge_tol: 1e-6,
            audit_spread_max: 10.0,
        }
    }
}

/// Sweep section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Viscosities, strictly decreasing.
    pub eps: Vec<f64>,
    /// η = ε^eta_exponent.
    pub eta_exponent: f64,
    /// Scale the data to Λ = c·ε^{1/2+σ}; `null` uses the data as given and
    /// skips points that violate Λ ≤ ε^{1/2+σ}.
    pub lambda_scale: Option<f64>,
    /// Worker threads (0 = available parallelism).
    pub workers: usize,
    pub compat_tol: f64,
    pub gap_mode: GapMode,
    pub picard: PicardOptions,
    /// Run the estimate audits at every point.
    pub audits: bool,
    /// Viscosities at which a failure is forced (isolation testing).
    pub inject_failure: Vec<f64>,
    pub thresholds: Thresholds,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            eps: vec![1e-1, 5e-2, 2e-2, 1e-2, 5e-3, 2e-3, 1e-3],
            eta_exponent: 0.55,
            lambda_scale: Some(0.5),
            workers: 0,
            compat_tol: 1e-8,
            gap_mode: GapMode::Remainder,
            picard: PicardOptions::default(),
            audits: true,
            inject_failure: Vec::new(),
            thresholds: Thresholds::default(),
        }
    }
}

/// Output section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write a field dump per point (input of the `audit` verb).
    pub dump_fields: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("chanflow-out"),
            dump_fields: false,
        }
    }
}

impl Config {
    /// Parse and validate a JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Config =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read, parse and validate a configuration file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Couette flow (α₂ = 0) with zero boundary perturbations.
    pub fn couette() -> Self {
        let mut c = Config::default();
        c.params.alpha2 = 0.0;
        c.boundary_data = BoundaryDataConfig::zero();
        c
    }

    /// Flow parameters at viscosity `eps`.
    pub fn flow_params(&self, eps: f64) -> FlowParams {
        let p = &self.params;
        FlowParams {
            eps,
            gamma: p.gamma,
            alpha0: p.alpha0,
            alpha1: p.alpha1,
            alpha2: p.alpha2,
            sigma: p.sigma,
            delta: p.delta,
            eta: eps.powf(self.sweep.eta_exponent),
        }
    }

    /// Check everything that can be checked without solving.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let s = &self.sweep;
        if s.eps.is_empty() {
            return bad("sweep.eps is empty".into());
        }
        if s.eps.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return bad("every sweep.eps value must lie in (0, 1)".into());
        }
        if s.eps.windows(2).any(|w| !(w[1] < w[0])) {
            return bad("sweep.eps must be strictly decreasing".into());
        }
        if self.grid.nodes.is_empty() {
            return bad("grid.nodes is empty".into());
        }
        if self.grid.nodes.iter().any(|&n| n < 9) {
            return bad("grid.nodes entries must be at least 9".into());
        }
        if !(self.grid.length > 0.0 && self.grid.length.is_finite()) {
            return bad("grid.length must be positive".into());
        }
        if let Some(c) = s.lambda_scale {
            if !(c > 0.0 && c.is_finite()) {
                return bad("sweep.lambda_scale must be positive".into());
            }
        }
        if !(s.compat_tol > 0.0) {
            return bad("sweep.compat_tol must be positive".into());
        }
        let o = &s.picard;
        if !(o.tol > 0.0) || o.max_iter == 0 || !(o.p >= 2.0) || !(o.ratio_limit > 0.0) || !(o.envelope_factor > 0.0) {
            return bad("sweep.picard: need tol > 0, max_iter > 0, p >= 2, ratio_limit > 0, envelope_factor > 0".into());
        }
        // Parameter ranges are checked at the sweep's extreme viscosities.
        for &e in [s.eps[0], s.eps[s.eps.len() - 1]].iter() {
            self.flow_params(e)
                .validate()
                .map_err(|err| Error::Config(format!("params at eps = {e}: {err}")))?;
        }
        let shapes = self.boundary_data.shapes(1.0)?;
        let rep = background::check_compatibility(&shapes, self.grid.length, s.compat_tol)
            .map_err(|e| Error::Config(format!("boundary_data: {e}")))?;
        if !rep.pass {
            return bad(format!(
                "boundary_data violates compatibility conditions: {}",
                rep.failing().join(", ")
            ));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Sweep points
// ---------------------------------------------------------------------------

/// Outcome class of one sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointStatus {
    Ok,
    Failed,
    Skipped,
}

/// Consistency diagnostics of the final linear solve of a point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Consistency {
    pub identity_curl: f64,
    pub identity_flux: f64,
    pub identity_scale: f64,
    pub bc_max: f64,
    pub bc: BTreeMap<String, f64>,
    pub gauge_div: f64,
    pub gauge_curl: f64,
    pub gauge_scale: f64,
}

/// Everything recorded for one (ε, grid) point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub eps: f64,
    pub eta: f64,
    pub length: f64,
    pub grid: usize,
    pub status: PointStatus,
    pub error: Option<String>,
    /// Λ of the unscaled shapes and the applied data factor.
    pub lambda_shape: f64,
    pub data_scale: f64,
    pub lambda: f64,
    pub lambda_threshold: f64,
    pub converged: bool,
    pub iterations: Vec<IterationRow>,
    /// Named scalar outputs (gaps and diagnostics).
    pub quantities: BTreeMap<String, f64>,
    pub consistency: Option<Consistency>,
    pub audits: Vec<EstimateAudit>,
    /// Wall-clock seconds; never serialized, so outputs stay deterministic.
    #[serde(skip)]
    pub elapsed_s: f64,
}

impl PointResult {
    fn empty(eps: f64, eta: f64, length: f64, grid: usize) -> Self {
        PointResult {
            eps,
            eta,
            length,
            grid,
            status: PointStatus::Ok,
            error: None,
            lambda_shape: 0.0,
            data_scale: 0.0,
            lambda: 0.0,
            lambda_threshold: 0.0,
            converged: false,
            iterations: Vec::new(),
            quantities: BTreeMap::new(),
            consistency: None,
            audits: Vec::new(),
            elapsed_s: 0.0,
        }
    }

    /// Iteration count of the Picard chain.
    pub fn iteration_count(&self) -> usize {
        self.iterations.len()
    }

    /// Largest contraction ratio from iteration 2 on.
    pub fn max_ratio(&self) -> f64 {
        self.iterations
            .iter()
            .filter(|r| r.n >= 2 && r.ratio.is_finite())
            .map(|r| r.ratio)
            .fold(0.0, f64::max)
    }

    /// Largest (‖u‖_B + ‖ρ‖_A)/ε^{σ/2} over the chain.
    pub fn max_bound_ratio(&self) -> f64 {
        self.iterations.iter().map(|r| r.bound_ratio).fold(0.0, f64::max)
    }
}

/// Fields saved by a solve for later auditing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldDump {
    pub params: FlowParams,
    pub nodes: usize,
    pub length: f64,
    /// Input and output of the final linear solve.
    pub input: LinearInput,
    pub output: LinearOutput,
    /// Remainder state (u, v, ρ).
    pub remainder: VectorField,
    pub remainder_rho: ScalarField,
    /// Reconstructed velocity and density.
    pub velocity: VectorField,
    pub density: ScalarField,
}

impl FieldDump {
    /// File name used inside an output directory.
    pub fn file_name(eps: f64, nodes: usize) -> String {
        format!("fields_eps{eps:e}_n{nodes}.json")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: invalid field dump: {e}", path.display())))
    }

    /// Audits of the saved linear solve.
    pub fn audits(&self) -> Vec<EstimateAudit> {
        estimates::run_audits(&self.output, &self.input, &self.params)
    }
}

fn l_inf_grad(f: &ScalarField) -> f64 {
    grid::dx(f)
        .zip(&grid::dy(f), |a, b| a.hypot(b))
        .max_abs()
}

/// Gap quantities of a reconstructed solution.
fn gap_quantities(
    params: &FlowParams,
    lift: &Lift,
    state: &State,
    w: &VectorField,
    rho: &ScalarField,
) -> BTreeMap<String, f64> {
    let mut q = BTreeMap::new();
    let g = rho.grid;
    let xi = params.xi();
    let du = w.u.sub(&background::us_field(params, &g));
    let dv = w.v.clone();
    let ru = du.sub(&lift.ubar);
    let rv = dv.sub(&lift.vbar);
    let mut put = |n: &str, v: f64| {
        q.insert(n.to_string(), v);
    };
    for (prefix, fu, fv) in [("gap", &du, &dv), ("rem", &ru, &rv)] {
        let gu = l_inf_grad(fu);
        let gv = l_inf_grad(fv);
        put(&format!("{prefix}_u"), fu.max_abs());
        put(&format!("{prefix}_grad_u"), gu);
        put(&format!("{prefix}_grad_u_weighted"), xi * gu);
        put(&format!("{prefix}_v"), fv.max_abs());
        put(&format!("{prefix}_grad_v"), gv);
        put(&format!("{prefix}_grad_v_weighted"), xi * gv);
    }
    put("gap_rho", rho.map(|r| r - 1.0).max_abs());
    put("rem_rho", params.eta * params.eta * xi * state.rho.max_abs());
    q
}

/// Per-point work products that are not part of the summary.
pub struct PointOutcome {
    pub result: PointResult,
    pub dump: Option<FieldDump>,
}

fn is_injected(cfg: &Config, eps: f64) -> bool {
    cfg.sweep
        .inject_failure
        .iter()
        .any(|&e| (e - eps).abs() <= 1e-12 * eps.abs())
}

/// Run one sweep point. Failures are recorded in the result, never raised.
pub fn run_point(cfg: &Config, eps: f64, nodes: usize, keep_fields: bool) -> PointOutcome {
    let start = Instant::now();
    let params = cfg.flow_params(eps);
    let mut res = PointResult::empty(eps, params.eta, cfg.grid.length, nodes);
    let mut dump = None;
    match solve_point(cfg, &params, nodes, keep_fields, &mut res) {
        Ok(d) => dump = d,
        Err(e) => {
            if res.status != PointStatus::Skipped {
                res.status = PointStatus::Failed;
            }
            res.error = Some(e.to_string());
        }
    }
    res.elapsed_s = start.elapsed().as_secs_f64();
    PointOutcome { result: res, dump }
}

fn solve_point(
    cfg: &Config,
    params: &FlowParams,
    nodes: usize,
    keep_fields: bool,
    res: &mut PointResult,
) -> Result<Option<FieldDump>> {
    params.validate()?;
    if is_injected(cfg, params.eps) {
        return Err(Error::Injected(format!("forced failure at eps = {}", params.eps)));
    }
    let g = Grid::square(nodes - 1, cfg.grid.length)?;
    let shape = cfg.boundary_data.shapes(params.eta)?;
    let thr = params.lambda_threshold();
    res.lambda_threshold = thr;
    res.lambda_shape = background::lambda_norm(&shape, params, &g)?;
    res.data_scale = match cfg.sweep.lambda_scale {
        Some(c) if res.lambda_shape > 0.0 => c * thr / res.lambda_shape,
        _ => 1.0,
    };
    let bd = shape.scaled(res.data_scale);
    res.lambda = background::lambda_norm(&bd, params, &g)?;
    if res.lambda > thr * (1.0 + 1e-9) {
        res.status = PointStatus::Skipped;
        return Err(Error::InvalidParameter(format!(
            "data size {:.6e} exceeds the smallness threshold {:.6e}",
            res.lambda, thr
        )));
    }
    let lift = homogenize::build_lift(&bd, &g, cfg.sweep.compat_tol)?;
    let rbar = background::background_density(params, &bd, &g)?;
    let frame = Frame::new(params, &lift, &rbar)?;
    let solver = LinearSolver::new(&g, params)?;
    let (outcome, log) = picard::picard_iterate_logged(&solver, &frame, State::zero(&g), &cfg.sweep.picard);
    res.iterations = log.rows.clone();
    let pr = outcome?;
    res.converged = pr.report.converged;
    res.iterations = pr.report.rows.clone();

    let (w, rho, recon) = picard::reconstruct(&frame, &pr.state);
    let mut q = gap_quantities(params, &lift, &pr.state, &w, &rho);
    let nl = picard::nonlinear_residual(&w, &rho, params)?;
    q.insert("residual_mass".into(), nl.mass);
    q.insert("residual_momentum_x".into(), nl.momentum_x);
    q.insert("residual_momentum_y".into(), nl.momentum_y);
    q.insert("picard_iterations".into(), res.iterations.len() as f64);
    q.insert("picard_max_ratio".into(), res.max_ratio());
    q.insert("bound_ratio_max".into(), res.max_bound_ratio());
    q.insert("rho_origin".into(), recon.rho_origin);
    q.insert("inflow_slope".into(), recon.inflow_slope);
    res.quantities = q;

    let o = &pr.last;
    res.consistency = Some(Consistency {
        identity_curl: o.identities.curl,
        identity_flux: o.identities.flux,
        identity_scale: o.identities.scale.max(1.0),
        bc_max: o.max_bc_defect(),
        bc: o.bc_report.iter().map(|c| (c.name.clone(), c.defect)).collect(),
        gauge_div: o.gauge.div,
        gauge_curl: o.gauge.curl,
        gauge_scale: o.residual_report.scale.max(1.0),
    });

    if cfg.sweep.audits {
        let input = estimates::standard_audit_input(&g, params);
        let out = solver.solve(&input)?;
        res.audits = estimates::run_audits(&out, &input, params);
    }

    Ok(keep_fields.then(|| FieldDump {
        params: *params,
        nodes,
        length: cfg.grid.length,
        input: pr.last_input.clone(),
        output: pr.last.clone(),
        remainder: pr.state.velocity(),
        remainder_rho: pr.state.rho.clone(),
        velocity: w,
        density: rho,
    }))
}

/// Results of a sweep in configuration order (grid-major, then ε).
#[derive(Debug, Clone)]
pub struct SweepResults {
    pub points: Vec<PointResult>,
    pub dumps: Vec<FieldDump>,
}

/// Serial execution of dense kernels inside each worker keeps every
/// floating-point reduction order fixed.
fn pin_kernel_threads() {
    faer::set_global_parallelism(faer::Parallelism::None);
}

fn worker_count(cfg: &Config) -> usize {
    match cfg.sweep.workers {
        0 => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        k => k,
    }
}

/// Run every (grid, ε) point on a bounded worker pool.
pub fn run_sweep(cfg: &Config) -> Result<SweepResults> {
    cfg.validate()?;
    pin_kernel_threads();
    let jobs: Vec<(usize, f64)> = cfg
        .grid
        .nodes
        .iter()
        .flat_map(|&n| cfg.sweep.eps.iter().map(move |&e| (n, e)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(cfg).min(jobs.len()).max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let keep = cfg.output.dump_fields;
    let outcomes: Vec<PointOutcome> = pool.install(|| {
        use rayon::prelude::*;
        jobs.par_iter().map(|&(n, e)| run_point(cfg, e, n, keep)).collect()
    });
    let mut points = Vec::with_capacity(outcomes.len());
    let mut dumps = Vec::new();
    for o in outcomes {
        points.push(o.result);
        dumps.extend(o.dump);
    }
    Ok(SweepResults { points, dumps })
}

/// Run a single point (the `solve` verb).
pub fn run_single(cfg: &Config, eps: f64, nodes: usize) -> Result<SweepResults> {
    cfg.validate()?;
    pin_kernel_threads();
    let o = run_point(cfg, eps, nodes, cfg.output.dump_fields);
    Ok(SweepResults {
        points: vec![o.result],
        dumps: o.dump.into_iter().collect(),
    })
}

// ---------------------------------------------------------------------------
// Rate fits
// ---------------------------------------------------------------------------

/// Log–log least-squares fit value ≈ C·ε^slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub name: String,
    pub grid: usize,
    pub eps: Vec<f64>,
    pub values: Vec<f64>,
    /// `None` when the quantity vanishes identically.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// 95 % confidence half-width of the slope.
    pub ci: Option<f64>,
    /// RMS of the log residuals.
    pub residual_rms: Option<f64>,
    pub vanishing: bool,
    pub target: Option<f64>,
    pub threshold: Option<f64>,
    /// Whether the fit enters the pass/fail summary.
    pub gated: bool,
    pub pass: Option<bool>,
}

/// Fit log(value) = intercept + slope·log(ε). Needs at least four points
/// with positive values; identically zero data are reported as vanishing.
pub fn fit_rate(name: &str, eps: &[f64], values: &[f64]) -> Result<RateFit> {
    if eps.len() != values.len() {
        return Err(Error::InvalidParameter("eps and values differ in length".into()));
    }
    let mut fit = RateFit {
        name: name.to_string(),
        grid: 0,
        eps: eps.to_vec(),
        values: values.to_vec(),
        slope: None,
        intercept: None,
        ci: None,
        residual_rms: None,
        vanishing: false,
        target: None,
        threshold: None,
        gated: false,
        pass: None,
    };
    if eps.len() >= 4 && values.iter().all(|v| *v == 0.0) {
        fit.vanishing = true;
        return Ok(fit);
    }
    let pts: Vec<(f64, f64)> = eps
        .iter()
        .zip(values)
        .filter(|(e, v)| **e > 0.0 && **v > 0.0 && v.is_finite())
        .map(|(e, v)| (e.ln(), v.ln()))
        .collect();
    let n = pts.len();
    if n < 4 {
        return Err(Error::InsufficientData(format!(
            "{name}: {n} usable points, at least 4 required"
        )));
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InsufficientData(format!("{name}: all eps values coincide")));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let df = nf - 2.0;
    let se = (sse / df / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::InvalidParameter(format!("t distribution: {e}")))?
        .inverse_cdf(0.975);
    fit.slope = Some(slope);
    fit.intercept = Some(intercept);
    fit.ci = Some(t * se);
    fit.residual_rms = Some((sse / nf).sqrt());
    Ok(fit)
}

/// Fit targets: (quantity, target slope, threshold kind).
fn fit_targets(cfg: &Config) -> Vec<(String, f64, f64, bool)> {
    let th = &cfg.sweep.thresholds;
    let vel_target = 0.5 + cfg.params.sigma / 4.0;
    let gated_prefix = match cfg.sweep.gap_mode {
        GapMode::Remainder => "rem",
        GapMode::Full => "gap",
    };
    let mut v = vec![
        ("gap_rho".to_string(), 1.0, th.rho_slope_min, true),
        ("rem_rho".to_string(), 1.0, th.rho_slope_min, false),
    ];
    for prefix in ["gap", "rem"] {
        for (q, gated) in [
            ("u", true),
            ("grad_u_weighted", true),
            ("grad_u", false),
            ("v", true),
            ("grad_v_weighted", true),
            ("grad_v", false),
        ] {
            v.push((format!("{prefix}_{q}"), vel_target, th.gap_slope_min, gated && prefix == gated_prefix));
        }
    }
    v
}

/// A quantity that could not be fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitError {
    pub name: String,
    pub grid: usize,
    pub gated: bool,
    pub reason: String,
}

/// Fit every target quantity over the successful points of each grid.
pub fn fit_rates(cfg: &Config, points: &[PointResult]) -> (Vec<RateFit>, Vec<FitError>) {
    let mut fits = Vec::new();
    let mut errors = Vec::new();
    for &nodes in &cfg.grid.nodes {
        let ok: Vec<&PointResult> = points
            .iter()
            .filter(|p| p.grid == nodes && p.status == PointStatus::Ok)
            .collect();
        for (name, target, threshold, gated) in fit_targets(cfg) {
            let (eps, vals): (Vec<f64>, Vec<f64>) = ok
                .iter()
                .filter_map(|p| p.quantities.get(&name).map(|v| (p.eps, *v)))
                .unzip();
            match fit_rate(&name, &eps, &vals) {
                Ok(mut f) => {
                    f.grid = nodes;
                    f.target = Some(target);
                    f.threshold = Some(threshold);
                    f.gated = gated;
                    f.pass = Some(f.vanishing || f.slope.is_some_and(|s| s >= threshold));
                    fits.push(f);
                }
                Err(e) => errors.push(FitError {
                    name,
                    grid: nodes,
                    gated,
                    reason: e.to_string(),
                }),
            }
        }
    }
    (fits, errors)
}

// ---------------------------------------------------------------------------
// Summary checks
// ---------------------------------------------------------------------------

/// One pass/fail line of the summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Spread max/min of an audit's implied constant across ε.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSpread {
    pub name: String,
    pub grid: usize,
    pub min: f64,
    pub max: f64,
    pub spread: f64,
    pub pass: bool,
}

/// Implied-constant spreads per (audit, grid).
pub fn audit_spreads(points: &[PointResult], limit: f64) -> Vec<AuditSpread> {
    let mut by: BTreeMap<(usize, String), Vec<f64>> = BTreeMap::new();
    for p in points.iter().filter(|p| p.status == PointStatus::Ok) {
        for a in &p.audits {
            if let Some(c) = a.constant.filter(|c| *c > 0.0 && c.is_finite()) {
                by.entry((p.grid, a.key())).or_default().push(c);
            }
        }
    }
    by.into_iter()
        .map(|((grid, name), cs)| {
            let min = cs.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = cs.iter().cloned().fold(0.0, f64::max);
            let spread = max / min;
            AuditSpread {
                name,
                grid,
                min,
                max,
                spread,
                pass: spread <= limit,
            }
        })
        .collect()
}

fn fmt_g(v: f64) -> String {
    format!("{v:.3e}")
}

/// Evaluate the summary checks. `with_fits` adds the rate and audit-spread
/// checks, which need a full sweep.
pub fn evaluate_checks(
    cfg: &Config,
    points: &[PointResult],
    fits: &[RateFit],
    fit_errors: &[FitError],
    spreads: &[AuditSpread],
    with_fits: bool,
) -> Vec<Check> {
    let th = &cfg.sweep.thresholds;
    let ok: Vec<&PointResult> = points.iter().filter(|p| p.status == PointStatus::Ok).collect();
    let mut checks = Vec::new();
    let mut push = |name: &str, pass: bool, detail: String| {
        checks.push(Check {
            name: name.into(),
            pass,
            detail,
        })
    };

    let failed: Vec<String> = points
        .iter()
        .filter(|p| p.status == PointStatus::Failed)
        .map(|p| format!("eps={} n={}", p.eps, p.grid))
        .collect();
    push(
        "points",
        failed.is_empty() && !ok.is_empty(),
        if failed.is_empty() {
            format!("{} ok, {} skipped", ok.len(), points.len() - ok.len())
        } else {
            format!("failed: {}", failed.join("; "))
        },
    );

    let worst_bound = ok.iter().map(|p| p.max_bound_ratio()).fold(0.0, f64::max);
    push(
        "uniform_bound",
        !ok.is_empty() && worst_bound <= th.bound_ratio_max,
        format!("max (|u|_B + |rho|_A)/eps^(sigma/2) = {}", fmt_g(worst_bound)),
    );

    let small: Vec<&&PointResult> = ok.iter().filter(|p| p.eps <= th.contraction_eps_max * (1.0 + 1e-12)).collect();
    let worst_ratio = small.iter().map(|p| p.max_ratio()).fold(0.0, f64::max);
    let worst_iter = small.iter().map(|p| p.iteration_count()).max().unwrap_or(0);
    let all_conv = small.iter().all(|p| p.converged);
    push(
        "contraction",
        all_conv && worst_ratio <= th.contraction_max && worst_iter <= th.max_iterations,
        format!(
            "{} points with eps <= {}: max ratio (n >= 2) {}, max iterations {}",
            small.len(),
            th.contraction_eps_max,
            fmt_g(worst_ratio),
            worst_iter
        ),
    );

    let cons: Vec<&Consistency> = ok.iter().filter_map(|p| p.consistency.as_ref()).collect();
    let ident = cons
        .iter()
        .map(|c| c.identity_curl.max(c.identity_flux) / c.identity_scale)
        .fold(0.0, f64::max);
    push(
        "identities",
        ident <= th.identity_tol,
        format!("max relative identity defect {}", fmt_g(ident)),
    );
    let (bc, bc_name) = cons
        .iter()
        .flat_map(|c| c.bc.iter())
        .fold((0.0, String::new()), |acc, (n, v)| if *v > acc.0 { (*v, n.clone()) } else { acc });
    push(
        "boundary_conditions",
        bc <= th.bc_tol,
        format!("max boundary-condition defect {} ({})", fmt_g(bc), if bc_name.is_empty() { "-" } else { &bc_name }),
    );
    let gauge = cons
        .iter()
        .map(|c| c.gauge_div.max(c.gauge_curl) / c.gauge_scale)
        .fold(0.0, f64::max);
    push(
        "gauge",
        gauge <= th.gauge_tol,
        format!("max relative div/curl of the gauge field {}", fmt_g(gauge)),
    );

    if with_fits {
        let gated: Vec<&RateFit> = fits.iter().filter(|f| f.gated).collect();
        let bad: Vec<String> = gated
            .iter()
            .filter(|f| f.pass != Some(true))
            .map(|f| format!("{} (n={}) slope {}", f.name, f.grid, f.slope.map_or("-".into(), fmt_g)))
            .chain(fit_errors.iter().filter(|e| e.gated).map(|e| e.reason.clone()))
            .collect();
        push(
            "rates",
            bad.is_empty() && !gated.is_empty(),
            if bad.is_empty() {
                format!("{} gated fits pass", gated.len())
            } else {
                format!("failing: {}", bad.join("; "))
            },
        );
        if cfg.sweep.audits {
            let bad: Vec<String> = spreads
                .iter()
                .filter(|s| !s.pass)
                .map(|s| format!("{} {:.3}", s.name, s.spread))
                .collect();
            push(
                "audit_spread",
                bad.is_empty() && !spreads.is_empty(),
                if bad.is_empty() {
                    format!("{} audits within {}x", spreads.len(), th.audit_spread_max)
                } else {
                    format!("spread above {}x: {}", th.audit_spread_max, bad.join(", "))
                },
            );
        }
    }
    checks
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// A point excluded before solving.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub eps: f64,
    pub grid: usize,
    pub reason: String,
}

/// An audit row tagged with its point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub grid: usize,
    #[serde(flatten)]
    pub audit: EstimateAudit,
}

/// The JSON summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_echo: Config,
    pub points: Vec<PointResult>,
    pub fits: Vec<RateFit>,
    pub fit_errors: Vec<FitError>,
    pub audits: Vec<AuditRow>,
    pub audit_spreads: Vec<AuditSpread>,
    pub skipped: Vec<Skipped>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl Summary {
    /// Assemble fits, spreads and checks from sweep results.
    pub fn build(cfg: &Config, points: Vec<PointResult>, with_fits: bool) -> Self {
        let (fits, fit_errors) = if with_fits { fit_rates(cfg, &points) } else { (Vec::new(), Vec::new()) };
        let spreads = audit_spreads(&points, cfg.sweep.thresholds.audit_spread_max);
        let checks = evaluate_checks(cfg, &points, &fits, &fit_errors, &spreads, with_fits);
        let audits = points
            .iter()
            .flat_map(|p| p.audits.iter().map(|a| AuditRow { grid: p.grid, audit: a.clone() }))
            .collect();
        let skipped = points
            .iter()
            .filter(|p| p.status == PointStatus::Skipped)
            .map(|p| Skipped {
                eps: p.eps,
                grid: p.grid,
                reason: p.error.clone().unwrap_or_default(),
            })
            .collect();
        let pass = checks.iter().all(|c| c.pass);
        Summary {
            config_echo: cfg.clone(),
            points,
            fits,
            fit_errors,
            audits,
            audit_spreads: spreads,
            skipped,
            checks,
            pass,
        }
    }
}

/// 17 significant digits in scientific notation.
pub fn sci17(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV of every quantity of every successful point.
pub fn gaps_csv(points: &[PointResult]) -> String {
    let mut s = String::from("name,eps,eta,L,grid,value\n");
    for p in points.iter().filter(|p| p.status == PointStatus::Ok) {
        for (name, v) in &p.quantities {
            let _ = writeln!(
                s,
                "{name},{},{},{},{},{}",
                sci17(p.eps),
                sci17(p.eta),
                sci17(p.length),
                p.grid,
                sci17(*v)
            );
        }
    }
    s
}

/// CSV of every audit row.
pub fn audits_csv(rows: &[AuditRow]) -> String {
    let mut s = String::from("name,eps,eta,L,grid,p,lhs,rhs,constant\n");
    for r in rows {
        let a = &r.audit;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            a.key(),
            sci17(a.eps),
            sci17(a.eta),
            sci17(a.length),
            r.grid,
            a.p,
            sci17(a.lhs),
            sci17(a.rhs),
            a.constant.map(sci17).unwrap_or_default()
        );
    }
    s
}

/// Self-contained gnuplot script: one log–log plot per fitted quantity with
/// the data inlined and the fitted power law overlaid.
pub fn plot_script(fits: &[RateFit]) -> String {
    let mut s = String::from(
        "# Log-log plots of the fitted gap quantities.\n\
         # Usage: gnuplot plots.gp  (writes one PNG per quantity)\n\
         set terminal pngcairo size 800,600\n\
         set logscale xy\n\
         set xlabel 'eps'\n\
         set key top left\n",
    );
    for f in fits.iter().filter(|f| f.slope.is_some()) {
        let (slope, icpt) = (f.slope.unwrap_or(0.0), f.intercept.unwrap_or(0.0));
        let block = format!("{}_n{}", f.name, f.grid);
        let _ = writeln!(s, "\n${block} << EOD");
        for (e, v) in f.eps.iter().zip(&f.values) {
            let _ = writeln!(s, "{} {}", sci17(*e), sci17(*v));
        }
        let _ = writeln!(s, "EOD");
        let _ = writeln!(s, "set output '{block}.png'");
        let _ = writeln!(s, "set ylabel '{}'", f.name);
        let _ = writeln!(
            s,
            "plot ${block} using 1:2 with points pt 7 title '{} (grid {})', \\\n     exp({}) * x**({}) with lines title sprintf('slope %.3f', {})",
            f.name,
            f.grid,
            sci17(icpt),
            sci17(slope),
            sci17(slope)
        );
    }
    s
}

/// Paths of the emitted files.
#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub gaps_csv: PathBuf,
    pub audits_csv: PathBuf,
    pub plot_script: PathBuf,
    pub summary_json: PathBuf,
    pub dumps: Vec<PathBuf>,
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Write CSVs, the plot script, the JSON summary and any field dumps.
pub fn emit_report(summary: &Summary, dumps: &[FieldDump], dir: &Path) -> Result<ReportFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = ReportFiles {
        gaps_csv: dir.join("gaps.csv"),
        audits_csv: dir.join("audits.csv"),
        plot_script: dir.join("plots.gp"),
        summary_json: dir.join("summary.json"),
        dumps: dumps
            .iter()
            .map(|d| dir.join(FieldDump::file_name(d.params.eps, d.nodes)))
            .collect(),
    };
    write_file(&files.gaps_csv, &gaps_csv(&summary.points))?;
    write_file(&files.audits_csv, &audits_csv(&summary.audits))?;
    write_file(&files.plot_script, &plot_script(&summary.fits))?;
    let json = serde_json::to_string_pretty(summary).map_err(|e| Error::Config(e.to_string()))?;
    write_file(&files.summary_json, &(json + "\n"))?;
    for (d, p) in dumps.iter().zip(&files.dumps) {
        d.save(p)?;
    }
    Ok(files)
}
