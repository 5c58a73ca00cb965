//! Outer nonlinear iteration.
//!
//! The full solution is expanded around the shear flow as
//!
//! ```text
//! u^ε = u_s + ū + ξ u,   v^ε = v̄ + ξ v,   ρ^ε = 1 − (2/γ)α₂εη²x + η²ρ̄ + η²ξρ,
//! ```
//!
//! with ξ = ε^{1/2+δ} and η²ρ̄ = x h0(y). The remainder (u, v, ρ) solves the
//! linear system of [`crate::linsolve`] with right-hand sides g(u, v, ρ)
//! collecting every nonlinear and data term. Here g is obtained by exact
//! algebra from the full equations, so that a fixed point of the iteration
//! is a solution of the full steady compressible system:
//!
//! ```text
//! g0 = div u + η² u^ε·∇ρ − ξ⁻¹ div(ρ^ε u^ε)
//! g1 = u_s u_x + u_s' v + γρ_x − ξ⁻¹ [ρ^ε u^ε·∇u^ε − εΔu^ε − ε∂x div u^ε + η⁻² ∂x (ρ^ε)^γ] − (viscous terms of u)
//! ```
//!
//! and likewise for g2. Writing r_b = −(2/γ)α₂εx + ρ̄, ρ_b = 1 + η² r_b,
//! U = (u_s + ū, v̄) and N₁ = ū u_x + v̄ u_y + u ū_x + v ū_y,
//! N₂ = ū v_x + v̄ v_y + u v̄_x + v v̄_y, the split parts are
//!
//! ```text
//! g01 = −η²[ξρ div u + r_b div u + ρ div ū + u·∇r_b]
//! g0r = −ξ⁻¹[ρ_b div ū + η² U·∇r_b]
//! g11 = (2α₂ε/ξ − γρ_x)[(ρ^ε)^{γ−1} − 1] − (γ/ξ) ρ̄_x (ρ^ε)^{γ−1} − η²ρ u^ε·∇u^ε
//! g12 = −[ξ u·∇u + N₁] − η² r_b [u_s u_x + u_s' v + N₁ + ξ u·∇u]
//! g1r = −ξ⁻¹ ρ_b U·∇(u_s + ū) + (ε/ξ)(Δū + ∂x div ū)
//! g21 = −γρ_y[(ρ^ε)^{γ−1} − 1] − (γ/ξ) ρ̄_y (ρ^ε)^{γ−1} − η²ρ u^ε·∇v^ε
//! g22 = −[ξ u·∇v + N₂] − η² r_b [u_s v_x + N₂ + ξ u·∇v]
//! g2r = −ξ⁻¹ ρ_b U·∇v̄ + (ε/ξ)(Δv̄ + ∂y div ū)
//! ```
//!
//! Powers (ρ^ε)^{γ−1} − 1 are evaluated as expm1((γ−1) log1p(ρ^ε − 1)) so
//! that the O(η²) deviation from one keeps full relative precision.

use crate::background::{self, BoundaryData, ConditionDefect, FlowParams};
use crate::error::{Error, Result};
use crate::grid::{self, Grid, ScalarField, Side, VectorField};
use crate::homogenize::Lift;
use crate::linsolve::{LinearInput, LinearOutput, LinearSolver};
use crate::norms;
use serde::{Deserialize, Serialize};

/// Remainder triple of the expansion and its iteration index.
#[derive(Debug, Clone)]
pub struct State {
    pub u: ScalarField,
    pub v: ScalarField,
    pub rho: ScalarField,
    pub n: usize,
}

impl State {
    pub fn zero(g: &Grid) -> Self {
        State {
            u: g.zeros(),
            v: g.zeros(),
            rho: g.zeros(),
            n: 0,
        }
    }

    pub fn velocity(&self) -> VectorField {
        VectorField {
            u: self.u.clone(),
            v: self.v.clone(),
        }
    }

    fn from_output(out: &LinearOutput, n: usize) -> Self {
        State {
            u: out.u.clone(),
            v: out.v.clone(),
            rho: out.rho.clone(),
            n,
        }
    }
}

/// Right-hand sides of the remainder system with their split parts.
#[derive(Debug, Clone)]
pub struct GTerms {
    pub g0: ScalarField,
    pub g1: ScalarField,
    pub g2: ScalarField,
    pub g01: ScalarField,
    pub g0r: ScalarField,
    pub g11: ScalarField,
    pub g12: ScalarField,
    pub g1r: ScalarField,
    pub g21: ScalarField,
    pub g22: ScalarField,
    pub g2r: ScalarField,
    /// ‖η² r_b (u_s' v + ξ v u_y)‖∞: the terms that separate the bracket of
    /// g12 above from the shorter grouping (u ū_x + u^ε u_x + v ū_y + v̄ u_y).
    pub grouping_difference: f64,
}

/// State-independent fields of the expansion, computed once per lift.
#[derive(Debug, Clone)]
pub struct Frame {
    pub params: FlowParams,
    pub grid: Grid,
    us: ScalarField,
    usy: ScalarField,
    /// u_s + ū and its derivatives.
    u1: ScalarField,
    u1x: ScalarField,
    u1y: ScalarField,
    vb: ScalarField,
    vbx: ScalarField,
    vby: ScalarField,
    ubx: ScalarField,
    uby: ScalarField,
    div_bar: ScalarField,
    rbar: ScalarField,
    rbar_x: ScalarField,
    rbar_y: ScalarField,
    /// r_b = −(2/γ)α₂εx + ρ̄.
    rb: ScalarField,
    rbx: ScalarField,
    rby: ScalarField,
    g0r: ScalarField,
    g1r: ScalarField,
    g2r: ScalarField,
}

impl Frame {
    pub fn new(params: &FlowParams, lift: &Lift, rbar: &ScalarField) -> Result<Self> {
        let g = lift.ubar.grid;
        if rbar.grid != g {
            return Err(Error::InvalidParameter("background density on a different grid".into()));
        }
        let p = *params;
        let xi = p.xi();
        let eta2 = p.eta * p.eta;
        let us = background::us_field(&p, &g);
        let usy = g.sample(|_, y| background::eval_us_y(&p, y));
        let (ub, vb) = (&lift.ubar, &lift.vbar);
        let ubx = grid::dx(ub);
        let uby = grid::dy(ub);
        let vbx = grid::dx(vb);
        let vby = grid::dy(vb);
        let u1 = us.add(ub);
        let u1x = ubx.clone();
        let u1y = usy.add(&uby);
        let div_bar = ubx.add(&vby);
        let rbar_x = grid::dx(rbar);
        let rbar_y = grid::dy(rbar);
        let c = -(2.0 / p.gamma) * p.alpha2 * p.eps;
        let rb = rbar.map_xy(|x, _, r| c * x + r);
        let rbx = grid::dx(&rb);
        let rby = grid::dy(&rb);
        let rho_b = rb.map(|r| 1.0 + eta2 * r);

        let g0r = rho_b
            .mul(&div_bar)
            .add(&u1.mul(&rbx).add(&vb.mul(&rby)).scale(eta2))
            .scale(-1.0 / xi);
        let visc_u = grid::laplacian(ub).add(&grid::dx(&div_bar));
        let visc_v = grid::laplacian(vb).add(&grid::dy(&div_bar));
        let conv_u = u1.mul(&u1x).add(&vb.mul(&u1y));
        let conv_v = u1.mul(&vbx).add(&vb.mul(&vby));
        let g1r = rho_b.mul(&conv_u).scale(-1.0 / xi).add(&visc_u.scale(p.eps / xi));
        let g2r = rho_b.mul(&conv_v).scale(-1.0 / xi).add(&visc_v.scale(p.eps / xi));
        Ok(Frame {
            params: p,
            grid: g,
            us,
            usy,
            u1,
            u1x,
            u1y,
            vb: vb.clone(),
            vbx,
            vby,
            ubx,
            uby,
            div_bar,
            rbar: rbar.clone(),
            rbar_x,
            rbar_y,
            rb,
            rbx,
            rby,
            g0r,
            g1r,
            g2r,
        })
    }

    /// Transport velocity (u_s + ū + ξu, v̄ + ξv) of a state.
    pub fn transport_velocity(&self, s: &State) -> VectorField {
        let xi = self.params.xi();
        VectorField {
            u: self.u1.axpy(xi, &s.u),
            v: self.vb.axpy(xi, &s.v),
        }
    }

    /// Full density 1 + η² r_b + η²ξρ.
    pub fn full_density(&self, s: &State) -> ScalarField {
        let eta2 = self.params.eta * self.params.eta;
        let xi = self.params.xi();
        self.rb.zip(&s.rho, |r, q| 1.0 + eta2 * (r + xi * q))
    }

    /// Evaluate the g-terms at a state.
    pub fn assemble_g(&self, s: &State) -> Result<GTerms> {
        let p = self.params;
        let xi = p.xi();
        let eta2 = p.eta * p.eta;
        let gamma = p.gamma;

        // (ρ^ε)^{γ−1} − 1 from the deviation η²(r_b + ξρ).
        let dev = self.rb.zip(&s.rho, |r, q| eta2 * (r + xi * q));
        if let Some(m) = dev.values.iter().map(|d| 1.0 + d).find(|r| !(*r > 0.0)) {
            return Err(Error::Positivity(format!(
                "reconstructed density reaches {m:.3e} <= 0; the iterate left the perturbative regime"
            )));
        }
        let pm1 = dev.map(|d| ((gamma - 1.0) * d.ln_1p()).exp_m1());

        let (u, v, rho) = (&s.u, &s.v, &s.rho);
        let ux = grid::dx(u);
        let uy = grid::dy(u);
        let vx = grid::dx(v);
        let vy = grid::dy(v);
        let rx = grid::dx(rho);
        let ry = grid::dy(rho);
        let div = ux.add(&vy);

        // Full velocity and its gradient.
        let ue = self.u1.axpy(xi, u);
        let ve = self.vb.axpy(xi, v);
        let uex = self.u1x.axpy(xi, &ux);
        let uey = self.u1y.axpy(xi, &uy);
        let vex = self.vbx.axpy(xi, &vx);
        let vey = self.vby.axpy(xi, &vy);

        let g01 = rho
            .mul(&div)
            .scale(xi)
            .add(&self.rb.mul(&div))
            .add(&rho.mul(&self.div_bar))
            .add(&u.mul(&self.rbx).add(&v.mul(&self.rby)))
            .scale(-eta2);

        let two_a = 2.0 * p.alpha2 * p.eps / xi;
        let pow = pm1.map(|m| m + 1.0);
        let g11 = rx
            .map(|r| two_a - gamma * r)
            .mul(&pm1)
            .sub(&self.rbar_x.mul(&pow).scale(gamma / xi))
            .sub(&rho.mul(&ue.mul(&uex).add(&ve.mul(&uey))).scale(eta2));
        let g21 = ry
            .scale(-gamma)
            .mul(&pm1)
            .sub(&self.rbar_y.mul(&pow).scale(gamma / xi))
            .sub(&rho.mul(&ue.mul(&vex).add(&ve.mul(&vey))).scale(eta2));

        let quad_u = u.mul(&ux).add(&v.mul(&uy));
        let quad_v = u.mul(&vx).add(&v.mul(&vy));
        let n1 = self
            .ubar()
            .mul(&ux)
            .add(&self.vb.mul(&uy))
            .add(&u.mul(&self.ubx))
            .add(&v.mul(&self.uby));
        let n2 = self
            .ubar()
            .mul(&vx)
            .add(&self.vb.mul(&vy))
            .add(&u.mul(&self.vbx))
            .add(&v.mul(&self.vby));
        let lin_u = self.us.mul(&ux).add(&self.usy.mul(v));
        let lin_v = self.us.mul(&vx);
        let g12 = quad_u
            .scale(xi)
            .add(&n1)
            .add(&self.rb.mul(&lin_u.add(&n1).axpy(xi, &quad_u)).scale(eta2))
            .scale(-1.0);
        let g22 = quad_v
            .scale(xi)
            .add(&n2)
            .add(&self.rb.mul(&lin_v.add(&n2).axpy(xi, &quad_v)).scale(eta2))
            .scale(-1.0);
        let grouping_difference = self
            .rb
            .mul(&self.usy.mul(v).axpy(xi, &v.mul(&uy)))
            .scale(eta2)
            .max_abs();

        let g0 = g01.add(&self.g0r);
        let g1 = g11.add(&g12).add(&self.g1r);
        let g2 = g21.add(&g22).add(&self.g2r);
        Ok(GTerms {
            g0,
            g1,
            g2,
            g01,
            g0r: self.g0r.clone(),
            g11,
            g12,
            g1r: self.g1r.clone(),
            g21,
            g22,
            g2r: self.g2r.clone(),
            grouping_difference,
        })
    }

    fn ubar(&self) -> ScalarField {
        self.u1.sub(&self.us)
    }

    /// Background density ρ̄.
    pub fn rbar(&self) -> &ScalarField {
        &self.rbar
    }
}

/// One-shot g assembly (builds the frame).
pub fn assemble_g(state: &State, lift: &Lift, rbar: &ScalarField, params: &FlowParams) -> Result<GTerms> {
    Frame::new(params, lift, rbar)?.assemble_g(state)
}

/// One row of the iteration log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    pub n: usize,
    /// ‖uⁿ − uⁿ⁻¹‖_X.
    pub du_x: f64,
    /// ‖ρⁿ − ρⁿ⁻¹‖_Y.
    pub drho_y: f64,
    /// (du_x + drho_y) over the previous step's value (NaN for n = 1).
    pub ratio: f64,
    pub norm_b: f64,
    pub norm_a: f64,
    /// (‖uⁿ‖_B + ‖ρⁿ‖_A) / ε^{σ/2}.
    pub bound_ratio: f64,
    pub inner_iterations: usize,
}

/// Outcome of the outer iteration.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IterationReport {
    pub rows: Vec<IterationRow>,
    pub converged: bool,
    pub residual: Option<NonlinearResidual>,
}

impl IterationReport {
    /// Largest contraction ratio from iteration `from` on.
    pub fn max_ratio_from(&self, from: usize) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.n >= from && r.ratio.is_finite())
            .map(|r| r.ratio)
            .fold(0.0, f64::max)
    }

    pub fn max_bound_ratio(&self) -> f64 {
        self.rows.iter().map(|r| r.bound_ratio).fold(0.0, f64::max)
    }
}

/// Options of the outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Exponent p of the W^{2,p} terms in the B norm.
    pub p: f64,
    /// Ratio above which a step counts as non-contracting.
    pub ratio_limit: f64,
    /// Consecutive non-contracting steps tolerated.
    pub ratio_strikes: usize,
    /// Factor on ε^{σ/2} beyond which the iteration is declared divergent.
    pub envelope_factor: f64,
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions {
            tol: 1e-9,
            max_iter: 50,
            p: 4.0,
            ratio_limit: 0.95,
            ratio_strikes: 3,
            envelope_factor: 10.0,
        }
    }
}

/// Converged remainder, the last linear solve and the log.
#[derive(Debug, Clone)]
pub struct PicardResult {
    pub state: State,
    pub last: LinearOutput,
    pub last_input: LinearInput,
    pub report: IterationReport,
}

/// Run the lagged iteration from `start` (normally the zero state).
pub fn picard_iterate_from(
    solver: &LinearSolver,
    frame: &Frame,
    start: State,
    opts: &PicardOptions,
) -> Result<PicardResult> {
    let mut report = IterationReport::default();
    let (state, last, last_input) = run(solver, frame, start, opts, &mut report)?;
    Ok(PicardResult {
        state,
        last,
        last_input,
        report,
    })
}

/// Like [`picard_iterate_from`], but also returns the log of a failed run.
pub fn picard_iterate_logged(
    solver: &LinearSolver,
    frame: &Frame,
    start: State,
    opts: &PicardOptions,
) -> (Result<PicardResult>, IterationReport) {
    let mut report = IterationReport::default();
    match run(solver, frame, start, opts, &mut report) {
        Ok((state, last, last_input)) => {
            let r = PicardResult {
                state,
                last,
                last_input,
                report: report.clone(),
            };
            (Ok(r), report)
        }
        Err(e) => (Err(e), report),
    }
}

fn run(
    solver: &LinearSolver,
    frame: &Frame,
    start: State,
    opts: &PicardOptions,
    report: &mut IterationReport,
) -> Result<(State, LinearOutput, LinearInput)> {
    let p = frame.params;
    let envelope = p.remainder_bound();
    let mut state = start;
    let mut prev_step = f64::NAN;
    let mut strikes = 0;
    for n in 1..=opts.max_iter {
        let g = frame.assemble_g(&state)?;
        let input = LinearInput::new(
            frame.transport_velocity(&state),
            g.g0,
            VectorField { u: g.g1, v: g.g2 },
        );
        let out = solver.solve_from(&input, Some(&state.velocity()))?;
        let next = State::from_output(&out, n);
        let dw = VectorField {
            u: next.u.sub(&state.u),
            v: next.v.sub(&state.v),
        };
        let du_x = norms::norm_x(&dw, &p).total;
        let drho_y = norms::norm_y(&next.rho.sub(&state.rho), &p).total;
        let step = du_x + drho_y;
        let ratio = step / prev_step;
        let norm_b = norms::norm_b(&next.velocity(), &p, opts.p).total;
        let norm_a = norms::norm_a(&next.rho, &p).total;
        report.rows.push(IterationRow {
            n,
            du_x,
            drho_y,
            ratio,
            norm_b,
            norm_a,
            bound_ratio: (norm_b + norm_a) / envelope,
            inner_iterations: out.inner_iterations,
        });
        if !(norm_a + norm_b).is_finite() || norm_a + norm_b > opts.envelope_factor * envelope {
            return Err(Error::Divergence(format!(
                "iteration {n}: ||u||_B + ||rho||_A = {:.3e} exceeds {}x the bound {envelope:.3e}",
                norm_a + norm_b,
                opts.envelope_factor
            )));
        }
        state = next;
        if step < opts.tol {
            report.converged = true;
            return Ok((state, out, input));
        }
        if ratio > opts.ratio_limit {
            strikes += 1;
            if strikes >= opts.ratio_strikes {
                return Err(Error::NonContraction(format!(
                    "contraction ratio above {} for {strikes} consecutive iterations (last {ratio:.3})",
                    opts.ratio_limit
                )));
            }
        } else {
            strikes = 0;
        }
        prev_step = step;
    }
    Err(Error::NoConvergence(format!(
        "outer iteration did not reach tol {:.1e} in {} iterations",
        opts.tol, opts.max_iter
    )))
}

/// Iterate from the zero state.
pub fn picard_iterate(solver: &LinearSolver, frame: &Frame, opts: &PicardOptions) -> Result<PicardResult> {
    picard_iterate_from(solver, frame, State::zero(&frame.grid), opts)
}

/// Checks on a reconstructed solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    /// |ρ^ε(0, 0) − 1|.
    pub rho_origin: f64,
    /// max_y |ρ^ε_x(0, y) + (2/γ)εη²α₂ − h0(y)|.
    pub inflow_slope: f64,
}

/// Assemble the full fields of the expansion from a remainder state.
pub fn reconstruct(frame: &Frame, state: &State) -> (VectorField, ScalarField, ReconstructionReport) {
    let p = frame.params;
    let eta2 = p.eta * p.eta;
    let w = frame.transport_velocity(state);
    let rho = frame.full_density(state);
    let rx0 = grid::dx(&rho).trace(Side::X0);
    let h0 = frame.rbar_x.trace(Side::X0);
    let target = -(2.0 / p.gamma) * p.eps * eta2 * p.alpha2;
    let inflow_slope = rx0
        .values
        .iter()
        .zip(&h0.values)
        .map(|(r, hb)| (r - target - eta2 * hb).abs())
        .fold(0.0, f64::max);
    let report = ReconstructionReport {
        rho_origin: (rho.at(0, 0) - 1.0).abs(),
        inflow_slope,
    };
    (w, rho, report)
}

/// Residuals of the full steady equations (μ = λ = a = 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearResidual {
    /// ‖div(ρu)‖∞ on interior nodes.
    pub mass: f64,
    pub momentum_x: f64,
    pub momentum_y: f64,
    /// Reference scale: max(‖u‖∞, 1).
    pub scale: f64,
    pub boundary: Vec<ConditionDefect>,
}

impl NonlinearResidual {
    pub fn max_interior(&self) -> f64 {
        self.mass.max(self.momentum_x).max(self.momentum_y)
    }

    pub fn max_boundary(&self) -> f64 {
        self.boundary.iter().map(|c| c.defect).fold(0.0, f64::max)
    }
}

/// Interior residuals of div(ρu) = 0 and
/// ρu·∇u − εΔu − ε∇div u + η⁻²∇ρ^γ = 0.
pub fn nonlinear_residual(w: &VectorField, rho: &ScalarField, params: &FlowParams) -> Result<NonlinearResidual> {
    if rho.values.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::Positivity("density must be positive".into()));
    }
    let p = params;
    let (u, v) = (&w.u, &w.v);
    let ux = grid::dx(u);
    let uy = grid::dy(u);
    let vx = grid::dx(v);
    let vy = grid::dy(v);
    let rx = grid::dx(rho);
    let ry = grid::dy(rho);
    let div = ux.add(&vy);
    let mass = rho.mul(&div).add(&u.mul(&rx)).add(&v.mul(&ry));
    // η⁻² ∂(ρ^γ) = γ ρ^{γ−1} η⁻² ∂ρ.
    let pf = rho.map(|r| p.gamma * r.powf(p.gamma - 1.0) / (p.eta * p.eta));
    let mx = rho
        .mul(&u.mul(&ux).add(&v.mul(&uy)))
        .sub(&grid::laplacian(u).scale(p.eps))
        .sub(&grid::dx(&div).scale(p.eps))
        .add(&pf.mul(&rx));
    let my = rho
        .mul(&u.mul(&vx).add(&v.mul(&vy)))
        .sub(&grid::laplacian(v).scale(p.eps))
        .sub(&grid::dy(&div).scale(p.eps))
        .add(&pf.mul(&ry));
    Ok(NonlinearResidual {
        mass: mass.max_abs_interior(),
        momentum_x: mx.max_abs_interior(),
        momentum_y: my.max_abs_interior(),
        scale: w.max_abs().max(1.0),
        boundary: Vec::new(),
    })
}

/// Defects of the full boundary conditions of a reconstructed solution.
pub fn boundary_defects(
    w: &VectorField,
    rho: &ScalarField,
    bd: &BoundaryData,
    params: &FlowParams,
    tol: f64,
) -> Result<Vec<ConditionDefect>> {
    let g = w.grid();
    let l = g.length;
    let p = params;
    let eta2 = p.eta * p.eta;
    let ys = g.ys();
    let xs = g.xs();
    let uy = grid::dy(&w.u);
    let vx = grid::dx(&w.v);
    let curl_x = grid::dx(&uy.sub(&vx));
    let rx = grid::dx(rho);
    let mut out = Vec::new();
    let mut push = |name: &str, d: f64| {
        out.push(ConditionDefect {
            name: name.to_string(),
            defect: d,
            pass: d <= tol,
        })
    };
    let side_defect = |f: &ScalarField, side: Side, target: &dyn Fn(f64) -> Result<f64>| -> Result<f64> {
        let t = f.trace(side);
        let coords = if side.is_x_side() { &ys } else { &xs };
        let mut m: f64 = 0.0;
        for (val, &c) in t.values.iter().zip(coords) {
            m = m.max((val - target(c)?).abs());
        }
        Ok(m)
    };
    push("v(x,0) = 0", w.v.trace(Side::Y0).max_abs());
    push("v(x,2) = 0", w.v.trace(Side::Y2).max_abs());
    push(
        "u_y(x,0) = u_s'(0) + b0",
        side_defect(&uy, Side::Y0, &|x| Ok(p.us_y(0.0) + bd.bx(&bd.b0, 0, x, l)?))?,
    );
    push(
        "u_y(x,2) = u_s'(2) + b1",
        side_defect(&uy, Side::Y2, &|x| Ok(p.us_y(2.0) + bd.bx(&bd.b1, 0, x, l)?))?,
    );
    push("u(0,y) = u_s + a1", side_defect(&w.u, Side::X0, &|y| Ok(p.us(y) + bd.ay(&bd.a1, 0, y, l)?))?);
    push("v_x(0,y) = a2", side_defect(&vx, Side::X0, &|y| bd.ay(&bd.a2, 0, y, l))?);
    push("v(L,y) = a3", side_defect(&w.v, Side::XL, &|y| bd.ay(&bd.a3, 0, y, l))?);
    push("curl_x(L,y) = a4", side_defect(&curl_x, Side::XL, &|y| bd.ay(&bd.a4, 0, y, l))?);
    let slope = -(2.0 / p.gamma) * p.eps * eta2 * p.alpha2;
    push(
        "rho_x(0,y) = -(2/gamma) eps eta^2 alpha2 + h0",
        side_defect(&rx, Side::X0, &|y| Ok(slope + bd.ay(&bd.h0, 0, y, l)?))?,
    );
    push("rho(0,0) = 1", (rho.at(0, 0) - 1.0).abs());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homogenize;
    use std::f64::consts::PI;

    fn params(eps: f64, alpha2: f64) -> FlowParams {
        FlowParams {
            alpha2,
            ..FlowParams::with_eps(eps)
        }
    }

    fn zero_frame(g: &Grid, p: &FlowParams) -> Frame {
        Frame::new(p, &Lift::zero(g), &g.zeros()).unwrap()
    }

    fn smooth_state(g: &Grid, amp: f64) -> State {
        State {
            u: g.sample(|x, y| amp * x * (PI * y).cos()),
            v: g.sample(|x, y| amp * (2.0 * x).sin() * y * (2.0 - y)),
            rho: g.sample(|x, y| amp * (x * x + 0.3 * x * y)),
            n: 0,
        }
    }

    #[test]
    fn couette_gives_zero_g() {
        let g = Grid::square(16, 0.25).unwrap();
        let p = params(1e-2, 0.0);
        let t = zero_frame(&g, &p).assemble_g(&State::zero(&g)).unwrap();
        for f in [&t.g0, &t.g1, &t.g2] {
            assert_eq!(f.max_abs(), 0.0);
        }
    }

    #[test]
    fn zero_state_gives_data_terms() {
        let g = Grid::square(16, 0.25).unwrap();
        let p = params(1e-2, 0.5);
        let bd = BoundaryData::from_exprs(
            ["sin(pi*y/2)", "0.2*sin(pi*y)", "0.3*sin(pi*y)+0.1*y^2*(2-y)^2", "0.5*sin(pi*y)"],
            "(pi/2)*cos(pi*x/0.25)",
            "-(pi/2)*cos(pi*x/0.25)",
            "0",
        )
        .unwrap()
        .scaled(1e-3);
        let lift = homogenize::build_lift(&bd, &g, 1e-8).unwrap();
        let frame = Frame::new(&p, &lift, &g.zeros()).unwrap();
        let t = frame.assemble_g(&State::zero(&g)).unwrap();
        assert_eq!(t.g01.max_abs(), 0.0);
        assert!(t.g0.sub(&t.g0r).max_abs() == 0.0);
        assert_eq!(t.g12.max_abs(), 0.0);
        assert_eq!(t.g22.max_abs(), 0.0);
    }

    #[test]
    fn split_sums_are_exact() {
        let g = Grid::square(16, 0.25).unwrap();
        let p = params(1e-2, 0.5);
        let rbar = g.sample(|x, y| x * (PI * y).cos() * 0.1);
        let frame = Frame::new(&p, &Lift::zero(&g), &rbar).unwrap();
        let t = frame.assemble_g(&smooth_state(&g, 0.1)).unwrap();
        assert_eq!(t.g0.sub(&t.g01.add(&t.g0r)).max_abs(), 0.0);
        assert_eq!(t.g1.sub(&t.g11.add(&t.g12).add(&t.g1r)).max_abs(), 0.0);
        assert_eq!(t.g2.sub(&t.g21.add(&t.g22).add(&t.g2r)).max_abs(), 0.0);
    }

    /// The linear left-hand side minus g equals ξ⁻¹ times the full residual
    /// (momentum) and ξ⁻¹ times div(ρu) (mass), on every node.
    #[test]
    fn g_terms_reproduce_full_equations() {
        let g = Grid::square(20, 0.25).unwrap();
        let p = params(3e-2, 0.5);
        let xi = p.xi();
        let eta2 = p.eta * p.eta;
        let bd = BoundaryData::from_exprs(
            ["sin(pi*y/2)", "0.2*sin(pi*y)", "0.3*sin(pi*y)+0.1*y^2*(2-y)^2", "0.5*sin(pi*y)"],
            "(pi/2)*cos(pi*x/0.25)",
            "-(pi/2)*cos(pi*x/0.25)",
            "cos(pi*y)",
        )
        .unwrap()
        .scaled(1e-2);
        let bd = BoundaryData {
            h0: bd.h0.scaled(eta2),
            ..bd
        };
        let lift = homogenize::build_lift(&bd, &g, 1e-8).unwrap();
        let rbar = background::background_density(&p, &bd, &g).unwrap();
        let frame = Frame::new(&p, &lift, &rbar).unwrap();
        let s = smooth_state(&g, 0.3);
        let t = frame.assemble_g(&s).unwrap();
        let (w, rho, _) = reconstruct(&frame, &s);
        let us = background::us_field(&p, &g);
        let usy = g.sample(|_, y| p.us_y(y));
        let ux = grid::dx(&s.u);
        let vy = grid::dy(&s.v);
        let div = ux.add(&vy);
        let lhs0 = div.add(&w.u.mul(&grid::dx(&s.rho)).add(&w.v.mul(&grid::dy(&s.rho))).scale(eta2));
        let full_mass = rho
            .mul(&grid::divergence(&w))
            .add(&w.u.mul(&grid::dx(&rho)))
            .add(&w.v.mul(&grid::dy(&rho)));
        let d0 = lhs0.sub(&t.g0).sub(&full_mass.scale(1.0 / xi)).max_abs();
        assert!(d0 < 1e-9, "{d0}");
        let visc = |f: &ScalarField, d: &ScalarField| grid::laplacian(f).add(d).scale(p.eps);
        let lhs1 = us
            .mul(&ux)
            .add(&usy.mul(&s.v))
            .sub(&visc(&s.u, &grid::dx(&div)))
            .add(&grid::dx(&s.rho).scale(p.gamma));
        let lhs2 = us
            .mul(&grid::dx(&s.v))
            .sub(&visc(&s.v, &grid::dy(&div)))
            .add(&grid::dy(&s.rho).scale(p.gamma));
        // Full momentum residual with pressure gradient (γ/η²)ρ^{γ−1}∇ρ.
        let divf = grid::divergence(&w);
        let pf = rho.map(|r| p.gamma * r.powf(p.gamma - 1.0) / eta2);
        let m1 = rho
            .mul(&w.u.mul(&grid::dx(&w.u)).add(&w.v.mul(&grid::dy(&w.u))))
            .sub(&visc(&w.u, &grid::dx(&divf)))
            .add(&pf.mul(&grid::dx(&rho)));
        let m2 = rho
            .mul(&w.u.mul(&grid::dx(&w.v)).add(&w.v.mul(&grid::dy(&w.v))))
            .sub(&visc(&w.v, &grid::dy(&divf)))
            .add(&pf.mul(&grid::dy(&rho)));
        let d1 = lhs1.sub(&t.g1).sub(&m1.scale(1.0 / xi)).max_abs();
        let d2 = lhs2.sub(&t.g2).sub(&m2.scale(1.0 / xi)).max_abs();
        let sc = m1.max_abs().max(m2.max_abs()) / xi;
        assert!(d1 < 1e-8 * sc.max(1.0), "{d1} {sc}");
        assert!(d2 < 1e-8 * sc.max(1.0), "{d2} {sc}");
    }

    #[test]
    fn positivity_is_enforced() {
        let g = Grid::square(8, 0.25).unwrap();
        let p = params(1e-2, 0.0);
        let frame = zero_frame(&g, &p);
        let mut s = State::zero(&g);
        let big = -2.0 / (p.eta * p.eta * p.xi());
        s.rho = g.constant(big);
        assert!(matches!(frame.assemble_g(&s), Err(Error::Positivity(_))));
    }

    #[test]
    fn reconstruct_zero_state() {
        let g = Grid::square(8, 0.25).unwrap();
        let p = params(1e-2, 0.0);
        let (w, rho, rep) = reconstruct(&zero_frame(&g, &p), &State::zero(&g));
        assert!(w.u.sub(&background::us_field(&p, &g)).max_abs() == 0.0);
        assert_eq!(w.v.max_abs(), 0.0);
        assert!(rho.sub(&g.constant(1.0)).max_abs() == 0.0);
        assert_eq!(rep.rho_origin, 0.0);
        assert!(rep.inflow_slope < 1e-15);
    }

    #[test]
    fn couette_residuals_vanish() {
        let g = Grid::square(16, 0.25).unwrap();
        let p = params(1e-2, 0.0);
        let w = VectorField {
            u: background::us_field(&p, &g),
            v: g.zeros(),
        };
        let r = nonlinear_residual(&w, &g.constant(1.0), &p).unwrap();
        assert!(r.max_interior() < 1e-13, "{r:?}");
    }

    #[test]
    fn parallel_flow_mass_defect() {
        let g = Grid::square(32, 0.25).unwrap();
        let p = params(1e-1, 0.5);
        let eta2 = p.eta * p.eta;
        let ig = 1.0 / p.gamma;
        let w = VectorField {
            u: background::us_field(&p, &g),
            v: g.zeros(),
        };
        let rho = g.sample(|x, _| (1.0 - 2.0 * p.eps * eta2 * p.alpha2 * x).powf(ig));
        let r = nonlinear_residual(&w, &rho, &p).unwrap();
        let expected = g
            .sample(|x, y| {
                (2.0 / p.gamma) * p.alpha2 * eta2 * p.eps * p.us(y) * (1.0 - 2.0 * p.eps * eta2 * p.alpha2 * x).powf(ig - 1.0)
            })
            .max_abs_interior();
        assert!((r.mass - expected).abs() < 1e-6 * expected, "{} {}", r.mass, expected);
        assert!(r.momentum_x < 1e-8 && r.momentum_y < 1e-12, "{r:?}");
    }

    #[test]
    fn couette_iteration_is_exact() {
        let g = Grid::square(24, 0.25).unwrap();
        let p = params(1e-2, 0.0);
        let frame = zero_frame(&g, &p);
        let solver = LinearSolver::new(&g, &p).unwrap();
        let res = picard_iterate(&solver, &frame, &PicardOptions::default()).unwrap();
        assert!(res.report.converged);
        assert_eq!(res.report.rows.len(), 1);
        assert_eq!(res.state.u.max_abs() + res.state.v.max_abs() + res.state.rho.max_abs(), 0.0);
    }
}
