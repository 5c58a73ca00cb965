//! Numerical audit of the a priori estimates of the linear problem.
//!
//! Each audit evaluates the left-hand side (solution norms) and right-hand
//! side (data norms, plus the solution terms the inequality allows) of one
//! inequality on a computed solve and records the implied constant
//! lhs / rhs. Across an ε-sweep with fixed data, a bounded spread of the
//! implied constants is the computable reading of "C independent of ε, η".
//! Audits never gate the solver.
//!
//! | name             | left-hand side                                                     |
//! |------------------|--------------------------------------------------------------------|
//! | `energy`         | A₁ + A₂ + ‖ρ‖_Y + ε‖H‖_{H²} + ε^{1/2}‖H‖_{H¹} + ‖u‖_{H¹} + ε‖u‖_{H²} + ε\|div u_y(0,·)\| |
//! | `density_lp`     | ‖ρ_x‖_p + ‖ρ_y‖_p + \|ρ_y(0,·)\|_p + ε^{1/p}η^{2/p}‖∇ρ‖_{L∞_x L^p_y}  |
//! | `curl_h2`        | ε‖H‖_{H²} + A₂                                                      |
//! | `velocity_x`     | A₁²                                                                 |
//! | `curl_boundary`  | ε^{3/2}\|H_xx(L,·)\| + ε^{3/2}\|H_xy(0,·)\|                           |
//! | `velocity_h2`    | \|u_x(0,·)\| + ε^{1/2}‖u‖_{H²}                                      |
//! | `density_h2`     | εη‖ρ_xx‖ + ε^{1/2}‖∇ρ_y‖ + εη²\|ρ_xx\|_{L∞L²} + εη\|∇ρ_y\|_{L∞L²} + ε^{1/2}\|ρ_yy(0,·)\| |
//! | `div_higher`     | ε^{3/2}‖∇div u_y‖ + ε²η‖div u_xx‖                                   |
//! | `weighted_third` | ε^{3/2}‖(L−x)∇²u_y‖ + ε²η‖(L−x)u_xxx‖ + ε^{3/2}‖(L−x)∇³v‖         |
//! | `linear_xy`      | ‖ρ‖_Y + ε‖H‖_{H²} + ‖u‖_X                                          |
//! | `linear_ab`      | ‖u‖_B + ‖ρ‖_A                                                       |
//!
//! with H = u_y − v_x, A₁ = ‖u_x‖ + ‖v_x‖ and
//! A₂ = ‖H_x‖ + ε^{1/2}|H_x(0,·)| + ε^{1/2}|H_y(L,·)|, all at t = 1.

use crate::background::{self, FlowParams};
use crate::grid::{self, Grid, ScalarField, Side, Trace, VectorField};
use crate::linsolve::{LinearInput, LinearOutput};
use crate::norms::{self, h1, h2, l2, l2_many, linf_x_l2_y, lp, trace_h1, trace_l2};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// One audited inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateAudit {
    pub name: String,
    pub p: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// lhs / rhs when rhs > 0.
    pub constant: Option<f64>,
    /// Both sides vanish.
    pub vacuous: bool,
    /// rhs = 0 while lhs > 0.
    pub flagged: bool,
    pub eps: f64,
    pub eta: f64,
    pub length: f64,
}

impl EstimateAudit {
    pub fn new(name: &str, p: f64, lhs: f64, rhs: f64, params: &FlowParams, length: f64) -> Self {
        let vacuous = lhs == 0.0 && rhs == 0.0;
        let flagged = rhs == 0.0 && lhs > 0.0;
        EstimateAudit {
            name: name.to_string(),
            p,
            lhs,
            rhs,
            constant: if rhs > 0.0 { Some(lhs / rhs) } else { None },
            vacuous,
            flagged,
            eps: params.eps,
            eta: params.eta,
            length,
        }
    }

    /// Key identifying the audit across parameter points.
    pub fn key(&self) -> String {
        if self.name == "density_lp" {
            format!("{}_p{}", self.name, self.p)
        } else {
            self.name.clone()
        }
    }
}

fn lp_trace(t: &Trace, p: f64) -> f64 {
    let f: Vec<f64> = t.values.iter().map(|v| v.abs().powf(p)).collect();
    grid::trapezoid(&f, t.h).powf(1.0 / p)
}

fn lp_many(fs: &[&ScalarField], p: f64) -> f64 {
    fs.iter().map(|f| lp(f, p).powf(p)).sum::<f64>().powf(1.0 / p)
}

fn w1p(f: &ScalarField, p: f64) -> f64 {
    lp_many(&[f, &grid::dx(f), &grid::dy(f)], p)
}

/// sup over x of (Σ_k ∫|f_k(x, y)|^p dy)^{1/p}.
fn linf_x_lp_y(fs: &[&ScalarField], p: f64) -> f64 {
    let g = fs[0].grid;
    (0..=g.nx)
        .map(|i| {
            fs.iter()
                .map(|f| {
                    let c: Vec<f64> = f.column(i).iter().map(|v| v.abs().powf(p)).collect();
                    grid::trapezoid(&c, g.hy)
                })
                .sum::<f64>()
                .powf(1.0 / p)
        })
        .fold(0.0, f64::max)
}

fn weighted(f: &ScalarField) -> ScalarField {
    let l = f.grid.length;
    f.map_xy(|x, _, v| (l - x) * v)
}

/// Data norms appearing on the right-hand sides.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DataNorms {
    pub g0_l2: f64,
    pub g0_h1: f64,
    pub g0_h2: f64,
    pub g_l2: f64,
    pub g_h1: f64,
    pub curl_g: f64,
    pub curl_g_h1: f64,
    pub g2_0: f64,
    pub g2y_0: f64,
    pub g_0: f64,
    pub g0y_0: f64,
    pub g0yy_0: f64,
    pub g0_0_h1: f64,
}

impl DataNorms {
    pub fn new(input: &LinearInput) -> Self {
        let t = input.t;
        let g0 = input.g0.scale(t);
        let g = input.g.scale(t);
        let curl = grid::curl2d(&g);
        let g0_0 = g0.trace(Side::X0);
        let g2_0 = g.v.trace(Side::X0);
        DataNorms {
            g0_l2: l2(&g0),
            g0_h1: h1(&g0),
            g0_h2: h2(&g0),
            g_l2: l2_many(&[&g.u, &g.v]),
            g_h1: norms::h1_vec(&g),
            curl_g: l2(&curl),
            curl_g_h1: h1(&curl),
            g2_0: trace_l2(&g2_0),
            g2y_0: trace_l2(&g2_0.d1()),
            g_0: (trace_l2(&g.u.trace(Side::X0)).powi(2) + trace_l2(&g2_0).powi(2)).sqrt(),
            g0y_0: trace_l2(&g0_0.d1()),
            g0yy_0: trace_l2(&g0_0.d2()),
            g0_0_h1: trace_h1(&g0_0),
        }
    }

    /// Data side shared by the lower-order estimates.
    pub fn low(&self, eps: f64) -> f64 {
        self.g0_h1 + eps * self.g0y_0 + self.g_l2 + self.curl_g + self.g2_0
    }

    /// Data side shared by the higher-order estimates.
    pub fn high(&self, eps: f64) -> f64 {
        let s = eps.sqrt();
        s * self.g0_h2
            + self.g_l2
            + self.g2_0
            + self.g0_h1
            + self.curl_g
            + s * self.curl_g_h1
            + eps * self.g0yy_0
            + s * self.g_h1
            + s * self.g2y_0
    }
}

/// Derivatives of a solve used by several audits.
struct Derived<'a> {
    out: &'a LinearOutput,
    ux: ScalarField,
    uy: ScalarField,
    vx: ScalarField,
    vy: ScalarField,
    hx: ScalarField,
    rx: ScalarField,
    ry: ScalarField,
    a1: f64,
    a2: f64,
}

impl<'a> Derived<'a> {
    fn new(out: &'a LinearOutput, eps: f64) -> Self {
        let ux = grid::dx(&out.u);
        let uy = grid::dy(&out.u);
        let vx = grid::dx(&out.v);
        let vy = grid::dy(&out.v);
        let hx = grid::dx(&out.hc);
        let hy = grid::dy(&out.hc);
        let rx = grid::dx(&out.rho);
        let ry = grid::dy(&out.rho);
        let a1 = l2(&ux) + l2(&vx);
        let a2 = l2(&hx) + eps.sqrt() * trace_l2(&hx.trace(Side::X0)) + eps.sqrt() * trace_l2(&hy.trace(Side::XL));
        Derived {
            out,
            ux,
            uy,
            vx,
            vy,
            hx,
            rx,
            ry,
            a1,
            a2,
        }
    }

    fn velocity(&self) -> VectorField {
        self.out.velocity()
    }
}

/// All audits of one solve, in a fixed order.
pub fn run_audits(out: &LinearOutput, input: &LinearInput, params: &FlowParams) -> Vec<EstimateAudit> {
    let d = Derived::new(out, params.eps);
    let data = DataNorms::new(input);
    let mut v = vec![audit_energy(&d, &data, params)];
    for p in [2.0, 4.0] {
        v.push(audit_density_lp(&d, input, &data, params, p));
    }
    v.push(audit_curl(&d, &data, params));
    v.push(audit_velocity_x(&d, &data, params));
    v.extend(audit_higher_inner(&d, &data, params));
    v.push(audit_linear_xy(&d, &data, params));
    v.push(audit_linear_ab(&d, &data, params));
    v
}

fn audit_energy(d: &Derived, data: &DataNorms, p: &FlowParams) -> EstimateAudit {
    let e = p.eps;
    let w = d.velocity();
    let div_y0 = grid::dy(&d.ux.add(&d.vy)).trace(Side::X0);
    let lhs = d.a1
        + d.a2
        + norms::norm_y(&d.out.rho, p).total
        + e * h2(&d.out.hc)
        + e.sqrt() * h1(&d.out.hc)
        + norms::h1_vec(&w)
        + e * (h2(&w.u).powi(2) + h2(&w.v).powi(2)).sqrt()
        + e * trace_l2(&div_y0);
    EstimateAudit::new("energy", 2.0, lhs, data.low(e), p, d.out.u.grid.length)
}

/// Density estimate in L^p.
pub fn audit_density(out: &LinearOutput, input: &LinearInput, params: &FlowParams, p: f64) -> EstimateAudit {
    let d = Derived::new(out, params.eps);
    audit_density_lp(&d, input, &DataNorms::new(input), params, p)
}

fn audit_density_lp(d: &Derived, input: &LinearInput, data: &DataNorms, prm: &FlowParams, p: f64) -> EstimateAudit {
    let e = prm.eps;
    let w = e.powf(1.0 / p) * prm.eta.powf(2.0 / p);
    let lhs = lp(&d.rx, p) + lp(&d.ry, p) + lp_trace(&d.ry.trace(Side::X0), p) + w * linf_x_lp_y(&[&d.rx, &d.ry], p);
    let t = input.t;
    let g = input.g.scale(t);
    let g0 = input.g0.scale(t);
    let rhs = w * lp_trace(&g.v.trace(Side::X0), p)
        + lp_many(&[&g.u, &g.v], p)
        + e * lp_trace(&g0.trace(Side::X0).d1(), p)
        + e * h2(&d.out.hc)
        + t * lp_many(&[&d.ux, &d.vx], p)
        + e * w1p(&g0, p);
    let _ = data;
    EstimateAudit::new("density_lp", p, lhs, rhs, prm, d.out.u.grid.length)
}

/// Curl estimate: ε‖H‖_{H²} + A₂ against L A₁ + data.
pub fn audit_curl_from(out: &LinearOutput, input: &LinearInput, params: &FlowParams) -> EstimateAudit {
    audit_curl(&Derived::new(out, params.eps), &DataNorms::new(input), params)
}

fn audit_curl(d: &Derived, data: &DataNorms, p: &FlowParams) -> EstimateAudit {
    let l = d.out.u.grid.length;
    let lhs = p.eps * h2(&d.out.hc) + d.a2;
    let eta2 = p.eta * p.eta;
    let rhs = l * d.a1 + data.g0_l2 + data.curl_g + eta2 * l2_many(&[&d.rx, &d.ry]);
    EstimateAudit::new("curl_h2", 2.0, lhs, rhs, p, l)
}

/// x-derivative estimate A₁² against L A₂² + data.
pub fn audit_a1(out: &LinearOutput, input: &LinearInput, params: &FlowParams) -> EstimateAudit {
    audit_velocity_x(&Derived::new(out, params.eps), &DataNorms::new(input), params)
}

fn audit_velocity_x(d: &Derived, data: &DataNorms, p: &FlowParams) -> EstimateAudit {
    let l = d.out.u.grid.length;
    let e = p.eps;
    let eta2 = p.eta * p.eta;
    let grad_ux = l2_many(&[&grid::dx(&d.ux), &grid::dy(&d.ux), &grid::dx(&d.vx), &grid::dy(&d.vx)]);
    let rhs = l * d.a2.powi(2)
        + l * e * e * grad_ux.powi(2)
        + data.g0_h1.powi(2)
        + data.g2_0.powi(2)
        + e * data.g0_0_h1.powi(2)
        + eta2 * l2_many(&[&d.rx, &d.ry]).powi(2)
        + eta2 * eta2 * trace_l2(&d.rx.trace(Side::XL)).powi(2)
        + data.g_l2.powi(2)
        + l2(&d.rx) * data.g0_l2;
    EstimateAudit::new("velocity_x", 2.0, d.a1.powi(2), rhs, p, l)
}

/// The five higher-order audits.
pub fn audit_higher(out: &LinearOutput, input: &LinearInput, params: &FlowParams) -> Vec<EstimateAudit> {
    audit_higher_inner(&Derived::new(out, params.eps), &DataNorms::new(input), params)
}

fn audit_higher_inner(d: &Derived, data: &DataNorms, p: &FlowParams) -> Vec<EstimateAudit> {
    let l = d.out.u.grid.length;
    let e = p.eps;
    let s = e.sqrt();
    let e32 = e * s;
    let eta = p.eta;
    let eta2 = eta * eta;
    let high = data.high(e);
    let w = d.velocity();

    let hxx = grid::dx(&d.hx);
    let hxy = grid::dy(&d.hx);
    let lhs15 = e32 * trace_l2(&hxx.trace(Side::XL)) + e32 * trace_l2(&hxy.trace(Side::X0));
    let rhs15 = e * data.g0y_0 + data.g_l2 + data.g2_0 + data.g0_h1 + data.curl_g + s * data.curl_g_h1;

    let h2u = (h2(&w.u).powi(2) + h2(&w.v).powi(2)).sqrt();
    let lhs16 = trace_l2(&d.ux.trace(Side::X0)) + s * h2u;
    let rxy_l = grid::dy(&d.rx).trace(Side::XL);
    let rhs16 = s * data.g0_h2
        + data.g_l2
        + data.g_0
        + data.g0_h1
        + data.curl_g
        + l.sqrt() * s * eta2 * trace_l2(&rxy_l)
        + s * data.g_h1;

    let rxx = grid::dx(&d.rx);
    let ryx = grid::dx(&d.ry);
    let ryy = grid::dy(&d.ry);
    let lhs17 = e * eta * l2(&rxx)
        + s * l2_many(&[&ryx, &ryy])
        + e * eta2 * linf_x_l2_y(&[&rxx])
        + e * eta * linf_x_l2_y(&[&ryx, &ryy])
        + s * trace_l2(&ryy.trace(Side::X0));

    let div = d.ux.add(&d.vy);
    let div_y = grid::dy(&div);
    let div_xx = grid::dxx(&div);
    let lhs18 = e32 * l2_many(&[&grid::dx(&div_y), &grid::dy(&div_y)]) + e * e * eta * l2(&div_xx);

    let uyx = grid::dx(&d.uy);
    let uyy = grid::dy(&d.uy);
    let hess_uy = [grid::dx(&uyx), grid::dy(&uyx), grid::dx(&uyy), grid::dy(&uyy)];
    let wh: Vec<ScalarField> = hess_uy.iter().map(weighted).collect();
    let uxxx = grid::dx(&grid::dxx(&w.u));
    let v3 = third_derivatives(&w.v);
    let wv3: Vec<ScalarField> = v3.iter().map(weighted).collect();
    let hess_ref: Vec<&ScalarField> = wh.iter().collect();
    let v3_ref: Vec<&ScalarField> = wv3.iter().collect();
    let lhs19 = e32 * l2_many(&hess_ref) + e * e * eta * l2(&weighted(&uxxx)) + e32 * l2_many(&v3_ref);

    vec![
        EstimateAudit::new("curl_boundary", 2.0, lhs15, rhs15, p, l),
        EstimateAudit::new("velocity_h2", 2.0, lhs16, rhs16, p, l),
        EstimateAudit::new("density_h2", 2.0, lhs17, high, p, l),
        EstimateAudit::new("div_higher", 2.0, lhs18, high, p, l),
        EstimateAudit::new("weighted_third", 2.0, lhs19, high, p, l),
    ]
}

/// All third derivatives f_xxx, f_xxy (×3), f_xyy (×3), f_yyy, each
/// mixed derivative counted with its multiplicity.
fn third_derivatives(f: &ScalarField) -> Vec<ScalarField> {
    let fx = grid::dx(f);
    let fy = grid::dy(f);
    let fxx = grid::dx(&fx);
    let fxy = grid::dy(&fx);
    let fyy = grid::dy(&fy);
    let fxxy = grid::dy(&fxx);
    let fxyy = grid::dy(&fxy);
    vec![
        grid::dx(&fxx),
        fxxy.clone(),
        fxxy.clone(),
        fxxy,
        fxyy.clone(),
        fxyy.clone(),
        fxyy,
        grid::dy(&fyy),
    ]
}

/// The weighted third-derivative terms and their unweighted counterparts
/// (used to check ‖(L−x)f‖ ≤ L‖f‖).
pub fn weighted_vs_unweighted(out: &LinearOutput) -> (f64, f64) {
    let uy = grid::dy(&out.u);
    let uyx = grid::dx(&uy);
    let uyy = grid::dy(&uy);
    let hess = [grid::dx(&uyx), grid::dy(&uyx), grid::dx(&uyy), grid::dy(&uyy)];
    let w: Vec<ScalarField> = hess.iter().map(weighted).collect();
    let wr: Vec<&ScalarField> = w.iter().collect();
    let ur: Vec<&ScalarField> = hess.iter().collect();
    (l2_many(&wr), out.u.grid.length * l2_many(&ur))
}

fn audit_linear_xy(d: &Derived, data: &DataNorms, p: &FlowParams) -> EstimateAudit {
    let w = d.velocity();
    let lhs = norms::norm_y(&d.out.rho, p).total + p.eps * h2(&d.out.hc) + norms::norm_x(&w, p).total;
    EstimateAudit::new("linear_xy", 2.0, lhs, data.low(p.eps), p, d.out.u.grid.length)
}

fn audit_linear_ab(d: &Derived, data: &DataNorms, p: &FlowParams) -> EstimateAudit {
    let w = d.velocity();
    let lhs = norms::norm_b(&w, p, 4.0).total + norms::norm_a(&d.out.rho, p).total;
    EstimateAudit::new("linear_ab", 4.0, lhs, data.high(p.eps), p, d.out.u.grid.length)
}

/// Fixed smooth data for audit sweeps: transport velocity (u_s, v⁰) with a
/// small wall-vanishing v⁰, and unit-size smooth right-hand sides.
pub fn standard_audit_input(g: &Grid, params: &FlowParams) -> LinearInput {
    let ueps = VectorField {
        u: background::us_field(params, g),
        v: g.sample(|x, y| 0.01 * (PI * y / 2.0).sin() * y * (2.0 - y) * (1.0 + x)),
    };
    let g0 = g.sample(|x, y| (3.0 * x).sin() * (1.5 * y).cos());
    let gv = VectorField {
        u: g.sample(|x, y| (1.0 + x) * (PI * y).cos()),
        v: g.sample(|x, y| x * y * (2.0 - y)),
    };
    LinearInput::new(ueps, g0, gv)
}

/// Spread max/min of the implied constants of one audit key across points.
pub fn constant_spread(audits: &[EstimateAudit]) -> Option<f64> {
    let cs: Vec<f64> = audits.iter().filter_map(|a| a.constant).filter(|c| *c > 0.0).collect();
    if cs.is_empty() {
        return None;
    }
    let max = cs.iter().cloned().fold(f64::MIN, f64::max);
    let min = cs.iter().cloned().fold(f64::MAX, f64::min);
    Some(max / min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linsolve::LinearSolver;

    fn solve(g: &Grid, p: &FlowParams, input: &LinearInput) -> LinearOutput {
        LinearSolver::new(g, p).unwrap().solve(input).unwrap()
    }

    #[test]
    fn zero_data_is_vacuous() {
        let g = Grid::square(16, 0.25).unwrap();
        let p = FlowParams::with_eps(1e-2);
        let mut inp = standard_audit_input(&g, &p);
        inp.g0 = g.zeros();
        inp.g = VectorField::zeros(&g);
        let out = solve(&g, &p, &inp);
        let audits = run_audits(&out, &inp, &p);
        assert_eq!(audits.len(), 12);
        assert!(audits.iter().all(|a| a.vacuous && a.constant.is_none() && !a.flagged));
    }

    #[test]
    fn smooth_data_gives_finite_constants() {
        let g = Grid::square(24, 0.25).unwrap();
        let p = FlowParams::with_eps(1e-2);
        let inp = standard_audit_input(&g, &p);
        let out = solve(&g, &p, &inp);
        for a in run_audits(&out, &inp, &p) {
            assert!(a.lhs >= 0.0 && a.rhs > 0.0, "{a:?}");
            let c = a.constant.unwrap();
            assert!(c.is_finite() && c > 0.0, "{a:?}");
        }
    }

    #[test]
    fn audits_are_deterministic() {
        let g = Grid::square(16, 0.25).unwrap();
        let p = FlowParams::with_eps(1e-2);
        let inp = standard_audit_input(&g, &p);
        let out = solve(&g, &p, &inp);
        assert_eq!(run_audits(&out, &inp, &p), run_audits(&out, &inp, &p));
    }

    #[test]
    fn weight_bound_holds() {
        let g = Grid::square(24, 0.25).unwrap();
        let p = FlowParams::with_eps(1e-2);
        let inp = standard_audit_input(&g, &p);
        let out = solve(&g, &p, &inp);
        let (w, u) = weighted_vs_unweighted(&out);
        assert!(w <= u, "{w} {u}");
    }

    #[test]
    fn flagged_when_rhs_vanishes() {
        let p = FlowParams::with_eps(1e-2);
        let a = EstimateAudit::new("x", 2.0, 1.0, 0.0, &p, 0.25);
        assert!(a.flagged && a.constant.is_none() && !a.vacuous);
    }

    #[test]
    fn lp_helpers() {
        let g = Grid::square(16, 0.25).unwrap();
        let f = g.constant(2.0);
        // ∫∫ 2^4 = 16 · 0.5 → (8)^{1/4}.
        assert!((lp(&f, 4.0) - 8f64.powf(0.25)).abs() < 1e-12);
        assert!((linf_x_lp_y(&[&f], 4.0) - 32f64.powf(0.25)).abs() < 1e-12);
        assert!((constant_spread(&[
            EstimateAudit::new("a", 2.0, 1.0, 2.0, &p_dummy(), 0.25),
            EstimateAudit::new("a", 2.0, 3.0, 2.0, &p_dummy(), 0.25),
        ])
        .unwrap()
            - 3.0)
            .abs()
            < 1e-15);
    }

    fn p_dummy() -> FlowParams {
        FlowParams::with_eps(1e-2)
    }
}
