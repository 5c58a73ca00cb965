//! Built-in verification suites: manufactured-solution convergence studies
//! for every discrete operator family and exact-solution oracles of the
//! background flow and the Picard iteration.

use crate::background::{self, BoundaryData, FlowParams};
use crate::elliptic::{
    solve_biharmonic, solve_poisson, BcKind, BiharmonicProblem, BiharmonicSide, OperatorKind, PoissonBc, PoissonProblem,
    SideKinds,
};
use crate::error::Result;
use crate::grid::{self, Grid, VectorField};
use crate::homogenize::Lift;
use crate::linsolve::{solve_inflow_ode, transport_march, LinearSolver};
use crate::picard::{self, Frame, PicardOptions};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Error-reduction study over successive grid doublings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderCheck {
    pub name: String,
    pub grids: Vec<usize>,
    pub errors: Vec<f64>,
    /// errors[k] / errors[k + 1].
    pub ratios: Vec<f64>,
    pub min_ratio: f64,
    pub max_ratio: Option<f64>,
    pub note: String,
    pub pass: bool,
}

impl OrderCheck {
    fn new(name: &str, grids: Vec<usize>, errors: Vec<f64>, min_ratio: f64, max_ratio: Option<f64>, note: String) -> Self {
        let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
        let pass = !ratios.is_empty()
            && ratios
                .iter()
                .all(|r| *r >= min_ratio && max_ratio.map_or(true, |m| *r <= m));
        OrderCheck {
            name: name.to_string(),
            grids,
            errors,
            ratios,
            min_ratio,
            max_ratio,
            note,
            pass,
        }
    }
}

/// A quantity that must vanish (up to `tol`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactCheck {
    pub name: String,
    pub value: f64,
    pub tol: f64,
    pub pass: bool,
}

impl ExactCheck {
    fn new(name: &str, value: f64, tol: f64) -> Self {
        ExactCheck {
            name: name.to_string(),
            value,
            tol,
            pass: value.is_finite() && value <= tol,
        }
    }
}

/// Second-order window for grid-doubling ratios.
pub const SECOND_ORDER: (f64, f64) = (3.2, 4.8);
/// Lower bound for first-order ratios.
pub const FIRST_ORDER_MIN: f64 = 1.8;
/// Rounding allowance of the incompressible Navier–Stokes oracle.
pub const NS_ROUNDOFF: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Manufactured solutions
// ---------------------------------------------------------------------------

fn poisson_error(n: usize, op: OperatorKind, k: SideKinds) -> Result<f64> {
    use BcKind::Dirichlet as D;
    let l = 0.25;
    let g = Grid::square(n, l)?;
    let a = PI / l;
    let b = PI / 2.0;
    let exact = |x: f64, y: f64| (a * x).sin() * (b * y).sin() + x * y + 0.5 * (1.3 * y).cos();
    let ux = |x: f64, y: f64| a * (a * x).cos() * (b * y).sin() + y;
    let uy = |x: f64, y: f64| b * (a * x).sin() * (b * y).cos() + x - 0.65 * (1.3 * y).sin();
    let rhs = g.sample(|x, y| -(a * a + b * b) * (a * x).sin() * (b * y).sin() - 0.845 * (1.3 * y).cos());
    let mut bc = PoissonBc::homogeneous(&g, k);
    for j in 0..=g.ny {
        let y = g.y(j);
        bc.x0[j] = if k.x0 == D { exact(0.0, y) } else { ux(0.0, y) };
        bc.xl[j] = if k.xl == D { exact(l, y) } else { ux(l, y) };
    }
    for i in 0..=g.nx {
        let x = g.x(i);
        bc.y0[i] = if k.y0 == D { exact(x, 0.0) } else { uy(x, 0.0) };
        bc.y2[i] = if k.y2 == D { exact(x, 2.0) } else { uy(x, 2.0) };
    }
    let sol = solve_poisson(&PoissonProblem {
        op,
        rhs,
        bc,
        compat_tol: 1.0,
    })?;
    let mut err = sol.sub(&g.sample(exact));
    if k.all_neumann() {
        // Solutions are defined up to a constant: compare mean-free parts.
        let mean = grid::integrate(&err) / (l * 2.0);
        err = err.map(|e| e - mean);
    }
    Ok(err.max_abs())
}

/// Poisson condition patterns (x = 0, x = L, y = 0, y = 2) exercised by the solver.
pub fn poisson_patterns() -> Vec<(&'static str, SideKinds)> {
    use BcKind::{Dirichlet as D, Neumann as N};
    let k = |x0, xl, y0, y2| SideKinds { x0, xl, y0, y2 };
    vec![
        ("dirichlet", k(D, D, D, D)),
        ("curl_stream", k(D, N, D, D)),
        ("flux", k(D, N, N, N)),
        ("potential", k(N, D, N, N)),
        ("neumann", k(N, N, N, N)),
    ]
}

/// Poisson convergence for every pattern and both Laplacian stencils.
pub fn poisson_orders(grids: &[usize]) -> Result<Vec<OrderCheck>> {
    let mut v = Vec::new();
    for op in [OperatorKind::Compact, OperatorKind::Composed] {
        for (name, k) in poisson_patterns() {
            let errs = grids.iter().map(|&n| poisson_error(n, op, k)).collect::<Result<Vec<_>>>()?;
            let label = format!("poisson_{}_{name}", if op == OperatorKind::Compact { "compact" } else { "composed" });
            v.push(OrderCheck::new(&label, grids.to_vec(), errs, SECOND_ORDER.0, Some(SECOND_ORDER.1), String::new()));
        }
    }
    Ok(v)
}

fn biharmonic_error(n: usize) -> Result<f64> {
    let l = 0.25;
    let g = Grid::square(n, l)?;
    let (k, m, ph): (f64, f64, f64) = (6.0, 1.3, 0.3);
    let s = |x: f64, d: usize| k.powi(d as i32) * (k * x + ph + d as f64 * PI / 2.0).sin();
    let c = |y: f64, d: usize| m.powi(d as i32) * (m * y + d as f64 * PI / 2.0).cos();
    // u = sin(kx + φ) cos(my) + 0.1 x y² (the polynomial part is biharmonic).
    let u = |x: f64, y: f64| s(x, 0) * c(y, 0) + 0.1 * x * y * y;
    let dx = |x: f64, y: f64, d: usize| s(x, d) * c(y, 0) + if d == 1 { 0.1 * y * y } else { 0.0 };
    let dy = |x: f64, y: f64, d: usize| {
        s(x, 0) * c(y, d)
            + match d {
                1 => 0.2 * x * y,
                2 => 0.2 * x,
                _ => 0.0,
            }
    };
    let ys = g.ys();
    let xs = g.xs();
    let rhs = g.sample(|x, y| (k * k + m * m).powi(2) * s(x, 0) * c(y, 0));
    let p = BiharmonicProblem {
        rhs,
        x0: BiharmonicSide::Hinged {
            value: ys.iter().map(|&y| u(0.0, y)).collect(),
            d2: ys.iter().map(|&y| dx(0.0, y, 2)).collect(),
        },
        xl: BiharmonicSide::Free {
            d1: ys.iter().map(|&y| dx(l, y, 1)).collect(),
            d3: ys.iter().map(|&y| dx(l, y, 3)).collect(),
        },
        y0: BiharmonicSide::Clamped {
            value: xs.iter().map(|&x| u(x, 0.0)).collect(),
            d1: xs.iter().map(|&x| dy(x, 0.0, 1)).collect(),
        },
        y2: BiharmonicSide::Hinged {
            value: xs.iter().map(|&x| u(x, 2.0)).collect(),
            d2: xs.iter().map(|&x| dy(x, 2.0, 2)).collect(),
        },
    };
    let sol = solve_biharmonic(&p)?;
    Ok(sol.sub(&g.sample(u)).max_abs())
}

/// Biharmonic convergence with hinged, free and clamped sides.
pub fn biharmonic_order(grids: &[usize]) -> Result<OrderCheck> {
    let errs = grids.iter().map(|&n| biharmonic_error(n)).collect::<Result<Vec<_>>>()?;
    Ok(OrderCheck::new("biharmonic", grids.to_vec(), errs, SECOND_ORDER.0, Some(SECOND_ORDER.1), String::new()))
}

fn inflow_ode_error(n: usize) -> Result<f64> {
    let h = 2.0 / n as f64;
    let (gamma, c) = (1.4, 0.05);
    let ys: Vec<f64> = (0..=n).map(|k| k as f64 * h).collect();
    let v0 = |y: f64| (PI * y / 2.0).sin() * y * (2.0 - y);
    let v0p = |y: f64| (PI / 2.0) * (PI * y / 2.0).cos() * y * (2.0 - y) + (PI * y / 2.0).sin() * (2.0 - 2.0 * y);
    let w = |y: f64| y.cos() + 0.5 * y;
    let wp = |y: f64| -y.sin() + 0.5;
    let f: Vec<f64> = ys.iter().map(|&y| gamma * w(y) + c * (v0p(y) * w(y) + v0(y) * wp(y))).collect();
    let vv: Vec<f64> = ys.iter().map(|&y| v0(y)).collect();
    let sol = solve_inflow_ode(&vv, &f, gamma, c, h)?;
    Ok(sol.iter().zip(&ys).map(|(a, &y)| (a - w(y)).abs()).fold(0.0, f64::max))
}

/// Convergence of the inflow density ODE γw + c(v⁰w)′ = f.
pub fn inflow_ode_order(grids: &[usize]) -> Result<OrderCheck> {
    let errs = grids.iter().map(|&n| inflow_ode_error(n)).collect::<Result<Vec<_>>>()?;
    Ok(OrderCheck::new("inflow_ode", grids.to_vec(), errs, SECOND_ORDER.0, Some(SECOND_ORDER.1), String::new()))
}

/// Transport coefficient used by the manufactured transport problem.
pub const TRANSPORT_COEFF: f64 = 0.05;

fn transport_error(n: usize) -> Result<f64> {
    let g = Grid::new(n, 16, 0.25)?;
    let (cu, r, r0, gamma, k) = (1.3, 0.7, 0.2, 1.4, TRANSPORT_COEFF);
    let ueps = VectorField {
        u: g.constant(cu),
        v: g.sample(|x, y| 0.05 * x * y * (2.0 - y)),
    };
    // With v vanishing on the walls and ρ independent of y, the y-transport
    // term drops out: ρ = R/γ + (ρ₀ − R/γ) exp(−γx/(k c)).
    let rho = transport_march(&ueps, &g.constant(r), &vec![r0; g.ny + 1], gamma, k)?;
    let exact = g.sample(|x, _| r / gamma + (r0 - r / gamma) * (-gamma * x / (k * cu)).exp());
    Ok(rho.sub(&exact).max_abs())
}

/// Convergence of the upwind transport march (first order).
pub fn transport_order(grids: &[usize]) -> Result<OrderCheck> {
    let errs = grids.iter().map(|&n| transport_error(n)).collect::<Result<Vec<_>>>()?;
    let note = format!("transport coefficient k = {TRANSPORT_COEFF} (the solver uses k = 2 eps eta^2)");
    Ok(OrderCheck::new("transport", grids.to_vec(), errs, FIRST_ORDER_MIN, None, note))
}

// ---------------------------------------------------------------------------
// Exact-solution oracles
// ---------------------------------------------------------------------------

/// Result of the Couette oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouetteOutcome {
    pub iterations: usize,
    pub remainder_max: f64,
    /// Largest interior residual of the full equations over their scale.
    pub residual: f64,
    pub scale: f64,
}

/// Couette flow (α₂ = 0) with zero data: one Picard iteration, zero remainder.
pub fn couette_oracle(nodes: usize, eps: f64) -> Result<CouetteOutcome> {
    let g = Grid::square(nodes - 1, 0.25)?;
    let mut p = FlowParams::with_eps(eps);
    p.alpha2 = 0.0;
    let lift = Lift::zero(&g);
    let rbar = background::background_density(&p, &BoundaryData::zero(), &g)?;
    let frame = Frame::new(&p, &lift, &rbar)?;
    let solver = LinearSolver::new(&g, &p)?;
    let res = picard::picard_iterate(&solver, &frame, &PicardOptions::default())?;
    let (w, rho, _) = picard::reconstruct(&frame, &res.state);
    let nl = picard::nonlinear_residual(&w, &rho, &p)?;
    Ok(CouetteOutcome {
        iterations: res.report.rows.len(),
        remainder_max: res.state.u.max_abs().max(res.state.v.max_abs()).max(res.state.rho.max_abs()),
        residual: nl.max_interior() / nl.scale,
        scale: nl.scale,
    })
}

/// Exact-solution checks of the background flow on a `nodes`² grid.
pub fn background_oracles(nodes: usize) -> Result<Vec<ExactCheck>> {
    let g = Grid::square(nodes - 1, 0.25)?;
    let mut v = Vec::new();
    for (label, a2) in [("poiseuille", 0.5), ("couette", 0.0)] {
        let mut p = FlowParams::with_eps(1e-2);
        p.alpha2 = a2;
        v.push(ExactCheck::new(&format!("euler_residual_{label}"), background::euler_residual(&p, &g), 0.0));
        // Exact in exact arithmetic; ε is not a dyadic number, so the
        // pressure-gradient difference carries rounding error.
        v.push(ExactCheck::new(&format!("ns_residual_{label}"), background::ns_residual(&p, &g), NS_ROUNDOFF));
    }
    Ok(v)
}

/// Everything `selftest` runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub orders: Vec<OrderCheck>,
    pub exact: Vec<ExactCheck>,
    pub pass: bool,
}

/// Run the complete suite. `nodes` sets the grid of the exact-solution oracles.
pub fn run_selftest(nodes: usize) -> Result<SelftestReport> {
    let mut orders = poisson_orders(&[32, 64, 128])?;
    orders.push(biharmonic_order(&[16, 32, 64])?);
    orders.push(inflow_ode_order(&[64, 128, 256])?);
    orders.push(transport_order(&[64, 128, 256])?);
    let mut exact = background_oracles(nodes)?;
    let c = couette_oracle(nodes, 1e-2)?;
    exact.push(ExactCheck::new("couette_remainder", c.remainder_max, 0.0));
    exact.push(ExactCheck::new("couette_iterations_minus_one", c.iterations as f64 - 1.0, 0.0));
    exact.push(ExactCheck::new("couette_full_residual", c.residual, 1e-10));
    let pass = orders.iter().all(|o| o.pass) && exact.iter().all(|e| e.pass);
    Ok(SelftestReport { orders, exact, pass })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_check_window() {
        let c = OrderCheck::new("t", vec![1, 2, 3], vec![16.0, 4.0, 1.0], 3.2, Some(4.8), String::new());
        assert!(c.pass);
        assert_eq!(c.ratios, vec![4.0, 4.0]);
        let c = OrderCheck::new("t", vec![1, 2], vec![2.0, 1.0], 3.2, Some(4.8), String::new());
        assert!(!c.pass);
    }

    #[test]
    fn ode_and_transport_orders() {
        let o = inflow_ode_order(&[64, 128]).unwrap();
        assert!(o.pass, "{o:?}");
        let t = transport_order(&[64, 128]).unwrap();
        assert!(t.pass, "{t:?}");
    }

    #[test]
    fn biharmonic_is_second_order() {
        let b = biharmonic_order(&[16, 32, 64]).unwrap();
        assert!(b.pass, "{b:?}");
    }

    #[test]
    fn background_oracles_vanish() {
        for c in background_oracles(33).unwrap() {
            assert!(c.pass, "{c:?}");
        }
    }
}
