//! The solution-space norms A, B, X and Y, evaluated term by term with the
//! grid's difference operators and trapezoid quadrature.

use crate::background::FlowParams;
use crate::grid::{self, ScalarField, Side, VectorField};
use serde::{Deserialize, Serialize};

/// Per-term breakdown of a norm together with its total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub norm: String,
    pub terms: Vec<(String, f64)>,
    pub total: f64,
    pub eps: f64,
    pub eta: f64,
    pub p: f64,
}

impl NormReport {
    fn new(norm: &str, terms: Vec<(String, f64)>, params: &FlowParams, p: f64) -> Self {
        let total = terms.iter().map(|t| t.1).sum();
        NormReport {
            norm: norm.to_string(),
            terms,
            total,
            eps: params.eps,
            eta: params.eta,
            p,
        }
    }

    /// Value of a named term.
    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|t| t.0 == name).map(|t| t.1)
    }
}

/// L² norm over the domain.
pub fn l2(f: &ScalarField) -> f64 {
    l2_many(&[f])
}

/// Square root of the summed squared L² norms (weights of repeated entries
/// count multiply).
pub fn l2_many(fs: &[&ScalarField]) -> f64 {
    fs.iter()
        .map(|f| grid::integrate(&f.map(|v| v * v)))
        .sum::<f64>()
        .max(0.0)
        .sqrt()
}

/// Lᵖ norm over the domain.
pub fn lp(f: &ScalarField, p: f64) -> f64 {
    grid::integrate(&f.map(|v| v.abs().powf(p))).powf(1.0 / p)
}

/// Anisotropic norm ess sup_x |(f₁, f₂, …)(x, ·)|_{L²(0,2)}: the maximum over grid
/// columns of the column L² norm.
pub fn linf_x_l2_y(fs: &[&ScalarField]) -> f64 {
    let Some(first) = fs.first() else { return 0.0 };
    let g = first.grid;
    (0..=g.nx)
        .map(|i| {
            fs.iter()
                .map(|f| {
                    let c: Vec<f64> = f.column(i).iter().map(|v| v * v).collect();
                    grid::trapezoid(&c, g.hy)
                })
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

/// Full H¹ norm of a scalar field.
pub fn h1(f: &ScalarField) -> f64 {
    l2_many(&[f, &grid::dx(f), &grid::dy(f)])
}

/// Full H¹ norm of a vector field.
pub fn h1_vec(w: &VectorField) -> f64 {
    (h1(&w.u).powi(2) + h1(&w.v).powi(2)).sqrt()
}

/// Derivatives of order exactly two (fxx, fxy, fyy).
fn second(f: &ScalarField) -> [ScalarField; 3] {
    [grid::dxx(f), grid::dxy(f), grid::dyy(f)]
}

/// Full H² norm (each distinct derivative of order ≤ 2 once).
pub fn h2(f: &ScalarField) -> f64 {
    let [a, b, c] = second(f);
    l2_many(&[f, &grid::dx(f), &grid::dy(f), &a, &b, &c])
}

/// Frobenius L² norm of the Hessian, the mixed entry counted twice.
pub fn hessian_l2(f: &ScalarField) -> f64 {
    let [a, b, c] = second(f);
    l2_many(&[&a, &b, &b, &c])
}

/// W^{2,p} norm: (Σ_{|k|≤2} ‖∂ᵏf‖_p^p)^{1/p}, distinct multi-indices.
pub fn w2p(f: &ScalarField, p: f64) -> f64 {
    let [a, b, c] = second(f);
    [f.clone(), grid::dx(f), grid::dy(f), a, b, c]
        .iter()
        .map(|d| lp(d, p).powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

/// L²(0, extent) norm of a trace.
pub fn trace_l2(t: &grid::Trace) -> f64 {
    grid::trapezoid(&t.values.iter().map(|v| v * v).collect::<Vec<_>>(), t.h).sqrt()
}

/// Full H¹ norm of a trace, differentiating along the side.
pub fn trace_h1(t: &grid::Trace) -> f64 {
    (trace_l2(t).powi(2) + trace_l2(&t.d1()).powi(2)).sqrt()
}

fn weight_l_minus_x(f: &ScalarField) -> ScalarField {
    let l = f.grid.length;
    f.map_xy(|x, _, v| (l - x) * v)
}

/// Norm A of a density perturbation.
pub fn norm_a(rho: &ScalarField, params: &FlowParams) -> NormReport {
    let e = params.eps;
    let eta = params.eta;
    let rx = grid::dx(rho);
    let ry = grid::dy(rho);
    let rxx = grid::dxx(rho);
    let rxy = grid::dxy(rho);
    let ryy = grid::dyy(rho);
    let tr = rho.trace(Side::X0);
    let terms = vec![
        ("H1".to_string(), l2_many(&[rho, &rx, &ry])),
        (
            "grad_LinfL2".into(),
            e.sqrt() * eta * linf_x_l2_y(&[&rx, &ry]),
        ),
        ("rho_xx".into(), e * eta * l2(&rxx)),
        ("grad_rho_y".into(), e.sqrt() * l2_many(&[&rxy, &ryy])),
        (
            "rho_xx_LinfL2".into(),
            e.powf(1.5) * eta * eta * linf_x_l2_y(&[&rxx]),
        ),
        (
            "grad_rho_y_LinfL2".into(),
            e * eta * linf_x_l2_y(&[&rxy, &ryy]),
        ),
        ("inflow_H1".into(), trace_h1(&tr)),
        ("inflow_rho_yy".into(), e.sqrt() * trace_l2(&tr.d2())),
    ];
    NormReport::new("A", terms, params, 2.0)
}

/// Norm B of a velocity perturbation with integrability exponent `p`.
pub fn norm_b(w: &VectorField, params: &FlowParams, p: f64) -> NormReport {
    let e = params.eps;
    let eta = params.eta;
    let (u, v) = (&w.u, &w.v);
    let curl = grid::curl2d(w);
    let div = grid::divergence(w);
    let div_y = grid::dy(&div);
    let uy = grid::dy(u);
    let [uyxx, uyxy, uyyy] = second(&uy);
    let vxx = grid::dxx(v);
    let vyy = grid::dyy(v);
    let vxxx = grid::dx(&vxx);
    let vxxy = grid::dy(&vxx);
    let vxyy = grid::dx(&vyy);
    let vyyy = grid::dy(&vyy);
    let uxxx = grid::dx(&grid::dxx(u));
    let ep = e.powf(2.0 - 2.0 / p);
    let trace_div = div.trace(Side::X0);
    let wl = weight_l_minus_x;
    let terms = vec![
        ("H1".to_string(), h1_vec(w)),
        (
            "hessian".into(),
            e.sqrt() * (hessian_l2(u).powi(2) + hessian_l2(v).powi(2)).sqrt(),
        ),
        ("curl_H1".into(), e.sqrt() * h1(&curl)),
        (
            "W2p".into(),
            ep * (w2p(u, p).powf(p) + w2p(v, p).powf(p)).powf(1.0 / p),
        ),
        ("curl_W2p".into(), ep * w2p(&curl, p)),
        ("inflow_div_yy".into(), e.powf(1.5) * trace_l2(&trace_div.d2())),
        ("div_xx".into(), e * e * eta * l2(&grid::dxx(&div))),
        (
            "weighted_hessian_u_y".into(),
            e.powf(1.5) * l2_many(&[&wl(&uyxx), &wl(&uyxy), &wl(&uyxy), &wl(&uyyy)]),
        ),
        (
            "weighted_grad3_v".into(),
            e.powf(1.5) * {
                let (a, b, c, d) = (wl(&vxxx), wl(&vxxy), wl(&vxyy), wl(&vyyy));
                l2_many(&[&a, &b, &b, &b, &c, &c, &c, &d])
            },
        ),
        ("weighted_u_xxx".into(), e * e * eta * l2(&wl(&uxxx))),
        (
            "grad_div_y".into(),
            e.powf(1.5) * l2_many(&[&grid::dx(&div_y), &grid::dy(&div_y)]),
        ),
    ];
    NormReport::new("B", terms, params, p)
}

/// Norm X of a velocity iterate.
pub fn norm_x(w: &VectorField, params: &FlowParams) -> NormReport {
    let e = params.eps;
    let curl = grid::curl2d(w);
    let div = grid::divergence(w);
    let terms = vec![
        ("H1".to_string(), h1_vec(w)),
        ("curl_H1".into(), e.sqrt() * h1(&curl)),
        ("H2".into(), e * (h2(&w.u).powi(2) + h2(&w.v).powi(2)).sqrt()),
        ("inflow_div_y".into(), e * trace_l2(&div.trace(Side::X0).d1())),
    ];
    NormReport::new("X", terms, params, 2.0)
}

/// Norm Y of a density iterate.
pub fn norm_y(rho: &ScalarField, params: &FlowParams) -> NormReport {
    let rx = grid::dx(rho);
    let ry = grid::dy(rho);
    let terms = vec![
        ("H1".to_string(), l2_many(&[rho, &rx, &ry])),
        ("inflow_rho_y".into(), trace_l2(&rho.trace(Side::X0).d1())),
        (
            "grad_LinfL2".into(),
            params.eps.sqrt() * params.eta * linf_x_l2_y(&[&rx, &ry]),
        ),
    ];
    NormReport::new("Y", terms, params, 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn unit_params() -> FlowParams {
        FlowParams {
            eps: 1.0,
            eta: 1.0,
            ..FlowParams::with_eps(0.01)
        }
    }

    #[test]
    fn zero_fields_have_zero_norms() {
        let g = Grid::square(16, 0.25).unwrap();
        let p = FlowParams::with_eps(0.01);
        assert_eq!(norm_a(&g.zeros(), &p).total, 0.0);
        assert_eq!(norm_y(&g.zeros(), &p).total, 0.0);
        let w = VectorField::zeros(&g);
        assert_eq!(norm_b(&w, &p, 4.0).total, 0.0);
        assert_eq!(norm_x(&w, &p).total, 0.0);
    }

    #[test]
    fn norm_a_of_linear_profile() {
        let l = 0.25;
        let g = Grid::square(32, l).unwrap();
        let rho = g.sample(|_, y| y);
        let r = norm_a(&rho, &unit_params());
        // Trapezoid error on ∫y² is h²/3 per unit length in x.
        let h = g.hy;
        assert!((r.term("H1").unwrap() - (14.0 * l / 3.0).sqrt()).abs() < h * h);
        assert!((r.term("inflow_H1").unwrap() - (14.0f64 / 3.0).sqrt()).abs() < h * h);
        assert!((r.term("grad_LinfL2").unwrap() - 2f64.sqrt()).abs() < 1e-12);
        for t in ["rho_xx", "grad_rho_y", "rho_xx_LinfL2", "grad_rho_y_LinfL2", "inflow_rho_yy"] {
            assert!(r.term(t).unwrap() < 1e-10, "{t}");
        }
    }

    #[test]
    fn norm_y_of_linear_profile() {
        let l = 0.25;
        let g = Grid::square(64, l).unwrap();
        let r = norm_y(&g.sample(|_, y| y), &unit_params());
        let exact = (14.0 * l / 3.0).sqrt() + 2f64.sqrt() + 2f64.sqrt();
        assert!((r.total - exact).abs() < 1e-3);
    }

    #[test]
    fn homogeneity() {
        let g = Grid::square(24, 0.25).unwrap();
        let p = FlowParams::with_eps(0.05);
        let rho = g.sample(|x, y| (3.0 * x).sin() * y.cos() + x * y);
        let w = VectorField {
            u: g.sample(|x, y| x * x * y),
            v: g.sample(|x, y| (x + y).sin()),
        };
        let c = 2.5;
        let a1 = norm_a(&rho, &p).total;
        let a2 = norm_a(&rho.scale(c), &p).total;
        assert!((a2 - c * a1).abs() < 1e-12 * a2);
        let b1 = norm_b(&w, &p, 4.0).total;
        let b2 = norm_b(&w.scale(c), &p, 4.0).total;
        assert!((b2 - c * b1).abs() < 1e-12 * b2);
    }

    #[test]
    fn column_norm_picks_the_largest_column() {
        let g = Grid::square(16, 0.25).unwrap();
        let f = g.sample(|x, _| x);
        let expect = 0.25 * 2f64.sqrt();
        assert!((linf_x_l2_y(&[&f]) - expect).abs() < 1e-14);
    }
}
