//! Boundary lift (ū, v̄): two biharmonic problems carrying the inhomogeneous
//! boundary data, so the remainder satisfies homogeneous conditions.
//!
//! The u-problem is solved first because the v-problem's second-derivative
//! condition at x = L consumes ū_xy there. The classical lift functions
//! u₀, v₀ are also built and the homogenized problems for û = ū − u₀,
//! v̂ = v̄ − v₀ solved as a cross-check of the direct solves.

use crate::background::{chi, BoundaryData, ConditionDefect};
use crate::elliptic::{BiharmonicProblem, BiharmonicSide};
use crate::error::{Error, Result};
use crate::grid::{self, Grid, ScalarField, Side, VectorField};
use crate::norms;
use crate::sparse::SparseLu;
use serde::{Deserialize, Serialize};

/// Default absolute tolerance on lift trace defects.
pub const LIFT_TOL: f64 = 1e-6;

/// Boundary values of the data needed by the lift, sampled on the grid.
#[derive(Debug, Clone)]
struct Samples {
    a1: Vec<f64>,
    a2: Vec<f64>,
    a3: Vec<f64>,
    a4: Vec<f64>,
    b0: Vec<f64>,
    b1: Vec<f64>,
    a1_0: f64,
    a1_2: f64,
    a2pp: [f64; 2],
    a3pp: [f64; 2],
    b0pp0: f64,
    b1pp0: f64,
    b0p_l: f64,
    b1p_l: f64,
    b0ppp_l: f64,
    b1ppp_l: f64,
}

impl Samples {
    fn new(bd: &BoundaryData, g: &Grid) -> Result<Self> {
        let l = g.length;
        let ny = g.ny + 1;
        let nx = g.nx + 1;
        let ys = |p: &crate::background::Profile| p.sample(0, ny, grid::HEIGHT, l);
        let xs = |p: &crate::background::Profile| p.sample(0, nx, l, l);
        let ay = |p: &crate::background::Profile, k, y| bd.ay(p, k, y, l);
        let bx = |p: &crate::background::Profile, k, x| bd.bx(p, k, x, l);
        Ok(Samples {
            a1: ys(&bd.a1)?,
            a2: ys(&bd.a2)?,
            a3: ys(&bd.a3)?,
            a4: ys(&bd.a4)?,
            b0: xs(&bd.b0)?,
            b1: xs(&bd.b1)?,
            a1_0: ay(&bd.a1, 0, 0.0)?,
            a1_2: ay(&bd.a1, 0, 2.0)?,
            a2pp: [ay(&bd.a2, 2, 0.0)?, ay(&bd.a2, 2, 2.0)?],
            a3pp: [ay(&bd.a3, 2, 0.0)?, ay(&bd.a3, 2, 2.0)?],
            b0pp0: bx(&bd.b0, 2, 0.0)?,
            b1pp0: bx(&bd.b1, 2, 0.0)?,
            b0p_l: bx(&bd.b0, 1, l)?,
            b1p_l: bx(&bd.b1, 1, l)?,
            b0ppp_l: bx(&bd.b0, 3, l)?,
            b1ppp_l: bx(&bd.b1, 3, l)?,
        })
    }
}

/// Blend of a bottom-wall and a top-wall profile with the wall cut-offs.
fn wall_blend(y: f64, bottom: f64, top: f64) -> f64 {
    bottom * chi(2.0 * y) + top * chi(4.0 - 2.0 * y)
}

/// The auxiliary fields h₁ and h₂ built from the corner data.
pub fn build_h1_h2(bd: &BoundaryData, g: &Grid, compat_tol: f64) -> Result<(ScalarField, ScalarField)> {
    let rep = crate::background::check_compatibility(bd, g.length, compat_tol)?;
    if !rep.pass {
        return Err(Error::Compatibility(rep.failing().join(", ")));
    }
    let s = Samples::new(bd, g)?;
    Ok(h_fields(&s, g))
}

/// h₁ and h₂ without the compatibility gate (diagnostics only).
pub fn build_h1_h2_unchecked(bd: &BoundaryData, g: &Grid) -> Result<(ScalarField, ScalarField)> {
    Ok(h_fields(&Samples::new(bd, g)?, g))
}

fn h_fields(s: &Samples, g: &Grid) -> (ScalarField, ScalarField) {
    let l = g.length;
    let mut h1 = g.zeros();
    let mut h2 = g.zeros();
    for i in 0..=g.nx {
        let x = g.x(i);
        for j in 0..=g.ny {
            let y = g.y(j);
            h1.set(
                i,
                j,
                wall_blend(y, s.a1_0 + s.b0[i] * y, s.a1_2 - (2.0 - y) * s.b1[i]),
            );
            h2.set(
                i,
                j,
                wall_blend(
                    y,
                    0.5 * y * y * (s.a2pp[0] * (x - l) + s.a3pp[0]),
                    0.5 * (y - 2.0).powi(2) * (s.a2pp[1] * (x - l) + s.a3pp[1]),
                ),
            );
        }
    }
    (h1, h2)
}

/// The lift and its diagnostics.
#[derive(Debug, Clone)]
pub struct Lift {
    pub ubar: ScalarField,
    pub vbar: ScalarField,
    pub h1: ScalarField,
    pub h2: ScalarField,
    pub u0: ScalarField,
    pub v0: ScalarField,
    /// Discrete H⁴ norm of (ū, v̄).
    pub h4_norm_estimate: f64,
    /// Σ|a_i|_{H⁴} + |b0|_{H⁴} + |b1|_{H⁴}.
    pub data_norm: f64,
    pub report: LiftReport,
}

impl Lift {
    /// The zero lift.
    pub fn zero(g: &Grid) -> Self {
        Lift {
            ubar: g.zeros(),
            vbar: g.zeros(),
            h1: g.zeros(),
            h2: g.zeros(),
            u0: g.zeros(),
            v0: g.zeros(),
            h4_norm_estimate: 0.0,
            data_norm: 0.0,
            report: LiftReport::default(),
        }
    }

    pub fn velocity(&self) -> VectorField {
        VectorField {
            u: self.ubar.clone(),
            v: self.vbar.clone(),
        }
    }

    /// Ratio ‖ū‖_{H⁴}/data norm (0 for zero data).
    pub fn h4_ratio(&self) -> f64 {
        if self.data_norm > 0.0 {
            self.h4_norm_estimate / self.data_norm
        } else {
            0.0
        }
    }
}

/// Boundary identities of the lift measured with one-sided difference
/// operators, and the lifted-vs-direct cross-check.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LiftReport {
    pub identities: Vec<ConditionDefect>,
    /// max |ū_direct − (û + u₀)| and likewise for v̄.
    pub cross_check: f64,
    /// Max-norm of the discrete Δ² of u₀ and v₀ in the interior (source of
    /// the homogenized problems).
    pub lift_source: f64,
    /// Second derivative v̄_xx(L, ·) read back from the solution, minus the
    /// imposed ū_xy(L, ·) − a4.
    pub coupling_readback: f64,
}

/// Discrete H⁴ norm (every ∂x^a∂y^b with a + b ≤ 4 once).
pub fn h4_norm(f: &ScalarField) -> f64 {
    let dxa = |f: &ScalarField, a: usize| -> ScalarField {
        match a {
            0 => f.clone(),
            1 => grid::dx(f),
            2 => grid::dxx(f),
            3 => grid::dx(&grid::dxx(f)),
            _ => grid::dxx(&grid::dxx(f)),
        }
    };
    let dyb = |f: &ScalarField, b: usize| -> ScalarField {
        match b {
            0 => f.clone(),
            1 => grid::dy(f),
            2 => grid::dyy(f),
            3 => grid::dy(&grid::dyy(f)),
            _ => grid::dyy(&grid::dyy(f)),
        }
    };
    let mut s = 0.0;
    for a in 0..=4 {
        let fx = dxa(f, a);
        for b in 0..=(4 - a) {
            s += norms::l2(&dyb(&fx, b)).powi(2);
        }
    }
    s.sqrt()
}

fn defect(name: &str, a: &[f64], b: &[f64], tol: f64) -> ConditionDefect {
    let d = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    ConditionDefect {
        name: name.to_string(),
        defect: d,
        pass: d <= tol,
    }
}

/// Solve the u- and v-lift problems and assemble the lift.
pub fn build_lift(bd: &BoundaryData, g: &Grid, compat_tol: f64) -> Result<Lift> {
    build_lift_with_tol(bd, g, compat_tol, LIFT_TOL)
}

/// As [`build_lift`] with an explicit trace tolerance.
pub fn build_lift_with_tol(bd: &BoundaryData, g: &Grid, compat_tol: f64, lift_tol: f64) -> Result<Lift> {
    let (h1, h2) = build_h1_h2(bd, g, compat_tol)?;
    if bd.is_zero() {
        return Ok(Lift::zero(g));
    }
    let s = Samples::new(bd, g)?;
    let l = g.length;
    let ys = g.ys();
    let xs = g.xs();

    // ---- ū ----
    let uprob = BiharmonicProblem {
        rhs: g.zeros(),
        y0: BiharmonicSide::Clamped {
            value: vec![s.a1_0; g.nx + 1],
            d1: s.b0.clone(),
        },
        y2: BiharmonicSide::Clamped {
            value: vec![s.a1_2; g.nx + 1],
            d1: s.b1.clone(),
        },
        x0: BiharmonicSide::Hinged {
            value: s.a1.clone(),
            d2: ys
                .iter()
                .map(|&y| wall_blend(y, s.b0pp0 * y, s.b1pp0 * (y - 2.0)))
                .collect(),
        },
        xl: BiharmonicSide::Free {
            d1: ys
                .iter()
                .map(|&y| wall_blend(y, s.b0p_l * y, s.b1p_l * (y - 2.0)))
                .collect(),
            d3: ys
                .iter()
                .map(|&y| wall_blend(y, s.b0ppp_l * y, s.b1ppp_l * (y - 2.0)))
                .collect(),
        },
    };
    let (mu, bu) = uprob.assemble()?;
    let lu_u = SparseLu::new(&mu)?;
    let ubar = ScalarField::from_values(*g, lu_u.solve_refined(&mu, &bu, 3)?)?;

    // u₀ = h₁ + [a₁(y) − h₁(0, y)] χ(4x/L).
    let u0 = {
        let mut f = h1.clone();
        for i in 0..=g.nx {
            let c = chi(4.0 * g.x(i) / l);
            for j in 0..=g.ny {
                f.set(i, j, h1.at(i, j) + (s.a1[j] - h1.at(0, j)) * c);
            }
        }
        f
    };
    let ru: Vec<f64> = {
        let m0 = mu.matvec(&u0.values);
        bu.iter().zip(&m0).map(|(b, m)| b - m).collect()
    };
    let uhat = ScalarField::from_values(*g, lu_u.solve_refined(&mu, &ru, 3)?)?;
    let mut cross = uhat.add(&u0).sub(&ubar).max_abs();

    // ---- v̄ ----
    let uxy_l = grid::dxy(&ubar).trace(Side::XL).values;
    let vxx_l: Vec<f64> = uxy_l.iter().zip(&s.a4).map(|(a, b)| a - b).collect();
    let vprob = BiharmonicProblem {
        rhs: g.zeros(),
        y0: BiharmonicSide::Hinged {
            value: vec![0.0; g.nx + 1],
            d2: xs.iter().map(|&x| s.a2pp[0] * (x - l) + s.a3pp[0]).collect(),
        },
        y2: BiharmonicSide::Hinged {
            value: vec![0.0; g.nx + 1],
            d2: xs.iter().map(|&x| s.a2pp[1] * (x - l) + s.a3pp[1]).collect(),
        },
        x0: BiharmonicSide::Free {
            d1: s.a2.clone(),
            d3: vec![0.0; g.ny + 1],
        },
        xl: BiharmonicSide::Hinged {
            value: s.a3.clone(),
            d2: vxx_l.clone(),
        },
    };
    let (mv, bv) = vprob.assemble()?;
    let lu_v = SparseLu::new(&mv)?;
    let vbar = ScalarField::from_values(*g, lu_v.solve_refined(&mv, &bv, 3)?)?;

    // v₀ = h₂ + x[a₂ − h₂ₓ(0, y)]χ(4x/L) + [a₃ − h₂(L, y)] + ½(x − L)² v̄_xx(L, y) χ((4L − 4x)/L).
    let h2x0: Vec<f64> = ys
        .iter()
        .map(|&y| wall_blend(y, 0.5 * y * y * s.a2pp[0], 0.5 * (y - 2.0).powi(2) * s.a2pp[1]))
        .collect();
    let v0 = {
        let mut f = h2.clone();
        for i in 0..=g.nx {
            let x = g.x(i);
            let c0 = chi(4.0 * x / l);
            let cl = chi((4.0 * l - 4.0 * x) / l);
            for j in 0..=g.ny {
                let v = h2.at(i, j)
                    + x * (s.a2[j] - h2x0[j]) * c0
                    + (s.a3[j] - h2.at(g.nx, j))
                    + 0.5 * (x - l).powi(2) * vxx_l[j] * cl;
                f.set(i, j, v);
            }
        }
        f
    };
    let rv: Vec<f64> = {
        let m0 = mv.matvec(&v0.values);
        bv.iter().zip(&m0).map(|(b, m)| b - m).collect()
    };
    let vhat = ScalarField::from_values(*g, lu_v.solve_refined(&mv, &rv, 3)?)?;
    cross = cross.max(vhat.add(&v0).sub(&vbar).max_abs());

    // Interior Δ² of the lift functions (the homogenized sources).
    let lift_source = {
        let m0u = mu.matvec(&u0.values);
        let m0v = mv.matvec(&v0.values);
        let mut mx = 0.0f64;
        for i in 2..g.nx.saturating_sub(1) {
            for j in 2..g.ny.saturating_sub(1) {
                let k = g.idx(i, j);
                mx = mx.max(m0u[k].abs()).max(m0v[k].abs());
            }
        }
        // Undo the row scaling of the assembled operator.
        mx / (g.hx * g.hx * g.hy * g.hy)
    };

    // Boundary identities with one-sided operators.
    let uy = grid::dy(&ubar);
    let vx = grid::dx(&vbar);
    let flux = grid::dx(&uy).sub(&grid::dxx(&vbar));
    let identities = vec![
        defect("ubar_y(x,0) = b0", &uy.trace(Side::Y0).values, &s.b0, lift_tol),
        defect("ubar_y(x,2) = b1", &uy.trace(Side::Y2).values, &s.b1, lift_tol),
        defect("ubar(0,y) = a1", &ubar.trace(Side::X0).values, &s.a1, lift_tol),
        defect(
            "vbar(x,0) = vbar(x,2) = 0",
            &vbar
                .trace(Side::Y0)
                .values
                .iter()
                .chain(&vbar.trace(Side::Y2).values)
                .copied()
                .collect::<Vec<_>>(),
            &vec![0.0; 2 * (g.nx + 1)],
            lift_tol,
        ),
        defect("vbar(L,y) = a3", &vbar.trace(Side::XL).values, &s.a3, lift_tol),
        defect("vbar_x(0,y) = a2", &vx.trace(Side::X0).values, &s.a2, lift_tol),
        defect("d_x curl ubar(L,y) = a4", &flux.trace(Side::XL).values, &s.a4, lift_tol),
    ];
    let coupling_readback = {
        let read = grid::dxx(&vbar).trace(Side::XL).values;
        read.iter()
            .zip(&vxx_l)
            .skip(1)
            .take(g.ny - 1)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };

    let h4 = (h4_norm(&ubar).powi(2) + h4_norm(&vbar).powi(2)).sqrt();
    let mut data_norm = 0.0;
    for a in [&bd.a1, &bd.a2, &bd.a3, &bd.a4] {
        data_norm += crate::background::profile_sobolev_norm(a, 4, g.ny + 1, grid::HEIGHT, l)?;
    }
    for b in [&bd.b0, &bd.b1] {
        data_norm += crate::background::profile_sobolev_norm(b, 4, g.nx + 1, l, l)?;
    }
    Ok(Lift {
        ubar,
        vbar,
        h1,
        h2,
        u0,
        v0,
        h4_norm_estimate: h4,
        data_norm,
        report: LiftReport {
            identities,
            cross_check: cross,
            lift_source,
            coupling_readback,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::{cutoff_chi, Profile};

    fn default_shapes() -> BoundaryData {
        BoundaryData::from_exprs(
            [
                "sin(pi*y/2)",
                "0.2*sin(pi*y)",
                "0.3*sin(pi*y) + 0.1*y^2*(2-y)^2",
                "0.5*sin(pi*y)",
            ],
            "(pi/2)*cos(pi*x/L)",
            "-(pi/2)*cos(pi*x/L)",
            "cos(pi*y)",
        )
        .unwrap()
    }

    #[test]
    fn default_shapes_are_compatible() {
        let r = crate::background::check_compatibility(&default_shapes(), 0.25, 1e-12).unwrap();
        assert!(r.pass, "{:?}", r.failing());
    }

    #[test]
    fn zero_data_gives_zero_lift() {
        let g = Grid::square(16, 0.25).unwrap();
        let (h1, h2) = build_h1_h2(&BoundaryData::zero(), &g, 1e-10).unwrap();
        assert_eq!(h1.max_abs() + h2.max_abs(), 0.0);
        let lift = build_lift(&BoundaryData::zero(), &g, 1e-10).unwrap();
        assert_eq!(lift.ubar.max_abs() + lift.vbar.max_abs(), 0.0);
    }

    #[test]
    fn h1_examples() {
        let g = Grid::new(16, 40, 0.25).unwrap();
        let mut bd = BoundaryData::zero();
        bd.b0 = Profile::expr('x', "1").unwrap();
        // a1'(0) must equal b0(0) = 1.
        bd.a1 = Profile::expr('y', "y - y^2/4 - y^3/8 + y^4/32").unwrap();
        // a1'(2) = 1 - 1 - 1.5 + 1 = -0.5 must equal b1(0): choose b1 = -0.5.
        bd.b1 = Profile::expr('x', "-0.5").unwrap();
        let (h1, _) = build_h1_h2(&bd, &g, 1e-12).unwrap();
        // a1(0) = 0, y = 0.1 (j = 2): h1 = (0 + 1·0.1)·χ(0.2) + [a1(2) − 1.9·(−0.5)]·χ(3.8).
        assert!((h1.at(3, 2) - 0.1).abs() < 1e-14);
        let dyh = grid::dy(&h1).trace(Side::Y0);
        assert!(dyh.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert_eq!(cutoff_chi(0.2).unwrap(), 1.0);
    }

    #[test]
    fn h1_with_unit_wall_slope() {
        // a1 = 0, b0 = 1, b1 = 0 (corner-incompatible, so built unchecked).
        let g = Grid::new(16, 40, 0.25).unwrap();
        let mut bd = BoundaryData::zero();
        bd.b0 = Profile::expr('x', "1").unwrap();
        let (h1, _) = build_h1_h2_unchecked(&bd, &g).unwrap();
        assert!((h1.at(5, 2) - 0.1).abs() < 1e-14);
    }

    #[test]
    fn incompatible_data_rejected() {
        let g = Grid::square(16, 0.25).unwrap();
        let mut bd = BoundaryData::zero();
        bd.b0 = Profile::expr('x', "1").unwrap();
        assert!(matches!(build_lift(&bd, &g, 1e-10), Err(Error::Compatibility(_))));
    }

    #[test]
    fn a3_only_lift() {
        let g = Grid::square(32, 0.25).unwrap();
        let mut bd = BoundaryData::zero();
        bd.a3 = Profile::expr('y', "sin(pi*y)").unwrap();
        let lift = build_lift(&bd, &g, 1e-10).unwrap();
        let tr = lift.vbar.trace(Side::XL);
        for (j, v) in tr.values.iter().enumerate() {
            assert!((v - (std::f64::consts::PI * g.y(j)).sin()).abs() < 1e-12);
        }
        assert!(lift.ubar.max_abs() < 1e-14);
        assert!(lift.report.cross_check < 1e-8);
    }

    #[test]
    fn derivative_identities_converge() {
        let bd = default_shapes();
        let d = |n: usize| {
            let g = Grid::square(n, 0.25).unwrap();
            let lift = build_lift(&bd, &g, 1e-10).unwrap();
            assert!(lift.report.cross_check < 1e-8 * lift.ubar.max_abs().max(1.0));
            lift.report.identities.iter().map(|c| c.defect).collect::<Vec<_>>()
        };
        let e1 = d(32);
        let e2 = d(64);
        for (k, (a, b)) in e1.iter().zip(&e2).enumerate() {
            assert!(*b <= 1e-9 || a / b > 1.8, "identity {k}: {a} -> {b}");
        }
    }

    #[test]
    fn lift_is_linear() {
        let g = Grid::square(24, 0.25).unwrap();
        let bd = default_shapes();
        let l1 = build_lift(&bd, &g, 1e-10).unwrap();
        let l2 = build_lift(&bd.scaled(-0.7), &g, 1e-10).unwrap();
        let d = l2.ubar.sub(&l1.ubar.scale(-0.7)).max_abs() + l2.vbar.sub(&l1.vbar.scale(-0.7)).max_abs();
        assert!(d < 1e-10 * l1.ubar.max_abs());
    }

    #[test]
    fn h4_ratio_is_stable_across_data() {
        let g = Grid::square(32, 0.25).unwrap();
        let sets = [
            ["sin(pi*y/2)", "0.2*sin(pi*y)", "0.3*sin(pi*y)", "0.5*sin(pi*y)"],
            ["sin(pi*y/2) + 0.3*sin(pi*y)^2", "0.1*sin(2*pi*y)", "0.2*sin(pi*y)", "0.4*sin(pi*y)"],
            ["sin(pi*y/2)", "0", "0.1*y^2*(2-y)^2", "0.5*sin(pi*y)"],
            ["sin(pi*y/2)", "0.3*sin(pi*y)", "0", "0.2*sin(pi*y)"],
            ["sin(pi*y/2)", "0.2*sin(pi*y)", "0.3*sin(2*pi*y)", "0.5*sin(pi*y)"],
        ];
        let ratios: Vec<f64> = sets
            .iter()
            .map(|a| {
                let b = BoundaryData::from_exprs(
                    *a,
                    "(pi/2)*cos(pi*x/L)",
                    "-(pi/2)*cos(pi*x/L)",
                    "0",
                )
                .unwrap();
                // a4(0) = b0'(L) = 0 and a4(2) = b1'(L) = 0 hold for these shapes.
                build_lift(&b, &g, 1e-10).unwrap().h4_ratio()
            })
            .collect();
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        for r in &ratios {
            assert!(r.is_finite() && *r > 0.0);
            assert!((r / mean - 1.0).abs() < 0.5 || (mean / r - 1.0).abs() < 0.5, "{ratios:?}");
        }
    }
}
