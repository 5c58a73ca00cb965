//! Background shear flow, flow parameters, boundary perturbation data, the
//! smooth cut-off function and the exact-solution / compatibility checks.

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::{self, Grid, ScalarField, VectorField};
use serde::{Deserialize, Serialize};

/// Physical and asymptotic parameters. Viscosity coefficients and the
/// pressure constant are fixed to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    /// Inverse Reynolds number ε.
    pub eps: f64,
    /// Adiabatic exponent γ.
    pub gamma: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    /// Smallness exponent σ of the boundary data.
    pub sigma: f64,
    /// Exponent offset δ: every "slightly more than" exponent `a+` is `a + δ`.
    pub delta: f64,
    /// Mach number η.
    pub eta: f64,
}

impl FlowParams {
    /// Default parameters at viscosity `eps`: γ = 1.4, α = (1, 1, 0.5), σ = 0.2,
    /// δ = 0.05 and η = ε^{1/2+δ}.
    pub fn with_eps(eps: f64) -> Self {
        let delta = 0.05;
        FlowParams {
            eps,
            gamma: 1.4,
            alpha0: 1.0,
            alpha1: 1.0,
            alpha2: 0.5,
            sigma: 0.2,
            delta,
            eta: eps.powf(0.5 + delta),
        }
    }

    /// Check the admissible ranges.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return bad(format!("eps must lie in (0, 1), got {}", self.eps));
        }
        if !(self.gamma > 1.0) {
            return bad(format!("gamma must exceed 1, got {}", self.gamma));
        }
        if !(self.alpha0 > 0.0) || self.alpha1 < 0.0 || self.alpha2 < 0.0 {
            return bad("need alpha0 > 0, alpha1 >= 0, alpha2 >= 0".into());
        }
        if !(self.alpha1 + self.alpha2 > 0.0) {
            return bad("need alpha1 + alpha2 > 0".into());
        }
        if !(self.delta > 0.0 && self.delta <= 0.25) {
            return bad(format!("delta must lie in (0, 0.25], got {}", self.delta));
        }
        if !(self.sigma > 0.0) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        let cap = self.eps.powf(0.5 + 0.5 * self.delta);
        if !(self.eta > 0.0 && self.eta <= cap * (1.0 + 1e-12)) {
            return bad(format!(
                "eta = {} must lie in (0, eps^(1/2+delta/2) = {cap}]",
                self.eta
            ));
        }
        Ok(())
    }

    /// Remainder scale ξ = ε^{1/2+δ}.
    pub fn xi(&self) -> f64 {
        self.eps.powf(0.5 + self.delta)
    }

    /// Smallness threshold ε^{1/2+σ} for the boundary data.
    pub fn lambda_threshold(&self) -> f64 {
        self.eps.powf(0.5 + self.sigma)
    }

    /// Bound ε^{σ/2} on the remainder norms.
    pub fn remainder_bound(&self) -> f64 {
        self.eps.powf(0.5 * self.sigma)
    }

    pub fn us(&self, y: f64) -> f64 {
        eval_us(self, y)
    }

    pub fn us_y(&self, y: f64) -> f64 {
        eval_us_y(self, y)
    }

    pub fn us_yy(&self, _y: f64) -> f64 {
        -2.0 * self.alpha2
    }
}

/// Background profile u_s = α0 + α1 y + α2 y (2 - y).
pub fn eval_us(p: &FlowParams, y: f64) -> f64 {
    p.alpha0 + p.alpha1 * y + p.alpha2 * y * (2.0 - y)
}

/// ∂y u_s.
pub fn eval_us_y(p: &FlowParams, y: f64) -> f64 {
    p.alpha1 + 2.0 * p.alpha2 * (1.0 - y)
}

/// ∂yy u_s.
pub fn eval_us_yy(p: &FlowParams, _y: f64) -> f64 {
    -2.0 * p.alpha2
}

/// u_s sampled on the grid.
pub fn us_field(p: &FlowParams, g: &Grid) -> ScalarField {
    g.sample(|_, y| eval_us(p, y))
}

/// Degree-9 smoothstep S(s) and its derivatives on [0, 1].
fn smoothstep9(s: f64, k: usize) -> f64 {
    // S(s) = 126 s^5 - 420 s^6 + 540 s^7 - 315 s^8 + 70 s^9.
    const C: [(f64, i32); 5] = [(126.0, 5), (-420.0, 6), (540.0, 7), (-315.0, 8), (70.0, 9)];
    C.iter()
        .map(|&(c, p)| {
            if (k as i32) > p {
                return 0.0;
            }
            let mut f = c;
            for m in 0..k as i32 {
                f *= (p - m) as f64;
            }
            f * s.powi(p - k as i32)
        })
        .sum()
}

/// Smooth cut-off: 1 on [0, 1/2], 0 on [1, ∞), C⁴ degree-9 smoothstep in between.
pub fn cutoff_chi(t: f64) -> Result<f64> {
    cutoff_chi_derivative(t, 0)
}

/// k-th derivative of the cut-off.
pub fn cutoff_chi_derivative(t: f64, k: usize) -> Result<f64> {
    if t < 0.0 || !t.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "cut-off argument must be non-negative, got {t}"
        )));
    }
    if t <= 0.5 {
        return Ok(if k == 0 { 1.0 } else { 0.0 });
    }
    if t >= 1.0 {
        return Ok(0.0);
    }
    let s = 2.0 * t - 1.0;
    let d = smoothstep9(s, k) * 2f64.powi(k as i32);
    Ok(if k == 0 { 1.0 - d } else { -d })
}

/// Infallible cut-off for internal use (argument clamped at 0).
pub(crate) fn chi(t: f64) -> f64 {
    cutoff_chi(t.max(0.0)).unwrap_or(0.0)
}

/// How a boundary profile is represented.
#[derive(Debug, Clone, PartialEq)]
pub enum ProfileKind {
    /// Closed form; derivatives are exact.
    Expr(Expr),
    /// Uniform samples covering the whole side (endpoints included).
    Samples(Vec<f64>),
}

/// A boundary profile: a function of one coordinate on [0, extent].
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    /// Independent variable, `'x'` or `'y'`.
    pub var: char,
    pub kind: ProfileKind,
    /// Multiplier applied to every value and derivative.
    pub factor: f64,
}

impl Profile {
    pub fn zero(var: char) -> Self {
        Profile {
            var,
            kind: ProfileKind::Samples(vec![0.0; 4]),
            factor: 0.0,
        }
    }

    pub fn expr(var: char, src: &str) -> Result<Self> {
        let e = Expr::parse(src)?;
        let other = if var == 'x' { 'y' } else { 'x' };
        if e.uses(other) {
            return Err(Error::Expression(format!(
                "profile '{src}' is a function of {var} and must not use {other}"
            )));
        }
        Ok(Profile {
            var,
            kind: ProfileKind::Expr(e),
            factor: 1.0,
        })
    }

    pub fn samples(var: char, values: Vec<f64>) -> Result<Self> {
        if values.len() < 5 {
            return Err(Error::InvalidParameter(
                "sampled profiles need at least 5 samples".into(),
            ));
        }
        Ok(Profile {
            var,
            kind: ProfileKind::Samples(values),
            factor: 1.0,
        })
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut p = self.clone();
        p.factor *= s;
        p
    }

    pub fn is_zero(&self) -> bool {
        self.factor == 0.0
            || match &self.kind {
                ProfileKind::Samples(v) => v.iter().all(|&x| x == 0.0),
                ProfileKind::Expr(_) => false,
            }
    }

    /// k-th derivative (k ≤ 4) at `t` on a side of length `extent`; `length`
    /// is the channel length substituted for `L`.
    pub fn derivative(&self, k: usize, t: f64, extent: f64, length: f64) -> Result<f64> {
        if self.factor == 0.0 {
            return Ok(0.0);
        }
        let raw = match &self.kind {
            ProfileKind::Expr(e) => e.jet(self.var, t, length)?.derivative(k),
            ProfileKind::Samples(v) => {
                let h = extent / (v.len() - 1) as f64;
                let mut d = v.clone();
                for _ in 0..k {
                    d = grid::diff1(&d, h);
                }
                interpolate(&d, h, t)
            }
        };
        Ok(self.factor * raw)
    }

    pub fn value(&self, t: f64, extent: f64, length: f64) -> Result<f64> {
        self.derivative(0, t, extent, length)
    }

    /// Values (or derivatives) at `n` uniform points on [0, extent].
    pub fn sample(&self, k: usize, n: usize, extent: f64, length: f64) -> Result<Vec<f64>> {
        let h = extent / (n - 1) as f64;
        (0..n)
            .map(|m| self.derivative(k, m as f64 * h, extent, length))
            .collect()
    }
}

/// Piecewise-linear interpolation of uniform samples.
fn interpolate(v: &[f64], h: f64, t: f64) -> f64 {
    let s = (t / h).clamp(0.0, (v.len() - 1) as f64);
    let k = (s.floor() as usize).min(v.len() - 2);
    let w = s - k as f64;
    v[k] * (1.0 - w) + v[k + 1] * w
}

/// Boundary perturbation data: a1..a4 and h0 are functions of y on [0, 2],
/// b0 and b1 functions of x on [0, L].
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    pub a1: Profile,
    pub a2: Profile,
    pub a3: Profile,
    pub a4: Profile,
    pub b0: Profile,
    pub b1: Profile,
    pub h0: Profile,
}

impl BoundaryData {
    pub fn zero() -> Self {
        BoundaryData {
            a1: Profile::zero('y'),
            a2: Profile::zero('y'),
            a3: Profile::zero('y'),
            a4: Profile::zero('y'),
            b0: Profile::zero('x'),
            b1: Profile::zero('x'),
            h0: Profile::zero('y'),
        }
    }

    /// Build from closed-form expressions.
    pub fn from_exprs(
        a: [&str; 4],
        b0: &str,
        b1: &str,
        h0: &str,
    ) -> Result<Self> {
        Ok(BoundaryData {
            a1: Profile::expr('y', a[0])?,
            a2: Profile::expr('y', a[1])?,
            a3: Profile::expr('y', a[2])?,
            a4: Profile::expr('y', a[3])?,
            b0: Profile::expr('x', b0)?,
            b1: Profile::expr('x', b1)?,
            h0: Profile::expr('y', h0)?,
        })
    }

    /// Every profile multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        BoundaryData {
            a1: self.a1.scaled(s),
            a2: self.a2.scaled(s),
            a3: self.a3.scaled(s),
            a4: self.a4.scaled(s),
            b0: self.b0.scaled(s),
            b1: self.b1.scaled(s),
            h0: self.h0.scaled(s),
        }
    }

    pub fn is_zero(&self) -> bool {
        [&self.a1, &self.a2, &self.a3, &self.a4, &self.b0, &self.b1, &self.h0]
            .iter()
            .all(|p| p.is_zero())
    }

    /// Evaluate a y-profile derivative.
    pub fn ay(&self, p: &Profile, k: usize, y: f64, length: f64) -> Result<f64> {
        p.derivative(k, y, grid::HEIGHT, length)
    }

    /// Evaluate an x-profile derivative.
    pub fn bx(&self, p: &Profile, k: usize, x: f64, length: f64) -> Result<f64> {
        p.derivative(k, x, length, length)
    }
}

/// One corner compatibility condition with its measured defect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionDefect {
    pub name: String,
    pub defect: f64,
    pub pass: bool,
}

/// Result of the corner compatibility check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityReport {
    pub conditions: Vec<ConditionDefect>,
    pub tol: f64,
    pub pass: bool,
}

impl CompatibilityReport {
    pub fn failing(&self) -> Vec<&str> {
        self.conditions
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect()
    }
}

/// The ten corner compatibility conditions.
pub fn check_compatibility(bd: &BoundaryData, length: f64, tol: f64) -> Result<CompatibilityReport> {
    let l = length;
    let ay = |p: &Profile, k, y| bd.ay(p, k, y, l);
    let bx = |p: &Profile, k, x| bd.bx(p, k, x, l);
    let list: Vec<(&str, f64)> = vec![
        ("a1'(0) = b0(0)", ay(&bd.a1, 1, 0.0)? - bx(&bd.b0, 0, 0.0)?),
        ("a1'(2) = b1(0)", ay(&bd.a1, 1, 2.0)? - bx(&bd.b1, 0, 0.0)?),
        ("a4(0) = b0'(L)", ay(&bd.a4, 0, 0.0)? - bx(&bd.b0, 1, l)?),
        ("a4(2) = b1'(L)", ay(&bd.a4, 0, 2.0)? - bx(&bd.b1, 1, l)?),
        ("a2(0) = 0", ay(&bd.a2, 0, 0.0)?),
        ("a2(2) = 0", ay(&bd.a2, 0, 2.0)?),
        ("a3(0) = 0", ay(&bd.a3, 0, 0.0)?),
        ("a3(2) = 0", ay(&bd.a3, 0, 2.0)?),
        ("a4''(0) = 0", ay(&bd.a4, 2, 0.0)?),
        ("a4''(2) = 0", ay(&bd.a4, 2, 2.0)?),
    ];
    let conditions: Vec<ConditionDefect> = list
        .into_iter()
        .map(|(n, d)| ConditionDefect {
            name: n.to_string(),
            defect: d.abs(),
            pass: d.abs() <= tol,
        })
        .collect();
    let pass = conditions.iter().all(|c| c.pass);
    Ok(CompatibilityReport {
        conditions,
        tol,
        pass,
    })
}

/// Background density ρ̄ = x h0(y) / η².
pub fn background_density(p: &FlowParams, bd: &BoundaryData, g: &Grid) -> Result<ScalarField> {
    if !(p.eta > 0.0) {
        return Err(Error::InvalidParameter("eta must be positive".into()));
    }
    let h0 = bd.h0.sample(0, g.ny + 1, grid::HEIGHT, g.length)?;
    let inv = 1.0 / (p.eta * p.eta);
    let mut f = g.zeros();
    for i in 0..=g.nx {
        let x = g.x(i);
        for (j, h) in h0.iter().enumerate() {
            f.set(i, j, x * h * inv);
        }
    }
    Ok(f)
}

/// Sobolev norm of a profile on its side, from exact (or sampled)
/// derivatives at `n` uniform points and trapezoid quadrature.
pub fn profile_sobolev_norm(p: &Profile, order: usize, n: usize, extent: f64, length: f64) -> Result<f64> {
    let h = extent / (n - 1) as f64;
    let mut s = 0.0;
    for k in 0..=order {
        let d = p.sample(k, n, extent, length)?;
        let sq: Vec<f64> = d.iter().map(|v| v * v).collect();
        s += grid::trapezoid(&sq, h);
    }
    Ok(s.sqrt())
}

/// Aggregate data size Λ = η⁻²|h0|_{H³} + Σ|a_i|_{H⁴} + |b0|_{H⁴} + |b1|_{H⁴},
/// with the trace norms evaluated on the grid's boundary nodes.
pub fn lambda_norm(bd: &BoundaryData, p: &FlowParams, g: &Grid) -> Result<f64> {
    let ny = g.ny + 1;
    let nx = g.nx + 1;
    let l = g.length;
    let mut lam = profile_sobolev_norm(&bd.h0, 3, ny, grid::HEIGHT, l)? / (p.eta * p.eta);
    for a in [&bd.a1, &bd.a2, &bd.a3, &bd.a4] {
        lam += profile_sobolev_norm(a, 4, ny, grid::HEIGHT, l)?;
    }
    for b in [&bd.b0, &bd.b1] {
        lam += profile_sobolev_norm(b, 4, nx, l, l)?;
    }
    Ok(lam)
}

/// Residual of the stationary incompressible Euler equations for (u_s, 0, 1):
/// the max-norm over the momentum components and the divergence.
pub fn euler_residual(p: &FlowParams, g: &Grid) -> f64 {
    let us = us_field(p, g);
    let w = VectorField {
        u: us.clone(),
        v: g.zeros(),
    };
    let pr = g.constant(1.0);
    let m1 = us.mul(&grid::dx(&w.u)).add(&w.v.mul(&grid::dy(&w.u))).add(&grid::dx(&pr));
    let m2 = us.mul(&grid::dx(&w.v)).add(&w.v.mul(&grid::dy(&w.v))).add(&grid::dy(&pr));
    let d = grid::divergence(&w);
    m1.max_abs().max(m2.max_abs()).max(d.max_abs())
}

/// Residual of the stationary incompressible Navier-Stokes equations for
/// (u_s, 0, 1 - 2εα2 x).
pub fn ns_residual(p: &FlowParams, g: &Grid) -> f64 {
    let us = us_field(p, g);
    let w = VectorField {
        u: us.clone(),
        v: g.zeros(),
    };
    let pr = g.sample(|x, _| 1.0 - 2.0 * p.eps * p.alpha2 * x);
    let m1 = us
        .mul(&grid::dx(&w.u))
        .add(&w.v.mul(&grid::dy(&w.u)))
        .sub(&grid::laplacian(&w.u).scale(p.eps))
        .add(&grid::dx(&pr));
    let m2 = us
        .mul(&grid::dx(&w.v))
        .add(&w.v.mul(&grid::dy(&w.v)))
        .sub(&grid::laplacian(&w.v).scale(p.eps))
        .add(&grid::dy(&pr));
    let d = grid::divergence(&w);
    m1.max_abs().max(m2.max_abs()).max(d.max_abs())
}
