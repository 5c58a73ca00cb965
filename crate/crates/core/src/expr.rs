//! Small arithmetic expression language for boundary profiles, evaluated in
//! truncated Taylor arithmetic so that exact derivatives up to fourth order
//! are available at every sample point.
//!
//! Grammar (usual precedence, `^` right-associative, unary minus):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'pi' | 'L' | 'x' | 'y' | func '(' expr ')' | '(' expr ')'
//! func   := sin | cos | exp | sqrt | ln
//! ```

use crate::error::{Error, Result};

/// Truncation order of the Taylor jets (derivatives 0..=ORDER are exact).
pub const ORDER: usize = 4;
const N: usize = ORDER + 1;

/// Truncated Taylor series `sum c_k t^k`, where `c_k = f^(k)(t0) / k!`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub c: [f64; N],
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        let mut c = [0.0; N];
        c[0] = v;
        Jet { c }
    }

    /// The independent variable at `t0`.
    pub fn variable(t0: f64) -> Self {
        let mut c = [0.0; N];
        c[0] = t0;
        c[1] = 1.0;
        Jet { c }
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// k-th derivative at the expansion point.
    pub fn derivative(&self, k: usize) -> f64 {
        let mut f = 1.0;
        for m in 2..=k {
            f *= m as f64;
        }
        self.c[k] * f
    }

    fn add(self, o: Jet) -> Jet {
        let mut c = self.c;
        for k in 0..N {
            c[k] += o.c[k];
        }
        Jet { c }
    }

    fn sub(self, o: Jet) -> Jet {
        let mut c = self.c;
        for k in 0..N {
            c[k] -= o.c[k];
        }
        Jet { c }
    }

    fn mul(self, o: Jet) -> Jet {
        let mut c = [0.0; N];
        for i in 0..N {
            for j in 0..N - i {
                c[i + j] += self.c[i] * o.c[j];
            }
        }
        Jet { c }
    }

    fn div(self, o: Jet) -> Result<Jet> {
        if o.c[0] == 0.0 {
            return Err(Error::Expression("division by zero".into()));
        }
        // Solve q * o = self term by term.
        let mut q = [0.0; N];
        for k in 0..N {
            let mut s = self.c[k];
            for j in 1..=k {
                s -= o.c[j] * q[k - j];
            }
            q[k] = s / o.c[0];
        }
        Ok(Jet { c: q })
    }

    fn scale(self, s: f64) -> Jet {
        let mut c = self.c;
        for v in c.iter_mut() {
            *v *= s;
        }
        Jet { c }
    }

    /// f(self) given the derivatives `d[k] = f^(k)(c0)`.
    fn compose(self, d: [f64; N]) -> Jet {
        let mut delta = self;
        delta.c[0] = 0.0;
        let mut out = Jet::constant(d[0]);
        let mut pow = Jet::constant(1.0);
        let mut fact = 1.0;
        for (k, dk) in d.iter().enumerate().skip(1) {
            pow = pow.mul(delta);
            fact *= k as f64;
            out = out.add(pow.scale(dk / fact));
        }
        out
    }

    fn sin(self) -> Jet {
        let (s, c) = self.c[0].sin_cos();
        self.compose([s, c, -s, -c, s])
    }

    fn cos(self) -> Jet {
        let (s, c) = self.c[0].sin_cos();
        self.compose([c, -s, -c, s, c])
    }

    fn exp(self) -> Jet {
        let e = self.c[0].exp();
        self.compose([e; N])
    }

    fn ln(self) -> Result<Jet> {
        let a = self.c[0];
        if a <= 0.0 {
            return Err(Error::Expression(format!("ln of non-positive value {a}")));
        }
        Ok(self.compose([
            a.ln(),
            1.0 / a,
            -1.0 / (a * a),
            2.0 / (a * a * a),
            -6.0 / (a * a * a * a),
        ]))
    }

    fn sqrt(self) -> Result<Jet> {
        let a = self.c[0];
        if a <= 0.0 {
            return Err(Error::Expression(format!("sqrt of non-positive value {a}")));
        }
        let s = a.sqrt();
        Ok(self.compose([
            s,
            0.5 / s,
            -0.25 / (s * a),
            0.375 / (s * a * a),
            -0.9375 / (s * a * a * a),
        ]))
    }

    fn powi(self, n: i64) -> Result<Jet> {
        if n == 0 {
            return Ok(Jet::constant(1.0));
        }
        let mut base = if n < 0 {
            Jet::constant(1.0).div(self)?
        } else {
            self
        };
        let mut e = n.unsigned_abs();
        let mut acc = Jet::constant(1.0);
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(base);
            }
            base = base.mul(base);
            e >>= 1;
        }
        Ok(acc)
    }

    fn pow(self, e: Jet) -> Result<Jet> {
        let is_const = e.c[1..].iter().all(|&v| v == 0.0);
        if is_const && e.c[0].fract() == 0.0 && e.c[0].abs() < 64.0 {
            return self.powi(e.c[0] as i64);
        }
        Ok(self.ln()?.mul(e).exp())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(char),
    Neg(Box<Node>),
    Bin(char, Box<Node>, Box<Node>),
    Call(String, Box<Node>),
}

/// Parsed expression in the variables `x`, `y` and the constant `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&mut self) -> Option<u8> {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        self.s.get(self.pos).copied()
    }

    fn err<T>(&self, msg: &str) -> Result<T> {
        Err(Error::Expression(format!("{msg} at offset {}", self.pos)))
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Node::Bin(c as char, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Node::Bin(c as char, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let e = self.unary()?;
            return Ok(Node::Bin('^', Box::new(base), Box::new(e)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.peek() {
            None => self.err("unexpected end of expression"),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return self.err("expected ')'");
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.pos;
                while self.pos < self.s.len()
                    && (self.s[self.pos].is_ascii_digit() || self.s[self.pos] == b'.')
                {
                    self.pos += 1;
                }
                if self.pos < self.s.len() && (self.s[self.pos] == b'e' || self.s[self.pos] == b'E') {
                    let save = self.pos;
                    self.pos += 1;
                    if self.pos < self.s.len() && (self.s[self.pos] == b'+' || self.s[self.pos] == b'-') {
                        self.pos += 1;
                    }
                    let digits = self.pos;
                    while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                        self.pos += 1;
                    }
                    if digits == self.pos {
                        self.pos = save;
                    }
                }
                let text = std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("");
                text.parse::<f64>()
                    .map(Node::Num)
                    .or_else(|_| self.err("malformed number"))
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.s.len() && self.s[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("");
                match name {
                    "pi" => Ok(Node::Num(std::f64::consts::PI)),
                    "x" => Ok(Node::Var('x')),
                    "y" => Ok(Node::Var('y')),
                    "L" => Ok(Node::Var('L')),
                    "sin" | "cos" | "exp" | "sqrt" | "ln" => {
                        if self.peek() != Some(b'(') {
                            return self.err("expected '(' after function name");
                        }
                        self.pos += 1;
                        let arg = self.expr()?;
                        if self.peek() != Some(b')') {
                            return self.err("expected ')'");
                        }
                        self.pos += 1;
                        Ok(Node::Call(name.to_string(), Box::new(arg)))
                    }
                    other => self.err(&format!("unknown identifier '{other}'")),
                }
            }
            Some(c) => self.err(&format!("unexpected character '{}'", c as char)),
        }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self> {
        let mut p = Parser {
            s: src.as_bytes(),
            pos: 0,
        };
        let root = p.expr()?;
        if p.peek().is_some() {
            return p.err("trailing input");
        }
        Ok(Expr {
            source: src.to_string(),
            root,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Whether the expression references variable `v` (`'x'`, `'y'` or `'L'`).
    pub fn uses(&self, v: char) -> bool {
        fn walk(n: &Node, v: char) -> bool {
            match n {
                Node::Num(_) => false,
                Node::Var(c) => *c == v,
                Node::Neg(a) | Node::Call(_, a) => walk(a, v),
                Node::Bin(_, a, b) => walk(a, v) || walk(b, v),
            }
        }
        walk(&self.root, v)
    }

    /// Evaluate as a function of one variable `var` at `t`, returning the jet.
    /// The other coordinate must not appear.
    pub fn jet(&self, var: char, t: f64, length: f64) -> Result<Jet> {
        fn ev(n: &Node, var: char, t: Jet, length: f64) -> Result<Jet> {
            Ok(match n {
                Node::Num(v) => Jet::constant(*v),
                Node::Var('L') => Jet::constant(length),
                Node::Var(c) if *c == var => t,
                Node::Var(c) => {
                    return Err(Error::Expression(format!(
                        "profile in '{var}' must not depend on '{c}'"
                    )))
                }
                Node::Neg(a) => ev(a, var, t, length)?.scale(-1.0),
                Node::Bin(op, a, b) => {
                    let a = ev(a, var, t, length)?;
                    let b = ev(b, var, t, length)?;
                    match op {
                        '+' => a.add(b),
                        '-' => a.sub(b),
                        '*' => a.mul(b),
                        '/' => a.div(b)?,
                        '^' => a.pow(b)?,
                        _ => unreachable!(),
                    }
                }
                Node::Call(f, a) => {
                    let a = ev(a, var, t, length)?;
                    match f.as_str() {
                        "sin" => a.sin(),
                        "cos" => a.cos(),
                        "exp" => a.exp(),
                        "sqrt" => a.sqrt()?,
                        "ln" => a.ln()?,
                        _ => unreachable!(),
                    }
                }
            })
        }
        let j = ev(&self.root, var, Jet::variable(t), length)?;
        if j.c.iter().any(|v| !v.is_finite()) {
            return Err(Error::Expression(format!(
                "'{}' is not finite at {var} = {t}",
                self.source
            )));
        }
        Ok(j)
    }

    /// Plain value of a one-variable profile.
    pub fn eval(&self, var: char, t: f64, length: f64) -> Result<f64> {
        Ok(self.jet(var, t, length)?.value())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn parses_and_evaluates() {
        let e = Expr::parse("1 + 2*3 - 4/2").unwrap();
        assert_eq!(e.eval('y', 0.0, 1.0).unwrap(), 5.0);
        let e = Expr::parse("-2^2").unwrap();
        assert_eq!(e.eval('y', 0.0, 1.0).unwrap(), -4.0);
        let e = Expr::parse("2^3^2").unwrap();
        assert_eq!(e.eval('y', 0.0, 1.0).unwrap(), 512.0);
        let e = Expr::parse("1.5e-1*L").unwrap();
        assert!((e.eval('x', 0.0, 2.0).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Expr::parse("1 +").is_err());
        assert!(Expr::parse("foo(1)").is_err());
        assert!(Expr::parse("(1").is_err());
        assert!(Expr::parse("1 2").is_err());
        let e = Expr::parse("x*y").unwrap();
        assert!(e.eval('y', 0.5, 1.0).is_err());
    }

    #[test]
    fn jets_give_exact_derivatives() {
        let e = Expr::parse("sin(pi*y)*exp(y) + y^3").unwrap();
        let t = 0.37;
        let j = e.jet('y', t, 1.0).unwrap();
        let f = |y: f64| (PI * y).sin() * y.exp() + y.powi(3);
        let d1 = PI * (PI * t).cos() * t.exp() + (PI * t).sin() * t.exp() + 3.0 * t * t;
        assert!((j.value() - f(t)).abs() < 1e-14);
        assert!((j.derivative(1) - d1).abs() < 1e-12);
        // Fourth derivative of y^3 vanishes; check the polynomial alone.
        let p = Expr::parse("y^3 - 2*y").unwrap().jet('y', 1.3, 1.0).unwrap();
        assert!((p.derivative(2) - 6.0 * 1.3).abs() < 1e-12);
        assert!((p.derivative(3) - 6.0).abs() < 1e-12);
        assert!(p.derivative(4).abs() < 1e-12);
    }

    #[test]
    fn quotient_ln_sqrt() {
        let e = Expr::parse("ln(1+y)/sqrt(1+y)").unwrap();
        let t = 0.5;
        let h = 1e-4;
        let f = |y: f64| (1.0 + y).ln() / (1.0 + y).sqrt();
        let j = e.jet('y', t, 1.0).unwrap();
        let fd2 = (f(t + h) - 2.0 * f(t) + f(t - h)) / (h * h);
        assert!((j.derivative(2) - fd2).abs() < 1e-6);
        let fp = Expr::parse("(1+y)^0.5").unwrap().jet('y', t, 1.0).unwrap();
        assert!((fp.derivative(1) - 0.5 / (1.5f64).sqrt()).abs() < 1e-12);
    }
}
