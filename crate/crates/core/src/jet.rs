//! Forward-mode differentiation with truncated multivariate Taylor series.
//!
//! A [`Jet`] holds the Taylor coefficients `f^(α)(x₀) / α!` of a function of
//! up to three chart variables, truncated at a fixed total order. First-order
//! jets are ordinary dual numbers; higher orders are needed because curvature
//! of a normal translate depends on third derivatives of the base map, and
//! each nested translate adds one more.
//!
//! Coefficients are stored in graded order (total degree first), so the jet
//! of order `k - 1` is a prefix of the jet of order `k`.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::OnceLock;

/// Maximum number of stored coefficients (3 variables at order 4, or 2 at order 6).
pub const MAX_COEFFS: usize = 35;
const MAX_VARS: usize = 3;
const MAX_ORDER: usize = 8;

/// Index bookkeeping for one `(nvars, order)` pair.
pub struct Layout {
    nvars: usize,
    order: usize,
    exps: Vec<[u8; MAX_VARS]>,
    /// `(i, j, k)`: coefficient `i` times coefficient `j` contributes to `k`.
    mul: Vec<(u8, u8, u8)>,
    /// For each variable, `(src, factor)` per coefficient of the order-1 lower layout.
    deriv: Vec<Vec<(u8, f64)>>,
}

impl fmt::Debug for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Layout(nvars={}, order={})", self.nvars, self.order)
    }
}

impl Layout {
    fn build(nvars: usize, order: usize) -> Option<Layout> {
        let mut exps: Vec<[u8; MAX_VARS]> = Vec::new();
        for deg in 0..=order {
            let mut cur = [0u8; MAX_VARS];
            push_degree(nvars, deg, 0, &mut cur, &mut exps);
        }
        if exps.len() > MAX_COEFFS {
            return None;
        }
        let index_of = |e: &[u8; MAX_VARS]| exps.iter().position(|x| x == e);
        let mut mul = Vec::new();
        for (i, a) in exps.iter().enumerate() {
            for (j, b) in exps.iter().enumerate() {
                let mut s = [0u8; MAX_VARS];
                let mut deg = 0usize;
                for v in 0..MAX_VARS {
                    s[v] = a[v] + b[v];
                    deg += s[v] as usize;
                }
                if deg <= order {
                    let k = index_of(&s).expect("graded index");
                    mul.push((i as u8, j as u8, k as u8));
                }
            }
        }
        let mut deriv = Vec::with_capacity(nvars);
        let lower = exps.iter().filter(|e| degree(e) < order).count();
        for v in 0..nvars {
            let mut table = Vec::with_capacity(lower);
            for e in exps.iter().take(lower) {
                let mut up = *e;
                up[v] += 1;
                let src = index_of(&up).expect("raised index");
                table.push((src as u8, f64::from(up[v])));
            }
            deriv.push(table);
        }
        Some(Layout {
            nvars,
            order,
            exps,
            mul,
            deriv,
        })
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    /// Position of a multi-index, if it is within this layout.
    pub fn index(&self, exp: &[u8]) -> Option<usize> {
        let mut key = [0u8; MAX_VARS];
        key[..exp.len()].copy_from_slice(exp);
        self.exps.iter().position(|e| *e == key)
    }
}

fn degree(e: &[u8; MAX_VARS]) -> usize {
    e.iter().map(|&x| x as usize).sum()
}

fn push_degree(
    nvars: usize,
    remaining: usize,
    var: usize,
    cur: &mut [u8; MAX_VARS],
    out: &mut Vec<[u8; MAX_VARS]>,
) {
    if var + 1 == nvars {
        cur[var] = remaining as u8;
        out.push(*cur);
        cur[var] = 0;
        return;
    }
    for k in (0..=remaining).rev() {
        cur[var] = k as u8;
        push_degree(nvars, remaining - k, var + 1, cur, out);
    }
    cur[var] = 0;
}

static LAYOUTS: OnceLock<Vec<Option<Layout>>> = OnceLock::new();

/// The shared layout for `nvars` variables truncated at `order`.
///
/// Panics if the combination exceeds [`MAX_COEFFS`].
pub fn layout(nvars: usize, order: usize) -> &'static Layout {
    assert!((1..=MAX_VARS).contains(&nvars), "jets support 1..=3 variables");
    let all = LAYOUTS.get_or_init(|| {
        let mut v = Vec::new();
        for n in 1..=MAX_VARS {
            for k in 0..=MAX_ORDER {
                v.push(Layout::build(n, k));
            }
        }
        v
    });
    all.get((nvars - 1) * (MAX_ORDER + 1) + order)
        .and_then(|l| l.as_ref())
        .unwrap_or_else(|| {
            panic!("jet order {order} with {nvars} variables exceeds {MAX_COEFFS} coefficients")
        })
}

/// Truncated multivariate Taylor series.
#[derive(Clone, Copy)]
pub struct Jet {
    lay: &'static Layout,
    c: [f64; MAX_COEFFS],
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("nvars", &self.lay.nvars)
            .field("order", &self.lay.order)
            .field("coeffs", &&self.c[..self.lay.len()])
            .finish()
    }
}

impl Jet {
    pub fn constant(lay: &'static Layout, v: f64) -> Jet {
        let mut c = [0.0; MAX_COEFFS];
        c[0] = v;
        Jet { lay, c }
    }

    /// The coordinate function `x_var` expanded around `v`.
    pub fn variable(lay: &'static Layout, var: usize, v: f64) -> Jet {
        let mut j = Jet::constant(lay, v);
        if lay.order >= 1 {
            let mut e = [0u8; MAX_VARS];
            e[var] = 1;
            let idx = lay.index(&e).expect("linear term");
            j.c[idx] = 1.0;
        }
        j
    }

    pub fn layout(&self) -> &'static Layout {
        self.lay
    }

    pub fn order(&self) -> usize {
        self.lay.order
    }

    pub fn nvars(&self) -> usize {
        self.lay.nvars
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c[..self.lay.len()]
    }

    /// The Taylor coefficient for multi-index `exp` (zero if truncated away).
    pub fn coeff(&self, exp: &[u8]) -> f64 {
        self.lay.index(exp).map_or(0.0, |i| self.c[i])
    }

    /// First partial derivative `∂f/∂x_var` at the expansion point.
    pub fn d1(&self, var: usize) -> f64 {
        let mut e = [0u8; MAX_VARS];
        e[var] = 1;
        self.coeff(&e[..self.lay.nvars])
    }

    /// Second partial derivative `∂²f/∂x_a∂x_b` at the expansion point.
    pub fn d2(&self, a: usize, b: usize) -> f64 {
        let mut e = [0u8; MAX_VARS];
        e[a] += 1;
        e[b] += 1;
        let factor = if a == b { 2.0 } else { 1.0 };
        factor * self.coeff(&e[..self.lay.nvars])
    }

    /// The jet of `∂f/∂x_var`, one order lower.
    pub fn partial(&self, var: usize) -> Jet {
        assert!(self.lay.order >= 1, "cannot differentiate an order-0 jet");
        let lower = layout(self.lay.nvars, self.lay.order - 1);
        let mut c = [0.0; MAX_COEFFS];
        for (k, &(src, factor)) in self.lay.deriv[var].iter().enumerate() {
            c[k] = factor * self.c[src as usize];
        }
        Jet { lay: lower, c }
    }

    /// Drops all terms above `order`.
    pub fn truncate(&self, order: usize) -> Jet {
        if order >= self.lay.order {
            return *self;
        }
        let lay = layout(self.lay.nvars, order);
        let mut c = [0.0; MAX_COEFFS];
        c[..lay.len()].copy_from_slice(&self.c[..lay.len()]);
        Jet { lay, c }
    }

    fn aligned(a: Jet, b: Jet) -> (Jet, Jet) {
        if std::ptr::eq(a.lay, b.lay) {
            (a, b)
        } else {
            debug_assert_eq!(a.lay.nvars, b.lay.nvars, "jets over different variables");
            let k = a.lay.order.min(b.lay.order);
            (a.truncate(k), b.truncate(k))
        }
    }

    /// Applies a scalar function given its Taylor coefficients `g_k = g^(k)(a)/k!` at the value.
    fn compose(self, coeffs: &[f64]) -> Jet {
        let mut h = self;
        h.c[0] = 0.0;
        let k = self.lay.order;
        let mut out = Jet::constant(self.lay, coeffs[k]);
        for i in (0..k).rev() {
            out = out * h;
            out.c[0] += coeffs[i];
        }
        out
    }

    fn series<F: Fn(usize) -> f64>(self, f: F) -> Jet {
        let coeffs: Vec<f64> = (0..=self.lay.order).map(f).collect();
        self.compose(&coeffs)
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        let (mut a, b) = Jet::aligned(self, rhs);
        for i in 0..a.lay.len() {
            a.c[i] += b.c[i];
        }
        a
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        let (mut a, b) = Jet::aligned(self, rhs);
        for i in 0..a.lay.len() {
            a.c[i] -= b.c[i];
        }
        a
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        let (a, b) = Jet::aligned(self, rhs);
        let mut c = [0.0; MAX_COEFFS];
        for &(i, j, k) in &a.lay.mul {
            c[k as usize] += a.c[i as usize] * b.c[j as usize];
        }
        Jet { lay: a.lay, c }
    }
}

impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: Jet) -> Jet {
        self * rhs.recip()
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(mut self) -> Jet {
        for i in 0..self.lay.len() {
            self.c[i] = -self.c[i];
        }
        self
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, rhs: f64) -> Jet {
        self.c[0] += rhs;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: f64) -> Jet {
        self.c[0] -= rhs;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(mut self, rhs: f64) -> Jet {
        for i in 0..self.lay.len() {
            self.c[i] *= rhs;
        }
        self
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: f64) -> Jet {
        self * (1.0 / rhs)
    }
}

/// Scalar arithmetic shared by plain floats and jets, so point formulas are
/// written once and differentiated for free.
pub trait Real:
    Copy
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn value(&self) -> f64;
    /// A constant of the same kind (same jet layout) as `self`.
    fn lift(&self, v: f64) -> Self;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn recip(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn powf(self, p: f64) -> Self;

    fn zero_like(&self) -> Self {
        self.lift(0.0)
    }
}

impl Real for f64 {
    fn value(&self) -> f64 {
        *self
    }
    fn lift(&self, v: f64) -> f64 {
        v
    }
    fn sqrt(self) -> f64 {
        f64::sqrt(self)
    }
    fn sin(self) -> f64 {
        f64::sin(self)
    }
    fn cos(self) -> f64 {
        f64::cos(self)
    }
    fn recip(self) -> f64 {
        1.0 / self
    }
    fn exp(self) -> f64 {
        f64::exp(self)
    }
    fn ln(self) -> f64 {
        f64::ln(self)
    }
    fn powf(self, p: f64) -> f64 {
        f64::powf(self, p)
    }
}

impl Real for Jet {
    fn value(&self) -> f64 {
        self.c[0]
    }
    fn lift(&self, v: f64) -> Jet {
        Jet::constant(self.lay, v)
    }
    fn sqrt(self) -> Jet {
        self.powf(0.5)
    }
    fn sin(self) -> Jet {
        let (s, c) = self.c[0].sin_cos();
        self.series(|k| {
            let d = match k % 4 {
                0 => s,
                1 => c,
                2 => -s,
                _ => -c,
            };
            d / factorial(k)
        })
    }
    fn cos(self) -> Jet {
        let (s, c) = self.c[0].sin_cos();
        self.series(|k| {
            let d = match k % 4 {
                0 => c,
                1 => -s,
                2 => -c,
                _ => s,
            };
            d / factorial(k)
        })
    }
    fn recip(self) -> Jet {
        let a = self.c[0];
        self.series(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign / a.powi(k as i32 + 1)
        })
    }
    fn exp(self) -> Jet {
        let e = self.c[0].exp();
        self.series(|k| e / factorial(k))
    }
    fn ln(self) -> Jet {
        let a = self.c[0];
        self.series(|k| {
            if k == 0 {
                a.ln()
            } else {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign / (k as f64 * a.powi(k as i32))
            }
        })
    }
    fn powf(self, p: f64) -> Jet {
        let a = self.c[0];
        self.series(|k| {
            // generalized binomial coefficient times a^(p-k)
            let mut binom = 1.0;
            for i in 0..k {
                binom *= (p - i as f64) / (i as f64 + 1.0);
            }
            binom * a.powf(p - k as f64)
        })
    }
}

/// Expands chart coordinates `x` as jet variables of the given order.
pub fn variables(x: &[f64], order: usize) -> Vec<Jet> {
    let lay = layout(x.len(), order);
    x.iter()
        .enumerate()
        .map(|(i, &v)| Jet::variable(lay, i, v))
        .collect()
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = a[0] * b[0];
    for i in 1..a.len() {
        acc = acc + a[i] * b[i];
    }
    acc
}

pub fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn normalize<T: Real>(a: &[T]) -> Vec<T> {
    let inv = norm(a).recip();
    a.iter().map(|&x| x * inv).collect()
}

/// Determinant by cofactor expansion; matrices here are at most 5×5.
pub fn det<T: Real>(m: &[Vec<T>]) -> T {
    let n = m.len();
    match n {
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        3 => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
        _ => {
            let mut acc = m[0][0].zero_like();
            for col in 0..n {
                let minor: Vec<Vec<T>> = m[1..]
                    .iter()
                    .map(|row| {
                        row.iter()
                            .enumerate()
                            .filter(|(j, _)| *j != col)
                            .map(|(_, v)| *v)
                            .collect()
                    })
                    .collect();
                let term = m[0][col] * det(&minor);
                acc = if col % 2 == 0 { acc + term } else { acc - term };
            }
            acc
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn layout_sizes_are_binomial() {
        assert_eq!(layout(2, 2).len(), 6);
        assert_eq!(layout(2, 4).len(), 15);
        assert_eq!(layout(3, 4).len(), 35);
        assert_eq!(layout(1, 3).len(), 4);
    }

    #[test]
    fn lower_order_layout_is_prefix() {
        let hi = layout(3, 4);
        let lo = layout(3, 3);
        assert_eq!(&hi.exps[..lo.len()], &lo.exps[..]);
    }

    #[test]
    fn product_rule_and_second_derivatives() {
        // f(x, y) = x^2 y + sin(x y) at (0.3, -0.7)
        let v = variables(&[0.3, -0.7], 3);
        let f = v[0] * v[0] * v[1] + (v[0] * v[1]).sin();
        let (x, y) = (0.3f64, -0.7f64);
        assert!(close(f.value(), x * x * y + (x * y).sin(), 1e-14));
        assert!(close(f.d1(0), 2.0 * x * y + y * (x * y).cos(), 1e-14));
        assert!(close(f.d1(1), x * x + x * (x * y).cos(), 1e-14));
        assert!(close(f.d2(0, 0), 2.0 * y - y * y * (x * y).sin(), 1e-13));
        assert!(close(
            f.d2(0, 1),
            2.0 * x + (x * y).cos() - x * y * (x * y).sin(),
            1e-13
        ));
        assert!(close(f.d2(1, 1), -x * x * (x * y).sin(), 1e-13));
    }

    #[test]
    fn partial_lowers_order() {
        let v = variables(&[0.5, 0.25], 3);
        let f = (v[0] * v[1]).exp();
        let fx = f.partial(0);
        assert_eq!(fx.order(), 2);
        // ∂x e^{xy} = y e^{xy}; its y-derivative is (1 + xy) e^{xy}
        let e = (0.125f64).exp();
        assert!(close(fx.value(), 0.25 * e, 1e-14));
        assert!(close(fx.d1(1), (1.0 + 0.125) * e, 1e-13));
    }

    #[test]
    fn elementary_functions_match_closed_forms() {
        let v = variables(&[0.8], 5);
        let x = v[0];
        let checks: [(Jet, Box<dyn Fn(f64) -> f64>); 5] = [
            (x.sqrt(), Box::new(|t: f64| t.sqrt())),
            (x.recip(), Box::new(|t: f64| 1.0 / t)),
            (x.ln(), Box::new(|t: f64| t.ln())),
            (x.powf(-1.5), Box::new(|t: f64| t.powf(-1.5))),
            (x.cos() * x.exp(), Box::new(|t: f64| t.cos() * t.exp())),
        ];
        for (jet, f) in checks.iter() {
            // compare third Taylor coefficient with a finite-difference estimate
            let h = 1e-3;
            let d3 = (f(0.8 + 2.0 * h) - 2.0 * f(0.8 + h) + 2.0 * f(0.8 - h) - f(0.8 - 2.0 * h))
                / (2.0 * h * h * h);
            assert!(close(jet.coeff(&[3]) * 6.0, d3, 1e-4), "{jet:?}");
        }
    }

    #[test]
    fn determinant_matches_expansion() {
        let m = vec![
            vec![2.0, 0.5, 1.0, 0.0],
            vec![0.0, 1.0, 3.0, 1.0],
            vec![1.0, 0.0, 1.0, 2.0],
            vec![0.5, 1.0, 0.0, 1.0],
        ];
        let na = nalgebra::DMatrix::from_fn(4, 4, |i, j| m[i][j]);
        assert!(close(det(&m), na.determinant(), 1e-13));
    }
}
