//! Truncated bivariate Taylor polynomials (forward-mode jets) in `(x, y)`.
//!
//! A [`Jet2`] of order `N` stores the normalized Taylor coefficients
//! `c[i][j] = ∂x^i ∂y^j f / (i! j!)` for `i + j <= N` at an expansion point.
//! Arithmetic on jets propagates exact derivatives through a computation,
//! which the recursive scheme uses to differentiate its own iterates.
//!
//! Every coefficient of a product, quotient or composition is computed from
//! lower-order coefficients only and in a fixed order, so the low-order part
//! of a result does not depend on the truncation order.

use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    order: usize,
    c: Vec<f64>,
}

#[inline]
fn idx(i: usize, j: usize) -> usize {
    let d = i + j;
    d * (d + 1) / 2 + j
}

fn len_for(order: usize) -> usize {
    (order + 1) * (order + 2) / 2
}

impl Jet2 {
    pub fn zero(order: usize) -> Self {
        Self {
            order,
            c: vec![0.0; len_for(order)],
        }
    }

    pub fn constant(v: f64, order: usize) -> Self {
        let mut j = Self::zero(order);
        j.c[0] = v;
        j
    }

    /// Jet of a function of `x` alone, from its derivatives `d[k] = f^(k)(x0)`.
    pub fn from_x_derivatives(d: &[f64], order: usize) -> Self {
        let mut j = Self::zero(order);
        let mut fact = 1.0;
        for (k, &v) in d.iter().enumerate().take(order + 1) {
            if k > 0 {
                fact *= k as f64;
            }
            j.c[idx(k, 0)] = v / fact;
        }
        j
    }

    /// Jet of a function of `y` alone, from its derivatives.
    pub fn from_y_derivatives(d: &[f64], order: usize) -> Self {
        let mut j = Self::zero(order);
        let mut fact = 1.0;
        for (k, &v) in d.iter().enumerate().take(order + 1) {
            if k > 0 {
                fact *= k as f64;
            }
            j.c[idx(0, k)] = v / fact;
        }
        j
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// Normalized coefficient `∂x^i ∂y^j f / (i! j!)`.
    pub fn coeff(&self, i: usize, j: usize) -> f64 {
        if i + j > self.order {
            0.0
        } else {
            self.c[idx(i, j)]
        }
    }

    /// The mixed partial `∂x^i ∂y^j f` at the expansion point.
    pub fn partial(&self, i: usize, j: usize) -> f64 {
        let mut f = 1.0;
        for k in 2..=i {
            f *= k as f64;
        }
        for k in 2..=j {
            f *= k as f64;
        }
        self.coeff(i, j) * f
    }

    pub fn truncate(&self, order: usize) -> Self {
        if order >= self.order {
            return self.clone();
        }
        Self {
            order,
            c: self.c[..len_for(order)].to_vec(),
        }
    }

    /// `∂f/∂x` as a jet one order lower.
    pub fn dx(&self) -> Self {
        assert!(self.order >= 1, "cannot differentiate an order-0 jet");
        let order = self.order - 1;
        let mut out = Self::zero(order);
        for d in 0..=order {
            for j in 0..=d {
                let i = d - j;
                out.c[idx(i, j)] = (i + 1) as f64 * self.c[idx(i + 1, j)];
            }
        }
        out
    }

    /// `∂f/∂y` as a jet one order lower.
    pub fn dy(&self) -> Self {
        assert!(self.order >= 1, "cannot differentiate an order-0 jet");
        let order = self.order - 1;
        let mut out = Self::zero(order);
        for d in 0..=order {
            for j in 0..=d {
                let i = d - j;
                out.c[idx(i, j)] = (j + 1) as f64 * self.c[idx(i, j + 1)];
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            order: self.order,
            c: self.c.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add_scalar(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.c[0] += s;
        out
    }

    /// `g(f)` where `g_derivs[k] = g^(k)(f(x0, y0))`.
    pub fn compose(&self, g_derivs: &[f64]) -> Self {
        assert!(
            g_derivs.len() > self.order,
            "composition needs derivatives through order {}",
            self.order
        );
        let mut nil = self.clone();
        nil.c[0] = 0.0;
        let mut out = Self::constant(g_derivs[0], self.order);
        let mut power = Self::constant(1.0, self.order);
        let mut fact = 1.0;
        for (k, &gk) in g_derivs.iter().enumerate().take(self.order + 1).skip(1) {
            power = &power * &nil;
            fact *= k as f64;
            let w = gk / fact;
            for (o, p) in out.c.iter_mut().zip(&power.c) {
                *o += w * p;
            }
        }
        out
    }

    /// `1/f`; the constant term must be non-zero.
    pub fn recip(&self) -> Self {
        let f0 = self.c[0];
        let mut d = Vec::with_capacity(self.order + 1);
        let mut v = 1.0 / f0;
        for k in 0..=self.order {
            d.push(v);
            v *= -((k + 1) as f64) / f0;
        }
        self.compose(&d)
    }

    pub fn square(&self) -> Self {
        self * self
    }
}

fn common(a: &Jet2, b: &Jet2) -> usize {
    a.order.min(b.order)
}

impl Add for &Jet2 {
    type Output = Jet2;
    fn add(self, rhs: &Jet2) -> Jet2 {
        let order = common(self, rhs);
        let n = len_for(order);
        Jet2 {
            order,
            c: self.c[..n].iter().zip(&rhs.c[..n]).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &Jet2 {
    type Output = Jet2;
    fn sub(self, rhs: &Jet2) -> Jet2 {
        let order = common(self, rhs);
        let n = len_for(order);
        Jet2 {
            order,
            c: self.c[..n].iter().zip(&rhs.c[..n]).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &Jet2 {
    type Output = Jet2;
    fn mul(self, rhs: &Jet2) -> Jet2 {
        let order = common(self, rhs);
        let mut out = Jet2::zero(order);
        for d in 0..=order {
            for j in 0..=d {
                let i = d - j;
                let mut s = 0.0;
                for i1 in 0..=i {
                    for j1 in 0..=j {
                        s += self.c[idx(i1, j1)] * rhs.c[idx(i - i1, j - j1)];
                    }
                }
                out.c[idx(i, j)] = s;
            }
        }
        out
    }
}

impl Neg for &Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        self.scale(-1.0)
    }
}

impl Mul<f64> for &Jet2 {
    type Output = Jet2;
    fn mul(self, rhs: f64) -> Jet2 {
        self.scale(rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn var_x(x0: f64, order: usize) -> Jet2 {
        Jet2::from_x_derivatives(&[x0, 1.0], order)
    }

    fn var_y(y0: f64, order: usize) -> Jet2 {
        Jet2::from_y_derivatives(&[y0, 1.0], order)
    }

    #[test]
    fn product_partials() {
        // f = x^2 y^3 at (2, 3)
        let x = var_x(2.0, 6);
        let y = var_y(3.0, 6);
        let f = &(&x * &x) * &(&(&y * &y) * &y);
        assert_relative_eq!(f.value(), 4.0 * 27.0);
        assert_relative_eq!(f.partial(1, 0), 2.0 * 2.0 * 27.0);
        assert_relative_eq!(f.partial(0, 1), 4.0 * 27.0);
        assert_relative_eq!(f.partial(1, 1), 2.0 * 2.0 * 27.0);
        assert_relative_eq!(f.partial(2, 3), 2.0 * 6.0);
        assert_eq!(f.partial(3, 0), 0.0);
    }

    #[test]
    fn reciprocal_and_composition() {
        // f = 1/(x + y) at (1, 2): ∂x^i ∂y^j = (-1)^(i+j) (i+j)! / 3^(i+j+1)
        let s = &var_x(1.0, 5) + &var_y(2.0, 5);
        let f = s.recip();
        let fact = [1.0, 1.0, 2.0, 6.0, 24.0, 120.0];
        for d in 0..=5usize {
            for j in 0..=d {
                let expect = (-1f64).powi(d as i32) * fact[d] / 3f64.powi(d as i32 + 1);
                assert_relative_eq!(f.partial(d - j, j), expect, max_relative = 1e-13);
            }
        }
        // exp(x y) at (0.5, 2): ∂x = y e, ∂xy = (1 + xy) e
        let p = &var_x(0.5, 4) * &var_y(2.0, 4);
        let e = 1f64.exp();
        let g = p.compose(&[e; 5]);
        assert_relative_eq!(g.partial(1, 0), 2.0 * e, max_relative = 1e-14);
        assert_relative_eq!(g.partial(1, 1), 2.0 * e, max_relative = 1e-14);
        assert_relative_eq!(g.partial(2, 0), 4.0 * e, max_relative = 1e-14);
    }

    #[test]
    fn derivative_shifts_order() {
        let x = var_x(1.5, 4);
        let y = var_y(-0.5, 4);
        let f = &(&x * &x) * &y;
        let fx = f.dx();
        assert_eq!(fx.order(), 3);
        assert_relative_eq!(fx.value(), 2.0 * 1.5 * -0.5);
        assert_relative_eq!(fx.dy().value(), 3.0);
        assert_relative_eq!(f.dy().dy().value(), 0.0);
    }

    #[test]
    fn low_order_coefficients_ignore_truncation() {
        let s = &var_x(0.7, 8) + &(&var_y(1.3, 8) * &var_x(0.7, 8));
        let hi = s.recip().square();
        let lo = s.truncate(3).recip().square();
        for d in 0..=3usize {
            for j in 0..=d {
                assert_eq!(hi.coeff(d - j, j), lo.coeff(d - j, j));
            }
        }
    }
}
