//! Dense univariate polynomials with exact rational coefficients.
//!
//! Coefficient `k` is the coefficient of `x^k`. The trailing coefficient of a
//! nonzero polynomial is never zero, so `degree` is always well defined.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_traits::{One, Zero};

use crate::rational::{rat, to_f64, Rational};

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Poly {
    coeffs: Vec<Rational>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly { coeffs: Vec::new() }
    }

    pub fn constant(c: Rational) -> Self {
        Poly::from_coeffs(vec![c])
    }

    pub fn one() -> Self {
        Poly::constant(Rational::one())
    }

    /// The monomial x.
    pub fn x() -> Self {
        Poly::from_coeffs(vec![Rational::zero(), Rational::one()])
    }

    /// c * x^k.
    pub fn monomial(k: usize, c: Rational) -> Self {
        let mut coeffs = vec![Rational::zero(); k + 1];
        coeffs[k] = c;
        Poly::from_coeffs(coeffs)
    }

    /// Builds a polynomial, stripping trailing zeros.
    pub fn from_coeffs(mut coeffs: Vec<Rational>) -> Self {
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        Poly { coeffs }
    }

    /// Convenience constructor from small integers, index = power.
    pub fn from_ints(coeffs: &[i64]) -> Self {
        Poly::from_coeffs(coeffs.iter().map(|&c| rat(c)).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// None for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        if self.coeffs.is_empty() {
            None
        } else {
            Some(self.coeffs.len() - 1)
        }
    }

    pub fn coeffs(&self) -> &[Rational] {
        &self.coeffs
    }

    /// Coefficient of x^k (zero beyond the stored degree).
    pub fn coeff(&self, k: usize) -> Rational {
        self.coeffs.get(k).cloned().unwrap_or_else(Rational::zero)
    }

    /// Leading coefficient; zero for the zero polynomial.
    pub fn leading(&self) -> Rational {
        self.coeffs.last().cloned().unwrap_or_else(Rational::zero)
    }

    pub fn scale(&self, c: &Rational) -> Poly {
        if c.is_zero() {
            return Poly::zero();
        }
        Poly {
            coeffs: self.coeffs.iter().map(|a| a * c).collect(),
        }
    }

    /// Formal derivative.
    pub fn derivative(&self) -> Poly {
        if self.coeffs.len() <= 1 {
            return Poly::zero();
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| c * rat(k as i64))
            .collect();
        Poly::from_coeffs(coeffs)
    }

    /// p(x + c) via Ruffini-Horner shift; exact.
    pub fn shift(&self, c: &Rational) -> Poly {
        if self.is_zero() || c.is_zero() {
            return self.clone();
        }
        let mut coeffs = self.coeffs.clone();
        let n = coeffs.len();
        // Repeated synthetic division by (x - (-c)) accumulates the Taylor
        // coefficients of p about -(-c) = c shift.
        for i in 0..n - 1 {
            for j in (i..n - 1).rev() {
                let add = &coeffs[j + 1] * c;
                coeffs[j] = &coeffs[j] + add;
            }
        }
        Poly::from_coeffs(coeffs)
    }

    /// Forward difference p(x+1) - p(x), via binomial re-expansion.
    pub fn forward_diff(&self) -> Poly {
        &self.shift(&Rational::one()) - self
    }

    /// Backward difference p(x) - p(x-1).
    pub fn backward_diff(&self) -> Poly {
        self - &self.shift(&rat(-1))
    }

    /// Exact Horner evaluation.
    pub fn eval(&self, x: &Rational) -> Rational {
        let mut acc = Rational::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for c in self.coeffs.iter().rev() {
            acc = acc * x + to_f64(c);
        }
        acc
    }

    /// Exact rational evaluation at a float point (floats are dyadic
    /// rationals), rounded once at the end. Immune to the cancellation that
    /// limits Horner in f64 near the roots of high-degree polynomials.
    pub fn eval_f64_exact(&self, x: f64) -> f64 {
        match crate::rational::from_f64(x) {
            Some(xr) => to_f64(&self.eval(&xr)),
            None => f64::NAN,
        }
    }

    /// Float demotion for quadrature consumers.
    pub fn coeffs_f64(&self) -> Vec<f64> {
        self.coeffs.iter().map(to_f64).collect()
    }

    /// Quotient and remainder; divisor must be nonzero.
    pub fn div_rem(&self, d: &Poly) -> (Poly, Poly) {
        assert!(!d.is_zero(), "division by the zero polynomial");
        let dd = d.degree().unwrap();
        let lead = d.leading();
        let mut rem = self.coeffs.clone();
        let mut quot = vec![Rational::zero(); self.coeffs.len().saturating_sub(dd)];
        while rem.len() > dd {
            let k = rem.len() - 1 - dd;
            let factor = rem.last().unwrap() / &lead;
            if !factor.is_zero() {
                for (i, dc) in d.coeffs.iter().enumerate() {
                    let sub = dc * &factor;
                    rem[k + i] = &rem[k + i] - sub;
                }
                quot[k] = factor;
            }
            rem.pop();
            while rem.last().is_some_and(|c| c.is_zero()) {
                rem.pop();
            }
            if rem.len() < dd + 1 {
                break;
            }
        }
        (Poly::from_coeffs(quot), Poly::from_coeffs(rem))
    }

    /// Exact quotient when the division leaves no remainder.
    pub fn div_exact(&self, d: &Poly) -> Option<Poly> {
        let (q, r) = self.div_rem(d);
        if r.is_zero() {
            Some(q)
        } else {
            None
        }
    }
}

impl fmt::Debug for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (k, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            match k {
                0 => write!(f, "{c}")?,
                1 => write!(f, "({c})x")?,
                _ => write!(f, "({c})x^{k}")?,
            }
            first = false;
        }
        Ok(())
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let mut coeffs = Vec::with_capacity(n);
        for k in 0..n {
            coeffs.push(self.coeff(k) + rhs.coeff(k));
        }
        Poly::from_coeffs(coeffs)
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let mut coeffs = Vec::with_capacity(n);
        for k in 0..n {
            coeffs.push(self.coeff(k) - rhs.coeff(k));
        }
        Poly::from_coeffs(coeffs)
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        if self.is_zero() || rhs.is_zero() {
            return Poly::zero();
        }
        let mut coeffs = vec![Rational::zero(); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in rhs.coeffs.iter().enumerate() {
                let add = a * b;
                coeffs[i + j] = &coeffs[i + j] + add;
            }
        }
        Poly::from_coeffs(coeffs)
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        Poly {
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;
    use proptest::prelude::*;

    #[test]
    fn add_disjoint_supports() {
        let a = Poly::from_ints(&[1, 1]); // 1 + x
        let b = Poly::from_ints(&[0, 0, 1]); // x^2
        assert_eq!(&a + &b, Poly::from_ints(&[1, 1, 1]));
    }

    #[test]
    fn add_identity_and_inverse() {
        let p = Poly::from_ints(&[2, -3, 5]);
        assert_eq!(&p + &Poly::zero(), p);
        assert!((&p + &-&p).is_zero());
        let a = Poly::from_ints(&[1, 1]);
        let b = Poly::from_ints(&[-1, -1]);
        assert!((&a + &b).is_zero());
    }

    #[test]
    fn mul_examples() {
        let a = Poly::from_ints(&[1, 1]);
        let b = Poly::from_ints(&[1, -1]);
        assert_eq!(&a * &b, Poly::from_ints(&[1, 0, -1]));
        let p = Poly::from_ints(&[4, 0, 7]);
        assert_eq!(&p * &Poly::one(), p);
        assert_eq!(
            &Poly::x() * &Poly::monomial(2, rat(1)),
            Poly::monomial(3, rat(1))
        );
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(
            Poly::from_ints(&[-1, 0, 1]).derivative(),
            Poly::from_ints(&[0, 2])
        );
        assert!(Poly::constant(rat(9)).derivative().is_zero());
        assert_eq!(
            Poly::from_ints(&[0, 1, 0, 1]).derivative(),
            Poly::from_ints(&[1, 0, 3])
        );
    }

    #[test]
    fn forward_diff_examples() {
        // (x+1)^2 - x^2 = 2x + 1
        assert_eq!(
            Poly::from_ints(&[0, 0, 1]).forward_diff(),
            Poly::from_ints(&[1, 2])
        );
        assert!(Poly::constant(rat(3)).forward_diff().is_zero());
        assert_eq!(Poly::x().forward_diff(), Poly::one());
    }

    #[test]
    fn backward_diff_examples() {
        // x^2 - (x-1)^2 = 2x - 1
        assert_eq!(
            Poly::from_ints(&[0, 0, 1]).backward_diff(),
            Poly::from_ints(&[-1, 2])
        );
        assert!(Poly::constant(rat(3)).backward_diff().is_zero());
        assert_eq!(Poly::x().backward_diff(), Poly::one());
    }

    #[test]
    fn eval_examples() {
        let p = Poly::from_ints(&[-1, 0, 1]); // x^2 - 1
        assert_eq!(p.eval(&rat(2)), rat(3));
        let q = Poly::from_ints(&[7, 5]);
        assert_eq!(q.eval(&rat(0)), rat(7));
        let r = Poly::from_coeffs(vec![rat(1), rat(-2)]); // 1 - 2x
        assert_eq!(r.eval(&ratio(1, 2)), rat(0));
    }

    #[test]
    fn division_exact_and_remainder() {
        let p = Poly::from_ints(&[-1, 0, 1]);
        let d = Poly::from_ints(&[1, 1]);
        assert_eq!(p.div_exact(&d).unwrap(), Poly::from_ints(&[-1, 1]));
        let q = Poly::from_ints(&[1, 0, 1]);
        assert!(q.div_exact(&d).is_none());
        let (quot, rem) = q.div_rem(&d);
        assert_eq!(&(&quot * &d) + &rem, q);
    }

    fn small_rational() -> impl Strategy<Value = Rational> {
        (-9i64..=9, 1i64..=4).prop_map(|(n, d)| ratio(n, d))
    }

    fn small_poly() -> impl Strategy<Value = Poly> {
        prop::collection::vec(small_rational(), 0..6).prop_map(Poly::from_coeffs)
    }

    proptest! {
        #[test]
        fn degree_drops_by_one(p in small_poly()) {
            if let Some(n) = p.degree() {
                if n >= 1 {
                    prop_assert_eq!(p.derivative().degree(), Some(n - 1));
                    prop_assert_eq!(p.forward_diff().degree(), Some(n - 1));
                }
            }
        }

        #[test]
        fn forward_diff_matches_shifted_eval(p in small_poly(), x in small_rational()) {
            let lhs = p.forward_diff().eval(&x);
            let rhs = p.eval(&(&x + rat(1))) - p.eval(&x);
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn mul_commutes_and_distributes(a in small_poly(), b in small_poly(), c in small_poly()) {
            prop_assert_eq!(&a * &b, &b * &a);
            let lhs = &a * &(&b + &c);
            let rhs = &(&a * &b) + &(&a * &c);
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn shift_then_unshift_is_identity(p in small_poly(), c in small_rational()) {
            prop_assert_eq!(p.shift(&c).shift(&(-&c)), p);
        }
    }
}
