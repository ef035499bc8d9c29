//! Exact rational scalars used for polynomial coefficients.
//!
//! Every `f64` is an exact dyadic rational, so family parameters supplied as
//! floats convert losslessly and the eigenrelation checks can run in exact
//! arithmetic.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

pub type Rational = BigRational;

/// Integer constant as a rational.
pub fn rat(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Rational n/d.
pub fn ratio(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// Exact conversion from a finite float.
pub fn from_f64(x: f64) -> Option<Rational> {
    Rational::from_float(x)
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // Out-of-range ratios: fall back to sign * infinity.
        if r.is_negative() {
            f64::NEG_INFINITY
        } else if r.is_zero() {
            0.0
        } else {
            f64::INFINITY
        }
    })
}

/// Parse "p/q" or a plain integer string.
pub fn parse(s: &str) -> Option<Rational> {
    s.trim().parse::<Rational>().ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trip_is_exact() {
        for &x in &[0.1, -3.5, 1.0 / 3.0, 2.0f64.powi(-40)] {
            let r = from_f64(x).unwrap();
            assert_eq!(to_f64(&r), x);
        }
    }

    #[test]
    fn parse_fraction() {
        assert_eq!(parse("3/2").unwrap(), ratio(3, 2));
        assert_eq!(parse("-7").unwrap(), rat(-7));
    }
}
