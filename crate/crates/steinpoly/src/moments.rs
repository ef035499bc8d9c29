//! Exact rational moments of the catalog laws.
//!
//! Every family's conditional law at rational z has rational moments, which
//! makes E[p(X) | Z = z] exactly computable for rational-coefficient
//! polynomials. This is the independent oracle against which the quadrature
//! and summation paths are checked; it never feeds the production pipeline.

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::family::{CondFamily, FamilyKind};
use crate::poly::Poly;
use crate::rational::{from_f64, rat, Rational};

/// E[X^k | Z = z] for k = 0..=deg, exact. `zv` is taken at face value
/// (converted losslessly from f64); the family's z-domain is not enforced, so
/// the base member z = 0 is always reachable.
pub fn moments(fam: &CondFamily, zv: f64, deg: usize) -> Result<Vec<Rational>> {
    let z = from_f64(zv)
        .ok_or_else(|| Error::InvalidArgument("z must be finite".into()))?;
    let p_of = |v: f64| from_f64(v).expect("finite parameter");
    match fam.kind() {
        FamilyKind::NormalLoc { sigma2 } => Ok(normal_moments(&z, &p_of(*sigma2), deg)),
        FamilyKind::GammaShift { r, delta, g } => {
            let shape = p_of(*r) + &z;
            Ok(shifted_gamma_moments(&shape, &p_of(*delta), &p_of(*g), deg))
        }
        FamilyKind::BetaTilt { a, b } => {
            let aa = p_of(*a) + &z;
            let bb = p_of(*b) - &z;
            Ok(beta_moments(&aa, &bb, deg))
        }
        FamilyKind::PoissonTilt { m0 } => {
            let lambda = p_of(*m0) + &z;
            let factorial: Vec<Rational> = (0..=deg)
                .map(|m| pow_rat(&lambda, m))
                .collect();
            Ok(from_factorial_moments(&factorial))
        }
        FamilyKind::NegBinTilt { alpha, p } => {
            let q = &Rational::one() - &p_of(*p) + &z;
            Ok(negbin_monomial_moments(&rat(*alpha as i64), &q, deg))
        }
        FamilyKind::PascalShift { alpha, p } => {
            let shape = p_of(*alpha) + &z;
            let q = &Rational::one() - &p_of(*p);
            Ok(negbin_monomial_moments(&shape, &q, deg))
        }
        FamilyKind::BinomialShift { n_trials, p } => {
            let n = rat(*n_trials as i64) + &z;
            let pr = p_of(*p);
            // E[x^(m)] = n (n-1) ... (n-m+1) p^m
            let mut factorial = Vec::with_capacity(deg + 1);
            let mut acc = Rational::one();
            for m in 0..=deg {
                if m > 0 {
                    acc = acc * (&n - &rat(m as i64 - 1)) * &pr;
                }
                factorial.push(acc.clone());
            }
            Ok(from_factorial_moments(&factorial))
        }
        FamilyKind::MvNormalLoc { .. } => Err(Error::Unsupported(
            "exact moments implemented for univariate families".into(),
        )),
    }
}

/// Exact E[p(X) | Z = z].
pub fn exact_expectation(fam: &CondFamily, zv: f64, p: &Poly) -> Result<Rational> {
    let deg = p.degree().unwrap_or(0);
    let m = moments(fam, zv, deg)?;
    let mut acc = Rational::zero();
    for (k, c) in p.coeffs().iter().enumerate() {
        acc += c * &m[k];
    }
    Ok(acc)
}

/// Exact base-law expectation (z = 0), the normalized inner product
/// <p, 1>_s / <1, 1>_s of the orthogonality weight.
pub fn exact_base_expectation(fam: &CondFamily, p: &Poly) -> Result<Rational> {
    exact_expectation(fam, 0.0, p)
}

fn pow_rat(base: &Rational, k: usize) -> Rational {
    let mut acc = Rational::one();
    for _ in 0..k {
        acc *= base;
    }
    acc
}

/// m_k = mean m_{k-1} + (k-1) sigma2 m_{k-2}.
fn normal_moments(mean: &Rational, sigma2: &Rational, deg: usize) -> Vec<Rational> {
    let mut m = Vec::with_capacity(deg + 1);
    m.push(Rational::one());
    if deg >= 1 {
        m.push(mean.clone());
    }
    for k in 2..=deg {
        let v = mean * &m[k - 1] + rat(k as i64 - 1) * sigma2 * &m[k - 2];
        m.push(v);
    }
    m
}

/// Raw moments of g + T with T ~ Gamma(shape, rate).
fn shifted_gamma_moments(shape: &Rational, rate: &Rational, g: &Rational, deg: usize) -> Vec<Rational> {
    let mut t = Vec::with_capacity(deg + 1);
    t.push(Rational::one());
    for m in 1..=deg {
        let v = &t[m - 1] * (shape + &rat(m as i64 - 1)) / rate;
        t.push(v);
    }
    if g.is_zero() {
        return t;
    }
    // Binomial shift: E[(g + T)^k].
    let mut out = Vec::with_capacity(deg + 1);
    for k in 0..=deg {
        let mut acc = Rational::zero();
        let mut binom = Rational::one();
        for (i, ti) in t.iter().enumerate().take(k + 1) {
            acc += &binom * &pow_rat(g, k - i) * ti;
            binom = binom * rat((k - i) as i64) / rat(i as i64 + 1);
        }
        out.push(acc);
    }
    out
}

fn beta_moments(a: &Rational, b: &Rational, deg: usize) -> Vec<Rational> {
    let mut m = Vec::with_capacity(deg + 1);
    m.push(Rational::one());
    for k in 1..=deg {
        let kk = rat(k as i64 - 1);
        let v = &m[k - 1] * (a + &kk) / (a + b + &kk);
        m.push(v);
    }
    m
}

/// Factorial moments E[x^(m)] = (shape)_m (q / (1-q))^m of the negative
/// binomial law with pmf proportional to binom(x+shape-1, x) q^x, converted
/// to monomial moments.
fn negbin_monomial_moments(shape: &Rational, q: &Rational, deg: usize) -> Vec<Rational> {
    let ratio = q / &(&Rational::one() - q);
    let mut factorial = Vec::with_capacity(deg + 1);
    let mut acc = Rational::one();
    for m in 0..=deg {
        if m > 0 {
            acc = acc * (shape + &rat(m as i64 - 1)) * &ratio;
        }
        factorial.push(acc.clone());
    }
    from_factorial_moments(&factorial)
}

/// Monomial moments from factorial moments via the Stirling-number identity
/// x^k = sum_m S2(k, m) x^(m).
fn from_factorial_moments(factorial: &[Rational]) -> Vec<Rational> {
    let deg = factorial.len() - 1;
    let s2 = stirling2(deg);
    (0..=deg)
        .map(|k| {
            let mut acc = Rational::zero();
            for m in 0..=k {
                acc += rat(s2[k][m]) * &factorial[m];
            }
            acc
        })
        .collect()
}

/// Stirling numbers of the second kind up to row `deg` (values fit i64 for
/// the degrees this crate touches).
fn stirling2(deg: usize) -> Vec<Vec<i64>> {
    let mut s = vec![vec![0i64; deg + 1]; deg + 1];
    s[0][0] = 1;
    for k in 1..=deg {
        for m in 1..=k {
            s[k][m] = s[k - 1][m - 1] + (m as i64) * s[k - 1][m];
        }
    }
    s
}
