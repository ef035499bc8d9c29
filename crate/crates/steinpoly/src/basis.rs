//! Orthogonal-polynomial eigenbases {(Q_j, lambda_j)} for the catalog.
//!
//! Continuous classified families come from the Rodrigues construction
//! Q_j = (1/s) D^j (s phi^j), computed exactly through the recursion
//! u_{i+1} = phi u_i' + ((j - i - 1) phi' + psi) u_i, which only uses the
//! Pearson pair (phi, psi) of the weight. The beta family uses the
//! hypergeometric normalization (a)_j/j! * 2F1(-j, j+a+b-1; a; x). Discrete
//! families use the Charlier sum, the Krawtchouk sum, and the hypergeometric
//! Meixner normalization (alpha)_j * 2F1(-j, -x; alpha; 1 - 1/(1-p)).

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use num_traits::{One, Signed, Zero};
use once_cell::sync::Lazy;

use crate::error::{Error, Result};
use crate::family::{CondFamily, FamilyKind};
use crate::multipoly::MultiPoly;
use crate::poly::Poly;
use crate::rational::{from_f64, rat, Rational};
use crate::stein::{eigenvalue_of, stein_markov_operator};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolyClass {
    HermiteLike,
    LaguerreLike,
    JacobiLike,
    Unclassified,
}

/// The Sturm-Liouville pair of the weight, phi of degree <= 2 and psi linear,
/// in the sign convention of the differential equation
/// phi Q'' + psi Q' + lambda Q = 0. Hermite-like pairs are canonicalized so
/// that phi equals sigma^2.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiPsi {
    pub phi: Poly,
    pub psi: Poly,
    pub class: PolyClass,
}

pub fn phi_psi(fam: &CondFamily) -> Result<PhiPsi> {
    let (phi, psi) = match fam.kind() {
        FamilyKind::NormalLoc { sigma2 } => {
            let s2 = from_f64(*sigma2).expect("finite sigma2");
            // Raw pair is (-1, x / sigma2); canonical scaling by -sigma2.
            (Poly::constant(s2), Poly::monomial(1, rat(-1)))
        }
        FamilyKind::GammaShift { r, delta, g } => {
            let (r, d, g) = (
                from_f64(*r).expect("finite r"),
                from_f64(*delta).expect("finite delta"),
                from_f64(*g).expect("finite g"),
            );
            // phi = -(x - g), psi = delta (x - g) - r
            (
                Poly::from_coeffs(vec![g.clone(), rat(-1)]),
                Poly::from_coeffs(vec![-&(&d * &g) - &r, d]),
            )
        }
        FamilyKind::BetaTilt { a, b } => {
            let (a, b) = (
                from_f64(*a).expect("finite a"),
                from_f64(*b).expect("finite b"),
            );
            // phi = -x(1-x) = x^2 - x, psi = (a+b) x - a
            (
                Poly::from_coeffs(vec![Rational::zero(), rat(-1), Rational::one()]),
                Poly::from_coeffs(vec![-&a, &a + &b]),
            )
        }
        _ => {
            return Err(Error::Unsupported(
                "phi/psi classification applies to continuous univariate families".into(),
            ))
        }
    };
    let class = classify(&phi, &psi);
    Ok(PhiPsi { phi, psi, class })
}

pub fn classify(phi: &Poly, psi: &Poly) -> PolyClass {
    let dphi = phi.degree();
    let dpsi = psi.degree();
    match (dphi, dpsi) {
        (Some(0), Some(1)) => {
            if psi.leading().is_positive() != phi.coeff(0).is_positive() {
                PolyClass::HermiteLike
            } else {
                PolyClass::Unclassified
            }
        }
        (Some(1), Some(1)) => {
            let root_phi = -phi.coeff(0) / phi.leading();
            let root_psi = -psi.coeff(0) / psi.leading();
            if root_phi != root_psi {
                PolyClass::LaguerreLike
            } else {
                PolyClass::Unclassified
            }
        }
        (Some(2), Some(1)) => {
            let a = crate::rational::to_f64(&phi.coeff(2));
            let b = crate::rational::to_f64(&phi.coeff(1));
            let c = crate::rational::to_f64(&phi.coeff(0));
            let disc = b * b - 4.0 * a * c;
            if disc <= 0.0 {
                return PolyClass::Unclassified;
            }
            let r1 = (-b - disc.sqrt()) / (2.0 * a);
            let r2 = (-b + disc.sqrt()) / (2.0 * a);
            let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
            let root_psi = crate::rational::to_f64(&(-psi.coeff(0) / psi.leading()));
            if root_psi > lo && root_psi < hi {
                PolyClass::JacobiLike
            } else {
                PolyClass::Unclassified
            }
        }
        _ => PolyClass::Unclassified,
    }
}

/// Eigenbasis of the family's Stein-Markov operator through degree `j_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenBasis {
    pub family: String,
    pub polys: Vec<Poly>,
    pub eigenvalues: Vec<Rational>,
    pub j_max: usize,
}

impl EigenBasis {
    fn assemble(fam: &CondFamily, polys: Vec<Poly>) -> Result<Self> {
        let op = stein_markov_operator(fam)?;
        let mut eigenvalues = Vec::with_capacity(polys.len());
        for (j, q) in polys.iter().enumerate() {
            if q.degree() != Some(j) {
                return Err(Error::NumericalFailure {
                    what: "basis construction".into(),
                    diagnostics: format!("Q_{j} has degree {:?}", q.degree()),
                });
            }
            eigenvalues.push(eigenvalue_of(&op, q)?);
        }
        if !eigenvalues[0].is_zero() {
            return Err(Error::NumericalFailure {
                what: "basis construction".into(),
                diagnostics: "lambda_0 != 0".into(),
            });
        }
        if eigenvalues.iter().skip(1).any(|l| l.is_zero()) {
            return Err(Error::NumericalFailure {
                what: "basis construction".into(),
                diagnostics: "vanishing eigenvalue at positive degree".into(),
            });
        }
        Ok(EigenBasis {
            family: fam.kind_name().to_string(),
            polys,
            eigenvalues,
            j_max: 0,
        })
    }
}

/// The raw Rodrigues output (1/s) D^j (s phi^j) with the classification-sign
/// phi; no rescaling. Requires a classified continuous family.
pub fn rodrigues_basis(fam: &CondFamily, j_max: usize) -> Result<EigenBasis> {
    let pair = phi_psi(fam)?;
    if pair.class == PolyClass::Unclassified {
        return Err(Error::NoPolynomialBasis);
    }
    let polys = match pair.class {
        PolyClass::JacobiLike => match fam.kind() {
            FamilyKind::BetaTilt { a, b } => {
                let a = from_f64(*a).expect("finite a");
                let b = from_f64(*b).expect("finite b");
                (0..=j_max).map(|j| jacobi_hypergeometric(j, &a, &b)).collect()
            }
            _ => return Err(Error::NoPolynomialBasis),
        },
        _ => {
            // The classification pair for the normal family is canonicalized
            // (scaled by -sigma^2); undo the common scale for the Rodrigues
            // recursion, which needs the raw Pearson pair of the weight.
            let (phi, psi) = match fam.kind() {
                FamilyKind::NormalLoc { sigma2 } => {
                    let s2 = from_f64(*sigma2).expect("finite sigma2");
                    let scale = -(Rational::one() / s2);
                    (pair.phi.scale(&scale), pair.psi.scale(&scale))
                }
                _ => (pair.phi.clone(), pair.psi.clone()),
            };
            (0..=j_max).map(|j| rodrigues_poly(&phi, &psi, j)).collect()
        }
    };
    let mut basis = EigenBasis::assemble(fam, polys)?;
    basis.j_max = j_max;
    Ok(basis)
}

/// u_j from u_0 = 1, u_{i+1} = phi u_i' + ((j-i-1) phi' + psi) u_i, which
/// equals (1/s) D^j (s phi^j) whenever the weight satisfies (s phi)' = psi s.
fn rodrigues_poly(phi: &Poly, psi: &Poly, j: usize) -> Poly {
    let dphi = phi.derivative();
    let mut u = Poly::one();
    for i in 0..j {
        let k = rat((j - i - 1) as i64);
        let factor = &dphi.scale(&k) + psi;
        u = &(phi * &u.derivative()) + &(&factor * &u);
    }
    u
}

/// (a)_j / j! * 2F1(-j, j+a+b-1; a; x), expanded exactly.
fn jacobi_hypergeometric(j: usize, a: &Rational, b: &Rational) -> Poly {
    let mut coeffs = vec![Rational::zero(); j + 1];
    // term_k = (-j)_k (j+a+b-1)_k / ((a)_k k!) x^k
    let mut term = Rational::one();
    for (k, c) in coeffs.iter_mut().enumerate() {
        *c = term.clone();
        // advance to k+1
        let kk = rat(k as i64);
        let neg_j = rat(-(j as i64)) + kk.clone();
        let rising = rat(j as i64) + a + b - Rational::one() + kk.clone();
        let denom = (a + &kk) * (kk + Rational::one());
        term = term * neg_j * rising / denom;
    }
    let mut scale = Rational::one();
    for i in 0..j {
        scale = scale * (a + &rat(i as i64)) / rat((i + 1) as i64);
    }
    Poly::from_coeffs(coeffs).scale(&scale)
}

/// Charlier, Meixner, or Krawtchouk basis for the discrete families.
pub fn discrete_basis(fam: &CondFamily, j_max: usize) -> Result<EigenBasis> {
    let polys: Vec<Poly> = match fam.kind() {
        FamilyKind::PoissonTilt { m0 } => {
            let m0 = from_f64(*m0).expect("finite m0");
            (0..=j_max).map(|j| charlier(j, &m0)).collect()
        }
        FamilyKind::NegBinTilt { alpha, p } => {
            let p = from_f64(*p).expect("finite p");
            (0..=j_max).map(|j| meixner(j, &rat(*alpha as i64), &p)).collect()
        }
        FamilyKind::PascalShift { alpha, p } => {
            let a = from_f64(*alpha).expect("finite alpha");
            let p = from_f64(*p).expect("finite p");
            (0..=j_max).map(|j| meixner(j, &a, &p)).collect()
        }
        FamilyKind::BinomialShift { n_trials, p } => {
            let p = from_f64(*p).expect("finite p");
            if j_max > *n_trials as usize {
                return Err(Error::InvalidArgument(format!(
                    "Krawtchouk degree {j_max} exceeds the base trial count {n_trials}"
                )));
            }
            (0..=j_max).map(|j| krawtchouk(j, *n_trials, &p)).collect()
        }
        _ => {
            return Err(Error::Unsupported(
                "discrete basis applies to the lattice families".into(),
            ))
        }
    };
    let mut basis = EigenBasis::assemble(fam, polys)?;
    basis.j_max = j_max;
    Ok(basis)
}

/// Falling factorial x (x-1) ... (x-r+1) as a polynomial.
fn falling_factorial(r: usize) -> Poly {
    let mut p = Poly::one();
    for i in 0..r {
        p = &p * &Poly::from_coeffs(vec![rat(-(i as i64)), Rational::one()]);
    }
    p
}

fn binom_rat(n: usize, k: usize) -> Rational {
    let mut v = Rational::one();
    for i in 0..k {
        v = v * rat((n - i) as i64) / rat((i + 1) as i64);
    }
    v
}

/// C_j(x; m0) = sum_r binom(j,r) (-1)^(j-r) m0^(-r) x(x-1)...(x-r+1).
fn charlier(j: usize, m0: &Rational) -> Poly {
    let mut acc = Poly::zero();
    for r in 0..=j {
        let sign = if (j - r).is_multiple_of(2) { rat(1) } else { rat(-1) };
        let mut m0_pow = Rational::one();
        for _ in 0..r {
            m0_pow /= m0;
        }
        let c = binom_rat(j, r) * sign * m0_pow;
        acc = &acc + &falling_factorial(r).scale(&c);
    }
    acc
}

/// (alpha)_j * 2F1(-j, -x; alpha; 1 - 1/(1-p)), orthogonal under the Pascal
/// base pmf and an eigenfunction of its Ord Stein-Markov operator.
fn meixner(j: usize, alpha: &Rational, p: &Rational) -> Poly {
    // u = 1 - 1/(1-p) = -p/(1-p)
    let u = -(p / &(&Rational::one() - p));
    let mut acc = Poly::zero();
    // sum_k binom(j,k) binom(x,k) k! u^k / (alpha)_k, then scale by (alpha)_j.
    let mut u_pow = Rational::one();
    let mut alpha_rising = Rational::one();
    for k in 0..=j {
        // binom(x,k) k! = falling factorial of length k
        let c = binom_rat(j, k) * &u_pow / &alpha_rising;
        acc = &acc + &falling_factorial(k).scale(&c);
        u_pow = &u_pow * &u;
        alpha_rising *= alpha + &rat(k as i64);
    }
    let mut scale = Rational::one();
    for i in 0..j {
        scale *= alpha + &rat(i as i64);
    }
    acc.scale(&scale)
}

/// K_j(x; N, p) = sum_l (-1)^(j-l) binom(N-x, j-l) binom(x, l) p^(j-l) (1-p)^l.
fn krawtchouk(j: usize, n_trials: u32, p: &Rational) -> Poly {
    let q = &Rational::one() - p;
    let mut acc = Poly::zero();
    for l in 0..=j {
        let k = j - l;
        // binom(N - x, k) = product_{i=0..k-1} (N - x - i) / k!
        let mut nm = Poly::one();
        for i in 0..k {
            nm = &nm * &Poly::from_coeffs(vec![rat(n_trials as i64 - i as i64), rat(-1)]);
        }
        let mut kfact = Rational::one();
        for i in 1..=k {
            kfact *= rat(i as i64);
        }
        let sign = if k.is_multiple_of(2) { rat(1) } else { rat(-1) };
        let mut p_pow = Rational::one();
        for _ in 0..k {
            p_pow = &p_pow * p;
        }
        let mut q_pow = Rational::one();
        for _ in 0..l {
            q_pow = &q_pow * &q;
        }
        let coeff = sign * p_pow * q_pow / kfact;
        let xl = falling_factorial(l).scale(&(Rational::one() / factorial_rat(l)));
        acc = &acc + &(&nm * &xl).scale(&coeff);
    }
    acc
}

fn factorial_rat(n: usize) -> Rational {
    let mut v = Rational::one();
    for i in 1..=n {
        v *= rat(i as i64);
    }
    v
}

/// Multivariate Hermite-type polynomial via the recursion
/// H_{j+e_i} = (M x)_i H_j - d_i H_j, starting from H_0 = 1.
pub fn mv_hermite_basis(fam: &CondFamily, multi_j: &[u32]) -> Result<MultiPoly> {
    let m = match fam.kind() {
        FamilyKind::MvNormalLoc { m } => m,
        _ => {
            return Err(Error::Unsupported(
                "multivariate Hermite basis requires the multivariate normal family".into(),
            ))
        }
    };
    let d = m.len();
    if multi_j.len() != d {
        return Err(Error::InvalidArgument(format!(
            "multi-index length {} does not match dimension {d}",
            multi_j.len()
        )));
    }
    if multi_j.iter().sum::<u32>() > 10 {
        return Err(Error::InvalidArgument(
            "total degree of the multi-index is capped at 10".into(),
        ));
    }
    // (M x)_i as exact MultiPoly rows.
    let mut mx_rows = Vec::with_capacity(d);
    for row in m {
        let mut acc = MultiPoly::zero(d)?;
        for (k, &v) in row.iter().enumerate() {
            let c = from_f64(v).expect("finite matrix entry");
            acc = acc.add(&MultiPoly::var(d, k)?.scale(&c));
        }
        mx_rows.push(acc);
    }
    let mut h = MultiPoly::one(d)?;
    for (axis, &count) in multi_j.iter().enumerate() {
        for _ in 0..count {
            h = mx_rows[axis].mul(&h).sub(&h.partial(axis)?);
        }
    }
    Ok(h)
}

/// Expansion coefficients a_i of D Q_j = sum_{i<j} a_i Q_i, where D is the
/// derivative (continuous) or forward difference (discrete); exact by
/// triangular back-substitution on leading coefficients.
pub fn ladder_coefficients(basis: &EigenBasis, j: usize, discrete: bool) -> Result<Vec<Rational>> {
    if j >= basis.polys.len() {
        return Err(Error::InvalidArgument(format!(
            "degree {j} beyond basis truncation"
        )));
    }
    let mut rem = if discrete {
        basis.polys[j].forward_diff()
    } else {
        basis.polys[j].derivative()
    };
    let mut coeffs = vec![Rational::zero(); j];
    for i in (0..j).rev() {
        if rem.is_zero() {
            break;
        }
        if rem.degree() == Some(i) {
            let a = rem.leading() / basis.polys[i].leading();
            rem = &rem - &basis.polys[i].scale(&a);
            coeffs[i] = a;
        }
    }
    if !rem.is_zero() {
        return Err(Error::NumericalFailure {
            what: "ladder expansion".into(),
            diagnostics: format!("nonzero residual {rem:?}"),
        });
    }
    Ok(coeffs)
}

type CacheKey = (String, String, usize);
static BASIS_CACHE: Lazy<RwLock<HashMap<CacheKey, Arc<EigenBasis>>>> =
    Lazy::new(|| RwLock::new(HashMap::new()));

/// Cached construction of the family's eigenbasis through degree `j_max`.
pub fn basis_for(fam: &CondFamily, j_max: usize) -> Result<Arc<EigenBasis>> {
    let key = (
        fam.kind_name().to_string(),
        format!("{:?}", fam.kind()),
        j_max,
    );
    if let Some(hit) = BASIS_CACHE.read().expect("cache lock").get(&key) {
        return Ok(hit.clone());
    }
    let basis = if fam.is_discrete() {
        discrete_basis(fam, j_max)?
    } else {
        rodrigues_basis(fam, j_max)?
    };
    let arc = Arc::new(basis);
    BASIS_CACHE
        .write()
        .expect("cache lock")
        .insert(key, arc.clone());
    Ok(arc)
}
