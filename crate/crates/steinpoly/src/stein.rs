//! Stein operators A, Stein-Markov operators, and the identity
//! E[A q | Z] = -nu(Z) E[q | Z], all acting exactly on polynomials.
//!
//! Conventions. The continuous operator acts as A q = phi_a q' + psi_a q,
//! where (phi_a, psi_a) is the negative of the classification pair in
//! `basis::phi_psi`; with this sign the catalog eigenvalues come out as
//! -j (normal, canonical scale), -delta j (gamma) and -j(j+a+b-1) (beta).
//! Discrete power-series families use the lattice operator
//! A q(x) = -m q(x) - rho(x) q(x-1) with rho = s(x-1)/s(x) and rho(start) = 0.
//! The two shift families carry the Pearson/Ord base operator
//! A q = phi D* q + psi q together with the coupling constant c of
//! A_mu = A + c mu(Z).

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::family::{CondFamily, FamilyKind, InstrumentPoint};
use crate::integrate::{expectation, mv_expectation};
use crate::multipoly::MultiPoly;
use crate::poly::Poly;
use crate::rational::{from_f64, rat, to_f64, Rational};

#[derive(Debug, Clone, PartialEq)]
pub enum SteinOp {
    /// A q = phi q' + psi q.
    Continuous { phi: Poly, psi: Poly },
    /// Lattice start + Z_+, A q(x) = -m q(x) - rho(x) q(x-1),
    /// rho = ratio_num / ratio_den and rho(start) = 0.
    DiscreteForward {
        ratio_num: Poly,
        ratio_den: Poly,
        m: Rational,
        start: i64,
    },
    /// Descending lattice start - Z_+, A q(x) = -m q(x) - rho(x) q(x+1),
    /// rho = s(x+1)/s(x) and rho(start) = 0.
    DiscreteBackward {
        ratio_num: Poly,
        ratio_den: Poly,
        m: Rational,
        start: i64,
    },
    /// A q = phi D* q + psi q with D* = backward difference (discrete) or
    /// derivative (continuous); c is the coupling of the shifted operator.
    PearsonOrd {
        phi: Poly,
        psi: Poly,
        c: Rational,
        discrete: bool,
    },
}

/// Result of applying a Stein operator: a polynomial when the rational parts
/// cancel, otherwise the reduced num/den pair.
#[derive(Debug, Clone)]
pub enum SteinImage {
    Poly(Poly),
    Rational { num: Poly, den: Poly },
}

impl SteinImage {
    pub fn into_poly(self) -> Result<Poly> {
        match self {
            SteinImage::Poly(p) => Ok(p),
            SteinImage::Rational { num, den } => Err(Error::OperatorMismatch(format!(
                "({:?}) / ({:?})",
                num, den
            ))),
        }
    }

    /// Pointwise evaluation; valid away from zeros of the denominator.
    pub fn eval_f64(&self, x: f64) -> f64 {
        match self {
            SteinImage::Poly(p) => p.eval_f64(x),
            SteinImage::Rational { num, den } => num.eval_f64(x) / den.eval_f64(x),
        }
    }
}

fn rational_param(v: f64, name: &str) -> Rational {
    from_f64(v).unwrap_or_else(|| panic!("family parameter {name} must be finite"))
}

/// The identity-bearing Stein operator of the family.
pub fn stein_operator(fam: &CondFamily) -> Result<SteinOp> {
    Ok(match fam.kind() {
        FamilyKind::NormalLoc { sigma2 } => {
            let s2 = rational_param(*sigma2, "sigma2");
            SteinOp::Continuous {
                phi: Poly::one(),
                psi: Poly::monomial(1, -(Rational::one() / s2)),
            }
        }
        FamilyKind::GammaShift { r, delta, g } => {
            let (r, d, g) = (
                rational_param(*r, "r"),
                rational_param(*delta, "delta"),
                rational_param(*g, "g"),
            );
            // phi = x - g, psi = r - delta (x - g)
            SteinOp::Continuous {
                phi: Poly::from_coeffs(vec![-&g, Rational::one()]),
                psi: Poly::from_coeffs(vec![&r + &(&d * &g), -&d]),
            }
        }
        FamilyKind::BetaTilt { a, b } => {
            let (a, b) = (rational_param(*a, "a"), rational_param(*b, "b"));
            // phi = x(1-x), psi = a - (a+b) x
            SteinOp::Continuous {
                phi: Poly::from_coeffs(vec![Rational::zero(), Rational::one(), -Rational::one()]),
                psi: Poly::from_coeffs(vec![a.clone(), -(&a + &b)]),
            }
        }
        FamilyKind::PoissonTilt { m0 } => {
            let m0 = rational_param(*m0, "m0");
            SteinOp::DiscreteForward {
                ratio_num: Poly::x(),
                ratio_den: Poly::constant(m0),
                m: rat(-1),
                start: 0,
            }
        }
        FamilyKind::NegBinTilt { alpha, p } => {
            let p = rational_param(*p, "p");
            // rho(x) = x / (x + alpha - 1), m = -(1 - p)
            SteinOp::DiscreteForward {
                ratio_num: Poly::x(),
                ratio_den: Poly::from_coeffs(vec![rat(*alpha as i64 - 1), Rational::one()]),
                m: &p - &Rational::one(),
                start: 0,
            }
        }
        FamilyKind::BinomialShift { n_trials, p } => {
            let p = rational_param(*p, "p");
            let n = rat(*n_trials as i64);
            // phi = (1-p) x, psi = pN - x
            SteinOp::PearsonOrd {
                phi: Poly::monomial(1, &Rational::one() - &p),
                psi: Poly::from_coeffs(vec![&p * &n, rat(-1)]),
                c: p,
                discrete: true,
            }
        }
        FamilyKind::PascalShift { alpha, p } => {
            let p = rational_param(*p, "p");
            let a = rational_param(*alpha, "alpha");
            // phi = x, psi = (1-p) alpha - p x
            SteinOp::PearsonOrd {
                phi: Poly::x(),
                psi: Poly::from_coeffs(vec![&(&Rational::one() - &p) * &a, -&p]),
                c: &Rational::one() - &p,
                discrete: true,
            }
        }
        FamilyKind::MvNormalLoc { .. } => {
            return Err(Error::Unsupported(
                "scalar Stein operator undefined for d > 1; use mv_stein_identity_residual".into(),
            ))
        }
    })
}

/// Exact application of A to a polynomial.
pub fn apply_stein(op: &SteinOp, q: &Poly) -> SteinImage {
    match op {
        SteinOp::Continuous { phi, psi } => {
            SteinImage::Poly(&(phi * &q.derivative()) + &(psi * q))
        }
        SteinOp::DiscreteForward {
            ratio_num,
            ratio_den,
            m,
            ..
        } => {
            // (-m q den - num q(x-1)) / den
            let shifted = q.shift(&rat(-1));
            let num = &(&q.scale(&-m) * ratio_den) - &(ratio_num * &shifted);
            reduce(num, ratio_den.clone())
        }
        SteinOp::DiscreteBackward {
            ratio_num,
            ratio_den,
            m,
            ..
        } => {
            let shifted = q.shift(&rat(1));
            let num = &(&q.scale(&-m) * ratio_den) - &(ratio_num * &shifted);
            reduce(num, ratio_den.clone())
        }
        SteinOp::PearsonOrd {
            phi, psi, discrete, ..
        } => {
            let dstar = if *discrete {
                q.backward_diff()
            } else {
                q.derivative()
            };
            SteinImage::Poly(&(phi * &dstar) + &(psi * q))
        }
    }
}

fn reduce(num: Poly, den: Poly) -> SteinImage {
    if let Some(q) = num.div_exact(&den) {
        SteinImage::Poly(q)
    } else {
        SteinImage::Rational { num, den }
    }
}

/// A composed with the degree-lowering operator D (derivative or forward
/// difference). Errors with operator-mismatch when the rational parts of a
/// lattice operator do not cancel, which signals that the family's
/// eigenstructure does not live in this form.
pub fn apply_stein_markov(op: &SteinOp, q: &Poly) -> Result<Poly> {
    let dq = match op {
        SteinOp::Continuous { .. } => q.derivative(),
        SteinOp::PearsonOrd { discrete, .. } => {
            if *discrete {
                q.forward_diff()
            } else {
                q.derivative()
            }
        }
        SteinOp::DiscreteForward { .. } | SteinOp::DiscreteBackward { .. } => q.forward_diff(),
    };
    apply_stein(op, &dq).into_poly()
}

/// Second-order form of the family's canonical Stein-Markov operator:
/// continuous families act as `second q'' + first q'`, discrete families as
/// `second (grad delta q) + first (delta q)`. The normal-location pair is
/// scaled so the eigenvalues follow the -j convention.
#[derive(Debug, Clone, PartialEq)]
pub struct SteinMarkovOp {
    pub second: Poly,
    pub first: Poly,
    pub discrete: bool,
}

impl SteinMarkovOp {
    pub fn apply(&self, q: &Poly) -> Poly {
        if self.discrete {
            let dq = q.forward_diff();
            &(&self.second * &dq.backward_diff()) + &(&self.first * &dq)
        } else {
            &(&self.second * &q.derivative().derivative()) + &(&self.first * &q.derivative())
        }
    }
}

pub fn stein_markov_operator(fam: &CondFamily) -> Result<SteinMarkovOp> {
    Ok(match fam.kind() {
        FamilyKind::NormalLoc { sigma2 } => {
            let s2 = rational_param(*sigma2, "sigma2");
            SteinMarkovOp {
                second: Poly::constant(s2),
                first: Poly::monomial(1, rat(-1)),
                discrete: false,
            }
        }
        FamilyKind::GammaShift { .. } | FamilyKind::BetaTilt { .. } => match stein_operator(fam)? {
            SteinOp::Continuous { phi, psi } => SteinMarkovOp {
                second: phi,
                first: psi,
                discrete: false,
            },
            _ => unreachable!(),
        },
        FamilyKind::PoissonTilt { m0 } => {
            let m0 = rational_param(*m0, "m0");
            let inv = Rational::one() / &m0;
            // A(delta q) = delta q - (x/m0) grad q
            //            = (x/m0) grad delta q + (1 - x/m0) delta q
            SteinMarkovOp {
                second: Poly::monomial(1, inv.clone()),
                first: Poly::from_coeffs(vec![Rational::one(), -inv]),
                discrete: true,
            }
        }
        FamilyKind::NegBinTilt { alpha, p } => {
            // The power-tilt lattice operator has rational coefficients and no
            // polynomial eigenfunctions; the eigenstructure lives in the Ord
            // operator of the Pascal base.
            let p = rational_param(*p, "p");
            SteinMarkovOp {
                second: Poly::x(),
                first: Poly::from_coeffs(vec![
                    &(&Rational::one() - &p) * &rat(*alpha as i64),
                    -&p,
                ]),
                discrete: true,
            }
        }
        FamilyKind::BinomialShift { .. } | FamilyKind::PascalShift { .. } => {
            match stein_operator(fam)? {
                SteinOp::PearsonOrd { phi, psi, .. } => SteinMarkovOp {
                    second: phi,
                    first: psi,
                    discrete: true,
                },
                _ => unreachable!(),
            }
        }
        FamilyKind::MvNormalLoc { .. } => {
            return Err(Error::Unsupported(
                "second-order scalar operator undefined for d > 1".into(),
            ))
        }
    })
}

/// |E[A q | Z = z] + nu(z) E[q | Z = z]| by weight-matched quadrature or
/// lattice summation.
pub fn stein_identity_residual(fam: &CondFamily, q: &Poly, z: &InstrumentPoint) -> Result<f64> {
    let nu = fam.stein_response(z)?;
    let deg = q.degree().unwrap_or(0);
    let eq = expectation(fam, z, &|x| q.eval_f64(x), deg)?;
    let eaq = expected_stein_image(fam, q, z)?;
    Ok((eaq + nu * eq).abs())
}

fn expected_stein_image(fam: &CondFamily, q: &Poly, z: &InstrumentPoint) -> Result<f64> {
    let op = stein_operator(fam)?;
    match &op {
        SteinOp::Continuous { .. } | SteinOp::PearsonOrd { .. } => {
            let aq = apply_stein(&op, q).into_poly()?;
            let deg = aq.degree().unwrap_or(0);
            expectation(fam, z, &|x| aq.eval_f64(x), deg)
        }
        SteinOp::DiscreteForward {
            ratio_num,
            ratio_den,
            m,
            start,
        } => {
            let mf = to_f64(m);
            expectation(
                fam,
                z,
                &|x| {
                    let k = x.round();
                    let rho = if (k as i64) <= *start {
                        0.0
                    } else {
                        ratio_num.eval_f64(k) / ratio_den.eval_f64(k)
                    };
                    -mf * q.eval_f64(k) - rho * q.eval_f64(k - 1.0)
                },
                0,
            )
        }
        SteinOp::DiscreteBackward { .. } => Err(Error::Unsupported(
            "no catalog family uses the descending lattice".into(),
        )),
    }
}

/// |E[A^k q | Z = z] - (-nu(z))^k E[q | Z = z]|.
pub fn iterated_identity_residual(
    fam: &CondFamily,
    q: &Poly,
    z: &InstrumentPoint,
    k: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("iteration order must be >= 1".into()));
    }
    let nu = fam.stein_response(z)?;
    let eq = expectation(fam, z, &|x| q.eval_f64(x), q.degree().unwrap_or(0))?;
    let target = (-nu).powi(k as i32) * eq;

    let op = stein_operator(fam)?;
    let eaq = match &op {
        SteinOp::Continuous { .. } | SteinOp::PearsonOrd { .. } => {
            let mut p = q.clone();
            for _ in 0..k {
                p = apply_stein(&op, &p).into_poly()?;
            }
            expectation(fam, z, &|x| p.eval_f64(x), p.degree().unwrap_or(0))?
        }
        SteinOp::DiscreteForward {
            ratio_num,
            ratio_den,
            m,
            start,
        } => {
            let mf = to_f64(m);
            // Fold A pointwise on the lattice window; each application reads
            // one cell to the left, and rho(start) = 0 seals the boundary.
            let window = 4096usize;
            let mut vals: Vec<f64> = (0..window).map(|i| q.eval_f64(i as f64)).collect();
            for _ in 0..k {
                let mut next = vec![0.0; window];
                for (i, slot) in next.iter_mut().enumerate() {
                    let x = i as f64;
                    let rho = if (i as i64) <= *start {
                        0.0
                    } else {
                        ratio_num.eval_f64(x) / ratio_den.eval_f64(x)
                    };
                    let left = if i == 0 { 0.0 } else { vals[i - 1] };
                    *slot = -mf * vals[i] - rho * left;
                }
                vals = next;
            }
            expectation(
                fam,
                z,
                &|x| {
                    let i = x.round() as usize;
                    vals.get(i).copied().unwrap_or(0.0)
                },
                0,
            )?
        }
        SteinOp::DiscreteBackward { .. } => {
            return Err(Error::Unsupported(
                "no catalog family uses the descending lattice".into(),
            ))
        }
    };
    Ok((eaq - target).abs())
}

/// Vector Stein identity residual for the multivariate normal family:
/// max_i |E[A_i Q | Z] + mu_i(z) E[Q | Z]| with A_i Q = d_i Q - (M x)_i Q.
pub fn mv_stein_identity_residual(
    fam: &CondFamily,
    q: &MultiPoly,
    z: &InstrumentPoint,
) -> Result<f64> {
    let m = match fam.kind() {
        FamilyKind::MvNormalLoc { m } => m.clone(),
        _ => {
            return Err(Error::Unsupported(
                "mv_stein_identity_residual requires the multivariate normal family".into(),
            ))
        }
    };
    let mu = fam.mu(z)?;
    let deg = q.total_degree() as usize;
    let eq = mv_expectation(fam, z, &|x| q.eval_f64(x), deg)?;
    let mut worst: f64 = 0.0;
    for i in 0..m.len() {
        let di = q.partial(i)?;
        let row = m[i].clone();
        let qc = q.clone();
        let eai = mv_expectation(
            fam,
            z,
            &|x: &[f64]| {
                let mx: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
                di.eval_f64(x) - mx * qc.eval_f64(x)
            },
            deg + 1,
        )?;
        worst = worst.max((eai + mu[i] * eq).abs());
    }
    Ok(worst)
}

/// Checks the Pearson/Ord relation Delta[phi f] = psi f for the base member
/// on the first `points` lattice cells, relative to the local pmf scale.
pub fn ord_relation_residual(fam: &CondFamily, points: u64) -> Result<f64> {
    let (phi, psi) = match stein_operator(fam)? {
        SteinOp::PearsonOrd { phi, psi, .. } => (phi, psi),
        _ => {
            return Err(Error::Unsupported(
                "Pearson/Ord relation check applies to the shift families".into(),
            ))
        }
    };
    let base = InstrumentPoint::scalar(0.0);
    let law = fam.discrete_law(&base)?;
    let mut worst: f64 = 0.0;
    for x in 0..points {
        let f_x = law.pmf(x);
        let f_x1 = law.pmf(x + 1);
        let lhs = phi.eval_f64(x as f64 + 1.0) * f_x1 - phi.eval_f64(x as f64) * f_x;
        let rhs = psi.eval_f64(x as f64) * f_x;
        let scale = f_x.abs().max(f_x1.abs()).max(1e-300);
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    Ok(worst)
}

/// One row of the shifted Pearson/Ord verification report.
#[derive(Debug, Clone)]
pub struct ShiftCheck {
    pub mu: f64,
    pub j: usize,
    /// |E[A_mu Q_j | Z]| — the Stein characterization of the shifted law.
    pub stein_char_residual: f64,
    /// |lambda_j E[Q_j|Z] + c mu E[D Q_j|Z]| — the projection identity.
    pub eigen_identity_residual: f64,
}

/// Verifies E[A_mu Q_j | Z] = 0 and lambda_j E[Q_j|Z] = -c mu E[D Q_j|Z]
/// over a grid of shift values, for the eigenfunctions of the base operator.
pub fn pearson_ord_shifted(
    fam: &CondFamily,
    polys: &[Poly],
    eigenvalues: &[Rational],
    mu_grid: &[f64],
    j_max: usize,
) -> Result<Vec<ShiftCheck>> {
    let op = stein_operator(fam)?;
    let c = match &op {
        SteinOp::PearsonOrd { c, .. } => to_f64(c),
        _ => {
            return Err(Error::Unsupported(
                "shifted verification applies to the Pearson/Ord shift families".into(),
            ))
        }
    };
    let rel = ord_relation_residual(fam, 100)?;
    if rel > 1e-10 {
        return Err(Error::NotPearsonOrd(rel));
    }

    let mut out = Vec::new();
    for &mu in mu_grid {
        let z = InstrumentPoint::scalar(mu);
        for (j, qj) in polys.iter().enumerate().take(j_max + 1) {
            let a_base = apply_stein(&op, qj).into_poly()?;
            // E[A_mu Q] = E[A_base Q] + c mu E[Q]
            let e_base = expectation(fam, &z, &|x| a_base.eval_f64(x), 0)?;
            let e_q = expectation(fam, &z, &|x| qj.eval_f64(x), 0)?;
            let stein_char = (e_base + c * mu * e_q).abs();

            let dq = qj.forward_diff();
            let e_dq = expectation(fam, &z, &|x| dq.eval_f64(x), 0)?;
            let lambda = to_f64(&eigenvalues[j]);
            let eigen_identity = (lambda * e_q + c * mu * e_dq).abs();

            out.push(ShiftCheck {
                mu,
                j,
                stein_char_residual: stein_char,
                eigen_identity_residual: eigen_identity,
            });
        }
    }
    Ok(out)
}

/// Largest |q(x) f(x|z) / tau'(x)| over the tail of a geometric approach to
/// each endpoint of the support; the boundary term of the integration by
/// parts behind the Stein identity.
pub fn boundary_guard(fam: &CondFamily, q: &Poly, z: &InstrumentPoint) -> Result<f64> {
    use crate::family::Support;
    let (lo, hi) = match fam.support(z) {
        Support::Interval { lo, hi } => (lo, hi),
        Support::Lattice { .. } => {
            return Err(Error::Unsupported(
                "boundary guard applies to continuous families".into(),
            ))
        }
    };
    let inv_tau_prime = |x: f64| -> f64 {
        match fam.kind() {
            FamilyKind::GammaShift { g, .. } => x - g,
            FamilyKind::BetaTilt { .. } => x * (1.0 - x),
            _ => 1.0,
        }
    };
    let bterm = |x: f64| -> f64 {
        let f = fam.density(&[x], z).unwrap_or(0.0);
        if f == 0.0 {
            return 0.0;
        }
        (q.eval_f64(x) * f * inv_tau_prime(x)).abs()
    };

    // Finite endpoints with fractional exponents vanish like a small power
    // of the distance, so the halving sequence runs deep; unbounded tails
    // are killed by the exponential weight much sooner.
    let mut tail_max: f64 = 0.0;
    for endpoint in [lo, hi] {
        let steps = if endpoint.is_infinite() { 48 } else { 140 };
        let vals: Vec<f64> = (0..steps)
            .map(|k| {
                let x = if endpoint.is_infinite() {
                    let sgn = if endpoint > 0.0 { 1.0 } else { -1.0 };
                    sgn * (1.5f64).powi(k)
                } else if endpoint == lo {
                    endpoint + (hi.min(endpoint + 1.0) - endpoint) * 0.5f64.powi(k)
                } else {
                    endpoint + (lo.max(endpoint - 1.0) - endpoint) * 0.5f64.powi(k)
                };
                bterm(x)
            })
            .collect();
        for v in vals.iter().rev().take(6) {
            tail_max = tail_max.max(*v);
        }
    }
    Ok(tail_max)
}

/// lambda = ratio of leading coefficients of (A q) and q, verified exactly:
/// the residual A q - lambda q must vanish coefficient-by-coefficient.
pub fn eigenvalue_of(op: &SteinMarkovOp, q: &Poly) -> Result<Rational> {
    if q.is_zero() {
        return Err(Error::InvalidArgument(
            "zero polynomial has no eigenvalue".into(),
        ));
    }
    let image = op.apply(q);
    let lambda = if image.is_zero() {
        Rational::zero()
    } else {
        if image.degree() != q.degree() {
            return Err(Error::NotAnEigenfunction(format!(
                "degree {:?} vs {:?}",
                image.degree(),
                q.degree()
            )));
        }
        image.leading() / q.leading()
    };
    let residual = &image - &q.scale(&lambda);
    if residual.is_zero() {
        Ok(lambda)
    } else {
        Err(Error::NotAnEigenfunction(format!("{residual:?}")))
    }
}
