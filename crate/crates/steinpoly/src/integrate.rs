//! Conditional expectations and weighted inner products for the catalog.
//!
//! Every integrand this crate produces is a polynomial times the family
//! weight, so the weight-matched Gauss rule (Hermite, generalized Laguerre,
//! Jacobi) is exact once the node count covers the degree. Callers pass the
//! integrand degree; the rule is evaluated at two nearby node counts as a
//! guard and doubled (capped at 512) only if those disagree. Keeping the
//! node count near the degree also avoids the precision cliff of
//! eigenvector-derived weights at large Laguerre nodes. Discrete families
//! sum the lattice with the tail truncated far below every test tolerance.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use once_cell::sync::Lazy;

use crate::error::{Error, Result};
use crate::family::{CondFamily, FamilyKind, InstrumentPoint};
use crate::quadrature::{gauss_gen_laguerre, gauss_hermite, gauss_jacobi, GaussRule};

pub const QUAD_TOL: f64 = 1e-12;
pub const QUAD_CAP: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq)]
enum RuleSpec {
    Hermite,
    GenLaguerre(f64),
    Jacobi(f64, f64),
}

type RuleKey = (u8, u64, u64, usize);
type NodeMap = Box<dyn Fn(f64) -> f64>;

static RULE_CACHE: Lazy<RwLock<HashMap<RuleKey, Arc<GaussRule>>>> =
    Lazy::new(|| RwLock::new(HashMap::new()));

fn rule(spec: RuleSpec, n: usize) -> Arc<GaussRule> {
    let key = match spec {
        RuleSpec::Hermite => (0u8, 0u64, 0u64, n),
        RuleSpec::GenLaguerre(a) => (1, a.to_bits(), 0, n),
        RuleSpec::Jacobi(a, b) => (2, a.to_bits(), b.to_bits(), n),
    };
    if let Some(hit) = RULE_CACHE.read().expect("rule cache").get(&key) {
        return hit.clone();
    }
    let built = Arc::new(match spec {
        RuleSpec::Hermite => gauss_hermite(n),
        RuleSpec::GenLaguerre(a) => gauss_gen_laguerre(n, a),
        RuleSpec::Jacobi(a, b) => gauss_jacobi(n, a, b),
    });
    RULE_CACHE
        .write()
        .expect("rule cache")
        .insert(key, built.clone());
    built
}

/// The rule spec and node transform x(t) matching the conditional law of
/// X | Z = z for the continuous univariate families.
fn law_rule(fam: &CondFamily, zv: f64) -> Result<(RuleSpec, NodeMap)> {
    Ok(match fam.kind() {
        FamilyKind::NormalLoc { sigma2 } => {
            let scale = (2.0 * sigma2).sqrt();
            (RuleSpec::Hermite, Box::new(move |t| zv + scale * t))
        }
        FamilyKind::GammaShift { r, delta, g } => {
            let (shape, delta, g) = (r + zv, *delta, *g);
            (
                RuleSpec::GenLaguerre(shape - 1.0),
                Box::new(move |t| g + t / delta),
            )
        }
        FamilyKind::BetaTilt { a, b } => (
            RuleSpec::Jacobi(b - zv - 1.0, a + zv - 1.0),
            Box::new(|t| (1.0 + t) / 2.0),
        ),
        _ => {
            return Err(Error::Unsupported(
                "no continuous quadrature rule for this family".into(),
            ))
        }
    })
}

/// The rule matching the z-free orthogonality weight s(x, z1).
fn weight_rule(fam: &CondFamily) -> Result<(RuleSpec, NodeMap)> {
    Ok(match fam.kind() {
        FamilyKind::NormalLoc { sigma2 } => {
            let scale = (2.0 * sigma2).sqrt();
            (RuleSpec::Hermite, Box::new(move |t| scale * t))
        }
        FamilyKind::GammaShift { r, delta, g } => {
            let (r, delta, g) = (*r, *delta, *g);
            (
                RuleSpec::GenLaguerre(r - 1.0),
                Box::new(move |t| g + t / delta),
            )
        }
        FamilyKind::BetaTilt { a, b } => (
            RuleSpec::Jacobi(b - 1.0, a - 1.0),
            Box::new(|t| (1.0 + t) / 2.0),
        ),
        _ => {
            return Err(Error::Unsupported(
                "no continuous weight rule for this family".into(),
            ))
        }
    })
}

/// Signed integral plus the absolute-mass scale sum |w f|, which bounds the
/// error actually achievable when the result cancels to ~0.
fn integrate_with_scale(rule: &GaussRule, f: &dyn Fn(f64) -> f64) -> (f64, f64) {
    let mut total = 0.0;
    let mut scale = 0.0;
    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
        let v = w * f(x);
        total += v;
        scale += v.abs();
    }
    (total, scale)
}

/// Integral of f against the spec's weight, exact for polynomial f of the
/// stated degree; verified at a second node count and escalated on mismatch.
/// The agreement threshold is anchored to the absolute-mass scale because
/// rounding noise in a cancelling integrand is proportional to it, not to
/// the (possibly ~0) result.
fn matched_integral(
    spec: RuleSpec,
    f: &dyn Fn(f64) -> f64,
    degree: usize,
    normalize: bool,
) -> Result<f64> {
    let eval = |n: usize| -> (f64, f64) {
        let r = rule(spec, n);
        let (total, scale) = integrate_with_scale(&r, f);
        if normalize {
            let mass = r.integrate(|_| 1.0);
            (total / mass, scale / mass)
        } else {
            (total, scale)
        }
    };
    let agree = |a: f64, b: f64, scale: f64| -> bool {
        (a - b).abs() <= QUAD_TOL * (1.0 + a.abs()) + 1e-9 * scale
    };
    let mut n = degree / 2 + 4;
    let (mut prev, mut prev_scale) = eval(n);
    let mut next_n = n + 4;
    loop {
        let (next, scale) = eval(next_n);
        if agree(next, prev, scale.max(prev_scale)) {
            return Ok(next);
        }
        n = next_n;
        next_n = n * 2;
        if next_n > QUAD_CAP {
            return Err(Error::NumericalFailure {
                what: "weight-matched quadrature".into(),
                diagnostics: format!("no convergence at {QUAD_CAP} nodes, last = {next:.6e}"),
            });
        }
        prev = next;
        prev_scale = scale;
    }
}

/// E[g(X) | Z = z] for univariate families; `degree` is the polynomial
/// degree of g (ignored for lattice families, where g may be any function
/// with lattice-summable expectation).
pub fn expectation(
    fam: &CondFamily,
    z: &InstrumentPoint,
    g: &dyn Fn(f64) -> f64,
    degree: usize,
) -> Result<f64> {
    let zv = fam.check_z(z)?;
    if fam.is_discrete() {
        return Ok(fam.discrete_law(z)?.expect(|k| g(k as f64)));
    }
    let (spec, map) = law_rule(fam, zv)?;
    matched_integral(spec, &|t| g(map(t)), degree, true)
}

/// Integral of h against the (unnormalized) orthogonality weight s; the
/// common scale cancels in Gram-matrix ratios. `degree` as in `expectation`.
pub fn weighted_inner(
    fam: &CondFamily,
    h: &dyn Fn(f64) -> f64,
    degree: usize,
) -> Result<f64> {
    if fam.is_discrete() {
        let base = InstrumentPoint::scalar(0.0);
        let law = fam.discrete_law(&base)?;
        return Ok(law.expect(|k| h(k as f64)));
    }
    let (spec, map) = weight_rule(fam)?;
    matched_integral(spec, &|t| h(map(t)), degree, false)
}

/// E[g(X) | Z = z] for the multivariate normal family via whitened tensor
/// Gauss-Hermite quadrature; `degree` is the total degree of g.
pub fn mv_expectation(
    fam: &CondFamily,
    z: &InstrumentPoint,
    g: &dyn Fn(&[f64]) -> f64,
    degree: usize,
) -> Result<f64> {
    fam.check_z(z)?;
    let m = match fam.kind() {
        FamilyKind::MvNormalLoc { m } => m,
        _ => {
            return Err(Error::Unsupported(
                "mv_expectation requires the multivariate normal family".into(),
            ))
        }
    };
    tensor_hermite_mean(m, &z.z2, g, degree)
}

/// Integral of h against exp(-x' M x / 2), up to the common normalizer.
pub fn mv_weighted_inner(
    fam: &CondFamily,
    h: &dyn Fn(&[f64]) -> f64,
    degree: usize,
) -> Result<f64> {
    let m = match fam.kind() {
        FamilyKind::MvNormalLoc { m } => m,
        _ => {
            return Err(Error::Unsupported(
                "mv_weighted_inner requires the multivariate normal family".into(),
            ))
        }
    };
    let center = vec![0.0; m.len()];
    tensor_hermite_mean(m, &center, h, degree)
}

/// Mean of g under N(center, M^{-1}), by whitening M = L L' and tensorizing
/// the Hermite rule; exact for polynomials of the stated total degree.
fn tensor_hermite_mean(
    m: &[Vec<f64>],
    center: &[f64],
    g: &dyn Fn(&[f64]) -> f64,
    degree: usize,
) -> Result<f64> {
    let d = m.len();
    let dm = nalgebra::DMatrix::from_fn(d, d, |i, j| m[i][j]);
    let chol = nalgebra::Cholesky::new(dm).ok_or_else(|| {
        Error::InvalidArgument("precision matrix must be positive definite".into())
    })?;
    let lt = chol.l().transpose();

    let eval = |n: usize| -> f64 {
        let r = rule(RuleSpec::Hermite, n);
        let mut total = 0.0;
        let mut wtotal = 0.0;
        let mut idx = vec![0usize; d];
        let sqrt2 = std::f64::consts::SQRT_2;
        loop {
            let mut w = 1.0;
            let t = nalgebra::DVector::from_fn(d, |i, _| {
                w *= r.weights[idx[i]];
                sqrt2 * r.nodes[idx[i]]
            });
            // x = center + L^{-T}(sqrt2 t): (x-center)' M (x-center) = 2|t|^2.
            let y = lt.clone().solve_upper_triangular(&t).expect("nonsingular");
            let x: Vec<f64> = (0..d).map(|i| center[i] + y[i]).collect();
            total += w * g(&x);
            wtotal += w;
            let mut axis = 0;
            loop {
                idx[axis] += 1;
                if idx[axis] < r.nodes.len() {
                    break;
                }
                idx[axis] = 0;
                axis += 1;
                if axis == d {
                    return total / wtotal;
                }
            }
        }
    };

    let mut n = degree / 2 + 2;
    let mut prev = eval(n);
    let mut next_n = n + 4;
    loop {
        let next = eval(next_n);
        if (next - prev).abs() <= 1e-11 * (1.0 + next.abs()) {
            return Ok(next);
        }
        n = next_n;
        next_n = n * 2;
        if next_n > 64 {
            return Err(Error::NumericalFailure {
                what: "tensor Hermite quadrature".into(),
                diagnostics: format!("no convergence at 64^d nodes, last = {prev:.6e}"),
            });
        }
        prev = next;
    }
}

/// Normalization check: integral/sum of the density over the support.
pub fn total_mass(fam: &CondFamily, z: &InstrumentPoint) -> Result<f64> {
    match fam.kind() {
        FamilyKind::MvNormalLoc { .. } => mv_density_mass(fam, z),
        FamilyKind::NormalLoc { .. }
        | FamilyKind::GammaShift { .. }
        | FamilyKind::BetaTilt { .. } => continuous_density_mass(fam, z),
        _ => {
            let law = fam.discrete_law(z)?;
            Ok(law.expect(|_| 1.0))
        }
    }
}

/// Integrates the density itself by dividing out the matched weight; the
/// resulting integrand is constant, so this independently checks the
/// family's normalizing constants.
fn continuous_density_mass(fam: &CondFamily, z: &InstrumentPoint) -> Result<f64> {
    let zv = fam.check_z(z)?;
    match fam.kind() {
        FamilyKind::NormalLoc { sigma2 } => {
            let scale = (2.0 * sigma2).sqrt();
            matched_integral(
                RuleSpec::Hermite,
                &|t| {
                    let x = zv + scale * t;
                    fam.density(&[x], z).unwrap_or(0.0) * (t * t).exp() * scale
                },
                0,
                false,
            )
        }
        FamilyKind::GammaShift { r, delta, g } => {
            let shape = r + zv;
            matched_integral(
                RuleSpec::GenLaguerre(shape - 1.0),
                &|t| {
                    let x = g + t / delta;
                    let f = fam.density(&[x], z).unwrap_or(0.0);
                    f * (t.exp() / t.powf(shape - 1.0)) / delta
                },
                0,
                false,
            )
        }
        FamilyKind::BetaTilt { a, b } => {
            let (aa, bb) = (a + zv, b - zv);
            matched_integral(
                RuleSpec::Jacobi(bb - 1.0, aa - 1.0),
                &|t| {
                    let x = (1.0 + t) / 2.0;
                    let f = fam.density(&[x], z).unwrap_or(0.0);
                    let w = (1.0 - t).powf(bb - 1.0) * (1.0 + t).powf(aa - 1.0);
                    f / w / 2.0
                },
                0,
                false,
            )
        }
        _ => unreachable!(),
    }
}

/// Lebesgue integral of the multivariate density: substitute
/// x = center + L^{-T} sqrt(2) t with M = L L', so dx = 2^{d/2}/det(L) dt and
/// the Gauss-Hermite weight divides out exactly.
fn mv_density_mass(fam: &CondFamily, z: &InstrumentPoint) -> Result<f64> {
    let m = match fam.kind() {
        FamilyKind::MvNormalLoc { m } => m.clone(),
        _ => unreachable!(),
    };
    let d = m.len();
    let dm = nalgebra::DMatrix::from_fn(d, d, |i, j| m[i][j]);
    let chol = nalgebra::Cholesky::new(dm).expect("validated SPD at construction");
    let det_l: f64 = (0..d).map(|i| chol.l()[(i, i)]).product();
    let lt = chol.l().transpose();
    let jacobian = 2f64.powf(d as f64 / 2.0) / det_l;
    let r = rule(RuleSpec::Hermite, 24);
    let mut total = 0.0;
    let mut idx = vec![0usize; d];
    let sqrt2 = std::f64::consts::SQRT_2;
    'outer: loop {
        let mut w = 1.0;
        let mut tsq = 0.0;
        let t = nalgebra::DVector::from_fn(d, |i, _| {
            w *= r.weights[idx[i]];
            tsq += r.nodes[idx[i]] * r.nodes[idx[i]];
            sqrt2 * r.nodes[idx[i]]
        });
        let y = lt.clone().solve_upper_triangular(&t).expect("nonsingular");
        let x: Vec<f64> = (0..d).map(|i| z.z2[i] + y[i]).collect();
        let f = fam.density(&x, z)?;
        total += w * f * tsq.exp() * jacobian;
        let mut axis = 0;
        loop {
            idx[axis] += 1;
            if idx[axis] < r.nodes.len() {
                break;
            }
            idx[axis] = 0;
            axis += 1;
            if axis == d {
                break 'outer;
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn expectation_matches_moments() {
        let fam = CondFamily::normal_loc(1.0, (-2.0, 2.0)).unwrap();
        let z = InstrumentPoint::scalar(0.7);
        let m1 = expectation(&fam, &z, &|x| x, 1).unwrap();
        assert_relative_eq!(m1, 0.7, max_relative = 1e-10);
        let m2 = expectation(&fam, &z, &|x| x * x, 2).unwrap();
        assert_relative_eq!(m2, 1.0 + 0.49, max_relative = 1e-10);

        let gam = CondFamily::gamma_shift(1.0, 1.0, 0.0, (0.0, 8.0)).unwrap();
        let z = InstrumentPoint::scalar(1.5);
        assert_relative_eq!(
            expectation(&gam, &z, &|x| x, 1).unwrap(),
            2.5,
            max_relative = 1e-10
        );

        let pois = CondFamily::poisson_tilt(1.0, (-0.95, 2.0)).unwrap();
        let z = InstrumentPoint::scalar(0.5);
        assert_relative_eq!(
            expectation(&pois, &z, &|x| x, 1).unwrap(),
            1.5,
            max_relative = 1e-10
        );
    }

    #[test]
    fn high_degree_gamma_inner_is_stable() {
        // Exercises the node-count guard on a degree-20 Laguerre integrand.
        let fam = CondFamily::gamma_shift(2.5, 2.0, -1.0, (0.0, 8.0)).unwrap();
        let v = weighted_inner(&fam, &|x| (1.0 + x).powi(20), 20).unwrap();
        assert!(v.is_finite() && v > 0.0);
        let v2 = weighted_inner(&fam, &|x| (1.0 + x).powi(20), 22).unwrap();
        assert_relative_eq!(v, v2, max_relative = 1e-10);
    }

    #[test]
    fn normalization_over_z_grid() {
        let fams = vec![
            CondFamily::normal_loc(1.5, (-2.0, 2.0)).unwrap(),
            CondFamily::gamma_shift(2.0, 1.5, -0.5, (0.0, 6.0)).unwrap(),
            CondFamily::beta_tilt(2.0, 3.0, (-1.5, 2.0)).unwrap(),
            CondFamily::poisson_tilt(1.0, (-0.9, 2.0)).unwrap(),
            CondFamily::neg_bin_tilt(2, 0.5, (-0.25, 0.25)).unwrap(),
            CondFamily::binomial_shift(10, 0.3, (0.0, 6.0)).unwrap(),
            CondFamily::pascal_shift(2.0, 0.5, (0.0, 6.0)).unwrap(),
        ];
        for fam in fams {
            let (lo, hi) = fam.z_domain();
            for i in 0..20 {
                let mut zv = lo + (hi - lo) * i as f64 / 19.0;
                if matches!(fam.kind(), FamilyKind::BinomialShift { .. }) {
                    zv = zv.round();
                }
                let mass = total_mass(&fam, &InstrumentPoint::scalar(zv)).unwrap();
                assert!(
                    (mass - 1.0).abs() <= 1e-8,
                    "{} mass {mass} at z = {zv}",
                    fam.kind_name()
                );
            }
        }
    }

    #[test]
    fn mv_normalization_and_mean() {
        let fam =
            CondFamily::mv_normal_loc(vec![vec![2.0, 1.0], vec![1.0, 2.0]], (-2.0, 2.0)).unwrap();
        let z = InstrumentPoint::vector(vec![0.5, -0.5]);
        let m1 = mv_expectation(&fam, &z, &|x| x[0], 1).unwrap();
        assert_relative_eq!(m1, 0.5, epsilon = 1e-10);
        // Var(x1) = (M^{-1})_{11} = 2/3.
        let v = mv_expectation(&fam, &z, &|x| (x[0] - 0.5) * (x[0] - 0.5), 2).unwrap();
        assert_relative_eq!(v, 2.0 / 3.0, max_relative = 1e-9);
        let mass = total_mass(&fam, &z).unwrap();
        assert_relative_eq!(mass, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn factorization_identity() {
        // Continuous: density == t(z) s(x) exp(mu tau); discrete power form:
        // density == t(z) s(x) (mu - m)^x.
        let cont = vec![
            CondFamily::normal_loc(1.3, (-2.0, 2.0)).unwrap(),
            CondFamily::gamma_shift(2.0, 1.5, -0.5, (0.0, 6.0)).unwrap(),
            CondFamily::beta_tilt(2.0, 3.0, (-1.5, 2.0)).unwrap(),
        ];
        let points: &[(f64, f64)] = &[(0.3, 0.5), (0.9, 1.1), (0.2, -0.1)];
        for fam in cont {
            for &(frac, zv) in points {
                let (lo, hi) = fam.z_domain();
                let zv = zv.clamp(lo + 0.05, hi - 0.05);
                let z = InstrumentPoint::scalar(zv);
                let x = match fam.support(&z) {
                    crate::family::Support::Interval { lo, hi } => {
                        let lo = lo.max(-3.0);
                        let hi = hi.min(3.0);
                        lo + frac * (hi - lo)
                    }
                    _ => unreachable!(),
                };
                let lhs = fam.density(&[x], &z).unwrap();
                let t = fam.t_norm(&z).unwrap();
                let mu = fam.mu(&z).unwrap()[0];
                let tau = fam.tau(&[x], &[]).unwrap()[0];
                let rhs = t * fam.weight_s(&[x], &[]) * (mu * tau).exp();
                assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
            }
        }

        let pois = CondFamily::poisson_tilt(2.0, (-1.5, 3.0)).unwrap();
        let negbin = CondFamily::neg_bin_tilt(3, 0.6, (-0.3, 0.5)).unwrap();
        for fam in [pois, negbin] {
            let m = fam.m_shift().unwrap();
            let (lo, hi) = fam.z_domain();
            for i in 0..5 {
                let zv = lo + (hi - lo) * (i as f64 + 0.5) / 5.0;
                let z = InstrumentPoint::scalar(zv);
                let t = fam.t_norm(&z).unwrap();
                let mu = fam.mu(&z).unwrap()[0];
                for x in 0..8u64 {
                    let lhs = fam.density(&[x as f64], &z).unwrap();
                    let rhs = t * fam.series_weight(x).unwrap() * (mu - m).powi(x as i32);
                    assert_relative_eq!(lhs, rhs, max_relative = 1e-11);
                }
            }
        }
    }
}
