//! Weight-matched Gaussian quadrature rules via Golub-Welsch.
//!
//! Each rule integrates f against its weight function exactly for polynomial
//! f of degree <= 2n - 1, which covers every integrand this crate produces
//! (polynomial times family weight).

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Nodes and weights of the n-point rule for the weight whose monic
/// three-term recurrence has diagonal a_k and off-diagonal b_k (with
/// mu0 = integral of the weight). Eigenvalues of the Jacobi matrix seed the
/// nodes; each node is then Newton-polished on the orthonormal recurrence
/// and given the Christoffel weight 1 / sum_k p_k(x)^2, which stays accurate
/// in relative terms even where the weight is tiny (the eigenvector-based
/// weights lose all relative precision there).
fn golub_welsch(diag: &[f64], offdiag_sq: &[f64], mu0: f64) -> GaussRule {
    let n = diag.len();
    let mut j = DMatrix::zeros(n, n);
    for (k, &a) in diag.iter().enumerate() {
        j[(k, k)] = a;
    }
    for (k, &b) in offdiag_sq.iter().enumerate() {
        let s = b.sqrt();
        j[(k, k + 1)] = s;
        j[(k + 1, k)] = s;
    }
    let eig = SymmetricEigen::new(j);
    let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let sqrt_b: Vec<f64> = offdiag_sq.iter().map(|&b| b.sqrt()).collect();
    // Orthonormal values p_0..p_n at x plus the derivative of p_n.
    let eval = |x: f64| -> (Vec<f64>, f64, f64) {
        let mut p = Vec::with_capacity(n + 1);
        let mut dp_prev = 0.0; // p_{k-1}'
        let mut dp = 0.0; // p_k'
        p.push(1.0 / mu0.sqrt());
        for k in 0..n {
            let pk = p[k];
            let pk_1 = if k == 0 { 0.0 } else { p[k - 1] };
            let bk = if k == 0 { 0.0 } else { sqrt_b[k - 1] };
            let next = ((x - diag[k]) * pk - bk * pk_1) / sqrt_b.get(k).copied().unwrap_or(1.0);
            let dnext = (pk + (x - diag[k]) * dp - bk * dp_prev)
                / sqrt_b.get(k).copied().unwrap_or(1.0);
            p.push(next);
            dp_prev = dp;
            dp = dnext;
        }
        let pn = p[n];
        (p, pn, dp)
    };

    let mut weights = Vec::with_capacity(n);
    for node in nodes.iter_mut() {
        let mut x = *node;
        for _ in 0..4 {
            let (_, pn, dpn) = eval(x);
            if dpn == 0.0 {
                break;
            }
            let step = pn / dpn;
            x -= step;
            if step.abs() <= 1e-15 * (1.0 + x.abs()) {
                break;
            }
        }
        let (p, _, _) = eval(x);
        let ssq: f64 = p[..n].iter().map(|v| v * v).sum();
        *node = x;
        weights.push(1.0 / ssq);
    }
    GaussRule { nodes, weights }
}

/// Weight exp(-t^2) on the real line.
pub fn gauss_hermite(n: usize) -> GaussRule {
    assert!(n >= 1);
    let diag = vec![0.0; n];
    let offdiag: Vec<f64> = (1..n).map(|k| k as f64 / 2.0).collect();
    golub_welsch(&diag, &offdiag, std::f64::consts::PI.sqrt())
}

/// Weight t^alpha exp(-t) on (0, inf), alpha > -1.
pub fn gauss_gen_laguerre(n: usize, alpha: f64) -> GaussRule {
    assert!(n >= 1 && alpha > -1.0);
    let diag: Vec<f64> = (0..n).map(|k| 2.0 * k as f64 + alpha + 1.0).collect();
    let offdiag: Vec<f64> = (1..n).map(|k| k as f64 * (k as f64 + alpha)).collect();
    golub_welsch(&diag, &offdiag, ln_gamma(alpha + 1.0).exp())
}

/// Weight (1-t)^alpha (1+t)^beta on (-1, 1), alpha, beta > -1.
pub fn gauss_jacobi(n: usize, alpha: f64, beta: f64) -> GaussRule {
    assert!(n >= 1 && alpha > -1.0 && beta > -1.0);
    let ab = alpha + beta;
    let mut diag = Vec::with_capacity(n);
    for k in 0..n {
        let kf = k as f64;
        let denom = (2.0 * kf + ab) * (2.0 * kf + ab + 2.0);
        let a = if k == 0 {
            (beta - alpha) / (ab + 2.0)
        } else if denom.abs() < 1e-300 {
            0.0
        } else {
            (beta * beta - alpha * alpha) / denom
        };
        diag.push(a);
    }
    let mut offdiag = Vec::with_capacity(n.saturating_sub(1));
    for k in 1..n {
        let kf = k as f64;
        let b = if k == 1 {
            4.0 * (1.0 + alpha) * (1.0 + beta) / ((ab + 2.0) * (ab + 2.0) * (ab + 3.0))
        } else {
            let t = 2.0 * kf + ab;
            4.0 * kf * (kf + alpha) * (kf + beta) * (kf + ab) / (t * t * (t + 1.0) * (t - 1.0))
        };
        offdiag.push(b);
    }
    // mu0 = 2^(a+b+1) B(a+1, b+1)
    let mu0 =
        ((ab + 1.0) * std::f64::consts::LN_2 + ln_gamma(alpha + 1.0) + ln_gamma(beta + 1.0)
            - ln_gamma(ab + 2.0))
        .exp();
    golub_welsch(&diag, &offdiag, mu0)
}

/// Doubles the node count until two successive estimates agree to `tol`
/// (relative), starting from `start` nodes and capped at `cap`.
pub fn integrate_adaptive(
    make_rule: impl Fn(usize) -> GaussRule,
    f: impl Fn(f64) -> f64,
    start: usize,
    cap: usize,
    tol: f64,
) -> Result<f64> {
    let mut n = start.max(2);
    let mut prev = make_rule(n).integrate(&f);
    loop {
        n *= 2;
        if n > cap {
            return Err(Error::NumericalFailure {
                what: "adaptive quadrature".into(),
                diagnostics: format!("no convergence at {cap} nodes, last = {prev:.6e}"),
            });
        }
        let next = make_rule(n).integrate(&f);
        if (next - prev).abs() <= tol * (1.0 + next.abs()) {
            return Ok(next);
        }
        prev = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hermite_moments() {
        let rule = gauss_hermite(12);
        // int exp(-t^2) dt = sqrt(pi); int t^2 exp(-t^2) = sqrt(pi)/2
        assert_relative_eq!(
            rule.integrate(|_| 1.0),
            std::f64::consts::PI.sqrt(),
            max_relative = 1e-13
        );
        assert_relative_eq!(
            rule.integrate(|t| t * t),
            std::f64::consts::PI.sqrt() / 2.0,
            max_relative = 1e-13
        );
        assert!(rule.integrate(|t| t).abs() < 1e-14);
    }

    #[test]
    fn laguerre_moments() {
        let rule = gauss_gen_laguerre(10, 1.5);
        // int t^a e^-t = Gamma(a+1); first moment Gamma(a+2)
        assert_relative_eq!(
            rule.integrate(|_| 1.0),
            ln_gamma(2.5).exp(),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            rule.integrate(|t| t),
            ln_gamma(3.5).exp(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn jacobi_moments() {
        let rule = gauss_jacobi(10, 0.5, 1.5);
        // mu0 = 2^3 B(1.5, 2.5) = 8 * Gamma(1.5)Gamma(2.5)/Gamma(4)
        let expect =
            8.0 * (ln_gamma(1.5) + ln_gamma(2.5) - ln_gamma(4.0)).exp();
        assert_relative_eq!(rule.integrate(|_| 1.0), expect, max_relative = 1e-12);
        // Legendre special case integrates polynomials on [-1,1]
        let leg = gauss_jacobi(8, 0.0, 0.0);
        assert_relative_eq!(leg.integrate(|t| t * t), 2.0 / 3.0, max_relative = 1e-13);
    }

    #[test]
    fn adaptive_converges_fast_for_polynomials() {
        let v = integrate_adaptive(gauss_hermite, |t| t.powi(6), 4, 512, 1e-12).unwrap();
        // int t^6 e^{-t^2} = 15 sqrt(pi)/8
        assert_relative_eq!(
            v,
            15.0 * std::f64::consts::PI.sqrt() / 8.0,
            max_relative = 1e-12
        );
    }
}
