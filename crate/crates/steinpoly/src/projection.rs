//! Projections P_j(z) = E[Q_j(X, Z1) | Z = z] and the certification that
//! P_j is a degree-j polynomial in the family's projection parameter.

use crate::basis::{ladder_coefficients, EigenBasis};
use crate::error::{Error, Result};
use crate::family::{CondFamily, FamilyKind, InstrumentPoint};
use crate::integrate::{expectation, mv_expectation};
use crate::rational::to_f64;

/// P_j(z) for j = 0..=j_max via weight-matched quadrature (continuous) or
/// truncated summation (discrete).
pub fn project(fam: &CondFamily, basis: &EigenBasis, z: &InstrumentPoint) -> Result<Vec<f64>> {
    basis
        .polys
        .iter()
        .map(|q| {
            let deg = q.degree().unwrap_or(0);
            expectation(fam, z, &|x| q.eval_f64(x), deg)
        })
        .collect()
}

/// Projections tabulated over a scalar z grid, with the projection parameter
/// mu attached per column.
#[derive(Debug, Clone)]
pub struct ProjectionTable {
    pub family: String,
    pub j_max: usize,
    pub z_grid: Vec<f64>,
    pub mu_grid: Vec<f64>,
    /// values[j][col] = P_j(z_grid[col]).
    pub values: Vec<Vec<f64>>,
}

pub fn projection_table(
    fam: &CondFamily,
    basis: &EigenBasis,
    z_grid: &[f64],
) -> Result<ProjectionTable> {
    let j_max = basis.polys.len() - 1;
    let mut values = vec![vec![0.0; z_grid.len()]; j_max + 1];
    let mut mu_grid = Vec::with_capacity(z_grid.len());
    for (col, &zv) in z_grid.iter().enumerate() {
        let z = InstrumentPoint::scalar(zv);
        mu_grid.push(fam.projection_parameter(&z)?);
        let p = project(fam, basis, &z)?;
        for (j, row) in values.iter_mut().enumerate() {
            row[col] = p[j];
        }
    }
    Ok(ProjectionTable {
        family: fam.kind_name().to_string(),
        j_max,
        z_grid: z_grid.to_vec(),
        mu_grid,
        values,
    })
}

/// Least-squares fit of P_j against a degree-j polynomial in mu, plus the
/// residual of the best degree-(j-1) fit for degree certification.
#[derive(Debug, Clone)]
pub struct MuFit {
    /// Coefficients of the degree-j polynomial in mu, index = power.
    pub coeffs: Vec<f64>,
    /// max_c |P_j(z_c) - fit(mu_c)|.
    pub max_residual: f64,
    /// Max residual of the best degree-(j-1) fit (max |P_0| for j = 0).
    pub lower_max_residual: f64,
    /// Dispersion (standard deviation) of P_j over the grid.
    pub spread: f64,
}

pub fn fit_mu_polynomial(table: &ProjectionTable, j: usize) -> Result<MuFit> {
    if j > table.j_max {
        return Err(Error::InvalidArgument(format!(
            "degree {j} beyond table truncation {}",
            table.j_max
        )));
    }
    let mu = &table.mu_grid;
    let y = &table.values[j];
    let mut distinct: Vec<f64> = mu.clone();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + a.abs()));
    if distinct.len() < 2 * (j + 1) {
        return Err(Error::IllConditionedGrid(format!(
            "{} distinct mu values for a degree-{j} certification (need {})",
            distinct.len(),
            2 * (j + 1)
        )));
    }

    let coeffs_scaled = vandermonde_fit(mu, y, j)?;
    let fitted = |c: &[f64], m: f64| -> f64 {
        let u = scale_to_unit(mu, m);
        c.iter().rev().fold(0.0, |acc, &ck| acc * u + ck)
    };
    let max_residual = mu
        .iter()
        .zip(y)
        .map(|(&m, &v)| (v - fitted(&coeffs_scaled, m)).abs())
        .fold(0.0f64, f64::max);

    let lower_max_residual = if j == 0 {
        y.iter().map(|v| v.abs()).fold(0.0f64, f64::max)
    } else {
        let lower = vandermonde_fit(mu, y, j - 1)?;
        mu.iter()
            .zip(y)
            .map(|(&m, &v)| (v - fitted(&lower, m)).abs())
            .fold(0.0f64, f64::max)
    };

    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let spread =
        (y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / y.len() as f64).sqrt();

    Ok(MuFit {
        coeffs: unscale_coefficients(&coeffs_scaled, mu),
        max_residual,
        lower_max_residual,
        spread,
    })
}

fn mu_bounds(mu: &[f64]) -> (f64, f64) {
    let lo = mu.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

fn scale_to_unit(mu: &[f64], m: f64) -> f64 {
    let (lo, hi) = mu_bounds(mu);
    if hi > lo {
        (2.0 * m - lo - hi) / (hi - lo)
    } else {
        0.0
    }
}

/// QR least squares on the Vandermonde of the grid scaled to [-1, 1].
fn vandermonde_fit(mu: &[f64], y: &[f64], degree: usize) -> Result<Vec<f64>> {
    let rows = mu.len();
    let cols = degree + 1;
    let v = nalgebra::DMatrix::from_fn(rows, cols, |r, c| scale_to_unit(mu, mu[r]).powi(c as i32));
    let rhs = nalgebra::DVector::from_column_slice(y);
    let qr = v.qr();
    let qty = qr.q().transpose() * rhs;
    let rr = qr.r();
    let mut beta = vec![0.0; cols];
    for i in (0..cols).rev() {
        if rr[(i, i)].abs() < 1e-13 {
            return Err(Error::IllConditionedGrid(format!(
                "rank deficiency at column {i} of the mu Vandermonde"
            )));
        }
        let mut s = qty[i];
        for k in (i + 1)..cols {
            s -= rr[(i, k)] * beta[k];
        }
        beta[i] = s / rr[(i, i)];
    }
    Ok(beta)
}

/// Expands coefficients in the scaled variable u = (2 mu - lo - hi)/(hi - lo)
/// back to powers of mu.
fn unscale_coefficients(coeffs_scaled: &[f64], mu: &[f64]) -> Vec<f64> {
    let (lo, hi) = mu_bounds(mu);
    let alpha = 2.0 / (hi - lo);
    let beta = -(lo + hi) / (hi - lo);
    let mut out = vec![0.0; coeffs_scaled.len()];
    let mut pow = vec![1.0]; // (alpha mu + beta)^k coefficients in mu
    for (k, &c) in coeffs_scaled.iter().enumerate() {
        for (i, &pi) in pow.iter().enumerate() {
            out[i] += c * pi;
        }
        if k + 1 < coeffs_scaled.len() {
            let mut next = vec![0.0; pow.len() + 1];
            for (i, &pi) in pow.iter().enumerate() {
                next[i] += beta * pi;
                next[i + 1] += alpha * pi;
            }
            pow = next;
        }
    }
    out
}

/// One row of the recursion report: the residual of
/// P_j = (-nu(z) scale / lambda_j) sum_i a_i P_i at a grid point.
#[derive(Debug, Clone)]
pub struct RecursionCheck {
    pub z: f64,
    pub j: usize,
    pub residual: f64,
}

/// Verifies the projection recursion induced by the eigenrelation and the
/// Stein identity. The basis eigenvalues are canonical; for the normal
/// family the identity-bearing operator is the canonical one divided by
/// sigma^2, hence the scale factor.
pub fn recursion_check(
    fam: &CondFamily,
    basis: &EigenBasis,
    z_grid: &[f64],
) -> Result<Vec<RecursionCheck>> {
    if matches!(fam.kind(), FamilyKind::NegBinTilt { .. }) {
        return Err(Error::Unsupported(
            "the negative-binomial power tilt has no polynomial eigenstructure \
             for its lattice Stein operator, so the projection recursion does \
             not apply"
                .into(),
        ));
    }
    let eigen_scale = match fam.kind() {
        FamilyKind::NormalLoc { sigma2 } => *sigma2,
        _ => 1.0,
    };
    let discrete = fam.is_discrete();
    let mut out = Vec::new();
    for &zv in z_grid {
        let z = InstrumentPoint::scalar(zv);
        let nu = fam.stein_response(&z)?;
        let p = project(fam, basis, &z)?;
        for j in 0..basis.polys.len() {
            let residual = if j == 0 {
                0.0
            } else {
                let ladder = ladder_coefficients(basis, j, discrete)?;
                let lambda = to_f64(&basis.eigenvalues[j]);
                let sum: f64 = ladder
                    .iter()
                    .enumerate()
                    .map(|(i, a)| to_f64(a) * p[i])
                    .sum();
                (p[j] - (-nu * eigen_scale / lambda) * sum).abs()
            };
            out.push(RecursionCheck { z: zv, j, residual });
        }
    }
    Ok(out)
}

/// E[Q_j(X) | Z = z] for the multivariate normal family; matches the product
/// (M z2)^j.
pub fn mv_project(fam: &CondFamily, multi_j: &[u32], z: &InstrumentPoint) -> Result<f64> {
    let total: u32 = multi_j.iter().sum();
    if total > 6 {
        return Err(Error::InvalidArgument(
            "total degree of the projection multi-index is capped at 6".into(),
        ));
    }
    let h = crate::basis::mv_hermite_basis(fam, multi_j)?;
    mv_expectation(fam, z, &|x| h.eval_f64(x), total as usize)
}

/// Chebyshev points (inclusive of the extreme nodes) on [lo, hi].
pub fn chebyshev_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && hi > lo);
    (0..n)
        .map(|i| {
            let t = (std::f64::consts::PI * i as f64 / (n - 1) as f64).cos();
            0.5 * (lo + hi) + 0.5 * (hi - lo) * t
        })
        .rev()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::basis_for;
    use approx::assert_relative_eq;

    fn rel_ok(got: f64, want: f64, tol: f64) -> bool {
        (got - want).abs() <= tol * (1.0 + want.abs())
    }

    #[test]
    fn normal_projections_are_mu_powers() {
        let fam = CondFamily::normal_loc(1.0, (-2.0, 2.0)).unwrap();
        let basis = basis_for(&fam, 8).unwrap();
        for &zv in &[-1.0, 0.3, 2.0] {
            let p = project(&fam, &basis, &InstrumentPoint::scalar(zv)).unwrap();
            for (j, &pj) in p.iter().enumerate() {
                assert!(
                    rel_ok(pj, zv.powi(j as i32), 1e-9),
                    "z {zv} j {j}: {pj} vs {}",
                    zv.powi(j as i32)
                );
            }
        }
    }

    #[test]
    fn charlier_projections() {
        let fam = CondFamily::poisson_tilt(2.0, (-1.5, 4.5)).unwrap();
        let basis = basis_for(&fam, 8).unwrap();
        for &zv in &[0.5, 1.0, 4.0] {
            let p = project(&fam, &basis, &InstrumentPoint::scalar(zv)).unwrap();
            for (j, &pj) in p.iter().enumerate() {
                let want = (zv / 2.0).powi(j as i32);
                assert!(rel_ok(pj, want, 1e-9), "z {zv} j {j}: {pj} vs {want}");
            }
        }
    }

    #[test]
    fn gamma_projections_are_falling_factorials() {
        let fam = CondFamily::gamma_shift(1.0, 1.0, 0.0, (0.0, 8.0)).unwrap();
        let basis = basis_for(&fam, 8).unwrap();
        for &zv in &[0.5, 3.0] {
            let p = project(&fam, &basis, &InstrumentPoint::scalar(zv)).unwrap();
            assert!(rel_ok(p[2], zv * (zv - 1.0), 1e-9), "P_2({zv}) = {}", p[2]);
            let mut ff = 1.0;
            for (j, &pj) in p.iter().enumerate() {
                if j > 0 {
                    ff *= zv - (j as f64 - 1.0);
                }
                assert!(rel_ok(pj, ff, 1e-8), "z {zv} j {j}: {pj} vs {ff}");
            }
        }
    }

    #[test]
    fn fit_recovers_exact_monomials() {
        let fam = CondFamily::normal_loc(1.0, (-2.0, 2.0)).unwrap();
        let basis = basis_for(&fam, 6).unwrap();
        let grid = chebyshev_grid(-2.0, 2.0, 28);
        let table = projection_table(&fam, &basis, &grid).unwrap();
        for j in 0..=6usize {
            let fit = fit_mu_polynomial(&table, j).unwrap();
            assert!(fit.max_residual <= 1e-8 * (1.0 + 2f64.powi(j as i32)));
            for (k, &c) in fit.coeffs.iter().enumerate() {
                let want = if k == j { 1.0 } else { 0.0 };
                assert!(
                    (c - want).abs() <= 1e-7 * (1.0 + 2f64.powi(j as i32)),
                    "j {j} coeff {k}: {c}"
                );
            }
        }
    }

    #[test]
    fn fit_gamma_quadratic_coefficients() {
        let fam = CondFamily::gamma_shift(1.0, 1.0, 0.0, (0.0, 8.0)).unwrap();
        let basis = basis_for(&fam, 4).unwrap();
        let table = projection_table(&fam, &basis, &chebyshev_grid(0.0, 8.0, 20)).unwrap();
        let fit = fit_mu_polynomial(&table, 2).unwrap();
        // P_2 = mu^2 - mu.
        assert!((fit.coeffs[0]).abs() < 1e-7);
        assert!((fit.coeffs[1] + 1.0).abs() < 1e-7);
        assert!((fit.coeffs[2] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn fit_degree_zero() {
        let fam = CondFamily::normal_loc(1.0, (-2.0, 2.0)).unwrap();
        let basis = basis_for(&fam, 2).unwrap();
        let table = projection_table(&fam, &basis, &chebyshev_grid(-2.0, 2.0, 12)).unwrap();
        let fit = fit_mu_polynomial(&table, 0).unwrap();
        assert_eq!(fit.coeffs.len(), 1);
        assert_relative_eq!(fit.coeffs[0], 1.0, max_relative = 1e-10);
        assert!(fit.max_residual < 1e-10);
    }

    #[test]
    fn degenerate_grid_is_rejected() {
        let fam = CondFamily::normal_loc(1.0, (-2.0, 2.0)).unwrap();
        let basis = basis_for(&fam, 3).unwrap();
        let grid = vec![0.5; 12];
        let table = projection_table(&fam, &basis, &grid).unwrap();
        assert!(matches!(
            fit_mu_polynomial(&table, 2),
            Err(Error::IllConditionedGrid(_))
        ));
    }

    #[test]
    fn recursion_examples() {
        // Normal j = 2: P_2 = -mu a_1 P_1 / lambda_2 with a_1 = 2.
        let fam = CondFamily::normal_loc(1.0, (-2.0, 2.0)).unwrap();
        let basis = basis_for(&fam, 4).unwrap();
        let checks = recursion_check(&fam, &basis, &[0.7, -1.2, 1.9]).unwrap();
        for c in &checks {
            assert!(c.residual <= 1e-7, "z {} j {}: {}", c.z, c.j, c.residual);
        }

        let pois = CondFamily::poisson_tilt(1.0, (-0.9, 2.0)).unwrap();
        let basis = basis_for(&pois, 5).unwrap();
        for c in recursion_check(&pois, &basis, &[0.5, 1.5]).unwrap() {
            assert!(c.residual <= 1e-7, "z {} j {}: {}", c.z, c.j, c.residual);
        }

        let nb = CondFamily::neg_bin_tilt(2, 0.5, (-0.25, 0.25)).unwrap();
        let basis = basis_for(&nb, 3).unwrap();
        assert!(recursion_check(&nb, &basis, &[0.1]).is_err());
    }

    #[test]
    fn jacobi_projection_recursion_closed_form() {
        // P_j(z) = -(z / lambda_j) E[Q_j'(X) | Z = z] for the beta family.
        let fam = CondFamily::beta_tilt(2.0, 3.0, (-1.5, 2.0)).unwrap();
        let basis = basis_for(&fam, 6).unwrap();
        for &zv in &[-1.0, 0.4, 1.7] {
            let z = InstrumentPoint::scalar(zv);
            let p = project(&fam, &basis, &z).unwrap();
            for j in 1..=6usize {
                let dq = basis.polys[j].derivative();
                let edq = expectation(&fam, &z, &|x| dq.eval_f64(x), j - 1).unwrap();
                let want = -zv / to_f64(&basis.eigenvalues[j]) * edq;
                assert!(
                    (p[j] - want).abs() <= 1e-6 * (1.0 + want.abs()),
                    "z {zv} j {j}: {} vs {want}",
                    p[j]
                );
            }
        }
    }

    #[test]
    fn mv_project_examples() {
        let id = CondFamily::mv_normal_loc(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            (-2.0, 2.0),
        )
        .unwrap();
        let z = InstrumentPoint::vector(vec![0.5, -1.0]);
        let p = mv_project(&id, &[1, 1], &z).unwrap();
        assert_relative_eq!(p, -0.5, max_relative = 1e-9);
        let p0 = mv_project(&id, &[0, 0], &z).unwrap();
        assert_relative_eq!(p0, 1.0, max_relative = 1e-12);

        let m = CondFamily::mv_normal_loc(
            vec![vec![2.0, 1.0], vec![1.0, 2.0]],
            (-2.0, 2.0),
        )
        .unwrap();
        let z = InstrumentPoint::vector(vec![1.0, 0.0]);
        // (M z2)_1 = 2, so P_(2,0) = 4.
        let p = mv_project(&m, &[2, 0], &z).unwrap();
        assert_relative_eq!(p, 4.0, max_relative = 1e-8);
    }

    #[test]
    fn grid_invariance_of_fitted_coefficients() {
        let fam = CondFamily::normal_loc(1.0, (-2.0, 2.0)).unwrap();
        let basis = basis_for(&fam, 6).unwrap();
        let full = chebyshev_grid(-2.0, 2.0, 56);
        let evens: Vec<f64> = full.iter().step_by(2).copied().collect();
        let odds: Vec<f64> = full.iter().skip(1).step_by(2).copied().collect();
        let t1 = projection_table(&fam, &basis, &evens).unwrap();
        let t2 = projection_table(&fam, &basis, &odds).unwrap();
        for j in 0..=6usize {
            let f1 = fit_mu_polynomial(&t1, j).unwrap();
            let f2 = fit_mu_polynomial(&t2, j).unwrap();
            let cmax = f1.coeffs.iter().map(|c| c.abs()).fold(0.0f64, f64::max);
            for (a, b) in f1.coeffs.iter().zip(&f2.coeffs) {
                assert!((a - b).abs() <= 1e-6 * (1.0 + cmax), "j {j}: {a} vs {b}");
            }
        }
    }
}
