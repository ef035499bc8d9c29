//! Series estimator for the instrumental-variables model
//! E[g(X, Z1) | Z] = pi(Z): approximate g by sum_j beta_j Q_j and regress Y
//! on the analytically known projections P_j(mu(Z)), skipping the
//! nonparametric first stage.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;

use crate::basis::EigenBasis;
use crate::error::{Error, Result};
use crate::family::{CondFamily, FamilyKind, InstrumentPoint, Support};
use crate::poly::Poly;
use crate::projection::{chebyshev_grid, fit_mu_polynomial, projection_table};

#[derive(Debug, Clone, PartialEq)]
pub struct Obs {
    pub y: f64,
    pub x: Vec<f64>,
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub rows: Vec<Obs>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Load outcome: parsed rows plus the indices (1-based data lines) and
/// reasons of rows rejected by support validation.
#[derive(Debug, Clone)]
pub struct LoadOutcome {
    pub data: Dataset,
    pub rejected: Vec<(usize, String)>,
}

/// Reads "y,x,z1...,z2..." CSV. Any number of z1 columns (prefix "z1") and
/// at least one z2 column (prefix "z2" or plain "z") are accepted; rows with
/// x outside the family support are reported, not silently dropped.
pub fn load_csv(path: &std::path::Path, fam: &CondFamily) -> Result<LoadOutcome> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(e.to_string()))?
        .clone();
    let mut y_col = None;
    let mut x_cols = Vec::new();
    let mut z1_cols = Vec::new();
    let mut z2_cols = Vec::new();
    for (i, name) in headers.iter().enumerate() {
        let lower = name.to_ascii_lowercase();
        if lower == "y" {
            y_col = Some(i);
        } else if lower == "x" || lower.starts_with("x") && lower[1..].parse::<u32>().is_ok() {
            x_cols.push(i);
        } else if lower.starts_with("z1") {
            z1_cols.push(i);
        } else if lower.starts_with("z2") || lower == "z" {
            z2_cols.push(i);
        }
    }
    let y_col = y_col.ok_or_else(|| Error::Schema("missing 'y' column".into()))?;
    if x_cols.is_empty() {
        return Err(Error::Schema("missing 'x' column".into()));
    }
    if z2_cols.is_empty() {
        return Err(Error::Schema("missing 'z2' (or 'z') column".into()));
    }

    let mut rows = Vec::new();
    let mut rejected = Vec::new();
    for (line0, record) in reader.records().enumerate() {
        let line = line0 + 1;
        let record = record.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let parse = |col: usize| -> Result<f64> {
            record
                .get(col)
                .ok_or_else(|| Error::Parse {
                    line,
                    message: format!("missing field {col}"),
                })?
                .parse::<f64>()
                .map_err(|e| Error::Parse {
                    line,
                    message: format!("field '{}': {e}", &headers[col]),
                })
        };
        let y = parse(y_col)?;
        let x: Vec<f64> = x_cols.iter().map(|&c| parse(c)).collect::<Result<_>>()?;
        let z1: Vec<f64> = z1_cols.iter().map(|&c| parse(c)).collect::<Result<_>>()?;
        let z2: Vec<f64> = z2_cols.iter().map(|&c| parse(c)).collect::<Result<_>>()?;
        match validate_support(fam, &x) {
            Ok(()) => rows.push(Obs { y, x, z1, z2 }),
            Err(reason) => rejected.push((line, reason)),
        }
    }
    if rows.is_empty() && rejected.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(LoadOutcome {
        data: Dataset { rows },
        rejected,
    })
}

fn validate_support(fam: &CondFamily, x: &[f64]) -> std::result::Result<(), String> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err("non-finite x".into());
    }
    if x.len() != fam.dim() {
        return Err(format!("x dimension {} != family dimension {}", x.len(), fam.dim()));
    }
    // Support checks that do not depend on z.
    match fam.kind() {
        FamilyKind::GammaShift { g, .. } if x[0] <= *g => Err(format!("x = {} below shift", x[0])),
        FamilyKind::BetaTilt { .. } if x[0] <= 0.0 || x[0] >= 1.0 => {
            Err(format!("x = {} outside (0,1)", x[0]))
        }
        FamilyKind::PoissonTilt { .. }
        | FamilyKind::NegBinTilt { .. }
        | FamilyKind::BinomialShift { .. }
        | FamilyKind::PascalShift { .. }
            if x[0] < -1e-9 || (x[0] - x[0].round()).abs() > 1e-9 =>
        {
            Err(format!("x = {} not on the lattice", x[0]))
        }
        _ => Ok(()),
    }
}

/// Law of the instrument in synthetic draws.
#[derive(Debug, Clone)]
pub enum ZLaw {
    Uniform { lo: f64, hi: f64 },
}

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub g_true: Poly,
    pub z_law: ZLaw,
    pub noise_sd: f64,
    pub n: usize,
    pub seed: u64,
    /// Loading of the structural shock on the noise; nonzero values make X
    /// endogenous while keeping E[eps | Z] = 0 (normal-location family only).
    pub endogenous: f64,
}

/// Draws (Y, X, Z) with Y = g_true(X) + eps and E[eps | Z] = 0.
pub fn synthesize(fam: &CondFamily, spec: &SynthSpec) -> Result<Dataset> {
    if spec.n == 0 {
        return Err(Error::InvalidArgument("sample size must be >= 1".into()));
    }
    if spec.noise_sd < 0.0 {
        return Err(Error::InvalidArgument("noise sd must be nonnegative".into()));
    }
    if spec.endogenous != 0.0 && !matches!(fam.kind(), FamilyKind::NormalLoc { .. }) {
        return Err(Error::Unsupported(
            "endogenous mode is defined for the normal-location family".into(),
        ));
    }
    let (lo, hi) = match spec.z_law {
        ZLaw::Uniform { lo, hi } => {
            let dom = fam.z_domain();
            if lo < dom.0 || hi > dom.1 || lo >= hi {
                return Err(Error::Domain(format!(
                    "z law range [{lo}, {hi}] outside the family domain [{}, {}]",
                    dom.0, dom.1
                )));
            }
            (lo, hi)
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gauss = rand_distr::StandardNormal;
    let mut rows = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let zv = lo + (hi - lo) * rng.gen::<f64>();
        let z = InstrumentPoint::scalar(zv);
        let row_seed: u64 = rng.gen();
        let x = fam.sample(&z, 1, row_seed)?.pop().expect("one draw");
        let eta: f64 = gauss.sample(&mut rng);
        let eps = if spec.endogenous != 0.0 {
            let sigma = match fam.kind() {
                FamilyKind::NormalLoc { sigma2 } => sigma2.sqrt(),
                _ => unreachable!(),
            };
            let shock = (x[0] - zv) / sigma;
            spec.noise_sd * (spec.endogenous * shock
                + (1.0 - spec.endogenous * spec.endogenous).sqrt() * eta)
        } else {
            spec.noise_sd * eta
        };
        let y = spec.g_true.eval_f64(x[0]) + eps;
        rows.push(Obs {
            y,
            x,
            z1: Vec::new(),
            z2: vec![zv],
        });
    }
    Ok(Dataset { rows })
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub beta: Vec<f64>,
    pub j_max: usize,
    pub ridge: f64,
    /// Condition number of the regressor matrix (singular-value ratio).
    pub condition: f64,
    pub residual_mean: f64,
    pub residual_variance: f64,
    /// Q_j coefficient vectors for evaluating the fitted structural function.
    pub basis_coeffs: Vec<Vec<f64>>,
}

/// Default series truncation: ceil(n^(1/4)) capped at 10.
pub fn default_truncation(n: usize) -> usize {
    ((n as f64).powf(0.25).ceil() as usize).clamp(1, 10)
}

/// OLS (or ridge) of Y on the analytic projections P_j(mu(Z)); the P_j come
/// from the projection module's fitted mu-polynomials, so no nonparametric
/// first stage is involved.
pub fn fit(
    data: &Dataset,
    fam: &CondFamily,
    basis: &EigenBasis,
    j_max: usize,
    ridge: f64,
) -> Result<FitResult> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if basis.family != fam.kind_name() {
        return Err(Error::InvalidArgument(format!(
            "basis was built for {} but the data family is {}",
            basis.family,
            fam.kind_name()
        )));
    }
    if j_max >= basis.polys.len() {
        return Err(Error::InvalidArgument(format!(
            "truncation {j_max} beyond the basis (J = {})",
            basis.polys.len() - 1
        )));
    }
    let n = data.len();
    if j_max + 1 > n {
        return Err(Error::InvalidArgument(format!(
            "J + 1 = {} regressors exceed the {n} observations",
            j_max + 1
        )));
    }
    if ridge < 0.0 {
        return Err(Error::InvalidArgument("ridge must be nonnegative".into()));
    }

    // Analytic projection polynomials in mu, fitted once on a Chebyshev grid.
    let (lo, hi) = fam.z_domain();
    let grid_n = (4 * (j_max + 1)).max(2 * (j_max + 1));
    let grid: Vec<f64> = if matches!(
        fam.kind(),
        FamilyKind::BinomialShift { .. } | FamilyKind::PascalShift { .. }
    ) {
        // Integer-valued instrument: an integer grid wide enough for the fit.
        let lo = lo.ceil() as i64;
        (lo..lo + grid_n as i64).map(|v| v as f64).collect()
    } else {
        chebyshev_grid(lo, hi, grid_n)
    };
    let table = projection_table(fam, basis, &grid)?;
    let mut proj_polys = Vec::with_capacity(j_max + 1);
    for j in 0..=j_max {
        proj_polys.push(fit_mu_polynomial(&table, j)?.coeffs);
    }

    // Design matrix: P_j(mu(z_i)).
    let mut design = nalgebra::DMatrix::zeros(n, j_max + 1);
    let mut rhs = nalgebra::DVector::zeros(n);
    for (i, obs) in data.rows.iter().enumerate() {
        let z = InstrumentPoint {
            z1: obs.z1.clone(),
            z2: obs.z2.clone(),
        };
        let mu = fam.projection_parameter(&z)?;
        for (j, coeffs) in proj_polys.iter().enumerate() {
            design[(i, j)] = coeffs.iter().rev().fold(0.0, |acc, &c| acc * mu + c);
        }
        rhs[i] = obs.y;
    }

    let svd = design.clone().svd(false, false);
    let smax = svd.singular_values.iter().copied().fold(0.0f64, f64::max);
    let smin = svd
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };

    let beta = if ridge == 0.0 {
        if smin <= 1e-10 * smax {
            let rank = svd
                .singular_values
                .iter()
                .filter(|s| **s > 1e-10 * smax)
                .count();
            return Err(Error::RankDeficient {
                rank,
                cols: j_max + 1,
            });
        }
        let qr = design.clone().qr();
        let qty = qr.q().transpose() * &rhs;
        let rr = qr.r();
        let mut beta = vec![0.0; j_max + 1];
        for i in (0..=j_max).rev() {
            let mut s = qty[i];
            for k in (i + 1)..=j_max {
                s -= rr[(i, k)] * beta[k];
            }
            beta[i] = s / rr[(i, i)];
        }
        beta
    } else {
        let xtx = design.transpose() * &design
            + nalgebra::DMatrix::identity(j_max + 1, j_max + 1) * ridge;
        let xty = design.transpose() * &rhs;
        let chol = nalgebra::Cholesky::new(xtx).ok_or_else(|| Error::NumericalFailure {
            what: "ridge normal equations".into(),
            diagnostics: "Cholesky failed".into(),
        })?;
        chol.solve(&xty).iter().copied().collect()
    };

    let fitted = &design * nalgebra::DVector::from_column_slice(&beta);
    let resid = &rhs - fitted;
    let residual_mean = resid.iter().sum::<f64>() / n as f64;
    let residual_variance =
        resid.iter().map(|r| (r - residual_mean) * (r - residual_mean)).sum::<f64>() / n as f64;

    Ok(FitResult {
        beta,
        j_max,
        ridge,
        condition,
        residual_mean,
        residual_variance,
        basis_coeffs: basis.polys[..=j_max].iter().map(|p| p.coeffs_f64()).collect(),
    })
}

/// ghat(x) = sum_j beta_j Q_j(x).
pub fn evaluate_ghat(fit: &FitResult, x: f64) -> f64 {
    fit.beta
        .iter()
        .zip(&fit.basis_coeffs)
        .map(|(b, q)| b * q.iter().rev().fold(0.0, |acc, &c| acc * x + c))
        .sum()
}

/// Expands a polynomial in the eigenbasis; exact when g lies in the span.
pub fn basis_coefficients_of(basis: &EigenBasis, g: &Poly) -> Option<Vec<f64>> {
    let mut rem = g.clone();
    let deg = g.degree().unwrap_or(0);
    if deg >= basis.polys.len() {
        return None;
    }
    let mut coeffs = vec![crate::rational::rat(0); deg + 1];
    for i in (0..=deg).rev() {
        if rem.is_zero() {
            break;
        }
        if rem.degree() == Some(i) {
            let a = rem.leading() / basis.polys[i].leading();
            rem = &rem - &basis.polys[i].scale(&a);
            coeffs[i] = a;
        }
    }
    if rem.is_zero() {
        Some(coeffs.iter().map(crate::rational::to_f64).collect())
    } else {
        None
    }
}

/// RMSE of the fitted structural function over an x grid.
pub fn ghat_rmse(fit: &FitResult, g_true: &Poly, grid: &[f64]) -> f64 {
    let sse: f64 = grid
        .iter()
        .map(|&x| {
            let d = evaluate_ghat(fit, x) - g_true.eval_f64(x);
            d * d
        })
        .sum();
    (sse / grid.len() as f64).sqrt()
}

/// Evenly spaced x grid inside the support for evaluating ghat.
pub fn ghat_grid(fam: &CondFamily, n: usize) -> Vec<f64> {
    let (lo, hi) = match fam.support(&InstrumentPoint::scalar(fam.z_domain().0)) {
        Support::Interval { lo, hi } => (lo.max(-3.0), hi.min(3.0)),
        Support::Lattice { start, end } => {
            (start as f64, end.map(|e| e as f64).unwrap_or(start as f64 + 12.0))
        }
    };
    (0..n)
        .map(|i| lo + (hi - lo) * (i as f64 + 0.5) / n as f64)
        .collect()
}
