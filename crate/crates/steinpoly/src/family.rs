//! Catalog of conditional distributions X|Z.
//!
//! Continuous members factor as t(z) s(x,z1) exp(mu(z) tau(x,z1)); discrete
//! power-series members as t(z) s(x) (mu(z) - m)^x on the lattice Z_+. The
//! two shift families (binomial trials shift, Pascal shape shift) carry their
//! Stein structure through the Pearson/Ord base operator instead.
//!
//! z1 enters only through the finitely many family parameters, so one
//! `CondFamily` value represents the conditional law at a fixed z1 stratum;
//! the instrument payload that varies is z2.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const TAIL_TOL: f64 = 1e-12;
const SUM_CAP: u64 = 200_000;

/// Instrument vector Z = (Z1, Z2). The catalog families keep z1 empty and
/// read the scalar (or d-vector) instrument from z2.
#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentPoint {
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
}

impl InstrumentPoint {
    pub fn scalar(z: f64) -> Self {
        InstrumentPoint {
            z1: Vec::new(),
            z2: vec![z],
        }
    }

    pub fn vector(z2: Vec<f64>) -> Self {
        InstrumentPoint { z1: Vec::new(), z2 }
    }
}

/// Support of X given Z.
#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    /// Open interval, possibly unbounded.
    Interval { lo: f64, hi: f64 },
    /// start + Z_+, optionally capped (finite lattices).
    Lattice { start: i64, end: Option<i64> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum FamilyKind {
    NormalLoc { sigma2: f64 },
    MvNormalLoc { m: Vec<Vec<f64>> },
    GammaShift { r: f64, delta: f64, g: f64 },
    BetaTilt { a: f64, b: f64 },
    PoissonTilt { m0: f64 },
    NegBinTilt { alpha: u32, p: f64 },
    BinomialShift { n_trials: u32, p: f64 },
    PascalShift { alpha: f64, p: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CondFamily {
    kind: FamilyKind,
    z_domain: (f64, f64),
}

/// Wire format for family specifications.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilySpec {
    pub kind: String,
    pub params: serde_json::Value,
    pub z_domain: [f64; 2],
}

fn require(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidArgument(msg.to_string()))
    }
}

impl CondFamily {
    pub fn normal_loc(sigma2: f64, z_domain: (f64, f64)) -> Result<Self> {
        require(sigma2 > 0.0 && sigma2.is_finite(), "sigma2 must be positive")?;
        Self::with_domain(FamilyKind::NormalLoc { sigma2 }, z_domain)
    }

    pub fn mv_normal_loc(m: Vec<Vec<f64>>, z_domain: (f64, f64)) -> Result<Self> {
        let d = m.len();
        require((1..=3).contains(&d), "precision matrix dimension must be 1..=3")?;
        require(m.iter().all(|row| row.len() == d), "precision matrix must be square")?;
        for (i, row) in m.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                require(
                    (v - m[j][i]).abs() <= 1e-12 * (1.0 + v.abs()),
                    "precision matrix must be symmetric",
                )?;
            }
        }
        let dm = nalgebra::DMatrix::from_fn(d, d, |i, j| m[i][j]);
        require(
            nalgebra::Cholesky::new(dm).is_some(),
            "precision matrix must be positive definite",
        )?;
        Self::with_domain(FamilyKind::MvNormalLoc { m }, z_domain)
    }

    pub fn gamma_shift(r: f64, delta: f64, g: f64, z_domain: (f64, f64)) -> Result<Self> {
        require(r > 0.0 && delta > 0.0, "gamma shape r and rate delta must be positive")?;
        require(z_domain.0 > -r, "gamma z-domain must satisfy z > -r")?;
        Self::with_domain(FamilyKind::GammaShift { r, delta, g }, z_domain)
    }

    pub fn beta_tilt(a: f64, b: f64, z_domain: (f64, f64)) -> Result<Self> {
        require(a > 0.0 && b > 0.0, "beta shapes a, b must be positive")?;
        require(
            z_domain.0 > -a && z_domain.1 < b,
            "beta z-domain must lie inside (-a, b)",
        )?;
        Self::with_domain(FamilyKind::BetaTilt { a, b }, z_domain)
    }

    pub fn poisson_tilt(m0: f64, z_domain: (f64, f64)) -> Result<Self> {
        require(m0 > 0.0, "poisson base m0 must be positive")?;
        require(z_domain.0 > -m0, "poisson z-domain must satisfy z > -m0")?;
        Self::with_domain(FamilyKind::PoissonTilt { m0 }, z_domain)
    }

    pub fn neg_bin_tilt(alpha: u32, p: f64, z_domain: (f64, f64)) -> Result<Self> {
        require(alpha >= 1, "negbin alpha must be an integer >= 1")?;
        require(p > 0.0 && p < 1.0, "negbin p must be in (0,1)")?;
        require(
            z_domain.0 > p - 1.0 && z_domain.1 < p,
            "negbin z-domain must lie inside (p-1, p)",
        )?;
        Self::with_domain(FamilyKind::NegBinTilt { alpha, p }, z_domain)
    }

    pub fn binomial_shift(n_trials: u32, p: f64, z_domain: (f64, f64)) -> Result<Self> {
        require(n_trials >= 1, "binomial N must be >= 1")?;
        require(p > 0.0 && p < 1.0, "binomial p must be in (0,1)")?;
        require(
            z_domain.0 >= -(n_trials as f64),
            "binomial shift domain must satisfy z >= -N",
        )?;
        Self::with_domain(FamilyKind::BinomialShift { n_trials, p }, z_domain)
    }

    pub fn pascal_shift(alpha: f64, p: f64, z_domain: (f64, f64)) -> Result<Self> {
        require(alpha > 0.0, "pascal alpha must be positive")?;
        require(p > 0.0 && p < 1.0, "pascal p must be in (0,1)")?;
        require(z_domain.0 > -alpha, "pascal shift domain must satisfy z > -alpha")?;
        Self::with_domain(FamilyKind::PascalShift { alpha, p }, z_domain)
    }

    fn with_domain(kind: FamilyKind, z_domain: (f64, f64)) -> Result<Self> {
        require(
            z_domain.0.is_finite() && z_domain.1.is_finite() && z_domain.0 <= z_domain.1,
            "z-domain must be a finite interval [lo, hi]",
        )?;
        Ok(CondFamily { kind, z_domain })
    }

    pub fn kind(&self) -> &FamilyKind {
        &self.kind
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            FamilyKind::NormalLoc { .. } => "NormalLoc",
            FamilyKind::MvNormalLoc { .. } => "MvNormalLoc",
            FamilyKind::GammaShift { .. } => "GammaShift",
            FamilyKind::BetaTilt { .. } => "BetaTilt",
            FamilyKind::PoissonTilt { .. } => "PoissonTilt",
            FamilyKind::NegBinTilt { .. } => "NegBinTilt",
            FamilyKind::BinomialShift { .. } => "BinomialShift",
            FamilyKind::PascalShift { .. } => "PascalShift",
        }
    }

    pub fn z_domain(&self) -> (f64, f64) {
        self.z_domain
    }

    pub fn is_discrete(&self) -> bool {
        matches!(
            self.kind,
            FamilyKind::PoissonTilt { .. }
                | FamilyKind::NegBinTilt { .. }
                | FamilyKind::BinomialShift { .. }
                | FamilyKind::PascalShift { .. }
        )
    }

    /// Dimension of X (and of mu(z)).
    pub fn dim(&self) -> usize {
        match &self.kind {
            FamilyKind::MvNormalLoc { m } => m.len(),
            _ => 1,
        }
    }

    /// Power-series base point m of the discrete form; `None` for families
    /// that are not of the power-series type.
    pub fn m_shift(&self) -> Option<f64> {
        match &self.kind {
            FamilyKind::PoissonTilt { .. } => Some(-1.0),
            FamilyKind::NegBinTilt { p, .. } => Some(-(1.0 - p)),
            _ => None,
        }
    }

    /// Checks z against the declared domain (component-wise for d > 1) and
    /// returns the scalar payload for univariate families.
    pub fn check_z(&self, z: &InstrumentPoint) -> Result<f64> {
        let d = self.dim();
        if z.z2.len() != d {
            return Err(Error::Domain(format!(
                "expected z2 of dimension {d}, got {}",
                z.z2.len()
            )));
        }
        let (lo, hi) = self.z_domain;
        for &v in &z.z2 {
            if !v.is_finite() || v < lo || v > hi {
                return Err(Error::Domain(format!("z = {v} outside [{lo}, {hi}]")));
            }
        }
        // Integer-valued instrument for the binomial trials shift.
        if let FamilyKind::BinomialShift { .. } = self.kind {
            let v = z.z2[0];
            if (v - v.round()).abs() > 1e-9 {
                return Err(Error::Domain(format!(
                    "binomial shift requires integer mu(z), got {v}"
                )));
            }
        }
        Ok(z.z2[0])
    }

    pub fn support(&self, z: &InstrumentPoint) -> Support {
        match &self.kind {
            FamilyKind::NormalLoc { .. } | FamilyKind::MvNormalLoc { .. } => Support::Interval {
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
            },
            FamilyKind::GammaShift { g, .. } => Support::Interval {
                lo: *g,
                hi: f64::INFINITY,
            },
            FamilyKind::BetaTilt { .. } => Support::Interval { lo: 0.0, hi: 1.0 },
            FamilyKind::PoissonTilt { .. }
            | FamilyKind::NegBinTilt { .. }
            | FamilyKind::PascalShift { .. } => Support::Lattice {
                start: 0,
                end: None,
            },
            FamilyKind::BinomialShift { n_trials, .. } => {
                let mu = z.z2.first().copied().unwrap_or(0.0).round() as i64;
                Support::Lattice {
                    start: 0,
                    end: Some(*n_trials as i64 + mu),
                }
            }
        }
    }

    /// Natural parameter map mu(z).
    pub fn mu(&self, z: &InstrumentPoint) -> Result<Vec<f64>> {
        self.check_z(z)?;
        Ok(match &self.kind {
            FamilyKind::NormalLoc { sigma2 } => vec![z.z2[0] / sigma2],
            FamilyKind::MvNormalLoc { m } => mat_vec(m, &z.z2),
            FamilyKind::GammaShift { .. } => vec![z.z2[0]],
            FamilyKind::BetaTilt { .. } => vec![z.z2[0]],
            FamilyKind::PoissonTilt { m0 } => vec![z.z2[0] / m0],
            FamilyKind::NegBinTilt { .. } => vec![z.z2[0]],
            FamilyKind::BinomialShift { .. } => vec![z.z2[0].round()],
            FamilyKind::PascalShift { .. } => vec![z.z2[0]],
        })
    }

    /// The scalar nu(z) with E[A q | Z = z] = -nu(z) E[q | Z = z] for the
    /// family's Stein operator: mu(z) for the exponential/power families,
    /// c * mu(z) for the Pearson/Ord shift families.
    pub fn stein_response(&self, z: &InstrumentPoint) -> Result<f64> {
        let zv = self.check_z(z)?;
        Ok(match &self.kind {
            FamilyKind::NormalLoc { sigma2 } => zv / sigma2,
            FamilyKind::MvNormalLoc { .. } => {
                return Err(Error::Unsupported(
                    "scalar stein response undefined for d > 1".into(),
                ))
            }
            FamilyKind::GammaShift { .. } | FamilyKind::BetaTilt { .. } => zv,
            FamilyKind::PoissonTilt { m0 } => zv / m0,
            FamilyKind::NegBinTilt { .. } => zv,
            FamilyKind::BinomialShift { p, .. } => p * zv.round(),
            FamilyKind::PascalShift { p, .. } => (1.0 - p) * zv,
        })
    }

    /// Coupling constant c of the shifted Pearson/Ord operator, where defined.
    pub fn ord_coupling(&self) -> Option<f64> {
        match &self.kind {
            FamilyKind::BinomialShift { p, .. } => Some(*p),
            FamilyKind::PascalShift { p, .. } => Some(1.0 - p),
            _ => None,
        }
    }

    /// Parameter in which the projections P_j are degree-j polynomials.
    ///
    /// Equals mu(z) except for the negative-binomial power tilt, whose
    /// projections are polynomial in -mu / ((1-p)(p - mu)) rather than in the
    /// tilt parameter itself.
    pub fn projection_parameter(&self, z: &InstrumentPoint) -> Result<f64> {
        let zv = self.check_z(z)?;
        match &self.kind {
            FamilyKind::NegBinTilt { p, .. } => Ok(-zv / ((1.0 - p) * (p - zv))),
            FamilyKind::MvNormalLoc { .. } => Err(Error::Unsupported(
                "scalar projection parameter undefined for d > 1".into(),
            )),
            _ => Ok(self.mu(z)?[0]),
        }
    }

    /// Sufficient statistic tau(x, z1); strictly monotone in x for d = 1.
    pub fn tau(&self, x: &[f64], _z1: &[f64]) -> Result<Vec<f64>> {
        match &self.kind {
            FamilyKind::NormalLoc { .. } => Ok(vec![x[0]]),
            FamilyKind::MvNormalLoc { m } => {
                if x.len() != m.len() {
                    return Err(Error::InvalidArgument("x dimension mismatch".into()));
                }
                Ok(x.to_vec())
            }
            FamilyKind::GammaShift { g, .. } => {
                if x[0] <= *g {
                    return Err(Error::Domain(format!("x = {} not above shift g = {g}", x[0])));
                }
                Ok(vec![(x[0] - g).ln()])
            }
            FamilyKind::BetaTilt { .. } => {
                if x[0] <= 0.0 || x[0] >= 1.0 {
                    return Err(Error::Domain(format!("x = {} outside (0,1)", x[0])));
                }
                Ok(vec![(x[0] / (1.0 - x[0])).ln()])
            }
            // Discrete power-series exponent tau(x) = x.
            FamilyKind::PoissonTilt { .. } | FamilyKind::NegBinTilt { .. } => Ok(vec![x[0]]),
            FamilyKind::BinomialShift { .. } | FamilyKind::PascalShift { .. } => Ok(vec![x[0]]),
        }
    }

    /// Orthogonality weight s(x, z1) of the inner product <.,.>_s. For the
    /// discrete families this is the mu(z) = 0 base pmf, which for the
    /// Poisson tilt coincides with the power-series weight.
    pub fn weight_s(&self, x: &[f64], _z1: &[f64]) -> f64 {
        match &self.kind {
            FamilyKind::NormalLoc { sigma2 } => (-x[0] * x[0] / (2.0 * sigma2)).exp(),
            FamilyKind::MvNormalLoc { m } => {
                let q = quad_form(m, x);
                (-q / 2.0).exp()
            }
            FamilyKind::GammaShift { r, delta, g } => {
                let u = x[0] - g;
                if u <= 0.0 {
                    0.0
                } else {
                    u.powf(r - 1.0) * (-delta * u).exp()
                }
            }
            FamilyKind::BetaTilt { a, b } => {
                let x0 = x[0];
                if x0 <= 0.0 || x0 >= 1.0 {
                    0.0
                } else {
                    let lnb = ln_gamma(*a) + ln_gamma(*b) - ln_gamma(a + b);
                    (x0.powf(a - 1.0) * (1.0 - x0).powf(b - 1.0)) / lnb.exp()
                }
            }
            FamilyKind::PoissonTilt { m0 } => match lattice_index(x[0]) {
                Some(k) => (-m0 + k as f64 * m0.ln() - ln_gamma(k as f64 + 1.0)).exp(),
                None => 0.0,
            },
            FamilyKind::NegBinTilt { alpha, p } => match lattice_index(x[0]) {
                // Base Pascal(alpha, p) pmf = series weight * (1-p)^x.
                Some(k) => nb_pmf(*alpha as f64, 1.0 - p, k),
                None => 0.0,
            },
            FamilyKind::BinomialShift { n_trials, p } => match lattice_index(x[0]) {
                Some(k) if k <= *n_trials as u64 => binom_pmf(*n_trials as u64, *p, k),
                _ => 0.0,
            },
            FamilyKind::PascalShift { alpha, p } => match lattice_index(x[0]) {
                Some(k) => nb_pmf(*alpha, 1.0 - p, k),
                None => 0.0,
            },
        }
    }

    /// The power-series weight s(x) of the discrete factorization
    /// p = t(z) s(x) (mu(z) - m)^x; differs from the orthogonality weight by
    /// the factor (-m)^x.
    pub fn series_weight(&self, x: u64) -> Result<f64> {
        match &self.kind {
            FamilyKind::PoissonTilt { m0 } => {
                Ok((-m0 + x as f64 * m0.ln() - ln_gamma(x as f64 + 1.0)).exp())
            }
            FamilyKind::NegBinTilt { alpha, p } => {
                let la = ln_gamma(x as f64 + *alpha as f64) - ln_gamma(x as f64 + 1.0)
                    - ln_gamma(*alpha as f64);
                Ok((la + *alpha as f64 * p.ln()).exp())
            }
            _ => Err(Error::Unsupported(
                "series weight defined only for discrete power-series families".into(),
            )),
        }
    }

    /// Normalizer t(z) of the factorization, where the family has one.
    pub fn t_norm(&self, z: &InstrumentPoint) -> Result<f64> {
        let zv = self.check_z(z)?;
        match &self.kind {
            FamilyKind::NormalLoc { sigma2 } => {
                Ok((-zv * zv / (2.0 * sigma2)).exp() / (2.0 * std::f64::consts::PI * sigma2).sqrt())
            }
            FamilyKind::MvNormalLoc { m } => {
                let d = m.len() as f64;
                let det = mat_det(m);
                let q = quad_form(m, &z.z2);
                Ok(det.sqrt() / (2.0 * std::f64::consts::PI).powf(d / 2.0) * (-q / 2.0).exp())
            }
            FamilyKind::GammaShift { r, delta, .. } => {
                Ok(((r + zv) * delta.ln() - ln_gamma(r + zv)).exp())
            }
            FamilyKind::BetaTilt { a, b } => {
                let lnb = |u: f64, v: f64| ln_gamma(u) + ln_gamma(v) - ln_gamma(u + v);
                Ok((lnb(*a, *b) - lnb(a + zv, b - zv)).exp())
            }
            FamilyKind::PoissonTilt { .. } => Ok((-zv).exp()),
            FamilyKind::NegBinTilt { alpha, p } => {
                // Direct normalization by summation of s(x) q^x.
                let q = 1.0 - p + zv;
                let mut term = p.powi(*alpha as i32);
                let mut sum = term;
                let mut x = 0u64;
                loop {
                    term *= q * (x as f64 + *alpha as f64) / (x as f64 + 1.0);
                    sum += term;
                    x += 1;
                    if term < 1e-17 * sum || x > SUM_CAP {
                        break;
                    }
                }
                Ok(1.0 / sum)
            }
            _ => Err(Error::Unsupported(format!(
                "t(z) undefined for {}",
                self.kind_name()
            ))),
        }
    }

    /// Conditional density (Lebesgue) or pmf (counting) of X|Z = z.
    /// Returns 0 off the support; errors when z is outside the domain.
    pub fn density(&self, x: &[f64], z: &InstrumentPoint) -> Result<f64> {
        let zv = self.check_z(z)?;
        if x.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "x dimension {} does not match family dimension {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(match &self.kind {
            FamilyKind::NormalLoc { sigma2 } => {
                let d = x[0] - zv;
                (-d * d / (2.0 * sigma2)).exp() / (2.0 * std::f64::consts::PI * sigma2).sqrt()
            }
            FamilyKind::MvNormalLoc { m } => {
                let d = m.len() as f64;
                let diff: Vec<f64> = x.iter().zip(&z.z2).map(|(a, b)| a - b).collect();
                let q = quad_form(m, &diff);
                mat_det(m).sqrt() / (2.0 * std::f64::consts::PI).powf(d / 2.0) * (-q / 2.0).exp()
            }
            FamilyKind::GammaShift { r, delta, g } => {
                let u = x[0] - g;
                let shape = r + zv;
                if u <= 0.0 {
                    0.0
                } else {
                    (shape * delta.ln() + (shape - 1.0) * u.ln() - delta * u - ln_gamma(shape))
                        .exp()
                }
            }
            FamilyKind::BetaTilt { a, b } => {
                let x0 = x[0];
                let (aa, bb) = (a + zv, b - zv);
                if x0 <= 0.0 || x0 >= 1.0 {
                    0.0
                } else {
                    let lnb = ln_gamma(aa) + ln_gamma(bb) - ln_gamma(aa + bb);
                    ((aa - 1.0) * x0.ln() + (bb - 1.0) * (1.0 - x0).ln() - lnb).exp()
                }
            }
            FamilyKind::PoissonTilt { .. }
            | FamilyKind::NegBinTilt { .. }
            | FamilyKind::BinomialShift { .. }
            | FamilyKind::PascalShift { .. } => match lattice_index(x[0]) {
                Some(k) => self.discrete_law(z)?.pmf(k),
                None => 0.0,
            },
        })
    }

    /// The concrete discrete law of X|Z = z for the lattice families.
    pub(crate) fn discrete_law(&self, z: &InstrumentPoint) -> Result<DiscreteLaw> {
        let zv = self.check_z(z)?;
        match &self.kind {
            FamilyKind::PoissonTilt { m0 } => Ok(DiscreteLaw::Poisson { lambda: m0 + zv }),
            FamilyKind::NegBinTilt { alpha, p } => Ok(DiscreteLaw::NegBin {
                shape: *alpha as f64,
                q: 1.0 - p + zv,
            }),
            FamilyKind::BinomialShift { n_trials, p } => Ok(DiscreteLaw::Binomial {
                n: (*n_trials as i64 + zv.round() as i64) as u64,
                p: *p,
            }),
            FamilyKind::PascalShift { alpha, p } => Ok(DiscreteLaw::NegBin {
                shape: alpha + zv,
                q: 1.0 - p,
            }),
            _ => Err(Error::Unsupported("not a discrete family".into())),
        }
    }

    /// i.i.d. draws from X|Z = z; deterministic for a given seed.
    pub fn sample(&self, z: &InstrumentPoint, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let zv = self.check_z(z)?;
        if n == 0 {
            return Err(Error::InvalidArgument("sample size must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n);
        match &self.kind {
            FamilyKind::NormalLoc { sigma2 } => {
                let dist = rand_distr::Normal::new(zv, sigma2.sqrt())
                    .map_err(|e| Error::InvalidArgument(e.to_string()))?;
                for _ in 0..n {
                    out.push(vec![dist.sample(&mut rng)]);
                }
            }
            FamilyKind::MvNormalLoc { m } => {
                let d = m.len();
                let dm = nalgebra::DMatrix::from_fn(d, d, |i, j| m[i][j]);
                let chol = nalgebra::Cholesky::new(dm).expect("validated SPD at construction");
                let lt = chol.l().transpose();
                let std = rand_distr::StandardNormal;
                for _ in 0..n {
                    let xi = nalgebra::DVector::from_fn(d, |_, _| std.sample(&mut rng));
                    // Solve L^T y = xi so that y ~ N(0, M^{-1}).
                    let y = lt.clone().solve_upper_triangular(&xi).expect("nonsingular");
                    out.push((0..d).map(|i| z.z2[i] + y[i]).collect());
                }
            }
            FamilyKind::GammaShift { r, delta, g } => {
                let dist = rand_distr::Gamma::new(r + zv, 1.0 / delta)
                    .map_err(|e| Error::InvalidArgument(e.to_string()))?;
                for _ in 0..n {
                    out.push(vec![g + dist.sample(&mut rng)]);
                }
            }
            FamilyKind::BetaTilt { a, b } => {
                let dist = rand_distr::Beta::new(a + zv, b - zv)
                    .map_err(|e| Error::InvalidArgument(e.to_string()))?;
                for _ in 0..n {
                    out.push(vec![dist.sample(&mut rng)]);
                }
            }
            _ => {
                let law = self.discrete_law(z)?;
                for _ in 0..n {
                    out.push(vec![law.sample_inverse_cdf(&mut rng) as f64]);
                }
            }
        }
        Ok(out)
    }

    pub fn to_spec(&self) -> FamilySpec {
        let params = match &self.kind {
            FamilyKind::NormalLoc { sigma2 } => serde_json::json!({ "sigma2": sigma2 }),
            FamilyKind::MvNormalLoc { m } => serde_json::json!({ "m": m }),
            FamilyKind::GammaShift { r, delta, g } => {
                serde_json::json!({ "r": r, "delta": delta, "g": g })
            }
            FamilyKind::BetaTilt { a, b } => serde_json::json!({ "a": a, "b": b }),
            FamilyKind::PoissonTilt { m0 } => serde_json::json!({ "m0": m0 }),
            FamilyKind::NegBinTilt { alpha, p } => serde_json::json!({ "alpha": alpha, "p": p }),
            FamilyKind::BinomialShift { n_trials, p } => {
                serde_json::json!({ "n_trials": n_trials, "p": p })
            }
            FamilyKind::PascalShift { alpha, p } => serde_json::json!({ "alpha": alpha, "p": p }),
        };
        FamilySpec {
            kind: self.kind_name().to_string(),
            params,
            z_domain: [self.z_domain.0, self.z_domain.1],
        }
    }

    pub fn from_spec(spec: &FamilySpec) -> Result<Self> {
        let dom = (spec.z_domain[0], spec.z_domain[1]);
        let p = &spec.params;
        let get = |name: &str| -> Result<f64> {
            p.get(name)
                .and_then(|v| v.as_f64())
                .ok_or_else(|| Error::InvalidArgument(format!("missing numeric param '{name}'")))
        };
        match spec.kind.as_str() {
            "NormalLoc" => Self::normal_loc(get("sigma2")?, dom),
            "MvNormalLoc" => {
                let m: Vec<Vec<f64>> = serde_json::from_value(
                    p.get("m")
                        .cloned()
                        .ok_or_else(|| Error::InvalidArgument("missing param 'm'".into()))?,
                )?;
                Self::mv_normal_loc(m, dom)
            }
            "GammaShift" => Self::gamma_shift(get("r")?, get("delta")?, get("g")?, dom),
            "BetaTilt" => Self::beta_tilt(get("a")?, get("b")?, dom),
            "PoissonTilt" => Self::poisson_tilt(get("m0")?, dom),
            "NegBinTilt" => Self::neg_bin_tilt(get("alpha")? as u32, get("p")?, dom),
            "BinomialShift" => Self::binomial_shift(get("n_trials")? as u32, get("p")?, dom),
            "PascalShift" => Self::pascal_shift(get("alpha")?, get("p")?, dom),
            other => Err(Error::InvalidArgument(format!("unknown family kind '{other}'"))),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: FamilySpec = serde_json::from_str(text)?;
        Self::from_spec(&spec)
    }
}

/// Lattice index of x when x is a nonnegative integer (within tolerance).
fn lattice_index(x: f64) -> Option<u64> {
    if !x.is_finite() || x < -1e-9 {
        return None;
    }
    let k = x.round();
    if (x - k).abs() <= 1e-9 {
        Some(k as u64)
    } else {
        None
    }
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

fn quad_form(m: &[Vec<f64>], v: &[f64]) -> f64 {
    let mv = mat_vec(m, v);
    v.iter().zip(&mv).map(|(a, b)| a * b).sum()
}

fn mat_det(m: &[Vec<f64>]) -> f64 {
    match m.len() {
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        3 => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
        _ => unreachable!("dimension validated at construction"),
    }
}

fn binom_pmf(n: u64, p: f64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let (nf, kf) = (n as f64, k as f64);
    (ln_gamma(nf + 1.0) - ln_gamma(kf + 1.0) - ln_gamma(nf - kf + 1.0)
        + kf * p.ln()
        + (nf - kf) * (1.0 - p).ln())
    .exp()
}

fn nb_pmf(shape: f64, q: f64, k: u64) -> f64 {
    let kf = k as f64;
    (ln_gamma(kf + shape) - ln_gamma(kf + 1.0) - ln_gamma(shape)
        + shape * (1.0 - q).ln()
        + kf * q.ln())
    .exp()
}

/// Concrete lattice law used for summation and sampling.
#[derive(Debug, Clone, Copy)]
pub(crate) enum DiscreteLaw {
    Poisson { lambda: f64 },
    NegBin { shape: f64, q: f64 },
    Binomial { n: u64, p: f64 },
}

impl DiscreteLaw {
    pub fn pmf(&self, k: u64) -> f64 {
        match *self {
            DiscreteLaw::Poisson { lambda } => {
                (-lambda + k as f64 * lambda.ln() - ln_gamma(k as f64 + 1.0)).exp()
            }
            DiscreteLaw::NegBin { shape, q } => nb_pmf(shape, q, k),
            DiscreteLaw::Binomial { n, p } => binom_pmf(n, p, k),
        }
    }

    pub fn finite_end(&self) -> Option<u64> {
        match *self {
            DiscreteLaw::Binomial { n, .. } => Some(n),
            _ => None,
        }
    }

    /// First pmf value and the multiplicative recursion p(k+1)/p(k).
    fn pmf_seed(&self) -> (f64, impl Fn(u64, f64) -> f64 + '_) {
        let s = *self;
        let p0 = match s {
            DiscreteLaw::Poisson { lambda } => (-lambda).exp(),
            DiscreteLaw::NegBin { shape, q } => (1.0 - q).powf(shape),
            DiscreteLaw::Binomial { n, p } => (1.0 - p).powi(n as i32),
        };
        let step = move |k: u64, pk: f64| -> f64 {
            match s {
                DiscreteLaw::Poisson { lambda } => pk * lambda / (k as f64 + 1.0),
                DiscreteLaw::NegBin { shape, q } => pk * q * (k as f64 + shape) / (k as f64 + 1.0),
                DiscreteLaw::Binomial { n, p } => {
                    if k >= n {
                        0.0
                    } else {
                        pk * (n - k) as f64 / (k as f64 + 1.0) * p / (1.0 - p)
                    }
                }
            }
        };
        (p0, step)
    }

    /// Sum of g(x) p(x) over the lattice, truncated when the remaining tail
    /// cannot move the running total at relative 1e-15.
    pub fn expect(&self, g: impl Fn(u64) -> f64) -> f64 {
        let (mut pk, step) = self.pmf_seed();
        let mut total = 0.0;
        let mut scale = 0.0f64;
        let mut quiet = 0u32;
        let mut k = 0u64;
        loop {
            let term = g(k) * pk;
            total += term;
            scale = scale.max(term.abs()).max(1e-300);
            if term.abs() < 1e-18 * scale.max(total.abs()) && pk < TAIL_TOL {
                quiet += 1;
                if quiet >= 16 {
                    break;
                }
            } else {
                quiet = 0;
            }
            if let Some(end) = self.finite_end() {
                if k >= end {
                    break;
                }
            }
            if k >= SUM_CAP {
                break;
            }
            pk = step(k, pk);
            k += 1;
        }
        total
    }

    /// Tail mass beyond x_trunc (exclusive cutoff: support {0..x_trunc-1}).
    pub fn tail_mass(&self, x_trunc: u64) -> f64 {
        let head = self.expect_truncated(x_trunc, |_| 1.0);
        (1.0 - head).max(0.0)
    }

    pub fn expect_truncated(&self, x_trunc: u64, g: impl Fn(u64) -> f64) -> f64 {
        let (mut pk, step) = self.pmf_seed();
        let mut total = 0.0;
        for k in 0..x_trunc {
            total += g(k) * pk;
            if let Some(end) = self.finite_end() {
                if k >= end {
                    break;
                }
            }
            pk = step(k, pk);
        }
        total
    }

    fn sample_inverse_cdf(&self, rng: &mut impl Rng) -> u64 {
        let u: f64 = rng.gen();
        let (mut pk, step) = self.pmf_seed();
        let mut cum = pk;
        let mut k = 0u64;
        while cum < u && k < SUM_CAP {
            if let Some(end) = self.finite_end() {
                if k >= end {
                    break;
                }
            }
            pk = step(k, pk);
            k += 1;
            cum += pk;
        }
        k
    }
}
