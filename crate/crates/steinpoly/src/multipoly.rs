//! Sparse multivariate polynomials in up to three variables.

use std::collections::BTreeMap;

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::rational::{rat, to_f64, Rational};

pub const MAX_DIM: usize = 3;

/// Terms map an exponent tuple of length `dim` to a nonzero coefficient.
#[derive(Clone, PartialEq, Eq)]
pub struct MultiPoly {
    dim: usize,
    terms: BTreeMap<Vec<u32>, Rational>,
}

impl MultiPoly {
    pub fn zero(dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidArgument(format!(
                "multivariate dimension must be 1..={MAX_DIM}, got {dim}"
            )));
        }
        Ok(MultiPoly {
            dim,
            terms: BTreeMap::new(),
        })
    }

    pub fn constant(dim: usize, c: Rational) -> Result<Self> {
        let mut p = MultiPoly::zero(dim)?;
        if !c.is_zero() {
            p.terms.insert(vec![0; dim], c);
        }
        Ok(p)
    }

    pub fn one(dim: usize) -> Result<Self> {
        MultiPoly::constant(dim, Rational::one())
    }

    /// The coordinate variable x_axis.
    pub fn var(dim: usize, axis: usize) -> Result<Self> {
        let mut p = MultiPoly::zero(dim)?;
        if axis >= dim {
            return Err(Error::InvalidArgument(format!(
                "axis {axis} out of range for dimension {dim}"
            )));
        }
        let mut exps = vec![0; dim];
        exps[axis] = 1;
        p.terms.insert(exps, Rational::one());
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32], &Rational)> {
        self.terms.iter().map(|(e, c)| (e.as_slice(), c))
    }

    pub fn coeff(&self, exps: &[u32]) -> Rational {
        self.terms.get(exps).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn total_degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|e| e.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    fn insert(&mut self, exps: Vec<u32>, c: Rational) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(exps);
        use std::collections::btree_map::Entry;
        match entry {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                let next = o.get() + c;
                if next.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = next;
                }
            }
        }
    }

    pub fn add(&self, rhs: &MultiPoly) -> MultiPoly {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.insert(e.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, rhs: &MultiPoly) -> MultiPoly {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.insert(e.clone(), -c);
        }
        out
    }

    pub fn mul(&self, rhs: &MultiPoly) -> MultiPoly {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        let mut out = MultiPoly {
            dim: self.dim,
            terms: BTreeMap::new(),
        };
        for (ea, ca) in &self.terms {
            for (eb, cb) in &rhs.terms {
                let exps: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.insert(exps, ca * cb);
            }
        }
        out
    }

    pub fn scale(&self, c: &Rational) -> MultiPoly {
        if c.is_zero() {
            return MultiPoly {
                dim: self.dim,
                terms: BTreeMap::new(),
            };
        }
        MultiPoly {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|(e, a)| (e.clone(), a * c))
                .collect(),
        }
    }

    /// Formal partial derivative along `axis`.
    pub fn partial(&self, axis: usize) -> Result<MultiPoly> {
        if axis >= self.dim {
            return Err(Error::InvalidArgument(format!(
                "axis {axis} out of range for dimension {}",
                self.dim
            )));
        }
        let mut out = MultiPoly {
            dim: self.dim,
            terms: BTreeMap::new(),
        };
        for (e, c) in &self.terms {
            if e[axis] == 0 {
                continue;
            }
            let mut exps = e.clone();
            exps[axis] -= 1;
            out.insert(exps, c * rat(e[axis] as i64));
        }
        Ok(out)
    }

    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim, "point dimension mismatch");
        let mut acc = 0.0;
        for (e, c) in &self.terms {
            let mut term = to_f64(c);
            for (xi, &p) in x.iter().zip(e.iter()) {
                term *= xi.powi(p as i32);
            }
            acc += term;
        }
        acc
    }
}

impl std::fmt::Debug for MultiPoly {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (e, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            write!(f, "({c})")?;
            for (axis, &p) in e.iter().enumerate() {
                if p > 0 {
                    write!(f, "x{}^{}", axis + 1, p)?;
                }
            }
            first = false;
        }
        Ok(())
    }
}
