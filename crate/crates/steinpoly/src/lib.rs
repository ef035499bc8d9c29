//! Orthogonal-polynomial eigenbases of Stein-Markov operators for a catalog
//! of conditional distributions X|Z, the projection identity
//! E[Q_j(X,Z1)|Z] = P_j(mu(Z)), a finite-section completeness certificate,
//! and a series estimator for instrumental-variables models built on the
//! analytically known projections.

pub mod basis;
pub mod completeness;
pub mod error;
pub mod estimator;
pub mod family;
pub mod integrate;
pub mod moments;
pub mod multipoly;
pub mod poly;
pub mod projection;
pub mod quadrature;
pub mod rational;
pub mod report;
pub mod stein;
pub mod verification;

pub use error::{Error, Result};
pub use family::{CondFamily, FamilyKind, FamilySpec, InstrumentPoint, Support};
pub use multipoly::MultiPoly;
pub use poly::Poly;
pub use rational::Rational;
