//! Exact symbolic construction and verification of the double ramification
//! hierarchy's bihamiltonian structure from cohomological field theory
//! descriptor data.
//!
//! All arithmetic is exact over the rationals; every identity is checked as
//! an algebraic statement at a finite truncation (genus cap in `eps`, degree
//! cap in the underived variables).

pub mod ring;
pub mod linalg;
pub mod varcalc;
pub mod diffop;
pub mod poisson;
pub mod rational;
pub mod cohft;
pub mod hierarchy;
pub mod report;

pub use ring::{DiffPoly, Monomial, Rat, RingError, TruncationPolicy, VarIndex};
pub use varcalc::{HomogeneityData, LocalFunctional};
pub use diffop::{DiffOperator, MatrixDiffOperator, MiuraTransform};
pub use poisson::{is_compatible, is_poisson, Verdict};
pub use rational::{LaurentDiffPoly, PurelySingularMiura, RationalMiura};
pub use cohft::CohFTDescriptor;
pub use hierarchy::{HierarchyBundle, PrincipalBundle};
