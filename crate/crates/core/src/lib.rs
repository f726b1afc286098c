//! Robust estimation of parental-origin effects from case-control
//! mother-child pairs with haplotype phase inferred from flanking SNPs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cohort;
pub mod em;
pub mod error;
pub mod haplotype;
pub mod inference;
pub mod likelihood;
mod optimize;
pub mod penetrance;
pub mod pipeline;
pub mod replicate;
pub mod simulate;

pub use cohort::{CohortSchema, CohortTable, FamilyRecord, Genotype};
pub use em::{fit, fit_with_missing, FitOptions, FitResult, FitTrace, OriginMode};
pub use error::{Error, Result};
pub use haplotype::HaplotypePanel;
pub use inference::{FitReport, Sandwich};
pub use likelihood::{KnownOrigin, LikelihoodContext, ModelParams};
pub use penetrance::{Beta, RegressionSpec, Term};
