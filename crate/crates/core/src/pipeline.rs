//! End-to-end analysis: validate, build the haplotype panel, fit, and report.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cohort::{validate_mendelian, CohortTable};
use crate::em::{fit_with_missing, FitOptions, FitResult, OriginMode, ASCENT_SLACK};
use crate::error::Error;
use crate::haplotype::{enumerate_panel, prune_rare, HaplotypePanel, DEFAULT_MAX_HAPLOTYPES};
use crate::inference::{fit_logit_hap, sandwich_cov, wald_report, FitReport};
use crate::likelihood::KnownOrigin;
use crate::penetrance::RegressionSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Origins inferred from the target and adjacent SNPs.
    RobHap,
    /// Origins inferred from the target SNP alone.
    RobSnp,
    /// Origins taken from a truth record.
    RobCom,
    /// Prospective logistic regression on families with resolved origin.
    LogitHap,
    /// ROB-HAP after deleting every family with a missing genotype.
    RobHapDel,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::RobHap,
        Method::RobSnp,
        Method::RobCom,
        Method::LogitHap,
        Method::RobHapDel,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::RobHap => "rob-hap",
            Method::RobSnp => "rob-snp",
            Method::RobCom => "rob-com",
            Method::LogitHap => "logit-hap",
            Method::RobHapDel => "rob-hap-del",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Options(format!("unknown method {s:?}")))
    }
}

/// Pipeline stage at which an analysis failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Parse,
    Enumeration,
    Fit,
    Inference,
}

#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub source: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let stage = match self.stage {
            Stage::Parse => "input",
            Stage::Enumeration => "haplotype enumeration",
            Stage::Fit => "fitting",
            Stage::Inference => "inference",
        };
        write!(f, "{stage} failed: {}", self.source)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T, Error> {
    fn at(self, stage: Stage) -> Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    pub spec: RegressionSpec,
    pub fit: FitOptions,
    pub max_haplotypes: usize,
    /// Report the frequency block of the covariance too.
    pub include_mu_cov: bool,
    /// True origins, required by [`Method::RobCom`].
    pub known: Option<HashMap<String, KnownOrigin>>,
}

impl AnalysisOptions {
    pub fn new(spec: RegressionSpec) -> Self {
        AnalysisOptions {
            spec,
            fit: FitOptions::default(),
            max_haplotypes: DEFAULT_MAX_HAPLOTYPES,
            include_mu_cov: false,
            known: None,
        }
    }
}

/// Panel estimated from the cohort: enumeration, frequency EM, pruning.
pub fn build_panel(
    cohort: &CohortTable,
    options: &AnalysisOptions,
) -> Result<HaplotypePanel, Error> {
    let panel = enumerate_panel(cohort, options.max_haplotypes)?;
    prune_rare(&panel, options.fit.rare_floor)
}

/// A fitted ROB-type model with its report.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub report: FitReport,
    pub fit: Option<FitResult>,
    pub panel: HaplotypePanel,
    /// Mendelian-inconsistent child genotypes that were set missing.
    pub mendelian_repairs: usize,
}

/// Runs one method on a cohort.
pub fn analyze(
    cohort: &CohortTable,
    method: Method,
    options: &AnalysisOptions,
) -> Result<Analysis, StageError> {
    options.fit.validate().at(Stage::Parse)?;
    let (cohort, repairs) = validate_mendelian(cohort);
    if repairs.total > 0 {
        log::warn!(
            "{} Mendelian-inconsistent child genotypes in {} families set to missing",
            repairs.total,
            repairs.per_family.len()
        );
    }
    let cohort = match method {
        Method::RobSnp => cohort.target_only().at(Stage::Parse)?,
        Method::RobHapDel => cohort.complete_families().at(Stage::Parse)?,
        _ => cohort,
    };
    let known = match method {
        Method::RobCom => Some(options.known.as_ref().ok_or_else(|| StageError {
            stage: Stage::Parse,
            source: Error::Options("rob-com needs true parental origins".into()),
        })?),
        _ => None,
    };
    let panel = build_panel(&cohort, options).at(Stage::Enumeration)?;
    log::info!(
        "{}: {} families, {} SNPs, {} haplotypes after pruning",
        method,
        cohort.n(),
        cohort.k(),
        panel.len()
    );
    let covariate_names = cohort.covariate_names.clone();
    if method == Method::LogitHap {
        let fit = fit_logit_hap(&cohort, &panel, options.spec).at(Stage::Fit)?;
        let mut report = fit.report(&covariate_names);
        report.diagnostics.k_effective = cohort.k();
        return Ok(Analysis {
            report,
            fit: None,
            panel,
            mendelian_repairs: repairs.total,
        });
    }
    let mode = known.map_or(OriginMode::Infer, OriginMode::Known);
    let fit = fit_with_missing(&cohort, &panel, options.spec, &options.fit, mode).at(Stage::Fit)?;
    log::info!(
        "lambda0 = {:.6}, {} iterations, termination {:?}",
        fit.context.lambda0,
        fit.trace.iterations(),
        fit.trace.termination
    );
    let sandwich = sandwich_cov(&fit.params, &fit.context).at(Stage::Inference)?;
    let mut report = wald_report(
        method.as_str(),
        &fit,
        &sandwich,
        &covariate_names,
        options.include_mu_cov,
    )
    .at(Stage::Inference)?;
    report.diagnostics.k_effective = cohort.k();
    report.diagnostics.monotone = Some(fit.trace.is_monotone(ASCENT_SLACK));
    Ok(Analysis {
        report,
        fit: Some(fit),
        panel,
        mendelian_repairs: repairs.total,
    })
}
