//! Sandwich covariance, Wald summaries, and the prospective LOGIT-HAP baseline.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::cohort::CohortTable;
use crate::em::{FitResult, Termination};
use crate::error::{Error, Result};
use crate::haplotype::{compatible_configs, HaplotypePanel};
use crate::likelihood::{check_c8, score_lmp, LikelihoodContext, ModelParams};
use crate::penetrance::{expit, Beta, RegressionSpec};

/// Two-sided 97.5% standard normal quantile.
pub const Z_975: f64 = 1.959964;

/// Largest condition number of the information matrix accepted for inference.
pub const MAX_CONDITION: f64 = 1e12;

/// `A^-1 Sigma A^-1 / n` with its ingredients, in packed coordinates.
#[derive(Debug, Clone)]
pub struct Sandwich {
    pub covariance: DMatrix<f64>,
    /// Negated Hessian of `l_mp` divided by `n`.
    pub bread: DMatrix<f64>,
    pub meat: DMatrix<f64>,
    pub condition: f64,
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Central-difference Hessian of `l_mp`, from the analytic score.
pub fn hessian(params: &ModelParams, ctx: &LikelihoodContext) -> Result<DMatrix<f64>> {
    let theta = ctx.pack(params);
    let d = theta.len();
    let mut h = DMatrix::zeros(d, d);
    for k in 0..d {
        let step = 1e-5 * theta[k].abs().max(1.0);
        let mut plus = theta.clone();
        plus[k] += step;
        let mut minus = theta.clone();
        minus[k] -= step;
        let gp = score_lmp(&ctx.unpack(&plus, params), ctx)?.total;
        let gm = score_lmp(&ctx.unpack(&minus, params), ctx)?.total;
        for i in 0..d {
            h[(i, k)] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    Ok((&h + h.transpose()) * 0.5)
}

/// Within-group covariance of per-family scores, pooled with weights `n_y / n`.
pub fn score_meat(per_family: &[Vec<f64>], status: &[u8]) -> DMatrix<f64> {
    let d = per_family.first().map_or(0, Vec::len);
    let n = per_family.len() as f64;
    let mut meat = DMatrix::zeros(d, d);
    for y in [0u8, 1] {
        let rows: Vec<&Vec<f64>> = per_family
            .iter()
            .zip(status)
            .filter(|(_, s)| **s == y)
            .map(|(r, _)| r)
            .collect();
        let ny = rows.len();
        if ny < 2 {
            continue;
        }
        let mut mean = vec![0.0; d];
        for r in &rows {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v / ny as f64;
            }
        }
        let mut s = DMatrix::zeros(d, d);
        for r in &rows {
            let c = DVector::from_iterator(d, r.iter().zip(&mean).map(|(v, m)| v - m));
            s += &c * c.transpose();
        }
        meat += s * (1.0 / (ny as f64 - 1.0)) * (ny as f64 / n);
    }
    meat
}

/// Sandwich covariance of the packed parameters at a fitted point.
pub fn sandwich_cov(params: &ModelParams, ctx: &LikelihoodContext) -> Result<Sandwich> {
    let n = ctx.n() as f64;
    let bread = hessian(params, ctx)? * (-1.0 / n);
    let condition = condition_number(&bread);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::SingularInformation { condition });
    }
    let inv = bread
        .clone()
        .try_inverse()
        .ok_or(Error::SingularInformation { condition })?;
    let score = score_lmp(params, ctx)?;
    let status: Vec<u8> = ctx.families.iter().map(|f| f.status).collect();
    let meat = score_meat(&score.per_family, &status);
    let cov = &inv * &meat * &inv / n;
    Ok(Sandwich {
        covariance: (&cov + cov.transpose()) * 0.5,
        bread,
        meat,
        condition,
    })
}

/// One Wald row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub z: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub p: f64,
}

impl Coefficient {
    pub fn wald(name: impl Into<String>, estimate: f64, se: f64) -> Self {
        let z = estimate / se;
        let p = if estimate == 0.0 {
            1.0
        } else {
            erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
        };
        Coefficient {
            name: name.into(),
            estimate,
            se,
            z,
            ci_lo: estimate - Z_975 * se,
            ci_hi: estimate + Z_975 * se,
            p,
        }
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci_lo <= value && value <= self.ci_hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n: usize,
    pub n_cases: usize,
    pub n_controls: usize,
    /// SNPs used to resolve parental origin.
    #[serde(default)]
    pub k_effective: usize,
    pub dropped: Vec<(String, String)>,
    /// No ECM cycle lowered the objective.
    #[serde(default)]
    pub monotone: Option<bool>,
    pub lambda0: Option<f64>,
    pub iterations: Option<usize>,
    pub termination: Option<Termination>,
    pub final_lmp: Option<f64>,
    pub score_norm: Option<f64>,
    /// Averaged cross-derivative in `Theta` and the multiplier.
    pub c8: Option<Vec<f64>>,
    /// Largest `|c8_k| / |A_kk|`.
    pub c8_ratio: Option<f64>,
    pub condition: Option<f64>,
}

/// Estimates with Wald inference, as written to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub method: String,
    pub coefficients: Vec<Coefficient>,
    pub covariance_names: Vec<String>,
    pub covariance: Vec<Vec<f64>>,
    /// Haplotype frequency estimates; empty for the prospective baseline.
    pub frequencies: Vec<(String, f64)>,
    pub diagnostics: Diagnostics,
}

impl FitReport {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "coefficient\testimate\tse\tci_lo\tci_hi\tp")?;
        for c in &self.coefficients {
            writeln!(
                out,
                "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.4e}",
                c.name, c.estimate, c.se, c.ci_lo, c.ci_hi, c.p
            )?;
        }
        Ok(())
    }
}

fn matrix_rows(m: &DMatrix<f64>, d: usize) -> Vec<Vec<f64>> {
    (0..d)
        .map(|i| (0..d).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Wald rows for the coefficients of a fitted model. With `include_mu`, the
/// covariance block also covers the frequency log-ratios.
pub fn wald_report<S: AsRef<str>>(
    method: &str,
    fit: &FitResult,
    sandwich: &Sandwich,
    covariate_names: &[S],
    include_mu: bool,
) -> Result<FitReport> {
    let ctx = &fit.context;
    let names = ctx.parameter_names(covariate_names);
    let d_beta = ctx.spec.dim();
    let cov = &sandwich.covariance;
    let coefficients = fit
        .params
        .beta
        .coef
        .iter()
        .enumerate()
        .map(|(k, &est)| Coefficient::wald(&names[k], est, cov[(k, k)].max(0.0).sqrt()))
        .collect();
    let d_cov = if include_mu { names.len() } else { d_beta };
    let c8 = check_c8(&fit.params, ctx)?;
    let c8_ratio = c8
        .iter()
        .enumerate()
        .map(|(k, v)| v.abs() / sandwich.bread[(k, k)].abs())
        .fold(0.0, f64::max);
    let haps = ctx.panel.to_strings();
    Ok(FitReport {
        method: method.to_string(),
        coefficients,
        covariance_names: names[..d_cov].to_vec(),
        covariance: matrix_rows(cov, d_cov),
        frequencies: haps
            .into_iter()
            .zip(fit.params.mu.iter().copied())
            .collect(),
        diagnostics: Diagnostics {
            n: ctx.n(),
            n_cases: ctx.n1,
            n_controls: ctx.n0,
            k_effective: ctx.panel.k(),
            dropped: ctx.dropped.clone(),
            monotone: Some(fit.trace.is_monotone(crate::em::ASCENT_SLACK)),
            lambda0: Some(ctx.lambda0),
            iterations: Some(fit.trace.iterations()),
            termination: Some(fit.trace.termination),
            final_lmp: Some(fit.trace.final_lmp()),
            score_norm: Some(fit.trace.score_norm),
            c8: Some(c8),
            c8_ratio: Some(c8_ratio),
            condition: Some(sandwich.condition),
        },
    })
}

/// Prospective logistic fit on families with a uniquely resolved origin.
#[derive(Debug, Clone)]
pub struct LogitFit {
    pub beta: Beta,
    /// Model-based covariance `(X' W X)^-1`.
    pub covariance: DMatrix<f64>,
    pub n_used: usize,
    pub n_cases: usize,
    pub dropped: Vec<(String, String)>,
}

impl LogitFit {
    pub fn report<S: AsRef<str>>(&self, covariate_names: &[S]) -> FitReport {
        let names = self.beta.spec.names(covariate_names);
        let d = names.len();
        FitReport {
            method: "logit-hap".into(),
            coefficients: self
                .beta
                .coef
                .iter()
                .enumerate()
                .map(|(k, &e)| {
                    Coefficient::wald(&names[k], e, self.covariance[(k, k)].max(0.0).sqrt())
                })
                .collect(),
            covariance_names: names,
            covariance: matrix_rows(&self.covariance, d),
            frequencies: Vec::new(),
            diagnostics: Diagnostics {
                n: self.n_used,
                n_cases: self.n_cases,
                n_controls: self.n_used - self.n_cases,
                k_effective: 0,
                dropped: self.dropped.clone(),
                monotone: None,
                lambda0: None,
                iterations: None,
                termination: None,
                final_lmp: None,
                score_norm: None,
                c8: None,
                c8_ratio: None,
                condition: None,
            },
        }
    }
}

/// Share of prior configuration mass the leading origin class must carry for
/// a family's origin to count as resolved.
pub const ORIGIN_CERTAINTY: f64 = 1.0 - 1e-9;

/// Most probable `(g_mc, g_pc)` for a family, if it is resolved.
pub fn resolve_origin(
    family: &crate::cohort::FamilyRecord,
    panel: &HaplotypePanel,
    target: usize,
) -> std::result::Result<(u8, u8), String> {
    let set =
        compatible_configs(family, panel, family.child_all_missing()).map_err(|e| e.to_string())?;
    let mu = panel.frequencies();
    let mut mass = [0.0; 4];
    for c in &set.configs {
        let k = 2 * panel.allele(c.w, target) as usize + panel.allele(c.l, target) as usize;
        mass[k] += mu[c.i] * mu[c.j] * mu[c.l];
    }
    let total: f64 = mass.iter().sum();
    let (best, top) = mass.iter().enumerate().fold(
        (0, 0.0),
        |acc, (k, &m)| if m > acc.1 { (k, m) } else { acc },
    );
    if total > 0.0 && top >= ORIGIN_CERTAINTY * total {
        Ok(((best / 2) as u8, (best % 2) as u8))
    } else {
        Err("parental origin ambiguous".into())
    }
}

/// Plain logistic regression by iteratively reweighted least squares.
pub fn logistic_irls(x: &DMatrix<f64>, y: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (n, d) = x.shape();
    let mut beta = DVector::zeros(d);
    for iter in 0..100 {
        let eta = x * &beta;
        let mut xtwx = DMatrix::zeros(d, d);
        let mut grad = DVector::zeros(d);
        for i in 0..n {
            let p = expit(eta[i]);
            let w = p * (1.0 - p);
            let row = x.row(i);
            grad += row.transpose() * (y[i] - p);
            xtwx += row.transpose() * row * w;
        }
        let inv = xtwx
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Separation("singular information matrix".into()))?;
        let step = &inv * grad;
        beta += &step;
        if beta.iter().any(|b| !b.is_finite() || b.abs() > 30.0) {
            return Err(Error::Separation(format!(
                "coefficients diverged at iteration {iter}"
            )));
        }
        if step.amax() < 1e-10 {
            let eta = x * &beta;
            let mut xtwx = DMatrix::zeros(d, d);
            for i in 0..n {
                let p = expit(eta[i]);
                let row = x.row(i);
                xtwx += row.transpose() * row * (p * (1.0 - p));
            }
            let cov = xtwx
                .try_inverse()
                .ok_or_else(|| Error::Separation("singular information matrix".into()))?;
            return Ok((beta, cov));
        }
    }
    Err(Error::Separation("no convergence in 100 iterations".into()))
}

/// LOGIT-HAP: resolve each family's parental origin from the panel, drop the
/// ambiguous ones, and regress status on the resolved design.
pub fn fit_logit_hap(
    cohort: &CohortTable,
    panel: &HaplotypePanel,
    spec: RegressionSpec,
) -> Result<LogitFit> {
    if cohort.p() != spec.covariate_count {
        return Err(Error::Shape(format!(
            "cohort has {} covariates but model expects {}",
            cohort.p(),
            spec.covariate_count
        )));
    }
    let target = cohort.target_index;
    let d = spec.dim();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    let mut dropped = Vec::new();
    let mut row = vec![0.0; d];
    for fam in &cohort.families {
        let Some(gm) = fam.mother_target(target) else {
            dropped.push((
                fam.family_id.clone(),
                "maternal target genotype missing".into(),
            ));
            continue;
        };
        match resolve_origin(fam, panel, target) {
            Ok((gmc, gpc)) => {
                spec.design_row(gm, gmc, gpc, &fam.covariates, &mut row);
                rows.extend_from_slice(&row);
                y.push(fam.status as f64);
            }
            Err(why) => dropped.push((fam.family_id.clone(), why)),
        }
    }
    let n = y.len();
    let cases = y.iter().filter(|v| **v == 1.0).count();
    if cases == 0 || cases == n || n <= d {
        return Err(Error::EmptyCohort(format!(
            "{n} resolved families ({cases} cases) for {d} coefficients"
        )));
    }
    let x = DMatrix::from_row_slice(n, d, &rows);
    let (beta, covariance) = logistic_irls(&x, &y)?;
    Ok(LogitFit {
        beta: Beta::new(spec, beta.iter().copied().collect())?,
        covariance,
        n_used: n,
        n_cases: cases,
        dropped,
    })
}
