//! ECM maximization of the modified profile likelihood.
//!
//! Each cycle computes posterior configuration weights, then updates the
//! regression coefficients with the frequencies fixed, then the frequencies
//! with the coefficients fixed. Both conditional steps increase the
//! expected complete-data objective, so `l_mp` never decreases.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cohort::CohortTable;
use crate::error::{Error, Result};
use crate::haplotype::{HaplotypePanel, DEFAULT_RARE_FLOOR};
use crate::inference::fit_logit_hap;
use crate::likelihood::{
    log_lmp, logits_to_mu, mu_to_logits, score_lmp, KnownOrigin, LikelihoodContext, ModelParams,
    Prepared,
};
use crate::optimize::{maximize, BfgsOptions};
use crate::penetrance::{
    expit, log_bernoulli, maternal_transmission_prob, Beta, RegressionSpec, Term,
};

/// Slack allowed when checking that `l_mp` does not decrease.
pub const ASCENT_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iter: usize,
    pub tol_loglik: f64,
    pub tol_param: f64,
    pub rare_floor: f64,
    pub seed: u64,
    /// Extra fits from perturbed starting coefficients; the best is kept.
    pub restarts: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 500,
            tol_loglik: 1e-8,
            tol_param: 1e-6,
            rare_floor: DEFAULT_RARE_FLOOR,
            seed: 0,
            restarts: 0,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::Options("max_iter must be at least 1".into()));
        }
        if !(self.tol_loglik > 0.0 && self.tol_param > 0.0) {
            return Err(Error::Options("tolerances must be positive".into()));
        }
        if !(0.0..=0.1).contains(&self.rare_floor) {
            return Err(Error::Options(format!(
                "rare-haplotype floor {} outside [0, 0.1]",
                self.rare_floor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIter,
    /// Neither block could improve the objective further.
    Stalled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    /// `l_mp` at the start and after every cycle.
    pub lmp: Vec<f64>,
    /// Largest absolute change in `(beta, mu)` for every cycle.
    pub max_change: Vec<f64>,
    pub termination: Termination,
    /// Max-norm of the score at the estimate, divided by `n`.
    pub score_norm: f64,
}

impl FitTrace {
    pub fn iterations(&self) -> usize {
        self.max_change.len()
    }

    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    pub fn final_lmp(&self) -> f64 {
        *self.lmp.last().expect("trace always has a starting value")
    }

    /// True when no cycle lowered `l_mp` by more than `slack`.
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.lmp.windows(2).all(|w| w[1] >= w[0] - slack)
    }
}

/// Posterior configuration weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Posteriors {
    /// Per family, aligned with its configurations.
    pub weights: Vec<Vec<f64>>,
    /// Per family, posterior mass of each `(g_mc, g_pc)` class, indexed `2 g_mc + g_pc`.
    pub class_weights: Vec<[f64; 4]>,
    /// Expected haplotype counts summed over families (three haplotypes each).
    pub counts: Vec<f64>,
}

pub fn e_step(params: &ModelParams, ctx: &LikelihoodContext) -> Result<Posteriors> {
    let prep = Prepared::new(params, ctx);
    let mut counts = vec![0.0; ctx.n_haplotypes()];
    let mut weights = Vec::with_capacity(ctx.n());
    let mut class_weights = Vec::with_capacity(ctx.n());
    let mut buf = Vec::new();
    for fam in &ctx.families {
        let lp = prep.predictors(fam);
        let lse = prep.config_log_terms(fam, &lp, &mut buf);
        if !lse.is_finite() {
            return Err(Error::ZeroProbabilityFamily {
                family: fam.family_id.clone(),
            });
        }
        let mut cw = [0.0; 4];
        let w: Vec<f64> = fam
            .configs
            .iter()
            .zip(&buf)
            .map(|(c, v)| {
                let w = (v - lse).exp();
                cw[c.class as usize] += w;
                counts[c.i as usize] += w;
                counts[c.j as usize] += w;
                counts[c.l as usize] += w;
                w
            })
            .collect();
        weights.push(w);
        class_weights.push(cw);
    }
    Ok(Posteriors {
        weights,
        class_weights,
        counts,
    })
}

/// `sum_u sum_cfg w log pr(Y|cfg; beta) - l_2(beta, mu)` and its gradient in beta.
fn beta_objective(
    coef: &[f64],
    params: &ModelParams,
    post: &Posteriors,
    ctx: &LikelihoodContext,
) -> Result<(f64, Vec<f64>)> {
    let trial = ModelParams {
        beta: Beta {
            spec: ctx.spec,
            coef: coef.to_vec(),
        },
        mu: params.mu.clone(),
    };
    let prep = Prepared::new(&trial, ctx);
    let d = coef.len();
    let lambda = ctx.lambda0;
    let f = ctx.prevalence;
    let log_n = (ctx.n() as f64).ln();
    let mut value = 0.0;
    let mut grad = vec![0.0; d];
    for (fam, cw) in ctx.families.iter().zip(&post.class_weights) {
        let lp = prep.predictors(fam);
        let probs = prep.class_probs(fam.gm);
        let pen: [f64; 4] = std::array::from_fn(|k| expit(lp[k]));
        let risk: f64 = (0..4).map(|k| probs[k] * pen[k]).sum();
        let denom = 1.0 + lambda * (risk - f);
        if !(denom > 0.0) {
            return Err(Error::ConstraintDomain {
                family: fam.family_id.clone(),
                value: denom,
            });
        }
        let y = fam.status as f64;
        for k in 0..4 {
            if cw[k] > 0.0 {
                value += cw[k] * log_bernoulli(fam.status, lp[k]);
            }
            let coef = cw[k] * (y - pen[k]) - lambda / denom * probs[k] * pen[k] * (1.0 - pen[k]);
            if coef != 0.0 {
                for (g, z) in grad.iter_mut().zip(fam.row(k, d)) {
                    *g += coef * z;
                }
            }
        }
        value -= log_n + denom.ln();
    }
    Ok((value, grad))
}

/// Which pieces of the frequency objective to include.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MuObjective {
    /// `sum_s N_s log mu_s - sum_u log pr(g_u^m) - l_2`.
    Full,
    /// Only the multinomial part; its maximizer is `N_s / 3n`.
    CountsOnly,
}

fn mu_objective(
    alpha: &[f64],
    params: &ModelParams,
    post: &Posteriors,
    ctx: &LikelihoodContext,
) -> Result<(f64, Vec<f64>)> {
    let trial = ModelParams {
        beta: params.beta.clone(),
        mu: logits_to_mu(alpha),
    };
    let prep = Prepared::new(&trial, ctx);
    let s = ctx.n_haplotypes();
    let lambda = ctx.lambda0;
    let f = ctx.prevalence;
    let log_n = (ctx.n() as f64).ln();
    let total_count: f64 = post.counts.iter().sum();
    let mut value: f64 = post
        .counts
        .iter()
        .zip(&prep.log_mu)
        .filter(|(c, _)| **c > 0.0)
        .map(|(c, l)| c * l)
        .sum();
    // derivative of the non-multinomial part with respect to theta
    let mut theta_coef = 0.0;
    for fam in &ctx.families {
        let lp = prep.predictors(fam);
        let probs = prep.class_probs(fam.gm);
        let pen: [f64; 4] = std::array::from_fn(|k| expit(lp[k]));
        let risk: f64 = (0..4).map(|k| probs[k] * pen[k]).sum();
        let denom = 1.0 + lambda * (risk - f);
        if !(denom > 0.0) {
            return Err(Error::ConstraintDomain {
                family: fam.family_id.clone(),
                value: denom,
            });
        }
        value -= prep.log_pg[fam.gm as usize] + log_n + denom.ln();
        let dl_dtheta: f64 = (0..2u8)
            .map(|gmc| {
                maternal_transmission_prob(fam.gm, gmc)
                    * (pen[2 * gmc as usize + 1] - pen[2 * gmc as usize])
            })
            .sum();
        theta_coef += prep.dlog_pg[fam.gm as usize] + lambda / denom * dl_dtheta;
    }
    let grad = (0..s - 1)
        .map(|t| {
            let mu_t = prep.mu[t];
            post.counts[t]
                - total_count * mu_t
                - theta_coef * mu_t * (ctx.target_alleles[t] as f64 - prep.theta)
        })
        .collect();
    if !value.is_finite() {
        return Err(Error::ZeroProbabilityFamily {
            family: "(frequency update)".into(),
        });
    }
    Ok((value, grad))
}

fn inner_options(ctx: &LikelihoodContext) -> BfgsOptions {
    BfgsOptions {
        max_iter: 200,
        gtol: 1e-10 * ctx.n() as f64,
        ftol: 1e-15,
    }
}

/// Conditional maximization over the coefficients with frequencies fixed.
pub fn m_step_beta(
    post: &Posteriors,
    params: &ModelParams,
    ctx: &LikelihoodContext,
) -> Result<Beta> {
    let m = maximize(
        |c| beta_objective(c, params, post, ctx),
        params.beta.coef.clone(),
        inner_options(ctx),
    )?;
    Ok(Beta {
        spec: ctx.spec,
        coef: m.x,
    })
}

/// Conditional maximization over the frequencies with coefficients fixed,
/// started from the better of the current value and the expected-count update.
pub fn m_step_mu(
    post: &Posteriors,
    params: &ModelParams,
    ctx: &LikelihoodContext,
    objective: MuObjective,
) -> Result<Vec<f64>> {
    let s = params.mu.len();
    if s == 1 {
        return Ok(vec![1.0]);
    }
    let total: f64 = post.counts.iter().sum();
    let mut closed: Vec<f64> = post.counts.iter().map(|c| c / total).collect();
    if objective == MuObjective::CountsOnly {
        return Ok(closed);
    }
    if closed.iter().any(|m| *m < 1e-12) {
        closed.iter_mut().for_each(|m| *m = m.max(1e-12));
        let t: f64 = closed.iter().sum();
        closed.iter_mut().for_each(|m| *m /= t);
    }
    let current = mu_to_logits(&params.mu);
    let candidate = mu_to_logits(&closed);
    let start = match (
        mu_objective(&current, params, post, ctx),
        mu_objective(&candidate, params, post, ctx),
    ) {
        (Ok((a, _)), Ok((b, _))) if b > a => candidate,
        (Err(_), Ok(_)) => candidate,
        _ => current,
    };
    let m = maximize(
        |a| mu_objective(a, params, post, ctx),
        start,
        inner_options(ctx),
    )?;
    Ok(logits_to_mu(&m.x))
}

/// How parental origin at the target SNP enters the fit.
#[derive(Debug, Clone, Copy)]
pub enum OriginMode<'a> {
    /// Inferred from the full haplotype panel.
    Infer,
    /// Inferred from the target SNP alone.
    TargetOnly,
    /// Taken as known, per family id.
    Known(&'a HashMap<String, KnownOrigin>),
}

/// A fitted model together with the data it was fitted to.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: ModelParams,
    pub trace: FitTrace,
    pub context: LikelihoodContext,
}

fn max_param_change(a: &ModelParams, b: &ModelParams) -> f64 {
    a.beta
        .coef
        .iter()
        .zip(&b.beta.coef)
        .chain(a.mu.iter().zip(&b.mu))
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Runs ECM cycles from `start` on a prepared context.
pub fn fit_from(
    ctx: &LikelihoodContext,
    start: ModelParams,
    options: &FitOptions,
) -> Result<FitResult> {
    options.validate()?;
    let mut params = start;
    let mut current = log_lmp(&params, ctx)?;
    let mut lmp = vec![current];
    let mut max_change = Vec::new();
    let mut termination = Termination::MaxIter;
    for _ in 0..options.max_iter {
        let post = e_step(&params, ctx)?;
        let beta = m_step_beta(&post, &params, ctx)?;
        let mut next = ModelParams {
            beta,
            mu: params.mu.clone(),
        };
        if !ctx.fix_mu {
            next.mu = m_step_mu(&post, &next, ctx, MuObjective::Full)?;
        }
        let value = log_lmp(&next, ctx)?;
        if value < current {
            // only possible through rounding in the inner solvers
            if value < current - ASCENT_SLACK {
                log::warn!(
                    "ECM cycle lowered l_mp by {:.3e}; keeping previous estimate",
                    current - value
                );
                termination = Termination::Stalled;
                break;
            }
        }
        let change = max_param_change(&params, &next);
        let delta = (value - current).abs();
        params = next;
        current = value;
        lmp.push(value);
        max_change.push(change);
        if delta < options.tol_loglik && change < options.tol_param {
            termination = Termination::Converged;
            break;
        }
    }
    let score = score_lmp(&params, ctx)?;
    let score_norm = score.total.iter().fold(0.0f64, |m, g| m.max(g.abs())) / ctx.n() as f64;
    if termination != Termination::Converged {
        log::warn!("fit did not converge ({termination:?}); returning best estimate");
    }
    Ok(FitResult {
        params,
        trace: FitTrace {
            lmp,
            max_change,
            termination,
            score_norm,
        },
        context: ctx.clone(),
    })
}

/// Starting coefficients from the prospective baseline, with the intercept
/// shifted for case-control sampling.
fn starting_beta(
    cohort: &CohortTable,
    panel: &HaplotypePanel,
    spec: RegressionSpec,
    ctx: &LikelihoodContext,
) -> Beta {
    let f = ctx.prevalence;
    let offset = (ctx.n1 as f64 * (1.0 - f) / (ctx.n0 as f64 * f)).ln();
    match fit_logit_hap(cohort, panel, spec) {
        Ok(report)
            if report
                .beta
                .coef
                .iter()
                .all(|c| c.is_finite() && c.abs() < 20.0) =>
        {
            let mut beta = report.beta;
            let b0 = beta.get(Term::Intercept);
            beta.set(Term::Intercept, b0 - offset)
                .expect("intercept always present");
            beta
        }
        other => {
            if let Err(e) = other {
                log::warn!("baseline start unavailable ({e}); starting from the null model");
            }
            let mut beta = Beta::zeros(spec);
            beta.set(Term::Intercept, (f / (1.0 - f)).ln())
                .expect("intercept always present");
            beta
        }
    }
}

fn fit_inner(
    cohort: &CohortTable,
    panel: &HaplotypePanel,
    spec: RegressionSpec,
    options: &FitOptions,
    mode: OriginMode,
) -> Result<FitResult> {
    options.validate()?;
    let (cohort, panel, known) = match mode {
        OriginMode::Infer => (cohort.clone(), panel.clone(), None),
        OriginMode::TargetOnly => (
            cohort.target_only()?,
            panel.project(cohort.target_index)?,
            None,
        ),
        OriginMode::Known(map) => (cohort.clone(), panel.clone(), Some(map)),
    };
    let ctx = LikelihoodContext::new(&cohort, &panel, spec, known)?;
    let beta = starting_beta(&cohort, &panel, spec, &ctx);
    let start = ModelParams {
        beta,
        mu: panel.frequencies().to_vec(),
    };
    let mut best = fit_from(&ctx, start.clone(), options)?;
    if options.restarts > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        let jitter = Normal::new(0.0, 0.25).expect("valid scale");
        for _ in 0..options.restarts {
            let mut s = start.clone();
            for c in s.beta.coef.iter_mut().skip(1) {
                *c += jitter.sample(&mut rng);
            }
            match fit_from(&ctx, s, options) {
                Ok(r) if r.trace.final_lmp() > best.trace.final_lmp() => best = r,
                Ok(_) => {}
                Err(e) => log::warn!("restart failed: {e}"),
            }
        }
    }
    Ok(best)
}

/// Fits a cohort without missing genotypes. Frequencies start from the
/// panel's values.
pub fn fit(
    cohort: &CohortTable,
    panel: &HaplotypePanel,
    spec: RegressionSpec,
    options: &FitOptions,
    mode: OriginMode,
) -> Result<FitResult> {
    if cohort.has_missing() {
        return Err(Error::Options(
            "cohort has missing genotypes; use fit_with_missing".into(),
        ));
    }
    fit_inner(cohort, panel, spec, options, mode)
}

/// Like [`fit`], but families with partially or fully missing child genotypes
/// contribute through the configurations compatible with what was observed.
/// Families missing the maternal target genotype are excluded.
pub fn fit_with_missing(
    cohort: &CohortTable,
    panel: &HaplotypePanel,
    spec: RegressionSpec,
    options: &FitOptions,
    mode: OriginMode,
) -> Result<FitResult> {
    fit_inner(cohort, panel, spec, options, mode)
}
