//! The modified profile log-likelihood `l_mp = l_1 - l_2`, its analytic score,
//! and the multiplier diagnostics.
//!
//! Haplotype frequencies are handled through log-ratio coordinates
//! `alpha_s = ln(mu_s / mu_S)` for `s < S`, so every packed parameter vector
//! maps to a point on the open simplex.

use std::collections::HashMap;

use crate::cohort::CohortTable;
use crate::error::{Error, Result};
use crate::haplotype::{compatible_configs, maf_from, HaplotypePanel};
use crate::penetrance::{expit, log_bernoulli, maternal_transmission_prob, Beta, RegressionSpec};

/// Regression coefficients plus haplotype frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub beta: Beta,
    pub mu: Vec<f64>,
}

/// True transmitted-maternal and paternal alleles at the target SNP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KnownOrigin {
    pub maternal: u8,
    pub paternal: u8,
}

/// Limiting value of the Lagrange multiplier under case-control sampling.
pub fn lambda0(n0: usize, n1: usize, f: f64) -> f64 {
    let n = (n0 + n1) as f64;
    n1 as f64 / (n * f) - n0 as f64 / (n * (1.0 - f))
}

pub fn mu_to_logits(mu: &[f64]) -> Vec<f64> {
    let last = mu[mu.len() - 1].ln();
    mu[..mu.len() - 1].iter().map(|m| m.ln() - last).collect()
}

pub fn logits_to_mu(alpha: &[f64]) -> Vec<f64> {
    let top = alpha.iter().copied().fold(0.0, f64::max);
    let mut mu: Vec<f64> = alpha.iter().map(|a| (a - top).exp()).collect();
    mu.push((-top).exp());
    let total: f64 = mu.iter().sum();
    mu.iter_mut().for_each(|m| *m /= total);
    mu
}

/// Class index of a target-SNP origin pair.
#[inline]
fn class_of(gmc: u8, gpc: u8) -> usize {
    2 * gmc as usize + gpc as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConfigTerm {
    pub i: u16,
    pub j: u16,
    pub l: u16,
    /// `2 * g_mc + g_pc` at the target SNP.
    pub class: u8,
}

/// Everything about one family that the likelihood needs.
#[derive(Debug, Clone)]
pub struct FamilyTerms {
    pub family_id: String,
    pub status: u8,
    /// Maternal genotype at the target SNP.
    pub gm: u8,
    pub covariates: Vec<f64>,
    pub maternal_only: bool,
    pub(crate) configs: Vec<ConfigTerm>,
    // design rows for the four origin classes, class-major
    pub(crate) rows: Vec<f64>,
}

impl FamilyTerms {
    pub fn config_count(&self) -> usize {
        self.configs.len()
    }

    /// Distinct origin classes `(g_mc, g_pc)` present among the configurations.
    pub fn origins(&self) -> Vec<(u8, u8)> {
        let mut seen = [false; 4];
        for c in &self.configs {
            seen[c.class as usize] = true;
        }
        (0..4)
            .filter(|&k| seen[k])
            .map(|k| ((k / 2) as u8, (k % 2) as u8))
            .collect()
    }

    #[inline]
    pub(crate) fn row(&self, class: usize, dim: usize) -> &[f64] {
        &self.rows[class * dim..(class + 1) * dim]
    }
}

/// Fixed data for evaluating the likelihood: per-family configuration sets,
/// the prevalence, and the limiting multiplier.
#[derive(Debug, Clone)]
pub struct LikelihoodContext {
    pub families: Vec<FamilyTerms>,
    pub spec: RegressionSpec,
    pub panel: HaplotypePanel,
    pub target_alleles: Vec<u8>,
    pub prevalence: f64,
    pub n0: usize,
    pub n1: usize,
    pub lambda0: f64,
    /// When set, frequencies are held at their given values and only the
    /// regression coefficients are free.
    pub fix_mu: bool,
    /// Families left out of the fit, with the reason.
    pub dropped: Vec<(String, String)>,
}

impl LikelihoodContext {
    pub fn new(
        cohort: &CohortTable,
        panel: &HaplotypePanel,
        spec: RegressionSpec,
        known: Option<&HashMap<String, KnownOrigin>>,
    ) -> Result<Self> {
        if cohort.k() != panel.k() {
            return Err(Error::Shape(format!(
                "panel has {} SNPs but cohort has {}",
                panel.k(),
                cohort.k()
            )));
        }
        if cohort.p() != spec.covariate_count {
            return Err(Error::Shape(format!(
                "cohort has {} covariates but model expects {}",
                cohort.p(),
                spec.covariate_count
            )));
        }
        let target = cohort.target_index;
        let alleles = panel.alleles_at(target);
        let dim = spec.dim();
        let mut families = Vec::with_capacity(cohort.n());
        let mut dropped = Vec::new();
        for fam in &cohort.families {
            let Some(gm) = fam.mother_target(target) else {
                dropped.push((
                    fam.family_id.clone(),
                    "maternal target genotype missing".into(),
                ));
                continue;
            };
            let maternal_only = fam.child_all_missing();
            let set = match compatible_configs(fam, panel, maternal_only) {
                Ok(set) => set,
                Err(e) => {
                    dropped.push((fam.family_id.clone(), e.to_string()));
                    continue;
                }
            };
            let origin = match known {
                Some(map) => match map.get(&fam.family_id) {
                    Some(o) => Some(*o),
                    None => {
                        dropped.push((fam.family_id.clone(), "no known origin record".into()));
                        continue;
                    }
                },
                None => None,
            };
            let configs: Vec<ConfigTerm> = set
                .configs
                .iter()
                .map(|c| ConfigTerm {
                    i: c.i as u16,
                    j: c.j as u16,
                    l: c.l as u16,
                    class: class_of(alleles[c.w], alleles[c.l]) as u8,
                })
                .filter(|c| {
                    origin.is_none_or(|o| c.class as usize == class_of(o.maternal, o.paternal))
                })
                .collect();
            if configs.is_empty() {
                dropped.push((
                    fam.family_id.clone(),
                    "known origin incompatible with genotypes".into(),
                ));
                continue;
            }
            let mut rows = vec![0.0; 4 * dim];
            for gmc in 0..2u8 {
                for gpc in 0..2u8 {
                    let k = class_of(gmc, gpc);
                    spec.design_row(
                        gm,
                        gmc,
                        gpc,
                        &fam.covariates,
                        &mut rows[k * dim..(k + 1) * dim],
                    );
                }
            }
            families.push(FamilyTerms {
                family_id: fam.family_id.clone(),
                status: fam.status,
                gm,
                covariates: fam.covariates.clone(),
                maternal_only,
                configs,
                rows,
            });
        }
        for (id, why) in &dropped {
            log::warn!("family {id} excluded: {why}");
        }
        let n1 = families.iter().filter(|f| f.status == 1).count();
        let n0 = families.len() - n1;
        if n0 == 0 || n1 == 0 {
            return Err(Error::EmptyCohort(format!(
                "{n1} cases and {n0} controls remain after excluding {} families",
                dropped.len()
            )));
        }
        let f = cohort.prevalence;
        Ok(LikelihoodContext {
            families,
            spec,
            panel: panel.clone(),
            target_alleles: alleles,
            prevalence: f,
            n0,
            n1,
            lambda0: lambda0(n0, n1, f),
            fix_mu: false,
            dropped,
        })
    }

    pub fn n(&self) -> usize {
        self.families.len()
    }

    pub fn n_haplotypes(&self) -> usize {
        self.target_alleles.len()
    }

    /// Length of the packed parameter vector.
    pub fn dim(&self) -> usize {
        self.spec.dim()
            + if self.fix_mu {
                0
            } else {
                self.n_haplotypes() - 1
            }
    }

    pub fn pack(&self, params: &ModelParams) -> Vec<f64> {
        let mut v = params.beta.coef.clone();
        if !self.fix_mu {
            v.extend(mu_to_logits(&params.mu));
        }
        v
    }

    /// Inverse of [`pack`](Self::pack). With fixed frequencies they are taken
    /// from `base`.
    pub fn unpack(&self, theta: &[f64], base: &ModelParams) -> ModelParams {
        let d = self.spec.dim();
        let beta = Beta {
            spec: self.spec,
            coef: theta[..d].to_vec(),
        };
        let mu = if self.fix_mu {
            base.mu.clone()
        } else {
            logits_to_mu(&theta[d..])
        };
        ModelParams { beta, mu }
    }

    /// Names of the packed coordinates.
    pub fn parameter_names<S: AsRef<str>>(&self, covariate_names: &[S]) -> Vec<String> {
        let mut names = self.spec.names(covariate_names);
        if !self.fix_mu {
            let haps = self.panel.to_strings();
            let reference = &haps[haps.len() - 1];
            names.extend(
                haps[..haps.len() - 1]
                    .iter()
                    .map(|h| format!("logit_mu[{h}/{reference}]")),
            );
        }
        names
    }

    fn check(&self, params: &ModelParams) -> Result<()> {
        if params.beta.spec != self.spec {
            return Err(Error::Shape("coefficients follow a different model".into()));
        }
        if params.mu.len() != self.n_haplotypes() {
            return Err(Error::Shape(format!(
                "{} frequencies for a panel of {}",
                params.mu.len(),
                self.n_haplotypes()
            )));
        }
        Ok(())
    }
}

/// Quantities shared by every family at one parameter value.
pub(crate) struct Prepared<'a> {
    pub beta: &'a Beta,
    pub mu: &'a [f64],
    pub log_mu: Vec<f64>,
    pub theta: f64,
    pub log_pg: [f64; 3],
    /// d log pr(g_m) / d theta
    pub dlog_pg: [f64; 3],
}

impl<'a> Prepared<'a> {
    pub fn new(params: &'a ModelParams, ctx: &LikelihoodContext) -> Self {
        let mu = &params.mu;
        let theta = maf_from(&ctx.target_alleles, mu);
        let log_pg = [
            2.0 * (1.0 - theta).ln(),
            (2.0 * theta * (1.0 - theta)).ln(),
            2.0 * theta.ln(),
        ];
        let dlog_pg = [
            -2.0 / (1.0 - theta),
            1.0 / theta - 1.0 / (1.0 - theta),
            2.0 / theta,
        ];
        Prepared {
            beta: &params.beta,
            mu,
            log_mu: mu.iter().map(|m| m.ln()).collect(),
            theta,
            log_pg,
            dlog_pg,
        }
    }

    /// Linear predictors for the four origin classes.
    #[inline]
    pub fn predictors(&self, fam: &FamilyTerms) -> [f64; 4] {
        let d = self.beta.coef.len();
        std::array::from_fn(|k| self.beta.dot(fam.row(k, d)))
    }

    /// `pr(g_mc, g_pc | g_m)` for each class.
    #[inline]
    pub fn class_probs(&self, gm: u8) -> [f64; 4] {
        std::array::from_fn(|k| {
            let (gmc, gpc) = ((k / 2) as u8, (k % 2) as u8);
            let pp = if gpc == 1 {
                self.theta
            } else {
                1.0 - self.theta
            };
            maternal_transmission_prob(gm, gmc) * pp
        })
    }

    /// Log of each configuration's joint term `pr(Y|cfg) mu_i mu_j mu_l`
    /// (without the `pr(g_m)` denominator). Returns the log-sum-exp.
    pub fn config_log_terms(&self, fam: &FamilyTerms, lp: &[f64; 4], out: &mut Vec<f64>) -> f64 {
        out.clear();
        let log_y: [f64; 4] = std::array::from_fn(|k| log_bernoulli(fam.status, lp[k]));
        let mut top = f64::NEG_INFINITY;
        for c in &fam.configs {
            let v = log_y[c.class as usize]
                + self.log_mu[c.i as usize]
                + self.log_mu[c.j as usize]
                + self.log_mu[c.l as usize];
            top = top.max(v);
            out.push(v);
        }
        if top == f64::NEG_INFINITY {
            return top;
        }
        top + out.iter().map(|v| (v - top).exp()).sum::<f64>().ln()
    }

    /// `L_u` and `1 + lambda (L_u - f)`.
    #[inline]
    pub fn risk(&self, fam: &FamilyTerms, lp: &[f64; 4]) -> f64 {
        let probs = self.class_probs(fam.gm);
        (0..4).map(|k| probs[k] * expit(lp[k])).sum()
    }
}

fn l1_term(prep: &Prepared, fam: &FamilyTerms, lp: &[f64; 4], buf: &mut Vec<f64>) -> Result<f64> {
    let v = prep.config_log_terms(fam, lp, buf) - prep.log_pg[fam.gm as usize];
    if !v.is_finite() {
        return Err(Error::ZeroProbabilityFamily {
            family: fam.family_id.clone(),
        });
    }
    Ok(v)
}

fn constraint_term(fam: &FamilyTerms, risk: f64, lambda: f64, f: f64) -> Result<f64> {
    let d = 1.0 + lambda * (risk - f);
    if !(d > 0.0) {
        return Err(Error::ConstraintDomain {
            family: fam.family_id.clone(),
            value: d,
        });
    }
    Ok(d)
}

pub fn log_l1(params: &ModelParams, ctx: &LikelihoodContext) -> Result<f64> {
    ctx.check(params)?;
    let prep = Prepared::new(params, ctx);
    let mut buf = Vec::new();
    let mut total = 0.0;
    for fam in &ctx.families {
        let lp = prep.predictors(fam);
        total += l1_term(&prep, fam, &lp, &mut buf)?;
    }
    Ok(total)
}

/// Marginal risks `L_u` for every retained family.
pub fn risks(params: &ModelParams, ctx: &LikelihoodContext) -> Result<Vec<f64>> {
    ctx.check(params)?;
    let prep = Prepared::new(params, ctx);
    Ok(ctx
        .families
        .iter()
        .map(|fam| prep.risk(fam, &prep.predictors(fam)))
        .collect())
}

/// `sum_u log[n (1 + lambda (L_u - f))]` for given risks.
pub fn log_l2_terms(risks: &[f64], lambda: f64, f: f64, n: usize) -> Result<f64> {
    let log_n = (n as f64).ln();
    let mut total = 0.0;
    for (u, &r) in risks.iter().enumerate() {
        let d = 1.0 + lambda * (r - f);
        if !(d > 0.0) {
            return Err(Error::ConstraintDomain {
                family: format!("#{u}"),
                value: d,
            });
        }
        total += log_n + d.ln();
    }
    Ok(total)
}

pub fn log_l2(params: &ModelParams, ctx: &LikelihoodContext) -> Result<f64> {
    log_l2_at(params, ctx, ctx.lambda0)
}

fn log_l2_at(params: &ModelParams, ctx: &LikelihoodContext, lambda: f64) -> Result<f64> {
    ctx.check(params)?;
    let prep = Prepared::new(params, ctx);
    let log_n = (ctx.n() as f64).ln();
    let mut total = 0.0;
    for fam in &ctx.families {
        let r = prep.risk(fam, &prep.predictors(fam));
        total += log_n + constraint_term(fam, r, lambda, ctx.prevalence)?.ln();
    }
    Ok(total)
}

/// The modified profile log-likelihood.
pub fn log_lmp(params: &ModelParams, ctx: &LikelihoodContext) -> Result<f64> {
    Ok(log_l1(params, ctx)? - log_l2(params, ctx)?)
}

/// The profile objective `l_0(Theta, lambda)` at an arbitrary multiplier.
pub fn log_l0(params: &ModelParams, ctx: &LikelihoodContext, lambda: f64) -> Result<f64> {
    Ok(log_l1(params, ctx)? - log_l2_at(params, ctx, lambda)?)
}

/// Score of `l_mp` in packed coordinates.
#[derive(Debug, Clone)]
pub struct Score {
    pub value: f64,
    pub total: Vec<f64>,
    /// One row per retained family, in context order.
    pub per_family: Vec<Vec<f64>>,
}

/// Analytic gradient of [`log_lmp`] with respect to the packed parameters,
/// with the per-family contributions.
pub fn score_lmp(params: &ModelParams, ctx: &LikelihoodContext) -> Result<Score> {
    ctx.check(params)?;
    let prep = Prepared::new(params, ctx);
    let d_beta = ctx.spec.dim();
    let dim = ctx.dim();
    let s = ctx.n_haplotypes();
    let lambda = ctx.lambda0;
    let f = ctx.prevalence;
    let log_n = (ctx.n() as f64).ln();
    let mut buf = Vec::new();
    let mut counts = vec![0.0; s];
    let mut value = 0.0;
    let mut total = vec![0.0; dim];
    let mut per_family = Vec::with_capacity(ctx.n());

    for fam in &ctx.families {
        let mut g = vec![0.0; dim];
        let lp = prep.predictors(fam);
        let pen: [f64; 4] = std::array::from_fn(|k| expit(lp[k]));
        let l1 = l1_term(&prep, fam, &lp, &mut buf)?;
        let lse = l1 + prep.log_pg[fam.gm as usize];
        let probs = prep.class_probs(fam.gm);
        let risk: f64 = (0..4).map(|k| probs[k] * pen[k]).sum();
        let denom = constraint_term(fam, risk, lambda, f)?;
        value += l1 - (log_n + denom.ln());

        // posterior class weights and expected haplotype counts
        let mut class_w = [0.0; 4];
        counts.iter_mut().for_each(|c| *c = 0.0);
        for (c, &v) in fam.configs.iter().zip(buf.iter()) {
            let w = (v - lse).exp();
            class_w[c.class as usize] += w;
            counts[c.i as usize] += w;
            counts[c.j as usize] += w;
            counts[c.l as usize] += w;
        }
        let y = fam.status as f64;
        let scale = lambda / denom;
        for k in 0..4 {
            let coef = class_w[k] * (y - pen[k]) - scale * probs[k] * pen[k] * (1.0 - pen[k]);
            if coef != 0.0 {
                for (gi, z) in g[..d_beta].iter_mut().zip(fam.row(k, d_beta)) {
                    *gi += coef * z;
                }
            }
        }
        if !ctx.fix_mu {
            let gm = fam.gm;
            let dl_dtheta: f64 = (0..2)
                .map(|gmc| {
                    maternal_transmission_prob(gm, gmc as u8)
                        * (pen[class_of(gmc as u8, 1)] - pen[class_of(gmc as u8, 0)])
                })
                .sum();
            let theta_coef = prep.dlog_pg[gm as usize] + scale * dl_dtheta;
            for t in 0..s - 1 {
                let mu_t = prep.mu[t];
                let dtheta = mu_t * (ctx.target_alleles[t] as f64 - prep.theta);
                g[d_beta + t] = counts[t] - 3.0 * mu_t - theta_coef * dtheta;
            }
        }
        for (a, b) in total.iter_mut().zip(&g) {
            *a += b;
        }
        per_family.push(g);
    }
    if let Some(index) = total.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient { index });
    }
    Ok(Score {
        value,
        total,
        per_family,
    })
}

/// Root of the multiplier equation for the profile diagnostic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiplierSolution {
    pub lambda: f64,
    pub residual: f64,
    /// All risks equal the prevalence, so any multiplier solves the equation.
    pub degenerate: bool,
}

/// Solves `sum_u d_u / (1 + lambda d_u) = 0` for `d_u = L_u - f` by bisection
/// over the interval where every denominator is positive.
pub fn solve_multiplier(diffs: &[f64]) -> Result<MultiplierSolution> {
    let eq = |lambda: f64| diffs.iter().map(|d| d / (1.0 + lambda * d)).sum::<f64>();
    let hi_d = diffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo_d = diffs.iter().copied().fold(f64::INFINITY, f64::min);
    if diffs.iter().all(|d| d.abs() < 1e-15) {
        return Ok(MultiplierSolution {
            lambda: 0.0,
            residual: 0.0,
            degenerate: true,
        });
    }
    if !(hi_d > 0.0 && lo_d < 0.0) {
        return Err(Error::NoMultiplierRoot);
    }
    // eq is decreasing on (-1/hi_d, -1/lo_d), from +inf to -inf
    let (mut a, mut b) = (-1.0 / hi_d, -1.0 / lo_d);
    for _ in 0..4000 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if eq(mid) > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    let (ra, rb) = (eq(a), eq(b));
    let (lambda, residual) = if ra.is_finite() && (!rb.is_finite() || ra.abs() <= rb.abs()) {
        (a, ra.abs())
    } else {
        (b, rb.abs())
    };
    Ok(MultiplierSolution {
        lambda,
        residual,
        degenerate: false,
    })
}

/// The data-dependent multiplier `lambda_Theta` at `params`.
pub fn solve_lambda(params: &ModelParams, ctx: &LikelihoodContext) -> Result<MultiplierSolution> {
    let f = ctx.prevalence;
    let diffs: Vec<f64> = risks(params, ctx)?.iter().map(|r| r - f).collect();
    solve_multiplier(&diffs)
}

/// `d l_0 / d lambda` at `(params, lambda)`.
pub fn multiplier_gradient(
    params: &ModelParams,
    ctx: &LikelihoodContext,
    lambda: f64,
) -> Result<f64> {
    let f = ctx.prevalence;
    let mut g = 0.0;
    for (fam, r) in ctx.families.iter().zip(risks(params, ctx)?) {
        let d = constraint_term(fam, r, lambda, f)?;
        g -= (r - f) / d;
    }
    Ok(g)
}

/// Sample average over families of `d^2 l_0 / (dTheta dlambda)` at
/// `(params, lambda0)`, by central differences of the multiplier gradient.
pub fn check_c8(params: &ModelParams, ctx: &LikelihoodContext) -> Result<Vec<f64>> {
    let theta = ctx.pack(params);
    let n = ctx.n() as f64;
    let mut out = Vec::with_capacity(theta.len());
    for k in 0..theta.len() {
        let h = 1e-5 * theta[k].abs().max(1.0);
        let mut plus = theta.clone();
        plus[k] += h;
        let mut minus = theta.clone();
        minus[k] -= h;
        let gp = multiplier_gradient(&ctx.unpack(&plus, params), ctx, ctx.lambda0)?;
        let gm = multiplier_gradient(&ctx.unpack(&minus, params), ctx, ctx.lambda0)?;
        out.push((gp - gm) / (2.0 * h) / n);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::FamilyRecord;

    fn small_cohort(f: f64) -> CohortTable {
        let rows: [(u8, f64, [u8; 2], [u8; 2]); 6] = [
            (1, 0.3, [1, 1], [1, 1]),
            (1, -0.4, [1, 0], [1, 1]),
            (0, 1.1, [2, 1], [1, 0]),
            (0, -0.2, [0, 1], [1, 2]),
            (1, 0.0, [1, 2], [2, 1]),
            (0, 0.9, [1, 1], [0, 0]),
        ];
        let families = rows
            .iter()
            .enumerate()
            .map(|(n, (y, x, m, c))| FamilyRecord {
                family_id: format!("f{n}"),
                status: *y,
                covariates: vec![*x],
                mother: m.iter().map(|&g| Some(g)).collect(),
                child: c.iter().map(|&g| Some(g)).collect(),
            })
            .collect();
        CohortTable::new(
            families,
            vec!["t".into(), "a".into()],
            vec!["x".into()],
            0,
            f,
        )
        .unwrap()
    }

    fn small_context(f: f64) -> (LikelihoodContext, ModelParams) {
        let cohort = small_cohort(f);
        let panel =
            HaplotypePanel::from_strings(&["00", "01", "10", "11"], vec![0.4, 0.2, 0.3, 0.1])
                .unwrap();
        let spec = RegressionSpec::main_effects(1);
        let ctx = LikelihoodContext::new(&cohort, &panel, spec, None).unwrap();
        let params = ModelParams {
            beta: Beta::new(spec, vec![-1.0, 0.3, 0.2, 0.5, 0.4]).unwrap(),
            mu: panel.frequencies().to_vec(),
        };
        (ctx, params)
    }

    #[test]
    fn lambda0_values() {
        assert!((lambda0(200, 200, 0.01) - 49.494949494949).abs() < 1e-9);
        assert!(lambda0(300, 100, 0.25).abs() < 1e-15);
        assert!((lambda0(0, 37, 0.2) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn logit_roundtrip() {
        let mu = vec![0.1, 0.2, 0.3, 0.4];
        let back = logits_to_mu(&mu_to_logits(&mu));
        for (a, b) in mu.iter().zip(&back) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn single_config_family_is_one_term() {
        let fam = FamilyRecord {
            family_id: "solo".into(),
            status: 1,
            covariates: vec![],
            mother: vec![Some(0)],
            child: vec![Some(1)],
        };
        let other = FamilyRecord {
            family_id: "ctrl".into(),
            status: 0,
            ..fam.clone()
        };
        let cohort = CohortTable::new(vec![fam, other], vec!["t".into()], vec![], 0, 0.1).unwrap();
        let panel = HaplotypePanel::from_strings(&["0", "1"], vec![0.7, 0.3]).unwrap();
        let spec = RegressionSpec::main_effects(0);
        let ctx = LikelihoodContext::new(&cohort, &panel, spec, None).unwrap();
        let beta = Beta::new(spec, vec![-1.0, 0.2, 0.3, 0.4]).unwrap();
        let params = ModelParams {
            beta: beta.clone(),
            mu: vec![0.7, 0.3],
        };
        let lp = crate::penetrance::linear_predictor(&beta, 0, 0, 1, &[]).unwrap();
        let prior = 0.7 * 0.7 * 0.3 / (0.7 * 0.7);
        let expected = (expit(lp) * prior).ln() + ((1.0 - expit(lp)) * prior).ln();
        assert!((log_l1(&params, &ctx).unwrap() - expected).abs() < 1e-13);
    }

    #[test]
    fn zero_beta_gives_half_times_conditional_genotype_law() {
        let (ctx, mut params) = small_context(0.1);
        params.beta = Beta::zeros(ctx.spec);
        let mu = &params.mu;
        let theta = maf_from(&ctx.target_alleles, mu);
        let expected: f64 = ctx
            .families
            .iter()
            .map(|fam| {
                let geno: f64 = fam
                    .configs
                    .iter()
                    .map(|c| mu[c.i as usize] * mu[c.j as usize] * mu[c.l as usize])
                    .sum();
                (0.5 * geno / crate::haplotype::hwe_genotype_prob(theta, fam.gm)).ln()
            })
            .sum();
        assert!((log_l1(&params, &ctx).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn l2_closed_forms() {
        let n = 400;
        let exact = log_l2_terms(&[0.01; 5], 49.49, 0.01, n).unwrap();
        assert!((exact - 5.0 * (n as f64).ln()).abs() < 1e-12);
        let any = log_l2_terms(&[0.3, 0.9, 0.001], 0.0, 0.01, n).unwrap();
        assert!((any - 3.0 * (n as f64).ln()).abs() < 1e-12);
        let two = log_l2_terms(&[0.02, 0.005], 49.49, 0.01, n).unwrap();
        let expected =
            (400.0_f64 * (1.0 + 49.49 * 0.01)).ln() + (400.0_f64 * (1.0 - 49.49 * 0.005)).ln();
        assert!((two - expected).abs() < 1e-12);
        assert!(log_l2_terms(&[0.0], 200.0, 0.01, 1).is_err());
    }

    #[test]
    fn lmp_is_l1_minus_l2_and_order_free() {
        let (ctx, params) = small_context(0.1);
        let lmp = log_lmp(&params, &ctx).unwrap();
        let parts = log_l1(&params, &ctx).unwrap() - log_l2(&params, &ctx).unwrap();
        assert_eq!(lmp, parts);
        let mut rev = ctx.clone();
        rev.families.reverse();
        assert!((log_lmp(&params, &rev).unwrap() - lmp).abs() < 1e-12);
    }

    #[test]
    fn lmp_drops_when_required_haplotype_vanishes() {
        let (ctx, mut params) = small_context(0.1);
        // family f5: mother (1,1) child (0,0) -> paternal haplotype "00" is forced
        let base = log_lmp(&params, &ctx).unwrap();
        let mut last = base;
        for eps in [1e-2, 1e-4, 1e-8] {
            params.mu = vec![eps, 0.2, 0.3, 0.5 - eps];
            let v = log_lmp(&params, &ctx).unwrap();
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn per_family_scores_sum_to_total() {
        let (ctx, params) = small_context(0.1);
        let s = score_lmp(&params, &ctx).unwrap();
        for k in 0..ctx.dim() {
            let sum: f64 = s.per_family.iter().map(|g| g[k]).sum();
            assert!((sum - s.total[k]).abs() < 1e-10);
        }
        assert!((s.value - log_lmp(&params, &ctx).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn score_matches_central_differences() {
        for f in [0.01, 0.3, 0.7] {
            let (ctx, params) = small_context(f);
            let theta = ctx.pack(&params);
            let s = score_lmp(&params, &ctx).unwrap();
            for k in 0..theta.len() {
                let h = 1e-6 * theta[k].abs().max(1.0);
                let mut p = theta.clone();
                p[k] += h;
                let mut m = theta.clone();
                m[k] -= h;
                let fd = (log_lmp(&ctx.unpack(&p, &params), &ctx).unwrap()
                    - log_lmp(&ctx.unpack(&m, &params), &ctx).unwrap())
                    / (2.0 * h);
                assert!(
                    (fd - s.total[k]).abs() < 1e-6 * fd.abs().max(1.0),
                    "f={f} k={k}"
                );
            }
        }
    }

    #[test]
    fn fixed_frequency_layout() {
        let (mut ctx, params) = small_context(0.1);
        ctx.fix_mu = true;
        assert_eq!(ctx.dim(), 5);
        let s = score_lmp(&params, &ctx).unwrap();
        assert_eq!(s.total.len(), 5);
        assert_eq!(ctx.unpack(&ctx.pack(&params), &params), params);
    }

    #[test]
    fn relabeling_haplotypes_leaves_lmp_unchanged() {
        let (ctx, params) = small_context(0.1);
        let base = log_lmp(&params, &ctx).unwrap();
        let perm = [2usize, 0, 3, 1];
        let haps: Vec<u32> = perm.iter().map(|&p| ctx.panel.haplotypes()[p]).collect();
        let mu: Vec<f64> = perm.iter().map(|&p| params.mu[p]).collect();
        let panel = HaplotypePanel::new(2, haps, mu.clone()).unwrap();
        let ctx_perm = LikelihoodContext::new(&small_cohort(0.1), &panel, ctx.spec, None).unwrap();
        let permuted = ModelParams {
            beta: params.beta.clone(),
            mu,
        };
        assert!((log_lmp(&permuted, &ctx_perm).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn multiplier_root() {
        let sol = solve_multiplier(&[0.0, 0.0]).unwrap();
        assert!(sol.degenerate && sol.lambda == 0.0);
        let sol = solve_multiplier(&[0.03, -0.03]).unwrap();
        assert!(sol.lambda.abs() < 1e-12);
        let sol = solve_multiplier(&[0.02, -0.005, 0.1, -0.009, 0.0]).unwrap();
        assert!(sol.residual < 1e-10);
        assert!(solve_multiplier(&[0.1, 0.2]).is_err());

        let (ctx, params) = small_context(0.1);
        let r = risks(&params, &ctx).unwrap();
        let mid = 0.5
            * (r.iter().copied().fold(f64::INFINITY, f64::min)
                + r.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        let mut ctx = ctx;
        ctx.prevalence = mid;
        let sol = solve_lambda(&params, &ctx).unwrap();
        assert!(sol.residual < 1e-10);
        assert!(
            multiplier_gradient(&params, &ctx, sol.lambda)
                .unwrap()
                .abs()
                < 1e-10
        );
    }

    #[test]
    fn c8_at_constant_risk() {
        // intercept-only risks do not depend on the frequencies, so those
        // entries vanish; the coefficient entries are -mean(z) p (1 - p)
        let (mut ctx, mut params) = small_context(0.5);
        params.beta = Beta::zeros(ctx.spec);
        ctx.lambda0 = 0.0;
        let c8 = check_c8(&params, &ctx).unwrap();
        assert_eq!(c8.len(), ctx.dim());
        let n = ctx.n() as f64;
        let mean_gm = ctx.families.iter().map(|f| f.gm as f64).sum::<f64>() / n;
        let mean_x = ctx.families.iter().map(|f| f.covariates[0]).sum::<f64>() / n;
        assert!((c8[0] + 0.25).abs() < 1e-8);
        assert!((c8[1] + 0.25 * mean_gm).abs() < 1e-8);
        assert!((c8[4] + 0.25 * mean_x).abs() < 1e-8);
        assert!(c8[5..].iter().all(|v| *v == 0.0));
    }
}
