//! Synthetic case-control mother-child cohorts from a haplotype panel.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cohort::{CohortTable, FamilyRecord};
use crate::error::{Error, Result};
use crate::haplotype::{HaplotypePanel, PanelFile};
use crate::likelihood::KnownOrigin;
use crate::penetrance::{expit, Beta, RegressionSpec, Term};

const REFERENCE_DESIGN: &str = include_str!("../data/reference_design.json");
const STANDIN_PANEL: &str = include_str!("../data/standin_panel.json");

/// Draws used by [`solve_intercept`].
pub const INTERCEPT_DRAWS: usize = 1_000_000;
const INTERCEPT_SEED: u64 = 0x1e7e_2c5e_ed00_0001;

/// How the covariate depends on the maternal target genotype.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConfounderForm {
    #[default]
    Linear,
    Quadratic,
}

impl ConfounderForm {
    fn apply(self, gm: u8) -> f64 {
        let g = gm as f64;
        match self {
            ConfounderForm::Linear => g,
            ConfounderForm::Quadratic => g * g,
        }
    }
}

/// Generating log-odds ratios (the intercept is solved from the prevalence).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct TrueEffects {
    pub gm: f64,
    pub gc: f64,
    pub im: f64,
    pub x: f64,
    #[serde(default)]
    pub gm_x: f64,
    #[serde(default)]
    pub gc_x: f64,
}

impl TrueEffects {
    pub fn is_null(&self) -> bool {
        [self.gm, self.gc, self.im, self.x, self.gm_x, self.gc_x]
            .iter()
            .all(|v| *v == 0.0)
    }

    pub fn has_interactions(&self) -> bool {
        self.gm_x != 0.0 || self.gc_x != 0.0
    }
}

fn default_max_draws() -> u64 {
    200_000_000
}

/// A simulation design, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub panel: PanelFile,
    pub target_index: usize,
    pub eta: f64,
    #[serde(default)]
    pub confounder_form: ConfounderForm,
    pub effects: TrueEffects,
    /// Solved from the prevalence when absent.
    #[serde(default)]
    pub intercept: Option<f64>,
    pub prevalence: f64,
    #[serde(default)]
    pub fixation: f64,
    pub n0: usize,
    pub n1: usize,
    #[serde(default)]
    pub child_missing_rate: f64,
    #[serde(default)]
    pub seed: u64,
    /// Population draws allowed before accrual gives up.
    #[serde(default = "default_max_draws")]
    pub max_draws: u64,
}

impl SimDesign {
    /// The reference setting on the shipped stand-in panel.
    pub fn reference() -> Self {
        serde_json::from_str(REFERENCE_DESIGN).expect("bundled design parses")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(&path, e))?;
        let design: SimDesign = serde_json::from_str(&text)?;
        design.validate()?;
        Ok(design)
    }

    pub fn validate(&self) -> Result<()> {
        let panel = self.truth_panel()?;
        if self.target_index >= panel.k() {
            return Err(Error::Design(format!(
                "target index {} outside a {}-SNP panel",
                self.target_index,
                panel.k()
            )));
        }
        if !(self.prevalence > 0.0 && self.prevalence < 1.0) {
            return Err(Error::Prevalence(self.prevalence));
        }
        if !(0.0..1.0).contains(&self.fixation) {
            return Err(Error::Design(format!(
                "fixation index {} outside [0, 1)",
                self.fixation
            )));
        }
        if !(0.0..=1.0).contains(&self.child_missing_rate) {
            return Err(Error::Design(format!(
                "child missing rate {} outside [0, 1]",
                self.child_missing_rate
            )));
        }
        if self.n0 == 0 || self.n1 == 0 {
            return Err(Error::Design(
                "need at least one case and one control".into(),
            ));
        }
        let e = &self.effects;
        if ![self.eta, e.gm, e.gc, e.im, e.x, e.gm_x, e.gc_x]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::Design("non-finite effect or eta".into()));
        }
        Ok(())
    }

    pub fn truth_panel(&self) -> Result<HaplotypePanel> {
        self.panel.clone().into_panel()
    }

    /// Model with the generating terms (interactions included when non-zero).
    pub fn true_spec(&self) -> RegressionSpec {
        RegressionSpec::main_effects(1)
            .with_interactions(self.effects.gm_x != 0.0, self.effects.gc_x != 0.0)
    }

    /// Generating coefficients under [`true_spec`](Self::true_spec).
    pub fn true_beta(&self, intercept: f64) -> Beta {
        let spec = self.true_spec();
        let mut beta = Beta::zeros(spec);
        let e = &self.effects;
        for (term, value) in [
            (Term::Intercept, intercept),
            (Term::Gm, e.gm),
            (Term::Gc, e.gc),
            (Term::Im, e.im),
            (Term::X(0), e.x),
        ] {
            beta.set(term, value).expect("main effects present");
        }
        if e.gm_x != 0.0 {
            beta.set(Term::GmX(0), e.gm_x).expect("present");
        }
        if e.gc_x != 0.0 {
            beta.set(Term::GcX(0), e.gc_x).expect("present");
        }
        beta
    }

    /// True value of a named coefficient (as produced by
    /// [`RegressionSpec::names`] with covariate `x`); zero for absent terms.
    pub fn true_value(&self, name: &str, intercept: f64) -> f64 {
        let e = &self.effects;
        match name {
            "intercept" => intercept,
            "g_m" => e.gm,
            "g_c" => e.gc,
            "im" => e.im,
            "x" => e.x,
            "g_m:x" => e.gm_x,
            "g_c:x" => e.gc_x,
            _ => 0.0,
        }
    }

    pub fn snp_ids(&self) -> Vec<String> {
        (1..=self.panel.haplotypes[0].len())
            .map(|k| format!("snp{k}"))
            .collect()
    }
}

/// The stand-in panel shipped with the crate.
pub fn standin_panel() -> HaplotypePanel {
    serde_json::from_str::<PanelFile>(STANDIN_PANEL)
        .expect("bundled panel parses")
        .into_panel()
        .expect("bundled panel is valid")
}

/// One draw from the population model.
#[derive(Debug, Clone, Copy)]
struct Draw {
    mother: (usize, usize),
    transmitted: usize,
    paternal: usize,
    gm: u8,
    gmc: u8,
    gpc: u8,
    x: f64,
}

struct Population {
    panel: HaplotypePanel,
    sampler: WeightedIndex<f64>,
    target: usize,
    fixation: f64,
    eta: f64,
    form: ConfounderForm,
    centre: f64,
}

impl Population {
    fn new(design: &SimDesign) -> Result<Self> {
        design.validate()?;
        let panel = design.truth_panel()?;
        let sampler = WeightedIndex::new(panel.frequencies())
            .map_err(|e| Error::Design(format!("panel frequencies: {e}")))?;
        let theta = crate::haplotype::target_maf(&panel, design.target_index);
        let f = design.fixation;
        // maternal genotype law under the fixation model
        let pg = [
            f * (1.0 - theta) + (1.0 - f) * (1.0 - theta).powi(2),
            2.0 * (1.0 - f) * theta * (1.0 - theta),
            f * theta + (1.0 - f) * theta * theta,
        ];
        let centre = (0..3u8)
            .map(|g| pg[g as usize] * design.confounder_form.apply(g))
            .sum();
        Ok(Population {
            panel,
            sampler,
            target: design.target_index,
            fixation: design.fixation,
            eta: design.eta,
            form: design.confounder_form,
            centre,
        })
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> Draw {
        let a = self.sampler.sample(rng);
        let b = if self.fixation > 0.0 && rng.random::<f64>() < self.fixation {
            a
        } else {
            self.sampler.sample(rng)
        };
        let transmitted = if rng.random::<bool>() { a } else { b };
        let paternal = self.sampler.sample(rng);
        let allele = |h: usize| self.panel.allele(h, self.target);
        let gm = allele(a) + allele(b);
        let e: f64 = rng.sample(StandardNormal);
        Draw {
            mother: (a.min(b), a.max(b)),
            transmitted,
            paternal,
            gm,
            gmc: allele(transmitted),
            gpc: allele(paternal),
            x: self.eta * (self.form.apply(gm) - self.centre) + e,
        }
    }
}

fn linear_part(beta: &Beta, d: &Draw) -> f64 {
    let mut row = vec![0.0; beta.coef.len()];
    beta.spec.design_row(d.gm, d.gmc, d.gpc, &[d.x], &mut row);
    beta.dot(&row)
}

/// Intercept that makes the population disease risk equal the design
/// prevalence, by bisection over a fixed Monte Carlo sample.
pub fn solve_intercept(design: &SimDesign) -> Result<f64> {
    solve_intercept_with(design, INTERCEPT_DRAWS)
}

pub fn solve_intercept_with(design: &SimDesign, draws: usize) -> Result<f64> {
    let f = design.prevalence;
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::Prevalence(f));
    }
    if design.effects.is_null() {
        return Ok((f / (1.0 - f)).ln());
    }
    let pop = Population::new(design)?;
    let beta = design.true_beta(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(INTERCEPT_SEED);
    let offsets: Vec<f64> = (0..draws)
        .map(|_| linear_part(&beta, &pop.draw(&mut rng)))
        .collect();
    let risk = |b0: f64| offsets.iter().map(|o| expit(b0 + o)).sum::<f64>() / draws as f64;
    let (mut lo, mut hi) = (-60.0, 60.0);
    if !(risk(lo) < f && risk(hi) > f) {
        return Err(Error::Design(
            "intercept bracket does not contain the prevalence".into(),
        ));
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if risk(mid) < f {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Monte Carlo disease risk of the population model at a given intercept.
pub fn population_prevalence(
    design: &SimDesign,
    intercept: f64,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    let pop = Population::new(design)?;
    let beta = design.true_beta(intercept);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..draws)
        .map(|_| expit(linear_part(&beta, &pop.draw(&mut rng))))
        .sum::<f64>()
        / draws as f64)
}

/// True origins and haplotypes of one simulated family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub family_id: String,
    pub g_mc: u8,
    pub g_pc: u8,
    pub h_m1: String,
    pub h_m2: String,
    pub h_w: String,
    pub h_l: String,
}

pub fn write_truth<W: Write>(records: &[TruthRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<truth>", e))?;
    Ok(())
}

pub fn read_truth<R: Read>(input: R) -> Result<Vec<TruthRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let records: std::result::Result<Vec<TruthRecord>, _> = r.deserialize().collect();
    Ok(records?)
}

pub fn load_truth(path: impl AsRef<Path>) -> Result<Vec<TruthRecord>> {
    let file = std::fs::File::open(path.as_ref()).map_err(|e| Error::io(&path, e))?;
    read_truth(file)
}

/// Family id to true `(g_mc, g_pc)`.
pub fn known_origins(records: &[TruthRecord]) -> HashMap<String, KnownOrigin> {
    records
        .iter()
        .map(|r| {
            (
                r.family_id.clone(),
                KnownOrigin {
                    maternal: r.g_mc,
                    paternal: r.g_pc,
                },
            )
        })
        .collect()
}

/// A simulated cohort before and after child dropout.
#[derive(Debug, Clone)]
pub struct SimulatedCohort {
    /// After dropout (identical to `complete` when the rate is zero).
    pub cohort: CohortTable,
    pub complete: CohortTable,
    pub truth: Vec<TruthRecord>,
    pub intercept: f64,
    pub draws: u64,
}

/// Samples cases and controls from the population model until both quotas
/// are met, then applies child dropout from an independent stream.
pub fn simulate_cohort(design: &SimDesign) -> Result<SimulatedCohort> {
    let intercept = match design.intercept {
        Some(b0) => b0,
        None => solve_intercept(design)?,
    };
    let pop = Population::new(design)?;
    let beta = design.true_beta(intercept);
    let mut rng = ChaCha8Rng::seed_from_u64(design.seed);
    let haps = pop.panel.to_strings();
    let k = pop.panel.k();
    let genotype = |a: usize, b: usize| -> Vec<Option<u8>> {
        (0..k)
            .map(|s| Some(pop.panel.allele(a, s) + pop.panel.allele(b, s)))
            .collect()
    };
    let (mut cases, mut controls) = (0, 0);
    let mut families = Vec::with_capacity(design.n0 + design.n1);
    let mut truth = Vec::with_capacity(design.n0 + design.n1);
    let mut draws = 0u64;
    while cases < design.n1 || controls < design.n0 {
        if draws >= design.max_draws {
            return Err(Error::AccrualStalled {
                draws,
                cases,
                wanted: design.n1,
            });
        }
        draws += 1;
        let d = pop.draw(&mut rng);
        let y = rng.random::<f64>() < expit(linear_part(&beta, &d));
        if y && cases >= design.n1 || !y && controls >= design.n0 {
            continue;
        }
        if y {
            cases += 1;
        } else {
            controls += 1;
        }
        let id = format!("fam{:05}", families.len() + 1);
        let (a, b) = d.mother;
        families.push(FamilyRecord {
            family_id: id.clone(),
            status: y as u8,
            covariates: vec![d.x],
            mother: genotype(a, b),
            child: genotype(d.transmitted, d.paternal),
        });
        truth.push(TruthRecord {
            family_id: id,
            g_mc: d.gmc,
            g_pc: d.gpc,
            h_m1: haps[a].clone(),
            h_m2: haps[b].clone(),
            h_w: haps[d.transmitted].clone(),
            h_l: haps[d.paternal].clone(),
        });
    }
    let complete = CohortTable::new(
        families,
        design.snp_ids(),
        vec!["x".into()],
        design.target_index,
        design.prevalence,
    )?;
    let cohort = if design.child_missing_rate > 0.0 {
        let mut drop_rng = ChaCha8Rng::seed_from_u64(design.seed);
        drop_rng.set_stream(1);
        inject_child_missingness(&complete, design.child_missing_rate, &mut drop_rng)?
    } else {
        complete.clone()
    };
    Ok(SimulatedCohort {
        cohort,
        complete,
        truth,
        intercept,
        draws,
    })
}

/// Sets each child genotype missing independently with probability `rate`.
pub fn inject_child_missingness<R: Rng>(
    cohort: &CohortTable,
    rate: f64,
    rng: &mut R,
) -> Result<CohortTable> {
    let mut out = cohort.clone();
    for fam in &mut out.families {
        for g in &mut fam.child {
            if rng.random::<f64>() < rate {
                *g = None;
            }
        }
    }
    Ok(out)
}
