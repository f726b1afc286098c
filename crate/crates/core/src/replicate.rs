//! Monte Carlo replicate harness: simulate, fit every requested method, and
//! summarize bias, spread, standard-error calibration, coverage and power.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::FitReport;
use crate::penetrance::RegressionSpec;
use crate::pipeline::{analyze, AnalysisOptions, Method};
use crate::simulate::{known_origins, simulate_cohort, solve_intercept, SimDesign};

/// Label used for ROB-HAP fitted to the cohort before child dropout.
pub const COMPLETE_DATA_LABEL: &str = "rob-hap-full";

/// Significance level for the rejection-rate column.
pub const ALPHA: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct ReplicateOptions {
    pub methods: Vec<Method>,
    pub jobs: usize,
    /// Prevalence given to the fitter; the design value when `None`.
    pub fit_prevalence: Option<f64>,
    /// Fitted model; main effects of the single covariate when `None`.
    pub fit_spec: Option<RegressionSpec>,
    /// Also fit ROB-HAP to the cohort before dropout.
    pub complete_data: bool,
    pub analysis: AnalysisOptions,
}

impl ReplicateOptions {
    pub fn new(methods: Vec<Method>) -> Self {
        ReplicateOptions {
            methods,
            jobs: 1,
            fit_prevalence: None,
            fit_spec: None,
            complete_data: false,
            analysis: AnalysisOptions::new(RegressionSpec::main_effects(1)),
        }
    }
}

/// Seed of replicate `index`, derived from the base seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub seed: u64,
    /// One entry per fitted arm, in request order.
    pub results: Vec<(String, std::result::Result<FitReport, String>)>,
}

impl ReplicateRecord {
    pub fn get(&self, label: &str) -> Option<&FitReport> {
        self.results
            .iter()
            .find(|(l, _)| l == label)
            .and_then(|(_, r)| r.as_ref().ok())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub coefficient: String,
    pub true_value: f64,
    pub bias: f64,
    pub emp_se: f64,
    pub mean_see: f64,
    pub coverage: f64,
    pub reject_rate: f64,
    pub n_ok: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone)]
pub struct ReplicateRun {
    pub intercept: f64,
    pub records: Vec<ReplicateRecord>,
    pub summary: Vec<SummaryRow>,
}

impl ReplicateRun {
    pub fn row(&self, method: &str, coefficient: &str) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.method == method && r.coefficient == coefficient)
    }

    /// Estimates of one coefficient from one arm, over successful replicates.
    pub fn estimates(&self, method: &str, coefficient: &str) -> Vec<f64> {
        self.records
            .iter()
            .filter_map(|r| r.get(method))
            .filter_map(|rep| rep.coefficient(coefficient).map(|c| c.estimate))
            .collect()
    }
}

fn arms(options: &ReplicateOptions) -> Vec<String> {
    let mut labels: Vec<String> = options.methods.iter().map(|m| m.to_string()).collect();
    if options.complete_data {
        labels.push(COMPLETE_DATA_LABEL.into());
    }
    labels
}

fn run_one(design: &SimDesign, index: usize, options: &ReplicateOptions) -> ReplicateRecord {
    let seed = derive_seed(design.seed, index as u64);
    let mut d = design.clone();
    d.seed = seed;
    let labels = arms(options);
    let fail_all = |msg: String| ReplicateRecord {
        replicate: index,
        seed,
        results: labels
            .iter()
            .map(|l| (l.clone(), Err(msg.clone())))
            .collect(),
    };
    let sim = match simulate_cohort(&d) {
        Ok(s) => s,
        Err(e) => return fail_all(format!("simulation: {e}")),
    };
    let prevalence = options.fit_prevalence.unwrap_or(design.prevalence);
    let (cohort, complete) = match (
        sim.cohort.with_prevalence(prevalence),
        sim.complete.with_prevalence(prevalence),
    ) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return fail_all(e.to_string()),
    };
    let mut analysis = options.analysis.clone();
    if let Some(spec) = options.fit_spec {
        analysis.spec = spec;
    }
    if options.methods.contains(&Method::RobCom) {
        analysis.known = Some(known_origins(&sim.truth));
    }
    let mut results = Vec::with_capacity(labels.len());
    for m in &options.methods {
        let r = analyze(&cohort, *m, &analysis)
            .map(|a| a.report)
            .map_err(|e| e.to_string());
        results.push((m.to_string(), r));
    }
    if options.complete_data {
        let r = analyze(&complete, Method::RobHap, &analysis)
            .map(|a| a.report)
            .map_err(|e| e.to_string());
        results.push((COMPLETE_DATA_LABEL.into(), r));
    }
    ReplicateRecord {
        replicate: index,
        seed,
        results,
    }
}

/// Simulates `reps` cohorts and fits each requested method to every one.
/// Replicate seeds derive from the design seed, so results do not depend on
/// the number of worker threads.
pub fn run_replicates(
    design: &SimDesign,
    reps: usize,
    options: &ReplicateOptions,
) -> Result<ReplicateRun> {
    design.validate()?;
    if reps == 0 {
        return Err(Error::Options("reps must be at least 1".into()));
    }
    let intercept = match design.intercept {
        Some(b0) => b0,
        None => solve_intercept(design)?,
    };
    let mut fixed = design.clone();
    fixed.intercept = Some(intercept);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs.max(1))
        .build()
        .map_err(|e| Error::Options(format!("thread pool: {e}")))?;
    let records: Vec<ReplicateRecord> = pool.install(|| {
        (0..reps)
            .into_par_iter()
            .map(|i| run_one(&fixed, i, options))
            .collect()
    });
    for r in &records {
        for (label, res) in &r.results {
            if let Err(e) = res {
                log::warn!("replicate {} ({label}) failed: {e}", r.replicate);
            }
        }
    }
    let summary = summarize(&records, &fixed, intercept, &arms(options));
    Ok(ReplicateRun {
        intercept,
        records,
        summary,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return f64::NAN;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Per arm and non-intercept coefficient summary statistics.
pub fn summarize(
    records: &[ReplicateRecord],
    design: &SimDesign,
    intercept: f64,
    labels: &[String],
) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for label in labels {
        let reports: Vec<&FitReport> = records.iter().filter_map(|r| r.get(label)).collect();
        let n_failed = records.len() - reports.len();
        let Some(first) = reports.first() else {
            rows.push(SummaryRow {
                method: label.clone(),
                coefficient: "-".into(),
                true_value: f64::NAN,
                bias: f64::NAN,
                emp_se: f64::NAN,
                mean_see: f64::NAN,
                coverage: f64::NAN,
                reject_rate: f64::NAN,
                n_ok: 0,
                n_failed,
            });
            continue;
        };
        for name in first
            .coefficients
            .iter()
            .map(|c| &c.name)
            .filter(|n| *n != "intercept")
        {
            let truth = design.true_value(name, intercept);
            let coefs: Vec<_> = reports.iter().filter_map(|r| r.coefficient(name)).collect();
            let est: Vec<f64> = coefs.iter().map(|c| c.estimate).collect();
            let see: Vec<f64> = coefs.iter().map(|c| c.se).collect();
            let k = coefs.len() as f64;
            rows.push(SummaryRow {
                method: label.clone(),
                coefficient: name.clone(),
                true_value: truth,
                bias: mean(&est) - truth,
                emp_se: sd(&est),
                mean_see: mean(&see),
                coverage: coefs.iter().filter(|c| c.covers(truth)).count() as f64 / k,
                reject_rate: coefs.iter().filter(|c| c.p < ALPHA).count() as f64 / k,
                n_ok: coefs.len(),
                n_failed,
            });
        }
    }
    rows
}

pub fn write_summary<W: Write>(rows: &[SummaryRow], mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "method\tcoefficient\ttrue\tbias\temp_se\tmean_see\tcoverage\treject_rate\tn_ok\tn_failed"
    )?;
    for r in rows {
        writeln!(
            out,
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.4}\t{:.4}\t{}\t{}",
            r.method,
            r.coefficient,
            r.true_value,
            r.bias,
            r.emp_se,
            r.mean_see,
            r.coverage,
            r.reject_rate,
            r.n_ok,
            r.n_failed
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_design() -> SimDesign {
        let mut d = SimDesign::reference();
        d.intercept = Some(-4.9);
        d.n0 = 120;
        d.n1 = 120;
        d
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| derive_seed(7, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }

    #[test]
    fn single_replicate_summary_is_the_fit() {
        let d = quick_design();
        let run = run_replicates(&d, 1, &ReplicateOptions::new(vec![Method::RobHap])).unwrap();
        let report = run.records[0].get("rob-hap").unwrap();
        let im = report.coefficient("im").unwrap();
        let row = run.row("rob-hap", "im").unwrap();
        assert_eq!(row.bias, im.estimate - d.effects.im);
        assert_eq!(row.mean_see, im.se);
        assert_eq!(row.n_ok, 1);
        assert!(row.emp_se.is_nan());
        let names: Vec<&str> = run.summary.iter().map(|r| r.coefficient.as_str()).collect();
        assert_eq!(names, ["g_m", "g_c", "im", "x"]);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let d = quick_design();
        let mut o = ReplicateOptions::new(vec![Method::RobHap]);
        let a = run_replicates(&d, 3, &o).unwrap();
        o.jobs = 2;
        let b = run_replicates(&d, 3, &o).unwrap();
        assert_eq!(a.summary, b.summary);
        let mut out = Vec::new();
        write_summary(&a.summary, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 5);
        for line in text.lines().skip(1) {
            let rate: f64 = line.split('\t').nth(7).unwrap().parse().unwrap();
            assert!((0.0..=1.0).contains(&rate));
        }
    }
}
