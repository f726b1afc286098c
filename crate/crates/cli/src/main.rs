//! `imprint`: fit parental-origin effect models to case-control mother-child
//! data, simulate cohorts, and run Monte Carlo replicate studies.

mod logger;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use imprint_core::cohort::{parse_cohort, write_cohort};
use imprint_core::haplotype::DEFAULT_RARE_FLOOR;
use imprint_core::pipeline::{analyze, AnalysisOptions, Method, Stage};
use imprint_core::replicate::{run_replicates, write_summary, ReplicateOptions};
use imprint_core::simulate::{
    known_origins, load_truth, population_prevalence, simulate_cohort, write_truth, SimDesign,
    INTERCEPT_DRAWS,
};
use imprint_core::{CohortSchema, FitOptions, RegressionSpec};

const EXIT_PARSE: u8 = 2;
const EXIT_ENUMERATION: u8 = 3;
const EXIT_FIT: u8 = 4;
const EXIT_INFERENCE: u8 = 5;

#[derive(Parser)]
#[command(
    name = "imprint",
    version,
    about = "Parental-origin effect estimation from case-control mother-child pairs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one method to a cohort file.
    Fit(FitArgs),
    /// Simulate one cohort from a design.
    Simulate(SimulateArgs),
    /// Simulate many cohorts and summarize every method's estimates.
    Replicate(ReplicateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Interaction {
    /// Maternal genotype by covariate.
    Gm,
    /// Child genotype by covariate.
    Gc,
}

#[derive(Args, Clone, Serialize)]
struct FitFlags {
    /// Maximum ECM cycles.
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    /// Convergence tolerance on the objective.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Haplotypes below this frequency are pooled away.
    #[arg(long, default_value_t = DEFAULT_RARE_FLOOR)]
    rare_floor: f64,
}

impl FitFlags {
    fn options(&self, seed: u64) -> FitOptions {
        FitOptions {
            max_iter: self.max_iter,
            tol_loglik: self.tol,
            rare_floor: self.rare_floor,
            seed,
            ..FitOptions::default()
        }
    }
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: imprint_core::Error| e.to_string())
}

fn spec_for(p: usize, interactions: &[Interaction]) -> RegressionSpec {
    RegressionSpec::main_effects(p).with_interactions(
        interactions.contains(&Interaction::Gm),
        interactions.contains(&Interaction::Gc),
    )
}

#[derive(Args, Serialize)]
struct FitArgs {
    /// Cohort file (CSV or TSV): family_id, y, covariates, m_<snp>/c_<snp> pairs.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Population prevalence of the disease.
    #[arg(long)]
    prevalence: f64,
    /// SNP whose parental-origin effect is estimated.
    #[arg(long)]
    target: String,
    /// SNPs used to resolve parental origin (default: every other SNP in the file).
    #[arg(long, value_delimiter = ',')]
    adjacent: Option<Vec<String>>,
    /// Maternal covariate columns (default: every non-genotype column).
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    #[arg(long, default_value = "rob-hap", value_parser = parse_method)]
    method: Method,
    #[arg(long, value_delimiter = ',')]
    interactions: Vec<Interaction>,
    #[command(flatten)]
    fit: FitFlags,
    /// Seed for randomized restarts.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Truth sidecar written by `simulate`; required by rob-com.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    /// Design JSON (default: the built-in reference design).
    #[arg(long)]
    design: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Overrides the design seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Serialize)]
struct ReplicateArgs {
    /// Design JSON (default: the built-in reference design).
    #[arg(long)]
    design: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 500)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Base seed; overrides the design seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',', default_value = "rob-com,rob-hap,rob-snp,logit-hap", value_parser = parse_method)]
    method: Vec<Method>,
    /// Prevalence given to the fitter (default: the design value).
    #[arg(long)]
    prevalence: Option<f64>,
    /// Interactions in the fitted model.
    #[arg(long, value_delimiter = ',')]
    interactions: Vec<Interaction>,
    #[command(flatten)]
    fit: FitFlags,
    /// Also fit rob-hap to each cohort before child dropout.
    #[arg(long)]
    complete_data: bool,
}

/// A failure with the exit status it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code,
            error: error.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure { code: 1, error }
    }
}

fn stage_code(stage: Stage) -> u8 {
    match stage {
        Stage::Parse => EXIT_PARSE,
        Stage::Enumeration => EXIT_ENUMERATION,
        Stage::Fit => EXIT_FIT,
        Stage::Inference => EXIT_INFERENCE,
    }
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: &'a C,
    config_hash: String,
    seed: u64,
    inputs: Vec<(String, String)>,
    outputs: Vec<&'static str>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_manifest<C: Serialize>(
    dir: &Path,
    command: &'static str,
    config: &C,
    seed: u64,
    inputs: Vec<(String, String)>,
    outputs: Vec<&'static str>,
) -> anyhow::Result<()> {
    let canonical = serde_json::to_string(config)?;
    let manifest = Manifest {
        tool: "imprint",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config,
        config_hash: sha256_hex(canonical.as_bytes()),
        seed,
        inputs,
        outputs,
    };
    write(
        dir,
        "manifest.json",
        serde_json::to_string_pretty(&manifest)? + "\n",
    )
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn create_out_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

fn load_design(path: Option<&Path>, seed: Option<u64>) -> Result<SimDesign, Failure> {
    let mut design = match path {
        Some(p) => SimDesign::load(p).map_err(|e| {
            Failure::new(
                EXIT_PARSE,
                anyhow!(e).context(format!("design {}", p.display())),
            )
        })?,
        None => SimDesign::reference(),
    };
    if let Some(s) = seed {
        design.seed = s;
    }
    design.validate().map_err(|e| Failure::new(EXIT_PARSE, e))?;
    Ok(design)
}

fn run_fit(args: &FitArgs) -> Result<(), Failure> {
    let parse_err = |e: imprint_core::Error| Failure::new(EXIT_PARSE, e);
    if !args.input.is_file() {
        return Err(Failure::new(
            EXIT_PARSE,
            anyhow!("input file {} does not exist", args.input.display()),
        ));
    }
    if args.method == Method::RobCom && args.truth.is_none() {
        return Err(Failure::new(
            EXIT_PARSE,
            anyhow!(
                "rob-com needs true parental origins; pass the simulator's truth file with --truth"
            ),
        ));
    }
    let input_bytes = fs::read(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))
        .map_err(|e| Failure::new(EXIT_PARSE, e))?;
    let mut schema = CohortSchema::from_file(&args.input).map_err(parse_err)?;
    if let Some(adjacent) = &args.adjacent {
        let mut ids = vec![args.target.clone()];
        ids.extend(adjacent.iter().cloned());
        schema = schema.with_snps(&ids).map_err(parse_err)?;
    }
    if let Some(cov) = &args.covariates {
        schema = schema.with_covariates(cov).map_err(parse_err)?;
    }
    let cohort =
        parse_cohort(&args.input, &schema, args.prevalence, &args.target).map_err(parse_err)?;
    log::info!(
        "read {} families ({} cases, {} controls), {} SNPs, covariates [{}]",
        cohort.n(),
        cohort.n1(),
        cohort.n0(),
        cohort.k(),
        cohort.covariate_names.join(", ")
    );
    let mut options = AnalysisOptions::new(spec_for(cohort.p(), &args.interactions));
    options.fit = args.fit.options(args.seed);
    let mut inputs = vec![(args.input.display().to_string(), sha256_hex(&input_bytes))];
    if args.method == Method::RobCom {
        let path = args.truth.as_ref().expect("checked above");
        let truth = load_truth(path).map_err(parse_err)?;
        inputs.push((
            path.display().to_string(),
            sha256_hex(&fs::read(path).unwrap_or_default()),
        ));
        options.known = Some(known_origins(&truth));
    } else if args.truth.is_some() {
        log::warn!("--truth is only used by rob-com; ignoring it");
    }

    let analysis = analyze(&cohort, args.method, &options).map_err(|e| Failure {
        code: stage_code(e.stage),
        error: anyhow!(e),
    })?;
    let report = &analysis.report;
    if let Some(im) = report.coefficient("im") {
        log::info!(
            "im = {:.4} (se {:.4}, 95% CI {:.4} to {:.4}, p = {:.3e})",
            im.estimate,
            im.se,
            im.ci_lo,
            im.ci_hi,
            im.p
        );
    }

    create_out_dir(&args.out_dir)?;
    write(
        &args.out_dir,
        "report.json",
        serde_json::to_string_pretty(report).map_err(anyhow::Error::from)? + "\n",
    )?;
    let mut tsv = Vec::new();
    report.write_tsv(&mut tsv).map_err(anyhow::Error::from)?;
    write(&args.out_dir, "report.tsv", tsv)?;
    write_manifest(
        &args.out_dir,
        "fit",
        args,
        args.seed,
        inputs,
        vec!["report.json", "report.tsv", "run.log"],
    )?;
    write(&args.out_dir, "run.log", logger::contents())?;
    let mut stdout = Vec::new();
    report.write_tsv(&mut stdout).map_err(anyhow::Error::from)?;
    print!("{}", String::from_utf8_lossy(&stdout));
    Ok(())
}

fn run_simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let design = load_design(args.design.as_deref(), args.seed)?;
    let sim = simulate_cohort(&design).map_err(|e| Failure::new(1, e))?;
    let achieved = population_prevalence(&design, sim.intercept, INTERCEPT_DRAWS, design.seed)
        .map_err(|e| Failure::new(1, e))?;
    log::info!(
        "intercept {:.6}; {} population draws for {} cases and {} controls",
        sim.intercept,
        sim.draws,
        sim.cohort.n1(),
        sim.cohort.n0()
    );

    create_out_dir(&args.out_dir)?;
    let mut cohort = Vec::new();
    write_cohort(&sim.cohort, &mut cohort, b',').map_err(|e| Failure::new(1, e))?;
    write(&args.out_dir, "cohort.csv", cohort)?;
    let mut truth = Vec::new();
    write_truth(&sim.truth, &mut truth).map_err(|e| Failure::new(1, e))?;
    write(&args.out_dir, "truth.csv", truth)?;
    let inputs = args
        .design
        .iter()
        .map(|p| {
            (
                p.display().to_string(),
                sha256_hex(&fs::read(p).unwrap_or_default()),
            )
        })
        .collect();
    #[derive(Serialize)]
    struct Config<'a> {
        args: &'a SimulateArgs,
        design: &'a SimDesign,
    }
    write_manifest(
        &args.out_dir,
        "simulate",
        &Config {
            args,
            design: &design,
        },
        design.seed,
        inputs,
        vec!["cohort.csv", "truth.csv", "run.log"],
    )?;
    write(&args.out_dir, "run.log", logger::contents())?;
    println!(
        "achieved prevalence {achieved:.6} (target {}, intercept {:.6}); wrote {} families ({} cases)",
        design.prevalence,
        sim.intercept,
        sim.cohort.n(),
        sim.cohort.n1()
    );
    Ok(())
}

fn run_replicate(args: &ReplicateArgs) -> Result<(), Failure> {
    let design = load_design(args.design.as_deref(), args.seed)?;
    let mut options = ReplicateOptions::new(args.method.clone());
    options.jobs = args.jobs.max(1);
    options.fit_prevalence = args.prevalence;
    options.fit_spec = Some(spec_for(1, &args.interactions));
    options.complete_data = args.complete_data;
    options.analysis.fit = args.fit.options(design.seed);
    options
        .analysis
        .fit
        .validate()
        .map_err(|e| Failure::new(EXIT_PARSE, e))?;
    let run = run_replicates(&design, args.reps, &options).map_err(|e| Failure::new(1, e))?;
    let failed: usize = run
        .records
        .iter()
        .map(|r| r.results.iter().filter(|(_, res)| res.is_err()).count())
        .sum();
    log::info!(
        "{} replicates, intercept {:.6}, {} failed fits",
        args.reps,
        run.intercept,
        failed
    );
    if failed > 0 {
        log::warn!("{failed} fits failed across all replicates; see n_failed in summary.tsv");
    }

    create_out_dir(&args.out_dir)?;
    let mut tsv = Vec::new();
    write_summary(&run.summary, &mut tsv).map_err(anyhow::Error::from)?;
    write(&args.out_dir, "summary.tsv", &tsv)?;
    let inputs = args
        .design
        .iter()
        .map(|p| {
            (
                p.display().to_string(),
                sha256_hex(&fs::read(p).unwrap_or_default()),
            )
        })
        .collect();
    #[derive(Serialize)]
    struct Config<'a> {
        args: &'a ReplicateArgs,
        design: &'a SimDesign,
    }
    write_manifest(
        &args.out_dir,
        "replicate",
        &Config {
            args,
            design: &design,
        },
        design.seed,
        inputs,
        vec!["summary.tsv", "run.log"],
    )?;
    write(&args.out_dir, "run.log", logger::contents())?;
    print!("{}", String::from_utf8_lossy(&tsv));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    logger::install();
    let result = match &cli.command {
        Command::Fit(a) => run_fit(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Replicate(a) => run_replicate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
