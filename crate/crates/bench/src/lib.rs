//! Fixtures shared by the benchmarks.

use imprint_core::simulate::{simulate_cohort, SimDesign};
use imprint_core::{CohortTable, HaplotypePanel, LikelihoodContext, ModelParams};

/// Intercept of the reference design, fixed so fixtures skip the intercept search.
pub const REFERENCE_INTERCEPT: f64 = -5.725;

pub struct Fixture {
    pub cohort: CohortTable,
    pub panel: HaplotypePanel,
    pub context: LikelihoodContext,
    pub params: ModelParams,
}

/// A simulated reference cohort with `n_per_arm` cases and as many controls,
/// with the likelihood context at the generating parameters.
pub fn reference(n_per_arm: usize, seed: u64) -> Fixture {
    let mut design = SimDesign::reference();
    design.intercept = Some(REFERENCE_INTERCEPT);
    design.n0 = n_per_arm;
    design.n1 = n_per_arm;
    design.seed = seed;
    let sim = simulate_cohort(&design).expect("reference design simulates");
    let panel = design.truth_panel().expect("bundled panel is valid");
    let context =
        LikelihoodContext::new(&sim.cohort, &panel, design.true_spec(), None).expect("context");
    let params = ModelParams {
        beta: design.true_beta(REFERENCE_INTERCEPT),
        mu: panel.frequencies().to_vec(),
    };
    Fixture {
        cohort: sim.cohort,
        panel,
        context,
        params,
    }
}
