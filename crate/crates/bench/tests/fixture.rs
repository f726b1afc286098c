use imprint_bench::reference;
use imprint_core::likelihood::{log_lmp, score_lmp};

#[test]
fn fixture_is_balanced_and_evaluable() {
    let fx = reference(50, 3);
    assert_eq!(fx.cohort.n(), 100);
    assert_eq!(fx.context.n1, 50);
    assert!(log_lmp(&fx.params, &fx.context).unwrap().is_finite());
    let score = score_lmp(&fx.params, &fx.context).unwrap();
    assert_eq!(score.total.len(), fx.context.dim());
    assert_eq!(fx.panel.len(), fx.params.mu.len());
}
