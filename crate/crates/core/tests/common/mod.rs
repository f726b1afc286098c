//! Random instances shared by the integration tests.

use imprint_core::{Beta, CohortTable, FamilyRecord, HaplotypePanel, RegressionSpec};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Random panel over `k` SNPs with `s` distinct haplotypes.
pub fn random_panel(rng: &mut ChaCha8Rng, k: usize, s: usize) -> HaplotypePanel {
    let mut codes: Vec<u32> = (0..1u32 << k).collect();
    for i in (1..codes.len()).rev() {
        codes.swap(i, rng.random_range(0..=i));
    }
    codes.truncate(s);
    let raw: Vec<f64> = (0..s).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let strings: Vec<String> = codes
        .iter()
        .map(|c| {
            (0..k)
                .map(|b| if c >> b & 1 == 1 { '1' } else { '0' })
                .collect()
        })
        .collect();
    HaplotypePanel::from_strings(&strings, raw.iter().map(|r| r / total).collect()).unwrap()
}

pub fn draw_hap(rng: &mut ChaCha8Rng, mu: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (s, m) in mu.iter().enumerate() {
        acc += m;
        if u < acc {
            return s;
        }
    }
    mu.len() - 1
}

pub fn random_cohort(
    rng: &mut ChaCha8Rng,
    panel: &HaplotypePanel,
    n: usize,
    f: f64,
) -> CohortTable {
    let k = panel.k();
    let mu = panel.frequencies();
    let families = (0..n)
        .map(|u| {
            let (a, b, c) = (draw_hap(rng, mu), draw_hap(rng, mu), draw_hap(rng, mu));
            FamilyRecord {
                family_id: format!("r{u}"),
                status: match u {
                    0 => 1,
                    1 => 0,
                    _ => rng.random_range(0..2),
                },
                covariates: vec![StandardNormal.sample(rng)],
                mother: (0..k)
                    .map(|l| Some(panel.allele(a, l) + panel.allele(b, l)))
                    .collect(),
                child: (0..k)
                    .map(|l| Some(panel.allele(a, l) + panel.allele(c, l)))
                    .collect(),
            }
        })
        .collect();
    let ids = (0..k).map(|l| format!("s{l}")).collect();
    let target = rng.random_range(0..k);
    CohortTable::new(families, ids, vec!["x".into()], target, f).unwrap()
}

pub fn random_beta(rng: &mut ChaCha8Rng) -> Beta {
    let spec = RegressionSpec::main_effects(1);
    let coef = (0..spec.dim())
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            0.7 * z
        })
        .collect();
    Beta::new(spec, coef).unwrap()
}
