//! Candidate haplotypes, their frequencies, and the per-family sets of
//! haplotype configurations compatible with observed genotypes.
//!
//! A haplotype over `K` SNPs is stored as a bitmask: bit `k` is the allele at
//! SNP `k` (1 = minor allele).

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cohort::{CohortTable, FamilyRecord, Genotype};
use crate::error::{Error, Result};

/// Largest supported number of SNPs in one haplotype.
pub const MAX_SNPS: usize = 20;
/// Frequencies are kept at or above this value so the panel stays on the open simplex.
pub const FREQUENCY_FLOOR: f64 = 1e-8;
/// Default cutoff for discarding rare haplotypes.
pub const DEFAULT_RARE_FLOOR: f64 = 0.01;
/// Default cap on the number of candidate haplotypes kept after enumeration.
pub const DEFAULT_MAX_HAPLOTYPES: usize = 64;

// Individuals with more free (heterozygous or missing) loci than this are not
// used as a source of candidates.
const MAX_FREE_BITS: u32 = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct HaplotypePanel {
    k: usize,
    haplotypes: Vec<u32>,
    frequencies: Vec<f64>,
}

impl HaplotypePanel {
    pub fn new(k: usize, haplotypes: Vec<u32>, frequencies: Vec<f64>) -> Result<Self> {
        if k == 0 || k > MAX_SNPS {
            return Err(Error::Enumeration(format!(
                "panel needs 1..={MAX_SNPS} SNPs, got {k}"
            )));
        }
        if haplotypes.is_empty() || haplotypes.len() != frequencies.len() {
            return Err(Error::Enumeration(
                "panel needs matching non-empty haplotype and frequency lists".into(),
            ));
        }
        let distinct: BTreeSet<u32> = haplotypes.iter().copied().collect();
        if distinct.len() != haplotypes.len() {
            return Err(Error::Enumeration("duplicate haplotypes in panel".into()));
        }
        if haplotypes.iter().any(|&h| h >> k != 0) {
            return Err(Error::Enumeration(
                "haplotype has alleles beyond K SNPs".into(),
            ));
        }
        if frequencies.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
            return Err(Error::Enumeration(
                "haplotype frequencies must be positive".into(),
            ));
        }
        let total: f64 = frequencies.iter().sum();
        let frequencies = frequencies.iter().map(|m| m / total).collect();
        Ok(HaplotypePanel {
            k,
            haplotypes,
            frequencies,
        })
    }

    /// Parses allele strings such as `"01100"` (character `k` = SNP `k`).
    pub fn from_strings<S: AsRef<str>>(alleles: &[S], frequencies: Vec<f64>) -> Result<Self> {
        let k = alleles.first().map_or(0, |s| s.as_ref().len());
        let mut haplotypes = Vec::with_capacity(alleles.len());
        for s in alleles {
            let s = s.as_ref();
            if s.len() != k {
                return Err(Error::Enumeration(format!(
                    "haplotype `{s}` has wrong length"
                )));
            }
            let mut h = 0u32;
            for (bit, ch) in s.chars().enumerate() {
                match ch {
                    '0' => {}
                    '1' => h |= 1 << bit,
                    _ => return Err(Error::Enumeration(format!("bad allele in `{s}`"))),
                }
            }
            haplotypes.push(h);
        }
        Self::new(k, haplotypes, frequencies)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of haplotypes `S`.
    pub fn len(&self) -> usize {
        self.haplotypes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.haplotypes.is_empty()
    }

    pub fn haplotypes(&self) -> &[u32] {
        &self.haplotypes
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn allele(&self, s: usize, locus: usize) -> u8 {
        ((self.haplotypes[s] >> locus) & 1) as u8
    }

    /// Allele carried by each haplotype at `locus`.
    pub fn alleles_at(&self, locus: usize) -> Vec<u8> {
        (0..self.len()).map(|s| self.allele(s, locus)).collect()
    }

    pub fn to_strings(&self) -> Vec<String> {
        self.haplotypes
            .iter()
            .map(|&h| {
                (0..self.k)
                    .map(|b| if h >> b & 1 == 1 { '1' } else { '0' })
                    .collect()
            })
            .collect()
    }

    /// Same haplotypes with new frequencies.
    pub fn with_frequencies(&self, mu: Vec<f64>) -> Result<Self> {
        Self::new(self.k, self.haplotypes.clone(), mu)
    }

    /// Collapses the panel onto a single SNP, summing frequencies per allele.
    pub fn project(&self, locus: usize) -> Result<Self> {
        let mut mass = [0.0; 2];
        for s in 0..self.len() {
            mass[self.allele(s, locus) as usize] += self.frequencies[s];
        }
        let (haps, freqs): (Vec<u32>, Vec<f64>) = [0u32, 1]
            .into_iter()
            .zip(mass)
            .filter(|&(_, m)| m > 0.0)
            .unzip();
        Self::new(1, haps, freqs)
    }

    pub fn to_file_format(&self) -> PanelFile {
        PanelFile {
            haplotypes: self.to_strings(),
            frequencies: self.frequencies.clone(),
        }
    }
}

/// JSON form of a panel: allele strings plus frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelFile {
    pub haplotypes: Vec<String>,
    pub frequencies: Vec<f64>,
}

impl PanelFile {
    pub fn into_panel(self) -> Result<HaplotypePanel> {
        HaplotypePanel::from_strings(&self.haplotypes, self.frequencies)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Observed-genotype constraint on a pair of haplotypes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GenotypeMask {
    hom_ref: u32,
    het: u32,
    hom_alt: u32,
}

impl GenotypeMask {
    pub fn new(genotypes: &[Genotype]) -> Self {
        let mut m = GenotypeMask::default();
        for (bit, g) in genotypes.iter().enumerate() {
            match g {
                Some(0) => m.hom_ref |= 1 << bit,
                Some(1) => m.het |= 1 << bit,
                Some(2) => m.hom_alt |= 1 << bit,
                _ => {}
            }
        }
        m
    }

    pub fn observed(&self) -> u32 {
        self.hom_ref | self.het | self.hom_alt
    }

    /// Whether `a + b` reproduces the genotype at every observed locus.
    #[inline]
    pub fn admits(&self, a: u32, b: u32) -> bool {
        (a | b) & self.hom_ref == 0
            && a & b & self.hom_alt == self.hom_alt
            && (a ^ b) & self.het == self.het
    }
}

fn for_each_submask(mask: u32, mut f: impl FnMut(u32)) {
    let mut sub = mask;
    loop {
        f(sub);
        if sub == 0 {
            break;
        }
        sub = (sub - 1) & mask;
    }
}

fn candidates_from(genotypes: &[Genotype], k: usize, out: &mut BTreeSet<u32>) {
    let mask = GenotypeMask::new(genotypes);
    let full = if k == 32 { u32::MAX } else { (1u32 << k) - 1 };
    let free = full & !(mask.hom_ref | mask.hom_alt);
    if free.count_ones() > MAX_FREE_BITS {
        return;
    }
    for_each_submask(free, |sub| {
        out.insert(mask.hom_alt | sub);
    });
}

/// All haplotypes consistent with some phasing of an observed individual
/// (mothers and children pooled), keeping at most `max_haplotypes` of them by
/// estimated frequency. Frequencies come from [`init_frequencies`].
pub fn enumerate_panel(cohort: &CohortTable, max_haplotypes: usize) -> Result<HaplotypePanel> {
    let k = cohort.k();
    if k == 0 || k > MAX_SNPS {
        return Err(Error::Enumeration(format!(
            "need 1..={MAX_SNPS} SNPs, got {k}"
        )));
    }
    if max_haplotypes == 0 {
        return Err(Error::Options("max_haplotypes must be at least 1".into()));
    }
    let mut candidates = BTreeSet::new();
    let individuals = cohort.families.iter().flat_map(|f| [&f.mother, &f.child]);
    for g in individuals
        .clone()
        .filter(|g| g.iter().all(Option::is_some))
    {
        candidates_from(g, k, &mut candidates);
    }
    if candidates.is_empty() {
        // nobody fully typed: fall back to partially observed individuals
        for g in individuals.filter(|g| g.iter().any(Option::is_some)) {
            candidates_from(g, k, &mut candidates);
        }
    }
    if candidates.is_empty() {
        return Err(Error::Enumeration(
            "no observed individual yields a haplotype".into(),
        ));
    }
    let s = candidates.len();
    let uniform = HaplotypePanel::new(k, candidates.into_iter().collect(), vec![1.0; s])?;
    let mu = init_frequencies(cohort, &uniform)?;
    if s <= max_haplotypes {
        return uniform.with_frequencies(mu);
    }
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| mu[b].total_cmp(&mu[a]).then(a.cmp(&b)));
    let mut keep: Vec<usize> = order[..max_haplotypes].to_vec();
    keep.sort_unstable();
    HaplotypePanel::new(
        k,
        keep.iter().map(|&i| uniform.haplotypes[i]).collect(),
        keep.iter().map(|&i| mu[i]).collect(),
    )
}

/// Haplotype frequencies by the standard EM for unphased genotypes of unrelated
/// individuals, using mothers only.
pub fn init_frequencies(cohort: &CohortTable, panel: &HaplotypePanel) -> Result<Vec<f64>> {
    let s = panel.len();
    if s == 1 {
        return Ok(vec![1.0]);
    }
    if cohort.k() != panel.k() {
        return Err(Error::Shape(format!(
            "panel has {} SNPs but cohort has {}",
            panel.k(),
            cohort.k()
        )));
    }
    let haps = panel.haplotypes();
    // compatible unordered pairs per mother, with the 2x multiplicity of i != j
    let mut pair_lists: Vec<Vec<(usize, usize, f64)>> = Vec::new();
    for fam in &cohort.families {
        let mask = GenotypeMask::new(&fam.mother);
        if mask.observed() == 0 {
            continue;
        }
        let mut pairs = Vec::new();
        for i in 0..s {
            for j in i..s {
                if mask.admits(haps[i], haps[j]) {
                    pairs.push((i, j, if i == j { 1.0 } else { 2.0 }));
                }
            }
        }
        if !pairs.is_empty() {
            pair_lists.push(pairs);
        }
    }
    if pair_lists.is_empty() {
        return Err(Error::Enumeration(
            "no mother is compatible with any haplotype pair in the panel".into(),
        ));
    }
    let m = pair_lists.len() as f64;
    let mut mu = vec![1.0 / s as f64; s];
    let mut counts = vec![0.0; s];
    for _ in 0..5000 {
        counts.iter_mut().for_each(|c| *c = 0.0);
        for pairs in &pair_lists {
            let total: f64 = pairs.iter().map(|&(i, j, c)| c * mu[i] * mu[j]).sum();
            if total <= 0.0 {
                continue;
            }
            for &(i, j, c) in pairs {
                let w = c * mu[i] * mu[j] / total;
                counts[i] += w;
                counts[j] += w;
            }
        }
        let next: Vec<f64> = counts.iter().map(|c| c / (2.0 * m)).collect();
        let change = next
            .iter()
            .zip(&mu)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        mu = next;
        if change < 1e-10 {
            break;
        }
    }
    if mu.iter().any(|&x| x > 1.0 - 1e-6) {
        log::warn!("haplotype frequency EM is degenerate: all mass on one haplotype");
    }
    for x in &mut mu {
        *x = x.max(FREQUENCY_FLOOR);
    }
    let total: f64 = mu.iter().sum();
    Ok(mu.iter().map(|x| x / total).collect())
}

/// Drops haplotypes with frequency below `floor` and renormalizes.
pub fn prune_rare(panel: &HaplotypePanel, floor: f64) -> Result<HaplotypePanel> {
    if !(0.0..=0.1).contains(&floor) {
        return Err(Error::Options(format!(
            "rare-haplotype floor {floor} outside [0, 0.1]"
        )));
    }
    let (haps, freqs): (Vec<u32>, Vec<f64>) = panel
        .haplotypes
        .iter()
        .zip(&panel.frequencies)
        .filter(|&(_, &m)| m >= floor)
        .map(|(&h, &m)| (h, m))
        .unzip();
    if haps.is_empty() {
        return Err(Error::Enumeration(format!(
            "pruning at floor {floor} removes every haplotype"
        )));
    }
    HaplotypePanel::new(panel.k, haps, freqs)
}

/// Minor-allele frequency at the target SNP implied by the panel.
pub fn target_maf(panel: &HaplotypePanel, target_index: usize) -> f64 {
    maf_from(&panel.alleles_at(target_index), panel.frequencies())
}

pub(crate) fn maf_from(target_alleles: &[u8], mu: &[f64]) -> f64 {
    target_alleles
        .iter()
        .zip(mu)
        .filter(|(&a, _)| a == 1)
        .map(|(_, m)| m)
        .sum()
}

/// Hardy-Weinberg probability of target genotype `g` at allele frequency `theta`.
#[inline]
pub fn hwe_genotype_prob(theta: f64, g: u8) -> f64 {
    match g {
        0 => (1.0 - theta) * (1.0 - theta),
        1 => 2.0 * theta * (1.0 - theta),
        _ => theta * theta,
    }
}

pub fn genotype_prior(panel: &HaplotypePanel, target_index: usize, g: u8) -> f64 {
    hwe_genotype_prob(target_maf(panel, target_index), g)
}

/// Maternal diplotype `{i, j}` (unordered, `i <= j`), transmitted maternal
/// haplotype `w` (one of `i`, `j`), and paternal haplotype `l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration {
    pub i: usize,
    pub j: usize,
    pub w: usize,
    pub l: usize,
}

impl Configuration {
    /// The maternal haplotype that was not transmitted.
    pub fn untransmitted(&self) -> usize {
        if self.w == self.i {
            self.j
        } else {
            self.i
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigSet {
    pub family_id: String,
    pub configs: Vec<Configuration>,
    pub maternal_only: bool,
}

/// Every configuration whose maternal pair reproduces the observed maternal
/// genotypes and whose transmitted/paternal pair reproduces the observed child
/// genotypes. With `maternal_only`, the child genotypes are ignored.
pub fn compatible_configs(
    family: &FamilyRecord,
    panel: &HaplotypePanel,
    maternal_only: bool,
) -> Result<ConfigSet> {
    if family.mother.len() != panel.k() || family.child.len() != panel.k() {
        return Err(Error::Shape(format!(
            "family {} has {} SNPs but panel has {}",
            family.family_id,
            family.mother.len(),
            panel.k()
        )));
    }
    let mother = GenotypeMask::new(&family.mother);
    let child = if maternal_only {
        GenotypeMask::default()
    } else {
        GenotypeMask::new(&family.child)
    };
    let haps = panel.haplotypes();
    let s = haps.len();
    let mut configs = Vec::new();
    for i in 0..s {
        for j in i..s {
            if !mother.admits(haps[i], haps[j]) {
                continue;
            }
            let transmitted: &[usize] = if i == j { &[i] } else { &[i, j] };
            for &w in transmitted {
                for l in 0..s {
                    if child.admits(haps[w], haps[l]) {
                        configs.push(Configuration { i, j, w, l });
                    }
                }
            }
        }
    }
    if configs.is_empty() {
        return Err(Error::Enumeration(format!(
            "family {} has no configuration compatible with the panel",
            family.family_id
        )));
    }
    Ok(ConfigSet {
        family_id: family.family_id.clone(),
        configs,
        maternal_only,
    })
}

/// Prior probability `mu_i * mu_j * mu_l` of a configuration.
pub fn config_prior(cfg: &Configuration, panel: &HaplotypePanel) -> f64 {
    let mu = panel.frequencies();
    mu[cfg.i] * mu[cfg.j] * mu[cfg.l]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fam(mother: &[u8], child: &[u8]) -> FamilyRecord {
        FamilyRecord {
            family_id: "f".into(),
            status: 1,
            covariates: vec![],
            mother: mother.iter().map(|&g| Some(g)).collect(),
            child: child.iter().map(|&g| Some(g)).collect(),
        }
    }

    fn cohort(pairs: &[(&[u8], &[u8])]) -> CohortTable {
        let families = pairs
            .iter()
            .enumerate()
            .map(|(n, (m, c))| FamilyRecord {
                family_id: format!("f{n}"),
                status: (n % 2) as u8,
                ..fam(m, c)
            })
            .collect();
        let k = pairs[0].0.len();
        CohortTable::new(
            families,
            (0..k).map(|i| i.to_string()).collect(),
            vec![],
            0,
            0.1,
        )
        .unwrap()
    }

    #[test]
    fn single_snp_panel_is_the_two_alleles() {
        let c = cohort(&[(&[1], &[0]), (&[0], &[1])]);
        let p = enumerate_panel(&c, 64).unwrap();
        assert_eq!(p.to_strings(), vec!["0", "1"]);
    }

    #[test]
    fn homozygotes_give_two_haplotypes() {
        let c = cohort(&[(&[0, 0], &[0, 0]), (&[2, 2], &[2, 2]), (&[0, 0], &[0, 0])]);
        let p = enumerate_panel(&c, 64).unwrap();
        assert_eq!(p.to_strings(), vec!["00", "11"]);
    }

    #[test]
    fn allele_counting_fixed_point() {
        // 10 mothers: 1 x "2", 4 x "1", 5 x "0" -> minor allele fraction 6/20
        let mut pairs: Vec<(&[u8], &[u8])> = vec![(&[2], &[1])];
        pairs.extend(std::iter::repeat_n((&[1u8][..], &[1u8][..]), 4));
        pairs.extend(std::iter::repeat_n((&[0u8][..], &[0u8][..]), 5));
        let c = cohort(&pairs);
        let p = HaplotypePanel::new(1, vec![0, 1], vec![0.5, 0.5]).unwrap();
        let mu = init_frequencies(&c, &p).unwrap();
        assert!(
            (mu[0] - 0.7).abs() < 1e-9 && (mu[1] - 0.3).abs() < 1e-9,
            "{mu:?}"
        );

        let one = HaplotypePanel::new(1, vec![0], vec![1.0]).unwrap();
        assert_eq!(init_frequencies(&c, &one).unwrap(), vec![1.0]);
    }

    #[test]
    fn homozygote_counting_fixed_point() {
        let c = cohort(&[(&[0, 0], &[0, 0]), (&[2, 2], &[2, 2])]);
        let p = HaplotypePanel::from_strings(&["00", "11"], vec![0.9, 0.1]).unwrap();
        let mu = init_frequencies(&c, &p).unwrap();
        assert!((mu[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn pruning() {
        let p = HaplotypePanel::from_strings(&["00", "01", "11"], vec![0.5, 0.49, 0.0099]).unwrap();
        let q = prune_rare(&p, 0.01).unwrap();
        assert_eq!(q.len(), 2);
        let total = 0.5 + 0.49;
        assert!((q.frequencies()[0] - 0.5 / total).abs() < 1e-12);
        assert!((q.frequencies()[1] - 0.49 / total).abs() < 1e-12);
        assert_eq!(prune_rare(&p, 0.0).unwrap(), p);
        // idempotent at a fixed floor
        let again = prune_rare(&q, 0.01).unwrap();
        assert_eq!(again.haplotypes(), q.haplotypes());
        for (a, b) in again.frequencies().iter().zip(q.frequencies()) {
            assert!((a - b).abs() < 1e-15);
        }

        let flat = HaplotypePanel::new(8, (0..250).collect(), vec![0.004; 250]).unwrap();
        assert!(prune_rare(&flat, 0.01).is_err());
        assert!(prune_rare(&p, 0.2).is_err());
    }

    #[test]
    fn maf_and_hwe() {
        let p = HaplotypePanel::from_strings(&["00", "01", "10"], vec![0.5, 0.3, 0.2]).unwrap();
        assert!((target_maf(&p, 0) - 0.2).abs() < 1e-15);
        let all = HaplotypePanel::from_strings(&["1", "1"], vec![0.5, 0.5]);
        assert!(all.is_err()); // duplicates
        let carriers = HaplotypePanel::from_strings(&["10", "11"], vec![0.5, 0.5]).unwrap();
        assert_eq!(target_maf(&carriers, 0), 1.0);
        assert!((hwe_genotype_prob(0.5, 1) - 0.5).abs() < 1e-15);
        assert!((hwe_genotype_prob(0.2, 2) - 0.04).abs() < 1e-15);
    }

    #[test]
    fn heterozygous_ambiguity() {
        let p = HaplotypePanel::from_strings(&["0", "1"], vec![0.5, 0.5]).unwrap();
        let set = compatible_configs(&fam(&[1], &[1]), &p, false).unwrap();
        assert_eq!(
            set.configs,
            vec![
                Configuration {
                    i: 0,
                    j: 1,
                    w: 0,
                    l: 1
                },
                Configuration {
                    i: 0,
                    j: 1,
                    w: 1,
                    l: 0
                },
            ]
        );
        let set = compatible_configs(&fam(&[0], &[1]), &p, false).unwrap();
        assert_eq!(
            set.configs,
            vec![Configuration {
                i: 0,
                j: 0,
                w: 0,
                l: 1
            }]
        );
    }

    #[test]
    fn two_snp_double_heterozygote() {
        let p = HaplotypePanel::from_strings(&["00", "11"], vec![0.5, 0.5]).unwrap();
        let set = compatible_configs(&fam(&[1, 1], &[1, 1]), &p, false).unwrap();
        assert_eq!(set.configs.len(), 2);
        // independent count over all S^3 ordered (transmitted, untransmitted, paternal)
        let haps = p.haplotypes();
        let mut brute = 0;
        for a in 0..2 {
            for b in 0..2 {
                for l in 0..2 {
                    let m = GenotypeMask::new(&[Some(1), Some(1)]);
                    if m.admits(haps[a], haps[b]) && m.admits(haps[a], haps[l]) {
                        brute += 1;
                    }
                }
            }
        }
        assert_eq!(brute, 2);
    }

    #[test]
    fn empty_config_set_is_an_error() {
        let p = HaplotypePanel::from_strings(&["00"], vec![1.0]).unwrap();
        assert!(compatible_configs(&fam(&[1, 1], &[0, 0]), &p, false).is_err());
    }

    #[test]
    fn config_prior_values() {
        let p = HaplotypePanel::from_strings(&["0", "1"], vec![0.5, 0.5]).unwrap();
        let c = Configuration {
            i: 0,
            j: 1,
            w: 0,
            l: 1,
        };
        assert!((config_prior(&c, &p) - 0.125).abs() < 1e-15);
        let one = HaplotypePanel::from_strings(&["0"], vec![1.0]).unwrap();
        assert_eq!(
            config_prior(
                &Configuration {
                    i: 0,
                    j: 0,
                    w: 0,
                    l: 0
                },
                &one
            ),
            1.0
        );
    }

    #[test]
    fn maternal_only_ignores_child() {
        let p = HaplotypePanel::from_strings(&["0", "1"], vec![0.5, 0.5]).unwrap();
        let mut f = fam(&[1], &[0]);
        f.child = vec![None];
        let set = compatible_configs(&f, &p, true).unwrap();
        assert_eq!(set.configs.len(), 4);
        assert!(set.maternal_only);
    }

    fn all_genotypes(k: usize) -> Vec<Vec<Genotype>> {
        let mut out = vec![vec![]];
        for _ in 0..k {
            out = out
                .into_iter()
                .flat_map(|v| (0..3u8).map(move |g| [v.clone(), vec![Some(g)]].concat()))
                .collect();
        }
        out
    }

    fn arb_panel() -> impl Strategy<Value = HaplotypePanel> {
        (1usize..=2).prop_flat_map(|k| {
            let n = 1usize << k;
            proptest::collection::vec(0.05f64..1.0, n)
                .prop_map(move |w| HaplotypePanel::new(k, (0..n as u32).collect(), w).unwrap())
        })
    }

    proptest! {
        // Over all (G^m, G^c) sharing a maternal target genotype, the config
        // priors divided by the HWE prior of g^m sum to one.
        #[test]
        fn conditional_genotype_law_sums_to_one(p in arb_panel()) {
            let k = p.k();
            let genos = all_genotypes(k);
            for gm in 0..3u8 {
                let prior = genotype_prior(&p, 0, gm);
                let mut total = 0.0;
                for m in genos.iter().filter(|m| m[0] == Some(gm)) {
                    for c in &genos {
                        let f = FamilyRecord {
                            family_id: "x".into(), status: 0, covariates: vec![],
                            mother: m.clone(), child: c.clone(),
                        };
                        if let Ok(set) = compatible_configs(&f, &p, false) {
                            total += set.configs.iter().map(|c| config_prior(c, &p)).sum::<f64>() / prior;
                        }
                    }
                }
                prop_assert!((total - 1.0).abs() < 1e-12, "g^m={gm}: {total}");
            }
        }

        // For a fixed maternal diplotype, summing over transmissions and
        // paternal haplotypes recovers its HWE probability.
        #[test]
        fn diplotype_marginal(p in arb_panel()) {
            let mu = p.frequencies();
            let s = p.len();
            for i in 0..s {
                for j in i..s {
                    let transmitted: &[usize] = if i == j { &[i] } else { &[i, j] };
                    let total: f64 = transmitted.iter()
                        .flat_map(|&w| (0..s).map(move |l| Configuration { i, j, w, l }))
                        .map(|c| config_prior(&c, &p))
                        .sum();
                    let hwe = if i == j { mu[i] * mu[i] } else { 2.0 * mu[i] * mu[j] };
                    prop_assert!((total - hwe).abs() < 1e-14);
                }
            }
        }
    }
}
