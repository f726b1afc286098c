//! Case-control mother-child pair tables.
//!
//! A cohort file is a delimited text table with a header row. The standard
//! layout is
//!
//! ```text
//! family_id  y  x1 .. xp  m_<snp1> .. m_<snpK>  c_<snp1> .. c_<snpK>
//! ```
//!
//! with genotypes coded as minor-allele counts `0/1/2`, and `NA` (any case) or an
//! empty cell for a missing call. Covariates must be numeric and complete.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Minor-allele count at one SNP; `None` is a missing call.
pub type Genotype = Option<u8>;

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyRecord {
    pub family_id: String,
    /// 1 = case, 0 = control.
    pub status: u8,
    /// Maternal covariates.
    pub covariates: Vec<f64>,
    pub mother: Vec<Genotype>,
    pub child: Vec<Genotype>,
}

impl FamilyRecord {
    pub fn mother_target(&self, target: usize) -> Genotype {
        self.mother[target]
    }

    pub fn child_all_missing(&self) -> bool {
        self.child.iter().all(Option::is_none)
    }

    pub fn is_complete(&self) -> bool {
        self.mother.iter().chain(&self.child).all(Option::is_some)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortTable {
    pub families: Vec<FamilyRecord>,
    pub snp_ids: Vec<String>,
    pub covariate_names: Vec<String>,
    pub target_index: usize,
    /// Known population prevalence `f` of the disease.
    pub prevalence: f64,
}

impl CohortTable {
    /// Builds a table and checks every structural invariant.
    pub fn new(
        families: Vec<FamilyRecord>,
        snp_ids: Vec<String>,
        covariate_names: Vec<String>,
        target_index: usize,
        prevalence: f64,
    ) -> Result<Self> {
        if !(prevalence > 0.0 && prevalence < 1.0) {
            return Err(Error::Prevalence(prevalence));
        }
        let k = snp_ids.len();
        if k == 0 {
            return Err(Error::Schema("no SNP columns".into()));
        }
        if target_index >= k {
            return Err(Error::Schema(format!(
                "target index {target_index} out of range for {k} SNPs"
            )));
        }
        let p = covariate_names.len();
        for (row, fam) in families.iter().enumerate() {
            let bad = |reason: String| Error::MalformedRow {
                row: row + 1,
                family: fam.family_id.clone(),
                reason,
            };
            if fam.status > 1 {
                return Err(bad(format!("status {} is not 0/1", fam.status)));
            }
            if fam.mother.len() != k || fam.child.len() != k {
                return Err(bad("genotype vector length differs from SNP count".into()));
            }
            if fam.covariates.len() != p {
                return Err(bad("covariate vector length differs from schema".into()));
            }
            if let Some(x) = fam.covariates.iter().find(|x| !x.is_finite()) {
                return Err(bad(format!("non-finite covariate {x}")));
            }
            if fam
                .mother
                .iter()
                .chain(&fam.child)
                .flatten()
                .any(|&g| g > 2)
            {
                return Err(bad("genotype outside 0/1/2".into()));
            }
        }
        let table = CohortTable {
            families,
            snp_ids,
            covariate_names,
            target_index,
            prevalence,
        };
        let (cases, controls) = (table.n1(), table.n0());
        if cases == 0 || controls == 0 {
            return Err(Error::OneSidedCohort { cases, controls });
        }
        Ok(table)
    }

    pub fn n(&self) -> usize {
        self.families.len()
    }

    pub fn n1(&self) -> usize {
        self.families.iter().filter(|f| f.status == 1).count()
    }

    pub fn n0(&self) -> usize {
        self.n() - self.n1()
    }

    pub fn k(&self) -> usize {
        self.snp_ids.len()
    }

    pub fn p(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn target_id(&self) -> &str {
        &self.snp_ids[self.target_index]
    }

    pub fn has_missing(&self) -> bool {
        self.families.iter().any(|f| !f.is_complete())
    }

    pub fn with_prevalence(&self, prevalence: f64) -> Result<Self> {
        CohortTable::new(
            self.families.clone(),
            self.snp_ids.clone(),
            self.covariate_names.clone(),
            self.target_index,
            prevalence,
        )
    }

    /// Restricts the table to the SNPs at `indices` (kept in the given order).
    /// The target SNP must be among them.
    pub fn select_snps(&self, indices: &[usize]) -> Result<Self> {
        let target_index = indices
            .iter()
            .position(|&i| i == self.target_index)
            .ok_or_else(|| Error::Schema("target SNP not in selected SNPs".into()))?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.k()) {
            return Err(Error::Schema(format!("SNP index {bad} out of range")));
        }
        let families = self
            .families
            .iter()
            .map(|f| FamilyRecord {
                mother: indices.iter().map(|&i| f.mother[i]).collect(),
                child: indices.iter().map(|&i| f.child[i]).collect(),
                ..f.clone()
            })
            .collect();
        CohortTable::new(
            families,
            indices.iter().map(|&i| self.snp_ids[i].clone()).collect(),
            self.covariate_names.clone(),
            target_index,
            self.prevalence,
        )
    }

    /// Only the target SNP.
    pub fn target_only(&self) -> Result<Self> {
        self.select_snps(&[self.target_index])
    }

    /// Drops every family with at least one missing genotype.
    pub fn complete_families(&self) -> Result<Self> {
        self.filter(FamilyRecord::is_complete)
    }

    pub fn filter(&self, keep: impl Fn(&FamilyRecord) -> bool) -> Result<Self> {
        CohortTable::new(
            self.families.iter().filter(|f| keep(f)).cloned().collect(),
            self.snp_ids.clone(),
            self.covariate_names.clone(),
            self.target_index,
            self.prevalence,
        )
    }

    pub fn snp_index(&self, id: &str) -> Option<usize> {
        self.snp_ids.iter().position(|s| s == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnpColumns {
    pub id: String,
    pub mother: String,
    pub child: String,
}

/// Column mapping for a cohort file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CohortSchema {
    pub family_id: String,
    pub status: String,
    pub covariates: Vec<String>,
    pub snps: Vec<SnpColumns>,
}

impl CohortSchema {
    /// Infers the standard layout: `family_id`, `y`, genotype pairs `m_<id>` /
    /// `c_<id>`, and every remaining column as a covariate.
    pub fn from_header<S: AsRef<str>>(header: &[S]) -> Result<Self> {
        let cols: Vec<&str> = header.iter().map(|s| s.as_ref().trim()).collect();
        for required in ["family_id", "y"] {
            if !cols.contains(&required) {
                return Err(Error::Schema(format!("missing column `{required}`")));
            }
        }
        let mut snps = Vec::new();
        let mut covariates = Vec::new();
        for &col in &cols {
            if col == "family_id" || col == "y" || col.starts_with("c_") {
                continue;
            }
            if let Some(id) = col.strip_prefix("m_") {
                let child = format!("c_{id}");
                if !cols.contains(&child.as_str()) {
                    return Err(Error::Schema(format!("no child column for `{col}`")));
                }
                snps.push(SnpColumns {
                    id: id.to_string(),
                    mother: col.to_string(),
                    child,
                });
            } else {
                covariates.push(col.to_string());
            }
        }
        for &col in &cols {
            if let Some(id) = col.strip_prefix("c_") {
                if !snps.iter().any(|s| s.id == id) {
                    return Err(Error::Schema(format!("no mother column for `{col}`")));
                }
            }
        }
        if snps.is_empty() {
            return Err(Error::Schema("no genotype columns (m_<id>/c_<id>)".into()));
        }
        Ok(CohortSchema {
            family_id: "family_id".into(),
            status: "y".into(),
            covariates,
            snps,
        })
    }

    /// Reads the header row of `path` and infers the standard layout.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path.as_ref()).map_err(|e| Error::io(&path, e))?;
        let first = text.lines().next().unwrap_or("");
        let delim = detect_delimiter(path.as_ref(), first);
        let header: Vec<&str> = first.split(delim as char).collect();
        Self::from_header(&header)
    }

    /// Keeps only the named covariates, in the given order.
    pub fn with_covariates<S: AsRef<str>>(mut self, names: &[S]) -> Result<Self> {
        let mut picked = Vec::with_capacity(names.len());
        for name in names {
            let name = name.as_ref();
            if !self.covariates.iter().any(|c| c == name) {
                return Err(Error::Schema(format!("unknown covariate `{name}`")));
            }
            picked.push(name.to_string());
        }
        self.covariates = picked;
        Ok(self)
    }

    /// Keeps only the named SNPs, in file order.
    pub fn with_snps<S: AsRef<str>>(mut self, ids: &[S]) -> Result<Self> {
        let wanted: HashSet<&str> = ids.iter().map(|s| s.as_ref()).collect();
        for id in &wanted {
            if !self.snps.iter().any(|s| s.id == *id) {
                return Err(Error::Schema(format!("unknown SNP `{id}`")));
            }
        }
        self.snps.retain(|s| wanted.contains(s.id.as_str()));
        Ok(self)
    }
}

fn detect_delimiter(path: &Path, header_line: &str) -> u8 {
    let tsv_ext = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("tsv") || e.eq_ignore_ascii_case("tab"));
    if tsv_ext || header_line.contains('\t') {
        b'\t'
    } else {
        b','
    }
}

/// Parses a single genotype token.
pub fn parse_genotype(token: &str) -> std::result::Result<Genotype, String> {
    let t = token.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    match t {
        "0" => Ok(Some(0)),
        "1" => Ok(Some(1)),
        "2" => Ok(Some(2)),
        other => Err(format!("genotype token `{other}` not in {{0,1,2,NA}}")),
    }
}

fn parse_status(token: &str) -> std::result::Result<u8, String> {
    match token.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(format!("status `{other}` is not 0/1")),
    }
}

/// Loads and validates a cohort file.
pub fn parse_cohort(
    path: impl AsRef<Path>,
    schema: &CohortSchema,
    prevalence: f64,
    target: &str,
) -> Result<CohortTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let delim = detect_delimiter(path, text.lines().next().unwrap_or(""));
    parse_cohort_str(&text, delim, schema, prevalence, target)
}

/// Same as [`parse_cohort`] on in-memory text.
pub fn parse_cohort_str(
    text: &str,
    delimiter: u8,
    schema: &CohortSchema,
    prevalence: f64,
    target: &str,
) -> Result<CohortTable> {
    if !(prevalence > 0.0 && prevalence < 1.0) {
        return Err(Error::Prevalence(prevalence));
    }
    let target_index = schema
        .snps
        .iter()
        .position(|s| s.id == target)
        .ok_or_else(|| Error::Schema(format!("target SNP `{target}` not in schema")))?;

    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column `{name}` not in header")))
    };
    let id_col = col(&schema.family_id)?;
    let status_col = col(&schema.status)?;
    let cov_cols = schema
        .covariates
        .iter()
        .map(|c| col(c))
        .collect::<Result<Vec<_>>>()?;
    let mother_cols = schema
        .snps
        .iter()
        .map(|s| col(&s.mother))
        .collect::<Result<Vec<_>>>()?;
    let child_cols = schema
        .snps
        .iter()
        .map(|s| col(&s.child))
        .collect::<Result<Vec<_>>>()?;

    let mut families = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let family = record.get(id_col).unwrap_or("").to_string();
        let bad = |reason: String| Error::MalformedRow {
            row,
            family: family.clone(),
            reason,
        };
        if family.is_empty() {
            return Err(bad("empty family id".into()));
        }
        let field = |c: usize| record.get(c).unwrap_or("");
        let status = parse_status(field(status_col)).map_err(bad)?;
        let covariates = cov_cols
            .iter()
            .zip(&schema.covariates)
            .map(|(&c, name)| {
                let t = field(c);
                match t.parse::<f64>() {
                    Ok(x) if x.is_finite() => Ok(x),
                    _ => Err(bad(format!(
                        "covariate `{name}` = `{t}` is not a finite number"
                    ))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let genos = |cols: &[usize]| {
            cols.iter()
                .map(|&c| parse_genotype(field(c)).map_err(bad))
                .collect::<Result<Vec<_>>>()
        };
        let mother = genos(&mother_cols)?;
        let child = genos(&child_cols)?;
        families.push(FamilyRecord {
            family_id: family.clone(),
            status,
            covariates,
            mother,
            child,
        });
    }
    CohortTable::new(
        families,
        schema.snps.iter().map(|s| s.id.clone()).collect(),
        schema.covariates.clone(),
        target_index,
        prevalence,
    )
}

fn genotype_token(g: Genotype) -> String {
    g.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

/// Writes the cohort in the standard layout.
pub fn write_cohort<W: Write>(cohort: &CohortTable, out: W, delimiter: u8) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_writer(out);
    let mut header = vec!["family_id".to_string(), "y".to_string()];
    header.extend(cohort.covariate_names.iter().cloned());
    header.extend(cohort.snp_ids.iter().map(|s| format!("m_{s}")));
    header.extend(cohort.snp_ids.iter().map(|s| format!("c_{s}")));
    w.write_record(&header)?;
    for fam in &cohort.families {
        let mut rec = vec![fam.family_id.clone(), fam.status.to_string()];
        rec.extend(fam.covariates.iter().map(|x| x.to_string()));
        rec.extend(fam.mother.iter().map(|&g| genotype_token(g)));
        rec.extend(fam.child.iter().map(|&g| genotype_token(g)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<cohort writer>", e))?;
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MendelianReport {
    /// Families with at least one repaired child genotype, with the repair count.
    pub per_family: Vec<(String, usize)>,
    pub total: usize,
}

/// Sets Mendelian-impossible child genotypes (mother 0 / child 2, mother 2 /
/// child 0) to missing.
pub fn validate_mendelian(cohort: &CohortTable) -> (CohortTable, MendelianReport) {
    let mut repaired = cohort.clone();
    let mut report = MendelianReport::default();
    for fam in &mut repaired.families {
        let mut count = 0;
        for (m, c) in fam.mother.iter().zip(fam.child.iter_mut()) {
            if matches!((m, *c), (Some(0), Some(2)) | (Some(2), Some(0))) {
                *c = None;
                count += 1;
            }
        }
        if count > 0 {
            report.per_family.push((fam.family_id.clone(), count));
            report.total += count;
        }
    }
    (repaired, report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MissingnessSummary {
    pub mother_rate_per_snp: Vec<f64>,
    pub child_rate_per_snp: Vec<f64>,
    pub mother_entry_rate: f64,
    pub child_entry_rate: f64,
    /// Fraction of the family's 2K genotype entries that are missing.
    pub family_rate: Vec<(String, f64)>,
    pub fully_observed: usize,
    /// Families whose child genotypes are all missing.
    pub maternal_only: Vec<String>,
}

pub fn summarize_missingness(cohort: &CohortTable) -> MissingnessSummary {
    let n = cohort.n() as f64;
    let k = cohort.k();
    let mut mother_miss = vec![0usize; k];
    let mut child_miss = vec![0usize; k];
    let mut family_rate = Vec::with_capacity(cohort.n());
    let mut maternal_only = Vec::new();
    let mut fully_observed = 0;
    for fam in &cohort.families {
        let mut missing = 0;
        for s in 0..k {
            if fam.mother[s].is_none() {
                mother_miss[s] += 1;
                missing += 1;
            }
            if fam.child[s].is_none() {
                child_miss[s] += 1;
                missing += 1;
            }
        }
        if missing == 0 {
            fully_observed += 1;
        }
        if fam.child_all_missing() {
            maternal_only.push(fam.family_id.clone());
        }
        family_rate.push((fam.family_id.clone(), missing as f64 / (2 * k) as f64));
    }
    let entries = n * k as f64;
    MissingnessSummary {
        mother_rate_per_snp: mother_miss.iter().map(|&m| m as f64 / n).collect(),
        child_rate_per_snp: child_miss.iter().map(|&m| m as f64 / n).collect(),
        mother_entry_rate: mother_miss.iter().sum::<usize>() as f64 / entries,
        child_entry_rate: child_miss.iter().sum::<usize>() as f64 / entries,
        family_rate,
        fully_observed,
        maternal_only,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const FOUR_ROWS: &str = "\
family_id,y,x1,m_1,m_2,m_3,m_4,m_5,c_1,c_2,c_3,c_4,c_5
f1,1,0.5,0,1,2,1,0,0,1,1,1,0
f2,1,-1.2,1,1,1,0,0,1,2,1,0,0
f3,0,0.0,2,1,0,NA,1,1,0,0,1,na
f4,0,2.25,0,0,1,1,2,1,0,1,2,1
";

    fn schema() -> CohortSchema {
        let header: Vec<&str> = FOUR_ROWS.lines().next().unwrap().split(',').collect();
        CohortSchema::from_header(&header).unwrap()
    }

    fn family(id: &str, status: u8, mother: &[Genotype], child: &[Genotype]) -> FamilyRecord {
        FamilyRecord {
            family_id: id.into(),
            status,
            covariates: vec![],
            mother: mother.to_vec(),
            child: child.to_vec(),
        }
    }

    #[test]
    fn parses_four_row_file() {
        let c = parse_cohort_str(FOUR_ROWS, b',', &schema(), 0.036, "3").unwrap();
        assert_eq!((c.n0(), c.n1(), c.k(), c.p()), (2, 2, 5, 1));
        assert_eq!(c.target_index, 2);
        assert_eq!(c.families[2].mother[3], None);
        assert_eq!(c.families[2].child[4], None);
        assert_eq!(c.families[3].covariates, vec![2.25]);
    }

    #[test]
    fn empty_covariate_schema() {
        let s = schema().with_covariates::<&str>(&[]).unwrap();
        let c = parse_cohort_str(FOUR_ROWS, b',', &s, 0.036, "3").unwrap();
        assert_eq!(c.p(), 0);
        assert!(c.families.iter().all(|f| f.covariates.is_empty()));
    }

    #[test]
    fn rejects_genotype_three() {
        let text = FOUR_ROWS.replace("f1,1,0.5,0,1,2", "f1,1,0.5,0,1,3");
        let err = parse_cohort_str(&text, b',', &schema(), 0.036, "3").unwrap_err();
        assert!(matches!(err, Error::MalformedRow { row: 1, .. }), "{err}");
    }

    #[test]
    fn rejects_bad_status_prevalence_and_one_sided() {
        let text = FOUR_ROWS.replace("f2,1,", "f2,case,");
        assert!(matches!(
            parse_cohort_str(&text, b',', &schema(), 0.036, "3"),
            Err(Error::MalformedRow { .. })
        ));
        assert!(matches!(
            parse_cohort_str(FOUR_ROWS, b',', &schema(), 1.0, "3"),
            Err(Error::Prevalence(_))
        ));
        let text = FOUR_ROWS
            .replace("f3,0,", "f3,1,")
            .replace("f4,0,", "f4,1,");
        assert!(matches!(
            parse_cohort_str(&text, b',', &schema(), 0.036, "3"),
            Err(Error::OneSidedCohort {
                cases: 4,
                controls: 0
            })
        ));
    }

    #[test]
    fn rejects_missing_covariate() {
        let text = FOUR_ROWS.replace("f1,1,0.5,", "f1,1,NA,");
        assert!(parse_cohort_str(&text, b',', &schema(), 0.036, "3").is_err());
    }

    #[test]
    fn mendelian_repair() {
        let fams = vec![
            family(
                "a",
                1,
                &[Some(1), Some(0), Some(0)],
                &[Some(0), Some(1), Some(2)],
            ),
            family(
                "b",
                0,
                &[Some(1), Some(1), None],
                &[Some(2), Some(0), Some(2)],
            ),
        ];
        let c = CohortTable::new(
            fams,
            vec!["1".into(), "2".into(), "3".into()],
            vec![],
            0,
            0.1,
        )
        .unwrap();
        let (fixed, report) = validate_mendelian(&c);
        assert_eq!(fixed.families[0].child[2], None);
        assert_eq!(report.per_family, vec![("a".to_string(), 1)]);
        assert_eq!(report.total, 1);
        // heterozygous mothers and missing mothers are left alone
        assert_eq!(fixed.families[1], c.families[1]);
    }

    #[test]
    fn missingness_summary_rates() {
        let mut fams: Vec<FamilyRecord> = (0..10)
            .map(|i| {
                family(
                    &format!("f{i}"),
                    (i % 2) as u8,
                    &[Some(0); 5],
                    &[Some(1); 5],
                )
            })
            .collect();
        let ids: Vec<String> = (1..=5).map(|i| i.to_string()).collect();
        let clean = CohortTable::new(fams.clone(), ids.clone(), vec![], 0, 0.1).unwrap();
        let s = summarize_missingness(&clean);
        assert_eq!(s.child_entry_rate, 0.0);
        assert_eq!(s.mother_entry_rate, 0.0);
        assert_eq!(s.fully_observed, 10);

        fams[3].child[2] = None;
        fams[7].child = vec![None; 5];
        let c = CohortTable::new(fams.clone(), ids.clone(), vec![], 0, 0.1).unwrap();
        let s = summarize_missingness(&c);
        assert_eq!(s.maternal_only, vec!["f7".to_string()]);
        assert_eq!(s.fully_observed, 8);

        fams[7].child = vec![Some(1); 5];
        let c = CohortTable::new(fams, ids, vec![], 0, 0.1).unwrap();
        let s = summarize_missingness(&c);
        assert!((s.child_entry_rate - 1.0 / 50.0).abs() < 1e-15);
        assert!((s.child_rate_per_snp[2] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn tsv_and_select() {
        let tsv = FOUR_ROWS.replace(',', "\t");
        let c = parse_cohort_str(&tsv, b'\t', &schema(), 0.036, "3").unwrap();
        let t = c.target_only().unwrap();
        assert_eq!((t.k(), t.target_index), (1, 0));
        assert_eq!(t.families[0].mother, vec![Some(2)]);
        assert!(c.select_snps(&[0, 1]).is_err());
    }

    fn arb_cohort() -> impl Strategy<Value = CohortTable> {
        let geno = prop_oneof![Just(None), (0u8..3).prop_map(Some)];
        let fam = (
            0u8..2,
            proptest::collection::vec(-1e3f64..1e3, 2),
            proptest::collection::vec(geno.clone(), 3),
            proptest::collection::vec(geno, 3),
        );
        proptest::collection::vec(fam, 2..12).prop_filter_map("needs both groups", |rows| {
            let families: Vec<FamilyRecord> = rows
                .into_iter()
                .enumerate()
                .map(|(i, (y, x, m, c))| FamilyRecord {
                    family_id: format!("fam{i}"),
                    status: y,
                    covariates: x,
                    mother: m,
                    child: c,
                })
                .collect();
            CohortTable::new(
                families,
                vec!["a".into(), "b".into(), "c".into()],
                vec!["x1".into(), "bmi".into()],
                1,
                0.05,
            )
            .ok()
        })
    }

    proptest! {
        #[test]
        fn write_then_parse_is_identity(c in arb_cohort()) {
            let mut buf = Vec::new();
            write_cohort(&c, &mut buf, b',').unwrap();
            let text = String::from_utf8(buf).unwrap();
            let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
            let schema = CohortSchema::from_header(&header).unwrap();
            let back = parse_cohort_str(&text, b',', &schema, 0.05, "b").unwrap();
            prop_assert_eq!(back, c);
        }

        #[test]
        fn repaired_pairs_are_compatible(c in arb_cohort()) {
            let (fixed, _) = validate_mendelian(&c);
            for f in &fixed.families {
                for (m, ch) in f.mother.iter().zip(&f.child) {
                    prop_assert!(!matches!((m, ch), (Some(0), Some(2)) | (Some(2), Some(0))));
                }
            }
        }
    }
}
