//! Logistic penetrance model with maternal, child, and parent-of-origin terms.
//!
//! `H = b0 + b_gm g_m + b_gc (g_mc + g_pc) + b_im (g_mc - g_pc) + b_x' X
//!      + b_gmx' (g_m X) + b_gcx' (g_c X)`

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Term {
    Intercept,
    Gm,
    Gc,
    Im,
    X(usize),
    GmX(usize),
    GcX(usize),
}

/// Which terms enter the linear predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegressionSpec {
    pub include_gm: bool,
    pub include_gc: bool,
    pub include_im: bool,
    pub covariate_count: usize,
    pub interaction_gm_x: bool,
    pub interaction_gc_x: bool,
}

impl RegressionSpec {
    /// All genetic main effects and `p` covariates, no interactions.
    pub fn main_effects(p: usize) -> Self {
        RegressionSpec {
            include_gm: true,
            include_gc: true,
            include_im: true,
            covariate_count: p,
            interaction_gm_x: false,
            interaction_gc_x: false,
        }
    }

    pub fn with_interactions(self, gm_x: bool, gc_x: bool) -> Self {
        RegressionSpec {
            interaction_gm_x: gm_x,
            interaction_gc_x: gc_x,
            ..self
        }
    }

    pub fn terms(&self) -> Vec<Term> {
        let p = self.covariate_count;
        let mut t = vec![Term::Intercept];
        if self.include_gm {
            t.push(Term::Gm);
        }
        if self.include_gc {
            t.push(Term::Gc);
        }
        if self.include_im {
            t.push(Term::Im);
        }
        t.extend((0..p).map(Term::X));
        if self.interaction_gm_x {
            t.extend((0..p).map(Term::GmX));
        }
        if self.interaction_gc_x {
            t.extend((0..p).map(Term::GcX));
        }
        t
    }

    /// Length of the coefficient vector.
    pub fn dim(&self) -> usize {
        let p = self.covariate_count;
        1 + self.include_gm as usize
            + self.include_gc as usize
            + self.include_im as usize
            + p
            + p * self.interaction_gm_x as usize
            + p * self.interaction_gc_x as usize
    }

    pub fn index_of(&self, term: Term) -> Option<usize> {
        self.terms().iter().position(|&t| t == term)
    }

    pub fn names<S: AsRef<str>>(&self, covariate_names: &[S]) -> Vec<String> {
        let cov = |k: usize| {
            covariate_names
                .get(k)
                .map_or_else(|| format!("x{}", k + 1), |s| s.as_ref().to_string())
        };
        self.terms()
            .into_iter()
            .map(|t| match t {
                Term::Intercept => "intercept".to_string(),
                Term::Gm => "g_m".to_string(),
                Term::Gc => "g_c".to_string(),
                Term::Im => "im".to_string(),
                Term::X(k) => cov(k),
                Term::GmX(k) => format!("g_m:{}", cov(k)),
                Term::GcX(k) => format!("g_c:{}", cov(k)),
            })
            .collect()
    }

    /// Fills `out` (length [`dim`](Self::dim)) with the predictors for one
    /// genotype configuration.
    #[inline]
    pub fn design_row(&self, gm: u8, gmc: u8, gpc: u8, x: &[f64], out: &mut [f64]) {
        let gm = gm as f64;
        let gc = (gmc + gpc) as f64;
        let mut k = 0;
        let mut put = |v: f64| {
            out[k] = v;
            k += 1;
        };
        put(1.0);
        if self.include_gm {
            put(gm);
        }
        if self.include_gc {
            put(gc);
        }
        if self.include_im {
            put(gmc as f64 - gpc as f64);
        }
        for &v in x {
            put(v);
        }
        if self.interaction_gm_x {
            for &v in x {
                put(gm * v);
            }
        }
        if self.interaction_gc_x {
            for &v in x {
                put(gc * v);
            }
        }
    }
}

/// Regression coefficients laid out according to a [`RegressionSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Beta {
    pub spec: RegressionSpec,
    pub coef: Vec<f64>,
}

impl Beta {
    pub fn new(spec: RegressionSpec, coef: Vec<f64>) -> Result<Self> {
        if coef.len() != spec.dim() {
            return Err(Error::Shape(format!(
                "{} coefficients for a model with {} terms",
                coef.len(),
                spec.dim()
            )));
        }
        if coef.iter().any(|c| !c.is_finite()) {
            return Err(Error::Shape("non-finite coefficient".into()));
        }
        Ok(Beta { spec, coef })
    }

    pub fn zeros(spec: RegressionSpec) -> Self {
        Beta {
            spec,
            coef: vec![0.0; spec.dim()],
        }
    }

    /// Coefficient of `term`, zero when the term is absent from the model.
    pub fn get(&self, term: Term) -> f64 {
        self.spec.index_of(term).map_or(0.0, |i| self.coef[i])
    }

    pub fn set(&mut self, term: Term, value: f64) -> Result<()> {
        let i = self
            .spec
            .index_of(term)
            .ok_or_else(|| Error::Shape(format!("{term:?} is not in the model")))?;
        self.coef[i] = value;
        Ok(())
    }

    #[inline]
    pub(crate) fn dot(&self, row: &[f64]) -> f64 {
        self.coef.iter().zip(row).map(|(b, z)| b * z).sum()
    }
}

#[inline]
pub fn expit(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^t)` without overflow.
#[inline]
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// `log pr(Y = y)` when `pr(Y = 1) = expit(t)`.
#[inline]
pub fn log_bernoulli(y: u8, t: f64) -> f64 {
    if y == 1 {
        -softplus(-t)
    } else {
        -softplus(t)
    }
}

/// `pr(g_mc | g_m)` under Mendelian transmission.
#[inline]
pub fn maternal_transmission_prob(gm: u8, gmc: u8) -> f64 {
    match (gm, gmc) {
        (1, _) => 0.5,
        (0, 0) | (2, 1) => 1.0,
        _ => 0.0,
    }
}

fn check_inputs(beta: &Beta, gm: u8, gmc: u8, gpc: u8, x: &[f64]) -> Result<()> {
    if x.len() != beta.spec.covariate_count {
        return Err(Error::Shape(format!(
            "{} covariates for a model with {}",
            x.len(),
            beta.spec.covariate_count
        )));
    }
    if gm > 2 || gmc > 1 || gpc > 1 {
        return Err(Error::Shape(format!(
            "genotype out of range ({gm}, {gmc}, {gpc})"
        )));
    }
    Ok(())
}

pub fn linear_predictor(beta: &Beta, gm: u8, gmc: u8, gpc: u8, x: &[f64]) -> Result<f64> {
    check_inputs(beta, gm, gmc, gpc, x)?;
    let mut row = vec![0.0; beta.spec.dim()];
    beta.spec.design_row(gm, gmc, gpc, x, &mut row);
    Ok(beta.dot(&row))
}

/// `pr(Y = 1 | g_m, g_mc, g_pc, X)`.
pub fn penetrance(beta: &Beta, gm: u8, gmc: u8, gpc: u8, x: &[f64]) -> Result<f64> {
    Ok(expit(linear_predictor(beta, gm, gmc, gpc, x)?))
}

/// `pr(Y = 1 | g_m, X)`: the penetrance averaged over the transmitted maternal
/// allele (Mendelian) and the paternal allele (frequency `theta`).
pub fn marginal_risk(beta: &Beta, gm: u8, x: &[f64], theta: f64) -> Result<f64> {
    check_inputs(beta, gm, 0, 0, x)?;
    let mut row = vec![0.0; beta.spec.dim()];
    let mut risk = 0.0;
    for gmc in 0..2u8 {
        let pm = maternal_transmission_prob(gm, gmc);
        if pm == 0.0 {
            continue;
        }
        for (gpc, pp) in [(0u8, 1.0 - theta), (1u8, theta)] {
            beta.spec.design_row(gm, gmc, gpc, x, &mut row);
            risk += pm * pp * expit(beta.dot(&row));
        }
    }
    Ok(risk)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reference_beta() -> Beta {
        Beta::new(
            RegressionSpec::main_effects(1),
            vec![-5.0, 1.8f64.ln(), 1.5f64.ln(), 1.5f64.ln(), 1.8f64.ln()],
        )
        .unwrap()
    }

    #[test]
    fn layout_and_names() {
        let spec = RegressionSpec::main_effects(2).with_interactions(true, false);
        assert_eq!(spec.dim(), 1 + 3 + 2 + 2);
        assert_eq!(
            spec.names(&["bmi", "age"]),
            vec![
                "intercept",
                "g_m",
                "g_c",
                "im",
                "bmi",
                "age",
                "g_m:bmi",
                "g_m:age"
            ]
        );
        assert_eq!(spec.index_of(Term::GmX(1)), Some(7));
        assert_eq!(spec.index_of(Term::GcX(0)), None);
    }

    #[test]
    fn reference_linear_predictor() {
        let b = reference_beta();
        let lp = linear_predictor(&b, 1, 1, 0, &[0.0]).unwrap();
        let expected = -5.0 + 1.8f64.ln() + 1.5f64.ln() + 1.5f64.ln();
        assert!((lp - expected).abs() < 1e-15);
        // the quoted value rounds each term to three places first
        assert!((lp - -3.602).abs() < 1e-3);
        let pen = penetrance(&b, 1, 1, 0, &[0.0]).unwrap();
        assert!((pen - 1.0 / (1.0 + (-expected).exp())).abs() < 1e-15);
        assert!((pen - 0.02655).abs() < 5e-5);
    }

    #[test]
    fn degenerate_predictors() {
        let zero = Beta::zeros(RegressionSpec::main_effects(1));
        assert_eq!(linear_predictor(&zero, 2, 1, 1, &[3.0]).unwrap(), 0.0);
        assert_eq!(penetrance(&zero, 0, 0, 0, &[-1.0]).unwrap(), 0.5);
        let b = reference_beta();
        let same = linear_predictor(&b, 1, 1, 1, &[0.2]).unwrap();
        let mut no_im = b.clone();
        no_im.set(Term::Im, 0.0).unwrap();
        assert_eq!(same, linear_predictor(&no_im, 1, 1, 1, &[0.2]).unwrap());
    }

    #[test]
    fn shape_errors() {
        let b = reference_beta();
        assert!(linear_predictor(&b, 1, 1, 0, &[]).is_err());
        assert!(linear_predictor(&b, 3, 1, 0, &[0.0]).is_err());
        assert!(Beta::new(RegressionSpec::main_effects(1), vec![0.0; 3]).is_err());
    }

    #[test]
    fn marginal_risk_homozygous_reference_mother() {
        let b = reference_beta();
        let theta = 0.3;
        let got = marginal_risk(&b, 0, &[0.0], theta).unwrap();
        let b0 = b.get(Term::Intercept);
        let expected = 0.7 * expit(b0) + 0.3 * expit(b0 + b.get(Term::Gc) - b.get(Term::Im));
        assert!((got - expected).abs() < 1e-15);

        let mut flat = Beta::zeros(b.spec);
        flat.set(Term::Intercept, -2.0).unwrap();
        for gm in 0..3 {
            assert!((marginal_risk(&flat, gm, &[1.7], 0.4).unwrap() - expit(-2.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn saturates() {
        assert_eq!(expit(800.0), 1.0);
        assert_eq!(expit(-800.0), 0.0);
        assert!((log_bernoulli(1, -800.0) - -800.0).abs() < 1e-12);
        assert!(log_bernoulli(0, -800.0).abs() < 1e-300);
    }

    proptest! {
        #[test]
        fn marginal_risk_matches_enumeration(
            coef in proptest::collection::vec(-3.0f64..3.0, 5),
            gm in 0u8..3, x in -2.0f64..2.0, theta in 0.01f64..0.99,
        ) {
            let b = Beta::new(RegressionSpec::main_effects(1), coef).unwrap();
            let mut brute = 0.0;
            let mut weight = 0.0;
            for gmc in 0..2u8 {
                for gpc in 0..2u8 {
                    let pm = maternal_transmission_prob(gm, gmc);
                    let pp = if gpc == 1 { theta } else { 1.0 - theta };
                    brute += pm * pp * penetrance(&b, gm, gmc, gpc, &[x]).unwrap();
                    weight += pm * pp;
                }
            }
            let got = marginal_risk(&b, gm, &[x], theta).unwrap();
            prop_assert!((got - brute).abs() < 1e-15);
            prop_assert!((weight - 1.0).abs() < 1e-15);
            prop_assert!(got > 0.0 && got < 1.0);
        }

        #[test]
        fn origin_swap_flips_only_im(
            coef in proptest::collection::vec(-3.0f64..3.0, 5), gm in 0u8..3, x in -2.0f64..2.0,
        ) {
            let b = Beta::new(RegressionSpec::main_effects(1), coef).unwrap();
            let a = linear_predictor(&b, gm, 1, 0, &[x]).unwrap();
            let c = linear_predictor(&b, gm, 0, 1, &[x]).unwrap();
            prop_assert!((a - c - 2.0 * b.get(Term::Im)).abs() < 1e-12);
        }

        #[test]
        fn penetrance_increasing_in_im(coef in proptest::collection::vec(-3.0f64..3.0, 5), d in 0.01f64..1.0) {
            let b = Beta::new(RegressionSpec::main_effects(1), coef).unwrap();
            let mut up = b.clone();
            up.set(Term::Im, b.get(Term::Im) + d).unwrap();
            prop_assert!(penetrance(&up, 1, 1, 0, &[0.0]).unwrap() > penetrance(&b, 1, 1, 0, &[0.0]).unwrap());
        }
    }
}
