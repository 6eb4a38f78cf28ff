//! Marginal and conditional predictive values from cross-validated bagged
//! GUIDE forests, and their correlation with importance scores.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::guide::{grow_tree_on, Tree, TreeConfig};
use crate::rng;
use crate::stats::pearson_corr;

const TAG_FOLDS: u64 = 0x464f_4c44;
const TAG_FIT: u64 = 0x4649_5420;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub bootstrap: bool,
    /// Depth limit on split nodes, as in [`TreeConfig::max_split_depth`].
    pub max_depth: usize,
    pub min_node_to_split: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            bootstrap: true,
            max_depth: 6,
            min_node_to_split: 8,
            seed: 0,
        }
    }
}

impl ForestConfig {
    fn tree_config(&self) -> TreeConfig {
        TreeConfig {
            max_split_depth: self.max_depth,
            min_node_to_split: self.min_node_to_split,
            ..TreeConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Domain("forest needs at least one tree".into()));
        }
        self.tree_config().validate()
    }
}

#[derive(Debug, Clone)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

impl Forest {
    /// Mean over trees of the leaf mean reached by `row` of `ds`, which must
    /// have the training columns.
    pub fn predict(&self, ds: &Dataset, row: usize) -> f64 {
        self.trees.iter().map(|t| t.predict(ds, row)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Bagged GUIDE trees. Tree `i` resamples rows from stream `i` of the seed.
pub fn fit_forest(ds: &Dataset, config: &ForestConfig) -> Result<Forest> {
    config.validate()?;
    let tc = config.tree_config();
    let n = ds.n_rows();
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|i| {
            let rows = if config.bootstrap {
                let mut r = rng::derive(config.seed, i as u64);
                (0..n).map(|_| r.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow_tree_on(ds, &tc, rows)
        })
        .collect();
    Ok(Forest { trees })
}

/// Which predictors a cross-validated model may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    /// Intercept only: the training mean.
    None,
    Only(usize),
    AllBut(usize),
    All,
}

impl Scope {
    fn columns(self, k: usize) -> Vec<usize> {
        match self {
            Scope::None => Vec::new(),
            Scope::Only(j) => vec![j],
            Scope::AllBut(j) => (0..k).filter(|&i| i != j).collect(),
            Scope::All => (0..k).collect(),
        }
    }

    fn tag(self) -> u64 {
        match self {
            Scope::None => 0,
            Scope::All => 1,
            Scope::Only(j) => 2 + 2 * j as u64,
            Scope::AllBut(j) => 3 + 2 * j as u64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvScheme {
    Loo,
    KFold(usize),
}

impl Default for CvScheme {
    fn default() -> Self {
        CvScheme::KFold(10)
    }
}

impl fmt::Display for CvScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CvScheme::Loo => f.write_str("loo"),
            CvScheme::KFold(k) => write!(f, "kfold:{k}"),
        }
    }
}

impl FromStr for CvScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Validation(format!("bad cv scheme '{s}' (expected loo or kfold:K)"));
        if s.eq_ignore_ascii_case("loo") {
            return Ok(CvScheme::Loo);
        }
        let k = s
            .strip_prefix("kfold:")
            .and_then(|k| k.parse::<usize>().ok())
            .ok_or_else(bad)?;
        if k < 2 {
            return Err(Error::Validation(format!("kfold needs k >= 2, got {k}")));
        }
        Ok(CvScheme::KFold(k))
    }
}

/// Held-out row sets. k-fold assignment is a seeded shuffle dealt round
/// robin; every scope sees the same folds.
fn folds(n: usize, cv: CvScheme, seed: u64) -> Result<Vec<Vec<usize>>> {
    match cv {
        CvScheme::Loo => Ok((0..n).map(|i| vec![i]).collect()),
        CvScheme::KFold(k) => {
            if k < 2 {
                return Err(Error::Domain(format!("kfold needs k >= 2, got {k}")));
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng::derive(rng::mix(seed, TAG_FOLDS, 0), 0));
            let m = k.min(n);
            let mut out = vec![Vec::new(); m];
            for (pos, i) in order.into_iter().enumerate() {
                out[pos % m].push(i);
            }
            for f in &mut out {
                f.sort_unstable();
            }
            Ok(out)
        }
    }
}

/// Cross-validated mean squared prediction error of the model family
/// restricted to `scope`.
pub fn cv_errors(ds: &Dataset, scope: Scope, config: &ForestConfig, cv: CvScheme) -> Result<f64> {
    let n = ds.n_rows();
    if n < 2 {
        return Err(Error::Domain(
            "cross-validation needs at least two rows".into(),
        ));
    }
    config.validate()?;
    let cols = scope.columns(ds.n_predictors());
    if let Some(&j) = cols.iter().find(|&&j| j >= ds.n_predictors()) {
        return Err(Error::Domain(format!("no predictor {j}")));
    }
    // The reduced dataset is built up front so excluded columns are never read.
    let reduced = ds.select_predictors(&cols);
    let y = ds.response();
    let folds = folds(n, cv, config.seed)?;
    let fold_sse: Vec<f64> = folds
        .par_iter()
        .enumerate()
        .map(|(f, held)| -> Result<f64> {
            let mut is_held = vec![false; n];
            held.iter().for_each(|&i| is_held[i] = true);
            let train: Vec<usize> = (0..n).filter(|&i| !is_held[i]).collect();
            let preds: Vec<f64> = if cols.is_empty() {
                let m = train.iter().map(|&i| y[i]).sum::<f64>() / train.len() as f64;
                vec![m; held.len()]
            } else {
                let fc = ForestConfig {
                    seed: rng::mix(config.seed, TAG_FIT ^ scope.tag(), f as u64),
                    ..*config
                };
                let forest = fit_forest(&reduced.take_rows(&train), &fc)?;
                held.iter().map(|&i| forest.predict(&reduced, i)).collect()
            };
            Ok(held
                .iter()
                .zip(preds)
                .map(|(&i, p)| (y[i] - p) * (y[i] - p))
                .sum())
        })
        .collect::<Result<_>>()?;
    Ok(fold_sse.iter().sum::<f64>() / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredValueReport {
    pub names: Vec<String>,
    pub s0: f64,
    pub s: f64,
    pub s_j: Vec<f64>,
    pub s_minus_j: Vec<f64>,
    /// `S0 - S_j`.
    pub mpv: Vec<f64>,
    /// `S_{-j} - S`.
    pub cpv: Vec<f64>,
    pub scheme: String,
    pub seed: u64,
}

pub fn mpv_cpv(ds: &Dataset, config: &ForestConfig, cv: CvScheme) -> Result<PredValueReport> {
    let k = ds.n_predictors();
    if k < 2 {
        return Err(Error::Domain(
            "predictive values need at least two predictors".into(),
        ));
    }
    let mut scopes = vec![Scope::None, Scope::All];
    scopes.extend((0..k).map(Scope::Only));
    scopes.extend((0..k).map(Scope::AllBut));
    let errs: Vec<f64> = scopes
        .par_iter()
        .map(|&s| cv_errors(ds, s, config, cv))
        .collect::<Result<_>>()?;
    let (s0, s) = (errs[0], errs[1]);
    let s_j = errs[2..2 + k].to_vec();
    let s_minus_j = errs[2 + k..].to_vec();
    Ok(PredValueReport {
        names: ds.predictor_names(),
        s0,
        s,
        mpv: s_j.iter().map(|x| s0 - x).collect(),
        cpv: s_minus_j.iter().map(|x| x - s).collect(),
        s_j,
        s_minus_j,
        scheme: cv.to_string(),
        seed: config.seed,
    })
}

/// Pearson correlations of `vi` with MPV and with CPV.
pub fn score_consistency(vi: &[f64], report: &PredValueReport) -> Result<(f64, f64)> {
    if vi.len() != report.mpv.len() {
        return Err(Error::Domain(format!(
            "{} scores for {} variables",
            vi.len(),
            report.mpv.len()
        )));
    }
    Ok((
        pearson_corr(vi, &report.mpv)?,
        pearson_corr(vi, &report.cpv)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Column;

    fn toy(y: Vec<f64>) -> Dataset {
        let n = y.len();
        let x = Column::ordinal("x", (0..n).map(|i| Some(i as f64)).collect()).unwrap();
        let w = Column::ordinal("w", (0..n).map(|i| Some((i * 7 % 5) as f64)).collect()).unwrap();
        Dataset::new("y", y, vec![x, w]).unwrap()
    }

    #[test]
    fn loo_intercept_example() {
        let ds = toy(vec![0.0, 2.0]);
        let s0 = cv_errors(&ds, Scope::None, &ForestConfig::default(), CvScheme::Loo).unwrap();
        assert_eq!(s0, 4.0);
    }

    #[test]
    fn constant_response_is_predicted_exactly() {
        let ds = toy(vec![3.5; 30]);
        let f = fit_forest(&ds, &ForestConfig::default()).unwrap();
        assert!((0..30).all(|i| f.predict(&ds, i) == 3.5));
        let s = cv_errors(
            &ds,
            Scope::All,
            &ForestConfig::default(),
            CvScheme::KFold(5),
        )
        .unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn single_unbagged_tree_matches_tree() {
        let y: Vec<f64> = (0..40).map(|i| ((i * 13) % 7) as f64).collect();
        let ds = toy(y);
        let cfg = ForestConfig {
            n_trees: 1,
            bootstrap: false,
            ..ForestConfig::default()
        };
        let f = fit_forest(&ds, &cfg).unwrap();
        let t = grow_tree_on(&ds, &cfg.tree_config(), (0..40).collect());
        assert!((0..40).all(|i| f.predict(&ds, i) == t.predict(&ds, i)));
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("loo".parse::<CvScheme>().unwrap(), CvScheme::Loo);
        assert_eq!("kfold:10".parse::<CvScheme>().unwrap(), CvScheme::KFold(10));
        assert!("kfold:1".parse::<CvScheme>().is_err());
        assert!("kfold".parse::<CvScheme>().is_err());
        assert_eq!(CvScheme::KFold(4).to_string(), "kfold:4");
    }

    #[test]
    fn folds_partition_rows() {
        let f = folds(23, CvScheme::KFold(5), 1).unwrap();
        let mut all: Vec<usize> = f.concat();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert!(f.iter().all(|x| x.len() == 4 || x.len() == 5));
    }

    #[test]
    fn consistency_examples() {
        let rep = PredValueReport {
            names: vec!["a".into(), "b".into(), "c".into()],
            s0: 1.0,
            s: 0.5,
            s_j: vec![0.9, 0.8, 0.7],
            s_minus_j: vec![0.6, 0.5, 0.7],
            mpv: vec![0.1, 0.2, 0.3],
            cpv: vec![0.1, 0.0, 0.2],
            scheme: "loo".into(),
            seed: 0,
        };
        let (m, _) = score_consistency(&[2.0, 4.0, 6.0], &rep).unwrap();
        assert!((m - 1.0).abs() < 1e-12);
        let (m, _) = score_consistency(&[3.0, 2.0, 1.0], &rep).unwrap();
        assert!(m < 0.0);
        assert!(score_consistency(&[1.0, 1.0, 1.0], &rep).is_err());
    }
}
