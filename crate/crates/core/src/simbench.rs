//! Simulation benchmark: the eleven-predictor design, models E0-E5, and
//! repeated-trial bias experiments judged by 2-SE interval overlap.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::Serialize;

use crate::cart::{grow_cart, rpart_importance};
use crate::dataset::{Column, ColumnData, Dataset};
use crate::error::{Error, Result};
use crate::guide::TreeConfig;
use crate::importance::{bias_adjusted, ImportanceReport};
use crate::rng;
use crate::stats::{mean_se, median};

pub const PREDICTOR_NAMES: [&str; 11] = [
    "B1", "B2", "C1", "C2", "N1", "N2", "N3", "N4", "S1", "S2", "S3",
];
pub const DEFAULT_N: usize = 400;
/// Pairwise correlation of N2, N3, N4.
pub const RHO: f64 = 0.9;

const B1: usize = 0;
const B2: usize = 1;
const C1: usize = 2;
const N1: usize = 4;
const N2: usize = 5;

const TAG_PERM: u64 = 0x5045_524d;
const TAG_MCAR: u64 = 0x4d43_4152;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum SimModel {
    E0,
    E1,
    E2,
    E3,
    E4,
    E5,
}

impl SimModel {
    pub const ALL: [SimModel; 6] = [
        SimModel::E0,
        SimModel::E1,
        SimModel::E2,
        SimModel::E3,
        SimModel::E4,
        SimModel::E5,
    ];

    /// Mean function on row `i` of the generated predictors.
    pub fn mu(self, x: &[Column], i: usize) -> f64 {
        let num = |k: usize| match &x[k].data {
            ColumnData::Ordinal(v) => v[i].expect("simulated predictors are complete"),
            ColumnData::Categorical { codes, .. } => {
                (codes[i].expect("simulated predictors are complete") + 1) as f64
            }
        };
        match self {
            SimModel::E0 => 0.0,
            SimModel::E1 => 0.2 * num(N2),
            SimModel::E2 => 0.1 * (num(N1) + num(N2)),
            SimModel::E3 => 0.2 * num(B1),
            SimModel::E4 => 0.2 * num(B2),
            SimModel::E5 => {
                let (b1, c1) = (num(B1), num(C1));
                let hit = (b1 == 0.0 && c1 <= 5.0) || (b1 == 1.0 && c1 > 5.0);
                if hit {
                    0.5
                } else {
                    0.0
                }
            }
        }
    }
}

impl fmt::Display for SimModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for SimModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SimModel::ALL
            .into_iter()
            .find(|m| m.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Validation(format!("unknown model '{s}' (expected E0..E5)")))
    }
}

/// Which importance method a bias experiment scores with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Guide,
    Cart,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Guide => "guide",
            Method::Cart => "cart",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "guide" => Ok(Method::Guide),
            "cart" => Ok(Method::Cart),
            _ => Err(Error::Validation(format!(
                "unknown method '{s}' (expected guide or cart)"
            ))),
        }
    }
}

/// Whether `gen_response` adds standard-normal noise. `Suppressed` exposes
/// the mean function for deterministic checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Noise {
    Standard,
    Suppressed,
}

/// Generate the eleven predictors. B1, B2 are ordinal 0/1; C1, C2 are
/// categorical with levels "1".."10".
pub fn gen_predictors<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Column> {
    let coin = Bernoulli::new(0.5).unwrap();
    let digit = Uniform::new_inclusive(1u32, 10).unwrap();
    let unit = Uniform::new(0.0f64, 1.0).unwrap();
    let l32 = (RHO - RHO * RHO) / (1.0 - RHO * RHO).sqrt();
    let l33 = (1.0 - RHO * RHO - l32 * l32).sqrt();
    let l22 = (1.0 - RHO * RHO).sqrt();

    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(n); 11];
    for _ in 0..n {
        let b1 = if coin.sample(rng) { 1.0 } else { 0.0 };
        let c1 = digit.sample(rng) as f64;
        let c2 = digit.sample(rng) as f64;
        let b2 = if c2 <= 5.0 { 1.0 } else { 0.0 };
        let n1: f64 = StandardNormal.sample(rng);
        let (z1, z2, z3): (f64, f64, f64) = (
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let n2 = z1;
        let n3 = RHO * z1 + l22 * z2;
        let n4 = RHO * z1 + l32 * z2 + l33 * z3;
        let (u1, u2) = (unit.sample(rng), unit.sample(rng));
        let (lo, hi) = if u1 <= u2 { (u1, u2) } else { (u2, u1) };
        let row = [b1, b2, c1, c2, n1, n2, n3, n4, lo, hi - lo, 1.0 - hi];
        for (c, x) in cols.iter_mut().zip(row) {
            c.push(x);
        }
    }
    let levels: Vec<String> = (1..=10).map(|d| d.to_string()).collect();
    cols.into_iter()
        .zip(PREDICTOR_NAMES)
        .map(|(v, name)| {
            if name.starts_with('C') {
                let codes = v.into_iter().map(|x| Some(x as u32 - 1)).collect();
                Column::categorical(name, codes, levels.clone()).unwrap()
            } else {
                Column::ordinal(name, v.into_iter().map(Some).collect()).unwrap()
            }
        })
        .collect()
}

pub fn gen_response<R: Rng + ?Sized>(
    model: SimModel,
    x: &[Column],
    rng: &mut R,
    noise: Noise,
) -> Vec<f64> {
    let n = x.first().map_or(0, Column::len);
    (0..n)
        .map(|i| {
            let eps: f64 = match noise {
                Noise::Standard => StandardNormal.sample(rng),
                Noise::Suppressed => 0.0,
            };
            model.mu(x, i) + eps
        })
        .collect()
}

/// One simulated dataset with response named "Y".
pub fn simulate<R: Rng + ?Sized>(model: SimModel, n: usize, rng: &mut R) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Domain("need at least one row".into()));
    }
    let x = gen_predictors(n, rng);
    let y = gen_response(model, &x, rng, Noise::Standard);
    Dataset::new("Y", y, x)
}

/// Missing-completely-at-random masking: each listed predictor loses each
/// value independently with probability `fraction`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mcar {
    pub variables: Vec<String>,
    pub fraction: f64,
}

impl Mcar {
    pub fn apply<R: Rng + ?Sized>(&self, ds: &Dataset, rng: &mut R) -> Result<Dataset> {
        if !(0.0..1.0).contains(&self.fraction) {
            return Err(Error::Domain(format!(
                "missing fraction {} outside [0, 1)",
                self.fraction
            )));
        }
        let mut cols = ds.predictors().to_vec();
        for name in &self.variables {
            let col = cols
                .iter_mut()
                .find(|c| &c.name == name)
                .ok_or_else(|| Error::Validation(format!("no predictor named '{name}'")))?;
            let drop: Vec<bool> = (0..col.len())
                .map(|_| rng.random_bool(self.fraction))
                .collect();
            match &mut col.data {
                ColumnData::Ordinal(v) => v
                    .iter_mut()
                    .zip(&drop)
                    .filter(|(_, &d)| d)
                    .for_each(|(x, _)| *x = None),
                ColumnData::Categorical { codes, .. } => codes
                    .iter_mut()
                    .zip(&drop)
                    .filter(|(_, &d)| d)
                    .for_each(|(x, _)| *x = None),
            }
        }
        Dataset::new(ds.response_name(), ds.response().to_vec(), cols)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasConfig {
    pub method: Method,
    pub model: SimModel,
    pub trials: usize,
    pub n: usize,
    /// Permutations per trial (GUIDE only).
    pub b: usize,
    pub seed: u64,
    pub mcar: Option<Mcar>,
    pub tree: TreeConfig,
}

impl BiasConfig {
    pub fn new(method: Method, model: SimModel, trials: usize, b: usize, seed: u64) -> Self {
        BiasConfig {
            method,
            model,
            trials,
            n: DEFAULT_N,
            b,
            seed,
            mcar: None,
            tree: TreeConfig::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.trials < 2 {
            return Err(Error::Domain("need at least two trials".into()));
        }
        if self.n < 2 {
            return Err(Error::Domain("need at least two rows per trial".into()));
        }
        if self.method == Method::Guide && self.b == 0 {
            return Err(Error::Domain("need at least one permutation".into()));
        }
        self.tree.validate()
    }
}

/// Dataset for trial `t`: predictors, response and masking all come from
/// streams indexed by `t`, so any trial can be regenerated alone.
pub fn trial_dataset(config: &BiasConfig, t: usize) -> Result<Dataset> {
    let ds = simulate(
        config.model,
        config.n,
        &mut rng::derive(config.seed, t as u64),
    )?;
    match &config.mcar {
        Some(mcar) => mcar.apply(
            &ds,
            &mut rng::derive(rng::mix(config.seed, TAG_MCAR, 0), t as u64),
        ),
        None => Ok(ds),
    }
}

/// Per-trial GUIDE reports (bias-adjusted, not thresholded), in trial order.
pub fn guide_trials(config: &BiasConfig) -> Result<Vec<ImportanceReport>> {
    config.validate()?;
    (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let ds = trial_dataset(config, t)?;
            bias_adjusted(
                &ds,
                &config.tree,
                config.b,
                rng::mix(config.seed, TAG_PERM, t as u64),
            )
        })
        .collect()
}

/// Per-trial scores (trial × variable) for either method.
pub fn trial_scores(config: &BiasConfig) -> Result<Vec<Vec<f64>>> {
    match config.method {
        Method::Guide => Ok(guide_trials(config)?
            .iter()
            .map(ImportanceReport::vi)
            .collect()),
        Method::Cart => {
            config.validate()?;
            (0..config.trials)
                .into_par_iter()
                .map(|t| {
                    Ok(rpart_importance(&grow_cart(
                        &trial_dataset(config, t)?,
                        &config.tree,
                    )))
                })
                .collect()
        }
    }
}

pub fn run_bias_experiment(config: &BiasConfig) -> Result<BiasReport> {
    let scores = trial_scores(config)?;
    Ok(BiasReport::from_scores(
        PREDICTOR_NAMES.iter().map(|s| s.to_string()).collect(),
        scores,
    ))
}

/// Bias audit on real data: score `j` response permutations of `ds`, so
/// every predictor is null, and summarise as a [`BiasReport`]. GUIDE scores
/// use `b` inner permutations each.
pub fn permutation_bias(
    ds: &Dataset,
    method: Method,
    j: usize,
    b: usize,
    tree: &TreeConfig,
    seed: u64,
) -> Result<BiasReport> {
    if j < 2 {
        return Err(Error::Domain("need at least two permutations".into()));
    }
    if method == Method::Guide && b == 0 {
        return Err(Error::Domain("need at least one inner permutation".into()));
    }
    tree.validate()?;
    let scores = (0..j)
        .into_par_iter()
        .map(|t| {
            let perm = ds.permute_response(&mut rng::derive(seed, t as u64));
            match method {
                Method::Guide => {
                    Ok(bias_adjusted(&perm, tree, b, rng::mix(seed, TAG_PERM, t as u64))?.vi())
                }
                Method::Cart => Ok(rpart_importance(&grow_cart(&perm, tree))),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BiasReport::from_scores(ds.predictor_names(), scores))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasReport {
    pub names: Vec<String>,
    pub trials: usize,
    pub means: Vec<f64>,
    /// Sample sd / sqrt(trials).
    pub ses: Vec<f64>,
    pub medians: Vec<f64>,
    pub verdict: bool,
    /// Trial × variable.
    pub scores: Vec<Vec<f64>>,
}

impl BiasReport {
    pub fn from_scores(names: Vec<String>, scores: Vec<Vec<f64>>) -> Self {
        let k = names.len();
        let column = |j: usize| -> Vec<f64> { scores.iter().map(|row| row[j]).collect() };
        let (means, ses): (Vec<f64>, Vec<f64>) = (0..k).map(|j| mean_se(&column(j))).unzip();
        let medians = (0..k).map(|j| median(&column(j))).collect();
        let verdict = overlap_verdict(&means, &ses);
        BiasReport {
            names,
            trials: scores.len(),
            means,
            ses,
            medians,
            verdict,
            scores,
        }
    }

    /// Names of the `count` variables with the largest medians, ties to the
    /// smaller index.
    pub fn top_by_median(&self, count: usize) -> Vec<&str> {
        top_k(&self.medians, count)
            .into_iter()
            .map(|j| self.names[j].as_str())
            .collect()
    }
}

/// Indices of the `count` largest values, ties to the smaller index.
pub fn top_k(values: &[f64], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order.truncate(count);
    order
}

/// True iff every pair of `mean ± 2 se` intervals intersects (touching
/// counts). The comparison allows a relative slack of 1e-12 so intervals
/// that touch in exact arithmetic are not split by rounding.
pub fn overlap_verdict(means: &[f64], ses: &[f64]) -> bool {
    assert_eq!(means.len(), ses.len(), "means and ses differ in length");
    // All pairs intersect iff the largest lower end is <= the smallest upper end.
    let lo = means
        .iter()
        .zip(ses)
        .map(|(m, s)| m - 2.0 * s)
        .fold(f64::NEG_INFINITY, f64::max);
    let hi = means
        .iter()
        .zip(ses)
        .map(|(m, s)| m + 2.0 * s)
        .fold(f64::INFINITY, f64::min);
    lo <= hi + 1e-12 * lo.abs().max(hi.abs())
}

/// Fraction of reports with at least one variable flagged at `alpha`.
pub fn null_flag_rate(reports: &[ImportanceReport], alpha: f64) -> Result<f64> {
    let mut hits = 0usize;
    for r in reports {
        if crate::importance::threshold(r.clone(), alpha)?
            .m
            .unwrap_or(0)
            >= 1
        {
            hits += 1;
        }
    }
    Ok(hits as f64 / reports.len().max(1) as f64)
}
