//! GUIDE importance scores.
//!
//! The raw score of a variable sums `sqrt(n_t)` times the chi-squared(1)
//! quantile of its node p-value over the intermediate nodes of a scoring
//! tree. Raw scores are divided by their mean over trees grown on
//! response-permuted copies of the data, and the maxima of the permuted raw
//! scores give a significance threshold.

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::guide::{grow_tree, Tree, TreeConfig};
use crate::rng;
use crate::stats::{chisq1_quantile, empirical_quantile};

pub const DEFAULT_PERMUTATIONS: usize = 300;
pub const DEFAULT_ALPHA: f64 = 0.05;

const TAG_ORACLE_OUTER: u64 = 0x6f75_7465;
const TAG_ORACLE_INNER: u64 = 0x696e_6e65;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariableScore {
    pub name: String,
    /// Raw score on the real data.
    pub v: f64,
    /// Mean raw score over the permuted-response trees.
    pub v_bar: f64,
    /// Bias-adjusted score `v / v_bar` (0 when `v_bar` is 0).
    pub vi: f64,
    pub normalized: f64,
    pub important: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImportanceReport {
    pub variables: Vec<VariableScore>,
    pub b: usize,
    pub seed: u64,
    pub alpha: Option<f64>,
    /// `(1 - alpha)`-quantile of `perm_max`.
    pub v_star: Option<f64>,
    /// Number of raw scores strictly above `v_star`.
    pub m: Option<usize>,
    pub v_tilde: Option<f64>,
    /// Largest raw score in each permuted tree, in permutation order.
    pub perm_max: Vec<f64>,
    pub warnings: Vec<String>,
}

impl ImportanceReport {
    pub fn vi(&self) -> Vec<f64> {
        self.variables.iter().map(|v| v.vi).collect()
    }

    pub fn raw(&self) -> Vec<f64> {
        self.variables.iter().map(|v| v.v).collect()
    }
}

/// `v(X_k) = sum_t sqrt(n_t) * chi2_1(k, t)` over intermediate nodes.
///
/// Each variable's node terms are summed in sorted order, so the score does
/// not depend on which child of a split is stored first.
pub fn raw_scores(tree: &Tree, k: usize) -> Vec<f64> {
    let mut terms = vec![Vec::new(); k];
    for node in tree.intermediate_nodes() {
        let Some(tests) = &node.tests else { continue };
        let w = (node.n() as f64).sqrt();
        for (t, p) in terms.iter_mut().zip(&tests.p1) {
            t.push(w * chisq1_quantile(p.p, p.ln_p));
        }
    }
    terms
        .into_iter()
        .map(|mut t| {
            t.sort_by(f64::total_cmp);
            t.iter().sum()
        })
        .collect()
}

/// Raw scores of trees grown on `b` response permutations. Permutation `i`
/// draws from stream `i` of `seed`, and the result is in permutation order
/// regardless of how the work is scheduled.
pub fn permutation_scores(ds: &Dataset, config: &TreeConfig, b: usize, seed: u64) -> Vec<Vec<f64>> {
    let k = ds.n_predictors();
    (0..b)
        .into_par_iter()
        .map(|i| {
            let perm = ds.permute_response(&mut rng::derive(seed, i as u64));
            raw_scores(&grow_tree(&perm, config), k)
        })
        .collect()
}

/// Raw scores, permutation means and bias-adjusted scores. Threshold
/// fields are left empty; see [`threshold`].
pub fn bias_adjusted(
    ds: &Dataset,
    config: &TreeConfig,
    b: usize,
    seed: u64,
) -> Result<ImportanceReport> {
    if b == 0 {
        return Err(Error::Domain("need at least one permutation".into()));
    }
    config.validate()?;
    let k = ds.n_predictors();
    let v = raw_scores(&grow_tree(ds, config), k);
    let perms = permutation_scores(ds, config, b, seed);

    let mut v_bar = vec![0.0; k];
    for row in &perms {
        for (acc, x) in v_bar.iter_mut().zip(row) {
            *acc += x;
        }
    }
    for x in &mut v_bar {
        *x /= b as f64;
    }
    let perm_max = perms
        .iter()
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();

    let variables = ds
        .predictor_names()
        .into_iter()
        .enumerate()
        .map(|(i, name)| {
            let vi = if v_bar[i] > 0.0 { v[i] / v_bar[i] } else { 0.0 };
            VariableScore {
                name,
                v: v[i],
                v_bar: v_bar[i],
                vi,
                normalized: vi,
                important: false,
            }
        })
        .collect();
    Ok(ImportanceReport {
        variables,
        b,
        seed,
        alpha: None,
        v_star: None,
        m: None,
        v_tilde: None,
        perm_max,
        warnings: Vec::new(),
    })
}

/// Indices ordered by descending adjusted score, ties by smaller index.
fn rank_by_vi(report: &ImportanceReport) -> Vec<usize> {
    let mut order: Vec<usize> = (0..report.variables.len()).collect();
    order.sort_by(|&a, &b| {
        report.variables[b]
            .vi
            .total_cmp(&report.variables[a].vi)
            .then(a.cmp(&b))
    });
    order
}

/// Flag important variables at level `alpha` and normalize the scores.
///
/// `m` counts raw scores strictly above `v_star`; the `m` largest adjusted
/// scores are flagged. Scores are divided by the mean of the `m`-th and
/// `(m+1)`-th largest adjusted scores, or by the `m`-th when `m = K`. With
/// `m = 0` nothing is flagged and the normalized column repeats the
/// adjusted scores.
pub fn threshold(mut report: ImportanceReport, alpha: f64) -> Result<ImportanceReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha {alpha} outside (0, 1)")));
    }
    if report.perm_max.is_empty() {
        return Err(Error::Domain("report has no permutation maxima".into()));
    }
    let v_star = empirical_quantile(&report.perm_max, 1.0 - alpha)?;
    let k = report.variables.len();
    let m = report.variables.iter().filter(|v| v.v > v_star).count();
    let order = rank_by_vi(&report);
    report.warnings.retain(|w| !w.starts_with("normalization"));

    let v_tilde = match m {
        0 => None,
        m if m < k => {
            Some((report.variables[order[m - 1]].vi + report.variables[order[m]].vi) / 2.0)
        }
        _ => Some(report.variables[order[k - 1]].vi),
    };
    let v_tilde = match v_tilde {
        Some(t) if t > 0.0 => Some(t),
        Some(_) => {
            report
                .warnings
                .push("normalization constant is zero; normalized column repeats VI".into());
            None
        }
        None => {
            report
                .warnings
                .push("normalization undefined: no raw score exceeds v_star; normalized column repeats VI".into());
            None
        }
    };

    for (rank, &i) in order.iter().enumerate() {
        let var = &mut report.variables[i];
        var.important = rank < m;
        var.normalized = v_tilde.map_or(var.vi, |t| var.vi / t);
    }
    report.alpha = Some(alpha);
    report.v_star = Some(v_star);
    report.m = Some(m);
    report.v_tilde = v_tilde;
    Ok(report)
}

/// Full pipeline: adjusted scores followed by thresholding.
pub fn score(
    ds: &Dataset,
    config: &TreeConfig,
    b: usize,
    alpha: f64,
    seed: u64,
) -> Result<ImportanceReport> {
    threshold(bias_adjusted(ds, config, b, seed)?, alpha)
}

/// Two-level permutation estimate of the `(1 - alpha)`-quantile of
/// `max_i VI(X_i)` under the null. Each of `j_outer` response permutations
/// is scored with `b_inner` inner permutations. Expensive; meant for
/// validating the single-level threshold on small data.
pub fn exact_threshold_oracle(
    ds: &Dataset,
    config: &TreeConfig,
    alpha: f64,
    j_outer: usize,
    b_inner: usize,
    seed: u64,
) -> Result<f64> {
    if j_outer == 0 {
        return Err(Error::Domain("need at least one outer permutation".into()));
    }
    let outer_seed = rng::mix(seed, TAG_ORACLE_OUTER, 0);
    let maxima: Vec<f64> = (0..j_outer)
        .into_par_iter()
        .map(|j| {
            let perm = ds.permute_response(&mut rng::derive(outer_seed, j as u64));
            let rep = bias_adjusted(
                &perm,
                config,
                b_inner,
                rng::mix(seed, TAG_ORACLE_INNER, j as u64),
            )?;
            Ok(rep.vi().into_iter().fold(f64::NEG_INFINITY, f64::max))
        })
        .collect::<Result<_>>()?;
    empirical_quantile(&maxima, 1.0 - alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guide::{Node, NodeTests};
    use crate::stats::PValue;

    fn one_split_tree(p1: Vec<PValue>, n: usize) -> Tree {
        let node = |depth| Node {
            depth,
            rows: (0..n).collect(),
            mean_y: 0.0,
            sse: 0.0,
            tests: None,
            split: None,
            children: None,
        };
        let mut root = node(0);
        root.tests = Some(NodeTests {
            p1,
            p2_best: None,
            interaction_triggered: false,
        });
        root.split = Some(crate::split::Split {
            variable: 0,
            rule: crate::split::SplitRule::Ordinal {
                threshold: 0.0,
                missing: crate::split::Side::Right,
            },
            impurity_decrease: 1.0,
        });
        root.children = Some((1, 2));
        Tree {
            nodes: vec![root, node(1), node(1)],
            n_predictors: 2,
        }
    }

    #[test]
    fn leaf_only_tree_scores_zero() {
        let tree = Tree {
            nodes: vec![Node {
                depth: 0,
                rows: vec![0, 1],
                mean_y: 0.0,
                sse: 0.0,
                tests: None,
                split: None,
                children: None,
            }],
            n_predictors: 3,
        };
        assert_eq!(raw_scores(&tree, 3), vec![0.0; 3]);
    }

    #[test]
    fn root_only_scores() {
        let tree = one_split_tree(vec![PValue::ONE, PValue::from_p(0.5)], 400);
        let v = raw_scores(&tree, 2);
        assert_eq!(v[0], 0.0);
        // sqrt(400) * 0.454936
        assert!((v[1] - 9.0987).abs() < 1e-3, "{}", v[1]);
    }

    fn report(v: &[f64], vi: &[f64], perm_max: Vec<f64>) -> ImportanceReport {
        ImportanceReport {
            variables: v
                .iter()
                .zip(vi)
                .enumerate()
                .map(|(i, (&v, &vi))| VariableScore {
                    name: format!("x{i}"),
                    v,
                    v_bar: if vi > 0.0 { v / vi } else { 0.0 },
                    vi,
                    normalized: vi,
                    important: false,
                })
                .collect(),
            b: perm_max.len(),
            seed: 0,
            alpha: None,
            v_star: None,
            m: None,
            v_tilde: None,
            perm_max,
            warnings: vec![],
        }
    }

    #[test]
    fn threshold_walkthrough() {
        // 20 maxima whose 95th percentile (19th order statistic) is 6.
        let mut pm: Vec<f64> = (1..=18).map(|x| x as f64 * 0.1).collect();
        pm.extend([6.0, 7.0]);
        let r = threshold(report(&[10.0, 5.0, 1.0], &[3.0, 2.0, 1.0], pm), 0.05).unwrap();
        assert_eq!(r.v_star, Some(6.0));
        assert_eq!(r.m, Some(1));
        assert_eq!(r.v_tilde, Some(2.5));
        let norm: Vec<f64> = r.variables.iter().map(|v| v.normalized).collect();
        for (a, b) in norm.iter().zip([1.2, 0.8, 0.4]) {
            assert!((a - b).abs() < 1e-12);
        }
        let flags: Vec<bool> = r.variables.iter().map(|v| v.important).collect();
        assert_eq!(flags, vec![true, false, false]);
    }

    #[test]
    fn nothing_above_threshold() {
        let r = threshold(report(&[1.0, 2.0], &[0.9, 1.1], vec![5.0; 10]), 0.05).unwrap();
        assert_eq!(r.m, Some(0));
        assert!(r.variables.iter().all(|v| !v.important));
        assert_eq!(r.v_tilde, None);
        assert!(!r.warnings.is_empty());
    }

    #[test]
    fn tie_at_threshold_does_not_count() {
        let r = threshold(report(&[5.0, 1.0], &[2.0, 1.0], vec![5.0; 10]), 0.05).unwrap();
        assert_eq!(r.m, Some(0));
    }

    #[test]
    fn all_variables_flagged() {
        let r = threshold(report(&[10.0, 9.0], &[2.0, 1.5], vec![1.0; 10]), 0.05).unwrap();
        assert_eq!(r.m, Some(2));
        assert_eq!(r.v_tilde, Some(1.5));
        assert!(r
            .variables
            .iter()
            .all(|v| v.important && v.normalized >= 1.0));
    }

    #[test]
    fn alpha_domain() {
        assert!(threshold(report(&[1.0], &[1.0], vec![1.0]), 0.0).is_err());
        assert!(threshold(report(&[1.0], &[1.0], vec![1.0]), 1.0).is_err());
    }
}
