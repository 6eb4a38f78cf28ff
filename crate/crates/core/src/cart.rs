//! Greedy CART regression trees with surrogate splits, scored with the
//! RPART importance formula. This is the biased comparator: the split
//! variable is chosen jointly with the split by impurity decrease, which
//! favours predictors that offer many candidate splits.

use serde::Serialize;

use crate::dataset::{Column, ColumnData, Dataset};
use crate::guide::TreeConfig;
use crate::split::{best_split, Split};

/// Left/right rule of a surrogate. Unlike primary splits an ordinal
/// surrogate may send either side of its threshold left.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SurrogateRule {
    Ordinal { threshold: f64, le_goes_left: bool },
    Categorical { left_levels: Vec<u32> },
}

impl SurrogateRule {
    /// `None` when the row is missing this variable.
    pub fn goes_left(&self, col: &Column, row: usize) -> Option<bool> {
        match (self, &col.data) {
            (
                SurrogateRule::Ordinal {
                    threshold,
                    le_goes_left,
                },
                ColumnData::Ordinal(v),
            ) => v[row].map(|x| (x <= *threshold) == *le_goes_left),
            (SurrogateRule::Categorical { left_levels }, ColumnData::Categorical { codes, .. }) => {
                codes[row].map(|c| left_levels.binary_search(&c).is_ok())
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurrogateSplit {
    pub variable: usize,
    pub rule: SurrogateRule,
    /// Rows (non-missing in both variables) sent the same way as the primary.
    pub agreement: usize,
    /// `(k - max(n_L, n_R)) / min(n_L, n_R)`.
    pub adjusted_agreement: f64,
    /// Impurity decrease of the surrogate itself over the node rows where
    /// its variable is observed.
    pub decrease: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CartNode {
    pub depth: usize,
    pub rows: Vec<usize>,
    pub mean_y: f64,
    pub sse: f64,
    pub split: Option<Split>,
    /// Retained surrogates (`a > 0`), best first.
    pub surrogates: Vec<SurrogateSplit>,
    pub children: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CartTree {
    pub nodes: Vec<CartNode>,
    pub n_predictors: usize,
}

fn observed(col: &Column, rows: &[usize]) -> Vec<usize> {
    rows.iter()
        .copied()
        .filter(|&r| !col.is_missing(r))
        .collect()
}

fn sse_of(y: &[f64], rows: &[usize]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let mean = rows.iter().map(|&r| y[r]).sum::<f64>() / rows.len() as f64;
    rows.iter().map(|&r| (y[r] - mean) * (y[r] - mean)).sum()
}

/// Best split over all variables, each searched on its observed rows.
/// Ties (within `1e-10 * sse`) go to the smaller variable index.
fn best_primary(ds: &Dataset, rows: &[usize], min_child: usize) -> Option<Split> {
    let tol = 1e-10 * sse_of(ds.response(), rows);
    let mut best: Option<Split> = None;
    for (k, col) in ds.predictors().iter().enumerate() {
        let obs = observed(col, rows);
        if let Some((rule, dec)) = best_split(col, ds.response(), &obs, min_child) {
            if best
                .as_ref()
                .is_none_or(|b| dec > b.impurity_decrease + tol)
            {
                best = Some(Split {
                    variable: k,
                    rule,
                    impurity_decrease: dec,
                });
            }
        }
    }
    best
}

/// For each other variable, the split that best reproduces the primary's
/// left/right assignment. Surrogates with adjusted agreement `<= 0` (no
/// better than sending everything to the larger child) are dropped.
pub fn find_surrogates(ds: &Dataset, rows: &[usize], primary: &Split) -> Vec<SurrogateSplit> {
    let pcol = ds.predictor(primary.variable);
    let y = ds.response();
    let mut out = Vec::new();
    for (j, col) in ds.predictors().iter().enumerate() {
        if j == primary.variable {
            continue;
        }
        // (row, primary sends left) over rows observed in both variables.
        let pairs: Vec<(usize, bool)> = rows
            .iter()
            .filter(|&&r| !pcol.is_missing(r) && !col.is_missing(r))
            .map(|&r| (r, primary.rule.goes_left(pcol, r)))
            .collect();
        let n_left = pairs.iter().filter(|p| p.1).count();
        let n_right = pairs.len() - n_left;
        if n_left == 0 || n_right == 0 {
            continue;
        }
        let Some((rule, agreement)) = best_agreement(col, &pairs) else {
            continue;
        };
        let a = (agreement as f64 - n_left.max(n_right) as f64) / n_left.min(n_right) as f64;
        if a <= 0.0 {
            continue;
        }
        let obs = observed(col, rows);
        let (l, r): (Vec<usize>, Vec<usize>) = obs
            .iter()
            .partition(|&&i| rule.goes_left(col, i) == Some(true));
        let decrease = sse_of(y, &obs) - sse_of(y, &l) - sse_of(y, &r);
        out.push(SurrogateSplit {
            variable: j,
            rule,
            agreement,
            adjusted_agreement: a,
            decrease,
        });
    }
    out.sort_by(|a, b| {
        b.adjusted_agreement
            .total_cmp(&a.adjusted_agreement)
            .then(a.variable.cmp(&b.variable))
    });
    out
}

fn best_agreement(col: &Column, pairs: &[(usize, bool)]) -> Option<(SurrogateRule, usize)> {
    match &col.data {
        ColumnData::Ordinal(values) => {
            let mut sorted: Vec<(f64, bool)> = pairs
                .iter()
                .map(|&(r, l)| (values[r].unwrap(), l))
                .collect();
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let total = sorted.len();
            let total_left = sorted.iter().filter(|p| p.1).count();
            let mut best: Option<(SurrogateRule, usize)> = None;
            let mut prefix_left = 0;
            for i in 0..total.saturating_sub(1) {
                if sorted[i].1 {
                    prefix_left += 1;
                }
                let (a, b) = (sorted[i].0, sorted[i + 1].0);
                if a == b {
                    continue;
                }
                let prefix = i + 1;
                // `x <= c` goes left: agree on left rows in the prefix and
                // right rows in the suffix.
                let le_left = prefix_left + (total - prefix) - (total_left - prefix_left);
                let le_right = total - le_left;
                let mut threshold = a + (b - a) / 2.0;
                if threshold >= b {
                    threshold = a;
                }
                for (agree, le_goes_left) in [(le_left, true), (le_right, false)] {
                    if best.as_ref().is_none_or(|(_, k)| agree > *k) {
                        best = Some((
                            SurrogateRule::Ordinal {
                                threshold,
                                le_goes_left,
                            },
                            agree,
                        ));
                    }
                }
            }
            best
        }
        ColumnData::Categorical { codes, .. } => {
            let mut counts: std::collections::BTreeMap<u32, (usize, usize)> = Default::default();
            for &(r, left) in pairs {
                let e = counts.entry(codes[r].unwrap()).or_default();
                if left {
                    e.0 += 1
                } else {
                    e.1 += 1
                }
            }
            let left_levels: Vec<u32> = counts
                .iter()
                .filter(|(_, c)| c.0 > c.1)
                .map(|(&l, _)| l)
                .collect();
            if left_levels.is_empty() || left_levels.len() == counts.len() {
                return None;
            }
            let agreement = counts.values().map(|c| c.0.max(c.1)).sum();
            Some((SurrogateRule::Categorical { left_levels }, agreement))
        }
    }
}

/// Grow the comparator tree. Rows missing the primary variable follow the
/// first surrogate they are observed on, otherwise the larger child.
pub fn grow_cart(ds: &Dataset, config: &TreeConfig) -> CartTree {
    let mut tree = CartTree {
        nodes: Vec::new(),
        n_predictors: ds.n_predictors(),
    };
    grow_node(ds, config, (0..ds.n_rows()).collect(), 0, &mut tree.nodes);
    tree
}

fn grow_node(
    ds: &Dataset,
    config: &TreeConfig,
    rows: Vec<usize>,
    depth: usize,
    nodes: &mut Vec<CartNode>,
) -> usize {
    let y = ds.response();
    let mean_y = rows.iter().map(|&r| y[r]).sum::<f64>() / rows.len() as f64;
    let sse = sse_of(y, &rows);
    let id = nodes.len();
    nodes.push(CartNode {
        depth,
        rows,
        mean_y,
        sse,
        split: None,
        surrogates: Vec::new(),
        children: None,
    });
    let rows = &nodes[id].rows;
    if depth >= config.max_split_depth || rows.len() < config.min_node_to_split {
        return id;
    }
    let Some(primary) = best_primary(ds, rows, config.min_child) else {
        return id;
    };
    let surrogates = find_surrogates(ds, rows, &primary);
    let pcol = ds.predictor(primary.variable);
    let (mut n_left, mut n_right) = (0usize, 0usize);
    for &r in rows {
        if !pcol.is_missing(r) {
            if primary.rule.goes_left(pcol, r) {
                n_left += 1
            } else {
                n_right += 1
            }
        }
    }
    let majority_left = n_left >= n_right;
    let (left, right): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| {
        if !pcol.is_missing(r) {
            return primary.rule.goes_left(pcol, r);
        }
        surrogates
            .iter()
            .find_map(|s| s.rule.goes_left(ds.predictor(s.variable), r))
            .unwrap_or(majority_left)
    });
    nodes[id].split = Some(primary);
    nodes[id].surrogates = surrogates;
    let l = grow_node(ds, config, left, depth + 1, nodes);
    let r = grow_node(ds, config, right, depth + 1, nodes);
    nodes[id].children = Some((l, r));
    id
}

/// `VI(X_i) = sum_{t in P(i)} Delta(s(t), t) + sum_{t in S(i)} a(s(t), s~(t)) Delta(s~(t), t)`.
pub fn rpart_importance(tree: &CartTree) -> Vec<f64> {
    let mut vi = vec![0.0; tree.n_predictors];
    for node in &tree.nodes {
        let Some(split) = &node.split else { continue };
        vi[split.variable] += split.impurity_decrease;
        for s in &node.surrogates {
            vi[s.variable] += s.adjusted_agreement * s.decrease;
        }
    }
    vi
}
