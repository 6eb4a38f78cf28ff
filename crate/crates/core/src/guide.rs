//! Shallow unpruned GUIDE regression trees used for importance scoring.
//!
//! At every node the residual signs define a two-class variable `Z`. Each
//! predictor is tested against `Z` with a chi-squared test (ordinal
//! predictors binned at node-local quantiles, missing values as an extra
//! category). When no single test is significant after a Bonferroni
//! correction, pairwise interaction tests are run and the best pair may
//! replace the two marginal p-values. The split variable is the one with
//! the smallest p-value; the split itself minimizes the child sums of
//! squares.

use std::fmt::Write as _;

use serde::Serialize;

use crate::dataset::{Column, ColumnData, Dataset};
use crate::error::{Error, Result};
use crate::split::{best_split, Split};
use crate::stats::{bin_of, chisq_test, quantile_cuts, ContingencyTable, PValue};

/// Node size below which ordinal predictors get 3 bins instead of 4.
pub const FOUR_BIN_MIN_NODE: usize = 60;
/// Level of the first Bonferroni correction (divided by `K`).
pub const MARGINAL_ALPHA: f64 = 0.10;
/// Level of the second Bonferroni correction (divided by `K(K-1)`).
pub const INTERACTION_ALPHA: f64 = 0.20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TreeConfig {
    /// Nodes at depth `< max_split_depth` may split; 4 means split nodes at
    /// depths 0..=3 and at most 15 of them.
    pub max_split_depth: usize,
    pub min_node_to_split: usize,
    pub min_child: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_split_depth: 4,
            min_node_to_split: 8,
            min_child: 2,
        }
    }
}

impl TreeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_child == 0 || self.min_node_to_split < 2 * self.min_child {
            return Err(Error::Domain(format!(
                "min_node_to_split ({}) must be at least 2 * min_child ({})",
                self.min_node_to_split, self.min_child
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairTest {
    pub j: usize,
    pub k: usize,
    pub p: PValue,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeTests {
    /// Per-variable p-values after any interaction overwrite.
    pub p1: Vec<PValue>,
    pub p2_best: Option<PairTest>,
    pub interaction_triggered: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub depth: usize,
    pub rows: Vec<usize>,
    pub mean_y: f64,
    pub sse: f64,
    /// Present on intermediate (split) nodes only.
    pub tests: Option<NodeTests>,
    pub split: Option<Split>,
    pub children: Option<(usize, usize)>,
}

impl Node {
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn is_intermediate(&self) -> bool {
        self.split.is_some()
    }
}

/// Nodes in pre-order; index 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
    pub n_predictors: usize,
}

impl Tree {
    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn intermediate_nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.is_intermediate())
    }

    /// Index of the leaf that `row` of `ds` falls into.
    pub fn leaf_index(&self, ds: &Dataset, row: usize) -> usize {
        let mut at = 0;
        while let (Some(split), Some((l, r))) = (&self.nodes[at].split, self.nodes[at].children) {
            at = if split.rule.goes_left(ds.predictor(split.variable), row) {
                l
            } else {
                r
            };
        }
        at
    }

    pub fn predict(&self, ds: &Dataset, row: usize) -> f64 {
        self.nodes[self.leaf_index(ds, row)].mean_y
    }

    /// Human-readable dump for debugging; not a stable format.
    pub fn dump(&self, ds: &Dataset) -> String {
        let mut out = String::new();
        for (id, node) in self.nodes.iter().enumerate() {
            let indent = "  ".repeat(node.depth);
            let _ = write!(
                out,
                "{indent}[{id}] depth={} n={} mean={:.6}",
                node.depth,
                node.n(),
                node.mean_y
            );
            if let Some(split) = &node.split {
                let _ = write!(
                    out,
                    " split: {}",
                    split.rule.describe(ds.predictor(split.variable))
                );
            }
            if let Some(tests) = &node.tests {
                let min = tests.p1.iter().map(|p| p.p).fold(f64::INFINITY, f64::min);
                let _ = write!(out, " min_p1={min:.3e}");
                if tests.interaction_triggered {
                    out.push_str(" (interaction scan)");
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Residual-sign classes: 1 for a positive residual, 2 otherwise.
pub fn residual_classes(y: &[f64]) -> Vec<u8> {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    y.iter()
        .map(|&v| if v - mean > 0.0 { 1 } else { 2 })
        .collect()
}

/// Z-by-category counts for one predictor at a node. `z[i]` belongs to
/// `rows[i]`.
pub fn curvature_table(col: &Column, rows: &[usize], z: &[u8]) -> ContingencyTable {
    let (codes, n_cols) = curvature_codes(col, rows);
    crosstab(&codes, n_cols, z)
}

fn crosstab(codes: &[u32], n_cols: usize, z: &[u8]) -> ContingencyTable {
    let mut counts = vec![0u64; 2 * n_cols];
    for (&c, &zi) in codes.iter().zip(z) {
        counts[(zi as usize - 1) * n_cols + c as usize] += 1;
    }
    ContingencyTable::new(2, n_cols, counts).expect("crosstab dimensions")
}

fn curvature_codes(col: &Column, rows: &[usize]) -> (Vec<u32>, usize) {
    match &col.data {
        ColumnData::Ordinal(values) => {
            let m = if rows.len() < FOUR_BIN_MIN_NODE { 3 } else { 4 };
            ordinal_codes(values, rows, m)
        }
        ColumnData::Categorical { codes, levels } => categorical_codes(codes, levels.len(), rows),
    }
}

/// Bin ordinal values at node-local quantiles into `m` groups; missing
/// values, if any, form group `m`.
fn ordinal_codes(values: &[Option<f64>], rows: &[usize], m: usize) -> (Vec<u32>, usize) {
    let mut sorted: Vec<f64> = rows.iter().filter_map(|&r| values[r]).collect();
    let has_missing = sorted.len() < rows.len();
    if sorted.is_empty() {
        return (vec![0; rows.len()], 1);
    }
    sorted.sort_by(f64::total_cmp);
    let cuts = quantile_cuts(&sorted, m);
    let codes = rows
        .iter()
        .map(|&r| match values[r] {
            Some(x) => bin_of(x, &cuts) as u32,
            None => m as u32,
        })
        .collect();
    (codes, m + usize::from(has_missing))
}

fn categorical_codes(codes: &[Option<u32>], n_levels: usize, rows: &[usize]) -> (Vec<u32>, usize) {
    let mut has_missing = false;
    let out = rows
        .iter()
        .map(|&r| {
            codes[r].unwrap_or_else(|| {
                has_missing = true;
                n_levels as u32
            })
        })
        .collect();
    (out, n_levels + usize::from(has_missing))
}

/// Three-level coding used by the interaction tests: tertiles when the node
/// has no missing values, otherwise a median cut plus a missing category.
fn interaction_codes(col: &Column, rows: &[usize]) -> (Vec<u32>, usize) {
    match &col.data {
        ColumnData::Ordinal(values) => {
            let missing = rows.iter().any(|&r| values[r].is_none());
            if missing {
                let (codes, _) = ordinal_codes(values, rows, 2);
                (codes, 3)
            } else {
                ordinal_codes(values, rows, 3)
            }
        }
        ColumnData::Categorical { codes, levels } => {
            let (c, _) = categorical_codes(codes, levels.len(), rows);
            (c, levels.len() + 1)
        }
    }
}

/// Per-variable curvature p-values at a node.
pub fn curvature_tests(ds: &Dataset, rows: &[usize], z: &[u8]) -> Vec<PValue> {
    ds.predictors()
        .iter()
        .map(|col| {
            chisq_test(&curvature_table(col, rows, z))
                .map(|t| t.pvalue())
                .unwrap_or(PValue::ONE)
        })
        .collect()
}

/// Whether the pairwise scan runs: `min_k p1 >= 0.10 / K`, and `K >= 2`.
pub fn interaction_triggered(p1: &[PValue]) -> bool {
    let k = p1.len();
    if k < 2 {
        return false;
    }
    let min = p1.iter().map(|p| p.p).fold(f64::INFINITY, f64::min);
    min >= MARGINAL_ALPHA / k as f64
}

/// Apply the pair results of a triggered scan: the smallest `p2` (first in
/// `(j, k)` order on ties) replaces `p1[j]` and `p1[k]` when it is below
/// `0.20 / (K (K - 1))`.
pub fn apply_pair_tests(mut tests: NodeTests, pairs: &[PairTest]) -> NodeTests {
    tests.interaction_triggered = true;
    let mut best: Option<PairTest> = None;
    for pt in pairs {
        let better = match &best {
            None => true,
            Some(b) => pt.p.ln_p < b.p.ln_p || (pt.p.ln_p == b.p.ln_p && (pt.j, pt.k) < (b.j, b.k)),
        };
        if better {
            best = Some(*pt);
        }
    }
    let k = tests.p1.len() as f64;
    if let Some(b) = best {
        if b.p.p < INTERACTION_ALPHA / (k * (k - 1.0)) {
            tests.p1[b.j] = b.p;
            tests.p1[b.k] = b.p;
        }
    }
    tests.p2_best = best;
    tests
}

/// Run the pairwise interaction scan if the marginal tests call for it.
pub fn interaction_scan(ds: &Dataset, rows: &[usize], z: &[u8], tests: NodeTests) -> NodeTests {
    if !interaction_triggered(&tests.p1) {
        return tests;
    }
    let coded: Vec<(Vec<u32>, usize)> = ds
        .predictors()
        .iter()
        .map(|col| interaction_codes(col, rows))
        .collect();
    let k = coded.len();
    let mut pairs = Vec::with_capacity(k * (k - 1) / 2);
    let mut cross = vec![0u32; rows.len()];
    for j in 0..k {
        for l in (j + 1)..k {
            let (cj, _) = &coded[j];
            let (cl, nl) = &coded[l];
            for (i, c) in cross.iter_mut().enumerate() {
                *c = cj[i] * *nl as u32 + cl[i];
            }
            let n_cols = coded[j].1 * nl;
            let p = chisq_test(&crosstab(&cross, n_cols, z))
                .map(|t| t.pvalue())
                .unwrap_or(PValue::ONE);
            pairs.push(PairTest { j, k: l, p });
        }
    }
    apply_pair_tests(tests, &pairs)
}

/// Smallest index attaining the minimum p-value.
pub fn select_variable(p1: &[PValue]) -> usize {
    let mut best = 0;
    for (k, p) in p1.iter().enumerate().skip(1) {
        if p.ln_p < p1[best].ln_p {
            best = k;
        }
    }
    best
}

/// All tests at a node: curvature, then the interaction scan.
pub fn node_tests(ds: &Dataset, rows: &[usize]) -> NodeTests {
    let y: Vec<f64> = rows.iter().map(|&r| ds.response()[r]).collect();
    let z = residual_classes(&y);
    let tests = NodeTests {
        p1: curvature_tests(ds, rows, &z),
        p2_best: None,
        interaction_triggered: false,
    };
    interaction_scan(ds, rows, &z, tests)
}

/// Grow the scoring tree on every row of `ds`. Deterministic.
pub fn grow_tree(ds: &Dataset, config: &TreeConfig) -> Tree {
    let rows: Vec<usize> = (0..ds.n_rows()).collect();
    grow_tree_on(ds, config, rows)
}

pub(crate) fn grow_tree_on(ds: &Dataset, config: &TreeConfig, rows: Vec<usize>) -> Tree {
    let mut tree = Tree {
        nodes: Vec::new(),
        n_predictors: ds.n_predictors(),
    };
    grow_node(ds, config, rows, 0, &mut tree.nodes);
    tree
}

fn grow_node(
    ds: &Dataset,
    config: &TreeConfig,
    rows: Vec<usize>,
    depth: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let y = ds.response();
    let n = rows.len() as f64;
    let mean_y = rows.iter().map(|&r| y[r]).sum::<f64>() / n;
    let sse = rows
        .iter()
        .map(|&r| (y[r] - mean_y) * (y[r] - mean_y))
        .sum();
    let id = nodes.len();
    nodes.push(Node {
        depth,
        rows,
        mean_y,
        sse,
        tests: None,
        split: None,
        children: None,
    });

    let rows = &nodes[id].rows;
    if depth >= config.max_split_depth
        || rows.len() < config.min_node_to_split
        || ds.n_predictors() == 0
    {
        return id;
    }
    let tests = node_tests(ds, rows);
    let k = select_variable(&tests.p1);
    let col = ds.predictor(k);
    let Some((rule, decrease)) = best_split(col, y, rows, config.min_child) else {
        return id;
    };
    let (left, right): (Vec<usize>, Vec<usize>) =
        rows.iter().partition(|&&r| rule.goes_left(col, r));

    nodes[id].tests = Some(tests);
    nodes[id].split = Some(Split {
        variable: k,
        rule,
        impurity_decrease: decrease,
    });
    let l = grow_node(ds, config, left, depth + 1, nodes);
    let r = grow_node(ds, config, right, depth + 1, nodes);
    nodes[id].children = Some((l, r));
    id
}
