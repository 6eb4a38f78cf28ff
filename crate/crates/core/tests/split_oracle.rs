use rand::Rng;
use vimp_core::cart::{
    grow_cart, rpart_importance, CartNode, CartTree, SurrogateRule, SurrogateSplit,
};
use vimp_core::dataset::{Column, Dataset};
use vimp_core::guide::TreeConfig;
use vimp_core::rng;
use vimp_core::split::{best_split, Side, Split, SplitRule};

fn sse(y: &[f64], rows: &[usize]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let m = rows.iter().map(|&r| y[r]).sum::<f64>() / rows.len() as f64;
    rows.iter().map(|&r| (y[r] - m).powi(2)).sum()
}

fn realized_decrease(col: &Column, rule: &SplitRule, y: &[f64], rows: &[usize]) -> f64 {
    let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| rule.goes_left(col, i));
    sse(y, rows) - sse(y, &l) - sse(y, &r)
}

struct Instance {
    col: Column,
    y: Vec<f64>,
    oracle_best: Option<f64>,
}

fn random_instance(r: &mut impl Rng, categorical: bool) -> Instance {
    let n = r.random_range(2..=30);
    let y: Vec<f64> = (0..n)
        .map(|_| (r.random_range(-20..20) as f64) / 4.0)
        .collect();
    let miss = r.random_bool(0.5);
    let is_missing = |r: &mut dyn rand::RngCore| miss && r.random_bool(0.15);
    if categorical {
        let l = r.random_range(1..=5u32);
        let codes: Vec<Option<u32>> = (0..n)
            .map(|_| {
                if is_missing(r) {
                    None
                } else {
                    Some(r.random_range(0..l))
                }
            })
            .collect();
        let cands = vimp_oracle::categorical_candidates(&codes, &y, 2);
        let levels = (0..l).map(|i| format!("L{i}")).collect();
        Instance {
            col: Column::categorical("x", codes, levels).unwrap(),
            y,
            oracle_best: cands.iter().map(|c| c.decrease).reduce(f64::max),
        }
    } else {
        let distinct = r.random_range(1..=8);
        let xs: Vec<Option<f64>> = (0..n)
            .map(|_| {
                if is_missing(r) {
                    None
                } else {
                    Some(r.random_range(0..distinct) as f64 * 0.5)
                }
            })
            .collect();
        let cands = vimp_oracle::ordinal_candidates(&xs, &y, 2);
        Instance {
            col: Column::ordinal("x", xs).unwrap(),
            y,
            oracle_best: cands.iter().map(|c| c.decrease).reduce(f64::max),
        }
    }
}

/// The exhaustive enumeration agrees with the search on the best impurity
/// decrease; zero-gain candidates count as "no split".
#[test]
fn best_split_matches_exhaustive_enumeration() {
    let mut r = rng::derive(2024, 0);
    for i in 0..200 {
        let inst = random_instance(&mut r, i % 2 == 1);
        let rows: Vec<usize> = (0..inst.y.len()).collect();
        let tol = 1e-9 * (1.0 + sse(&inst.y, &rows));
        let oracle = inst.oracle_best.filter(|&d| d > tol);
        match (best_split(&inst.col, &inst.y, &rows, 2), oracle) {
            (None, None) => {}
            (Some((rule, dec)), Some(want)) => {
                assert!((dec - want).abs() < tol, "instance {i}: {dec} vs {want}");
                let real = realized_decrease(&inst.col, &rule, &inst.y, &rows);
                assert!(
                    (real - dec).abs() < tol,
                    "instance {i}: rule realizes {real}, reported {dec}"
                );
            }
            (got, want) => panic!("instance {i}: search {got:?}, oracle {want:?}"),
        }
    }
}

#[test]
fn cart_root_delta_is_brute_force_maximum() {
    let mut r = rng::derive(7, 0);
    for _ in 0..20 {
        let n = 30;
        let x: Vec<f64> = (0..n).map(|_| r.random_range(0..100) as f64).collect();
        let noise: Vec<f64> = (0..n).map(|_| r.random_range(0..100) as f64).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&v| if v > 40.0 { 5.0 } else { 0.0 } + r.random::<f64>())
            .collect();
        let ds = Dataset::new(
            "y",
            y.clone(),
            vec![
                Column::ordinal("x", x.iter().map(|&v| Some(v)).collect()).unwrap(),
                Column::ordinal("w", noise.iter().map(|&v| Some(v)).collect()).unwrap(),
            ],
        )
        .unwrap();
        let tree = grow_cart(&ds, &TreeConfig::default());
        let split = tree.nodes[0].split.as_ref().unwrap();
        assert_eq!(split.variable, 0);
        let want =
            vimp_oracle::ordinal_candidates(&x.iter().map(|&v| Some(v)).collect::<Vec<_>>(), &y, 2)
                .iter()
                .map(|c| c.decrease)
                .fold(f64::MIN, f64::max);
        assert!((split.impurity_decrease - want).abs() < 1e-9 * want);
        assert!(rpart_importance(&tree)[0] >= split.impurity_decrease);
    }
}

fn leaf(depth: usize, rows: Vec<usize>) -> CartNode {
    CartNode {
        depth,
        rows,
        mean_y: 0.0,
        sse: 0.0,
        split: None,
        surrogates: Vec::new(),
        children: None,
    }
}

fn split(variable: usize, decrease: f64) -> Split {
    Split {
        variable,
        rule: SplitRule::Ordinal {
            threshold: 0.5,
            missing: Side::Right,
        },
        impurity_decrease: decrease,
    }
}

fn surrogate(variable: usize, a: f64, decrease: f64) -> SurrogateSplit {
    SurrogateSplit {
        variable,
        rule: SurrogateRule::Ordinal {
            threshold: 0.5,
            le_goes_left: true,
        },
        agreement: 0,
        adjusted_agreement: a,
        decrease,
    }
}

#[test]
fn micro_tree_single_split_with_surrogate() {
    let mut root = leaf(0, (0..8).collect());
    root.split = Some(split(0, 25.0));
    root.surrogates = vec![surrogate(1, 0.5, 16.0)];
    root.children = Some((1, 2));
    let tree = CartTree {
        nodes: vec![root, leaf(1, (0..4).collect()), leaf(1, (4..8).collect())],
        n_predictors: 3,
    };
    assert_eq!(rpart_importance(&tree), vec![25.0, 8.0, 0.0]);
}

#[test]
fn micro_tree_two_levels() {
    // Root: X1 primary (10), X3 surrogate (a 0.25, 8). Left child: X2
    // primary (6), X1 surrogate (a 1, 4). Right child is a leaf.
    let mut root = leaf(0, (0..12).collect());
    root.split = Some(split(0, 10.0));
    root.surrogates = vec![surrogate(2, 0.25, 8.0)];
    root.children = Some((1, 4));
    let mut left = leaf(1, (0..6).collect());
    left.split = Some(split(1, 6.0));
    left.surrogates = vec![surrogate(0, 1.0, 4.0)];
    left.children = Some((2, 3));
    let tree = CartTree {
        nodes: vec![
            root,
            left,
            leaf(2, (0..3).collect()),
            leaf(2, (3..6).collect()),
            leaf(1, (6..12).collect()),
        ],
        n_predictors: 3,
    };
    assert_eq!(rpart_importance(&tree), vec![14.0, 6.0, 2.0]);
}

#[test]
fn micro_tree_grown_from_duplicated_column() {
    // y = (0,0,0,6,6,6) on x = (1..6) and an exact copy: the copy is a
    // perfect surrogate, so both variables score the root decrease 54.
    let x: Vec<Option<f64>> = (1..=6).map(|v| Some(v as f64)).collect();
    let ds = Dataset::new(
        "y",
        vec![0.0, 0.0, 0.0, 6.0, 6.0, 6.0],
        vec![
            Column::ordinal("a", x.clone()).unwrap(),
            Column::ordinal("b", x).unwrap(),
        ],
    )
    .unwrap();
    let cfg = TreeConfig {
        max_split_depth: 4,
        min_node_to_split: 4,
        min_child: 2,
    };
    let tree = grow_cart(&ds, &cfg);
    assert_eq!(rpart_importance(&tree), vec![54.0, 54.0]);
}
