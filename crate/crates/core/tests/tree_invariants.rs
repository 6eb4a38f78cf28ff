use rand::Rng;
use vimp_core::dataset::{Column, ColumnData, Dataset};
use vimp_core::guide::{grow_tree, node_tests, Tree, TreeConfig};
use vimp_core::importance::{bias_adjusted, exact_threshold_oracle, score, threshold};
use vimp_core::rng;
use vimp_core::simbench::{simulate, SimModel};

fn mixed(n: usize, seed: u64) -> Dataset {
    let mut r = rng::derive(seed, 0);
    let x: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
    let g: Vec<Option<u32>> = (0..n)
        .map(|_| {
            if r.random_bool(0.1) {
                None
            } else {
                Some(r.random_range(0..4))
            }
        })
        .collect();
    let w: Vec<Option<f64>> = (0..n)
        .map(|_| {
            if r.random_bool(0.2) {
                None
            } else {
                Some(r.random_range(0..7) as f64)
            }
        })
        .collect();
    let y: Vec<f64> = (0..n)
        .map(|i| 2.0 * x[i] + if g[i] == Some(1) { 1.0 } else { 0.0 } + r.random::<f64>())
        .collect();
    let levels = (0..4).map(|i| format!("g{i}")).collect();
    Dataset::new(
        "y",
        y,
        vec![
            Column::ordinal("x", x.into_iter().map(Some).collect()).unwrap(),
            Column::categorical("g", g, levels).unwrap(),
            Column::ordinal("w", w).unwrap(),
        ],
    )
    .unwrap()
}

/// Node row sets and tests, ignoring split thresholds (which move under
/// monotone transforms), level ids and child order (a categorical split may
/// name the other side "left" after relabeling).
fn shape(t: &Tree) -> Vec<(usize, Vec<usize>, Option<Vec<f64>>, Option<usize>)> {
    let mut nodes: Vec<_> = t
        .nodes
        .iter()
        .map(|n| {
            let p = n.tests.as_ref().map(|t| t.p1.iter().map(|p| p.p).collect());
            let mut rows = n.rows.clone();
            rows.sort_unstable();
            (n.depth, rows, p, n.split.as_ref().map(|s| s.variable))
        })
        .collect();
    nodes.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
    nodes
}

#[test]
fn structure_invariants() {
    for seed in 0..5 {
        let ds = mixed(150, seed);
        let t = grow_tree(&ds, &TreeConfig::default());
        for node in &t.nodes {
            if let Some((l, r)) = node.children {
                let (l, r) = (&t.nodes[l], &t.nodes[r]);
                assert!(node.depth <= 3);
                assert!(!l.rows.is_empty() && !r.rows.is_empty());
                let mut both: Vec<usize> = l.rows.iter().chain(&r.rows).copied().collect();
                both.sort_unstable();
                let mut parent = node.rows.clone();
                parent.sort_unstable();
                assert_eq!(both, parent);
                assert!(node.sse + 1e-9 >= l.sse + r.sse);
            }
            assert_eq!(node.is_intermediate(), node.split.is_some());
            if let Some(tests) = &node.tests {
                assert!(tests.p1.iter().all(|p| (0.0..=1.0).contains(&p.p)));
            }
        }
        assert_eq!(t, grow_tree(&ds, &TreeConfig::default()));
    }
}

#[test]
fn node_tests_depend_only_on_node_rows() {
    let ds = mixed(200, 3);
    let rows: Vec<usize> = (0..200).filter(|i| i % 3 != 0).collect();
    let sub = ds.take_rows(&rows);
    let a = node_tests(&ds, &rows);
    let b = node_tests(&sub, &(0..rows.len()).collect::<Vec<_>>());
    assert_eq!(a, b);
}

#[test]
fn invariant_to_level_relabeling_and_monotone_recoding() {
    for seed in 0..5 {
        let ds = mixed(120, seed);
        let mut cols = ds.predictors().to_vec();
        if let ColumnData::Categorical { codes, levels } = &mut cols[1].data {
            for c in codes.iter_mut().flatten() {
                *c = 3 - *c;
            }
            levels.reverse();
        }
        if let ColumnData::Ordinal(v) = &mut cols[0].data {
            for x in v.iter_mut().flatten() {
                *x = 2.0 * *x + 1.0;
            }
        }
        let other = Dataset::new("y", ds.response().to_vec(), cols).unwrap();
        let cfg = TreeConfig::default();
        let (t1, t2) = (grow_tree(&ds, &cfg), grow_tree(&other, &cfg));
        assert_eq!(shape(&t1), shape(&t2));
        let (r1, r2) = (
            bias_adjusted(&ds, &cfg, 20, 5).unwrap(),
            bias_adjusted(&other, &cfg, 20, 5).unwrap(),
        );
        assert_eq!(r1.vi(), r2.vi());
    }
}

#[test]
fn response_scaling_leaves_scores_unchanged() {
    let ds = mixed(150, 9);
    let scaled = ds
        .with_response(ds.response().iter().map(|y| 3.5 * y).collect())
        .unwrap();
    let cfg = TreeConfig::default();
    let (t1, t2) = (grow_tree(&ds, &cfg), grow_tree(&scaled, &cfg));
    assert_eq!(shape(&t1), shape(&t2));
    let (a, b) = (
        score(&ds, &cfg, 30, 0.05, 1).unwrap(),
        score(&scaled, &cfg, 30, 0.05, 1).unwrap(),
    );
    assert_eq!(a.raw(), b.raw());
    assert_eq!(a.vi(), b.vi());
}

#[test]
fn report_is_identical_across_worker_counts() {
    let ds = mixed(150, 11);
    let cfg = TreeConfig::default();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| score(&ds, &cfg, 40, 0.05, 77).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn flags_are_the_top_m_scores() {
    for seed in 0..6 {
        let ds = simulate(SimModel::E1, 200, &mut rng::derive(seed, 0)).unwrap();
        let cfg = TreeConfig::default();
        let base = bias_adjusted(&ds, &cfg, 40, seed).unwrap();
        let loose = threshold(base.clone(), 0.2).unwrap();
        let strict = threshold(base, 0.01).unwrap();
        assert!(strict.m.unwrap() <= loose.m.unwrap());
        for rep in [loose, strict] {
            let m = rep.m.unwrap();
            assert!(m <= rep.variables.len());
            let flagged: Vec<usize> = (0..rep.variables.len())
                .filter(|&i| rep.variables[i].important)
                .collect();
            assert_eq!(flagged.len(), m);
            let min_flagged = flagged
                .iter()
                .map(|&i| rep.variables[i].vi)
                .fold(f64::INFINITY, f64::min);
            for (i, v) in rep.variables.iter().enumerate() {
                if !v.important {
                    assert!(v.vi <= min_flagged, "variable {i}");
                }
                if m >= 1 {
                    if v.important {
                        assert!(v.normalized >= 1.0);
                    } else if v.vi < min_flagged {
                        assert!(v.normalized < 1.0);
                    }
                }
            }
        }
    }
}

fn null_toy(n: usize, seed: u64) -> Dataset {
    let mut r = rng::derive(seed, 1);
    let y: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
    let a: Vec<Option<f64>> = (0..n).map(|_| Some(r.random::<f64>())).collect();
    let b: Vec<Option<f64>> = (0..n).map(|_| Some(r.random_range(0..2) as f64)).collect();
    let c: Vec<Option<u32>> = (0..n).map(|_| Some(r.random_range(0..5))).collect();
    Dataset::new(
        "y",
        y,
        vec![
            Column::ordinal("a", a).unwrap(),
            Column::ordinal("b", b).unwrap(),
            Column::categorical("c", c, (0..5).map(|i| i.to_string()).collect()).unwrap(),
        ],
    )
    .unwrap()
}

#[test]
fn exact_oracle_with_one_outer_permutation_is_its_max_vi() {
    let ds = null_toy(60, 0);
    let cfg = TreeConfig::default();
    let u = exact_threshold_oracle(&ds, &cfg, 0.05, 1, 10, 3).unwrap();
    assert_eq!(
        u,
        exact_threshold_oracle(&ds, &cfg, 0.05, 1, 10, 3).unwrap()
    );
    assert!(u.is_finite() && u >= 0.0);
}

/// The single-level threshold (raw scores against permutation maxima of raw
/// scores) flags null data about as often as the double-permutation
/// threshold on adjusted scores.
#[test]
fn approximate_threshold_tracks_exact_oracle() {
    let cfg = TreeConfig::default();
    let alpha = 0.05;
    let datasets = 300;
    let u_star = exact_threshold_oracle(&null_toy(100, 999), &cfg, alpha, 200, 40, 5).unwrap();
    let (mut approx, mut exact) = (0usize, 0usize);
    for d in 0..datasets {
        let rep = score(&null_toy(100, d), &cfg, 40, alpha, d).unwrap();
        approx += usize::from(rep.m.unwrap() >= 1);
        exact += usize::from(rep.vi().into_iter().fold(f64::MIN, f64::max) > u_star);
    }
    let (ra, re) = (
        approx as f64 / datasets as f64,
        exact as f64 / datasets as f64,
    );
    assert!((ra - re).abs() <= 0.05, "approximation {ra}, oracle {re}");
}
