//! Impurity-optimal binary splits of a single predictor.
//!
//! Shared by the GUIDE scoring tree (which picks the variable first) and the
//! CART comparator (which searches every variable). Decreases are computed
//! from per-side sums of the node-centred response:
//! `sse(t) - sse(L) - sse(R) = S_L^2/n_L + S_R^2/n_R - S_t^2/n_t`.

use std::cmp::Ordering;

use serde::Serialize;

use crate::dataset::{Column, ColumnData};

/// Exhaustive subset search is used up to this many present levels
/// (missing counts as a level); above it, only mean-ordered cuts.
pub const MAX_EXHAUSTIVE_LEVELS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    // Declared first so that `Right < Left` in tie-break keys.
    Right,
    Left,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SplitRule {
    /// `x <= threshold` goes left.
    Ordinal { threshold: f64, missing: Side },
    /// `x` in `left_levels` (sorted level ids) goes left; any other level,
    /// including one unseen in training, goes right.
    Categorical {
        left_levels: Vec<u32>,
        missing: Side,
    },
}

impl SplitRule {
    pub fn missing_side(&self) -> Side {
        match self {
            SplitRule::Ordinal { missing, .. } | SplitRule::Categorical { missing, .. } => *missing,
        }
    }

    pub fn goes_left(&self, col: &Column, row: usize) -> bool {
        match (self, &col.data) {
            (SplitRule::Ordinal { threshold, missing }, ColumnData::Ordinal(v)) => match v[row] {
                Some(x) => x <= *threshold,
                None => *missing == Side::Left,
            },
            (
                SplitRule::Categorical {
                    left_levels,
                    missing,
                },
                ColumnData::Categorical { codes, .. },
            ) => match codes[row] {
                Some(c) => left_levels.binary_search(&c).is_ok(),
                None => *missing == Side::Left,
            },
            _ => false,
        }
    }

    fn tie_key(&self) -> (Vec<u32>, Side) {
        match self {
            SplitRule::Ordinal { missing, .. } => (Vec::new(), *missing),
            SplitRule::Categorical {
                left_levels,
                missing,
            } => (left_levels.clone(), *missing),
        }
    }

    pub fn describe(&self, col: &Column) -> String {
        let miss = match self.missing_side() {
            Side::Left => "NA left",
            Side::Right => "NA right",
        };
        match (self, &col.data) {
            (SplitRule::Ordinal { threshold, .. }, _) => {
                format!("{} <= {threshold} ({miss})", col.name)
            }
            (
                SplitRule::Categorical { left_levels, .. },
                ColumnData::Categorical { levels, .. },
            ) => {
                let names: Vec<&str> = left_levels
                    .iter()
                    .map(|&l| levels[l as usize].as_str())
                    .collect();
                format!("{} in {{{}}} ({miss})", col.name, names.join(", "))
            }
            (SplitRule::Categorical { left_levels, .. }, _) => {
                format!("{} in {left_levels:?} ({miss})", col.name)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Split {
    pub variable: usize,
    pub rule: SplitRule,
    pub impurity_decrease: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Acc {
    n: usize,
    sum: f64,
}

impl Acc {
    fn add(self, o: Acc) -> Acc {
        Acc {
            n: self.n + o.n,
            sum: self.sum + o.sum,
        }
    }

    fn sub(self, o: Acc) -> Acc {
        Acc {
            n: self.n - o.n,
            sum: self.sum - o.sum,
        }
    }

    fn term(self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum * self.sum / self.n as f64
        }
    }
}

/// Tracks the best candidate in enumeration order. A candidate replaces the
/// incumbent only if it beats it by more than `tol`; within `tol` the
/// smaller tie key wins.
struct Best {
    tol: f64,
    current: Option<(f64, SplitRule)>,
}

impl Best {
    fn offer(&mut self, dec: f64, make: impl FnOnce() -> SplitRule) {
        if dec <= self.tol {
            return;
        }
        match &self.current {
            None => self.current = Some((dec, make())),
            Some((best, rule)) => {
                if dec > best + self.tol {
                    self.current = Some((dec, make()));
                } else if dec >= best - self.tol {
                    let cand = make();
                    if cand.tie_key().cmp(&rule.tie_key()) == Ordering::Less {
                        self.current = Some((dec.max(*best), cand));
                    }
                }
            }
        }
    }
}

/// Node-centred response and the tolerance used for tie detection.
fn centred(y: &[f64], rows: &[usize]) -> (Vec<f64>, f64) {
    let n = rows.len() as f64;
    let mean = rows.iter().map(|&i| y[i]).sum::<f64>() / n;
    let d: Vec<f64> = rows.iter().map(|&i| y[i] - mean).collect();
    let sse: f64 = d.iter().map(|v| v * v).sum();
    (d, 1e-10 * sse)
}

/// Best split of `col` over `rows`, or `None` when no split with positive
/// impurity decrease leaves at least `min_child` rows on each side.
///
/// Rows missing `col` take part: each candidate is scored with them sent
/// left and sent right. Ties go to the smaller threshold (ordinal) or the
/// lexicographically smaller left level set (categorical), then to
/// missing-right.
pub fn best_split(
    col: &Column,
    y: &[f64],
    rows: &[usize],
    min_child: usize,
) -> Option<(SplitRule, f64)> {
    if rows.len() < 2 * min_child.max(1) {
        return None;
    }
    let (d, tol) = centred(y, rows);
    let best = match &col.data {
        ColumnData::Ordinal(values) => ordinal(values, rows, &d, tol, min_child),
        ColumnData::Categorical { codes, .. } => categorical(codes, rows, &d, tol, min_child),
    };
    best.current.map(|(dec, rule)| (rule, dec))
}

fn ordinal(values: &[Option<f64>], rows: &[usize], d: &[f64], tol: f64, min_child: usize) -> Best {
    let mut present: Vec<(f64, f64)> = Vec::with_capacity(rows.len());
    let mut missing = Acc::default();
    for (pos, &r) in rows.iter().enumerate() {
        match values[r] {
            Some(x) => present.push((x, d[pos])),
            None => {
                missing.n += 1;
                missing.sum += d[pos];
            }
        }
    }
    present.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total = Acc {
        n: rows.len(),
        sum: d.iter().sum(),
    };
    let base = total.term();
    let mut best = Best { tol, current: None };
    let mut left = Acc::default();
    for i in 0..present.len().saturating_sub(1) {
        left.n += 1;
        left.sum += present[i].1;
        let (a, b) = (present[i].0, present[i + 1].0);
        if a == b {
            continue;
        }
        let mut threshold = a + (b - a) / 2.0;
        if threshold >= b {
            threshold = a;
        }
        for side in [Side::Right, Side::Left] {
            if side == Side::Left && missing.n == 0 {
                continue;
            }
            let l = if side == Side::Left {
                left.add(missing)
            } else {
                left
            };
            let r = total.sub(l);
            if l.n < min_child || r.n < min_child {
                continue;
            }
            let dec = l.term() + r.term() - base;
            best.offer(dec, || SplitRule::Ordinal {
                threshold,
                missing: side,
            });
        }
    }
    best
}

fn categorical(
    codes: &[Option<u32>],
    rows: &[usize],
    d: &[f64],
    tol: f64,
    min_child: usize,
) -> Best {
    // Present levels in id order, missing (None) last.
    let mut items: Vec<(Option<u32>, Acc)> = Vec::new();
    {
        let mut by_level: std::collections::BTreeMap<u32, Acc> = Default::default();
        let mut missing = Acc::default();
        for (pos, &r) in rows.iter().enumerate() {
            let slot = match codes[r] {
                Some(c) => by_level.entry(c).or_default(),
                None => &mut missing,
            };
            slot.n += 1;
            slot.sum += d[pos];
        }
        items.extend(by_level.into_iter().map(|(c, a)| (Some(c), a)));
        if missing.n > 0 {
            items.push((None, missing));
        }
    }
    let total = items.iter().fold(Acc::default(), |acc, (_, a)| acc.add(*a));
    let base = total.term();
    let mut best = Best { tol, current: None };
    let l = items.len();
    if l < 2 {
        return best;
    }

    let rule_for = |chosen: &mut dyn Iterator<Item = usize>| {
        let mut left_levels = Vec::new();
        let mut missing = Side::Right;
        for i in chosen {
            match items[i].0 {
                Some(c) => left_levels.push(c),
                None => missing = Side::Left,
            }
        }
        left_levels.sort_unstable();
        SplitRule::Categorical {
            left_levels,
            missing,
        }
    };

    let consider = |left_idx: &[usize], best: &mut Best| {
        let lacc = left_idx
            .iter()
            .fold(Acc::default(), |a, &i| a.add(items[i].1));
        let racc = total.sub(lacc);
        if lacc.n < min_child || racc.n < min_child {
            return;
        }
        let dec = lacc.term() + racc.term() - base;
        best.offer(dec, || rule_for(&mut left_idx.iter().copied()));
    };

    if l <= MAX_EXHAUSTIVE_LEVELS {
        let mut left_idx = Vec::with_capacity(l);
        for mask in 1u32..((1u32 << l) - 1) {
            left_idx.clear();
            left_idx.extend((0..l).filter(|i| mask & (1 << i) != 0));
            consider(&left_idx, &mut best);
        }
    } else {
        let mut order: Vec<usize> = (0..l).collect();
        order.sort_by(|&a, &b| {
            let ma = items[a].1.sum / items[a].1.n as f64;
            let mb = items[b].1.sum / items[b].1.n as f64;
            ma.total_cmp(&mb).then(a.cmp(&b))
        });
        for cut in 1..l {
            consider(&order[..cut], &mut best);
            consider(&order[cut..], &mut best);
        }
    }
    best
}
