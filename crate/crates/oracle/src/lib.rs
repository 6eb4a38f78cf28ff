//! Reference computations for tests.
//!
//! Everything here deliberately avoids the code paths used by `vimp-core`:
//! chi-squared tails come from the closed-form finite sums that exist for
//! integer degrees of freedom, normal quantiles come from bisection on
//! `erfc`, and split search is a direct enumeration with two-pass sums of
//! squares.

use std::f64::consts::PI;

/// Upper tail `P(X > x)` of a chi-squared variable with integer `df`.
///
/// Even df: `exp(-x/2) * sum_{k<df/2} (x/2)^k / k!`.
/// Odd df: `erfc(sqrt(x/2)) + exp(-x/2) * sum_{k=1}^{(df-1)/2} (x/2)^(k-1/2) / Gamma(k+1/2)`.
pub fn chisq_sf(x: f64, df: u32) -> f64 {
    assert!(df >= 1 && x >= 0.0);
    let h = x / 2.0;
    if df % 2 == 0 {
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..(df / 2) {
            term *= h / k as f64;
            sum += term;
        }
        (-h).exp() * sum
    } else {
        let mut sum = 0.0;
        if df > 1 {
            // (x/2)^(1/2) / Gamma(3/2)
            let mut term = h.sqrt() / (PI.sqrt() / 2.0);
            sum += term;
            for k in 1..((df - 1) / 2) {
                term *= h / (k as f64 + 0.5);
                sum += term;
            }
        }
        libm::erfc(h.sqrt()) + (-h).exp() * sum
    }
}

/// Upper standard-normal quantile `z` with `P(Z > z) = p`, by bisection.
pub fn normal_upper_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0);
    let upper = |z: f64| 0.5 * libm::erfc(z / std::f64::consts::SQRT_2);
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        // upper() is decreasing in z; compare in log space for tiny p.
        if upper(mid).ln() > p.ln() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `(1 - p)`-quantile of chi-squared with one degree of freedom.
pub fn chisq1_quantile(p: f64) -> f64 {
    if p >= 1.0 {
        return 0.0;
    }
    let z = normal_upper_quantile(p / 2.0);
    z * z
}

fn sse(ys: &[f64]) -> f64 {
    if ys.is_empty() {
        return 0.0;
    }
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    ys.iter().map(|y| (y - mean) * (y - mean)).sum()
}

/// One candidate binary partition of a node.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub decrease: f64,
    /// `true` for rows sent left, in input row order.
    pub left: Vec<bool>,
}

fn evaluate(y: &[f64], left: Vec<bool>, min_child: usize) -> Option<Candidate> {
    let (l, r): (Vec<f64>, Vec<f64>) = {
        let mut l = Vec::new();
        let mut r = Vec::new();
        for (yi, &goes_left) in y.iter().zip(&left) {
            if goes_left {
                l.push(*yi)
            } else {
                r.push(*yi)
            }
        }
        (l, r)
    };
    if l.len() < min_child || r.len() < min_child {
        return None;
    }
    Some(Candidate {
        decrease: sse(y) - sse(&l) - sse(&r),
        left,
    })
}

/// Every threshold split `x <= v` (v a non-maximal distinct value) with
/// missing rows sent to either side.
pub fn ordinal_candidates(x: &[Option<f64>], y: &[f64], min_child: usize) -> Vec<Candidate> {
    let mut values: Vec<f64> = x.iter().flatten().copied().collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values.dedup();
    let has_missing = x.iter().any(Option::is_none);
    let mut out = Vec::new();
    for &v in values.iter().take(values.len().saturating_sub(1)) {
        for missing_left in [false, true] {
            if missing_left && !has_missing {
                continue;
            }
            let left = x
                .iter()
                .map(|xi| match xi {
                    Some(val) => *val <= v,
                    None => missing_left,
                })
                .collect();
            out.extend(evaluate(y, left, min_child));
        }
    }
    out
}

/// Every non-trivial subset of the levels present (missing counted as a
/// level of its own).
pub fn categorical_candidates(x: &[Option<u32>], y: &[f64], min_child: usize) -> Vec<Candidate> {
    let mut levels: Vec<Option<u32>> = x.to_vec();
    levels.sort();
    levels.dedup();
    let l = levels.len();
    let mut out = Vec::new();
    if l < 2 {
        return out;
    }
    for mask in 1u32..((1 << l) - 1) {
        let left = x
            .iter()
            .map(|xi| {
                let pos = levels.iter().position(|lv| lv == xi).unwrap();
                mask & (1 << pos) != 0
            })
            .collect();
        out.extend(evaluate(y, left, min_child));
    }
    out
}

/// Pearson correlation by the textbook two-pass formula.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
    cov / (va * vb).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    // Published table values for the chi-squared upper tail.
    #[test]
    fn chisq_table_values() {
        assert!((chisq_sf(3.841459, 1) - 0.05).abs() < 1e-7);
        assert!((chisq_sf(5.991465, 2) - 0.05).abs() < 1e-7);
        assert!((chisq_sf(6.634897, 1) - 0.01).abs() < 1e-8);
        assert!((chisq_sf(16.918978, 9) - 0.05).abs() < 1e-7);
        assert!((chisq_sf(0.454936, 1) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn normal_quantile_values() {
        assert!((normal_upper_quantile(0.025) - 1.959964).abs() < 1e-6);
        assert!((normal_upper_quantile(0.5)).abs() < 1e-12);
        assert!((chisq1_quantile(0.5) - 0.454936).abs() < 1e-6);
    }
}
