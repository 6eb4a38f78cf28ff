//! Statistical primitives: Pearson chi-squared tests, chi-squared tails and
//! one-degree-of-freedom quantiles in log space, quantile binning, order
//! statistics and correlation.

use crate::error::{Error, Result};

/// Floor on `ln p` used when a p-value underflows. The matching
/// one-degree-of-freedom quantile is about 1425.
pub const LN_P_FLOOR: f64 = -700.0;

/// Two-way table of counts, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    rows: usize,
    cols: usize,
    counts: Vec<u64>,
}

impl ContingencyTable {
    pub fn new(rows: usize, cols: usize, counts: Vec<u64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Domain(
                "contingency table needs at least one row and column".into(),
            ));
        }
        if counts.len() != rows * cols {
            return Err(Error::Domain(format!(
                "expected {} counts for a {rows}x{cols} table, got {}",
                rows * cols,
                counts.len()
            )));
        }
        Ok(Self { rows, cols, counts })
    }

    /// Build from nested rows; all rows must have the same length.
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Domain("ragged contingency table".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> u64 {
        self.counts[r * self.cols + c]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// A p-value carried together with its natural log, so that tails far
/// below `f64::MIN_POSITIVE` still order correctly.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PValue {
    pub p: f64,
    pub ln_p: f64,
}

impl PValue {
    pub const ONE: PValue = PValue { p: 1.0, ln_p: 0.0 };

    pub fn from_p(p: f64) -> Self {
        PValue { p, ln_p: p.ln() }
    }

    pub fn from_ln(ln_p: f64) -> Self {
        PValue {
            p: ln_p.exp(),
            ln_p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub df: u32,
    pub p_value: f64,
    pub log_p: f64,
}

impl TestResult {
    pub fn pvalue(&self) -> PValue {
        PValue {
            p: self.p_value,
            ln_p: self.log_p,
        }
    }

    fn null(df: u32) -> Self {
        TestResult {
            statistic: 0.0,
            df,
            p_value: 1.0,
            log_p: 0.0,
        }
    }
}

/// Pearson chi-squared test of independence.
///
/// Rows and columns with zero total are dropped before the degrees of
/// freedom are counted; a reduced table with `df = 0` yields `p = 1`.
pub fn chisq_test(table: &ContingencyTable) -> Result<TestResult> {
    let total = table.total();
    if total == 0 {
        return Err(Error::Domain(
            "contingency table has zero total count".into(),
        ));
    }
    let row_tot: Vec<u64> = (0..table.rows)
        .map(|r| (0..table.cols).map(|c| table.get(r, c)).sum())
        .collect();
    let col_tot: Vec<u64> = (0..table.cols)
        .map(|c| (0..table.rows).map(|r| table.get(r, c)).sum())
        .collect();
    let live_rows = row_tot.iter().filter(|&&t| t > 0).count();
    let live_cols = col_tot.iter().filter(|&&t| t > 0).count();
    let df = (live_rows.saturating_sub(1) * live_cols.saturating_sub(1)) as u32;
    if df == 0 {
        return Ok(TestResult::null(0));
    }
    let n = total as f64;
    // Cell terms are summed in sorted order so the statistic is bit-identical
    // under any row or column permutation (level relabeling moves columns).
    let mut terms = Vec::with_capacity(live_rows * live_cols);
    for (r, &rt) in row_tot.iter().enumerate() {
        if rt == 0 {
            continue;
        }
        for (c, &ct) in col_tot.iter().enumerate() {
            if ct == 0 {
                continue;
            }
            let expected = rt as f64 * ct as f64 / n;
            let diff = table.get(r, c) as f64 - expected;
            terms.push(diff * diff / expected);
        }
    }
    terms.sort_by(f64::total_cmp);
    let stat: f64 = terms.iter().sum();
    let (p_value, log_p) = chisq_tail(stat, df)?;
    Ok(TestResult {
        statistic: stat,
        df,
        p_value,
        log_p,
    })
}

/// Upper tail of the chi-squared distribution: `(p, ln p)`.
pub fn chisq_tail(statistic: f64, df: u32) -> Result<(f64, f64)> {
    if statistic.is_nan() || statistic < 0.0 {
        return Err(Error::Domain(format!(
            "chi-squared statistic {statistic} is negative"
        )));
    }
    if df == 0 {
        return Err(Error::Domain("chi-squared tail needs df >= 1".into()));
    }
    if statistic == 0.0 {
        return Ok((1.0, 0.0));
    }
    let ln_q = ln_gamma_q(df as f64 / 2.0, statistic / 2.0);
    Ok((ln_q.exp(), ln_q))
}

/// `ln Q(a, x)`, the log of the regularized upper incomplete gamma function.
fn ln_gamma_q(a: f64, x: f64) -> f64 {
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;
    const MAX_ITER: usize = 10_000;

    if x == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    let ln_front = -x + a * x.ln();
    if x < a + 1.0 {
        // Series for P(a, x), then Q = 1 - P.
        let mut ap = a;
        let mut del = 1.0 / a;
        let mut sum = del;
        for _ in 0..MAX_ITER {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * EPS {
                break;
            }
        }
        let p = (ln_front - libm::lgamma(a)).exp() * sum;
        (-p).ln_1p()
    } else {
        // Modified Lentz continued fraction for Q(a, x).
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < EPS {
                break;
            }
        }
        ln_front - libm::lgamma(a) + h.ln()
    }
}

/// The `(1 - p)`-quantile of chi-squared with one degree of freedom.
///
/// Computed as the square of the standard-normal upper `p/2` quantile, with
/// the normal quantile evaluated from `ln p` so extreme tails stay exact.
/// `ln p` below [`LN_P_FLOOR`] (including `p = 0`) is clamped to the floor.
pub fn chisq1_quantile(p_value: f64, log_p: f64) -> f64 {
    let ln_p = if log_p.is_nan() { p_value.ln() } else { log_p };
    if ln_p >= 0.0 || p_value >= 1.0 {
        return 0.0;
    }
    let ln_p = ln_p.max(LN_P_FLOOR);
    let z = normal_lower_quantile_ln(ln_p - std::f64::consts::LN_2);
    z * z
}

/// Lower standard-normal quantile of `exp(ln_p)`, for `ln_p <= ln 0.5`.
/// Wichura's AS241 (PPND16) with the tail branch fed directly by `ln_p`.
fn normal_lower_quantile_ln(ln_p: f64) -> f64 {
    let p = ln_p.exp();
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r
                + 67265.770927008700853)
                * r
                + 45921.953931549871457)
                * r
                + 13731.693765509461125)
                * r
                + 1971.5909503065514427)
                * r
                + 133.14166789178437745)
                * r
                + 3.387132872796366608)
            / (((((((r * 5226.495278852545561 + 28729.085735721942674) * r
                + 39307.89580009271061)
                * r
                + 21213.794301586595867)
                * r
                + 5394.1960214247511077)
                * r
                + 687.1870074920579083)
                * r
                + 42.313330701600911252)
                * r
                + 1.0);
    }
    let r = (-ln_p).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        (((((((r * 7.7454501427834140764e-4 + 0.0227238449892691845833) * r
            + 0.24178072517745061177)
            * r
            + 1.27045825245236838258)
            * r
            + 3.64784832476320460504)
            * r
            + 5.7694972214606914055)
            * r
            + 4.6303378461565452959)
            * r
            + 1.42343711074968357734)
            / (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r
                + 0.0151986665636164571966)
                * r
                + 0.14810397642748007459)
                * r
                + 0.68976733498510000455)
                * r
                + 1.6763848301838038494)
                * r
                + 2.05319162663775882187)
                * r
                + 1.0)
    } else {
        let r = r - 5.0;
        (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r
            + 0.0012426609473880784386)
            * r
            + 0.026532189526576123093)
            * r
            + 0.29656057182850489123)
            * r
            + 1.7848265399172913358)
            * r
            + 5.4637849111641143699)
            * r
            + 6.6579046435011037772)
            / (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r
                + 1.8463183175100546818e-5)
                * r
                + 7.868691311456132591e-4)
                * r
                + 0.0148753612908506148525)
                * r
                + 0.13692988092273580531)
                * r
                + 0.59983220655588793769)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// Cut points for `m` roughly equal groups: the `ceil(j*n/m)`-th order
/// statistics of `sorted`, `j = 1..m-1`.
pub(crate) fn quantile_cuts(sorted: &[f64], m: usize) -> Vec<f64> {
    let n = sorted.len();
    (1..m)
        .map(|j| sorted[order_statistic_index(n, j as f64 / m as f64)])
        .collect()
}

/// Zero-based group of `x` given ascending cut points; a value equal to a
/// cut falls in the lower group.
#[inline]
pub(crate) fn bin_of(x: f64, cuts: &[f64]) -> usize {
    cuts.iter().take_while(|&&c| x > c).count()
}

/// Assign non-missing values to categories `1..=m` split at the `j/m`
/// sample quantiles. Missing values get no category.
///
/// Any `m >= 2` is accepted; the tree uses 2, 3 and 4.
pub fn quantile_bins(values: &[Option<f64>], m: usize) -> Result<Vec<Option<usize>>> {
    if m < 2 {
        return Err(Error::Domain(format!("cannot bin into {m} groups")));
    }
    let mut sorted: Vec<f64> = values.iter().flatten().copied().collect();
    if sorted.is_empty() {
        return Err(Error::Domain("all values are missing".into()));
    }
    sorted.sort_by(f64::total_cmp);
    let cuts = quantile_cuts(&sorted, m);
    Ok(values
        .iter()
        .map(|v| v.map(|x| bin_of(x, &cuts) + 1))
        .collect())
}

/// Zero-based index of the `ceil(q*len)`-th order statistic (minimum for
/// `q = 0`). A `1e-9` slack keeps products such as `0.95 * 300` from
/// rounding up past an integer.
pub(crate) fn order_statistic_index(len: usize, q: f64) -> usize {
    let k = (q * len as f64 - 1e-9).ceil();
    (k.max(1.0) as usize).min(len) - 1
}

/// The `ceil(q*B)`-th order statistic of `xs` (no interpolation).
pub fn empirical_quantile(xs: &[f64], q: f64) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Domain("quantile of an empty list".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(format!("quantile level {q} outside [0, 1]")));
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[order_statistic_index(sorted.len(), q)])
}

/// Sample Pearson correlation.
pub fn pearson_corr(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Domain(format!(
            "correlation of vectors with lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::Domain(
            "correlation needs at least two points".into(),
        ));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 {
        return Err(Error::ZeroVariance("first vector is constant".into()));
    }
    if sbb == 0.0 {
        return Err(Error::ZeroVariance("second vector is constant".into()));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Mean and standard error (`sd / sqrt(n)`, sample sd with `n - 1`).
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Median (average of the two middle values for even length).
pub fn median(xs: &[f64]) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}
