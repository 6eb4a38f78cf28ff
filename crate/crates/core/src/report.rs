//! CSV and JSON writers for the command-line reports. Floats use Rust's
//! shortest round-trip formatting, so equal results give equal bytes.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::importance::ImportanceReport;
use crate::predvalue::PredValueReport;
use crate::simbench::{BiasReport, Method};

fn num(x: f64) -> String {
    format!("{x}")
}

pub const VI_HEADER: [&str; 7] = [
    "name",
    "v",
    "v_bar",
    "VI",
    "normalized",
    "important",
    "method",
];

/// `vi.csv` for a GUIDE report.
pub fn write_vi_csv<W: Write>(report: &ImportanceReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(VI_HEADER)?;
    for s in &report.variables {
        w.write_record([
            s.name.clone(),
            num(s.v),
            num(s.v_bar),
            num(s.vi),
            num(s.normalized),
            s.important.to_string(),
            Method::Guide.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `vi.csv` for RPART scores, which have no permutation adjustment or
/// threshold: `v` and `VI` both hold the score and the GUIDE-only columns
/// are empty.
pub fn write_cart_vi_csv<W: Write>(names: &[String], scores: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(VI_HEADER)?;
    for (name, &s) in names.iter().zip(scores) {
        w.write_record([
            name.clone(),
            num(s),
            String::new(),
            num(s),
            String::new(),
            String::new(),
            Method::Cart.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CartJson<'a> {
    method: Method,
    variables: Vec<CartScore<'a>>,
}

#[derive(Serialize)]
struct CartScore<'a> {
    name: &'a str,
    score: f64,
}

#[derive(Serialize)]
struct GuideJson<'a> {
    method: Method,
    #[serde(flatten)]
    report: &'a ImportanceReport,
}

pub fn write_vi_json<W: Write>(report: &ImportanceReport, out: W) -> Result<()> {
    serde_json::to_writer_pretty(
        out,
        &GuideJson {
            method: Method::Guide,
            report,
        },
    )?;
    Ok(())
}

pub fn write_cart_vi_json<W: Write>(names: &[String], scores: &[f64], out: W) -> Result<()> {
    let variables = names
        .iter()
        .zip(scores)
        .map(|(n, &s)| CartScore { name: n, score: s })
        .collect();
    serde_json::to_writer_pretty(
        out,
        &CartJson {
            method: Method::Cart,
            variables,
        },
    )?;
    Ok(())
}

/// Read `(name, VI)` pairs back from a `vi.csv`.
pub fn read_vi_csv<R: std::io::Read>(input: R) -> Result<Vec<(String, f64)>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| crate::Error::Validation(format!("vi file has no '{name}' column")))
    };
    let (ni, vi) = (col("name")?, col("VI")?);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let value = rec[vi]
            .trim()
            .parse::<f64>()
            .map_err(|e| crate::Error::Parse {
                row: i + 2,
                column: "VI".into(),
                message: e.to_string(),
            })?;
        out.push((rec[ni].to_string(), value));
    }
    Ok(out)
}

/// Per-variable mean, SE and 2-SE interval.
pub fn write_bias_summary_csv<W: Write>(report: &BiasReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["variable", "mean", "se", "median", "lower", "upper"])?;
    for j in 0..report.names.len() {
        let (m, se) = (report.means[j], report.ses[j]);
        w.write_record([
            report.names[j].clone(),
            num(m),
            num(se),
            num(report.medians[j]),
            num(m - 2.0 * se),
            num(m + 2.0 * se),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Tidy per-trial scores: `trial, variable, score`.
pub fn write_trials_csv<W: Write>(report: &BiasReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["trial", "variable", "score"])?;
    for (t, row) in report.scores.iter().enumerate() {
        for (name, &s) in report.names.iter().zip(row) {
            w.write_record([t.to_string(), name.clone(), num(s)])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn verdict_line(report: &BiasReport) -> String {
    format!(
        "overlap verdict: {} ({} variables, {} replicates, 2-SE intervals {})",
        if report.verdict { "unbiased" } else { "biased" },
        report.names.len(),
        report.trials,
        if report.verdict {
            "all overlap"
        } else {
            "do not all overlap"
        }
    )
}

/// `predvalue.csv`: one row per variable; the dataset-level estimates and
/// the scheme are repeated on every row so the file stays a plain table.
pub fn write_predvalue_csv<W: Write>(report: &PredValueReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "variable",
        "S_j",
        "S_minus_j",
        "MPV",
        "CPV",
        "S0",
        "S",
        "scheme",
        "seed",
    ])?;
    for j in 0..report.names.len() {
        w.write_record([
            report.names[j].clone(),
            num(report.s_j[j]),
            num(report.s_minus_j[j]),
            num(report.mpv[j]),
            num(report.cpv[j]),
            num(report.s0),
            num(report.s),
            report.scheme.clone(),
            report.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Optional correlations with importance scores, written alongside.
#[derive(Debug, Clone, Serialize)]
pub struct Consistency {
    pub cor_mpv: f64,
    pub cor_cpv: f64,
}

#[derive(Serialize)]
struct PredValueJson<'a> {
    #[serde(flatten)]
    report: &'a PredValueReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    consistency: Option<&'a Consistency>,
}

pub fn write_predvalue_json<W: Write>(
    report: &PredValueReport,
    consistency: Option<&Consistency>,
    out: W,
) -> Result<()> {
    serde_json::to_writer_pretty(
        out,
        &PredValueJson {
            report,
            consistency,
        },
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::importance::VariableScore;

    #[test]
    fn vi_csv_round_trips_scores() {
        let rep = ImportanceReport {
            variables: vec![VariableScore {
                name: "x, y".into(),
                v: 1.5,
                v_bar: 0.5,
                vi: 3.0,
                normalized: 1.25,
                important: true,
            }],
            b: 10,
            seed: 1,
            alpha: Some(0.05),
            v_star: Some(2.0),
            m: Some(1),
            v_tilde: Some(2.4),
            perm_max: vec![],
            warnings: vec![],
        };
        let mut buf = Vec::new();
        write_vi_csv(&rep, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "name,v,v_bar,VI,normalized,important,method\n\"x, y\",1.5,0.5,3,1.25,true,guide"
        ));
        assert_eq!(
            read_vi_csv(&buf[..]).unwrap(),
            vec![("x, y".to_string(), 3.0)]
        );
    }
}
