use super::study::{CellResult, EstimatorSummary, McStudyResult, Study};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    /// Full precision, one row per cell, parseable by [`parse_csv`].
    Csv,
    /// Rounded, with standard deviations in parentheses beneath each mean.
    Markdown,
}

pub fn emit_table(result: &McStudyResult, format: TableFormat) -> Result<String> {
    match format {
        TableFormat::Csv => emit_csv(result),
        TableFormat::Markdown => Ok(emit_markdown(result)),
    }
}

fn keys(result: &McStudyResult) -> Vec<String> {
    result.cells.first().map(|c| c.estimators.iter().map(|e| e.key.clone()).collect()).unwrap_or_default()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

const STAT_FIELDS: [&str; 6] = ["mean", "sd", "coverage", "n", "failed", "skipped"];

fn summary_fields(s: Option<&EstimatorSummary>) -> Vec<String> {
    match s {
        None => vec![String::new(); STAT_FIELDS.len()],
        Some(s) => vec![
            opt(s.mean),
            opt(s.sd),
            opt(s.coverage),
            s.n_ok.to_string(),
            s.n_failed.to_string(),
            u8::from(s.skipped).to_string(),
        ],
    }
}

fn emit_csv(result: &McStudyResult) -> Result<String> {
    let keys = keys(result);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> =
        ["study", "seed", "rho", "alpha1", "reps", "flagged", "crossing_reps"].map(String::from).to_vec();
    for k in keys.iter().map(String::as_str).chain(["diff"]) {
        header.extend(STAT_FIELDS.iter().map(|f| format!("{k}_{f}")));
    }
    w.write_record(&header)?;
    for c in &result.cells {
        let mut row = vec![
            format!("{:?}", result.study),
            result.seed.to_string(),
            c.rho.to_string(),
            c.alpha1.to_string(),
            c.replications.to_string(),
            u8::from(c.flagged).to_string(),
            c.crossing_reps.to_string(),
        ];
        for k in &keys {
            row.extend(summary_fields(c.summary(k)));
        }
        row.extend(summary_fields(c.ols_minus_oh.as_ref()));
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
}

/// Reads a table written by [`emit_table`] in CSV form.
pub fn parse_csv(text: &str) -> Result<McStudyResult> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rd.headers()?.iter().map(String::from).collect();
    let col = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| Error::Data(format!("missing column {name}")))
    };
    let keys: Vec<String> = header
        .iter()
        .filter_map(|h| h.strip_suffix("_mean"))
        .filter(|k| *k != "diff")
        .map(String::from)
        .collect();
    let num = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| Error::Data(format!("not a number: {s:?}")))
        }
    };
    let int = |s: &str| -> Result<usize> { s.parse().map_err(|_| Error::Data(format!("not a count: {s:?}"))) };
    let mut study = Study::I;
    let mut seed = 0;
    let mut cells = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let get = |name: &str| -> Result<&str> { Ok(rec.get(col(name)?).unwrap_or("")) };
        study = match get("study")? {
            "I" => Study::I,
            "II" => Study::II,
            other => return Err(Error::Data(format!("unknown study {other:?}"))),
        };
        seed = get("seed")?.parse().map_err(|_| Error::Data("bad seed".into()))?;
        let summary = |k: &str| -> Result<Option<EstimatorSummary>> {
            if get(&format!("{k}_n"))?.is_empty() {
                return Ok(None);
            }
            Ok(Some(EstimatorSummary {
                key: k.to_string(),
                mean: num(get(&format!("{k}_mean"))?)?,
                sd: num(get(&format!("{k}_sd"))?)?,
                coverage: num(get(&format!("{k}_coverage"))?)?,
                n_ok: int(get(&format!("{k}_n"))?)?,
                n_failed: int(get(&format!("{k}_failed"))?)?,
                skipped: get(&format!("{k}_skipped"))? == "1",
            }))
        };
        let mut estimators = Vec::new();
        for k in &keys {
            estimators.push(summary(k)?.ok_or_else(|| Error::Data(format!("missing summary for {k}")))?);
        }
        let ols_minus_oh = summary("diff")?.map(|mut s| {
            s.key = "diff".into();
            s
        });
        cells.push(CellResult {
            rho: num(get("rho")?)?.unwrap_or(f64::NAN),
            alpha1: num(get("alpha1")?)?.unwrap_or(f64::NAN),
            replications: int(get("reps")?)?,
            estimators,
            ols_minus_oh,
            crossing_reps: int(get("crossing_reps")?)?,
            flagged: get("flagged")? == "1",
        });
    }
    let replications = cells.first().map_or(0, |c| c.replications);
    Ok(McStudyResult { study, replications, seed, cells })
}

/// Fixed decimals without the leading zero, so 0.0261 prints as `.0261`.
fn dec(v: Option<f64>, digits: usize) -> String {
    match v {
        None => String::new(),
        Some(x) => {
            let s = format!("{x:.digits$}");
            if let Some(rest) = s.strip_prefix("0.") {
                format!(".{rest}")
            } else if let Some(rest) = s.strip_prefix("-0.") {
                if rest.bytes().all(|b| b == b'0') { format!(".{rest}") } else { format!("-.{rest}") }
            } else {
                s
            }
        }
    }
}

fn label(key: &str) -> String {
    match key {
        "ols" => "OLS".into(),
        "oh" => "OH".into(),
        k => match k.strip_prefix('q') {
            Some(t) => format!("Q{t}"),
            None => k.to_string(),
        },
    }
}

fn emit_markdown(result: &McStudyResult) -> String {
    let keys = keys(result);
    let (digits, with_coverage) = match result.study {
        Study::I => (4, true),
        Study::II => (3, false),
    };
    let with_diff = with_coverage && result.cells.iter().any(|c| c.ols_minus_oh.is_some());
    let mut head = vec!["".to_string(), "ρ".into(), "α1".into()];
    for k in &keys {
        head.push(label(k));
        if with_coverage {
            head.push(format!("{} cov.", label(k)));
        }
    }
    if with_diff {
        head.push("OLS − OH".into());
    }
    let mut out = String::new();
    out.push_str(&format!("| {} |\n", head.join(" | ")));
    out.push_str(&format!("|{}\n", "---|".repeat(head.len())));
    for (i, c) in result.cells.iter().enumerate() {
        let mut means = vec![format!("{}.)", i + 1), dec(Some(c.rho), 2), dec(Some(c.alpha1), 2)];
        let mut sds = vec![String::new(); 3];
        for k in &keys {
            let s = c.summary(k);
            means.push(dec(s.and_then(|s| s.mean), digits));
            sds.push(s.and_then(|s| s.sd).map(|v| format!("({})", dec(Some(v), digits))).unwrap_or_default());
            if with_coverage {
                means.push(dec(s.and_then(|s| s.coverage), 3));
                sds.push(String::new());
            }
        }
        if with_diff {
            let d = c.ols_minus_oh.as_ref();
            means.push(dec(d.and_then(|s| s.mean), digits));
            sds.push(d.and_then(|s| s.sd).map(|v| format!("({})", dec(Some(v), digits))).unwrap_or_default());
        }
        if c.flagged {
            means[0].push_str(" †");
        }
        out.push_str(&format!("| {} |\n", means.join(" | ")));
        out.push_str(&format!("| {} |\n", sds.join(" | ")));
    }
    if result.cells.iter().any(|c| c.flagged) {
        out.push_str("\n† more than 1% of replications failed for at least one estimator.\n");
    }
    out
}
