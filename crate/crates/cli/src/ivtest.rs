use std::path::Path;

use ordheck::data::RawTable;
use ordheck::ivtest::{binarize, huber_mellace, BinarizeRule, IvTestInput};

use crate::config::{load, BinarizeKind, IvConfig};
use crate::format::{Report, Value};
use crate::{CliError, Outputs};

pub fn cmd_ivtest(config: &Path, data: &Path, seed: u64, reps: Option<usize>, out: &mut Outputs) -> Result<(), CliError> {
    let cfg: IvConfig = load(config)?;
    let rule = match (cfg.binarize, cfg.threshold) {
        (BinarizeKind::Median, _) => BinarizeRule::MedianSplit,
        (BinarizeKind::Threshold, Some(c)) => BinarizeRule::Threshold(c),
        (BinarizeKind::Threshold, None) => return Err(CliError::Config("binarize = \"threshold\" needs threshold".into())),
    };
    let table = RawTable::from_path(data)?;
    let stage_raw = table.numeric(&cfg.stage_column)?;
    let outcome = table.numeric(&cfg.outcome_column)?;
    let instrument = table.numeric(&cfg.instrument_column)?;
    let rows: Vec<usize> = (0..table.rows.len()).filter(|&i| stage_raw[i].is_some() && instrument[i].is_some()).collect();
    let top = rows.iter().filter_map(|&i| stage_raw[i]).fold(f64::NEG_INFINITY, f64::max);
    let selected = |v: f64| {
        if cfg.selected_stages.is_empty() {
            v == top
        } else {
            cfg.selected_stages.iter().any(|&s| s as f64 == v)
        }
    };
    let s: Vec<bool> = rows.iter().map(|&i| selected(stage_raw[i].unwrap_or(f64::NAN))).collect();
    let y: Vec<Option<f64>> = rows.iter().zip(&s).map(|(&i, &sel)| if sel { outcome[i] } else { None }).collect();
    if let Some(k) = (0..rows.len()).find(|&k| s[k] && y[k].is_none()) {
        return Err(CliError::Data(format!("row {}: selected but outcome missing", rows[k] + 1)));
    }
    let z_raw: Vec<f64> = rows.iter().map(|&i| instrument[i].unwrap_or(f64::NAN)).collect();
    let z = binarize(&z_raw, rule)?;
    let input = IvTestInput { y, s, z, bins: cfg.bins, draws: reps.unwrap_or(cfg.draws), seed };
    let r = huber_mellace(&input)?;
    let mut rep = Report::new("Exclusion restriction test");
    rep.push("", "Standardized Difference", Value::Statistic(r.standardized_difference));
    rep.push("", "p-Value Mean-Based Constraints", Value::PValue(r.p_mean));
    rep.push("", "p-Value Probability-Based Constraints", Value::PValue(r.p_prob));
    rep.push("", "Direction", Value::Text(if r.direction > 0 { "z=1 raises selection".into() } else { "labels swapped".into() }));
    rep.push("", "Share ratio q", Value::Statistic(r.q));
    rep.push("", "Bootstrap draws", Value::Count(r.draws_used));
    rep.push("", "Observations", Value::Count(rows.len()));
    rep.notes.push("A negative or zero standardized difference means no mean constraint is violated.".into());
    out.write("ivtest.md", &rep.to_markdown())?;
    out.write("ivtest.csv", &rep.to_csv())?;
    Ok(())
}
