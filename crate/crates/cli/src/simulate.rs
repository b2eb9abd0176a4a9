use std::path::Path;

use ordheck::sim::{emit_table, run_study, SimEstimator, Study, StudyConfig, TableFormat};

use crate::config::{load, SimConfig};
use crate::{report, CliError, Outputs};

pub fn cmd_simulate(study: Study, config: Option<&Path>, seed: u64, reps: usize, out: &mut Outputs) -> Result<(), CliError> {
    let cfg: SimConfig = match config {
        Some(p) => load(p)?,
        None => SimConfig::default(),
    };
    if reps == 0 {
        return Err(CliError::Config("--reps must be positive".into()));
    }
    let mut sc = StudyConfig::new(study, reps, seed);
    if !cfg.cells.is_empty() {
        sc.cells = cfg.cells.iter().map(|c| (c[0], c[1])).collect();
    }
    if let Some(n) = cfg.n_per_group {
        sc.n_per_group = n;
    }
    if !cfg.taus.is_empty() && study == Study::II {
        if let Some(t) = cfg.taus.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(CliError::Config(format!("tau {t} outside (0, 1)")));
        }
        let mut est = vec![SimEstimator::Ols];
        est.extend(cfg.taus.iter().map(|&t| SimEstimator::Imputation(t)));
        est.push(SimEstimator::Fiml);
        sc.estimators = est;
    }
    let result = run_study(&sc)?;
    let stem = match study {
        Study::I => "study_I",
        Study::II => "study_II",
    };
    out.write(&format!("{stem}.md"), &emit_table(&result, TableFormat::Markdown)?)?;
    out.write(&format!("{stem}.csv"), &emit_table(&result, TableFormat::Csv)?)?;
    for c in &result.cells {
        let failed: usize = c.estimators.iter().map(|e| e.n_failed).sum();
        report(&format!(
            "event=cell rho={} alpha1={} failures={failed} crossing_reps={} flagged={}",
            c.rho, c.alpha1, c.crossing_reps, c.flagged
        ));
    }
    let flagged = result.cells.iter().filter(|c| c.flagged).count();
    if flagged > 0 {
        return Err(CliError::Numeric(format!("{flagged} cell(s) had more than 1% failed replications")));
    }
    Ok(())
}
