use rayon::prelude::*;

use super::dgp::{simulate_with, DgpConfig, SimulatedData};
use crate::error::{Error, Result};
use crate::estimators::{fit_imputation, fit_ols, fit_ordered_heckman, FitOptions, ImputationOptions};
use crate::rng::{derive_seed, stream_rng};

/// Group gap used by both designs.
pub const TRUE_BETA1: f64 = 0.1;
const Z_975: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Study {
    /// Stage shares 0.4/0.1/0.1/0.4, OLS against FIML.
    I,
    /// Stage shares 0.20/0.05/0.05/0.70, adds quantile imputation.
    II,
}

impl Study {
    pub fn default_cells(self) -> Vec<(f64, f64)> {
        let rhos: &[f64] = match self {
            Study::I => &[0.5, 0.25, 0.1, 0.0],
            Study::II => &[1.0, 0.5, 0.25, 0.0],
        };
        let alphas = [0.5, 0.2, 0.1, 0.0];
        rhos.iter().flat_map(|&r| alphas.iter().map(move |&a| (r, a))).collect()
    }

    pub fn default_estimators(self) -> Vec<SimEstimator> {
        match self {
            Study::I => vec![SimEstimator::Ols, SimEstimator::Fiml],
            Study::II => {
                let mut v = vec![SimEstimator::Ols];
                v.extend([0.4, 0.5, 0.6, 0.7, 0.8, 0.9].map(SimEstimator::Imputation));
                v.push(SimEstimator::Fiml);
                v
            }
        }
    }

    fn config(self, rho: f64, alpha1: f64, seed: u64) -> DgpConfig {
        match self {
            Study::I => DgpConfig::study_one(rho, alpha1, seed),
            Study::II => DgpConfig::study_two(rho, alpha1, seed),
        }
    }

    fn id(self) -> u64 {
        match self {
            Study::I => 1,
            Study::II => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimEstimator {
    Ols,
    Fiml,
    /// Quantile regression with the unobserved imputed at the sample minimum.
    Imputation(f64),
}

impl SimEstimator {
    pub fn key(self) -> String {
        match self {
            SimEstimator::Ols => "ols".into(),
            SimEstimator::Fiml => "oh".into(),
            SimEstimator::Imputation(t) => format!("q{}", (t * 100.0).round() as i64),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub study: Study,
    pub cells: Vec<(f64, f64)>,
    pub replications: usize,
    pub estimators: Vec<SimEstimator>,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    pub n_per_group: usize,
}

impl StudyConfig {
    pub fn new(study: Study, replications: usize, seed: u64) -> Self {
        Self {
            study,
            cells: study.default_cells(),
            replications,
            estimators: study.default_estimators(),
            seed,
            threads: None,
            n_per_group: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EstimatorSummary {
    pub key: String,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    /// Share of 95% intervals containing the true gap.
    pub coverage: Option<f64>,
    pub n_ok: usize,
    pub n_failed: usize,
    /// Not run in this cell (FIML at ρ = 1).
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CellResult {
    pub rho: f64,
    pub alpha1: f64,
    pub replications: usize,
    pub estimators: Vec<EstimatorSummary>,
    /// OLS minus FIML over replications where both succeeded.
    pub ols_minus_oh: Option<EstimatorSummary>,
    /// Replications where imputed rows sit on or above the fitted median.
    pub crossing_reps: usize,
    pub flagged: bool,
}

impl CellResult {
    pub fn summary(&self, key: &str) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|e| e.key == key)
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct McStudyResult {
    pub study: Study,
    pub replications: usize,
    pub seed: u64,
    pub cells: Vec<CellResult>,
}

impl McStudyResult {
    pub fn cell(&self, rho: f64, alpha1: f64) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.rho == rho && c.alpha1 == alpha1)
    }
}

#[derive(Debug, Clone, Copy)]
struct Draw {
    estimate: f64,
    ci: Option<(f64, f64)>,
}

struct Replication {
    draws: Vec<Option<Draw>>,
    crossing: bool,
}

pub fn run_study(config: &StudyConfig) -> Result<McStudyResult> {
    if config.replications == 0 {
        return Err(Error::InvalidArgument("replications must be positive".into()));
    }
    let work = || -> Result<Vec<CellResult>> { config.cells.iter().map(|&(r, a)| run_cell(config, r, a)).collect() };
    let cells = match config.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    Ok(McStudyResult { study: config.study, replications: config.replications, seed: config.seed, cells })
}

fn run_cell(config: &StudyConfig, rho: f64, alpha1: f64) -> Result<CellResult> {
    let cell_seed = derive_seed(config.seed, &[config.study.id(), rho.to_bits(), alpha1.to_bits()]);
    let mut dgp = config.study.config(rho, alpha1, cell_seed);
    dgp.n_per_group = config.n_per_group;
    dgp.validate()?;
    let skip_fiml = rho.abs() >= 1.0;
    let reps: Vec<Replication> = (0..config.replications as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(cell_seed, r);
            match simulate_with(&dgp, &mut rng) {
                Ok(sim) => replicate(&sim, &config.estimators, skip_fiml),
                Err(_) => Replication { draws: vec![None; config.estimators.len()], crossing: false },
            }
        })
        .collect();

    let mut estimators = Vec::with_capacity(config.estimators.len());
    for (k, est) in config.estimators.iter().enumerate() {
        let skipped = skip_fiml && *est == SimEstimator::Fiml;
        let ok: Vec<Draw> = reps.iter().filter_map(|r| r.draws[k]).collect();
        let mut s = summarize(est.key(), &ok, config.replications - ok.len());
        if skipped {
            s.n_failed = 0;
            s.skipped = true;
        }
        estimators.push(s);
    }
    let ols = config.estimators.iter().position(|e| *e == SimEstimator::Ols);
    let oh = config.estimators.iter().position(|e| *e == SimEstimator::Fiml);
    let ols_minus_oh = match (ols, oh) {
        (Some(a), Some(b)) if !skip_fiml => {
            let diffs: Vec<Draw> = reps
                .iter()
                .filter_map(|r| match (r.draws[a], r.draws[b]) {
                    (Some(x), Some(y)) => Some(Draw { estimate: x.estimate - y.estimate, ci: None }),
                    _ => None,
                })
                .collect();
            let failed = config.replications - diffs.len();
            Some(summarize("diff".into(), &diffs, failed))
        }
        _ => None,
    };
    let limit = config.replications as f64 * 0.01;
    let flagged = estimators.iter().any(|e| e.n_failed as f64 > limit);
    Ok(CellResult {
        rho,
        alpha1,
        replications: config.replications,
        estimators,
        ols_minus_oh,
        crossing_reps: reps.iter().filter(|r| r.crossing).count(),
        flagged,
    })
}

fn replicate(sim: &SimulatedData, estimators: &[SimEstimator], skip_fiml: bool) -> Replication {
    let mut crossing = false;
    let draws = estimators
        .iter()
        .map(|est| match est {
            SimEstimator::Ols => ols_draw(sim),
            SimEstimator::Fiml if skip_fiml => None,
            SimEstimator::Fiml => fiml_draw(sim),
            SimEstimator::Imputation(tau) => {
                let fit = fit_imputation(&sim.data, &sim.spec, *tau, &ImputationOptions::default()).ok()?;
                if (*tau - 0.5).abs() < 1e-12 && fit.n_crossing > 0 {
                    crossing = true;
                }
                Some(Draw { estimate: fit.fit.coefficients[1], ci: None })
            }
        })
        .collect();
    Replication { draws, crossing }
}

fn ols_draw(sim: &SimulatedData) -> Option<Draw> {
    let rows = sim.data.selected_rows();
    let x = sim.data.x_outcome().select_rows(rows.iter());
    let y = nalgebra::DVector::from_iterator(rows.len(), rows.iter().map(|&i| sim.data.outcome()[i].unwrap_or(f64::NAN)));
    let fit = fit_ols(&y, &x, None, Some(&sim.names.outcome)).ok()?;
    with_interval(fit.estimates[1], fit.se(1))
}

fn fiml_draw(sim: &SimulatedData) -> Option<Draw> {
    let opts = FitOptions { names: sim.names.clone(), ..FitOptions::default() };
    let fit = fit_ordered_heckman(&sim.data, &sim.spec, &opts).ok()?;
    if !fit.converged {
        return None;
    }
    let i = fit.index_of("y3.black")?;
    with_interval(fit.estimates[i], fit.se(i))
}

fn with_interval(estimate: f64, se: Option<f64>) -> Option<Draw> {
    let se = se.filter(|s| s.is_finite())?;
    estimate.is_finite().then(|| Draw { estimate, ci: Some((estimate - Z_975 * se, estimate + Z_975 * se)) })
}

fn summarize(key: String, draws: &[Draw], n_failed: usize) -> EstimatorSummary {
    let n = draws.len();
    let mean = (n > 0).then(|| draws.iter().map(|d| d.estimate).sum::<f64>() / n as f64);
    let sd = mean.filter(|_| n > 1).map(|m| {
        (draws.iter().map(|d| (d.estimate - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    });
    let with_ci: Vec<(f64, f64)> = draws.iter().filter_map(|d| d.ci).collect();
    let coverage = (!with_ci.is_empty()).then(|| {
        with_ci.iter().filter(|(lo, hi)| *lo <= TRUE_BETA1 && TRUE_BETA1 <= *hi).count() as f64 / with_ci.len() as f64
    });
    EstimatorSummary { key, mean, sd, coverage, n_ok: n, n_failed, skipped: false }
}
