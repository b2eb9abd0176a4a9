use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::estimators::ColumnNames;
use crate::model::{Dataset, ModelSpec};
use crate::rng::stream_rng;

/// Two equal-sized groups progressing through four stages; the outcome is
/// observed at the top stage only.
#[derive(Debug, Clone, PartialEq)]
pub struct DgpConfig {
    pub n_per_group: usize,
    /// Selection-index shift of the second group.
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub rho: f64,
    /// Intercept, group gap and severity slope of the outcome.
    pub beta: [f64; 3],
    pub stage_proportions: Vec<f64>,
    pub seed: u64,
}

impl DgpConfig {
    /// Stage shares 0.4 / 0.1 / 0.1 / 0.4.
    pub fn study_one(rho: f64, alpha1: f64, seed: u64) -> Self {
        Self::base(rho, alpha1, vec![0.4, 0.1, 0.1, 0.4], seed)
    }

    /// Stage shares 0.20 / 0.05 / 0.05 / 0.70.
    pub fn study_two(rho: f64, alpha1: f64, seed: u64) -> Self {
        Self::base(rho, alpha1, vec![0.20, 0.05, 0.05, 0.70], seed)
    }

    fn base(rho: f64, alpha1: f64, stage_proportions: Vec<f64>, seed: u64) -> Self {
        Self {
            n_per_group: 1000,
            alpha1,
            alpha2: 1.0,
            alpha3: 1.0,
            rho,
            beta: [40f64.ln(), 0.1, 1.0],
            stage_proportions,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.stage_proportions;
        if p.len() < 2 || p.iter().any(|&v| !(v > 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "stage proportions must be positive and sum to 1: {p:?}"
            )));
        }
        if !(self.rho.abs() <= 1.0) {
            return Err(Error::InvalidArgument(format!("|rho| must be at most 1, got {}", self.rho)));
        }
        if self.n_per_group == 0 {
            return Err(Error::InvalidArgument("empty groups".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        2 * self.n_per_group
    }

    /// Realized stage counts: rounded shares, remainder to the top stage.
    pub fn stage_counts(&self) -> Vec<usize> {
        let n = self.n();
        let k = self.stage_proportions.len();
        let mut counts: Vec<usize> = self.stage_proportions[..k - 1]
            .iter()
            .map(|p| (p * n as f64).round() as usize)
            .collect();
        let used: usize = counts.iter().sum();
        counts.push(n.saturating_sub(used));
        counts
    }
}

/// A simulated sample with the latent errors kept for diagnostics.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub data: Dataset,
    pub spec: ModelSpec,
    pub names: ColumnNames,
    pub xi: Vec<f64>,
    pub eps: Vec<f64>,
}

pub fn simulate_dgp(config: &DgpConfig) -> Result<SimulatedData> {
    simulate_with(config, &mut stream_rng(config.seed, 0))
}

/// Draws one sample. Per observation the draws are, in order: severity, the
/// excluded instrument, the selection error and an independent normal that
/// is mixed into the outcome error.
pub fn simulate_with<R: Rng>(config: &DgpConfig, rng: &mut R) -> Result<SimulatedData> {
    config.validate()?;
    let n = config.n();
    let n_stages = config.stage_proportions.len();
    let top = n_stages - 1;
    let black: Vec<f64> = (0..n).map(|i| if i < config.n_per_group { 0.0 } else { 1.0 }).collect();
    let mut severity = Vec::with_capacity(n);
    let mut instrument = Vec::with_capacity(n);
    let mut xi = Vec::with_capacity(n);
    let mut eps = Vec::with_capacity(n);
    let scale = ((1.0 - config.rho) * (1.0 + config.rho)).max(0.0).sqrt();
    for _ in 0..n {
        let s: f64 = rng.sample(StandardNormal);
        let z: f64 = rng.sample(StandardNormal);
        let x: f64 = rng.sample(StandardNormal);
        let eta: f64 = rng.sample(StandardNormal);
        severity.push(s);
        instrument.push(z);
        xi.push(x);
        eps.push(config.rho * x + scale * eta);
    }
    let latent: Vec<f64> = (0..n)
        .map(|i| config.alpha1 * black[i] + config.alpha2 * severity[i] + config.alpha3 * instrument[i] + xi[i])
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| latent[a].total_cmp(&latent[b]).then(a.cmp(&b)));
    let mut stage = vec![0usize; n];
    let mut at = 0;
    for (k, c) in config.stage_counts().into_iter().enumerate() {
        for &i in &order[at..at + c] {
            stage[i] = k;
        }
        at += c;
    }
    let outcome: Vec<Option<f64>> = (0..n)
        .map(|i| {
            (stage[i] == top).then(|| {
                config.beta[0] + config.beta[1] * black[i] + config.beta[2] * severity[i] + eps[i]
            })
        })
        .collect();
    let z = DMatrix::from_fn(n, 3, |i, j| [black[i], severity[i], instrument[i]][j]);
    let x = DMatrix::from_fn(n, 3, |i, j| [1.0, black[i], severity[i]][j]);
    let data = Dataset::new(stage, outcome, x, z)?;
    let spec = ModelSpec::new(n_stages, vec![top], vec![2])?;
    Ok(SimulatedData {
        data,
        spec,
        names: ColumnNames {
            selection: vec!["black".into(), "severity".into(), "z".into()],
            outcome: vec!["_cons".into(), "black".into(), "severity".into()],
        },
        xi,
        eps,
    })
}
