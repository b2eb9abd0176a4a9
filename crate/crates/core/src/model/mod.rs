//! The ordered-selection model family: data containers, parameterization and
//! the joint log-likelihood.

mod loglik;
mod params;

pub use loglik::{evaluate, ordsel_loglik, stage_probabilities, Evaluation, LoglikReport};
pub use params::{pack_params, unpack_params, ParamVector, Regime};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Stage layout of the model and the role of the selection columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    n_stages: usize,
    outcome_stages: Vec<usize>,
    exclusion_columns: Vec<usize>,
}

impl ModelSpec {
    pub fn new(
        n_stages: usize,
        outcome_stages: Vec<usize>,
        exclusion_columns: Vec<usize>,
    ) -> Result<Self> {
        if n_stages < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least two stages, got {n_stages}"
            )));
        }
        if outcome_stages.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one outcome stage is required".into(),
            ));
        }
        if exclusion_columns.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one exclusion column is required".into(),
            ));
        }
        let mut spec = Self::selection_only(n_stages)?;
        let mut stages = outcome_stages;
        stages.sort_unstable();
        stages.dedup();
        if let Some(&bad) = stages.iter().find(|&&s| s >= n_stages) {
            return Err(Error::InvalidArgument(format!(
                "outcome stage {bad} out of range for {n_stages} stages"
            )));
        }
        let mut excl = exclusion_columns;
        excl.sort_unstable();
        excl.dedup();
        spec.outcome_stages = stages;
        spec.exclusion_columns = excl;
        Ok(spec)
    }

    /// A stage-only layout (plain ordered probit): no outcome regimes.
    pub fn selection_only(n_stages: usize) -> Result<Self> {
        if n_stages < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least two stages, got {n_stages}"
            )));
        }
        Ok(Self {
            n_stages,
            outcome_stages: Vec::new(),
            exclusion_columns: Vec::new(),
        })
    }

    pub fn n_stages(&self) -> usize {
        self.n_stages
    }

    pub fn outcome_stages(&self) -> &[usize] {
        &self.outcome_stages
    }

    pub fn exclusion_columns(&self) -> &[usize] {
        &self.exclusion_columns
    }

    pub fn n_regimes(&self) -> usize {
        self.outcome_stages.len()
    }

    /// Regime index of `stage`, if it carries an outcome equation.
    pub fn regime_of(&self, stage: usize) -> Option<usize> {
        self.outcome_stages.iter().position(|&s| s == stage)
    }

    /// Length of the packed parameter vector for `q` selection and `p`
    /// outcome covariates.
    pub fn n_params(&self, q: usize, p: usize) -> usize {
        q + self.n_stages - 1 + self.n_regimes() * (p + 2)
    }
}

/// Observations aligned across the selection and outcome equations.
#[derive(Debug, Clone)]
pub struct Dataset {
    stage: Vec<usize>,
    outcome: Vec<Option<f64>>,
    x_outcome: DMatrix<f64>,
    z_selection: DMatrix<f64>,
    cluster_id: Vec<i64>,
    weight: Vec<f64>,
}

impl Dataset {
    /// Unit weights and one cluster per observation.
    pub fn new(
        stage: Vec<usize>,
        outcome: Vec<Option<f64>>,
        x_outcome: DMatrix<f64>,
        z_selection: DMatrix<f64>,
    ) -> Result<Self> {
        let n = stage.len();
        if n == 0 {
            return Err(Error::Data("dataset has no observations".into()));
        }
        if outcome.len() != n || x_outcome.nrows() != n || z_selection.nrows() != n {
            return Err(Error::Data(format!(
                "misaligned columns: stage {n}, outcome {}, x rows {}, z rows {}",
                outcome.len(),
                x_outcome.nrows(),
                z_selection.nrows()
            )));
        }
        if let Some(i) = outcome.iter().position(|y| matches!(y, Some(v) if !v.is_finite())) {
            return Err(Error::Data(format!("non-finite outcome at row {i}")));
        }
        if x_outcome.iter().chain(z_selection.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite covariate value".into()));
        }
        Ok(Self {
            stage,
            outcome,
            x_outcome,
            z_selection,
            cluster_id: (0..n as i64).collect(),
            weight: vec![1.0; n],
        })
    }

    pub fn with_clusters(mut self, cluster_id: Vec<i64>) -> Result<Self> {
        if cluster_id.len() != self.n() {
            return Err(Error::Data("cluster ids do not cover every row".into()));
        }
        self.cluster_id = cluster_id;
        Ok(self)
    }

    pub fn with_weights(mut self, weight: Vec<f64>) -> Result<Self> {
        if weight.len() != self.n() {
            return Err(Error::Data("weights do not cover every row".into()));
        }
        if let Some(i) = weight.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Data(format!(
                "weight at row {i} is not strictly positive"
            )));
        }
        self.weight = weight;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.stage.len()
    }
    pub fn stage(&self) -> &[usize] {
        &self.stage
    }
    pub fn outcome(&self) -> &[Option<f64>] {
        &self.outcome
    }
    pub fn x_outcome(&self) -> &DMatrix<f64> {
        &self.x_outcome
    }
    pub fn z_selection(&self) -> &DMatrix<f64> {
        &self.z_selection
    }
    pub fn cluster_id(&self) -> &[i64] {
        &self.cluster_id
    }
    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    /// Checks the stage codes against the layout. Outcome observability is
    /// only enforced when the layout has outcome regimes.
    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        if let Some(i) = self.stage.iter().position(|&s| s >= spec.n_stages()) {
            return Err(Error::Data(format!(
                "stage code {} at row {i} outside 0..{}",
                self.stage[i],
                spec.n_stages()
            )));
        }
        if spec.n_regimes() == 0 {
            return Ok(());
        }
        for (i, (&s, y)) in self.stage.iter().zip(&self.outcome).enumerate() {
            let carries = spec.regime_of(s).is_some();
            if carries != y.is_some() {
                return Err(Error::Data(if carries {
                    format!("row {i}: outcome missing at outcome stage {s}")
                } else {
                    format!("row {i}: outcome present at non-outcome stage {s}")
                }));
            }
        }
        let q = self.z_selection.ncols();
        if let Some(&c) = spec.exclusion_columns().iter().find(|&&c| c >= q) {
            return Err(Error::InvalidArgument(format!(
                "exclusion column {c} out of range ({q} selection columns)"
            )));
        }
        // Outcome covariates must reappear among the shared selection
        // columns; a constant column is absorbed by the cutoffs.
        for j in 0..self.x_outcome.ncols() {
            let col = self.x_outcome.column(j);
            let first = col[0];
            if col.iter().all(|&v| v == first) {
                continue;
            }
            let found = (0..q)
                .filter(|c| !spec.exclusion_columns().contains(c))
                .any(|c| self.z_selection.column(c) == col);
            if !found {
                return Err(Error::InvalidArgument(format!(
                    "outcome column {j} does not appear among the shared selection columns"
                )));
            }
        }
        Ok(())
    }

    /// Rows whose stage carries an outcome.
    pub fn selected_rows(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.outcome[i].is_some()).collect()
    }

    /// Copy of the dataset with stage codes replaced, e.g. after binarizing.
    pub fn with_stages(&self, stage: Vec<usize>, outcome: Vec<Option<f64>>) -> Result<Self> {
        let mut out = Self::new(
            stage,
            outcome,
            self.x_outcome.clone(),
            self.z_selection.clone(),
        )?;
        out.cluster_id = self.cluster_id.clone();
        out.weight = self.weight.clone();
        Ok(out)
    }
}
