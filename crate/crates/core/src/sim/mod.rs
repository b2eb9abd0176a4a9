//! Monte Carlo designs for comparing OLS, FIML and imputation estimators of
//! a group gap in a selected outcome.

mod dgp;
mod study;
mod table;

pub use dgp::{simulate_dgp, simulate_with, DgpConfig, SimulatedData};
pub use study::{
    run_study, CellResult, EstimatorSummary, McStudyResult, SimEstimator, Study, StudyConfig, TRUE_BETA1,
};
pub use table::{emit_table, parse_csv, TableFormat};
