use std::path::Path;

use nalgebra::{DMatrix, DVector};
use ordheck::data::{load_csv, BuiltDesign};
use ordheck::estimators::{
    fit_imputation, fit_ols, fit_ordered_heckman, fit_ordered_probit, fit_two_step, FitOptions, FitResult,
    ImputationOptions, OlsModel,
};
use ordheck::inference::{covariance, normal_p_value, wald, CovarianceMethod, CovarianceRequest};
use ordheck::model::ModelSpec;

use crate::config::{load, CovarianceKind, EstimatorKind, FitConfig};
use crate::format::{Report, Value};
use crate::{report, CliError, Outputs};

pub fn cmd_fit(config: &Path, data: &Path, out: &mut Outputs) -> Result<(), CliError> {
    let cfg: FitConfig = load(config)?;
    cfg.data.validate().map_err(|e| CliError::Config(e.to_string()))?;
    if cfg.covariance == CovarianceKind::Cluster && cfg.data.cluster_column.is_none() {
        return Err(CliError::Config("cluster covariance needs data.cluster_column".into()));
    }
    if cfg.estimator == EstimatorKind::Imputation && !(cfg.tau > 0.0 && cfg.tau < 1.0) {
        return Err(CliError::Config(format!("tau must lie in (0, 1), got {}", cfg.tau)));
    }
    let design = load_csv(data, &cfg.data)?;
    for line in &design.report {
        report(line);
    }
    let request = CovarianceRequest {
        method: match cfg.covariance {
            CovarianceKind::Oim => CovarianceMethod::ObservedInformation,
            CovarianceKind::Robust => CovarianceMethod::Robust,
            CovarianceKind::Cluster => CovarianceMethod::ClusterRobust,
        },
        small_sample_correction: cfg.small_sample_correction,
    };
    let opts = FitOptions {
        max_iter: cfg.max_iter,
        covariance: request,
        names: design.names.clone(),
        exp_beta: cfg.exp_beta.clone(),
        ..FitOptions::default()
    };
    let (rep, converged, title) = match cfg.estimator {
        EstimatorKind::Imputation => (imputation_report(&design, &cfg)?, true, "Imputation"),
        kind => {
            let (fit, spec, title) = run_estimator(kind, &design, &opts, &request)?;
            (fit_report(&fit, &design, &spec, &cfg, title), fit.converged, title)
        }
    };
    out.write("fit.md", &rep.to_markdown())?;
    out.write("fit.csv", &rep.to_csv())?;
    if !converged {
        return Err(CliError::Numeric(format!("{title} did not converge")));
    }
    Ok(())
}

fn run_estimator(
    kind: EstimatorKind,
    design: &BuiltDesign,
    opts: &FitOptions,
    request: &CovarianceRequest,
) -> Result<(FitResult, ModelSpec, &'static str), CliError> {
    let spec = design.spec.clone();
    Ok(match kind {
        EstimatorKind::Ols => (ols(design, request)?, spec, "OLS"),
        EstimatorKind::Oprobit => (fit_ordered_probit(&design.data, &spec, opts)?, spec, "Ordered Probit"),
        EstimatorKind::Oheckman => (fit_ordered_heckman(&design.data, &spec, opts)?, spec, "Ordered Heckman"),
        EstimatorKind::Twostep => (fit_two_step(&design.data, &spec, opts)?.result, spec, "Two-step"),
        EstimatorKind::Heckman2 => {
            let top = spec.n_stages() - 1;
            if spec.outcome_stages() != [top] {
                return Err(CliError::Config("heckman2 needs the top stage as the only outcome stage".into()));
            }
            let stage = design.data.stage().iter().map(|&s| usize::from(s == top)).collect();
            let data = design.data.with_stages(stage, design.data.outcome().to_vec())?;
            let binary = ModelSpec::new(2, vec![1], spec.exclusion_columns().to_vec())?;
            (fit_ordered_heckman(&data, &binary, opts)?, binary, "Heckman")
        }
        EstimatorKind::Imputation => unreachable!("handled separately"),
    })
}

fn outcome_prefix(spec: &ModelSpec) -> String {
    match spec.outcome_stages() {
        [s] => format!("y{s}."),
        _ => "y.".into(),
    }
}

fn ols(design: &BuiltDesign, request: &CovarianceRequest) -> Result<FitResult, CliError> {
    let data = &design.data;
    let rows = data.selected_rows();
    let x = data.x_outcome().select_rows(rows.iter());
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| data.outcome()[i].unwrap_or(f64::NAN)));
    let w: Vec<f64> = rows.iter().map(|&i| data.weight()[i]).collect();
    let clusters: Vec<i64> = rows.iter().map(|&i| data.cluster_id()[i]).collect();
    let prefix = outcome_prefix(&design.spec);
    let names: Vec<String> = design.names.outcome.iter().map(|n| format!("{prefix}{n}")).collect();
    let mut fit = fit_ols(&y, &x, Some(&w), Some(&names))?;
    if request.method != CovarianceMethod::ObservedInformation {
        let model = OlsModel { x: &x, y: &y, weights: Some(&w), clusters: Some(&clusters) };
        fit.covariance = Some(covariance(&model, &fit.estimates, request)?);
        fit.covariance_label = request.label().into();
    }
    fit.n_obs = data.n();
    Ok(fit)
}

fn coefficient(fit: &FitResult, i: usize) -> Value {
    let estimate = fit.estimates[i];
    let se = fit.se(i);
    Value::Coefficient { estimate, se, p: se.map(|s| normal_p_value(estimate, s)) }
}

fn fit_report(fit: &FitResult, design: &BuiltDesign, spec: &ModelSpec, cfg: &FitConfig, title: &str) -> Report {
    let mut rep = Report::new(title);
    let with_prefix = |p: &str| -> Vec<(usize, String)> {
        fit.names.iter().enumerate().filter_map(|(i, n)| n.strip_prefix(p).map(|t| (i, t.to_string()))).collect()
    };
    let stages: Vec<usize> = spec.outcome_stages().to_vec();
    let multi = stages.len() > 1;
    let regime_label = |s: usize| if multi { format!(" (stage {s})") } else { String::new() };

    for &s in &stages {
        let section = format!("Outcome equation{}", regime_label(s));
        for (i, term) in with_prefix(&format!("y{s}.")) {
            rep.push(&section, term, coefficient(fit, i));
        }
        if let Some(i) = fit.index_of(&format!("theta.{s}")) {
            rep.push(&section, "selection correction (λ)", coefficient(fit, i));
        }
    }
    if title == "OLS" && stages.len() > 1 {
        for (i, term) in with_prefix("y.") {
            rep.push("Outcome equation (pooled)", term, coefficient(fit, i));
        }
    }
    for (i, term) in with_prefix("sel.") {
        rep.push("Selection equation", term, coefficient(fit, i));
    }
    for (i, term) in with_prefix("cut.") {
        let Value::Coefficient { estimate, se, .. } = coefficient(fit, i) else { unreachable!() };
        rep.push("Cutoffs", format!("μ{term}"), Value::Coefficient { estimate, se, p: None });
    }

    let aux = "";
    for &s in &stages {
        if let Some(i) = fit.index_of(&format!("sigma.{s}")) {
            rep.push(aux, format!("σ{}", regime_label(s)), Value::Coefficient { estimate: fit.estimates[i], se: fit.se(i), p: None });
        }
    }
    for &s in &stages {
        if let Some(i) = fit.index_of(&format!("rho.{s}")) {
            rep.push(aux, format!("ρ{}", regime_label(s)), Value::Coefficient { estimate: fit.estimates[i], se: fit.se(i), p: None });
            if let Some(&p) = fit.derived.get(&format!("p_rho0.{s}")) {
                rep.push(aux, format!("p-value: ρ=0{}", regime_label(s)), Value::PValue(p));
            }
        }
    }
    if let Some(&p) = fit.derived.get("p_rho0.joint") {
        let joint = stages.iter().map(|s| format!("ρ{s}")).collect::<Vec<_>>().join("=");
        rep.push(aux, format!("p-value: {joint}=0"), Value::PValue(p));
    }
    let excl = match (fit.derived.get("excl.chi2"), fit.derived.get("excl.df"), fit.derived.get("excl.p")) {
        (Some(&c), Some(&d), Some(&p)) => Some((c, d as usize, p)),
        _ => exclusion_wald(fit, design),
    };
    if let Some((chi2, df, p)) = excl {
        rep.push(aux, "p-value: exclusion restriction(s)", Value::PValue(p));
        rep.push(aux, format!("exclusion restriction(s): χ²({df})"), Value::Statistic(chi2));
    }
    for name in &cfg.exp_beta {
        for &s in &stages {
            let derived = (fit.derived.get(&format!("expm1.y{s}.{name}")), fit.derived.get(&format!("expm1_se.y{s}.{name}")));
            let value = match derived {
                (Some(&e), se) => Some((e, se.copied())),
                _ => [format!("y{s}.{name}"), format!("y.{name}")]
                    .iter()
                    .find_map(|n| fit.index_of(n))
                    .map(|i| (fit.estimates[i].exp_m1(), fit.se(i).map(|se| fit.estimates[i].exp() * se))),
            };
            if let Some((estimate, se)) = value {
                rep.push(aux, format!("exp(β_{name})−1{}", regime_label(s)), Value::Coefficient { estimate, se, p: None });
            }
        }
    }
    if let Some(&r2) = fit.derived.get("r2") {
        rep.push(aux, "R²", Value::Statistic(r2));
    }
    if let Some(ll) = fit.loglik {
        rep.push(aux, "Log-likelihood", Value::Statistic(ll));
    }
    rep.push(aux, "Observations", Value::Count(fit.n_obs));
    rep.push(aux, "Observations with outcome", Value::Count(design.data.outcome().iter().filter(|y| y.is_some()).count()));
    rep.push(aux, "Standard errors", Value::Text(fit.covariance_label.clone()));
    rep.notes.push("*** denotes significance at 1%, ** at 5%, and * at 10%.".into());
    for flag in &fit.flags {
        rep.notes.push(format!("Warning: {flag}"));
    }
    rep
}

/// Joint Wald test that the selection-only coefficients are zero.
fn exclusion_wald(fit: &FitResult, design: &BuiltDesign) -> Option<(f64, usize, f64)> {
    let cov = fit.covariance.as_ref()?;
    let idx: Vec<usize> = design
        .spec
        .exclusion_columns()
        .iter()
        .filter_map(|&c| fit.index_of(&format!("sel.{}", design.names.selection[c])))
        .collect();
    if idx.is_empty() {
        return None;
    }
    let r = DMatrix::from_fn(idx.len(), fit.estimates.len(), |a, b| f64::from(u8::from(idx[a] == b)));
    let w = wald(&fit.estimates, cov, &r, &DVector::zeros(idx.len())).ok()?;
    Some((w.statistic, w.df, w.p_value))
}

fn imputation_report(design: &BuiltDesign, cfg: &FitConfig) -> Result<Report, CliError> {
    let fit = fit_imputation(&design.data, &design.spec, cfg.tau, &ImputationOptions::default())?;
    let mut rep = Report::new(format!("Imputation (τ = {})", cfg.tau));
    for (name, b) in design.names.outcome.iter().zip(fit.fit.coefficients.iter()) {
        rep.push("Outcome equation", name.clone(), Value::Coefficient { estimate: *b, se: None, p: None });
    }
    for name in &cfg.exp_beta {
        if let Some(i) = design.names.outcome.iter().position(|n| n == name) {
            let b = fit.fit.coefficients[i];
            rep.push("", format!("exp(β_{name})−1"), Value::Coefficient { estimate: b.exp_m1(), se: None, p: None });
        }
    }
    rep.push("", "Imputed value", Value::Statistic(fit.imputed_value));
    rep.push("", "Observations", Value::Count(design.data.n()));
    rep.push("", "Imputed observations", Value::Count(fit.n_imputed));
    rep.push("", "Imputed rows at or above the fitted quantile", Value::Count(fit.n_crossing));
    rep.notes.push("Standard errors are not reported for the imputation estimator.".into());
    if fit.n_crossing > 0 {
        rep.notes.push(format!("Warning: {} imputed rows sit at or above the fitted quantile.", fit.n_crossing));
    }
    Ok(rep)
}
