//! Building estimation designs from CSV files: categorical expansion,
//! outcome transforms and leave-out group shares.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;
use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::ColumnNames;
use crate::linalg::dependent_columns;
use crate::model::{Dataset, ModelSpec};

const COLLINEAR_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeTransform {
    #[default]
    None,
    /// `ln(1 + y)`.
    Log1p,
    /// Inverse hyperbolic sine, `ln(y + √(y² + 1))`.
    Ihs,
}

impl OutcomeTransform {
    pub fn apply(self, y: f64) -> Result<f64> {
        match self {
            OutcomeTransform::None => Ok(y),
            OutcomeTransform::Log1p if y > -1.0 => Ok(y.ln_1p()),
            OutcomeTransform::Log1p => Err(Error::Domain(format!("log1p of {y}"))),
            OutcomeTransform::Ihs => Ok(y.asinh()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Enters both the outcome and the selection equation.
    #[default]
    OutcomeSelection,
    /// Excluded from the outcome equation.
    SelectionOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceColumn {
    pub name: String,
    #[serde(default)]
    pub role: Role,
}

/// Shares of the requested stage levels among the other members of a group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaveOutSpec {
    /// Group is the combination of these columns, e.g. district and year.
    pub groups: Vec<String>,
    pub levels: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingletonPolicy {
    #[default]
    Drop,
    /// Share set to zero plus a selection-only indicator column.
    Indicator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnConfig {
    pub stage_column: String,
    pub outcome_column: String,
    #[serde(default)]
    pub outcome_transform: OutcomeTransform,
    /// Number of stages; inferred from the largest code when absent.
    #[serde(default)]
    pub n_stages: Option<usize>,
    /// Stages observing the outcome; defaults to the top stage.
    #[serde(default)]
    pub outcome_stages: Vec<usize>,
    #[serde(default)]
    pub categorical: Vec<SourceColumn>,
    #[serde(default)]
    pub numeric: Vec<SourceColumn>,
    #[serde(default)]
    pub cluster_column: Option<String>,
    #[serde(default)]
    pub weight_column: Option<String>,
    #[serde(default)]
    pub leave_out: Vec<LeaveOutSpec>,
    #[serde(default)]
    pub singleton_policy: SingletonPolicy,
}

impl ColumnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stage_column.is_empty() || self.outcome_column.is_empty() {
            return Err(Error::InvalidArgument("stage and outcome columns must be named".into()));
        }
        let explicit = self.categorical.iter().chain(&self.numeric).any(|c| c.role == Role::SelectionOnly);
        if !explicit && self.leave_out.iter().all(|l| l.levels.is_empty()) {
            return Err(Error::InvalidArgument(
                "no selection-only column: name one or request leave-out shares".into(),
            ));
        }
        if let Some(l) = self.leave_out.iter().find(|l| l.groups.is_empty()) {
            return Err(Error::InvalidArgument(format!("leave-out levels {:?} have no group columns", l.levels)));
        }
        Ok(())
    }
}

/// Where a design column came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignColumn {
    pub name: String,
    pub source: String,
    pub level: Option<String>,
    pub role: Role,
}

#[derive(Debug, Clone, Serialize)]
pub struct BuiltDesign {
    #[serde(skip)]
    pub data: Dataset,
    #[serde(skip)]
    pub spec: ModelSpec,
    pub names: ColumnNames,
    /// Selection columns in design order.
    pub registry: Vec<DesignColumn>,
    pub reference_levels: BTreeMap<String, String>,
    pub pruned: Vec<String>,
    pub n_read: usize,
    /// Report lines of the form `event=... key=value`.
    pub report: Vec<String>,
}

/// A CSV file held as text, header required.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers: Vec<String> = rd.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let mut rows = Vec::new();
        for rec in rd.records() {
            rows.push(rec?.iter().map(|v| v.trim().to_string()).collect());
        }
        Ok(Self { headers, rows })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::read(std::fs::File::open(path)?)
    }

    pub fn index(&self, name: &str) -> Result<usize> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| Error::Data(format!("missing column {name:?}")))
    }

    pub fn column(&self, name: &str) -> Result<Vec<&str>> {
        let j = self.index(name)?;
        Ok(self.rows.iter().map(|r| r[j].as_str()).collect())
    }

    /// Numeric column; empty and `NA` cells are missing.
    pub fn numeric(&self, name: &str) -> Result<Vec<Option<f64>>> {
        self.column(name)?
            .into_iter()
            .enumerate()
            .map(|(i, v)| parse_cell(v).map_err(|_| Error::Data(format!("column {name:?} row {}: not a number: {v:?}", i + 1))))
            .collect()
    }
}

fn is_missing(v: &str) -> bool {
    v.is_empty() || v == "NA" || v == "." || v.eq_ignore_ascii_case("nan")
}

fn parse_cell(v: &str) -> std::result::Result<Option<f64>, ()> {
    if is_missing(v) {
        return Ok(None);
    }
    v.parse::<f64>().ok().filter(|x| x.is_finite()).map(Some).ok_or(())
}

pub fn load_csv(path: &Path, config: &ColumnConfig) -> Result<BuiltDesign> {
    build_design(&RawTable::from_path(path)?, config)
}

pub fn build_design(table: &RawTable, config: &ColumnConfig) -> Result<BuiltDesign> {
    config.validate()?;
    let mut report = Vec::new();
    let n_read = table.rows.len();
    let stage_raw = table.column(&config.stage_column)?;
    let outcome_raw = table.column(&config.outcome_column)?;

    // stage codes, dropping rows where the stage is missing
    let mut keep: Vec<usize> = Vec::new();
    let mut stage = Vec::new();
    for (i, v) in stage_raw.iter().enumerate() {
        if is_missing(v) {
            continue;
        }
        let code = v
            .parse::<f64>()
            .ok()
            .filter(|c| c.fract() == 0.0 && *c >= 0.0 && c.is_finite())
            .ok_or_else(|| Error::Data(format!("row {}: unknown stage level {v:?}", i + 1)))? as usize;
        if config.n_stages.is_some_and(|j| code >= j) {
            return Err(Error::Data(format!("row {}: unknown stage level {v:?}", i + 1)));
        }
        keep.push(i);
        stage.push(code);
    }
    if keep.len() < n_read {
        report.push(format!("event=drop_rows reason=missing_stage count={}", n_read - keep.len()));
    }
    if keep.is_empty() {
        return Err(Error::Data("no rows with a stage code".into()));
    }
    let n_stages = config.n_stages.unwrap_or_else(|| stage.iter().max().map_or(0, |m| m + 1));
    if n_stages < 2 {
        return Err(Error::Data("need at least two stages".into()));
    }
    let outcome_stages = if config.outcome_stages.is_empty() { vec![n_stages - 1] } else { config.outcome_stages.clone() };

    let mut outcome = Vec::with_capacity(keep.len());
    for (&i, &s) in keep.iter().zip(&stage) {
        let raw = outcome_raw[i];
        let carries = outcome_stages.contains(&s);
        let v = parse_cell(raw).map_err(|_| Error::Data(format!("row {}: outcome not a number: {raw:?}", i + 1)))?;
        outcome.push(match (carries, v) {
            (true, Some(y)) => Some(config.outcome_transform.apply(y).map_err(|e| Error::Data(format!("row {}: {e}", i + 1)))?),
            (true, None) => return Err(Error::Data(format!("row {}: outcome missing at outcome stage {s}", i + 1))),
            (false, Some(_)) => {
                return Err(Error::Data(format!("row {}: outcome present at non-outcome stage {s}", i + 1)))
            }
            (false, None) => None,
        });
    }

    let weights = match &config.weight_column {
        Some(name) => {
            let col = table.column(name)?;
            let mut w = Vec::with_capacity(keep.len());
            for &i in &keep {
                let v = col[i];
                let x: f64 = v
                    .parse()
                    .ok()
                    .filter(|x: &f64| x.is_finite() && *x > 0.0)
                    .ok_or_else(|| Error::Data(format!("row {}: weight {v:?} is not a positive number", i + 1)))?;
                w.push(x);
            }
            Some(w)
        }
        None => None,
    };

    // rows with a missing covariate are dropped
    let mut numeric: Vec<(SourceColumn, Vec<Option<f64>>)> = Vec::new();
    for c in &config.numeric {
        let col = table.numeric(&c.name)?;
        numeric.push((c.clone(), keep.iter().map(|&i| col[i]).collect()));
    }
    let mut categorical: Vec<(SourceColumn, Vec<&str>)> = Vec::new();
    for c in &config.categorical {
        let col = table.column(&c.name)?;
        categorical.push((c.clone(), keep.iter().map(|&i| col[i]).collect()));
    }
    let mut group_cols: Vec<Vec<String>> = Vec::new();
    for l in &config.leave_out {
        let cols: Vec<Vec<&str>> = l.groups.iter().map(|g| table.column(g)).collect::<Result<_>>()?;
        group_cols.push(
            keep.iter()
                .map(|&i| cols.iter().map(|c| c[i]).collect::<Vec<_>>().join("\u{1f}"))
                .collect(),
        );
    }
    let clusters_raw = config.cluster_column.as_ref().map(|c| table.column(c)).transpose()?;

    let complete: Vec<bool> = (0..keep.len())
        .map(|r| {
            numeric.iter().all(|(_, v)| v[r].is_some())
                && categorical.iter().all(|(_, v)| !is_missing(v[r]))
                && clusters_raw.as_ref().is_none_or(|c| !is_missing(c[keep[r]]))
        })
        .collect();
    let n_incomplete = complete.iter().filter(|c| !**c).count();
    if n_incomplete > 0 {
        report.push(format!("event=drop_rows reason=missing_covariate count={n_incomplete}"));
    }
    let mut rows: Vec<usize> = (0..keep.len()).filter(|&r| complete[r]).collect();

    // leave-out shares on the complete rows
    let mut share_cols: Vec<(String, Vec<f64>)> = Vec::new();
    let mut singleton = vec![false; keep.len()];
    for (l, groups) in config.leave_out.iter().zip(&group_cols) {
        let st: Vec<usize> = rows.iter().map(|&r| stage[r]).collect();
        let g: Vec<&String> = rows.iter().map(|&r| &groups[r]).collect();
        let lo = leave_out_means(&st, &g, &l.levels)?;
        for (k, &r) in rows.iter().enumerate() {
            singleton[r] |= lo.singleton[k];
        }
        for (c, level) in l.levels.iter().enumerate() {
            let mut full = vec![0.0; keep.len()];
            for (k, &r) in rows.iter().enumerate() {
                full[r] = if lo.singleton[k] { 0.0 } else { lo.shares[(k, c)] };
            }
            share_cols.push((format!("lo.{}.s{level}", l.groups.join("_")), full));
        }
    }
    let n_singleton = rows.iter().filter(|&&r| singleton[r]).count();
    let mut singleton_indicator = false;
    if n_singleton > 0 {
        match config.singleton_policy {
            SingletonPolicy::Drop => {
                rows.retain(|&r| !singleton[r]);
                report.push(format!("event=drop_rows reason=singleton_group count={n_singleton}"));
            }
            SingletonPolicy::Indicator => {
                singleton_indicator = true;
                report.push(format!("event=singleton_indicator count={n_singleton}"));
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Data("no rows left after dropping incomplete rows".into()));
    }

    // candidate selection columns: shared first, then selection-only
    let mut reference_levels = BTreeMap::new();
    let mut candidates: Vec<(DesignColumn, Vec<f64>)> = Vec::new();
    for pass in [Role::OutcomeSelection, Role::SelectionOnly] {
        for (c, v) in numeric.iter().filter(|(c, _)| c.role == pass) {
            candidates.push((
                DesignColumn { name: c.name.clone(), source: c.name.clone(), level: None, role: pass },
                rows.iter().map(|&r| v[r].unwrap_or(0.0)).collect(),
            ));
        }
        for (c, v) in categorical.iter().filter(|(c, _)| c.role == pass) {
            let vals: Vec<&str> = rows.iter().map(|&r| v[r]).collect();
            let (reference, levels) = expand_levels(&vals);
            reference_levels.insert(c.name.clone(), reference.to_string());
            for level in levels {
                candidates.push((
                    DesignColumn {
                        name: format!("{}={level}", c.name),
                        source: c.name.clone(),
                        level: Some(level.to_string()),
                        role: pass,
                    },
                    vals.iter().map(|&x| f64::from(u8::from(x == level))).collect(),
                ));
            }
        }
    }
    for (name, v) in &share_cols {
        candidates.push((
            DesignColumn { name: name.clone(), source: "leave_out".into(), level: None, role: Role::SelectionOnly },
            rows.iter().map(|&r| v[r]).collect(),
        ));
    }
    if singleton_indicator {
        candidates.push((
            DesignColumn { name: "lo.singleton".into(), source: "leave_out".into(), level: None, role: Role::SelectionOnly },
            rows.iter().map(|&r| f64::from(u8::from(singleton[r]))).collect(),
        ));
    }

    // collinearity against the cutoffs' implicit constant
    let n = rows.len();
    let with_const = DMatrix::from_fn(n, candidates.len() + 1, |i, j| if j == 0 { 1.0 } else { candidates[j - 1].1[i] });
    let dropped: Vec<usize> = dependent_columns(&with_const, COLLINEAR_TOL).into_iter().filter(|&j| j > 0).map(|j| j - 1).collect();
    let mut pruned = Vec::new();
    for &j in &dropped {
        report.push(format!("event=prune_column equation=selection column={}", candidates[j].0.name));
        pruned.push(candidates[j].0.name.clone());
    }
    let kept: Vec<(DesignColumn, Vec<f64>)> =
        candidates.into_iter().enumerate().filter(|(j, _)| !dropped.contains(j)).map(|(_, c)| c).collect();
    if !kept.iter().any(|(c, _)| c.role == Role::SelectionOnly) {
        return Err(Error::Data("every selection-only column was pruned as collinear".into()));
    }
    let stage_k: Vec<usize> = rows.iter().map(|&r| stage[r]).collect();
    let outcome_k: Vec<Option<f64>> = rows.iter().map(|&r| outcome[r]).collect();

    // outcome columns, checked for rank on the rows that observe the outcome
    let shared: Vec<usize> = (0..kept.len()).filter(|&j| kept[j].0.role == Role::OutcomeSelection).collect();
    let sel: Vec<usize> = (0..n).filter(|&i| outcome_k[i].is_some()).collect();
    let x_sel = DMatrix::from_fn(sel.len(), shared.len() + 1, |i, j| if j == 0 { 1.0 } else { kept[shared[j - 1]].1[sel[i]] });
    let x_dropped: Vec<usize> = dependent_columns(&x_sel, COLLINEAR_TOL).into_iter().filter(|&j| j > 0).map(|j| j - 1).collect();
    for &j in &x_dropped {
        let name = &kept[shared[j]].0.name;
        report.push(format!("event=prune_column equation=outcome column={name}"));
        pruned.push(format!("outcome:{name}"));
    }
    let x_cols: Vec<usize> = shared.iter().enumerate().filter(|(j, _)| !x_dropped.contains(j)).map(|(_, &c)| c).collect();

    let z = DMatrix::from_fn(n, kept.len(), |i, j| kept[j].1[i]);
    let x = DMatrix::from_fn(n, x_cols.len() + 1, |i, j| if j == 0 { 1.0 } else { kept[x_cols[j - 1]].1[i] });
    let exclusion: Vec<usize> = (0..kept.len()).filter(|&j| kept[j].0.role == Role::SelectionOnly).collect();
    let spec = ModelSpec::new(n_stages, outcome_stages, exclusion)?;
    let mut data = Dataset::new(stage_k, outcome_k, x, z)?;
    if let Some(c) = &clusters_raw {
        let mut ids: HashMap<&str, i64> = HashMap::new();
        let cl = rows.iter().map(|&r| {
            let next = ids.len() as i64;
            *ids.entry(c[keep[r]]).or_insert(next)
        });
        data = data.with_clusters(cl.collect())?;
    }
    if let Some(w) = &weights {
        data = data.with_weights(rows.iter().map(|&r| w[r]).collect())?;
    }
    data.validate(&spec)?;
    let names = ColumnNames {
        selection: kept.iter().map(|(c, _)| c.name.clone()).collect(),
        outcome: std::iter::once("_cons".to_string()).chain(x_cols.iter().map(|&j| kept[j].0.name.clone())).collect(),
    };
    report.push(format!("event=design rows={n} selection_columns={} outcome_columns={}", names.selection.len(), names.outcome.len()));
    Ok(BuiltDesign {
        data,
        spec,
        names,
        registry: kept.into_iter().map(|(c, _)| c).collect(),
        reference_levels,
        pruned,
        n_read,
        report,
    })
}

/// Most frequent level (ties to the lexically smallest) and the remaining
/// levels in lexical order.
fn expand_levels<'a>(values: &[&'a str]) -> (&'a str, Vec<&'a str>) {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_default() += 1;
    }
    let reference = counts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map(|(k, _)| *k).unwrap_or("");
    let levels = counts.keys().copied().filter(|k| *k != reference).collect();
    (reference, levels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeaveOut {
    /// One column per requested level; NaN for rows alone in their group.
    pub shares: DMatrix<f64>,
    pub singleton: Vec<bool>,
}

/// Share of each requested level among the other members of a row's group.
pub fn leave_out_means<G: Eq + Hash>(stages: &[usize], groups: &[G], levels: &[usize]) -> Result<LeaveOut> {
    if stages.len() != groups.len() {
        return Err(Error::Data(format!("{} stages but {} group ids", stages.len(), groups.len())));
    }
    let mut index: HashMap<&G, usize> = HashMap::new();
    let gid: Vec<usize> = groups
        .iter()
        .map(|g| {
            let next = index.len();
            *index.entry(g).or_insert(next)
        })
        .collect();
    let n_groups = index.len();
    let mut size = vec![0usize; n_groups];
    let mut counts = vec![vec![0usize; levels.len()]; n_groups];
    for (i, &g) in gid.iter().enumerate() {
        size[g] += 1;
        for (c, &l) in levels.iter().enumerate() {
            if stages[i] == l {
                counts[g][c] += 1;
            }
        }
    }
    let singleton: Vec<bool> = gid.iter().map(|&g| size[g] < 2).collect();
    let shares = DMatrix::from_fn(stages.len(), levels.len(), |i, c| {
        let g = gid[i];
        if singleton[i] {
            f64::NAN
        } else {
            let own = usize::from(stages[i] == levels[c]);
            (counts[g][c] - own) as f64 / (size[g] - 1) as f64
        }
    });
    Ok(LeaveOut { shares, singleton })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn table(text: &str) -> RawTable {
        RawTable::read(text.as_bytes()).unwrap()
    }

    fn basic_config() -> ColumnConfig {
        ColumnConfig {
            stage_column: "stage".into(),
            outcome_column: "y".into(),
            outcome_transform: OutcomeTransform::None,
            n_stages: None,
            outcome_stages: vec![],
            categorical: vec![],
            numeric: vec![],
            cluster_column: None,
            weight_column: None,
            leave_out: vec![],
            singleton_policy: SingletonPolicy::Drop,
        }
    }

    #[test]
    fn transforms() {
        assert_eq!(OutcomeTransform::Log1p.apply(0.0).unwrap(), 0.0);
        assert!((OutcomeTransform::Log1p.apply(40.0).unwrap() - 41f64.ln()).abs() < 1e-15);
        assert_eq!(OutcomeTransform::Ihs.apply(0.0).unwrap(), 0.0);
        let direct = (40.0 + (40.0f64 * 40.0 + 1.0).sqrt()).ln();
        assert!((OutcomeTransform::Ihs.apply(40.0).unwrap() - direct).abs() < 1e-14);
        assert!((direct - 4.3822).abs() < 5e-5);
        assert!(OutcomeTransform::Log1p.apply(-1.0).is_err());
    }

    #[test]
    fn leave_out_examples() {
        let lo = leave_out_means(&[3, 3, 0], &[1, 1, 1], &[3]).unwrap();
        assert_eq!(lo.shares.column(0).as_slice(), &[0.5, 0.5, 1.0]);
        let same = leave_out_means(&[2, 2, 2, 2], &["a"; 4], &[2]).unwrap();
        assert!(same.shares.iter().all(|&s| s == 1.0));
        let single = leave_out_means(&[0, 1, 1], &[1, 2, 2], &[1]).unwrap();
        assert_eq!(single.singleton, vec![true, false, false]);
        assert!(single.shares[(0, 0)].is_nan());
    }

    #[test]
    fn leave_out_matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 200;
        let stages: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let groups: Vec<u32> = (0..n).map(|_| rng.random_range(0..15)).collect();
        let levels = [0, 1, 3];
        let lo = leave_out_means(&stages, &groups, &levels).unwrap();
        for i in 0..n {
            for (c, &l) in levels.iter().enumerate() {
                let others: Vec<usize> = (0..n).filter(|&j| j != i && groups[j] == groups[i]).collect();
                let hits = others.iter().filter(|&&j| stages[j] == l).count();
                assert_eq!(lo.shares[(i, c)], hits as f64 / others.len() as f64);
            }
        }
    }

    #[test]
    fn shares_independent_of_group_effects() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let (g, size) = (5, 6);
        let n = g * size;
        let groups: Vec<usize> = (0..n).map(|i| i / size).collect();
        let stages: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let lo = leave_out_means(&stages, &groups, &[0, 1, 2]).unwrap();
        let m = DMatrix::from_fn(n, g + 3, |i, j| if j < g { f64::from(u8::from(groups[i] == j)) } else { lo.shares[(i, j - g)] });
        assert!(dependent_columns(&m, 1e-8).is_empty());
    }

    proptest! {
        #[test]
        fn own_stage_never_used(stages in prop::collection::vec(0usize..4, 2..40), seed in 0u64..1000, new_stage in 0usize..4) {
            let groups: Vec<u64> = (0..stages.len() as u64).map(|i| (i * 7 + seed) % 3).collect();
            let a = leave_out_means(&stages, &groups, &[0, 1, 2, 3]).unwrap();
            let mut perturbed = stages.clone();
            perturbed[0] = new_stage;
            let b = leave_out_means(&perturbed, &groups, &[0, 1, 2, 3]).unwrap();
            for c in 0..4 {
                let (x, y) = (a.shares[(0, c)], b.shares[(0, c)]);
                prop_assert!(x == y || (x.is_nan() && y.is_nan()));
            }
        }
    }

    #[test]
    fn categorical_reference_is_most_frequent() {
        let t = table("stage,y,c,w\n1,2.0,a,0.3\n0,,a,1.2\n1,3.5,b,-0.7\n");
        let mut cfg = basic_config();
        cfg.categorical = vec![SourceColumn { name: "c".into(), role: Role::OutcomeSelection }];
        cfg.numeric = vec![SourceColumn { name: "w".into(), role: Role::SelectionOnly }];
        let d = build_design(&t, &cfg).unwrap();
        assert_eq!(d.names.selection, vec!["c=b", "w"]);
        assert_eq!(d.reference_levels["c"], "a");
        assert_eq!(d.spec.exclusion_columns(), &[1]);
        assert_eq!(d.data.z_selection().column(0).as_slice(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn data_errors() {
        let mut cfg = basic_config();
        cfg.numeric = vec![SourceColumn { name: "w".into(), role: Role::SelectionOnly }];
        cfg.n_stages = Some(2);
        let bad_stage = table("stage,y,w\n1,2,0\n5,,1\n0,,2\n");
        assert!(matches!(build_design(&bad_stage, &cfg), Err(Error::Data(m)) if m.contains("unknown stage")));
        let bad_outcome = table("stage,y,w\n1,2,0\n0,4,1\n0,,2\n");
        assert!(matches!(build_design(&bad_outcome, &cfg), Err(Error::Data(m)) if m.contains("non-outcome stage")));
        let missing_outcome = table("stage,y,w\n1,,0\n0,,1\n");
        assert!(matches!(build_design(&missing_outcome, &cfg), Err(Error::Data(m)) if m.contains("missing at outcome")));
        cfg.weight_column = Some("wt".into());
        let bad_weight = table("stage,y,w,wt\n1,2,0,1\n0,,1,heavy\n");
        assert!(matches!(build_design(&bad_weight, &cfg), Err(Error::Data(m)) if m.contains("weight")));
        cfg.weight_column = None;
        cfg.numeric[0].name = "absent".into();
        assert!(matches!(build_design(&bad_weight, &cfg), Err(Error::Data(m)) if m.contains("absent")));
    }

    #[test]
    fn missing_stage_dropped_and_reported() {
        let t = table("stage,y,w\n1,2,0.5\n,,1\n0,,2\n1,3,-1\n");
        let mut cfg = basic_config();
        cfg.numeric = vec![SourceColumn { name: "w".into(), role: Role::SelectionOnly }];
        let d = build_design(&t, &cfg).unwrap();
        assert_eq!(d.data.n(), 3);
        assert!(d.report.iter().any(|l| l == "event=drop_rows reason=missing_stage count=1"));
    }

    fn synthetic_csv(seed: u64, n: usize) -> String {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut s = String::from("stage,y,district,year,race,age,cluster\n");
        for _ in 0..n {
            let st = rng.random_range(0..4);
            let y = if st == 3 { format!("{}", rng.random_range(0.0..60.0f64)) } else { String::new() };
            let d = rng.random_range(0..4);
            let yr = 2000 + rng.random_range(0..3);
            let race = ["white", "black", "other"][rng.random_range(0..3)];
            let age = rng.random_range(18..70);
            s.push_str(&format!("{st},{y},d{d},{yr},{race},{age},c{d}\n"));
        }
        s
    }

    fn synthetic_config() -> ColumnConfig {
        let mut cfg = basic_config();
        cfg.outcome_transform = OutcomeTransform::Log1p;
        cfg.categorical = vec![
            SourceColumn { name: "race".into(), role: Role::OutcomeSelection },
            SourceColumn { name: "year".into(), role: Role::OutcomeSelection },
        ];
        cfg.numeric = vec![SourceColumn { name: "age".into(), role: Role::OutcomeSelection }];
        cfg.cluster_column = Some("cluster".into());
        cfg.leave_out = vec![LeaveOutSpec { groups: vec!["district".into(), "year".into()], levels: vec![0, 1, 3] }];
        cfg
    }

    #[test]
    fn load_is_deterministic() {
        let text = synthetic_csv(3, 300);
        let cfg = synthetic_config();
        let a = build_design(&table(&text), &cfg).unwrap();
        let b = build_design(&table(&text), &cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.data.z_selection(), b.data.z_selection());
        assert_eq!(a.spec.exclusion_columns().len(), 3);
        assert_eq!(a.names.outcome[0], "_cons");
    }

    #[test]
    fn duplicate_column_pruned() {
        let t = table("stage,y,a,b,e\n1,2,1,2,0.1\n0,,2,4,0.2\n1,3,3,6,0.5\n0,,4,8,0.3\n");
        let mut cfg = basic_config();
        cfg.numeric = vec![
            SourceColumn { name: "a".into(), role: Role::OutcomeSelection },
            SourceColumn { name: "b".into(), role: Role::OutcomeSelection },
            SourceColumn { name: "e".into(), role: Role::SelectionOnly },
        ];
        let d = build_design(&t, &cfg).unwrap();
        assert_eq!(d.pruned, vec!["b"]);
        assert!(d.report.iter().any(|l| l.contains("prune_column equation=selection column=b")));
    }

    #[test]
    fn singleton_policies() {
        let t = table("stage,y,g,x\n1,2,a,0.1\n0,,a,0.5\n1,3,b,0.7\n0,,c,0.2\n0,,c,0.9\n1,1,a,0.4\n");
        let mut cfg = basic_config();
        cfg.numeric = vec![SourceColumn { name: "x".into(), role: Role::OutcomeSelection }];
        cfg.leave_out = vec![LeaveOutSpec { groups: vec!["g".into()], levels: vec![1] }];
        let dropped = build_design(&t, &cfg).unwrap();
        assert_eq!(dropped.data.n(), 5);
        cfg.singleton_policy = SingletonPolicy::Indicator;
        let flagged = build_design(&t, &cfg).unwrap();
        assert_eq!(flagged.data.n(), 6);
        let j = flagged.names.selection.iter().position(|n| n == "lo.singleton").unwrap();
        assert_eq!(flagged.data.z_selection()[(2, j)], 1.0);
    }

    #[test]
    fn config_requires_selection_only_source() {
        let mut cfg = basic_config();
        cfg.numeric = vec![SourceColumn { name: "x".into(), role: Role::OutcomeSelection }];
        assert!(cfg.validate().is_err());
    }
}
