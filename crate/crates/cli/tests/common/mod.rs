#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ordheck::sim::{simulate_dgp, DgpConfig};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;

pub fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/configs")
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Four-stage study-I sample written as a case-level CSV: stage code,
/// sentence in months (blank unless stage 3), covariates, a three-level
/// charge category, district and year.
pub fn write_fixture(path: &Path, rho: f64, seed: u64, n_per_group: usize) {
    let mut cfg = DgpConfig::study_one(rho, 0.5, seed);
    cfg.n_per_group = n_per_group;
    let sim = simulate_dgp(&cfg).unwrap();
    let d = &sim.data;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut out = String::from("case,stage,sentence,black,severity,z,charge,district,year\n");
    for i in 0..d.n() {
        let z = d.z_selection();
        let sentence = d.outcome()[i].map(|y| format!("{:.6}", y.exp() - 1.0)).unwrap_or_default();
        let charge = ["drug", "property", "violent"][rng.random_range(0..3)];
        writeln!(
            out,
            "{},{},{},{},{:.9},{:.9},{},d{:02},{}",
            i + 1,
            d.stage()[i],
            sentence,
            z[(i, 0)],
            z[(i, 1)],
            z[(i, 2)],
            charge,
            rng.random_range(0..15),
            2010 + rng.random_range(0..3),
        )
        .unwrap();
    }
    std::fs::write(path, out).unwrap();
}

pub fn run(args: &[&str]) -> i32 {
    ordheck_cli::run(std::iter::once("ordheck").chain(args.iter().copied()))
}

/// Parses a report CSV into (section, term) -> numeric fields.
pub fn parse_report_csv(text: &str) -> Vec<(String, String, Vec<Option<f64>>, String)> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            let nums = (2..5).map(|j| r[j].parse::<f64>().ok()).collect();
            (r[0].to_string(), r[1].to_string(), nums, r[5].to_string())
        })
        .collect()
}

pub fn report_value(rows: &[(String, String, Vec<Option<f64>>, String)], section: &str, term: &str) -> Option<f64> {
    rows.iter().find(|r| r.0 == section && r.1 == term).and_then(|r| r.2[0])
}
