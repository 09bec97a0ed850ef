//! Data generation, theory tables and checkpoint reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use fpe_core::data_io::save_fpee;
use fpe_core::theory::TheoryParams;
use fpe_core::{generate, load_model, DnfSpec, MetricsReport, Result, TheoryReport};
use serde::{Deserialize, Serialize};

use crate::config::SCHEMA_VERSION;
use crate::output::write_atomic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenDataArgs {
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub seed: u64,
    pub jitter: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenDataSidecar {
    pub schema_version: u32,
    pub generator: String,
    #[serde(flatten)]
    pub args: GenDataArgs,
    pub num_clauses: usize,
    pub positives: usize,
    pub negatives: usize,
    pub data_file: String,
}

/// Writes `<prefix>.fpee` and `<prefix>.json`; returns both paths.
pub fn cmd_gen_data(args: &GenDataArgs, prefix: &Path) -> Result<(PathBuf, PathBuf)> {
    let spec = DnfSpec::new(args.m, args.k)?;
    let data = generate(args.n, &spec, args.seed)?;
    let labeled = if args.jitter {
        data.to_jittered(args.seed ^ 0x1)
    } else {
        data.to_labeled()
    };
    if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let data_path = prefix.with_extension("fpee");
    let side_path = prefix.with_extension("json");
    save_fpee(&labeled, &data_path)?;
    let positives = data.y.iter().filter(|&&v| v == 1).count();
    let sidecar = GenDataSidecar {
        schema_version: SCHEMA_VERSION,
        generator: "dnf".into(),
        args: args.clone(),
        num_clauses: spec.num_clauses(),
        positives,
        negatives: data.len() - positives,
        data_file: data_path
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    let mut bytes = serde_json::to_vec_pretty(&sidecar)?;
    bytes.push(b'\n');
    write_atomic(&side_path, &bytes)?;
    Ok((data_path, side_path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryArgs {
    pub m: u64,
    pub k: u64,
    pub alpha: u64,
    pub r: u64,
    pub epsilon: Option<f64>,
    pub mc_trials: Option<usize>,
    pub seed: u64,
}

pub fn theory_report(args: &TheoryArgs) -> Result<TheoryReport> {
    let params = TheoryParams::read_once(args.m, args.k, args.r, args.alpha, args.epsilon.unwrap_or(0.01))?;
    TheoryReport::compute(&params, args.mc_trials.map(|t| (t, args.seed)))
}

fn g(v: f64) -> String {
    format!("{v:.6e}")
}

/// Fixed-width table of exact, approximate and simulated values.
pub fn render_theory(report: &TheoryReport, show_min_r: bool) -> String {
    let p = &report.params;
    let mc = report.monte_carlo.as_ref();
    let mut rows: Vec<[String; 4]> = vec![
        [
            "coverage p".into(),
            g(report.p_exact),
            g(report.p_approx),
            String::new(),
        ],
        [
            "P(all clauses covered)".into(),
            g(report.coverage_lower_bound),
            String::new(),
            mc.map(|m| format!("{} ± {}", g(m.coverage_all_rate), g(m.coverage_all_stderr)))
                .unwrap_or_default(),
        ],
        [
            "clause miss rate".into(),
            g((1.0 - report.p_exact).powi((p.alpha * p.r) as i32)),
            String::new(),
            mc.map(|m| format!("{} ± {}", g(m.clause_miss_rate), g(m.clause_miss_stderr)))
                .unwrap_or_default(),
        ],
        [
            "pair collision p'".into(),
            g(report.p_prime_exact),
            String::new(),
            String::new(),
        ],
        [
            "E[collisions] dense".into(),
            g(report.expected_collisions_dense),
            String::new(),
            String::new(),
        ],
        [
            "E[collisions] FPE".into(),
            g(report.expected_collisions_fpe),
            String::new(),
            mc.map(|m| format!("{} ± {}", g(m.mean_collisions), g(m.collisions_stderr)))
                .unwrap_or_default(),
        ],
        [
            "interference ratio".into(),
            g(report.interference_ratio),
            g(report.approx_interference_ratio),
            String::new(),
        ],
    ];
    if show_min_r {
        rows.push([
            format!("min r (eps = {})", p.epsilon),
            g(report.min_neurons),
            String::new(),
            String::new(),
        ]);
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        "m = {}, k = {}, clauses = {}, alpha = {}, r = {}, d = {}",
        p.m, p.k, p.num_clauses, p.alpha, p.r, p.d
    );
    let _ = writeln!(out, "exact p = {}", report.p_exact_rational);
    let header = ["quantity", "exact", "approx", "monte carlo"];
    let _ = writeln!(out, "{:<24} {:>14} {:>14} {}", header[0], header[1], header[2], header[3]);
    for r in rows {
        let _ = writeln!(out, "{:<24} {:>14} {:>14} {}", r[0], r[1], r[2], r[3]);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsArgs {
    pub model: PathBuf,
    pub out_dir: PathBuf,
    pub k: Option<usize>,
}

/// Writes `metrics.json`, `gram.csv` and `mask_map.txt` for a checkpoint.
pub fn cmd_metrics(args: &MetricsArgs) -> Result<MetricsReport> {
    let model = load_model(&args.model)?;
    let report = MetricsReport::of(&model, args.k, None)?;
    fs::create_dir_all(&args.out_dir)?;
    let mut json = serde_json::to_vec_pretty(&report)?;
    json.push(b'\n');
    write_atomic(&args.out_dir.join("metrics.json"), &json)?;
    let mut gram = String::new();
    for r in 0..report.gram.rows() {
        let line: Vec<String> = report.gram.row(r).iter().map(|v| v.to_string()).collect();
        gram.push_str(&line.join(","));
        gram.push('\n');
    }
    write_atomic(&args.out_dir.join("gram.csv"), gram.as_bytes())?;
    // 'x' marks a masked weight, '.' an active one.
    let mut map = String::new();
    for row in &report.mask_map {
        map.extend(row.chars().map(|c| if c == '1' { '.' } else { 'x' }));
        map.push('\n');
    }
    write_atomic(&args.out_dir.join("mask_map.txt"), map.as_bytes())?;
    Ok(report)
}
