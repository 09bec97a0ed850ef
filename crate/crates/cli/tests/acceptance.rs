//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use fpe_cli::config::{ExpansionConfig, ExperimentConfig, TaskConfig, Variant, VariantSeeding};
use fpe_cli::run::{cmd_run, run_experiment, ExperimentResult, TRIALS_FILE};
use fpe_core::data_io::save_fpee;
use fpe_core::dnf::evaluate_dnf;
use fpe_core::expand::{expand_hidden_layer, layer_partitions};
use fpe_core::math::{grad_check_with_step, layer_norm};
use fpe_core::metrics::feature_capacity;
use fpe_core::theory::{approx_interference_ratio, coverage_prob_exact, monte_carlo, pair_collision_prob_exact};
use fpe_core::training::{objective, Penalties};
use fpe_core::{
    fpe_expand_model, generate, init_model, load_model, Dataset, DnfSpec, ExpansionPlan, GramClusterParams,
    Matrix, MlpModel, ModelOptions, PartitionStrategy, SplitKind, TheoryParams, TrainConfig,
};
use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

fn random_masks(model: &mut MlpModel, keep: f64, rng: &mut impl Rng) {
    for layer in model.layers.iter_mut() {
        for v in layer.mask.data_mut() {
            *v = if rng.gen_bool(keep) { 1.0 } else { 0.0 };
        }
        layer.apply_mask();
    }
}

/// Central-difference step.
const FD_STEP: f64 = 1e-5;

fn ac1_gradients() -> Outcome {
    let start = Instant::now();
    let pen = Penalties {
        l1: 1e-3,
        l2: 1e-3,
        orth: 1e-2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0xac1);
    let (mut accepted, mut skipped, mut worst) = (0, 0, 0.0f64);
    while accepted < 20 {
        let deep = accepted >= 10;
        let mut dims = vec![rng.gen_range(2..=64)];
        let hidden = if deep { 4 } else { 1 };
        dims.extend((0..hidden).map(|_| rng.gen_range(3..=16)));
        dims.push(if rng.gen_bool(0.5) { 1 } else { rng.gen_range(3..=10) });
        let opts = ModelOptions {
            layer_norm: deep,
            ..ModelOptions::default()
        };
        let mut model = init_model(&dims, rng.gen(), &opts).unwrap();
        random_masks(&mut model, 0.8, &mut rng);
        let mut theta = model.params_flat();
        for v in theta.iter_mut() {
            *v += rng.gen_range(-0.3..0.3);
        }
        model.set_params_flat(&theta).unwrap();
        model.apply_masks();
        let theta = model.params_flat();
        let x = random_matrix(6, dims[0], 1.0, &mut rng);
        let classes = dims[dims.len() - 1].max(2);
        let labels: Vec<usize> = (0..6).map(|_| rng.gen_range(0..classes)).collect();

        // central differences are undefined across a ReLU or |w| kink
        let (_, cache) = model.forward(&x).unwrap();
        let relu_margin = (0..model.hidden_count())
            .flat_map(|i| match &model.norms[i] {
                Some(ln) => layer_norm(&cache.pre[i], &ln.gain, &ln.shift).data().to_vec(),
                None => cache.pre[i].data().to_vec(),
            })
            .fold(f64::INFINITY, |a, v| a.min(v.abs()));
        let l1_margin = model.layers[0]
            .weights
            .data()
            .iter()
            .filter(|&&w| w != 0.0)
            .fold(f64::INFINITY, |a, w| a.min(w.abs()));
        if relu_margin < 1e-3 || l1_margin < 1e-3 {
            skipped += 1;
            continue;
        }
        let free: Vec<usize> = {
            let mut probe = model.clone();
            probe.set_params_flat(&vec![1.0; theta.len()]).unwrap();
            probe.apply_masks();
            probe
                .params_flat()
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(i, _)| i)
                .collect()
        };
        let (_, grads) = objective(&model, &x, &labels, pen).unwrap();
        let g = grads.flat();
        let analytic: Vec<f64> = free.iter().map(|&i| g[i]).collect();
        let sub: Vec<f64> = free.iter().map(|&i| theta[i]).collect();
        let mut probe = model.clone();
        let err = grad_check_with_step(
            |s| {
                let mut full = theta.clone();
                for (&i, &v) in free.iter().zip(s) {
                    full[i] = v;
                }
                probe.set_params_flat(&full).unwrap();
                objective(&probe, &x, &labels, pen).unwrap().0
            },
            &sub,
            &analytic,
            FD_STEP,
        )
        .unwrap();
        worst = worst.max(err);
        accepted += 1;
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-4 && within(elapsed, 60),
        format!("20 models ({skipped} kink draws skipped), max relative error {worst:.2e} at step {FD_STEP:e}, {elapsed:.1?}"),
    )
}

fn ac2_budget_law() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xac2);
    let mut failures = Vec::new();
    for case in 0..200 {
        let alpha = [2, 4, 8][case % 3];
        let strategy = match case % 4 {
            0 => SplitKind::Random,
            1 => SplitKind::ClauseAware { k: 4 },
            2 => SplitKind::GramCluster(GramClusterParams::default()),
            _ if alpha == 2 => SplitKind::Structured2of4,
            _ => SplitKind::Random,
        };
        let hidden = rng.gen_range(1..=4);
        let mut dims = vec![4 * rng.gen_range(2..=16)];
        dims.extend((0..hidden).map(|_| 4 * rng.gen_range(1..=4)));
        dims.push(rng.gen_range(1..=5));
        let opts = ModelOptions {
            layer_norm: rng.gen_bool(0.3),
            ..ModelOptions::default()
        };
        let mut model = init_model(&dims, rng.gen(), &opts).unwrap();
        if rng.gen_bool(0.5) {
            random_masks(&mut model, rng.gen_range(0.3..1.0), &mut rng);
        }
        let plan = ExpansionPlan::alternating(alpha, hidden, PartitionStrategy::new(strategy.clone(), rng.gen()));
        let expanded = match fpe_expand_model(&model, &plan) {
            Ok(m) => m,
            Err(e) => {
                failures.push(format!("case {case}: {e}"));
                continue;
            }
        };
        if expanded.weight_nnz() != model.weight_nnz() {
            failures.push(format!(
                "case {case}: nnz {} -> {}",
                model.weight_nnz(),
                expanded.weight_nnz()
            ));
        }
        let mut prng = ChaCha8Rng::seed_from_u64(plan.strategy.seed);
        for &l in &plan.layers_to_expand {
            let layer = &model.layers[l];
            let parts = layer_partitions(layer, alpha, &strategy, &mut prng).unwrap();
            let d = layer.in_dim();
            let law = parts.iter().all(|p| {
                let masks = p.masks();
                (0..d).all(|c| masks.iter().map(|m| u32::from(m[c])).sum::<u32>() == 1)
            });
            // the expanded sub-neuron masks must tile the parent's own mask
            let split = expand_hidden_layer(layer, alpha, &parts).unwrap();
            let tiles = (0..layer.out_dim()).all(|i| {
                (0..d).all(|c| {
                    let s: f64 = (0..alpha).map(|j| split.mask.get(alpha * i + j, c)).sum();
                    s == layer.mask.get(i, c)
                })
            });
            let disjoint = (0..layer.out_dim()).all(|i| {
                (0..d).all(|c| (0..alpha).map(|j| expanded.layers[l].mask.get(alpha * i + j, c)).sum::<f64>() <= 1.0)
            });
            if !(law && tiles && disjoint) {
                failures.push(format!("case {case} layer {l}: law {law} tiles {tiles} disjoint {disjoint}"));
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        failures.is_empty() && within(elapsed, 60),
        if failures.is_empty() {
            format!("200 cases exact, {elapsed:.1?}")
        } else {
            format!("{} failures, first: {}", failures.len(), failures[0])
        },
    )
}

fn ac3_dnf_soundness() -> Outcome {
    let start = Instant::now();
    let mut problems = Vec::new();
    let mut total = 0;
    for (m, n) in [(12, 3334), (32, 3334), (128, 3332)] {
        let spec = DnfSpec::new(m, 4).unwrap();
        let data = generate(n, &spec, 0xac3 + m as u64).unwrap();
        total += data.len();
        let positives = data.y.iter().filter(|&&v| v == 1).count();
        if positives * 2 != n {
            problems.push(format!("m={m}: {positives} positives of {n}"));
        }
        let (lo, hi) = (m / 4, m / 4 + m / 8);
        for i in 0..data.len() {
            let row = data.row(i);
            if evaluate_dnf(row, &spec).unwrap() != (data.y[i] == 1) {
                problems.push(format!("m={m} row {i}: label disagrees"));
            }
            let ones = row.iter().filter(|&&b| b == 1).count();
            if data.y[i] == 1 && !(lo..=hi).contains(&ones) {
                problems.push(format!("m={m} row {i}: popcount {ones} outside [{lo}, {hi}]"));
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        problems.is_empty() && total == 10_000 && within(elapsed, 30),
        if problems.is_empty() {
            format!("{total} samples sound, {elapsed:.1?}")
        } else {
            format!("{} problems, first: {}", problems.len(), problems[0])
        },
    )
}

fn case_study_config() -> ExperimentConfig {
    ExperimentConfig {
        schema_version: fpe_cli::config::SCHEMA_VERSION,
        task: TaskConfig::Dnf {
            m: 32,
            k: 4,
            n_train: 8000,
            n_test: 2000,
            jitter: true,
        },
        hidden: vec![8],
        layer_norm: false,
        bias: true,
        train: TrainConfig {
            lr: 1e-3,
            batch_size: 500,
            epochs: 1000,
            l1: 1e-7,
            l2: 1e-5,
            trials: 5,
            ..TrainConfig::default()
        },
        pretrain_epochs: 1000,
        expansion: Some(ExpansionConfig {
            alpha: 2,
            variants: vec![Variant::ClauseSplit, Variant::RandomSplit],
            gram: GramClusterParams::default(),
        }),
        variant_seeding: VariantSeeding::Shared,
        seed: 0,
        output_dir: None,
        sweep: None,
    }
}

fn case_study() -> &'static (ExperimentResult, Duration) {
    static RESULT: OnceLock<(ExperimentResult, Duration)> = OnceLock::new();
    RESULT.get_or_init(|| {
        let start = Instant::now();
        let res = run_experiment(&case_study_config()).expect("case study runs");
        (res, start.elapsed())
    })
}

fn ac4_case_study() -> Outcome {
    let (res, elapsed) = case_study();
    let acc = |v| res.variant(v).unwrap().mean_accuracy * 100.0;
    let (dense, clause, random) = (acc(Variant::Dense), acc(Variant::ClauseSplit), acc(Variant::RandomSplit));
    let pass = (65.0..=92.0).contains(&dense) && clause >= dense + 8.0 && random >= dense - 1.0;
    outcome(
        pass,
        format!("dense {dense:.1}%, clause split {clause:.1}%, random split {random:.1}% over 5 trials, {elapsed:.0?}"),
    )
}

fn ac5_interference() -> Outcome {
    let (res, _) = case_study();
    let dense = res.variant(Variant::Dense).unwrap();
    let clause = res.variant(Variant::ClauseSplit).unwrap();
    let ratio = clause.mean_total_capacity / dense.mean_total_capacity;
    outcome(
        ratio >= 1.4 && clause.mean_cosine < dense.mean_cosine,
        format!(
            "capacity {:.3} vs {:.3} (ratio {ratio:.2}), cosine {:.3} vs {:.3}",
            clause.mean_total_capacity, dense.mean_total_capacity, clause.mean_cosine, dense.mean_cosine
        ),
    )
}

fn pascal_row(n: usize) -> Vec<BigUint> {
    let mut row = vec![BigUint::from(1u32)];
    for _ in 0..n {
        let mut next = vec![BigUint::from(1u32); row.len() + 1];
        for i in 1..row.len() {
            next[i] = &row[i - 1] + &row[i];
        }
        row = next;
    }
    row
}

fn ac6_theory_exact() -> Outcome {
    let p = coverage_prob_exact(32, 4, 16).unwrap();
    let (num, den) = (pascal_row(28)[12].clone(), pascal_row(32)[16].clone());
    let exact = &p.numer * &den == &p.denom * &num;
    let value = p.to_f64();
    let rel = (0.0625 - value).abs() / value;
    let ratio = approx_interference_ratio(2, 4);
    outcome(
        exact && rel <= 0.25 && ratio == 1.0 / 128.0,
        format!(
            "p = {}/{} = {value:.6} (oracle {num}/{den}), (1/2)^4 off by {:.1}%, ratio approx {ratio}",
            p.numer,
            p.denom,
            rel * 100.0
        ),
    )
}

fn ac7_monte_carlo() -> Outcome {
    let start = Instant::now();
    let params = TheoryParams::read_once(40, 4, 8, 2, 0.01).unwrap();
    let mc = monte_carlo(&params, 20_000, 0xac7).unwrap();
    let p_prime = pair_collision_prob_exact(40, 4, 20).unwrap().to_f64();
    let (alpha, r, c) = (2.0, 8.0, 10.0);
    let e_fpe = alpha * r * (c * (c - 1.0) / 2.0) * p_prime;
    let z = (mc.mean_collisions - e_fpe).abs() / mc.collisions_stderr;
    let p = coverage_prob_exact(40, 4, 20).unwrap().to_f64();
    let floor = 1.0 - c * (1.0 - p).powf(alpha * r) - 3.0 * mc.coverage_all_stderr;
    let covered_ok = (floor..=1.0).contains(&mc.coverage_all_rate);
    let miss = (1.0 - p).powf(alpha * r);
    let elapsed = start.elapsed();
    outcome(
        z <= 3.0 && covered_ok && within(elapsed, 60),
        format!(
            "collisions {:.4} vs {e_fpe:.4} ({z:.2} SE), coverage {:.4} >= {floor:.4}, per-clause miss {:.4} vs {miss:.4}, {elapsed:.1?}",
            mc.mean_collisions, mc.coverage_all_rate, mc.clause_miss_rate
        ),
    )
}

/// Direct evaluation of `(W_iᵀW_i)² / Σ_j (W_iᵀW_j)²` over columns of `W`.
fn capacity_direct(w: &Matrix) -> Vec<f64> {
    let (h, d) = w.shape();
    let col = |i: usize| (0..h).map(|r| w.get(r, i)).collect::<Vec<f64>>();
    let cols: Vec<Vec<f64>> = (0..d).map(col).collect();
    let ip = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    cols.iter()
        .map(|ci| {
            let own = ip(ci, ci);
            let all: f64 = cols.iter().map(|cj| ip(ci, cj).powi(2)).sum();
            if all == 0.0 {
                0.0
            } else {
                own * own / all
            }
        })
        .collect()
}

fn ac8_capacity_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xac8);
    let (mut worst, mut drift) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let (h, d) = (rng.gen_range(1..=16), rng.gen_range(1..=40));
        let mut w = random_matrix(h, d, 2.0, &mut rng);
        for v in w.data_mut() {
            if rng.gen_bool(0.2) {
                *v = 0.0;
            }
        }
        let got = feature_capacity(&w);
        for (a, b) in got.iter().zip(capacity_direct(&w)) {
            worst = worst.max((a - b).abs());
        }
        let mut scaled = w.clone();
        for v in scaled.data_mut() {
            *v *= 7.3;
        }
        for (a, b) in got.iter().zip(feature_capacity(&scaled)) {
            drift = drift.max((a - b).abs());
        }
    }
    outcome(
        worst < 1e-10 && drift < 1e-9,
        format!("50 matrices, max deviation {worst:.1e}, scale drift {drift:.1e}"),
    )
}

fn fashion_dir() -> PathBuf {
    std::env::var_os("FASHION_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/fashion-mnist"))
}

fn fashion_config(dir: &Path) -> ExperimentConfig {
    ExperimentConfig {
        task: TaskConfig::Idx {
            train_images: dir.join("train-images-idx3-ubyte"),
            train_labels: dir.join("train-labels-idx1-ubyte"),
            test_images: dir.join("t10k-images-idx3-ubyte"),
            test_labels: dir.join("t10k-labels-idx1-ubyte"),
            limit_train: None,
            limit_test: None,
        },
        hidden: vec![4],
        train: TrainConfig {
            epochs: 20,
            trials: 5,
            ..TrainConfig::default()
        },
        pretrain_epochs: 20,
        expansion: Some(ExpansionConfig {
            alpha: 2,
            variants: vec![Variant::RandomSplit],
            gram: GramClusterParams::default(),
        }),
        ..case_study_config()
    }
}

/// Ten Gaussian classes in 32 dimensions.
fn synthetic_embeddings(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let centers = random_matrix(10, 32, 1.0, &mut rng);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Matrix::zeros(n, 32);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 10;
        for j in 0..32 {
            x.set(i, j, centers.get(c, j) + rng.gen_range(-0.8..0.8));
        }
        y.push(c);
    }
    Dataset::new(x, y, 10, "synthetic").unwrap()
}

fn embedding_pipeline(dir: &Path) -> Result<String, String> {
    let train = dir.join("train.fpee");
    let test = dir.join("test.fpee");
    save_fpee(&synthetic_embeddings(1000, 1), &train).map_err(|e| e.to_string())?;
    save_fpee(&synthetic_embeddings(300, 2), &test).map_err(|e| e.to_string())?;
    let cfg = ExperimentConfig {
        task: TaskConfig::Fpee { train, test },
        hidden: vec![8],
        train: TrainConfig {
            epochs: 15,
            batch_size: 100,
            lr: 1e-2,
            trials: 3,
            ..TrainConfig::default()
        },
        pretrain_epochs: 5,
        expansion: Some(ExpansionConfig {
            alpha: 2,
            variants: vec![Variant::RandomSplit, Variant::GramSplit],
            gram: GramClusterParams::default(),
        }),
        ..case_study_config()
    };
    let (a, b) = (dir.join("run_a"), dir.join("run_b"));
    let res = cmd_run(&cfg, &a).map_err(|e| e.to_string())?;
    cmd_run(&cfg, &b).map_err(|e| e.to_string())?;
    let same = std::fs::read(a.join(TRIALS_FILE)).unwrap() == std::fs::read(b.join(TRIALS_FILE)).unwrap();
    if !same {
        return Err("trial CSVs differ between identical runs".into());
    }
    let dense_nnz = res.rows_of(Variant::Dense).next().unwrap().weight_nnz;
    if res.rows.iter().any(|r| r.weight_nnz != dense_nnz) {
        return Err("budget law violated".into());
    }
    for v in [Variant::RandomSplit, Variant::GramSplit] {
        let model = load_model(a.join("best").join(format!("{}.fpec", v.name()))).map_err(|e| e.to_string())?;
        let first = &model.layers[0];
        if !model.masks_consistent() || first.out_dim() != 16 {
            return Err(format!("{} checkpoint inconsistent", v.name()));
        }
        for i in 0..8 {
            for c in 0..first.in_dim() {
                if first.mask.get(2 * i, c) + first.mask.get(2 * i + 1, c) > 1.0 {
                    return Err(format!("{}: sub-neurons of {i} share input {c}", v.name()));
                }
            }
        }
    }
    Ok(format!("embedding pipeline ok ({} rows, nnz {dense_nnz})", res.rows.len()))
}

fn ac9_fashion() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let pipeline = embedding_pipeline(tmp.path());
    let dir = fashion_dir();
    let fashion = if dir.join("train-images-idx3-ubyte").exists() {
        match run_experiment(&fashion_config(&dir)) {
            Ok(res) => {
                let dense = res.variant(Variant::Dense).unwrap().mean_accuracy;
                let split = res.variant(Variant::RandomSplit).unwrap();
                let rel = split.relative_improvement.unwrap_or(f64::NAN);
                Ok((
                    rel > 0.0,
                    format!(
                        "dense {:.2}%, random split {:.2}%, relative improvement {:+.2}%",
                        dense * 100.0,
                        split.mean_accuracy * 100.0,
                        rel * 100.0
                    ),
                ))
            }
            Err(e) => Err(e.to_string()),
        }
    } else {
        Err(format!("FashionMNIST not found in {}", dir.display()))
    };
    let elapsed = start.elapsed();
    match (fashion, pipeline) {
        (Ok((ok, fm)), Ok(pl)) => outcome(ok, format!("{fm}; {pl}; {elapsed:.0?}")),
        (Err(e), _) | (_, Err(e)) => outcome(false, e),
    }
}

fn ac10_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        task: TaskConfig::Dnf {
            m: 16,
            k: 4,
            n_train: 600,
            n_test: 200,
            jitter: true,
        },
        hidden: vec![4, 4, 4],
        layer_norm: true,
        train: TrainConfig {
            epochs: 10,
            batch_size: 50,
            lr: 1e-2,
            trials: 3,
            ..TrainConfig::default()
        },
        pretrain_epochs: 5,
        expansion: Some(ExpansionConfig {
            alpha: 2,
            variants: vec![
                Variant::ClauseSplit,
                Variant::RandomSplit,
                Variant::GramSplit,
                Variant::StructuredSplit,
            ],
            gram: GramClusterParams::default(),
        }),
        seed: 42,
        ..case_study_config()
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    if let Err(e) = cmd_run(&cfg, &a).and_then(|_| cmd_run(&cfg, &b)) {
        return outcome(false, e.to_string());
    }
    let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
    let csv_same = read(&a, TRIALS_FILE) == read(&b, TRIALS_FILE);
    let rest_same = ["aggregate.json", "events.jsonl"].iter().all(|f| read(&a, f) == read(&b, f));
    let rows = read(&a, TRIALS_FILE).iter().filter(|&&c| c == b'\n').count() - 1;
    outcome(
        csv_same && rest_same,
        format!("{rows} trial rows byte-identical: csv {csv_same}, aggregate and events {rest_same}"),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("AC1 gradient correctness", ac1_gradients),
        ("AC2 FPE budget law", ac2_budget_law),
        ("AC3 DNF generator soundness", ac3_dnf_soundness),
        ("AC4 case-study reproduction", ac4_case_study),
        ("AC5 interference metrics", ac5_interference),
        ("AC6 theory exactness", ac6_theory_exact),
        ("AC7 Monte-Carlo agreement", ac7_monte_carlo),
        ("AC8 capacity oracle", ac8_capacity_oracle),
        ("AC9 FashionMNIST and embedding pipeline", ac9_fashion),
        ("AC10 determinism", ac10_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let o = check();
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
