//! Shared fixtures for the benchmarks.

use fpe_core::{generate, init_model, Dataset, DnfSpec, Matrix, MlpModel, ModelOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .expect("shape matches data")
}

/// Jittered DNF data for the case-study shape (32 literals in blocks of 4).
pub fn case_study_data(n: usize) -> Dataset {
    let spec = DnfSpec::new(32, 4).expect("valid spec");
    generate(n, &spec, 1).expect("even n").to_jittered(2)
}

pub fn case_study_model(hidden: usize) -> MlpModel {
    init_model(&[32, hidden, 1], 3, &ModelOptions::default()).expect("valid dims")
}
