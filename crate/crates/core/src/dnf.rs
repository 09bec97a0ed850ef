//! Monotone read-once DNF classification data.
//!
//! Literals `0..m` are split into `m / k` disjoint clauses; clause `j` owns literals
//! `[j·k, (j+1)·k)`. A row is positive iff some clause has all of its literals set.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_io::LabeledMatrixDataset;
use crate::error::{FpeError, Result};
use crate::math::Matrix;

/// Give up on a negative row after this many rejected draws.
pub const MAX_REJECTIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DnfSpec {
    pub m: usize,
    pub k: usize,
}

impl DnfSpec {
    pub fn new(m: usize, k: usize) -> Result<Self> {
        if k == 0 || m == 0 || !m.is_multiple_of(k) {
            return Err(FpeError::input(format!(
                "clause size {k} must divide literal count {m}"
            )));
        }
        Ok(DnfSpec { m, k })
    }

    pub fn num_clauses(&self) -> usize {
        self.m / self.k
    }

    pub fn clause(&self, j: usize) -> std::ops::Range<usize> {
        j * self.k..(j + 1) * self.k
    }

    /// Lower end of the active-bit range for positive rows, `⌊m/4⌋`.
    pub fn min_ones(&self) -> usize {
        self.m / 4
    }

    /// Upper end of the active-bit range for positive rows, `⌊m/4⌋ + ⌊m/8⌋`.
    pub fn max_ones(&self) -> usize {
        self.m / 4 + self.m / 8
    }
}

/// True iff some clause of `spec` is fully set in `row`.
pub fn evaluate_dnf(row: &[u8], spec: &DnfSpec) -> Result<bool> {
    if row.len() != spec.m {
        return Err(FpeError::input(format!(
            "row has {} literals, formula has {}",
            row.len(),
            spec.m
        )));
    }
    Ok(satisfied(row, spec))
}

fn satisfied(row: &[u8], spec: &DnfSpec) -> bool {
    row.chunks_exact(spec.k).any(|c| c.iter().all(|&b| b == 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleOrigin {
    Positive,
    /// A saturated clause with one literal cleared in every satisfied clause.
    FlipNegative,
    /// A uniformly random assignment that happened to satisfy no clause.
    RandomNegative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BooleanDataset {
    /// `n × m` matrix of 0/1 bytes, row-major.
    pub x: Vec<u8>,
    pub y: Vec<u8>,
    pub origin: Vec<SampleOrigin>,
    pub spec: DnfSpec,
    pub seed: u64,
}

impl BooleanDataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.x[i * self.spec.m..(i + 1) * self.spec.m]
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(
            self.len(),
            self.spec.m,
            self.x.iter().map(|&b| f64::from(b)).collect(),
        )
        .expect("dataset shape")
    }

    /// Binary-labelled dataset over the raw 0/1 inputs.
    pub fn to_labeled(&self) -> LabeledMatrixDataset {
        self.labeled_with(self.to_matrix(), "dnf")
    }

    /// Binary-labelled dataset over jittered inputs (see [`jitter`]).
    pub fn to_jittered(&self, seed: u64) -> LabeledMatrixDataset {
        let x = jitter(&self.to_matrix(), seed).expect("generated rows are binary");
        self.labeled_with(x, "dnf+jitter")
    }

    fn labeled_with(&self, x: Matrix, tag: &str) -> LabeledMatrixDataset {
        LabeledMatrixDataset {
            x,
            y: self.y.iter().map(|&v| usize::from(v)).collect(),
            class_count: 2,
            source: format!("{tag}(m={},k={},seed={})", self.spec.m, self.spec.k, self.seed),
        }
    }
}

/// Sets the clause block of `clause` plus `extra` further random literals outside it.
fn saturate_clause(row: &mut [u8], spec: &DnfSpec, clause: usize, extra: usize, rng: &mut impl Rng) {
    let block = spec.clause(clause);
    for i in block.clone() {
        row[i] = 1;
    }
    let others: Vec<usize> = (0..spec.m).filter(|i| !block.contains(i)).collect();
    for &i in others.choose_multiple(rng, extra) {
        row[i] = 1;
    }
}

/// Generates `n` labelled rows: `n/2` positives followed by `n/2` negatives.
///
/// Positives saturate a random clause, then add random ones until the popcount reaches
/// a draw from `[⌊m/4⌋, ⌊m/4⌋ + ⌊m/8⌋]`. Negatives alternate between the flip
/// construction (saturate as for a positive, then clear one random literal in every
/// satisfied clause) and rejection-sampled uniform assignments of the same popcount
/// range. A rejected draw retries with the same popcount.
pub fn generate(n: usize, spec: &DnfSpec, seed: u64) -> Result<BooleanDataset> {
    DnfSpec::new(spec.m, spec.k)?;
    if !n.is_multiple_of(2) {
        return Err(FpeError::input(format!("sample count {n} must be even")));
    }
    let (lo, hi) = (spec.min_ones(), spec.max_ones());
    if spec.k > hi || hi > spec.m {
        return Err(FpeError::input(format!(
            "active-bit range [{lo}, {hi}] cannot hold a clause of {} literals in {}",
            spec.k, spec.m
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = spec.m;
    let clauses = spec.num_clauses();
    let half = n / 2;
    let mut x = vec![0u8; n * m];
    let mut origin = Vec::with_capacity(n);

    for i in 0..half {
        let c = rng.gen_range(0..clauses);
        let s = rng.gen_range(lo..=hi);
        saturate_clause(&mut x[i * m..(i + 1) * m], spec, c, s.saturating_sub(spec.k), &mut rng);
        origin.push(SampleOrigin::Positive);
    }

    for i in half..n {
        let flip = (i - half).is_multiple_of(2);
        let s = rng.gen_range(lo..=hi);
        let row = &mut x[i * m..(i + 1) * m];
        let mut attempts = 0;
        loop {
            row.fill(0);
            if flip {
                let c = rng.gen_range(0..clauses);
                saturate_clause(row, spec, c, s.saturating_sub(spec.k), &mut rng);
                for j in 0..clauses {
                    let block = spec.clause(j);
                    if row[block.clone()].iter().all(|&b| b == 1) {
                        row[block.start + rng.gen_range(0..spec.k)] = 0;
                    }
                }
            } else {
                for idx in index::sample(&mut rng, m, s) {
                    row[idx] = 1;
                }
            }
            if !satisfied(row, spec) {
                break;
            }
            attempts += 1;
            if attempts >= MAX_REJECTIONS {
                return Err(FpeError::Numeric(format!(
                    "no non-satisfying assignment after {MAX_REJECTIONS} draws"
                )));
            }
        }
        origin.push(if flip {
            SampleOrigin::FlipNegative
        } else {
            SampleOrigin::RandomNegative
        });
    }

    let mut y = vec![1u8; half];
    y.resize(n, 0);
    Ok(BooleanDataset {
        x,
        y,
        origin,
        spec: *spec,
        seed,
    })
}

/// Maps 1 → `U[3, 3.5]` and 0 → `U[0, 0.5]`.
pub fn jitter(x: &Matrix, seed: u64) -> Result<Matrix> {
    if let Some(bad) = x.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(FpeError::input(format!("jitter expects 0/1 inputs, found {bad}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = x.clone();
    for v in out.data_mut() {
        let base = if *v == 1.0 { 3.0 } else { 0.0 };
        *v = base + rng.gen_range(0.0..=0.5);
    }
    Ok(out)
}
