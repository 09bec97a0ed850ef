//! Clause coverage and interference probabilities for sparse neurons over a read-once DNF.
//!
//! Model: each of `αr` neurons connects to a uniformly random size-`d` subset of the
//! `m` literals, drawn without replacement inside a neuron and independently across
//! neurons. A neuron covers a clause when its support contains all `k` of its literals.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FpeError, Result};
use crate::metrics::{mean, std_error};

/// Binomial coefficient with arbitrary precision; `C(n, k) = 0` for `k > n`.
pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 1..=k {
        acc *= BigUint::from(n - k + i);
        acc /= BigUint::from(i);
    }
    acc
}

/// A non-negative rational kept in lowest terms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactProb {
    pub numer: BigUint,
    pub denom: BigUint,
}

impl ExactProb {
    pub fn new(numer: BigUint, denom: BigUint) -> Self {
        assert!(!denom.is_zero(), "zero denominator");
        let g = numer.gcd(&denom);
        if g.is_zero() || g.is_one() {
            return ExactProb { numer, denom };
        }
        ExactProb {
            numer: &numer / &g,
            denom: &denom / &g,
        }
    }

    /// Nearest-ish `f64`, from a 64-bit-or-wider integer quotient.
    pub fn to_f64(&self) -> f64 {
        if self.numer.is_zero() {
            return 0.0;
        }
        let shift = (self.denom.bits() + 64).saturating_sub(self.numer.bits());
        let q = (&self.numer << shift) / &self.denom;
        let qf = q.to_f64().unwrap_or(f64::INFINITY);
        let mut v = qf;
        let mut s = shift as i64;
        while s > 0 {
            let step = s.min(1000);
            v *= 2f64.powi(-(step as i32));
            s -= step;
        }
        v
    }
}

/// `p = C(m−k, d−k) / C(m, d)`: one neuron covers a fixed clause.
pub fn coverage_prob_exact(m: u64, k: u64, d: u64) -> Result<ExactProb> {
    if k > m || d > m {
        return Err(FpeError::input(format!("need k <= m and d <= m (m={m}, k={k}, d={d})")));
    }
    if d < k {
        return Ok(ExactProb::new(BigUint::zero(), BigUint::one()));
    }
    Ok(ExactProb::new(binomial(m - k, d - k), binomial(m, d)))
}

/// `p′ = C(m−2k, d−2k) / C(m, d)`: one neuron covers both of two fixed disjoint clauses.
pub fn pair_collision_prob_exact(m: u64, k: u64, d: u64) -> Result<ExactProb> {
    if 2 * k > m || d > m {
        return Err(FpeError::input(format!("need 2k <= m and d <= m (m={m}, k={k}, d={d})")));
    }
    if d < 2 * k {
        return Ok(ExactProb::new(BigUint::zero(), BigUint::one()));
    }
    Ok(ExactProb::new(binomial(m - 2 * k, d - 2 * k), binomial(m, d)))
}

/// Union bound on covering every clause: `1 − C (1 − p)^{αr}`, clamped to `[0, 1]`.
pub fn coverage_lower_bound(p: f64, alpha: u64, r: u64, num_clauses: u64) -> f64 {
    let miss = (1.0 - p).powf((alpha * r) as f64);
    (1.0 - num_clauses as f64 * miss).clamp(0.0, 1.0)
}

/// `α^{k−1} ln(C/ε)`.
pub fn min_neurons_for_coverage(alpha: u64, k: u64, num_clauses: u64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) || num_clauses == 0 {
        return Err(FpeError::input("need epsilon in (0, 1) and at least one clause"));
    }
    Ok((alpha as f64).powi(k as i32 - 1) * (num_clauses as f64 / epsilon).ln())
}

/// `E_FPE / E_dense = α p′`.
pub fn interference_ratio(alpha: u64, p_prime: f64) -> f64 {
    alpha as f64 * p_prime
}

/// `α^{−(2k−1)}`.
pub fn approx_interference_ratio(alpha: u64, k: u64) -> f64 {
    (alpha as f64).powi(-(2 * k as i32 - 1))
}

/// `(E_dense, E_FPE) = (r·C(C,2), αr·C(C,2)·p′)`.
pub fn expected_collisions(r: u64, num_clauses: u64, alpha: u64, p_prime: f64) -> (f64, f64) {
    let pairs = (num_clauses * num_clauses.saturating_sub(1) / 2) as f64;
    let dense = r as f64 * pairs;
    (dense, (alpha * r) as f64 * pairs * p_prime)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    pub m: u64,
    pub k: u64,
    pub num_clauses: u64,
    pub r: u64,
    pub alpha: u64,
    pub d: u64,
    pub epsilon: f64,
}

impl TheoryParams {
    /// Read-once formula (`C = m/k`) with `d = m/α`.
    pub fn read_once(m: u64, k: u64, r: u64, alpha: u64, epsilon: f64) -> Result<Self> {
        if k == 0 || !m.is_multiple_of(k) {
            return Err(FpeError::input(format!("clause size {k} must divide {m}")));
        }
        if alpha == 0 || !m.is_multiple_of(alpha) {
            return Err(FpeError::input(format!("alpha {alpha} must divide {m}")));
        }
        let p = TheoryParams {
            m,
            k,
            num_clauses: m / k,
            r,
            alpha,
            d: m / alpha,
            epsilon,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d > self.m || self.k > self.m || self.alpha == 0 {
            return Err(FpeError::input(format!("invalid theory parameters {self:?}")));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(FpeError::input("epsilon must lie in (0, 1)"));
        }
        if self.num_clauses * self.k > self.m {
            return Err(FpeError::input("disjoint clauses need C·k <= m"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub trials: usize,
    /// Fraction of trials in which every clause is covered by some neuron.
    pub coverage_all_rate: f64,
    pub coverage_all_stderr: f64,
    /// Fraction of (trial, clause) pairs left uncovered.
    pub clause_miss_rate: f64,
    pub clause_miss_stderr: f64,
    /// Mean number of (neuron, clause pair) collisions per network.
    pub mean_collisions: f64,
    pub collisions_stderr: f64,
}

struct TrialStats {
    all_covered: bool,
    missed: u64,
    collisions: u64,
}

fn one_network(p: &TheoryParams, rng: &mut ChaCha8Rng) -> TrialStats {
    let (m, k, c) = (p.m as usize, p.k as usize, p.num_clauses as usize);
    let mut covered = vec![false; c];
    let mut support = vec![false; m];
    let mut collisions = 0;
    for _ in 0..p.alpha * p.r {
        support.fill(false);
        for i in index::sample(rng, m, p.d as usize) {
            support[i] = true;
        }
        let mut hits = 0u64;
        for (j, cov) in covered.iter_mut().enumerate() {
            if support[j * k..(j + 1) * k].iter().all(|&s| s) {
                *cov = true;
                hits += 1;
            }
        }
        collisions += hits * hits.saturating_sub(1) / 2;
    }
    let missed = covered.iter().filter(|&&v| !v).count() as u64;
    TrialStats {
        all_covered: missed == 0,
        missed,
        collisions,
    }
}

/// Samples `trials` random sparse networks; trial `t` draws from stream `t` of a
/// generator seeded with `seed`, so results do not depend on scheduling.
pub fn monte_carlo(params: &TheoryParams, trials: usize, seed: u64) -> Result<MonteCarloResult> {
    params.validate()?;
    if trials == 0 {
        return Err(FpeError::input("at least one trial is required"));
    }
    let stats: Vec<TrialStats> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            one_network(params, &mut rng)
        })
        .collect();
    let c = params.num_clauses.max(1) as f64;
    let all: Vec<f64> = stats.iter().map(|s| f64::from(u8::from(s.all_covered))).collect();
    let miss: Vec<f64> = stats.iter().map(|s| s.missed as f64 / c).collect();
    let coll: Vec<f64> = stats.iter().map(|s| s.collisions as f64).collect();
    Ok(MonteCarloResult {
        trials,
        coverage_all_rate: mean(&all),
        coverage_all_stderr: std_error(&all),
        clause_miss_rate: mean(&miss),
        clause_miss_stderr: std_error(&miss),
        mean_collisions: mean(&coll),
        collisions_stderr: std_error(&coll),
    })
}

/// Every closed-form quantity for one parameter set, plus optional simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub params: TheoryParams,
    pub p_exact: f64,
    pub p_exact_rational: String,
    pub p_approx: f64,
    pub coverage_lower_bound: f64,
    pub min_neurons: f64,
    pub p_prime_exact: f64,
    pub interference_ratio: f64,
    pub approx_interference_ratio: f64,
    pub expected_collisions_dense: f64,
    pub expected_collisions_fpe: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<MonteCarloResult>,
}

impl TheoryReport {
    pub fn compute(params: &TheoryParams, simulate: Option<(usize, u64)>) -> Result<Self> {
        params.validate()?;
        let p = coverage_prob_exact(params.m, params.k, params.d)?;
        let pf = p.to_f64();
        let p_prime = if 2 * params.k <= params.m {
            pair_collision_prob_exact(params.m, params.k, params.d)?.to_f64()
        } else {
            0.0
        };
        let (e_dense, e_fpe) = expected_collisions(params.r, params.num_clauses, params.alpha, p_prime);
        Ok(TheoryReport {
            params: *params,
            p_exact: pf,
            p_exact_rational: format!("{}/{}", p.numer, p.denom),
            p_approx: (params.d as f64 / params.m as f64).powi(params.k as i32),
            coverage_lower_bound: coverage_lower_bound(pf, params.alpha, params.r, params.num_clauses),
            min_neurons: min_neurons_for_coverage(params.alpha, params.k, params.num_clauses, params.epsilon)?,
            p_prime_exact: p_prime,
            interference_ratio: interference_ratio(params.alpha, p_prime),
            approx_interference_ratio: approx_interference_ratio(params.alpha, params.k),
            expected_collisions_dense: e_dense,
            expected_collisions_fpe: e_fpe,
            monte_carlo: simulate
                .map(|(trials, seed)| monte_carlo(params, trials, seed))
                .transpose()?,
        })
    }
}
