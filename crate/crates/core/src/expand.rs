//! Fixed parameter expansion.
//!
//! Each expanded hidden neuron is replaced by `alpha` sub-neurons whose input supports
//! partition the parent's inputs, so the expanded layer holds exactly the parent's
//! non-zero weights. The layer that consumes the widened hidden layer gets its input
//! columns duplicated, which adds weights; the smallest-magnitude weights of the pair
//! are then pruned until the pair is back at its original budget.

use kodama::{linkage, Method};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FpeError, Result};
use crate::math::{dot, matmul_at, Matrix};
use crate::net::{LayerNormParams, MaskedLayer, MlpModel};

/// How a neuron's inputs are divided among its sub-neurons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitKind {
    /// Uniformly random assignment with sizes differing by at most one.
    Random,
    /// Contiguous blocks of `k` inputs stay together; blocks go round-robin.
    ClauseAware { k: usize },
    /// Inputs grouped by clustering the rows of the first-layer Gram matrix.
    GramCluster(GramClusterParams),
    /// Every aligned group of four inputs sends two to each of two sub-neurons.
    Structured2of4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionStrategy {
    #[serde(flatten)]
    pub kind: SplitKind,
    #[serde(default)]
    pub seed: u64,
}

impl PartitionStrategy {
    pub fn new(kind: SplitKind, seed: u64) -> Self {
        PartitionStrategy { kind, seed }
    }

    pub fn random(seed: u64) -> Self {
        PartitionStrategy::new(SplitKind::Random, seed)
    }

    pub fn clause_aware(k: usize) -> Self {
        PartitionStrategy::new(SplitKind::ClauseAware { k }, 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    Single,
    Complete,
    #[default]
    Average,
}

impl From<Linkage> for Method {
    fn from(l: Linkage) -> Method {
        match l {
            Linkage::Single => Method::Single,
            Linkage::Complete => Method::Complete,
            Linkage::Average => Method::Average,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct GramClusterParams {
    /// Number of feature clusters; `alpha × h` when absent.
    #[serde(default)]
    pub num_clusters: Option<usize>,
    #[serde(default)]
    pub linkage: Linkage,
}

/// Assignment of each of a neuron's `d` inputs to one of `alpha` sub-neurons.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub alpha: usize,
    pub owner: Vec<usize>,
}

impl Partition {
    pub fn width(&self) -> usize {
        self.owner.len()
    }

    /// The `alpha` binary masks `m_(i_1) … m_(i_alpha)`.
    pub fn masks(&self) -> Vec<Vec<u8>> {
        (0..self.alpha)
            .map(|j| self.owner.iter().map(|&o| u8::from(o == j)).collect())
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.alpha];
        for &o in &self.owner {
            s[o] += 1;
        }
        s
    }

    fn check(&self, d: usize) -> Result<()> {
        if self.owner.len() != d {
            return Err(FpeError::input(format!(
                "partition covers {} inputs, layer has {d}",
                self.owner.len()
            )));
        }
        if let Some(bad) = self.owner.iter().find(|&&o| o >= self.alpha) {
            return Err(FpeError::input(format!(
                "input assigned to sub-neuron {bad} of {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

fn check_alpha(alpha: usize) -> Result<()> {
    if alpha < 2 {
        return Err(FpeError::input(format!("expansion factor must be >= 2, got {alpha}")));
    }
    Ok(())
}

/// Partition for one neuron drawn from `rng`. Gram clustering needs layer weights and is
/// handled by [`gram_cluster_partitions`].
pub fn partition_with_rng(
    d: usize,
    alpha: usize,
    kind: &SplitKind,
    rng: &mut impl Rng,
) -> Result<Partition> {
    check_alpha(alpha)?;
    let owner = match kind {
        SplitKind::Random => {
            let mut order: Vec<usize> = (0..d).collect();
            order.shuffle(rng);
            let mut owner = vec![0; d];
            for (slot, &pos) in order.iter().enumerate() {
                owner[pos] = slot % alpha;
            }
            owner
        }
        SplitKind::ClauseAware { k } => {
            if *k == 0 || !d.is_multiple_of(*k) {
                return Err(FpeError::input(format!(
                    "clause size {k} does not divide input width {d}"
                )));
            }
            (0..d).map(|i| (i / k) % alpha).collect()
        }
        SplitKind::Structured2of4 => {
            if alpha != 2 {
                return Err(FpeError::input("2:4 structured split requires alpha = 2"));
            }
            if !d.is_multiple_of(4) {
                return Err(FpeError::input(format!(
                    "2:4 structured split requires width divisible by 4, got {d}"
                )));
            }
            let mut owner = vec![1; d];
            for group in 0..d / 4 {
                for i in index::sample(rng, 4, 2) {
                    owner[group * 4 + i] = 0;
                }
            }
            owner
        }
        SplitKind::GramCluster(_) => {
            return Err(FpeError::input(
                "gram-cluster partitions are computed from layer weights",
            ))
        }
    };
    Ok(Partition { alpha, owner })
}

/// The `alpha` disjoint binary masks for one neuron of input width `d`.
pub fn partition_masks(d: usize, alpha: usize, strategy: &PartitionStrategy) -> Result<Vec<Vec<u8>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(strategy.seed);
    Ok(partition_with_rng(d, alpha, &strategy.kind, &mut rng)?.masks())
}

/// One partition per neuron of `layer`.
pub fn layer_partitions(
    layer: &MaskedLayer,
    alpha: usize,
    kind: &SplitKind,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Partition>> {
    match kind {
        SplitKind::GramCluster(params) => gram_cluster_partitions(&layer.weights, alpha, params, rng),
        _ => (0..layer.out_dim())
            .map(|_| partition_with_rng(layer.in_dim(), alpha, kind, rng))
            .collect(),
    }
}

/// Splits every row of an `h × d` layer into `alpha` masked copies.
///
/// Sub-neuron `j` of neuron `i` becomes row `alpha·i + j` and keeps the parent's
/// weights on the inputs its partition assigns to it (intersected with the existing
/// mask). Biases are copied to every sub-neuron.
pub fn expand_hidden_layer(
    layer: &MaskedLayer,
    alpha: usize,
    partitions: &[Partition],
) -> Result<MaskedLayer> {
    check_alpha(alpha)?;
    let (h, d) = layer.weights.shape();
    if partitions.len() != h {
        return Err(FpeError::input(format!(
            "{} partitions for {h} neurons",
            partitions.len()
        )));
    }
    let mut weights = Matrix::zeros(alpha * h, d);
    let mut mask = Matrix::zeros(alpha * h, d);
    for (i, part) in partitions.iter().enumerate() {
        part.check(d)?;
        if part.alpha != alpha {
            return Err(FpeError::input("partition alpha differs from expansion alpha"));
        }
        for c in 0..d {
            let row = alpha * i + part.owner[c];
            if layer.is_active(i, c) {
                mask.set(row, c, 1.0);
                weights.set(row, c, layer.weights.get(i, c));
            }
        }
    }
    let bias = layer.bias.as_ref().map(|b| {
        b.iter()
            .flat_map(|&v| std::iter::repeat_n(v, alpha))
            .collect()
    });
    MaskedLayer::new(weights, bias, mask)
}

/// Duplicates every input column of a `C × h` layer `alpha` times (column `j` lands at
/// `alpha·j .. alpha·(j+1)`), leaving the bias untouched.
pub fn expand_output_layer(layer: &MaskedLayer, alpha: usize) -> Result<MaskedLayer> {
    check_alpha(alpha)?;
    let (rows, h) = layer.weights.shape();
    let mut weights = Matrix::zeros(rows, alpha * h);
    let mut mask = Matrix::zeros(rows, alpha * h);
    for r in 0..rows {
        for j in 0..h {
            for s in 0..alpha {
                weights.set(r, alpha * j + s, layer.weights.get(r, j));
                mask.set(r, alpha * j + s, layer.mask.get(r, j));
            }
        }
    }
    MaskedLayer::new(weights, layer.bias.clone(), mask)
}

/// Prunes the globally smallest-magnitude active weights across `layers` until exactly
/// `budget` remain. Ties are broken by (layer, row, column). Returns how many were pruned.
pub fn resparsify(layers: &mut [MaskedLayer], budget: usize) -> Result<usize> {
    let current: usize = layers.iter().map(MaskedLayer::weight_nnz).sum();
    if budget > current {
        return Err(FpeError::input(format!(
            "budget {budget} exceeds the {current} active weights"
        )));
    }
    let excess = current - budget;
    if excess == 0 {
        return Ok(0);
    }
    let mut candidates = active_positions(layers);
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2, a.3).cmp(&(b.1, b.2, b.3))));
    for &(_, l, r, c) in &candidates[..excess] {
        layers[l].mask.set(r, c, 0.0);
        layers[l].weights.set(r, c, 0.0);
    }
    Ok(excess)
}

fn active_positions(layers: &[MaskedLayer]) -> Vec<(f64, usize, usize, usize)> {
    let mut out = Vec::new();
    for (l, layer) in layers.iter().enumerate() {
        let cols = layer.in_dim();
        for (idx, (&w, &m)) in layer.weights.data().iter().zip(layer.mask.data()).enumerate() {
            if m != 0.0 {
                out.push((w.abs(), l, idx / cols, idx % cols));
            }
        }
    }
    out
}

/// What to expand and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionPlan {
    pub alpha: usize,
    /// Hidden-layer indices (0 = first hidden layer). No two may be adjacent and the
    /// classification head is never expanded.
    pub layers_to_expand: Vec<usize>,
    pub strategy: PartitionStrategy,
}

impl ExpansionPlan {
    /// Expands hidden layers 0, 2, 4, … of a model with `hidden_count` hidden layers.
    pub fn alternating(alpha: usize, hidden_count: usize, strategy: PartitionStrategy) -> Self {
        ExpansionPlan {
            alpha,
            layers_to_expand: (0..hidden_count).step_by(2).collect(),
            strategy,
        }
    }

    pub fn validate(&self, model: &MlpModel) -> Result<()> {
        check_alpha(self.alpha)?;
        if self.layers_to_expand.is_empty() {
            return Err(FpeError::input("expansion plan names no layers"));
        }
        let hidden = model.hidden_count();
        for (n, &idx) in self.layers_to_expand.iter().enumerate() {
            if idx >= hidden {
                return Err(FpeError::input(format!(
                    "layer {idx} is not a hidden layer (model has {hidden})"
                )));
            }
            if n > 0 && idx < self.layers_to_expand[n - 1] + 2 {
                return Err(FpeError::input(
                    "expanded layers must be increasing and non-adjacent",
                ));
            }
        }
        Ok(())
    }
}

/// Applies a full expansion: for each planned hidden layer, split its neurons, widen the
/// next layer's inputs by column duplication, and re-sparsify the pair back to its
/// original non-zero weight count. Total weight nnz is preserved exactly.
pub fn fpe_expand_model(model: &MlpModel, plan: &ExpansionPlan) -> Result<MlpModel> {
    model.validate()?;
    plan.validate(model)?;
    let mut out = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(plan.strategy.seed);
    for &idx in &plan.layers_to_expand {
        let budget = out.layers[idx].weight_nnz() + out.layers[idx + 1].weight_nnz();
        let parts = layer_partitions(&out.layers[idx], plan.alpha, &plan.strategy.kind, &mut rng)?;
        let widened = expand_hidden_layer(&out.layers[idx], plan.alpha, &parts)?;
        let next = expand_output_layer(&out.layers[idx + 1], plan.alpha)?;
        out.layers[idx] = widened;
        out.layers[idx + 1] = next;
        if let Some(norm) = out.norms[idx].take() {
            let repeat = |v: &[f64]| {
                v.iter()
                    .flat_map(|&x| std::iter::repeat_n(x, plan.alpha))
                    .collect::<Vec<_>>()
            };
            out.norms[idx] = Some(LayerNormParams {
                gain: repeat(&norm.gain),
                shift: repeat(&norm.shift),
            });
        }
        resparsify(&mut out.layers[idx..=idx + 1], budget)?;
    }
    out.validate()?;
    Ok(out)
}

/// Partitions built by clustering the rows of `G = WᵀW` and handing whole clusters to
/// sub-neurons, balancing the number of clusters each sub-neuron receives.
///
/// Rows are compared by cosine distance and merged by agglomerative clustering. An
/// all-zero `W` carries no structure and falls back to random partitions.
pub fn gram_cluster_partitions(
    w: &Matrix,
    alpha: usize,
    params: &GramClusterParams,
    rng: &mut impl Rng,
) -> Result<Vec<Partition>> {
    check_alpha(alpha)?;
    let (h, d) = w.shape();
    if w.data().iter().all(|&v| v == 0.0) {
        log::warn!("gram clustering on an all-zero weight matrix; using random partitions");
        return (0..h)
            .map(|_| partition_with_rng(d, alpha, &SplitKind::Random, rng))
            .collect();
    }
    let clusters = cluster_features(w, params.num_clusters.unwrap_or(alpha * h), params.linkage)?;

    let mut out = Vec::with_capacity(h);
    for _ in 0..h {
        let mut order: Vec<usize> = (0..clusters.len()).collect();
        order.shuffle(rng);
        // larger clusters first; the shuffle decides among equal sizes
        order.sort_by_key(|&c| std::cmp::Reverse(clusters[c].len()));
        let mut count = vec![0usize; alpha];
        let mut size = vec![0usize; alpha];
        let mut owner = vec![0; d];
        for c in order {
            let target = (0..alpha).min_by_key(|&j| (count[j], size[j], j)).unwrap();
            count[target] += 1;
            size[target] += clusters[c].len();
            for &f in &clusters[c] {
                owner[f] = target;
            }
        }
        out.push(Partition { alpha, owner });
    }
    Ok(out)
}

/// Groups the `d` input features of `w` into at most `num_clusters` clusters, each
/// listed by ascending feature index and ordered by their smallest member.
pub fn cluster_features(w: &Matrix, num_clusters: usize, method: Linkage) -> Result<Vec<Vec<usize>>> {
    let d = w.cols();
    if d == 0 {
        return Ok(Vec::new());
    }
    let target = num_clusters.clamp(1, d);
    let gram = matmul_at(w, w)?;
    let norms: Vec<f64> = (0..d).map(|i| dot(gram.row(i), gram.row(i)).sqrt()).collect();
    let mut condensed = Vec::with_capacity(d * (d - 1) / 2);
    for i in 0..d {
        for j in i + 1..d {
            let cos = if norms[i] > 0.0 && norms[j] > 0.0 {
                (dot(gram.row(i), gram.row(j)) / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            condensed.push(1.0 - cos);
        }
    }
    let mut members: Vec<Option<Vec<usize>>> = (0..d).map(|i| Some(vec![i])).collect();
    if d > 1 {
        let dendrogram = linkage(&mut condensed, d, method.into());
        for step in dendrogram.steps().iter().take(d - target) {
            let mut merged = members[step.cluster1].take().expect("live cluster");
            merged.extend(members[step.cluster2].take().expect("live cluster"));
            members.push(Some(merged));
        }
    }
    let mut clusters: Vec<Vec<usize>> = members.into_iter().flatten().collect();
    for c in clusters.iter_mut() {
        c.sort_unstable();
    }
    clusters.sort_by_key(|c| c[0]);
    Ok(clusters)
}

/// Fraction of same-block input pairs (blocks of `k` consecutive inputs) that a set of
/// partitions keeps on the same sub-neuron, averaged over neurons.
pub fn block_alignment(partitions: &[Partition], k: usize) -> f64 {
    let mut same = 0usize;
    let mut total = 0usize;
    for p in partitions {
        for block in p.owner.chunks(k) {
            for a in 0..block.len() {
                for b in a + 1..block.len() {
                    total += 1;
                    same += usize::from(block[a] == block[b]);
                }
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        same as f64 / total as f64
    }
}

/// Outcome of one mask rewiring step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewireEvent {
    pub requested: usize,
    pub grown: usize,
    pub pruned: usize,
    pub clipped: bool,
}

/// Unmasks `⌊fraction · nnz⌋` randomly chosen masked positions (at value 0) and prunes
/// the same number of smallest-magnitude previously active weights, across all layers.
pub fn rewire_masks(model: &mut MlpModel, fraction: f64, rng: &mut impl Rng) -> Result<RewireEvent> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(FpeError::input(format!("rewire fraction {fraction} outside [0, 1)")));
    }
    let nnz = model.weight_nnz();
    let requested = (fraction * nnz as f64).floor() as usize;
    let mut inactive = Vec::new();
    for (l, layer) in model.layers.iter().enumerate() {
        let cols = layer.in_dim();
        for (idx, &m) in layer.mask.data().iter().enumerate() {
            if m == 0.0 {
                inactive.push((l, idx / cols, idx % cols));
            }
        }
    }
    let count = requested.min(inactive.len());
    let clipped = count < requested;
    if clipped {
        log::warn!(
            "rewiring requested {requested} positions but only {} are masked",
            inactive.len()
        );
    }
    if count == 0 {
        return Ok(RewireEvent {
            requested,
            grown: 0,
            pruned: 0,
            clipped,
        });
    }
    let mut active = active_positions(&model.layers);
    active.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2, a.3).cmp(&(b.1, b.2, b.3))));
    let grow: Vec<(usize, usize, usize)> = index::sample(rng, inactive.len(), count)
        .into_iter()
        .map(|i| inactive[i])
        .collect();
    for &(_, l, r, c) in &active[..count] {
        let layer = &mut model.layers[l];
        layer.mask.set(r, c, 0.0);
        layer.weights.set(r, c, 0.0);
    }
    for (l, r, c) in grow {
        let layer = &mut model.layers[l];
        layer.mask.set(r, c, 1.0);
        layer.weights.set(r, c, 0.0);
    }
    Ok(RewireEvent {
        requested,
        grown: count,
        pruned: count,
        clipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::matmul_bt;
    use crate::net::{init_model, ModelOptions};

    fn assert_partition_law(masks: &[Vec<u8>], d: usize) {
        for pos in 0..d {
            let s: u32 = masks.iter().map(|m| u32::from(m[pos])).sum();
            assert_eq!(s, 1, "position {pos} covered {s} times");
        }
    }

    #[test]
    fn random_partition_is_balanced() {
        let masks = partition_masks(4, 2, &PartitionStrategy::random(3)).unwrap();
        assert_partition_law(&masks, 4);
        let mut sizes: Vec<usize> = masks.iter().map(|m| m.iter().map(|&b| b as usize).sum()).collect();
        sizes.sort();
        assert_eq!(sizes, vec![2, 2]);

        let masks = partition_masks(11, 3, &PartitionStrategy::random(8)).unwrap();
        assert_partition_law(&masks, 11);
        for m in &masks {
            let s: usize = m.iter().map(|&b| b as usize).sum();
            assert!(s == 3 || s == 4);
        }
    }

    #[test]
    fn clause_aware_blocks() {
        let masks = partition_masks(8, 2, &PartitionStrategy::clause_aware(4)).unwrap();
        assert_eq!(masks[0], vec![1, 1, 1, 1, 0, 0, 0, 0]);
        assert_eq!(masks[1], vec![0, 0, 0, 0, 1, 1, 1, 1]);
        assert!(matches!(
            partition_masks(10, 2, &PartitionStrategy::clause_aware(4)),
            Err(FpeError::Input(_))
        ));
    }

    #[test]
    fn alpha_equal_to_width_gives_singletons() {
        let masks = partition_masks(4, 4, &PartitionStrategy::random(1)).unwrap();
        assert_partition_law(&masks, 4);
        assert!(masks.iter().all(|m| m.iter().map(|&b| b as usize).sum::<usize>() == 1));
    }

    #[test]
    fn structured_two_of_four() {
        let s = PartitionStrategy::new(SplitKind::Structured2of4, 5);
        let masks = partition_masks(16, 2, &s).unwrap();
        assert_partition_law(&masks, 16);
        for m in &masks {
            for g in m.chunks(4) {
                assert_eq!(g.iter().map(|&b| b as usize).sum::<usize>(), 2);
            }
        }
        assert!(partition_masks(16, 4, &s).is_err());
        assert!(partition_masks(10, 2, &s).is_err());
    }

    #[test]
    fn alpha_one_rejected() {
        assert!(partition_masks(4, 1, &PartitionStrategy::random(0)).is_err());
        let layer = MaskedLayer::dense(Matrix::filled(2, 4, 1.0), None).unwrap();
        assert!(expand_output_layer(&layer, 1).is_err());
    }

    #[test]
    fn expand_hidden_layer_definition() {
        let layer = MaskedLayer::dense(Matrix::from_rows(&[vec![1.0, 2.0, 3.0, 4.0]]), Some(vec![0.5])).unwrap();
        let part = Partition {
            alpha: 2,
            owner: vec![0, 0, 1, 1],
        };
        let e = expand_hidden_layer(&layer, 2, &[part]).unwrap();
        assert_eq!(e.weights.row(0), &[1.0, 2.0, 0.0, 0.0]);
        assert_eq!(e.weights.row(1), &[0.0, 0.0, 3.0, 4.0]);
        assert_eq!(e.bias, Some(vec![0.5, 0.5]));
        assert_eq!(e.weight_nnz(), 4);
    }

    #[test]
    fn expand_hidden_layer_preserves_nnz() {
        let m = init_model(&[32, 8, 1], 4, &ModelOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let parts = layer_partitions(&m.layers[0], 2, &SplitKind::Random, &mut rng).unwrap();
        let e = expand_hidden_layer(&m.layers[0], 2, &parts).unwrap();
        assert_eq!(e.out_dim(), 16);
        assert_eq!(e.weight_nnz(), m.layers[0].weight_nnz());
    }

    #[test]
    fn sub_neuron_pre_activations_sum_to_parent() {
        let mut m = init_model(&[12, 3, 1], 9, &ModelOptions::default()).unwrap();
        m.layers[0].bias = Some(vec![0.0; 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Matrix::from_vec(5, 12, (0..60).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        for kind in [SplitKind::Random, SplitKind::ClauseAware { k: 4 }] {
            let parts = layer_partitions(&m.layers[0], 3, &kind, &mut rng).unwrap();
            let e = expand_hidden_layer(&m.layers[0], 3, &parts).unwrap();
            let parent = matmul_bt(&x, &m.layers[0].weights).unwrap();
            let subs = matmul_bt(&x, &e.weights).unwrap();
            for r in 0..5 {
                for i in 0..3 {
                    let s: f64 = (0..3).map(|j| subs.get(r, 3 * i + j)).sum();
                    assert!((s - parent.get(r, i)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn expand_output_layer_duplicates_columns() {
        let l = MaskedLayer::dense(Matrix::from_rows(&[vec![1.0, 2.0]]), Some(vec![0.7])).unwrap();
        let e = expand_output_layer(&l, 2).unwrap();
        assert_eq!(e.weights.row(0), &[1.0, 1.0, 2.0, 2.0]);
        assert_eq!(e.bias, Some(vec![0.7]));

        let dense = MaskedLayer::dense(Matrix::filled(3, 5, 0.1), None).unwrap();
        let e = expand_output_layer(&dense, 4).unwrap();
        assert_eq!(e.weight_nnz() - dense.weight_nnz(), 3 * 5 * 3);
    }

    #[test]
    fn resparsify_keeps_largest() {
        let l = MaskedLayer::dense(Matrix::from_rows(&[vec![0.1, -0.5, 2.0, 3.0]]), None).unwrap();
        let mut layers = vec![l];
        assert_eq!(resparsify(&mut layers, 4).unwrap(), 0);
        assert_eq!(resparsify(&mut layers, 2).unwrap(), 2);
        assert_eq!(layers[0].weights.row(0), &[0.0, 0.0, 2.0, 3.0]);
        assert_eq!(layers[0].mask.row(0), &[0.0, 0.0, 1.0, 1.0]);
        assert!(resparsify(&mut layers, 3).is_err());
    }

    #[test]
    fn resparsify_tie_break_is_lexicographic() {
        let a = MaskedLayer::dense(Matrix::from_rows(&[vec![1.0, -1.0]]), None).unwrap();
        let b = MaskedLayer::dense(Matrix::from_rows(&[vec![1.0, 5.0]]), None).unwrap();
        let mut layers = vec![a, b];
        resparsify(&mut layers, 2).unwrap();
        assert_eq!(layers[0].mask.row(0), &[0.0, 0.0]);
        assert_eq!(layers[1].mask.row(0), &[1.0, 1.0]);
    }

    #[test]
    fn two_layer_expansion_preserves_budget() {
        let m = init_model(&[32, 8, 1], 1, &ModelOptions::default()).unwrap();
        let plan = ExpansionPlan::alternating(2, 1, PartitionStrategy::random(7));
        let e = fpe_expand_model(&m, &plan).unwrap();
        assert_eq!(e.dims(), vec![32, 16, 1]);
        assert_eq!(e.weight_nnz(), m.weight_nnz());
        assert!(e.masks_consistent());
        assert_eq!(e, fpe_expand_model(&m, &plan).unwrap());
    }

    #[test]
    fn deep_expansion_alternates_and_skips_head() {
        let opts = ModelOptions {
            layer_norm: true,
            ..ModelOptions::default()
        };
        let m = init_model(&[512, 8, 8, 8, 8, 100], 2, &opts).unwrap();
        let plan = ExpansionPlan::alternating(2, m.hidden_count(), PartitionStrategy::random(3));
        assert_eq!(plan.layers_to_expand, vec![0, 2]);
        let e = fpe_expand_model(&m, &plan).unwrap();
        assert_eq!(e.dims(), vec![512, 16, 8, 16, 8, 100]);
        assert_eq!(e.weight_nnz(), m.weight_nnz());
        assert_eq!(e.layers[4], m.layers[4]);
        assert_eq!(e.norms[0].as_ref().unwrap().gain.len(), 16);
    }

    #[test]
    fn plan_validation() {
        let m = init_model(&[8, 4, 4, 4, 2], 0, &ModelOptions::default()).unwrap();
        let bad = |layers: Vec<usize>| ExpansionPlan {
            alpha: 2,
            layers_to_expand: layers,
            strategy: PartitionStrategy::random(0),
        };
        assert!(fpe_expand_model(&m, &bad(vec![0, 1])).is_err());
        assert!(fpe_expand_model(&m, &bad(vec![3])).is_err());
        assert!(fpe_expand_model(&m, &bad(vec![])).is_err());
        assert!(fpe_expand_model(&m, &bad(vec![0, 2])).is_ok());
    }

    #[test]
    fn gram_clusters_follow_blocks() {
        // two perfectly separated feature blocks {0,1,2} and {3,4,5}
        let w = Matrix::from_rows(&[
            vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 2.0, 2.0, 2.0],
        ]);
        let params = GramClusterParams {
            num_clusters: Some(2),
            linkage: Linkage::Average,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let parts = gram_cluster_partitions(&w, 2, &params, &mut rng).unwrap();
        for p in &parts {
            assert_partition_law(&p.masks(), 6);
            assert_eq!(p.owner[0], p.owner[1]);
            assert_eq!(p.owner[1], p.owner[2]);
            assert_eq!(p.owner[3], p.owner[4]);
            assert_ne!(p.owner[0], p.owner[3]);
        }
        assert_eq!(block_alignment(&parts, 3), 1.0);
    }

    #[test]
    fn gram_zero_matrix_falls_back_to_random() {
        let w = Matrix::zeros(3, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let parts = gram_cluster_partitions(&w, 2, &GramClusterParams::default(), &mut rng).unwrap();
        assert_eq!(parts.len(), 3);
        for p in parts {
            assert_eq!(p.sizes(), vec![4, 4]);
        }
    }

    #[test]
    fn rewire_preserves_nnz_and_starts_at_zero() {
        let m = init_model(&[16, 4, 1], 3, &ModelOptions::default()).unwrap();
        let plan = ExpansionPlan::alternating(2, 1, PartitionStrategy::random(1));
        let mut e = fpe_expand_model(&m, &plan).unwrap();
        let before = e.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(2);

        let ev = rewire_masks(&mut e, 0.0, &mut rng).unwrap();
        assert_eq!(ev.grown, 0);
        assert_eq!(e, before);

        let ev = rewire_masks(&mut e, 0.25, &mut rng).unwrap();
        assert_eq!(ev.grown, (0.25 * before.weight_nnz() as f64) as usize);
        assert_eq!(e.weight_nnz(), before.weight_nnz());
        assert!(e.masks_consistent());
        for (lb, la) in before.layers.iter().zip(&e.layers) {
            for idx in 0..lb.mask.data().len() {
                if lb.mask.data()[idx] == 0.0 && la.mask.data()[idx] == 1.0 {
                    assert_eq!(la.weights.data()[idx], 0.0);
                }
            }
        }
    }

    #[test]
    fn rewire_clips_when_few_positions_are_masked() {
        let mut m = init_model(&[4, 2, 1], 0, &ModelOptions::default()).unwrap();
        m.layers[0].mask.set(0, 0, 0.0);
        m.apply_masks();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ev = rewire_masks(&mut m, 0.5, &mut rng).unwrap();
        assert!(ev.clipped);
        assert_eq!(ev.grown, 1);
        assert_eq!(m.layers[0].mask.get(0, 0), 1.0);
    }
}
