//! Two-class Gaussian mixtures over a semantic/background feature split.
//!
//! The in-distribution law is `y ~ Bernoulli(prior)`, `x | y=i ~ N(mu^i, s*I)`
//! with `mu^1 = [+m on semantic dims, 0 on background dims]` and
//! `mu^0 = [-m, 0]`. Semantic shifts move the set of label-carrying
//! dimensions; background shifts translate both centroids along the
//! background axes.

use alloc::vec::Vec;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::math::round_half_up;

/// Split of `0..total_dims` into semantic and background index sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPartition")]
pub struct FeaturePartition {
    total_dims: usize,
    semantic_indices: Vec<usize>,
    background_indices: Vec<usize>,
}

#[derive(Deserialize)]
struct RawPartition {
    total_dims: usize,
    semantic_indices: Vec<usize>,
    #[allow(dead_code)]
    background_indices: Vec<usize>,
}

impl TryFrom<RawPartition> for FeaturePartition {
    type Error = Error;

    fn try_from(raw: RawPartition) -> Result<Self> {
        let partition = FeaturePartition::new(raw.total_dims, raw.semantic_indices)?;
        if partition.background_indices != raw.background_indices {
            return Err(invalid(
                "background_indices",
                "must be the sorted complement of semantic_indices",
            ));
        }
        Ok(partition)
    }
}

impl FeaturePartition {
    /// Builds a partition from the semantic indices; the background set is
    /// their complement. Indices are sorted; duplicates are rejected.
    pub fn new(total_dims: usize, mut semantic_indices: Vec<usize>) -> Result<Self> {
        semantic_indices.sort_unstable();
        if semantic_indices.is_empty() {
            return Err(invalid(
                "semantic_indices",
                "at least one semantic dimension is required",
            ));
        }
        if semantic_indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("semantic_indices", "duplicate index"));
        }
        if semantic_indices.last().is_some_and(|&i| i >= total_dims) {
            return Err(invalid("semantic_indices", "index out of range"));
        }
        if semantic_indices.len() >= total_dims {
            return Err(invalid("semantic_indices", "no background dimension remains"));
        }
        let mut is_semantic = alloc::vec![false; total_dims];
        semantic_indices.iter().for_each(|&i| is_semantic[i] = true);
        let background_indices = (0..total_dims).filter(|&i| !is_semantic[i]).collect();
        Ok(Self {
            total_dims,
            semantic_indices,
            background_indices,
        })
    }

    pub fn total_dims(&self) -> usize {
        self.total_dims
    }

    pub fn semantic_indices(&self) -> &[usize] {
        &self.semantic_indices
    }

    pub fn background_indices(&self) -> &[usize] {
        &self.background_indices
    }

    /// `n`, the number of semantic dimensions.
    pub fn n_semantic(&self) -> usize {
        self.semantic_indices.len()
    }

    /// `m`, the number of background dimensions.
    pub fn n_background(&self) -> usize {
        self.background_indices.len()
    }
}

/// Two-class Gaussian mixture with spherical covariance `covariance_scale * I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGmmSpec")]
pub struct GmmSpec {
    partition: FeaturePartition,
    centroid_0: Vec<f64>,
    centroid_1: Vec<f64>,
    covariance_scale: f64,
    class1_prior: f64,
}

#[derive(Deserialize)]
struct RawGmmSpec {
    partition: FeaturePartition,
    centroid_0: Vec<f64>,
    centroid_1: Vec<f64>,
    covariance_scale: f64,
    class1_prior: f64,
}

impl TryFrom<RawGmmSpec> for GmmSpec {
    type Error = Error;

    fn try_from(raw: RawGmmSpec) -> Result<Self> {
        GmmSpec::new(
            raw.partition,
            raw.centroid_0,
            raw.centroid_1,
            raw.covariance_scale,
            raw.class1_prior,
        )
    }
}

impl GmmSpec {
    pub fn new(
        partition: FeaturePartition,
        centroid_0: Vec<f64>,
        centroid_1: Vec<f64>,
        covariance_scale: f64,
        class1_prior: f64,
    ) -> Result<Self> {
        let d = partition.total_dims();
        for c in [&centroid_0, &centroid_1] {
            if c.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: c.len(),
                });
            }
            if let Some(index) = c.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { index });
            }
        }
        if !(covariance_scale.is_finite() && covariance_scale > 0.0) {
            return Err(invalid("covariance_scale", "must be positive and finite"));
        }
        if !(class1_prior > 0.0 && class1_prior < 1.0) {
            return Err(invalid("class1_prior", "must lie in (0, 1)"));
        }
        if partition
            .background_indices()
            .iter()
            .any(|&i| centroid_0[i] != centroid_1[i])
        {
            return Err(invalid(
                "centroids",
                "class centroids must agree on every background dimension",
            ));
        }
        Ok(Self {
            partition,
            centroid_0,
            centroid_1,
            covariance_scale,
            class1_prior,
        })
    }

    pub fn partition(&self) -> &FeaturePartition {
        &self.partition
    }

    pub fn total_dims(&self) -> usize {
        self.partition.total_dims()
    }

    pub fn centroid(&self, class: u8) -> &[f64] {
        if class == 0 {
            &self.centroid_0
        } else {
            &self.centroid_1
        }
    }

    pub fn covariance_scale(&self) -> f64 {
        self.covariance_scale
    }

    pub fn class1_prior(&self) -> f64 {
        self.class1_prior
    }

    /// Half the centroid gap on the first semantic dimension. For specs built
    /// here this is the common `+-m` magnitude of every semantic coordinate.
    pub fn semantic_magnitude(&self) -> f64 {
        let i = self.partition.semantic_indices()[0];
        (self.centroid_1[i] - self.centroid_0[i]) / 2.0
    }
}

fn centroids_for(total_dims: usize, semantic: &[usize], magnitude: f64) -> (Vec<f64>, Vec<f64>) {
    let mut c0 = alloc::vec![0.0; total_dims];
    let mut c1 = alloc::vec![0.0; total_dims];
    for &i in semantic {
        c0[i] = -magnitude;
        c1[i] = magnitude;
    }
    (c0, c1)
}

/// In-distribution spec: `n_semantic` dimensions chosen uniformly without
/// replacement under `seed`, centroids at `+-semantic_magnitude` there and 0
/// elsewhere, identity covariance, equal priors.
pub fn build_id_spec(total_dims: usize, n_semantic: usize, semantic_magnitude: f64, seed: u64) -> Result<GmmSpec> {
    if n_semantic == 0 {
        return Err(invalid("n_semantic", "must be at least 1"));
    }
    if n_semantic >= total_dims {
        return Err(invalid("n_semantic", "must be smaller than total_dims"));
    }
    if !(semantic_magnitude.is_finite() && semantic_magnitude > 0.0) {
        return Err(invalid("semantic_magnitude", "must be positive and finite"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let semantic = index::sample(&mut rng, total_dims, n_semantic).into_vec();
    let partition = FeaturePartition::new(total_dims, semantic)?;
    let (c0, c1) = centroids_for(total_dims, partition.semantic_indices(), semantic_magnitude);
    GmmSpec::new(partition, c0, c1, 1.0, 0.5)
}

/// Semantic shift with overlap rate `r`: keeps `round(r*n)` of the ID
/// semantic dimensions and relocates the rest into previously-background
/// dimensions, both picks uniform without replacement under `seed`.
///
/// `r = 1` reproduces the ID semantic set; `r = 0` is the strongest shift.
pub fn semantic_shift_spec(id_spec: &GmmSpec, overlap_rate: f64, seed: u64) -> Result<GmmSpec> {
    if !(0.0..=1.0).contains(&overlap_rate) {
        return Err(invalid("overlap_rate", "must lie in [0, 1]"));
    }
    let partition = id_spec.partition();
    let n = partition.n_semantic();
    let m = partition.n_background();
    let kept = round_half_up(overlap_rate * n as f64).min(n);
    let moved = n - kept;
    if moved > m {
        return Err(invalid(
            "overlap_rate",
            alloc::format!("{moved} semantic dimensions to relocate but only {m} background dimensions"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut semantic: Vec<usize> = index::sample(&mut rng, n, kept)
        .into_iter()
        .map(|k| partition.semantic_indices()[k])
        .collect();
    semantic.extend(
        index::sample(&mut rng, m, moved)
            .into_iter()
            .map(|k| partition.background_indices()[k]),
    );
    let total_dims = partition.total_dims();
    let shifted = FeaturePartition::new(total_dims, semantic)?;
    let (c0, c1) = centroids_for(total_dims, shifted.semantic_indices(), id_spec.semantic_magnitude());
    GmmSpec::new(shifted, c0, c1, id_spec.covariance_scale(), id_spec.class1_prior())
}

/// Background shift: both centroids move by `alpha` along every background
/// dimension (`z = alpha * [0_s, 1_b]`).
pub fn background_shift_spec(id_spec: &GmmSpec, alpha: f64) -> Result<GmmSpec> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(invalid("alpha", "must be nonnegative and finite"));
    }
    let z = background_displacement(id_spec.partition(), alpha);
    let shift = |c: &[f64]| c.iter().zip(&z).map(|(a, b)| a + b).collect::<Vec<_>>();
    GmmSpec::new(
        id_spec.partition().clone(),
        shift(&id_spec.centroid_0),
        shift(&id_spec.centroid_1),
        id_spec.covariance_scale(),
        id_spec.class1_prior(),
    )
}

/// The displacement vector `alpha * [0_s, 1_b]`.
pub fn background_displacement(partition: &FeaturePartition, alpha: f64) -> Vec<f64> {
    let mut z = alloc::vec![0.0; partition.total_dims()];
    partition.background_indices().iter().for_each(|&i| z[i] = alpha);
    z
}

/// A shift applied to an in-distribution spec.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShiftSpec {
    Semantic { overlap_rate: f64, seed: u64 },
    Background { displacement_alpha: f64 },
}

impl ShiftSpec {
    pub fn apply(&self, id_spec: &GmmSpec) -> Result<GmmSpec> {
        match *self {
            ShiftSpec::Semantic { overlap_rate, seed } => semantic_shift_spec(id_spec, overlap_rate, seed),
            ShiftSpec::Background { displacement_alpha } => background_shift_spec(id_spec, displacement_alpha),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    InDistribution,
    OutOfDistribution,
}

/// Row-major `N x d` sample matrix with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    features: Vec<f64>,
    dims: usize,
    labels: Vec<u8>,
    origin: Origin,
}

impl SampleSet {
    pub fn from_rows(features: Vec<f64>, dims: usize, labels: Vec<u8>, origin: Origin) -> Result<Self> {
        if dims == 0 {
            return Err(invalid("dims", "must be positive"));
        }
        if features.len() != labels.len() * dims {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * dims,
                actual: features.len(),
            });
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(invalid("labels", "must be 0 or 1"));
        }
        Ok(Self {
            features,
            dims,
            labels,
            origin,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dims..(i + 1) * self.dims]
    }

    pub fn rows(&self) -> core::slice::ChunksExact<'_, f64> {
        self.features.chunks_exact(self.dims)
    }

    /// Every row translated by `z`.
    pub fn translated(&self, z: &[f64]) -> Result<Self> {
        if z.len() != self.dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims,
                actual: z.len(),
            });
        }
        let features = self
            .rows()
            .flat_map(|row| row.iter().zip(z).map(|(x, dz)| x + dz))
            .collect();
        Ok(Self {
            features,
            ..self.clone()
        })
    }
}

/// Draws `count` labeled samples. Output is a pure function of
/// `(spec, count, seed, origin)`: one ChaCha8 stream per call, consumed in row
/// order (label, then the `d` coordinates).
pub fn sample(spec: &GmmSpec, count: usize, seed: u64, origin: Origin) -> Result<SampleSet> {
    if count == 0 {
        return Err(invalid("count", "must be at least 1"));
    }
    let d = spec.total_dims();
    let sd = libm::sqrt(spec.covariance_scale());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(count * d);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let y = rng.random_bool(spec.class1_prior()) as u8;
        labels.push(y);
        let mu = spec.centroid(y);
        features.extend(mu.iter().map(|&c| {
            let e: f64 = rng.sample(StandardNormal);
            c + sd * e
        }));
    }
    SampleSet::from_rows(features, d, labels, origin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;
    use proptest::prelude::*;

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn id_spec_paper_dimensions() {
        let spec = build_id_spec(200, 40, 1.0, 7).unwrap();
        let p = spec.partition();
        assert_eq!(p.n_semantic(), 40);
        assert_eq!(p.n_background(), 160);
        for &i in p.semantic_indices() {
            assert_eq!(spec.centroid(1)[i], 1.0);
            assert_eq!(spec.centroid(0)[i], -1.0);
        }
        for &i in p.background_indices() {
            assert_eq!(spec.centroid(1)[i], 0.0);
            assert_eq!(spec.centroid(0)[i], 0.0);
        }
        assert_eq!(spec.covariance_scale(), 1.0);
        assert_eq!(spec.class1_prior(), 0.5);
    }

    #[test]
    fn id_spec_two_dimensional_case() {
        let spec = build_id_spec(2, 1, 1.0, 0).unwrap();
        assert_eq!(spec.partition().n_semantic(), 1);
        assert_eq!(spec.partition().n_background(), 1);
        let s = spec.partition().semantic_indices()[0];
        let b = spec.partition().background_indices()[0];
        assert_eq!(s + b, 1);
    }

    #[test]
    fn id_spec_rejects_bad_arguments() {
        assert!(build_id_spec(3, 3, 1.0, 1).is_err());
        assert!(build_id_spec(3, 4, 1.0, 1).is_err());
        assert!(build_id_spec(3, 0, 1.0, 1).is_err());
        assert!(build_id_spec(3, 1, 0.0, 1).is_err());
        assert!(build_id_spec(3, 1, -1.0, 1).is_err());
    }

    #[test]
    fn semantic_shift_full_overlap_is_identity_on_indices() {
        let id = build_id_spec(200, 40, 1.0, 11).unwrap();
        let ood = semantic_shift_spec(&id, 1.0, 5).unwrap();
        assert_eq!(ood, id);
    }

    #[test]
    fn semantic_shift_zero_overlap_lands_in_background() {
        let id = build_id_spec(200, 40, 1.0, 11).unwrap();
        let ood = semantic_shift_spec(&id, 0.0, 5).unwrap();
        let ood_sem = set(ood.partition().semantic_indices());
        assert_eq!(ood_sem.len(), 40);
        assert!(ood_sem.is_disjoint(&set(id.partition().semantic_indices())));
        assert!(ood_sem.is_subset(&set(id.partition().background_indices())));
    }

    #[test]
    fn semantic_shift_half_overlap_counts() {
        let id = build_id_spec(200, 40, 1.0, 3).unwrap();
        let ood = semantic_shift_spec(&id, 0.5, 3).unwrap();
        let common = set(id.partition().semantic_indices())
            .intersection(&set(ood.partition().semantic_indices()))
            .count();
        assert_eq!(common, 20);
    }

    #[test]
    fn semantic_shift_errors() {
        let id = build_id_spec(200, 40, 1.0, 3).unwrap();
        assert!(semantic_shift_spec(&id, -0.1, 0).is_err());
        assert!(semantic_shift_spec(&id, 1.1, 0).is_err());
        // n = 150, m = 50: relocating all 150 is impossible
        let crowded = build_id_spec(200, 150, 1.0, 3).unwrap();
        assert!(semantic_shift_spec(&crowded, 0.0, 0).is_err());
        assert!(semantic_shift_spec(&crowded, 0.7, 0).is_ok());
    }

    #[test]
    fn background_shift_identity_and_displacement() {
        let id = build_id_spec(200, 40, 1.0, 9).unwrap();
        assert_eq!(background_shift_spec(&id, 0.0).unwrap(), id);
        let ood = background_shift_spec(&id, 1.0).unwrap();
        for class in [0, 1] {
            let diff: Vec<f64> = ood
                .centroid(class)
                .iter()
                .zip(id.centroid(class))
                .map(|(a, b)| a - b)
                .collect();
            assert_eq!(diff.iter().filter(|&&v| v == 0.0).count(), 40);
            assert_eq!(diff.iter().filter(|&&v| v == 1.0).count(), 160);
            let norm = libm::sqrt(diff.iter().map(|v| v * v).sum::<f64>());
            assert!((norm - libm::sqrt(160.0)).abs() < 1e-12);
        }
        assert!(background_shift_spec(&id, -0.5).is_err());
    }

    #[test]
    fn shift_spec_dispatch() {
        let id = build_id_spec(20, 4, 1.0, 9).unwrap();
        let a = ShiftSpec::Background {
            displacement_alpha: 0.5,
        }
        .apply(&id)
        .unwrap();
        assert_eq!(a, background_shift_spec(&id, 0.5).unwrap());
        let b = ShiftSpec::Semantic {
            overlap_rate: 0.5,
            seed: 4,
        }
        .apply(&id)
        .unwrap();
        assert_eq!(b, semantic_shift_spec(&id, 0.5, 4).unwrap());
    }

    #[test]
    fn gmm_spec_rejects_label_dependent_background() {
        let p = FeaturePartition::new(3, alloc::vec![0]).unwrap();
        let err = GmmSpec::new(p, alloc::vec![-1.0, 0.0, 0.0], alloc::vec![1.0, 0.5, 0.0], 1.0, 0.5);
        assert!(err.is_err());
    }

    #[test]
    fn partition_rejects_bad_indices() {
        assert!(FeaturePartition::new(3, alloc::vec![]).is_err());
        assert!(FeaturePartition::new(3, alloc::vec![0, 0]).is_err());
        assert!(FeaturePartition::new(3, alloc::vec![3]).is_err());
        assert!(FeaturePartition::new(3, alloc::vec![0, 1, 2]).is_err());
        let p = FeaturePartition::new(5, alloc::vec![4, 1]).unwrap();
        assert_eq!(p.semantic_indices(), &[1, 4]);
        assert_eq!(p.background_indices(), &[0, 2, 3]);
    }

    #[test]
    fn sample_rejects_zero_count() {
        let spec = build_id_spec(4, 2, 1.0, 0).unwrap();
        assert!(sample(&spec, 0, 0, Origin::InDistribution).is_err());
    }

    #[test]
    fn sample_moments() {
        let spec = build_id_spec(10, 4, 1.0, 2).unwrap();
        let n = 100_000;
        let s = sample(&spec, n, 1234, Origin::InDistribution).unwrap();
        let ones = s.labels().iter().filter(|&&y| y == 1).count();
        let frac = ones as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.01, "label fraction {frac}");

        let d = spec.total_dims();
        let mut sum = alloc::vec![0.0; d];
        let mut sq = alloc::vec![0.0; d];
        for (row, &y) in s.rows().zip(s.labels()) {
            if y == 1 {
                for j in 0..d {
                    sum[j] += row[j];
                    sq[j] += row[j] * row[j];
                }
            }
        }
        let k = ones as f64;
        for j in 0..d {
            let mean = sum[j] / k;
            let var = sq[j] / k - mean * mean;
            assert!((mean - spec.centroid(1)[j]).abs() < 0.02, "dim {j} mean {mean}");
            assert!((var - 1.0).abs() < 0.05, "dim {j} var {var}");
        }
    }

    #[test]
    fn sample_is_deterministic() {
        let spec = build_id_spec(50, 10, 1.0, 2).unwrap();
        let a = sample(&spec, 500, 99, Origin::OutOfDistribution).unwrap();
        let b = sample(&spec, 500, 99, Origin::OutOfDistribution).unwrap();
        assert_eq!(a, b);
        let c = sample(&spec, 500, 100, Origin::OutOfDistribution).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn background_shift_reuses_draws_under_same_seed() {
        let id = build_id_spec(30, 6, 1.0, 2).unwrap();
        let ood = background_shift_spec(&id, 0.7).unwrap();
        let a = sample(&id, 200, 5, Origin::InDistribution).unwrap();
        let b = sample(&ood, 200, 5, Origin::OutOfDistribution).unwrap();
        assert_eq!(a.labels(), b.labels());
        let z = background_displacement(id.partition(), 0.7);
        let a_shifted = a.translated(&z).unwrap();
        for (x, y) in a_shifted.features().iter().zip(b.features()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn raw_spec_goes_through_validation() {
        let id = build_id_spec(6, 2, 1.0, 2).unwrap();
        let raw = RawGmmSpec {
            partition: id.partition().clone(),
            centroid_0: id.centroid(0).to_vec(),
            centroid_1: id.centroid(1).to_vec(),
            covariance_scale: 1.0,
            class1_prior: 0.5,
        };
        assert_eq!(GmmSpec::try_from(raw).unwrap(), id);
    }

    proptest! {
        #[test]
        fn shift_invariants(
            d in 4usize..120,
            frac in 0.05f64..0.5,
            r in 0.0f64..=1.0,
            alpha in 0.0f64..5.0,
            seed in any::<u64>(),
        ) {
            let n = ((d as f64 * frac) as usize).max(1);
            let id = build_id_spec(d, n, 1.0, seed).unwrap();
            for spec in [&id] {
                for &i in spec.partition().background_indices() {
                    prop_assert_eq!(spec.centroid(0)[i], spec.centroid(1)[i]);
                }
            }

            let sem = semantic_shift_spec(&id, r, seed ^ 1).unwrap();
            prop_assert_eq!(sem.total_dims(), d);
            prop_assert_eq!(sem.partition().n_semantic(), n);
            let common = set(id.partition().semantic_indices())
                .intersection(&set(sem.partition().semantic_indices()))
                .count();
            prop_assert_eq!(common, libm::floor(r * n as f64 + 0.5) as usize);
            for &i in sem.partition().background_indices() {
                prop_assert_eq!(sem.centroid(0)[i], sem.centroid(1)[i]);
            }

            let bg = background_shift_spec(&id, alpha).unwrap();
            for &i in id.partition().semantic_indices() {
                prop_assert_eq!(bg.centroid(0)[i], id.centroid(0)[i]);
                prop_assert_eq!(bg.centroid(1)[i], id.centroid(1)[i]);
            }
            for &i in bg.partition().background_indices() {
                prop_assert_eq!(bg.centroid(0)[i], bg.centroid(1)[i]);
            }
        }
    }
}
