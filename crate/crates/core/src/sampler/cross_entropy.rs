//! Cross-entropy sampling: independent truncated Gaussians on the continuous
//! dims and categoricals on the discrete dims, refit to elite samples.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use super::SamplerError;
use crate::modspace::{Modification, SpaceLayout, ABSENT, NUM_CONTINUOUS, NUM_DISCRETE};

/// Minimum batch size accepted by [`ce_update`].
pub const MIN_BATCH: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CeConfig {
    pub batch_size: usize,
    /// Fraction of each batch kept as elites.
    pub elite_fraction: f64,
    /// Weight of the new fit when blending with the previous parameters.
    pub smoothing: f64,
    /// Stddev floor as a fraction of the dim's range width.
    pub sigma_min_fraction: f64,
}

impl Default for CeConfig {
    fn default() -> Self {
        CeConfig {
            batch_size: 100,
            elite_fraction: 0.1,
            smoothing: 0.7,
            sigma_min_fraction: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CeParams {
    pub means: [f64; NUM_CONTINUOUS],
    pub stddevs: [f64; NUM_CONTINUOUS],
    /// Categorical weights per discrete dim, one per bucket (ABSENT last).
    pub weights: [Vec<f64>; NUM_DISCRETE],
}

impl CeParams {
    /// Means at range midpoints, stddev a quarter of the width, uniform
    /// categoricals.
    pub fn initial(layout: &SpaceLayout) -> Self {
        let mut means = [0.0; NUM_CONTINUOUS];
        let mut stddevs = [0.0; NUM_CONTINUOUS];
        for i in 0..NUM_CONTINUOUS {
            let r = layout.range(i);
            means[i] = r.midpoint();
            stddevs[i] = r.width() / 4.0;
        }
        let weights = std::array::from_fn(|i| {
            let n = layout.buckets(i) as usize;
            vec![1.0 / n as f64; n]
        });
        CeParams {
            means,
            stddevs,
            weights,
        }
    }

    pub fn sigma_min(layout: &SpaceLayout, dim: usize, cfg: &CeConfig) -> f64 {
        cfg.sigma_min_fraction * layout.range(dim).width()
    }
}

fn bucket_of(m: &Modification, layout: &SpaceLayout, dim: usize) -> usize {
    match m.discrete[dim] {
        Some(id) => id as usize,
        None => layout.cardinality(dim) as usize,
    }
}

/// Refits the parameters to the elite fraction of `batch` (highest objective
/// first) and blends with the previous parameters.
pub fn ce_update(
    params: &CeParams,
    layout: &SpaceLayout,
    cfg: &CeConfig,
    batch: &[(Modification, f64)],
) -> Result<CeParams, SamplerError> {
    if batch.is_empty() {
        return Err(SamplerError::EmptyElite);
    }
    if batch.len() < MIN_BATCH {
        return Err(SamplerError::BatchTooSmall(batch.len()));
    }
    let n_elite = ((cfg.elite_fraction * batch.len() as f64).ceil() as usize).min(batch.len());
    if n_elite == 0 {
        return Err(SamplerError::EmptyElite);
    }
    let mut order: Vec<usize> = (0..batch.len()).collect();
    order.sort_by(|&a, &b| batch[b].1.total_cmp(&batch[a].1).then(a.cmp(&b)));
    let elites: Vec<&Modification> = order[..n_elite].iter().map(|&i| &batch[i].0).collect();
    let k = elites.len() as f64;
    let alpha = cfg.smoothing;

    let mut next = params.clone();
    for d in 0..NUM_CONTINUOUS {
        let mean = elites.iter().map(|m| m.continuous[d]).sum::<f64>() / k;
        let var = elites
            .iter()
            .map(|m| (m.continuous[d] - mean).powi(2))
            .sum::<f64>()
            / k;
        let r = layout.range(d);
        next.means[d] = r.clamp(alpha * mean + (1.0 - alpha) * params.means[d]);
        next.stddevs[d] = (alpha * var.sqrt() + (1.0 - alpha) * params.stddevs[d])
            .max(CeParams::sigma_min(layout, d, cfg));
    }
    for d in 0..NUM_DISCRETE {
        let n = layout.buckets(d) as usize;
        let mut freq = vec![0.0; n];
        for m in &elites {
            freq[bucket_of(m, layout, d)] += 1.0 / k;
        }
        let blended: Vec<f64> = freq
            .iter()
            .zip(&params.weights[d])
            .map(|(f, w)| alpha * f + (1.0 - alpha) * w)
            .collect();
        let total: f64 = blended.iter().sum();
        next.weights[d] = blended.iter().map(|w| w / total).collect();
    }
    Ok(next)
}

const MAX_REJECTIONS: usize = 10_000;

pub fn ce_sample<R: Rng + ?Sized>(params: &CeParams, layout: &SpaceLayout, rng: &mut R) -> Modification {
    let mut discrete = [ABSENT; NUM_DISCRETE];
    for (d, slot) in discrete.iter_mut().enumerate() {
        let card = layout.cardinality(d);
        let dist = WeightedIndex::new(&params.weights[d]).expect("weights are positive and finite");
        let bucket = dist.sample(rng) as u32;
        *slot = (bucket < card).then_some(bucket);
    }
    let mut continuous = [0.0; NUM_CONTINUOUS];
    for (d, c) in continuous.iter_mut().enumerate() {
        let r = layout.range(d);
        let normal = Normal::new(params.means[d], params.stddevs[d]).expect("stddev is positive");
        *c = (0..MAX_REJECTIONS)
            .map(|_| normal.sample(rng))
            .find(|v| r.contains(*v))
            .unwrap_or_else(|| r.clamp(params.means[d]));
    }
    Modification {
        discrete,
        continuous,
    }
}
