//! Shared builders for integration tests.

use disgcmae::encoders::{EncoderConfig, EncoderFamily, Model, ModelConfig};
use disgcmae::graph::{DensityTier, EegGraph};
use disgcmae::numerics::functional::relative_error;
use disgcmae::numerics::tensor::Tensor;
use disgcmae::rng::StreamRng;
use disgcmae::synth::GraphSample;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn micro_config(family: EncoderFamily, d: usize, dim: usize, layers: usize, heads: usize, n_electrodes: usize) -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig::custom(family, layers, dim, heads),
        feat_dim: d,
        n_electrodes,
        contrastive_dim: 4,
        n_classes: 2,
    }
}

pub fn micro_model(family: EncoderFamily, d: usize, n_electrodes: usize, seed: u64) -> Model {
    let dim = 4;
    let heads = 2;
    Model::init(micro_config(family, d, dim, 1, heads, n_electrodes), &StreamRng::new(seed)).unwrap()
}

/// Random graph with symmetric nonnegative adjacency, zero diagonal,
/// roughly half the off-diagonal pairs connected.
pub fn random_graph(n: usize, d: usize, rng: &mut impl Rng, label: Option<u32>) -> EegGraph {
    let x: Vec<f64> = (0..n * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen::<f64>() < 0.5 {
                let w = 0.2 + 0.8 * rng.gen::<f64>();
                a[i * n + j] = w;
                a[j * n + i] = w;
            }
        }
    }
    EegGraph {
        x: Tensor::matrix(n, d, x),
        a: Tensor::matrix(n, n, a),
        node_ids: (0..n).collect(),
        density_tier: DensityTier::Hd,
        label,
    }
}

pub fn random_samples(count: usize, n: usize, d: usize, seed: u64) -> Vec<GraphSample> {
    let root = StreamRng::new(seed);
    (0..count)
        .map(|k| {
            let mut rng = root.stream(&[k as u64]);
            let label = Some((k % 2) as u32);
            GraphSample {
                graph: random_graph(n, d, &mut rng, label),
                subject_id: format!("s{}", k),
                sample_id: k as u64,
            }
        })
        .collect()
}

/// Max elementwise relative error |a−b| / max(1, |a|, |b|).
pub fn max_rel_error(analytic: &[f64], fd: &[f64]) -> f64 {
    assert_eq!(analytic.len(), fd.len());
    analytic
        .iter()
        .zip(fd)
        .map(|(&a, &b)| relative_error(a, b))
        .fold(0.0, f64::max)
}
