//! Sliding-window segmentation, Pearson adjacency, and graph assembly.

use super::{bandpass, psd_features, Band, Recording};
use crate::error::{Error, Result};
use crate::graph::{DensityTier, EegGraph};
use crate::numerics::tensor::{self, Tensor};

/// Sliding windows of `window_s` seconds stepping by
/// `window_s − overlap_s`. Returns exactly
/// ⌊(total − window)/(window − overlap)⌋ + 1 segments; appending the
/// full-length recording is the caller's choice.
pub fn segment(rec: &Recording, window_s: f64, overlap_s: f64) -> Result<Vec<Recording>> {
    if !(window_s > overlap_s && overlap_s >= 0.0) {
        return Err(Error::contract(format!(
            "window {} s must exceed overlap {} s",
            window_s, overlap_s
        )));
    }
    let window = (window_s * rec.fs).round() as usize;
    let step = ((window_s - overlap_s) * rec.fs).round() as usize;
    let total = rec.timepoints();
    if total < window || window == 0 || step == 0 {
        return Err(Error::contract(format!(
            "recording of {} samples shorter than window {}",
            total, window
        )));
    }
    let count = (total - window) / step + 1;
    let ch = rec.channels();
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let start = k * step;
        let mut data = Vec::with_capacity(ch * window);
        for c in 0..ch {
            data.extend_from_slice(&rec.channel(c)[start..start + window]);
        }
        out.push(Recording {
            samples: Tensor::matrix(ch, window, data),
            fs: rec.fs,
            montage_labels: rec.montage_labels.clone(),
            subject_id: rec.subject_id.clone(),
            label: rec.label,
        });
    }
    Ok(out)
}

/// Absolute Pearson correlation between channels: symmetric, zero
/// diagonal, entries in [0,1]. Zero-variance channels get all-zero
/// correlations and are reported in the second return value.
pub fn pearson_adjacency(rec: &Recording) -> Result<(Tensor, Vec<usize>)> {
    let (ch, t) = rec.samples.dims2();
    if t < 2 {
        return Err(Error::contract("need at least 2 timepoints".to_string()));
    }
    // standardize rows; zero-variance rows become all-zero
    let mut z = vec![0.0; ch * t];
    let mut degenerate = Vec::new();
    for c in 0..ch {
        let row = rec.channel(c);
        let mean = row.iter().sum::<f64>() / t as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t as f64;
        if var <= 0.0 {
            degenerate.push(c);
            continue;
        }
        let sd = var.sqrt();
        for (k, &v) in row.iter().enumerate() {
            z[c * t + k] = (v - mean) / (sd * (t as f64).sqrt());
        }
    }
    let mut corr = tensor::matmul_nt(&z, &z, ch, t, ch);
    for i in 0..ch {
        for j in 0..ch {
            let v = if i == j { 0.0 } else { corr[i * ch + j].abs().min(1.0) };
            corr[i * ch + j] = v;
        }
    }
    // enforce exact symmetry against floating-point drift
    for i in 0..ch {
        for j in (i + 1)..ch {
            let v = corr[i * ch + j];
            corr[j * ch + i] = v;
        }
    }
    Ok((Tensor::matrix(ch, ch, corr), degenerate))
}

/// Build a graph from a recording: PSD node features and thresholded
/// Pearson adjacency, both computed on the band-passed signal.
pub fn build_graph(rec: &Recording, band: &Band, n_bins: usize, theta_a: f64) -> Result<EegGraph> {
    rec.validate()?;
    let filtered = bandpass(rec, band)?;
    let x = psd_features(&filtered, band, n_bins)?;
    let (mut a, _degenerate) = pearson_adjacency(&filtered)?;
    for v in a.data.iter_mut() {
        if *v < theta_a {
            *v = 0.0;
        }
    }
    let graph = EegGraph {
        x,
        a,
        node_ids: (0..rec.channels()).collect(),
        density_tier: DensityTier::Hd,
        label: rec.label,
    };
    graph.validate()?;
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;
    use crate::synth::{generate_recording, SynthSpec};
    use rand_distr::StandardNormal;
    use rand::Rng;

    fn rec_of(data: Vec<f64>, ch: usize, fs: f64) -> Recording {
        let t = data.len() / ch;
        Recording {
            samples: Tensor::matrix(ch, t, data),
            fs,
            montage_labels: (0..ch).map(|c| format!("ch{:03}", c)).collect(),
            subject_id: "t".into(),
            label: None,
        }
    }

    #[test]
    fn segment_counts_match_formula() {
        // (200 s, 50 s, 20 s) -> 6 segments
        let rec = rec_of(vec![0.0; 2 * 2000], 2, 10.0);
        let segs = segment(&rec, 50.0, 20.0).unwrap();
        assert_eq!(segs.len(), 6);
        assert_eq!(segs[0].timepoints(), 500);
        // (50 s, 50 s, 20 s) -> 1 segment
        let rec = rec_of(vec![0.0; 2 * 500], 2, 10.0);
        assert_eq!(segment(&rec, 50.0, 20.0).unwrap().len(), 1);
    }

    #[test]
    fn segment_contents_step_correctly() {
        let t = 100;
        let data: Vec<f64> = (0..t).map(|k| k as f64).collect();
        let rec = rec_of(data, 1, 1.0);
        let segs = segment(&rec, 30.0, 10.0).unwrap();
        // step 20: starts at 0, 20, 40, 60; (100-30)/20+1 = 4
        assert_eq!(segs.len(), 4);
        assert_eq!(segs[1].channel(0)[0], 20.0);
        assert_eq!(segs[3].channel(0)[29], 89.0);
    }

    #[test]
    fn segment_preconditions() {
        let rec = rec_of(vec![0.0; 100], 1, 1.0);
        assert!(segment(&rec, 20.0, 20.0).is_err());
        assert!(segment(&rec, 20.0, 25.0).is_err());
        assert!(segment(&rec, 200.0, 0.0).is_err());
    }

    #[test]
    fn pearson_identity_and_sign_convention() {
        let a: Vec<f64> = (0..50).map(|k| (k as f64 * 0.7).sin()).collect();
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        let mut data = a.clone();
        data.extend_from_slice(&a);
        data.extend_from_slice(&neg);
        let rec = rec_of(data, 3, 50.0);
        let (adj, degen) = pearson_adjacency(&rec).unwrap();
        assert!(degen.is_empty());
        assert!((adj.at(0, 1) - 1.0).abs() < 1e-12, "copy correlates at 1");
        assert!((adj.at(0, 2) - 1.0).abs() < 1e-12, "negated copy correlates at |−1| = 1");
        assert_eq!(adj.at(0, 0), 0.0);
        assert_eq!(adj.at(1, 1), 0.0);
    }

    #[test]
    fn pearson_white_noise_is_nearly_uncorrelated() {
        let mut rng = StreamRng::new(9).stream(&[0]);
        let t = 50_000;
        let data: Vec<f64> = (0..4 * t).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let rec = rec_of(data, 4, 100.0);
        let (adj, _) = pearson_adjacency(&rec).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(adj.at(i, j) < 0.05, "corr({},{}) = {}", i, j, adj.at(i, j));
                }
            }
        }
    }

    #[test]
    fn pearson_zero_variance_channel_reported() {
        let mut data: Vec<f64> = (0..60).map(|k| (k as f64).cos()).collect();
        data.extend_from_slice(&vec![3.5; 60]);
        let rec = rec_of(data, 2, 10.0);
        let (adj, degen) = pearson_adjacency(&rec).unwrap();
        assert_eq!(degen, vec![1]);
        assert_eq!(adj.at(0, 1), 0.0);
    }

    #[test]
    fn build_graph_threshold_extremes() {
        let spec = SynthSpec {
            channels: 6,
            fs: 100.0,
            duration_s: 6.0,
            group_a: vec![0, 1],
            group_b: vec![4, 5],
            bridge: vec![],
            ..SynthSpec::default()
        };
        let rec = generate_recording(&spec, 1, 3);
        let band = Band::alpha();
        let dense = build_graph(&rec, &band, 4, 0.0).unwrap();
        let n = dense.n_nodes();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    assert!(dense.a.at(i, j) > 0.0, "θ=0 keeps the graph dense off-diagonal");
                }
            }
        }
        let empty = build_graph(&rec, &band, 4, 1.01).unwrap();
        assert!(empty.a.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn build_graph_deterministic() {
        let spec = SynthSpec {
            channels: 4,
            fs: 100.0,
            duration_s: 5.0,
            group_a: vec![0],
            group_b: vec![3],
            bridge: vec![],
            ..SynthSpec::default()
        };
        let rec = generate_recording(&spec, 0, 21);
        let band = Band::alpha();
        let g1 = build_graph(&rec, &band, 4, 0.3).unwrap();
        let g2 = build_graph(&rec, &band, 4, 0.3).unwrap();
        assert_eq!(g1.x, g2.x);
        assert_eq!(g1.a, g2.a);
    }

    #[test]
    fn class1_retains_cross_group_edge_at_default_threshold() {
        let spec = SynthSpec {
            channels: 8,
            fs: 100.0,
            duration_s: 10.0,
            group_a: vec![0, 1],
            group_b: vec![6, 7],
            bridge: vec![1],
            coupling_strength: [0.0, 0.8],
            noise_amp: 1.0,
            ..SynthSpec::default()
        };
        let band = Band::alpha();
        let mut hits = 0;
        let trials = 100;
        for seed in 0..trials {
            let rec = generate_recording(&spec, 1, 500 + seed);
            let g = build_graph(&rec, &band, 4, 0.3).unwrap();
            let mut found = false;
            for &i in &spec.group_a {
                for &j in &spec.group_b {
                    if g.a.at(i, j) > 0.0 {
                        found = true;
                    }
                }
            }
            if found {
                hits += 1;
            }
        }
        assert_eq!(hits, trials, "every class-1 graph keeps an A-B edge at θ=0.3");
    }
}
