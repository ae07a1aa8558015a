//! `synth`: generate recordings, segment them, and write the graph
//! dataset directory.

use std::path::Path;

use disgcmae::error::Result;
use disgcmae::rng::StreamRng;
use disgcmae::synth::{
    build_graph, generate_recording, segment, write_dataset, DatasetManifest, GraphSample,
};
use rayon::prelude::*;

use crate::config::ExperimentConfig;

pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let synth = &cfg.synth;
    synth.spec.validate()?;
    let n_subjects = synth.spec.n_subjects_per_class;
    if n_subjects == 0 {
        eprintln!("warning: n_subjects_per_class is 0; writing an empty dataset");
    }

    let root = StreamRng::new(cfg.seed).child(4);
    let subjects: Vec<(usize, u64)> = (0..2usize)
        .flat_map(|class| (0..n_subjects).map(move |idx| (class, idx as u64)))
        .collect();

    // per-subject graphs, parallel with per-subject seeds
    let per_subject: Vec<Vec<GraphSample>> = subjects
        .par_iter()
        .map(|&(class, idx)| {
            use rand::Rng;
            let subject_seed: u64 = root.stream(&[class as u64, idx]).gen();
            let rec = generate_recording(&synth.spec, class, subject_seed);
            let mut recs = segment(&rec, synth.window_s, synth.overlap_s)?;
            if synth.include_full {
                recs.push(rec);
            }
            recs.iter()
                .map(|r| {
                    Ok(GraphSample {
                        graph: build_graph(r, &synth.band, synth.n_bins, synth.theta_a)?,
                        subject_id: r.subject_id.clone(),
                        sample_id: 0, // assigned below in deterministic order
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut samples: Vec<GraphSample> = per_subject.into_iter().flatten().collect();
    for (k, s) in samples.iter_mut().enumerate() {
        s.sample_id = k as u64;
    }
    let counts = [
        samples.iter().filter(|s| s.graph.label == Some(0)).count(),
        samples.iter().filter(|s| s.graph.label == Some(1)).count(),
    ];

    let manifest = DatasetManifest {
        format_version: 1,
        seed: cfg.seed,
        n_samples: samples.len(),
        channels: synth.spec.channels,
        feat_dim: synth.n_bins,
        montage_labels: (0..synth.spec.channels).map(|c| format!("ch{:03}", c)).collect(),
        band: synth.band.clone(),
        n_bins: synth.n_bins,
        theta_a: synth.theta_a,
        synth: synth.spec.clone(),
        window_s: synth.window_s,
        overlap_s: synth.overlap_s,
        include_full: synth.include_full,
        counts_per_class: counts,
    };
    write_dataset(out, &manifest, &samples)?;
    println!(
        "wrote {} samples ({} class 0, {} class 1) to {}",
        samples.len(),
        counts[0],
        counts[1],
        out.display()
    );
    Ok(())
}
