//! Dataset directory format: `manifest.json` plus one `sample_<k>.json`
//! per graph. Floats in sample files are written with 17 significant
//! digits so values round-trip exactly; rewriting the same dataset is
//! byte-identical.

use std::fmt::Write as _;
use std::path::Path;

use super::{Band, SynthSpec};
use crate::error::{Error, Result};
use crate::graph::{DensityTier, EegGraph};
use crate::numerics::tensor::Tensor;

/// A stored graph with its provenance.
#[derive(Debug, Clone)]
pub struct GraphSample {
    pub graph: EegGraph,
    pub subject_id: String,
    pub sample_id: u64,
}

/// Top-level dataset description, serialized as `manifest.json`.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub seed: u64,
    pub n_samples: usize,
    pub channels: usize,
    pub feat_dim: usize,
    pub montage_labels: Vec<String>,
    pub band: Band,
    pub n_bins: usize,
    pub theta_a: f64,
    pub synth: SynthSpec,
    pub window_s: f64,
    pub overlap_s: f64,
    pub include_full: bool,
    pub counts_per_class: [usize; 2],
}

#[derive(serde::Deserialize)]
struct SampleFile {
    n: usize,
    d: usize,
    x: Vec<f64>,
    a: Vec<f64>,
    label: Option<u32>,
    subject_id: String,
    density_tier: DensityTier,
}

fn push_floats(out: &mut String, values: &[f64]) {
    out.push('[');
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write!(out, "{:.16e}", v).expect("write to string");
    }
    out.push(']');
}

fn sample_json(sample: &GraphSample) -> String {
    let g = &sample.graph;
    let (n, d) = g.x.dims2();
    let mut out = String::with_capacity((n * d + n * n) * 26 + 256);
    out.push_str("{\n");
    write!(out, "  \"n\": {},\n  \"d\": {},\n", n, d).unwrap();
    out.push_str("  \"x\": ");
    push_floats(&mut out, &g.x.data);
    out.push_str(",\n  \"a\": ");
    push_floats(&mut out, &g.a.data);
    match g.label {
        Some(l) => write!(out, ",\n  \"label\": {},\n", l).unwrap(),
        None => out.push_str(",\n  \"label\": null,\n"),
    }
    write!(
        out,
        "  \"subject_id\": {},\n  \"density_tier\": \"{}\"\n}}\n",
        serde_json::to_string(&sample.subject_id).expect("string serializes"),
        g.density_tier
    )
    .unwrap();
    out
}

/// Write a dataset directory, creating it if needed.
pub fn write_dataset(dir: &Path, manifest: &DatasetManifest, samples: &[GraphSample]) -> Result<()> {
    if manifest.n_samples != samples.len() {
        return Err(Error::contract(format!(
            "manifest says {} samples but {} given",
            manifest.n_samples,
            samples.len()
        )));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))?;
    for (k, sample) in samples.iter().enumerate() {
        let path = dir.join(format!("sample_{}.json", k));
        std::fs::write(&path, sample_json(sample)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Load a dataset directory, validating every graph.
pub fn load_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<GraphSample>)> {
    let manifest_path = dir.join("manifest.json");
    let raw = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&raw)
        .map_err(|e| Error::data(format!("{}: {}", manifest_path.display(), e)))?;
    let mut samples = Vec::with_capacity(manifest.n_samples);
    for k in 0..manifest.n_samples {
        let path = dir.join(format!("sample_{}.json", k));
        let raw = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let file: SampleFile =
            serde_json::from_str(&raw).map_err(|e| Error::data(format!("{}: {}", path.display(), e)))?;
        if file.x.len() != file.n * file.d || file.a.len() != file.n * file.n {
            return Err(Error::data(format!(
                "{}: array lengths disagree with n={} d={}",
                path.display(),
                file.n,
                file.d
            )));
        }
        let graph = EegGraph {
            x: Tensor::matrix(file.n, file.d, file.x),
            a: Tensor::matrix(file.n, file.n, file.a),
            node_ids: (0..file.n).collect(),
            density_tier: file.density_tier,
            label: file.label,
        };
        graph
            .validate()
            .map_err(|e| Error::data(format!("{}: {}", path.display(), e)))?;
        samples.push(GraphSample {
            graph,
            subject_id: file.subject_id,
            sample_id: k as u64,
        });
    }
    Ok((manifest, samples))
}
