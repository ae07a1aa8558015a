//! Teacher and student graph encoders: dynamic-adjacency GCN and graph
//! transformer families, plus the reconstruction decoder, readout and
//! classification heads, momentum key-side updates, and checkpointing.

mod checkpoint;
mod dgcnn;
mod gformer;
mod heads;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use dgcnn::dynamic_edge_weights;
pub use heads::{classify, decode, readout_project};
pub use params::{momentum_update, normal_matrix, ParamBinding, ParamEntry, ParamStore};

use crate::error::{Error, Result};
use crate::graph::MaskedGraph;
use crate::numerics::tape::{Tape, Var};
use crate::numerics::tensor::Tensor;
use crate::rng::StreamRng;

/// Encoder architecture family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderFamily {
    Dgcnn,
    Gformer,
}

/// Named size tier with fixed dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelTier {
    Tiny,
    Large,
}

/// Architecture hyperparameters of one encoder.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EncoderConfig {
    pub family: EncoderFamily,
    pub layers: usize,
    pub hidden_dim: usize,
    pub heads: usize,
    pub position_embedding: bool,
    pub theta_dyn: f64,
}

impl EncoderConfig {
    /// Tier dimensions: large = 8 layers × 128 dims (8 heads), tiny =
    /// 4 layers × 64 dims (4 heads). Position embeddings only for the
    /// transformer family.
    pub fn from_tier(family: EncoderFamily, tier: ModelTier) -> EncoderConfig {
        let (layers, hidden_dim, heads) = match tier {
            ModelTier::Large => (8, 128, 8),
            ModelTier::Tiny => (4, 64, 4),
        };
        EncoderConfig {
            family,
            layers,
            hidden_dim,
            heads,
            position_embedding: family == EncoderFamily::Gformer,
            theta_dyn: 0.5,
        }
    }

    /// Arbitrary dimensions for desk-scale or test runs.
    pub fn custom(family: EncoderFamily, layers: usize, hidden_dim: usize, heads: usize) -> EncoderConfig {
        EncoderConfig {
            family,
            layers,
            hidden_dim,
            heads,
            position_embedding: family == EncoderFamily::Gformer,
            theta_dyn: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden_dim == 0 {
            return Err(Error::config("encoder needs at least one layer and dim".to_string()));
        }
        if self.family == EncoderFamily::Gformer && self.hidden_dim % self.heads != 0 {
            return Err(Error::config(format!(
                "heads {} must divide hidden dim {}",
                self.heads, self.hidden_dim
            )));
        }
        Ok(())
    }
}

/// Full model shape: encoder plus data dimensions shared by the heads.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    /// Node feature dimension d.
    pub feat_dim: usize,
    /// Size of the global electrode table (position embeddings are
    /// indexed by global node id so density tiers share rows).
    pub n_electrodes: usize,
    pub contrastive_dim: usize,
    pub n_classes: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.feat_dim == 0 || self.n_electrodes == 0 || self.contrastive_dim == 0 || self.n_classes < 2 {
            return Err(Error::config("degenerate model dimensions".to_string()));
        }
        Ok(())
    }
}

/// Encoder output: node embeddings on the tape plus the learned
/// adjacency extracted from the last layer (dynamic gate values for
/// the GCN, head-averaged symmetrized attention for the transformer;
/// diagonal zeroed).
pub struct EncodeOut {
    pub nodes: Var,
    pub learned_adj: Tensor,
}

/// A parameter set with its configuration.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

/// Prefixes of the key-side (momentum) parameter subtree: everything a
/// momentum key encoder needs to embed a view. Decoder and classifier
/// stay query-side only.
pub const MOMENTUM_PREFIXES: [&str; 3] = ["enc.", "proj.", "mask_emb"];

pub fn is_momentum_param(name: &str) -> bool {
    MOMENTUM_PREFIXES.iter().any(|p| name.starts_with(p))
}

impl Model {
    /// Initialize all parameters deterministically from `rng`.
    pub fn init(config: ModelConfig, rng: &StreamRng) -> Result<Model> {
        config.validate()?;
        let d = config.feat_dim;
        let dim = config.encoder.hidden_dim;
        let c = config.contrastive_dim;
        let mut store = ParamStore::new();
        let mut next_stream = 0u64;
        let mut add = |store: &mut ParamStore, name: &str, shape: Vec<usize>, std: f64| {
            let mut r = rng.stream(&[next_stream]);
            next_stream += 1;
            let n: usize = shape.iter().product();
            let values = if std == 0.0 {
                vec![0.0; n]
            } else {
                normal_matrix(&mut r, n, 1, std)
            };
            store.add(name, shape, values);
        };

        add(&mut store, "enc.in_proj.w", vec![dim, d], params::fan_in_std(d));
        add(&mut store, "enc.in_proj.b", vec![dim], 0.0);
        if config.encoder.position_embedding {
            add(&mut store, "enc.pos_emb", vec![config.n_electrodes, dim], 0.02);
        }
        match config.encoder.family {
            EncoderFamily::Dgcnn => {
                for l in 0..config.encoder.layers {
                    let std = params::fan_in_std(dim);
                    add(&mut store, &format!("enc.layer{}.p", l), vec![dim, dim], std);
                    add(&mut store, &format!("enc.layer{}.w_msg", l), vec![dim, dim], std);
                    add(&mut store, &format!("enc.layer{}.w", l), vec![dim, dim], std);
                    add(&mut store, &format!("enc.layer{}.b", l), vec![dim], 0.0);
                }
            }
            EncoderFamily::Gformer => {
                let ffn = 2 * dim;
                for l in 0..config.encoder.layers {
                    let std = params::fan_in_std(dim);
                    for w in ["wq", "wk", "wv", "wo"] {
                        add(&mut store, &format!("enc.layer{}.{}", l, w), vec![dim, dim], std);
                        add(&mut store, &format!("enc.layer{}.{}_b", l, w), vec![dim], 0.0);
                    }
                    store.add(&format!("enc.layer{}.ln1.g", l), vec![dim], vec![1.0; dim]);
                    add(&mut store, &format!("enc.layer{}.ln1.b", l), vec![dim], 0.0);
                    add(&mut store, &format!("enc.layer{}.ffn.w1", l), vec![ffn, dim], std);
                    add(&mut store, &format!("enc.layer{}.ffn.b1", l), vec![ffn], 0.0);
                    add(
                        &mut store,
                        &format!("enc.layer{}.ffn.w2", l),
                        vec![dim, ffn],
                        params::fan_in_std(ffn),
                    );
                    add(&mut store, &format!("enc.layer{}.ffn.b2", l), vec![dim], 0.0);
                    store.add(&format!("enc.layer{}.ln2.g", l), vec![dim], vec![1.0; dim]);
                    add(&mut store, &format!("enc.layer{}.ln2.b", l), vec![dim], 0.0);
                }
            }
        }
        // a zero mask token would pin masked nodes exactly onto the
        // dynamic-gate and ReLU boundaries at init; break the tie
        add(&mut store, "mask_emb", vec![d], 0.02);
        add(&mut store, "dec.w1", vec![dim, dim], params::fan_in_std(dim));
        add(&mut store, "dec.b1", vec![dim], 0.0);
        add(&mut store, "dec.w2", vec![d, dim], params::fan_in_std(dim));
        add(&mut store, "dec.b2", vec![d], 0.0);
        add(&mut store, "proj.w1", vec![dim, dim], params::fan_in_std(dim));
        add(&mut store, "proj.b1", vec![dim], 0.01);
        add(&mut store, "proj.w2", vec![c, dim], params::fan_in_std(dim));
        add(&mut store, "proj.b2", vec![c], 0.01);
        add(&mut store, "cls.w1", vec![dim, dim], params::fan_in_std(dim));
        add(&mut store, "cls.b1", vec![dim], 0.0);
        add(&mut store, "cls.w2", vec![config.n_classes, dim], params::fan_in_std(dim));
        add(&mut store, "cls.b2", vec![config.n_classes], 0.0);

        Ok(Model { config, params: store })
    }

    /// Key-side subtree for the momentum encoder.
    pub fn momentum_subset(&self) -> ParamStore {
        self.params.subset(is_momentum_param)
    }
}

/// Masked node features on the tape: the view's features with zeroed
/// dropped rows plus the learnable mask embedding broadcast into those
/// rows. Gradients reach the embedding through every masked row.
pub fn masked_features(tape: &mut Tape, binding: &ParamBinding, mg: &MaskedGraph) -> Var {
    let (n, d) = mg.graph.x.dims2();
    let mut base = mg.graph.x.data.clone();
    for (i, &is_masked) in mg.masked.iter().enumerate() {
        if is_masked {
            for v in &mut base[i * d..(i + 1) * d] {
                *v = 0.0;
            }
        }
    }
    let base = tape.constant(Tensor::matrix(n, d, base));
    let emb = binding.var("mask_emb");
    let scattered = broadcast_rows(tape, emb, &mg.masked);
    tape.add(base, scattered)
}

/// n×d matrix holding `vec` at flagged rows and zeros elsewhere.
fn broadcast_rows(tape: &mut Tape, vec: Var, rows: &[bool]) -> Var {
    let d = tape.value(vec).len();
    let n = rows.len();
    let vals = tape.value(vec).data.clone();
    let mut data = vec![0.0; n * d];
    for (i, &flag) in rows.iter().enumerate() {
        if flag {
            data[i * d..(i + 1) * d].copy_from_slice(&vals);
        }
    }
    let rows_owned = rows.to_vec();
    tape.custom(
        Tensor::matrix(n, d, data),
        &[vec],
        Box::new(move |g, acc| {
            acc.with(vec, d, |gv| {
                for (i, &flag) in rows_owned.iter().enumerate() {
                    if flag {
                        for j in 0..d {
                            gv[j] += g[i * d + j];
                        }
                    }
                }
            });
        }),
    )
}

/// Encode a masked graph with the configured family.
pub fn encode(tape: &mut Tape, binding: &ParamBinding, config: &ModelConfig, mg: &MaskedGraph) -> EncodeOut {
    let x = masked_features(tape, binding, mg);
    encode_features(tape, binding, config, x, mg)
}

/// Encode externally supplied node features (n×d on the tape) against
/// a graph's adjacency and node ids. Used both by [`encode`] and for
/// re-encoding reconstructed features.
pub fn encode_features(
    tape: &mut Tape,
    binding: &ParamBinding,
    config: &ModelConfig,
    x: Var,
    mg: &MaskedGraph,
) -> EncodeOut {
    match config.encoder.family {
        EncoderFamily::Dgcnn => dgcnn::gcn_forward(tape, binding, config, x),
        EncoderFamily::Gformer => gformer::gformer_forward(tape, binding, config, x, mg),
    }
}
