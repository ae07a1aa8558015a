//! The EEG graph data model: graphs, density partitions, augmented
//! views, and masked graphs.

mod augment;
mod reduce;

pub use augment::{augment, mask_graph, split_reconstructed};
pub use reduce::{default_keep_set, read_keep_set, reduce_density, write_keep_set, NodePartition};

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

/// Electrode-density tier of a montage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum DensityTier {
    #[serde(rename = "HD")]
    Hd,
    #[serde(rename = "MD")]
    Md,
    #[serde(rename = "LD")]
    Ld,
}

impl std::fmt::Display for DensityTier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DensityTier::Hd => write!(f, "HD"),
            DensityTier::Md => write!(f, "MD"),
            DensityTier::Ld => write!(f, "LD"),
        }
    }
}

/// A graph sample: node feature matrix `x` (n×d), adjacency `a` (n×n),
/// and the global electrode index of each node.
#[derive(Debug, Clone)]
pub struct EegGraph {
    pub x: Tensor,
    pub a: Tensor,
    pub node_ids: Vec<usize>,
    pub density_tier: DensityTier,
    pub label: Option<u32>,
}

impl EegGraph {
    pub fn n_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn feat_dim(&self) -> usize {
        self.x.dims2().1
    }

    /// Check the structural invariants: adjacency square, symmetric,
    /// zero-diagonal, nonnegative; node ids distinct and matching n.
    pub fn validate(&self) -> Result<()> {
        let (n, d) = self.x.dims2();
        let (ar, ac) = self.a.dims2();
        if ar != n || ac != n {
            return Err(Error::data(format!(
                "adjacency {}x{} does not match {} nodes",
                ar, ac, n
            )));
        }
        if d == 0 {
            return Err(Error::data("empty feature dimension"));
        }
        if self.node_ids.len() != n {
            return Err(Error::data("node_ids length mismatch"));
        }
        let mut seen = std::collections::HashSet::new();
        if !self.node_ids.iter().all(|id| seen.insert(*id)) {
            return Err(Error::data("duplicate node ids"));
        }
        for i in 0..n {
            if self.a.at(i, i) != 0.0 {
                return Err(Error::data(format!("nonzero diagonal at node {}", i)));
            }
            for j in 0..n {
                let v = self.a.at(i, j);
                if !(v >= 0.0) {
                    return Err(Error::data(format!("negative adjacency at ({},{})", i, j)));
                }
                if v != self.a.at(j, i) {
                    return Err(Error::data(format!("asymmetric adjacency at ({},{})", i, j)));
                }
            }
        }
        if !self.x.all_finite() {
            return Err(Error::data("non-finite feature"));
        }
        Ok(())
    }

    /// Undirected edges (i < j) with positive weight.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n_nodes();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.a.at(i, j) > 0.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Which encoder a view is destined for / came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum EncoderSide {
    Teacher,
    Student,
}

/// Role of a view in the contrastive pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ViewKind {
    Query,
    Key,
    ReconstructedQuery,
    ReconstructedKey,
}

impl ViewKind {
    pub fn reconstructed(self) -> ViewKind {
        match self {
            ViewKind::Query | ViewKind::ReconstructedQuery => ViewKind::ReconstructedQuery,
            ViewKind::Key | ViewKind::ReconstructedKey => ViewKind::ReconstructedKey,
        }
    }

    pub fn is_reconstructed(self) -> bool {
        matches!(self, ViewKind::ReconstructedQuery | ViewKind::ReconstructedKey)
    }
}

/// An augmented (or reconstructed) variant of a source graph, with drop
/// provenance. `source_id` is stable across every view of one sample;
/// it is what defines positives downstream.
#[derive(Debug, Clone)]
pub struct GraphView {
    pub graph: EegGraph,
    pub kind: ViewKind,
    pub source_id: u64,
    pub origin: EncoderSide,
    pub dropped_nodes: Vec<usize>,
    pub dropped_edges: Vec<(usize, usize)>,
}

/// A view with dropped-node features replaced by a shared learnable
/// mask embedding, plus the indicator of which rows were substituted.
#[derive(Debug, Clone)]
pub struct MaskedGraph {
    pub graph: EegGraph,
    pub masked: Vec<bool>,
    pub kind: ViewKind,
    pub source_id: u64,
    pub origin: EncoderSide,
}

impl MaskedGraph {
    pub fn n_masked(&self) -> usize {
        self.masked.iter().filter(|&&m| m).count()
    }
}
