//! High→low density reduction: vertex-induced subgraphs with node-set
//! bookkeeping, and montage keep-set files.

use std::path::Path;

use super::{DensityTier, EegGraph};
use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

/// Index sets tying a low-density graph to its high-density parent.
/// All indices are local to the parent graph (0..m).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodePartition {
    /// The complete HD set, 0..m.
    pub v_h: Vec<usize>,
    /// Retained indices, in keep order.
    pub v_l: Vec<usize>,
    /// Deleted indices, ascending.
    pub v_d: Vec<usize>,
}

impl NodePartition {
    /// Build the partition of `0..m` induced by `keep`.
    pub fn new(m: usize, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::contract("keep set must be nonempty"));
        }
        let mut seen = vec![false; m];
        for &k in keep {
            if k >= m {
                return Err(Error::contract(format!("keep index {} out of range 0..{}", k, m)));
            }
            if seen[k] {
                return Err(Error::contract(format!("duplicate keep index {}", k)));
            }
            seen[k] = true;
        }
        let v_d: Vec<usize> = (0..m).filter(|&i| !seen[i]).collect();
        Ok(NodePartition {
            v_h: (0..m).collect(),
            v_l: keep.to_vec(),
            v_d,
        })
    }

    pub fn is_h2h(&self) -> bool {
        self.v_d.is_empty()
    }

    pub fn m(&self) -> usize {
        self.v_h.len()
    }

    pub fn n(&self) -> usize {
        self.v_l.len()
    }
}

/// Vertex-induced subgraph on `keep`, plus the partition. Retained edge
/// weights equal their parent values exactly.
pub fn reduce_density(
    g_h: &EegGraph,
    keep: &[usize],
    tier: DensityTier,
) -> Result<(EegGraph, NodePartition)> {
    let m = g_h.n_nodes();
    let partition = NodePartition::new(m, keep)?;
    let d = g_h.feat_dim();
    let n = keep.len();

    let mut x = Vec::with_capacity(n * d);
    for &i in keep {
        x.extend_from_slice(g_h.x.row(i));
    }
    let mut a = vec![0.0; n * n];
    for (r, &i) in keep.iter().enumerate() {
        for (c, &j) in keep.iter().enumerate() {
            a[r * n + c] = g_h.a.at(i, j);
        }
    }
    let node_ids = keep.iter().map(|&i| g_h.node_ids[i]).collect();
    let g_l = EegGraph {
        x: Tensor::matrix(n, d, x),
        a: Tensor::matrix(n, n, a),
        node_ids,
        density_tier: tier,
        label: g_h.label,
    };
    Ok((g_l, partition))
}

/// Fixed, deterministic, evenly spread keep-set of `n` indices out of
/// `m` channels.
pub fn default_keep_set(m: usize, n: usize) -> Vec<usize> {
    assert!(n >= 1 && n <= m, "keep-set size {} out of range 1..={}", n, m);
    (0..n).map(|i| i * m / n).collect()
}

pub fn write_keep_set(path: &Path, keep: &[usize]) -> Result<()> {
    let json = serde_json::to_string(keep).expect("keep-set serializes");
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn read_keep_set(path: &Path) -> Result<Vec<usize>> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&raw).map_err(|e| Error::data(format!("{}: {}", path.display(), e)))
}
