//! Contrastive augmentation (node/edge dropping) and node masking.
//!
//! A node drop marks the node: the view carries zeroed features, and
//! [`mask_graph`] later substitutes the learnable mask embedding for
//! the autoencoder branch. Edge drops zero both symmetric adjacency
//! entries and are not individually reconstructed.

use rand::Rng;

use super::{EegGraph, EncoderSide, GraphView, MaskedGraph, ViewKind};
use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

/// Two independent stochastic views (query, key) of `g`. Node dropping
/// selects ⌊ratio·n⌋ nodes uniformly without replacement; edge dropping
/// removes ⌊ratio·|E|⌋ undirected edges. Both views share `source_id`.
pub fn augment(
    g: &EegGraph,
    source_id: u64,
    origin: EncoderSide,
    node_drop_ratio: f64,
    edge_drop_ratio: f64,
    rng: &mut impl Rng,
) -> (GraphView, GraphView) {
    assert!(
        (0.0..1.0).contains(&node_drop_ratio) && (0.0..1.0).contains(&edge_drop_ratio),
        "contract violation: drop ratios must lie in [0,1)"
    );
    let query = one_view(g, source_id, origin, ViewKind::Query, node_drop_ratio, edge_drop_ratio, rng);
    let key = one_view(g, source_id, origin, ViewKind::Key, node_drop_ratio, edge_drop_ratio, rng);
    (query, key)
}

fn one_view(
    g: &EegGraph,
    source_id: u64,
    origin: EncoderSide,
    kind: ViewKind,
    node_drop_ratio: f64,
    edge_drop_ratio: f64,
    rng: &mut impl Rng,
) -> GraphView {
    let n = g.n_nodes();
    let d = g.feat_dim();

    let n_drop = (node_drop_ratio * n as f64).floor() as usize;
    let mut dropped_nodes: Vec<usize> = rand::seq::index::sample(rng, n, n_drop).into_vec();
    dropped_nodes.sort_unstable();

    let edges = g.edges();
    let e_drop = (edge_drop_ratio * edges.len() as f64).floor() as usize;
    let mut picked: Vec<usize> = rand::seq::index::sample(rng, edges.len(), e_drop).into_vec();
    picked.sort_unstable();
    let dropped_edges: Vec<(usize, usize)> = picked.iter().map(|&k| edges[k]).collect();

    let mut x = g.x.data.clone();
    for &i in &dropped_nodes {
        for v in &mut x[i * d..(i + 1) * d] {
            *v = 0.0;
        }
    }
    let mut a = g.a.data.clone();
    for &(i, j) in &dropped_edges {
        a[i * n + j] = 0.0;
        a[j * n + i] = 0.0;
    }

    GraphView {
        graph: EegGraph {
            x: Tensor::matrix(n, d, x),
            a: Tensor::matrix(n, n, a),
            node_ids: g.node_ids.clone(),
            density_tier: g.density_tier,
            label: g.label,
        },
        kind,
        source_id,
        origin,
        dropped_nodes,
        dropped_edges,
    }
}

/// Substitute the shared learnable mask embedding for the features of
/// every dropped node, leaving other rows untouched.
pub fn mask_graph(view: &GraphView, mask_embedding: &[f64]) -> Result<MaskedGraph> {
    let d = view.graph.feat_dim();
    if mask_embedding.len() != d {
        return Err(Error::contract(format!(
            "mask embedding has dim {} but features have dim {}",
            mask_embedding.len(),
            d
        )));
    }
    let n = view.graph.n_nodes();
    let mut masked = vec![false; n];
    let mut x = view.graph.x.data.clone();
    for &i in &view.dropped_nodes {
        masked[i] = true;
        x[i * d..(i + 1) * d].copy_from_slice(mask_embedding);
    }
    Ok(MaskedGraph {
        graph: EegGraph {
            x: Tensor::matrix(n, d, x),
            a: view.graph.a.clone(),
            node_ids: view.graph.node_ids.clone(),
            density_tier: view.graph.density_tier,
            label: view.graph.label,
        },
        masked,
        kind: view.kind,
        source_id: view.source_id,
        origin: view.origin,
    })
}

/// Partition a batch of reconstructed views into (queries, keys),
/// preserving provenance. Non-reconstructed kinds are a contract
/// violation.
pub fn split_reconstructed(batch: Vec<GraphView>) -> Result<(Vec<GraphView>, Vec<GraphView>)> {
    let mut queries = Vec::new();
    let mut keys = Vec::new();
    for view in batch {
        match view.kind {
            ViewKind::ReconstructedQuery => queries.push(view),
            ViewKind::ReconstructedKey => keys.push(view),
            other => {
                return Err(Error::contract(format!(
                    "split_reconstructed expects reconstructed views, got {:?}",
                    other
                )))
            }
        }
    }
    Ok((queries, keys))
}
