//! Positive/negative pair selection between the teacher's and
//! student's learned adjacencies.
//!
//! Both matrices are min-max normalized and thresholded. In the
//! density-reduction case a retained pair is positive when directly
//! connected in the teacher's adjacency (1-hop) or connected through a
//! deleted mediator node (2-hop); a pair is negative when the student
//! connects it but the teacher does not (neither 1-hop nor 2-hop). In
//! the equal-node-set case (H2H) positives are the teacher's edges and
//! negatives the student's edges absent from the teacher.

use crate::error::{Error, Result};
use crate::graph::NodePartition;
use crate::numerics::tensor::Tensor;

/// Selected node pairs in LD-local indices, stored with i < j.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSets {
    pub positives: Vec<(usize, usize)>,
    pub negatives: Vec<(usize, usize)>,
    pub c_pos: usize,
    pub c_neg: usize,
}

fn minmax_threshold(a: &Tensor, theta: f64) -> Vec<bool> {
    let lo = a.data.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = a.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return vec![false; a.data.len()];
    }
    a.data.iter().map(|&v| (v - lo) / (hi - lo) > theta).collect()
}

/// Select positive and negative pairs per the topology-distillation
/// rule. `a_h` is the teacher's learned m×m adjacency, `a_l_learned`
/// the student's learned n×n adjacency, both nonnegative.
pub fn select_pairs(
    a_h: &Tensor,
    a_l_learned: &Tensor,
    partition: &NodePartition,
    theta: f64,
) -> Result<PairSets> {
    let m = partition.m();
    let n = partition.n();
    if a_h.shape != vec![m, m] {
        return Err(Error::contract(format!(
            "teacher adjacency {:?} does not match partition size {}",
            a_h.shape, m
        )));
    }
    if a_l_learned.shape != vec![n, n] {
        return Err(Error::contract(format!(
            "student adjacency {:?} does not match retained size {}",
            a_l_learned.shape, n
        )));
    }
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::contract(format!("theta {} outside [0,1)", theta)));
    }
    if a_h.data.iter().chain(&a_l_learned.data).any(|&v| v < 0.0) {
        return Err(Error::contract("adjacencies must be nonnegative".to_string()));
    }

    let bh = minmax_threshold(a_h, theta);
    let bl = minmax_threshold(a_l_learned, theta);
    let v_l = &partition.v_l;
    let v_d = &partition.v_d;

    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let (hi, hj) = (v_l[i], v_l[j]);
            let positive = if partition.is_h2h() {
                bh[hi * m + hj]
            } else {
                bh[hi * m + hj]
                    || v_d
                        .iter()
                        .any(|&k| bh[k * m + hi] && bh[k * m + hj])
            };
            if positive {
                positives.push((i, j));
            } else if bl[i * n + j] {
                negatives.push((i, j));
            }
        }
    }
    let (c_pos, c_neg) = (positives.len(), negatives.len());
    Ok(PairSets {
        positives,
        negatives,
        c_pos,
        c_neg,
    })
}
