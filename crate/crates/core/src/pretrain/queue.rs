//! FIFO key queue shared by the teacher and student: every enqueued
//! embedding is a candidate negative for both encoders' queries.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::graph::{EncoderSide, ViewKind};
use crate::numerics::tensor::Tensor;

/// One stored key embedding with provenance.
#[derive(Debug, Clone)]
pub struct QueueEntry {
    pub embedding: Vec<f64>,
    pub source_id: u64,
    pub origin: EncoderSide,
    pub kind: ViewKind,
}

/// Bounded FIFO of unit-norm key embeddings.
#[derive(Debug, Clone)]
pub struct KeyQueue {
    capacity: usize,
    entries: VecDeque<QueueEntry>,
}

impl KeyQueue {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "contract violation: queue capacity must be positive");
        KeyQueue {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &QueueEntry> {
        self.entries.iter()
    }

    /// Append keys in order, evicting the oldest entries beyond
    /// capacity. Non-unit keys are a contract violation.
    pub fn enqueue(&mut self, keys: Vec<QueueEntry>) -> Result<()> {
        for key in &keys {
            let norm: f64 = key.embedding.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(Error::contract(format!(
                    "key for source {} has norm {} (must be unit)",
                    key.source_id, norm
                )));
            }
        }
        for key in keys {
            if self.entries.len() == self.capacity {
                self.entries.pop_front();
            }
            self.entries.push_back(key);
        }
        Ok(())
    }

    /// All entries whose source differs from `source_id`, stacked into
    /// an N×C matrix for one-shot similarity computation.
    pub fn negatives(&self, source_id: u64) -> Option<Tensor> {
        let negs: Vec<&QueueEntry> = self.entries.iter().filter(|e| e.source_id != source_id).collect();
        let n = negs.len();
        let c = negs.first()?.embedding.len();
        let mut data = Vec::with_capacity(n * c);
        for e in negs {
            data.extend_from_slice(&e.embedding);
        }
        Some(Tensor::matrix(n, c, data))
    }
}
