//! Flat named parameter storage and its binding onto a tape.
//!
//! All parameters of a model live in one contiguous `f64` buffer with a
//! name → (offset, shape) index, which is also the checkpoint layout.
//! The optimizer and momentum updates operate on the flat buffer; a
//! training step binds each named block onto the tape as a leaf.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::tape::{Tape, Var};
use crate::numerics::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ordered, named, flat parameter buffer.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    index: BTreeMap<String, usize>,
    data: Vec<f64>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    /// Register a parameter block. Names must be unique; registration
    /// order fixes the flat layout.
    pub fn add(&mut self, name: &str, shape: Vec<usize>, values: Vec<f64>) {
        let len: usize = shape.iter().product();
        assert_eq!(len, values.len(), "param {}: shape/value mismatch", name);
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter name {}",
            name
        );
        let offset = self.data.len();
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push(ParamEntry {
            name: name.to_string(),
            offset,
            shape,
        });
        self.data.extend_from_slice(&values);
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn n_params(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn entry(&self, name: &str) -> Option<&ParamEntry> {
        self.index.get(name).map(|&i| &self.entries[i])
    }

    pub fn get(&self, name: &str) -> &[f64] {
        let e = self.entry(name).unwrap_or_else(|| panic!("unknown parameter {}", name));
        &self.data[e.offset..e.offset + e.len()]
    }

    pub fn get_mut(&mut self, name: &str) -> &mut [f64] {
        let e = self
            .entry(name)
            .unwrap_or_else(|| panic!("unknown parameter {}", name))
            .clone();
        &mut self.data[e.offset..e.offset + e.len()]
    }

    pub fn tensor(&self, name: &str) -> Tensor {
        let e = self.entry(name).unwrap_or_else(|| panic!("unknown parameter {}", name));
        Tensor::new(e.shape.clone(), self.data[e.offset..e.offset + e.len()].to_vec())
    }

    /// New store holding only the entries whose name matches `keep`.
    pub fn subset(&self, keep: impl Fn(&str) -> bool) -> ParamStore {
        let mut out = ParamStore::new();
        for e in &self.entries {
            if keep(&e.name) {
                out.add(&e.name, e.shape.clone(), self.data[e.offset..e.offset + e.len()].to_vec());
            }
        }
        out
    }

    /// Same entry names, shapes, and layout.
    pub fn congruent_with(&self, other: &ParamStore) -> bool {
        self.entries == other.entries
    }

    /// Number of scalars in entries matching `pred`.
    pub fn count_matching(&self, pred: impl Fn(&str) -> bool) -> usize {
        self.entries
            .iter()
            .filter(|e| pred(&e.name))
            .map(|e| e.len())
            .sum()
    }
}

/// Exponential-moving-average update of a key-side store toward a
/// query-side store: key ← m·key + (1−m)·query, elementwise over every
/// entry of `key` (each must exist in `query` with an identical shape).
pub fn momentum_update(key: &mut ParamStore, query: &ParamStore, momentum: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&momentum) {
        return Err(Error::contract(format!("momentum {} outside [0,1]", momentum)));
    }
    let mut updates: Vec<(usize, usize, usize)> = Vec::with_capacity(key.entries.len());
    for e in &key.entries {
        let q = query.entry(&e.name).ok_or_else(|| {
            Error::contract(format!("momentum_update: query side missing {}", e.name))
        })?;
        if q.shape != e.shape {
            return Err(Error::contract(format!(
                "momentum_update: {} has shape {:?} vs {:?}",
                e.name, e.shape, q.shape
            )));
        }
        updates.push((e.offset, q.offset, e.len()));
    }
    for (ko, qo, len) in updates {
        for i in 0..len {
            key.data[ko + i] = momentum * key.data[ko + i] + (1.0 - momentum) * query.data[qo + i];
        }
    }
    Ok(())
}

/// Tape handles for each bound parameter of one model.
#[derive(Debug, Default)]
pub struct ParamBinding {
    vars: BTreeMap<String, Var>,
}

impl ParamBinding {
    /// Bind every parameter as a leaf (trainable) or constant.
    pub fn bind_all(tape: &mut Tape, store: &ParamStore, trainable: bool) -> ParamBinding {
        Self::bind_where(tape, store, |_| trainable)
    }

    /// Bind with per-parameter trainability (frozen fine-tuning).
    pub fn bind_where(
        tape: &mut Tape,
        store: &ParamStore,
        trainable: impl Fn(&str) -> bool,
    ) -> ParamBinding {
        let mut vars = BTreeMap::new();
        for e in store.entries() {
            let t = store.tensor(&e.name);
            let var = if trainable(&e.name) {
                tape.leaf(t)
            } else {
                tape.constant(t)
            };
            vars.insert(e.name.clone(), var);
        }
        ParamBinding { vars }
    }

    pub fn var(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter {} not bound", name))
    }

    /// Flat gradient buffer aligned with `store`'s layout; parameters
    /// the loss never reached read as zero.
    pub fn extract_grads(&self, tape: &Tape, store: &ParamStore) -> Vec<f64> {
        let mut out = vec![0.0; store.n_params()];
        for e in store.entries() {
            if let Some(var) = self.vars.get(&e.name) {
                if let Some(g) = tape.grad(*var) {
                    out[e.offset..e.offset + e.len()].copy_from_slice(g);
                }
            }
        }
        out
    }
}

/// Weight initialization helpers.
pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Vec<f64> {
    (0..rows * cols)
        .map(|_| std * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

pub fn fan_in_std(fan_in: usize) -> f64 {
    1.0 / (fan_in as f64).sqrt()
}
