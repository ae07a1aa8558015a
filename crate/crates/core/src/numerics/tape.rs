//! Eager reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Tape`] is the computation record for one training step: every
//! operation computes its value immediately and appends a node holding
//! that value plus a backward rule. Nodes reference only earlier nodes,
//! so the record is topologically ordered by construction and
//! [`Tape::backward`] is a single reverse sweep.
//!
//! Values of intermediate nodes are readable at any time (the tape is
//! eager), which the training loops use to detach key-side embeddings
//! and to extract learned adjacencies.
//!
//! Shape mismatches and index errors are programmer errors and panic;
//! only [`Tape::backward`] returns a `Result` (a non-scalar loss is a
//! contract violation a caller can hit with runtime-sized data).

use super::tensor::{self, Tensor};
use crate::error::{Error, Result};

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

type BackFn = Box<dyn FnOnce(&[f64], &mut Accumulator)>;

struct Node {
    value: Tensor,
    requires_grad: bool,
    back: Option<BackFn>,
}

/// Gradient buffers indexed by node id, populated during the reverse sweep.
pub struct Accumulator {
    grads: Vec<Option<Vec<f64>>>,
}

impl Accumulator {
    /// Add `contrib` into the gradient of `v`.
    pub fn add(&mut self, v: Var, contrib: &[f64]) {
        let slot = &mut self.grads[v.0];
        match slot {
            Some(g) => {
                debug_assert_eq!(g.len(), contrib.len());
                for (gi, ci) in g.iter_mut().zip(contrib) {
                    *gi += ci;
                }
            }
            None => *slot = Some(contrib.to_vec()),
        }
    }

    /// Mutate the gradient of `v` in place, zero-initialized at `len`.
    pub fn with(&mut self, v: Var, len: usize, f: impl FnOnce(&mut [f64])) {
        let g = self.grads[v.0].get_or_insert_with(|| vec![0.0; len]);
        debug_assert_eq!(g.len(), len);
        f(g);
    }
}

/// The computation record for one loss evaluation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of `v` from the last [`Tape::backward`] call.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Insert a differentiable leaf (a parameter).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, true, None)
    }

    /// Insert a non-differentiable leaf (data, masks, queue entries).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, false, None)
    }

    /// Copy of `a`'s value with the gradient path severed.
    pub fn detach(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.clone();
        self.push(value, false, None)
    }

    /// Extension point for fused operations defined outside this module.
    ///
    /// `parents` must all precede the new node; `backward` receives the
    /// node's output gradient and accumulates into parent gradients.
    pub fn custom(&mut self, value: Tensor, parents: &[Var], backward: BackFn) -> Var {
        let id = self.nodes.len();
        assert!(
            parents.iter().all(|p| p.0 < id),
            "internal error: op inputs must precede the node"
        );
        let requires = parents.iter().any(|&p| self.nodes[p.0].requires_grad);
        self.push(value, requires, if requires { Some(backward) } else { None })
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, back: Option<BackFn>) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            back,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|&v| self.nodes[v.0].requires_grad)
    }

    /// Reverse sweep from a scalar loss. Every reachable grad-requiring
    /// node receives dLoss/dNode; unreached leaves simply stay absent
    /// from the gradient map (read as zero).
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape
            )));
        }
        let mut acc = Accumulator {
            grads: vec![None; self.nodes.len()],
        };
        acc.grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if acc.grads[i].is_none() {
                continue;
            }
            if let Some(back) = self.nodes[i].back.take() {
                let g = acc.grads[i].take().expect("grad present");
                back(&g, &mut acc);
                acc.grads[i] = Some(g);
            }
        }
        self.grads = acc.grads;
        Ok(())
    }

    // ── elementwise ──────────────────────────────────────────────

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(va.shape, vb.shape, "add: shape mismatch");
        let data: Vec<f64> = va.data.iter().zip(&vb.data).map(|(x, y)| x + y).collect();
        let value = Tensor::new(va.shape.clone(), data);
        self.op(value, &[a, b], move |g, acc| {
            acc.add(a, g);
            acc.add(b, g);
        })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(va.shape, vb.shape, "sub: shape mismatch");
        let data: Vec<f64> = va.data.iter().zip(&vb.data).map(|(x, y)| x - y).collect();
        let value = Tensor::new(va.shape.clone(), data);
        self.op(value, &[a, b], move |g, acc| {
            acc.add(a, g);
            acc.with(b, g.len(), |gb| {
                for (x, y) in gb.iter_mut().zip(g) {
                    *x -= y;
                }
            });
        })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(va.shape, vb.shape, "mul: shape mismatch");
        let data: Vec<f64> = va.data.iter().zip(&vb.data).map(|(x, y)| x * y).collect();
        let value = Tensor::new(va.shape.clone(), data);
        if !self.any_grad(&[a, b]) {
            return self.constant(value);
        }
        let da = self.nodes[a.0].value.data.clone();
        let db = self.nodes[b.0].value.data.clone();
        self.op(value, &[a, b], move |g, acc| {
            acc.with(a, g.len(), |ga| {
                for i in 0..g.len() {
                    ga[i] += g[i] * db[i];
                }
            });
            acc.with(b, g.len(), |gb| {
                for i in 0..g.len() {
                    gb[i] += g[i] * da[i];
                }
            });
        })
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(va.shape, vb.shape, "div: shape mismatch");
        let data: Vec<f64> = va.data.iter().zip(&vb.data).map(|(x, y)| x / y).collect();
        let value = Tensor::new(va.shape.clone(), data);
        if !self.any_grad(&[a, b]) {
            return self.constant(value);
        }
        let da = self.nodes[a.0].value.data.clone();
        let db = self.nodes[b.0].value.data.clone();
        self.op(value, &[a, b], move |g, acc| {
            acc.with(a, g.len(), |ga| {
                for i in 0..g.len() {
                    ga[i] += g[i] / db[i];
                }
            });
            acc.with(b, g.len(), |gb| {
                for i in 0..g.len() {
                    gb[i] -= g[i] * da[i] / (db[i] * db[i]);
                }
            });
        })
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let va = &self.nodes[a.0].value;
        let data: Vec<f64> = va.data.iter().map(|x| x * factor).collect();
        let value = Tensor::new(va.shape.clone(), data);
        self.op(value, &[a], move |g, acc| {
            acc.with(a, g.len(), |ga| {
                for (x, y) in ga.iter_mut().zip(g) {
                    *x += factor * y;
                }
            });
        })
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let va = &self.nodes[a.0].value;
        let mask: Vec<bool> = va.data.iter().map(|&x| x > 0.0).collect();
        let data: Vec<f64> = va.data.iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
        let value = Tensor::new(va.shape.clone(), data);
        self.op(value, &[a], move |g, acc| {
            acc.with(a, g.len(), |ga| {
                for i in 0..g.len() {
                    if mask[i] {
                        ga[i] += g[i];
                    }
                }
            });
        })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let va = &self.nodes[a.0].value;
        let out: Vec<f64> = va.data.iter().map(|&x| 1.0 / (1.0 + (-x).exp())).collect();
        let value = Tensor::new(va.shape.clone(), out.clone());
        self.op(value, &[a], move |g, acc| {
            acc.with(a, g.len(), |ga| {
                for i in 0..g.len() {
                    ga[i] += g[i] * out[i] * (1.0 - out[i]);
                }
            });
        })
    }

    /// ln(max(x, floor)); gradient is 1/x on unclamped entries, 0 on
    /// clamped ones.
    pub fn ln_clamped(&mut self, a: Var, floor: f64) -> Var {
        assert!(floor > 0.0);
        let va = &self.nodes[a.0].value;
        let input = va.data.clone();
        let data: Vec<f64> = input.iter().map(|&x| x.max(floor).ln()).collect();
        let value = Tensor::new(va.shape.clone(), data);
        self.op(value, &[a], move |g, acc| {
            acc.with(a, g.len(), |ga| {
                for i in 0..g.len() {
                    if input[i] > floor {
                        ga[i] += g[i] / input[i];
                    }
                }
            });
        })
    }

    // ── reductions ───────────────────────────────────────────────

    pub fn sum(&mut self, a: Var) -> Var {
        let va = &self.nodes[a.0].value;
        let n = va.len();
        let value = Tensor::scalar(va.data.iter().sum());
        self.op(value, &[a], move |g, acc| {
            let gv = g[0];
            acc.with(a, n, |ga| {
                for x in ga.iter_mut() {
                    *x += gv;
                }
            });
        })
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let va = &self.nodes[a.0].value;
        let n = va.len();
        assert!(n > 0, "mean of empty tensor");
        let value = Tensor::scalar(va.data.iter().sum::<f64>() / n as f64);
        self.op(value, &[a], move |g, acc| {
            let gv = g[0] / n as f64;
            acc.with(a, n, |ga| {
                for x in ga.iter_mut() {
                    *x += gv;
                }
            });
        })
    }

    /// Column means of an r×c matrix (mean-pool over rows).
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let (r, c) = self.nodes[a.0].value.dims2();
        assert!(r > 0, "mean_rows of empty matrix");
        let va = &self.nodes[a.0].value;
        let mut out = vec![0.0; c];
        for i in 0..r {
            for j in 0..c {
                out[j] += va.data[i * c + j];
            }
        }
        for v in out.iter_mut() {
            *v /= r as f64;
        }
        let value = Tensor::vector(out);
        self.op(value, &[a], move |g, acc| {
            acc.with(a, r * c, |ga| {
                for i in 0..r {
                    for j in 0..c {
                        ga[i * c + j] += g[j] / r as f64;
                    }
                }
            });
        })
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(va.len(), vb.len(), "dot: length mismatch");
        let value = Tensor::scalar(tensor::dot(&va.data, &vb.data));
        if !self.any_grad(&[a, b]) {
            return self.constant(value);
        }
        let da = va.data.clone();
        let db = vb.data.clone();
        self.op(value, &[a, b], move |g, acc| {
            let gv = g[0];
            acc.with(a, db.len(), |ga| {
                for i in 0..ga.len() {
                    ga[i] += gv * db[i];
                }
            });
            acc.with(b, da.len(), |gb| {
                for i in 0..gb.len() {
                    gb[i] += gv * da[i];
                }
            });
        })
    }

    // ── matrix ops ───────────────────────────────────────────────

    /// A[m,k] · B[k,n]
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.nodes[a.0].value.dims2();
        let (k2, n) = self.nodes[b.0].value.dims2();
        assert_eq!(k, k2, "matmul: inner dims {} vs {}", k, k2);
        let data = tensor::matmul(&self.nodes[a.0].value.data, &self.nodes[b.0].value.data, m, k, n);
        let value = Tensor::matrix(m, n, data);
        if !self.any_grad(&[a, b]) {
            return self.constant(value);
        }
        let da = self.nodes[a.0].value.data.clone();
        let db = self.nodes[b.0].value.data.clone();
        self.op(value, &[a, b], move |g, acc| {
            acc.add(a, &tensor::matmul_nt(g, &db, m, n, k));
            acc.add(b, &tensor::matmul_tn(&da, g, m, k, n));
        })
    }

    /// A[m,k] · B[n,k]ᵀ
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.nodes[a.0].value.dims2();
        let (n, k2) = self.nodes[b.0].value.dims2();
        assert_eq!(k, k2, "matmul_nt: inner dims {} vs {}", k, k2);
        let data = tensor::matmul_nt(&self.nodes[a.0].value.data, &self.nodes[b.0].value.data, m, k, n);
        let value = Tensor::matrix(m, n, data);
        if !self.any_grad(&[a, b]) {
            return self.constant(value);
        }
        let da = self.nodes[a.0].value.data.clone();
        let db = self.nodes[b.0].value.data.clone();
        self.op(value, &[a, b], move |g, acc| {
            acc.add(a, &tensor::matmul(g, &db, m, n, k));
            acc.add(b, &tensor::matmul_tn(g, &da, m, n, k));
        })
    }

    /// Broadcast-add a length-c bias to every row of an r×c matrix.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let (r, c) = self.nodes[a.0].value.dims2();
        assert_eq!(self.nodes[bias.0].value.len(), c, "add_bias: width mismatch");
        let va = &self.nodes[a.0].value;
        let vb = &self.nodes[bias.0].value;
        let mut data = va.data.clone();
        for i in 0..r {
            for j in 0..c {
                data[i * c + j] += vb.data[j];
            }
        }
        let value = Tensor::matrix(r, c, data);
        self.op(value, &[a, bias], move |g, acc| {
            acc.add(a, g);
            acc.with(bias, c, |gb| {
                for i in 0..r {
                    for j in 0..c {
                        gb[j] += g[i * c + j];
                    }
                }
            });
        })
    }

    // ── softmax family ───────────────────────────────────────────

    /// Softmax over a vector.
    pub fn softmax_vec(&mut self, a: Var) -> Var {
        let va = &self.nodes[a.0].value;
        assert!(!va.is_empty(), "softmax of empty vector");
        let p = super::functional::softmax(&va.data);
        let value = Tensor::new(va.shape.clone(), p.clone());
        self.op(value, &[a], move |g, acc| {
            let inner: f64 = p.iter().zip(g).map(|(pi, gi)| pi * gi).sum();
            acc.with(a, p.len(), |ga| {
                for i in 0..ga.len() {
                    ga[i] += p[i] * (g[i] - inner);
                }
            });
        })
    }

    /// Row-wise softmax of an r×c matrix. Rows may contain `-inf`
    /// entries (masked attention) as long as at least one entry is
    /// finite.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let (r, c) = self.nodes[a.0].value.dims2();
        let va = &self.nodes[a.0].value;
        let mut p = vec![0.0; r * c];
        for i in 0..r {
            let row = &va.data[i * c..(i + 1) * c];
            let out = super::functional::softmax(row);
            p[i * c..(i + 1) * c].copy_from_slice(&out);
        }
        let value = Tensor::matrix(r, c, p.clone());
        self.op(value, &[a], move |g, acc| {
            acc.with(a, r * c, |ga| {
                for i in 0..r {
                    let pr = &p[i * c..(i + 1) * c];
                    let gr = &g[i * c..(i + 1) * c];
                    let inner: f64 = pr.iter().zip(gr).map(|(x, y)| x * y).sum();
                    for j in 0..c {
                        ga[i * c + j] += pr[j] * (gr[j] - inner);
                    }
                }
            });
        })
    }

    /// log Σ exp(v_i) over a vector, numerically stable.
    pub fn logsumexp(&mut self, a: Var) -> Var {
        let va = &self.nodes[a.0].value;
        assert!(!va.is_empty(), "logsumexp of empty vector");
        let m = va.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = va.data.iter().map(|&x| (x - m).exp()).collect();
        let sum: f64 = p.iter().sum();
        let lse = m + sum.ln();
        for v in p.iter_mut() {
            *v /= sum;
        }
        let value = Tensor::scalar(lse);
        self.op(value, &[a], move |g, acc| {
            let gv = g[0];
            acc.with(a, p.len(), |ga| {
                for i in 0..ga.len() {
                    ga[i] += gv * p[i];
                }
            });
        })
    }

    /// x / ‖x‖₂ for a vector.
    pub fn l2_normalize(&mut self, a: Var) -> Var {
        let va = &self.nodes[a.0].value;
        let norm = va.data.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm > 0.0, "l2_normalize of zero vector");
        let y: Vec<f64> = va.data.iter().map(|x| x / norm).collect();
        let value = Tensor::new(va.shape.clone(), y.clone());
        self.op(value, &[a], move |g, acc| {
            let inner: f64 = y.iter().zip(g).map(|(yi, gi)| yi * gi).sum();
            acc.with(a, y.len(), |ga| {
                for i in 0..ga.len() {
                    ga[i] += (g[i] - y[i] * inner) / norm;
                }
            });
        })
    }

    /// Per-row layer normalization of an r×c matrix with learned scale
    /// and shift.
    pub fn layer_norm(&mut self, a: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let (r, c) = self.nodes[a.0].value.dims2();
        assert_eq!(self.nodes[gamma.0].value.len(), c, "layer_norm: gamma width");
        assert_eq!(self.nodes[beta.0].value.len(), c, "layer_norm: beta width");
        let va = &self.nodes[a.0].value;
        let vg = &self.nodes[gamma.0].value.data.clone();
        let vb = &self.nodes[beta.0].value;
        let mut xhat = vec![0.0; r * c];
        let mut sigma = vec![0.0; r];
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &va.data[i * c..(i + 1) * c];
            let mu = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / c as f64;
            let sd = (var + eps).sqrt();
            sigma[i] = sd;
            for j in 0..c {
                let xh = (row[j] - mu) / sd;
                xhat[i * c + j] = xh;
                out[i * c + j] = xh * vg[j] + vb.data[j];
            }
        }
        let value = Tensor::matrix(r, c, out);
        let gamma_data = vg.clone();
        self.op(value, &[a, gamma, beta], move |g, acc| {
            acc.with(beta, c, |gb| {
                for i in 0..r {
                    for j in 0..c {
                        gb[j] += g[i * c + j];
                    }
                }
            });
            acc.with(gamma, c, |gg| {
                for i in 0..r {
                    for j in 0..c {
                        gg[j] += g[i * c + j] * xhat[i * c + j];
                    }
                }
            });
            acc.with(a, r * c, |ga| {
                for i in 0..r {
                    let gr = &g[i * c..(i + 1) * c];
                    let xr = &xhat[i * c..(i + 1) * c];
                    let gy: Vec<f64> = (0..c).map(|j| gr[j] * gamma_data[j]).collect();
                    let mean_gy = gy.iter().sum::<f64>() / c as f64;
                    let mean_gyx = gy.iter().zip(xr).map(|(x, y)| x * y).sum::<f64>() / c as f64;
                    for j in 0..c {
                        ga[i * c + j] += (gy[j] - mean_gy - xr[j] * mean_gyx) / sigma[i];
                    }
                }
            });
        })
    }

    // ── indexing / assembly ──────────────────────────────────────

    /// Rows `ids` of a V×c table, as an `ids.len()`×c matrix.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Var {
        let (v, c) = self.nodes[table.0].value.dims2();
        assert!(ids.iter().all(|&i| i < v), "gather_rows: id out of range");
        let vt = &self.nodes[table.0].value;
        let mut data = Vec::with_capacity(ids.len() * c);
        for &i in ids {
            data.extend_from_slice(&vt.data[i * c..(i + 1) * c]);
        }
        let value = Tensor::matrix(ids.len(), c, data);
        let ids = ids.to_vec();
        self.op(value, &[table], move |g, acc| {
            acc.with(table, v * c, |gt| {
                for (k, &i) in ids.iter().enumerate() {
                    for j in 0..c {
                        gt[i * c + j] += g[k * c + j];
                    }
                }
            });
        })
    }

    /// Element `i` of a vector, as a scalar.
    pub fn index(&mut self, a: Var, i: usize) -> Var {
        let va = &self.nodes[a.0].value;
        assert!(i < va.len(), "index out of range");
        let n = va.len();
        let value = Tensor::scalar(va.data[i]);
        self.op(value, &[a], move |g, acc| {
            let gv = g[0];
            acc.with(a, n, |ga| {
                ga[i] += gv;
            });
        })
    }

    /// Concatenate the flattened values of `vars` into one vector.
    pub fn concat(&mut self, vars: &[Var]) -> Var {
        assert!(!vars.is_empty(), "concat of nothing");
        let mut data = Vec::new();
        let mut spans = Vec::with_capacity(vars.len());
        for &v in vars {
            let t = &self.nodes[v.0].value;
            spans.push((v, data.len(), t.len()));
            data.extend_from_slice(&t.data);
        }
        let value = Tensor::vector(data);
        self.op(value, vars, move |g, acc| {
            for &(v, start, len) in &spans {
                acc.add(v, &g[start..start + len]);
            }
        })
    }

    /// Same values under a new shape (row-major layout unchanged).
    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Var {
        let va = &self.nodes[a.0].value;
        assert_eq!(
            shape.iter().product::<usize>(),
            va.len(),
            "reshape: size mismatch"
        );
        let value = Tensor::new(shape, va.data.clone());
        self.op(value, &[a], move |g, acc| {
            acc.add(a, g);
        })
    }

    /// Columns `[start, start+len)` of an r×c matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let (r, c) = self.nodes[a.0].value.dims2();
        assert!(start + len <= c, "slice_cols out of range");
        let va = &self.nodes[a.0].value;
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&va.data[i * c + start..i * c + start + len]);
        }
        let value = Tensor::matrix(r, len, data);
        self.op(value, &[a], move |g, acc| {
            acc.with(a, r * c, |ga| {
                for i in 0..r {
                    for j in 0..len {
                        ga[i * c + start + j] += g[i * len + j];
                    }
                }
            });
        })
    }

    /// Concatenate matrices with equal row counts along columns.
    pub fn concat_cols(&mut self, vars: &[Var]) -> Var {
        assert!(!vars.is_empty(), "concat_cols of nothing");
        let r = self.nodes[vars[0].0].value.dims2().0;
        let widths: Vec<usize> = vars
            .iter()
            .map(|&v| {
                let (ri, ci) = self.nodes[v.0].value.dims2();
                assert_eq!(ri, r, "concat_cols: row mismatch");
                ci
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for (idx, &v) in vars.iter().enumerate() {
                let c = widths[idx];
                let row = &self.nodes[v.0].value.data[i * c..(i + 1) * c];
                data.extend_from_slice(row);
            }
        }
        let value = Tensor::matrix(r, total, data);
        let vars_owned = vars.to_vec();
        self.op(value, vars, move |g, acc| {
            let mut offset = 0;
            for (idx, &v) in vars_owned.iter().enumerate() {
                let c = widths[idx];
                acc.with(v, r * c, |gv| {
                    for i in 0..r {
                        for j in 0..c {
                            gv[i * c + j] += g[i * total + offset + j];
                        }
                    }
                });
                offset += c;
            }
        })
    }

    // ── composites ───────────────────────────────────────────────

    /// Sum a list of scalars.
    pub fn sum_vars(&mut self, vars: &[Var]) -> Var {
        assert!(!vars.is_empty(), "sum_vars of nothing");
        let mut acc = vars[0];
        for &v in &vars[1..] {
            acc = self.add(acc, v);
        }
        acc
    }

    /// KL(p ‖ q) = Σ pᵢ(ln p̂ᵢ − ln q̂ᵢ) with inputs floored at `floor`
    /// before the logarithms.
    pub fn kl_div(&mut self, p: Var, q: Var, floor: f64) -> Var {
        assert_eq!(
            self.nodes[p.0].value.len(),
            self.nodes[q.0].value.len(),
            "kl_div: length mismatch"
        );
        let lp = self.ln_clamped(p, floor);
        let lq = self.ln_clamped(q, floor);
        let diff = self.sub(lp, lq);
        let terms = self.mul(p, diff);
        self.sum(terms)
    }

    fn op(&mut self, value: Tensor, parents: &[Var], back: impl FnOnce(&[f64], &mut Accumulator) + 'static) -> Var {
        let requires = self.any_grad(parents);
        self.push(value, requires, if requires { Some(Box::new(back)) } else { None })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_gradient() {
        // loss = sum(x∘x), x=[1,2,3] -> grad 2x = [2,4,6]
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let sq = t.mul(x, x);
        let loss = t.sum(sq);
        t.backward(loss).unwrap();
        assert_eq!(t.grad(x).unwrap(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn unreachable_leaf_gets_no_gradient() {
        // loss independent of x -> zero gradient (absent entry reads as zero)
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let y = t.leaf(Tensor::scalar(5.0));
        let loss = t.scale(y, 2.0);
        t.backward(loss).unwrap();
        assert!(t.grad(x).is_none());
        assert_eq!(t.grad(y).unwrap(), &[2.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, 2.0]));
        let y = t.scale(x, 1.0);
        assert!(t.backward(y).is_err());
    }

    #[test]
    fn constant_subgraph_records_no_backward() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::vector(vec![1.0, 2.0]));
        let b = t.constant(Tensor::vector(vec![3.0, 4.0]));
        let c = t.mul(a, b);
        assert!(!t.requires_grad(c));
    }

    #[test]
    fn matmul_gradients_match_by_hand() {
        // loss = sum(A·B); dA = 1·Bᵀ broadcast, dB = Aᵀ·1
        let mut t = Tape::new();
        let a = t.leaf(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]));
        let b = t.leaf(Tensor::matrix(2, 2, vec![5.0, 6.0, 7.0, 8.0]));
        let c = t.matmul(a, b);
        let loss = t.sum(c);
        t.backward(loss).unwrap();
        assert_eq!(t.grad(a).unwrap(), &[11.0, 15.0, 11.0, 15.0]);
        assert_eq!(t.grad(b).unwrap(), &[4.0, 4.0, 6.0, 6.0]);
    }

    #[test]
    fn detach_blocks_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![2.0]));
        let d = t.detach(x);
        let y = t.mul(d, d);
        let loss = t.sum(y);
        t.backward(loss).unwrap();
        assert!(t.grad(x).is_none());
    }

    #[test]
    fn kl_of_identical_distributions_is_zero() {
        let mut t = Tape::new();
        let p = t.leaf(Tensor::vector(vec![0.5, 0.5]));
        let q = t.constant(Tensor::vector(vec![0.5, 0.5]));
        let kl = t.kl_div(p, q, 1e-12);
        assert_eq!(t.value(kl).data[0], 0.0);
    }
}
