//! Node-similarity kernels for topology distillation.

use crate::numerics::tape::{Tape, Var};
use crate::numerics::tensor::{dot, Tensor};

/// Similarity kernel family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Euclidean,
    Polynomial,
    Rbf,
}

/// Kernel selection with its constants.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// Polynomial offset.
    pub c: f64,
    /// Polynomial degree (≥ 1).
    pub deg: u32,
    /// RBF width (> 0).
    pub gamma: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            kind: KernelKind::Linear,
            c: 1.0,
            deg: 2,
            gamma: 1.0,
        }
    }
}

impl KernelSpec {
    pub fn linear() -> Self {
        KernelSpec::default()
    }

    pub fn validate(&self) -> crate::error::Result<()> {
        if !(self.gamma > 0.0) || self.deg < 1 {
            return Err(crate::error::Error::config(
                "kernel needs gamma > 0 and deg ≥ 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// Similarity of two equal-length vectors under `spec`.
pub fn kernel_similarity(x: &[f64], y: &[f64], spec: &KernelSpec) -> f64 {
    assert_eq!(x.len(), y.len(), "contract violation: kernel input length mismatch");
    match spec.kind {
        KernelKind::Linear => dot(x, y),
        KernelKind::Euclidean => x
            .iter()
            .zip(y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt(),
        KernelKind::Polynomial => (dot(x, y) + spec.c).powi(spec.deg as i32),
        KernelKind::Rbf => {
            let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            (-spec.gamma * d2).exp()
        }
    }
}

/// Kernel scores of a pair list over plain embedding rows.
pub fn pair_scores(emb: &Tensor, pairs: &[(usize, usize)], spec: &KernelSpec) -> Vec<f64> {
    pairs
        .iter()
        .map(|&(i, j)| kernel_similarity(emb.row(i), emb.row(j), spec))
        .collect()
}

/// Fused tape op: kernel scores of `pairs` over the rows of an n×D
/// embedding matrix, as one length-|pairs| vector.
pub fn pair_scores_on_tape(tape: &mut Tape, emb: Var, pairs: &[(usize, usize)], spec: &KernelSpec) -> Var {
    let (n, d) = tape.value(emb).dims2();
    assert!(
        pairs.iter().all(|&(i, j)| i < n && j < n),
        "contract violation: pair index out of range"
    );
    let values = pair_scores(tape.value(emb), pairs, spec);
    let rows = tape.value(emb).data.clone();
    let pairs_owned = pairs.to_vec();
    let spec = *spec;
    tape.custom(
        Tensor::vector(values.clone()),
        &[emb],
        Box::new(move |g, acc| {
            acc.with(emb, rows.len(), |ge| {
                for (p, &(i, j)) in pairs_owned.iter().enumerate() {
                    let gp = g[p];
                    if gp == 0.0 {
                        continue;
                    }
                    let xi = &rows[i * d..(i + 1) * d];
                    let xj = &rows[j * d..(j + 1) * d];
                    match spec.kind {
                        KernelKind::Linear => {
                            for k in 0..d {
                                ge[i * d + k] += gp * xj[k];
                                ge[j * d + k] += gp * xi[k];
                            }
                        }
                        KernelKind::Euclidean => {
                            let z = values[p];
                            if z > 0.0 {
                                for k in 0..d {
                                    let diff = (xi[k] - xj[k]) / z;
                                    ge[i * d + k] += gp * diff;
                                    ge[j * d + k] -= gp * diff;
                                }
                            }
                        }
                        KernelKind::Polynomial => {
                            let base = dot(xi, xj) + spec.c;
                            let factor = gp * spec.deg as f64 * base.powi(spec.deg as i32 - 1);
                            for k in 0..d {
                                ge[i * d + k] += factor * xj[k];
                                ge[j * d + k] += factor * xi[k];
                            }
                        }
                        KernelKind::Rbf => {
                            let z = values[p];
                            let factor = gp * z * (-2.0) * spec.gamma;
                            for k in 0..d {
                                let diff = xi[k] - xj[k];
                                ge[i * d + k] += factor * diff;
                                ge[j * d + k] -= factor * diff;
                            }
                        }
                    }
                }
            });
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::functional::{finite_diff_grad, relative_error};

    #[test]
    fn worked_examples() {
        let lin = KernelSpec::linear();
        assert_eq!(kernel_similarity(&[1.0, 2.0], &[3.0, 4.0], &lin), 11.0);

        let euc = KernelSpec {
            kind: KernelKind::Euclidean,
            ..KernelSpec::default()
        };
        assert_eq!(kernel_similarity(&[1.0, 2.0], &[1.0, 2.0], &euc), 0.0);

        let rbf = KernelSpec {
            kind: KernelKind::Rbf,
            gamma: 0.7,
            ..KernelSpec::default()
        };
        assert_eq!(kernel_similarity(&[0.5, -1.0], &[0.5, -1.0], &rbf), 1.0);

        let poly = KernelSpec {
            kind: KernelKind::Polynomial,
            c: 1.0,
            deg: 2,
            ..KernelSpec::default()
        };
        assert_eq!(kernel_similarity(&[1.0, 0.0], &[0.0, 1.0], &poly), 1.0);
    }

    #[test]
    fn fused_pair_scores_gradients_match_finite_differences() {
        let kernels = [
            KernelSpec::linear(),
            KernelSpec {
                kind: KernelKind::Euclidean,
                ..KernelSpec::default()
            },
            KernelSpec {
                kind: KernelKind::Polynomial,
                c: 0.5,
                deg: 3,
                ..KernelSpec::default()
            },
            KernelSpec {
                kind: KernelKind::Rbf,
                gamma: 0.4,
                ..KernelSpec::default()
            },
        ];
        let data = vec![0.3, -0.8, 1.2, 0.5, -0.2, 0.9, 0.1, 0.7]; // 4x2
        let pairs = vec![(0, 1), (1, 2), (0, 3), (2, 3)];
        for spec in kernels {
            let mut tape = Tape::new();
            let emb = tape.leaf(Tensor::matrix(4, 2, data.clone()));
            let scores = pair_scores_on_tape(&mut tape, emb, &pairs, &spec);
            // weight the scores so every pair contributes distinctly
            let w = tape.constant(Tensor::vector(vec![1.0, -0.5, 2.0, 0.25]));
            let weighted = tape.mul(scores, w);
            let loss = tape.sum(weighted);
            tape.backward(loss).unwrap();
            let grad = tape.grad(emb).unwrap().to_vec();

            let f = |x: &[f64]| {
                let t = Tensor::matrix(4, 2, x.to_vec());
                let s = pair_scores(&t, &pairs, &spec);
                s[0] - 0.5 * s[1] + 2.0 * s[2] + 0.25 * s[3]
            };
            let fd = finite_diff_grad(f, &data, 1e-6);
            for (a, b) in grad.iter().zip(&fd) {
                assert!(
                    relative_error(*a, *b) < 1e-6,
                    "{:?}: grad {} vs fd {}",
                    spec.kind,
                    a,
                    b
                );
            }
        }
    }
}
