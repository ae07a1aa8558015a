//! Plain (non-recorded) numeric primitives: the softmax/KL pair used
//! throughout the losses, and the central-difference gradient estimator
//! that serves as the independent oracle for the tape.

/// Floor applied to probabilities before logarithms; keeps KL finite on
/// sparse kernels.
pub const PROB_FLOOR: f64 = 1e-12;

/// Softmax of a vector. Shift-invariant and tolerant of `-inf` entries
/// (masked logits) as long as one entry is finite.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    assert!(!v.is_empty(), "contract violation: softmax of empty vector");
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(m.is_finite(), "softmax: no finite entry");
    let exps: Vec<f64> = v.iter().map(|&x| (x - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// KL(p ‖ q) with both arguments floored at [`PROB_FLOOR`] before the
/// logarithms. Zero exactly when `p == q` elementwise.
pub fn kl_div(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "contract violation: kl_div length mismatch");
    p.iter()
        .zip(q)
        .map(|(&pi, &qi)| pi * (pi.max(PROB_FLOOR).ln() - qi.max(PROB_FLOOR).ln()))
        .sum()
}

/// Central-difference gradient estimate of a scalar function:
/// (f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h per coordinate.
pub fn finite_diff_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    assert!(h > 0.0, "contract violation: step size must be positive");
    let mut pt = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = pt[i];
        pt[i] = orig + h;
        let fp = f(&pt);
        pt[i] = orig - h;
        let fm = f(&pt);
        pt[i] = orig;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Relative error used by every gradient check: |a−b| / max(1, |a|, |b|).
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}
