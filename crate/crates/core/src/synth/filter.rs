//! Zero-phase Butterworth band-pass filtering.
//!
//! The design pipeline is the classic analog-prototype route: N=2
//! Butterworth lowpass poles, lowpass→bandpass transform (doubling the
//! order to 4), bilinear transform with prewarped edges. The filter is
//! applied forward-backward with odd-reflection padding and
//! steady-state initialization, so the result is zero-phase.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Transfer-function coefficients, `a[0] == 1`.
#[derive(Debug, Clone)]
pub struct IirCoeffs {
    pub b: Vec<f64>,
    pub a: Vec<f64>,
}

/// 4th-order Butterworth band-pass (order-2 analog prototype).
pub fn butter_bandpass(lo_hz: f64, hi_hz: f64, fs: f64) -> Result<IirCoeffs> {
    if !(0.0 < lo_hz && lo_hz < hi_hz && hi_hz < fs / 2.0) {
        return Err(Error::contract(format!(
            "band ({}, {}) Hz invalid for fs {} Hz",
            lo_hz, hi_hz, fs
        )));
    }
    let fs2 = 2.0 * fs;
    // prewarp band edges
    let w1 = fs2 * (std::f64::consts::PI * lo_hz / fs).tan();
    let w2 = fs2 * (std::f64::consts::PI * hi_hz / fs).tan();
    let w0 = (w1 * w2).sqrt();
    let bw = w2 - w1;

    // analog N=2 Butterworth lowpass prototype poles
    let proto = [
        Complex64::from_polar(1.0, std::f64::consts::PI * 3.0 / 4.0),
        Complex64::from_polar(1.0, std::f64::consts::PI * 5.0 / 4.0),
    ];

    // lowpass -> bandpass: each pole splits in two; N zeros at s=0
    let mut poles = Vec::with_capacity(4);
    for p in proto {
        let s = p * (bw / 2.0);
        let disc = (s * s - Complex64::new(w0 * w0, 0.0)).sqrt();
        poles.push(s + disc);
        poles.push(s - disc);
    }
    let zeros = [Complex64::new(0.0, 0.0); 2];
    let gain = bw * bw; // bw^N

    // bilinear transform
    let mut zp = Vec::with_capacity(4);
    let mut zz = Vec::with_capacity(4);
    let mut num = Complex64::new(gain, 0.0);
    let mut den = Complex64::new(1.0, 0.0);
    for &z in &zeros {
        zz.push((Complex64::new(fs2, 0.0) + z) / (Complex64::new(fs2, 0.0) - z));
        num *= Complex64::new(fs2, 0.0) - z;
    }
    for &p in &poles {
        zp.push((Complex64::new(fs2, 0.0) + p) / (Complex64::new(fs2, 0.0) - p));
        den *= Complex64::new(fs2, 0.0) - p;
    }
    // analog zeros fewer than poles: pad digital zeros at z = -1
    while zz.len() < zp.len() {
        zz.push(Complex64::new(-1.0, 0.0));
    }
    let k = (num / den).re;

    let b: Vec<f64> = poly_from_roots(&zz).iter().map(|c| (c * k).re).collect();
    let a: Vec<f64> = poly_from_roots(&zp).iter().map(|c| c.re).collect();
    Ok(IirCoeffs { b, a })
}

fn poly_from_roots(roots: &[Complex64]) -> Vec<Complex64> {
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
        for (i, &c) in coeffs.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        coeffs = next;
    }
    coeffs
}

/// Direct-form II transposed IIR filter with initial state `zi`.
fn lfilter(b: &[f64], a: &[f64], x: &[f64], zi: &[f64]) -> Vec<f64> {
    let n = b.len().max(a.len());
    let mut z = zi.to_vec();
    z.resize(n - 1, 0.0);
    let mut y = vec![0.0; x.len()];
    for (i, &xi) in x.iter().enumerate() {
        let yi = b[0] * xi + z[0];
        for j in 0..n - 2 {
            z[j] = b[j + 1] * xi + z[j + 1] - a[j + 1] * yi;
        }
        z[n - 2] = b[n - 1] * xi - a[n - 1] * yi;
        y[i] = yi;
    }
    y
}

/// Steady-state initial filter state for a unit-step input.
fn lfilter_zi(b: &[f64], a: &[f64]) -> Vec<f64> {
    let n = b.len().max(a.len()) - 1;
    // M = I - companion(a)^T, rhs = b[1:] - b[0]*a[1:]
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        m[i][i] = 1.0;
    }
    for i in 0..n {
        m[i][0] += a[i + 1];
    }
    for j in 1..n {
        m[j - 1][j] -= 1.0;
    }
    let mut rhs: Vec<f64> = (0..n).map(|i| b[i + 1] - b[0] * a[i + 1]).collect();

    // Gaussian elimination with partial pivoting
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
            .unwrap();
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        let p = m[col][col];
        for row in col + 1..n {
            let f = m[row][col] / p;
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut zi = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = rhs[row];
        for k in row + 1..n {
            s -= m[row][k] * zi[k];
        }
        zi[row] = s / m[row][row];
    }
    zi
}

/// Forward-backward (zero-phase) filtering with odd-reflection padding.
pub fn filtfilt(coeffs: &IirCoeffs, x: &[f64]) -> Vec<f64> {
    let order = coeffs.b.len().max(coeffs.a.len());
    let pad = 3 * order;
    assert!(
        x.len() > pad,
        "signal of {} samples too short for filter padding {}",
        x.len(),
        pad
    );

    // odd reflection about the endpoints
    let mut ext = Vec::with_capacity(x.len() + 2 * pad);
    for i in (1..=pad).rev() {
        ext.push(2.0 * x[0] - x[i]);
    }
    ext.extend_from_slice(x);
    let last = x.len() - 1;
    for i in 1..=pad {
        ext.push(2.0 * x[last] - x[last - i]);
    }

    let zi = lfilter_zi(&coeffs.b, &coeffs.a);
    let scaled: Vec<f64> = zi.iter().map(|z| z * ext[0]).collect();
    let fwd = lfilter(&coeffs.b, &coeffs.a, &ext, &scaled);

    let mut rev: Vec<f64> = fwd.into_iter().rev().collect();
    let scaled: Vec<f64> = zi.iter().map(|z| z * rev[0]).collect();
    rev = lfilter(&coeffs.b, &coeffs.a, &rev, &scaled);
    rev.reverse();

    rev[pad..pad + x.len()].to_vec()
}
