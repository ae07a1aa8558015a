//! Welch power spectral density estimation (Hann taper, mean-detrended
//! segments, one-sided density scaling).

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

// planning is far more expensive than a single 500-point transform;
// plans are shared process-wide by length
fn cached_plan(n: usize) -> Arc<dyn Fft<f64>> {
    static PLANS: OnceLock<Mutex<HashMap<usize, Arc<dyn Fft<f64>>>>> = OnceLock::new();
    let plans = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = plans.lock().expect("plan cache lock");
    guard
        .entry(n)
        .or_insert_with(|| FftPlanner::new().plan_fft_forward(n))
        .clone()
}

/// One-sided Welch PSD of a single channel.
///
/// Returns (frequencies, power density). Segments shorter than
/// `nperseg` at the tail are discarded; the segment mean is removed
/// before tapering.
pub fn welch_psd(signal: &[f64], fs: f64, nperseg: usize, noverlap: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(nperseg > 0 && noverlap < nperseg, "invalid welch segmentation");
    assert!(signal.len() >= nperseg, "signal shorter than one segment");
    let step = nperseg - noverlap;
    let n_freq = nperseg / 2 + 1;

    // periodic Hann taper
    let window: Vec<f64> = (0..nperseg)
        .map(|k| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * k as f64 / nperseg as f64).cos()))
        .collect();
    let win_ss: f64 = window.iter().map(|w| w * w).sum();

    let fft = cached_plan(nperseg);

    let mut psd = vec![0.0; n_freq];
    let mut n_segments = 0usize;
    let mut start = 0usize;
    let mut buf = vec![Complex64::new(0.0, 0.0); nperseg];
    while start + nperseg <= signal.len() {
        let seg = &signal[start..start + nperseg];
        let mean = seg.iter().sum::<f64>() / nperseg as f64;
        for (i, (&s, &w)) in seg.iter().zip(&window).enumerate() {
            buf[i] = Complex64::new((s - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (k, p) in psd.iter_mut().enumerate() {
            let mag2 = buf[k].norm_sqr();
            // one-sided density: double everything except DC and Nyquist
            let factor = if k == 0 || (nperseg % 2 == 0 && k == n_freq - 1) {
                1.0
            } else {
                2.0
            };
            *p += factor * mag2 / (fs * win_ss);
        }
        n_segments += 1;
        start += step;
    }
    for p in psd.iter_mut() {
        *p /= n_segments as f64;
    }
    let freqs = (0..n_freq).map(|k| k as f64 * fs / nperseg as f64).collect();
    (freqs, psd)
}

/// Mean PSD in `n_bins` equal-width frequency bins over `[lo, hi]`.
pub fn bin_band_power(freqs: &[f64], psd: &[f64], lo: f64, hi: f64, n_bins: usize) -> Vec<f64> {
    assert!(n_bins >= 1 && lo < hi);
    let width = (hi - lo) / n_bins as f64;
    let mut power = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for (&f, &p) in freqs.iter().zip(psd) {
        if f < lo || f > hi {
            continue;
        }
        let mut bin = ((f - lo) / width) as usize;
        if bin >= n_bins {
            bin = n_bins - 1; // f == hi
        }
        power[bin] += p;
        counts[bin] += 1;
    }
    for (p, &c) in power.iter_mut().zip(&counts) {
        if c > 0 {
            *p /= c as f64;
        }
    }
    power
}
