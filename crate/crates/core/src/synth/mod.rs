//! Synthetic multichannel recordings and their conversion to graphs.
//!
//! Recordings carry a shared narrowband source across a channel group
//! (plus class-dependent coupling into a second group routed through
//! designated bridge channels) on top of per-channel pink noise. Graph
//! conversion band-passes the signals, computes Welch PSD node
//! features, and builds an absolute-Pearson-correlation adjacency.

mod dataset;
mod filter;
mod graph_build;
mod welch;

pub use dataset::{load_dataset, write_dataset, DatasetManifest, GraphSample};
pub use filter::{butter_bandpass, filtfilt, IirCoeffs};
pub use graph_build::{build_graph, pearson_adjacency, segment};
pub use welch::{bin_band_power, welch_psd};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;
use crate::rng::StreamRng;

/// A frequency band, validated against the Nyquist limit at use time.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Band {
    pub name: String,
    pub lo_hz: f64,
    pub hi_hz: f64,
}

impl Band {
    pub fn alpha() -> Band {
        Band {
            name: "alpha".into(),
            lo_hz: 8.0,
            hi_hz: 14.0,
        }
    }

    pub fn validate(&self, fs: f64) -> Result<()> {
        if !(0.0 < self.lo_hz && self.lo_hz < self.hi_hz && self.hi_hz < fs / 2.0) {
            return Err(Error::contract(format!(
                "band {} ({}-{} Hz) invalid for fs {} Hz",
                self.name, self.lo_hz, self.hi_hz, fs
            )));
        }
        Ok(())
    }
}

/// A multichannel time series (channels × timepoints).
#[derive(Debug, Clone)]
pub struct Recording {
    pub samples: Tensor,
    pub fs: f64,
    pub montage_labels: Vec<String>,
    pub subject_id: String,
    pub label: Option<u32>,
}

impl Recording {
    pub fn channels(&self) -> usize {
        self.samples.dims2().0
    }

    pub fn timepoints(&self) -> usize {
        self.samples.dims2().1
    }

    pub fn duration_s(&self) -> f64 {
        self.timepoints() as f64 / self.fs
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        self.samples.row(c)
    }

    pub fn validate(&self) -> Result<()> {
        let (ch, t) = self.samples.dims2();
        if ch != self.montage_labels.len() {
            return Err(Error::contract("montage labels do not match channel count".to_string()));
        }
        if !(self.fs > 0.0) || (t as f64) < self.fs {
            return Err(Error::contract(format!(
                "recording must span at least 1 s ({} samples at {} Hz)",
                t, self.fs
            )));
        }
        Ok(())
    }
}

/// Generator settings for a two-class synthetic corpus.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_subjects_per_class: usize,
    pub channels: usize,
    pub fs: f64,
    pub duration_s: f64,
    pub source_freq_hz: f64,
    /// Half-width of the uniform per-recording draw around
    /// `source_freq_hz` (0 keeps the frequency fixed). A nonzero
    /// jitter gives every recording its own spectral signature.
    pub source_freq_jitter_hz: f64,
    /// Channels driven by the shared source.
    pub group_a: Vec<usize>,
    /// Channels receiving the source scaled by the class coupling.
    pub group_b: Vec<usize>,
    /// Mediator channels (always carry the source at full gain).
    pub bridge: Vec<usize>,
    /// Coupling strength per class id.
    pub coupling_strength: [f64; 2],
    /// Pink-noise amplitude on every channel.
    pub noise_amp: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_subjects_per_class: 100,
            channels: 64,
            fs: 250.0,
            duration_s: 200.0,
            source_freq_hz: 10.0,
            source_freq_jitter_hz: 0.0,
            group_a: (0..16).collect(),
            group_b: (48..64).collect(),
            bridge: (0..16).filter(|i| i % 2 == 1).collect(),
            coupling_strength: [0.0, 0.8],
            noise_amp: 1.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || !(self.fs > 0.0) || self.duration_s * self.fs < self.fs {
            return Err(Error::contract("spec must describe at least 1 s of ≥1 channel".to_string()));
        }
        let in_range = |set: &[usize]| set.iter().all(|&c| c < self.channels);
        if !in_range(&self.group_a) || !in_range(&self.group_b) || !in_range(&self.bridge) {
            return Err(Error::contract("group index out of channel range".to_string()));
        }
        if self.group_a.iter().any(|c| self.group_b.contains(c)) {
            return Err(Error::contract("groups A and B must be disjoint".to_string()));
        }
        if !self
            .bridge
            .iter()
            .all(|c| self.group_a.contains(c) || self.group_b.contains(c))
        {
            return Err(Error::contract("bridge must lie inside A ∪ B".to_string()));
        }
        // equality permitted: a null corpus (identical couplings) is the
        // calibration baseline for chance-level classifiers
        if !(self.coupling_strength[1] >= self.coupling_strength[0] && self.coupling_strength[0] >= 0.0) {
            return Err(Error::contract(
                "coupling must satisfy class1 ≥ class0 ≥ 0".to_string(),
            ));
        }
        if self.source_freq_jitter_hz < 0.0
            || self.source_freq_hz - self.source_freq_jitter_hz <= 0.0
            || self.source_freq_hz + self.source_freq_jitter_hz >= self.fs / 2.0
        {
            return Err(Error::contract("source frequency band exceeds Nyquist range".to_string()));
        }
        Ok(())
    }
}

/// Generate one recording. Deterministic given (spec, class_id, seed).
///
/// Group-A channels share a sinusoidal source with phase jitter at
/// `source_freq_hz`; bridge channels carry the same source at full
/// gain; group-B channels receive it scaled by the class coupling.
/// Every channel adds independent pink noise.
pub fn generate_recording(spec: &SynthSpec, class_id: usize, seed: u64) -> Recording {
    assert!(class_id < 2, "contract violation: class_id must be 0 or 1");
    let t = (spec.duration_s * spec.fs).round() as usize;
    let ch = spec.channels;
    let root = StreamRng::new(seed);

    // shared source: sinusoid with a slow phase random walk; the
    // carrier frequency may jitter per recording
    let mut src_rng = root.stream(&[0]);
    let phase0: f64 = src_rng.gen::<f64>() * 2.0 * std::f64::consts::PI;
    let freq = spec.source_freq_hz + spec.source_freq_jitter_hz * (2.0 * src_rng.gen::<f64>() - 1.0);
    let drift_step = 0.01;
    let mut source = Vec::with_capacity(t);
    let mut drift = 0.0;
    for k in 0..t {
        drift += drift_step * src_rng.sample::<f64, _>(StandardNormal);
        let phase = 2.0 * std::f64::consts::PI * freq * k as f64 / spec.fs + phase0 + drift;
        source.push(phase.sin());
    }

    let coupling = spec.coupling_strength[class_id];
    let mut data = vec![0.0; ch * t];
    for c in 0..ch {
        let mut ch_rng = root.stream(&[1, c as u64]);
        let gain: f64 = 0.8 + 0.4 * ch_rng.gen::<f64>();
        let source_gain = if spec.bridge.contains(&c) {
            gain
        } else if spec.group_a.contains(&c) {
            gain
        } else if spec.group_b.contains(&c) {
            coupling * gain
        } else {
            0.0
        };
        let row = &mut data[c * t..(c + 1) * t];
        let mut pink = PinkNoise::default();
        for (k, v) in row.iter_mut().enumerate() {
            let white: f64 = ch_rng.sample(StandardNormal);
            *v = source_gain * source[k] + spec.noise_amp * pink.next(white);
        }
    }

    Recording {
        samples: Tensor::matrix(ch, t, data),
        fs: spec.fs,
        montage_labels: (0..ch).map(|c| format!("ch{:03}", c)).collect(),
        subject_id: format!("class{}_seed{}", class_id, seed),
        label: Some(class_id as u32),
    }
}

/// Per-channel zero-phase band-pass of a recording.
pub fn bandpass(rec: &Recording, band: &Band) -> Result<Recording> {
    band.validate(rec.fs)?;
    let coeffs = butter_bandpass(band.lo_hz, band.hi_hz, rec.fs)?;
    let (ch, t) = rec.samples.dims2();
    let mut data = vec![0.0; ch * t];
    for c in 0..ch {
        let filtered = filtfilt(&coeffs, rec.channel(c));
        data[c * t..(c + 1) * t].copy_from_slice(&filtered);
    }
    Ok(Recording {
        samples: Tensor::matrix(ch, t, data),
        ..rec.clone()
    })
}

/// Raw (pre-log, pre-standardization) binned Welch band power per
/// channel: an n×n_bins matrix.
pub fn band_power_features(rec: &Recording, band: &Band, n_bins: usize) -> Result<Tensor> {
    band.validate(rec.fs)?;
    if n_bins < 1 {
        return Err(Error::contract("n_bins must be ≥ 1".to_string()));
    }
    if rec.duration_s() < 2.0 {
        return Err(Error::contract(format!(
            "PSD features need ≥ 2 s of signal, got {:.3} s",
            rec.duration_s()
        )));
    }
    let nperseg = (2.0 * rec.fs).round() as usize;
    let noverlap = nperseg / 2;
    let ch = rec.channels();
    let mut data = vec![0.0; ch * n_bins];
    for c in 0..ch {
        let (freqs, psd) = welch_psd(rec.channel(c), rec.fs, nperseg, noverlap);
        let bins = bin_band_power(&freqs, &psd, band.lo_hz, band.hi_hz, n_bins);
        data[c * n_bins..(c + 1) * n_bins].copy_from_slice(&bins);
    }
    Ok(Tensor::matrix(ch, n_bins, data))
}

/// PSD node features: binned Welch band power, log-transformed, then
/// z-scored across channels per bin.
pub fn psd_features(rec: &Recording, band: &Band, n_bins: usize) -> Result<Tensor> {
    let raw = band_power_features(rec, band, n_bins)?;
    let (ch, d) = raw.dims2();
    let mut logs = vec![0.0; ch * d];
    for (i, &p) in raw.data.iter().enumerate() {
        logs[i] = p.max(1e-300).ln();
    }
    // z-score each bin column over the channel axis
    for j in 0..d {
        let mean = (0..ch).map(|i| logs[i * d + j]).sum::<f64>() / ch as f64;
        let var = (0..ch).map(|i| (logs[i * d + j] - mean).powi(2)).sum::<f64>() / ch as f64;
        let sd = var.sqrt();
        let denom = if sd > 1e-12 { sd } else { 1.0 };
        for i in 0..ch {
            logs[i * d + j] = (logs[i * d + j] - mean) / denom;
        }
    }
    Ok(Tensor::matrix(ch, d, logs))
}

/// Paul Kellet's 7-stage pink-noise filter over white input.
#[derive(Default)]
struct PinkNoise {
    b: [f64; 7],
}

impl PinkNoise {
    fn next(&mut self, white: f64) -> f64 {
        let b = &mut self.b;
        b[0] = 0.99886 * b[0] + white * 0.0555179;
        b[1] = 0.99332 * b[1] + white * 0.0750759;
        b[2] = 0.96900 * b[2] + white * 0.1538520;
        b[3] = 0.86650 * b[3] + white * 0.3104856;
        b[4] = 0.55000 * b[4] + white * 0.5329522;
        b[5] = -0.7616 * b[5] - white * 0.0168980;
        let pink = b.iter().sum::<f64>() + white * 0.5362;
        b[6] = white * 0.115926;
        0.11 * pink
    }
}
