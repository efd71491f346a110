//! Windowing, label-bleed exclusion, class balancing, splitting and the
//! synthetic EMG generator used when no recordings are at hand.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::encoders::filter::Cascade;
use crate::encoders::Encoder;
use crate::error::{domain, Error, Result};
use crate::signal::{AnalogRecording, SpikeTrain};

pub const WINDOW_MS: f64 = 200.0;

/// Where a window came from; duplicates made by oversampling share it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WindowSource {
    pub subject: u32,
    pub session: u32,
    /// First sample of the window in the recording.
    pub offset: usize,
}

/// A window of an analog recording, before encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawWindow {
    pub label: usize,
    pub source: WindowSource,
    pub len: usize,
}

/// One encoded window with its class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledWindow {
    pub spikes: SpikeTrain,
    pub label: usize,
    pub source: WindowSource,
}

pub trait Labeled {
    fn label(&self) -> usize;
    fn source(&self) -> WindowSource;
}

impl Labeled for RawWindow {
    fn label(&self) -> usize {
        self.label
    }
    fn source(&self) -> WindowSource {
        self.source
    }
}

impl Labeled for LabeledWindow {
    fn label(&self) -> usize {
        self.label
    }
    fn source(&self) -> WindowSource {
        self.source
    }
}

fn majority(labels: &[usize]) -> Option<usize> {
    let mut counts = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_insert(0usize) += 1;
    }
    // BTreeMap iterates labels in ascending order, so ties keep the smaller label.
    counts
        .into_iter()
        .fold(None, |best: Option<(usize, usize)>, (l, n)| match best {
            Some((_, bn)) if bn >= n => best,
            _ => Some((l, n)),
        })
        .map(|(l, _)| l)
}

pub fn samples_per_window(sample_rate: f64, window_ms: f64) -> usize {
    (window_ms * sample_rate / 1000.0).round() as usize
}

/// Non-overlapping windows labeled by majority vote, in seeded shuffled order.
pub fn segment(
    recording: &AnalogRecording,
    window_ms: f64,
    subject: u32,
    session: u32,
    seed: u64,
) -> Result<Vec<RawWindow>> {
    let labels = recording
        .labels
        .as_ref()
        .ok_or_else(|| Error::MissingLabels("segmentation needs per-sample labels".into()))?;
    let len = samples_per_window(recording.sample_rate, window_ms);
    if len == 0 {
        return domain(format!("window of {window_ms} ms holds no samples"));
    }
    let mut windows: Vec<RawWindow> = (0..recording.len() / len)
        .map(|k| {
            let offset = k * len;
            RawWindow {
                label: majority(&labels[offset..offset + len]).expect("non-empty window"),
                source: WindowSource {
                    subject,
                    session,
                    offset,
                },
                len,
            }
        })
        .collect();
    windows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(windows)
}

/// Per-channel RMS of `len` samples starting at `offset`.
pub fn rms_features(recording: &AnalogRecording, offset: usize, len: usize) -> Vec<f64> {
    recording
        .samples
        .iter()
        .map(|xs| {
            let seg = &xs[offset..(offset + len).min(xs.len())];
            (seg.iter().map(|x| x * x).sum::<f64>() / seg.len().max(1) as f64).sqrt()
        })
        .collect()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn centroids(features: &[(usize, Vec<f64>)]) -> BTreeMap<usize, Vec<f64>> {
    let mut sums: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    for (label, f) in features {
        let entry = sums.entry(*label).or_insert_with(|| (vec![0.0; f.len()], 0));
        entry.0.iter_mut().zip(f).for_each(|(s, v)| *s += v);
        entry.1 += 1;
    }
    sums.into_iter()
        .map(|(l, (s, n))| (l, s.into_iter().map(|v| v / n as f64).collect()))
        .collect()
}

/// Drops windows that sit closer (RMS-feature distance) to the centroid of
/// a temporally adjacent, differently labeled state than to their own.
pub fn filter_label_bleed(windows: Vec<RawWindow>, recording: &AnalogRecording) -> Result<Vec<RawWindow>> {
    let labels = recording
        .labels
        .as_ref()
        .ok_or_else(|| Error::MissingLabels("label-bleed filtering needs labels".into()))?;
    let features: Vec<(usize, Vec<f64>)> = windows
        .iter()
        .map(|w| (w.label, rms_features(recording, w.source.offset, w.len)))
        .collect();
    let centroids = centroids(&features);
    let n = labels.len();
    let keep: Vec<bool> = windows
        .iter()
        .zip(&features)
        .map(|(w, (label, f))| {
            let start = w.source.offset;
            let before = majority(&labels[start.saturating_sub(w.len)..start]);
            let after = majority(&labels[(start + w.len).min(n)..(start + 2 * w.len).min(n)]);
            let own = distance(f, &centroids[label]);
            [before, after].into_iter().flatten().all(|adj| {
                adj == *label || centroids.get(&adj).is_none_or(|c| distance(f, c) >= own)
            })
        })
        .collect();
    Ok(windows
        .into_iter()
        .zip(keep)
        .filter_map(|(w, k)| k.then_some(w))
        .collect())
}

/// Duplicates random minority-class windows until every class matches the largest.
pub fn oversample<T: Labeled + Clone>(windows: Vec<T>, seed: u64) -> Vec<T> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, w) in windows.iter().enumerate() {
        by_class.entry(w.label()).or_default().push(i);
    }
    let target = by_class.values().map(Vec::len).max().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut extra = Vec::new();
    for members in by_class.values() {
        for _ in members.len()..target {
            let &pick = members.choose(&mut rng).expect("class has members");
            extra.push(windows[pick].clone());
        }
    }
    let mut out = windows;
    out.extend(extra);
    out
}

/// Unique sources per class, shuffled with the seed.
fn sources_by_class<T: Labeled>(windows: &[T], seed: u64) -> BTreeMap<usize, Vec<WindowSource>> {
    let mut by_class: BTreeMap<usize, BTreeSet<WindowSource>> = BTreeMap::new();
    for w in windows {
        by_class.entry(w.label()).or_default().insert(w.source());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    by_class
        .into_iter()
        .map(|(l, set)| {
            let mut v: Vec<WindowSource> = set.into_iter().collect();
            v.shuffle(&mut rng);
            (l, v)
        })
        .collect()
}

/// Stratified split by source: every copy of a window lands on the side of its original.
pub fn split<T: Labeled + Clone>(windows: &[T], ratio: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(0.0..=1.0).contains(&ratio) {
        return domain(format!("split ratio {ratio} outside [0, 1]"));
    }
    let mut train_sources = BTreeSet::new();
    for sources in sources_by_class(windows, seed).into_values() {
        let n_train = (sources.len() as f64 * ratio).round() as usize;
        train_sources.extend(sources.into_iter().take(n_train));
    }
    Ok(windows
        .iter()
        .cloned()
        .partition(|w| train_sources.contains(&w.source())))
}

/// Stratified k-fold partition by source; returns `(train, test)` per fold.
pub fn kfold<T: Labeled + Clone>(windows: &[T], k: usize, seed: u64) -> Result<Vec<(Vec<T>, Vec<T>)>> {
    if k < 2 {
        return domain(format!("k-fold needs k >= 2, got {k}"));
    }
    let mut fold_of = BTreeMap::new();
    for sources in sources_by_class(windows, seed).into_values() {
        for (i, s) in sources.into_iter().enumerate() {
            fold_of.insert(s, i % k);
        }
    }
    Ok((0..k)
        .map(|f| {
            windows
                .iter()
                .cloned()
                .partition::<Vec<T>, _>(|w| fold_of[&w.source()] != f)
        })
        .collect())
}

/// Encodes the whole recording once and cuts each window out of the result.
pub fn encode_windows(
    recording: &AnalogRecording,
    windows: &[RawWindow],
    encoder: &Encoder,
) -> Result<Vec<LabeledWindow>> {
    let encoded = encoder.encode(recording)?;
    let us_per_sample = 1e6 / recording.sample_rate;
    Ok(windows
        .iter()
        .map(|w| {
            let t0 = w.source.offset as f64 * us_per_sample;
            let t1 = (w.source.offset + w.len) as f64 * us_per_sample;
            LabeledWindow {
                spikes: encoded.slice(t0, t1),
                label: w.label,
                source: w.source,
            }
        })
        .collect())
}

/// Nearest-centroid accuracy on RMS features; a separability check for corpora.
pub fn nearest_centroid_accuracy(
    recording: &AnalogRecording,
    train: &[RawWindow],
    test: &[RawWindow],
) -> f64 {
    let feats = |ws: &[RawWindow]| -> Vec<(usize, Vec<f64>)> {
        ws.iter()
            .map(|w| (w.label, rms_features(recording, w.source.offset, w.len)))
            .collect()
    };
    let centroids = centroids(&feats(train));
    let test = feats(test);
    let correct = test
        .iter()
        .filter(|(label, f)| {
            let best = centroids
                .iter()
                .min_by(|a, b| distance(f, a.1).total_cmp(&distance(f, b.1)))
                .map(|(l, _)| *l);
            best == Some(*label)
        })
        .count();
    correct as f64 / test.len().max(1) as f64
}

/// Synthetic multi-electrode EMG. The last class is rest; every other class
/// is a gesture performed in trials separated by rest periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_classes: usize,
    /// Per-class, per-electrode amplitude in `[0, 1]`.
    pub profiles: Vec<Vec<f64>>,
    /// Per-class weights of the (0.5–50 Hz, 50–100 Hz) bands.
    pub band_emphasis: Vec<(f64, f64)>,
    /// Signal units of a unit profile entry (RMS).
    pub amplitude: f64,
    pub trial_s: f64,
    pub rest_s: f64,
    pub trials_per_class: usize,
    /// RMS of additive white noise on every electrode.
    pub noise_floor: f64,
    /// Decay time of residual activity after a gesture ends (ms); 0 disables it.
    pub bleed_ms: f64,
    /// Each trial's amplitude is scaled by a factor drawn from `[1 − j, 1 + j]`.
    pub gain_jitter: f64,
    pub sample_rate: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    /// Three gestures, each driving its own electrode pair with co-contraction
    /// of 0.35 elsewhere, and a rest class with weak tonic activity on the
    /// last pair. Strong enough to saturate an unregulated readout.
    fn default() -> Self {
        let profile = |hot: [usize; 2], on: f64, off: f64| {
            (0..8).map(|e| if hot.contains(&e) { on } else { off }).collect()
        };
        Self {
            n_classes: 4,
            profiles: vec![
                profile([0, 1], 1.0, 0.35),
                profile([2, 3], 1.0, 0.35),
                profile([4, 5], 1.0, 0.35),
                profile([6, 7], 0.3, 0.05),
            ],
            band_emphasis: vec![(1.0, 0.4), (0.6, 1.0), (0.8, 0.7), (1.0, 1.0)],
            amplitude: 60.0,
            trial_s: 2.0,
            rest_s: 1.0,
            trials_per_class: 4,
            noise_floor: 0.3,
            bleed_ms: 60.0,
            gain_jitter: 0.1,
            sample_rate: 200.0,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn rest_class(&self) -> usize {
        self.n_classes - 1
    }

    pub fn n_electrodes(&self) -> usize {
        self.profiles.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 || self.profiles.len() != self.n_classes || self.band_emphasis.len() != self.n_classes {
            return Err(Error::Config("need >= 2 classes with one profile and band weighting each".into()));
        }
        let n_el = self.n_electrodes();
        if n_el == 0 || self.profiles.iter().any(|p| p.len() != n_el) {
            return Err(Error::Config("profiles must share a non-zero electrode count".into()));
        }
        if self.profiles.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Config("profile entries must lie in [0, 1]".into()));
        }
        for a in 0..self.n_classes {
            for b in a + 1..self.n_classes {
                if distance(&self.profiles[a], &self.profiles[b]) <= 0.2 {
                    return Err(Error::Config(format!("profiles {a} and {b} are closer than 0.2")));
                }
            }
        }
        if !(self.amplitude >= 0.0 && self.noise_floor >= 0.0 && self.bleed_ms >= 0.0) {
            return Err(Error::Config("amplitude, noise floor and bleed must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.gain_jitter) {
            return Err(Error::Config("gain jitter must lie in [0, 1)".into()));
        }
        if !(self.trial_s > 0.0 && self.rest_s >= 0.0 && self.sample_rate > 0.0) {
            return Err(Error::Config("trial length and sample rate must be positive".into()));
        }
        Ok(())
    }
}

/// Renders a labeled recording: rest, then gesture trials cycling through
/// classes `0..n_classes - 1`, each followed by a rest period.
pub fn synth_emg(spec: &SynthSpec) -> Result<AnalogRecording> {
    spec.validate()?;
    let fs = spec.sample_rate;
    let trial = (spec.trial_s * fs).round() as usize;
    let rest = (spec.rest_s * fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rest_label = spec.rest_class();
    let mut labels = vec![rest_label; rest];
    // Trial gain, held through the following rest so residual activity keeps it.
    let mut gains = vec![1.0; rest];
    for _ in 0..spec.trials_per_class {
        for class in 0..rest_label {
            let g = if spec.gain_jitter > 0.0 {
                rng.random_range(1.0 - spec.gain_jitter..1.0 + spec.gain_jitter)
            } else {
                1.0
            };
            labels.extend(std::iter::repeat_n(class, trial));
            labels.extend(std::iter::repeat_n(rest_label, rest));
            gains.extend(std::iter::repeat_n(g, trial + rest));
        }
    }
    let n = labels.len();
    let n_el = spec.n_electrodes();

    // Most recent gesture and the sample where it ended, for residual activity.
    let mut last_gesture = vec![None; n];
    let mut current = None;
    for k in 0..n {
        if labels[k] != rest_label {
            current = Some((labels[k], k));
        } else if let Some((g, _)) = current {
            if k > 0 && labels[k - 1] == g {
                current = Some((g, k));
            }
        }
        last_gesture[k] = current;
    }

    let mut samples = Vec::with_capacity(n_el);
    let nyquist = fs / 2.0;
    for ch in 0..n_el {
        let mut low = Cascade::bandpass(4, 0.5, 50.0_f64.min(nyquist * 0.99), fs)?;
        let mut high = Cascade::bandpass(4, 50.0_f64.min(nyquist * 0.99), nyquist, fs)?;
        let xs = (0..n)
            .map(|k| {
                let white: f64 = StandardNormal.sample(&mut rng);
                let floor: f64 = StandardNormal.sample(&mut rng);
                let lo = low.process(white);
                let hi = high.process(white);
                let mix = |class: usize| {
                    let (el, eh) = spec.band_emphasis[class];
                    let norm = (0.5 * (el * el + eh * eh)).sqrt().max(1e-12);
                    spec.amplitude * spec.profiles[class][ch] * (el * lo + eh * hi) / norm
                };
                let mut v = if labels[k] == rest_label {
                    mix(rest_label)
                } else {
                    gains[k] * mix(labels[k])
                };
                if labels[k] == rest_label && spec.bleed_ms > 0.0 {
                    if let Some((g, end)) = last_gesture[k] {
                        let elapsed_ms = (k - end) as f64 * 1e3 / fs;
                        v += gains[k] * mix(g) * (-elapsed_ms / spec.bleed_ms).exp();
                    }
                }
                v + spec.noise_floor * floor
            })
            .collect();
        samples.push(xs);
    }
    let channels = (0..n_el).map(|c| format!("ch{}", c + 1)).collect();
    AnalogRecording::new(fs, channels, samples, Some(labels))
}
