//! Energy-based pulse-frequency modulation.
//!
//! Each band is filtered, full-wave rectified, mapped onto the linear current
//! range of an integrate-and-fire unit and converted to spikes whose rate is
//! proportional to the injected current.

use serde::{Deserialize, Serialize};

use super::filter::Cascade;
use crate::error::{domain, Error, Result};
use crate::signal::{AnalogRecording, Spike, SpikeTrain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PfmParams {
    /// Band edges in Hz.
    pub bands: Vec<(f64, f64)>,
    /// Current at full scale (nA).
    pub i_max: f64,
    /// Firing rate at `i_max` (Hz).
    pub rate_max: f64,
    /// Amplitude range mapped onto `[0, i_max]`; set by [`pfm_calibrate`].
    pub scale_range: Option<(f64, f64)>,
    pub percentile: f64,
    pub filter_order: usize,
}

impl Default for PfmParams {
    fn default() -> Self {
        Self {
            bands: vec![(0.5, 50.0), (50.0, 100.0)],
            i_max: 8.0,
            rate_max: 4000.0,
            scale_range: None,
            percentile: 99.0,
            filter_order: 4,
        }
    }
}

impl PfmParams {
    pub fn validate(&self) -> Result<()> {
        if self.bands.is_empty() {
            return domain("PFM needs at least one band");
        }
        let mut sorted = self.bands.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (lo, hi) in &sorted {
            if !(*lo >= 0.0 && lo < hi && *hi <= 100.0) {
                return domain(format!("band ({lo}, {hi}) Hz outside [0, 100] Hz"));
            }
        }
        if sorted.windows(2).any(|w| w[1].0 < w[0].1) {
            return domain("PFM bands overlap");
        }
        if !(self.i_max > 0.0 && self.rate_max > 0.0) {
            return domain("i_max and rate_max must be positive");
        }
        if !(self.percentile > 0.0 && self.percentile <= 100.0) {
            return domain(format!("percentile {} outside (0, 100]", self.percentile));
        }
        if self.filter_order == 0 {
            return domain("filter order must be at least 1");
        }
        Ok(())
    }
}

/// Rectified band-filtered copies of `xs`, one per band.
pub fn band_envelopes(xs: &[f64], sample_rate: f64, params: &PfmParams) -> Result<Vec<Vec<f64>>> {
    params
        .bands
        .iter()
        .map(|&(lo, hi)| {
            let mut filter = Cascade::bandpass(params.filter_order, lo, hi, sample_rate)?;
            Ok(xs.iter().map(|&x| filter.process(x).abs()).collect())
        })
        .collect()
}

/// Linearly interpolated percentile (`p` in percent) of `values`.
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

/// Scale range `(0, p)` from rectified amplitudes.
pub fn calibrate_range(rectified: &[f64], pct: f64) -> Result<(f64, f64)> {
    match percentile(rectified, pct) {
        Some(p) if p > 0.0 && p.is_finite() => Ok((0.0, p)),
        _ => Err(Error::DegenerateRange(
            "amplitude percentile is zero; recording carries no band energy".into(),
        )),
    }
}

/// One shared scale range for a subject-session, pooled over every channel
/// and band so relative amplitudes between electrodes survive.
pub fn pfm_calibrate(recording: &AnalogRecording, params: &PfmParams) -> Result<PfmParams> {
    params.validate()?;
    let mut pooled = Vec::with_capacity(recording.len() * recording.n_channels() * params.bands.len());
    for xs in &recording.samples {
        for env in band_envelopes(xs, recording.sample_rate, params)? {
            pooled.extend(env);
        }
    }
    let range = calibrate_range(&pooled, params.percentile)?;
    Ok(PfmParams {
        scale_range: Some(range),
        ..params.clone()
    })
}

/// Maps a rectified amplitude to an injected current in nA.
#[inline]
pub fn amplitude_to_current(v: f64, range: (f64, f64), i_max: f64) -> f64 {
    ((v - range.0) / (range.1 - range.0)).clamp(0.0, 1.0) * i_max
}

/// Perfect integrate-and-fire unit driven by a piecewise-constant current
/// (one value per sample). Rate is `I · rate_max / i_max`; returns spike
/// times in µs.
pub fn integrate_and_fire(currents: &[f64], sample_rate: f64, i_max: f64, rate_max: f64) -> Vec<f64> {
    let period = 1.0 / sample_rate;
    let mut phase = 0.0;
    let mut times = Vec::new();
    for (i, &current) in currents.iter().enumerate() {
        let rate = current.max(0.0) * rate_max / i_max;
        if rate <= 0.0 {
            continue;
        }
        let t0 = i as f64 * period;
        let total = phase + rate * period;
        let n = total.floor() as usize;
        for k in 1..=n {
            let t = t0 + (k as f64 - phase) / rate;
            times.push((t * 1e6).min((t0 + period) * 1e6));
        }
        phase = total - n as f64;
    }
    times
}

/// Encodes the first channel of `signal`: one output channel per band.
pub fn pfm_encode(signal: &AnalogRecording, params: &PfmParams) -> Result<SpikeTrain> {
    params.validate()?;
    let range = params.scale_range.ok_or_else(|| {
        Error::Precondition("PFM parameters are uncalibrated (no scale range)".into())
    })?;
    if !(range.1 > range.0) {
        return Err(Error::DegenerateRange(format!("scale range {range:?} is empty")));
    }
    let xs = signal
        .samples
        .first()
        .ok_or_else(|| Error::Shape("PFM needs one channel".into()))?;
    let base = signal.channels.first().map_or("pfm", String::as_str);
    let mut names = Vec::new();
    let mut events = Vec::new();
    for (band, env) in band_envelopes(xs, signal.sample_rate, params)?.into_iter().enumerate() {
        names.push(format!("{base}_band{band}"));
        let currents: Vec<f64> = env
            .iter()
            .map(|&v| amplitude_to_current(v, range, params.i_max))
            .collect();
        events.extend(
            integrate_and_fire(&currents, signal.sample_rate, params.i_max, params.rate_max)
                .into_iter()
                .map(|time_us| Spike {
                    time_us,
                    channel: band,
                }),
        );
    }
    SpikeTrain::from_unsorted(names, events, signal.duration_us())
}
