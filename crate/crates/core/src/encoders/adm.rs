//! Asynchronous delta modulation: UP/DOWN events whenever the signal moves
//! one threshold away from a tracked reference.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::signal::{AnalogRecording, Spike, SpikeTrain};

pub const UP: usize = 0;
pub const DOWN: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmParams {
    /// Step size in the units of the input recording.
    pub threshold: f64,
    /// Dead time after any event (µs), shared by both channels.
    pub refractory: f64,
    pub interpolation_factor: usize,
}

impl Default for AdmParams {
    fn default() -> Self {
        Self {
            threshold: 0.8,
            refractory: 10.0,
            interpolation_factor: 3500,
        }
    }
}

impl AdmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0) || !self.threshold.is_finite() {
            return domain(format!("ADM threshold must be positive, got {}", self.threshold));
        }
        if !(self.refractory >= 0.0) {
            return domain(format!("ADM refractory must be >= 0, got {}", self.refractory));
        }
        if self.interpolation_factor == 0 {
            return domain("ADM interpolation factor must be >= 1");
        }
        Ok(())
    }
}

/// Time (µs) of point `k` on the interpolated grid.
#[inline]
pub fn grid_time(k: usize, sample_rate: f64, factor: usize) -> f64 {
    k as f64 * 1e6 / (sample_rate * factor as f64)
}

#[inline]
fn grid_index(time_us: f64, sample_rate: f64, factor: usize) -> usize {
    (time_us * sample_rate * factor as f64 / 1e6).round() as usize
}

fn channel_names(base: &str) -> Vec<String> {
    vec![format!("{base}_up"), format!("{base}_down")]
}

/// Encodes the first channel of `signal` into an UP/DOWN spike train.
pub fn adm_encode(signal: &AnalogRecording, params: &AdmParams) -> Result<SpikeTrain> {
    params.validate()?;
    let xs = signal
        .samples
        .first()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::Domain("ADM needs a non-empty signal".into()))?;
    let fs = signal.sample_rate;
    let factor = params.interpolation_factor;
    let theta = params.threshold;
    let x0 = xs[0];
    // Reference kept as an integer number of steps from the first sample.
    let mut level: i64 = 0;
    let mut blocked_until = f64::NEG_INFINITY;
    let mut events = Vec::new();
    let n_points = (xs.len() - 1) * factor + 1;
    for k in 1..n_points {
        let t = grid_time(k, fs, factor);
        if t < blocked_until {
            continue;
        }
        let (i, j) = (k / factor, k % factor);
        let v = if j == 0 {
            xs[i]
        } else {
            xs[i] + (xs[i + 1] - xs[i]) * (j as f64 / factor as f64)
        };
        let reference = x0 + level as f64 * theta;
        let channel = if v - reference >= theta {
            level += 1;
            UP
        } else if reference - v >= theta {
            level -= 1;
            DOWN
        } else {
            continue;
        };
        events.push(Spike { time_us: t, channel });
        blocked_until = t + params.refractory;
    }
    let base = signal.channels.first().map_or("adm", String::as_str);
    SpikeTrain::new(channel_names(base), events, signal.duration_us())
}

/// Staircase reconstruction on the interpolated grid, starting at `initial`.
pub fn adm_reconstruct(
    spikes: &SpikeTrain,
    params: &AdmParams,
    initial: f64,
    sample_rate: f64,
) -> Result<AnalogRecording> {
    params.validate()?;
    if spikes.n_channels() < 2 {
        return Err(Error::Shape("ADM reconstruction needs UP and DOWN channels".into()));
    }
    let factor = params.interpolation_factor;
    let n_points = grid_index(spikes.duration_us(), sample_rate, factor) + 1;
    let mut steps = vec![0i64; n_points];
    for e in spikes.events() {
        let k = grid_index(e.time_us, sample_rate, factor).min(n_points - 1);
        match e.channel {
            UP => steps[k] += 1,
            DOWN => steps[k] -= 1,
            _ => {}
        }
    }
    let mut level = 0i64;
    let values = steps
        .into_iter()
        .map(|s| {
            level += s;
            initial + level as f64 * params.threshold
        })
        .collect();
    AnalogRecording::mono(sample_rate * factor as f64, "reconstruction", values)
}

/// RMSE between the original samples and the reconstruction at sample instants.
pub fn reconstruction_rmse(signal: &AnalogRecording, params: &AdmParams) -> Result<(f64, usize)> {
    let spikes = adm_encode(signal, params)?;
    let xs = &signal.samples[0];
    let recon = adm_reconstruct(&spikes, params, xs[0], signal.sample_rate)?;
    let ys = &recon.samples[0];
    let factor = params.interpolation_factor;
    let sse: f64 = xs
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let y = ys[(i * factor).min(ys.len() - 1)];
            (x - y) * (x - y)
        })
        .sum();
    Ok(((sse / xs.len() as f64).sqrt(), spikes.len()))
}

/// Exhaustive search for the parameters minimizing reconstruction RMSE.
///
/// Candidates are visited thresholds-major, then refractories, then
/// interpolation factors; ties go to fewer spikes, then to the earlier candidate.
pub fn adm_grid_search(
    signal: &AnalogRecording,
    thresholds: &[f64],
    refractories: &[f64],
    interps: &[usize],
) -> Result<AdmParams> {
    if thresholds.is_empty() || refractories.is_empty() || interps.is_empty() {
        return domain("ADM grid search needs non-empty candidate lists");
    }
    let mut scored = Vec::new();
    for &threshold in thresholds {
        for &refractory in refractories {
            for &interpolation_factor in interps {
                let params = AdmParams {
                    threshold,
                    refractory,
                    interpolation_factor,
                };
                let (rmse, count) = reconstruction_rmse(signal, &params)?;
                scored.push((rmse, count, params));
            }
        }
    }
    Ok(select_best(scored).expect("non-empty grid"))
}

/// Lowest RMSE, then fewest spikes, then earliest.
fn select_best(scored: impl IntoIterator<Item = (f64, usize, AdmParams)>) -> Option<AdmParams> {
    let mut best: Option<(f64, usize, AdmParams)> = None;
    for (rmse, count, params) in scored {
        let better = match &best {
            None => true,
            Some((r, c, _)) => rmse < *r || (rmse == *r && count < *c),
        };
        if better {
            best = Some((rmse, count, params));
        }
    }
    best.map(|(_, _, p)| p)
}
