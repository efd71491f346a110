//! Sampled analog recordings and spike trains.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Multi-channel sampled biosignal.
///
/// `samples[c][k]` is the amplitude of channel `c` at sample `k`. Labels, when
/// present, carry one class id per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalogRecording {
    pub sample_rate: f64,
    pub channels: Vec<String>,
    pub samples: Vec<Vec<f64>>,
    pub labels: Option<Vec<usize>>,
}

impl AnalogRecording {
    pub fn new(
        sample_rate: f64,
        channels: Vec<String>,
        samples: Vec<Vec<f64>>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return domain(format!("sample rate must be positive, got {sample_rate}"));
        }
        if channels.len() != samples.len() {
            return Err(Error::Shape(format!(
                "{} channel names for {} sample columns",
                channels.len(),
                samples.len()
            )));
        }
        let len = samples.first().map_or(0, Vec::len);
        if samples.iter().any(|s| s.len() != len) {
            return Err(Error::Shape("channels have unequal lengths".into()));
        }
        if let Some(labels) = &labels {
            if labels.len() != len {
                return Err(Error::Shape(format!(
                    "{} labels for {} samples",
                    labels.len(),
                    len
                )));
            }
        }
        Ok(Self {
            sample_rate,
            channels,
            samples,
            labels,
        })
    }

    /// Single unlabeled channel, mostly for encoder calls.
    pub fn mono(sample_rate: f64, name: &str, samples: Vec<f64>) -> Result<Self> {
        Self::new(sample_rate, vec![name.to_string()], vec![samples], None)
    }

    pub fn len(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn duration_us(&self) -> f64 {
        self.len() as f64 * 1e6 / self.sample_rate
    }

    /// Extracts channel `idx` as a single-channel recording (labels kept).
    pub fn channel(&self, idx: usize) -> Result<AnalogRecording> {
        let samples = self
            .samples
            .get(idx)
            .ok_or_else(|| Error::Shape(format!("no channel {idx}")))?;
        Ok(AnalogRecording {
            sample_rate: self.sample_rate,
            channels: vec![self.channels[idx].clone()],
            samples: vec![samples.clone()],
            labels: self.labels.clone(),
        })
    }
}

/// One spike on a channel; time in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spike {
    pub time_us: f64,
    pub channel: usize,
}

/// Time-sorted spike events on named channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeTrain {
    channels: Vec<String>,
    events: Vec<Spike>,
    duration_us: f64,
}

impl SpikeTrain {
    /// Validating constructor: events must be sorted, on known channels and
    /// inside `[0, duration_us]`.
    pub fn new(channels: Vec<String>, events: Vec<Spike>, duration_us: f64) -> Result<Self> {
        if !(duration_us >= 0.0) {
            return domain(format!("duration must be non-negative, got {duration_us}"));
        }
        let mut last = 0.0;
        for e in &events {
            if e.channel >= channels.len() {
                return Err(Error::Shape(format!(
                    "event on channel {} of a {}-channel train",
                    e.channel,
                    channels.len()
                )));
            }
            if !(e.time_us >= 0.0 && e.time_us <= duration_us) {
                return domain(format!(
                    "event at {} µs outside [0, {duration_us}]",
                    e.time_us
                ));
            }
            if e.time_us < last {
                return domain("events are not time-sorted");
            }
            last = e.time_us;
        }
        Ok(Self {
            channels,
            events,
            duration_us,
        })
    }

    /// Sorts (stably, by time then channel) before validating.
    pub fn from_unsorted(
        channels: Vec<String>,
        mut events: Vec<Spike>,
        duration_us: f64,
    ) -> Result<Self> {
        events.sort_by(|a, b| {
            a.time_us
                .total_cmp(&b.time_us)
                .then(a.channel.cmp(&b.channel))
        });
        Self::new(channels, events, duration_us)
    }

    pub fn empty(channels: Vec<String>, duration_us: f64) -> Self {
        Self {
            channels,
            events: Vec::new(),
            duration_us,
        }
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn events(&self) -> &[Spike] {
        &self.events
    }

    pub fn duration_us(&self) -> f64 {
        self.duration_us
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == name)
    }

    /// Spike times of a single channel.
    pub fn times(&self, channel: usize) -> Vec<f64> {
        self.events
            .iter()
            .filter(|e| e.channel == channel)
            .map(|e| e.time_us)
            .collect()
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.channels.len()];
        for e in &self.events {
            counts[e.channel] += 1;
        }
        counts
    }

    /// Per-channel counts of events with `t0 <= t < t1`.
    pub fn counts_in(&self, t0: f64, t1: f64) -> Vec<usize> {
        let mut counts = vec![0; self.channels.len()];
        for e in self.events.iter().filter(|e| e.time_us >= t0 && e.time_us < t1) {
            counts[e.channel] += 1;
        }
        counts
    }

    /// Events in `[t0, t1)` shifted to start at zero; the result lasts `t1 - t0`.
    pub fn slice(&self, t0: f64, t1: f64) -> SpikeTrain {
        let start = self.events.partition_point(|e| e.time_us < t0);
        let end = self.events.partition_point(|e| e.time_us < t1);
        let events = self.events[start..end]
            .iter()
            .map(|e| Spike {
                time_us: e.time_us - t0,
                channel: e.channel,
            })
            .collect();
        SpikeTrain {
            channels: self.channels.clone(),
            events,
            duration_us: t1 - t0,
        }
    }

    /// Places the channels of each train side by side (channel indices offset).
    pub fn stack(trains: &[SpikeTrain]) -> Result<SpikeTrain> {
        let duration = trains.iter().map(|t| t.duration_us).fold(0.0, f64::max);
        let mut channels = Vec::new();
        let mut events = Vec::new();
        for train in trains {
            let offset = channels.len();
            channels.extend(train.channels.iter().cloned());
            events.extend(train.events.iter().map(|e| Spike {
                time_us: e.time_us,
                channel: e.channel + offset,
            }));
        }
        SpikeTrain::from_unsorted(channels, events, duration)
    }

    /// Smallest gap between consecutive events across all channels.
    pub fn min_interval(&self) -> Option<f64> {
        self.events
            .windows(2)
            .map(|w| w[1].time_us - w[0].time_us)
            .min_by(f64::total_cmp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn rejects_unsorted_and_out_of_range() {
        let ev = |t, c| Spike {
            time_us: t,
            channel: c,
        };
        assert!(SpikeTrain::new(names(1), vec![ev(5.0, 0), ev(1.0, 0)], 10.0).is_err());
        assert!(SpikeTrain::new(names(1), vec![ev(11.0, 0)], 10.0).is_err());
        assert!(SpikeTrain::new(names(1), vec![ev(1.0, 1)], 10.0).is_err());
        let ok = SpikeTrain::from_unsorted(names(2), vec![ev(5.0, 1), ev(1.0, 0)], 10.0).unwrap();
        assert_eq!(ok.events()[0].time_us, 1.0);
    }

    #[test]
    fn slice_shifts_and_bounds() {
        let events = (0..10)
            .map(|i| Spike {
                time_us: i as f64 * 10.0,
                channel: i % 2,
            })
            .collect();
        let train = SpikeTrain::new(names(2), events, 100.0).unwrap();
        let part = train.slice(20.0, 50.0);
        assert_eq!(part.len(), 3);
        assert_eq!(part.events()[0].time_us, 0.0);
        assert_eq!(part.duration_us(), 30.0);
        assert_eq!(train.counts_in(0.0, 50.0), vec![3, 2]);
    }

    #[test]
    fn recording_shape_checks() {
        assert!(AnalogRecording::new(200.0, names(2), vec![vec![0.0; 3], vec![0.0; 4]], None).is_err());
        assert!(AnalogRecording::new(0.0, names(1), vec![vec![0.0]], None).is_err());
        let r = AnalogRecording::new(200.0, names(1), vec![vec![0.0; 400]], Some(vec![0; 400])).unwrap();
        assert_eq!(r.duration_us(), 2e6);
    }
}
