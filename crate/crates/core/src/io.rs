//! File formats: recordings, label files, spike trains, probe traces, window
//! archives, trained weights and result tables.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datapipe::{LabeledWindow, WindowSource};
use crate::engine::ProbeSample;
use crate::error::{Error, Result};
use crate::harness::{AblationTable, IoCurve};
use crate::learning::WeightMatrix;
use crate::signal::{AnalogRecording, Spike, SpikeTrain};
use crate::topology::NetworkConfig;

/// Reads `t,<ch1>,...,<chN>[,label]` with time in seconds.
pub fn read_recording(path: &Path) -> Result<AnalogRecording> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.get(0).map(str::trim) != Some("t") {
        return Err(Error::Shape("recording CSV must start with a `t` column".into()));
    }
    let has_label = headers.iter().next_back().map(str::trim) == Some("label");
    let n_ch = headers.len() - 1 - usize::from(has_label);
    if n_ch == 0 {
        return Err(Error::Shape("recording CSV has no channel columns".into()));
    }
    let channels: Vec<String> = headers.iter().skip(1).take(n_ch).map(|h| h.trim().to_string()).collect();
    let mut times = Vec::new();
    let mut samples = vec![Vec::new(); n_ch];
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record?;
        let num = |i: usize| -> Result<f64> {
            let field = record.get(i).unwrap_or("").trim();
            field
                .parse()
                .map_err(|_| Error::Shape(format!("non-numeric field '{field}' in column {i}")))
        };
        times.push(num(0)?);
        for (c, col) in samples.iter_mut().enumerate() {
            col.push(num(c + 1)?);
        }
        if has_label {
            let field = record.get(n_ch + 1).unwrap_or("").trim();
            labels.push(
                field
                    .parse()
                    .map_err(|_| Error::Shape(format!("label '{field}' is not a class id")))?,
            );
        }
    }
    let sample_rate = infer_sample_rate(&times)?;
    AnalogRecording::new(sample_rate, channels, samples, has_label.then_some(labels))
}

fn infer_sample_rate(times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::Shape("recording needs at least two samples".into()));
    }
    let span = times[times.len() - 1] - times[0];
    if !(span > 0.0) {
        return Err(Error::Shape("time column must increase".into()));
    }
    let period = span / (times.len() - 1) as f64;
    if times.windows(2).any(|w| ((w[1] - w[0]) - period).abs() > 0.01 * period) {
        return Err(Error::Shape("samples are not uniformly spaced".into()));
    }
    Ok(1.0 / period)
}

/// Writes the recording in the format read by [`read_recording`].
pub fn write_recording(path: &Path, recording: &AnalogRecording) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend(recording.channels.iter().cloned());
    if recording.labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for k in 0..recording.len() {
        let mut row = vec![(k as f64 / recording.sample_rate).to_string()];
        row.extend(recording.samples.iter().map(|xs| xs[k].to_string()));
        if let Some(labels) = &recording.labels {
            row.push(labels[k].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Applies a `t_start_s,t_end_s,label` interval file to an unlabeled recording.
/// Every sample must fall in exactly one interval (half-open).
pub fn apply_label_file(recording: AnalogRecording, path: &Path) -> Result<AnalogRecording> {
    #[derive(Deserialize)]
    struct Row {
        t_start_s: f64,
        t_end_s: f64,
        label: usize,
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let rows: Vec<Row> = reader.deserialize().collect::<std::result::Result<_, _>>()?;
    let labels = (0..recording.len())
        .map(|k| {
            let t = k as f64 / recording.sample_rate;
            rows.iter()
                .find(|r| r.t_start_s <= t && t < r.t_end_s)
                .map(|r| r.label)
                .ok_or_else(|| Error::MissingLabels(format!("no interval covers t = {t} s")))
        })
        .collect::<Result<Vec<_>>>()?;
    AnalogRecording::new(recording.sample_rate, recording.channels, recording.samples, Some(labels))
}

/// Spike CSV `time_us,channel` with channel names, sorted by time.
pub fn write_spikes(path: &Path, spikes: &SpikeTrain) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["time_us", "channel"])?;
    for s in spikes.events() {
        w.write_record([s.time_us.to_string(), spikes.channels()[s.channel].clone()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a spike CSV against a known channel list.
pub fn read_spikes(path: &Path, channels: &[String], duration_us: f64) -> Result<SpikeTrain> {
    #[derive(Deserialize)]
    struct Row {
        time_us: f64,
        channel: String,
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut events = Vec::new();
    for row in reader.deserialize() {
        let row: Row = row?;
        let channel = channels
            .iter()
            .position(|c| *c == row.channel)
            .ok_or_else(|| Error::Shape(format!("unknown spike channel '{}'", row.channel)))?;
        events.push(Spike {
            time_us: row.time_us,
            channel,
        });
    }
    SpikeTrain::new(channels.to_vec(), events, duration_us)
}

/// Probe traces as `time_us,neuron,i_mem_pA,i_ahp_pA`.
pub fn write_probes(path: &Path, samples: &[ProbeSample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["time_us", "neuron", "i_mem_pA", "i_ahp_pA"])?;
    for s in samples {
        w.write_record([
            s.time_us.to_string(),
            format!("{}{}", s.neuron.pop.prefix(), s.neuron.idx),
            s.i_mem.to_string(),
            s.i_ahp.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub label: usize,
    pub source: WindowSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub channels: Vec<String>,
    pub duration_us: f64,
    pub windows: Vec<ManifestEntry>,
}

/// Writes one spike CSV per window plus `manifest.json`.
pub fn write_window_archive(dir: &Path, windows: &[LabeledWindow]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let first = windows
        .first()
        .ok_or_else(|| Error::Shape("cannot archive an empty window set".into()))?;
    let mut entries = Vec::with_capacity(windows.len());
    for (k, w) in windows.iter().enumerate() {
        if w.spikes.channels() != first.spikes.channels() {
            return Err(Error::Shape("archived windows must share channels".into()));
        }
        let file = format!("window_{k:05}.csv");
        write_spikes(&dir.join(&file), &w.spikes)?;
        entries.push(ManifestEntry {
            file,
            label: w.label,
            source: w.source,
        });
    }
    let manifest = Manifest {
        channels: first.spikes.channels().to_vec(),
        duration_us: first.spikes.duration_us(),
        windows: entries,
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

pub fn read_window_archive(dir: &Path) -> Result<Vec<LabeledWindow>> {
    let manifest: Manifest = read_json(&dir.join("manifest.json"))?;
    manifest
        .windows
        .iter()
        .map(|e| {
            Ok(LabeledWindow {
                spikes: read_spikes(&dir.join(&e.file), &manifest.channels, manifest.duration_us)?,
                label: e.label,
                source: e.source,
            })
        })
        .collect()
}

/// Hex SHA-256 of the config's JSON form.
pub fn config_hash(config: &NetworkConfig) -> Result<String> {
    let json = serde_json::to_vec(config)?;
    Ok(hex::encode(Sha256::digest(&json)))
}

/// Trained plastic weights, row-major `n_pre × n_post`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightFile {
    pub n_pre: usize,
    pub n_post: usize,
    pub weights: Vec<f64>,
    pub config_hash: String,
    pub seed: u64,
    pub epochs: usize,
}

impl WeightFile {
    pub fn new(weights: &WeightMatrix, config: &NetworkConfig, seed: u64, epochs: usize) -> Result<Self> {
        Ok(Self {
            n_pre: weights.n_pre,
            n_post: weights.n_post,
            weights: weights.data.clone(),
            config_hash: config_hash(config)?,
            seed,
            epochs,
        })
    }

    pub fn matrix(&self) -> Result<WeightMatrix> {
        if self.weights.len() != self.n_pre * self.n_post {
            return Err(Error::Shape(format!(
                "{} weights for a {}×{} matrix",
                self.weights.len(),
                self.n_pre,
                self.n_post
            )));
        }
        Ok(WeightMatrix {
            n_pre: self.n_pre,
            n_post: self.n_post,
            data: self.weights.clone(),
        })
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Long-format curve table `config,input_rate_hz,output_rate_hz`.
pub fn write_curves(path: &Path, curves: &[IoCurve]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["config", "input_rate_hz", "output_rate_hz"])?;
    for c in curves {
        for (r, o) in c.rates.iter().zip(&c.output) {
            w.write_record([c.config.clone(), r.to_string(), o.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-seed accuracies `config,seed,accuracy`.
pub fn write_ablation_table(path: &Path, table: &AblationTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["config", "seed", "accuracy"])?;
    for row in &table.rows {
        for (seed, acc) in row.seeds.iter().zip(&row.accuracies) {
            w.write_record([row.config.clone(), seed.to_string(), acc.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recording_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.csv");
        let rec = AnalogRecording::new(
            200.0,
            vec!["a".into(), "b".into()],
            vec![vec![0.5, -1.25, 3.0], vec![0.0, 1e-3, 2.0]],
            Some(vec![0, 1, 1]),
        )
        .unwrap();
        write_recording(&path, &rec).unwrap();
        let back = read_recording(&path).unwrap();
        assert_eq!(back.channels, rec.channels);
        assert_eq!(back.samples, rec.samples);
        assert_eq!(back.labels, rec.labels);
        assert!((back.sample_rate - 200.0).abs() < 1e-9);
    }

    #[test]
    fn label_file_covers_samples() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        fs::write(&path, "t_start_s,t_end_s,label\n0,0.01,2\n0.01,1,0\n").unwrap();
        let rec = AnalogRecording::mono(200.0, "x", vec![0.0; 4]).unwrap();
        let labeled = apply_label_file(rec.clone(), &path).unwrap();
        assert_eq!(labeled.labels, Some(vec![2, 2, 0, 0]));
        fs::write(&path, "t_start_s,t_end_s,label\n0,0.01,2\n").unwrap();
        assert!(matches!(apply_label_file(rec, &path), Err(Error::MissingLabels(_))));
    }

    #[test]
    fn archive_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spikes = SpikeTrain::new(
            vec!["u".into(), "d".into()],
            vec![
                Spike {
                    time_us: 10.5,
                    channel: 1,
                },
                Spike {
                    time_us: 99.0,
                    channel: 0,
                },
            ],
            200_000.0,
        )
        .unwrap();
        let windows = vec![LabeledWindow {
            spikes,
            label: 3,
            source: WindowSource {
                subject: 1,
                session: 2,
                offset: 40,
            },
        }];
        write_window_archive(dir.path(), &windows).unwrap();
        assert_eq!(read_window_archive(dir.path()).unwrap(), windows);
    }

    #[test]
    fn weight_file_keeps_shape_and_hash() {
        let cfg = NetworkConfig::default();
        let w = cfg.initial_weights();
        let file = WeightFile::new(&w, &cfg, 4, 5).unwrap();
        assert_eq!(file.config_hash, config_hash(&cfg).unwrap());
        assert_eq!(file.config_hash.len(), 64);
        assert_eq!(file.matrix().unwrap(), w);
        let other = NetworkConfig {
            seed: 9,
            ..cfg
        };
        assert_ne!(config_hash(&other).unwrap(), file.config_hash);
    }
}
