//! Experiment orchestration: input-output curves, weight-unit calibration,
//! train/evaluate runs and the ablation ladder.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datapipe::{self, LabeledWindow, SynthSpec, WINDOW_MS};
use crate::encoders::{poisson_trains, Encoder};
use crate::engine::{mean_rate, run};
use crate::error::{domain, Error, Result};
use crate::learning::{predict, train, ClassMap, TraceParams};
use crate::signal::AnalogRecording;
use crate::topology::{build_network, Flags, NetworkConfig, Population};

/// One rung of the ablation ladder; additions are relative to Base.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub name: &'static str,
    pub flags: Flags,
}

impl AblationConfig {
    pub const BASE: AblationConfig = AblationConfig {
        name: "Base",
        flags: Flags::BASE,
    };
    pub const ADAPT: AblationConfig = AblationConfig {
        name: "+adapt",
        flags: Flags {
            adaptation: true,
            ei_balance: false,
            ff_inhibition: false,
        },
    };
    pub const EI: AblationConfig = AblationConfig {
        name: "+EI",
        flags: Flags {
            adaptation: false,
            ei_balance: true,
            ff_inhibition: false,
        },
    };
    pub const FF: AblationConfig = AblationConfig {
        name: "+FF",
        flags: Flags {
            adaptation: false,
            ei_balance: false,
            ff_inhibition: true,
        },
    };
    pub const FULL: AblationConfig = AblationConfig {
        name: "Full",
        flags: Flags::FULL,
    };

    pub fn ladder() -> [AblationConfig; 5] {
        [Self::BASE, Self::ADAPT, Self::EI, Self::FF, Self::FULL]
    }

    /// Accepts the ladder names case-insensitively, with or without the `+`.
    pub fn by_name(name: &str) -> Result<AblationConfig> {
        let wanted = name.trim_start_matches('+').to_ascii_lowercase();
        Self::ladder()
            .into_iter()
            .find(|c| c.name.trim_start_matches('+').eq_ignore_ascii_case(&wanted))
            .ok_or_else(|| Error::Config(format!("unknown ablation config '{name}'")))
    }

    pub fn apply(&self, config: &NetworkConfig) -> NetworkConfig {
        config.clone().with_flags(self.flags)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IoCurve {
    pub config: String,
    /// Input rate per channel (Hz).
    pub rates: Vec<f64>,
    /// Mean E-population rate (Hz) at each input rate.
    pub output: Vec<f64>,
}

impl IoCurve {
    pub fn r2(&self) -> f64 {
        linear_fit_r2(&self.rates, &self.output)
    }

    /// Non-decreasing up to `tol` times the curve maximum between neighbours.
    pub fn is_monotone(&self, tol: f64) -> bool {
        let slack = tol * self.output.iter().cloned().fold(0.0, f64::max);
        self.output.windows(2).all(|w| w[1] >= w[0] - slack)
    }

    pub fn rate_at(&self, input: f64) -> Option<f64> {
        self.rates
            .iter()
            .position(|r| (r - input).abs() < 1e-9)
            .map(|k| self.output[k])
    }
}

/// Settings of the IO-curve sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurveSettings {
    pub rates: Vec<f64>,
    pub duration_us: f64,
    pub discard_us: f64,
}

impl Default for CurveSettings {
    /// 17 points from 0 to 8 kHz, 1 s each, first 200 ms discarded.
    fn default() -> Self {
        Self {
            rates: (0..=16).map(|k| k as f64 * 500.0).collect(),
            duration_us: 1e6,
            discard_us: 2e5,
        }
    }
}

/// Drives every input with an independent Poisson train at each rate and
/// records the mean E rate after the onset transient. Plastic weights stay
/// at their initial values.
pub fn io_curve(
    config: &NetworkConfig,
    ablation: AblationConfig,
    settings: &CurveSettings,
    seed: u64,
) -> Result<IoCurve> {
    if !(settings.discard_us >= 0.0 && settings.discard_us < settings.duration_us) {
        return domain("curve discard period must lie inside the run");
    }
    if settings.rates.iter().any(|r| !(*r >= 0.0)) {
        return domain("input rates must be non-negative");
    }
    let network = build_network(&ablation.apply(config))?;
    let n_in = network.config.n_input;
    let output = settings
        .rates
        .par_iter()
        .enumerate()
        .map(|(k, &rate)| {
            let point_seed = seed.wrapping_add(k as u64 * 7919);
            let inputs = poisson_trains(&vec![rate; n_in], settings.duration_us, point_seed)?;
            let result = run(&network, &inputs, settings.duration_us, point_seed ^ 0x5eed)?;
            let rates = mean_rate(&result, Population::Exc, (settings.discard_us, settings.duration_us))?;
            Ok(rates.iter().sum::<f64>() / rates.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(IoCurve {
        config: ablation.name.to_string(),
        rates: settings.rates.clone(),
        output,
    })
}

/// Coefficient of determination of the least-squares line through the
/// points; 0 when `ys` has no variance.
pub fn linear_fit_r2(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return 0.0;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy * sxy / (sxx * syy)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub i_w_base: f64,
    pub r2: f64,
    /// `(i_w_base, R²)` for every grid point, in grid order.
    pub grid: Vec<(f64, f64)>,
    pub curve: IoCurve,
}

/// Picks the weight unit whose Full-config curve is most linear; ties go to
/// the smaller unit.
pub fn calibrate_weight_unit(
    config: &NetworkConfig,
    grid: &[f64],
    settings: &CurveSettings,
    seed: u64,
) -> Result<Calibration> {
    if grid.is_empty() {
        return domain("calibration grid is empty");
    }
    let curves = grid
        .iter()
        .map(|&unit| {
            let cfg = NetworkConfig {
                i_w_base: unit,
                ..config.clone()
            };
            io_curve(&cfg, AblationConfig::FULL, settings, seed)
        })
        .collect::<Result<Vec<IoCurve>>>()?;
    let mut best = 0;
    for k in 1..grid.len() {
        let (r_k, r_b) = (curves[k].r2(), curves[best].r2());
        if r_k > r_b || (r_k == r_b && grid[k] < grid[best]) {
            best = k;
        }
    }
    Ok(Calibration {
        i_w_base: grid[best],
        r2: curves[best].r2(),
        grid: grid.iter().zip(&curves).map(|(&u, c)| (u, c.r2())).collect(),
        curve: curves[best].clone(),
    })
}

/// Training and read-out settings shared by every evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub epochs: usize,
    pub trace: TraceParams,
    pub class_map: ClassMap,
    pub split_ratio: f64,
    pub folds: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            epochs: 10,
            trace: TraceParams::default(),
            class_map: ClassMap::four_class(),
            split_ratio: 0.8,
            folds: 3,
        }
    }
}

/// Synthesizes a recording, windows it, drops label-bleed windows,
/// encodes and balances the classes.
pub fn synthetic_corpus(spec: &SynthSpec, encoder: &Encoder, seed: u64) -> Result<Vec<LabeledWindow>> {
    prepare_corpus(&datapipe::synth_emg(spec)?, encoder, 0, 0, seed)
}

/// Windows a labeled recording, drops label-bleed windows, encodes and
/// balances the classes.
pub fn prepare_corpus(
    recording: &AnalogRecording,
    encoder: &Encoder,
    subject: u32,
    session: u32,
    seed: u64,
) -> Result<Vec<LabeledWindow>> {
    let windows = datapipe::segment(recording, WINDOW_MS, subject, session, seed)?;
    let windows = datapipe::filter_label_bleed(windows, recording)?;
    let encoded = datapipe::encode_windows(recording, &windows, encoder)?;
    Ok(datapipe::oversample(encoded, seed))
}

/// Concatenates windows of several sessions before any split.
pub fn pool(sessions: Vec<Vec<LabeledWindow>>) -> Vec<LabeledWindow> {
    sessions.into_iter().flatten().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub accuracy: f64,
    pub per_class_recall: Vec<f64>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub mean_rate: f64,
    pub mean_weight: f64,
}

/// Trains on `train_set` from the network's initial weights, freezes them and
/// scores `test_set`.
pub fn train_and_score(
    config: &NetworkConfig,
    train_set: &[LabeledWindow],
    test_set: &[LabeledWindow],
    settings: &TrainSettings,
    seed: u64,
) -> Result<SplitMetrics> {
    let network = build_network(config)?;
    let outcome = train(&network, train_set, settings.epochs, &settings.trace, &settings.class_map, seed)?;
    let predictions = test_set
        .par_iter()
        .map(|w| predict(&network, &outcome.weights, w, &settings.class_map, seed))
        .collect::<Result<Vec<_>>>()?;
    let n = settings.class_map.n_classes();
    let mut confusion = vec![vec![0usize; n]; n];
    for (w, p) in test_set.iter().zip(&predictions) {
        confusion[w.label][p.class] += 1;
    }
    let correct: usize = (0..n).map(|c| confusion[c][c]).sum();
    let per_class_recall = confusion
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let total: usize = row.iter().sum();
            if total == 0 {
                0.0
            } else {
                row[c] as f64 / total as f64
            }
        })
        .collect();
    let mean_rate = predictions.iter().map(|p| p.mean_rate).sum::<f64>() / predictions.len().max(1) as f64;
    Ok(SplitMetrics {
        accuracy: correct as f64 / test_set.len().max(1) as f64,
        per_class_recall,
        confusion,
        mean_rate,
        mean_weight: outcome.weights.mean(),
    })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
    (m, v.sqrt())
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => 0.0,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub config: String,
    pub accuracy: f64,
    pub accuracy_std: f64,
    /// Per-class recall averaged over folds and seeds.
    pub per_class_recall: Vec<f64>,
    /// Confusion matrix summed over folds and seeds.
    pub confusion: Vec<Vec<usize>>,
    pub mean_rate: f64,
    pub folds: Vec<SplitMetrics>,
}

/// k-fold cross-validation repeated for each seed.
pub fn evaluate(
    config: &NetworkConfig,
    ablation: AblationConfig,
    windows: &[LabeledWindow],
    settings: &TrainSettings,
    seeds: &[u64],
) -> Result<Metrics> {
    let cfg = ablation.apply(config);
    let mut cells = Vec::new();
    for &seed in seeds {
        for (train_set, test_set) in datapipe::kfold(windows, settings.folds, seed)? {
            cells.push((seed, train_set, test_set));
        }
    }
    let folds = cells
        .par_iter()
        .map(|(seed, tr, te)| {
            let cfg = NetworkConfig {
                seed: *seed,
                ..cfg.clone()
            };
            train_and_score(&cfg, tr, te, settings, *seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = settings.class_map.n_classes();
    let accs: Vec<f64> = folds.iter().map(|f| f.accuracy).collect();
    let (accuracy, accuracy_std) = mean_std(&accs);
    let mut confusion = vec![vec![0usize; n]; n];
    let mut per_class_recall = vec![0.0; n];
    for f in &folds {
        for (r, row) in f.confusion.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                confusion[r][c] += v;
            }
        }
        for (acc, r) in per_class_recall.iter_mut().zip(&f.per_class_recall) {
            *acc += r / folds.len() as f64;
        }
    }
    let mean_rate = folds.iter().map(|f| f.mean_rate).sum::<f64>() / folds.len().max(1) as f64;
    Ok(Metrics {
        config: ablation.name.to_string(),
        accuracy,
        accuracy_std,
        per_class_recall,
        confusion,
        mean_rate,
        folds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub config: String,
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub median: f64,
    pub mean: f64,
    pub std: f64,
    pub mean_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, name: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.config == name)
    }
}

/// Trains and tests every config on identical splits: one stratified split
/// per seed, shared by all configs.
pub fn ablation_run(
    config: &NetworkConfig,
    configs: &[AblationConfig],
    windows: &[LabeledWindow],
    settings: &TrainSettings,
    seeds: &[u64],
) -> Result<AblationTable> {
    if seeds.is_empty() {
        return domain("ablation needs at least one seed");
    }
    let splits = seeds
        .iter()
        .map(|&s| datapipe::split(windows, settings.split_ratio, s))
        .collect::<Result<Vec<_>>>()?;
    let cells: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|c| (0..seeds.len()).map(move |s| (c, s)))
        .collect();
    let results = cells
        .par_iter()
        .map(|&(c, s)| {
            let cfg = NetworkConfig {
                seed: seeds[s],
                ..configs[c].apply(config)
            };
            let (tr, te) = &splits[s];
            train_and_score(&cfg, tr, te, settings, seeds[s])
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = configs
        .iter()
        .enumerate()
        .map(|(c, ablation)| {
            let per_seed = &results[c * seeds.len()..(c + 1) * seeds.len()];
            let accuracies: Vec<f64> = per_seed.iter().map(|m| m.accuracy).collect();
            let (mean, std) = mean_std(&accuracies);
            AblationRow {
                config: ablation.name.to_string(),
                seeds: seeds.to_vec(),
                median: median(&accuracies),
                mean,
                std,
                mean_rate: per_seed.iter().map(|m| m.mean_rate).sum::<f64>() / per_seed.len() as f64,
                accuracies,
            }
        })
        .collect();
    Ok(AblationTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladder_flags() {
        let ladder = AblationConfig::ladder();
        assert_eq!(ladder[0].flags, Flags::BASE);
        assert_eq!(ladder[4].flags, Flags::FULL);
        for single in &ladder[1..4] {
            let f = single.flags;
            let on = [f.adaptation, f.ei_balance, f.ff_inhibition].iter().filter(|b| **b).count();
            assert_eq!(on, 1, "{}", single.name);
        }
        assert_eq!(AblationConfig::by_name("ff").unwrap().name, "+FF");
        assert_eq!(AblationConfig::by_name("full").unwrap().name, "Full");
        assert!(AblationConfig::by_name("nope").is_err());
    }

    #[test]
    fn r2_of_exact_and_flat_lines() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x + 1.0).collect();
        assert!((linear_fit_r2(&xs, &ys) - 1.0).abs() < 1e-12);
        assert_eq!(linear_fit_r2(&xs, &[2.0; 10]), 0.0);
        // y = x² on 0..9: r = Sxy / sqrt(Sxx Syy), computed independently
        let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let r2 = linear_fit_r2(&xs, &sq);
        assert!((r2 - 0.926_773_455_377_574_4).abs() < 1e-12, "{r2}");
    }

    #[test]
    fn monotone_tolerance() {
        let curve = IoCurve {
            config: "x".into(),
            rates: vec![0.0, 1.0, 2.0],
            output: vec![0.0, 100.0, 99.0],
        };
        assert!(curve.is_monotone(0.02));
        assert!(!curve.is_monotone(0.0));
        assert_eq!(curve.rate_at(1.0), Some(100.0));
    }

    #[test]
    fn median_and_spread() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 1.0));
    }

    #[test]
    fn grid_of_one_returns_it() {
        let settings = CurveSettings {
            rates: vec![0.0, 1000.0],
            duration_us: 50_000.0,
            discard_us: 10_000.0,
        };
        let cal = calibrate_weight_unit(&NetworkConfig::default(), &[42.0], &settings, 1).unwrap();
        assert_eq!(cal.i_w_base, 42.0);
        assert_eq!(cal.grid.len(), 1);
    }
}
