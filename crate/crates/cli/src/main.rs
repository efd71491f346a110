//! Command-line front end: synthesize and encode recordings, characterize the
//! network, train, evaluate and run the ablation ladder.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use hdr_snn::datapipe::{self, LabeledWindow, SynthSpec};
use hdr_snn::encoders::{AdmParams, Encoder, PfmParams};
use hdr_snn::harness::{self, AblationConfig, CurveSettings, TrainSettings};
use hdr_snn::io::{self, WeightFile};
use hdr_snn::learning::{predict, train};
use hdr_snn::topology::{build_network, NetworkConfig};

#[derive(Parser)]
#[command(name = "hdr-snn", version, about = "Spiking-network EMG gesture recognition")]
struct Cli {
    /// JSON run configuration; every section is optional.
    #[arg(long, value_name = "JSON")]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Adm,
    Pfm,
}

#[derive(clap::Args)]
struct DataArgs {
    /// Window archive written by `encode`.
    #[arg(long, conflicts_with = "input")]
    windows: Option<PathBuf>,
    /// Recording CSV `t,<channels>[,label]`; synthesized when absent.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Label file `t_start_s,t_end_s,label` for an unlabeled recording.
    #[arg(long, requires = "input")]
    labels: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "adm")]
    method: Method,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic labeled EMG recording.
    Synth,
    /// Encode a recording into a window archive.
    Encode {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Input-output curve of one ablation config under Poisson drive.
    Curve {
        /// Ablation config: base, adapt, ei, ff or full.
        #[arg(long = "config", default_value = "full")]
        ablation: String,
    },
    /// Grid search of the weight unit for the most linear Full curve.
    Calibrate {
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
    /// Train the plastic weights on the whole corpus.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long = "ablation", default_value = "full")]
        ablation: String,
    },
    /// Cross-validated metrics, or frozen-weight accuracy with `--weights`.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long = "ablation", default_value = "full")]
        ablation: String,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        seeds: Vec<u64>,
    },
    /// Train and test every ablation config on identical splits.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        seeds: Vec<u64>,
    },
}

/// Run configuration file.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    network: NetworkConfig,
    synth: SynthSpec,
    adm: AdmParams,
    pfm: PfmParams,
    train: TrainSettings,
    curve: CurveSettings,
    calibration_grid: Vec<f64>,
}

impl RunConfig {
    fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let mut cfg = match path {
            Some(p) => io::read_json(p).with_context(|| format!("reading config {}", p.display()))?,
            None => RunConfig::default(),
        };
        if cfg.calibration_grid.is_empty() {
            cfg.calibration_grid = vec![40.0, 50.0, 60.0, 70.0, 80.0];
        }
        cfg.network.validate()?;
        Ok(cfg)
    }

    fn encoder(&self, method: Method) -> Encoder {
        match method {
            Method::Adm => Encoder::Adm(self.adm),
            Method::Pfm => Encoder::Pfm(self.pfm.clone()),
        }
    }
}

fn load_windows(cfg: &RunConfig, data: &DataArgs, seed: u64) -> anyhow::Result<Vec<LabeledWindow>> {
    if let Some(dir) = &data.windows {
        return Ok(io::read_window_archive(dir)?);
    }
    let encoder = cfg.encoder(data.method);
    let windows = match &data.input {
        Some(path) => {
            let mut recording = io::read_recording(path)?;
            if let Some(labels) = &data.labels {
                recording = io::apply_label_file(recording, labels)?;
            }
            harness::prepare_corpus(&recording, &encoder, 0, 0, seed)?
        }
        None => harness::synthetic_corpus(&cfg.synth, &encoder, seed)?,
    };
    Ok(windows)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let out = |name: &str| cli.out.join(name);
    let seed = cli.seed;
    match &cli.command {
        Command::Synth => {
            let spec = SynthSpec {
                seed,
                ..cfg.synth.clone()
            };
            io::write_recording(&out("synth.csv"), &datapipe::synth_emg(&spec)?)?;
        }
        Command::Encode { data } => {
            if data.windows.is_some() {
                bail!("encode takes a recording, not a window archive");
            }
            io::write_window_archive(&out("windows"), &load_windows(&cfg, data, seed)?)?;
        }
        Command::Curve { ablation } => {
            let ablation = AblationConfig::by_name(ablation)?;
            let curve = harness::io_curve(&cfg.network, ablation, &cfg.curve, seed)?;
            io::write_curves(&out("curve.csv"), std::slice::from_ref(&curve))?;
            io::write_json(&out("curve.json"), &curve)?;
        }
        Command::Calibrate { grid } => {
            let grid = grid.as_ref().unwrap_or(&cfg.calibration_grid);
            let cal = harness::calibrate_weight_unit(&cfg.network, grid, &cfg.curve, seed)?;
            io::write_curves(&out("calibration_curve.csv"), std::slice::from_ref(&cal.curve))?;
            io::write_json(&out("calibration.json"), &cal)?;
        }
        Command::Train { data, ablation } => {
            let windows = load_windows(&cfg, data, seed)?;
            let net_cfg = NetworkConfig {
                seed,
                ..AblationConfig::by_name(ablation)?.apply(&cfg.network)
            };
            let network = build_network(&net_cfg)?;
            let s = &cfg.train;
            let outcome = train(&network, &windows, s.epochs, &s.trace, &s.class_map, seed)?;
            io::write_json(
                &out("weights.json"),
                &WeightFile::new(&outcome.weights, &net_cfg, seed, s.epochs)?,
            )?;
            io::write_json(&out("epoch_mean_weights.json"), &outcome.epoch_mean_weights)?;
        }
        Command::Eval {
            data,
            ablation,
            weights,
            seeds,
        } => {
            let windows = load_windows(&cfg, data, seed)?;
            let ablation = AblationConfig::by_name(ablation)?;
            match weights {
                Some(path) => {
                    let file: WeightFile = io::read_json(path)?;
                    let net_cfg = NetworkConfig {
                        seed,
                        ..ablation.apply(&cfg.network)
                    };
                    if io::config_hash(&net_cfg)? != file.config_hash {
                        eprintln!("warning: weights were trained under a different network config");
                    }
                    let score = frozen_accuracy(&net_cfg, &file, &windows, &cfg.train, seed)?;
                    io::write_json(&out("metrics.json"), &score)?;
                }
                None => {
                    let metrics = harness::evaluate(&cfg.network, ablation, &windows, &cfg.train, seeds)?;
                    io::write_json(&out("metrics.json"), &metrics)?;
                }
            }
        }
        Command::Ablate { data, seeds } => {
            let windows = load_windows(&cfg, data, seed)?;
            let table =
                harness::ablation_run(&cfg.network, &AblationConfig::ladder(), &windows, &cfg.train, seeds)?;
            io::write_ablation_table(&out("ablation.csv"), &table)?;
            io::write_json(&out("ablation.json"), &table)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct FrozenScore {
    accuracy: f64,
    confusion: Vec<Vec<usize>>,
}

fn frozen_accuracy(
    net_cfg: &NetworkConfig,
    file: &WeightFile,
    windows: &[LabeledWindow],
    settings: &TrainSettings,
    seed: u64,
) -> anyhow::Result<FrozenScore> {
    let network = build_network(net_cfg)?;
    let weights = file.matrix()?;
    let n = settings.class_map.n_classes();
    let mut confusion = vec![vec![0usize; n]; n];
    for w in windows {
        if w.label >= n {
            bail!("window label {} outside the {n}-class map", w.label);
        }
        let p = predict(&network, &weights, w, &settings.class_map, seed)?;
        confusion[w.label][p.class] += 1;
    }
    let correct: usize = (0..n).map(|c| confusion[c][c]).sum();
    Ok(FrozenScore {
        accuracy: correct as f64 / windows.len().max(1) as f64,
        confusion,
    })
}

#[derive(Serialize)]
struct ErrorReport {
    error: String,
    message: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e
                .downcast_ref::<hdr_snn::Error>()
                .map_or("runtime", hdr_snn::Error::kind)
                .to_string();
            let report = ErrorReport {
                error: kind,
                message: format!("{e:#}"),
            };
            eprintln!("{}", serde_json::to_string(&report).expect("error report serializes"));
            ExitCode::FAILURE
        }
    }
}
