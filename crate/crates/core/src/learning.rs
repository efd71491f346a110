//! Delta-rule training of the plastic input-to-readout weights.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datapipe::LabeledWindow;
use crate::engine::Simulation;
use crate::error::{domain, Error, Result};
use crate::topology::{Network, Population};

/// Dense `n_pre × n_post` matrix stored row-major (one row per input).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    pub n_pre: usize,
    pub n_post: usize,
    pub data: Vec<f64>,
}

impl WeightMatrix {
    pub fn filled(n_pre: usize, n_post: usize, value: f64) -> Self {
        Self {
            n_pre,
            n_post,
            data: vec![value; n_pre * n_post],
        }
    }

    #[inline]
    pub fn get(&self, pre: usize, post: usize) -> f64 {
        self.data[pre * self.n_post + post]
    }

    #[inline]
    pub fn row(&self, pre: usize) -> &[f64] {
        &self.data[pre * self.n_post..(pre + 1) * self.n_post]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len().max(1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceParams {
    /// Trace time constant (ms).
    pub tau_x: f64,
    /// Trace jump per spike.
    pub increment: f64,
    pub teacher_value: f64,
    pub alpha: f64,
    pub w_max: f64,
}

impl Default for TraceParams {
    fn default() -> Self {
        Self {
            tau_x: 50.0,
            increment: 0.04,
            teacher_value: 0.1,
            alpha: 5e-4,
            w_max: 2.0,
        }
    }
}

impl TraceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_x > 0.0 && self.alpha > 0.0 && self.teacher_value > 0.0) {
            return domain("tau_x, alpha and teacher_value must be positive");
        }
        if !(self.increment >= 0.0 && self.w_max > 0.0) {
            return domain("trace increment must be >= 0 and w_max > 0");
        }
        Ok(())
    }

    pub fn decay(&self, dt_us: f64) -> f64 {
        (-dt_us / (self.tau_x * 1e3)).exp()
    }
}

/// Classes mapped onto disjoint pairs of readout neurons.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassMap {
    pub names: Vec<String>,
    pub pairs: Vec<[usize; 2]>,
}

impl ClassMap {
    /// Three gestures and rest on pairs {0,1}, {2,3}, {4,5}, {6,7}.
    pub fn four_class() -> Self {
        Self {
            names: ["rock", "paper", "scissors", "rest"].map(String::from).to_vec(),
            pairs: vec![[0, 1], [2, 3], [4, 5], [6, 7]],
        }
    }

    /// Gestures only; the last pair stays unused.
    pub fn three_class() -> Self {
        Self {
            names: ["rock", "paper", "scissors"].map(String::from).to_vec(),
            pairs: vec![[0, 1], [2, 3], [4, 5]],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.pairs.len()
    }

    pub fn validate(&self, n_exc: usize) -> Result<()> {
        if self.names.len() != self.pairs.len() {
            return Err(Error::Config("class names and pairs differ in length".into()));
        }
        let mut used = vec![false; n_exc];
        for pair in &self.pairs {
            for &n in pair {
                if n >= n_exc || used[n] {
                    return Err(Error::Config(format!("pair neuron {n} out of range or shared")));
                }
                used[n] = true;
            }
        }
        Ok(())
    }

    /// Teacher vector over the readout neurons for `class`.
    pub fn teacher(&self, class: usize, n_exc: usize, value: f64) -> Vec<f64> {
        let mut t = vec![0.0; n_exc];
        for &n in &self.pairs[class] {
            t[n] = value;
        }
        t
    }
}

/// Decays every trace by `exp(-dt/τx)` and adds `increment` per spike.
pub fn update_traces(traces: &mut [f64], spikes: &[u32], dt_us: f64, params: &TraceParams) -> Result<()> {
    if traces.len() != spikes.len() {
        return Err(Error::Shape(format!("{} traces, {} spike counts", traces.len(), spikes.len())));
    }
    if !(dt_us > 0.0) {
        return domain(format!("dt must be positive, got {dt_us}"));
    }
    let decay = params.decay(dt_us);
    for (x, &n) in traces.iter_mut().zip(spikes) {
        *x = *x * decay + params.increment * n as f64;
    }
    Ok(())
}

/// `w_ji += α (T_j − y_j) x_i`, clipped to `[0, w_max]`.
pub fn delta_update(
    w: &mut WeightMatrix,
    x: &[f64],
    y: &[f64],
    teacher: &[f64],
    params: &TraceParams,
) -> Result<()> {
    if x.len() != w.n_pre || y.len() != w.n_post || teacher.len() != w.n_post {
        return Err(Error::Shape(format!(
            "delta rule on {}×{} weights with |x|={}, |y|={}, |T|={}",
            w.n_pre,
            w.n_post,
            x.len(),
            y.len(),
            teacher.len()
        )));
    }
    let n_post = w.n_post;
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let row = &mut w.data[i * n_post..(i + 1) * n_post];
        for ((wij, &tj), &yj) in row.iter_mut().zip(teacher).zip(y) {
            *wij = (*wij + params.alpha * (tj - yj) * xi).clamp(0.0, params.w_max);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub weights: WeightMatrix,
    /// Mean plastic weight before training and after each epoch.
    pub epoch_mean_weights: Vec<f64>,
    /// Full matrix after each epoch.
    pub epoch_snapshots: Vec<WeightMatrix>,
}

/// Noise seed of a window, independent of its position in a dataset.
pub fn window_seed(seed: u64, window: &LabeledWindow, salt: u64) -> u64 {
    let s = &window.source;
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for v in [s.subject as u64, s.session as u64, s.offset as u64, salt] {
        h = (h ^ v).wrapping_mul(0x100_0000_01B3).rotate_left(29);
    }
    h
}

fn check_window(network: &Network, window: &LabeledWindow, class_map: &ClassMap) -> Result<()> {
    if window.label >= class_map.n_classes() {
        return Err(Error::Config(format!(
            "window label {} outside the {}-class map",
            window.label,
            class_map.n_classes()
        )));
    }
    if window.spikes.n_channels() != network.config.n_input {
        return Err(Error::Shape(format!(
            "window has {} channels, network {} inputs",
            window.spikes.n_channels(),
            network.config.n_input
        )));
    }
    Ok(())
}

/// Trains the plastic matrix online: each window is simulated from rest
/// while traces and weights update every step; weights carry over between
/// windows. Windows are visited in a seeded order that changes per epoch.
pub fn train(
    network: &Network,
    dataset: &[LabeledWindow],
    epochs: usize,
    params: &TraceParams,
    class_map: &ClassMap,
    seed: u64,
) -> Result<TrainOutcome> {
    params.validate()?;
    class_map.validate(network.config.n_exc)?;
    if dataset.is_empty() {
        return domain("training needs at least one window");
    }
    for w in dataset {
        check_window(network, w, class_map)?;
    }
    let n_in = network.config.n_input;
    let n_exc = network.config.n_exc;
    let mut weights = network.initial_weights.clone();
    let mut epoch_mean_weights = vec![weights.mean()];
    let mut epoch_snapshots = Vec::with_capacity(epochs);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; n_in];
    let mut y = vec![0.0; n_exc];
    let mut exc_counts = vec![0u32; n_exc];
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        for &k in &order {
            let window = &dataset[k];
            let teacher = class_map.teacher(window.label, n_exc, params.teacher_value);
            let noise_seed = window_seed(seed, window, epoch as u64);
            let mut sim = Simulation::with_weights(
                network,
                weights,
                &window.spikes,
                window.spikes.duration_us(),
                noise_seed,
            )?;
            let dt = sim.dt_us();
            x.iter_mut().for_each(|v| *v = 0.0);
            y.iter_mut().for_each(|v| *v = 0.0);
            while sim.step() {
                exc_counts.iter_mut().for_each(|c| *c = 0);
                for j in sim.last_fired(Population::Exc) {
                    exc_counts[j] += 1;
                }
                update_traces(&mut x, sim.last_input_counts(), dt, params)?;
                update_traces(&mut y, &exc_counts, dt, params)?;
                delta_update(sim.weights_mut(), &x, &y, &teacher, params)?;
            }
            weights = sim.weights().clone();
        }
        epoch_mean_weights.push(weights.mean());
        epoch_snapshots.push(weights.clone());
    }
    Ok(TrainOutcome {
        weights,
        epoch_mean_weights,
        epoch_snapshots,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: usize,
    /// Summed spike count of each class's neuron pair.
    pub pair_counts: Vec<usize>,
    /// Mean readout rate over the window (Hz).
    pub mean_rate: f64,
}

/// Class whose pair has the largest count; ties go to the lowest index.
pub fn argmax_class(pair_counts: &[usize]) -> usize {
    let mut best = 0;
    for (c, &n) in pair_counts.iter().enumerate() {
        if n > pair_counts[best] {
            best = c;
        }
    }
    best
}

/// Simulates `window` with frozen `weights` and reads out the winning pair.
pub fn predict(
    network: &Network,
    weights: &WeightMatrix,
    window: &LabeledWindow,
    class_map: &ClassMap,
    seed: u64,
) -> Result<Prediction> {
    if window.spikes.n_channels() != network.config.n_input {
        return Err(Error::Shape(format!(
            "window has {} channels, network {} inputs",
            window.spikes.n_channels(),
            network.config.n_input
        )));
    }
    let duration = window.spikes.duration_us();
    let mut sim = Simulation::with_weights(
        network,
        weights.clone(),
        &window.spikes,
        duration,
        window_seed(seed, window, u64::MAX),
    )?;
    sim.run_to_end();
    let result = sim.finish();
    let counts = result.exc.counts();
    let pair_counts: Vec<usize> = class_map.pairs.iter().map(|p| counts[p[0]] + counts[p[1]]).collect();
    let span_s = (duration * 1e-6).max(f64::MIN_POSITIVE);
    let mean_rate = counts.iter().sum::<usize>() as f64 / counts.len().max(1) as f64 / span_s;
    Ok(Prediction {
        class: argmax_class(&pair_counts),
        pair_counts,
        mean_rate,
    })
}
