//! Clock-driven simulation of a built [`Network`].
//!
//! Every spike (input relay, neuron or noise source) emitted during step `k`
//! reaches its synapses at step `k + 1`, so neurons within a step only read
//! the previous step's spike buffers.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::dynamics::{NeuronKernel, NeuronState, SynapseClass, SynapseKernel};
use crate::error::{domain, Error, Result};
use crate::learning::WeightMatrix;
use crate::signal::{Spike, SpikeTrain};
use crate::topology::{Network, NeuronId, Population};

pub const MAX_PROBES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSample {
    pub time_us: f64,
    pub neuron: NeuronId,
    pub i_mem: f64,
    pub i_ahp: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub steps: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub input: SpikeTrain,
    pub ff: SpikeTrain,
    pub exc: SpikeTrain,
    pub inh: SpikeTrain,
    pub traces: Vec<ProbeSample>,
    pub stats: RunStats,
}

impl SimulationResult {
    pub fn spikes(&self, pop: Population) -> &SpikeTrain {
        match pop {
            Population::Input => &self.input,
            Population::Ff => &self.ff,
            Population::Exc => &self.exc,
            Population::Inh => &self.inh,
        }
    }
}

/// Compares recorded activity; wall-clock statistics are ignored.
impl PartialEq for SimulationResult {
    fn eq(&self, other: &Self) -> bool {
        self.input == other.input
            && self.ff == other.ff
            && self.exc == other.exc
            && self.inh == other.inh
            && self.traces == other.traces
            && self.stats.steps == other.stats.steps
    }
}

#[derive(Debug, Clone, Copy)]
struct Target {
    neuron: usize,
    class: usize,
    weight: f64,
}

struct NoiseSource {
    target: usize,
    class: usize,
    weight: f64,
    next_us: f64,
    isi: Option<Exp<f64>>,
    rng: ChaCha8Rng,
}

impl NoiseSource {
    fn advance(&mut self) {
        self.next_us = match &self.isi {
            Some(isi) => self.next_us + isi.sample(&mut self.rng) * 1e6,
            None => f64::INFINITY,
        };
    }
}

/// Stepwise simulator. Neurons are stored flat: FF, then E, then I.
pub struct Simulation<'a> {
    inputs: &'a SpikeTrain,
    dt_us: f64,
    n_steps: usize,
    step: usize,
    offsets: [usize; 3],
    pops: Vec<Population>,
    kernels: [NeuronKernel; 3],
    kernel_of: Vec<usize>,
    states: Vec<NeuronState>,
    syn: [SynapseKernel; 4],
    input_fanout: Vec<Vec<Target>>,
    neuron_fanout: Vec<Vec<Target>>,
    weights: WeightMatrix,
    noise: Vec<NoiseSource>,
    cursor: usize,
    input_counts: Vec<u32>,
    prev_input_counts: Vec<u32>,
    fired: Vec<usize>,
    prev_fired: Vec<usize>,
    noise_counts: Vec<u32>,
    prev_noise_counts: Vec<u32>,
    drive: Vec<[f64; 4]>,
    recorded: [Vec<Spike>; 4],
    probes: Vec<(NeuronId, usize)>,
    traces: Vec<ProbeSample>,
    started: Instant,
}

impl<'a> Simulation<'a> {
    /// Prepares a run over `duration_us`; noise streams derive from `seed`.
    /// The plastic matrix starts from the network's initial weights.
    pub fn new(network: &Network, inputs: &'a SpikeTrain, duration_us: f64, seed: u64) -> Result<Self> {
        Self::with_weights(network, network.initial_weights.clone(), inputs, duration_us, seed)
    }

    pub fn with_weights(
        network: &Network,
        weights: WeightMatrix,
        inputs: &'a SpikeTrain,
        duration_us: f64,
        seed: u64,
    ) -> Result<Self> {
        let cfg = &network.config;
        if inputs.n_channels() != cfg.n_input {
            return Err(Error::Shape(format!(
                "{} input channels for a network with {} inputs",
                inputs.n_channels(),
                cfg.n_input
            )));
        }
        if weights.n_pre != cfg.n_input || weights.n_post != cfg.n_exc {
            return Err(Error::Shape(format!(
                "plastic matrix {}×{} does not match {}×{}",
                weights.n_pre, weights.n_post, cfg.n_input, cfg.n_exc
            )));
        }
        if !(duration_us >= 0.0) {
            return domain(format!("duration must be non-negative, got {duration_us}"));
        }
        if inputs.events().last().is_some_and(|e| e.time_us > duration_us) {
            return domain("input events beyond the simulated duration");
        }
        let dt_us = cfg.dt_us;
        let offsets = [0, cfg.n_ff, cfg.n_ff + cfg.n_exc];
        let total = cfg.n_ff + cfg.n_exc + cfg.n_inh;
        let flat = |id: NeuronId| -> usize {
            match id.pop {
                Population::Ff => offsets[0] + id.idx,
                Population::Exc => offsets[1] + id.idx,
                Population::Inh => offsets[2] + id.idx,
                Population::Input => unreachable!("input relays are not simulated"),
            }
        };
        let mut pops = Vec::with_capacity(total);
        let mut kernel_of = Vec::with_capacity(total);
        for (k, pop) in [Population::Ff, Population::Exc, Population::Inh].into_iter().enumerate() {
            for _ in 0..cfg.population_size(pop) {
                pops.push(pop);
                kernel_of.push(k);
            }
        }
        let kernels = [
            NeuronKernel::new(&network.ff, dt_us)?,
            NeuronKernel::new(&network.exc, dt_us)?,
            NeuronKernel::new(&network.inh, dt_us)?,
        ];
        let states = pops
            .iter()
            .map(|&p| NeuronState::at_rest(network.params(p).expect("simulated population")))
            .collect();
        let syn = SynapseClass::ALL.map(|c| SynapseKernel::new(cfg.synapses.get(c), dt_us, cfg.i_w_base));
        let [a, b, c, d] = syn;
        let syn = [a?, b?, c?, d?];

        let mut input_fanout = vec![Vec::new(); cfg.n_input];
        let mut neuron_fanout = vec![Vec::new(); total];
        for e in network.table.edges.iter().filter(|e| !e.plastic) {
            let target = Target {
                neuron: flat(e.post),
                class: e.class.index(),
                weight: e.weight,
            };
            match e.pre.pop {
                Population::Input => input_fanout[e.pre.idx].push(target),
                _ => neuron_fanout[flat(e.pre)].push(target),
            }
        }

        let noise = network
            .noise
            .iter()
            .map(|n| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(n.source as u64);
                let isi = (n.rate > 0.0).then(|| Exp::new(n.rate).expect("positive rate"));
                let mut src = NoiseSource {
                    target: flat(n.target),
                    class: n.class.index(),
                    weight: n.weight,
                    next_us: 0.0,
                    isi,
                    rng,
                };
                src.advance();
                src
            })
            .collect::<Vec<_>>();
        let n_noise = noise.len();

        Ok(Self {
            inputs,
            dt_us,
            n_steps: (duration_us / dt_us).round() as usize,
            step: 0,
            offsets,
            pops,
            kernels,
            kernel_of,
            states,
            syn,
            input_fanout,
            neuron_fanout,
            weights,
            noise,
            cursor: 0,
            input_counts: vec![0; cfg.n_input],
            prev_input_counts: vec![0; cfg.n_input],
            fired: Vec::new(),
            prev_fired: Vec::new(),
            noise_counts: vec![0; n_noise],
            prev_noise_counts: vec![0; n_noise],
            drive: vec![[0.0; 4]; total],
            recorded: Default::default(),
            probes: Vec::new(),
            traces: Vec::new(),
            started: Instant::now(),
        })
    }

    /// Records `i_mem`/`i_ahp` of up to [`MAX_PROBES`] neurons every step.
    pub fn with_probes(mut self, probes: &[NeuronId]) -> Result<Self> {
        if probes.len() > MAX_PROBES {
            return domain(format!("at most {MAX_PROBES} probes, got {}", probes.len()));
        }
        self.probes = probes
            .iter()
            .map(|&id| {
                let base = match id.pop {
                    Population::Ff => self.offsets[0],
                    Population::Exc => self.offsets[1],
                    Population::Inh => self.offsets[2],
                    Population::Input => return domain("input relays carry no state to probe"),
                };
                let flat = base + id.idx;
                if flat >= self.pops.len() || self.pops[flat] != id.pop {
                    return domain(format!("no neuron {id:?}"));
                }
                Ok((id, flat))
            })
            .collect::<Result<_>>()?;
        Ok(self)
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt_us(&self) -> f64 {
        self.dt_us
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.n_steps
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.weights
    }

    /// Plastic weights; edits take effect from the next delivered spikes.
    pub fn weights_mut(&mut self) -> &mut WeightMatrix {
        &mut self.weights
    }

    /// Input relay spikes emitted during the last step, per channel.
    pub fn last_input_counts(&self) -> &[u32] {
        &self.input_counts
    }

    /// Indices (within the population) of neurons of `pop` that fired in the last step.
    pub fn last_fired(&self, pop: Population) -> impl Iterator<Item = usize> + '_ {
        let (lo, hi) = match pop {
            Population::Ff => (self.offsets[0], self.offsets[1]),
            Population::Exc => (self.offsets[1], self.offsets[2]),
            Population::Inh => (self.offsets[2], self.pops.len()),
            Population::Input => (0, 0),
        };
        self.fired.iter().filter(move |&&n| n >= lo && n < hi).map(move |&n| n - lo)
    }

    pub fn state(&self, id: NeuronId) -> Option<&NeuronState> {
        let base = match id.pop {
            Population::Ff => self.offsets[0],
            Population::Exc => self.offsets[1],
            Population::Inh => self.offsets[2],
            Population::Input => return None,
        };
        self.states.get(base + id.idx).filter(|_| self.pops[base + id.idx] == id.pop)
    }

    /// Advances one step. Returns `false` once the run is complete.
    pub fn step(&mut self) -> bool {
        if self.is_done() {
            return false;
        }
        let t_now = self.step as f64 * self.dt_us;
        let t_end = t_now + self.dt_us;

        // (1) bin external input and noise spikes of this step
        std::mem::swap(&mut self.input_counts, &mut self.prev_input_counts);
        std::mem::swap(&mut self.noise_counts, &mut self.prev_noise_counts);
        std::mem::swap(&mut self.fired, &mut self.prev_fired);
        self.input_counts.iter_mut().for_each(|c| *c = 0);
        self.noise_counts.iter_mut().for_each(|c| *c = 0);
        self.fired.clear();
        let events = self.inputs.events();
        while self.cursor < events.len() && events[self.cursor].time_us < t_end {
            let e = events[self.cursor];
            self.input_counts[e.channel] += 1;
            self.recorded[0].push(Spike {
                time_us: t_now,
                channel: e.channel,
            });
            self.cursor += 1;
        }
        for (src, count) in self.noise.iter_mut().zip(self.noise_counts.iter_mut()) {
            while src.next_us < t_end {
                *count += 1;
                src.advance();
            }
        }

        // (2) deliver spikes of the previous step and update synapses
        self.drive.iter_mut().for_each(|d| *d = [0.0; 4]);
        let exc0 = self.offsets[1];
        let nmda = SynapseClass::Nmda.index();
        for (i, &count) in self.prev_input_counts.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let c = count as f64;
            for t in &self.input_fanout[i] {
                self.drive[t.neuron][t.class] += t.weight * c;
            }
            for (j, w) in self.weights.row(i).iter().enumerate() {
                self.drive[exc0 + j][nmda] += w * c;
            }
        }
        for &n in &self.prev_fired {
            for t in &self.neuron_fanout[n] {
                self.drive[t.neuron][t.class] += t.weight;
            }
        }
        for (src, &count) in self.noise.iter().zip(&self.prev_noise_counts) {
            if count > 0 {
                self.drive[src.target][src.class] += src.weight * count as f64;
            }
        }
        for (state, drive) in self.states.iter_mut().zip(&self.drive) {
            for ((i, kernel), &d) in state.i_syn.iter_mut().zip(&self.syn).zip(drive) {
                *i = kernel.step(*i, d);
            }
        }

        // (3) neuron updates
        for (n, state) in self.states.iter_mut().enumerate() {
            if self.kernels[self.kernel_of[n]].step(state, t_now) {
                self.fired.push(n);
                let (slot, idx) = match self.pops[n] {
                    Population::Ff => (1, n - self.offsets[0]),
                    Population::Exc => (2, n - self.offsets[1]),
                    _ => (3, n - self.offsets[2]),
                };
                self.recorded[slot].push(Spike {
                    time_us: t_now,
                    channel: idx,
                });
            }
        }
        for &(id, flat) in &self.probes {
            let s = &self.states[flat];
            self.traces.push(ProbeSample {
                time_us: t_now,
                neuron: id,
                i_mem: s.i_mem,
                i_ahp: s.i_ahp,
            });
        }
        self.step += 1;
        true
    }

    pub fn run_to_end(&mut self) {
        while self.step() {}
    }

    pub fn finish(self) -> SimulationResult {
        let duration = self.n_steps as f64 * self.dt_us;
        let names = |pop: Population, n: usize| -> Vec<String> {
            (0..n).map(|i| format!("{}{i}", pop.prefix())).collect()
        };
        let [input, ff, exc, inh] = self.recorded;
        let n_in = self.input_counts.len();
        let n_ff = self.offsets[1] - self.offsets[0];
        let n_exc = self.offsets[2] - self.offsets[1];
        let n_inh = self.pops.len() - self.offsets[2];
        let train = |pop, n, events: Vec<Spike>| SpikeTrain::new(names(pop, n), events, duration.max(0.0));
        SimulationResult {
            input: train(Population::Input, n_in, input).expect("grid-ordered events"),
            ff: train(Population::Ff, n_ff, ff).expect("grid-ordered events"),
            exc: train(Population::Exc, n_exc, exc).expect("grid-ordered events"),
            inh: train(Population::Inh, n_inh, inh).expect("grid-ordered events"),
            traces: self.traces,
            stats: RunStats {
                steps: self.step,
                wall_time_s: self.started.elapsed().as_secs_f64(),
            },
        }
    }
}

/// Runs `network` on `inputs` (one channel per input relay) for `duration_us`.
pub fn run(network: &Network, inputs: &SpikeTrain, duration_us: f64, seed: u64) -> Result<SimulationResult> {
    let mut sim = Simulation::new(network, inputs, duration_us, seed)?;
    sim.run_to_end();
    Ok(sim.finish())
}

/// Per-neuron firing rate (Hz) of `pop` over `[t0, t1)` µs.
pub fn mean_rate(result: &SimulationResult, pop: Population, window: (f64, f64)) -> Result<Vec<f64>> {
    let (t0, t1) = window;
    if !(t1 > t0) {
        return domain(format!("empty rate window [{t0}, {t1})"));
    }
    let span_s = (t1 - t0) * 1e-6;
    Ok(result
        .spikes(pop)
        .counts_in(t0, t1)
        .into_iter()
        .map(|c| c as f64 / span_s)
        .collect())
}

/// Checks that no recorded neuron fired twice within its refractory period.
pub fn refractory_respected(result: &SimulationResult, network: &Network) -> bool {
    [Population::Ff, Population::Exc, Population::Inh].into_iter().all(|pop| {
        let refr_us = network.params(pop).expect("simulated population").refractory * 1e3;
        let train = result.spikes(pop);
        (0..train.n_channels()).all(|c| {
            train
                .times(c)
                .windows(2)
                .all(|w| w[1] - w[0] >= refr_us - 1e-6)
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::poisson_trains;
    use crate::topology::{build_network, Flags, NetworkConfig};

    fn quiet_config() -> NetworkConfig {
        NetworkConfig {
            noise_rate: 0.0,
            ..Default::default()
        }
    }

    fn silent_inputs(duration: f64) -> SpikeTrain {
        SpikeTrain::empty((0..16).map(|i| format!("in{i}")).collect(), duration)
    }

    #[test]
    fn no_input_no_noise_is_silent() {
        let net = build_network(&quiet_config()).unwrap();
        let inputs = silent_inputs(200_000.0);
        let res = run(&net, &inputs, 200_000.0, 1).unwrap();
        for pop in Population::ALL {
            assert!(res.spikes(pop).is_empty(), "{pop:?}");
        }
        assert_eq!(res.stats.steps, 2000);
    }

    #[test]
    fn input_spike_reaches_ff_one_step_later() {
        let net = build_network(&quiet_config()).unwrap();
        let events = vec![Spike {
            time_us: 1000.0,
            channel: 3,
        }];
        let inputs = SpikeTrain::new(silent_inputs(0.0).channels().to_vec(), events, 5000.0).unwrap();
        let mut sim = Simulation::new(&net, &inputs, 5000.0, 0).unwrap();
        let ff3 = NeuronId::new(Population::Ff, 3);
        let ff2 = NeuronId::new(Population::Ff, 2);
        for _ in 0..11 {
            sim.step();
            assert_eq!(sim.state(ff3).unwrap().i_syn[0], 0.0);
        }
        assert_eq!(sim.last_input_counts()[3], 1);
        sim.step();
        assert!(sim.state(ff3).unwrap().i_syn[SynapseClass::Ampa.index()] > 0.0);
        assert_eq!(sim.state(ff2).unwrap().i_syn[0], 0.0);
    }

    #[test]
    fn identical_runs_are_identical() {
        let net = build_network(&NetworkConfig::default()).unwrap();
        let inputs = poisson_trains(&[2000.0; 16], 300_000.0, 5).unwrap();
        let a = run(&net, &inputs, 300_000.0, 11).unwrap();
        let b = run(&net, &inputs, 300_000.0, 11).unwrap();
        assert_eq!(a, b);
        assert!(!a.exc.is_empty());
        assert!(refractory_respected(&a, &net));
    }

    #[test]
    fn wrong_channel_count_is_a_shape_error() {
        let net = build_network(&NetworkConfig::default()).unwrap();
        let inputs = poisson_trains(&[10.0; 8], 1000.0, 5).unwrap();
        assert!(matches!(run(&net, &inputs, 1000.0, 0), Err(Error::Shape(_))));
    }

    #[test]
    fn mean_rate_windows() {
        let net = build_network(&quiet_config().with_flags(Flags::BASE)).unwrap();
        let inputs = silent_inputs(1e6);
        let mut res = run(&net, &inputs, 1e6, 0).unwrap();
        assert!(mean_rate(&res, Population::Exc, (0.0, 1e6)).unwrap().iter().all(|&r| r == 0.0));
        let events = (0..10)
            .map(|k| Spike {
                time_us: k as f64 * 1e5,
                channel: 0,
            })
            .collect();
        res.exc = SpikeTrain::new(res.exc.channels().to_vec(), events, 1e6).unwrap();
        assert_eq!(mean_rate(&res, Population::Exc, (0.0, 1e6)).unwrap()[0], 10.0);
        assert_eq!(mean_rate(&res, Population::Exc, (0.0, 5e5)).unwrap()[0], 10.0);
        assert!(mean_rate(&res, Population::Exc, (5.0, 5.0)).is_err());
    }

    #[test]
    fn probes_sample_every_step() {
        let net = build_network(&NetworkConfig::default()).unwrap();
        let inputs = poisson_trains(&[500.0; 16], 10_000.0, 2).unwrap();
        let probes = [NeuronId::new(Population::Exc, 0), NeuronId::new(Population::Inh, 1)];
        let mut sim = Simulation::new(&net, &inputs, 10_000.0, 0).unwrap().with_probes(&probes).unwrap();
        sim.run_to_end();
        let res = sim.finish();
        assert_eq!(res.traces.len(), 200);
        assert!(res.traces.iter().all(|s| s.i_mem >= 0.0 && s.i_ahp >= 0.0));
        let too_many = vec![NeuronId::new(Population::Exc, 0); 9];
        assert!(Simulation::new(&net, &inputs, 10_000.0, 0).unwrap().with_probes(&too_many).is_err());
    }
}
