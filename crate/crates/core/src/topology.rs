//! Four-population network: input relays, feed-forward inhibition,
//! excitatory readout and recurrent inhibition.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    NeuronParams, SynapseClass, SynapseParams, DEFAULT_DT_US, DEFAULT_I_AHP_UNIT, DEFAULT_I_W_BASE,
};
use crate::error::{Error, Result};
use crate::learning::WeightMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Population {
    Input,
    Ff,
    Exc,
    Inh,
}

impl Population {
    pub const ALL: [Population; 4] = [Population::Input, Population::Ff, Population::Exc, Population::Inh];

    pub fn prefix(self) -> &'static str {
        match self {
            Population::Input => "in",
            Population::Ff => "ff",
            Population::Exc => "e",
            Population::Inh => "i",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NeuronId {
    pub pop: Population,
    pub idx: usize,
}

impl NeuronId {
    pub fn new(pop: Population, idx: usize) -> Self {
        Self { pop, idx }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connectivity {
    OneToOne,
    AllToAll,
}

/// Feature flags switched by the ablation ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    pub adaptation: bool,
    pub ei_balance: bool,
    pub ff_inhibition: bool,
}

impl Flags {
    pub const FULL: Flags = Flags {
        adaptation: true,
        ei_balance: true,
        ff_inhibition: true,
    };
    pub const BASE: Flags = Flags {
        adaptation: false,
        ei_balance: false,
        ff_inhibition: false,
    };
}

/// Per-class synapse parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynapseSet {
    pub ampa: SynapseParams,
    pub nmda: SynapseParams,
    pub gaba_a: SynapseParams,
    pub gaba_b: SynapseParams,
}

impl Default for SynapseSet {
    fn default() -> Self {
        Self {
            ampa: SynapseParams::default_for(SynapseClass::Ampa),
            nmda: SynapseParams::default_for(SynapseClass::Nmda),
            gaba_a: SynapseParams::default_for(SynapseClass::GabaA),
            gaba_b: SynapseParams::default_for(SynapseClass::GabaB),
        }
    }
}

impl SynapseSet {
    pub fn get(&self, class: SynapseClass) -> &SynapseParams {
        match class {
            SynapseClass::Ampa => &self.ampa,
            SynapseClass::Nmda => &self.nmda,
            SynapseClass::GabaA => &self.gaba_a,
            SynapseClass::GabaB => &self.gaba_b,
        }
    }
}

/// Complete network description; serialized as JSON with every field optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub n_input: usize,
    pub n_ff: usize,
    pub n_exc: usize,
    pub n_inh: usize,
    pub w_inp_ff: f64,
    pub w_ff_e: f64,
    pub w_i_e: f64,
    pub w_e_i: f64,
    pub w_i_i: f64,
    /// Plastic input-to-readout weights, `n_input × n_exc`. Drawn from
    /// `init_weight_range` with `seed` when absent.
    pub w_inp_e: Option<WeightMatrix>,
    pub init_weight_range: (f64, f64),
    pub w_max: f64,
    pub flags: Flags,
    pub inp_ff_pattern: Connectivity,
    pub ff_e_pattern: Connectivity,
    pub noise_rate: f64,
    pub noise_weight: f64,
    pub seed: u64,
    /// pA per weight unit and spike.
    pub i_w_base: f64,
    pub i_ahp_unit: f64,
    pub dt_us: f64,
    pub exc: NeuronParams,
    pub ff: NeuronParams,
    pub inh: NeuronParams,
    pub synapses: SynapseSet,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            n_input: 16,
            n_ff: 16,
            n_exc: 8,
            n_inh: 4,
            w_inp_ff: 0.5,
            w_ff_e: 3.8,
            w_i_e: 3.0,
            w_e_i: 1.7,
            w_i_i: 0.5,
            w_inp_e: None,
            init_weight_range: (0.3, 0.7),
            w_max: 2.0,
            flags: Flags::FULL,
            inp_ff_pattern: Connectivity::OneToOne,
            ff_e_pattern: Connectivity::AllToAll,
            noise_rate: 40.0,
            noise_weight: 1.0,
            seed: 0,
            i_w_base: DEFAULT_I_W_BASE,
            i_ahp_unit: DEFAULT_I_AHP_UNIT,
            dt_us: DEFAULT_DT_US,
            exc: NeuronParams::excitatory(),
            ff: NeuronParams::inhibitory(),
            inh: NeuronParams::inhibitory(),
            synapses: SynapseSet::default(),
        }
    }
}

impl NetworkConfig {
    pub fn with_flags(mut self, flags: Flags) -> Self {
        self.flags = flags;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fixed = [self.w_inp_ff, self.w_ff_e, self.w_i_e, self.w_e_i, self.w_i_i];
        if fixed.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Config("fixed weights must be non-negative".into()));
        }
        if !(self.w_max > 0.0) {
            return Err(Error::Config("w_max must be positive".into()));
        }
        let (lo, hi) = self.init_weight_range;
        if !(0.0 <= lo && lo <= hi && hi <= self.w_max) {
            return Err(Error::Config(format!("initial weight range ({lo}, {hi}) outside [0, w_max]")));
        }
        if !(self.noise_rate >= 0.0 && self.noise_weight >= 0.0) {
            return Err(Error::Config("noise rate and weight must be non-negative".into()));
        }
        if !(self.i_w_base >= 0.0 && self.i_ahp_unit >= 0.0 && self.dt_us > 0.0) {
            return Err(Error::Config("i_w_base, i_ahp_unit must be >= 0 and dt_us > 0".into()));
        }
        if self.inp_ff_pattern == Connectivity::OneToOne && self.n_input != self.n_ff {
            return Err(Error::Config(format!(
                "one-to-one input→FF needs equal sizes ({} vs {})",
                self.n_input, self.n_ff
            )));
        }
        if let Some(w) = &self.w_inp_e {
            if w.n_pre != self.n_input || w.n_post != self.n_exc || w.data.len() != w.n_pre * w.n_post {
                return Err(Error::Config(format!(
                    "plastic matrix is {}×{} ({} entries), expected {}×{}",
                    w.n_pre,
                    w.n_post,
                    w.data.len(),
                    self.n_input,
                    self.n_exc
                )));
            }
            if w.data.iter().any(|v| !(*v >= 0.0 && *v <= self.w_max)) {
                return Err(Error::Config("plastic weights outside [0, w_max]".into()));
            }
        }
        for p in [&self.exc, &self.ff, &self.inh] {
            p.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        for class in SynapseClass::ALL {
            self.synapses
                .get(class)
                .validate()
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Plastic matrix from the config, or freshly drawn from the seed.
    pub fn initial_weights(&self) -> WeightMatrix {
        if let Some(w) = &self.w_inp_e {
            return w.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let (lo, hi) = self.init_weight_range;
        let data = (0..self.n_input * self.n_exc)
            .map(|_| if hi > lo { rng.random_range(lo..hi) } else { lo })
            .collect();
        WeightMatrix {
            n_pre: self.n_input,
            n_post: self.n_exc,
            data,
        }
    }

    pub fn population_size(&self, pop: Population) -> usize {
        match pop {
            Population::Input => self.n_input,
            Population::Ff => self.n_ff,
            Population::Exc => self.n_exc,
            Population::Inh => self.n_inh,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub pre: NeuronId,
    pub post: NeuronId,
    pub weight: f64,
    pub class: SynapseClass,
    pub plastic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynapseTable {
    pub edges: Vec<Edge>,
}

impl SynapseTable {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn count(&self, pre: Population, post: Population) -> usize {
        self.edges
            .iter()
            .filter(|e| e.pre.pop == pre && e.post.pop == post)
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseAttachment {
    /// Index of the Poisson source; also its random stream.
    pub source: usize,
    pub target: NeuronId,
    pub class: SynapseClass,
    pub rate: f64,
    pub weight: f64,
}

/// Built network: connectivity, per-population parameters and noise sources.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: NetworkConfig,
    pub table: SynapseTable,
    pub exc: NeuronParams,
    pub ff: NeuronParams,
    pub inh: NeuronParams,
    pub noise: Vec<NoiseAttachment>,
    pub initial_weights: WeightMatrix,
}

impl Network {
    pub fn params(&self, pop: Population) -> Option<&NeuronParams> {
        match pop {
            Population::Input => None,
            Population::Ff => Some(&self.ff),
            Population::Exc => Some(&self.exc),
            Population::Inh => Some(&self.inh),
        }
    }
}

fn project(
    edges: &mut Vec<Edge>,
    (pre, n_pre): (Population, usize),
    (post, n_post): (Population, usize),
    pattern: Connectivity,
    weight: f64,
    class: SynapseClass,
) {
    for i in 0..n_pre {
        for j in 0..n_post {
            let keep = match pattern {
                Connectivity::OneToOne => i == j,
                Connectivity::AllToAll => !(pre == post && i == j),
            };
            if keep {
                edges.push(Edge {
                    pre: NeuronId::new(pre, i),
                    post: NeuronId::new(post, j),
                    weight,
                    class,
                    plastic: false,
                });
            }
        }
    }
}

pub fn build_network(config: &NetworkConfig) -> Result<Network> {
    config.validate()?;
    let c = config;
    let initial_weights = c.initial_weights();
    let mut edges = Vec::new();
    let input = (Population::Input, c.n_input);
    let ff = (Population::Ff, c.n_ff);
    let exc = (Population::Exc, c.n_exc);
    let inh = (Population::Inh, c.n_inh);

    project(&mut edges, input, ff, c.inp_ff_pattern, c.w_inp_ff, SynapseClass::Ampa);
    for i in 0..c.n_input {
        for j in 0..c.n_exc {
            edges.push(Edge {
                pre: NeuronId::new(Population::Input, i),
                post: NeuronId::new(Population::Exc, j),
                weight: initial_weights.get(i, j),
                class: SynapseClass::Nmda,
                plastic: true,
            });
        }
    }
    if c.flags.ff_inhibition {
        project(&mut edges, ff, exc, c.ff_e_pattern, c.w_ff_e, SynapseClass::GabaA);
    }
    if c.flags.ei_balance {
        project(&mut edges, exc, inh, Connectivity::AllToAll, c.w_e_i, SynapseClass::Ampa);
        project(&mut edges, inh, exc, Connectivity::AllToAll, c.w_i_e, SynapseClass::GabaB);
        project(&mut edges, inh, inh, Connectivity::AllToAll, c.w_i_i, SynapseClass::GabaA);
    }

    let exc_params = NeuronParams {
        adapt_enabled: c.flags.adaptation,
        i_ahp_unit: c.i_ahp_unit,
        ..c.exc
    };
    let ff_params = NeuronParams {
        i_ahp_unit: c.i_ahp_unit,
        ..c.ff
    };
    let inh_params = NeuronParams {
        i_ahp_unit: c.i_ahp_unit,
        ..c.inh
    };
    Ok(Network {
        config: c.clone(),
        table: SynapseTable { edges },
        exc: exc_params,
        ff: ff_params,
        inh: inh_params,
        noise: attach_noise(c),
        initial_weights,
    })
}

/// Two independent Poisson sources (AMPA and GABA-B) per non-input neuron.
pub fn attach_noise(config: &NetworkConfig) -> Vec<NoiseAttachment> {
    let mut out = Vec::new();
    for pop in [Population::Ff, Population::Exc, Population::Inh] {
        for idx in 0..config.population_size(pop) {
            for class in [SynapseClass::Ampa, SynapseClass::GabaB] {
                out.push(NoiseAttachment {
                    source: out.len(),
                    target: NeuronId::new(pop, idx),
                    class,
                    rate: config.noise_rate,
                    weight: config.noise_weight,
                });
            }
        }
    }
    out
}
