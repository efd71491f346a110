//! Behavioral model of the adaptive integrate-and-fire neuron and of the
//! DPI log-domain synapse.
//!
//! Currents are in pA, capacitances in pF, time constants in seconds and
//! simulation times in µs. Every state variable is integrated with
//! exponential Euler: exact decay over the step plus impulse increments.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Thermal voltage (V).
pub const U_T: f64 = 0.025;
/// Subthreshold slope factor.
pub const KAPPA: f64 = 0.7;
/// Synaptic capacitance shared by all synapse classes (pF).
pub const C_SYN: f64 = 1.5;
/// Current contributed per dimensionless weight unit and spike (pA).
pub const DEFAULT_I_W_BASE: f64 = 60.0;
/// After-hyperpolarization increment unit (pA), scaled by `adapt_gain`.
pub const DEFAULT_I_AHP_UNIT: f64 = 40.0;
/// Default integration step (µs).
pub const DEFAULT_DT_US: f64 = 100.0;

/// Translinear time constant `C·U_T / (κ·I_τ)` in seconds.
pub fn time_constant(i_tau: f64, c: f64) -> Result<f64> {
    if !(i_tau > 0.0) || !(c > 0.0) {
        return domain(format!(
            "time constant needs positive current and capacitance (i_tau={i_tau} pA, c={c} pF)"
        ));
    }
    // pF / pA cancels, leaving seconds.
    Ok(c * U_T / (KAPPA * i_tau))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SynapseClass {
    Ampa,
    Nmda,
    GabaA,
    GabaB,
}

impl SynapseClass {
    pub const ALL: [SynapseClass; 4] = [
        SynapseClass::Ampa,
        SynapseClass::Nmda,
        SynapseClass::GabaA,
        SynapseClass::GabaB,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_excitatory(self) -> bool {
        matches!(self, SynapseClass::Ampa | SynapseClass::Nmda)
    }

    pub fn name(self) -> &'static str {
        match self {
            SynapseClass::Ampa => "AMPA",
            SynapseClass::Nmda => "NMDA",
            SynapseClass::GabaA => "GABA_A",
            SynapseClass::GabaB => "GABA_B",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynapseParams {
    pub class_tag: SynapseClass,
    pub i_tau: f64,
    pub i_gain: f64,
    pub c_syn: f64,
    pub excitatory: bool,
}

impl SynapseParams {
    /// Default parameter set for a synapse class.
    ///
    /// AMPA, NMDA and GABA-B leak currents follow the hardware table (10, 5
    /// and 10 pA). GABA-A has no tabulated value and shares the AMPA leak.
    /// The gain currents set the charge each weight unit delivers. They were
    /// tuned so that the unablated network responds linearly to 0–8 kHz
    /// Poisson input while the uninhibited one saturates.
    pub fn default_for(class: SynapseClass) -> Self {
        let (i_tau, i_gain) = match class {
            SynapseClass::Ampa => (10.0, 160.0),
            SynapseClass::Nmda => (5.0, 10.0),
            SynapseClass::GabaA => (10.0, 20.0),
            SynapseClass::GabaB => (10.0, 400.0),
        };
        Self {
            class_tag: class,
            i_tau,
            i_gain,
            c_syn: C_SYN,
            excitatory: class.is_excitatory(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.i_tau > 0.0 && self.i_gain > 0.0 && self.c_syn > 0.0) {
            return domain(format!(
                "{} synapse needs positive i_tau, i_gain and c_syn",
                self.class_tag.name()
            ));
        }
        if self.excitatory != self.class_tag.is_excitatory() {
            return domain(format!(
                "{} synapse has the wrong excitatory flag",
                self.class_tag.name()
            ));
        }
        Ok(())
    }

    pub fn tau(&self) -> Result<f64> {
        time_constant(self.i_tau, self.c_syn)
    }
}

/// Per-step coefficients of one synapse class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynapseKernel {
    pub decay: f64,
    /// Current added per spike of unit weight.
    pub unit_increment: f64,
}

impl SynapseKernel {
    pub fn new(params: &SynapseParams, dt_us: f64, i_w_base: f64) -> Result<Self> {
        params.validate()?;
        if !(dt_us > 0.0) {
            return domain(format!("dt must be positive, got {dt_us} µs"));
        }
        if !(i_w_base >= 0.0) {
            return domain(format!("weight unit must be non-negative, got {i_w_base}"));
        }
        let tau = params.tau()?;
        Ok(Self {
            decay: (-dt_us * 1e-6 / tau).exp(),
            unit_increment: i_w_base * params.i_gain / params.i_tau,
        })
    }

    /// `drive` is the sum of `weight · n_spikes` over the incoming spikes.
    #[inline]
    pub fn step(&self, state: f64, drive: f64) -> f64 {
        (state * self.decay + drive * self.unit_increment).max(0.0)
    }
}

/// Advances one synaptic current by `dt_us`: exact decay, then one increment
/// of `i_w_base · i_gain / i_tau` per spike and weight unit.
pub fn step_synapse(
    state: f64,
    params: &SynapseParams,
    dt_us: f64,
    n_spikes: u32,
    weight: f64,
    i_w_base: f64,
) -> Result<f64> {
    if !(weight >= 0.0) {
        return domain(format!("weight must be non-negative, got {weight}"));
    }
    if !(state >= 0.0) {
        return domain(format!("synaptic current must be non-negative, got {state}"));
    }
    let kernel = SynapseKernel::new(params, dt_us, i_w_base)?;
    Ok(kernel.step(state, n_spikes as f64 * weight))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronParams {
    /// Membrane capacitance (pF).
    pub c_mem: f64,
    pub i_leak: f64,
    pub i_gain: f64,
    pub i_thr: f64,
    pub i_reset: f64,
    pub i_const: f64,
    /// Refractory period (ms).
    pub refractory: f64,
    pub adapt_i_tau: f64,
    pub adapt_gain: f64,
    pub adapt_enabled: bool,
    /// Unit of the after-hyperpolarization jump per spike (pA).
    #[serde(default = "default_ahp_unit")]
    pub i_ahp_unit: f64,
}

fn default_ahp_unit() -> f64 {
    DEFAULT_I_AHP_UNIT
}

impl NeuronParams {
    /// Readout (excitatory) population defaults.
    pub fn excitatory() -> Self {
        Self {
            c_mem: 2.0,
            i_leak: 5.0,
            i_gain: 5.0,
            i_thr: 2000.0,
            i_reset: 1.2,
            i_const: 1.0,
            refractory: 3.0,
            adapt_i_tau: 0.04,
            adapt_gain: 1.5,
            adapt_enabled: true,
            i_ahp_unit: DEFAULT_I_AHP_UNIT,
        }
    }

    /// Inhibitory (feed-forward and recurrent) population defaults.
    pub fn inhibitory() -> Self {
        Self {
            refractory: 1.0,
            adapt_enabled: false,
            ..Self::excitatory()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let currents = [
            self.i_leak,
            self.i_gain,
            self.i_thr,
            self.i_reset,
            self.i_const,
            self.adapt_i_tau,
            self.i_ahp_unit,
        ];
        if currents.iter().any(|c| !(*c >= 0.0)) {
            return domain("neuron currents must be non-negative");
        }
        if !(self.c_mem > 0.0 && self.i_leak > 0.0 && self.adapt_i_tau > 0.0) {
            return domain("c_mem, i_leak and adapt_i_tau must be positive");
        }
        if !(self.i_thr > self.i_reset) {
            return domain(format!(
                "threshold {} pA must exceed reset {} pA",
                self.i_thr, self.i_reset
            ));
        }
        if !(self.refractory >= 0.0) || !(self.adapt_gain >= 0.0) {
            return domain("refractory period and adaptation gain must be non-negative");
        }
        Ok(())
    }

    pub fn tau_mem(&self) -> Result<f64> {
        time_constant(self.i_leak, self.c_mem)
    }

    pub fn tau_ahp(&self) -> Result<f64> {
        time_constant(self.adapt_i_tau, self.c_mem)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronState {
    pub i_mem: f64,
    pub i_ahp: f64,
    /// Synaptic currents indexed by [`SynapseClass::index`].
    pub i_syn: [f64; 4],
    pub refractory_until: f64,
}

impl NeuronState {
    pub fn at_rest(params: &NeuronParams) -> Self {
        Self {
            i_mem: params.i_reset,
            i_ahp: 0.0,
            i_syn: [0.0; 4],
            refractory_until: f64::NEG_INFINITY,
        }
    }

    /// Net input current after subtractive inhibition and adaptation, clamped at zero.
    pub fn input_current(&self, params: &NeuronParams) -> f64 {
        let s = &self.i_syn;
        let net = s[SynapseClass::Ampa.index()] + s[SynapseClass::Nmda.index()]
            - s[SynapseClass::GabaA.index()]
            - s[SynapseClass::GabaB.index()]
            + params.i_const
            - self.i_ahp;
        net.max(0.0)
    }
}

/// Per-step coefficients of one neuron population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronKernel {
    pub params: NeuronParams,
    dt_us: f64,
    tau_mem: f64,
    mem_decay: f64,
    ahp_decay: f64,
    ahp_jump: f64,
    refractory_us: f64,
}

impl NeuronKernel {
    pub fn new(params: &NeuronParams, dt_us: f64) -> Result<Self> {
        params.validate()?;
        if !(dt_us > 0.0) {
            return domain(format!("dt must be positive, got {dt_us} µs"));
        }
        let tau_mem = params.tau_mem()?;
        let tau_ahp = params.tau_ahp()?;
        Ok(Self {
            params: *params,
            dt_us,
            tau_mem,
            mem_decay: (-dt_us * 1e-6 / tau_mem).exp(),
            ahp_decay: (-dt_us * 1e-6 / tau_ahp).exp(),
            ahp_jump: params.adapt_gain * params.i_ahp_unit,
            refractory_us: params.refractory * 1e3,
        })
    }

    pub fn dt_us(&self) -> f64 {
        self.dt_us
    }

    /// Advances the neuron over `[t_now, t_now + dt)` with the synaptic
    /// currents held at their values in `state`. Returns whether it fired.
    ///
    /// The membrane relaxes toward `(i_gain/i_leak)·I_in`. A threshold crossing
    /// inside the step is located analytically and the refractory period is
    /// counted from that instant; the part of a step that falls inside the
    /// refractory period keeps the membrane at reset.
    pub fn step(&self, state: &mut NeuronState, t_now: f64) -> bool {
        let p = &self.params;
        state.i_ahp *= self.ahp_decay;
        let t_end = t_now + self.dt_us;
        if state.refractory_until >= t_end {
            state.i_mem = p.i_reset;
            return false;
        }
        let (start, i0, decay) = if state.refractory_until > t_now {
            let span = t_end - state.refractory_until;
            (
                state.refractory_until,
                p.i_reset,
                (-span * 1e-6 / self.tau_mem).exp(),
            )
        } else {
            (t_now, state.i_mem, self.mem_decay)
        };
        let target = p.i_gain / p.i_leak * state.input_current(p);
        let i_end = target + (i0 - target) * decay;
        if i_end < p.i_thr {
            state.i_mem = i_end.max(0.0);
            return false;
        }
        let t_cross = if i0 >= p.i_thr {
            start
        } else {
            start + self.tau_mem * 1e6 * ((target - i0) / (target - p.i_thr)).ln()
        };
        state.i_mem = p.i_reset;
        state.refractory_until = t_cross.min(t_end) + self.refractory_us;
        if p.adapt_enabled {
            state.i_ahp += self.ahp_jump;
        }
        true
    }
}

/// Single-neuron update; see [`NeuronKernel::step`].
pub fn step_neuron(
    state: &NeuronState,
    params: &NeuronParams,
    dt_us: f64,
    t_now: f64,
) -> Result<(NeuronState, bool)> {
    let kernel = NeuronKernel::new(params, dt_us)?;
    let mut next = *state;
    let fired = kernel.step(&mut next, t_now);
    Ok((next, fired))
}

/// Drives one neuron with a constant net current (injected on the AMPA slot)
/// and returns its threshold-crossing times in µs.
pub fn constant_drive_spikes(
    params: &NeuronParams,
    drive: f64,
    duration_us: f64,
    dt_us: f64,
) -> Result<Vec<f64>> {
    if !(drive >= 0.0) {
        return domain(format!("drive must be non-negative, got {drive}"));
    }
    let kernel = NeuronKernel::new(params, dt_us)?;
    let mut state = NeuronState::at_rest(params);
    state.i_syn[SynapseClass::Ampa.index()] = drive;
    let steps = (duration_us / dt_us).round() as usize;
    let mut spikes = Vec::new();
    for k in 0..steps {
        let t = k as f64 * dt_us;
        if kernel.step(&mut state, t) {
            spikes.push(state.refractory_until - params.refractory * 1e3);
        }
    }
    Ok(spikes)
}
