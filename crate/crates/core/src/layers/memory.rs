//! Episodic memory layer: stochastic-threshold LIF neurons whose afferent
//! weights learn by R-STDP under the activity-band reward.
//!
//! During support presentations a teaching current can be injected into a
//! fixed block of neurons reserved for the sample's episode class; recall
//! never receives it.

use crate::error::{Result, SnnError};
use crate::neuron::{Layer, LifParams, NeuronPopulation, SpikeRaster, StochasticParams, ThresholdMode};
use crate::plasticity::{
    consolidate, presentation_traces, sparsity_reward, RewardState, RstdpParams, SparsityPolicy, StdpParams,
    SynapseMatrix,
};
use crate::rng::SimRng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MemoryLayerConfig {
    pub n_neurons: usize,
    pub lif: LifParams,
    pub stochastic: StochasticParams,
    pub policy: SparsityPolicy,
    /// Current per unit weight of a feature spike.
    pub input_gain: f32,
    /// Tonic current added every step (negative = inhibitory).
    pub bias_current: f32,
    /// Teaching current delivered to the active class block.
    pub label_current: f32,
    /// Inhibitory current applied to every neuron outside the taught block
    /// while a teaching signal is present.
    pub label_inhibition: f32,
    /// Inhibitory weight per incoming feature spike, applied uniformly to all
    /// neurons (net drive is `gain * sum(w - feedforward_inhibition)`).
    pub feedforward_inhibition: f32,
    /// L1 norm each neuron's eligibility traces are balanced to before
    /// consolidation; 0 disables balancing.
    pub trace_budget: f32,
    /// Neurons per class block.
    pub label_block: usize,
    /// Dopamine per unit of reward level.
    pub da_gain: f32,
    pub consolidation_ms: f32,
    pub rstdp: RstdpParams,
    /// Initial weight range. Narrow by default: random initial weights act
    /// as fixed noise on every recall, against which one-shot imprints have
    /// to compete.
    pub init_min: f32,
    pub init_max: f32,
}

impl Default for MemoryLayerConfig {
    fn default() -> Self {
        Self {
            n_neurons: 100,
            lif: LifParams::default(),
            stochastic: StochasticParams::default(),
            policy: SparsityPolicy::default(),
            input_gain: 4.0,
            bias_current: -30.0,
            label_current: 60.0,
            label_inhibition: 100.0,
            feedforward_inhibition: 0.5,
            trace_budget: 1.0,
            label_block: 15,
            da_gain: 20.0,
            consolidation_ms: 20.0,
            rstdp: RstdpParams {
                stdp: StdpParams {
                    a_minus: 0.001,
                    ..StdpParams::default()
                },
                ..RstdpParams::default()
            },
            init_min: 0.5,
            init_max: 0.5,
        }
    }
}

impl MemoryLayerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_neurons == 0 {
            return Err(SnnError::Config("memory layer needs at least one neuron".into()));
        }
        if self.label_block == 0 || self.label_block > self.n_neurons {
            return Err(SnnError::Config(format!(
                "memory label block {} must be in 1..={}",
                self.label_block, self.n_neurons
            )));
        }
        for (name, v) in [
            ("label inhibition", self.label_inhibition),
            ("feed-forward inhibition", self.feedforward_inhibition),
            ("trace budget", self.trace_budget),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SnnError::Config(format!("memory {name} must be finite and >= 0")));
            }
        }
        if !(self.consolidation_ms >= 0.0) {
            return Err(SnnError::Config("consolidation window must be >= 0 ms".into()));
        }
        if !(0.0 <= self.init_min && self.init_min <= self.init_max && self.init_max <= 1.0) {
            return Err(SnnError::Config("memory init range must satisfy 0 <= min <= max <= 1".into()));
        }
        self.lif.validate()?;
        self.stochastic.validate()?;
        self.policy.validate()?;
        self.rstdp.validate()
    }
}

/// Which memory neurons fired at least once during a presentation.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryRepresentation {
    pub bits: Vec<bool>,
    /// Activated percentage.
    pub n_s: f32,
}

impl MemoryRepresentation {
    pub fn from_raster(raster: &SpikeRaster) -> Self {
        Self::from_bits(raster.activated())
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        let on = bits.iter().filter(|&&b| b).count();
        let n_s = if bits.is_empty() { 0.0 } else { 100.0 * on as f32 / bits.len() as f32 };
        Self { bits, n_s }
    }
}

/// Pearson coefficient between two binary representations.
pub fn pearson_correlation(a: &MemoryRepresentation, b: &MemoryRepresentation) -> Result<f64> {
    if a.bits.len() != b.bits.len() {
        return Err(SnnError::UndefinedCorrelation(format!(
            "lengths differ ({} vs {})",
            a.bits.len(),
            b.bits.len()
        )));
    }
    let n = a.bits.len() as f64;
    let x: Vec<f64> = a.bits.iter().map(|&v| v as u8 as f64).collect();
    let y: Vec<f64> = b.bits.iter().map(|&v| v as u8 as f64).collect();
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (xi, yi) in x.iter().zip(&y) {
        sxy += (xi - mx) * (yi - my);
        sxx += (xi - mx) * (xi - mx);
        syy += (yi - my) * (yi - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(SnnError::UndefinedCorrelation("constant representation".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Result of one plastic support presentation.
#[derive(Clone, Debug)]
pub struct AdaptOutcome {
    pub representation: MemoryRepresentation,
    pub reward_level: i8,
    pub impulse: f32,
    pub raster: SpikeRaster,
}

#[derive(Clone, Debug)]
pub struct MemoryLayer {
    pub cfg: MemoryLayerConfig,
    pub weights: SynapseMatrix,
    /// Neuron order used to carve class blocks.
    pub block_order: Vec<usize>,
    pop: NeuronPopulation,
    current: Vec<f32>,
    fired: Vec<bool>,
    teach: Option<usize>,
    traces: Vec<f32>,
}

impl MemoryLayer {
    pub fn new(cfg: MemoryLayerConfig, weights: SynapseMatrix, block_order: Vec<usize>) -> Result<Self> {
        cfg.validate()?;
        if weights.n_post != cfg.n_neurons {
            return Err(SnnError::Config(format!(
                "memory weights have {} columns, layer has {} neurons",
                weights.n_post, cfg.n_neurons
            )));
        }
        let mut sorted = block_order.clone();
        sorted.sort_unstable();
        if sorted != (0..cfg.n_neurons).collect::<Vec<_>>() {
            return Err(SnnError::Config("memory block order must be a permutation of the neurons".into()));
        }
        let n = cfg.n_neurons;
        Ok(Self {
            cfg,
            traces: vec![0.0; weights.w.len()],
            weights,
            block_order,
            pop: NeuronPopulation::new(n, &cfg.lif, ThresholdMode::Stochastic(cfg.stochastic)),
            current: vec![0.0; n],
            fired: vec![false; n],
            teach: None,
        })
    }

    pub fn random(cfg: MemoryLayerConfig, fan_in: usize, lo: f32, hi: f32, rng: &mut SimRng) -> Result<Self> {
        let w = (0..fan_in * cfg.n_neurons).map(|_| rng.range_f32(lo, hi)).collect();
        let mut order: Vec<usize> = (0..cfg.n_neurons).collect();
        rng.shuffle(&mut order);
        Self::new(cfg, SynapseMatrix::new(fan_in, cfg.n_neurons, w), order)
    }

    pub fn fan_in(&self) -> usize {
        self.weights.n_pre
    }

    /// Neurons receiving the teaching current for episode class `class`.
    /// Blocks wrap around the neuron order when classes outnumber them.
    pub fn label_block(&self, class: usize) -> Vec<usize> {
        let n = self.cfg.n_neurons;
        let b = self.cfg.label_block;
        (0..b).map(|i| self.block_order[(class * b + i) % n]).collect()
    }

    fn check_fan(&self, features: &SpikeRaster) -> Result<()> {
        if features.n_neurons() != self.fan_in() {
            return Err(SnnError::FanMismatch {
                upstream: "conv".into(),
                downstream: "memory".into(),
                fan_out: features.n_neurons(),
                fan_in: self.fan_in(),
            });
        }
        Ok(())
    }

    fn advance(&mut self, input: Option<&[bool]>, teach: &[usize], dt: f32, rng: &mut SimRng) -> Result<()> {
        self.current.fill(self.cfg.bias_current);
        if !teach.is_empty() {
            for c in self.current.iter_mut() {
                *c -= self.cfg.label_inhibition;
            }
            for &i in teach {
                self.current[i] += self.cfg.label_inhibition + self.cfg.label_current;
            }
        }
        if let Some(input) = input {
            let n = self.cfg.n_neurons;
            let g = self.cfg.input_gain;
            let n_in = input.iter().filter(|&&s| s).count() as f32;
            let shunt = g * self.cfg.feedforward_inhibition * n_in;
            for c in self.current.iter_mut() {
                *c -= shunt;
            }
            for (j, _) in input.iter().enumerate().filter(|(_, &s)| s) {
                for (c, w) in self.current.iter_mut().zip(&self.weights.w[j * n..(j + 1) * n]) {
                    *c += g * w;
                }
            }
        }
        self.pop.step(&self.cfg.lif, &self.current, dt, rng, &mut self.fired)
    }

    /// Forward pass with no plasticity. Feature spikes reach the memory
    /// neurons one step after they occur.
    pub fn present(&mut self, features: &SpikeRaster, teach: Option<usize>, rng: &mut SimRng) -> Result<SpikeRaster> {
        self.check_fan(features)?;
        let block = teach.map(|c| self.label_block(c)).unwrap_or_default();
        let dt = features.dt();
        let n_steps = features.n_steps();
        self.pop.reset(&self.cfg.lif);
        let mut out = SpikeRaster::new(self.cfg.n_neurons, n_steps, dt);
        for t in 0..n_steps {
            let input = if t > 0 { Some(features.step(t - 1)) } else { None };
            self.advance(input, &block, dt, rng)?;
            out.step_mut(t).copy_from_slice(&self.fired);
        }
        Ok(out)
    }

    /// Read-only recall of the memory response to a feature raster.
    pub fn recall(&mut self, features: &SpikeRaster, rng: &mut SimRng) -> Result<SpikeRaster> {
        self.present(features, None, rng)
    }

    /// Plastic presentation: measure the activated percentage, convert it to
    /// a reward level, and commit the eligibility traces with a dopamine
    /// impulse over the consolidation window.
    pub fn adapt(
        &mut self,
        features: &SpikeRaster,
        teach: Option<usize>,
        rs: &mut RewardState,
        rng: &mut SimRng,
    ) -> Result<AdaptOutcome> {
        let raster = self.present(features, teach, rng)?;
        let representation = MemoryRepresentation::from_raster(&raster);
        let reward_level = sparsity_reward(representation.n_s, &self.cfg.policy);
        let impulse = reward_level as f32 * self.cfg.da_gain;
        self.commit(features, &raster, impulse, rs);
        Ok(AdaptOutcome {
            representation,
            reward_level,
            impulse,
            raster,
        })
    }

    fn commit(&mut self, features: &SpikeRaster, raster: &SpikeRaster, impulse: f32, rs: &mut RewardState) {
        let dt = features.dt();
        let window = (self.cfg.consolidation_ms / dt).round() as usize;
        rs.dopamine = 0.0;
        if impulse == 0.0 || window == 0 {
            return;
        }
        let delayed = delay_one_step(features);
        presentation_traces(&delayed, raster, &self.cfg.rstdp, &mut self.traces);
        if self.cfg.trace_budget > 0.0 {
            balance_traces(&mut self.traces, self.weights.n_pre, self.cfg.n_neurons, self.cfg.trace_budget);
        }
        let gain = self.cfg.rstdp.consolidation_gain(window, dt);
        consolidate(&mut self.weights.w, &self.traces, impulse, gain);
        rs.dopamine = impulse * (-(window.saturating_sub(1) as f32) * dt / self.cfg.rstdp.tau_d).exp();
    }
}

/// Heterosynaptic balancing of a `[pre * n_post + post]` trace matrix: each
/// postsynaptic column is made zero-mean over its inputs and rescaled to an
/// L1 norm of `budget`. Silent columns are left untouched.
pub fn balance_traces(traces: &mut [f32], n_pre: usize, n_post: usize, budget: f32) {
    debug_assert_eq!(traces.len(), n_pre * n_post);
    for i in 0..n_post {
        let mean = (0..n_pre).map(|j| traces[j * n_post + i]).sum::<f32>() / n_pre as f32;
        let l1: f32 = (0..n_pre).map(|j| (traces[j * n_post + i] - mean).abs()).sum();
        if l1 == 0.0 {
            continue;
        }
        let scale = budget / l1;
        for j in 0..n_pre {
            let c = &mut traces[j * n_post + i];
            *c = (*c - mean) * scale;
        }
    }
}

/// Shifts a raster one step later (the arrival times at the next layer).
pub fn delay_one_step(r: &SpikeRaster) -> SpikeRaster {
    let mut out = SpikeRaster::new(r.n_neurons(), r.n_steps(), r.dt());
    for t in 1..r.n_steps() {
        out.step_mut(t).copy_from_slice(r.step(t - 1));
    }
    out
}

impl Layer for MemoryLayer {
    fn name(&self) -> &str {
        "memory"
    }

    fn fan_in(&self) -> usize {
        self.weights.n_pre
    }

    fn fan_out(&self) -> usize {
        self.cfg.n_neurons
    }

    fn reset_state(&mut self) {
        self.pop.reset(&self.cfg.lif);
    }

    fn step(&mut self, input: &[bool], dt: f32, rng: &mut SimRng, out: &mut [bool]) -> Result<()> {
        let block = self.teach.map(|c| self.label_block(c)).unwrap_or_default();
        self.advance(Some(input), &block, dt, rng)?;
        out.copy_from_slice(&self.fired);
        Ok(())
    }
}
