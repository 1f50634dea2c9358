//! Group-coded decision layer with inter-group lateral inhibition, trained by
//! R-STDP with adaptive reward and punishment magnitudes.

use crate::error::{Result, SnnError};
use crate::neuron::{Layer, LifParams, NeuronPopulation, SpikeRaster, ThresholdMode};
use crate::plasticity::{consolidate, presentation_traces, RewardState, RstdpParams, SynapseMatrix};
use crate::rng::SimRng;

use super::memory::{balance_traces, delay_one_step};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecisionLayerConfig {
    /// One group per episode class.
    pub n_groups: usize,
    /// Neurons per group.
    pub group_size: usize,
    /// Inhibitory current per competitor spike, in multiples of the mean
    /// feed-forward drive of the presentation.
    pub inhibition_strength: f32,
    /// Current per unit weight of a memory spike.
    pub input_gain: f32,
    /// Dopamine per unit of reward or punishment magnitude.
    pub da_gain: f32,
    /// L1 norm each neuron's eligibility traces are balanced to before
    /// consolidation; 0 disables balancing.
    pub trace_budget: f32,
    pub consolidation_ms: f32,
    pub lif: LifParams,
    pub rstdp: RstdpParams,
}

impl Default for DecisionLayerConfig {
    fn default() -> Self {
        Self {
            n_groups: 5,
            group_size: 10,
            inhibition_strength: 1.5,
            input_gain: 60.0,
            da_gain: 0.15,
            trace_budget: 1.0,
            consolidation_ms: 20.0,
            lif: LifParams::default(),
            rstdp: RstdpParams::default(),
        }
    }
}

impl DecisionLayerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_groups == 0 || self.group_size == 0 {
            return Err(SnnError::Config("decision layer needs >= 1 group of >= 1 neuron".into()));
        }
        if !(self.da_gain >= 0.0 && self.da_gain.is_finite()) || !(self.trace_budget >= 0.0 && self.trace_budget.is_finite()) {
            return Err(SnnError::Config("decision da_gain and trace_budget must be finite and >= 0".into()));
        }
        if !(self.inhibition_strength >= 0.0) {
            return Err(SnnError::Config("inhibition strength must be >= 0".into()));
        }
        self.lif.validate()?;
        self.rstdp.validate()
    }

    pub fn n_neurons(&self) -> usize {
        self.n_groups * self.group_size
    }
}

/// Index of the largest count; ties go to the lowest index.
pub fn predict_from_counts(counts: &[u32]) -> usize {
    let mut best = 0;
    for (g, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = g;
        }
    }
    best
}

#[derive(Clone, Debug)]
pub struct DecisionOutput {
    pub prediction: usize,
    pub group_counts: Vec<u32>,
    pub raster: SpikeRaster,
}

#[derive(Clone, Debug)]
pub struct DecisionLayer {
    pub cfg: DecisionLayerConfig,
    /// `n_pre` memory neurons by `n_groups * group_size` decision neurons.
    pub weights: SynapseMatrix,
    pop: NeuronPopulation,
    current: Vec<f32>,
    fired: Vec<bool>,
    traces: Vec<f32>,
    /// Per-spike inhibition used by the `Layer` implementation.
    stream_inhibition: f32,
}

impl DecisionLayer {
    pub fn new(cfg: DecisionLayerConfig, weights: SynapseMatrix) -> Result<Self> {
        cfg.validate()?;
        if weights.n_post != cfg.n_neurons() {
            return Err(SnnError::Config(format!(
                "decision weights have {} columns, layer has {} neurons",
                weights.n_post,
                cfg.n_neurons()
            )));
        }
        let n = cfg.n_neurons();
        Ok(Self {
            cfg,
            traces: vec![0.0; weights.w.len()],
            weights,
            pop: NeuronPopulation::new(n, &cfg.lif, ThresholdMode::Deterministic),
            current: vec![0.0; n],
            fired: vec![false; n],
            stream_inhibition: 0.0,
        })
    }

    pub fn random(cfg: DecisionLayerConfig, fan_in: usize, lo: f32, hi: f32, rng: &mut SimRng) -> Result<Self> {
        let w = (0..fan_in * cfg.n_neurons()).map(|_| rng.range_f32(lo, hi)).collect();
        Self::new(cfg, SynapseMatrix::new(fan_in, cfg.n_neurons(), w))
    }

    pub fn fan_in(&self) -> usize {
        self.weights.n_pre
    }

    pub fn group_of(&self, neuron: usize) -> usize {
        neuron / self.cfg.group_size
    }

    fn feedforward(&mut self, input: &[bool]) {
        self.current.fill(0.0);
        let n = self.cfg.n_neurons();
        let g = self.cfg.input_gain;
        for (j, _) in input.iter().enumerate().filter(|(_, &s)| s) {
            for (c, w) in self.current.iter_mut().zip(&self.weights.w[j * n..(j + 1) * n]) {
                *c += g * w;
            }
        }
    }

    fn inhibit(&mut self, prev_fired: &[bool], per_spike: f32) {
        if per_spike == 0.0 {
            return;
        }
        let mut per_group = vec![0u32; self.cfg.n_groups];
        for (i, &s) in prev_fired.iter().enumerate() {
            if s {
                per_group[i / self.cfg.group_size] += 1;
            }
        }
        let total: u32 = per_group.iter().sum();
        if total == 0 {
            return;
        }
        for (i, c) in self.current.iter_mut().enumerate() {
            let others = total - per_group[i / self.cfg.group_size];
            *c -= per_spike * others as f32;
        }
    }

    /// Mean feed-forward current per neuron per step over a presentation.
    fn mean_drive(&mut self, memory: &SpikeRaster) -> f32 {
        let mut sum = 0.0f64;
        for t in 0..memory.n_steps().saturating_sub(1) {
            self.feedforward(memory.step(t));
            sum += self.current.iter().map(|&c| c as f64).sum::<f64>();
        }
        let denom = (self.cfg.n_neurons() * memory.n_steps()).max(1) as f64;
        (sum / denom) as f32
    }

    /// Runs the memory raster through the decision neurons; weights untouched.
    pub fn forward(&mut self, memory: &SpikeRaster) -> Result<DecisionOutput> {
        if memory.n_neurons() != self.fan_in() {
            return Err(SnnError::FanMismatch {
                upstream: "memory".into(),
                downstream: "decision".into(),
                fan_out: memory.n_neurons(),
                fan_in: self.fan_in(),
            });
        }
        let per_spike = self.cfg.inhibition_strength * self.mean_drive(memory);
        let dt = memory.dt();
        let n_steps = memory.n_steps();
        let n = self.cfg.n_neurons();
        self.pop.reset(&self.cfg.lif);
        let mut raster = SpikeRaster::new(n, n_steps, dt);
        let mut prev = vec![false; n];
        for t in 0..n_steps {
            if t > 0 {
                self.feedforward(memory.step(t - 1));
            } else {
                self.current.fill(0.0);
            }
            self.inhibit(&prev, per_spike);
            self.pop.lif_step(&self.cfg.lif, &self.current, dt, &mut self.fired)?;
            raster.step_mut(t).copy_from_slice(&self.fired);
            prev.copy_from_slice(&self.fired);
        }
        let mut group_counts = vec![0u32; self.cfg.n_groups];
        for (i, c) in raster.counts().into_iter().enumerate() {
            group_counts[i / self.cfg.group_size] += c;
        }
        Ok(DecisionOutput {
            prediction: predict_from_counts(&group_counts),
            group_counts,
            raster,
        })
    }

    /// Rewards a correct prediction with `+reward_mag` dopamine and punishes a
    /// wrong one with `-punish_mag`, committed over the consolidation window.
    /// Returns the impulse.
    pub fn adapt(
        &mut self,
        memory: &SpikeRaster,
        output: &DecisionOutput,
        label: usize,
        rs: &mut RewardState,
    ) -> Result<f32> {
        if label >= self.cfg.n_groups || output.prediction >= self.cfg.n_groups {
            return Err(SnnError::InvalidParam(format!(
                "class index out of range for {} groups",
                self.cfg.n_groups
            )));
        }
        let correct = output.prediction == label;
        let impulse = rs.decision_impulse(correct) * self.cfg.da_gain;
        rs.record(correct);
        let dt = memory.dt();
        let window = (self.cfg.consolidation_ms / dt).round() as usize;
        rs.dopamine = 0.0;
        if impulse != 0.0 && window > 0 {
            let delayed = delay_one_step(memory);
            presentation_traces(&delayed, &output.raster, &self.cfg.rstdp, &mut self.traces);
            if self.cfg.trace_budget > 0.0 {
                balance_traces(&mut self.traces, self.weights.n_pre, self.cfg.n_neurons(), self.cfg.trace_budget);
            }
            let gain = self.cfg.rstdp.consolidation_gain(window, dt);
            consolidate(&mut self.weights.w, &self.traces, impulse, gain);
            rs.dopamine = impulse * (-(window.saturating_sub(1) as f32) * dt / self.cfg.rstdp.tau_d).exp();
        }
        Ok(impulse)
    }

    /// Fixes the per-spike inhibition used when stepped through
    /// [`crate::neuron::run_presentation`].
    pub fn set_stream_inhibition(&mut self, per_spike: f32) {
        self.stream_inhibition = per_spike;
    }
}

impl Layer for DecisionLayer {
    fn name(&self) -> &str {
        "decision"
    }

    fn fan_in(&self) -> usize {
        self.weights.n_pre
    }

    fn fan_out(&self) -> usize {
        self.cfg.n_neurons()
    }

    fn reset_state(&mut self) {
        self.pop.reset(&self.cfg.lif);
        self.fired.fill(false);
    }

    fn step(&mut self, input: &[bool], dt: f32, _rng: &mut SimRng, out: &mut [bool]) -> Result<()> {
        let prev = self.fired.clone();
        self.feedforward(input);
        self.inhibit(&prev, self.stream_inhibition);
        self.pop.lif_step(&self.cfg.lif, &self.current, dt, &mut self.fired)?;
        out.copy_from_slice(&self.fired);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_with_low_index_ties() {
        assert_eq!(predict_from_counts(&[3, 7, 2, 0, 1]), 1);
        assert_eq!(predict_from_counts(&[4, 4, 0, 0, 0]), 0);
        assert_eq!(predict_from_counts(&[0, 0, 0]), 0);
    }

    #[test]
    fn zero_reward_leaves_weights() {
        let cfg = DecisionLayerConfig { n_groups: 2, group_size: 2, input_gain: 100.0, ..DecisionLayerConfig::default() };
        let mut layer = DecisionLayer::new(cfg, SynapseMatrix::filled(3, 4, 0.9)).unwrap();
        let mut memory = SpikeRaster::new(3, 50, 1.0);
        for t in 0..50 {
            memory.set(t % 3, t, true);
        }
        let out = layer.forward(&memory).unwrap();
        assert!(out.raster.total() > 0);
        let before = layer.weights.w.clone();
        let mut rs = RewardState { reward_mag: 0.0, punish_mag: 1.0, ..RewardState::default() };
        let impulse = layer.adapt(&memory, &out, out.prediction, &mut rs).unwrap();
        assert_eq!(impulse, 0.0);
        assert_eq!(layer.weights.w, before);
        assert_eq!(rs.n_correct, 1);
    }
}
