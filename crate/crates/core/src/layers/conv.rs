//! Shared-weight convolutional LIF layer with per-map lateral inhibition and
//! first-spike winner-take-all STDP.

use crate::error::{Result, SnnError};
use crate::neuron::{Layer, LifParams, NeuronPopulation, SpikeRaster, ThresholdMode};
use crate::plasticity::{apply_soft_bound, stdp_delta, StdpParams, SynapseMatrix};
use crate::rng::SimRng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvLayerConfig {
    pub n_filters: usize,
    /// Square kernel side.
    pub kernel: usize,
    pub stride: usize,
    /// Square input side in pixels.
    pub input_side: usize,
    /// Chebyshev radius (feature-map cells) suppressed around a firing neuron.
    pub inhibition_radius: usize,
    /// Current per unit weight of an input spike.
    pub input_gain: f32,
    /// Maximum number of filters updated per training presentation.
    pub max_winners: usize,
    pub lif: LifParams,
    pub stdp: StdpParams,
}

impl Default for ConvLayerConfig {
    fn default() -> Self {
        Self {
            n_filters: 30,
            kernel: 8,
            stride: 2,
            input_side: 28,
            inhibition_radius: 0,
            input_gain: 6.0,
            max_winners: 3,
            lif: LifParams::default(),
            stdp: StdpParams::default(),
        }
    }
}

impl ConvLayerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_filters == 0 || self.kernel == 0 || self.stride == 0 {
            return Err(SnnError::Config("conv filters, kernel and stride must be >= 1".into()));
        }
        if self.kernel > self.input_side || !(self.input_side - self.kernel).is_multiple_of(self.stride) {
            return Err(SnnError::Config(format!(
                "input side {} minus kernel {} must be a non-negative multiple of stride {}",
                self.input_side, self.kernel, self.stride
            )));
        }
        if self.max_winners == 0 {
            return Err(SnnError::Config("conv max_winners must be >= 1".into()));
        }
        self.lif.validate()?;
        self.stdp.validate()
    }

    pub fn map_side(&self) -> usize {
        (self.input_side - self.kernel) / self.stride + 1
    }

    pub fn n_features(&self) -> usize {
        self.map_side() * self.map_side() * self.n_filters
    }

    pub fn n_inputs(&self) -> usize {
        self.input_side * self.input_side
    }
}

/// A filter's winning neuron in one training presentation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Winner {
    pub filter: usize,
    pub row: usize,
    pub col: usize,
    pub step: usize,
}

#[derive(Clone, Debug)]
pub struct ConvLayer {
    pub cfg: ConvLayerConfig,
    /// Shared kernels: `n_pre = kernel * kernel`, `n_post = n_filters`.
    pub weights: SynapseMatrix,
    pop: NeuronPopulation,
    current: Vec<f32>,
    inhibited: Vec<bool>,
    fired: Vec<bool>,
}

impl ConvLayer {
    pub fn new(cfg: ConvLayerConfig, weights: SynapseMatrix) -> Result<Self> {
        cfg.validate()?;
        let k2 = cfg.kernel * cfg.kernel;
        if weights.n_pre != k2 || weights.n_post != cfg.n_filters {
            return Err(SnnError::Config(format!(
                "conv weights are {}x{}, expected {k2}x{}",
                weights.n_pre, weights.n_post, cfg.n_filters
            )));
        }
        let n = cfg.n_features();
        Ok(Self {
            cfg,
            weights,
            pop: NeuronPopulation::new(n, &cfg.lif, ThresholdMode::Deterministic),
            current: vec![0.0; n],
            inhibited: vec![false; n],
            fired: vec![false; n],
        })
    }

    /// Uniform random kernels in `[lo, hi]`.
    pub fn random(cfg: ConvLayerConfig, lo: f32, hi: f32, rng: &mut SimRng) -> Result<Self> {
        let k2 = cfg.kernel * cfg.kernel;
        let w = (0..k2 * cfg.n_filters).map(|_| rng.range_f32(lo, hi)).collect();
        Self::new(cfg, SynapseMatrix::new(k2, cfg.n_filters, w))
    }

    /// Kernel of `filter` in row-major order.
    pub fn kernel(&self, filter: usize) -> Vec<f32> {
        (0..self.weights.n_pre).map(|k| self.weights.weight(k, filter)).collect()
    }

    #[inline]
    fn neuron(&self, filter: usize, row: usize, col: usize) -> usize {
        let m = self.cfg.map_side();
        filter * m * m + row * m + col
    }

    fn accumulate_current(&mut self, input: &[bool]) {
        self.current.fill(0.0);
        let (k, s, side, m, nf) = (
            self.cfg.kernel,
            self.cfg.stride,
            self.cfg.input_side,
            self.cfg.map_side(),
            self.cfg.n_filters,
        );
        let gain = self.cfg.input_gain;
        let mm = m * m;
        for (p, _) in input.iter().enumerate().filter(|(_, &s)| s) {
            let (y, x) = (p / side, p % side);
            let oy_lo = if y + 1 >= k { (y + 1 - k).div_ceil(s) } else { 0 };
            let ox_lo = if x + 1 >= k { (x + 1 - k).div_ceil(s) } else { 0 };
            let oy_hi = (y / s).min(m - 1);
            let ox_hi = (x / s).min(m - 1);
            for oy in oy_lo..=oy_hi {
                let ky = y - oy * s;
                for ox in ox_lo..=ox_hi {
                    let kx = x - ox * s;
                    let row = &self.weights.w[(ky * k + kx) * nf..(ky * k + kx + 1) * nf];
                    let base = oy * m + ox;
                    for (f, w) in row.iter().enumerate() {
                        self.current[f * mm + base] += gain * w;
                    }
                }
            }
        }
    }

    fn inhibit_neighbours(&mut self, filter: usize, row: usize, col: usize) {
        let r = self.cfg.inhibition_radius;
        let m = self.cfg.map_side();
        for y in row.saturating_sub(r)..=(row + r).min(m - 1) {
            for x in col.saturating_sub(r)..=(col + r).min(m - 1) {
                if (y, x) != (row, col) {
                    let idx = self.neuron(filter, y, x);
                    self.inhibited[idx] = true;
                }
            }
        }
    }

    fn silence_map(&mut self, filter: usize) {
        let mm = self.cfg.map_side() * self.cfg.map_side();
        self.inhibited[filter * mm..(filter + 1) * mm].fill(true);
    }

    fn advance(&mut self, input: &[bool], dt: f32) -> Result<()> {
        self.accumulate_current(input);
        for (c, &inh) in self.current.iter_mut().zip(&self.inhibited) {
            if inh {
                *c = 0.0;
            }
        }
        self.pop.lif_step(&self.cfg.lif, &self.current, dt, &mut self.fired)?;
        for i in 0..self.fired.len() {
            if self.inhibited[i] {
                self.fired[i] = false;
                self.pop.u[i] = self.cfg.lif.u_rest;
            }
        }
        Ok(())
    }

    /// Runs one presentation. With `train` set, kernels of up to
    /// `max_winners` first-spiking filters are updated by STDP.
    pub fn forward(&mut self, input: &SpikeRaster, train: bool) -> Result<SpikeRaster> {
        Ok(self.forward_with_winners(input, train)?.0)
    }

    pub fn forward_with_winners(&mut self, input: &SpikeRaster, train: bool) -> Result<(SpikeRaster, Vec<Winner>)> {
        if input.n_neurons() != self.cfg.n_inputs() {
            return Err(SnnError::FanMismatch {
                upstream: "input".into(),
                downstream: "conv".into(),
                fan_out: input.n_neurons(),
                fan_in: self.cfg.n_inputs(),
            });
        }
        let dt = input.dt();
        let n_steps = input.n_steps();
        let m = self.cfg.map_side();
        let mm = m * m;
        self.reset_state();
        let mut out = SpikeRaster::new(self.cfg.n_features(), n_steps, dt);
        let mut winners: Vec<Winner> = Vec::new();
        let mut map_done = vec![false; self.cfg.n_filters];

        for t in 0..n_steps {
            self.advance(input.step(t), dt)?;
            let spiking: Vec<usize> = self.fired.iter().enumerate().filter(|(_, &s)| s).map(|(i, _)| i).collect();
            for &i in &spiking {
                out.set(i, t, true);
            }
            if train {
                // earliest spikes compete; within a step, strongest drive first
                let mut candidates: Vec<(usize, f32)> = spiking
                    .iter()
                    .filter(|&&i| !map_done[i / mm])
                    .map(|&i| (i, self.current[i]))
                    .collect();
                candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                for (i, _) in candidates {
                    let filter = i / mm;
                    if map_done[filter] {
                        continue;
                    }
                    let (row, col) = ((i % mm) / m, i % m);
                    let r = self.cfg.inhibition_radius;
                    let clash = winners
                        .iter()
                        .any(|w| w.row.abs_diff(row) <= r && w.col.abs_diff(col) <= r);
                    if !clash && winners.len() < self.cfg.max_winners {
                        winners.push(Winner { filter, row, col, step: t });
                    }
                    map_done[filter] = true;
                    self.silence_map(filter);
                }
            }
            for &i in &spiking {
                let filter = i / mm;
                self.inhibit_neighbours(filter, (i % mm) / m, i % m);
            }
        }

        if train {
            for w in &winners {
                self.apply_stdp(input, w);
            }
        }
        Ok((out, winners))
    }

    /// Pairs the winner's spike with the nearest input spike of every kernel
    /// pixel. Pixels silent up to the winner spike pair with their next spike,
    /// or at `delta_t -> 0-` if they never fire during the presentation.
    fn apply_stdp(&mut self, input: &SpikeRaster, w: &Winner) {
        let (k, s, side) = (self.cfg.kernel, self.cfg.stride, self.cfg.input_side);
        let dt = input.dt();
        let p = self.cfg.stdp;
        for ky in 0..k {
            for kx in 0..k {
                let pixel = (w.row * s + ky) * side + (w.col * s + kx);
                let before = (0..=w.step).rev().find(|&t| input.get(pixel, t));
                let delta = match before {
                    Some(t) => stdp_delta((w.step - t) as f32 * dt, &p),
                    None => match (w.step + 1..input.n_steps()).find(|&t| input.get(pixel, t)) {
                        Some(t) => stdp_delta(-((t - w.step) as f32) * dt, &p),
                        None => -p.a_minus,
                    },
                };
                let idx = self.weights.index(ky * k + kx, w.filter);
                let old = self.weights.w[idx];
                self.weights.w[idx] = if p.soft_bound {
                    apply_soft_bound(old, delta)
                } else {
                    (old + delta).clamp(0.0, 1.0)
                };
            }
        }
    }
}

impl Layer for ConvLayer {
    fn name(&self) -> &str {
        "conv"
    }

    fn fan_in(&self) -> usize {
        self.cfg.n_inputs()
    }

    fn fan_out(&self) -> usize {
        self.cfg.n_features()
    }

    fn reset_state(&mut self) {
        self.pop.reset(&self.cfg.lif);
        self.inhibited.fill(false);
    }

    fn step(&mut self, input: &[bool], dt: f32, _rng: &mut SimRng, out: &mut [bool]) -> Result<()> {
        self.advance(input, dt)?;
        out.copy_from_slice(&self.fired);
        let m = self.cfg.map_side();
        let mm = m * m;
        for (i, &fired) in out.iter().enumerate() {
            if fired {
                self.inhibit_neighbours(i / mm, (i % mm) / m, i % m);
            }
        }
        Ok(())
    }
}
