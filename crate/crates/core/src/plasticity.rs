//! Learning rules: pair-based STDP with soft bounds, reward-modulated STDP
//! with eligibility traces and a dopamine pool, the activity-band reward used
//! by the memory layer, and the adaptive reward/punishment magnitudes used by
//! the decision layer.

use crate::error::{Result, SnnError};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StdpParams {
    pub a_plus: f32,
    pub a_minus: f32,
    /// Potentiation window (ms).
    pub tau_plus: f32,
    /// Depression window (ms).
    pub tau_minus: f32,
    pub soft_bound: bool,
}

impl Default for StdpParams {
    fn default() -> Self {
        Self {
            a_plus: 0.004,
            a_minus: 0.003,
            tau_plus: 20.0,
            tau_minus: 20.0,
            soft_bound: true,
        }
    }
}

impl StdpParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("a_plus", self.a_plus),
            ("a_minus", self.a_minus),
            ("tau_plus", self.tau_plus),
            ("tau_minus", self.tau_minus),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SnnError::InvalidParam(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Pairwise STDP window; `delta_t = t_post - t_pre` in ms.
#[inline]
pub fn stdp_delta(delta_t: f32, p: &StdpParams) -> f32 {
    if delta_t >= 0.0 {
        p.a_plus * (-delta_t / p.tau_plus).exp()
    } else {
        -p.a_minus * (delta_t / p.tau_minus).exp()
    }
}

/// Multiplicative soft bound: `w + w (1 - w) delta`, clamped to [0, 1].
#[inline]
pub fn apply_soft_bound(w: f32, raw_delta: f32) -> f32 {
    (w + w * (1.0 - w) * raw_delta).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RstdpParams {
    /// Eligibility-trace time constant (ms).
    pub tau_c: f32,
    /// Dopamine uptake time constant (ms).
    pub tau_d: f32,
    pub stdp: StdpParams,
}

impl Default for RstdpParams {
    fn default() -> Self {
        Self {
            tau_c: 200.0,
            tau_d: 20.0,
            stdp: StdpParams::default(),
        }
    }
}

impl RstdpParams {
    pub fn validate(&self) -> Result<()> {
        self.stdp.validate()?;
        if !(self.tau_c > 0.0 && self.tau_d > 0.0) {
            return Err(SnnError::InvalidParam("tau_c and tau_d must be > 0".into()));
        }
        Ok(())
    }

    /// Weight change per unit of (end-of-presentation trace x dopamine impulse)
    /// accumulated over `window_steps` steps of trace/dopamine decay with no
    /// further spikes. Matches iterating [`rstdp_step`] with the impulse
    /// injected on the first window step.
    pub fn consolidation_gain(&self, window_steps: usize, dt: f32) -> f32 {
        let a = (-dt / self.tau_c).exp();
        let b = (-dt / self.tau_d).exp();
        let mut ak = 1.0f32;
        let mut bk = 1.0f32;
        let mut sum = 0.0f32;
        for _ in 0..window_steps {
            ak *= a;
            sum += ak * bk;
            bk *= b;
        }
        sum * dt
    }
}

/// Dense plastic synapses, indexed `[pre * n_post + post]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SynapseMatrix {
    pub n_pre: usize,
    pub n_post: usize,
    pub w: Vec<f32>,
    pub c: Vec<f32>,
    pub last_pre_spike: Vec<Option<f32>>,
    pub last_post_spike: Vec<Option<f32>>,
    /// Simulation time of the next step (ms).
    pub clock: f32,
}

impl SynapseMatrix {
    pub fn new(n_pre: usize, n_post: usize, w: Vec<f32>) -> Self {
        assert_eq!(w.len(), n_pre * n_post, "weight buffer does not match {n_pre}x{n_post}");
        Self {
            n_pre,
            n_post,
            w,
            c: vec![0.0; n_pre * n_post],
            last_pre_spike: vec![None; n_pre],
            last_post_spike: vec![None; n_post],
            clock: 0.0,
        }
    }

    pub fn filled(n_pre: usize, n_post: usize, value: f32) -> Self {
        Self::new(n_pre, n_post, vec![value; n_pre * n_post])
    }

    #[inline]
    pub fn index(&self, pre: usize, post: usize) -> usize {
        pre * self.n_post + post
    }

    pub fn weight(&self, pre: usize, post: usize) -> f32 {
        self.w[self.index(pre, post)]
    }

    pub fn trace(&self, pre: usize, post: usize) -> f32 {
        self.c[self.index(pre, post)]
    }

    /// Clears traces and spike bookkeeping; weights are kept.
    pub fn reset_traces(&mut self) {
        self.c.fill(0.0);
        self.last_pre_spike.fill(None);
        self.last_post_spike.fill(None);
        self.clock = 0.0;
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SparsityPolicy {
    /// Target activation percentage.
    pub center: f32,
    /// Spread percentage.
    pub spread: f32,
}

impl Default for SparsityPolicy {
    fn default() -> Self {
        Self {
            center: 15.0,
            spread: 3.0,
        }
    }
}

impl SparsityPolicy {
    pub fn new(center: f32, spread: f32) -> Result<Self> {
        let p = Self { center, spread };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spread > 0.0) || !(self.center - 4.0 * self.spread >= 0.0) {
            return Err(SnnError::InvalidParam(format!(
                "sparsity policy needs spread > 0 and center - 4*spread >= 0, got {}±{}",
                self.center, self.spread
            )));
        }
        Ok(())
    }

    /// The band `[c - 2s, c + 2s]` in which the policy never punishes.
    pub fn rewarded_band(&self) -> (f32, f32) {
        (self.center - 2.0 * self.spread, self.center + 2.0 * self.spread)
    }
}

/// Reward level for an activation percentage `n_s`.
///
/// ```text
/// -2   n_s <  c-4s
/// -1   c-4s <= n_s <  c-2s
/// +1   c-2s <= n_s <  c-s
/// +2   c-s  <= n_s <= c+s
/// +1   c+s  <  n_s <= c+2s
/// -1   c+2s <  n_s <= c+4s
/// -2   c+4s <  n_s
/// ```
pub fn sparsity_reward(n_s: f32, pol: &SparsityPolicy) -> i8 {
    let (c, s) = (pol.center, pol.spread);
    if n_s < c - 4.0 * s {
        -2
    } else if n_s < c - 2.0 * s {
        -1
    } else if n_s < c - s {
        1
    } else if n_s <= c + s {
        2
    } else if n_s <= c + 2.0 * s {
        1
    } else if n_s <= c + 4.0 * s {
        -1
    } else {
        -2
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardState {
    pub dopamine: f32,
    pub reward_mag: f32,
    pub punish_mag: f32,
    pub n_correct: u32,
    pub n_incorrect: u32,
}

impl Default for RewardState {
    fn default() -> Self {
        Self {
            dopamine: 0.0,
            reward_mag: 0.5,
            punish_mag: 0.5,
            n_correct: 0,
            n_incorrect: 0,
        }
    }
}

impl RewardState {
    /// Signed impulse for a decision outcome.
    pub fn decision_impulse(&self, correct: bool) -> f32 {
        if correct {
            self.reward_mag
        } else {
            -self.punish_mag
        }
    }

    pub fn record(&mut self, correct: bool) {
        if correct {
            self.n_correct += 1;
        } else {
            self.n_incorrect += 1;
        }
    }
}

/// Rebalances reward and punishment after a task: the reward magnitude becomes
/// the error rate and the punishment magnitude the success rate.
pub fn adaptive_reward_update(rs: &RewardState) -> Result<RewardState> {
    let n = rs.n_correct + rs.n_incorrect;
    if n == 0 {
        return Err(SnnError::EmptyTask);
    }
    let n = n as f32;
    Ok(RewardState {
        dopamine: rs.dopamine,
        reward_mag: rs.n_incorrect as f32 / n,
        punish_mag: rs.n_correct as f32 / n,
        n_correct: 0,
        n_incorrect: 0,
    })
}

/// One clock step of reward-modulated STDP.
///
/// Order: traces decay, spike pairs (nearest neighbour) add STDP to traces,
/// dopamine decays and receives `da_input`, weights drift by `c * d * dt`.
pub fn rstdp_step(
    m: &mut SynapseMatrix,
    pre_spikes: &[bool],
    post_spikes: &[bool],
    rs: &mut RewardState,
    p: &RstdpParams,
    da_input: f32,
    dt: f32,
) -> Result<()> {
    if pre_spikes.len() != m.n_pre || post_spikes.len() != m.n_post {
        return Err(SnnError::InvalidParam(format!(
            "spike vectors {}x{} do not match synapse matrix {}x{}",
            pre_spikes.len(),
            post_spikes.len(),
            m.n_pre,
            m.n_post
        )));
    }
    if !(dt > 0.0) {
        return Err(SnnError::InvalidParam(format!("dt must be > 0, got {dt}")));
    }
    let t = m.clock;
    let decay = (-dt / p.tau_c).exp();
    m.c.iter_mut().for_each(|c| *c *= decay);

    for (j, &s) in pre_spikes.iter().enumerate() {
        if s {
            m.last_pre_spike[j] = Some(t);
        }
    }
    // post spikes pair with the latest pre spike (possibly simultaneous)
    for (i, _) in post_spikes.iter().enumerate().filter(|(_, &s)| s) {
        for j in 0..m.n_pre {
            if let Some(tp) = m.last_pre_spike[j] {
                let idx = j * m.n_post + i;
                m.c[idx] += stdp_delta(t - tp, &p.stdp);
            }
        }
    }
    // pre spikes pair with strictly earlier post spikes
    for (j, _) in pre_spikes.iter().enumerate().filter(|(_, &s)| s) {
        for i in 0..m.n_post {
            if let Some(tq) = m.last_post_spike[i] {
                if tq < t {
                    let idx = j * m.n_post + i;
                    m.c[idx] += stdp_delta(tq - t, &p.stdp);
                }
            }
        }
    }
    for (i, &s) in post_spikes.iter().enumerate() {
        if s {
            m.last_post_spike[i] = Some(t);
        }
    }

    rs.dopamine = rs.dopamine * (-dt / p.tau_d).exp() + da_input;
    let d = rs.dopamine;
    if d != 0.0 {
        for (w, &c) in m.w.iter_mut().zip(&m.c) {
            *w = (*w + c * d * dt).clamp(0.0, 1.0);
        }
    }
    m.clock = t + dt;
    Ok(())
}

/// Accumulates the end-of-presentation eligibility traces for a whole raster
/// pair without touching weights.
///
/// Equivalent to running [`rstdp_step`] over the presentation with zero
/// dopamine: each STDP event at step `t` contributes `delta * a^(T-1-t)` where
/// `a = exp(-dt/tau_c)` and `T` is the number of steps.
pub fn presentation_traces(
    pre: &crate::neuron::SpikeRaster,
    post: &crate::neuron::SpikeRaster,
    p: &RstdpParams,
    traces: &mut [f32],
) {
    let n_pre = pre.n_neurons();
    let n_post = post.n_neurons();
    let n_steps = pre.n_steps().min(post.n_steps());
    debug_assert_eq!(traces.len(), n_pre * n_post);
    traces.fill(0.0);
    let dt = pre.dt();
    let a = (-dt / p.tau_c).exp();
    let mut last_pre: Vec<Option<usize>> = vec![None; n_pre];
    let mut last_post: Vec<Option<usize>> = vec![None; n_post];
    // pre neurons that have spiked so far, for post-spike pairing
    let mut seen_pre: Vec<usize> = Vec::new();
    // decay factor a^k, k = 0..n_steps
    let powers: Vec<f32> = std::iter::successors(Some(1.0f32), |x| Some(x * a)).take(n_steps + 1).collect();
    let window_plus: Vec<f32> = (0..=n_steps).map(|k| stdp_delta(k as f32 * dt, &p.stdp)).collect();
    let window_minus: Vec<f32> = (0..=n_steps).map(|k| stdp_delta(-(k as f32) * dt, &p.stdp)).collect();

    for t in 0..n_steps {
        let scale = powers[n_steps - 1 - t];
        for j in pre.active_at(t) {
            if last_pre[j].is_none() {
                seen_pre.push(j);
            }
            last_pre[j] = Some(t);
        }
        for i in post.active_at(t) {
            for &j in &seen_pre {
                let tp = last_pre[j].unwrap();
                traces[j * n_post + i] += window_plus[t - tp] * scale;
            }
        }
        for j in pre.active_at(t) {
            let row = &mut traces[j * n_post..(j + 1) * n_post];
            for (i, last) in last_post.iter().enumerate() {
                if let Some(tq) = *last {
                    row[i] += window_minus[t - tq] * scale;
                }
            }
        }
        for i in post.active_at(t) {
            last_post[i] = Some(t);
        }
    }
}

/// Applies a dopamine impulse to end-of-presentation traces over a
/// consolidation window, using the closed-form gain. Returns the number of
/// weights that changed.
pub fn consolidate(weights: &mut [f32], traces: &[f32], impulse: f32, gain: f32) -> usize {
    if impulse == 0.0 {
        return 0;
    }
    let k = impulse * gain;
    let mut changed = 0;
    for (w, &c) in weights.iter_mut().zip(traces) {
        if c != 0.0 {
            let nw = (*w + c * k).clamp(0.0, 1.0);
            changed += (nw != *w) as usize;
            *w = nw;
        }
    }
    changed
}
