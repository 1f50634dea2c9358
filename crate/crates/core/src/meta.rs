//! Learning procedure: STDP pretraining of the convolutional features, the
//! meta-training loop (memory adaptation on support samples, decision
//! adaptation on queries, reward rebalancing per task) and meta-testing.

use std::time::Instant;

use crate::episodes::{sample_episode, ClassCorpus, Episode};
use crate::error::{Result, SnnError};
use crate::layers::{
    poisson_encode, ConvLayer, ConvLayerConfig, DecisionLayer, DecisionLayerConfig, MemoryLayer, MemoryLayerConfig,
    MemoryRepresentation,
};
use crate::neuron::SpikeRaster;
use crate::pixels::PixelGrid;
use crate::plasticity::{adaptive_reward_update, RewardState, SparsityPolicy};
use crate::rng::SimRng;

#[derive(Clone, Debug, PartialEq)]
pub struct MetaConfig {
    pub n_ways: usize,
    pub k_shots: usize,
    pub epochs: usize,
    pub tasks_per_epoch: usize,
    /// Query samples per meta-training task.
    pub train_queries: usize,
    pub eval_episodes: usize,
    /// Restore the memory weights after every training task and before
    /// every test episode; false keeps one lifelong memory.
    pub memory_reset_per_episode: bool,
    /// Global switch; when false no weight ever changes after initialization.
    pub plasticity: bool,
    pub seed: u64,
    pub dt: f32,
    pub duration_ms: f32,
    /// Poisson rate of a full-intensity pixel (events/ms).
    pub max_rate: f32,
    pub init_min: f32,
    pub init_max: f32,
    pub pretrain_samples: usize,
    pub conv: ConvLayerConfig,
    pub memory: MemoryLayerConfig,
    pub decision: DecisionLayerConfig,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            n_ways: 5,
            k_shots: 1,
            epochs: 20,
            tasks_per_epoch: 20,
            train_queries: 10,
            eval_episodes: 600,
            memory_reset_per_episode: true,
            plasticity: true,
            seed: 0,
            dt: 1.0,
            duration_ms: 50.0,
            max_rate: 0.25,
            init_min: 0.2,
            init_max: 0.8,
            pretrain_samples: 2000,
            conv: ConvLayerConfig::default(),
            memory: MemoryLayerConfig::default(),
            decision: DecisionLayerConfig::default(),
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("ways", self.n_ways),
            ("shots", self.k_shots),
            ("epochs", self.epochs),
            ("tasks_per_epoch", self.tasks_per_epoch),
            ("train_queries", self.train_queries),
            ("eval_episodes", self.eval_episodes),
        ] {
            if v == 0 {
                return Err(SnnError::Config(format!("{name} must be >= 1")));
            }
        }
        if !(self.max_rate >= 0.0 && self.max_rate.is_finite()) {
            return Err(SnnError::Config("max_rate must be >= 0".into()));
        }
        if !(0.0 <= self.init_min && self.init_min <= self.init_max && self.init_max <= 1.0) {
            return Err(SnnError::Config("weight init range must satisfy 0 <= min <= max <= 1".into()));
        }
        crate::neuron::steps_for(self.duration_ms, self.dt)?;
        self.conv.validate()?;
        self.memory.validate()?;
        self.decision_config().validate()
    }

    /// Decision configuration with one group per way.
    pub fn decision_config(&self) -> DecisionLayerConfig {
        DecisionLayerConfig {
            n_groups: self.n_ways,
            ..self.decision
        }
    }

    pub fn with_policy(&self, policy: SparsityPolicy) -> Self {
        let mut cfg = self.clone();
        cfg.memory.policy = policy;
        cfg
    }
}

/// Per-task training metrics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaskRecord {
    pub epoch: usize,
    pub task: usize,
    pub accuracy: f32,
    pub reward_mag: f32,
    pub mean_n_s: f32,
}

impl TaskRecord {
    pub const CSV_HEADER: &'static str = "epoch,task,accuracy,reward_mag,mean_n_s";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.epoch, self.task, self.accuracy, self.reward_mag, self.mean_n_s
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub mean_accuracy: f64,
    /// 95% confidence half-width of the mean.
    pub ci95: f64,
    pub per_episode: Vec<f64>,
    pub wall_time: f64,
}

impl EvalReport {
    pub fn from_scores(per_episode: Vec<f64>, wall_time: f64) -> Self {
        let (mean_accuracy, ci95) = mean_ci95(&per_episode);
        Self {
            mean_accuracy,
            ci95,
            per_episode,
            wall_time,
        }
    }
}

/// Mean and 1.96 standard errors (sample standard deviation).
pub fn mean_ci95(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, 1.96 * (var / n as f64).sqrt())
}

/// The three-stage network plus decision-layer reward state.
#[derive(Clone, Debug)]
pub struct Model {
    pub conv: ConvLayer,
    pub memory: MemoryLayer,
    pub decision: DecisionLayer,
    pub reward: RewardState,
}

impl Model {
    /// Fresh memory and decision layers on top of (pretrained) conv features.
    pub fn new(cfg: &MetaConfig, conv: ConvLayer, rng: &mut SimRng) -> Result<Self> {
        cfg.validate()?;
        if conv.cfg != cfg.conv {
            return Err(SnnError::Config("conv layer does not match the configuration".into()));
        }
        let fan_in = conv.cfg.n_features();
        let memory = MemoryLayer::random(cfg.memory, fan_in, cfg.memory.init_min, cfg.memory.init_max, rng)?;
        let decision = DecisionLayer::random(
            cfg.decision_config(),
            cfg.memory.n_neurons,
            cfg.init_min,
            cfg.init_max,
            rng,
        )?;
        Ok(Self {
            conv,
            memory,
            decision,
            reward: RewardState::default(),
        })
    }

    /// Poisson-encodes an image and returns the conv feature raster.
    pub fn features(&mut self, image: &PixelGrid, cfg: &MetaConfig, rng: &mut SimRng) -> Result<SpikeRaster> {
        let input = poisson_encode(image, cfg.max_rate, cfg.duration_ms, cfg.dt, rng)?;
        self.conv.forward(&input, false)
    }

    /// Memory representation of an image without plasticity.
    pub fn represent(&mut self, image: &PixelGrid, cfg: &MetaConfig, rng: &mut SimRng) -> Result<MemoryRepresentation> {
        let f = self.features(image, cfg, rng)?;
        let r = self.memory.recall(&f, rng)?;
        Ok(MemoryRepresentation::from_raster(&r))
    }

    /// Support pass: plastic memory presentation with the class teaching
    /// current. Returns the activated percentage.
    pub fn support(&mut self, image: &PixelGrid, label: usize, cfg: &MetaConfig, rng: &mut SimRng) -> Result<f32> {
        let f = self.features(image, cfg, rng)?;
        if cfg.plasticity {
            let mut da = RewardState::default();
            Ok(self.memory.adapt(&f, Some(label), &mut da, rng)?.representation.n_s)
        } else {
            let r = self.memory.present(&f, Some(label), rng)?;
            Ok(MemoryRepresentation::from_raster(&r).n_s)
        }
    }

    /// Query pass. With `learn`, the decision layer is rewarded or punished.
    pub fn query(&mut self, image: &PixelGrid, label: usize, learn: bool, cfg: &MetaConfig, rng: &mut SimRng) -> Result<bool> {
        let f = self.features(image, cfg, rng)?;
        let m = self.memory.recall(&f, rng)?;
        let out = self.decision.forward(&m)?;
        let correct = out.prediction == label;
        if learn {
            self.decision.adapt(&m, &out, label, &mut self.reward)?;
        } else {
            self.reward.record(correct);
        }
        Ok(correct)
    }
}

/// Presents `n_samples` random corpus images to a freshly initialized conv
/// layer with STDP enabled and returns the trained layer.
pub fn pretrain_conv(corpus: &ClassCorpus, n_samples: usize, cfg: &MetaConfig, rng: &mut SimRng) -> Result<ConvLayer> {
    if corpus.is_empty() {
        return Err(SnnError::Config("pretraining corpus is empty".into()));
    }
    let mut conv = ConvLayer::random(cfg.conv, cfg.init_min, cfg.init_max, rng)?;
    for _ in 0..n_samples {
        let s = corpus.random_sample(rng);
        let input = poisson_encode(corpus.image(s), cfg.max_rate, cfg.duration_ms, cfg.dt, rng)?;
        conv.forward(&input, cfg.plasticity)?;
    }
    Ok(conv)
}

/// Resumable meta-training state.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub model: Model,
    /// Global index of the next task (`epoch * tasks_per_epoch + task`).
    pub next_task: usize,
    pub rng: SimRng,
    pub records: Vec<TaskRecord>,
}

impl TrainState {
    pub fn new(model: Model, rng: SimRng) -> Self {
        Self {
            model,
            next_task: 0,
            rng,
            records: Vec::new(),
        }
    }

    pub fn finished(&self, cfg: &MetaConfig) -> bool {
        self.next_task >= cfg.epochs * cfg.tasks_per_epoch
    }
}

/// Runs one meta-training task on `model`.
pub fn train_task(model: &mut Model, episode: &Episode, corpus: &ClassCorpus, cfg: &MetaConfig, rng: &mut SimRng) -> Result<(f32, f32)> {
    let mut n_s_sum = 0.0;
    for shot in &episode.support {
        n_s_sum += model.support(corpus.image(shot.sample), shot.label, cfg, rng)?;
    }
    let mut correct = 0;
    for shot in &episode.query {
        correct += model.query(corpus.image(shot.sample), shot.label, cfg.plasticity, cfg, rng)? as usize;
    }
    let updated = adaptive_reward_update(&model.reward)?;
    if cfg.plasticity {
        model.reward = updated;
    } else {
        model.reward.n_correct = 0;
        model.reward.n_incorrect = 0;
    }
    let accuracy = correct as f32 / episode.query.len() as f32;
    Ok((accuracy, n_s_sum / episode.support.len() as f32))
}

/// Advances meta-training by at most `max_tasks` tasks (all remaining when
/// `None`), calling `progress` after each.
pub fn meta_train_steps(
    state: &mut TrainState,
    corpus: &ClassCorpus,
    cfg: &MetaConfig,
    max_tasks: Option<usize>,
    mut progress: impl FnMut(&TaskRecord),
) -> Result<()> {
    cfg.validate()?;
    let total = cfg.epochs * cfg.tasks_per_epoch;
    let stop = max_tasks.map_or(total, |m| (state.next_task + m).min(total));
    while state.next_task < stop {
        let mut task_rng = state.rng.fork();
        let episode = sample_episode(corpus, cfg.n_ways, cfg.k_shots, cfg.train_queries, &mut task_rng)?;
        let snapshot = cfg.memory_reset_per_episode.then(|| state.model.memory.weights.w.clone());
        let (accuracy, mean_n_s) = train_task(&mut state.model, &episode, corpus, cfg, &mut task_rng)?;
        if let Some(w) = snapshot {
            state.model.memory.weights.w = w;
        }
        let record = TaskRecord {
            epoch: state.next_task / cfg.tasks_per_epoch,
            task: state.next_task % cfg.tasks_per_epoch,
            accuracy,
            reward_mag: state.model.reward.reward_mag,
            mean_n_s,
        };
        progress(&record);
        state.records.push(record);
        state.next_task += 1;
    }
    Ok(())
}

/// Full meta-training from a pretrained conv layer.
pub fn meta_train(conv: ConvLayer, corpus: &ClassCorpus, cfg: &MetaConfig) -> Result<TrainState> {
    let mut rng = SimRng::seed_from_u64(cfg.seed);
    let mut init_rng = rng.fork();
    let model = Model::new(cfg, conv, &mut init_rng)?;
    let mut state = TrainState::new(model, rng);
    meta_train_steps(&mut state, corpus, cfg, None, |_| {})?;
    Ok(state)
}

/// Evaluates single-probe episodes: memory adaptation on the shuffled
/// support stream (decision layer frozen), then one query prediction.
pub fn meta_test(model: &mut Model, corpus: &ClassCorpus, cfg: &MetaConfig, rng: &mut SimRng) -> Result<EvalReport> {
    cfg.validate()?;
    let start = Instant::now();
    let snapshot = model.memory.weights.w.clone();
    let saved_reward = model.reward;
    let mut scores = Vec::with_capacity(cfg.eval_episodes);
    for _ in 0..cfg.eval_episodes {
        let mut ep_rng = rng.fork();
        if cfg.memory_reset_per_episode {
            model.memory.weights.w.copy_from_slice(&snapshot);
        }
        let episode = sample_episode(corpus, cfg.n_ways, cfg.k_shots, 1, &mut ep_rng)?;
        for shot in &episode.support {
            model.support(corpus.image(shot.sample), shot.label, cfg, &mut ep_rng)?;
        }
        let probe = episode.query[0];
        let correct = model.query(corpus.image(probe.sample), probe.label, false, cfg, &mut ep_rng)?;
        scores.push(if correct { 1.0 } else { 0.0 });
    }
    model.reward = saved_reward;
    Ok(EvalReport::from_scores(scores, start.elapsed().as_secs_f64()))
}

/// One row of a sparsity sweep.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub policy: SparsityPolicy,
    pub report: EvalReport,
    pub final_train_accuracy: f32,
}

/// Meta-trains and meta-tests one fresh model per sparsity level.
pub fn sparsity_sweep(
    conv: &ConvLayer,
    train: &ClassCorpus,
    test: &ClassCorpus,
    levels: &[SparsityPolicy],
    cfg: &MetaConfig,
) -> Result<Vec<SweepRow>> {
    if levels.is_empty() {
        return Err(SnnError::Config("sparsity sweep needs at least one level".into()));
    }
    let mut rows = Vec::with_capacity(levels.len());
    for policy in levels {
        policy.validate()?;
        let level_cfg = cfg.with_policy(*policy);
        let mut state = meta_train(conv.clone(), train, &level_cfg)?;
        let mut eval_rng = SimRng::seed_from_u64(cfg.seed).derive(0xE7A1);
        let report = meta_test(&mut state.model, test, &level_cfg, &mut eval_rng)?;
        let tail = state.records.len().min(cfg.tasks_per_epoch);
        let final_train_accuracy =
            state.records[state.records.len() - tail..].iter().map(|r| r.accuracy).sum::<f32>() / tail.max(1) as f32;
        rows.push(SweepRow {
            policy: *policy,
            report,
            final_train_accuracy,
        });
    }
    Ok(rows)
}
