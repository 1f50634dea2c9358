//! Flat `key = value` run configuration.
//!
//! Every tunable default is addressable by a dotted key; `#` starts a
//! comment; unknown keys are rejected. [`to_text`] writes every key, and
//! parsing that text reproduces the configuration bit for bit.

use std::path::Path;

use crate::episodes::{augment_rotations, load_corpus, split_classes, ClassCorpus, Dataset};
use crate::error::{Result, SnnError};
use crate::meta::MetaConfig;
use crate::rng::SimRng;

/// Dataset-level settings shared by every command.
#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub dataset: Dataset,
    /// Number of training classes in the split (`0` = dataset default).
    pub n_train: usize,
    pub split_seed: u64,
    pub augment_rotations: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dataset: Dataset::Omniglot,
            n_train: 0,
            split_seed: 17,
            augment_rotations: true,
        }
    }
}

impl DataConfig {
    pub fn resolved_n_train(&self) -> usize {
        match (self.n_train, self.dataset) {
            (0, Dataset::Omniglot) => 1200,
            (0, Dataset::DoubleMnist) => 80,
            (n, _) => n,
        }
    }

    /// Loads the corpus under `root`, splits its classes with `split_seed`,
    /// then (optionally) rotation-augments each side so that rotated copies
    /// never cross the split.
    pub fn load_split(&self, root: &Path, side: usize) -> Result<(ClassCorpus, ClassCorpus)> {
        let corpus = load_corpus(self.dataset, root, side)?;
        let mut rng = SimRng::seed_from_u64(self.split_seed);
        let (train, test) = split_classes(&corpus, self.resolved_n_train(), &mut rng)?;
        if self.augment_rotations {
            Ok((augment_rotations(&train)?, augment_rotations(&test)?))
        } else {
            Ok((train, test))
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub meta: MetaConfig,
    pub data: DataConfig,
}

trait ConfigValue: Sized {
    fn parse_value(s: &str) -> Option<Self>;
    fn format_value(&self) -> String;
}

macro_rules! plain_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> Option<Self> {
                s.parse().ok()
            }
            fn format_value(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

plain_value!(f32, usize, u64, bool);

impl ConfigValue for Dataset {
    fn parse_value(s: &str) -> Option<Self> {
        Dataset::parse(s).ok()
    }
    fn format_value(&self) -> String {
        self.as_str().to_string()
    }
}

macro_rules! config_keys {
    ($( $key:literal => $root:ident $(. $field:ident)+ ),* $(,)?) => {
        pub const KEYS: &[&str] = &[$($key),*];

        fn set_key(cfg: &mut RunConfig, key: &str, value: &str) -> Result<()> {
            match key {
                $( $key => {
                    cfg.$root$(.$field)+ = ConfigValue::parse_value(value).ok_or_else(|| {
                        SnnError::Config(format!("cannot parse `{value}` for key `{key}`"))
                    })?;
                } )*
                _ => return Err(SnnError::Config(format!("unknown configuration key `{key}`"))),
            }
            Ok(())
        }

        fn entries(cfg: &RunConfig) -> Vec<(&'static str, String)> {
            vec![$( ($key, cfg.$root$(.$field)+.format_value()) ),*]
        }
    };
}

config_keys! {
    "data.dataset" => data.dataset,
    "data.n_train" => data.n_train,
    "data.split_seed" => data.split_seed,
    "data.augment_rotations" => data.augment_rotations,

    "meta.ways" => meta.n_ways,
    "meta.shots" => meta.k_shots,
    "meta.epochs" => meta.epochs,
    "meta.tasks_per_epoch" => meta.tasks_per_epoch,
    "meta.train_queries" => meta.train_queries,
    "meta.eval_episodes" => meta.eval_episodes,
    "meta.memory_reset_per_episode" => meta.memory_reset_per_episode,
    "meta.plasticity" => meta.plasticity,
    "meta.seed" => meta.seed,
    "meta.pretrain_samples" => meta.pretrain_samples,

    "sim.dt" => meta.dt,
    "sim.duration_ms" => meta.duration_ms,
    "encoder.max_rate" => meta.max_rate,
    "init.w_min" => meta.init_min,
    "init.w_max" => meta.init_max,

    "conv.n_filters" => meta.conv.n_filters,
    "conv.kernel" => meta.conv.kernel,
    "conv.stride" => meta.conv.stride,
    "conv.input_side" => meta.conv.input_side,
    "conv.inhibition_radius" => meta.conv.inhibition_radius,
    "conv.input_gain" => meta.conv.input_gain,
    "conv.max_winners" => meta.conv.max_winners,
    "conv.tau_m" => meta.conv.lif.tau_m,
    "conv.r_m" => meta.conv.lif.r_m,
    "conv.u_rest" => meta.conv.lif.u_rest,
    "conv.u_theta" => meta.conv.lif.u_theta,
    "conv.u_reset" => meta.conv.lif.u_reset,
    "conv.t_ref" => meta.conv.lif.t_ref,
    "conv.a_plus" => meta.conv.stdp.a_plus,
    "conv.a_minus" => meta.conv.stdp.a_minus,
    "conv.tau_plus" => meta.conv.stdp.tau_plus,
    "conv.tau_minus" => meta.conv.stdp.tau_minus,
    "conv.soft_bound" => meta.conv.stdp.soft_bound,

    "memory.n_neurons" => meta.memory.n_neurons,
    "memory.tau_m" => meta.memory.lif.tau_m,
    "memory.r_m" => meta.memory.lif.r_m,
    "memory.u_rest" => meta.memory.lif.u_rest,
    "memory.u_theta" => meta.memory.lif.u_theta,
    "memory.u_reset" => meta.memory.lif.u_reset,
    "memory.t_ref" => meta.memory.lif.t_ref,
    "memory.rho_theta" => meta.memory.stochastic.rho_theta,
    "memory.delta_u" => meta.memory.stochastic.delta_u,
    "memory.sparsity_center" => meta.memory.policy.center,
    "memory.sparsity_spread" => meta.memory.policy.spread,
    "memory.input_gain" => meta.memory.input_gain,
    "memory.bias_current" => meta.memory.bias_current,
    "memory.label_current" => meta.memory.label_current,
    "memory.label_inhibition" => meta.memory.label_inhibition,
    "memory.feedforward_inhibition" => meta.memory.feedforward_inhibition,
    "memory.trace_budget" => meta.memory.trace_budget,
    "memory.label_block" => meta.memory.label_block,
    "memory.da_gain" => meta.memory.da_gain,
    "memory.consolidation_ms" => meta.memory.consolidation_ms,
    "memory.tau_c" => meta.memory.rstdp.tau_c,
    "memory.tau_d" => meta.memory.rstdp.tau_d,
    "memory.a_plus" => meta.memory.rstdp.stdp.a_plus,
    "memory.a_minus" => meta.memory.rstdp.stdp.a_minus,
    "memory.tau_plus" => meta.memory.rstdp.stdp.tau_plus,
    "memory.tau_minus" => meta.memory.rstdp.stdp.tau_minus,
    "memory.init_min" => meta.memory.init_min,
    "memory.init_max" => meta.memory.init_max,

    "decision.group_size" => meta.decision.group_size,
    "decision.inhibition_strength" => meta.decision.inhibition_strength,
    "decision.input_gain" => meta.decision.input_gain,
    "decision.da_gain" => meta.decision.da_gain,
    "decision.trace_budget" => meta.decision.trace_budget,
    "decision.consolidation_ms" => meta.decision.consolidation_ms,
    "decision.tau_m" => meta.decision.lif.tau_m,
    "decision.r_m" => meta.decision.lif.r_m,
    "decision.u_rest" => meta.decision.lif.u_rest,
    "decision.u_theta" => meta.decision.lif.u_theta,
    "decision.u_reset" => meta.decision.lif.u_reset,
    "decision.t_ref" => meta.decision.lif.t_ref,
    "decision.tau_c" => meta.decision.rstdp.tau_c,
    "decision.tau_d" => meta.decision.rstdp.tau_d,
    "decision.a_plus" => meta.decision.rstdp.stdp.a_plus,
    "decision.a_minus" => meta.decision.rstdp.stdp.a_minus,
    "decision.tau_plus" => meta.decision.rstdp.stdp.tau_plus,
    "decision.tau_minus" => meta.decision.rstdp.stdp.tau_minus,
}

impl RunConfig {
    /// Applies `key = value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                SnnError::Config(format!("line {}: expected `key = value`, got `{raw}`", lineno + 1))
            })?;
            set_key(self, key.trim(), value.trim())
                .map_err(|e| SnnError::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        self.validate()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        set_key(self, key, value)
    }

    pub fn validate(&self) -> Result<()> {
        self.meta.validate()
    }

    /// Every key, one per line, in a fixed order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in entries(self) {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        }
        s
    }
}
