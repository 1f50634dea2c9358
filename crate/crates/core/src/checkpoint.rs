//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic          8 bytes  "SNNMETA1"
//! format_version u32
//! config_len     u32, then config_len bytes of UTF-8 `key = value` text
//! has_rng        u8; if 1: seed [u8; 32], stream u64, word_pos u128
//! n_tensors      u32
//! per tensor:    name_len u32, name bytes, ndim u32, dims u64 * ndim,
//!                product(dims) f32 values, row-major
//! ```

use std::collections::HashSet;
use std::path::Path;

use crate::config::RunConfig;
use crate::error::{Result, SnnError};
use crate::layers::{ConvLayer, DecisionLayer, MemoryLayer};
use crate::meta::{Model, TaskRecord, TrainState};
use crate::plasticity::{RewardState, SynapseMatrix};
use crate::rng::{RngState, SimRng};

pub const MAGIC: &[u8; 8] = b"SNNMETA1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(name: &str, dims: Vec<usize>, data: Vec<f32>) -> Self {
        assert_eq!(dims.iter().product::<usize>(), data.len(), "tensor `{name}` shape mismatch");
        Self {
            name: name.to_owned(),
            dims,
            data,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: String,
    pub rng: Option<RngState>,
    pub tensors: Vec<Tensor>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(SnnError::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| SnnError::Checkpoint("invalid UTF-8".into()))
    }
}

impl Checkpoint {
    pub fn new(config: String) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            config,
            rng: None,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, t: Tensor) {
        self.tensors.push(t);
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| SnnError::Checkpoint(format!("missing tensor `{name}`")))
    }

    pub fn has(&self, name: &str) -> bool {
        self.tensors.iter().any(|t| t.name == name)
    }

    fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        for t in &self.tensors {
            if !names.insert(t.name.as_str()) {
                return Err(SnnError::Checkpoint(format!("duplicate tensor `{}`", t.name)));
            }
            if t.dims.iter().product::<usize>() != t.data.len() {
                return Err(SnnError::Checkpoint(format!("tensor `{}` length does not match dims", t.name)));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.format_version.to_le_bytes());
        out.extend_from_slice(&(self.config.len() as u32).to_le_bytes());
        out.extend_from_slice(self.config.as_bytes());
        match &self.rng {
            Some(s) => {
                out.push(1);
                out.extend_from_slice(&s.seed);
                out.extend_from_slice(&s.stream.to_le_bytes());
                out.extend_from_slice(&s.word_pos.to_le_bytes());
            }
            None => out.push(0),
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
            for &d in &t.dims {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(SnnError::Checkpoint("bad magic; not an SNNMETA1 checkpoint".into()));
        }
        let format_version = r.u32()?;
        if format_version != FORMAT_VERSION {
            return Err(SnnError::Checkpoint(format!("unsupported format version {format_version}")));
        }
        let config = r.string()?;
        let rng = match r.u8()? {
            0 => None,
            1 => {
                let seed: [u8; 32] = r.take(32)?.try_into().unwrap();
                Some(RngState {
                    seed,
                    stream: r.u64()?,
                    word_pos: r.u128()?,
                })
            }
            other => return Err(SnnError::Checkpoint(format!("bad rng flag {other}"))),
        };
        let n = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(n);
        for _ in 0..n {
            let name = r.string()?;
            let ndim = r.u32()? as usize;
            let dims = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let len: usize = dims.iter().product();
            let bytes = r.take(len.checked_mul(4).ok_or_else(|| SnnError::Checkpoint("tensor too large".into()))?)?;
            let data = bytes.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
            tensors.push(Tensor { name, dims, data });
        }
        if r.pos != buf.len() {
            return Err(SnnError::Checkpoint(format!("{} trailing bytes", buf.len() - r.pos)));
        }
        let ck = Self {
            format_version,
            config,
            rng,
            tensors,
        };
        ck.validate()?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        RunConfig::from_text(&self.config)
    }
}

fn matrix_tensor(name: &str, m: &SynapseMatrix) -> Tensor {
    Tensor::new(name, vec![m.n_pre, m.n_post], m.w.clone())
}

fn matrix_from(ck: &Checkpoint, name: &str, n_pre: usize, n_post: usize) -> Result<SynapseMatrix> {
    let t = ck.tensor(name)?;
    if t.dims != [n_pre, n_post] {
        return Err(SnnError::Checkpoint(format!(
            "tensor `{name}` is {:?}, configuration expects [{n_pre}, {n_post}]",
            t.dims
        )));
    }
    Ok(SynapseMatrix::new(n_pre, n_post, t.data.clone()))
}

/// Conv-only checkpoint written by pretraining.
pub fn conv_checkpoint(conv: &ConvLayer, cfg: &RunConfig) -> Checkpoint {
    let mut ck = Checkpoint::new(cfg.to_text());
    ck.push(matrix_tensor("conv.weights", &conv.weights));
    ck
}

pub fn conv_from_checkpoint(ck: &Checkpoint, cfg: &RunConfig) -> Result<ConvLayer> {
    let c = cfg.meta.conv;
    let w = matrix_from(ck, "conv.weights", c.kernel * c.kernel, c.n_filters)?;
    ConvLayer::new(c, w)
}

fn reward_tensor(rs: &RewardState) -> Tensor {
    Tensor::new(
        "reward.state",
        vec![5],
        vec![rs.dopamine, rs.reward_mag, rs.punish_mag, rs.n_correct as f32, rs.n_incorrect as f32],
    )
}

/// Full model (and optionally training progress) checkpoint.
pub fn model_checkpoint(model: &Model, cfg: &RunConfig, progress: Option<&TrainState>) -> Checkpoint {
    let mut ck = conv_checkpoint(&model.conv, cfg);
    ck.push(matrix_tensor("memory.weights", &model.memory.weights));
    ck.push(Tensor::new(
        "memory.block_order",
        vec![model.memory.block_order.len()],
        model.memory.block_order.iter().map(|&i| i as f32).collect(),
    ));
    ck.push(matrix_tensor("decision.weights", &model.decision.weights));
    ck.push(reward_tensor(&model.reward));
    if let Some(state) = progress {
        ck.rng = Some(state.rng.state());
        ck.push(Tensor::new("train.next_task", vec![1], vec![state.next_task as f32]));
        let mut rows = Vec::with_capacity(state.records.len() * 5);
        for r in &state.records {
            rows.extend_from_slice(&[r.epoch as f32, r.task as f32, r.accuracy, r.reward_mag, r.mean_n_s]);
        }
        ck.push(Tensor::new("train.metrics", vec![state.records.len(), 5], rows));
    }
    ck
}

pub fn model_from_checkpoint(ck: &Checkpoint, cfg: &RunConfig) -> Result<Model> {
    let m = &cfg.meta;
    let conv = conv_from_checkpoint(ck, cfg)?;
    let fan_in = m.conv.n_features();
    let n_mem = m.memory.n_neurons;
    let memory_w = matrix_from(ck, "memory.weights", fan_in, n_mem)?;
    let order = ck.tensor("memory.block_order")?;
    if order.dims != [n_mem] {
        return Err(SnnError::Checkpoint("memory.block_order has the wrong length".into()));
    }
    let block_order = order.data.iter().map(|&v| v as usize).collect();
    let memory = MemoryLayer::new(m.memory, memory_w, block_order)?;
    let dcfg = m.decision_config();
    let decision = DecisionLayer::new(dcfg, matrix_from(ck, "decision.weights", n_mem, dcfg.n_neurons())?)?;
    let rt = ck.tensor("reward.state")?;
    if rt.data.len() != 5 {
        return Err(SnnError::Checkpoint("reward.state must hold 5 values".into()));
    }
    let reward = RewardState {
        dopamine: rt.data[0],
        reward_mag: rt.data[1],
        punish_mag: rt.data[2],
        n_correct: rt.data[3] as u32,
        n_incorrect: rt.data[4] as u32,
    };
    Ok(Model {
        conv,
        memory,
        decision,
        reward,
    })
}

/// Restores a paused meta-training run.
pub fn train_state_from_checkpoint(ck: &Checkpoint, cfg: &RunConfig) -> Result<TrainState> {
    let model = model_from_checkpoint(ck, cfg)?;
    let rng = ck
        .rng
        .map(SimRng::from_state)
        .ok_or_else(|| SnnError::Checkpoint("checkpoint carries no rng state".into()))?;
    let next_task = ck.tensor("train.next_task")?.data[0] as usize;
    let metrics = ck.tensor("train.metrics")?;
    let records = metrics
        .data
        .chunks_exact(5)
        .map(|r| TaskRecord {
            epoch: r[0] as usize,
            task: r[1] as usize,
            accuracy: r[2],
            reward_mag: r[3],
            mean_n_s: r[4],
        })
        .collect();
    Ok(TrainState {
        model,
        next_task,
        rng,
        records,
    })
}
