//! Spiking few-shot meta-learner.
//!
//! A clock-driven LIF engine ([`neuron`]) with STDP and reward-modulated STDP
//! ([`plasticity`]) drives a three-stage network ([`layers`]): STDP-pretrained
//! convolutional features, a stochastic-threshold episodic memory whose
//! activity is held in a sparsity band by reward, and a group-coded decision
//! layer trained with adaptive reward and punishment. [`meta`] runs the
//! N-way K-shot meta-training and meta-testing protocol over corpora loaded by
//! [`episodes`].

// `!(x >= lo)` deliberately rejects NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod config;
pub mod episodes;
pub mod error;
pub mod layers;
pub mod meta;
pub mod neuron;
pub mod pixels;
pub mod plasticity;
pub mod rng;
pub mod synth;

pub use error::{Result, SnnError};
pub use rng::SimRng;
