//! Speculative decoding with training-free token acceptance from a
//! Monte Carlo dropout LM head.
//!
//! The target's final hidden state is passed through the LM head `K` times
//! under independent dropout masks. A draft token is accepted when its
//! distribution sits within the Jensen-Shannon spread of those heads around
//! their centroid, or, failing that, when it matches the heads' majority
//! token. Baseline rules (rejection sampling, greedy exact match, naive
//! any-head match) share the same engine so they can be compared on equal
//! seeds.
//!
//! Module map:
//!
//! * [`math`]: softmax, KL and JS divergences, logit averaging
//! * [`mc_head`]: dropout masks and the multi-sample head
//! * [`acceptance`]: all acceptance rules
//! * [`models`]: table, neural and trace-replay models
//! * [`engine`]: the propose / verify loop
//! * [`metrics`]: acceptance length, agreement, JS and overhead statistics
//! * [`cli`]: config files and the `run` / `bench` / `trace` commands

pub mod acceptance;
pub mod cli;
pub mod engine;
pub mod error;
pub mod math;
pub mod mc_head;
pub mod metrics;
pub mod models;
pub mod rng;

pub use acceptance::{AcceptanceDecision, Branch, Criterion, DecodeMode, DraftToken, MajorityRule};
pub use engine::{decode, DecodeOutput, EngineConfig, Replacement, StepRecord, Timing};
pub use error::{Error, Result};
pub use math::{LogitVector, ProbDist};
pub use mc_head::{HeadSampleSet, HeadWeights, HiddenState, McHead};
pub use metrics::RunSummary;
pub use models::{LanguageModel, NeuralLm, NeuralLmConfig, TableLm};
