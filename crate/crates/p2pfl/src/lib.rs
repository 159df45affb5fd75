//! Deterministic single-process simulator of peer-to-peer federated
//! learning with differential privacy.
//!
//! Nodes on a connectivity graph train local MLP models, clip and
//! optionally noise their updates, and a rotating degree-elected
//! aggregator averages them weighted by shard size. Four experimental
//! regimes — {centralized, peer-to-peer} × {with, without DP} — are plain
//! config variations; see the `configs/` directory and the `p2pfl` binary.
//!
//! Module map:
//! - [`graph`]: connectivity graph, dp flags, aggregator election
//! - [`learner`]: parameter vectors, the MLP, SGD training
//! - [`privacy`]: clipping, Gaussian noise, the privacy ledger
//! - [`federation`]: the round engine and experiment driver
//! - [`datasets`]: MNIST/CIFAR-10 loaders, synthetic blobs, IID splits
//! - [`harness`]: run configs, metrics CSV tables, plots, CLI

pub mod datasets;
pub mod error;
pub mod federation;
pub mod graph;
pub mod harness;
pub mod learner;
pub mod privacy;
pub mod rng;

pub use error::{Error, Result};
pub use federation::{
    fedavg, run_experiment, ClientState, Experiment, ExperimentParams, FederationMode,
    LocalTraining, Role, RoundRecord,
};
pub use graph::{elect_aggregator, plan_round, DpGraph, NodeId, RoundPlan};
pub use learner::{Activation, Mlp, MlpSpec, ParamVector, TrainConfig};
pub use privacy::{
    add_noise, clip, compute_update, privatize, Accountant, ClipStrategy, DpConfig, NoiseOrder,
    PrivacyLedger, Release,
};
