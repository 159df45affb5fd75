//! Run configuration: a strict TOML file mapped onto [`RunConfig`].
//!
//! Unknown keys are rejected, parse errors carry line/column positions,
//! and semantic errors name the offending field. Every omitted section
//! falls back to a documented default, so a minimal synthetic run config
//! is just `dataset = "synth"`.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::federation::{ExperimentParams, FederationMode, LocalTraining};
use crate::graph::{DpGraph, NodeId};
use crate::learner::{Activation, MlpSpec};
use crate::privacy::{Accountant, ClipStrategy, DpConfig, NoiseOrder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetChoice {
    Mnist,
    Cifar10,
    Synth,
}

impl DatasetChoice {
    pub fn name(self) -> &'static str {
        match self {
            DatasetChoice::Mnist => "mnist",
            DatasetChoice::Cifar10 => "cifar10",
            DatasetChoice::Synth => "synth",
        }
    }
}

/// Synthetic dataset shape used when `dataset = "synth"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthParams {
    pub n: usize,
    pub dims: usize,
    pub classes: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n: 1000,
            dims: 16,
            classes: 4,
        }
    }
}

/// A validated run configuration with all defaults resolved.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dataset: DatasetChoice,
    pub synth: SynthParams,
    pub params: ExperimentParams,
    pub output_dir: PathBuf,
}

const DEFAULT_ROUNDS: usize = 5;
const DEFAULT_MASTER_SEED: u64 = 42;
const DEFAULT_LEARNING_RATE: f64 = 0.05;
const DEFAULT_BATCH_SIZE: usize = 64;
const DEFAULT_LOCAL_EPOCHS: usize = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    dataset: DatasetChoice,
    mode: Option<FederationMode>,
    rounds: Option<u32>,
    master_seed: Option<i64>,
    output_dir: Option<String>,
    subsample: Option<f64>,
    aggregator: Option<usize>,
    aggregator_trains: Option<bool>,
    graph: Option<RawGraph>,
    model: Option<RawModel>,
    train: Option<RawTrain>,
    dp: Option<RawDp>,
    synth: Option<RawSynth>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGraph {
    nodes: usize,
    edges: Vec<(usize, usize)>,
    dp: Option<Vec<bool>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    input_dim: Option<usize>,
    hidden_dims: Option<Vec<usize>>,
    output_dim: Option<usize>,
    activation: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrain {
    learning_rate: Option<f64>,
    batch_size: Option<usize>,
    local_epochs: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDp {
    clip_norm: Option<f64>,
    noise_multiplier: Option<f64>,
    delta: Option<f64>,
    clip_strategy: Option<ClipStrategy>,
    order: Option<NoiseOrder>,
    accountant: Option<Accountant>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSynth {
    n: Option<usize>,
    dims: Option<usize>,
    classes: Option<usize>,
}

fn config_err(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {msg}"))
}

/// Per-dataset default architecture.
fn default_model(dataset: DatasetChoice, synth: SynthParams) -> MlpSpec {
    match dataset {
        DatasetChoice::Mnist => MlpSpec {
            input_dim: 784,
            hidden_dims: vec![128],
            output_dim: 10,
            activation: Activation::Relu,
        },
        DatasetChoice::Cifar10 => MlpSpec {
            input_dim: 3072,
            hidden_dims: vec![256],
            output_dim: 10,
            activation: Activation::Relu,
        },
        DatasetChoice::Synth => MlpSpec {
            input_dim: synth.dims,
            hidden_dims: vec![32],
            output_dim: synth.classes,
            activation: Activation::Relu,
        },
    }
}

/// Parses and validates a config from its text. Unknown keys and type
/// mismatches surface with line/column positions; semantic violations
/// name the field.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;

    let synth = {
        let s = raw.synth.as_ref();
        if s.is_some() && raw.dataset != DatasetChoice::Synth {
            return Err(config_err(
                "synth",
                "section is only valid with dataset = \"synth\"",
            ));
        }
        let d = SynthParams::default();
        SynthParams {
            n: s.and_then(|s| s.n).unwrap_or(d.n),
            dims: s.and_then(|s| s.dims).unwrap_or(d.dims),
            classes: s.and_then(|s| s.classes).unwrap_or(d.classes),
        }
    };
    if synth.classes < 2 {
        return Err(config_err("synth.classes", "must be at least 2"));
    }

    let dp = match &raw.dp {
        None => None,
        Some(d) => Some(DpConfig {
            clip_norm: d.clip_norm.unwrap_or(1.0),
            noise_multiplier: d.noise_multiplier.unwrap_or(0.5),
            delta: d.delta.unwrap_or(1e-5),
            clip_strategy: d.clip_strategy.unwrap_or(ClipStrategy::DifferenceClip),
            order: d.order.unwrap_or(NoiseOrder::ClipThenNoise),
            accountant: d.accountant.unwrap_or(Accountant::GaussianClosedForm),
        }),
    };
    if let Some(d) = &dp {
        d.validate().map_err(|e| config_err("dp", e))?;
    }

    let graph = match &raw.graph {
        None => {
            // Shipped default topology; dp flags follow the [dp] section.
            let flags = vec![dp.is_some(); 5];
            DpGraph::default_five_node(flags).expect("default graph is valid")
        }
        Some(g) => {
            let flags = match &g.dp {
                Some(flags) => {
                    if flags.len() != g.nodes {
                        return Err(config_err(
                            "graph.dp",
                            format!("{} flags for {} nodes", flags.len(), g.nodes),
                        ));
                    }
                    flags.clone()
                }
                None => vec![dp.is_some(); g.nodes],
            };
            DpGraph::new(g.nodes, &g.edges, flags).map_err(|e| config_err("graph.edges", e))?
        }
    };
    if dp.is_none() {
        if let Some(node) = graph.dp_flags().iter().position(|&f| f) {
            return Err(config_err(
                &format!("graph.dp[{node}]"),
                "node has dp enabled but the [dp] section is missing",
            ));
        }
    }

    let model = {
        let default = default_model(raw.dataset, synth);
        let m = raw.model.as_ref();
        let activation = match m.and_then(|m| m.activation.as_deref()) {
            None => default.activation,
            Some("relu") => Activation::Relu,
            Some("tanh") => Activation::Tanh,
            Some(other) => {
                return Err(config_err(
                    "model.activation",
                    format!("unknown activation '{other}' (expected relu or tanh)"),
                ))
            }
        };
        let spec = MlpSpec {
            input_dim: m.and_then(|m| m.input_dim).unwrap_or(default.input_dim),
            hidden_dims: m
                .and_then(|m| m.hidden_dims.clone())
                .unwrap_or(default.hidden_dims.clone()),
            output_dim: m.and_then(|m| m.output_dim).unwrap_or(default.output_dim),
            activation,
        };
        if spec.input_dim != default.input_dim {
            return Err(config_err(
                "model.input_dim",
                format!(
                    "{} does not match the {} feature dimension {}",
                    spec.input_dim,
                    raw.dataset.name(),
                    default.input_dim
                ),
            ));
        }
        if spec.output_dim != default.output_dim {
            return Err(config_err(
                "model.output_dim",
                format!(
                    "{} does not match the {} class count {}",
                    spec.output_dim,
                    raw.dataset.name(),
                    default.output_dim
                ),
            ));
        }
        spec.validate().map_err(|e| config_err("model", e))?;
        spec
    };

    let training = LocalTraining {
        learning_rate: raw
            .train
            .as_ref()
            .and_then(|t| t.learning_rate)
            .unwrap_or(DEFAULT_LEARNING_RATE),
        batch_size: raw
            .train
            .as_ref()
            .and_then(|t| t.batch_size)
            .unwrap_or(DEFAULT_BATCH_SIZE),
        local_epochs: raw
            .train
            .as_ref()
            .and_then(|t| t.local_epochs)
            .unwrap_or(DEFAULT_LOCAL_EPOCHS),
    };
    training.validate().map_err(|e| config_err("train", e))?;

    if let Some(f) = raw.subsample {
        if !(f > 0.0 && f <= 1.0) {
            return Err(config_err("subsample", format!("{f} outside (0, 1]")));
        }
    }
    if let Some(agg) = raw.aggregator {
        if agg >= graph.node_count() {
            return Err(config_err(
                "aggregator",
                format!("node {agg} outside 0..{}", graph.node_count()),
            ));
        }
    }

    let params = ExperimentParams {
        mode: raw.mode.unwrap_or(FederationMode::PeerToPeer),
        graph,
        rounds: raw.rounds.unwrap_or(DEFAULT_ROUNDS as u32) as usize,
        model,
        training,
        dp,
        master_seed: raw.master_seed.unwrap_or(DEFAULT_MASTER_SEED as i64) as u64,
        aggregator: raw.aggregator,
        aggregator_trains: raw.aggregator_trains.unwrap_or(true),
        subsample: raw.subsample,
    };
    params.validate().map_err(|e| config_err("config", e))?;

    Ok(RunConfig {
        dataset: raw.dataset,
        synth,
        params,
        output_dir: PathBuf::from(raw.output_dir.unwrap_or_else(|| "out".to_string())),
    })
}

/// Reads and parses a config file; errors carry the path.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Config(format!(
        "cannot read {}: {source}",
        path.display()
    )))?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Pinned aggregator a centralized run will use (for summaries).
pub fn effective_aggregator(cfg: &RunConfig) -> Result<NodeId> {
    match cfg.params.aggregator {
        Some(agg) => Ok(agg),
        None => crate::graph::elect_aggregator(&cfg.params.graph, 0, &[]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_synth_config_gets_defaults() {
        let cfg = parse_config("dataset = \"synth\"\n").unwrap();
        assert_eq!(cfg.dataset, DatasetChoice::Synth);
        assert_eq!(cfg.params.rounds, 5);
        assert_eq!(cfg.params.master_seed, 42);
        assert_eq!(cfg.params.mode, FederationMode::PeerToPeer);
        assert_eq!(cfg.params.graph.node_count(), 5);
        assert_eq!(cfg.params.graph.edge_count(), 7);
        assert!(cfg.params.dp.is_none());
        assert_eq!(cfg.params.model.input_dim, 16);
        assert_eq!(cfg.params.model.output_dim, 4);
        assert_eq!(cfg.params.training.batch_size, 64);
        assert!(cfg.params.aggregator_trains);
        assert_eq!(cfg.output_dir, PathBuf::from("out"));
    }

    #[test]
    fn dp_section_enables_flags_by_default() {
        let cfg = parse_config("dataset = \"synth\"\n[dp]\nnoise_multiplier = 0.5\n").unwrap();
        assert!(cfg.params.graph.dp_flags().iter().all(|&f| f));
        let dp = cfg.params.dp.unwrap();
        assert_eq!(dp.clip_norm, 1.0);
        assert_eq!(dp.delta, 1e-5);
        assert_eq!(dp.clip_strategy, ClipStrategy::DifferenceClip);
    }

    #[test]
    fn dp_flag_without_dp_section_names_the_node() {
        let text = "dataset = \"synth\"\n[graph]\nnodes = 3\nedges = [[0,1],[1,2]]\ndp = [false, true, false]\n";
        let err = parse_config(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("graph.dp[1]"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn zero_rounds_is_accepted() {
        let cfg = parse_config("dataset = \"synth\"\nrounds = 0\n").unwrap();
        assert_eq!(cfg.params.rounds, 0);
    }

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let err = parse_config("dataset = \"synth\"\nbogus = 1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus"), "{msg}");
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn parse_errors_carry_line_and_column() {
        let err = parse_config("dataset = \"synth\"\nrounds = oops\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn model_dims_must_match_dataset() {
        let err = parse_config("dataset = \"mnist\"\n[model]\ninput_dim = 100\n").unwrap_err();
        assert!(err.to_string().contains("model.input_dim"));
        let cfg = parse_config("dataset = \"mnist\"\n[model]\nhidden_dims = [64, 32]\n").unwrap();
        assert_eq!(cfg.params.model.hidden_dims, vec![64, 32]);
        assert_eq!(cfg.params.model.input_dim, 784);
    }

    #[test]
    fn synth_section_only_for_synth() {
        let err = parse_config("dataset = \"mnist\"\n[synth]\nn = 10\n").unwrap_err();
        assert!(err.to_string().contains("synth"));
    }

    #[test]
    fn bad_values_name_their_field() {
        let err = parse_config("dataset = \"synth\"\nsubsample = 1.5\n").unwrap_err();
        assert!(err.to_string().contains("subsample"));
        let err = parse_config("dataset = \"synth\"\naggregator = 9\n").unwrap_err();
        assert!(err.to_string().contains("aggregator"));
        let err = parse_config("dataset = \"synth\"\n[train]\nlearning_rate = 0.0\n").unwrap_err();
        assert!(err.to_string().contains("train"));
        let err = parse_config("dataset = \"synth\"\n[dp]\ndelta = 2.0\n").unwrap_err();
        assert!(err.to_string().contains("dp"));
    }

    #[test]
    fn p2p_alias_parses() {
        let cfg = parse_config("dataset = \"synth\"\nmode = \"p2p\"\n").unwrap();
        assert_eq!(cfg.params.mode, FederationMode::PeerToPeer);
        let cfg = parse_config("dataset = \"synth\"\nmode = \"centralized\"\n").unwrap();
        assert_eq!(cfg.params.mode, FederationMode::Centralized);
    }

    #[test]
    fn explicit_graph_and_dp_flags() {
        let text = r#"
dataset = "synth"
mode = "centralized"
aggregator = 0

[graph]
nodes = 3
edges = [[0, 1], [0, 2]]
dp = [false, true, true]

[dp]
noise_multiplier = 1.0
"#;
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.params.graph.node_count(), 3);
        assert_eq!(cfg.params.graph.dp_flags(), &[false, true, true]);
        assert_eq!(cfg.params.aggregator, Some(0));
    }
}
