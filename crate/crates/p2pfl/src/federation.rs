//! Round orchestration: role assignment, broadcast, local training,
//! privatization, weighted averaging, and model adoption.
//!
//! Each round broadcasts the aggregator's current model to its neighbor
//! providers, every participant trains locally from that base, updates are
//! privatized per the node's dp flag, and the aggregator averages them
//! weighted by shard size. The new global model is adopted by the
//! aggregator and all providers; non-participants keep their stale model
//! until they next take part, which is how an incomplete graph slows
//! learning down.
//!
//! Determinism contract: per-client seeds derive from
//! (master_seed, round, node), so runs reproduce bit-identically no matter
//! how clients are scheduled.

use serde::Deserialize;

use crate::datasets::{partition_iid, subsample_partition, Dataset};
use crate::error::{Error, Result};
use crate::graph::{assemble_plan, elect_aggregator, plan_round, DpGraph, NodeId, RoundPlan};
use crate::learner::{Mlp, MlpSpec, ParamVector, TrainConfig};
use crate::privacy::{
    compute_update, privatize, ClipStrategy, DpConfig, PrivacyLedger, Release,
};
use crate::rng::{derive_seed, SeedStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FederationMode {
    /// One configured node aggregates in every round.
    Centralized,
    /// The aggregator rotates by connectivity degree.
    #[serde(alias = "p2p")]
    PeerToPeer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Aggregator,
    Provider,
    Dnp,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Role::Aggregator => "aggregator",
            Role::Provider => "provider",
            Role::Dnp => "dnp",
        })
    }
}

impl std::str::FromStr for Role {
    type Err = ();
    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s {
            "aggregator" => Ok(Role::Aggregator),
            "provider" => Ok(Role::Provider),
            "dnp" => Ok(Role::Dnp),
            _ => Err(()),
        }
    }
}

/// Per-node per-round metrics row. Non-participants carry no metrics,
/// matching their blank table cells.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub node: NodeId,
    pub role: Role,
    pub loss: Option<f64>,
    pub accuracy: Option<f64>,
    /// Privacy spent so far; ∞ means no guarantee (node never noises).
    pub epsilon: f64,
}

/// One client's durable state across rounds.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub node_id: NodeId,
    /// Indices into the shared training set.
    pub shard: Vec<usize>,
    pub model: ParamVector,
    pub dp_enabled: bool,
}

impl ClientState {
    pub fn shard_size(&self) -> usize {
        self.shard.len()
    }
}

/// Local SGD settings shared by every client; the per-client seed is
/// derived by the round engine.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTraining {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub local_epochs: usize,
}

impl LocalTraining {
    pub fn validate(&self) -> Result<()> {
        self.with_seed(0).validate()
    }

    fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            local_epochs: self.local_epochs,
            seed,
        }
    }
}

/// Shard-size weights pᵢ = |Dᵢ| / |D| as floats.
pub fn normalized_weights(sizes: &[usize]) -> Vec<f64> {
    let total: usize = sizes.iter().sum();
    sizes.iter().map(|&s| s as f64 / total as f64).collect()
}

/// Dataset-size-weighted average Σ pᵢ·wᵢ with pᵢ = sizeᵢ / Σ sizes.
/// Computed as an integer-weighted sum divided by the integer total, so
/// the weights sum to one by construction. Summation runs in argument
/// order; callers wanting schedule-independent floats sort by node id.
pub fn fedavg(contributions: &[(&ParamVector, usize)]) -> Result<ParamVector> {
    let (first, _) = contributions
        .first()
        .ok_or_else(|| Error::InvalidArgument("fedavg over an empty contribution list".into()))?;
    let mut total: u64 = 0;
    for (v, size) in contributions {
        first.check_same_layout(v)?;
        if *size == 0 {
            return Err(Error::InvalidArgument("fedavg contribution with zero shard size".into()));
        }
        total += *size as u64;
    }
    let mut acc = ParamVector::zeros(first.layout().clone());
    for (v, size) in contributions {
        acc.axpy(*size as f64, v)?;
    }
    acc.scale(1.0 / total as f64);
    Ok(acc)
}

/// Everything one round needs besides the mutable client states.
#[derive(Debug)]
pub struct RoundInputs<'a> {
    pub plan: &'a RoundPlan,
    /// The aggregator's current model, broadcast to all participants.
    pub base_model: &'a ParamVector,
    pub mlp: &'a Mlp,
    pub training: &'a LocalTraining,
    pub dp: Option<&'a DpConfig>,
    pub train_data: &'a Dataset,
    pub test_data: &'a Dataset,
    pub master_seed: u64,
    pub aggregator_trains: bool,
}

/// Executes one round and returns the new global model plus one record
/// per node (ordered by node id). Participant states adopt the new model;
/// non-participants are left untouched.
pub fn run_round(
    inputs: &RoundInputs,
    states: &mut [ClientState],
    ledger: &mut PrivacyLedger,
) -> Result<(ParamVector, Vec<RoundRecord>)> {
    let plan = inputs.plan;
    let round = plan.round_index;
    if plan.providers.len() + plan.non_participants.len() + 1 != states.len()
        || plan.aggregator >= states.len()
    {
        return Err(Error::InvalidArgument(format!(
            "round plan does not cover the {} client states",
            states.len()
        )));
    }

    let mut trainers: Vec<NodeId> = plan.providers.clone();
    if inputs.aggregator_trains {
        trainers.push(plan.aggregator);
        trainers.sort_unstable();
    }
    if trainers.is_empty() {
        return Err(Error::RoundAborted {
            round,
            reason: "no participant trained".into(),
        });
    }

    // With a dp config the clip strategy fixes the aggregation space for
    // everyone (deltas or models); without one, plain model averaging.
    let strategy = inputs
        .dp
        .map(|d| d.clip_strategy)
        .unwrap_or(ClipStrategy::ModelClip);

    let mut contributions: Vec<(ParamVector, usize)> = Vec::with_capacity(trainers.len());
    for &node in &trainers {
        let state = &states[node];
        if state.shard.is_empty() {
            return Err(Error::EmptyShard(node));
        }
        let cfg = inputs
            .training
            .with_seed(derive_seed(inputs.master_seed, round as u64, node as u64, SeedStream::Train));
        let trained = inputs
            .mlp
            .local_train(inputs.base_model, inputs.train_data, &state.shard, &cfg)?;
        let update = if state.dp_enabled {
            let dp = inputs.dp.ok_or_else(|| {
                Error::InvalidArgument(format!("node {node} has a dp flag but no dp config was provided"))
            })?;
            let noised = privatize(
                inputs.base_model,
                &trained,
                dp,
                derive_seed(inputs.master_seed, round as u64, node as u64, SeedStream::Noise),
            )?;
            ledger.record_release(
                node,
                Release {
                    noise_multiplier: dp.noise_multiplier,
                    clip_norm: dp.clip_norm,
                    round_index: round,
                },
            )?;
            noised
        } else {
            compute_update(inputs.base_model, &trained, strategy)?
        };
        contributions.push((update, state.shard_size()));
    }

    let refs: Vec<(&ParamVector, usize)> =
        contributions.iter().map(|(u, s)| (u, *s)).collect();
    let aggregated = fedavg(&refs)?;
    let new_global = match strategy {
        ClipStrategy::DifferenceClip => inputs.base_model.add(&aggregated)?,
        ClipStrategy::ModelClip => aggregated,
    };
    if !new_global.all_finite() {
        return Err(Error::NonFinite(format!(
            "aggregated model in round {round} has non-finite entries"
        )));
    }

    let (loss, accuracy) = inputs.mlp.evaluate(&new_global, inputs.test_data)?;

    let mut records = Vec::with_capacity(states.len());
    for node in 0..states.len() {
        let role = if node == plan.aggregator {
            Role::Aggregator
        } else if plan.providers.binary_search(&node).is_ok() {
            Role::Provider
        } else {
            Role::Dnp
        };
        let (l, a) = match role {
            Role::Dnp => (None, None),
            _ => (Some(loss), Some(accuracy)),
        };
        let epsilon = match inputs.dp {
            Some(dp) => ledger.epsilon_for(node, dp),
            None => f64::INFINITY,
        };
        records.push(RoundRecord {
            round,
            node,
            role,
            loss: l,
            accuracy: a,
            epsilon,
        });
    }

    states[plan.aggregator].model = new_global.clone();
    for &p in &plan.providers {
        states[p].model = new_global.clone();
    }
    Ok((new_global, records))
}

/// Run-level knobs, independent of where the data comes from.
#[derive(Debug, Clone)]
pub struct ExperimentParams {
    pub mode: FederationMode,
    pub graph: DpGraph,
    pub rounds: usize,
    pub model: MlpSpec,
    pub training: LocalTraining,
    pub dp: Option<DpConfig>,
    pub master_seed: u64,
    /// Pinned aggregator for centralized mode; defaults to the degree
    /// election winner.
    pub aggregator: Option<NodeId>,
    /// Whether the aggregator also trains on its own shard (default true).
    pub aggregator_trains: bool,
    /// Keep only this fraction of every shard.
    pub subsample: Option<f64>,
}

impl ExperimentParams {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.training.validate()?;
        if let Some(dp) = &self.dp {
            dp.validate()?;
        }
        if self.dp.is_none() && self.graph.dp_flags().iter().any(|&f| f) {
            return Err(Error::InvalidArgument(
                "graph has dp-flagged nodes but no dp config".into(),
            ));
        }
        if !self.graph.has_edges() {
            return Err(Error::InvalidArgument("graph has no edges".into()));
        }
        if let Some(agg) = self.aggregator {
            if agg >= self.graph.node_count() {
                return Err(Error::InvalidArgument(format!(
                    "aggregator {agg} outside 0..{}",
                    self.graph.node_count()
                )));
            }
        }
        if let Some(f) = self.subsample {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "subsample fraction {f} outside (0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// A fully prepared run: clients with shards, ledger, rotation history.
#[derive(Debug)]
pub struct Experiment {
    params: ExperimentParams,
    mlp: Mlp,
    train_data: Dataset,
    test_data: Dataset,
    states: Vec<ClientState>,
    ledger: PrivacyLedger,
    history: Vec<NodeId>,
    pinned: NodeId,
}

impl Experiment {
    pub fn new(params: ExperimentParams, train_data: Dataset, test_data: Dataset) -> Result<Self> {
        params.validate()?;
        let mlp = Mlp::new(params.model.clone())?;
        if params.model.input_dim != train_data.feature_dim()
            || params.model.input_dim != test_data.feature_dim()
        {
            return Err(Error::InvalidArgument(format!(
                "model input dim {} does not match dataset dim {}",
                params.model.input_dim,
                train_data.feature_dim()
            )));
        }
        if params.model.output_dim != train_data.classes() {
            return Err(Error::InvalidArgument(format!(
                "model output dim {} does not match {} classes",
                params.model.output_dim,
                train_data.classes()
            )));
        }
        let k = params.graph.node_count();
        let mut partition = partition_iid(
            &train_data,
            k,
            derive_seed(params.master_seed, 0, 0, SeedStream::Partition),
        )?;
        if let Some(fraction) = params.subsample {
            partition = subsample_partition(&partition, fraction, params.master_seed)?;
        }
        let initial = mlp.init_params(derive_seed(params.master_seed, 0, 0, SeedStream::Init));
        let states = partition
            .shards()
            .iter()
            .enumerate()
            .map(|(node_id, shard)| ClientState {
                node_id,
                shard: shard.clone(),
                model: initial.clone(),
                dp_enabled: params.graph.dp_enabled(node_id),
            })
            .collect();
        let ledger = PrivacyLedger::new(params.graph.dp_flags());
        let pinned = match params.aggregator {
            Some(agg) => agg,
            None => elect_aggregator(&params.graph, 0, &[])?,
        };
        Ok(Experiment {
            params,
            mlp,
            train_data,
            test_data,
            states,
            ledger,
            history: Vec::new(),
            pinned,
        })
    }

    /// Executes all configured rounds, threading the rotation history,
    /// ledger, and per-client models.
    pub fn run(&mut self) -> Result<Vec<RoundRecord>> {
        let mut records = Vec::with_capacity(self.params.rounds * self.states.len());
        for round in 0..self.params.rounds {
            let plan = match self.params.mode {
                FederationMode::PeerToPeer => {
                    plan_round(&self.params.graph, round, &mut self.history)?
                }
                FederationMode::Centralized => {
                    assemble_plan(&self.params.graph, round, self.pinned)
                }
            };
            let base = self.states[plan.aggregator].model.clone();
            let inputs = RoundInputs {
                plan: &plan,
                base_model: &base,
                mlp: &self.mlp,
                training: &self.params.training,
                dp: self.params.dp.as_ref(),
                train_data: &self.train_data,
                test_data: &self.test_data,
                master_seed: self.params.master_seed,
                aggregator_trains: self.params.aggregator_trains,
            };
            let (_, round_records) = run_round(&inputs, &mut self.states, &mut self.ledger)?;
            records.extend(round_records);
        }
        Ok(records)
    }

    pub fn states(&self) -> &[ClientState] {
        &self.states
    }

    pub fn ledger(&self) -> &PrivacyLedger {
        &self.ledger
    }

    pub fn history(&self) -> &[NodeId] {
        &self.history
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn test_data(&self) -> &Dataset {
        &self.test_data
    }
}

/// Convenience wrapper: prepare, run, and hand back records plus the
/// final experiment state (per-client models, ledger, history).
pub fn run_experiment(
    params: ExperimentParams,
    train_data: Dataset,
    test_data: Dataset,
) -> Result<(Vec<RoundRecord>, Experiment)> {
    let mut experiment = Experiment::new(params, train_data, test_data)?;
    let records = experiment.run()?;
    Ok((records, experiment))
}
