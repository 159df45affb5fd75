//! Bounded-norm clipping, the Gaussian perturbation mechanism, and the
//! per-node privacy ledger.
//!
//! The mechanism is Gaussian only: noise standard deviation is
//! `noise_multiplier · clip_norm` per coordinate, with L2 sensitivity
//! taken as the clipping norm. Noise is applied by the data-owning client
//! before transmission, never by the aggregator.
//!
//! Two accountants are available. `GaussianClosedForm` uses
//! ε = (Δ/σ)·√(2·ln(1.25/δ)); a sequence of releases is treated as one
//! Gaussian mechanism over the concatenated outputs, whose joint
//! sensitivity is √(Σ Cᵢ²) blockwise, giving ε = √(Σ 1/zᵢ²)·√(2·ln(1.25/δ))
//! at the configured δ. `BasicComposition` instead sums per-release
//! epsilons (and implicitly deltas). Both collapse to the same value for a
//! single release. The closed form is loose once ε ≥ 1; callers surface a
//! warning rather than rejecting the value.

use rand_distr::{Distribution, Normal};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::learner::ParamVector;
use crate::rng::seeded_rng;

/// Which vector a client transmits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipStrategy {
    /// Send the trained model itself, clipped.
    ModelClip,
    /// Send the trained-minus-initial difference, clipped; the aggregator
    /// re-adds the broadcast base after averaging.
    DifferenceClip,
}

/// Order of the clip and noise stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseOrder {
    ClipThenNoise,
    NoiseThenClip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Accountant {
    GaussianClosedForm,
    BasicComposition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpConfig {
    pub clip_norm: f64,
    pub noise_multiplier: f64,
    pub delta: f64,
    pub clip_strategy: ClipStrategy,
    pub order: NoiseOrder,
    pub accountant: Accountant,
}

impl DpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_norm > 0.0) || !self.clip_norm.is_finite() {
            return Err(Error::InvalidArgument("clip_norm must be positive".into()));
        }
        if !(self.noise_multiplier >= 0.0) || !self.noise_multiplier.is_finite() {
            return Err(Error::InvalidArgument(
                "noise_multiplier must be non-negative".into(),
            ));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidArgument("delta must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Scales `update` by min(1, clip_norm / ‖update‖₂). Inputs already inside
/// the ball are returned bit-exactly; direction is always preserved.
pub fn clip(update: &ParamVector, clip_norm: f64) -> Result<ParamVector> {
    if !(clip_norm > 0.0) || !clip_norm.is_finite() {
        return Err(Error::InvalidArgument("clip_norm must be positive".into()));
    }
    if !update.all_finite() {
        return Err(Error::NonFinite("clip input has non-finite entries".into()));
    }
    let norm = update.l2_norm();
    if norm <= clip_norm {
        return Ok(update.clone());
    }
    let mut clipped = update.clone();
    clipped.scale(clip_norm / norm);
    // rounding can leave the rescaled norm an ulp above the bound; correct
    // so the ≤ branch makes clipping exactly idempotent
    for _ in 0..4 {
        let n = clipped.l2_norm();
        if n <= clip_norm {
            break;
        }
        clipped.scale(clip_norm / n);
    }
    Ok(clipped)
}

/// The vector a client transmits before any clipping or noising:
/// the model delta under [`ClipStrategy::DifferenceClip`], the trained
/// model itself under [`ClipStrategy::ModelClip`].
pub fn compute_update(
    initial: &ParamVector,
    trained: &ParamVector,
    strategy: ClipStrategy,
) -> Result<ParamVector> {
    initial.check_same_layout(trained)?;
    match strategy {
        ClipStrategy::DifferenceClip => trained.sub(initial),
        ClipStrategy::ModelClip => Ok(trained.clone()),
    }
}

/// Adds i.i.d. Gaussian noise with σ = noise_multiplier · clip_norm to
/// every coordinate. Deterministic in `rng_seed`; a zero multiplier
/// returns the input bit-identically.
pub fn add_noise(
    update: &ParamVector,
    clip_norm: f64,
    noise_multiplier: f64,
    rng_seed: u64,
) -> Result<ParamVector> {
    if !(clip_norm > 0.0) || !clip_norm.is_finite() {
        return Err(Error::InvalidArgument("clip_norm must be positive".into()));
    }
    if !(noise_multiplier >= 0.0) || !noise_multiplier.is_finite() {
        return Err(Error::InvalidArgument(
            "noise_multiplier must be non-negative".into(),
        ));
    }
    if noise_multiplier == 0.0 {
        return Ok(update.clone());
    }
    let sigma = noise_multiplier * clip_norm;
    let normal = Normal::new(0.0, sigma).expect("validated sigma");
    let mut rng = seeded_rng(rng_seed);
    let mut noised = update.clone();
    for v in noised.values_mut() {
        *v += normal.sample(&mut rng);
    }
    Ok(noised)
}

/// The full client-side pipeline: compute the update, then clip and noise
/// in the configured order. Under `NoiseThenClip` the output norm is
/// bounded by the clipping norm; under `ClipThenNoise` it may exceed it.
pub fn privatize(
    initial: &ParamVector,
    trained: &ParamVector,
    cfg: &DpConfig,
    rng_seed: u64,
) -> Result<ParamVector> {
    cfg.validate()?;
    let update = compute_update(initial, trained, cfg.clip_strategy)?;
    match cfg.order {
        NoiseOrder::ClipThenNoise => add_noise(
            &clip(&update, cfg.clip_norm)?,
            cfg.clip_norm,
            cfg.noise_multiplier,
            rng_seed,
        ),
        NoiseOrder::NoiseThenClip => clip(
            &add_noise(&update, cfg.clip_norm, cfg.noise_multiplier, rng_seed)?,
            cfg.clip_norm,
        ),
    }
}

/// One noisy release by one node.
#[derive(Debug, Clone, PartialEq)]
pub struct Release {
    pub noise_multiplier: f64,
    pub clip_norm: f64,
    pub round_index: usize,
}

#[derive(Debug, Clone, Default)]
struct NodeLedger {
    dp_enabled: bool,
    releases: Vec<Release>,
    /// Running Σ 1/zᵢ² for the closed-form accountant.
    inv_z2_sum: f64,
    zero_noise_release: bool,
}

/// Append-only record of noisy releases per node, with ε queries.
///
/// Nodes whose dp flag is off never release and report ε = ∞ (no
/// guarantee); dp-enabled nodes report ε = 0 until their first release.
#[derive(Debug, Clone)]
pub struct PrivacyLedger {
    nodes: Vec<NodeLedger>,
}

/// ε for one Gaussian release at the configured δ.
fn single_release_epsilon(noise_multiplier: f64, delta: f64) -> f64 {
    if noise_multiplier == 0.0 {
        return f64::INFINITY;
    }
    (2.0 * (1.25 / delta).ln()).sqrt() / noise_multiplier
}

impl PrivacyLedger {
    pub fn new(dp_flags: &[bool]) -> Self {
        PrivacyLedger {
            nodes: dp_flags
                .iter()
                .map(|&dp_enabled| NodeLedger {
                    dp_enabled,
                    ..NodeLedger::default()
                })
                .collect(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn dp_enabled(&self, node: NodeId) -> bool {
        self.nodes.get(node).map(|n| n.dp_enabled).unwrap_or(false)
    }

    pub fn releases(&self, node: NodeId) -> &[Release] {
        &self.nodes[node].releases
    }

    /// Appends a release for a dp-enabled node. Recording against a node
    /// without the dp flag is a caller bug and is rejected.
    pub fn record_release(&mut self, node: NodeId, release: Release) -> Result<()> {
        let entry = self
            .nodes
            .get_mut(node)
            .ok_or_else(|| Error::InvalidArgument(format!("node {node} not in ledger")))?;
        if !entry.dp_enabled {
            return Err(Error::InvalidArgument(format!(
                "node {node} has no dp flag; it must not release noisy updates"
            )));
        }
        if release.noise_multiplier == 0.0 {
            entry.zero_noise_release = true;
        } else {
            entry.inv_z2_sum += 1.0 / (release.noise_multiplier * release.noise_multiplier);
        }
        entry.releases.push(release);
        Ok(())
    }

    /// ε spent by `node` at the given δ. ∞ means "no guarantee": either
    /// the node never applies DP, or it released with zero noise.
    pub fn epsilon(&self, node: NodeId, delta: f64, accountant: Accountant) -> f64 {
        let entry = match self.nodes.get(node) {
            Some(e) => e,
            None => return f64::INFINITY,
        };
        if !entry.dp_enabled {
            return f64::INFINITY;
        }
        if entry.releases.is_empty() {
            return 0.0;
        }
        if entry.zero_noise_release {
            return f64::INFINITY;
        }
        match accountant {
            Accountant::GaussianClosedForm => {
                entry.inv_z2_sum.sqrt() * (2.0 * (1.25 / delta).ln()).sqrt()
            }
            Accountant::BasicComposition => entry
                .releases
                .iter()
                .map(|r| single_release_epsilon(r.noise_multiplier, delta))
                .sum(),
        }
    }

    /// Convenience for reporting with a full config.
    pub fn epsilon_for(&self, node: NodeId, cfg: &DpConfig) -> f64 {
        self.epsilon(node, cfg.delta, cfg.accountant)
    }
}

/// The closed-form Gaussian bound only holds tightly for ε < 1; above
/// that callers should surface a warning alongside the reported value.
pub fn closed_form_is_loose(epsilon: f64) -> bool {
    epsilon >= 1.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::Layout;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn vector(values: Vec<f64>) -> ParamVector {
        let n = values.len();
        ParamVector::from_values(Layout::flat(n), values).expect("flat layout")
    }

    fn random_vector(dim: usize, seed: u64, scale: f64) -> ParamVector {
        let mut rng = seeded_rng(seed);
        vector((0..dim).map(|_| rng.random_range(-scale..scale)).collect())
    }

    #[test]
    fn clip_scales_a_three_four_vector() {
        let clipped = clip(&vector(vec![3.0, 4.0]), 1.0).unwrap();
        assert_relative_eq!(clipped.values()[0], 0.6, max_relative = 1e-12);
        assert_relative_eq!(clipped.values()[1], 0.8, max_relative = 1e-12);
    }

    #[test]
    fn clip_inside_ball_is_bit_exact() {
        let u = vector(vec![0.3, 0.4]);
        let clipped = clip(&u, 1.0).unwrap();
        assert_eq!(clipped.values(), u.values());
    }

    #[test]
    fn clip_rejects_bad_inputs() {
        assert!(clip(&vector(vec![1.0]), 0.0).is_err());
        assert!(matches!(
            clip(&vector(vec![f64::NAN]), 1.0),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn clip_invariants_over_random_vectors() {
        // norm bound, idempotence, direction preservation, identity inside
        // the ball; 1000 deterministic random vectors.
        let mut rng = seeded_rng(404);
        for trial in 0..1000u64 {
            let dim = rng.random_range(1..50usize);
            let scale = 10f64.powf(rng.random_range(-3.0..3.0));
            let u = random_vector(dim, 1000 + trial, scale);
            let c = 10f64.powf(rng.random_range(-2.0..2.0));
            let clipped = clip(&u, c).unwrap();
            let norm = u.l2_norm();
            assert!(clipped.l2_norm() <= c + 1e-9);
            if norm <= c {
                assert_eq!(clipped.values(), u.values());
            } else {
                // direction preserved: clipped = λ·u with λ = c/norm
                let lambda = c / norm;
                for (cv, uv) in clipped.values().iter().zip(u.values()) {
                    assert_relative_eq!(*cv, lambda * uv, max_relative = 1e-12, epsilon = 1e-300);
                }
                assert_relative_eq!(clipped.l2_norm(), c, max_relative = 1e-9);
            }
            let twice = clip(&clipped, c).unwrap();
            assert_eq!(twice.values(), clipped.values());
        }
    }

    #[test]
    fn compute_update_variants() {
        let initial = vector(vec![1.0, 2.0]);
        let trained = vector(vec![1.5, 1.0]);
        let diff = compute_update(&initial, &trained, ClipStrategy::DifferenceClip).unwrap();
        assert_eq!(diff.values(), &[0.5, -1.0]);
        let same = compute_update(&initial, &initial, ClipStrategy::DifferenceClip).unwrap();
        assert!(same.values().iter().all(|&v| v == 0.0));
        let zero = vector(vec![0.0, 0.0]);
        let from_zero = compute_update(&zero, &trained, ClipStrategy::DifferenceClip).unwrap();
        assert_eq!(from_zero.values(), trained.values());
        let passthrough = compute_update(&initial, &trained, ClipStrategy::ModelClip).unwrap();
        assert_eq!(passthrough.values(), trained.values());
    }

    #[test]
    fn zero_multiplier_noise_is_identity() {
        let u = random_vector(32, 5, 1.0);
        let out = add_noise(&u, 1.0, 0.0, 99).unwrap();
        assert_eq!(out.values(), u.values());
    }

    #[test]
    fn noise_is_reproducible_and_seed_sensitive() {
        let u = random_vector(64, 6, 1.0);
        let a = add_noise(&u, 1.0, 0.5, 7).unwrap();
        let b = add_noise(&u, 1.0, 0.5, 7).unwrap();
        assert_eq!(a.values(), b.values());
        let c = add_noise(&u, 1.0, 0.5, 8).unwrap();
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn noise_sample_sd_matches_sigma() {
        // σ = z·C = 0.5; the sample SD over 10^6 coordinates should land
        // within 0.002 (a 3-sigma band is ~0.0011).
        let zero = vector(vec![0.0; 1_000_000]);
        let noised = add_noise(&zero, 1.0, 0.5, 12345).unwrap();
        let n = noised.len() as f64;
        let mean: f64 = noised.values().iter().sum::<f64>() / n;
        let var: f64 = noised.values().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        assert!(
            (var.sqrt() - 0.5).abs() < 0.002,
            "sample sd {}",
            var.sqrt()
        );
    }

    #[test]
    fn privatize_orders_agree_without_noise() {
        let initial = random_vector(16, 21, 1.0);
        let trained = random_vector(16, 22, 1.0);
        let base = DpConfig {
            clip_norm: 0.7,
            noise_multiplier: 0.0,
            delta: 1e-5,
            clip_strategy: ClipStrategy::DifferenceClip,
            order: NoiseOrder::ClipThenNoise,
            accountant: Accountant::GaussianClosedForm,
        };
        let a = privatize(&initial, &trained, &base, 1).unwrap();
        let b = privatize(
            &initial,
            &trained,
            &DpConfig {
                order: NoiseOrder::NoiseThenClip,
                ..base.clone()
            },
            1,
        )
        .unwrap();
        assert_eq!(a.values(), b.values());
        let expected = clip(
            &compute_update(&initial, &trained, ClipStrategy::DifferenceClip).unwrap(),
            0.7,
        )
        .unwrap();
        assert_eq!(a.values(), expected.values());
    }

    #[test]
    fn noise_then_clip_bounds_the_norm() {
        let cfg = DpConfig {
            clip_norm: 1.0,
            noise_multiplier: 2.0,
            delta: 1e-5,
            clip_strategy: ClipStrategy::DifferenceClip,
            order: NoiseOrder::NoiseThenClip,
            accountant: Accountant::GaussianClosedForm,
        };
        for trial in 0..100 {
            let initial = random_vector(32, 300 + trial, 1.0);
            let trained = random_vector(32, 400 + trial, 1.0);
            let out = privatize(&initial, &trained, &cfg, trial).unwrap();
            assert!(out.l2_norm() <= cfg.clip_norm + 1e-9);
        }
    }

    #[test]
    fn ledger_epsilon_zero_before_releases() {
        let ledger = PrivacyLedger::new(&[true, false]);
        assert_eq!(ledger.epsilon(0, 1e-5, Accountant::GaussianClosedForm), 0.0);
        assert_eq!(
            ledger.epsilon(1, 1e-5, Accountant::GaussianClosedForm),
            f64::INFINITY
        );
    }

    #[test]
    fn single_release_closed_form_value() {
        // σ = z, Δ = C = 1: ε = √(2·ln(1.25/δ))/z; z = 1.870 lands at ≈ 2.59.
        let mut ledger = PrivacyLedger::new(&[true]);
        ledger
            .record_release(
                0,
                Release {
                    noise_multiplier: 1.870,
                    clip_norm: 1.0,
                    round_index: 0,
                },
            )
            .unwrap();
        let eps = ledger.epsilon(0, 1e-5, Accountant::GaussianClosedForm);
        let expected = (2.0 * (125_000f64).ln()).sqrt() / 1.870;
        assert_relative_eq!(eps, expected, max_relative = 1e-12);
        assert!((eps - 2.59).abs() < 0.005, "eps = {eps}");
        // both accountants agree on a single release
        assert_relative_eq!(
            eps,
            ledger.epsilon(0, 1e-5, Accountant::BasicComposition),
            max_relative = 1e-12
        );
    }

    #[test]
    fn doubling_z_halves_epsilon() {
        for accountant in [Accountant::GaussianClosedForm, Accountant::BasicComposition] {
            let mut a = PrivacyLedger::new(&[true]);
            a.record_release(0, Release { noise_multiplier: 0.5, clip_norm: 1.0, round_index: 0 })
                .unwrap();
            let mut b = PrivacyLedger::new(&[true]);
            b.record_release(0, Release { noise_multiplier: 1.0, clip_norm: 1.0, round_index: 0 })
                .unwrap();
            let ea = a.epsilon(0, 1e-5, accountant);
            let eb = b.epsilon(0, 1e-5, accountant);
            assert_relative_eq!(ea, 2.0 * eb, max_relative = 1e-12);
        }
    }

    #[test]
    fn epsilon_grows_monotonically_with_releases() {
        for accountant in [Accountant::GaussianClosedForm, Accountant::BasicComposition] {
            let mut ledger = PrivacyLedger::new(&[true]);
            let mut last = ledger.epsilon(0, 1e-5, accountant);
            for round in 0..10 {
                ledger
                    .record_release(
                        0,
                        Release {
                            noise_multiplier: 0.5,
                            clip_norm: 1.0,
                            round_index: round,
                        },
                    )
                    .unwrap();
                let eps = ledger.epsilon(0, 1e-5, accountant);
                assert!(eps >= last);
                last = eps;
            }
        }
    }

    #[test]
    fn zero_noise_release_reports_unbounded() {
        let mut ledger = PrivacyLedger::new(&[true]);
        ledger
            .record_release(
                0,
                Release {
                    noise_multiplier: 0.0,
                    clip_norm: 1.0,
                    round_index: 0,
                },
            )
            .unwrap();
        assert_eq!(
            ledger.epsilon(0, 1e-5, Accountant::GaussianClosedForm),
            f64::INFINITY
        );
    }

    #[test]
    fn non_dp_nodes_cannot_release() {
        let mut ledger = PrivacyLedger::new(&[false]);
        assert!(ledger
            .record_release(
                0,
                Release {
                    noise_multiplier: 0.5,
                    clip_norm: 1.0,
                    round_index: 0
                }
            )
            .is_err());
        assert!(ledger.releases(0).is_empty());
    }

    #[test]
    fn loose_bound_flag() {
        assert!(!closed_form_is_loose(0.5));
        assert!(closed_form_is_loose(1.0));
        assert!(closed_form_is_loose(f64::INFINITY));
    }
}
