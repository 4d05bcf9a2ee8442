//! Per-call-site subpolicies: reward prediction, gradient-based Thompson
//! Sampling, uncertainty accumulation, and policy-gradient training.
//!
//! One subpolicy owns one call site. Its network emits a score per arm; the
//! scores serve two roles at once:
//!
//! - as reward predictions r', they are the means of the Thompson Sampling
//!   draws `r_hat ~ N(r', (nu * sigma)^2)` used for arm selection, with
//!   `sigma = sqrt(sum_l g_l^2 / U_l)` derived from the prediction gradients
//!   and the accumulated squared-gradient vector U;
//! - as logits, `softmax(scores)` defines the probabilities whose
//!   log-gradient drives the REINFORCE update weighted by sub-rewards.
//!
//! Training is periodic: every `train_interval` episodes each subpolicy
//! draws up to S samples from its replay buffer and ascends the summed
//! log-likelihood-times-sub-reward gradient with step `eta0 / sqrt(t)`.

mod net;
mod replay;

pub use net::{forward, init_params, per_arm_gradients, GradMatrix, NetError, NetShape};
pub use replay::ReplayBuffer;

use crate::backend::BackendRegistry;
use crate::exec::{ConfigurationVector, ExecutionTrace};
use crate::noise;
use crate::program::ProgramIR;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("length mismatch: {context}: {a} vs {b}")]
    LengthMismatch {
        context: &'static str,
        a: usize,
        b: usize,
    },
    #[error("uncertainty entry {index} is not positive ({value})")]
    NonpositiveUncertainty { index: usize, value: f64 },
    #[error("cannot select from an empty arm list")]
    NoArms,
    #[error("call site {site} has no registered backends")]
    SiteWithoutBackends { site: usize },
    #[error("checkpoint is malformed: {0}")]
    Checkpoint(String),
}

/// Hyperparameters shared by all subpolicies of a program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyHyperparams {
    /// Exploration scale for Thompson Sampling.
    pub nu: f64,
    /// Base learning rate; the schedule is `eta_t = eta0 / sqrt(t)`.
    pub eta0: f64,
    /// Episodes between training updates.
    pub train_interval: u64,
    /// Samples (S) drawn from the replay buffer per update.
    pub samples_per_update: usize,
    pub replay_capacity: usize,
    /// Subtract a per-site running-mean baseline from sub-rewards.
    pub baseline_enabled: bool,
    /// Hidden-layer width of the reward network (0 for linear).
    pub hidden_dim: usize,
}

impl Default for PolicyHyperparams {
    fn default() -> Self {
        Self {
            nu: 1.0,
            eta0: 1.0,
            train_interval: 16,
            samples_per_update: 16,
            replay_capacity: 4096,
            baseline_enabled: false,
            hidden_dim: 32,
        }
    }
}

/// One observed decision for one call site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubRewardSample {
    pub features: Vec<f64>,
    /// Index of the arm that was chosen.
    pub arm: usize,
    /// Sub-reward observed for this site after the episode.
    pub reward: f64,
    pub episode: u64,
}

/// Learnable state of one subpolicy.
#[derive(Debug, Clone, PartialEq)]
pub struct SubPolicyState {
    /// Backend ids selectable at this site, in registry order.
    pub arms: Vec<String>,
    /// Fixed cost of each arm, used for tie-breaking.
    pub arm_costs: Vec<f64>,
    pub shape: NetShape,
    /// Flat parameter vector theta.
    pub theta: Vec<f64>,
    /// Accumulated squared-gradient uncertainties U, one entry per parameter.
    pub uncertainty: Vec<f64>,
    /// Selections made so far; also drives the round-robin warm start.
    pub episodes_seen: u64,
}

impl SubPolicyState {
    pub fn new(
        arms: Vec<String>,
        arm_costs: Vec<f64>,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let shape = NetShape {
            input: input_dim,
            hidden: hidden_dim,
            arms: arms.len(),
        };
        let theta = init_params(&shape, rng);
        let uncertainty = vec![1.0; shape.param_count()];
        Self {
            arms,
            arm_costs,
            shape,
            theta,
            uncertainty,
            episodes_seen: 0,
        }
    }
}

/// Reward predictions r' for every arm: the network forward pass.
pub fn predict_rewards(state: &SubPolicyState, x: &[f64]) -> Result<Vec<f64>, PolicyError> {
    Ok(forward(&state.shape, &state.theta, x)?)
}

/// `sigma = sqrt(sum_l g_l^2 / U_l)` — the gradient-based uncertainty of one
/// arm's reward prediction.
pub fn uncertainty_sigma(g_row: &[f64], u: &[f64]) -> Result<f64, PolicyError> {
    if g_row.len() != u.len() {
        return Err(PolicyError::LengthMismatch {
            context: "uncertainty_sigma",
            a: g_row.len(),
            b: u.len(),
        });
    }
    let mut total = 0.0;
    for (index, (&g, &ul)) in g_row.iter().zip(u).enumerate() {
        if ul <= 0.0 {
            return Err(PolicyError::NonpositiveUncertainty { index, value: ul });
        }
        total += g * g / ul;
    }
    Ok(total.sqrt())
}

/// `U_l += g_l^2` for the selected arm's gradient row.
pub fn update_uncertainty(u: &mut [f64], g_selected: &[f64]) -> Result<(), PolicyError> {
    if u.len() != g_selected.len() {
        return Err(PolicyError::LengthMismatch {
            context: "update_uncertainty",
            a: u.len(),
            b: g_selected.len(),
        });
    }
    for (ul, &g) in u.iter_mut().zip(g_selected) {
        *ul += g * g;
    }
    Ok(())
}

/// Thompson Sampling over arms: draws `r_hat_j ~ N(score_j, (nu*sigma_j)^2)`
/// independently per arm and returns the argmax. Exact ties break toward
/// the lower-cost arm, then the lower index; with `nu == 0` this reduces to
/// a deterministic greedy argmax over the scores.
pub fn thompson_select(
    scores: &[f64],
    sigmas: &[f64],
    costs: &[f64],
    nu: f64,
    rng: &mut impl Rng,
) -> Result<usize, PolicyError> {
    if scores.is_empty() {
        return Err(PolicyError::NoArms);
    }
    if scores.len() != sigmas.len() || scores.len() != costs.len() {
        return Err(PolicyError::LengthMismatch {
            context: "thompson_select",
            a: scores.len(),
            b: sigmas.len().min(costs.len()),
        });
    }
    let mut best = 0usize;
    let mut best_sample = f64::NEG_INFINITY;
    for (j, (&score, &sigma)) in scores.iter().zip(sigmas).enumerate() {
        let std = nu * sigma;
        let sample = if std > 0.0 {
            Normal::new(score, std)
                .expect("finite mean and positive std")
                .sample(rng)
        } else {
            score
        };
        let better = sample > best_sample
            || (sample == best_sample && costs[j] < costs[best]);
        if better {
            best = j;
            best_sample = sample;
        }
    }
    Ok(best)
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `grad_theta log softmax(scores)[chosen]`, assembled from the per-arm
/// score gradients: `g_chosen - sum_j pi_j g_j`.
pub fn log_policy_gradient(
    state: &SubPolicyState,
    x: &[f64],
    chosen: usize,
) -> Result<Vec<f64>, PolicyError> {
    let scores = predict_rewards(state, x)?;
    let grads = per_arm_gradients(&state.shape, &state.theta, x)?;
    let probs = softmax(&scores);
    let mut out = grads.row(chosen).to_vec();
    for (j, &p) in probs.iter().enumerate() {
        for (o, &g) in out.iter_mut().zip(grads.row(j)) {
            *o -= p * g;
        }
    }
    Ok(out)
}

/// Per-site decomposition of the global reward:
/// `r_i = -lambda * incurred_site_cost_i - loss / N`.
///
/// The site cost is the cost actually incurred (zero when control flow
/// skipped the site), which makes `sum_i r_i == -loss - lambda * total_cost`
/// hold exactly.
pub fn sub_rewards(trace: &ExecutionTrace, loss_value: f64, lambda: f64, n: usize) -> Vec<f64> {
    let share = loss_value / n as f64;
    trace
        .per_site_cost
        .iter()
        .map(|&c| -lambda * c - share)
        .collect()
}

/// One REINFORCE ascent step from a sampled batch.
///
/// The gradient estimate is the sum over samples of
/// `grad log pi(arm | x) * (r - baseline)`; parameters move by `eta` times
/// the estimate so that the expected sub-reward increases. An empty batch is
/// a no-op.
pub fn reinforce_update(
    state: &mut SubPolicyState,
    batch: &[SubRewardSample],
    eta: f64,
    baseline: Option<f64>,
) -> Result<(), PolicyError> {
    if batch.is_empty() {
        return Ok(());
    }
    let mut step = vec![0.0; state.theta.len()];
    for sample in batch {
        let glog = log_policy_gradient(state, &sample.features, sample.arm)?;
        let advantage = sample.reward - baseline.unwrap_or(0.0);
        for (s, g) in step.iter_mut().zip(&glog) {
            *s += g * advantage;
        }
    }
    for (theta, s) in state.theta.iter_mut().zip(&step) {
        *theta += eta * s;
    }
    Ok(())
}

/// Outcome of assembling one configuration vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOutcome {
    pub config: ConfigurationVector,
    /// Chosen arm index per site.
    pub arm_indices: Vec<usize>,
    /// Arms evaluated while selecting (sum of n_k across sites — linear in
    /// the number of arms, never the product).
    pub arm_evaluations: usize,
}

/// Runs the per-site selection loop: predict, compute sigmas, Thompson
/// sample, update U with the selected arm's gradient. The first `n_k`
/// selections at each site are a forced round-robin over its arms so every
/// arm is visited once before sampling takes over.
pub fn select_configuration(
    sites: &mut [SubPolicyState],
    x: &[f64],
    nu: f64,
    rng: &mut impl Rng,
) -> Result<SelectionOutcome, PolicyError> {
    let mut backend_ids = Vec::with_capacity(sites.len());
    let mut arm_indices = Vec::with_capacity(sites.len());
    let mut arm_evaluations = 0usize;

    for state in sites.iter_mut() {
        let n_arms = state.arms.len();
        if n_arms == 0 {
            return Err(PolicyError::NoArms);
        }
        let scores = predict_rewards(state, x)?;
        let grads = per_arm_gradients(&state.shape, &state.theta, x)?;
        let mut sigmas = Vec::with_capacity(n_arms);
        for j in 0..n_arms {
            sigmas.push(uncertainty_sigma(grads.row(j), &state.uncertainty)?);
        }
        arm_evaluations += n_arms;

        let chosen = if (state.episodes_seen as usize) < n_arms {
            // Warm start: visit every arm once.
            state.episodes_seen as usize
        } else {
            thompson_select(&scores, &sigmas, &state.arm_costs, nu, rng)?
        };
        update_uncertainty(&mut state.uncertainty, grads.row(chosen))?;
        state.episodes_seen += 1;

        arm_indices.push(chosen);
        backend_ids.push(state.arms[chosen].clone());
    }

    Ok(SelectionOutcome {
        config: ConfigurationVector::new(backend_ids),
        arm_indices,
        arm_evaluations,
    })
}

#[derive(Debug, Clone, Default)]
struct RunningMean {
    mean: f64,
    count: u64,
}

impl RunningMean {
    fn update(&mut self, value: f64) {
        self.count += 1;
        self.mean += (value - self.mean) / self.count as f64;
    }
}

/// The full learned policy: one subpolicy per call site plus replay buffers
/// and the training schedule.
#[derive(Debug, Clone)]
pub struct StructuredPolicy {
    pub hp: PolicyHyperparams,
    sites: Vec<SubPolicyState>,
    replays: Vec<ReplayBuffer>,
    baselines: Vec<RunningMean>,
    rng: ChaCha12Rng,
    episodes: u64,
    /// Instrumentation: total arms evaluated across all selections.
    pub arm_evaluations: u64,
}

impl StructuredPolicy {
    /// Builds one subpolicy per call site of `ir`, with arms taken from the
    /// registry in registration order.
    pub fn for_program(
        ir: &ProgramIR,
        registry: &BackendRegistry,
        feature_dim: usize,
        hp: PolicyHyperparams,
        seed: u64,
    ) -> Result<Self, PolicyError> {
        let mut rng = ChaCha12Rng::seed_from_u64(noise::derive(seed, "policy"));
        let mut sites = Vec::with_capacity(ir.site_count());
        for site in &ir.call_sites {
            let backends = registry.backends_for(&site.function_id);
            if backends.is_empty() {
                return Err(PolicyError::SiteWithoutBackends { site: site.index });
            }
            let arms = backends.iter().map(|b| b.id.clone()).collect();
            let costs = backends.iter().map(|b| b.cost).collect();
            sites.push(SubPolicyState::new(
                arms,
                costs,
                feature_dim,
                hp.hidden_dim,
                &mut rng,
            ));
        }
        let replays = sites
            .iter()
            .map(|_| ReplayBuffer::new(hp.replay_capacity))
            .collect();
        let baselines = sites.iter().map(|_| RunningMean::default()).collect();
        Ok(Self {
            hp,
            sites,
            replays,
            baselines,
            rng,
            episodes: 0,
            arm_evaluations: 0,
        })
    }

    pub fn sites(&self) -> &[SubPolicyState] {
        &self.sites
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    /// Selects a configuration for the episode's features.
    pub fn select(&mut self, x: &[f64]) -> Result<SelectionOutcome, PolicyError> {
        let outcome = select_configuration(&mut self.sites, x, self.hp.nu, &mut self.rng)?;
        self.arm_evaluations += outcome.arm_evaluations as u64;
        Ok(outcome)
    }

    /// Records the episode's sub-rewards and trains on schedule.
    pub fn observe(
        &mut self,
        x: &[f64],
        arm_indices: &[usize],
        site_rewards: &[f64],
    ) -> Result<(), PolicyError> {
        self.episodes += 1;
        for (i, (&arm, &reward)) in arm_indices.iter().zip(site_rewards).enumerate() {
            self.replays[i].push(SubRewardSample {
                features: x.to_vec(),
                arm,
                reward,
                episode: self.episodes,
            });
            self.baselines[i].update(reward);
        }
        if self.episodes % self.hp.train_interval == 0 {
            self.train()?;
        }
        Ok(())
    }

    fn train(&mut self) -> Result<(), PolicyError> {
        let eta = self.hp.eta0 / (self.episodes as f64).sqrt();
        for (i, state) in self.sites.iter_mut().enumerate() {
            let replay = &self.replays[i];
            if replay.is_empty() {
                continue;
            }
            let amount = self.hp.samples_per_update.min(replay.len());
            let picks = rand::seq::index::sample(&mut self.rng, replay.len(), amount);
            let batch: Vec<SubRewardSample> =
                picks.iter().map(|idx| replay.get(idx).clone()).collect();
            let baseline = self
                .hp
                .baseline_enabled
                .then(|| self.baselines[i].mean);
            reinforce_update(state, &batch, eta, baseline)?;
        }
        Ok(())
    }

    // --- checkpointing ---------------------------------------------------

    /// Serializes the policy state. The replay buffer and RNG state are not
    /// part of a checkpoint; loading with the same seed restores
    /// bit-identical subsequent behavior.
    pub fn to_checkpoint(&self) -> String {
        let mut root = serde_json::Map::new();
        for (i, state) in self.sites.iter().enumerate() {
            let entry = serde_json::json!({
                "arms": state.arms,
                "theta": state.theta,
                "uncertainty": state.uncertainty,
                "hyperparams": CheckpointHyperparams {
                    hp: self.hp.clone(),
                    feature_dim: state.shape.input,
                },
                "episodes": state.episodes_seen,
            });
            root.insert((i + 1).to_string(), entry);
        }
        serde_json::to_string_pretty(&serde_json::Value::Object(root))
            .expect("checkpoint serialization cannot fail")
    }

    /// Restores a policy from a checkpoint against the same program and
    /// registry it was trained with.
    pub fn from_checkpoint(
        json: &str,
        ir: &ProgramIR,
        registry: &BackendRegistry,
        seed: u64,
    ) -> Result<Self, PolicyError> {
        let root: serde_json::Map<String, serde_json::Value> = serde_json::from_str(json)
            .map_err(|e| PolicyError::Checkpoint(e.to_string()))?;
        if root.len() != ir.site_count() {
            return Err(PolicyError::Checkpoint(format!(
                "checkpoint has {} sites, program has {}",
                root.len(),
                ir.site_count()
            )));
        }
        let mut hp: Option<PolicyHyperparams> = None;
        let mut feature_dim = 0usize;
        let mut sites = Vec::with_capacity(ir.site_count());
        let mut max_episodes = 0u64;
        for (i, site) in ir.call_sites.iter().enumerate() {
            let entry = root
                .get(&(i + 1).to_string())
                .ok_or_else(|| PolicyError::Checkpoint(format!("missing site {}", i + 1)))?;
            let parsed: CheckpointSite = serde_json::from_value(entry.clone())
                .map_err(|e| PolicyError::Checkpoint(format!("site {}: {e}", i + 1)))?;
            let backends = registry.backends_for(&site.function_id);
            let registry_arms: Vec<String> = backends.iter().map(|b| b.id.clone()).collect();
            if parsed.arms != registry_arms {
                return Err(PolicyError::Checkpoint(format!(
                    "site {} arms {:?} do not match registry arms {:?}",
                    i + 1,
                    parsed.arms,
                    registry_arms
                )));
            }
            let costs = backends.iter().map(|b| b.cost).collect();
            feature_dim = parsed.hyperparams.feature_dim;
            let shape = NetShape {
                input: parsed.hyperparams.feature_dim,
                hidden: parsed.hyperparams.hp.hidden_dim,
                arms: parsed.arms.len(),
            };
            if parsed.theta.len() != shape.param_count()
                || parsed.uncertainty.len() != shape.param_count()
            {
                return Err(PolicyError::Checkpoint(format!(
                    "site {} parameter vectors have the wrong length",
                    i + 1
                )));
            }
            max_episodes = max_episodes.max(parsed.episodes);
            hp = Some(parsed.hyperparams.hp);
            sites.push(SubPolicyState {
                arms: parsed.arms,
                arm_costs: costs,
                shape,
                theta: parsed.theta,
                uncertainty: parsed.uncertainty,
                episodes_seen: parsed.episodes,
            });
        }
        let hp = hp.ok_or_else(|| PolicyError::Checkpoint("empty checkpoint".into()))?;
        let replays = sites
            .iter()
            .map(|_| ReplayBuffer::new(hp.replay_capacity))
            .collect();
        let baselines = sites.iter().map(|_| RunningMean::default()).collect();
        let _ = feature_dim;
        Ok(Self {
            hp,
            sites,
            replays,
            baselines,
            rng: ChaCha12Rng::seed_from_u64(noise::derive(seed, "policy")),
            episodes: max_episodes,
            arm_evaluations: 0,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointHyperparams {
    #[serde(flatten)]
    hp: PolicyHyperparams,
    feature_dim: usize,
}

#[derive(Deserialize)]
struct CheckpointSite {
    arms: Vec<String>,
    theta: Vec<f64>,
    uncertainty: Vec<f64>,
    hyperparams: CheckpointHyperparams,
    episodes: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn two_arm_linear(theta: Vec<f64>) -> SubPolicyState {
        let shape = NetShape {
            input: 2,
            hidden: 0,
            arms: 2,
        };
        assert_eq!(theta.len(), shape.param_count());
        SubPolicyState {
            arms: vec!["a".into(), "b".into()],
            arm_costs: vec![0.2, 0.1],
            shape,
            theta,
            uncertainty: vec![1.0; 6],
            episodes_seen: 0,
        }
    }

    #[test]
    fn predict_zero_weights() {
        let state = two_arm_linear(vec![0.0; 6]);
        assert_eq!(
            predict_rewards(&state, &[1.0, -2.0]).unwrap(),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn predict_linear_identity() {
        // W rows [[1,0],[0,1]], zero biases.
        let state = two_arm_linear(vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(
            predict_rewards(&state, &[2.0, 3.0]).unwrap(),
            vec![2.0, 3.0]
        );
    }

    #[test]
    fn sigma_arithmetic() {
        // g = [2, 0], U = [4, 1]: sigma = sqrt(4/4) = 1.
        assert_eq!(uncertainty_sigma(&[2.0, 0.0], &[4.0, 1.0]).unwrap(), 1.0);
        assert_eq!(uncertainty_sigma(&[0.0, 0.0], &[4.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn sigma_is_monotone_in_u() {
        let g = [0.7, -1.3, 0.2];
        let u1 = [1.0, 2.0, 0.5];
        let u2 = [2.0, 2.0, 1.5];
        let s1 = uncertainty_sigma(&g, &u1).unwrap();
        let s2 = uncertainty_sigma(&g, &u2).unwrap();
        assert!(s2 < s1);
        // Limit case: enormous U drives sigma toward zero.
        let s3 = uncertainty_sigma(&g, &[1e12, 1e12, 1e12]).unwrap();
        assert!(s3 < 1e-5);
    }

    #[test]
    fn sigma_rejects_nonpositive_u() {
        let err = uncertainty_sigma(&[1.0], &[0.0]).unwrap_err();
        assert!(matches!(err, PolicyError::NonpositiveUncertainty { .. }));
    }

    #[test]
    fn update_uncertainty_examples() {
        let mut u = vec![1.0, 1.0];
        update_uncertainty(&mut u, &[0.5, 2.0]).unwrap();
        assert_eq!(u, vec![1.25, 5.0]);
        let before = u.clone();
        update_uncertainty(&mut u, &[0.0, 0.0]).unwrap();
        assert_eq!(u, before);
        // Repeated identical updates grow U linearly.
        let mut u = vec![1.0];
        for k in 1..=5 {
            update_uncertainty(&mut u, &[2.0]).unwrap();
            assert_eq!(u[0], 1.0 + 4.0 * k as f64);
        }
    }

    #[test]
    fn greedy_at_nu_zero() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let pick = thompson_select(&[0.3, 0.5], &[1.0, 1.0], &[0.1, 0.1], 0.0, &mut rng).unwrap();
        assert_eq!(pick, 1);
    }

    #[test]
    fn ties_break_toward_cheaper_arm() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let pick = thompson_select(&[0.4, 0.4], &[1.0, 1.0], &[0.2, 0.1], 0.0, &mut rng).unwrap();
        assert_eq!(pick, 1);
        let pick = thompson_select(&[0.4, 0.4], &[1.0, 1.0], &[0.1, 0.2], 0.0, &mut rng).unwrap();
        assert_eq!(pick, 0);
    }

    #[test]
    fn empty_arm_list_is_an_error() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        assert_eq!(
            thompson_select(&[], &[], &[], 1.0, &mut rng).unwrap_err(),
            PolicyError::NoArms
        );
    }

    #[test]
    fn symmetric_arms_split_evenly() {
        // Monte Carlo symmetry oracle: nu=1, equal scores and sigmas.
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let n = 10_000;
        let firsts = (0..n)
            .filter(|_| {
                thompson_select(&[0.0, 0.0], &[1.0, 1.0], &[0.1, 0.1], 1.0, &mut rng).unwrap() == 0
            })
            .count();
        let frac = firsts as f64 / n as f64;
        assert!((frac - 0.5).abs() <= 0.02, "fraction {frac}");
    }

    #[test]
    fn selection_is_invariant_to_score_shifts() {
        // Adding a constant to every score shifts every Gaussian equally, so
        // the argmax distribution is unchanged; check via paired draws from
        // identical RNG states.
        let sigmas = [0.7, 1.3, 0.4];
        let costs = [0.3, 0.2, 0.1];
        let scores = [0.1, -0.2, 0.05];
        let shifted: Vec<f64> = scores.iter().map(|s| s + 5.0).collect();
        for seed in 0..200 {
            let mut rng_a = ChaCha12Rng::seed_from_u64(seed);
            let mut rng_b = ChaCha12Rng::seed_from_u64(seed);
            let a = thompson_select(&scores, &sigmas, &costs, 1.0, &mut rng_a).unwrap();
            let b = thompson_select(&shifted, &sigmas, &costs, 1.0, &mut rng_b).unwrap();
            assert_eq!(a, b);
        }
        // Softmax shares the shift invariance.
        let p = softmax(&scores);
        let q = softmax(&shifted);
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_normalizes() {
        let p = softmax(&[1.0, -2.0, 0.5, 3.0]);
        let total: f64 = p.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn log_policy_gradient_closed_form() {
        // Two-arm linear policy with zero scores: d log pi / d score is
        // [1-0.5, -0.5] = [0.5, -0.5], routed through bias gradients.
        let state = two_arm_linear(vec![0.0; 6]);
        let g = log_policy_gradient(&state, &[1.0, 0.0], 0).unwrap();
        // Bias entries are the score-space gradient.
        assert!((g[4] - 0.5).abs() < 1e-12, "{g:?}");
        assert!((g[5] + 0.5).abs() < 1e-12, "{g:?}");
        // Weight entries carry x through: arm-0 row gets 0.5 * x.
        assert!((g[0] - 0.5).abs() < 1e-12);
        assert_eq!(g[1], 0.0);
        assert!((g[2] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn log_policy_gradient_matches_finite_differences() {
        let shape = NetShape {
            input: 4,
            hidden: 5,
            arms: 3,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        for _ in 0..10 {
            let theta = init_params(&shape, &mut rng);
            let mut state = SubPolicyState {
                arms: vec!["a".into(), "b".into(), "c".into()],
                arm_costs: vec![0.1, 0.2, 0.3],
                shape,
                theta,
                uncertainty: vec![1.0; shape.param_count()],
                episodes_seen: 0,
            };
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let chosen = 1;
            let analytic = log_policy_gradient(&state, &x, chosen).unwrap();
            let h = 1e-5;
            for l in 0..state.theta.len() {
                let orig = state.theta[l];
                state.theta[l] = orig + h;
                let up = softmax(&predict_rewards(&state, &x).unwrap())[chosen].ln();
                state.theta[l] = orig - h;
                let down = softmax(&predict_rewards(&state, &x).unwrap())[chosen].ln();
                state.theta[l] = orig;
                let fd = (up - down) / (2.0 * h);
                let rel = (analytic[l] - fd).abs() / f64::max(analytic[l].abs() + fd.abs(), 1e-6);
                assert!(rel <= 1e-4, "param {l}: {} vs {fd}", analytic[l]);
            }
        }
    }

    #[test]
    fn sub_reward_decomposition_identity() {
        use crate::exec::ExecutionTrace;
        use crate::value::Value;
        let trace = ExecutionTrace {
            output: Value::text("no"),
            per_site_invocations: vec![1, 1],
            per_site_cost: vec![0.02, 0.02],
            incurred_cost: 0.04,
            fallback: None,
        };
        let r = sub_rewards(&trace, 1.0, 0.5, 2);
        assert_eq!(r, vec![-0.51, -0.51]);
        let total: f64 = r.iter().sum();
        assert!((total - (-1.0 - 0.5 * 0.04)).abs() < 1e-15);

        // Skipped site carries only the loss share.
        let trace = ExecutionTrace {
            output: Value::text("no"),
            per_site_invocations: vec![1, 0],
            per_site_cost: vec![0.02, 0.0],
            incurred_cost: 0.02,
            fallback: None,
        };
        let r = sub_rewards(&trace, 1.0, 0.5, 2);
        assert_eq!(r[1], -0.5);

        // Zero loss and zero cost: all sub-rewards zero.
        let trace = ExecutionTrace {
            output: Value::text("yes"),
            per_site_invocations: vec![0, 0],
            per_site_cost: vec![0.0, 0.0],
            incurred_cost: 0.0,
            fallback: None,
        };
        assert_eq!(sub_rewards(&trace, 0.0, 0.7, 2), vec![0.0, 0.0]);
    }

    #[test]
    fn reinforce_moves_toward_rewarded_arm() {
        let mut state = two_arm_linear(vec![0.0; 6]);
        let sample = SubRewardSample {
            features: vec![1.0, 0.0],
            arm: 0,
            reward: 1.0,
            episode: 1,
        };
        reinforce_update(&mut state, &[sample], 0.1, None).unwrap();
        // Arm-0 weights move toward +x, arm-1 away.
        assert!(state.theta[0] > 0.0);
        assert!(state.theta[2] < 0.0);
        let scores = predict_rewards(&state, &[1.0, 0.0]).unwrap();
        assert!(scores[0] > scores[1]);
    }

    #[test]
    fn zero_reward_batch_changes_nothing() {
        let mut state = two_arm_linear(vec![0.3, -0.2, 0.1, 0.4, 0.0, 0.0]);
        let before = state.theta.clone();
        let batch: Vec<SubRewardSample> = (0..4)
            .map(|i| SubRewardSample {
                features: vec![1.0, i as f64],
                arm: (i % 2) as usize,
                reward: 0.0,
                episode: i as u64,
            })
            .collect();
        reinforce_update(&mut state, &batch, 0.5, None).unwrap();
        assert_eq!(state.theta, before);
        reinforce_update(&mut state, &[], 0.5, None).unwrap();
        assert_eq!(state.theta, before);
    }

    /// Tabular bandit convergence oracle: a 2-arm stationary bandit with
    /// sub-rewards fixed at (1, 0). Selection runs the full gradient-based
    /// Thompson Sampling loop; training runs every episode so that 2,000
    /// episodes are 2,000 updates.
    #[test]
    fn tabular_bandit_converges_to_rewarded_arm() {
        let shape = NetShape {
            input: 1,
            hidden: 0,
            arms: 2,
        };
        let mut state = SubPolicyState {
            arms: vec!["good".into(), "bad".into()],
            arm_costs: vec![0.1, 0.1],
            shape,
            theta: vec![0.0; shape.param_count()],
            uncertainty: vec![1.0; shape.param_count()],
            episodes_seen: 0,
        };
        let mut replay = ReplayBuffer::new(4096);
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let x = [1.0];
        for t in 1..=2000u64 {
            let outcome = select_configuration(std::slice::from_mut(&mut state), &x, 1.0, &mut rng)
                .unwrap();
            let arm = outcome.arm_indices[0];
            let reward = if arm == 0 { 1.0 } else { 0.0 };
            replay.push(SubRewardSample {
                features: x.to_vec(),
                arm,
                reward,
                episode: t,
            });
            let amount = 16.min(replay.len());
            let picks = rand::seq::index::sample(&mut rng, replay.len(), amount);
            let batch: Vec<SubRewardSample> =
                picks.iter().map(|i| replay.get(i).clone()).collect();
            let eta = 1.0 / (t as f64).sqrt();
            reinforce_update(&mut state, &batch, eta, None).unwrap();
        }
        let probs = softmax(&predict_rewards(&state, &x).unwrap());
        assert!(probs[0] > 0.95, "pi(arm 1) = {}", probs[0]);
    }

    #[test]
    fn select_configuration_shape_and_counts() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut sites: Vec<SubPolicyState> = (0..3)
            .map(|_| {
                SubPolicyState::new(
                    vec!["a".into(), "b".into()],
                    vec![0.1, 0.2],
                    4,
                    0,
                    &mut rng,
                )
            })
            .collect();
        let outcome = select_configuration(&mut sites, &[0.1, 0.2, 0.3, 0.4], 1.0, &mut rng)
            .unwrap();
        assert_eq!(outcome.config.choices.len(), 3);
        assert_eq!(outcome.arm_indices.len(), 3);
        // Linear in arms: 2 + 2 + 2, not 2^3.
        assert_eq!(outcome.arm_evaluations, 6);
    }

    #[test]
    fn nu_zero_selection_equals_greedy_argmax() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let mut sites: Vec<SubPolicyState> = (0..2)
            .map(|_| {
                let mut s = SubPolicyState::new(
                    vec!["a".into(), "b".into()],
                    vec![0.1, 0.2],
                    2,
                    0,
                    &mut rng,
                );
                // Skip the warm start to expose pure greedy behavior.
                s.episodes_seen = 2;
                s
            })
            .collect();
        let x = [0.8, -0.3];
        let expected: Vec<usize> = sites
            .iter()
            .map(|s| {
                let scores = predict_rewards(s, &x).unwrap();
                if scores[1] > scores[0] {
                    1
                } else {
                    0
                }
            })
            .collect();
        let outcome = select_configuration(&mut sites, &x, 0.0, &mut rng).unwrap();
        assert_eq!(outcome.arm_indices, expected);
    }

    #[test]
    fn warm_start_visits_every_arm_once() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let mut sites = vec![SubPolicyState::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![0.1, 0.2, 0.3],
            2,
            0,
            &mut rng,
        )];
        let mut seen = Vec::new();
        for _ in 0..3 {
            let outcome = select_configuration(&mut sites, &[0.0, 0.0], 1.0, &mut rng).unwrap();
            seen.push(outcome.arm_indices[0]);
        }
        assert_eq!(seen, vec![0, 1, 2]);
    }

    #[test]
    fn uncertainty_never_decreases_during_selection() {
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let mut sites = vec![SubPolicyState::new(
            vec!["a".into(), "b".into()],
            vec![0.1, 0.2],
            3,
            4,
            &mut rng,
        )];
        let mut last = sites[0].uncertainty.clone();
        for t in 0..50 {
            let x = [t as f64 * 0.1, -0.2, 0.5];
            select_configuration(&mut sites, &x, 1.0, &mut rng).unwrap();
            for (new, old) in sites[0].uncertainty.iter().zip(&last) {
                assert!(new >= old);
            }
            last = sites[0].uncertainty.clone();
        }
    }
}
