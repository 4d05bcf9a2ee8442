//! Policy interface and the baseline policies.

use super::{Environment, HarnessError};
use crate::exec::ConfigurationVector;
use crate::noise;
use crate::policy::{PolicyHyperparams, StructuredPolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// What a policy returns for one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub config: ConfigurationVector,
    /// Chosen arm index per site, when the policy tracks arms.
    pub arm_indices: Option<Vec<usize>>,
}

/// Feedback delivered after the episode's ground truth is revealed.
#[derive(Debug, Clone, Copy)]
pub struct Feedback<'a> {
    pub t: u64,
    pub features: &'a [f64],
    pub arm_indices: Option<&'a [usize]>,
    pub sub_rewards: &'a [f64],
    pub reward: f64,
    pub loss: f64,
}

/// A decision rule mapping episode features to a configuration vector.
pub trait Policy {
    fn name(&self) -> &str;
    fn select(&mut self, x: &[f64], t: u64) -> Result<Selection, HarnessError>;
    fn observe(&mut self, feedback: &Feedback<'_>) -> Result<(), HarnessError> {
        let _ = feedback;
        Ok(())
    }
}

impl Policy for StructuredPolicy {
    fn name(&self) -> &str {
        "structured"
    }

    fn select(&mut self, x: &[f64], _t: u64) -> Result<Selection, HarnessError> {
        let outcome = StructuredPolicy::select(self, x)?;
        Ok(Selection {
            config: outcome.config,
            arm_indices: Some(outcome.arm_indices),
        })
    }

    fn observe(&mut self, feedback: &Feedback<'_>) -> Result<(), HarnessError> {
        let arms = feedback
            .arm_indices
            .expect("structured policy always reports arm indices");
        StructuredPolicy::observe(self, feedback.features, arms, feedback.sub_rewards)?;
        Ok(())
    }
}

/// Fixed, pre-determined configuration; no learning.
#[derive(Debug, Clone)]
pub struct StaticPolicy {
    label: String,
    config: ConfigurationVector,
}

impl StaticPolicy {
    pub fn fixed(label: impl Into<String>, config: ConfigurationVector) -> Self {
        Self {
            label: label.into(),
            config,
        }
    }

    /// Per-site minimum-cost backends.
    pub fn cheapest(env: &Environment) -> Result<Self, HarnessError> {
        Ok(Self::fixed("static-cheapest", extreme_config(env, |a, b| a < b)?))
    }

    /// Per-site maximum-cost backends.
    pub fn most_expensive(env: &Environment) -> Result<Self, HarnessError> {
        Ok(Self::fixed(
            "static-most-expensive",
            extreme_config(env, |a, b| a > b)?,
        ))
    }

    pub fn config(&self) -> &ConfigurationVector {
        &self.config
    }
}

fn extreme_config(
    env: &Environment,
    better: impl Fn(f64, f64) -> bool,
) -> Result<ConfigurationVector, HarnessError> {
    let mut choices = Vec::with_capacity(env.ir.site_count());
    for site in &env.ir.call_sites {
        let arms = env.registry.backends_for(&site.function_id);
        let mut best = arms
            .first()
            .ok_or(HarnessError::SiteWithoutBackends { site: site.index })?;
        for arm in &arms[1..] {
            if better(arm.cost, best.cost) {
                best = arm;
            }
        }
        choices.push(best.id.clone());
    }
    Ok(ConfigurationVector::new(choices))
}

impl Policy for StaticPolicy {
    fn name(&self) -> &str {
        &self.label
    }

    fn select(&mut self, _x: &[f64], _t: u64) -> Result<Selection, HarnessError> {
        Ok(Selection {
            config: self.config.clone(),
            arm_indices: None,
        })
    }
}

/// Per-episode Bernoulli mixture of two policies: with probability q the
/// high policy's configuration is used, otherwise the low policy's. Sweeping
/// q in [0, 1] traces the linear interpolation between the endpoints.
pub struct ParetoRandomPolicy {
    label: String,
    low: Box<dyn Policy>,
    high: Box<dyn Policy>,
    q: f64,
    rng: ChaCha12Rng,
    last_was_high: bool,
}

impl ParetoRandomPolicy {
    pub fn new(low: Box<dyn Policy>, high: Box<dyn Policy>, q: f64, seed: u64) -> Self {
        Self {
            label: format!("pareto-random-q{q}"),
            low,
            high,
            q,
            rng: ChaCha12Rng::seed_from_u64(noise::derive(seed, "pareto-random")),
            last_was_high: false,
        }
    }
}

impl Policy for ParetoRandomPolicy {
    fn name(&self) -> &str {
        &self.label
    }

    fn select(&mut self, x: &[f64], t: u64) -> Result<Selection, HarnessError> {
        let u: f64 = self.rng.random_range(0.0..1.0);
        self.last_was_high = u < self.q;
        if self.last_was_high {
            self.high.select(x, t)
        } else {
            self.low.select(x, t)
        }
    }

    fn observe(&mut self, feedback: &Feedback<'_>) -> Result<(), HarnessError> {
        if self.last_was_high {
            self.high.observe(feedback)
        } else {
            self.low.observe(feedback)
        }
    }
}

/// Monolithic routing arm: one backend that answers the whole task.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoutingArm {
    pub id: String,
    pub cost: f64,
    pub base_accuracy: f64,
    #[serde(default)]
    pub difficulty_slope: f64,
}

/// Builds the routing baseline: a single-call view of the task (each arm
/// answers it end to end) plus a one-site policy running the same Thompson
/// Sampling and REINFORCE machinery.
pub fn routing_policy(
    env: &Environment,
    arms: &[RoutingArm],
    hp: PolicyHyperparams,
    seed: u64,
) -> Result<(Environment, StructuredPolicy), HarnessError> {
    let mono = env.monolithic_view(arms)?;
    let policy = StructuredPolicy::for_program(
        &mono.ir,
        &mono.registry,
        mono.feature_dim(),
        hp,
        noise::derive(seed, "routing"),
    )?;
    Ok((mono, policy))
}
