//! Backend registry, cost model, and synthetic stochastic behavior.
//!
//! Each generic function has a set of backends trading accuracy against a
//! fixed invocation cost. Synthetic backends stand in for real models: on
//! each invocation they return either the latent ground-truth value for the
//! call site or a typed corruption of it. The correct/incorrect coin is a
//! pure function of `(seed, episode, site, invocation, backend)` — common
//! random numbers — so counterfactual configurations replay on identical
//! randomness.

use crate::noise::NoiseKey;
use crate::program::{CallSite, FunctionRegistry};
use crate::remote::RemoteEndpoint;
use crate::value::Value;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

/// Noise stream discriminators for the keyed draws.
const STREAM_CORRECTNESS: u64 = 0;
const STREAM_CORRUPTION: u64 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum BackendError {
    #[error("duplicate backend id {0:?}")]
    DuplicateBackend(String),
    #[error("backend {backend:?} implements unknown function {function:?}")]
    UnknownFunction { backend: String, function: String },
    #[error("backend {backend:?} has negative cost {cost}")]
    NegativeCost { backend: String, cost: f64 },
    #[error("cannot normalize: all backend costs are zero")]
    AllZeroCosts,
    #[error("backend {backend:?} implements {implements:?}, not {requested:?}")]
    FunctionMismatch {
        backend: String,
        implements: String,
        requested: String,
    },
    #[error("latent truth is missing a value for call site {0}")]
    MissingTruth(usize),
    #[error("latent truth for site {site} has no designated wrong answer for {truth:?}")]
    MissingWrongAnswer { site: usize, truth: String },
    #[error("unknown backend id {0:?}")]
    UnknownBackend(String),
}

/// Synthetic accuracy profile.
///
/// Per-invocation correctness probability is
/// `sigmoid(logit(base_accuracy) - difficulty_slope * difficulty)`, which is
/// nonincreasing in difficulty and equals `base_accuracy` at difficulty 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticBehavior {
    pub base_accuracy: f64,
    #[serde(default)]
    pub difficulty_slope: f64,
}

impl SyntheticBehavior {
    pub fn accuracy(&self, difficulty: f64) -> f64 {
        if self.base_accuracy >= 1.0 {
            return 1.0;
        }
        if self.base_accuracy <= 0.0 {
            return 0.0;
        }
        let logit = (self.base_accuracy / (1.0 - self.base_accuracy)).ln();
        let z = logit - self.difficulty_slope * difficulty;
        1.0 / (1.0 + (-z).exp())
    }
}

/// How a backend produces values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Behavior {
    Synthetic(SyntheticBehavior),
    Remote(RemoteEndpoint),
}

/// One concrete implementation of a generic function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSpec {
    pub id: String,
    pub function_id: String,
    /// Fixed invocation cost in normalized units (input-independent).
    pub cost: f64,
    pub behavior: Behavior,
}

impl BackendSpec {
    pub fn synthetic(id: &str, function_id: &str, cost: f64, base_accuracy: f64) -> Self {
        Self {
            id: id.to_string(),
            function_id: function_id.to_string(),
            cost,
            behavior: Behavior::Synthetic(SyntheticBehavior {
                base_accuracy,
                difficulty_slope: 0.0,
            }),
        }
    }

    pub fn with_slope(mut self, slope: f64) -> Self {
        if let Behavior::Synthetic(b) = &mut self.behavior {
            b.difficulty_slope = slope;
        }
        self
    }
}

/// Ground truth for one call site of one input.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteTruth {
    pub value: Value,
    /// Designated wrong answer for text values; other kinds corrupt
    /// mechanically (booleans flip, counts go off by one).
    pub wrong_text: Option<String>,
}

impl SiteTruth {
    pub fn new(value: Value) -> Self {
        Self {
            value,
            wrong_text: None,
        }
    }

    pub fn with_wrong_text(value: Value, wrong: impl Into<String>) -> Self {
        Self {
            value,
            wrong_text: Some(wrong.into()),
        }
    }
}

/// Latent generative state for one input: per-site ground truth plus a
/// difficulty scalar shared by all sites.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTruth {
    pub sites: Vec<SiteTruth>,
    pub difficulty: f64,
}

impl LatentTruth {
    pub fn site(&self, index: usize) -> Result<&SiteTruth, BackendError> {
        self.sites.get(index).ok_or(BackendError::MissingTruth(index))
    }
}

/// Error-correlation mode across backends at one site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorCorrelation {
    /// Independent correctness draw per (site, backend).
    #[default]
    Independent,
    /// One draw per site shared by all backends: on a hard draw every
    /// backend whose accuracy is below the draw fails together.
    SharedDifficulty,
}

/// Registry of functions and their backends. Immutable after setup.
#[derive(Debug, Clone, Default)]
pub struct BackendRegistry {
    functions: FunctionRegistry,
    backends: Vec<BackendSpec>,
    by_id: HashMap<String, usize>,
    per_function: HashMap<String, Vec<usize>>,
    pub error_correlation: ErrorCorrelation,
}

impl BackendRegistry {
    pub fn new(functions: FunctionRegistry) -> Self {
        Self {
            functions,
            ..Self::default()
        }
    }

    pub fn functions(&self) -> &FunctionRegistry {
        &self.functions
    }

    /// Registers a backend under its function. Returns the backend id.
    pub fn register_backend(&mut self, spec: BackendSpec) -> Result<String, BackendError> {
        if self.by_id.contains_key(&spec.id) {
            return Err(BackendError::DuplicateBackend(spec.id));
        }
        if self.functions.by_id(&spec.function_id).is_none() {
            return Err(BackendError::UnknownFunction {
                backend: spec.id,
                function: spec.function_id,
            });
        }
        if spec.cost < 0.0 || !spec.cost.is_finite() {
            return Err(BackendError::NegativeCost {
                backend: spec.id,
                cost: spec.cost,
            });
        }
        let idx = self.backends.len();
        self.by_id.insert(spec.id.clone(), idx);
        self.per_function
            .entry(spec.function_id.clone())
            .or_default()
            .push(idx);
        let id = spec.id.clone();
        self.backends.push(spec);
        Ok(id)
    }

    pub fn backend(&self, id: &str) -> Result<&BackendSpec, BackendError> {
        self.by_id
            .get(id)
            .map(|&i| &self.backends[i])
            .ok_or_else(|| BackendError::UnknownBackend(id.to_string()))
    }

    pub fn backends(&self) -> &[BackendSpec] {
        &self.backends
    }

    /// Backends implementing a function, in registration order. This is the
    /// arm ordering used by subpolicies.
    pub fn backends_for(&self, function_id: &str) -> Vec<&BackendSpec> {
        self.per_function
            .get(function_id)
            .map(|ids| ids.iter().map(|&i| &self.backends[i]).collect())
            .unwrap_or_default()
    }

    /// Number of backends registered for a function (n_k).
    pub fn arm_count(&self, function_id: &str) -> usize {
        self.per_function
            .get(function_id)
            .map_or(0, |ids| ids.len())
    }

    /// Rescales all costs so the most expensive backend costs exactly 1.0.
    /// Pairwise cost ratios are preserved.
    pub fn normalized_cost(mut self) -> Result<Self, BackendError> {
        let max = self
            .backends
            .iter()
            .map(|b| b.cost)
            .fold(0.0_f64, f64::max);
        if max <= 0.0 {
            return Err(BackendError::AllZeroCosts);
        }
        for b in &mut self.backends {
            b.cost /= max;
        }
        Ok(self)
    }
}

/// Invokes a synthetic backend on one call site.
///
/// With probability `accuracy(difficulty)` returns the site's ground-truth
/// value, otherwise its corruption. Pure in `(key, backend)`: identical keys
/// yield identical outputs across process runs.
pub fn invoke_synthetic(
    backend: &BackendSpec,
    site: &CallSite,
    truth: &LatentTruth,
    key: NoiseKey<'_>,
    correlation: ErrorCorrelation,
) -> Result<Value, BackendError> {
    if backend.function_id != site.function_id {
        return Err(BackendError::FunctionMismatch {
            backend: backend.id.clone(),
            implements: backend.function_id.clone(),
            requested: site.function_id.clone(),
        });
    }
    let behavior = match &backend.behavior {
        Behavior::Synthetic(b) => b,
        Behavior::Remote(_) => {
            // Dispatch for remote backends lives in `remote`; reaching this
            // path is a caller bug surfaced as a mismatch.
            return Err(BackendError::FunctionMismatch {
                backend: backend.id.clone(),
                implements: "remote".to_string(),
                requested: "synthetic".to_string(),
            });
        }
    };
    let site_truth = truth.site(site.index - 1)?;
    let coin = match correlation {
        ErrorCorrelation::Independent => key.unit(STREAM_CORRECTNESS),
        ErrorCorrelation::SharedDifficulty => {
            // Drop the backend from the key so all backends at this site
            // share one draw and fail together on hard inputs.
            NoiseKey {
                backend_id: "",
                ..key
            }
            .unit(STREAM_CORRECTNESS)
        }
    };
    if coin < behavior.accuracy(truth.difficulty) {
        Ok(site_truth.value.clone())
    } else {
        corrupt(site_truth, site.index, key)
    }
}

/// Produces a wrong-but-typed value for a site's ground truth.
fn corrupt(truth: &SiteTruth, site_index: usize, key: NoiseKey<'_>) -> Result<Value, BackendError> {
    match &truth.value {
        Value::Bool(b) => Ok(Value::Bool(!b)),
        Value::Text(s) => match &truth.wrong_text {
            Some(w) => Ok(Value::Text(w.clone())),
            None => Err(BackendError::MissingWrongAnswer {
                site: site_index,
                truth: s.clone(),
            }),
        },
        Value::Number(n) => Ok(Value::Number(off_by_one(*n, key))),
        Value::Detections(c) => {
            if *c == 0 {
                Ok(Value::Detections(1))
            } else if off_by_one(f64::from(*c), key) > f64::from(*c) {
                Ok(Value::Detections(c + 1))
            } else {
                Ok(Value::Detections(c - 1))
            }
        }
    }
}

fn off_by_one(n: f64, key: NoiseKey<'_>) -> f64 {
    if key.unit(STREAM_CORRUPTION) < 0.5 {
        n - 1.0
    } else {
        n + 1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise;
    use crate::program::GenericFunction;
    use crate::value::ReturnKind;

    fn registry() -> BackendRegistry {
        let functions = FunctionRegistry::with_functions([
            GenericFunction::new("find", 2, ReturnKind::Boolean),
            GenericFunction::new("vqa", 2, ReturnKind::Text),
        ])
        .unwrap();
        BackendRegistry::new(functions)
    }

    fn site(index: usize, function: &str) -> CallSite {
        CallSite {
            index,
            function_id: function.to_string(),
            input_var: "x".to_string(),
            static_args: vec![Value::text("cat")],
        }
    }

    fn key(episode: u64, backend: &str) -> NoiseKey<'_> {
        NoiseKey {
            episode_seed: noise::episode_seed(99, episode),
            site: 0,
            invocation: 0,
            backend_id: backend,
        }
    }

    #[test]
    fn register_counts_arms_per_function() {
        let mut reg = registry();
        reg.register_backend(BackendSpec::synthetic("f1", "find", 0.01, 0.9))
            .unwrap();
        reg.register_backend(BackendSpec::synthetic("f2", "find", 0.2, 0.99))
            .unwrap();
        assert_eq!(reg.arm_count("find"), 2);
        assert_eq!(reg.arm_count("vqa"), 0);
    }

    #[test]
    fn register_rejects_unknown_function_and_duplicates() {
        let mut reg = registry();
        let err = reg
            .register_backend(BackendSpec::synthetic("b", "segment", 0.1, 0.9))
            .unwrap_err();
        assert!(matches!(err, BackendError::UnknownFunction { .. }));
        reg.register_backend(BackendSpec::synthetic("b", "find", 0.1, 0.9))
            .unwrap();
        let err = reg
            .register_backend(BackendSpec::synthetic("b", "find", 0.2, 0.9))
            .unwrap_err();
        assert_eq!(err, BackendError::DuplicateBackend("b".to_string()));
    }

    #[test]
    fn cheap_and_expensive_backends_list_under_their_function() {
        let mut reg = registry();
        reg.register_backend(BackendSpec::synthetic("vqa-s", "vqa", 0.01, 0.8))
            .unwrap();
        reg.register_backend(BackendSpec::synthetic("vqa-l", "vqa", 1.0, 0.99))
            .unwrap();
        let arms = reg.backends_for("vqa");
        assert_eq!(arms.len(), 2);
        assert_eq!(arms[0].id, "vqa-s");
        assert_eq!(arms[1].id, "vqa-l");
    }

    #[test]
    fn cost_normalization_preserves_ratios() {
        let mut reg = registry();
        reg.register_backend(BackendSpec::synthetic("a", "find", 0.5, 0.9))
            .unwrap();
        reg.register_backend(BackendSpec::synthetic("b", "find", 2.0, 0.9))
            .unwrap();
        let reg = reg.normalized_cost().unwrap();
        assert_eq!(reg.backend("a").unwrap().cost, 0.25);
        assert_eq!(reg.backend("b").unwrap().cost, 1.0);
    }

    #[test]
    fn cost_normalization_single_and_identity_cases() {
        let mut reg = registry();
        reg.register_backend(BackendSpec::synthetic("a", "find", 3.0, 0.9))
            .unwrap();
        let reg = reg.normalized_cost().unwrap();
        assert_eq!(reg.backend("a").unwrap().cost, 1.0);

        let mut reg2 = registry();
        reg2.register_backend(BackendSpec::synthetic("a", "find", 1.0, 0.9))
            .unwrap();
        reg2.register_backend(BackendSpec::synthetic("b", "find", 1.0, 0.9))
            .unwrap();
        let reg2 = reg2.normalized_cost().unwrap();
        assert_eq!(reg2.backend("a").unwrap().cost, 1.0);
        assert_eq!(reg2.backend("b").unwrap().cost, 1.0);
    }

    #[test]
    fn cost_normalization_rejects_all_zero() {
        let mut reg = registry();
        reg.register_backend(BackendSpec::synthetic("a", "find", 0.0, 0.9))
            .unwrap();
        assert_eq!(reg.normalized_cost().unwrap_err(), BackendError::AllZeroCosts);
    }

    #[test]
    fn perfect_backend_always_returns_truth() {
        let backend = BackendSpec::synthetic("b", "find", 0.1, 1.0);
        let truth = LatentTruth {
            sites: vec![SiteTruth::new(Value::Bool(true))],
            difficulty: 5.0,
        };
        for t in 0..100 {
            let v = invoke_synthetic(
                &backend,
                &site(1, "find"),
                &truth,
                key(t, "b"),
                ErrorCorrelation::Independent,
            )
            .unwrap();
            assert_eq!(v, Value::Bool(true));
        }
    }

    #[test]
    fn broken_backend_always_corrupts() {
        let backend = BackendSpec::synthetic("b", "vqa", 0.1, 0.0);
        let truth = LatentTruth {
            sites: vec![SiteTruth::with_wrong_text(Value::text("yes"), "no")],
            difficulty: 0.0,
        };
        for t in 0..100 {
            let v = invoke_synthetic(
                &backend,
                &site(1, "vqa"),
                &truth,
                key(t, "b"),
                ErrorCorrelation::Independent,
            )
            .unwrap();
            assert_eq!(v, Value::text("no"));
        }
    }

    #[test]
    fn empirical_accuracy_matches_base_rate() {
        // Monte Carlo frequency oracle: 10,000 keyed draws at base accuracy
        // 0.8 and slope 0 must land within +/- 0.02.
        let backend = BackendSpec::synthetic("b", "find", 0.1, 0.8);
        let truth = LatentTruth {
            sites: vec![SiteTruth::new(Value::Bool(true))],
            difficulty: 0.0,
        };
        let n = 10_000;
        let correct = (0..n)
            .filter(|&t| {
                invoke_synthetic(
                    &backend,
                    &site(1, "find"),
                    &truth,
                    key(t, "b"),
                    ErrorCorrelation::Independent,
                )
                .unwrap()
                    == Value::Bool(true)
            })
            .count();
        let rate = correct as f64 / n as f64;
        assert!((rate - 0.8).abs() <= 0.02, "rate {rate}");
    }

    #[test]
    fn accuracy_is_nonincreasing_in_difficulty() {
        let behavior = SyntheticBehavior {
            base_accuracy: 0.9,
            difficulty_slope: 1.5,
        };
        let mut last = 1.0;
        for i in 0..20 {
            let acc = behavior.accuracy(i as f64 * 0.5);
            assert!(acc <= last + 1e-12);
            assert!(acc > 0.0 && acc < 1.0);
            last = acc;
        }
        assert!((behavior.accuracy(0.0) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn empirical_difficulty_monotonicity() {
        let backend = BackendSpec::synthetic("b", "find", 0.1, 0.85).with_slope(1.0);
        let rate = |difficulty: f64| {
            let truth = LatentTruth {
                sites: vec![SiteTruth::new(Value::Bool(true))],
                difficulty,
            };
            let n = 10_000;
            (0..n)
                .filter(|&t| {
                    invoke_synthetic(
                        &backend,
                        &site(1, "find"),
                        &truth,
                        key(t, "b"),
                        ErrorCorrelation::Independent,
                    )
                    .unwrap()
                        == Value::Bool(true)
                })
                .count() as f64
                / n as f64
        };
        let easy = rate(0.2);
        let hard = rate(1.5);
        assert!(easy >= hard - 0.02, "easy {easy} hard {hard}");
    }

    #[test]
    fn identical_keys_give_identical_outputs() {
        let backend = BackendSpec::synthetic("b", "find", 0.1, 0.5);
        let truth = LatentTruth {
            sites: vec![SiteTruth::new(Value::Bool(true))],
            difficulty: 0.3,
        };
        for t in 0..200 {
            let a = invoke_synthetic(
                &backend,
                &site(1, "find"),
                &truth,
                key(t, "b"),
                ErrorCorrelation::Independent,
            )
            .unwrap();
            let b = invoke_synthetic(
                &backend,
                &site(1, "find"),
                &truth,
                key(t, "b"),
                ErrorCorrelation::Independent,
            )
            .unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn shared_difficulty_correlates_errors() {
        // Under shared correlation, a weaker backend fails on a superset of
        // the inputs where the stronger one fails.
        let strong = BackendSpec::synthetic("strong", "find", 0.1, 0.9);
        let weak = BackendSpec::synthetic("weak", "find", 0.1, 0.6);
        let truth = LatentTruth {
            sites: vec![SiteTruth::new(Value::Bool(true))],
            difficulty: 0.0,
        };
        for t in 0..2000 {
            let s = invoke_synthetic(
                &strong,
                &site(1, "find"),
                &truth,
                key(t, "strong"),
                ErrorCorrelation::SharedDifficulty,
            )
            .unwrap();
            let w = invoke_synthetic(
                &weak,
                &site(1, "find"),
                &truth,
                key(t, "weak"),
                ErrorCorrelation::SharedDifficulty,
            )
            .unwrap();
            if s != Value::Bool(true) {
                assert_ne!(w, Value::Bool(true), "weak succeeded where strong failed");
            }
        }
    }

    #[test]
    fn corruption_is_typed() {
        let k = key(1, "b");
        let flipped = corrupt(&SiteTruth::new(Value::Bool(true)), 1, k).unwrap();
        assert_eq!(flipped, Value::Bool(false));
        let count = corrupt(&SiteTruth::new(Value::Detections(0)), 1, k).unwrap();
        assert_eq!(count, Value::Detections(1));
        let off = corrupt(&SiteTruth::new(Value::Detections(4)), 1, k).unwrap();
        assert!(off == Value::Detections(3) || off == Value::Detections(5));
        let err = corrupt(&SiteTruth::new(Value::text("yes")), 1, k).unwrap_err();
        assert!(matches!(err, BackendError::MissingWrongAnswer { .. }));
    }

    #[test]
    fn missing_truth_site_is_an_error() {
        let backend = BackendSpec::synthetic("b", "vqa", 0.1, 0.9);
        let truth = LatentTruth {
            sites: vec![],
            difficulty: 0.0,
        };
        let err = invoke_synthetic(
            &backend,
            &site(1, "vqa"),
            &truth,
            key(0, "b"),
            ErrorCorrelation::Independent,
        )
        .unwrap_err();
        assert_eq!(err, BackendError::MissingTruth(0));
    }
}
