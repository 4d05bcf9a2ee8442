//! Built-in function registry and reference environments.
//!
//! The guard-gated binary task is the crate's reference workload: a program
//! that runs two cheap presence checks and only escalates to an expensive
//! answering call when both fire. Positives are rare (1%), so a policy that
//! learns cheap guards plus gated answering cuts mean cost by an order of
//! magnitude against always-expensive execution.

use crate::harness::{EnvironmentSpec, GeneratorSpec, RoutingArm, ScenarioSpec};
use crate::program::{FunctionRegistry, GenericFunction};
use crate::value::ReturnKind;
use std::collections::BTreeMap;

/// Functions available to programs when no registry is configured:
/// `find` (presence check), `detect` (detection count), `vqa` (open answer),
/// `answer` (whole-input answer).
pub fn default_function_registry() -> FunctionRegistry {
    FunctionRegistry::with_functions([
        GenericFunction::new("find", 2, ReturnKind::Boolean),
        GenericFunction::new("detect", 2, ReturnKind::Detections),
        GenericFunction::new("vqa", 2, ReturnKind::Text),
        GenericFunction::new("answer", 1, ReturnKind::Text),
    ])
    .expect("builtin registry is consistent")
}

/// Source of the guard-gated reference program.
pub fn guard_gated_program() -> &'static str {
    concat!(
        "# Two cheap guards gate one expensive answering call.\n",
        "program cat_on_laptop(frame):\n",
        "  has_cat = find(frame, \"cat\")\n",
        "  has_laptop = find(frame, \"laptop\")\n",
        "  if has_cat and has_laptop:\n",
        "    return vqa(frame, \"is the cat sitting or laying on the laptop keyboard?\")\n",
        "  return \"no\"\n",
    )
}

fn guard_gated_spec(
    lambda: f64,
    seed: u64,
    horizon: u64,
    scenarios: Vec<ScenarioSpec>,
) -> EnvironmentSpec {
    let functions = vec![
        GenericFunction::new("find", 2, ReturnKind::Boolean),
        GenericFunction::new("vqa", 2, ReturnKind::Text),
    ];
    let backends = vec![
        crate::backend::BackendSpec::synthetic("find-tiny", "find", 0.01, 0.95),
        crate::backend::BackendSpec::synthetic("find-base", "find", 0.3, 0.99),
        crate::backend::BackendSpec::synthetic("vqa-small", "vqa", 0.08, 0.85),
        crate::backend::BackendSpec::synthetic("vqa-large", "vqa", 1.0, 0.99),
    ];
    let wrong_text_answers: BTreeMap<String, String> = [("yes", "no"), ("no", "yes")]
        .into_iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
    EnvironmentSpec {
        program: guard_gated_program().to_string(),
        functions,
        backends,
        generator: GeneratorSpec {
            feature_dim: 16,
            difficulty_scale: 1.0,
            scenarios,
            wrong_text_answers,
        },
        lambda,
        horizon,
        seed,
        error_correlation: Default::default(),
        positive_output: Some(serde_json::json!("yes")),
    }
}

fn scenario(weight: f64, cat: bool, laptop: bool, answer: &str) -> ScenarioSpec {
    let shift = |present: bool| if present { 1.5 } else { 0.0 };
    ScenarioSpec {
        weight,
        truth: vec![
            serde_json::json!(cat),
            serde_json::json!(laptop),
            serde_json::json!(answer),
        ],
        feature_shift: vec![shift(cat), shift(laptop)],
    }
}

/// The reference environment: guard-gated binary task at a 1% positive rate
/// (roughly 1:100 positive-to-negative), 16 features of which the first two
/// carry the guard signal. Three call sites with two backends each, so the
/// static-configuration space is fully enumerable (8 configs).
pub fn guard_gated_binary(lambda: f64, seed: u64, horizon: u64) -> EnvironmentSpec {
    guard_gated_spec(
        lambda,
        seed,
        horizon,
        vec![
            scenario(0.01, true, true, "yes"),
            scenario(0.02, true, true, "no"),
            scenario(0.06, true, false, "no"),
            scenario(0.06, false, true, "no"),
            scenario(0.85, false, false, "no"),
        ],
    )
}

/// Dense variant: same program and backends, but the guard fires on roughly
/// half of the inputs, so every site sees frequent reward signal. Used where
/// convergence on all three sites matters more than class imbalance.
pub fn guard_gated_binary_dense(lambda: f64, seed: u64, horizon: u64) -> EnvironmentSpec {
    guard_gated_spec(
        lambda,
        seed,
        horizon,
        vec![
            scenario(0.35, true, true, "yes"),
            scenario(0.15, true, true, "no"),
            scenario(0.15, true, false, "no"),
            scenario(0.15, false, true, "no"),
            scenario(0.20, false, false, "no"),
        ],
    )
}

/// Monolithic arms for the routing baseline on the guard-gated tasks: a
/// small and a large end-to-end model.
pub fn guard_gated_routing_arms() -> Vec<RoutingArm> {
    vec![
        RoutingArm {
            id: "mono-small".to_string(),
            cost: 0.1,
            base_accuracy: 0.9,
            difficulty_slope: 0.0,
        },
        RoutingArm {
            id: "mono-large".to_string(),
            cost: 1.0,
            base_accuracy: 0.99,
            difficulty_slope: 0.0,
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_environments_build() {
        let env = guard_gated_binary(0.3, 42, 1000).build().unwrap();
        assert_eq!(env.ir.site_count(), 3);
        assert_eq!(env.registry.arm_count("find"), 2);
        assert_eq!(env.registry.arm_count("vqa"), 2);
        assert_eq!(env.feature_dim(), 16);
        guard_gated_binary_dense(0.3, 42, 1000).build().unwrap();
    }

    #[test]
    fn positive_rate_is_one_percent() {
        use crate::harness::EpisodeWorld;
        let env = guard_gated_binary(0.3, 7, 1000).build().unwrap();
        let n = 50_000;
        let positives = (1..=n)
            .filter(|&t| {
                let (_, truth) = env.sample_input(t).unwrap();
                truth.sites[2].value == crate::value::Value::text("yes")
            })
            .count();
        let rate = positives as f64 / n as f64;
        assert!((rate - 0.01).abs() < 0.003, "rate {rate}");
    }
}
