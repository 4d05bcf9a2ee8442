//! Synthetic input generators.
//!
//! A generator produces the per-episode pair (feature vector, latent truth).
//! Episodes are i.i.d.: each is drawn from a fresh stream keyed by
//! `(generator seed, t)`, so the stream a policy sees never depends on its
//! past actions and counterfactual replay sees identical inputs.

use crate::backend::{LatentTruth, SiteTruth};
use crate::exec::ground_truth_output;
use crate::noise;
use crate::program::{FunctionRegistry, ProgramIR};
use crate::value::Value;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeneratorError {
    #[error("generator defines no scenarios")]
    NoScenarios,
    #[error("scenario {index} has nonpositive weight {weight}")]
    BadWeight { index: usize, weight: f64 },
    #[error("scenario {index} supplies {got} truth values for {expected} call sites")]
    TruthArity {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("scenario {index}, site {site}: {detail}")]
    TruthValue {
        index: usize,
        site: usize,
        detail: String,
    },
    #[error("text truth {truth:?} has no entry in wrong_text_answers")]
    MissingWrongAnswer { truth: String },
    #[error("feature_dim must be positive")]
    ZeroFeatureDim,
}

/// Declarative spec for a scenario-mixture generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub feature_dim: usize,
    /// Scale of the exponentially distributed per-episode difficulty.
    #[serde(default = "default_difficulty_scale")]
    pub difficulty_scale: f64,
    pub scenarios: Vec<ScenarioSpec>,
    /// Designated wrong answer per text truth value.
    #[serde(default)]
    pub wrong_text_answers: BTreeMap<String, String>,
}

fn default_difficulty_scale() -> f64 {
    1.0
}

/// One mixture component: a weight, one truth value per call site, and a
/// mean shift applied to the leading feature dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub weight: f64,
    pub truth: Vec<serde_json::Value>,
    #[serde(default)]
    pub feature_shift: Vec<f64>,
}

#[derive(Debug, Clone)]
struct CompiledScenario {
    truth: Vec<SiteTruth>,
    feature_shift: Vec<f64>,
}

/// Scenario-mixture generator compiled against a program.
#[derive(Debug, Clone)]
pub struct ScenarioGenerator {
    feature_dim: usize,
    difficulty_scale: f64,
    scenarios: Vec<CompiledScenario>,
    cumulative_weights: Vec<f64>,
    wrong_text_answers: BTreeMap<String, String>,
}

impl ScenarioGenerator {
    pub fn compile(
        spec: &GeneratorSpec,
        ir: &ProgramIR,
        functions: &FunctionRegistry,
    ) -> Result<Self, GeneratorError> {
        if spec.feature_dim == 0 {
            return Err(GeneratorError::ZeroFeatureDim);
        }
        if spec.scenarios.is_empty() {
            return Err(GeneratorError::NoScenarios);
        }
        let mut scenarios = Vec::with_capacity(spec.scenarios.len());
        let mut cumulative_weights = Vec::with_capacity(spec.scenarios.len());
        let mut total = 0.0;
        for (index, s) in spec.scenarios.iter().enumerate() {
            if !(s.weight > 0.0) {
                return Err(GeneratorError::BadWeight {
                    index,
                    weight: s.weight,
                });
            }
            if s.truth.len() != ir.site_count() {
                return Err(GeneratorError::TruthArity {
                    index,
                    expected: ir.site_count(),
                    got: s.truth.len(),
                });
            }
            let mut truth = Vec::with_capacity(s.truth.len());
            for (site_idx, (raw, site)) in s.truth.iter().zip(&ir.call_sites).enumerate() {
                let kind = functions
                    .by_id(&site.function_id)
                    .map(|f| f.return_kind)
                    .ok_or_else(|| GeneratorError::TruthValue {
                        index,
                        site: site_idx + 1,
                        detail: format!("unknown function {:?}", site.function_id),
                    })?;
                let value =
                    Value::from_json(raw, kind).map_err(|detail| GeneratorError::TruthValue {
                        index,
                        site: site_idx + 1,
                        detail,
                    })?;
                let wrong_text = match &value {
                    Value::Text(t) => Some(
                        spec.wrong_text_answers
                            .get(t)
                            .cloned()
                            .ok_or_else(|| GeneratorError::MissingWrongAnswer {
                                truth: t.clone(),
                            })?,
                    ),
                    _ => None,
                };
                truth.push(SiteTruth { value, wrong_text });
            }
            total += s.weight;
            cumulative_weights.push(total);
            scenarios.push(CompiledScenario {
                truth,
                feature_shift: s.feature_shift.clone(),
            });
        }
        Ok(Self {
            feature_dim: spec.feature_dim,
            difficulty_scale: spec.difficulty_scale,
            scenarios,
            cumulative_weights,
            wrong_text_answers: spec.wrong_text_answers.clone(),
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn wrong_text_answers(&self) -> &BTreeMap<String, String> {
        &self.wrong_text_answers
    }

    /// Draws episode t. Pure in `(gen_seed, t)`.
    pub fn sample(&self, gen_seed: u64, t: u64) -> (Vec<f64>, LatentTruth) {
        let mut rng = ChaCha12Rng::seed_from_u64(noise::episode_seed(gen_seed, t));
        let total = *self.cumulative_weights.last().expect("nonempty scenarios");
        let pick = rng.random_range(0.0..total);
        let idx = self
            .cumulative_weights
            .partition_point(|&w| w <= pick)
            .min(self.scenarios.len() - 1);
        let scenario = &self.scenarios[idx];

        let mut features = Vec::with_capacity(self.feature_dim);
        for d in 0..self.feature_dim {
            let noise: f64 = rng.sample(StandardNormal);
            let shift = scenario.feature_shift.get(d).copied().unwrap_or(0.0);
            features.push(noise + shift);
        }
        let difficulty = if self.difficulty_scale > 0.0 {
            let u: f64 = rng.random_range(0.0..1.0);
            -(1.0 - u).ln() * self.difficulty_scale
        } else {
            0.0
        };
        (
            features,
            LatentTruth {
                sites: scenario.truth.clone(),
                difficulty,
            },
        )
    }

    /// Ground-truth scenario outputs (used to validate monolithic views).
    fn scenario_truths(&self) -> impl Iterator<Item = &[SiteTruth]> {
        self.scenarios.iter().map(|s| s.truth.as_slice())
    }
}

/// Input source for an environment: either direct scenarios, or a
/// monolithic adaptation where one call answers the whole base task.
#[derive(Debug, Clone)]
pub enum GeneratorKind {
    Scenario(ScenarioGenerator),
    Monolithic {
        base: Box<ScenarioGenerator>,
        base_ir: Box<ProgramIR>,
        wrong_text_answers: BTreeMap<String, String>,
    },
}

impl GeneratorKind {
    pub fn feature_dim(&self) -> usize {
        match self {
            GeneratorKind::Scenario(g) => g.feature_dim(),
            GeneratorKind::Monolithic { base, .. } => base.feature_dim(),
        }
    }

    pub fn sample(&self, gen_seed: u64, t: u64) -> Result<(Vec<f64>, LatentTruth), GeneratorError> {
        match self {
            GeneratorKind::Scenario(g) => Ok(g.sample(gen_seed, t)),
            GeneratorKind::Monolithic {
                base,
                base_ir,
                wrong_text_answers,
            } => {
                let (features, base_truth) = base.sample(gen_seed, t);
                let input = Value::text(format!("input-{t}"));
                let y = ground_truth_output(base_ir, &input, &base_truth).map_err(|e| {
                    GeneratorError::TruthValue {
                        index: 0,
                        site: 1,
                        detail: format!("monolithic ground truth failed: {e}"),
                    }
                })?;
                let wrong_text = match &y {
                    Value::Text(s) => Some(
                        wrong_text_answers
                            .get(s)
                            .cloned()
                            .ok_or_else(|| GeneratorError::MissingWrongAnswer {
                                truth: s.clone(),
                            })?,
                    ),
                    _ => None,
                };
                Ok((
                    features,
                    LatentTruth {
                        sites: vec![SiteTruth {
                            value: y,
                            wrong_text,
                        }],
                        difficulty: base_truth.difficulty,
                    },
                ))
            }
        }
    }

    /// Checks that the monolithic adaptation can corrupt every possible
    /// base-task answer.
    pub fn validate_monolithic(&self) -> Result<(), GeneratorError> {
        if let GeneratorKind::Monolithic {
            base,
            base_ir,
            wrong_text_answers,
        } = self
        {
            for truth in base.scenario_truths() {
                let full = LatentTruth {
                    sites: truth.to_vec(),
                    difficulty: 0.0,
                };
                let y = ground_truth_output(base_ir, &Value::text("probe"), &full).map_err(
                    |e| GeneratorError::TruthValue {
                        index: 0,
                        site: 1,
                        detail: format!("monolithic ground truth failed: {e}"),
                    },
                )?;
                if let Value::Text(s) = &y {
                    if !wrong_text_answers.contains_key(s) {
                        return Err(GeneratorError::MissingWrongAnswer { truth: s.clone() });
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use crate::program::parse_program;

    fn compiled() -> (ScenarioGenerator, ProgramIR) {
        let reg = presets::default_function_registry();
        let ir = parse_program(
            concat!(
                "program p(frame):\n",
                "  a = find(frame, \"cat\")\n",
                "  if a:\n",
                "    return vqa(frame, \"q\")\n",
                "  return \"no\"\n",
            ),
            &reg,
        )
        .unwrap();
        let spec = GeneratorSpec {
            feature_dim: 4,
            difficulty_scale: 1.0,
            scenarios: vec![
                ScenarioSpec {
                    weight: 0.25,
                    truth: vec![serde_json::json!(true), serde_json::json!("yes")],
                    feature_shift: vec![2.0],
                },
                ScenarioSpec {
                    weight: 0.75,
                    truth: vec![serde_json::json!(false), serde_json::json!("no")],
                    feature_shift: vec![],
                },
            ],
            wrong_text_answers: [("yes", "no"), ("no", "yes")]
                .into_iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
        };
        let gen = ScenarioGenerator::compile(&spec, &ir, &reg).unwrap();
        (gen, ir)
    }

    #[test]
    fn sampling_is_pure_in_seed_and_t() {
        let (gen, _) = compiled();
        let (xa, ta) = gen.sample(9, 5);
        let (xb, tb) = gen.sample(9, 5);
        assert_eq!(xa, xb);
        assert_eq!(ta, tb);
        let (xc, _) = gen.sample(9, 6);
        assert_ne!(xa, xc);
    }

    #[test]
    fn scenario_weights_are_respected() {
        let (gen, _) = compiled();
        let n = 20_000;
        let positives = (0..n)
            .filter(|&t| {
                let (_, truth) = gen.sample(1, t);
                truth.sites[0].value == Value::Bool(true)
            })
            .count();
        let frac = positives as f64 / n as f64;
        assert!((frac - 0.25).abs() < 0.02, "frac {frac}");
    }

    #[test]
    fn feature_shift_moves_the_mean() {
        let (gen, _) = compiled();
        let mut pos_sum = 0.0;
        let mut pos_n = 0.0;
        let mut neg_sum = 0.0;
        let mut neg_n = 0.0;
        for t in 0..20_000 {
            let (x, truth) = gen.sample(2, t);
            if truth.sites[0].value == Value::Bool(true) {
                pos_sum += x[0];
                pos_n += 1.0;
            } else {
                neg_sum += x[0];
                neg_n += 1.0;
            }
        }
        assert!((pos_sum / pos_n - 2.0).abs() < 0.1);
        assert!((neg_sum / neg_n).abs() < 0.1);
    }

    #[test]
    fn missing_wrong_answer_is_rejected_at_compile() {
        let reg = presets::default_function_registry();
        let ir = parse_program("program p(x):\n  return vqa(x, \"q\")\n", &reg).unwrap();
        let spec = GeneratorSpec {
            feature_dim: 2,
            difficulty_scale: 1.0,
            scenarios: vec![ScenarioSpec {
                weight: 1.0,
                truth: vec![serde_json::json!("maybe")],
                feature_shift: vec![],
            }],
            wrong_text_answers: BTreeMap::new(),
        };
        let err = ScenarioGenerator::compile(&spec, &ir, &reg).unwrap_err();
        assert!(matches!(err, GeneratorError::MissingWrongAnswer { .. }));
    }

    #[test]
    fn truth_arity_must_match_sites() {
        let reg = presets::default_function_registry();
        let ir = parse_program("program p(x):\n  return vqa(x, \"q\")\n", &reg).unwrap();
        let spec = GeneratorSpec {
            feature_dim: 2,
            difficulty_scale: 1.0,
            scenarios: vec![ScenarioSpec {
                weight: 1.0,
                truth: vec![],
                feature_shift: vec![],
            }],
            wrong_text_answers: BTreeMap::new(),
        };
        let err = ScenarioGenerator::compile(&spec, &ir, &reg).unwrap_err();
        assert!(matches!(err, GeneratorError::TruthArity { .. }));
    }

    #[test]
    fn monolithic_view_answers_the_whole_task() {
        let (gen, ir) = compiled();
        let wrong: BTreeMap<String, String> = [("yes", "no"), ("no", "yes")]
            .into_iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        let mono = GeneratorKind::Monolithic {
            base: Box::new(gen.clone()),
            base_ir: Box::new(ir),
            wrong_text_answers: wrong,
        };
        mono.validate_monolithic().unwrap();
        for t in 0..100 {
            let (_, truth) = mono.sample(3, t).unwrap();
            assert_eq!(truth.sites.len(), 1);
            assert!(matches!(truth.sites[0].value, Value::Text(_)));
        }
    }
}
