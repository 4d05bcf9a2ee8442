//! Streaming environments and the online episode loop.
//!
//! Inputs arrive sequentially; for each one the policy commits to a
//! configuration vector *before* the ground truth is revealed, the program
//! executes with executed-only cost accounting, and the global reward
//! `R = -loss - lambda * cost` is decomposed into per-site sub-rewards that
//! feed the subpolicies. A regret ledger evaluates counterfactual static
//! configurations on the same common random numbers.

mod baselines;
mod generator;
mod pareto;
mod regret;

pub use baselines::{
    routing_policy, Feedback, ParetoRandomPolicy, Policy, RoutingArm, Selection, StaticPolicy,
};
pub use generator::{GeneratorError, GeneratorKind, GeneratorSpec, ScenarioGenerator, ScenarioSpec};
pub use pareto::{pareto_front, pareto_points};
pub use regret::{
    RegretError, RegretLedger, RegretPoint, RegretSummary, DEFAULT_UNIVERSE_CAP,
    DEFAULT_UNIVERSE_SAMPLE,
};

use crate::backend::{BackendError, BackendRegistry, BackendSpec, ErrorCorrelation, LatentTruth};
use crate::exec::{self, ConfigurationVector, ExecError, ExecutionTrace};
use crate::noise;
use crate::policy::PolicyError;
use crate::program::{
    parse_program, validate_program, FunctionRegistry, GenericFunction, ParseError, ProgramIR,
};
use crate::value::{ReturnKind, Value};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("program failed validation: {0}")]
    Invalid(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Regret(#[from] RegretError),
    #[error("lambda must be positive, got {0}")]
    BadLambda(f64),
    #[error("call site {site} has no registered backends")]
    SiteWithoutBackends { site: usize },
    #[error("episode sink failed: {0}")]
    Sink(String),
}

/// Declarative environment description (the JSON-facing form).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSpec {
    /// Program source text.
    pub program: String,
    pub functions: Vec<GenericFunction>,
    pub backends: Vec<BackendSpec>,
    pub generator: GeneratorSpec,
    /// Cost/accuracy trade-off weight (> 0).
    pub lambda: f64,
    pub horizon: u64,
    pub seed: u64,
    #[serde(default)]
    pub error_correlation: ErrorCorrelation,
    /// Output value counting as "positive" for binary-task metrics.
    #[serde(default)]
    pub positive_output: Option<serde_json::Value>,
}

impl EnvironmentSpec {
    /// Parses, validates, and wires the runtime environment. Backend costs
    /// are normalized so the most expensive backend costs 1.0.
    pub fn build(&self) -> Result<Environment, HarnessError> {
        if !(self.lambda > 0.0) {
            return Err(HarnessError::BadLambda(self.lambda));
        }
        let mut functions = FunctionRegistry::new();
        for f in &self.functions {
            let mut f = f.clone();
            if f.id.is_empty() {
                f.id = f.name.clone();
            }
            functions
                .register(f)
                .map_err(|e| HarnessError::Invalid(e.to_string()))?;
        }
        let ir = parse_program(&self.program, &functions)?;
        let diags = validate_program(&ir, &functions);
        if !diags.is_empty() {
            let messages: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
            return Err(HarnessError::Invalid(messages.join("; ")));
        }
        let mut registry = BackendRegistry::new(functions);
        registry.error_correlation = self.error_correlation;
        for spec in &self.backends {
            registry.register_backend(spec.clone())?;
        }
        let registry = registry.normalized_cost()?;
        for site in &ir.call_sites {
            if registry.arm_count(&site.function_id) == 0 {
                return Err(HarnessError::SiteWithoutBackends { site: site.index });
            }
        }
        let generator =
            ScenarioGenerator::compile(&self.generator, &ir, registry.functions())?;
        let positive_output = match (&self.positive_output, ir.return_kind(registry.functions())) {
            (Some(raw), Some(kind)) => Some(
                Value::from_json(raw, kind)
                    .map_err(|e| HarnessError::Invalid(format!("positive_output: {e}")))?,
            ),
            (Some(raw), None) => Some(
                Value::from_json(raw, ReturnKind::Text)
                    .map_err(|e| HarnessError::Invalid(format!("positive_output: {e}")))?,
            ),
            (None, _) => None,
        };
        Ok(Environment {
            name: "main".to_string(),
            ir,
            registry,
            generator: GeneratorKind::Scenario(generator),
            lambda: self.lambda,
            horizon: self.horizon,
            master_seed: self.seed,
            gen_seed: noise::derive(self.seed, "gen"),
            noise_seed: noise::derive(noise::derive(self.seed, "noise"), "main"),
            positive_output,
        })
    }
}

/// Runtime environment: parsed program, normalized backends, input stream.
#[derive(Debug, Clone)]
pub struct Environment {
    pub name: String,
    pub ir: ProgramIR,
    pub registry: BackendRegistry,
    generator: GeneratorKind,
    pub lambda: f64,
    pub horizon: u64,
    pub master_seed: u64,
    gen_seed: u64,
    noise_seed: u64,
    pub positive_output: Option<Value>,
}

impl Environment {
    pub fn feature_dim(&self) -> usize {
        self.generator.feature_dim()
    }

    /// Seed for episode-t backend noise (the common-random-numbers key).
    pub fn episode_seed(&self, t: u64) -> u64 {
        noise::episode_seed(self.noise_seed, t)
    }

    fn input_value(&self, t: u64) -> Value {
        Value::text(format!("input-{t}"))
    }

    /// Derives the single-call view of this task for the routing baseline:
    /// one `solve` function whose per-episode ground truth is the base
    /// program's output, with the given monolithic arms as backends.
    pub fn monolithic_view(&self, arms: &[RoutingArm]) -> Result<Environment, HarnessError> {
        let base = match &self.generator {
            GeneratorKind::Scenario(g) => g.clone(),
            GeneratorKind::Monolithic { .. } => {
                return Err(HarnessError::Invalid(
                    "cannot derive a monolithic view of a monolithic view".to_string(),
                ))
            }
        };
        let return_kind = self
            .ir
            .return_kind(self.registry.functions())
            .unwrap_or(ReturnKind::Text);
        let mut functions = FunctionRegistry::new();
        functions
            .register(GenericFunction::new("solve", 1, return_kind))
            .map_err(|e| HarnessError::Invalid(e.to_string()))?;
        let source = format!("program monolithic({p}):\n  return solve({p})\n", p = "x");
        let ir = parse_program(&source, &functions)?;
        let mut registry = BackendRegistry::new(functions);
        registry.error_correlation = self.registry.error_correlation;
        for arm in arms {
            registry.register_backend(
                BackendSpec::synthetic(&arm.id, "solve", arm.cost, arm.base_accuracy)
                    .with_slope(arm.difficulty_slope),
            )?;
        }
        let registry = registry.normalized_cost()?;
        // The base task's wrong-answer table, extended with flips for any
        // literal text answers the program itself can return.
        let mut wrong = base.wrong_text_answers().clone();
        collect_literal_answers(&self.ir.body, &mut wrong);
        let generator = GeneratorKind::Monolithic {
            base: Box::new(base),
            base_ir: Box::new(self.ir.clone()),
            wrong_text_answers: wrong,
        };
        generator.validate_monolithic()?;
        Ok(Environment {
            name: "routing".to_string(),
            ir,
            registry,
            generator,
            lambda: self.lambda,
            horizon: self.horizon,
            master_seed: self.master_seed,
            gen_seed: self.gen_seed,
            noise_seed: noise::derive(noise::derive(self.master_seed, "noise"), "routing"),
            positive_output: self.positive_output.clone(),
        })
    }
}

fn collect_literal_answers(
    body: &[crate::program::Stmt],
    map: &mut std::collections::BTreeMap<String, String>,
) {
    use crate::program::{Expr, Stmt};
    fn visit_expr(e: &Expr, out: &mut Vec<String>) {
        match e {
            Expr::Literal(Value::Text(s)) => out.push(s.clone()),
            Expr::Unary { expr, .. } => visit_expr(expr, out),
            Expr::Binary { lhs, rhs, .. } => {
                visit_expr(lhs, out);
                visit_expr(rhs, out);
            }
            _ => {}
        }
    }
    let mut texts = Vec::new();
    for stmt in body {
        match stmt {
            Stmt::Return(e) | Stmt::Assign { expr: e, .. } => visit_expr(e, &mut texts),
            Stmt::If {
                cond,
                then_body,
                else_body,
            } => {
                visit_expr(cond, &mut texts);
                collect_literal_answers(then_body, map);
                collect_literal_answers(else_body, map);
            }
            Stmt::While { cond, body, .. } => {
                visit_expr(cond, &mut texts);
                collect_literal_answers(body, map);
            }
        }
    }
    for t in texts {
        insert_flip(map, &t);
    }
    insert_flip(map, "yes");
    insert_flip(map, "no");
    insert_flip(map, "N/A");
}

fn insert_flip(map: &mut std::collections::BTreeMap<String, String>, s: &str) {
    let wrong = match s {
        "yes" => "no",
        "no" => "yes",
        other => {
            if other == "N/A" {
                "yes"
            } else {
                "N/A"
            }
        }
    };
    map.entry(s.to_string()).or_insert_with(|| wrong.to_string());
}

/// The staged interface run_episode drives; splitting it from `Environment`
/// lets tests interpose and record the access order (ground truth must not
/// be revealed before execution).
pub trait EpisodeWorld {
    fn lambda(&self) -> f64;
    fn site_count(&self) -> usize;
    fn sample_input(&self, t: u64) -> Result<(Vec<f64>, LatentTruth), HarnessError>;
    fn execute(
        &self,
        config: &ConfigurationVector,
        truth: &LatentTruth,
        t: u64,
    ) -> Result<ExecutionTrace, HarnessError>;
    fn reveal_truth(&self, truth: &LatentTruth, t: u64) -> Result<Value, HarnessError>;
}

impl EpisodeWorld for Environment {
    fn lambda(&self) -> f64 {
        self.lambda
    }

    fn site_count(&self) -> usize {
        self.ir.site_count()
    }

    fn sample_input(&self, t: u64) -> Result<(Vec<f64>, LatentTruth), HarnessError> {
        Ok(self.generator.sample(self.gen_seed, t)?)
    }

    fn execute(
        &self,
        config: &ConfigurationVector,
        truth: &LatentTruth,
        t: u64,
    ) -> Result<ExecutionTrace, HarnessError> {
        Ok(exec::execute(
            &self.ir,
            config,
            &self.registry,
            &self.input_value(t),
            truth,
            self.episode_seed(t),
        )?)
    }

    fn reveal_truth(&self, truth: &LatentTruth, t: u64) -> Result<Value, HarnessError> {
        Ok(exec::ground_truth_output(
            &self.ir,
            &self.input_value(t),
            truth,
        )?)
    }
}

/// `R = -loss - lambda * incurred_cost`.
pub fn compute_reward(loss: f64, incurred_cost: f64, lambda: f64) -> f64 {
    -loss - lambda * incurred_cost
}

/// Everything recorded about one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: u64,
    #[serde(skip)]
    pub features: Vec<f64>,
    pub config: ConfigurationVector,
    pub output: Value,
    pub y: Value,
    pub loss: f64,
    pub per_site_cost: Vec<f64>,
    pub incurred_cost: f64,
    pub reward: f64,
    pub sub_rewards: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fallback: Option<crate::exec::FallbackReason>,
}

/// Runs episode t: sample input, select (before truth), execute, reveal
/// truth, reward, decompose, learn, and account counterfactuals.
pub fn run_episode(
    world: &impl EpisodeWorld,
    policy: &mut dyn Policy,
    t: u64,
    ledger: Option<&mut RegretLedger>,
) -> Result<EpisodeRecord, HarnessError> {
    let lambda = world.lambda();
    let (features, truth) = world.sample_input(t)?;
    let selection = policy.select(&features, t)?;
    let trace = world.execute(&selection.config, &truth, t)?;
    // Ground truth is revealed only now that the configuration has been
    // committed and executed.
    let y = world.reveal_truth(&truth, t)?;
    let loss = exec::loss(&trace.output, &y);
    let reward = compute_reward(loss, trace.incurred_cost, lambda);
    let sub_rewards = crate::policy::sub_rewards(&trace, loss, lambda, world.site_count());

    policy.observe(&Feedback {
        t,
        features: &features,
        arm_indices: selection.arm_indices.as_deref(),
        sub_rewards: &sub_rewards,
        reward,
        loss,
    })?;

    if let Some(ledger) = ledger {
        let mut counterfactual = Vec::with_capacity(ledger.configs.len());
        for config in &ledger.configs {
            let cf_trace = world.execute(config, &truth, t)?;
            let cf_loss = exec::loss(&cf_trace.output, &y);
            counterfactual.push(compute_reward(cf_loss, cf_trace.incurred_cost, lambda));
        }
        ledger.record(&counterfactual, reward)?;
    }

    Ok(EpisodeRecord {
        episode: t,
        features,
        config: selection.config,
        output: trace.output,
        y,
        loss,
        per_site_cost: trace.per_site_cost,
        incurred_cost: trace.incurred_cost,
        reward,
        sub_rewards,
        fallback: trace.fallback,
    })
}

/// Aggregate metrics over a stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub episodes: u64,
    pub accuracy: f64,
    pub mean_cost: f64,
    pub mean_reward: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub f1: Option<f64>,
}

impl Metrics {
    fn from_records(records: &[EpisodeRecord], positive: Option<&Value>) -> Self {
        let n = records.len() as f64;
        if records.is_empty() {
            return Self {
                episodes: 0,
                accuracy: 0.0,
                mean_cost: 0.0,
                mean_reward: 0.0,
                precision: None,
                recall: None,
                f1: None,
            };
        }
        let accuracy = records.iter().filter(|r| r.loss == 0.0).count() as f64 / n;
        let mean_cost = records.iter().map(|r| r.incurred_cost).sum::<f64>() / n;
        let mean_reward = records.iter().map(|r| r.reward).sum::<f64>() / n;
        let (precision, recall, f1) = match positive {
            Some(pos) => {
                let tp = records
                    .iter()
                    .filter(|r| &r.output == pos && &r.y == pos)
                    .count() as f64;
                let fp = records
                    .iter()
                    .filter(|r| &r.output == pos && &r.y != pos)
                    .count() as f64;
                let fn_ = records
                    .iter()
                    .filter(|r| &r.output != pos && &r.y == pos)
                    .count() as f64;
                let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 1.0 };
                let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 1.0 };
                let f1 = if precision + recall > 0.0 {
                    2.0 * precision * recall / (precision + recall)
                } else {
                    0.0
                };
                (Some(precision), Some(recall), Some(f1))
            }
            None => (None, None, None),
        };
        Self {
            episodes: records.len() as u64,
            accuracy,
            mean_cost,
            mean_reward,
            precision,
            recall,
            f1,
        }
    }
}

/// Outcome of a full streaming run.
#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub records: Vec<EpisodeRecord>,
    pub metrics: Metrics,
    pub regret: Option<RegretSummary>,
    pub ledger: Option<RegretLedger>,
}

/// Runs T episodes, optionally tracking regret and streaming records into a
/// sink (used for append-only output files; partial results survive an
/// abort because the sink sees each record as it is produced).
pub fn run_stream(
    env: &Environment,
    policy: &mut dyn Policy,
    horizon: u64,
    mut ledger: Option<RegretLedger>,
    mut sink: Option<&mut dyn FnMut(&EpisodeRecord) -> Result<(), String>>,
) -> Result<RunResult, HarnessError> {
    let mut records = Vec::with_capacity(horizon as usize);
    for t in 1..=horizon {
        let record = run_episode(env, policy, t, ledger.as_mut())?;
        if let Some(sink) = sink.as_mut() {
            sink(&record).map_err(HarnessError::Sink)?;
        }
        records.push(record);
    }
    let metrics = Metrics::from_records(&records, env.positive_output.as_ref());
    let regret = match &ledger {
        Some(l) if l.episodes() > 0 => Some(l.regret()?),
        _ => None,
    };
    Ok(RunResult {
        records,
        metrics,
        regret,
        ledger,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn reward_examples() {
        assert_eq!(compute_reward(1.0, 0.04, 0.5), -1.02);
        assert_eq!(compute_reward(0.0, 0.0, 3.0), 0.0);
        assert_eq!(compute_reward(0.0, 1.0, 0.5), -0.5);
    }

    #[test]
    fn zero_horizon_is_an_empty_result() {
        let env = presets::guard_gated_binary(0.3, 7, 100).build().unwrap();
        let mut policy = StaticPolicy::cheapest(&env).unwrap();
        let result = run_stream(&env, &mut policy, 0, None, None).unwrap();
        assert!(result.records.is_empty());
        assert_eq!(result.metrics.episodes, 0);
        assert!(result.regret.is_none());
    }

    #[test]
    fn episode_identities_hold() {
        let env = presets::guard_gated_binary(0.3, 11, 100).build().unwrap();
        let mut policy = StaticPolicy::cheapest(&env).unwrap();
        let result = run_stream(&env, &mut policy, 200, None, None).unwrap();
        for r in &result.records {
            let expected = -r.loss - env.lambda * r.incurred_cost;
            assert!((r.reward - expected).abs() < 1e-15);
            let total: f64 = r.sub_rewards.iter().sum();
            assert!((total - r.reward).abs() <= 1e-12);
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let env = presets::guard_gated_binary(0.3, 21, 100).build().unwrap();
        let run = || {
            let mut policy = crate::policy::StructuredPolicy::for_program(
                &env.ir,
                &env.registry,
                env.feature_dim(),
                Default::default(),
                env.master_seed,
            )
            .unwrap();
            let ledger = RegretLedger::for_program(
                &env.ir,
                &env.registry,
                DEFAULT_UNIVERSE_CAP,
                DEFAULT_UNIVERSE_SAMPLE,
                env.master_seed,
            );
            run_stream(&env, &mut policy, 150, Some(ledger), None).unwrap()
        };
        let a = serde_json::to_string(&run()).unwrap();
        let b = serde_json::to_string(&run()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn skipping_expensive_site_beats_executing_it() {
        // Cost monotonicity: an episode that skips the expensive call earns
        // strictly more reward than the same-loss counterfactual that runs it.
        let env = presets::guard_gated_binary(0.3, 5, 100).build().unwrap();
        let mut cheap = StaticPolicy::cheapest(&env).unwrap();
        let result = run_stream(&env, &mut cheap, 100, None, None).unwrap();
        let skipped: Vec<&EpisodeRecord> = result
            .records
            .iter()
            .filter(|r| r.per_site_cost[2] == 0.0)
            .collect();
        assert!(!skipped.is_empty());
        for r in skipped {
            let counterfactual = compute_reward(r.loss, r.incurred_cost + 1.0, env.lambda);
            assert!(r.reward > counterfactual);
        }
    }

    #[test]
    fn ledger_counterfactuals_replay_exactly() {
        // CRN soundness: replaying the stream under a static config
        // reproduces the ledger's counterfactual sum bit for bit.
        let env = presets::guard_gated_binary(0.3, 13, 100).build().unwrap();
        let ledger = RegretLedger::for_program(&env.ir, &env.registry, 256, 64, env.master_seed);
        let configs = ledger.configs.clone();
        let mut policy = StaticPolicy::cheapest(&env).unwrap();
        let result = run_stream(&env, &mut policy, 120, Some(ledger), None).unwrap();
        let ledger = result.ledger.unwrap();
        for (idx, config) in configs.iter().enumerate() {
            let mut replay = StaticPolicy::fixed("replay", config.clone());
            let replay_result = run_stream(&env, &mut replay, 120, None, None).unwrap();
            let total: f64 = replay_result.records.iter().map(|r| r.reward).sum();
            let recorded = ledger.cumulative_rewards()[idx];
            assert!(
                (total - recorded).abs() < 1e-9,
                "config {idx}: {total} vs {recorded}"
            );
        }
    }

    #[test]
    fn binary_metrics_are_computed() {
        let env = presets::guard_gated_binary(0.3, 3, 100).build().unwrap();
        let mut policy = StaticPolicy::most_expensive(&env).unwrap();
        let result = run_stream(&env, &mut policy, 400, None, None).unwrap();
        assert!(result.metrics.precision.is_some());
        assert!(result.metrics.recall.is_some());
        assert!(result.metrics.f1.is_some());
    }

    /// Spy world that records the order of stage calls per episode.
    struct SpyWorld<'a> {
        inner: &'a Environment,
        log: std::cell::RefCell<Vec<&'static str>>,
    }

    impl EpisodeWorld for SpyWorld<'_> {
        fn lambda(&self) -> f64 {
            self.inner.lambda()
        }
        fn site_count(&self) -> usize {
            self.inner.site_count()
        }
        fn sample_input(&self, t: u64) -> Result<(Vec<f64>, LatentTruth), HarnessError> {
            self.log.borrow_mut().push("sample");
            self.inner.sample_input(t)
        }
        fn execute(
            &self,
            config: &ConfigurationVector,
            truth: &LatentTruth,
            t: u64,
        ) -> Result<ExecutionTrace, HarnessError> {
            self.log.borrow_mut().push("execute");
            self.inner.execute(config, truth, t)
        }
        fn reveal_truth(&self, truth: &LatentTruth, t: u64) -> Result<Value, HarnessError> {
            self.log.borrow_mut().push("reveal");
            self.inner.reveal_truth(truth, t)
        }
    }

    #[test]
    fn truth_is_revealed_only_after_execution() {
        let env = presets::guard_gated_binary(0.3, 17, 100).build().unwrap();
        let spy = SpyWorld {
            inner: &env,
            log: Default::default(),
        };
        let mut policy = StaticPolicy::cheapest(&env).unwrap();
        for t in 1..=20 {
            run_episode(&spy, &mut policy, t, None).unwrap();
            let log = spy.log.borrow();
            let events: Vec<&str> = log.iter().rev().take(3).rev().copied().collect();
            assert_eq!(events, ["sample", "execute", "reveal"]);
        }
    }

    #[test]
    fn static_constructors_pick_extreme_costs() {
        let env = presets::guard_gated_binary(0.3, 1, 100).build().unwrap();
        let cheap = StaticPolicy::cheapest(&env).unwrap();
        assert_eq!(
            cheap.config().choices,
            vec!["find-tiny", "find-tiny", "vqa-small"]
        );
        let pricey = StaticPolicy::most_expensive(&env).unwrap();
        assert_eq!(
            pricey.config().choices,
            vec!["find-base", "find-base", "vqa-large"]
        );
    }

    #[test]
    fn pareto_random_endpoints_match_sources() {
        let env = presets::guard_gated_binary(0.3, 23, 100).build().unwrap();
        let mk_static = |expensive: bool| -> Box<dyn Policy> {
            Box::new(if expensive {
                StaticPolicy::most_expensive(&env).unwrap()
            } else {
                StaticPolicy::cheapest(&env).unwrap()
            })
        };
        for (q, expensive) in [(0.0, false), (1.0, true)] {
            let mut mixed =
                ParetoRandomPolicy::new(mk_static(false), mk_static(true), q, env.master_seed);
            let mut source = if expensive {
                StaticPolicy::most_expensive(&env).unwrap()
            } else {
                StaticPolicy::cheapest(&env).unwrap()
            };
            for t in 1..=50 {
                let (x, _) = env.sample_input(t).unwrap();
                let a = mixed.select(&x, t).unwrap();
                let b = Policy::select(&mut source, &x, t).unwrap();
                assert_eq!(a.config, b.config, "q={q} t={t}");
            }
        }
    }
}
