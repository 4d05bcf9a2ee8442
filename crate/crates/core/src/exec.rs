//! Program execution under a configuration vector.
//!
//! The interpreter walks the statement tree, dispatching each neural call to
//! the backend selected for its site. Cost accounting is executed-only: a
//! site skipped by control flow charges nothing, and a site executed k times
//! inside a loop charges k times its backend cost while keeping a single
//! backend choice for the episode.

use crate::backend::{invoke_synthetic, BackendError, BackendRegistry, LatentTruth};
use crate::noise::NoiseKey;
use crate::program::{BinOp, Expr, ProgramIR, Stmt, UnOp};
use crate::remote::{invoke_remote, RemoteError};
use crate::value::{ReturnKind, Value};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

/// One backend id per call site, in site order (v_t).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfigurationVector {
    pub choices: Vec<String>,
}

impl ConfigurationVector {
    pub fn new(choices: Vec<String>) -> Self {
        Self { choices }
    }

    /// Checks the structural invariants: one choice per site, each choice a
    /// registered backend of the site's function.
    pub fn validate(
        &self,
        ir: &ProgramIR,
        registry: &BackendRegistry,
    ) -> Result<(), ExecError> {
        if self.choices.len() != ir.site_count() {
            return Err(ExecError::ConfigLength {
                expected: ir.site_count(),
                got: self.choices.len(),
            });
        }
        for (site, choice) in ir.call_sites.iter().zip(&self.choices) {
            let backend = registry.backend(choice)?;
            if backend.function_id != site.function_id {
                return Err(ExecError::ConfigFunctionMismatch {
                    site: site.index,
                    backend: choice.clone(),
                    expected: site.function_id.clone(),
                    got: backend.function_id.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Why execution fell back to the program's default value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FallbackReason {
    LoopBoundExhausted,
    MissingReturn,
}

/// Record of one program execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub output: Value,
    /// Dynamic invocation count per site; 0 for sites never reached.
    pub per_site_invocations: Vec<u32>,
    /// Cost incurred per site: backend cost times invocation count.
    pub per_site_cost: Vec<f64>,
    pub incurred_cost: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fallback: Option<FallbackReason>,
}

impl ExecutionTrace {
    /// Multiset of executed sites as (one-based index, invocation count).
    pub fn executed_sites(&self) -> Vec<(usize, u32)> {
        self.per_site_invocations
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > 0)
            .map(|(i, &n)| (i + 1, n))
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("configuration has {got} choices for {expected} call sites")]
    ConfigLength { expected: usize, got: usize },
    #[error("site {site} expects a {expected:?} backend, but {backend:?} implements {got:?}")]
    ConfigFunctionMismatch {
        site: usize,
        backend: String,
        expected: String,
        got: String,
    },
    #[error("type error: {context}: expected {expected}, got {got}")]
    Type {
        context: &'static str,
        expected: &'static str,
        got: String,
    },
    #[error("variable {0:?} is unbound at runtime")]
    Unbound(String),
    #[error("while loop has no bound; validate the program before executing")]
    UnboundedLoop,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Remote(#[from] RemoteError),
}

/// How neural calls are served during one execution.
enum Dispatch<'a> {
    /// Evaluate under a configuration with keyed stochastic backends.
    Configured {
        config: &'a ConfigurationVector,
        registry: &'a BackendRegistry,
        truth: &'a LatentTruth,
        episode_seed: u64,
        input_id: String,
    },
    /// Every call returns ground truth at zero cost (defines y_t).
    Oracle { truth: &'a LatentTruth },
}

struct Interp<'a> {
    ir: &'a ProgramIR,
    dispatch: Dispatch<'a>,
    vars: HashMap<String, Value>,
    invocations: Vec<u32>,
    per_site_cost: Vec<f64>,
}

enum Flow {
    Normal,
    Return(Value),
    Fallback(FallbackReason),
}

/// Executes a program under a configuration.
///
/// Deterministic given `(ir, config, truth, episode_seed)`. Sites skipped by
/// control flow incur zero cost; the trace invariants
/// `incurred_cost == sum(per_site_cost)` and
/// `per_site_cost[i] == cost_i * invocations_i` hold by construction.
pub fn execute(
    ir: &ProgramIR,
    config: &ConfigurationVector,
    registry: &BackendRegistry,
    input: &Value,
    truth: &LatentTruth,
    episode_seed: u64,
) -> Result<ExecutionTrace, ExecError> {
    config.validate(ir, registry)?;
    let input_id = format!("{episode_seed:016x}");
    run(
        ir,
        Dispatch::Configured {
            config,
            registry,
            truth,
            episode_seed,
            input_id,
        },
        input,
    )
}

/// The ground-truth output y_t: the program evaluated with every call
/// answered perfectly, at zero cost.
pub fn ground_truth_output(
    ir: &ProgramIR,
    input: &Value,
    truth: &LatentTruth,
) -> Result<Value, ExecError> {
    run(ir, Dispatch::Oracle { truth }, input).map(|trace| trace.output)
}

fn run(ir: &ProgramIR, dispatch: Dispatch<'_>, input: &Value) -> Result<ExecutionTrace, ExecError> {
    let n = ir.site_count();
    let mut interp = Interp {
        ir,
        dispatch,
        vars: HashMap::new(),
        invocations: vec![0; n],
        per_site_cost: vec![0.0; n],
    };
    interp.vars.insert(ir.param.clone(), input.clone());

    let flow = interp.block(&ir.body)?;
    let (output, fallback) = match flow {
        Flow::Return(v) => (v, None),
        Flow::Normal => (interp.fallback_value(), Some(FallbackReason::MissingReturn)),
        Flow::Fallback(reason) => (interp.fallback_value(), Some(reason)),
    };
    let incurred_cost = interp.per_site_cost.iter().sum();
    Ok(ExecutionTrace {
        output,
        per_site_invocations: interp.invocations,
        per_site_cost: interp.per_site_cost,
        incurred_cost,
        fallback,
    })
}

impl Interp<'_> {
    fn fallback_value(&self) -> Value {
        match &self.dispatch {
            Dispatch::Configured { registry, .. } => self.ir.fallback_value(registry.functions()),
            Dispatch::Oracle { .. } => {
                if let Some(v) = &self.ir.default_return {
                    v.clone()
                } else {
                    Value::neutral(ReturnKind::Text)
                }
            }
        }
    }

    fn block(&mut self, body: &[Stmt]) -> Result<Flow, ExecError> {
        for stmt in body {
            match stmt {
                Stmt::Assign { name, expr } => {
                    let v = self.eval(expr)?;
                    self.vars.insert(name.clone(), v);
                }
                Stmt::Return(expr) => {
                    let v = self.eval(expr)?;
                    return Ok(Flow::Return(v));
                }
                Stmt::If {
                    cond,
                    then_body,
                    else_body,
                } => {
                    let taken = if self.eval_bool(cond, "if condition")? {
                        then_body
                    } else {
                        else_body
                    };
                    match self.block(taken)? {
                        Flow::Normal => {}
                        other => return Ok(other),
                    }
                }
                Stmt::While { cond, bound, body } => {
                    let bound = bound.ok_or(ExecError::UnboundedLoop)?;
                    let mut iterations = 0u32;
                    loop {
                        if !self.eval_bool(cond, "while condition")? {
                            break;
                        }
                        if iterations == bound {
                            // Condition still true with the budget spent:
                            // abandon execution with the declared fallback.
                            return Ok(Flow::Fallback(FallbackReason::LoopBoundExhausted));
                        }
                        iterations += 1;
                        match self.block(body)? {
                            Flow::Normal => {}
                            other => return Ok(other),
                        }
                    }
                }
            }
        }
        Ok(Flow::Normal)
    }

    fn eval_bool(&mut self, expr: &Expr, context: &'static str) -> Result<bool, ExecError> {
        match self.eval(expr)? {
            Value::Bool(b) => Ok(b),
            other => Err(ExecError::Type {
                context,
                expected: "boolean",
                got: other.to_string(),
            }),
        }
    }

    fn eval(&mut self, expr: &Expr) -> Result<Value, ExecError> {
        match expr {
            Expr::Literal(v) => Ok(v.clone()),
            Expr::Var(name) => self
                .vars
                .get(name)
                .cloned()
                .ok_or_else(|| ExecError::Unbound(name.clone())),
            Expr::Call(site_idx) => self.call(*site_idx),
            Expr::Unary { op, expr } => {
                let v = self.eval(expr)?;
                match (op, v) {
                    (UnOp::Not, Value::Bool(b)) => Ok(Value::Bool(!b)),
                    (UnOp::Neg, Value::Number(n)) => Ok(Value::Number(-n)),
                    (UnOp::Not, other) => Err(ExecError::Type {
                        context: "not",
                        expected: "boolean",
                        got: other.to_string(),
                    }),
                    (UnOp::Neg, other) => Err(ExecError::Type {
                        context: "negation",
                        expected: "number",
                        got: other.to_string(),
                    }),
                }
            }
            Expr::Binary { op, lhs, rhs } => {
                // `and`/`or` short-circuit; other operators are strict.
                match op {
                    BinOp::And => {
                        if !self.eval_bool(lhs, "and")? {
                            return Ok(Value::Bool(false));
                        }
                        return Ok(Value::Bool(self.eval_bool(rhs, "and")?));
                    }
                    BinOp::Or => {
                        if self.eval_bool(lhs, "or")? {
                            return Ok(Value::Bool(true));
                        }
                        return Ok(Value::Bool(self.eval_bool(rhs, "or")?));
                    }
                    _ => {}
                }
                let a = self.eval(lhs)?;
                let b = self.eval(rhs)?;
                binary_op(*op, a, b)
            }
        }
    }

    fn call(&mut self, site_idx: usize) -> Result<Value, ExecError> {
        let site = &self.ir.call_sites[site_idx];
        let invocation = self.invocations[site_idx];
        self.invocations[site_idx] += 1;

        match &self.dispatch {
            Dispatch::Oracle { truth } => Ok(truth.site(site.index - 1)?.value.clone()),
            Dispatch::Configured {
                config,
                registry,
                truth,
                episode_seed,
                input_id,
            } => {
                let backend = registry.backend(&config.choices[site_idx])?;
                self.per_site_cost[site_idx] += backend.cost;
                match &backend.behavior {
                    crate::backend::Behavior::Synthetic(_) => {
                        let key = NoiseKey {
                            episode_seed: *episode_seed,
                            site: site_idx as u32,
                            invocation,
                            backend_id: &backend.id,
                        };
                        Ok(invoke_synthetic(
                            backend,
                            site,
                            truth,
                            key,
                            registry.error_correlation,
                        )?)
                    }
                    crate::backend::Behavior::Remote(endpoint) => {
                        let function = registry
                            .functions()
                            .by_id(&site.function_id)
                            .ok_or_else(|| BackendError::UnknownFunction {
                                backend: backend.id.clone(),
                                function: site.function_id.clone(),
                            })?;
                        let outcome = invoke_remote(
                            endpoint,
                            &site.function_id,
                            &site.static_args,
                            input_id,
                            function.return_kind,
                        )?;
                        log::debug!(
                            "remote {} site {} latency {:.2} ms (reported {:.2} ms)",
                            backend.id,
                            site.index,
                            outcome.observed_latency_ms,
                            outcome.reported_latency_ms
                        );
                        Ok(outcome.value)
                    }
                }
            }
        }
    }
}

fn binary_op(op: BinOp, a: Value, b: Value) -> Result<Value, ExecError> {
    use BinOp::*;
    match op {
        Eq => Ok(Value::Bool(a == b)),
        Ne => Ok(Value::Bool(a != b)),
        Lt | Le | Gt | Ge => {
            let (x, y) = (as_number(&a, "comparison")?, as_number(&b, "comparison")?);
            let r = match op {
                Lt => x < y,
                Le => x <= y,
                Gt => x > y,
                Ge => x >= y,
                _ => unreachable!(),
            };
            Ok(Value::Bool(r))
        }
        Add | Sub | Mul | Div => {
            let (x, y) = (as_number(&a, "arithmetic")?, as_number(&b, "arithmetic")?);
            let r = match op {
                Add => x + y,
                Sub => x - y,
                Mul => x * y,
                Div => x / y,
                _ => unreachable!(),
            };
            Ok(Value::Number(r))
        }
        And | Or => unreachable!("short-circuited above"),
    }
}

/// Numbers and detection counts are interchangeable in numeric contexts.
fn as_number(v: &Value, context: &'static str) -> Result<f64, ExecError> {
    match v {
        Value::Number(n) => Ok(*n),
        Value::Detections(c) => Ok(f64::from(*c)),
        other => Err(ExecError::Type {
            context,
            expected: "number",
            got: other.to_string(),
        }),
    }
}

/// Exact-match loss in {0, 1}. A kind mismatch counts as a full loss and is
/// logged, since it signals a miswired environment rather than a wrong
/// answer.
pub fn loss(output: &Value, truth: &Value) -> f64 {
    if output.kind() != truth.kind() {
        log::warn!(
            "loss comparing different kinds: output {} vs truth {}",
            output.kind(),
            truth.kind()
        );
        return 1.0;
    }
    if output == truth {
        0.0
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BackendSpec, SiteTruth};
    use crate::presets::default_function_registry;
    use crate::program::parse_program;

    fn guard_program() -> &'static str {
        concat!(
            "program p(frame):\n",
            "  has_cat = find(frame, \"cat\")\n",
            "  has_laptop = find(frame, \"laptop\")\n",
            "  if has_cat and has_laptop:\n",
            "    return vqa(frame, \"q\")\n",
            "  return \"no\"\n",
        )
    }

    fn guard_registry() -> BackendRegistry {
        let mut reg = BackendRegistry::new(default_function_registry());
        reg.register_backend(BackendSpec::synthetic("find-s", "find", 0.01, 1.0))
            .unwrap();
        reg.register_backend(BackendSpec::synthetic("find-bad", "find", 0.01, 0.0))
            .unwrap();
        reg.register_backend(BackendSpec::synthetic("vqa-l", "vqa", 1.0, 1.0))
            .unwrap();
        reg
    }

    fn truth(cat: bool, laptop: bool, answer: &str) -> LatentTruth {
        LatentTruth {
            sites: vec![
                SiteTruth::new(Value::Bool(cat)),
                SiteTruth::new(Value::Bool(laptop)),
                SiteTruth::with_wrong_text(
                    Value::text(answer),
                    if answer == "yes" { "no" } else { "yes" },
                ),
            ],
            difficulty: 0.0,
        }
    }

    #[test]
    fn skipped_site_charges_nothing() {
        let reg = guard_registry();
        let ir = parse_program(guard_program(), reg.functions()).unwrap();
        let config = ConfigurationVector::new(vec![
            "find-s".into(),
            "find-s".into(),
            "vqa-l".into(),
        ]);
        // No cat: the guard is false and the vqa site never runs.
        let trace = execute(
            &ir,
            &config,
            &reg,
            &Value::text("x"),
            &truth(false, true, "no"),
            7,
        )
        .unwrap();
        assert_eq!(trace.output, Value::text("no"));
        assert_eq!(trace.per_site_cost[2], 0.0);
        assert_eq!(trace.per_site_invocations[2], 0);
        assert_eq!(trace.incurred_cost, 0.02);
        assert_eq!(trace.executed_sites(), vec![(1, 1), (2, 1)]);
    }

    #[test]
    fn guard_true_charges_all_three_sites() {
        let reg = guard_registry();
        let ir = parse_program(guard_program(), reg.functions()).unwrap();
        let config = ConfigurationVector::new(vec![
            "find-s".into(),
            "find-s".into(),
            "vqa-l".into(),
        ]);
        let trace = execute(
            &ir,
            &config,
            &reg,
            &Value::text("x"),
            &truth(true, true, "yes"),
            7,
        )
        .unwrap();
        assert_eq!(trace.output, Value::text("yes"));
        assert_eq!(trace.incurred_cost, 1.02);
        assert_eq!(trace.per_site_cost, vec![0.01, 0.01, 1.0]);
    }

    #[test]
    fn execution_is_deterministic() {
        let reg = guard_registry();
        let ir = parse_program(guard_program(), reg.functions()).unwrap();
        let config = ConfigurationVector::new(vec![
            "find-bad".into(),
            "find-s".into(),
            "vqa-l".into(),
        ]);
        let t = truth(true, true, "yes");
        let a = execute(&ir, &config, &reg, &Value::text("x"), &t, 123).unwrap();
        let b = execute(&ir, &config, &reg, &Value::text("x"), &t, 123).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn changing_unexecuted_site_backend_changes_nothing() {
        // Configuration locality under common random numbers.
        let mut reg = guard_registry();
        reg.register_backend(BackendSpec::synthetic("vqa-s", "vqa", 0.02, 0.5))
            .unwrap();
        let ir = parse_program(guard_program(), reg.functions()).unwrap();
        let t = truth(false, false, "no");
        let with_large = ConfigurationVector::new(vec![
            "find-s".into(),
            "find-s".into(),
            "vqa-l".into(),
        ]);
        let with_small = ConfigurationVector::new(vec![
            "find-s".into(),
            "find-s".into(),
            "vqa-s".into(),
        ]);
        for seed in 0..50 {
            let a = execute(&ir, &with_large, &reg, &Value::text("x"), &t, seed).unwrap();
            let b = execute(&ir, &with_small, &reg, &Value::text("x"), &t, seed).unwrap();
            assert_eq!(a.output, b.output);
            assert_eq!(a.incurred_cost, b.incurred_cost);
        }
    }

    #[test]
    fn ground_truth_output_uses_oracle_backends() {
        let reg = guard_registry();
        let ir = parse_program(guard_program(), reg.functions()).unwrap();
        let y = ground_truth_output(&ir, &Value::text("x"), &truth(true, true, "yes")).unwrap();
        assert_eq!(y, Value::text("yes"));
        let y = ground_truth_output(&ir, &Value::text("x"), &truth(false, true, "no")).unwrap();
        assert_eq!(y, Value::text("no"));
    }

    #[test]
    fn single_call_ground_truth_is_verbatim() {
        let reg = guard_registry();
        let ir =
            parse_program("program p(x):\n  return vqa(x, \"q\")\n", reg.functions()).unwrap();
        let t = LatentTruth {
            sites: vec![SiteTruth::with_wrong_text(Value::text("blue"), "red")],
            difficulty: 0.0,
        };
        assert_eq!(
            ground_truth_output(&ir, &Value::text("x"), &t).unwrap(),
            Value::text("blue")
        );
    }

    #[test]
    fn loop_charges_per_invocation_with_one_choice() {
        let reg = guard_registry();
        let src = concat!(
            "program p(x):\n",
            "  n = 0\n",
            "  while n < 3 bound 10:\n",
            "    seen = find(x, \"cat\")\n",
            "    n = n + 1\n",
            "  return n\n",
        );
        let ir = parse_program(src, reg.functions()).unwrap();
        let config = ConfigurationVector::new(vec!["find-s".into()]);
        let t = LatentTruth {
            sites: vec![SiteTruth::new(Value::Bool(true))],
            difficulty: 0.0,
        };
        let trace = execute(&ir, &config, &reg, &Value::text("x"), &t, 3).unwrap();
        assert_eq!(trace.per_site_invocations[0], 3);
        assert!((trace.per_site_cost[0] - 0.03).abs() < 1e-15);
        assert_eq!(trace.output, Value::Number(3.0));
    }

    #[test]
    fn exhausted_loop_bound_returns_fallback_and_flags_trace() {
        let reg = guard_registry();
        let src = concat!(
            "program p(x) default \"gave-up\":\n",
            "  n = 0\n",
            "  while n < 10 bound 2:\n",
            "    n = n + 1\n",
            "  return \"done\"\n",
        );
        let ir = parse_program(src, reg.functions()).unwrap();
        let config = ConfigurationVector::new(vec![]);
        let t = LatentTruth {
            sites: vec![],
            difficulty: 0.0,
        };
        let trace = execute(&ir, &config, &reg, &Value::text("x"), &t, 3).unwrap();
        assert_eq!(trace.fallback, Some(FallbackReason::LoopBoundExhausted));
        assert_eq!(trace.output, Value::text("gave-up"));
    }

    #[test]
    fn config_validation_rejects_wrong_shape() {
        let reg = guard_registry();
        let ir = parse_program(guard_program(), reg.functions()).unwrap();
        let short = ConfigurationVector::new(vec!["find-s".into()]);
        assert!(matches!(
            short.validate(&ir, &reg),
            Err(ExecError::ConfigLength { .. })
        ));
        let wrong = ConfigurationVector::new(vec![
            "find-s".into(),
            "vqa-l".into(),
            "vqa-l".into(),
        ]);
        assert!(matches!(
            wrong.validate(&ir, &reg),
            Err(ExecError::ConfigFunctionMismatch { .. })
        ));
    }

    #[test]
    fn runtime_type_error_is_reported() {
        let reg = guard_registry();
        let ir = parse_program(
            "program p(x):\n  if x:\n    return 1\n  return 2\n",
            reg.functions(),
        )
        .unwrap();
        let config = ConfigurationVector::new(vec![]);
        let t = LatentTruth {
            sites: vec![],
            difficulty: 0.0,
        };
        let err = execute(&ir, &config, &reg, &Value::text("str"), &t, 1).unwrap_err();
        assert!(matches!(err, ExecError::Type { .. }));
    }

    #[test]
    fn exact_match_loss() {
        assert_eq!(loss(&Value::text("yes"), &Value::text("yes")), 0.0);
        assert_eq!(loss(&Value::text("yes"), &Value::text("no")), 1.0);
        assert_eq!(loss(&Value::text("N/A"), &Value::text("N/A")), 0.0);
        // Kind mismatch counts as full loss.
        assert_eq!(loss(&Value::Number(1.0), &Value::text("1")), 1.0);
        assert_eq!(loss(&Value::Detections(2), &Value::Number(2.0)), 1.0);
    }
}
