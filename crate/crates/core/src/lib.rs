//! Online resource allocation for foundation-model programs.
//!
//! A foundation-model program interleaves symbolic control flow with calls
//! to generic neural functions, each implementable by backends of different
//! cost and accuracy. This crate provides:
//!
//! - a mini-language for such programs with statically enumerated call sites
//!   ([`program`]),
//! - a backend registry with fixed costs and seeded synthetic behavior for
//!   counterfactual-exact simulation ([`backend`], [`remote`]),
//! - an interpreter with executed-only cost accounting ([`exec`]),
//! - per-call-site subpolicies combining gradient-based Thompson Sampling
//!   with REINFORCE trained on sub-rewards ([`policy`]),
//! - streaming environments, baselines, regret accounting, and Pareto
//!   tooling ([`harness`]),
//! - run configuration and report generation for the CLI ([`config`],
//!   [`driver`]).

pub mod backend;
pub mod config;
pub mod driver;
pub mod exec;
pub mod harness;
pub mod noise;
pub mod policy;
pub mod presets;
pub mod program;
pub mod remote;
pub mod value;

pub use backend::{BackendRegistry, BackendSpec, LatentTruth, SyntheticBehavior};
pub use exec::{ConfigurationVector, ExecutionTrace};
pub use harness::{Environment, EnvironmentSpec, EpisodeRecord, RegretLedger, RunResult};
pub use policy::{PolicyHyperparams, StructuredPolicy, SubPolicyState};
pub use program::{CallSite, GenericFunction, ProgramIR};
pub use value::{ReturnKind, Value};
