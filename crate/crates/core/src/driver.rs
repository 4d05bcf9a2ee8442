//! Experiment driver: runs the (policy, lambda, seed) sweep described by a
//! config and emits report artifacts.
//!
//! Per-run outputs, under `<out>/<policy>/lambda-<l>/seed-<s>/`:
//!
//! - `episodes.jsonl` — one JSON record per episode, append-only
//! - `summary.json`   — final metrics
//! - `regret.csv`     — `t,gamma,avg` series
//!
//! After the sweep, `pareto.csv` (and optionally `pareto.svg`) aggregate all
//! runs; rows on the cost/accuracy Pareto front are flagged.

use crate::config::{BaselineKind, LoadedConfig};
use crate::harness::{
    pareto_front, routing_policy, Environment, ParetoRandomPolicy, Policy, RegretLedger,
    StaticPolicy, DEFAULT_UNIVERSE_CAP, DEFAULT_UNIVERSE_SAMPLE,
};
use crate::policy::StructuredPolicy;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Harness(#[from] crate::harness::HarnessError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("no run summaries found under the given directories")]
    NoSummaries,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DriverError + '_ {
    move |source| DriverError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Final numbers for one run; the content of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub policy: String,
    pub lambda: f64,
    pub seed: u64,
    pub horizon: u64,
    pub accuracy: f64,
    pub mean_cost: f64,
    pub mean_reward: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub average_regret: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub regret_approximate: Option<bool>,
}

#[derive(Debug, Clone)]
struct RunSpec {
    policy: PolicySpec,
    lambda: f64,
    seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
enum PolicySpec {
    Structured,
    Cheapest,
    MostExpensive,
    ParetoRandom { q: f64 },
    Routing,
}

impl PolicySpec {
    fn dir_name(&self) -> String {
        match self {
            PolicySpec::Structured => "structured".to_string(),
            PolicySpec::Cheapest => "static-cheapest".to_string(),
            PolicySpec::MostExpensive => "static-most-expensive".to_string(),
            PolicySpec::ParetoRandom { q } => format!("pareto-random-q{q}"),
            PolicySpec::Routing => "routing".to_string(),
        }
    }
}

/// Runs the full sweep. `jobs` > 1 executes independent (policy, lambda,
/// seed) cells on a thread pool; each cell owns its output subdirectory, so
/// outputs are identical regardless of parallelism.
pub fn run_all(loaded: &LoadedConfig, jobs: usize) -> Result<Vec<RunSummary>, DriverError> {
    // Validate every sweep cell before the first episode runs.
    for &lambda in &loaded.config.lambda_grid {
        loaded
            .environment_spec(lambda, loaded.config.seeds[0])
            .build()?;
    }

    let mut policies = vec![PolicySpec::Structured];
    for baseline in &loaded.config.baselines {
        match baseline {
            BaselineKind::Cheapest => policies.push(PolicySpec::Cheapest),
            BaselineKind::MostExpensive => policies.push(PolicySpec::MostExpensive),
            BaselineKind::ParetoRandom => {
                for &q in &loaded.config.pareto_random_q {
                    policies.push(PolicySpec::ParetoRandom { q });
                }
            }
            BaselineKind::Routing => policies.push(PolicySpec::Routing),
        }
    }

    let mut specs = Vec::new();
    for policy in &policies {
        for &lambda in &loaded.config.lambda_grid {
            for &seed in &loaded.config.seeds {
                specs.push(RunSpec {
                    policy: policy.clone(),
                    lambda,
                    seed,
                });
            }
        }
    }

    let run_one = |spec: &RunSpec| -> Result<RunSummary, DriverError> {
        execute_run(loaded, spec)
    };

    let mut summaries: Vec<RunSummary> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .expect("thread pool");
        pool.install(|| specs.par_iter().map(run_one).collect::<Result<Vec<_>, _>>())?
    } else {
        specs.iter().map(run_one).collect::<Result<Vec<_>, _>>()?
    };
    sort_summaries(&mut summaries);

    let csv_path = loaded.output_dir.join("pareto.csv");
    write_pareto_csv(&summaries, &csv_path)?;
    Ok(summaries)
}

fn execute_run(loaded: &LoadedConfig, spec: &RunSpec) -> Result<RunSummary, DriverError> {
    let env = loaded.environment_spec(spec.lambda, spec.seed).build()?;
    let hp = loaded.config.policy.clone();

    // The routing baseline runs on the single-call monolithic view of the
    // same input stream; everything else runs on the main environment.
    let (env, mut policy): (Environment, Box<dyn Policy>) = match &spec.policy {
        PolicySpec::Structured => {
            let p = StructuredPolicy::for_program(
                &env.ir,
                &env.registry,
                env.feature_dim(),
                hp,
                spec.seed,
            )
            .map_err(crate::harness::HarnessError::from)?;
            (env, Box::new(p))
        }
        PolicySpec::Cheapest => {
            let p = StaticPolicy::cheapest(&env)?;
            (env, Box::new(p))
        }
        PolicySpec::MostExpensive => {
            let p = StaticPolicy::most_expensive(&env)?;
            (env, Box::new(p))
        }
        PolicySpec::ParetoRandom { q } => {
            let low = Box::new(StaticPolicy::cheapest(&env)?);
            let high = Box::new(StaticPolicy::most_expensive(&env)?);
            let p = ParetoRandomPolicy::new(low, high, *q, spec.seed);
            (env, Box::new(p))
        }
        PolicySpec::Routing => {
            let arms = loaded
                .config
                .routing
                .as_ref()
                .expect("validated: routing baseline has arms");
            let (mono, p) = routing_policy(&env, arms, hp, spec.seed)?;
            (mono, Box::new(p))
        }
    };

    let run_dir = loaded
        .output_dir
        .join(spec.policy.dir_name())
        .join(format!("lambda-{}", spec.lambda))
        .join(format!("seed-{}", spec.seed));
    fs::create_dir_all(&run_dir).map_err(io_err(&run_dir))?;

    let episodes_path = run_dir.join("episodes.jsonl");
    let file = fs::File::create(&episodes_path).map_err(io_err(&episodes_path))?;
    let mut writer = BufWriter::new(file);
    let mut sink = |record: &crate::harness::EpisodeRecord| -> Result<(), String> {
        let line = serde_json::to_string(record).map_err(|e| e.to_string())?;
        writer
            .write_all(line.as_bytes())
            .and_then(|_| writer.write_all(b"\n"))
            .map_err(|e| e.to_string())
    };

    let ledger = RegretLedger::for_program(
        &env.ir,
        &env.registry,
        DEFAULT_UNIVERSE_CAP,
        DEFAULT_UNIVERSE_SAMPLE,
        spec.seed,
    );
    let result = crate::harness::run_stream(
        &env,
        policy.as_mut(),
        loaded.config.horizon,
        Some(ledger),
        Some(&mut sink),
    )?;
    writer.flush().map_err(io_err(&episodes_path))?;
    drop(writer);

    let regret_path = run_dir.join("regret.csv");
    let mut regret_csv = String::from("t,gamma,avg\n");
    if let Some(summary) = &result.regret {
        for point in &summary.series {
            regret_csv.push_str(&format!(
                "{},{},{}\n",
                point.t, point.gamma, point.average
            ));
        }
    }
    fs::write(&regret_path, regret_csv).map_err(io_err(&regret_path))?;

    let summary = RunSummary {
        policy: spec.policy.dir_name(),
        lambda: spec.lambda,
        seed: spec.seed,
        horizon: loaded.config.horizon,
        accuracy: result.metrics.accuracy,
        mean_cost: result.metrics.mean_cost,
        mean_reward: result.metrics.mean_reward,
        precision: result.metrics.precision,
        recall: result.metrics.recall,
        f1: result.metrics.f1,
        gamma: result.regret.as_ref().map(|r| r.gamma_t),
        average_regret: result.regret.as_ref().map(|r| r.average),
        regret_approximate: result.regret.as_ref().map(|r| r.approximate),
    };
    let summary_path = run_dir.join("summary.json");
    fs::write(
        &summary_path,
        serde_json::to_string_pretty(&summary)? + "\n",
    )
    .map_err(io_err(&summary_path))?;
    Ok(summary)
}

fn sort_summaries(summaries: &mut [RunSummary]) {
    summaries.sort_by(|a, b| {
        a.policy
            .cmp(&b.policy)
            .then(a.lambda.total_cmp(&b.lambda))
            .then(a.seed.cmp(&b.seed))
    });
}

// --- reporting --------------------------------------------------------------

/// Collects every `summary.json` under the given directories. Unreadable or
/// corrupt files are reported in the second list; the rest are processed.
pub fn collect_summaries(dirs: &[PathBuf]) -> (Vec<RunSummary>, Vec<String>) {
    let mut summaries = Vec::new();
    let mut problems = Vec::new();
    for dir in dirs {
        let mut stack = vec![dir.clone()];
        while let Some(current) = stack.pop() {
            let entries = match fs::read_dir(&current) {
                Ok(e) => e,
                Err(e) => {
                    problems.push(format!("{}: {e}", current.display()));
                    continue;
                }
            };
            let mut children: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .collect();
            children.sort();
            for child in children {
                if child.is_dir() {
                    stack.push(child);
                } else if child.file_name().is_some_and(|n| n == "summary.json") {
                    match fs::read_to_string(&child)
                        .map_err(|e| e.to_string())
                        .and_then(|text| {
                            serde_json::from_str::<RunSummary>(&text).map_err(|e| e.to_string())
                        }) {
                        Ok(s) => summaries.push(s),
                        Err(e) => problems.push(format!("{}: {e}", child.display())),
                    }
                }
            }
        }
    }
    sort_summaries(&mut summaries);
    (summaries, problems)
}

/// One line of `pareto.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoRow {
    pub policy: String,
    pub lambda: f64,
    /// Seed number, or None for a per-(policy, lambda) aggregate mean row.
    pub seed: Option<u64>,
    pub mean_cost: f64,
    pub accuracy: f64,
    pub f1: Option<f64>,
    pub on_front: bool,
}

/// Raw rows plus aggregate mean rows; the Pareto front is computed over the
/// aggregates' (mean_cost, accuracy) points.
pub fn pareto_rows(summaries: &[RunSummary]) -> Vec<ParetoRow> {
    let mut rows: Vec<ParetoRow> = summaries
        .iter()
        .map(|s| ParetoRow {
            policy: s.policy.clone(),
            lambda: s.lambda,
            seed: Some(s.seed),
            mean_cost: s.mean_cost,
            accuracy: s.accuracy,
            f1: s.f1,
            on_front: false,
        })
        .collect();

    // Aggregate over seeds per (policy, lambda), preserving sort order.
    let mut aggregates: Vec<ParetoRow> = Vec::new();
    let mut groups: Vec<(String, f64, Vec<&RunSummary>)> = Vec::new();
    for s in summaries {
        match groups
            .iter_mut()
            .find(|(p, l, _)| p == &s.policy && *l == s.lambda)
        {
            Some((_, _, members)) => members.push(s),
            None => groups.push((s.policy.clone(), s.lambda, vec![s])),
        }
    }
    for (policy, lambda, members) in &groups {
        let n = members.len() as f64;
        let mean_cost = members.iter().map(|s| s.mean_cost).sum::<f64>() / n;
        let accuracy = members.iter().map(|s| s.accuracy).sum::<f64>() / n;
        let f1s: Vec<f64> = members.iter().filter_map(|s| s.f1).collect();
        let f1 = (!f1s.is_empty()).then(|| f1s.iter().sum::<f64>() / f1s.len() as f64);
        aggregates.push(ParetoRow {
            policy: policy.clone(),
            lambda: *lambda,
            seed: None,
            mean_cost,
            accuracy,
            f1,
            on_front: false,
        });
    }

    let points: Vec<(f64, f64)> = aggregates
        .iter()
        .map(|r| (r.mean_cost, r.accuracy))
        .collect();
    for idx in pareto_front(&points) {
        aggregates[idx].on_front = true;
    }
    rows.extend(aggregates);
    rows
}

pub fn write_pareto_csv(summaries: &[RunSummary], path: &Path) -> Result<(), DriverError> {
    let rows = pareto_rows(summaries);
    let mut csv = String::from("policy,lambda,seed,mean_cost,accuracy,f1,on_front\n");
    for row in &rows {
        let seed = row
            .seed
            .map(|s| s.to_string())
            .unwrap_or_else(|| "mean".to_string());
        let f1 = row.f1.map(|v| v.to_string()).unwrap_or_default();
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.policy, row.lambda, seed, row.mean_cost, row.accuracy, f1, row.on_front
        ));
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, csv).map_err(io_err(path))?;
    Ok(())
}

/// Report entry point: aggregates run dirs into `pareto.csv` and optionally
/// an SVG scatter with the front highlighted.
pub fn report(
    dirs: &[PathBuf],
    out_csv: &Path,
    out_svg: Option<&Path>,
) -> Result<(Vec<RunSummary>, Vec<String>), DriverError> {
    let (summaries, problems) = collect_summaries(dirs);
    if summaries.is_empty() {
        return Err(DriverError::NoSummaries);
    }
    write_pareto_csv(&summaries, out_csv)?;
    if let Some(svg_path) = out_svg {
        let svg = render_svg(&pareto_rows(&summaries));
        fs::write(svg_path, svg).map_err(io_err(svg_path))?;
    }
    Ok((summaries, problems))
}

const PALETTE: [&str; 6] = [
    "#2166ac", "#b2182b", "#1b7837", "#e08214", "#762a83", "#4d4d4d",
];

/// Plain-vector scatter of aggregate (cost, accuracy) points, one color per
/// policy, with the Pareto front drawn as a polyline. No external renderer.
pub fn render_svg(rows: &[ParetoRow]) -> String {
    let aggregates: Vec<&ParetoRow> = rows.iter().filter(|r| r.seed.is_none()).collect();
    let (width, height) = (640.0, 440.0);
    let (left, right, top, bottom) = (70.0, 20.0, 20.0, 50.0);
    let max_cost = aggregates
        .iter()
        .map(|r| r.mean_cost)
        .fold(0.0_f64, f64::max)
        .max(1e-9)
        * 1.05;
    let x = |cost: f64| left + (cost / max_cost) * (width - left - right);
    let y = |acc: f64| top + (1.0 - acc) * (height - top - bottom);

    let mut policies: Vec<&str> = aggregates.iter().map(|r| r.policy.as_str()).collect();
    policies.dedup();
    let mut unique: Vec<&str> = Vec::new();
    for p in policies {
        if !unique.contains(&p) {
            unique.push(p);
        }
    }

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{left}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        height - bottom,
        width - right,
        height - bottom
    ));
    svg.push_str(&format!(
        "<line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{}\" stroke=\"black\"/>\n",
        height - bottom
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">normalized cost</text>\n",
        (left + width - right) / 2.0,
        height - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" \
         transform=\"rotate(-90 16 {})\">accuracy</text>\n",
        (top + height - bottom) / 2.0,
        (top + height - bottom) / 2.0
    ));
    for frac in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let cx = x(frac * max_cost);
        svg.push_str(&format!(
            "<text x=\"{cx:.1}\" y=\"{}\" font-size=\"10\" text-anchor=\"middle\">{:.2}</text>\n",
            height - bottom + 16.0,
            frac * max_cost
        ));
        let cy = y(frac);
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{cy:.1}\" font-size=\"10\" text-anchor=\"end\">{frac:.2}</text>\n",
            left - 6.0
        ));
    }
    // Pareto front polyline.
    let mut front: Vec<&&ParetoRow> = aggregates.iter().filter(|r| r.on_front).collect();
    front.sort_by(|a, b| a.mean_cost.total_cmp(&b.mean_cost));
    if front.len() > 1 {
        let path: Vec<String> = front
            .iter()
            .map(|r| format!("{:.2},{:.2}", x(r.mean_cost), y(r.accuracy)))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"#1b7837\" stroke-width=\"2\" \
             stroke-dasharray=\"6 3\"/>\n",
            path.join(" ")
        ));
    }
    // Points.
    for row in &aggregates {
        let color = PALETTE[unique
            .iter()
            .position(|p| *p == row.policy)
            .unwrap_or(unique.len().saturating_sub(1))
            % PALETTE.len()];
        let radius = if row.on_front { 5.0 } else { 3.5 };
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{radius}\" fill=\"{color}\" \
             fill-opacity=\"0.85\"><title>{} lambda={} cost={:.4} acc={:.4}</title></circle>\n",
            x(row.mean_cost),
            y(row.accuracy),
            row.policy,
            row.lambda,
            row.mean_cost,
            row.accuracy
        ));
    }
    // Legend.
    for (i, policy) in unique.iter().enumerate() {
        let ly = top + 14.0 * i as f64 + 10.0;
        svg.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{ly:.1}\" r=\"4\" fill=\"{}\"/>\n",
            width - right - 150.0,
            PALETTE[i % PALETTE.len()]
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{:.1}\" font-size=\"11\">{policy}</text>\n",
            width - right - 140.0,
            ly + 3.5
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
