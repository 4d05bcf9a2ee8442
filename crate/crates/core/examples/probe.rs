//! Dev probe: convergence behavior on the reference environments.

use fmprog::harness::{run_stream, EnvironmentSpec, RegretLedger, StaticPolicy};
use fmprog::policy::{PolicyHyperparams, StructuredPolicy};
use fmprog::presets;

fn main() {
    let horizon = 5000u64;
    for eta0 in [0.05, 1.0] {
        println!("=== eta0 = {eta0} ===");
        for (name, spec_fn) in [
            ("canonical", presets::guard_gated_binary as fn(f64, u64, u64) -> EnvironmentSpec),
            ("dense", presets::guard_gated_binary_dense as fn(f64, u64, u64) -> EnvironmentSpec),
        ] {
            let mut ok = 0;
            for seed in 1..=5u64 {
                let env = spec_fn(0.3, seed, horizon).build().unwrap();
                let hp = PolicyHyperparams {
                    eta0,
                    ..Default::default()
                };
                let mut policy = StructuredPolicy::for_program(
                    &env.ir,
                    &env.registry,
                    env.feature_dim(),
                    hp,
                    seed,
                )
                .unwrap();
                let ledger = RegretLedger::for_program(&env.ir, &env.registry, 256, 64, seed);
                let result =
                    run_stream(&env, &mut policy, horizon, Some(ledger), None).unwrap();
                let ledger = result.ledger.as_ref().unwrap();
                let (best_idx, best_cum) = ledger.best_static().unwrap();
                let best_mean = best_cum / horizon as f64;
                let final_1000: Vec<f64> = result
                    .records
                    .iter()
                    .rev()
                    .take(1000)
                    .map(|r| r.reward)
                    .collect();
                let learned_final = final_1000.iter().sum::<f64>() / final_1000.len() as f64;
                let threshold = best_mean - 0.05 * best_mean.abs();
                let pass6 = learned_final >= threshold;
                if pass6 {
                    ok += 1;
                }
                let g = |t: u64| ledger.gamma_at(t).unwrap() / t as f64;
                let checkpoints = [500, 1000, 2500, 5000].map(g);
                let decreasing = checkpoints.windows(2).all(|w| w[1] < w[0]);
                let halved = checkpoints[3] < 0.5 * checkpoints[0];

                // Criterion-8 style numbers.
                let mut expensive = StaticPolicy::most_expensive(&env).unwrap();
                let exp_result = run_stream(&env, &mut expensive, horizon, None, None).unwrap();
                let cost_red = 1.0 - result.metrics.mean_cost / exp_result.metrics.mean_cost;
                let final_cost: f64 = result
                    .records
                    .iter()
                    .rev()
                    .take(2000)
                    .map(|r| r.incurred_cost)
                    .sum::<f64>()
                    / 2000.0;
                let final_cost_red = 1.0 - final_cost / exp_result.metrics.mean_cost;
                let acc_drop = exp_result.metrics.accuracy - result.metrics.accuracy;

                println!(
                    "{name} seed {seed}: best cfg {:?} mean {best_mean:.4} | learned final1k \
                     {learned_final:.4} pass6={pass6} | g/t {:?} dec={decreasing} halved={halved} \
                     | cost red {cost_red:.3} (final2k {final_cost_red:.3}) accdrop {acc_drop:.4}",
                    ledger.configs[best_idx].choices,
                    checkpoints.map(|v| (v * 1e4).round() / 1e4),
                );
            }
            println!("{name}: criterion-6 style pass {ok}/5\n");
        }
    }
}
