//! Regret accounting against static configurations.
//!
//! The ledger carries cumulative counterfactual rewards for a universe of
//! static configuration vectors, evaluated on the same common random numbers
//! as the live policy. Regret after t episodes is
//! `gamma_t = max_v sum_{s<=t} R(v, x_s, y_s) - sum_{s<=t} R(v_s, x_s, y_s)`,
//! which may be negative when the adaptive policy beats every static
//! configuration.

use crate::exec::ConfigurationVector;
use crate::noise;
use crate::program::ProgramIR;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RegretError {
    #[error("ledger is empty; run at least one episode first")]
    EmptyLedger,
    #[error("expected {expected} counterfactual rewards, got {got}")]
    WrongArity { expected: usize, got: usize },
}

/// Default full-enumeration cap on the configuration universe.
pub const DEFAULT_UNIVERSE_CAP: usize = 256;
/// Sampled-universe size used when the product space exceeds the cap.
pub const DEFAULT_UNIVERSE_SAMPLE: usize = 64;

#[derive(Debug, Clone, Serialize)]
pub struct RegretLedger {
    /// The static configuration universe V.
    pub configs: Vec<ConfigurationVector>,
    /// True when V is a sampled subset rather than the full product space.
    pub approximate: bool,
    cumulative: Vec<f64>,
    achieved: f64,
    gamma_series: Vec<f64>,
    pub r_min: f64,
    pub r_max: f64,
    episodes: u64,
}

/// One row of the regret series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegretPoint {
    pub t: u64,
    pub gamma: f64,
    pub average: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegretSummary {
    pub gamma_t: f64,
    pub average: f64,
    pub approximate: bool,
    pub series: Vec<RegretPoint>,
}

impl RegretLedger {
    /// Builds the configuration universe for a program: the full cartesian
    /// product of per-site arms when its size is at most `cap`, otherwise
    /// `sample` distinct random configurations plus the cheapest and most
    /// expensive ones, flagged approximate.
    pub fn for_program(
        ir: &ProgramIR,
        registry: &crate::backend::BackendRegistry,
        cap: usize,
        sample: usize,
        seed: u64,
    ) -> Self {
        let per_site: Vec<Vec<(String, f64)>> = ir
            .call_sites
            .iter()
            .map(|site| {
                registry
                    .backends_for(&site.function_id)
                    .iter()
                    .map(|b| (b.id.clone(), b.cost))
                    .collect()
            })
            .collect();
        let product: usize = per_site.iter().map(Vec::len).product();

        let (configs, approximate) = if product <= cap {
            (enumerate_product(&per_site), false)
        } else {
            let mut rng = ChaCha12Rng::seed_from_u64(noise::derive(seed, "ledger"));
            let mut set = std::collections::BTreeSet::new();
            let cheapest: Vec<String> = per_site
                .iter()
                .map(|arms| arg_cost(arms, |a, b| a < b))
                .collect();
            let priciest: Vec<String> = per_site
                .iter()
                .map(|arms| arg_cost(arms, |a, b| a > b))
                .collect();
            set.insert(cheapest);
            set.insert(priciest);
            while set.len() < sample + 2 {
                let candidate: Vec<String> = per_site
                    .iter()
                    .map(|arms| arms[rng.random_range(0..arms.len())].0.clone())
                    .collect();
                set.insert(candidate);
            }
            (
                set.into_iter().map(ConfigurationVector::new).collect(),
                true,
            )
        };

        let n = configs.len();
        Self {
            configs,
            approximate,
            cumulative: vec![0.0; n],
            achieved: 0.0,
            gamma_series: Vec::new(),
            r_min: f64::INFINITY,
            r_max: f64::NEG_INFINITY,
            episodes: 0,
        }
    }

    /// Records one episode: counterfactual reward per universe config plus
    /// the reward actually achieved.
    pub fn record(
        &mut self,
        counterfactual: &[f64],
        achieved_reward: f64,
    ) -> Result<(), RegretError> {
        if counterfactual.len() != self.configs.len() {
            return Err(RegretError::WrongArity {
                expected: self.configs.len(),
                got: counterfactual.len(),
            });
        }
        for (cum, &r) in self.cumulative.iter_mut().zip(counterfactual) {
            *cum += r;
            self.r_min = self.r_min.min(r);
            self.r_max = self.r_max.max(r);
        }
        self.achieved += achieved_reward;
        self.r_min = self.r_min.min(achieved_reward);
        self.r_max = self.r_max.max(achieved_reward);
        self.episodes += 1;
        let best = self
            .cumulative
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        self.gamma_series.push(best - self.achieved);
        Ok(())
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    /// Cumulative counterfactual reward per universe config.
    pub fn cumulative_rewards(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn achieved_reward(&self) -> f64 {
        self.achieved
    }

    /// Index and cumulative reward of the best static configuration.
    pub fn best_static(&self) -> Result<(usize, f64), RegretError> {
        if self.episodes == 0 {
            return Err(RegretError::EmptyLedger);
        }
        let (idx, best) = self
            .cumulative
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite rewards"))
            .expect("nonempty universe");
        Ok((idx, *best))
    }

    /// Final regret plus the full per-episode series.
    pub fn regret(&self) -> Result<RegretSummary, RegretError> {
        if self.episodes == 0 {
            return Err(RegretError::EmptyLedger);
        }
        let gamma_t = *self.gamma_series.last().expect("nonempty series");
        let series = self
            .gamma_series
            .iter()
            .enumerate()
            .map(|(i, &g)| RegretPoint {
                t: i as u64 + 1,
                gamma: g,
                average: g / (i as f64 + 1.0),
            })
            .collect();
        Ok(RegretSummary {
            gamma_t,
            average: gamma_t / self.episodes as f64,
            approximate: self.approximate,
            series,
        })
    }

    /// gamma_t at a checkpoint (1-based episode count).
    pub fn gamma_at(&self, t: u64) -> Option<f64> {
        self.gamma_series.get(t as usize - 1).copied()
    }
}

fn enumerate_product(per_site: &[Vec<(String, f64)>]) -> Vec<ConfigurationVector> {
    let mut out = vec![Vec::new()];
    for arms in per_site {
        let mut next = Vec::with_capacity(out.len() * arms.len());
        for prefix in &out {
            for (id, _) in arms {
                let mut config = prefix.clone();
                config.push(id.clone());
                next.push(config);
            }
        }
        out = next;
    }
    out.into_iter().map(ConfigurationVector::new).collect()
}

fn arg_cost(arms: &[(String, f64)], better: impl Fn(f64, f64) -> bool) -> String {
    let mut best = 0;
    for (i, (_, cost)) in arms.iter().enumerate().skip(1) {
        if better(*cost, arms[best].1) {
            best = i;
        }
    }
    arms[best].0.clone()
}
