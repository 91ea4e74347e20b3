//! BPSO solution quality measured against the exact optimum.

use std::time::Instant;

use kpflow_core::bpso::{self, BpsoConfig, BpsoError};
use kpflow_core::knapsack::{solve_exact_dp, KnapsackError, KnapsackInstance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Knapsack(#[from] KnapsackError),
    #[error(transparent)]
    Bpso(#[from] BpsoError),
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub instances: usize,
    pub n_items: usize,
    pub mean_ratio: f64,
    pub min_ratio: f64,
    pub infeasible: usize,
    pub above_optimum: usize,
    pub elapsed_s: f64,
}

/// Weights uniform in `[1, 1000]` KB, values uniform in `[1, 255]`, capacity half the total weight.
pub fn random_instance(n_items: usize, rng: &mut impl Rng) -> Result<KnapsackInstance, KnapsackError> {
    let pairs: Vec<(u64, u32)> = (0..n_items).map(|_| (rng.random_range(1..=1000), rng.random_range(1..=255))).collect();
    let capacity = pairs.iter().map(|p| p.0).sum::<u64>() / 2;
    KnapsackInstance::from_pairs(&pairs, capacity)
}

pub fn bpso_vs_optimum(instances: usize, n_items: usize, seed: u64, cfg: &BpsoConfig) -> Result<OracleReport, OracleError> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut min) = (0.0, f64::INFINITY);
    let (mut infeasible, mut above) = (0, 0);
    for i in 0..instances {
        let inst = random_instance(n_items, &mut rng)?;
        let opt = solve_exact_dp(&inst)?;
        let sol = bpso::solve(&inst, &cfg.clone().with_seed(seed.wrapping_add(i as u64)))?.to_solution(&inst);
        infeasible += usize::from(!sol.is_feasible(&inst));
        above += usize::from(sol.total_value > opt.total_value);
        let ratio = if opt.total_value == 0 { 1.0 } else { sol.total_value as f64 / opt.total_value as f64 };
        sum += ratio;
        min = min.min(ratio);
    }
    Ok(OracleReport {
        instances,
        n_items,
        mean_ratio: if instances == 0 { 1.0 } else { sum / instances as f64 },
        min_ratio: if instances == 0 { 1.0 } else { min },
        infeasible,
        above_optimum: above,
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}
