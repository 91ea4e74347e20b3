//! Binary particle swarm optimization for the 0/1 knapsack.
//!
//! Positions are bit vectors, velocities are real vectors. Each step applies the
//! inertia/cognitive/social velocity update, clamps it, and re-samples every bit
//! through the sigmoid transfer `P(bit = 1) = 1 / (1 + e^-v)`. Overweight positions
//! are scored with a linear penalty, and an infeasible final best is repaired by
//! dropping the least dense items first.
//!
//! Every particle draws from its own ChaCha stream derived from the master seed and
//! the particle index, and the global best is reduced in particle order, so results
//! do not depend on whether particles are evaluated in parallel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knapsack::{compare_density, KnapsackInstance, KnapsackSolution};

/// Below this many `particles * dimensions` a step runs sequentially.
const PARALLEL_WORK_THRESHOLD: usize = 1 << 14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BpsoError {
    #[error("position has {got} bits, instance has {expected} items")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid bpso config: {0}")]
    InvalidConfig(String),
    #[error("iteration {t} outside 1..={max}")]
    IterationOutOfRange { t: usize, max: usize },
}

/// Penalty weight applied per KB of overweight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PenaltyFactor {
    /// `1 + sum of all item values`: one KB over capacity costs more than any pack is worth.
    Auto,
    Fixed(f64),
}

impl PenaltyFactor {
    pub fn resolve(self, instance: &KnapsackInstance) -> f64 {
        match self {
            PenaltyFactor::Auto => 1.0 + instance.total_value() as f64,
            PenaltyFactor::Fixed(q) => q,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpsoConfig {
    pub num_particles: usize,
    pub max_iterations: usize,
    pub c1: f64,
    pub c2: f64,
    pub inertia_start: f64,
    pub inertia_end: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub penalty_q: PenaltyFactor,
    pub rng_seed: u64,
}

impl Default for BpsoConfig {
    fn default() -> Self {
        Self {
            num_particles: 300,
            max_iterations: 30,
            c1: 2.0,
            c2: 2.0,
            inertia_start: 0.9,
            inertia_end: 0.4,
            v_min: -6.0,
            v_max: 6.0,
            penalty_q: PenaltyFactor::Auto,
            rng_seed: 0,
        }
    }
}

impl BpsoConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), BpsoError> {
        let bad = |msg: &str| Err(BpsoError::InvalidConfig(msg.to_owned()));
        if self.num_particles < 1 {
            return bad("num_particles must be >= 1");
        }
        if self.max_iterations < 1 {
            return bad("max_iterations must be >= 1");
        }
        if self.v_min.partial_cmp(&self.v_max) != Some(std::cmp::Ordering::Less) {
            return bad("v_min must be < v_max");
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return bad("c1 and c2 must be > 0");
        }
        let in_range = |w: f64| (0.4..=0.9).contains(&w);
        if !(in_range(self.inertia_start) && in_range(self.inertia_end)) {
            return bad("inertia weights must lie in [0.4, 0.9]");
        }
        if self.inertia_start < self.inertia_end {
            return bad("inertia_start must be >= inertia_end");
        }
        if let PenaltyFactor::Fixed(q) = self.penalty_q {
            if !(q >= 0.0 && q.is_finite()) {
                return bad("penalty q must be a finite non-negative number");
            }
        }
        Ok(())
    }

    /// Inertia for 1-based iteration `t`, decaying linearly from start to end.
    pub fn inertia(&self, t: usize) -> f64 {
        if self.max_iterations <= 1 {
            return self.inertia_start;
        }
        let frac = (t.saturating_sub(1)) as f64 / (self.max_iterations - 1) as f64;
        self.inertia_start + (self.inertia_end - self.inertia_start) * frac.min(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub position: Vec<bool>,
    pub velocity: Vec<f64>,
    pub personal_best_position: Vec<bool>,
    pub personal_best_fitness: f64,
}

/// Full optimizer state between steps.
#[derive(Debug, Clone)]
pub struct Swarm {
    pub particles: Vec<Particle>,
    pub global_best_position: Vec<bool>,
    pub global_best_fitness: f64,
    penalty_q: f64,
    rngs: Vec<ChaCha8Rng>,
}

impl Swarm {
    pub fn penalty_q(&self) -> f64 {
        self.penalty_q
    }

    fn refresh_global_best(&mut self) {
        // Particle order decides ties, so the reduction is deterministic.
        for p in &self.particles {
            if p.personal_best_fitness > self.global_best_fitness {
                self.global_best_fitness = p.personal_best_fitness;
                self.global_best_position.clone_from(&p.personal_best_position);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwarmResult {
    pub best_position: Vec<bool>,
    pub best_fitness: f64,
    pub feasible: bool,
    /// The swarm's best was overweight and had items dropped to fit.
    pub repaired: bool,
    pub iterations_run: usize,
    /// Global best fitness after initialization (index 0) and after every step.
    pub fitness_trace: Vec<f64>,
}

impl SwarmResult {
    pub fn to_solution(&self, instance: &KnapsackInstance) -> KnapsackSolution {
        KnapsackSolution::from_selection(instance, self.best_position.clone())
    }
}

/// Penalized objective: total value minus `q` per KB of overweight.
pub fn fitness(position: &[bool], instance: &KnapsackInstance, penalty_q: f64) -> Result<f64, BpsoError> {
    if position.len() != instance.len() {
        return Err(BpsoError::DimensionMismatch { expected: instance.len(), got: position.len() });
    }
    Ok(penalized(position, instance, penalty_q))
}

fn penalized(position: &[bool], instance: &KnapsackInstance, q: f64) -> f64 {
    let (value, weight) = instance.evaluate(position);
    let overweight = weight.saturating_sub(instance.capacity());
    value as f64 - q * overweight as f64
}

fn particle_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn initialize_swarm(instance: &KnapsackInstance, config: &BpsoConfig) -> Result<Swarm, BpsoError> {
    config.validate()?;
    let dims = instance.len();
    let q = config.penalty_q.resolve(instance);
    let mut rngs: Vec<ChaCha8Rng> = (0..config.num_particles).map(|i| particle_rng(config.rng_seed, i)).collect();

    let particles = rngs
        .iter_mut()
        .map(|rng| {
            let position: Vec<bool> = (0..dims).map(|_| rng.random::<f64>() >= 0.5).collect();
            let velocity = (0..dims).map(|_| config.v_min + rng.random::<f64>() * (config.v_max - config.v_min)).collect();
            let f = penalized(&position, instance, q);
            Particle { personal_best_position: position.clone(), position, velocity, personal_best_fitness: f }
        })
        .collect();

    let mut swarm =
        Swarm { particles, global_best_position: vec![false; dims], global_best_fitness: f64::NEG_INFINITY, penalty_q: q, rngs };
    swarm.refresh_global_best();
    Ok(swarm)
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn move_particle(
    particle: &mut Particle,
    rng: &mut ChaCha8Rng,
    global_best: &[bool],
    inertia: f64,
    config: &BpsoConfig,
    instance: &KnapsackInstance,
    q: f64,
) {
    let bit = |b: bool| if b { 1.0 } else { 0.0 };
    #[allow(clippy::needless_range_loop)] // four parallel arrays share the index
    for d in 0..particle.position.len() {
        let x = bit(particle.position[d]);
        let r1: f64 = rng.random();
        let r2: f64 = rng.random();
        let v = inertia * particle.velocity[d]
            + config.c1 * r1 * (bit(particle.personal_best_position[d]) - x)
            + config.c2 * r2 * (bit(global_best[d]) - x);
        let v = v.clamp(config.v_min, config.v_max);
        particle.velocity[d] = v;
        particle.position[d] = rng.random::<f64>() < sigmoid(v);
    }
    let f = penalized(&particle.position, instance, q);
    if f > particle.personal_best_fitness {
        particle.personal_best_fitness = f;
        particle.personal_best_position.clone_from(&particle.position);
    }
}

/// Advances the swarm by one iteration (`t` is 1-based).
pub fn step(swarm: &mut Swarm, instance: &KnapsackInstance, config: &BpsoConfig, t: usize) -> Result<(), BpsoError> {
    if t < 1 || t > config.max_iterations {
        return Err(BpsoError::IterationOutOfRange { t, max: config.max_iterations });
    }
    step_with_inertia(swarm, instance, config, config.inertia(t));
    Ok(())
}

/// One iteration with an explicit inertia weight, bypassing the schedule.
pub fn step_with_inertia(swarm: &mut Swarm, instance: &KnapsackInstance, config: &BpsoConfig, inertia: f64) {
    let q = swarm.penalty_q;
    let global_best = swarm.global_best_position.clone();
    let work = swarm.particles.len() * instance.len();
    let pairs = swarm.particles.iter_mut().zip(swarm.rngs.iter_mut());
    if work >= PARALLEL_WORK_THRESHOLD {
        pairs.collect::<Vec<_>>().into_par_iter().for_each(|(p, rng)| move_particle(p, rng, &global_best, inertia, config, instance, q));
    } else {
        pairs.for_each(|(p, rng)| move_particle(p, rng, &global_best, inertia, config, instance, q));
    }
    swarm.refresh_global_best();
}

/// Drops selected items, least dense first, until the selection fits.
pub fn repair(position: &mut [bool], instance: &KnapsackInstance) -> bool {
    let (_, mut weight) = instance.evaluate(position);
    if weight <= instance.capacity() {
        return false;
    }
    let items = instance.items();
    let mut selected: Vec<usize> = (0..items.len()).filter(|&i| position[i]).collect();
    selected.sort_by(|&a, &b| compare_density(&items[a], &items[b]).then_with(|| items[b].id.cmp(&items[a].id)));
    for i in selected {
        if weight <= instance.capacity() {
            break;
        }
        position[i] = false;
        weight -= items[i].weight;
    }
    true
}

pub fn solve(instance: &KnapsackInstance, config: &BpsoConfig) -> Result<SwarmResult, BpsoError> {
    let mut swarm = initialize_swarm(instance, config)?;
    let mut trace = Vec::with_capacity(config.max_iterations + 1);
    trace.push(swarm.global_best_fitness);
    for t in 1..=config.max_iterations {
        step(&mut swarm, instance, config, t)?;
        trace.push(swarm.global_best_fitness);
    }

    let mut best_position = swarm.global_best_position;
    let repaired = repair(&mut best_position, instance);
    let best_fitness = penalized(&best_position, instance, swarm.penalty_q);
    Ok(SwarmResult { best_position, best_fitness, feasible: true, repaired, iterations_run: config.max_iterations, fitness_trace: trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knapsack::{solve_exact_dp, solve_exhaustive};
    use proptest::prelude::*;

    fn small_config(seed: u64) -> BpsoConfig {
        BpsoConfig { num_particles: 20, max_iterations: 10, ..BpsoConfig::default() }.with_seed(seed)
    }

    #[test]
    fn fitness_hand_values() {
        let inst = KnapsackInstance::from_pairs(&[(10, 5)], 10).unwrap();
        assert_eq!(fitness(&[true], &inst, 100.0), Ok(5.0));
        assert_eq!(fitness(&[false], &inst, 100.0), Ok(0.0));
        let tight = KnapsackInstance::from_pairs(&[(10, 5)], 8).unwrap();
        assert_eq!(fitness(&[true], &tight, 100.0), Ok(-195.0));
        assert_eq!(fitness(&[true, false], &tight, 1.0), Err(BpsoError::DimensionMismatch { expected: 1, got: 2 }));
    }

    #[test]
    fn empty_instance_solves_to_zero() {
        let inst = KnapsackInstance::from_pairs(&[], 0).unwrap();
        let swarm = initialize_swarm(&inst, &small_config(1)).unwrap();
        assert!(swarm.particles.iter().all(|p| p.position.is_empty()));
        assert_eq!(swarm.global_best_fitness, 0.0);
        let res = solve(&inst, &small_config(1)).unwrap();
        assert_eq!(res.best_fitness, 0.0);
        assert!(res.feasible);
    }

    #[test]
    fn single_item_optimum() {
        let inst = KnapsackInstance::from_pairs(&[(5, 255)], 5).unwrap();
        let res = solve(&inst, &BpsoConfig::default().with_seed(3)).unwrap();
        assert_eq!(res.best_position, solve_exhaustive(&inst).unwrap().selection);
        assert_eq!(res.best_fitness, 255.0);
    }

    #[test]
    fn initialization_is_deterministic() {
        let inst = KnapsackInstance::from_pairs(&[(1, 1), (2, 2), (3, 3), (4, 4), (5, 5)], 7).unwrap();
        let cfg = BpsoConfig { num_particles: 3, ..BpsoConfig::default() }.with_seed(99);
        let a = initialize_swarm(&inst, &cfg).unwrap();
        let b = initialize_swarm(&inst, &cfg).unwrap();
        assert_eq!(a.particles, b.particles);
        assert_eq!(a.global_best_position, b.global_best_position);
    }

    #[test]
    fn initial_bits_are_fair_coins() {
        let pairs = vec![(1, 1); 50];
        let inst = KnapsackInstance::from_pairs(&pairs, 25).unwrap();
        let swarm = initialize_swarm(&inst, &BpsoConfig::default().with_seed(5)).unwrap();
        let ones: usize = swarm.particles.iter().map(|p| p.position.iter().filter(|&&b| b).count()).sum();
        let mean = ones as f64 / (300.0 * 50.0);
        // sd of the mean is 0.5 / sqrt(15000) ~ 0.004
        assert!((0.45..=0.55).contains(&mean), "mean {mean}");
        for p in &swarm.particles {
            assert!(p.velocity.iter().all(|v| (-6.0..=6.0).contains(v)));
        }
    }

    #[test]
    fn zero_velocity_step_samples_half_bits() {
        let pairs = vec![(1, 1); 64];
        let inst = KnapsackInstance::from_pairs(&pairs, 64).unwrap();
        let cfg = BpsoConfig { num_particles: 200, c1: f64::MIN_POSITIVE, c2: f64::MIN_POSITIVE, ..BpsoConfig::default() }.with_seed(8);
        let mut swarm = initialize_swarm(&inst, &cfg).unwrap();
        let g = swarm.global_best_position.clone();
        for p in &mut swarm.particles {
            p.position.clone_from(&g);
            p.personal_best_position.clone_from(&g);
            p.velocity.iter_mut().for_each(|v| *v = 0.0);
        }
        step_with_inertia(&mut swarm, &inst, &cfg, 0.0);
        assert!(swarm.particles.iter().all(|p| p.velocity.iter().all(|&v| v == 0.0)));
        let ones: usize = swarm.particles.iter().map(|p| p.position.iter().filter(|&&b| b).count()).sum();
        let frac = ones as f64 / (200.0 * 64.0);
        // sigmoid(0) = 0.5; 3 sd of the mean ~ 0.013
        assert!((frac - 0.5).abs() < 0.015, "frac {frac}");
    }

    #[test]
    fn step_rejects_out_of_range_iteration() {
        let inst = KnapsackInstance::from_pairs(&[(1, 1)], 1).unwrap();
        let cfg = small_config(0);
        let mut swarm = initialize_swarm(&inst, &cfg).unwrap();
        assert!(step(&mut swarm, &inst, &cfg, 0).is_err());
        assert!(step(&mut swarm, &inst, &cfg, 11).is_err());
    }

    #[test]
    fn auto_penalty_dominates() {
        let inst = KnapsackInstance::from_pairs(&[(10, 255), (10, 255), (10, 255)], 20).unwrap();
        let q = PenaltyFactor::Auto.resolve(&inst);
        assert_eq!(q, 766.0);
        assert!(fitness(&[true, true, true], &inst, q).unwrap() < 0.0);
    }

    #[test]
    fn repair_drops_least_dense() {
        let inst = KnapsackInstance::from_pairs(&[(10, 100), (10, 10), (10, 50)], 20).unwrap();
        let mut pos = vec![true, true, true];
        assert!(repair(&mut pos, &inst));
        assert_eq!(pos, vec![true, false, true]);
        assert!(!repair(&mut pos, &inst));
    }

    #[test]
    fn inertia_schedule_endpoints() {
        let cfg = BpsoConfig::default();
        assert_eq!(cfg.inertia(1), 0.9);
        assert!((cfg.inertia(30) - 0.4).abs() < 1e-12);
        assert!(cfg.inertia(15) < 0.9 && cfg.inertia(15) > 0.4);
    }

    #[test]
    fn config_validation() {
        let ok = BpsoConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            BpsoConfig { num_particles: 0, ..ok.clone() },
            BpsoConfig { max_iterations: 0, ..ok.clone() },
            BpsoConfig { v_min: 6.0, ..ok.clone() },
            BpsoConfig { c1: 0.0, ..ok.clone() },
            BpsoConfig { inertia_start: 0.95, ..ok.clone() },
            BpsoConfig { inertia_start: 0.5, inertia_end: 0.6, ..ok.clone() },
            BpsoConfig { penalty_q: PenaltyFactor::Fixed(-1.0), ..ok.clone() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    fn instance_strategy() -> impl Strategy<Value = KnapsackInstance> {
        prop::collection::vec((1u64..200, 1u32..=255), 0..14).prop_flat_map(|pairs| {
            let total: u64 = pairs.iter().map(|p| p.0).sum();
            (Just(pairs), 0..=total).prop_map(|(pairs, cap)| KnapsackInstance::from_pairs(&pairs, cap).unwrap())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn solve_invariants(inst in instance_strategy(), seed in any::<u64>()) {
            let cfg = small_config(seed);
            let res = solve(&inst, &cfg).unwrap();
            prop_assert!(res.fitness_trace.windows(2).all(|w| w[0] <= w[1]));
            let sol = res.to_solution(&inst);
            prop_assert!(sol.is_feasible(&inst));
            prop_assert!(sol.total_value <= solve_exact_dp(&inst).unwrap().total_value);
            prop_assert_eq!(res.best_fitness, sol.total_value as f64);
            prop_assert_eq!(&res, &solve(&inst, &cfg).unwrap());
        }

        #[test]
        fn steps_keep_velocity_clamped_and_best_monotone(inst in instance_strategy(), seed in any::<u64>()) {
            let cfg = small_config(seed);
            let mut swarm = initialize_swarm(&inst, &cfg).unwrap();
            for t in 1..=cfg.max_iterations {
                let before = swarm.global_best_fitness;
                step(&mut swarm, &inst, &cfg, t).unwrap();
                prop_assert!(swarm.global_best_fitness >= before);
                for p in &swarm.particles {
                    prop_assert!(p.velocity.iter().all(|v| (cfg.v_min..=cfg.v_max).contains(v)));
                    prop_assert_eq!(p.personal_best_fitness, fitness(&p.personal_best_position, &inst, swarm.penalty_q()).unwrap());
                }
            }
        }

        #[test]
        fn auto_penalty_puts_infeasible_below_empty(inst in instance_strategy(), bits in prop::collection::vec(any::<bool>(), 14)) {
            let pos = &bits[..inst.len()];
            let q = PenaltyFactor::Auto.resolve(&inst);
            let (_, w) = inst.evaluate(pos);
            if w > inst.capacity() {
                prop_assert!(fitness(pos, &inst, q).unwrap() < 0.0);
            }
        }
    }
}
