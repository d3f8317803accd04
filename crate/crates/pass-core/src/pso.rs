//! Bounded particle swarm optimizer with penalty-based constraint handling.
//!
//! Plain global-best PSO: velocities blend inertia, a pull toward each
//! particle's personal best, and a pull toward the swarm's global best,
//!
//! ```text
//! v <- alpha*v + c1*b1*(x_pbest - x) + c2*b2*(x_gbest - x)
//! x <- x + v
//! ```
//!
//! with `b1, b2 ~ U[0,1]` drawn fresh per particle per iteration from a seeded
//! RNG. Positions are clamped to the search box and velocities to a fraction
//! of its width. The optimizer maximizes the supplied fitness; constraint
//! pressure comes from penalty terms inside the fitness (see
//! [`spacing_penalty`] for the PA-position constraints).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Swarm-level knobs. The penalty weights `xi` (performance shortfall) and
/// `eta` (position constraints) are carried here for the callers that build
/// penalized fitness functions; the optimizer itself never reads them.
#[derive(Debug, Clone, PartialEq)]
pub struct PsoHyperparams {
    /// Swarm size I.
    pub swarm_size: usize,
    /// Iteration budget T.
    pub max_iters: usize,
    /// Inertia weight alpha.
    pub inertia: f64,
    /// Cognitive learning factor c1.
    pub cognitive: f64,
    /// Social learning factor c2.
    pub social: f64,
    /// Performance-penalty weight xi.
    pub penalty_perf: f64,
    /// Position-penalty weight eta.
    pub penalty_pos: f64,
    /// Velocity cap as a fraction of the search-range width.
    pub v_max_frac: f64,
}

impl Default for PsoHyperparams {
    fn default() -> Self {
        Self {
            swarm_size: 50,
            max_iters: 300,
            inertia: 0.72,
            cognitive: 1.49,
            social: 1.49,
            penalty_perf: 1e3,
            penalty_pos: 1e3,
            v_max_frac: 0.2,
        }
    }
}

impl PsoHyperparams {
    fn validate(&self) {
        assert!(self.swarm_size >= 2, "swarm size must be >= 2");
        assert!(self.max_iters >= 1, "need at least one iteration");
        assert!((0.0..=1.0).contains(&self.inertia), "inertia in [0,1]");
        assert!(self.cognitive >= 0.0 && self.social >= 0.0);
        assert!(self.penalty_perf >= 0.0 && self.penalty_pos >= 0.0);
        assert!(self.v_max_frac > 0.0);
    }
}

/// Outcome of one swarm run.
#[derive(Debug, Clone)]
pub struct PsoResult {
    pub best_position: Vec<f64>,
    pub best_fitness: f64,
    /// Global-best fitness after the initial evaluation and after each
    /// iteration (length `max_iters + 1`, monotonically non-decreasing).
    pub history: Vec<f64>,
}

/// Maximize `fitness` over `[lo, hi]^dim`.
///
/// `seeds` pre-places the first particles (warm starts); remaining particles
/// are drawn uniformly from the box. Identical arguments and seed produce a
/// bit-identical result.
pub fn pso_optimize<F: Fn(&[f64]) -> f64>(
    fitness: F,
    dim: usize,
    bounds: (f64, f64),
    hp: &PsoHyperparams,
    seeds: &[Vec<f64>],
    rng_seed: u64,
) -> PsoResult {
    hp.validate();
    let (lo, hi) = bounds;
    assert!(hi > lo, "empty search box");
    assert!(dim >= 1);
    let range = hi - lo;
    let v_max = hp.v_max_frac * range;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);

    let clamp = |x: f64| x.clamp(lo, hi);
    let mut positions: Vec<Vec<f64>> = Vec::with_capacity(hp.swarm_size);
    for s in seeds.iter().take(hp.swarm_size) {
        assert_eq!(s.len(), dim, "seed particle dimension mismatch");
        positions.push(s.iter().map(|&x| clamp(x)).collect());
    }
    while positions.len() < hp.swarm_size {
        positions.push((0..dim).map(|_| rng.random_range(lo..=hi)).collect());
    }
    let mut velocities: Vec<Vec<f64>> = (0..hp.swarm_size)
        .map(|_| (0..dim).map(|_| rng.random_range(-v_max..=v_max)).collect())
        .collect();

    let mut pbest = positions.clone();
    let mut pbest_fit: Vec<f64> = positions.iter().map(|x| fitness(x)).collect();
    let mut gbest_idx = 0;
    for i in 1..hp.swarm_size {
        if pbest_fit[i] > pbest_fit[gbest_idx] {
            gbest_idx = i;
        }
    }
    let mut gbest = pbest[gbest_idx].clone();
    let mut gbest_fit = pbest_fit[gbest_idx];
    let mut history = Vec::with_capacity(hp.max_iters + 1);
    history.push(gbest_fit);

    for _ in 0..hp.max_iters {
        for i in 0..hp.swarm_size {
            let b1: f64 = rng.random_range(0.0..=1.0);
            let b2: f64 = rng.random_range(0.0..=1.0);
            for d in 0..dim {
                let v = hp.inertia * velocities[i][d]
                    + hp.cognitive * b1 * (pbest[i][d] - positions[i][d])
                    + hp.social * b2 * (gbest[d] - positions[i][d]);
                velocities[i][d] = v.clamp(-v_max, v_max);
                positions[i][d] = clamp(positions[i][d] + velocities[i][d]);
            }
            let f = fitness(&positions[i]);
            if f > pbest_fit[i] {
                pbest_fit[i] = f;
                pbest[i].clone_from(&positions[i]);
                if f > gbest_fit {
                    gbest_fit = f;
                    gbest.clone_from(&positions[i]);
                }
            }
        }
        history.push(gbest_fit);
    }

    PsoResult {
        best_position: gbest,
        best_fitness: gbest_fit,
        history,
    }
}

/// Aggregate violation of the PA position constraints for a flat coordinate
/// vector grouped by waveguide.
///
/// Within each group the coordinates are sorted ascending first (particles
/// are unordered; sorting canonicalizes), then each consecutive gap short of
/// `delta` contributes its deficit, and every coordinate outside `[lo, hi]`
/// contributes its overshoot. Zero iff the sorted layout is feasible.
pub fn spacing_penalty(x: &[f64], delta: f64, group_sizes: &[usize], lo: f64, hi: f64) -> f64 {
    let total: usize = group_sizes.iter().sum();
    assert_eq!(x.len(), total, "group sizes must cover the position vector");
    let mut penalty = 0.0;
    let mut offset = 0;
    for &n in group_sizes {
        let mut group: Vec<f64> = x[offset..offset + n].to_vec();
        offset += n;
        group.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for w in group.windows(2) {
            penalty += (delta - (w[1] - w[0])).max(0.0);
        }
        for &c in &group {
            penalty += (c - hi).max(0.0) + (lo - c).max(0.0);
        }
    }
    penalty
}
