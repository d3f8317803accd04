//! SE-EE tradeoff curves by the epsilon-constraint method.
//!
//! For each sum-rate target on a uniform grid between the QoS floor and the
//! protocol's feasibility boundary, the minimum transmit power is computed by
//! the protocol solver and the energy efficiency is reported with the RF-chain
//! circuit power reinstated. Points past the boundary are kept in the curve
//! and flagged infeasible rather than dropped.

use rayon::prelude::*;

use crate::channel::{PinchingLayout, SystemConfig, UserSet};
use crate::convex::SolveError;
use crate::seed;
use crate::wm::{solve_wm, solve_wm_fixed_layout, WmSolution};
use crate::ws::solve_ws;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Protocol {
    /// Waveguide multiplexing: all waveguides concurrently active.
    Wm,
    /// Waveguide switching: one active waveguide per time slot.
    Ws,
    /// Conventional antenna: arrays frozen at the feed points, baseband only.
    Baseline,
}

impl Protocol {
    pub fn tag(&self) -> &'static str {
        match self {
            Protocol::Wm => "wm",
            Protocol::Ws => "ws",
            Protocol::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffPoint {
    /// Sum-rate target eps_SE, bit/s/Hz.
    pub target_se: f64,
    /// Achieved sum rate at the power minimum, bit/s/Hz.
    pub achieved_se: f64,
    /// Minimum transmit power, W (NaN when infeasible).
    pub power_w: f64,
    /// Energy efficiency with circuit power included, bit/s/Hz/W.
    pub ee: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffCurve {
    pub protocol: Protocol,
    pub points: Vec<TradeoffPoint>,
    pub grid_size: usize,
    pub seed: u64,
}

impl TradeoffCurve {
    pub fn feasible_points(&self) -> impl Iterator<Item = &TradeoffPoint> {
        self.points.iter().filter(|p| p.feasible)
    }
}

/// Solve one protocol at one target; returns (achieved SE, power, EE).
pub fn solve_protocol(
    protocol: Protocol,
    users: &UserSet,
    cfg: &SystemConfig,
    eps_se: f64,
    seed: u64,
) -> Result<(f64, f64, f64), SolveError> {
    match protocol {
        Protocol::Wm => solve_wm(users, cfg, eps_se, seed).map(|s| (s.se, s.power, s.ee)),
        Protocol::Ws => solve_ws(users, cfg, eps_se).map(|s| (s.se, s.total_power, s.ee)),
        Protocol::Baseline => {
            baseline_conventional(users, cfg, eps_se, seed).map(|s| (s.se, s.power, s.ee))
        }
    }
}

/// Conventional-antenna reference: each waveguide's PAs are frozen as a
/// half-wavelength array at the feed end and only the baseband beams are
/// optimized, isolating the gain of pinching placement.
pub fn baseline_conventional(
    users: &UserSet,
    cfg: &SystemConfig,
    eps_se: f64,
    seed: u64,
) -> Result<WmSolution, SolveError> {
    let layout = baseline_layout(cfg)?;
    solve_wm_fixed_layout(users, cfg, eps_se, &layout, seed)
}

/// Feed-clustered array: `x_{m,n} = -L/2 + (n-1) * lambda/2` on every waveguide.
pub fn baseline_layout(cfg: &SystemConfig) -> Result<PinchingLayout, SolveError> {
    let start = -cfg.half_len();
    let step = cfg.lambda() / 2.0;
    let block: Vec<f64> = (0..cfg.pas_per_wg)
        .map(|n| start + n as f64 * step)
        .collect();
    PinchingLayout::new(vec![block; cfg.num_waveguides], cfg)
        .map_err(|e| SolveError::NumericalFailure(format!("baseline layout invalid: {e}")))
}

/// Interference-free full-power upper bound on the achievable sum rate, used
/// only to bracket the feasibility bisection.
fn se_upper_bound(protocol: Protocol, cfg: &SystemConfig) -> f64 {
    let eta = cfg.sqrt_eta() * cfg.sqrt_eta();
    let h2 = cfg.height * cfg.height;
    let k = cfg.num_users as f64;
    let m = cfg.num_waveguides as f64;
    let n = cfg.pas_per_wg as f64;
    match protocol {
        Protocol::Wm | Protocol::Baseline => {
            // Per user: all power, zero interference, M-fold beamforming gain
            // over phase-aligned N-PA waveguides at the minimum distance H.
            k * (1.0 + cfg.max_power * m * (n * n) * eta / (h2 * cfg.noise_power)).log2()
        }
        Protocol::Ws => {
            // Single slot: M*N aligned PAs, power split across them.
            (1.0 + cfg.max_power * m * n * eta / (h2 * cfg.noise_power)).log2()
        }
    }
}

/// Locate the feasibility boundary of the sum-rate target by bisection.
///
/// Returns a target that solved successfully while `value + 0.05` did not;
/// errors with `Infeasible` when even the QoS floor cannot be served.
pub fn find_se_max(
    protocol: Protocol,
    users: &UserSet,
    cfg: &SystemConfig,
    rng_seed: u64,
) -> Result<f64, SolveError> {
    let floor: f64 = cfg.per_user_min_rates().iter().sum();
    let mut calls = 0u64;
    let mut feasible = |eps: f64| -> bool {
        calls += 1;
        solve_protocol(protocol, users, cfg, eps, seed::derive(rng_seed, 0xb15ec7, calls)).is_ok()
    };
    if !feasible(floor) {
        return Err(SolveError::Infeasible);
    }
    let mut lo = floor;
    let mut hi = se_upper_bound(protocol, cfg).max(floor + 0.1);
    let mut guard = 0;
    while feasible(hi) {
        guard += 1;
        if guard > 16 {
            return Ok(hi);
        }
        hi = floor + 2.0 * (hi - floor);
    }
    while hi - lo > 0.05 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Sweep the sum-rate target over a uniform grid from the QoS floor to the
/// feasibility boundary; points are solved independently (and in parallel)
/// with per-point seeds derived from the sweep seed and the grid index.
pub fn sweep(
    protocol: Protocol,
    users: &UserSet,
    cfg: &SystemConfig,
    grid_size: usize,
    rng_seed: u64,
) -> TradeoffCurve {
    assert!(grid_size >= 1);
    let floor: f64 = cfg.per_user_min_rates().iter().sum();
    let hi = match find_se_max(protocol, users, cfg, rng_seed) {
        Ok(v) => v,
        // Even the floor is infeasible: emit a flagged grid anyway.
        Err(_) => floor + 1.0,
    };
    let grid: Vec<f64> = if grid_size == 1 {
        vec![floor]
    } else {
        (0..grid_size)
            .map(|i| floor + (hi - floor) * i as f64 / (grid_size as f64 - 1.0))
            .collect()
    };
    let points: Vec<TradeoffPoint> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &eps)| {
            match solve_protocol(protocol, users, cfg, eps, seed::derive(rng_seed, i as u64, 1)) {
                Ok((se, power, ee)) => TradeoffPoint {
                    target_se: eps,
                    achieved_se: se,
                    power_w: power,
                    ee,
                    feasible: true,
                },
                Err(_) => TradeoffPoint {
                    target_se: eps,
                    achieved_se: f64::NAN,
                    power_w: f64::NAN,
                    ee: f64::NAN,
                    feasible: false,
                },
            }
        })
        .collect();
    TradeoffCurve {
        protocol,
        points,
        grid_size,
        seed: rng_seed,
    }
}
