//! Waveguide-multiplexing solver: minimize transmit power for a target sum
//! rate by alternating between baseband beamforming (lifted convex subproblem
//! iterated to a fixed point, then rank-one extraction) and pinching
//! beamforming (penalized particle swarm over the PA coordinates).
//!
//! The alternation carries a monotonicity guard: a candidate layout is
//! accepted only if the baseband re-solve on it does not increase power, so
//! the accepted-iterate power trace never rises.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{
    channel_matrix, channel_matrix_raw, ChannelMatrix, PinchingLayout, SystemConfig, UserSet,
};
use crate::convex::{
    extract_rank_one, gaussian_randomization, hermitian_trace, powers_for_directions,
    solve_qos_power_min, solve_sdp_subproblem, SdpProblem, SolveError,
};
use crate::pso::{pso_optimize, spacing_penalty, PsoHyperparams};

/// Relative transmit-power improvement below which the alternation stops.
const AO_REL_TOL: f64 = 1e-4;
/// Relative objective decrease below which the lifted iteration stops.
const SCA_REL_TOL: f64 = 1e-5;
const SCA_MAX_ITERS: usize = 30;
const AO_MAX_ROUNDS: usize = 10;
const LAYOUT_RESTARTS: usize = 3;
/// Certification slack on rates (bit/s/Hz).
const RATE_TOL: f64 = 1e-6;

/// Feasible outcome of one waveguide-multiplexing solve.
#[derive(Debug, Clone)]
pub struct WmSolution {
    pub layout: PinchingLayout,
    /// Per-user baseband vectors w_k across the M waveguide feeds.
    pub beams: Vec<Vec<Complex64>>,
    /// Exact per-user rates recomputed from (layout, beams).
    pub rates: Vec<f64>,
    pub se: f64,
    /// Total transmit power sum_k ||w_k||^2, W.
    pub power: f64,
    /// SE / (power + K * P_RF).
    pub ee: f64,
    /// Accepted-iterate transmit power per alternation round.
    pub ao_power_trace: Vec<f64>,
    /// Smallest rank-one tightness across users in the final baseband solve.
    pub min_tightness: f64,
}

/// Exact per-user achievable rates under given beams.
pub fn wm_rates(channels: &ChannelMatrix, beams: &[Vec<Complex64>], noise: f64) -> Vec<f64> {
    let k_users = channels.num_users();
    (0..k_users)
        .map(|k| {
            let h = channels.row(k);
            let signal = beam_gain(h, &beams[k]);
            let interference: f64 = (0..k_users)
                .filter(|&i| i != k)
                .map(|i| beam_gain(h, &beams[i]))
                .sum();
            (1.0 + signal / (interference + noise)).log2()
        })
        .collect()
}

fn beam_gain(h: &[Complex64], w: &[Complex64]) -> f64 {
    h.iter()
        .zip(w)
        .map(|(a, b)| a.conj() * b)
        .sum::<Complex64>()
        .norm_sqr()
}

/// Sum rate over users.
pub fn wm_se(rates: &[f64]) -> f64 {
    rates.iter().sum()
}

/// Energy efficiency: SE over transmit power plus K active RF chains.
pub fn wm_ee(se: f64, beams: &[Vec<Complex64>], cfg: &SystemConfig) -> f64 {
    let power = beams_power(beams);
    se / (power + cfg.num_users as f64 * cfg.rf_chain_power)
}

pub fn beams_power(beams: &[Vec<Complex64>]) -> f64 {
    beams
        .iter()
        .map(|w| w.iter().map(|z| z.norm_sqr()).sum::<f64>())
        .sum()
}

/// Penalized swarm fitness of a candidate flat PA coordinate vector at fixed
/// beams: sum rate minus `xi` times the QoS/sum-rate shortfalls and `eta`
/// times the spacing/bounds violations. Coordinates are canonicalized by
/// per-waveguide sorting before the channel is evaluated.
pub fn pinching_fitness(
    x_flat: &[f64],
    beams: &[Vec<Complex64>],
    users: &UserSet,
    cfg: &SystemConfig,
    eps_se: f64,
    xi: f64,
    eta: f64,
) -> f64 {
    let groups = wm_group_sizes(cfg);
    let per_wg = group_sorted(x_flat, &groups);
    let channels = channel_matrix_raw(users.positions(), &per_wg, cfg);
    let rates = wm_rates(&channels, beams, cfg.noise_power);
    let se = wm_se(&rates);
    let shortfall: f64 = rates
        .iter()
        .map(|r| (cfg.min_rate - r).max(0.0))
        .sum::<f64>()
        + (eps_se - se).max(0.0);
    let spacing = spacing_penalty(
        x_flat,
        cfg.min_pa_spacing,
        &groups,
        -cfg.half_len(),
        cfg.half_len(),
    );
    se - xi * shortfall - eta * spacing
}

fn wm_group_sizes(cfg: &SystemConfig) -> Vec<usize> {
    vec![cfg.pas_per_wg; cfg.num_waveguides]
}

fn group_sorted(x_flat: &[f64], groups: &[usize]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(groups.len());
    let mut off = 0;
    for &n in groups {
        let mut g = x_flat[off..off + n].to_vec();
        g.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.push(g);
        off += n;
    }
    out
}

/// Project a flat coordinate vector onto the feasible layout set: sort each
/// waveguide group, then push left-to-right to enforce the minimum spacing
/// while clamping so the tail still fits inside the region.
pub fn repair_layout(x_flat: &[f64], cfg: &SystemConfig) -> Result<PinchingLayout, SolveError> {
    let groups = wm_group_sizes(cfg);
    repair_grouped(x_flat, &groups, cfg)
}

pub(crate) fn repair_grouped(
    x_flat: &[f64],
    groups: &[usize],
    cfg: &SystemConfig,
) -> Result<PinchingLayout, SolveError> {
    let lo = -cfg.half_len();
    let hi = cfg.half_len();
    let delta = cfg.min_pa_spacing;
    let mut per_wg = group_sorted(x_flat, groups);
    for g in &mut per_wg {
        let n = g.len();
        let span = (n as f64 - 1.0) * delta;
        if span > hi - lo {
            return Err(SolveError::NumericalFailure(format!(
                "{n} PAs at spacing {delta} exceed the region width"
            )));
        }
        g[0] = g[0].clamp(lo, hi - span);
        for i in 1..n {
            let tail = (n - 1 - i) as f64 * delta;
            g[i] = g[i].max(g[i - 1] + delta).min(hi - tail);
        }
    }
    PinchingLayout::new(per_wg, cfg)
        .map_err(|e| SolveError::NumericalFailure(format!("repair produced invalid layout: {e}")))
}

/// Warm-start layout: every waveguide gets its PA block centered on the median
/// user x-coordinate at minimum spacing.
pub fn initial_layout(users: &UserSet, cfg: &SystemConfig) -> PinchingLayout {
    let mut xs: Vec<f64> = users.positions().iter().map(|u| u.x).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if xs.len() % 2 == 1 {
        xs[xs.len() / 2]
    } else {
        0.5 * (xs[xs.len() / 2 - 1] + xs[xs.len() / 2])
    };
    let n = cfg.pas_per_wg;
    let block: Vec<f64> = (0..n)
        .map(|i| median + (i as f64 - (n as f64 - 1.0) / 2.0) * cfg.min_pa_spacing)
        .collect();
    let flat: Vec<f64> = block
        .iter()
        .cycle()
        .take(n * cfg.num_waveguides)
        .copied()
        .collect();
    repair_grouped(&flat, &wm_group_sizes(cfg), cfg).expect("desk-scale block fits the region")
}

fn random_layout<R: Rng>(rng: &mut R, cfg: &SystemConfig) -> PinchingLayout {
    let d = cfg.num_waveguides * cfg.pas_per_wg;
    let half = cfg.half_len();
    let flat: Vec<f64> = (0..d).map(|_| rng.random_range(-half..half)).collect();
    repair_grouped(&flat, &wm_group_sizes(cfg), cfg).expect("desk-scale block fits the region")
}

#[derive(Debug, Clone)]
struct BasebandResult {
    beams: Vec<Vec<Complex64>>,
    rates: Vec<f64>,
    se: f64,
    power: f64,
    min_tightness: f64,
}

/// Solve the waveguide-multiplexing problem at one sum-rate target.
pub fn solve_wm(
    users: &UserSet,
    cfg: &SystemConfig,
    eps_se: f64,
    seed: u64,
) -> Result<WmSolution, SolveError> {
    solve_wm_with(users, cfg, eps_se, seed, &PsoHyperparams::default(), AO_MAX_ROUNDS)
}

/// [`solve_wm`] with explicit swarm settings and alternation budget.
pub fn solve_wm_with(
    users: &UserSet,
    cfg: &SystemConfig,
    eps_se: f64,
    seed: u64,
    hp: &PsoHyperparams,
    max_rounds: usize,
) -> Result<WmSolution, SolveError> {
    let floor_se: f64 = cfg.per_user_min_rates().iter().sum();
    let eps_se = eps_se.max(floor_se);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut layout = initial_layout(users, cfg);
    let mut baseband = None;
    for restart in 0..LAYOUT_RESTARTS {
        if restart > 0 {
            layout = random_layout(&mut rng, cfg);
        }
        match solve_baseband(&layout, users, cfg, eps_se, &mut rng) {
            Ok(bb) => {
                baseband = Some(bb);
                break;
            }
            Err(_) => continue,
        }
    }
    let mut bb = baseband.ok_or(SolveError::Infeasible)?;
    let mut trace = vec![bb.power];
    let mut best: (BasebandResult, PinchingLayout) = (bb.clone(), layout.clone());

    let dim = cfg.num_waveguides * cfg.pas_per_wg;
    for _ in 0..max_rounds {
        let beams = bb.beams.clone();
        let fitness = |x: &[f64]| {
            pinching_fitness(x, &beams, users, cfg, eps_se, hp.penalty_perf, hp.penalty_pos)
        };
        let mut seeds = vec![layout.flat()];
        for _ in 1..hp.swarm_size {
            seeds.push(random_layout(&mut rng, cfg).flat());
        }
        let pso_seed = rng.random::<u64>();
        let swarm = pso_optimize(
            fitness,
            dim,
            (-cfg.half_len(), cfg.half_len()),
            hp,
            &seeds,
            pso_seed,
        );
        let cand = repair_layout(&swarm.best_position, cfg)?;
        if cand == layout {
            break;
        }
        match solve_baseband(&cand, users, cfg, eps_se, &mut rng) {
            Ok(nb) if nb.power <= bb.power * (1.0 + 1e-12) => {
                let improve = (bb.power - nb.power) / bb.power.max(f64::MIN_POSITIVE);
                layout = cand;
                bb = nb;
                trace.push(bb.power);
                if bb.power < best.0.power {
                    best = (bb.clone(), layout.clone());
                }
                if improve < AO_REL_TOL {
                    break;
                }
            }
            _ => break,
        }
    }

    let (bb, layout) = best;
    let ee = wm_ee(bb.se, &bb.beams, cfg);
    Ok(WmSolution {
        layout,
        beams: bb.beams,
        rates: bb.rates,
        se: bb.se,
        power: bb.power,
        ee,
        ao_power_trace: trace,
        min_tightness: bb.min_tightness,
    })
}

/// Baseband-only solve on a frozen layout (no pinching optimization); used by
/// the conventional-antenna reference and the alternation's inner step.
pub fn solve_wm_fixed_layout(
    users: &UserSet,
    cfg: &SystemConfig,
    eps_se: f64,
    layout: &PinchingLayout,
    seed: u64,
) -> Result<WmSolution, SolveError> {
    let floor_se: f64 = cfg.per_user_min_rates().iter().sum();
    let eps_se = eps_se.max(floor_se);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bb = solve_baseband(layout, users, cfg, eps_se, &mut rng)?;
    let ee = wm_ee(bb.se, &bb.beams, cfg);
    Ok(WmSolution {
        layout: layout.clone(),
        beams: bb.beams.clone(),
        rates: bb.rates.clone(),
        se: bb.se,
        power: bb.power,
        ee,
        ao_power_trace: vec![bb.power],
        min_tightness: bb.min_tightness,
    })
}

fn solve_baseband<R: Rng>(
    layout: &PinchingLayout,
    users: &UserSet,
    cfg: &SystemConfig,
    eps_se: f64,
    rng: &mut R,
) -> Result<BasebandResult, SolveError> {
    let channels = channel_matrix(users, layout, cfg);
    let gamma = cfg.per_user_min_rates();
    let noise = cfg.noise_power;

    let w0 = match solve_qos_power_min(&channels, &gamma, cfg.max_power, noise) {
        Ok(w0) => w0,
        Err(SolveError::Infeasible) => return Err(SolveError::Infeasible),
        Err(_) => mrt_expansion(&channels, &gamma, cfg).ok_or(SolveError::Infeasible)?,
    };
    let matrices = sca_solve(&channels, w0, &gamma, eps_se, cfg, 0)?;
    extract_beams(&channels, &matrices, &gamma, eps_se, cfg, rng)
}

/// Maximum-ratio rank-one expansion scaled to meet the QoS floors; fallback
/// when the exact QoS solve fails numerically.
fn mrt_expansion(
    channels: &ChannelMatrix,
    gamma: &[f64],
    cfg: &SystemConfig,
) -> Option<Vec<nalgebra::DMatrix<Complex64>>> {
    let sigma = cfg.noise_power.sqrt();
    let hn: Vec<Vec<Complex64>> = (0..channels.num_users())
        .map(|k| channels.row(k).iter().map(|h| h / sigma).collect())
        .collect();
    let dirs: Vec<Vec<Complex64>> = hn
        .iter()
        .map(|h| {
            let n = h.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            h.iter().map(|z| z / n).collect()
        })
        .collect();
    let floor_se: f64 = gamma.iter().sum();
    let (powers, _) = powers_for_directions(&dirs, &hn, gamma, floor_se, cfg.max_power)?;
    Some(
        dirs.iter()
            .zip(&powers)
            .map(|(d, &p)| {
                let m = d.len();
                nalgebra::DMatrix::from_fn(m, m, |i, j| d[i] * d[j].conj() * p)
            })
            .collect(),
    )
}

fn scale_to_budget(
    ws: &[nalgebra::DMatrix<Complex64>],
    p_max: f64,
) -> Vec<nalgebra::DMatrix<Complex64>> {
    let total: f64 = ws.iter().map(hermitian_trace).sum();
    let tau = p_max * (1.0 - 1e-9) / total.max(f64::MIN_POSITIVE);
    ws.iter().map(|w| w.map(|z| z * tau)).collect()
}

/// Iterate the linearized subproblem to a fixed point. When the subproblem is
/// infeasible at the starting expansion, retry at the full-power scaling and
/// then via a sum-rate homotopy (solve an easier target first and expand
/// around its solution).
fn sca_solve(
    channels: &ChannelMatrix,
    w0: Vec<nalgebra::DMatrix<Complex64>>,
    gamma: &[f64],
    eps_se: f64,
    cfg: &SystemConfig,
    depth: usize,
) -> Result<Vec<nalgebra::DMatrix<Complex64>>, SolveError> {
    let subproblem = |expansion: Vec<nalgebra::DMatrix<Complex64>>| SdpProblem {
        channels: channels.clone(),
        min_rates: gamma.to_vec(),
        eps_se,
        max_power: cfg.max_power,
        noise_power: cfg.noise_power,
        expansion,
    };

    let mut first = solve_sdp_subproblem(&subproblem(w0.clone()));
    if matches!(first, Err(SolveError::Infeasible)) {
        first = solve_sdp_subproblem(&subproblem(scale_to_budget(&w0, cfg.max_power)));
    }
    let mut sol = match first {
        Ok(sol) => sol,
        Err(SolveError::Infeasible) => {
            let floor_se: f64 = gamma.iter().sum();
            if depth >= 4 || eps_se <= floor_se + 1e-9 {
                return Err(SolveError::Infeasible);
            }
            let mid = 0.5 * (floor_se + eps_se);
            let inner = sca_solve(channels, w0, gamma, mid, cfg, depth + 1)?;
            let retry = solve_sdp_subproblem(&subproblem(inner.clone())).or_else(|_| {
                solve_sdp_subproblem(&subproblem(scale_to_budget(&inner, cfg.max_power)))
            });
            retry.map_err(|_| SolveError::Infeasible)?
        }
        Err(e) => return Err(e),
    };

    for _ in 1..SCA_MAX_ITERS {
        let prev = sol.objective;
        match solve_sdp_subproblem(&subproblem(sol.matrices.clone())) {
            Ok(next) => {
                let improve = (prev - next.objective) / prev.max(f64::MIN_POSITIVE);
                sol = next;
                if improve < SCA_REL_TOL {
                    break;
                }
            }
            // Keep the previous iterate if the re-expansion stalls.
            Err(_) => break,
        }
    }
    Ok(sol.matrices)
}

fn certify(
    channels: &ChannelMatrix,
    beams: &[Vec<Complex64>],
    gamma: &[f64],
    eps_se: f64,
    cfg: &SystemConfig,
) -> Option<(Vec<f64>, f64, f64)> {
    let rates = wm_rates(channels, beams, cfg.noise_power);
    let se = wm_se(&rates);
    let power = beams_power(beams);
    let ok = rates.iter().zip(gamma).all(|(r, g)| *r >= g - RATE_TOL)
        && se >= eps_se - RATE_TOL
        && power <= cfg.max_power * (1.0 + 1e-9) + 1e-15;
    ok.then_some((rates, se, power))
}

/// Scale all beams by a common factor >= 1 until the rate constraints hold
/// (all SINRs increase monotonically with the common scale).
fn tau_rescue(
    channels: &ChannelMatrix,
    beams: &[Vec<Complex64>],
    gamma: &[f64],
    eps_se: f64,
    cfg: &SystemConfig,
) -> Option<Vec<Vec<Complex64>>> {
    let power = beams_power(beams);
    if power <= 0.0 {
        return None;
    }
    let tau_max = (cfg.max_power / power).sqrt();
    let scaled = |tau: f64| -> Vec<Vec<Complex64>> {
        beams
            .iter()
            .map(|w| w.iter().map(|z| z * tau).collect())
            .collect()
    };
    if certify(channels, &scaled(tau_max), gamma, eps_se, cfg).is_none() {
        return None;
    }
    let (mut lo, mut hi) = (1.0, tau_max);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if certify(channels, &scaled(mid), gamma, eps_se, cfg).is_some() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(scaled(hi))
}

fn extract_beams<R: Rng>(
    channels: &ChannelMatrix,
    matrices: &[nalgebra::DMatrix<Complex64>],
    gamma: &[f64],
    eps_se: f64,
    cfg: &SystemConfig,
    rng: &mut R,
) -> Result<BasebandResult, SolveError> {
    let mut beams = Vec::with_capacity(matrices.len());
    let mut min_tightness = 1.0f64;
    for w in matrices {
        let (v, t) = extract_rank_one(w).map_err(|_| {
            SolveError::NumericalFailure("degenerate beamformer matrix".into())
        })?;
        min_tightness = min_tightness.min(t);
        beams.push(v);
    }

    let eig_candidate = match certify(channels, &beams, gamma, eps_se, cfg) {
        Some(_) => Some(beams.clone()),
        None => tau_rescue(channels, &beams, gamma, eps_se, cfg),
    };

    let chosen = if min_tightness >= 0.999 && eig_candidate.is_some() {
        eig_candidate.unwrap()
    } else {
        let randomized = gaussian_randomization(
            channels,
            matrices,
            gamma,
            eps_se,
            cfg.max_power,
            cfg.noise_power,
            200,
            rng,
        );
        match (eig_candidate, randomized) {
            (Some(a), Some(b)) => {
                if beams_power(&a) <= beams_power(&b) {
                    a
                } else {
                    b
                }
            }
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => {
                return Err(SolveError::NumericalFailure(
                    "rank-one extraction and randomization both failed".into(),
                ))
            }
        }
    };

    let (rates, se, power) = certify(channels, &chosen, gamma, eps_se, cfg).ok_or_else(|| {
        SolveError::NumericalFailure("extracted beams failed certification".into())
    })?;
    Ok(BasebandResult {
        beams: chosen,
        rates,
        se,
        power,
        min_tightness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::UserPos;
    use approx::assert_relative_eq;

    fn cfg_k1() -> SystemConfig {
        let mut cfg = SystemConfig::reference();
        cfg.num_users = 1;
        cfg.num_waveguides = 1;
        cfg.pas_per_wg = 1;
        cfg
    }

    #[test]
    fn rates_single_user_and_orthogonal() {
        let h = ChannelMatrix::from_rows(
            1,
            2,
            vec![Complex64::new(2e-4, 0.0), Complex64::new(0.0, 1e-4)],
        );
        let w = vec![vec![Complex64::new(1e-2, 0.0), Complex64::new(0.0, 0.0)]];
        let noise = 1e-12;
        let r = wm_rates(&h, &w, noise);
        let expect = (1.0 + (2e-4f64 * 1e-2).powi(2) / noise).log2();
        assert_relative_eq!(r[0], expect, epsilon = 1e-12);

        // Interferer orthogonal to h_0: zero interference term.
        let h2 = ChannelMatrix::from_rows(
            2,
            2,
            vec![
                Complex64::new(1e-4, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(1e-4, 0.0),
            ],
        );
        let beams = vec![
            vec![Complex64::new(1e-2, 0.0), Complex64::new(0.0, 0.0)],
            vec![Complex64::new(0.0, 0.0), Complex64::new(1e-2, 0.0)],
        ];
        let r = wm_rates(&h2, &beams, noise);
        let expect = (1.0 + (1e-4f64 * 1e-2).powi(2) / noise).log2();
        assert_relative_eq!(r[0], expect, epsilon = 1e-12);
        assert_relative_eq!(r[1], expect, epsilon = 1e-12);
    }

    #[test]
    fn rates_k2_hand_instance() {
        // Direct scalar evaluation of the SINR expression.
        let h = ChannelMatrix::from_rows(
            2,
            2,
            vec![
                Complex64::new(1.0, 2.0),
                Complex64::new(-0.5, 0.3),
                Complex64::new(0.2, -0.7),
                Complex64::new(1.5, 0.4),
            ],
        );
        let beams = vec![
            vec![Complex64::new(0.3, -0.1), Complex64::new(0.8, 0.2)],
            vec![Complex64::new(-0.2, 0.5), Complex64::new(0.1, 0.9)],
        ];
        let noise = 0.37;
        let dot = |hr: &[Complex64], w: &[Complex64]| {
            hr[0].conj() * w[0] + hr[1].conj() * w[1]
        };
        let r = wm_rates(&h, &beams, noise);
        for k in 0..2 {
            let s = dot(h.row(k), &beams[k]).norm_sqr();
            let i = dot(h.row(k), &beams[1 - k]).norm_sqr();
            let expect = (1.0 + s / (i + noise)).log2();
            assert_relative_eq!(r[k], expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn ee_arithmetic() {
        let mut cfg = SystemConfig::reference();
        cfg.rf_chain_power = 0.0316;
        cfg.num_users = 2;
        cfg.num_waveguides = 2;
        // Beams with total power 0.05 W.
        let beams = vec![
            vec![Complex64::new(0.15811388300841897, 0.0)], // 0.025 W
            vec![Complex64::new(0.15811388300841897, 0.0)],
        ];
        let ee = wm_ee(10.0, &beams, &cfg);
        assert_relative_eq!(ee, 10.0 / (0.05 + 2.0 * 0.0316), max_relative = 1e-9);
        // Doubling P_RF strictly decreases EE.
        cfg.rf_chain_power *= 2.0;
        assert!(wm_ee(10.0, &beams, &cfg) < ee);
        // Zero beams: SE 0 gives EE 0.
        assert_eq!(wm_ee(0.0, &[vec![Complex64::new(0.0, 0.0)]], &cfg), 0.0);
    }

    #[test]
    fn fitness_matches_independent_recomputation() {
        let mut cfg = SystemConfig::reference();
        cfg.pas_per_wg = 2;
        let users = UserSet::new(
            vec![UserPos { x: 0.5, y: 0.6 }, UserPos { x: -1.0, y: -0.7 }],
            &cfg,
        )
        .unwrap();
        let beams = vec![
            vec![Complex64::new(3e-3, 0.0), Complex64::new(0.0, 1e-3)],
            vec![Complex64::new(-1e-3, 2e-3), Complex64::new(2e-3, 0.0)],
        ];
        let x = vec![0.4, 0.9, -1.3, -0.2];
        let eps = 5.0;
        let (xi, eta) = (1e3, 1e3);
        let f = pinching_fitness(&x, &beams, &users, &cfg, eps, xi, eta);

        // Recompute from scratch.
        let per_wg = vec![vec![0.4, 0.9], vec![-1.3, -0.2]];
        let ch = channel_matrix_raw(users.positions(), &per_wg, &cfg);
        let rates = wm_rates(&ch, &beams, cfg.noise_power);
        let se = wm_se(&rates);
        let p1: f64 = rates.iter().map(|r| (cfg.min_rate - r).max(0.0)).sum::<f64>()
            + (eps - se).max(0.0);
        let p2 = spacing_penalty(&x, cfg.min_pa_spacing, &[2, 2], -5.0, 5.0);
        assert_relative_eq!(f, se - xi * p1 - eta * p2, epsilon = 1e-12);

        // Feasible layout with met floors: fitness is exactly the sum rate.
        // (Pick a generous spacing and a tiny target so penalties vanish.)
        let good = vec![0.0, 1.0, -2.0, -1.0];
        let fg = pinching_fitness(&good, &beams, &users, &cfg, 0.0, xi, eta);
        let per_wg = vec![vec![0.0, 1.0], vec![-2.0, -1.0]];
        let ch = channel_matrix_raw(users.positions(), &per_wg, &cfg);
        let rates = wm_rates(&ch, &beams, cfg.noise_power);
        if rates.iter().all(|r| *r >= cfg.min_rate) {
            assert_relative_eq!(fg, wm_se(&rates), epsilon = 1e-12);
        }
        // One coincident pair at feasible rates: exactly -eta * delta below SE.
        let coincident = vec![0.0, 0.0, -2.0, -1.0];
        let fc = pinching_fitness(&coincident, &beams, &users, &cfg, 0.0, xi, eta);
        let per_wg = vec![vec![0.0, 0.0], vec![-2.0, -1.0]];
        let ch = channel_matrix_raw(users.positions(), &per_wg, &cfg);
        let rates = wm_rates(&ch, &beams, cfg.noise_power);
        if rates.iter().all(|r| *r >= cfg.min_rate) {
            assert_relative_eq!(
                fc,
                wm_se(&rates) - eta * cfg.min_pa_spacing,
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn repair_enforces_spacing_and_bounds() {
        let mut cfg = SystemConfig::reference();
        cfg.pas_per_wg = 3;
        let delta = cfg.min_pa_spacing;
        // Coincident and out-of-range coordinates, unsorted.
        let x = vec![4.9999, 5.2, 4.9999, -5.3, 0.0, -5.3];
        let layout = repair_layout(&x, &cfg).unwrap();
        for g in layout.waveguides() {
            for w in g.windows(2) {
                assert!(w[1] - w[0] >= delta - 1e-12);
            }
            for &c in g {
                assert!(c.abs() <= cfg.half_len() + 1e-12);
            }
        }
    }

    #[test]
    fn initial_layout_centers_on_median() {
        let cfg = cfg_k1();
        let users = UserSet::new(vec![UserPos { x: 1.25, y: 0.0 }], &cfg).unwrap();
        let layout = initial_layout(&users, &cfg);
        assert_relative_eq!(layout.waveguides()[0][0], 1.25);
    }

    #[test]
    fn solve_wm_single_user_closed_form() {
        let cfg = cfg_k1();
        let wg_y = cfg.waveguide_y(0);
        let users = UserSet::new(vec![UserPos { x: 0.4, y: wg_y }], &cfg).unwrap();
        let eps = 4.0;
        let sol = solve_wm(&users, &cfg, eps, 7).unwrap();
        let eta = cfg.sqrt_eta() * cfg.sqrt_eta();
        let expect = (2f64.powf(eps) - 1.0) * cfg.noise_power * cfg.height * cfg.height / eta;
        assert_relative_eq!(sol.power, expect, max_relative = 1e-6);
        assert!(sol.rates[0] >= eps - 1e-6);
        // Accepted-iterate power never rises.
        for w in sol.ao_power_trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn solve_wm_deterministic() {
        let mut cfg = SystemConfig::reference();
        cfg.pas_per_wg = 2;
        let users = UserSet::new(
            vec![UserPos { x: 1.4, y: 0.8 }, UserPos { x: -2.0, y: -1.1 }],
            &cfg,
        )
        .unwrap();
        let hp = PsoHyperparams {
            swarm_size: 12,
            max_iters: 40,
            ..Default::default()
        };
        let a = solve_wm_with(&users, &cfg, 4.0, 99, &hp, 3).unwrap();
        let b = solve_wm_with(&users, &cfg, 4.0, 99, &hp, 3).unwrap();
        assert_eq!(a.power, b.power);
        assert_eq!(a.beams, b.beams);
        assert_eq!(a.layout, b.layout);
        assert!(a.se >= 4.0 - 1e-6);
    }
}
