//! Convex subproblem solvers shared by both operating protocols.
//!
//! * the linearized-rate semidefinite subproblem for multiplexed baseband
//!   beamforming (lifted beamformers, per-user QoS floors, and a sum-rate
//!   floor around an expansion point),
//! * rank-one beamformer extraction with a Gaussian randomization fallback,
//! * the switching-protocol power allocation solved by KKT water-filling.

mod conic;

pub use conic::{embed_hermitian, matrix_to_theta, quad_coeffs, theta_to_matrix};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::channel::ChannelMatrix;
use conic::{solve_conic, ConicVariant};

const LN2: f64 = std::f64::consts::LN_2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    /// The constraint set is empty within the power budget (or the expansion
    /// point cannot certify it); sweeps treat this as "past the boundary".
    #[error("problem infeasible within the power budget")]
    Infeasible,
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    /// A lifted beamformer with (numerically) zero trace cannot be extracted.
    #[error("degenerate zero-trace beamformer matrix")]
    Degenerate,
    /// A PA block at minimum spacing does not fit inside the region.
    #[error("PA block does not fit inside the region")]
    InfeasibleGeometry,
}

/// One linearized baseband subproblem at a fixed pinching layout.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub channels: ChannelMatrix,
    /// Per-user QoS floors, bit/s/Hz.
    pub min_rates: Vec<f64>,
    /// Sum-rate floor, bit/s/Hz.
    pub eps_se: f64,
    /// Transmit power budget, W.
    pub max_power: f64,
    /// Per-user noise power, W.
    pub noise_power: f64,
    /// Expansion matrices W_k^(l), watts.
    pub expansion: Vec<DMatrix<Complex64>>,
}

impl SdpProblem {
    pub fn validate(&self) -> Result<(), SolveError> {
        let k = self.channels.num_users();
        if self.min_rates.len() != k || self.expansion.len() != k {
            return Err(SolveError::NumericalFailure(
                "dimension mismatch in subproblem".into(),
            ));
        }
        let total: f64 = self.expansion.iter().map(|w| hermitian_trace(w)).sum();
        if total > self.max_power * (1.0 + 1e-6) + 1e-12 {
            return Err(SolveError::NumericalFailure(
                "expansion point exceeds the power budget".into(),
            ));
        }
        for w in &self.expansion {
            let min_eig = min_eigenvalue(w);
            if min_eig < -1e-9 * hermitian_trace(w).max(1.0) {
                return Err(SolveError::NumericalFailure(
                    "expansion matrix is not PSD".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Solution of one subproblem, with self-certification data computed directly
/// from the returned matrices (independent of solver internals).
#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub matrices: Vec<DMatrix<Complex64>>,
    /// Total transmit power sum_k Tr(W_k), W.
    pub objective: f64,
    /// Linearized-rate slack per user (bound minus gamma_k), bit/s/Hz.
    pub qos_slack: Vec<f64>,
    /// Linearized sum-rate slack (bound sum minus eps_SE), bit/s/Hz.
    pub se_slack: f64,
    /// Power budget slack P_max - objective, W.
    pub power_slack: f64,
    /// Smallest eigenvalue of each W_k.
    pub min_eigenvalues: Vec<f64>,
    /// Relative primal-dual objective gap reported by the conic solver.
    pub rel_gap: f64,
}

/// `Re(h^H W h)` for a Hermitian W.
pub fn quad_form(h: &[Complex64], w: &DMatrix<Complex64>) -> f64 {
    let m = h.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..m {
        for j in 0..m {
            acc += h[i].conj() * w[(i, j)] * h[j];
        }
    }
    acc.re
}

pub fn hermitian_trace(w: &DMatrix<Complex64>) -> f64 {
    (0..w.nrows()).map(|i| w[(i, i)].re).sum()
}

fn min_eigenvalue(w: &DMatrix<Complex64>) -> f64 {
    let x = embed_hermitian(w);
    let eig = nalgebra::SymmetricEigen::new(x);
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Exact achievable rate of user `k` under lifted beamformers.
pub fn rate_with_matrices(
    h_k: &[Complex64],
    ws: &[DMatrix<Complex64>],
    k: usize,
    noise: f64,
) -> f64 {
    let signal = quad_form(h_k, &ws[k]);
    let interference: f64 = ws
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != k)
        .map(|(_, w)| quad_form(h_k, w))
        .sum();
    (1.0 + signal / (interference + noise)).log2()
}

/// First-order concave lower bound on user `k`'s rate around the expansion
/// matrices: exact at the expansion point, below the true rate elsewhere.
///
/// The leading log gathers the received power from all users' matrices
/// (including `k`); the interference denominator is linearized.
pub fn sca_rate_lower_bound(
    h_k: &[Complex64],
    ws: &[DMatrix<Complex64>],
    expansion: &[DMatrix<Complex64>],
    k: usize,
    noise: f64,
) -> f64 {
    let total: f64 = ws.iter().map(|w| quad_form(h_k, w)).sum();
    let interf_l: f64 = expansion
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != k)
        .map(|(_, w)| quad_form(h_k, w))
        .sum();
    let interf_delta: f64 = ws
        .iter()
        .zip(expansion)
        .enumerate()
        .filter(|(i, _)| *i != k)
        .map(|(_, (w, wl))| quad_form(h_k, w) - quad_form(h_k, wl))
        .sum();
    (total + noise).log2() - (interf_l + noise).log2() - interf_delta / ((interf_l + noise) * LN2)
}

fn normalized_channels(channels: &ChannelMatrix, noise: f64) -> Vec<Vec<Complex64>> {
    let sigma = noise.sqrt();
    (0..channels.num_users())
        .map(|k| channels.row(k).iter().map(|h| h / sigma).collect())
        .collect()
}

/// Solve the linearized subproblem: minimize total transmit power subject to
/// per-user QoS floors, the sum-rate floor, the power budget, and PSD cones.
///
/// Accuracy contract: relative primal-dual gap at most 1e-7 on these small
/// dense instances; the solution carries slacks recomputed from the returned
/// matrices so callers can certify feasibility independently.
pub fn solve_sdp_subproblem(problem: &SdpProblem) -> Result<SdpSolution, SolveError> {
    problem.validate()?;
    let noise = problem.noise_power;
    let hn = normalized_channels(&problem.channels, noise);
    let k_users = hn.len();

    // Expansion quadratic forms in noise units.
    let expansion_q: Vec<Vec<f64>> = (0..k_users)
        .map(|k| {
            (0..k_users)
                .map(|i| quad_form(&hn[k], &problem.expansion[i]))
                .collect()
        })
        .collect();

    let scale = problem
        .expansion
        .iter()
        .map(hermitian_trace)
        .sum::<f64>()
        .max(problem.max_power * 1e-9);

    let out = solve_conic(
        &hn,
        &problem.min_rates,
        problem.max_power,
        scale,
        ConicVariant::RateLowerBound {
            expansion_q: &expansion_q,
            eps_se: problem.eps_se,
        },
    )?;

    let bounds: Vec<f64> = (0..k_users)
        .map(|k| sca_rate_lower_bound(&hn[k], &out.matrices, &problem.expansion, k, 1.0))
        .collect();
    let qos_slack: Vec<f64> = bounds
        .iter()
        .zip(&problem.min_rates)
        .map(|(b, g)| b - g)
        .collect();
    let se_slack = bounds.iter().sum::<f64>() - problem.eps_se;
    let min_eigenvalues: Vec<f64> = out.matrices.iter().map(min_eigenvalue).collect();

    Ok(SdpSolution {
        objective: out.objective,
        power_slack: problem.max_power - out.objective,
        qos_slack,
        se_slack,
        min_eigenvalues,
        rel_gap: out.rel_gap,
        matrices: out.matrices,
    })
}

/// Exact (non-linearized) power minimization under the QoS floors alone; used
/// to seed the linearized iteration with a feasible expansion point.
pub fn solve_qos_power_min(
    channels: &ChannelMatrix,
    min_rates: &[f64],
    max_power: f64,
    noise: f64,
) -> Result<Vec<DMatrix<Complex64>>, SolveError> {
    let hn = normalized_channels(channels, noise);
    let scale: f64 = hn
        .iter()
        .zip(min_rates)
        .map(|(h, g)| {
            let hsq: f64 = h.iter().map(|z| z.norm_sqr()).sum();
            (2f64.powf(*g) - 1.0) / hsq.max(1e-300)
        })
        .sum();
    let out = solve_conic(&hn, min_rates, max_power, scale, ConicVariant::QosOnly)?;
    Ok(out.matrices)
}

/// Dominant-eigenpair beamformer extraction.
///
/// Returns the rank-one factor `w = sqrt(lambda_max) v_max` and the tightness
/// `lambda_max / Tr(W)`; tightness 1 means the relaxation solved the original
/// problem exactly. Callers fall back to randomization when tightness is low.
pub fn extract_rank_one(w: &DMatrix<Complex64>) -> Result<(Vec<Complex64>, f64), SolveError> {
    let trace = hermitian_trace(w);
    if trace < 1e-14 {
        return Err(SolveError::Degenerate);
    }
    let m = w.nrows();
    let eig = nalgebra::SymmetricEigen::new(embed_hermitian(w));
    let mut best = 0;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    let lambda = eig.eigenvalues[best].max(0.0);
    let col = eig.eigenvectors.column(best);
    let amp = lambda.sqrt();
    let vector: Vec<Complex64> = (0..m)
        .map(|i| Complex64::new(col[i], col[i + m]) * amp)
        .collect();
    Ok((vector, (lambda / trace).clamp(0.0, 1.0)))
}

/// Eigen-factor of a PSD Hermitian matrix: columns `sqrt(lambda_i) v_i` for
/// the numerically positive eigenvalues. Samples `F g`, `g ~ CN(0, I)`, are
/// distributed as `CN(0, W)`.
fn psd_factor(w: &DMatrix<Complex64>) -> Vec<Vec<Complex64>> {
    let m = w.nrows();
    let eig = nalgebra::SymmetricEigen::new(embed_hermitian(w));
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let mut cols = Vec::new();
    for i in 0..eig.eigenvalues.len() {
        let l = eig.eigenvalues[i];
        if l > 1e-12 * lmax.max(1e-300) {
            let c = eig.eigenvectors.column(i);
            cols.push((0..m).map(|r| Complex64::new(c[r], c[r + m]) * l.sqrt()).collect());
        }
    }
    cols
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller; one draw per call keeps the stream layout simple.
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn inner(h: &[Complex64], w: &[Complex64]) -> Complex64 {
    h.iter().zip(w).map(|(a, b)| a.conj() * b).sum()
}

/// Minimal-power scaling of fixed unit-norm beam directions.
///
/// Solves the per-user QoS floors with equality via the interference
/// power-control system, then scales all powers by a common factor (found by
/// bisection) until the sum rate reaches `eps_se`. Returns per-user powers and
/// the achieved sum rate, or `None` when the directions cannot meet the
/// targets within `p_max`.
pub fn powers_for_directions(
    dirs: &[Vec<Complex64>],
    channels_norm: &[Vec<Complex64>],
    min_rates: &[f64],
    eps_se: f64,
    p_max: f64,
) -> Option<(Vec<f64>, f64)> {
    let k_users = dirs.len();
    let mut a = vec![vec![0.0; k_users]; k_users];
    for k in 0..k_users {
        for i in 0..k_users {
            a[k][i] = inner(&channels_norm[k], &dirs[i]).norm_sqr();
        }
    }
    let snr_floor: Vec<f64> = min_rates.iter().map(|g| 2f64.powf(*g) - 1.0).collect();

    // (diag(a_kk / snr_k) - offdiag(a_ki)) p = 1.
    let mut mat = DMatrix::<f64>::zeros(k_users, k_users);
    for k in 0..k_users {
        for i in 0..k_users {
            mat[(k, i)] = if i == k {
                if snr_floor[k] <= 0.0 {
                    return None;
                }
                a[k][k] / snr_floor[k]
            } else {
                -a[k][i]
            };
        }
    }
    let rhs = nalgebra::DVector::from_element(k_users, 1.0);
    let p0 = mat.lu().solve(&rhs)?;
    if p0.iter().any(|&p| !p.is_finite() || p < 0.0) {
        return None;
    }
    let base: f64 = p0.iter().sum();
    if base > p_max * (1.0 + 1e-12) || base <= 0.0 {
        return None;
    }

    let sum_rate = |tau: f64| -> f64 {
        (0..k_users)
            .map(|k| {
                let sig = tau * p0[k] * a[k][k];
                let int: f64 = (0..k_users)
                    .filter(|&i| i != k)
                    .map(|i| tau * p0[i] * a[k][i])
                    .sum();
                (1.0 + sig / (int + 1.0)).log2()
            })
            .sum()
    };

    let tau_max = p_max / base;
    if sum_rate(1.0) >= eps_se - 1e-12 {
        let powers: Vec<f64> = p0.iter().copied().collect();
        return Some((powers, sum_rate(1.0)));
    }
    if sum_rate(tau_max) < eps_se - 1e-12 {
        return None;
    }
    let (mut lo, mut hi) = (1.0, tau_max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sum_rate(mid) >= eps_se {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let powers: Vec<f64> = p0.iter().map(|p| p * hi).collect();
    Some((powers, sum_rate(hi)))
}

/// Gaussian randomization fallback for low-tightness lifted solutions.
///
/// Draws `count` candidate direction sets from the eigen-factorizations of the
/// `ws`, rescales each via [`powers_for_directions`], and returns the feasible
/// candidate with least total power (natural channel/noise units).
pub fn gaussian_randomization<R: Rng>(
    channels: &ChannelMatrix,
    ws: &[DMatrix<Complex64>],
    min_rates: &[f64],
    eps_se: f64,
    p_max: f64,
    noise: f64,
    count: usize,
    rng: &mut R,
) -> Option<Vec<Vec<Complex64>>> {
    let hn = normalized_channels(channels, noise);
    let m = channels.num_waveguides();
    let factors: Vec<Vec<Vec<Complex64>>> = ws.iter().map(psd_factor).collect();
    let mut best: Option<(f64, Vec<Vec<Complex64>>)> = None;
    for _ in 0..count {
        let mut dirs = Vec::with_capacity(ws.len());
        let mut degenerate = false;
        for f in &factors {
            let mut w = vec![Complex64::new(0.0, 0.0); m];
            for col in f {
                let g = Complex64::new(
                    standard_normal(rng) / 2f64.sqrt(),
                    standard_normal(rng) / 2f64.sqrt(),
                );
                for (wi, ci) in w.iter_mut().zip(col) {
                    *wi += ci * g;
                }
            }
            let norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm < 1e-30 {
                degenerate = true;
                break;
            }
            for wi in &mut w {
                *wi /= norm;
            }
            dirs.push(w);
        }
        if degenerate {
            continue;
        }
        if let Some((powers, _)) = powers_for_directions(&dirs, &hn, min_rates, eps_se, p_max) {
            let total: f64 = powers.iter().sum();
            if best.as_ref().map_or(true, |(b, _)| total < *b) {
                let beams = dirs
                    .iter()
                    .zip(&powers)
                    .map(|(d, p)| d.iter().map(|z| z * p.sqrt()).collect())
                    .collect();
                best = Some((total, beams));
            }
        }
    }
    best.map(|(_, beams)| beams)
}

/// Per-user transmit powers for the switching protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    pub powers: Vec<f64>,
}

impl PowerAllocation {
    pub fn total(&self) -> f64 {
        self.powers.iter().sum()
    }
}

/// KKT water-filling for the switching-protocol power allocation.
///
/// Minimizes total power subject to the time-shared sum rate
/// `sum_k (1/K) log2(1 + P_k g_k) >= eps_se`, per-user floors
/// `(1/K) log2(1 + P_k g_k) >= gamma_k`, and `0 <= P_k <= p_max`.
/// The optimal profile is `P_k(mu) = clamp(mu - 1/g_k, P_k_min, p_max)` with
/// the water level `mu` found by bisection on the (monotone) sum rate.
pub fn waterfill_ws(
    gains: &[f64],
    min_rates: &[f64],
    eps_se: f64,
    p_max: f64,
) -> Result<PowerAllocation, SolveError> {
    let k_users = gains.len();
    assert_eq!(min_rates.len(), k_users);
    assert!(gains.iter().all(|&g| g > 0.0), "gains must be positive");
    let kf = k_users as f64;

    let floors: Vec<f64> = gains
        .iter()
        .zip(min_rates)
        .map(|(&g, &gamma)| (2f64.powf(kf * gamma) - 1.0) / g)
        .collect();
    if floors.iter().any(|&f| f > p_max * (1.0 + 1e-12)) {
        return Err(SolveError::Infeasible);
    }
    let se_at = |powers: &[f64]| -> f64 {
        powers
            .iter()
            .zip(gains)
            .map(|(&p, &g)| (1.0 + p * g).log2() / kf)
            .sum()
    };
    let se_max = se_at(&vec![p_max; k_users]);
    if se_max < eps_se - 1e-9 {
        return Err(SolveError::Infeasible);
    }

    let floor_se: f64 = min_rates.iter().sum();
    if eps_se <= floor_se + 1e-12 {
        return Ok(PowerAllocation { powers: floors });
    }

    let profile = |mu: f64| -> Vec<f64> {
        gains
            .iter()
            .zip(&floors)
            .map(|(&g, &f)| (mu - 1.0 / g).clamp(f, p_max))
            .collect()
    };
    let mut lo = gains
        .iter()
        .zip(&floors)
        .map(|(&g, &f)| f + 1.0 / g)
        .fold(f64::INFINITY, f64::min);
    let mut hi = gains
        .iter()
        .map(|&g| p_max + 1.0 / g)
        .fold(0.0f64, f64::max);
    debug_assert!(se_at(&profile(lo)) <= floor_se + 1e-9);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if se_at(&profile(mid)) >= eps_se {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= f64::EPSILON * hi.abs() {
            break;
        }
    }
    Ok(PowerAllocation {
        powers: profile(hi),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{channel_matrix_raw, SystemConfig, UserPos};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_psd<R: Rng>(rng: &mut R, m: usize, scale: f64) -> DMatrix<Complex64> {
        let g = DMatrix::from_fn(m, m, |_, _| {
            Complex64::new(standard_normal(rng), standard_normal(rng))
        });
        let w = &g * g.adjoint();
        w.map(|z| z * scale)
    }

    fn random_unit<R: Rng>(rng: &mut R, m: usize) -> Vec<Complex64> {
        let v: Vec<Complex64> = (0..m)
            .map(|_| Complex64::new(standard_normal(rng), standard_normal(rng)))
            .collect();
        let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        v.into_iter().map(|z| z / n).collect()
    }

    #[test]
    fn bound_exact_at_expansion_and_below_elsewhere() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let h: Vec<Complex64> = (0..2)
                .map(|_| Complex64::new(standard_normal(&mut rng), standard_normal(&mut rng)))
                .collect();
            let expansion = vec![random_psd(&mut rng, 2, 1.0), random_psd(&mut rng, 2, 1.0)];
            let noise = 0.5;
            for k in 0..2 {
                let exact = rate_with_matrices(&h, &expansion, k, noise);
                let bound = sca_rate_lower_bound(&h, &expansion, &expansion, k, noise);
                assert_relative_eq!(bound, exact, epsilon = 1e-12, max_relative = 1e-12);
            }
            let other = vec![random_psd(&mut rng, 2, 1.0), random_psd(&mut rng, 2, 1.0)];
            for k in 0..2 {
                let exact = rate_with_matrices(&h, &other, k, noise);
                let bound = sca_rate_lower_bound(&h, &other, &expansion, k, noise);
                assert!(bound <= exact + 1e-9, "bound {bound} above exact {exact}");
            }
        }
    }

    #[test]
    fn bound_is_exact_rate_for_single_user() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let h: Vec<Complex64> = (0..3)
            .map(|_| Complex64::new(standard_normal(&mut rng), standard_normal(&mut rng)))
            .collect();
        let w = vec![random_psd(&mut rng, 3, 2.0)];
        let exp = vec![random_psd(&mut rng, 3, 0.7)];
        let noise = 1.3;
        let exact = (1.0 + quad_form(&h, &w[0]) / noise).log2();
        assert_relative_eq!(
            sca_rate_lower_bound(&h, &w, &exp, 0, noise),
            exact,
            epsilon = 1e-12
        );
    }

    fn single_user_channel(hval: Complex64) -> ChannelMatrix {
        ChannelMatrix::from_rows(1, 1, vec![hval])
    }

    #[test]
    fn subproblem_single_user_closed_form() {
        let h = Complex64::new(3e-4, 1e-4);
        let channels = single_user_channel(h);
        let noise = 1e-12;
        let gamma = vec![1.0];
        for eps in [0.5, 4.0] {
            let target = gamma[0].max(eps);
            let expect = (2f64.powf(target) - 1.0) * noise / h.norm_sqr();
            let problem = SdpProblem {
                channels: channels.clone(),
                min_rates: gamma.clone(),
                eps_se: eps,
                max_power: 0.1,
                noise_power: noise,
                expansion: vec![DMatrix::from_element(1, 1, Complex64::new(expect, 0.0))],
            };
            let sol = solve_sdp_subproblem(&problem).unwrap();
            assert_relative_eq!(sol.objective, expect, max_relative = 1e-6);
            assert!(sol.qos_slack[0] > -1e-7);
            assert!(sol.se_slack > -1e-7);
            assert!(sol.rel_gap < 1e-7);
        }
    }

    #[test]
    fn subproblem_infeasible_below_closed_form() {
        let h = Complex64::new(3e-4, 0.0);
        let channels = single_user_channel(h);
        let noise = 1e-12;
        let eps = 8.0;
        let need = (2f64.powf(eps) - 1.0) * noise / h.norm_sqr();
        let problem = SdpProblem {
            channels,
            min_rates: vec![1.0],
            eps_se: eps,
            max_power: need * 0.5,
            noise_power: noise,
            expansion: vec![DMatrix::from_element(1, 1, Complex64::new(need * 0.4, 0.0))],
        };
        assert!(matches!(
            solve_sdp_subproblem(&problem),
            Err(SolveError::Infeasible)
        ));
    }

    #[test]
    fn qos_only_matches_full_problem_at_floor_se() {
        // With eps_SE = sum gamma the SE constraint is redundant: iterating the
        // linearized problem from the QoS-only solution stays at its optimum.
        let cfg = SystemConfig::reference();
        let users = [UserPos { x: 1.0, y: 0.4 }, UserPos { x: -2.0, y: -0.6 }];
        let per_wg = vec![vec![0.9, 1.1], vec![-2.2, -1.9]];
        let channels = channel_matrix_raw(&users, &per_wg, &cfg);
        let gamma = vec![1.0, 1.0];
        let noise = cfg.noise_power;
        let w0 = solve_qos_power_min(&channels, &gamma, cfg.max_power, noise).unwrap();
        let qos_power: f64 = w0.iter().map(hermitian_trace).sum();
        let problem = SdpProblem {
            channels,
            min_rates: gamma.clone(),
            eps_se: gamma.iter().sum(),
            max_power: cfg.max_power,
            noise_power: noise,
            expansion: w0,
        };
        let sol = solve_sdp_subproblem(&problem).unwrap();
        assert_relative_eq!(sol.objective, qos_power, max_relative = 1e-6);
        for s in &sol.qos_slack {
            assert!(*s > -1e-7);
        }
    }

    #[test]
    fn extract_rank_one_pure_and_isotropic() {
        let w_vec = [Complex64::new(1.0, 0.5), Complex64::new(-0.3, 0.8)];
        let mut w = DMatrix::from_element(2, 2, Complex64::new(0.0, 0.0));
        for i in 0..2 {
            for j in 0..2 {
                w[(i, j)] = w_vec[i] * w_vec[j].conj();
            }
        }
        let (v, tightness) = extract_rank_one(&w).unwrap();
        assert_relative_eq!(tightness, 1.0, epsilon = 1e-10);
        // Recovered up to a global phase: compare outer products.
        for i in 0..2 {
            for j in 0..2 {
                let got = v[i] * v[j].conj();
                assert!((got - w[(i, j)]).norm() < 1e-9);
            }
        }

        let iso = DMatrix::from_diagonal_element(2, 2, Complex64::new(1.0, 0.0));
        let (_, t_iso) = extract_rank_one(&iso).unwrap();
        assert_relative_eq!(t_iso, 0.5, epsilon = 1e-12);

        let zero = DMatrix::from_element(2, 2, Complex64::new(0.0, 0.0));
        assert!(matches!(extract_rank_one(&zero), Err(SolveError::Degenerate)));
    }

    #[test]
    fn rank_one_frobenius_residual_when_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let v = random_unit(&mut rng, 3);
            let mut w = DMatrix::from_element(3, 3, Complex64::new(0.0, 0.0));
            for i in 0..3 {
                for j in 0..3 {
                    w[(i, j)] = v[i] * v[j].conj() * 2.5;
                }
            }
            // Small PSD perturbation keeping tightness >= 0.999.
            let pert = random_psd(&mut rng, 3, 1e-4);
            let wp = &w + &pert;
            let (x, tightness) = extract_rank_one(&wp).unwrap();
            if tightness >= 0.999 {
                let mut resid = 0.0;
                let mut norm = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        let outer = x[i] * x[j].conj();
                        resid += (outer - wp[(i, j)]).norm_sqr();
                        norm += wp[(i, j)].norm_sqr();
                    }
                }
                assert!((resid / norm).sqrt() <= 0.05);
            }
        }
    }

    #[test]
    fn waterfill_single_user_and_symmetry() {
        // K = 1: P = (2^eps - 1)/g.
        let alloc = waterfill_ws(&[2.0e6], &[0.5], 4.0, 1.0).unwrap();
        assert_relative_eq!(alloc.powers[0], (2f64.powi(4) - 1.0) / 2.0e6, max_relative = 1e-9);

        // Equal gains, zero-ish floors: equal split.
        let g = 1.5e5;
        let alloc = waterfill_ws(&[g, g], &[1e-9, 1e-9], 6.0, 1.0).unwrap();
        assert_relative_eq!(alloc.powers[0], alloc.powers[1], max_relative = 1e-9);
        // Each user's slot rate is (1/2) log2(1 + P g) and both are equal, so
        // P = (2^eps - 1)/g per user.
        assert_relative_eq!(
            alloc.powers[0],
            (2f64.powi(6) - 1.0) / g,
            max_relative = 1e-6
        );
    }

    #[test]
    fn waterfill_kkt_and_floors() {
        let gains = [1e8, 4e8, 2.5e7];
        let gamma = [1.0, 1.0, 1.0];
        let eps = 6.0;
        let alloc = waterfill_ws(&gains, &gamma, eps, 0.1).unwrap();
        let kf = 3.0;
        let se: f64 = alloc
            .powers
            .iter()
            .zip(&gains)
            .map(|(&p, &g)| (1.0 + p * g).log2() / kf)
            .sum();
        assert!((se - eps).abs() <= 1e-9, "sum-rate slack {}", se - eps);
        // Interior users share the marginal value g/(1 + P g).
        let marginals: Vec<f64> = alloc
            .powers
            .iter()
            .zip(&gains)
            .zip(&gamma)
            .filter(|((&p, &g), &gam)| {
                let floor = (2f64.powf(kf * gam) - 1.0) / g;
                p > floor * (1.0 + 1e-9) && p < 0.1 * (1.0 - 1e-9)
            })
            .map(|((&p, &g), _)| g / (1.0 + p * g))
            .collect();
        assert!(marginals.len() >= 2);
        for m in &marginals[1..] {
            assert_relative_eq!(*m, marginals[0], max_relative = 1e-7);
        }
    }

    #[test]
    fn waterfill_monotone_in_targets() {
        let gains = [2e7, 8e7];
        let mut prev = 0.0;
        for eps in [2.0, 3.0, 4.5, 6.0, 8.0] {
            let total = waterfill_ws(&gains, &[0.5, 0.5], eps, 0.5).unwrap().total();
            assert!(total >= prev - 1e-15);
            prev = total;
        }
        let low = waterfill_ws(&gains, &[0.5, 0.5], 3.0, 0.5).unwrap().total();
        let high_gamma = waterfill_ws(&gains, &[1.2, 0.5], 3.0, 0.5).unwrap().total();
        assert!(high_gamma >= low - 1e-15);
    }

    #[test]
    fn waterfill_infeasible_cases() {
        // Floor above the cap.
        assert!(matches!(
            waterfill_ws(&[1e3], &[2.0], 1.0, 1e-3),
            Err(SolveError::Infeasible)
        ));
        // Sum-rate unreachable at full power.
        assert!(matches!(
            waterfill_ws(&[1e2, 1e2], &[0.1, 0.1], 20.0, 1e-2),
            Err(SolveError::Infeasible)
        ));
        // At the floor SE, powers sit exactly on the floors.
        let gains = [1e8, 4e8];
        let alloc = waterfill_ws(&gains, &[1.0, 1.0], 2.0, 0.1).unwrap();
        for (p, (&g, &gam)) in alloc.powers.iter().zip(gains.iter().zip(&[1.0, 1.0])) {
            assert_relative_eq!(*p, (2f64.powf(2.0 * gam) - 1.0) / g, max_relative = 1e-12);
        }
    }

    #[test]
    fn randomization_recovers_near_rank_one() {
        let cfg = SystemConfig::reference();
        let users = [UserPos { x: 0.5, y: 0.5 }, UserPos { x: -1.0, y: -0.5 }];
        let per_wg = vec![vec![0.4, 0.6], vec![-1.2, -0.9]];
        let channels = channel_matrix_raw(&users, &per_wg, &cfg);
        let gamma = vec![1.0, 1.0];
        let noise = cfg.noise_power;
        let ws = solve_qos_power_min(&channels, &gamma, cfg.max_power, noise).unwrap();
        let sdr_power: f64 = ws.iter().map(hermitian_trace).sum();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let beams = gaussian_randomization(
            &channels, &ws, &gamma, 2.0, cfg.max_power, noise, 200, &mut rng,
        )
        .expect("feasible candidate");
        let total: f64 = beams
            .iter()
            .map(|w| w.iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum();
        // Randomized power is within a factor of the relaxation optimum and
        // certifies the constraints.
        assert!(total <= sdr_power * 3.0 + 1e-12);
        let hn = normalized_channels(&channels, noise);
        for k in 0..2 {
            let sig = inner(&hn[k], &beams[k]).norm_sqr();
            let int: f64 = (0..2)
                .filter(|&i| i != k)
                .map(|i| inner(&hn[k], &beams[i]).norm_sqr())
                .sum();
            let rate = (1.0 + sig / (int + 1.0)).log2();
            assert!(rate >= gamma[k] - 1e-7);
        }
    }
}
