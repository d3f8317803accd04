//! Waveguide-switching solver.
//!
//! One waveguide (and one RF chain) is active per time slot, serving one user
//! with all M*N PAs relocated onto it, and users share time equally. With
//! interference gone, power minimization decouples: pick each user's nearest
//! waveguide, place the PAs to maximize that user's channel gain, then run a
//! single water-filling pass over the per-user slot powers.
//!
//! PA placement is a three-stage heuristic validated against a brute-force
//! grid oracle in the test suite: amplitude-first anchoring at minimum
//! spacing around the user, per-PA phase alignment by a local window scan,
//! and repeated coordinate refinement. Placements are grown one PA at a time
//! from the previous optimum, so the achieved gain never decreases when more
//! PAs are available.

use crate::channel::{waveguide_channel_raw, SystemConfig, UserPos, UserSet};
use crate::convex::{waterfill_ws, SolveError};

/// Per-user outcome of the switching schedule.
#[derive(Debug, Clone)]
pub struct WsUserPlan {
    /// Selected (active) waveguide index.
    pub waveguide: usize,
    /// PA x-coordinates on the active waveguide, ascending, length M*N.
    pub layout: Vec<f64>,
    /// Channel gain |h_k|^2 at the placement.
    pub gain: f64,
    /// Slot transmit power P_k, W.
    pub power: f64,
    /// Time-shared rate (1/K) log2(1 + P_k |h_k|^2 / (M*N*sigma^2)).
    pub rate: f64,
}

#[derive(Debug, Clone)]
pub struct WsSolution {
    pub plans: Vec<WsUserPlan>,
    pub se: f64,
    /// Sum of slot powers, W.
    pub total_power: f64,
    /// K*SE / (sum P_k + K*P_RF): one RF chain active at a time.
    pub ee: f64,
}

/// Nearest waveguide in y; ties break toward the smaller index.
pub fn select_waveguide(user: &UserPos, cfg: &SystemConfig) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for m in 0..cfg.num_waveguides {
        let d = (user.y - cfg.waveguide_y(m)).abs();
        if d < best_d {
            best_d = d;
            best = m;
        }
    }
    best
}

/// Time-shared sum rate `sum_k (1/K) log2(1 + P_k g_k)` with
/// `g_k = |h_k|^2 / (M*N*sigma^2)`.
pub fn ws_se(powers: &[f64], gains: &[f64]) -> f64 {
    let kf = powers.len() as f64;
    powers
        .iter()
        .zip(gains)
        .map(|(&p, &g)| (1.0 + p * g).log2() / kf)
        .sum()
}

/// Energy efficiency with a single active RF chain: `K*SE / (sum P + K*P_RF)`,
/// i.e. SE over the cycle-average transmit power plus one chain's power.
pub fn ws_ee(se: f64, powers: &[f64], cfg: &SystemConfig) -> f64 {
    let k = powers.len() as f64;
    k * se / (powers.iter().sum::<f64>() + k * cfg.rf_chain_power)
}

struct Placer<'a> {
    cfg: &'a SystemConfig,
    ux: f64,
    uy: f64,
    wg_y: f64,
}

impl Placer<'_> {
    fn gain(&self, xs: &[f64]) -> f64 {
        waveguide_channel_raw(self.ux, self.uy, xs, self.wg_y, self.cfg).norm()
    }

    fn term(&self, x: f64) -> num_complex::Complex64 {
        waveguide_channel_raw(self.ux, self.uy, &[x], self.wg_y, self.cfg)
    }

    fn feasible(&self, x: f64, placed: &[f64]) -> bool {
        let half = self.cfg.half_len();
        x.abs() <= half
            && placed
                .iter()
                .all(|&p| (x - p).abs() >= self.cfg.min_pa_spacing - 1e-12)
    }

    /// Minimum-spacing anchor block centered on the user, shifted inward when
    /// it overhangs the region.
    fn anchors(&self, count: usize) -> Result<Vec<f64>, SolveError> {
        let delta = self.cfg.min_pa_spacing;
        let half = self.cfg.half_len();
        let span = (count as f64 - 1.0) * delta;
        if span > 2.0 * half {
            return Err(SolveError::InfeasibleGeometry);
        }
        let mut start = self.ux - span / 2.0;
        start = start.clamp(-half, half - span);
        Ok((0..count).map(|i| start + i as f64 * delta).collect())
    }

    /// Scan a window around `center` at the given resolution, keeping the
    /// position that maximizes `score` among spacing-feasible candidates.
    fn scan_best<F: Fn(f64) -> f64>(
        &self,
        center: f64,
        window: f64,
        step: f64,
        placed: &[f64],
        score: F,
    ) -> Option<(f64, f64)> {
        let mut best: Option<(f64, f64)> = None;
        let steps = (window / step).round() as i64;
        for i in -steps..=steps {
            let x = center + i as f64 * step;
            if !self.feasible(x, placed) {
                continue;
            }
            let s = score(x);
            if best.map_or(true, |(bs, _)| s > bs) {
                best = Some((s, x));
            }
        }
        best.map(|(s, x)| (x, s))
    }

    /// Amplitude anchoring plus phase alignment: fix the anchor nearest the
    /// user as phase reference, then re-place the others outward from it,
    /// each within +-lambda of its anchor at lambda/512 resolution, choosing
    /// the position whose term contributes the largest real part after
    /// rotation by the reference phase.
    fn stage_ab(&self, count: usize) -> Result<Vec<f64>, SolveError> {
        let anchors = self.anchors(count)?;
        if count == 1 {
            return Ok(anchors);
        }
        let lambda = self.cfg.lambda();
        let mut ref_idx = 0;
        for (i, &a) in anchors.iter().enumerate() {
            if (a - self.ux).abs() < (anchors[ref_idx] - self.ux).abs() {
                ref_idx = i;
            }
        }
        let ref_term = self.term(anchors[ref_idx]);
        let ref_phase = ref_term / ref_term.norm();

        let mut order: Vec<usize> = (0..count).filter(|&i| i != ref_idx).collect();
        order.sort_by_key(|&i| {
            let d = (i as i64 - ref_idx as i64).unsigned_abs();
            (d, i)
        });

        let mut placed = vec![anchors[ref_idx]];
        let mut result = vec![f64::NAN; count];
        result[ref_idx] = anchors[ref_idx];
        for &i in &order {
            let aligned = self.scan_best(anchors[i], lambda, lambda / 512.0, &placed, |x| {
                (self.term(x) * ref_phase.conj()).re
            });
            let x = match aligned {
                Some((x, _)) => x,
                // Window exhausted by spacing conflicts: snap outward.
                None => {
                    let lo = placed.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = placed.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let right = hi + self.cfg.min_pa_spacing;
                    let left = lo - self.cfg.min_pa_spacing;
                    if right <= self.cfg.half_len() {
                        right
                    } else if left >= -self.cfg.half_len() {
                        left
                    } else {
                        return Err(SolveError::InfeasibleGeometry);
                    }
                }
            };
            placed.push(x);
            result[i] = x;
        }
        result.sort_by(|a, b| a.partial_cmp(b).unwrap());

        // Phase alignment is kept only when it beats the plain anchors.
        let mut anchors_sorted = anchors;
        anchors_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if self.gain(&result) >= self.gain(&anchors_sorted) {
            Ok(result)
        } else {
            Ok(anchors_sorted)
        }
    }

    /// Per-PA coordinate refinement: shrinking-window scans on the full-gain
    /// objective, repeated until the relative improvement drops below 1e-6.
    fn stage_c(&self, xs: &mut Vec<f64>) {
        let lambda = self.cfg.lambda();
        let windows = [lambda / 64.0, lambda / 512.0, lambda / 4096.0];
        let mut current = self.gain(xs);
        for _ in 0..30 {
            let before = current;
            for i in 0..xs.len() {
                let others: Vec<f64> = xs
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, &x)| x)
                    .collect();
                for &w in &windows {
                    let here = xs[i];
                    if let Some((x, s)) = self.scan_best(here, w, w / 32.0, &others, |x| {
                        let mut cand = others.clone();
                        cand.push(x);
                        self.gain(&cand)
                    }) {
                        if s > current {
                            xs[i] = x;
                            current = s;
                        }
                    }
                }
            }
            if (current - before) <= 1e-6 * before.max(f64::MIN_POSITIVE) {
                break;
            }
        }
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }

    /// Extend a placement by one PA appended on its cheaper side, phase-aligned
    /// to the current sum within a one-sided scan.
    fn grow(&self, prev: &[f64]) -> Option<Vec<f64>> {
        let lambda = self.cfg.lambda();
        let delta = self.cfg.min_pa_spacing;
        let half = self.cfg.half_len();
        let total = waveguide_channel_raw(self.ux, self.uy, prev, self.wg_y, self.cfg);
        let phase = if total.norm() > 0.0 {
            total / total.norm()
        } else {
            num_complex::Complex64::new(1.0, 0.0)
        };
        let lo = prev.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = prev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut best: Option<(f64, f64)> = None;
        let step = lambda / 512.0;
        let steps = (3.0 * lambda / step) as i64;
        for side in [1.0, -1.0] {
            let base = if side > 0.0 { hi + delta } else { lo - delta };
            for i in 0..=steps {
                let x = base + side * i as f64 * step;
                if x.abs() > half || !self.feasible(x, prev) {
                    continue;
                }
                let s = (self.term(x) * phase.conj()).re;
                if best.map_or(true, |(bs, _)| s > bs) {
                    best = Some((s, x));
                }
            }
        }
        let (_, x) = best?;
        let mut grown = prev.to_vec();
        grown.push(x);
        grown.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Some(grown)
    }
}

/// Channel-gain-maximizing placement of all M*N PAs on waveguide `m` for one
/// user. Grown incrementally so the achieved gain is non-decreasing in the PA
/// count; each size keeps the better of the fresh three-stage placement and
/// the extension of the previous size.
pub fn place_pas(user: &UserPos, m: usize, cfg: &SystemConfig) -> Result<Vec<f64>, SolveError> {
    let count = cfg.num_waveguides * cfg.pas_per_wg;
    let placer = Placer {
        cfg,
        ux: user.x,
        uy: user.y,
        wg_y: cfg.waveguide_y(m),
    };
    let half = cfg.half_len();
    if (count as f64 - 1.0) * cfg.min_pa_spacing > 2.0 * half {
        return Err(SolveError::InfeasibleGeometry);
    }

    let mut best = vec![user.x.clamp(-half, half)];
    for c in 2..=count {
        let mut fresh = placer.stage_ab(c)?;
        placer.stage_c(&mut fresh);
        let candidate = match placer.grow(&best) {
            Some(mut grown) => {
                placer.stage_c(&mut grown);
                if placer.gain(&grown) >= placer.gain(&fresh) {
                    grown
                } else {
                    fresh
                }
            }
            None => fresh,
        };
        best = candidate;
    }
    Ok(best)
}

/// Solve the switching protocol at one sum-rate target: per-user waveguide
/// selection and placement, then water-filling over the slot powers.
/// Fully deterministic (no randomness anywhere on this path).
pub fn solve_ws(users: &UserSet, cfg: &SystemConfig, eps_se: f64) -> Result<WsSolution, SolveError> {
    let count = cfg.num_waveguides * cfg.pas_per_wg;
    let mut waveguides = Vec::with_capacity(users.len());
    let mut layouts = Vec::with_capacity(users.len());
    let mut gains = Vec::with_capacity(users.len());
    let mut norm_gains = Vec::with_capacity(users.len());
    for u in users.positions() {
        let m = select_waveguide(u, cfg);
        let xs = place_pas(u, m, cfg)?;
        let h = waveguide_channel_raw(u.x, u.y, &xs, cfg.waveguide_y(m), cfg);
        let gain = h.norm_sqr();
        waveguides.push(m);
        gains.push(gain);
        norm_gains.push(gain / (count as f64 * cfg.noise_power));
        layouts.push(xs);
    }

    let alloc = waterfill_ws(
        &norm_gains,
        &cfg.per_user_min_rates(),
        eps_se,
        cfg.max_power,
    )?;
    let kf = users.len() as f64;
    let plans: Vec<WsUserPlan> = (0..users.len())
        .map(|k| WsUserPlan {
            waveguide: waveguides[k],
            layout: layouts[k].clone(),
            gain: gains[k],
            power: alloc.powers[k],
            rate: (1.0 + alloc.powers[k] * norm_gains[k]).log2() / kf,
        })
        .collect();
    let se = ws_se(&alloc.powers, &norm_gains);
    let total_power = alloc.total();
    let ee = ws_ee(se, &alloc.powers, cfg);
    Ok(WsSolution {
        plans,
        se,
        total_power,
        ee,
    })
}
