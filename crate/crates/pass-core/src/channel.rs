//! Geometry and channel coefficients for a pinching-antenna downlink.
//!
//! A base station feeds `M` parallel dielectric waveguides stretched along the
//! x-axis at height `H` over a square service region. Each waveguide carries
//! movable pinching antennas (PAs) whose x-coordinates are the analog design
//! variables. The complex channel from a waveguide to a ground user combines
//!
//! * the phase accumulated inside the waveguide from the feed point at
//!   `x = -L/2` to each PA (guided wavelength `lambda_g = lambda / n_eff`), and
//! * line-of-sight free-space propagation from the PA to the user
//!   (amplitude `sqrt(eta) / r`, phase `-2*pi*r / lambda`).
//!
//! The per-waveguide coefficient is the coherent sum over its PAs:
//!
//! ```text
//! h_k(x_m) = sum_n sqrt(eta) * exp(-j*2*pi*(r_n/lambda + (x_n + L/2)/lambda_g)) / r_n
//! ```
//!
//! All functions here are pure; the checked entry points validate PA
//! coordinate vectors, while the `*_raw` kernels skip validation so that
//! search heuristics can score candidate (possibly infeasible) placements.

use num_complex::Complex64;
use thiserror::Error;

/// Exact speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

/// Absolute slack (meters) allowed when validating coordinates against the
/// region bounds and the minimum PA spacing, to absorb rounding from repair
/// projections that place PAs exactly on the boundary of the feasible set.
pub const COORD_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{name} must be strictly positive (got {value})")]
    NonPositive { name: &'static str, value: f64 },
    #[error("waveguide count M={m} must equal user count K={k}")]
    WaveguideUserMismatch { m: usize, k: usize },
    #[error("need at least one PA per waveguide")]
    NoPas,
    #[error("refractive index n_eff must be >= 1 (got {0})")]
    BadRefractiveIndex(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LayoutError {
    #[error("PA coordinates must be strictly increasing (x[{index}] = {value} after {prev})")]
    NotAscending { index: usize, value: f64, prev: f64 },
    #[error("PA coordinate {value} outside [-L/2, L/2] = [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("PA spacing {gap} below minimum {min} at index {index}")]
    SpacingViolation { index: usize, gap: f64, min: f64 },
    #[error("expected {expected} waveguides, got {got}")]
    WaveguideCount { expected: usize, got: usize },
    #[error("user position ({x}, {y}) outside the service region")]
    UserOutsideRegion { x: f64, y: f64 },
    #[error("expected {expected} users, got {got}")]
    UserCount { expected: usize, got: usize },
}

/// Physical and budget parameters of the system.
///
/// Lengths are meters, powers watts, rates bit/s/Hz. Waveguides are indexed
/// `0..M` with y-coordinates centered on the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Service region side length L.
    pub region_len: f64,
    /// Waveguide height H above the user plane.
    pub height: f64,
    /// Inter-waveguide spacing d.
    pub wg_spacing: f64,
    /// Number of waveguides M (= K).
    pub num_waveguides: usize,
    /// Number of users K.
    pub num_users: usize,
    /// PAs per waveguide N.
    pub pas_per_wg: usize,
    /// Carrier frequency f_c, Hz.
    pub carrier_hz: f64,
    /// Effective refractive index of the dielectric waveguide.
    pub n_eff: f64,
    /// Per-user noise power sigma^2, W.
    pub noise_power: f64,
    /// Transmit power budget P_max, W.
    pub max_power: f64,
    /// Circuit power per active RF chain P_RF, W.
    pub rf_chain_power: f64,
    /// Per-user minimum rate gamma, bit/s/Hz.
    pub min_rate: f64,
    /// Minimum spacing between adjacent PAs on a waveguide, m.
    pub min_pa_spacing: f64,
}

impl SystemConfig {
    /// Reference configuration: 10 m x 10 m region, H = 3 m, d = 1 m,
    /// f_c = 28 GHz, P_max = 100 mW, P_RF = 31.6 mW, sigma^2 = -90 dBm,
    /// gamma = 1 bit/s/Hz, M = K = 2, N = 4, PA spacing lambda/2.
    pub fn reference() -> Self {
        let carrier_hz = 28e9;
        let lambda = SPEED_OF_LIGHT / carrier_hz;
        Self {
            region_len: 10.0,
            height: 3.0,
            wg_spacing: 1.0,
            num_waveguides: 2,
            num_users: 2,
            pas_per_wg: 4,
            carrier_hz,
            n_eff: 1.4,
            noise_power: 1e-12,
            max_power: 0.1,
            rf_chain_power: 0.0316,
            min_rate: 1.0,
            min_pa_spacing: lambda / 2.0,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let pos = [
            ("L", self.region_len),
            ("H", self.height),
            ("d", self.wg_spacing),
            ("f_c", self.carrier_hz),
            ("sigma2", self.noise_power),
            ("P_max", self.max_power),
            ("P_RF", self.rf_chain_power),
            ("gamma", self.min_rate),
            ("delta_min", self.min_pa_spacing),
        ];
        for (name, value) in pos {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ConfigError::NonPositive { name, value });
            }
        }
        if self.num_waveguides != self.num_users {
            return Err(ConfigError::WaveguideUserMismatch {
                m: self.num_waveguides,
                k: self.num_users,
            });
        }
        if self.pas_per_wg == 0 {
            return Err(ConfigError::NoPas);
        }
        if self.n_eff < 1.0 {
            return Err(ConfigError::BadRefractiveIndex(self.n_eff));
        }
        Ok(())
    }

    /// Free-space wavelength lambda = c / f_c.
    pub fn lambda(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Guided wavelength lambda_g = lambda / n_eff.
    pub fn lambda_guide(&self) -> f64 {
        self.lambda() / self.n_eff
    }

    /// Path-loss amplitude sqrt(eta) = c / (4 pi f_c) = lambda / (4 pi), in meters.
    pub fn sqrt_eta(&self) -> f64 {
        self.lambda() / (4.0 * std::f64::consts::PI)
    }

    /// y-coordinate of waveguide `m` (0-based): the M waveguides are spaced by
    /// `d` and centered on the origin.
    pub fn waveguide_y(&self, m: usize) -> f64 {
        let m1 = (m + 1) as f64;
        (m1 - (self.num_waveguides as f64 + 1.0) / 2.0) * self.wg_spacing
    }

    /// Half the region side, L/2.
    pub fn half_len(&self) -> f64 {
        self.region_len / 2.0
    }

    /// Uniform per-user QoS floors.
    pub fn per_user_min_rates(&self) -> Vec<f64> {
        vec![self.min_rate; self.num_users]
    }
}

/// A user position on the ground plane (z = 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserPos {
    pub x: f64,
    pub y: f64,
}

/// The K user positions of one drop.
#[derive(Debug, Clone, PartialEq)]
pub struct UserSet {
    users: Vec<UserPos>,
}

impl UserSet {
    pub fn new(users: Vec<UserPos>, cfg: &SystemConfig) -> Result<Self, LayoutError> {
        if users.len() != cfg.num_users {
            return Err(LayoutError::UserCount {
                expected: cfg.num_users,
                got: users.len(),
            });
        }
        let half = cfg.half_len() + COORD_TOL;
        for u in &users {
            if u.x.abs() > half || u.y.abs() > half {
                return Err(LayoutError::UserOutsideRegion { x: u.x, y: u.y });
            }
        }
        Ok(Self { users })
    }

    /// Draw K users i.i.d. uniform over the L x L region.
    pub fn sample<R: rand::Rng>(rng: &mut R, cfg: &SystemConfig) -> Self {
        let half = cfg.half_len();
        let users = (0..cfg.num_users)
            .map(|_| UserPos {
                x: rng.random_range(-half..half),
                y: rng.random_range(-half..half),
            })
            .collect();
        Self { users }
    }

    pub fn positions(&self) -> &[UserPos] {
        &self.users
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }
}

/// Per-waveguide ordered PA x-coordinates.
///
/// Waveguide `m` holds `N_m` coordinates, strictly increasing with gaps of at
/// least the minimum spacing, all inside `[-L/2, L/2]`. Waveguide counts may
/// differ (the switching protocol aggregates all PAs on one waveguide).
#[derive(Debug, Clone, PartialEq)]
pub struct PinchingLayout {
    per_wg: Vec<Vec<f64>>,
}

impl PinchingLayout {
    pub fn new(per_wg: Vec<Vec<f64>>, cfg: &SystemConfig) -> Result<Self, LayoutError> {
        if per_wg.len() != cfg.num_waveguides {
            return Err(LayoutError::WaveguideCount {
                expected: cfg.num_waveguides,
                got: per_wg.len(),
            });
        }
        for xs in &per_wg {
            validate_coords(xs, cfg)?;
            check_spacing(xs, cfg.min_pa_spacing)?;
        }
        Ok(Self { per_wg })
    }

    pub fn waveguides(&self) -> &[Vec<f64>] {
        &self.per_wg
    }

    /// PA coordinates flattened in waveguide order (PSO particle layout).
    pub fn flat(&self) -> Vec<f64> {
        self.per_wg.iter().flatten().copied().collect()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.per_wg.iter().map(|xs| xs.len()).collect()
    }
}

fn validate_coords(xs: &[f64], cfg: &SystemConfig) -> Result<(), LayoutError> {
    let half = cfg.half_len();
    for (i, &x) in xs.iter().enumerate() {
        if !x.is_finite() || x.abs() > half + COORD_TOL {
            return Err(LayoutError::OutOfRange {
                value: x,
                lo: -half,
                hi: half,
            });
        }
        if i > 0 && x <= xs[i - 1] {
            return Err(LayoutError::NotAscending {
                index: i,
                value: x,
                prev: xs[i - 1],
            });
        }
    }
    Ok(())
}

fn check_spacing(xs: &[f64], min: f64) -> Result<(), LayoutError> {
    for i in 1..xs.len() {
        let gap = xs[i] - xs[i - 1];
        if gap < min - COORD_TOL {
            return Err(LayoutError::SpacingViolation { index: i, gap, min });
        }
    }
    Ok(())
}

/// K x M matrix of waveguide-to-user channel coefficients `h[k][m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    num_users: usize,
    num_wg: usize,
    data: Vec<Complex64>,
}

impl ChannelMatrix {
    /// Wrap externally computed coefficients (row-major, K rows of M entries).
    pub fn from_rows(num_users: usize, num_wg: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), num_users * num_wg);
        Self {
            num_users,
            num_wg,
            data,
        }
    }

    pub fn entry(&self, k: usize, m: usize) -> Complex64 {
        self.data[k * self.num_wg + m]
    }

    /// Row k: the channel vector `h_k` across the M waveguides.
    pub fn row(&self, k: usize) -> &[Complex64] {
        &self.data[k * self.num_wg..(k + 1) * self.num_wg]
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_waveguides(&self) -> usize {
        self.num_wg
    }
}

/// In-waveguide phase vector (Eq.-1 style): entry `n` is
/// `exp(-j*2*pi/lambda_g * (x_n + L/2))`, the phase picked up between the feed
/// point and PA `n`. Every entry has unit modulus.
pub fn inwaveguide_vector(xs: &[f64], cfg: &SystemConfig) -> Result<Vec<Complex64>, LayoutError> {
    validate_coords(xs, cfg)?;
    Ok(xs.iter().map(|&x| inwaveguide_term(x, cfg)).collect())
}

/// Free-space LoS vector: entry `n` is `sqrt(eta) * exp(-j*2*pi*r_n/lambda) / r_n`
/// with `r_n` the PA-to-user distance.
pub fn freespace_vector(
    user: &UserPos,
    xs: &[f64],
    wg_y: f64,
    cfg: &SystemConfig,
) -> Result<Vec<Complex64>, LayoutError> {
    validate_coords(xs, cfg)?;
    Ok(xs
        .iter()
        .map(|&x| freespace_term(user.x, user.y, x, wg_y, cfg))
        .collect())
}

/// Complete waveguide-to-user channel coefficient: the coherent sum of the
/// per-PA terms, each carrying the free-space and in-waveguide phases.
pub fn waveguide_channel(
    user: &UserPos,
    xs: &[f64],
    wg_y: f64,
    cfg: &SystemConfig,
) -> Result<Complex64, LayoutError> {
    validate_coords(xs, cfg)?;
    Ok(waveguide_channel_raw(user.x, user.y, xs, wg_y, cfg))
}

/// Assemble the K x M channel matrix for a validated layout.
pub fn channel_matrix(users: &UserSet, layout: &PinchingLayout, cfg: &SystemConfig) -> ChannelMatrix {
    channel_matrix_raw(users.positions(), layout.waveguides(), cfg)
}

fn inwaveguide_term(x: f64, cfg: &SystemConfig) -> Complex64 {
    let phase = -2.0 * std::f64::consts::PI / cfg.lambda_guide() * (x + cfg.half_len());
    Complex64::from_polar(1.0, phase)
}

fn freespace_term(ux: f64, uy: f64, x: f64, wg_y: f64, cfg: &SystemConfig) -> Complex64 {
    let r = pa_user_distance(ux, uy, x, wg_y, cfg.height);
    let phase = -2.0 * std::f64::consts::PI / cfg.lambda() * r;
    Complex64::from_polar(cfg.sqrt_eta() / r, phase)
}

/// PA-to-user distance `r = sqrt((x - x_k)^2 + (y_k - y_m)^2 + H^2)`.
pub fn pa_user_distance(ux: f64, uy: f64, x: f64, wg_y: f64, height: f64) -> f64 {
    let dx = ux - x;
    let dy = uy - wg_y;
    (dx * dx + dy * dy + height * height).sqrt()
}

/// Unchecked channel kernel: accepts arbitrary coordinate vectors (search
/// heuristics score unsorted or too-tight candidates before repair).
pub fn waveguide_channel_raw(
    ux: f64,
    uy: f64,
    xs: &[f64],
    wg_y: f64,
    cfg: &SystemConfig,
) -> Complex64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let lambda = cfg.lambda();
    let lambda_g = cfg.lambda_guide();
    let sqrt_eta = cfg.sqrt_eta();
    let half = cfg.half_len();
    let mut sum = Complex64::new(0.0, 0.0);
    for &x in xs {
        let r = pa_user_distance(ux, uy, x, wg_y, cfg.height);
        let phase = -two_pi * (r / lambda + (x + half) / lambda_g);
        sum += Complex64::from_polar(sqrt_eta / r, phase);
    }
    sum
}

/// Unchecked K x M assembly over raw per-waveguide coordinate slices.
pub fn channel_matrix_raw(
    users: &[UserPos],
    per_wg: &[Vec<f64>],
    cfg: &SystemConfig,
) -> ChannelMatrix {
    let num_users = users.len();
    let num_wg = per_wg.len();
    let mut data = Vec::with_capacity(num_users * num_wg);
    for u in users {
        for (m, xs) in per_wg.iter().enumerate() {
            data.push(waveguide_channel_raw(u.x, u.y, xs, cfg.waveguide_y(m), cfg));
        }
    }
    ChannelMatrix {
        num_users,
        num_wg,
        data,
    }
}
