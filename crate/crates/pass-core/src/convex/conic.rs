//! Conic assembly for the baseband beamforming subproblems.
//!
//! Decision variables are K complex Hermitian M x M matrices `W_k` (lifted
//! beamformers) plus, for the rate-constrained variant, one auxiliary scalar
//! `t_k` per user bounding `ln(total received power + noise)` from below via
//! an exponential cone.
//!
//! Each Hermitian matrix is parameterized by M^2 reals (diagonal, then
//! re/im of the upper off-diagonals) and enters the PSD cone through the real
//! symmetric embedding `[[A, -B], [B, A]]` of `W = A + jB`, whose quadratic
//! forms and eigenvalues agree with the complex matrix. Channels are noise-
//! normalized and powers scaled by a caller-provided magnitude so the solver
//! sees O(1) data.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::DMatrix;
use num_complex::Complex64;

use super::SolveError;

const LN2: f64 = std::f64::consts::LN_2;

/// Number of real parameters of an M x M Hermitian matrix.
pub fn herm_param_count(m: usize) -> usize {
    m * m
}

/// Rebuild the complex Hermitian matrix from its real parameter vector.
pub fn theta_to_matrix(theta: &[f64], m: usize) -> DMatrix<Complex64> {
    assert_eq!(theta.len(), herm_param_count(m));
    let mut w = DMatrix::from_element(m, m, Complex64::new(0.0, 0.0));
    for i in 0..m {
        w[(i, i)] = Complex64::new(theta[i], 0.0);
    }
    let mut p = m;
    for i in 0..m {
        for j in (i + 1)..m {
            let re = theta[p];
            let im = theta[p + 1];
            p += 2;
            w[(i, j)] = Complex64::new(re, im);
            w[(j, i)] = Complex64::new(re, -im);
        }
    }
    w
}

/// Inverse of [`theta_to_matrix`] (imaginary parts of the diagonal dropped).
pub fn matrix_to_theta(w: &DMatrix<Complex64>) -> Vec<f64> {
    let m = w.nrows();
    let mut theta = Vec::with_capacity(herm_param_count(m));
    for i in 0..m {
        theta.push(w[(i, i)].re);
    }
    for i in 0..m {
        for j in (i + 1)..m {
            theta.push(w[(i, j)].re);
            theta.push(w[(i, j)].im);
        }
    }
    theta
}

/// Coefficients of `h^H W h` as a linear function of the parameter vector.
pub fn quad_coeffs(h: &[Complex64]) -> Vec<f64> {
    let m = h.len();
    let mut c = Vec::with_capacity(herm_param_count(m));
    for i in 0..m {
        c.push(h[i].norm_sqr());
    }
    for i in 0..m {
        for j in (i + 1)..m {
            let z = h[i].conj() * h[j];
            c.push(2.0 * z.re);
            c.push(-2.0 * z.im);
        }
    }
    c
}

/// Real symmetric embedding of a complex Hermitian matrix; quadratic forms at
/// `[Re h; Im h]` and the eigenvalue spectrum match the complex original.
pub fn embed_hermitian(w: &DMatrix<Complex64>) -> DMatrix<f64> {
    let m = w.nrows();
    let mut x = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        for j in 0..m {
            let re = w[(i, j)].re;
            let im = w[(i, j)].im;
            x[(i, j)] = re;
            x[(i + m, j + m)] = re;
            x[(i, j + m)] = -im;
            x[(i + m, j)] = im;
        }
    }
    x
}

/// Column of the map from Hermitian parameters to the scaled upper-triangular
/// vectorization of the embedding (off-diagonals scaled by sqrt 2, column-major
/// order), as (svec index, weight) pairs.
fn embedding_column(param: usize, m: usize) -> Vec<(usize, f64)> {
    let sq2 = std::f64::consts::SQRT_2;
    let idx = |r: usize, c: usize| -> usize {
        debug_assert!(r <= c);
        c * (c + 1) / 2 + r
    };
    if param < m {
        let i = param;
        return vec![(idx(i, i), 1.0), (idx(i + m, i + m), 1.0)];
    }
    let mut p = m;
    for i in 0..m {
        for j in (i + 1)..m {
            if param == p {
                // Re part: X(i,j) and X(i+m, j+m).
                return vec![(idx(i, j), sq2), (idx(i + m, j + m), sq2)];
            }
            if param == p + 1 {
                // Im part: X(i, j+m) = -im, X(j, i+m) = +im.
                return vec![(idx(i, j + m), -sq2), (idx(j, i + m), sq2)];
            }
            p += 2;
        }
    }
    unreachable!("parameter index out of range");
}

fn dense_to_csc(rows: &[Vec<f64>], ncols: usize) -> CscMatrix<f64> {
    let m = rows.len();
    let mut colptr = Vec::with_capacity(ncols + 1);
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    colptr.push(0);
    for c in 0..ncols {
        for (r, row) in rows.iter().enumerate() {
            let v = row[c];
            if v != 0.0 {
                rowval.push(r);
                nzval.push(v);
            }
        }
        colptr.push(rowval.len());
    }
    CscMatrix::new(m, ncols, colptr, rowval, nzval)
}

/// Which constraint family to assemble.
pub enum ConicVariant<'a> {
    /// Linearized-rate subproblem: per-user QoS floors and a sum-rate floor
    /// around the expansion quadratic forms `expansion_q[k][i]` (noise units).
    RateLowerBound {
        expansion_q: &'a [Vec<f64>],
        eps_se: f64,
    },
    /// Exact SINR-form power minimization with QoS floors only.
    QosOnly,
}

pub struct ConicOutcome {
    /// Recovered Hermitian matrices, natural power units.
    pub matrices: Vec<DMatrix<Complex64>>,
    /// Objective (total transmit power), watts.
    pub objective: f64,
    /// Relative primal-dual objective gap reported in solver units.
    pub rel_gap: f64,
    pub iterations: u32,
}

/// Assemble and solve one baseband subproblem.
///
/// `channels_norm` holds the noise-normalized channel rows `h_k / sigma_k`;
/// `power_scale` is an a-priori magnitude of the optimal total power used to
/// bring the decision variables to O(1).
pub fn solve_conic(
    channels_norm: &[Vec<Complex64>],
    min_rates: &[f64],
    p_max: f64,
    power_scale: f64,
    variant: ConicVariant<'_>,
) -> Result<ConicOutcome, SolveError> {
    let k_users = channels_norm.len();
    let m_wg = channels_norm[0].len();
    let np = herm_param_count(m_wg);
    let scale = power_scale.max(1e-15);

    let (nvar, has_t) = match variant {
        ConicVariant::RateLowerBound { .. } => (k_users * np + k_users, true),
        ConicVariant::QosOnly => (k_users * np, false),
    };
    let t_base = k_users * np;

    // Quadratic-form coefficients of each user's channel, scaled so that one
    // unit of a parameter contributes `scale` watts.
    let qc: Vec<Vec<f64>> = channels_norm
        .iter()
        .map(|h| quad_coeffs(h).iter().map(|c| c * scale).collect())
        .collect();

    // Objective: total transmit power in units of `scale`.
    let mut q = vec![0.0; nvar];
    for k in 0..k_users {
        for i in 0..m_wg {
            q[k * np + i] = 1.0;
        }
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut b: Vec<f64> = Vec::new();
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();

    // --- nonnegative block ---
    let mut nn_rows = 0usize;

    // Power budget: sum of traces <= P_max / scale.
    let mut row = vec![0.0; nvar];
    for k in 0..k_users {
        for i in 0..m_wg {
            row[k * np + i] = 1.0;
        }
    }
    rows.push(row);
    b.push(p_max / scale);
    nn_rows += 1;

    match variant {
        ConicVariant::RateLowerBound { expansion_q, eps_se } => {
            // Per-user interference level and log constants at the expansion.
            let interf_l: Vec<f64> = (0..k_users)
                .map(|k| {
                    (0..k_users)
                        .filter(|&i| i != k)
                        .map(|i| expansion_q[k][i])
                        .sum::<f64>()
                })
                .collect();
            let log_c: Vec<f64> = interf_l.iter().map(|v| (v + 1.0).log2()).collect();
            let phi: Vec<f64> = interf_l.iter().map(|v| (v + 1.0) * LN2).collect();

            // QoS rows: -t_k/ln2 + sum_{i != k} q_ki / phi_k <= I_k/phi_k - C_k - gamma_k.
            for k in 0..k_users {
                let mut row = vec![0.0; nvar];
                row[t_base + k] = -1.0 / LN2;
                for i in 0..k_users {
                    if i == k {
                        continue;
                    }
                    for p in 0..np {
                        row[i * np + p] += qc[k][p] / phi[k];
                    }
                }
                rows.push(row);
                b.push(interf_l[k] / phi[k] - log_c[k] - min_rates[k]);
                nn_rows += 1;
            }

            // Sum-rate row.
            let mut row = vec![0.0; nvar];
            let mut rhs = -eps_se;
            for k in 0..k_users {
                row[t_base + k] = -1.0 / LN2;
                rhs += interf_l[k] / phi[k] - log_c[k];
                for i in 0..k_users {
                    if i == k {
                        continue;
                    }
                    for p in 0..np {
                        row[i * np + p] += qc[k][p] / phi[k];
                    }
                }
            }
            rows.push(row);
            b.push(rhs);
            nn_rows += 1;
        }
        ConicVariant::QosOnly => {
            // Exact SINR form: q_kk >= (2^gamma - 1) (sum_{i != k} q_ki + 1).
            for k in 0..k_users {
                let snr = (2f64.powf(min_rates[k]) - 1.0).max(0.0);
                let mut row = vec![0.0; nvar];
                for p in 0..np {
                    row[k * np + p] -= qc[k][p];
                }
                for i in 0..k_users {
                    if i == k {
                        continue;
                    }
                    for p in 0..np {
                        row[i * np + p] += snr * qc[k][p];
                    }
                }
                rows.push(row);
                b.push(-snr);
                nn_rows += 1;
            }
        }
    }
    cones.push(SupportedConeT::NonnegativeConeT(nn_rows));

    // --- exponential cones: (t_k, 1, total received power + 1) ---
    if has_t {
        for k in 0..k_users {
            let mut r1 = vec![0.0; nvar];
            r1[t_base + k] = -1.0;
            rows.push(r1);
            b.push(0.0);
            rows.push(vec![0.0; nvar]);
            b.push(1.0);
            let mut r3 = vec![0.0; nvar];
            for i in 0..k_users {
                for p in 0..np {
                    r3[i * np + p] = -qc[k][p];
                }
            }
            rows.push(r3);
            b.push(1.0);
            cones.push(SupportedConeT::ExponentialConeT());
        }
    }

    // --- PSD cones, one per user ---
    let side = 2 * m_wg;
    let svec_len = side * (side + 1) / 2;
    for k in 0..k_users {
        let base = rows.len();
        for _ in 0..svec_len {
            rows.push(vec![0.0; nvar]);
            b.push(0.0);
        }
        for p in 0..np {
            for (si, wgt) in embedding_column(p, m_wg) {
                rows[base + si][k * np + p] = -wgt;
            }
        }
        cones.push(SupportedConeT::PSDTriangleConeT(side));
    }

    let a = dense_to_csc(&rows, nvar);
    let p_mat = CscMatrix::zeros((nvar, nvar));
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(200)
        .tol_gap_abs(1e-11)
        .tol_gap_rel(1e-9)
        .tol_feas(1e-9)
        .build()
        .map_err(|e| SolveError::NumericalFailure(format!("settings: {e:?}")))?;

    let mut solver = DefaultSolver::new(&p_mat, &q, &a, &b, &cones, settings);
    solver.solve();
    let sol = &solver.solution;

    match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {}
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            return Err(SolveError::Infeasible);
        }
        other => {
            return Err(SolveError::NumericalFailure(format!(
                "conic solver stopped with {other:?}"
            )));
        }
    }

    let matrices: Vec<DMatrix<Complex64>> = (0..k_users)
        .map(|k| {
            let theta: Vec<f64> = sol.x[k * np..(k + 1) * np]
                .iter()
                .map(|v| v * scale)
                .collect();
            theta_to_matrix(&theta, m_wg)
        })
        .collect();
    let objective = sol.obj_val * scale;
    let rel_gap = (sol.obj_val - sol.obj_val_dual).abs() / sol.obj_val.abs().max(1e-3);

    Ok(ConicOutcome {
        matrices,
        objective,
        rel_gap,
        iterations: sol.iterations,
    })
}
