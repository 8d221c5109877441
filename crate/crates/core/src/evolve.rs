//! Deterministic solution of the PAM on a box.
//!
//! Two routes: adaptive embedded Runge-Kutta integration of
//! `du/dt = H u` (Dormand-Prince 5(4), local relative tolerance 1e-11 by
//! default), and the exact expansion over a full symmetric eigenbasis.
//! Both carry a multiplicative log factor so that solutions growing past
//! the floating range stay representable: the stored site values are the
//! solution divided by `exp(log_scale)`.

use std::io::Write;

use crate::error::{PamError, Result};
use crate::lattice::{BoundaryCondition, HamiltonianMatrix};
use crate::spectral::EigenData;

/// Which solver produced a field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Ode,
    Spectral,
}

/// Solution values at one time, scaled by `exp(log_scale)`.
#[derive(Debug, Clone)]
pub struct SolutionField {
    pub t: f64,
    /// Per-site values divided by `exp(log_scale)`.
    pub values: Vec<f64>,
    /// Accumulated log of the renormalisation factor.
    pub log_scale: f64,
    pub bc: BoundaryCondition,
    pub solver: SolverKind,
}

impl SolutionField {
    /// Actual solution value at a site (may overflow to `inf` when the
    /// log scale is extreme; prefer [`SolutionField::log_value`] then).
    pub fn value(&self, site: usize) -> f64 {
        self.values[site] * self.log_scale.exp()
    }

    /// `ln u(t, site)`.
    pub fn log_value(&self, site: usize) -> f64 {
        self.values[site].ln() + self.log_scale
    }

    /// CSV export: site index, value, log-value.
    pub fn to_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "site,value,log_value")?;
        for site in 0..self.values.len() {
            writeln!(w, "{site},{},{}", self.value(site), self.log_value(site))?;
        }
        Ok(())
    }
}

/// Options for the adaptive integrator.
#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    /// Local relative tolerance of the embedded error estimate.
    pub rel_tol: f64,
    /// Renormalise the state (and accumulate `log_scale`) instead of
    /// failing when the solution grows past the floating range.
    pub renormalize: bool,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rel_tol: 1e-11,
            renormalize: false,
        }
    }
}

/// Integrates `du/dt = H u` from `u0` and reports the solution at each
/// requested time.
///
/// Without renormalisation the solver fails with an overflow error once
/// the state nears the floating range; switch to
/// [`solve_ode_renormalized`] (or set `renormalize`) for long horizons.
pub fn solve_ode(
    h: &HamiltonianMatrix,
    u0: &[f64],
    t_list: &[f64],
) -> Result<Vec<SolutionField>> {
    solve_ode_with(h, u0, t_list, OdeOptions::default())
}

/// Renormalising variant of [`solve_ode`]; never overflows.
pub fn solve_ode_renormalized(
    h: &HamiltonianMatrix,
    u0: &[f64],
    t_list: &[f64],
) -> Result<Vec<SolutionField>> {
    solve_ode_with(
        h,
        u0,
        t_list,
        OdeOptions {
            renormalize: true,
            ..OdeOptions::default()
        },
    )
}

// Dormand-Prince 5(4) tableau.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// difference between the 5th-order weights and the embedded 4th-order ones
const E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

pub fn solve_ode_with(
    h: &HamiltonianMatrix,
    u0: &[f64],
    t_list: &[f64],
    opts: OdeOptions,
) -> Result<Vec<SolutionField>> {
    let n = h.site_count();
    if u0.len() != n {
        return Err(PamError::InvalidArgument(format!(
            "initial condition has {} entries for {} sites",
            u0.len(),
            n
        )));
    }
    if u0.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(PamError::InvalidArgument(
            "initial condition must be nonnegative and finite".into(),
        ));
    }
    if t_list.is_empty()
        || t_list[0] < 0.0
        || t_list.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(PamError::InvalidArgument(
            "output times must be increasing and nonnegative".into(),
        ));
    }

    let mut y = u0.to_vec();
    let mut log_scale = 0.0f64;
    let mut t = 0.0f64;
    let mut out = Vec::with_capacity(t_list.len());

    let norm_bound = h.norm_bound().max(1e-12);
    let mut dt = (0.05 / norm_bound).min(t_list[t_list.len() - 1].max(1e-8));

    let mut k: Vec<Vec<f64>> = (0..7).map(|_| vec![0.0; n]).collect();
    let mut y_stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    h.apply(&y, &mut k[0]);
    let mut negative_clamped = false;

    for &t_out in t_list {
        if t_out == 0.0 {
            out.push(SolutionField {
                t: 0.0,
                values: y.clone(),
                log_scale,
                bc: h.bc(),
                solver: SolverKind::Ode,
            });
            continue;
        }
        while t < t_out {
            let mut step = dt.min(t_out - t);
            loop {
                // stages 2..7 (k[0] is fresh by FSAL)
                for s in 0..6 {
                    for i in 0..n {
                        let mut acc = 0.0;
                        for (j, kj) in k.iter().enumerate().take(s + 1) {
                            let a = A[s][j];
                            if a != 0.0 {
                                acc += a * kj[i];
                            }
                        }
                        y_stage[i] = y[i] + step * acc;
                    }
                    if s == 5 {
                        y_new.copy_from_slice(&y_stage);
                    }
                    let (head, tail) = k.split_at_mut(s + 1);
                    let _ = head;
                    h.apply(&y_stage, &mut tail[0]);
                }
                // embedded error estimate
                let y_max = y.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
                let atol = 1e-14 * y_max.max(1e-300);
                let mut err_norm = 0.0f64;
                for i in 0..n {
                    let mut e = 0.0;
                    for (j, kj) in k.iter().enumerate() {
                        if E[j] != 0.0 {
                            e += E[j] * kj[i];
                        }
                    }
                    e *= step;
                    let sc = atol + opts.rel_tol * y[i].abs().max(y_new[i].abs());
                    err_norm = err_norm.max((e / sc).abs());
                }
                if !err_norm.is_finite() {
                    return Err(PamError::Overflow(
                        "state became non-finite during integration; \
                         use the renormalising log-domain workflow"
                            .into(),
                    ));
                }
                if err_norm <= 1.0 {
                    t += step;
                    std::mem::swap(&mut y, &mut y_new);
                    k.swap(0, 6); // FSAL
                    let fac = (0.9 * err_norm.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
                    dt = step * fac;
                    break;
                }
                let fac = (0.9 * err_norm.powf(-0.2)).clamp(0.2, 1.0);
                step *= fac;
                if step < 1e-14 * t_out {
                    return Err(PamError::Convergence {
                        iterations: 0,
                        residual: err_norm,
                    });
                }
            }
            // renormalisation checkpoint
            let m = y.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            if !m.is_finite() {
                return Err(PamError::Overflow(
                    "state overflowed; use the renormalising log-domain workflow".into(),
                ));
            }
            if opts.renormalize {
                if m > 1e100 || (m > 0.0 && m < 1e-100) {
                    for v in y.iter_mut() {
                        *v /= m;
                    }
                    for v in k[0].iter_mut() {
                        *v /= m; // linear system: H(y/m) = (H y)/m
                    }
                    log_scale += m.ln();
                }
            } else if m > 1e290 {
                return Err(PamError::Overflow(format!(
                    "solution magnitude {m:.3e} at t = {t:.4}; \
                     use the renormalising log-domain workflow"
                )));
            }
        }
        // positivity: clamp roundoff-scale negatives, reject real ones
        let y_max = y.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let floor = -1e-12 * y_max.max(1e-300);
        let mut values = y.clone();
        for v in values.iter_mut() {
            if *v < 0.0 {
                if *v >= floor {
                    *v = 0.0;
                    negative_clamped = true;
                } else {
                    return Err(PamError::Domain(format!(
                        "solver produced a negative value {v:.3e} beyond the positivity tolerance"
                    )));
                }
            }
        }
        out.push(SolutionField {
            t: t_out,
            values,
            log_scale,
            bc: h.bc(),
            solver: SolverKind::Ode,
        });
    }
    if negative_clamped {
        log::warn!("roundoff-scale negative solution values clamped to zero");
    }
    Ok(out)
}

/// Exact expansion over a full eigenbasis:
/// `u(t, x) = sum_k e^{lambda_k t} (e_k, u0) e_k(x)`.
///
/// The leading exponential is factored into `log_scale`, so long horizons
/// stay representable.
pub fn solve_spectral(eig: &EigenData, u0: &[f64], t: f64) -> Result<SolutionField> {
    let full = eig.full.as_ref().ok_or_else(|| {
        PamError::InvalidArgument(
            "spectral solve needs the full spectrum (principal_eigenpair with want_full)".into(),
        )
    })?;
    let n = full.basis.nrows();
    if u0.len() != n {
        return Err(PamError::InvalidArgument(format!(
            "initial condition has {} entries for {} sites",
            u0.len(),
            n
        )));
    }
    if t < 0.0 {
        return Err(PamError::InvalidArgument("time must be nonnegative".into()));
    }
    let u0v = nalgebra::DVector::from_column_slice(u0);
    let coeffs = full.basis.transpose() * &u0v;
    let lambda1 = full.eigenvalues[0];
    let log_scale = lambda1 * t;
    let mut values = vec![0.0f64; n];
    for (kk, &lam) in full.eigenvalues.iter().enumerate() {
        let w = ((lam - lambda1) * t).exp() * coeffs[kk];
        if w == 0.0 {
            continue;
        }
        let col = full.basis.column(kk);
        for i in 0..n {
            values[i] += w * col[i];
        }
    }
    // same positivity policy as the ODE route
    let y_max = values.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let floor = -1e-12 * y_max.max(1e-300);
    for v in values.iter_mut() {
        if *v < 0.0 && *v >= floor {
            *v = 0.0;
        }
    }
    Ok(SolutionField {
        t,
        values,
        log_scale,
        bc: eig.bc,
        solver: SolverKind::Spectral,
    })
}
