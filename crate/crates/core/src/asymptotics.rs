//! Closed-form asymptotic predictions: log-moment expansions, Tauberian
//! log-MGF, intermittency windows and peak intensities, mass fractions,
//! and ageing criteria.
//!
//! Conventions. The window around the Legendre point is
//! `[h_t - a w_t, h_t + a w_t]` with `w_t = 1/sqrt(phi''(h_t))`. The peak
//! intensity is parameterised so that it increases in `a`,
//!
//! ```text
//!     i_t(a) = exp(-phi(h_t - a w_t)),
//! ```
//!
//! making `i_t(a) - i_t(-a)` exactly the per-site probability of landing
//! in the window (and `i_t(a)` its asymptotic equivalent).

use serde::{Deserialize, Serialize};

use crate::error::{PamError, Result};
use crate::numerics;
use crate::tails::{self, TailModel};

/// Term-by-term log-moment prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentTerms {
    /// Leading Legendre term `(gamma-1) (p t / gamma)^{gamma/(gamma-1)}`.
    pub psi: f64,
    /// Walk-cost term `-2 d kappa p t`.
    pub walk_cost: f64,
    /// Lattice correction `2 d kappa^2 gamma (p t / gamma)^{(gamma-2)/(gamma-1)}`.
    pub lattice_correction: f64,
    /// Laplace factor `ln(p t)`.
    pub log_pt: f64,
    /// Gaussian constant
    /// `0.5 ln[ (2 pi / (gamma (gamma-1))) (p t / gamma)^{-(gamma-2)/(gamma-1)} ]`.
    pub gaussian_constant: f64,
}

/// Prediction for `ln < u(t,0)^p >` with its term breakdown and the scale
/// of the first dropped term as an uncertainty band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentPrediction {
    pub t: f64,
    pub p: f64,
    pub log_moment: f64,
    pub terms: MomentTerms,
    /// Magnitude `(p t / gamma)^{(gamma-3)/(gamma-1)}` of the remainder.
    pub remainder_band: f64,
}

/// Exact Weibull log-moment expansion.
pub fn weibull_log_moment(gamma: f64, p: f64, t: f64, d: usize, kappa: f64) -> Result<MomentPrediction> {
    if !(gamma > 1.0) {
        return Err(PamError::InvalidArgument(format!(
            "Weibull shape must exceed 1, got {gamma}"
        )));
    }
    if !(p > 0.0) || !(t > 0.0) || d == 0 || !(kappa > 0.0) {
        return Err(PamError::InvalidArgument(
            "need p > 0, t > 0, d >= 1, kappa > 0".into(),
        ));
    }
    let pt = p * t;
    let base = pt / gamma;
    let ex_main = gamma / (gamma - 1.0);
    let ex_corr = (gamma - 2.0) / (gamma - 1.0);
    let two_dk = 2.0 * d as f64 * kappa;
    let terms = MomentTerms {
        psi: (gamma - 1.0) * base.powf(ex_main),
        walk_cost: -two_dk * pt,
        lattice_correction: 2.0 * d as f64 * kappa * kappa * gamma * base.powf(ex_corr),
        log_pt: pt.ln(),
        gaussian_constant: 0.5
            * ((2.0 * std::f64::consts::PI / (gamma * (gamma - 1.0))).ln()
                - ex_corr * base.ln()),
    };
    let log_moment = terms.psi
        + terms.walk_cost
        + terms.lattice_correction
        + terms.log_pt
        + terms.gaussian_constant;
    Ok(MomentPrediction {
        t,
        p,
        log_moment,
        terms,
        remainder_band: base.powf((gamma - 3.0) / (gamma - 1.0)),
    })
}

/// Laplace/Tauberian prediction of the log-MGF:
/// `psi(t) + 0.5 ln(2 pi / phi''(h_t))`, plus `ln t` when
/// `include_t_factor` is set.
///
/// Direct quadrature of `H` supports the variant with the `ln t` factor;
/// both readings are exposed and the harness pins the with-factor one
/// against the quadrature oracle.
pub fn tauberian_log_mgf(model: TailModel, t: f64, include_t_factor: bool) -> Result<f64> {
    let lp = tails::legendre_point(model, t)?;
    if lp.phi2 <= 0.0 {
        return Err(PamError::Domain(
            "phi'' must be positive at the Legendre point".into(),
        ));
    }
    let mut v = lp.psi + 0.5 * (2.0 * std::f64::consts::PI / lp.phi2).ln();
    if include_t_factor {
        v += t.ln();
    }
    Ok(v)
}

/// The interval of potential heights around the Legendre point that
/// carries the annealed mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub center: f64,
    pub half_width: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Window `[h_t - a w_t, h_t + a w_t]` with `w_t = 1/sqrt(phi''(h_t))`.
pub fn window_upsilon(model: TailModel, t: f64, a: f64) -> Result<WindowSpec> {
    if a < 0.0 {
        return Err(PamError::InvalidArgument("a must be nonnegative".into()));
    }
    let lp = tails::legendre_point(model, t)?;
    let w = 1.0 / lp.phi2.sqrt();
    Ok(WindowSpec {
        center: lp.h,
        half_width: a * w,
        lo: lp.h - a * w,
        hi: lp.h + a * w,
    })
}

/// Peak intensity `i_t(a) = exp(-phi(h_t - a / sqrt(phi''(h_t))))`,
/// increasing in `a`; `i_t(a) - i_t(-a)` is the exact window probability.
pub fn bernoulli_intensity(model: TailModel, t: f64, a: f64) -> Result<f64> {
    let lp = tails::legendre_point(model, t)?;
    let w = 1.0 / lp.phi2.sqrt();
    let edge = (lp.h - a * w).max(model.support_start());
    Ok((-model.phi(edge)?).exp())
}

/// Per-site probability of the potential landing in the window:
/// `i_t(a) - i_t(-a)`.
pub fn window_probability(model: TailModel, t: f64, a: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(PamError::InvalidArgument("a must be positive".into()));
    }
    Ok(bernoulli_intensity(model, t, a)? - bernoulli_intensity(model, t, -a)?)
}

/// Predicted fraction of annealed mass carried by the window of half
/// width `a` fluctuation units: `Phi(a) - Phi(-a)`.
pub fn mass_fraction_prediction(a: f64) -> Result<f64> {
    if !(a >= 0.0) {
        return Err(PamError::InvalidArgument("a must be nonnegative".into()));
    }
    Ok(numerics::normal_central_mass(a))
}

/// Two-term expansion of the conditional log-tail of the principal
/// eigenvalue for Weibull potentials:
/// `-(h + 2 d kappa)^gamma + 2 d kappa^2 gamma (h + 2 d kappa)^{gamma-2}`,
/// with the scale `(h + 2 d kappa)^{gamma-3}` of the remainder as a band.
pub fn weibull_log_tail(gamma: f64, h: f64, d: usize, kappa: f64) -> Result<(f64, f64)> {
    if !(gamma > 1.0) {
        return Err(PamError::InvalidArgument(format!(
            "Weibull shape must exceed 1, got {gamma}"
        )));
    }
    if d == 0 || !(kappa > 0.0) || !(h > 0.0) {
        return Err(PamError::InvalidArgument("need h > 0, d >= 1, kappa > 0".into()));
    }
    let z = h + 2.0 * d as f64 * kappa;
    let correction = 2.0 * d as f64 * kappa * kappa * gamma * z.powf(gamma - 2.0);
    let band = z.powf(gamma - 3.0);
    if !(band < 0.1 * correction.abs()) {
        return Err(PamError::Precondition(format!(
            "h = {h} too small: remainder scale {band:.3e} is not below 10% of the correction {correction:.3e}"
        )));
    }
    Ok((-z.powf(gamma) + correction, band))
}

/// Ageing diagnosis from the curvature of the cumulant generating
/// function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeingReport {
    pub grid: Vec<f64>,
    /// Second central differences of `H` on the grid.
    pub h2: Vec<f64>,
    /// Ageing scales `1 / sqrt(H''(t))`.
    pub scales: Vec<f64>,
    /// Log-log slope of `H''` along the grid.
    pub slope: f64,
    /// Verdict: `H'' -> 0` along the grid.
    pub ages: bool,
}

/// Estimates `H''` on the grid by second central differences (step `t/100`,
/// comfortably inside the curvature scale of every provided family) and
/// reports the decay verdict: the model ages iff `H'' -> 0`.
pub fn ageing_predictor(model: TailModel, t_grid: &[f64]) -> Result<AgeingReport> {
    if t_grid.len() < 3 || t_grid.windows(2).any(|w| w[1] <= w[0]) || t_grid[0] <= 0.0 {
        return Err(PamError::InvalidArgument(
            "t grid must be positive increasing with at least 3 points".into(),
        ));
    }
    let f = |t: f64| tails::cumulant_h(model, t).unwrap_or(f64::NAN);
    let mut h2 = Vec::with_capacity(t_grid.len());
    let mut scales = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let step = t / 100.0;
        let v = numerics::second_central_difference(&f, t, step);
        if !v.is_finite() || v <= 0.0 {
            return Err(PamError::Domain(format!(
                "H'' estimate {v} at t = {t} is not positive"
            )));
        }
        h2.push(v);
        scales.push(1.0 / v.sqrt());
    }
    // log-log slope between the first and last grid point
    let slope = (h2.last().unwrap().ln() - h2[0].ln())
        / (t_grid.last().unwrap().ln() - t_grid[0].ln());
    let ages = slope < -0.1 && h2.last().unwrap() < &h2[0];
    Ok(AgeingReport {
        grid: t_grid.to_vec(),
        h2,
        scales,
        slope,
        ages,
    })
}

/// Predicted time correlation coefficient of `u(t,0)^p` and
/// `u(t+s,0)^p`:
/// `A = exp( L(p(2t+s)) - [L(2pt) + L(2p(t+s))]/2 )` with `L` the
/// with-factor Tauberian log-moment surrogate. The walk-cost terms cancel
/// exactly in this combination, so no `d` or `kappa` enters.
pub fn correlation_prediction(model: TailModel, t: f64, s: f64, p: f64) -> Result<f64> {
    if !(p > 0.0) || !(t > 0.0) || s < 0.0 {
        return Err(PamError::InvalidArgument("need p > 0, t > 0, s >= 0".into()));
    }
    let lam = |tau: f64| tauberian_log_mgf(model, tau, true);
    let b = lam(p * (2.0 * t + s))? - 0.5 * (lam(2.0 * p * t)? + lam(2.0 * p * (t + s))?);
    Ok(b.exp())
}
