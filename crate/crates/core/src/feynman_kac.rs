//! Continuous-time random walk sampling and Feynman-Kac Monte Carlo.
//!
//! The walk holds for Exp(2 d kappa) times and proposes uniform
//! nearest-neighbour steps. Under zero boundary the path is killed at its
//! first exit from the box; under free boundary an out-of-box proposal
//! leaves the walk where it is, which keeps the holding-time law intact.
//!
//! Annealed moments average exact per-field solutions of the PAM (one ODE
//! solve per sampled potential) rather than nesting walk sampling inside
//! potential sampling; the remaining Monte Carlo error is purely
//! potential randomness, and it is aggregated in log-stabilised form.

use rayon::prelude::*;

use crate::error::{PamError, Result};
use crate::evolve;
use crate::lattice::{BoundaryCondition, BoxSpec};
use crate::potential::{self, PotentialField};
use crate::rng::StreamRng;
use crate::tails::{self, TailModel};

/// Monte Carlo estimate with its standard error.
///
/// When `log_domain` is set, `mean` is the log of the sample mean and
/// `stderr` the delta-method standard error of that log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MCEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    pub seed: u64,
    pub log_domain: bool,
}

impl MCEstimate {
    /// Plain mean and standard error of a sample.
    pub fn from_samples(values: &[f64], seed: u64, log_domain: bool) -> MCEstimate {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        MCEstimate {
            mean,
            stderr: (var / n as f64).sqrt(),
            n,
            seed,
            log_domain,
        }
    }

    /// Log of the mean of `exp(w_i)`, aggregated with a running maximum so
    /// that astronomically large summands stay representable.
    pub fn from_log_samples(log_values: &[f64], seed: u64) -> MCEstimate {
        let n = log_values.len();
        let m = log_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let scaled: Vec<f64> = log_values.iter().map(|w| (w - m).exp()).collect();
        let mean_s = scaled.iter().sum::<f64>() / n as f64;
        let var_s = if n > 1 {
            scaled.iter().map(|v| (v - mean_s) * (v - mean_s)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        MCEstimate {
            mean: m + mean_s.ln(),
            // delta method: se(ln X) = se(X) / X
            stderr: (var_s / n as f64).sqrt() / mean_s,
            n,
            seed,
            log_domain: true,
        }
    }
}

/// One sampled walk path.
///
/// `positions[0]` is the start; `positions[i]` the location after the
/// `i`-th jump event at `jump_times[i-1]`. Under free boundary a
/// suppressed jump repeats the previous position. A killed path ends at
/// its exit location with `killed` set.
#[derive(Debug, Clone)]
pub struct WalkPath {
    pub jump_times: Vec<f64>,
    pub positions: Vec<Vec<i64>>,
    pub horizon: f64,
    pub killed: bool,
}

/// Samples one walk of horizon `t` started at `start`.
///
/// With a box, the boundary condition applies; without one the walk roams
/// the whole lattice and `bc` is irrelevant.
pub fn sample_walk(
    d: usize,
    kappa: f64,
    t: f64,
    bc: BoundaryCondition,
    box_spec: Option<&BoxSpec>,
    start: &[i64],
    seed: u64,
) -> Result<WalkPath> {
    if d == 0 || !(kappa > 0.0) || !(t >= 0.0) {
        return Err(PamError::InvalidArgument(
            "need d >= 1, kappa > 0 and t >= 0".into(),
        ));
    }
    if start.len() != d {
        return Err(PamError::InvalidArgument(format!(
            "start has {} coordinates in dimension {d}",
            start.len()
        )));
    }
    if let Some(b) = box_spec {
        if b.index_of(start).is_none() {
            return Err(PamError::InvalidArgument("start lies outside the box".into()));
        }
    }
    let rate = 2.0 * d as f64 * kappa;
    let mut rng = StreamRng::new(seed, 0);
    let mut pos = start.to_vec();
    let mut time = 0.0f64;
    let mut jump_times = Vec::new();
    let mut positions = vec![pos.clone()];
    let mut killed = false;
    loop {
        let sigma = rng.next_exp(rate);
        if time + sigma >= t {
            break;
        }
        time += sigma;
        let dir = rng.next_index(2 * d);
        let axis = dir / 2;
        let step = if dir % 2 == 0 { -1i64 } else { 1 };
        let mut proposal = pos.clone();
        proposal[axis] += step;
        let inside = match box_spec {
            Some(b) => b.index_of(&proposal).is_some(),
            None => true,
        };
        jump_times.push(time);
        if inside {
            pos = proposal;
            positions.push(pos.clone());
        } else {
            match bc {
                BoundaryCondition::Free => {
                    // suppressed jump: the walk stays where it is
                    positions.push(pos.clone());
                }
                BoundaryCondition::Zero => {
                    positions.push(proposal);
                    killed = true;
                    break;
                }
            }
        }
    }
    Ok(WalkPath {
        jump_times,
        positions,
        horizon: t,
        killed,
    })
}

/// Feynman-Kac estimate of `u(t, x)` for one fixed potential, with the
/// homogeneous initial condition: the sample mean over walks of
/// `exp(integral of xi along the path)`, killed paths contributing zero.
/// The path integral is accumulated exactly over the holding intervals.
pub fn fk_estimate(
    field: &PotentialField,
    t: f64,
    x: usize,
    n_walks: usize,
    bc: BoundaryCondition,
    kappa: f64,
    seed: u64,
) -> Result<MCEstimate> {
    if n_walks == 0 {
        return Err(PamError::InvalidArgument("n_walks must be positive".into()));
    }
    if !(t >= 0.0) {
        return Err(PamError::InvalidArgument("t must be nonnegative".into()));
    }
    let box_spec = field.box_spec();
    let d = box_spec.dim();
    let rate = 2.0 * d as f64 * kappa;
    let values: Vec<f64> = (0..n_walks as u64)
        .into_par_iter()
        .map(|w| {
            let mut rng = StreamRng::new(seed, w);
            let mut site = x;
            let mut remaining = t;
            let mut integral = 0.0f64;
            loop {
                let sigma = rng.next_exp(rate);
                if sigma >= remaining {
                    integral += field.value(site) * remaining;
                    return integral.exp();
                }
                integral += field.value(site) * sigma;
                remaining -= sigma;
                let dir = rng.next_index(2 * d);
                let axis = dir / 2;
                let step = if dir % 2 == 0 { -1i64 } else { 1 };
                let mut coords = box_spec.coords_of(site);
                coords[axis] += step;
                match box_spec.index_of(&coords) {
                    Some(next) => site = next,
                    None => match bc {
                        BoundaryCondition::Free => {} // stay put
                        BoundaryCondition::Zero => return 0.0,
                    },
                }
            }
        })
        .collect();
    Ok(MCEstimate::from_samples(&values, seed, false))
}

/// Default box radius for walk-range concentration at horizon `t`:
/// `max(3, ceil(2 kappa t + 4 sqrt(kappa t)))`.
pub fn default_radius(kappa: f64, t: f64) -> f64 {
    let kt = kappa * t;
    (2.0 * kt + 4.0 * kt.sqrt()).ceil().max(3.0)
}

/// Annealed moment estimate: the log of the sample mean of `u(t,0)^p`
/// over potential realizations, each `u(t,0)` computed by an exact ODE
/// solve for that field.
///
/// A variance guard refuses parameter ranges where the predicted sample
/// size needed for a meaningful estimate exceeds desk scale.
pub fn annealed_moment_mc(
    model: TailModel,
    box_spec: &BoxSpec,
    bc: BoundaryCondition,
    kappa: f64,
    t: f64,
    p: f64,
    n_fields: usize,
    seed: u64,
) -> Result<MCEstimate> {
    if !(p > 0.0) {
        return Err(PamError::InvalidArgument("moment order p must be positive".into()));
    }
    if !(t >= 0.0) {
        return Err(PamError::InvalidArgument("t must be nonnegative".into()));
    }
    if n_fields == 0 {
        return Err(PamError::InvalidArgument("n_fields must be positive".into()));
    }
    if !model.has_finite_mgf() {
        return Err(PamError::InfiniteCumulant);
    }
    if t == 0.0 {
        return Ok(MCEstimate {
            mean: 0.0,
            stderr: 0.0,
            n: n_fields,
            seed,
            log_domain: true,
        });
    }
    // Variance guard: the annealed second moment of u^p is bounded by
    // e^{H(2pt)}, the squared first moment below by e^{2 H(pt) - 4dk pt},
    // so the relative sd of a single sample is at most roughly
    // sqrt(e^{H(2pt) - 2 H(pt) + 4 d kappa p t}).
    let two_dk = 2.0 * box_spec.dim() as f64 * kappa;
    let log_var_bound =
        tails::cumulant_h(model, 2.0 * p * t)? - 2.0 * tails::cumulant_h(model, p * t)?
            + 2.0 * two_dk * p * t;
    let rel_sd_single = (log_var_bound.min(700.0)).exp().sqrt();
    let rel_se_mean = rel_sd_single / (n_fields as f64).sqrt();
    if rel_se_mean > 0.5 {
        let needed = (2.0 * rel_sd_single).powi(2);
        return Err(PamError::Infeasible(format!(
            "predicted relative standard error {rel_se_mean:.2e} at n = {n_fields}; \
             roughly {needed:.3e} samples would be required (t = {t}, p = {p}); \
             use the quadrature predictions instead"
        )));
    }
    let origin = box_spec.origin_index();
    let u0 = vec![1.0; box_spec.site_count()];
    let logs: Vec<f64> = (0..n_fields as u64)
        .into_par_iter()
        .map(|r| -> Result<f64> {
            let field = potential::sample_field_indexed(box_spec, model, seed, r);
            let h = field.hamiltonian(bc, kappa)?;
            let sol = evolve::solve_ode_renormalized(&h, &u0, &[t])?;
            Ok(p * sol[0].log_value(origin))
        })
        .collect::<Result<Vec<f64>>>()?;
    if logs.iter().any(|w| !w.is_finite()) {
        return Err(PamError::DegenerateEstimate(
            "non-finite log-contribution encountered (all mass lost to the boundary?)".into(),
        ));
    }
    Ok(MCEstimate::from_log_samples(&logs, seed))
}
