//! Principal eigenpairs of the Anderson Hamiltonian, the exit functional,
//! and the identities tying the two together.
//!
//! The exit functional
//!
//! ```text
//!     E_R(h) = kappa * sum_{|y|_1 = 1} v_h(y),
//! ```
//!
//! where `v_h` solves `kappa*Delta v + (xi - h) v = 0` on the punctured box
//! with `v(0) = 1`, is computed by a deterministic symmetric linear solve
//! rather than walk simulation; Monte Carlo enters only through averaging
//! over potential realizations. Whenever the origin value dominates the
//! rest of the field by more than `2 d kappa`, the principal eigenvalue is
//! the unique root of
//!
//! ```text
//!     xi(0) = h + 2 d kappa - E_R(h),
//! ```
//!
//! which this module exploits both as an alternative eigenvalue route and
//! as the bridge from eigenvalue tails to the potential tail `Fbar`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{PamError, Result};
use crate::feynman_kac::MCEstimate;
use crate::lattice::{BoundaryCondition, BoxSpec, HamiltonianMatrix};
use crate::numerics;
use crate::potential::{self, PotentialField};
use crate::tails::TailModel;

/// Site count up to which dense symmetric eigensolves are used.
pub const DENSE_LIMIT: usize = 4096;

/// Full spectrum of a dense solve, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct FullSpectrum {
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors, one column per eigenvalue.
    pub basis: DMatrix<f64>,
}

/// Principal eigendata of a Hamiltonian.
#[derive(Debug, Clone)]
pub struct EigenData {
    pub lambda1: f64,
    /// l2-normalised Perron eigenvector, entrywise nonnegative.
    pub e1: Vec<f64>,
    /// `lambda1 - lambda2` when the full spectrum was computed.
    pub gap: Option<f64>,
    pub bc: BoundaryCondition,
    pub full: Option<FullSpectrum>,
}

/// Exit functional value at spectral parameter `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitFunctional {
    pub h: f64,
    pub value: f64,
    pub bc: BoundaryCondition,
}

/// Largest eigenvalue and positive eigenvector.
///
/// Dense symmetric solve up to [`DENSE_LIMIT`] sites (which also reports
/// the spectral gap), shifted power iteration above.
pub fn principal_eigenpair(h: &HamiltonianMatrix, want_full: bool) -> Result<EigenData> {
    let n = h.site_count();
    if n <= DENSE_LIMIT {
        let dense = h.to_dense();
        let eig = dense.symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let lambda1 = eig.eigenvalues[order[0]];
        let lambda2 = eig.eigenvalues[order[1]];
        let mut e1: Vec<f64> = eig.eigenvectors.column(order[0]).iter().cloned().collect();
        let sum: f64 = e1.iter().sum();
        if sum < 0.0 {
            for v in &mut e1 {
                *v = -*v;
            }
        }
        let residual = eigen_residual(h, &e1, lambda1);
        if residual > 1e-10 * h.norm_bound() {
            return Err(PamError::Convergence {
                iterations: 0,
                residual,
            });
        }
        let full = if want_full {
            let mut eigenvalues = Vec::with_capacity(n);
            let mut basis = DMatrix::zeros(n, n);
            for (k, &idx) in order.iter().enumerate() {
                eigenvalues.push(eig.eigenvalues[idx]);
                basis.set_column(k, &eig.eigenvectors.column(idx));
            }
            Some(FullSpectrum { eigenvalues, basis })
        } else {
            None
        };
        Ok(EigenData {
            lambda1,
            e1,
            gap: Some(lambda1 - lambda2),
            bc: h.bc(),
            full,
        })
    } else {
        if want_full {
            return Err(PamError::InvalidArgument(format!(
                "full spectrum requested for {n} sites; dense solves stop at {DENSE_LIMIT}"
            )));
        }
        let shift = h
            .diagonal()
            .iter()
            .fold(0.0f64, |acc, &d| acc.max(d.abs()))
            + 2.0 * h.dim() as f64 * h.kappa();
        let mut v = vec![1.0 / (n as f64).sqrt(); n];
        let mut w = vec![0.0; n];
        let mut mu_prev = f64::NEG_INFINITY;
        let cap = 500_000usize;
        for it in 0..cap {
            h.apply(&v, &mut w);
            for i in 0..n {
                w[i] += shift * v[i];
            }
            let mu: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in &mut w {
                *x /= norm;
            }
            std::mem::swap(&mut v, &mut w);
            if (mu - mu_prev).abs() < 1e-13 {
                let lambda1 = mu - shift;
                let sum: f64 = v.iter().sum();
                if sum < 0.0 {
                    for x in &mut v {
                        *x = -*x;
                    }
                }
                let residual = eigen_residual(h, &v, lambda1);
                if residual > 1e-8 * h.norm_bound() {
                    return Err(PamError::Convergence {
                        iterations: it,
                        residual,
                    });
                }
                return Ok(EigenData {
                    lambda1,
                    e1: v,
                    gap: None,
                    bc: h.bc(),
                    full: None,
                });
            }
            mu_prev = mu;
        }
        let lambda = mu_prev - shift;
        Err(PamError::Convergence {
            iterations: cap,
            residual: eigen_residual(h, &v, lambda),
        })
    }
}

fn eigen_residual(h: &HamiltonianMatrix, e: &[f64], lambda: f64) -> f64 {
    let mut he = vec![0.0; e.len()];
    h.apply(e, &mut he);
    he.iter()
        .zip(e)
        .map(|(a, b)| (a - lambda * b).abs())
        .fold(0.0, f64::max)
}

/// Builds and solves the punctured boundary problem
/// `kappa*Delta v + (xi - h) v = 0` on the box minus the origin, with
/// `v(origin) = 1` (extended by zero outside under zero boundary).
/// Returns the full profile including `v(origin) = 1`.
fn exit_profile_impl(
    field: &PotentialField,
    bc: BoundaryCondition,
    kappa: f64,
    h: f64,
) -> Result<Vec<f64>> {
    let box_spec = field.box_spec();
    let n = box_spec.site_count();
    let origin = box_spec.origin_index();
    let m = n - 1;
    let row_of = |site: usize| if site < origin { site } else { site - 1 };

    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut b = DVector::<f64>::zeros(m);
    for site in 0..n {
        if site == origin {
            continue;
        }
        let row = row_of(site);
        let nbrs = box_spec.neighbors(site);
        let degree = match bc {
            BoundaryCondition::Zero => 2 * box_spec.dim(),
            BoundaryCondition::Free => nbrs.len(),
        };
        a[(row, row)] = h - field.value(site) + kappa * degree as f64;
        for nb in nbrs {
            if nb == origin {
                b[row] += kappa;
            } else {
                a[(row, row_of(nb))] = -kappa;
            }
        }
    }
    let chol = a.cholesky().ok_or_else(|| {
        PamError::Domain(format!(
            "punctured system is not positive definite at h = {h}; \
             the exponential exit functional diverges"
        ))
    })?;
    let sol = chol.solve(&b);
    let mut v = vec![1.0; n];
    for site in 0..n {
        if site != origin {
            v[site] = sol[row_of(site)];
        }
    }
    Ok(v)
}

/// Exit functional `E_R(h) = kappa * sum of the profile over the origin's
/// neighbours`, by the deterministic linear solve.
pub fn exit_functional(
    field: &PotentialField,
    bc: BoundaryCondition,
    kappa: f64,
    h: f64,
) -> Result<ExitFunctional> {
    let v = exit_profile_impl(field, bc, kappa, h)?;
    let box_spec = field.box_spec();
    let value = kappa
        * box_spec
            .neighbors(box_spec.origin_index())
            .iter()
            .map(|&y| v[y])
            .sum::<f64>();
    Ok(ExitFunctional { h, value, bc })
}

/// Principal eigenvalue as the root of `xi(0) = h + 2 d kappa - E_R(h)`,
/// valid when the origin dominates the field by more than `2 d kappa`.
pub fn lambda_via_root(field: &PotentialField, bc: BoundaryCondition, kappa: f64) -> Result<f64> {
    let stats = field.order_statistics()?;
    let xi0 = field.origin_value();
    let two_dk = 2.0 * field.box_spec().dim() as f64 * kappa;
    if !(xi0 - stats.xi_hat > two_dk) {
        return Err(PamError::Precondition(format!(
            "gap condition fails: xi(0) - max off-origin = {} <= 2 d kappa = {two_dk}",
            xi0 - stats.xi_hat
        )));
    }
    let f = |h: f64| {
        let e = exit_functional(field, bc, kappa, h)
            .map(|e| e.value)
            .unwrap_or(f64::INFINITY);
        h + two_dk - e - xi0
    };
    // Bracket from the eigenvalue sandwich: f < 0 at xi0 - 2dk, f >= 0 at xi0.
    let root = numerics::bracketed_root(&f, xi0 - two_dk, xi0, 1e-15);
    let res = f(root).abs();
    if res > 1e-12 {
        return Err(PamError::Convergence {
            iterations: 200,
            residual: res,
        });
    }
    Ok(root)
}

/// Principal eigenfunction profile `v = e1 / e1(0)` via the boundary
/// problem at `h = lambda1`. Requires the gap condition and the argmax at
/// the origin.
pub fn eigenfunction_profile(
    field: &PotentialField,
    lambda1: f64,
    bc: BoundaryCondition,
    kappa: f64,
) -> Result<Vec<f64>> {
    let stats = field.order_statistics()?;
    let origin = field.box_spec().origin_index();
    let two_dk = 2.0 * field.box_spec().dim() as f64 * kappa;
    if stats.argmax_site != origin {
        return Err(PamError::Precondition(
            "eigenfunction profile needs the potential maximum at the origin".into(),
        ));
    }
    if !(stats.xi1 - stats.xi2 > two_dk) {
        return Err(PamError::Precondition(format!(
            "gap condition fails: xi1 - xi2 = {} <= 2 d kappa = {two_dk}",
            stats.xi1 - stats.xi2
        )));
    }
    exit_profile_impl(field, bc, kappa, lambda1)
}

/// `1 / l2-norm` of a profile; the value that rescales `v` to a normalised
/// eigenvector.
pub fn profile_normalizer(profile: &[f64]) -> f64 {
    1.0 / profile.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Distribution of the number of embedded-chain steps needed to first hit
/// the origin from site `y`, as exact dynamic programming over step counts.
///
/// Under zero boundary the chain is killed outside the box (mass is lost);
/// under free boundary out-of-box proposals keep the chain in place, so
/// stay-steps count as steps and holding times keep rate `2 d kappa`.
pub fn hitting_step_distribution(
    box_spec: &BoxSpec,
    bc: BoundaryCondition,
    y: usize,
    max_steps: usize,
) -> Result<Vec<f64>> {
    if max_steps < 1 {
        return Err(PamError::InvalidArgument("max_steps must be >= 1".into()));
    }
    let origin = box_spec.origin_index();
    if y == origin {
        return Err(PamError::InvalidArgument(
            "start site must differ from the origin".into(),
        ));
    }
    let n = box_spec.site_count();
    let d = box_spec.dim();
    let step_prob = 1.0 / (2 * d) as f64;
    let mut alive = vec![0.0f64; n];
    alive[y] = 1.0;
    let mut next = vec![0.0f64; n];
    let mut hit = Vec::with_capacity(max_steps);
    for _ in 0..max_steps {
        next.iter_mut().for_each(|x| *x = 0.0);
        let mut hit_mass = 0.0;
        for site in 0..n {
            let mass = alive[site];
            if mass == 0.0 {
                continue;
            }
            let nbrs = box_spec.neighbors(site);
            for &nb in &nbrs {
                if nb == origin {
                    hit_mass += mass * step_prob;
                } else {
                    next[nb] += mass * step_prob;
                }
            }
            let missing = 2 * d - nbrs.len();
            if missing > 0 {
                match bc {
                    // suppressed jumps keep the chain in place
                    BoundaryCondition::Free => next[site] += mass * step_prob * missing as f64,
                    // killed outside: the mass is simply lost
                    BoundaryCondition::Zero => {}
                }
            }
        }
        hit.push(hit_mass);
        std::mem::swap(&mut alive, &mut next);
    }
    Ok(hit)
}

fn factorial_binomial(n: usize, m: usize) -> f64 {
    // n! * C(n + m - 1, n)
    let mut acc = 1.0f64;
    for j in 0..n {
        acc *= (m + j) as f64;
    }
    acc
}

/// Series bounds on the magnitude of the `n`-th `h`-derivative of the
/// per-neighbour exit expectation, for any potential with values in
/// `[0, xi_hat_bound]`.
///
/// The lower sum keeps steps up to `2 ceil(R) + 1` and replaces the
/// potential by 0; the upper sum runs to `2 k_max + 1` steps with the
/// potential replaced by `xi_hat_bound`, plus a geometric bound on the
/// dropped tail, so `lower <= exact <= upper` holds for every admissible
/// realization.
pub fn erlang_series_bounds(
    box_spec: &BoxSpec,
    bc: BoundaryCondition,
    kappa: f64,
    h: f64,
    xi_hat_bound: f64,
    n: usize,
    k_max: usize,
) -> Result<(f64, f64)> {
    if k_max < 1 {
        return Err(PamError::InvalidArgument("k_max must be >= 1".into()));
    }
    let d = box_spec.dim();
    let two_dk = 2.0 * d as f64 * kappa;
    if !(h > xi_hat_bound - two_dk) {
        return Err(PamError::Precondition(format!(
            "need h > xi_hat_bound - 2 d kappa = {}",
            xi_hat_bound - two_dk
        )));
    }
    let origin = box_spec.origin_index();
    let y = box_spec.neighbors(origin)[0];
    let max_steps = 2 * k_max + 1;
    let steps = hitting_step_distribution(box_spec, bc, y, max_steps)?;

    // z = 0 for the lower bound, z = xi_hat_bound for the upper one
    let term = |m: usize, p: f64, z: f64| -> f64 {
        let denom = h + two_dk - z;
        factorial_binomial(n, m) * p * (two_dk / denom).powi(m as i32) / denom.powi(n as i32)
    };

    let lower_steps = (2 * box_spec.half_extent() as usize + 1).min(max_steps);
    let lower: f64 = (1..=lower_steps).map(|m| term(m, steps[m - 1], 0.0)).sum();

    let denom = h + two_dk - xi_hat_bound;
    let q = two_dk / denom;
    let m_cut = max_steps;
    let ratio = q * (n + m_cut + 1) as f64 / (m_cut + 1) as f64;
    if ratio >= 1.0 {
        return Err(PamError::DivergentSeries(format!(
            "upper series tail ratio {ratio:.4} >= 1 at h = {h}; increase h or k_max"
        )));
    }
    let mut upper: f64 = (1..=max_steps).map(|m| term(m, steps[m - 1], xi_hat_bound)).sum();
    // tail bound with hitting probabilities replaced by 1
    let tail_head = term(m_cut + 1, 1.0, xi_hat_bound);
    upper += tail_head / (1.0 - ratio);
    Ok((lower, upper))
}

/// Monte Carlo average of `Fbar(h + 2 d kappa - E_R(h))` over fields
/// conditioned on the off-origin maximum staying below `h - c`.
///
/// This is the conditional upper-tail probability of the principal
/// eigenvalue. No rare event is sampled: `Fbar` is evaluated in closed
/// form, and the only randomness left is the conditioned potential.
pub fn conditional_tail_mc(
    model: TailModel,
    box_spec: &BoxSpec,
    bc: BoundaryCondition,
    kappa: f64,
    h: f64,
    c: f64,
    n_samples: usize,
    seed: u64,
) -> Result<MCEstimate> {
    let two_dk = 2.0 * box_spec.dim() as f64 * kappa;
    if !(c > two_dk) {
        return Err(PamError::Precondition(format!(
            "need c > 2 d kappa = {two_dk}, got c = {c}"
        )));
    }
    if !(h >= c) {
        return Err(PamError::Precondition(format!("need h >= c, got h = {h} < c = {c}")));
    }
    if n_samples == 0 {
        return Err(PamError::InvalidArgument("n_samples must be positive".into()));
    }
    let bound = h - c;
    let values: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|r| {
            let field =
                potential::sample_field_conditioned_indexed(box_spec, model, bound, None, seed, r)?;
            let exit = exit_functional(&field, bc, kappa, h)?;
            model.survival(h + two_dk - exit.value)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(MCEstimate::from_samples(&values, seed, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_box, hamiltonian};
    use crate::potential::sample_field;
    use approx::assert_relative_eq;

    fn w2() -> TailModel {
        TailModel::weibull(2.0).unwrap()
    }

    fn spike_field() -> PotentialField {
        let b = build_box(1, 1.0).unwrap();
        PotentialField::from_values(&b, w2(), 0, vec![0.0, 5.0, 0.0]).unwrap()
    }

    #[test]
    fn flat_free_field_has_zero_eigenvalue_and_constant_vector() {
        let b = build_box(2, 2.0).unwrap();
        let h = hamiltonian(&b, BoundaryCondition::Free, 1.0, &vec![0.0; b.site_count()]).unwrap();
        let eig = principal_eigenpair(&h, false).unwrap();
        assert!(eig.lambda1.abs() < 1e-12);
        let c = 1.0 / (b.site_count() as f64).sqrt();
        for v in &eig.e1 {
            assert_relative_eq!(*v, c, max_relative = 1e-8);
        }
    }

    #[test]
    fn zero_bc_path_graph_eigenvalue() {
        // 3-site path with diagonal -2: largest eigenvalue sqrt(2) - 2
        let b = build_box(1, 1.0).unwrap();
        let h = hamiltonian(&b, BoundaryCondition::Zero, 1.0, &[0.0, 0.0, 0.0]).unwrap();
        let eig = principal_eigenpair(&h, true).unwrap();
        assert_relative_eq!(eig.lambda1, 2f64.sqrt() - 2.0, max_relative = 1e-12);
        let full = eig.full.unwrap();
        assert_eq!(full.eigenvalues.len(), 3);
        assert_relative_eq!(full.eigenvalues[1], -2.0, epsilon = 1e-12);
        assert_relative_eq!(full.eigenvalues[2], -2.0 - 2f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn spike_eigenvalue_closed_form() {
        // symmetric 3x3 reduction gives lambda^2 - lambda - 8 = 0
        let expected = (1.0 + 33f64.sqrt()) / 2.0;
        let h = spike_field().hamiltonian(BoundaryCondition::Zero, 1.0).unwrap();
        let eig = principal_eigenpair(&h, false).unwrap();
        assert_relative_eq!(eig.lambda1, expected, max_relative = 1e-12);
        assert!(eig.e1.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn eigen_sandwich_and_bc_ordering_on_random_fields() {
        for d in [1usize, 2] {
            let b = build_box(d, 3.0).unwrap();
            let kappa = 0.8;
            let two_dk = 2.0 * d as f64 * kappa;
            for seed in 0..60u64 {
                let f = sample_field(&b, w2(), seed);
                let stats = f.order_statistics().unwrap();
                let mut lambdas = Vec::new();
                for bc in [BoundaryCondition::Free, BoundaryCondition::Zero] {
                    let h = f.hamiltonian(bc, kappa).unwrap();
                    let eig = principal_eigenpair(&h, false).unwrap();
                    assert!(eig.lambda1 <= stats.xi1 + 1e-10);
                    assert!(stats.xi1 <= eig.lambda1 + two_dk + 1e-10);
                    lambdas.push(eig.lambda1);
                }
                // domain inclusion: zero <= free
                assert!(lambdas[1] <= lambdas[0] + 1e-12);
            }
        }
    }

    #[test]
    fn exit_functional_hand_values() {
        let b = build_box(1, 1.0).unwrap();
        let f = PotentialField::from_values(&b, w2(), 0, vec![0.0, 1.0, 0.0]).unwrap();
        // zero bc: v(+-1) = 1/(2+h)
        let e = exit_functional(&f, BoundaryCondition::Zero, 1.0, 2.0).unwrap();
        assert_relative_eq!(e.value, 0.5, max_relative = 1e-14);
        // free bc: v(+-1) = 1/(1+h)
        let e = exit_functional(&f, BoundaryCondition::Free, 1.0, 2.0).unwrap();
        assert_relative_eq!(e.value, 2.0 / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn exit_functional_decays_in_h() {
        let b = build_box(2, 2.0).unwrap();
        let f = sample_field(&b, w2(), 17);
        let stats = f.order_statistics().unwrap();
        let mut prev = f64::INFINITY;
        for h in [stats.xi_hat + 1.0, 10.0 + stats.xi_hat, 100.0, 10_000.0] {
            let e = exit_functional(&f, BoundaryCondition::Free, 1.0, h).unwrap();
            assert!(e.value > 0.0);
            assert!(e.value < prev);
            prev = e.value;
        }
    }

    #[test]
    fn exit_functional_convex_decreasing_grid() {
        let b = build_box(1, 3.0).unwrap();
        let f = sample_field(&b, w2(), 5);
        let stats = f.order_statistics().unwrap();
        let h0 = stats.xi1 + 0.5;
        let grid: Vec<f64> = (0..40).map(|i| h0 + 0.25 * i as f64).collect();
        let vals: Vec<f64> = grid
            .iter()
            .map(|&h| exit_functional(&f, BoundaryCondition::Zero, 1.0, h).unwrap().value)
            .collect();
        for w in vals.windows(2) {
            assert!(w[1] < w[0]);
        }
        for w in vals.windows(3) {
            // discrete convexity with a loose floor for roundoff
            assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-8);
        }
    }

    #[test]
    fn exit_functional_domain_error_when_h_too_small() {
        let f = spike_field();
        // h far below the off-origin spectrum bound
        let r = exit_functional(&f.pin_origin(0.0), BoundaryCondition::Free, 1.0, -10.0);
        assert!(matches!(r, Err(PamError::Domain(_))));
    }

    #[test]
    fn root_identity_on_spike_field() {
        let f = spike_field();
        let expected = (1.0 + 33f64.sqrt()) / 2.0;
        let lam = lambda_via_root(&f, BoundaryCondition::Zero, 1.0).unwrap();
        assert_relative_eq!(lam, expected, max_relative = 1e-12);
    }

    #[test]
    fn root_identity_matches_eigensolver_on_random_gap_fields() {
        for d in [1usize, 2] {
            let b = build_box(d, 3.0).unwrap();
            let kappa = 1.0;
            let two_dk = 2.0 * d as f64 * kappa;
            for seed in 0..50u64 {
                let raw = sample_field(&b, w2(), seed);
                let stats = raw.order_statistics().unwrap();
                let f = raw.pin_origin(stats.xi_hat + two_dk + 1.0);
                for bc in [BoundaryCondition::Free, BoundaryCondition::Zero] {
                    let lam_root = lambda_via_root(&f, bc, kappa).unwrap();
                    let eig = principal_eigenpair(&f.hamiltonian(bc, kappa).unwrap(), false).unwrap();
                    assert!(
                        (lam_root - eig.lambda1).abs() <= 1e-10,
                        "d={d} seed={seed} {bc}: root {lam_root} vs eigen {}",
                        eig.lambda1
                    );
                }
            }
        }
    }

    #[test]
    fn root_identity_requires_gap() {
        let b = build_box(1, 1.0).unwrap();
        let f = PotentialField::from_values(&b, w2(), 0, vec![0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            lambda_via_root(&f, BoundaryCondition::Free, 1.0),
            Err(PamError::Precondition(_))
        ));
    }

    #[test]
    fn profile_matches_spike_closed_form_and_eigensolver() {
        let f = spike_field();
        let lam = (1.0 + 33f64.sqrt()) / 2.0;
        let v = eigenfunction_profile(&f, lam, BoundaryCondition::Zero, 1.0).unwrap();
        let expected = 2.0 / (5.0 + 33f64.sqrt());
        assert_relative_eq!(v[0], expected, max_relative = 1e-12);
        assert_relative_eq!(v[2], expected, max_relative = 1e-12);
        let eig = principal_eigenpair(&f.hamiltonian(BoundaryCondition::Zero, 1.0).unwrap(), false)
            .unwrap();
        for i in 0..3 {
            assert!((v[i] - eig.e1[i] / eig.e1[1]).abs() < 1e-8);
        }
        // normalizer rescales the profile onto the unit sphere
        let n = profile_normalizer(&v);
        let norm: f64 = v.iter().map(|x| (x * n) * (x * n)).sum::<f64>().sqrt();
        assert_relative_eq!(norm, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn profile_decay_bound_holds() {
        // v(x) <= K exp(-|x| ln(c/2dk)) with K = 1/(1 - 2dk/c)
        for d in [1usize, 2] {
            let b = build_box(d, 3.0).unwrap();
            let kappa = 1.0;
            let two_dk = 2.0 * d as f64 * kappa;
            for seed in 100..140u64 {
                let raw = sample_field(&b, w2(), seed);
                let stats = raw.order_statistics().unwrap();
                let f = raw.pin_origin(stats.xi_hat + two_dk + 2.0);
                for bc in [BoundaryCondition::Free, BoundaryCondition::Zero] {
                    let lam = lambda_via_root(&f, bc, kappa).unwrap();
                    let v = eigenfunction_profile(&f, lam, bc, kappa).unwrap();
                    let gap = f.origin_value() - f.order_statistics().unwrap().xi_hat;
                    let c = (gap + two_dk) / 2.0; // strictly inside (2dk, gap)
                    let k = 1.0 / (1.0 - two_dk / c);
                    for site in 0..b.site_count() {
                        let l1 = b.l1_norm(site) as f64;
                        let bound = k * (-l1 * (c / two_dk).ln()).exp();
                        assert!(
                            v[site] <= bound + 1e-12,
                            "site {site}: v = {}, bound = {bound}",
                            v[site]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn hitting_distribution_free_lazy_two_state() {
        // d=1, R=1, from site 1: each step hits with prob 1/2, stays with 1/2
        let b = build_box(1, 1.0).unwrap();
        let y = b.index_of(&[1]).unwrap();
        let p = hitting_step_distribution(&b, BoundaryCondition::Free, y, 20).unwrap();
        for (i, &mass) in p.iter().enumerate() {
            assert_relative_eq!(mass, 0.5f64.powi(i as i32 + 1), max_relative = 1e-12);
        }
    }

    #[test]
    fn hitting_distribution_zero_single_path() {
        let b = build_box(1, 1.0).unwrap();
        let y = b.index_of(&[1]).unwrap();
        let p = hitting_step_distribution(&b, BoundaryCondition::Zero, y, 10).unwrap();
        assert_relative_eq!(p[0], 0.5, max_relative = 1e-15);
        assert!(p[1..].iter().all(|&x| x == 0.0));
        assert_relative_eq!(p.iter().sum::<f64>(), 0.5, max_relative = 1e-15);
    }

    #[test]
    fn hitting_distribution_zero_parity() {
        // genuine moves only: from |y| = 1 the hit count is odd
        let b = build_box(1, 3.0).unwrap();
        let y = b.index_of(&[1]).unwrap();
        let p = hitting_step_distribution(&b, BoundaryCondition::Zero, y, 15).unwrap();
        for (i, &mass) in p.iter().enumerate() {
            if (i + 1) % 2 == 0 {
                assert_eq!(mass, 0.0, "even step count {} has mass {mass}", i + 1);
            }
        }
        assert!(p[0] > 0.0 && p[2] > 0.0);
    }

    #[test]
    fn hitting_distribution_argument_errors() {
        let b = build_box(1, 1.0).unwrap();
        assert!(hitting_step_distribution(&b, BoundaryCondition::Free, b.origin_index(), 5).is_err());
        let y = b.index_of(&[1]).unwrap();
        assert!(hitting_step_distribution(&b, BoundaryCondition::Free, y, 0).is_err());
    }

    #[test]
    fn erlang_hand_value_matches_exit_solve() {
        // d=1, R=1, zero bc, kappa=1, h=2, flat potential: the only path is
        // one step with probability 1/2, so both bounds equal
        // (1/2) * 2/4 = 0.25 = v(1)
        let b = build_box(1, 1.0).unwrap();
        let (lo, up) = erlang_series_bounds(&b, BoundaryCondition::Zero, 1.0, 2.0, 0.0, 0, 40).unwrap();
        assert!((lo - 0.25).abs() < 1e-12, "lower {lo}");
        assert!((up - 0.25).abs() < 1e-12, "upper {up}");
        let f = PotentialField::from_values(&b, w2(), 0, vec![0.0, 7.0, 0.0]).unwrap();
        let e = exit_functional(&f, BoundaryCondition::Zero, 1.0, 2.0).unwrap();
        assert_relative_eq!(e.value / 2.0, 0.25, max_relative = 1e-14);
    }

    #[test]
    fn erlang_bounds_sandwich_exact_derivatives() {
        let b = build_box(1, 3.0).unwrap();
        let kappa = 1.0;
        let xi_bound = 1.5;
        for bc in [BoundaryCondition::Zero, BoundaryCondition::Free] {
            for seed in 0..10u64 {
                let f = crate::potential::sample_field_conditioned(&b, w2(), xi_bound, Some(0.0), seed)
                    .unwrap();
                let y = b.index_of(&[1]).unwrap();
                for h in [4.0, 6.0, 10.0] {
                    let per_neighbor = |hh: f64| {
                        let v = exit_profile_impl(&f, bc, kappa, hh).unwrap();
                        v[y]
                    };
                    for n in 0..=2usize {
                        let exact = match n {
                            0 => per_neighbor(h),
                            1 => {
                                let d = 1e-4;
                                ((per_neighbor(h + d) - per_neighbor(h - d)) / (2.0 * d)).abs()
                            }
                            _ => {
                                let d = 1e-3;
                                ((per_neighbor(h + d) - 2.0 * per_neighbor(h)
                                    + per_neighbor(h - d))
                                    / (d * d))
                                    .abs()
                            }
                        };
                        let (lo, up) =
                            erlang_series_bounds(&b, bc, kappa, h, xi_bound, n, 60).unwrap();
                        assert!(
                            lo <= exact + 1e-9 && exact <= up + 1e-9,
                            "bc={bc} n={n} h={h}: {lo} <= {exact} <= {up}"
                        );
                        assert!(lo <= up);
                    }
                }
            }
        }
    }

    #[test]
    fn erlang_divergent_series_detected() {
        let b = build_box(1, 1.0).unwrap();
        // h barely above xi_hat - 2dk: the crude geometric tail cannot close
        let r = erlang_series_bounds(&b, BoundaryCondition::Free, 1.0, 0.5, 2.4, 0, 5);
        assert!(matches!(r, Err(PamError::DivergentSeries(_))));
    }

    #[test]
    fn conditional_tail_degenerate_control() {
        // bound -> essinf forces the field to (almost) zero off the origin,
        // so the estimate collapses onto the deterministic plug-in value
        let b = build_box(1, 3.0).unwrap();
        let kappa = 1.0;
        let c = 3.0;
        let h = c + 1e-9;
        let est = conditional_tail_mc(w2(), &b, BoundaryCondition::Free, kappa, h, c, 200, 9).unwrap();
        let flat = PotentialField::from_values(&b, w2(), 0, vec![0.0; b.site_count()]).unwrap();
        let e0 = exit_functional(&flat, BoundaryCondition::Free, kappa, h).unwrap();
        let plug = w2().survival(h + 2.0 - e0.value).unwrap();
        assert!((est.mean - plug).abs() < 1e-6, "{} vs {plug}", est.mean);
        assert!(est.stderr < 1e-6);
    }

    #[test]
    fn conditional_tail_monotone_in_h() {
        let b = build_box(1, 3.0).unwrap();
        let e6 = conditional_tail_mc(w2(), &b, BoundaryCondition::Free, 1.0, 6.0, 3.0, 500, 4).unwrap();
        let e7 = conditional_tail_mc(w2(), &b, BoundaryCondition::Free, 1.0, 7.0, 3.0, 500, 4).unwrap();
        assert!(e7.mean < e6.mean);
    }

    #[test]
    fn conditional_tail_precondition() {
        let b = build_box(1, 2.0).unwrap();
        assert!(matches!(
            conditional_tail_mc(w2(), &b, BoundaryCondition::Free, 1.0, 6.0, 1.0, 10, 1),
            Err(PamError::Precondition(_))
        ));
    }
}
