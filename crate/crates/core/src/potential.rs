//! Sampling potential fields on boxes.
//!
//! Values are produced by inverse survival transform from counter-based
//! uniforms keyed by `(seed, realization, site index)`, so a field is a
//! pure function of `(model, box, seed, realization)` and realizations can
//! be generated in parallel with bitwise-reproducible results.

use std::io::Write;

use crate::error::{PamError, Result};
use crate::lattice::{self, BoundaryCondition, BoxSpec, HamiltonianMatrix};
use crate::rng;
use crate::tails::TailModel;

/// One realization of the potential on a box.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialField {
    box_spec: BoxSpec,
    values: Vec<f64>,
    model: TailModel,
    seed: u64,
}

/// Top-of-field order statistics.
///
/// `xi1 >= xi2` are the two largest values; `xi_hat` is the maximum over
/// the punctured box (origin removed). Ties resolve to the
/// lexicographically first site.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderStats {
    pub xi1: f64,
    pub xi2: f64,
    pub xi_hat: f64,
    pub argmax_site: usize,
}

/// Unconditioned i.i.d. value at one site of one realization.
#[inline]
pub fn site_value(model: TailModel, seed: u64, realization: u64, site: usize) -> f64 {
    model.inverse_survival(rng::unit_oc(rng::draw(seed, realization, site as u64)))
}

/// Value at one site conditioned on `xi <= bound`, by inverse CDF on the
/// truncated range of the survival function.
#[inline]
fn site_value_truncated(
    model: TailModel,
    bound_survival: f64,
    seed: u64,
    realization: u64,
    site: usize,
) -> f64 {
    let v = rng::unit_oc(rng::draw(seed, realization, site as u64));
    // uniform on (Fbar(bound), 1], then inverted: stays <= bound exactly
    let u = bound_survival + v * (1.0 - bound_survival);
    model.inverse_survival(u)
}

/// Draws one i.i.d. field (realization index 0).
pub fn sample_field(box_spec: &BoxSpec, model: TailModel, seed: u64) -> PotentialField {
    sample_field_indexed(box_spec, model, seed, 0)
}

/// Draws the `realization`-th i.i.d. field of the stream rooted at `seed`.
pub fn sample_field_indexed(
    box_spec: &BoxSpec,
    model: TailModel,
    seed: u64,
    realization: u64,
) -> PotentialField {
    let values = (0..box_spec.site_count())
        .map(|i| site_value(model, seed, realization, i))
        .collect();
    PotentialField {
        box_spec: box_spec.clone(),
        values,
        model,
        seed,
    }
}

/// Draws a field whose off-origin sites are conditioned on `xi <= bound`;
/// the origin is set to `pin_origin` when given, else drawn unconditioned.
pub fn sample_field_conditioned(
    box_spec: &BoxSpec,
    model: TailModel,
    bound: f64,
    pin_origin: Option<f64>,
    seed: u64,
) -> Result<PotentialField> {
    sample_field_conditioned_indexed(box_spec, model, bound, pin_origin, seed, 0)
}

/// Indexed-realization variant of [`sample_field_conditioned`].
pub fn sample_field_conditioned_indexed(
    box_spec: &BoxSpec,
    model: TailModel,
    bound: f64,
    pin_origin: Option<f64>,
    seed: u64,
    realization: u64,
) -> Result<PotentialField> {
    if bound <= model.support_start() {
        return Err(PamError::DegenerateTruncation(format!(
            "bound {bound} does not exceed the essential infimum {}",
            model.support_start()
        )));
    }
    let bound_survival = model.survival(bound)?;
    let origin = box_spec.origin_index();
    let values = (0..box_spec.site_count())
        .map(|i| {
            if i == origin {
                match pin_origin {
                    Some(v) => v,
                    None => site_value(model, seed, realization, i),
                }
            } else {
                site_value_truncated(model, bound_survival, seed, realization, i)
            }
        })
        .collect();
    Ok(PotentialField {
        box_spec: box_spec.clone(),
        values,
        model,
        seed,
    })
}

impl PotentialField {
    /// Wraps externally supplied values (used by oracles and tests).
    pub fn from_values(
        box_spec: &BoxSpec,
        model: TailModel,
        seed: u64,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != box_spec.site_count() {
            return Err(PamError::InvalidArgument(format!(
                "{} values for a box of {} sites",
                values.len(),
                box_spec.site_count()
            )));
        }
        Ok(PotentialField {
            box_spec: box_spec.clone(),
            values,
            model,
            seed,
        })
    }

    pub fn box_spec(&self) -> &BoxSpec {
        &self.box_spec
    }

    pub fn model(&self) -> TailModel {
        self.model
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, site: usize) -> f64 {
        self.values[site]
    }

    pub fn origin_value(&self) -> f64 {
        self.values[self.box_spec.origin_index()]
    }

    /// Copy of the field with the origin replaced.
    pub fn pin_origin(&self, value: f64) -> PotentialField {
        let mut values = self.values.clone();
        values[self.box_spec.origin_index()] = value;
        PotentialField {
            box_spec: self.box_spec.clone(),
            values,
            model: self.model,
            seed: self.seed,
        }
    }

    /// Anderson Hamiltonian `kappa*Delta + xi` for this realization.
    pub fn hamiltonian(&self, bc: BoundaryCondition, kappa: f64) -> Result<HamiltonianMatrix> {
        lattice::hamiltonian(&self.box_spec, bc, kappa, &self.values)
    }

    /// Top two values and the off-origin maximum.
    pub fn order_statistics(&self) -> Result<OrderStats> {
        if self.values.len() < 2 {
            return Err(PamError::Precondition(
                "order statistics need at least two sites".into(),
            ));
        }
        let origin = self.box_spec.origin_index();
        let mut argmax = 0usize;
        let mut xi1 = f64::NEG_INFINITY;
        for (i, &v) in self.values.iter().enumerate() {
            if v > xi1 {
                xi1 = v;
                argmax = i;
            }
        }
        let mut xi2 = f64::NEG_INFINITY;
        let mut xi_hat = f64::NEG_INFINITY;
        for (i, &v) in self.values.iter().enumerate() {
            if i != argmax && v > xi2 {
                xi2 = v;
            }
            if i != origin && v > xi_hat {
                xi_hat = v;
            }
        }
        Ok(OrderStats {
            xi1,
            xi2,
            xi_hat,
            argmax_site: argmax,
        })
    }

    /// Sites whose value lies in `[lo, hi]`. An empty interval yields an
    /// empty set.
    pub fn window_membership(&self, lo: f64, hi: f64) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v >= lo && v <= hi)
            .map(|(i, _)| i)
            .collect()
    }

    /// CSV export: one row per site with coordinates and value.
    pub fn to_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.box_spec.dim();
        let header: Vec<String> = (0..d).map(|k| format!("x{k}")).collect();
        writeln!(w, "{},value", header.join(","))?;
        for (i, &v) in self.values.iter().enumerate() {
            let coords = self.box_spec.coords_of(i);
            let cs: Vec<String> = coords.iter().map(|c| c.to_string()).collect();
            writeln!(w, "{},{v}", cs.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_box;
    use approx::assert_relative_eq;

    fn w2() -> TailModel {
        TailModel::weibull(2.0).unwrap()
    }

    #[test]
    fn fixed_seed_reproduces_fields_bitwise() {
        let b = build_box(2, 2.0).unwrap();
        let f1 = sample_field(&b, w2(), 123);
        let f2 = sample_field(&b, w2(), 123);
        assert_eq!(f1.values(), f2.values());
        let f3 = sample_field(&b, w2(), 124);
        assert_ne!(f1.values(), f3.values());
    }

    #[test]
    fn values_nonnegative_and_finite() {
        let b = build_box(1, 500.0).unwrap();
        for model in [
            w2(),
            TailModel::double_exponential(1.0).unwrap(),
            TailModel::pareto(2.0).unwrap(),
        ] {
            let f = sample_field(&b, model, 7);
            assert!(f.values().iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }

    #[test]
    fn empirical_tail_matches_survival() {
        // P(xi > 1) = e^{-1} within 3 binomial standard errors over 1e6 draws
        let n = 1_000_000usize;
        let p = (-1.0f64).exp();
        let count = (0..n).filter(|&i| site_value(w2(), 99, 0, i) > 1.0).count();
        let se = (p * (1.0 - p) / n as f64).sqrt();
        let freq = count as f64 / n as f64;
        assert!(
            (freq - p).abs() <= 3.0 * se,
            "freq {freq}, expected {p} +- {}",
            3.0 * se
        );
    }

    #[test]
    fn distinct_sites_uncorrelated() {
        let n = 1_000_000usize;
        let (mut sx, mut sy, mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for r in 0..n as u64 {
            let x = site_value(w2(), 5, r, 0);
            let y = site_value(w2(), 5, r, 1);
            sx += x;
            sy += y;
            sxy += x * y;
            sxx += x * x;
            syy += y * y;
        }
        let nf = n as f64;
        let cov = sxy / nf - sx / nf * (sy / nf);
        let vx = sxx / nf - (sx / nf).powi(2);
        let vy = syy / nf - (sy / nf).powi(2);
        let corr = cov / (vx * vy).sqrt();
        assert!(corr.abs() <= 3.0 / nf.sqrt(), "corr = {corr}");
    }

    #[test]
    fn truncated_sampling_respects_bound_and_cdf() {
        let b = build_box(1, 500_000.0).unwrap();
        let bound = 1.0;
        let f = sample_field_conditioned(&b, w2(), bound, None, 31).unwrap();
        let origin = f.box_spec().origin_index();
        let n = f.values().len() - 1;
        let mut below_half = 0usize;
        for (i, &v) in f.values().iter().enumerate() {
            if i == origin {
                continue;
            }
            assert!(v <= bound);
            if v <= 0.5 {
                below_half += 1;
            }
        }
        // truncated CDF at 0.5: (1 - e^{-0.25}) / (1 - e^{-1})
        let p = (1.0 - (-0.25f64).exp()) / (1.0 - (-1.0f64).exp());
        let se = (p * (1.0 - p) / n as f64).sqrt();
        let freq = below_half as f64 / n as f64;
        assert!(
            (freq - p).abs() <= 3.0 * se,
            "freq {freq}, expected {p} +- {}",
            3.0 * se
        );
    }

    #[test]
    fn pinning_sets_origin_exactly() {
        let b = build_box(2, 1.0).unwrap();
        let f = sample_field_conditioned(&b, w2(), 1.0, Some(5.0), 3).unwrap();
        assert_eq!(f.origin_value(), 5.0);
        let stats = f.order_statistics().unwrap();
        assert_eq!(stats.xi1, 5.0);
        assert!(stats.xi_hat <= 1.0);
    }

    #[test]
    fn degenerate_truncation_rejected() {
        let b = build_box(1, 1.0).unwrap();
        assert!(matches!(
            sample_field_conditioned(&b, w2(), 0.0, None, 1),
            Err(PamError::DegenerateTruncation(_))
        ));
    }

    #[test]
    fn order_statistics_hand_case() {
        // xi(-1) = 0.2, xi(0) = 3.1, xi(1) = 0.7: argmax is the origin, so
        // xi_hat falls back to the second value
        let b = build_box(1, 1.0).unwrap();
        let f = PotentialField::from_values(&b, w2(), 0, vec![0.2, 3.1, 0.7]).unwrap();
        let s = f.order_statistics().unwrap();
        assert_relative_eq!(s.xi1, 3.1);
        assert_relative_eq!(s.xi2, 0.7);
        assert_relative_eq!(s.xi_hat, 0.7);
        assert_eq!(s.argmax_site, 1);
    }

    #[test]
    fn order_statistics_tie_breaks_lexicographically() {
        let b = build_box(1, 1.0).unwrap();
        let f = PotentialField::from_values(&b, w2(), 0, vec![2.0, 2.0, 2.0]).unwrap();
        let s = f.order_statistics().unwrap();
        assert_eq!(s.argmax_site, 0);
        assert_eq!(s.xi1, 2.0);
        assert_eq!(s.xi2, 2.0);
        assert_eq!(s.xi_hat, 2.0);
    }

    #[test]
    fn order_statistics_agree_with_full_sort() {
        let b = build_box(2, 1.4).unwrap();
        for seed in 0..1000u64 {
            let f = sample_field(&b, w2(), seed);
            let s = f.order_statistics().unwrap();
            let mut sorted = f.values().to_vec();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            assert_eq!(s.xi1, sorted[0]);
            assert_eq!(s.xi2, sorted[1]);
            let origin = f.box_spec().origin_index();
            let hat = f
                .values()
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != origin)
                .map(|(_, v)| *v)
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(s.xi_hat, hat);
        }
    }

    #[test]
    fn window_membership_edges() {
        let b = build_box(1, 2.0).unwrap();
        let f = sample_field(&b, w2(), 11);
        let all = f.window_membership(0.0, f64::INFINITY);
        assert_eq!(all.len(), f.values().len());
        let max = f.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(f.window_membership(max + 1.0, f64::INFINITY).is_empty());
        assert!(f.window_membership(1.0, 0.5).is_empty());
    }

    #[test]
    fn window_count_matches_binomial() {
        // over 1e6 sites the census count is within 3 sigma of n p
        let n = 1_000_000usize;
        let b = build_box(1, ((n - 1) / 2) as f64).unwrap();
        assert_eq!(b.site_count(), n + 1);
        let model = w2();
        let (lo, hi) = (1.0, 1.5);
        let p = model.survival(lo).unwrap() - model.survival(hi).unwrap();
        let count = (0..b.site_count())
            .filter(|&i| {
                let v = site_value(model, 2718, 0, i);
                (lo..=hi).contains(&v)
            })
            .count();
        let np = p * b.site_count() as f64;
        let sd = (b.site_count() as f64 * p * (1.0 - p)).sqrt();
        assert!(
            (count as f64 - np).abs() <= 3.0 * sd,
            "count {count}, expected {np} +- {}",
            3.0 * sd
        );
    }

    #[test]
    fn csv_layout() {
        let b = build_box(2, 1.0).unwrap();
        let f = sample_field(&b, w2(), 1);
        let mut buf = Vec::new();
        f.to_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + f.values().len());
        assert_eq!(lines[0], "x0,x1,value");
    }
}
