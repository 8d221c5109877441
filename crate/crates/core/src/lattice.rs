//! Lattice boxes and the Anderson Hamiltonian `kappa*Delta + xi`.
//!
//! A box is the centered cube `[-ceil(R), ceil(R)]^d` intersected with the
//! integer lattice. Sites carry a fixed lexicographic order over their
//! coordinate tuples, so every downstream result (argmax ties, reductions,
//! reports) is reproducible.
//!
//! Two boundary conditions are supported. Under `Zero` the walk is killed
//! outside the box: the Laplacian keeps the full diagonal `-2d` at every
//! site and simply drops couplings to outside sites. Under `Free` the walk
//! stays put when it would leave the box: outside couplings are removed
//! from the diagonal as well, so the Laplacian part has zero row sums.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{PamError, Result};

/// Boundary condition on the box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    /// Out-of-box jumps suppressed; the walk remains at its current site.
    Free,
    /// The walk is killed outside the box.
    Zero,
}

impl std::fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundaryCondition::Free => write!(f, "free"),
            BoundaryCondition::Zero => write!(f, "zero"),
        }
    }
}

/// A centered lattice cube `[-M, M]^d` with `M = ceil(R)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    dim: usize,
    radius: f64,
    half_extent: i64,
    side: i64,
    n_sites: usize,
}

/// Builds the box for dimension `d >= 1` and radius `R >= 1`.
pub fn build_box(d: usize, radius: f64) -> Result<BoxSpec> {
    if d == 0 {
        return Err(PamError::InvalidArgument("dimension must be >= 1".into()));
    }
    if !(radius >= 1.0) {
        return Err(PamError::InvalidArgument(format!(
            "radius must be >= 1, got {radius}"
        )));
    }
    let half_extent = radius.ceil() as i64;
    let side = 2 * half_extent + 1;
    let n_sites = (side as u128).pow(d as u32);
    if n_sites > usize::MAX as u128 / 2 {
        return Err(PamError::InvalidArgument(format!(
            "box has {n_sites} sites, too large to index"
        )));
    }
    Ok(BoxSpec {
        dim: d,
        radius,
        half_extent,
        side,
        n_sites: n_sites as usize,
    })
}

impl BoxSpec {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// `ceil(R)`, the effective half extent.
    pub fn half_extent(&self) -> i64 {
        self.half_extent
    }

    pub fn site_count(&self) -> usize {
        self.n_sites
    }

    /// Index of the origin in the lexicographic enumeration.
    pub fn origin_index(&self) -> usize {
        (self.n_sites - 1) / 2
    }

    /// Coordinates of the site with the given index.
    pub fn coords_of(&self, index: usize) -> Vec<i64> {
        debug_assert!(index < self.n_sites);
        let mut rem = index as i64;
        let mut coords = vec![0i64; self.dim];
        for k in (0..self.dim).rev() {
            coords[k] = rem % self.side - self.half_extent;
            rem /= self.side;
        }
        coords
    }

    /// Index of the site with the given coordinates, if inside the box.
    pub fn index_of(&self, coords: &[i64]) -> Option<usize> {
        debug_assert_eq!(coords.len(), self.dim);
        let mut idx: i64 = 0;
        for &c in coords {
            if c.abs() > self.half_extent {
                return None;
            }
            idx = idx * self.side + (c + self.half_extent);
        }
        Some(idx as usize)
    }

    /// In-box nearest neighbours of a site, in a fixed order
    /// (dimension-major, minus direction first).
    pub fn neighbors(&self, index: usize) -> Vec<usize> {
        let coords = self.coords_of(index);
        let mut out = Vec::with_capacity(2 * self.dim);
        let mut scratch = coords.clone();
        for k in 0..self.dim {
            for step in [-1i64, 1] {
                scratch[k] = coords[k] + step;
                if let Some(j) = self.index_of(&scratch) {
                    out.push(j);
                }
                scratch[k] = coords[k];
            }
        }
        out
    }

    /// Number of nearest neighbours lying outside the box.
    pub fn missing_neighbor_count(&self, index: usize) -> usize {
        2 * self.dim - self.neighbors(index).len()
    }

    /// l1 distance of the site from the origin.
    pub fn l1_norm(&self, index: usize) -> i64 {
        self.coords_of(index).iter().map(|c| c.abs()).sum()
    }
}

/// The Anderson Hamiltonian `kappa*Delta + xi` as a symmetric sparse
/// operator. Off-diagonal couplings are exactly `kappa` for l1-adjacent
/// site pairs; the diagonal holds `xi(x) - kappa * deg(x)` where `deg` is
/// `2d` under zero boundary and the in-box degree under free boundary.
#[derive(Debug, Clone)]
pub struct HamiltonianMatrix {
    box_spec: BoxSpec,
    bc: BoundaryCondition,
    kappa: f64,
    diagonal: Vec<f64>,
    neighbor_offsets: Vec<u32>,
    neighbor_indices: Vec<u32>,
}

/// Assembles the Hamiltonian for a potential given per site.
pub fn hamiltonian(
    box_spec: &BoxSpec,
    bc: BoundaryCondition,
    kappa: f64,
    xi: &[f64],
) -> Result<HamiltonianMatrix> {
    if !(kappa > 0.0) {
        return Err(PamError::InvalidArgument(format!(
            "kappa must be positive, got {kappa}"
        )));
    }
    if xi.len() != box_spec.site_count() {
        return Err(PamError::InvalidArgument(format!(
            "potential has {} values but the box has {} sites",
            xi.len(),
            box_spec.site_count()
        )));
    }
    let n = box_spec.site_count();
    let mut neighbor_offsets = Vec::with_capacity(n + 1);
    let mut neighbor_indices = Vec::new();
    let mut diagonal = Vec::with_capacity(n);
    neighbor_offsets.push(0u32);
    for i in 0..n {
        let nbrs = box_spec.neighbors(i);
        let degree = match bc {
            BoundaryCondition::Zero => 2 * box_spec.dim(),
            BoundaryCondition::Free => nbrs.len(),
        };
        diagonal.push(xi[i] - kappa * degree as f64);
        for j in nbrs {
            neighbor_indices.push(j as u32);
        }
        neighbor_offsets.push(neighbor_indices.len() as u32);
    }
    Ok(HamiltonianMatrix {
        box_spec: box_spec.clone(),
        bc,
        kappa,
        diagonal,
        neighbor_offsets,
        neighbor_indices,
    })
}

impl HamiltonianMatrix {
    pub fn box_spec(&self) -> &BoxSpec {
        &self.box_spec
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn dim(&self) -> usize {
        self.box_spec.dim()
    }

    pub fn site_count(&self) -> usize {
        self.diagonal.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    /// `out = H v`.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        let n = self.site_count();
        debug_assert_eq!(v.len(), n);
        debug_assert_eq!(out.len(), n);
        for i in 0..n {
            let lo = self.neighbor_offsets[i] as usize;
            let hi = self.neighbor_offsets[i + 1] as usize;
            let mut acc = self.diagonal[i] * v[i];
            for &j in &self.neighbor_indices[lo..hi] {
                acc += self.kappa * v[j as usize];
            }
            out[i] = acc;
        }
    }

    pub fn apply_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        self.apply(v, &mut out);
        out
    }

    /// Dense form, for direct eigensolves and small-box oracles.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.site_count();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diagonal[i];
            let lo = self.neighbor_offsets[i] as usize;
            let hi = self.neighbor_offsets[i + 1] as usize;
            for &j in &self.neighbor_indices[lo..hi] {
                m[(i, j as usize)] = self.kappa;
            }
        }
        m
    }

    /// Upper bound on the spectral radius (Gershgorin).
    pub fn norm_bound(&self) -> f64 {
        let two_dk = 2.0 * self.dim() as f64 * self.kappa;
        self.diagonal
            .iter()
            .fold(0.0f64, |acc, &d| acc.max(d.abs()))
            + two_dk
    }
}
