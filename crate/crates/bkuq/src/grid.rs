//! Velocity-space grids, the Maxwellian, and macroscopic projections.
//!
//! Two discretizations:
//!
//! * [`AxisymGrid`] — the workhorse. With the wavevector aligned to the ξ_z
//!   axis the collision operator is rotation-invariant, so per-mode dynamics
//!   closes on azimuthally symmetric profiles f(ξ_z, ξ_ρ). Nodes are tensor
//!   Gauss–Legendre panels on [-ξ_max, ξ_max] × (0, ξ_max]; weights carry the
//!   azimuthal factor 2πξ_ρ. The cutoff is per coordinate (the pinned default
//!   domain is the rectangle [-6,6] × (0,6]).
//! * [`CubeGrid`] — a coarse uniform cell-centered lattice on the cube
//!   [-ξ_max, ξ_max]³ used only by the bilinear collision quadrature, where
//!   trilinear interpolation needs a regular mesh.
//!
//! Both constructors validate the discrete Maxwellian mass: a grid that
//! cannot integrate M to 1e-6 is rejected as too coarse.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::kernel::sqrt_maxwellian;
use crate::quad::uniform_panels;

/// Discrete Maxwellian mass tolerance; grids failing it are rejected.
pub const TOL_GRID: f64 = 1e-6;

/// Split a per-direction node count into equal Gauss–Legendre panels.
/// Preference order keeps the default grids at 8-node panels while counts
/// divisible only by 12 (e.g. a 12-node ρ direction) get one high-order panel
/// — the split that keeps the Maxwellian-mass error within tolerance there.
fn panelize(n: usize) -> Result<(usize, usize)> {
    for per in [8usize, 12, 10, 6, 4] {
        if n % per == 0 {
            return Ok((n / per, per));
        }
    }
    Err(Error::Config(format!(
        "resolution {n} cannot be split into Gauss panels; use a multiple of 4, 6, 8, 10, or 12"
    )))
}

/// Axisymmetric velocity grid on (ξ_z, ξ_ρ) ∈ [-ξ_max, ξ_max] × (0, ξ_max].
///
/// Flattened node index: `iz * nrho + ir`.
#[derive(Debug)]
pub struct AxisymGrid {
    pub xi_max: f64,
    /// Weighted-norm exponent for ⟨ξ⟩^β sup norms; must exceed 3/2.
    pub beta: f64,
    pub nz: usize,
    pub nrho: usize,
    pub z_nodes: Vec<f64>,
    pub z_weights: Vec<f64>,
    pub rho_nodes: Vec<f64>,
    pub rho_weights: Vec<f64>,
    /// Panel edges (length = panel count + 1) and nodes per panel.
    pub z_edges: Vec<f64>,
    pub z_per_panel: usize,
    pub rho_edges: Vec<f64>,
    pub rho_per_panel: usize,
    /// Full quadrature weight 2π ξ_ρ w_z w_ρ per flattened node.
    pub w3: Vec<f64>,
    /// √M at each node.
    pub sqrt_m: Vec<f64>,
    /// |ξ|² at each node.
    pub q: Vec<f64>,
}

impl AxisymGrid {
    pub fn n(&self) -> usize {
        self.nz * self.nrho
    }

    pub fn xi_z(&self, idx: usize) -> f64 {
        self.z_nodes[idx / self.nrho]
    }

    pub fn xi_rho(&self, idx: usize) -> f64 {
        self.rho_nodes[idx % self.nrho]
    }

    /// Discrete inner product (f, g) = Σ w3 f g.
    pub fn dot(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter().zip(g).zip(&self.w3).map(|((&a, &b), &w)| w * a * b).sum()
    }

    pub fn norm(&self, f: &[f64]) -> f64 {
        self.dot(f, f).sqrt()
    }

    /// ⟨ξ⟩^β = (1 + |ξ|²)^{β/2} at a node.
    pub fn bracket_beta(&self, idx: usize) -> f64 {
        (1.0 + self.q[idx]).powf(self.beta / 2.0)
    }
}

/// Build an axisymmetric grid; rejects β ≤ 3/2, sub-minimal resolutions, and
/// grids whose discrete Maxwellian mass misses 1 by more than 1e-6.
pub fn build_axisym(xi_max: f64, nz: usize, nrho: usize, beta: f64) -> Result<AxisymGrid> {
    if nz < 8 || nrho < 8 {
        return Err(Error::Config(format!(
            "resolution {nz}×{nrho} below the minimum of 8 nodes per direction"
        )));
    }
    build_axisym_relaxed(xi_max, nz, nrho, beta, TOL_GRID)
}

/// Axisymmetric grid with a caller-chosen Maxwellian-mass tolerance and no
/// minimum resolution. Exists for algebraic identity tests (e.g. comparing a
/// block decomposition against brute force) where a deliberately tiny grid is
/// wanted and physical accuracy is irrelevant. Production paths go through
/// [`build_axisym`].
pub fn build_axisym_relaxed(
    xi_max: f64,
    nz: usize,
    nrho: usize,
    beta: f64,
    mass_tol: f64,
) -> Result<AxisymGrid> {
    if beta <= 1.5 {
        return Err(Error::Config(format!("β must exceed 3/2 (got {beta})")));
    }
    if xi_max < 5.0 {
        return Err(Error::Config(format!(
            "velocity cutoff ξ_max = {xi_max} too small; need at least 5 for tail mass < 1e-7"
        )));
    }
    let (z_panels, z_per_panel) = panelize(nz)?;
    let (rho_panels, rho_per_panel) = panelize(nrho)?;
    let (z_nodes, z_weights) = uniform_panels(-xi_max, xi_max, z_panels, z_per_panel);
    let (rho_nodes, rho_weights) = uniform_panels(0.0, xi_max, rho_panels, rho_per_panel);
    let z_edges: Vec<f64> = (0..=z_panels)
        .map(|p| -xi_max + 2.0 * xi_max * p as f64 / z_panels as f64)
        .collect();
    let rho_edges: Vec<f64> =
        (0..=rho_panels).map(|p| xi_max * p as f64 / rho_panels as f64).collect();

    let n = nz * nrho;
    let mut w3 = Vec::with_capacity(n);
    let mut sqrt_m = Vec::with_capacity(n);
    let mut q = Vec::with_capacity(n);
    for iz in 0..nz {
        for ir in 0..nrho {
            let (z, rho) = (z_nodes[iz], rho_nodes[ir]);
            w3.push(2.0 * PI * rho * z_weights[iz] * rho_weights[ir]);
            let qq = z * z + rho * rho;
            q.push(qq);
            sqrt_m.push(sqrt_maxwellian(qq));
        }
    }
    let mass: f64 = w3.iter().zip(&sqrt_m).map(|(&w, &s)| w * s * s).sum();
    if (mass - 1.0).abs() > mass_tol {
        return Err(Error::Config(format!(
            "grid too coarse: discrete Maxwellian mass off by {:e} (tolerance {mass_tol:e})",
            mass - 1.0
        )));
    }
    Ok(AxisymGrid {
        xi_max,
        beta,
        nz,
        nrho,
        z_nodes,
        z_weights,
        rho_nodes,
        rho_weights,
        z_edges,
        z_per_panel,
        rho_edges,
        rho_per_panel,
        w3,
        sqrt_m,
        q,
    })
}

/// Uniform cell-centered cube lattice for the bilinear collision quadrature.
/// Node index = (ix · n + iy) · n + iz; every node carries weight h³.
#[derive(Debug)]
pub struct CubeGrid {
    pub xi_max: f64,
    pub beta: f64,
    pub n_axis: usize,
    pub h: f64,
    pub axis: Vec<f64>,
}

impl CubeGrid {
    pub fn n(&self) -> usize {
        self.n_axis.pow(3)
    }

    pub fn node(&self, idx: usize) -> [f64; 3] {
        let n = self.n_axis;
        [self.axis[idx / (n * n)], self.axis[(idx / n) % n], self.axis[idx % n]]
    }

    pub fn weight(&self) -> f64 {
        self.h * self.h * self.h
    }

    pub fn dot(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weight() * f.iter().zip(g).map(|(&a, &b)| a * b).sum::<f64>()
    }

    pub fn norm(&self, f: &[f64]) -> f64 {
        self.dot(f, f).sqrt()
    }
}

/// Build a cube lattice; same β and mass validation as the axisymmetric grid.
pub fn build_cube(xi_max: f64, n_axis: usize, beta: f64) -> Result<CubeGrid> {
    if beta <= 1.5 {
        return Err(Error::Config(format!("β must exceed 3/2 (got {beta})")));
    }
    if xi_max < 5.0 {
        return Err(Error::Config(format!(
            "velocity cutoff ξ_max = {xi_max} too small; need at least 5 for tail mass < 1e-7"
        )));
    }
    if n_axis < 8 {
        return Err(Error::Config(format!(
            "cube resolution {n_axis} below the minimum of 8 nodes per axis"
        )));
    }
    let h = 2.0 * xi_max / n_axis as f64;
    let axis: Vec<f64> = (0..n_axis).map(|i| -xi_max + (i as f64 + 0.5) * h).collect();
    let grid = CubeGrid { xi_max, beta, n_axis, h, axis };
    let mut mass = 0.0;
    for idx in 0..grid.n() {
        let p = grid.node(idx);
        let q = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
        let s = sqrt_maxwellian(q);
        mass += grid.weight() * s * s;
    }
    if (mass - 1.0).abs() > TOL_GRID {
        return Err(Error::Config(format!(
            "cube lattice too coarse: discrete Maxwellian mass off by {:e}",
            mass - 1.0
        )));
    }
    Ok(grid)
}

/// Orthonormalized discrete collision invariants.
///
/// In axisymmetric mode only the invariants representable on (ξ_z, ξ_ρ)
/// profiles are carried: χ_0 = √M, χ_3 = ξ_z √M, χ_4 = (|ξ|²-3)√M/√6. The
/// transverse momentum pair has no axisymmetric representative; shear
/// quantities relying on it are reported unavailable by downstream code.
pub struct MacroBasis {
    /// Orthonormal vectors under the grid inner product.
    pub vectors: Vec<Vec<f64>>,
    pub labels: Vec<&'static str>,
}

/// Modified Gram–Schmidt under an arbitrary inner product.
fn orthonormalize(raw: Vec<Vec<f64>>, dot: impl Fn(&[f64], &[f64]) -> f64) -> Vec<Vec<f64>> {
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(raw.len());
    for mut v in raw {
        for u in &vectors {
            let c = dot(&v, u);
            for (vi, ui) in v.iter_mut().zip(u.iter()) {
                *vi -= c * ui;
            }
        }
        let nv = dot(&v, &v).sqrt();
        for vi in &mut v {
            *vi /= nv;
        }
        vectors.push(v);
    }
    vectors
}

/// Construct the macro basis on an axisymmetric grid by modified
/// Gram–Schmidt against the discrete inner product.
pub fn macro_basis(grid: &AxisymGrid) -> MacroBasis {
    let n = grid.n();
    let mut raw: Vec<Vec<f64>> = vec![vec![0.0; n]; 3];
    for idx in 0..n {
        let s = grid.sqrt_m[idx];
        raw[0][idx] = s;
        raw[1][idx] = grid.xi_z(idx) * s;
        raw[2][idx] = (grid.q[idx] - 3.0) * s / 6.0_f64.sqrt();
    }
    let vectors = orthonormalize(raw, |f, g| grid.dot(f, g));
    MacroBasis { vectors, labels: vec!["chi0", "chi3", "chi4"] }
}

/// Macro basis on the cube lattice, where all five collision invariants are
/// representable: √M, ξ_x√M, ξ_y√M, ξ_z√M, (|ξ|²-3)√M/√6.
pub fn cube_macro_basis(grid: &CubeGrid) -> MacroBasis {
    let n = grid.n();
    let mut raw: Vec<Vec<f64>> = vec![vec![0.0; n]; 5];
    for idx in 0..n {
        let p = grid.node(idx);
        let q = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
        let s = sqrt_maxwellian(q);
        raw[0][idx] = s;
        raw[1][idx] = p[0] * s;
        raw[2][idx] = p[1] * s;
        raw[3][idx] = p[2] * s;
        raw[4][idx] = (q - 3.0) * s / 6.0_f64.sqrt();
    }
    let vectors = orthonormalize(raw, |f, g| grid.dot(f, g));
    MacroBasis { vectors, labels: vec!["chi0", "chi1", "chi2", "chi3", "chi4"] }
}

/// Which complementary projection to apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    /// Projection onto the macroscopic (fluid) subspace.
    P0,
    /// Microscopic remainder I - P0.
    P1,
}

/// P0 f = Σ_j (f, χ_j) χ_j, or its complement.
pub fn macro_project(grid: &AxisymGrid, basis: &MacroBasis, f: &[f64], part: Part) -> Vec<f64> {
    project_with(|a, b| grid.dot(a, b), basis, f, part)
}

/// Cube-lattice counterpart of [`macro_project`].
pub fn cube_project(grid: &CubeGrid, basis: &MacroBasis, f: &[f64], part: Part) -> Vec<f64> {
    project_with(|a, b| grid.dot(a, b), basis, f, part)
}

fn project_with(
    dot: impl Fn(&[f64], &[f64]) -> f64,
    basis: &MacroBasis,
    f: &[f64],
    part: Part,
) -> Vec<f64> {
    let mut p0 = vec![0.0; f.len()];
    for chi in &basis.vectors {
        let c = dot(f, chi);
        for (pi, &ci) in p0.iter_mut().zip(chi) {
            *pi += c * ci;
        }
    }
    match part {
        Part::P0 => p0,
        Part::P1 => f.iter().zip(&p0).map(|(&a, &b)| a - b).collect(),
    }
}
