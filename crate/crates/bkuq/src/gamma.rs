//! Direct quadrature of the bilinear collision form on a cube lattice.
//!
//! The quadratic part of the collision dynamics, in the √M-normalized
//! variables used throughout this crate, is
//!
//!   Γ(f,g)(ξ) = ½ ∫∫_{(ξ-ξ*)·Ω ≥ 0} √M(ξ*) ·
//!               (-f g* - f* g + f' g'* + f'* g') · b(cosθ, z) |ξ-ξ*| dξ* dΩ,
//!
//! with post-collisional velocities ξ' = ξ - [(ξ-ξ*)·Ω]Ω and
//! ξ'* = ξ* + [(ξ-ξ*)·Ω]Ω, and cosθ = (ξ-ξ*)·Ω / |ξ-ξ*| ∈ [0,1] on the
//! hemisphere. A z-derivative of order k replaces b by ∂_z^k b, which for
//! both kernel families is again of the form a₁cosθ + a₃cos³θ.
//!
//! Discretization, deliberately the simplest one that converges:
//!
//! * ξ* — the lattice's own midpoint rule (uniform weight h³);
//! * Ω — a product rule on the hemisphere around e = (ξ-ξ*)/|ξ-ξ*|:
//!   Gauss–Legendre in μ = cosθ on [0,1] times a uniform (trapezoidal)
//!   azimuthal rule, spectrally accurate for the periodic φ-dependence.
//!   Since ∂_z^k b is a cubic polynomial in μ, the loss part of the bracket
//!   (μ-independent otherwise) is integrated exactly by any rule with ≥ 2
//!   Gauss points;
//! * f(ξ'), g(ξ'*) — interpolated in Maxwellian-normalized form: trilinear
//!   interpolation of f/√M between cell centers (zero beyond the lattice),
//!   multiplied back by √M(ξ')√M(ξ'*) = √M(ξ)√M(ξ*), which is exact by the
//!   collision invariance of the Gaussian. Relevant data here is (polynomial
//!   decaying profile) × √M, so the normalized field is the smooth slowly
//!   varying part and the steep Gaussian scale never enters the interpolation
//!   error — which is still the dominant error source at the coarse
//!   resolutions the cost guard admits.
//!
//! Evaluation cost is O(N² · n_μ n_φ) for N lattice nodes, so the lattice is
//! capped (configurable, default 16 per axis). Requests on the axisymmetric
//! grid are unrepresentable by construction: the argument type is [`CubeGrid`].
//!
//! [`gamma_pairs`] evaluates many (f,g) pairs in one sweep: the collision
//! geometry and interpolation stencils — the expensive part — are shared
//! across the batch, so chaos-expansion sums costing K² bilinear terms pay
//! for the geometry once.
//!
//! Exact conservation, ∫ Γ(f,g) χ dξ = 0 for collision invariants χ, holds
//! only in the continuum; its discrete defect ‖P₀Γ‖/‖Γ‖ is the standard
//! convergence diagnostic for this quadrature and is exercised in the tests.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::CubeGrid;
use crate::kernel::sqrt_maxwellian;
use crate::model::CollisionModel;
use crate::quad::gauss_legendre_on;

/// Quadrature controls for [`gamma_eval`] / [`gamma_pairs`].
#[derive(Clone, Copy, Debug)]
pub struct GammaOptions {
    /// Gauss–Legendre points in μ = cosθ on [0,1].
    pub n_mu: usize,
    /// Uniform azimuthal points on [0, 2π).
    pub n_phi: usize,
    /// Cost ceiling: lattices finer than this per axis are rejected.
    pub max_axis: usize,
}

impl Default for GammaOptions {
    fn default() -> Self {
        Self { n_mu: 4, n_phi: 8, max_axis: 16 }
    }
}

/// Trilinear stencil: eight lattice cells and weights; cells outside the
/// lattice carry weight zero (zero extension beyond the cutoff).
#[derive(Clone, Copy)]
struct Stencil {
    idx: [usize; 8],
    w: [f64; 8],
}

/// One axis of the stencil: neighbor cells (⌊u⌋, ⌊u⌋+1) of the cell-center
/// coordinate u with linear weights, zero weight outside [0, n).
#[inline]
fn axis_pair(u: f64, n: usize) -> [(usize, f64); 2] {
    let fl = u.floor();
    let i0 = fl as isize;
    let t = u - fl;
    let lo = if i0 >= 0 && (i0 as usize) < n { (i0 as usize, 1.0 - t) } else { (0, 0.0) };
    let i1 = i0 + 1;
    let hi = if i1 >= 0 && (i1 as usize) < n { (i1 as usize, t) } else { (0, 0.0) };
    [lo, hi]
}

fn stencil(grid: &CubeGrid, p: [f64; 3]) -> Stencil {
    let n = grid.n_axis;
    let inv_h = 1.0 / grid.h;
    let px = axis_pair((p[0] - grid.axis[0]) * inv_h, n);
    let py = axis_pair((p[1] - grid.axis[0]) * inv_h, n);
    let pz = axis_pair((p[2] - grid.axis[0]) * inv_h, n);
    let mut idx = [0usize; 8];
    let mut w = [0.0; 8];
    let mut c = 0;
    for &(ix, wx) in &px {
        for &(iy, wy) in &py {
            for &(iz, wz) in &pz {
                idx[c] = (ix * n + iy) * n + iz;
                w[c] = wx * wy * wz;
                c += 1;
            }
        }
    }
    Stencil { idx, w }
}

#[inline]
fn interp(f: &[f64], st: &Stencil) -> f64 {
    let mut acc = 0.0;
    for c in 0..8 {
        acc += st.w[c] * f[st.idx[c]];
    }
    acc
}

/// ∂_z^k Γ^z(f,g) for each (f,g) pair, on the lattice nodes.
///
/// All pairs share one pass over the collision geometry; see the module docs
/// for the quadrature. Output `[pair][node]`.
pub fn gamma_pairs(
    grid: &CubeGrid,
    model: &CollisionModel,
    z: f64,
    k: usize,
    pairs: &[(&[f64], &[f64])],
    opts: &GammaOptions,
) -> Result<Vec<Vec<f64>>> {
    model.check_z(z)?;
    if k > model.alpha {
        return Err(Error::Config(format!(
            "derivative order {k} exceeds the kernel's declared support α = {}",
            model.alpha
        )));
    }
    let (a1, a3) = model.angular_coeffs(z, k);
    gamma_raw(grid, a1, a3, pairs, opts)
}

/// Single-pair convenience wrapper over [`gamma_pairs`].
pub fn gamma_eval(
    grid: &CubeGrid,
    model: &CollisionModel,
    z: f64,
    k: usize,
    f: &[f64],
    g: &[f64],
    opts: &GammaOptions,
) -> Result<Vec<f64>> {
    Ok(gamma_pairs(grid, model, z, k, &[(f, g)], opts)?.swap_remove(0))
}

/// Γ with an explicit angular polynomial a₁cosθ + a₃cos³θ in place of the
/// model's kernel. The chaos-Galerkin bilinear terms use the unit factor
/// (a₁, a₃) = (1, 0) because their z-dependence is carried by the chaos
/// tensor, not the kernel.
pub(crate) fn gamma_raw(
    grid: &CubeGrid,
    a1: f64,
    a3: f64,
    pairs: &[(&[f64], &[f64])],
    opts: &GammaOptions,
) -> Result<Vec<Vec<f64>>> {
    let n = grid.n();
    if grid.n_axis > opts.max_axis {
        return Err(Error::Config(format!(
            "lattice {0}³ exceeds the bilinear-quadrature cost ceiling {1}³: the sweep is \
             O(N²·n_μ·n_φ); raise max_axis deliberately if the cost is acceptable",
            grid.n_axis, opts.max_axis
        )));
    }
    if opts.n_mu < 2 || opts.n_phi < 4 {
        return Err(Error::Config(format!(
            "hemisphere rule {}×{} too coarse: need n_mu ≥ 2 (exactness for the cubic kernel \
             polynomial) and n_phi ≥ 4",
            opts.n_mu, opts.n_phi
        )));
    }
    for (p, (f, g)) in pairs.iter().enumerate() {
        if f.len() != n || g.len() != n {
            return Err(Error::Config(format!(
                "pair {p}: field lengths {} and {} do not match the lattice ({n} nodes)",
                f.len(),
                g.len()
            )));
        }
    }
    if pairs.is_empty() {
        return Ok(Vec::new());
    }

    let (mu, wmu) = gauss_legendre_on(0.0, 1.0, opts.n_mu);
    let bmu: Vec<f64> = mu.iter().map(|&m| a1 * m + a3 * m * m * m).collect();
    let w_phi = 2.0 * std::f64::consts::PI / opts.n_phi as f64;
    let trig: Vec<(f64, f64)> = (0..opts.n_phi)
        .map(|i| {
            let phi = w_phi * i as f64;
            (phi.cos(), phi.sin())
        })
        .collect();
    // Loss part of the bracket is Ω-independent apart from b: its hemisphere
    // integral under this exact-in-μ rule is 2π Σ w_μ b(μ).
    let b_total: f64 = 2.0 * std::f64::consts::PI
        * mu.iter().zip(&wmu).map(|(&m, &w)| w * (a1 * m + a3 * m * m * m)).sum::<f64>();

    let nodes: Vec<[f64; 3]> = (0..n).map(|i| grid.node(i)).collect();
    let sm: Vec<f64> = nodes
        .iter()
        .map(|p| sqrt_maxwellian(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]))
        .collect();
    // Maxwellian-normalized fields: only these are ever interpolated.
    let norm_pairs: Vec<(Vec<f64>, Vec<f64>)> = pairs
        .iter()
        .map(|(f, g)| {
            let ff = f.iter().zip(&sm).map(|(&v, &s)| v / s).collect();
            let gg = g.iter().zip(&sm).map(|(&v, &s)| v / s).collect();
            (ff, gg)
        })
        .collect();
    let np = pairs.len();
    let half_w = 0.5 * grid.weight();

    // One task per output node; each task owns its row of every pair.
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = nodes[i];
            let mut out = vec![0.0; np];
            let mut gain = vec![0.0; np];
            for (j, xj) in nodes.iter().enumerate() {
                if j == i {
                    continue; // |ξ-ξ*| = 0 kills the integrand
                }
                let d = [xi[0] - xj[0], xi[1] - xj[1], xi[2] - xj[2]];
                let dn = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                let e = [d[0] / dn, d[1] / dn, d[2] / dn];
                // orthonormal frame (e, e1, e2)
                let u = if e[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
                let ue = u[0] * e[0] + u[1] * e[1] + u[2] * e[2];
                let mut e1 = [u[0] - ue * e[0], u[1] - ue * e[1], u[2] - ue * e[2]];
                let n1 = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
                e1 = [e1[0] / n1, e1[1] / n1, e1[2] / n1];
                let e2 = [
                    e[1] * e1[2] - e[2] * e1[1],
                    e[2] * e1[0] - e[0] * e1[2],
                    e[0] * e1[1] - e[1] * e1[0],
                ];

                gain.iter_mut().for_each(|v| *v = 0.0);
                for (q, (&m, &wm)) in mu.iter().zip(&wmu).enumerate() {
                    let s = (1.0 - m * m).max(0.0).sqrt();
                    let wb = wm * bmu[q];
                    let tr = dn * m;
                    for &(c, sn) in &trig {
                        let om = [
                            m * e[0] + s * (c * e1[0] + sn * e2[0]),
                            m * e[1] + s * (c * e1[1] + sn * e2[1]),
                            m * e[2] + s * (c * e1[2] + sn * e2[2]),
                        ];
                        let xp = [xi[0] - tr * om[0], xi[1] - tr * om[1], xi[2] - tr * om[2]];
                        let xsp = [xj[0] + tr * om[0], xj[1] + tr * om[1], xj[2] + tr * om[2]];
                        let st_p = stencil(grid, xp);
                        let st_s = stencil(grid, xsp);
                        for (p, (ff, gg)) in norm_pairs.iter().enumerate() {
                            gain[p] += wb
                                * (interp(ff, &st_p) * interp(gg, &st_s)
                                    + interp(ff, &st_s) * interp(gg, &st_p));
                        }
                    }
                }
                // √M(ξ')√M(ξ'*) = √M(ξᵢ)√M(ξⱼ) folds the Gaussian factors of
                // gain and loss into one common sm[i]·sm[j]² coefficient.
                let cj = half_w * sm[j] * sm[j] * dn;
                for (p, (ff, gg)) in norm_pairs.iter().enumerate() {
                    let loss = b_total * (ff[i] * gg[j] + ff[j] * gg[i]);
                    out[p] += cj * (w_phi * gain[p] - loss);
                }
            }
            for v in &mut out {
                *v *= sm[i];
            }
            out
        })
        .collect();

    let mut result = vec![vec![0.0; n]; np];
    for (i, row) in rows.iter().enumerate() {
        for (p, &v) in row.iter().enumerate() {
            result[p][i] = v;
        }
    }
    Ok(result)
}
