//! Assembled collision operators L^z and their z-derivatives.
//!
//! Both kernel families are linear in z, so every operator this module hands
//! out is a linear combination of at most two grid-level pieces:
//!
//! * the unit hard-sphere piece (closed-form kernel route by default, direct
//!   quadrature on request), and
//! * the unit cos³θ piece (direct quadrature only — that shape has no usable
//!   reduced closed form), present for the cubic family.
//!
//! An [`OperatorFactory`] assembles the pieces once; [`OperatorFactory::operator`]
//! then combines them per (z, derivative order k) at matrix-add cost.
//!
//! **Null-space handling.** The assembled matrices annihilate the collision
//! invariants only up to the grid's interpolation error (the raw residuals
//! are kept as diagnostics). Each piece is therefore projected symmetrically,
//! Ls ← P Ls P with P the orthogonal projector onto the complement of the
//! discrete invariant span {χ_0, χ_3, χ_4}. The projection preserves
//! symmetry, moves entries by no more than the raw residual scale, and makes
//! conservation and the null equations hold to machine precision — which the
//! long-time decay studies require, since any spurious action on the
//! invariants grows secularly.

use std::sync::Arc;

use crate::assemble::{
    assemble_direct, assemble_hard_sphere, DirectQuality, PatchQuality, RawOperator,
};
use crate::error::{Error, Result};
use crate::grid::{macro_basis, AxisymGrid};
use crate::lapack::sym_eig;
use crate::model::CollisionModel;

/// Which assembly route builds the hard-sphere piece.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Route {
    /// Azimuthally reduced closed-form kernel with singular-patch product
    /// integration.
    ClosedForm,
    /// Direct quadrature of the five-dimensional collision integral.
    Direct,
}

/// Assembly configuration for a factory.
#[derive(Clone, Copy, Debug)]
pub struct FactoryOptions {
    pub hs_route: Route,
    pub patch: PatchQuality,
    pub direct: DirectQuality,
    /// Guard on the direct route's gain/loss consistency residual: a direct
    /// assembly whose quadrature fails to annihilate √M to this relative
    /// accuracy is rejected as non-converged.
    pub gain_loss_tol: f64,
}

impl Default for FactoryOptions {
    fn default() -> Self {
        Self {
            hs_route: Route::ClosedForm,
            patch: PatchQuality::default(),
            direct: DirectQuality::default(),
            gain_loss_tol: 2e-2,
        }
    }
}

/// One grid-level assembled piece, projected off the invariant span.
pub struct Piece {
    /// Loss frequency of the piece's kernel shape, per node.
    pub nu: Vec<f64>,
    /// Projected symmetrized matrix P (D^{1/2} L D^{-1/2}) P, exactly
    /// symmetric.
    pub ls: Vec<f64>,
    /// Antisymmetric residue discarded at symmetrization, relative.
    pub asym_rel: f64,
    /// Direct route only: gain/loss consistency residual.
    pub gain_loss_rel: Option<f64>,
    /// Pre-projection invariant residuals ‖Ls χ̃_α‖₂ / max|Ls|, α = 0, 3, 4.
    pub raw_null: [f64; 3],
}

/// Where the matrix of an operator came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    ClosedForm,
    Direct,
    /// Closed-form hard-sphere part plus direct-quadrature cos³θ part.
    Mixed,
}

/// The discrete operator ∂_z^k L^z at one (z, k), in symmetrized coordinates.
pub struct LinearOperator {
    pub grid: Arc<AxisymGrid>,
    pub z: f64,
    pub k: usize,
    /// Multiplier (loss) part; the full matrix already contains it.
    pub nu: Vec<f64>,
    /// Projected symmetrized matrix, exactly symmetric, row-major n×n.
    pub ls: Vec<f64>,
    pub provenance: Provenance,
    /// Worst diagnostics over the pieces combined into this operator.
    pub asym_rel: f64,
    pub gain_loss_rel: Option<f64>,
    pub raw_null: [f64; 3],
}

/// Factory holding the assembled unit pieces for one (grid, model) pair.
pub struct OperatorFactory {
    pub grid: Arc<AxisymGrid>,
    pub model: CollisionModel,
    hs: Piece,
    cubic: Option<Piece>,
    provenance_hs: Provenance,
}

/// Orthonormal invariant vectors in symmetrized coordinates: x_α = √w3 · χ_α
/// with the χ_α orthonormal under the w3 inner product.
pub(crate) fn invariant_frame(grid: &AxisymGrid) -> Vec<Vec<f64>> {
    let sw: Vec<f64> = grid.w3.iter().map(|&w| w.sqrt()).collect();
    macro_basis(grid)
        .vectors
        .into_iter()
        .map(|chi| chi.iter().zip(&sw).map(|(&c, &s)| c * s).collect())
        .collect()
}

/// Project a symmetric matrix off the span of the given orthonormal vectors,
/// A ← P A P, keeping it exactly symmetric. Returns the pre-projection
/// residuals ‖A x_α‖₂ / max|A|.
fn project_out(ls: &mut [f64], frame: &[Vec<f64>], n: usize) -> Vec<f64> {
    let scale = ls.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    // a_α = A x_α (symmetric A, so also x_αᵀ A)
    let a: Vec<Vec<f64>> = frame
        .iter()
        .map(|x| {
            (0..n)
                .map(|i| (0..n).map(|j| ls[i * n + j] * x[j]).sum::<f64>())
                .collect::<Vec<f64>>()
        })
        .collect();
    let resid: Vec<f64> = a
        .iter()
        .map(|ai| ai.iter().map(|v| v * v).sum::<f64>().sqrt() / scale)
        .collect();
    // b_αβ = x_αᵀ A x_β, symmetrized so the update below stays symmetric
    let m = frame.len();
    let mut b = vec![0.0; m * m];
    for al in 0..m {
        for be in 0..m {
            b[al * m + be] = a[al].iter().zip(&frame[be]).map(|(&u, &v)| u * v).sum();
        }
    }
    for al in 0..m {
        for be in (al + 1)..m {
            let s = 0.5 * (b[al * m + be] + b[be * m + al]);
            b[al * m + be] = s;
            b[be * m + al] = s;
        }
    }
    for i in 0..n {
        for j in 0..n {
            let mut v = ls[i * n + j];
            for al in 0..m {
                v -= frame[al][i] * a[al][j] + a[al][i] * frame[al][j];
                for be in 0..m {
                    v += frame[al][i] * b[al * m + be] * frame[be][j];
                }
            }
            ls[i * n + j] = v;
        }
    }
    // kill the last rounding asymmetry
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (ls[i * n + j] + ls[j * n + i]);
            ls[i * n + j] = s;
            ls[j * n + i] = s;
        }
    }
    resid
}

fn finish_piece(
    grid: &AxisymGrid,
    frame: &[Vec<f64>],
    raw: RawOperator,
    gain_loss_tol: f64,
) -> Result<Piece> {
    if let Some(gl) = raw.gain_loss_rel {
        if gl > gain_loss_tol {
            return Err(Error::Numerics(format!(
                "direct quadrature non-convergence: gain and loss parts disagree on invariant \
                 annihilation at relative level {gl:.3e} (tolerance {gain_loss_tol:.1e}); \
                 raise the direct quadrature orders"
            )));
        }
    }
    let RawOperator { nu, mut ls, asym_rel, gain_loss_rel } = raw;
    let resid = project_out(&mut ls, frame, grid.n());
    Ok(Piece {
        nu,
        ls,
        asym_rel,
        gain_loss_rel,
        raw_null: [resid[0], resid[1], resid[2]],
    })
}

impl OperatorFactory {
    /// Assemble the unit pieces for a model on a grid.
    pub fn new(
        grid: Arc<AxisymGrid>,
        model: CollisionModel,
        opts: FactoryOptions,
    ) -> Result<Self> {
        let frame = invariant_frame(&grid);
        let (hs_raw, provenance_hs) = match opts.hs_route {
            Route::ClosedForm => (assemble_hard_sphere(&grid, opts.patch), Provenance::ClosedForm),
            Route::Direct => (assemble_direct(&grid, 1.0, 0.0, opts.direct), Provenance::Direct),
        };
        let hs = finish_piece(&grid, &frame, hs_raw, opts.gain_loss_tol)?;
        let cubic = if model.scale(0.0).is_none() {
            let raw = assemble_direct(&grid, 0.0, 1.0, opts.direct);
            Some(finish_piece(&grid, &frame, raw, opts.gain_loss_tol)?)
        } else {
            None
        };
        Ok(Self { grid, model, hs, cubic, provenance_hs })
    }

    /// Build a factory from externally assembled raw pieces (cache restore).
    pub fn from_raw_pieces(
        grid: Arc<AxisymGrid>,
        model: CollisionModel,
        hs_raw: RawOperator,
        hs_provenance: Provenance,
        cubic_raw: Option<RawOperator>,
        gain_loss_tol: f64,
    ) -> Result<Self> {
        let frame = invariant_frame(&grid);
        let hs = finish_piece(&grid, &frame, hs_raw, gain_loss_tol)?;
        let cubic = match cubic_raw {
            Some(raw) => Some(finish_piece(&grid, &frame, raw, gain_loss_tol)?),
            None => None,
        };
        if model.scale(0.0).is_none() && cubic.is_none() {
            return Err(Error::Config(
                "cubic-family factory restored without its cos³θ piece".into(),
            ));
        }
        Ok(Self { grid, model, hs, cubic, provenance_hs: hs_provenance })
    }

    pub fn hs_piece(&self) -> &Piece {
        &self.hs
    }

    pub fn cubic_piece(&self) -> Option<&Piece> {
        self.cubic.as_ref()
    }

    /// The operator ∂_z^k L^z. Derivative orders beyond the model's declared
    /// support α are rejected; orders beyond the kernel's polynomial degree
    /// in z yield the zero operator.
    pub fn operator(&self, z: f64, k: usize) -> Result<LinearOperator> {
        self.model.check_z(z)?;
        if k > self.model.alpha {
            return Err(Error::Config(format!(
                "derivative order {k} exceeds the model's declared support α = {}",
                self.model.alpha
            )));
        }
        let n = self.grid.n();
        let (a1, a3) = self.model.angular_coeffs(z, k);
        let mut nu = vec![0.0; n];
        let mut ls = vec![0.0; n * n];
        for (o, &h) in nu.iter_mut().zip(&self.hs.nu) {
            *o = a1 * h;
        }
        for (o, &h) in ls.iter_mut().zip(&self.hs.ls) {
            *o = a1 * h;
        }
        let mut asym = if a1 != 0.0 { self.hs.asym_rel } else { 0.0 };
        let mut gl = if a1 != 0.0 { self.hs.gain_loss_rel } else { None };
        let mut raw_null = if a1 != 0.0 { self.hs.raw_null } else { [0.0; 3] };
        let mut provenance = self.provenance_hs;
        if a3 != 0.0 {
            let cubic = self.cubic.as_ref().ok_or_else(|| {
                Error::Config("cos³θ coefficient nonzero but no cubic piece assembled".into())
            })?;
            for (o, &c) in nu.iter_mut().zip(&cubic.nu) {
                *o += a3 * c;
            }
            for (o, &c) in ls.iter_mut().zip(&cubic.ls) {
                *o += a3 * c;
            }
            asym = asym.max(cubic.asym_rel);
            gl = match (gl, cubic.gain_loss_rel) {
                (Some(a), Some(b)) => Some(a.max(b)),
                (a, b) => a.or(b),
            };
            for (r, &c) in raw_null.iter_mut().zip(&cubic.raw_null) {
                *r = r.max(c);
            }
            provenance = if a1 != 0.0 && self.provenance_hs == Provenance::ClosedForm {
                Provenance::Mixed
            } else {
                Provenance::Direct
            };
        }
        Ok(LinearOperator {
            grid: Arc::clone(&self.grid),
            z,
            k,
            nu,
            ls,
            provenance,
            asym_rel: asym,
            gain_loss_rel: gl,
            raw_null,
        })
    }
}

/// One-shot assembly of ∂_z^k L^z (builds a factory internally; prefer the
/// factory when several (z, k) instances share a grid and model).
pub fn assemble_l(
    grid: Arc<AxisymGrid>,
    model: CollisionModel,
    z: f64,
    k: usize,
    opts: FactoryOptions,
) -> Result<LinearOperator> {
    OperatorFactory::new(grid, model, opts)?.operator(z, k)
}

impl LinearOperator {
    /// Apply in raw node coordinates: (L f)_i = Σ_j L_ij f_j.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let sw: Vec<f64> = self.grid.w3.iter().map(|&w| w.sqrt()).collect();
        let ft: Vec<f64> = f.iter().zip(&sw).map(|(&v, &s)| v * s).collect();
        let out = self.apply_sym(&ft);
        out.iter().zip(&sw).map(|(&v, &s)| v / s).collect()
    }

    /// Apply in symmetrized coordinates (f̃ = √w3 · f).
    pub fn apply_sym(&self, ft: &[f64]) -> Vec<f64> {
        let n = self.grid.n();
        (0..n)
            .map(|i| (0..n).map(|j| self.ls[i * n + j] * ft[j]).sum())
            .collect()
    }

    /// Collision-frequency bounds: (C₁, C₂) with C₁(1+|ξ|) ≤ ν ≤ C₂(1+|ξ|)
    /// over the grid. Positive for a zeroth-derivative operator of a
    /// positivity-checked kernel.
    pub fn nu_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (i, &v) in self.nu.iter().enumerate() {
            let s = v / (1.0 + self.grid.q[i].sqrt());
            lo = lo.min(s);
            hi = hi.max(s);
        }
        (lo, hi)
    }

    /// Discrete kernel-boundedness figure: sup_i ⟨ξ_i⟩^{β+1} Σ_j |K_ij| ⟨ξ_j⟩^{-β}
    /// with K = L + diag(ν) in raw coordinates (quadrature weights included),
    /// the grid analogue of the L^∞_β → L^∞_{β+1} gain bound.
    pub fn kernel_bound(&self, beta: f64) -> f64 {
        let n = self.grid.n();
        let sw: Vec<f64> = self.grid.w3.iter().map(|&w| w.sqrt()).collect();
        let br = |i: usize| (1.0 + self.grid.q[i]).sqrt();
        let mut worst = 0.0_f64;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                let mut k = self.ls[i * n + j];
                if i == j {
                    k += self.nu[i];
                }
                row += (k * sw[j] / sw[i]).abs() * br(j).powf(-beta);
            }
            worst = worst.max(br(i).powf(beta + 1.0) * row);
        }
        worst
    }

    /// Microscopic spectral gap estimate: the distance from zero to the
    /// nearest nonzero eigenvalue of the projected symmetric matrix. The
    /// three projected invariant directions must show up as (numerically)
    /// zero eigenvalues, or tracking is declared ambiguous.
    pub fn nu1_estimate(&self) -> Result<f64> {
        let n = self.grid.n();
        let eig = sym_eig(&self.ls, n)?;
        let scale = eig.values.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
        let nulls = eig.values.iter().filter(|&&v| v.abs() < 1e-8 * scale).count();
        if nulls != 3 {
            return Err(Error::Numerics(format!(
                "expected exactly 3 null eigenvalues after projection, found {nulls}"
            )));
        }
        let top = eig
            .values
            .iter()
            .filter(|&&v| v.abs() >= 1e-8 * scale)
            .fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        if top >= 0.0 {
            return Err(Error::Numerics(format!(
                "projected collision matrix has a positive eigenvalue {top:.3e}"
            )));
        }
        Ok(-top)
    }
}
