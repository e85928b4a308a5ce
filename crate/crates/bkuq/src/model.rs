//! Uncertain collision-kernel families.
//!
//! The angular collision kernel b(cosθ, z) carries the one-dimensional random
//! variable z ∈ [−C_z, C_z]. Two families are supported, both linear in z:
//!
//! * proportional: b(s, z) = (1 + z·b1)·s — the hard-sphere kernel scaled by
//!   c(z) = 1 + b1·z, so every z-operator is a scalar multiple of the
//!   hard-sphere operator;
//! * cubic: b(s, z) = s + z·ε·s³ — the z-dependence arrives through a
//!   genuinely different angular shape, so operators at different z are not
//!   proportional and the kernel matrix must be built by direct quadrature.
//!
//! Construction validates the positivity bracket
//! C_{b1} ≤ ∫₀^{π/2} b(cosθ, z) sinθ dθ ≤ C_{b2} with C_{b1} > 0 over the
//! whole z-domain (the integral is linear in z, so the endpoints suffice),
//! and records the summed bound on the z-derivatives of b.

use crate::error::{Error, Result};

/// Supported angular-kernel families.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    /// b(s, z) = (1 + z·b1)·s.
    Proportional,
    /// b(s, z) = s + z·ε·s³.
    Cubic,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Proportional => "proportional",
            Family::Cubic => "cubic",
        }
    }
}

/// A validated uncertain collision kernel.
#[derive(Clone, Copy, Debug)]
pub struct CollisionModel {
    pub family: Family,
    /// b1 for the proportional family, ε for the cubic one.
    pub coeff: f64,
    /// z-domain bound: |z| ≤ c_z.
    pub c_z: f64,
    /// Highest supported z-derivative order of the kernel.
    pub alpha: usize,
    /// Positivity bracket of ∫₀^{π/2} b(cosθ, z) sinθ dθ over the z-domain.
    pub angular_lower: f64,
    pub angular_upper: f64,
}

/// ∫₀^{π/2} cosᵖθ sinθ dθ = 1/(p+1) for the two powers in use.
const HALF: f64 = 0.5;
const QUARTER: f64 = 0.25;

impl CollisionModel {
    pub fn proportional(b1: f64, c_z: f64, alpha: usize) -> Result<Self> {
        Self::new(Family::Proportional, b1, c_z, alpha)
    }

    pub fn cubic(eps: f64, c_z: f64, alpha: usize) -> Result<Self> {
        Self::new(Family::Cubic, eps, c_z, alpha)
    }

    fn new(family: Family, coeff: f64, c_z: f64, alpha: usize) -> Result<Self> {
        if !(c_z > 0.0) || !c_z.is_finite() {
            return Err(Error::Config(format!("z-domain bound C_z = {c_z} must be positive")));
        }
        if !coeff.is_finite() {
            return Err(Error::Config("kernel coefficient must be finite".into()));
        }
        // ∫ b sinθ dθ is linear in z, so its extrema over |z| ≤ C_z sit at the
        // endpoints.
        let at = |z: f64| match family {
            Family::Proportional => (1.0 + z * coeff) * HALF,
            Family::Cubic => HALF + z * coeff * QUARTER,
        };
        let (lo, hi) = (at(-c_z).min(at(c_z)), at(-c_z).max(at(c_z)));
        if lo <= 0.0 {
            return Err(Error::Config(format!(
                "kernel positivity fails on the z-domain: min ∫b sinθ dθ = {lo:.3e} ≤ 0 \
                 (need |{}|·C_z {} for the {} family)",
                coeff,
                match family {
                    Family::Proportional => "< 1",
                    Family::Cubic => "< 2",
                },
                family.name()
            )));
        }
        Ok(Self { family, coeff, c_z, alpha, angular_lower: lo, angular_upper: hi })
    }

    /// Σ_{k=1..α} max over the domain of |∂_z^k b|: both families are linear
    /// in z, so only k = 1 contributes and the maximum over s ∈ [0,1] is
    /// |coeff|.
    pub fn derivative_bound(&self) -> f64 {
        if self.alpha >= 1 {
            self.coeff.abs()
        } else {
            0.0
        }
    }

    /// c(z) of the proportional family; the cubic kernel does not factor.
    pub fn scale(&self, z: f64) -> Option<f64> {
        match self.family {
            Family::Proportional => Some(1.0 + self.coeff * z),
            Family::Cubic => None,
        }
    }

    /// Coefficients (a₁, a₃) of cosθ and cos³θ in ∂_z^k b(cosθ, z).
    pub fn angular_coeffs(&self, z: f64, k: usize) -> (f64, f64) {
        match (self.family, k) {
            (Family::Proportional, 0) => (1.0 + self.coeff * z, 0.0),
            (Family::Proportional, 1) => (self.coeff, 0.0),
            (Family::Cubic, 0) => (1.0, z * self.coeff),
            (Family::Cubic, 1) => (0.0, self.coeff),
            // Both families are linear in z.
            _ => (0.0, 0.0),
        }
    }

    /// Reject z outside the declared domain.
    pub fn check_z(&self, z: f64) -> Result<()> {
        if z.abs() > self.c_z + 1e-12 {
            return Err(Error::Config(format!(
                "z = {z} outside the kernel's domain |z| ≤ {}",
                self.c_z
            )));
        }
        Ok(())
    }
}
