//! Generalized polynomial chaos bases on z ∈ [-1, 1].
//!
//! Two families, both orthonormal against their probability density ρ(z):
//!
//! * Legendre: ρ = 1/2 (uniform), ψ_k = √(2k-1) · P_{k-1};
//! * Chebyshev: ρ = 1/(π√(1-z²)), ψ_1 = 1, ψ_k = √2 · T_{k-1} for k ≥ 2.
//!
//! Chaos indices are 1-based throughout (ψ_1 is the constant). The family
//! determines the growth exponent n in max_z |ψ_k| ≤ √2 · k^n — n = 1/2 for
//! Legendre, n = 0 for Chebyshev — which in turn governs the admissible
//! exponents of the weighted chaos norms (diag k^m needs m > n + 1) and the
//! decay law |S'_kij| ≲ min(k,i,j)^n of the triple-product tensor.

use crate::error::{Error, Result};
use crate::model::CollisionModel;
use crate::quad::gauss_legendre;

/// Polynomial chaos family.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Basis {
    Legendre,
    Chebyshev,
}

impl Basis {
    pub fn name(self) -> &'static str {
        match self {
            Basis::Legendre => "legendre",
            Basis::Chebyshev => "chebyshev",
        }
    }

    /// Growth exponent n of the sup norm: max_z |ψ_k| ≤ √2 · k^n.
    pub fn growth_n(self) -> f64 {
        match self {
            Basis::Legendre => 0.5,
            Basis::Chebyshev => 0.0,
        }
    }
}

/// ψ_k(z) for 1-based k.
pub fn eval_psi(basis: Basis, k: usize, z: f64) -> f64 {
    assert!(k >= 1, "chaos indices are 1-based");
    let deg = k - 1;
    match basis {
        Basis::Legendre => {
            // P_deg by the three-term recurrence
            let mut p0 = 1.0;
            let mut p1 = z;
            if deg == 0 {
                return 1.0;
            }
            for m in 2..=deg {
                let mf = m as f64;
                let p2 = ((2.0 * mf - 1.0) * z * p1 - (mf - 1.0) * p0) / mf;
                p0 = p1;
                p1 = p2;
            }
            (2.0 * k as f64 - 1.0).sqrt() * p1
        }
        Basis::Chebyshev => {
            if deg == 0 {
                return 1.0;
            }
            let mut t0 = 1.0;
            let mut t1 = z;
            for _ in 2..=deg {
                let t2 = 2.0 * z * t1 - t0;
                t0 = t1;
                t1 = t2;
            }
            std::f64::consts::SQRT_2 * t1
        }
    }
}

/// Gauss quadrature adapted to the basis density: nodes z_q and weights w_q
/// such that Σ w_q f(z_q) ≈ ∫ f ρ dz, exact for polynomial f of degree
/// ≤ 2Q-1. Weights sum to 1.
pub fn quadrature(basis: Basis, q: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(q >= 1);
    match basis {
        Basis::Legendre => {
            let (x, w) = gauss_legendre(q);
            let w = w.iter().map(|&t| 0.5 * t).collect();
            (x, w)
        }
        Basis::Chebyshev => {
            // Chebyshev–Gauss: z_q = cos((2q-1)π/(2Q)), uniform weights 1/Q.
            let nodes = (1..=q)
                .map(|i| ((2 * i - 1) as f64 * std::f64::consts::PI / (2 * q) as f64).cos())
                .collect();
            (nodes, vec![1.0 / q as f64; q])
        }
    }
}

/// Smallest quadrature order that integrates z · ψ_k ψ_i ψ_j (degree
/// ≤ 3(K-1) + 1) exactly, which covers every tensor built here.
pub fn min_quadrature_order(kk: usize) -> usize {
    (3 * (kk - 1) + 2).div_ceil(2)
}

/// A chaos basis of size K together with a quadrature rule sufficient for all
/// its product tensors.
#[derive(Clone, Debug)]
pub struct GpcBasis {
    pub family: Basis,
    pub kk: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Build a K-term basis. `quad_order` of `None` picks the smallest exact
/// rule; an explicit order below that is rejected rather than silently
/// degraded.
pub fn make_basis(family: Basis, kk: usize, quad_order: Option<usize>) -> Result<GpcBasis> {
    if kk < 1 {
        return Err(Error::Config("chaos order K must be at least 1".into()));
    }
    let need = min_quadrature_order(kk);
    let q = quad_order.unwrap_or(need.max(kk + 1));
    if q < need {
        return Err(Error::Config(format!(
            "quadrature order {q} insufficient for K = {kk}: product tensors of degree \
             {} need at least {need} nodes",
            3 * (kk - 1) + 1
        )));
    }
    let (nodes, weights) = quadrature(family, q);
    Ok(GpcBasis { family, kk, nodes, weights })
}

impl GpcBasis {
    pub fn psi(&self, k: usize, z: f64) -> f64 {
        eval_psi(self.family, k, z)
    }

    /// ψ values at the quadrature nodes: table[k-1][q].
    pub fn psi_table(&self) -> Vec<Vec<f64>> {
        (1..=self.kk)
            .map(|k| self.nodes.iter().map(|&z| self.psi(k, z)).collect())
            .collect()
    }

    /// Chaos coefficients of f: c_k = ∫ f ψ_k ρ dz by quadrature.
    pub fn project_coeffs(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        let fv: Vec<f64> = self.nodes.iter().map(|&z| f(z)).collect();
        (1..=self.kk)
            .map(|k| {
                self.nodes
                    .iter()
                    .zip(&self.weights)
                    .zip(&fv)
                    .map(|((&z, &w), &fz)| w * fz * self.psi(k, z))
                    .sum()
            })
            .collect()
    }

    /// Evaluate Σ c_k ψ_k(z).
    pub fn eval_series(&self, coeffs: &[f64], z: f64) -> f64 {
        coeffs
            .iter()
            .enumerate()
            .map(|(k, &c)| c * self.psi(k + 1, z))
            .sum()
    }
}

/// Diagonal of the chaos weight matrix W = diag(k^m), k = 1..K. The norm
/// equivalences behind the coupled-system estimates need m strictly above
/// n + 1, where n is the family's growth exponent.
pub fn weight_matrix(family: Basis, kk: usize, m: f64) -> Result<Vec<f64>> {
    let n = family.growth_n();
    if m <= n + 1.0 {
        return Err(Error::Config(format!(
            "weight exponent m = {m} too small for the {} family: m must exceed n+1 = {}",
            family.name(),
            n + 1.0
        )));
    }
    Ok((1..=kk).map(|k| (k as f64).powf(m)).collect())
}

/// Whether S_kij = ∫ ψ_k ψ_i ψ_j ρ dz can be nonzero for a constant-in-z
/// kernel factor (1-based indices).
///
/// Legendre: degree triangle inequality plus even total degree. Chebyshev:
/// one degree must equal the sum of the other two.
pub fn triple_mask(basis: Basis, k: usize, i: usize, j: usize) -> bool {
    let (a, b, c) = (k - 1, i - 1, j - 1);
    match basis {
        Basis::Legendre => (a + b + c) % 2 == 0 && a <= b + c && b <= a + c && c <= a + b,
        Basis::Chebyshev => a == b + c || b == a + c || c == a + b,
    }
}

/// Whether S'_kij = ∫ c(z) ψ_k ψ_i ψ_j ρ dz can be nonzero when c is linear
/// in z: the degree triangle inequality with one unit of slack from the
/// kernel factor, i.e. i + j ≥ k, k + i ≥ j, k + j ≥ i in 1-based indices.
/// Family-independent (only polynomial degrees enter).
pub fn chaos_mask(k: usize, i: usize, j: usize) -> bool {
    i + j >= k && k + i >= j && k + j >= i
}

/// Triple-product tensor S_kij (or its kernel-weighted variant S'_kij),
/// 1 ≤ k,i,j ≤ K, fully symmetric in its indices.
#[derive(Debug)]
pub struct TripleProducts {
    pub basis: Basis,
    pub kk: usize,
    s: Vec<f64>,
}

impl TripleProducts {
    /// S_kij with 1-based indices.
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        assert!(k >= 1 && i >= 1 && j >= 1 && k <= self.kk && i <= self.kk && j <= self.kk);
        self.s[((k - 1) * self.kk + (i - 1)) * self.kk + (j - 1)]
    }
}

/// Σ w_q c(z_q) ψ_k ψ_i ψ_j for all index triples.
fn triple_quadrature(
    basis: Basis,
    kk: usize,
    z: &[f64],
    w: &[f64],
    c: impl Fn(f64) -> f64,
) -> Vec<f64> {
    let psi: Vec<Vec<f64>> = (1..=kk)
        .map(|k| z.iter().map(|&zq| eval_psi(basis, k, zq)).collect())
        .collect();
    let cw: Vec<f64> = z.iter().zip(w).map(|(&zq, &wq)| wq * c(zq)).collect();
    let mut s = vec![0.0; kk * kk * kk];
    for k in 0..kk {
        for i in 0..kk {
            for j in 0..kk {
                let mut acc = 0.0;
                for (qi, &cwq) in cw.iter().enumerate() {
                    acc += cwq * psi[k][qi] * psi[i][qi] * psi[j][qi];
                }
                s[(k * kk + i) * kk + j] = acc;
            }
        }
    }
    s
}

/// Plain triple-product tensor S_kij = ∫ ψ_k ψ_i ψ_j ρ dz, verified against
/// the family's exact selection rule: any entry the rule forces to vanish
/// must be below 1e-10 or the quadrature is inconsistent.
pub fn triple_products(basis: Basis, kk: usize, q: usize) -> Result<TripleProducts> {
    if kk < 1 {
        return Err(Error::Config("chaos order K must be at least 1".into()));
    }
    let need = min_quadrature_order(kk);
    if q < need {
        return Err(Error::Config(format!(
            "quadrature order {q} insufficient for K = {kk}: triple products of degree \
             {} need at least {need} nodes",
            3 * (kk - 1)
        )));
    }
    let (z, w) = quadrature(basis, q);
    let s = triple_quadrature(basis, kk, &z, &w, |_| 1.0);
    for k in 1..=kk {
        for i in 1..=kk {
            for j in 1..=kk {
                let v = s[((k - 1) * kk + (i - 1)) * kk + (j - 1)];
                if !triple_mask(basis, k, i, j) && v.abs() >= 1e-10 {
                    return Err(Error::Numerics(format!(
                        "triple product S[{k},{i},{j}] = {v:e} violates the selection rule; \
                         quadrature inconsistent"
                    )));
                }
            }
        }
    }
    Ok(TripleProducts { basis, kk, s })
}

/// Kernel-weighted triple-product tensor S'_kij = ∫ c(z) ψ_k ψ_i ψ_j ρ dz
/// with c(z) the scalar kernel factor. Only kernels whose z-dependence
/// multiplies a fixed angular shape have such a factor, so the cubic family
/// is rejected. The degree selection rule [`chaos_mask`] is verified by
/// quadrature.
pub fn triple_tensor(gpc: &GpcBasis, model: &CollisionModel) -> Result<TripleProducts> {
    let b1 = require_factored(model, "triple tensor")?;
    let s = triple_quadrature(gpc.family, gpc.kk, &gpc.nodes, &gpc.weights, |z| 1.0 + b1 * z);
    for k in 1..=gpc.kk {
        for i in 1..=gpc.kk {
            for j in 1..=gpc.kk {
                let v = s[((k - 1) * gpc.kk + (i - 1)) * gpc.kk + (j - 1)];
                if !chaos_mask(k, i, j) && v.abs() >= 1e-10 {
                    return Err(Error::Numerics(format!(
                        "weighted triple product S'[{k},{i},{j}] = {v:e} violates the degree \
                         selection rule; quadrature inconsistent"
                    )));
                }
            }
        }
    }
    Ok(TripleProducts { basis: gpc.family, kk: gpc.kk, s })
}

/// Chaos coupling matrix of the linear-in-z kernel factor: B = I + b1 · J with
/// J_ki = ∫ z ψ_k ψ_i ρ dz. Row-major K×K. Tridiagonal for both bases (the
/// three-term recurrence of orthogonal polynomials), symmetric, unit diagonal.
pub fn coupling_matrix(basis: Basis, kk: usize, b1: f64) -> Vec<f64> {
    let q = min_quadrature_order(kk).max(kk + 1);
    let (z, w) = quadrature(basis, q);
    let psi: Vec<Vec<f64>> = (1..=kk)
        .map(|k| z.iter().map(|&zq| eval_psi(basis, k, zq)).collect())
        .collect();
    let mut b = vec![0.0; kk * kk];
    for k in 0..kk {
        for i in 0..kk {
            let mut acc = 0.0;
            for (qi, &wq) in w.iter().enumerate() {
                acc += wq * z[qi] * psi[k][qi] * psi[i][qi];
            }
            b[k * kk + i] = b1 * acc;
        }
        b[k * kk + k] += 1.0;
    }
    b
}

/// Pair tensor S_ki = ∫ c(z) ψ_k ψ_i ρ dz of a kernel with scalar factor
/// c(z) = 1 + b1 z; equals the coupling matrix B. The cubic family has no
/// scalar factor and is rejected.
pub fn pair_tensor(gpc: &GpcBasis, model: &CollisionModel) -> Result<Vec<f64>> {
    let b1 = require_factored(model, "pair tensor")?;
    Ok(coupling_matrix(gpc.family, gpc.kk, b1))
}

/// The b1 of a kernel that factors as c(z)·(angular shape); errors otherwise.
fn require_factored(model: &CollisionModel, what: &str) -> Result<f64> {
    if model.scale(0.0).is_none() {
        return Err(Error::Config(format!(
            "{what} requires a kernel whose z-dependence is a scalar factor times a fixed \
             angular shape; the {} family does not factor",
            model.family.name()
        )));
    }
    Ok(model.coeff)
}
