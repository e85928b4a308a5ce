//! Gauss–Legendre quadrature and composite panel rules.
//!
//! All rules return plain `(nodes, weights)` pairs. Composite rules are used
//! throughout: equal panels for smooth directions, geometric panels where an
//! integrand concentrates at one end of the interval (near-diagonal kernel
//! peaks, small wavenumbers).

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Legendre polynomial `P_n(x)` and its derivative, by the three-term
/// recurrence. Valid for any `x`, used by the node solver on (-1, 1).
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0_f64;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    // P_n' from P_n and P_{n-1}: (1-x²) P_n' = n (P_{n-1} - x P_n)
    let dp = n as f64 * (p0 - x * p1) / (1.0 - x * x);
    (p1, dp)
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [-1, 1],
/// computed by Newton iteration from the Chebyshev initial guess. Nodes are
/// returned in increasing order.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "empty quadrature rule");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_pair(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_pair(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        weights[i] = w;
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
        let (_, dp) = legendre_pair(n, 0.0);
        weights[n / 2] = 2.0 / (dp * dp);
    }
    (nodes, weights)
}

/// The reference 12-point rule, cached; hot inner loops (reduced-kernel
/// evaluation) reuse it without reallocating.
pub fn gl12() -> &'static (Vec<f64>, Vec<f64>) {
    static GL12: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    GL12.get_or_init(|| gauss_legendre(12))
}

/// `n`-point Gauss–Legendre rule mapped affinely to [a, b].
pub fn gauss_legendre_on(a: f64, b: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    map_to(&x, &w, a, b)
}

/// Affine map of a reference rule on [-1, 1] to [a, b].
pub fn map_to(x: &[f64], w: &[f64], a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let nodes = x.iter().map(|&t| mid + half * t).collect();
    let weights = w.iter().map(|&t| half * t).collect();
    (nodes, weights)
}

/// Composite rule: `n_panels` equal panels on [a, b] with `per_panel`
/// Gauss–Legendre nodes each.
pub fn uniform_panels(a: f64, b: f64, n_panels: usize, per_panel: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(per_panel);
    let mut nodes = Vec::with_capacity(n_panels * per_panel);
    let mut weights = Vec::with_capacity(n_panels * per_panel);
    let h = (b - a) / n_panels as f64;
    for p in 0..n_panels {
        let lo = a + p as f64 * h;
        let (nx, nw) = map_to(&x, &w, lo, lo + h);
        nodes.extend(nx);
        weights.extend(nw);
    }
    (nodes, weights)
}

/// Composite rule on (0, r_max] with panel edges in geometric progression
/// toward 0: edges `r_max · ratio^(n_panels - i)` for i = 1..n_panels, with
/// the innermost panel closed at 0. Resolves integrands that vary on ever
/// finer scales near the origin (small-wavenumber spectral branches).
pub fn geometric_panels(
    r_max: f64,
    n_panels: usize,
    per_panel: usize,
    ratio: f64,
) -> (Vec<f64>, Vec<f64>) {
    assert!(r_max > 0.0 && ratio > 0.0 && ratio < 1.0 && n_panels >= 1);
    let (x, w) = gauss_legendre(per_panel);
    let mut edges = Vec::with_capacity(n_panels + 1);
    edges.push(0.0);
    for i in 1..=n_panels {
        edges.push(r_max * ratio.powi((n_panels - i) as i32));
    }
    let mut nodes = Vec::with_capacity(n_panels * per_panel);
    let mut weights = Vec::with_capacity(n_panels * per_panel);
    for p in 0..n_panels {
        let (nx, nw) = map_to(&x, &w, edges[p], edges[p + 1]);
        nodes.extend(nx);
        weights.extend(nw);
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl_low_order_nodes_match_closed_forms() {
        let (x2, w2) = gauss_legendre(2);
        let r = 1.0 / 3.0_f64.sqrt();
        assert!((x2[0] + r).abs() < 1e-15 && (x2[1] - r).abs() < 1e-15);
        assert!((w2[0] - 1.0).abs() < 1e-15 && (w2[1] - 1.0).abs() < 1e-15);

        let (x3, w3) = gauss_legendre(3);
        let s = (0.6_f64).sqrt();
        assert!((x3[0] + s).abs() < 1e-15 && x3[1].abs() < 1e-15 && (x3[2] - s).abs() < 1e-15);
        assert!((w3[0] - 5.0 / 9.0).abs() < 1e-15 && (w3[1] - 8.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn gl_integrates_polynomials_exactly() {
        // n-point rule is exact through degree 2n-1.
        for n in [4usize, 8, 12, 20] {
            let (x, w) = gauss_legendre(n);
            let deg = 2 * n - 1;
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            let approx: f64 = x.iter().zip(&w).map(|(&t, &q)| q * t.powi(deg as i32)).sum();
            assert!((approx - exact).abs() < 1e-13, "n = {n}");
            // and degree 2n fails to be exact (sanity that deg 2n-1 is sharp)
            let exact2 = 2.0 / (2.0 * n as f64 + 1.0);
            let approx2: f64 = x.iter().zip(&w).map(|(&t, &q)| q * t.powi(2 * n as i32)).sum();
            assert!((approx2 - exact2).abs() > 1e-13, "n = {n} unexpectedly exact");
        }
    }

    #[test]
    fn composite_rules_integrate_smooth_functions() {
        let (x, w) = uniform_panels(-2.0, 3.0, 7, 8);
        let got: f64 = x.iter().zip(&w).map(|(&t, &q)| q * t.exp()).sum();
        let exact = 3.0_f64.exp() - (-2.0_f64).exp();
        assert!((got - exact).abs() / exact < 1e-14);

        let (x, w) = geometric_panels(10.0, 25, 12, 0.75);
        assert_eq!(x.len(), 300);
        // ∫₀^10 r² e^{-r} dr = 2 − e^{-10}(100+20+2)
        let got: f64 = x.iter().zip(&w).map(|(&r, &q)| q * r * r * (-r).exp()).sum();
        let exact = 2.0 - (-10.0_f64).exp() * 122.0;
        assert!((got - exact).abs() / exact < 1e-13);
        // node ordering is strictly increasing and positive
        assert!(x[0] > 0.0);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }
}
