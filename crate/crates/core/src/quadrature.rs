//! Gauss-Legendre rules.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Nodes and weights of the `n`-point rule on `[-1, 1]`, by Newton iteration
/// on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            let pm1 = p0;
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn gl16() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(16))
}

/// 16-point rule on `[a, b]`.
pub fn integrate16(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (x, w) = gl16();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    x.iter().zip(w).map(|(xi, wi)| wi * f(mid + half * xi)).sum::<f64>() * half
}

/// `∫_a^b f` where `f` has a square-root endpoint behaviour at `a`
/// (`sqrt_at_left`) or `b`; the substitution `x = a + u²` (or `b − u²`)
/// makes the integrand smooth.
pub fn integrate_sqrt_endpoint(f: impl Fn(f64) -> f64, a: f64, b: f64, sqrt_at_left: bool) -> f64 {
    if b <= a {
        return 0.0;
    }
    let s = (b - a).sqrt();
    if sqrt_at_left {
        integrate16(|u| f(a + u * u) * 2.0 * u, 0.0, s)
    } else {
        integrate16(|u| f(b - u * u) * 2.0 * u, 0.0, s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_is_exact_for_polynomials() {
        let (x, w) = gauss_legendre(16);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        for deg in 0..=31 {
            let got: f64 = x.iter().zip(&w).map(|(a, b)| b * a.powi(deg)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((got - exact).abs() < 1e-13, "deg {deg}: {got} vs {exact}");
        }
    }

    #[test]
    fn sqrt_endpoint() {
        // ∫_0^1 sqrt(1-x) dx = 2/3
        let v = integrate_sqrt_endpoint(|x| (1.0 - x).sqrt(), 0.0, 1.0, false);
        assert!((v - 2.0 / 3.0).abs() < 1e-14);
    }
}
