//! Gauss–Legendre rules and shifted Legendre polynomials on `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{MrsError, Result};

/// Gauss–Legendre nodes and weights mapped to `[0, 1]` (weights sum to 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Exact for polynomials of degree `2n − 1`.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n > 64 {
            return Err(MrsError::InvalidArgument(format!(
                "gauss rule needs 1..=64 nodes, got {n}"
            )));
        }
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Chebyshev initial guess, then Newton on P_n(x) = 0
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = 0.5 * (1.0 - x);
            nodes[n - 1 - i] = 0.5 * (1.0 + x);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.5;
        }
        Ok(GaussLegendre { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `∫_a^b f`.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let h = b - a;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(s, w)| w * f(a + s * h))
            .sum::<f64>()
            * h
    }
}

/// Standard Legendre `P_n(x)` and `P_n'(x)` on `[−1, 1]`.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for m in 1..n {
        let m = m as f64;
        let p2 = ((2.0 * m + 1.0) * x * p1 - m * p0) / (m + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    (p1, n * (x * p1 - p0) / (x * x - 1.0))
}

/// Shifted Legendre values `P̃_0(θ) … P̃_deg(θ)` with `P̃_m(θ) = P_m(2θ − 1)`.
pub fn shifted_legendre(deg: usize, theta: f64) -> Vec<f64> {
    let x = 2.0 * theta - 1.0;
    let mut p = Vec::with_capacity(deg + 1);
    p.push(1.0);
    if deg >= 1 {
        p.push(x);
    }
    for m in 1..deg {
        let mf = m as f64;
        p.push(((2.0 * mf + 1.0) * x * p[m] - mf * p[m - 1]) / (mf + 1.0));
    }
    p
}

/// Derivatives `dP̃_m/dθ` for `m = 0..=deg`.
pub fn shifted_legendre_derivative(deg: usize, theta: f64) -> Vec<f64> {
    let p = shifted_legendre(deg, theta);
    // P'_{m+1} = P'_{m−1} + (2m + 1) P_m  in x; dθ = dx/2
    let mut dp = vec![0.0; deg + 1];
    for m in 0..deg {
        let prev = if m >= 1 { dp[m - 1] } else { 0.0 };
        dp[m + 1] = prev + 2.0 * (2.0 * m as f64 + 1.0) * p[m];
    }
    dp
}

/// `∫_0^1 P̃_m² dθ`.
pub fn shifted_legendre_norm2(m: usize) -> f64 {
    1.0 / (2.0 * m as f64 + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_two_point_rule() {
        let g = GaussLegendre::new(2).unwrap();
        let s = 0.5 / 3f64.sqrt();
        assert!((g.nodes[0] - (0.5 - s)).abs() < 1e-15);
        assert!((g.nodes[1] - (0.5 + s)).abs() < 1e-15);
        assert!((g.weights[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn exact_up_to_degree_2n_minus_1() {
        for n in 1..=12 {
            let g = GaussLegendre::new(n).unwrap();
            assert!((g.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for k in 0..2 * n {
                let q = g.integrate(0.0, 1.0, |t| t.powi(k as i32));
                assert!((q - 1.0 / (k as f64 + 1.0)).abs() < 1e-14, "n={n} k={k}");
            }
            let q = g.integrate(0.0, 1.0, |t| t.powi(2 * n as i32));
            assert!((q - 1.0 / (2.0 * n as f64 + 1.0)).abs() > 1e-16);
        }
    }

    #[test]
    fn rejects_zero_nodes() {
        assert!(GaussLegendre::new(0).is_err());
    }

    #[test]
    fn legendre_orthogonality() {
        let g = GaussLegendre::new(8).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let v = g.integrate(0.0, 1.0, |t| {
                    let p = shifted_legendre(5, t);
                    p[i] * p[j]
                });
                let e = if i == j {
                    shifted_legendre_norm2(i)
                } else {
                    0.0
                };
                assert!((v - e).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn legendre_derivative_matches_differences() {
        let h = 1e-6;
        for &t in &[0.0, 0.13, 0.5, 0.91] {
            let d = shifted_legendre_derivative(6, t);
            let p = shifted_legendre(6, t + h);
            let m = shifted_legendre(6, t - h);
            for k in 0..=6 {
                assert!((d[k] - (p[k] - m[k]) / (2.0 * h)).abs() < 1e-6 * (1.0 + d[k].abs()));
            }
        }
    }
}
