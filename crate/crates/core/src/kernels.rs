//! Singular and regularized Stokeslets in two and three dimensions.
//!
//! Every kernel here has the radial form
//!
//! ```text
//! U_ij(r) = a(s) δ_ij + b(s) r_i r_j,      s = |r|²
//! ```
//!
//! so values and gradients are assembled from the scalar pair `(a, b)` and
//! their derivatives with respect to `s`. Working in `s` keeps the gradient
//! free of `1/|r|` factors, which makes it exact (zero) at the origin.
//!
//! The regularized kernels are the closed-form convolutions of the singular
//! kernel with the power-law blobs
//!
//! ```text
//! 2D:  ζ_ε(r) = 3ε³ / (2π (r² + ε²)^{5/2})
//! 3D:  ζ_ε(r) = 15ε⁴ / (8π (r² + ε²)^{7/2})
//! ```
//!
//! The test suite checks both closed forms against direct numerical
//! convolution.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{MrsError, Result};

/// Separations below this are treated as coincident by the singular kernel.
pub const SINGULAR_GUARD: f64 = 1e-14;

/// 3×3 storage; in 2D only the upper-left 2×2 block is populated.
pub type Mat3 = [[f64; 3]; 3];

/// `grad[i][j][k] = ∂U_ij / ∂r_k`.
pub type Grad3 = [[[f64; 3]; 3]; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Dim {
    Two,
    Three,
}

impl Dim {
    pub fn get(self) -> usize {
        match self {
            Dim::Two => 2,
            Dim::Three => 3,
        }
    }
}

impl TryFrom<u8> for Dim {
    type Error = String;
    fn try_from(value: u8) -> std::result::Result<Self, Self::Error> {
        match value {
            2 => Ok(Dim::Two),
            3 => Ok(Dim::Three),
            other => Err(format!("dimension must be 2 or 3, got {other}")),
        }
    }
}

impl From<Dim> for u8 {
    fn from(d: Dim) -> u8 {
        d.get() as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub dim: Dim,
    /// Regularization length; zero selects the singular kernel.
    pub epsilon: f64,
}

impl KernelParams {
    pub fn new(dim: Dim, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(MrsError::InvalidArgument(format!(
                "epsilon must be finite and non-negative, got {epsilon}"
            )));
        }
        Ok(KernelParams { dim, epsilon })
    }
}

/// Radial coefficients `(a, b, da/ds, db/ds)`.
#[derive(Debug, Clone, Copy)]
struct Radial {
    a: f64,
    b: f64,
    da: f64,
    db: f64,
}

fn regularized_radial(dim: Dim, s: f64, eps: f64) -> Radial {
    match dim {
        Dim::Two => {
            let c = 1.0 / (4.0 * PI);
            let rr = (s + eps * eps).sqrt();
            let rp = rr + eps;
            let a = -c * (rp.ln() - eps * (rr + 2.0 * eps) / (rp * rr));
            let b = c * (rr + 2.0 * eps) / (rp * rp * rr);
            // d/dR of the bracket in `a`, then chain rule dR/ds = 1/(2R).
            let bracket_r =
                1.0 / rp + eps * (rr * rr + 4.0 * eps * rr + 2.0 * eps * eps) / (rr * rr * rp * rp);
            let da = -c * bracket_r / (2.0 * rr);
            let h_r =
                -(2.0 * rr * rr + 6.0 * eps * rr + 2.0 * eps * eps) / (rr * rr * rp * rp * rp);
            let db = c * h_r / (2.0 * rr);
            Radial { a, b, da, db }
        }
        Dim::Three => {
            let c = 1.0 / (8.0 * PI);
            let e2 = eps * eps;
            let q = s + e2;
            let q32 = q * q.sqrt();
            let q52 = q32 * q;
            Radial {
                a: c * (s + 2.0 * e2) / q32,
                b: c / q32,
                da: c * (-0.5 * s - 2.0 * e2) / q52,
                db: -1.5 * c / q52,
            }
        }
    }
}

fn singular_radial(dim: Dim, s: f64) -> (f64, f64) {
    match dim {
        Dim::Two => {
            let c = 1.0 / (4.0 * PI);
            (-0.5 * c * s.ln(), c / s)
        }
        Dim::Three => {
            let c = 1.0 / (8.0 * PI);
            let r = s.sqrt();
            (c / r, c / (s * r))
        }
    }
}

fn norm_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn assemble(d: usize, r: &[f64], a: f64, b: f64) -> Mat3 {
    let mut u = [[0.0; 3]; 3];
    for i in 0..d {
        for j in 0..d {
            u[i][j] = b * r[i] * r[j];
        }
        u[i][i] += a;
    }
    u
}

/// Singular Stokeslet (free-space Green's function, unit viscosity).
///
/// 2D: `(1/4π)(−δ_ij log r + r_i r_j / r²)`;
/// 3D: `(1/8π)(δ_ij / r + r_i r_j / r³)`.
pub fn stokeslet_singular(r: &[f64], dim: Dim) -> Result<Mat3> {
    let d = dim.get();
    debug_assert_eq!(r.len(), d);
    let s = norm_sq(r);
    if s.sqrt() < SINGULAR_GUARD {
        return Err(MrsError::SingularEvaluation { distance: s.sqrt() });
    }
    let (a, b) = singular_radial(dim, s);
    Ok(assemble(d, r, a, b))
}

/// Regularized Stokeslet `U_ε`; finite everywhere including `r = 0`.
pub fn stokeslet_regularized(r: &[f64], params: &KernelParams) -> Mat3 {
    let d = params.dim.get();
    debug_assert_eq!(r.len(), d);
    debug_assert!(params.epsilon > 0.0);
    let rad = regularized_radial(params.dim, norm_sq(r), params.epsilon);
    assemble(d, r, rad.a, rad.b)
}

/// `∂U_ε,ij / ∂r_k`, odd in `r`.
pub fn stokeslet_regularized_gradient(r: &[f64], params: &KernelParams) -> Grad3 {
    let d = params.dim.get();
    debug_assert_eq!(r.len(), d);
    let rad = regularized_radial(params.dim, norm_sq(r), params.epsilon);
    let mut g = [[[0.0; 3]; 3]; 3];
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                let mut v = 2.0 * rad.db * r[i] * r[j] * r[k];
                if i == j {
                    v += 2.0 * rad.da * r[k];
                }
                if i == k {
                    v += rad.b * r[j];
                }
                if j == k {
                    v += rad.b * r[i];
                }
                g[i][j][k] = v;
            }
        }
    }
    g
}

/// Dispatches on `epsilon`: zero gives the singular kernel.
pub fn stokeslet(r: &[f64], params: &KernelParams) -> Result<Mat3> {
    if params.epsilon == 0.0 {
        stokeslet_singular(r, params.dim)
    } else {
        Ok(stokeslet_regularized(r, params))
    }
}
