//! Elastic spring networks, tethers and external fields.
//!
//! Positions, forces and perturbations are flat `[x_0, y_0, (z_0), x_1, ...]`
//! slices with `dim` components per point.

use serde::{Deserialize, Serialize};

use crate::error::{MrsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spring {
    pub i: usize,
    pub j: usize,
    pub stiffness: f64,
    pub rest_length: f64,
}

/// Undirected springs, stored once per pair, evaluated in stored order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpringNetwork {
    num_points: usize,
    edges: Vec<Spring>,
}

struct EdgeGeom {
    dir: [f64; 3],
    len: f64,
}

fn edge_geom(x: &[f64], dim: usize, e: &Spring) -> Result<EdgeGeom> {
    let mut dir = [0.0; 3];
    let mut len2 = 0.0;
    for c in 0..dim {
        let v = x[e.i * dim + c] - x[e.j * dim + c];
        dir[c] = v;
        len2 += v * v;
    }
    let len = len2.sqrt();
    if len == 0.0 {
        return Err(MrsError::DegenerateGeometry {
            first: e.i,
            second: e.j,
        });
    }
    for v in dir.iter_mut().take(dim) {
        *v /= len;
    }
    Ok(EdgeGeom { dir, len })
}

impl SpringNetwork {
    pub fn new(num_points: usize, edges: Vec<Spring>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for (n, e) in edges.iter().enumerate() {
            if e.i == e.j {
                return Err(MrsError::InvalidArgument(format!(
                    "spring {n} connects point {} to itself",
                    e.i
                )));
            }
            if e.i >= num_points || e.j >= num_points {
                return Err(MrsError::InvalidArgument(format!(
                    "spring {n} references point outside 0..{num_points}"
                )));
            }
            if !(e.rest_length > 0.0) || !e.rest_length.is_finite() {
                return Err(MrsError::InvalidArgument(format!(
                    "spring {n} has rest length {}",
                    e.rest_length
                )));
            }
            if !(e.stiffness >= 0.0) || !e.stiffness.is_finite() {
                return Err(MrsError::InvalidArgument(format!(
                    "spring {n} has stiffness {}",
                    e.stiffness
                )));
            }
            if !seen.insert((e.i.min(e.j), e.i.max(e.j))) {
                return Err(MrsError::InvalidArgument(format!(
                    "duplicate spring between {} and {}",
                    e.i, e.j
                )));
            }
        }
        Ok(SpringNetwork { num_points, edges })
    }

    pub fn empty(num_points: usize) -> Self {
        SpringNetwork {
            num_points,
            edges: Vec::new(),
        }
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn edges(&self) -> &[Spring] {
        &self.edges
    }

    /// Adds `F_j[x] = Σ k (|x_i − x_j|/r⁰ − 1) (x_i − x_j)/|x_i − x_j|` into `out`.
    pub fn add_forces(&self, x: &[f64], dim: usize, out: &mut [f64]) -> Result<()> {
        for e in &self.edges {
            let g = edge_geom(x, dim, e)?;
            let mag = e.stiffness * (g.len / e.rest_length - 1.0);
            for c in 0..dim {
                let f = mag * g.dir[c];
                out[e.j * dim + c] += f;
                out[e.i * dim + c] -= f;
            }
        }
        Ok(())
    }

    pub fn forces(&self, x: &[f64], dim: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.add_forces(x, dim, &mut out)?;
        Ok(out)
    }

    /// Adds the Jacobian action `DF[x](y)` into `out`. The operator is
    /// symmetric, so this is also its adjoint.
    pub fn add_jacobian_apply(
        &self,
        x: &[f64],
        dim: usize,
        y: &[f64],
        out: &mut [f64],
    ) -> Result<()> {
        for e in &self.edges {
            let g = edge_geom(x, dim, e)?;
            let tangential = 1.0 / e.rest_length - 1.0 / g.len;
            let axial = 1.0 / e.rest_length;
            let mut dy = [0.0; 3];
            let mut proj = 0.0;
            for c in 0..dim {
                dy[c] = y[e.i * dim + c] - y[e.j * dim + c];
                proj += g.dir[c] * dy[c];
            }
            for c in 0..dim {
                let v = e.stiffness
                    * (tangential * (dy[c] - g.dir[c] * proj) + axial * g.dir[c] * proj);
                out[e.j * dim + c] += v;
                out[e.i * dim + c] -= v;
            }
        }
        Ok(())
    }

    pub fn jacobian_apply(&self, x: &[f64], dim: usize, y: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.add_jacobian_apply(x, dim, y, &mut out)?;
        Ok(out)
    }

    /// `Σ ½ k r⁰ (|Δx|/r⁰ − 1)²`; the spring forces are its negative gradient.
    pub fn potential_energy(&self, x: &[f64], dim: usize) -> Result<f64> {
        let mut energy = 0.0;
        for e in &self.edges {
            let g = edge_geom(x, dim, e)?;
            let strain = g.len / e.rest_length - 1.0;
            energy += 0.5 * e.stiffness * e.rest_length * strain * strain;
        }
        Ok(energy)
    }
}

/// Linear restoring force `−k_t (x_k − x_k^ref)` toward fixed anchors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tether {
    pub reference: Vec<f64>,
    pub stiffness: f64,
}

impl Tether {
    pub fn add_forces(&self, x: &[f64], out: &mut [f64]) {
        for ((o, xv), rv) in out.iter_mut().zip(x).zip(&self.reference) {
            *o -= self.stiffness * (xv - rv);
        }
    }

    pub fn add_jacobian_apply(&self, y: &[f64], out: &mut [f64]) {
        for (o, yv) in out.iter_mut().zip(y) {
            *o -= self.stiffness * yv;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExternalField {
    #[default]
    None,
    /// Background flow `u(x) = C·x`, `C` given row-major.
    LinearFlow { c: Vec<Vec<f64>> },
    /// Uniform body force added to every point's force before the kernel sum.
    Gravity { g: Vec<f64> },
}

impl ExternalField {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            ExternalField::None => Ok(()),
            ExternalField::LinearFlow { c } => {
                if c.len() != dim || c.iter().any(|row| row.len() != dim) {
                    return Err(MrsError::config(
                        "field.c",
                        format!("flow tensor must be {dim}x{dim}"),
                    ));
                }
                if c.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(MrsError::config("field.c", "entries must be finite"));
                }
                Ok(())
            }
            ExternalField::Gravity { g } => {
                if g.len() != dim || g.iter().any(|v| !v.is_finite()) {
                    return Err(MrsError::config(
                        "field.g",
                        format!("gravity must have {dim} finite entries"),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Adds the background velocity `C·x_k` (linear flow only).
    pub fn add_velocity(&self, x: &[f64], dim: usize, out: &mut [f64]) {
        if let ExternalField::LinearFlow { c } = self {
            apply_per_point(c, x, dim, out, false);
        }
    }

    pub fn velocity(&self, x: &[f64], dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.add_velocity(x, dim, &mut out);
        out
    }

    /// Adds the uniform body force (gravity only).
    pub fn add_force(&self, dim: usize, out: &mut [f64]) {
        if let ExternalField::Gravity { g } = self {
            for chunk in out.chunks_exact_mut(dim) {
                for (o, gv) in chunk.iter_mut().zip(g) {
                    *o += gv;
                }
            }
        }
    }

    /// Adds `C·y_k`.
    pub fn add_jacobian_apply(&self, y: &[f64], dim: usize, out: &mut [f64]) {
        if let ExternalField::LinearFlow { c } = self {
            apply_per_point(c, y, dim, out, false);
        }
    }

    /// Adds `Cᵀ·φ_k`; position-independent fields contribute nothing.
    pub fn add_jacobian_adjoint_apply(&self, phi: &[f64], dim: usize, out: &mut [f64]) {
        if let ExternalField::LinearFlow { c } = self {
            apply_per_point(c, phi, dim, out, true);
        }
    }

    pub fn jacobian_adjoint_apply(&self, phi: &[f64], dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; phi.len()];
        self.add_jacobian_adjoint_apply(phi, dim, &mut out);
        out
    }
}

fn apply_per_point(c: &[Vec<f64>], v: &[f64], dim: usize, out: &mut [f64], transpose: bool) {
    for (vp, op) in v.chunks_exact(dim).zip(out.chunks_exact_mut(dim)) {
        for i in 0..dim {
            let mut acc = 0.0;
            for j in 0..dim {
                acc += if transpose { c[j][i] } else { c[i][j] } * vp[j];
            }
            op[i] += acc;
        }
    }
}
