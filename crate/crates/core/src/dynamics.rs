//! The MRS right-hand side and its linearizations.
//!
//! ```text
//! S_ε[x]_k = Σ_j U_ε(x_k − x_j) F_j[x] Δα_j(x)   (+ C·x_k for a background flow)
//! ```
//!
//! `frechet_apply` is the exact directional derivative of this map, including
//! the variation of arclength weights on closed curves. `adjoint_apply` is its
//! transpose in the flat Euclidean inner product.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MrsError, Result};
use crate::forces::{ExternalField, SpringNetwork, Tether};
use crate::kernels::{
    stokeslet_regularized, stokeslet_regularized_gradient, stokeslet_singular, Dim, KernelParams,
    Mat3,
};

/// A Lagrangian configuration at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerState {
    pub dim: Dim,
    pub positions: Vec<f64>,
    pub weights: Vec<f64>,
}

impl MarkerState {
    pub fn num_points(&self) -> usize {
        self.weights.len()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        let d = self.dim.get();
        &self.positions[k * d..(k + 1) * d]
    }
}

/// How the quadrature weights `Δα_j` are obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Weights {
    /// Fixed per-point weights (particle drag coefficients, masses).
    Constant { values: Vec<f64> },
    /// Markers form a closed loop in index order; `Δα_j` is half the length
    /// of the two polygon edges meeting at `j`, re-evaluated at every call.
    ClosedCurve,
}

/// Whether the regularized sum keeps the `j = k` term. The singular sum never does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SelfTerm {
    #[default]
    Include,
    Exclude,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MrsSystem {
    pub kernel: KernelParams,
    pub network: SpringNetwork,
    pub tether: Option<Tether>,
    pub field: ExternalField,
    pub weights: Weights,
    pub self_term: SelfTerm,
}

/// Right-hand side of an autonomous-or-not ODE `ẋ = F(t, x)` on flat states.
pub trait OdeRhs: Sync {
    fn len(&self) -> usize;
    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()>;
}

impl<F> OdeRhs for (usize, F)
where
    F: Fn(f64, &[f64], &mut [f64]) -> Result<()> + Sync,
{
    fn len(&self) -> usize {
        self.0
    }
    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        (self.1)(t, x, out)
    }
}

struct CurveEdges {
    /// unit tangent of edge m = x_{m+1} − x_m
    tangent: Vec<[f64; 3]>,
}

fn curve_edges(x: &[f64], d: usize) -> Result<(Vec<f64>, CurveEdges)> {
    let n = x.len() / d;
    let mut len = vec![0.0; n];
    let mut tangent = vec![[0.0; 3]; n];
    for m in 0..n {
        let next = (m + 1) % n;
        let mut l2 = 0.0;
        for c in 0..d {
            let v = x[next * d + c] - x[m * d + c];
            tangent[m][c] = v;
            l2 += v * v;
        }
        let l = l2.sqrt();
        if l == 0.0 {
            return Err(MrsError::DegenerateGeometry {
                first: m,
                second: next,
            });
        }
        for v in tangent[m].iter_mut().take(d) {
            *v /= l;
        }
        len[m] = l;
    }
    let weights = (0..n)
        .map(|j| 0.5 * (len[j] + len[(j + n - 1) % n]))
        .collect();
    Ok((weights, CurveEdges { tangent }))
}

fn mat_vec_add(u: &Mat3, v: &[f64], scale: f64, d: usize, out: &mut [f64]) {
    for i in 0..d {
        let mut acc = 0.0;
        for j in 0..d {
            acc += u[i][j] * v[j];
        }
        out[i] += scale * acc;
    }
}

impl MrsSystem {
    pub fn dim(&self) -> usize {
        self.kernel.dim.get()
    }

    pub fn num_points(&self) -> usize {
        self.network.num_points()
    }

    pub fn state_len(&self) -> usize {
        self.num_points() * self.dim()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_points();
        if n == 0 {
            return Err(MrsError::config(
                "markers",
                "at least one marker is required",
            ));
        }
        if !(self.kernel.epsilon > 0.0) {
            return Err(MrsError::config(
                "epsilon",
                "regularized system needs epsilon > 0",
            ));
        }
        match &self.weights {
            Weights::Constant { values } => {
                if values.len() != n {
                    return Err(MrsError::config("weights", format!("expected {n} weights")));
                }
                if values.iter().any(|w| !(*w > 0.0)) {
                    return Err(MrsError::config("weights", "weights must be positive"));
                }
            }
            Weights::ClosedCurve => {
                if n < 3 {
                    return Err(MrsError::config(
                        "markers",
                        "closed curves need at least 3 markers",
                    ));
                }
            }
        }
        if let Some(t) = &self.tether {
            if t.reference.len() != self.state_len() {
                return Err(MrsError::config(
                    "tether",
                    "reference count must equal marker count",
                ));
            }
            if !(t.stiffness >= 0.0) {
                return Err(MrsError::config("tether.stiffness", "must be non-negative"));
            }
        }
        self.field.validate(self.dim())
    }

    pub fn weights_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.weights {
            Weights::Constant { values } => Ok(values.clone()),
            Weights::ClosedCurve => Ok(curve_edges(x, self.dim())?.0),
        }
    }

    pub fn marker_state(&self, x: &[f64]) -> Result<MarkerState> {
        Ok(MarkerState {
            dim: self.kernel.dim,
            positions: x.to_vec(),
            weights: self.weights_at(x)?,
        })
    }

    /// Springs, tether and body force at every point.
    pub fn forces(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        let mut f = vec![0.0; x.len()];
        self.network.add_forces(x, d, &mut f)?;
        if let Some(t) = &self.tether {
            t.add_forces(x, &mut f);
        }
        self.field.add_force(d, &mut f);
        Ok(f)
    }

    fn force_jacobian_apply(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.network
            .add_jacobian_apply(x, self.dim(), y, &mut out)?;
        if let Some(t) = &self.tether {
            t.add_jacobian_apply(y, &mut out);
        }
        Ok(out)
    }

    fn weighted(&self, f: &[f64], w: &[f64]) -> Vec<f64> {
        let d = self.dim();
        f.chunks_exact(d)
            .zip(w)
            .flat_map(|(fk, wk)| fk.iter().map(move |v| v * wk))
            .collect()
    }

    fn skip_self(&self) -> bool {
        self.self_term == SelfTerm::Exclude
    }

    /// `out_k = Σ_j U_ε(x_k − x_j) v_j`, parallel over targets, fixed order per target.
    fn kernel_sum(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let n = self.num_points();
        let skip = self.skip_self();
        out.par_chunks_mut(d).enumerate().for_each(|(k, ok)| {
            let xk = &x[k * d..(k + 1) * d];
            let mut r = [0.0; 3];
            for j in 0..n {
                if skip && j == k {
                    continue;
                }
                for c in 0..d {
                    r[c] = xk[c] - x[j * d + c];
                }
                let u = stokeslet_regularized(&r[..d], &self.kernel);
                mat_vec_add(&u, &v[j * d..(j + 1) * d], 1.0, d, ok);
            }
        });
    }

    /// `ẋ_k = Σ_j U_ε(x_k − x_j) F_j Δα_j + u(x_k)`.
    pub fn rhs_regularized(&self, _t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.dim();
        let w = self.weights_at(x)?;
        let ft = self.weighted(&self.forces(x)?, &w);
        out.fill(0.0);
        self.kernel_sum(x, &ft, out);
        self.field.add_velocity(x, d, out);
        Ok(())
    }

    /// Singular counterpart with the `j = k` term dropped.
    pub fn rhs_singular(&self, _t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.dim();
        let n = self.num_points();
        let w = self.weights_at(x)?;
        let ft = self.weighted(&self.forces(x)?, &w);
        let results: Vec<Result<()>> = out
            .par_chunks_mut(d)
            .enumerate()
            .map(|(k, ok)| {
                ok.fill(0.0);
                let mut r = [0.0; 3];
                for j in 0..n {
                    if j == k {
                        continue;
                    }
                    for c in 0..d {
                        r[c] = x[k * d + c] - x[j * d + c];
                    }
                    let u = stokeslet_singular(&r[..d], self.kernel.dim).map_err(|_| {
                        MrsError::DegenerateGeometry {
                            first: k,
                            second: j,
                        }
                    })?;
                    mat_vec_add(&u, &ft[j * d..(j + 1) * d], 1.0, d, ok);
                }
                Ok(())
            })
            .collect();
        results.into_iter().collect::<Result<()>>()?;
        self.field.add_velocity(x, d, out);
        Ok(())
    }

    /// `S_ε[x] − S_0[x]` per point (background flow cancels).
    pub fn regularization_difference(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        let n = self.num_points();
        let w = self.weights_at(x)?;
        let ft = self.weighted(&self.forces(x)?, &w);
        let include_self = !self.skip_self();
        let mut out = vec![0.0; x.len()];
        let results: Vec<Result<()>> = out
            .par_chunks_mut(d)
            .enumerate()
            .map(|(k, ok)| {
                let mut r = [0.0; 3];
                for j in 0..n {
                    let fj = &ft[j * d..(j + 1) * d];
                    if j == k {
                        if include_self {
                            let u = stokeslet_regularized(&[0.0; 3][..d], &self.kernel);
                            mat_vec_add(&u, fj, 1.0, d, ok);
                        }
                        continue;
                    }
                    for c in 0..d {
                        r[c] = x[k * d + c] - x[j * d + c];
                    }
                    let ue = stokeslet_regularized(&r[..d], &self.kernel);
                    let u0 = stokeslet_singular(&r[..d], self.kernel.dim).map_err(|_| {
                        MrsError::DegenerateGeometry {
                            first: k,
                            second: j,
                        }
                    })?;
                    let mut diff = [[0.0; 3]; 3];
                    for a in 0..d {
                        for b in 0..d {
                            diff[a][b] = ue[a][b] - u0[a][b];
                        }
                    }
                    mat_vec_add(&diff, fj, 1.0, d, ok);
                }
                Ok(())
            })
            .collect();
        results.into_iter().collect::<Result<()>>()?;
        Ok(out)
    }

    /// Directional derivative `DF(t, x)·y` of `rhs_regularized`.
    pub fn frechet_apply(&self, _t: f64, x: &[f64], y: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.dim();
        let n = self.num_points();
        let skip = self.skip_self();
        let forces = self.forces(x)?;
        let (w, curve) = match &self.weights {
            Weights::Constant { values } => (values.clone(), None),
            Weights::ClosedCurve => {
                let (w, e) = curve_edges(x, d)?;
                (w, Some(e))
            }
        };
        let ft = self.weighted(&forces, &w);
        let dfy = self.force_jacobian_apply(x, y)?;
        // v_j = (DF y)_j Δα_j + F_j dΔα_j(y)
        let mut v = self.weighted(&dfy, &w);
        if let Some(e) = &curve {
            for j in 0..n {
                let prev = (j + n - 1) % n;
                let next = (j + 1) % n;
                let mut dw = 0.0;
                for c in 0..d {
                    dw += 0.5 * e.tangent[j][c] * (y[next * d + c] - y[j * d + c]);
                    dw += 0.5 * e.tangent[prev][c] * (y[j * d + c] - y[prev * d + c]);
                }
                for c in 0..d {
                    v[j * d + c] += forces[j * d + c] * dw;
                }
            }
        }
        out.par_chunks_mut(d).enumerate().for_each(|(k, ok)| {
            ok.fill(0.0);
            let mut r = [0.0; 3];
            for j in 0..n {
                if skip && j == k {
                    continue;
                }
                for c in 0..d {
                    r[c] = x[k * d + c] - x[j * d + c];
                }
                let u = stokeslet_regularized(&r[..d], &self.kernel);
                mat_vec_add(&u, &v[j * d..(j + 1) * d], 1.0, d, ok);
                if j == k {
                    continue;
                }
                let g = stokeslet_regularized_gradient(&r[..d], &self.kernel);
                for i in 0..d {
                    let mut acc = 0.0;
                    for m in 0..d {
                        let fm = ft[j * d + m];
                        for l in 0..d {
                            acc += g[i][m][l] * fm * (y[k * d + l] - y[j * d + l]);
                        }
                    }
                    ok[i] += acc;
                }
            }
        });
        self.field.add_jacobian_apply(y, d, out);
        Ok(())
    }

    /// Transpose of `frechet_apply`: `⟨DF y, φ⟩ = ⟨y, DF* φ⟩`.
    pub fn adjoint_apply(&self, _t: f64, x: &[f64], phi: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.dim();
        let n = self.num_points();
        let forces = self.forces(x)?;
        let (w, curve) = match &self.weights {
            Weights::Constant { values } => (values.clone(), None),
            Weights::ClosedCurve => {
                let (w, e) = curve_edges(x, d)?;
                (w, Some(e))
            }
        };
        let ft = self.weighted(&forces, &w);

        // w_j = Σ_k U(x_j − x_k) φ_k
        let mut kphi = vec![0.0; x.len()];
        self.kernel_sum(x, phi, &mut kphi);

        // kernel-gradient part
        out.par_chunks_mut(d).enumerate().for_each(|(k, ok)| {
            ok.fill(0.0);
            let mut r = [0.0; 3];
            for j in 0..n {
                if j == k {
                    continue;
                }
                for c in 0..d {
                    r[c] = x[k * d + c] - x[j * d + c];
                }
                let g = stokeslet_regularized_gradient(&r[..d], &self.kernel);
                for l in 0..d {
                    let mut acc = 0.0;
                    for i in 0..d {
                        for m in 0..d {
                            acc += g[i][m][l]
                                * (phi[k * d + i] * ft[j * d + m] + phi[j * d + i] * ft[k * d + m]);
                        }
                    }
                    ok[l] += acc;
                }
            }
        });

        // force-Jacobian part, DF symmetric
        let weighted_kphi = self.weighted(&kphi, &w);
        let dft = self.force_jacobian_apply(x, &weighted_kphi)?;
        for (o, v) in out.iter_mut().zip(&dft) {
            *o += v;
        }

        // arclength-weight part
        if let Some(e) = &curve {
            let s: Vec<f64> = (0..n)
                .map(|j| (0..d).map(|c| forces[j * d + c] * kphi[j * d + c]).sum())
                .collect();
            for m in 0..n {
                let next = (m + 1) % n;
                let cm = 0.5 * (s[m] + s[next]);
                for c in 0..d {
                    out[next * d + c] += cm * e.tangent[m][c];
                    out[m * d + c] -= cm * e.tangent[m][c];
                }
            }
        }
        self.field.add_jacobian_adjoint_apply(phi, d, out);
        Ok(())
    }

    pub fn adjoint(&self, t: f64, x: &[f64], phi: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.adjoint_apply(t, x, phi, &mut out)?;
        Ok(out)
    }

    pub fn frechet(&self, t: f64, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.frechet_apply(t, x, y, &mut out)?;
        Ok(out)
    }
}

impl OdeRhs for MrsSystem {
    fn len(&self) -> usize {
        self.state_len()
    }
    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.rhs_regularized(t, x, out)
    }
}

/// The same system driven by the singular kernel.
pub struct SingularRhs<'a>(pub &'a MrsSystem);

impl OdeRhs for SingularRhs<'_> {
    fn len(&self) -> usize {
        self.0.state_len()
    }
    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.0.rhs_singular(t, x, out)
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::forces::Spring;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random well-separated system with springs, optional tether and field.
    pub fn random_system(
        seed: u64,
        dim: Dim,
        n: usize,
        with_field: bool,
        closed_curve: bool,
    ) -> (MrsSystem, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = dim.get();
        let x: Vec<f64> = if closed_curve {
            (0..n)
                .flat_map(|k| {
                    let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                    let rad = 1.0 + 0.2 * rng.random_range(-1.0..1.0);
                    let mut p = vec![rad * th.cos(), rad * th.sin()];
                    if d == 3 {
                        p.push(0.1 * rng.random_range(-1.0..1.0));
                    }
                    p
                })
                .collect()
        } else {
            (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()
        };
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let near = closed_curve && (j == i + 1 || (i == 0 && j == n - 1));
                if near || (!closed_curve && rng.random_bool(0.3)) {
                    edges.push(Spring {
                        i,
                        j,
                        stiffness: rng.random_range(0.5..2.0),
                        rest_length: rng.random_range(0.2..1.2),
                    });
                }
            }
        }
        let field = if with_field {
            if rng.random_bool(0.5) {
                ExternalField::LinearFlow {
                    c: (0..d)
                        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
                        .collect(),
                }
            } else {
                ExternalField::Gravity {
                    g: (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
                }
            }
        } else {
            ExternalField::None
        };
        let tether = rng.random_bool(0.5).then(|| Tether {
            reference: x
                .iter()
                .map(|v| v + 0.1 * rng.random_range(-1.0..1.0))
                .collect(),
            stiffness: rng.random_range(0.0..1.0),
        });
        let weights = if closed_curve {
            Weights::ClosedCurve
        } else {
            Weights::Constant {
                values: (0..n).map(|_| rng.random_range(0.5..1.5)).collect(),
            }
        };
        let sys = MrsSystem {
            kernel: KernelParams::new(dim, rng.random_range(0.05..0.4)).unwrap(),
            network: SpringNetwork::new(n, edges).unwrap(),
            tether,
            field,
            weights,
            self_term: SelfTerm::Include,
        };
        sys.validate().unwrap();
        (sys, x)
    }
}
