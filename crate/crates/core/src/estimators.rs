//! Adjoint-weighted error components on each forward interval.
//!
//! With `R[X] = Ẋ − F(X)`, stage extrapolants `P_ℓX`, `G = Σ_ℓ b_ℓ F(P_ℓX)` and
//! `πz` the `L²` projection of `z` onto degree `q − 1` per interval:
//!
//! ```text
//! E_R  = ⟨Ẋ − G, z − πz⟩
//! E_E  = ⟨G − F(X), z⟩
//! E_Q  = Σ_ℓ b_ℓ ⟨F(P_ℓX), πz⟩_{d_ℓ} − ⟨G, πz⟩
//! E_Re = ⟨S_ε[X] − S_0[X], z⟩
//! ```
//!
//! `E_R + E_E + E_Q = ⟨R[X], z⟩` holds to rounding because the neFEM equations
//! make `⟨Ẋ, πz⟩` equal the discrete stage pairing. The error in the target
//! pairing is `(e(T), z(T)) ≈ −(E_R + E_E + E_Q [+ E_Re])`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adjoint::AdjointTrajectory;
use crate::dynamics::{MrsSystem, OdeRhs};
use crate::error::{MrsError, Result};
use crate::integrate::{ForwardTrajectory, PiecewisePolynomial};
use crate::quadrature::{shifted_legendre, GaussLegendre};
use crate::vecops::{dot, norm};

pub const DEFAULT_QUAD_NODES: usize = 5;

/// Which problem the estimate is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateMode {
    /// The regularized ODE is the reference; `E_Re` is not part of the total.
    #[default]
    RegularizedExact,
    /// The singular-kernel ODE is the reference; `E_Re` is added.
    SingularTarget,
}

impl EstimateMode {
    pub fn name(self) -> &'static str {
        match self {
            EstimateMode::RegularizedExact => "regularized-exact",
            EstimateMode::SingularTarget => "singular-target",
        }
    }
}

/// `out = S_ε[x] − S_0[x]`.
pub trait RegularizationGap: Sync {
    fn gap(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()>;
}

impl RegularizationGap for MrsSystem {
    fn gap(&self, _t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(&self.regularization_difference(x)?);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    pub mode: EstimateMode,
    pub quad_nodes: usize,
    /// neFEM degree `q`; `πz` has degree `q − 1`.
    pub degree: usize,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            mode: EstimateMode::RegularizedExact,
            quad_nodes: DEFAULT_QUAD_NODES,
            degree: 2,
        }
    }
}

/// Signed component values on one interval, or their running sums.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Components {
    pub residual: f64,
    pub explicit: f64,
    pub quadrature: f64,
    pub regularization: f64,
    /// `⟨R[X], z⟩` quadratured directly.
    pub direct: f64,
}

impl std::ops::Add for Components {
    type Output = Components;
    fn add(self, o: Components) -> Components {
        Components {
            residual: self.residual + o.residual,
            explicit: self.explicit + o.explicit,
            quadrature: self.quadrature + o.quadrature,
            regularization: self.regularization + o.regularization,
            direct: self.direct + o.direct,
        }
    }
}

impl Components {
    /// `E_R + E_E + E_Q`.
    pub fn discretization(&self) -> f64 {
        self.residual + self.explicit + self.quadrature
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBreakdown {
    pub times: Vec<f64>,
    pub intervals: Vec<Components>,
    /// `cumulative[n] = Σ_{m ≤ n} intervals[m]`.
    pub cumulative: Vec<Components>,
    /// `‖z(t_n)‖` at every forward node.
    pub z_norms: Vec<f64>,
    pub options: EstimateOptions,
}

impl ErrorBreakdown {
    pub fn totals(&self) -> Components {
        self.cumulative.last().copied().unwrap_or_default()
    }

    /// Estimate of `(e(T), z(T))` for the mode's reference problem.
    pub fn total_estimate(&self) -> f64 {
        let t = self.totals();
        match self.options.mode {
            EstimateMode::RegularizedExact => -t.discretization(),
            EstimateMode::SingularTarget => -(t.discretization() + t.regularization),
        }
    }
}

/// `estimate / true_pairing`, or `None` when the true pairing is too small to divide by.
pub fn effectivity(estimate: f64, true_pairing: f64) -> Option<f64> {
    const TINY: f64 = 1e-14;
    (true_pairing.is_finite() && estimate.is_finite() && true_pairing.abs() > TINY)
        .then(|| estimate / true_pairing)
}

/// `(x̃(T) − X(T), z(T))`.
pub fn true_pairing(reference: &[f64], computed: &[f64], z_terminal: &[f64]) -> f64 {
    reference
        .iter()
        .zip(computed)
        .zip(z_terminal)
        .map(|((r, x), z)| (r - x) * z)
        .sum()
}

/// Breakpoints of `z` inside `[a, b]`, endpoints included.
fn sub_breakpoints(z: &PiecewisePolynomial, a: f64, b: f64) -> Vec<f64> {
    let tol = 1e-12 * (b - a);
    let mut pts = vec![a];
    pts.extend(
        z.times()
            .iter()
            .copied()
            .filter(|&t| t > a + tol && t < b - tol),
    );
    pts.push(b);
    pts
}

/// Legendre coefficients of the `L²(a, b)` projection of `z` onto degree `deg`.
///
/// Integrals are split at the breakpoints of `z`, so the result is exact when
/// `z` is piecewise polynomial of degree `≤ 2·rule.len() − 1 − deg`.
pub fn project_l2(
    z: &PiecewisePolynomial,
    a: f64,
    b: f64,
    deg: usize,
    rule: &GaussLegendre,
) -> Result<Vec<Vec<f64>>> {
    if !(b > a) {
        return Err(MrsError::InvalidArgument(format!(
            "empty projection interval [{a}, {b}]"
        )));
    }
    let len = z.len();
    let mut p = vec![vec![0.0; len]; deg + 1];
    let mut zt = vec![0.0; len];
    for w in sub_breakpoints(z, a, b).windows(2) {
        let h = w[1] - w[0];
        for (s, wt) in rule.nodes.iter().zip(&rule.weights) {
            let t = w[0] + s * h;
            let (n, th) = z.locate(t)?;
            z.eval_local_into(n, th, &mut zt);
            let leg = shifted_legendre(deg, (t - a) / (b - a));
            for m in 0..=deg {
                let f = wt * h * leg[m];
                for (pv, zv) in p[m].iter_mut().zip(&zt) {
                    *pv += f * zv;
                }
            }
        }
    }
    for (m, pm) in p.iter_mut().enumerate() {
        let scale = (2.0 * m as f64 + 1.0) / (b - a);
        pm.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(p)
}

fn eval_legendre(coeffs: &[Vec<f64>], theta: f64, out: &mut [f64]) {
    let leg = shifted_legendre(coeffs.len() - 1, theta);
    out.fill(0.0);
    for (l, c) in leg.iter().zip(coeffs) {
        for (o, v) in out.iter_mut().zip(c) {
            *o += l * v;
        }
    }
}

struct Context<'a, S> {
    sys: &'a S,
    traj: &'a ForwardTrajectory,
    x: &'a PiecewisePolynomial,
    z: &'a AdjointTrajectory,
    rule: GaussLegendre,
    opts: EstimateOptions,
}

impl<S: OdeRhs + RegularizationGap> Context<'_, S> {
    fn interval(&self, n: usize) -> Result<Components> {
        let (a, b) = (self.traj.times[n], self.traj.times[n + 1]);
        let q = self.opts.degree;
        let len = self.sys.len();
        let zr = &self.z.reconstruction;
        let proj = project_l2(zr, a, b, q - 1, &self.rule)?;

        // Σ_ℓ b_ℓ ⟨F(P_ℓX), πz⟩_{d_ℓ} = Σ_m (Σ_ℓ b_ℓ M_ℓm) · p_m
        let moments = self.traj.stage_moments(self.sys, n, q)?;
        let mut discrete = 0.0;
        for (bl, ml) in self.traj.tableau.b.iter().zip(&moments) {
            for (mm, pm) in ml.iter().zip(&proj) {
                discrete += bl * dot(mm, pm);
            }
        }

        let extrap = self.traj.stage_extrapolants(n);
        let (mut xv, mut xd, mut zv, mut pz) = (
            vec![0.0; len],
            vec![0.0; len],
            vec![0.0; len],
            vec![0.0; len],
        );
        let (mut fx, mut fp, mut g, mut y, mut gap) = (
            vec![0.0; len],
            vec![0.0; len],
            vec![0.0; len],
            vec![0.0; len],
            vec![0.0; len],
        );
        let mut out = Components::default();
        let mut gauss_q = 0.0;
        for w in sub_breakpoints(zr, a, b).windows(2) {
            let h = w[1] - w[0];
            for (s, wt) in self.rule.nodes.iter().zip(&self.rule.weights) {
                let t = w[0] + s * h;
                let wt = wt * h;
                let theta = (t - a) / (b - a);
                self.x.eval_local_into(n, theta, &mut xv);
                self.x.derivative_local_into(n, theta, &mut xd);
                let (zn, zth) = zr.locate(t)?;
                zr.eval_local_into(zn, zth, &mut zv);
                eval_legendre(&proj, theta, &mut pz);

                self.sys.eval(t, &xv, &mut fx)?;
                g.fill(0.0);
                for (bl, p) in self.traj.tableau.b.iter().zip(&extrap) {
                    p.eval_into(t, &mut y);
                    self.sys.eval(t, &y, &mut fp)?;
                    for (gv, fv) in g.iter_mut().zip(&fp) {
                        *gv += bl * fv;
                    }
                }
                for i in 0..len {
                    out.residual += wt * (xd[i] - g[i]) * (zv[i] - pz[i]);
                    out.explicit += wt * (g[i] - fx[i]) * zv[i];
                    out.direct += wt * (xd[i] - fx[i]) * zv[i];
                    gauss_q += wt * g[i] * pz[i];
                }
                if self.opts.mode == EstimateMode::SingularTarget {
                    self.sys.gap(t, &xv, &mut gap)?;
                    out.regularization += wt * dot(&gap, &zv);
                }
            }
        }
        out.quadrature = discrete - gauss_q;
        if ![
            out.residual,
            out.explicit,
            out.quadrature,
            out.regularization,
            out.direct,
        ]
        .iter()
        .all(|v| v.is_finite())
        {
            return Err(MrsError::NonFinite("error estimator"));
        }
        Ok(out)
    }
}

/// All components on every interval, with prefix sums.
///
/// `x` must be the neFEM reconstruction of `traj` at degree `opts.degree`,
/// and `z` an adjoint solved over the same partition.
pub fn estimate<S: OdeRhs + RegularizationGap>(
    sys: &S,
    traj: &ForwardTrajectory,
    x: &PiecewisePolynomial,
    z: &AdjointTrajectory,
    opts: EstimateOptions,
) -> Result<ErrorBreakdown> {
    if opts.degree == 0 {
        return Err(MrsError::config("estimate.degree", "must be at least 1"));
    }
    if x.times() != traj.times.as_slice() {
        return Err(MrsError::InvalidArgument(
            "reconstruction and trajectory partitions differ".into(),
        ));
    }
    let zt = z.reconstruction.times();
    if zt.first() != traj.times.first() || zt.last() != traj.times.last() {
        return Err(MrsError::InvalidArgument(
            "adjoint does not span the forward interval".into(),
        ));
    }
    let ctx = Context {
        sys,
        traj,
        x,
        z,
        rule: GaussLegendre::new(opts.quad_nodes)?,
        opts,
    };
    let intervals = (0..traj.num_intervals())
        .into_par_iter()
        .map(|n| ctx.interval(n))
        .collect::<Result<Vec<_>>>()?;
    let mut cumulative = Vec::with_capacity(intervals.len());
    let mut acc = Components::default();
    for c in &intervals {
        acc = acc + *c;
        cumulative.push(acc);
    }
    let z_norms = traj
        .times
        .iter()
        .map(|&t| z.eval(t).map(|v| norm(&v)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ErrorBreakdown {
        times: traj.times.clone(),
        intervals,
        cumulative,
        z_norms,
        options: opts,
    })
}

/// `E_R` per interval.
pub fn residual_error<S: OdeRhs + RegularizationGap>(
    sys: &S,
    traj: &ForwardTrajectory,
    x: &PiecewisePolynomial,
    z: &AdjointTrajectory,
    opts: EstimateOptions,
) -> Result<Vec<f64>> {
    Ok(estimate(sys, traj, x, z, opts)?
        .intervals
        .iter()
        .map(|c| c.residual)
        .collect())
}

/// `E_E` per interval.
pub fn explicit_error<S: OdeRhs + RegularizationGap>(
    sys: &S,
    traj: &ForwardTrajectory,
    x: &PiecewisePolynomial,
    z: &AdjointTrajectory,
    opts: EstimateOptions,
) -> Result<Vec<f64>> {
    Ok(estimate(sys, traj, x, z, opts)?
        .intervals
        .iter()
        .map(|c| c.explicit)
        .collect())
}

/// `E_Q` per interval.
pub fn quadrature_error<S: OdeRhs + RegularizationGap>(
    sys: &S,
    traj: &ForwardTrajectory,
    x: &PiecewisePolynomial,
    z: &AdjointTrajectory,
    opts: EstimateOptions,
) -> Result<Vec<f64>> {
    Ok(estimate(sys, traj, x, z, opts)?
        .intervals
        .iter()
        .map(|c| c.quadrature)
        .collect())
}

/// `E_Re` per interval; always computed, whatever `opts.mode` says.
pub fn regularization_error<S: OdeRhs + RegularizationGap>(
    sys: &S,
    traj: &ForwardTrajectory,
    x: &PiecewisePolynomial,
    z: &AdjointTrajectory,
    opts: EstimateOptions,
) -> Result<Vec<f64>> {
    let opts = EstimateOptions {
        mode: EstimateMode::SingularTarget,
        ..opts
    };
    Ok(estimate(sys, traj, x, z, opts)?
        .intervals
        .iter()
        .map(|c| c.regularization)
        .collect())
}
