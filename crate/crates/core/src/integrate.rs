//! Explicit Runge–Kutta forward solves with stage capture, and the nodally
//! equivalent finite element (neFEM) reconstruction of the discrete solution.
//!
//! On an interval `I_n = [t_n, t_{n+1}]` with `θ = (t − t_n)/Δt`, the
//! reconstruction `X` of degree `q` satisfies `X(t_n) = X_n` and
//!
//! ```text
//! ∫ Ẋ P̃_m dt = Σ_ℓ b_ℓ ⟨F(·, P_ℓX), P̃_m⟩_{d_ℓ}      m = 0 … q−1
//! ```
//!
//! where `d_ℓ` is the one-point rule at `t_n + c_ℓΔt` (weight `Δt`) for
//! `m = 0` and the midpoint rule for `m ≥ 1`. The `m = 0` equation is the RK
//! update, so `X(t_{n+1}) = X_{n+1}`.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::OdeRhs;
use crate::error::{MrsError, Result};
use crate::quadrature::{shifted_legendre, shifted_legendre_derivative};
use crate::vecops::all_finite;

const TABLEAU_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Heun,
    Rk4,
    Rk6,
}

impl Method {
    pub fn tableau(self) -> ButcherTableau {
        match self {
            Method::Heun => ButcherTableau::heun(),
            Method::Rk4 => ButcherTableau::rk4(),
            Method::Rk6 => ButcherTableau::rk6(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Heun => "heun",
            Method::Rk4 => "rk4",
            Method::Rk6 => "rk6",
        }
    }
}

/// Explicit Butcher tableau. `a` is stored as a full `L × L` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ButcherTableau {
    #[serde(default)]
    pub name: String,
    pub stages: usize,
    pub order: usize,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl ButcherTableau {
    pub fn heun() -> Self {
        ButcherTableau {
            name: "heun".into(),
            stages: 2,
            order: 2,
            a: vec![vec![0.0, 0.0], vec![1.0, 0.0]],
            b: vec![0.5, 0.5],
            c: vec![0.0, 1.0],
        }
    }

    pub fn rk4() -> Self {
        ButcherTableau {
            name: "rk4".into(),
            stages: 4,
            order: 4,
            a: vec![
                vec![0.0, 0.0, 0.0, 0.0],
                vec![0.5, 0.0, 0.0, 0.0],
                vec![0.0, 0.5, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0],
            ],
            b: vec![1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
            c: vec![0.0, 0.5, 0.5, 1.0],
        }
    }

    /// Butcher's seven-stage sixth-order method.
    pub fn rk6() -> Self {
        let z = 0.0;
        ButcherTableau {
            name: "rk6".into(),
            stages: 7,
            order: 6,
            a: vec![
                vec![z, z, z, z, z, z, z],
                vec![1.0 / 3.0, z, z, z, z, z, z],
                vec![z, 2.0 / 3.0, z, z, z, z, z],
                vec![1.0 / 12.0, 1.0 / 3.0, -1.0 / 12.0, z, z, z, z],
                vec![-1.0 / 16.0, 9.0 / 8.0, -3.0 / 16.0, -3.0 / 8.0, z, z, z],
                vec![z, 9.0 / 8.0, -3.0 / 8.0, -3.0 / 4.0, 1.0 / 2.0, z, z],
                vec![
                    9.0 / 44.0,
                    -9.0 / 11.0,
                    63.0 / 44.0,
                    18.0 / 11.0,
                    z,
                    -16.0 / 11.0,
                    z,
                ],
            ],
            b: vec![
                11.0 / 120.0,
                z,
                27.0 / 40.0,
                27.0 / 40.0,
                -4.0 / 15.0,
                -4.0 / 15.0,
                11.0 / 120.0,
            ],
            c: vec![
                z,
                1.0 / 3.0,
                2.0 / 3.0,
                1.0 / 3.0,
                1.0 / 2.0,
                1.0 / 2.0,
                1.0,
            ],
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let tab: ButcherTableau =
            toml::from_str(text).map_err(|e| MrsError::config("tableau", e.to_string()))?;
        tab.validate()?;
        Ok(tab)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| MrsError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            MrsError::Config { message, .. } => {
                MrsError::config(path.display().to_string(), message)
            }
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.stages;
        let bad = |field: &str, msg: String| Err(MrsError::config(format!("tableau.{field}"), msg));
        if l == 0 {
            return bad("stages", "must be positive".into());
        }
        if self.b.len() != l || self.c.len() != l || self.a.len() != l {
            return bad("stages", format!("a, b, c must all have {l} entries"));
        }
        for (i, row) in self.a.iter().enumerate() {
            if row.len() != l {
                return bad(
                    "a",
                    format!("row {i} has {} entries, expected {l}", row.len()),
                );
            }
            if row[i..].iter().any(|v| *v != 0.0) {
                return bad("a", format!("row {i} is not strictly lower triangular"));
            }
            let s: f64 = row.iter().sum();
            if (s - self.c[i]).abs() > TABLEAU_TOL {
                return bad("c", format!("c[{i}] = {} but row sum is {s}", self.c[i]));
            }
        }
        let sb: f64 = self.b.iter().sum();
        if (sb - 1.0).abs() > TABLEAU_TOL {
            return bad("b", format!("weights sum to {sb}"));
        }
        if self.order == 0 {
            return bad("order", "must be positive".into());
        }
        if !self
            .a
            .iter()
            .flatten()
            .chain(&self.b)
            .chain(&self.c)
            .all(|v| v.is_finite())
        {
            return bad("a", "non-finite coefficient".into());
        }
        Ok(())
    }
}

/// One explicit RK step. Returns `X_{n+1}` and the stage slopes `k_1 … k_L`.
pub fn rk_step(
    tab: &ButcherTableau,
    rhs: &impl OdeRhs,
    t: f64,
    x: &[f64],
    dt: f64,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if dt.is_nan() || dt <= 0.0 {
        return Err(MrsError::InvalidArgument(format!(
            "step size must be positive, got {dt}"
        )));
    }
    let m = x.len();
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(tab.stages);
    let mut y = vec![0.0; m];
    for l in 0..tab.stages {
        y.copy_from_slice(x);
        for (j, kj) in k.iter().enumerate() {
            let a = tab.a[l][j];
            if a != 0.0 {
                for (yv, kv) in y.iter_mut().zip(kj) {
                    *yv += dt * a * kv;
                }
            }
        }
        let mut kl = vec![0.0; m];
        rhs.eval(t + tab.c[l] * dt, &y, &mut kl)?;
        if !all_finite(&kl) {
            return Err(MrsError::NonFinite("runge-kutta stage"));
        }
        k.push(kl);
    }
    let mut next = x.to_vec();
    for (bl, kl) in tab.b.iter().zip(&k) {
        if *bl != 0.0 {
            for (nv, kv) in next.iter_mut().zip(kl) {
                *nv += dt * bl * kv;
            }
        }
    }
    Ok((next, k))
}

/// Nodal values and every stage slope of an RK solve.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrajectory {
    pub tableau: ButcherTableau,
    pub times: Vec<f64>,
    pub nodes: Vec<Vec<f64>>,
    /// `stages[n][ℓ]` is `k_ℓ` on interval `n`.
    pub stages: Vec<Vec<Vec<f64>>>,
}

/// Uniform partition of `[t0, t_end]` with step `dt`; `dt` must divide the span.
pub fn uniform_partition(t0: f64, t_end: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(MrsError::InvalidArgument(format!(
            "step size must be positive, got {dt}"
        )));
    }
    let span = t_end - t0;
    if span.is_nan() || span < 0.0 {
        return Err(MrsError::InvalidArgument(format!(
            "empty time span [{t0}, {t_end}]"
        )));
    }
    let steps = (span / dt).round();
    if (steps * dt - span).abs() > 1e-9 * span.max(dt) {
        return Err(MrsError::InvalidArgument(format!(
            "step {dt} does not divide span {span}"
        )));
    }
    let steps = steps as usize;
    let mut times: Vec<f64> = (0..=steps).map(|k| t0 + k as f64 * dt).collect();
    times[steps] = t0 + span;
    Ok(times)
}

pub fn solve_forward(
    tab: &ButcherTableau,
    rhs: &impl OdeRhs,
    x0: &[f64],
    t0: f64,
    t_end: f64,
    dt: f64,
) -> Result<ForwardTrajectory> {
    solve_forward_on(tab, rhs, x0, uniform_partition(t0, t_end, dt)?)
}

/// Solve on an arbitrary increasing partition.
pub fn solve_forward_on(
    tab: &ButcherTableau,
    rhs: &impl OdeRhs,
    x0: &[f64],
    times: Vec<f64>,
) -> Result<ForwardTrajectory> {
    tab.validate()?;
    if x0.len() != rhs.len() {
        return Err(MrsError::InvalidArgument(format!(
            "initial state has {} entries, system expects {}",
            x0.len(),
            rhs.len()
        )));
    }
    if times.is_empty() || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(MrsError::InvalidArgument(
            "partition must be strictly increasing".into(),
        ));
    }
    let mut nodes = Vec::with_capacity(times.len());
    let mut stages = Vec::with_capacity(times.len() - 1);
    nodes.push(x0.to_vec());
    for w in times.windows(2) {
        let (next, k) = rk_step(tab, rhs, w[0], nodes.last().unwrap(), w[1] - w[0])?;
        nodes.push(next);
        stages.push(k);
    }
    Ok(ForwardTrajectory {
        tableau: tab.clone(),
        times,
        nodes,
        stages,
    })
}

/// Affine map `t ↦ origin + (t − t0)·slope`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub t0: f64,
    pub origin: Vec<f64>,
    pub slope: Vec<f64>,
}

impl Affine {
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.origin.len()];
        self.eval_into(t, &mut out);
        out
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let s = t - self.t0;
        for ((o, x), v) in out.iter_mut().zip(&self.origin).zip(&self.slope) {
            *o = x + s * v;
        }
    }
}

impl ForwardTrajectory {
    pub fn num_intervals(&self) -> usize {
        self.stages.len()
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn final_state(&self) -> &[f64] {
        self.nodes.last().unwrap()
    }

    pub fn step(&self, n: usize) -> f64 {
        self.times[n + 1] - self.times[n]
    }

    /// Stage extrapolant `P_ℓ` on interval `n` (`ℓ` zero-based).
    ///
    /// `P_ℓ(t_n + c_ℓΔt)` is exactly the argument at which stage `ℓ` was
    /// evaluated: the slope is `Σ_j a_ℓj k_j / c_ℓ`, or `k_ℓ` when `c_ℓ = 0`.
    pub fn stage_extrapolant(&self, n: usize, l: usize) -> Affine {
        let tab = &self.tableau;
        let k = &self.stages[n];
        let slope = if tab.c[l] == 0.0 {
            k[l].clone()
        } else {
            let mut s = vec![0.0; k[0].len()];
            for (j, kj) in k.iter().enumerate().take(l) {
                let a = tab.a[l][j] / tab.c[l];
                if a != 0.0 {
                    for (sv, kv) in s.iter_mut().zip(kj) {
                        *sv += a * kv;
                    }
                }
            }
            s
        };
        Affine {
            t0: self.times[n],
            origin: self.nodes[n].clone(),
            slope,
        }
    }

    pub fn stage_extrapolants(&self, n: usize) -> Vec<Affine> {
        (0..self.tableau.stages)
            .map(|l| self.stage_extrapolant(n, l))
            .collect()
    }

    /// `M[ℓ][m] = ⟨F(·, P_ℓX), P̃_m⟩_{d_ℓ}` on interval `n` for `m < q`.
    pub fn stage_moments(
        &self,
        rhs: &impl OdeRhs,
        n: usize,
        q: usize,
    ) -> Result<Vec<Vec<Vec<f64>>>> {
        let dt = self.step(n);
        let mid = self.times[n] + 0.5 * dt;
        let weights = shifted_legendre(q.saturating_sub(1), 0.5);
        let mut out = Vec::with_capacity(self.tableau.stages);
        for l in 0..self.tableau.stages {
            let mut row = Vec::with_capacity(q);
            row.push(
                self.stages[n][l]
                    .iter()
                    .map(|v| dt * v)
                    .collect::<Vec<f64>>(),
            );
            let mut f_mid: Option<Vec<f64>> = None;
            for &w in weights.iter().take(q).skip(1) {
                if w == 0.0 {
                    row.push(vec![0.0; rhs.len()]);
                    continue;
                }
                if f_mid.is_none() {
                    let y = self.stage_extrapolant(n, l).eval(mid);
                    let mut f = vec![0.0; rhs.len()];
                    rhs.eval(mid, &y, &mut f)?;
                    f_mid = Some(f);
                }
                row.push(f_mid.as_ref().unwrap().iter().map(|v| dt * w * v).collect());
            }
            out.push(row);
        }
        Ok(out)
    }
}

/// Continuous piecewise polynomial in shifted Legendre form on each interval.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewisePolynomial {
    times: Vec<f64>,
    /// `coeffs[n][m][i]`: coefficient of `P̃_m` for component `i` on interval `n`.
    coeffs: Vec<Vec<Vec<f64>>>,
    len: usize,
}

impl PiecewisePolynomial {
    pub fn from_coeffs(times: Vec<f64>, coeffs: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if times.len() < 2 || coeffs.len() + 1 != times.len() {
            return Err(MrsError::Reconstruction(format!(
                "{} breakpoints for {} intervals",
                times.len(),
                coeffs.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(MrsError::Reconstruction("breakpoints must increase".into()));
        }
        let len = coeffs[0].first().map_or(0, |c| c.len());
        if coeffs
            .iter()
            .any(|c| c.is_empty() || c.iter().any(|v| v.len() != len))
        {
            return Err(MrsError::Reconstruction("ragged coefficient array".into()));
        }
        if !coeffs.iter().flatten().all(|v| all_finite(v)) {
            return Err(MrsError::NonFinite("reconstruction"));
        }
        Ok(PiecewisePolynomial { times, coeffs, len })
    }

    /// Cubic Hermite interpolant of nodal values and time derivatives.
    pub fn hermite(times: Vec<f64>, values: &[Vec<f64>], derivs: &[Vec<f64>]) -> Result<Self> {
        if values.len() != times.len() || derivs.len() != times.len() {
            return Err(MrsError::Reconstruction(
                "hermite data does not match breakpoints".into(),
            ));
        }
        let coeffs = times
            .windows(2)
            .enumerate()
            .map(|(n, w)| {
                let h = w[1] - w[0];
                let (z0, z1, d0, d1) = (&values[n], &values[n + 1], &derivs[n], &derivs[n + 1]);
                let mut c = vec![vec![0.0; z0.len()]; 4];
                for i in 0..z0.len() {
                    // monomial coefficients in θ
                    let a0 = z0[i];
                    let a1 = h * d0[i];
                    let a2 = -3.0 * z0[i] - 2.0 * h * d0[i] + 3.0 * z1[i] - h * d1[i];
                    let a3 = 2.0 * z0[i] + h * d0[i] - 2.0 * z1[i] + h * d1[i];
                    c[0][i] = a0 + a1 / 2.0 + a2 / 3.0 + a3 / 4.0;
                    c[1][i] = a1 / 2.0 + a2 / 2.0 + 9.0 * a3 / 20.0;
                    c[2][i] = a2 / 6.0 + a3 / 4.0;
                    c[3][i] = a3 / 20.0;
                }
                c
            })
            .collect();
        Self::from_coeffs(times, coeffs)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn coeffs(&self, n: usize) -> &[Vec<f64>] {
        &self.coeffs[n]
    }

    pub fn num_intervals(&self) -> usize {
        self.coeffs.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn degree(&self, n: usize) -> usize {
        self.coeffs[n].len() - 1
    }

    /// Interval containing `t`, right-continuous at interior breakpoints.
    pub fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let (a, b) = (self.times[0], *self.times.last().unwrap());
        let slack = 1e-12 * (b - a);
        if !(t >= a - slack && t <= b + slack) {
            return Err(MrsError::InvalidArgument(format!(
                "t = {t} outside [{a}, {b}]"
            )));
        }
        let n = self
            .times
            .partition_point(|&s| s <= t)
            .saturating_sub(1)
            .min(self.num_intervals() - 1);
        let theta = (t - self.times[n]) / (self.times[n + 1] - self.times[n]);
        Ok((n, theta))
    }

    pub fn eval_local_into(&self, n: usize, theta: f64, out: &mut [f64]) {
        let c = &self.coeffs[n];
        let p = shifted_legendre(c.len() - 1, theta);
        out.fill(0.0);
        for (pm, cm) in p.iter().zip(c) {
            for (o, v) in out.iter_mut().zip(cm) {
                *o += pm * v;
            }
        }
    }

    /// Time derivative on interval `n`.
    pub fn derivative_local_into(&self, n: usize, theta: f64, out: &mut [f64]) {
        let c = &self.coeffs[n];
        let h = self.times[n + 1] - self.times[n];
        let dp = shifted_legendre_derivative(c.len() - 1, theta);
        out.fill(0.0);
        for (pm, cm) in dp.iter().zip(c) {
            for (o, v) in out.iter_mut().zip(cm) {
                *o += pm / h * v;
            }
        }
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let (n, theta) = self.locate(t)?;
        let mut out = vec![0.0; self.len];
        self.eval_local_into(n, theta, &mut out);
        Ok(out)
    }

    pub fn derivative(&self, t: f64) -> Result<Vec<f64>> {
        let (n, theta) = self.locate(t)?;
        let mut out = vec![0.0; self.len];
        self.derivative_local_into(n, theta, &mut out);
        Ok(out)
    }
}

/// neFEM reconstruction of degree `q ≥ 1`.
pub fn nefem_reconstruct(
    traj: &ForwardTrajectory,
    rhs: &impl OdeRhs,
    q: usize,
) -> Result<PiecewisePolynomial> {
    if q == 0 {
        return Err(MrsError::Reconstruction("degree must be at least 1".into()));
    }
    if traj.num_intervals() == 0 {
        return Err(MrsError::Reconstruction(
            "trajectory has no intervals".into(),
        ));
    }
    let b = &traj.tableau.b;
    let coeffs = (0..traj.num_intervals())
        .into_par_iter()
        .map(|n| {
            let moments = traj.stage_moments(rhs, n, q)?;
            let m_len = traj.nodes[n].len();
            let mut c = vec![vec![0.0; m_len]; q + 1];
            c[0].copy_from_slice(&traj.nodes[n]);
            for m in 0..q {
                // Δt·d_m, where Ẋ = Σ d_m P̃_m
                let scale = 2.0 * m as f64 + 1.0;
                let mut dm = vec![0.0; m_len];
                for (bl, ml) in b.iter().zip(&moments) {
                    for (d, v) in dm.iter_mut().zip(&ml[m]) {
                        *d += scale * bl * v;
                    }
                }
                // Δt ∫_0^θ P̃_m
                if m == 0 {
                    for i in 0..m_len {
                        c[0][i] += 0.5 * dm[i];
                        c[1][i] += 0.5 * dm[i];
                    }
                } else {
                    let f = 0.5 / scale;
                    for i in 0..m_len {
                        c[m + 1][i] += f * dm[i];
                        c[m - 1][i] -= f * dm[i];
                    }
                }
            }
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    PiecewisePolynomial::from_coeffs(traj.times.clone(), coeffs)
}
