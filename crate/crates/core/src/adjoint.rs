//! Backward adjoint solve `−ż − A*(t) z = 0` from randomized terminal data.
//!
//! Integration runs in reversed time `τ = T − t`, where `dz/dτ = A*(T − τ) z`,
//! with the sixth-order tableau. `A*(t)` is the transpose of the Fréchet
//! derivative evaluated on the forward reconstruction `X(t)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dynamics::{MrsSystem, OdeRhs};
use crate::error::{MrsError, Result};
use crate::integrate::{rk_step, ButcherTableau, PiecewisePolynomial};
use crate::kernels::Dim;
use crate::vecops::{all_finite, norm};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TerminalCondition {
    RandomUnit {
        seed: u64,
    },
    /// Stationary Gaussian field over a closed marker ring, squared-exponential
    /// covariance in arclength. Only meaningful for closed curves.
    GaussianProcess {
        seed: u64,
        correlation_length: f64,
    },
}

impl TerminalCondition {
    pub fn seed(&self) -> u64 {
        match *self {
            TerminalCondition::RandomUnit { seed }
            | TerminalCondition::GaussianProcess { seed, .. } => seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        match *self {
            TerminalCondition::RandomUnit { .. } => TerminalCondition::RandomUnit { seed },
            TerminalCondition::GaussianProcess {
                correlation_length, ..
            } => TerminalCondition::GaussianProcess {
                seed,
                correlation_length,
            },
        }
    }
}

/// Unit-norm terminal covector `z(T)` for markers at `x` (flat, `dim` per point).
pub fn make_terminal(cond: &TerminalCondition, dim: Dim, x: &[f64]) -> Result<Vec<f64>> {
    let d = dim.get();
    if x.is_empty() || !x.len().is_multiple_of(d) {
        return Err(MrsError::InvalidArgument(
            "terminal state has no markers".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cond.seed());
    let mut z: Vec<f64> = match *cond {
        TerminalCondition::RandomUnit { .. } => (0..x.len())
            .map(|_| StandardNormal.sample(&mut rng))
            .collect(),
        TerminalCondition::GaussianProcess {
            correlation_length, ..
        } => {
            if !(correlation_length > 0.0) || !correlation_length.is_finite() {
                return Err(MrsError::config(
                    "adjoint.terminal.correlation_length",
                    format!("must be positive, got {correlation_length}"),
                ));
            }
            let n = x.len() / d;
            if n < 3 {
                return Err(MrsError::InvalidArgument(
                    "gaussian-process terminal data needs a ring of ≥ 3 markers".into(),
                ));
            }
            let perimeter: f64 = (0..n)
                .map(|k| {
                    let j = (k + 1) % n;
                    (0..d)
                        .map(|c| (x[j * d + c] - x[k * d + c]).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .sum();
            let spacing = perimeter / n as f64;
            let mut cols = Vec::new();
            while cols.len() < d {
                let (re, im) = ring_field(&mut rng, n, spacing, correlation_length);
                cols.push(re);
                cols.push(im);
            }
            (0..x.len()).map(|i| cols[i % d][i / d]).collect()
        }
    };
    let nz = norm(&z);
    if !(nz > 0.0) || !nz.is_finite() {
        return Err(MrsError::NonFinite("terminal condition"));
    }
    z.iter_mut().for_each(|v| *v /= nz);
    Ok(z)
}

/// Two independent samples of a periodic stationary field by circulant embedding.
fn ring_field(rng: &mut ChaCha8Rng, n: usize, spacing: f64, ell: f64) -> (Vec<f64>, Vec<f64>) {
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let mut cov: Vec<Complex<f64>> = (0..n)
        .map(|m| {
            let s = m.min(n - m) as f64 * spacing / ell;
            Complex::new((-0.5 * s * s).exp(), 0.0)
        })
        .collect();
    fft.process(&mut cov);
    let mut spec: Vec<Complex<f64>> = cov
        .iter()
        .map(|lam| {
            // wrapped covariance is not exactly positive definite; clip
            let a = (lam.re.max(0.0) / n as f64).sqrt();
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex::new(a * re, a * im)
        })
        .collect();
    fft.process(&mut spec);
    (
        spec.iter().map(|c| c.re).collect(),
        spec.iter().map(|c| c.im).collect(),
    )
}

/// `out = A*(t) φ`, where `A(t)` linearizes the dynamics about state `x`.
pub trait AdjointOperator: Sync {
    fn len(&self) -> usize;
    fn apply(&self, t: f64, x: &[f64], phi: &[f64], out: &mut [f64]) -> Result<()>;
}

impl AdjointOperator for MrsSystem {
    fn len(&self) -> usize {
        self.state_len()
    }
    fn apply(&self, t: f64, x: &[f64], phi: &[f64], out: &mut [f64]) -> Result<()> {
        self.adjoint_apply(t, x, phi, out)
    }
}

impl<F> AdjointOperator for (usize, F)
where
    F: Fn(f64, &[f64], &[f64], &mut [f64]) -> Result<()> + Sync,
{
    fn len(&self) -> usize {
        self.0
    }
    fn apply(&self, t: f64, x: &[f64], phi: &[f64], out: &mut [f64]) -> Result<()> {
        (self.1)(t, x, phi, out)
    }
}

/// `ż(t) = −A*(t) z`, with `A*` taken about the reconstruction at `t`.
pub fn adjoint_rhs(
    t: f64,
    z: &[f64],
    forward: &PiecewisePolynomial,
    op: &impl AdjointOperator,
) -> Result<Vec<f64>> {
    let x = forward.eval(t)?;
    let mut out = vec![0.0; z.len()];
    op.apply(t, &x, z, &mut out)?;
    out.iter_mut().for_each(|v| *v = -*v);
    Ok(out)
}

struct Reversed<'a, A> {
    forward: &'a PiecewisePolynomial,
    op: &'a A,
    t_end: f64,
}

impl<A: AdjointOperator> OdeRhs for Reversed<'_, A> {
    fn len(&self) -> usize {
        self.op.len()
    }
    fn eval(&self, tau: f64, z: &[f64], out: &mut [f64]) -> Result<()> {
        let t = self.t_end - tau;
        let x = self.forward.eval(t)?;
        self.op.apply(t, &x, z, out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointTrajectory {
    /// Ascending; the forward partition refined `refine` times.
    pub times: Vec<f64>,
    pub nodes: Vec<Vec<f64>>,
    /// `ż` at each node.
    pub derivs: Vec<Vec<f64>>,
    /// Cubic Hermite interpolant of `(nodes, derivs)`.
    pub reconstruction: PiecewisePolynomial,
    pub refine: usize,
}

impl AdjointTrajectory {
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        self.reconstruction.eval(t)
    }

    pub fn terminal(&self) -> &[f64] {
        self.nodes.last().unwrap()
    }

    pub fn initial(&self) -> &[f64] {
        &self.nodes[0]
    }
}

/// Integrate the adjoint backward from `z(T) = terminal` over the partition of
/// `forward`, each forward interval split into `refine` equal adjoint steps.
pub fn solve_adjoint(
    forward: &PiecewisePolynomial,
    op: &impl AdjointOperator,
    terminal: &[f64],
    refine: usize,
) -> Result<AdjointTrajectory> {
    if refine == 0 {
        return Err(MrsError::config("adjoint.refine", "must be at least 1"));
    }
    if terminal.len() != op.len() || forward.len() != op.len() {
        return Err(MrsError::InvalidArgument(format!(
            "adjoint sizes disagree: terminal {}, operator {}, forward {}",
            terminal.len(),
            op.len(),
            forward.len()
        )));
    }
    let ft = forward.times();
    let mut times = Vec::with_capacity((ft.len() - 1) * refine + 1);
    for w in ft.windows(2) {
        let h = (w[1] - w[0]) / refine as f64;
        times.extend((0..refine).map(|r| w[0] + r as f64 * h));
    }
    times.push(*ft.last().unwrap());

    let t_end = *times.last().unwrap();
    let rhs = Reversed { forward, op, t_end };
    let tab = ButcherTableau::rk6();
    let k = times.len();
    let mut nodes = vec![Vec::new(); k];
    let mut derivs = vec![Vec::new(); k];
    nodes[k - 1] = terminal.to_vec();
    for i in (0..k - 1).rev() {
        let tau = t_end - times[i + 1];
        let h = times[i + 1] - times[i];
        let (next, stages) = rk_step(&tab, &rhs, tau, &nodes[i + 1], h)?;
        if !all_finite(&next) {
            return Err(MrsError::NonFinite("adjoint solve"));
        }
        // stage 1 is A*(t_{i+1}) z(t_{i+1})
        derivs[i + 1] = stages[0].iter().map(|v| -v).collect();
        nodes[i] = next;
    }
    derivs[0] = adjoint_rhs(times[0], &nodes[0], forward, op)?;
    let reconstruction = PiecewisePolynomial::hermite(times.clone(), &nodes, &derivs)?;
    Ok(AdjointTrajectory {
        times,
        nodes,
        derivs,
        reconstruction,
        refine,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::test_support::random_system;
    use crate::dynamics::{SelfTerm, Weights};
    use crate::forces::{ExternalField, Spring, SpringNetwork};
    use crate::kernels::KernelParams;
    use crate::vecops::{dot, sub};
    use nalgebra::{DMatrix, DVector};

    fn frozen(x: &[f64], t_end: f64) -> PiecewisePolynomial {
        let times: Vec<f64> = (0..=10).map(|k| t_end * k as f64 / 10.0).collect();
        PiecewisePolynomial::from_coeffs(times, vec![vec![x.to_vec()]; 10]).unwrap()
    }

    #[test]
    fn terminal_is_unit_and_deterministic() {
        let x: Vec<f64> = (0..40).map(|k| ((k as f64) * 0.3).sin()).collect();
        for cond in [
            TerminalCondition::RandomUnit { seed: 3 },
            TerminalCondition::GaussianProcess {
                seed: 3,
                correlation_length: 0.4,
            },
        ] {
            let a = make_terminal(&cond, Dim::Two, &x).unwrap();
            let b = make_terminal(&cond, Dim::Two, &x).unwrap();
            assert_eq!(a, b);
            assert!((norm(&a) - 1.0).abs() < 1e-14);
            let c = make_terminal(&cond.with_seed(4), Dim::Two, &x).unwrap();
            assert_ne!(a, c);
        }
        let x3: Vec<f64> = (0..30).map(|k| ((k as f64) * 0.7).cos()).collect();
        let z = make_terminal(
            &TerminalCondition::GaussianProcess {
                seed: 1,
                correlation_length: 1.0,
            },
            Dim::Three,
            &x3,
        )
        .unwrap();
        assert!((norm(&z) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn long_correlation_gives_smooth_field() {
        let n = 32;
        let x: Vec<f64> = (0..n)
            .flat_map(|k| {
                let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                [th.cos(), th.sin()]
            })
            .collect();
        let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let seeds = 100;
        for seed in 0..seeds {
            let z = make_terminal(
                &TerminalCondition::GaussianProcess {
                    seed,
                    correlation_length: 50.0,
                },
                Dim::Two,
                &x,
            )
            .unwrap();
            let (a, b) = (z[0], z[2]);
            sa += a;
            sb += b;
            saa += a * a;
            sbb += b * b;
            sab += a * b;
        }
        let m = seeds as f64;
        let cov = sab / m - sa * sb / (m * m);
        let corr = cov / ((saa / m - (sa / m).powi(2)) * (sbb / m - (sb / m).powi(2))).sqrt();
        assert!(corr > 0.9, "{corr}");
    }

    #[test]
    fn gaussian_process_needs_ring() {
        let cond = TerminalCondition::GaussianProcess {
            seed: 0,
            correlation_length: 1.0,
        };
        assert!(make_terminal(&cond, Dim::Two, &[0.0, 0.0, 1.0, 0.0]).is_err());
        let bad = TerminalCondition::GaussianProcess {
            seed: 0,
            correlation_length: -1.0,
        };
        assert!(make_terminal(&bad, Dim::Two, &[0.0; 8]).is_err());
    }

    #[test]
    fn zero_operator_keeps_z_constant() {
        let op = (3, |_t: f64, _x: &[f64], _p: &[f64], out: &mut [f64]| {
            out.fill(0.0);
            Ok(())
        });
        let zt = [0.6, 0.0, 0.8];
        let adj = solve_adjoint(&frozen(&[0.0; 3], 2.0), &op, &zt, 2).unwrap();
        assert_eq!(adj.initial(), &zt);
        assert_eq!(adj.times.len(), 21);
    }

    #[test]
    fn scalar_operator_matches_exponential() {
        let a = -0.7;
        let op = (1, move |_t: f64, _x: &[f64], p: &[f64], out: &mut [f64]| {
            out[0] = a * p[0];
            Ok(())
        });
        let t_end = 2.0;
        let adj = solve_adjoint(&frozen(&[0.0], t_end), &op, &[1.0], 1).unwrap();
        for (t, z) in adj.times.iter().zip(&adj.nodes) {
            assert!((z[0] - (a * (t_end - t)).exp()).abs() < 1e-8);
        }
        let t = 0.93;
        // cubic Hermite: h⁴·max|z⁗|/384
        assert!(
            (adj.eval(t).unwrap()[0] - (a * (t_end - t)).exp()).abs()
                < 0.2f64.powi(4) * a.powi(4) * (-a * t_end).exp() / 384.0
        );
    }

    #[test]
    fn frozen_spring_system_matches_matrix_exponential() {
        let (mut sys, x) = random_system(17, Dim::Two, 5, false, false);
        sys.field = ExternalField::None;
        let m = x.len();
        let mut a = DMatrix::zeros(m, m);
        for col in 0..m {
            let mut e = vec![0.0; m];
            e[col] = 1.0;
            let c = sys.frechet(0.0, &x, &e).unwrap();
            for row in 0..m {
                a[(row, col)] = c[row];
            }
        }
        let t_end = 0.8;
        let zt = make_terminal(&TerminalCondition::RandomUnit { seed: 5 }, Dim::Two, &x).unwrap();
        let adj = solve_adjoint(&frozen(&x, t_end), &sys, &zt, 4).unwrap();
        let expect = (a.transpose() * t_end).exp() * DVector::from_vec(zt.clone());
        for i in 0..m {
            assert!((adj.initial()[i] - expect[i]).abs() < 1e-10);
        }
        // exact duality for the frozen linear system: (e(T), z(T)) = (e(0), z(0))
        let e0 = DVector::from_fn(m, |i, _| ((i * 7 % 5) as f64 - 2.0) * 0.1);
        let et = (&a * t_end).exp() * &e0;
        let lhs = dot(et.as_slice(), &zt);
        let rhs = dot(e0.as_slice(), adj.initial());
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn linear_in_terminal_data() {
        let (sys, x) = random_system(2, Dim::Three, 6, true, false);
        let fw = frozen(&x, 0.5);
        let z1 = make_terminal(&TerminalCondition::RandomUnit { seed: 1 }, Dim::Three, &x).unwrap();
        let z2 = make_terminal(&TerminalCondition::RandomUnit { seed: 2 }, Dim::Three, &x).unwrap();
        let mix: Vec<f64> = z1.iter().zip(&z2).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
        let s1 = solve_adjoint(&fw, &sys, &z1, 1).unwrap();
        let s2 = solve_adjoint(&fw, &sys, &z2, 1).unwrap();
        let sm = solve_adjoint(&fw, &sys, &mix, 1).unwrap();
        for i in 0..x.len() {
            let e = 2.0 * s1.initial()[i] - 0.5 * s2.initial()[i];
            assert!((sm.initial()[i] - e).abs() < 1e-12);
        }
    }

    #[test]
    fn sixth_order_self_convergence() {
        let sys = MrsSystem {
            kernel: KernelParams::new(Dim::Two, 0.2).unwrap(),
            network: SpringNetwork::new(
                3,
                vec![
                    Spring {
                        i: 0,
                        j: 1,
                        stiffness: 2.0,
                        rest_length: 0.5,
                    },
                    Spring {
                        i: 1,
                        j: 2,
                        stiffness: 2.0,
                        rest_length: 0.5,
                    },
                    Spring {
                        i: 0,
                        j: 2,
                        stiffness: 2.0,
                        rest_length: 0.5,
                    },
                ],
            )
            .unwrap(),
            tether: None,
            field: ExternalField::None,
            weights: Weights::Constant {
                values: vec![1.0; 3],
            },
            self_term: SelfTerm::Include,
        };
        let x = vec![0.0, 0.0, 1.0, 0.0, 0.3, 0.9];
        let fw = frozen(&x, 2.0);
        let zt = make_terminal(&TerminalCondition::RandomUnit { seed: 8 }, Dim::Two, &x).unwrap();
        let z = |r| solve_adjoint(&fw, &sys, &zt, r).unwrap().initial().to_vec();
        let (z1, z2, z4) = (z(1), z(2), z(4));
        let rho = (norm(&sub(&z1, &z4)) / norm(&sub(&z2, &z4))).log2();
        // (e_h − e_{h/4}) / (e_{h/2} − e_{h/4}) = (1 − 4^-p)/(2^-p − 4^-p) ≈ 2^p
        assert!(rho > 5.5, "{rho}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let op = (2, |_t: f64, _x: &[f64], _p: &[f64], out: &mut [f64]| {
            out.fill(0.0);
            Ok(())
        });
        let fw = frozen(&[0.0, 0.0], 1.0);
        assert!(solve_adjoint(&fw, &op, &[1.0, 0.0], 0).is_err());
        assert!(solve_adjoint(&fw, &op, &[1.0], 1).is_err());
    }
}
