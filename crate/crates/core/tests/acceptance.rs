//! Acceptance suite. Every criterion runs at its stated tolerance and
//! prints one PASS/FAIL line; the process fails if any criterion fails.

mod common;

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use common::{rand_vec, random_system, rng};
use mrs_core::dynamics::{MrsSystem, OdeRhs, SelfTerm};
use mrs_core::estimators::{Components, EstimateMode};
use mrs_core::integrate::{nefem_reconstruct, solve_forward, Method};
use mrs_core::kernels::{stokeslet_regularized, Dim, KernelParams};
use mrs_core::quadrature::GaussLegendre;
use mrs_core::scenarios::{convergence_factor, Scenario, ScenarioConfig, ScenarioKind};
use mrs_core::vecops::{dot, norm, sub};
use rand::Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rhs(sys: &MrsSystem, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    sys.rhs_regularized(0.0, x, &mut out).unwrap();
    out
}

fn relax(markers: usize) -> ScenarioConfig {
    let mut c = ScenarioConfig::builtin(ScenarioKind::CircleRelax);
    c.markers = markers;
    c.snapshots = vec![0.0];
    c
}

fn adjoint_identity() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for i in 0..200u64 {
        let dim = if i % 2 == 0 { Dim::Two } else { Dim::Three };
        let curve = i % 4 < 2;
        let n = 2 + (i as usize * 7) % 29;
        let n = if curve { n.max(3) } else { n };
        let (sys, x) = random_system(1000 + i, dim, n, curve);
        let mut r = rng(i);
        let y = rand_vec(&mut r, x.len());
        let phi = rand_vec(&mut r, x.len());
        let jy = sys.frechet(0.0, &x, &y).unwrap();
        let lhs = dot(&jy, &phi);
        let rhs = dot(&y, &sys.adjoint(0.0, &x, &phi).unwrap());
        let scale = norm(&y) * norm(&phi) * (1.0 + norm(&jy) / norm(&y));
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-12 && secs < 10.0,
        format!("200 instances, max scaled defect {worst:.2e}, {secs:.2} s"),
    )
}

/// Central-difference errors at h = 1e-3..1e-6 relative to `‖Jy‖`.
/// Orders are taken only between steps where truncation still dominates
/// rounding by two digits; the rounding level is `u·‖f‖/h`.
fn fd_profile(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], y: &[f64], jy: &[f64]) -> (Vec<f64>, f64) {
    let hs = [1e-3, 1e-4, 1e-5, 1e-6];
    let fnorm = norm(&f(x));
    let jn = norm(jy);
    let errs: Vec<f64> = hs
        .iter()
        .map(|&h| {
            let xp: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + h * b).collect();
            let xm: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - h * b).collect();
            let fd: Vec<f64> = f(&xp)
                .iter()
                .zip(f(&xm))
                .map(|(p, m)| (p - m) / (2.0 * h))
                .collect();
            norm(&sub(&fd, jy)) / jn
        })
        .collect();
    let mut orders = Vec::new();
    for k in 0..hs.len() - 1 {
        let floor = 100.0 * f64::EPSILON * fnorm / (hs[k + 1] * jn);
        if errs[k + 1] > floor {
            orders.push(convergence_factor(errs[k], errs[k + 1]) / 10f64.log2());
        }
    }
    let best = errs.iter().cloned().fold(f64::INFINITY, f64::min);
    (orders, best)
}

fn frechet_vs_fd() -> Outcome {
    let (mut min_order, mut worst_best, mut pairs, mut operators) = (f64::INFINITY, 0.0f64, 0, 0);
    for i in 0..24u64 {
        let dim = if i % 2 == 0 { Dim::Two } else { Dim::Three };
        let curve = i % 3 == 0;
        let (sys, x) = random_system(500 + i, dim, 4 + i as usize % 9, curve);
        let y = rand_vec(&mut rng(i ^ 0xfd), x.len());
        let d = dim.get();
        let mut cases = vec![fd_profile(
            |p| rhs(&sys, p),
            &x,
            &y,
            &sys.frechet(0.0, &x, &y).unwrap(),
        )];
        // an empty network has identically zero forces and nothing to check
        if !sys.network.edges().is_empty() {
            cases.push(fd_profile(
                |p| sys.network.forces(p, d).unwrap(),
                &x,
                &y,
                &sys.network.jacobian_apply(&x, d, &y).unwrap(),
            ));
        }
        for (orders, best) in cases {
            operators += 1;
            if orders.is_empty() {
                return Err(format!("instance {i}: no truncation-dominated step pair"));
            }
            pairs += orders.len();
            min_order = orders.iter().cloned().fold(min_order, f64::min);
            worst_best = worst_best.max(best);
        }
    }
    check(
        min_order >= 1.9 && worst_best <= 1e-6,
        format!("{operators} operators, {pairs} step pairs, min order {min_order:.3}, worst best-error {worst_best:.2e}"),
    )
}

fn convergence_factors() -> Outcome {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut ok = true;
    for (method, dt, target, tol) in [
        (Method::Heun, 0.05, 2.0, 0.2),
        (Method::Rk4, 0.05, 4.0, 0.3),
        (Method::Rk6, 0.1, 6.0, 0.5),
    ] {
        let mut c = relax(32);
        c.dt = dt;
        let table = Scenario::build(&c).unwrap().converge(method, 4).unwrap();
        let rhos: Vec<f64> = table.rows.iter().filter_map(|r| r.rho).collect();
        ok &= rhos.len() >= 3 && rhos.iter().all(|r| (r - target).abs() <= tol);
        lines.push(format!("{} {:.2?}", method.name(), rhos));
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        ok && secs < 60.0,
        format!("{}, {secs:.1} s", lines.join("; ")),
    )
}

fn nodal_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut runs = 0;
    for kind in ScenarioKind::ALL {
        for method in [Method::Heun, Method::Rk4, Method::Rk6] {
            let mut c = ScenarioConfig::builtin(kind);
            c.set_t_end(0.2);
            c.method = method;
            let sc = Scenario::build(&c).unwrap();
            let traj = sc.forward().unwrap();
            let rec = nefem_reconstruct(&traj, &sc.system, c.estimate.degree).unwrap();
            let mut buf = vec![0.0; traj.nodes[0].len()];
            for n in 0..traj.num_intervals() {
                for (theta, node) in [(0.0, &traj.nodes[n]), (1.0, &traj.nodes[n + 1])] {
                    rec.eval_local_into(n, theta, &mut buf);
                    worst = worst.max(norm(&sub(&buf, node)) / norm(node));
                }
            }
            runs += 1;
        }
    }
    check(
        worst <= 1e-13,
        format!("{runs} smoke runs, max relative nodal gap {worst:.2e}"),
    )
}

fn reconstruction_orders() -> Outcome {
    let c = relax(32);
    let sc = Scenario::build(&c).unwrap();
    let dts = [0.05, 0.025, 0.0125];
    // every sample time below is a node of the reference grid
    let h_ref = dts[2] / 8.0;
    let reference = solve_forward(
        &Method::Rk6.tableau(),
        &sc.system,
        &sc.initial.positions,
        0.0,
        c.t_end,
        h_ref,
    )
    .unwrap();
    let at = |t: f64| &reference.nodes[(t / h_ref).round() as usize];
    let (mut interior, mut nodal) = (Vec::new(), Vec::new());
    for &dt in &dts {
        let traj = sc.forward_with(Method::Rk4, dt).unwrap();
        let rec = nefem_reconstruct(&traj, &sc.system, c.estimate.degree).unwrap();
        let (mut ei, mut en): (f64, f64) = (0.0, 0.0);
        let mut buf = vec![0.0; traj.nodes[0].len()];
        for n in 0..traj.num_intervals() {
            for theta in [0.25, 0.5, 0.75] {
                rec.eval_local_into(n, theta, &mut buf);
                ei = ei.max(norm(&sub(&buf, at(traj.times[n] + theta * dt))));
            }
            en = en.max(norm(&sub(&traj.nodes[n + 1], at(traj.times[n + 1]))));
        }
        interior.push(ei);
        nodal.push(en);
    }
    let rho = |e: &[f64]| {
        e.windows(2)
            .map(|w| convergence_factor(w[0], w[1]))
            .collect::<Vec<_>>()
    };
    let (ri, rn) = (rho(&interior), rho(&nodal));
    check(
        ri.iter().all(|r| (r - 2.0).abs() <= 0.3) && rn.iter().all(|r| (r - 4.0).abs() <= 0.3),
        format!("interior orders {ri:.2?}, nodal orders {rn:.2?}"),
    )
}

fn estimator_identity() -> Outcome {
    let mut c = relax(32);
    c.estimate.quad_nodes = 10;
    c.estimate.mode = EstimateMode::RegularizedExact;
    c.seeds = 4;
    let sc = Scenario::build(&c).unwrap();
    let report = sc.estimate().unwrap();
    let traj = &report.trajectory;
    let rec = nefem_reconstruct(traj, &sc.system, c.estimate.degree).unwrap();
    let rule = GaussLegendre::new(10).unwrap();
    let mut worst: f64 = 0.0;
    for (i, seed) in report.seeds.iter().enumerate() {
        // rebuild the adjoint the estimator used and quadrature ⟨Ẋ − F(X), z⟩ here
        let zt =
            mrs_core::adjoint::make_terminal(&c.terminal(i), Dim::Two, traj.final_state()).unwrap();
        let z = mrs_core::adjoint::solve_adjoint(&rec, &sc.system, &zt, c.adjoint.refine).unwrap();
        let mut direct = 0.0;
        let mut f = vec![0.0; traj.nodes[0].len()];
        for n in 0..traj.num_intervals() {
            let (a, b) = (traj.times[n], traj.times[n + 1]);
            direct += rule.integrate(a, b, |t| {
                let x = rec.eval(t).unwrap();
                sc.system.eval(t, &x, &mut f).unwrap();
                dot(&sub(&rec.derivative(t).unwrap(), &f), &z.eval(t).unwrap())
            });
        }
        let t: Components = seed.breakdown.totals();
        worst = worst.max((t.discretization() - direct).abs() / direct.abs());
    }
    check(
        worst <= 1e-8,
        format!("4 seeds, max relative gap {worst:.2e}"),
    )
}

fn effectivity_trend() -> Outcome {
    let mut table: Vec<Vec<f64>> = Vec::new();
    for dt in [0.02, 0.01, 0.005] {
        let mut c = relax(64);
        c.dt = dt;
        c.seeds = 4;
        let r = Scenario::build(&c).unwrap().estimate().unwrap();
        table.push(
            r.seeds
                .iter()
                .map(|s| s.effectivity.unwrap_or(f64::NAN))
                .collect(),
        );
    }
    let mut ok = true;
    for s in 0..table[0].len() {
        let dev: Vec<f64> = table.iter().map(|row| (row[s] - 1.0).abs()).collect();
        ok &= (0.8..=1.2).contains(&table[2][s]) && dev.windows(2).all(|w| w[1] <= w[0]);
    }
    check(
        ok,
        format!("effectivity per seed at dt 0.02/0.01/0.005: {table:.5?}"),
    )
}

/// Convolution of the singular Stokeslet with the blob, integrated in polar
/// (2D) or spherical (3D) coordinates centred on the field point `(r, 0, ..)`.
/// Returns the (1,1) and (2,2) entries.
fn convolved_kernel(dim: Dim, r: f64, eps: f64) -> [f64; 2] {
    let blob = |s2: f64| match dim {
        Dim::Two => 3.0 * eps.powi(3) / (2.0 * PI * (s2 + eps * eps).powf(2.5)),
        Dim::Three => 15.0 * eps.powi(4) / (8.0 * PI * (s2 + eps * eps).powf(3.5)),
    };
    // angular factor times radial measure, for entry (1,1) or (2,2)
    let integrand = move |entry: usize, th: f64, rho: f64| -> f64 {
        let (c, s) = (th.cos(), th.sin());
        let phi = blob(r * r + rho * rho + 2.0 * r * rho * c);
        match dim {
            Dim::Two => {
                let ang = if entry == 0 { c * c } else { s * s };
                2.0 * rho * (-rho.ln() + ang) / (4.0 * PI) * phi
            }
            Dim::Three => {
                // the azimuthal integral is done in closed form
                let ang = if entry == 0 {
                    2.0 * PI * (1.0 + c * c)
                } else {
                    2.0 * PI * (1.0 + 0.5 * s * s)
                };
                s * rho * ang / (8.0 * PI) * phi
            }
        }
    };
    let radial = move |entry: usize, th: f64| -> f64 {
        let near = quadrature::double_exponential::integrate(
            |rho| integrand(entry, th, rho),
            0.0,
            r,
            1e-14,
        )
        .integral;
        let far = quadrature::double_exponential::integrate(
            |s| {
                let u = 1.0 - s;
                integrand(entry, th, r + s / u) / (u * u)
            },
            0.0,
            1.0,
            1e-14,
        )
        .integral;
        near + far
    };
    [0, 1].map(|entry| {
        quadrature::double_exponential::integrate(|th| radial(entry, th), 0.0, PI, 1e-12).integral
    })
}

fn regularization_consistency() -> Outcome {
    let mut orders = [f64::INFINITY; 2];
    for (i, dim) in [Dim::Two, Dim::Three, Dim::Two, Dim::Three]
        .into_iter()
        .enumerate()
    {
        let (mut sys, _) = random_system(77 + i as u64, dim, 9, false);
        sys.self_term = SelfTerm::Exclude;
        // jittered lattice: separations stay above 0.3
        let d = dim.get();
        let mut r = rng(i as u64);
        let x: Vec<f64> = (0..9)
            .flat_map(|k| (0..d).map(move |a| [k % 3, (k / 3) % 3, 0][a] as f64 * 0.5))
            .map(|v| v + r.random_range(-0.1..0.1))
            .collect();
        let mut sing = vec![0.0; x.len()];
        sys.rhs_singular(0.0, &x, &mut sing).unwrap();
        let mut errs = Vec::new();
        for k in 0..5 {
            sys.kernel = KernelParams::new(dim, 0.01 / (1 << k) as f64).unwrap();
            errs.push(norm(&sub(&rhs(&sys, &x), &sing)));
        }
        for w in errs.windows(2) {
            orders[d - 2] = orders[d - 2].min(convergence_factor(w[0], w[1]));
        }
    }
    let min_order = orders[0].min(orders[1]);

    let mut worst: f64 = 0.0;
    for dim in [Dim::Two, Dim::Three] {
        for r in [0.05, 0.2, 0.5, 1.0, 2.0] {
            for eps in [0.05, 0.1, 0.2, 0.4, 0.8] {
                let mut v = vec![0.0; dim.get()];
                v[0] = r;
                let u = stokeslet_regularized(&v, &KernelParams::new(dim, eps).unwrap());
                let oracle = convolved_kernel(dim, r, eps);
                for (got, want) in [u[0][0], u[1][1]].iter().zip(oracle) {
                    worst = worst.max((got - want).abs() / want.abs());
                }
            }
        }
    }
    check(
        min_order >= 2.0 && worst <= 1e-6,
        format!("min ε-order over 4 halvings 2D {:.4} 3D {:.4}; kernel vs convolution max rel {worst:.2e} on 5x5 grid (2D, 3D)", orders[0], orders[1]),
    )
}

fn figure_trends() -> Outcome {
    let mut c = relax(64);
    c.set_t_end(3.0);
    c.seeds = 4;
    let report = Scenario::build(&c).unwrap().estimate().unwrap();
    let mut worst: f64 = 0.0;
    for s in &report.seeds {
        let b = &s.breakdown;
        let pick: [fn(&Components) -> f64; 3] = [|c| c.residual, |c| c.explicit, |c| c.quadrature];
        for f in pick {
            let (mut early, mut late) = (Vec::new(), Vec::new());
            for (k, comp) in b.intervals.iter().enumerate() {
                if b.times[k] < 0.3 * c.t_end {
                    early.push(f(comp).abs());
                } else if b.times[k] >= 0.7 * c.t_end - 1e-12 {
                    late.push(f(comp).abs());
                }
            }
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            worst = worst.max(mean(&late) / mean(&early));
        }
    }

    let shear = ScenarioConfig::builtin(ScenarioKind::CircleShear);
    let report = Scenario::build(&shear).unwrap().estimate().unwrap();
    let b = &report.seeds[0].breakdown;
    let total = b.totals();
    let dominant = total.regularization.abs() > total.residual.abs()
        && total.regularization.abs() > total.explicit.abs();
    let series: Vec<f64> = b
        .cumulative
        .iter()
        .map(|c| c.regularization.abs())
        .collect();
    let t = &b.times[1..];
    let n = t.len() as f64;
    let (mt, my) = (t.iter().sum::<f64>() / n, series.iter().sum::<f64>() / n);
    let slope = t
        .iter()
        .zip(&series)
        .map(|(a, y)| (a - mt) * (y - my))
        .sum::<f64>()
        / t.iter().map(|a| (a - mt).powi(2)).sum::<f64>();
    check(
        worst < 0.25 && dominant && slope > 0.0,
        format!(
            "relaxation late/early max {worst:.3}; shear |E_Re| {:.2e} vs |E_R| {:.2e}, |E_E| {:.2e}, slope {slope:.2e}",
            total.regularization.abs(),
            total.residual.abs(),
            total.explicit.abs()
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &Path| {
        let status = Command::new(env!("CARGO_BIN_EXE_mrs"))
            .args([
                "estimate",
                "--scenario",
                "circle_relax",
                "--seeds",
                "3",
                "--markers",
                "32",
                "--out",
            ])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&a);
    run(&b);
    let mut same = true;
    for f in [
        "breakdown_seed0.csv",
        "breakdown_seed1.csv",
        "breakdown_seed2.csv",
        "breakdown_max.csv",
    ] {
        same &= std::fs::read(a.join(f)).unwrap() == std::fs::read(b.join(f)).unwrap();
    }
    check(
        same,
        "two estimate runs, 4 CSV files compared byte for byte".into(),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("adjoint identity", adjoint_identity),
        ("Frechet vs finite differences", frechet_vs_fd),
        ("convergence factors", convergence_factors),
        ("nodal equivalence", nodal_equivalence),
        ("reconstruction orders", reconstruction_orders),
        ("estimator identity", estimator_identity),
        ("effectivity trend", effectivity_trend),
        ("regularization consistency", regularization_consistency),
        ("figure trends", figure_trends),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let outcome =
            catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(d) => println!("PASS  {id:>2} {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL  {id:>2} {name}: {d}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
