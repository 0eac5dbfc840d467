//! Built-in experiments and the drivers that run them end to end.
//!
//! Parameter values here are artifact defaults chosen so that each run is
//! cheap and relaxes visibly within its time window; they are not taken
//! from any published figure.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adjoint::{make_terminal, solve_adjoint, TerminalCondition};
use crate::dynamics::{MarkerState, MrsSystem, SelfTerm, SingularRhs, Weights};
use crate::error::{MrsError, Result};
use crate::estimators::{
    effectivity, estimate, true_pairing, ErrorBreakdown, EstimateMode, EstimateOptions,
};
use crate::forces::{ExternalField, Spring, SpringNetwork, Tether};
use crate::integrate::{
    nefem_reconstruct, solve_forward, ForwardTrajectory, Method, PiecewisePolynomial,
};
use crate::kernels::{Dim, KernelParams};
use crate::vecops::{norm, sub};

use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ScenarioKind {
    CircleRelax,
    CircleShear,
    FiberNetwork,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [
        ScenarioKind::CircleRelax,
        ScenarioKind::CircleShear,
        ScenarioKind::FiberNetwork,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::CircleRelax => "circle_relax",
            ScenarioKind::CircleShear => "circle_shear",
            ScenarioKind::FiberNetwork => "fiber_network",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            ScenarioKind::CircleRelax => {
                "deformed elastic ring tethered to the unit circle, relaxing in still fluid"
            }
            ScenarioKind::CircleShear => {
                "elastic unit ring stretched by the background shear u = (rate·y, 0)"
            }
            ScenarioKind::FiberNetwork => {
                "random 3D spring network of point particles in a linear flow"
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TerminalKind {
    #[default]
    RandomUnit,
    GaussianProcess,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSection {
    pub mode: EstimateMode,
    pub quad_nodes: usize,
    pub degree: usize,
    /// The reference solution uses the sixth-order method at `dt / reference_refine`.
    pub reference_refine: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdjointSection {
    pub terminal: TerminalKind,
    pub correlation_length: f64,
    /// Adjoint steps per forward step.
    pub refine: usize,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub markers: usize,
    pub epsilon: f64,
    pub stiffness: f64,
    pub tether_stiffness: f64,
    pub t_end: f64,
    pub dt: f64,
    pub method: Method,
    pub self_term: SelfTerm,
    pub snapshots: Vec<f64>,
    /// circle_shear: `C = [[0, rate], [0, 0]]`.
    pub shear_rate: f64,
    /// fiber_network only.
    pub r_connect: f64,
    pub youngs_modulus: f64,
    pub box_size: f64,
    pub flow: Vec<Vec<f64>>,
    /// Seeds the fiber layout and, offset by the seed index, the adjoint data.
    pub seed: u64,
    pub seeds: usize,
    pub estimate: EstimateSection,
    pub adjoint: AdjointSection,
}

/// TOML overlay: every key optional, unknown keys rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    scenario: Option<ScenarioKind>,
    markers: Option<usize>,
    epsilon: Option<f64>,
    stiffness: Option<f64>,
    tether_stiffness: Option<f64>,
    t_end: Option<f64>,
    dt: Option<f64>,
    method: Option<Method>,
    self_term: Option<SelfTerm>,
    snapshots: Option<Vec<f64>>,
    shear_rate: Option<f64>,
    r_connect: Option<f64>,
    youngs_modulus: Option<f64>,
    box_size: Option<f64>,
    flow: Option<Vec<Vec<f64>>>,
    seed: Option<u64>,
    seeds: Option<usize>,
    estimate: Option<EstimateFile>,
    adjoint: Option<AdjointFile>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimateFile {
    mode: Option<EstimateMode>,
    quad_nodes: Option<usize>,
    degree: Option<usize>,
    reference_refine: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdjointFile {
    terminal: Option<TerminalKind>,
    correlation_length: Option<f64>,
    refine: Option<usize>,
}

macro_rules! overlay {
    ($dst:expr, $src:expr, $($f:ident),*) => {
        $( if let Some(v) = $src.$f { $dst.$f = v; } )*
    };
}

impl ScenarioConfig {
    pub fn builtin(kind: ScenarioKind) -> Self {
        let base = ScenarioConfig {
            scenario: kind,
            markers: 64,
            epsilon: 0.05,
            stiffness: 1.0,
            tether_stiffness: 0.0,
            t_end: 1.0,
            dt: 0.01,
            method: Method::Heun,
            self_term: SelfTerm::Include,
            snapshots: vec![0.0, 0.5, 1.0],
            shear_rate: 0.0,
            r_connect: 0.0,
            youngs_modulus: 0.0,
            box_size: 1.0,
            flow: Vec::new(),
            seed: 0,
            seeds: 1,
            estimate: EstimateSection {
                mode: EstimateMode::RegularizedExact,
                quad_nodes: 5,
                degree: 2,
                reference_refine: 8,
            },
            adjoint: AdjointSection {
                terminal: TerminalKind::RandomUnit,
                correlation_length: 0.5,
                refine: 1,
            },
        };
        match kind {
            ScenarioKind::CircleRelax => ScenarioConfig {
                stiffness: 1.0,
                tether_stiffness: 10.0,
                ..base
            },
            ScenarioKind::CircleShear => ScenarioConfig {
                stiffness: 5.0,
                shear_rate: 1.0,
                estimate: EstimateSection {
                    mode: EstimateMode::SingularTarget,
                    ..base.estimate
                },
                ..base
            },
            ScenarioKind::FiberNetwork => ScenarioConfig {
                markers: 100,
                r_connect: 0.3,
                youngs_modulus: 1.0,
                flow: vec![
                    vec![0.0, 1.0, 0.0],
                    vec![0.0, 0.0, 0.0],
                    vec![0.0, 0.0, 0.0],
                ],
                ..base
            },
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| {
            let path = e
                .span()
                .map(|s| {
                    let line = text[..s.start].matches('\n').count() + 1;
                    format!("line {line}")
                })
                .unwrap_or_else(|| "config".into());
            MrsError::config(path, e.message().to_string())
        })?;
        let kind = file
            .scenario
            .ok_or_else(|| MrsError::config("scenario", "missing required key"))?;
        let mut cfg = ScenarioConfig::builtin(kind);
        overlay!(
            cfg,
            file,
            markers,
            epsilon,
            stiffness,
            tether_stiffness,
            t_end,
            dt,
            method,
            self_term,
            snapshots,
            shear_rate,
            r_connect,
            youngs_modulus,
            box_size,
            flow,
            seed,
            seeds
        );
        if let Some(e) = file.estimate {
            overlay!(cfg.estimate, e, mode, quad_nodes, degree, reference_refine);
        }
        if let Some(a) = file.adjoint {
            overlay!(cfg.adjoint, a, terminal, correlation_length, refine);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| MrsError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            MrsError::Config { path: p, message } => {
                MrsError::config(format!("{}: {p}", path.display()), message)
            }
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Changes the final time, dropping snapshot times past it.
    pub fn set_t_end(&mut self, t_end: f64) {
        self.t_end = t_end;
        self.snapshots.retain(|&s| s <= t_end);
    }

    pub fn dim(&self) -> Dim {
        match self.scenario {
            ScenarioKind::FiberNetwork => Dim::Three,
            _ => Dim::Two,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |p: &str, m: String| Err(MrsError::config(p, m));
        let positive = |v: f64| v > 0.0 && v.is_finite();
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        match self.scenario {
            ScenarioKind::FiberNetwork => {
                if self.markers < 2 {
                    return err(
                        "markers",
                        format!("fiber network needs ≥ 2 points, got {}", self.markers),
                    );
                }
                if !positive(self.r_connect) {
                    return err(
                        "r_connect",
                        format!("must be positive, got {}", self.r_connect),
                    );
                }
                if !positive(self.box_size) {
                    return err(
                        "box_size",
                        format!("must be positive, got {}", self.box_size),
                    );
                }
                if !nonneg(self.youngs_modulus) {
                    return err(
                        "youngs_modulus",
                        format!("must be ≥ 0, got {}", self.youngs_modulus),
                    );
                }
                if !self.flow.is_empty() {
                    ExternalField::LinearFlow {
                        c: self.flow.clone(),
                    }
                    .validate(3)
                    .map_err(|e| MrsError::config("flow", e.to_string()))?;
                }
            }
            _ => {
                if self.markers < 3 {
                    return err(
                        "markers",
                        format!("boundary scenarios need ≥ 3 markers, got {}", self.markers),
                    );
                }
            }
        }
        if !nonneg(self.epsilon) {
            return err("epsilon", format!("must be ≥ 0, got {}", self.epsilon));
        }
        if !nonneg(self.stiffness) {
            return err("stiffness", format!("must be ≥ 0, got {}", self.stiffness));
        }
        if !nonneg(self.tether_stiffness) {
            return err(
                "tether_stiffness",
                format!("must be ≥ 0, got {}", self.tether_stiffness),
            );
        }
        if !self.shear_rate.is_finite() {
            return err("shear_rate", "must be finite".into());
        }
        if !nonneg(self.t_end) {
            return err("t_end", format!("must be ≥ 0, got {}", self.t_end));
        }
        if !positive(self.dt) {
            return err("dt", format!("must be positive, got {}", self.dt));
        }
        if self.t_end > 0.0 {
            let steps = (self.t_end / self.dt).round();
            if steps < 1.0 || (steps * self.dt - self.t_end).abs() > 1e-9 * self.t_end {
                return err(
                    "dt",
                    format!("{} does not divide t_end = {}", self.dt, self.t_end),
                );
            }
        }
        if let Some(s) = self
            .snapshots
            .iter()
            .find(|s| !(**s >= 0.0 && **s <= self.t_end))
        {
            return err("snapshots", format!("{s} lies outside [0, {}]", self.t_end));
        }
        if self.seeds == 0 {
            return err("seeds", "must be at least 1".into());
        }
        if !(1..=64).contains(&self.estimate.quad_nodes) {
            return err(
                "estimate.quad_nodes",
                format!("must be in 1..=64, got {}", self.estimate.quad_nodes),
            );
        }
        if self.estimate.degree == 0 {
            return err("estimate.degree", "must be at least 1".into());
        }
        if self.estimate.reference_refine == 0 {
            return err("estimate.reference_refine", "must be at least 1".into());
        }
        if self.adjoint.refine == 0 {
            return err("adjoint.refine", "must be at least 1".into());
        }
        if !positive(self.adjoint.correlation_length) {
            return err(
                "adjoint.correlation_length",
                format!("must be positive, got {}", self.adjoint.correlation_length),
            );
        }
        if self.adjoint.terminal == TerminalKind::GaussianProcess
            && self.scenario == ScenarioKind::FiberNetwork
        {
            return err(
                "adjoint.terminal",
                "gaussian_process needs a closed marker ring".into(),
            );
        }
        Ok(())
    }

    /// Terminal condition for the `i`-th seed.
    pub fn terminal(&self, i: usize) -> TerminalCondition {
        let seed = self.seed.wrapping_add(i as u64);
        match self.adjoint.terminal {
            TerminalKind::RandomUnit => TerminalCondition::RandomUnit { seed },
            TerminalKind::GaussianProcess => TerminalCondition::GaussianProcess {
                seed,
                correlation_length: self.adjoint.correlation_length,
            },
        }
    }

    pub fn estimate_options(&self) -> EstimateOptions {
        EstimateOptions {
            mode: self.estimate.mode,
            quad_nodes: self.estimate.quad_nodes,
            degree: self.estimate.degree,
        }
    }
}

/// `x₀(s) = (cos πs + ½ sin(2π cos(π(s − 1))), sin πs)`.
pub fn deformed_circle_point(s: f64) -> [f64; 2] {
    [
        (PI * s).cos() + 0.5 * (2.0 * PI * (PI * (s - 1.0)).cos()).sin(),
        (PI * s).sin(),
    ]
}

/// `n` markers at `s_k = 2k/n`, one full loop.
pub fn deformed_circle(n: usize) -> Result<MarkerState> {
    if n < 3 {
        return Err(MrsError::InvalidArgument(format!(
            "a closed curve needs ≥ 3 markers, got {n}"
        )));
    }
    let positions: Vec<f64> = (0..n)
        .flat_map(|k| deformed_circle_point(2.0 * k as f64 / n as f64))
        .collect();
    closed_curve_state(positions)
}

/// `n` markers equally spaced on the unit circle.
pub fn unit_circle(n: usize) -> Vec<f64> {
    (0..n)
        .flat_map(|k| {
            let th = 2.0 * PI * k as f64 / n as f64;
            [th.cos(), th.sin()]
        })
        .collect()
}

fn closed_curve_state(positions: Vec<f64>) -> Result<MarkerState> {
    let n = positions.len() / 2;
    let sys = MrsSystem {
        kernel: KernelParams::new(Dim::Two, 0.0)?,
        network: SpringNetwork::empty(n),
        tether: None,
        field: ExternalField::None,
        weights: Weights::ClosedCurve,
        self_term: SelfTerm::Include,
    };
    sys.marker_state(&positions)
}

/// Nearest-neighbour springs around a ring, rest length the unit-circle chord.
pub fn ring_springs(n: usize, stiffness: f64) -> Result<SpringNetwork> {
    let rest = 2.0 * (PI / n as f64).sin();
    let edges = (0..n)
        .map(|k| {
            let j = (k + 1) % n;
            Spring {
                i: k.min(j),
                j: k.max(j),
                stiffness,
                rest_length: rest,
            }
        })
        .collect();
    SpringNetwork::new(n, edges)
}

/// Unit circle in the background flow `u = (rate·y, 0)`.
pub fn shear_scenario(n: usize, rate: f64) -> Result<(MarkerState, ExternalField)> {
    if n < 3 {
        return Err(MrsError::InvalidArgument(format!(
            "a closed curve needs ≥ 3 markers, got {n}"
        )));
    }
    let field = ExternalField::LinearFlow {
        c: vec![vec![0.0, rate], vec![0.0, 0.0]],
    };
    Ok((closed_curve_state(unit_circle(n))?, field))
}

/// `n` points uniform in `[0, box_size]³`, joined when closer than `r_connect`.
///
/// Rest lengths equal the initial separations and `k = E·ℓ²`.
pub fn fiber_network(
    n: usize,
    r_connect: f64,
    seed: u64,
    box_size: f64,
    youngs_modulus: f64,
) -> Result<(MarkerState, SpringNetwork)> {
    if n < 2 {
        return Err(MrsError::InvalidArgument(format!(
            "a network needs ≥ 2 points, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions: Vec<f64> = (0..3 * n)
        .map(|_| rng.random_range(0.0..box_size))
        .collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let l = (0..3)
                .map(|c| (positions[3 * i + c] - positions[3 * j + c]).powi(2))
                .sum::<f64>()
                .sqrt();
            if l <= r_connect {
                if l == 0.0 {
                    return Err(MrsError::DegenerateGeometry {
                        first: i,
                        second: j,
                    });
                }
                edges.push(Spring {
                    i,
                    j,
                    stiffness: youngs_modulus * l * l,
                    rest_length: l,
                });
            }
        }
    }
    let network = SpringNetwork::new(n, edges)?;
    let state = MarkerState {
        dim: Dim::Three,
        positions,
        weights: vec![1.0; n],
    };
    Ok((state, network))
}

/// Observed order from errors at `h` and `h/2`.
pub fn convergence_factor(err_h: f64, err_h2: f64) -> f64 {
    (err_h / err_h2).log2()
}

/// A configured system and its initial state.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub system: MrsSystem,
    pub initial: MarkerState,
}

impl Scenario {
    pub fn build(config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let c = config;
        let kernel = KernelParams::new(c.dim(), c.epsilon)?;
        let (initial, network, tether, field, weights) = match c.scenario {
            ScenarioKind::CircleRelax => {
                let st = deformed_circle(c.markers)?;
                let tether = (c.tether_stiffness > 0.0).then(|| Tether {
                    reference: unit_circle(c.markers),
                    stiffness: c.tether_stiffness,
                });
                (
                    st,
                    ring_springs(c.markers, c.stiffness)?,
                    tether,
                    ExternalField::None,
                    Weights::ClosedCurve,
                )
            }
            ScenarioKind::CircleShear => {
                let (st, field) = shear_scenario(c.markers, c.shear_rate)?;
                let tether = (c.tether_stiffness > 0.0).then(|| Tether {
                    reference: st.positions.clone(),
                    stiffness: c.tether_stiffness,
                });
                (
                    st,
                    ring_springs(c.markers, c.stiffness)?,
                    tether,
                    field,
                    Weights::ClosedCurve,
                )
            }
            ScenarioKind::FiberNetwork => {
                let (st, net) =
                    fiber_network(c.markers, c.r_connect, c.seed, c.box_size, c.youngs_modulus)?;
                let field = if c.flow.is_empty() {
                    ExternalField::None
                } else {
                    ExternalField::LinearFlow { c: c.flow.clone() }
                };
                let w = Weights::Constant {
                    values: st.weights.clone(),
                };
                (st, net, None, field, w)
            }
        };
        let system = MrsSystem {
            kernel,
            network,
            tether,
            field,
            weights,
            self_term: c.self_term,
        };
        system.validate()?;
        Ok(Scenario {
            config: config.clone(),
            system,
            initial,
        })
    }

    pub fn forward(&self) -> Result<ForwardTrajectory> {
        self.forward_with(self.config.method, self.config.dt)
    }

    pub fn forward_with(&self, method: Method, dt: f64) -> Result<ForwardTrajectory> {
        solve_forward(
            &method.tableau(),
            &self.system,
            &self.initial.positions,
            0.0,
            self.config.t_end,
            dt,
        )
    }

    /// Final state of the sixth-order reference at `dt / refine` for the given target.
    pub fn reference_final(&self, mode: EstimateMode, dt: f64, refine: usize) -> Result<Vec<f64>> {
        let tab = Method::Rk6.tableau();
        let h = dt / refine as f64;
        let x0 = &self.initial.positions;
        let traj = match mode {
            EstimateMode::RegularizedExact => {
                solve_forward(&tab, &self.system, x0, 0.0, self.config.t_end, h)?
            }
            EstimateMode::SingularTarget => solve_forward(
                &tab,
                &SingularRhs(&self.system),
                x0,
                0.0,
                self.config.t_end,
                h,
            )?,
        };
        Ok(traj.final_state().to_vec())
    }

    /// Positions and per-marker `|S_ε − S_0|` at the configured snapshot times.
    pub fn simulate(&self) -> Result<SimulationOutput> {
        let c = &self.config;
        if c.t_end == 0.0 {
            let snap = self.snapshot(0.0, &self.initial.positions)?;
            return Ok(SimulationOutput {
                trajectory: None,
                snapshots: vec![snap],
            });
        }
        let traj = self.forward()?;
        let rec = nefem_reconstruct(&traj, &self.system, c.estimate.degree)?;
        let snapshots = c
            .snapshots
            .iter()
            .map(|&t| self.snapshot(t, &rec.eval(t)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(SimulationOutput {
            trajectory: Some(traj),
            snapshots,
        })
    }

    fn snapshot(&self, t: f64, x: &[f64]) -> Result<Snapshot> {
        let d = self.system.dim();
        let gap = self.system.regularization_difference(x)?;
        Ok(Snapshot {
            time: t,
            dim: d,
            positions: x.to_vec(),
            regularization_error: gap.chunks(d).map(norm).collect(),
        })
    }

    /// Forward solve, reconstruction, one adjoint per seed, and the breakdowns.
    pub fn estimate(&self) -> Result<EstimateReport> {
        let c = &self.config;
        let traj = self.forward()?;
        if traj.num_intervals() == 0 {
            return Err(MrsError::config(
                "t_end",
                "estimation needs at least one step",
            ));
        }
        let rec = nefem_reconstruct(&traj, &self.system, c.estimate.degree)?;
        let reference = self.reference_final(c.estimate.mode, c.dt, c.estimate.reference_refine)?;
        let seeds = (0..c.seeds)
            .into_par_iter()
            .map(|i| self.estimate_seed(&traj, &rec, &reference, i))
            .collect::<Result<Vec<_>>>()?;
        Ok(EstimateReport {
            trajectory: traj,
            reference,
            seeds,
        })
    }

    fn estimate_seed(
        &self,
        traj: &ForwardTrajectory,
        rec: &PiecewisePolynomial,
        reference: &[f64],
        i: usize,
    ) -> Result<SeedEstimate> {
        let c = &self.config;
        let cond = c.terminal(i);
        let zt = make_terminal(&cond, self.system.kernel.dim, traj.final_state())?;
        let z = solve_adjoint(rec, &self.system, &zt, c.adjoint.refine)?;
        let breakdown = estimate(&self.system, traj, rec, &z, c.estimate_options())?;
        let est = breakdown.total_estimate();
        let truth = true_pairing(reference, traj.final_state(), &zt);
        Ok(SeedEstimate {
            seed: cond.seed(),
            breakdown,
            estimate: est,
            true_pairing: truth,
            effectivity: effectivity(est, truth),
        })
    }

    /// Endpoint errors against a sixth-order reference over `levels` halvings of `dt`.
    pub fn converge(&self, method: Method, levels: usize) -> Result<ConvergenceTable> {
        if levels < 2 {
            return Err(MrsError::config(
                "levels",
                format!("need at least 2 levels, got {levels}"),
            ));
        }
        let c = &self.config;
        let finest = c.dt / (1u64 << (levels - 1)) as f64;
        let reference = self.reference_final(
            EstimateMode::RegularizedExact,
            finest,
            c.estimate.reference_refine,
        )?;
        let rows = (0..levels)
            .into_par_iter()
            .map(|k| {
                let dt = c.dt / (1u64 << k) as f64;
                let traj = self.forward_with(method, dt)?;
                Ok((dt, norm(&sub(traj.final_state(), &reference))))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = Vec::with_capacity(levels);
        for k in 0..levels {
            let rho = (k > 0).then(|| convergence_factor(rows[k - 1].1, rows[k].1));
            out.push(ConvergenceRow {
                dt: rows[k].0,
                error: rows[k].1,
                rho,
            });
        }
        Ok(ConvergenceTable { method, rows: out })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub dim: usize,
    pub positions: Vec<f64>,
    /// `|S_ε[x] − S_0[x]|` at each marker.
    pub regularization_error: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub trajectory: Option<ForwardTrajectory>,
    pub snapshots: Vec<Snapshot>,
}

#[derive(Debug, Clone)]
pub struct SeedEstimate {
    pub seed: u64,
    pub breakdown: ErrorBreakdown,
    pub estimate: f64,
    pub true_pairing: f64,
    pub effectivity: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct EstimateReport {
    pub trajectory: ForwardTrajectory,
    pub reference: Vec<f64>,
    pub seeds: Vec<SeedEstimate>,
}

impl EstimateReport {
    /// The seed with the largest `|estimate|`.
    pub fn worst(&self) -> &SeedEstimate {
        self.seeds
            .iter()
            .max_by(|a, b| a.estimate.abs().total_cmp(&b.estimate.abs()))
            .expect("at least one seed")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub dt: f64,
    pub error: f64,
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub method: Method,
    pub rows: Vec<ConvergenceRow>,
}
