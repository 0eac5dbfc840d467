//! Command-line driver: argument parsing, run orchestration and file output.
//!
//! Every file written here is a pure function of the resolved config, so two
//! runs with the same inputs produce identical bytes. Only the manifest's
//! timing block varies between runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{MrsError, Result};
use crate::estimators::{Components, ErrorBreakdown, EstimateMode};
use crate::integrate::{ForwardTrajectory, Method};
use crate::scenarios::{ConvergenceTable, Scenario, ScenarioConfig, ScenarioKind, SeedEstimate};

/// First line of every breakdown CSV. Bump when columns change.
pub const CSV_SCHEMA: &str = "# mrs-breakdown v1";

pub const CSV_COLUMNS: [&str; 11] = [
    "t_n", "t_n1", "E_R", "E_E", "E_Q", "E_Re", "cum_R", "cum_E", "cum_Q", "cum_Re", "z_norm",
];

#[derive(Debug, Parser)]
#[command(
    name = "mrs",
    version,
    about = "Regularized Stokeslet runs with adjoint error estimates"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Forward solve; writes the nodal trajectory and snapshot files.
    Simulate(RunArgs),
    /// Forward and adjoint solves; writes per-seed error breakdowns.
    Estimate(RunArgs),
    /// Endpoint errors over successive halvings of dt.
    Converge {
        #[command(flatten)]
        run: RunArgs,
        /// Number of dt levels (at least 2).
        #[arg(long, default_value_t = 4)]
        levels: usize,
    },
    /// Four-panel SVG of a breakdown CSV.
    Plot {
        csv: PathBuf,
        /// Output file; defaults to the CSV path with an `.svg` extension.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Plot log10 of magnitudes.
        #[arg(long)]
        log: bool,
    },
    /// Built-in scenarios.
    Scenario {
        #[command(subcommand)]
        action: ScenarioAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum ScenarioAction {
    List,
    /// Print the built-in config as TOML.
    Show {
        name: ScenarioKind,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML config, or a manifest.json from an earlier run.
    #[arg(long, conflicts_with = "scenario")]
    pub config: Option<PathBuf>,
    /// Built-in scenario used when no config file is given.
    #[arg(long)]
    pub scenario: Option<ScenarioKind>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Final time; snapshot times beyond it are dropped.
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub markers: Option<usize>,
    #[arg(long, value_enum)]
    pub order: Option<Method>,
    #[arg(long, value_enum)]
    pub mode: Option<EstimateMode>,
    #[arg(long = "quad-nodes")]
    pub quad_nodes: Option<usize>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

impl RunArgs {
    /// Config file (or built-in) with command-line overrides applied and validated.
    pub fn resolve(&self) -> Result<ScenarioConfig> {
        let mut cfg = match (&self.config, self.scenario) {
            (Some(p), _) if p.extension().is_some_and(|e| e == "json") => {
                RunManifest::read(p)?.config
            }
            (Some(p), _) => ScenarioConfig::from_file(p)?,
            (None, Some(k)) => ScenarioConfig::builtin(k),
            (None, None) => ScenarioConfig::builtin(ScenarioKind::CircleRelax),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.seeds {
            cfg.seeds = v;
        }
        if let Some(v) = self.dt {
            cfg.dt = v;
        }
        if let Some(v) = self.t_end {
            cfg.set_t_end(v);
        }
        if let Some(v) = self.eps {
            cfg.epsilon = v;
        }
        if let Some(v) = self.markers {
            cfg.markers = v;
        }
        if let Some(v) = self.order {
            cfg.method = v;
        }
        if let Some(v) = self.mode {
            cfg.estimate.mode = v;
        }
        if let Some(v) = self.quad_nodes {
            cfg.estimate.quad_nodes = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: ScenarioConfig,
    /// Adjoint seeds actually used, in file order.
    pub seeds: Vec<u64>,
    pub rng: String,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
    /// Paths relative to the output directory.
    pub outputs: Vec<String>,
}

impl RunManifest {
    fn new(command: &str, config: &ScenarioConfig) -> Self {
        RunManifest {
            tool: "mrs".into(),
            version: version_string(),
            command: command.into(),
            config: config.clone(),
            seeds: Vec::new(),
            rng: "ChaCha8".into(),
            timings: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| MrsError::io(path, e))?;
        let m: RunManifest = serde_json::from_str(&text).map_err(|e| {
            MrsError::config(
                format!("{}: line {}", path.display(), e.line()),
                e.to_string(),
            )
        })?;
        m.config.validate()?;
        Ok(m)
    }

    fn write(&self, dir: &Path) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(self)?;
        let path = dir.join("manifest.json");
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

pub fn version_string() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}

/// Runs a parsed command, printing a short report to stdout.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = args.resolve()?;
            let m = cmd_simulate(&cfg, &args.out)?;
            println!(
                "wrote {} files to {}",
                m.outputs.len() + 1,
                args.out.display()
            );
        }
        Command::Estimate(args) => {
            let cfg = args.resolve()?;
            let (m, report) = cmd_estimate(&cfg, &args.out)?;
            println!(
                "{:>8} {:>14} {:>14} {:>12}",
                "seed", "estimate", "true", "effectivity"
            );
            for s in &report {
                let eff = s
                    .effectivity
                    .map_or("undefined".to_string(), |e| format!("{e:.6}"));
                println!(
                    "{:>8} {:>14.6e} {:>14.6e} {:>12}",
                    s.seed, s.estimate, s.true_pairing, eff
                );
            }
            println!(
                "wrote {} files to {}",
                m.outputs.len() + 1,
                args.out.display()
            );
        }
        Command::Converge { run, levels } => {
            let cfg = run.resolve()?;
            let methods: Vec<Method> = match run.order {
                Some(m) => vec![m],
                None => vec![Method::Heun, Method::Rk4, Method::Rk6],
            };
            let (_, tables) = cmd_converge(&cfg, &methods, levels, &run.out)?;
            print!("{}", format_convergence(&tables));
        }
        Command::Plot { csv, out, log } => {
            let out = out.unwrap_or_else(|| csv.with_extension("svg"));
            cmd_plot(&csv, &out, log)?;
            println!("wrote {}", out.display());
        }
        Command::Scenario { action } => match action {
            ScenarioAction::List => {
                for k in ScenarioKind::ALL {
                    println!("{:<14} {}", k.name(), k.description());
                }
            }
            ScenarioAction::Show { name } => {
                print!("{}", ScenarioConfig::builtin(name).to_toml_string())
            }
        },
    }
    Ok(())
}

pub fn cmd_simulate(cfg: &ScenarioConfig, out: &Path) -> Result<RunManifest> {
    create_dir(out)?;
    let mut m = RunManifest::new("simulate", cfg);
    let t0 = Instant::now();
    let sc = Scenario::build(cfg)?;
    let sim = sc.simulate()?;
    m.timings
        .insert("simulate".into(), t0.elapsed().as_secs_f64());
    if let Some(traj) = &sim.trajectory {
        write_output(
            out,
            "trajectory.csv",
            trajectory_csv(traj, sc.system.dim())?.as_bytes(),
            &mut m,
        )?;
    }
    for (i, s) in sim.snapshots.iter().enumerate() {
        let name = format!("snapshot_{i:03}.json");
        write_output(
            out,
            &name,
            serde_json::to_string_pretty(s)?.as_bytes(),
            &mut m,
        )?;
    }
    m.write(out)?;
    Ok(m)
}

pub fn cmd_estimate(cfg: &ScenarioConfig, out: &Path) -> Result<(RunManifest, Vec<SeedEstimate>)> {
    create_dir(out)?;
    let mut m = RunManifest::new("estimate", cfg);
    let t0 = Instant::now();
    let report = Scenario::build(cfg)?.estimate()?;
    m.timings
        .insert("estimate".into(), t0.elapsed().as_secs_f64());
    for s in &report.seeds {
        m.seeds.push(s.seed);
        let name = format!("breakdown_seed{}.csv", s.seed);
        write_output(out, &name, breakdown_csv(&s.breakdown)?.as_bytes(), &mut m)?;
    }
    let all: Vec<&ErrorBreakdown> = report.seeds.iter().map(|s| &s.breakdown).collect();
    write_output(
        out,
        "breakdown_max.csv",
        max_over_seeds_csv(&all)?.as_bytes(),
        &mut m,
    )?;
    let summary: Vec<SeedSummary> = report.seeds.iter().map(SeedSummary::from).collect();
    write_output(
        out,
        "estimate.json",
        serde_json::to_string_pretty(&summary)?.as_bytes(),
        &mut m,
    )?;
    m.write(out)?;
    Ok((m, report.seeds))
}

pub fn cmd_converge(
    cfg: &ScenarioConfig,
    methods: &[Method],
    levels: usize,
    out: &Path,
) -> Result<(RunManifest, Vec<ConvergenceTable>)> {
    if levels < 2 {
        return Err(MrsError::config(
            "levels",
            format!("convergence needs at least 2 levels, got {levels}"),
        ));
    }
    create_dir(out)?;
    let mut m = RunManifest::new("converge", cfg);
    let sc = Scenario::build(cfg)?;
    let mut tables = Vec::with_capacity(methods.len());
    for &method in methods {
        let t0 = Instant::now();
        tables.push(sc.converge(method, levels)?);
        m.timings.insert(
            format!("converge_{}", method.name()),
            t0.elapsed().as_secs_f64(),
        );
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "dt", "error", "rho"])?;
    for t in &tables {
        for r in &t.rows {
            let rho = r.rho.map_or(String::new(), fmt_f64);
            w.write_record([
                t.method.name().to_string(),
                fmt_f64(r.dt),
                fmt_f64(r.error),
                rho,
            ])?;
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| MrsError::io("converge.csv", e.into_error()))?;
    write_output(out, "converge.csv", &bytes, &mut m)?;
    m.write(out)?;
    Ok((m, tables))
}

pub fn format_convergence(tables: &[ConvergenceTable]) -> String {
    let mut s = String::new();
    for t in tables {
        let _ = writeln!(s, "{}", t.method.name());
        let _ = writeln!(s, "{:>12} {:>14} {:>8}", "dt", "error", "rho");
        for r in &t.rows {
            let rho = r.rho.map_or("-".to_string(), |v| format!("{v:.3}"));
            let _ = writeln!(s, "{:>12.6e} {:>14.6e} {:>8}", r.dt, r.error, rho);
        }
    }
    s
}

#[derive(Debug, Clone, Serialize)]
struct SeedSummary {
    seed: u64,
    estimate: f64,
    true_pairing: f64,
    effectivity: Option<f64>,
    residual: f64,
    explicit: f64,
    quadrature: f64,
    regularization: f64,
}

impl From<&SeedEstimate> for SeedSummary {
    fn from(s: &SeedEstimate) -> Self {
        let t = s.breakdown.totals();
        SeedSummary {
            seed: s.seed,
            estimate: s.estimate,
            true_pairing: s.true_pairing,
            effectivity: s.effectivity,
            residual: t.residual,
            explicit: t.explicit,
            quadrature: t.quadrature,
            regularization: t.regularization,
        }
    }
}

/// Shortest round-trip representation; fixed so CSV bytes never depend on locale.
fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

fn row_values(b: &ErrorBreakdown, n: usize) -> [f64; 11] {
    let i: &Components = &b.intervals[n];
    let c: &Components = &b.cumulative[n];
    [
        b.times[n],
        b.times[n + 1],
        i.residual,
        i.explicit,
        i.quadrature,
        i.regularization,
        c.residual,
        c.explicit,
        c.quadrature,
        c.regularization,
        b.z_norms[n],
    ]
}

fn rows_to_csv(rows: impl Iterator<Item = [f64; 11]>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for r in rows {
        w.write_record(r.iter().map(|&v| fmt_f64(v)))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| MrsError::io("breakdown.csv", e.into_error()))?;
    let body = String::from_utf8(bytes).expect("csv output is ascii");
    Ok(format!("{CSV_SCHEMA}\n{body}"))
}

/// One row per interval, header preceded by the schema line.
pub fn breakdown_csv(b: &ErrorBreakdown) -> Result<String> {
    rows_to_csv((0..b.intervals.len()).map(|n| row_values(b, n)))
}

/// Per interval and column, the seed value of largest magnitude (sign kept).
pub fn max_over_seeds_csv(all: &[&ErrorBreakdown]) -> Result<String> {
    let first = all.first().ok_or_else(|| {
        MrsError::InvalidArgument("max over seeds needs at least one seed".into())
    })?;
    let rows = (0..first.intervals.len()).map(|n| {
        let mut row = row_values(first, n);
        for b in &all[1..] {
            let r = row_values(b, n);
            for k in 2..row.len() {
                if r[k].abs() > row[k].abs() {
                    row[k] = r[k];
                }
            }
        }
        row
    });
    rows_to_csv(rows)
}

/// Rows of a breakdown CSV, checking the schema line and column set.
pub fn read_breakdown_csv(path: &Path) -> Result<Vec<[f64; 11]>> {
    let text = fs::read_to_string(path).map_err(|e| MrsError::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(l) if l.trim() == CSV_SCHEMA => {}
        Some(l) => {
            return Err(MrsError::InvalidArgument(format!(
                "{}: expected schema line `{CSV_SCHEMA}`, found `{l}`",
                path.display()
            )))
        }
        None => {
            return Err(MrsError::InvalidArgument(format!(
                "{}: empty csv",
                path.display()
            )))
        }
    }
    let body = &text[text.find('\n').map_or(text.len(), |i| i + 1)..];
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_COLUMNS {
        return Err(MrsError::InvalidArgument(format!(
            "{}: unexpected columns {header:?}",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let mut row = [0.0; 11];
        for (k, f) in rec.iter().enumerate() {
            row[k] = f.parse().map_err(|_| {
                MrsError::InvalidArgument(format!(
                    "{}: bad number `{f}` in column {}",
                    path.display(),
                    CSV_COLUMNS[k]
                ))
            })?;
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(MrsError::InvalidArgument(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    Ok(rows)
}

pub fn cmd_plot(csv: &Path, out: &Path, log: bool) -> Result<()> {
    let rows = read_breakdown_csv(csv)?;
    let svg = render_svg(&rows, log);
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_atomic(out, svg.as_bytes())
}

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 260.0;
const MARGIN: f64 = 56.0;

/// 2×2 grid: cumulative |E_E|, |E_R|, |E_Re| against `t_{n+1}` and ‖z‖ against `t_n`.
pub fn render_svg(rows: &[[f64; 11]], log: bool) -> String {
    let cumulative_abs = |col: usize| -> Vec<(f64, f64)> {
        let mut acc = 0.0;
        rows.iter()
            .map(|r| {
                acc += r[col].abs();
                (r[1], acc)
            })
            .collect()
    };
    let panels = [
        ("Explicit error", cumulative_abs(3)),
        ("Residual error", cumulative_abs(2)),
        ("Regularization error", cumulative_abs(5)),
        (
            "Adjoint norm |z|",
            rows.iter().map(|r| (r[0], r[10])).collect(),
        ),
    ];
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="11">"#,
        2.0 * PANEL_W,
        2.0 * PANEL_H
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (k, (title, pts)) in panels.iter().enumerate() {
        let ox = (k % 2) as f64 * PANEL_W;
        let oy = (k / 2) as f64 * PANEL_H;
        panel(&mut s, ox, oy, title, pts, log);
    }
    s.push_str("</svg>\n");
    s
}

fn panel(s: &mut String, ox: f64, oy: f64, title: &str, pts: &[(f64, f64)], log: bool) {
    let pts: Vec<(f64, f64)> = if log {
        pts.iter()
            .filter(|p| p.1.abs() > 0.0)
            .map(|&(t, v)| (t, v.abs().log10()))
            .collect()
    } else {
        pts.to_vec()
    };
    let (x0, y0) = (ox + MARGIN, oy + 24.0);
    let (w, h) = (PANEL_W - MARGIN - 16.0, PANEL_H - 24.0 - 36.0);
    let label = if log {
        format!("{title} (log10)")
    } else {
        title.to_string()
    };
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-weight="bold">{label}</text>"#,
        x0,
        oy + 16.0
    );
    let _ = writeln!(
        s,
        r#"<rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="black"/>"#
    );
    if pts.is_empty() {
        return;
    }
    let (tmin, tmax) = extent(pts.iter().map(|p| p.0));
    let (vmin, vmax) = extent(pts.iter().map(|p| p.1));
    let sx = |t: f64| x0 + (t - tmin) / (tmax - tmin) * w;
    let sy = |v: f64| y0 + h - (v - vmin) / (vmax - vmin) * h;
    let mut poly = String::new();
    for &(t, v) in &pts {
        let _ = write!(poly, "{:.2},{:.2} ", sx(t), sy(v));
    }
    let _ = writeln!(
        s,
        r#"<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{}"/>"#,
        poly.trim_end()
    );
    let _ = writeln!(
        s,
        r#"<text x="{x0}" y="{}">{tmin:.3}</text>"#,
        y0 + h + 14.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end">{tmax:.3}</text>"#,
        x0 + w,
        y0 + h + 14.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">t</text>"#,
        x0 + w / 2.0,
        y0 + h + 28.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end">{vmax:.3e}</text>"#,
        x0 - 4.0,
        y0 + 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end">{vmin:.3e}</text>"#,
        x0 - 4.0,
        y0 + h
    );
}

/// Min and max, widened when degenerate so scaling never divides by zero.
fn extent(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if hi > lo {
        (lo, hi)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.5 };
        (lo - pad, hi + pad)
    }
}

fn trajectory_csv(traj: &ForwardTrajectory, dim: usize) -> Result<String> {
    let len = traj.nodes.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    for k in 0..len / dim {
        for c in ["x", "y", "z"].iter().take(dim) {
            header.push(format!("{c}{k}"));
        }
    }
    w.write_record(&header)?;
    for (t, x) in traj.times.iter().zip(&traj.nodes) {
        w.write_record(std::iter::once(fmt_f64(*t)).chain(x.iter().map(|&v| fmt_f64(v))))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| MrsError::io("trajectory.csv", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is ascii"))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| MrsError::io(dir, e))
}

fn write_output(dir: &Path, name: &str, bytes: &[u8], m: &mut RunManifest) -> Result<()> {
    write_atomic(&dir.join(name), bytes)?;
    m.outputs.push(name.to_string());
    Ok(())
}

/// Write to a sibling temp file, then rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| MrsError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| MrsError::io(&tmp, e))?;
    f.sync_all().map_err(|e| MrsError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| MrsError::io(path, e))
}
