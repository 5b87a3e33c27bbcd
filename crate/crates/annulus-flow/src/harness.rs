//! Experiment harness: TOML experiment configs, the `run` / `sweep` /
//! `verify` commands, and all file outputs (series CSV, snapshot files, flux
//! and residual tables, JSON reports).
//!
//! Every command is deterministic: runs are seed-free, output payloads carry
//! no timestamps (wall-clock data goes to a `metadata.txt` sidecar only), and
//! a concurrent sweep merges its members in viscosity order, so repeated or
//! parallel invocations produce byte-identical artifacts.

use crate::diagnostics::{
    self, EnergyReport, SlipReport, SweepReport, TestFunction, WeakResidual,
};
use crate::elliptic::{self, BoundaryKind, PoissonSolverPlan};
use crate::error::FlowError;
use crate::evolution::{self, AdvectionScheme, TimeIntegratorConfig, Trajectory};
use crate::field::ScalarField;
use crate::geometry::{BoundaryData, BoundarySide, Grid};
use crate::velocity::{FlowState, FlowSystem};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_ACCEPTANCE: i32 = 4;

/// Maps an error to the command exit code: setup and configuration problems
/// exit 2, solver aborts exit 3.
pub fn exit_code_for(err: &FlowError) -> i32 {
    match err {
        FlowError::InvalidGrid(_)
        | FlowError::Config(_)
        | FlowError::IncompatibleFlux { .. }
        | FlowError::Io(_)
        | FlowError::UnsupportedTestFunction(_)
        | FlowError::DimensionMismatch { .. } => EXIT_CONFIG,
        _ => EXIT_SOLVER,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub r_inner: f64,
    pub r_outer: f64,
    pub n_r: usize,
    pub n_theta: usize,
    #[serde(default)]
    pub stretching: f64,
}

impl GridConfig {
    pub fn build(&self) -> Result<Arc<Grid>, FlowError> {
        Ok(Arc::new(Grid::build(
            self.r_inner,
            self.r_outer,
            self.n_r,
            self.n_theta,
            self.stretching,
        )?))
    }
}

/// Initial vorticity catalog (closed-form, seed-free).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    Zero,
    /// `amplitude * cos(pi (r - r_mid) / gap)`.
    RadialCosine { amplitude: f64 },
    /// `cos^2` bump in radius, uniform in angle.
    AnnularBump {
        amplitude: f64,
        center: f64,
        width: f64,
    },
    /// Radial bump modulated by `cos(m theta)`.
    ModulatedBump {
        amplitude: f64,
        center: f64,
        width: f64,
        mode: usize,
    },
}

impl InitialCondition {
    pub fn build(&self, grid: &Arc<Grid>) -> ScalarField {
        let mid = 0.5 * (grid.r_inner() + grid.r_outer());
        let gap = grid.r_outer() - grid.r_inner();
        match *self {
            InitialCondition::Zero => ScalarField::zeros(grid.clone()),
            InitialCondition::RadialCosine { amplitude } => {
                ScalarField::from_fn(grid.clone(), |r, _| {
                    amplitude * (std::f64::consts::PI * (r - mid) / gap).cos()
                })
            }
            InitialCondition::AnnularBump {
                amplitude,
                center,
                width,
            } => ScalarField::from_fn(grid.clone(), |r, _| {
                amplitude * cos2_window(r - center, width)
            }),
            InitialCondition::ModulatedBump {
                amplitude,
                center,
                width,
                mode,
            } => ScalarField::from_fn(grid.clone(), |r, th| {
                amplitude * cos2_window(r - center, width) * (mode as f64 * th).cos()
            }),
        }
    }
}

fn cos2_window(x: f64, w: f64) -> f64 {
    if x.abs() >= w {
        0.0
    } else {
        let c = (0.5 * std::f64::consts::PI * x / w).cos();
        c * c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Viscosity list; a sweep needs at least three values ending at zero.
    pub viscosities: Vec<f64>,
    pub snapshot_times: Vec<f64>,
    /// Initial circulation coefficients (one per hole of the domain).
    #[serde(default = "default_circulation")]
    pub initial_circulation: Vec<f64>,
}

fn default_circulation() -> Vec<f64> {
    vec![0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    #[serde(default = "default_p_exponents")]
    pub p_exponents: Vec<f64>,
    /// Band widths of the boundary-layer flux table.
    #[serde(default)]
    pub sigmas: Vec<f64>,
    /// Norm exponent of the energy inequality right-hand side.
    #[serde(default = "default_energy_p")]
    pub energy_p: f64,
    #[serde(default)]
    pub test_functions: Vec<TestFunction>,
}

fn default_p_exponents() -> Vec<f64> {
    vec![2.0, 4.0, 8.0]
}

fn default_energy_p() -> f64 {
    4.0
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            p_exponents: default_p_exponents(),
            sigmas: Vec::new(),
            energy_p: default_energy_p(),
            test_functions: Vec::new(),
        }
    }
}

/// One experiment: grid, data, initial state, integrator, schedule and
/// diagnostic selection. Fully determines every artifact byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub grid: GridConfig,
    pub boundary: BoundaryData,
    pub initial: InitialCondition,
    pub integrator: TimeIntegratorConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, FlowError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| FlowError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, FlowError> {
        let text = fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization")
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        if self.run.viscosities.is_empty() {
            return Err(FlowError::Config("viscosity list is empty".into()));
        }
        for &nu in &self.run.viscosities {
            if !(nu >= 0.0) || !nu.is_finite() {
                return Err(FlowError::Config(format!("invalid viscosity {nu}")));
            }
        }
        let mut sorted = self.run.viscosities.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        sorted.dedup();
        if sorted.len() != self.run.viscosities.len() {
            return Err(FlowError::Config("duplicate viscosity in list".into()));
        }
        if self.run.snapshot_times.is_empty() {
            return Err(FlowError::Config("snapshot schedule is empty".into()));
        }
        Ok(())
    }

    /// Viscosities in strictly decreasing order (sweep member order).
    pub fn sorted_viscosities(&self) -> Vec<f64> {
        let mut v = self.run.viscosities.clone();
        v.sort_by(|a, b| b.partial_cmp(a).unwrap());
        v
    }

    pub fn build_system(&self) -> Result<Arc<FlowSystem>, FlowError> {
        let grid = self.grid.build()?;
        Ok(Arc::new(FlowSystem::new(grid, self.boundary.clone())?))
    }
}

// --- artifact writers ---------------------------------------------------

fn create(path: &Path) -> Result<BufWriter<fs::File>, FlowError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(fs::File::create(path)?))
}

/// Writes the per-step scalar series as CSV.
pub fn write_series_csv(path: &Path, traj: &Trajectory) -> Result<(), FlowError> {
    let mut w = create(path)?;
    let mut header = vec!["t".to_string(), "dt".to_string()];
    for p in &traj.lp_exponents {
        header.push(format!("lp{p}"));
    }
    let n_lambda = traj.series.first().map_or(0, |r| r.lambda.len());
    for k in 0..n_lambda {
        header.push(format!("lambda{k}"));
    }
    header.extend(
        ["kinetic_energy", "dissipation", "omega_min", "omega_max", "bound_lo", "bound_hi"]
            .map(String::from),
    );
    writeln!(w, "{}", header.join(","))?;
    for row in &traj.series {
        let mut cells = vec![row.t.to_string(), row.dt.to_string()];
        cells.extend(row.lp_norms.iter().map(|v| v.to_string()));
        cells.extend(row.lambda.iter().map(|v| v.to_string()));
        cells.push(row.kinetic_energy.to_string());
        cells.push(row.dissipation.to_string());
        cells.push(row.omega_min.to_string());
        cells.push(row.omega_max.to_string());
        cells.push(row.bound_lo.to_string());
        cells.push(row.bound_hi.to_string());
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotHeader {
    field: String,
    t: f64,
    n_r: usize,
    n_theta: usize,
    lambda: Vec<f64>,
}

/// Writes one snapshot: a JSON header line followed by the raw little-endian
/// 64-bit floats of the vorticity in radial-major order.
pub fn write_snapshot(path: &Path, state: &FlowState) -> Result<(), FlowError> {
    let (nr, nt) = state.omega.grid().node_shape();
    let header = SnapshotHeader {
        field: "omega".into(),
        t: state.t,
        n_r: nr - 1,
        n_theta: nt,
        lambda: state.lambda.clone(),
    };
    let mut w = create(path)?;
    writeln!(w, "{}", serde_json::to_string(&header).expect("header"))?;
    for v in state.omega.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a snapshot back; the grid must match the header shape.
pub fn read_snapshot(path: &Path, grid: &Arc<Grid>) -> Result<(f64, Vec<f64>, ScalarField), FlowError> {
    let mut file = fs::File::open(path)?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    let split = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| FlowError::Config("snapshot missing header line".into()))?;
    let header: SnapshotHeader = serde_json::from_slice(&bytes[..split])
        .map_err(|e| FlowError::Config(format!("snapshot header: {e}")))?;
    let (nr, nt) = grid.node_shape();
    if header.n_r + 1 != nr || header.n_theta != nt {
        return Err(FlowError::DimensionMismatch {
            expected: (nr, nt),
            found: (header.n_r + 1, header.n_theta),
        });
    }
    let body = &bytes[split + 1..];
    if body.len() != nr * nt * 8 {
        return Err(FlowError::Config(format!(
            "snapshot payload holds {} bytes, expected {}",
            body.len(),
            nr * nt * 8
        )));
    }
    let data: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header.t, header.lambda, ScalarField::from_data(grid.clone(), data)?))
}

/// Companion plain-text export for small grids.
pub fn write_snapshot_csv(path: &Path, state: &FlowState) -> Result<(), FlowError> {
    let g = state.omega.grid().clone();
    let mut w = create(path)?;
    writeln!(w, "r,theta,omega")?;
    for i in 0..=g.n_r() {
        for j in 0..g.n_theta() {
            writeln!(w, "{},{},{}", g.radius(i), g.theta(j), state.omega.at(i, j))?;
        }
    }
    Ok(())
}

pub fn write_flux_csv(path: &Path, cells: &[diagnostics::FluxCell]) -> Result<(), FlowError> {
    let mut w = create(path)?;
    writeln!(w, "sigma,nu,value")?;
    for c in cells {
        writeln!(w, "{},{},{}", c.sigma, c.nu, c.value)?;
    }
    Ok(())
}

pub fn write_weak_csv(path: &Path, rows: &[WeakResidual]) -> Result<(), FlowError> {
    let mut w = create(path)?;
    writeln!(w, "psi,transport,initial,inflow,residual")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.psi, r.transport, r.initial, r.inflow, r.magnitude
        )?;
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FlowError> {
    let mut w = create(path)?;
    let text = serde_json::to_string_pretty(value).expect("report serialization");
    writeln!(w, "{text}")?;
    Ok(())
}

/// Wall-clock sidecar; the only artifact allowed to differ between runs.
fn write_metadata(dir: &Path, label: &str) -> Result<(), FlowError> {
    let mut w = create(&dir.join("metadata.txt"))?;
    let now = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    writeln!(w, "command: {label}")?;
    writeln!(w, "unix_time: {now}")?;
    Ok(())
}

// --- run ----------------------------------------------------------------

/// Verdicts and diagnostics of a single run, serialized to `report.json`.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub name: String,
    pub nu: f64,
    pub steps: usize,
    pub lambda_residual_max: f64,
    pub max_principle_ok: bool,
    pub energy: EnergyReport,
    /// Slip-identity defect of the final state (meaningful for `nu > 0`).
    pub slip: SlipReport,
    pub weak_residuals: Vec<WeakResidual>,
}

fn simulate(
    system: &Arc<FlowSystem>,
    config: &ExperimentConfig,
    nu: f64,
) -> Result<Trajectory, FlowError> {
    let omega0 = config.initial.build(system.grid());
    evolution::run(
        system,
        omega0,
        config.run.initial_circulation.clone(),
        nu,
        config.integrator,
        &config.run.snapshot_times,
        &config.diagnostics.p_exponents,
    )
}

fn max_principle_holds(traj: &Trajectory) -> bool {
    traj.series
        .iter()
        .all(|r| r.omega_min >= r.bound_lo - 1e-12 && r.omega_max <= r.bound_hi + 1e-12)
}

/// Executes the first-viscosity member of the config and writes series,
/// snapshots and the diagnostic report. Returns the report; acceptance
/// verdicts inside decide the exit code.
pub fn cmd_run(config: &ExperimentConfig, out_dir: &Path) -> Result<RunReport, FlowError> {
    let system = config.build_system()?;
    let nu = config.sorted_viscosities()[0];
    let traj = simulate(&system, config, nu)?;

    write_series_csv(&out_dir.join("series.csv"), &traj)?;
    for (k, state) in traj.snapshots.iter().enumerate() {
        let path = out_dir.join(format!("snapshots/omega_{k:03}.fld"));
        write_snapshot(&path, state)?;
        let (nr, nt) = system.grid().node_shape();
        if nr * nt <= 4096 {
            write_snapshot_csv(&out_dir.join(format!("snapshots/omega_{k:03}.csv")), state)?;
        }
    }

    let p = config.diagnostics.energy_p;
    let c = 1.2 * diagnostics::energy_constant(&system, &traj, nu, p)?;
    let energy = diagnostics::energy_check(&system, &traj, nu, p, c)?;
    let slip = diagnostics::slip_identity_check(&system, traj.snapshots.last().unwrap());
    let mut weak_residuals = Vec::new();
    if nu == 0.0 {
        for psi in &config.diagnostics.test_functions {
            weak_residuals.push(diagnostics::weak_euler_residual(&system, &traj, psi)?);
        }
    }

    let max_principle_relevant =
        nu == 0.0 && config.integrator.scheme == AdvectionScheme::Upwind1;
    let report = RunReport {
        name: config.name.clone(),
        nu,
        steps: traj.series.len() - 1,
        lambda_residual_max: traj.lambda_residual_max,
        max_principle_ok: !max_principle_relevant || max_principle_holds(&traj),
        energy,
        slip,
        weak_residuals,
    };
    write_json(&out_dir.join("report.json"), &report)?;
    write_metadata(out_dir, "run")?;
    Ok(report)
}

// --- sweep --------------------------------------------------------------

/// Runs every viscosity member (concurrently in waves of `parallel`) and
/// returns the trajectories in decreasing-viscosity order.
pub fn run_sweep_members(
    system: &Arc<FlowSystem>,
    config: &ExperimentConfig,
    parallel: usize,
) -> Result<Vec<(f64, Trajectory)>, FlowError> {
    let nus = config.sorted_viscosities();
    let parallel = parallel.max(1);
    let mut results: Vec<Option<Result<Trajectory, FlowError>>> =
        (0..nus.len()).map(|_| None).collect();
    for wave in (0..nus.len()).collect::<Vec<_>>().chunks(parallel) {
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for &idx in wave {
                let nu = nus[idx];
                let system = system.clone();
                let config = config.clone();
                handles.push((idx, scope.spawn(move || simulate(&system, &config, nu))));
            }
            for (idx, handle) in handles {
                results[idx] = Some(handle.join().expect("sweep member panicked"));
            }
        });
    }
    let mut out = Vec::with_capacity(nus.len());
    for (nu, res) in nus.into_iter().zip(results) {
        out.push((nu, res.expect("member scheduled")?));
    }
    Ok(out)
}

/// Sweep verdicts beyond the comparison report.
#[derive(Debug, Serialize)]
pub struct SweepVerdicts {
    pub energy_constant: f64,
    pub energy_ok_all_members: bool,
    pub lp_ratio_ok: bool,
    pub interior_decreasing: bool,
}

pub fn cmd_sweep(
    config: &ExperimentConfig,
    out_dir: &Path,
    parallel: usize,
) -> Result<(SweepReport, SweepVerdicts), FlowError> {
    if config.run.viscosities.len() < 3 {
        return Err(FlowError::Config(
            "sweep needs at least three viscosities".into(),
        ));
    }
    if !config.run.viscosities.contains(&0.0) {
        return Err(FlowError::Config("sweep needs the nu = 0 member".into()));
    }
    let system = config.build_system()?;
    let runs = run_sweep_members(&system, config, parallel)?;

    for (k, (_, traj)) in runs.iter().enumerate() {
        write_series_csv(&out_dir.join(format!("series_m{k}.csv")), traj)?;
        for (s, state) in traj.snapshots.iter().enumerate() {
            write_snapshot(
                &out_dir.join(format!("snapshots/m{k}_omega_{s:03}.fld")),
                state,
            )?;
        }
    }

    let report = diagnostics::sweep_compare(
        &system,
        &runs,
        &config.diagnostics.test_functions,
        &config.diagnostics.sigmas,
    )?;
    write_flux_csv(&out_dir.join("flux_table.csv"), &report.flux_table)?;
    write_weak_csv(&out_dir.join("weak_residual.csv"), &report.weak_residuals)?;
    {
        let mut w = create(&out_dir.join("convergence.csv"))?;
        writeln!(w, "nu,t,sup_diff,interior_sup_diff")?;
        for (m, (nu, _)) in runs.iter().take(runs.len() - 1).enumerate() {
            for (k, t) in report.snapshot_times.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{},{}",
                    nu, t, report.sup_diff[m][k], report.interior_sup_diff[m][k]
                )?;
            }
        }
    }

    // one calibrated constant per family: taken from the most viscous member
    let p = config.diagnostics.energy_p;
    let (nu0, base) = &runs[0];
    let c = 1.2 * diagnostics::energy_constant(&system, base, *nu0, p)?;
    let mut energy_ok = true;
    for (nu, traj) in &runs {
        if !diagnostics::energy_check(&system, traj, *nu, p, c)?.satisfied {
            energy_ok = false;
        }
    }
    let verdicts = SweepVerdicts {
        energy_constant: c,
        energy_ok_all_members: energy_ok,
        lp_ratio_ok: report.lp_ratio_ok,
        interior_decreasing: report.interior_decreasing,
    };
    write_json(&out_dir.join("report.json"), &report)?;
    write_json(&out_dir.join("verdicts.json"), &verdicts)?;
    write_metadata(out_dir, "sweep")?;
    Ok((report, verdicts))
}

// --- verify -------------------------------------------------------------

type VerifyResult = Result<String, String>;

fn order_with_floor(errors: &[f64]) -> f64 {
    // round-off floor: a level already at machine precision counts as clean
    let mut worst = f64::INFINITY;
    for pair in errors.windows(2) {
        if pair[1] < 1e-12 {
            continue;
        }
        worst = worst.min((pair[0] / pair[1]).log2());
    }
    if worst.is_infinite() {
        10.0
    } else {
        worst
    }
}

fn verify_poisson_mms(n_r: usize, n_t: usize, radial_only: bool) -> VerifyResult {
    let mut errors = Vec::new();
    for level in [4, 2, 1] {
        let g = Arc::new(
            Grid::build(1.0, 2.0, n_r / level, n_t / level, 0.0)
                .map_err(|e| e.to_string())?,
        );
        let plan = PoissonSolverPlan::new(g.clone(), BoundaryKind::Dirichlet);
        let (exact, f): (ScalarField, ScalarField) = if radial_only {
            (
                ScalarField::from_fn(g.clone(), |r, _| r * r),
                ScalarField::from_fn(g.clone(), |_, _| -4.0),
            )
        } else {
            (
                ScalarField::from_fn(g.clone(), |r, th| r * th.sin()),
                ScalarField::zeros(g.clone()),
            )
        };
        let nt = g.n_theta();
        let gi: Vec<f64> = (0..nt).map(|j| exact.at(0, j)).collect();
        let go: Vec<f64> = (0..nt).map(|j| exact.at(g.n_r(), j)).collect();
        let h = plan.solve_dirichlet(&f, &gi, &go).map_err(|e| e.to_string())?;
        errors.push(h.max_diff(&exact));
    }
    let order = order_with_floor(&errors);
    let last = *errors.last().unwrap();
    if order >= 1.9 && last <= 5e-5 {
        Ok(format!("order {order:.2}, max error {last:.2e}"))
    } else {
        Err(format!("order {order:.2}, max error {last:.2e}"))
    }
}

fn verify_gram(n_r: usize, n_t: usize) -> VerifyResult {
    let g = Arc::new(Grid::build(1.0, 2.0, n_r, n_t, 0.0).map_err(|e| e.to_string())?);
    let sys = FlowSystem::new(g, BoundaryData::default()).map_err(|e| e.to_string())?;
    let a11 = sys.basis.gram()[0][0];
    let exact = 2.0 * std::f64::consts::PI / 2.0_f64.ln();
    let rel = (a11 - exact).abs() / exact;
    if rel <= 1e-3 && sys.basis.min_eigenvalue() > 0.0 {
        Ok(format!("A11 {a11:.6} vs {exact:.6} (rel {rel:.2e})"))
    } else {
        Err(format!("A11 {a11:.6} vs {exact:.6} (rel {rel:.2e})"))
    }
}

fn verify_harmonic_basis(n_r: usize, n_t: usize) -> VerifyResult {
    let g = Arc::new(Grid::build(1.0, 2.0, n_r, n_t, 0.0).map_err(|e| e.to_string())?);
    let plan = PoissonSolverPlan::new(g.clone(), BoundaryKind::Dirichlet);
    let (h1, _) = elliptic::harmonic_basis(&plan).map_err(|e| e.to_string())?;
    let exact = ScalarField::from_fn(g, |r, _| (2.0 / r).ln() / 2.0_f64.ln());
    let err = h1.max_diff(&exact);
    if err < 1e-5 {
        Ok(format!("max error {err:.2e}"))
    } else {
        Err(format!("max error {err:.2e}"))
    }
}

fn verify_potential_flow(n_r: usize, n_t: usize) -> VerifyResult {
    let g = Arc::new(Grid::build(1.0, 2.0, n_r, n_t, 0.0).map_err(|e| e.to_string())?);
    let bd = BoundaryData::radial_source(2.0 * std::f64::consts::PI, 1.0, 2.0);
    let sys = FlowSystem::new(g.clone(), bd).map_err(|e| e.to_string())?;
    let state = sys
        .make_state(0.0, ScalarField::zeros(g.clone()), vec![0.0])
        .map_err(|e| e.to_string())?;
    let mut err = 0.0_f64;
    for i in 0..=g.n_r() {
        let r = g.radius(i);
        err = err.max((state.velocity.r(i, 0) - 1.0 / r).abs());
    }
    if err < 5e-4 {
        Ok(format!("max error {err:.2e}"))
    } else {
        Err(format!("max error {err:.2e}"))
    }
}

fn verify_rotation_flow(n_r: usize, n_t: usize) -> VerifyResult {
    let g = Arc::new(Grid::build(1.0, 2.0, n_r, n_t, 0.0).map_err(|e| e.to_string())?);
    let sys = FlowSystem::new(g.clone(), BoundaryData::default()).map_err(|e| e.to_string())?;
    let state = sys
        .make_state(0.0, ScalarField::zeros(g.clone()), vec![1.0])
        .map_err(|e| e.to_string())?;
    let ln2 = 2.0_f64.ln();
    let mut err = 0.0_f64;
    for i in 0..=g.n_r() {
        let r = g.radius(i);
        err = err.max((state.velocity.theta(i, 0) - 1.0 / (r * ln2)).abs());
    }
    if err < 1e-3 {
        Ok(format!("max error {err:.2e}"))
    } else {
        Err(format!("max error {err:.2e}"))
    }
}

fn verify_slip_analytic(n_r: usize, n_t: usize) -> VerifyResult {
    let g = Arc::new(Grid::build(1.0, 2.0, n_r, n_t, 0.0).map_err(|e| e.to_string())?);
    let nt = g.n_theta();
    let sys = FlowSystem::new(g.clone(), BoundaryData::default()).map_err(|e| e.to_string())?;
    // rotation c / r: closed-form strain on both circles, sampled in the
    // slip-identity orientation
    let c = 1.0;
    let vals = |side: BoundarySide| {
        let r = g.wall_radius(side);
        let sgn = -g.tangent_sign(side);
        (side, vec![-2.0 * c / (r * r); nt], vec![sgn * c / r; nt])
    };
    let rot = diagnostics::slip_identity_from_values(
        &sys,
        &[vals(BoundarySide::Inner), vals(BoundarySide::Outer)],
        0.0,
    );
    // radial source: strain and slip both vanish on the circles
    let bd = BoundaryData::radial_source(2.0 * std::f64::consts::PI, 1.0, 2.0);
    let sys2 = FlowSystem::new(g.clone(), bd).map_err(|e| e.to_string())?;
    let src = diagnostics::slip_identity_from_values(
        &sys2,
        &[
            (BoundarySide::Inner, vec![0.0; nt], vec![0.0; nt]),
            (BoundarySide::Outer, vec![0.0; nt], vec![0.0; nt]),
        ],
        0.0,
    );
    let worst = rot.max_defect.max(src.max_defect);
    if worst <= 1e-8 {
        Ok(format!("max defect {worst:.2e}"))
    } else {
        Err(format!("max defect {worst:.2e}"))
    }
}

fn verify_transport_front() -> VerifyResult {
    use crate::geometry::TraceProfile;
    let bd = BoundaryData {
        b_inner: TraceProfile::constant(1.0),
        ..BoundaryData::radial_source(2.0 * std::f64::consts::PI, 1.0, 2.0)
    };
    let g = Arc::new(Grid::build(1.0, 2.0, 256, 8, 0.0).map_err(|e| e.to_string())?);
    let sys = Arc::new(FlowSystem::new(g.clone(), bd).map_err(|e| e.to_string())?);
    let cfg = TimeIntegratorConfig {
        dt_max: 1e-2,
        t_end: 0.5,
        ..TimeIntegratorConfig::default()
    };
    let traj = evolution::run(
        &sys,
        ScalarField::zeros(g.clone()),
        vec![0.0],
        0.0,
        cfg,
        &[0.5],
        &[2.0],
    )
    .map_err(|e| e.to_string())?;
    let state = traj.snapshots.last().unwrap();
    let mut front = g.radius(0);
    for i in 0..=g.n_r() {
        if state.omega.at(i, 0) > 0.5 {
            front = g.radius(i);
        }
    }
    let exact = 2.0_f64.sqrt();
    let cell = (g.r_outer() - g.r_inner()) / g.n_r() as f64;
    let off = (front - exact).abs() / cell;
    if off <= 3.0 {
        Ok(format!("front at {front:.4} vs {exact:.4} ({off:.1} cells)"))
    } else {
        Err(format!("front at {front:.4} vs {exact:.4} ({off:.1} cells)"))
    }
}

/// Names of the oracle suite items in execution order.
pub fn verify_item_names() -> Vec<&'static str> {
    vec![
        "poisson-mms-radial",
        "poisson-mms-angular",
        "gram-matrix",
        "harmonic-basis",
        "potential-flow-reconstruction",
        "rotation-flow-reconstruction",
        "slip-identity-analytic",
        "transport-front",
    ]
}

/// Runs the built-in oracle suite on the given base grid, printing one
/// pass/fail line per item. Returns true when every item passes.
pub fn cmd_verify(n_r: usize, n_t: usize) -> bool {
    let items: Vec<(&str, Box<dyn Fn() -> VerifyResult>)> = vec![
        (
            "poisson-mms-radial",
            Box::new(move || verify_poisson_mms(n_r, n_t, true)),
        ),
        (
            "poisson-mms-angular",
            Box::new(move || verify_poisson_mms(n_r, n_t, false)),
        ),
        ("gram-matrix", Box::new(move || verify_gram(n_r, n_t))),
        (
            "harmonic-basis",
            Box::new(move || verify_harmonic_basis(n_r, n_t)),
        ),
        (
            "potential-flow-reconstruction",
            Box::new(move || verify_potential_flow(n_r, n_t)),
        ),
        (
            "rotation-flow-reconstruction",
            Box::new(move || verify_rotation_flow(n_r, n_t)),
        ),
        (
            "slip-identity-analytic",
            Box::new(move || verify_slip_analytic(n_r, n_t)),
        ),
        ("transport-front", Box::new(verify_transport_front)),
    ];
    let mut all_ok = true;
    for (name, item) in items {
        match item() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                all_ok = false;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    all_ok
}

// --- command line -------------------------------------------------------

fn parse_grid_flag(s: &str) -> Result<(usize, usize), FlowError> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| FlowError::Config(format!("grid flag must look like 128x256, got {s}")))?;
    let n_r = a
        .parse()
        .map_err(|_| FlowError::Config(format!("bad radial count {a}")))?;
    let n_t = b
        .parse()
        .map_err(|_| FlowError::Config(format!("bad angular count {b}")))?;
    Ok((n_r, n_t))
}

struct CliArgs {
    command: String,
    config: Option<PathBuf>,
    out: PathBuf,
    parallel: usize,
    grid: Option<(usize, usize)>,
    list: bool,
}

fn parse_args(args: &[String]) -> Result<CliArgs, FlowError> {
    let command = args
        .first()
        .cloned()
        .ok_or_else(|| FlowError::Config(USAGE.into()))?;
    let mut out = CliArgs {
        command,
        config: None,
        out: PathBuf::from("out"),
        parallel: 4,
        grid: None,
        list: false,
    };
    let mut it = args[1..].iter();
    while let Some(flag) = it.next() {
        match flag.as_str() {
            "--config" => {
                let v = it.next().ok_or_else(|| FlowError::Config("--config needs a path".into()))?;
                out.config = Some(PathBuf::from(v));
            }
            "--out" => {
                let v = it.next().ok_or_else(|| FlowError::Config("--out needs a directory".into()))?;
                out.out = PathBuf::from(v);
            }
            "--parallel" => {
                let v = it.next().ok_or_else(|| FlowError::Config("--parallel needs a count".into()))?;
                out.parallel = v
                    .parse()
                    .map_err(|_| FlowError::Config(format!("bad parallelism {v}")))?;
            }
            "--grid" => {
                let v = it.next().ok_or_else(|| FlowError::Config("--grid needs RxT".into()))?;
                out.grid = Some(parse_grid_flag(v)?);
            }
            "--list" => out.list = true,
            other => {
                return Err(FlowError::Config(format!("unknown flag {other}\n{USAGE}")));
            }
        }
    }
    Ok(out)
}

const USAGE: &str = "usage:
  annulus-flow run    --config PATH [--out DIR]
  annulus-flow sweep  --config PATH [--out DIR] [--parallel N]
  annulus-flow verify [--grid RxT] [--list]";

/// Entry point shared by the binary; returns the process exit code.
pub fn cli_main(args: &[String]) -> i32 {
    let cli = match parse_args(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    match cli.command.as_str() {
        "run" => {
            let Some(path) = cli.config else {
                eprintln!("run needs --config\n{USAGE}");
                return EXIT_CONFIG;
            };
            let config = match ExperimentConfig::load(&path) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return EXIT_CONFIG;
                }
            };
            match cmd_run(&config, &cli.out) {
                Ok(report) => {
                    println!(
                        "{}: nu = {}, {} steps, circulation drift {:.2e}",
                        report.name, report.nu, report.steps, report.lambda_residual_max
                    );
                    println!(
                        "energy inequality: {} (C = {:.3})",
                        if report.energy.satisfied { "ok" } else { "VIOLATED" },
                        report.energy.constant
                    );
                    println!(
                        "slip defect: max {:.3e}, L2 {:.3e}",
                        report.slip.max_defect, report.slip.l2_defect
                    );
                    if report.max_principle_ok && report.energy.satisfied {
                        EXIT_OK
                    } else {
                        EXIT_ACCEPTANCE
                    }
                }
                Err(e) => {
                    eprintln!("{e}");
                    exit_code_for(&e)
                }
            }
        }
        "sweep" => {
            let Some(path) = cli.config else {
                eprintln!("sweep needs --config\n{USAGE}");
                return EXIT_CONFIG;
            };
            let config = match ExperimentConfig::load(&path) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return EXIT_CONFIG;
                }
            };
            match cmd_sweep(&config, &cli.out, cli.parallel) {
                Ok((report, verdicts)) => {
                    println!(
                        "{}: {} members, Lp ratio {:.3}, interior decreasing: {}",
                        config.name,
                        report.nu_list.len(),
                        report.lp_ratio,
                        report.interior_decreasing
                    );
                    if verdicts.energy_ok_all_members
                        && verdicts.lp_ratio_ok
                        && verdicts.interior_decreasing
                    {
                        EXIT_OK
                    } else {
                        EXIT_ACCEPTANCE
                    }
                }
                Err(e) => {
                    eprintln!("{e}");
                    exit_code_for(&e)
                }
            }
        }
        "verify" => {
            if cli.list {
                for name in verify_item_names() {
                    println!("{name}");
                }
                return EXIT_OK;
            }
            let (n_r, n_t) = cli.grid.unwrap_or((128, 256));
            if cmd_verify(n_r, n_t) {
                EXIT_OK
            } else {
                EXIT_ACCEPTANCE
            }
        }
        other => {
            eprintln!("unknown command {other}\n{USAGE}");
            EXIT_CONFIG
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TraceProfile;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            name: "unit".into(),
            grid: GridConfig {
                r_inner: 1.0,
                r_outer: 2.0,
                n_r: 16,
                n_theta: 16,
                stretching: 0.0,
            },
            boundary: BoundaryData::default(),
            initial: InitialCondition::AnnularBump {
                amplitude: 1.0,
                center: 1.5,
                width: 0.3,
            },
            integrator: TimeIntegratorConfig {
                cfl_advective: 0.4,
                dt_max: 0.01,
                scheme: AdvectionScheme::Upwind1,
                t_end: 0.1,
            },
            run: RunConfig {
                viscosities: vec![1e-2, 1e-3, 0.0],
                snapshot_times: vec![0.0, 0.05, 0.1],
                initial_circulation: vec![0.0],
            },
            diagnostics: DiagnosticsConfig::default(),
        }
    }

    #[test]
    fn config_round_trips_losslessly() {
        let cfg = small_config();
        let text = cfg.to_toml();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn config_rejects_duplicate_viscosities() {
        let mut cfg = small_config();
        cfg.run.viscosities = vec![1e-2, 1e-2, 0.0];
        match cfg.validate() {
            Err(FlowError::Config(msg)) => assert!(msg.contains("duplicate")),
            other => panic!("expected duplicate rejection, got {other:?}"),
        }
    }

    #[test]
    fn config_parse_error_is_reported() {
        match ExperimentConfig::from_toml("name = 3") {
            Err(FlowError::Config(_)) => {}
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn snapshot_round_trip_is_exact() {
        let cfg = small_config();
        let sys = cfg.build_system().unwrap();
        let omega = cfg.initial.build(sys.grid());
        let state = sys.make_state(0.25, omega, vec![0.5]).unwrap();
        let dir = std::env::temp_dir().join("annulus-flow-snapshot-test");
        let path = dir.join("omega.fld");
        write_snapshot(&path, &state).unwrap();
        let (t, lambda, field) = read_snapshot(&path, sys.grid()).unwrap();
        assert_eq!(t, 0.25);
        assert_eq!(lambda, vec![0.5]);
        assert_eq!(field.data(), state.omega.data());
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn grid_flag_parses() {
        assert_eq!(parse_grid_flag("128x256").unwrap(), (128, 256));
        assert!(parse_grid_flag("128").is_err());
    }

    #[test]
    fn parallel_and_sequential_sweeps_agree() {
        let cfg = small_config();
        let sys = cfg.build_system().unwrap();
        let seq = run_sweep_members(&sys, &cfg, 1).unwrap();
        let par = run_sweep_members(&sys, &cfg, 3).unwrap();
        for ((nu_a, ta), (nu_b, tb)) in seq.iter().zip(par.iter()) {
            assert_eq!(nu_a, nu_b);
            for (sa, sb) in ta.snapshots.iter().zip(tb.snapshots.iter()) {
                assert_eq!(sa.omega.data(), sb.omega.data());
                assert_eq!(sa.lambda, sb.lambda);
            }
        }
    }

    #[test]
    fn exit_codes_map_error_classes() {
        assert_eq!(exit_code_for(&FlowError::Config("x".into())), EXIT_CONFIG);
        assert_eq!(
            exit_code_for(&FlowError::IncompatibleFlux {
                residual: 1.0,
                tolerance: 0.0
            }),
            EXIT_CONFIG
        );
        assert_eq!(
            exit_code_for(&FlowError::NonFinite {
                context: "x".into(),
                step: 3
            }),
            EXIT_SOLVER
        );
    }

    #[test]
    fn ramped_profile_round_trips() {
        let mut cfg = small_config();
        cfg.boundary.b_inner = TraceProfile {
            constant: 1.0,
            ramp: Some(crate::geometry::Ramp { t_on: 0.05 }),
            ..TraceProfile::default()
        };
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, back);
    }
}
