//! Time integration of the vorticity transport `d_t omega + div(v omega) =
//! nu Lap(omega)` coupled to the circulation ODE.
//!
//! The advection stage is a conservative donor-cell update on the node
//! control volumes. Face volume fluxes of the solenoidal part are corner
//! differences of the stream function `psi = h_nu + sum lambda_k h_k`, so the
//! discrete face divergence telescopes to zero exactly; the potential part
//! uses the same conservative face differences of `h_a` as the Neumann
//! operator. Wall fluxes are prescribed directly from the permeability trace
//! `a`. The cell update subtracts the (round-off level) net face divergence,
//! which makes each first-order step a convex combination of old values under
//! the CFL bound and keeps `int omega dx` conserved to round-off for `a = 0`.
//!
//! Diffusion is an implicit per-mode Crank-Nicolson step with `omega = b` on
//! both walls; `nu = 0` skips it and instead overrides the inflow wall nodes
//! with `b`, leaving outflow and impermeable wall cells to the conservative
//! update itself.

use crate::error::FlowError;
use crate::field::ScalarField;
use crate::field::VectorField;
use crate::geometry::{BoundarySide, Grid, RegionLabel};
use crate::velocity::{FlowState, FlowSystem};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Spatial order of the advection stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdvectionScheme {
    /// First-order donor cell with forward Euler in time; satisfies the
    /// discrete maximum principle for `nu = 0`.
    #[default]
    Upwind1,
    /// Minmod-limited linear reconstruction with two-stage Heun in time.
    Upwind2Minmod,
}

/// Time integrator parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeIntegratorConfig {
    /// Fraction of the minimal cell transit time used as `dt`.
    #[serde(default = "default_cfl")]
    pub cfl_advective: f64,
    pub dt_max: f64,
    #[serde(default)]
    pub scheme: AdvectionScheme,
    pub t_end: f64,
}

fn default_cfl() -> f64 {
    0.4
}

impl Default for TimeIntegratorConfig {
    fn default() -> Self {
        Self {
            cfl_advective: 0.4,
            dt_max: 0.05,
            scheme: AdvectionScheme::Upwind1,
            t_end: 1.0,
        }
    }
}

impl TimeIntegratorConfig {
    fn validate(&self) -> Result<(), FlowError> {
        if !(self.cfl_advective > 0.0 && self.cfl_advective <= 1.0) {
            return Err(FlowError::Config(format!(
                "cfl_advective must lie in (0, 1], got {}",
                self.cfl_advective
            )));
        }
        if !(self.dt_max > 0.0) {
            return Err(FlowError::Config(format!(
                "dt_max must be positive, got {}",
                self.dt_max
            )));
        }
        if !(self.t_end > 0.0) {
            return Err(FlowError::Config(format!(
                "t_end must be positive, got {}",
                self.t_end
            )));
        }
        Ok(())
    }
}

/// Signed face volume fluxes on the dual (node-centered) cells.
///
/// `radial[i][j]` is the flux through the face at `r_{i+1/2}` of cell column
/// `j`, positive outward (+r); `angular[i][j]` the flux through the face
/// between `(i, j)` and `(i, j+1)`, positive toward +theta; the wall vectors
/// hold the outflux through the boundary faces of the wall half cells.
struct FaceFluxes {
    radial: Vec<f64>,
    angular: Vec<f64>,
    inner_wall: Vec<f64>,
    outer_wall: Vec<f64>,
    n_theta: usize,
}

impl FaceFluxes {
    #[inline]
    fn radial_at(&self, i: usize, j: usize) -> f64 {
        self.radial[i * self.n_theta + j]
    }

    #[inline]
    fn angular_at(&self, i: usize, j: usize) -> f64 {
        self.angular[i * self.n_theta + j]
    }
}

fn face_fluxes(system: &FlowSystem, state: &FlowState) -> FaceFluxes {
    let g = system.grid().clone();
    let (nr, nt) = g.node_shape();
    let n = nr - 1;
    let dth = g.d_theta();

    // stream function of the solenoidal part
    let mut psi = state.h_nu.clone();
    for (k, lk) in state.lambda.iter().enumerate() {
        psi.axpy(*lk, system.basis.h(k));
    }
    // corner values psi(r_{i+1/2}, theta_{j+1/2})
    let mut corner = vec![0.0; n * nt];
    for i in 0..n {
        for j in 0..nt {
            let jp = (j + 1) % nt;
            corner[i * nt + j] = 0.25
                * (psi.at(i, j) + psi.at(i + 1, j) + psi.at(i, jp) + psi.at(i + 1, jp));
        }
    }
    // wall corner values (psi is constant on each wall ring)
    let wall_corner = |ring: usize, j: usize| {
        let jp = (j + 1) % nt;
        0.5 * (psi.at(ring, j) + psi.at(ring, jp))
    };

    let h_a = &state.h_a;
    let mut radial = vec![0.0; n * nt];
    for i in 0..n {
        let pot = g.face_radius(i) / g.face_spacing(i) * dth;
        for j in 0..nt {
            let jm = (j + nt - 1) % nt;
            let sol = corner[i * nt + j] - corner[i * nt + jm];
            radial[i * nt + j] = sol + pot * (h_a.at(i + 1, j) - h_a.at(i, j));
        }
    }

    let mut angular = vec![0.0; nr * nt];
    for i in 0..nr {
        let pot = g.node_width(i) / (g.radius(i) * dth);
        for j in 0..nt {
            let jp = (j + 1) % nt;
            let sol = if i == 0 {
                wall_corner(0, j) - corner[j]
            } else if i == n {
                corner[(n - 1) * nt + j] - wall_corner(n, j)
            } else {
                corner[(i - 1) * nt + j] - corner[i * nt + j]
            };
            angular[i * nt + j] = sol + pot * (h_a.at(i, jp) - h_a.at(i, j));
        }
    }

    let a_inner = system.a_trace(BoundarySide::Inner, state.t);
    let a_outer = system.a_trace(BoundarySide::Outer, state.t);
    let inner_wall = a_inner
        .iter()
        .map(|a| a * g.arc_weight(BoundarySide::Inner))
        .collect();
    let outer_wall = a_outer
        .iter()
        .map(|a| a * g.arc_weight(BoundarySide::Outer))
        .collect();

    FaceFluxes {
        radial,
        angular,
        inner_wall,
        outer_wall,
        n_theta: nt,
    }
}

/// Minimal cell transit time `min V / sum(outgoing fluxes)` over all cells.
fn transit_time(g: &Grid, fluxes: &FaceFluxes) -> f64 {
    let (nr, nt) = g.node_shape();
    let n = nr - 1;
    let mut t_min = f64::INFINITY;
    for i in 0..nr {
        let vol = g.volume_weight(i);
        for j in 0..nt {
            let jm = (j + nt - 1) % nt;
            let mut out = fluxes.angular_at(i, j).max(0.0) + (-fluxes.angular_at(i, jm)).max(0.0);
            if i < n {
                out += fluxes.radial_at(i, j).max(0.0);
            }
            if i > 0 {
                out += (-fluxes.radial_at(i - 1, j)).max(0.0);
            }
            if i == 0 {
                out += fluxes.inner_wall[j].max(0.0);
            }
            if i == n {
                out += fluxes.outer_wall[j].max(0.0);
            }
            if out > 0.0 {
                t_min = t_min.min(vol / out);
            }
        }
    }
    t_min
}

#[inline]
fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// Upwind face values of the transported quantity, one per flux entry.
struct FaceValues {
    radial: Vec<f64>,
    angular: Vec<f64>,
    inner_wall: Vec<f64>,
    outer_wall: Vec<f64>,
}

fn upwind_face_values(
    omega: &ScalarField,
    fluxes: &FaceFluxes,
    b_inner: &[f64],
    b_outer: &[f64],
    scheme: AdvectionScheme,
) -> FaceValues {
    let g = omega.grid().clone();
    let (nr, nt) = g.node_shape();
    let n = nr - 1;
    let dth = g.d_theta();

    // limited slopes (zero for the first-order scheme and at the walls)
    let second = scheme == AdvectionScheme::Upwind2Minmod;
    let mut slope_r = vec![0.0; nr * nt];
    let mut slope_t = vec![0.0; nr * nt];
    if second {
        for i in 1..n {
            let dm = g.radius(i) - g.radius(i - 1);
            let dp = g.radius(i + 1) - g.radius(i);
            for j in 0..nt {
                slope_r[i * nt + j] = minmod(
                    (omega.at(i, j) - omega.at(i - 1, j)) / dm,
                    (omega.at(i + 1, j) - omega.at(i, j)) / dp,
                );
            }
        }
        for i in 0..nr {
            for j in 0..nt {
                let jp = (j + 1) % nt;
                let jm = (j + nt - 1) % nt;
                slope_t[i * nt + j] = minmod(
                    (omega.at(i, j) - omega.at(i, jm)) / dth,
                    (omega.at(i, jp) - omega.at(i, j)) / dth,
                );
            }
        }
    }

    let mut radial = vec![0.0; n * nt];
    for i in 0..n {
        let rf = g.face_radius(i);
        for j in 0..nt {
            let phi = fluxes.radial_at(i, j);
            radial[i * nt + j] = if phi >= 0.0 {
                omega.at(i, j) + slope_r[i * nt + j] * (rf - g.radius(i))
            } else {
                omega.at(i + 1, j) + slope_r[(i + 1) * nt + j] * (rf - g.radius(i + 1))
            };
        }
    }
    let mut angular = vec![0.0; nr * nt];
    for i in 0..nr {
        for j in 0..nt {
            let jp = (j + 1) % nt;
            let phi = fluxes.angular_at(i, j);
            angular[i * nt + j] = if phi >= 0.0 {
                omega.at(i, j) + slope_t[i * nt + j] * 0.5 * dth
            } else {
                omega.at(i, jp) - slope_t[i * nt + jp] * 0.5 * dth
            };
        }
    }
    let inner_wall = (0..nt)
        .map(|j| {
            if fluxes.inner_wall[j] >= 0.0 {
                omega.at(0, j)
            } else {
                b_inner[j]
            }
        })
        .collect();
    let outer_wall = (0..nt)
        .map(|j| {
            if fluxes.outer_wall[j] >= 0.0 {
                omega.at(n, j)
            } else {
                b_outer[j]
            }
        })
        .collect();

    FaceValues {
        radial,
        angular,
        inner_wall,
        outer_wall,
    }
}

/// One conservative advection update `omega - dt/V (sum phi w_up - omega
/// sum phi)`; the divergence correction makes the first-order step a convex
/// combination of old values under the CFL bound.
fn advect(
    omega: &ScalarField,
    fluxes: &FaceFluxes,
    b_inner: &[f64],
    b_outer: &[f64],
    dt: f64,
    scheme: AdvectionScheme,
) -> ScalarField {
    let g = omega.grid().clone();
    let (nr, nt) = g.node_shape();
    let n = nr - 1;
    let fv = upwind_face_values(omega, fluxes, b_inner, b_outer, scheme);
    let mut out = omega.clone();
    for i in 0..nr {
        let inv_vol = 1.0 / g.volume_weight(i);
        for j in 0..nt {
            let jm = (j + nt - 1) % nt;
            let mut flux_sum = 0.0;
            let mut div = 0.0;
            let mut add = |phi: f64, w: f64| {
                flux_sum += phi * w;
                div += phi;
            };
            add(fluxes.angular_at(i, j), fv.angular[i * nt + j]);
            add(-fluxes.angular_at(i, jm), fv.angular[i * nt + jm]);
            if i < n {
                add(fluxes.radial_at(i, j), fv.radial[i * nt + j]);
            }
            if i > 0 {
                add(-fluxes.radial_at(i - 1, j), fv.radial[(i - 1) * nt + j]);
            }
            if i == 0 {
                add(fluxes.inner_wall[j], fv.inner_wall[j]);
            }
            if i == n {
                add(fluxes.outer_wall[j], fv.outer_wall[j]);
            }
            let w = omega.at(i, j);
            out.set(i, j, w - dt * inv_vol * (flux_sum - w * div));
        }
    }
    out
}

/// Sequential time integrator for one `(system, nu)` pair.
///
/// Owns the per-trajectory memory: the step counter, the backward-difference
/// field of the circulation ODE, and the running maximum-principle window
/// (initial values joined with the inflow boundary data seen so far).
pub struct Integrator {
    system: Arc<FlowSystem>,
    nu: f64,
    cfg: TimeIntegratorConfig,
    step_index: usize,
    prev_transport: Option<(VectorField, f64)>,
    bound_lo: f64,
    bound_hi: f64,
}

impl Integrator {
    pub fn new(
        system: Arc<FlowSystem>,
        nu: f64,
        cfg: TimeIntegratorConfig,
        initial: &FlowState,
    ) -> Result<Self, FlowError> {
        cfg.validate()?;
        if !(nu >= 0.0) {
            return Err(FlowError::Config(format!("viscosity must be >= 0, got {nu}")));
        }
        let (lo, hi) = initial.omega.min_max();
        let mut s = Self {
            system,
            nu,
            cfg,
            step_index: 0,
            prev_transport: None,
            bound_lo: lo,
            bound_hi: hi,
        };
        s.extend_bounds(initial.t);
        Ok(s)
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    /// Running window of the discrete maximum principle: initial min/max of
    /// `omega` joined with the inflow-boundary values of `b` seen so far.
    pub fn bound_window(&self) -> (f64, f64) {
        (self.bound_lo, self.bound_hi)
    }

    fn extend_bounds(&mut self, t: f64) {
        let g = self.system.grid();
        let classes = self.system.boundary.classify(g, t);
        for side in [BoundarySide::Inner, BoundarySide::Outer] {
            let b = self.system.b_trace(side, t);
            for (j, label) in classes.labels(side).iter().enumerate() {
                if *label == RegionLabel::Inflow {
                    self.bound_lo = self.bound_lo.min(b[j]);
                    self.bound_hi = self.bound_hi.max(b[j]);
                }
            }
        }
    }

    /// Residual of the circulation system `A lambda = f` recomputed from the
    /// current fields (drift diagnostic for the ODE path).
    pub fn consistency_residual(&self, state: &FlowState) -> Result<f64, FlowError> {
        let f = self
            .system
            .circulation_rhs(&state.velocity, &state.omega, state.t)?;
        Ok(self.system.basis.residual(&state.lambda, &f))
    }

    /// Advances one step, capped so the new time does not exceed `t_cap`.
    pub fn step(&mut self, state: &FlowState, t_cap: f64) -> Result<FlowState, FlowError> {
        let g = self.system.grid().clone();
        let fluxes = face_fluxes(&self.system, state);
        let dt_cfl = (self.cfg.cfl_advective * transit_time(&g, &fluxes)).min(self.cfg.dt_max);
        if dt_cfl < 1e-13 * self.cfg.t_end.max(1.0) {
            return Err(FlowError::CflUnderflow {
                step: self.step_index,
                dt: dt_cfl,
            });
        }
        let dt = dt_cfl.min(t_cap - state.t);
        if !(dt > 0.0) {
            return Err(FlowError::CflUnderflow {
                step: self.step_index,
                dt,
            });
        }
        let t_new = state.t + dt;

        let b_in_old = self.system.b_trace(BoundarySide::Inner, state.t);
        let b_out_old = self.system.b_trace(BoundarySide::Outer, state.t);
        let b_in_new = self.system.b_trace(BoundarySide::Inner, t_new);
        let b_out_new = self.system.b_trace(BoundarySide::Outer, t_new);

        let prev = self
            .prev_transport
            .as_ref()
            .map(|(f, d)| (f, *d));
        let (mut omega_new, lambda_new) = match self.cfg.scheme {
            AdvectionScheme::Upwind1 => {
                let dl = self.system.lambda_rhs(state, self.nu, prev);
                let omega = advect(
                    &state.omega,
                    &fluxes,
                    &b_in_old,
                    &b_out_old,
                    dt,
                    AdvectionScheme::Upwind1,
                );
                let lambda = state
                    .lambda
                    .iter()
                    .zip(dl.iter())
                    .map(|(l, d)| l + dt * d)
                    .collect();
                (omega, lambda)
            }
            AdvectionScheme::Upwind2Minmod => {
                let dl0 = self.system.lambda_rhs(state, self.nu, prev);
                let mut omega_star = advect(
                    &state.omega,
                    &fluxes,
                    &b_in_old,
                    &b_out_old,
                    dt,
                    AdvectionScheme::Upwind2Minmod,
                );
                let lambda_star: Vec<f64> = state
                    .lambda
                    .iter()
                    .zip(dl0.iter())
                    .map(|(l, d)| l + dt * d)
                    .collect();
                if self.nu == 0.0 {
                    self.override_inflow(&mut omega_star, t_new, &b_in_new, &b_out_new);
                }
                let mid = self.system.make_state(t_new, omega_star, lambda_star)?;
                let fluxes_mid = face_fluxes(&self.system, &mid);
                let dl1 = self
                    .system
                    .lambda_rhs(&mid, self.nu, Some((&state.u_nu_plus_a, dt)));
                let mut omega = advect(
                    &mid.omega,
                    &fluxes_mid,
                    &b_in_new,
                    &b_out_new,
                    dt,
                    AdvectionScheme::Upwind2Minmod,
                );
                omega.axpy(1.0, &state.omega);
                omega.scale(0.5);
                let lambda = state
                    .lambda
                    .iter()
                    .zip(dl0.iter().zip(dl1.iter()))
                    .map(|(l, (d0, d1))| l + 0.5 * dt * (d0 + d1))
                    .collect();
                (omega, lambda)
            }
        };

        if self.nu > 0.0 {
            omega_new = self.system.dirichlet_plan().diffusion_step(
                &omega_new,
                self.nu * dt,
                &b_in_new,
                &b_out_new,
            )?;
        } else {
            self.override_inflow(&mut omega_new, t_new, &b_in_new, &b_out_new);
        }

        if !omega_new.is_finite() {
            return Err(FlowError::NonFinite {
                context: "vorticity".into(),
                step: self.step_index,
            });
        }
        self.extend_bounds(t_new);
        self.prev_transport = Some((state.u_nu_plus_a.clone(), dt));
        self.step_index += 1;
        self.system.make_state(t_new, omega_new, lambda_new)
    }

    /// Euler-mode boundary treatment: inflow wall nodes take the prescribed
    /// vorticity trace; outflow and impermeable wall cells keep the value of
    /// the conservative half-cell update.
    fn override_inflow(
        &self,
        omega: &mut ScalarField,
        t: f64,
        b_inner: &[f64],
        b_outer: &[f64],
    ) {
        let g = self.system.grid();
        let classes = self.system.boundary.classify(g, t);
        let n = g.n_r();
        for (j, label) in classes.inner.iter().enumerate() {
            if *label == RegionLabel::Inflow {
                omega.set(0, j, b_inner[j]);
            }
        }
        for (j, label) in classes.outer.iter().enumerate() {
            if *label == RegionLabel::Inflow {
                omega.set(n, j, b_outer[j]);
            }
        }
    }
}

/// One row of the per-step scalar series.
#[derive(Debug, Clone)]
pub struct SeriesRow {
    pub t: f64,
    pub dt: f64,
    /// `||omega||_{L_p}` for the configured exponents, in order.
    pub lp_norms: Vec<f64>,
    pub lambda: Vec<f64>,
    /// `||v - grad h_a||^2_{L2}`.
    pub kinetic_energy: f64,
    /// Running accumulator of `nu int ||grad omega||^2 dt`.
    pub dissipation: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    /// Maximum-principle window at this step.
    pub bound_lo: f64,
    pub bound_hi: f64,
}

/// Result of a trajectory run: scheduled snapshots plus the scalar series.
#[derive(Debug)]
pub struct Trajectory {
    pub snapshots: Vec<FlowState>,
    pub snapshot_times: Vec<f64>,
    pub series: Vec<SeriesRow>,
    pub lp_exponents: Vec<f64>,
    /// Largest drift of the circulation system residual, sampled every ten
    /// steps.
    pub lambda_residual_max: f64,
}

/// Runs one trajectory from `(omega_0, lambda_0)` to `t_end`, emitting a
/// snapshot at each scheduled time (steps are shortened to land on the
/// schedule exactly) and one series row per step.
pub fn run(
    system: &Arc<FlowSystem>,
    omega0: ScalarField,
    lambda0: Vec<f64>,
    nu: f64,
    cfg: TimeIntegratorConfig,
    snapshot_times: &[f64],
    lp_exponents: &[f64],
) -> Result<Trajectory, FlowError> {
    cfg.validate()?;
    if let Some(&t) = snapshot_times
        .iter()
        .find(|&&t| t < 0.0 || t > cfg.t_end * (1.0 + 1e-12))
    {
        return Err(FlowError::Config(format!(
            "snapshot time {t} outside [0, {}]",
            cfg.t_end
        )));
    }
    let mut times = snapshot_times.to_vec();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let state0 = system.make_state(0.0, omega0, lambda0)?;
    check_initial_consistency(system, &state0)?;
    let mut integrator = Integrator::new(system.clone(), nu, cfg, &state0)?;

    let mut traj = Trajectory {
        snapshots: Vec::new(),
        snapshot_times: Vec::new(),
        series: Vec::new(),
        lp_exponents: lp_exponents.to_vec(),
        lambda_residual_max: 0.0,
    };
    let mut dissipation = 0.0;
    push_series(&mut traj, &integrator, &state0, 0.0, dissipation, lp_exponents);

    let mut next_snap = 0;
    // schedule entries at (or before) t = 0 take the initial state
    while next_snap < times.len() && times[next_snap] <= 0.0 {
        traj.snapshots.push(state0.clone());
        traj.snapshot_times.push(state0.t);
        next_snap += 1;
    }

    let mut state = state0;
    let t_tol = 1e-12 * cfg.t_end.max(1.0);
    while state.t < cfg.t_end - t_tol {
        // cap the step at the next scheduled time so snapshots land exactly
        // on the schedule (and the schedule matches across sweep members)
        let t_cap = if next_snap < times.len() {
            cfg.t_end.min(times[next_snap])
        } else {
            cfg.t_end
        };
        let new_state = integrator.step(&state, t_cap)?;
        let dt = new_state.t - state.t;
        if nu > 0.0 {
            dissipation += nu * dt * new_state.omega.gradient().l2_norm_sq();
        }
        push_series(&mut traj, &integrator, &new_state, dt, dissipation, lp_exponents);
        if integrator.step_index() % 10 == 0 {
            let res = integrator.consistency_residual(&new_state)?;
            traj.lambda_residual_max = traj.lambda_residual_max.max(res);
        }
        while next_snap < times.len() && new_state.t >= times[next_snap] - t_tol {
            let pick = if (state.t - times[next_snap]).abs() < (new_state.t - times[next_snap]).abs()
            {
                &state
            } else {
                &new_state
            };
            traj.snapshots.push(pick.clone());
            traj.snapshot_times.push(pick.t);
            next_snap += 1;
        }
        state = new_state;
    }
    // any remaining scheduled times map to the final state
    while next_snap < times.len() {
        traj.snapshots.push(state.clone());
        traj.snapshot_times.push(state.t);
        next_snap += 1;
    }
    Ok(traj)
}

fn push_series(
    traj: &mut Trajectory,
    integrator: &Integrator,
    state: &FlowState,
    dt: f64,
    dissipation: f64,
    lp_exponents: &[f64],
) {
    let (omega_min, omega_max) = state.omega.min_max();
    let (bound_lo, bound_hi) = integrator.bound_window();
    let mut rel = state.velocity.clone();
    rel.axpy(-1.0, &state.h_a.gradient());
    traj.series.push(SeriesRow {
        t: state.t,
        dt,
        lp_norms: lp_exponents.iter().map(|&p| state.omega.lp_norm(p)).collect(),
        lambda: state.lambda.clone(),
        kinetic_energy: rel.l2_norm_sq(),
        dissipation,
        omega_min,
        omega_max,
        bound_lo,
        bound_hi,
    });
}

/// Sanity check that the initial vorticity is the curl of the reconstructed
/// velocity: exact for the circulation system by construction, and a coarse
/// interior comparison of `rot(v)` against `omega` (truncation-limited, so
/// the tolerance is generous).
fn check_initial_consistency(system: &Arc<FlowSystem>, state: &FlowState) -> Result<(), FlowError> {
    let f = system.circulation_rhs(&state.velocity, &state.omega, state.t)?;
    let res = system.basis.residual(&state.lambda, &f);
    let scale = state
        .lambda
        .iter()
        .fold(1.0_f64, |m, l| m.max(l.abs()));
    if res > 1e-8 * scale.max(f.iter().fold(1.0, |m: f64, v| m.max(v.abs()))) {
        return Err(FlowError::Config(format!(
            "initial circulation coefficients inconsistent with the velocity (residual {res:.3e})"
        )));
    }
    let g = system.grid();
    let curl = state.velocity.curl();
    let mut err = 0.0_f64;
    let mut scale = 0.0_f64;
    for i in 2..g.n_r() - 1 {
        for j in 0..g.n_theta() {
            err = err.max((curl.at(i, j) - state.omega.at(i, j)).abs());
            scale = scale.max(state.omega.at(i, j).abs());
        }
    }
    if err > 0.5 * scale.max(1e-8) && scale > 1e-8 {
        return Err(FlowError::Config(format!(
            "initial vorticity is not the curl of the reconstructed velocity (defect {err:.3e})"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BoundaryData, TraceProfile};
    use std::f64::consts::PI;

    fn system(n_r: usize, n_t: usize, bd: BoundaryData) -> Arc<FlowSystem> {
        let g = Arc::new(Grid::build(1.0, 2.0, n_r, n_t, 0.0).unwrap());
        Arc::new(FlowSystem::new(g, bd).unwrap())
    }

    /// Fine 1D reference for the axisymmetric viscous problem with walls at
    /// rest: `d_t omega = nu (1/r) d_r (r d_r omega)` with Dirichlet wall
    /// values, and the azimuthal momentum equation `d_t v_theta = nu d_r
    /// omega`. Crank-Nicolson in time, second-order in space.
    fn radial_reference(
        n: usize,
        nu: f64,
        dt: f64,
        t_end: f64,
        b_in: f64,
        b_out: f64,
    ) -> (Vec<f64>, Vec<f64>) {
        let dr = 1.0 / n as f64;
        let r = |i: usize| 1.0 + i as f64 * dr;
        let mut w = vec![0.0; n + 1];
        w[0] = b_in;
        w[n] = b_out;
        let mut v = vec![0.0; n + 1];
        let d_r = |w: &[f64], i: usize| {
            if i == 0 {
                (-1.5 * w[0] + 2.0 * w[1] - 0.5 * w[2]) / dr
            } else if i == n {
                (1.5 * w[n] - 2.0 * w[n - 1] + 0.5 * w[n - 2]) / dr
            } else {
                (w[i + 1] - w[i - 1]) / (2.0 * dr)
            }
        };
        let lap = |w: &[f64], i: usize| {
            ((r(i) + 0.5 * dr) * (w[i + 1] - w[i]) - (r(i) - 0.5 * dr) * (w[i] - w[i - 1]))
                / (r(i) * dr * dr)
        };
        let mut t = 0.0;
        while t < t_end - 1e-12 {
            let dt = dt.min(t_end - t);
            let s = 0.5 * nu * dt;
            // assemble (I - s L) w_new = (I + s L) w_old, identity wall rows
            let mut lower = vec![0.0; n + 1];
            let mut diag = vec![1.0; n + 1];
            let mut upper = vec![0.0; n + 1];
            let mut rhs = w.clone();
            for i in 1..n {
                let cm = (r(i) - 0.5 * dr) / (r(i) * dr * dr);
                let cp = (r(i) + 0.5 * dr) / (r(i) * dr * dr);
                lower[i] = -s * cm;
                diag[i] = 1.0 + s * (cm + cp);
                upper[i] = -s * cp;
                rhs[i] = w[i] + s * lap(&w, i);
            }
            // Thomas
            for i in 1..=n {
                let m = lower[i] / diag[i - 1];
                diag[i] -= m * upper[i - 1];
                rhs[i] -= m * rhs[i - 1];
            }
            let mut w_new = vec![0.0; n + 1];
            w_new[n] = rhs[n] / diag[n];
            for i in (0..n).rev() {
                w_new[i] = (rhs[i] - upper[i] * w_new[i + 1]) / diag[i];
            }
            for i in 0..=n {
                v[i] += 0.5 * dt * nu * (d_r(&w, i) + d_r(&w_new, i));
            }
            w = w_new;
            t += dt;
        }
        (w, v)
    }

    #[test]
    fn viscous_axisymmetric_matches_radial_reference() {
        // asymmetric wall vorticity so the circulation dynamics are driven by
        // the viscous boundary term; the azimuthal velocity is then a sharp
        // oracle for its sign and magnitude
        let nu = 0.05;
        let t_end = 0.2;
        let bd = BoundaryData {
            b_inner: TraceProfile::constant(1.0),
            ..BoundaryData::default()
        };
        let n_r = 96;
        let sys = system(n_r, 8, bd);
        let cfg = TimeIntegratorConfig {
            dt_max: 1e-3,
            t_end,
            ..TimeIntegratorConfig::default()
        };
        let traj = run(
            &sys,
            ScalarField::zeros(sys.grid().clone()),
            vec![0.0],
            nu,
            cfg,
            &[t_end],
            &[2.0],
        )
        .unwrap();
        let state = traj.snapshots.last().unwrap();

        let n_ref = 1536; // multiple of n_r: reference nodes include ours
        let (w_ref, v_ref) = radial_reference(n_ref, nu, 2.5e-4, t_end, 1.0, 0.0);
        let stride = n_ref / n_r;
        let mut w_err = 0.0_f64;
        let mut v_err = 0.0_f64;
        for i in 0..=n_r {
            w_err = w_err.max((state.omega.at(i, 0) - w_ref[i * stride]).abs());
            v_err = v_err.max((state.velocity.theta(i, 0) - v_ref[i * stride]).abs());
        }
        // velocity error is dominated by the one-sided wall strain (first
        // order, 5.1e-3 at this resolution); a sign error in the viscous
        // boundary term would show up as ~3e-2
        assert!(w_err < 5e-4, "vorticity error {w_err}");
        assert!(v_err < 8e-3, "velocity error {v_err}");
    }

    #[test]
    fn zero_fluxes_leave_vorticity_unchanged() {
        let sys = system(16, 16, BoundaryData::default());
        let g = sys.grid().clone();
        let omega = ScalarField::from_fn(g.clone(), |r, th| (3.0 * r).sin() + th.cos());
        let (nr, nt) = g.node_shape();
        let fluxes = FaceFluxes {
            radial: vec![0.0; (nr - 1) * nt],
            angular: vec![0.0; nr * nt],
            inner_wall: vec![0.0; nt],
            outer_wall: vec![0.0; nt],
            n_theta: nt,
        };
        let b = vec![0.0; nt];
        let out = advect(&omega, &fluxes, &b, &b, 0.1, AdvectionScheme::Upwind1);
        assert_eq!(out.data(), omega.data());
    }

    #[test]
    fn azimuthal_flow_keeps_radial_vorticity_stationary() {
        // v = grad_perp(h_nu) + lambda u_1 is purely azimuthal for radially
        // symmetric omega, so the transport term vanishes on the grid
        let sys = system(32, 16, BoundaryData::default());
        let g = sys.grid().clone();
        let omega0 = ScalarField::from_fn(g.clone(), |r, _| ((r - 1.5) * PI).cos());
        let cfg = TimeIntegratorConfig {
            dt_max: 1e-3,
            t_end: 1.0,
            ..TimeIntegratorConfig::default()
        };
        let mut state = sys.make_state(0.0, omega0.clone(), vec![0.7]).unwrap();
        let mut integ = Integrator::new(sys.clone(), 0.0, cfg, &state).unwrap();
        for _ in 0..100 {
            state = integ.step(&state, 1.0).unwrap();
        }
        assert!(
            state.omega.max_diff(&omega0) < 1e-12,
            "drift {}",
            state.omega.max_diff(&omega0)
        );
        assert!((state.lambda[0] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn constant_state_is_exact_for_viscous_flow() {
        let c = 1.3;
        let bd = BoundaryData {
            b_inner: TraceProfile::constant(c),
            b_outer: TraceProfile::constant(c),
            ..BoundaryData::default()
        };
        let sys = system(24, 16, bd);
        let g = sys.grid().clone();
        let omega0 = ScalarField::from_fn(g, |_, _| c);
        let lambda0 = {
            let state = sys.make_state(0.0, omega0.clone(), vec![0.0]).unwrap();
            sys.initial_lambda(&state.velocity, &omega0).unwrap()
        };
        let cfg = TimeIntegratorConfig {
            dt_max: 5e-3,
            t_end: 1.0,
            ..TimeIntegratorConfig::default()
        };
        let mut state = sys.make_state(0.0, omega0.clone(), lambda0).unwrap();
        let mut integ = Integrator::new(sys.clone(), 1e-2, cfg, &state).unwrap();
        for _ in 0..50 {
            state = integ.step(&state, 1.0).unwrap();
        }
        assert!(
            state.omega.max_diff(&omega0) < 1e-11,
            "drift {}",
            state.omega.max_diff(&omega0)
        );
    }

    #[test]
    fn radial_source_front_position() {
        // characteristics of dr/dt = 1/r give the front r(t) = sqrt(1 + 2t)
        let bd = BoundaryData {
            b_inner: TraceProfile::constant(1.0),
            ..BoundaryData::radial_source(2.0 * PI, 1.0, 2.0)
        };
        let sys = system(256, 8, bd);
        let g = sys.grid().clone();
        let omega0 = ScalarField::zeros(g.clone());
        let cfg = TimeIntegratorConfig {
            dt_max: 1e-2,
            t_end: 0.5,
            ..TimeIntegratorConfig::default()
        };
        let traj = run(&sys, omega0, vec![0.0], 0.0, cfg, &[0.5], &[2.0]).unwrap();
        let state = traj.snapshots.last().unwrap();
        // last ring with omega > 1/2 marks the discrete front
        let mut front = g.radius(0);
        for i in 0..=g.n_r() {
            if state.omega.at(i, 0) > 0.5 {
                front = g.radius(i);
            }
        }
        let exact = (1.0 + 2.0 * 0.5_f64).sqrt();
        let cell = (g.r_outer() - g.r_inner()) / g.n_r() as f64;
        assert!(
            (front - exact).abs() <= 3.0 * cell,
            "front {front} vs {exact}"
        );
        // discrete maximum principle along the way
        for row in &traj.series {
            assert!(row.omega_min >= row.bound_lo - 1e-12);
            assert!(row.omega_max <= row.bound_hi + 1e-12);
        }
    }

    #[test]
    fn advection_conserves_integral_without_through_flow() {
        let sys = system(32, 24, BoundaryData::default());
        let g = sys.grid().clone();
        let omega0 = ScalarField::from_fn(g.clone(), |r, th| {
            ((r - 1.5) * PI).cos().powi(2) * (1.0 + 0.4 * (3.0 * th).sin())
        });
        let cfg = TimeIntegratorConfig {
            dt_max: 2e-3,
            t_end: 1.0,
            ..TimeIntegratorConfig::default()
        };
        let mut state = sys.make_state(0.0, omega0, vec![0.4]).unwrap();
        let mut integ = Integrator::new(sys.clone(), 0.0, cfg, &state).unwrap();
        let scale = state.omega.integrate().abs().max(1.0);
        for _ in 0..60 {
            let mass = state.omega.integrate();
            state = integ.step(&state, 1.0).unwrap();
            assert!(
                (state.omega.integrate() - mass).abs() < 1e-12 * scale,
                "mass drift {}",
                (state.omega.integrate() - mass).abs()
            );
        }
    }

    #[test]
    fn heun_scheme_conserves_and_runs() {
        let sys = system(24, 16, BoundaryData::default());
        let g = sys.grid().clone();
        let omega0 =
            ScalarField::from_fn(g.clone(), |r, th| ((r - 1.5) * PI).cos() * (2.0 * th).sin());
        let cfg = TimeIntegratorConfig {
            dt_max: 2e-3,
            t_end: 1.0,
            scheme: AdvectionScheme::Upwind2Minmod,
            ..TimeIntegratorConfig::default()
        };
        let mut state = sys.make_state(0.0, omega0, vec![0.3]).unwrap();
        let mut integ = Integrator::new(sys.clone(), 0.0, cfg, &state).unwrap();
        for _ in 0..20 {
            let mass = state.omega.integrate();
            state = integ.step(&state, 1.0).unwrap();
            assert!((state.omega.integrate() - mass).abs() < 1e-12);
        }
    }

    #[test]
    fn rest_state_series_is_zero() {
        let sys = system(16, 16, BoundaryData::default());
        let omega0 = ScalarField::zeros(sys.grid().clone());
        let cfg = TimeIntegratorConfig {
            dt_max: 0.05,
            t_end: 0.5,
            ..TimeIntegratorConfig::default()
        };
        let traj = run(&sys, omega0, vec![0.0], 0.0, cfg, &[0.25, 0.5], &[2.0, 4.0]).unwrap();
        for row in &traj.series {
            for lp in &row.lp_norms {
                assert_eq!(*lp, 0.0);
            }
            assert_eq!(row.lambda[0], 0.0);
            assert_eq!(row.kinetic_energy, 0.0);
        }
        assert_eq!(traj.snapshots.len(), 2);
    }

    #[test]
    fn steady_rotation_l2_constant() {
        let sys = system(32, 16, BoundaryData::default());
        let omega0 = ScalarField::zeros(sys.grid().clone());
        let cfg = TimeIntegratorConfig {
            dt_max: 5e-3,
            t_end: 0.3,
            ..TimeIntegratorConfig::default()
        };
        let traj = run(&sys, omega0, vec![1.0], 0.0, cfg, &[], &[2.0]).unwrap();
        for row in &traj.series {
            assert!(row.lp_norms[0] < 1e-12);
            assert!((row.lambda[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn viscous_decay_is_monotone() {
        let sys = system(32, 16, BoundaryData::default());
        let g = sys.grid().clone();
        let omega0 = ScalarField::from_fn(g, |r, th| ((r - 1.0) * PI).sin() * (1.0 + 0.3 * th.cos()));
        let cfg = TimeIntegratorConfig {
            dt_max: 5e-3,
            t_end: 0.4,
            ..TimeIntegratorConfig::default()
        };
        let traj = run(&sys, omega0, vec![0.0], 1e-3, cfg, &[], &[2.0]).unwrap();
        for pair in traj.series.windows(2) {
            assert!(
                pair[1].lp_norms[0] <= pair[0].lp_norms[0] * (1.0 + 1e-12),
                "L2 grew: {} -> {}",
                pair[0].lp_norms[0],
                pair[1].lp_norms[0]
            );
        }
        assert!(traj.series.last().unwrap().dissipation > 0.0);
    }

    #[test]
    fn snapshot_schedule_validation() {
        let sys = system(16, 16, BoundaryData::default());
        let omega0 = ScalarField::zeros(sys.grid().clone());
        let cfg = TimeIntegratorConfig {
            t_end: 0.5,
            ..TimeIntegratorConfig::default()
        };
        match run(&sys, omega0, vec![0.0], 0.0, cfg, &[0.6], &[2.0]) {
            Err(FlowError::Config(_)) => {}
            other => panic!("expected schedule rejection, got {other:?}"),
        }
    }

    #[test]
    fn lambda_consistency_residual_stays_small() {
        let sys = system(24, 16, BoundaryData::default());
        let g = sys.grid().clone();
        let omega0 = ScalarField::from_fn(g, |r, _| ((r - 1.5) * PI).cos());
        let cfg = TimeIntegratorConfig {
            dt_max: 5e-3,
            t_end: 0.3,
            ..TimeIntegratorConfig::default()
        };
        let traj = run(&sys, omega0, vec![0.2], 1e-3, cfg, &[], &[2.0]).unwrap();
        assert!(traj.lambda_residual_max < 1e-7, "{}", traj.lambda_residual_max);
    }
}
