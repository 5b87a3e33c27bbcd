//! Velocity reconstruction from vorticity, circulation coefficients and wall
//! flux:
//!
//! ```text
//! v = grad_perp(h_nu) + sum_k lambda_k u_k + grad(h_a)
//! ```
//!
//! together with the Gram matrix of the circulation basis, the linear system
//! `A lambda = f` fixing the initial circulations, and the ODE right-hand
//! side `A dlambda/dt = f_bar` advancing them in time.
//!
//! The Gram matrix and the circulation functionals are assembled with the
//! energy form and flux circulations of the `elliptic` module, so that the
//! recovery `lambda = A^{-1} f` is exact (to round-off) for velocities built
//! from the same discrete operators.

use crate::elliptic::{self, BoundaryKind, PoissonSolverPlan};
use crate::error::FlowError;
use crate::field::{ScalarField, VectorField};
use crate::geometry::{BoundaryData, BoundarySide, Grid};
use std::sync::{Arc, Mutex};

/// Harmonic circulation basis of the annulus (`n = 1` inner component).
pub struct HarmonicBasis {
    h: Vec<ScalarField>,
    u: Vec<VectorField>,
    gram: Vec<Vec<f64>>,
    /// Lower Cholesky factor of the Gram matrix.
    chol: Vec<Vec<f64>>,
}

impl HarmonicBasis {
    pub fn build(plan: &PoissonSolverPlan) -> Result<Self, FlowError> {
        let (h1, u1) = elliptic::harmonic_basis(plan)?;
        let h = vec![h1];
        let u = vec![u1];
        let n = h.len();
        let mut gram = vec![vec![0.0; n]; n];
        for i in 0..n {
            for k in 0..=i {
                let a = elliptic::energy_inner_product(&h[i], &h[k]);
                gram[i][k] = a;
                gram[k][i] = a;
            }
        }
        let chol = cholesky(&gram)?;
        Ok(Self { h, u, gram, chol })
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    pub fn h(&self, k: usize) -> &ScalarField {
        &self.h[k]
    }

    pub fn u(&self, k: usize) -> &VectorField {
        &self.u[k]
    }

    pub fn gram(&self) -> &Vec<Vec<f64>> {
        &self.gram
    }

    /// Smallest eigenvalue of the Gram matrix (positivity constant).
    pub fn min_eigenvalue(&self) -> f64 {
        // n = 1 on the annulus; keep the general small-matrix path simple
        if self.gram.len() == 1 {
            self.gram[0][0]
        } else {
            jacobi_min_eigenvalue(&self.gram)
        }
    }

    /// Solves `A x = f` with the cached Cholesky factor.
    pub fn solve(&self, f: &[f64]) -> Vec<f64> {
        let n = self.chol.len();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = f[i];
            for k in 0..i {
                s -= self.chol[i][k] * y[k];
            }
            y[i] = s / self.chol[i][i];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.chol[k][i] * x[k];
            }
            x[i] = s / self.chol[i][i];
        }
        x
    }

    /// Residual `||A lambda - f||_inf`.
    pub fn residual(&self, lambda: &[f64], f: &[f64]) -> f64 {
        let n = self.gram.len();
        let mut m = 0.0_f64;
        for i in 0..n {
            let mut s = -f[i];
            for k in 0..n {
                s += self.gram[i][k] * lambda[k];
            }
            m = m.max(s.abs());
        }
        m
    }
}

fn cholesky(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, FlowError> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..=i {
            let mut s = a[i][k];
            for m in 0..k {
                s -= l[i][m] * l[k][m];
            }
            if i == k {
                if s <= 0.0 {
                    return Err(FlowError::GramNotPositiveDefinite { pivot: s });
                }
                l[i][k] = s.sqrt();
            } else {
                l[i][k] = s / l[k][k];
            }
        }
    }
    Ok(l)
}

fn jacobi_min_eigenvalue(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    for _ in 0..100 {
        let mut p = 0;
        let mut q = 1;
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                if m[i][j].abs() > off {
                    off = m[i][j].abs();
                    p = i;
                    q = j;
                }
            }
        }
        if off < 1e-14 {
            break;
        }
        let theta = 0.5 * (2.0 * m[p][q]).atan2(m[q][q] - m[p][p]);
        let (c, s) = (theta.cos(), theta.sin());
        for k in 0..n {
            let (mp, mq) = (m[p][k], m[q][k]);
            m[p][k] = c * mp - s * mq;
            m[q][k] = s * mp + c * mq;
        }
        for k in 0..n {
            let (mp, mq) = (m[k][p], m[k][q]);
            m[k][p] = c * mp - s * mq;
            m[k][q] = s * mp + c * mq;
        }
    }
    (0..n).map(|i| m[i][i]).fold(f64::INFINITY, f64::min)
}

/// One time slice of a simulation: vorticity, circulation coefficients and
/// the derived velocity caches.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    pub omega: ScalarField,
    pub lambda: Vec<f64>,
    /// Reconstructed velocity.
    pub velocity: VectorField,
    /// Dirichlet stream function of the vorticity.
    pub h_nu: ScalarField,
    /// Wall-flux potential at `t`.
    pub h_a: ScalarField,
    /// Cached `u_nu + grad(h_a)` for the temporal difference in the
    /// circulation ODE.
    pub u_nu_plus_a: VectorField,
}

/// The grid, boundary data, elliptic plans and circulation basis shared by
/// one family of simulations. Immutable after construction apart from the
/// harmonic-lift and potential caches.
pub struct FlowSystem {
    grid: Arc<Grid>,
    pub boundary: BoundaryData,
    dirichlet: PoissonSolverPlan,
    neumann: PoissonSolverPlan,
    pub basis: HarmonicBasis,
    lift_cache: Mutex<Option<(f64, ScalarField)>>,
    potential_cache: Mutex<Option<(f64, ScalarField)>>,
}

impl FlowSystem {
    pub fn new(grid: Arc<Grid>, boundary: BoundaryData) -> Result<Self, FlowError> {
        boundary.check_compatibility(&grid, 0.0)?;
        let dirichlet = PoissonSolverPlan::new(grid.clone(), BoundaryKind::Dirichlet);
        let neumann = PoissonSolverPlan::new(grid.clone(), BoundaryKind::NeumannZeroMean);
        let basis = HarmonicBasis::build(&dirichlet)?;
        Ok(Self {
            grid,
            boundary,
            dirichlet,
            neumann,
            basis,
            lift_cache: Mutex::new(None),
            potential_cache: Mutex::new(None),
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn dirichlet_plan(&self) -> &PoissonSolverPlan {
        &self.dirichlet
    }

    /// Samples a boundary trace at the angular nodes.
    pub fn trace(&self, profile_of: impl Fn(&BoundaryData) -> f64, _side: BoundarySide) -> f64 {
        profile_of(&self.boundary)
    }

    pub fn a_trace(&self, side: BoundarySide, t: f64) -> Vec<f64> {
        let p = self.boundary.a(side);
        (0..self.grid.n_theta())
            .map(|j| p.value(self.grid.theta(j), t))
            .collect()
    }

    pub fn b_trace(&self, side: BoundarySide, t: f64) -> Vec<f64> {
        let p = self.boundary.b(side);
        (0..self.grid.n_theta())
            .map(|j| p.value(self.grid.theta(j), t))
            .collect()
    }

    /// Harmonic lift `B` of the boundary vorticity `b` at time `t`; cached
    /// when `b` is time-constant (and reused when `t` matches).
    pub fn harmonic_lift(&self, t: f64) -> Result<ScalarField, FlowError> {
        let key = if self.boundary.b_is_time_constant() { 0.0 } else { t };
        {
            let cache = self.lift_cache.lock().unwrap();
            if let Some((t0, field)) = cache.as_ref() {
                if *t0 == key {
                    return Ok(field.clone());
                }
            }
        }
        let bi = self.b_trace(BoundarySide::Inner, t);
        let bo = self.b_trace(BoundarySide::Outer, t);
        let zero = ScalarField::zeros(self.grid.clone());
        let lift = self.dirichlet.solve_dirichlet(&zero, &bi, &bo)?;
        *self.lift_cache.lock().unwrap() = Some((key, lift.clone()));
        Ok(lift)
    }

    /// Wall-flux potential `h_a` at time `t` (Neumann solve), cached for
    /// time-constant `a`.
    pub fn potential(&self, t: f64) -> Result<ScalarField, FlowError> {
        let time_constant = self.boundary.a_inner.ramp.is_none() && self.boundary.a_outer.ramp.is_none();
        let key = if time_constant { 0.0 } else { t };
        {
            let cache = self.potential_cache.lock().unwrap();
            if let Some((t0, field)) = cache.as_ref() {
                if *t0 == key {
                    return Ok(field.clone());
                }
            }
        }
        let ai = self.a_trace(BoundarySide::Inner, t);
        let ao = self.a_trace(BoundarySide::Outer, t);
        let h_a = self.neumann.solve_neumann(&ai, &ao)?;
        *self.potential_cache.lock().unwrap() = Some((key, h_a.clone()));
        Ok(h_a)
    }

    /// Builds a full `FlowState` (velocity reconstruction of the vorticity
    /// decomposition) from `(t, omega, lambda)`.
    pub fn make_state(
        &self,
        t: f64,
        omega: ScalarField,
        lambda: Vec<f64>,
    ) -> Result<FlowState, FlowError> {
        let nt = self.grid.n_theta();
        let zero_trace = vec![0.0; nt];
        let h_nu = self.dirichlet.solve_dirichlet(&omega, &zero_trace, &zero_trace)?;
        let h_a = self.potential(t)?;
        let mut u_nu_plus_a = h_nu.gradient_perp();
        u_nu_plus_a.axpy(1.0, &h_a.gradient());
        let mut velocity = u_nu_plus_a.clone();
        for (k, lk) in lambda.iter().enumerate() {
            velocity.axpy(*lk, self.basis.u(k));
        }
        Ok(FlowState {
            t,
            omega,
            lambda,
            velocity,
            h_nu,
            h_a,
            u_nu_plus_a,
        })
    }

    /// Circulation functional `f_k = oint_{S_k} (v - grad h_a) . s ds
    /// + int omega h_k dx` of the linear system `A lambda = f`.
    pub fn circulation_rhs(&self, v: &VectorField, omega: &ScalarField, t: f64) -> Result<Vec<f64>, FlowError> {
        let h_a = self.potential(t)?;
        let a_vec = h_a.gradient();
        let mut f = Vec::with_capacity(self.basis.len());
        // only S_1 (inner circle) carries a circulation unknown on the annulus
        let mut rel = v.clone();
        rel.axpy(-1.0, &a_vec);
        for k in 0..self.basis.len() {
            let circ = rel.circulation(BoundarySide::Inner);
            let vort = omega.inner_product_interior(self.basis.h(k));
            f.push(circ + vort);
        }
        Ok(f)
    }

    /// Initial circulation coefficients from a consistent initial velocity.
    pub fn initial_lambda(
        &self,
        v0: &VectorField,
        omega0: &ScalarField,
    ) -> Result<Vec<f64>, FlowError> {
        let f = self.circulation_rhs(v0, omega0, 0.0)?;
        Ok(self.basis.solve(&f))
    }

    /// Slip datum `g = b + 2 da/ds` sampled at the angular nodes of `side`.
    ///
    /// `d/ds` is taken along the slip-identity orientation: counterclockwise
    /// on the outer circle, clockwise on the inner one (the opposite of the
    /// circulation convention in `tangent_sign`).
    pub fn slip_datum(&self, side: BoundarySide, t: f64) -> Vec<f64> {
        let g = &self.grid;
        let sign = -g.tangent_sign(side);
        let radius = g.wall_radius(side);
        let a = self.boundary.a(side);
        let b = self.boundary.b(side);
        (0..g.n_theta())
            .map(|j| {
                let th = g.theta(j);
                b.value(th, t) + 2.0 * sign * a.d_theta(th, t) / radius
            })
            .collect()
    }

    /// Right-hand side `f_bar` of the circulation ODE `A dlambda/dt = f_bar`
    /// and the resulting `dlambda/dt`.
    ///
    /// The temporal derivative of `u_nu + grad h_a` is approximated by the
    /// backward difference against the previous accepted state; `None` (first
    /// step) treats it as zero, which is the forward-difference value for
    /// data that has not changed yet.
    pub fn lambda_rhs(
        &self,
        state: &FlowState,
        nu: f64,
        prev: Option<(&VectorField, f64)>,
    ) -> Vec<f64> {
        let n = self.basis.len();
        let g = &self.grid;
        let mut f_bar = vec![0.0; n];
        let dudt = prev.map(|(prev_field, dt)| {
            let mut d = state.u_nu_plus_a.clone();
            d.axpy(-1.0, prev_field);
            d.scale(1.0 / dt);
            d
        });
        for (i, f_i) in f_bar.iter_mut().enumerate() {
            let u_i = self.basis.u(i);
            // -int dt(u_nu + a) . u_i dx
            if let Some(d) = &dudt {
                *f_i -= d.inner_product(u_i);
            }
            // +int omega (v x u_i) dx
            let cross = state.velocity.cross(u_i);
            *f_i += state.omega.inner_product(&cross);
            if nu > 0.0 {
                // + nu oint (g - 2 k v.s)(u_i . s) ds, with s in the
                // slip-identity orientation (matching the datum g)
                for side in [BoundarySide::Inner, BoundarySide::Outer] {
                    let slip = self.slip_datum(side, state.t);
                    let ring = g.wall_ring(side);
                    let sgn = -g.tangent_sign(side);
                    let k = g.curvature(side);
                    let w = g.arc_weight(side);
                    let mut term = 0.0;
                    for (j, gj) in slip.iter().enumerate() {
                        let v_s = sgn * state.velocity.theta(ring, j);
                        let u_s = sgn * u_i.theta(ring, j);
                        term += (gj - 2.0 * k * v_s) * u_s;
                    }
                    *f_i += nu * w * term;
                }
                // -2 nu int D(v) : D(u_i) dx
                *f_i -= 2.0 * nu * state.velocity.strain_inner_product(u_i);
            }
        }
        self.basis.solve(&f_bar)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Grid, TraceProfile};
    use std::f64::consts::PI;

    fn system(n_r: usize, n_t: usize, bd: BoundaryData) -> FlowSystem {
        let g = Arc::new(Grid::build(1.0, 2.0, n_r, n_t, 0.0).unwrap());
        FlowSystem::new(g, bd).unwrap()
    }

    #[test]
    fn gram_matrix_analytic_value() {
        let sys = system(64, 32, BoundaryData::default());
        let a11 = sys.basis.gram()[0][0];
        let exact = 2.0 * PI / 2.0_f64.ln();
        assert!(
            (a11 - exact).abs() < 2e-3 * exact,
            "A11 {a11} vs {exact}"
        );
        assert!(sys.basis.min_eigenvalue() > 0.9 * exact);
    }

    #[test]
    fn gram_matrix_quadrature_convergence() {
        let exact = 2.0 * PI / 2.0_f64.ln();
        let coarse = (system(32, 16, BoundaryData::default()).basis.gram()[0][0] - exact).abs();
        let fine = (system(64, 16, BoundaryData::default()).basis.gram()[0][0] - exact).abs();
        assert!(coarse / fine >= 3.5, "ratio {}", coarse / fine);
    }

    #[test]
    fn initial_lambda_zero_for_potential_flow() {
        let bd = BoundaryData::radial_source(2.0 * PI, 1.0, 2.0);
        let sys = system(48, 16, bd);
        let h_a = sys.potential(0.0).unwrap();
        let v0 = h_a.gradient();
        let omega0 = ScalarField::zeros(sys.grid().clone());
        let lambda = sys.initial_lambda(&v0, &omega0).unwrap();
        assert!(lambda[0].abs() < 1e-12, "lambda {}", lambda[0]);
    }

    #[test]
    fn initial_lambda_recovers_coefficient() {
        let sys = system(48, 16, BoundaryData::default());
        let c = 1.37;
        let mut v0 = VectorField::zeros(sys.grid().clone());
        v0.axpy(c, sys.basis.u(0));
        let omega0 = ScalarField::zeros(sys.grid().clone());
        let lambda = sys.initial_lambda(&v0, &omega0).unwrap();
        assert!((lambda[0] - c).abs() < 1e-12, "lambda {}", lambda[0]);
    }

    #[test]
    fn initial_lambda_exact_for_composite_field() {
        // v = grad_perp(h_nu) + lambda u_1 + grad(h_a) built with the same
        // discrete operators: recovery is exact by the Green identity
        let bd = BoundaryData::radial_source(2.0 * PI, 1.0, 2.0);
        let sys = system(40, 24, bd);
        let g = sys.grid().clone();
        let omega = ScalarField::from_fn(g.clone(), |r, th| {
            ((r - 1.0) * (2.0 - r) * 4.0).sin() * (1.0 + 0.5 * (2.0 * th).cos())
        });
        let lambda_true = -0.83;
        let state = sys.make_state(0.0, omega.clone(), vec![lambda_true]).unwrap();
        let lambda = sys.initial_lambda(&state.velocity, &omega).unwrap();
        assert!(
            (lambda[0] - lambda_true).abs() < 1e-11,
            "lambda {} vs {}",
            lambda[0],
            lambda_true
        );
    }

    #[test]
    fn reconstruct_rotation_flow() {
        let sys = system(64, 16, BoundaryData::default());
        let g = sys.grid().clone();
        let omega = ScalarField::zeros(g.clone());
        let state = sys.make_state(0.0, omega, vec![1.0]).unwrap();
        let ln2 = 2.0_f64.ln();
        for i in 1..g.n_r() {
            let r = g.radius(i);
            assert!((state.velocity.theta(i, 0) - 1.0 / (r * ln2)).abs() < 1e-3);
            assert!(state.velocity.r(i, 0).abs() < 1e-10);
        }
    }

    #[test]
    fn reconstruct_radial_source() {
        let bd = BoundaryData::radial_source(2.0 * PI, 1.0, 2.0);
        let sys = system(96, 16, bd);
        let g = sys.grid().clone();
        let omega = ScalarField::zeros(g.clone());
        let state = sys.make_state(0.0, omega, vec![0.0]).unwrap();
        for i in 1..g.n_r() {
            let r = g.radius(i);
            assert!(
                (state.velocity.r(i, 0) - 1.0 / r).abs() < 5e-4,
                "v_r {} at r {}",
                state.velocity.r(i, 0),
                r
            );
        }
        // v.n matches a on the walls: -1 on S_1, +1/2 on S_0
        let n = g.n_r();
        assert!((-state.velocity.r(0, 0) + 1.0).abs() < 5e-4);
        assert!((state.velocity.r(n, 0) - 0.5).abs() < 5e-4);
    }

    #[test]
    fn reconstructed_curl_matches_vorticity() {
        let sys = system(64, 64, BoundaryData::default());
        let g = sys.grid().clone();
        let omega = ScalarField::from_fn(g.clone(), |r, th| {
            ((r - 1.5) * PI).cos() * (1.0 + 0.3 * th.sin())
        });
        let state = sys.make_state(0.0, omega.clone(), vec![0.4]).unwrap();
        let curl = state.velocity.curl();
        let mut err = 0.0_f64;
        for i in 2..g.n_r() - 1 {
            for j in 0..g.n_theta() {
                err = err.max((curl.at(i, j) - omega.at(i, j)).abs());
            }
        }
        assert!(err < 5e-3, "curl error {err}");
    }

    #[test]
    fn lambda_rhs_zero_for_steady_potential_flow() {
        let bd = BoundaryData::radial_source(2.0 * PI, 1.0, 2.0);
        let sys = system(48, 16, bd);
        let omega = ScalarField::zeros(sys.grid().clone());
        let state = sys.make_state(0.0, omega, vec![0.0]).unwrap();
        let d = sys.lambda_rhs(&state, 1e-2, None);
        assert!(d[0].abs() < 1e-12, "dlambda {}", d[0]);
    }

    #[test]
    fn lambda_rhs_zero_for_euler_rotation() {
        let sys = system(48, 16, BoundaryData::default());
        let omega = ScalarField::zeros(sys.grid().clone());
        let state = sys.make_state(0.0, omega, vec![1.0]).unwrap();
        let d = sys.lambda_rhs(&state, 0.0, None);
        assert!(d[0].abs() < 1e-12, "dlambda {}", d[0]);
    }

    #[test]
    fn lambda_rhs_viscous_rotation_terms_cancel() {
        // for v = u_1 the slip boundary term and the strain volume term
        // cancel analytically; discretely the defect is O(h^2) nu
        let sys = system(64, 16, BoundaryData::default());
        let omega = ScalarField::zeros(sys.grid().clone());
        let state = sys.make_state(0.0, omega, vec![1.0]).unwrap();
        let nu = 1e-2;
        let d = sys.lambda_rhs(&state, nu, None);
        assert!(d[0].abs() < 5e-3 * nu, "dlambda {}", d[0]);
    }

    #[test]
    fn decomposition_orthogonality() {
        // int u_nu . u_1 dx small for h_nu vanishing on the boundary
        let sys = system(64, 32, BoundaryData::default());
        let g = sys.grid().clone();
        let omega = ScalarField::from_fn(g.clone(), |r, _| ((r - 1.5) * PI).cos());
        let state = sys.make_state(0.0, omega, vec![0.0]).unwrap();
        let u_nu = state.h_nu.gradient_perp();
        let ip = u_nu.inner_product(sys.basis.u(0));
        let scale = u_nu.l2_norm_sq().sqrt() * sys.basis.u(0).l2_norm_sq().sqrt();
        assert!(ip.abs() < 1e-3 * scale, "ip {ip}");
    }

    #[test]
    fn b_lift_cached_when_time_constant() {
        let bd = BoundaryData {
            b_inner: TraceProfile::constant(1.0),
            b_outer: TraceProfile::constant(1.0),
            ..BoundaryData::default()
        };
        let sys = system(24, 16, bd);
        let l1 = sys.harmonic_lift(0.0).unwrap();
        let l2 = sys.harmonic_lift(7.5).unwrap();
        assert_eq!(l1.data(), l2.data());
        // harmonic extension of constant data is the constant
        assert!(l1.data().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }
}
