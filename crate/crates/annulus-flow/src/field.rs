//! Node-centered scalar and vector fields on the annular grid, together with
//! the discrete difference operators used everywhere in the crate.
//!
//! The operators are built to be mutually compatible:
//! * `d_r` and `d_theta` act on separate indices, so the discrete divergence
//!   of a perpendicular gradient vanishes identically on interior nodes;
//! * the tangential component of `grad_perp` on the wall rings uses the
//!   conservative face-flux closure, so the node-trapezoid wall circulation
//!   of `grad_perp(psi)` equals the flux circulation of `psi` exactly.

use crate::error::FlowError;
use crate::geometry::{BoundarySide, Grid};
use std::sync::Arc;

/// Scalar field sampled at the grid nodes, radial-major layout.
#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: Arc<Grid>,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let (nr, nt) = grid.node_shape();
        Self {
            grid,
            data: vec![0.0; nr * nt],
        }
    }

    /// Samples `f(r, theta)` at every node.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64, f64) -> f64) -> Self {
        let (nr, nt) = grid.node_shape();
        let mut data = Vec::with_capacity(nr * nt);
        for i in 0..nr {
            let r = grid.radius(i);
            for j in 0..nt {
                data.push(f(r, grid.theta(j)));
            }
        }
        Self { grid, data }
    }

    pub fn from_data(grid: Arc<Grid>, data: Vec<f64>) -> Result<Self, FlowError> {
        let (nr, nt) = grid.node_shape();
        if data.len() != nr * nt {
            return Err(FlowError::DimensionMismatch {
                expected: (nr, nt),
                found: (data.len(), 1),
            });
        }
        Ok(Self { grid, data })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.grid.n_theta() + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let nt = self.grid.n_theta();
        self.data[i * nt + j] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += alpha * b;
        }
    }

    /// Full volume quadrature `int f dx` including the wall half cells.
    pub fn integrate(&self) -> f64 {
        let (nr, nt) = self.grid.node_shape();
        let mut total = 0.0;
        for i in 0..nr {
            let w = self.grid.volume_weight(i);
            let mut row = 0.0;
            for j in 0..nt {
                row += self.at(i, j);
            }
            total += w * row;
        }
        total
    }

    /// Quadrature with zero weight on the wall rings; this pairing is exact
    /// against the flux circulation in the discrete Green identity.
    pub fn integrate_interior(&self) -> f64 {
        let (nr, nt) = self.grid.node_shape();
        let mut total = 0.0;
        for i in 1..nr - 1 {
            let w = self.grid.volume_weight(i);
            let mut row = 0.0;
            for j in 0..nt {
                row += self.at(i, j);
            }
            total += w * row;
        }
        total
    }

    pub fn inner_product(&self, other: &Self) -> f64 {
        let (nr, nt) = self.grid.node_shape();
        let mut total = 0.0;
        for i in 0..nr {
            let w = self.grid.volume_weight(i);
            let mut row = 0.0;
            for j in 0..nt {
                row += self.at(i, j) * other.at(i, j);
            }
            total += w * row;
        }
        total
    }

    pub fn inner_product_interior(&self, other: &Self) -> f64 {
        let (nr, nt) = self.grid.node_shape();
        let mut total = 0.0;
        for i in 1..nr - 1 {
            let w = self.grid.volume_weight(i);
            let mut row = 0.0;
            for j in 0..nt {
                row += self.at(i, j) * other.at(i, j);
            }
            total += w * row;
        }
        total
    }

    /// `L_p` norm with the full volume quadrature.
    pub fn lp_norm(&self, p: f64) -> f64 {
        let (nr, nt) = self.grid.node_shape();
        let mut total = 0.0;
        for i in 0..nr {
            let w = self.grid.volume_weight(i);
            for j in 0..nt {
                total += w * self.at(i, j).abs().powf(p);
            }
        }
        total.powf(1.0 / p)
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
    }

    /// Volume-weighted mean over the full quadrature.
    pub fn mean(&self) -> f64 {
        let (nr, nt) = self.grid.node_shape();
        let mut vol = 0.0;
        for i in 0..nr {
            vol += self.grid.volume_weight(i) * nt as f64;
        }
        self.integrate() / vol
    }

    /// Max-norm of the difference with another field on the same grid.
    pub fn max_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Radial derivative: centered three-point interior, one-sided
    /// second-order at the walls (nonuniform-aware weights).
    pub fn d_r(&self) -> ScalarField {
        let (nr, nt) = self.grid.node_shape();
        let g = &self.grid;
        let mut out = ScalarField::zeros(self.grid.clone());
        for i in 0..nr {
            let (wm, w0, wp, im, ip) = radial_stencil(g, i);
            for j in 0..nt {
                let v = wm * self.at(im, j) + w0 * self.at(i, j) + wp * self.at(ip, j);
                out.set(i, j, v);
            }
        }
        out
    }

    /// Angular derivative by centered differences (periodic).
    pub fn d_theta(&self) -> ScalarField {
        let (nr, nt) = self.grid.node_shape();
        let inv2 = 1.0 / (2.0 * self.grid.d_theta());
        let mut out = ScalarField::zeros(self.grid.clone());
        for i in 0..nr {
            for j in 0..nt {
                let jp = (j + 1) % nt;
                let jm = (j + nt - 1) % nt;
                out.set(i, j, (self.at(i, jp) - self.at(i, jm)) * inv2);
            }
        }
        out
    }

    /// Gradient `(d_r f, (1/r) d_theta f)`.
    pub fn gradient(&self) -> VectorField {
        let dr = self.d_r();
        let dt = self.d_theta();
        let (nr, nt) = self.grid.node_shape();
        let mut v = VectorField::zeros(self.grid.clone());
        for i in 0..nr {
            let inv_r = 1.0 / self.grid.radius(i);
            for j in 0..nt {
                v.set_r(i, j, dr.at(i, j));
                v.set_theta(i, j, dt.at(i, j) * inv_r);
            }
        }
        v
    }

    /// Perpendicular gradient `((1/r) d_theta f, -d_r f)` with the
    /// flux-compatible tangential closure on the wall rings.
    pub fn gradient_perp(&self) -> VectorField {
        let dr = self.d_r();
        let dt = self.d_theta();
        let (nr, nt) = self.grid.node_shape();
        let g = &self.grid;
        let mut v = VectorField::zeros(self.grid.clone());
        for i in 0..nr {
            let inv_r = 1.0 / g.radius(i);
            for j in 0..nt {
                v.set_r(i, j, dt.at(i, j) * inv_r);
                v.set_theta(i, j, -dr.at(i, j));
            }
        }
        // wall closure: v_theta = -r_face (psi_in - psi_wall)/dr / r_wall so
        // the trapezoid circulation on the wall equals the face-flux
        // circulation of psi exactly
        let n = nr - 1;
        for j in 0..nt {
            let inner = -g.face_radius(0) * (self.at(1, j) - self.at(0, j))
                / (g.face_spacing(0) * g.radius(0));
            v.set_theta(0, j, inner);
            let outer = -g.face_radius(n - 1) * (self.at(n, j) - self.at(n - 1, j))
                / (g.face_spacing(n - 1) * g.radius(n));
            v.set_theta(n, j, outer);
        }
        v
    }
}

/// Three-point radial derivative weights at ring `i`:
/// returns `(w_minus, w_center, w_plus, i_minus, i_plus)`.
fn radial_stencil(g: &Grid, i: usize) -> (f64, f64, f64, usize, usize) {
    let n = g.n_r();
    if i == 0 {
        let d1 = g.radius(1) - g.radius(0);
        let d2 = g.radius(2) - g.radius(0);
        // one-sided second order: f'(x0) from x0, x1, x2
        let w0 = -(d1 + d2) / (d1 * d2);
        let w1 = d2 / (d1 * (d2 - d1));
        let w2 = -d1 / (d2 * (d2 - d1));
        (w1, w0, w2, 1, 2)
    } else if i == n {
        let d1 = g.radius(n) - g.radius(n - 1);
        let d2 = g.radius(n) - g.radius(n - 2);
        let w0 = (d1 + d2) / (d1 * d2);
        let w1 = -d2 / (d1 * (d2 - d1));
        let w2 = d1 / (d2 * (d2 - d1));
        (w1, w0, w2, n - 1, n - 2)
    } else {
        let dm = g.radius(i) - g.radius(i - 1);
        let dp = g.radius(i + 1) - g.radius(i);
        let wm = -dp / (dm * (dm + dp));
        let wp = dm / (dp * (dm + dp));
        let w0 = (dp - dm) / (dm * dp);
        (wm, w0, wp, i - 1, i + 1)
    }
}

/// Vector field in polar components `(v_r, v_theta)` at the grid nodes.
#[derive(Debug, Clone)]
pub struct VectorField {
    grid: Arc<Grid>,
    v_r: Vec<f64>,
    v_theta: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let (nr, nt) = grid.node_shape();
        Self {
            grid,
            v_r: vec![0.0; nr * nt],
            v_theta: vec![0.0; nr * nt],
        }
    }

    /// Samples polar components `(v_r, v_theta) = f(r, theta)` at every node.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let (nr, nt) = grid.node_shape();
        let mut v = Self::zeros(grid.clone());
        for i in 0..nr {
            let r = grid.radius(i);
            for j in 0..nt {
                let (vr, vt) = f(r, grid.theta(j));
                v.set_r(i, j, vr);
                v.set_theta(i, j, vt);
            }
        }
        v
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    #[inline]
    pub fn r(&self, i: usize, j: usize) -> f64 {
        self.v_r[i * self.grid.n_theta() + j]
    }

    #[inline]
    pub fn theta(&self, i: usize, j: usize) -> f64 {
        self.v_theta[i * self.grid.n_theta() + j]
    }

    #[inline]
    pub fn set_r(&mut self, i: usize, j: usize, v: f64) {
        let nt = self.grid.n_theta();
        self.v_r[i * nt + j] = v;
    }

    #[inline]
    pub fn set_theta(&mut self, i: usize, j: usize, v: f64) {
        let nt = self.grid.n_theta();
        self.v_theta[i * nt + j] = v;
    }

    /// Cartesian components at node `(i, j)`.
    pub fn cartesian(&self, i: usize, j: usize) -> (f64, f64) {
        let th = self.grid.theta(j);
        let (c, s) = (th.cos(), th.sin());
        let (vr, vt) = (self.r(i, j), self.theta(i, j));
        (vr * c - vt * s, vr * s + vt * c)
    }

    pub fn is_finite(&self) -> bool {
        self.v_r.iter().chain(self.v_theta.iter()).all(|v| v.is_finite())
    }

    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        for (a, b) in self.v_r.iter_mut().zip(other.v_r.iter()) {
            *a += alpha * b;
        }
        for (a, b) in self.v_theta.iter_mut().zip(other.v_theta.iter()) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for v in self.v_r.iter_mut().chain(self.v_theta.iter_mut()) {
            *v *= c;
        }
    }

    pub fn sup_norm(&self) -> f64 {
        let mut m = 0.0_f64;
        for (a, b) in self.v_r.iter().zip(self.v_theta.iter()) {
            m = m.max(a.hypot(*b));
        }
        m
    }

    /// `int u . w dx` with the full volume quadrature.
    pub fn inner_product(&self, other: &Self) -> f64 {
        let (nr, nt) = self.grid.node_shape();
        let mut total = 0.0;
        for i in 0..nr {
            let w = self.grid.volume_weight(i);
            let mut row = 0.0;
            for j in 0..nt {
                row += self.r(i, j) * other.r(i, j) + self.theta(i, j) * other.theta(i, j);
            }
            total += w * row;
        }
        total
    }

    /// `||u||^2_{L2}`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.inner_product(self)
    }

    /// Pointwise 2D cross product `self x other = v_r w_theta - v_theta w_r`
    /// (frame invariant form of `z_1 u_2 - z_2 u_1`).
    pub fn cross(&self, other: &Self) -> ScalarField {
        let (nr, nt) = self.grid.node_shape();
        let mut out = ScalarField::zeros(self.grid.clone());
        for i in 0..nr {
            for j in 0..nt {
                out.set(
                    i,
                    j,
                    self.r(i, j) * other.theta(i, j) - self.theta(i, j) * other.r(i, j),
                );
            }
        }
        out
    }

    /// Discrete divergence `(1/r) d_r(r v_r) + (1/r) d_theta v_theta` at the
    /// nodes (centered interior, one-sided at walls).
    pub fn divergence(&self) -> ScalarField {
        let (nr, nt) = self.grid.node_shape();
        let g = &self.grid;
        let r_vr = ScalarField::from_data(
            self.grid.clone(),
            (0..nr * nt)
                .map(|k| g.radius(k / nt) * self.v_r[k])
                .collect(),
        )
        .expect("matching dims");
        let d_r = r_vr.d_r();
        let vt = ScalarField::from_data(self.grid.clone(), self.v_theta.clone()).expect("dims");
        let d_t = vt.d_theta();
        let mut out = ScalarField::zeros(self.grid.clone());
        for i in 0..nr {
            let inv_r = 1.0 / g.radius(i);
            for j in 0..nt {
                out.set(i, j, inv_r * (d_r.at(i, j) + d_t.at(i, j)));
            }
        }
        out
    }

    /// Discrete scalar curl `(1/r) d_r(r v_theta) - (1/r) d_theta v_r`.
    pub fn curl(&self) -> ScalarField {
        let (nr, nt) = self.grid.node_shape();
        let g = &self.grid;
        let r_vt = ScalarField::from_data(
            self.grid.clone(),
            (0..nr * nt)
                .map(|k| g.radius(k / nt) * self.v_theta[k])
                .collect(),
        )
        .expect("dims");
        let d_r = r_vt.d_r();
        let vr = ScalarField::from_data(self.grid.clone(), self.v_r.clone()).expect("dims");
        let d_t = vr.d_theta();
        let mut out = ScalarField::zeros(self.grid.clone());
        for i in 0..nr {
            let inv_r = 1.0 / g.radius(i);
            for j in 0..nt {
                out.set(i, j, inv_r * (d_r.at(i, j) - d_t.at(i, j)));
            }
        }
        out
    }

    /// Rate-of-strain components `(D_rr, D_rtheta, D_thetatheta)`.
    pub fn strain(&self) -> (ScalarField, ScalarField, ScalarField) {
        let (nr, nt) = self.grid.node_shape();
        let g = &self.grid;
        let vr = ScalarField::from_data(self.grid.clone(), self.v_r.clone()).expect("dims");
        let vt_over_r = ScalarField::from_data(
            self.grid.clone(),
            (0..nr * nt)
                .map(|k| self.v_theta[k] / g.radius(k / nt))
                .collect(),
        )
        .expect("dims");
        let d_rr = vr.d_r();
        let d_vr_t = vr.d_theta();
        let d_vtr_r = vt_over_r.d_r();
        let vt = ScalarField::from_data(self.grid.clone(), self.v_theta.clone()).expect("dims");
        let d_vt_t = vt.d_theta();

        let mut drr = ScalarField::zeros(self.grid.clone());
        let mut drt = ScalarField::zeros(self.grid.clone());
        let mut dtt = ScalarField::zeros(self.grid.clone());
        for i in 0..nr {
            let r = g.radius(i);
            for j in 0..nt {
                drr.set(i, j, d_rr.at(i, j));
                drt.set(
                    i,
                    j,
                    0.5 * (r * d_vtr_r.at(i, j) + d_vr_t.at(i, j) / r),
                );
                dtt.set(i, j, d_vt_t.at(i, j) / r + self.r(i, j) / r);
            }
        }
        (drr, drt, dtt)
    }

    /// `int D(self) : D(other) dx` over the full quadrature.
    pub fn strain_inner_product(&self, other: &Self) -> f64 {
        let (a_rr, a_rt, a_tt) = self.strain();
        let (b_rr, b_rt, b_tt) = other.strain();
        let (nr, nt) = self.grid.node_shape();
        let mut total = 0.0;
        for i in 0..nr {
            let w = self.grid.volume_weight(i);
            for j in 0..nt {
                total += w
                    * (a_rr.at(i, j) * b_rr.at(i, j)
                        + 2.0 * a_rt.at(i, j) * b_rt.at(i, j)
                        + a_tt.at(i, j) * b_tt.at(i, j));
            }
        }
        total
    }

    /// Trapezoid circulation `oint v . s ds` around the given circle in the
    /// tangent direction `s = (n_2, -n_1)`.
    pub fn circulation(&self, side: BoundarySide) -> f64 {
        let g = &self.grid;
        let i = g.wall_ring(side);
        let sign = g.tangent_sign(side);
        let w = g.arc_weight(side);
        let mut total = 0.0;
        for j in 0..g.n_theta() {
            total += self.theta(i, j);
        }
        sign * w * total
    }
}
