//! Annular domain: grid, boundary parametrization, curvature, distance
//! function and inflow/outflow classification.
//!
//! Orientation conventions used throughout the crate:
//! * outward normal `n` points away from the origin on the outer circle `S_0`
//!   and toward the origin on the inner circle `S_1`;
//! * the boundary tangent is `s = (n_2, -n_1)`, i.e. `-e_theta` on `S_0` and
//!   `+e_theta` on `S_1`;
//! * the signed curvature entering the slip identity is `+1/R_out` on `S_0`
//!   and `-1/R_in` on `S_1` (the convention under which the identity
//!   `2 D(v) n.s + 2 k v.s = g` holds for the analytic rotation flow).

use crate::error::FlowError;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// The two boundary circles of the annulus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundarySide {
    /// Outer circle `S_0`, radius `r_outer`.
    Outer,
    /// Inner circle `S_1`, radius `r_inner`.
    Inner,
}

/// Node-centered polar mesh on the annulus `r_inner <= r <= r_outer`.
///
/// Radial nodes run `0..=n_r` (so `n_r` cells), angular nodes `0..n_theta`
/// with uniform spacing `2 pi / n_theta` and periodic wrap.
#[derive(Debug, Clone)]
pub struct Grid {
    r_inner: f64,
    r_outer: f64,
    n_r: usize,
    n_theta: usize,
    stretching: f64,
    radial_nodes: Vec<f64>,
    /// Face radii `r_{i+1/2}`, length `n_r`.
    face_radii: Vec<f64>,
    /// Radial control widths per node: half cells at the walls.
    node_widths: Vec<f64>,
}

impl Grid {
    /// Builds the grid. `beta = 0` gives uniform radial spacing; `beta > 0`
    /// clusters nodes toward both walls with a tanh map.
    pub fn build(
        r_inner: f64,
        r_outer: f64,
        n_r: usize,
        n_theta: usize,
        beta: f64,
    ) -> Result<Self, FlowError> {
        if !(r_inner > 0.0) || !r_inner.is_finite() {
            return Err(FlowError::InvalidGrid(format!(
                "inner radius must be positive, got {r_inner}"
            )));
        }
        if !(r_outer > r_inner) || !r_outer.is_finite() {
            return Err(FlowError::InvalidGrid(format!(
                "outer radius must exceed inner radius, got {r_inner} >= {r_outer}"
            )));
        }
        if n_r < 4 {
            return Err(FlowError::InvalidGrid(format!("n_r must be >= 4, got {n_r}")));
        }
        if n_theta < 8 || n_theta % 2 != 0 {
            return Err(FlowError::InvalidGrid(format!(
                "n_theta must be even and >= 8, got {n_theta}"
            )));
        }
        if !(beta >= 0.0) {
            return Err(FlowError::InvalidGrid(format!(
                "stretching parameter must be >= 0, got {beta}"
            )));
        }

        let mut radial_nodes = Vec::with_capacity(n_r + 1);
        for i in 0..=n_r {
            let s = i as f64 / n_r as f64;
            let y = if beta > 0.0 {
                // tanh map symmetric about the mid radius, clustering both walls
                0.5 * (1.0 + (beta * (2.0 * s - 1.0)).tanh() / beta.tanh())
            } else {
                s
            };
            radial_nodes.push(r_inner + (r_outer - r_inner) * y);
        }
        // pin the walls exactly
        radial_nodes[0] = r_inner;
        radial_nodes[n_r] = r_outer;

        let face_radii: Vec<f64> = (0..n_r)
            .map(|i| 0.5 * (radial_nodes[i] + radial_nodes[i + 1]))
            .collect();
        let mut node_widths = Vec::with_capacity(n_r + 1);
        node_widths.push(face_radii[0] - radial_nodes[0]);
        for i in 1..n_r {
            node_widths.push(face_radii[i] - face_radii[i - 1]);
        }
        node_widths.push(radial_nodes[n_r] - face_radii[n_r - 1]);

        Ok(Self {
            r_inner,
            r_outer,
            n_r,
            n_theta,
            stretching: beta,
            radial_nodes,
            face_radii,
            node_widths,
        })
    }

    pub fn r_inner(&self) -> f64 {
        self.r_inner
    }

    pub fn r_outer(&self) -> f64 {
        self.r_outer
    }

    /// Radial cell count; there are `n_r + 1` radial node rings.
    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn stretching(&self) -> f64 {
        self.stretching
    }

    /// Node dimensions `(radial rings, angular nodes)`.
    pub fn node_shape(&self) -> (usize, usize) {
        (self.n_r + 1, self.n_theta)
    }

    pub fn radial_nodes(&self) -> &[f64] {
        &self.radial_nodes
    }

    pub fn radius(&self, i: usize) -> f64 {
        self.radial_nodes[i]
    }

    /// Face radius `r_{i+1/2}` between node rings `i` and `i+1`.
    pub fn face_radius(&self, i: usize) -> f64 {
        self.face_radii[i]
    }

    /// Radial spacing `r_{i+1} - r_i` across face `i+1/2`.
    pub fn face_spacing(&self, i: usize) -> f64 {
        self.radial_nodes[i + 1] - self.radial_nodes[i]
    }

    /// Control width of node ring `i` (half cells at the walls).
    pub fn node_width(&self, i: usize) -> f64 {
        self.node_widths[i]
    }

    pub fn d_theta(&self) -> f64 {
        2.0 * PI / self.n_theta as f64
    }

    pub fn theta(&self, j: usize) -> f64 {
        j as f64 * self.d_theta()
    }

    /// Volume weight of node `(i, j)` in the full quadrature
    /// `int f dx ~ sum f_ij r_i w_i dtheta` (boundary rings carry half cells).
    pub fn volume_weight(&self, i: usize) -> f64 {
        self.radial_nodes[i] * self.node_widths[i] * self.d_theta()
    }

    /// Volume weight with zero weight on the wall rings. This is the
    /// quadrature under which the discrete Green identity against the flux
    /// circulation is exact; the circulation system assembly uses it.
    pub fn interior_volume_weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.n_r {
            0.0
        } else {
            self.volume_weight(i)
        }
    }

    /// Boundary arc weight `R dtheta` on the given circle.
    pub fn arc_weight(&self, side: BoundarySide) -> f64 {
        self.wall_radius(side) * self.d_theta()
    }

    pub fn wall_radius(&self, side: BoundarySide) -> f64 {
        match side {
            BoundarySide::Outer => self.r_outer,
            BoundarySide::Inner => self.r_inner,
        }
    }

    /// Radial node index of the given wall ring.
    pub fn wall_ring(&self, side: BoundarySide) -> usize {
        match side {
            BoundarySide::Outer => self.n_r,
            BoundarySide::Inner => 0,
        }
    }

    /// Signed curvature of the wall in the slip-identity convention.
    pub fn curvature(&self, side: BoundarySide) -> f64 {
        match side {
            BoundarySide::Outer => 1.0 / self.r_outer,
            BoundarySide::Inner => -1.0 / self.r_inner,
        }
    }

    /// Sign relating the tangent `s = (n_2, -n_1)` to `e_theta` on the wall:
    /// `s = tangent_sign * e_theta`.
    pub fn tangent_sign(&self, side: BoundarySide) -> f64 {
        match side {
            BoundarySide::Outer => -1.0,
            BoundarySide::Inner => 1.0,
        }
    }

    /// Distance from the node ring `i` to the boundary.
    pub fn wall_distance(&self, i: usize) -> f64 {
        let r = self.radial_nodes[i];
        (r - self.r_inner).min(self.r_outer - r)
    }

    /// Radial component of `grad d` at ring `i` (`+1` in the inner half,
    /// `-1` in the outer half). On the walls this equals `-n . e_r`.
    pub fn grad_distance_radial(&self, i: usize) -> f64 {
        let r = self.radial_nodes[i];
        if r - self.r_inner < self.r_outer - r {
            1.0
        } else {
            -1.0
        }
    }
}

/// Smooth temporal ramp `0 -> 1` over `[0, t_on]`, constant afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ramp {
    pub t_on: f64,
}

impl Ramp {
    fn factor(&self, t: f64) -> f64 {
        if t >= self.t_on {
            1.0
        } else if t <= 0.0 {
            0.0
        } else {
            0.5 * (1.0 - (PI * t / self.t_on).cos())
        }
    }

    fn factor_dt(&self, t: f64) -> f64 {
        if t >= self.t_on || t <= 0.0 {
            0.0
        } else {
            0.5 * PI / self.t_on * (PI * t / self.t_on).sin()
        }
    }
}

/// Closed-form boundary trace from the catalog:
/// `ramp(t) * (c + A cos(theta) + B sin(theta))`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TraceProfile {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub cos_amp: f64,
    #[serde(default)]
    pub sin_amp: f64,
    #[serde(default)]
    pub ramp: Option<Ramp>,
}

impl TraceProfile {
    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            ..Self::default()
        }
    }

    fn ramp_factor(&self, t: f64) -> f64 {
        self.ramp.map_or(1.0, |r| r.factor(t))
    }

    pub fn value(&self, theta: f64, t: f64) -> f64 {
        self.ramp_factor(t) * (self.constant + self.cos_amp * theta.cos() + self.sin_amp * theta.sin())
    }

    /// `d/dtheta` of the trace.
    pub fn d_theta(&self, theta: f64, t: f64) -> f64 {
        self.ramp_factor(t) * (-self.cos_amp * theta.sin() + self.sin_amp * theta.cos())
    }

    /// `d/dt` of the trace.
    pub fn d_t(&self, theta: f64, t: f64) -> f64 {
        let df = self.ramp.map_or(0.0, |r| r.factor_dt(t));
        df * (self.constant + self.cos_amp * theta.cos() + self.sin_amp * theta.sin())
    }

    /// Upper bound on `|value|` over the circle at time `t`.
    pub fn sup(&self, t: f64) -> f64 {
        self.ramp_factor(t).abs() * (self.constant.abs() + self.cos_amp.hypot(self.sin_amp))
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.cos_amp == 0.0 && self.sin_amp == 0.0
    }

    /// Mean of the trace over the circle (the cos/sin modes average out).
    pub fn mean(&self, t: f64) -> f64 {
        self.ramp_factor(t) * self.constant
    }
}

/// Label of one boundary node in the inflow/outflow partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionLabel {
    /// `a < -eps_a`: fluid enters.
    Inflow,
    /// `a > eps_a`: fluid leaves.
    Outflow,
    /// `|a| <= eps_a`.
    Impermeable,
}

/// Per-node labels on both circles at a fixed time.
#[derive(Debug, Clone)]
pub struct BoundaryClassification {
    pub inner: Vec<RegionLabel>,
    pub outer: Vec<RegionLabel>,
}

impl BoundaryClassification {
    pub fn labels(&self, side: BoundarySide) -> &[RegionLabel] {
        match side {
            BoundarySide::Inner => &self.inner,
            BoundarySide::Outer => &self.outer,
        }
    }

    pub fn count(&self, label: RegionLabel) -> usize {
        self.inner
            .iter()
            .chain(self.outer.iter())
            .filter(|&&l| l == label)
            .count()
    }
}

/// Time-dependent traces `a` (normal velocity) and `b` (vorticity) on the two
/// circles, with the inflow/outflow classification band `eps_a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryData {
    pub a_inner: TraceProfile,
    pub a_outer: TraceProfile,
    pub b_inner: TraceProfile,
    pub b_outer: TraceProfile,
    /// Relative half-width of the impermeable band: `eps_a = eps_a_rel * max|a|`.
    #[serde(default = "default_eps_a_rel")]
    pub eps_a_rel: f64,
}

fn default_eps_a_rel() -> f64 {
    1e-10
}

impl Default for BoundaryData {
    fn default() -> Self {
        Self {
            a_inner: TraceProfile::default(),
            a_outer: TraceProfile::default(),
            b_inner: TraceProfile::default(),
            b_outer: TraceProfile::default(),
            eps_a_rel: default_eps_a_rel(),
        }
    }
}

impl BoundaryData {
    /// A radial source of total volume rate `q` through the annulus:
    /// uniform inflow on `S_1`, uniform outflow on `S_0` (for `q > 0`).
    pub fn radial_source(q: f64, r_inner: f64, r_outer: f64) -> Self {
        Self {
            a_inner: TraceProfile::constant(-q / (2.0 * PI * r_inner)),
            a_outer: TraceProfile::constant(q / (2.0 * PI * r_outer)),
            ..Self::default()
        }
    }

    pub fn a(&self, side: BoundarySide) -> &TraceProfile {
        match side {
            BoundarySide::Inner => &self.a_inner,
            BoundarySide::Outer => &self.a_outer,
        }
    }

    pub fn b(&self, side: BoundarySide) -> &TraceProfile {
        match side {
            BoundarySide::Inner => &self.b_inner,
            BoundarySide::Outer => &self.b_outer,
        }
    }

    pub fn a_is_zero(&self) -> bool {
        self.a_inner.is_zero() && self.a_outer.is_zero()
    }

    pub fn b_is_time_constant(&self) -> bool {
        self.b_inner.ramp.is_none() && self.b_outer.ramp.is_none()
    }

    /// Classification half-width at time `t`.
    pub fn eps_a(&self, t: f64) -> f64 {
        let scale = self.a_inner.sup(t).max(self.a_outer.sup(t));
        if scale == 0.0 {
            1e-14
        } else {
            self.eps_a_rel * scale
        }
    }

    /// Net boundary flux `oint_Gamma a ds` by trapezoid quadrature over the
    /// grid's angular nodes (exact for the trigonometric catalog).
    pub fn compatibility_residual(&self, grid: &Grid, t: f64) -> f64 {
        let mut total = 0.0;
        for side in [BoundarySide::Inner, BoundarySide::Outer] {
            let w = grid.arc_weight(side);
            for j in 0..grid.n_theta() {
                total += self.a(side).value(grid.theta(j), t) * w;
            }
        }
        total
    }

    /// Checks `oint a ds = 0` to tolerance `1e-10 max|a|` (absolute `1e-14`
    /// for identically zero flux).
    pub fn check_compatibility(&self, grid: &Grid, t: f64) -> Result<(), FlowError> {
        let residual = self.compatibility_residual(grid, t);
        let scale = self.a_inner.sup(t).max(self.a_outer.sup(t));
        let tolerance = if scale == 0.0 { 1e-14 } else { 1e-10 * scale };
        if residual.abs() > tolerance {
            Err(FlowError::IncompatibleFlux {
                residual,
                tolerance,
            })
        } else {
            Ok(())
        }
    }

    /// Partitions the boundary nodes into inflow / outflow / impermeable at
    /// time `t`. Total function; labels are stable under perturbations of `a`
    /// smaller than `eps_a / 2`.
    pub fn classify(&self, grid: &Grid, t: f64) -> BoundaryClassification {
        let eps = self.eps_a(t);
        let classify_side = |profile: &TraceProfile| {
            (0..grid.n_theta())
                .map(|j| {
                    let a = profile.value(grid.theta(j), t);
                    if a < -eps {
                        RegionLabel::Inflow
                    } else if a > eps {
                        RegionLabel::Outflow
                    } else {
                        RegionLabel::Impermeable
                    }
                })
                .collect::<Vec<_>>()
        };
        BoundaryClassification {
            inner: classify_side(&self.a_inner),
            outer: classify_side(&self.a_outer),
        }
    }
}
