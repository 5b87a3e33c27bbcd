//! Weak-formulation residual of the inviscid run under grid refinement.
//!
//! For a test function compactly supported away from the outflow and
//! impermeable boundary, the transported vorticity must balance the initial
//! data and the inflow boundary term; the residual shrinks with the grid.

use annulus_flow::diagnostics::{
    self, AngularProfile, RadialProfile, TemporalProfile, TestFunction,
};
use annulus_flow::evolution::{self, TimeIntegratorConfig};
use annulus_flow::geometry::TraceProfile;
use annulus_flow::velocity::FlowSystem;
use annulus_flow::{BoundaryData, Grid, ScalarField};
use std::sync::Arc;

fn main() {
    let psi = TestFunction {
        name: "inflow-plateau".into(),
        radial: RadialProfile::InnerWall {
            plateau: 0.2,
            taper: 0.3,
        },
        angular: AngularProfile::Uniform,
        temporal: TemporalProfile { t_end: 0.4 },
    };
    println!("{:>6} {:>12} {:>12} {:>12} {:>8}", "n_r", "transport", "inflow", "residual", "order");
    let mut prev: Option<f64> = None;
    for level in 0..4 {
        let n = 32 << level;
        let grid = Arc::new(Grid::build(1.0, 2.0, n, 16, 0.0).unwrap());
        let boundary = BoundaryData {
            b_inner: TraceProfile::constant(1.0),
            ..BoundaryData::radial_source(2.0 * std::f64::consts::PI, 1.0, 2.0)
        };
        let system = Arc::new(FlowSystem::new(grid.clone(), boundary).unwrap());
        let cfg = TimeIntegratorConfig {
            dt_max: 1e-3,
            t_end: 0.4,
            ..TimeIntegratorConfig::default()
        };
        let times: Vec<f64> = (0..=40).map(|k| 0.01 * k as f64).collect();
        let traj = evolution::run(
            &system,
            ScalarField::zeros(grid.clone()),
            vec![0.0],
            0.0,
            cfg,
            &times,
            &[2.0],
        )
        .unwrap();
        let res = diagnostics::weak_euler_residual(&system, &traj, &psi).unwrap();
        let order = prev.map_or_else(String::new, |p: f64| {
            format!("{:.2}", (p / res.magnitude).log2())
        });
        println!(
            "{:>6} {:>12.4e} {:>12.4e} {:>12.4e} {:>8}",
            n, res.transport, res.inflow, res.magnitude, order
        );
        prev = Some(res.magnitude);
    }
}
