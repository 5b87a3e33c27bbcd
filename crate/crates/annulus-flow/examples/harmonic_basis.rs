//! Harmonic circulation basis of the annulus: compares the computed basis
//! function and its energy Gram matrix against the closed forms
//! `h_1 = ln(R_out / r) / ln(R_out / R_in)` and `A_11 = 2 pi / ln(R_out / R_in)`.

use annulus_flow::{BoundaryData, Grid, ScalarField};
use annulus_flow::velocity::FlowSystem;
use std::sync::Arc;

fn main() {
    let grid = Arc::new(Grid::build(1.0, 2.0, 96, 128, 0.0).unwrap());
    let system = FlowSystem::new(grid.clone(), BoundaryData::default()).unwrap();

    let exact_h = ScalarField::from_fn(grid.clone(), |r, _| (2.0 / r).ln() / 2.0_f64.ln());
    let h_err = system.basis.h(0).max_diff(&exact_h);
    let a11 = system.basis.gram()[0][0];
    let exact_a11 = 2.0 * std::f64::consts::PI / 2.0_f64.ln();

    println!("basis function max error : {h_err:.3e}");
    println!("Gram entry A11           : {a11:.8}");
    println!("closed form 2 pi / ln 2  : {exact_a11:.8}");
    println!("relative error           : {:.3e}", (a11 - exact_a11).abs() / exact_a11);
    println!("smallest eigenvalue      : {:.6}", system.basis.min_eigenvalue());
}
