//! Smooth data started at local equilibrium relax onto the Chapman–Enskog
//! micro part within a few collision times.

use std::sync::Arc;

use krl::diagnostics::micro_split_norms;
use krl::gas::FluidState;
use krl::grids::{SpatialGrid, VelocityGrid};
use krl::kinetic::{maxwellian_field, run, RunOptions, SolverConfig};
use krl::macro_micro::reference_maxwellian;

#[test]
fn micro_part_approaches_chapman_enskog() {
    let kappa = 0.01;
    let space = Arc::new(SpatialGrid::new(-1.0, 1.0, 400).unwrap());
    let velocity = Arc::new(VelocityGrid::new([0.0; 3], 6.5, 12).unwrap());
    let states: Vec<FluidState> = space
        .centers()
        .iter()
        .map(|x| {
            let b = (-(x / 0.2).powi(2)).exp();
            FluidState::planar(1.0 + 0.08 * b, 0.04 * b, 1.0 + 0.06 * b)
        })
        .collect();
    let far = FluidState::planar(1.0, 0.0, 1.0);
    let f = maxwellian_field(&states, space, velocity.clone()).unwrap();
    let mut cfg = SolverConfig::new(kappa, 1.0, far, far).unwrap();
    cfg.end_time = 10.0 / cfg.collision_frequency(&far);
    let m = reference_maxwellian(1.0, 1.06, &velocity).unwrap();

    let start = micro_split_norms(&f, &cfg, &m).unwrap();
    assert!(start[0] < 1e-12, "equilibrium data has a micro part {}", start[0]);
    let t = run(f, &cfg, &mut [], RunOptions::default()).unwrap();
    let [g, g_ce, pi1] = micro_split_norms(&t.field, &cfg, &m).unwrap();
    assert!(g > 0.0 && g_ce > 0.0);
    assert!(pi1 / g < 0.2, "Π₁/G = {} (G {g:e}, G_CE {g_ce:e})", pi1 / g);
    assert!((g - g_ce).abs() / g < 0.2, "G {g:e} vs G_CE {g_ce:e}");
}
