//! Snapshots restart a run exactly, and identical inputs give identical fields.

use std::fs::File;
use std::io::BufReader;
use std::sync::Arc;

use krl::gas::FluidState;
use krl::grids::{DistributionField, SpatialGrid, VelocityGrid};
use krl::kinetic::{maxwellian_field, run, RunOptions, SolverConfig};

fn initial() -> (DistributionField, SolverConfig) {
    let space = Arc::new(SpatialGrid::new(-1.0, 1.0, 120).unwrap());
    let velocity = Arc::new(VelocityGrid::new([0.0; 3], 6.0, 10).unwrap());
    let states: Vec<FluidState> = space
        .centers()
        .iter()
        .map(|x| {
            let b = (-(x / 0.2).powi(2)).exp();
            FluidState::planar(1.0 + 0.1 * b, 0.05 * b, 1.0 - 0.05 * b)
        })
        .collect();
    let far = FluidState::planar(1.0, 0.0, 1.0);
    let f = maxwellian_field(&states, space, velocity).unwrap();
    (f, SolverConfig::new(0.05, 10.0, far, far).unwrap())
}

#[test]
fn restart_from_snapshot_matches_continuous_run() {
    let dir = tempfile::tempdir().unwrap();
    let (f, cfg) = initial();
    let opts = RunOptions { snapshots: Some((dir.path().to_path_buf(), 5)), max_steps: Some(10), ..Default::default() };
    let full = run(f.clone(), &cfg, &mut [], opts).unwrap();
    assert_eq!(full.steps, 10);
    assert!(full.snapshots.iter().any(|p| p.ends_with("snap_000005.krl")));

    let snap = dir.path().join("snap_000005.krl");
    let restored =
        DistributionField::read_snapshot(BufReader::new(File::open(snap).unwrap()), f.space().clone(), f.velocity().clone())
            .unwrap();
    assert!(restored.time > 0.0);
    let tail = run(restored, &cfg, &mut [], RunOptions { max_steps: Some(5), ..Default::default() }).unwrap();
    assert_eq!(tail.field.time, full.field.time);
    assert_eq!(tail.field.values(), full.field.values());
}

#[test]
fn identical_runs_are_bitwise_equal() {
    let (f, cfg) = initial();
    let a = run(f.clone(), &cfg, &mut [], RunOptions { max_steps: Some(8), ..Default::default() }).unwrap();
    let b = run(f, &cfg, &mut [], RunOptions { max_steps: Some(8), ..Default::default() }).unwrap();
    assert_eq!(a.field.values(), b.field.values());
    let (mut x, mut y) = (Vec::new(), Vec::new());
    a.field.write_snapshot(&mut x).unwrap();
    b.field.write_snapshot(&mut y).unwrap();
    assert_eq!(x, y);
}
