//! Sequential and parallel execution must agree bit for bit. The grids here
//! are large enough for the rayon path to engage.

use nonlocal_lwr::experiments::{compare_ftl, FtlConfig, SweepConfig};
use nonlocal_lwr::ftl::{discretize_density, speeds, DensityProfile, FtlModel};
use nonlocal_lwr::reference::{run_eo, EoFlux, EulerianGrid};
use nonlocal_lwr::{ExecPolicy, Kernel, VelocityModel};

#[test]
fn pair_scheme_runs_agree() {
    let mut cfg = SweepConfig::jam_box(1.0 / 500.0);
    cfg.t_end = 0.3;
    let mut results = Vec::new();
    for policy in [ExecPolicy::Sequential, ExecPolicy::Parallel] {
        cfg.policy = policy;
        let (setup, traj) = cfg.run(Kernel::Triangular, 1.0 / 16.0, 0).unwrap();
        assert!(setup.y0.len() >= 512);
        results.push(traj.last().clone());
    }
    assert_eq!(results[0], results[1]);
}

#[test]
fn eo_runs_agree() {
    let flux = EoFlux::new(VelocityModel::quadratic()).unwrap();
    let grid = EulerianGrid::new(-2.0, 2.0, 1.0 / 1000.0).unwrap();
    let rho0 = grid.project(&DensityProfile::jam_box());
    let a = run_eo(&grid, &rho0, &flux, 0.5, 0.9, ExecPolicy::Sequential).unwrap();
    let b = run_eo(&grid, &rho0, &flux, 0.5, 0.9, ExecPolicy::Parallel).unwrap();
    assert_eq!(a.rho, b.rho);
}

#[test]
fn ftl_speeds_and_runs_agree() {
    let state = discretize_density(&DensityProfile::jam_box(), 1.0 / 1000.0, -1.0, 3.0).unwrap();
    let m = VelocityModel::linear();
    let kind = FtlModel::EulerianNonlocal {
        kernel: Kernel::Exponential,
        alpha: 0.5,
    };
    assert_eq!(
        speeds(&state, &kind, &m, ExecPolicy::Sequential),
        speeds(&state, &kind, &m, ExecPolicy::Parallel)
    );
    let mut cfg = FtlConfig::jam_box(0.02);
    cfg.policy = ExecPolicy::Sequential;
    let a = compare_ftl(&cfg).unwrap();
    cfg.policy = ExecPolicy::Parallel;
    let b = compare_ftl(&cfg).unwrap();
    for ((ta, sa), (tb, sb)) in a.finals.iter().zip(&b.finals) {
        assert_eq!(ta, tb);
        assert_eq!(sa.positions, sb.positions);
    }
}
