use nonlocal_lwr::diagnostics::{bv_seminorm, order_excess};
use nonlocal_lwr::ftl::{arithmetic_mean_density, discretize_density, harmonic_mean_density, DensityProfile};
use nonlocal_lwr::reference::{eo_flux, EoFlux};
use nonlocal_lwr::scheme::{cfl_dt, filter, step_w};
use nonlocal_lwr::{lagrangian_weights, Kernel, LagrangianGrid, VelocityModel};
use proptest::prelude::*;

fn kernel() -> impl Strategy<Value = Kernel> {
    prop::sample::select(Kernel::ALL.to_vec())
}

fn spacings(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1.0f64..20.0, n)
}

fn tail_tol(k: Kernel) -> f64 {
    if k == Kernel::Cauchy {
        1e-4
    } else {
        1e-12
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rows_have_unit_mass_and_decrease(k in kernel(), ratio in 0.1f64..40.0) {
        let dz = 0.01;
        let row = lagrangian_weights(k, ratio * dz, dz, tail_tol(k)).unwrap();
        let w = row.weights();
        // I_0 is defined from the tail summed backwards; sum the same way
        let mass = w[0] + w[1..].iter().rev().sum::<f64>();
        prop_assert!((mass - 1.0).abs() <= 2.0 * f64::EPSILON);
        prop_assert!(w.windows(2).all(|p| p[1] <= p[0] + 1e-16));
        prop_assert!(w.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn filter_stays_in_range(k in kernel(), ratio in 0.25f64..16.0, y in spacings(48), far in 1.0f64..20.0) {
        let row = lagrangian_weights(k, ratio * 0.1, 0.1, tail_tol(k)).unwrap();
        let w = filter(&y, &row, far).unwrap();
        let lo = y.iter().copied().fold(far, f64::min);
        let hi = y.iter().copied().fold(far, f64::max);
        prop_assert!(w.iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
    }

    #[test]
    fn one_step_is_monotone(
        k in kernel(),
        ratio in 0.25f64..16.0,
        hi in spacings(40),
        drops in prop::collection::vec(0.0f64..1.0, 40),
        far in 1.0f64..20.0,
    ) {
        let dz = 0.05;
        let model = VelocityModel::linear();
        let grid = LagrangianGrid::new(dz, 40, hi[0], far).unwrap();
        let row = lagrangian_weights(k, ratio * dz, dz, tail_tol(k)).unwrap();
        let lo: Vec<f64> = hi.iter().zip(&drops).map(|(y, u)| y - u * (y - 1.0)).collect();
        let dt = cfl_dt(&model, 1.0, 20.0, dz, 0.9).unwrap();
        let a = step_w(&hi, &row, &model, dt / dz, &grid).unwrap();
        let b = step_w(&lo, &row, &model, dt / dz, &grid).unwrap();
        prop_assert!(order_excess(&a, &b) <= 1e-12);
        let mut with_far = a.clone();
        with_far.push(far);
        let mut before = hi.clone();
        before.push(far);
        prop_assert!(bv_seminorm(&with_far) <= bv_seminorm(&before) + 1e-12);
    }

    #[test]
    fn eo_flux_is_consistent_and_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0, d in 0.0f64..0.2) {
        for model in [VelocityModel::linear(), VelocityModel::quadratic()] {
            let f = EoFlux::new(model.clone()).unwrap();
            prop_assert!((f.flux(a, a) - model.flux(a)).abs() < 1e-14);
            prop_assert!(f.flux((a + d).min(1.0), b) >= f.flux(a, b) - 1e-15);
            prop_assert!(f.flux(a, (b + d).min(1.0)) <= f.flux(a, b) + 1e-15);
            prop_assert_eq!(f.flux(a, b), eo_flux(a, b, &model).unwrap());
        }
    }

    #[test]
    fn harmonic_mean_never_exceeds_arithmetic(
        raw in prop::collection::vec((0.0f64..1.0, 0.01f64..1.0), 1..30),
    ) {
        let total: f64 = raw.iter().map(|p| p.0).sum();
        prop_assume!(total > 1e-3);
        let weights: Vec<f64> = raw.iter().map(|p| p.0 / total).collect();
        let densities: Vec<f64> = raw.iter().map(|p| p.1).collect();
        prop_assert!(harmonic_mean_density(&weights, &densities) <= arithmetic_mean_density(&weights, &densities) * (1.0 + 1e-14));
    }

    #[test]
    fn vehicles_carry_the_profile_mass(inside in 0.05f64..1.0, outside in 0.05f64..1.0, ell_inv in 50u32..400) {
        let ell = 1.0 / ell_inv as f64;
        let profile = DensityProfile::boxed(inside, outside, 0.0, 1.0).unwrap();
        let cars = discretize_density(&profile, ell, -1.0, 2.0).unwrap();
        let gaps = cars.spacings();
        prop_assert!(gaps.iter().all(|&y| y >= 1.0 - 1e-9));
        let exact = inside + 2.0 * outside;
        prop_assert!((ell * cars.len() as f64 - exact).abs() <= 2.0 * ell);
    }
}
