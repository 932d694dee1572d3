use proptest::prelude::*;

use coulombflow::diagnostics::{hwi_check, quadratic_moment_ode};
use coulombflow::freecalc::{fisher_terms, free_entropy, relative_free_entropy};
use coulombflow::measures::{wasserstein, EmpiricalMeasure, Grid, GridDensity};
use coulombflow::pde::step;
use coulombflow::potentials::{equilibrium_closed_form, euler_lagrange_residual, Potential};

fn gaussian(grid: &Grid, mean: f64, std: f64) -> GridDensity {
    GridDensity::from_fn(*grid, |x| (-(x - mean) * (x - mean) / (2.0 * std * std)).exp()).unwrap()
}

/// Fourth-order Runge-Kutta for `m' = a − 2θ m`.
fn rk4_m2(theta: f64, a: f64, m0: f64, t: f64) -> f64 {
    let steps = 2000;
    let h = t / steps as f64;
    let f = |m: f64| a - 2.0 * theta * m;
    let mut m = m0;
    for _ in 0..steps {
        let k1 = f(m);
        let k2 = f(m + 0.5 * h * k1);
        let k3 = f(m + 0.5 * h * k2);
        let k4 = f(m + h * k3);
        m += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn wasserstein_is_a_metric_on_atoms(
        a in prop::collection::vec(-5.0f64..5.0, 1..40),
        b in prop::collection::vec(-5.0f64..5.0, 1..40),
        c in prop::collection::vec(-5.0f64..5.0, 1..40),
        p in 1.0f64..=2.0,
    ) {
        let (a, b, c) = (EmpiricalMeasure::new(a).unwrap(), EmpiricalMeasure::new(b).unwrap(), EmpiricalMeasure::new(c).unwrap());
        let m = 2048;
        let ab = wasserstein(p, &a, &b, m).unwrap();
        let ba = wasserstein(p, &b, &a, m).unwrap();
        let ac = wasserstein(p, &a, &c, m).unwrap();
        let cb = wasserstein(p, &c, &b, m).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12 * (1.0 + ab));
        prop_assert!(ab <= ac + cb + 1e-9);
        prop_assert!(wasserstein(p, &a, &a, m).unwrap() <= 1e-12);
    }

    #[test]
    fn translation_costs_exactly_its_shift(
        atoms in prop::collection::vec(-3.0f64..3.0, 1..30),
        shift in -2.0f64..2.0,
        p in 1.0f64..=2.0,
    ) {
        let moved: Vec<f64> = atoms.iter().map(|x| x + shift).collect();
        let w = wasserstein(p, &EmpiricalMeasure::new(atoms).unwrap(), &EmpiricalMeasure::new(moved).unwrap(), 1024).unwrap();
        prop_assert!((w - shift.abs()).abs() < 1e-9);
    }

    #[test]
    fn equilibrium_minimizes_free_entropy_and_satisfies_hwi(
        theta in 0.3f64..3.0,
        mean in -0.5f64..0.5,
        std in 0.3f64..0.9,
    ) {
        let pot = Potential::quadratic(theta).unwrap();
        let grid = Grid::symmetric(5.0, 2048).unwrap();
        let eq = equilibrium_closed_form(&pot, &grid).unwrap();
        // hwi_check only accepts a reference that passes the Euler-Lagrange check
        prop_assume!(euler_lagrange_residual(&eq, &pot).unwrap() <= 1e-2);
        let rho = gaussian(&grid, mean, std);
        let rel = relative_free_entropy(&rho, &pot, &eq).unwrap();
        prop_assert!(rel >= -1e-4, "relative entropy {rel}");
        // K = V'' = 2θ
        let slack = hwi_check(&rho, &pot, &eq, 2.0 * theta).unwrap();
        prop_assert!(slack >= -1e-3, "HWI slack {slack}");
        let terms = fisher_terms(&rho, &pot);
        prop_assert!((terms.grad_sq - 4.0 * terms.fisher).abs() <= 1e-10 * terms.grad_sq.max(1e-300));
    }

    #[test]
    fn upwind_steps_do_not_raise_free_entropy(
        theta in 0.3f64..2.0,
        mean in -0.8f64..0.8,
        std in 0.3f64..0.8,
    ) {
        let pot = Potential::quadratic(theta).unwrap();
        let grid = Grid::symmetric(5.0, 512).unwrap();
        let mut rho = gaussian(&grid, mean, std);
        let mut sigma = free_entropy(&rho, &pot).unwrap();
        for _ in 0..20 {
            rho = step(&rho, &pot, 1e-3).unwrap();
            let next = free_entropy(&rho, &pot).unwrap();
            prop_assert!(next <= sigma + 1e-9, "{next} > {sigma}");
            sigma = next;
        }
    }

    #[test]
    fn moment_ode_matches_runge_kutta(
        theta in 0.1f64..3.0,
        beta in 0.5f64..4.0,
        n in 2usize..512,
        m0 in 0.0f64..4.0,
        t in 0.0f64..5.0,
    ) {
        let a = 1.0 + (2.0 / beta - 1.0) / n as f64;
        let exact = quadratic_moment_ode(theta, beta, n, m0, t);
        prop_assert!((exact - rk4_m2(theta, a, m0, t)).abs() < 1e-9);
    }
}
