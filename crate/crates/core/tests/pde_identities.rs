use retention::lattice::{evolve, lattice_moments, LatticeRule, LatticeState, SymmetricRetentionRule};
use retention::pde::stencil::{fourth_difference, second_difference};
use retention::pde::{
    grid_moments, retention_moments, solve_advection_diffusion, solve_retention,
    AdvectionDiffusionParams, GridConfig, RetentionParams, RetentionSolveOptions, SignVariant,
};

struct TestDensity {
    x: Vec<f64>,
    p: Vec<f64>,
    dx: f64,
}

/// Gaussian with mean 0.3 and variance 0.5 sampled on `[-10, 10]`; the tails
/// are below double precision at the edges.
fn test_density() -> TestDensity {
    let dx = 1e-3;
    let n = 20_001;
    let (mu, var) = (0.3, 0.5);
    let x: Vec<f64> = (0..n).map(|i| -10.0 + i as f64 * dx).collect();
    let norm = (2.0 * std::f64::consts::PI * var).sqrt();
    let p = x.iter().map(|x| (-(x - mu) * (x - mu) / (2.0 * var)).exp() / norm).collect();
    TestDensity { x, p, dx }
}

impl TestDensity {
    fn moment(&self, n: i32) -> f64 {
        self.x.iter().zip(&self.p).map(|(x, p)| x.powi(n) * p).sum::<f64>() * self.dx
    }

    fn weighted_derivative(&self, n: i32, order: u32) -> f64 {
        let reach = order as usize / 2;
        (reach..self.x.len() - reach)
            .map(|i| {
                let d = match order {
                    2 => second_difference(&self.p, i).unwrap() / self.dx.powi(2),
                    _ => fourth_difference(&self.p, i).unwrap() / self.dx.powi(4),
                };
                self.x[i].powi(n) * d
            })
            .sum::<f64>()
            * self.dx
    }
}

#[test]
fn second_derivative_moments() {
    let d = test_density();
    for n in 2..=4 {
        let lhs = d.weighted_derivative(n, 2);
        let rhs = (n * (n - 1)) as f64 * d.moment(n - 2);
        assert!((lhs / rhs - 1.0).abs() < 1e-3, "n = {n}: {lhs} vs {rhs}");
    }
}

#[test]
fn fourth_derivative_moment() {
    let d = test_density();
    let lhs = d.weighted_derivative(4, 4);
    let rhs = 24.0 * d.moment(0);
    assert!((lhs / rhs - 1.0).abs() < 5e-3, "{lhs} vs {rhs}");
}

#[test]
fn lattice_and_pde_share_variance() {
    // K2 = dx^2 / (2 dt) with dx = dt = 1 gives Var(n) = n (1-k) on both sides.
    for k in [0.0, 0.3, 0.7] {
        let n = 40;
        let lattice = lattice_moments(
            &evolve(
                &LatticeState::delta(1.0).unwrap(),
                &LatticeRule::from(SymmetricRetentionRule::new(k).unwrap()),
                n,
            )
            .unwrap(),
        );
        let continuum = retention_moments(&RetentionParams::new(k, 0.5, 1.0).unwrap(), n as f64)
            .unwrap()
            .variance();
        assert!((lattice.variance - continuum).abs() < 1e-10 * continuum);
    }
}

#[test]
fn retention_without_retention_is_plain_diffusion() {
    let config = GridConfig::centered(0.0, 8.0, 0.02, 1e-4, 1.0);
    let ad = solve_advection_diffusion(&AdvectionDiffusionParams::new(0.0, 0.7).unwrap(), &config)
        .unwrap();
    for variant in [SignVariant::Minus, SignVariant::Plus] {
        let g = solve_retention(
            &RetentionParams::new(0.0, 0.7, 0.3).unwrap(),
            &config,
            &RetentionSolveOptions { variant, cutoff: None },
        )
        .unwrap();
        let last = g.times.len() - 1;
        let l1 = retention::pde::l1_distance(&g.values[last], &ad.values[last], g.dx);
        assert!(l1 < 1e-8, "{variant:?}: {l1}");
        let m = grid_moments(&g, last).unwrap();
        assert!((m.variance / 1.4 - 1.0).abs() < 0.02);
    }
}
