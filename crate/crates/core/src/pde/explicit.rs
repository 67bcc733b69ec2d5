//! Forward-Euler schemes with zero Dirichlet boundaries.

use std::collections::BTreeMap;

use super::stencil::{fourth_difference_padded, second_difference_padded};
use super::{
    boundary_mass, boundary_warning, AdvectionDiffusionParams, Grid, GridConfig, GridDiagnostics,
    GridModel, RetentionParams, Scheme,
};
use crate::{Error, Result};

/// Per-step coefficients: `r2 = a dt/dx^2`, `r4 = b dt/dx^4`, `courant = D dt/dx`.
#[derive(Debug, Clone, Copy)]
struct StepCoefficients {
    r2: f64,
    r4: f64,
    courant: f64,
}

fn step(prev: &[f64], next: &mut [f64], c: StepCoefficients) {
    let n = prev.len();
    for i in 0..n {
        let left = if i > 0 { prev[i - 1] } else { 0.0 };
        let right = if i + 1 < n { prev[i + 1] } else { 0.0 };
        let advection = if c.courant > 0.0 {
            c.courant * (prev[i] - left)
        } else if c.courant < 0.0 {
            c.courant * (right - prev[i])
        } else {
            0.0
        };
        let d2 = second_difference_padded(prev, i);
        let d4 = if c.r4 != 0.0 {
            fourth_difference_padded(prev, i)
        } else {
            0.0
        };
        next[i] = prev[i] + c.r2 * d2 - c.r4 * d4 - advection;
    }
}

fn run(
    config: &GridConfig,
    coefficients: StepCoefficients,
    scheme: Scheme,
    stability_ratios: BTreeMap<String, f64>,
    model: GridModel,
) -> Result<Grid> {
    let steps = config.steps()?;
    let keep = config.snapshot_steps(steps);
    let mut current = config.delta();
    let mut next = vec![0.0; current.len()];
    let mut values = vec![current.clone()];
    let mut times = vec![0.0];

    let mut keep_iter = keep.iter().skip(1).peekable();
    for n in 1..=steps {
        if scheme != Scheme::Identity {
            step(&current, &mut next, coefficients);
            std::mem::swap(&mut current, &mut next);
        }
        if keep_iter.peek() == Some(&&n) {
            keep_iter.next();
            values.push(current.clone());
            times.push(n as f64 * config.dt);
        }
    }

    let boundary = boundary_mass(&current, config.dx);
    let warnings = boundary_warning(boundary).into_iter().collect();
    Ok(Grid {
        x0: config.x_min,
        dx: config.dx,
        dt: config.dt,
        model,
        times,
        values,
        diagnostics: GridDiagnostics {
            scheme,
            stability_ratios,
            boundary_mass: boundary,
            cutoff: None,
            warnings,
        },
    })
}

fn check_ratio(name: &'static str, ratio: f64, limit: f64) -> Result<()> {
    if ratio > limit || !ratio.is_finite() {
        return Err(Error::Stability { name, ratio, limit });
    }
    Ok(())
}

const DIFFUSION_NUMBER: &str = "V*dt/dx^2";
const COURANT_NUMBER: &str = "|D|*dt/dx";
const RETENTION_NUMBER: &str = "(1-k)K2*dt/dx^2 + 4k(1-k)K4*dt/dx^4";

/// Explicit upwind solve of `p_t = V p_xx - D p_x` from a delta.
///
/// Requires `V dt/dx^2 <= 1/2` and `|D| dt/dx <= 1`. With `D = V = 0` every
/// slice is the initial delta.
pub fn solve_advection_diffusion(
    params: &AdvectionDiffusionParams,
    config: &GridConfig,
) -> Result<Grid> {
    config.validate()?;
    if !(params.drift.is_finite() && params.diffusion.is_finite() && params.diffusion >= 0.0) {
        return Err(Error::Domain(format!(
            "invalid advection-diffusion parameters {params:?}"
        )));
    }
    let r2 = params.diffusion * config.dt / (config.dx * config.dx);
    let courant = params.drift * config.dt / config.dx;
    check_ratio(DIFFUSION_NUMBER, r2, 0.5)?;
    check_ratio(COURANT_NUMBER, courant.abs(), 1.0)?;

    let ratios = BTreeMap::from([
        (DIFFUSION_NUMBER.to_string(), r2),
        (COURANT_NUMBER.to_string(), courant.abs()),
    ]);
    let scheme = if params.drift == 0.0 && params.diffusion == 0.0 {
        Scheme::Identity
    } else {
        Scheme::ExplicitUpwind
    };
    let coefficients = StepCoefficients {
        r2,
        r4: 0.0,
        courant,
    };
    run(config, coefficients, scheme, ratios, GridModel::AdvectionDiffusion)
}

/// Explicit solve of `p_t = (1-k) K2 p_xx ∓ k(1-k) K4 p_xxxx`.
///
/// The plus sign is only routed here when `k = 0`, where the fourth-order
/// term is absent.
pub(super) fn solve_retention_explicit(
    params: &RetentionParams,
    config: &GridConfig,
    model: GridModel,
) -> Result<Grid> {
    let dx2 = config.dx * config.dx;
    let r2 = params.second_order_coefficient() * config.dt / dx2;
    let r4 = params.fourth_order_coefficient() * config.dt / (dx2 * dx2);
    check_ratio(RETENTION_NUMBER, r2 + 4.0 * r4, 0.5)?;
    let ratios = BTreeMap::from([(RETENTION_NUMBER.to_string(), r2 + 4.0 * r4)]);
    let coefficients = StepCoefficients {
        r2,
        r4,
        courant: 0.0,
    };
    run(config, coefficients, Scheme::ExplicitRetention, ratios, model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::{
        gaussian_solution, grid_moments, l1_distance, solve_retention, RetentionSolveOptions,
        SignVariant,
    };

    fn reference_config() -> GridConfig {
        GridConfig::centered(0.0, 12.0, 0.02, 2e-4, 1.0)
    }

    #[test]
    fn no_dynamics_keeps_delta() {
        let p = AdvectionDiffusionParams {
            drift: 0.0,
            diffusion: 0.0,
        };
        let cfg = GridConfig::centered(0.0, 1.0, 0.1, 0.1, 1.0);
        let g = solve_advection_diffusion(&p, &cfg).unwrap();
        assert_eq!(g.diagnostics.scheme, Scheme::Identity);
        assert!(g.values.iter().all(|s| s == &g.values[0]));
        assert_eq!(g.values[0][10], 10.0);
    }

    #[test]
    fn matches_closed_form() {
        let p = AdvectionDiffusionParams::new(0.05, 0.5).unwrap();
        let g = solve_advection_diffusion(&p, &reference_config()).unwrap();
        let exact: Vec<f64> = (0..g.n_cells())
            .map(|i| gaussian_solution(&p, g.x(i), 1.0).unwrap())
            .collect();
        assert!(l1_distance(g.final_slice(), &exact, g.dx) < 1e-2);
        for t in 0..g.values.len() {
            assert!((g.mass(t) - 1.0).abs() < 1e-8);
        }
        let m = grid_moments(&g, g.values.len() - 1).unwrap();
        assert!((m.mean - 0.05).abs() < g.dx);
        assert!((m.variance - 1.0).abs() < 0.02);
        assert!(g.diagnostics.warnings.is_empty());
    }

    #[test]
    fn negative_drift_moves_left() {
        let p = AdvectionDiffusionParams::new(-0.5, 0.1).unwrap();
        let cfg = GridConfig::centered(0.0, 6.0, 0.05, 1e-3, 1.0);
        let g = solve_advection_diffusion(&p, &cfg).unwrap();
        let m = grid_moments(&g, g.values.len() - 1).unwrap();
        assert!((m.mean + 0.5).abs() < cfg.dx);
    }

    #[test]
    fn stability_violations() {
        let p = AdvectionDiffusionParams::new(0.0, 1.0).unwrap();
        let cfg = GridConfig::centered(0.0, 5.0, 0.1, 0.01, 1.0);
        match solve_advection_diffusion(&p, &cfg) {
            Err(Error::Stability { ratio, limit, .. }) => {
                assert!((ratio - 1.0).abs() < 1e-12);
                assert_eq!(limit, 0.5);
            }
            other => panic!("expected stability error, got {other:?}"),
        }
        let p = AdvectionDiffusionParams::new(20.0, 0.01).unwrap();
        assert!(matches!(
            solve_advection_diffusion(&p, &cfg),
            Err(Error::Stability { name: COURANT_NUMBER, .. })
        ));
        let r = RetentionParams::new(0.5, 0.1, 1.0).unwrap();
        let opts = RetentionSolveOptions {
            variant: SignVariant::Minus,
            cutoff: None,
        };
        assert!(matches!(
            solve_retention(&r, &cfg, &opts),
            Err(Error::Stability { name: RETENTION_NUMBER, .. })
        ));
    }

    #[test]
    fn narrow_window_warns() {
        let p = AdvectionDiffusionParams::new(0.0, 0.5).unwrap();
        let cfg = GridConfig::centered(0.0, 2.0, 0.05, 1e-3, 1.0);
        let g = solve_advection_diffusion(&p, &cfg).unwrap();
        assert!(g.diagnostics.boundary_mass > 1e-8);
        assert_eq!(g.diagnostics.warnings.len(), 1);
    }

    #[test]
    fn retention_k0_equals_diffusion() {
        let k2 = 0.5;
        let r = RetentionParams::new(0.0, k2, 0.3).unwrap();
        let cfg = GridConfig::centered(0.0, 10.0, 0.05, 1e-3, 1.0);
        let ad = solve_advection_diffusion(&AdvectionDiffusionParams::new(0.0, k2).unwrap(), &cfg)
            .unwrap();
        for variant in [SignVariant::Minus, SignVariant::Plus] {
            let opts = RetentionSolveOptions {
                variant,
                cutoff: None,
            };
            let g = solve_retention(&r, &cfg, &opts).unwrap();
            assert!(l1_distance(g.final_slice(), ad.final_slice(), cfg.dx) < 1e-8);
        }
    }

    #[test]
    fn minus_variant_variance_slope() {
        let r = RetentionParams::new(0.1, 1.0, 0.1).unwrap();
        let cfg = GridConfig::centered(0.0, 15.0, 0.05, 5e-5, 1.0).with_snapshots(4);
        let opts = RetentionSolveOptions {
            variant: SignVariant::Minus,
            cutoff: None,
        };
        let g = solve_retention(&r, &cfg, &opts).unwrap();
        let slope = 2.0 * r.second_order_coefficient();
        for (i, &t) in g.times.iter().enumerate().skip(1) {
            let v = grid_moments(&g, i).unwrap().variance;
            assert!((v / (slope * t) - 1.0).abs() < 0.02, "t = {t}, var = {v}");
            assert!((g.mass(i) - 1.0).abs() < 1e-6);
        }
    }
}
