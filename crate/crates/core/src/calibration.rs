//! Calibration from a return series.
//!
//! The Gaussian model is fitted in closed form. The retention model is fitted
//! by matching its one-step variance and excess kurtosis to the sample's. Two
//! targets cannot pin three parameters, so by default `K2` is solved from the
//! variance equation and the simplex searches over `(k, K4)` only.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::market_data::ReturnSeries;
use crate::optimize::{halton, nelder_mead, NelderMeadConfig};
use crate::pde::{AdvectionDiffusionParams, RetentionParams};
use crate::stats::{sample_moments, MomentSummary};
use crate::{Error, Result};

/// Sample variance and excess kurtosis the retention model should reproduce
/// over one step `dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentTargets {
    pub variance: f64,
    pub excess_kurtosis: f64,
    pub dt: f64,
}

impl MomentTargets {
    pub fn new(variance: f64, excess_kurtosis: f64, dt: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::Degenerate(format!("target variance {variance} must be positive")));
        }
        if !(dt > 0.0 && excess_kurtosis.is_finite()) {
            return Err(Error::Domain(format!(
                "invalid targets: excess kurtosis {excess_kurtosis}, dt {dt}"
            )));
        }
        Ok(Self {
            variance,
            excess_kurtosis,
            dt,
        })
    }

    pub fn from_summary(summary: &MomentSummary, dt: f64) -> Result<Self> {
        Self::new(summary.variance, summary.kurtosis_excess()?, dt)
    }

    /// Targets implied by `params` after one step `dt`.
    pub fn implied_by(params: &RetentionParams, dt: f64) -> Result<Self> {
        let (variance, excess_kurtosis) = theoretical_moments(params, dt);
        Self::new(variance, excess_kurtosis, dt)
    }
}

/// `D` = sample mean per unit time, `V` = half the MLE variance per unit time.
pub fn calibrate_normal(r: &ReturnSeries) -> Result<AdvectionDiffusionParams> {
    let m = sample_moments(&r.values)?;
    if m.variance == 0.0 {
        return Err(Error::Degenerate(
            "constant returns: diffusion coefficient would be zero".into(),
        ));
    }
    AdvectionDiffusionParams::new(m.mean / r.dt, m.variance / (2.0 * r.dt))
}

/// One-step variance `2 (1-k) K2 dt` and excess kurtosis
/// `6 k K4 / ((1-k) K2^2 dt)`.
pub fn theoretical_moments(params: &RetentionParams, dt: f64) -> (f64, f64) {
    let k = params.retention;
    let k2 = params.diffusion;
    let variance = 2.0 * (1.0 - k) * k2 * dt;
    let excess = 6.0 * k * params.retention_coefficient / ((1.0 - k) * k2 * k2 * dt);
    (variance, excess)
}

/// Sum of squared moment errors, each relative to its target when the target
/// is nonzero.
pub fn retention_objective(params: &RetentionParams, targets: &MomentTargets) -> f64 {
    let (variance, excess) = theoretical_moments(params, targets.dt);
    moment_objective(variance, excess, targets)
}

/// The objective of [`retention_objective`] on model moments directly.
pub fn moment_objective(variance: f64, excess_kurtosis: f64, targets: &MomentTargets) -> f64 {
    let term = |model: f64, target: f64| {
        let err = model - target;
        if target != 0.0 {
            (err / target).powi(2)
        } else {
            err * err
        }
    };
    term(variance, targets.variance) + term(excess_kurtosis, targets.excess_kurtosis)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// Solve `K2` from the variance target; search `(k, K4)`.
    #[default]
    Reduced,
    /// Search `(k, K2, K4)` jointly.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub max_iters: usize,
    /// A start counts as converged when its objective falls below this.
    pub tolerance: f64,
    pub multistart: usize,
    pub seed: u64,
    pub mode: SearchMode,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            max_iters: 4_000,
            tolerance: 1e-12,
            multistart: 8,
            seed: 0,
            mode: SearchMode::Reduced,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub params: RetentionParams,
    pub objective_value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Index of the multistart run that produced the result.
    pub start_index: usize,
    pub mode: SearchMode,
}

/// Maps unconstrained coordinates onto valid parameters: `k` through the
/// logistic function, `K2` and `K4` through exponentials of scaled logs.
#[derive(Debug, Clone, Copy)]
struct Transform {
    targets: MomentTargets,
    mode: SearchMode,
    /// `K2` that matches the variance at `k = 0`.
    k2_unit: f64,
    /// Natural unit of `K4`, `K2^2 dt`.
    k4_unit: f64,
}

impl Transform {
    fn new(targets: MomentTargets, mode: SearchMode) -> Self {
        let k2_unit = targets.variance / (2.0 * targets.dt);
        Self {
            targets,
            mode,
            k2_unit,
            k4_unit: k2_unit * k2_unit * targets.dt,
        }
    }

    fn dim(&self) -> usize {
        match self.mode {
            SearchMode::Reduced => 2,
            SearchMode::Full => 3,
        }
    }

    fn params(&self, u: &[f64]) -> Option<RetentionParams> {
        let k = 1.0 / (1.0 + (-u[0]).exp());
        let k4 = self.k4_unit * u[1].exp();
        let k2 = match self.mode {
            SearchMode::Reduced => self.targets.variance / (2.0 * (1.0 - k) * self.targets.dt),
            SearchMode::Full => self.k2_unit * u[2].exp(),
        };
        let p = RetentionParams {
            retention: k,
            diffusion: k2,
            retention_coefficient: k4,
        };
        p.validate().ok().map(|_| p)
    }

    fn objective(&self, u: &[f64]) -> f64 {
        self.params(u)
            .map_or(f64::INFINITY, |p| retention_objective(&p, &self.targets))
    }

    /// Deterministic start from the Halton sequence: `k` in (0.05, 0.95),
    /// `K4` within three decades of its unit, `K2` within one decade.
    fn start(&self, index: u64) -> Vec<f64> {
        let h = halton(index, &[2, 3, 5]);
        let k = 0.05 + 0.9 * h[0];
        let mut u = vec![(k / (1.0 - k)).ln(), (h[1] - 0.5) * 2.0 * 1000f64.ln()];
        if self.mode == SearchMode::Full {
            u.push((h[2] - 0.5) * 2.0 * 10f64.ln());
        }
        u.truncate(self.dim());
        u
    }
}

const MAX_RESTARTS: usize = 6;

/// Moment-matching fit of the retention model.
///
/// Returns [`Error::NotLeptokurtic`] when the excess kurtosis target is not
/// positive, in which case the caller should use the normal model.
pub fn calibrate_retention(
    targets: &MomentTargets,
    config: &CalibrationConfig,
) -> Result<CalibrationResult> {
    if !(targets.excess_kurtosis > 0.0) {
        return Err(Error::NotLeptokurtic {
            excess_kurtosis: targets.excess_kurtosis,
        });
    }
    if config.multistart == 0 {
        return Err(Error::Config("multistart count must be positive".into()));
    }
    let transform = Transform::new(*targets, config.mode);
    let nm = NelderMeadConfig {
        max_iters: config.max_iters,
        f_tol: (config.tolerance * 1e-8).max(1e-30),
        x_tol: 1e-10,
        initial_step: 1.0,
    };
    let offset = config.seed % 1024;

    let runs: Vec<(usize, Vec<f64>, f64, usize)> = (0..config.multistart)
        .into_par_iter()
        .map(|start_index| {
            let mut u = transform.start(offset + start_index as u64 + 1);
            let mut best = transform.objective(&u);
            let mut iterations = 0;
            // Restarting from the incumbent re-expands a collapsed simplex.
            for _ in 0..MAX_RESTARTS {
                let m = nelder_mead(|x| transform.objective(x), &u, &nm);
                iterations += m.iterations;
                let improved = m.value < best;
                if improved {
                    u = m.x;
                    best = m.value;
                }
                if !improved || best < config.tolerance * 1e-8 || iterations >= config.max_iters {
                    break;
                }
            }
            (start_index, u, best, iterations)
        })
        .collect();

    let (start_index, u, objective_value, _) = runs
        .iter()
        .min_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)))
        .cloned()
        .expect("at least one start");
    let iterations = runs.iter().map(|r| r.3).sum();
    let params = transform.params(&u).ok_or_else(|| {
        Error::Degenerate("no multistart run reached a valid parameter set".into())
    })?;
    Ok(CalibrationResult {
        params,
        objective_value,
        iterations,
        converged: objective_value < config.tolerance,
        start_index,
        mode: config.mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_mle_examples() {
        let r = ReturnSeries::from_values(vec![0.001; 6]).unwrap();
        assert!(matches!(calibrate_normal(&r), Err(Error::Degenerate(_))));

        let r = ReturnSeries::from_values(vec![0.01, -0.01, 0.01, -0.01]).unwrap();
        let p = calibrate_normal(&r).unwrap();
        assert_eq!(p.drift, 0.0);
        assert!((p.diffusion - 5e-5).abs() < 1e-18);
    }

    #[test]
    fn objective_properties() {
        let p = RetentionParams::new(0.3, 2e-4, 1e-7).unwrap();
        let exact = MomentTargets::implied_by(&p, 1.0).unwrap();
        assert_eq!(retention_objective(&p, &exact), 0.0);

        let gaussian = RetentionParams {
            retention: 0.0,
            ..p
        };
        let t = MomentTargets::new(exact.variance / 0.7, 2.0, 1.0).unwrap();
        assert!(retention_objective(&gaussian, &t) >= 1.0);

        let t = MomentTargets::new(4e-4, 3.0, 1.0).unwrap();
        let single = moment_objective(4e-4 + 3e-5, 3.0 - 0.4, &t);
        let double = moment_objective(4e-4 + 6e-5, 3.0 - 0.8, &t);
        assert!((double / single - 4.0).abs() < 1e-9);
    }

    #[test]
    fn zero_target_uses_absolute_error() {
        let p = RetentionParams::new(0.2, 1.0, 1.0).unwrap();
        let t = MomentTargets::new(1.6, 0.0, 1.0).unwrap();
        let (_, e) = theoretical_moments(&p, 1.0);
        assert!((retention_objective(&p, &t) - e * e).abs() < 1e-12);
    }

    #[test]
    fn round_trip_recovers_moments() {
        let p = RetentionParams::new(0.3, 2e-4, 1e-7).unwrap();
        let targets = MomentTargets::implied_by(&p, 1.0).unwrap();
        for mode in [SearchMode::Reduced, SearchMode::Full] {
            let cfg = CalibrationConfig {
                mode,
                ..Default::default()
            };
            let fit = calibrate_retention(&targets, &cfg).unwrap();
            assert!(fit.objective_value < 1e-10, "{mode:?}: {fit:?}");
            assert!(fit.converged);
            fit.params.validate().unwrap();
        }
    }

    #[test]
    fn underdetermined_targets_are_reproduced() {
        let targets = MomentTargets::new(4e-4, 3.0, 1.0).unwrap();
        let fit = calibrate_retention(&targets, &CalibrationConfig::default()).unwrap();
        let (v, e) = theoretical_moments(&fit.params, 1.0);
        assert!((v - 4e-4).abs() < 1e-8);
        assert!((e - 3.0).abs() < 1e-6);
    }

    #[test]
    fn platykurtic_targets_fall_back() {
        let targets = MomentTargets::new(4e-4, -0.5, 1.0).unwrap();
        assert!(matches!(
            calibrate_retention(&targets, &CalibrationConfig::default()),
            Err(Error::NotLeptokurtic { .. })
        ));
    }

    #[test]
    fn deterministic_for_seed() {
        let targets = MomentTargets::new(3e-4, 1.7, 1.0).unwrap();
        let cfg = CalibrationConfig {
            seed: 17,
            ..Default::default()
        };
        assert_eq!(
            calibrate_retention(&targets, &cfg).unwrap(),
            calibrate_retention(&targets, &cfg).unwrap()
        );
    }
}
