//! Daily price paths under the Gaussian and Student-t proxy models.
//!
//! Log-prices are advanced additively and exponentiated, so every price is
//! positive. Path `i` draws from generator stream `i` of the run's seed.

use std::io::Write;

use rand_distr::{Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::StudentTSpec;
use crate::market_data::{normalize_prices, PriceSeries};
use crate::pde::AdvectionDiffusionParams;
use crate::rng::stream_rng;
use crate::{format_f64, Error, Result};

/// Daily step used by every simulator.
pub const DT: f64 = 1.0;

/// Starting price of report paths and of the normalised real series.
pub const REPORT_START_PRICE: f64 = 100.0;

/// Paths drawn per model for a report.
pub const REPORT_PATHS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelTag {
    Gaussian,
    TProxy,
}

impl ModelTag {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::TProxy => "t_proxy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    pub model: ModelTag,
    pub s0: f64,
    pub n_steps: usize,
    pub seed: u64,
    /// One price sequence of length `n_steps + 1` per path.
    pub paths: Vec<Vec<f64>>,
}

impl PathSet {
    /// Writes `step,path_0,...,path_{n-1}` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["step".to_string()];
        header.extend((0..self.paths.len()).map(|i| format!("path_{i}")));
        w.write_record(&header)?;
        for step in 0..=self.n_steps {
            let mut row = vec![step.to_string()];
            row.extend(self.paths.iter().map(|p| format_f64(p[step])));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// `ln(S_T / s0)` of each path.
    pub fn terminal_log_returns(&self) -> Vec<f64> {
        self.paths
            .iter()
            .map(|p| (p[self.n_steps] / self.s0).ln())
            .collect()
    }
}

/// Student-t increment law: `drift * dt + scale * T(df)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TProxyParams {
    pub df: f64,
    pub scale: f64,
    pub drift: f64,
}

impl TProxyParams {
    /// Increment law of a fitted proxy: drift per step is its location.
    pub fn from_spec(spec: &StudentTSpec) -> Self {
        Self {
            df: spec.df,
            scale: spec.scale,
            drift: spec.loc / DT,
        }
    }
}

fn check_shape(n_steps: usize, n_paths: usize, s0: f64) -> Result<()> {
    if n_steps == 0 || n_paths == 0 {
        return Err(Error::Domain(format!(
            "need at least one step and one path, got {n_steps} steps and {n_paths} paths"
        )));
    }
    if !(s0 > 0.0 && s0.is_finite()) {
        return Err(Error::Domain(format!("start price {s0} must be positive")));
    }
    Ok(())
}

fn build_paths<F>(n_steps: usize, n_paths: usize, s0: f64, seed: u64, increments: F) -> Vec<Vec<f64>>
where
    F: Fn(&mut crate::rng::StreamRng) -> f64 + Sync,
{
    (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let mut log_price = 0.0;
            let mut path = Vec::with_capacity(n_steps + 1);
            path.push(s0);
            for _ in 0..n_steps {
                log_price += increments(&mut rng);
                path.push(s0 * log_price.exp());
            }
            path
        })
        .collect()
}

/// Log-increments `N(D dt, 2 V dt)`.
pub fn simulate_gaussian(
    params: &AdvectionDiffusionParams,
    n_steps: usize,
    n_paths: usize,
    s0: f64,
    seed: u64,
) -> Result<PathSet> {
    check_shape(n_steps, n_paths, s0)?;
    if !(params.diffusion >= 0.0 && params.drift.is_finite()) {
        return Err(Error::Domain(format!("invalid Gaussian parameters {params:?}")));
    }
    let mean = params.drift * DT;
    let sd = (2.0 * params.diffusion * DT).sqrt();
    let paths = build_paths(n_steps, n_paths, s0, seed, |rng| {
        let z: f64 = StandardNormal.sample(rng);
        mean + sd * z
    });
    Ok(PathSet {
        model: ModelTag::Gaussian,
        s0,
        n_steps,
        seed,
        paths,
    })
}

/// Log-increments `drift dt + scale T(df)`.
pub fn simulate_t_proxy(
    params: &TProxyParams,
    n_steps: usize,
    n_paths: usize,
    s0: f64,
    seed: u64,
) -> Result<PathSet> {
    check_shape(n_steps, n_paths, s0)?;
    if !(params.df > 2.0) {
        return Err(Error::Domain(format!("df = {} must exceed 2", params.df)));
    }
    if !(params.scale > 0.0 && params.drift.is_finite()) {
        return Err(Error::Domain(format!("invalid t-proxy parameters {params:?}")));
    }
    let t = StudentT::new(params.df).map_err(|e| Error::Domain(e.to_string()))?;
    let paths = build_paths(n_steps, n_paths, s0, seed, |rng| {
        params.drift * DT + params.scale * t.sample(rng)
    });
    Ok(PathSet {
        model: ModelTag::TProxy,
        s0,
        n_steps,
        seed,
        paths,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ReportModel {
    Gaussian(AdvectionDiffusionParams),
    TProxy(TProxyParams),
}

/// Paths spanning the real series' length, starting at 100, together with the
/// real series normalised to 100.
pub fn paths_for_report(
    real: &PriceSeries,
    model: &ReportModel,
    n_paths: usize,
    seed: u64,
) -> Result<(PathSet, PriceSeries)> {
    if real.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: real.len(),
        });
    }
    let n_steps = real.len() - 1;
    let paths = match model {
        ReportModel::Gaussian(p) => simulate_gaussian(p, n_steps, n_paths, REPORT_START_PRICE, seed)?,
        ReportModel::TProxy(p) => simulate_t_proxy(p, n_steps, n_paths, REPORT_START_PRICE, seed)?,
    };
    Ok((paths, normalize_prices(real, REPORT_START_PRICE)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{t_scale_for_variance, StudentTSpec, t_sample};
    use crate::stats::sample_moments;
    use chrono::NaiveDate;

    #[test]
    fn vanishing_diffusion_is_deterministic_drift() {
        let p = AdvectionDiffusionParams::new(5e-4, 1e-30).unwrap();
        let set = simulate_gaussian(&p, 100, 3, 100.0, 1).unwrap();
        for path in &set.paths {
            for (t, s) in path.iter().enumerate() {
                let expected = 100.0 * (5e-4 * t as f64).exp();
                assert!((s / expected - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn terminal_mean_matches_drift() {
        let p = AdvectionDiffusionParams::new(5e-4, 2e-4).unwrap();
        let set = simulate_gaussian(&p, 250, 10_000, 100.0, 99).unwrap();
        let m = sample_moments(&set.terminal_log_returns()).unwrap();
        let se = (2.0 * 2e-4 * 250.0 / 10_000.0f64).sqrt();
        assert!((m.mean - 0.125).abs() < 3.0 * se, "mean {}", m.mean);
    }

    #[test]
    fn same_seed_same_paths() {
        let p = AdvectionDiffusionParams::new(1e-4, 1e-4).unwrap();
        let a = simulate_gaussian(&p, 30, 7, 50.0, 5).unwrap();
        let b = simulate_gaussian(&p, 30, 7, 50.0, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.paths.iter().all(|p| p[0] == 50.0));
    }

    #[test]
    fn positivity_under_extreme_tails() {
        let p = TProxyParams {
            df: 2.1,
            scale: 0.5,
            drift: -0.1,
        };
        let set = simulate_t_proxy(&p, 500, 20, 1.0, 3).unwrap();
        assert!(set.paths.iter().flatten().all(|&s| s > 0.0));
    }

    #[test]
    fn t_proxy_rejects_low_df() {
        let p = TProxyParams {
            df: 2.0,
            scale: 1.0,
            drift: 0.0,
        };
        assert!(simulate_t_proxy(&p, 10, 1, 1.0, 0).is_err());
    }

    #[test]
    fn pooled_t_increments() {
        let scale = t_scale_for_variance(10.0, 4e-4).unwrap();
        let spec = StudentTSpec::new(10.0, 0.0, scale).unwrap();
        let xs = t_sample(&spec, 1_000_000, 8);
        let m = sample_moments(&xs).unwrap();
        assert!((m.variance / 4e-4 - 1.0).abs() < 0.02);
        assert!((m.excess_kurtosis.unwrap() - 1.0).abs() < 0.3);
    }

    #[test]
    fn report_paths_shape() {
        let start = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
        let prices: Vec<f64> = (0..1001).map(|i| 30.0 + (i as f64 * 0.01).sin()).collect();
        let real = PriceSeries::from_prices(start, prices).unwrap();
        let model = ReportModel::Gaussian(AdvectionDiffusionParams::new(0.0, 1e-4).unwrap());
        let (set, normalized) = paths_for_report(&real, &model, REPORT_PATHS, 1).unwrap();
        assert_eq!(set.paths.len(), 5);
        assert_eq!(set.n_steps, 1000);
        assert!(set.paths.iter().all(|p| p.len() == 1001 && p[0] == 100.0));
        assert_eq!(normalized.prices()[0], 100.0);
    }

    #[test]
    fn csv_layout() {
        let p = AdvectionDiffusionParams::new(0.0, 1e-4).unwrap();
        let set = simulate_gaussian(&p, 2, 2, 100.0, 0).unwrap();
        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "step,path_0,path_1");
        assert_eq!(lines[1], "0,100.0,100.0");
        assert_eq!(lines.len(), 4);
    }
}
