//! Fit comparison: Q-Q tables, histogram density overlays and the
//! consolidated fit report.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::calibration::{
    calibrate_normal, calibrate_retention, theoretical_moments, CalibrationConfig,
    CalibrationResult, MomentTargets,
};
use crate::distributions::{df_from_excess_kurtosis, t_scale_for_variance, NormalSpec, StudentTSpec};
use crate::market_data::ReturnSeries;
use crate::pde::AdvectionDiffusionParams;
use crate::stats::{histogram, sample_moments, Bins, Histogram, MomentSummary};
use crate::{format_f64, Error, Result};

/// A fitted reference distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FittedDistribution {
    Normal(NormalSpec),
    StudentT(StudentTSpec),
}

impl FittedDistribution {
    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            Self::Normal(s) => s.pdf(x),
            Self::StudentT(s) => s.pdf(x),
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        match self {
            Self::Normal(s) => s.ln_pdf(x),
            Self::StudentT(s) => s.ln_pdf(x),
        }
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        match self {
            Self::Normal(s) => s.quantile(p),
            Self::StudentT(s) => s.quantile(p),
        }
    }
}

impl From<NormalSpec> for FittedDistribution {
    fn from(s: NormalSpec) -> Self {
        Self::Normal(s)
    }
}

impl From<StudentTSpec> for FittedDistribution {
    fn from(s: StudentTSpec) -> Self {
        Self::StudentT(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QqPair {
    pub theoretical: f64,
    pub empirical: f64,
}

/// Plotting positions `(i - 0.5) / n` against the sorted sample.
pub fn qq_data(sample: &[f64], dist: &FittedDistribution) -> Result<Vec<QqPair>> {
    if sample.len() < 10 {
        return Err(Error::InsufficientData {
            needed: 10,
            got: sample.len(),
        });
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, empirical)| {
            let p = (i as f64 + 0.5) / n;
            Ok(QqPair {
                theoretical: dist.quantile(p)?,
                empirical,
            })
        })
        .collect()
}

pub fn write_qq_csv<W: Write>(pairs: &[QqPair], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["theoretical", "empirical"])?;
    for q in pairs {
        w.write_record([format_f64(q.theoretical), format_f64(q.empirical)])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayRow {
    pub center: f64,
    pub empirical: f64,
    /// Density of each model, in the table's model order.
    pub models: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayTable {
    pub model_names: Vec<String>,
    pub rows: Vec<OverlayRow>,
}

impl OverlayTable {
    /// Writes `bin_center,empirical,<model...>` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["bin_center".to_string(), "empirical".to_string()];
        header.extend(self.model_names.iter().cloned());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![format_f64(row.center), format_f64(row.empirical)];
            rec.extend(row.models.iter().map(|d| format_f64(*d)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Evaluates each model's density at the histogram's bin centres.
pub fn density_overlay(h: &Histogram, dists: &[(String, FittedDistribution)]) -> OverlayTable {
    let rows = h
        .centers()
        .zip(&h.densities)
        .map(|(center, &empirical)| OverlayRow {
            center,
            empirical,
            models: dists.iter().map(|(_, d)| d.pdf(center)).collect(),
        })
        .collect();
    OverlayTable {
        model_names: dists.iter().map(|(name, _)| name.clone()).collect(),
        rows,
    }
}

/// Mean log-density of the sample under `dist`.
pub fn log_density_score(sample: &[f64], dist: &FittedDistribution) -> f64 {
    sample.iter().map(|&x| dist.ln_pdf(x)).sum::<f64>() / sample.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalFit {
    pub params: AdvectionDiffusionParams,
    /// One-step increment law `N(D dt, 2 V dt)`.
    pub spec: NormalSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentError {
    pub variance: f64,
    pub excess_kurtosis: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RetentionFit {
    Fitted {
        calibration: CalibrationResult,
        /// Student-t matching the sample variance and excess kurtosis.
        proxy: StudentTSpec,
        /// Proxy moments minus sample moments.
        proxy_moment_error: MomentError,
        /// Calibrated retention moments minus sample moments.
        retention_moment_error: MomentError,
    },
    NotApplicable {
        reason: String,
        excess_kurtosis: Option<f64>,
    },
}

impl RetentionFit {
    pub fn proxy(&self) -> Option<&StudentTSpec> {
        match self {
            Self::Fitted { proxy, .. } => Some(proxy),
            Self::NotApplicable { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub normal: f64,
    pub t: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub n_returns: usize,
    pub first_date: Option<String>,
    pub last_date: Option<String>,
    pub seed: u64,
    pub version: String,
    pub timestamp: Option<String>,
}

/// Calibrated models without the plotting tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub empirical: MomentSummary,
    pub normal_fit: NormalFit,
    pub retention_fit: RetentionFit,
    pub meta: ReportMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub empirical: MomentSummary,
    pub normal_fit: NormalFit,
    pub retention_fit: RetentionFit,
    pub overlay: OverlayTable,
    pub qq_normal: Vec<QqPair>,
    pub qq_t: Option<Vec<QqPair>>,
    pub scores: Scores,
    pub meta: ReportMeta,
}

impl FitReport {
    pub fn model_fit(&self) -> ModelFit {
        ModelFit {
            empirical: self.empirical,
            normal_fit: self.normal_fit,
            retention_fit: self.retention_fit.clone(),
            meta: self.meta.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub bins: Bins,
    pub calibration: CalibrationConfig,
    /// Recorded verbatim in the report metadata.
    pub timestamp: Option<String>,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            bins: Bins::Auto,
            calibration: CalibrationConfig::default(),
            timestamp: None,
        }
    }
}

/// Minimum number of returns for a report.
pub const MIN_REPORT_RETURNS: usize = 30;

/// Fits both models without building plotting tables.
pub fn fit_models(r: &ReturnSeries, config: &ReportConfig) -> Result<ModelFit> {
    if r.len() < MIN_REPORT_RETURNS {
        return Err(Error::InsufficientData {
            needed: MIN_REPORT_RETURNS,
            got: r.len(),
        });
    }
    let empirical = sample_moments(&r.values)?;
    let params = calibrate_normal(r)?;
    let normal_fit = NormalFit {
        params,
        spec: params.normal_at(r.dt)?,
    };
    let retention_fit = fit_retention(&empirical, r.dt, &config.calibration)?;
    let dates = r.dates.as_deref().unwrap_or(&[]);
    Ok(ModelFit {
        empirical,
        normal_fit,
        retention_fit,
        meta: ReportMeta {
            n_returns: r.len(),
            first_date: dates.first().map(ToString::to_string),
            last_date: dates.last().map(ToString::to_string),
            seed: config.calibration.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: config.timestamp.clone(),
        },
    })
}

fn fit_retention(
    empirical: &MomentSummary,
    dt: f64,
    config: &CalibrationConfig,
) -> Result<RetentionFit> {
    let excess = empirical.kurtosis_excess()?;
    let targets = MomentTargets::from_summary(empirical, dt)?;
    let calibration = match calibrate_retention(&targets, config) {
        Ok(c) => c,
        Err(Error::NotLeptokurtic { excess_kurtosis }) => {
            return Ok(RetentionFit::NotApplicable {
                reason: "sample excess kurtosis is not positive; only the normal model applies"
                    .into(),
                excess_kurtosis: Some(excess_kurtosis),
            })
        }
        Err(e) => return Err(e),
    };
    let df = df_from_excess_kurtosis(excess)?;
    let proxy = StudentTSpec::new(df, empirical.mean, t_scale_for_variance(df, empirical.variance)?)?;
    let proxy_excess = proxy.excess_kurtosis().unwrap_or(f64::INFINITY);
    let (model_var, model_excess) = theoretical_moments(&calibration.params, dt);
    Ok(RetentionFit::Fitted {
        calibration,
        proxy,
        proxy_moment_error: MomentError {
            variance: proxy.variance() - empirical.variance,
            excess_kurtosis: proxy_excess - excess,
        },
        retention_moment_error: MomentError {
            variance: model_var - empirical.variance,
            excess_kurtosis: model_excess - excess,
        },
    })
}

/// Runs both calibrations and assembles overlay, Q-Q tables and
/// log-density scores.
pub fn build_fit_report(r: &ReturnSeries, config: &ReportConfig) -> Result<FitReport> {
    let fit = fit_models(r, config)?;
    let normal: FittedDistribution = fit.normal_fit.spec.into();
    let proxy: Option<FittedDistribution> = fit.retention_fit.proxy().map(|&p| p.into());

    let hist = histogram(&r.values, config.bins)?;
    let mut models = vec![("normal".to_string(), normal)];
    if let Some(p) = proxy {
        models.push(("student_t".to_string(), p));
    }
    let overlay = density_overlay(&hist, &models);
    let qq_normal = qq_data(&r.values, &normal)?;
    let qq_t = proxy.map(|p| qq_data(&r.values, &p)).transpose()?;
    let scores = Scores {
        normal: log_density_score(&r.values, &normal),
        t: proxy.map(|p| log_density_score(&r.values, &p)),
    };
    Ok(FitReport {
        empirical: fit.empirical,
        normal_fit: fit.normal_fit,
        retention_fit: fit.retention_fit,
        overlay,
        qq_normal,
        qq_t,
        scores,
        meta: fit.meta,
    })
}
