//! Fourier evaluation of the plus-sign retention equation.
//!
//! On a periodic window of length `P = n dx` the delta has flat spectrum, and
//! each mode `xi_m = 2 pi m / P` evolves as
//! `exp(t (-(1-k) K2 xi^2 + k(1-k) K4 xi^4))`. The quartic term makes high
//! modes grow without bound, so only modes with `xi <= cutoff` are kept and
//! they are rolled off by the filter `exp(-36 (xi / cutoff)^16)`. The filter is
//! flat to order 15 at the origin, so the zeroth through fourth moments of the
//! retained density are those of the unfiltered symbol.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use super::{
    boundary_mass, boundary_warning, Grid, GridConfig, GridDiagnostics, GridModel,
    RetentionParams, Scheme, SignVariant,
};
use crate::{Error, Result};

const FILTER_STRENGTH: f64 = 36.0;
const FILTER_ORDER: i32 = 16;
/// Largest exponent accepted for a retained mode.
const MAX_LOG_GAIN: f64 = 700.0;

/// Frequency where the plus-sign symbol stops decaying:
/// `sqrt(K2 / (2 k K4))`. `None` when `k = 0`.
pub fn natural_cutoff(params: &RetentionParams) -> Option<f64> {
    let b = params.fourth_order_coefficient();
    (b > 0.0).then(|| (params.second_order_coefficient() / (2.0 * b)).sqrt())
}

fn log_symbol(params: &RetentionParams, xi: f64, t: f64, cutoff: f64) -> f64 {
    let xi2 = xi * xi;
    let a = params.second_order_coefficient();
    let b = params.fourth_order_coefficient();
    t * (-a * xi2 + b * xi2 * xi2) - FILTER_STRENGTH * (xi / cutoff).powi(FILTER_ORDER)
}

pub(super) fn solve_retention_spectral(
    params: &RetentionParams,
    config: &GridConfig,
    cutoff: f64,
) -> Result<Grid> {
    if !(cutoff > 0.0 && cutoff.is_finite()) {
        return Err(Error::Config(format!("cutoff {cutoff} must be positive")));
    }
    let n = config.n_cells();
    let period = n as f64 * config.dx;
    let nyquist = PI / config.dx;
    let mut warnings = Vec::new();
    let effective_cutoff = if cutoff > nyquist {
        warnings.push(format!(
            "cutoff {cutoff} above the grid Nyquist frequency {nyquist}; clamped"
        ));
        nyquist
    } else {
        cutoff
    };
    let base = 2.0 * PI / period;
    let modes = ((effective_cutoff / base).floor() as usize).min((n - 1) / 2);
    let center = config.x(config.delta_index());

    // Retained times follow the same slicing as an explicit solve with this dt.
    let steps = config.steps()?;
    let keep = config.snapshot_steps(steps);
    let times: Vec<f64> = keep.iter().map(|&s| s as f64 * config.dt).collect();

    let mut max_log_gain = f64::NEG_INFINITY;
    let mut values = Vec::with_capacity(times.len());
    for &t in &times {
        if t == 0.0 {
            values.push(config.delta());
            continue;
        }
        let weights: Vec<f64> = (1..=modes)
            .map(|m| {
                let xi = m as f64 * base;
                let g = t * (-params.second_order_coefficient() * xi * xi
                    + params.fourth_order_coefficient() * xi.powi(4));
                max_log_gain = max_log_gain.max(g);
                log_symbol(params, xi, t, effective_cutoff)
            })
            .map(|log_w| {
                if log_w > MAX_LOG_GAIN {
                    Err(Error::Config(format!(
                        "cutoff {cutoff} retains modes amplified by exp({log_w:.1}) at t = {t}; lower it"
                    )))
                } else {
                    Ok(2.0 * log_w.exp())
                }
            })
            .collect::<Result<_>>()?;
        let slice = (0..n)
            .map(|i| {
                let y = config.x(i) - center;
                let sum: f64 = weights
                    .iter()
                    .enumerate()
                    .map(|(j, w)| w * ((j + 1) as f64 * base * y).cos())
                    .sum();
                (1.0 + sum) / period
            })
            .collect();
        values.push(slice);
    }

    if max_log_gain > 0.0 {
        warnings.push(format!(
            "retained modes grow by up to exp({max_log_gain:.3}); the cutoff is past the decay band"
        ));
    }
    let boundary = boundary_mass(values.last().expect("at least one slice"), config.dx);
    warnings.extend(boundary_warning(boundary));

    let mut ratios = BTreeMap::new();
    ratios.insert("cutoff/nyquist".to_string(), effective_cutoff / nyquist);
    if let Some(natural) = natural_cutoff(params) {
        ratios.insert("cutoff/natural_cutoff".to_string(), effective_cutoff / natural);
    }

    Ok(Grid {
        x0: config.x_min,
        dx: config.dx,
        dt: config.dt,
        model: GridModel::Retention(SignVariant::Plus),
        times,
        values,
        diagnostics: GridDiagnostics {
            scheme: Scheme::SpectralCutoff,
            stability_ratios: ratios,
            boundary_mass: boundary,
            cutoff: Some(effective_cutoff),
            warnings,
        },
    })
}
