//! Continuum models of the log-price density.
//!
//! - Advection-diffusion: `p_t = V p_xx - D p_x`, solved in closed form and by an
//!   explicit upwind scheme.
//! - Diffusion with retention: `p_t = (1-k) K2 p_xx ∓ k(1-k) K4 p_xxxx`. The minus
//!   sign is well posed and stepped explicitly; the plus sign is ill posed as an
//!   initial-value problem and is evaluated spectrally below a frequency cutoff.
//!
//! Every solver starts from a discrete delta: all mass in the cell nearest the
//! configured centre, density `1 / dx`.

mod explicit;
mod spectral;
pub mod stencil;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::distributions::NormalSpec;
use crate::stats::MomentSummary;
use crate::{format_f64, Error, Result};

pub use explicit::solve_advection_diffusion;
pub use spectral::natural_cutoff;

/// Tolerated mass in the boundary bands at the final time.
pub const BOUNDARY_MASS_LIMIT: f64 = 1e-8;

/// Drift `D` and diffusion `V` of the Gaussian model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdvectionDiffusionParams {
    pub drift: f64,
    pub diffusion: f64,
}

impl AdvectionDiffusionParams {
    pub fn new(drift: f64, diffusion: f64) -> Result<Self> {
        if !(drift.is_finite() && diffusion.is_finite() && diffusion > 0.0) {
            return Err(Error::Domain(format!(
                "advection-diffusion needs finite drift and positive diffusion, got ({drift}, {diffusion})"
            )));
        }
        Ok(Self { drift, diffusion })
    }

    /// `N(D t, 2 V t)`.
    pub fn normal_at(&self, t: f64) -> Result<NormalSpec> {
        NormalSpec::new(self.drift * t, 2.0 * self.diffusion * t)
    }
}

/// Closed-form density `exp(-(x - D t)^2 / 4 V t) / sqrt(4 pi V t)`.
pub fn gaussian_solution(params: &AdvectionDiffusionParams, x: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!(
            "t = {t}: the initial condition is a point mass, density defined for t > 0"
        )));
    }
    if !(params.diffusion > 0.0) {
        return Err(Error::Domain("diffusion must be positive".into()));
    }
    let vt = params.diffusion * t;
    let shift = x - params.drift * t;
    Ok((-shift * shift / (4.0 * vt)).exp() / (4.0 * PI * vt).sqrt())
}

/// Retention fraction `k`, diffusion coefficient `K2` and retention
/// coefficient `K4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetentionParams {
    pub retention: f64,
    pub diffusion: f64,
    pub retention_coefficient: f64,
}

impl RetentionParams {
    pub fn new(retention: f64, diffusion: f64, retention_coefficient: f64) -> Result<Self> {
        let p = Self {
            retention,
            diffusion,
            retention_coefficient,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.retention) {
            return Err(Error::Domain(format!(
                "retention {} outside [0, 1)",
                self.retention
            )));
        }
        if !(self.diffusion > 0.0 && self.diffusion.is_finite()) {
            return Err(Error::Domain(format!("K2 = {} must be positive", self.diffusion)));
        }
        if !(self.retention_coefficient > 0.0 && self.retention_coefficient.is_finite()) {
            return Err(Error::Domain(format!(
                "K4 = {} must be positive",
                self.retention_coefficient
            )));
        }
        Ok(())
    }

    /// Coefficient of the second-derivative term, `(1 - k) K2`.
    pub fn second_order_coefficient(&self) -> f64 {
        (1.0 - self.retention) * self.diffusion
    }

    /// Magnitude of the fourth-derivative term, `k (1 - k) K4`.
    pub fn fourth_order_coefficient(&self) -> f64 {
        self.retention * (1.0 - self.retention) * self.retention_coefficient
    }
}

/// Moments of the plus-sign retention density started from a delta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RetentionMoments {
    Evolving {
        variance: f64,
        /// Raw fourth moment `12 (1-k)^2 K2^2 t^2 + 24 k (1-k) K4 t`.
        fourth_moment: f64,
        kurtosis: f64,
        excess_kurtosis: f64,
    },
    /// `k = 1`: nothing moves and the variance stays zero.
    Stationary,
}

impl RetentionMoments {
    pub fn variance(&self) -> f64 {
        match *self {
            Self::Evolving { variance, .. } => variance,
            Self::Stationary => 0.0,
        }
    }
}

/// `Var = 2 (1-k) K2 t`, `kurtosis = 3 + 6 k K4 / ((1-k) K2^2 t)`.
pub fn retention_moments(params: &RetentionParams, t: f64) -> Result<RetentionMoments> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("moments need t > 0, got {t}")));
    }
    if params.retention == 1.0 {
        return Ok(RetentionMoments::Stationary);
    }
    params.validate()?;
    let k = params.retention;
    let k2 = params.diffusion;
    let k4 = params.retention_coefficient;
    let variance = 2.0 * (1.0 - k) * k2 * t;
    let fourth_moment =
        12.0 * (1.0 - k).powi(2) * k2 * k2 * t * t + 24.0 * k * (1.0 - k) * k4 * t;
    let excess_kurtosis = 6.0 * k * k4 / ((1.0 - k) * k2 * k2 * t);
    Ok(RetentionMoments::Evolving {
        variance,
        fourth_moment,
        kurtosis: 3.0 + excess_kurtosis,
        excess_kurtosis,
    })
}

/// Sign of the fourth-order term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignVariant {
    /// `- k(1-k) K4 p_xxxx`: well posed, platykurtic.
    Minus,
    /// `+ k(1-k) K4 p_xxxx`: leptokurtic, needs a spectral cutoff.
    Plus,
}

/// Spatial window, resolution and time horizon of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub dx: f64,
    /// Time step of explicit schemes; spectral solves use it only to place slices.
    pub dt: f64,
    pub t_final: f64,
    /// Location of the initial delta.
    pub center: f64,
    /// Number of retained slices after the initial one.
    pub snapshots: usize,
}

impl GridConfig {
    /// Symmetric window `center ± half_width`.
    pub fn centered(center: f64, half_width: f64, dx: f64, dt: f64, t_final: f64) -> Self {
        Self {
            x_min: center - half_width,
            x_max: center + half_width,
            dx,
            dt,
            t_final,
            center,
            snapshots: 10,
        }
    }

    pub fn with_snapshots(mut self, snapshots: usize) -> Self {
        self.snapshots = snapshots;
        self
    }

    pub fn n_cells(&self) -> usize {
        ((self.x_max - self.x_min) / self.dx).round() as usize + 1
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx
    }

    fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.x_max, self.dx, self.dt, self.t_final, self.center]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("grid values must be finite".into()));
        }
        if !(self.dx > 0.0 && self.dt > 0.0 && self.t_final > 0.0) {
            return Err(Error::Config(format!(
                "dx = {}, dt = {}, T = {} must all be positive",
                self.dx, self.dt, self.t_final
            )));
        }
        if !(self.x_max > self.x_min) || self.n_cells() < 5 {
            return Err(Error::Config(format!(
                "window [{}, {}] must hold at least 5 cells of width {}",
                self.x_min, self.x_max, self.dx
            )));
        }
        if !(self.center >= self.x_min && self.center <= self.x_max) {
            return Err(Error::Config(format!(
                "centre {} outside window [{}, {}]",
                self.center, self.x_min, self.x_max
            )));
        }
        if self.snapshots == 0 {
            return Err(Error::Config("need at least one snapshot".into()));
        }
        Ok(())
    }

    /// Number of explicit steps; `T` must be a whole multiple of `dt`.
    fn steps(&self) -> Result<usize> {
        let n = (self.t_final / self.dt).round();
        if n < 1.0 || (n * self.dt - self.t_final).abs() > 1e-9 * self.t_final {
            return Err(Error::Config(format!(
                "T = {} is not a whole number of steps dt = {}",
                self.t_final, self.dt
            )));
        }
        Ok(n as usize)
    }

    fn delta_index(&self) -> usize {
        (((self.center - self.x_min) / self.dx).round() as usize).min(self.n_cells() - 1)
    }

    fn delta(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.n_cells()];
        v[self.delta_index()] = 1.0 / self.dx;
        v
    }

    /// Step indices at which slices are retained, ending at `steps`.
    fn snapshot_steps(&self, steps: usize) -> Vec<usize> {
        let mut out: Vec<usize> = (0..=self.snapshots)
            .map(|j| ((j as f64) * steps as f64 / self.snapshots as f64).round() as usize)
            .collect();
        out.dedup();
        out
    }
}

/// Half-width `12 sqrt(2 var)` of a window that keeps boundary mass negligible
/// for a density whose variance at the final time is `variance`.
pub fn suggested_half_width(variance: f64) -> f64 {
    12.0 * (2.0 * variance).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridModel {
    AdvectionDiffusion,
    Retention(SignVariant),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Forward Euler with centred diffusion and upwind advection.
    ExplicitUpwind,
    /// Forward Euler with centred second and fourth differences.
    ExplicitRetention,
    /// Exact Fourier evolution of modes below a cutoff.
    SpectralCutoff,
    /// Zero drift and diffusion: every slice is the initial delta.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDiagnostics {
    pub scheme: Scheme,
    /// Named dimensionless ratios checked against their stability limits.
    pub stability_ratios: BTreeMap<String, f64>,
    /// Mass within the outer boundary bands at the final time.
    pub boundary_mass: f64,
    /// Frequency cutoff of a spectral solve.
    pub cutoff: Option<f64>,
    pub warnings: Vec<String>,
}

/// Density samples on a uniform grid at retained times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    /// Position of the first cell.
    pub x0: f64,
    pub dx: f64,
    pub dt: f64,
    pub model: GridModel,
    pub times: Vec<f64>,
    /// One density slice per retained time.
    pub values: Vec<Vec<f64>>,
    pub diagnostics: GridDiagnostics,
}

impl Grid {
    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    pub fn n_cells(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn final_slice(&self) -> &[f64] {
        self.values.last().expect("grid holds at least one slice")
    }

    /// `sum(values) * dx` of slice `time_index`.
    pub fn mass(&self, time_index: usize) -> f64 {
        self.values[time_index].iter().sum::<f64>() * self.dx
    }

    pub fn variant(&self) -> Option<SignVariant> {
        match self.model {
            GridModel::Retention(v) => Some(v),
            GridModel::AdvectionDiffusion => None,
        }
    }

    /// Writes `x,density` rows of one slice.
    pub fn write_slice_csv<W: Write>(&self, time_index: usize, out: W) -> Result<()> {
        let slice = self.values.get(time_index).ok_or_else(|| {
            Error::Domain(format!("time index {time_index} out of {}", self.values.len()))
        })?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "density"])?;
        for (i, p) in slice.iter().enumerate() {
            w.write_record([format_f64(self.x(i)), format_f64(*p)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `sum |a - b| dx` over two slices on the same grid.
pub fn l1_distance(a: &[f64], b: &[f64], dx: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() * dx
}

/// Trapezoidal moments of slice `time_index`, normalised by its mass.
pub fn grid_moments(g: &Grid, time_index: usize) -> Result<MomentSummary> {
    let slice = g.values.get(time_index).ok_or_else(|| {
        Error::Domain(format!("time index {time_index} out of {}", g.values.len()))
    })?;
    let last = slice.len() - 1;
    let points = slice.iter().enumerate().map(|(i, &p)| {
        let w = if i == 0 || i == last { 0.5 } else { 1.0 };
        (g.x(i), w * p * g.dx)
    });
    Ok(MomentSummary::from_weighted(points, slice.len()))
}

/// Raw trapezoidal moment `∫ (x - about)^n p dx` of a slice.
pub fn grid_raw_moment(g: &Grid, time_index: usize, n: i32, about: f64) -> f64 {
    let slice = &g.values[time_index];
    let last = slice.len() - 1;
    slice
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let w = if i == 0 || i == last { 0.5 } else { 1.0 };
            w * p * (g.x(i) - about).powi(n)
        })
        .sum::<f64>()
        * g.dx
}

/// Options for [`solve_retention`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetentionSolveOptions {
    pub variant: SignVariant,
    /// Frequency cutoff of the plus variant. Required whenever the fourth-order
    /// term is active.
    pub cutoff: Option<f64>,
}

/// Solves the retention equation from a delta.
///
/// With `k = 0` the fourth-order term vanishes for both signs and the explicit
/// scheme is used; the plus variant with `k > 0` is evaluated spectrally and
/// requires an explicit cutoff.
pub fn solve_retention(
    params: &RetentionParams,
    config: &GridConfig,
    options: &RetentionSolveOptions,
) -> Result<Grid> {
    params.validate()?;
    config.validate()?;
    let model = GridModel::Retention(options.variant);
    if params.retention == 0.0 || options.variant == SignVariant::Minus {
        return explicit::solve_retention_explicit(params, config, model);
    }
    let cutoff = options.cutoff.ok_or_else(|| {
        Error::Config(
            "the plus-sign retention equation is ill posed; choose a frequency cutoff explicitly"
                .into(),
        )
    })?;
    spectral::solve_retention_spectral(params, config, cutoff)
}

/// Mass in the outer `max(2, n/20)` cells on each side.
fn boundary_mass(slice: &[f64], dx: f64) -> f64 {
    let band = (slice.len() / 20).max(2).min(slice.len() / 2);
    let n = slice.len();
    (slice[..band].iter().chain(&slice[n - band..]).map(|p| p.abs()).sum::<f64>()) * dx
}

fn boundary_warning(mass: f64) -> Option<String> {
    (mass >= BOUNDARY_MASS_LIMIT).then(|| {
        format!("boundary mass {mass:e} exceeds {BOUNDARY_MASS_LIMIT:e}; widen the window")
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::normal_pdf;

    #[test]
    fn gaussian_peak_and_domain() {
        let p = AdvectionDiffusionParams::new(0.3, 0.7).unwrap();
        let t = 2.0;
        let peak = gaussian_solution(&p, 0.6, t).unwrap();
        assert!((peak - 1.0 / (4.0 * PI * 0.7 * t).sqrt()).abs() < 1e-15);
        assert!(gaussian_solution(&p, 0.0, 0.0).is_err());
        assert!(gaussian_solution(&p, 0.0, -1.0).is_err());
    }

    #[test]
    fn gaussian_standard_normal_case() {
        let p = AdvectionDiffusionParams::new(0.0, 0.5).unwrap();
        let std = NormalSpec::new(0.0, 1.0).unwrap();
        for x in [-2.0, -0.3, 0.0, 1.7] {
            assert!((gaussian_solution(&p, x, 1.0).unwrap() - normal_pdf(x, &std)).abs() < 1e-15);
        }
    }

    #[test]
    fn gaussian_integrates_to_one() {
        let p = AdvectionDiffusionParams::new(0.4, 0.25).unwrap();
        let (a, b, n) = (-15.0, 15.0, 30_000);
        let h = (b - a) / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            acc += w * gaussian_solution(&p, a + i as f64 * h, 1.5).unwrap();
        }
        assert!((acc * h - 1.0).abs() < 1e-8);
    }

    #[test]
    fn retention_moment_examples() {
        let p = RetentionParams {
            retention: 0.0,
            diffusion: 0.8,
            retention_coefficient: 1.0,
        };
        let RetentionMoments::Evolving {
            variance, kurtosis, ..
        } = retention_moments(&p, 2.0).unwrap()
        else {
            panic!("expected evolving moments")
        };
        assert!((variance - 3.2).abs() < 1e-15);
        assert_eq!(kurtosis, 3.0);

        let p = RetentionParams::new(0.5, 1.0, 1.0).unwrap();
        let RetentionMoments::Evolving {
            variance,
            kurtosis,
            excess_kurtosis,
            fourth_moment,
        } = retention_moments(&p, 1.0).unwrap()
        else {
            panic!("expected evolving moments")
        };
        assert_eq!(variance, 1.0);
        assert_eq!(kurtosis, 9.0);
        assert_eq!(excess_kurtosis, 6.0);
        assert_eq!(fourth_moment / (variance * variance), kurtosis);
    }

    #[test]
    fn kurtosis_decays_to_gaussian() {
        let p = RetentionParams::new(0.4, 1e-4, 3e-8).unwrap();
        let late = retention_moments(&p, 1e9).unwrap();
        let RetentionMoments::Evolving { kurtosis, .. } = late else {
            panic!()
        };
        assert!((kurtosis - 3.0).abs() < 1e-6);
    }

    #[test]
    fn full_retention_is_stationary() {
        let p = RetentionParams {
            retention: 1.0,
            diffusion: 1.0,
            retention_coefficient: 1.0,
        };
        assert_eq!(retention_moments(&p, 1.0).unwrap(), RetentionMoments::Stationary);
        assert!(RetentionParams::new(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn plus_variant_demands_cutoff() {
        let p = RetentionParams::new(0.1, 1.0, 0.1).unwrap();
        let cfg = GridConfig::centered(0.0, 20.0, 0.05, 0.01, 1.0);
        let opts = RetentionSolveOptions {
            variant: SignVariant::Plus,
            cutoff: None,
        };
        assert!(matches!(solve_retention(&p, &cfg, &opts), Err(Error::Config(_))));
    }

    #[test]
    fn grid_config_validation() {
        let bad_steps = GridConfig::centered(0.0, 1.0, 0.1, 0.3, 1.0);
        assert!(bad_steps.steps().is_err());
        let outside = GridConfig {
            center: 5.0,
            ..GridConfig::centered(0.0, 1.0, 0.1, 0.1, 1.0)
        };
        assert!(outside.validate().is_err());
        let ok = GridConfig::centered(0.0, 1.0, 0.1, 0.1, 1.0);
        assert_eq!(ok.n_cells(), 21);
        assert_eq!(ok.delta_index(), 10);
        assert_eq!(ok.snapshot_steps(10), (0..=10).collect::<Vec<_>>());
    }
}
