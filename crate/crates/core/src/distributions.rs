//! Normal and location-scale Student-t distributions.
//!
//! The Student-t stands in for the retention model's density: its degrees of
//! freedom are fixed by inverting `excess kurtosis = 6 / (df - 4)`, and its
//! scale by matching the sample variance.

use std::f64::consts::{PI, SQRT_2};

use rand_distr::{Distribution, StudentT};
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc_inv;
use statrs::function::gamma::ln_gamma;

use crate::rng::stream_rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalSpec {
    pub mu: f64,
    /// Variance.
    pub sigma2: f64,
}

impl NormalSpec {
    pub fn new(mu: f64, sigma2: f64) -> Result<Self> {
        if !(mu.is_finite() && sigma2.is_finite() && sigma2 > 0.0) {
            return Err(Error::Domain(format!(
                "normal needs finite mean and positive variance, got ({mu}, {sigma2})"
            )));
        }
        Ok(Self { mu, sigma2 })
    }

    pub fn pdf(&self, x: f64) -> f64 {
        normal_pdf(x, self)
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let z2 = (x - self.mu).powi(2) / self.sigma2;
        -0.5 * ((2.0 * PI * self.sigma2).ln() + z2)
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        check_probability(p)?;
        Ok(self.mu - self.sigma2.sqrt() * SQRT_2 * erfc_inv(2.0 * p))
    }
}

pub fn normal_pdf(x: f64, spec: &NormalSpec) -> f64 {
    let z2 = (x - spec.mu).powi(2) / spec.sigma2;
    (-0.5 * z2).exp() / (2.0 * PI * spec.sigma2).sqrt()
}

/// Location-scale Student-t with real-valued degrees of freedom `df > 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudentTSpec {
    pub df: f64,
    pub loc: f64,
    pub scale: f64,
}

impl StudentTSpec {
    pub fn new(df: f64, loc: f64, scale: f64) -> Result<Self> {
        if !(df > 2.0 && df.is_finite()) {
            return Err(Error::Domain(format!(
                "Student-t needs df > 2 for a finite variance, got {df}"
            )));
        }
        if !(loc.is_finite() && scale.is_finite() && scale > 0.0) {
            return Err(Error::Domain(format!(
                "Student-t needs finite location and positive scale, got ({loc}, {scale})"
            )));
        }
        Ok(Self { df, loc, scale })
    }

    pub fn variance(&self) -> f64 {
        self.scale * self.scale * self.df / (self.df - 2.0)
    }

    /// `6 / (df - 4)`; undefined for `df <= 4`.
    pub fn excess_kurtosis(&self) -> Option<f64> {
        (self.df > 4.0).then(|| 6.0 / (self.df - 4.0))
    }

    pub fn pdf(&self, x: f64) -> f64 {
        t_pdf(x, self)
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        student_t_ln_pdf(x, self.df, self.loc, self.scale)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        t_cdf(x, self)
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        t_quantile(p, self)
    }
}

/// Log-density of a location-scale t for any `df > 0`.
pub fn student_t_ln_pdf(x: f64, df: f64, loc: f64, scale: f64) -> f64 {
    let z = (x - loc) / scale;
    ln_gamma(0.5 * (df + 1.0))
        - ln_gamma(0.5 * df)
        - 0.5 * (df * PI).ln()
        - scale.ln()
        - 0.5 * (df + 1.0) * (z * z / df).ln_1p()
}

/// Density of a location-scale t for any `df > 0`; `df = 1` is the Cauchy law.
pub fn student_t_pdf(x: f64, df: f64, loc: f64, scale: f64) -> f64 {
    student_t_ln_pdf(x, df, loc, scale).exp()
}

pub fn t_pdf(x: f64, spec: &StudentTSpec) -> f64 {
    student_t_pdf(x, spec.df, spec.loc, spec.scale)
}

pub fn t_cdf(x: f64, spec: &StudentTSpec) -> f64 {
    standard_t_cdf((x - spec.loc) / spec.scale, spec.df)
}

fn standard_t_cdf(z: f64, df: f64) -> f64 {
    if z == 0.0 {
        return 0.5;
    }
    // Upper-tail mass 0.5 * I_{df/(df+z^2)}(df/2, 1/2).
    let tail = 0.5 * beta_reg(0.5 * df, 0.5, df / (df + z * z));
    if z > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("probability {p} outside (0, 1)")))
    }
}

/// Inverse CDF by safeguarded Newton iteration on the regularized incomplete
/// beta form of the CDF.
pub fn t_quantile(p: f64, spec: &StudentTSpec) -> Result<f64> {
    check_probability(p)?;
    if p == 0.5 {
        return Ok(spec.loc);
    }
    let upper = p.max(1.0 - p);
    let z = standard_t_upper_quantile(upper, spec.df);
    let z = if p < 0.5 { -z } else { z };
    Ok(spec.loc + spec.scale * z)
}

/// Solves `cdf(z) = p` for `p > 0.5`, returning `z > 0`.
fn standard_t_upper_quantile(p: f64, df: f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = 1.0;
    while standard_t_cdf(hi, df) < p {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    let mut z = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = standard_t_cdf(z, df) - p;
        if f > 0.0 {
            hi = z;
        } else {
            lo = z;
        }
        let newton = z - f / student_t_pdf(z, df, 0.0, 1.0);
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - z).abs() <= 1e-15 * z.abs().max(1.0) || hi - lo <= 1e-15 * hi {
            return next;
        }
        z = next;
    }
    z
}

/// `n` i.i.d. draws, reproducible for a fixed seed.
pub fn t_sample(spec: &StudentTSpec, n: usize, seed: u64) -> Vec<f64> {
    t_sample_stream(spec, n, seed, 0)
}

pub fn t_sample_stream(spec: &StudentTSpec, n: usize, seed: u64, stream: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, stream);
    let dist = StudentT::new(spec.df).expect("df validated by StudentTSpec");
    (0..n)
        .map(|_| spec.loc + spec.scale * dist.sample(&mut rng))
        .collect()
}

/// Degrees of freedom whose excess kurtosis is `k_e`: `6 / k_e + 4`.
pub fn df_from_excess_kurtosis(k_e: f64) -> Result<f64> {
    if !(k_e > 0.0) || !k_e.is_finite() {
        return Err(Error::Domain(format!(
            "excess kurtosis {k_e} must be positive to map onto a Student-t"
        )));
    }
    Ok(6.0 / k_e + 4.0)
}

/// Scale that gives a t with `df` degrees of freedom the requested variance.
pub fn t_scale_for_variance(df: f64, target_variance: f64) -> Result<f64> {
    if !(df > 2.0) {
        return Err(Error::Domain(format!("variance undefined for df = {df} <= 2")));
    }
    if !(target_variance > 0.0 && target_variance.is_finite()) {
        return Err(Error::Domain(format!(
            "target variance {target_variance} must be positive"
        )));
    }
    Ok((target_variance * (df - 2.0) / df).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::sample_moments;

    /// CDF by composite Simpson integration of the density from the location,
    /// independent of the incomplete-beta route.
    fn simpson_cdf(x: f64, spec: &StudentTSpec) -> f64 {
        let n = 20_000;
        let a = spec.loc;
        let h = (x - a) / n as f64;
        let mut acc = t_pdf(a, spec) + t_pdf(x, spec);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * t_pdf(a + i as f64 * h, spec);
        }
        0.5 + acc * h / 3.0
    }

    #[test]
    fn normal_peak_and_symmetry() {
        let spec = NormalSpec::new(0.3, 1.0 / (2.0 * PI)).unwrap();
        assert!((normal_pdf(0.3, &spec) - 1.0).abs() < 1e-15);
        assert_eq!(normal_pdf(0.3 + 0.2, &spec), normal_pdf(0.3 - 0.2, &spec));
        let std = NormalSpec::new(0.0, 1.0).unwrap();
        assert!((normal_pdf(0.0, &std) - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn normal_quantile_round_trip() {
        let spec = NormalSpec::new(1.0, 4.0).unwrap();
        assert!((spec.quantile(0.975).unwrap() - (1.0 + 2.0 * 1.959_963_984_540_054)).abs() < 1e-12);
        assert_eq!(spec.quantile(0.5).unwrap(), 1.0);
    }

    #[test]
    fn cauchy_peak() {
        assert!((student_t_pdf(0.0, 1.0, 0.0, 1.0) - 1.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn t_symmetry_and_normal_limit() {
        let spec = StudentTSpec::new(5.0, 0.2, 1.5).unwrap();
        assert!((t_pdf(0.2 + 0.7, &spec) - t_pdf(0.2 - 0.7, &spec)).abs() < 1e-16);

        let t = StudentTSpec::new(1e6, 0.0, 1.0).unwrap();
        let n = NormalSpec::new(0.0, t.variance()).unwrap();
        for i in -40..=40 {
            let x = i as f64 * 0.1;
            assert!((t_pdf(x, &t) - normal_pdf(x, &n)).abs() < 1e-6);
        }
    }

    #[test]
    fn t_pdf_integrates_to_one() {
        // Substitution x = tan(u) removes the infinite range.
        let spec = StudentTSpec::new(3.5, 0.0, 1.0).unwrap();
        let n = 200_000;
        let h = PI / n as f64;
        let mut acc = 0.0;
        for i in 1..n {
            let u = -0.5 * PI + i as f64 * h;
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * t_pdf(u.tan(), &spec) / u.cos().powi(2);
        }
        assert!((acc * h / 3.0 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn t_quantile_df4_oracle() {
        let spec = StudentTSpec::new(4.0, 0.0, 1.0).unwrap();
        let q = t_quantile(0.975, &spec).unwrap();
        // Oracle: bisection on the Simpson CDF.
        let (mut lo, mut hi) = (0.0, 10.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if simpson_cdf(mid, &spec) < 0.975 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((q - 0.5 * (lo + hi)).abs() < 1e-7);
        assert!((q - 2.7764).abs() < 5e-5);
    }

    #[test]
    fn t_quantile_symmetry_and_median() {
        let spec = StudentTSpec::new(6.3, 0.0, 2.0).unwrap();
        assert_eq!(t_quantile(0.5, &spec).unwrap(), 0.0);
        for p in [0.01, 0.1, 0.3, 0.45] {
            let a = t_quantile(p, &spec).unwrap();
            let b = t_quantile(1.0 - p, &spec).unwrap();
            assert!((a + b).abs() < 1e-12);
        }
        assert!(t_quantile(0.0, &spec).is_err());
        assert!(t_quantile(1.0, &spec).is_err());
    }

    #[test]
    fn t_cdf_matches_simpson() {
        let spec = StudentTSpec::new(7.5, 0.1, 0.8).unwrap();
        for x in [-3.0, -0.5, 0.4, 2.0] {
            assert!((t_cdf(x, &spec) - simpson_cdf(x, &spec)).abs() < 1e-12);
        }
    }

    #[test]
    fn sampler_is_deterministic() {
        let spec = StudentTSpec::new(5.0, 0.0, 1.0).unwrap();
        assert_eq!(t_sample(&spec, 100, 9), t_sample(&spec, 100, 9));
        assert_ne!(t_sample(&spec, 100, 9), t_sample(&spec, 100, 10));
    }

    #[test]
    fn sampler_moments_df10() {
        let spec = StudentTSpec::new(10.0, 0.0, 1.0).unwrap();
        let xs = t_sample(&spec, 1_000_000, 2024);
        let m = sample_moments(&xs).unwrap();
        assert!((m.variance / 1.25 - 1.0).abs() < 0.02, "{m:?}");
        assert!((m.excess_kurtosis.unwrap() - 1.0).abs() < 0.3, "{m:?}");
    }

    #[test]
    fn df_mapping_examples() {
        assert_eq!(df_from_excess_kurtosis(1.0).unwrap(), 10.0);
        assert_eq!(df_from_excess_kurtosis(3.0).unwrap(), 6.0);
        assert!(df_from_excess_kurtosis(1e12).unwrap() > 4.0);
        assert!(df_from_excess_kurtosis(1e3).unwrap() < df_from_excess_kurtosis(1e2).unwrap());
        assert!(df_from_excess_kurtosis(0.0).is_err());
        assert!(df_from_excess_kurtosis(-0.5).is_err());
    }

    #[test]
    fn scale_examples() {
        assert!((t_scale_for_variance(1e12, 1.0).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(t_scale_for_variance(4.0, 1.0).unwrap(), 0.5f64.sqrt());
        assert!((t_scale_for_variance(10.0, 4e-4).unwrap() - 3.2e-4f64.sqrt()).abs() < 1e-18);
        assert!(t_scale_for_variance(2.0, 1.0).is_err());
    }

    #[test]
    fn constructors_validate() {
        assert!(StudentTSpec::new(2.0, 0.0, 1.0).is_err());
        assert!(StudentTSpec::new(3.0, 0.0, 0.0).is_err());
        assert_eq!(StudentTSpec::new(4.0, 0.0, 1.0).unwrap().excess_kurtosis(), None);
        assert!(NormalSpec::new(0.0, 0.0).is_err());
    }
}
