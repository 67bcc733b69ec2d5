//! Sample moments, quantiles and histograms of return data.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{format_f64, Error, Result};

/// Mean, MLE variance and excess kurtosis of a sample or a distribution.
///
/// `excess_kurtosis` is `None` when the variance is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub mean: f64,
    pub variance: f64,
    pub excess_kurtosis: Option<f64>,
    pub count: usize,
}

impl MomentSummary {
    /// Excess kurtosis, or a degenerate-sample error for zero variance.
    pub fn kurtosis_excess(&self) -> Result<f64> {
        self.excess_kurtosis
            .ok_or_else(|| Error::Degenerate("zero variance, kurtosis undefined".into()))
    }

    /// Moments of a weighted point set; weights need not be normalised.
    pub(crate) fn from_weighted<I>(points: I, count: usize) -> Self
    where
        I: Iterator<Item = (f64, f64)> + Clone,
    {
        let total: f64 = points.clone().map(|(_, w)| w).sum();
        let mean = points.clone().map(|(x, w)| x * w).sum::<f64>() / total;
        let (m2, m4) = points.fold((0.0, 0.0), |(m2, m4), (x, w)| {
            let d2 = (x - mean) * (x - mean);
            (m2 + w * d2, m4 + w * d2 * d2)
        });
        let variance = m2 / total;
        let m4 = m4 / total;
        let excess_kurtosis = (variance > 0.0).then(|| m4 / (variance * variance) - 3.0);
        Self {
            mean,
            variance,
            excess_kurtosis,
            count,
        }
    }
}

/// Moments with divisor `n` throughout and no small-sample correction.
pub fn sample_moments(values: &[f64]) -> Result<MomentSummary> {
    if values.len() < 4 {
        return Err(Error::InsufficientData {
            needed: 4,
            got: values.len(),
        });
    }
    let points = values.iter().map(|&x| (x, 1.0));
    Ok(MomentSummary::from_weighted(points, values.len()))
}

/// Quantiles by linear interpolation between order statistics at the
/// zero-based rank `p * (n - 1)`.
pub fn empirical_quantiles(values: &[f64], probs: &[f64]) -> Result<Vec<f64>> {
    if probs.is_empty() {
        return Ok(Vec::new());
    }
    if values.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if let Some(p) = probs.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(Error::Domain(format!("probability {p} outside (0, 1)")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(probs.iter().map(|&p| quantile_sorted(&sorted, p)).collect())
}

pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Bin count selection for [`histogram`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Bins {
    /// Freedman-Diaconis width, at least 10 bins.
    #[default]
    Auto,
    Count(usize),
}

const MIN_AUTO_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// `counts / (n * width)`.
    pub densities: Vec<f64>,
}

impl Histogram {
    pub fn bin_count(&self) -> usize {
        self.counts.len()
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        self.bin_edges.windows(2).map(|e| 0.5 * (e[0] + e[1]))
    }

    pub fn widths(&self) -> impl Iterator<Item = f64> + '_ {
        self.bin_edges.windows(2).map(|e| e[1] - e[0])
    }

    /// Writes `bin_left,bin_right,count,density` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bin_left", "bin_right", "count", "density"])?;
        for (i, edges) in self.bin_edges.windows(2).enumerate() {
            w.write_record([
                format_f64(edges[0]),
                format_f64(edges[1]),
                self.counts[i].to_string(),
                format_f64(self.densities[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Equal-width histogram spanning `[min, max]`. A constant sample yields one
/// bin of width `max(|x| * 1e-9, 1e-12)` centred on the value.
pub fn histogram(values: &[f64], bins: Bins) -> Result<Histogram> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite value {bad}")));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    if min == max {
        let width = (min.abs() * 1e-9).max(1e-12);
        return Ok(Histogram {
            bin_edges: vec![min - 0.5 * width, min + 0.5 * width],
            counts: vec![n],
            densities: vec![1.0 / width],
        });
    }

    let nbins = match bins {
        Bins::Count(0) => return Err(Error::Domain("bin count must be positive".into())),
        Bins::Count(b) => b,
        Bins::Auto => freedman_diaconis_bins(values, min, max),
    };
    let width = (max - min) / nbins as f64;
    let mut bin_edges: Vec<f64> = (0..=nbins).map(|i| min + i as f64 * width).collect();
    bin_edges[nbins] = max;

    let mut counts = vec![0usize; nbins];
    for &x in values {
        let idx = (((x - min) / width) as usize).min(nbins - 1);
        counts[idx] += 1;
    }
    let densities = counts
        .iter()
        .zip(bin_edges.windows(2))
        .map(|(&c, e)| c as f64 / (n as f64 * (e[1] - e[0])))
        .collect();
    Ok(Histogram {
        bin_edges,
        counts,
        densities,
    })
}

fn freedman_diaconis_bins(values: &[f64], min: f64, max: f64) -> usize {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let width = 2.0 * iqr / (values.len() as f64).cbrt();
    if width <= 0.0 {
        return MIN_AUTO_BINS;
    }
    let bins = ((max - min) / width).ceil() as usize;
    bins.clamp(MIN_AUTO_BINS, values.len().max(MIN_AUTO_BINS))
}
