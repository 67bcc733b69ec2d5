//! Central difference stencils with unit spacing.

use crate::{Error, Result};

/// `f[i-1] - 2 f[i] + f[i+1]`.
pub fn second_difference(values: &[f64], i: usize) -> Result<f64> {
    if i < 1 || i + 1 >= values.len() {
        return Err(Error::Domain(format!(
            "second difference needs one neighbour on each side of index {i} (len {})",
            values.len()
        )));
    }
    Ok(values[i - 1] - 2.0 * values[i] + values[i + 1])
}

/// `f[i-2] - 4 f[i-1] + 6 f[i] - 4 f[i+1] + f[i+2]`.
pub fn fourth_difference(values: &[f64], i: usize) -> Result<f64> {
    if i < 2 || i + 2 >= values.len() {
        return Err(Error::Domain(format!(
            "fourth difference needs two neighbours on each side of index {i} (len {})",
            values.len()
        )));
    }
    Ok(values[i - 2] - 4.0 * values[i - 1] + 6.0 * values[i] - 4.0 * values[i + 1]
        + values[i + 2])
}

/// Second difference treating cells outside the slice as zero.
#[inline]
pub(crate) fn second_difference_padded(v: &[f64], i: usize) -> f64 {
    let at = |j: isize| -> f64 {
        if j < 0 || j as usize >= v.len() {
            0.0
        } else {
            v[j as usize]
        }
    };
    let i = i as isize;
    at(i - 1) - 2.0 * at(i) + at(i + 1)
}

/// Fourth difference treating cells outside the slice as zero.
#[inline]
pub(crate) fn fourth_difference_padded(v: &[f64], i: usize) -> f64 {
    let at = |j: isize| -> f64 {
        if j < 0 || j as usize >= v.len() {
            0.0
        } else {
            v[j as usize]
        }
    };
    let i = i as isize;
    at(i - 2) - 4.0 * at(i - 1) + 6.0 * at(i) - 4.0 * at(i + 1) + at(i + 2)
}
