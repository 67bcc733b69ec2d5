//! Exact discrete evolution of the cell-redistribution rules.
//!
//! A lattice state holds probability mass over a contiguous run of cells. One
//! step convolves it with a three-point pmf over displacements {-1, 0, +1}.
//! The array grows by one cell on each side that can receive mass, so nothing
//! is ever truncated; these states are the reference against which the
//! continuum moment laws are checked.
//!
//! Direction convention: `up` is a step of `+dx`. For [`ThreeStateRule`] the
//! up-step probability is `beta`, so the mean displacement per step is
//! `(beta - alpha) * dx`. [`AsymmetricRule`] uses the same coefficient mapping:
//! the weight `(1 + k) / 2` attached to the left neighbour is a down-step.

use std::io::Write;

use rayon::prelude::*;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::pde::AdvectionDiffusionParams;
use crate::rng::stream_rng;
use crate::stats::MomentSummary;
use crate::{format_f64, Error, Result};

const PROB_TOL: f64 = 1e-12;

/// Default limit on the number of cells a state may hold.
pub const DEFAULT_MAX_CELLS: usize = 1 << 26;

/// Per-step probabilities of moving down, staying and moving up one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepPmf {
    pub down: f64,
    pub stay: f64,
    pub up: f64,
}

impl StepPmf {
    pub fn mean(&self) -> f64 {
        self.up - self.down
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.up + self.down - m * m
    }
}

/// Buy/sell/hold walk: down with `alpha`, hold with `k`, up with `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreeStateRule {
    pub alpha: f64,
    pub k: f64,
    pub beta: f64,
}

impl ThreeStateRule {
    pub fn new(alpha: f64, k: f64, beta: f64) -> Result<Self> {
        let all_probs = [alpha, k, beta].iter().all(|p| (0.0..=1.0).contains(p));
        if !all_probs || (alpha + k + beta - 1.0).abs() > PROB_TOL {
            return Err(Error::Domain(format!(
                "three-state probabilities ({alpha}, {k}, {beta}) must be non-negative and sum to 1"
            )));
        }
        Ok(Self { alpha, k, beta })
    }
}

/// Symmetric diffusion with retention: a fraction `k` stays, `(1 - k) / 2`
/// moves to each neighbour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetricRetentionRule {
    pub k: f64,
}

impl SymmetricRetentionRule {
    pub fn new(k: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&k) {
            return Err(Error::Domain(format!("retention fraction {k} outside [0, 1]")));
        }
        Ok(Self { k })
    }

    pub fn gamma(&self) -> f64 {
        0.5 * (1.0 - self.k)
    }
}

/// Asymmetric diffusion without retention, `-1 < k < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymmetricRule {
    pub k: f64,
}

impl AsymmetricRule {
    pub fn new(k: f64) -> Result<Self> {
        if !(k > -1.0 && k < 1.0) {
            return Err(Error::Domain(format!("asymmetry {k} outside (-1, 1)")));
        }
        Ok(Self { k })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum LatticeRule {
    ThreeState(ThreeStateRule),
    Symmetric(SymmetricRetentionRule),
    Asymmetric(AsymmetricRule),
}

impl From<ThreeStateRule> for LatticeRule {
    fn from(r: ThreeStateRule) -> Self {
        Self::ThreeState(r)
    }
}

impl From<SymmetricRetentionRule> for LatticeRule {
    fn from(r: SymmetricRetentionRule) -> Self {
        Self::Symmetric(r)
    }
}

impl From<AsymmetricRule> for LatticeRule {
    fn from(r: AsymmetricRule) -> Self {
        Self::Asymmetric(r)
    }
}

impl LatticeRule {
    pub fn step_distribution(&self) -> StepPmf {
        match *self {
            Self::ThreeState(r) => StepPmf {
                down: r.alpha,
                stay: r.k,
                up: r.beta,
            },
            Self::Symmetric(r) => {
                let g = r.gamma();
                StepPmf {
                    down: g,
                    stay: r.k,
                    up: g,
                }
            }
            Self::Asymmetric(r) => StepPmf {
                down: 0.5 * (1.0 + r.k),
                stay: 0.0,
                up: 0.5 * (1.0 - r.k),
            },
        }
    }
}

/// Probability mass over a contiguous run of cells.
///
/// `masses[j]` sits at position `(j - origin_index) * cell_width`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeState {
    pub origin_index: i64,
    pub cell_width: f64,
    pub masses: Vec<f64>,
    pub time_step: u64,
}

impl LatticeState {
    /// Unit mass at position zero.
    pub fn delta(cell_width: f64) -> Result<Self> {
        if !(cell_width > 0.0 && cell_width.is_finite()) {
            return Err(Error::Domain(format!("cell width {cell_width} must be positive")));
        }
        Ok(Self {
            origin_index: 0,
            cell_width,
            masses: vec![1.0],
            time_step: 0,
        })
    }

    pub fn position(&self, j: usize) -> f64 {
        (j as i64 - self.origin_index) as f64 * self.cell_width
    }

    pub fn positions(&self) -> impl Iterator<Item = f64> + Clone + '_ {
        (0..self.masses.len()).map(|j| self.position(j))
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Mass at cell offset `n` from the origin, zero outside the support.
    pub fn mass_at(&self, n: i64) -> f64 {
        let j = n + self.origin_index;
        if j < 0 {
            return 0.0;
        }
        self.masses.get(j as usize).copied().unwrap_or(0.0)
    }

    /// Writes `position,mass` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["position", "mass"])?;
        for (x, m) in self.positions().zip(&self.masses) {
            w.write_record([format_f64(x), format_f64(*m)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Applies `rule` for `steps` steps with the default cell cap.
pub fn evolve(initial: &LatticeState, rule: &LatticeRule, steps: u64) -> Result<LatticeState> {
    evolve_with_cap(initial, rule, steps, DEFAULT_MAX_CELLS)
}

pub fn evolve_with_cap(
    initial: &LatticeState,
    rule: &LatticeRule,
    steps: u64,
    max_cells: usize,
) -> Result<LatticeState> {
    let pmf = rule.step_distribution();
    let grow_low = usize::from(pmf.down > 0.0);
    let grow_high = usize::from(pmf.up > 0.0);
    let final_len = (steps as u128) * (grow_low + grow_high) as u128 + initial.masses.len() as u128;
    if final_len > max_cells as u128 {
        return Err(Error::Resource(format!(
            "{steps} steps need {final_len} cells, cap is {max_cells}"
        )));
    }

    let mut masses = initial.masses.clone();
    masses.reserve(final_len as usize - masses.len());
    let mut next = Vec::with_capacity(final_len as usize);
    for _ in 0..steps {
        next.clear();
        let len = masses.len();
        let old = |j: isize| -> f64 {
            if j < 0 || j as usize >= len {
                0.0
            } else {
                masses[j as usize]
            }
        };
        // New index i corresponds to old index i - grow_low.
        for i in 0..len + grow_low + grow_high {
            let j = i as isize - grow_low as isize;
            next.push(pmf.down * old(j + 1) + pmf.stay * old(j) + pmf.up * old(j - 1));
        }
        std::mem::swap(&mut masses, &mut next);
    }

    Ok(LatticeState {
        origin_index: initial.origin_index + (steps as i64) * grow_low as i64,
        cell_width: initial.cell_width,
        masses,
        time_step: initial.time_step + steps,
    })
}

/// Moments of the state's positions. `count` is the number of cells.
pub fn lattice_moments(state: &LatticeState) -> MomentSummary {
    let points = state.positions().zip(state.masses.iter().copied());
    MomentSummary::from_weighted(points, state.masses.len())
}

/// Monte Carlo paths of the walk. Path `i` uses generator stream `i`, so the
/// output is independent of thread scheduling.
pub fn walk_paths(
    rule: &LatticeRule,
    steps: usize,
    n_paths: usize,
    x0: f64,
    dx: f64,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if n_paths == 0 {
        return Err(Error::Domain("need at least one path".into()));
    }
    if !(dx > 0.0) {
        return Err(Error::Domain(format!("cell width {dx} must be positive")));
    }
    let pmf = rule.step_distribution();
    Ok((0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let mut path = Vec::with_capacity(steps + 1);
            let mut n: i64 = 0;
            path.push(x0);
            for _ in 0..steps {
                n += sample_step(&pmf, &mut rng);
                path.push(x0 + n as f64 * dx);
            }
            path
        })
        .collect())
}

fn sample_step<R: Rng>(pmf: &StepPmf, rng: &mut R) -> i64 {
    let u: f64 = rng.random();
    if u < pmf.down {
        -1
    } else if u < pmf.down + pmf.stay {
        0
    } else {
        1
    }
}

/// Cell size and time step tying a lattice to its continuum limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuumScaling {
    pub dx: f64,
    pub dt: f64,
}

impl Default for ContinuumScaling {
    fn default() -> Self {
        Self { dx: 1.0, dt: 1.0 }
    }
}

impl ContinuumScaling {
    pub fn new(dx: f64, dt: f64) -> Result<Self> {
        if !(dx > 0.0 && dt > 0.0) {
            return Err(Error::Domain(format!("dx = {dx} and dt = {dt} must be positive")));
        }
        Ok(Self { dx, dt })
    }

    /// `dx / dt`.
    pub fn k1(&self) -> f64 {
        self.dx / self.dt
    }

    /// `dx^2 / dt`.
    pub fn k2_grid(&self) -> f64 {
        self.dx * self.dx / self.dt
    }

    /// Drift and diffusion whose Gaussian has the walk's mean and variance
    /// after `n` steps at `t = n * dt`: `D = (dx/dt)(beta - alpha)` and
    /// `V = (dx^2 / 2dt)(alpha + beta)`.
    pub fn advection_diffusion(&self, rule: &ThreeStateRule) -> AdvectionDiffusionParams {
        AdvectionDiffusionParams {
            drift: self.k1() * (rule.beta - rule.alpha),
            diffusion: 0.5 * self.k2_grid() * (rule.alpha + rule.beta),
        }
    }

    /// `t = n * dt`.
    pub fn time(&self, steps: u64) -> f64 {
        steps as f64 * self.dt
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym(k: f64) -> LatticeRule {
        SymmetricRetentionRule::new(k).unwrap().into()
    }

    #[test]
    fn step_distribution_examples() {
        let p = sym(1.0).step_distribution();
        assert_eq!((p.down, p.stay, p.up), (0.0, 1.0, 0.0));
        let p = sym(0.0).step_distribution();
        assert_eq!((p.down, p.stay, p.up), (0.5, 0.0, 0.5));
        let r: LatticeRule = ThreeStateRule::new(0.2, 0.5, 0.3).unwrap().into();
        let p = r.step_distribution();
        assert_eq!((p.down, p.stay, p.up), (0.2, 0.5, 0.3));
        let r: LatticeRule = AsymmetricRule::new(0.5).unwrap().into();
        let p = r.step_distribution();
        assert_eq!((p.down, p.stay, p.up), (0.75, 0.0, 0.25));
    }

    #[test]
    fn rule_validation() {
        assert!(ThreeStateRule::new(0.2, 0.5, 0.31).is_err());
        assert!(ThreeStateRule::new(-0.1, 0.6, 0.5).is_err());
        assert!(SymmetricRetentionRule::new(1.1).is_err());
        assert!(AsymmetricRule::new(1.0).is_err());
        assert!(AsymmetricRule::new(-1.0).is_err());
    }

    #[test]
    fn one_and_two_steps() {
        let s0 = LatticeState::delta(1.0).unwrap();
        let s1 = evolve(&s0, &sym(0.4), 1).unwrap();
        assert_eq!(s1.masses, vec![0.3, 0.4, 0.3]);
        assert_eq!(s1.origin_index, 1);

        let s2 = evolve(&s0, &sym(0.4), 2).unwrap();
        let expected = [(-2, 0.09), (-1, 0.24), (0, 0.34), (1, 0.24), (2, 0.09)];
        for (n, m) in expected {
            assert!((s2.mass_at(n) - m).abs() < 1e-15, "n = {n}");
        }
        assert!((s2.total_mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn full_retention_is_stationary() {
        let s = evolve(&LatticeState::delta(0.5).unwrap(), &sym(0.4), 3).unwrap();
        let frozen = evolve(&s, &sym(1.0), 50).unwrap();
        assert_eq!(frozen.masses, s.masses);
        assert_eq!(frozen.origin_index, s.origin_index);
        assert_eq!(frozen.time_step, s.time_step + 50);
    }

    #[test]
    fn delta_moments() {
        let m = lattice_moments(&LatticeState::delta(1.0).unwrap());
        assert_eq!(m.mean, 0.0);
        assert_eq!(m.variance, 0.0);
        assert_eq!(m.excess_kurtosis, None);
    }

    #[test]
    fn variance_after_hundred_steps() {
        let s = evolve(&LatticeState::delta(1.0).unwrap(), &sym(0.4), 100).unwrap();
        let m = lattice_moments(&s);
        assert!(m.mean.abs() < 1e-12);
        assert!((m.variance - 60.0).abs() < 1e-9);
    }

    #[test]
    fn three_state_drift() {
        let rule: LatticeRule = ThreeStateRule::new(0.1, 0.5, 0.4).unwrap().into();
        let s = evolve(&LatticeState::delta(0.5).unwrap(), &rule, 40).unwrap();
        let m = lattice_moments(&s);
        assert!((m.mean - 40.0 * 0.3 * 0.5).abs() < 1e-10);
        assert!((s.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_sided_rule_grows_one_side() {
        let rule: LatticeRule = ThreeStateRule::new(0.0, 0.5, 0.5).unwrap().into();
        let s = evolve(&LatticeState::delta(1.0).unwrap(), &rule, 4).unwrap();
        assert_eq!(s.masses.len(), 5);
        assert_eq!(s.origin_index, 0);
    }

    #[test]
    fn cell_cap() {
        let err = evolve_with_cap(&LatticeState::delta(1.0).unwrap(), &sym(0.5), 100, 50);
        assert!(matches!(err, Err(Error::Resource(_))));
    }

    #[test]
    fn stationary_paths() {
        let paths = walk_paths(&sym(1.0), 20, 8, 3.5, 0.1, 1).unwrap();
        assert!(paths.iter().flatten().all(|&x| x == 3.5));
    }

    #[test]
    fn single_step_frequencies() {
        let rule: LatticeRule = ThreeStateRule::new(0.2, 0.5, 0.3).unwrap().into();
        let paths = walk_paths(&rule, 1, 1_000_000, 0.0, 1.0, 11).unwrap();
        let mut counts = [0usize; 3];
        for p in &paths {
            counts[(p[1] as i64 + 1) as usize] += 1;
        }
        let pmf = rule.step_distribution();
        for (c, p) in counts.iter().zip([pmf.down, pmf.stay, pmf.up]) {
            assert!((*c as f64 / 1e6 - p).abs() < 0.002);
        }
    }

    #[test]
    fn asymmetric_mean_matches_evolve() {
        let rule: LatticeRule = AsymmetricRule::new(0.5).unwrap().into();
        let dx = 0.2;
        let exact = lattice_moments(&evolve(&LatticeState::delta(dx).unwrap(), &rule, 1).unwrap());
        assert!((exact.mean + 0.5 * dx).abs() < 1e-15);
        let paths = walk_paths(&rule, 1, 200_000, 0.0, dx, 5).unwrap();
        let mc = paths.iter().map(|p| p[1]).sum::<f64>() / paths.len() as f64;
        assert!((mc - exact.mean).abs() < 4.0 * dx / (200_000f64).sqrt());
    }

    #[test]
    fn paths_are_deterministic() {
        let a = walk_paths(&sym(0.3), 10, 16, 0.0, 1.0, 3).unwrap();
        let b = walk_paths(&sym(0.3), 10, 16, 0.0, 1.0, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn continuum_mapping() {
        let scaling = ContinuumScaling::new(0.1, 0.01).unwrap();
        assert!((scaling.k1() - 10.0).abs() < 1e-12);
        assert!((scaling.k2_grid() - 1.0).abs() < 1e-12);
        let p = scaling.advection_diffusion(&ThreeStateRule::new(0.1, 0.6, 0.3).unwrap());
        assert!((p.drift - 2.0).abs() < 1e-12);
        assert!((p.diffusion - 0.2).abs() < 1e-12);
    }

    #[test]
    fn csv_output() {
        let s = evolve(&LatticeState::delta(1.0).unwrap(), &sym(0.5), 1).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "position,mass\n-1.0,0.25\n0.0,0.5\n1.0,0.25\n"
        );
    }
}
