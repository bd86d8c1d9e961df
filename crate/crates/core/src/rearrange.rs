//! Distribution functions `F(t) = μ{f < t}`, decreasing rearrangements
//! `f*(s) = inf{t : 1 − F(t) < s}` and the generalized inverse
//! `g(t) = inf{x : F(x) > t}`, for step functions and sampled symbols.
//!
//! The infimum in `f*` is taken over all real `t`; restricting to `t > 0`
//! would clip negative-valued functions.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, fmt17, CompensatedSum};
use crate::spectra::{IntervalFunction, StepFunction};
use crate::sphere_domain::{gauss_legendre, QuadratureRule, SphereSymbol};

/// Default size of the uniform threshold grid.
pub const DEFAULT_THRESHOLDS: usize = 4096;

/// `F` sampled on sorted thresholds.
///
/// An atomic profile describes a finitely-supported measure exactly: its
/// thresholds are the atom values and `F` jumps at each of them. An
/// interpolated profile is piecewise linear between thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionProfile {
    thresholds: Vec<f64>,
    below_measure: Vec<f64>,
    /// Atom masses, present for atomic profiles.
    atom_masses: Option<Vec<f64>>,
    total_mass: f64,
}

impl DistributionProfile {
    /// Exact profile of the discrete measure `Σ w_i δ_{v_i}` (weights are
    /// normalized to unit mass).
    pub fn from_weighted_atoms(values: &[f64], weights: &[f64]) -> Result<Self> {
        if values.is_empty() || values.len() != weights.len() {
            return Err(Error::argument("atoms and weights must be non-empty and equal length"));
        }
        if values.iter().any(|v| !v.is_finite()) || weights.iter().any(|w| w.is_nan() || *w < 0.0) {
            return Err(Error::argument("atoms must be finite with non-negative weights"));
        }
        let total = compensated_sum(weights.iter().copied());
        if total <= 0.0 {
            return Err(Error::argument("atoms carry zero mass"));
        }
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let mut thresholds = Vec::new();
        let mut masses: Vec<CompensatedSum> = Vec::new();
        for i in order {
            if thresholds.last() != Some(&values[i]) {
                thresholds.push(values[i]);
                masses.push(CompensatedSum::new());
            }
            masses.last_mut().unwrap().add(weights[i] / total);
        }
        let masses: Vec<f64> = masses.iter().map(|m| m.value()).collect();
        let mut below = Vec::with_capacity(masses.len());
        let mut acc = CompensatedSum::new();
        for m in &masses {
            below.push(acc.value());
            acc.add(*m);
        }
        Ok(Self {
            thresholds,
            below_measure: below,
            atom_masses: Some(masses),
            total_mass: 1.0,
        })
    }

    /// Exact profile of a step function on `([0,1], Lebesgue)`.
    pub fn from_step(g: &StepFunction) -> Self {
        let w = vec![1.0; g.pieces()];
        Self::from_weighted_atoms(g.values(), &w).expect("step values are finite")
    }

    /// Interpolated profile from explicit samples of `F`; `below_measure`
    /// must be non-decreasing from 0 to 1.
    pub fn from_samples(thresholds: Vec<f64>, below_measure: Vec<f64>) -> Result<Self> {
        if thresholds.len() < 2 || thresholds.len() != below_measure.len() {
            return Err(Error::argument("need at least two thresholds with matching F values"));
        }
        if thresholds.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less)) {
            return Err(Error::argument("thresholds must be strictly increasing"));
        }
        if below_measure.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::argument("F must be non-decreasing"));
        }
        let (first, last) = (below_measure[0], *below_measure.last().unwrap());
        if first.abs() > 1e-12 || (last - 1.0).abs() > 1e-12 {
            return Err(Error::argument("F must run from 0 to 1 across the thresholds"));
        }
        Ok(Self {
            thresholds,
            below_measure,
            atom_masses: None,
            total_mass: 1.0,
        })
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn below_measure(&self) -> &[f64] {
        &self.below_measure
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn is_atomic(&self) -> bool {
        self.atom_masses.is_some()
    }

    /// `μ{f ≤ t_i}` for atomic profiles, `F(t_i)` otherwise.
    fn at_or_below(&self, i: usize) -> f64 {
        match &self.atom_masses {
            Some(m) => {
                if i + 1 < self.thresholds.len() {
                    self.below_measure[i + 1]
                } else {
                    (self.below_measure[i] + m[i]).min(1.0).max(self.below_measure[i])
                }
            }
            None => self.below_measure[i],
        }
    }

    /// `F(t) = μ{f < t}`.
    pub fn distribution(&self, t: f64) -> f64 {
        let idx = self.thresholds.partition_point(|&v| v < t);
        match &self.atom_masses {
            Some(_) => {
                if idx == 0 {
                    0.0
                } else {
                    self.at_or_below(idx - 1)
                }
            }
            None => {
                if idx == 0 {
                    0.0
                } else if idx == self.thresholds.len() {
                    1.0
                } else {
                    let (t0, t1) = (self.thresholds[idx - 1], self.thresholds[idx]);
                    let (f0, f1) = (self.below_measure[idx - 1], self.below_measure[idx]);
                    f0 + (f1 - f0) * (t - t0) / (t1 - t0)
                }
            }
        }
    }

    /// `d(t) = 1 − F(t)`.
    pub fn tail(&self, t: f64) -> f64 {
        self.total_mass - self.distribution(t)
    }

    /// Largest gap between consecutive thresholds.
    pub fn max_spacing(&self) -> f64 {
        self.thresholds
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }
}

/// Smallest `i < n` with `pred(i)`, or `n`; `pred` must be monotone.
fn first_index<P: Fn(usize) -> bool>(n: usize, pred: P) -> usize {
    let (mut lo, mut hi) = (0, n);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

/// `g(t) = inf{x : F(x) > t}` on `(0, 1)`.
#[derive(Debug, Clone)]
pub struct GeneralizedInverse {
    profile: DistributionProfile,
}

impl GeneralizedInverse {
    pub fn eval(&self, t: f64) -> f64 {
        let p = &self.profile;
        let n = p.thresholds.len();
        // First index whose F-value (just above the threshold) exceeds t.
        let i = first_index(n, |i| p.at_or_below(i) > t);
        if p.is_atomic() {
            return p.thresholds[i.min(n - 1)];
        }
        if i == 0 {
            return p.thresholds[0];
        }
        if i >= n {
            return p.thresholds[n - 1];
        }
        let (f0, f1) = (p.below_measure[i - 1], p.below_measure[i]);
        let (t0, t1) = (p.thresholds[i - 1], p.thresholds[i]);
        t0 + (t - f0) / (f1 - f0) * (t1 - t0)
    }
}

impl IntervalFunction for GeneralizedInverse {
    fn eval(&self, s: f64) -> f64 {
        GeneralizedInverse::eval(self, s)
    }
}

pub fn generalized_inverse(profile: &DistributionProfile) -> GeneralizedInverse {
    GeneralizedInverse {
        profile: profile.clone(),
    }
}

#[derive(Clone)]
enum Source {
    Profile(DistributionProfile),
    Closure(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

/// A non-increasing function on `(0, 1)`: the decreasing rearrangement of
/// some source function.
#[derive(Clone)]
pub struct Rearrangement {
    source: Source,
    label: String,
    resolution: f64,
}

impl fmt::Debug for Rearrangement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Rearrangement")
            .field("label", &self.label)
            .field("resolution", &self.resolution)
            .finish()
    }
}

impl Rearrangement {
    pub fn from_profile(profile: DistributionProfile, label: impl Into<String>, resolution: f64) -> Self {
        Self {
            source: Source::Profile(profile),
            label: label.into(),
            resolution,
        }
    }

    /// Exact rearrangement of a step function.
    pub fn of_step(g: &StepFunction) -> Self {
        Self::from_profile(DistributionProfile::from_step(g), "step", 0.0)
    }

    /// A rearrangement known in closed form. The caller guarantees it is
    /// non-increasing.
    pub fn from_fn<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            source: Source::Closure(Arc::new(f)),
            label: label.into(),
            resolution: 0.0,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Pointwise accuracy estimate (0 for exact rearrangements).
    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn profile(&self) -> Option<&DistributionProfile> {
        match &self.source {
            Source::Profile(p) => Some(p),
            Source::Closure(_) => None,
        }
    }

    /// `f*(s) = inf{t : d(t) < s}`.
    pub fn eval(&self, s: f64) -> f64 {
        match &self.source {
            Source::Closure(f) => f(s),
            Source::Profile(p) => {
                let n = p.thresholds.len();
                let tail = |i: usize| p.total_mass - p.at_or_below(i);
                let i = first_index(n, |i| tail(i) < s);
                if p.is_atomic() {
                    return p.thresholds[i.min(n - 1)];
                }
                if i == 0 {
                    return p.thresholds[0];
                }
                if i >= n {
                    return p.thresholds[n - 1];
                }
                let (d0, d1) = (tail(i - 1), tail(i));
                let (t0, t1) = (p.thresholds[i - 1], p.thresholds[i]);
                t0 + (d0 - s) / (d0 - d1) * (t1 - t0)
            }
        }
    }

    /// `∫₀^s f*`. Exact for profiles; 16-point Gauss–Legendre on 64 panels
    /// for closed forms.
    pub fn cumulative(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, 1.0);
        match &self.source {
            Source::Closure(f) => {
                let (x, w) = gauss_legendre(16);
                let panels = 64;
                let h = s / panels as f64;
                let mut acc = CompensatedSum::new();
                for p in 0..panels {
                    let a = p as f64 * h;
                    for (xi, wi) in x.iter().zip(&w) {
                        acc.add(0.5 * h * wi * f(a + 0.5 * h * (xi + 1.0)));
                    }
                }
                acc.value()
            }
            Source::Profile(p) => {
                // f* is described by knots (d(t_i), t_i) with d decreasing in i.
                // Walk from the top value down, accumulating mass × value.
                let n = p.thresholds.len();
                let mut acc = CompensatedSum::new();
                let mut covered = 0.0;
                if let Some(masses) = &p.atom_masses {
                    for i in (0..n).rev() {
                        let take = masses[i].min(s - covered);
                        if take <= 0.0 {
                            break;
                        }
                        acc.add(take * p.thresholds[i]);
                        covered += take;
                    }
                    return acc.value();
                }
                for i in (1..n).rev() {
                    let (d_hi, d_lo) = (p.total_mass - p.below_measure[i], p.total_mass - p.below_measure[i - 1]);
                    let width = d_lo - d_hi;
                    if width <= 0.0 {
                        continue;
                    }
                    let (t_hi, t_lo) = (p.thresholds[i], p.thresholds[i - 1]);
                    let take = width.min(s - covered);
                    if take <= 0.0 {
                        break;
                    }
                    // Linear from t_hi at d_hi to t_lo at d_lo.
                    let end = t_hi + (t_lo - t_hi) * take / width;
                    acc.add(0.5 * take * (t_hi + end));
                    covered += take;
                }
                acc.value()
            }
        }
    }
}

impl IntervalFunction for Rearrangement {
    fn eval(&self, s: f64) -> f64 {
        Rearrangement::eval(self, s)
    }
}

/// Values sorted non-increasing; exact.
pub fn rearrange_step(g: &StepFunction) -> StepFunction {
    let mut v = g.values().to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    StepFunction::new(v).expect("non-empty")
}

/// Rule used for symbol rearrangements unless the caller supplies one.
pub fn distribution_rule() -> QuadratureRule {
    QuadratureRule::new(4096, 256, 32).expect("distribution rule is valid")
}

/// Decreasing rearrangement of a symbol under `dz dθ / 2π`.
///
/// `F` is sampled on `n_thresholds` uniform thresholds spanning
/// `[−sup, sup]` (plus one guard cell on each side) by quadrature of the
/// indicator `f < t` smoothed linearly over one threshold cell, then
/// inverted monotonically.
pub fn rearrange_symbol(
    f: &SphereSymbol,
    rule: &QuadratureRule,
    n_thresholds: usize,
) -> Result<Rearrangement> {
    if n_thresholds < 2 {
        return Err(Error::argument("need at least two thresholds"));
    }
    let sup = f.sup_bound();
    if sup == 0.0 {
        let p = DistributionProfile::from_weighted_atoms(&[0.0], &[1.0])?;
        return Ok(Rearrangement::from_profile(p, f.name(), 0.0));
    }
    let samples = rule.sample(f)?;
    let nt = rule.theta_count();
    let mass = rule.mass();
    let weights: Vec<f64> = rule
        .radial_weights()
        .iter()
        .flat_map(|&w| std::iter::repeat_n(w / (nt as f64 * mass), nt))
        .collect();

    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi - lo <= 1e-14 * (1.0 + lo.abs().max(hi.abs())) {
        // Constant symbol: a single atom, no smoothing.
        let p = DistributionProfile::from_weighted_atoms(&[lo], &[1.0])?;
        return Ok(Rearrangement::from_profile(p, f.name(), 0.0));
    }

    let h = 2.0 * sup / (n_thresholds - 1) as f64;
    let total = n_thresholds + 2;
    let t0 = -sup - h;
    let thresholds: Vec<f64> = (0..total).map(|i| t0 + i as f64 * h).collect();

    // Each atom contributes w · clamp((t − v)/h + ½, 0, 1), a difference of
    // two hinges (t − c)₊ / h; accumulate hinge slopes and offsets per bin.
    let mut slope = vec![0.0; total + 1];
    let mut offset = vec![0.0; total + 1];
    let mut add_hinge = |c: f64, coef: f64| {
        let j = (((c - t0) / h).floor() + 1.0).clamp(0.0, total as f64) as usize;
        // Ensure t_j > c despite rounding.
        let j = (j.saturating_sub(1)..=j.min(total))
            .find(|&j| j >= total || thresholds[j] > c)
            .unwrap_or(total);
        slope[j] += coef;
        offset[j] += coef * c;
    };
    for (v, w) in samples.iter().zip(&weights) {
        add_hinge(v - 0.5 * h, w / h);
        add_hinge(v + 0.5 * h, -w / h);
    }
    let mut below = Vec::with_capacity(total);
    let (mut a, mut b) = (CompensatedSum::new(), CompensatedSum::new());
    let mut running: f64 = 0.0;
    for i in 0..total {
        a.add(slope[i]);
        b.add(offset[i]);
        let v = (a.value() * thresholds[i] - b.value()).clamp(0.0, 1.0);
        running = running.max(v);
        below.push(running);
    }
    below[0] = 0.0;
    *below.last_mut().unwrap() = 1.0;

    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    let max_gap = sorted.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);

    let profile = DistributionProfile::from_samples(thresholds, below)?;
    Ok(Rearrangement::from_profile(profile, f.name(), h + max_gap))
}

/// Source for Skorokhod-identity checks.
pub enum SkorokhodSource<'a> {
    Symbol {
        symbol: &'a SphereSymbol,
        rule: &'a QuadratureRule,
        n_thresholds: usize,
    },
    Step(&'a StepFunction),
}

/// `sup |g(1−t) − f*(t)|` over `grid`, skipping points within one grid
/// cell of a jump of `f*`.
pub fn check_skorokhod_identity(source: SkorokhodSource<'_>, grid: &[f64]) -> Result<f64> {
    let fstar = match source {
        SkorokhodSource::Symbol {
            symbol,
            rule,
            n_thresholds,
        } => rearrange_symbol(symbol, rule, n_thresholds)?,
        SkorokhodSource::Step(g) => Rearrangement::of_step(g),
    };
    let profile = fstar.profile().expect("profile-backed").clone();
    let inverse = generalized_inverse(&profile);
    let cell = grid
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(0.0, f64::max);
    // Jumps of f* sit at the tail masses where consecutive thresholds share
    // the same d value (atoms, or flat stretches of F).
    let mut jumps = Vec::new();
    let n = profile.thresholds.len();
    for i in 0..n {
        let d = profile.total_mass - profile.at_or_below(i);
        if profile.is_atomic() || (i + 1 < n && profile.below_measure[i + 1] == profile.below_measure[i]) {
            jumps.push(d);
        }
    }
    jumps.sort_by(f64::total_cmp);
    let mut worst = 0.0f64;
    for &t in grid {
        if !(0.0 < t && t < 1.0) {
            continue;
        }
        let k = jumps.partition_point(|&j| j < t);
        let near = [k.checked_sub(1), Some(k)]
            .into_iter()
            .flatten()
            .filter_map(|k| jumps.get(k))
            .any(|&j| (j - t).abs() <= cell);
        if near {
            continue;
        }
        worst = worst.max((inverse.eval(1.0 - t) - fstar.eval(t)).abs());
    }
    Ok(worst)
}

/// Writes `s,fstar` rows.
pub fn write_rearrangement_csv<W: Write>(mut w: W, f: &Rearrangement, s_grid: &[f64]) -> io::Result<()> {
    writeln!(w, "s,fstar")?;
    for &s in s_grid {
        writeln!(w, "{},{}", fmt17(s), fmt17(f.eval(s)))?;
    }
    Ok(())
}
