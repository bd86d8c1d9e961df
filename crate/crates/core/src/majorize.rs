//! Majorization `y ≺ x` with partial-sum certificates, permutohedron
//! membership, the Horn construction and certified hull sampling.

use std::io::{self, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{fmt17, lcm, prefix_sums};
use crate::rearrange::Rearrangement;
use crate::spectra::{Spectrum, StepFunction};

/// Cap on the common refinement used by [`step_majorizes`].
pub const MAX_REFINEMENT: usize = 1_000_000;

/// Partial-sum witness for `y ≺ x`.
///
/// `slacks[k] = Σ_{i≤k} x*_i − Σ_{i≤k} y*_i`; the last slack is `Σx − Σy`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MajorizationCertificate {
    pub slacks: Vec<f64>,
    pub total_residual: f64,
    pub holds: bool,
    pub tolerance: f64,
}

impl MajorizationCertificate {
    fn from_sorted(xs: &[f64], ys: &[f64], scale: f64, tol: f64) -> Self {
        let px = prefix_sums(xs);
        let py = prefix_sums(ys);
        let slacks: Vec<f64> = px.iter().zip(&py).map(|(a, b)| (a - b) * scale).collect();
        let total_residual = slacks.last().copied().unwrap_or(0.0).abs();
        let min = slacks.iter().copied().fold(f64::INFINITY, f64::min);
        Self {
            holds: min >= -tol && total_residual <= tol,
            slacks,
            total_residual,
            tolerance: tol,
        }
    }

    pub fn min_slack(&self) -> f64 {
        self.slacks.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `max(−min slack, total residual, 0)`: how far the certificate is from
    /// holding with zero tolerance.
    pub fn violation(&self) -> f64 {
        (-self.min_slack()).max(self.total_residual).max(0.0)
    }

    /// First prefix whose slack is below `−tolerance`.
    pub fn first_violation(&self) -> Option<usize> {
        self.slacks.iter().position(|&s| s < -self.tolerance)
    }

    /// `prefix,slack` rows followed by a `holds,<bool>` footer.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "prefix,slack")?;
        for (k, s) in self.slacks.iter().enumerate() {
            writeln!(w, "{k},{}", fmt17(*s))?;
        }
        writeln!(w, "holds,{}", self.holds)
    }
}

/// `1e-9 · (1 + max |x|)`.
pub fn default_tolerance(x: &[f64]) -> f64 {
    1e-9 * (1.0 + x.iter().map(|v| v.abs()).fold(0.0, f64::max))
}

fn sorted_desc(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Certificate for `y ≺ x`.
pub fn majorizes(x: &[f64], y: &[f64], tol: f64) -> Result<MajorizationCertificate> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::argument(format!(
            "majorization needs equal non-empty lengths, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(MajorizationCertificate::from_sorted(&sorted_desc(x), &sorted_desc(y), 1.0, tol))
}

/// `diag(A) ≺ λ(A)`. Rejects diagonals with imaginary part beyond `tol`.
pub fn schur_check(a: &DMatrix<Complex64>, s: &Spectrum, tol: f64) -> Result<MajorizationCertificate> {
    let n = a.nrows();
    if n != s.values().len() {
        return Err(Error::argument("spectrum size does not match matrix"));
    }
    let mut diag = Vec::with_capacity(n);
    for k in 0..n {
        let z = a[(k, k)];
        if z.im.abs() > tol {
            return Err(Error::Input(format!(
                "diagonal entry {k} has imaginary part {:e}; matrix is not Hermitian",
                z.im
            )));
        }
        diag.push(z.re);
    }
    majorizes(s.values(), &diag, tol)
}

/// Membership of `y` in the permutohedron `co(Σ·x)`.
pub fn rado_membership(y: &[f64], x: &[f64], tol: f64) -> Result<bool> {
    Ok(majorizes(x, y, tol)?.holds)
}

/// `max_φ Σ φ(y_i) − Σ φ(x_i)`; non-positive whenever `y ≺ x` and every
/// `φ` is convex.
pub fn convex_function_test(x: &[f64], y: &[f64], phis: &[&dyn Fn(f64) -> f64]) -> f64 {
    phis.iter()
        .map(|phi| {
            let sy: f64 = y.iter().map(|&v| phi(v)).sum();
            let sx: f64 = x.iter().map(|&v| phi(v)).sum();
            sy - sx
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// A real symmetric matrix with spectrum `lambda` and diagonal `d`.
///
/// Starts from `diag(λ)` and repeatedly takes the largest unplaced target:
/// a plane rotation between two free coordinates whose diagonal values
/// bracket it sets one of them to the target exactly, preserving the
/// spectrum. The free diagonal keeps majorizing the remaining targets, so
/// a bracketing pair always exists.
pub fn horn_construct(lambda: &[f64], d: &[f64], tol: f64) -> Result<DMatrix<Complex64>> {
    let cert = majorizes(lambda, d, tol)?;
    if !cert.holds {
        let at = cert
            .first_violation()
            .map_or("the total sum".to_string(), |k| format!("prefix {k}"));
        return Err(Error::Precondition(format!(
            "diagonal is not majorized by the spectrum (violated at {at})"
        )));
    }
    let n = lambda.len();
    let mut a = DMatrix::<f64>::from_fn(n, n, |j, k| if j == k { lambda[j] } else { 0.0 });
    let targets = sorted_desc(d);
    let mut free: Vec<usize> = (0..n).collect();
    let mut placed = Vec::with_capacity(n);

    for &target in targets.iter().take(n.saturating_sub(1)) {
        free.sort_by(|&p, &q| a[(q, q)].total_cmp(&a[(p, p)]).then(p.cmp(&q)));
        let bracket = free
            .windows(2)
            .position(|w| a[(w[0], w[0])] >= target && target >= a[(w[1], w[1])]);
        let p = match bracket {
            Some(i) => {
                let (p, q) = (free[i], free[i + 1]);
                rotate_to_target(&mut a, p, q, target);
                p
            }
            // Rounding pushed the target just outside the free range.
            None if target > a[(free[0], free[0])] => free[0],
            None => *free.last().unwrap(),
        };
        placed.push(p);
        free.retain(|&x| x != p);
    }
    placed.extend(free);

    // The k-th largest target now sits at position placed[k]; permute so
    // that position i carries d[i].
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].total_cmp(&d[i]).then(i.cmp(&j)));
    let mut source = vec![0usize; n];
    for (k, &i) in order.iter().enumerate() {
        source[i] = placed[k];
    }
    Ok(DMatrix::from_fn(n, n, |i, j| Complex64::new(a[(source[i], source[j])], 0.0)))
}

/// Rotates the `(p, q)` plane so that `a[p][p]` becomes `target`; requires
/// `target` between `a[p][p]` and `a[q][q]`.
fn rotate_to_target(a: &mut DMatrix<f64>, p: usize, q: usize, target: f64) {
    let (app, aqq, apq) = (a[(p, p)], a[(q, q)], a[(p, q)]);
    let mid = 0.5 * (app + aqq);
    let half = 0.5 * (app - aqq);
    let radius = half.hypot(apq);
    if radius == 0.0 {
        return;
    }
    // a'_pp = mid + half cos 2θ + apq sin 2θ = mid + radius cos(2θ − φ).
    let phase = apq.atan2(half);
    let two_theta = phase + ((target - mid) / radius).clamp(-1.0, 1.0).acos();
    let (s, c) = (0.5 * two_theta).sin_cos();
    let n = a.nrows();
    for k in 0..n {
        let (x, y) = (a[(k, p)], a[(k, q)]);
        a[(k, p)] = c * x + s * y;
        a[(k, q)] = -s * x + c * y;
    }
    for k in 0..n {
        let (x, y) = (a[(p, k)], a[(q, k)]);
        a[(p, k)] = c * x + s * y;
        a[(q, k)] = -s * x + c * y;
    }
    a[(p, p)] = target;
    let sym = 0.5 * (a[(p, q)] + a[(q, p)]);
    a[(p, q)] = sym;
    a[(q, p)] = sym;
}

/// Random convex combinations of permuted copies of `λ`.
#[derive(Debug, Clone, Copy)]
pub struct HullSampler {
    /// Permutations mixed per sample (capped at `(m+1)!`).
    pub n_perm: usize,
}

impl Default for HullSampler {
    fn default() -> Self {
        Self { n_perm: 8 }
    }
}

fn factorial_capped(n: usize, cap: usize) -> usize {
    let mut acc = 1usize;
    for k in 2..=n {
        acc = acc.saturating_mul(k);
        if acc >= cap {
            return cap;
        }
    }
    acc
}

impl HullSampler {
    /// `n` points of `co(Σ·λ)`, deterministic per seed. Weights are
    /// normalized exponentials (flat Dirichlet).
    pub fn sample(&self, lambda: &[f64], n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = lambda.len();
        let r = factorial_capped(len, self.n_perm.max(1));
        let mut idx: Vec<usize> = (0..len).collect();
        (0..n)
            .map(|_| {
                let mut point = vec![0.0; len];
                let weights: Vec<f64> = (0..r)
                    .map(|_| -(1.0 - rng.random::<f64>()).ln())
                    .collect();
                let total: f64 = weights.iter().sum();
                for w in weights {
                    idx.shuffle(&mut rng);
                    let w = w / total;
                    for (slot, &i) in point.iter_mut().zip(&idx) {
                        *slot += w * lambda[i];
                    }
                }
                point
            })
            .collect()
    }
}

/// [`HullSampler::sample`] with the default number of permutations.
pub fn sample_hull(lambda: &[f64], n: usize, seed: u64) -> Vec<Vec<f64>> {
    HullSampler::default().sample(lambda, n, seed)
}

/// `g ≺ f` for step functions of possibly different ranks.
///
/// Both are refined to `lcm` pieces; slacks are cumulative-integral
/// differences `∫₀^s f* − ∫₀^s g*` at the breakpoints `s = k / lcm`, which
/// suffices because both cumulative integrals are piecewise linear there.
pub fn step_majorizes(f: &StepFunction, g: &StepFunction, tol: f64) -> Result<MajorizationCertificate> {
    let n = lcm(f.pieces(), g.pieces())
        .filter(|&n| n <= MAX_REFINEMENT)
        .ok_or_else(|| {
            Error::argument(format!(
                "common refinement of {} and {} pieces exceeds {MAX_REFINEMENT}",
                f.pieces(),
                g.pieces()
            ))
        })?;
    let fs = sorted_desc(f.refine(n)?.values());
    let gs = sorted_desc(g.refine(n)?.values());
    Ok(MajorizationCertificate::from_sorted(&fs, &gs, 1.0 / n as f64, tol))
}

/// Anything with a computable `∫₀^s f*`.
pub trait CumulativeRearranged {
    fn cumulative_rearranged_at(&self, s: f64) -> f64;
}

impl CumulativeRearranged for Rearrangement {
    fn cumulative_rearranged_at(&self, s: f64) -> f64 {
        self.cumulative(s)
    }
}

impl CumulativeRearranged for StepFunction {
    fn cumulative_rearranged_at(&self, s: f64) -> f64 {
        let sorted = sorted_desc(self.values());
        let n = sorted.len() as f64;
        let s = s.clamp(0.0, 1.0) * n;
        let full = (s.floor() as usize).min(sorted.len());
        let head = prefix_sums(&sorted[..full]).last().copied().unwrap_or(0.0);
        let part = if full < sorted.len() {
            (s - full as f64) * sorted[full]
        } else {
            0.0
        };
        (head + part) / n
    }
}

/// `∫₀^s f*` at each grid point.
pub fn cumulative_rearranged<C: CumulativeRearranged + ?Sized>(f: &C, s_grid: &[f64]) -> Vec<f64> {
    s_grid.iter().map(|&s| f.cumulative_rearranged_at(s)).collect()
}
