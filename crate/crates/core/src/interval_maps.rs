//! Dyadic permutations of `[0, 1)`, measure-preserving maps, transport
//! matrices and strong-operator-topology (L²) diagnostics.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::assignment::max_weight_assignment;
use crate::error::{Error, Result};
use crate::majorize::MAX_REFINEMENT;
use crate::numeric::{compensated_sum, lcm, CompensatedSum};
use crate::spectra::{IntervalFunction, StepFunction};

/// Default number of midpoint nodes for [`sot_distance`].
pub const DEFAULT_SOT_GRID: usize = 1 << 17;

/// Samples per column for Monte Carlo transport matrices; gives per-entry
/// standard error at most `0.5 / sqrt(n) = 1e-3`.
pub const DEFAULT_TRANSPORT_SAMPLES: usize = 250_000;

const HISTOGRAM_BINS: usize = 16;
const HISTOGRAM_POINTS: usize = 100_000;
const HISTOGRAM_DELTA: f64 = 0.005;

/// A map `[0, 1) → [0, 1)`.
pub trait IntervalMap: Sync {
    fn apply(&self, x: f64) -> f64;

    /// Number of uniform pieces on which the map is a translation, if any.
    fn uniform_pieces(&self) -> Option<usize> {
        None
    }
}

/// Bijection `σ` of `{0..m}`, acting on `[0, 1)` by translating
/// `I_k = [k/(m+1), (k+1)/(m+1))` onto `I_σ(k)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DyadicPermutation {
    sigma: Vec<usize>,
}

impl DyadicPermutation {
    pub fn new(sigma: Vec<usize>) -> Result<Self> {
        if sigma.is_empty() {
            return Err(Error::argument("permutation needs at least one entry"));
        }
        let n = sigma.len();
        let mut seen = vec![false; n];
        for &s in &sigma {
            if s >= n || seen[s] {
                return Err(Error::argument(format!(
                    "not a bijection of 0..{}: entry {s}",
                    n - 1
                )));
            }
            seen[s] = true;
        }
        Ok(Self { sigma })
    }

    pub fn identity(rank: usize) -> Self {
        Self {
            sigma: (0..=rank).collect(),
        }
    }

    /// `σ(k) = k + j mod (m+1)`.
    pub fn cyclic_shift(rank: usize, j: usize) -> Self {
        let n = rank + 1;
        Self {
            sigma: (0..n).map(|k| (k + j) % n).collect(),
        }
    }

    pub fn rank(&self) -> usize {
        self.sigma.len() - 1
    }

    pub fn sigma(&self) -> &[usize] {
        &self.sigma
    }

    /// `(self ∘ other).sigma[k] = self.sigma[other.sigma[k]]`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.sigma.len() != other.sigma.len() {
            return Err(Error::argument(format!(
                "rank mismatch: {} vs {}",
                self.rank(),
                other.rank()
            )));
        }
        Ok(Self {
            sigma: other.sigma.iter().map(|&k| self.sigma[k]).collect(),
        })
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.sigma.len()];
        for (k, &s) in self.sigma.iter().enumerate() {
            inv[s] = k;
        }
        Self { sigma: inv }
    }

    /// Whitespace-separated list of `σ(0) … σ(m)`.
    pub fn to_text(&self) -> String {
        let mut s = self
            .sigma
            .iter()
            .map(|k| k.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let sigma = text
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| Error::Input(format!("bad permutation entry '{t}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(sigma).map_err(|e| Error::Input(e.to_string()))
    }
}

impl fmt::Display for DyadicPermutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.to_text().trim_end())
    }
}

/// `x + (σ(k) − k)/(m+1)` with `k = ⌊x(m+1)⌋`.
pub fn apply_dyadic(p: &DyadicPermutation, x: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&x) {
        return Err(Error::argument(format!("x = {x} is outside [0, 1)")));
    }
    Ok(translate(p, x))
}

fn translate(p: &DyadicPermutation, x: f64) -> f64 {
    let n = p.sigma.len();
    let k = ((x * n as f64).floor().max(0.0) as usize).min(n - 1);
    x + (p.sigma[k] as f64 - k as f64) / n as f64
}

impl IntervalMap for DyadicPermutation {
    fn apply(&self, x: f64) -> f64 {
        translate(self, x)
    }

    fn uniform_pieces(&self) -> Option<usize> {
        Some(self.sigma.len())
    }
}

/// `g ∘ σ̂`. Equal ranks give `values[k] = g[σ(k)]`; otherwise both are
/// brought to a common refinement and `σ` permutes blocks.
pub fn compose_step(g: &StepFunction, p: &DyadicPermutation) -> Result<StepFunction> {
    let n = p.sigma.len();
    if g.pieces() == n {
        return StepFunction::new(p.sigma.iter().map(|&s| g.values()[s]).collect());
    }
    let total = lcm(g.pieces(), n)
        .filter(|&l| l <= MAX_REFINEMENT)
        .ok_or_else(|| {
            Error::argument(format!(
                "common refinement of {} and {n} pieces exceeds {MAX_REFINEMENT}",
                g.pieces()
            ))
        })?;
    let fine = g.refine(total)?;
    let block = total / n;
    let values = (0..total)
        .map(|i| fine.values()[p.sigma[i / block] * block + i % block])
        .collect();
    StepFunction::new(values)
}

/// `φ(x) = slope·x + intercept` on `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffinePiece {
    pub start: f64,
    pub end: f64,
    pub slope: f64,
    pub intercept: f64,
}

type Evaluator = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A self-map of `[0, 1)` expected to preserve Lebesgue measure.
#[derive(Clone)]
pub struct MeasurePreservingMap {
    name: String,
    invertible: bool,
    evaluator: Evaluator,
    pieces: Option<Vec<AffinePiece>>,
}

impl fmt::Debug for MeasurePreservingMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MeasurePreservingMap")
            .field("name", &self.name)
            .field("invertible", &self.invertible)
            .field("pieces", &self.pieces)
            .finish()
    }
}

impl MeasurePreservingMap {
    /// Arbitrary map; measure preservation is checked when it is used.
    pub fn new<F>(name: impl Into<String>, invertible: bool, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            invertible,
            evaluator: Arc::new(f),
            pieces: None,
        }
    }

    /// Piecewise-affine map; pieces must cover `[0, 1)` in order.
    pub fn piecewise_affine(
        name: impl Into<String>,
        invertible: bool,
        pieces: Vec<AffinePiece>,
    ) -> Result<Self> {
        let mut edge = 0.0;
        for p in &pieces {
            if p.start != edge || p.end <= p.start || p.slope == 0.0 {
                return Err(Error::argument("affine pieces must tile [0, 1) in order"));
            }
            edge = p.end;
        }
        if edge != 1.0 {
            return Err(Error::argument("affine pieces must end at 1"));
        }
        let table = pieces.clone();
        let evaluator: Evaluator = Arc::new(move |x: f64| {
            let i = table.partition_point(|p| p.end <= x).min(table.len() - 1);
            let p = &table[i];
            p.slope * x + p.intercept
        });
        Ok(Self {
            name: name.into(),
            invertible,
            evaluator,
            pieces: Some(pieces),
        })
    }

    pub fn identity() -> Self {
        let mut map = Self::piecewise_affine(
            "identity",
            true,
            vec![AffinePiece { start: 0.0, end: 1.0, slope: 1.0, intercept: 0.0 }],
        )
        .expect("valid pieces");
        map.evaluator = Arc::new(|x| x);
        map
    }

    /// `x ↦ x + α mod 1`.
    pub fn rotation(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::argument("rotation angle must be finite"));
        }
        let a = alpha.rem_euclid(1.0);
        if a == 0.0 {
            let mut id = Self::identity();
            id.name = format!("rotation:{alpha}");
            return Ok(id);
        }
        let mut map = Self::piecewise_affine(
            format!("rotation:{alpha}"),
            true,
            vec![
                AffinePiece { start: 0.0, end: 1.0 - a, slope: 1.0, intercept: a },
                AffinePiece { start: 1.0 - a, end: 1.0, slope: 1.0, intercept: a - 1.0 },
            ],
        )?;
        map.evaluator = Arc::new(move |x: f64| {
            let y = x + a;
            if y >= 1.0 {
                y - 1.0
            } else {
                y
            }
        });
        Ok(map)
    }

    /// `x ↦ 2x mod 1`.
    pub fn doubling() -> Self {
        Self::piecewise_affine(
            "doubling",
            false,
            vec![
                AffinePiece { start: 0.0, end: 0.5, slope: 2.0, intercept: 0.0 },
                AffinePiece { start: 0.5, end: 1.0, slope: 2.0, intercept: -1.0 },
            ],
        )
        .expect("valid pieces")
    }

    /// Folded baker map on the base interval: `2x` on the left half,
    /// `2 − 2x` on the right half.
    pub fn baker() -> Self {
        Self::piecewise_affine(
            "baker",
            false,
            vec![
                AffinePiece { start: 0.0, end: 0.5, slope: 2.0, intercept: 0.0 },
                AffinePiece { start: 0.5, end: 1.0, slope: -2.0, intercept: 2.0 },
            ],
        )
        .expect("valid pieces")
    }

    /// `identity`, `rotation:<float>`, `doubling` or `baker`.
    pub fn from_name(name: &str) -> Result<Self> {
        match name.trim() {
            "identity" => Ok(Self::identity()),
            "doubling" => Ok(Self::doubling()),
            "baker" => Ok(Self::baker()),
            other => {
                if let Some(arg) = other.strip_prefix("rotation:") {
                    let alpha = parse_angle(arg)?;
                    Self::rotation(alpha)
                } else {
                    Err(Error::argument(format!(
                        "unknown map '{other}' (identity, rotation:<float>, doubling, baker)"
                    )))
                }
            }
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_invertible(&self) -> bool {
        self.invertible
    }

    pub fn pieces(&self) -> Option<&[AffinePiece]> {
        self.pieces.as_deref()
    }

    /// Largest deviation of a 16-bin histogram of the pushforward of `10⁵`
    /// midpoints from `1/16`.
    pub fn histogram_deviation(&self) -> f64 {
        let mut counts = [0usize; HISTOGRAM_BINS];
        for i in 0..HISTOGRAM_POINTS {
            let x = (i as f64 + 0.5) / HISTOGRAM_POINTS as f64;
            let y = self.apply(x);
            if !y.is_finite() {
                return f64::INFINITY;
            }
            let b = ((y * HISTOGRAM_BINS as f64).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1);
            counts[b] += 1;
        }
        counts
            .iter()
            .map(|&c| (c as f64 / HISTOGRAM_POINTS as f64 - 1.0 / HISTOGRAM_BINS as f64).abs())
            .fold(0.0, f64::max)
    }

    pub fn check_measure_preservation(&self) -> Result<()> {
        let dev = self.histogram_deviation();
        if dev > HISTOGRAM_DELTA {
            return Err(Error::Input(format!(
                "map '{}' fails the histogram test: bin deviation {dev:.3e} > {HISTOGRAM_DELTA}",
                self.name
            )));
        }
        Ok(())
    }
}

/// Accepts plain floats and the forms `sqrt2-1` / `sqrt(2)-1`.
fn parse_angle(arg: &str) -> Result<f64> {
    let t = arg.trim();
    if let Ok(v) = t.parse::<f64>() {
        return Ok(v);
    }
    match t.replace(['(', ')'], "").as_str() {
        "sqrt2-1" => Ok(std::f64::consts::SQRT_2 - 1.0),
        _ => Err(Error::argument(format!("bad rotation angle '{arg}'"))),
    }
}

impl IntervalMap for MeasurePreservingMap {
    fn apply(&self, x: f64) -> f64 {
        (self.evaluator)(x)
    }
}

/// Rotation by `√2 − 1`, the doubling map and the baker map.
pub fn map_zoo() -> Vec<MeasurePreservingMap> {
    vec![
        MeasurePreservingMap::rotation(std::f64::consts::SQRT_2 - 1.0).expect("finite angle"),
        MeasurePreservingMap::doubling(),
        MeasurePreservingMap::baker(),
    ]
}

/// `A_jk = (m+1)·|I_k ∩ φ⁻¹(I_j)|`, stored row-major in `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportMatrix {
    rank: usize,
    entries: Vec<f64>,
    sampled: bool,
}

impl TransportMatrix {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn size(&self) -> usize {
        self.rank + 1
    }

    pub fn entry(&self, j: usize, k: usize) -> f64 {
        self.entries[j * self.size() + k]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Whether the entries were estimated by sampling.
    pub fn is_sampled(&self) -> bool {
        self.sampled
    }

    /// Largest deviation of a row or column sum from 1.
    pub fn marginal_deviation(&self) -> f64 {
        let n = self.size();
        let mut worst: f64 = 0.0;
        for j in 0..n {
            let row = compensated_sum((0..n).map(|k| self.entry(j, k)));
            let col = compensated_sum((0..n).map(|k| self.entry(k, j)));
            worst = worst.max((row - 1.0).abs()).max((col - 1.0).abs());
        }
        worst
    }

    /// `Σ_k A_{σ(k),k} / (m+1)`, the fraction of mass `σ̂` sends where `φ` does.
    pub fn overlap(&self, p: &DyadicPermutation) -> f64 {
        let n = self.size();
        compensated_sum((0..n).map(|k| self.entry(p.sigma[k], k))) / n as f64
    }
}

/// How to compute transport matrix entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportMode {
    /// Exact for piecewise-affine maps, sampling otherwise.
    Auto,
    /// Stratified sampling with deterministic per-column streams.
    MonteCarlo { samples_per_column: usize, seed: u64 },
}

pub fn transport_matrix(
    phi: &MeasurePreservingMap,
    m: usize,
    mode: TransportMode,
) -> Result<TransportMatrix> {
    phi.check_measure_preservation()?;
    match (mode, phi.pieces()) {
        (TransportMode::Auto, Some(pieces)) => Ok(analytic_transport(pieces, m)),
        (TransportMode::Auto, None) => Ok(sampled_transport(phi, m, DEFAULT_TRANSPORT_SAMPLES, 0)),
        (TransportMode::MonteCarlo { samples_per_column, seed }, _) => {
            if samples_per_column == 0 {
                return Err(Error::argument("need at least one sample per column"));
            }
            Ok(sampled_transport(phi, m, samples_per_column, seed))
        }
    }
}

fn analytic_transport(pieces: &[AffinePiece], m: usize) -> TransportMatrix {
    let n = m + 1;
    let h = 1.0 / n as f64;
    let nf = n as f64;
    let snap = 1e-12 * h;
    let mut entries = vec![0.0; n * n];
    for k in 0..n {
        let (a, b) = (k as f64 / nf, (k + 1) as f64 / nf);
        for p in pieces {
            let lo = a.max(p.start);
            let hi = b.min(p.end);
            if hi - lo <= snap {
                continue;
            }
            let (y0, y1) = {
                let u = p.slope * lo + p.intercept;
                let v = p.slope * hi + p.intercept;
                (u.min(v), u.max(v))
            };
            let first = ((y0 * nf).floor().max(0.0) as usize).min(n - 1);
            let last = ((y1 * nf).ceil().max(1.0) as usize).min(n);
            for j in first..last {
                let overlap = y1.min((j + 1) as f64 / nf) - y0.max(j as f64 / nf);
                if overlap > snap * p.slope.abs() {
                    entries[j * n + k] += nf * overlap / p.slope.abs();
                }
            }
        }
    }
    TransportMatrix {
        rank: m,
        entries,
        sampled: false,
    }
}

fn sampled_transport(phi: &MeasurePreservingMap, m: usize, samples: usize, seed: u64) -> TransportMatrix {
    let n = m + 1;
    let nf = n as f64;
    let columns: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let mut counts = vec![0usize; n];
            for i in 0..samples {
                let u = (i as f64 + rng.random::<f64>()) / samples as f64;
                let x = ((k as f64 + u) / nf).min(1.0 - f64::EPSILON);
                let y = phi.apply(x);
                let j = ((y * nf).floor().max(0.0) as usize).min(n - 1);
                counts[j] += 1;
            }
            counts.into_iter().map(|c| c as f64 / samples as f64).collect()
        })
        .collect();
    let mut entries = vec![0.0; n * n];
    for (k, col) in columns.iter().enumerate() {
        for (j, &v) in col.iter().enumerate() {
            entries[j * n + k] = v;
        }
    }
    TransportMatrix {
        rank: m,
        entries,
        sampled: true,
    }
}

/// Permutation maximizing `Σ_k A_{σ(k),k}`; ties go to the
/// lexicographically smallest `σ`.
pub fn best_permutation(a: &TransportMatrix) -> DyadicPermutation {
    let n = a.size();
    let weight: Vec<Vec<f64>> = (0..n)
        .map(|k| (0..n).map(|j| a.entry(j, k)).collect())
        .collect();
    let scale = a.entries.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    DyadicPermutation {
        sigma: max_weight_assignment(&weight, 1e-9 * (1.0 + scale)),
    }
}

pub fn best_dyadic_approximation(phi: &MeasurePreservingMap, m: usize) -> Result<DyadicPermutation> {
    Ok(best_permutation(&transport_matrix(phi, m, TransportMode::Auto)?))
}

/// `‖g∘S − g∘T‖₂` by the midpoint rule on at least `grid` nodes, rounded up
/// so that every known uniform breakpoint of `g`, `S`, `T` is a grid edge.
pub fn sot_distance<S, T, G>(s: &S, t: &T, g: &G, grid: usize) -> f64
where
    S: IntervalMap + ?Sized,
    T: IntervalMap + ?Sized,
    G: IntervalFunction + Sync + ?Sized,
{
    let n = sot_grid(grid, &[g.uniform_pieces(), s.uniform_pieces(), t.uniform_pieces()]);
    l2_distance(&Composition { g, map: s }, &Composition { g, map: t }, n)
}

/// `‖a − b‖₂` by the midpoint rule on exactly `nodes` nodes.
pub fn l2_distance<A, B>(a: &A, b: &B, nodes: usize) -> f64
where
    A: IntervalFunction + Sync + ?Sized,
    B: IntervalFunction + Sync + ?Sized,
{
    let n = nodes.max(1);
    let chunk = 4096;
    let partials: Vec<CompensatedSum> = (0..n.div_ceil(chunk))
        .into_par_iter()
        .map(|c| {
            let mut acc = CompensatedSum::default();
            for i in c * chunk..((c + 1) * chunk).min(n) {
                let x = (i as f64 + 0.5) / n as f64;
                let d = a.eval(x) - b.eval(x);
                acc.add(d * d);
            }
            acc
        })
        .collect();
    let total = compensated_sum(partials.iter().map(|p| p.value()));
    (total / n as f64).sqrt()
}

/// `g ∘ map` as an interval function.
pub struct Composition<'a, G: ?Sized, M: ?Sized> {
    pub g: &'a G,
    pub map: &'a M,
}

impl<G, M> IntervalFunction for Composition<'_, G, M>
where
    G: IntervalFunction + ?Sized,
    M: IntervalMap + ?Sized,
{
    fn eval(&self, x: f64) -> f64 {
        self.g.eval(self.map.apply(x))
    }
}

/// Smallest multiple of every known piece count that is at least `grid`.
pub fn sot_grid(grid: usize, pieces: &[Option<usize>]) -> usize {
    let base = pieces
        .iter()
        .flatten()
        .try_fold(1usize, |acc, &p| lcm(acc, p))
        .filter(|&l| l <= MAX_REFINEMENT)
        .unwrap_or(1);
    grid.max(1).div_ceil(base) * base
}
