//! Finite-rank certificates for the two inclusions between the lim sup of
//! the sets `E_m = p^m(co(Σ_m·λ^m))` and the orbit closure of `f*`.
//!
//! The infinite-dimensional closure equality is not checked. Reports record
//! (A) the three L² errors of the ε/2 scheme and (B) sampled hull membership
//! with an explicit finite-rank slack.

use std::io::{self, BufRead, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval_maps::{
    best_dyadic_approximation, compose_step, l2_distance, sot_distance, sot_grid, Composition,
    MeasurePreservingMap, DEFAULT_SOT_GRID,
};
use crate::majorize::{
    cumulative_rearranged, default_tolerance, majorizes, sample_hull, schur_check, step_majorizes,
    MajorizationCertificate,
};
use crate::numeric::{compensated_sum, fmt17};
use crate::rearrange::{
    distribution_rule, rearrange_symbol, DistributionProfile, Rearrangement, DEFAULT_THRESHOLDS,
};
use crate::spectra::{
    lambda_step, szego_error, toeplitz_spectrum, IntervalFunction, Spectrum,
    StepFunction,
};
use crate::sphere_domain::{QuadratureRule, SphereSymbol};
use crate::toeplitz::assemble;

/// Stated at the top of every report.
pub const REPORT_NOTE: &str = "finite-rank surrogate: measured errors and sampled certificates at \
the listed ranks; no claim about the infinite-dimensional closure";

/// Values below this are treated as exact zeros in trend checks.
pub const NOISE_FLOOR: f64 = 1e-12;

/// A labelled scalar test function.
type NamedFn = (&'static str, fn(f64) -> f64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowKind {
    /// Passes iff `measured ≤ tolerance`.
    Error,
    /// Passes iff the certificate holds; `measured` is its violation.
    Certificate,
    /// Recorded only.
    Info,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    /// `key=value` pairs joined by `;`.
    pub params: String,
    pub kind: RowKind,
    pub measured: f64,
    pub tolerance: Option<f64>,
    pub pass: bool,
}

impl ReportRow {
    pub fn error(label: &str, params: String, measured: f64, tolerance: f64) -> Self {
        Self {
            label: label.to_string(),
            params,
            kind: RowKind::Error,
            measured,
            tolerance: Some(tolerance),
            pass: measured <= tolerance,
        }
    }

    pub fn certificate(label: &str, params: String, cert: &MajorizationCertificate) -> Self {
        Self {
            label: label.to_string(),
            params,
            kind: RowKind::Certificate,
            measured: cert.violation(),
            tolerance: Some(cert.tolerance),
            pass: cert.holds,
        }
    }

    pub fn check(label: &str, params: String, measured: f64, pass: bool) -> Self {
        Self {
            label: label.to_string(),
            params,
            kind: RowKind::Certificate,
            measured,
            tolerance: None,
            pass,
        }
    }

    pub fn info(label: &str, params: String, measured: f64) -> Self {
        Self {
            label: label.to_string(),
            params,
            kind: RowKind::Info,
            measured,
            tolerance: None,
            pass: true,
        }
    }

    /// Value of `key` in `params`.
    pub fn param(&self, key: &str) -> Option<&str> {
        self.params
            .split(';')
            .filter_map(|kv| kv.split_once('='))
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub seed: u64,
    pub symbol: String,
    pub ranks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub note: String,
    pub metadata: ReportMetadata,
    pub rows: Vec<ReportRow>,
}

const CSV_HEADER: &str = "label,params,kind,measured,tolerance,pass";

impl ExperimentReport {
    pub fn new(name: &str, seed: u64, symbol: &str, ranks: Vec<usize>) -> Self {
        Self {
            name: name.to_string(),
            note: REPORT_NOTE.to_string(),
            metadata: ReportMetadata {
                seed,
                symbol: symbol.to_string(),
                ranks,
            },
            rows: Vec::new(),
        }
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn rows_labeled<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a ReportRow> + 'a {
        self.rows.iter().filter(move |r| r.label == label)
    }

    /// Comment lines (`# …`) carrying the note and metadata, then one row
    /// per measurement.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# {}: {}", self.name, self.note)?;
        let ranks: Vec<String> = self.metadata.ranks.iter().map(|m| m.to_string()).collect();
        writeln!(
            w,
            "# seed={};symbol={};ranks={}",
            self.metadata.seed,
            self.metadata.symbol,
            ranks.join(" ")
        )?;
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.rows {
            let kind = match r.kind {
                RowKind::Error => "error",
                RowKind::Certificate => "certificate",
                RowKind::Info => "info",
            };
            writeln!(
                w,
                "{},{},{kind},{},{},{}",
                r.label,
                r.params,
                fmt17(r.measured),
                r.tolerance.map(fmt17).unwrap_or_default(),
                r.pass
            )?;
        }
        Ok(())
    }

    /// Rows of a CSV written by [`ExperimentReport::write_csv`].
    pub fn read_csv_rows<R: BufRead>(r: R) -> Result<Vec<ReportRow>> {
        let mut rows = Vec::new();
        let mut header_seen = false;
        for line in r.lines() {
            let line = line.map_err(|e| Error::Input(e.to_string()))?;
            if line.starts_with('#') || line.is_empty() {
                continue;
            }
            if !header_seen {
                if line != CSV_HEADER {
                    return Err(Error::Input(format!("unexpected header '{line}'")));
                }
                header_seen = true;
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(Error::Input(format!("expected 6 fields in '{line}'")));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::Input(format!("bad number '{s}'")))
            };
            let kind = match f[2] {
                "error" => RowKind::Error,
                "certificate" => RowKind::Certificate,
                "info" => RowKind::Info,
                other => return Err(Error::Input(format!("bad row kind '{other}'"))),
            };
            rows.push(ReportRow {
                label: f[0].to_string(),
                params: f[1].to_string(),
                kind,
                measured: num(f[3])?,
                tolerance: if f[4].is_empty() { None } else { Some(num(f[4])?) },
                pass: f[5]
                    .parse()
                    .map_err(|_| Error::Input(format!("bad pass flag '{}'", f[5])))?,
            });
        }
        Ok(rows)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Input(e.to_string()))
    }
}

/// `Σ a_k χ_{I_k}`.
pub fn embed_pm(a: &[f64]) -> Result<StepFunction> {
    StepFunction::new(a.to_vec())
}

/// `g ∈ E_m`, i.e. `values(g) ≺ λ`.
pub fn em_membership(g: &StepFunction, s: &Spectrum, tol: f64) -> Result<MajorizationCertificate> {
    if g.rank() != s.order() {
        return Err(Error::argument(format!(
            "step function has rank {}, spectrum has order {}",
            g.rank(),
            s.order()
        )));
    }
    majorizes(s.values(), g.values(), tol)
}

/// Values non-increasing up to at most one inversion, with the last value
/// below the first (below half of it if `require_halving`). Values at or
/// below [`NOISE_FLOOR`] count as zero.
pub fn decreasing_trend(values: &[f64], require_halving: bool) -> bool {
    if values.len() < 2 {
        return true;
    }
    let first = values[0];
    let last = values[values.len() - 1];
    if first <= NOISE_FLOOR {
        return values.iter().all(|&v| v <= NOISE_FLOOR);
    }
    let inversions = values
        .windows(2)
        .filter(|w| w[1] > w[0] && w[1] > NOISE_FLOOR)
        .count();
    let end_ok = if require_halving {
        last < 0.5 * first
    } else {
        last < first
    };
    inversions <= 1 && end_ok
}

fn check_ranks(ranks: &[usize]) -> Result<()> {
    if ranks.is_empty() {
        return Err(Error::argument("need at least one rank"));
    }
    if ranks[0] == 0 || ranks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::argument("ranks must be positive and strictly increasing"));
    }
    Ok(())
}

/// Spectrum of `T^m_f` with the default rule for rank `m`.
pub fn spectrum_at(symbol: &SphereSymbol, m: usize) -> Result<Spectrum> {
    let rule = QuadratureRule::for_rank(m)?;
    toeplitz_spectrum(&assemble(symbol, m, &rule)?)
}

/// `f*` of a symbol with the default distribution rule.
pub fn symbol_rearrangement(symbol: &SphereSymbol) -> Result<Rearrangement> {
    rearrange_symbol(symbol, &distribution_rule(), DEFAULT_THRESHOLDS)
}

/// Midpoint grid size for rank `m`: at least `DEFAULT_SOT_GRID` and
/// `64(m+1)`, a multiple of `m + 1`.
pub fn grid_for_rank(m: usize) -> usize {
    sot_grid(DEFAULT_SOT_GRID.max(64 * (m + 1)), &[Some(m + 1)])
}

/// For each rank: `e6 = ‖Λ∘σ̂ − Λ∘φ‖₂`, `e7 = ‖Λ∘φ − f*∘φ‖₂`,
/// `e8 = ‖Λ∘σ̂ − f*∘φ‖₂`, the triangle check `e8 ≤ e6 + e7`, and
/// membership of `Λ∘σ̂` in `E_m`.
pub fn claim_a_experiment(
    symbol: &SphereSymbol,
    phi: &MeasurePreservingMap,
    ranks: &[usize],
    fstar: &Rearrangement,
) -> Result<ExperimentReport> {
    check_ranks(ranks)?;
    let per_rank: Vec<Vec<ReportRow>> = ranks
        .par_iter()
        .map(|&m| -> Result<Vec<ReportRow>> {
            let s = spectrum_at(symbol, m)?;
            let lambda = lambda_step(&s);
            let sigma = best_dyadic_approximation(phi, m)?;
            let n = grid_for_rank(m);
            let moved = compose_step(&lambda, &sigma)?;
            let lam_phi = Composition { g: &lambda, map: phi };
            let fstar_phi = Composition { g: fstar, map: phi };
            let e6 = sot_distance(&sigma, phi, &lambda, n);
            let e7 = l2_distance(&lam_phi, &fstar_phi, n);
            let e8 = l2_distance(&moved, &fstar_phi, n);
            let p = format!("m={m};map={}", phi.name());
            let vertex = em_membership(&moved, &s, default_tolerance(s.values()))?;
            Ok(vec![
                ReportRow::info("eq6", p.clone(), e6),
                ReportRow::info("eq7", p.clone(), e7),
                ReportRow::info("eq8", p.clone(), e8),
                ReportRow::error("triangle", p.clone(), e8 - (e6 + e7), 1e-12),
                ReportRow::certificate("vertex_in_em", p, &vertex),
            ])
        })
        .collect::<Result<_>>()?;
    let mut report = ExperimentReport::new("claim-a", 0, symbol.name(), ranks.to_vec());
    report.rows = per_rank.into_iter().flatten().collect();
    Ok(report)
}

/// `n_samples` hull points `g` of `co(Σ_m·λ)`, each checked for
/// (i) `g ∈ E_m`, (ii) `g ≺ Λ^m` as step functions, and
/// (iii) `∫₀^s g* ≤ ∫₀^s f* + ε_m` on a 256-point grid, where
/// `ε_m = max_s |∫₀^s Λ^m − ∫₀^s f*|`.
pub fn claim_b_experiment(
    symbol: &SphereSymbol,
    m: usize,
    n_samples: usize,
    seed: u64,
    fstar: &Rearrangement,
) -> Result<ExperimentReport> {
    if n_samples == 0 {
        return Err(Error::argument("need at least one sample"));
    }
    let s = spectrum_at(symbol, m)?;
    let lambda = lambda_step(&s);
    let tol = default_tolerance(s.values());
    let grid: Vec<f64> = (1..=256).map(|i| i as f64 / 256.0).collect();
    let c_fstar = cumulative_rearranged(fstar, &grid);
    let c_lambda = cumulative_rearranged(&lambda, &grid);
    let eps = c_lambda
        .iter()
        .zip(&c_fstar)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let mut report = ExperimentReport::new("claim-b", seed, symbol.name(), vec![m]);
    report.rows.push(ReportRow::info("eps_m", format!("m={m}"), eps));
    for (i, point) in sample_hull(s.values(), n_samples, seed).into_iter().enumerate() {
        let g = embed_pm(&point)?;
        let p = format!("m={m};sample={i}");
        report.rows.push(ReportRow::certificate("em_membership", p.clone(), &em_membership(&g, &s, tol)?));
        report.rows.push(ReportRow::certificate("step_majorizes", p.clone(), &step_majorizes(&lambda, &g, tol)?));
        let c_g = cumulative_rearranged(&g, &grid);
        let excess = c_g
            .iter()
            .zip(&c_fstar)
            .map(|(cg, cf)| cg - cf - eps)
            .fold(f64::NEG_INFINITY, f64::max);
        report.rows.push(ReportRow::error("fstar_relaxed", p, excess, tol));
    }
    Ok(report)
}

/// `∫₀^s P(f)* ≤ ∫₀^s f* + tol` on `s_grid`, and equal totals within
/// `total_tol`.
///
/// Both rearrangements are taken from the atoms of `rule`: `f` at every
/// node `(ψ_i, θ_j)` with weight `W_i / n_θ`, and `P(f)` at `ψ_i` with
/// weight `W_i`, so `P(f)` is the exact conditional expectation of `f`.
pub fn schur_type_projection_check(
    symbol: &SphereSymbol,
    rule: &QuadratureRule,
    s_grid: &[f64],
    tol: f64,
    total_tol: f64,
) -> Result<ExperimentReport> {
    if s_grid.is_empty() {
        return Err(Error::argument("empty s grid"));
    }
    let samples = rule.sample(symbol)?;
    let nt = rule.theta_count();
    let mass = rule.mass();
    let radial: Vec<f64> = rule.radial_weights().iter().map(|w| w / mass).collect();
    let atom_weights: Vec<f64> = radial
        .iter()
        .flat_map(|&w| std::iter::repeat_n(w / nt as f64, nt))
        .collect();
    let projected: Vec<f64> = samples
        .chunks(nt)
        .map(|row| compensated_sum(row.iter().copied()) / nt as f64)
        .collect();
    let f_star = Rearrangement::from_profile(
        DistributionProfile::from_weighted_atoms(&samples, &atom_weights)?,
        symbol.name(),
        0.0,
    );
    let p_star = Rearrangement::from_profile(
        DistributionProfile::from_weighted_atoms(&projected, &radial)?,
        format!("P({})", symbol.name()),
        0.0,
    );
    let mut report = ExperimentReport::new("projection", 0, symbol.name(), vec![]);
    let mut worst = f64::NEG_INFINITY;
    for &s in s_grid {
        let excess = p_star.cumulative(s) - f_star.cumulative(s);
        worst = worst.max(excess);
        report.rows.push(ReportRow::error("prefix", format!("s={}", fmt17(s)), excess, tol));
    }
    report.rows.push(ReportRow::info("max_excess", String::new(), worst));
    let total = (p_star.cumulative(1.0) - f_star.cumulative(1.0)).abs();
    report.rows.push(ReportRow::error("total", String::new(), total, total_tol));
    Ok(report)
}

/// `⟨g_n, h⟩ − ⟨target, h⟩` for every `n` and dictionary element `h`.
pub fn weak_pairing_diagnostics<T>(
    g_sequence: &[StepFunction],
    target: &T,
    dictionary: &[(String, StepFunction)],
) -> ExperimentReport
where
    T: IntervalFunction + Sync + ?Sized,
{
    let mut report = ExperimentReport::new(
        "weak-pairing",
        0,
        "",
        g_sequence.iter().map(|g| g.rank()).collect(),
    );
    for (name, h) in dictionary {
        for (i, g) in g_sequence.iter().enumerate() {
            let nodes = sot_grid(DEFAULT_SOT_GRID, &[Some(g.pieces()), Some(h.pieces())]);
            let gh = pairing(g, h, nodes);
            let th = pairing(target, h, nodes);
            report.rows.push(ReportRow::info(
                "pairing_gap",
                format!("n={i};m={};h={name}", g.rank()),
                gh - th,
            ));
        }
    }
    report
}

fn pairing<A: IntervalFunction + ?Sized>(a: &A, h: &StepFunction, nodes: usize) -> f64 {
    let sum = compensated_sum((0..nodes).map(|i| {
        let x = (i as f64 + 0.5) / nodes as f64;
        a.eval(x) * h.eval(x)
    }));
    sum / nodes as f64
}

/// Haar-random unitary: QR of a complex Gaussian matrix with the phases of
/// `R`'s diagonal moved into `Q`.
pub fn haar_unitary<R: Rng>(n: usize, rng: &mut R) -> DMatrix<Complex64> {
    let g = DMatrix::from_fn(n, n, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// `diag(U D U*) ≺ λ` (up to `tol`) for random unitaries `U`, with `D = diag(λ)` and `λ`
/// the spectrum of `T^m_f`.
pub fn schur_property_run(
    symbol: &SphereSymbol,
    m: usize,
    trials: usize,
    seed: u64,
    tol: f64,
) -> Result<ExperimentReport> {
    let s = spectrum_at(symbol, m)?;
    let n = m + 1;
    let d = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            Complex64::new(s.values()[i], 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ExperimentReport::new("schur", seed, symbol.name(), vec![m]);
    let mut worst = f64::INFINITY;
    let mut held = 0usize;
    for t in 0..trials {
        let u = haar_unitary(n, &mut rng);
        let a = &u * &d * u.adjoint();
        let cert = schur_check(&a, &s, tol)?;
        worst = worst.min(cert.min_slack());
        held += usize::from(cert.holds);
        report.rows.push(ReportRow::certificate("diag_majorized", format!("m={m};trial={t}"), &cert));
    }
    report.rows.push(ReportRow::info("held", format!("m={m}"), held as f64));
    report.rows.push(ReportRow::info("min_slack", format!("m={m}"), worst));
    Ok(report)
}

/// Szegő errors for `φ ∈ {t, t², t³}` over `ranks`, with one trend row per
/// `φ` (non-increasing up to one inversion and ending below the start).
pub fn szego_experiment(symbol: &SphereSymbol, ranks: &[usize]) -> Result<ExperimentReport> {
    check_ranks(ranks)?;
    let rule = distribution_rule();
    let spectra: Vec<Spectrum> = ranks
        .par_iter()
        .map(|&m| spectrum_at(symbol, m))
        .collect::<Result<_>>()?;
    let phis: [NamedFn; 3] = [("t", |t| t), ("t2", |t| t * t), ("t3", |t| t * t * t)];
    let mut report = ExperimentReport::new("szego", 0, symbol.name(), ranks.to_vec());
    for (name, phi) in phis {
        let mut errors = Vec::new();
        for (s, &m) in spectra.iter().zip(ranks) {
            let e = szego_error(s, symbol, phi, &rule)?;
            errors.push(e);
            report.rows.push(ReportRow::info("error", format!("m={m};phi={name}"), e));
        }
        let last = *errors.last().expect("ranks non-empty");
        report.rows.push(ReportRow::check(
            "trend",
            format!("phi={name}"),
            last,
            decreasing_trend(&errors, false),
        ));
    }
    Ok(report)
}

/// `‖g∘σ̂_m − g∘φ‖₂` for the assignment approximant at each rank and each
/// test function, with one trend row per function (at most one inversion,
/// final below half the initial value).
pub fn density_experiment(phi: &MeasurePreservingMap, ranks: &[usize]) -> Result<ExperimentReport> {
    check_ranks(ranks)?;
    let perms = ranks
        .par_iter()
        .map(|&m| best_dyadic_approximation(phi, m))
        .collect::<Result<Vec<_>>>()?;
    let dictionary: [NamedFn; 2] = [
        ("linear", |s| 1.0 - 2.0 * s),
        ("cosine", |s| (std::f64::consts::PI * s).cos()),
    ];
    let mut report = ExperimentReport::new("density", 0, phi.name(), ranks.to_vec());
    for (name, g) in dictionary {
        let mut d = Vec::new();
        for (p, &m) in perms.iter().zip(ranks) {
            let e = sot_distance(p, phi, &g, grid_for_rank(m));
            d.push(e);
            report.rows.push(ReportRow::info("sot", format!("m={m};g={name}"), e));
        }
        let last = *d.last().expect("ranks non-empty");
        report.rows.push(ReportRow::check("trend", format!("g={name}"), last, decreasing_trend(&d, true)));
    }
    Ok(report)
}
