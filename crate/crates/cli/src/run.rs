//! Executes a [`RunConfig`] and writes its outputs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::json;
use toeplitz_lab::interval_maps::{
    best_permutation, sot_distance, transport_matrix, Composition, TransportMode,
};
use toeplitz_lab::limsup::{
    claim_a_experiment, claim_b_experiment, density_experiment, grid_for_rank,
    schur_property_run, schur_type_projection_check, spectrum_at, symbol_rearrangement,
    szego_experiment, weak_pairing_diagnostics, ExperimentReport,
};
use toeplitz_lab::majorize::{default_tolerance, schur_check};
use toeplitz_lab::numeric::fmt17;
use toeplitz_lab::rearrange::distribution_rule;
use toeplitz_lab::spectra::{lambda_step, toeplitz_spectrum, write_spectrum_csv, IntervalFunction};
use toeplitz_lab::sphere_domain::QuadratureRule;
use toeplitz_lab::toeplitz::assemble;
use toeplitz_lab::{MeasurePreservingMap, Spectrum, StepFunction};

use crate::config::{resolve_symbol, Command, Experiment, Format, RunConfig};
use crate::CliError;

/// Files written and whether every check passed.
#[derive(Debug, Clone, Default)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub pass: bool,
    pub failures: Vec<String>,
}

impl RunOutcome {
    fn record(&mut self, name: String, pass: bool) {
        if !pass {
            self.failures.push(name);
        }
        self.pass = self.pass && pass;
    }
}

/// Points `(i + ½)/256` used for rearrangement output.
const S_GRID: usize = 256;

pub fn default_ranks(command: Command) -> Vec<usize> {
    match command {
        Command::Quantize | Command::Spectrum | Command::Rearrange | Command::Majorize => vec![8],
        Command::ApproxMap => vec![7, 31, 127, 511],
        Command::Experiment(e) => match e {
            Experiment::ClaimA | Experiment::WeakPairing => vec![7, 15, 31, 63],
            Experiment::ClaimB => vec![32],
            Experiment::Schur => vec![2, 4, 8],
            Experiment::Szego => vec![8, 16, 32, 64],
            Experiment::Density => vec![7, 31, 127, 511],
            Experiment::Projection | Experiment::Suite => vec![],
        },
    }
}

fn ranks_for(config: &RunConfig, command: Command) -> Vec<usize> {
    if config.ranks.is_empty() {
        default_ranks(command)
    } else {
        config.ranks.clone()
    }
}

/// Keeps `[A-Za-z0-9._-]`, replacing everything else with `_`.
pub fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect()
}

pub fn rank_tag(ranks: &[usize]) -> String {
    match ranks {
        [] => "all".into(),
        [m] => m.to_string(),
        [first, .., last] => format!("{first}-{last}"),
    }
}

/// `<command>_<subject>_<tag>.<ext>`.
pub fn output_name(command: &str, subject: &str, tag: &str, ext: &str) -> String {
    format!("{}_{}_{}.{ext}", sanitize(command), sanitize(subject), sanitize(tag))
}

/// Writes to a temporary file in the same directory, then renames.
fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, &path)?;
    Ok(path)
}

pub fn run(config: &RunConfig) -> Result<RunOutcome, CliError> {
    let mut out = RunOutcome {
        pass: true,
        ..Default::default()
    };
    match config.command {
        Command::Quantize => quantize(config, &mut out)?,
        Command::Spectrum => spectrum(config, &mut out)?,
        Command::Rearrange => rearrange(config, &mut out)?,
        Command::Majorize => majorize(config, &mut out)?,
        Command::ApproxMap => approx_map(config, &mut out)?,
        Command::Experiment(Experiment::Suite) => {
            for e in [
                Experiment::ClaimA,
                Experiment::ClaimB,
                Experiment::Schur,
                Experiment::Projection,
                Experiment::Szego,
                Experiment::Density,
                Experiment::WeakPairing,
            ] {
                experiment(config, e, &mut out)?;
            }
        }
        Command::Experiment(e) => experiment(config, e, &mut out)?,
    }
    Ok(out)
}

fn emit(config: &RunConfig, out: &mut RunOutcome, name: String, bytes: Vec<u8>) -> Result<(), CliError> {
    let path = write_atomic(&config.output_dir, &name, &bytes)?;
    out.files.push(path);
    Ok(())
}

fn quantize(config: &RunConfig, out: &mut RunOutcome) -> Result<(), CliError> {
    let f = resolve_symbol(&config.symbol)?;
    for m in ranks_for(config, config.command) {
        let rule = QuadratureRule::for_rank(m)?;
        let t = assemble(&f, m, &rule)?;
        let bytes = match config.format {
            Format::Csv => {
                let mut s = String::from("j,k,re,im\n");
                for j in 0..=m {
                    for k in 0..=m {
                        let z = t.entries()[(j, k)];
                        s.push_str(&format!("{j},{k},{},{}\n", fmt17(z.re), fmt17(z.im)));
                    }
                }
                s.into_bytes()
            }
            Format::Json => json_bytes(&t.to_dump()),
        };
        let name = output_name("quantize", &config.symbol, &m.to_string(), config.format.extension());
        emit(config, out, name, bytes)?;
    }
    Ok(())
}

fn spectra(config: &RunConfig) -> Result<Vec<Spectrum>, CliError> {
    let f = resolve_symbol(&config.symbol)?;
    ranks_for(config, config.command)
        .into_iter()
        .map(|m| Ok(spectrum_at(&f, m)?))
        .collect()
}

fn spectrum(config: &RunConfig, out: &mut RunOutcome) -> Result<(), CliError> {
    let ranks = ranks_for(config, config.command);
    let spectra = spectra(config)?;
    let bytes = match config.format {
        Format::Csv => {
            let mut buf = Vec::new();
            write_spectrum_csv(&mut buf, &spectra)?;
            buf
        }
        Format::Json => json_bytes(&spectra),
    };
    let name = output_name("spectrum", &config.symbol, &rank_tag(&ranks), config.format.extension());
    emit(config, out, name, bytes)
}

fn rearrange(config: &RunConfig, out: &mut RunOutcome) -> Result<(), CliError> {
    let f = resolve_symbol(&config.symbol)?;
    let fstar = symbol_rearrangement(&f)?;
    let s: Vec<f64> = (0..S_GRID).map(|i| (i as f64 + 0.5) / S_GRID as f64).collect();
    let fs: Vec<f64> = s.iter().map(|&x| fstar.eval(x)).collect();
    for (m, spec) in ranks_for(config, config.command).into_iter().zip(spectra(config)?) {
        let lambda = lambda_step(&spec);
        let ls: Vec<f64> = s.iter().map(|&x| lambda.eval(x)).collect();
        let bytes = match config.format {
            Format::Csv => {
                let mut t = String::from("s,fstar,lambda\n");
                for i in 0..S_GRID {
                    t.push_str(&format!("{},{},{}\n", fmt17(s[i]), fmt17(fs[i]), fmt17(ls[i])));
                }
                t.into_bytes()
            }
            Format::Json => json_bytes(&json!({
                "symbol": config.symbol,
                "m": m,
                "resolution": fstar.resolution(),
                "s": s,
                "fstar": fs,
                "lambda": ls,
            })),
        };
        let name = output_name("rearrange", &config.symbol, &m.to_string(), config.format.extension());
        emit(config, out, name, bytes)?;
    }
    Ok(())
}

fn majorize(config: &RunConfig, out: &mut RunOutcome) -> Result<(), CliError> {
    let f = resolve_symbol(&config.symbol)?;
    for m in ranks_for(config, config.command) {
        let rule = QuadratureRule::for_rank(m)?;
        let t = assemble(&f, m, &rule)?;
        let s = toeplitz_spectrum(&t)?;
        let tol = config.tolerance("majorize").unwrap_or_else(|| default_tolerance(s.values()));
        let cert = schur_check(t.entries(), &s, tol)?;
        let bytes = match config.format {
            Format::Csv => {
                let mut buf = Vec::new();
                cert.write_csv(&mut buf)?;
                buf
            }
            Format::Json => json_bytes(&cert),
        };
        let name = output_name("majorize", &config.symbol, &m.to_string(), config.format.extension());
        emit(config, out, name.clone(), bytes)?;
        out.record(name, cert.holds);
    }
    Ok(())
}

fn approx_map(config: &RunConfig, out: &mut RunOutcome) -> Result<(), CliError> {
    let phi = MeasurePreservingMap::from_name(&config.map)?;
    let ranks = ranks_for(config, config.command);
    let linear = |s: f64| 1.0 - 2.0 * s;
    let cosine = |s: f64| (std::f64::consts::PI * s).cos();
    let mut rows = Vec::new();
    for &m in &ranks {
        let a = transport_matrix(&phi, m, TransportMode::Auto)?;
        let p = best_permutation(&a);
        let n = grid_for_rank(m);
        let d_lin = sot_distance(&p, &phi, &linear, n);
        let d_cos = sot_distance(&p, &phi, &cosine, n);
        let perm_name = output_name("approx-map", &config.map, &m.to_string(), "perm");
        emit(config, out, perm_name, p.to_text().into_bytes())?;
        rows.push((m, a.overlap(&p), d_lin, d_cos, a.marginal_deviation(), p));
    }
    let bytes = match config.format {
        Format::Csv => {
            let mut s = String::from("m,overlap,sot_linear,sot_cosine,marginal_deviation\n");
            for (m, o, l, c, d, _) in &rows {
                s.push_str(&format!("{m},{},{},{},{}\n", fmt17(*o), fmt17(*l), fmt17(*c), fmt17(*d)));
            }
            s.into_bytes()
        }
        Format::Json => json_bytes(
            &rows
                .iter()
                .map(|(m, o, l, c, d, p)| {
                    json!({
                        "m": m,
                        "overlap": o,
                        "sot_linear": l,
                        "sot_cosine": c,
                        "marginal_deviation": d,
                        "sigma": p.sigma(),
                    })
                })
                .collect::<Vec<_>>(),
        ),
    };
    let name = output_name("approx-map", &config.map, &rank_tag(&ranks), config.format.extension());
    emit(config, out, name, bytes)
}

fn experiment(config: &RunConfig, e: Experiment, out: &mut RunOutcome) -> Result<(), CliError> {
    let command = Command::Experiment(e);
    let ranks = ranks_for(config, command);
    let f = resolve_symbol(&config.symbol)?;
    let phi = MeasurePreservingMap::from_name(&config.map)?;
    let mut subject = config.symbol.clone();
    let mut report = match e {
        Experiment::ClaimA => {
            let fstar = symbol_rearrangement(&f)?;
            claim_a_experiment(&f, &phi, &ranks, &fstar)?
        }
        Experiment::ClaimB => {
            let fstar = symbol_rearrangement(&f)?;
            let m = *ranks.last().expect("ranks non-empty");
            claim_b_experiment(&f, m, config.samples, config.seed, &fstar)?
        }
        Experiment::Schur => {
            let tol = config.tolerance("schur").unwrap_or(1e-10);
            let mut merged = ExperimentReport::new("schur", config.seed, &config.symbol, ranks.clone());
            for &m in &ranks {
                merged.rows.extend(schur_property_run(&f, m, config.trials, config.seed, tol)?.rows);
            }
            merged
        }
        Experiment::Projection => {
            let grid: Vec<f64> = (1..=S_GRID).map(|i| i as f64 / S_GRID as f64).collect();
            let tol = config.tolerance("projection").unwrap_or(1e-6);
            let total = config.tolerance("projection_total").unwrap_or(1e-8);
            schur_type_projection_check(&f, &distribution_rule(), &grid, tol, total)?
        }
        Experiment::Szego => szego_experiment(&f, &ranks)?,
        Experiment::Density => {
            subject = config.map.clone();
            density_experiment(&phi, &ranks)?
        }
        Experiment::WeakPairing => {
            let fstar = symbol_rearrangement(&f)?;
            let mut seq = Vec::new();
            for &m in &ranks {
                let lambda = lambda_step(&spectrum_at(&f, m)?);
                let sigma = best_permutation(&transport_matrix(&phi, m, TransportMode::Auto)?);
                seq.push(toeplitz_lab::interval_maps::compose_step(&lambda, &sigma)?);
            }
            let dictionary = vec![
                ("one".to_string(), StepFunction::constant(1.0, 0)),
                ("left_half".to_string(), StepFunction::new(vec![1.0, 0.0])?),
                ("first_quarter".to_string(), StepFunction::new(vec![1.0, 0.0, 0.0, 0.0])?),
            ];
            let target = Composition { g: &fstar, map: &phi };
            weak_pairing_diagnostics(&seq, &target, &dictionary)
        }
        Experiment::Suite => unreachable!("suite expands to its members"),
    };
    report.metadata.seed = config.seed;
    report.metadata.symbol = subject.clone();
    if report.metadata.ranks.is_empty() {
        report.metadata.ranks = ranks.clone();
    }
    let bytes = match config.format {
        Format::Csv => {
            let mut buf = Vec::new();
            report.write_csv(&mut buf)?;
            buf
        }
        Format::Json => report.to_json().into_bytes(),
    };
    let tag = if e == Experiment::Projection { "grid256".to_string() } else { rank_tag(&ranks) };
    let name = output_name(&command.name(), &subject, &tag, config.format.extension());
    emit(config, out, name.clone(), bytes)?;
    out.record(name, report.all_pass());
    Ok(())
}

fn json_bytes<T: serde::Serialize + ?Sized>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s.into_bytes()
}
