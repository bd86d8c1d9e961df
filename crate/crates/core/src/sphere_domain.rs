//! Symbols on the Riemann sphere in the `(z, θ)` chart, the normalized
//! invariant measure `dz dθ / 2π`, product quadrature and θ-averaging.
//!
//! The chart is `w = r e^{iθ}`, `z = r² / (1 + r²) ∈ [0, 1)`. Radial
//! integrals are taken in `ψ` with `z = sin²ψ`, which turns the half-integer
//! powers of `z` and `1 - z` appearing in Toeplitz entries into smooth
//! trigonometric integrands.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, ln_factorial, CompensatedSum};

type Evaluator = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// A real function on CP(1), evaluated at `(z, θ)`.
#[derive(Clone)]
pub struct SphereSymbol {
    name: String,
    evaluator: Arc<Evaluator>,
    sup_bound: f64,
    zonal: bool,
    theta_bandwidth: Option<usize>,
}

impl fmt::Debug for SphereSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SphereSymbol")
            .field("name", &self.name)
            .field("sup_bound", &self.sup_bound)
            .field("zonal", &self.zonal)
            .field("theta_bandwidth", &self.theta_bandwidth)
            .finish()
    }
}

const CHECK_Z: usize = 33;
const CHECK_THETA: usize = 32;

impl SphereSymbol {
    /// Builds a symbol and spot-checks its invariants on a `33 × 32` grid:
    /// finite values, `|f| ≤ sup_bound`, and θ-independence when `zonal`.
    pub fn new<F>(
        name: impl Into<String>,
        sup_bound: f64,
        zonal: bool,
        theta_bandwidth: Option<usize>,
        evaluator: F,
    ) -> Result<Self>
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        let symbol = Self {
            name: name.into(),
            evaluator: Arc::new(evaluator),
            sup_bound,
            zonal,
            theta_bandwidth: if zonal { Some(0) } else { theta_bandwidth },
        };
        symbol.spot_check()?;
        Ok(symbol)
    }

    fn spot_check(&self) -> Result<()> {
        if !(self.sup_bound.is_finite() && self.sup_bound >= 0.0) {
            return Err(Error::argument(format!(
                "symbol `{}`: sup_bound must be finite and non-negative",
                self.name
            )));
        }
        let slack = 1e-12 * (1.0 + self.sup_bound);
        for i in 0..CHECK_Z {
            let z = i as f64 / (CHECK_Z - 1) as f64 * (1.0 - 1e-9);
            let reference = self.eval(z, 0.0);
            for l in 0..CHECK_THETA {
                let theta = 2.0 * PI * l as f64 / CHECK_THETA as f64;
                let v = self.eval(z, theta);
                if !v.is_finite() {
                    return Err(Error::DomainEvaluation {
                        symbol: self.name.clone(),
                        z,
                        theta,
                    });
                }
                if v.abs() > self.sup_bound + slack {
                    return Err(Error::argument(format!(
                        "symbol `{}`: |f({z}, {theta})| = {} exceeds sup_bound {}",
                        self.name,
                        v.abs(),
                        self.sup_bound
                    )));
                }
                if self.zonal && (v - reference).abs() > 1e-12 * (1.0 + reference.abs()) {
                    return Err(Error::argument(format!(
                        "symbol `{}` is declared zonal but depends on theta at z = {z}",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Zonal polynomial `Σ c_k z^k`; the sup bound is `Σ |c_k|`.
    pub fn zonal_polynomial(name: impl Into<String>, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::argument("polynomial coefficients must be finite"));
        }
        let bound = coefficients.iter().map(|c| c.abs()).sum();
        Self::new(name, bound, true, Some(0), move |z, _| {
            coefficients.iter().rev().fold(0.0, |acc, &c| acc * z + c)
        })
    }

    /// `α f + β g`.
    pub fn linear_combination(alpha: f64, f: &Self, beta: f64, g: &Self) -> Result<Self> {
        let (fe, ge) = (f.evaluator.clone(), g.evaluator.clone());
        let bandwidth = match (f.theta_bandwidth, g.theta_bandwidth) {
            (Some(a), Some(b)) => Some(a.max(b)),
            _ => None,
        };
        Self::new(
            format!("{alpha}*{}+{beta}*{}", f.name, g.name),
            alpha.abs() * f.sup_bound + beta.abs() * g.sup_bound,
            f.zonal && g.zonal,
            bandwidth,
            move |z, t| alpha * fe(z, t) + beta * ge(z, t),
        )
    }

    #[inline]
    pub fn eval(&self, z: f64, theta: f64) -> f64 {
        (self.evaluator)(z, theta)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn sup_bound(&self) -> f64 {
        self.sup_bound
    }

    pub fn is_zonal(&self) -> bool {
        self.zonal
    }

    pub fn theta_bandwidth(&self) -> Option<usize> {
        self.theta_bandwidth
    }

    /// Minimum and maximum over an `n_z × n_theta` grid including the poles.
    pub fn sampled_range(&self, n_z: usize, n_theta: usize) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n_z.max(2) {
            let z = i as f64 / (n_z.max(2) - 1) as f64;
            for l in 0..n_theta.max(1) {
                let v = self.eval(z, 2.0 * PI * l as f64 / n_theta.max(1) as f64);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }
}

fn sin_cos_factor(z: f64) -> f64 {
    2.0 * (z * (1.0 - z)).max(0.0).sqrt()
}

/// Coordinate function `x₁ = 2√(z(1−z)) cos θ`.
pub fn x1() -> SphereSymbol {
    SphereSymbol::new("x1", 1.0, false, Some(1), |z, t| sin_cos_factor(z) * t.cos())
        .expect("battery symbol")
}

/// Coordinate function `x₂ = 2√(z(1−z)) sin θ`.
pub fn x2() -> SphereSymbol {
    SphereSymbol::new("x2", 1.0, false, Some(1), |z, t| sin_cos_factor(z) * t.sin())
        .expect("battery symbol")
}

/// Coordinate function `x₃ = 2z − 1`.
pub fn x3() -> SphereSymbol {
    SphereSymbol::new("x3", 1.0, true, Some(0), |z, _| 2.0 * z - 1.0).expect("battery symbol")
}

/// The constant symbol `c`.
pub fn constant(c: f64) -> SphereSymbol {
    SphereSymbol::new(format!("const{c}"), c.abs(), true, Some(0), move |_, _| c)
        .expect("constant symbol")
}

/// The named test battery.
pub fn symbol_battery() -> Vec<SphereSymbol> {
    let build = |name: &str, bound: f64, zonal: bool, bw: usize, f: fn(f64, f64) -> f64| {
        SphereSymbol::new(name, bound, zonal, Some(bw), f).expect("battery symbol")
    };
    vec![
        build("one", 1.0, true, 0, |_, _| 1.0),
        build("x3", 1.0, true, 0, |z, _| 2.0 * z - 1.0),
        build("x1", 1.0, false, 1, |z, t| sin_cos_factor(z) * t.cos()),
        build("x3_sq", 1.0, true, 0, |z, _| (2.0 * z - 1.0).powi(2)),
        build("x1_plus_x3", 2f64.sqrt(), false, 1, |z, t| {
            sin_cos_factor(z) * t.cos() + 2.0 * z - 1.0
        }),
        // x₁x₂ = 2z(1−z) sin 2θ; |x₃|³ + |x₁x₂| ≤ 1 on the unit sphere.
        build("x3_cube_plus_x1x2", 1.0, false, 2, |z, t| {
            (2.0 * z - 1.0).powi(3) + 2.0 * z * (1.0 - z) * (2.0 * t).sin()
        }),
    ]
}

/// Looks up a battery symbol by name.
pub fn battery_symbol(name: &str) -> Option<SphereSymbol> {
    symbol_battery().into_iter().find(|s| s.name() == name)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton iteration on
/// the three-term recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            let pm1 = if n <= 1 { 1.0 } else { p0 };
            dp = nf * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= 1e-16 {
                break;
            }
        }
        // Recompute the derivative at the converged node.
        let (mut p0, mut p1) = (1.0, x);
        for k in 2..=n {
            let kf = k as f64;
            let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
            p0 = p1;
            p1 = p2;
        }
        let pm1 = if n <= 1 { 1.0 } else { p0 };
        if n >= 1 {
            dp = nf * (x * p1 - pm1) / (x * x - 1.0);
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Product rule on the sphere: Gauss–Legendre in `ψ ∈ [0, π/2]` with
/// `z = sin²ψ`, times a uniform trapezoid grid in θ.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    psi_nodes: Vec<f64>,
    psi_weights: Vec<f64>,
    z_nodes: Vec<f64>,
    /// Weights for `dz` on `[0, 1]`: `psi_weight · sin 2ψ`.
    radial_weights: Vec<f64>,
    theta_count: usize,
    exactness_degree: usize,
}

impl QuadratureRule {
    /// Builds the rule and validates it: unit mass within 1e-12 and
    /// `∫ z^a (1−z)^b dz = a! b! / (a+b+1)!` to relative 1e-10 for every
    /// `a + b ≤ exactness_degree`.
    pub fn new(psi_count: usize, theta_count: usize, exactness_degree: usize) -> Result<Self> {
        if psi_count == 0 || theta_count == 0 {
            return Err(Error::Configuration(
                "quadrature needs at least one node in each direction".into(),
            ));
        }
        let (x, w) = gauss_legendre(psi_count);
        let psi_nodes: Vec<f64> = x.iter().map(|&t| PI / 4.0 * (t + 1.0)).collect();
        let psi_weights: Vec<f64> = w.iter().map(|&t| PI / 4.0 * t).collect();
        let z_nodes = psi_nodes.iter().map(|p| p.sin().powi(2)).collect();
        let radial_weights = psi_nodes
            .iter()
            .zip(&psi_weights)
            .map(|(p, w)| w * (2.0 * p).sin())
            .collect();
        let rule = Self {
            psi_nodes,
            psi_weights,
            z_nodes,
            radial_weights,
            theta_count,
            exactness_degree,
        };
        rule.validate()?;
        Ok(rule)
    }

    /// Default rule for rank-`m` assembly: `2m + 16` radial nodes,
    /// `4m + 8` angular nodes, exact through degree `2m`.
    pub fn for_rank(m: usize) -> Result<Self> {
        Self::new(2 * m + 16, 4 * m + 8, 2 * m)
    }

    fn validate(&self) -> Result<()> {
        let mass = self.radial_weights.iter().sum::<f64>();
        if (mass - 1.0).abs() > 1e-12 {
            return Err(Error::Configuration(format!(
                "quadrature mass {mass} differs from 1"
            )));
        }
        if let Some((a, b, rel)) = self.worst_beta_error() {
            if rel > 1e-10 {
                return Err(Error::Configuration(format!(
                    "quadrature misses z^{a}(1-z)^{b} by relative {rel:e}; \
                     increase psi_count beyond {}",
                    self.psi_nodes.len()
                )));
            }
        }
        Ok(())
    }

    /// Largest relative error over the declared beta integrals.
    pub fn worst_beta_error(&self) -> Option<(usize, usize, f64)> {
        let d = self.exactness_degree;
        let ln_s: Vec<f64> = self.psi_nodes.iter().map(|p| p.sin().ln()).collect();
        let ln_c: Vec<f64> = self.psi_nodes.iter().map(|p| p.cos().ln()).collect();
        let mut worst: Option<(usize, usize, f64)> = None;
        for a in 0..=d {
            for b in 0..=(d - a) {
                let ln_exact = ln_factorial(a) + ln_factorial(b) - ln_factorial(a + b + 1);
                let mut acc = CompensatedSum::new();
                for i in 0..self.psi_nodes.len() {
                    // 2 a ln sin + 2 b ln cos, relative to the exact value.
                    let e = 2.0 * a as f64 * ln_s[i] + 2.0 * b as f64 * ln_c[i] - ln_exact;
                    acc.add(self.radial_weights[i] * e.exp());
                }
                let rel = (acc.value() - 1.0).abs();
                if worst.is_none_or(|(_, _, r)| rel > r) {
                    worst = Some((a, b, rel));
                }
            }
        }
        worst
    }

    /// Discrete total mass (1 up to rounding).
    pub fn mass(&self) -> f64 {
        compensated_sum(self.radial_weights.iter().copied())
    }

    pub fn psi_nodes(&self) -> &[f64] {
        &self.psi_nodes
    }

    pub fn psi_weights(&self) -> &[f64] {
        &self.psi_weights
    }

    pub fn z_nodes(&self) -> &[f64] {
        &self.z_nodes
    }

    pub fn radial_weights(&self) -> &[f64] {
        &self.radial_weights
    }

    pub fn theta_count(&self) -> usize {
        self.theta_count
    }

    pub fn psi_count(&self) -> usize {
        self.psi_nodes.len()
    }

    pub fn exactness_degree(&self) -> usize {
        self.exactness_degree
    }

    pub fn theta_nodes(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.theta_count as f64;
        (0..self.theta_count).map(move |l| 2.0 * PI * l as f64 / n)
    }

    /// Evaluates `symbol` on every node, row-major in `(ψ, θ)`, rejecting
    /// non-finite values.
    pub fn sample(&self, symbol: &SphereSymbol) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.psi_count() * self.theta_count);
        for &z in &self.z_nodes {
            for theta in self.theta_nodes() {
                let v = symbol.eval(z, theta);
                if !v.is_finite() {
                    return Err(Error::DomainEvaluation {
                        symbol: symbol.name().to_string(),
                        z,
                        theta,
                    });
                }
                out.push(v);
            }
        }
        Ok(out)
    }
}

/// `∫ f dμ` for the unit-mass measure `dz dθ / 2π`.
pub fn integrate(symbol: &SphereSymbol, rule: &QuadratureRule) -> Result<f64> {
    integrate_with(symbol, rule, |v| v)
}

/// `∫ φ(f) dμ`.
pub fn integrate_with<P: Fn(f64) -> f64>(
    symbol: &SphereSymbol,
    rule: &QuadratureRule,
    phi: P,
) -> Result<f64> {
    let values = rule.sample(symbol)?;
    let nt = rule.theta_count();
    let mut acc = CompensatedSum::new();
    for (i, w) in rule.radial_weights().iter().enumerate() {
        let row: f64 = values[i * nt..(i + 1) * nt].iter().map(|&v| phi(v)).sum();
        acc.add(w * row / nt as f64);
    }
    // Dividing by the discrete mass makes constants integrate exactly.
    Ok(acc.value() / rule.mass())
}

/// The θ-average `P(f)(z) = (1/2π) ∫ f(z, θ) dθ` at each grid point, using
/// the rule's uniform θ nodes.
pub fn project_theta_average(
    symbol: &SphereSymbol,
    rule: &QuadratureRule,
    z_grid: &[f64],
) -> Result<Vec<f64>> {
    if z_grid.is_empty() {
        return Err(Error::argument("z grid is empty"));
    }
    let nt = rule.theta_count() as f64;
    z_grid
        .iter()
        .map(|&z| {
            if !(0.0..=1.0).contains(&z) {
                return Err(Error::argument(format!("z = {z} outside [0, 1)")));
            }
            let mut acc = CompensatedSum::new();
            for theta in rule.theta_nodes() {
                let v = symbol.eval(z, theta);
                if !v.is_finite() {
                    return Err(Error::DomainEvaluation {
                        symbol: symbol.name().to_string(),
                        z,
                        theta,
                    });
                }
                acc.add(v);
            }
            Ok(acc.value() / nt)
        })
        .collect()
}
