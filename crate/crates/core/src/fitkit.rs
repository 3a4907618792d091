//! Distribution fitting and Kolmogorov-Smirnov testing for amplitude data.
//!
//! Five envelope families are fitted to a sample of non-negative amplitudes
//! and scored by the one-sample K-S statistic
//!
//! `D = max_i max(i/n − F(x_(i)), F(x_(i)) − (i−1)/n)`
//!
//! over the sorted sample `x_(1) ≤ … ≤ x_(n)`. The fit is accepted at the 5%
//! level when `D < 1.36/√n`.
//!
//! * Gaussian, Nakagami-m and Rician fits start from the method of moments
//!   and take one local compass-search refinement on `D`.
//! * The FTR fit fixes `σ²` from the mean power `E[R²] = 2σ²(1+K)`, scans a
//!   coarse grid over `(K, m, Δ)` and refines the best few cells by
//!   pattern search on `D`.
//! * The α-μ fit matches the moments `E[R^α]`, `E[R^{2α}]` and `E[R]`.
//!
//! Squared-envelope laws that are Gamma mixtures with a common scale
//! (Rician, FTR) are evaluated through the Poisson form
//!
//! `F(y) = 1 − Σ_i e^{−y} y^i/i! · S_i`, `S_i = Σ_{j≥i} c_j`,
//!
//! which only needs the few terms under the Poisson window around `i ≈ y`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::ftr::{self, FtrParams};
use crate::specfun::{erfc, gamma_regularized_lower};

/// Bounds of the FTR search box: `K ∈ [0, 30]`.
pub const FTR_K_RANGE: (f64, f64) = (0.0, 30.0);
/// Bounds of the FTR search box: `m ∈ [0.5, 30]`.
pub const FTR_M_RANGE: (f64, f64) = (0.5, 30.0);
/// Coarse FTR grid in `K`.
pub const FTR_GRID_K: [f64; 9] = [0.0, 1.0, 2.0, 4.0, 7.0, 11.0, 16.0, 22.0, 30.0];
/// Coarse FTR grid in `m`.
pub const FTR_GRID_M: [f64; 7] = [0.5, 1.0, 2.0, 4.0, 8.0, 15.0, 30.0];
/// Coarse FTR grid in `Δ`.
pub const FTR_GRID_DELTA: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
/// Number of best grid cells the FTR pattern search starts from.
pub const FTR_REFINE_STARTS: usize = 3;
/// Remaining mixture mass tolerated when truncating Gamma mixtures.
pub const MIXTURE_TOL: f64 = 1e-10;
/// Phase nodes used for the FTR mixture weights.
pub const FTR_PHASE_NODES: usize = 256;

/// Distribution families supported by the fitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Normal law on the amplitude.
    Gaussian,
    /// Nakagami-m envelope.
    Nakagami,
    /// Rician envelope.
    Rician,
    /// Fluctuating two-ray envelope.
    Ftr,
    /// α-μ envelope.
    AlphaMu,
}

impl Family {
    /// Every family, in report order.
    pub const ALL: [Family; 5] = [
        Family::Ftr,
        Family::Nakagami,
        Family::Rician,
        Family::Gaussian,
        Family::AlphaMu,
    ];

    /// Lower-case name used in reports and on the command line.
    pub fn name(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Nakagami => "nakagami",
            Family::Rician => "rician",
            Family::Ftr => "ftr",
            Family::AlphaMu => "alpha-mu",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| {
                Error::invalid(
                    "family",
                    format!("unknown family `{s}` (expected ftr, nakagami, rician, gaussian or alpha-mu)"),
                )
            })
    }
}

/// A labelled set of amplitude observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    /// Non-negative finite amplitudes.
    pub values: Vec<f64>,
    /// Free-form label carried into reports.
    pub label: String,
}

impl SampleSet {
    /// Validated constructor.
    ///
    /// # Errors
    ///
    /// [`Error::Data`] for an empty set or a negative or non-finite value.
    pub fn new(values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Data("sample set is empty".into()));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::Data(format!(
                "amplitude #{} is {v}; amplitudes must be finite and >= 0",
                i + 1
            )));
        }
        Ok(Self {
            values,
            label: label.into(),
        })
    }

    /// Reads one amplitude per line. A first line that does not parse as a
    /// number is taken as a header; blank lines and lines starting with `#`
    /// are skipped.
    ///
    /// # Errors
    ///
    /// [`Error::Data`] for unreadable input, a line with more than one field,
    /// an unparsable value after the first line, or an invalid amplitude.
    pub fn from_reader<R: Read>(reader: R, label: impl Into<String>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut values = Vec::new();
        let mut first = true;
        for (idx, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Data(format!("CSV read error: {e}")))?;
            let line = rec.position().map_or(idx as u64 + 1, |p| p.line());
            let fields: Vec<&str> = rec.iter().filter(|f| !f.is_empty()).collect();
            if fields.is_empty() {
                continue;
            }
            if fields.len() > 1 {
                return Err(Error::Data(format!(
                    "line {line}: expected one amplitude per line, found {} fields",
                    fields.len()
                )));
            }
            match fields[0].parse::<f64>() {
                Ok(v) => values.push(v),
                Err(_) if first => {}
                Err(_) => {
                    return Err(Error::Data(format!(
                        "line {line}: `{}` is not a number",
                        fields[0]
                    )))
                }
            }
            first = false;
        }
        Self::new(values, label)
    }

    /// Reads a CSV file with [`SampleSet::from_reader`], labelled by its path.
    ///
    /// # Errors
    ///
    /// [`Error::Data`] when the file cannot be opened or parsed.
    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
        Self::from_reader(std::io::BufReader::new(file), path.display().to_string())
    }

    /// Number of observations.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Always false for a validated set.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn sorted(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        v
    }
}

/// One-sample K-S statistic of `values` against `cdf`.
///
/// The input order is irrelevant. An empty slice gives `0`.
pub fn ks_statistic<F: Fn(f64) -> f64>(values: &[f64], cdf: F) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    ks_statistic_sorted(&v, cdf)
}

/// K-S statistic for an already sorted sample.
pub fn ks_statistic_sorted<F: Fn(f64) -> f64>(sorted: &[f64], cdf: F) -> f64 {
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d.clamp(0.0, 1.0)
}

/// Critical value of `D` at the 5% level: `1.36/√n` for `n > 35`, and
/// Stephens' finite-sample form `1.36/(√n + 0.12 + 0.11/√n)` below.
pub fn ks_critical_5pct(n: usize) -> f64 {
    let r = (n.max(1) as f64).sqrt();
    if n > 35 {
        1.36 / r
    } else {
        1.36 / (r + 0.12 + 0.11 / r)
    }
}

/// Squared-envelope law `Σ_j c_j Gamma(j+1, scale)` stored as tail sums.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaMixture {
    /// `S_i = Σ_{j≥i} c_j` with `S_0 = 1`.
    tail: Vec<f64>,
    /// `ln i!`.
    ln_fact: Vec<f64>,
    /// Common Gamma scale.
    scale: f64,
}

impl GammaMixture {
    /// Mixture from unit-mass weights and a common scale.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidParameter`] for empty weights or a non-positive scale.
    pub fn new(weights: &[f64], scale: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("weights", "must be nonempty"));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid("scale", "must be finite and > 0"));
        }
        let total: f64 = weights.iter().sum();
        let mut tail = vec![0.0; weights.len()];
        let mut acc = 0.0;
        for i in (0..weights.len()).rev() {
            acc += weights[i] / total;
            tail[i] = acc;
        }
        let mut ln_fact = Vec::with_capacity(weights.len());
        let mut lf = 0.0;
        for i in 0..weights.len() {
            if i > 0 {
                lf += (i as f64).ln();
            }
            ln_fact.push(lf);
        }
        Ok(Self {
            tail,
            ln_fact,
            scale,
        })
    }

    /// CDF of the squared envelope at `g`.
    pub fn cdf_power(&self, g: f64) -> f64 {
        if !(g > 0.0) {
            return 0.0;
        }
        let y = g / self.scale;
        let n = self.tail.len();
        let half = 9.0 * y.sqrt() + 12.0;
        let lo = (y - half).floor().max(0.0) as usize;
        if lo >= n {
            return 1.0;
        }
        let hi = ((y + half).ceil() as usize).min(n - 1);
        let ln_y = y.ln();
        let mut p = (lo as f64 * ln_y - y - self.ln_fact[lo]).exp();
        let mut acc = 0.0;
        for i in lo..=hi {
            acc += p * self.tail[i];
            p *= y / (i as f64 + 1.0);
        }
        (1.0 - acc).clamp(0.0, 1.0)
    }

    /// CDF of the envelope `R = √γ`.
    pub fn cdf_envelope(&self, r: f64) -> f64 {
        self.cdf_power(r * r)
    }
}

/// Poisson weights `e^{−λ} λ^j / j!` truncated at [`MIXTURE_TOL`].
fn poisson_weights(lambda: f64) -> Vec<f64> {
    if lambda <= 0.0 {
        return vec![1.0];
    }
    let mut w = Vec::new();
    let mut mass = 0.0;
    let ln_l = lambda.ln();
    let mut ln_f = 0.0;
    for j in 0.. {
        if j > 0 {
            ln_f += (j as f64).ln();
        }
        let p = (j as f64 * ln_l - lambda - ln_f).exp();
        w.push(p);
        mass += p;
        if j as f64 > lambda && 1.0 - mass < MIXTURE_TOL {
            break;
        }
    }
    w
}

/// A fitted distribution with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum FittedModel {
    /// `R ~ N(mean, std_dev²)`.
    Gaussian { mean: f64, std_dev: f64 },
    /// `F(r) = P(m, m r²/Ω)`.
    Nakagami { m: f64, omega: f64 },
    /// `R = |ν + X + jY|` with `X, Y ~ N(0, σ²)`.
    Rician { nu: f64, sigma: f64 },
    /// FTR envelope.
    Ftr { params: FtrParams },
    /// `F(r) = P(μ, μ (r/r̂)^α)`.
    AlphaMu { alpha: f64, mu: f64, r_hat: f64 },
}

impl FittedModel {
    /// Family of the model.
    pub fn family(&self) -> Family {
        match self {
            FittedModel::Gaussian { .. } => Family::Gaussian,
            FittedModel::Nakagami { .. } => Family::Nakagami,
            FittedModel::Rician { .. } => Family::Rician,
            FittedModel::Ftr { .. } => Family::Ftr,
            FittedModel::AlphaMu { .. } => Family::AlphaMu,
        }
    }

    /// Named parameter values, in a fixed order.
    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match *self {
            FittedModel::Gaussian { mean, std_dev } => vec![("mean", mean), ("std_dev", std_dev)],
            FittedModel::Nakagami { m, omega } => vec![("m", m), ("omega", omega)],
            FittedModel::Rician { nu, sigma } => vec![("nu", nu), ("sigma", sigma)],
            FittedModel::Ftr { params } => vec![
                ("k", params.k_ratio),
                ("m", params.m),
                ("delta", params.delta),
                ("sigma_sq", params.sigma_sq),
            ],
            FittedModel::AlphaMu { alpha, mu, r_hat } => {
                vec![("alpha", alpha), ("mu", mu), ("r_hat", r_hat)]
            }
        }
    }

    /// Builds the envelope CDF evaluator.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidParameter`] for out-of-range parameters,
    /// [`Error::NonConvergence`] when the FTR mixture cannot be truncated.
    pub fn cdf(&self) -> Result<ModelCdf> {
        Ok(match *self {
            FittedModel::Gaussian { mean, std_dev } => {
                positive("std_dev", std_dev)?;
                ModelCdf::Gaussian { mean, std_dev }
            }
            FittedModel::Nakagami { m, omega } => {
                positive("m", m)?;
                positive("omega", omega)?;
                ModelCdf::Nakagami { m, omega }
            }
            FittedModel::Rician { nu, sigma } => {
                positive("sigma", sigma)?;
                if !(nu >= 0.0 && nu.is_finite()) {
                    return Err(Error::invalid("nu", "must be finite and >= 0"));
                }
                let scale = 2.0 * sigma * sigma;
                ModelCdf::Mixture(GammaMixture::new(&poisson_weights(nu * nu / scale), scale)?)
            }
            FittedModel::Ftr { params } => {
                let w = ftr::phase_averaged_weights(&params, MIXTURE_TOL, FTR_PHASE_NODES)?;
                ModelCdf::Mixture(GammaMixture::new(&w, 2.0 * params.sigma_sq)?)
            }
            FittedModel::AlphaMu { alpha, mu, r_hat } => {
                positive("alpha", alpha)?;
                positive("mu", mu)?;
                positive("r_hat", r_hat)?;
                ModelCdf::AlphaMu { alpha, mu, r_hat }
            }
        })
    }

    /// `n` amplitude draws from a ChaCha stream seeded with `seed`. Gaussian
    /// draws are not truncated at zero.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidParameter`] for out-of-range parameters.
    pub fn sample(&self, seed: u64, n: usize) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bad = |field: &str, e: &dyn fmt::Display| Error::invalid(field, e.to_string());
        Ok(match *self {
            FittedModel::Gaussian { mean, std_dev } => {
                let d = Normal::new(mean, std_dev).map_err(|e| bad("std_dev", &e))?;
                (0..n).map(|_| d.sample(&mut rng)).collect()
            }
            FittedModel::Nakagami { m, omega } => {
                let d = Gamma::new(m, omega / m).map_err(|e| bad("m", &e))?;
                (0..n).map(|_| d.sample(&mut rng).sqrt()).collect()
            }
            FittedModel::Rician { nu, sigma } => {
                let d = Normal::new(0.0, sigma).map_err(|e| bad("sigma", &e))?;
                (0..n)
                    .map(|_| (nu + d.sample(&mut rng)).hypot(d.sample(&mut rng)))
                    .collect()
            }
            FittedModel::Ftr { params } => ftr::sample_envelope(&params, seed, n)?,
            FittedModel::AlphaMu { alpha, mu, r_hat } => {
                positive("alpha", alpha)?;
                let d = Gamma::new(mu, 1.0 / mu).map_err(|e| bad("mu", &e))?;
                (0..n)
                    .map(|_| r_hat * d.sample(&mut rng).powf(1.0 / alpha))
                    .collect()
            }
        })
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(field, "must be finite and > 0"))
    }
}

/// Precomputed envelope CDF of a [`FittedModel`].
#[derive(Debug, Clone, PartialEq)]
pub enum ModelCdf {
    /// `Φ((r − mean)/std_dev)`.
    Gaussian { mean: f64, std_dev: f64 },
    /// `P(m, m r²/Ω)`.
    Nakagami { m: f64, omega: f64 },
    /// Gamma mixture in the squared envelope (Rician, FTR).
    Mixture(GammaMixture),
    /// `P(μ, μ (r/r̂)^α)`.
    AlphaMu { alpha: f64, mu: f64, r_hat: f64 },
}

impl ModelCdf {
    /// CDF at amplitude `r`.
    pub fn eval(&self, r: f64) -> f64 {
        match self {
            ModelCdf::Gaussian { mean, std_dev } => {
                0.5 * erfc(-(r - mean) / (std_dev * std::f64::consts::SQRT_2))
            }
            ModelCdf::Nakagami { m, omega } => {
                if r <= 0.0 {
                    0.0
                } else {
                    gamma_regularized_lower(*m, m * r * r / omega).unwrap_or(f64::NAN)
                }
            }
            ModelCdf::Mixture(mix) => mix.cdf_envelope(r.max(0.0)),
            ModelCdf::AlphaMu { alpha, mu, r_hat } => {
                if r <= 0.0 {
                    0.0
                } else {
                    gamma_regularized_lower(*mu, mu * (r / r_hat).powf(*alpha)).unwrap_or(f64::NAN)
                }
            }
        }
    }
}

/// Outcome of one family fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Label of the fitted sample.
    pub label: String,
    /// Fitted model and parameters.
    pub model: FittedModel,
    /// Sample size.
    pub n: usize,
    /// K-S statistic of the fitted model, in `[0, 1]`.
    pub ks_stat: f64,
    /// 5% critical value for `n`.
    pub critical_5pct: f64,
    /// Whether `ks_stat` lies below the critical value.
    pub pass_5pct: bool,
}

impl FitResult {
    /// Fitted family.
    pub fn family(&self) -> Family {
        self.model.family()
    }
}

/// Sample moments `E[R]`, `E[R²]`, `E[R⁴]`.
fn moments(sorted: &[f64]) -> (f64, f64, f64) {
    let n = sorted.len() as f64;
    let (mut m1, mut m2, mut m4) = (0.0, 0.0, 0.0);
    for &x in sorted {
        let x2 = x * x;
        m1 += x;
        m2 += x2;
        m4 += x2 * x2;
    }
    (m1 / n, m2 / n, m4 / n)
}

/// K-S statistic of a candidate model, `+∞` when its CDF cannot be built.
fn ks_of(sorted: &[f64], model: &FittedModel) -> f64 {
    match model.cdf() {
        Ok(c) => {
            let d = ks_statistic_sorted(sorted, |x| c.eval(x));
            if d.is_finite() {
                d
            } else {
                f64::INFINITY
            }
        }
        Err(_) => f64::INFINITY,
    }
}

/// Opportunistic compass search on the box `[lo, hi]`.
///
/// Each coordinate is polled at `±step`; the first improvement is taken and
/// polling resumes from the new point. A full poll without improvement
/// halves the step until it falls below `min_step` or `max_evals` is spent.
fn compass_search<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: Vec<f64>,
    lo: &[f64],
    hi: &[f64],
    step0: f64,
    min_step: f64,
    max_evals: usize,
) -> (Vec<f64>, f64) {
    let mut x = x0;
    let mut fx = f(&x);
    let mut step = step0;
    let mut evals = 1;
    while step >= min_step && evals < max_evals {
        let mut improved = false;
        'poll: for i in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut y = x.clone();
                y[i] = (y[i] + dir * step).clamp(lo[i], hi[i]);
                if y[i] == x[i] {
                    continue;
                }
                let fy = f(&y);
                evals += 1;
                if fy < fx {
                    x = y;
                    fx = fy;
                    improved = true;
                    break 'poll;
                }
                if evals >= max_evals {
                    break 'poll;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (x, fx)
}

fn fit_gaussian(sorted: &[f64], m1: f64, m2: f64) -> (FittedModel, f64) {
    let sd = (m2 - m1 * m1).max(0.0).sqrt();
    let make = |u: &[f64]| FittedModel::Gaussian {
        mean: m1 + sd * u[0],
        std_dev: sd * u[1].exp(),
    };
    let (u, d) = compass_search(
        |u| ks_of(sorted, &make(u)),
        vec![0.0, 0.0],
        &[-1.0, -1.0],
        &[1.0, 1.0],
        0.1,
        1e-3,
        200,
    );
    (make(&u), d)
}

fn fit_nakagami(sorted: &[f64], m2: f64, m4: f64) -> (FittedModel, f64) {
    let var = m4 - m2 * m2;
    let m0 = if var > 0.0 {
        (m2 * m2 / var).max(0.5)
    } else {
        0.5
    };
    let make = |u: &[f64]| FittedModel::Nakagami {
        m: (m0 * u[0].exp()).max(0.5),
        omega: m2 * u[1].exp(),
    };
    let (u, d) = compass_search(
        |u| ks_of(sorted, &make(u)),
        vec![0.0, 0.0],
        &[-3.0, -1.0],
        &[3.0, 1.0],
        0.1,
        1e-3,
        200,
    );
    (make(&u), d)
}

fn fit_rician(sorted: &[f64], m2: f64, m4: f64) -> (FittedModel, f64) {
    // Ω = ν² + s and Var(R²) = 2sΩ − s² with s = 2σ².
    let var = m4 - m2 * m2;
    let s = m2 - (m2 * m2 - var).max(0.0).sqrt();
    let s = s.clamp(1e-12 * m2, m2);
    let k0 = ((m2 - s) / s).max(0.0);
    let make = |u: &[f64]| {
        let k = (k0 + u[0]).max(0.0);
        let omega = m2 * u[1].exp();
        let s = omega / (1.0 + k);
        FittedModel::Rician {
            nu: (omega - s).max(0.0).sqrt(),
            sigma: (0.5 * s).sqrt(),
        }
    };
    let span = (1.0 + k0).max(1.0);
    let (u, d) = compass_search(
        |u| ks_of(sorted, &make(u)),
        vec![0.0, 0.0],
        &[-k0, -1.0],
        &[span, 1.0],
        0.1 * span,
        1e-3,
        200,
    );
    (make(&u), d)
}

/// FTR model for normalized coordinates `u ∈ [0, 1]³` over the search box,
/// with `σ²` from the mean power.
fn ftr_from_unit(u: &[f64], mean_power: f64) -> Result<FittedModel> {
    let k = FTR_K_RANGE.0 + u[0] * (FTR_K_RANGE.1 - FTR_K_RANGE.0);
    let m = FTR_M_RANGE.0 * (u[1] * (FTR_M_RANGE.1 / FTR_M_RANGE.0).ln()).exp();
    let delta = u[2].clamp(0.0, 1.0);
    Ok(FittedModel::Ftr {
        params: FtrParams::from_mean_power(k, m.min(FTR_M_RANGE.1), delta, mean_power)?,
    })
}

fn ftr_to_unit(k: f64, m: f64, delta: f64) -> [f64; 3] {
    [
        (k - FTR_K_RANGE.0) / (FTR_K_RANGE.1 - FTR_K_RANGE.0),
        (m / FTR_M_RANGE.0).ln() / (FTR_M_RANGE.1 / FTR_M_RANGE.0).ln(),
        delta,
    ]
}

fn fit_ftr(sorted: &[f64], m2: f64) -> (FittedModel, f64) {
    let cells: Vec<[f64; 3]> = FTR_GRID_K
        .iter()
        .flat_map(|&k| {
            FTR_GRID_M
                .iter()
                .flat_map(move |&m| FTR_GRID_DELTA.iter().map(move |&d| ftr_to_unit(k, m, d)))
        })
        .collect();
    let score = |u: &[f64]| ftr_from_unit(u, m2).map_or(f64::INFINITY, |mdl| ks_of(sorted, &mdl));
    let scores: Vec<f64> = cells.par_iter().map(|u| score(u)).collect();
    // Grid cells ranked by score, ties kept in lexicographic (K, m, Δ)
    // order by the stable sort.
    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut best: Option<(Vec<f64>, f64)> = None;
    for &start in order.iter().take(FTR_REFINE_STARTS) {
        let (u, d) = compass_search(
            score,
            cells[start].to_vec(),
            &[0.0; 3],
            &[1.0; 3],
            0.0625,
            2e-3,
            300,
        );
        if best.as_ref().is_none_or(|b| d < b.1) {
            best = Some((u, d));
        }
    }
    let (u, d) = best.expect("the grid is nonempty");
    let model = ftr_from_unit(&u, m2).expect("grid point inside the validated box");
    (model, d)
}

/// `(μ, r̂)` from the moments of `R^α`, which is Gamma distributed under
/// the α-μ law.
fn alpha_mu_given_alpha(sorted: &[f64], alpha: f64) -> Option<(f64, f64)> {
    let n = sorted.len() as f64;
    let (mut a, mut b) = (0.0, 0.0);
    for &x in sorted {
        let xa = x.powf(alpha);
        a += xa;
        b += xa * xa;
    }
    let (ea, ea2) = (a / n, b / n);
    let var = ea2 - ea * ea;
    if !(var > 0.0 && ea > 0.0) {
        return None;
    }
    let mu = ea * ea / var;
    let r_hat = ea.powf(1.0 / alpha);
    (mu.is_finite() && r_hat.is_finite()).then_some((mu, r_hat))
}

/// `ln(E_model[R] / E_sample[R])` for the α-μ law matched at `α`.
fn alpha_mu_mismatch(sorted: &[f64], m1: f64, alpha: f64) -> Option<(f64, f64, f64)> {
    let (mu, r_hat) = alpha_mu_given_alpha(sorted, alpha)?;
    let ln_mean = r_hat.ln() + ln_gamma(mu + 1.0 / alpha) - ln_gamma(mu) - mu.ln() / alpha;
    let g = ln_mean - m1.ln();
    g.is_finite().then_some((g, mu, r_hat))
}

fn fit_alpha_mu(sorted: &[f64], m1: f64) -> (FittedModel, f64) {
    // Roots in α of the mean mismatch, bracketed on a log grid over [0.2, 10].
    let n_grid = 120;
    let alphas: Vec<f64> = (0..=n_grid)
        .map(|i| 0.2 * (50f64.ln() * i as f64 / n_grid as f64).exp())
        .collect();
    let g: Vec<Option<f64>> = alphas
        .iter()
        .map(|&a| alpha_mu_mismatch(sorted, m1, a).map(|t| t.0))
        .collect();
    let mut candidates = Vec::new();
    for i in 0..n_grid {
        if let (Some(g0), Some(g1)) = (g[i], g[i + 1]) {
            if g0 == 0.0 || g0.signum() != g1.signum() {
                let (mut a, mut b, mut ga) = (alphas[i], alphas[i + 1], g0);
                for _ in 0..60 {
                    let c = 0.5 * (a + b);
                    match alpha_mu_mismatch(sorted, m1, c) {
                        Some((gc, _, _)) if gc.signum() == ga.signum() && gc != 0.0 => {
                            a = c;
                            ga = gc;
                        }
                        Some(_) => b = c,
                        None => break,
                    }
                }
                candidates.push(0.5 * (a + b));
            }
        }
    }
    if candidates.is_empty() {
        // No exact match: take the grid point with the smallest mismatch.
        if let Some((i, _)) = g
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (i, v.abs())))
            .min_by(|a, b| a.1.total_cmp(&b.1))
        {
            candidates.push(alphas[i]);
        }
    }
    let mut best: Option<(FittedModel, f64)> = None;
    for alpha in candidates {
        if let Some((_, mu, r_hat)) = alpha_mu_mismatch(sorted, m1, alpha) {
            let model = FittedModel::AlphaMu { alpha, mu, r_hat };
            let d = ks_of(sorted, &model);
            if best.as_ref().is_none_or(|b| d < b.1) {
                best = Some((model, d));
            }
        }
    }
    best.unwrap_or((
        FittedModel::AlphaMu {
            alpha: 2.0,
            mu: 1.0,
            r_hat: (sorted.iter().map(|x| x * x).sum::<f64>() / sorted.len() as f64).sqrt(),
        },
        f64::INFINITY,
    ))
}

/// Fits one family to the sample.
///
/// # Errors
///
/// [`Error::DegenerateSample`] when all values are equal.
pub fn fit_family(samples: &SampleSet, family: Family) -> Result<FitResult> {
    let sorted = samples.sorted();
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    if lo == hi {
        return Err(Error::DegenerateSample(format!(
            "all {} values of `{}` equal {lo}",
            sorted.len(),
            samples.label
        )));
    }
    let (m1, m2, m4) = moments(&sorted);
    let (model, d) = match family {
        Family::Gaussian => fit_gaussian(&sorted, m1, m2),
        Family::Nakagami => fit_nakagami(&sorted, m2, m4),
        Family::Rician => fit_rician(&sorted, m2, m4),
        Family::Ftr => fit_ftr(&sorted, m2),
        Family::AlphaMu => fit_alpha_mu(&sorted, m1),
    };
    let n = sorted.len();
    let critical = ks_critical_5pct(n);
    let ks = d.clamp(0.0, 1.0);
    Ok(FitResult {
        label: samples.label.clone(),
        model,
        n,
        ks_stat: ks,
        critical_5pct: critical,
        pass_5pct: ks < critical,
    })
}

/// Fits every family in [`Family::ALL`] order.
///
/// # Errors
///
/// As [`fit_family`].
pub fn fit_all(samples: &SampleSet) -> Result<Vec<FitResult>> {
    Family::ALL
        .iter()
        .map(|&f| fit_family(samples, f))
        .collect()
}

/// Writes fit results as CSV with the header
/// `label,family,n,ks_stat,critical_5pct,pass_5pct,params`, where `params`
/// lists `name=value` pairs separated by `;`.
///
/// # Errors
///
/// [`Error::Data`] when writing fails.
pub fn write_report<W: Write>(writer: W, results: &[FitResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Data(format!("CSV write error: {e}"));
    w.write_record([
        "label",
        "family",
        "n",
        "ks_stat",
        "critical_5pct",
        "pass_5pct",
        "params",
    ])
    .map_err(io)?;
    for r in results {
        let params = r
            .model
            .params()
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";");
        w.write_record([
            r.label.clone(),
            r.family().to_string(),
            r.n.to_string(),
            r.ks_stat.to_string(),
            r.critical_5pct.to_string(),
            r.pass_5pct.to_string(),
            params,
        ])
        .map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::Data(format!("CSV write error: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_example() {
        let d = ks_statistic(&[0.1, 0.5, 0.9], |x| x);
        assert!((d - 7.0 / 30.0).abs() < 1e-15);
        let d2 = ks_statistic(&[0.9, 0.1, 0.5], |x| x);
        assert_eq!(d, d2);
    }

    #[test]
    fn critical_values() {
        assert!((ks_critical_5pct(10_000) - 0.0136).abs() < 1e-15);
        assert!(ks_critical_5pct(30) < 1.36 / 30f64.sqrt());
    }

    #[test]
    fn gamma_mixture_matches_regularized_gamma() {
        let w = [0.2, 0.0, 0.5, 0.3];
        let mix = GammaMixture::new(&w, 1.7).unwrap();
        for g in [0.01, 0.5, 1.7, 4.0, 12.0, 60.0] {
            let want: f64 = w
                .iter()
                .enumerate()
                .map(|(j, c)| c * gamma_regularized_lower(j as f64 + 1.0, g / 1.7).unwrap())
                .sum();
            assert!((mix.cdf_power(g) - want).abs() < 1e-14, "g={g}");
        }
        assert_eq!(mix.cdf_power(0.0), 0.0);
        assert_eq!(mix.cdf_power(1e6), 1.0);
    }

    #[test]
    fn ftr_mixture_matches_series_cdf() {
        let p = FtrParams::new(7.0, 6.0, 0.2, 2.7729f64.powi(2)).unwrap();
        let exact = ftr::Ftr::new(p).unwrap();
        let cdf = FittedModel::Ftr { params: p }.cdf().unwrap();
        for r in [0.5, 3.0, 8.0, 10.0, 14.0, 20.0] {
            let a = cdf.eval(r);
            let b = exact.cdf_envelope(r).unwrap();
            assert!((a - b).abs() < 1e-6, "r={r}: {a} vs {b}");
        }
    }

    #[test]
    fn rician_cdf_reduces_to_rayleigh() {
        let cdf = FittedModel::Rician {
            nu: 0.0,
            sigma: 1.3,
        }
        .cdf()
        .unwrap();
        for r in [0.2f64, 1.0, 2.5] {
            let want = 1.0 - (-r * r / (2.0 * 1.69)).exp();
            assert!((cdf.eval(r) - want).abs() < 1e-14);
        }
    }

    #[test]
    fn samplers_agree_with_cdfs() {
        let models = [
            FittedModel::Gaussian {
                mean: 3.0,
                std_dev: 0.7,
            },
            FittedModel::Nakagami { m: 2.3, omega: 1.5 },
            FittedModel::Rician {
                nu: 1.2,
                sigma: 0.6,
            },
            FittedModel::AlphaMu {
                alpha: 1.7,
                mu: 2.2,
                r_hat: 0.9,
            },
            FittedModel::Ftr {
                params: FtrParams::new(7.0, 6.0, 0.2, 1.0).unwrap(),
            },
        ];
        for (i, m) in models.iter().enumerate() {
            let xs = m.sample(100 + i as u64, 20_000).unwrap();
            let c = m.cdf().unwrap();
            let d = ks_statistic(&xs, |x| c.eval(x));
            assert!(d < ks_critical_5pct(xs.len()), "{:?}: {d}", m.family());
        }
    }

    #[test]
    fn moment_fits_recover_parameters() {
        let truth = FittedModel::Nakagami { m: 3.0, omega: 2.0 };
        let s = SampleSet::new(truth.sample(5, 10_000).unwrap(), "nak").unwrap();
        let r = fit_family(&s, Family::Nakagami).unwrap();
        match r.model {
            FittedModel::Nakagami { m, omega } => {
                assert!((m / 3.0 - 1.0).abs() < 0.1, "{m}");
                assert!((omega / 2.0 - 1.0).abs() < 0.03, "{omega}");
            }
            _ => unreachable!(),
        }
        assert!(r.pass_5pct);
        let truth = FittedModel::AlphaMu {
            alpha: 1.5,
            mu: 2.0,
            r_hat: 1.0,
        };
        let s = SampleSet::new(truth.sample(6, 10_000).unwrap(), "am").unwrap();
        let r = fit_family(&s, Family::AlphaMu).unwrap();
        assert!(r.pass_5pct, "{:?} {}", r.model, r.ks_stat);
    }

    #[test]
    fn degenerate_and_invalid_samples() {
        let s = SampleSet::new(vec![2.0; 50], "flat").unwrap();
        for f in Family::ALL {
            assert!(matches!(fit_family(&s, f), Err(Error::DegenerateSample(_))));
        }
        assert!(SampleSet::new(vec![], "e").is_err());
        assert!(SampleSet::new(vec![1.0, -0.5], "neg").is_err());
        assert!(SampleSet::new(vec![1.0, f64::NAN], "nan").is_err());
    }

    #[test]
    fn csv_ingestion() {
        let s = SampleSet::from_reader("amplitude\n1.5\n\n2.0\n# note\n0.25\n".as_bytes(), "x")
            .unwrap();
        assert_eq!(s.values, vec![1.5, 2.0, 0.25]);
        let s = SampleSet::from_reader("1\n2\n".as_bytes(), "x").unwrap();
        assert_eq!(s.values, vec![1.0, 2.0]);
        assert!(SampleSet::from_reader("1\nabc\n".as_bytes(), "x").is_err());
        assert!(SampleSet::from_reader("1,2\n".as_bytes(), "x").is_err());
        assert!(SampleSet::from_reader("amp\n".as_bytes(), "x").is_err());
    }

    #[test]
    fn family_names_round_trip() {
        for f in Family::ALL {
            assert_eq!(f.name().parse::<Family>().unwrap(), f);
        }
        assert!("weibull".parse::<Family>().is_err());
    }

    #[test]
    fn report_has_header_and_rows() {
        let s = SampleSet::new(
            FittedModel::Nakagami { m: 2.0, omega: 1.0 }
                .sample(3, 500)
                .unwrap(),
            "r",
        )
        .unwrap();
        let r = fit_family(&s, Family::Gaussian).unwrap();
        let mut buf = Vec::new();
        write_report(&mut buf, &[r]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "label,family,n,ks_stat,critical_5pct,pass_5pct,params"
        );
        assert!(lines.next().unwrap().starts_with("r,gaussian,500,"));
    }
}
