//! Fluctuating two-ray (FTR) fading.
//!
//! The squared envelope `γ = R²` of an FTR hop is a mixture of Gamma laws,
//!
//! `f_γ(g) = Σ_j c_j g^j e^{−g/(2σ²)} / (Γ(j+1)(2σ²)^{j+1})`,
//! `c_j = (m^m/Γ(m)) K^j d_j / j!`,
//!
//! where the coefficients `d_j` are finite double sums of gamma functions and
//! associated Legendre functions. The series is truncated at `N_T` terms once
//! the mixture weights integrate to one within a tolerance.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::specfun::{self, gamma_regularized_lower, LogSum, Precision};

/// Default tolerance on `|1 − Σ_j c_j|`.
pub const DEFAULT_TRUNC_TOL: f64 = 1e-6;
/// Number of terms the truncation search starts from.
pub const N_T_START: usize = 40;
/// Largest truncation index tried before giving up.
pub const N_T_MAX: usize = 200;

/// Parameters of one FTR hop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FtrParams {
    /// Specular-to-diffuse power ratio `K ≥ 0`.
    pub k_ratio: f64,
    /// Fluctuation severity `m > 0`.
    pub m: f64,
    /// Specular similarity `Δ ∈ [0, 1]`.
    pub delta: f64,
    /// Diffuse variance per dimension `σ² > 0`.
    pub sigma_sq: f64,
}

impl FtrParams {
    /// Validated constructor.
    pub fn new(k_ratio: f64, m: f64, delta: f64, sigma_sq: f64) -> Result<Self> {
        let p = Self {
            k_ratio,
            m,
            delta,
            sigma_sq,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameters whose mean squared envelope `2σ²(1+K)` equals `mean_power`.
    pub fn from_mean_power(k_ratio: f64, m: f64, delta: f64, mean_power: f64) -> Result<Self> {
        if !(mean_power > 0.0) {
            return Err(Error::invalid("mean_power", "must be positive"));
        }
        Self::new(k_ratio, m, delta, mean_power / (2.0 * (1.0 + k_ratio)))
    }

    /// Checks the parameter ranges.
    pub fn validate(&self) -> Result<()> {
        if !(self.k_ratio >= 0.0 && self.k_ratio.is_finite()) {
            return Err(Error::invalid("k_ratio", "must be finite and >= 0"));
        }
        if !(self.m > 0.0 && self.m.is_finite()) {
            return Err(Error::invalid("m", "must be finite and > 0"));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::invalid("delta", "must lie in [0, 1]"));
        }
        if !(self.sigma_sq > 0.0 && self.sigma_sq.is_finite()) {
            return Err(Error::invalid("sigma_sq", "must be finite and > 0"));
        }
        Ok(())
    }

    /// Mean squared envelope `υ = 2σ²(1+K)`.
    pub fn mean_power(&self) -> f64 {
        2.0 * self.sigma_sq * (1.0 + self.k_ratio)
    }

    /// Specular amplitudes `(V₁, V₂)` with `(V₁²+V₂²)/(2σ²) = K` and
    /// `2V₁V₂/(V₁²+V₂²) = Δ`.
    pub fn specular_amplitudes(&self) -> (f64, f64) {
        let a = (2.0 * self.sigma_sq * self.k_ratio * (1.0 + self.delta)).sqrt();
        let b = (2.0 * self.sigma_sq * self.k_ratio * (1.0 - self.delta)).sqrt();
        (0.5 * (a + b), 0.5 * (a - b))
    }
}

/// Truncated coefficient series of one FTR hop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FtrSeries {
    /// Coefficients `d_0 … d_{N_T}`.
    pub d: Vec<f64>,
    /// Truncation index `N_T`.
    pub n_t: usize,
    /// `|1 − Σ_j c_j|`, the deviation of the truncated PDF's integral from one.
    pub trunc_metric: f64,
    /// `Σ_j d_j`, reported for comparison with the plain coefficient sum.
    pub sum_d: f64,
    /// Mixture weights `c_j = (m^m/Γ(m)) K^j d_j / j!`.
    pub weights: Vec<f64>,
    /// Largest `|Im d_j| / |Re d_j|` seen before the imaginary parts were
    /// discarded.
    pub max_imag_ratio: f64,
    /// Number of trailing coefficients taken from the phase-average form
    /// because the double sum lost too many digits to cancellation.
    pub n_integral_form: usize,
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Legendre precision used for the coefficient sums.
fn legendre_precision() -> Precision {
    Precision {
        rel_tol: 1e-15,
        abs_tol: 1e-300,
        max_terms: 20_000,
    }
}

/// `d_n` as a complex number in `(ln|·|, phase)` form, summed term by term.
///
/// `d_n = Σ_k C(n,k)(Δ/2)^k Σ_l C(k,l) Γ(n+m+2l−k) e^{iπ(2l−k)/2}
///        R^{−(n+m)} P̃^{k−2l}_{n+m−1}(x)`
///
/// with `R = √((m+K)² − (KΔ)²)` and `x = (m+K)/R`. The Legendre function is
/// taken on the cut convention `P̃^μ(x) = e^{−iπμ/2} P^μ(x)` for `x > 1`
/// (the analytic continuation of the Ferrers function with the
/// Condon–Shortley phase), which makes the mixture weights sum to one.
fn coefficient_printed(
    n: usize,
    p: &FtrParams,
    legendre_cache: &mut Vec<(i32, f64, f64)>,
) -> Result<PrintedCoefficient> {
    let (k, m, delta) = (p.k_ratio, p.m, p.delta);
    let r2 = (m + k) * (m + k) - (k * delta) * (k * delta);
    let ln_r = 0.5 * r2.ln();
    let x = ((m + k) / r2.sqrt()).max(1.0);
    let nu = n as f64 + m - 1.0;
    let prec = legendre_precision();

    // Cache P^μ_ν(x) for μ ∈ [−n, n]; every order is evaluated directly so
    // the cancellation of imaginary parts is a genuine check.
    legendre_cache.clear();
    let k_max = if delta == 0.0 { 0 } else { n };
    for mu in -(k_max as i32)..=(k_max as i32) {
        let (l, s) = specfun::ln_legendre_p(nu, mu, x, &prec)?;
        legendre_cache.push((mu, l, s));
    }
    let ln_half_delta = (0.5 * delta).ln();
    let mut re = LogSum::new();
    let mut im = LogSum::new();
    let mut abs_total = LogSum::new();
    for kk in 0..=k_max {
        let ln_ck = ln_binomial(n, kk)
            + if kk == 0 {
                0.0
            } else {
                kk as f64 * ln_half_delta
            };
        for l in 0..=kk {
            let mu = kk as i32 - 2 * l as i32;
            let (_, ln_p, sign_p) = legendre_cache[(mu + k_max as i32) as usize];
            if sign_p == 0.0 {
                continue;
            }
            let g_arg = n as f64 + m + 2.0 * l as f64 - kk as f64;
            let ln_mag =
                ln_ck + ln_binomial(kk, l) + ln_gamma(g_arg) - (n as f64 + m) * ln_r + ln_p;
            // Printed factor e^{iπ(2l−k)/2} times the convention factor
            // e^{−iπμ/2}, both as exact quarter turns.
            abs_total.add(ln_mag, 1.0);
            let quarter = ((2 * l as i32 - kk as i32) - mu).rem_euclid(4);
            match quarter {
                0 => re.add(ln_mag, sign_p),
                1 => im.add(ln_mag, sign_p),
                2 => re.add(ln_mag, -sign_p),
                _ => im.add(ln_mag, -sign_p),
            }
        }
    }
    let (ln_re, sign_re) = re.value();
    let (ln_im, _) = im.value();
    if sign_re == 0.0 {
        return Err(Error::Overflow(format!(
            "FTR coefficient d_{n} vanished numerically for K={k}, m={m}, delta={delta}"
        )));
    }
    let imag_ratio = if ln_im == f64::NEG_INFINITY {
        0.0
    } else {
        (ln_im - ln_re).exp()
    };
    Ok(PrintedCoefficient {
        ln_abs: ln_re,
        sign: sign_re,
        imag_ratio,
        ln_cancellation: abs_total.value().0 - ln_re,
    })
}

/// Result of the double-sum evaluation of one coefficient.
#[derive(Debug, Clone, Copy)]
struct PrintedCoefficient {
    ln_abs: f64,
    sign: f64,
    imag_ratio: f64,
    /// `ln(Σ|terms| / |d_n|)`, the digits lost to cancellation.
    ln_cancellation: f64,
}

/// Largest tolerated `Σ|terms| / |d_n|` before the double sum is replaced
/// by the integral form. The Legendre values carry relative errors of a few
/// 1e-14, so this keeps the coefficient error near 1e-11.
const MAX_CANCELLATION: f64 = 100.0;

/// `ln d_n` from the equivalent phase average
///
/// `d_n = Γ(n+m) (1/2π) ∫_0^{2π} (1+Δcosθ)^n (m+K+KΔcosθ)^{−(n+m)} dθ`,
///
/// integrated by the trapezoidal rule, which converges geometrically for a
/// periodic analytic integrand. The node count is doubled until two
/// successive values agree to 1e-14.
fn ln_coefficient_integral(n: usize, p: &FtrParams) -> Result<f64> {
    let nf = n as f64;
    let eval = |npts: usize| {
        let mut acc = LogSum::new();
        for i in 0..npts {
            let c = (PI * (i as f64 + 0.5) / npts as f64).cos();
            let l = if n == 0 {
                0.0
            } else {
                nf * (1.0 + p.delta * c).ln()
            } - (nf + p.m) * (p.m + p.k_ratio + p.k_ratio * p.delta * c).ln();
            acc.add(l, 1.0);
        }
        acc.value().0 - (npts as f64).ln()
    };
    let mut npts = 64;
    let mut prev = eval(npts);
    while npts < 1 << 20 {
        npts *= 2;
        let cur = eval(npts);
        if (cur - prev).abs() < 1e-14 {
            return Ok(cur + ln_gamma(nf + p.m));
        }
        prev = cur;
    }
    Err(Error::NonConvergence {
        what: format!("phase average for d_{n}"),
        iterations: npts,
    })
}

/// Computes the coefficient series, growing `N_T` from 40 until
/// `|1 − Σ_j c_j| < tol`.
///
/// # Errors
///
/// [`Error::NonConvergence`] when 200 terms do not reach `tol`,
/// [`Error::Overflow`] when a coefficient leaves the double range (extreme
/// `m`, `K`), [`Error::Domain`] if the imaginary parts fail to cancel.
pub fn compute_series(params: &FtrParams, tol: f64) -> Result<FtrSeries> {
    params.validate()?;
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", "must be positive"));
    }
    let m = params.m;
    let ln_pref = m * m.ln() - ln_gamma(m);
    let ln_k = params.k_ratio.ln();
    let mut d = Vec::with_capacity(N_T_START + 1);
    let mut weights = Vec::with_capacity(N_T_START + 1);
    let mut sum_c = 0.0;
    let mut sum_d = 0.0;
    let mut max_imag_ratio: f64 = 0.0;
    let mut cache = Vec::new();
    let mut integral_only = false;
    let mut n_integral_form = 0;
    for n in 0..=N_T_MAX {
        let (ln_d, sign) = if integral_only {
            (ln_coefficient_integral(n, params)?, 1.0)
        } else {
            let pc = coefficient_printed(n, params, &mut cache)?;
            if pc.imag_ratio >= 1e-9 {
                return Err(Error::Domain(format!(
                    "imaginary part of d_{n} did not cancel (ratio {:.3e})",
                    pc.imag_ratio
                )));
            }
            max_imag_ratio = max_imag_ratio.max(pc.imag_ratio);
            if pc.ln_cancellation <= MAX_CANCELLATION.ln() {
                (pc.ln_abs, pc.sign)
            } else {
                // Cancellation only grows with n.
                integral_only = true;
                (ln_coefficient_integral(n, params)?, 1.0)
            }
        };
        if integral_only {
            n_integral_form += 1;
        }
        let dn = sign * ln_d.exp();
        let ln_c = if n == 0 {
            ln_pref + ln_d
        } else {
            ln_pref + n as f64 * ln_k - ln_gamma(n as f64 + 1.0) + ln_d
        };
        let c = sign * ln_c.exp();
        if !c.is_finite() || (!dn.is_finite() && c != 0.0) {
            return Err(Error::Overflow(format!(
                "FTR series term {n} overflows for K={}, m={}, delta={}",
                params.k_ratio, params.m, params.delta
            )));
        }
        d.push(dn);
        weights.push(c);
        sum_c += c;
        sum_d += dn;
        let trunc = (1.0 - sum_c).abs();
        if n >= N_T_START && trunc < tol {
            return Ok(FtrSeries {
                d,
                n_t: n,
                trunc_metric: trunc,
                sum_d,
                weights,
                max_imag_ratio,
                n_integral_form,
            });
        }
    }
    Err(Error::NonConvergence {
        what: format!(
            "FTR truncation for K={}, m={}, delta={} (|1 - sum c_j| = {:.3e})",
            params.k_ratio,
            params.m,
            params.delta,
            (1.0 - sum_c).abs()
        ),
        iterations: N_T_MAX,
    })
}

/// PDF of the squared envelope.
///
/// # Errors
///
/// [`Error::Domain`] for `g < 0`.
pub fn pdf_power(g: f64, params: &FtrParams, series: &FtrSeries) -> Result<f64> {
    if !(g >= 0.0) {
        return Err(Error::Domain(format!("FTR power must be >= 0, got {g}")));
    }
    let s = 2.0 * params.sigma_sq;
    if g == 0.0 {
        return Ok((series.weights[0] / s).max(0.0));
    }
    if g == f64::INFINITY {
        return Ok(0.0);
    }
    let ln_g = g.ln();
    let ln_s = s.ln();
    let mut acc = 0.0;
    for (j, &c) in series.weights.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let jf = j as f64;
        let ln_t = jf * ln_g - g / s - ln_gamma(jf + 1.0) - (jf + 1.0) * ln_s;
        acc += c * ln_t.exp();
    }
    Ok(acc.max(0.0))
}

/// CDF of the squared envelope, `Σ_j c_j P(j+1, g/(2σ²))`.
///
/// The incomplete gamma values come from one direct evaluation at the top
/// index and the downward recurrence `P(n, y) = P(n+1, y) + y^n e^{−y}/n!`.
///
/// # Errors
///
/// [`Error::Domain`] for `g < 0`.
pub fn cdf_power(g: f64, params: &FtrParams, series: &FtrSeries) -> Result<f64> {
    if !(g >= 0.0) {
        return Err(Error::Domain(format!("FTR power must be >= 0, got {g}")));
    }
    if g == 0.0 {
        return Ok(0.0);
    }
    if g == f64::INFINITY {
        return Ok(series.weights.iter().sum::<f64>().clamp(0.0, 1.0));
    }
    let y = g / (2.0 * params.sigma_sq);
    let top = series.weights.len() - 1;
    let mut p = gamma_regularized_lower(top as f64 + 1.0, y)?;
    let ln_y = y.ln();
    let mut acc = series.weights[top] * p;
    for j in (0..top).rev() {
        // P(j+1, y) = P(j+2, y) + y^{j+1} e^{−y} / (j+1)!
        let jf = j as f64 + 1.0;
        p += (jf * ln_y - y - ln_gamma(jf + 1.0)).exp();
        acc += series.weights[j] * p.min(1.0);
    }
    Ok(acc.clamp(0.0, 1.0))
}

/// PDF of the envelope `R = √γ`, `2r·f_γ(r²)`.
///
/// # Errors
///
/// [`Error::Domain`] for `r < 0`.
pub fn pdf_envelope(r: f64, params: &FtrParams, series: &FtrSeries) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::Domain(format!("FTR envelope must be >= 0, got {r}")));
    }
    Ok(2.0 * r * pdf_power(r * r, params, series)?)
}

/// CDF of the envelope, `F_γ(r²)`.
///
/// # Errors
///
/// [`Error::Domain`] for `r < 0`.
pub fn cdf_envelope(r: f64, params: &FtrParams, series: &FtrSeries) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::Domain(format!("FTR envelope must be >= 0, got {r}")));
    }
    cdf_power(r * r, params, series)
}

/// Envelope moment `E[R^s] = Σ_j c_j (2σ²)^{s/2} Γ(j+1+s/2)/Γ(j+1)`.
///
/// # Errors
///
/// [`Error::Divergence`] for `s ≤ −2`.
pub fn envelope_moment(s: f64, params: &FtrParams, series: &FtrSeries) -> Result<f64> {
    if !(s > -2.0) {
        return Err(Error::Divergence(format!(
            "E[R^s] diverges for s = {s} <= -2"
        )));
    }
    let ln_scale = 0.5 * s * (2.0 * params.sigma_sq).ln();
    let mut acc = 0.0;
    for (j, &c) in series.weights.iter().enumerate() {
        let jf = j as f64;
        acc += c * (ln_scale + ln_gamma(jf + 1.0 + 0.5 * s) - ln_gamma(jf + 1.0)).exp();
    }
    Ok(acc)
}

/// A hop's parameters together with its truncated series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ftr {
    /// Distribution parameters.
    pub params: FtrParams,
    /// Truncated coefficient series.
    pub series: FtrSeries,
}

impl Ftr {
    /// Builds the series with [`DEFAULT_TRUNC_TOL`].
    pub fn new(params: FtrParams) -> Result<Self> {
        Self::with_tol(params, DEFAULT_TRUNC_TOL)
    }

    /// Builds the series with an explicit truncation tolerance.
    pub fn with_tol(params: FtrParams, tol: f64) -> Result<Self> {
        let series = compute_series(&params, tol)?;
        Ok(Self { params, series })
    }

    /// See [`pdf_power`].
    pub fn pdf_power(&self, g: f64) -> Result<f64> {
        pdf_power(g, &self.params, &self.series)
    }

    /// See [`cdf_power`].
    pub fn cdf_power(&self, g: f64) -> Result<f64> {
        cdf_power(g, &self.params, &self.series)
    }

    /// See [`pdf_envelope`].
    pub fn pdf_envelope(&self, r: f64) -> Result<f64> {
        pdf_envelope(r, &self.params, &self.series)
    }

    /// See [`cdf_envelope`].
    pub fn cdf_envelope(&self, r: f64) -> Result<f64> {
        cdf_envelope(r, &self.params, &self.series)
    }

    /// See [`envelope_moment`].
    pub fn envelope_moment(&self, s: f64) -> Result<f64> {
        envelope_moment(s, &self.params, &self.series)
    }
}

/// Largest number of mixture weights [`phase_averaged_weights`] produces.
pub const PHASE_AVERAGE_MAX_TERMS: usize = 100_000;

/// Mixture weights `c_j` from the phase average of negative binomial laws.
///
/// Conditioned on the phase difference `θ`, the hop is a shadowed Rician
/// channel with specular ratio `K_θ = K(1 + Δ cos θ)`, whose squared
/// envelope is a Gamma mixture with weights
///
/// `w_j(θ) = Γ(m+j)/(Γ(m) j!) (m/(m+K_θ))^m (K_θ/(m+K_θ))^j`.
///
/// Averaging over `θ` with a `nodes`-point midpoint rule on `[0, π]` gives
/// the FTR weights `c_j`. Every term is positive, so the route stays stable
/// where the Legendre double sum of [`compute_series`] needs more than
/// [`N_T_MAX`] terms (large `K` with small `m`). Terms are added until the
/// remaining mass drops below `tol`, and the returned weights are scaled to
/// unit mass.
///
/// # Errors
///
/// [`Error::InvalidParameter`] for `tol ∉ (0, 1)` or `nodes = 0`,
/// [`Error::NonConvergence`] when [`PHASE_AVERAGE_MAX_TERMS`] terms do not
/// reach `tol`.
pub fn phase_averaged_weights(params: &FtrParams, tol: f64, nodes: usize) -> Result<Vec<f64>> {
    params.validate()?;
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::invalid("tol", "must lie in (0, 1)"));
    }
    if nodes == 0 {
        return Err(Error::invalid("nodes", "must be positive"));
    }
    let m = params.m;
    // Per node: ln of the current weight and ln of the ratio K_θ/(m+K_θ).
    let mut state: Vec<(f64, f64)> = (0..nodes)
        .map(|i| {
            let c = (PI * (i as f64 + 0.5) / nodes as f64).cos();
            let k_t = params.k_ratio * (1.0 + params.delta * c);
            let ln_w0 = m * (m / (m + k_t)).ln();
            let ln_p = if k_t > 0.0 {
                (k_t / (m + k_t)).ln()
            } else {
                f64::NEG_INFINITY
            };
            (ln_w0, ln_p)
        })
        .collect();
    let inv_nodes = 1.0 / nodes as f64;
    let mut weights = Vec::new();
    let mut mass = 0.0;
    for j in 0..PHASE_AVERAGE_MAX_TERMS {
        let c_j = state.iter().map(|&(lw, _)| lw.exp()).sum::<f64>() * inv_nodes;
        weights.push(c_j);
        mass += c_j;
        if 1.0 - mass < tol {
            weights.iter_mut().for_each(|w| *w /= mass);
            return Ok(weights);
        }
        let ln_ratio = ((m + j as f64) / (j as f64 + 1.0)).ln();
        for s in state.iter_mut() {
            s.0 += ln_ratio + s.1;
        }
    }
    Err(Error::NonConvergence {
        what: format!(
            "phase-averaged FTR weights for K={}, m={}, delta={} (mass {mass:.3e})",
            params.k_ratio, params.m, params.delta
        ),
        iterations: PHASE_AVERAGE_MAX_TERMS,
    })
}

/// Generative FTR sampler.
///
/// `V = √ζ (V₁e^{jφ₁} + V₂e^{jφ₂}) + X + jY` with `ζ ~ Gamma(m, 1/m)`,
/// independent uniform phases and `X, Y ~ N(0, σ²)`.
#[derive(Debug, Clone)]
pub struct FtrSampler {
    zeta: Gamma<f64>,
    diffuse: Normal<f64>,
    v1: f64,
    v2: f64,
}

impl FtrSampler {
    /// Sampler for the given parameters.
    pub fn new(params: &FtrParams) -> Result<Self> {
        params.validate()?;
        let (v1, v2) = params.specular_amplitudes();
        let zeta = Gamma::new(params.m, 1.0 / params.m)
            .map_err(|e| Error::invalid("m", format!("{e}")))?;
        let diffuse = Normal::new(0.0, params.sigma_sq.sqrt())
            .map_err(|e| Error::invalid("sigma_sq", format!("{e}")))?;
        Ok(Self {
            zeta,
            diffuse,
            v1,
            v2,
        })
    }

    /// One complex channel coefficient with uniformly distributed phase.
    pub fn sample_complex<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        let z = self.zeta.sample(rng).sqrt();
        let p1: f64 = rng.random::<f64>() * 2.0 * PI;
        let p2: f64 = rng.random::<f64>() * 2.0 * PI;
        let (s1, c1) = p1.sin_cos();
        let (s2, c2) = p2.sin_cos();
        let re = z * (self.v1 * c1 + self.v2 * c2) + self.diffuse.sample(rng);
        let im = z * (self.v1 * s1 + self.v2 * s2) + self.diffuse.sample(rng);
        Complex64::new(re, im)
    }

    /// One envelope draw. Only the phase difference matters for `|V|`, so a
    /// single phase is drawn.
    pub fn sample_envelope<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z = self.zeta.sample(rng).sqrt();
        let p: f64 = rng.random::<f64>() * 2.0 * PI;
        let (s, c) = p.sin_cos();
        let re = z * (self.v1 + self.v2 * c) + self.diffuse.sample(rng);
        let im = z * self.v2 * s + self.diffuse.sample(rng);
        re.hypot(im)
    }
}

/// `n` envelope draws from a ChaCha stream seeded with `seed`.
pub fn sample_envelope(params: &FtrParams, seed: u64, n: usize) -> Result<Vec<f64>> {
    let sampler = FtrSampler::new(params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| sampler.sample_envelope(&mut rng)).collect())
}
