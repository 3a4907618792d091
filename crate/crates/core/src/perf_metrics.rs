//! End-to-end SNDR statistics of the RIS-aided link and the performance
//! metrics built on them.
//!
//! The received SNDR is
//!
//! `γ = G P / (κ² G P + N₀)`, `G = h_F² h_P² h_L²`,
//!
//! with the cascaded fading `h_F = Σ_ι R_{ι,1} R_{ι,2}` of independent FTR
//! envelopes, the pointing factor `h_P` and the deterministic path gain
//! `h_L`. Inverting the SNDR gives `P(γ < x) = P(h_F h_P < Υ)` with
//!
//! `Υ = √(x N₀ / (h_L² P (1 − x κ²)))`.
//!
//! Writing each envelope product through its Mellin transform yields the
//! `L`-variate Mellin–Barnes integral
//!
//! `F(x) = γ² (2πi)^{−L} ∫ Π_ι [Γ(−ς_ι) M̃_ι(ς_ι) z_ι^{ς_ι}]
//!         Γ(γ² + Σς) / (Γ(γ² + 1 + Σς) Γ(1 − Σς)) dς`,
//!
//! `M̃_ι(ς) = Π_ℓ Σ_j c_{ι,ℓ,j} Γ(j + 1 + ς/2) / j!`,
//! `z_ι = A_o Π_ℓ √(2σ²_{ι,ℓ}) / Υ`,
//!
//! which the [`crate::foxh`] engine evaluates for `L ≤ 3`. Larger `L` is
//! served by the Gaussian (CLT) and five-moment (5FM) approximations, and
//! high-SNDR behaviour by explicit leading residues.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};

use crate::error::{Error, Result};
use crate::foxh::{
    eval_foxh_with, FoxHOptions, FoxHSpec, GammaFactor, Location, MixtureTerm, UniGamma,
};
use crate::ftr::{Ftr, FtrParams};
use crate::quad::{integrate, integrate_to_inf, QuadOptions};
use crate::specfun::{erfc, ln_gamma, ln_gamma_signed};
use crate::thz_channel::{misalign_moment, path_gain, Environment, LinkGeometry, Misalignment};

/// Largest `L` for which the exact Fox-H CDF is evaluated.
pub const MAX_EXACT_ELEMENTS: usize = 3;
/// Largest `L` for the exact capacity integral.
pub const MAX_EXACT_CAPACITY_ELEMENTS: usize = 2;
/// Regularizer `e` of the Fox-H power moment.
pub const MOMENT_REGULARIZER: f64 = 1e-6;
/// Truncation target of the FTR series used for moments. The five-moment
/// coefficients difference moment ratios, so they need far tighter
/// moments than the CDFs do.
pub const MOMENT_SERIES_TOL: f64 = 1e-12;
/// Mixture weights below this value are dropped from the Fox-H integrands.
const WEIGHT_FLOOR: f64 = 1e-13;

/// Transceiver hardware impairments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardwareProfile {
    /// Transmitter impairment level `κ_S`.
    pub kappa_s: f64,
    /// Receiver impairment level `κ_D`.
    pub kappa_d: f64,
}

impl HardwareProfile {
    /// Ideal RF chains, `κ_S = κ_D = 0`.
    pub fn ideal() -> Self {
        Self {
            kappa_s: 0.0,
            kappa_d: 0.0,
        }
    }

    /// Checked constructor.
    pub fn new(kappa_s: f64, kappa_d: f64) -> Result<Self> {
        let hw = Self { kappa_s, kappa_d };
        hw.validate()?;
        Ok(hw)
    }

    /// Rejects negative or non-finite levels.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("kappa_s", self.kappa_s), ("kappa_d", self.kappa_d)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be finite and non-negative"));
            }
        }
        Ok(())
    }

    /// `κ² = κ_S² + κ_D²`.
    pub fn kappa_sq(&self) -> f64 {
        self.kappa_s * self.kappa_s + self.kappa_d * self.kappa_d
    }

    /// Supremum `1/κ²` of the SNDR, infinite for ideal hardware.
    pub fn sndr_ceiling(&self) -> f64 {
        let k = self.kappa_sq();
        if k > 0.0 {
            1.0 / k
        } else {
            f64::INFINITY
        }
    }
}

/// Source of the deterministic path gain `h_L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PathGainSource {
    /// Derived from the link geometry and the absorbing environment.
    Geometry {
        /// Frequency, distances and antenna gains.
        geom: LinkGeometry,
        /// Atmospheric state.
        env: Environment,
    },
    /// A fixed amplitude `|h_L|`.
    Fixed(f64),
}

/// Complete description of one RIS-aided THz link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemModel {
    /// First-hop FTR law of every element.
    pub hop1: Vec<Ftr>,
    /// Second-hop FTR law of every element.
    pub hop2: Vec<Ftr>,
    /// Pointing-error model.
    pub mis: Misalignment,
    /// Origin of the path gain.
    pub path: PathGainSource,
    /// Path gain amplitude `|h_L|`.
    pub h_l: f64,
    /// Hardware impairments.
    pub hw: HardwareProfile,
    /// Transmit power `P`, W.
    pub power_w: f64,
    /// Noise power `N₀`, W.
    pub noise_w: f64,
}

fn prepare_hops(params: &[FtrParams], cache: &mut Vec<Ftr>) -> Result<Vec<Ftr>> {
    params
        .iter()
        .map(|p| {
            if let Some(f) = cache.iter().find(|f| f.params == *p) {
                return Ok(f.clone());
            }
            let f = Ftr::new(*p)?;
            cache.push(f.clone());
            Ok(f)
        })
        .collect()
}

impl SystemModel {
    /// Builds a model with per-element hop parameters, computing each
    /// distinct FTR series once.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidParameter`] for mismatched lists, an empty surface or
    /// non-positive powers, plus the errors of the FTR and path-gain models.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        hop1: &[FtrParams],
        hop2: &[FtrParams],
        mis: Misalignment,
        path: PathGainSource,
        hw: HardwareProfile,
        power_w: f64,
        noise_w: f64,
    ) -> Result<Self> {
        if hop1.is_empty() {
            return Err(Error::invalid("l_elements", "must be at least 1"));
        }
        if hop1.len() != hop2.len() {
            return Err(Error::invalid("hops", "both hop lists must have L entries"));
        }
        hw.validate()?;
        let h_l = match &path {
            PathGainSource::Geometry { geom, env } => path_gain(geom, env)?,
            PathGainSource::Fixed(h) => {
                if !(*h > 0.0 && h.is_finite()) {
                    return Err(Error::invalid("h_l", "must be positive"));
                }
                *h
            }
        };
        let mut cache = Vec::new();
        let model = Self {
            hop1: prepare_hops(hop1, &mut cache)?,
            hop2: prepare_hops(hop2, &mut cache)?,
            mis,
            path,
            h_l,
            hw,
            power_w,
            noise_w,
        };
        model.check_powers()?;
        Ok(model)
    }

    /// A model whose `L` elements share the same pair of hop laws.
    ///
    /// # Errors
    ///
    /// As [`SystemModel::new`].
    #[allow(clippy::too_many_arguments)]
    pub fn iid(
        l_elements: usize,
        hop1: FtrParams,
        hop2: FtrParams,
        mis: Misalignment,
        path: PathGainSource,
        hw: HardwareProfile,
        power_w: f64,
        noise_w: f64,
    ) -> Result<Self> {
        Self::new(
            &vec![hop1; l_elements],
            &vec![hop2; l_elements],
            mis,
            path,
            hw,
            power_w,
            noise_w,
        )
    }

    fn check_powers(&self) -> Result<()> {
        if !(self.power_w > 0.0 && self.power_w.is_finite()) {
            return Err(Error::invalid("power_w", "must be positive"));
        }
        if !(self.noise_w > 0.0 && self.noise_w.is_finite()) {
            return Err(Error::invalid("noise_w", "must be positive"));
        }
        Ok(())
    }

    /// Number of reflecting elements `L`.
    pub fn l_elements(&self) -> usize {
        self.hop1.len()
    }

    /// Pointing ratio `γ²`.
    pub fn gamma_sq(&self) -> f64 {
        self.mis.gamma_sq
    }

    /// Zero-displacement collected fraction `A_o`.
    pub fn a_o(&self) -> f64 {
        self.mis.a_o
    }

    /// The same link at another transmit power.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidParameter`] for a non-positive power.
    pub fn with_power(&self, power_w: f64) -> Result<Self> {
        let mut m = self.clone();
        m.power_w = power_w;
        m.check_powers()?;
        Ok(m)
    }

    /// The same link with other hardware impairments.
    pub fn with_hardware(&self, hw: HardwareProfile) -> Self {
        let mut m = self.clone();
        m.hw = hw;
        m
    }

    /// The same link resized to `l` elements, each a copy of element 0.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidParameter`] for `l = 0`.
    pub fn with_elements(&self, l: usize) -> Result<Self> {
        if l == 0 {
            return Err(Error::invalid("l_elements", "must be at least 1"));
        }
        let mut m = self.clone();
        m.hop1 = vec![self.hop1[0].clone(); l];
        m.hop2 = vec![self.hop2[0].clone(); l];
        Ok(m)
    }

    /// `Π_ℓ √(2σ²_{ι,ℓ})` of element `i`.
    fn element_scale(&self, i: usize) -> f64 {
        (2.0 * self.hop1[i].params.sigma_sq).sqrt() * (2.0 * self.hop2[i].params.sigma_sq).sqrt()
    }

    /// Indices of distinct elements and the multiplicity of each.
    fn distinct_elements(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = Vec::new();
        for i in 0..self.l_elements() {
            match out.iter_mut().find(|(j, _)| {
                self.hop1[*j].params == self.hop1[i].params
                    && self.hop2[*j].params == self.hop2[i].params
            }) {
                Some((_, c)) => *c += 1,
                None => out.push((i, 1)),
            }
        }
        out
    }
}

/// A CDF value after clamping to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfValue {
    /// Clamped probability.
    pub value: f64,
    /// Distance between the raw quadrature value and the clamped one.
    pub clamp: f64,
}

impl CdfValue {
    fn from_raw(raw: f64) -> Self {
        let value = raw.clamp(0.0, 1.0);
        Self {
            value,
            clamp: (raw - value).abs(),
        }
    }

    fn exact(value: f64) -> Self {
        Self { value, clamp: 0.0 }
    }
}

/// Instantaneous SNDR `G P/(κ² G P + N₀)` with `G = h_f² h_p² h_L²`.
pub fn sndr(h_f: f64, h_p: f64, model: &SystemModel) -> f64 {
    let g = (h_f * h_p * model.h_l).powi(2);
    let s = g * model.power_w;
    s / (model.hw.kappa_sq() * s + model.noise_w)
}

/// The threshold `Υ` on `h_F h_P` equivalent to `γ < x`.
///
/// Returns `+∞` when `x` reaches the SNDR ceiling `1/κ²`.
///
/// # Errors
///
/// [`Error::Domain`] for negative or non-finite `x`.
pub fn upsilon(x: f64, model: &SystemModel) -> Result<f64> {
    if !(x >= 0.0) || x.is_nan() {
        return Err(Error::Domain(format!(
            "SNDR threshold must be non-negative, got {x}"
        )));
    }
    let rest = 1.0 - x * model.hw.kappa_sq();
    if rest <= 0.0 || x == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    Ok((x * model.noise_w / (model.h_l * model.h_l * model.power_w * rest)).sqrt())
}

fn hop_mixture(f: &Ftr, offset_shift: f64, coeff: f64) -> Vec<MixtureTerm> {
    // Renormalized so that the truncated series keeps unit mass.
    let total: f64 = f.series.weights.iter().sum();
    f.series
        .weights
        .iter()
        .enumerate()
        .filter(|(_, c)| c.abs() > WEIGHT_FLOOR)
        .map(|(j, &c)| {
            let jf = j as f64;
            MixtureTerm {
                weight: c / total / statrs::function::gamma::gamma(jf + 1.0),
                offset: jf + 1.0 + offset_shift,
                coeff,
            }
        })
        .filter(|t| t.weight != 0.0 && t.weight.is_finite())
        .collect()
}

/// `M̃_ι(s) = Π_ℓ Σ_j c_j Γ(j + 1 + s/2)/j!` at a complex point.
fn element_mellin(model: &SystemModel, i: usize, s: Complex64) -> Result<Complex64> {
    let mut prod = Complex64::new(1.0, 0.0);
    for f in [&model.hop1[i], &model.hop2[i]] {
        let total: f64 = f.series.weights.iter().sum();
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, &c) in f.series.weights.iter().enumerate() {
            if c.abs() <= WEIGHT_FLOOR {
                continue;
            }
            let jf = j as f64;
            let lg = ln_gamma(s * 0.5 + (jf + 1.0))? - statrs::function::gamma::ln_gamma(jf + 1.0);
            acc += c / total * lg.exp();
        }
        prod *= acc;
    }
    Ok(prod)
}

fn exact_options() -> FoxHOptions {
    FoxHOptions {
        rel_tol: 1e-6,
        abs_tol: 1e-14,
        ..FoxHOptions::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Statistic {
    Cdf,
    Pdf,
}

fn exact_spec(model: &SystemModel, stat: Statistic) -> FoxHSpec {
    let l = model.l_elements();
    let g2 = model.gamma_sq();
    let mut spec = FoxHSpec::new(l);
    spec.prefactor = g2;
    for i in 0..l {
        let vf = &mut spec.inner_factors[i];
        vf.gammas.push(UniGamma::num(0.0, -1.0));
        vf.mixtures.push(hop_mixture(&model.hop1[i], 0.0, 0.5));
        vf.mixtures.push(hop_mixture(&model.hop2[i], 0.0, 0.5));
    }
    let ones = vec![1.0; l];
    let factor = |offset: f64, sign: f64, location| GammaFactor {
        offset,
        coeffs: ones.iter().map(|c| c * sign).collect(),
        location,
    };
    spec.outer_factors
        .push(factor(g2, 1.0, Location::Numerator));
    spec.outer_factors
        .push(factor(g2 + 1.0, 1.0, Location::Denominator));
    spec.outer_factors.push(match stat {
        Statistic::Cdf => factor(1.0, -1.0, Location::Denominator),
        Statistic::Pdf => factor(0.0, -1.0, Location::Denominator),
    });
    spec
}

fn exact_args(model: &SystemModel, ups: f64) -> Vec<f64> {
    (0..model.l_elements())
        .map(|i| model.a_o() * model.element_scale(i) / ups)
        .collect()
}

fn check_exact_size(model: &SystemModel) -> Result<()> {
    if model.l_elements() > MAX_EXACT_ELEMENTS {
        return Err(Error::CostGuard(format!(
            "exact Fox-H statistics are limited to L <= {MAX_EXACT_ELEMENTS}, got L = {}",
            model.l_elements()
        )));
    }
    Ok(())
}

/// Exact CDF of the SNDR from the `L`-variate Mellin–Barnes integral.
///
/// `F(x) = γ² (2πi)^{−L} ∫ Π_ι [Γ(−ς_ι) M̃_ι(ς_ι) z_ι^{ς_ι}]
///         Γ(γ²+Σς)/(Γ(γ²+1+Σς) Γ(1−Σς)) dς`
///
/// with `z_ι = A_o Π_ℓ √(2σ²_{ι,ℓ}) / Υ`. The result is clamped to `[0, 1]`
/// and the clamp distance is returned alongside.
///
/// # Errors
///
/// [`Error::CostGuard`] for `L > 3`, [`Error::Domain`] for `x < 0` and the
/// errors of [`eval_foxh_with`].
pub fn cdf_sndr_exact(x: f64, model: &SystemModel) -> Result<CdfValue> {
    check_exact_size(model)?;
    let ups = upsilon(x, model)?;
    if ups == 0.0 {
        return Ok(CdfValue::exact(0.0));
    }
    if ups == f64::INFINITY {
        return Ok(CdfValue::exact(1.0));
    }
    let spec = exact_spec(model, Statistic::Cdf);
    let v = eval_foxh_with(&spec, &exact_args(model, ups), &exact_options())?;
    Ok(CdfValue::from_raw(v.value))
}

/// Exact CDF of the SNR under ideal hardware (`κ = 0`).
///
/// # Errors
///
/// As [`cdf_sndr_exact`].
pub fn cdf_snr_exact(x: f64, model: &SystemModel) -> Result<CdfValue> {
    cdf_sndr_exact(x, &model.with_hardware(HardwareProfile::ideal()))
}

/// Exact PDF of the SNDR.
///
/// Differentiating `Υ^{−Σς}` turns `1/Γ(1−Σς)` into `1/Γ(−Σς)/Υ`, and
/// `dΥ/dx = Υ/(2x(1 − xκ²))`, so
///
/// `f(x) = γ²/(2x(1−xκ²)) (2πi)^{−L} ∫ … Γ(γ²+Σς)/(Γ(γ²+1+Σς) Γ(−Σς)) dς`.
///
/// # Errors
///
/// As [`cdf_sndr_exact`], plus [`Error::Domain`] outside `(0, 1/κ²)`.
pub fn pdf_sndr_exact(x: f64, model: &SystemModel) -> Result<f64> {
    check_exact_size(model)?;
    let ups = upsilon(x, model)?;
    if !(ups > 0.0 && ups.is_finite()) {
        return Err(Error::Domain(format!(
            "the SNDR density is evaluated on (0, 1/κ²), got x = {x}"
        )));
    }
    let mut spec = exact_spec(model, Statistic::Pdf);
    spec.prefactor /= 2.0 * x * (1.0 - x * model.hw.kappa_sq());
    let v = eval_foxh_with(&spec, &exact_args(model, ups), &exact_options())?;
    Ok(v.value.max(0.0))
}

/// SNDR CDF from the single-integral representation
///
/// `F(x) = ∫₀^{A_o} F_{h_F}(Υ/y) f_{h_P}(y) dy
///       = ∫₀^∞ γ² e^{−γ² v} F_{h_F}(Υ e^{v}/A_o) dv`
///
/// for any CDF `hf_cdf` of the cascaded fading.
///
/// # Errors
///
/// [`Error::Domain`] for `x < 0` and quadrature failures.
pub fn cdf_compose_pointing<F: Fn(f64) -> f64>(
    x: f64,
    model: &SystemModel,
    hf_cdf: F,
) -> Result<f64> {
    let ups = upsilon(x, model)?;
    if ups == f64::INFINITY {
        return Ok(1.0);
    }
    if ups == 0.0 {
        return Ok(hf_cdf(0.0));
    }
    let g2 = model.gamma_sq();
    let base = ups / model.a_o();
    let v = integrate_to_inf(
        |v| g2 * (-g2 * v).exp() * hf_cdf(base * v.exp()),
        0.0,
        1.0 / g2,
        QuadOptions {
            abs_tol: 1e-12,
            rel_tol: 1e-9,
            max_intervals: 20_000,
        },
    )?;
    Ok(v.clamp(0.0, 1.0))
}

/// [`cdf_compose_pointing`] for the empirical CDF of `samples`, in closed form:
///
/// `F(x) = (1/n) Σ_i min(1, (Υ/(A_o h_i))^{γ²})`.
///
/// # Errors
///
/// [`Error::Domain`] for `x < 0` or an empty sample.
pub fn cdf_compose_pointing_samples(x: f64, model: &SystemModel, samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Domain(
            "empirical h_F CDF needs at least one sample".into(),
        ));
    }
    let ups = upsilon(x, model)?;
    if ups == f64::INFINITY {
        return Ok(1.0);
    }
    let g2 = model.gamma_sq();
    let base = ups / model.a_o();
    let sum: f64 = samples
        .iter()
        .map(|&h| if h <= base { 1.0 } else { (base / h).powf(g2) })
        .sum();
    Ok(sum / samples.len() as f64)
}

/// Product moments `μ_k = E[(R₁R₂)^k] = E[R₁^k] E[R₂^k]`, `k = 0..=order`,
/// for every element.
///
/// # Errors
///
/// Propagated from the envelope moments.
pub fn product_term_moments(model: &SystemModel, order: usize) -> Result<Vec<Vec<f64>>> {
    let mut cache: Vec<(usize, Vec<f64>)> = Vec::new();
    for (i, _) in model.distinct_elements() {
        let h1 = Ftr::with_tol(model.hop1[i].params, MOMENT_SERIES_TOL)?;
        let h2 = Ftr::with_tol(model.hop2[i].params, MOMENT_SERIES_TOL)?;
        let mu = (0..=order)
            .map(|k| {
                if k == 0 {
                    return Ok(1.0);
                }
                let k = k as f64;
                Ok(h1.envelope_moment(k)? * h2.envelope_moment(k)?)
            })
            .collect::<Result<Vec<f64>>>()?;
        cache.push((i, mu));
    }
    Ok((0..model.l_elements())
        .map(|i| {
            cache
                .iter()
                .find(|(j, _)| {
                    model.hop1[*j].params == model.hop1[i].params
                        && model.hop2[*j].params == model.hop2[i].params
                })
                .map(|(_, m)| m.clone())
                .expect("every element has a distinct representative")
        })
        .collect())
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Moments of a sum of independent terms from the moments of each term,
/// `E[(S+X)^k] = Σ_i C(k,i) E[S^i] E[X^{k−i}]`.
fn convolve_moments(terms: &[Vec<f64>], order: usize) -> Vec<f64> {
    let mut s = vec![0.0; order + 1];
    s[0] = 1.0;
    for mu in terms {
        s = (0..=order)
            .map(|k| (0..=k).map(|i| binomial(k, i) * s[i] * mu[k - i]).sum())
            .collect();
    }
    s
}

/// Moments `Ω_0 … Ω_order` of `h_F = Σ_ι R_{ι,1} R_{ι,2}`.
///
/// # Errors
///
/// Propagated from [`product_term_moments`].
pub fn sum_moments(model: &SystemModel, order: usize) -> Result<Vec<f64>> {
    Ok(convolve_moments(
        &product_term_moments(model, order)?,
        order,
    ))
}

/// Mean and variance of `h_F`: `Σ_ι μ₁` and `Σ_ι (μ₂ − μ₁²)`.
///
/// # Errors
///
/// Propagated from [`product_term_moments`].
pub fn hf_mean_variance(model: &SystemModel) -> Result<(f64, f64)> {
    let mus = product_term_moments(model, 2)?;
    let mean = mus.iter().map(|m| m[1]).sum();
    let var = mus.iter().map(|m| m[2] - m[1] * m[1]).sum();
    Ok((mean, var))
}

/// Gaussian CDF of `h_F` with the exact mean and variance.
///
/// # Errors
///
/// Propagated from [`hf_mean_variance`].
pub fn hf_cdf_clt(model: &SystemModel) -> Result<impl Fn(f64) -> f64> {
    let (mean, var) = hf_mean_variance(model)?;
    let s = (2.0 * var).sqrt();
    Ok(move |h: f64| 0.5 * erfc(-(h - mean) / s))
}

/// SNDR CDF with `h_F` replaced by its Gaussian approximation,
/// `F_{h_F}(h) = ½ erfc(−(h − Σμ₁)/√(2 Σ(μ₂ − μ₁²)))`, composed with the
/// pointing error through [`cdf_compose_pointing`].
///
/// # Errors
///
/// As [`cdf_compose_pointing`].
pub fn cdf_high_l_clt(x: f64, model: &SystemModel) -> Result<f64> {
    let f = hf_cdf_clt(model)?;
    cdf_compose_pointing(x, model, f)
}

/// Coefficients of the five-moment approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveMomentFit {
    /// `Ω_0 … Ω_5`, moments of `h_F`.
    pub omega: [f64; 6],
    /// `a_1 … a_7` stored at indices `0 … 6`.
    pub a: [f64; 7],
    /// `ln a_1`, finite even when `a_1` underflows.
    pub ln_a1: f64,
}

impl FiveMomentFit {
    /// Fits the coefficients from the moments of `h_F`:
    ///
    /// `φ_i = Ω_i/Ω_{i−1}`,
    /// `a₃ = (4φ₄ − 9φ₃ + 6φ₂ − Ω₁)/(3φ₃ − φ₄ − 3φ₂ + Ω₁)`,
    /// `a₂ = a₃(φ₄ − 2φ₃ + φ₂)/2 + 2φ₄ − 3φ₃ + φ₂`,
    /// `a₆ = (a₃(φ₂ − Ω₁) + 2φ₂ − Ω₁)/a₂ − 3`,
    /// `a₇ = √((a₆ + 2)² − 4Ω₁(a₃ + 1)/a₂)`,
    /// `a₄ = (a₆ + a₇)/2`, `a₅ = (a₆ − a₇)/2`,
    /// `a₁ = Γ(a₃ + 1)/(a₂ Γ(a₄ + 1) Γ(a₅ + 1))`.
    ///
    /// # Errors
    ///
    /// [`Error::Degenerate`] when `a₇` is imaginary or a coefficient is not
    /// finite.
    pub fn new(model: &SystemModel) -> Result<Self> {
        let om = sum_moments(model, 5)?;
        let omega = [om[0], om[1], om[2], om[3], om[4], om[5]];
        Self::from_moments(omega)
    }

    /// Fits the coefficients from given moments `Ω_0 … Ω_5`.
    ///
    /// # Errors
    ///
    /// As [`FiveMomentFit::new`].
    pub fn from_moments(omega: [f64; 6]) -> Result<Self> {
        if omega.iter().any(|o| !(*o > 0.0 && o.is_finite())) {
            return Err(Error::Degenerate(format!(
                "moments must be positive, got {omega:?}"
            )));
        }
        let phi = |i: usize| omega[i] / omega[i - 1];
        let (p2, p3, p4) = (phi(2), phi(3), phi(4));
        let o1 = omega[1];
        let a3 = (4.0 * p4 - 9.0 * p3 + 6.0 * p2 - o1) / (3.0 * p3 - p4 - 3.0 * p2 + o1);
        let a2 = a3 / 2.0 * (p4 - 2.0 * p3 + p2) + 2.0 * p4 - 3.0 * p3 + p2;
        let a6 = (a3 * (p2 - o1) + 2.0 * p2 - o1) / a2 - 3.0;
        let disc = (a6 + 2.0).powi(2) - 4.0 * o1 * (a3 + 1.0) / a2;
        if !(disc >= 0.0) {
            return Err(Error::Degenerate(format!(
                "five-moment fit: a7 is imaginary ((a6+2)^2 - 4 Omega1 (a3+1)/a2 = {disc:.6e})"
            )));
        }
        let a7 = disc.sqrt();
        let a4 = 0.5 * (a6 + a7);
        let a5 = 0.5 * (a6 - a7);
        let (lg3, s3) = ln_gamma_signed(a3 + 1.0)?;
        let (lg4, s4) = ln_gamma_signed(a4 + 1.0)?;
        let (lg5, s5) = ln_gamma_signed(a5 + 1.0)?;
        let sign = s3 * s4 * s5 * a2.signum();
        if sign <= 0.0 {
            return Err(Error::Degenerate(
                "five-moment fit: a1 is not positive".into(),
            ));
        }
        let ln_a1 = lg3 - lg4 - lg5 - a2.abs().ln();
        let a = [ln_a1.exp(), a2, a3, a4, a5, a6, a7];
        if a[1..].iter().any(|v| !v.is_finite()) || !ln_a1.is_finite() {
            return Err(Error::Degenerate(format!(
                "five-moment fit: non-finite coefficients {a:?}"
            )));
        }
        Ok(Self { omega, a, ln_a1 })
    }

    /// Exponent `a_min = min{a₄ + 1, a₅ + 1, γ²}` of the high-SNDR law.
    pub fn a_min(&self, gamma_sq: f64) -> f64 {
        (self.a[3] + 1.0).min(self.a[4] + 1.0).min(gamma_sq)
    }
}

/// Meijer-G form of the five-moment CDF as a one-variable Fox-H spec,
/// with `a₁` carried by constant gamma factors so that it cannot underflow.
fn five_moment_spec(fit: &FiveMomentFit, g2: f64) -> FoxHSpec {
    let [_, a2, a3, a4, a5, _, _] = fit.a;
    let mut spec = FoxHSpec::new(1);
    spec.prefactor = g2;
    let g = &mut spec.inner_factors[0].gammas;
    // G^{3,1}_{3,4}(· | 1, a3+1, γ²+1; a4+1, a5+1, γ², 0) with kernel z^s.
    g.push(UniGamma::num(a4 + 1.0, -1.0));
    g.push(UniGamma::num(a5 + 1.0, -1.0));
    g.push(UniGamma::num(g2, -1.0));
    g.push(UniGamma::den(1.0, 1.0));
    g.push(UniGamma::num(0.0, 1.0));
    g.push(UniGamma::den(a3 + 1.0, -1.0));
    g.push(UniGamma::den(g2 + 1.0, -1.0));
    let constant = |offset: f64, location| GammaFactor {
        offset,
        coeffs: vec![0.0],
        location,
    };
    spec.outer_factors
        .push(constant(a3 + 1.0, Location::Numerator));
    spec.outer_factors
        .push(constant(a4 + 1.0, Location::Denominator));
    spec.outer_factors
        .push(constant(a5 + 1.0, Location::Denominator));
    // a1·a2 = Γ(a3+1)/(Γ(a4+1)Γ(a5+1)); a2 > 0 is checked by the fit.
    let _ = a2;
    spec
}

/// Five-moment approximation of the SNDR CDF,
///
/// `F(x) = a₁ a₂ γ² G^{3,1}_{3,4}(Υ/(A_o a₂) | 1, a₃+1, γ²+1; a₄+1, a₅+1, γ², 0)`.
///
/// # Errors
///
/// The errors of [`FiveMomentFit::new`] and of the Fox-H engine.
pub fn cdf_high_l_5fm(x: f64, model: &SystemModel) -> Result<f64> {
    let fit = FiveMomentFit::new(model)?;
    cdf_high_l_5fm_with(x, model, &fit)
}

/// [`cdf_high_l_5fm`] with precomputed coefficients.
///
/// # Errors
///
/// As [`cdf_high_l_5fm`].
pub fn cdf_high_l_5fm_with(x: f64, model: &SystemModel, fit: &FiveMomentFit) -> Result<f64> {
    let ups = upsilon(x, model)?;
    if ups == 0.0 {
        return Ok(0.0);
    }
    if ups == f64::INFINITY {
        return Ok(1.0);
    }
    let spec = five_moment_spec(fit, model.gamma_sq());
    let z = ups / (model.a_o() * fit.a[1]);
    let v = eval_foxh_with(&spec, &[z], &exact_options())?;
    Ok(v.value.clamp(0.0, 1.0))
}

/// Relative distance below which two residue exponents count as tied.
const TIE_TOL: f64 = 1e-9;

fn tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Leading high-SNDR term of the five-moment CDF,
///
/// `OP ≈ a₁a₂γ² R (Υ/(A_o a₂))^{a_min} / (Γ(a₃+1−a_min) Γ(a_min+1) Γ(γ²+1−a_min))`
///
/// where `R` is the residue factor of the pole at `a_min`:
/// `Γ(a₅−a₄)Γ(γ²−a₄−1)Γ(a₄+1)` for `a_min = a₄+1`,
/// `Γ(a₄−a₅)Γ(γ²−a₅−1)Γ(a₅+1)` for `a_min = a₅+1`, and
/// `Γ(a₄+1−γ²)Γ(a₅+1−γ²)Γ(γ²)` for `a_min = γ²`.
///
/// # Errors
///
/// [`Error::Degenerate`] when two of `{a₄+1, a₅+1, γ²}` tie at the minimum,
/// plus the errors of [`FiveMomentFit::new`].
pub fn op_high_snr(x: f64, model: &SystemModel) -> Result<f64> {
    let fit = FiveMomentFit::new(model)?;
    let ups = upsilon(x, model)?;
    if ups == f64::INFINITY {
        return Ok(1.0);
    }
    if ups == 0.0 {
        return Ok(0.0);
    }
    let g2 = model.gamma_sq();
    let [_, a2, a3, a4, a5, _, _] = fit.a;
    let amin = fit.a_min(g2);
    let cands = [a4 + 1.0, a5 + 1.0, g2];
    if cands.iter().filter(|&&c| tied(c, amin)).count() > 1 {
        return Err(Error::Degenerate(format!(
            "high-SNR residue: the minimum of a4+1 = {}, a5+1 = {}, gamma^2 = {g2} is not unique",
            a4 + 1.0,
            a5 + 1.0
        )));
    }
    let lg = |v: f64| ln_gamma_signed(v);
    let terms: Vec<(f64, f64)> = if tied(amin, a4 + 1.0) {
        vec![lg(a5 - a4)?, lg(g2 - a4 - 1.0)?, lg(a4 + 1.0)?]
    } else if tied(amin, a5 + 1.0) {
        vec![lg(a4 - a5)?, lg(g2 - a5 - 1.0)?, lg(a5 + 1.0)?]
    } else {
        vec![lg(a4 + 1.0 - g2)?, lg(a5 + 1.0 - g2)?, lg(g2)?]
    };
    let den = [lg(a3 + 1.0 - amin)?, lg(amin + 1.0)?, lg(g2 + 1.0 - amin)?];
    let mut ln = fit.ln_a1 + a2.ln() + g2.ln() + amin * (ups / (model.a_o() * a2)).ln();
    let mut sign = 1.0;
    for (l, s) in terms {
        ln += l;
        sign *= s;
    }
    for (l, s) in den {
        ln -= l;
        sign *= s;
    }
    Ok(sign * ln.exp())
}

/// High-SNR slope `G_d = a_min/2`.
///
/// # Errors
///
/// The errors of [`FiveMomentFit::new`].
pub fn high_snr_slope(model: &SystemModel) -> Result<f64> {
    Ok(FiveMomentFit::new(model)?.a_min(model.gamma_sq()) / 2.0)
}

/// Laplace transform `E[e^{−tX_ι}]` of one envelope product as the
/// one-variable integral `(2πi)^{−1} ∫ Γ(w) M̃_ι(−w) (t Π_ℓ√(2σ²))^{−w} dw`.
fn element_laplace(model: &SystemModel, i: usize, t: f64) -> Result<f64> {
    let x = t * model.element_scale(i);
    let mut spec = FoxHSpec::new(1);
    spec.arg_exponents[0] = -1.0;
    let vf = &mut spec.inner_factors[0];
    vf.gammas.push(UniGamma::num(0.0, 1.0));
    vf.mixtures.push(hop_mixture(&model.hop1[i], 0.0, -0.5));
    vf.mixtures.push(hop_mixture(&model.hop2[i], 0.0, -0.5));
    // Centre of the strip 0 < Re w < 2, away from both pole families.
    spec.contours = Some(vec![1.0]);
    let opts = FoxHOptions {
        rel_tol: 1e-7,
        abs_tol: 0.0,
        ..FoxHOptions::default()
    };
    Ok(eval_foxh_with(&spec, &[x], &opts)?.value)
}

/// Regularized moment `E[X_ι^k e^{−eX_ι}]`
/// `= Π_ℓ(2σ²)^{k/2} (2πi)^{−1} ∫ Γ(w) M̃_ι(k − w) (e Π_ℓ√(2σ²))^{−w} dw`.
fn element_regularized_moment(model: &SystemModel, i: usize, k: f64, e: f64) -> Result<f64> {
    let scale = model.element_scale(i);
    let mut spec = FoxHSpec::new(1);
    spec.arg_exponents[0] = -1.0;
    spec.prefactor = scale.powf(k);
    let vf = &mut spec.inner_factors[0];
    vf.gammas.push(UniGamma::num(0.0, 1.0));
    vf.mixtures.push(hop_mixture(&model.hop1[i], 0.5 * k, -0.5));
    vf.mixtures.push(hop_mixture(&model.hop2[i], 0.5 * k, -0.5));
    spec.contours = Some(vec![0.25]);
    Ok(eval_foxh_with(&spec, &[e * scale], &exact_options())?.value)
}

/// Negative moment `E[h_F^{−p}]` for `0 < p < 2L`.
///
/// `L = 1` uses the Mellin transform directly. `L = 2` uses the
/// one-variable integral
/// `Γ(p)^{−1} (2πi)^{−1} ∫ Γ(−ς) Γ(p+ς) M₁(ς) M₂(−p−ς) dς`, and larger
/// `L` the Laplace form `Γ(p)^{−1} ∫₀^∞ t^{p−1} Π_ι E[e^{−tX_ι}] dt`.
///
/// # Errors
///
/// [`Error::Divergence`] outside `0 < p < 2L`, and engine or quadrature
/// failures.
pub fn hf_negative_moment(model: &SystemModel, p: f64) -> Result<f64> {
    let l = model.l_elements();
    if !(p > 0.0 && p < 2.0 * l as f64) {
        return Err(Error::Divergence(format!(
            "E[h_F^-p] is finite only for 0 < p < 2L = {}, got p = {p}",
            2 * l
        )));
    }
    if l == 1 {
        return Ok(model.hop1[0].envelope_moment(-p)? * model.hop2[0].envelope_moment(-p)?);
    }
    if l == 2 {
        return hf_negative_moment_pair(model, p);
    }
    hf_negative_moment_laplace(model, p)
}

fn hf_negative_moment_pair(model: &SystemModel, p: f64) -> Result<f64> {
    let (s1, s2) = (model.element_scale(0), model.element_scale(1));
    let mut spec = FoxHSpec::new(1);
    spec.prefactor = s2.powf(-p) / statrs::function::gamma::gamma(p);
    let vf = &mut spec.inner_factors[0];
    vf.gammas.push(UniGamma::num(0.0, -1.0));
    vf.gammas.push(UniGamma::num(p, 1.0));
    vf.mixtures.push(hop_mixture(&model.hop1[0], 0.0, 0.5));
    vf.mixtures.push(hop_mixture(&model.hop2[0], 0.0, 0.5));
    vf.mixtures
        .push(hop_mixture(&model.hop1[1], -0.5 * p, -0.5));
    vf.mixtures
        .push(hop_mixture(&model.hop2[1], -0.5 * p, -0.5));
    Ok(eval_foxh_with(&spec, &[s1 / s2], &exact_options())?.value)
}

fn hf_negative_moment_laplace(model: &SystemModel, p: f64) -> Result<f64> {
    let groups = model.distinct_elements();
    let (mean, _) = hf_mean_variance(model)?;
    let decay = 2.0 * model.l_elements() as f64 - p;
    let integrand = |u: f64, t0: f64| -> Result<f64> {
        let t = t0 * u.exp();
        let mut acc = t.powf(p);
        for &(i, mult) in &groups {
            acc *= element_laplace(model, i, t)?.max(0.0).powi(mult as i32);
        }
        Ok(acc)
    };
    // Below t0 the transform is 1 to within t0·E[h_F] = 1e-9.
    let t0 = 1e-9 / mean;
    let head = t0.powf(p) / p;
    // Beyond t1 the integrand decays like t^{p−2L}; the tail is closed in
    // that form.
    let u_max = (1e9_f64.ln() + (1e12_f64.ln() / decay).min(200.0)).max(30.0);
    let mut failure = None;
    let body = integrate(
        |u| match integrand(u, t0) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        0.0,
        u_max,
        QuadOptions::new(0.0, 1e-6),
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    let tail = integrand(u_max, t0)? / decay;
    Ok((head + body + tail) / statrs::function::gamma::gamma(p))
}

/// `n`-th derivative at `a` by the Cauchy integral on a circle of radius `r`.
fn cauchy_derivative<F: Fn(Complex64) -> Result<Complex64>>(
    f: F,
    a: f64,
    r: f64,
    n: usize,
) -> Result<f64> {
    const NODES: usize = 64;
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..NODES {
        let th = 2.0 * PI * k as f64 / NODES as f64;
        let e = Complex64::from_polar(1.0, th);
        acc += f(a + r * e)? * Complex64::from_polar(1.0, -(n as f64) * th);
    }
    let fact: f64 = (1..=n).map(|v| v as f64).product();
    Ok((acc / NODES as f64).re * fact / r.powi(n as i32))
}

/// Leading high-SNDR term of the exact CDF.
///
/// For `γ² < 2L` the pointing pole dominates and
/// `F(x) ≈ E[h_F^{−γ²}] (Υ/A_o)^{γ²}`.
///
/// For `γ² > 2L` every variable sits on the double pole at `ς_ι = −2`
/// formed by the two hops, and the iterated residue is
///
/// `F(x) ≈ Σ_{S ⊆ {1…L}} G^{(|S|)}(−2L) Π_{ι∈S} ψ_ι Π_{ι∉S} ψ'_ι`,
///
/// `ψ_ι = φ_ι(−2) z_ι^{−2}`, `ψ'_ι = (φ'_ι(−2) + φ_ι(−2) ln z_ι) z_ι^{−2}`,
///
/// with `φ_ι(ς) = (ς+2)² Γ(−ς) M̃_ι(ς)` and
/// `G(s) = γ²/((γ²+s) Γ(1−s))`. Both are power laws in `Υ`, of exponent
/// `γ²` and `2L` (times powers of `ln Υ`) respectively.
///
/// # Errors
///
/// [`Error::Degenerate`] when `γ² = 2L`, [`Error::CostGuard`] for more than
/// 16 elements in the double-pole case, and the errors of
/// [`hf_negative_moment`].
pub fn cdf_high_sndr(x: f64, model: &SystemModel) -> Result<f64> {
    let ups = upsilon(x, model)?;
    if ups == f64::INFINITY {
        return Ok(1.0);
    }
    if ups == 0.0 {
        return Ok(0.0);
    }
    let l = model.l_elements();
    let g2 = model.gamma_sq();
    let two_l = 2.0 * l as f64;
    if tied(g2, two_l) {
        return Err(Error::Degenerate(format!(
            "high-SNDR residue: gamma^2 = {g2} coincides with the fading pole order 2L = {two_l}"
        )));
    }
    if g2 < two_l {
        let inv = hf_negative_moment(model, g2)?;
        return Ok(inv * (ups / model.a_o()).powf(g2));
    }
    if l > 16 {
        return Err(Error::CostGuard(format!(
            "the double-pole residue expands into 2^L terms; L = {l} exceeds 16"
        )));
    }
    let residues = double_pole_residues(model)?;
    let g_at =
        |s: Complex64| -> Result<Complex64> { Ok(g2 * (-ln_gamma(1.0 - s)?).exp() / (s + g2)) };
    let r_g = (0.5 * (g2 - two_l)).min(0.5);
    let g_derivs = (0..=l)
        .map(|n| cauchy_derivative(g_at, -two_l, r_g, n))
        .collect::<Result<Vec<f64>>>()?;
    let mut psi = Vec::with_capacity(l);
    let mut dpsi = Vec::with_capacity(l);
    let mut ln_zpow = 0.0;
    for i in 0..l {
        let z = model.a_o() * model.element_scale(i) / ups;
        let (phi, dphi) = residues[i];
        psi.push(phi);
        dpsi.push(dphi + phi * z.ln());
        ln_zpow += -2.0 * z.ln();
    }
    let mut total = 0.0;
    for mask in 0..(1_usize << l) {
        let mut term = g_derivs[mask.count_ones() as usize];
        for i in 0..l {
            term *= if mask & (1 << i) != 0 {
                psi[i]
            } else {
                dpsi[i]
            };
        }
        total += term;
    }
    Ok(total * ln_zpow.exp())
}

/// `(φ_ι(−2), φ'_ι(−2))` for every element.
fn double_pole_residues(model: &SystemModel) -> Result<Vec<(f64, f64)>> {
    let mut out: Vec<(f64, f64)> = vec![(0.0, 0.0); model.l_elements()];
    for (i, _) in model.distinct_elements() {
        let phi = |s: Complex64| -> Result<Complex64> {
            let u = s + 2.0;
            Ok(u * u * ln_gamma(-s)?.exp() * element_mellin(model, i, s)?)
        };
        let v = (
            cauchy_derivative(phi, -2.0, 0.5, 0)?,
            cauchy_derivative(phi, -2.0, 0.5, 1)?,
        );
        for j in 0..model.l_elements() {
            if model.hop1[j].params == model.hop1[i].params
                && model.hop2[j].params == model.hop2[i].params
            {
                out[j] = v;
            }
        }
    }
    Ok(out)
}

/// The high-SNDR sum with the per-term residue factors as printed in the
/// source analysis:
///
/// `Σ_{j} Π_ι Π_ℓ [c_{ι,ℓ,j} γ²/j!] Π_ι R_ι z_ι^{−ϖ_ι}
///   / (Γ(1 + Σ_ι ϖ_ι) Γ(γ² − ϖ_ι + 1))`,
///
/// `ϖ_ι = min{γ², 2+2j_{ι,1}, 2+2j_{ι,2}}`, with
/// `R_ι = Π_ℓ Γ(1+j_{ι,ℓ}−γ²/2) Γ(γ²)` when `ϖ_ι = γ²` and
/// `R_ι = Γ(j_{ι,2}−j_{ι,1}) Γ(2+2j_{ι,1}) Γ(γ²−2−2j_{ι,1})` (hops swapped
/// symmetrically) when a fading pole is smallest. Kept for comparison with
/// [`cdf_high_sndr`]; for `L = 1` it exceeds the leading residue by the
/// factor `γ²`, and any `γ² > 2` makes the `j₁ = j₂ = 0` term degenerate.
///
/// # Errors
///
/// [`Error::Degenerate`] at tied poles, [`Error::CostGuard`] for `L > 3`.
pub fn cdf_high_sndr_printed(x: f64, model: &SystemModel) -> Result<f64> {
    check_exact_size(model)?;
    let ups = upsilon(x, model)?;
    if ups == f64::INFINITY {
        return Ok(1.0);
    }
    if ups == 0.0 {
        return Ok(0.0);
    }
    let g2 = model.gamma_sq();
    let lg = |v: f64| ln_gamma_signed(v);
    // Per element: map from ϖ to the summed coefficient of z^{−ϖ}.
    let mut per_elem: Vec<Vec<(f64, f64)>> = Vec::new();
    for i in 0..model.l_elements() {
        let z = model.a_o() * model.element_scale(i) / ups;
        let w1 = &model.hop1[i].series.weights;
        let w2 = &model.hop2[i].series.weights;
        let mut acc: Vec<(f64, f64)> = Vec::new();
        for (j1, &c1) in w1.iter().enumerate() {
            for (j2, &c2) in w2.iter().enumerate() {
                if c1.abs() <= WEIGHT_FLOOR || c2.abs() <= WEIGHT_FLOOR {
                    continue;
                }
                let (f1, f2) = (j1 as f64, j2 as f64);
                let p1 = 2.0 + 2.0 * f1;
                let p2 = 2.0 + 2.0 * f2;
                let w = g2.min(p1).min(p2);
                if [g2, p1, p2].iter().filter(|&&c| tied(c, w)).count() > 1 {
                    return Err(Error::Degenerate(format!(
                        "printed high-SNDR residue: tied poles at varpi = {w} (j1 = {j1}, j2 = {j2}, gamma^2 = {g2})"
                    )));
                }
                let parts: Vec<(f64, f64)> = if tied(w, g2) {
                    vec![lg(1.0 + f1 - 0.5 * g2)?, lg(1.0 + f2 - 0.5 * g2)?, lg(g2)?]
                } else if tied(w, p1) {
                    vec![lg(f2 - f1)?, lg(p1)?, lg(g2 - p1)?]
                } else {
                    vec![lg(f1 - f2)?, lg(p2)?, lg(g2 - p2)?]
                };
                let (lgd, sd) = lg(g2 - w + 1.0)?;
                let mut ln = (c1.abs() * g2).ln() - statrs::function::gamma::ln_gamma(f1 + 1.0)
                    + (c2.abs() * g2).ln()
                    - statrs::function::gamma::ln_gamma(f2 + 1.0)
                    - lgd
                    - w * z.ln();
                let mut sign = c1.signum() * c2.signum() * sd;
                for (l, s) in parts {
                    ln += l;
                    sign *= s;
                }
                let term = sign * ln.exp();
                match acc.iter_mut().find(|(k, _)| tied(*k, w)) {
                    Some((_, v)) => *v += term,
                    None => acc.push((w, term)),
                }
            }
        }
        per_elem.push(acc);
    }
    // Combine across elements through the coupling 1/Γ(1 + Σϖ).
    let mut combos: Vec<(f64, f64)> = vec![(0.0, 1.0)];
    for acc in &per_elem {
        let mut next = Vec::with_capacity(combos.len() * acc.len());
        for &(ws, vs) in &combos {
            for &(w, v) in acc {
                next.push((ws + w, vs * v));
            }
        }
        combos = next;
    }
    let mut total = 0.0;
    for (ws, v) in combos {
        let (l, s) = lg(1.0 + ws)?;
        total += v * s * (-l).exp();
    }
    Ok(total)
}

/// Maximum mean received amplitude under optimal phases,
///
/// `E_opt = |h_L| γ² A_o/(γ² + 1) Σ_ι Π_ℓ E[R_{ι,ℓ}]`.
///
/// # Errors
///
/// Propagated from the envelope moments.
pub fn e_opt(model: &SystemModel) -> Result<f64> {
    let g2 = model.gamma_sq();
    let mus = product_term_moments(model, 1)?;
    let sum: f64 = mus.iter().map(|m| m[1]).sum();
    Ok(model.h_l * g2 * model.a_o() / (g2 + 1.0) * sum)
}

/// `E[h_FP²]` with `h_FP = h_F h_P`, from regularized Fox-H moments.
///
/// Each element contributes `E[X^k e^{−eX}]` (`k = 0, 1, 2`, `e` =
/// [`MOMENT_REGULARIZER`]) as a one-variable Mellin–Barnes integral. These
/// combine binomially into `E[h_F² e^{−e h_F}]`, which multiplies the
/// pointing moment `E[h_P²] = γ² A_o²/(γ² + 2)`.
///
/// # Errors
///
/// Engine failures.
pub fn e_hfp_sq(model: &SystemModel) -> Result<f64> {
    let mut cache: Vec<(usize, Vec<f64>)> = Vec::new();
    for (i, _) in model.distinct_elements() {
        let r = (0..=2)
            .map(|k| element_regularized_moment(model, i, k as f64, MOMENT_REGULARIZER))
            .collect::<Result<Vec<f64>>>()?;
        cache.push((i, r));
    }
    let terms: Vec<Vec<f64>> = (0..model.l_elements())
        .map(|i| {
            cache
                .iter()
                .find(|(j, _)| {
                    model.hop1[*j].params == model.hop1[i].params
                        && model.hop2[*j].params == model.hop2[i].params
                })
                .map(|(_, r)| r.clone())
                .expect("every element has a distinct representative")
        })
        .collect();
    let s = convolve_moments(&terms, 2);
    Ok(s[2] * misalign_moment(2.0, &model.mis)?)
}

/// `E[h_FP²] = Ω₂ E[h_P²]` from the exact moments.
///
/// # Errors
///
/// Propagated from [`sum_moments`].
pub fn e_hfp_sq_factorized(model: &SystemModel) -> Result<f64> {
    Ok(sum_moments(model, 2)?[2] * misalign_moment(2.0, &model.mis)?)
}

/// `Ḡ = h_L² E[h_FP²]`.
fn mean_gain(model: &SystemModel) -> Result<f64> {
    Ok(model.h_l * model.h_l * e_hfp_sq_factorized(model)?)
}

/// Jensen bound on the ergodic capacity with impaired hardware,
/// `log₂(1 + PḠ/(Pκ²Ḡ + N₀))`, bits/s/Hz.
///
/// # Errors
///
/// Propagated from the moments.
pub fn capacity_upper_nonideal(model: &SystemModel) -> Result<f64> {
    let s = model.power_w * mean_gain(model)?;
    Ok((1.0 + s / (model.hw.kappa_sq() * s + model.noise_w)).log2())
}

/// Jensen bound with ideal hardware, `log₂(1 + PḠ/N₀)`.
///
/// # Errors
///
/// Propagated from the moments.
pub fn capacity_upper_ideal(model: &SystemModel) -> Result<f64> {
    let s = model.power_w * mean_gain(model)?;
    Ok((1.0 + s / model.noise_w).log2())
}

/// Exact ergodic capacity with ideal hardware,
///
/// `C = (1/ln 2) ∫₀^∞ (1 − F(x))/(1 + x) dx`
///
/// with the exact SNR CDF, integrated in `u = ln x`.
///
/// # Errors
///
/// [`Error::CostGuard`] for `L > 2` and the errors of [`cdf_snr_exact`].
pub fn capacity_exact_ideal(model: &SystemModel) -> Result<f64> {
    if model.l_elements() > MAX_EXACT_CAPACITY_ELEMENTS {
        return Err(Error::CostGuard(format!(
            "exact capacity is limited to L <= {MAX_EXACT_CAPACITY_ELEMENTS}, got L = {}",
            model.l_elements()
        )));
    }
    let ideal = model.with_hardware(HardwareProfile::ideal());
    let mean_snr = ideal.power_w * mean_gain(&ideal)? / ideal.noise_w;
    let centre = mean_snr.ln();
    let u_lo = centre - 40.0;
    let mut u_hi = centre + 6.0;
    while 1.0 - cdf_snr_exact(u_hi.exp(), &ideal)?.value > 1e-10 {
        u_hi += 4.0;
        if u_hi > centre + 80.0 {
            return Err(Error::NonConvergence {
                what: "upper tail of the SNR distribution".into(),
                iterations: 20,
            });
        }
    }
    let mut failure = None;
    let body = integrate(
        |u| {
            let x = u.exp();
            match cdf_snr_exact(x, &ideal) {
                Ok(f) => (1.0 - f.value) * x / (1.0 + x),
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        },
        u_lo,
        u_hi,
        QuadOptions::new(1e-9, 1e-7),
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    // Below u_lo the integrand is e^u/(1+e^u) to within F(e^{u_lo}).
    let head = u_lo.exp().ln_1p();
    Ok((head + body) / LN_2)
}

/// CDF used by [`outage`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutageMethod {
    /// Exact Fox-H CDF (`L ≤ 3`).
    Exact,
    /// Pointing-error composition of a Monte-Carlo empirical `h_F` CDF.
    ComposedMc {
        /// Number of `h_F` draws.
        n_samples: usize,
        /// Stream seed.
        seed: u64,
    },
    /// Gaussian `h_F`.
    Clt,
    /// Five-moment Meijer-G approximation.
    FiveMoment,
    /// Leading high-SNDR residue.
    HighSndr,
}

/// Outage probability `P(γ < γ_th)` with the chosen CDF.
///
/// # Errors
///
/// Propagated from the chosen method.
pub fn outage(gamma_th: f64, model: &SystemModel, method: OutageMethod) -> Result<f64> {
    if upsilon(gamma_th, model)? == f64::INFINITY {
        return Ok(1.0);
    }
    match method {
        OutageMethod::Exact => Ok(cdf_sndr_exact(gamma_th, model)?.value),
        OutageMethod::ComposedMc { n_samples, seed } => {
            let hf = crate::montecarlo::sample_hf(model, n_samples, seed)?;
            cdf_compose_pointing_samples(gamma_th, model, &hf)
        }
        OutageMethod::Clt => cdf_high_l_clt(gamma_th, model),
        OutageMethod::FiveMoment => cdf_high_l_5fm(gamma_th, model),
        OutageMethod::HighSndr => Ok(cdf_high_sndr(gamma_th, model)?.min(1.0)),
    }
}

/// Outage probabilities over a grid of transmit powers, evaluated in
/// parallel and returned in grid order.
pub fn outage_curve(
    gamma_th: f64,
    model: &SystemModel,
    powers_w: &[f64],
    method: OutageMethod,
) -> Vec<Result<f64>> {
    powers_w
        .par_iter()
        .map(|&p| outage(gamma_th, &model.with_power(p)?, method))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thz_channel::db_to_linear;

    fn fig_hops(mean_db: f64) -> (FtrParams, FtrParams) {
        let mp = db_to_linear(mean_db);
        (
            FtrParams::from_mean_power(5.0, 5.0, 0.6, mp).unwrap(),
            FtrParams::from_mean_power(6.0, 7.0, 0.4, mp).unwrap(),
        )
    }

    fn model(l: usize, a_o: f64, g2: f64, kappa: f64, power_w: f64) -> SystemModel {
        let (h1, h2) = fig_hops(10.0);
        SystemModel::iid(
            l,
            h1,
            h2,
            Misalignment::from_gains(a_o, g2).unwrap(),
            PathGainSource::Fixed(1.0),
            HardwareProfile::new(kappa, kappa).unwrap(),
            power_w,
            1.0,
        )
        .unwrap()
    }

    /// `P(R₁R₂ < z)` for one element by quadrature over `R₁`.
    fn product_cdf(m: &SystemModel, z: f64) -> f64 {
        let (a, b) = (&m.hop1[0], &m.hop2[0]);
        integrate_to_inf(
            |r| {
                if r <= 0.0 {
                    return 0.0;
                }
                a.pdf_envelope(r).unwrap() * b.cdf_envelope(z / r).unwrap()
            },
            0.0,
            (2.0 * a.params.sigma_sq * (1.0 + a.params.k_ratio)).sqrt(),
            QuadOptions::new(1e-13, 1e-10),
        )
        .unwrap()
    }

    #[test]
    fn sndr_limits() {
        let m = model(1, 0.5, 2.0, 0.1, 1e12);
        let v = sndr(1.0, 1.0, &m);
        assert!((v - 1.0 / m.hw.kappa_sq()).abs() / (1.0 / m.hw.kappa_sq()) < 1e-6);
        let m0 = model(1, 0.5, 2.0, 0.0, 1.0);
        assert!((sndr(1.0, 1.0, &m0) - 1.0).abs() < 1e-15);
        assert!((m.hw.sndr_ceiling() - 50.0).abs() < 1e-12);
        assert_eq!(HardwareProfile::ideal().sndr_ceiling(), f64::INFINITY);
        assert!(HardwareProfile::new(-0.1, 0.0).is_err());
    }

    #[test]
    fn upsilon_edges() {
        let m = model(1, 0.5, 2.0, 0.1, 100.0);
        assert_eq!(upsilon(0.0, &m).unwrap(), 0.0);
        assert_eq!(upsilon(50.0, &m).unwrap(), f64::INFINITY);
        assert!(upsilon(-1.0, &m).is_err());
        let u = upsilon(1.0, &m).unwrap();
        assert!((u - (1.0f64 / (100.0 * 0.98)).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn exact_cdf_matches_composition_oracle_single_element() {
        let m = model(1, 0.054, 9.266, 0.1, 1.0);
        for &ups in &[0.05, 0.2, 0.5, 1.0, 2.0] {
            // Choose x so that Υ takes the listed value: x = Υ²P/(N₀ + κ²Υ²P).
            let s = ups * ups * m.power_w;
            let x = s / (m.noise_w + m.hw.kappa_sq() * s);
            let exact = cdf_sndr_exact(x, &m).unwrap();
            let oracle = cdf_compose_pointing(x, &m, |z| product_cdf(&m, z)).unwrap();
            let rel = (exact.value - oracle).abs() / oracle;
            assert!(
                rel < 1e-3,
                "Υ = {ups}: exact {} oracle {oracle}",
                exact.value
            );
            assert!(exact.clamp < 5e-3);
        }
    }

    #[test]
    fn exact_cdf_limits_and_monotonicity() {
        let m = model(2, 0.054, 9.266, 0.1, 100.0);
        assert_eq!(cdf_sndr_exact(0.0, &m).unwrap().value, 0.0);
        assert_eq!(cdf_sndr_exact(50.0, &m).unwrap().value, 1.0);
        let near = cdf_sndr_exact(50.0 * (1.0 - 1e-9), &m).unwrap().value;
        assert!(near > 0.999, "{near}");
        let tiny = cdf_sndr_exact(1e-12, &m).unwrap().value;
        assert!(tiny < 1e-6, "{tiny}");
        let mut prev = 0.0;
        for k in 0..8 {
            let x = 0.05 * 2f64.powi(k);
            let v = cdf_sndr_exact(x, &m).unwrap().value;
            assert!(v + 1e-9 >= prev, "x = {x}: {v} < {prev}");
            prev = v;
        }
    }

    #[test]
    fn ideal_hardware_consistency() {
        let m = model(1, 0.054, 9.266, 0.0, 10.0);
        let a = cdf_sndr_exact(0.8, &m).unwrap().value;
        let b = cdf_snr_exact(
            0.8,
            &m.with_hardware(HardwareProfile::new(0.1, 0.1).unwrap()),
        )
        .unwrap()
        .value;
        assert!((a - b).abs() <= 1e-9 * a);
    }

    #[test]
    fn pdf_integrates_to_cdf() {
        let m = model(1, 0.054, 9.266, 0.1, 10.0);
        let (x0, x1) = (0.2, 1.5);
        let integral = integrate(
            |x| pdf_sndr_exact(x, &m).unwrap(),
            x0,
            x1,
            QuadOptions::new(1e-10, 1e-8),
        )
        .unwrap();
        let diff = cdf_sndr_exact(x1, &m).unwrap().value - cdf_sndr_exact(x0, &m).unwrap().value;
        assert!(
            (integral - diff).abs() < 1e-5 * diff.max(1e-3),
            "{integral} vs {diff}"
        );
    }

    #[test]
    fn composition_trivial_cases() {
        let m = model(1, 0.2, 1.5, 0.0, 1.0);
        assert!((cdf_compose_pointing(1.0, &m, |_| 1.0).unwrap() - 1.0).abs() < 1e-9);
        // Step CDF at t: F = min(1, (Υ/(A_o t))^{γ²}).
        let t = 3.0;
        for &x in &[0.01, 0.1, 0.3] {
            let ups = upsilon(x, &m).unwrap();
            let want = (ups / (0.2 * t)).powf(1.5).min(1.0);
            let got = cdf_compose_pointing(x, &m, |z| if z >= t { 1.0 } else { 0.0 }).unwrap();
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
            let got_s = cdf_compose_pointing_samples(x, &m, &[t]).unwrap();
            assert!((got_s - want).abs() < 1e-14);
        }
    }

    #[test]
    fn moments_identities() {
        let m1 = model(1, 0.054, 9.266, 0.1, 1.0);
        let mu = product_term_moments(&m1, 5).unwrap();
        let om = sum_moments(&m1, 5).unwrap();
        for k in 0..=5 {
            assert!((om[k] - mu[0][k]).abs() <= 1e-14 * om[k]);
        }
        let m2 = model(2, 0.054, 9.266, 0.1, 1.0);
        let om2 = sum_moments(&m2, 2).unwrap();
        let want = 2.0 * mu[0][2] + 2.0 * mu[0][1] * mu[0][1];
        assert!((om2[2] - want).abs() <= 1e-13 * want);
        // mpmath values for 2σ²(1+K) = 10 dB.
        assert!((om[1] - 8.73232812415461).abs() / 8.73232812415461 < 1e-10);
        assert!((om[4] - 22919.0929705213).abs() / 22919.0929705213 < 1e-9);
    }

    #[test]
    fn clt_median() {
        let m = model(20, 0.01, 0.25, 0.1, 1.0);
        let (mean, _) = hf_mean_variance(&m).unwrap();
        let f = hf_cdf_clt(&m).unwrap();
        assert!((f(mean) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn five_moment_matches_meijer_oracle() {
        // mpmath reference: a1 a2 γ² G^{3,1}_{3,4} for L = 20, γ² = 0.25, A_o = 0.01.
        let m = model(20, 0.01, 0.25, 0.0, 1.0);
        let fit = FiveMomentFit::new(&m).unwrap();
        assert!((fit.a[1] - 2.23779244816).abs() / 2.23779244816 < 1e-5);
        assert!((fit.a[2] - 73.954210441).abs() / 73.954210441 < 1e-5);
        assert!((fit.a[3] - 119.998287984).abs() / 119.998287984 < 1e-5);
        assert!((fit.a[4] - 47.3456102205).abs() / 47.3456102205 < 1e-5);
        for &(ups, want) in &[
            (0.1, 0.490370700822),
            (0.5, 0.733275229821),
            (1.0, 0.872015739469),
            (1.5, 0.962859161446),
        ] {
            let x = ups * ups;
            let got = cdf_high_l_5fm_with(x, &m, &fit).unwrap();
            assert!((got - want).abs() < 2e-5, "Υ = {ups}: {got} vs {want}");
        }
        let clt = cdf_high_l_clt(0.25, &m).unwrap();
        assert!((clt - 0.733313579265).abs() < 1e-6, "{clt}");
    }

    #[test]
    fn five_moment_limits() {
        let m = model(20, 0.01, 0.25, 0.1, 1.0);
        assert_eq!(cdf_high_l_5fm(0.0, &m).unwrap(), 0.0);
        assert_eq!(cdf_high_l_5fm(50.0, &m).unwrap(), 1.0);
        let lo = cdf_high_l_5fm(1e-30, &m).unwrap();
        assert!(lo < 1e-3, "{lo}");
        let hi = cdf_high_l_5fm(50.0 * (1.0 - 1e-12), &m).unwrap();
        assert!(hi > 0.999, "{hi}");
    }

    #[test]
    fn five_moment_degenerate_fit() {
        // Moments of a point mass give a zero denominator in a3.
        let r = FiveMomentFit::from_moments([1.0, 2.0, 4.0, 8.0, 16.0, 32.0]);
        assert!(r.is_err());
    }

    #[test]
    fn high_snr_slope_and_value() {
        let m = model(20, 0.01, 0.25, 0.1, 1.0);
        assert!((high_snr_slope(&m).unwrap() - 0.125).abs() < 1e-15);
        // Leading term approaches the 5FM CDF as Υ shrinks.
        let x = 1e-14;
        let a = op_high_snr(x, &m).unwrap();
        let b = cdf_high_l_5fm(x, &m).unwrap();
        assert!((a - b).abs() / b < 0.02, "{a} vs {b}");
    }

    #[test]
    fn high_sndr_single_element_small_gamma() {
        let m = model(1, 0.054, 0.8, 0.0, 1.0);
        let x = 1e-10;
        let asym = cdf_high_sndr(x, &m).unwrap();
        let exact = cdf_sndr_exact(x, &m).unwrap().value;
        assert!((asym - exact).abs() / exact < 0.01, "{asym} vs {exact}");
        let printed = cdf_high_sndr_printed(x, &m).unwrap();
        assert!((printed / asym - 0.8).abs() < 1e-6, "{printed} vs {asym}");
        // Power law: doubling P scales by 2^{−γ²/2}.
        let m2 = m.with_power(2.0).unwrap();
        let r = cdf_high_sndr(x, &m2).unwrap() / asym;
        assert!((r - 2f64.powf(-0.4)).abs() < 1e-12);
    }

    #[test]
    fn high_sndr_double_pole_single_element() {
        let m = model(1, 0.054, 9.266, 0.0, 1.0);
        let x = 1e-6;
        let asym = cdf_high_sndr(x, &m).unwrap();
        let exact = cdf_sndr_exact(x, &m).unwrap().value;
        assert!((asym - exact).abs() / exact < 0.01, "{asym} vs {exact}");
        assert!(matches!(
            cdf_high_sndr_printed(x, &m),
            Err(Error::Degenerate(_))
        ));
        let tie = model(1, 0.054, 2.0, 0.0, 1.0);
        assert!(matches!(cdf_high_sndr(x, &tie), Err(Error::Degenerate(_))));
    }

    #[test]
    fn negative_moment_routes_agree() {
        let m = model(2, 0.054, 1.0, 0.0, 1.0);
        let a = hf_negative_moment_pair(&m, 1.3).unwrap();
        let b = hf_negative_moment_laplace(&m, 1.3).unwrap();
        assert!((a - b).abs() / a < 1e-5, "{a} vs {b}");
        assert!(hf_negative_moment(&m, 4.0).is_err());
        // L = 1: the Mellin transform at −p directly.
        let m1 = m.with_elements(1).unwrap();
        let c = hf_negative_moment(&m1, 0.7).unwrap();
        let d = hf_negative_moment_laplace(&m1, 0.7).unwrap();
        assert!((c - d).abs() / c < 1e-5, "{c} vs {d}");
    }

    #[test]
    fn e_opt_properties() {
        let m = model(1, 1.0, 1e12, 0.0, 1.0);
        let mu = product_term_moments(&m, 1).unwrap()[0][1];
        assert!((e_opt(&m).unwrap() / mu - 1.0).abs() < 1e-11);
        let m2 = model(2, 0.3, 2.0, 0.0, 1.0);
        let m4 = m2.with_elements(4).unwrap();
        assert!((e_opt(&m4).unwrap() / e_opt(&m2).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn regularized_power_moment_matches_factorization() {
        for l in [1, 2] {
            let m = model(l, 0.054, 9.266, 0.0, 1.0);
            let a = e_hfp_sq(&m).unwrap();
            let b = e_hfp_sq_factorized(&m).unwrap();
            assert!((a - b).abs() / b < 1e-4, "L = {l}: {a} vs {b}");
        }
    }

    #[test]
    fn capacity_bounds_and_ordering() {
        let m = model(1, 0.054, 9.266, 0.2, 1e3);
        let up = capacity_upper_nonideal(&m).unwrap();
        let ceiling = (1.0 + 1.0 / m.hw.kappa_sq()).log2();
        assert!(up < ceiling);
        let big = capacity_upper_nonideal(&m.with_power(1e30).unwrap()).unwrap();
        assert!((big - ceiling).abs() < 1e-9);
        let ideal = model(1, 0.054, 9.266, 0.0, 1e3);
        let mut prev = 0.0;
        for p in [1e2, 1e3, 1e4] {
            let mm = ideal.with_power(p).unwrap();
            let c = capacity_exact_ideal(&mm).unwrap();
            assert!(c <= capacity_upper_ideal(&mm).unwrap());
            assert!(c > prev);
            prev = c;
        }
        let l3 = model(3, 0.054, 9.266, 0.0, 1.0);
        assert!(matches!(
            capacity_exact_ideal(&l3),
            Err(Error::CostGuard(_))
        ));
    }

    #[test]
    fn exact_guard_on_large_l() {
        let m = model(4, 0.054, 9.266, 0.0, 1.0);
        assert!(matches!(cdf_sndr_exact(1.0, &m), Err(Error::CostGuard(_))));
    }

    #[test]
    fn outage_above_ceiling_is_certain() {
        let m = model(20, 0.01, 0.25, 0.1, 1.0);
        assert_eq!(outage(60.0, &m, OutageMethod::Clt).unwrap(), 1.0);
    }
}
