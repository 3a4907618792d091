//! Deterministic THz channel gains and the pointing-error coefficient.
//!
//! Path gain `h_L = h_FL·h_AL` combines Friis propagation over the two RIS
//! hops with molecular absorption in the 275–400 GHz band. The misalignment
//! coefficient `h_P ∈ [0, A_o]` has the power-law density
//! `f(x) = γ² A_o^{−γ²} x^{γ²−1}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::specfun::erf;

/// Speed of light used throughout the link budget, m/s.
pub const SPEED_OF_LIGHT: f64 = 3e8;
/// Lower edge of the absorption model's band, Hz.
pub const BAND_MIN_HZ: f64 = 275e9;
/// Upper edge of the absorption model's band, Hz.
pub const BAND_MAX_HZ: f64 = 400e9;

/// Centre of the first water-vapour line, cm⁻¹.
const C1: f64 = 10.835;
/// Centre of the second water-vapour line, cm⁻¹.
const C2: f64 = 12.664;
const P1: f64 = 5.54e-37;
const P2: f64 = -3.94e-25;
const P3: f64 = 9.06e-14;
const P4: f64 = -6.36e-3;

/// Atmospheric state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Environment {
    /// Temperature in °C.
    pub temperature_c: f64,
    /// Pressure in Pa.
    pub pressure_pa: f64,
    /// Relative humidity in `[0, 1]`.
    pub rel_humidity: f64,
}

impl Default for Environment {
    fn default() -> Self {
        Self {
            temperature_c: 27.0,
            pressure_pa: 101_325.0,
            rel_humidity: 0.5,
        }
    }
}

impl Environment {
    /// Checks pressure, humidity and the temperature pole at −240.97 °C.
    pub fn validate(&self) -> Result<()> {
        if !(self.pressure_pa > 0.0 && self.pressure_pa.is_finite()) {
            return Err(Error::invalid("pressure_pa", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.rel_humidity) {
            return Err(Error::invalid("rel_humidity", "must lie in [0, 1]"));
        }
        if self.temperature_c == -240.97 {
            return Err(Error::Pole("vapour formula at T = -240.97 °C".into()));
        }
        if !(self.temperature_c > -240.97 && self.temperature_c.is_finite()) {
            return Err(Error::invalid("temperature_c", "must exceed -240.97 °C"));
        }
        Ok(())
    }
}

/// Link geometry and antenna gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkGeometry {
    /// Carrier frequency, Hz.
    pub freq_hz: f64,
    /// Source–RIS distance, m.
    pub d1_m: f64,
    /// RIS–destination distance, m.
    pub d2_m: f64,
    /// Linear transmit antenna gain.
    pub gt: f64,
    /// Linear receive antenna gain.
    pub gr: f64,
}

impl LinkGeometry {
    /// Checks the band and positivity constraints.
    pub fn validate(&self) -> Result<()> {
        check_band(self.freq_hz)?;
        for (name, v) in [
            ("d1_m", self.d1_m),
            ("d2_m", self.d2_m),
            ("gt", self.gt),
            ("gr", self.gr),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be positive"));
            }
        }
        Ok(())
    }
}

fn check_band(freq_hz: f64) -> Result<()> {
    if !(BAND_MIN_HZ..=BAND_MAX_HZ).contains(&freq_hz) {
        return Err(Error::OutOfBand(freq_hz));
    }
    Ok(())
}

/// Pointing-error model with its derived quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Misalignment {
    /// Detector radius `a`, m.
    pub detect_radius_a: f64,
    /// Beam radius `w_d`, m.
    pub beam_radius_wd: f64,
    /// Jitter standard deviation `σ_S`, m.
    pub jitter_sigma_s: f64,
    /// `u = √π·a/(√2·w_d)`.
    pub u: f64,
    /// Collected fraction at zero displacement, `A_o = erf(u)²`.
    pub a_o: f64,
    /// `γ² = w_eq²/(4σ_S²)`.
    pub gamma_sq: f64,
    /// Equivalent beam width squared, m².
    pub w_eq_sq: f64,
}

impl Misalignment {
    /// Derives `u`, `A_o`, `w_eq²` and `γ²` from the physical parameters.
    pub fn new(detect_radius_a: f64, beam_radius_wd: f64, jitter_sigma_s: f64) -> Result<Self> {
        for (name, v) in [
            ("detect_radius_a", detect_radius_a),
            ("beam_radius_wd", beam_radius_wd),
            ("jitter_sigma_s", jitter_sigma_s),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be positive"));
            }
        }
        let u = PI.sqrt() * detect_radius_a / (2.0_f64.sqrt() * beam_radius_wd);
        let eu = erf(u);
        let w_eq_sq = beam_radius_wd * beam_radius_wd * PI.sqrt() * eu / (2.0 * u * (-u * u).exp());
        Ok(Self {
            detect_radius_a,
            beam_radius_wd,
            jitter_sigma_s,
            u,
            a_o: eu * eu,
            gamma_sq: w_eq_sq / (4.0 * jitter_sigma_s * jitter_sigma_s),
            w_eq_sq,
        })
    }

    /// A model specified directly by `A_o` and `γ²`, without geometry.
    pub fn from_gains(a_o: f64, gamma_sq: f64) -> Result<Self> {
        if !(a_o > 0.0 && a_o <= 1.0) {
            return Err(Error::invalid("a_o", "must lie in (0, 1]"));
        }
        if !(gamma_sq > 0.0 && gamma_sq.is_finite()) {
            return Err(Error::invalid("gamma_sq", "must be positive"));
        }
        Ok(Self {
            detect_radius_a: f64::NAN,
            beam_radius_wd: f64::NAN,
            jitter_sigma_s: f64::NAN,
            u: f64::NAN,
            a_o,
            gamma_sq,
            w_eq_sq: f64::NAN,
        })
    }
}

/// Water-vapour mixing parameter `v`.
///
/// `v = φ(0.06116/p + 2.1148·10⁻⁷)·exp(17.502T/(240.97+T))` with `T` in °C.
/// The constants belong to pressure in hPa and humidity in percent, so the
/// Pa and `[0, 1]` inputs of [`Environment`] are converted first.
///
/// # Errors
///
/// [`Error::Pole`] at `T = −240.97 °C` and parameter errors from
/// [`Environment::validate`].
pub fn vapor_param(env: &Environment) -> Result<f64> {
    env.validate()?;
    let p_hpa = env.pressure_pa / 100.0;
    let phi_pct = env.rel_humidity * 100.0;
    let t = env.temperature_c;
    Ok(phi_pct * (0.061_16 / p_hpa + 2.1148e-7) * (17.502 * t / (240.97 + t)).exp())
}

/// Molecular absorption coefficient `κ_α(f)` in 1/m.
///
/// Two Lorentzian water lines in wavenumber `f/(100c)` (cm⁻¹) plus a cubic
/// in `f` (Hz).
///
/// # Errors
///
/// [`Error::OutOfBand`] outside 275–400 GHz.
pub fn absorption_coefficient(freq_hz: f64, env: &Environment) -> Result<f64> {
    check_band(freq_hz)?;
    let v = vapor_param(env)?;
    let a = 0.2205 * v * (0.1303 * v + 0.0294);
    let b = (0.4093 * v + 0.0925).powi(2);
    let c = 2.014 * v * (0.1702 * v + 0.0303);
    let d = (0.537 * v + 0.0956).powi(2);
    let wn = freq_hz / (100.0 * SPEED_OF_LIGHT);
    let f = freq_hz;
    Ok(a / (b + (wn - C1).powi(2))
        + c / (d + (wn - C2).powi(2))
        + ((P1 * f + P2) * f + P3) * f
        + P4)
}

/// Friis gain of the cascaded link, `c²√(GtGr)/((4πf)²d₁d₂)`.
///
/// # Errors
///
/// Parameter errors from [`LinkGeometry::validate`].
pub fn propagation_gain(geom: &LinkGeometry) -> Result<f64> {
    geom.validate()?;
    Ok(friis(geom))
}

fn friis(geom: &LinkGeometry) -> f64 {
    let k = 4.0 * PI * geom.freq_hz;
    SPEED_OF_LIGHT * SPEED_OF_LIGHT * (geom.gt * geom.gr).sqrt() / (k * k * geom.d1_m * geom.d2_m)
}

/// Absorption gain `exp(−κ_α(f)(d₁+d₂)/2)`.
///
/// # Errors
///
/// As [`absorption_coefficient`].
pub fn absorption_gain(geom: &LinkGeometry, env: &Environment) -> Result<f64> {
    let kappa = absorption_coefficient(geom.freq_hz, env)?;
    Ok((-0.5 * kappa * (geom.d1_m + geom.d2_m)).exp())
}

/// Path gain `h_L = h_FL·h_AL`.
///
/// # Errors
///
/// As [`propagation_gain`] and [`absorption_coefficient`].
pub fn path_gain(geom: &LinkGeometry, env: &Environment) -> Result<f64> {
    Ok(propagation_gain(geom)? * absorption_gain(geom, env)?)
}

fn check_support(x: f64, mis: &Misalignment) -> Result<()> {
    if !(x >= 0.0 && x <= mis.a_o) {
        return Err(Error::Domain(format!(
            "misalignment gain {x} outside [0, A_o = {}]",
            mis.a_o
        )));
    }
    Ok(())
}

/// Density of `h_P`.
///
/// # Errors
///
/// [`Error::Domain`] outside `[0, A_o]`.
pub fn misalign_pdf(x: f64, mis: &Misalignment) -> Result<f64> {
    check_support(x, mis)?;
    let g = mis.gamma_sq;
    Ok(g * mis.a_o.powf(-g) * x.powf(g - 1.0))
}

/// Distribution function of `h_P`, `(x/A_o)^{γ²}`.
///
/// # Errors
///
/// [`Error::Domain`] outside `[0, A_o]`.
pub fn misalign_cdf(x: f64, mis: &Misalignment) -> Result<f64> {
    check_support(x, mis)?;
    Ok((x / mis.a_o).powf(mis.gamma_sq))
}

/// Moment `E[h_P^s] = γ²/(γ²+s)·A_o^s`.
///
/// # Errors
///
/// [`Error::Divergence`] for `s ≤ −γ²`.
pub fn misalign_moment(s: f64, mis: &Misalignment) -> Result<f64> {
    if !(s > -mis.gamma_sq) {
        return Err(Error::Divergence(format!(
            "E[h_P^s] diverges for s = {s} <= -gamma^2 = {}",
            -mis.gamma_sq
        )));
    }
    Ok(mis.gamma_sq / (mis.gamma_sq + s) * mis.a_o.powf(s))
}

/// Inverse-CDF draw `A_o·U^{1/γ²}` from a caller-owned stream.
pub fn misalign_draw<R: Rng + ?Sized>(mis: &Misalignment, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    mis.a_o * u.powf(1.0 / mis.gamma_sq)
}

/// `n` draws of `h_P` from a ChaCha stream seeded with `seed`.
pub fn misalign_sample(mis: &Misalignment, seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| misalign_draw(mis, &mut rng)).collect()
}

/// Decibel value to linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Linear power ratio to decibels.
pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}
