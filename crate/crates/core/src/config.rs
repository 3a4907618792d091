//! JSON run configuration for the command-line front end.
//!
//! Every section is optional and falls back to the reference setting:
//! 27 °C, 101325 Pa, 50% relative humidity, 300 GHz, `G_t = G_r = 40` dBi,
//! detector radius `a = 0.01` m, beam radius `w_d = 6a`, jitter
//! `σ_S = 0.01` m. Unknown keys are rejected in every section.
//!
//! Power-like quantities are [`Level`]s: either a bare number (linear) or a
//! string with an explicit unit suffix, `"20 dB"`, `"40 dBi"`, `"30 dBW"` or
//! `"0 dBm"`, converted to linear values on load.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::ftr::FtrParams;
use crate::perf_metrics::{HardwareProfile, PathGainSource, SystemModel};
use crate::ris_sio::{RisConfig, SwarmConfig};
use crate::thz_channel::{db_to_linear, linear_to_db, Environment, LinkGeometry, Misalignment};

/// A power, gain or ratio held as a linear value.
///
/// The decibel figure it was written with is kept so grids built from
/// `"5 dB"` steps stay exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Level {
    linear: f64,
    db: Option<f64>,
}

impl Level {
    /// A linear value.
    pub fn linear(v: f64) -> Self {
        Self {
            linear: v,
            db: None,
        }
    }

    /// A value in dB (or dBW for powers).
    pub fn db(db: f64) -> Self {
        Self {
            linear: db_to_linear(db),
            db: Some(db),
        }
    }

    /// Linear value (W for powers).
    pub fn value(&self) -> f64 {
        self.linear
    }

    /// Decibel value, `10 log₁₀` of the linear value unless given in dB.
    pub fn in_db(&self) -> f64 {
        self.db.unwrap_or_else(|| linear_to_db(self.linear))
    }

    /// Parses `"<number> <unit>"` with unit `dB`, `dBi`, `dBW` or `dBm`.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidParameter`] naming `field` for a missing or unknown
    /// unit or an unparsable number.
    pub fn parse(s: &str, field: &str) -> Result<Self> {
        let t = s.trim();
        let split = t
            .find(|c: char| c.is_ascii_alphabetic() && c != 'e' && c != 'E')
            .ok_or_else(|| {
                Error::invalid(
                    field,
                    format!("`{s}` needs a unit suffix (dB, dBi, dBW, dBm)"),
                )
            })?;
        let (num, unit) = t.split_at(split);
        let x: f64 = num
            .trim()
            .parse()
            .map_err(|_| Error::invalid(field, format!("`{s}` is not a number with a unit")))?;
        let db = match unit.trim() {
            "dB" | "dBi" | "dBW" => x,
            "dBm" => x - 30.0,
            other => return Err(Error::invalid(field, format!("unknown unit `{other}`"))),
        };
        if !db.is_finite() {
            return Err(Error::invalid(field, "must be finite"));
        }
        Ok(Self::db(db))
    }
}

impl Serialize for Level {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.db {
            Some(db) => s.serialize_str(&format!("{db} dB")),
            None => s.serialize_f64(self.linear),
        }
    }
}

impl<'de> Deserialize<'de> for Level {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct LevelVisitor;
        impl Visitor<'_> for LevelVisitor {
            type Value = Level;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a linear number or a string such as \"20 dB\" or \"30 dBW\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Level, E> {
                Ok(Level::linear(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Level, E> {
                Ok(Level::linear(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Level, E> {
                Ok(Level::linear(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Level, E> {
                Level::parse(v, "level").map_err(|e| E::custom(e.to_string()))
            }
        }
        d.deserialize_any(LevelVisitor)
    }
}

/// An evenly spaced grid in dB, or an explicit list of levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    /// `start, start + step, …` up to `stop` inclusive.
    Range {
        /// First point.
        start: Level,
        /// Last point.
        stop: Level,
        /// Spacing in dB.
        step: Level,
    },
    /// Explicit points.
    Values(Vec<Level>),
}

impl Grid {
    /// Grid points in dB.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidParameter`] naming `field` for an empty or
    /// non-increasing range.
    pub fn points_db(&self, field: &str) -> Result<Vec<f64>> {
        match self {
            Grid::Values(v) => {
                if v.is_empty() {
                    return Err(Error::invalid(field, "needs at least one value"));
                }
                Ok(v.iter().map(Level::in_db).collect())
            }
            Grid::Range { start, stop, step } => {
                let (a, b, s) = (start.in_db(), stop.in_db(), step.in_db());
                if !(s > 0.0) || b < a {
                    return Err(Error::invalid(
                        field,
                        "need stop >= start and a positive step",
                    ));
                }
                let n = ((b - a) / s + 1e-9).floor() as usize;
                if n > 100_000 {
                    return Err(Error::invalid(field, "more than 100000 points"));
                }
                Ok((0..=n).map(|i| a + i as f64 * s).collect())
            }
        }
    }
}

/// Atmospheric state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvironmentSection {
    /// Temperature, °C.
    pub temperature_c: f64,
    /// Pressure, Pa.
    pub pressure_pa: f64,
    /// Relative humidity in `[0, 1]`.
    pub rel_humidity: f64,
}

impl Default for EnvironmentSection {
    fn default() -> Self {
        let e = Environment::default();
        Self {
            temperature_c: e.temperature_c,
            pressure_pa: e.pressure_pa,
            rel_humidity: e.rel_humidity,
        }
    }
}

/// Carrier, distances and antenna gains, or a fixed path gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    /// Carrier frequency, GHz.
    pub freq_ghz: f64,
    /// Source–RIS distance, m.
    pub d1_m: f64,
    /// RIS–destination distance, m.
    pub d2_m: f64,
    /// Transmit antenna gain.
    pub gt: Level,
    /// Receive antenna gain.
    pub gr: Level,
    /// Fixed path-gain amplitude `|h_L|`, overriding the geometry.
    pub h_l: Option<f64>,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self {
            freq_ghz: 300.0,
            d1_m: 10.0,
            d2_m: 10.0,
            gt: Level::db(40.0),
            gr: Level::db(40.0),
            h_l: None,
        }
    }
}

/// Pointing error, physical or as `(A_o, γ²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct MisalignmentSection {
    /// Detector radius `a`, m.
    pub detect_radius_m: Option<f64>,
    /// Beam radius `w_d`, m.
    pub beam_radius_m: Option<f64>,
    /// Jitter standard deviation `σ_S`, m.
    pub jitter_sigma_m: Option<f64>,
    /// Collected fraction `A_o`.
    pub a_o: Option<f64>,
    /// Pointing ratio `γ²`.
    pub gamma_sq: Option<f64>,
}

/// FTR law of one hop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HopSection {
    /// Specular-to-diffuse ratio `K`.
    pub k: f64,
    /// Fluctuation severity `m`.
    pub m: f64,
    /// Specular imbalance `Δ`.
    pub delta: f64,
    /// Mean power `2σ²(1 + K)`.
    #[serde(default = "unit_level")]
    pub mean_power: Level,
}

fn unit_level() -> Level {
    Level::linear(1.0)
}

impl HopSection {
    fn params(&self, field: &str) -> Result<FtrParams> {
        FtrParams::from_mean_power(self.k, self.m, self.delta, self.mean_power.value())
            .map_err(|e| prefix(field, e))
    }
}

/// Hop laws of one element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementSection {
    /// Source–RIS hop.
    pub hop1: HopSection,
    /// RIS–destination hop.
    pub hop2: HopSection,
}

/// Surface size and hop laws: a shared template or one entry per element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HopsSection {
    /// Number of elements `L` for the shared template.
    pub l_elements: usize,
    /// Extra surface sizes swept by the curve commands.
    pub l_values: Option<Vec<usize>>,
    /// Shared source–RIS law.
    pub hop1: HopSection,
    /// Shared RIS–destination law.
    pub hop2: HopSection,
    /// Per-element laws, overriding the template and `l_elements`.
    pub elements: Option<Vec<ElementSection>>,
}

impl Default for HopsSection {
    fn default() -> Self {
        Self {
            l_elements: 2,
            l_values: None,
            hop1: HopSection {
                k: 5.0,
                m: 5.0,
                delta: 0.6,
                mean_power: Level::db(20.0),
            },
            hop2: HopSection {
                k: 6.0,
                m: 7.0,
                delta: 0.4,
                mean_power: Level::db(20.0),
            },
            elements: None,
        }
    }
}

/// Hardware impairments, with an optional `κ_S = κ_D = κ` sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct HardwareSection {
    /// Transmitter level `κ_S`.
    pub kappa_s: f64,
    /// Receiver level `κ_D`.
    pub kappa_d: f64,
    /// Values of `κ` swept by the curve commands.
    pub kappa_sweep: Option<Vec<f64>>,
}

/// Outage threshold and evaluation methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutageSection {
    /// SNDR threshold `γ_th`.
    pub threshold: Level,
    /// Threshold sweep at the first power of the power grid, replacing the
    /// power sweep.
    pub threshold_grid: Option<Grid>,
    /// Methods among `exact`, `high-sndr`, `clt`, `5fm`, `mc`.
    pub methods: Vec<String>,
}

impl Default for OutageSection {
    fn default() -> Self {
        Self {
            threshold: Level::db(0.5),
            threshold_grid: None,
            methods: ALL_METHODS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Outage methods known to the `op-curve` command, in column order.
pub const ALL_METHODS: [&str; 5] = ["exact", "high-sndr", "clt", "5fm", "mc"];

/// Swarm optimizer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    /// Number of elements.
    pub l_elements: usize,
    /// Phase steps `Δθ` in degrees, 0 for continuous phases.
    pub phase_steps_deg: Vec<f64>,
    /// Independent channel realizations per step.
    pub trials: usize,
    /// Ratio to the continuous bound that counts as converged.
    pub target_ratio: f64,
    /// Initial swarm size.
    pub n_begin: usize,
    /// Final swarm size.
    pub n_end: usize,
    /// Initial inertia weight.
    pub omega_begin: f64,
    /// Final inertia weight.
    pub omega_end: f64,
    /// Personal-best weight.
    pub c1: f64,
    /// Global-best weight.
    pub c2: f64,
    /// Local-best weight.
    pub c3: f64,
    /// Velocity bound in radians, default `2Δθ` (`π/5` when continuous).
    pub v_max: Option<f64>,
    /// Iterations `Max`.
    pub max_iter: usize,
    /// Standard deviation of one noisy fitness reading.
    pub meas_noise_sigma: f64,
    /// Readings averaged per measurement.
    pub meas_avg_count: usize,
    /// Also run the plain PSO baseline.
    pub compare_pso: bool,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let s = SwarmConfig::default();
        Self {
            l_elements: 50,
            phase_steps_deg: vec![18.0],
            trials: 10,
            target_ratio: 0.9,
            n_begin: s.n_begin,
            n_end: s.n_end,
            omega_begin: s.omega_begin,
            omega_end: s.omega_end,
            c1: s.c1,
            c2: s.c2,
            c3: s.c3,
            v_max: None,
            max_iter: s.max_iter,
            meas_noise_sigma: 0.0,
            meas_avg_count: 1,
            compare_pso: true,
        }
    }
}

impl OptimizerSection {
    /// Surface description for step `step_deg`.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidParameter`] naming `optimizer.phase_steps_deg`.
    pub fn ris(&self, step_deg: f64) -> Result<RisConfig> {
        RisConfig::new(self.l_elements, step_deg * PI / 180.0)
            .map_err(|e| prefix("optimizer.phase_steps_deg", e))
    }

    /// Swarm settings for surface `ris` and stream `seed`.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidParameter`] naming the offending `optimizer` field.
    pub fn swarm(&self, ris: &RisConfig, seed: u64) -> Result<SwarmConfig> {
        let v_max = self.v_max.unwrap_or(if ris.is_discrete() {
            2.0 * ris.delta_theta
        } else {
            PI / 5.0
        });
        let cfg = SwarmConfig {
            n_begin: self.n_begin,
            n_end: self.n_end,
            omega_begin: self.omega_begin,
            omega_end: self.omega_end,
            c1: self.c1,
            c2: self.c2,
            c3: self.c3,
            v_max,
            max_iter: self.max_iter,
            seed,
        };
        cfg.validate().map_err(|e| prefix("optimizer", e))?;
        Ok(cfg)
    }
}

/// Monte-Carlo settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonteCarloSection {
    /// Draws per estimate.
    pub n_samples: usize,
    /// Base seed.
    pub seed: u64,
}

impl Default for MonteCarloSection {
    fn default() -> Self {
        Self {
            n_samples: 1_000_000,
            seed: 1,
        }
    }
}

/// Frequency grid of the `absorption` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AbsorptionSection {
    /// First frequency, GHz.
    pub f_start_ghz: f64,
    /// Last frequency, GHz.
    pub f_stop_ghz: f64,
    /// Spacing, GHz.
    pub f_step_ghz: f64,
}

impl Default for AbsorptionSection {
    fn default() -> Self {
        Self {
            f_start_ghz: 275.0,
            f_stop_ghz: 400.0,
            f_step_ghz: 1.0,
        }
    }
}

impl AbsorptionSection {
    /// Grid frequencies in Hz.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidParameter`] naming the offending field.
    pub fn freqs_hz(&self) -> Result<Vec<f64>> {
        if !(self.f_step_ghz > 0.0) {
            return Err(Error::invalid("absorption.f_step_ghz", "must be positive"));
        }
        if !(self.f_stop_ghz >= self.f_start_ghz) {
            return Err(Error::invalid(
                "absorption.f_stop_ghz",
                "must not be below f_start_ghz",
            ));
        }
        let n = ((self.f_stop_ghz - self.f_start_ghz) / self.f_step_ghz + 1e-9).floor() as usize;
        Ok((0..=n)
            .map(|i| (self.f_start_ghz + i as f64 * self.f_step_ghz) * 1e9)
            .collect())
    }
}

/// Output location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Directory for CSV files, standard output when absent.
    pub dir: Option<PathBuf>,
}

/// Complete run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Atmosphere.
    pub environment: EnvironmentSection,
    /// Link geometry.
    pub geometry: GeometrySection,
    /// Pointing error.
    pub misalignment: MisalignmentSection,
    /// Surface and fading.
    pub hops: HopsSection,
    /// Hardware impairments.
    pub hardware: HardwareSection,
    /// Noise power `N₀`.
    pub noise: Level,
    /// Transmit powers.
    pub power_grid: Grid,
    /// Outage settings.
    pub outage: OutageSection,
    /// Swarm optimizer.
    pub optimizer: OptimizerSection,
    /// Monte-Carlo settings.
    pub monte_carlo: MonteCarloSection,
    /// Absorption sweep.
    pub absorption: AbsorptionSection,
    /// Output paths.
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            environment: EnvironmentSection::default(),
            geometry: GeometrySection::default(),
            misalignment: MisalignmentSection::default(),
            hops: HopsSection::default(),
            hardware: HardwareSection::default(),
            noise: Level::db(0.0),
            power_grid: Grid::Range {
                start: Level::db(100.0),
                stop: Level::db(160.0),
                step: Level::db(5.0),
            },
            outage: OutageSection::default(),
            optimizer: OptimizerSection::default(),
            monte_carlo: MonteCarloSection::default(),
            absorption: AbsorptionSection::default(),
            output: OutputSection::default(),
        }
    }
}

fn prefix(section: &str, e: Error) -> Error {
    match e {
        Error::InvalidParameter { field, reason } => Error::InvalidParameter {
            field: format!("{section}.{field}"),
            reason,
        },
        other => Error::InvalidParameter {
            field: section.to_string(),
            reason: other.to_string(),
        },
    }
}

impl RunConfig {
    /// Parses and validates a JSON document.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidParameter`] naming the offending field for syntax,
    /// schema and range errors.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::invalid("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a JSON file.
    ///
    /// # Errors
    ///
    /// As [`RunConfig::from_json`], plus unreadable files.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::invalid("config", format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_json(&text)
    }

    /// Checks every section that can be checked without building a model.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidParameter`] naming the offending field.
    pub fn validate(&self) -> Result<()> {
        self.environment().map_err(|e| prefix("environment", e))?;
        self.misalignment()?;
        self.hop_params()?;
        self.hardware_profiles()?;
        self.l_values()?;
        if !(self.noise.value() > 0.0 && self.noise.value().is_finite()) {
            return Err(Error::invalid("noise", "must be positive"));
        }
        self.power_grid.points_db("power_grid")?;
        if let Some(g) = &self.outage.threshold_grid {
            g.points_db("outage.threshold_grid")?;
        }
        for m in &self.outage.methods {
            if !ALL_METHODS.contains(&m.as_str()) {
                return Err(Error::invalid(
                    "outage.methods",
                    format!(
                        "unknown method `{m}` (expected one of {})",
                        ALL_METHODS.join(", ")
                    ),
                ));
            }
        }
        if !(self.outage.threshold.value() >= 0.0) {
            return Err(Error::invalid("outage.threshold", "must be non-negative"));
        }
        if self.monte_carlo.n_samples == 0 {
            return Err(Error::invalid(
                "monte_carlo.n_samples",
                "must be at least 1",
            ));
        }
        let o = &self.optimizer;
        if o.trials == 0 {
            return Err(Error::invalid("optimizer.trials", "must be at least 1"));
        }
        if o.phase_steps_deg.is_empty() {
            return Err(Error::invalid(
                "optimizer.phase_steps_deg",
                "needs at least one step",
            ));
        }
        if !(o.target_ratio > 0.0 && o.target_ratio <= 1.0) {
            return Err(Error::invalid(
                "optimizer.target_ratio",
                "must lie in (0, 1]",
            ));
        }
        if !(o.meas_noise_sigma >= 0.0) {
            return Err(Error::invalid(
                "optimizer.meas_noise_sigma",
                "must be non-negative",
            ));
        }
        for &step in &o.phase_steps_deg {
            let ris = o.ris(step)?;
            o.swarm(&ris, 0)?;
        }
        self.absorption.freqs_hz()?;
        if self.geometry.h_l.is_none() {
            self.link_geometry()
                .validate()
                .map_err(|e| prefix("geometry", e))?;
        }
        Ok(())
    }

    /// Atmospheric state.
    ///
    /// # Errors
    ///
    /// Range errors of [`Environment::validate`].
    pub fn environment(&self) -> Result<Environment> {
        let e = Environment {
            temperature_c: self.environment.temperature_c,
            pressure_pa: self.environment.pressure_pa,
            rel_humidity: self.environment.rel_humidity,
        };
        e.validate()?;
        Ok(e)
    }

    /// Link geometry in SI units.
    pub fn link_geometry(&self) -> LinkGeometry {
        LinkGeometry {
            freq_hz: self.geometry.freq_ghz * 1e9,
            d1_m: self.geometry.d1_m,
            d2_m: self.geometry.d2_m,
            gt: self.geometry.gt.value(),
            gr: self.geometry.gr.value(),
        }
    }

    /// Path-gain source: the fixed `h_l` or the geometry.
    ///
    /// # Errors
    ///
    /// Range errors of the environment.
    pub fn path_source(&self) -> Result<PathGainSource> {
        Ok(match self.geometry.h_l {
            Some(h) => PathGainSource::Fixed(h),
            None => PathGainSource::Geometry {
                geom: self.link_geometry(),
                env: self.environment()?,
            },
        })
    }

    /// Pointing-error model.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidParameter`] naming the `misalignment` field for mixed
    /// or incomplete specifications.
    pub fn misalignment(&self) -> Result<Misalignment> {
        let s = &self.misalignment;
        let physical =
            s.detect_radius_m.is_some() || s.beam_radius_m.is_some() || s.jitter_sigma_m.is_some();
        match (s.a_o, s.gamma_sq) {
            (Some(a_o), Some(g2)) if !physical => {
                Misalignment::from_gains(a_o, g2).map_err(|e| prefix("misalignment", e))
            }
            (None, None) => {
                let a = s.detect_radius_m.unwrap_or(0.01);
                let w = s.beam_radius_m.unwrap_or(6.0 * a);
                let sigma = s.jitter_sigma_m.unwrap_or(0.01);
                Misalignment::new(a, w, sigma).map_err(|e| prefix("misalignment", e))
            }
            (Some(_), Some(_)) => Err(Error::invalid(
                "misalignment",
                "give either a_o and gamma_sq or the physical radii, not both",
            )),
            (Some(_), None) => Err(Error::invalid(
                "misalignment.gamma_sq",
                "required together with a_o",
            )),
            (None, Some(_)) => Err(Error::invalid(
                "misalignment.a_o",
                "required together with gamma_sq",
            )),
        }
    }

    /// Per-element hop laws.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidParameter`] naming the offending `hops` field.
    pub fn hop_params(&self) -> Result<(Vec<FtrParams>, Vec<FtrParams>)> {
        match &self.hops.elements {
            Some(list) => {
                if list.is_empty() {
                    return Err(Error::invalid(
                        "hops.elements",
                        "needs at least one element",
                    ));
                }
                let mut h1 = Vec::with_capacity(list.len());
                let mut h2 = Vec::with_capacity(list.len());
                for (i, e) in list.iter().enumerate() {
                    h1.push(e.hop1.params(&format!("hops.elements[{i}].hop1"))?);
                    h2.push(e.hop2.params(&format!("hops.elements[{i}].hop2"))?);
                }
                Ok((h1, h2))
            }
            None => {
                if self.hops.l_elements == 0 {
                    return Err(Error::invalid("hops.l_elements", "must be at least 1"));
                }
                let h1 = self.hops.hop1.params("hops.hop1")?;
                let h2 = self.hops.hop2.params("hops.hop2")?;
                Ok((
                    vec![h1; self.hops.l_elements],
                    vec![h2; self.hops.l_elements],
                ))
            }
        }
    }

    /// Surface sizes for curve commands: `l_values` or the configured `L`.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidParameter`] naming `hops.l_values` for zero sizes or a
    /// sweep combined with per-element laws.
    pub fn l_values(&self) -> Result<Vec<usize>> {
        match &self.hops.l_values {
            Some(v) => {
                if v.is_empty() || v.contains(&0) {
                    return Err(Error::invalid("hops.l_values", "needs positive sizes"));
                }
                if self.hops.elements.is_some() {
                    return Err(Error::invalid(
                        "hops.l_values",
                        "cannot be combined with hops.elements",
                    ));
                }
                Ok(v.clone())
            }
            None => Ok(vec![self
                .hops
                .elements
                .as_ref()
                .map_or(self.hops.l_elements, Vec::len)]),
        }
    }

    /// Hardware profiles: one per swept `κ`, or the configured pair.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidParameter`] naming the offending `hardware` field.
    pub fn hardware_profiles(&self) -> Result<Vec<HardwareProfile>> {
        match &self.hardware.kappa_sweep {
            Some(v) => {
                if v.is_empty() {
                    return Err(Error::invalid(
                        "hardware.kappa_sweep",
                        "needs at least one value",
                    ));
                }
                v.iter()
                    .map(|&k| {
                        HardwareProfile::new(k, k).map_err(|e| prefix("hardware.kappa_sweep", e))
                    })
                    .collect()
            }
            None => Ok(vec![HardwareProfile::new(
                self.hardware.kappa_s,
                self.hardware.kappa_d,
            )
            .map_err(|e| prefix("hardware", e))?]),
        }
    }

    /// Link model at power `power_w` with the configured hop laws and the
    /// first hardware profile.
    ///
    /// # Errors
    ///
    /// Model construction errors, prefixed with their section.
    pub fn system_model(&self, power_w: f64) -> Result<SystemModel> {
        let (h1, h2) = self.hop_params()?;
        let hw = self.hardware_profiles()?[0];
        SystemModel::new(
            &h1,
            &h2,
            self.misalignment()?,
            self.path_source()?,
            hw,
            power_w,
            self.noise.value(),
        )
        .map_err(|e| prefix("model", e))
    }
}
