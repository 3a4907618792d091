//! Monte-Carlo sampling of the end-to-end link.
//!
//! Each draw takes `L` independent pairs of FTR hop gains, one pointing
//! factor `h_P` and composes the SNDR
//! `γ = G P/(κ² G P + N₀)`, `G = h_F² h_P² h_L²`.
//! With ideal phases `h_F = Σ_ι |g_{ι,1}| |g_{ι,2}|`; with given phases
//! `h_F = |Σ_ι g_{ι,2} e^{jφ_ι} g_{ι,1}|`.
//!
//! Draws are split into fixed-size chunks. Chunk `c` uses the ChaCha8
//! stream `c` of the run seed, so results do not depend on the number of
//! worker threads.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ftr::FtrSampler;
use crate::perf_metrics::{sndr, upsilon, SystemModel};
use crate::thz_channel::misalign_draw;

/// Draws per chunk.
pub const CHUNK_SIZE: usize = 65_536;
/// Two-sided 95% standard normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// How the RIS phases are set in every draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub enum PhaseMode {
    /// Phases cancel both hop phases, `h_F = Σ |g₁||g₂|`.
    #[default]
    IdealAligned,
    /// Fixed phase shifts `φ_ι`, one per element.
    Given(Vec<f64>),
}

/// One Monte-Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRun {
    /// Number of draws.
    pub n_samples: usize,
    /// Seed of the random streams.
    pub seed: u64,
    /// Link under test.
    pub model: SystemModel,
    /// Phase configuration.
    pub phase_mode: PhaseMode,
}

impl McRun {
    /// An ideal-phase run.
    pub fn new(model: SystemModel, n_samples: usize, seed: u64) -> Self {
        Self {
            n_samples,
            seed,
            model,
            phase_mode: PhaseMode::IdealAligned,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::invalid("n_samples", "must be at least 1"));
        }
        if let PhaseMode::Given(p) = &self.phase_mode {
            if p.len() != self.model.l_elements() {
                return Err(Error::invalid("phases", "need one phase per element"));
            }
        }
        Ok(())
    }
}

/// A point estimate with a 95% confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    /// Point estimate.
    pub value: f64,
    /// Lower end of the interval.
    pub lo: f64,
    /// Upper end of the interval.
    pub hi: f64,
    /// Number of draws.
    pub n: usize,
}

impl Estimate {
    /// Interval width `hi − lo`.
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Wilson score interval for `k` successes out of `n` trials,
///
/// `(p̂ + z²/2n ± z √(p̂(1−p̂)/n + z²/4n²)) / (1 + z²/n)`.
pub fn wilson_interval(k: usize, n: usize) -> Estimate {
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = Z95 * Z95;
    let den = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / den;
    let half = Z95 * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / den;
    Estimate {
        value: p,
        lo: (centre - half).max(0.0),
        hi: (centre + half).min(1.0),
        n,
    }
}

/// Sample mean with the normal-approximation interval `x̄ ± z s/√n`.
pub fn mean_interval(values: &[f64]) -> Estimate {
    let n = values.len();
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let var = if n > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0)
    } else {
        0.0
    };
    let half = Z95 * (var / nf).sqrt();
    Estimate {
        value: mean,
        lo: mean - half,
        hi: mean + half,
        n,
    }
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

/// Per-element samplers, built once for each distinct hop law.
struct LinkSampler {
    hop1: Vec<FtrSampler>,
    hop2: Vec<FtrSampler>,
    phases: Option<Vec<Complex64>>,
}

impl LinkSampler {
    fn new(run: &McRun) -> Result<Self> {
        let m = &run.model;
        let mut built: Vec<(crate::ftr::FtrParams, FtrSampler)> = Vec::new();
        let mut get = |p: &crate::ftr::FtrParams| -> Result<FtrSampler> {
            if let Some((_, s)) = built.iter().find(|(q, _)| q == p) {
                return Ok(s.clone());
            }
            let s = FtrSampler::new(p)?;
            built.push((*p, s.clone()));
            Ok(s)
        };
        let hop1 = m
            .hop1
            .iter()
            .map(|f| get(&f.params))
            .collect::<Result<Vec<_>>>()?;
        let hop2 = m
            .hop2
            .iter()
            .map(|f| get(&f.params))
            .collect::<Result<Vec<_>>>()?;
        let phases = match &run.phase_mode {
            PhaseMode::IdealAligned => None,
            PhaseMode::Given(p) => Some(p.iter().map(|&a| Complex64::from_polar(1.0, a)).collect()),
        };
        Ok(Self { hop1, hop2, phases })
    }

    fn draw_hf(&self, rng: &mut ChaCha8Rng) -> f64 {
        match &self.phases {
            None => self
                .hop1
                .iter()
                .zip(&self.hop2)
                .map(|(a, b)| a.sample_envelope(rng) * b.sample_envelope(rng))
                .sum(),
            Some(ph) => self
                .hop1
                .iter()
                .zip(&self.hop2)
                .zip(ph)
                .map(|((a, b), e)| {
                    let g1 = a.sample_complex(rng);
                    let g2 = b.sample_complex(rng);
                    g2 * e * g1
                })
                .sum::<Complex64>()
                .norm(),
        }
    }
}

/// Runs `f` on every chunk in parallel and returns the chunk results in
/// chunk order. `f` receives the chunk's generator and its draw count.
fn map_chunks<T: Send, F>(n: usize, seed: u64, f: F) -> Vec<T>
where
    F: Fn(&mut ChaCha8Rng, usize) -> T + Sync,
{
    let n_chunks = n.div_ceil(CHUNK_SIZE);
    (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let len = CHUNK_SIZE.min(n - c * CHUNK_SIZE);
            let mut rng = chunk_rng(seed, c);
            f(&mut rng, len)
        })
        .collect()
}

/// Draws of `(h_F, h_P)`.
///
/// # Errors
///
/// [`Error::InvalidParameter`] for an empty run or a phase list of the
/// wrong length; sampler construction errors.
pub fn sample_hf_hp(run: &McRun) -> Result<Vec<(f64, f64)>> {
    run.validate()?;
    let sampler = LinkSampler::new(run)?;
    let mis = run.model.mis;
    Ok(map_chunks(run.n_samples, run.seed, |rng, len| {
        (0..len)
            .map(|_| {
                let hf = sampler.draw_hf(rng);
                (hf, misalign_draw(&mis, rng))
            })
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect())
}

/// Draws of the cascaded fading `h_F` alone (ideal phases).
///
/// # Errors
///
/// As [`sample_hf_hp`].
pub fn sample_hf(model: &SystemModel, n_samples: usize, seed: u64) -> Result<Vec<f64>> {
    let run = McRun::new(model.clone(), n_samples, seed);
    run.validate()?;
    let sampler = LinkSampler::new(&run)?;
    Ok(map_chunks(n_samples, seed, |rng, len| {
        (0..len).map(|_| sampler.draw_hf(rng)).collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect())
}

/// Draws of the SNDR.
///
/// # Errors
///
/// As [`sample_hf_hp`].
pub fn sample_sndr(run: &McRun) -> Result<Vec<f64>> {
    Ok(sample_hf_hp(run)?
        .into_iter()
        .map(|(hf, hp)| sndr(hf, hp, &run.model))
        .collect())
}

/// Outage probability `P(γ < γ_th)` with a Wilson interval.
///
/// # Errors
///
/// As [`sample_hf_hp`], plus [`Error::Domain`] for a negative threshold.
pub fn estimate_op(run: &McRun, gamma_th: f64) -> Result<Estimate> {
    let ups = upsilon(gamma_th, &run.model)?;
    let hfp: Vec<f64> = sample_hf_hp(run)?.into_iter().map(|(a, b)| a * b).collect();
    let k = hfp.iter().filter(|&&h| h < ups).count();
    Ok(wilson_interval(k, hfp.len()))
}

/// Outage estimates over a power grid from one common set of draws.
///
/// # Errors
///
/// As [`estimate_op`].
pub fn estimate_op_curve(run: &McRun, gamma_th: f64, powers_w: &[f64]) -> Result<Vec<Estimate>> {
    let mut hfp: Vec<f64> = sample_hf_hp(run)?.into_iter().map(|(a, b)| a * b).collect();
    hfp.sort_by(f64::total_cmp);
    powers_w
        .iter()
        .map(|&p| {
            let ups = upsilon(gamma_th, &run.model.with_power(p)?)?;
            let k = hfp.partition_point(|&h| h < ups);
            Ok(wilson_interval(k, hfp.len()))
        })
        .collect()
}

/// Ergodic capacity `E[log₂(1 + γ)]` with a normal interval.
///
/// # Errors
///
/// As [`sample_hf_hp`].
pub fn estimate_capacity(run: &McRun) -> Result<Estimate> {
    let c: Vec<f64> = sample_sndr(run)?
        .into_iter()
        .map(|g| (1.0 + g).log2())
        .collect();
    Ok(mean_interval(&c))
}

/// Capacity estimates over a power grid from one common set of draws.
///
/// # Errors
///
/// As [`estimate_capacity`].
pub fn estimate_capacity_curve(run: &McRun, powers_w: &[f64]) -> Result<Vec<Estimate>> {
    let hfp = sample_hf_hp(run)?;
    powers_w
        .iter()
        .map(|&p| {
            let m = run.model.with_power(p)?;
            let c: Vec<f64> = hfp
                .iter()
                .map(|&(a, b)| (1.0 + sndr(a, b, &m)).log2())
                .collect();
            Ok(mean_interval(&c))
        })
        .collect()
}

/// Right-continuous step CDF of a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    /// Builds the CDF of `values`.
    ///
    /// # Errors
    ///
    /// [`Error::Domain`] for an empty or non-finite sample.
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("empirical CDF needs finite samples".into()));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { sorted: values })
    }

    /// `#{v_i ≤ x}/n`.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    /// Sorted sample.
    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }
}

/// Empirical CDF of the SNDR.
///
/// # Errors
///
/// As [`sample_sndr`].
pub fn empirical_cdf(run: &McRun) -> Result<EmpiricalCdf> {
    EmpiricalCdf::new(sample_sndr(run)?)
}
