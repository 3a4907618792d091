//! RIS phase-shift environment and optimizers.
//!
//! The fitness of a phase vector `φ` is the mean received amplitude
//!
//! `E_re(φ) = h_L E[h_P] |Σ_ι g_{ι,2} e^{jφ_ι} g_{ι,1}|`
//!
//! for one fixed channel draw, optionally corrupted by averaged Gaussian
//! measurement noise. Phases live on the lattice `{0, Δθ, …, (K−1)Δθ}`,
//! `K = ⌈2π/Δθ⌉`, or on the circle when `Δθ = 0`.
//!
//! [`sio_optimize`] is a shrinking swarm with three attractors,
//!
//! `v(k+1) = [(ω_k v(k) + Δv(k))/Δθ] Δθ`,
//! `Δv = c₁R₁(P_i − x) + c₂R₂(P_g − x) + c₃R₃(P_l − x)`,
//! `x(k+1) = x(k) + v(k+1)`,
//!
//! with `[·]` rounding half away from zero, `ω_k` decreasing linearly and
//! the swarm size following `n_begin − ⌊k/Max·(n_begin − n_end)⌋`. `P_i`
//! is the particle's best position, `P_g` the swarm's best position and
//! `P_l` the best personal position in the particle's ring neighbourhood
//! (itself and its two neighbours in swarm order). Phases are angles, so
//! every difference `P − x` is taken on the circle, in `(−π, π]`.
//! [`pso_optimize`] is the two-attractor baseline with a fixed swarm.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::ftr::{FtrParams, FtrSampler};
use crate::thz_channel::{misalign_moment, Misalignment};

/// Largest lattice size accepted by [`brute_force`].
pub const BRUTE_FORCE_MAX_CONFIGS: f64 = 1e6;

/// Phase-shifter resolution of the surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RisConfig {
    /// Number of elements `L`.
    pub l_elements: usize,
    /// Lattice step `Δθ`, zero for continuous phases.
    pub delta_theta: f64,
    /// Number of levels `K = ⌈2π/Δθ⌉`, zero for continuous phases.
    pub levels: usize,
    /// Reflection amplitude `β`.
    pub beta: f64,
}

impl RisConfig {
    /// A surface with step `Δθ`; `Δθ = 0` selects continuous phases.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidParameter`] for `L = 0`, `Δθ` outside `[0, 2π)` or a
    /// lattice with fewer than two levels.
    pub fn new(l_elements: usize, delta_theta: f64) -> Result<Self> {
        if l_elements == 0 {
            return Err(Error::invalid("l_elements", "must be at least 1"));
        }
        if !(0.0..TAU).contains(&delta_theta) {
            return Err(Error::invalid("delta_theta", "must lie in [0, 2pi)"));
        }
        let levels = if delta_theta == 0.0 {
            0
        } else {
            let k = TAU / delta_theta;
            // Steps such as 2π/20 land a few ulps above the integer.
            let near = k.round();
            if (k - near).abs() <= 1e-9 * near {
                near as usize
            } else {
                k.ceil() as usize
            }
        };
        if delta_theta > 0.0 && levels < 2 {
            return Err(Error::invalid(
                "delta_theta",
                "the lattice needs at least 2 levels",
            ));
        }
        Ok(Self {
            l_elements,
            delta_theta,
            levels,
            beta: 1.0,
        })
    }

    /// A surface with `K` equally spaced levels.
    ///
    /// # Errors
    ///
    /// As [`RisConfig::new`].
    pub fn with_levels(l_elements: usize, levels: usize) -> Result<Self> {
        if levels < 2 {
            return Err(Error::invalid("levels", "must be at least 2"));
        }
        let mut cfg = Self::new(l_elements, TAU / levels as f64)?;
        cfg.levels = levels;
        Ok(cfg)
    }

    /// Whether phases are restricted to the lattice.
    pub fn is_discrete(&self) -> bool {
        self.delta_theta > 0.0
    }

    /// Maps a phase onto the lattice (or onto `[0, 2π)` when continuous).
    pub fn snap(&self, phase: f64) -> f64 {
        if self.is_discrete() {
            let idx = (phase / self.delta_theta)
                .round()
                .rem_euclid(self.levels as f64);
            idx * self.delta_theta
        } else {
            phase.rem_euclid(TAU)
        }
    }

    /// Wraps a position that is already a lattice multiple into one period.
    fn wrap(&self, phase: f64) -> f64 {
        if self.is_discrete() {
            self.snap(phase)
        } else {
            phase.rem_euclid(TAU)
        }
    }
}

/// Swarm hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwarmConfig {
    /// Initial swarm size.
    pub n_begin: usize,
    /// Final swarm size.
    pub n_end: usize,
    /// Initial inertia weight.
    pub omega_begin: f64,
    /// Final inertia weight.
    pub omega_end: f64,
    /// Weight of the personal-best attractor.
    pub c1: f64,
    /// Weight of the global-best attractor.
    pub c2: f64,
    /// Weight of the iteration-best attractor.
    pub c3: f64,
    /// Velocity bound, rad.
    pub v_max: f64,
    /// Number of iterations `Max`.
    pub max_iter: usize,
    /// Seed of the optimizer's random stream.
    pub seed: u64,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        Self {
            n_begin: 30,
            n_end: 10,
            omega_begin: 0.9,
            omega_end: 0.4,
            c1: 1.0,
            c2: 2.0,
            c3: 2.0,
            v_max: std::f64::consts::PI / 5.0,
            max_iter: 500,
            seed: 0,
        }
    }
}

impl SwarmConfig {
    /// Rejects inconsistent settings.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidParameter`] naming the offending field.
    pub fn validate(&self) -> Result<()> {
        if self.n_end == 0 || self.n_begin < self.n_end {
            return Err(Error::invalid("n_begin", "need n_begin >= n_end >= 1"));
        }
        if !(self.omega_end > 0.0 && self.omega_begin >= self.omega_end) {
            return Err(Error::invalid(
                "omega_begin",
                "need omega_begin >= omega_end > 0",
            ));
        }
        if !(self.v_max > 0.0 && self.v_max.is_finite()) {
            return Err(Error::invalid("v_max", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter", "must be at least 1"));
        }
        for (name, c) in [("c1", self.c1), ("c2", self.c2), ("c3", self.c3)] {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::invalid(name, "must be non-negative"));
            }
        }
        Ok(())
    }

    /// Inertia weight `ω_k = ω_begin − k/Max·(ω_begin − ω_end)`.
    pub fn omega_at(&self, k: usize) -> f64 {
        self.omega_begin - k as f64 / self.max_iter as f64 * (self.omega_begin - self.omega_end)
    }

    /// Swarm size `n_begin − ⌊k/Max·(n_begin − n_end)⌋`.
    pub fn swarm_size_at(&self, k: usize) -> usize {
        let drop = (k as f64 / self.max_iter as f64 * (self.n_begin - self.n_end) as f64).floor();
        self.n_begin - drop as usize
    }
}

/// One channel realization seen by the optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RisEnvironment {
    /// First-hop coefficients `g_{ι,1}`.
    pub g1: Vec<Complex64>,
    /// Second-hop coefficients `g_{ι,2}`.
    pub g2: Vec<Complex64>,
    /// Path gain `|h_L|`.
    pub path_gain: f64,
    /// Pointing-error model.
    pub mis: Misalignment,
    /// Standard deviation of one noisy amplitude reading.
    pub meas_noise_sigma: f64,
    /// Readings averaged per measurement.
    pub meas_avg_count: usize,
}

impl RisEnvironment {
    /// Noiseless environment with given coefficients.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidParameter`] for empty or mismatched coefficient lists.
    pub fn new(
        g1: Vec<Complex64>,
        g2: Vec<Complex64>,
        path_gain: f64,
        mis: Misalignment,
    ) -> Result<Self> {
        if g1.is_empty() || g1.len() != g2.len() {
            return Err(Error::invalid(
                "g1",
                "need equal, non-empty hop coefficient lists",
            ));
        }
        Ok(Self {
            g1,
            g2,
            path_gain,
            mis,
            meas_noise_sigma: 0.0,
            meas_avg_count: 1,
        })
    }

    /// Draws `L` element pairs from the given FTR laws.
    ///
    /// # Errors
    ///
    /// Sampler construction errors.
    pub fn draw(
        l: usize,
        hop1: &FtrParams,
        hop2: &FtrParams,
        path_gain: f64,
        mis: Misalignment,
        seed: u64,
    ) -> Result<Self> {
        let s1 = FtrSampler::new(hop1)?;
        let s2 = FtrSampler::new(hop2)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g1 = Vec::with_capacity(l);
        let mut g2 = Vec::with_capacity(l);
        for _ in 0..l {
            g1.push(s1.sample_complex(&mut rng));
            g2.push(s2.sample_complex(&mut rng));
        }
        Self::new(g1, g2, path_gain, mis)
    }

    /// Adds averaged measurement noise.
    pub fn with_noise(mut self, sigma: f64, avg_count: usize) -> Self {
        self.meas_noise_sigma = sigma;
        self.meas_avg_count = avg_count.max(1);
        self
    }

    /// Number of elements.
    pub fn l_elements(&self) -> usize {
        self.g1.len()
    }

    fn scale(&self) -> f64 {
        self.path_gain * misalign_moment(1.0, &self.mis).unwrap_or(0.0)
    }
}

/// Noiseless fitness `h_L E[h_P] |Σ_ι g_{ι,2} e^{jφ_ι} g_{ι,1}|`.
pub fn fitness_noiseless(env: &RisEnvironment, phases: &[f64]) -> f64 {
    let sum: Complex64 = env
        .g1
        .iter()
        .zip(&env.g2)
        .zip(phases)
        .map(|((a, b), &p)| b * Complex64::from_polar(1.0, p) * a)
        .sum();
    env.scale() * sum.norm()
}

/// Measured fitness: the noiseless value plus the mean of
/// `meas_avg_count` Gaussian readings of standard deviation
/// `meas_noise_sigma`, drawn from `rng`.
pub fn measure_fitness<R: Rng + ?Sized>(env: &RisEnvironment, phases: &[f64], rng: &mut R) -> f64 {
    let clean = fitness_noiseless(env, phases);
    if env.meas_noise_sigma == 0.0 {
        return clean;
    }
    let normal = Normal::new(0.0, env.meas_noise_sigma).expect("sigma is finite and positive");
    let n = env.meas_avg_count.max(1);
    clean + (0..n).map(|_| normal.sample(rng)).sum::<f64>() / n as f64
}

/// Alignment bound `h_L E[h_P] Σ_ι |g_{ι,1}||g_{ι,2}|`.
pub fn continuous_bound(env: &RisEnvironment) -> f64 {
    env.scale()
        * env
            .g1
            .iter()
            .zip(&env.g2)
            .map(|(a, b)| a.norm() * b.norm())
            .sum::<f64>()
}

/// Phases `−(arg g₁ + arg g₂)` that attain [`continuous_bound`].
pub fn aligned_phases(env: &RisEnvironment) -> Vec<f64> {
    env.g1
        .iter()
        .zip(&env.g2)
        .map(|(a, b)| (-(a.arg() + b.arg())).rem_euclid(TAU))
        .collect()
}

/// One row of an optimizer trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    /// Iteration index, 0 for the initial swarm.
    pub iteration: usize,
    /// Swarm size after this iteration.
    pub n_particles: usize,
    /// Best fitness found so far.
    pub best_fitness: f64,
    /// `best_fitness / continuous_bound`.
    pub ratio_to_bound: f64,
    /// Inertia weight used in this iteration.
    pub omega: f64,
}

/// Outcome of an optimizer run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    /// Best phase vector.
    pub best_phases: Vec<f64>,
    /// Its measured fitness.
    pub best_fitness: f64,
    /// Per-iteration trace.
    pub trace: Vec<TraceRow>,
    /// Largest rounding residual `|c(k)|` seen in the velocity updates.
    pub max_rounding_residual: f64,
    /// Number of fitness measurements.
    pub evaluations: usize,
}

impl OptResult {
    /// First iteration whose ratio to the bound reaches `target`.
    pub fn iterations_to(&self, target: f64) -> Option<usize> {
        self.trace
            .iter()
            .find(|r| r.ratio_to_bound >= target)
            .map(|r| r.iteration)
    }
}

#[derive(Debug, Clone)]
struct Particle {
    position: Vec<f64>,
    velocity: Vec<f64>,
    best_position: Vec<f64>,
    best_fitness: f64,
    fitness: f64,
    periodic: usize,
    index: usize,
}

fn random_position<R: Rng>(ris: &RisConfig, rng: &mut R) -> Vec<f64> {
    (0..ris.l_elements)
        .map(|_| {
            if ris.is_discrete() {
                rng.random_range(0..ris.levels) as f64 * ris.delta_theta
            } else {
                rng.random::<f64>() * TAU
            }
        })
        .collect()
}

/// Signed angular difference `a − b` wrapped into `(−π, π]`.
pub fn circular_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    if d > std::f64::consts::PI {
        d - TAU
    } else {
        d
    }
}

/// Velocity bound on the lattice: the largest multiple of `Δθ` within `v_max`.
fn lattice_vmax(ris: &RisConfig, v_max: f64) -> f64 {
    if ris.is_discrete() {
        (v_max / ris.delta_theta).floor() * ris.delta_theta
    } else {
        v_max
    }
}

struct Swarm<'a> {
    env: &'a RisEnvironment,
    ris: RisConfig,
    cfg: SwarmConfig,
    rng: ChaCha8Rng,
    particles: Vec<Particle>,
    global_pos: Vec<f64>,
    global_fit: f64,
    bound: f64,
    trace: Vec<TraceRow>,
    max_residual: f64,
    evaluations: usize,
}

impl<'a> Swarm<'a> {
    fn new(env: &'a RisEnvironment, ris: RisConfig, cfg: SwarmConfig) -> Result<Self> {
        cfg.validate()?;
        if ris.l_elements != env.l_elements() {
            return Err(Error::invalid(
                "l_elements",
                "surface and channel sizes differ",
            ));
        }
        if ris.is_discrete() && cfg.v_max < ris.delta_theta {
            return Err(Error::invalid("v_max", "must be at least one lattice step"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut particles = Vec::with_capacity(cfg.n_begin);
        for index in 0..cfg.n_begin {
            let position = random_position(&ris, &mut rng);
            let velocity = (0..ris.l_elements)
                .map(|_| rng.random_range(-cfg.v_max..=cfg.v_max))
                .collect();
            particles.push(Particle {
                best_position: position.clone(),
                position,
                velocity,
                best_fitness: f64::NEG_INFINITY,
                fitness: f64::NEG_INFINITY,
                periodic: 0,
                index,
            });
        }
        Ok(Self {
            env,
            ris,
            cfg,
            rng,
            particles,
            global_pos: Vec::new(),
            global_fit: f64::NEG_INFINITY,
            bound: continuous_bound(env),
            trace: Vec::new(),
            max_residual: 0.0,
            evaluations: 0,
        })
    }

    /// Measures every particle and updates personal and global bests.
    fn evaluate(&mut self) {
        for p in self.particles.iter_mut() {
            let f = measure_fitness(self.env, &p.position, &mut self.rng);
            self.evaluations += 1;
            p.fitness = f;
            if f > p.best_fitness {
                p.best_fitness = f;
                p.best_position.clone_from(&p.position);
                p.periodic = 0;
            } else {
                p.periodic += 1;
            }
        }
        for p in &self.particles {
            if p.best_fitness > self.global_fit {
                self.global_fit = p.best_fitness;
                self.global_pos.clone_from(&p.best_position);
            }
        }
    }

    fn record(&mut self, k: usize, omega: f64) {
        self.trace.push(TraceRow {
            iteration: k,
            n_particles: self.particles.len(),
            best_fitness: self.global_fit,
            ratio_to_bound: if self.bound > 0.0 {
                self.global_fit / self.bound
            } else {
                0.0
            },
            omega,
        });
    }

    /// Removes particles down to `target`: largest `Pe` first, then the
    /// worst personal best, then the lowest original index.
    fn shrink(&mut self, target: usize) {
        while self.particles.len() > target {
            let victim = (0..self.particles.len())
                .max_by(|&a, &b| {
                    let (pa, pb) = (&self.particles[a], &self.particles[b]);
                    pa.periodic
                        .cmp(&pb.periodic)
                        .then(pb.best_fitness.total_cmp(&pa.best_fitness))
                        .then(pb.index.cmp(&pa.index))
                })
                .expect("swarm is not empty");
            self.particles.remove(victim);
        }
    }

    fn move_particles(&mut self, omega: f64, use_local: bool) {
        let (c1, c2, c3) = (self.cfg.c1, self.cfg.c2, self.cfg.c3);
        let vmax = lattice_vmax(&self.ris, self.cfg.v_max);
        let step = self.ris.delta_theta;
        let local_best: Vec<Vec<f64>> = if use_local {
            let n = self.particles.len();
            (0..n)
                .map(|i| {
                    let ring = [(i + n - 1) % n, i, (i + 1) % n];
                    let j = ring
                        .into_iter()
                        .max_by(|&a, &b| {
                            self.particles[a]
                                .best_fitness
                                .total_cmp(&self.particles[b].best_fitness)
                                .then(b.cmp(&a))
                        })
                        .expect("ring is not empty");
                    self.particles[j].best_position.clone()
                })
                .collect()
        } else {
            Vec::new()
        };
        for (i, p) in self.particles.iter_mut().enumerate() {
            for d in 0..self.ris.l_elements {
                let x = p.position[d];
                let mut dv = c1 * self.rng.random::<f64>() * circular_diff(p.best_position[d], x)
                    + c2 * self.rng.random::<f64>() * circular_diff(self.global_pos[d], x);
                if use_local {
                    dv += c3 * self.rng.random::<f64>() * circular_diff(local_best[i][d], x);
                }
                let raw = omega * p.velocity[d] + dv;
                let mut v = if self.ris.is_discrete() {
                    let r = (raw / step).round() * step;
                    self.max_residual = self.max_residual.max((r - raw).abs());
                    r
                } else {
                    raw
                };
                v = v.clamp(-vmax, vmax);
                p.velocity[d] = v;
                p.position[d] = self.ris.wrap(x + v);
            }
        }
    }

    fn finish(self) -> OptResult {
        OptResult {
            best_phases: self.global_pos,
            best_fitness: self.global_fit,
            trace: self.trace,
            max_rounding_residual: self.max_residual,
            evaluations: self.evaluations,
        }
    }
}

/// Shrinking three-attractor swarm search for the best phase vector.
///
/// # Errors
///
/// [`Error::InvalidParameter`] for inconsistent configurations.
pub fn sio_optimize(env: &RisEnvironment, ris: &RisConfig, cfg: &SwarmConfig) -> Result<OptResult> {
    let mut swarm = Swarm::new(env, *ris, *cfg)?;
    let mut omega = cfg.omega_at(0);
    swarm.evaluate();
    swarm.record(0, omega);
    for k in 1..=cfg.max_iter {
        swarm.shrink(cfg.swarm_size_at(k - 1));
        swarm.move_particles(omega, true);
        omega = cfg.omega_at(k);
        swarm.evaluate();
        swarm.record(k, omega);
    }
    Ok(swarm.finish())
}

/// Classic two-attractor swarm with a fixed size `n_begin`, the same
/// inertia schedule and the same lattice rounding.
///
/// # Errors
///
/// [`Error::InvalidParameter`] for inconsistent configurations.
pub fn pso_optimize(env: &RisEnvironment, ris: &RisConfig, cfg: &SwarmConfig) -> Result<OptResult> {
    let mut swarm = Swarm::new(env, *ris, *cfg)?;
    let mut omega = cfg.omega_at(0);
    swarm.evaluate();
    swarm.record(0, omega);
    for k in 1..=cfg.max_iter {
        swarm.move_particles(omega, false);
        omega = cfg.omega_at(k);
        swarm.evaluate();
        swarm.record(k, omega);
    }
    Ok(swarm.finish())
}

/// Best lattice phase vector by exhaustive search; ties keep the
/// lexicographically first configuration.
///
/// # Errors
///
/// [`Error::CostGuard`] when `K^L` exceeds 10⁶ and
/// [`Error::InvalidParameter`] for continuous phases.
pub fn brute_force(env: &RisEnvironment, ris: &RisConfig) -> Result<(Vec<f64>, f64)> {
    if !ris.is_discrete() {
        return Err(Error::invalid(
            "delta_theta",
            "brute force needs a discrete lattice",
        ));
    }
    let l = env.l_elements();
    let total = (ris.levels as f64).powi(l as i32);
    if total > BRUTE_FORCE_MAX_CONFIGS {
        return Err(Error::CostGuard(format!(
            "brute force over K^L = {total:.3e} configurations exceeds 1e6"
        )));
    }
    let mut idx = vec![0usize; l];
    let mut phases = vec![0.0; l];
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    loop {
        for (p, &i) in phases.iter_mut().zip(&idx) {
            *p = i as f64 * ris.delta_theta;
        }
        let f = fitness_noiseless(env, &phases);
        if f > best.1 {
            best = (phases.clone(), f);
        }
        // Odometer increment with the last element fastest.
        let mut d = l;
        loop {
            if d == 0 {
                return Ok(best);
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < ris.levels {
                break;
            }
            idx[d] = 0;
        }
    }
}

/// Roots of the characteristic polynomial `x² − (1 − t₁ − t₂ − t₃ + ω)x + ω`
/// of the deterministic swarm recursion, with the stability flag
/// `max |root| < 1`.
pub fn secular_roots(omega: f64, t1: f64, t2: f64, t3: f64) -> ([Complex64; 2], bool) {
    let b = 1.0 - t1 - t2 - t3 + omega;
    let disc = Complex64::new(b * b - 4.0 * omega, 0.0).sqrt();
    let r1 = (b + disc) / 2.0;
    let r2 = (b - disc) / 2.0;
    let stable = r1.norm() < 1.0 && r2.norm() < 1.0;
    ([r1, r2], stable)
}
