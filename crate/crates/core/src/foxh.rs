//! Numerical Meijer G and multivariate Fox H functions.
//!
//! A [`FoxHSpec`] describes the multiple Mellin–Barnes integral
//!
//! `H = C·(1/2πi)^d ∫…∫ Π_k Γ(α_k + c_k·s)^{±1} · Π_i [Φ_i(s_i)·x_i^{e_i s_i}] ds`
//!
//! over vertical lines `Re s_i = σ_i`. Coupled factors `Γ(α_k + c_k·s)` mix
//! all variables, `Φ_i` collects the univariate gamma factors and gamma
//! mixtures `Σ_j w_j Γ(o_j + c_j s_i)` of variable `i`. With `s_i = σ_i + it_i`
//! the integral becomes `C·(2π)^{−d}∫ … dt`, evaluated with the rectangle rule
//! on the tensor grid `t_i = k_i h`, `|k_i| ≤ W/h`.
//!
//! The integrand is assembled in log space. Per-variable tables are computed
//! once per grid, and coupled factors whose coefficient vector is an integer
//! multiple `u·n` are tabulated against the integer key `n·k`. Grid points
//! whose separable magnitude bound lies more than `prune_nats` below the
//! bound's maximum are skipped. Each pass also yields the sums on the `2h`
//! sub-grid and on the half window, which certify the step and the window.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::specfun::ln_gamma;

/// Largest supported number of integration variables.
pub const MAX_DIM: usize = 4;
/// Largest permitted `half_width/step` per variable.
pub const MAX_NODES_PER_AXIS: f64 = 1e4;

/// Position of a gamma factor in the integrand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Location {
    /// Factor multiplies the integrand.
    Numerator,
    /// Factor divides the integrand.
    Denominator,
}

/// Coupled factor `Γ(offset + Σ_i coeffs_i s_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaFactor {
    /// Constant part of the argument.
    pub offset: f64,
    /// One coefficient per integration variable.
    pub coeffs: Vec<f64>,
    /// Numerator or denominator.
    pub location: Location,
}

/// Univariate factor `Γ(offset + coeff·s_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniGamma {
    /// Constant part of the argument.
    pub offset: f64,
    /// Coefficient of `s_i`.
    pub coeff: f64,
    /// Numerator or denominator.
    pub location: Location,
}

impl UniGamma {
    /// Numerator factor `Γ(offset + coeff·s)`.
    pub fn num(offset: f64, coeff: f64) -> Self {
        Self {
            offset,
            coeff,
            location: Location::Numerator,
        }
    }

    /// Denominator factor `1/Γ(offset + coeff·s)`.
    pub fn den(offset: f64, coeff: f64) -> Self {
        Self {
            offset,
            coeff,
            location: Location::Denominator,
        }
    }
}

/// One term `weight·Γ(offset + coeff·s_i)` of a gamma mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureTerm {
    /// Real weight, either sign.
    pub weight: f64,
    /// Constant part of the argument.
    pub offset: f64,
    /// Coefficient of `s_i`.
    pub coeff: f64,
}

/// Factors that depend on a single integration variable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VariableFactors {
    /// Plain gamma factors.
    pub gammas: Vec<UniGamma>,
    /// Numerator mixtures `Σ_j w_j Γ(o_j + c_j s)`, each a list of terms.
    pub mixtures: Vec<Vec<MixtureTerm>>,
}

/// Rectangle-rule grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadGrid {
    /// Initial node spacing in `t`, an upper bound for the step actually used.
    pub step: f64,
    /// Initial half width of the window in `t`.
    pub half_width: f64,
}

impl Default for QuadGrid {
    fn default() -> Self {
        Self {
            step: 0.1,
            half_width: 40.0,
        }
    }
}

/// Refinement and budget controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoxHOptions {
    /// Relative agreement required between successive refinements.
    pub rel_tol: f64,
    /// Absolute agreement floor.
    pub abs_tol: f64,
    /// Maximum number of refinement passes after the first.
    pub max_refinements: usize,
    /// Pruning depth below the bound maximum, in nats.
    pub prune_nats: f64,
    /// Budget on estimated grid points per pass.
    pub max_points: f64,
}

impl Default for FoxHOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-3,
            abs_tol: 1e-12,
            max_refinements: 8,
            prune_nats: 46.0,
            max_points: 2e9,
        }
    }
}

/// A multivariate Mellin–Barnes integrand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoxHSpec {
    /// Number of integration variables.
    pub dim: usize,
    /// Real constant `C` in front of the integral.
    pub prefactor: f64,
    /// Factors coupling the variables.
    pub outer_factors: Vec<GammaFactor>,
    /// Per-variable factors, length `dim`.
    pub inner_factors: Vec<VariableFactors>,
    /// Exponent multipliers `e_i` of the arguments, length `dim`.
    pub arg_exponents: Vec<f64>,
    /// Contour abscissae; chosen automatically when absent.
    pub contours: Option<Vec<f64>>,
    /// Initial rectangle-rule grid.
    pub quad: QuadGrid,
}

impl FoxHSpec {
    /// A spec with no factors, unit prefactor and unit exponents.
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            prefactor: 1.0,
            outer_factors: Vec::new(),
            inner_factors: vec![VariableFactors::default(); dim],
            arg_exponents: vec![1.0; dim],
            contours: None,
            quad: QuadGrid::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("dim", "must be at least 1"));
        }
        if self.dim > MAX_DIM {
            return Err(Error::CostGuard(format!(
                "Fox H dimension {} exceeds the limit of {MAX_DIM}",
                self.dim
            )));
        }
        if self.inner_factors.len() != self.dim || self.arg_exponents.len() != self.dim {
            return Err(Error::invalid(
                "inner_factors",
                "one entry per variable required",
            ));
        }
        if self
            .outer_factors
            .iter()
            .any(|f| f.coeffs.len() != self.dim)
        {
            return Err(Error::invalid(
                "outer_factors",
                "coefficient vector length must equal dim",
            ));
        }
        if let Some(c) = &self.contours {
            if c.len() != self.dim || c.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(
                    "contours",
                    "one finite abscissa per variable required",
                ));
            }
        }
        if !(self.quad.step > 0.0 && self.quad.half_width > 0.0) {
            return Err(Error::invalid(
                "quad",
                "step and half_width must be positive",
            ));
        }
        if self.quad.half_width / self.quad.step > MAX_NODES_PER_AXIS {
            return Err(Error::CostGuard(format!(
                "half_width/step = {} exceeds {MAX_NODES_PER_AXIS}",
                self.quad.half_width / self.quad.step
            )));
        }
        if !self.prefactor.is_finite() {
            return Err(Error::invalid("prefactor", "must be finite"));
        }
        Ok(())
    }

    /// Numerator constraints `offset + coeffs·σ > 0` with their scale `max|coeffs|`.
    fn constraints(&self) -> Vec<(f64, Vec<f64>)> {
        let mut out = Vec::new();
        let unit = |i: usize, c: f64| {
            let mut v = vec![0.0; self.dim];
            v[i] = c;
            v
        };
        for (i, vf) in self.inner_factors.iter().enumerate() {
            for g in vf
                .gammas
                .iter()
                .filter(|g| g.location == Location::Numerator)
            {
                if g.coeff != 0.0 {
                    out.push((g.offset, unit(i, g.coeff)));
                }
            }
            for t in vf.mixtures.iter().flatten() {
                if t.coeff != 0.0 && t.weight != 0.0 {
                    out.push((t.offset, unit(i, t.coeff)));
                }
            }
        }
        for f in self
            .outer_factors
            .iter()
            .filter(|f| f.location == Location::Numerator)
        {
            if f.coeffs.iter().any(|&c| c != 0.0) {
                out.push((f.offset, f.coeffs.clone()));
            }
        }
        out
    }
}

/// Parameters of `G^{m,n}_{p,q}(x | a; b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeijerGSpec {
    /// Number of `Γ(b_j − s)` factors.
    pub m: usize,
    /// Number of `Γ(1 − a_j + s)` factors.
    pub n: usize,
    /// Upper parameters, length `p`.
    pub a: Vec<f64>,
    /// Lower parameters, length `q`.
    pub b: Vec<f64>,
}

impl MeijerGSpec {
    /// Builds and checks `0 ≤ m ≤ q`, `0 ≤ n ≤ p`.
    pub fn new(m: usize, n: usize, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if m > b.len() || n > a.len() {
            return Err(Error::invalid("m, n", "require m <= q and n <= p"));
        }
        Ok(Self { m, n, a, b })
    }

    /// Equivalent one-dimensional [`FoxHSpec`] with integrand kernel `x^s`.
    pub fn to_foxh(&self) -> FoxHSpec {
        let mut spec = FoxHSpec::new(1);
        let g = &mut spec.inner_factors[0].gammas;
        for (j, &bj) in self.b.iter().enumerate() {
            g.push(if j < self.m {
                UniGamma::num(bj, -1.0)
            } else {
                UniGamma::den(1.0 - bj, 1.0)
            });
        }
        for (j, &aj) in self.a.iter().enumerate() {
            g.push(if j < self.n {
                UniGamma::num(1.0 - aj, 1.0)
            } else {
                UniGamma::den(aj, -1.0)
            });
        }
        spec
    }
}

/// Outcome of a Fox H evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoxHValue {
    /// Real part of the integral.
    pub value: f64,
    /// Imaginary residue of the quadrature.
    pub imag: f64,
    /// `ln(Σ|terms|·scale)`, for judging cancellation.
    pub ln_abs_sum: f64,
    /// Step of the accepted pass.
    pub step: f64,
    /// Half width of the accepted pass.
    pub half_width: f64,
    /// Refinement passes performed after the first.
    pub refinements: usize,
    /// Grid points evaluated in the accepted pass.
    pub points: u64,
}

/// Contour abscissae that separate the poles of every numerator factor.
///
/// Each variable gets the interval `(lo_i, hi_i)` cut out by its own
/// numerator factors (an open side is closed at distance 1). The abscissae
/// are `σ_i(θ) = lo_i + θ(hi_i − lo_i)` with the common `θ ∈ (0, 1)` that
/// maximizes the smallest pole distance, including coupled factors. Without
/// coupled factors this is the midpoint of every interval.
///
/// # Errors
///
/// [`Error::ContourConflict`] when no straight contour separates the poles.
pub fn choose_contours(spec: &FoxHSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    contour_plan(spec).map(|(c, _)| c)
}

fn margin(offset: f64, coeffs: &[f64], c: &[f64]) -> f64 {
    let scale = coeffs.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let arg = offset + coeffs.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
    arg / scale
}

fn contour_plan(spec: &FoxHSpec) -> Result<(Vec<f64>, f64)> {
    let cons = spec.constraints();
    if let Some(c) = &spec.contours {
        let d = cons
            .iter()
            .map(|(o, v)| margin(*o, v, c))
            .fold(f64::INFINITY, f64::min);
        if !(d > 0.0) {
            return Err(Error::ContourConflict(format!(
                "supplied contours {c:?} do not separate the poles"
            )));
        }
        return Ok((c.clone(), d));
    }
    let mut lo = vec![f64::NEG_INFINITY; spec.dim];
    let mut hi = vec![f64::INFINITY; spec.dim];
    for (o, v) in &cons {
        let nz: Vec<usize> = (0..spec.dim).filter(|&i| v[i] != 0.0).collect();
        if nz.len() != 1 {
            continue;
        }
        let i = nz[0];
        let bound = -o / v[i];
        if v[i] > 0.0 {
            lo[i] = lo[i].max(bound);
        } else {
            hi[i] = hi[i].min(bound);
        }
    }
    for i in 0..spec.dim {
        if lo[i] >= hi[i] {
            return Err(Error::ContourConflict(format!(
                "variable {i}: left poles reach {} and right poles start at {}",
                lo[i], hi[i]
            )));
        }
        match (lo[i].is_finite(), hi[i].is_finite()) {
            (false, false) => {
                lo[i] = -1.0;
                hi[i] = 1.0;
            }
            (false, true) => lo[i] = hi[i] - 1.0,
            (true, false) => hi[i] = lo[i] + 1.0,
            (true, true) => {}
        }
    }
    let at = |theta: f64| -> Vec<f64> {
        lo.iter()
            .zip(&hi)
            .map(|(l, h)| l + theta * (h - l))
            .collect()
    };
    let worst = |theta: f64| -> f64 {
        let c = at(theta);
        cons.iter()
            .map(|(o, v)| margin(*o, v, &c))
            .fold(f64::INFINITY, f64::min)
    };
    if cons.is_empty() {
        return Ok((at(0.5), 1.0));
    }
    // The smallest margin is concave in θ, so a ternary search finds its peak.
    let (mut a, mut b) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if worst(m1) < worst(m2) {
            a = m1;
        } else {
            b = m2;
        }
    }
    let theta = 0.5 * (a + b);
    let d = worst(theta);
    if !(d > 0.0) {
        return Err(Error::ContourConflict(
            "coupled factors leave no straight contour between left and right poles".into(),
        ));
    }
    Ok((at(theta), d))
}

/// Evaluates `G^{m,n}_{p,q}(x | a; b)` with default options.
///
/// # Errors
///
/// [`Error::Domain`] for `x ≤ 0`, [`Error::ContourConflict`] when some
/// `a_j − b_k ≥ 1` (j ≤ n, k ≤ m) blocks a straight contour,
/// [`Error::Divergence`] when `m + n ≤ (p + q)/2` and refinement errors
/// from [`eval_foxh`].
///
/// # Example
///
/// ```
/// use ris_thz::foxh::{eval_meijer_g, MeijerGSpec};
/// let g = MeijerGSpec::new(1, 0, vec![], vec![0.0]).unwrap();
/// let v = eval_meijer_g(&g, 2.0).unwrap();
/// assert!((v - (-2.0f64).exp()).abs() < 1e-8);
/// ```
pub fn eval_meijer_g(spec: &MeijerGSpec, x: f64) -> Result<f64> {
    eval_meijer_g_with(spec, x, &FoxHOptions::default()).map(|v| v.value)
}

/// [`eval_meijer_g`] with explicit options and full diagnostics.
///
/// # Errors
///
/// As [`eval_meijer_g`].
pub fn eval_meijer_g_with(spec: &MeijerGSpec, x: f64, opts: &FoxHOptions) -> Result<FoxHValue> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::Domain(format!(
            "Meijer G argument must be positive, got {x}"
        )));
    }
    for (j, aj) in spec.a.iter().take(spec.n).enumerate() {
        for (k, bk) in spec.b.iter().take(spec.m).enumerate() {
            let gap = aj - bk;
            if gap >= 1.0 {
                let why = if (gap - gap.round()).abs() < 1e-12 {
                    "poles coincide"
                } else {
                    "no straight contour"
                };
                return Err(Error::ContourConflict(format!(
                    "a_{} - b_{} = {gap}: {why}",
                    j + 1,
                    k + 1
                )));
            }
        }
    }
    let delta = (spec.m + spec.n) as f64 - 0.5 * (spec.a.len() + spec.b.len()) as f64;
    if delta <= 0.0 {
        return Err(Error::Divergence(format!(
            "m + n - (p + q)/2 = {delta}: the vertical-line integral does not converge"
        )));
    }
    eval_foxh_with(&spec.to_foxh(), &[x], opts)
}

/// Evaluates a Fox H integral with default options.
///
/// # Errors
///
/// As [`eval_foxh_with`].
pub fn eval_foxh(spec: &FoxHSpec, args: &[f64]) -> Result<f64> {
    eval_foxh_with(spec, args, &FoxHOptions::default()).map(|v| v.value)
}

/// Evaluates a Fox H integral with refinement until the step and the window
/// are both certified to `max(rel_tol·|H|, abs_tol)`.
///
/// The starting step is `min(quad.step, 2πd/30)` with `d` the smallest pole
/// distance of the contours, so the rectangle rule's aliasing error starts
/// near `e^{−30}`. A failed step check halves the step, a failed window
/// check doubles the window.
///
/// # Errors
///
/// [`Error::CostGuard`] for `dim > 4` or an oversized grid,
/// [`Error::ContourConflict`] from [`choose_contours`],
/// [`Error::Divergence`] when two consecutive window checks fail,
/// [`Error::NonConvergence`] when the refinement budget runs out,
/// [`Error::Overflow`] when the value leaves the `f64` range and
/// [`Error::Domain`] for non-positive arguments or a non-real result.
pub fn eval_foxh_with(spec: &FoxHSpec, args: &[f64], opts: &FoxHOptions) -> Result<FoxHValue> {
    spec.validate()?;
    if args.len() != spec.dim {
        return Err(Error::invalid("args", "one argument per variable required"));
    }
    if let Some(x) = args.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
        return Err(Error::Domain(format!(
            "Fox H argument must be positive, got {x}"
        )));
    }
    let (contours, dist) = contour_plan(spec)?;
    let ln_args: Vec<f64> = args.iter().map(|x| x.ln()).collect();
    let mut step = spec.quad.step.min(2.0 * PI * dist / 30.0);
    let mut half_width = spec.quad.half_width;
    let mut window_failures = 0;
    let mut prev: Option<f64> = None;
    for refinement in 0..=opts.max_refinements {
        if half_width / step > MAX_NODES_PER_AXIS {
            return Err(Error::CostGuard(format!(
                "refinement needs half_width/step = {:.0} > {MAX_NODES_PER_AXIS}",
                half_width / step
            )));
        }
        let pass = Pass::build(spec, &contours, &ln_args, step, half_width, opts)?;
        let sums = pass.run()?;
        let value = sums.full.re;
        let floor = 64.0 * f64::EPSILON * sums.abs;
        let tol = (opts.rel_tol * value.abs()).max(opts.abs_tol).max(floor);
        if sums.full.im.abs() > 1e-8 * value.abs() + 1e-12 + floor {
            return Err(Error::Domain(format!(
                "Fox H quadrature left an imaginary part {:.3e} against {value:.3e}",
                sums.full.im
            )));
        }
        let step_ok = (value - sums.coarse.re).abs() <= tol;
        let window_ok = (value - sums.half.re).abs() <= tol;
        if step_ok && window_ok {
            if !value.is_finite() {
                return Err(Error::Overflow("Fox H value".into()));
            }
            return Ok(FoxHValue {
                value,
                imag: sums.full.im,
                ln_abs_sum: sums.abs.ln(),
                step,
                half_width,
                refinements: refinement,
                points: sums.points,
            });
        }
        if window_ok {
            window_failures = 0;
        } else {
            window_failures += 1;
            if window_failures >= 2 {
                return Err(Error::Divergence(format!(
                    "doubling the window to {half_width} still changes the value by {:.3e} (value {value:.3e})",
                    (value - sums.half.re).abs()
                )));
            }
            half_width *= 2.0;
        }
        if !step_ok {
            step *= 0.5;
        }
        prev = Some(value);
    }
    Err(Error::NonConvergence {
        what: format!(
            "Fox H rectangle rule (last value {:?}, step {step}, half width {half_width})",
            prev
        ),
        iterations: opts.max_refinements,
    })
}

/// Tabulated factors of one variable.
struct AxisTable {
    /// Grid indices (offset by `n`) sorted by decreasing bound.
    order: Vec<usize>,
    bound: Vec<f64>,
    val: Vec<Complex64>,
    bound_max: f64,
}

/// Coupled factors sharing one integer direction `n`.
struct GroupTable {
    n: Vec<i64>,
    key_min: i64,
    val: Vec<Complex64>,
}

struct DirectFactor {
    offset: f64,
    coeffs: Vec<f64>,
    sign: f64,
}

struct Pass {
    dim: usize,
    n: i64,
    step: f64,
    axes: Vec<AxisTable>,
    groups: Vec<GroupTable>,
    direct: Vec<DirectFactor>,
    contours: Vec<f64>,
    rem: Vec<f64>,
    thresh: f64,
    /// `ln` of the factor restoring the scaling of the tables.
    ln_scale: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Sums {
    full: Complex64,
    coarse: Complex64,
    half: Complex64,
    abs: f64,
    points: u64,
}

impl Sums {
    fn merge(&mut self, o: &Sums) {
        self.full += o.full;
        self.coarse += o.coarse;
        self.half += o.half;
        self.abs += o.abs;
        self.points += o.points;
    }
}

fn signed_ln_gamma(z: Complex64, loc: Location) -> Result<Complex64> {
    match (ln_gamma(z), loc) {
        (Ok(v), Location::Numerator) => Ok(v),
        (Ok(v), Location::Denominator) => Ok(-v),
        (Err(Error::Pole(_)), Location::Denominator) => Ok(Complex64::new(f64::NEG_INFINITY, 0.0)),
        (Err(e), _) => Err(e),
    }
}

fn ln_mixture(terms: &[MixtureTerm], s: Complex64) -> Result<Complex64> {
    let mut logs = Vec::with_capacity(terms.len());
    for t in terms.iter().filter(|t| t.weight != 0.0) {
        let mut l = ln_gamma(Complex64::new(t.offset, 0.0) + t.coeff * s)? + t.weight.abs().ln();
        if t.weight < 0.0 {
            l.im += PI;
        }
        logs.push(l);
    }
    let m = logs.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Ok(Complex64::new(f64::NEG_INFINITY, 0.0));
    }
    let sum: Complex64 = logs.iter().map(|l| (l - m).exp()).sum();
    Ok(sum.ln() + m)
}

/// Writes `coeffs = scale·n` with `n` a primitive integer vector whose first
/// nonzero entry is positive.
fn integer_direction(coeffs: &[f64]) -> Option<(Vec<i64>, f64)> {
    let u = coeffs
        .iter()
        .filter(|c| **c != 0.0)
        .fold(f64::INFINITY, |m, c| m.min(c.abs()));
    if !u.is_finite() {
        return None;
    }
    let mut n = Vec::with_capacity(coeffs.len());
    for &c in coeffs {
        let r = c / u;
        let ri = r.round();
        if (r - ri).abs() > 1e-9 || ri.abs() > 64.0 {
            return None;
        }
        n.push(ri as i64);
    }
    let g = n.iter().fold(0_i64, |g, &v| gcd(g, v.abs()));
    let first = *n.iter().find(|&&v| v != 0)?;
    let sgn = first.signum();
    let n: Vec<i64> = n.iter().map(|v| v / g * sgn).collect();
    let j = n.iter().position(|&v| v != 0)?;
    Some((n.clone(), coeffs[j] / n[j] as f64))
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl Pass {
    fn build(
        spec: &FoxHSpec,
        contours: &[f64],
        ln_args: &[f64],
        step: f64,
        half_width: f64,
        opts: &FoxHOptions,
    ) -> Result<Self> {
        let dim = spec.dim;
        let n = (half_width / step).ceil() as i64;
        let len = (2 * n + 1) as usize;
        let mut ln_scale = spec.prefactor.abs().ln() + dim as f64 * (step / (2.0 * PI)).ln();

        // Coupled factors: tabulate by integer key where possible.
        let mut dirs: Vec<(Vec<i64>, Vec<(f64, f64, Location)>)> = Vec::new();
        let mut direct = Vec::new();
        let mut const_ln = Complex64::new(0.0, 0.0);
        for f in &spec.outer_factors {
            if f.coeffs.iter().all(|&c| c == 0.0) {
                const_ln += signed_ln_gamma(Complex64::new(f.offset, 0.0), f.location)?;
                continue;
            }
            match integer_direction(&f.coeffs) {
                Some((dir, scale)) => {
                    let real = f.offset
                        + f.coeffs
                            .iter()
                            .zip(contours)
                            .map(|(a, b)| a * b)
                            .sum::<f64>();
                    match dirs.iter_mut().find(|(d, _)| *d == dir) {
                        Some((_, list)) => list.push((real, scale, f.location)),
                        None => dirs.push((dir, vec![(real, scale, f.location)])),
                    }
                }
                None => direct.push(DirectFactor {
                    offset: f.offset,
                    coeffs: f.coeffs.clone(),
                    sign: if f.location == Location::Numerator {
                        1.0
                    } else {
                        -1.0
                    },
                }),
            }
        }
        if const_ln.re == f64::NEG_INFINITY {
            ln_scale = f64::NEG_INFINITY;
        } else {
            ln_scale += const_ln.re;
        }
        let const_phase = Complex64::from_polar(1.0, const_ln.im) * spec.prefactor.signum();

        // Growth rate bound of the coupled factors along each axis.
        let mut growth = vec![0.0; dim];
        let mut groups = Vec::with_capacity(dirs.len());
        for (dir, list) in &dirs {
            let rate: f64 = list
                .iter()
                .map(|(_, s, loc)| {
                    if *loc == Location::Denominator {
                        s.abs()
                    } else {
                        -s.abs()
                    }
                })
                .sum::<f64>()
                * 0.5
                * PI;
            if rate > 0.0 {
                for i in 0..dim {
                    growth[i] += rate * dir[i].abs() as f64;
                }
            }
            let span: i64 = dir.iter().map(|v| v.abs()).sum::<i64>() * n;
            let key_min = -span;
            let mut logs = Vec::with_capacity((2 * span + 1) as usize);
            for key in -span..=span {
                let y = step * key as f64;
                let mut l = Complex64::new(0.0, 0.0);
                for (real, scale, loc) in list {
                    l += signed_ln_gamma(Complex64::new(*real, scale * y), *loc)?;
                }
                logs.push(l);
            }
            let m = logs.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
            let m = if m.is_finite() { m } else { 0.0 };
            ln_scale += m;
            groups.push(GroupTable {
                n: dir.clone(),
                key_min,
                val: logs.iter().map(|l| (l - m).exp()).collect(),
            });
        }
        for d in &direct {
            if d.sign < 0.0 {
                for i in 0..dim {
                    growth[i] += 0.5 * PI * d.coeffs[i].abs();
                }
            }
        }

        // Per-variable tables.
        let mut axes = Vec::with_capacity(dim);
        for i in 0..dim {
            let vf = &spec.inner_factors[i];
            let mut logs = Vec::with_capacity(len);
            for k in -n..=n {
                let t = step * k as f64;
                let s = Complex64::new(contours[i], t);
                let mut l = spec.arg_exponents[i] * s * ln_args[i];
                for g in &vf.gammas {
                    l += signed_ln_gamma(Complex64::new(g.offset, 0.0) + g.coeff * s, g.location)?;
                }
                for mix in &vf.mixtures {
                    l += ln_mixture(mix, s)?;
                }
                logs.push(l);
            }
            let m = logs.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
            let m = if m.is_finite() { m } else { 0.0 };
            ln_scale += m;
            let bound: Vec<f64> = logs
                .iter()
                .enumerate()
                .map(|(idx, l)| l.re - m + growth[i] * step * (idx as i64 - n).abs() as f64)
                .collect();
            let mut order: Vec<usize> = (0..len).filter(|&j| bound[j].is_finite()).collect();
            order.sort_by(|&a, &b| bound[b].total_cmp(&bound[a]).then(a.cmp(&b)));
            let bound_max = order
                .first()
                .map(|&j| bound[j])
                .unwrap_or(f64::NEG_INFINITY);
            let mut val: Vec<Complex64> = logs.iter().map(|l| (l - m).exp()).collect();
            if i == 0 {
                for v in &mut val {
                    *v *= const_phase;
                }
            }
            axes.push(AxisTable {
                order,
                bound,
                val,
                bound_max,
            });
        }

        let total_max: f64 = axes.iter().map(|a| a.bound_max).sum();
        let thresh = total_max - opts.prune_nats;
        let mut rem = vec![0.0; dim];
        for i in (0..dim.saturating_sub(1)).rev() {
            rem[i] = rem[i + 1] + axes[i + 1].bound_max;
        }
        // Box estimate of surviving points, reduced by the simplex volume factor.
        let mut est = 1.0;
        for a in &axes {
            let cnt = a
                .order
                .iter()
                .take_while(|&&j| a.bound[j] >= a.bound_max - opts.prune_nats)
                .count();
            est *= cnt as f64;
        }
        est /= (1..=dim).product::<usize>() as f64;
        if est > opts.max_points {
            return Err(Error::CostGuard(format!(
                "Fox H grid needs about {est:.2e} points (budget {:.2e})",
                opts.max_points
            )));
        }
        Ok(Self {
            dim,
            n,
            step,
            axes,
            groups,
            direct,
            contours: contours.to_vec(),
            rem,
            thresh,
            ln_scale,
        })
    }

    fn run(&self) -> Result<Sums> {
        let first = &self.axes[0];
        let heads: Vec<usize> = first
            .order
            .iter()
            .copied()
            .take_while(|&j| first.bound[j] + self.rem[0] >= self.thresh)
            .collect();
        let parts: Vec<Sums> = heads
            .par_iter()
            .map(|&j| {
                let mut acc = Sums::default();
                let mut ks = [0_i64; MAX_DIM];
                ks[0] = j as i64 - self.n;
                if self.dim == 1 {
                    self.leaf(first.val[j], &ks, &mut acc)?;
                } else {
                    self.walk(1, first.bound[j], first.val[j], &mut ks, &mut acc)?;
                }
                Ok(acc)
            })
            .collect::<Result<Vec<Sums>>>()?;
        let mut total = Sums::default();
        for p in &parts {
            total.merge(p);
        }
        let scale = self.ln_scale.exp();
        if !scale.is_finite() && total.abs > 0.0 {
            return Err(Error::Overflow(format!(
                "Fox H scale e^{:.1} exceeds the f64 range",
                self.ln_scale
            )));
        }
        let coarse_w = (1_u32 << self.dim) as f64;
        total.full *= scale;
        total.half *= scale;
        total.coarse *= scale * coarse_w;
        total.abs *= scale;
        Ok(total)
    }

    fn walk(
        &self,
        level: usize,
        bound: f64,
        val: Complex64,
        ks: &mut [i64; MAX_DIM],
        acc: &mut Sums,
    ) -> Result<()> {
        let axis = &self.axes[level];
        for &j in &axis.order {
            let b = bound + axis.bound[j];
            if b + self.rem[level] < self.thresh {
                break;
            }
            ks[level] = j as i64 - self.n;
            let v = val * axis.val[j];
            if level + 1 == self.dim {
                self.leaf(v, ks, acc)?;
            } else {
                self.walk(level + 1, b, v, ks, acc)?;
            }
        }
        Ok(())
    }

    #[inline]
    fn leaf(&self, mut v: Complex64, ks: &[i64; MAX_DIM], acc: &mut Sums) -> Result<()> {
        let ks = &ks[..self.dim];
        for g in &self.groups {
            let key: i64 = g.n.iter().zip(ks).map(|(a, b)| a * b).sum();
            v *= g.val[(key - g.key_min) as usize];
        }
        for d in &self.direct {
            let mut z = Complex64::new(d.offset, 0.0);
            for i in 0..self.dim {
                z += d.coeffs[i] * Complex64::new(self.contours[i], self.step * ks[i] as f64);
            }
            let l = ln_gamma(z);
            v *= match (l, d.sign > 0.0) {
                (Ok(l), true) => l.exp(),
                (Ok(l), false) => (-l).exp(),
                (Err(Error::Pole(_)), false) => Complex64::new(0.0, 0.0),
                (Err(e), _) => return Err(e),
            };
        }
        acc.full += v;
        acc.abs += v.norm();
        acc.points += 1;
        if ks.iter().all(|k| k % 2 == 0) {
            acc.coarse += v;
        }
        if ks.iter().all(|k| 2 * k.abs() <= self.n) {
            acc.half += v;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Instant;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    /// CDF of a sum of `d` unit exponentials written as a `d`-fold
    /// Mellin–Barnes integral with one coupled denominator factor.
    fn gamma_sum_cdf_spec(d: usize) -> FoxHSpec {
        let mut spec = FoxHSpec::new(d);
        for vf in &mut spec.inner_factors {
            vf.gammas.push(UniGamma::num(0.0, -1.0));
            vf.gammas.push(UniGamma::num(1.0, 1.0));
        }
        spec.arg_exponents = vec![-1.0; d];
        spec.outer_factors.push(GammaFactor {
            offset: 1.0,
            coeffs: vec![-1.0; d],
            location: Location::Denominator,
        });
        spec
    }

    fn gamma_cdf(d: usize, y: f64) -> f64 {
        let mut term = 1.0;
        let mut s = 1.0;
        for k in 1..d {
            term *= y / k as f64;
            s += term;
        }
        1.0 - (-y).exp() * s
    }

    #[test]
    fn meijer_reductions() {
        let exp = MeijerGSpec::new(1, 0, vec![], vec![0.0]).unwrap();
        let ratio = MeijerGSpec::new(1, 1, vec![1.0], vec![1.0]).unwrap();
        for x in [0.05, 0.5, 1.0, 3.0, 10.0] {
            let v = eval_meijer_g(&exp, x).unwrap();
            assert!(
                (v - (-x).exp()).abs() < 1e-6 * (-x).exp().max(1e-6),
                "{x}: {v}"
            );
            let r = eval_meijer_g(&ratio, x).unwrap();
            assert!(rel(r, x / (1.0 + x)) < 1e-6, "{x}: {r}");
        }
    }

    #[test]
    fn meijer_g31_34_matches_reference() {
        // Reference: mpmath.meijerg([[1],[2.5,3.5]],[[1.8,1.2,2.5],[0]],0.7)
        let g = MeijerGSpec::new(3, 1, vec![1.0, 2.5, 3.5], vec![1.8, 1.2, 2.5, 0.0]).unwrap();
        let v = eval_meijer_g(&g, 0.7).unwrap();
        assert!(rel(v, MEIJER_REF) < 1e-6, "{v}");
    }

    const MEIJER_REF: f64 = 0.178_728_324_972_547_04;

    #[test]
    fn meijer_errors() {
        let bad = MeijerGSpec::new(1, 1, vec![3.0], vec![1.0]).unwrap();
        assert!(matches!(
            eval_meijer_g(&bad, 1.0),
            Err(Error::ContourConflict(_))
        ));
        let flat = MeijerGSpec::new(1, 0, vec![0.5], vec![0.0]).unwrap();
        assert!(matches!(
            eval_meijer_g(&flat, 1.0),
            Err(Error::Divergence(_))
        ));
        let exp = MeijerGSpec::new(1, 0, vec![], vec![0.0]).unwrap();
        assert!(matches!(eval_meijer_g(&exp, 0.0), Err(Error::Domain(_))));
        assert!(MeijerGSpec::new(2, 0, vec![], vec![0.0]).is_err());
    }

    #[test]
    fn contour_midpoints() {
        let mut spec = FoxHSpec::new(1);
        spec.inner_factors[0].gammas = vec![UniGamma::num(0.0, 1.0), UniGamma::num(1.0, -1.0)];
        let c = choose_contours(&spec).unwrap();
        assert!((c[0] - 0.5).abs() < 1e-12);

        // Γ(1+j+s/2), Γ(−s), Γ(s+γ²): interval (−min(2+2j, γ²), 0).
        for (j, g2) in [(0.0, 9.0), (0.0, 0.8), (2.0, 3.0)] {
            let mut spec = FoxHSpec::new(1);
            spec.inner_factors[0].gammas = vec![
                UniGamma::num(1.0 + j, 0.5),
                UniGamma::num(0.0, -1.0),
                UniGamma::num(g2, 1.0),
            ];
            let c = choose_contours(&spec).unwrap()[0];
            let lo = -(2.0 + 2.0 * j).min(g2);
            assert!((c - 0.5 * lo).abs() < 1e-9, "{c} vs {lo}");
        }

        let mut clash = FoxHSpec::new(1);
        clash.inner_factors[0].gammas = vec![UniGamma::num(-2.0, 1.0), UniGamma::num(1.0, -1.0)];
        assert!(matches!(
            choose_contours(&clash),
            Err(Error::ContourConflict(_))
        ));
    }

    #[test]
    fn coupled_contours_respect_outer_poles() {
        let mut spec = gamma_sum_cdf_spec(3);
        spec.outer_factors.push(GammaFactor {
            offset: 0.3,
            coeffs: vec![1.0; 3],
            location: Location::Numerator,
        });
        let c = choose_contours(&spec).unwrap();
        let sum: f64 = c.iter().sum();
        assert!(
            sum > -0.3 && c.iter().all(|&v| v < 0.0 && v > -1.0),
            "{c:?}"
        );
    }

    #[test]
    fn dim_one_reduces_to_meijer() {
        let mut spec = FoxHSpec::new(1);
        spec.inner_factors[0].gammas.push(UniGamma::num(0.0, -1.0));
        let v = eval_foxh(&spec, &[1.0]).unwrap();
        assert!(rel(v, (-1.0f64).exp()) < 1e-6);
        let g = MeijerGSpec::new(3, 1, vec![1.0, 2.5, 3.5], vec![1.8, 1.2, 2.5, 0.0]).unwrap();
        let a = eval_meijer_g(&g, 0.4).unwrap();
        let b = eval_foxh(&g.to_foxh(), &[0.4]).unwrap();
        assert!(rel(a, b) < 1e-12);
    }

    #[test]
    fn sums_of_exponentials() {
        for d in [1, 2] {
            let spec = gamma_sum_cdf_spec(d);
            for y in [0.3, 1.0, 4.0] {
                let v = eval_foxh(&spec, &vec![y; d]).unwrap();
                assert!(
                    (v - gamma_cdf(d, y)).abs() < 1e-6,
                    "d={d} y={y}: {v} vs {}",
                    gamma_cdf(d, y)
                );
            }
        }
    }

    #[test]
    fn dim_three_is_fast_and_accurate() {
        let spec = gamma_sum_cdf_spec(3);
        let t0 = Instant::now();
        let v = eval_foxh_with(&spec, &[2.0; 3], &FoxHOptions::default()).unwrap();
        let secs = t0.elapsed().as_secs_f64();
        assert!((v.value - gamma_cdf(3, 2.0)).abs() < 1e-6, "{v:?}");
        assert!(secs < 60.0, "{secs}");
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let spec = gamma_sum_cdf_spec(2);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| eval_foxh(&spec, &[1.5, 1.5]).unwrap())
        };
        assert_eq!(run(1).to_bits(), run(3).to_bits());
    }

    #[test]
    fn guards() {
        assert!(matches!(
            eval_foxh(&FoxHSpec::new(5), &[1.0; 5]),
            Err(Error::CostGuard(_))
        ));
        let mut tight = gamma_sum_cdf_spec(1);
        tight.quad.step = 1e-4;
        assert!(matches!(
            eval_foxh(&tight, &[1.0]),
            Err(Error::CostGuard(_))
        ));
        // −1/s decays like 1/|t|: the window never settles.
        let mut slow = FoxHSpec::new(1);
        slow.inner_factors[0].gammas = vec![UniGamma::num(0.0, -1.0), UniGamma::den(1.0, -1.0)];
        assert!(matches!(
            eval_foxh(&slow, &[1.0]),
            Err(Error::Divergence(_))
        ));
    }
}
