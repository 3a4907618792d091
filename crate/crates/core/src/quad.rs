//! Adaptive Gauss–Kronrod (7/15) quadrature on finite and semi-infinite
//! intervals.
//!
//! Global adaptive bisection in the style of QUADPACK `qag`: the interval
//! with the largest error estimate is split until the summed estimate meets
//! `max(abs_tol, rel_tol·|I|)`.

use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tolerances and budget of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    /// Absolute error target.
    pub abs_tol: f64,
    /// Relative error target.
    pub rel_tol: f64,
    /// Maximum number of subintervals.
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_intervals: 2000,
        }
    }
}

impl QuadOptions {
    /// Options with the given absolute and relative targets.
    pub fn new(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            abs_tol,
            rel_tol,
            ..Self::default()
        }
    }
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut res_k = fc * WGK[7];
    let mut res_g = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        res_k += WGK[j] * s;
        if j % 2 == 1 {
            res_g += WG[j / 2] * s;
        }
    }
    let ik = res_k * h;
    let ig = res_g * h;
    (ik, (ik - ig).abs())
}

#[derive(Debug, PartialEq)]
struct Piece {
    err: f64,
    a: f64,
    b: f64,
    val: f64,
}

impl Eq for Piece {}

impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Integrates `f` over `[a, b]`.
///
/// # Errors
///
/// [`Error::NonConvergence`] when the subinterval budget is exhausted and
/// [`Error::Domain`] when the integrand produces non-finite values.
///
/// # Example
///
/// ```
/// use ris_thz::quad::{integrate, QuadOptions};
/// let v = integrate(|x| x * x, 0.0, 3.0, QuadOptions::default()).unwrap();
/// assert!((v - 9.0).abs() < 1e-12);
/// ```
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, opts: QuadOptions) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (val, err) = gk15(&mut f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Piece { err, a, b, val });
    let mut total = val;
    let mut total_err = err;
    loop {
        if !total.is_finite() {
            return Err(Error::Domain(format!(
                "integrand is not finite on [{a}, {b}]"
            )));
        }
        if total_err <= opts.abs_tol.max(opts.rel_tol * total.abs()) {
            return Ok(total);
        }
        if heap.len() >= opts.max_intervals {
            return Err(Error::NonConvergence {
                what: format!("adaptive quadrature on [{a}, {b}] (error estimate {total_err:.3e})"),
                iterations: heap.len(),
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a || m >= worst.b {
            // Interval at machine resolution; accept what it holds.
            total_err -= worst.err;
            heap.push(Piece { err: 0.0, ..worst });
            continue;
        }
        let (v1, e1) = gk15(&mut f, worst.a, m);
        let (v2, e2) = gk15(&mut f, m, worst.b);
        total += v1 + v2 - worst.val;
        total_err += e1 + e2 - worst.err;
        heap.push(Piece {
            err: e1,
            a: worst.a,
            b: m,
            val: v1,
        });
        heap.push(Piece {
            err: e2,
            a: m,
            b: worst.b,
            val: v2,
        });
    }
}

/// Integrates `f` over `[a, ∞)` through the map `x = a + scale·t/(1−t)`.
///
/// `scale` should be of the order of the integrand's decay length.
///
/// # Errors
///
/// As [`integrate`].
pub fn integrate_to_inf<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    scale: f64,
    opts: QuadOptions,
) -> Result<f64> {
    integrate(
        |t| {
            if t >= 1.0 {
                return 0.0;
            }
            let u = 1.0 - t;
            let x = a + scale * t / u;
            let v = f(x) * scale / (u * u);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        opts,
    )
}
