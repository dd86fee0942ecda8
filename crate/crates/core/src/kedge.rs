//! Knife-edge diffraction: Fresnel integrals, the complex diffraction loss
//! `L(nu) = (1+j)/2 * int_nu^inf exp(-j pi t^2 / 2) dt`, the Fresnel-Kirchhoff
//! parameter, and the loss / ratio curves built from them.
//!
//! The semi-infinite integral is always evaluated through the closed form in
//! `C` and `S`; production code never truncates the oscillatory tail.

use num_complex::Complex;
use rayon::prelude::*;

use crate::Real;

const MAX_ITER: usize = 200;

/// Cosine and sine Fresnel integrals at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FresnelPair<T> {
    pub c_val: T,
    pub s_val: T,
}

/// `C(x) = int_0^x cos(pi t^2/2) dt`, `S(x) = int_0^x sin(pi t^2/2) dt`.
///
/// Power series below `|x| = 1.5`; above, the auxiliary functions are
/// evaluated as a continued fraction for the complementary error function
/// (modified Lentz). Both are odd by construction.
pub fn fresnel_cs<T: Real>(x: T) -> FresnelPair<T> {
    if x.is_nan() {
        return FresnelPair { c_val: x, s_val: x };
    }
    let ax = x.abs();
    let (c, s) = if ax.is_infinite() {
        (T::of(0.5), T::of(0.5))
    } else if ax <= T::of(1.5) {
        fresnel_series(ax)
    } else {
        fresnel_continued_fraction(ax)
    };
    if x < T::zero() {
        FresnelPair { c_val: -c, s_val: -s }
    } else {
        FresnelPair { c_val: c, s_val: s }
    }
}

fn fresnel_series<T: Real>(ax: T) -> (T, T) {
    let eps = T::epsilon();
    if ax < eps.sqrt() {
        return (ax, T::zero());
    }
    // C and S interleave in the Taylor series of exp(j pi t^2 / 2); walk the
    // shared term and route odd/even steps to S/C.
    let fact = T::FRAC_PI_2() * ax * ax;
    let mut sum_c = ax;
    let mut sum_s = T::zero();
    let mut sum = T::zero();
    let mut sign = T::one();
    let mut term = ax;
    let mut odd = true;
    let mut n = T::of(3.0);
    for k in 1..=MAX_ITER {
        term = term * fact / T::of_usize(k);
        sum = sum + sign * term / n;
        let test = sum.abs() * eps;
        if odd {
            sign = -sign;
            sum_s = sum;
            sum = sum_c;
        } else {
            sum_c = sum;
            sum = sum_s;
        }
        if term < test {
            break;
        }
        odd = !odd;
        n = n + T::of(2.0);
    }
    (sum_c, sum_s)
}

fn fresnel_continued_fraction<T: Real>(ax: T) -> (T, T) {
    let eps = T::epsilon();
    let tiny = T::min_positive_value() / eps;
    let one = Complex::new(T::one(), T::zero());
    let mut b = Complex::new(T::one(), -T::PI() * ax * ax);
    let mut cc = Complex::new(T::one() / tiny, T::zero());
    let mut d = one / b;
    let mut h = d;
    let mut n = -T::one();
    for _ in 2..=MAX_ITER {
        n = n + T::of(2.0);
        let a = -n * (n + T::one());
        b = b + Complex::new(T::of(4.0), T::zero());
        d = one / (d * a + b);
        cc = b + one * a / cc;
        let del = cc * d;
        h = h * del;
        if (del.re - T::one()).abs() + del.im.abs() < eps {
            break;
        }
    }
    h = h * Complex::new(ax, -ax);
    let phase = T::FRAC_PI_2() * ax * ax;
    let rot = Complex::new(phase.cos(), phase.sin());
    let half = Complex::new(T::of(0.5), T::of(0.5));
    let cs = half * (one - rot * h);
    (cs.re, cs.im)
}

/// Complex diffraction loss relative to free space.
pub fn diffraction_loss<T: Real>(nu: T) -> Complex<T> {
    let FresnelPair { c_val, s_val } = fresnel_cs(nu);
    let half = T::of(0.5);
    let tail = Complex::new(half - c_val, -(half - s_val));
    Complex::new(half, half) * tail
}

/// Fresnel-Kirchhoff parameter in the small-angle form
/// `nu = theta * sqrt(2 d1 d2 / (lambda (d1 + d2)))`, `lambda = c / f`.
/// `d1` is the source-edge distance, `d2` the edge-receiver distance.
pub fn fresnel_param<T: Real>(theta_deg: T, f: T, d1: T, d2: T, c: T) -> T {
    let lambda = c / f;
    theta_deg.to_radians() * (T::of(2.0) * d1 * d2 / (lambda * (d1 + d2))).sqrt()
}

/// Diffraction loss over a frequency grid for one azimuth.
#[derive(Debug, Clone, PartialEq)]
pub struct LossCurve<T> {
    pub freqs: Vec<T>,
    pub loss: Vec<Complex<T>>,
    pub theta: T,
    pub d1: T,
    pub d2: T,
}

impl<T: Real> LossCurve<T> {
    pub fn magnitude(&self) -> Vec<T> {
        self.loss.iter().map(|l| l.norm()).collect()
    }
}

/// Ratio between the losses at `theta` and `theta + delta_theta`, in dB.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioCurve<T> {
    pub freqs: Vec<T>,
    pub ratio_db: Vec<T>,
    pub theta: T,
    pub delta_theta: T,
}

pub fn loss_curve<T: Real>(theta: T, d1: T, d2: T, freq_grid: &[T], c: T) -> LossCurve<T> {
    let loss = freq_grid.par_iter().map(|&f| diffraction_loss(fresnel_param(theta, f, d1, d2, c))).collect();
    LossCurve { freqs: freq_grid.to_vec(), loss, theta, d1, d2 }
}

/// `20 log10(|L(theta)| / |L(theta + delta_theta)|)` for two receivers that
/// share the source distance `d1` and sit at `d2` from the edge.
pub fn ratio_curve<T: Real>(theta: T, delta_theta: T, d1: T, d2: T, freq_grid: &[T], c: T) -> RatioCurve<T> {
    ratio_curve_between(theta, delta_theta, d1, d2, d2, freq_grid, c)
}

/// As [`ratio_curve`] but with separate edge distances for the two receivers.
pub fn ratio_curve_between<T: Real>(
    theta: T,
    delta_theta: T,
    d1: T,
    d2_near: T,
    d2_far: T,
    freq_grid: &[T],
    c: T,
) -> RatioCurve<T> {
    let near = loss_curve(theta, d1, d2_near, freq_grid, c);
    let far = loss_curve(theta + delta_theta, d1, d2_far, freq_grid, c);
    let twenty = T::of(20.0);
    let ratio_db = near.loss.iter().zip(&far.loss).map(|(a, b)| twenty * (a.norm() / b.norm()).log10()).collect();
    RatioCurve { freqs: freq_grid.to_vec(), ratio_db, theta, delta_theta }
}

/// `n` evenly spaced frequencies from `f_min` to `f_max` inclusive.
pub fn linear_grid<T: Real>(f_min: T, f_max: T, n: usize) -> Vec<T> {
    match n {
        0 => Vec::new(),
        1 => vec![f_min],
        _ => {
            let step = (f_max - f_min) / T::of_usize(n - 1);
            (0..n).map(|i| f_min + step * T::of_usize(i)).collect()
        }
    }
}
