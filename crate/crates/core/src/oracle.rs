//! Brute-force numerical references used only to check the production code:
//! adaptive Gauss-Kronrod quadrature and a direct integration of the
//! knife-edge loss integral. Compiled for tests or with the `oracle` feature.

use std::sync::OnceLock;

use num_complex::Complex64;

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const K15_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const G7_WEIGHTS: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(mid);
    let mut k15 = K15_WEIGHTS[7] * fc;
    let mut g7 = G7_WEIGHTS[3] * fc;
    for i in 0..7 {
        let dx = half * GK_NODES[i];
        let s = f(mid - dx) + f(mid + dx);
        k15 += K15_WEIGHTS[i] * s;
        // Gauss nodes are the odd-indexed Kronrod nodes.
        if i % 2 == 1 {
            g7 += G7_WEIGHTS[i / 2] * s;
        }
    }
    (k15 * half, ((k15 - g7) * half).abs())
}

fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (val, err) = gauss_kronrod(f, a, b);
    if err <= tol || depth == 0 {
        return val;
    }
    let mid = 0.5 * (a + b);
    adaptive(f, a, mid, 0.5 * tol, depth - 1) + adaptive(f, mid, b, 0.5 * tol, depth - 1)
}

/// Adaptive G7/K15 quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    // Pre-split so each panel starts with at most a few oscillations.
    let pieces = ((b - a).abs() / 0.05).ceil().max(1.0) as usize;
    let h = (b - a) / pieces as f64;
    let per = tol;
    (0..pieces)
        .map(|i| {
            let lo = a + h * i as f64;
            adaptive(&f, lo, lo + h, per, 24)
        })
        .sum()
}

const UPPER: f64 = 60.0;

fn head_integral() -> Complex64 {
    static HEAD: OnceLock<Complex64> = OnceLock::new();
    *HEAD.get_or_init(|| {
        let a = std::f64::consts::FRAC_PI_2;
        let re = integrate(|t| (a * t * t).cos(), 0.0, UPPER, 1e-13);
        let im = integrate(|t| -(a * t * t).sin(), 0.0, UPPER, 1e-13);
        Complex64::new(re, im)
    })
}

/// `int_T^inf exp(-j a t^2) dt` by two terms of integration by parts.
fn tail_integral(t: f64) -> Complex64 {
    let a = std::f64::consts::FRAC_PI_2;
    let u = Complex64::from_polar(1.0, -a * t * t);
    u / Complex64::new(0.0, 2.0 * a * t) + u / (4.0 * a * a * t.powi(3))
}

/// `(1+j)/2 * int_nu^inf exp(-j pi t^2/2) dt` by direct quadrature over
/// `[nu, 60]` plus an asymptotic tail beyond 60. Valid for `|nu| < 60`.
pub fn knife_edge_loss(nu: f64) -> Complex64 {
    let a = std::f64::consts::FRAC_PI_2;
    let re = integrate(|t| (a * t * t).cos(), 0.0, nu, 1e-13);
    let im = integrate(|t| -(a * t * t).sin(), 0.0, nu, 1e-13);
    let body = head_integral() - Complex64::new(re, im) + tail_integral(UPPER);
    Complex64::new(0.5, 0.5) * body
}
