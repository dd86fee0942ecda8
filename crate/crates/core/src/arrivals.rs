//! First-arrival detection and the spherical wavefront fit
//! `TOA(z) = t0 + sqrt((z - z0)^2 + r0^2) / c`.

use crate::dsp::EnvelopeImage;
use crate::{Error, Real, Result};

/// Model arrival time at height `z` for a source at horizontal path length
/// `r0`, height `z0`, emitting at `t0`.
pub fn toa_model<T: Real>(z: T, r0: T, z0: T, t0: T, c: T) -> T {
    t0 + (z - z0).hypot(r0) / c
}

/// Per-channel first arrivals, in image row order.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalSet<T> {
    /// `None` marks a channel with no qualifying peak.
    pub toa: Vec<Option<T>>,
    pub confidence: Vec<T>,
    pub heights: Vec<T>,
    /// Envelope value at the detected peak (zero when undetected).
    pub peak: Vec<T>,
    /// Mean envelope over the leading noise window.
    pub background: Vec<T>,
}

impl<T: Real> ArrivalSet<T> {
    pub fn detected(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.heights.iter().zip(&self.toa).filter_map(|(&z, t)| t.map(|t| (z, t)))
    }

    pub fn n_detected(&self) -> usize {
        self.toa.iter().filter(|t| t.is_some()).count()
    }

    /// Builds a set from exact times, every channel detected.
    pub fn from_times(heights: Vec<T>, toa: Vec<T>) -> Self {
        let n = heights.len();
        Self {
            toa: toa.into_iter().map(Some).collect(),
            confidence: vec![T::one(); n],
            heights,
            peak: vec![T::zero(); n],
            background: vec![T::zero(); n],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionConfig<T> {
    /// Leading stretch of each trace taken as background, seconds.
    pub noise_window: T,
    /// Threshold as a multiple of the mean background envelope.
    pub threshold_factor: T,
    /// Floor on the threshold as a fraction of the channel's largest envelope
    /// value; keeps numerically silent backgrounds from triggering on round-off.
    pub min_relative_peak: T,
    /// Look-ahead of the climb from the threshold crossing to the arrival
    /// peak, seconds. Ripples shorter than this do not stop the climb.
    pub peak_search: T,
}

impl<T: Real> Default for DetectionConfig<T> {
    fn default() -> Self {
        Self {
            noise_window: T::of(5e-3),
            threshold_factor: T::of(5.0),
            min_relative_peak: T::of(0.02),
            peak_search: T::of(0.25e-3),
        }
    }
}

/// Time of the first envelope peak on each channel that rises above
/// `threshold_factor` times the mean leading background.
pub fn detect_first_arrival<T: Real>(env: &EnvelopeImage<T>, cfg: &DetectionConfig<T>) -> Result<ArrivalSet<T>> {
    let n = env.n_samples();
    if env.n_rows() == 0 || n == 0 {
        return Err(Error::InvalidInput("empty envelope image".into()));
    }
    let noise_len = (cfg.noise_window * env.fs).round().to_usize().unwrap_or(0).min(n);
    if noise_len == 0 {
        return Err(Error::InvalidInput("noise window shorter than one sample".into()));
    }
    let search = (cfg.peak_search * env.fs).round().to_usize().unwrap_or(0).max(1);

    let mut out = ArrivalSet {
        toa: Vec::with_capacity(env.n_rows()),
        confidence: Vec::with_capacity(env.n_rows()),
        heights: env.heights.clone(),
        peak: Vec::with_capacity(env.n_rows()),
        background: Vec::with_capacity(env.n_rows()),
    };
    for row in &env.values {
        let bg = row[..noise_len].iter().copied().sum::<T>() / T::of_usize(noise_len);
        let row_max = row.iter().fold(T::zero(), |m, &v| m.max(v));
        let threshold = (cfg.threshold_factor * bg).max(cfg.min_relative_peak * row_max);
        out.background.push(bg);
        let hit = if row_max > T::zero() { row.iter().position(|&v| v > threshold) } else { None };
        match hit {
            Some(i0) => {
                let mut k = i0;
                loop {
                    let end = (k + search).min(n - 1);
                    let next = (k..=end).fold(k, |b, j| if row[j] > row[b] { j } else { b });
                    if next == k {
                        break;
                    }
                    k = next;
                }
                let frac = parabolic_offset(row, k);
                let peak = row[k];
                out.toa.push(Some(env.time_of(T::of_usize(k) + frac)));
                out.peak.push(peak);
                let conf = if bg > T::zero() {
                    (T::one() - cfg.threshold_factor * bg / peak).max(T::zero()).min(T::one())
                } else {
                    T::one()
                };
                out.confidence.push(conf);
            }
            None => {
                out.toa.push(None);
                out.peak.push(T::zero());
                out.confidence.push(T::zero());
            }
        }
    }
    Ok(out)
}

/// Sub-sample offset of the vertex of the parabola through `k-1, k, k+1`.
fn parabolic_offset<T: Real>(row: &[T], k: usize) -> T {
    if k == 0 || k + 1 >= row.len() {
        return T::zero();
    }
    let (a, b, c) = (row[k - 1], row[k], row[k + 1]);
    let denom = a - T::of(2.0) * b + c;
    if denom >= T::zero() {
        return T::zero();
    }
    let off = T::of(0.5) * (a - c) / denom;
    off.max(T::of(-0.5)).min(T::of(0.5))
}

/// Fitted wavefront parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WavefrontFit<T> {
    pub r0: T,
    pub z0: T,
    pub t0: T,
    /// Root-mean-square TOA residual, seconds.
    pub rmse: T,
    pub n_used: usize,
    /// Variance estimates of `r0` (m^2) and `z0` (m^2) from the fit covariance.
    pub var_r0: T,
    pub var_z0: T,
}

impl<T: Real> WavefrontFit<T> {
    pub fn toa(&self, z: T, c: T) -> T {
        toa_model(z, self.r0, self.z0, self.t0, c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig<T> {
    /// Fits with a larger RMS residual are rejected, seconds.
    pub max_rmse: T,
    pub max_iter: usize,
    /// A range beyond this is treated as a plane wave (degenerate), meters.
    pub max_range: T,
}

impl<T: Real> Default for FitConfig<T> {
    fn default() -> Self {
        Self { max_rmse: T::of(0.1e-3), max_iter: 500, max_range: T::of(100.0) }
    }
}

/// Least-squares fit of the wavefront model to the detected channels.
///
/// Works in path-length units (`c * t`). A coarse log-spaced scan over the
/// range seeds a damped Gauss-Newton (Levenberg-Marquardt) refinement with
/// the analytic Jacobian.
pub fn fit_wavefront<T: Real>(arrivals: &ArrivalSet<T>, c: T, cfg: &FitConfig<T>) -> Result<WavefrontFit<T>> {
    let (z, d): (Vec<T>, Vec<T>) = arrivals.detected().map(|(z, t)| (z, t * c)).unzip();
    let n = z.len();
    let mut distinct = z.clone();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    distinct.dedup();
    if n < 3 || distinct.len() < 2 {
        return Err(Error::InsufficientChannels { channels: n, heights: distinct.len() });
    }

    let p = refine(&z, &d, seed(&z, &d), cfg)?;
    let (r0, z0, s0) = (p[0].abs(), p[1], p[2]);
    let sse = sum_sq(&z, &d, &p);
    let rmse = (sse / T::of_usize(n)).sqrt() / c;

    let cov = covariance(&z, &p, sse, n);
    let fit = WavefrontFit { r0, z0, t0: s0 / c, rmse, n_used: n, var_r0: cov.0, var_z0: cov.1 };
    if rmse > cfg.max_rmse {
        return Err(Error::FitRejected { rmse: rmse.as_f64(), limit: cfg.max_rmse.as_f64() });
    }
    Ok(fit)
}

fn residuals<'a, T: Real>(z: &'a [T], d: &'a [T], p: &[T; 3]) -> impl Iterator<Item = T> + 'a {
    let p = *p;
    let (r0, z0, s0) = (p[0], p[1], p[2]);
    z.iter().zip(d).map(move |(&zi, &di)| s0 + (zi - z0).hypot(r0) - di)
}

fn sum_sq<T: Real>(z: &[T], d: &[T], p: &[T; 3]) -> T {
    residuals(z, d, p).map(|r| r * r).sum()
}

fn seed<T: Real>(z: &[T], d: &[T]) -> [T; 3] {
    let (imin, _) = d.iter().enumerate().fold((0, d[0]), |m, (i, &v)| if v < m.1 { (i, v) } else { m });
    let z0 = z[imin];
    let steps = 64;
    let (lo, hi) = (T::of(0.5).ln(), T::of(20.0).ln());
    let mut best: Option<([T; 3], T)> = None;
    for k in 0..steps {
        let r0 = (lo + (hi - lo) * T::of_usize(k) / T::of_usize(steps - 1)).exp();
        // For fixed (r0, z0) the optimal offset is the mean residual.
        let s0 = z.iter().zip(d).map(|(&zi, &di)| di - (zi - z0).hypot(r0)).sum::<T>() / T::of_usize(z.len());
        let p = [r0, z0, s0];
        let e = sum_sq(z, d, &p);
        if best.map_or(true, |(_, b)| e < b) {
            best = Some((p, e));
        }
    }
    best.expect("non-empty scan").0
}

fn refine<T: Real>(z: &[T], d: &[T], mut p: [T; 3], cfg: &FitConfig<T>) -> Result<[T; 3]> {
    let mut lambda = T::of(1e-3);
    let mut cost = sum_sq(z, d, &p);
    let tol = T::epsilon() * T::of(16.0);
    for _ in 0..cfg.max_iter {
        let (jtj, jtr) = normal_equations(z, d, &p);
        let mut a = jtj;
        for i in 0..3 {
            a[i][i] = a[i][i] * (T::one() + lambda) + T::epsilon();
        }
        let step = match solve3(a, [-jtr[0], -jtr[1], -jtr[2]]) {
            Some(s) => s,
            None => return Err(Error::Degenerate("singular normal equations".into())),
        };
        let trial = [p[0] + step[0], p[1] + step[1], p[2] + step[2]];
        let trial_cost = sum_sq(z, d, &trial);
        let scale = T::one() + p[0].abs() + p[1].abs() + p[2].abs();
        let step_norm = step[0].abs() + step[1].abs() + step[2].abs();
        if trial_cost <= cost && trial[0] > T::zero() {
            let improvement = cost - trial_cost;
            p = trial;
            cost = trial_cost;
            lambda = (lambda / T::of(10.0)).max(T::of(1e-12));
            if p[0] > cfg.max_range {
                return Err(Error::Degenerate(format!("range diverged past {} m (plane wavefront)", cfg.max_range)));
            }
            if step_norm <= tol * scale || improvement <= tol * tol * (T::one() + cost) {
                return Ok(p);
            }
        } else {
            lambda = lambda * T::of(10.0);
            if lambda > T::of(1e12) {
                // No descent direction left: converged to within round-off.
                return Ok(p);
            }
        }
    }
    if p[0] > cfg.max_range / T::of(10.0) {
        return Err(Error::Degenerate("range did not settle (plane wavefront)".into()));
    }
    Err(Error::NoConvergence { iterations: cfg.max_iter })
}

fn jacobian_row<T: Real>(zi: T, p: &[T; 3]) -> [T; 3] {
    let dist = (zi - p[1]).hypot(p[0]);
    [p[0] / dist, -(zi - p[1]) / dist, T::one()]
}

fn normal_equations<T: Real>(z: &[T], d: &[T], p: &[T; 3]) -> ([[T; 3]; 3], [T; 3]) {
    let mut jtj = [[T::zero(); 3]; 3];
    let mut jtr = [T::zero(); 3];
    for (&zi, r) in z.iter().zip(residuals(z, d, p)) {
        let j = jacobian_row(zi, p);
        for a in 0..3 {
            jtr[a] = jtr[a] + j[a] * r;
            for b in 0..3 {
                jtj[a][b] = jtj[a][b] + j[a] * j[b];
            }
        }
    }
    (jtj, jtr)
}

/// Gaussian elimination with partial pivoting.
fn solve3<T: Real>(mut a: [[T; 3]; 3], mut b: [T; 3]) -> Option<[T; 3]> {
    for col in 0..3 {
        let piv = (col..3)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap_or(std::cmp::Ordering::Equal))?;
        if !(a[piv][col].abs() > T::zero()) {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] = a[row][k] - f * a[col][k];
            }
            b[row] = b[row] - f * b[col];
        }
    }
    let mut x = [T::zero(); 3];
    for row in (0..3).rev() {
        let mut s = b[row];
        for k in row + 1..3 {
            s = s - a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

fn covariance<T: Real>(z: &[T], p: &[T; 3], sse: T, n: usize) -> (T, T) {
    if n <= 3 {
        return (T::infinity(), T::infinity());
    }
    let sigma2 = sse / T::of_usize(n - 3);
    let mut jtj = [[T::zero(); 3]; 3];
    for &zi in z {
        let j = jacobian_row(zi, p);
        for a in 0..3 {
            for b in 0..3 {
                jtj[a][b] = jtj[a][b] + j[a] * j[b];
            }
        }
    }
    let e0 = solve3(jtj, [T::one(), T::zero(), T::zero()]);
    let e1 = solve3(jtj, [T::zero(), T::one(), T::zero()]);
    match (e0, e1) {
        (Some(c0), Some(c1)) => (sigma2 * c0[0], sigma2 * c1[1]),
        _ => (T::infinity(), T::infinity()),
    }
}
