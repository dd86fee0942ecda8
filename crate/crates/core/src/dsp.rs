//! Signal conditioning: zero-phase band-pass, analytic-signal envelope,
//! tapered analysis windows and one-sided power spectra.

use std::sync::Arc;

use num_complex::Complex;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Real, Result};

pub const DEFAULT_BAND: (f64, f64) = (500.0, 9000.0);
pub const DEFAULT_WINDOW: f64 = 0.7e-3;
/// Fraction of the window tapered at each end.
pub const TAPER_FRACTION: f64 = 0.1;

pub(crate) fn plan<T: Real>(n: usize, inverse: bool) -> Arc<dyn Fft<T>> {
    let mut planner = FftPlanner::new();
    if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    }
}

fn padded_len(n: usize) -> usize {
    (2 * n).next_power_of_two().max(2)
}

/// Zero-phase band-pass.
///
/// The trace is zero-padded to at least twice its length and multiplied in
/// the frequency domain by a real gain: unity over `[lo, hi]`, raised-cosine
/// shoulders down to zero at `0.6 lo` and `1.5 hi` (or Nyquist). A real gain
/// has no phase, so arrival times are not shifted.
pub fn bandpass<T: Real>(trace: &[T], fs: T, lo: T, hi: T) -> Result<Vec<T>> {
    let nyq = fs / T::of(2.0);
    if !(lo > T::zero() && lo < hi && hi < nyq) {
        return Err(Error::InvalidBand { lo: lo.as_f64(), hi: hi.as_f64(), fs: fs.as_f64() });
    }
    if trace.is_empty() {
        return Ok(Vec::new());
    }
    let n = padded_len(trace.len());
    let mut buf: Vec<Complex<T>> = trace.iter().map(|&x| Complex::new(x, T::zero())).collect();
    buf.resize(n, Complex::new(T::zero(), T::zero()));
    plan::<T>(n, false).process(&mut buf);

    let lo_stop = lo * T::of(0.6);
    let hi_stop = (hi * T::of(1.5)).min(nyq);
    let df = fs / T::of_usize(n);
    for (k, v) in buf.iter_mut().enumerate() {
        let bin = if k <= n / 2 { k } else { n - k };
        let g = band_gain(T::of_usize(bin) * df, lo_stop, lo, hi, hi_stop);
        *v = *v * g;
    }
    plan::<T>(n, true).process(&mut buf);
    let scale = T::one() / T::of_usize(n);
    Ok(buf[..trace.len()].iter().map(|c| c.re * scale).collect())
}

fn band_gain<T: Real>(f: T, lo_stop: T, lo: T, hi: T, hi_stop: T) -> T {
    let half = T::of(0.5);
    if f <= lo_stop || f >= hi_stop {
        T::zero()
    } else if f < lo {
        let u = (f - lo_stop) / (lo - lo_stop);
        half - half * (T::PI() * u).cos()
    } else if f <= hi {
        T::one()
    } else {
        let u = (f - hi) / (hi_stop - hi);
        half + half * (T::PI() * u).cos()
    }
}

/// Magnitude of the analytic signal; same length as the input.
pub fn envelope<T: Real>(trace: &[T]) -> Vec<T> {
    if trace.is_empty() {
        return Vec::new();
    }
    let n = padded_len(trace.len());
    let mut buf: Vec<Complex<T>> = trace.iter().map(|&x| Complex::new(x, T::zero())).collect();
    buf.resize(n, Complex::new(T::zero(), T::zero()));
    plan::<T>(n, false).process(&mut buf);
    let two = T::of(2.0);
    for (k, v) in buf.iter_mut().enumerate() {
        if k == 0 || k == n / 2 {
            continue;
        }
        if k < n / 2 {
            *v = *v * two;
        } else {
            *v = Complex::new(T::zero(), T::zero());
        }
    }
    plan::<T>(n, true).process(&mut buf);
    let scale = T::one() / T::of_usize(n);
    buf[..trace.len()].iter().map(|c| c.norm() * scale).collect()
}

/// Envelope image `A(z, t)`: one row per microphone, rows sorted by height.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeImage<T> {
    pub values: Vec<Vec<T>>,
    pub fs: T,
    pub heights: Vec<T>,
    /// Time of the first column, seconds.
    pub t_start: T,
    /// Index of each row in the channel list it was built from.
    pub channels: Vec<usize>,
}

impl<T: Real> EnvelopeImage<T> {
    /// Band-passes and demodulates every channel. Rows come out sorted by
    /// height whatever the input order.
    pub fn from_channels(channels: &[&[T]], heights: &[T], fs: T, t_start: T, band: (T, T)) -> Result<Self> {
        if channels.len() != heights.len() {
            return Err(Error::InvalidInput(format!("{} channels but {} heights", channels.len(), heights.len())));
        }
        let rows: Vec<Vec<T>> = channels
            .par_iter()
            .map(|x| bandpass(x, fs, band.0, band.1).map(|y| envelope(&y)))
            .collect::<Result<_>>()?;
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by(|&a, &b| heights[a].partial_cmp(&heights[b]).unwrap_or(std::cmp::Ordering::Equal));
        let mut slots: Vec<Option<Vec<T>>> = rows.into_iter().map(Some).collect();
        Ok(Self {
            values: order.iter().map(|&i| slots[i].take().unwrap_or_default()).collect(),
            fs,
            heights: order.iter().map(|&i| heights[i]).collect(),
            t_start,
            channels: order,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.values.len()
    }

    pub fn n_samples(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn time_of(&self, index: T) -> T {
        self.t_start + index / self.fs
    }

    /// Fractional sample index of time `t`.
    pub fn index_of(&self, t: T) -> T {
        (t - self.t_start) * self.fs
    }

    /// Largest value of the image.
    pub fn peak(&self) -> T {
        self.values.iter().flatten().fold(T::zero(), |m, &v| m.max(v))
    }

    pub fn scaled(&self, k: T) -> Self {
        let mut out = self.clone();
        for row in &mut out.values {
            for v in row.iter_mut() {
                *v = *v * k;
            }
        }
        out
    }
}

/// Tapered analysis window cut from a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment<T> {
    pub samples: Vec<T>,
    /// Index of the first sample in the source trace.
    pub start: usize,
    /// The requested window ran off either end of the trace.
    pub clipped: bool,
}

/// Cuts `round(width * fs)` samples centered on time `center` and applies a
/// raised-cosine taper over [`TAPER_FRACTION`] of each end. Windows that run
/// off the trace are clipped and flagged.
pub fn window_extract<T: Real>(trace: &[T], fs: T, t_start: T, center: T, width: T) -> Result<Segment<T>> {
    let len = (width * fs).round().to_i64().unwrap_or(0);
    if len <= 0 || trace.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let c = ((center - t_start) * fs).to_f64().unwrap_or(f64::NAN);
    if !c.is_finite() {
        return Err(Error::EmptyWindow);
    }
    let first = (c - len as f64 / 2.0).round() as i64;
    let last = first + len;
    let lo = first.max(0);
    let hi = last.min(trace.len() as i64);
    if hi <= lo {
        return Err(Error::EmptyWindow);
    }
    let clipped = lo != first || hi != last;
    if clipped {
        log::warn!("analysis window [{first}, {last}) clipped to trace [0, {})", trace.len());
    }
    let mut samples = trace[lo as usize..hi as usize].to_vec();
    apply_taper(&mut samples);
    Ok(Segment { samples, start: lo as usize, clipped })
}

fn apply_taper<T: Real>(x: &mut [T]) {
    let n = x.len();
    let m = ((n as f64) * TAPER_FRACTION).round() as usize;
    if m == 0 {
        return;
    }
    let half = T::of(0.5);
    for i in 0..m {
        let w = half - half * (T::PI() * T::of((i as f64 + 0.5) / m as f64)).cos();
        x[i] = x[i] * w;
        x[n - 1 - i] = x[n - 1 - i] * w;
    }
}

/// One-sided power spectrum normalised so that the bins sum to the segment
/// energy (`sum x^2`).
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrum<T> {
    pub freqs: Vec<T>,
    pub power: Vec<T>,
    pub window_center: T,
    pub window_len: T,
}

impl<T: Real> PowerSpectrum<T> {
    pub fn df(&self) -> T {
        if self.freqs.len() > 1 {
            self.freqs[1] - self.freqs[0]
        } else {
            T::zero()
        }
    }

    fn same_grid(&self, other: &Self) -> bool {
        self.freqs.len() == other.freqs.len() && self.freqs.first() == other.freqs.first() && self.df() == other.df()
    }
}

/// Zero-pads the segment so the grid step is at most `max_step` Hz.
pub fn power_spectrum<T: Real>(segment: &[T], fs: T, max_step: T, window_center: T) -> PowerSpectrum<T> {
    let min_len = (fs / max_step).ceil().to_usize().unwrap_or(1);
    let n = segment.len().max(min_len).max(2).next_power_of_two();
    let mut buf: Vec<Complex<T>> = segment.iter().map(|&x| Complex::new(x, T::zero())).collect();
    buf.resize(n, Complex::new(T::zero(), T::zero()));
    plan::<T>(n, false).process(&mut buf);
    let inv_n = T::one() / T::of_usize(n);
    let two = T::of(2.0);
    let df = fs / T::of_usize(n);
    let (freqs, power) = (0..=n / 2)
        .map(|k| {
            let p = buf[k].norm_sqr() * inv_n;
            let p = if k == 0 || k == n / 2 { p } else { p * two };
            (T::of_usize(k) * df, p)
        })
        .unzip();
    PowerSpectrum { freqs, power, window_center, window_len: T::of_usize(segment.len()) / fs }
}

/// Per-bin arithmetic mean of spectra on one grid.
pub fn average_spectra<T: Real>(spectra: &[PowerSpectrum<T>]) -> Result<PowerSpectrum<T>> {
    let first = spectra.first().ok_or_else(|| Error::InvalidInput("no spectra to average".into()))?;
    if spectra.iter().any(|s| !s.same_grid(first)) {
        return Err(Error::MismatchedGrids);
    }
    let k = T::one() / T::of_usize(spectra.len());
    let power = (0..first.power.len()).map(|i| spectra.iter().map(|s| s.power[i]).sum::<T>() * k).collect();
    let center = spectra.iter().map(|s| s.window_center).sum::<T>() * k;
    Ok(PowerSpectrum { freqs: first.freqs.clone(), power, window_center: center, window_len: first.window_len })
}
