//! The two inverse pipelines: the doorway heatmap localizer and the
//! single-edge wavefront-plus-spectral-ratio localizer.

mod doorway;
mod edge;

pub use doorway::{
    doorway_heatmap, doorway_heatmap_with, localize_doorway, run_doorway, DoorwayConfig, DoorwayReport, GridSpec,
    Heatmap, HeatmapOptions, Metric,
};
pub use edge::{
    estimate_azimuth, localize_edge, measure_ratio, run_edge, AzimuthEstimate, AzimuthSearch, EdgeConfig, EdgeReport,
};

use crate::dsp::EnvelopeImage;
use crate::forward::TraceSet;
use crate::scene::PhysicsConfig;
use crate::{Error, Real, Result};

/// Default gate length around each predicted arrival, seconds.
pub const DEFAULT_GATE: f64 = 0.2e-3;
/// Minimum ratio of the arrival envelope peak to the background peak.
pub const DEFAULT_MIN_SNR: f64 = 3.0;

/// Source estimate in polar form about the diffracting edge.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationResult<T> {
    pub r1: T,
    pub theta: T,
    pub z0: T,
    pub diagnostics: Diagnostics<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics<T> {
    /// Wavefront-fit RMS residual, seconds.
    pub rmse: T,
    /// Heatmap peak (doorway) or azimuth objective minimum (edge).
    pub peak_metric: T,
    /// `(theta, objective)` pairs of the azimuth search; empty for the doorway.
    pub objective: Vec<(T, T)>,
    pub t0: T,
}

/// Gated envelope amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct GateAmplitude<T> {
    /// Channel average.
    pub mean: T,
    pub per_channel: Vec<T>,
    /// Some gate ran off the trace and was shortened.
    pub clipped: bool,
}

/// Running integrals of the linearly interpolated envelope rows, so a gate
/// average costs O(1) whatever its length.
pub(crate) struct GateIntegrator<'a, T> {
    env: &'a EnvelopeImage<T>,
    prefix: Vec<Vec<T>>,
}

impl<'a, T: Real> GateIntegrator<'a, T> {
    pub(crate) fn new(env: &'a EnvelopeImage<T>) -> Self {
        let half = T::of(0.5);
        let prefix = env
            .values
            .iter()
            .map(|row| {
                let mut p = Vec::with_capacity(row.len());
                let mut acc = T::zero();
                p.push(acc);
                for w in row.windows(2) {
                    acc = acc + half * (w[0] + w[1]);
                    p.push(acc);
                }
                p
            })
            .collect();
        Self { env, prefix }
    }

    /// Integral of row `r` from sample 0 to fractional index `x` in
    /// `[0, n - 1]`.
    fn cumulative(&self, r: usize, x: T) -> T {
        let row = &self.env.values[r];
        let i = x.floor().to_usize().unwrap_or(0).min(row.len() - 1);
        if i + 1 >= row.len() {
            return self.prefix[r][i];
        }
        let u = x - T::of_usize(i);
        self.prefix[r][i] + u * row[i] + u * u * T::of(0.5) * (row[i + 1] - row[i])
    }

    fn value(&self, r: usize, x: T) -> T {
        let row = &self.env.values[r];
        let i = x.floor().to_usize().unwrap_or(0).min(row.len() - 1);
        if i + 1 >= row.len() {
            return row[i];
        }
        let u = x - T::of_usize(i);
        row[i] + u * (row[i + 1] - row[i])
    }

    /// Mean over `[t - gate/2, t + gate/2]` of row `r`, and whether the
    /// interval had to be clipped to the trace.
    pub(crate) fn mean(&self, r: usize, t: T, gate: T) -> (T, bool) {
        let n = self.env.values[r].len();
        if n == 0 {
            return (T::zero(), true);
        }
        let last = T::of_usize(n - 1);
        let half = gate * self.env.fs / T::of(2.0);
        let c = self.env.index_of(t);
        let (a, b) = (c - half, c + half);
        let (ca, cb) = (a.max(T::zero()).min(last), b.max(T::zero()).min(last));
        let clipped = ca != a || cb != b;
        if cb - ca <= T::of(1e-9) {
            return (self.value(r, ca), clipped);
        }
        ((self.cumulative(r, cb) - self.cumulative(r, ca)) / (cb - ca), clipped)
    }
}

/// Mean envelope within `gate` seconds centered on each channel's arrival
/// time, averaged over channels. Gates running off the trace are shortened
/// and reported.
pub fn gate_amplitude<T: Real>(env: &EnvelopeImage<T>, toa_per_channel: &[T], gate: T) -> Result<GateAmplitude<T>> {
    if !(gate >= T::zero()) {
        return Err(Error::InvalidInput("gate length must be >= 0".into()));
    }
    if toa_per_channel.len() != env.n_rows() {
        return Err(Error::InvalidInput(format!(
            "{} arrival times for {} envelope rows",
            toa_per_channel.len(),
            env.n_rows()
        )));
    }
    if env.n_rows() == 0 {
        return Err(Error::InvalidInput("empty envelope image".into()));
    }
    let gi = GateIntegrator::new(env);
    let mut clipped = false;
    let per_channel: Vec<T> = toa_per_channel
        .iter()
        .enumerate()
        .map(|(r, &t)| {
            let (m, c) = gi.mean(r, t, gate);
            clipped |= c;
            m
        })
        .collect();
    if clipped {
        log::warn!("gate ran off the trace and was clipped");
    }
    let mean = per_channel.iter().copied().sum::<T>() / T::of_usize(per_channel.len());
    Ok(GateAmplitude { mean, per_channel, clipped })
}

/// Checks that `traces` match the sample rate and the expected channel count.
pub(crate) fn check_traces<T: Real>(traces: &TraceSet<T>, physics: &PhysicsConfig<T>, channels: usize) -> Result<()> {
    let v = traces.violations();
    if !v.is_empty() {
        let list: Vec<String> = v.iter().map(ToString::to_string).collect();
        return Err(Error::InvalidInput(list.join("; ")));
    }
    if (traces.fs - physics.fs).abs() > T::of(1e-6) * physics.fs {
        return Err(Error::InvalidInput(format!(
            "traces sampled at {} Hz, expected fs = {} Hz",
            traces.fs, physics.fs
        )));
    }
    if traces.n_channels() != channels {
        return Err(Error::InvalidInput(format!(
            "{} channels in the traces but the scene has {channels} microphones",
            traces.n_channels()
        )));
    }
    Ok(())
}

/// Envelope image of the given channels.
pub(crate) fn envelope_of<T: Real>(traces: &TraceSet<T>, channels: &[usize], band: (T, T)) -> Result<EnvelopeImage<T>> {
    let rows: Vec<&[T]> = channels.iter().map(|&i| traces.samples[i].as_slice()).collect();
    let heights: Vec<T> = channels.iter().map(|&i| traces.geometry[i].z).collect();
    let mut env = EnvelopeImage::from_channels(&rows, &heights, traces.fs, traces.t_start, band)?;
    env.channels = env.channels.iter().map(|&k| channels[k]).collect();
    Ok(env)
}

/// Screening statistic: the median over rows of (envelope peak after the
/// noise window) / (envelope peak within it). Noise alone scores about 1.
pub fn peak_to_background<T: Real>(env: &EnvelopeImage<T>, noise_window: T) -> Result<T> {
    let n = env.n_samples();
    let m = (noise_window * env.fs).round().to_usize().unwrap_or(0).min(n);
    if m == 0 || m >= n {
        return Err(Error::InvalidInput("noise window does not fit the trace".into()));
    }
    let mut ratios: Vec<T> = env
        .values
        .iter()
        .map(|row| {
            let bg = row[..m].iter().fold(T::zero(), |a, &v| a.max(v));
            let peak = row[m..].iter().fold(T::zero(), |a, &v| a.max(v));
            if bg > T::zero() {
                peak / bg
            } else if peak > T::zero() {
                T::infinity()
            } else {
                T::zero()
            }
        })
        .collect();
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Ok(ratios[ratios.len() / 2])
}

pub(crate) fn screen<T: Real>(env: &EnvelopeImage<T>, noise_window: T, min_snr: T) -> Result<()> {
    let ratio = peak_to_background(env, noise_window)?;
    if ratio < min_snr {
        return Err(Error::LowSnr { ratio: ratio.as_f64(), limit: min_snr.as_f64() });
    }
    Ok(())
}
