use rayon::prelude::*;

use super::{check_traces, envelope_of, screen, Diagnostics, LocalizationResult, DEFAULT_MIN_SNR};
use crate::arrivals::{detect_first_arrival, fit_wavefront, DetectionConfig, FitConfig, WavefrontFit};
use crate::dsp::{
    average_spectra, bandpass, power_spectrum, window_extract, EnvelopeImage, PowerSpectrum, DEFAULT_BAND,
    DEFAULT_WINDOW,
};
use crate::forward::TraceSet;
use crate::kedge::{ratio_curve_between, RatioCurve};
use crate::scene::{EdgeScene, PhysicsConfig};
use crate::{Error, Real, Result};

/// Candidate azimuths and the frequency band the ratio is matched over.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AzimuthSearch<T> {
    pub theta_min: T,
    pub theta_max: T,
    pub step: T,
    pub band: (T, T),
    /// An objective whose spread is below this (dB^2) is reported ambiguous.
    pub flat_tolerance: T,
    /// Parabolic interpolation between grid candidates.
    pub refine: bool,
}

impl<T: Real> Default for AzimuthSearch<T> {
    fn default() -> Self {
        Self {
            theta_min: T::one(),
            theta_max: T::of(40.0),
            step: T::of(0.5),
            band: (T::of(2000.0), T::of(9000.0)),
            flat_tolerance: T::of(1e-9),
            refine: true,
        }
    }
}

impl<T: Real> AzimuthSearch<T> {
    pub fn candidates(&self) -> Vec<T> {
        if !(self.step > T::zero()) || self.theta_max < self.theta_min {
            return Vec::new();
        }
        let n = ((self.theta_max - self.theta_min) / self.step + T::of(1e-9)).floor().to_usize().unwrap_or(0);
        (0..=n).map(|k| self.theta_min + self.step * T::of_usize(k)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AzimuthEstimate<T> {
    pub theta: T,
    /// Best candidate on the search grid.
    pub grid_theta: T,
    pub min_objective: T,
    /// `(theta, objective)` for every candidate.
    pub objective: Vec<(T, T)>,
}

/// Azimuth whose theoretical two-array ratio best matches `measured`, by
/// frequency-weighted mean squared difference in dB over the search band.
/// `d1` is the source-to-edge distance used for the theoretical curves.
pub fn estimate_azimuth<T: Real>(
    measured: &RatioCurve<T>,
    scene: &EdgeScene<T>,
    physics: &PhysicsConfig<T>,
    search: &AzimuthSearch<T>,
    d1: T,
) -> Result<AzimuthEstimate<T>> {
    let (lo, hi) = search.band;
    let (freqs, values): (Vec<T>, Vec<T>) = measured
        .freqs
        .iter()
        .zip(&measured.ratio_db)
        .filter(|(f, r)| **f >= lo && **f <= hi && **f > T::zero() && r.is_finite())
        .map(|(f, r)| (*f, *r))
        .unzip();
    if freqs.is_empty() {
        return Err(Error::EmptyBand);
    }
    let thetas = search.candidates();
    if thetas.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let wsum: T = freqs.iter().copied().sum();
    let objective: Vec<(T, T)> = thetas
        .par_iter()
        .map(|&theta| {
            let theory = ratio_curve_between(theta, scene.delta_theta, d1, scene.r2[0], scene.r2[1], &freqs, physics.c);
            let j =
                freqs.iter().zip(&values).zip(&theory.ratio_db).map(|((&f, &m), &t)| f * (m - t) * (m - t)).sum::<T>()
                    / wsum;
            (theta, j)
        })
        .collect();

    let mut k = 0;
    for (i, &(_, j)) in objective.iter().enumerate() {
        if j < objective[k].1 {
            k = i;
        }
    }
    let max = objective.iter().map(|p| p.1).fold(T::neg_infinity(), T::max);
    let min = objective[k].1;
    if !(max - min >= search.flat_tolerance) {
        return Err(Error::Ambiguous { spread: (max - min).as_f64() });
    }
    let mut theta = objective[k].0;
    if search.refine && k > 0 && k + 1 < objective.len() {
        let (a, b, c) = (objective[k - 1].1, objective[k].1, objective[k + 1].1);
        let denom = a - T::of(2.0) * b + c;
        if denom > T::zero() {
            let off = (T::of(0.5) * (a - c) / denom).max(T::of(-0.5)).min(T::of(0.5));
            theta = theta + off * search.step;
        }
    }
    Ok(AzimuthEstimate { theta, grid_theta: objective[k].0, min_objective: min, objective })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeConfig<T> {
    pub band: (T, T),
    pub detection: DetectionConfig<T>,
    pub fit: FitConfig<T>,
    /// Spectral analysis window, seconds.
    pub window: T,
    /// Channels per array nearest the source height whose spectra are averaged.
    pub n_central: usize,
    /// Largest spectral grid step, Hz.
    pub spectrum_step: T,
    /// Subtract the background power spectrum measured in the noise window.
    pub subtract_noise: bool,
    pub search: AzimuthSearch<T>,
    /// Largest allowed disagreement between the two arrays' heights, meters.
    pub max_z0_disagreement: T,
    pub min_snr: T,
}

impl<T: Real> Default for EdgeConfig<T> {
    fn default() -> Self {
        Self {
            band: (T::of(DEFAULT_BAND.0), T::of(DEFAULT_BAND.1)),
            detection: DetectionConfig::default(),
            fit: FitConfig::default(),
            window: T::of(DEFAULT_WINDOW),
            n_central: 3,
            spectrum_step: T::of(100.0),
            subtract_noise: false,
            search: AzimuthSearch::default(),
            max_z0_disagreement: T::of(0.2),
            min_snr: T::of(DEFAULT_MIN_SNR),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EdgeReport<T> {
    pub result: LocalizationResult<T>,
    pub envelopes: [EnvelopeImage<T>; 2],
    pub fits: [WavefrontFit<T>; 2],
    pub ratio: RatioCurve<T>,
    pub azimuth: AzimuthEstimate<T>,
}

pub fn localize_edge<T: Real>(
    traces: &TraceSet<T>,
    scene: &EdgeScene<T>,
    physics: &PhysicsConfig<T>,
    config: &EdgeConfig<T>,
) -> Result<LocalizationResult<T>> {
    run_edge(traces, scene, physics, config).map(|r| r.result)
}

fn inverse_variance<T: Real>(a: T, va: T, b: T, vb: T) -> T {
    let usable = |v: T| v.is_finite() && v > T::zero();
    if usable(va) && usable(vb) {
        (a / va + b / vb) / (T::one() / va + T::one() / vb)
    } else {
        (a + b) / T::of(2.0)
    }
}

/// Wavefront fit on each array, height consistency check, inverse-variance
/// combination of range and height, then azimuth from the spectral ratio.
pub fn run_edge<T: Real>(
    traces: &TraceSet<T>,
    scene: &EdgeScene<T>,
    physics: &PhysicsConfig<T>,
    config: &EdgeConfig<T>,
) -> Result<EdgeReport<T>> {
    let found = traces.n_arrays();
    if found != 2 {
        return Err(Error::TwoArraysRequired { found });
    }
    let v = scene.violations();
    if !v.is_empty() {
        let list: Vec<String> = v.iter().map(ToString::to_string).collect();
        return Err(Error::InvalidInput(list.join("; ")));
    }
    check_traces(traces, physics, scene.arrays[0].count + scene.arrays[1].count)?;

    let mut envelopes = Vec::with_capacity(2);
    let mut fits = Vec::with_capacity(2);
    for k in 0..2 {
        let channels = traces.array_channels(k);
        if channels.len() != scene.arrays[k].count {
            return Err(Error::InvalidInput(format!(
                "array {k} has {} channels in the traces but {} in the scene",
                channels.len(),
                scene.arrays[k].count
            )));
        }
        let env = envelope_of(traces, &channels, config.band)?;
        screen(&env, config.detection.noise_window, config.min_snr)?;
        let arrivals = detect_first_arrival(&env, &config.detection)?;
        if arrivals.n_detected() < 3 {
            return Err(Error::NoDetection);
        }
        fits.push(fit_wavefront(&arrivals, physics.c, &config.fit)?);
        envelopes.push(env);
    }
    let fits = [fits[0], fits[1]];
    if (fits[0].z0 - fits[1].z0).abs() > config.max_z0_disagreement {
        return Err(Error::InconsistentHeights { z0_a: fits[0].z0.as_f64(), z0_b: fits[1].z0.as_f64() });
    }
    let z0 = inverse_variance(fits[0].z0, fits[0].var_z0, fits[1].z0, fits[1].var_z0);
    let r1 = inverse_variance(fits[0].r0 - scene.r2[0], fits[0].var_r0, fits[1].r0 - scene.r2[1], fits[1].var_r0);
    if !(r1 > T::zero()) {
        return Err(Error::Degenerate(format!("fitted range {r1} m does not reach past the edge")));
    }

    let ratio = measure_ratio(traces, scene, &fits, z0, physics, config)?;
    let azimuth = estimate_azimuth(&ratio, scene, physics, &config.search, r1)?;

    let n = T::of_usize(fits[0].n_used + fits[1].n_used);
    let rmse = ((fits[0].rmse * fits[0].rmse * T::of_usize(fits[0].n_used)
        + fits[1].rmse * fits[1].rmse * T::of_usize(fits[1].n_used))
        / n)
        .sqrt();
    let result = LocalizationResult {
        r1,
        theta: azimuth.theta,
        z0,
        diagnostics: Diagnostics {
            rmse,
            peak_metric: azimuth.min_objective,
            objective: azimuth.objective.clone(),
            t0: (fits[0].t0 + fits[1].t0) / T::of(2.0),
        },
    };
    let [e0, e1]: [EnvelopeImage<T>; 2] = envelopes.try_into().map_err(|_| Error::NoDetection)?;
    Ok(EdgeReport { result, envelopes: [e0, e1], fits, ratio, azimuth })
}

/// Per-array power spectrum averaged over the `n_central` channels nearest
/// `z0`, each windowed at its fitted arrival time, and the near/far ratio in
/// dB. Bins where either spectrum is not above its background are NaN.
pub fn measure_ratio<T: Real>(
    traces: &TraceSet<T>,
    scene: &EdgeScene<T>,
    fits: &[WavefrontFit<T>; 2],
    z0: T,
    physics: &PhysicsConfig<T>,
    config: &EdgeConfig<T>,
) -> Result<RatioCurve<T>> {
    let mut spectra = Vec::with_capacity(2);
    for k in 0..2 {
        let mut channels = traces.array_channels(k);
        channels.sort_by(|&a, &b| {
            let da = (traces.geometry[a].z - z0).abs();
            let db = (traces.geometry[b].z - z0).abs();
            da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
        });
        channels.truncate(config.n_central.max(1));
        let per: Vec<(PowerSpectrum<T>, Option<PowerSpectrum<T>>)> = channels
            .par_iter()
            .map(|&ch| channel_spectrum(traces, ch, &fits[k], physics.c, config))
            .collect::<Result<_>>()?;
        let (signal, noise): (Vec<_>, Vec<_>) = per.into_iter().unzip();
        let mut avg = average_spectra(&signal)?;
        if config.subtract_noise {
            let noise: Vec<PowerSpectrum<T>> = noise.into_iter().flatten().collect();
            if !noise.is_empty() {
                let floor = average_spectra(&noise)?;
                for (p, n) in avg.power.iter_mut().zip(&floor.power) {
                    *p = *p - *n;
                }
            }
        }
        spectra.push(avg);
    }
    let ten = T::of(10.0);
    let ratio_db = spectra[0]
        .power
        .iter()
        .zip(&spectra[1].power)
        .map(|(&a, &b)| if a > T::zero() && b > T::zero() { ten * (a / b).log10() } else { T::nan() })
        .collect();
    Ok(RatioCurve { freqs: spectra[0].freqs.clone(), ratio_db, theta: T::nan(), delta_theta: scene.delta_theta })
}

/// Windowed spectrum at the channel's fitted arrival, and the mean spectrum
/// of same-length windows tiling the leading noise window.
fn channel_spectrum<T: Real>(
    traces: &TraceSet<T>,
    ch: usize,
    fit: &WavefrontFit<T>,
    c: T,
    config: &EdgeConfig<T>,
) -> Result<(PowerSpectrum<T>, Option<PowerSpectrum<T>>)> {
    let fs = traces.fs;
    let x = bandpass(&traces.samples[ch], fs, config.band.0, config.band.1)?;
    let center = fit.toa(traces.geometry[ch].z, c);
    let seg = window_extract(&x, fs, traces.t_start, center, config.window)?;
    let signal = power_spectrum(&seg.samples, fs, config.spectrum_step, center);

    let count = (config.detection.noise_window / config.window).floor().to_usize().unwrap_or(0);
    if count == 0 {
        return Ok((signal, None));
    }
    let noise: Vec<PowerSpectrum<T>> = (0..count)
        .map(|i| {
            let mid = traces.t_start + config.window * (T::of_usize(i) + T::of(0.5));
            window_extract(&x, fs, traces.t_start, mid, config.window)
                .map(|s| power_spectrum(&s.samples, fs, config.spectrum_step, mid))
        })
        .collect::<Result<_>>()?;
    Ok((signal, Some(average_spectra(&noise)?)))
}
