//! Analytic forward model: each arrival is a delayed, spherically spread copy
//! of the emission, filtered by the knife-edge loss magnitude where it bends
//! round an edge. Synthesis runs in the frequency domain so fractional delays
//! are exact for the band-limited signal.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, StandardNormal};
use rayon::prelude::*;

use crate::dsp::plan;
use crate::kedge::{diffraction_loss, fresnel_param};
use crate::scene::{path_distance, DoorwayScene, EdgeScene, PhysicsConfig, Point3, SourceGroundTruth, Violation};
use crate::{Error, Real, Result};

/// Source signal. Arrival times refer to the center of a pulse and to the
/// first sample of a [`EmissionSpec::Samples`] emission.
#[derive(Debug, Clone, PartialEq)]
pub enum EmissionSpec<T> {
    /// A sinusoid segment covering `duty` of one period at `center_freq`.
    PulseCycle {
        center_freq: T,
        duty: T,
        amplitude: T,
    },
    Impulse {
        amplitude: T,
    },
    /// Arbitrary waveform sampled at the synthesis rate, e.g. loaded from a file.
    Samples {
        data: Vec<T>,
        amplitude: T,
    },
}

impl<T: Real> Default for EmissionSpec<T> {
    /// 40 % of a 5 kHz cycle.
    fn default() -> Self {
        Self::PulseCycle { center_freq: T::of(5000.0), duty: T::of(0.4), amplitude: T::one() }
    }
}

impl<T: Real> EmissionSpec<T> {
    pub fn amplitude(&self) -> T {
        match self {
            Self::PulseCycle { amplitude, .. } | Self::Impulse { amplitude } | Self::Samples { amplitude, .. } => {
                *amplitude
            }
        }
    }

    /// Length of the emission in seconds.
    pub fn duration(&self, fs: T) -> T {
        match self {
            Self::PulseCycle { center_freq, duty, .. } => *duty / *center_freq,
            Self::Impulse { .. } => T::zero(),
            Self::Samples { data, .. } => T::of_usize(data.len()) / fs,
        }
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if !self.amplitude().is_finite() {
            out.push(Violation::new("EmissionSpec.amplitude", "must be finite"));
        }
        match self {
            Self::PulseCycle { center_freq, duty, .. } => {
                if !(*center_freq > T::zero()) || !center_freq.is_finite() {
                    out.push(Violation::new("EmissionSpec.center_freq", "must be > 0"));
                }
                if !(*duty > T::zero() && *duty <= T::one()) {
                    out.push(Violation::new("EmissionSpec.duty", "must lie in (0, 1]"));
                }
            }
            Self::Impulse { .. } => {}
            Self::Samples { data, .. } => {
                if data.is_empty() {
                    out.push(Violation::new("EmissionSpec.data", "must not be empty"));
                }
            }
        }
        out
    }

    fn check(&self, fs: T) -> Result<()> {
        let v = self.violations();
        if !v.is_empty() {
            return Err(invalid(&v));
        }
        if let Self::PulseCycle { center_freq, .. } = self {
            let required = T::of(2.0) * *center_freq;
            if fs <= required {
                return Err(Error::Undersampled { required_fs: required.as_f64() });
            }
        }
        Ok(())
    }
}

fn invalid(v: &[Violation]) -> Error {
    let list: Vec<String> = v.iter().map(ToString::to_string).collect();
    Error::InvalidInput(list.join("; "))
}

/// Sampled emission. A pulse becomes `round(duty * fs / f)` samples taken at
/// the sample centers of its support, with one zero sample on either side.
pub fn emission_waveform<T: Real>(spec: &EmissionSpec<T>, fs: T) -> Result<Vec<T>> {
    spec.check(fs)?;
    Ok(match spec {
        EmissionSpec::PulseCycle { center_freq, duty, amplitude } => {
            let d = *duty / *center_freq;
            let n = (d * fs).round().to_usize().unwrap_or(0).max(1);
            let w = T::of(2.0) * T::PI() * *center_freq;
            let mid = T::of_usize(n - 1) / T::of(2.0);
            let mut out = vec![T::zero(); n + 2];
            for k in 0..n {
                let tau = d / T::of(2.0) + (T::of_usize(k) - mid) / fs;
                out[k + 1] = *amplitude * (w * tau).sin();
            }
            out
        }
        EmissionSpec::Impulse { amplitude } => vec![*amplitude],
        EmissionSpec::Samples { data, amplitude } => data.iter().map(|&x| x * *amplitude).collect(),
    })
}

/// Emission spectrum on bins `0..=n/2` of an `n`-point DFT at rate `fs`,
/// scaled so the inverse DFT gives samples. The pulse uses its continuous
/// Fourier transform centered on `t = 0`.
fn emission_spectrum<T: Real>(spec: &EmissionSpec<T>, fs: T, n: usize) -> Vec<Complex<T>> {
    let half = n / 2;
    let two_pi = T::of(2.0) * T::PI();
    match spec {
        EmissionSpec::PulseCycle { center_freq, duty, amplitude } => {
            let d = *duty / *center_freq;
            let w0 = two_pi * *center_freq;
            let phi = w0 * d / T::of(2.0);
            let e_pos = Complex::from_polar(T::one(), phi);
            let e_neg = Complex::from_polar(T::one(), -phi);
            let scale = Complex::new(T::zero(), -(*amplitude * d * fs / T::of(2.0)));
            (0..=half)
                .map(|k| {
                    let w = two_pi * fs * T::of_usize(k) / T::of_usize(n);
                    let a = sinc((w0 - w) * d / T::of(2.0));
                    let b = sinc((w0 + w) * d / T::of(2.0));
                    scale * (e_pos * a - e_neg * b)
                })
                .collect()
        }
        EmissionSpec::Impulse { amplitude } => vec![Complex::new(*amplitude, T::zero()); half + 1],
        EmissionSpec::Samples { data, amplitude } => {
            let mut buf: Vec<Complex<T>> = data.iter().map(|&x| Complex::new(x * *amplitude, T::zero())).collect();
            buf.resize(n, Complex::new(T::zero(), T::zero()));
            plan::<T>(n, false).process(&mut buf);
            buf.truncate(half + 1);
            buf
        }
    }
}

fn sinc<T: Real>(x: T) -> T {
    if x.abs() < T::of(1e-8) {
        T::one() - x * x / T::of(6.0)
    } else {
        x.sin() / x
    }
}

/// Noise and reverberation added on top of the noiseless arrivals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec<T> {
    /// White-noise level: ratio of the largest diffracted-arrival sample on
    /// an array to the noise standard deviation on that array, dB. `None`
    /// adds no noise.
    pub snr_db: Option<T>,
    /// Mean rate of echo events after each main arrival, events per second.
    pub reverb_density: T,
    /// Exponential decay constant of the echo amplitudes, seconds.
    pub reverb_decay: T,
    /// Echo amplitude relative to its parent arrival at zero lag.
    pub reverb_level: T,
    /// Gap between an arrival and its first possible echo, seconds.
    pub reverb_onset: T,
    pub seed: u64,
}

impl<T: Real> Default for NoiseSpec<T> {
    fn default() -> Self {
        Self {
            snr_db: None,
            reverb_density: T::zero(),
            reverb_decay: T::of(0.02),
            reverb_level: T::of(0.3),
            reverb_onset: T::of(1e-3),
            seed: 0,
        }
    }
}

impl<T: Real> NoiseSpec<T> {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn with_snr(snr_db: T, seed: u64) -> Self {
        Self { snr_db: Some(snr_db), seed, ..Self::default() }
    }

    /// White noise plus a moderate reverberant tail.
    pub fn reverberant(snr_db: T, seed: u64) -> Self {
        Self { snr_db: Some(snr_db), reverb_density: T::of(2000.0), seed, ..Self::default() }
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if let Some(s) = self.snr_db {
            if !s.is_finite() {
                out.push(Violation::new("NoiseSpec.snr_db", "must be finite"));
            }
        }
        if !(self.reverb_density >= T::zero()) || !self.reverb_density.is_finite() {
            out.push(Violation::new("NoiseSpec.reverb_density", "must be >= 0"));
        }
        if !(self.reverb_decay > T::zero()) {
            out.push(Violation::new("NoiseSpec.reverb_decay", "must be > 0"));
        }
        if !(self.reverb_level >= T::zero()) {
            out.push(Violation::new("NoiseSpec.reverb_level", "must be >= 0"));
        }
        if !(self.reverb_onset >= T::zero()) {
            out.push(Violation::new("NoiseSpec.reverb_onset", "must be >= 0"));
        }
        out
    }
}

/// Multichannel recording with per-channel microphone positions.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet<T> {
    pub samples: Vec<Vec<T>>,
    pub fs: T,
    pub geometry: Vec<Point3<T>>,
    /// Which array of the scene each channel belongs to.
    pub array_index: Vec<usize>,
    /// Time of the first sample, seconds.
    pub t_start: T,
}

impl<T: Real> TraceSet<T> {
    pub fn n_channels(&self) -> usize {
        self.samples.len()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn n_arrays(&self) -> usize {
        self.array_index.iter().max().map_or(0, |m| m + 1)
    }

    /// Channel indices belonging to array `k`.
    pub fn array_channels(&self, k: usize) -> Vec<usize> {
        (0..self.n_channels()).filter(|&i| self.array_index[i] == k).collect()
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.n_samples();
        if self.samples.is_empty() {
            out.push(Violation::new("TraceSet.samples", "must contain at least one channel"));
        }
        if self.samples.iter().any(|c| c.len() != n) {
            out.push(Violation::new("TraceSet.samples", "all channels must have the same length"));
        }
        if self.geometry.len() != self.samples.len() || self.array_index.len() != self.samples.len() {
            out.push(Violation::new("TraceSet.geometry", "one position and array index per channel"));
        }
        if !(self.fs > T::zero()) {
            out.push(Violation::new("TraceSet.fs", "must be > 0"));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathKind {
    Diffracted,
    Reflected,
}

/// One propagation path to one microphone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathArrival<T> {
    pub kind: PathKind,
    /// Arrival time of the emission reference point, seconds.
    pub time: T,
    /// Horizontal path length `R`, meters.
    pub horizontal: T,
    /// Spreading gain: coefficient over the 3D path length.
    pub gain: T,
    /// Diffraction angle and edge-to-array distance, for diffracted paths.
    pub diffraction: Option<(T, T)>,
}

/// Extra doorway-model parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoorwayOptions<T> {
    /// Amplitude coefficient of the far-jamb reflection.
    pub reflection: T,
}

impl<T: Real> Default for DoorwayOptions<T> {
    fn default() -> Self {
        Self { reflection: T::one() }
    }
}

fn check_inputs<T: Real>(
    scene_violations: Vec<Violation>,
    source: &SourceGroundTruth<T>,
    noise: &NoiseSpec<T>,
    physics: &PhysicsConfig<T>,
) -> Result<()> {
    let mut v = scene_violations;
    v.extend(source.violations());
    v.extend(noise.violations());
    v.extend(physics.violations(None));
    if !v.is_empty() {
        return Err(invalid(&v));
    }
    if !(source.theta > T::zero() && source.theta < T::of(180.0)) {
        return Err(Error::InvalidInput(format!(
            "source azimuth {} deg is not in the hidden region (0, 180)",
            source.theta
        )));
    }
    Ok(())
}

fn path<T: Real>(kind: PathKind, z: T, horizontal: T, source: &SourceGroundTruth<T>, c: T, coeff: T) -> PathArrival<T> {
    let length = (z - source.z0).hypot(horizontal);
    PathArrival { kind, time: source.t0 + length / c, horizontal, gain: coeff / length, diffraction: None }
}

/// Diffracted and reflected paths to every microphone of a doorway scene.
pub fn doorway_paths<T: Real>(
    scene: &DoorwayScene<T>,
    source: &SourceGroundTruth<T>,
    physics: &PhysicsConfig<T>,
    options: &DoorwayOptions<T>,
) -> Result<Vec<Vec<PathArrival<T>>>> {
    let frame = scene.frame().ok_or_else(|| Error::InvalidInput("array lies on the diffracting edge".into()))?;
    let s = frame.to_point(source.r1, source.theta, source.z0);
    let rd = path_distance(&s, &scene.edge_d, scene.r2_d);
    let rr = path_distance(&s, &scene.edge_r, scene.r2_r);
    Ok(scene
        .array
        .heights()
        .into_iter()
        .map(|z| {
            let mut d = path(PathKind::Diffracted, z, rd, source, physics.c, T::one());
            d.diffraction = Some((source.theta, scene.r2_d));
            let r = path(PathKind::Reflected, z, rr, source, physics.c, options.reflection);
            vec![d, r]
        })
        .collect())
}

/// Diffracted path to every microphone of both arrays of an edge scene,
/// array 0 first.
pub fn edge_paths<T: Real>(
    scene: &EdgeScene<T>,
    source: &SourceGroundTruth<T>,
    physics: &PhysicsConfig<T>,
) -> Vec<Vec<PathArrival<T>>> {
    let mut out = Vec::new();
    for (k, array) in scene.arrays.iter().enumerate() {
        let r = source.r1 + scene.r2[k];
        let angle = source.theta + scene.azimuth_offset(k);
        for z in array.heights() {
            let mut d = path(PathKind::Diffracted, z, r, source, physics.c, T::one());
            d.diffraction = Some((angle, scene.r2[k]));
            out.push(vec![d]);
        }
    }
    out
}

pub fn synthesize_doorway<T: Real>(
    scene: &DoorwayScene<T>,
    source: &SourceGroundTruth<T>,
    emission: &EmissionSpec<T>,
    noise: &NoiseSpec<T>,
    physics: &PhysicsConfig<T>,
    duration: T,
) -> Result<TraceSet<T>> {
    synthesize_doorway_with(scene, source, emission, noise, physics, duration, &DoorwayOptions::default())
}

/// Doorway traces: the knife-edge-filtered diffracted arrival, the later
/// far-jamb reflection, reverberation and white noise.
pub fn synthesize_doorway_with<T: Real>(
    scene: &DoorwayScene<T>,
    source: &SourceGroundTruth<T>,
    emission: &EmissionSpec<T>,
    noise: &NoiseSpec<T>,
    physics: &PhysicsConfig<T>,
    duration: T,
    options: &DoorwayOptions<T>,
) -> Result<TraceSet<T>> {
    check_inputs(scene.violations(), source, noise, physics)?;
    let paths = doorway_paths(scene, source, physics, options)?;
    let geometry = scene.array.positions();
    let array_index = vec![0; geometry.len()];
    render(&paths, geometry, array_index, emission, noise, physics, duration, source.r1)
}

/// Edge-scene traces: one diffracted arrival per microphone, with array `k`
/// filtered at the diffraction angle `theta + offset_k`.
pub fn synthesize_edge<T: Real>(
    scene: &EdgeScene<T>,
    source: &SourceGroundTruth<T>,
    emission: &EmissionSpec<T>,
    noise: &NoiseSpec<T>,
    physics: &PhysicsConfig<T>,
    duration: T,
) -> Result<TraceSet<T>> {
    check_inputs(scene.violations(), source, noise, physics)?;
    let paths = edge_paths(scene, source, physics);
    let mut geometry = Vec::new();
    let mut array_index = Vec::new();
    for (k, a) in scene.arrays.iter().enumerate() {
        let pos = a.positions();
        array_index.extend(std::iter::repeat(k).take(pos.len()));
        geometry.extend(pos);
    }
    render(&paths, geometry, array_index, emission, noise, physics, duration, source.r1)
}

/// Fraction of the band below Nyquist left untouched before the
/// anti-aliasing roll-off.
const ANTI_ALIAS_START: f64 = 0.8;
/// Room left after the last arrival for the filtered pulse to decay, seconds.
const TAIL_MARGIN: f64 = 0.5e-3;

#[allow(clippy::too_many_arguments)]
fn render<T: Real>(
    paths: &[Vec<PathArrival<T>>],
    geometry: Vec<Point3<T>>,
    array_index: Vec<usize>,
    emission: &EmissionSpec<T>,
    noise: &NoiseSpec<T>,
    physics: &PhysicsConfig<T>,
    duration: T,
    d1: T,
) -> Result<TraceSet<T>> {
    let fs = physics.fs;
    emission.check(fs)?;
    let t_start = T::zero();
    let half_len = emission.duration(fs) / T::of(2.0);
    let (lead, trail) = match emission {
        EmissionSpec::Samples { .. } => (T::zero(), T::of(2.0) * half_len),
        _ => (half_len, half_len),
    };
    let last = paths.iter().flatten().map(|p| p.time).fold(T::neg_infinity(), T::max);
    let first = paths.iter().flatten().map(|p| p.time).fold(T::infinity(), T::min);
    let minimum = last + trail + T::of(TAIL_MARGIN) - t_start;
    if !(duration >= minimum) {
        return Err(Error::DurationTooShort { duration: duration.as_f64(), minimum: minimum.as_f64() });
    }
    if first - lead < t_start {
        return Err(Error::InvalidInput(format!("first arrival at {} s starts before the trace; increase t0", first)));
    }

    let n = (duration * fs).round().to_usize().unwrap_or(0);
    let nfft = (2 * n).next_power_of_two().max(2);
    let half = nfft / 2;
    let df = fs / T::of_usize(nfft);
    let nyq = fs / T::of(2.0);

    let mut shape = emission_spectrum(emission, fs, nfft);
    let aa_start = nyq * T::of(ANTI_ALIAS_START);
    for (k, v) in shape.iter_mut().enumerate() {
        let f = T::of_usize(k) * df;
        if f > aa_start {
            let u = (f - aa_start) / (nyq - aa_start);
            *v = *v * (T::of(0.5) + T::of(0.5) * (T::PI() * u).cos());
        }
    }
    shape[half] = Complex::new(T::zero(), T::zero());

    let filtered: Vec<Vec<Vec<Complex<T>>>> = paths
        .par_iter()
        .map(|ch| {
            ch.iter()
                .map(|p| {
                    let mut s = shape.clone();
                    if let Some((angle, d2)) = p.diffraction {
                        for (k, v) in s.iter_mut().enumerate().skip(1) {
                            let f = T::of_usize(k) * df;
                            let g = diffraction_loss(fresnel_param(angle, f, d1, d2, physics.c)).norm();
                            *v = *v * g;
                        }
                        // The DC limit of |L| for any angle is 1/2.
                        s[0] = s[0] * T::of(0.5);
                    }
                    for v in s.iter_mut() {
                        *v = *v * p.gain;
                    }
                    s
                })
                .collect()
        })
        .collect();

    let channels: Vec<(Vec<T>, Vec<T>)> = paths
        .par_iter()
        .zip(&filtered)
        .enumerate()
        .map(|(ch, (arrivals, spectra))| {
            let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
            rng.set_stream(ch as u64);
            let mut direct = vec![Complex::new(T::zero(), T::zero()); half + 1];
            let mut rest = vec![Complex::new(T::zero(), T::zero()); half + 1];
            for (p, s) in arrivals.iter().zip(spectra) {
                let target = if p.kind == PathKind::Diffracted { &mut direct } else { &mut rest };
                add_delayed(target, s, T::one(), p.time - t_start, df);
            }
            if noise.reverb_density > T::zero() && noise.reverb_level > T::zero() {
                let gaps = Exp::new(noise.reverb_density.as_f64()).expect("positive rate");
                let end = t_start + duration;
                for (p, s) in arrivals.iter().zip(spectra) {
                    let mut t = p.time + noise.reverb_onset;
                    loop {
                        t = t + T::of(rng.sample(gaps));
                        if t >= end {
                            break;
                        }
                        let lag = t - p.time;
                        let sign = if rng.random::<bool>() { T::one() } else { -T::one() };
                        let a = sign * noise.reverb_level * (-lag / noise.reverb_decay).exp();
                        add_delayed(&mut rest, s, a, t - t_start, df);
                    }
                }
            }
            (inverse_real(&direct, nfft, n), inverse_real(&rest, nfft, n))
        })
        .collect();

    let n_arrays = array_index.iter().max().map_or(0, |m| m + 1);
    let mut peaks = vec![T::zero(); n_arrays];
    for ((d, _), &k) in channels.iter().zip(&array_index) {
        peaks[k] = d.iter().fold(peaks[k], |m, &v| m.max(v.abs()));
    }
    let sigmas: Vec<T> = peaks
        .iter()
        .map(|&peak| match noise.snr_db {
            Some(snr) => peak / T::of(10.0).powf(snr / T::of(20.0)),
            None => T::zero(),
        })
        .collect();

    let samples: Vec<Vec<T>> = channels
        .into_par_iter()
        .enumerate()
        .map(|(ch, (direct, rest))| {
            let sigma = sigmas[array_index[ch]];
            // Separate stream from the reverberation draws of this channel.
            let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
            rng.set_stream((1u64 << 32) + ch as u64);
            direct
                .iter()
                .zip(&rest)
                .map(|(&a, &b)| {
                    let w =
                        if sigma > T::zero() { sigma * T::of(rng.sample::<f64, _>(StandardNormal)) } else { T::zero() };
                    a + b + w
                })
                .collect()
        })
        .collect();

    Ok(TraceSet { samples, fs, geometry, array_index, t_start })
}

fn add_delayed<T: Real>(acc: &mut [Complex<T>], spectrum: &[Complex<T>], scale: T, delay: T, df: T) {
    let w = -T::of(2.0) * T::PI() * df * delay;
    for (k, (a, s)) in acc.iter_mut().zip(spectrum).enumerate() {
        let phase = w * T::of_usize(k);
        *a = *a + *s * Complex::from_polar(scale, phase);
    }
}

fn inverse_real<T: Real>(half_spectrum: &[Complex<T>], nfft: usize, n: usize) -> Vec<T> {
    let half = nfft / 2;
    let mut buf = vec![Complex::new(T::zero(), T::zero()); nfft];
    buf[0] = Complex::new(half_spectrum[0].re, T::zero());
    for k in 1..half {
        buf[k] = half_spectrum[k];
        buf[nfft - k] = half_spectrum[k].conj();
    }
    buf[half] = Complex::new(half_spectrum[half].re, T::zero());
    plan::<T>(nfft, true).process(&mut buf);
    let scale = T::one() / T::of_usize(nfft);
    buf[..n].iter().map(|c| c.re * scale).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrivals::toa_model;
    use crate::dsp::{bandpass, envelope, power_spectrum, window_extract};
    use crate::kedge::ratio_curve;

    fn physics() -> PhysicsConfig<f64> {
        PhysicsConfig::default()
    }

    fn truth(theta: f64) -> SourceGroundTruth<f64> {
        SourceGroundTruth::new(3.2, theta, 1.5, 0.01)
    }

    #[test]
    fn emission_examples() {
        let w: Vec<f64> = emission_waveform(&EmissionSpec::default(), 48_000.0).unwrap();
        let support = w.iter().filter(|v| v.abs() > 0.0).count();
        assert_eq!(support, 4);
        assert!((0.4_f64 / 5000.0 * 48_000.0 - 3.84).abs() < 1e-12);

        let imp = emission_waveform(&EmissionSpec::Impulse { amplitude: 2.0 }, 48_000.0).unwrap();
        assert_eq!(imp.iter().filter(|v| **v != 0.0).count(), 1);

        let full = EmissionSpec::PulseCycle { center_freq: 1000.0, duty: 1.0, amplitude: 1.0 };
        let w: Vec<f64> = emission_waveform(&full, 48_000.0).unwrap();
        assert_eq!(w.len(), 50);
        assert_eq!(w[0], 0.0);
        assert_eq!(w[49], 0.0);
        assert!(w[1].abs() < 0.07 && w[48].abs() < 0.07);
        assert!((w.iter().cloned().fold(0.0, f64::max) - 1.0).abs() < 0.01);
        let sum: f64 = w.iter().sum();
        assert!(sum.abs() < 1e-9);
    }

    #[test]
    fn undersampled_emission() {
        let spec = EmissionSpec::PulseCycle { center_freq: 30_000.0, duty: 0.4, amplitude: 1.0 };
        match emission_waveform(&spec, 48_000.0) {
            Err(Error::Undersampled { required_fs }) => assert_eq!(required_fs, 60_000.0),
            other => panic!("{other:?}"),
        }
        let bad = EmissionSpec::PulseCycle { center_freq: 5000.0, duty: 1.5, amplitude: 1.0 };
        assert!(matches!(emission_waveform(&bad, 48_000.0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn pulse_spectrum_matches_dft_of_fine_sampling() {
        // At a high rate the sampled pulse's DFT approaches the analytic one.
        let fs = 4.0e6;
        let spec = EmissionSpec::default();
        let n = 1 << 16;
        let analytic = emission_spectrum(&spec, fs, n);
        let w = emission_waveform(&spec, fs).unwrap();
        let centre = (w.len() - 1) as f64 / 2.0;
        for k in [0usize, 10, 80, 200] {
            let f = k as f64 * fs / n as f64;
            let mut acc = Complex::new(0.0, 0.0);
            for (i, &x) in w.iter().enumerate() {
                let t = (i as f64 - centre) / fs;
                acc += x * Complex::from_polar(1.0, -2.0 * std::f64::consts::PI * f * t);
            }
            let err = (acc - analytic[k]).norm();
            assert!(err < 2e-3 * analytic[0].norm().max(1.0), "bin {k}: {acc} vs {}", analytic[k]);
        }
    }

    #[test]
    fn doorway_arrivals_follow_wavefront_model() {
        let scene = DoorwayScene::preset();
        let src = truth(25.0);
        let tr = synthesize_doorway(&scene, &src, &EmissionSpec::default(), &NoiseSpec::noiseless(), &physics(), 0.04)
            .unwrap();
        assert_eq!(tr.n_channels(), 15);
        assert_eq!(tr.n_samples(), 1920);
        let fs = tr.fs;
        for (i, z) in scene.array.heights().into_iter().enumerate() {
            let want = toa_model(z, 4.0, 1.5, 0.01, 343.0);
            let env = envelope(&bandpass(&tr.samples[i], fs, 500.0, 9000.0).unwrap());
            let lo = ((want - 1e-3) * fs) as usize;
            let hi = ((want + 1e-3) * fs) as usize;
            let k = (lo..hi).max_by(|&a, &b| env[a].total_cmp(&env[b])).unwrap();
            assert!((k as f64 - want * fs).abs() <= 1.0, "ch {i}: {k} vs {}", want * fs);
            let first = env.iter().position(|&v| v > 0.3 * env[k]).unwrap();
            assert!((first as f64) < want * fs + 1.0);
        }
    }

    #[test]
    fn diffracted_precedes_reflected() {
        let scene = DoorwayScene::preset();
        for theta in [5.0, 25.0, 60.0, 89.0] {
            let paths = doorway_paths(&scene, &truth(theta), &physics(), &DoorwayOptions::default()).unwrap();
            for ch in &paths {
                assert!(ch[0].time < ch[1].time);
                assert_eq!(ch[0].kind, PathKind::Diffracted);
            }
        }
    }

    #[test]
    fn zero_amplitude_is_silent_and_linearity() {
        let scene = DoorwayScene::preset();
        let zero = EmissionSpec::PulseCycle { center_freq: 5000.0, duty: 0.4, amplitude: 0.0 };
        let tr = synthesize_doorway(&scene, &truth(25.0), &zero, &NoiseSpec::noiseless(), &physics(), 0.04).unwrap();
        assert!(tr.samples.iter().flatten().all(|&v| v == 0.0));

        let one = synthesize_doorway(
            &scene,
            &truth(25.0),
            &EmissionSpec::default(),
            &NoiseSpec::noiseless(),
            &physics(),
            0.04,
        )
        .unwrap();
        let three = EmissionSpec::PulseCycle { center_freq: 5000.0, duty: 0.4, amplitude: 3.0 };
        let tri = synthesize_doorway(&scene, &truth(25.0), &three, &NoiseSpec::noiseless(), &physics(), 0.04).unwrap();
        let peak = one.samples.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in one.samples.iter().flatten().zip(tri.samples.iter().flatten()) {
            assert!((3.0 * a - b).abs() <= 1e-12 * peak);
        }
    }

    #[test]
    fn causality() {
        let scene = DoorwayScene::preset();
        let src = truth(25.0);
        let tr = synthesize_doorway(&scene, &src, &EmissionSpec::default(), &NoiseSpec::noiseless(), &physics(), 0.04)
            .unwrap();
        let peak = tr.samples.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let onset = src.t0 + 4.0 / 343.0 - 0.4 / 5000.0 / 2.0;
        // A band-limited pulse at a fractional delay, filtered by a zero-phase
        // gain, is not strictly causal. The precursor is bounded and decays.
        for (lead, bound) in [(0.25e-3, 1e-2), (2e-3, 1e-3)] {
            let cut = ((onset - lead) * tr.fs) as usize;
            for ch in &tr.samples {
                assert!(ch[..cut].iter().all(|v| v.abs() < bound * peak), "lead {lead}");
            }
        }
    }

    #[test]
    fn larger_azimuth_less_energy() {
        let scene = DoorwayScene::preset();
        let grab = |theta: f64| {
            let tr = synthesize_doorway(
                &scene,
                &truth(theta),
                &EmissionSpec::default(),
                &NoiseSpec::noiseless(),
                &physics(),
                0.04,
            )
            .unwrap();
            let t = toa_model(scene.array.heights()[8], 4.0, 1.5, 0.01, 343.0);
            let seg = window_extract(&tr.samples[8], tr.fs, 0.0, t, 0.7e-3).unwrap();
            power_spectrum(&seg.samples, tr.fs, 100.0, t)
        };
        let (a, b) = (grab(25.0), grab(35.0));
        for ((f, pa), pb) in a.freqs.iter().zip(&a.power).zip(&b.power) {
            if *f >= 500.0 && *f <= 9000.0 {
                assert!(pb < pa, "{f} Hz");
            }
        }
    }

    fn edge_trace(theta: f64, noise: &NoiseSpec<f64>) -> (EdgeScene<f64>, TraceSet<f64>) {
        let scene = EdgeScene::preset();
        let src = SourceGroundTruth::new(3.1, theta, 1.3, 0.01);
        let tr = synthesize_edge(&scene, &src, &EmissionSpec::default(), noise, &physics(), 0.04).unwrap();
        (scene, tr)
    }

    #[test]
    fn edge_near_array_louder_at_small_azimuth() {
        let (_, tr) = edge_trace(5.0, &NoiseSpec::noiseless());
        assert_eq!(tr.n_channels(), 16);
        assert_eq!(tr.array_channels(1), (8..16).collect::<Vec<_>>());
        let energy = |k: usize| -> f64 {
            tr.array_channels(k)
                .iter()
                .map(|&i| bandpass(&tr.samples[i], tr.fs, 500.0, 9000.0).unwrap().iter().map(|v| v * v).sum::<f64>())
                .sum()
        };
        assert!(energy(0) > energy(1));
    }

    #[test]
    fn edge_ratio_matches_theory() {
        let (scene, tr) = edge_trace(10.0, &NoiseSpec::noiseless());
        let heights = scene.arrays[0].heights();
        // Channel 3 of each array sits at 1.24 m, nearest the source height.
        let t = toa_model(heights[3], 3.9, 1.3, 0.01, 343.0);
        let spec = |ch: usize| {
            let seg = window_extract(&tr.samples[ch], tr.fs, 0.0, t, 2e-3).unwrap();
            power_spectrum(&seg.samples, tr.fs, 50.0, t)
        };
        let (near, far) = (spec(3), spec(11));
        let freqs: Vec<f64> = near.freqs.iter().cloned().filter(|f| (1000.0..=8000.0).contains(f)).collect();
        let theory = ratio_curve(10.0, 25.0, 3.1, 0.8, &freqs, 343.0);
        for (f, want) in freqs.iter().zip(&theory.ratio_db) {
            let k = near.freqs.iter().position(|x| x == f).unwrap();
            let got = 10.0 * (near.power[k] / far.power[k]).log10();
            assert!((got - want).abs() < 0.5, "{f}: {got} vs {want}");
        }
    }

    #[test]
    fn edge_identical_azimuths_match() {
        let mut scene = EdgeScene::preset();
        scene.delta_theta = 1e-9;
        let src = SourceGroundTruth::new(3.1, 10.0, 1.3, 0.01);
        let tr =
            synthesize_edge(&scene, &src, &EmissionSpec::default(), &NoiseSpec::noiseless(), &physics(), 0.04).unwrap();
        let peak = tr.samples.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..8 {
            for (a, b) in tr.samples[i].iter().zip(&tr.samples[i + 8]) {
                assert!((a - b).abs() < 1e-9 * peak);
            }
        }
    }

    #[test]
    fn duration_too_short() {
        let scene = DoorwayScene::preset();
        match synthesize_doorway(
            &scene,
            &truth(25.0),
            &EmissionSpec::default(),
            &NoiseSpec::noiseless(),
            &physics(),
            1e-3,
        ) {
            Err(Error::DurationTooShort { minimum, .. }) => {
                assert!(minimum > 0.02 && minimum < 0.04)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn source_must_be_hidden() {
        let scene = DoorwayScene::preset();
        let r = synthesize_doorway(
            &scene,
            &truth(-5.0),
            &EmissionSpec::default(),
            &NoiseSpec::noiseless(),
            &physics(),
            0.04,
        );
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn deterministic_noise() {
        let noise = NoiseSpec::reverberant(20.0, 7);
        let (_, a) = edge_trace(10.0, &noise);
        let (_, b) = edge_trace(10.0, &noise);
        assert_eq!(a, b);
        let (_, c) = edge_trace(10.0, &NoiseSpec::reverberant(20.0, 8));
        assert_ne!(a, c);
    }

    #[test]
    fn snr_sets_noise_level() {
        let (_, clean) = edge_trace(10.0, &NoiseSpec::noiseless());
        let (_, noisy) = edge_trace(10.0, &NoiseSpec::with_snr(20.0, 1));
        for k in 0..2 {
            let chans = clean.array_channels(k);
            let peak = chans.iter().flat_map(|&i| &clean.samples[i]).fold(0.0f64, |m, v| m.max(v.abs()));
            let diff: Vec<f64> = chans
                .iter()
                .flat_map(|&i| clean.samples[i].iter().zip(&noisy.samples[i]).map(|(a, b)| b - a))
                .collect();
            let sd = (diff.iter().map(|d| d * d).sum::<f64>() / diff.len() as f64).sqrt();
            assert!((sd / (peak / 10.0) - 1.0).abs() < 0.05, "array {k}: {sd} vs {}", peak / 10.0);
        }
    }

    #[test]
    fn f32_synthesis_runs() {
        let scene = DoorwayScene::<f32>::preset();
        let src = SourceGroundTruth::new(3.2f32, 25.0, 1.5, 0.01);
        let tr = synthesize_doorway(
            &scene,
            &src,
            &EmissionSpec::default(),
            &NoiseSpec::with_snr(20.0, 1),
            &PhysicsConfig::default(),
            0.04,
        )
        .unwrap();
        assert!(tr.samples.iter().flatten().all(|v| v.is_finite()));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(6))]

        #[test]
        fn envelope_peak_on_model_toa(r1 in 1.5..6.0f64, theta in 3.0..80.0f64, z0 in 0.5..2.2f64) {
            let scene = DoorwayScene::preset();
            let src = SourceGroundTruth::new(r1, theta, z0, 0.01);
            let tr = synthesize_doorway(&scene, &src, &EmissionSpec::default(), &NoiseSpec::noiseless(), &physics(), 0.05)
                .unwrap();
            let paths = doorway_paths(&scene, &src, &physics(), &DoorwayOptions::default()).unwrap();
            for (i, ch) in paths.iter().enumerate() {
                let want = ch[0].time * tr.fs;
                let env = envelope(&bandpass(&tr.samples[i], tr.fs, 500.0, 9000.0).unwrap());
                let lo = (want - 20.0) as usize;
                let hi = (want + 20.0) as usize;
                let k = (lo..hi).max_by(|&a, &b| env[a].total_cmp(&env[b])).unwrap();
                proptest::prop_assert!((k as f64 - want.round()).abs() <= 1.0, "ch {}: {} vs {}", i, k, want);
            }
        }
    }
}
