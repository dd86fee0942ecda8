//! Multichannel WAV in and out.

use anyhow::{bail, Context};
use hound::{SampleFormat as HoundFormat, WavReader, WavSpec, WavWriter};
use std::path::Path;

use crate::config::SampleFormat;
use diffloc::Traces;

/// Writes interleaved samples and returns the scale that maps the stored
/// values back to trace units (1 for float, peak / 32767-ish for PCM).
pub fn write(path: &Path, traces: &Traces, format: SampleFormat) -> anyhow::Result<f64> {
    let channels = u16::try_from(traces.n_channels()).context("too many channels for WAV")?;
    let fs = traces.fs.round() as u32;
    let (bits, sample_format) = match format {
        SampleFormat::Float => (32, HoundFormat::Float),
        SampleFormat::Pcm16 => (16, HoundFormat::Int),
    };
    let spec = WavSpec { channels, sample_rate: fs, bits_per_sample: bits, sample_format };
    let mut w = WavWriter::create(path, spec).with_context(|| format!("creating {}", path.display()))?;
    let n = traces.n_samples();
    let scale = match format {
        SampleFormat::Float => 1.0,
        SampleFormat::Pcm16 => {
            let peak = traces.samples.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
            if peak > 0.0 {
                peak / 32_000.0
            } else {
                1.0
            }
        }
    };
    for i in 0..n {
        for ch in &traces.samples {
            match format {
                SampleFormat::Float => w.write_sample(ch[i] as f32)?,
                SampleFormat::Pcm16 => w.write_sample((ch[i] / scale).round() as i16)?,
            }
        }
    }
    w.finalize()?;
    Ok(scale)
}

/// Per-channel samples and the sample rate. `scale` multiplies the stored
/// values; without one, integer samples are normalized to full scale 1.
pub fn read(path: &Path, scale: Option<f64>) -> anyhow::Result<(Vec<Vec<f64>>, f64)> {
    let mut r = WavReader::open(path).with_context(|| format!("opening {}", path.display()))?;
    let spec = r.spec();
    let nch = spec.channels as usize;
    if nch == 0 {
        bail!("{} has no channels", path.display());
    }
    let flat: Vec<f64> = match spec.sample_format {
        HoundFormat::Float => {
            let k = scale.unwrap_or(1.0);
            r.samples::<f32>().map(|s| s.map(|v| f64::from(v) * k)).collect::<Result<_, _>>()?
        }
        HoundFormat::Int => {
            let k = scale.unwrap_or_else(|| 1.0 / 2f64.powi(i32::from(spec.bits_per_sample) - 1));
            r.samples::<i32>().map(|s| s.map(|v| f64::from(v) * k)).collect::<Result<_, _>>()?
        }
    };
    let mut out = vec![Vec::with_capacity(flat.len() / nch); nch];
    for frame in flat.chunks_exact(nch) {
        for (c, &v) in frame.iter().enumerate() {
            out[c].push(v);
        }
    }
    Ok((out, f64::from(spec.sample_rate)))
}
