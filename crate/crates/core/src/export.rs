//! Plain-text and image dumps of intermediate and final results.
//!
//! Everything here writes to any [`std::io::Write`]; non-finite values are
//! written as `nan`.

use std::io::{self, Write};

use crate::arrivals::{ArrivalSet, WavefrontFit};
use crate::dsp::EnvelopeImage;
use crate::kedge::{LossCurve, RatioCurve};
use crate::localize::{Heatmap, LocalizationResult};
use crate::Real;

fn num<T: Real>(v: T) -> String {
    if v.is_finite() {
        format!("{}", v.as_f64())
    } else {
        "nan".to_string()
    }
}

fn row<T: Real>(w: &mut impl Write, values: impl IntoIterator<Item = T>) -> io::Result<()> {
    let cells: Vec<String> = values.into_iter().map(num).collect();
    writeln!(w, "{}", cells.join(","))
}

/// Header `r1_m,theta_deg,z0_m,rmse_s,peak_metric` and one data row.
pub fn write_result_csv<T: Real>(w: &mut impl Write, result: &LocalizationResult<T>) -> io::Result<()> {
    writeln!(w, "r1_m,theta_deg,z0_m,rmse_s,peak_metric")?;
    row(w, [result.r1, result.theta, result.z0, result.diagnostics.rmse, result.diagnostics.peak_metric])
}

/// Heatmap as a matrix: one line per `v` row (and height layer, in order),
/// one column per `u` cell. Cells outside the search sector are `nan`.
pub fn write_heatmap_csv<T: Real>(w: &mut impl Write, map: &Heatmap<T>) -> io::Result<()> {
    let (nu, nv, nz) = map.shape;
    let g = &map.grid;
    writeln!(w, "# u0={} v0={} step={} nu={nu} nv={nv} nz={nz}", num(g.u.0), num(g.v.0), num(g.step))?;
    for iz in 0..nz {
        for iv in 0..nv {
            let base = (iz * nv + iv) * nu;
            let cells = (0..nu).map(|iu| if map.valid[base + iu] { map.values[base + iu] } else { T::nan() });
            row(w, cells)?;
        }
    }
    Ok(())
}

/// Binary 8-bit PGM of the first height layer, min-max normalized over the
/// valid cells. Row 0 is the largest `v` so the image reads like a map.
pub fn write_heatmap_pgm<T: Real>(w: &mut impl Write, map: &Heatmap<T>) -> io::Result<()> {
    let (nu, nv, _) = map.shape;
    let layer = &map.values[..nu * nv];
    let valid = &map.valid[..nu * nv];
    let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
    for (&v, &ok) in layer.iter().zip(valid) {
        if ok && v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let span = hi - lo;
    write!(w, "P5\n{nu} {nv}\n255\n")?;
    let mut pixels = Vec::with_capacity(nu * nv);
    for iv in (0..nv).rev() {
        for iu in 0..nu {
            let k = iv * nu + iu;
            let v = layer[k];
            let p = if !valid[k] || !v.is_finite() || !(span > T::zero()) {
                0
            } else {
                ((v - lo) / span * T::of(255.0)).round().to_u8().unwrap_or(0)
            };
            pixels.push(p);
        }
    }
    w.write_all(&pixels)
}

/// Envelope image as a matrix: `channel,height_m` then one column per sample.
/// The first line gives the sample times.
pub fn write_envelope_csv<T: Real>(w: &mut impl Write, env: &EnvelopeImage<T>) -> io::Result<()> {
    write!(w, "channel,height_m")?;
    for i in 0..env.n_samples() {
        write!(w, ",{}", num(env.time_of(T::of_usize(i))))?;
    }
    writeln!(w)?;
    for (r, values) in env.values.iter().enumerate() {
        write!(w, "{},{}", env.channels[r], num(env.heights[r]))?;
        for &v in values {
            write!(w, ",{}", num(v))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// One line per channel; undetected channels have an empty `toa_s`.
pub fn write_arrivals_csv<T: Real>(w: &mut impl Write, arrivals: &ArrivalSet<T>) -> io::Result<()> {
    writeln!(w, "height_m,toa_s,confidence,peak,background")?;
    for i in 0..arrivals.heights.len() {
        let toa = arrivals.toa[i].map(num).unwrap_or_default();
        writeln!(
            w,
            "{},{toa},{},{},{}",
            num(arrivals.heights[i]),
            num(arrivals.confidence[i]),
            num(arrivals.peak[i]),
            num(arrivals.background[i])
        )?;
    }
    Ok(())
}

/// Header plus one row per fit, e.g. one per array.
pub fn write_fits_csv<T: Real>(w: &mut impl Write, fits: &[WavefrontFit<T>]) -> io::Result<()> {
    writeln!(w, "r0_m,z0_m,t0_s,rmse_s,n_used,var_r0,var_z0")?;
    for f in fits {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            num(f.r0),
            num(f.z0),
            num(f.t0),
            num(f.rmse),
            f.n_used,
            num(f.var_r0),
            num(f.var_z0)
        )?;
    }
    Ok(())
}

/// Two-column curve with `# key=value` geometry lines before the header.
pub fn write_curve_csv<T: Real>(
    w: &mut impl Write,
    geometry: &[(&str, T)],
    x_name: &str,
    value_name: &str,
    x: &[T],
    values: &[T],
) -> io::Result<()> {
    for (k, v) in geometry {
        writeln!(w, "# {k}={}", num(*v))?;
    }
    writeln!(w, "{x_name},{value_name}")?;
    for (&a, &b) in x.iter().zip(values) {
        writeln!(w, "{},{}", num(a), num(b))?;
    }
    Ok(())
}

/// `freq_hz,value` with `value = |L|`.
pub fn write_loss_curve_csv<T: Real>(w: &mut impl Write, curve: &LossCurve<T>, c: T) -> io::Result<()> {
    let geometry = [("theta_deg", curve.theta), ("d1_m", curve.d1), ("d2_m", curve.d2), ("c_m_s", c)];
    write_curve_csv(w, &geometry, "freq_hz", "value", &curve.freqs, &curve.magnitude())
}

/// `freq_hz,value` with `value` the ratio in dB.
pub fn write_ratio_curve_csv<T: Real>(w: &mut impl Write, curve: &RatioCurve<T>, d1: T, d2: T, c: T) -> io::Result<()> {
    let geometry =
        [("theta_deg", curve.theta), ("delta_theta_deg", curve.delta_theta), ("d1_m", d1), ("d2_m", d2), ("c_m_s", c)];
    write_curve_csv(w, &geometry, "freq_hz", "value", &curve.freqs, &curve.ratio_db)
}

/// Azimuth objective as `theta_deg,objective`.
pub fn write_objective_csv<T: Real>(w: &mut impl Write, objective: &[(T, T)]) -> io::Result<()> {
    writeln!(w, "theta_deg,objective")?;
    for &(t, o) in objective {
        writeln!(w, "{},{}", num(t), num(o))?;
    }
    Ok(())
}
