use rayon::prelude::*;

use super::{
    check_traces, envelope_of, screen, Diagnostics, GateIntegrator, LocalizationResult, DEFAULT_GATE, DEFAULT_MIN_SNR,
};
use crate::arrivals::{
    detect_first_arrival, fit_wavefront, toa_model, ArrivalSet, DetectionConfig, FitConfig, WavefrontFit,
};
use crate::dsp::{EnvelopeImage, DEFAULT_BAND};
use crate::forward::TraceSet;
use crate::scene::{path_distance, DoorwayScene, EdgeFrame, PhysicsConfig, Point3};
use crate::{Error, Real, Result};

/// Horizontal search grid in the frame of the diffracting edge: `u` runs
/// along the line of sight, `v` towards the hidden side.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec<T> {
    pub u: (T, T),
    pub v: (T, T),
    pub step: T,
    /// Cells are kept only if their azimuth lies in `(min, max]` degrees and
    /// their distance from the edge is at most `r_max`.
    pub sector: Option<(T, T, T)>,
    /// Source heights to search. `None` fixes the height at the fitted `z0`.
    pub z_layers: Option<Vec<T>>,
}

impl<T: Real> GridSpec<T> {
    /// Quarter plane `0 < theta <= 90` out to `r_max`.
    pub fn hidden_sector(r_max: T, step: T) -> Self {
        Self {
            u: (T::zero(), r_max),
            v: (T::zero(), r_max),
            step,
            sector: Some((T::zero(), T::of(90.0), r_max)),
            z_layers: None,
        }
    }

    pub fn with_step(mut self, step: T) -> Self {
        self.step = step;
        self
    }

    /// Cell counts along `u`, `v` and the height layers.
    pub fn shape(&self) -> (usize, usize, usize) {
        let count = |(a, b): (T, T)| ((b - a) / self.step + T::of(1e-9)).floor().to_usize().unwrap_or(0) + 1;
        (count(self.u), count(self.v), self.z_layers.as_ref().map_or(1, Vec::len))
    }

    pub fn coord(&self, iu: usize, iv: usize) -> (T, T) {
        (self.u.0 + T::of_usize(iu) * self.step, self.v.0 + T::of_usize(iv) * self.step)
    }

    pub fn contains(&self, u: T, v: T) -> bool {
        match self.sector {
            None => true,
            Some((lo, hi, r_max)) => {
                let r = u.hypot(v);
                let th = v.atan2(u).to_degrees();
                r > T::zero() && r <= r_max && th > lo && th <= hi
            }
        }
    }

    fn check(&self) -> Result<()> {
        let ok = self.step > T::zero() && self.u.1 >= self.u.0 && self.v.1 >= self.v.0;
        if !ok || self.z_layers.as_ref().is_some_and(Vec::is_empty) {
            return Err(Error::EmptyGrid);
        }
        Ok(())
    }
}

impl<T: Real> Default for GridSpec<T> {
    /// 5 cm cells over the hidden quarter plane out to 6 m.
    fn default() -> Self {
        Self::hidden_sector(T::of(6.0), T::of(0.05))
    }
}

/// Heatmap metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    /// `(A_d / R_d^2) * (A_r / R_r^2)`.
    #[default]
    Product,
    /// Plain delay-and-sum of the two gated amplitudes, no range weighting.
    DelayAndSum,
}

/// Metric values over the grid, `values[(iz * nv + iv) * nu + iu]`.
/// Cells outside the grid's sector hold zero and are never the argmax.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap<T> {
    pub values: Vec<T>,
    pub valid: Vec<bool>,
    pub shape: (usize, usize, usize),
    pub grid: GridSpec<T>,
    /// Best grid cell in world coordinates.
    pub argmax: Point3<T>,
    pub argmax_value: T,
    pub argmax_index: (usize, usize, usize),
    /// Best point of a tenfold finer search within one cell of the argmax.
    pub refined: Option<(Point3<T>, T)>,
}

impl<T: Real> Heatmap<T> {
    pub fn get(&self, iu: usize, iv: usize, iz: usize) -> T {
        let (nu, nv, _) = self.shape;
        self.values[(iz * nv + iv) * nu + iu]
    }

    /// Best estimate: the refined point when present, else the grid argmax.
    pub fn best(&self) -> (Point3<T>, T) {
        self.refined.unwrap_or((self.argmax, self.argmax_value))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatmapOptions<T> {
    /// Gate length, seconds.
    pub gate: T,
    pub metric: Metric,
    pub refine: bool,
    /// When set, cells whose diffracted path differs from the fitted range
    /// by more than this many meters are excluded.
    pub range_window: Option<T>,
}

impl<T: Real> Default for HeatmapOptions<T> {
    fn default() -> Self {
        Self { gate: T::of(DEFAULT_GATE), metric: Metric::Product, refine: true, range_window: None }
    }
}

fn frame_point<T: Real>(frame: &EdgeFrame<T>, u: T, v: T, z: T) -> Point3<T> {
    Point3::new(
        frame.origin.x + u * frame.los.x + v * frame.normal.x,
        frame.origin.y + u * frame.los.y + v * frame.normal.y,
        z,
    )
}

struct Evaluator<'a, T> {
    gates: GateIntegrator<'a, T>,
    env: &'a EnvelopeImage<T>,
    scene: &'a DoorwayScene<T>,
    fit: &'a WavefrontFit<T>,
    c: T,
    opts: HeatmapOptions<T>,
}

impl<'a, T: Real> Evaluator<'a, T> {
    fn admits(&self, p: &Point3<T>) -> bool {
        self.opts
            .range_window
            .map_or(true, |w| (path_distance(p, &self.scene.edge_d, self.scene.r2_d) - self.fit.r0).abs() <= w)
    }

    /// Metric at world point `p`, with `p.z` the trial source height.
    fn metric(&self, p: &Point3<T>) -> T {
        let rd = path_distance(p, &self.scene.edge_d, self.scene.r2_d);
        let rr = path_distance(p, &self.scene.edge_r, self.scene.r2_r);
        let n = T::of_usize(self.env.n_rows());
        let (mut ad, mut ar) = (T::zero(), T::zero());
        for (r, &z) in self.env.heights.iter().enumerate() {
            let td = toa_model(z, rd, p.z, self.fit.t0, self.c);
            let tr = toa_model(z, rr, p.z, self.fit.t0, self.c);
            ad = ad + self.gates.mean(r, td, self.opts.gate).0;
            ar = ar + self.gates.mean(r, tr, self.opts.gate).0;
        }
        let (ad, ar) = (ad / n, ar / n);
        match self.opts.metric {
            Metric::Product => ad / (rd * rd) * (ar / (rr * rr)),
            Metric::DelayAndSum => (ad + ar) / T::of(2.0),
        }
    }
}

/// Gated-envelope heatmap with the default gate, product metric and
/// refinement.
pub fn doorway_heatmap<T: Real>(
    env: &EnvelopeImage<T>,
    scene: &DoorwayScene<T>,
    fit: &WavefrontFit<T>,
    grid: &GridSpec<T>,
    physics: &PhysicsConfig<T>,
) -> Result<Heatmap<T>> {
    doorway_heatmap_with(env, scene, fit, grid, physics, &HeatmapOptions::default())
}

/// For every cell: path lengths via both edges, arrival times from the
/// wavefront model with the fitted `z0` and `t0` (or the layer height),
/// gated envelope amplitudes, and the metric.
pub fn doorway_heatmap_with<T: Real>(
    env: &EnvelopeImage<T>,
    scene: &DoorwayScene<T>,
    fit: &WavefrontFit<T>,
    grid: &GridSpec<T>,
    physics: &PhysicsConfig<T>,
    opts: &HeatmapOptions<T>,
) -> Result<Heatmap<T>> {
    grid.check()?;
    if !(fit.t0.is_finite() && fit.z0.is_finite() && fit.r0 > T::zero()) {
        return Err(Error::InvalidInput("wavefront fit is not valid".into()));
    }
    if env.n_rows() == 0 || env.n_samples() < 2 {
        return Err(Error::InvalidInput("empty envelope image".into()));
    }
    let frame = scene.frame().ok_or_else(|| Error::InvalidInput("array lies on the diffracting edge".into()))?;
    let shape = grid.shape();
    let (nu, nv, nz) = shape;
    let layers: Vec<T> = grid.z_layers.clone().unwrap_or_else(|| vec![fit.z0]);
    let ev = Evaluator { gates: GateIntegrator::new(env), env, scene, fit, c: physics.c, opts: *opts };

    let rows: Vec<(Vec<T>, Vec<bool>)> = (0..nz * nv)
        .into_par_iter()
        .map(|row| {
            let (iz, iv) = (row / nv, row % nv);
            let mut vals = Vec::with_capacity(nu);
            let mut ok = Vec::with_capacity(nu);
            for iu in 0..nu {
                let (u, v) = grid.coord(iu, iv);
                let p = frame_point(&frame, u, v, layers[iz]);
                if grid.contains(u, v) && ev.admits(&p) {
                    vals.push(ev.metric(&p));
                    ok.push(true);
                } else {
                    vals.push(T::zero());
                    ok.push(false);
                }
            }
            (vals, ok)
        })
        .collect();
    let mut values = Vec::with_capacity(nu * nv * nz);
    let mut valid = Vec::with_capacity(nu * nv * nz);
    for (v, ok) in rows {
        values.extend(v);
        valid.extend(ok);
    }

    let mut best: Option<usize> = None;
    for (i, (&m, &ok)) in values.iter().zip(&valid).enumerate() {
        if ok && best.map_or(true, |b| m > values[b]) {
            best = Some(i);
        }
    }
    let best = best.ok_or(Error::EmptyGrid)?;
    let (iz, iv, iu) = (best / (nu * nv), (best / nu) % nv, best % nu);
    let (u, v) = grid.coord(iu, iv);
    let argmax = frame_point(&frame, u, v, layers[iz]);

    let refined = opts.refine.then(|| {
        let fine = grid.step / T::of(10.0);
        let mut top = (argmax, values[best]);
        for dv in -10i32..=10 {
            for du in -10i32..=10 {
                let (uu, vv) = (u + fine * T::of(du as f64), v + fine * T::of(dv as f64));
                let p = frame_point(&frame, uu, vv, layers[iz]);
                if !grid.contains(uu, vv) || !ev.admits(&p) {
                    continue;
                }
                let m = ev.metric(&p);
                if m > top.1 {
                    top = (p, m);
                }
            }
        }
        top
    });

    Ok(Heatmap {
        argmax_value: values[best],
        values,
        valid,
        shape,
        grid: grid.clone(),
        argmax,
        argmax_index: (iu, iv, iz),
        refined,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoorwayConfig<T> {
    pub band: (T, T),
    pub detection: DetectionConfig<T>,
    pub fit: FitConfig<T>,
    pub grid: GridSpec<T>,
    pub heatmap: HeatmapOptions<T>,
    /// Traces whose peak-to-background ratio falls below this are rejected.
    pub min_snr: T,
}

impl<T: Real> Default for DoorwayConfig<T> {
    fn default() -> Self {
        Self {
            band: (T::of(DEFAULT_BAND.0), T::of(DEFAULT_BAND.1)),
            detection: DetectionConfig::default(),
            fit: FitConfig::default(),
            grid: GridSpec::default(),
            heatmap: HeatmapOptions::default(),
            min_snr: T::of(DEFAULT_MIN_SNR),
        }
    }
}

/// Every intermediate product of a doorway run.
#[derive(Debug, Clone)]
pub struct DoorwayReport<T> {
    pub result: LocalizationResult<T>,
    pub envelope: EnvelopeImage<T>,
    pub arrivals: ArrivalSet<T>,
    pub fit: WavefrontFit<T>,
    pub heatmap: Heatmap<T>,
}

pub fn localize_doorway<T: Real>(
    traces: &TraceSet<T>,
    scene: &DoorwayScene<T>,
    physics: &PhysicsConfig<T>,
    config: &DoorwayConfig<T>,
) -> Result<LocalizationResult<T>> {
    run_doorway(traces, scene, physics, config).map(|r| r.result)
}

/// Envelope, screening, first arrivals, wavefront fit, heatmap; range and
/// azimuth come from the heatmap peak, height from the fit.
pub fn run_doorway<T: Real>(
    traces: &TraceSet<T>,
    scene: &DoorwayScene<T>,
    physics: &PhysicsConfig<T>,
    config: &DoorwayConfig<T>,
) -> Result<DoorwayReport<T>> {
    let v = scene.violations();
    if !v.is_empty() {
        let list: Vec<String> = v.iter().map(ToString::to_string).collect();
        return Err(Error::InvalidInput(list.join("; ")));
    }
    check_traces(traces, physics, scene.array.count)?;
    let channels: Vec<usize> = (0..traces.n_channels()).collect();
    let envelope = envelope_of(traces, &channels, config.band)?;
    screen(&envelope, config.detection.noise_window, config.min_snr)?;
    let arrivals = detect_first_arrival(&envelope, &config.detection)?;
    if arrivals.n_detected() < 3 {
        return Err(Error::NoDetection);
    }
    let fit = fit_wavefront(&arrivals, physics.c, &config.fit)?;
    let heatmap = doorway_heatmap_with(&envelope, scene, &fit, &config.grid, physics, &config.heatmap)?;
    let frame = scene.frame().ok_or_else(|| Error::InvalidInput("array lies on the diffracting edge".into()))?;
    let (p, peak) = heatmap.best();
    let (r1, theta, _) = frame.to_polar(&p);
    let z0 = if config.grid.z_layers.is_some() { p.z } else { fit.z0 };
    let result = LocalizationResult {
        r1,
        theta,
        z0,
        diagnostics: Diagnostics { rmse: fit.rmse, peak_metric: peak, objective: Vec::new(), t0: fit.t0 },
    };
    Ok(DoorwayReport { result, envelope, arrivals, fit, heatmap })
}
