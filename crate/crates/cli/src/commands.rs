use anyhow::{anyhow, bail, Context};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use diffloc::export;
use diffloc::forward::{synthesize_doorway, synthesize_edge};
use diffloc::kedge::{linear_grid, loss_curve, ratio_curve};
use diffloc::localize::{run_doorway, run_edge, LocalizationResult};
use diffloc::scene::SourceGroundTruth;
use diffloc::{DoorwayConfig, EdgeConfig, Physics, Point, Traces};

use crate::config::{read_toml, write_toml, RecordingSection, SceneConfig, SceneKind, SceneSection, Sidecar};
use crate::{wav, CurvesArgs, LocalizeArgs, SynthArgs};

const DEFAULT_DURATION: f64 = 0.05;

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error(transparent)]
    Config(#[from] anyhow::Error),
    #[error("measurement rejected: {0}")]
    Rejected(diffloc::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Rejected(_) => 2,
        }
    }
}

impl From<diffloc::Error> for Failure {
    fn from(e: diffloc::Error) -> Self {
        if e.is_rejection() {
            Failure::Rejected(e)
        } else {
            Failure::Config(anyhow!(e))
        }
    }
}

pub fn parse_band(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("expected lo:hi, got {s:?}"))?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("band low edge: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("band high edge: {e}"))?;
    if !(lo > 0.0 && hi > lo) {
        return Err(format!("band needs 0 < lo < hi, got {lo}:{hi}"));
    }
    Ok((lo, hi))
}

fn create(dir: &Path, name: &str) -> anyhow::Result<(PathBuf, BufWriter<File>)> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok((path, BufWriter::new(file)))
}

fn save(dir: &Path, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> anyhow::Result<()> {
    let (path, mut w) = create(dir, name)?;
    body(&mut w).and_then(|_| w.flush()).with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn positions(scene: &SceneSection) -> anyhow::Result<(Vec<Point>, Vec<usize>)> {
    Ok(match scene.kind {
        SceneKind::Doorway => {
            let s = scene.doorway()?;
            let p = s.array.positions();
            let idx = vec![0; p.len()];
            (p, idx)
        }
        SceneKind::Edge => {
            let s = scene.edge()?;
            let mut p = Vec::new();
            let mut idx = Vec::new();
            for (k, a) in s.arrays.iter().enumerate() {
                p.extend(a.positions());
                idx.extend(std::iter::repeat_n(k, a.count));
            }
            (p, idx)
        }
    })
}

pub fn synth(args: &SynthArgs, out: &Path) -> Result<(), Failure> {
    let cfg: SceneConfig = read_toml(&args.scene)?;
    let source = cfg.source.context("scene file has no [source] table")?;
    let truth = source.source()?;
    let physics = cfg.physics.physics()?;
    let emission = cfg.emission.emission()?;
    let mut noise_cfg = cfg.noise;
    if args.seed.is_some() {
        noise_cfg.seed = args.seed;
    }
    if args.snr_db.is_some() {
        noise_cfg.snr_db = args.snr_db;
    }
    let noise = noise_cfg.noise()?;
    let duration = args.duration.or(cfg.synth.duration).unwrap_or(DEFAULT_DURATION);
    let traces = match cfg.scene.kind {
        SceneKind::Doorway => synthesize_doorway(&cfg.scene.doorway()?, &truth, &emission, &noise, &physics, duration),
        SceneKind::Edge => synthesize_edge(&cfg.scene.edge()?, &truth, &emission, &noise, &physics, duration),
    }
    .map_err(|e| Failure::Config(anyhow!(e)))?;

    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let wav_path = out.join(format!("{}.wav", args.name));
    let scale = wav::write(&wav_path, &traces, cfg.synth.format.unwrap_or_default())?;
    let sidecar = Sidecar {
        scene: cfg.scene.clone(),
        physics: cfg.physics,
        ground_truth: Some(source),
        recording: RecordingSection {
            fs: traces.fs,
            channels: traces.n_channels(),
            t_start: traces.t_start,
            scale,
            array_index: traces.array_index.clone(),
            positions: traces.geometry.iter().map(|p| [p.x, p.y, p.z]).collect(),
        },
    };
    let meta_path = out.join(format!("{}.meta.toml", args.name));
    write_toml(&meta_path, &sidecar)?;
    println!(
        "wrote {} ({} channels, {} samples at {} Hz) and {}",
        wav_path.display(),
        traces.n_channels(),
        traces.n_samples(),
        traces.fs,
        meta_path.display()
    );
    Ok(())
}

struct Loaded {
    traces: Traces,
    scene: SceneSection,
    physics: Physics,
    truth: Option<SourceGroundTruth<f64>>,
}

fn sidecar_path(input: &Path) -> PathBuf {
    input.with_extension("meta.toml")
}

fn load(args: &LocalizeArgs) -> anyhow::Result<Loaded> {
    let meta_path = sidecar_path(&args.input);
    let meta: Option<Sidecar> = if meta_path.exists() { Some(read_toml(&meta_path)?) } else { None };
    let (scene, physics) = match (&args.scene, &meta) {
        (Some(path), _) => {
            let cfg: SceneConfig = read_toml(path)?;
            (cfg.scene, cfg.physics)
        }
        (None, Some(m)) => (m.scene.clone(), m.physics),
        (None, None) => bail!("no scene: pass --scene or keep {} next to the input", meta_path.display()),
    };
    let physics = physics.physics()?;
    let truth = meta.as_ref().and_then(|m| m.ground_truth).map(|s| s.source()).transpose()?;
    let (samples, fs) = wav::read(&args.input, meta.as_ref().map(|m| m.recording.scale))?;
    if (fs - physics.fs).abs() > 0.5 {
        bail!("{} is sampled at {fs} Hz, expected fs = {} Hz", args.input.display(), physics.fs);
    }
    let (geometry, array_index) = positions(&scene)?;
    if samples.len() != geometry.len() {
        bail!(
            "{} has {} channels but the scene has {} microphones",
            args.input.display(),
            samples.len(),
            geometry.len()
        );
    }
    let t_start = meta.as_ref().map_or(0.0, |m| m.recording.t_start);
    let traces = Traces { samples, fs, geometry, array_index, t_start };
    Ok(Loaded { traces, scene, physics, truth })
}

fn positive(name: &str, v: Option<f64>, allow_zero: bool) -> anyhow::Result<Option<f64>> {
    match v {
        Some(x) if !x.is_finite() || x < 0.0 || (x == 0.0 && !allow_zero) => {
            bail!("--{name} must be {}, got {x}", if allow_zero { ">= 0" } else { "> 0" })
        }
        _ => Ok(v),
    }
}

fn summarize(result: &LocalizationResult<f64>, truth: Option<&SourceGroundTruth<f64>>) {
    println!(
        "r1 = {:.3} m  theta = {:.2} deg  z0 = {:.3} m  (fit rmse {:.3e} s)",
        result.r1, result.theta, result.z0, result.diagnostics.rmse
    );
    if let Some(t) = truth {
        println!(
            "error: r1 {:+.3} m ({:+.1}%)  theta {:+.2} deg  z0 {:+.3} m",
            result.r1 - t.r1,
            100.0 * (result.r1 - t.r1) / t.r1,
            result.theta - t.theta,
            result.z0 - t.z0
        );
    }
}

pub fn localize_doorway(args: &LocalizeArgs, out: &Path) -> Result<(), Failure> {
    let loaded = load(args)?;
    if loaded.scene.kind != SceneKind::Doorway {
        return Err(anyhow!("localize-doorway needs a doorway scene, got {:?}", loaded.scene.kind).into());
    }
    let scene = loaded.scene.doorway()?;
    let mut cfg = DoorwayConfig::default();
    if let Some(b) = args.band {
        cfg.band = b;
    }
    if let Some(g) = positive("gate-ms", args.gate_ms, true)? {
        cfg.heatmap.gate = g * 1e-3;
    }
    if let Some(s) = positive("grid-step-m", args.grid_step_m, false)? {
        cfg.grid = cfg.grid.with_step(s);
    }
    if let Some(w) = positive("range-window-m", args.range_window_m, false)? {
        cfg.heatmap.range_window = Some(w);
    }
    if let Some(m) = positive("min-snr", args.min_snr, true)? {
        cfg.min_snr = m;
    }
    if let Some(r) = positive("max-rmse-ms", args.max_rmse_ms, false)? {
        cfg.fit.max_rmse = r * 1e-3;
    }
    let report = run_doorway(&loaded.traces, &scene, &loaded.physics, &cfg)?;

    save(out, "result.csv", |w| export::write_result_csv(w, &report.result))?;
    save(out, "heatmap.csv", |w| export::write_heatmap_csv(w, &report.heatmap))?;
    save(out, "heatmap.pgm", |w| export::write_heatmap_pgm(w, &report.heatmap))?;
    save(out, "envelope.csv", |w| export::write_envelope_csv(w, &report.envelope))?;
    save(out, "arrivals.csv", |w| export::write_arrivals_csv(w, &report.arrivals))?;
    save(out, "fit.csv", |w| export::write_fits_csv(w, std::slice::from_ref(&report.fit)))?;
    summarize(&report.result, loaded.truth.as_ref());
    Ok(())
}

pub fn localize_edge(args: &LocalizeArgs, out: &Path) -> Result<(), Failure> {
    let loaded = load(args)?;
    if loaded.scene.kind != SceneKind::Edge {
        return Err(anyhow!(diffloc::Error::TwoArraysRequired { found: loaded.traces.n_arrays() }).into());
    }
    let scene = loaded.scene.edge()?;
    let mut cfg = EdgeConfig::default();
    if let Some(b) = args.band {
        cfg.band = b;
    }
    if let Some(w) = positive("window-ms", args.window_ms, false)? {
        cfg.window = w * 1e-3;
    }
    if let Some(m) = positive("min-snr", args.min_snr, true)? {
        cfg.min_snr = m;
    }
    if let Some(r) = positive("max-rmse-ms", args.max_rmse_ms, false)? {
        cfg.fit.max_rmse = r * 1e-3;
    }
    let report = run_edge(&loaded.traces, &scene, &loaded.physics, &cfg)?;

    let c = loaded.physics.c;
    save(out, "result.csv", |w| export::write_result_csv(w, &report.result))?;
    save(out, "objective.csv", |w| export::write_objective_csv(w, &report.result.diagnostics.objective))?;
    save(out, "ratio.csv", |w| export::write_ratio_curve_csv(w, &report.ratio, report.result.r1, scene.r2[0], c))?;
    save(out, "envelope_near.csv", |w| export::write_envelope_csv(w, &report.envelopes[0]))?;
    save(out, "envelope_far.csv", |w| export::write_envelope_csv(w, &report.envelopes[1]))?;
    save(out, "fits.csv", |w| export::write_fits_csv(w, &report.fits))?;
    summarize(&report.result, loaded.truth.as_ref());
    Ok(())
}

fn parse_thetas(s: &str) -> anyhow::Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().with_context(|| format!("bad azimuth {t:?}")))
        .collect()
}

pub fn curves(args: &CurvesArgs, out: &Path) -> Result<(), Failure> {
    let cfg: SceneConfig = match &args.scene {
        Some(p) => read_toml(p)?,
        None => SceneConfig::default(),
    };
    let c = cfg.physics.physics()?.c;
    let section = &cfg.curves;
    let thetas = match &args.thetas {
        Some(s) => parse_thetas(s)?,
        None => section.thetas.clone().unwrap_or_else(|| (1..=7).map(|k| 5.0 * k as f64).collect()),
    };
    let delta = args.delta_theta.or(section.delta_theta).unwrap_or(25.0);
    let d1 = args.d1.or(section.d1).unwrap_or(3.2);
    let d2 = args.d2.or(section.d2).unwrap_or(0.8);
    let f_min = args.f_min.or(section.f_min).unwrap_or(100.0);
    let f_max = args.f_max.or(section.f_max).unwrap_or(10_000.0);
    let n = args.n_freq.or(section.n_freq).unwrap_or(200);
    if !(d1 > 0.0 && d2 > 0.0) {
        return Err(anyhow!("d1 and d2 must be > 0").into());
    }
    if !(f_min > 0.0 && f_max >= f_min) || n == 0 {
        return Err(anyhow!("frequency grid needs 0 < f_min <= f_max and n_freq > 0").into());
    }
    if thetas.iter().any(|t| !t.is_finite() || *t < 0.0) || !delta.is_finite() {
        return Err(anyhow!("azimuths must be finite and >= 0").into());
    }
    if thetas.is_empty() {
        log::warn!("empty azimuth list; no curves written");
        return Ok(());
    }
    let freqs = linear_grid(f_min, f_max, n);
    for &theta in &thetas {
        let loss = loss_curve(theta, d1, d2, &freqs, c);
        save(out, &format!("loss_theta_{theta}.csv"), |w| export::write_loss_curve_csv(w, &loss, c))?;
        let ratio = ratio_curve(theta, delta, d1, d2, &freqs, c);
        save(out, &format!("ratio_theta_{theta}_delta_{delta}.csv"), |w| {
            export::write_ratio_curve_csv(w, &ratio, d1, d2, c)
        })?;
    }
    println!("wrote {} loss and {} ratio curves to {}", thetas.len(), thetas.len(), out.display());
    Ok(())
}
