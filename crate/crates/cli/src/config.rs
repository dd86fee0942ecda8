//! TOML scene configuration and recording sidecar.
//!
//! Every field is optional; missing geometry falls back to the presets.

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use std::path::Path;

use diffloc::forward::{EmissionSpec, NoiseSpec};
use diffloc::scene::{Dir2, MicArray, Point3, SourceGroundTruth};
use diffloc::{DoorwayScene, EdgeScene, Physics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SceneKind {
    #[default]
    Doorway,
    Edge,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSection {
    #[serde(default)]
    pub kind: SceneKind,
    // doorway
    pub edge_d: Option<[f64; 3]>,
    pub edge_r: Option<[f64; 3]>,
    pub array_base: Option<[f64; 3]>,
    // edge
    pub edge: Option<[f64; 3]>,
    pub los: Option<[f64; 2]>,
    pub r2: Option<f64>,
    pub delta_theta: Option<f64>,
    pub base_z: Option<f64>,
    // both
    pub count: Option<usize>,
    pub pitch: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsSection {
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_fs")]
    pub fs: f64,
}

fn default_c() -> f64 {
    343.0
}

fn default_fs() -> f64 {
    48_000.0
}

impl Default for PhysicsSection {
    fn default() -> Self {
        Self { c: default_c(), fs: default_fs() }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub r1: f64,
    pub theta: f64,
    pub z0: f64,
    #[serde(default = "default_t0")]
    pub t0: f64,
}

fn default_t0() -> f64 {
    0.01
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmissionSection {
    pub center_freq: Option<f64>,
    pub duty: Option<f64>,
    pub amplitude: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub snr_db: Option<f64>,
    pub seed: Option<u64>,
    pub reverb_density: Option<f64>,
    pub reverb_decay: Option<f64>,
    pub reverb_level: Option<f64>,
    pub reverb_onset: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SampleFormat {
    #[default]
    Float,
    Pcm16,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub duration: Option<f64>,
    pub format: Option<SampleFormat>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvesSection {
    pub thetas: Option<Vec<f64>>,
    pub delta_theta: Option<f64>,
    pub d1: Option<f64>,
    pub d2: Option<f64>,
    pub f_min: Option<f64>,
    pub f_max: Option<f64>,
    pub n_freq: Option<usize>,
}

/// Top-level scene file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(default)]
    pub scene: SceneSection,
    #[serde(default)]
    pub physics: PhysicsSection,
    pub source: Option<SourceSection>,
    #[serde(default)]
    pub emission: EmissionSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub synth: SynthSection,
    #[serde(default)]
    pub curves: CurvesSection,
}

/// Recording details written next to a synthesized WAV.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordingSection {
    pub fs: f64,
    pub channels: usize,
    pub t_start: f64,
    /// Factor that turns WAV sample values back into trace units.
    pub scale: f64,
    pub array_index: Vec<usize>,
    pub positions: Vec<[f64; 3]>,
}

/// Contents of `<name>.meta.toml`: the scene schema plus ground truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub scene: SceneSection,
    pub physics: PhysicsSection,
    pub ground_truth: Option<SourceSection>,
    pub recording: RecordingSection,
}

fn point(p: [f64; 3]) -> Point3<f64> {
    Point3::new(p[0], p[1], p[2])
}

pub fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = toml::to_string(value).context("serializing metadata")?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn report(v: Vec<diffloc::scene::Violation>) -> anyhow::Result<()> {
    if v.is_empty() {
        return Ok(());
    }
    let lines: Vec<String> = v.iter().map(|v| format!("  {v}")).collect();
    bail!("invalid scene:\n{}", lines.join("\n"))
}

impl SceneSection {
    pub fn doorway(&self) -> anyhow::Result<DoorwayScene> {
        if self.kind != SceneKind::Doorway {
            bail!("scene kind is {:?}, expected doorway", self.kind);
        }
        let preset = DoorwayScene::preset();
        let array = MicArray::new(
            "main",
            self.array_base.map(point).unwrap_or(preset.array.base),
            self.count.unwrap_or(preset.array.count),
            self.pitch.unwrap_or(preset.array.pitch),
        );
        let scene = DoorwayScene::from_geometry(
            self.edge_d.map(point).unwrap_or(preset.edge_d),
            self.edge_r.map(point).unwrap_or(preset.edge_r),
            array,
        );
        report(scene.violations())?;
        Ok(scene)
    }

    pub fn edge(&self) -> anyhow::Result<EdgeScene> {
        if self.kind != SceneKind::Edge {
            bail!("the edge pipeline requires two arrays; scene kind is {:?}", self.kind);
        }
        let los = match self.los {
            Some([x, y]) => Dir2::new(x, y).context("scene.los must be a nonzero vector")?,
            None => Dir2::new(1.0, 0.0).expect("unit x"),
        };
        let scene = EdgeScene::from_geometry(
            self.edge.map(point).unwrap_or_default(),
            los,
            self.r2.unwrap_or(0.8),
            self.delta_theta.unwrap_or(25.0),
            self.count.unwrap_or(8),
            self.pitch.unwrap_or(0.26),
            self.base_z.unwrap_or(0.46),
        );
        report(scene.violations())?;
        Ok(scene)
    }
}

impl PhysicsSection {
    pub fn physics(&self) -> anyhow::Result<Physics> {
        let p = Physics { c: self.c, fs: self.fs };
        report(p.violations(None))?;
        Ok(p)
    }
}

impl SourceSection {
    pub fn source(&self) -> anyhow::Result<SourceGroundTruth<f64>> {
        let s = SourceGroundTruth::new(self.r1, self.theta, self.z0, self.t0);
        report(s.violations())?;
        Ok(s)
    }
}

impl EmissionSection {
    pub fn emission(&self) -> anyhow::Result<EmissionSpec<f64>> {
        let EmissionSpec::PulseCycle { center_freq, duty, amplitude } = EmissionSpec::default() else {
            unreachable!("default emission is a pulse cycle")
        };
        let e = EmissionSpec::PulseCycle {
            center_freq: self.center_freq.unwrap_or(center_freq),
            duty: self.duty.unwrap_or(duty),
            amplitude: self.amplitude.unwrap_or(amplitude),
        };
        report(e.violations())?;
        Ok(e)
    }
}

impl NoiseSection {
    pub fn noise(&self) -> anyhow::Result<NoiseSpec<f64>> {
        let d = NoiseSpec::default();
        let n = NoiseSpec {
            snr_db: self.snr_db,
            reverb_density: self.reverb_density.unwrap_or(d.reverb_density),
            reverb_decay: self.reverb_decay.unwrap_or(d.reverb_decay),
            reverb_level: self.reverb_level.unwrap_or(d.reverb_level),
            reverb_onset: self.reverb_onset.unwrap_or(d.reverb_onset),
            seed: self.seed.unwrap_or(d.seed),
        };
        report(n.violations())?;
        Ok(n)
    }
}
