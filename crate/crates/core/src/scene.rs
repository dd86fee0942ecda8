//! Scene geometry: diffractive edges, vertical microphone arrays and the
//! horizontal propagation distances used by both localization pipelines.
//!
//! Edges are infinite vertical lines, so only the horizontal position of an
//! edge matters. Azimuths are measured about an edge from its line-of-sight
//! (LOS) direction, positive towards the hidden side. Angles cross the public
//! interface in degrees.

use serde::{Deserialize, Serialize};

use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Point3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn horizontal_distance(&self, other: &Point3<T>) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn translated(&self, dx: T, dy: T, dz: T) -> Self {
        Self::new(self.x + dx, self.y + dy, self.z + dz)
    }
}

/// Horizontal unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dir2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Dir2<T> {
    /// Normalizes `(x, y)`; `None` for a zero vector.
    pub fn new(x: T, y: T) -> Option<Self> {
        let n = x.hypot(y);
        if n > T::zero() && n.is_finite() {
            Some(Self { x: x / n, y: y / n })
        } else {
            None
        }
    }

    pub fn from_degrees(angle: T) -> Self {
        let a = angle.to_radians();
        Self { x: a.cos(), y: a.sin() }
    }

    pub fn rotated_ccw(&self) -> Self {
        Self { x: -self.y, y: self.x }
    }

    pub fn neg(&self) -> Self {
        Self { x: -self.x, y: -self.y }
    }

    pub fn dot(&self, dx: T, dy: T) -> T {
        self.x * dx + self.y * dy
    }
}

/// Polar frame about a vertical edge: `los` points from the visible side past
/// the edge, `normal` is perpendicular to it and points into the hidden side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeFrame<T> {
    pub origin: Point3<T>,
    pub los: Dir2<T>,
    pub normal: Dir2<T>,
}

impl<T: Real> EdgeFrame<T> {
    /// Frame with the hidden side counter-clockwise from `los`.
    pub fn ccw(origin: Point3<T>, los: Dir2<T>) -> Self {
        Self { origin, los, normal: los.rotated_ccw() }
    }

    pub fn to_point(&self, r1: T, theta_deg: T, z: T) -> Point3<T> {
        let th = theta_deg.to_radians();
        let (s, c) = th.sin_cos();
        Point3::new(
            self.origin.x + r1 * (c * self.los.x + s * self.normal.x),
            self.origin.y + r1 * (c * self.los.y + s * self.normal.y),
            z,
        )
    }

    /// Returns `(r1, theta_deg, z)` of `p` in this frame.
    pub fn to_polar(&self, p: &Point3<T>) -> (T, T, T) {
        let dx = p.x - self.origin.x;
        let dy = p.y - self.origin.y;
        let u = self.los.dot(dx, dy);
        let v = self.normal.dot(dx, dy);
        (u.hypot(v), v.atan2(u).to_degrees(), p.z)
    }
}

/// Vertical line array; microphone `i` sits at `base.z + i * pitch`.
#[derive(Debug, Clone, PartialEq)]
pub struct MicArray<T> {
    pub id: String,
    pub base: Point3<T>,
    pub count: usize,
    pub pitch: T,
}

impl<T: Real> MicArray<T> {
    pub fn new(id: impl Into<String>, base: Point3<T>, count: usize, pitch: T) -> Self {
        Self { id: id.into(), base, count, pitch }
    }

    pub fn heights(&self) -> Vec<T> {
        (0..self.count).map(|i| self.base.z + T::of_usize(i) * self.pitch).collect()
    }

    pub fn positions(&self) -> Vec<Point3<T>> {
        self.heights().into_iter().map(|z| Point3::new(self.base.x, self.base.y, z)).collect()
    }

    fn violations(&self, prefix: &str, out: &mut Vec<Violation>) {
        if self.count < 2 {
            out.push(Violation::new(format!("{prefix}.count"), "must be at least 2"));
        }
        if !(self.pitch > T::zero()) || !self.pitch.is_finite() {
            out.push(Violation::new(format!("{prefix}.pitch"), "must be finite and > 0"));
        }
        if !self.base.is_finite() {
            out.push(Violation::new(format!("{prefix}.base"), "must be finite"));
        } else if self.base.z < T::zero() {
            out.push(Violation::new(format!("{prefix}.base.z"), "must be >= 0 (floor at z = 0)"));
        }
    }
}

/// Doorway: `edge_d` is the diffracting jamb next to the array, `edge_r` the
/// far jamb that reflects towards it. `r2_d` / `r2_r` are the visible-side
/// path lengths from each edge to the array, kept as explicit scene constants.
#[derive(Debug, Clone, PartialEq)]
pub struct DoorwayScene<T> {
    pub edge_d: Point3<T>,
    pub edge_r: Point3<T>,
    pub array: MicArray<T>,
    pub r2_d: T,
    pub r2_r: T,
    pub door_width: T,
}

impl<T: Real> DoorwayScene<T> {
    /// Builds the scene with `r2_d`, `r2_r` and the door width measured from
    /// the given positions.
    pub fn from_geometry(edge_d: Point3<T>, edge_r: Point3<T>, array: MicArray<T>) -> Self {
        let r2_d = array.base.horizontal_distance(&edge_d);
        let r2_r = array.base.horizontal_distance(&edge_r);
        let door_width = edge_d.horizontal_distance(&edge_r);
        Self { edge_d, edge_r, array, r2_d, r2_r, door_width }
    }

    /// Fifteen microphones at 13 cm pitch from 46 cm, 0.8 m in front of the
    /// diffracting jamb, 0.9 m wide door. The LOS runs along +x through the
    /// edge at the origin; the hidden side is +y.
    pub fn preset() -> Self {
        let array = MicArray::new("main", Point3::new(T::of(-0.8), T::zero(), T::of(0.46)), 15, T::of(0.13));
        Self::from_geometry(
            Point3::new(T::zero(), T::zero(), T::zero()),
            Point3::new(T::zero(), T::of(-0.9), T::zero()),
            array,
        )
    }

    /// Polar frame about the diffracting edge. The hidden side is the one
    /// opposite the far jamb.
    pub fn frame(&self) -> Option<EdgeFrame<T>> {
        let los = Dir2::new(self.edge_d.x - self.array.base.x, self.edge_d.y - self.array.base.y)?;
        let ccw = los.rotated_ccw();
        let side = ccw.dot(self.edge_r.x - self.edge_d.x, self.edge_r.y - self.edge_d.y);
        let normal = if side > T::zero() { ccw.neg() } else { ccw };
        Some(EdgeFrame { origin: self.edge_d, los, normal })
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        self.array.violations("MicArray", &mut out);
        if !self.edge_d.is_finite() {
            out.push(Violation::new("DoorwayScene.edge_d", "must be finite"));
        }
        if !self.edge_r.is_finite() {
            out.push(Violation::new("DoorwayScene.edge_r", "must be finite"));
        }
        positive(&mut out, "DoorwayScene.r2_d", self.r2_d);
        positive(&mut out, "DoorwayScene.r2_r", self.r2_r);
        positive(&mut out, "DoorwayScene.door_width", self.door_width);
        if self.r2_d > self.r2_r {
            out.push(Violation::new("DoorwayScene.r2_d", "must not exceed r2_r"));
        }
        if self.edge_d.is_finite() && self.array.base.is_finite() && self.frame().is_none() {
            out.push(Violation::new("DoorwayScene.array.base", "must not lie on the edge line"));
        }
        out
    }
}

/// Single convex edge observed by two arrays. Array 0 defines the LOS; array 1
/// sits `delta_theta` further round the edge, so it sees the source at a
/// diffraction angle larger by `delta_theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeScene<T> {
    pub edge: Point3<T>,
    pub arrays: [MicArray<T>; 2],
    pub r2: [T; 2],
    pub delta_theta: T,
}

impl<T: Real> EdgeScene<T> {
    /// Places both arrays at `r2` from `edge` with array 1 rotated
    /// `delta_theta` degrees away from the hidden side.
    pub fn from_geometry(
        edge: Point3<T>,
        los: Dir2<T>,
        r2: T,
        delta_theta: T,
        count: usize,
        pitch: T,
        base_z: T,
    ) -> Self {
        let frame = EdgeFrame::ccw(edge, los);
        let near = frame.to_point(-r2, T::zero(), base_z);
        // Behind the edge (r < 0) so a negative angle swings towards +normal.
        let far = frame.to_point(-r2, -delta_theta, base_z);
        Self {
            edge,
            arrays: [MicArray::new("near", near, count, pitch), MicArray::new("far", far, count, pitch)],
            r2: [r2, r2],
            delta_theta,
        }
    }

    /// Two arrays of eight microphones at 26 cm pitch from 46 cm, both 0.8 m
    /// from the edge, 25 degrees apart. LOS along +x, hidden side +y.
    pub fn preset() -> Self {
        Self::from_geometry(
            Point3::new(T::zero(), T::zero(), T::zero()),
            Dir2::new(T::one(), T::zero()).expect("unit x"),
            T::of(0.8),
            T::of(25.0),
            8,
            T::of(0.26),
            T::of(0.46),
        )
    }

    pub fn frame(&self) -> Option<EdgeFrame<T>> {
        let base = self.arrays[0].base;
        let los = Dir2::new(self.edge.x - base.x, self.edge.y - base.y)?;
        let ccw = los.rotated_ccw();
        let far = self.arrays[1].base;
        let side = ccw.dot(far.x - self.edge.x, far.y - self.edge.y);
        let normal = if side < T::zero() { ccw.neg() } else { ccw };
        Some(EdgeFrame { origin: self.edge, los, normal })
    }

    /// Extra diffraction angle of array `k` relative to array 0.
    pub fn azimuth_offset(&self, k: usize) -> T {
        if k == 0 {
            T::zero()
        } else {
            self.delta_theta
        }
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (k, a) in self.arrays.iter().enumerate() {
            a.violations(&format!("EdgeScene.arrays[{k}]"), &mut out);
            positive(&mut out, &format!("EdgeScene.r2[{k}]"), self.r2[k]);
        }
        if !self.edge.is_finite() {
            out.push(Violation::new("EdgeScene.edge", "must be finite"));
        }
        if !(self.delta_theta > T::zero() && self.delta_theta < T::of(90.0)) {
            out.push(Violation::new("EdgeScene.delta_theta", "must lie in (0, 90) degrees"));
        }
        out
    }
}

/// Hidden source in polar form about the diffracting edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceGroundTruth<T> {
    pub r1: T,
    pub theta: T,
    pub z0: T,
    pub t0: T,
}

impl<T: Real> SourceGroundTruth<T> {
    pub fn new(r1: T, theta: T, z0: T, t0: T) -> Self {
        Self { r1, theta, z0, t0 }
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        positive(&mut out, "SourceGroundTruth.r1", self.r1);
        if !(self.z0 >= T::zero()) || !self.z0.is_finite() {
            out.push(Violation::new("SourceGroundTruth.z0", "must be finite and >= 0"));
        }
        if !self.theta.is_finite() {
            out.push(Violation::new("SourceGroundTruth.theta", "must be finite"));
        }
        if !self.t0.is_finite() {
            out.push(Violation::new("SourceGroundTruth.t0", "must be finite"));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicsConfig<T> {
    /// Speed of sound, m/s.
    pub c: T,
    /// Sample rate, Hz.
    pub fs: T,
}

impl<T: Real> Default for PhysicsConfig<T> {
    fn default() -> Self {
        Self { c: T::of(343.0), fs: T::of(48_000.0) }
    }
}

impl<T: Real> PhysicsConfig<T> {
    /// `max_freq` is the highest frequency any downstream analysis will use.
    pub fn violations(&self, max_freq: Option<T>) -> Vec<Violation> {
        let mut out = Vec::new();
        positive(&mut out, "PhysicsConfig.c", self.c);
        positive(&mut out, "PhysicsConfig.fs", self.fs);
        if let Some(f) = max_freq {
            if self.fs < T::of(2.0) * f {
                out.push(Violation::new(
                    "PhysicsConfig.fs",
                    format!("must be at least twice the highest analysis frequency ({f} Hz)"),
                ));
            }
        }
        out
    }
}

/// One broken invariant: which field, and which constraint it breaks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub constraint: String,
}

impl Violation {
    pub fn new(field: impl Into<String>, constraint: impl Into<String>) -> Self {
        Self { field: field.into(), constraint: constraint.into() }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.constraint)
    }
}

fn positive<T: Real>(out: &mut Vec<Violation>, field: &str, v: T) {
    if !(v > T::zero()) || !v.is_finite() {
        out.push(Violation::new(field, "must be finite and > 0"));
    }
}

/// Anything with checkable invariants.
pub trait Validate {
    fn validate(&self) -> Vec<Violation>;
}

impl<T: Real> Validate for DoorwayScene<T> {
    fn validate(&self) -> Vec<Violation> {
        self.violations()
    }
}

impl<T: Real> Validate for EdgeScene<T> {
    fn validate(&self) -> Vec<Violation> {
        self.violations()
    }
}

impl<T: Real> Validate for MicArray<T> {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        self.violations("MicArray", &mut out);
        out
    }
}

/// Lists every broken invariant of `scene`; empty when the scene is valid.
pub fn validate_scene(scene: &impl Validate) -> Vec<Violation> {
    scene.validate()
}

/// Horizontal propagation distance from `grid_point` to the array via `edge`:
/// the hidden-side leg plus the visible-side constant `r2`.
pub fn path_distance<T: Real>(grid_point: &Point3<T>, edge: &Point3<T>, r2: T) -> T {
    grid_point.horizontal_distance(edge) + r2
}

/// Cartesian position of a source at horizontal distance `r1` from `edge`,
/// rotated `theta` degrees counter-clockwise from `los`, at height `z0`.
pub fn source_from_polar<T: Real>(r1: T, theta: T, z0: T, edge: &Point3<T>, los: Dir2<T>) -> Point3<T> {
    EdgeFrame::ccw(*edge, los).to_point(r1, theta, z0)
}

/// Inverse of [`source_from_polar`]: `(r1, theta_deg, z0)`.
pub fn polar_from_point<T: Real>(p: &Point3<T>, edge: &Point3<T>, los: Dir2<T>) -> (T, T, T) {
    EdgeFrame::ccw(*edge, los).to_polar(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn origin() -> Point3<f64> {
        Point3::new(0.0, 0.0, 0.0)
    }

    fn x_axis() -> Dir2<f64> {
        Dir2::new(1.0, 0.0).unwrap()
    }

    #[test]
    fn path_distance_examples() {
        let p = Point3::new(3.2, 0.0, 1.5);
        assert_abs_diff_eq!(path_distance(&p, &origin(), 0.8), 4.0, epsilon = 1e-12);
        let on_edge = Point3::new(0.0, 0.0, 2.0);
        assert_eq!(path_distance(&on_edge, &origin(), 0.8), 0.8);
        let p = Point3::new(3.0, 4.0, 0.0);
        assert_abs_diff_eq!(path_distance(&p, &origin(), 0.8), 5.8, epsilon = 1e-12);
    }

    #[test]
    fn polar_examples() {
        let p = source_from_polar(3.2, 0.0, 1.5, &origin(), x_axis());
        assert_abs_diff_eq!(p.x, 3.2, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.z, 1.5, epsilon = 1e-12);

        let p = source_from_polar(1.0, 90.0, 0.0, &origin(), x_axis());
        assert_abs_diff_eq!(p.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 1.0, epsilon = 1e-12);

        let p = source_from_polar(3.1, 25.0, 1.3, &origin(), x_axis());
        let (r1, th, z0) = polar_from_point(&p, &origin(), x_axis());
        assert_abs_diff_eq!(r1, 3.1, epsilon = 1e-9);
        assert_abs_diff_eq!(th, 25.0, epsilon = 1e-9);
        assert_abs_diff_eq!(z0, 1.3, epsilon = 1e-9);
    }

    #[test]
    fn doorway_preset_is_valid() {
        let scene = DoorwayScene::<f64>::preset();
        assert!(validate_scene(&scene).is_empty(), "{:?}", scene.violations());
        assert_eq!(scene.array.count, 15);
        assert_abs_diff_eq!(scene.r2_d, 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(scene.door_width, 0.9, epsilon = 1e-12);
        let h = scene.array.heights();
        assert_abs_diff_eq!(h[0], 0.46, epsilon = 1e-12);
        assert_abs_diff_eq!(h[14], 2.28, epsilon = 1e-12);

        let frame = scene.frame().unwrap();
        assert_abs_diff_eq!(frame.normal.y, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn edge_preset_geometry() {
        let scene = EdgeScene::<f64>::preset();
        assert!(scene.violations().is_empty());
        let frame = scene.frame().unwrap();
        // Array 1 sees a source at theta with a diffraction angle theta + 25.
        let src = frame.to_point(3.1, 10.0, 1.3);
        let far = scene.arrays[1].base;
        let los_far = Dir2::new(scene.edge.x - far.x, scene.edge.y - far.y).unwrap();
        let (_, th_far, _) = EdgeFrame::ccw(scene.edge, los_far).to_polar(&src);
        assert_abs_diff_eq!(th_far, 35.0, epsilon = 1e-9);
        assert_abs_diff_eq!(far.horizontal_distance(&scene.edge), 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(scene.arrays[1].heights()[7], 2.28, epsilon = 1e-12);
    }

    #[test]
    fn boundary_violations() {
        let mut scene = DoorwayScene::<f64>::preset();
        scene.array.pitch = 0.0;
        let v = scene.violations();
        assert!(v.iter().any(|v| v.field == "MicArray.pitch"), "{v:?}");

        let mut edge = EdgeScene::<f64>::preset();
        edge.delta_theta = 120.0;
        let v = validate_scene(&edge);
        assert!(v.iter().any(|v| v.field == "EdgeScene.delta_theta"), "{v:?}");

        let mut scene = DoorwayScene::<f64>::preset();
        scene.r2_d = 2.0;
        assert!(scene.violations().iter().any(|v| v.field == "DoorwayScene.r2_d"));

        let src = SourceGroundTruth::new(-1.0, 10.0, -0.1, 0.0);
        assert_eq!(src.violations().len(), 2);

        let phys = PhysicsConfig { c: 343.0, fs: 16_000.0 };
        assert_eq!(phys.violations(Some(9_000.0)).len(), 1);
        assert!(PhysicsConfig::<f64>::default().violations(Some(9_000.0)).is_empty());
    }

    #[test]
    fn single_precision_scene() {
        let scene = DoorwayScene::<f32>::preset();
        assert!(scene.violations().is_empty());
        let p = Point3::new(3.0f32, 4.0, 0.0);
        assert!((path_distance(&p, &Point3::default(), 0.8f32) - 5.8).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn path_distance_rigid_invariance(
            px in -10.0..10.0f64, py in -10.0..10.0f64,
            ex in -10.0..10.0f64, ey in -10.0..10.0f64,
            tx in -5.0..5.0f64, ty in -5.0..5.0f64,
            rot in 0.0..360.0f64, r2 in 0.01..3.0f64,
        ) {
            let p = Point3::new(px, py, 1.0);
            let e = Point3::new(ex, ey, 0.0);
            let base = path_distance(&p, &e, r2);
            prop_assert!(base >= r2);
            let moved = path_distance(&p.translated(tx, ty, 0.3), &e.translated(tx, ty, 0.0), r2);
            prop_assert!((base - moved).abs() < 1e-9);
            let (s, c) = rot.to_radians().sin_cos();
            let rotp = Point3::new(c * px - s * py, s * px + c * py, 1.0);
            let rote = Point3::new(c * ex - s * ey, s * ex + c * ey, 0.0);
            prop_assert!((base - path_distance(&rotp, &rote, r2)).abs() < 1e-9);
        }

        #[test]
        fn polar_round_trip(
            r1 in 0.1..20.0f64, theta in -89.9..89.9f64, z0 in 0.0..3.0f64,
            ex in -5.0..5.0f64, ey in -5.0..5.0f64, los_deg in 0.0..360.0f64,
        ) {
            let edge = Point3::new(ex, ey, 0.0);
            let los = Dir2::from_degrees(los_deg);
            let p = source_from_polar(r1, theta, z0, &edge, los);
            let (r, th, z) = polar_from_point(&p, &edge, los);
            prop_assert!((r - r1).abs() <= 1e-9 * r1);
            prop_assert!((th - theta).abs() <= 1e-9 * theta.abs().max(1.0));
            prop_assert!((z - z0).abs() <= 1e-12);
        }
    }
}
