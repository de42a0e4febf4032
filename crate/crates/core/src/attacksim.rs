//! Synthetic road scenes and spoofed-point injection.
//!
//! The sensor sits at `(0, 0, height)` looking down `+x`. Ground returns lie
//! on the rings where downward beams meet the `z = 0` plane, sampled at a
//! fixed azimuth step, so consecutive sweeps of a static scene differ only by
//! jitter. Objects are boxes; each sweep samples the faces visible from the
//! sensor, weighted by their projected area.

use std::f32::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cloud::{Frame, Point3, PointCloud};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TemplateKind {
    Car,
    Cyclist,
    Pedestrian,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 3] = [
        TemplateKind::Pedestrian,
        TemplateKind::Cyclist,
        TemplateKind::Car,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateKind::Car => "CAR",
            TemplateKind::Cyclist => "CYCLIST",
            TemplateKind::Pedestrian => "PEDESTRIAN",
        }
    }

    pub fn template(self) -> ObjectTemplate {
        match self {
            TemplateKind::Car => ObjectTemplate::CAR,
            TemplateKind::Cyclist => ObjectTemplate::CYCLIST,
            TemplateKind::Pedestrian => ObjectTemplate::PEDESTRIAN,
        }
    }
}

impl std::fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Box-shaped object class. `length` runs along the heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectTemplate {
    pub kind: TemplateKind,
    pub length: f32,
    pub width: f32,
    pub height: f32,
}

impl ObjectTemplate {
    pub const CAR: ObjectTemplate = ObjectTemplate {
        kind: TemplateKind::Car,
        length: 4.5,
        width: 1.8,
        height: 1.5,
    };
    pub const CYCLIST: ObjectTemplate = ObjectTemplate {
        kind: TemplateKind::Cyclist,
        length: 1.8,
        width: 0.6,
        height: 1.7,
    };
    pub const PEDESTRIAN: ObjectTemplate = ObjectTemplate {
        kind: TemplateKind::Pedestrian,
        length: 0.6,
        width: 0.6,
        height: 1.7,
    };

    pub fn validate(&self) -> Result<()> {
        let ok = [self.length, self.width, self.height]
            .iter()
            .all(|d| d.is_finite() && *d > 0.0);
        if ok {
            Ok(())
        } else {
            invalid(format!("template {} has non-positive dimensions", self.kind))
        }
    }
}

/// Bottom-center position and heading (radians from `+x`).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub position: Point3,
    pub yaw: f32,
}

impl Pose {
    pub fn new(x: f32, y: f32, yaw: f32) -> Self {
        Self {
            position: Point3::new(x, y, 0.0),
            yaw,
        }
    }

    fn to_world(&self, local: Point3) -> Point3 {
        let (s, c) = self.yaw.sin_cos();
        Point3::new(
            self.position.x + c * local.x - s * local.y,
            self.position.y + s * local.x + c * local.y,
            self.position.z + local.z,
        )
    }

    fn to_local(&self, world: Point3) -> Point3 {
        let (s, c) = self.yaw.sin_cos();
        let d = world - self.position;
        Point3::new(c * d.x + s * d.y, -s * d.x + c * d.y, d.z)
    }

    /// Whether `p` lies inside `template` placed at this pose, up to `tol`.
    pub fn contains(&self, template: &ObjectTemplate, p: Point3, tol: f32) -> bool {
        let l = self.to_local(p);
        l.x.abs() <= template.length / 2.0 + tol
            && l.y.abs() <= template.width / 2.0 + tol
            && l.z >= -tol
            && l.z <= template.height + tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub template: ObjectTemplate,
    /// Pose at the first frame.
    pub pose: Pose,
    /// m/s
    pub velocity: Point3,
    pub points_per_frame: usize,
}

impl SceneObject {
    pub fn pose_at(&self, t: f64) -> Pose {
        Pose {
            position: self.pose.position + self.velocity * t as f32,
            yaw: self.pose.yaw,
        }
    }
}

/// Beam layout of the simulated sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorSpec {
    /// Mounting height above the ground plane, meters.
    pub height: f32,
    /// Elevation of each downward beam that produces a ground ring, degrees.
    pub ground_elevations_deg: Vec<f32>,
    /// Horizontal field of view centered on `+x`, degrees.
    pub fov_deg: f32,
    pub azimuth_step_deg: f32,
}

impl Default for SensorSpec {
    fn default() -> Self {
        Self {
            height: 1.8,
            // every 1.33 degrees, as on a 32-channel unit
            ground_elevations_deg: vec![
                -15.33, -14.0, -12.67, -11.33, -10.0, -8.67, -7.33, -6.0, -4.67,
            ],
            fov_deg: 100.0,
            azimuth_step_deg: 2.0,
        }
    }
}

impl SensorSpec {
    pub fn origin(&self) -> Point3 {
        Point3::new(0.0, 0.0, self.height)
    }

    /// Ground ring radii within `extent`, ascending.
    pub fn ring_radii(&self, extent: f32) -> Vec<f32> {
        let mut r: Vec<f32> = self
            .ground_elevations_deg
            .iter()
            .filter(|e| **e < 0.0)
            .map(|e| self.height / (-e.to_radians()).tan())
            .filter(|r| *r <= extent)
            .collect();
        r.sort_by(f32::total_cmp);
        r
    }

    fn azimuths(&self) -> Vec<f32> {
        let n = (self.fov_deg / self.azimuth_step_deg).floor() as i32;
        (0..=n)
            .map(|k| (-self.fov_deg / 2.0 + k as f32 * self.azimuth_step_deg).to_radians())
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.height > 0.0 && self.fov_deg > 0.0 && self.azimuth_step_deg > 0.0) {
            return invalid("sensor height, field of view and azimuth step must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub seed: u64,
    pub duration_frames: usize,
    /// Hz
    pub frame_rate: f64,
    /// Largest ground-ring radius kept, meters.
    pub ground_extent: f32,
    pub sensor: SensorSpec,
    pub objects: Vec<SceneObject>,
    /// Standard deviation of per-coordinate Gaussian jitter, meters.
    pub noise_sigma: f32,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            duration_frames: 11,
            frame_rate: 10.0,
            ground_extent: 25.0,
            sensor: SensorSpec::default(),
            objects: Vec::new(),
            noise_sigma: 0.02,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.duration_frames == 0 {
            return invalid("scene needs at least one frame");
        }
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return invalid("frame rate must be positive");
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return invalid("noise sigma must be non-negative");
        }
        if !(self.ground_extent.is_finite() && self.ground_extent > 0.0) {
            return invalid("ground extent must be positive");
        }
        self.sensor.validate()?;
        for (k, o) in self.objects.iter().enumerate() {
            o.template.validate()?;
            if o.points_per_frame == 0 {
                return invalid(format!("object {k} has a zero point budget"));
            }
            if !(o.pose.position.is_finite() && o.velocity.is_finite()) {
                return invalid(format!("object {k} has a non-finite pose or velocity"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    pub index: u32,
    /// One pose per scene object.
    pub poses: Vec<Pose>,
    /// Scene object behind each point, `None` for ground.
    pub point_object: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub frames: Vec<FrameTruth>,
}

impl GroundTruth {
    pub fn frame(&self, index: u32) -> Option<&FrameTruth> {
        self.frames.iter().find(|f| f.index == index)
    }
}

struct Face {
    /// local-frame center, normal and two half-extent axes
    center: Point3,
    normal: Point3,
    u: Point3,
    v: Point3,
    area: f32,
}

fn faces(t: &ObjectTemplate) -> [Face; 5] {
    let (hl, hw, hh) = (t.length / 2.0, t.width / 2.0, t.height / 2.0);
    let x = Point3::new(1.0, 0.0, 0.0);
    let y = Point3::new(0.0, 1.0, 0.0);
    let z = Point3::new(0.0, 0.0, 1.0);
    let side = |n: Point3, c: Point3, u: Point3, v: Point3| Face {
        center: c,
        normal: n,
        u,
        v,
        area: 4.0 * u.norm() as f32 * v.norm() as f32,
    };
    [
        side(x, Point3::new(hl, 0.0, hh), y * hw, z * hh),
        side(-x, Point3::new(-hl, 0.0, hh), y * hw, z * hh),
        side(y, Point3::new(0.0, hw, hh), x * hl, z * hh),
        side(-y, Point3::new(0.0, -hw, hh), x * hl, z * hh),
        side(z, Point3::new(0.0, 0.0, t.height), x * hl, y * hw),
    ]
}

fn dot(a: Point3, b: Point3) -> f32 {
    a.x * b.x + a.y * b.y + a.z * b.z
}

/// Projected area of each face as seen from `sensor`; zero for faces turned away.
fn visible_weights(t: &ObjectTemplate, pose: &Pose, sensor: Point3) -> Vec<f32> {
    let s = pose.to_local(sensor);
    faces(t)
        .iter()
        .map(|f| {
            let to_sensor = s - f.center;
            let d = to_sensor.norm() as f32;
            let cos = if d > 0.0 { dot(f.normal, to_sensor) / d } else { 0.0 };
            f.area * cos.max(0.0)
        })
        .collect()
}

fn pick(weights: &[f32], rng: &mut ChaCha8Rng) -> usize {
    let total: f32 = weights.iter().sum();
    let mut r = rng.random_range(0.0..total);
    for (k, w) in weights.iter().enumerate() {
        if r < *w {
            return k;
        }
        r -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// `n` points on the faces of `t` at `pose` visible from `sensor`.
fn sample_visible(
    t: &ObjectTemplate,
    pose: &Pose,
    sensor: Point3,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Point3> {
    let w = visible_weights(t, pose, sensor);
    if w.iter().all(|w| *w <= 0.0) {
        return Vec::new();
    }
    let fs = faces(t);
    (0..n)
        .map(|_| {
            let f = &fs[pick(&w, rng)];
            let a = rng.random_range(-1.0f32..=1.0);
            let b = rng.random_range(-1.0f32..=1.0);
            pose.to_world(f.center + f.u * a + f.v * b)
        })
        .collect()
}

fn jitter(p: Point3, noise: Option<&Normal<f32>>, rng: &mut ChaCha8Rng) -> Point3 {
    match noise {
        Some(n) => p + Point3::new(n.sample(rng), n.sample(rng), n.sample(rng)),
        None => p,
    }
}

/// Renders every frame of `spec`. Deterministic in `spec.seed`.
pub fn generate_scene(spec: &SceneSpec) -> Result<(Vec<Frame>, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = (spec.noise_sigma > 0.0)
        .then(|| Normal::new(0.0, spec.noise_sigma))
        .transpose()
        .map_err(|e| crate::Error::InvalidArgument(e.to_string()))?;
    let sensor = spec.sensor.origin();
    let mut ground = Vec::new();
    for r in spec.sensor.ring_radii(spec.ground_extent) {
        for a in spec.sensor.azimuths() {
            ground.push(Point3::new(r * a.cos(), r * a.sin(), 0.0));
        }
    }

    let mut frames = Vec::with_capacity(spec.duration_frames);
    let mut truth = GroundTruth::default();
    for k in 0..spec.duration_frames {
        let t = k as f64 / spec.frame_rate;
        let mut cloud = PointCloud::with_capacity(ground.len());
        let mut owner = Vec::with_capacity(ground.len());
        for &g in &ground {
            cloud.push(jitter(g, noise.as_ref(), &mut rng));
            owner.push(None);
        }
        let mut poses = Vec::with_capacity(spec.objects.len());
        for (id, o) in spec.objects.iter().enumerate() {
            let pose = o.pose_at(t);
            for p in sample_visible(&o.template, &pose, sensor, o.points_per_frame, &mut rng) {
                cloud.push(jitter(p, noise.as_ref(), &mut rng));
                owner.push(Some(id));
            }
            poses.push(pose);
        }
        frames.push(Frame::new(k as u32, t, cloud));
        truth.frames.push(FrameTruth {
            index: k as u32,
            poses,
            point_object: owner,
        });
    }
    Ok((frames, truth))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AttackKind {
    Dense,
    Sparse,
}

impl AttackKind {
    /// Largest number of points an attack of this kind may add.
    pub fn budget(self) -> usize {
        match self {
            AttackKind::Dense => 200,
            AttackKind::Sparse => 64,
        }
    }
}

/// Height range, above the template's base, of the sparse frontal band.
pub const SPARSE_BAND: (f32, f32) = (0.8, 1.4);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Pose(Pose),
    /// Next to a scene object: its pose at the target frame, shifted by `offset`.
    Attached { object: usize, offset: Point3 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub template: ObjectTemplate,
    pub point_count: usize,
    pub placement: Placement,
    pub target_frame: u32,
    /// Horizontal angle, seen from the sensor and centered on the placement,
    /// that injected returns are confined to. Spoofing hardware can only
    /// reach a narrow slice of a sweep; `None` means unrestricted.
    #[serde(default)]
    pub azimuth_window_deg: Option<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Injection {
    pub frame: Frame,
    /// Indices of the added points in `frame.cloud`.
    pub injected: Vec<usize>,
    /// Pose the template was rendered at.
    pub pose: Pose,
}

impl AttackSpec {
    fn resolve_pose(&self, truth: Option<&GroundTruth>) -> Result<Pose> {
        match self.placement {
            Placement::Pose(p) => Ok(p),
            Placement::Attached { object, offset } => {
                let t = truth
                    .and_then(|t| t.frame(self.target_frame))
                    .ok_or_else(|| {
                        crate::Error::InvalidArgument(format!(
                            "attached placement needs ground truth for frame {}",
                            self.target_frame
                        ))
                    })?;
                let base = t.poses.get(object).ok_or_else(|| {
                    crate::Error::InvalidArgument(format!("no scene object {object}"))
                })?;
                Ok(Pose {
                    position: base.position + offset,
                    yaw: base.yaw,
                })
            }
        }
    }
}

/// Points on a horizontal band of the template's most sensor-facing side.
fn sample_band(
    t: &ObjectTemplate,
    pose: &Pose,
    sensor: Point3,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Point3>> {
    let w = visible_weights(t, pose, sensor);
    let front = (0..4)
        .max_by(|a, b| w[*a].total_cmp(&w[*b]))
        .filter(|k| w[*k] > 0.0);
    let Some(front) = front else {
        return invalid("template has no side facing the sensor");
    };
    let f = &faces(t)[front];
    let (lo, hi) = (SPARSE_BAND.0.min(t.height), SPARSE_BAND.1.min(t.height));
    Ok((0..n)
        .map(|_| {
            let a = rng.random_range(-1.0f32..=1.0);
            let z = rng.random_range(lo..=hi);
            pose.to_world(Point3::new(f.center.x, f.center.y, z) + f.u * a)
        })
        .collect())
}

/// Appends the spoofed points of `attack` to `frame`.
///
/// Dense attacks cover the visible faces of the template; sparse ones only a
/// horizontal band ([`SPARSE_BAND`]) of its most sensor-facing side.
/// `truth` is needed only for [`Placement::Attached`].
pub fn inject(
    frame: &Frame,
    attack: &AttackSpec,
    sensor: &SensorSpec,
    seed: u64,
    truth: Option<&GroundTruth>,
) -> Result<Injection> {
    attack.template.validate()?;
    if attack.point_count > attack.kind.budget() {
        return invalid(format!(
            "{:?} attack allows at most {} points, got {}",
            attack.kind,
            attack.kind.budget(),
            attack.point_count
        ));
    }
    let pose = attack.resolve_pose(truth)?;
    let mut out = frame.clone();
    let start = out.cloud.len();
    if attack.point_count == 0 {
        return Ok(Injection {
            frame: out,
            injected: Vec::new(),
            pose,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let origin = sensor.origin();
    let window = match attack.azimuth_window_deg {
        Some(w) if !(w.is_finite() && w > 0.0) => {
            return invalid(format!("azimuth window must be positive, got {w}"));
        }
        Some(w) => Some((pose.position.y.atan2(pose.position.x), w.to_radians() / 2.0)),
        None => None,
    };
    let inside = |p: &Point3| match window {
        Some((centre, half)) => wrap_angle(p.y.atan2(p.x) - centre).abs() <= half,
        None => true,
    };
    let t = &attack.template;
    let mut points = Vec::with_capacity(attack.point_count);
    let mut tries = 0;
    while points.len() < attack.point_count && tries < 1000 {
        tries += 1;
        let need = attack.point_count - points.len();
        let batch = match attack.kind {
            AttackKind::Dense => sample_visible(t, &pose, origin, need, &mut rng),
            AttackKind::Sparse => sample_band(t, &pose, origin, need, &mut rng)?,
        };
        if batch.is_empty() {
            break;
        }
        points.extend(batch.into_iter().filter(|p| inside(p)));
    }
    points.truncate(attack.point_count);
    if points.len() < attack.point_count {
        return invalid("template surface does not intersect the azimuth window");
    }
    if points.is_empty() {
        return invalid("template has no surface facing the sensor");
    }
    for p in points {
        out.cloud.push(p);
    }
    Ok(Injection {
        injected: (start..out.cloud.len()).collect(),
        frame: out,
        pose,
    })
}

/// Frames per benchmark scene; enough history for the longest buffer tried.
pub const BENCH_FRAMES: usize = 16;
/// Minimum radial gap between a fake object's near face and any ground ring.
pub const RING_CLEARANCE: f32 = 0.4;

/// Horizontal reach of the benchmark's dense spoofer, degrees.
pub const DENSE_WINDOW_DEG: f32 = 8.0;

/// One paired benchmark case: the same scene with a clean and a spoofed last frame.
#[derive(Debug, Clone)]
pub struct BenchmarkScenario {
    pub seed: u64,
    pub kind: AttackKind,
    pub template: TemplateKind,
    /// Whole sequence; the last frame is the clean incoming frame.
    pub frames: Vec<Frame>,
    pub truth: GroundTruth,
    pub attack: AttackSpec,
    pub poisoned: Injection,
}

impl BenchmarkScenario {
    /// The `history_len` frames before the last one.
    pub fn history(&self, history_len: usize) -> &[Frame] {
        let n = self.frames.len();
        &self.frames[n - 1 - history_len.min(n - 1)..n - 1]
    }

    pub fn incoming(&self) -> &Frame {
        self.frames.last().unwrap()
    }
}

/// Template used by the dense suite for a given seed.
pub fn dense_template(seed: u64) -> TemplateKind {
    TemplateKind::ALL[(seed % 3) as usize]
}

fn wrap_angle(a: f32) -> f32 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI
    } else if a < -PI {
        a += 2.0 * PI
    }
    a
}

fn half_diagonal(t: &ObjectTemplate) -> f32 {
    (t.length * t.length + t.width * t.width).sqrt() / 2.0
}

/// Builds the seeded scene shared by the clean and poisoned variants of a case.
///
/// A fake of `template` (dense) or a car band (sparse) is placed at a random
/// azimuth whose near face sits in a gap between ground rings; real objects
/// keep at least 12 degrees of azimuth and a meter of clearance away from
/// it, and from each other, for the whole sequence.
pub fn benchmark_scenario(seed: u64, kind: AttackKind) -> Result<BenchmarkScenario> {
    let template = match kind {
        AttackKind::Dense => dense_template(seed),
        AttackKind::Sparse => TemplateKind::Car,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0bad_cafe_f00d);
    let sensor = SensorSpec::default();
    let spec_base = SceneSpec {
        seed,
        duration_frames: BENCH_FRAMES,
        sensor: sensor.clone(),
        ..SceneSpec::default()
    };
    let half_fov = sensor.fov_deg.to_radians() / 2.0;

    // fake placement
    let t = template.template();
    // depth of the fake that must fit between rings; only the near face for long templates
    let (yaw_offset, depth, max_range) = match (kind, template) {
        (AttackKind::Sparse, _) => (PI / 2.0, t.width, 16.0),
        (_, TemplateKind::Pedestrian) => (0.0, t.length, 14.0),
        _ => (0.0, 0.0, 14.0),
    };
    let rings = sensor.ring_radii(spec_base.ground_extent);
    let windows: Vec<(f32, f32)> = rings
        .windows(2)
        .map(|w| (w[0] + RING_CLEARANCE, w[1] - RING_CLEARANCE - depth))
        .filter(|(lo, hi)| hi > lo && *lo >= 9.0 && *hi <= max_range)
        .collect();
    if windows.is_empty() {
        return invalid("no ring gap wide enough for the fake object");
    }
    let (lo, hi) = windows[rng.random_range(0..windows.len())];
    let near = rng.random_range(lo..=hi);
    let theta = rng.random_range(-half_fov * 0.7..=half_fov * 0.7);
    let centre_r = near
        + if yaw_offset == 0.0 {
            t.length / 2.0
        } else {
            t.width / 2.0
        };
    let fake_pose = Pose::new(centre_r * theta.cos(), centre_r * theta.sin(), theta + yaw_offset);

    // real objects
    let n_objects = rng.random_range(2..=4);
    let mut objects = Vec::with_capacity(n_objects);
    let mut attempts = 0;
    while objects.len() < n_objects && attempts < 200 {
        attempts += 1;
        let kind = TemplateKind::ALL[rng.random_range(0..3)];
        let tpl = kind.template();
        let (speed, budget) = match kind {
            TemplateKind::Car => (
                if rng.random_bool(0.5) { 0.0 } else { rng.random_range(2.0..4.0) },
                120,
            ),
            TemplateKind::Cyclist => (rng.random_range(1.5..3.5), 50),
            TemplateKind::Pedestrian => (rng.random_range(0.5..1.5), 40),
        };
        let r = rng.random_range(7.0f32..18.0);
        let a = rng.random_range(-half_fov * 0.85..=half_fov * 0.85);
        let yaw = rng.random_range(-PI..PI);
        let vel = Point3::new(speed * yaw.cos(), speed * yaw.sin(), 0.0);
        let start = Point3::new(r * a.cos(), r * a.sin(), 0.0);
        let reach = half_diagonal(&tpl);
        let clear = (0..BENCH_FRAMES).all(|k| {
            let p = start + vel * (k as f32 / spec_base.frame_rate as f32);
            let az = p.y.atan2(p.x);
            let range = (p.x * p.x + p.y * p.y).sqrt();
            let apart = |q: Point3, extra: f32| {
                let d = p - q;
                (d.x * d.x + d.y * d.y).sqrt() > reach + extra + 1.0
            };
            wrap_angle(az - theta).abs() > 12f32.to_radians()
                && apart(fake_pose.position, half_diagonal(&t))
                && objects.iter().all(|o: &SceneObject| {
                    apart(o.pose_at(k as f64 / spec_base.frame_rate).position, half_diagonal(&o.template))
                })
                && az.abs() < half_fov
                && range > 5.0
        });
        if !clear {
            continue;
        }
        objects.push(SceneObject {
            template: tpl,
            pose: Pose {
                position: start,
                yaw,
            },
            velocity: vel,
            points_per_frame: budget,
        });
    }
    let spec = SceneSpec {
        objects,
        ..spec_base
    };
    let (frames, truth) = generate_scene(&spec)?;
    let last = frames.last().unwrap();
    let attack = AttackSpec {
        kind,
        template: t,
        point_count: kind.budget(),
        placement: Placement::Pose(fake_pose),
        target_frame: last.index,
        azimuth_window_deg: match kind {
            AttackKind::Dense => Some(DENSE_WINDOW_DEG),
            AttackKind::Sparse => None,
        },
    };
    let poisoned = inject(last, &attack, &sensor, seed.wrapping_add(1), Some(&truth))?;
    Ok(BenchmarkScenario {
        seed,
        kind,
        template,
        frames,
        truth,
        attack,
        poisoned,
    })
}

/// `n` points spread over the full surfaces of two boxes standing on the
/// ground, for flow-recovery checks.
pub fn two_body_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bodies = [
        (Pose::new(5.0, 0.0, 0.3), [0.5f32, 0.5, 0.8]),
        (Pose::new(7.0, 2.0, -0.4), [0.6, 0.4, 0.9]),
    ];
    let mut out = PointCloud::with_capacity(n);
    for (k, (pose, d)) in bodies.iter().enumerate() {
        let t = ObjectTemplate {
            kind: TemplateKind::Pedestrian,
            length: d[0],
            width: d[1],
            height: d[2],
        };
        let fs = faces(&t);
        let w: Vec<f32> = fs.iter().map(|f| f.area).collect();
        let count = if k == 0 { n / 2 } else { n - n / 2 };
        for _ in 0..count {
            let f = &fs[pick(&w, &mut rng)];
            let a = rng.random_range(-1.0f32..=1.0);
            let b = rng.random_range(-1.0f32..=1.0);
            out.push(pose.to_world(f.center + f.u * a + f.v * b));
        }
    }
    out
}
