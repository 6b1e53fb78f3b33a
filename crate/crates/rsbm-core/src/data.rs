//! Synthetic conditional trajectory families and CSV persistence.
//!
//! Two planar shape classes with continuous pose parameters:
//!
//! - `star_patrol` — `H` points sampled by arc length along the closed
//!   5-point star polyline (pentagram visiting order 0→2→4→1→3→0);
//! - `figure8` — `H` points on the lemniscate `(sin τ, sin τ cos τ)`.
//!
//! A task fixes shape, scale, rotation, start phase, and waypoint jitter;
//! the context vector encodes everything the generator is conditioned on
//! (class one-hot, scale, rotation, optionally phase, and the clean goal
//! offset). Hiding the phase from the context makes the conditional
//! distribution genuinely multimodal.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bridge::Trajectory;
use crate::error::{Error, Result};
use crate::model::ContextVector;

/// Default planning horizon (waypoints per trajectory).
pub const DEFAULT_HORIZON: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyShape {
    StarPatrol,
    Figure8,
}

impl ToyShape {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "star" | "star_patrol" => Ok(Self::StarPatrol),
            "figure8" | "fig8" => Ok(Self::Figure8),
            other => Err(Error::Dataset(format!("unknown shape '{other}'"))),
        }
    }
}

impl fmt::Display for ToyShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::StarPatrol => write!(f, "star"),
            Self::Figure8 => write!(f, "figure8"),
        }
    }
}

/// One fully specified generation task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyTask {
    pub shape: ToyShape,
    pub scale: f64,
    /// Rotation of the whole shape, radians.
    pub rotation: f64,
    /// Start offset along the curve; one full lap is `2π`.
    pub phase: f64,
    /// Std of the per-coordinate waypoint jitter.
    pub noise: f64,
}

impl ToyTask {
    pub fn validate(&self) -> Result<()> {
        if self.scale <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "task scale must be positive, got {}",
                self.scale
            )));
        }
        if self.noise < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "task noise must be nonnegative, got {}",
                self.noise
            )));
        }
        Ok(())
    }
}

/// Pentagram vertex in star visiting order (0, 2, 4, 1, 3), unit circumradius.
fn star_vertex(i: usize) -> [f64; 2] {
    let outer = (2 * i) % 5;
    let angle = PI / 2.0 + outer as f64 * TAU / 5.0;
    [angle.cos(), angle.sin()]
}

/// Unit-pose curve point at fraction `u ∈ [0, 1)` of one lap.
fn unit_point(shape: ToyShape, u: f64) -> [f64; 2] {
    match shape {
        ToyShape::StarPatrol => {
            // 5 equal chords; uniform arc length == uniform in u
            let pos = u.rem_euclid(1.0) * 5.0;
            let seg = (pos.floor() as usize).min(4);
            let local = pos - seg as f64;
            let a = star_vertex(seg);
            let b = star_vertex((seg + 1) % 5);
            [
                a[0] + local * (b[0] - a[0]),
                a[1] + local * (b[1] - a[1]),
            ]
        }
        ToyShape::Figure8 => {
            let tau = u * TAU;
            [tau.sin(), tau.sin() * tau.cos()]
        }
    }
}

/// Noise-free trajectory for a task: `H` points along one lap starting at the
/// task phase, then scaled and rotated.
pub fn clean_trajectory(task: &ToyTask, horizon: usize) -> Result<Trajectory> {
    task.validate()?;
    if horizon == 0 {
        return Err(Error::InvalidConfig("horizon must be positive".into()));
    }
    let (sin_r, cos_r) = task.rotation.sin_cos();
    let mut waypoints = Vec::with_capacity(horizon);
    for j in 0..horizon {
        let u = (task.phase / TAU + j as f64 / horizon as f64).rem_euclid(1.0);
        let p = unit_point(task.shape, u);
        let x = task.scale * p[0];
        let y = task.scale * p[1];
        waypoints.push([x * cos_r - y * sin_r, x * sin_r + y * cos_r]);
    }
    Trajectory::from_waypoints(&waypoints)
}

/// One dataset entry: the task that produced it and the jittered trajectory.
#[derive(Debug, Clone)]
pub struct Sample {
    pub task: ToyTask,
    pub trajectory: Trajectory,
}

/// Draws `n` samples, cycling through `tasks` and adding fresh jitter each
/// time. With zero noise a repeated task reproduces the identical trajectory.
pub fn generate_dataset<G: Rng + ?Sized>(
    n: usize,
    tasks: &[ToyTask],
    horizon: usize,
    rng: &mut G,
) -> Result<Vec<Sample>> {
    if n == 0 {
        return Err(Error::Dataset("dataset size must be at least 1".into()));
    }
    if tasks.is_empty() {
        return Err(Error::Dataset("need at least one task".into()));
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let task = tasks[i % tasks.len()];
        let clean = clean_trajectory(&task, horizon)?;
        let trajectory = if task.noise > 0.0 {
            let jittered: Vec<f64> = clean
                .flat()
                .iter()
                .map(|&v| v + task.noise * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
                .collect();
            Trajectory::from_flat(jittered)?
        } else {
            clean
        };
        out.push(Sample { task, trajectory });
    }
    Ok(out)
}

/// Context dimension used throughout: class one-hot (2), scale, rotation as
/// (cos, sin), phase slot, and clean goal offset (2).
pub const CONTEXT_DIM: usize = 8;

/// Builds the conditioning vector for a task. When `hide_phase` is set the
/// phase slot is zeroed, leaving the start point ambiguous and the
/// conditional trajectory distribution multimodal.
pub fn context_of(task: &ToyTask, horizon: usize, hide_phase: bool) -> Result<ContextVector> {
    let goal = clean_trajectory(task, horizon)?.last_waypoint();
    let one_hot = match task.shape {
        ToyShape::StarPatrol => [1.0, 0.0],
        ToyShape::Figure8 => [0.0, 1.0],
    };
    ContextVector::new(vec![
        one_hot[0],
        one_hot[1],
        task.scale,
        task.rotation.cos(),
        task.rotation.sin(),
        if hide_phase { 0.0 } else { task.phase },
        goal[0],
        goal[1],
    ])
}

/// Pose distributions used when synthesizing task lists.
#[derive(Debug, Clone, Copy)]
pub struct TaskSampler {
    pub scale_range: (f64, f64),
    pub rotation_range: (f64, f64),
    pub phase_range: (f64, f64),
    pub noise: f64,
}

impl Default for TaskSampler {
    fn default() -> Self {
        Self {
            scale_range: (2.0, 3.0),
            rotation_range: (-0.4, 0.4),
            phase_range: (0.0, 0.6),
            noise: 0.1,
        }
    }
}

impl TaskSampler {
    pub fn sample<G: Rng + ?Sized>(&self, shape: ToyShape, rng: &mut G) -> ToyTask {
        let uniform = |rng: &mut G, (lo, hi): (f64, f64)| {
            let u: f64 = rng.random();
            lo + u * (hi - lo)
        };
        ToyTask {
            shape,
            scale: uniform(rng, self.scale_range),
            rotation: uniform(rng, self.rotation_range),
            phase: uniform(rng, self.phase_range),
            noise: self.noise,
        }
    }
}

/// Fixed CSV header for the default 8-waypoint horizon:
/// `shape,scale,rotation,phase,noise,x0,y0,…,x7,y7`.
pub fn csv_header(horizon: usize) -> String {
    let mut header = String::from("shape,scale,rotation,phase,noise");
    for i in 0..horizon {
        header.push_str(&format!(",x{i},y{i}"));
    }
    header
}

/// Writes the dataset as CSV. Floats use the shortest round-trip decimal
/// form, so identical inputs produce byte-identical files.
pub fn write_csv(path: &Path, samples: &[Sample]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Dataset("refusing to write an empty dataset".into()));
    }
    let horizon = samples[0].trajectory.horizon();
    let mut out = String::new();
    out.push_str(&csv_header(horizon));
    out.push('\n');
    for s in samples {
        s.trajectory.check_shape(&samples[0].trajectory)?;
        out.push_str(&format!(
            "{},{},{},{},{}",
            s.task.shape, s.task.scale, s.task.rotation, s.task.phase, s.task.noise
        ));
        for v in s.trajectory.flat() {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a dataset written by [`write_csv`].
pub fn read_csv(path: &Path) -> Result<Vec<Sample>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Dataset("empty dataset file".into()))?;
    let cols = header.split(',').count();
    if cols < 7 || (cols - 5) % 2 != 0 {
        return Err(Error::Dataset(format!(
            "malformed header with {cols} columns"
        )));
    }
    let horizon = (cols - 5) / 2;
    if header != csv_header(horizon) {
        return Err(Error::Dataset("unexpected CSV header".into()));
    }
    let mut samples = Vec::new();
    for (line_no, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols {
            return Err(Error::Dataset(format!(
                "row {} has {} fields, expected {cols}",
                line_no + 2,
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Dataset(format!("bad float '{s}' at row {}", line_no + 2)))
        };
        let task = ToyTask {
            shape: ToyShape::parse(fields[0])?,
            scale: parse(fields[1])?,
            rotation: parse(fields[2])?,
            phase: parse(fields[3])?,
            noise: parse(fields[4])?,
        };
        let values = fields[5..]
            .iter()
            .map(|s| parse(s))
            .collect::<Result<Vec<f64>>>()?;
        samples.push(Sample {
            task,
            trajectory: Trajectory::from_flat(values)?,
        });
    }
    if samples.is_empty() {
        return Err(Error::Dataset("dataset file has no rows".into()));
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::mse;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn task(shape: ToyShape) -> ToyTask {
        ToyTask {
            shape,
            scale: 1.0,
            rotation: 0.0,
            phase: 0.0,
            noise: 0.0,
        }
    }

    #[test]
    fn noiseless_generation_is_deterministic() {
        let t = task(ToyShape::StarPatrol);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = generate_dataset(2, &[t], 8, &mut rng).unwrap();
        assert_eq!(a[0].trajectory, a[1].trajectory);
    }

    #[test]
    fn figure8_starts_at_the_origin() {
        let t = task(ToyShape::Figure8);
        let traj = clean_trajectory(&t, 8).unwrap();
        let first = traj.waypoint(0);
        assert!(first[0].abs() < 1e-15 && first[1].abs() < 1e-15);
    }

    #[test]
    fn star_has_unit_circumradius_vertices() {
        let t = task(ToyShape::StarPatrol);
        let traj = clean_trajectory(&t, 5).unwrap();
        // H = 5 with phase 0 lands exactly on the 5 star vertices
        for i in 0..5 {
            let w = traj.waypoint(i);
            let r = (w[0] * w[0] + w[1] * w[1]).sqrt();
            assert!((r - 1.0).abs() < 1e-12, "vertex {i} radius {r}");
        }
    }

    #[test]
    fn scale_and_rotation_act_as_a_similarity() {
        let base = clean_trajectory(&task(ToyShape::Figure8), 8).unwrap();
        let mut t = task(ToyShape::Figure8);
        t.scale = 2.0;
        t.rotation = PI / 2.0;
        let moved = clean_trajectory(&t, 8).unwrap();
        for i in 0..8 {
            let b = base.waypoint(i);
            let m = moved.waypoint(i);
            // rotation by π/2: (x, y) → (−y, x), then scale 2
            assert!((m[0] + 2.0 * b[1]).abs() < 1e-12);
            assert!((m[1] - 2.0 * b[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn class_conditional_means_are_separated() {
        let sampler = TaskSampler::default();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut tasks = Vec::new();
        for _ in 0..500 {
            tasks.push(sampler.sample(ToyShape::StarPatrol, &mut rng));
            tasks.push(sampler.sample(ToyShape::Figure8, &mut rng));
        }
        let samples = generate_dataset(1000, &tasks, 8, &mut rng).unwrap();
        let mut means = [vec![0.0; 16], vec![0.0; 16]];
        let mut counts = [0usize; 2];
        for s in &samples {
            let class = match s.task.shape {
                ToyShape::StarPatrol => 0,
                ToyShape::Figure8 => 1,
            };
            counts[class] += 1;
            for (acc, &v) in means[class].iter_mut().zip(s.trajectory.flat()) {
                *acc += v;
            }
        }
        for (mean, count) in means.iter_mut().zip(counts) {
            assert!(count > 400);
            for v in mean.iter_mut() {
                *v /= count as f64;
            }
        }
        let star_mean = Trajectory::from_flat(means[0].clone()).unwrap();
        let fig8_mean = Trajectory::from_flat(means[1].clone()).unwrap();
        let separation = mse(&star_mean, &fig8_mean).unwrap();
        assert!(separation > 0.5, "class-mean separation {separation}");
    }

    #[test]
    fn context_layout_and_phase_hiding() {
        let mut t = task(ToyShape::Figure8);
        t.scale = 2.5;
        t.phase = 0.3;
        let c = context_of(&t, 8, false).unwrap();
        assert_eq!(c.dim(), CONTEXT_DIM);
        assert_eq!(c.values()[0], 0.0);
        assert_eq!(c.values()[1], 1.0);
        assert_eq!(c.values()[2], 2.5);
        assert_eq!(c.values()[5], 0.3);
        let hidden = context_of(&t, 8, true).unwrap();
        assert_eq!(hidden.values()[5], 0.0);
        // goal offset is the clean final waypoint
        let goal = clean_trajectory(&t, 8).unwrap().last_waypoint();
        assert_eq!(c.values()[6], goal[0]);
        assert_eq!(c.values()[7], goal[1]);
    }

    #[test]
    fn csv_round_trip_preserves_every_bit() {
        let sampler = TaskSampler::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let tasks: Vec<ToyTask> = (0..10)
            .map(|i| {
                let shape = if i % 2 == 0 {
                    ToyShape::StarPatrol
                } else {
                    ToyShape::Figure8
                };
                sampler.sample(shape, &mut rng)
            })
            .collect();
        let samples = generate_dataset(25, &tasks, 8, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        write_csv(&path, &samples).unwrap();
        let back = read_csv(&path).unwrap();
        assert_eq!(back.len(), samples.len());
        for (a, b) in samples.iter().zip(&back) {
            assert_eq!(a.task, b.task);
            assert_eq!(a.trajectory, b.trajectory);
        }
        // writing the parsed samples again is byte-identical
        let path2 = dir.path().join("data2.csv");
        write_csv(&path2, &back).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn rejects_empty_requests() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(generate_dataset(0, &[task(ToyShape::Figure8)], 8, &mut rng).is_err());
        assert!(generate_dataset(5, &[], 8, &mut rng).is_err());
    }
}
