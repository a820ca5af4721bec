//! Synthetic scenes, a perfect-velocity kinematic plant, and the episode
//! runner that chains vision, denoising, planning and control.

use crate::classical::{classical_pipeline, ClassicalConfig, Point, VisionError};
use crate::denoise::{DenoiseError, ProposalBuffer};
use crate::image::{center_quarter_rect, encode_pgm, encode_ppm, DepthImage, RgbImage};
use crate::kinematics::{
    control_step, fk, ArmModel, ControlConfig, ErrorTwist, JointVector, KinematicsError, Pose,
};
use crate::learned::{learned_pipeline, LearnError, ModelParams};
use crate::proposal::{wrap_grasp_angle, GraspProposal};
use crate::trajectory::{plan, TrajectoryError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

pub const BACKGROUND: [u8; 3] = [96, 96, 96];
/// Roughly iso-luminant with the background, so the ball leaves no edges.
pub const BALL_COLOR: [u8; 3] = [200, 60, 10];
pub const CREASE_COLOR: [u8; 3] = [250, 250, 250];
pub const TABLE_DEPTH_MM: f64 = 700.0;

pub const FAILURE_TRACKING: &str = "tracking tolerance not met";

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation parameter: {0}")]
    InvalidParameter(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneKind {
    Flat,
    Crumpled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub kind: SceneKind,
    /// Number of distractor creases besides the graspable one.
    pub distractors: (usize, usize),
    pub ball_radius: (f64, f64),
    pub crease_length: (f64, f64),
    pub crease_elevation_mm: (f64, f64),
    pub ball_height_mm: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width: 512,
            height: 288,
            kind: SceneKind::Crumpled,
            distractors: (1, 3),
            ball_radius: (14.0, 22.0),
            crease_length: (40.0, 90.0),
            crease_elevation_mm: (5.0, 15.0),
            ball_height_mm: 40.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BallTruth {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Crease {
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub width: f64,
    pub elevation_mm: f64,
}

impl Crease {
    pub fn midpoint(&self) -> Point {
        Point::new((self.a[0] + self.b[0]) / 2.0, (self.a[1] + self.b[1]) / 2.0)
    }

    pub fn length(&self) -> f64 {
        (self.b[0] - self.a[0]).hypot(self.b[1] - self.a[1])
    }

    /// Direction in pixel coordinates, wrapped to (-pi/2, pi/2].
    pub fn angle(&self) -> f64 {
        wrap_grasp_angle((self.b[1] - self.a[1]).atan2(self.b[0] - self.a[0]))
    }

    fn distance_to(&self, p: Point) -> f64 {
        let (dx, dy) = (self.b[0] - self.a[0], self.b[1] - self.a[1]);
        let len2 = dx * dx + dy * dy;
        let s = (((p.x - self.a[0]) * dx + (p.y - self.a[1]) * dy) / len2).clamp(0.0, 1.0);
        (p.x - self.a[0] - s * dx).hypot(p.y - self.a[1] - s * dy)
    }

    fn distance_to_crease(&self, other: &Crease) -> f64 {
        if segments_intersect(self, other) {
            return 0.0;
        }
        let ends = |c: &Crease| [Point::new(c.a[0], c.a[1]), Point::new(c.b[0], c.b[1])];
        ends(other)
            .iter()
            .map(|p| self.distance_to(*p))
            .chain(ends(self).iter().map(|p| other.distance_to(*p)))
            .fold(f64::INFINITY, f64::min)
    }
}

fn segments_intersect(c: &Crease, d: &Crease) -> bool {
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let d1 = cross(c.a, c.b, d.a);
    let d2 = cross(c.a, c.b, d.b);
    let d3 = cross(d.a, d.b, c.a);
    let d4 = cross(d.a, d.b, c.b);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SceneLabel {
    pub pixel: [f64; 2],
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub rgb: RgbImage,
    pub depth: DepthImage,
    pub ball: BallTruth,
    pub creases: Vec<Crease>,
    pub label: Option<SceneLabel>,
}

/// Reference labeling rule: among creases, the one whose midpoint distance to
/// the ball center is nearest `1.1 * radius`, ties to the longer crease.
pub fn label_creases(ball: &BallTruth, creases: &[Crease]) -> Option<SceneLabel> {
    let center = Point::new(ball.center[0], ball.center[1]);
    let target = 1.1 * ball.radius;
    let score = |c: &Crease| (c.midpoint().distance(&center) - target).abs();
    creases
        .iter()
        .min_by(|a, b| {
            score(a)
                .total_cmp(&score(b))
                .then(b.length().total_cmp(&a.length()))
        })
        .map(|c| {
            let m = c.midpoint();
            SceneLabel {
                pixel: [m.x, m.y],
                theta: c.angle(),
            }
        })
}

fn uniform(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    if range.1 > range.0 {
        rng.random_range(range.0..range.1)
    } else {
        range.0
    }
}

/// Renders a deterministic scene for `seed`. Ball and creases stay inside the
/// center quarter of the frame.
pub fn generate_scene(seed: u64, config: &SceneConfig) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x0, y0, w, h) = center_quarter_rect(config.width, config.height);
    let (x0, y0, w, h) = (x0 as f64, y0 as f64, w as f64, h as f64);
    let margin = 4.0;
    let inside = |p: [f64; 2]| {
        p[0] >= x0 + margin && p[0] <= x0 + w - 1.0 - margin && p[1] >= y0 + margin && p[1] <= y0 + h - 1.0 - margin
    };

    let radius = uniform(&mut rng, config.ball_radius);
    let reach = radius + 30.0;
    let center = [
        uniform(&mut rng, (x0 + reach.min(w / 2.0), x0 + w - reach.min(w / 2.0))),
        uniform(&mut rng, (y0 + reach.min(h / 2.0), y0 + h - reach.min(h / 2.0))),
    ];
    let ball = BallTruth { center, radius };
    let ball_p = Point::new(center[0], center[1]);

    let mut creases: Vec<Crease> = Vec::new();
    if config.kind == SceneKind::Crumpled {
        // the graspable crease sits just outside the ball, roughly tangential
        for _ in 0..1000 {
            let phi = rng.random_range(-PI..PI);
            let d = radius + uniform(&mut rng, (6.0, 12.0));
            let mid = [center[0] + d * phi.cos(), center[1] + d * phi.sin()];
            let dir = phi + PI / 2.0 + uniform(&mut rng, (-0.3, 0.3));
            let half = uniform(&mut rng, config.crease_length) / 2.0;
            let crease = Crease {
                a: [mid[0] - half * dir.cos(), mid[1] - half * dir.sin()],
                b: [mid[0] + half * dir.cos(), mid[1] + half * dir.sin()],
                width: uniform(&mut rng, (2.0, 4.0)),
                elevation_mm: uniform(&mut rng, config.crease_elevation_mm),
            };
            if inside(crease.a) && inside(crease.b) && crease.distance_to(ball_p) > radius + 4.0 {
                creases.push(crease);
                break;
            }
        }
        let n = rng.random_range(config.distractors.0..=config.distractors.1.max(config.distractors.0));
        let near_score = creases
            .first()
            .map(|c| (c.midpoint().distance(&ball_p) - 1.1 * radius).abs())
            .unwrap_or(0.0);
        let mut attempts = 0;
        while creases.len() < n + 1 && attempts < 2000 {
            attempts += 1;
            let half = uniform(&mut rng, config.crease_length) / 2.0;
            let mid = [
                uniform(&mut rng, (x0 + margin, x0 + w - margin)),
                uniform(&mut rng, (y0 + margin, y0 + h - margin)),
            ];
            let dir = rng.random_range(0.0..PI);
            let crease = Crease {
                a: [mid[0] - half * dir.cos(), mid[1] - half * dir.sin()],
                b: [mid[0] + half * dir.cos(), mid[1] + half * dir.sin()],
                width: uniform(&mut rng, (2.0, 4.0)),
                elevation_mm: uniform(&mut rng, config.crease_elevation_mm),
            };
            let score = (crease.midpoint().distance(&ball_p) - 1.1 * radius).abs();
            let ok = inside(crease.a)
                && inside(crease.b)
                && crease.distance_to(ball_p) > radius + 12.0
                && score > near_score + 15.0
                && creases.iter().all(|c| c.distance_to_crease(&crease) > 12.0);
            if ok {
                creases.push(crease);
            }
        }
    }
    let label = label_creases(&ball, &creases);
    let (rgb, depth) = render(config, &ball, &creases);
    Scene {
        rgb,
        depth,
        ball,
        creases,
        label,
    }
}

fn render(config: &SceneConfig, ball: &BallTruth, creases: &[Crease]) -> (RgbImage, DepthImage) {
    let ball_p = Point::new(ball.center[0], ball.center[1]);
    let rgb = RgbImage::from_fn(config.width, config.height, |x, y| {
        let p = Point::new(x as f64, y as f64);
        if creases.iter().any(|c| c.distance_to(p) <= c.width / 2.0) {
            CREASE_COLOR
        } else if p.distance(&ball_p) <= ball.radius {
            BALL_COLOR
        } else {
            BACKGROUND
        }
    });
    let depth = DepthImage::from_fn(config.width, config.height, |x, y| {
        let p = Point::new(x as f64, y as f64);
        let d2 = (p.x - ball_p.x).powi(2) + (p.y - ball_p.y).powi(2);
        let mut elevation = config.ball_height_mm * (-d2 / (2.0 * ball.radius * ball.radius)).exp();
        for c in creases {
            let s = c.distance_to(p) / c.width;
            elevation += c.elevation_mm * (-0.5 * s * s).exp();
        }
        (TABLE_DEPTH_MM - elevation).round().clamp(0.0, u16::MAX as f64) as u16
    });
    (rgb, depth)
}

/// Adds i.i.d. Gaussian noise of `sigma` intensity levels per channel.
pub fn add_noise(image: &RgbImage, sigma: f64, rng: &mut ChaCha8Rng) -> RgbImage {
    if sigma <= 0.0 {
        return image.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    let mut out = image.clone();
    for p in out.pixels_mut() {
        for c in p.iter_mut() {
            *c = (*c as f64 + normal.sample(rng)).round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

/// One Euler step of a perfect velocity-tracking plant, clamped to the
/// joint limits.
pub fn step_plant(arm: &ArmModel, q: &JointVector, qdot: &JointVector, dt: f64) -> JointVector {
    arm.clamp_to_limits(&(q + qdot * dt))
}

#[derive(Debug, Clone)]
pub enum VisionSource {
    Classical,
    Learned(Box<ModelParams>),
    /// Pre-recorded proposals fed straight into the denoiser.
    File(Vec<GraspProposal>),
}

impl VisionSource {
    pub fn name(&self) -> &'static str {
        match self {
            VisionSource::Classical => "classical",
            VisionSource::Learned(_) => "learned",
            VisionSource::File(_) => "file",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub scene: SceneConfig,
    pub classical: ClassicalConfig,
    pub control: ControlConfig,
    pub grasp_z: f64,
    pub frames: usize,
    pub frame_rate: f64,
    pub noise_sigma: f64,
    pub denoise_window: f64,
    pub denoise_threshold: f64,
    pub t_f: f64,
    pub settle: f64,
    pub control_rate: f64,
    pub pos_tol: f64,
    pub ang_tol: f64,
    /// Proposals within this many pixels of the scene label count as good.
    pub good_grasp_px: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            scene: SceneConfig::default(),
            classical: ClassicalConfig::default(),
            control: ControlConfig::default(),
            grasp_z: 0.11,
            frames: 10,
            frame_rate: 1.0,
            noise_sigma: 0.0,
            denoise_window: 10.0,
            denoise_threshold: 0.02,
            t_f: 5.0,
            settle: 2.0,
            control_rate: 100.0,
            pos_tol: 5e-3,
            ang_tol: 2f64.to_radians(),
            good_grasp_px: 10.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidParameter(m.to_string()));
        let positive = [
            (self.frame_rate, "frame_rate"),
            (self.denoise_window, "denoise_window"),
            (self.denoise_threshold, "denoise_threshold"),
            (self.t_f, "t_f"),
            (self.control_rate, "control_rate"),
            (self.pos_tol, "pos_tol"),
            (self.ang_tol, "ang_tol"),
        ];
        for (v, name) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be positive"));
            }
        }
        if !(self.settle >= 0.0) || !(self.noise_sigma >= 0.0) || !self.grasp_z.is_finite() {
            return bad("settle and noise_sigma must be nonnegative, grasp_z finite");
        }
        if self.frames == 0 {
            return bad("frames must be at least 1");
        }
        self.classical
            .validate()
            .map_err(|e| SimError::InvalidParameter(e.to_string()))?;
        self.control
            .validate()
            .map_err(|e| SimError::InvalidParameter(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: f64,
    pub q: [f64; 7],
    pub p: [f64; 3],
    pub pos_err: f64,
    pub ori_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeReport {
    pub seed: u64,
    pub vision: String,
    pub frames_ok: usize,
    pub frames_failed: usize,
    pub proposal: Option<GraspProposal>,
    /// Proposal in camera pixels.
    pub proposal_px: Option<[f64; 2]>,
    pub label_px: Option<[f64; 2]>,
    pub proposal_px_err: Option<f64>,
    pub pos_err: f64,
    /// Angle of the rotation between achieved and commanded grasp orientation.
    pub yaw_err: f64,
    pub pos_tol: f64,
    pub ang_tol: f64,
    pub success: bool,
    pub failure: Option<String>,
    pub steps: usize,
    pub max_tracking_err: f64,
    pub final_q: [f64; 7],
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

impl EpisodeReport {
    fn failed(seed: u64, vision: &VisionSource, config: &SimConfig, reason: String) -> Self {
        Self {
            seed,
            vision: vision.name().to_string(),
            frames_ok: 0,
            frames_failed: 0,
            proposal: None,
            proposal_px: None,
            label_px: None,
            proposal_px_err: None,
            pos_err: f64::INFINITY,
            yaw_err: f64::INFINITY,
            pos_tol: config.pos_tol,
            ang_tol: config.ang_tol,
            success: false,
            failure: Some(reason),
            steps: 0,
            max_tracking_err: 0.0,
            final_q: [0.0; 7],
            trace: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Result<String, SimError> {
        // non-finite errors serialize as null
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn trace_csv(&self) -> String {
        let mut out = String::from("t,q1,q2,q3,q4,q5,q6,q7,px,py,pz,pos_err,ori_err\n");
        for r in &self.trace {
            let _ = write!(out, "{}", r.t);
            for v in r.q.iter().chain(r.p.iter()) {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(out, ",{},{}", r.pos_err, r.ori_err);
        }
        out
    }
}

#[derive(Debug, Error)]
enum VisionFailure {
    #[error(transparent)]
    Classical(#[from] VisionError),
    #[error(transparent)]
    Learned(#[from] LearnError),
}

fn run_vision(
    scene: &Scene,
    source: &VisionSource,
    config: &SimConfig,
    rng: &mut ChaCha8Rng,
) -> (Vec<GraspProposal>, usize, Option<String>) {
    if let VisionSource::File(proposals) = source {
        return (proposals.clone(), 0, None);
    }
    let mut proposals = Vec::new();
    let mut failed = 0;
    let mut last_error = None;
    for k in 0..config.frames {
        let t = k as f64 / config.frame_rate;
        let frame = add_noise(&scene.rgb, config.noise_sigma, rng);
        let result: Result<GraspProposal, VisionFailure> = match source {
            VisionSource::Classical => classical_pipeline(&frame, &config.classical, t).map_err(Into::into),
            VisionSource::Learned(params) => {
                learned_pipeline(params, &frame, &scene.depth, &config.classical.calibration, t)
                    .map(|(p, _)| p)
                    .map_err(Into::into)
            }
            VisionSource::File(_) => unreachable!(),
        };
        match result {
            Ok(p) if p.is_finite() => proposals.push(p),
            Ok(_) => {
                failed += 1;
                last_error = Some("non-finite proposal".to_string());
            }
            Err(e) => {
                failed += 1;
                last_error = Some(e.to_string());
            }
        }
    }
    (proposals, failed, last_error)
}

/// Drives the arm from `q0` along a cubic plan to `target` and returns the
/// final configuration and the per-step trace.
pub fn track(
    arm: &ArmModel,
    q0: &JointVector,
    target: &GraspProposal,
    config: &SimConfig,
) -> Result<(JointVector, Vec<TraceRow>), TrackError> {
    let start: Pose = fk(arm, q0);
    let traj = plan(&start, target, config.grasp_z, 0.0, config.t_f)?;
    let dt = 1.0 / config.control_rate;
    let steps = ((config.t_f + config.settle) * config.control_rate).round() as usize;
    let mut q = *q0;
    let mut prev: Option<ErrorTwist> = None;
    let mut trace = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = k as f64 * dt;
        let sample = traj.sample(t);
        let out = control_step(arm, &q, &sample, &config.control, prev.as_ref(), dt)?;
        let pose = fk(arm, &q);
        trace.push(TraceRow {
            t,
            q: q.into(),
            p: pose.position.into(),
            pos_err: out.error.e_p.norm(),
            ori_err: sample.r_d.angle_to(&pose.rotation),
        });
        if k == steps {
            break;
        }
        q = step_plant(arm, &q, &out.qdot, dt);
        prev = Some(out.error);
    }
    Ok((q, trace))
}

#[derive(Debug, Error)]
pub enum TrackError {
    #[error(transparent)]
    Plan(#[from] TrajectoryError),
    #[error(transparent)]
    Control(#[from] KinematicsError),
}

/// Runs one episode: noisy vision stream, denoising, planning, and the
/// closed control loop from the home configuration.
pub fn run_episode(
    scene: &Scene,
    source: &VisionSource,
    arm: &ArmModel,
    config: &SimConfig,
    seed: u64,
) -> EpisodeReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (proposals, frames_failed, vision_error) = run_vision(scene, source, config, &mut rng);
    let frames_ok = proposals.len();
    let mut buffer = ProposalBuffer::new(config.denoise_window, config.denoise_threshold);
    let mut sorted = proposals;
    sorted.sort_by(|a, b| a.t.total_cmp(&b.t));
    let now = sorted.last().map(|p| p.t).unwrap_or(0.0);
    for p in sorted {
        // sorted by time, so pushes cannot go out of order
        let _ = buffer.push(p);
    }
    let proposal = match buffer.denoise(now) {
        Ok(p) => p,
        Err(e) => {
            let reason = match e {
                DenoiseError::NoProposals => vision_error.unwrap_or_else(|| e.to_string()),
                _ => e.to_string(),
            };
            let mut r = EpisodeReport::failed(seed, source, config, reason);
            r.frames_failed = frames_failed;
            return r;
        }
    };

    let cal = &config.classical.calibration;
    let px = cal.to_pixel(proposal.target());
    let label_px = scene.label.map(|l| l.pixel);
    let proposal_px_err = label_px.map(|l| px.distance(&Point::new(l[0], l[1])));

    let mut report = EpisodeReport::failed(seed, source, config, String::new());
    report.frames_ok = frames_ok;
    report.frames_failed = frames_failed;
    report.proposal = Some(proposal);
    report.proposal_px = Some([px.x, px.y]);
    report.label_px = label_px;
    report.proposal_px_err = proposal_px_err;

    let q0 = JointVector::zeros();
    match track(arm, &q0, &proposal, config) {
        Ok((q, trace)) => {
            let pose = fk(arm, &q);
            let goal = crate::so3::Vec3::new(proposal.x, proposal.y, config.grasp_z);
            report.pos_err = (pose.position - goal).norm();
            report.yaw_err = crate::so3::grasp_orientation(proposal.theta).angle_to(&pose.rotation);
            report.steps = trace.len() - 1;
            report.max_tracking_err = trace.iter().map(|r| r.pos_err).fold(0.0, f64::max);
            report.final_q = q.into();
            report.trace = trace;
            report.success = report.pos_err < config.pos_tol && report.yaw_err < config.ang_tol;
            report.failure = (!report.success).then(|| FAILURE_TRACKING.to_string());
        }
        Err(e) => report.failure = Some(e.to_string()),
    }
    report
}

fn draw_disc(img: &mut RgbImage, c: Point, r: f64, color: [u8; 3]) {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let ri = r.ceil() as isize;
    let (cx, cy) = (c.x.round() as isize, c.y.round() as isize);
    for y in cy - ri..=cy + ri {
        for x in cx - ri..=cx + ri {
            if x >= 0 && y >= 0 && x < w && y < h && ((x - cx).pow(2) + (y - cy).pow(2)) as f64 <= r * r {
                img.set(x as usize, y as usize, color);
            }
        }
    }
}

/// Draws the grasp as a red dot with a cyan line along `theta`.
pub fn draw_grasp_overlay(image: &RgbImage, pixel: Point, theta: f64) -> RgbImage {
    let mut out = image.clone();
    let half = 20.0;
    let steps = (4.0 * half) as usize;
    for i in 0..=steps {
        let s = -half + 2.0 * half * i as f64 / steps as f64;
        let p = Point::new(pixel.x + s * theta.cos(), pixel.y + s * theta.sin());
        draw_disc(&mut out, p, 0.8, [0, 255, 255]);
    }
    draw_disc(&mut out, pixel, 3.0, [255, 0, 0]);
    out
}

/// Writes `report.json`, `trace.csv` and `overlay.ppm` into `dir`.
pub fn write_episode(dir: &Path, scene: &Scene, report: &EpisodeReport) -> Result<(), SimError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), report.to_json()? + "\n")?;
    std::fs::write(dir.join("trace.csv"), report.trace_csv())?;
    let overlay = match (report.proposal_px, report.proposal) {
        (Some(px), Some(p)) => draw_grasp_overlay(&scene.rgb, Point::new(px[0], px[1]), p.theta),
        _ => scene.rgb.clone(),
    };
    std::fs::write(dir.join("overlay.ppm"), encode_ppm(&overlay))?;
    Ok(())
}

/// Per-episode seed derived from the batch seed.
pub fn episode_seed(batch_seed: u64, episode: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(batch_seed);
    rng.set_stream(episode as u64);
    rng.random()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchSummary {
    pub seed: u64,
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub good_grasps: usize,
    pub good_grasp_rate: f64,
    pub good_grasp_px: f64,
    pub pos_tol: f64,
    pub ang_tol: f64,
    pub reports: Vec<EpisodeReport>,
}

impl BatchSummary {
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("episode,success,pos_err,yaw_err,proposal_px_err\n");
        for (i, r) in self.reports.iter().enumerate() {
            let px = r.proposal_px_err.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{i},{},{},{},{px}", r.success, r.pos_err, r.yaw_err);
        }
        out
    }
}

/// Runs `n` episodes on generated scenes. Episodes run in parallel; results
/// are ordered by episode index.
pub fn run_batch(
    n: usize,
    source: &VisionSource,
    arm: &ArmModel,
    config: &SimConfig,
    seed: u64,
) -> (Vec<Scene>, BatchSummary) {
    let results: Vec<(Scene, EpisodeReport)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let s = episode_seed(seed, i);
            let scene = generate_scene(s, &config.scene);
            let report = run_episode(&scene, source, arm, config, s);
            (scene, report)
        })
        .collect();
    let (scenes, reports): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let successes = reports.iter().filter(|r| r.success).count();
    let good_grasps = reports
        .iter()
        .filter(|r| r.proposal_px_err.is_some_and(|e| e < config.good_grasp_px))
        .count();
    let rate = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    let summary = BatchSummary {
        seed,
        episodes: n,
        successes,
        success_rate: rate(successes),
        good_grasps,
        good_grasp_rate: rate(good_grasps),
        good_grasp_px: config.good_grasp_px,
        pos_tol: config.pos_tol,
        ang_tol: config.ang_tol,
        reports,
    };
    (scenes, summary)
}

/// Writes a dataset directory of `n` scenes: `scene_####.ppm`,
/// `scene_####.pgm` and `labels.csv`. Unlabeled scenes are skipped in the
/// label file.
pub fn write_dataset(dir: &Path, n: usize, config: &SceneConfig, seed: u64) -> Result<usize, SimError> {
    std::fs::create_dir_all(dir)?;
    let mut labels = String::from("id,px,py,theta\n");
    let mut labeled = 0;
    for i in 0..n {
        let scene = generate_scene(episode_seed(seed, i), config);
        std::fs::write(dir.join(format!("scene_{i:04}.ppm")), encode_ppm(&scene.rgb))?;
        std::fs::write(dir.join(format!("scene_{i:04}.pgm")), encode_pgm(&scene.depth))?;
        if let Some(l) = scene.label {
            let _ = writeln!(labels, "{i},{},{},{}", l.pixel[0], l.pixel[1], l.theta);
            labeled += 1;
        }
    }
    std::fs::write(dir.join("labels.csv"), labels)?;
    Ok(labeled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::{classical_detect, detect_ball};

    #[test]
    fn scenes_are_deterministic() {
        let cfg = SceneConfig::default();
        assert_eq!(generate_scene(3, &cfg), generate_scene(3, &cfg));
        assert_ne!(generate_scene(3, &cfg).rgb, generate_scene(4, &cfg).rgb);
    }

    #[test]
    fn flat_scene_has_no_viable_contour() {
        let cfg = SceneConfig {
            kind: SceneKind::Flat,
            ..SceneConfig::default()
        };
        let scene = generate_scene(11, &cfg);
        assert!(scene.creases.is_empty() && scene.label.is_none());
        assert!(matches!(
            classical_pipeline(&scene.rgb, &ClassicalConfig::default(), 0.0),
            Err(VisionError::NoViableContour)
        ));
    }

    #[test]
    fn ball_is_recovered() {
        let cfg = ClassicalConfig::default();
        for seed in 0..5 {
            let scene = generate_scene(seed, &SceneConfig::default());
            let ball = detect_ball(&scene.rgb, cfg.color_low, cfg.color_high).unwrap();
            let d = ball.center.distance(&Point::new(scene.ball.center[0], scene.ball.center[1]));
            assert!(d < 1.0, "seed {seed}: {d}");
        }
    }

    #[test]
    fn crumpled_scene_is_labeled_and_detected() {
        let scene = generate_scene(5, &SceneConfig::default());
        let label = scene.label.unwrap();
        let out = classical_detect(&scene.rgb, &ClassicalConfig::default(), 0.0).unwrap();
        let d = out.grasp.point.distance(&Point::new(label.pixel[0], label.pixel[1]));
        assert!(d < 10.0, "{d}");
    }

    #[test]
    fn plant_steps() {
        let arm = ArmModel::sawyer_like();
        let q = JointVector::from_element(0.1);
        assert_eq!(step_plant(&arm, &q, &JointVector::zeros(), 0.01), q);
        let qdot = JointVector::from_fn(|i, _| 0.05 * i as f64 - 0.1);
        let mut x = q;
        for _ in 0..20 {
            x = step_plant(&arm, &x, &qdot, 0.01);
        }
        assert!((x - (q + qdot * 0.2)).amax() < 1e-12);
        let big = JointVector::from_element(1e3);
        let clamped = step_plant(&arm, &q, &big, 1.0);
        for (v, j) in clamped.iter().zip(arm.joints.iter()) {
            assert_eq!(*v, j.upper);
        }
    }

    #[test]
    fn crease_geometry() {
        let c = Crease {
            a: [0.0, 0.0],
            b: [10.0, 0.0],
            width: 2.0,
            elevation_mm: 5.0,
        };
        assert_eq!(c.distance_to(Point::new(5.0, 3.0)), 3.0);
        assert_eq!(c.distance_to(Point::new(13.0, 4.0)), 5.0);
        assert_eq!(c.length(), 10.0);
        let d = Crease {
            a: [5.0, -5.0],
            b: [5.0, 5.0],
            ..c
        };
        assert_eq!(c.distance_to_crease(&d), 0.0);
        assert!((d.angle() - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn episode_seeds_differ() {
        assert_ne!(episode_seed(7, 0), episode_seed(7, 1));
        assert_eq!(episode_seed(7, 3), episode_seed(7, 3));
    }
}
