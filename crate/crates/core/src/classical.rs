//! Heuristic grasp selection from a single RGB frame.
//!
//! Blur, Canny edges, contour polygons, per-polygon mean and regression
//! slope, ball detection by color thresholding, then the polygon whose mean
//! lies closest to `1.1 * radius` from the ball center (among polygons whose
//! perimeter exceeds a threshold) becomes the grasp.

use crate::image::{to_gray, GrayImage, Raster, RgbImage};
use crate::proposal::GraspProposal;
use std::collections::VecDeque;
use std::f64::consts::FRAC_PI_2;
use thiserror::Error;

/// Target distance from the ball center, in ball radii.
pub const BALL_DISTANCE_FACTOR: f64 = 1.1;

pub type EdgeMask = Raster<bool>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VisionError {
    #[error("ball not found")]
    BallNotFound,
    #[error("no viable contour")]
    NoViableContour,
    #[error("degenerate polygon: all points identical")]
    DegeneratePolygon,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Ordered pixel points along a traced boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub points: Vec<Point>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallDetection {
    pub center: Point,
    pub radius: f64,
}

/// Per-axis affine map from pixels to workspace meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraCalibration {
    pub scale: [f64; 2],
    pub shift: [f64; 2],
}

impl CameraCalibration {
    pub fn to_workspace(&self, p: Point) -> [f64; 2] {
        [
            self.scale[0] * p.x + self.shift[0],
            self.scale[1] * p.y + self.shift[1],
        ]
    }

    pub fn to_pixel(&self, target: [f64; 2]) -> Point {
        Point::new(
            (target[0] - self.shift[0]) / self.scale[0],
            (target[1] - self.shift[1]) / self.scale[1],
        )
    }
}

impl Default for CameraCalibration {
    /// Maps the 512x288 synthetic camera frame onto a 0.41 m x 0.23 m patch
    /// of table centered at (0.55, 0).
    fn default() -> Self {
        Self {
            scale: [0.0008, 0.0008],
            shift: [0.55 - 256.0 * 0.0008, -144.0 * 0.0008],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalConfig {
    pub sigma: f64,
    pub canny_low: f64,
    pub canny_high: f64,
    pub perimeter_min: f64,
    pub color_low: [u8; 3],
    pub color_high: [u8; 3],
    pub calibration: CameraCalibration,
}

impl Default for ClassicalConfig {
    fn default() -> Self {
        Self {
            sigma: 1.4,
            canny_low: 0.1,
            canny_high: 0.2,
            perimeter_min: 60.0,
            color_low: [170, 20, 0],
            color_high: [255, 110, 70],
            calibration: CameraCalibration::default(),
        }
    }
}

impl ClassicalConfig {
    pub fn validate(&self) -> Result<(), VisionError> {
        let bad = |m: &str| Err(VisionError::InvalidParameter(m.to_string()));
        if !(self.sigma > 0.0) {
            return bad("sigma must be positive");
        }
        if !(0.0 < self.canny_low && self.canny_low < self.canny_high && self.canny_high <= 1.0) {
            return bad("canny thresholds must satisfy 0 < low < high <= 1");
        }
        if !(self.perimeter_min > 0.0) {
            return bad("perimeter_min must be positive");
        }
        if (0..3).any(|c| self.color_low[c] > self.color_high[c]) {
            return bad("color_low must not exceed color_high");
        }
        if self.calibration.scale.iter().any(|&s| s == 0.0 || !s.is_finite()) {
            return bad("calibration scale must be finite and nonzero");
        }
        Ok(())
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur, radius `ceil(3 sigma)`, clamp-to-border.
pub fn gaussian_blur(image: &GrayImage, sigma: f64) -> GrayImage {
    assert!(sigma > 0.0, "sigma must be positive");
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let horizontal: GrayImage = Raster::from_fn(image.width(), image.height(), |x, y| {
        k.iter()
            .enumerate()
            .map(|(i, w)| w * image.get_clamped(x as isize + i as isize - r, y as isize))
            .sum::<f64>()
    });
    Raster::from_fn(image.width(), image.height(), |x, y| {
        k.iter()
            .enumerate()
            .map(|(i, w)| w * horizontal.get_clamped(x as isize, y as isize + i as isize - r))
            .sum::<f64>()
    })
}

/// Sobel gradients `(gx, gy)`, each divided by 4 so that a unit step has
/// magnitude 1. Borders are clamped.
pub fn sobel(image: &GrayImage) -> (GrayImage, GrayImage) {
    let at = |x: usize, y: usize, dx: isize, dy: isize| {
        image.get_clamped(x as isize + dx, y as isize + dy)
    };
    let gx = Raster::from_fn(image.width(), image.height(), |x, y| {
        (at(x, y, 1, -1) + 2.0 * at(x, y, 1, 0) + at(x, y, 1, 1)
            - at(x, y, -1, -1)
            - 2.0 * at(x, y, -1, 0)
            - at(x, y, -1, 1))
            / 4.0
    });
    let gy = Raster::from_fn(image.width(), image.height(), |x, y| {
        (at(x, y, -1, 1) + 2.0 * at(x, y, 0, 1) + at(x, y, 1, 1)
            - at(x, y, -1, -1)
            - 2.0 * at(x, y, 0, -1)
            - at(x, y, 1, -1))
            / 4.0
    });
    (gx, gy)
}

pub fn sobel_magnitude(image: &GrayImage) -> GrayImage {
    let (gx, gy) = sobel(image);
    Raster::from_fn(image.width(), image.height(), |x, y| {
        gx.get(x, y).hypot(gy.get(x, y))
    })
}

const NEIGHBORS8: [(isize, isize); 8] = [
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
];

/// Canny edge detector: Sobel gradients, non-maximum suppression with the
/// gradient direction quantized to 4 orientations, then hysteresis (strong
/// pixels have magnitude >= `high`; weak pixels >= `low` survive only when
/// 8-connected to a strong pixel through other surviving pixels).
pub fn canny(image: &GrayImage, low: f64, high: f64) -> EdgeMask {
    assert!(0.0 < low && low < high && high <= 1.0, "need 0 < low < high <= 1");
    let (w, h) = (image.width(), image.height());
    let (gx, gy) = sobel(image);
    let mag = Raster::from_fn(w, h, |x, y| gx.get(x, y).hypot(gy.get(x, y)));

    let thinned = Raster::from_fn(w, h, |x, y| {
        let m = mag.get(x, y);
        if m < low {
            return 0.0;
        }
        let mut angle = gy.get(x, y).atan2(gx.get(x, y)).to_degrees();
        if angle < 0.0 {
            angle += 180.0;
        }
        // (dx, dy) points along the quantized gradient direction
        let (dx, dy) = if !(22.5..157.5).contains(&angle) {
            (1, 0)
        } else if angle < 67.5 {
            (1, 1)
        } else if angle < 112.5 {
            (0, 1)
        } else {
            (-1, 1)
        };
        let (xi, yi) = (x as isize, y as isize);
        let behind = mag.get_clamped(xi - dx, yi - dy);
        let ahead = mag.get_clamped(xi + dx, yi + dy);
        // asymmetric comparison keeps exactly one pixel of a symmetric ridge
        if m > behind && m >= ahead {
            m
        } else {
            0.0
        }
    });

    let mut out = Raster::new(w, h, false);
    let mut stack = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if thinned.get(x, y) >= high && !out.get(x, y) {
                out.set(x, y, true);
                stack.push((x, y));
                while let Some((cx, cy)) = stack.pop() {
                    for (dx, dy) in NEIGHBORS8 {
                        let (nx, ny) = (cx as isize + dx, cy as isize + dy);
                        if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                            continue;
                        }
                        let (nx, ny) = (nx as usize, ny as usize);
                        if !out.get(nx, ny) && thinned.get(nx, ny) >= low {
                            out.set(nx, ny, true);
                            stack.push((nx, ny));
                        }
                    }
                }
            }
        }
    }
    out
}

/// Centroid and equivalent-area radius of the pixels whose color lies in
/// `[low, high]` componentwise.
pub fn detect_ball(
    image: &RgbImage,
    low: [u8; 3],
    high: [u8; 3],
) -> Result<BallDetection, VisionError> {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for y in 0..image.height() {
        for x in 0..image.width() {
            let p = image.get(x, y);
            if (0..3).all(|c| low[c] <= p[c] && p[c] <= high[c]) {
                sx += x as f64;
                sy += y as f64;
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(VisionError::BallNotFound);
    }
    Ok(BallDetection {
        center: Point::new(sx / n as f64, sy / n as f64),
        radius: (n as f64 / std::f64::consts::PI).sqrt(),
    })
}

/// Traces the outer boundary of every 8-connected component of edge pixels
/// with Moore-neighbor tracing. Components with fewer than 3 pixels are
/// dropped. Output order follows the raster order of each component's first
/// pixel.
pub fn find_contours(mask: &EdgeMask) -> Vec<Polygon> {
    let (w, h) = (mask.width(), mask.height());
    let mut label = Raster::new(w, h, 0u32);
    let mut polygons = Vec::new();
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) || label.get(x, y) != 0 {
                continue;
            }
            next += 1;
            label.set(x, y, next);
            queue.push_back((x, y));
            let mut size = 0usize;
            while let Some((cx, cy)) = queue.pop_front() {
                size += 1;
                for (dx, dy) in NEIGHBORS8 {
                    let (nx, ny) = (cx as isize + dx, cy as isize + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let (nx, ny) = (nx as usize, ny as usize);
                    if mask.get(nx, ny) && label.get(nx, ny) == 0 {
                        label.set(nx, ny, next);
                        queue.push_back((nx, ny));
                    }
                }
            }
            if size >= 3 {
                polygons.push(trace_boundary(&label, next, (x, y), size));
            }
        }
    }
    polygons
}

fn trace_boundary(label: &Raster<u32>, id: u32, start: (usize, usize), size: usize) -> Polygon {
    let (w, h) = (label.width() as isize, label.height() as isize);
    let inside = |x: isize, y: isize| x >= 0 && y >= 0 && x < w && y < h && label.get(x as usize, y as usize) == id;
    let dir_of = |dx: isize, dy: isize| {
        NEIGHBORS8
            .iter()
            .position(|&d| d == (dx, dy))
            .expect("backtrack is an 8-neighbor")
    };

    let start = (start.0 as isize, start.1 as isize);
    let mut points = vec![Point::new(start.0 as f64, start.1 as f64)];
    let mut p = start;
    // the raster-order first pixel never has a component pixel to its west
    let mut back_dir = 0usize;
    let mut first_move: Option<(isize, isize)> = None;
    let limit = 4 * size + 8;
    for _ in 0..limit {
        let mut found = None;
        for i in 1..=8 {
            let d = (back_dir + i) % 8;
            let c = (p.0 + NEIGHBORS8[d].0, p.1 + NEIGHBORS8[d].1);
            if inside(c.0, c.1) {
                let prev = NEIGHBORS8[(back_dir + i - 1) % 8];
                let b = (p.0 + prev.0, p.1 + prev.1);
                found = Some((c, dir_of(b.0 - c.0, b.1 - c.1)));
                break;
            }
        }
        let Some((c, new_back)) = found else {
            break;
        };
        if p == start {
            match first_move {
                None => first_move = Some(c),
                Some(m) if m == c => break,
                Some(_) => {}
            }
        }
        points.push(Point::new(c.0 as f64, c.1 as f64));
        p = c;
        back_dir = new_back;
    }
    // the walk ends on the start pixel; the polygon closes implicitly
    if points.len() > 1 && points.last() == points.first() {
        points.pop();
    }
    Polygon { points }
}

pub fn polygon_mean(polygon: &Polygon) -> Point {
    let n = polygon.points.len() as f64;
    let (sx, sy) = polygon
        .points
        .iter()
        .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
    Point::new(sx / n, sy / n)
}

/// Grasp angle from the least-squares slope of y on x: `atan(slope)`.
/// Features with x-variance below 1e-9 are vertical and map to `pi/2`.
pub fn polygon_theta(polygon: &Polygon) -> Result<f64, VisionError> {
    let pts = &polygon.points;
    if pts.is_empty() || pts.iter().all(|p| p == &pts[0]) {
        return Err(VisionError::DegeneratePolygon);
    }
    let mean = polygon_mean(polygon);
    let n = pts.len() as f64;
    let (sxx, sxy) = pts.iter().fold((0.0, 0.0), |(sxx, sxy), p| {
        let dx = p.x - mean.x;
        (sxx + dx * dx, sxy + dx * (p.y - mean.y))
    });
    if sxx / n < 1e-9 {
        return Ok(FRAC_PI_2);
    }
    Ok((sxy / sxx).atan())
}

/// Closed-loop perimeter.
pub fn perimeter(polygon: &Polygon) -> f64 {
    let pts = &polygon.points;
    if pts.len() < 2 {
        return 0.0;
    }
    let open: f64 = pts.windows(2).map(|w| w[0].distance(&w[1])).sum();
    open + pts[pts.len() - 1].distance(&pts[0])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspPixel {
    pub point: Point,
    pub theta: f64,
    /// Index of the chosen polygon in the input list.
    pub index: usize,
}

/// Among polygons with perimeter above `perimeter_min`, picks the one whose
/// mean is closest to `1.1 * radius` from the ball center. Ties go to the
/// larger perimeter, then to the earlier polygon.
pub fn select_grasp(
    polygons: &[Polygon],
    ball: &BallDetection,
    perimeter_min: f64,
) -> Result<GraspPixel, VisionError> {
    let target = BALL_DISTANCE_FACTOR * ball.radius;
    let mut best: Option<(f64, f64, usize, Point)> = None;
    for (i, poly) in polygons.iter().enumerate() {
        let per = perimeter(poly);
        if per <= perimeter_min {
            continue;
        }
        let mean = polygon_mean(poly);
        let score = (mean.distance(&ball.center) - target).abs();
        let better = match best {
            None => true,
            Some((s, p, _, _)) => score < s || (score == s && per > p),
        };
        if better {
            best = Some((score, per, i, mean));
        }
    }
    let (_, _, index, point) = best.ok_or(VisionError::NoViableContour)?;
    Ok(GraspPixel {
        point,
        theta: polygon_theta(&polygons[index])?,
        index,
    })
}

pub fn pixel_to_workspace(
    p: Point,
    theta: f64,
    cal: &CameraCalibration,
    timestamp: f64,
) -> GraspProposal {
    let [x, y] = cal.to_workspace(p);
    GraspProposal::new(x, y, theta, timestamp)
}

/// Everything the classical pipeline computed for one frame.
#[derive(Debug, Clone)]
pub struct ClassicalOutput {
    pub ball: BallDetection,
    pub polygons: Vec<Polygon>,
    pub grasp: GraspPixel,
    pub proposal: GraspProposal,
}

pub fn classical_detect(
    rgb: &RgbImage,
    config: &ClassicalConfig,
    timestamp: f64,
) -> Result<ClassicalOutput, VisionError> {
    config.validate()?;
    let blurred = gaussian_blur(&to_gray(rgb), config.sigma);
    let edges = canny(&blurred, config.canny_low, config.canny_high);
    let ball = detect_ball(rgb, config.color_low, config.color_high)?;
    let polygons = find_contours(&edges);
    let grasp = select_grasp(&polygons, &ball, config.perimeter_min)?;
    let proposal = pixel_to_workspace(grasp.point, grasp.theta, &config.calibration, timestamp);
    Ok(ClassicalOutput {
        ball,
        polygons,
        grasp,
        proposal,
    })
}

pub fn classical_pipeline(
    rgb: &RgbImage,
    config: &ClassicalConfig,
    timestamp: f64,
) -> Result<GraspProposal, VisionError> {
    classical_detect(rgb, config, timestamp).map(|o| o.proposal)
}
