//! Detection input: CSV parsing, per-frame filtering and bird's-eye
//! rectification through a planar homography.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A planar point `[x, y]`.
pub type Point = [f64; 2];

/// Column order of `detections.csv`.
pub const DETECTION_HEADER: [&str; 6] = ["frame", "cx", "cy", "w", "h", "score"];

/// One bounding box in one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame: u32,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
}

impl Detection {
    pub fn center(&self) -> Point {
        [self.cx, self.cy]
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let all_finite = [self.cx, self.cy, self.w, self.h, self.score]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err("non-finite field".into());
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err("non-positive box extent".into());
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err("score outside [0, 1]".into());
        }
        Ok(())
    }

    /// Intersection over union of two axis-aligned boxes.
    pub fn iou(&self, other: &Detection) -> f64 {
        let (ax0, ax1) = (self.cx - self.w / 2.0, self.cx + self.w / 2.0);
        let (ay0, ay1) = (self.cy - self.h / 2.0, self.cy + self.h / 2.0);
        let (bx0, bx1) = (other.cx - other.w / 2.0, other.cx + other.w / 2.0);
        let (by0, by1) = (other.cy - other.h / 2.0, other.cy + other.h / 2.0);
        let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
        let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
        let inter = iw * ih;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// Detections keyed by frame index, each frame in file order.
pub type FrameDetections = BTreeMap<u32, Vec<Detection>>;

/// A row that could not be parsed and was skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct RowDiagnostic {
    /// 1-based line number in the source, header is line 1.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedDetections {
    /// Sorted by frame, then by file order.
    pub detections: Vec<Detection>,
    pub diagnostics: Vec<RowDiagnostic>,
}

impl ParsedDetections {
    pub fn by_frame(&self) -> FrameDetections {
        group_by_frame(&self.detections)
    }
}

pub fn group_by_frame(dets: &[Detection]) -> FrameDetections {
    let mut frames = FrameDetections::new();
    for d in dets {
        frames.entry(d.frame).or_default().push(*d);
    }
    frames
}

/// Parses `frame,cx,cy,w,h,score` rows. Malformed rows are skipped and
/// reported; a missing or wrong header is fatal.
pub fn parse_detections<R: Read>(source: R) -> Result<ParsedDetections> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);

    let headers = reader.headers()?.clone();
    let found: Vec<&str> = headers.iter().collect();
    if found != DETECTION_HEADER {
        return Err(Error::InvalidInput(format!(
            "detection header must be `{}`, found `{}`",
            DETECTION_HEADER.join(","),
            found.join(",")
        )));
    }

    let mut out = ParsedDetections::default();
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                out.diagnostics.push(RowDiagnostic {
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let parsed = record
            .deserialize::<Detection>(Some(&headers))
            .map_err(|e| e.to_string())
            .and_then(|d| d.validate().map(|_| d));
        match parsed {
            Ok(d) => out.detections.push(d),
            Err(reason) => out.diagnostics.push(RowDiagnostic { line, reason }),
        }
    }
    // stable sort keeps file order within a frame
    out.detections.sort_by_key(|d| d.frame);
    Ok(out)
}

pub fn write_detections<W: std::io::Write>(sink: W, dets: &[Detection]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    for d in dets {
        w.serialize(d)?;
    }
    if dets.is_empty() {
        w.write_record(DETECTION_HEADER)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub score_min: f64,
    pub max_area_fraction: f64,
    /// IoU above which the lower-scoring box of a pair is dropped.
    pub overlap_max: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            score_min: 0.22,
            max_area_fraction: 0.25,
            overlap_max: 0.5,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.score_min > 0.0 && self.score_min < 1.0) {
            return Err(Error::Config("score_min must lie in (0, 1)".into()));
        }
        if !(self.max_area_fraction > 0.0 && self.max_area_fraction <= 1.0) {
            return Err(Error::Config("max_area_fraction must lie in (0, 1]".into()));
        }
        if !(self.overlap_max > 0.0 && self.overlap_max < 1.0) {
            return Err(Error::Config("overlap_max must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// The rule responsible for dropping a detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RemovalReason {
    LowScore,
    TooLarge,
    OutsideRoi,
    Overlap,
}

#[derive(Debug, Clone, Default)]
pub struct FilterOutcome {
    pub kept: FrameDetections,
    pub removed: Vec<(Detection, RemovalReason)>,
}

/// Applies score, size, ROI and duplicate-suppression rules frame by frame.
///
/// Rules are checked in that order and a removed detection is attributed to
/// the first rule it fails. Duplicate suppression visits boxes by descending
/// score (earlier index first on ties) and drops any box whose IoU with an
/// already kept box exceeds `overlap_max`.
pub fn filter_detections(
    frames: &FrameDetections,
    cfg: &FilterConfig,
    roi: Option<&RoiPolygon>,
    screen_area: f64,
) -> FilterOutcome {
    let mut out = FilterOutcome::default();
    for (&frame, dets) in frames {
        let kept = filter_frame(dets, cfg, roi, screen_area, &mut out.removed);
        if !kept.is_empty() {
            out.kept.insert(frame, kept);
        }
    }
    out
}

fn filter_frame(
    dets: &[Detection],
    cfg: &FilterConfig,
    roi: Option<&RoiPolygon>,
    screen_area: f64,
    removed: &mut Vec<(Detection, RemovalReason)>,
) -> Vec<Detection> {
    let mut candidates = Vec::with_capacity(dets.len());
    for (idx, d) in dets.iter().enumerate() {
        let reason = if d.score < cfg.score_min {
            Some(RemovalReason::LowScore)
        } else if d.area() > cfg.max_area_fraction * screen_area {
            Some(RemovalReason::TooLarge)
        } else if roi.is_some_and(|r| !r.contains(d.center())) {
            Some(RemovalReason::OutsideRoi)
        } else {
            None
        };
        match reason {
            Some(r) => removed.push((*d, r)),
            None => candidates.push(idx),
        }
    }

    let mut order = candidates.clone();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    let mut keep = vec![false; dets.len()];
    let mut kept_idx: Vec<usize> = Vec::new();
    for i in order {
        if kept_idx.iter().any(|&k| dets[k].iou(&dets[i]) > cfg.overlap_max) {
            removed.push((dets[i], RemovalReason::Overlap));
        } else {
            keep[i] = true;
            kept_idx.push(i);
        }
    }
    candidates.into_iter().filter(|&i| keep[i]).map(|i| dets[i]).collect()
}

/// Simple polygon used as a region of interest.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiPolygon {
    vertices: Vec<Point>,
}

const GEOM_EPS: f64 = 1e-12;

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn on_segment(p: Point, a: Point, b: Point) -> bool {
    let scale = 1.0 + a[0].abs().max(a[1].abs()).max(b[0].abs().max(b[1].abs()));
    cross(a, b, p).abs() <= 1e-9 * scale * scale
        && p[0] >= a[0].min(b[0]) - 1e-12
        && p[0] <= a[0].max(b[0]) + 1e-12
        && p[1] >= a[1].min(b[1]) - 1e-12
        && p[1] <= a[1].max(b[1]) + 1e-12
}

fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    on_segment(p1, q1, q2) || on_segment(p2, q1, q2) || on_segment(q1, p1, p2) || on_segment(q2, p1, p2)
}

impl RoiPolygon {
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(Error::Config("ROI needs at least 3 vertices".into()));
        }
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("ROI vertices must be finite".into()));
        }
        let poly = Self { vertices };
        if poly.signed_area().abs() <= GEOM_EPS {
            return Err(Error::Config("ROI has zero area".into()));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                let (a1, a2) = (poly.vertices[i], poly.vertices[(i + 1) % n]);
                let (b1, b2) = (poly.vertices[j], poly.vertices[(j + 1) % n]);
                if segments_intersect(a1, a2, b1, b2) {
                    return Err(Error::Config("ROI polygon self-intersects".into()));
                }
            }
        }
        Ok(poly)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % n];
                a[0] * b[1] - b[0] * a[1]
            })
            .sum::<f64>()
            / 2.0
    }

    pub fn centroid(&self) -> Point {
        let n = self.vertices.len();
        let a = self.signed_area();
        let (mut cx, mut cy) = (0.0, 0.0);
        for i in 0..n {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % n];
            let c = p[0] * q[1] - q[0] * p[1];
            cx += (p[0] + q[0]) * c;
            cy += (p[1] + q[1]) * c;
        }
        [cx / (6.0 * a), cy / (6.0 * a)]
    }

    /// Ray casting; points on the boundary count as inside.
    pub fn contains(&self, p: Point) -> bool {
        let n = self.vertices.len();
        let mut inside = false;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            if on_segment(p, a, b) {
                return true;
            }
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x_cross = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
                if p[0] < x_cross {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Maps every vertex through `h`. Lines map to lines, so the image is
    /// again a polygon as long as it stays on one side of the horizon.
    pub fn transformed(&self, h: &Homography) -> Result<Self> {
        let verts = self.vertices.iter().map(|&v| h.apply(v)).collect::<Result<Vec<_>>>()?;
        Self::new(verts)
    }
}

/// 3x3 projective transform normalized so `m[2][2] == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homography {
    m: [[f64; 3]; 3],
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

impl Homography {
    pub fn identity() -> Self {
        Self {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    /// Wraps a raw matrix, rejecting singular ones and rescaling so the
    /// bottom-right entry is one.
    pub fn from_matrix(m: [[f64; 3]; 3]) -> Result<Self> {
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateHomography);
        }
        let s = m[2][2];
        if s.abs() <= GEOM_EPS {
            return Err(Error::DegenerateHomography);
        }
        let mut n = m;
        n.iter_mut().flatten().for_each(|v| *v /= s);
        if det3(&n).abs() <= GEOM_EPS {
            return Err(Error::DegenerateHomography);
        }
        Ok(Self { m: n })
    }

    pub fn matrix(&self) -> &[[f64; 3]; 3] {
        &self.m
    }

    pub fn determinant(&self) -> f64 {
        det3(&self.m)
    }

    /// Solves the 8-unknown direct linear system from four exact
    /// correspondences.
    pub fn from_correspondences(src: &[Point; 4], dst: &[Point; 4]) -> Result<Self> {
        if has_collinear_triple(src) || has_collinear_triple(dst) {
            return Err(Error::DegenerateHomography);
        }
        let mut a = [[0.0f64; 9]; 8];
        for i in 0..4 {
            let [x, y] = src[i];
            let [u, v] = dst[i];
            a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -x * u, -y * u, u];
            a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -x * v, -y * v, v];
        }
        let h = solve_augmented(a).ok_or(Error::DegenerateHomography)?;
        Self::from_matrix([[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], 1.0]])
    }

    pub fn apply(&self, p: Point) -> Result<Point> {
        let m = &self.m;
        let w = m[2][0] * p[0] + m[2][1] * p[1] + m[2][2];
        if w.abs() <= GEOM_EPS {
            return Err(Error::PointAtInfinity);
        }
        Ok([
            (m[0][0] * p[0] + m[0][1] * p[1] + m[0][2]) / w,
            (m[1][0] * p[0] + m[1][1] * p[1] + m[1][2]) / w,
        ])
    }

    pub fn inverse(&self) -> Result<Self> {
        let m = &self.m;
        let det = det3(m);
        if det.abs() <= GEOM_EPS {
            return Err(Error::DegenerateHomography);
        }
        let adj = [
            [
                m[1][1] * m[2][2] - m[1][2] * m[2][1],
                m[0][2] * m[2][1] - m[0][1] * m[2][2],
                m[0][1] * m[1][2] - m[0][2] * m[1][1],
            ],
            [
                m[1][2] * m[2][0] - m[1][0] * m[2][2],
                m[0][0] * m[2][2] - m[0][2] * m[2][0],
                m[0][2] * m[1][0] - m[0][0] * m[1][2],
            ],
            [
                m[1][0] * m[2][1] - m[1][1] * m[2][0],
                m[0][1] * m[2][0] - m[0][0] * m[2][1],
                m[0][0] * m[1][1] - m[0][1] * m[1][0],
            ],
        ];
        let mut inv = adj;
        inv.iter_mut().flatten().for_each(|v| *v /= det);
        Self::from_matrix(inv)
    }
}

/// Convenience alias matching the pipeline vocabulary.
pub fn compute_homography(src: &[Point; 4], dst: &[Point; 4]) -> Result<Homography> {
    Homography::from_correspondences(src, dst)
}

pub fn apply_homography(h: &Homography, p: Point) -> Result<Point> {
    h.apply(p)
}

fn has_collinear_triple(pts: &[Point; 4]) -> bool {
    let scale = pts.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
    let tol = 1e-10 * scale * scale;
    for i in 0..4 {
        for j in (i + 1)..4 {
            for k in (j + 1)..4 {
                if cross(pts[i], pts[j], pts[k]).abs() <= tol {
                    return true;
                }
            }
        }
    }
    false
}

/// Gaussian elimination with partial pivoting on an 8x8 system stored as
/// an augmented 8x9 matrix.
fn solve_augmented(mut a: [[f64; 9]; 8]) -> Option<[f64; 8]> {
    const N: usize = 8;
    let scale = a
        .iter()
        .flat_map(|r| r[..N].iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1.0);
    for col in 0..N {
        let pivot = (col..N).max_by(|&r1, &r2| a[r1][col].abs().total_cmp(&a[r2][col].abs()))?;
        if a[pivot][col].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(col, pivot);
        for row in (col + 1)..N {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..=N {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    let mut x = [0.0; N];
    for row in (0..N).rev() {
        let mut s = a[row][N];
        for k in (row + 1)..N {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

/// Maps each detection center through `h` and replaces the box extents
/// with the axis-aligned extents of the mapped box corners.
pub fn rectify_detections(frames: &FrameDetections, h: &Homography) -> Result<FrameDetections> {
    let mut out = FrameDetections::new();
    for (&frame, dets) in frames {
        let mut mapped = Vec::with_capacity(dets.len());
        for d in dets {
            let [cx, cy] = h.apply(d.center())?;
            let (hw, hh) = (d.w / 2.0, d.h / 2.0);
            let corners = [
                [d.cx - hw, d.cy - hh],
                [d.cx + hw, d.cy - hh],
                [d.cx + hw, d.cy + hh],
                [d.cx - hw, d.cy + hh],
            ];
            let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
            for c in corners {
                let [x, y] = h.apply(c)?;
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
            mapped.push(Detection {
                frame,
                cx,
                cy,
                w: (x1 - x0).max(f64::MIN_POSITIVE),
                h: (y1 - y0).max(f64::MIN_POSITIVE),
                score: d.score,
            });
        }
        out.insert(frame, mapped);
    }
    Ok(out)
}
