//! Detection-to-track association with motion-predicted nearest-neighbor
//! matching, plus post-run kinematics.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Detection, FrameDetections, Point};

pub type TrackId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    /// Maximum predicted-position distance (meters) for a match.
    pub ed_threshold: f64,
    /// Frames a track may stay unmatched before it is closed.
    pub inactive_max: u32,
    /// Seconds per frame.
    pub dt: f64,
    pub smooth_window: usize,
    /// When false, tracks are matched from their last position only.
    pub use_prediction: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            ed_threshold: 2.0,
            inactive_max: 5,
            dt: 0.1,
            smooth_window: 5,
            use_prediction: true,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ed_threshold > 0.0) {
            return Err(Error::Config("ed_threshold must be > 0".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Config("dt must be > 0".into()));
        }
        if self.smooth_window == 0 {
            return Err(Error::Config("smooth_window must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackState {
    Active,
    Inactive,
    Closed,
}

/// A track under construction: raw matched positions and an online
/// velocity estimate used for prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct LiveTrack {
    pub id: TrackId,
    pub frames: Vec<u32>,
    pub positions: Vec<Point>,
    /// m/s, from the last two matched positions.
    pub velocity: Point,
    pub state: TrackState,
    pub inactive_since: Option<u32>,
}

impl LiveTrack {
    fn last_frame(&self) -> u32 {
        *self.frames.last().expect("tracks are created with one sample")
    }

    fn last_position(&self) -> Point {
        *self.positions.last().expect("tracks are created with one sample")
    }

    /// Position expected at `frame`, extrapolating at constant velocity.
    pub fn predicted(&self, frame: u32, dt: f64) -> Point {
        let p = self.last_position();
        let steps = frame.saturating_sub(self.last_frame()) as f64;
        [
            p[0] + self.velocity[0] * dt * steps,
            p[1] + self.velocity[1] * dt * steps,
        ]
    }
}

/// Outcome for one detection in one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assignment {
    pub det_index: usize,
    pub track_id: TrackId,
    pub spawned: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameReport {
    pub frame: u32,
    /// One entry per input detection, in input order.
    pub assignments: Vec<Assignment>,
    pub deactivated: Vec<TrackId>,
    pub reactivated: Vec<TrackId>,
    pub closed: Vec<TrackId>,
}

/// Single-owner tracker; feed frames in increasing order.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    tracks: Vec<LiveTrack>,
    next_id: TrackId,
    last_frame: Option<u32>,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Self {
        Self {
            cfg,
            tracks: Vec::new(),
            next_id: 0,
            last_frame: None,
        }
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn tracks(&self) -> &[LiveTrack] {
        &self.tracks
    }

    /// Matches `dets` (all from `frame`) against open tracks and updates
    /// lifecycle state.
    ///
    /// Candidate (track, detection) pairs closer than the threshold are
    /// taken greedily by ascending distance, so each track and each
    /// detection is claimed at most once.
    pub fn match_and_update(&mut self, frame: u32, dets: &[Detection]) -> FrameReport {
        if let Some(prev) = self.last_frame {
            assert!(frame > prev, "frames must be strictly increasing");
        }
        self.last_frame = Some(frame);
        let cfg = self.cfg;
        let mut report = FrameReport {
            frame,
            ..Default::default()
        };

        for t in self.tracks.iter_mut() {
            if t.state == TrackState::Inactive {
                let missed = frame - t.last_frame() - 1;
                if missed > cfg.inactive_max {
                    t.state = TrackState::Closed;
                    report.closed.push(t.id);
                }
            }
        }

        let open: Vec<usize> = (0..self.tracks.len())
            .filter(|&i| self.tracks[i].state != TrackState::Closed)
            .collect();
        let mut pairs = Vec::new();
        for &ti in &open {
            let t = &self.tracks[ti];
            let anchor = if cfg.use_prediction {
                t.predicted(frame, cfg.dt)
            } else {
                t.last_position()
            };
            for (di, d) in dets.iter().enumerate() {
                let dist = (anchor[0] - d.cx).hypot(anchor[1] - d.cy);
                if dist < cfg.ed_threshold {
                    pairs.push((dist, ti, di));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

        let mut track_taken = vec![false; self.tracks.len()];
        let mut det_owner: Vec<Option<usize>> = vec![None; dets.len()];
        for (_, ti, di) in pairs {
            if track_taken[ti] || det_owner[di].is_some() {
                continue;
            }
            track_taken[ti] = true;
            det_owner[di] = Some(ti);
        }

        for (di, d) in dets.iter().enumerate() {
            match det_owner[di] {
                Some(ti) => {
                    let t = &mut self.tracks[ti];
                    let p_last = t.last_position();
                    let steps = (frame - t.last_frame()) as f64;
                    t.velocity = [
                        (d.cx - p_last[0]) / (steps * cfg.dt),
                        (d.cy - p_last[1]) / (steps * cfg.dt),
                    ];
                    t.frames.push(frame);
                    t.positions.push(d.center());
                    if t.state == TrackState::Inactive {
                        report.reactivated.push(t.id);
                    }
                    t.state = TrackState::Active;
                    t.inactive_since = None;
                    report.assignments.push(Assignment {
                        det_index: di,
                        track_id: t.id,
                        spawned: false,
                    });
                }
                None => {
                    let id = self.next_id;
                    self.next_id += 1;
                    self.tracks.push(LiveTrack {
                        id,
                        frames: vec![frame],
                        positions: vec![d.center()],
                        velocity: [0.0, 0.0],
                        state: TrackState::Active,
                        inactive_since: None,
                    });
                    report.assignments.push(Assignment {
                        det_index: di,
                        track_id: id,
                        spawned: true,
                    });
                }
            }
        }

        for &ti in &open {
            let t = &mut self.tracks[ti];
            if !track_taken[ti] && t.state == TrackState::Active {
                t.state = TrackState::Inactive;
                t.inactive_since = Some(frame);
                report.deactivated.push(t.id);
            }
        }
        report
    }

    /// Consumes the tracker and produces smoothed kinematic tracks.
    pub fn finish(self) -> Vec<Track> {
        finalize_tracks(&self.tracks, &self.cfg)
    }
}

/// Runs the tracker over every frame between the first and last frame
/// present, so frames without detections still age tracks.
pub fn track_frames(frames: &FrameDetections, cfg: &TrackerConfig) -> (Vec<Track>, Vec<FrameReport>) {
    let mut tracker = Tracker::new(*cfg);
    let mut reports = Vec::new();
    if let (Some((&first, _)), Some((&last, _))) = (frames.first_key_value(), frames.last_key_value()) {
        for f in first..=last {
            let dets = frames.get(&f).map(Vec::as_slice).unwrap_or(&[]);
            reports.push(tracker.match_and_update(f, dets));
        }
    }
    (tracker.finish(), reports)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackSample {
    pub frame: u32,
    pub position: Point,
    pub velocity: Point,
    pub acceleration: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: TrackId,
    pub samples: Vec<TrackSample>,
}

impl Track {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_at(&self, frame: u32) -> Option<&TrackSample> {
        self.samples
            .binary_search_by_key(&frame, |s| s.frame)
            .ok()
            .map(|i| &self.samples[i])
    }
}

/// Centered moving average; the window shrinks symmetrically near the ends
/// so straight-line motion passes through unchanged.
fn smooth(points: &[Point], window: usize) -> Vec<Point> {
    let half = window / 2;
    let n = points.len();
    (0..n)
        .map(|i| {
            let h = half.min(i).min(n - 1 - i);
            let span = &points[i - h..=i + h];
            let k = span.len() as f64;
            let sx: f64 = span.iter().map(|p| p[0]).sum();
            let sy: f64 = span.iter().map(|p| p[1]).sum();
            [sx / k, sy / k]
        })
        .collect()
}

/// Central differences over actual frame gaps, one-sided at the ends.
fn differentiate(frames: &[u32], values: &[Point], dt: f64) -> Vec<Point> {
    let n = values.len();
    (0..n)
        .map(|i| {
            let (a, b) = if i == 0 {
                (0, 1)
            } else if i == n - 1 {
                (n - 2, n - 1)
            } else {
                (i - 1, i + 1)
            };
            let span = (frames[b] - frames[a]) as f64 * dt;
            [
                (values[b][0] - values[a][0]) / span,
                (values[b][1] - values[a][1]) / span,
            ]
        })
        .collect()
}

/// Smooths positions and derives velocity and acceleration. Tracks with
/// fewer than two samples are dropped.
pub fn finalize_tracks(tracks: &[LiveTrack], cfg: &TrackerConfig) -> Vec<Track> {
    tracks
        .iter()
        .filter(|t| t.frames.len() >= 2)
        .map(|t| {
            let pos = smooth(&t.positions, cfg.smooth_window);
            let vel = differentiate(&t.frames, &pos, cfg.dt);
            let acc = differentiate(&t.frames, &vel, cfg.dt);
            let samples = t
                .frames
                .iter()
                .enumerate()
                .map(|(i, &frame)| TrackSample {
                    frame,
                    position: pos[i],
                    velocity: vel[i],
                    acceleration: acc[i],
                })
                .collect();
            Track { id: t.id, samples }
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct TrackRow {
    track_id: TrackId,
    frame: u32,
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    ax: f64,
    ay: f64,
}

pub const TRACK_HEADER: [&str; 8] = ["track_id", "frame", "x", "y", "vx", "vy", "ax", "ay"];

/// Writes `tracks.csv`.
pub fn write_tracks<W: Write>(sink: W, tracks: &[Track]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(sink);
    w.write_record(TRACK_HEADER)?;
    for t in tracks {
        for s in &t.samples {
            w.serialize(TrackRow {
                track_id: t.id,
                frame: s.frame,
                x: s.position[0],
                y: s.position[1],
                vx: s.velocity[0],
                vy: s.velocity[1],
                ax: s.acceleration[0],
                ay: s.acceleration[1],
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads `tracks.csv`; rows of one track must be contiguous and frame-ordered.
pub fn read_tracks<R: std::io::Read>(source: R) -> Result<Vec<Track>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(source);
    let mut tracks: Vec<Track> = Vec::new();
    let mut records = r.records();
    match records.next() {
        Some(h) => {
            let h = h?;
            if h.iter().collect::<Vec<_>>() != TRACK_HEADER {
                return Err(Error::InvalidInput("unexpected tracks.csv header".into()));
            }
        }
        None => return Ok(tracks),
    }
    for rec in records {
        let row: TrackRow = rec?.deserialize(None)?;
        let sample = TrackSample {
            frame: row.frame,
            position: [row.x, row.y],
            velocity: [row.vx, row.vy],
            acceleration: [row.ax, row.ay],
        };
        match tracks.last_mut() {
            Some(t) if t.id == row.track_id => {
                if sample.frame <= t.samples.last().map_or(0, |s| s.frame) {
                    return Err(Error::InvalidInput(format!(
                        "track {} frames not increasing",
                        row.track_id
                    )));
                }
                t.samples.push(sample)
            }
            _ => tracks.push(Track {
                id: row.track_id,
                samples: vec![sample],
            }),
        }
    }
    Ok(tracks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(frame: u32, x: f64, y: f64) -> Detection {
        Detection {
            frame,
            cx: x,
            cy: y,
            w: 1.0,
            h: 1.0,
            score: 1.0,
        }
    }

    #[test]
    fn stationary_track_keeps_id() {
        let mut tr = Tracker::new(TrackerConfig::default());
        let r0 = tr.match_and_update(0, &[d(0, 0.0, 0.0)]);
        let r1 = tr.match_and_update(1, &[d(1, 0.0, 0.0)]);
        assert_eq!(r0.assignments[0].track_id, r1.assignments[0].track_id);
        assert!(!r1.assignments[0].spawned);
    }

    #[test]
    fn far_detection_spawns_and_track_goes_inactive() {
        let cfg = TrackerConfig::default();
        let mut tr = Tracker::new(cfg);
        tr.match_and_update(0, &[d(0, 0.0, 0.0)]);
        let r = tr.match_and_update(1, &[d(1, 2.0 * cfg.ed_threshold, 0.0)]);
        assert!(r.assignments[0].spawned);
        assert_eq!(r.assignments[0].track_id, 1);
        assert_eq!(r.deactivated, vec![0]);
        assert_eq!(tr.tracks()[0].state, TrackState::Inactive);
        assert_eq!(tr.tracks()[0].inactive_since, Some(1));
    }

    #[test]
    fn crossing_prediction_resolves_swap() {
        // two agents on nearby lanes moving 1 m/frame in opposite directions
        let cfg = TrackerConfig {
            dt: 1.0,
            ..Default::default()
        };
        let frames: Vec<Vec<Detection>> = (0..10)
            .map(|k| {
                let f = k as u32;
                vec![d(f, -4.5 + k as f64, 0.0), d(f, 4.5 - k as f64, 0.4)]
            })
            .collect();
        let run = |cfg: TrackerConfig| {
            let mut tr = Tracker::new(cfg);
            frames
                .iter()
                .enumerate()
                .map(|(k, dets)| {
                    let r = tr.match_and_update(k as u32, dets);
                    (r.assignments[0].track_id, r.assignments[1].track_id)
                })
                .collect::<Vec<_>>()
        };
        let with = run(cfg);
        assert!(with.iter().all(|&ids| ids == with[0]));
        let without = run(TrackerConfig {
            use_prediction: false,
            ..cfg
        });
        assert!(without.iter().any(|&ids| ids != without[0]));
    }

    #[test]
    fn zero_velocity_prediction_equals_plain_matching() {
        let cfg = TrackerConfig::default();
        let mut a = Tracker::new(cfg);
        let mut b = Tracker::new(TrackerConfig {
            use_prediction: false,
            ..cfg
        });
        let dets0 = [d(0, 0.0, 0.0), d(0, 1.5, 0.0)];
        let dets1 = [d(1, 0.7, 0.0), d(1, 0.8, 0.0)];
        a.match_and_update(0, &dets0);
        b.match_and_update(0, &dets0);
        assert_eq!(a.match_and_update(1, &dets1), b.match_and_update(1, &dets1));
    }

    #[test]
    fn inactive_tracks_close_and_ids_are_not_reused() {
        let cfg = TrackerConfig {
            inactive_max: 2,
            ..Default::default()
        };
        let mut tr = Tracker::new(cfg);
        tr.match_and_update(0, &[d(0, 0.0, 0.0)]);
        tr.match_and_update(1, &[]);
        tr.match_and_update(2, &[]);
        let r = tr.match_and_update(3, &[d(3, 0.0, 0.0)]);
        assert_eq!(r.reactivated, vec![0]);
        // last seen at 3: frames 4..=6 are within the allowance of 2 misses
        // plus the deactivating one, frame 7 closes
        for f in 4..=6 {
            assert!(tr.match_and_update(f, &[]).closed.is_empty());
        }
        let r = tr.match_and_update(7, &[d(7, 0.0, 0.0)]);
        assert_eq!(r.closed, vec![0]);
        assert_eq!(r.assignments[0].track_id, 1);
        assert!(r.assignments[0].spawned);
    }

    #[test]
    fn finalize_constant_and_linear_tracks() {
        let cfg = TrackerConfig {
            dt: 0.2,
            ..Default::default()
        };
        let still = LiveTrack {
            id: 0,
            frames: (0..8).collect(),
            positions: vec![[3.0, -1.0]; 8],
            velocity: [0.0, 0.0],
            state: TrackState::Active,
            inactive_since: None,
        };
        let moving = LiveTrack {
            id: 1,
            frames: (0..8).collect(),
            positions: (0..8).map(|i| [i as f64, 2.0]).collect(),
            ..still.clone()
        };
        let single = LiveTrack {
            id: 2,
            frames: vec![0],
            positions: vec![[0.0, 0.0]],
            ..still.clone()
        };
        let out = finalize_tracks(&[still, moving, single], &cfg);
        assert_eq!(out.len(), 2);
        for s in &out[0].samples {
            assert_eq!(s.velocity, [0.0, 0.0]);
            assert_eq!(s.acceleration, [0.0, 0.0]);
        }
        for s in &out[1].samples {
            assert!((s.velocity[0] - 5.0).abs() < 1e-12);
            assert!(s.velocity[1].abs() < 1e-12);
            assert!(s.acceleration[0].abs() < 1e-9);
        }
    }

    #[test]
    fn tracks_csv_roundtrip() {
        let cfg = TrackerConfig::default();
        let mut frames = FrameDetections::new();
        for f in 0..5u32 {
            frames.insert(f, vec![d(f, f as f64 * 0.5, 0.0), d(f, 10.0, f as f64 * 0.3)]);
        }
        let (tracks, _) = track_frames(&frames, &cfg);
        let mut buf = Vec::new();
        write_tracks(&mut buf, &tracks).unwrap();
        let back = read_tracks(buf.as_slice()).unwrap();
        assert_eq!(back, tracks);
    }
}
