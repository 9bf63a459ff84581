//! Plots and summary statistics of a finished run.
//!
//! Arrows in field plots are scaled so the longest one spans one grid
//! cell. An arrow of zero length is drawn as a zero-length line with no
//! head, so an all-zero field shows only the grid dots.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{grid_point, GRID_EXTENT, GRID_SIDE};

use super::{create_output, open_input, write_json, SegmentsFile, Stage, FIELDS, TRACE};
use crate::field::read_field_records;

pub const REPORT_DIR: &str = "report";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub count: usize,
    pub mean: f64,
    pub min: usize,
    pub max: usize,
}

/// Contents of `report/summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub used_states: usize,
    pub tracks: usize,
    pub total_frames: usize,
    pub frames_per_primitive: BTreeMap<usize, usize>,
    pub segment_lengths: BTreeMap<usize, LengthStats>,
}

impl Summary {
    pub fn from_segments(seg: &SegmentsFile) -> Self {
        let mut frames: BTreeMap<usize, usize> = BTreeMap::new();
        let mut lengths: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for t in &seg.tracks {
            for s in &t.segments {
                *frames.entry(s.primitive).or_default() += s.length;
                lengths.entry(s.primitive).or_default().push(s.length);
            }
        }
        let segment_lengths = lengths
            .into_iter()
            .map(|(k, v)| {
                let stats = LengthStats {
                    count: v.len(),
                    mean: v.iter().sum::<usize>() as f64 / v.len() as f64,
                    min: *v.iter().min().expect("non-empty"),
                    max: *v.iter().max().expect("non-empty"),
                };
                (k, stats)
            })
            .collect();
        Self {
            used_states: frames.len(),
            tracks: seg.tracks.len(),
            total_frames: frames.values().sum(),
            frames_per_primitive: frames,
            segment_lengths,
        }
    }
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn color(k: usize) -> &'static str {
    PALETTE[k % PALETTE.len()]
}

/// Quiver plot of a mean field (242 values, grid layout of the field
/// stage) with the ego vehicle at the center facing right.
pub fn render_field_svg(mean: &[f64], title: &str) -> String {
    let px_per_m = 20.0;
    let margin = 30.0;
    let size = 2.0 * GRID_EXTENT * px_per_m + 2.0 * margin;
    let to_px = |p: [f64; 2]| {
        (
            margin + (p[0] + GRID_EXTENT) * px_per_m,
            margin + (GRID_EXTENT - p[1]) * px_per_m,
        )
    };
    let cells = GRID_SIDE * GRID_SIDE;
    let longest = (0..cells)
        .map(|c| mean[2 * c].hypot(mean[2 * c + 1]))
        .fold(0.0, f64::max);
    let cell_px = 2.0 * px_per_m;
    let scale = if longest > 0.0 { 0.9 * cell_px / longest } else { 0.0 };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{margin}" y="20" font-family="sans-serif" font-size="14">{title}</text>"#
    );
    let (cx, cy) = to_px([0.0, 0.0]);
    let _ = writeln!(
        s,
        r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="black"/>"#,
        cx + 8.0,
        cy,
        cx - 6.0,
        cy - 5.0,
        cx - 6.0,
        cy + 5.0
    );
    for c in 0..cells {
        let p = grid_point(c);
        let (x0, y0) = to_px(p);
        let (u, v) = (mean[2 * c], mean[2 * c + 1]);
        let (x1, y1) = (x0 + u * scale, y0 - v * scale);
        let _ = writeln!(s, r##"<circle cx="{x0:.2}" cy="{y0:.2}" r="1.5" fill="#999"/>"##);
        let _ = writeln!(
            s,
            r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y1:.2}" stroke="steelblue" stroke-width="1.5"/>"#
        );
        let len = (x1 - x0).hypot(y1 - y0);
        if len > 1e-9 {
            let (dx, dy) = ((x1 - x0) / len, (y1 - y0) / len);
            let head = 5.0f64.min(len * 0.5);
            let (bx, by) = (x1 - dx * head, y1 - dy * head);
            let _ = writeln!(
                s,
                r#"<polygon points="{x1:.2},{y1:.2} {:.2},{:.2} {:.2},{:.2}" fill="steelblue"/>"#,
                bx - dy * head * 0.5,
                by + dx * head * 0.5,
                bx + dy * head * 0.5,
                by - dx * head * 0.5
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

fn render_timeline_svg(seg: &SegmentsFile) -> String {
    let row_h = 14.0;
    let left = 70.0;
    let longest = seg
        .tracks
        .iter()
        .map(|t| t.segments.iter().map(|s| s.length).sum::<usize>())
        .max()
        .unwrap_or(0)
        .max(1);
    let width = 900.0;
    let px = (width - left - 10.0) / longest as f64;
    let height = 30.0 + row_h * seg.tracks.len() as f64 + 10.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="10" y="18" font-family="sans-serif" font-size="13">primitive label per ego sample</text>"#
    );
    for (row, t) in seg.tracks.iter().enumerate() {
        let y = 30.0 + row as f64 * row_h;
        let _ = writeln!(
            s,
            r#"<text x="10" y="{:.1}" font-family="sans-serif" font-size="10">track {}</text>"#,
            y + row_h - 4.0,
            t.track_id
        );
        let mut x = left;
        for sg in &t.segments {
            let w = sg.length as f64 * px;
            let _ = writeln!(
                s,
                r#"<rect x="{x:.2}" y="{y:.1}" width="{w:.2}" height="{:.1}" fill="{}"><title>primitive {} frames {}-{}</title></rect>"#,
                row_h - 2.0,
                color(sg.primitive),
                sg.primitive,
                sg.start_frame,
                sg.end_frame
            );
            x += w;
        }
    }
    s.push_str("</svg>\n");
    s
}

fn render_trace_svg(trace: &[(usize, f64)]) -> String {
    let (w, h, m) = (640.0, 320.0, 40.0);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{m}" y="20" font-family="sans-serif" font-size="13">log joint per sweep</text>"#
    );
    let _ = writeln!(
        s,
        r#"<polyline points="{m},{m} {m},{:.1} {:.1},{:.1}" fill="none" stroke="black"/>"#,
        h - m,
        w - m,
        h - m
    );
    if !trace.is_empty() {
        let lo = trace.iter().map(|t| t.1).fold(f64::INFINITY, f64::min);
        let hi = trace.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let n = trace.len().max(2) - 1;
        let mut pts = String::new();
        for (i, (_, v)) in trace.iter().enumerate() {
            let x = m + (w - 2.0 * m) * i as f64 / n as f64;
            let y = h - m - (h - 2.0 * m) * (v - lo) / span;
            let _ = write!(pts, "{x:.2},{y:.2} ");
        }
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#,
            pts.trim_end()
        );
        let _ = writeln!(
            s,
            r#"<text x="{m}" y="{:.1}" font-family="sans-serif" font-size="10">min {lo:.1}, max {hi:.1}</text>"#,
            h - 10.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn read_trace(path: &Path) -> Result<Vec<(usize, f64)>> {
    let reader = open_input(path, Some(Stage::Segment))?;
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate().skip(1) {
        let line = line?;
        let mut it = line.split(',');
        let parse = || Error::InvalidInput(format!("{TRACE} line {}: malformed", i + 1));
        let sweep = it.next().and_then(|v| v.parse().ok()).ok_or_else(parse)?;
        let lj = it.next().and_then(|v| v.parse().ok()).ok_or_else(parse)?;
        out.push((sweep, lj));
    }
    Ok(out)
}

/// Per-primitive mean of the fields whose ego frame falls inside one of
/// that primitive's segments.
fn primitive_mean_fields(seg: &SegmentsFile, records: &[(u32, u32, Vec<f64>)]) -> BTreeMap<usize, Vec<f64>> {
    let mut spans: BTreeMap<u32, Vec<(u32, u32, usize)>> = BTreeMap::new();
    for t in &seg.tracks {
        spans
            .entry(t.track_id)
            .or_default()
            .extend(t.segments.iter().map(|s| (s.start_frame, s.end_frame, s.primitive)));
    }
    let mut sums: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    for (id, frame, field) in records {
        let Some(list) = spans.get(id) else { continue };
        let Some(&(_, _, k)) = list.iter().find(|(a, b, _)| (*a..=*b).contains(frame)) else {
            continue;
        };
        let e = sums.entry(k).or_insert_with(|| (vec![0.0; field.len()], 0));
        for (acc, v) in e.0.iter_mut().zip(field) {
            *acc += v;
        }
        e.1 += 1;
    }
    sums.into_iter()
        .map(|(k, (sum, n))| (k, sum.into_iter().map(|v| v / n as f64).collect()))
        .collect()
}

/// Writes `report/` from the artifacts in `out`. Field plots need
/// `fields.bin`; when it is absent (features supplied directly) they are
/// skipped with a warning.
pub fn emit_report(out: &Path) -> Result<Vec<String>> {
    let seg = SegmentsFile::load(out)?;
    let trace = read_trace(&out.join(TRACE))?;
    let dir = out.join(REPORT_DIR);
    if dir.exists() {
        fs::remove_dir_all(&dir)?;
    }
    fs::create_dir_all(&dir)?;
    let mut warnings = Vec::new();

    let summary = Summary::from_segments(&seg);
    if summary.total_frames != seg.num_frames {
        return Err(Error::InvalidInput(format!(
            "segments cover {} frames but the feature matrix has {}",
            summary.total_frames, seg.num_frames
        )));
    }
    write_json(&dir.join("summary.json"), &summary)?;

    let write = |name: &str, body: &str| -> Result<()> {
        let mut w = create_output(&dir.join(name))?;
        w.write_all(body.as_bytes())?;
        w.flush()?;
        Ok(())
    };
    write("timeline.svg", &render_timeline_svg(&seg))?;
    write("log_joint.svg", &render_trace_svg(&trace))?;

    let fields_path = out.join(FIELDS);
    if fields_path.exists() && summary.used_states > 0 {
        let records = read_field_records(open_input(&fields_path, Some(Stage::Field))?)?;
        let means = primitive_mean_fields(&seg, &records);
        for k in summary.frames_per_primitive.keys() {
            match means.get(k) {
                Some(m) => write(
                    &format!("primitive_{k:02}.svg"),
                    &render_field_svg(m, &format!("primitive {k}: mean relative velocity field")),
                )?,
                None => warnings.push(format!("primitive {k} has no matching field records")),
            }
        }
    } else if summary.used_states > 0 {
        warnings.push("fields.bin not found; field plots skipped".into());
    }
    Ok(warnings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FIELD_LEN;
    use crate::pipeline::{SegmentRecord, TrackSegments};

    #[test]
    fn zero_field_draws_no_arrow_heads() {
        let svg = render_field_svg(&vec![0.0; FIELD_LEN], "zero");
        assert_eq!(svg.matches("<line").count(), GRID_SIDE * GRID_SIDE);
        // only the ego marker polygon
        assert_eq!(svg.matches("<polygon").count(), 1);
    }

    #[test]
    fn nonzero_field_has_heads() {
        let mut m = vec![0.0; FIELD_LEN];
        m[0] = 1.0;
        let svg = render_field_svg(&m, "one");
        assert_eq!(svg.matches("<polygon").count(), 2);
    }

    #[test]
    fn summary_counts_reconcile() {
        let rec = |a, b, k, n| SegmentRecord {
            start_frame: a,
            end_frame: b,
            primitive: k,
            length: n,
        };
        let seg = SegmentsFile {
            tracks: vec![
                TrackSegments {
                    track_id: 1,
                    segments: vec![rec(0, 4, 2, 5), rec(5, 6, 0, 2)],
                },
                TrackSegments {
                    track_id: 3,
                    segments: vec![rec(10, 12, 2, 3)],
                },
            ],
            used_states: 2,
            num_frames: 10,
            sweeps: 1,
            final_log_joint: None,
        };
        let s = Summary::from_segments(&seg);
        assert_eq!(s.used_states, 2);
        assert_eq!(s.total_frames, 10);
        assert_eq!(s.frames_per_primitive[&2], 8);
        assert_eq!(s.segment_lengths[&2].count, 2);
        assert_eq!(s.segment_lengths[&2].mean, 4.0);
    }
}
