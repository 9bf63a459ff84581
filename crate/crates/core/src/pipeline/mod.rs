//! Five stages plus reporting, connected only through files in the output
//! directory:
//!
//! | stage   | reads                         | writes |
//! |---------|-------------------------------|--------|
//! | ingest  | detections (pixels)           | `detections_filtered.csv`, `ingest_report.json` |
//! | track   | `detections_filtered.csv`     | `tracks.csv` |
//! | field   | `tracks.csv`                  | `fields.bin` |
//! | encode  | `fields.bin`, `tracks.csv`    | `autoencoder.tpae`, `train_loss.csv`, `features.csv` |
//! | segment | `features.csv`                | `segments.json`, `hsmm_trace.csv`, `hsmm_checkpoint.bin` |
//! | report  | the above                     | `report/` |

mod config;
mod features;
mod report;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autoenc::{train, Autoencoder};
use crate::error::{Error, Result};
use crate::field::{ego_fields, read_field_records, write_field_records, FrameIndex};
use crate::ingest::{
    filter_detections, parse_detections, rectify_detections, write_detections, Detection, RemovalReason,
};
use crate::segmenter::{fit_with, write_checkpoint, ObsSequence};
use crate::tracker::{read_tracks, track_frames, write_tracks, Track};

pub use config::{
    AutoencoderSection, FieldSection, HomographySection, IngestSection, PathsSection, PipelineConfig, Stage,
    OUTPUT_DIR_ENV,
};
pub use features::{read_features, write_features, FeatureRow, FEATURE_DIM};
pub use report::{emit_report, render_field_svg, Summary, REPORT_DIR};

pub const DETECTIONS_FILTERED: &str = "detections_filtered.csv";
pub const INGEST_REPORT: &str = "ingest_report.json";
pub const TRACKS: &str = "tracks.csv";
pub const FIELDS: &str = "fields.bin";
pub const MODEL: &str = "autoencoder.tpae";
pub const TRAIN_LOSS: &str = "train_loss.csv";
pub const FEATURES: &str = "features.csv";
pub const SEGMENTS: &str = "segments.json";
pub const TRACE: &str = "hsmm_trace.csv";
pub const CHECKPOINT: &str = "hsmm_checkpoint.bin";

/// Exit status for configuration problems.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for a stage that started and failed.
pub const EXIT_STAGE: i32 = 3;

/// Failure of a run, tagged with the stage it happened in.
#[derive(Debug)]
pub struct PipelineError {
    pub stage: Option<Stage>,
    pub error: Error,
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self.error {
            Error::Config(_) => EXIT_CONFIG,
            _ => EXIT_STAGE,
        }
    }

    /// One-line machine-readable description.
    pub fn to_json(&self) -> String {
        let kind = if self.exit_code() == EXIT_CONFIG {
            "config"
        } else {
            "stage_failure"
        };
        serde_json::json!({
            "stage": self.stage.map(Stage::name),
            "kind": kind,
            "cause": self.error.to_string(),
        })
        .to_string()
    }
}

impl std::fmt::Display for PipelineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.stage {
            Some(s) => write!(f, "stage {s}: {}", self.error),
            None => write!(f, "{}", self.error),
        }
    }
}

impl std::error::Error for PipelineError {}

/// What a run did, for display.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOutcome {
    pub stages: Vec<Stage>,
    pub warnings: Vec<String>,
}

/// Runs `stages` in order (all stages when `None`).
pub fn run_pipeline(cfg: &PipelineConfig, only: Option<Stage>) -> std::result::Result<RunOutcome, PipelineError> {
    cfg.validate().map_err(|error| PipelineError { stage: None, error })?;
    let out = &cfg.paths.output_dir;
    fs::create_dir_all(out).map_err(|e| PipelineError {
        stage: None,
        error: Error::Config(format!("cannot create output dir {}: {e}", out.display())),
    })?;
    let stages: Vec<Stage> = match only {
        Some(s) => vec![s],
        None => Stage::ALL.to_vec(),
    };
    let mut outcome = RunOutcome::default();
    for &stage in &stages {
        let warnings = run_stage(cfg, stage).map_err(|error| PipelineError {
            stage: Some(stage),
            error,
        })?;
        outcome
            .warnings
            .extend(warnings.into_iter().map(|w| format!("{stage}: {w}")));
        outcome.stages.push(stage);
    }
    Ok(outcome)
}

pub fn run_stage(cfg: &PipelineConfig, stage: Stage) -> Result<Vec<String>> {
    match stage {
        Stage::Ingest => stage_ingest(cfg),
        Stage::Track => stage_track(cfg),
        Stage::Field => stage_field(cfg),
        Stage::Encode => stage_encode(cfg),
        Stage::Segment => stage_segment(cfg),
        Stage::Report => emit_report(&cfg.paths.output_dir),
    }
}

/// Opens an input, reporting a missing file as a config problem that
/// names the stage producing it.
pub(crate) fn open_input(path: &Path, producer: Option<Stage>) -> Result<BufReader<File>> {
    match File::open(path) {
        Ok(f) => Ok(BufReader::new(f)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::Config(match producer {
            Some(s) => format!("missing {}; run stage {s} first", path.display()),
            None => format!("missing input {}", path.display()),
        })),
        Err(e) => Err(e.into()),
    }
}

pub(crate) fn create_output(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_skipped: Vec<(u64, String)>,
    pub kept: usize,
    pub removed_low_score: usize,
    pub removed_too_large: usize,
    pub removed_outside_roi: usize,
    pub removed_overlap: usize,
}

fn stage_ingest(cfg: &PipelineConfig) -> Result<Vec<String>> {
    let mut warnings = Vec::new();
    let parsed = parse_detections(open_input(&cfg.paths.detections, None)?)?;
    let h = cfg.homography()?;
    // the ROI is drawn on the ground plane; test membership in pixels
    let roi_px = match cfg.roi()? {
        Some(r) => Some(r.transformed(&h.inverse()?)?),
        None => None,
    };
    let outcome = filter_detections(
        &parsed.by_frame(),
        &cfg.ingest.filter,
        roi_px.as_ref(),
        cfg.ingest.screen_area,
    );
    let rectified = rectify_detections(&outcome.kept, &h)?;
    let flat: Vec<Detection> = rectified.values().flatten().copied().collect();
    write_detections(create_output(&cfg.paths.output_dir.join(DETECTIONS_FILTERED))?, &flat)?;

    let count = |r: RemovalReason| outcome.removed.iter().filter(|(_, why)| *why == r).count();
    let report = IngestReport {
        rows_read: parsed.detections.len() + parsed.diagnostics.len(),
        rows_skipped: parsed.diagnostics.iter().map(|d| (d.line, d.reason.clone())).collect(),
        kept: flat.len(),
        removed_low_score: count(RemovalReason::LowScore),
        removed_too_large: count(RemovalReason::TooLarge),
        removed_outside_roi: count(RemovalReason::OutsideRoi),
        removed_overlap: count(RemovalReason::Overlap),
    };
    let mut w = create_output(&cfg.paths.output_dir.join(INGEST_REPORT))?;
    serde_json::to_writer_pretty(&mut w, &report)?;
    w.flush()?;
    if !parsed.diagnostics.is_empty() {
        warnings.push(format!("skipped {} malformed rows", parsed.diagnostics.len()));
    }
    if flat.is_empty() {
        warnings.push("no detections survived ingest".into());
    }
    Ok(warnings)
}

fn stage_track(cfg: &PipelineConfig) -> Result<Vec<String>> {
    let path = cfg.paths.output_dir.join(DETECTIONS_FILTERED);
    let parsed = parse_detections(open_input(&path, Some(Stage::Ingest))?)?;
    let (tracks, _) = track_frames(&parsed.by_frame(), &cfg.tracker);
    write_tracks(create_output(&cfg.paths.output_dir.join(TRACKS))?, &tracks)?;
    let mut warnings = Vec::new();
    if tracks.is_empty() {
        warnings.push("no tracks".into());
    }
    Ok(warnings)
}

fn load_tracks(out: &Path) -> Result<Vec<Track>> {
    read_tracks(open_input(&out.join(TRACKS), Some(Stage::Track))?)
}

/// Indices of tracks that serve as ego vehicles: long enough and with at
/// least one neighbor inside the radius at some frame.
pub fn eligible_egos(tracks: &[Track], index: &FrameIndex, min_len: usize, radius: f64) -> Vec<usize> {
    (0..tracks.len())
        .filter(|&i| tracks[i].len() >= min_len)
        .filter(|&i| {
            tracks[i].samples.iter().any(|s| {
                index.at(s.frame).iter().any(|&(tj, sj)| {
                    if tj == i {
                        return false;
                    }
                    let p = tracks[tj].samples[sj].position;
                    (p[0] - s.position[0]).hypot(p[1] - s.position[1]) <= radius
                })
            })
        })
        .collect()
}

fn stage_field(cfg: &PipelineConfig) -> Result<Vec<String>> {
    let tracks = load_tracks(&cfg.paths.output_dir)?;
    let index = FrameIndex::new(&tracks);
    let egos = eligible_egos(&tracks, &index, cfg.field.min_track_len, cfg.field.radius);
    let per_ego = egos
        .par_iter()
        .map(|&e| ego_fields(&tracks, e, &index, &cfg.field.kernel, cfg.field.radius))
        .collect::<Result<Vec<_>>>()?;
    let records: Vec<_> = per_ego.into_iter().flatten().collect();
    write_field_records(create_output(&cfg.paths.output_dir.join(FIELDS))?, &records)?;
    let mut warnings = Vec::new();
    if egos.is_empty() {
        warnings.push("no track qualifies as ego vehicle".into());
    }
    Ok(warnings)
}

fn stage_encode(cfg: &PipelineConfig) -> Result<Vec<String>> {
    let out = &cfg.paths.output_dir;
    let records = read_field_records(open_input(&out.join(FIELDS), Some(Stage::Field))?)?;
    let tracks = load_tracks(out)?;
    let mut warnings = Vec::new();
    let model_path = out.join(MODEL);
    if records.is_empty() {
        warnings.push("no fields to encode; features are empty".into());
        if model_path.exists() {
            fs::remove_file(&model_path)?;
        }
        write_features(create_output(&out.join(FEATURES))?, &[])?;
        write_loss(&out.join(TRAIN_LOSS), &[])?;
        return Ok(warnings);
    }
    let spec = cfg.mlp_spec()?;
    let mut tc = cfg.train_config();
    if records.len() < tc.batch_size {
        warnings.push(format!(
            "only {} fields; batch size reduced from {}",
            records.len(),
            tc.batch_size
        ));
        tc.batch_size = records.len();
    }
    let data: Vec<&[f64]> = records.iter().map(|(_, _, v)| v.as_slice()).collect();
    let trained = train(&spec, &data, &tc)?;
    trained.model.write_to(create_output(&model_path)?)?;
    write_loss(&out.join(TRAIN_LOSS), &trained.loss_history)?;

    let rows = features::build_features(&trained.model, &records, &tracks)?;
    write_features(create_output(&out.join(FEATURES))?, &rows)?;
    Ok(warnings)
}

fn write_loss(path: &Path, history: &[f64]) -> Result<()> {
    let mut w = create_output(path)?;
    writeln!(w, "epoch,loss")?;
    for (e, l) in history.iter().enumerate() {
        writeln!(w, "{},{}", e + 1, l)?;
    }
    w.flush()?;
    Ok(())
}

/// Loads a saved model, e.g. for encoding new fields.
pub fn load_model(out: &Path) -> Result<Autoencoder> {
    Autoencoder::read_from(open_input(&out.join(MODEL), Some(Stage::Encode))?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub start_frame: u32,
    /// Inclusive.
    pub end_frame: u32,
    pub primitive: usize,
    /// Feature rows covered; differs from the frame span when the track
    /// has gaps.
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSegments {
    pub track_id: u32,
    pub segments: Vec<SegmentRecord>,
}

/// Contents of `segments.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentsFile {
    pub tracks: Vec<TrackSegments>,
    pub used_states: usize,
    pub num_frames: usize,
    pub sweeps: usize,
    pub final_log_joint: Option<f64>,
}

impl SegmentsFile {
    pub fn load(out: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(open_input(
            &out.join(SEGMENTS),
            Some(Stage::Segment),
        )?)?)
    }

    /// Frame labels of each track in order, expanded from segments.
    pub fn labels(&self) -> Vec<(u32, Vec<usize>)> {
        self.tracks
            .iter()
            .map(|t| {
                let labels = t
                    .segments
                    .iter()
                    .flat_map(|s| std::iter::repeat_n(s.primitive, s.length))
                    .collect();
                (t.track_id, labels)
            })
            .collect()
    }
}

fn stage_segment(cfg: &PipelineConfig) -> Result<Vec<String>> {
    let out = &cfg.paths.output_dir;
    let features_path = cfg.paths.features.clone().unwrap_or_else(|| out.join(FEATURES));
    let producer = cfg.paths.features.is_none().then_some(Stage::Encode);
    let rows = read_features(open_input(&features_path, producer)?)?;
    let sequences = features::group_sequences(&rows);
    let hsmm = cfg.segmenter_config();
    let mut warnings = Vec::new();

    let mut trace = create_output(&out.join(TRACE))?;
    writeln!(trace, "sweep,log_joint,used_states")?;
    if sequences.is_empty() {
        warnings.push("no feature rows; segmentation is empty".into());
        trace.flush()?;
        let empty = SegmentsFile {
            tracks: Vec::new(),
            used_states: 0,
            num_frames: 0,
            sweeps: 0,
            final_log_joint: None,
        };
        write_json(&out.join(SEGMENTS), &empty)?;
        let ck = out.join(CHECKPOINT);
        if ck.exists() {
            fs::remove_file(ck)?;
        }
        return Ok(warnings);
    }

    let data: Vec<ObsSequence> = sequences
        .iter()
        .map(|s| ObsSequence::from_rows(&s.rows))
        .collect::<Result<_>>()?;
    let fit = fit_with(&data, &hsmm, |_, s| {
        writeln!(trace, "{},{},{}", s.sweep, s.log_joint, s.used_states)?;
        Ok(())
    })?;
    trace.flush()?;
    write_checkpoint(create_output(&out.join(CHECKPOINT))?, &fit.state, hsmm.iters)?;

    let tracks = sequences
        .iter()
        .zip(&fit.state.segments)
        .map(|(seq, segs)| TrackSegments {
            track_id: seq.track_id,
            segments: segs
                .iter()
                .map(|s| SegmentRecord {
                    start_frame: seq.frames[s.start],
                    end_frame: seq.frames[s.end()],
                    primitive: s.state,
                    length: s.duration,
                })
                .collect(),
        })
        .collect();
    let file = SegmentsFile {
        tracks,
        used_states: fit.state.used_states(),
        num_frames: rows.len(),
        sweeps: hsmm.iters,
        final_log_joint: fit.log_joint.last().copied(),
    };
    write_json(&out.join(SEGMENTS), &file)?;
    Ok(warnings)
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create_output(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Every file the stages write, relative to the output directory.
pub fn artifact_paths(out: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = [
        DETECTIONS_FILTERED,
        INGEST_REPORT,
        TRACKS,
        FIELDS,
        MODEL,
        TRAIN_LOSS,
        FEATURES,
        SEGMENTS,
        TRACE,
        CHECKPOINT,
    ]
    .iter()
    .map(|n| out.join(n))
    .collect();
    if let Ok(entries) = fs::read_dir(out.join(REPORT_DIR)) {
        let mut report: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
        report.sort();
        v.extend(report);
    }
    v
}
