//! `features.csv`: one row per ego frame, `track_id, frame, z0..z23,
//! v_ego, a_ego`.

use std::collections::HashMap;
use std::io::{Read, Write};

use crate::autoenc::{Autoencoder, LATENT_DIM};
use crate::error::{Error, Result};
use crate::field::heading_or;
use crate::tracker::{Track, TrackId};

/// 24 latents, ego speed and ego longitudinal acceleration.
pub const FEATURE_DIM: usize = LATENT_DIM + 2;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub track_id: TrackId,
    pub frame: u32,
    pub values: Vec<f64>,
}

/// Feature rows of one ego vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub track_id: TrackId,
    pub frames: Vec<u32>,
    pub rows: Vec<Vec<f64>>,
}

/// Speed and acceleration along the heading for every sample of `track`.
/// The heading is held while the vehicle is nearly stopped, as in the
/// field stage.
fn ego_kinematics(track: &Track) -> HashMap<u32, (f64, f64)> {
    let mut heading = 0.0;
    track
        .samples
        .iter()
        .map(|s| {
            heading = heading_or(s.velocity, heading);
            let speed = s.velocity[0].hypot(s.velocity[1]);
            let along = s.acceleration[0] * heading.cos() + s.acceleration[1] * heading.sin();
            (s.frame, (speed, along))
        })
        .collect()
}

pub(crate) fn build_features(
    model: &Autoencoder,
    records: &[(TrackId, u32, Vec<f64>)],
    tracks: &[Track],
) -> Result<Vec<FeatureRow>> {
    let mut kin: HashMap<TrackId, HashMap<u32, (f64, f64)>> = HashMap::new();
    for t in tracks {
        kin.insert(t.id, ego_kinematics(t));
    }
    records
        .iter()
        .map(|(id, frame, field)| {
            let (v, a) = kin.get(id).and_then(|m| m.get(frame)).copied().ok_or_else(|| {
                Error::InvalidInput(format!("field for track {id} frame {frame} has no track sample"))
            })?;
            let mut values = model.encode(field)?;
            values.push(v);
            values.push(a);
            Ok(FeatureRow {
                track_id: *id,
                frame: *frame,
                values,
            })
        })
        .collect()
}

pub fn write_features<W: Write>(sink: W, rows: &[FeatureRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(sink);
    let mut header = vec!["track_id".to_string(), "frame".to_string()];
    header.extend((0..LATENT_DIM).map(|i| format!("z{i}")));
    header.push("v_ego".into());
    header.push("a_ego".into());
    w.write_record(&header)?;
    for r in rows {
        if r.values.len() != FEATURE_DIM {
            return Err(Error::InvalidInput(format!(
                "feature row has {} values",
                r.values.len()
            )));
        }
        let mut rec = vec![r.track_id.to_string(), r.frame.to_string()];
        rec.extend(r.values.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features<R: Read>(source: R) -> Result<Vec<FeatureRow>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let header = r.headers()?.clone();
    if header.len() != FEATURE_DIM + 2 || &header[0] != "track_id" || &header[1] != "frame" {
        return Err(Error::InvalidInput(format!(
            "features.csv must have track_id, frame and {FEATURE_DIM} value columns"
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::InvalidInput(format!("features.csv row {}: bad {what}", i + 2));
        let track_id = rec[0].parse().map_err(|_| bad("track_id"))?;
        let frame = rec[1].parse().map_err(|_| bad("frame"))?;
        let values = rec
            .iter()
            .skip(2)
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| bad("value"))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(FeatureRow {
            track_id,
            frame,
            values,
        });
    }
    Ok(rows)
}

/// Splits rows into per-track sequences; rows of a track must be
/// contiguous with increasing frames.
pub(crate) fn group_sequences(rows: &[FeatureRow]) -> Vec<FeatureSequence> {
    let mut out: Vec<FeatureSequence> = Vec::new();
    for r in rows {
        match out.last_mut() {
            Some(s) if s.track_id == r.track_id && s.frames.last().is_some_and(|&f| f < r.frame) => {
                s.frames.push(r.frame);
                s.rows.push(r.values.clone());
            }
            _ => out.push(FeatureSequence {
                track_id: r.track_id,
                frames: vec![r.frame],
                rows: vec![r.values.clone()],
            }),
        }
    }
    out
}
