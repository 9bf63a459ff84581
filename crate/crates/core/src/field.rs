//! Gaussian-process relative-velocity fields around an ego vehicle.
//!
//! Each axis of the relative velocity is an independent zero-mean GP over
//! ego-frame position with a squared-exponential kernel. The field is the
//! predictive mean sampled on an 11 x 11 grid spanning [-10, 10] m.
//!
//! Flattened layout (242 values): `index = (iy * 11 + ix) * 2 + axis`,
//! with `y = -10 + 2 * iy`, `x = -10 + 2 * ix`, and `axis` 0 for the
//! longitudinal (x) component, 1 for lateral (y).

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Point;
use crate::tracker::{Track, TrackId, TrackSample};

pub const GRID_SIDE: usize = 11;
pub const GRID_SPACING: f64 = 2.0;
pub const GRID_EXTENT: f64 = 10.0;
pub const FIELD_LEN: usize = GRID_SIDE * GRID_SIDE * 2;

/// Speed below which the heading is carried over from earlier frames.
pub const MIN_HEADING_SPEED: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub amplitude: f64,
    pub length_x: f64,
    pub length_y: f64,
}

impl KernelParams {
    /// Urban intersection setting: A = 1, sigma_x = 4 m, sigma_y = 2 m.
    pub const INTERSECTION: Self = Self {
        amplitude: 1.0,
        length_x: 4.0,
        length_y: 2.0,
    };

    /// Highway setting with a longer longitudinal length scale.
    pub const HIGHWAY: Self = Self {
        amplitude: 1.0,
        length_x: 10.0,
        length_y: 2.0,
    };

    pub fn validate(&self) -> Result<()> {
        if self.amplitude > 0.0 && self.length_x > 0.0 && self.length_y > 0.0 {
            Ok(())
        } else {
            Err(Error::Config("kernel amplitude and length scales must be > 0".into()))
        }
    }

    #[inline]
    pub fn eval(&self, a: Point, b: Point) -> f64 {
        let dx = a[0] - b[0];
        let dy = a[1] - b[1];
        self.amplitude
            * (-(dx * dx) / (2.0 * self.length_x * self.length_x) - (dy * dy) / (2.0 * self.length_y * self.length_y))
                .exp()
    }
}

impl Default for KernelParams {
    fn default() -> Self {
        Self::INTERSECTION
    }
}

pub fn kernel_matrix(a: &[Point], b: &[Point], k: &KernelParams) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| k.eval(a[i], b[j]))
}

/// Neighbor positions and relative velocities in the ego frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NeighborSet {
    pub positions: Vec<Point>,
    pub derivatives: Vec<Point>,
}

impl NeighborSet {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn push(&mut self, position: Point, derivative: Point) {
        self.positions.push(position);
        self.derivatives.push(derivative);
    }
}

/// Heading of `velocity`, or `fallback` when the vehicle is nearly stopped.
pub fn heading_or(velocity: Point, fallback: f64) -> f64 {
    if velocity[0].hypot(velocity[1]) < MIN_HEADING_SPEED {
        fallback
    } else {
        velocity[1].atan2(velocity[0])
    }
}

fn rotate(v: Point, cos: f64, sin: f64) -> Point {
    // rotation by -heading
    [cos * v[0] + sin * v[1], -sin * v[0] + cos * v[1]]
}

/// Translates and rotates neighbors into the frame where `ego` sits at the
/// origin facing +x. Neighbors farther than `radius` are dropped.
pub fn to_ego_frame(ego: &TrackSample, heading: f64, neighbors: &[TrackSample], radius: f64) -> NeighborSet {
    let (sin, cos) = heading.sin_cos();
    let mut out = NeighborSet::default();
    for n in neighbors {
        let rel = [n.position[0] - ego.position[0], n.position[1] - ego.position[1]];
        if rel[0].hypot(rel[1]) > radius {
            continue;
        }
        let dv = [n.velocity[0] - ego.velocity[0], n.velocity[1] - ego.velocity[1]];
        out.push(rotate(rel, cos, sin), rotate(dv, cos, sin));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpPrediction {
    pub mean: Point,
    pub variance: Point,
}

/// A GP conditioned on one neighbor set, reusable across query points.
#[derive(Debug, Clone)]
pub struct ConditionedGp {
    kernel: KernelParams,
    positions: Vec<Point>,
    chol: Option<Cholesky<f64, Dyn>>,
    weights_x: DVector<f64>,
    weights_y: DVector<f64>,
    jitter_used: f64,
}

impl ConditionedGp {
    /// Factors `K + jitter * I`. If that fails the jitter is raised tenfold
    /// at a time, starting from `1e-9 * A`, up to `1e-3 * A`.
    pub fn new(ns: &NeighborSet, k: &KernelParams, jitter: f64) -> Result<Self> {
        if ns
            .positions
            .iter()
            .chain(&ns.derivatives)
            .flatten()
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput("non-finite neighbor data".into()));
        }
        let m = ns.len();
        if m == 0 {
            return Ok(Self {
                kernel: *k,
                positions: Vec::new(),
                chol: None,
                weights_x: DVector::zeros(0),
                weights_y: DVector::zeros(0),
                jitter_used: jitter,
            });
        }
        let base = kernel_matrix(&ns.positions, &ns.positions, k);
        let floor = 1e-9 * k.amplitude;
        let ceiling = 1e-3 * k.amplitude;
        let mut j = jitter.max(0.0);
        let chol = loop {
            let mut km = base.clone();
            for i in 0..m {
                km[(i, i)] += j;
            }
            if let Some(c) = Cholesky::new(km) {
                break c;
            }
            j = if j < floor { floor } else { j * 10.0 };
            if j > ceiling * (1.0 + 1e-12) {
                return Err(Error::SingularKernel);
            }
        };
        let tx = DVector::from_iterator(m, ns.derivatives.iter().map(|d| d[0]));
        let ty = DVector::from_iterator(m, ns.derivatives.iter().map(|d| d[1]));
        let weights_x = chol.solve(&tx);
        let weights_y = chol.solve(&ty);
        Ok(Self {
            kernel: *k,
            positions: ns.positions.clone(),
            chol: Some(chol),
            weights_x,
            weights_y,
            jitter_used: j,
        })
    }

    /// Diagonal jitter that was finally applied.
    pub fn jitter(&self) -> f64 {
        self.jitter_used
    }

    pub fn predict(&self, q: Point) -> GpPrediction {
        let a = self.kernel.amplitude;
        let Some(chol) = &self.chol else {
            return GpPrediction {
                mean: [0.0, 0.0],
                variance: [a, a],
            };
        };
        let kq = DVector::from_iterator(
            self.positions.len(),
            self.positions.iter().map(|&p| self.kernel.eval(q, p)),
        );
        let mean = [kq.dot(&self.weights_x), kq.dot(&self.weights_y)];
        let v = chol
            .l()
            .solve_lower_triangular(&kq)
            .expect("cholesky factor has a positive diagonal");
        let var = (a - v.norm_squared()).max(0.0);
        GpPrediction {
            mean,
            variance: [var, var],
        }
    }
}

/// Predictive mean and variance of the relative velocity at `query`.
pub fn gp_predict(ns: &NeighborSet, query: Point, k: &KernelParams, jitter: f64) -> Result<GpPrediction> {
    Ok(ConditionedGp::new(ns, k, jitter)?.predict(query))
}

/// Default diagonal jitter for a kernel.
pub fn default_jitter(k: &KernelParams) -> f64 {
    1e-9 * k.amplitude
}

/// Grid cell center for flat cell index `cell = iy * 11 + ix`.
pub fn grid_point(cell: usize) -> Point {
    let iy = cell / GRID_SIDE;
    let ix = cell % GRID_SIDE;
    [
        -GRID_EXTENT + GRID_SPACING * ix as f64,
        -GRID_EXTENT + GRID_SPACING * iy as f64,
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    /// Predictive means, flattened as documented at module level.
    pub mean: Vec<f64>,
    /// Predictive variances, same layout.
    pub variance: Vec<f64>,
}

impl VelocityField {
    pub fn zeros() -> Self {
        Self {
            mean: vec![0.0; FIELD_LEN],
            variance: vec![0.0; FIELD_LEN],
        }
    }

    #[inline]
    pub fn index(ix: usize, iy: usize, axis: usize) -> usize {
        (iy * GRID_SIDE + ix) * 2 + axis
    }

    pub fn mean_at(&self, ix: usize, iy: usize) -> Point {
        [self.mean[Self::index(ix, iy, 0)], self.mean[Self::index(ix, iy, 1)]]
    }
}

pub fn grid_field(ns: &NeighborSet, k: &KernelParams) -> Result<VelocityField> {
    let gp = ConditionedGp::new(ns, k, default_jitter(k))?;
    let mut field = VelocityField::zeros();
    for cell in 0..GRID_SIDE * GRID_SIDE {
        let p = gp.predict(grid_point(cell));
        for axis in 0..2 {
            field.mean[cell * 2 + axis] = p.mean[axis];
            field.variance[cell * 2 + axis] = p.variance[axis];
        }
    }
    Ok(field)
}

/// Field for one ego vehicle at one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EgoFrameField {
    pub track_id: TrackId,
    pub frame: u32,
    pub neighbors: usize,
    pub field: VelocityField,
}

/// Computes fields for every sample of `tracks[ego]`. Heading falls back
/// to the last valid heading (initially +x) while the ego is nearly stopped.
pub fn ego_fields(
    tracks: &[Track],
    ego: usize,
    index: &FrameIndex,
    k: &KernelParams,
    radius: f64,
) -> Result<Vec<EgoFrameField>> {
    let ego_track = &tracks[ego];
    let mut heading = 0.0;
    let mut out = Vec::with_capacity(ego_track.len());
    for s in &ego_track.samples {
        heading = heading_or(s.velocity, heading);
        let others: Vec<TrackSample> = index
            .at(s.frame)
            .iter()
            .filter(|&&(ti, _)| ti != ego)
            .map(|&(ti, si)| tracks[ti].samples[si])
            .collect();
        let ns = to_ego_frame(s, heading, &others, radius);
        out.push(EgoFrameField {
            track_id: ego_track.id,
            frame: s.frame,
            neighbors: ns.len(),
            field: grid_field(&ns, k)?,
        });
    }
    Ok(out)
}

/// Frame -> (track index, sample index) lookup.
#[derive(Debug, Clone, Default)]
pub struct FrameIndex {
    by_frame: BTreeMap<u32, Vec<(usize, usize)>>,
}

impl FrameIndex {
    pub fn new(tracks: &[Track]) -> Self {
        let mut by_frame: BTreeMap<u32, Vec<(usize, usize)>> = BTreeMap::new();
        for (ti, t) in tracks.iter().enumerate() {
            for (si, s) in t.samples.iter().enumerate() {
                by_frame.entry(s.frame).or_default().push((ti, si));
            }
        }
        Self { by_frame }
    }

    pub fn at(&self, frame: u32) -> &[(usize, usize)] {
        self.by_frame.get(&frame).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Appends records of `fields.bin`: track id (u32), frame (u32), then the
/// 242 means as little-endian f64.
pub fn write_field_records<W: Write>(mut sink: W, records: &[EgoFrameField]) -> Result<()> {
    for r in records {
        sink.write_all(&r.track_id.to_le_bytes())?;
        sink.write_all(&r.frame.to_le_bytes())?;
        for v in &r.field.mean {
            sink.write_all(&v.to_le_bytes())?;
        }
    }
    sink.flush()?;
    Ok(())
}

pub const FIELD_RECORD_BYTES: usize = 8 + FIELD_LEN * 8;

/// Reads `fields.bin` back as (track id, frame, means).
pub fn read_field_records<R: Read>(mut source: R) -> Result<Vec<(TrackId, u32, Vec<f64>)>> {
    let mut buf = Vec::new();
    source.read_to_end(&mut buf)?;
    if buf.len() % FIELD_RECORD_BYTES != 0 {
        return Err(Error::InvalidInput(format!(
            "fields.bin length {} is not a multiple of {}",
            buf.len(),
            FIELD_RECORD_BYTES
        )));
    }
    Ok(buf
        .chunks_exact(FIELD_RECORD_BYTES)
        .map(|rec| {
            let id = u32::from_le_bytes(rec[0..4].try_into().unwrap());
            let frame = u32::from_le_bytes(rec[4..8].try_into().unwrap());
            let mean = rec[8..]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            (id, frame, mean)
        })
        .collect())
}
