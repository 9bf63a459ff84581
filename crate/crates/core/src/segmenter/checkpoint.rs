//! Versioned binary snapshot of a sampler state.
//!
//! Layout (little-endian): magic `TPHS`, version u32, `L` u32, `dim` u32,
//! sweeps completed u64, alpha f64, gamma f64, beta `L x f64`, trans
//! `L*L x f64`, covariances `L*dim*dim x f64` row-major, duration rates
//! `L x f64`, then augmented/table counts `L*L x u64` each, init counts
//! `L x u64`, sequence count u32 and per sequence a segment count u32
//! followed by `(state u32, start u64, duration u64)` triples.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

use super::{no_self_transitions, ModelState, Segment, TransitionCounts};

const MAGIC: &[u8; 4] = b"TPHS";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub sweeps_done: usize,
    pub state: ModelState,
}

pub fn write_checkpoint<W: Write>(mut w: W, state: &ModelState, sweeps_done: usize) -> Result<()> {
    let l = state.num_states();
    let dim = state.dim();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(l as u32).to_le_bytes())?;
    w.write_all(&(dim as u32).to_le_bytes())?;
    w.write_all(&(sweeps_done as u64).to_le_bytes())?;
    let mut put = |v: f64| w.write_all(&v.to_le_bytes());
    put(state.alpha)?;
    put(state.gamma)?;
    for &v in state.beta.iter().chain(&state.trans) {
        put(v)?;
    }
    for c in &state.covariances {
        for i in 0..dim {
            for j in 0..dim {
                put(c[(i, j)])?;
            }
        }
    }
    for &v in &state.dur_rates {
        put(v)?;
    }
    let counts = &state.counts;
    let zeros_ll = vec![0u64; l * l];
    let zeros_l = vec![0u64; l];
    let aug = if counts.augmented.len() == l * l {
        &counts.augmented
    } else {
        &zeros_ll
    };
    let tab = if counts.tables.len() == l * l {
        &counts.tables
    } else {
        &zeros_ll
    };
    let ini = if counts.init.len() == l { &counts.init } else { &zeros_l };
    for &c in aug.iter().chain(tab).chain(ini) {
        w.write_all(&c.to_le_bytes())?;
    }
    w.write_all(&(state.segments.len() as u32).to_le_bytes())?;
    for segs in &state.segments {
        w.write_all(&(segs.len() as u32).to_le_bytes())?;
        for s in segs {
            w.write_all(&(s.state as u32).to_le_bytes())?;
            w.write_all(&(s.start as u64).to_le_bytes())?;
            w.write_all(&(s.duration as u64).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn u32_from<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn u64_from<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn f64_from<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(u64_from(r)?))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::BadModelFile("missing TPHS magic".into()));
    }
    let version = u32_from(&mut r)?;
    if version != VERSION {
        return Err(Error::BadModelFile(format!("unsupported checkpoint version {version}")));
    }
    let l = u32_from(&mut r)? as usize;
    let dim = u32_from(&mut r)? as usize;
    if l == 0 || l > 4096 || dim == 0 || dim > 4096 {
        return Err(Error::BadModelFile("implausible checkpoint dimensions".into()));
    }
    let sweeps_done = u64_from(&mut r)? as usize;
    let alpha = f64_from(&mut r)?;
    let gamma = f64_from(&mut r)?;
    let beta = (0..l).map(|_| f64_from(&mut r)).collect::<Result<Vec<_>>>()?;
    let trans = (0..l * l).map(|_| f64_from(&mut r)).collect::<Result<Vec<_>>>()?;
    let mut covariances = Vec::with_capacity(l);
    for _ in 0..l {
        let vals = (0..dim * dim).map(|_| f64_from(&mut r)).collect::<Result<Vec<_>>>()?;
        covariances.push(DMatrix::from_row_slice(dim, dim, &vals));
    }
    let dur_rates = (0..l).map(|_| f64_from(&mut r)).collect::<Result<Vec<_>>>()?;
    let augmented = (0..l * l).map(|_| u64_from(&mut r)).collect::<Result<Vec<_>>>()?;
    let tables = (0..l * l).map(|_| u64_from(&mut r)).collect::<Result<Vec<_>>>()?;
    let init = (0..l).map(|_| u64_from(&mut r)).collect::<Result<Vec<_>>>()?;
    let nseq = u32_from(&mut r)? as usize;
    let mut segments = Vec::with_capacity(nseq);
    for _ in 0..nseq {
        let n = u32_from(&mut r)? as usize;
        let mut segs = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let state = u32_from(&mut r)? as usize;
            let start = u64_from(&mut r)? as usize;
            let duration = u64_from(&mut r)? as usize;
            if state >= l || duration == 0 {
                return Err(Error::BadModelFile("invalid segment in checkpoint".into()));
            }
            segs.push(Segment { state, start, duration });
        }
        segments.push(segs);
    }
    Ok(Checkpoint {
        sweeps_done,
        state: ModelState {
            alpha,
            gamma,
            trans_ns: no_self_transitions(&trans, l),
            beta,
            trans,
            covariances,
            dur_rates,
            segments,
            counts: TransitionCounts {
                augmented,
                tables,
                init,
            },
        },
    })
}
