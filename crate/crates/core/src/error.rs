use std::io;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("degenerate homography input")]
    DegenerateHomography,

    #[error("point at infinity")]
    PointAtInfinity,

    #[error("singular kernel matrix")]
    SingularKernel,

    #[error("numeric overflow")]
    NumericOverflow,

    #[error("training diverged at epoch {epoch}; try a smaller step size")]
    TrainingDiverged { epoch: usize },

    #[error("zero likelihood path at frame {frame}{}", context_suffix(.sweep, .sequence))]
    ZeroLikelihood {
        frame: usize,
        sweep: Option<usize>,
        sequence: Option<usize>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("bad model file: {0}")]
    BadModelFile(String),
}

fn context_suffix(sweep: &Option<usize>, sequence: &Option<usize>) -> String {
    let mut s = String::new();
    if let Some(sw) = sweep {
        s.push_str(&format!(" (sweep {sw}"));
        if let Some(q) = sequence {
            s.push_str(&format!(", sequence {q}"));
        }
        s.push(')');
    } else if let Some(q) = sequence {
        s.push_str(&format!(" (sequence {q})"));
    }
    s
}

pub type Result<T> = std::result::Result<T, Error>;
