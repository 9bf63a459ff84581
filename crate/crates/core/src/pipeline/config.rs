//! TOML run configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autoenc::{Activation, MlpSpec, TrainConfig};
use crate::error::{Error, Result};
use crate::field::KernelParams;
use crate::ingest::{FilterConfig, Homography, Point, RoiPolygon};
use crate::segmenter::HdpHsmmConfig;
use crate::tracker::TrackerConfig;

/// Environment variable that replaces `paths.output_dir`.
pub const OUTPUT_DIR_ENV: &str = "TP_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Track,
    Field,
    Encode,
    Segment,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Ingest,
        Stage::Track,
        Stage::Field,
        Stage::Encode,
        Stage::Segment,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Track => "track",
            Stage::Field => "field",
            Stage::Encode => "encode",
            Stage::Segment => "segment",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    /// Input `detections.csv`, pixel coordinates.
    #[serde(default = "default_detections")]
    pub detections: PathBuf,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Optional feature matrix for the segment stage, bypassing the
    /// earlier stages.
    #[serde(default)]
    pub features: Option<PathBuf>,
}

fn default_detections() -> PathBuf {
    PathBuf::from("detections.csv")
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            detections: default_detections(),
            output_dir: default_output_dir(),
            features: None,
        }
    }
}

/// Four pixel points and the ground-plane points (meters) they map to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomographySection {
    pub src: [Point; 4],
    pub dst: [Point; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    /// Screen area in square pixels, used by the box-size filter.
    pub screen_area: f64,
    pub filter: FilterConfig,
    /// Pixel to ground-plane mapping; identity when absent.
    pub homography: Option<HomographySection>,
    /// Region of interest in ground-plane coordinates.
    pub roi: Option<Vec<Point>>,
}

impl Default for IngestSection {
    fn default() -> Self {
        Self {
            screen_area: 1920.0 * 1080.0,
            filter: FilterConfig::default(),
            homography: None,
            roi: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldSection {
    pub kernel: KernelParams,
    /// Perception radius around the ego vehicle, meters.
    pub radius: f64,
    /// Tracks with fewer samples are not used as ego vehicles.
    pub min_track_len: usize,
}

impl Default for FieldSection {
    fn default() -> Self {
        Self {
            kernel: KernelParams::INTERSECTION,
            radius: 10.0,
            min_track_len: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoencoderSection {
    /// Full symmetric width list, input first.
    pub widths: Vec<usize>,
    pub step_size: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for AutoencoderSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            widths: MlpSpec::velocity_field().widths,
            step_size: t.step_size,
            epochs: t.epochs,
            batch_size: t.batch_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seeds autoencoder training and the Gibbs sampler.
    pub seed: u64,
    pub paths: PathsSection,
    pub ingest: IngestSection,
    pub tracker: TrackerConfig,
    pub field: FieldSection,
    pub autoencoder: AutoencoderSection,
    pub segmenter: HdpHsmmConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.detections);
        fix(&mut self.paths.output_dir);
        if let Some(f) = self.paths.features.as_mut() {
            fix(f);
        }
    }

    /// Applies the output-dir environment override and a seed override.
    pub fn apply_overrides(&mut self, output_env: Option<PathBuf>, seed: Option<u64>) {
        if let Some(dir) = output_env.filter(|d| !d.as_os_str().is_empty()) {
            self.paths.output_dir = dir;
        }
        if let Some(s) = seed {
            self.seed = s;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ingest.screen_area > 0.0) {
            return Err(Error::Config("ingest.screen_area must be > 0".into()));
        }
        self.ingest.filter.validate()?;
        self.homography()?;
        self.roi()?;
        self.tracker.validate()?;
        self.field.kernel.validate()?;
        if !(self.field.radius > 0.0) {
            return Err(Error::Config("field.radius must be > 0".into()));
        }
        if self.field.min_track_len < 2 {
            return Err(Error::Config("field.min_track_len must be >= 2".into()));
        }
        let spec = self.mlp_spec()?;
        if spec.input_dim() != crate::field::FIELD_LEN {
            return Err(Error::Config(format!(
                "autoencoder input width must be {}",
                crate::field::FIELD_LEN
            )));
        }
        self.train_config().validate()?;
        self.segmenter_config().validate(spec.latent_dim() + 2)?;
        Ok(())
    }

    pub fn homography(&self) -> Result<Homography> {
        match &self.ingest.homography {
            None => Ok(Homography::identity()),
            Some(h) => Homography::from_correspondences(&h.src, &h.dst)
                .map_err(|e| Error::Config(format!("ingest.homography: {e}"))),
        }
    }

    pub fn roi(&self) -> Result<Option<RoiPolygon>> {
        self.ingest
            .roi
            .clone()
            .map(|v| RoiPolygon::new(v).map_err(|e| Error::Config(format!("ingest.roi: {e}"))))
            .transpose()
    }

    pub fn mlp_spec(&self) -> Result<MlpSpec> {
        let spec = MlpSpec {
            widths: self.autoencoder.widths.clone(),
            hidden_activation: Activation::Tanh,
            output_activation: Activation::Identity,
        };
        spec.validate()
            .map_err(|e| Error::Config(format!("autoencoder: {e}")))?;
        Ok(spec)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            step_size: self.autoencoder.step_size,
            epochs: self.autoencoder.epochs,
            batch_size: self.autoencoder.batch_size,
            seed: self.seed,
        }
    }

    pub fn segmenter_config(&self) -> HdpHsmmConfig {
        HdpHsmmConfig {
            seed: self.seed,
            ..self.segmenter.clone()
        }
    }
}
