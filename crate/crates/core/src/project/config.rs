use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{TurnPolicy, WalkParams, DEFAULT_LANDMARK_RADIUS, DEFAULT_SNAP_RADIUS};
use crate::metrics::{self, Binning, DistanceBand, HexBinning, SquareBinning};
use crate::voxel::{LosOptions, DEFAULT_CELL_SIZE, DEFAULT_EYE_HEIGHT, DEFAULT_SAMPLES};

/// Project settings, read from a TOML file. Every key is optional except
/// `tau`, which has no default and must be set before detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectConfig {
    /// Name of the projected CRS all coordinates live in. `EPSG:326zz` and
    /// `EPSG:327zz` (UTM) also enable longitude/latitude inputs.
    pub crs: String,
    pub seed: u64,
    pub buffer_radius: f64,
    pub sample_interval: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    pub padding: f64,
    pub observer_height: f64,
    /// Lower band edges; the last band is open-ended.
    pub bands: Vec<f64>,
    pub voxel: VoxelConfig,
    pub graph: GraphConfig,
    pub walk: WalkConfig,
    pub binning: BinningConfig,
    pub curves: CurvesConfig,
    pub input: InputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VoxelConfig {
    pub cell_size: f64,
    pub eye_height: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub snap_radius: f64,
    pub landmark_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkConfig {
    pub rounds: u32,
    pub max_steps: u32,
    pub turn_policy: TurnPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinningScheme {
    Square,
    Hex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinningConfig {
    pub scheme: BinningScheme,
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurvesConfig {
    pub step: f64,
    /// Defaults to `buffer_radius`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    /// Treat GeoJSON road coordinates as longitude/latitude.
    pub geojson_wgs84: bool,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        Self {
            crs: "local".into(),
            seed: 0,
            buffer_radius: 3000.0,
            sample_interval: 30.0,
            tau: None,
            padding: 0.0,
            observer_height: 0.0,
            bands: vec![0.0, 500.0, 1000.0, 1500.0],
            voxel: VoxelConfig::default(),
            graph: GraphConfig::default(),
            walk: WalkConfig::default(),
            binning: BinningConfig::default(),
            curves: CurvesConfig::default(),
            input: InputConfig::default(),
        }
    }
}

impl Default for VoxelConfig {
    fn default() -> Self {
        Self {
            cell_size: DEFAULT_CELL_SIZE,
            eye_height: DEFAULT_EYE_HEIGHT,
            n_samples: DEFAULT_SAMPLES,
        }
    }
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            snap_radius: DEFAULT_SNAP_RADIUS,
            landmark_radius: DEFAULT_LANDMARK_RADIUS,
        }
    }
}

impl Default for WalkConfig {
    fn default() -> Self {
        let p = WalkParams::default();
        Self {
            rounds: p.rounds,
            max_steps: p.max_steps,
            turn_policy: p.policy,
        }
    }
}

impl Default for BinningConfig {
    fn default() -> Self {
        Self {
            scheme: BinningScheme::Square,
            size: 250.0,
        }
    }
}

impl Default for CurvesConfig {
    fn default() -> Self {
        Self { step: 50.0, radius: None }
    }
}

impl ProjectConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("buffer_radius", self.buffer_radius),
            ("sample_interval", self.sample_interval),
            ("voxel.cell_size", self.voxel.cell_size),
            ("binning.size", self.binning.size),
            ("curves.step", self.curves.step),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("config {name} = {v} must be positive")));
            }
        }
        let non_negative = [
            ("padding", self.padding),
            ("observer_height", self.observer_height),
            ("voxel.eye_height", self.voxel.eye_height),
            ("graph.snap_radius", self.graph.snap_radius),
            ("graph.landmark_radius", self.graph.landmark_radius),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("config {name} = {v} must be >= 0")));
            }
        }
        if let Some(t) = self.tau {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::invalid(format!("config tau = {t} outside [0, 1]")));
            }
        }
        if self.voxel.n_samples == 0 {
            return Err(Error::invalid("config voxel.n_samples must be >= 1"));
        }
        if self.walk.rounds == 0 {
            return Err(Error::invalid("config walk.rounds must be >= 1"));
        }
        self.distance_bands()?;
        Ok(())
    }

    /// SHA-256 over the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn distance_bands(&self) -> Result<Vec<DistanceBand>> {
        metrics::bands_from_edges(&self.bands)
    }

    pub fn los_options(&self) -> LosOptions {
        LosOptions {
            eye_height: self.voxel.eye_height,
            n_samples: self.voxel.n_samples,
            ..LosOptions::default()
        }
    }

    pub fn walk_params(&self, seed: u64) -> WalkParams {
        WalkParams {
            rounds: self.walk.rounds,
            max_steps: self.walk.max_steps,
            seed,
            policy: self.walk.turn_policy,
        }
    }

    pub fn binning(&self) -> Result<Box<dyn Binning>> {
        Ok(match self.binning.scheme {
            BinningScheme::Square => Box::new(SquareBinning::new(self.binning.size)?),
            BinningScheme::Hex => Box::new(HexBinning::new(self.binning.size)?),
        })
    }

    pub fn curve_radius(&self) -> f64 {
        self.curves.radius.unwrap_or(self.buffer_radius)
    }

    /// UTM zone and hemisphere when `crs` names a WGS84 UTM code.
    pub fn utm_zone(&self) -> Option<(u8, bool)> {
        let code: u32 = self.crs.strip_prefix("EPSG:")?.parse().ok()?;
        let (north, zone) = match code {
            32601..=32660 => (true, code - 32600),
            32701..=32760 => (false, code - 32700),
            _ => return None,
        };
        Some((zone as u8, north))
    }
}

/// Per-stage seed: first 8 bytes of SHA-256 over the project seed and the
/// stage name.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(b"/");
    h.update(stage.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}
