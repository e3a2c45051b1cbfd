//! Visibility classification: crop panoramas to their zoom boxes, score the
//! crops with a pluggable [`Detector`], threshold the scores and compare the
//! verdicts with ground truth.
//!
//! Detectors are either in-process (the voxel [`OracleDetector`]) or run out
//! of process and hand their scores back as detection JSONL, replayed here by
//! [`ReplayDetector`].

use std::collections::{BTreeMap, HashMap};

use image::{ImageBuffer, Pixel};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{self, GeometryOptions, Landmark, PanoramaMeta, ViewGeometry, ZoomBox};
use crate::metrics::{self, ConfusionMatrix, GroundTruth};
use crate::voxel::{self, LosOptions, VoxelGrid};

/// Suggested starting threshold; the operating point is always a required input.
pub const SUGGESTED_TAU: f64 = 0.5;

/// One (panorama, landmark) verdict. Field order is the JSONL wire order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub pano_id: String,
    pub landmark_id: String,
    pub score: f64,
    pub visible: bool,
    pub tau: f64,
    #[serde(rename = "box")]
    pub zoom: ZoomBox,
    pub d_m: f64,
    pub delta_alpha_deg: f64,
    pub detector_id: String,
    /// Set by out-of-process detectors that could not score the crop.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl DetectionRecord {
    pub fn validate(&self) -> Result<()> {
        let unit = 0.0..=1.0;
        if !unit.contains(&self.score) || !unit.contains(&self.tau) {
            return Err(Error::invalid(format!(
                "record {}/{}: score {} and tau {} must lie in [0, 1]",
                self.pano_id, self.landmark_id, self.score, self.tau
            )));
        }
        if self.visible != (self.score >= self.tau) {
            return Err(Error::invalid(format!(
                "record {}/{}: visible flag disagrees with score >= tau",
                self.pano_id, self.landmark_id
            )));
        }
        if !(self.d_m >= 0.0) {
            return Err(Error::invalid(format!(
                "record {}/{}: negative distance",
                self.pano_id, self.landmark_id
            )));
        }
        Ok(())
    }

    #[cfg(test)]
    pub(crate) fn for_test(pano: &str, landmark: &str, d: f64, score: f64) -> Self {
        Self {
            pano_id: pano.into(),
            landmark_id: landmark.into(),
            score,
            visible: score >= 0.5,
            tau: 0.5,
            zoom: geo::zoom_box(10.0, 10.0, 64, 32, 0.0).unwrap(),
            d_m: d,
            delta_alpha_deg: 0.0,
            detector_id: "test".into(),
            error: None,
        }
    }
}

/// Where and how to look for one landmark in one panorama. Written as
/// crop-spec JSONL for out-of-process detectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropSpec {
    pub pano_id: String,
    pub landmark_id: String,
    pub query_image_ref: String,
    pub width: u32,
    pub height: u32,
    pub d_m: f64,
    pub azimuth_deg: f64,
    pub delta_alpha_deg: f64,
    pub x_pix: f64,
    pub elevation_deg: f64,
    pub h_pix: f64,
    #[serde(rename = "box")]
    pub zoom: ZoomBox,
}

/// A pair that could not be localized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub pano_id: String,
    pub landmark_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizeOptions {
    pub padding: f64,
    pub observer_height: f64,
    /// Panoramas farther than this from a landmark are not candidates.
    pub buffer_radius: Option<f64>,
}

impl Default for LocalizeOptions {
    fn default() -> Self {
        Self {
            padding: 0.0,
            observer_height: 0.0,
            buffer_radius: None,
        }
    }
}

/// Geometry and zoom box of one (panorama, landmark) pair.
pub fn localize_pair(pano: &PanoramaMeta, landmark: &Landmark, opts: &LocalizeOptions) -> Result<CropSpec> {
    let g: ViewGeometry = geo::view_geometry_with(
        pano,
        landmark,
        &GeometryOptions {
            observer_height: opts.observer_height,
        },
    )?;
    let zoom = geo::zoom_box(g.x_pix, g.h_pix, pano.width, pano.height, opts.padding)?;
    Ok(CropSpec {
        pano_id: pano.pano_id.clone(),
        landmark_id: landmark.landmark_id.clone(),
        query_image_ref: landmark.query_image_ref.clone(),
        width: pano.width,
        height: pano.height,
        d_m: g.distance,
        azimuth_deg: g.azimuth,
        delta_alpha_deg: g.relative_bearing,
        x_pix: g.x_pix,
        elevation_deg: g.elevation,
        h_pix: g.h_pix,
        zoom,
    })
}

/// Crop specs for every candidate pair, ordered by `(pano_id, landmark_id)`.
pub fn localize(panos: &[PanoramaMeta], landmarks: &[Landmark], opts: &LocalizeOptions) -> (Vec<CropSpec>, Vec<Skipped>) {
    let mut specs = Vec::new();
    let mut skipped = Vec::new();
    for pano in panos {
        for lm in landmarks {
            let d = pano.location.distance_to(&lm.location);
            if opts.buffer_radius.is_some_and(|r| d > r) {
                continue;
            }
            match localize_pair(pano, lm, opts) {
                Ok(spec) => specs.push(spec),
                Err(e) => skipped.push(Skipped {
                    pano_id: pano.pano_id.clone(),
                    landmark_id: lm.landmark_id.clone(),
                    reason: e.to_string(),
                }),
            }
        }
    }
    specs.sort_by(|a, b| (&a.pano_id, &a.landmark_id).cmp(&(&b.pano_id, &b.landmark_id)));
    skipped.sort_by(|a, b| (&a.pano_id, &a.landmark_id).cmp(&(&b.pano_id, &b.landmark_id)));
    (specs, skipped)
}

/// Cuts the zoom box out of a panorama. Bounds are rounded half away from
/// zero; a wrapped box is stitched as `[x_left, W)` then `[0, x_right)`.
pub fn crop<P: Pixel>(
    image: &ImageBuffer<P, Vec<P::Subpixel>>,
    pano: &PanoramaMeta,
    zoom: &ZoomBox,
) -> Result<ImageBuffer<P, Vec<P::Subpixel>>> {
    if image.dimensions() != (pano.width, pano.height) {
        return Err(Error::invalid(format!(
            "image is {:?} but pano {} declares {}x{}",
            image.dimensions(),
            pano.pano_id,
            pano.width,
            pano.height
        )));
    }
    let (w, h) = (pano.width, pano.height);
    let round_to = |v: f64, max: u32| (v.round().max(0.0) as u32).min(max);
    let x0 = round_to(zoom.x_left, w);
    let x1 = round_to(zoom.x_right, w);
    let y0 = round_to(zoom.y_top, h);
    let y1 = round_to(zoom.y_bottom, h).max(y0);

    let columns: Vec<u32> = if zoom.wrapped {
        (x0..w).chain(0..x1).collect()
    } else {
        (x0..x1.max(x0)).collect()
    };
    let mut out = ImageBuffer::new(columns.len() as u32, y1 - y0);
    for (ox, &sx) in columns.iter().enumerate() {
        for oy in 0..(y1 - y0) {
            out.put_pixel(ox as u32, oy, *image.get_pixel(sx, y0 + oy));
        }
    }
    Ok(out)
}

/// Inputs handed to a detector for one pair.
#[derive(Debug, Clone, Copy)]
pub struct DetectionRequest<'a> {
    pub pano: &'a PanoramaMeta,
    pub landmark: &'a Landmark,
    pub spec: &'a CropSpec,
}

/// Scores the presence of a landmark in a zoomed crop. Implementations must
/// be deterministic for fixed inputs. `Ok(None)` marks a pair the detector
/// could not score; it is reported as skipped.
pub trait Detector: Sync {
    fn detector_id(&self) -> &str;
    fn score(&self, request: &DetectionRequest<'_>) -> Result<Option<f64>>;
}

/// `landmark_id -> query_image_ref`.
pub fn query_registry(landmarks: &[Landmark]) -> BTreeMap<String, String> {
    landmarks
        .iter()
        .map(|l| (l.landmark_id.clone(), l.query_image_ref.clone()))
        .collect()
}

/// Synthetic ground truth: score 1 when the voxel scene gives the landmark a
/// clear sight line from the panorama location, else 0.
pub struct OracleDetector<'g> {
    grid: &'g VoxelGrid,
    opts: LosOptions,
}

impl<'g> OracleDetector<'g> {
    pub const ID: &'static str = "oracle-voxel";

    pub fn new(grid: &'g VoxelGrid, opts: LosOptions) -> Self {
        Self { grid, opts }
    }
}

impl Detector for OracleDetector<'_> {
    fn detector_id(&self) -> &str {
        Self::ID
    }

    fn score(&self, req: &DetectionRequest<'_>) -> Result<Option<f64>> {
        let seen = voxel::landmark_visible_3d(self.grid, req.pano.location, req.landmark, &self.opts)?;
        Ok(Some(if seen { 1.0 } else { 0.0 }))
    }
}

/// Replays scores produced out of process (detection JSONL).
#[derive(Debug, Clone)]
pub struct ReplayDetector {
    id: String,
    scores: HashMap<(String, String), Option<f64>>,
}

impl ReplayDetector {
    pub fn from_records(records: &[DetectionRecord]) -> Result<Self> {
        let id = records
            .first()
            .map(|r| r.detector_id.clone())
            .unwrap_or_else(|| "replay".into());
        let mut scores = HashMap::new();
        for r in records {
            if r.detector_id != id {
                return Err(Error::invalid(format!(
                    "mixed detector ids in replay input: {id} and {}",
                    r.detector_id
                )));
            }
            let key = (r.pano_id.clone(), r.landmark_id.clone());
            if r.error.is_some() {
                scores.insert(key, None);
                continue;
            }
            if !(0.0..=1.0).contains(&r.score) {
                return Err(Error::invalid(format!(
                    "score {} for {}/{} outside [0, 1]",
                    r.score, r.pano_id, r.landmark_id
                )));
            }
            scores.insert(key, Some(r.score));
        }
        Ok(Self { id, scores })
    }
}

impl Detector for ReplayDetector {
    fn detector_id(&self) -> &str {
        &self.id
    }

    fn score(&self, req: &DetectionRequest<'_>) -> Result<Option<f64>> {
        self.scores
            .get(&(req.pano.pano_id.clone(), req.landmark.landmark_id.clone()))
            .copied()
            .ok_or_else(|| {
                Error::invalid(format!(
                    "detector output has no score for pano {} / landmark {}",
                    req.pano.pano_id, req.landmark.landmark_id
                ))
            })
    }
}

/// A scored crop before thresholding.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCrop {
    pub spec: CropSpec,
    pub score: f64,
    pub detector_id: String,
}

/// Thresholds scores into verdicts: visible iff `score >= tau`.
pub fn classify(scored: Vec<ScoredCrop>, tau: f64) -> Result<Vec<DetectionRecord>> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::invalid(format!("tau {tau} outside [0, 1]")));
    }
    scored
        .into_iter()
        .map(|s| {
            if !(0.0..=1.0).contains(&s.score) {
                return Err(Error::invalid(format!(
                    "score {} for {}/{} outside [0, 1]",
                    s.score, s.spec.pano_id, s.spec.landmark_id
                )));
            }
            Ok(DetectionRecord {
                visible: s.score >= tau,
                score: s.score,
                tau,
                zoom: s.spec.zoom,
                d_m: s.spec.d_m,
                delta_alpha_deg: s.spec.delta_alpha_deg,
                detector_id: s.detector_id,
                error: None,
                pano_id: s.spec.pano_id,
                landmark_id: s.spec.landmark_id,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRun {
    pub records: Vec<DetectionRecord>,
    pub skipped: Vec<Skipped>,
}

/// Localize every candidate pair, score it with `detector` in parallel and
/// threshold at `tau`. Output order is `(pano_id, landmark_id)`.
pub fn run_detection(
    panos: &[PanoramaMeta],
    landmarks: &[Landmark],
    detector: &dyn Detector,
    tau: f64,
    opts: &LocalizeOptions,
) -> Result<DetectionRun> {
    let (specs, skipped) = localize(panos, landmarks, opts);
    score_specs(specs, skipped, panos, landmarks, detector, tau)
}

/// Scores already localized pairs; `skipped` is extended with pairs the
/// detector could not score.
pub fn score_specs(
    specs: Vec<CropSpec>,
    mut skipped: Vec<Skipped>,
    panos: &[PanoramaMeta],
    landmarks: &[Landmark],
    detector: &dyn Detector,
    tau: f64,
) -> Result<DetectionRun> {
    let pano_by_id: HashMap<&str, &PanoramaMeta> = panos.iter().map(|p| (p.pano_id.as_str(), p)).collect();
    let lm_by_id: HashMap<&str, &Landmark> = landmarks.iter().map(|l| (l.landmark_id.as_str(), l)).collect();
    let scored = specs
        .into_par_iter()
        .map(|spec| {
            let req = DetectionRequest {
                pano: pano_by_id
                    .get(spec.pano_id.as_str())
                    .ok_or_else(|| Error::invalid(format!("crop spec references unknown pano {:?}", spec.pano_id)))?,
                landmark: lm_by_id
                    .get(spec.landmark_id.as_str())
                    .ok_or_else(|| Error::invalid(format!("crop spec references unknown landmark {:?}", spec.landmark_id)))?,
                spec: &spec,
            };
            let score = detector.score(&req)?;
            Ok(match score {
                Some(score) => Ok(ScoredCrop {
                    spec,
                    score,
                    detector_id: detector.detector_id().to_owned(),
                }),
                None => Err(Skipped {
                    pano_id: spec.pano_id,
                    landmark_id: spec.landmark_id,
                    reason: format!("detector {} could not score the crop", detector.detector_id()),
                }),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ok = Vec::with_capacity(scored.len());
    for s in scored {
        match s {
            Ok(s) => ok.push(s),
            Err(skip) => skipped.push(skip),
        }
    }
    skipped.sort_by(|a, b| (&a.pano_id, &a.landmark_id).cmp(&(&b.pano_id, &b.landmark_id)));
    Ok(DetectionRun {
        records: classify(ok, tau)?,
        skipped,
    })
}

/// Confusion matrix of predictions against labels; a missing label is an
/// error naming the pano.
pub fn validate(predictions: &[DetectionRecord], labels: &GroundTruth) -> Result<ConfusionMatrix> {
    metrics::confusion(predictions, labels)
}
