//! Evaluation: confusion-matrix scores (overall and per distance band),
//! Dice overlap of two spatial distributions, and cumulative distance curves.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::detect::DetectionRecord;
use crate::error::{Error, Result};
use crate::geo::Point2;

/// Binary confusion matrix; the positive class is "visible".
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        Self { tp, fp, tn, fn_ }
    }

    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn support_visible(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn support_invisible(&self) -> u64 {
        self.tn + self.fp
    }
}

impl std::ops::AddAssign for ConfusionMatrix {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.tn += o.tn;
        self.fn_ += o.fn_;
    }
}

/// Per-class scores. `None` marks an undefined ratio (zero denominator).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroScores {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub accuracy: f64,
    pub visible: ClassScores,
    pub invisible: ClassScores,
    #[serde(rename = "macro")]
    pub macro_avg: MacroScores,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn class_scores(tp: u64, fp: u64, fn_: u64) -> ClassScores {
    ClassScores {
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        f1: ratio(2 * tp, 2 * tp + fp + fn_),
        support: tp + fn_,
    }
}

fn mean2(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some((a? + b?) / 2.0)
}

pub fn scores(cm: &ConfusionMatrix) -> Result<Scores> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::invalid("confusion matrix is empty"));
    }
    let visible = class_scores(cm.tp, cm.fp, cm.fn_);
    // the invisible class treats tn as its true positives
    let invisible = class_scores(cm.tn, cm.fn_, cm.fp);
    Ok(Scores {
        accuracy: (cm.tp + cm.tn) as f64 / total as f64,
        macro_avg: MacroScores {
            precision: mean2(visible.precision, invisible.precision),
            recall: mean2(visible.recall, invisible.recall),
            f1: mean2(visible.f1, invisible.f1),
        },
        visible,
        invisible,
    })
}

/// Half-open distance interval `[lower, upper)`; `upper` may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceBand {
    pub lower: f64,
    #[serde(with = "inf_as_null")]
    pub upper: f64,
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_none()
        } else {
            s.serialize_some(v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl DistanceBand {
    pub fn contains(&self, d: f64) -> bool {
        self.lower <= d && d < self.upper
    }

    pub fn label(&self) -> String {
        if self.upper.is_infinite() {
            format!("{}+", self.lower)
        } else {
            format!("{}-{}", self.lower, self.upper)
        }
    }
}

/// Bands from ascending edges, the last band open-ended: `[0, 500, 1000]`
/// gives `[0,500) [500,1000) [1000,inf)`.
pub fn bands_from_edges(edges: &[f64]) -> Result<Vec<DistanceBand>> {
    let mut bands: Vec<DistanceBand> = edges
        .windows(2)
        .map(|w| DistanceBand { lower: w[0], upper: w[1] })
        .collect();
    if let Some(&last) = edges.last() {
        bands.push(DistanceBand {
            lower: last,
            upper: f64::INFINITY,
        });
    }
    validate_bands(&bands)?;
    Ok(bands)
}

pub fn default_bands() -> Vec<DistanceBand> {
    bands_from_edges(&[0.0, 500.0, 1000.0, 1500.0]).expect("default bands are valid")
}

/// Checks that `bands` partition `[0, inf)` in ascending order.
pub fn validate_bands(bands: &[DistanceBand]) -> Result<()> {
    let first = bands.first().ok_or_else(|| Error::invalid("no distance bands"))?;
    if first.lower != 0.0 {
        return Err(Error::invalid("distance bands must start at 0"));
    }
    for w in bands.windows(2) {
        if w[0].upper != w[1].lower {
            return Err(Error::invalid(format!(
                "distance bands {} and {} are not contiguous",
                w[0].label(),
                w[1].label()
            )));
        }
    }
    if bands.iter().any(|b| !(b.lower < b.upper)) {
        return Err(Error::invalid("each distance band needs lower < upper"));
    }
    if bands.last().is_some_and(|b| b.upper.is_finite()) {
        return Err(Error::invalid("last distance band must be open-ended"));
    }
    Ok(())
}

/// Ground-truth labels keyed by `(pano_id, landmark_id)`. A label stored
/// with an empty landmark id applies to every landmark of that pano.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    labels: HashMap<(String, String), bool>,
}

impl GroundTruth {
    pub fn insert(&mut self, pano_id: impl Into<String>, landmark_id: impl Into<String>, visible: bool) -> Option<bool> {
        self.labels.insert((pano_id.into(), landmark_id.into()), visible)
    }

    pub fn get(&self, pano_id: &str, landmark_id: &str) -> Option<bool> {
        self.labels
            .get(&(pano_id.to_owned(), landmark_id.to_owned()))
            .or_else(|| self.labels.get(&(pano_id.to_owned(), String::new())))
            .copied()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn label_for(&self, r: &DetectionRecord) -> Result<bool> {
        self.get(&r.pano_id, &r.landmark_id).ok_or_else(|| {
            Error::invalid(format!(
                "no ground-truth label for pano {} (landmark {})",
                r.pano_id, r.landmark_id
            ))
        })
    }
}

/// Confusion matrix of `records` against `labels`.
pub fn confusion(records: &[DetectionRecord], labels: &GroundTruth) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::default();
    for r in records {
        cm.record(r.visible, labels.label_for(r)?);
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandReport {
    pub band: DistanceBand,
    pub matrix: ConfusionMatrix,
    /// `None` when the band holds no records.
    pub scores: Option<Scores>,
}

pub fn band_scores(records: &[DetectionRecord], labels: &GroundTruth, bands: &[DistanceBand]) -> Result<Vec<BandReport>> {
    validate_bands(bands)?;
    let mut matrices = vec![ConfusionMatrix::default(); bands.len()];
    for r in records {
        if !(r.d_m >= 0.0) {
            return Err(Error::invalid(format!(
                "record {}/{} has negative distance {}",
                r.pano_id, r.landmark_id, r.d_m
            )));
        }
        let actual = labels.label_for(r)?;
        let k = bands
            .iter()
            .position(|b| b.contains(r.d_m))
            .expect("validated bands cover [0, inf)");
        matrices[k].record(r.visible, actual);
    }
    Ok(bands
        .iter()
        .zip(matrices)
        .map(|(band, matrix)| BandReport {
            band: *band,
            matrix,
            scores: scores(&matrix).ok(),
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Dice overlap

/// Integer cell coordinates produced by a [`Binning`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub i: i64,
    pub j: i64,
}

/// Maps planar points to grid cells.
pub trait Binning: Sync {
    fn name(&self) -> &'static str;
    fn cell_of(&self, p: Point2) -> CellKey;

    fn cell_id(&self, key: CellKey) -> String {
        format!("{}:{}:{}", self.name(), key.i, key.j)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquareBinning {
    pub origin: Point2,
    pub size: f64,
}

impl SquareBinning {
    pub fn new(size: f64) -> Result<Self> {
        if !(size > 0.0) {
            return Err(Error::invalid(format!("bin size {size} must be positive")));
        }
        Ok(Self {
            origin: Point2::default(),
            size,
        })
    }
}

impl Binning for SquareBinning {
    fn name(&self) -> &'static str {
        "sq"
    }

    fn cell_of(&self, p: Point2) -> CellKey {
        CellKey {
            i: ((p.x - self.origin.x) / self.size).floor() as i64,
            j: ((p.y - self.origin.y) / self.size).floor() as i64,
        }
    }
}

/// Pointy-top hexagons in axial `(q, r)` coordinates; `size` is the
/// centre-to-corner radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HexBinning {
    pub origin: Point2,
    pub size: f64,
}

impl HexBinning {
    pub fn new(size: f64) -> Result<Self> {
        if !(size > 0.0) {
            return Err(Error::invalid(format!("hex size {size} must be positive")));
        }
        Ok(Self {
            origin: Point2::default(),
            size,
        })
    }

    pub fn center(&self, key: CellKey) -> Point2 {
        let (q, r) = (key.i as f64, key.j as f64);
        Point2::new(
            self.origin.x + self.size * 3f64.sqrt() * (q + r / 2.0),
            self.origin.y + self.size * 1.5 * r,
        )
    }
}

impl Binning for HexBinning {
    fn name(&self) -> &'static str {
        "hex"
    }

    fn cell_of(&self, p: Point2) -> CellKey {
        let (x, y) = ((p.x - self.origin.x) / self.size, (p.y - self.origin.y) / self.size);
        let q = 3f64.sqrt() / 3.0 * x - y / 3.0;
        let r = 2.0 / 3.0 * y;
        // cube rounding
        let (fx, fz) = (q, r);
        let fy = -fx - fz;
        let (mut rx, ry, mut rz) = (fx.round(), fy.round(), fz.round());
        let (dx, dy, dz) = ((rx - fx).abs(), (ry - fy).abs(), (rz - fz).abs());
        if dx > dy && dx > dz {
            rx = -ry - rz;
        } else if dy <= dz {
            rz = -rx - ry;
        }
        CellKey {
            i: rx as i64,
            j: rz as i64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewpointClass {
    Tourism,
    Citizen,
}

impl ViewpointClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            ViewpointClass::Tourism => "tourism",
            ViewpointClass::Citizen => "citizen",
        }
    }
}

/// Dice threshold separating tourism from citizen viewpoints.
pub const TOURISM_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiceCell {
    pub cell_id: String,
    pub p_svi: f64,
    #[serde(rename = "p_flickr")]
    pub p_interest: f64,
    pub dice: f64,
    pub class: ViewpointClass,
}

/// `2 min(p, q) / (p + q)`, undefined when both are zero.
pub fn dice_coefficient(p: f64, q: f64) -> Option<f64> {
    let s = p + q;
    (s > 0.0).then(|| 2.0 * p.min(q) / s)
}

pub fn classify_viewpoint(dice: f64) -> ViewpointClass {
    if dice >= TOURISM_THRESHOLD {
        ViewpointClass::Tourism
    } else {
        ViewpointClass::Citizen
    }
}

/// Per-cell Dice overlap between the binned distributions of landmark-visible
/// panorama locations and interest points (e.g. geotagged photos). Cells
/// empty in both sets are omitted; output is ordered by cell key.
pub fn dice_grid(svi_points: &[Point2], interest_points: &[Point2], binning: &dyn Binning) -> Result<Vec<DiceCell>> {
    if svi_points.is_empty() || interest_points.is_empty() {
        return Err(Error::invalid("dice needs two non-empty point sets"));
    }
    let mut counts: BTreeMap<CellKey, (u64, u64)> = BTreeMap::new();
    for p in svi_points {
        counts.entry(binning.cell_of(*p)).or_default().0 += 1;
    }
    for p in interest_points {
        counts.entry(binning.cell_of(*p)).or_default().1 += 1;
    }
    let (na, nb) = (svi_points.len() as f64, interest_points.len() as f64);
    Ok(counts
        .into_iter()
        .map(|(key, (a, b))| {
            let (p_svi, p_interest) = (a as f64 / na, b as f64 / nb);
            let dice = dice_coefficient(p_svi, p_interest).expect("non-empty cell");
            DiceCell {
                cell_id: binning.cell_id(key),
                p_svi,
                p_interest,
                dice,
                class: classify_viewpoint(dice),
            }
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Cumulative distance curves

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativeCurves {
    pub distances: Vec<f64>,
    pub svi: Vec<f64>,
    pub interest: Vec<f64>,
    pub d50_svi: f64,
    pub d50_interest: f64,
    pub cosine_similarity: f64,
}

fn cumulative(sorted: &[f64], at: &[f64]) -> Vec<f64> {
    let n = sorted.len() as f64;
    at.iter()
        .map(|&s| sorted.partition_point(|&d| d <= s) as f64 / n)
        .collect()
}

fn d50(curve: &[f64], at: &[f64]) -> f64 {
    let k = curve.iter().position(|&c| c >= 0.5).expect("curve reaches 1");
    at[k]
}

/// Cumulative share of points within each multiple of `step`, for the
/// landmark-visible panoramas and the interest points.
///
/// The curves run from 0 to `radius` (rounded up to a multiple of `step`);
/// without a radius they stop at the first multiple covering every point.
/// Points beyond the radius lie outside the analysis area and are dropped.
pub fn cumulative_curves(visible: &[f64], interest: &[f64], step: f64, radius: Option<f64>) -> Result<CumulativeCurves> {
    if !(step > 0.0) {
        return Err(Error::invalid(format!("curve step {step} must be positive")));
    }
    if visible.is_empty() || interest.is_empty() {
        return Err(Error::invalid("cumulative curves need two non-empty distance sets"));
    }
    if visible.iter().chain(interest).any(|d| !(*d >= 0.0)) {
        return Err(Error::invalid("distances must be non-negative"));
    }
    let max_d = visible.iter().chain(interest).fold(0.0f64, |m, d| m.max(*d));
    let reach = radius.unwrap_or(max_d);
    let n_steps = (reach / step).ceil() as usize;
    let at: Vec<f64> = (0..=n_steps).map(|k| k as f64 * step).collect();
    let limit = *at.last().unwrap();

    let keep = |v: &[f64]| -> Result<Vec<f64>> {
        let mut kept: Vec<f64> = v.iter().copied().filter(|d| *d <= limit).collect();
        if kept.is_empty() {
            return Err(Error::invalid("no points within the analysis radius"));
        }
        kept.sort_by(f64::total_cmp);
        Ok(kept)
    };
    let (a, b) = (keep(visible)?, keep(interest)?);
    let svi = cumulative(&a, &at);
    let int = cumulative(&b, &at);

    let dot: f64 = svi.iter().zip(&int).map(|(x, y)| x * y).sum();
    let na: f64 = svi.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = int.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(CumulativeCurves {
        d50_svi: d50(&svi, &at),
        d50_interest: d50(&int, &at),
        cosine_similarity: dot / (na * nb),
        distances: at,
        svi,
        interest: int,
    })
}
