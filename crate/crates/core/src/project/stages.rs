use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Cursor;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::artifact::{self, Meta};
use super::config::{stage_seed, ProjectConfig};
use super::ingest::{self, Projector};
use crate::detect::{self, CropSpec, DetectionRecord, Detector, LocalizeOptions, OracleDetector, ReplayDetector, Skipped};
use crate::error::{Error, Result};
use crate::geo::{Landmark, PanoramaMeta, Point2};
use crate::graph::{self, GraphDocument, VisibilityGraph};
use crate::metrics::{self, BandReport, ConfusionMatrix, GroundTruth, Scores};
use crate::roads::RoadNetwork;
use crate::voxel::{self, AsciiGrid, Rect, SceneInputs};

/// File names inside a project directory.
pub mod names {
    pub const MANIFEST: &str = "manifest.json";
    pub const LANDMARKS: &str = "landmarks.jsonl";
    pub const PANOS: &str = "panos.jsonl";
    pub const ROADS: &str = "roads.json";
    pub const OBSERVERS: &str = "observers.csv";
    pub const CROPS: &str = "crops.jsonl";
    pub const CROPS_SKIPPED: &str = "crops_skipped.jsonl";
    pub const CROP_IMAGES: &str = "crops";
    pub const GRID: &str = "grid.vxg";
    pub const VISIBILITY_3D: &str = "visibility3d.jsonl";
    pub const DETECTIONS: &str = "detections.jsonl";
    pub const DETECTIONS_SKIPPED: &str = "detections_skipped.jsonl";
    pub const GRAPH: &str = "graph.json";
    pub const INTERVIS: &str = "intervis.csv";
    pub const INTERVIS_PAIRS: &str = "intervis_pairs.csv";
    pub const COEXIST: &str = "coexist.csv";
    pub const PATHS: &str = "vav_paths.jsonl";
    pub const LINKING: &str = "linking.csv";
    pub const LINKING_PAIRS: &str = "linking_pairs.csv";
    pub const CORRIDOR: &str = "corridor.json";
    pub const METRICS: &str = "metrics.json";
    pub const METRICS_BANDS: &str = "metrics_bands.csv";
    pub const DICE: &str = "dice.csv";
    pub const CURVES: &str = "curves.csv";
    pub const CURVES_SUMMARY: &str = "curves.json";
}

/// What a stage wrote, for the command line summary.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StageReport {
    pub stage: String,
    pub outputs: Vec<PathBuf>,
    pub notes: Vec<String>,
}

impl StageReport {
    fn new(stage: &str) -> Self {
        Self {
            stage: stage.into(),
            ..Default::default()
        }
    }

    fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }
}

pub enum RoadsInput {
    Csv { nodes: PathBuf, edges: PathBuf },
    GeoJson(PathBuf),
}

pub struct IngestInputs {
    pub landmarks: PathBuf,
    pub panos: PathBuf,
    pub roads: Option<RoadsInput>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneFiles {
    pub buildings: Option<PathBuf>,
    pub canopy: Option<PathBuf>,
    pub terrain: Option<PathBuf>,
}

pub enum DetectorChoice {
    /// Voxel line of sight from `simulate3d`.
    Oracle,
    /// Scores from an out-of-process detector's JSONL.
    Replay(PathBuf),
}

pub enum LabelSource {
    Csv(PathBuf),
    /// Use the `simulate3d` verdicts as labels.
    Simulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub crs: String,
    pub counts: ManifestCounts,
    pub unusable: Vec<UnusablePano>,
    pub warnings: Vec<String>,
    pub inputs: Vec<InputDigest>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifestCounts {
    pub landmarks: usize,
    pub panos: usize,
    pub panos_usable: usize,
    pub road_nodes: usize,
    pub road_edges: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnusablePano {
    pub pano_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

/// 3D line-of-sight verdict for one candidate pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedVisibility {
    pub pano_id: String,
    pub landmark_id: String,
    pub d_m: f64,
    pub visible: bool,
}

#[derive(Serialize, Deserialize)]
struct ObserverRow {
    landmark_id: String,
    x: f64,
    y: f64,
}

#[derive(Serialize)]
struct IntervisRow<'a> {
    observer_landmark: &'a str,
    seen_landmark: &'a str,
    weight: u64,
}

#[derive(Serialize)]
struct CoexistRow {
    landmarks: String,
    size: usize,
    count: u64,
}

#[derive(Deserialize)]
struct TagRow {
    edge_id: String,
    tag: String,
}

#[derive(Serialize)]
struct MetricsDoc<'a> {
    detector_ids: Vec<&'a str>,
    labels: &'a str,
    matrix: ConfusionMatrix,
    scores: Scores,
    bands: &'a [BandReport],
}

#[derive(Serialize)]
struct BandRow {
    band: String,
    tp: u64,
    fp: u64,
    tn: u64,
    #[serde(rename = "fn")]
    fn_: u64,
    accuracy: Option<f64>,
    precision_visible: Option<f64>,
    recall_visible: Option<f64>,
    f1_visible: Option<f64>,
    precision_invisible: Option<f64>,
    recall_invisible: Option<f64>,
    f1_invisible: Option<f64>,
}

#[derive(Serialize)]
struct CurveRow {
    distance: f64,
    svi: f64,
    interest: f64,
}

#[derive(Serialize)]
struct CurveSummary<'a> {
    landmark_id: &'a str,
    step: f64,
    radius: f64,
    visible_points: usize,
    interest_points: usize,
    d50_svi: f64,
    d50_interest: f64,
    cosine_similarity: f64,
}

/// A project directory plus the configuration every stage runs under.
pub struct Project {
    dir: PathBuf,
    config: ProjectConfig,
    hash: String,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

impl Project {
    pub fn new(dir: impl Into<PathBuf>, config: ProjectConfig) -> Result<Self> {
        config.validate()?;
        let hash = config.hash();
        Ok(Self {
            dir: dir.into(),
            config,
            hash,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn config(&self) -> &ProjectConfig {
        &self.config
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn meta(&self, stage: &str) -> Meta {
        Meta::new(stage, &self.hash)
    }

    fn require(&self, name: &str, command: &str) -> Result<PathBuf> {
        let p = self.path(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(Error::MissingPrerequisite {
                artifact: p,
                command: command.into(),
            })
        }
    }

    fn projector(&self) -> Result<Projector> {
        Projector::new(self.config.utm_zone())
    }

    fn jsonl<T: Serialize>(&self, report: &mut StageReport, name: &str, records: &[T]) -> Result<()> {
        let p = self.path(name);
        artifact::write_jsonl(&p, &self.meta(&report.stage), records)?;
        report.outputs.push(p);
        Ok(())
    }

    fn csv<T: Serialize>(&self, report: &mut StageReport, name: &str, header: &[&str], records: &[T]) -> Result<()> {
        let p = self.path(name);
        artifact::write_atomic(&p, &artifact::csv_bytes_with_header(&self.meta(&report.stage), header, records)?)?;
        report.outputs.push(p);
        Ok(())
    }

    fn json<T: Serialize>(&self, report: &mut StageReport, name: &str, value: &T) -> Result<()> {
        let p = self.path(name);
        artifact::write_json(&p, &self.meta(&report.stage), value)?;
        report.outputs.push(p);
        Ok(())
    }

    pub fn landmarks(&self) -> Result<Vec<Landmark>> {
        Ok(artifact::read_jsonl(&self.require(names::LANDMARKS, "ingest")?)?.1)
    }

    pub fn panos(&self) -> Result<Vec<PanoramaMeta>> {
        Ok(artifact::read_jsonl(&self.require(names::PANOS, "ingest")?)?.1)
    }

    pub fn roads(&self) -> Result<RoadNetwork> {
        let p = self.require(names::ROADS, "ingest (with --roads-nodes/--roads-edges or --roads-geojson)")?;
        let net: RoadNetwork = artifact::read_json(&p)?;
        net.validate()?;
        Ok(net)
    }

    pub fn detections(&self) -> Result<Vec<DetectionRecord>> {
        Ok(artifact::read_jsonl(&self.require(names::DETECTIONS, "detect")?)?.1)
    }

    pub fn graph(&self) -> Result<VisibilityGraph> {
        let doc: GraphDocument = artifact::read_json(&self.require(names::GRAPH, "graph-build")?)?;
        VisibilityGraph::from_document(doc)
    }

    fn localize_options(&self) -> LocalizeOptions {
        LocalizeOptions {
            padding: self.config.padding,
            observer_height: self.config.observer_height,
            buffer_radius: Some(self.config.buffer_radius),
        }
    }

    pub fn ingest(&self, inputs: &IngestInputs) -> Result<Manifest> {
        let mut report = StageReport::new("ingest");
        let proj = self.projector()?;
        let mut digests = vec![];
        let mut digest = |role: &str, path: &Path| -> Result<()> {
            digests.push(InputDigest {
                role: role.into(),
                path: path.to_owned(),
                sha256: sha256_file(path)?,
            });
            Ok(())
        };

        let landmarks = ingest::parse_landmarks(&artifact::read_text(&inputs.landmarks)?, &inputs.landmarks, &proj)?;
        digest("landmarks", &inputs.landmarks)?;
        let panos = ingest::parse_panos(&artifact::read_text(&inputs.panos)?, &inputs.panos, &proj)?;
        digest("panos", &inputs.panos)?;
        let roads = match &inputs.roads {
            None => None,
            Some(RoadsInput::Csv { nodes, edges }) => {
                let net = ingest::parse_roads_csv(
                    &artifact::read_text(nodes)?,
                    &artifact::read_text(edges)?,
                    nodes,
                    edges,
                    &proj,
                )?;
                digest("road_nodes", nodes)?;
                digest("road_edges", edges)?;
                Some(net)
            }
            Some(RoadsInput::GeoJson(path)) => {
                let net = ingest::parse_roads_geojson(&artifact::read_text(path)?, path, self.config.input.geojson_wgs84, &proj)?;
                digest("roads", path)?;
                Some(net)
            }
        };

        for w in &panos.warnings {
            log::warn!("{w}");
        }
        let mut warnings = panos.warnings.clone();
        self.jsonl(&mut report, names::LANDMARKS, &landmarks)?;
        self.jsonl(&mut report, names::PANOS, &panos.usable)?;
        if let Some(net) = &roads {
            self.json(&mut report, names::ROADS, net)?;
            let mut rows = Vec::new();
            for lm in &landmarks {
                let pts = net.sample_observers(lm.location, self.config.sample_interval, self.config.buffer_radius)?;
                if pts.is_empty() {
                    warnings.push(format!("no road within {} m of landmark {}", self.config.buffer_radius, lm.landmark_id));
                }
                rows.extend(pts.into_iter().map(|p| ObserverRow {
                    landmark_id: lm.landmark_id.clone(),
                    x: p.x,
                    y: p.y,
                }));
            }
            self.csv(&mut report, names::OBSERVERS, &["landmark_id", "x", "y"], &rows)?;
        }
        let manifest = Manifest {
            crs: self.config.crs.clone(),
            counts: ManifestCounts {
                landmarks: landmarks.len(),
                panos: panos.usable.len() + panos.unusable.len(),
                panos_usable: panos.usable.len(),
                road_nodes: roads.as_ref().map_or(0, |r| r.nodes.len()),
                road_edges: roads.as_ref().map_or(0, |r| r.edges.len()),
            },
            unusable: panos
                .unusable
                .iter()
                .map(|(id, why)| UnusablePano {
                    pano_id: id.clone(),
                    reason: why.clone(),
                })
                .collect(),
            warnings,
            inputs: digests,
        };
        self.json(&mut report, names::MANIFEST, &manifest)?;
        Ok(manifest)
    }

    /// Crop specs for all candidate pairs; with `images`, also cuts the crops
    /// out of `<images>/<pano_id>.{png,jpg,jpeg}`.
    pub fn localize(&self, images: Option<&Path>) -> Result<StageReport> {
        let mut report = StageReport::new("localize");
        let (panos, landmarks) = (self.panos()?, self.landmarks()?);
        let (specs, skipped) = detect::localize(&panos, &landmarks, &self.localize_options());
        report.note(format!("{} crop specs, {} skipped pairs", specs.len(), skipped.len()));
        self.jsonl(&mut report, names::CROPS, &specs)?;
        self.jsonl(&mut report, names::CROPS_SKIPPED, &skipped)?;
        if let Some(dir) = images {
            let (written, missing) = self.write_crops(dir, &panos, &specs)?;
            report.note(format!("{written} crop images written, {missing} panoramas without an image"));
            report.outputs.push(self.path(names::CROP_IMAGES));
        }
        Ok(report)
    }

    fn write_crops(&self, dir: &Path, panos: &[PanoramaMeta], specs: &[CropSpec]) -> Result<(usize, usize)> {
        let by_id: HashMap<&str, &PanoramaMeta> = panos.iter().map(|p| (p.pano_id.as_str(), p)).collect();
        let out_dir = self.path(names::CROP_IMAGES);
        let (mut written, mut missing) = (0, 0);
        let mut current: Option<(String, Option<image::RgbImage>)> = None;
        for spec in specs {
            if current.as_ref().map(|c| c.0.as_str()) != Some(spec.pano_id.as_str()) {
                let found = ["png", "jpg", "jpeg"]
                    .iter()
                    .map(|ext| dir.join(format!("{}.{ext}", spec.pano_id)))
                    .find(|p| p.is_file());
                let img = match found {
                    Some(p) => Some(image::open(&p)?.to_rgb8()),
                    None => {
                        log::warn!("no image for pano {} in {}", spec.pano_id, dir.display());
                        missing += 1;
                        None
                    }
                };
                current = Some((spec.pano_id.clone(), img));
            }
            let Some((_, Some(img))) = &current else { continue };
            let out = detect::crop(img, by_id[spec.pano_id.as_str()], &spec.zoom)?;
            let mut bytes = Vec::new();
            image::DynamicImage::ImageRgb8(out).write_to(&mut Cursor::new(&mut bytes), image::ImageFormat::Png)?;
            artifact::write_atomic(&out_dir.join(format!("{}__{}.png", spec.pano_id, spec.landmark_id)), &bytes)?;
            written += 1;
        }
        Ok((written, missing))
    }

    /// Voxelizes the scene around all panoramas and landmarks and records
    /// the line-of-sight verdict for every candidate pair.
    pub fn simulate3d(&self, scene: &SceneFiles) -> Result<StageReport> {
        let mut report = StageReport::new("simulate3d");
        let (panos, landmarks) = (self.panos()?, self.landmarks()?);
        let mut inputs = SceneInputs::default();
        if let Some(p) = &scene.buildings {
            let (crs, footprints) = voxel::scene::parse_footprints(&artifact::read_text(p)?)
                .map_err(|e| Error::invalid(format!("{}: {e}", p.display())))?;
            inputs.crs = crs;
            inputs.buildings = footprints;
        }
        let raster = |p: &Option<PathBuf>| -> Result<Option<AsciiGrid>> {
            p.as_ref()
                .map(|p| AsciiGrid::parse(&artifact::read_text(p)?).map_err(|e| Error::invalid(format!("{}: {e}", p.display()))))
                .transpose()
        };
        inputs.canopy = raster(&scene.canopy)?;
        inputs.terrain = raster(&scene.terrain)?;

        let cs = self.config.voxel.cell_size;
        let points = panos.iter().map(|p| p.location).chain(landmarks.iter().map(|l| l.location));
        let bounds = Rect::around(points, 2.0 * cs).ok_or_else(|| Error::EmptyDomain("no locations to voxelize".into()))?;
        let grid = voxel::build_grid(&inputs, cs, bounds)?;
        let dims = grid.dims();
        report.note(format!("grid {}x{}x{} cells, {} occupied", dims[0], dims[1], dims[2], grid.occupied_count()));

        let opts = self.config.los_options();
        let mut records = Vec::new();
        for lm in &landmarks {
            let near: Vec<PanoramaMeta> = panos
                .iter()
                .filter(|p| p.location.distance_to(&lm.location) <= self.config.buffer_radius)
                .cloned()
                .collect();
            let seen = voxel::simulate_visibility(&grid, &near, lm, &opts)?;
            records.extend(near.iter().zip(seen).map(|(p, v)| SimulatedVisibility {
                pano_id: p.pano_id.clone(),
                landmark_id: lm.landmark_id.clone(),
                d_m: p.location.distance_to(&lm.location),
                visible: v,
            }));
        }
        records.sort_by(|a, b| (&a.pano_id, &a.landmark_id).cmp(&(&b.pano_id, &b.landmark_id)));

        let mut bytes = Vec::new();
        voxel::write_grid(&grid, &mut bytes).map_err(|e| Error::io(self.path(names::GRID), e))?;
        artifact::write_atomic(&self.path(names::GRID), &bytes)?;
        report.outputs.push(self.path(names::GRID));
        self.jsonl(&mut report, names::VISIBILITY_3D, &records)?;
        Ok(report)
    }

    fn simulated(&self) -> Result<Vec<SimulatedVisibility>> {
        Ok(artifact::read_jsonl(&self.require(names::VISIBILITY_3D, "simulate3d")?)?.1)
    }

    pub fn detect(&self, choice: &DetectorChoice, tau: Option<f64>) -> Result<StageReport> {
        let mut report = StageReport::new("detect");
        let tau = tau.or(self.config.tau).ok_or_else(|| {
            Error::invalid("no detection threshold: set `tau` in the config or pass --tau (0.5 is a common start)")
        })?;
        let specs: Vec<CropSpec> = artifact::read_jsonl(&self.require(names::CROPS, "localize")?)?.1;
        let (panos, landmarks) = (self.panos()?, self.landmarks()?);
        let run = match choice {
            DetectorChoice::Oracle => {
                let path = self.require(names::GRID, "simulate3d")?;
                let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
                let grid = voxel::read_grid(bytes.as_slice())?;
                let det = OracleDetector::new(&grid, self.config.los_options());
                detect::score_specs(specs, Vec::new(), &panos, &landmarks, &det as &dyn Detector, tau)?
            }
            DetectorChoice::Replay(path) => {
                let (_, recs): (_, Vec<DetectionRecord>) = artifact::read_jsonl(path)?;
                let det = ReplayDetector::from_records(&recs)?;
                detect::score_specs(specs, Vec::new(), &panos, &landmarks, &det as &dyn Detector, tau)?
            }
        };
        let visible = run.records.iter().filter(|r| r.visible).count();
        report.note(format!("{} records ({visible} visible) at tau {tau}, {} skipped", run.records.len(), run.skipped.len()));
        self.jsonl(&mut report, names::DETECTIONS, &run.records)?;
        self.jsonl::<Skipped>(&mut report, names::DETECTIONS_SKIPPED, &run.skipped)?;
        Ok(report)
    }

    pub fn graph_build(&self) -> Result<StageReport> {
        let mut report = StageReport::new("graph-build");
        let (roads, panos, landmarks) = (self.roads()?, self.panos()?, self.landmarks()?);
        let detections = self.detections()?;
        let mut g = graph::build_svi_graph(&roads, &panos, self.config.graph.snap_radius)?;
        g.add_landmarks(&landmarks, self.config.graph.landmark_radius)?;
        let skipped = g.add_visibility(&detections)?;
        let (components, _) = g.components();
        report.note(format!(
            "{} nodes, {} proximity edges, {} visibility edges, {components} components, {} unsnapped panos ({skipped} detections on them)",
            g.nodes().len(),
            g.proximity_edges().len(),
            g.visibility_edge_count(),
            g.unsnapped().len()
        ));
        self.json(&mut report, names::GRAPH, &g.to_document())?;
        Ok(report)
    }

    pub fn intervis(&self) -> Result<StageReport> {
        let mut report = StageReport::new("intervis");
        let m = graph::intervisibility(&self.graph()?);
        let mut rows = Vec::new();
        for (b, row) in m.weights.iter().enumerate() {
            for (a, &w) in row.iter().enumerate() {
                if a != b {
                    rows.push(IntervisRow {
                        observer_landmark: &m.landmarks[b],
                        seen_landmark: &m.landmarks[a],
                        weight: w,
                    });
                }
            }
        }
        let pairs = m.pairs();
        report.note(format!(
            "{} landmark pairs with sightings, {} inter-visible",
            pairs.len(),
            pairs.iter().filter(|p| p.intervisible).count()
        ));
        self.csv(&mut report, names::INTERVIS, &["observer_landmark", "seen_landmark", "weight"], &rows)?;
        self.csv(&mut report, names::INTERVIS_PAIRS, &["a", "b", "a_to_b", "b_to_a", "intervisible"], &pairs)?;
        Ok(report)
    }

    pub fn coexist(&self, roll_up: bool) -> Result<StageReport> {
        let mut report = StageReport::new("coexist");
        let hyper = graph::coexistence(&self.graph()?, roll_up)?;
        let rows: Vec<CoexistRow> = hyper
            .iter()
            .map(|h| CoexistRow {
                landmarks: h.landmarks.join(";"),
                size: h.landmarks.len(),
                count: h.count,
            })
            .collect();
        report.note(format!("{} distinct landmark sets", rows.len()));
        self.csv(&mut report, names::COEXIST, &["landmarks", "size", "count"], &rows)?;
        Ok(report)
    }

    /// Random walks from every landmark with viewpoints; `tags` is an
    /// optional `edge_id,tag` CSV for corridor statistics.
    pub fn vav(&self, tags: Option<&Path>) -> Result<StageReport> {
        let mut report = StageReport::new("vav");
        let g = self.graph()?;
        let params = self.config.walk_params(stage_seed(self.config.seed, "vav"));
        let (paths, skipped) = graph::vav_all(&g, &params)?;
        for s in &skipped {
            log::warn!("landmark {s} has no visible viewpoints; no walks launched");
        }
        let strengths = graph::linking_strength(&paths, params.rounds)?;
        let pairs = graph::symmetrize(&strengths);
        let valid = paths.iter().filter(|p| p.valid).count();
        report.note(format!("{} rounds, {valid} valid paths, {} origins skipped", paths.len(), skipped.len()));
        self.jsonl(&mut report, names::PATHS, &paths)?;
        self.csv(&mut report, names::LINKING, &["from", "to", "valid_paths", "rounds", "strength"], &strengths)?;
        self.csv(&mut report, names::LINKING_PAIRS, &["a", "b", "a_to_b", "b_to_a", "mean"], &pairs)?;
        if let Some(t) = tags {
            let rows: Vec<TagRow> = artifact::read_csv(t)?;
            let map: BTreeMap<String, String> = rows.into_iter().map(|r| (r.edge_id, r.tag)).collect();
            let corridor = graph::corridor_stats(&g, &paths, &map, params.max_steps)?;
            self.json(&mut report, names::CORRIDOR, &corridor)?;
        }
        Ok(report)
    }

    pub fn validate(&self, labels: &LabelSource) -> Result<StageReport> {
        let mut report = StageReport::new("validate");
        let detections = self.detections()?;
        let (gt, source) = match labels {
            LabelSource::Csv(p) => (ingest::parse_labels(&artifact::read_text(p)?, p)?, p.display().to_string()),
            LabelSource::Simulated => {
                let mut gt = GroundTruth::default();
                for r in self.simulated()? {
                    gt.insert(r.pano_id, r.landmark_id, r.visible);
                }
                (gt, "simulate3d".to_owned())
            }
        };
        let matrix = detect::validate(&detections, &gt)?;
        let scores = metrics::scores(&matrix)?;
        let bands = metrics::band_scores(&detections, &gt, &self.config.distance_bands()?)?;
        let ids: BTreeSet<&str> = detections.iter().map(|d| d.detector_id.as_str()).collect();
        report.note(format!("accuracy {:.4} over {} records", scores.accuracy, matrix.total()));
        self.json(
            &mut report,
            names::METRICS,
            &MetricsDoc {
                detector_ids: ids.into_iter().collect(),
                labels: &source,
                matrix,
                scores,
                bands: &bands,
            },
        )?;
        let rows: Vec<BandRow> = bands
            .iter()
            .map(|b| {
                let s = b.scores.as_ref();
                BandRow {
                    band: b.band.label(),
                    tp: b.matrix.tp,
                    fp: b.matrix.fp,
                    tn: b.matrix.tn,
                    fn_: b.matrix.fn_,
                    accuracy: s.map(|s| s.accuracy),
                    precision_visible: s.and_then(|s| s.visible.precision),
                    recall_visible: s.and_then(|s| s.visible.recall),
                    f1_visible: s.and_then(|s| s.visible.f1),
                    precision_invisible: s.and_then(|s| s.invisible.precision),
                    recall_invisible: s.and_then(|s| s.invisible.recall),
                    f1_invisible: s.and_then(|s| s.invisible.f1),
                }
            })
            .collect();
        self.csv(&mut report, names::METRICS_BANDS, &[], &rows)?;
        Ok(report)
    }

    fn interest_points(&self, path: &Path, landmark: Option<&str>) -> Result<Vec<Point2>> {
        let pts = ingest::parse_points(&artifact::read_text(path)?, path, &self.projector()?)?;
        Ok(pts
            .into_iter()
            .filter(|p| match (landmark, &p.landmark_id) {
                (Some(want), Some(have)) => want == have,
                _ => true,
            })
            .map(|p| p.location)
            .collect())
    }

    /// Grid comparison of viewpoints that see `landmark` (any landmark when
    /// `None`) against an interest point set.
    pub fn dice(&self, interest: &Path, landmark: Option<&str>) -> Result<StageReport> {
        let mut report = StageReport::new("dice");
        let panos = self.panos()?;
        let detections = self.detections()?;
        let seen: BTreeSet<&str> = detections
            .iter()
            .filter(|d| d.visible && landmark.is_none_or(|l| d.landmark_id == l))
            .map(|d| d.pano_id.as_str())
            .collect();
        let svi: Vec<Point2> = panos
            .iter()
            .filter(|p| seen.contains(p.pano_id.as_str()))
            .map(|p| p.location)
            .collect();
        let pts = self.interest_points(interest, landmark)?;
        let cells = metrics::dice_grid(&svi, &pts, self.config.binning()?.as_ref())?;
        let tourism = cells.iter().filter(|c| c.class == metrics::ViewpointClass::Tourism).count();
        report.note(format!("{} cells, {tourism} tourism", cells.len()));
        self.csv(&mut report, names::DICE, &["cell_id", "p_svi", "p_flickr", "dice", "class"], &cells)?;
        Ok(report)
    }

    pub fn curves(&self, interest: &Path, landmark: &str) -> Result<StageReport> {
        let mut report = StageReport::new("curves");
        let lm = self
            .landmarks()?
            .into_iter()
            .find(|l| l.landmark_id == landmark)
            .ok_or_else(|| Error::invalid(format!("unknown landmark {landmark:?}")))?;
        let visible: Vec<f64> = self
            .detections()?
            .iter()
            .filter(|d| d.visible && d.landmark_id == landmark)
            .map(|d| d.d_m)
            .collect();
        let interest_d: Vec<f64> = self
            .interest_points(interest, Some(landmark))?
            .iter()
            .map(|p| p.distance_to(&lm.location))
            .collect();
        let radius = self.config.curve_radius();
        let c = metrics::cumulative_curves(&visible, &interest_d, self.config.curves.step, Some(radius))?;
        let rows: Vec<CurveRow> = c
            .distances
            .iter()
            .zip(&c.svi)
            .zip(&c.interest)
            .map(|((&distance, &svi), &interest)| CurveRow { distance, svi, interest })
            .collect();
        report.note(format!(
            "d50 svi {} m, interest {} m, cosine {:.4}",
            c.d50_svi, c.d50_interest, c.cosine_similarity
        ));
        self.csv(&mut report, names::CURVES, &["distance", "svi", "interest"], &rows)?;
        self.json(
            &mut report,
            names::CURVES_SUMMARY,
            &CurveSummary {
                landmark_id: landmark,
                step: self.config.curves.step,
                radius,
                visible_points: visible.len(),
                interest_points: interest_d.len(),
                d50_svi: c.d50_svi,
                d50_interest: c.d50_interest,
                cosine_similarity: c.cosine_similarity,
            },
        )?;
        Ok(report)
    }
}
