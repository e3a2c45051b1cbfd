use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use vistagraph::project::{
    DetectorChoice, IngestInputs, LabelSource, Project, ProjectConfig, RoadsInput, SceneFiles, StageReport,
};
use vistagraph::Error;

/// Landmark visibility pipeline over geotagged street-level panoramas.
///
/// Stages read and write files in the project directory given by --out:
/// ingest → localize → (simulate3d) → detect → graph-build → intervis |
/// coexist | vav, and validate | dice | curves for evaluation.
#[derive(Parser)]
#[command(name = "vistagraph", version)]
struct Cli {
    /// Project configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Project directory for all artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Overrides the project seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a config file with every default filled in.
    Init,
    /// Validate and project inputs into the project store.
    Ingest(IngestArgs),
    /// Compute crop specs (zoom boxes) for every candidate pair.
    Localize {
        /// Directory of `<pano_id>.png|jpg` panoramas to cut crops from.
        #[arg(long)]
        images: Option<PathBuf>,
    },
    /// Voxelize the scene and compute line-of-sight visibility.
    Simulate3d {
        /// Building footprints (GeoJSON polygons with a `height` property).
        #[arg(long)]
        buildings: Option<PathBuf>,
        /// Canopy height raster (ESRI ASCII grid).
        #[arg(long)]
        canopy: Option<PathBuf>,
        /// Terrain elevation raster (ESRI ASCII grid).
        #[arg(long)]
        terrain: Option<PathBuf>,
    },
    /// Score crops with a detector and threshold the scores.
    Detect(DetectArgs),
    /// Build the visibility graph from roads, panoramas and detections.
    GraphBuild,
    /// Directed landmark-to-landmark sighting counts.
    Intervis,
    /// Landmark sets seen together from single viewpoints.
    Coexist {
        /// Also count every sub-set of two or more landmarks.
        #[arg(long)]
        roll_up: bool,
    },
    /// Random walks between landmark viewpoints and linking strength.
    Vav {
        /// `edge_id,tag` CSV for corridor statistics.
        #[arg(long)]
        tags: Option<PathBuf>,
    },
    /// Confusion matrix and scores of detections against labels.
    Validate(ValidateArgs),
    /// Grid overlap between viewpoints and an interest point set.
    Dice {
        /// Interest points CSV (`x,y` or `lon,lat`, optional `landmark_id`).
        #[arg(long)]
        interest: PathBuf,
        #[arg(long)]
        landmark: Option<String>,
    },
    /// Cumulative distance curves for one landmark.
    Curves {
        #[arg(long)]
        interest: PathBuf,
        #[arg(long)]
        landmark: String,
    },
}

#[derive(Args)]
#[command(group(ArgGroup::new("roads_csv").args(["roads_nodes", "roads_edges"]).multiple(true).conflicts_with("roads_geojson")))]
struct IngestArgs {
    /// Landmark registry (JSON).
    #[arg(long)]
    landmarks: PathBuf,
    /// Panorama metadata (JSONL, or CSV by extension).
    #[arg(long)]
    panos: PathBuf,
    #[arg(long, requires = "roads_edges")]
    roads_nodes: Option<PathBuf>,
    #[arg(long, requires = "roads_nodes")]
    roads_edges: Option<PathBuf>,
    #[arg(long)]
    roads_geojson: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DetectorKind {
    Oracle,
    Replay,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long, value_enum)]
    detector: DetectorKind,
    /// Detection JSONL produced by an external detector (with `replay`).
    #[arg(long, required_if_eq("detector", "replay"))]
    detections: Option<PathBuf>,
    /// Overrides `tau` from the config.
    #[arg(long)]
    tau: Option<f64>,
}

#[derive(Args)]
#[command(group(ArgGroup::new("source").args(["labels", "simulated"]).required(true)))]
struct ValidateArgs {
    /// Ground truth CSV (`pano_id,landmark_id,label` or `pano_id,label`).
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Use the simulate3d verdicts as labels.
    #[arg(long)]
    simulated: bool,
}

const EXIT_INPUT: u8 = 2;
const EXIT_PREREQUISITE: u8 = 3;

fn load_config(cli: &Cli) -> Result<ProjectConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            ProjectConfig::from_toml(&text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", p.display())))?
        }
        None => ProjectConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<Option<StageReport>, Error> {
    let cfg = load_config(cli)?;
    if let Command::Init = cli.command {
        print!("{}", cfg.to_toml()?);
        return Ok(None);
    }
    let project = Project::new(&cli.out, cfg)?;
    let report = match &cli.command {
        Command::Init => unreachable!(),
        Command::Ingest(a) => {
            let roads = match (&a.roads_nodes, &a.roads_edges, &a.roads_geojson) {
                (Some(n), Some(e), _) => Some(RoadsInput::Csv {
                    nodes: n.clone(),
                    edges: e.clone(),
                }),
                (_, _, Some(g)) => Some(RoadsInput::GeoJson(g.clone())),
                _ => None,
            };
            let m = project.ingest(&IngestInputs {
                landmarks: a.landmarks.clone(),
                panos: a.panos.clone(),
                roads,
            })?;
            let mut r = StageReport {
                stage: "ingest".into(),
                ..Default::default()
            };
            r.notes.push(format!(
                "{} landmarks, {} panos ({} usable), {} road nodes, {} road edges",
                m.counts.landmarks, m.counts.panos, m.counts.panos_usable, m.counts.road_nodes, m.counts.road_edges
            ));
            r.notes.extend(m.warnings.iter().map(|w| format!("warning: {w}")));
            r
        }
        Command::Localize { images } => project.localize(images.as_deref())?,
        Command::Simulate3d {
            buildings,
            canopy,
            terrain,
        } => project.simulate3d(&SceneFiles {
            buildings: buildings.clone(),
            canopy: canopy.clone(),
            terrain: terrain.clone(),
        })?,
        Command::Detect(a) => {
            let choice = match a.detector {
                DetectorKind::Oracle => DetectorChoice::Oracle,
                DetectorKind::Replay => DetectorChoice::Replay(a.detections.clone().expect("required by clap")),
            };
            project.detect(&choice, a.tau)?
        }
        Command::GraphBuild => project.graph_build()?,
        Command::Intervis => project.intervis()?,
        Command::Coexist { roll_up } => project.coexist(*roll_up)?,
        Command::Vav { tags } => project.vav(tags.as_deref())?,
        Command::Validate(a) => {
            let src = match &a.labels {
                Some(p) => LabelSource::Csv(p.clone()),
                None => LabelSource::Simulated,
            };
            project.validate(&src)?
        }
        Command::Dice { interest, landmark } => project.dice(interest, landmark.as_deref())?,
        Command::Curves { interest, landmark } => project.curves(interest, landmark)?,
    };
    Ok(Some(report))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(&cli) {
        Ok(Some(report)) => {
            println!("{}: ok", report.stage);
            for n in &report.notes {
                println!("  {n}");
            }
            for o in &report.outputs {
                println!("  wrote {}", o.display());
            }
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { EXIT_INPUT } else { EXIT_PREREQUISITE })
        }
    }
}
