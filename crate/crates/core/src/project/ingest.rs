//! Parsing of user inputs into validated, projected domain records.

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;
use serde_json::Value;

use super::proj::Utm;
use crate::error::{Error, Result};
use crate::geo::{Landmark, PanoramaMeta, Point2};
use crate::metrics::GroundTruth;
use crate::roads::{csv_error, RoadNetwork};

/// Maps input coordinates into the project CRS.
#[derive(Debug, Clone, Copy)]
pub struct Projector {
    utm: Option<Utm>,
}

impl Projector {
    pub fn new(utm_zone: Option<(u8, bool)>) -> Result<Self> {
        Ok(Self {
            utm: utm_zone.map(|(z, n)| Utm::new(z, n)).transpose()?,
        })
    }

    pub fn lon_lat(&self, lon: f64, lat: f64) -> Result<Point2> {
        match self.utm {
            Some(u) => u.forward(lon, lat),
            None => Err(Error::invalid(
                "lon/lat input needs a UTM project crs (EPSG:326zz or EPSG:327zz)",
            )),
        }
    }

    fn point(&self, x: Option<f64>, y: Option<f64>, lon: Option<f64>, lat: Option<f64>) -> Result<Point2> {
        match (x, y, lon, lat) {
            (Some(x), Some(y), _, _) => Ok(Point2::new(x, y)),
            (None, None, Some(lon), Some(lat)) => self.lon_lat(lon, lat),
            _ => Err(Error::invalid("location needs x and y, or lon and lat")),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLandmark {
    landmark_id: String,
    name: Option<String>,
    x: Option<f64>,
    y: Option<f64>,
    lon: Option<f64>,
    lat: Option<f64>,
    height: f64,
    #[serde(default)]
    query_image_ref: String,
}

/// Landmark registry: a JSON array, or an object with a `landmarks` array.
pub fn parse_landmarks(text: &str, path: &Path, proj: &Projector) -> Result<Vec<Landmark>> {
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
    let items = match doc {
        Value::Array(a) => a,
        Value::Object(mut o) => match o.remove("landmarks") {
            Some(Value::Array(a)) => a,
            _ => return Err(Error::parse(path, 1, "expected an array or {\"landmarks\": [...]}")),
        },
        _ => return Err(Error::parse(path, 1, "expected an array or {\"landmarks\": [...]}")),
    };
    let mut seen = HashMap::new();
    let mut out = Vec::with_capacity(items.len());
    for (i, item) in items.into_iter().enumerate() {
        let at = |e: Error| Error::invalid(format!("{}: landmark #{}: {e}", path.display(), i + 1));
        let raw: RawLandmark = serde_json::from_value(item).map_err(|e| at(e.into()))?;
        let lm = Landmark {
            name: raw.name.unwrap_or_else(|| raw.landmark_id.clone()),
            location: proj.point(raw.x, raw.y, raw.lon, raw.lat).map_err(at)?,
            height: raw.height,
            query_image_ref: raw.query_image_ref,
            landmark_id: raw.landmark_id,
        };
        lm.validate().map_err(at)?;
        if let Some(prev) = seen.insert(lm.landmark_id.clone(), i + 1) {
            return Err(Error::invalid(format!(
                "{}: duplicate landmark_id {:?} (entries {prev} and {})",
                path.display(),
                lm.landmark_id,
                i + 1
            )));
        }
        out.push(lm);
    }
    if out.is_empty() {
        return Err(Error::invalid(format!("{}: no landmarks", path.display())));
    }
    Ok(out)
}

#[derive(Deserialize)]
struct RawPano {
    pano_id: String,
    x: Option<f64>,
    y: Option<f64>,
    lon: Option<f64>,
    lat: Option<f64>,
    heading: Option<f64>,
    width: Option<u32>,
    height: Option<u32>,
    vertical_fov: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PanoIngest {
    pub usable: Vec<PanoramaMeta>,
    /// `(pano_id, reason)` for panoramas lacking heading or dimensions.
    pub unusable: Vec<(String, String)>,
    pub warnings: Vec<String>,
}

const PANO_REQUIREMENT: &str = "each record needs pano_id, x/y or lon/lat, heading, width and height";

/// Panorama metadata as JSONL or, when `path` ends in `.csv`, CSV.
pub fn parse_panos(text: &str, path: &Path, proj: &Projector) -> Result<PanoIngest> {
    let mut rows: Vec<(usize, RawPano)> = Vec::new();
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = rdr.headers().map_err(|e| csv_error(path, &e))?.clone();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_error(path, &e))?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            let raw: RawPano = rec
                .deserialize(Some(&header))
                .map_err(|e| Error::parse(path, line, e.to_string()))?;
            rows.push((line, raw));
        }
    } else {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with("{\"_meta\"") {
                continue;
            }
            let raw: RawPano = serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            rows.push((i + 1, raw));
        }
    }
    if rows.is_empty() {
        return Err(Error::invalid(format!("{}: no panoramas; {PANO_REQUIREMENT}", path.display())));
    }

    let mut out = PanoIngest::default();
    let mut lines: HashMap<String, usize> = HashMap::new();
    for (line, raw) in rows {
        if let Some(prev) = lines.insert(raw.pano_id.clone(), line) {
            return Err(Error::parse(
                path,
                line,
                format!("duplicate pano_id {:?} (lines {prev} and {line})", raw.pano_id),
            ));
        }
        let location = proj
            .point(raw.x, raw.y, raw.lon, raw.lat)
            .map_err(|e| Error::parse(path, line, e.to_string()))?;
        let (Some(heading), Some(width), Some(height)) = (raw.heading, raw.width, raw.height) else {
            let missing: Vec<&str> = [
                ("heading", raw.heading.is_none()),
                ("width", raw.width.is_none()),
                ("height", raw.height.is_none()),
            ]
            .into_iter()
            .filter_map(|(n, m)| m.then_some(n))
            .collect();
            out.unusable.push((raw.pano_id, format!("missing {}", missing.join(", "))));
            continue;
        };
        let mut p = PanoramaMeta::new(raw.pano_id, location, heading, width, height);
        if let Some(fov) = raw.vertical_fov {
            p.vertical_fov = fov;
        }
        p.validate().map_err(|e| Error::parse(path, line, e.to_string()))?;
        if p.width != 2 * p.height {
            out.warnings.push(format!("pano {}: {}x{} is not a 2:1 panorama", p.pano_id, p.width, p.height));
        }
        out.usable.push(p);
    }
    Ok(out)
}

/// Renames `lon`/`lat` header columns to `x`/`y`; true when renamed.
fn lon_lat_header(csv_text: &str) -> (String, bool) {
    let mut out = String::with_capacity(csv_text.len());
    let mut renamed = false;
    let mut done = false;
    for line in csv_text.split_inclusive('\n') {
        if !done && !line.trim_start().starts_with('#') && !line.trim().is_empty() {
            done = true;
            let cols: Vec<String> = line
                .trim_end_matches(['\n', '\r'])
                .split(',')
                .map(|c| match c.trim() {
                    "lon" => {
                        renamed = true;
                        "x".to_owned()
                    }
                    "lat" => "y".to_owned(),
                    other => other.to_owned(),
                })
                .collect();
            out.push_str(&cols.join(","));
            out.push('\n');
        } else {
            out.push_str(line);
        }
    }
    (out, renamed)
}

fn strip_comments(text: &str) -> String {
    text.split_inclusive('\n')
        .map(|l| if l.trim_start().starts_with('#') { "\n" } else { l })
        .collect()
}

fn project_network(net: &mut RoadNetwork, proj: &Projector) -> Result<()> {
    for n in &mut net.nodes {
        n.location = proj.lon_lat(n.location.x, n.location.y)?;
    }
    for e in &mut net.edges {
        for p in &mut e.geometry {
            *p = proj.lon_lat(p.x, p.y)?;
        }
    }
    Ok(())
}

/// Road network from `node_id,x,y` (or `node_id,lon,lat`) and
/// `edge_id,from,to` CSV files.
pub fn parse_roads_csv(nodes: &str, edges: &str, nodes_path: &Path, edges_path: &Path, proj: &Projector) -> Result<RoadNetwork> {
    let (nodes, wgs84) = lon_lat_header(&strip_comments(nodes));
    let mut net = RoadNetwork::from_csv(&nodes, &strip_comments(edges), nodes_path, edges_path)?;
    if wgs84 {
        project_network(&mut net, proj)?;
    }
    Ok(net)
}

pub fn parse_roads_geojson(text: &str, path: &Path, wgs84: bool, proj: &Projector) -> Result<RoadNetwork> {
    let mut net = RoadNetwork::from_geojson(text).map_err(|e| match e {
        Error::InvalidArgument(m) => Error::invalid(format!("{}: {m}", path.display())),
        other => other,
    })?;
    if wgs84 {
        project_network(&mut net, proj)?;
    }
    Ok(net)
}

fn parse_label(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "visible" | "yes" => Some(true),
        "0" | "false" | "invisible" | "no" => Some(false),
        _ => None,
    }
}

/// Ground truth CSV: `pano_id,landmark_id,label`, or `pano_id,label` for
/// single-landmark studies.
pub fn parse_labels(text: &str, path: &Path) -> Result<GroundTruth> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| csv_error(path, &e))?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let (Some(pi), Some(li)) = (col("pano_id"), col("label")) else {
        return Err(Error::parse(path, 1, "header needs pano_id and label columns"));
    };
    let lm = col("landmark_id");
    let mut gt = GroundTruth::default();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, &e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let label = parse_label(&rec[li]).ok_or_else(|| Error::parse(path, line, format!("bad label {:?}", &rec[li])))?;
        let landmark = lm.map(|i| rec[i].to_owned()).unwrap_or_default();
        if gt.insert(rec[pi].to_owned(), landmark, label).is_some() {
            return Err(Error::parse(path, line, format!("duplicate label for pano {:?}", &rec[pi])));
        }
    }
    Ok(gt)
}

/// A geotagged point, optionally tied to a landmark.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedPoint {
    pub location: Point2,
    pub landmark_id: Option<String>,
}

/// Point CSV with `x,y` or `lon,lat` columns and an optional `landmark_id`.
pub fn parse_points(text: &str, path: &Path, proj: &Projector) -> Result<Vec<TaggedPoint>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| csv_error(path, &e))?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let xy = match (col("x"), col("y"), col("lon"), col("lat")) {
        (Some(x), Some(y), _, _) => (x, y, false),
        (_, _, Some(x), Some(y)) => (x, y, true),
        _ => return Err(Error::parse(path, 1, "header needs x,y or lon,lat columns")),
    };
    let lm = col("landmark_id");
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, &e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let num = |i: usize| {
            rec[i]
                .parse::<f64>()
                .map_err(|_| Error::parse(path, line, format!("bad number {:?}", &rec[i])))
        };
        let (a, b) = (num(xy.0)?, num(xy.1)?);
        let location = if xy.2 {
            proj.lon_lat(a, b).map_err(|e| Error::parse(path, line, e.to_string()))?
        } else {
            Point2::new(a, b)
        };
        if !location.is_finite() {
            return Err(Error::parse(path, line, "non-finite coordinates"));
        }
        out.push(TaggedPoint {
            location,
            landmark_id: lm.map(|i| rec[i].to_owned()).filter(|s| !s.is_empty()),
        });
    }
    Ok(out)
}
