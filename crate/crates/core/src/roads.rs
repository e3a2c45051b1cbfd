//! Road network used for observer sampling and panorama snapping.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geo::Point2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadNode {
    pub id: String,
    pub location: Point2,
}

/// A road segment between two junctions. `geometry` runs from `from` to
/// `to` and includes both end points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadEdge {
    pub id: String,
    pub from: usize,
    pub to: usize,
    pub geometry: Vec<Point2>,
}

impl RoadEdge {
    pub fn length(&self) -> f64 {
        self.geometry.windows(2).map(|w| w[0].distance_to(&w[1])).sum()
    }

    /// Point at arc length `s` from the `from` end.
    pub fn point_at(&self, s: f64) -> Point2 {
        let mut left = s.max(0.0);
        for w in self.geometry.windows(2) {
            let seg = w[0].distance_to(&w[1]);
            if left <= seg && seg > 0.0 {
                let t = left / seg;
                return Point2::new(w[0].x + (w[1].x - w[0].x) * t, w[0].y + (w[1].y - w[0].y) * t);
            }
            left -= seg;
        }
        *self.geometry.last().expect("edge geometry has at least two points")
    }

    /// Closest point on the polyline: `(distance, arc_length)`.
    pub fn project(&self, p: Point2) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0.0);
        let mut walked = 0.0;
        for w in self.geometry.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (dx, dy) = (b.x - a.x, b.y - a.y);
            let len2 = dx * dx + dy * dy;
            let t = if len2 > 0.0 {
                (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let q = Point2::new(a.x + dx * t, a.y + dy * t);
            let d = q.distance_to(&p);
            if d < best.0 {
                best = (d, walked + t * len2.sqrt());
            }
            walked += len2.sqrt();
        }
        best
    }
}

/// Orders ids numerically when both are plain digit strings, else lexically.
pub fn id_cmp(a: &str, b: &str) -> Ordering {
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|c| c.is_ascii_digit());
    if digits(a) && digits(b) {
        let (ta, tb) = (a.trim_start_matches('0'), b.trim_start_matches('0'));
        ta.len().cmp(&tb.len()).then_with(|| ta.cmp(tb)).then_with(|| a.cmp(b))
    } else {
        a.cmp(b)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoadNetwork {
    pub nodes: Vec<RoadNode>,
    pub edges: Vec<RoadEdge>,
}

#[derive(Deserialize)]
struct NodeRow {
    node_id: String,
    x: f64,
    y: f64,
}

#[derive(Deserialize)]
struct EdgeRow {
    edge_id: String,
    from: String,
    to: String,
}

impl RoadNetwork {
    pub fn add_node(&mut self, id: impl Into<String>, location: Point2) -> usize {
        self.nodes.push(RoadNode {
            id: id.into(),
            location,
        });
        self.nodes.len() - 1
    }

    /// Adds a straight edge between two existing nodes.
    pub fn add_edge(&mut self, id: impl Into<String>, from: usize, to: usize) -> usize {
        let geometry = vec![self.nodes[from].location, self.nodes[to].location];
        self.edges.push(RoadEdge {
            id: id.into(),
            from,
            to,
            geometry,
        });
        self.edges.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if !n.location.is_finite() {
                return Err(Error::invalid(format!("road node {}: non-finite location", n.id)));
            }
            if let Some(prev) = seen.insert(n.id.as_str(), i) {
                return Err(Error::invalid(format!("road node id {} repeated (#{prev} and #{i})", n.id)));
            }
        }
        let mut seen = HashMap::new();
        for (i, e) in self.edges.iter().enumerate() {
            if e.from >= self.nodes.len() || e.to >= self.nodes.len() {
                return Err(Error::invalid(format!("road edge {} references a missing node", e.id)));
            }
            if e.geometry.len() < 2 {
                return Err(Error::invalid(format!("road edge {} has fewer than two vertices", e.id)));
            }
            if let Some(prev) = seen.insert(e.id.as_str(), i) {
                return Err(Error::invalid(format!("road edge id {} repeated (#{prev} and #{i})", e.id)));
            }
        }
        Ok(())
    }

    /// Nodes from `node_id,x,y` and edges from `edge_id,from,to`.
    pub fn from_csv(nodes_csv: &str, edges_csv: &str, nodes_path: &Path, edges_path: &Path) -> Result<Self> {
        let mut net = RoadNetwork::default();
        let mut index = HashMap::new();
        let mut rdr = csv::Reader::from_reader(nodes_csv.as_bytes());
        for row in rdr.deserialize::<NodeRow>() {
            let row = row.map_err(|e| csv_error(nodes_path, &e))?;
            let id = row.node_id.clone();
            let i = net.add_node(row.node_id, Point2::new(row.x, row.y));
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::parse(nodes_path, i + 2, format!("duplicate node_id {id}")));
            }
        }
        let mut rdr = csv::Reader::from_reader(edges_csv.as_bytes());
        for (k, row) in rdr.deserialize::<EdgeRow>().enumerate() {
            let row = row.map_err(|e| csv_error(edges_path, &e))?;
            let lookup = |id: &str| {
                index
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::parse(edges_path, k + 2, format!("unknown node {id}")))
            };
            let (from, to) = (lookup(&row.from)?, lookup(&row.to)?);
            net.add_edge(row.edge_id, from, to);
        }
        net.validate()?;
        Ok(net)
    }

    /// `LineString` features become edges; end points with identical
    /// coordinates are merged into one junction. The edge id is taken from
    /// `properties.edge_id` or `properties.id`, falling back to the feature index.
    pub fn from_geojson(text: &str) -> Result<Self> {
        let doc: Value = serde_json::from_str(text)?;
        let features = doc
            .get("features")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::invalid("roads: expected a FeatureCollection with `features`"))?;
        let mut net = RoadNetwork::default();
        let mut by_coord: HashMap<(u64, u64), usize> = HashMap::new();
        let mut junction = |net: &mut RoadNetwork, p: Point2| {
            *by_coord.entry((p.x.to_bits(), p.y.to_bits())).or_insert_with(|| {
                let id = format!("j{}", net.nodes.len());
                net.add_node(id, p)
            })
        };
        for (i, f) in features.iter().enumerate() {
            let geom = f.get("geometry").unwrap_or(&Value::Null);
            if geom.get("type").and_then(Value::as_str) != Some("LineString") {
                return Err(Error::invalid(format!("road feature {i}: expected LineString geometry")));
            }
            let pts = geom
                .get("coordinates")
                .and_then(Value::as_array)
                .ok_or_else(|| Error::invalid(format!("road feature {i}: missing coordinates")))?
                .iter()
                .map(|c| match (c.get(0).and_then(Value::as_f64), c.get(1).and_then(Value::as_f64)) {
                    (Some(x), Some(y)) => Ok(Point2::new(x, y)),
                    _ => Err(Error::invalid(format!("road feature {i}: bad vertex"))),
                })
                .collect::<Result<Vec<_>>>()?;
            if pts.len() < 2 {
                return Err(Error::invalid(format!("road feature {i}: fewer than two vertices")));
            }
            let props = f.get("properties");
            let id = props
                .and_then(|p| p.get("edge_id").or_else(|| p.get("id")))
                .map(|v| match v {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .unwrap_or_else(|| i.to_string());
            let from = junction(&mut net, pts[0]);
            let to = junction(&mut net, *pts.last().unwrap());
            net.edges.push(RoadEdge {
                id,
                from,
                to,
                geometry: pts,
            });
        }
        net.validate()?;
        Ok(net)
    }

    /// Nearest edge to `p` as `(edge index, distance, arc length)`; ties go
    /// to the lowest edge id.
    pub fn nearest_edge(&self, p: Point2) -> Option<(usize, f64, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for (i, e) in self.edges.iter().enumerate() {
            let (d, s) = e.project(p);
            let better = match best {
                None => true,
                Some((bi, bd, _)) => d < bd || (d == bd && id_cmp(&e.id, &self.edges[bi].id) == Ordering::Less),
            };
            if better {
                best = Some((i, d, s));
            }
        }
        best
    }

    /// Points every `interval` meters of arc length along each edge that
    /// fall within `radius` of `center`. Junctions shared by several edges
    /// are emitted once.
    pub fn sample_observers(&self, center: Point2, interval: f64, radius: f64) -> Result<Vec<Point2>> {
        if !(interval > 0.0) {
            return Err(Error::invalid(format!("sample interval {interval} must be positive")));
        }
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for e in &self.edges {
            let len = e.length();
            let n = (len / interval).floor() as usize;
            for k in 0..=n {
                let p = e.point_at(k as f64 * interval);
                if p.distance_to(&center) > radius {
                    continue;
                }
                // millimetre key so shared junctions dedupe
                let key = ((p.x * 1000.0).round() as i64, (p.y * 1000.0).round() as i64);
                if seen.insert(key) {
                    out.push(p);
                }
            }
        }
        Ok(out)
    }
}

pub(crate) fn csv_error(path: &Path, e: &csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::parse(path, line, e.to_string())
}
