//! Heterogeneous visibility graph.
//!
//! Walkable nodes are panorama viewpoints (SVI), road junctions and virtual
//! midpoints of road edges that carry no panorama. Landmarks are attached
//! through two relations: proximity (viewpoints within a radius) and
//! visibility (viewpoints whose detector verdict was positive).

mod walk;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::detect::DetectionRecord;
use crate::error::{Error, Result};
use crate::geo::{Landmark, PanoramaMeta, Point2};
use crate::roads::{id_cmp, RoadNetwork};

pub use walk::{
    corridor_stats, linking_strength, symmetrize, vav_walk, CorridorReport, LinkStrength, PairStrength, TagStats,
    vav_all, TurnPolicy, VavPath, WalkParams,
};

pub const DEFAULT_SNAP_RADIUS: f64 = 25.0;
pub const DEFAULT_LANDMARK_RADIUS: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeKind {
    Svi { pano_id: String },
    Virtual { road_edge: String },
    Junction { road_node: String },
    Landmark { landmark_id: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    #[serde(flatten)]
    pub kind: NodeKind,
    pub location: Point2,
}

impl Node {
    pub fn is_walkable(&self) -> bool {
        !matches!(self.kind, NodeKind::Landmark { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EdgeDoc {
    Proximity { a: String, b: String, length: f64, road_edge: String },
    LandmarkProximity { svi: String, landmark: String, distance: f64 },
    Visibility { svi: String, landmark: String, score: f64 },
}

/// Undirected walkable link between two road-adjacent nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProximityEdge {
    pub a: usize,
    pub b: usize,
    pub length: f64,
    pub road_edge: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unsnapped {
    pub pano_id: String,
    pub distance: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VisibilityGraph {
    nodes: Vec<Node>,
    index: HashMap<String, usize>,
    proximity: Vec<ProximityEdge>,
    /// Per node: `(neighbor, proximity edge)`, sorted by neighbor.
    adjacency: Vec<Vec<(usize, usize)>>,
    /// Per landmark node: viewpoints within the landmark radius with distance.
    near_landmark: BTreeMap<usize, Vec<(usize, f64)>>,
    /// Per viewpoint: visible landmark nodes with score.
    visible: BTreeMap<usize, BTreeMap<usize, f64>>,
    unsnapped: Vec<Unsnapped>,
    landmark_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub landmark_radius: f64,
    pub nodes: Vec<Node>,
    pub edges: Vec<EdgeDoc>,
    #[serde(default)]
    pub unsnapped: Vec<Unsnapped>,
}

fn junction_id(road_node: &str) -> String {
    format!("j:{road_node}")
}

fn virtual_id(road_edge: &str) -> String {
    format!("v:{road_edge}")
}

fn landmark_node_id(landmark: &str) -> String {
    format!("lm:{landmark}")
}

impl VisibilityGraph {
    fn push_node(&mut self, id: String, kind: NodeKind, location: Point2) -> Result<usize> {
        if self.index.contains_key(&id) {
            return Err(Error::invalid(format!("duplicate graph node id {id:?}")));
        }
        let i = self.nodes.len();
        self.index.insert(id.clone(), i);
        self.nodes.push(Node { id, kind, location });
        self.adjacency.push(Vec::new());
        Ok(i)
    }

    /// Returns false when the pair is already linked or `a == b`.
    fn link(&mut self, a: usize, b: usize, length: f64, road_edge: &str) -> bool {
        if a == b || self.adjacency[a].binary_search_by_key(&b, |e| e.0).is_ok() {
            return false;
        }
        let e = self.proximity.len();
        self.proximity.push(ProximityEdge {
            a,
            b,
            length,
            road_edge: road_edge.to_owned(),
        });
        for (x, y) in [(a, b), (b, a)] {
            let pos = self.adjacency[x].partition_point(|n| n.0 < y);
            self.adjacency[x].insert(pos, (y, e));
        }
        true
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn svi_index(&self, pano_id: &str) -> Option<usize> {
        self.node_index(pano_id)
            .filter(|&i| matches!(self.nodes[i].kind, NodeKind::Svi { .. }))
    }

    pub fn landmark_index(&self, landmark_id: &str) -> Option<usize> {
        self.node_index(&landmark_node_id(landmark_id))
    }

    pub fn landmark_id(&self, node: usize) -> Option<&str> {
        match &self.nodes[node].kind {
            NodeKind::Landmark { landmark_id } => Some(landmark_id),
            _ => None,
        }
    }

    /// Landmark ids present in the graph, sorted.
    pub fn landmark_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.nodes.iter().enumerate().filter_map(|(i, _)| self.landmark_id(i)).collect();
        ids.sort_by(|a, b| id_cmp(a, b));
        ids
    }

    pub fn proximity_edges(&self) -> &[ProximityEdge] {
        &self.proximity
    }

    pub fn neighbors(&self, node: usize) -> &[(usize, usize)] {
        &self.adjacency[node]
    }

    /// Proximity edge joining `a` and `b`, if any.
    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        self.adjacency[a]
            .binary_search_by_key(&b, |e| e.0)
            .ok()
            .map(|k| self.adjacency[a][k].1)
    }

    /// Landmark nodes visible from a viewpoint, ascending.
    pub fn visible_landmarks(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.visible.get(&node).into_iter().flat_map(|m| m.keys().copied())
    }

    /// Viewpoints with a visibility edge to `landmark`, ascending.
    pub fn viewpoints_of(&self, landmark: usize) -> Vec<usize> {
        self.visible
            .iter()
            .filter(|(_, m)| m.contains_key(&landmark))
            .map(|(&n, _)| n)
            .collect()
    }

    pub fn visibility_edge_count(&self) -> usize {
        self.visible.values().map(BTreeMap::len).sum()
    }

    pub fn unsnapped(&self) -> &[Unsnapped] {
        &self.unsnapped
    }

    pub fn landmark_radius(&self) -> f64 {
        self.landmark_radius
    }

    /// Connected components over proximity edges; one label per node
    /// (landmarks get `None`). Labels follow first-seen node order.
    pub fn components(&self) -> (usize, Vec<Option<usize>>) {
        let mut label = vec![None; self.nodes.len()];
        let mut count = 0;
        for start in 0..self.nodes.len() {
            if label[start].is_some() || !self.nodes[start].is_walkable() {
                continue;
            }
            label[start] = Some(count);
            let mut stack = vec![start];
            while let Some(n) = stack.pop() {
                for &(m, _) in &self.adjacency[n] {
                    if label[m].is_none() {
                        label[m] = Some(count);
                        stack.push(m);
                    }
                }
            }
            count += 1;
        }
        (count, label)
    }

    /// Adds landmark nodes and links each to viewpoints within `radius`.
    pub fn add_landmarks(&mut self, landmarks: &[Landmark], radius: f64) -> Result<()> {
        if !(radius >= 0.0) {
            return Err(Error::invalid(format!("landmark radius {radius} must be >= 0")));
        }
        self.landmark_radius = radius;
        let svis: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| matches!(self.nodes[i].kind, NodeKind::Svi { .. }))
            .collect();
        for lm in landmarks {
            lm.validate()?;
            let li = self.push_node(
                landmark_node_id(&lm.landmark_id),
                NodeKind::Landmark {
                    landmark_id: lm.landmark_id.clone(),
                },
                lm.location,
            )?;
            let near: Vec<(usize, f64)> = svis
                .iter()
                .map(|&s| (s, self.nodes[s].location.distance_to(&lm.location)))
                .filter(|&(_, d)| d <= radius)
                .collect();
            self.near_landmark.insert(li, near);
        }
        Ok(())
    }

    /// One visibility edge per visible record. Re-ingesting the same record
    /// is a no-op; records for panoramas that failed to snap are skipped and
    /// counted in the returned value.
    pub fn add_visibility(&mut self, records: &[DetectionRecord]) -> Result<usize> {
        let unsnapped: BTreeSet<&str> = self.unsnapped.iter().map(|u| u.pano_id.as_str()).collect();
        let mut skipped = 0;
        let mut edges = Vec::new();
        for r in records {
            let Some(s) = self.svi_index(&r.pano_id) else {
                if unsnapped.contains(r.pano_id.as_str()) {
                    skipped += 1;
                    continue;
                }
                return Err(Error::invalid(format!("detection references unknown pano {:?}", r.pano_id)));
            };
            let l = self
                .landmark_index(&r.landmark_id)
                .ok_or_else(|| Error::invalid(format!("detection references unknown landmark {:?}", r.landmark_id)))?;
            if r.visible {
                edges.push((s, l, r.score));
            }
        }
        for (s, l, score) in edges {
            self.visible.entry(s).or_default().entry(l).or_insert(score);
        }
        Ok(skipped)
    }

    pub fn to_document(&self) -> GraphDocument {
        let id = |i: usize| self.nodes[i].id.clone();
        let mut edges: Vec<EdgeDoc> = self
            .proximity
            .iter()
            .map(|e| EdgeDoc::Proximity {
                a: id(e.a),
                b: id(e.b),
                length: e.length,
                road_edge: e.road_edge.clone(),
            })
            .collect();
        for (&l, near) in &self.near_landmark {
            edges.extend(near.iter().map(|&(s, d)| EdgeDoc::LandmarkProximity {
                svi: id(s),
                landmark: id(l),
                distance: d,
            }));
        }
        for (&s, seen) in &self.visible {
            edges.extend(seen.iter().map(|(&l, &score)| EdgeDoc::Visibility {
                svi: id(s),
                landmark: id(l),
                score,
            }));
        }
        GraphDocument {
            landmark_radius: self.landmark_radius,
            nodes: self.nodes.clone(),
            edges,
            unsnapped: self.unsnapped.clone(),
        }
    }

    pub fn from_document(doc: GraphDocument) -> Result<Self> {
        let mut g = VisibilityGraph {
            landmark_radius: doc.landmark_radius,
            unsnapped: doc.unsnapped,
            ..Default::default()
        };
        for n in doc.nodes {
            if let NodeKind::Landmark { .. } = n.kind {
                g.near_landmark.insert(g.nodes.len(), Vec::new());
            }
            g.push_node(n.id, n.kind, n.location)?;
        }
        let lookup = |g: &VisibilityGraph, id: &str| {
            g.node_index(id)
                .ok_or_else(|| Error::invalid(format!("edge references unknown node {id:?}")))
        };
        for e in doc.edges {
            match e {
                EdgeDoc::Proximity { a, b, length, road_edge } => {
                    let (ia, ib) = (lookup(&g, &a)?, lookup(&g, &b)?);
                    if !g.nodes[ia].is_walkable() || !g.nodes[ib].is_walkable() {
                        return Err(Error::invalid(format!("proximity edge {a}-{b} touches a landmark")));
                    }
                    if !g.link(ia, ib, length, &road_edge) {
                        return Err(Error::invalid(format!("duplicate or looped proximity edge {a}-{b}")));
                    }
                }
                EdgeDoc::LandmarkProximity { svi, landmark, distance } => {
                    let (s, l) = (lookup(&g, &svi)?, lookup(&g, &landmark)?);
                    g.check_svi_landmark(s, l)?;
                    g.near_landmark.entry(l).or_default().push((s, distance));
                }
                EdgeDoc::Visibility { svi, landmark, score } => {
                    let (s, l) = (lookup(&g, &svi)?, lookup(&g, &landmark)?);
                    g.check_svi_landmark(s, l)?;
                    g.visible.entry(s).or_default().insert(l, score);
                }
            }
        }
        Ok(g)
    }

    fn check_svi_landmark(&self, s: usize, l: usize) -> Result<()> {
        if !matches!(self.nodes[s].kind, NodeKind::Svi { .. }) || self.landmark_id(l).is_none() {
            return Err(Error::invalid(format!(
                "edge {} -> {} must join a viewpoint to a landmark",
                self.nodes[s].id, self.nodes[l].id
            )));
        }
        Ok(())
    }
}

/// Snaps panoramas to their nearest road edge and chains them along it.
///
/// Panoramas on one edge are ordered by arc length and linked in sequence;
/// the chain ends link to the edge's junctions. Edges without panoramas get
/// a virtual node at mid-length linked to both junctions.
pub fn build_svi_graph(roads: &RoadNetwork, panos: &[PanoramaMeta], snap_radius: f64) -> Result<VisibilityGraph> {
    if !(snap_radius >= 0.0) {
        return Err(Error::invalid(format!("snap radius {snap_radius} must be >= 0")));
    }
    roads.validate()?;
    let mut g = VisibilityGraph {
        landmark_radius: DEFAULT_LANDMARK_RADIUS,
        ..Default::default()
    };
    let junctions = roads
        .nodes
        .iter()
        .map(|n| {
            g.push_node(
                junction_id(&n.id),
                NodeKind::Junction {
                    road_node: n.id.clone(),
                },
                n.location,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let mut on_edge: Vec<Vec<(f64, usize)>> = vec![Vec::new(); roads.edges.len()];
    let mut ordered: Vec<&PanoramaMeta> = panos.iter().collect();
    ordered.sort_by(|a, b| id_cmp(&a.pano_id, &b.pano_id));
    for p in ordered {
        match roads.nearest_edge(p.location) {
            Some((e, d, s)) if d <= snap_radius => {
                let i = g.push_node(
                    p.pano_id.clone(),
                    NodeKind::Svi {
                        pano_id: p.pano_id.clone(),
                    },
                    p.location,
                )?;
                on_edge[e].push((s, i));
            }
            other => {
                log::warn!("pano {} not within {snap_radius} m of any road; excluded", p.pano_id);
                g.unsnapped.push(Unsnapped {
                    pano_id: p.pano_id.clone(),
                    distance: other.map(|o| o.1),
                });
            }
        }
    }

    for (e, edge) in roads.edges.iter().enumerate() {
        let (from, to) = (junctions[edge.from], junctions[edge.to]);
        let len = edge.length();
        let chain = &mut on_edge[e];
        if chain.is_empty() {
            let v = g.push_node(
                virtual_id(&edge.id),
                NodeKind::Virtual {
                    road_edge: edge.id.clone(),
                },
                edge.point_at(len / 2.0),
            )?;
            g.link(from, v, len / 2.0, &edge.id);
            g.link(v, to, len / 2.0, &edge.id);
            continue;
        }
        chain.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut prev = (0.0, from);
        for &(s, n) in chain.iter().chain(std::iter::once(&(len, to))) {
            g.link(prev.1, n, (s - prev.0).max(0.0), &edge.id);
            prev = (s, n);
        }
    }
    Ok(g)
}

/// Directed landmark-to-landmark sighting counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervisMatrix {
    pub landmarks: Vec<String>,
    /// `weights[b][a]`: viewpoints near landmark `b` that see landmark `a`.
    pub weights: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervisPair {
    pub a: String,
    pub b: String,
    pub a_to_b: u64,
    pub b_to_a: u64,
    pub intervisible: bool,
}

impl IntervisMatrix {
    /// Unordered pairs with any sighting, `a < b`.
    pub fn pairs(&self) -> Vec<IntervisPair> {
        let n = self.landmarks.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                // weights[j][i]: seen i from near j
                let (ab, ba) = (self.weights[j][i], self.weights[i][j]);
                if ab + ba > 0 {
                    out.push(IntervisPair {
                        a: self.landmarks[i].clone(),
                        b: self.landmarks[j].clone(),
                        a_to_b: ab,
                        b_to_a: ba,
                        intervisible: ab > 0 && ba > 0,
                    });
                }
            }
        }
        out
    }
}

pub fn intervisibility(graph: &VisibilityGraph) -> IntervisMatrix {
    let ids = graph.landmark_ids();
    let nodes: Vec<usize> = ids.iter().map(|id| graph.landmark_index(id).expect("listed landmark")).collect();
    let mut weights = vec![vec![0u64; ids.len()]; ids.len()];
    for (bi, &b) in nodes.iter().enumerate() {
        for &(s, _) in graph.near_landmark.get(&b).map(Vec::as_slice).unwrap_or(&[]) {
            for (ai, &a) in nodes.iter().enumerate() {
                if a != b && graph.visible.get(&s).is_some_and(|m| m.contains_key(&a)) {
                    weights[bi][ai] += 1;
                }
            }
        }
    }
    IntervisMatrix {
        landmarks: ids.into_iter().map(String::from).collect(),
        weights,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoexistenceHyperedge {
    pub landmarks: Vec<String>,
    pub count: u64,
}

/// Landmark sets seen together from single viewpoints. With `roll_up`, each
/// viewpoint also counts toward every subset of two or more of its landmarks.
pub fn coexistence(graph: &VisibilityGraph, roll_up: bool) -> Result<Vec<CoexistenceHyperedge>> {
    let mut counts: BTreeMap<Vec<String>, u64> = BTreeMap::new();
    for seen in graph.visible.values() {
        if seen.len() < 2 {
            continue;
        }
        let mut set: Vec<String> = seen.keys().map(|&l| graph.landmark_id(l).expect("landmark").to_owned()).collect();
        set.sort_by(|a, b| id_cmp(a, b));
        if !roll_up {
            *counts.entry(set).or_default() += 1;
            continue;
        }
        if set.len() > 20 {
            return Err(Error::invalid(format!(
                "subset roll-up over {} landmarks at one viewpoint is too large",
                set.len()
            )));
        }
        for mask in 1u32..(1 << set.len()) {
            if mask.count_ones() >= 2 {
                let sub: Vec<String> = (0..set.len()).filter(|k| mask >> k & 1 == 1).map(|k| set[k].clone()).collect();
                *counts.entry(sub).or_default() += 1;
            }
        }
    }
    let mut out: Vec<CoexistenceHyperedge> = counts
        .into_iter()
        .map(|(landmarks, count)| CoexistenceHyperedge { landmarks, count })
        .collect();
    out.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.landmarks.cmp(&b.landmarks)));
    Ok(out)
}
