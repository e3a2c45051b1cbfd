//! Random walks between landmark viewpoints over the road graph.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::VisibilityGraph;
use crate::error::{Error, Result};

/// How the walker picks the next node among its road neighbors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnPolicy {
    /// Never step straight back to the previous node unless it is the only
    /// neighbor.
    #[default]
    NoBacktrack,
    /// Weight each neighbor by `cos^2(theta / 2)` of the turn angle, so
    /// straight ahead weighs 1 and a U-turn 0.
    AngleWeighted,
    /// Plain simple random walk.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkParams {
    pub rounds: u32,
    pub max_steps: u32,
    pub seed: u64,
    pub policy: TurnPolicy,
}

impl Default for WalkParams {
    fn default() -> Self {
        Self {
            rounds: 2000,
            max_steps: 80,
            seed: 0,
            policy: TurnPolicy::NoBacktrack,
        }
    }
}

/// One walk round. Field order is the JSONL wire order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VavPath {
    pub round: u32,
    pub origin_landmark: String,
    pub destination_landmark: Option<String>,
    pub nodes: Vec<String>,
    pub step_count: u32,
    pub valid: bool,
}

fn uniform(rng: &mut ChaCha8Rng, n: usize) -> usize {
    rng.gen_range(0..n as u64) as usize
}

fn turn_weight(g: &VisibilityGraph, prev: usize, cur: usize, next: usize) -> f64 {
    let (p, c, n) = (g.node(prev).location, g.node(cur).location, g.node(next).location);
    let (ix, iy, ox, oy) = (c.x - p.x, c.y - p.y, n.x - c.x, n.y - c.y);
    let norm = (ix * ix + iy * iy).sqrt() * (ox * ox + oy * oy).sqrt();
    if norm == 0.0 {
        return 1.0;
    }
    let cos = ((ix * ox + iy * oy) / norm).clamp(-1.0, 1.0);
    (1.0 + cos) / 2.0
}

fn step(g: &VisibilityGraph, prev: Option<usize>, cur: usize, policy: TurnPolicy, rng: &mut ChaCha8Rng) -> Option<usize> {
    let all: Vec<usize> = g.neighbors(cur).iter().map(|n| n.0).collect();
    if all.is_empty() {
        return None;
    }
    let Some(prev) = prev else {
        return Some(all[uniform(rng, all.len())]);
    };
    match policy {
        TurnPolicy::Uniform => Some(all[uniform(rng, all.len())]),
        TurnPolicy::NoBacktrack => {
            let ahead: Vec<usize> = all.iter().copied().filter(|&n| n != prev).collect();
            let pool = if ahead.is_empty() { &all } else { &ahead };
            Some(pool[uniform(rng, pool.len())])
        }
        TurnPolicy::AngleWeighted => {
            let weights: Vec<f64> = all.iter().map(|&n| if n == prev { 0.0 } else { turn_weight(g, prev, cur, n) }).collect();
            let total: f64 = weights.iter().sum();
            if total <= 0.0 {
                return Some(all[uniform(rng, all.len())]);
            }
            let mut u = rng.gen::<f64>() * total;
            for (k, w) in weights.iter().enumerate() {
                if u < *w {
                    return Some(all[k]);
                }
                u -= w;
            }
            all.iter().zip(&weights).rev().find(|(_, w)| **w > 0.0).map(|(n, _)| *n)
        }
    }
}

/// Runs `params.rounds` independent walks from viewpoints of `origin`.
///
/// Each round starts at a uniformly chosen viewpoint of the origin and ends
/// as soon as it stands on a viewpoint of any other landmark (possibly at
/// step 0), or gives up after `max_steps` moves. When several other
/// landmarks are visible there, one is picked uniformly. Round `r` draws
/// from stream `r` of a ChaCha8 generator seeded with `params.seed`.
pub fn vav_walk(graph: &VisibilityGraph, origin: &str, params: &WalkParams) -> Result<Vec<VavPath>> {
    let o = graph
        .landmark_index(origin)
        .ok_or_else(|| Error::invalid(format!("unknown landmark {origin:?}")))?;
    let starts = graph.viewpoints_of(o);
    if starts.is_empty() {
        return Err(Error::EmptyDomain(format!("landmark {origin} has no visible viewpoints")));
    }
    let paths = (0..params.rounds)
        .into_par_iter()
        .map(|round| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(u64::from(round));
            let mut cur = starts[uniform(&mut rng, starts.len())];
            let mut trail = vec![cur];
            let mut prev = None;
            let mut destination = None;
            loop {
                let others: Vec<usize> = graph.visible_landmarks(cur).filter(|&l| l != o).collect();
                if !others.is_empty() {
                    let pick = if others.len() == 1 { 0 } else { uniform(&mut rng, others.len()) };
                    destination = Some(others[pick]);
                    break;
                }
                if trail.len() > params.max_steps as usize {
                    break;
                }
                let Some(next) = step(graph, prev, cur, params.policy, &mut rng) else {
                    break;
                };
                prev = Some(cur);
                cur = next;
                trail.push(cur);
            }
            VavPath {
                round,
                origin_landmark: origin.to_owned(),
                destination_landmark: destination.map(|l| graph.landmark_id(l).expect("landmark").to_owned()),
                nodes: trail.iter().map(|&n| graph.node(n).id.clone()).collect(),
                step_count: (trail.len() - 1) as u32,
                valid: destination.is_some(),
            }
        })
        .collect();
    Ok(paths)
}

/// Seed for one origin, derived from the run seed so origins do not share
/// random streams.
pub(crate) fn origin_seed(seed: u64, origin: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(origin.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

/// Walks from every landmark that has at least one viewpoint, in landmark
/// id order. Returns the paths and the landmarks that were skipped.
pub fn vav_all(graph: &VisibilityGraph, params: &WalkParams) -> Result<(Vec<VavPath>, Vec<String>)> {
    let mut paths = Vec::new();
    let mut skipped = Vec::new();
    for id in graph.landmark_ids() {
        let p = WalkParams {
            seed: origin_seed(params.seed, id),
            ..*params
        };
        match vav_walk(graph, id, &p) {
            Ok(mut v) => paths.append(&mut v),
            Err(Error::EmptyDomain(_)) => skipped.push(id.to_owned()),
            Err(e) => return Err(e),
        }
    }
    Ok((paths, skipped))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkStrength {
    pub from: String,
    pub to: String,
    pub valid_paths: u64,
    pub rounds: u32,
    pub strength: f64,
}

/// Valid paths per ordered landmark pair over the rounds launched from the
/// origin. Pairs without valid paths are omitted.
pub fn linking_strength(paths: &[VavPath], rounds: u32) -> Result<Vec<LinkStrength>> {
    if rounds == 0 {
        return Err(Error::invalid("rounds must be positive"));
    }
    let mut counts: BTreeMap<(&str, &str), u64> = BTreeMap::new();
    for p in paths.iter().filter(|p| p.valid) {
        if let Some(d) = &p.destination_landmark {
            *counts.entry((&p.origin_landmark, d)).or_default() += 1;
        }
    }
    Ok(counts
        .into_iter()
        .map(|((from, to), n)| LinkStrength {
            from: from.to_owned(),
            to: to.to_owned(),
            valid_paths: n,
            rounds,
            strength: n as f64 / f64::from(rounds),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStrength {
    pub a: String,
    pub b: String,
    pub a_to_b: f64,
    pub b_to_a: f64,
    pub mean: f64,
}

/// Unordered pairs `a < b` with the mean of both directions.
pub fn symmetrize(directed: &[LinkStrength]) -> Vec<PairStrength> {
    let mut pairs: BTreeMap<(String, String), (f64, f64)> = BTreeMap::new();
    for s in directed {
        if s.from < s.to {
            pairs.entry((s.from.clone(), s.to.clone())).or_default().0 = s.strength;
        } else {
            pairs.entry((s.to.clone(), s.from.clone())).or_default().1 = s.strength;
        }
    }
    pairs
        .into_iter()
        .map(|((a, b), (ab, ba))| PairStrength {
            a,
            b,
            a_to_b: ab,
            b_to_a: ba,
            mean: (ab + ba) / 2.0,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagStats {
    pub tag: String,
    /// Valid paths crossing at least one edge with this tag.
    pub paths: u64,
    pub percent: f64,
    /// Of those, paths whose start can no longer reach a viewpoint of their
    /// destination within `max_steps` once the tagged edges are removed.
    pub cut_paths: u64,
    pub cut_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorridorReport {
    pub valid_paths: u64,
    pub tags: Vec<TagStats>,
}

fn percent(n: u64, total: u64) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * n as f64 / total as f64
    }
}

/// Hop-bounded search avoiding `blocked` edges.
fn reaches(graph: &VisibilityGraph, start: usize, target: usize, max_hops: u32, blocked: &BTreeSet<usize>) -> bool {
    let mut depth = HashMap::from([(start, 0u32)]);
    let mut queue = VecDeque::from([start]);
    while let Some(n) = queue.pop_front() {
        if graph.visible_landmarks(n).any(|l| l == target) {
            return true;
        }
        let d = depth[&n];
        if d == max_hops {
            continue;
        }
        for &(m, e) in graph.neighbors(n) {
            if !blocked.contains(&e) && !depth.contains_key(&m) {
                depth.insert(m, d + 1);
                queue.push_back(m);
            }
        }
    }
    false
}

/// Traversal counts per road-edge tag over the valid paths, with the share
/// of paths that removing the tagged edges would disconnect.
pub fn corridor_stats(
    graph: &VisibilityGraph,
    paths: &[VavPath],
    edge_tags: &BTreeMap<String, String>,
    max_steps: u32,
) -> Result<CorridorReport> {
    let tags: BTreeSet<&str> = edge_tags.values().map(String::as_str).collect();
    let edge_tag: Vec<Option<&str>> = graph
        .proximity_edges()
        .iter()
        .map(|e| edge_tags.get(&e.road_edge).map(String::as_str))
        .collect();

    let valid: Vec<&VavPath> = paths.iter().filter(|p| p.valid).collect();
    let mut used: Vec<BTreeSet<&str>> = Vec::with_capacity(valid.len());
    for p in &valid {
        let idx = p
            .nodes
            .iter()
            .map(|id| graph.node_index(id).ok_or_else(|| Error::invalid(format!("path node {id:?} not in graph"))))
            .collect::<Result<Vec<_>>>()?;
        let mut set = BTreeSet::new();
        for w in idx.windows(2) {
            let e = graph.edge_between(w[0], w[1]).ok_or_else(|| {
                Error::invalid(format!(
                    "path round {} steps {} -> {} without a proximity edge",
                    p.round, p.nodes[0], graph.node(w[1]).id
                ))
            })?;
            if let Some(t) = edge_tag[e] {
                set.insert(t);
            }
        }
        used.push(set);
    }

    let mut out = Vec::new();
    for tag in tags {
        let blocked: BTreeSet<usize> = (0..edge_tag.len()).filter(|&e| edge_tag[e] == Some(tag)).collect();
        let mut cache: HashMap<(usize, usize), bool> = HashMap::new();
        let (mut n, mut cut) = (0, 0);
        for (p, set) in valid.iter().zip(&used) {
            if !set.contains(tag) {
                continue;
            }
            n += 1;
            let start = graph.node_index(&p.nodes[0]).expect("checked");
            let dest = p
                .destination_landmark
                .as_deref()
                .and_then(|d| graph.landmark_index(d))
                .ok_or_else(|| Error::invalid(format!("valid path round {} lacks a known destination", p.round)))?;
            let ok = *cache
                .entry((start, dest))
                .or_insert_with(|| reaches(graph, start, dest, max_steps, &blocked));
            if !ok {
                cut += 1;
            }
        }
        let total = valid.len() as u64;
        out.push(TagStats {
            tag: tag.to_owned(),
            paths: n,
            percent: percent(n, total),
            cut_paths: cut,
            cut_percent: percent(cut, total),
        });
    }
    Ok(CorridorReport {
        valid_paths: valid.len() as u64,
        tags: out,
    })
}
