//! Perspective graph: views as nodes, mean match confidence as edge weight.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use thiserror::Error;

use crate::camera::{apply_homogeneous, nearest_pixel, project, relative_transform, unproject};
use crate::{ViewId, ViewRecord};

/// Default confidence threshold for keeping a match.
pub const DEFAULT_TAU: f64 = 0.4;
/// Default neighbourhood size.
pub const DEFAULT_K: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("a perspective graph needs at least two views, got {0}")]
    InsufficientViews(usize),
    #[error("view {0} is not a node of the graph")]
    UnknownNode(ViewId),
    #[error("duplicate view id {0}")]
    DuplicateView(ViewId),
    #[error("matching views {0} and {1} failed: {2}")]
    Matcher(ViewId, ViewId, MatchError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatchError {
    #[error("view {0} has no depth map")]
    MissingDepth(ViewId),
    #[error("no precomputed matches for pair ({0}, {1})")]
    MissingPair(ViewId, ViewId),
    #[error("{0}")]
    Backend(String),
}

/// One correspondence between view `i` and view `j`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Correspondence {
    pub pixel_i: (f64, f64),
    pub pixel_j: (f64, f64),
    pub confidence: f64,
}

/// Matches between a pair of views.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchSet {
    pub pairs: Vec<Correspondence>,
}

impl MatchSet {
    pub fn new(pairs: Vec<Correspondence>) -> Self {
        Self { pairs }
    }

    /// Same matches seen from the other view.
    pub fn swapped(&self) -> MatchSet {
        MatchSet {
            pairs: self
                .pairs
                .iter()
                .map(|c| Correspondence { pixel_i: c.pixel_j, pixel_j: c.pixel_i, confidence: c.confidence })
                .collect(),
        }
    }
}

/// Produces matches for a pair of views. Must be deterministic.
pub trait Matcher {
    fn match_views(&self, a: &ViewRecord, b: &ViewRecord) -> Result<MatchSet, MatchError>;
}

impl<M: Matcher + ?Sized> Matcher for &M {
    fn match_views(&self, a: &ViewRecord, b: &ViewRecord) -> Result<MatchSet, MatchError> {
        (**self).match_views(a, b)
    }
}

/// Mean confidence of the matches strictly above `tau`, or `None` if none survive.
pub fn pair_similarity(matches: &MatchSet, tau: f64) -> Option<f64> {
    let (sum, count) = matches
        .pairs
        .iter()
        .filter(|c| c.confidence > tau)
        .fold((0.0, 0usize), |(s, n), c| (s + c.confidence, n + 1));
    (count > 0).then(|| (sum / count as f64).clamp(0.0, 1.0))
}

/// Undirected weighted view graph. Edge weights are similarities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PerspectiveGraph {
    nodes: BTreeSet<ViewId>,
    /// Keyed by `(low id, high id)`.
    edges: BTreeMap<(ViewId, ViewId), f64>,
    tau: f64,
}

fn edge_key(a: ViewId, b: ViewId) -> (ViewId, ViewId) {
    if a <= b { (a, b) } else { (b, a) }
}

impl PerspectiveGraph {
    pub fn new(nodes: impl IntoIterator<Item = ViewId>, tau: f64) -> Self {
        Self { nodes: nodes.into_iter().collect(), edges: BTreeMap::new(), tau }
    }

    /// Inserts or replaces an edge. Self-loops and unknown endpoints are ignored.
    pub fn set_edge(&mut self, a: ViewId, b: ViewId, similarity: f64) {
        if a == b || !self.nodes.contains(&a) || !self.nodes.contains(&b) {
            return;
        }
        self.edges.insert(edge_key(a, b), similarity.clamp(0.0, 1.0));
    }

    pub fn nodes(&self) -> impl Iterator<Item = ViewId> + '_ {
        self.nodes.iter().copied()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn contains(&self, id: ViewId) -> bool {
        self.nodes.contains(&id)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(low id, high id, similarity)` in ascending key order.
    pub fn edges(&self) -> impl Iterator<Item = (ViewId, ViewId, f64)> + '_ {
        self.edges.iter().map(|(&(a, b), &s)| (a, b, s))
    }

    pub fn similarity(&self, a: ViewId, b: ViewId) -> Option<f64> {
        self.edges.get(&edge_key(a, b)).copied()
    }

    /// All neighbours of `node` with their similarity, unordered.
    pub fn neighbors(&self, node: ViewId) -> Result<Vec<(ViewId, f64)>, GraphError> {
        if !self.nodes.contains(&node) {
            return Err(GraphError::UnknownNode(node));
        }
        Ok(self
            .edges
            .iter()
            .filter_map(|(&(a, b), &s)| {
                if a == node {
                    Some((b, s))
                } else if b == node {
                    Some((a, s))
                } else {
                    None
                }
            })
            .collect())
    }

    /// Up to `k` neighbours by descending similarity, ties by ascending id.
    pub fn k_nearest(&self, node: ViewId, k: usize) -> Result<Vec<ViewId>, GraphError> {
        let mut nbrs = self.neighbors(node)?;
        nbrs.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap_or(Ordering::Equal).then(x.0.cmp(&y.0)));
        nbrs.truncate(k);
        Ok(nbrs.into_iter().map(|(id, _)| id).collect())
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<ViewId>> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for &start in &self.nodes {
            if !seen.insert(start) {
                continue;
            }
            let mut comp = alloc::vec![start];
            let mut stack = alloc::vec![start];
            while let Some(n) = stack.pop() {
                for (m, _) in self.neighbors(n).unwrap_or_default() {
                    if seen.insert(m) {
                        comp.push(m);
                        stack.push(m);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }
}

/// Evaluates every unordered pair of views and keeps the pairs with a similarity.
///
/// Pairs are always matched with the lower id first, so the result does not
/// depend on the order of `views`.
pub fn build_graph<M: Matcher + ?Sized>(views: &[ViewRecord], matcher: &M, tau: f64) -> Result<PerspectiveGraph, GraphError> {
    if views.len() < 2 {
        return Err(GraphError::InsufficientViews(views.len()));
    }
    let mut sorted: Vec<&ViewRecord> = views.iter().collect();
    sorted.sort_by_key(|v| v.id);
    if let Some(w) = sorted.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(GraphError::DuplicateView(w[0].id));
    }
    let mut graph = PerspectiveGraph::new(sorted.iter().map(|v| v.id), tau);
    for (i, a) in sorted.iter().enumerate() {
        for b in &sorted[i + 1..] {
            let matches = matcher.match_views(a, b).map_err(|e| GraphError::Matcher(a.id, b.id, e))?;
            if let Some(s) = pair_similarity(&matches, tau) {
                graph.set_edge(a.id, b.id, s);
            }
        }
    }
    Ok(graph)
}

/// Pose-consistent stand-in for a learned matcher.
///
/// Samples a pixel grid in each view, carries it into the other view with
/// the view's depth, drops samples that leave the frame or are occluded, and
/// scores each surviving correspondence `exp(-falloff * displacement / diagonal)`.
/// Both directions are sampled, so the matcher is symmetric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricMatcher {
    /// Sample every `stride`-th pixel in both axes.
    pub stride: usize,
    pub falloff: f64,
    /// Relative depth tolerance for the visibility test.
    pub occlusion_tolerance: f64,
}

impl Default for GeometricMatcher {
    fn default() -> Self {
        Self { stride: 4, falloff: 1.0, occlusion_tolerance: 0.01 }
    }
}

impl GeometricMatcher {
    fn one_way(&self, from: &ViewRecord, to: &ViewRecord, out: &mut Vec<Correspondence>, swap: bool) -> Result<(), MatchError> {
        let from_depth = from.depth.as_ref().ok_or(MatchError::MissingDepth(from.id))?;
        let to_depth = to.depth.as_ref().ok_or(MatchError::MissingDepth(to.id))?;
        let transform = relative_transform(&from.camera.pose, &to.camera.pose);
        let (tw, th) = to.camera.dims();
        let diagonal = libm::sqrt((tw * tw + th * th) as f64);
        let stride = self.stride.max(1);
        for y in (0..from.camera.height).step_by(stride) {
            for x in (0..from.camera.width).step_by(stride) {
                let d = from_depth.get(x, y);
                if d <= 0.0 {
                    continue;
                }
                let Ok(p) = unproject((x as f64, y as f64), d as f64, &from.camera.intrinsics) else { continue };
                let q = apply_homogeneous(&transform, &p);
                let Ok((u, v, z)) = project(&q, &to.camera.intrinsics) else { continue };
                let Some((px, py)) = nearest_pixel(u, v, tw, th) else { continue };
                let seen = to_depth.get(px, py) as f64;
                if seen <= 0.0 || (seen - z).abs() > self.occlusion_tolerance * z {
                    continue;
                }
                let here = (x as f64, y as f64);
                let there = (u.clamp(0.0, (tw - 1) as f64), v.clamp(0.0, (th - 1) as f64));
                let displacement = libm::hypot(u - here.0, v - here.1) / diagonal;
                let confidence = libm::exp(-self.falloff * displacement).clamp(0.0, 1.0);
                let (pixel_i, pixel_j) = if swap { (there, here) } else { (here, there) };
                out.push(Correspondence { pixel_i, pixel_j, confidence });
            }
        }
        Ok(())
    }
}

impl Matcher for GeometricMatcher {
    fn match_views(&self, a: &ViewRecord, b: &ViewRecord) -> Result<MatchSet, MatchError> {
        let mut pairs = Vec::new();
        self.one_way(a, b, &mut pairs, false)?;
        self.one_way(b, a, &mut pairs, true)?;
        Ok(MatchSet { pairs })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn set(conf: &[f64]) -> MatchSet {
        MatchSet::new(conf.iter().map(|&c| Correspondence { pixel_i: (0.0, 0.0), pixel_j: (0.0, 0.0), confidence: c }).collect())
    }

    #[test]
    fn similarity_is_mean_of_survivors() {
        let s = pair_similarity(&set(&[0.9, 0.8, 0.3]), 0.4).unwrap();
        assert!((s - 0.85).abs() < 1e-15);
        assert_eq!(pair_similarity(&set(&[0.1, 0.4, 0.2]), 0.4), None);
        assert_eq!(pair_similarity(&MatchSet::default(), 0.4), None);
    }

    #[test]
    fn k_nearest_orders_and_breaks_ties() {
        let mut g = PerspectiveGraph::new(0..6, 0.4);
        g.set_edge(0, 4, 0.7);
        g.set_edge(2, 0, 0.7);
        g.set_edge(0, 5, 0.9);
        assert_eq!(g.k_nearest(0, 8).unwrap(), vec![5, 2, 4]);
        assert_eq!(g.k_nearest(0, 2).unwrap(), vec![5, 2]);
        assert_eq!(g.k_nearest(4, 8).unwrap(), vec![0]);
        assert_eq!(g.k_nearest(9, 8), Err(GraphError::UnknownNode(9)));
        assert!(g.k_nearest(1, 8).unwrap().is_empty());
    }

    #[test]
    fn no_self_edges_and_symmetric_lookup() {
        let mut g = PerspectiveGraph::new(0..3, 0.4);
        g.set_edge(1, 1, 0.5);
        g.set_edge(2, 1, 0.6);
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.similarity(1, 2), g.similarity(2, 1));
    }

    #[test]
    fn components_split_disconnected_graph() {
        let mut g = PerspectiveGraph::new(0..5, 0.4);
        g.set_edge(0, 1, 0.5);
        g.set_edge(3, 4, 0.5);
        assert_eq!(g.components(), vec![vec![0, 1], vec![2], vec![3, 4]]);
    }

    proptest! {
        #[test]
        fn k_nearest_matches_exhaustive_sort(
            weights in proptest::collection::vec(proptest::option::of(0u8..6), 45),
            node in 0usize..10,
            k in 1usize..12,
        ) {
            let mut g = PerspectiveGraph::new(0..10, 0.4);
            let mut idx = 0;
            for a in 0..10 {
                for b in a + 1..10 {
                    if let Some(w) = weights[idx] {
                        g.set_edge(a, b, w as f64 / 5.0);
                    }
                    idx += 1;
                }
            }
            // Oracle: repeatedly extract the best remaining neighbour.
            let mut pool: Vec<(usize, f64)> = (0..10).filter_map(|m| g.similarity(node, m).map(|s| (m, s))).collect();
            let mut expected = Vec::new();
            while !pool.is_empty() && expected.len() < k {
                let mut best = 0;
                for i in 1..pool.len() {
                    let (bm, bs) = pool[best];
                    let (m, s) = pool[i];
                    if s > bs || (s == bs && m < bm) {
                        best = i;
                    }
                }
                expected.push(pool.remove(best).0);
            }
            prop_assert_eq!(g.k_nearest(node, k).unwrap(), expected);
        }
    }
}
