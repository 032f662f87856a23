//! Adaptive anchor sampling over the perspective graph.
//!
//! State follows three sets: `A` (anchors plus the `k/2` nearest neighbours
//! of every anchor, never eligible as future anchors), `P` (views inpainted
//! at least once) and `I` (views still needing work). Each round inpaints an
//! anchor and its neighbours that are still in `I`; views whose consistency
//! score exceeds the threshold leave `I`. The next anchor is drawn from
//! `(I \ A) ∩ P`, biased towards the lowest scores.
//!
//! When `(I \ A) ∩ P` is empty but `I` is not (a disconnected graph, or
//! every remaining view sits in an exclusion zone) the sampler falls back,
//! in order, to an un-inpainted view outside `A`, and then to an inpainted,
//! non-excluded view whose neighbourhood still reaches `I`. If neither
//! exists the run stops as [`DoneReason::Stalled`].

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ViewId;
use crate::graph::{GraphError, PerspectiveGraph};

/// Default retirement threshold on the consistency score.
pub const DEFAULT_SCORE_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplerError {
    #[error("the perspective graph has no nodes")]
    EmptyGraph,
    #[error("no anchor is available for another round")]
    Exhausted,
    #[error("view {0} is not part of the current round")]
    UnknownView(ViewId),
    #[error("no round is in progress")]
    NoOpenRound,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// How the next anchor is drawn from the eligible inpainted views.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum PriorityMode {
    /// Random draw with weight `1 - s`.
    #[default]
    Weighted,
    /// Always the lowest score, ties by id.
    StrictMin,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SamplerConfig {
    pub k: usize,
    pub score_threshold: f64,
    /// Round cap.
    pub max_rounds: usize,
    pub priority: PriorityMode,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { k: crate::graph::DEFAULT_K, score_threshold: DEFAULT_SCORE_THRESHOLD, max_rounds: usize::MAX, priority: PriorityMode::Weighted }
    }
}

/// Which rule produced an anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum AnchorSource {
    /// Uniform over all views.
    Initial,
    /// Drawn from `(I \ A) ∩ P`.
    Priority,
    /// Uniform over un-inpainted views outside `A`.
    Restart,
    /// An inpainted view outside `A` whose neighbourhood reaches `I`.
    Bridge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum DoneReason {
    /// Every view was retired.
    Complete,
    RoundCap,
    /// Views remain but none can become an anchor.
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NextAnchor {
    Anchor(ViewId),
    Done(DoneReason),
}

/// Views selected for one round.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RoundPlan {
    pub round: usize,
    pub anchor: ViewId,
    pub anchor_source: AnchorSource,
    /// The anchor's `k` nearest neighbours, best first.
    pub neighbors: Vec<ViewId>,
    /// Neighbours added to the exclusion set this round.
    pub excluded: Vec<ViewId>,
    /// Views to inpaint: the anchor first, then neighbours still in `I`.
    pub views: Vec<ViewId>,
}

/// One line of the sampling trajectory.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrajectoryEntry {
    pub plan: RoundPlan,
    pub scores: Vec<(ViewId, f64)>,
    pub retired: Vec<ViewId>,
}

#[derive(Debug, Clone)]
pub struct SamplerState {
    config: SamplerConfig,
    seed: u64,
    rng: ChaCha8Rng,
    all: BTreeSet<ViewId>,
    excluded: BTreeSet<ViewId>,
    anchors: Vec<ViewId>,
    inpainted: BTreeSet<ViewId>,
    masked: BTreeSet<ViewId>,
    scores: BTreeMap<ViewId, f64>,
    round: usize,
    next: Option<(ViewId, AnchorSource)>,
    open: Option<RoundPlan>,
    done: Option<DoneReason>,
}

fn uniform<R: Rng>(rng: &mut R, pool: &[ViewId]) -> ViewId {
    pool[rng.random_range(0..pool.len())]
}

impl SamplerState {
    /// Starts a run: nothing inpainted, every view masked, first anchor drawn
    /// uniformly with the seeded generator.
    pub fn init(graph: &PerspectiveGraph, seed: u64, config: SamplerConfig) -> Result<Self, SamplerError> {
        let all: BTreeSet<ViewId> = graph.nodes().collect();
        if all.is_empty() {
            return Err(SamplerError::EmptyGraph);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool: Vec<ViewId> = all.iter().copied().collect();
        let first = uniform(&mut rng, &pool);
        let done = (config.max_rounds == 0).then_some(DoneReason::RoundCap);
        Ok(Self {
            config,
            seed,
            rng,
            masked: all.clone(),
            all,
            excluded: BTreeSet::new(),
            anchors: Vec::new(),
            inpainted: BTreeSet::new(),
            scores: BTreeMap::new(),
            round: 0,
            next: Some((first, AnchorSource::Initial)),
            open: None,
            done,
        })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn round(&self) -> usize {
        self.round
    }

    /// `A`: anchors and their exclusion zones.
    pub fn anchor_set(&self) -> &BTreeSet<ViewId> {
        &self.excluded
    }

    /// Anchors in the order they were used.
    pub fn anchor_history(&self) -> &[ViewId] {
        &self.anchors
    }

    /// `P`.
    pub fn inpainted_set(&self) -> &BTreeSet<ViewId> {
        &self.inpainted
    }

    /// `I`.
    pub fn masked_set(&self) -> &BTreeSet<ViewId> {
        &self.masked
    }

    pub fn scores(&self) -> &BTreeMap<ViewId, f64> {
        &self.scores
    }

    pub fn pending_anchor(&self) -> Option<ViewId> {
        self.next.map(|(id, _)| id)
    }

    /// Replaces the pending anchor, e.g. to start a run from a chosen view.
    pub fn set_pending_anchor(&mut self, anchor: ViewId, graph: &PerspectiveGraph) -> Result<(), SamplerError> {
        if !graph.contains(anchor) {
            return Err(SamplerError::Graph(GraphError::UnknownNode(anchor)));
        }
        if self.done.is_some() || self.excluded.contains(&anchor) {
            return Err(SamplerError::Exhausted);
        }
        self.next = Some((anchor, AnchorSource::Initial));
        Ok(())
    }

    pub fn done(&self) -> Option<DoneReason> {
        self.done
    }

    /// Inpainted views still in `I`, worst score first.
    pub fn priority_queue(&self) -> Vec<(ViewId, f64)> {
        let mut q: Vec<(ViewId, f64)> =
            self.masked.iter().filter_map(|id| self.scores.get(id).map(|&s| (*id, s))).collect();
        q.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(core::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
        q
    }

    /// Opens a round around the pending anchor.
    pub fn begin_round(&mut self, graph: &PerspectiveGraph) -> Result<RoundPlan, SamplerError> {
        if self.done.is_some() || self.round >= self.config.max_rounds {
            return Err(SamplerError::Exhausted);
        }
        let (anchor, anchor_source) = self.next.take().ok_or(SamplerError::Exhausted)?;
        let k = self.config.k;
        let neighbors = graph.k_nearest(anchor, k)?;
        let excluded: Vec<ViewId> = neighbors.iter().copied().take(k / 2).collect();
        self.anchors.push(anchor);
        self.excluded.insert(anchor);
        self.excluded.extend(excluded.iter().copied());
        let mut views = alloc::vec![anchor];
        views.extend(neighbors.iter().copied().filter(|v| self.masked.contains(v)));
        let plan = RoundPlan { round: self.round, anchor, anchor_source, neighbors, excluded, views };
        self.open = Some(plan.clone());
        Ok(plan)
    }

    /// Closes the open round with the consistency score of each inpainted
    /// view; returns the views retired from `I`.
    pub fn record_round(&mut self, results: &[(ViewId, f64)]) -> Result<TrajectoryEntry, SamplerError> {
        let plan = self.open.take().ok_or(SamplerError::NoOpenRound)?;
        if let Some(&(id, _)) = results.iter().find(|(id, _)| !plan.views.contains(id)) {
            self.open = Some(plan);
            return Err(SamplerError::UnknownView(id));
        }
        let mut retired = Vec::new();
        for &(id, s) in results {
            self.inpainted.insert(id);
            self.scores.insert(id, s);
            if s > self.config.score_threshold && self.masked.remove(&id) {
                retired.push(id);
            }
        }
        self.round += 1;
        Ok(TrajectoryEntry { plan, scores: results.to_vec(), retired })
    }

    /// Chooses the anchor for the next round, or reports why the run ends.
    pub fn next_anchor(&mut self, graph: &PerspectiveGraph) -> NextAnchor {
        if let Some(reason) = self.done {
            return NextAnchor::Done(reason);
        }
        let reason = if self.masked.is_empty() {
            Some(DoneReason::Complete)
        } else if self.round >= self.config.max_rounds {
            Some(DoneReason::RoundCap)
        } else {
            None
        };
        if let Some(reason) = reason {
            self.done = Some(reason);
            self.next = None;
            return NextAnchor::Done(reason);
        }
        match self.pick(graph) {
            Some((id, source)) => {
                self.next = Some((id, source));
                NextAnchor::Anchor(id)
            }
            None => {
                self.done = Some(DoneReason::Stalled);
                self.next = None;
                NextAnchor::Done(DoneReason::Stalled)
            }
        }
    }

    fn pick(&mut self, graph: &PerspectiveGraph) -> Option<(ViewId, AnchorSource)> {
        let eligible: Vec<ViewId> =
            self.masked.iter().copied().filter(|v| !self.excluded.contains(v) && self.inpainted.contains(v)).collect();
        if !eligible.is_empty() {
            return Some((self.pick_by_priority(&eligible), AnchorSource::Priority));
        }
        let fresh: Vec<ViewId> =
            self.masked.iter().copied().filter(|v| !self.excluded.contains(v) && !self.inpainted.contains(v)).collect();
        if !fresh.is_empty() {
            return Some((uniform(&mut self.rng, &fresh), AnchorSource::Restart));
        }
        let k = self.config.k;
        let bridges: Vec<ViewId> = self
            .all
            .iter()
            .copied()
            .filter(|v| !self.excluded.contains(v))
            .filter(|v| graph.k_nearest(*v, k).map(|n| n.iter().any(|m| self.masked.contains(m))).unwrap_or(false))
            .collect();
        if !bridges.is_empty() {
            return Some((uniform(&mut self.rng, &bridges), AnchorSource::Bridge));
        }
        None
    }

    fn pick_by_priority(&mut self, eligible: &[ViewId]) -> ViewId {
        let score = |v: &ViewId| self.scores.get(v).copied().unwrap_or(0.0);
        match self.config.priority {
            PriorityMode::StrictMin => *eligible
                .iter()
                .min_by(|a, b| score(a).partial_cmp(&score(b)).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(b)))
                .expect("non-empty"),
            PriorityMode::Weighted => {
                let weights: Vec<f64> = eligible.iter().map(|v| (1.0 - score(v)).max(0.0)).collect();
                let total: f64 = weights.iter().sum();
                if !(total > 0.0) {
                    return uniform(&mut self.rng, eligible);
                }
                let mut r = self.rng.random::<f64>() * total;
                for (v, w) in eligible.iter().zip(&weights) {
                    if r < *w {
                        return *v;
                    }
                    r -= w;
                }
                *eligible.last().expect("non-empty")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AuditError {
    #[error("round {round}: anchor {anchor} was already an anchor")]
    RepeatedAnchor { round: usize, anchor: ViewId },
    #[error("round {round}: anchor {anchor} lies in an earlier exclusion zone")]
    ExcludedAnchor { round: usize, anchor: ViewId },
    #[error("round {round}: excluded set does not match the first k/2 neighbours")]
    WrongExclusion { round: usize },
    #[error("round {round}: view {view} inpainted after it was retired")]
    RetiredViewRevisited { round: usize, view: ViewId },
    #[error("round {round}: recorded neighbours differ from the graph")]
    WrongNeighbors { round: usize },
}

/// Replays a trajectory against the graph and checks the sampling rules:
/// no anchor repeats, no anchor comes from an earlier exclusion zone, each
/// round excludes exactly its first `k/2` neighbours, and retired views are
/// only revisited as anchors.
pub fn audit_trajectory(entries: &[TrajectoryEntry], graph: &PerspectiveGraph, k: usize) -> Result<(), AuditError> {
    let mut excluded = BTreeSet::new();
    let mut anchors = BTreeSet::new();
    let mut retired = BTreeSet::new();
    for e in entries {
        let p = &e.plan;
        if !anchors.insert(p.anchor) {
            return Err(AuditError::RepeatedAnchor { round: p.round, anchor: p.anchor });
        }
        if excluded.contains(&p.anchor) {
            return Err(AuditError::ExcludedAnchor { round: p.round, anchor: p.anchor });
        }
        let expected = graph.k_nearest(p.anchor, k).map_err(|_| AuditError::WrongNeighbors { round: p.round })?;
        if expected != p.neighbors {
            return Err(AuditError::WrongNeighbors { round: p.round });
        }
        if p.excluded.as_slice() != &expected[..expected.len().min(k / 2)] {
            return Err(AuditError::WrongExclusion { round: p.round });
        }
        if let Some(&v) = p.views.iter().skip(1).find(|v| retired.contains(*v)) {
            return Err(AuditError::RetiredViewRevisited { round: p.round, view: v });
        }
        excluded.insert(p.anchor);
        excluded.extend(p.excluded.iter().copied());
        retired.extend(e.retired.iter().copied());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ring(n: usize) -> PerspectiveGraph {
        let mut g = PerspectiveGraph::new(0..n, 0.4);
        for i in 0..n {
            for d in 1..=4 {
                let j = (i + d) % n;
                if i != j {
                    g.set_edge(i, j, 0.95 - 0.05 * d as f64);
                }
            }
        }
        g
    }

    fn cfg(k: usize) -> SamplerConfig {
        SamplerConfig { k, ..SamplerConfig::default() }
    }

    #[test]
    fn single_view_graph_anchor() {
        let g = PerspectiveGraph::new([7], 0.4);
        let s = SamplerState::init(&g, 3, cfg(8)).unwrap();
        assert_eq!(s.pending_anchor(), Some(7));
        assert!(matches!(SamplerState::init(&PerspectiveGraph::new([], 0.4), 0, cfg(8)), Err(SamplerError::EmptyGraph)));
    }

    #[test]
    fn seed_fixes_initial_anchor() {
        let g = ring(10);
        let a = SamplerState::init(&g, 42, cfg(8)).unwrap().pending_anchor();
        for _ in 0..5 {
            assert_eq!(SamplerState::init(&g, 42, cfg(8)).unwrap().pending_anchor(), a);
        }
    }

    #[test]
    fn initial_anchor_is_uniform() {
        // Chi-square style check: every view within 3 sigma of 100 hits.
        let g = ring(10);
        let mut hits = [0usize; 10];
        for seed in 0..1000u64 {
            hits[SamplerState::init(&g, seed, cfg(8)).unwrap().pending_anchor().unwrap()] += 1;
        }
        let sigma = (1000.0f64 * 0.1 * 0.9).sqrt();
        for h in hits {
            assert!((h as f64 - 100.0).abs() <= 3.0 * sigma, "{hits:?}");
        }
        let chi2: f64 = hits.iter().map(|&h| (h as f64 - 100.0).powi(2) / 100.0).sum();
        // 99.9th percentile of chi-square with 9 degrees of freedom.
        assert!(chi2 < 27.88, "chi2 = {chi2}");
    }

    #[test]
    fn round_adds_half_k_to_anchor_set() {
        let g = ring(20);
        let mut s = SamplerState::init(&g, 1, cfg(8)).unwrap();
        let plan = s.begin_round(&g).unwrap();
        assert_eq!(plan.neighbors.len(), 8);
        assert_eq!(plan.excluded.len(), 4);
        assert_eq!(s.anchor_set().len(), 5);
        assert_eq!(plan.views.len(), 9);
        assert_eq!(plan.views[0], plan.anchor);
    }

    #[test]
    fn retired_neighbours_are_skipped() {
        let g = ring(12);
        let mut s = SamplerState::init(&g, 0, cfg(8)).unwrap();
        let plan = s.begin_round(&g).unwrap();
        let results: Vec<(ViewId, f64)> = plan.views.iter().map(|&v| (v, 0.99)).collect();
        s.record_round(&results).unwrap();
        // Force an anchor whose neighbours are all retired.
        s.next = Some((plan.neighbors[7], AnchorSource::Restart));
        s.masked.retain(|v| !g.k_nearest(plan.neighbors[7], 8).unwrap().contains(v));
        let plan2 = s.begin_round(&g).unwrap();
        assert_eq!(plan2.views, vec![plan.neighbors[7]]);
    }

    #[test]
    fn threshold_split_and_priority_order() {
        let g = ring(12);
        let mut s = SamplerState::init(&g, 5, cfg(8)).unwrap();
        let plan = s.begin_round(&g).unwrap();
        let (a, b) = (plan.views[0], plan.views[1]);
        assert!(matches!(s.record_round(&[(99, 0.5)]), Err(SamplerError::UnknownView(99))));
        let entry = s.record_round(&[(a, 0.85), (b, 0.95)]).unwrap();
        assert_eq!(entry.retired, vec![b]);
        assert!(s.masked_set().contains(&a));
        assert!(!s.masked_set().contains(&b));
        assert_eq!(s.inpainted_set().len(), 2);

        let mut s = SamplerState::init(&g, 5, cfg(8)).unwrap();
        let plan = s.begin_round(&g).unwrap();
        let scores = [0.3, 0.8, 0.1, 0.5, 0.8, 0.2, 0.95, 0.7, 0.6];
        let results: Vec<(ViewId, f64)> = plan.views.iter().copied().zip(scores).collect();
        s.record_round(&results).unwrap();
        let mut oracle: Vec<(ViewId, f64)> = results.iter().copied().filter(|r| r.1 <= 0.9).collect();
        // Exhaustive: selection sort on (score, id).
        for i in 0..oracle.len() {
            for j in i + 1..oracle.len() {
                if (oracle[j].1, oracle[j].0) < (oracle[i].1, oracle[i].0) {
                    oracle.swap(i, j);
                }
            }
        }
        assert_eq!(s.priority_queue(), oracle);
    }

    #[test]
    fn all_high_scores_retire_everything_in_round() {
        let g = ring(9);
        let mut s = SamplerState::init(&g, 2, cfg(8)).unwrap();
        let plan = s.begin_round(&g).unwrap();
        let results: Vec<(ViewId, f64)> = plan.views.iter().map(|&v| (v, 0.95)).collect();
        let e = s.record_round(&results).unwrap();
        assert_eq!(e.retired.len(), plan.views.len());
        assert_eq!(s.next_anchor(&g), NextAnchor::Done(DoneReason::Complete));
    }

    #[test]
    fn singleton_eligible_set_is_chosen() {
        let g = ring(12);
        let mut s = SamplerState::init(&g, 8, cfg(2)).unwrap();
        let plan = s.begin_round(&g).unwrap();
        // anchor retires, first neighbour is excluded, second stays eligible.
        let results = [(plan.views[0], 1.0), (plan.views[1], 0.5), (plan.views[2], 0.4)];
        s.record_round(&results).unwrap();
        assert_eq!(s.next_anchor(&g), NextAnchor::Anchor(plan.views[2]));
    }

    fn run_oracle(g: &PerspectiveGraph, seed: u64, k: usize) -> (SamplerState, Vec<TrajectoryEntry>) {
        let mut s = SamplerState::init(g, seed, cfg(k)).unwrap();
        let mut log = Vec::new();
        loop {
            let plan = s.begin_round(g).unwrap();
            let results: Vec<(ViewId, f64)> = plan.views.iter().map(|&v| (v, 1.0)).collect();
            log.push(s.record_round(&results).unwrap());
            if let NextAnchor::Done(_) = s.next_anchor(g) {
                break;
            }
        }
        (s, log)
    }

    #[test]
    fn disconnected_clusters_all_processed() {
        let mut g = PerspectiveGraph::new(0..12, 0.4);
        for a in 0..6 {
            for b in a + 1..6 {
                g.set_edge(a, b, 0.8);
                g.set_edge(a + 6, b + 6, 0.8);
            }
        }
        for seed in 0..100 {
            let (s, log) = run_oracle(&g, seed, 4);
            assert_eq!(s.done(), Some(DoneReason::Complete));
            assert!(s.masked_set().is_empty());
            assert!(log.len() <= 12);
            audit_trajectory(&log, &g, 4).unwrap();
        }
    }

    #[test]
    fn round_cap_stops_the_run() {
        let g = ring(30);
        let mut s = SamplerState::init(&g, 0, SamplerConfig { k: 2, max_rounds: 2, ..SamplerConfig::default() }).unwrap();
        for _ in 0..2 {
            let plan = s.begin_round(&g).unwrap();
            let r: Vec<(ViewId, f64)> = plan.views.iter().map(|&v| (v, 0.5)).collect();
            s.record_round(&r).unwrap();
            s.next_anchor(&g);
        }
        assert_eq!(s.done(), Some(DoneReason::RoundCap));
        assert_eq!(s.begin_round(&g), Err(SamplerError::Exhausted));
        let zero = SamplerState::init(&g, 0, SamplerConfig { max_rounds: 0, ..SamplerConfig::default() }).unwrap();
        assert_eq!(zero.done(), Some(DoneReason::RoundCap));
    }

    #[test]
    fn strict_min_picks_worst_score() {
        let g = ring(20);
        let mut s = SamplerState::init(&g, 3, SamplerConfig { k: 2, priority: PriorityMode::StrictMin, ..SamplerConfig::default() }).unwrap();
        let plan = s.begin_round(&g).unwrap();
        let results = [(plan.views[0], 1.0), (plan.views[1], 0.2), (plan.views[2], 0.6)];
        s.record_round(&results).unwrap();
        // views[1] is excluded (first k/2 neighbour), so views[2] is the only choice.
        assert_eq!(s.next_anchor(&g), NextAnchor::Anchor(plan.views[2]));
    }

    #[test]
    fn audit_catches_violations() {
        let g = ring(20);
        let (_, log) = run_oracle(&g, 9, 8);
        audit_trajectory(&log, &g, 8).unwrap();
        let mut bad = log.clone();
        let repeated = bad[0].clone();
        bad.push(repeated);
        assert!(matches!(audit_trajectory(&bad, &g, 8), Err(AuditError::RepeatedAnchor { .. })));
        if log.len() > 1 {
            let mut bad = log.clone();
            bad[1].plan.anchor = log[0].plan.excluded[0];
            bad[1].plan.neighbors = g.k_nearest(bad[1].plan.anchor, 8).unwrap();
            assert!(matches!(audit_trajectory(&bad, &g, 8), Err(AuditError::ExcludedAnchor { .. })));
        }
    }
}
