//! The iterative inpainting loop.
//!
//! Each round: the sampler picks an anchor, the anchor is inpainted with a
//! single candidate, its depth is estimated, and every adjacent view still
//! needing work gets the anchor content propagated into its mask, `m`
//! candidates, and a consistency check that picks one. The scene model is
//! then refit on every view inpainted so far.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::consistency::{ConsistencyError, ConsistencyScore, DEFAULT_CANDIDATES, DEFAULT_ETA, FeatureExtractor, ScoredView, score_all};
use crate::graph::{DEFAULT_K, DEFAULT_TAU, GraphError, Matcher, PerspectiveGraph, build_graph};
use crate::imaging::{DepthMap, Image, Mask};
use crate::inpaint::{DEFAULT_STEPS, InpaintError, InpaintRequest, Inpainter, inpaint_checked};
use crate::metrics::{DEFAULT_LAMBDA, LossReport, MetricError, masked_loss};
use crate::propagation::{DepthEstimator, DepthQuery, EstimatorError, PropagationError, depth_for, propagate};
use crate::sampler::{DEFAULT_SCORE_THRESHOLD, DoneReason, NextAnchor, PriorityMode, SamplerConfig, SamplerError, SamplerState, TrajectoryEntry};
use crate::scene::{SceneError, SceneModel};
use crate::{ViewId, ViewRecord, derive_seed};

/// Round cap used when none is configured.
pub const DEFAULT_ITERS: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Inpaint(#[from] InpaintError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Propagation(#[from] PropagationError),
    #[error(transparent)]
    Consistency(#[from] ConsistencyError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("view {0} is not in the dataset")]
    UnknownView(ViewId),
    #[error("replay diverged in round {round}: {reason}")]
    ReplayDiverged { round: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct PipelineConfig {
    /// Minimum mean match confidence for a graph edge.
    pub tau: f64,
    /// Neighbours per anchor.
    pub k: usize,
    /// Candidates per adjacent view.
    pub m: usize,
    /// Weight of the RGB term in the consistency score.
    pub eta: f64,
    /// Consistency score above which a view is retired.
    pub score_threshold: f64,
    /// D-SSIM weight in the scene loss.
    pub lambda: f64,
    /// Round cap.
    pub iters: usize,
    pub seed: u64,
    pub priority: PriorityMode,
    /// When false, a seeded random candidate is accepted and every view
    /// retires after its first round.
    pub verification: bool,
    /// Diffusion steps forwarded to the inpainter.
    pub steps: u32,
    pub prompt: Option<String>,
    /// Optimisation steps per scene update.
    pub scene_steps: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            k: DEFAULT_K,
            m: DEFAULT_CANDIDATES,
            eta: DEFAULT_ETA,
            score_threshold: DEFAULT_SCORE_THRESHOLD,
            lambda: DEFAULT_LAMBDA,
            iters: DEFAULT_ITERS,
            seed: 0,
            priority: PriorityMode::Weighted,
            verification: true,
            steps: DEFAULT_STEPS,
            prompt: None,
            scene_steps: 1000,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) { Ok(()) } else { Err(PipelineError::Config(alloc::format!("{name} must be in [0, 1], got {v}"))) }
        };
        unit("tau", self.tau)?;
        unit("eta", self.eta)?;
        unit("score_threshold", self.score_threshold)?;
        unit("lambda", self.lambda)?;
        if self.k == 0 {
            return Err(PipelineError::Config("k must be at least 1".to_string()));
        }
        if self.m == 0 {
            return Err(PipelineError::Config("m must be at least 1".to_string()));
        }
        Ok(())
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig { k: self.k, score_threshold: self.score_threshold, max_rounds: self.iters, priority: self.priority }
    }
}

/// Pluggable components of a run.
pub struct Backends<'a> {
    pub depth: &'a dyn DepthEstimator,
    pub inpainter: &'a dyn Inpainter,
    pub extractor: &'a dyn FeatureExtractor,
    pub scene: &'a mut dyn SceneModel,
}

/// What happened to one view in a round.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ViewOutcome {
    pub view: ViewId,
    /// Propagation coverage; `None` for the anchor.
    pub coverage: Option<f64>,
    pub selected: usize,
    /// Score handed to the sampler.
    pub score: f64,
    /// Scores of all candidates; empty for the anchor.
    pub candidates: Vec<ConsistencyScore>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RoundReport {
    pub round: usize,
    pub anchor: ViewId,
    pub adjacent: Vec<ViewId>,
    pub outcomes: Vec<ViewOutcome>,
    pub retired: Vec<ViewId>,
    /// Views the scene model was refit on.
    pub updated: Vec<ViewId>,
    /// Scene loss per updated view after the refit.
    pub losses: Vec<(ViewId, LossReport)>,
    /// Milliseconds spent in the round, when a clock is available.
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub graph: PerspectiveGraph,
    pub reports: Vec<RoundReport>,
    pub trajectory: Vec<TrajectoryEntry>,
    /// Latest accepted image per view; untouched views keep their input.
    pub images: BTreeMap<ViewId, Image>,
    pub inpainted: Vec<ViewId>,
    pub done: DoneReason,
}

/// Extra hooks for a run.
#[derive(Default)]
pub struct RunOptions<'a> {
    /// Returns milliseconds since some fixed point.
    pub clock: Option<&'a dyn Fn() -> f64>,
    /// A previous run's log. Every round and every anchor choice is
    /// checked against it; the first difference stops the run.
    pub replay: Option<&'a [TrajectoryEntry]>,
    pub on_round: Option<&'a mut dyn FnMut(&RoundReport, &TrajectoryEntry)>,
    /// Starts from this view instead of a random one.
    pub first_anchor: Option<ViewId>,
}

pub fn build_perspective_graph<M: Matcher + ?Sized>(views: &[ViewRecord], matcher: &M, config: &PipelineConfig) -> Result<PerspectiveGraph, PipelineError> {
    Ok(build_graph(views, matcher, config.tau)?)
}

struct Working<'v> {
    views: BTreeMap<ViewId, &'v ViewRecord>,
    images: BTreeMap<ViewId, Image>,
    depths: BTreeMap<ViewId, DepthMap>,
}

impl Working<'_> {
    fn record(&self, id: ViewId) -> Result<&ViewRecord, PipelineError> {
        self.views.get(&id).copied().ok_or(PipelineError::UnknownView(id))
    }

    fn accepted(&self, id: ViewId) -> Result<ViewRecord, PipelineError> {
        let v = self.record(id)?;
        Ok(ViewRecord {
            id,
            image: self.images[&id].clone(),
            mask: Mask::empty(v.mask.width(), v.mask.height()),
            depth: self.depths.get(&id).cloned(),
            camera: v.camera,
        })
    }
}

fn request(config: &PipelineConfig, view: ViewId, image: Image, mask: &Mask, n: usize, round: usize) -> Result<InpaintRequest, PipelineError> {
    let seed = derive_seed(config.seed, &[round as u64, view as u64]);
    let mut r = InpaintRequest::new(view, image, mask.clone(), seed)?.with_candidates(n);
    r.steps = config.steps;
    r.prompt = config.prompt.clone();
    Ok(r)
}

/// Runs the loop on `views` over a prebuilt `graph`.
pub fn run_pipeline(
    views: &[ViewRecord],
    graph: PerspectiveGraph,
    config: &PipelineConfig,
    backends: Backends<'_>,
    mut options: RunOptions<'_>,
) -> Result<PipelineOutput, PipelineError> {
    config.validate()?;
    let Backends { depth, inpainter, extractor, scene } = backends;
    let mut work = Working {
        views: views.iter().map(|v| (v.id, v)).collect(),
        images: views.iter().map(|v| (v.id, v.image.clone())).collect(),
        depths: BTreeMap::new(),
    };
    for id in graph.nodes() {
        work.record(id)?;
    }
    // Initial fit on the masked inputs.
    scene.set_step_budget(config.scene_steps);
    scene.update(&views.iter().map(|v| (v.clone(), 1.0)).collect::<Vec<_>>())?;

    let mut sampler = SamplerState::init(&graph, config.seed, config.sampler())?;
    let mut reports = Vec::new();
    let mut trajectory = Vec::new();
    let mut inpainted: Vec<ViewId> = Vec::new();
    let mut pick_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[0x005E_1EC7]));

    if let Some(a) = options.first_anchor
        && sampler.done().is_none() {
            sampler.set_pending_anchor(a, &graph)?;
        }
    if let Some(log) = options.replay
        && log.first().map(|e| e.plan.anchor) != sampler.pending_anchor().filter(|_| sampler.done().is_none()) {
            return Err(PipelineError::ReplayDiverged { round: 0, reason: "initial anchor differs from the log".to_string() });
        }

    while sampler.done().is_none() {
        let started = options.clock.map(|c| c());
        let plan = sampler.begin_round(&graph)?;
        let round = plan.round;
        let anchor_id = plan.anchor;
        let anchor_view = work.record(anchor_id)?;
        let anchor_cam = anchor_view.camera;

        let render = scene.render(&anchor_cam)?;
        let req = request(config, anchor_id, render, &anchor_view.mask, 1, round)?;
        let anchor_img = inpaint_checked(inpainter, &req)?.swap_remove(0);
        let anchor_depth = depth_for(&DepthQuery { view: anchor_id, image: &anchor_img, camera: &anchor_cam }, depth)?;

        let mut outcomes = alloc::vec![ViewOutcome { view: anchor_id, coverage: None, selected: 0, score: 1.0, candidates: Vec::new() }];
        let mut accepted = alloc::vec![(anchor_id, anchor_img.clone(), anchor_depth.clone())];

        for &v in &plan.views[1..] {
            let target = work.record(v)?;
            let render = scene.render(&target.camera)?;
            let prop = propagate(&anchor_img, &anchor_depth, &anchor_cam, &render, &target.mask, &target.camera)?;
            let req = request(config, v, prop.image, &target.mask, config.m, round)?.with_reference(anchor_img.clone());
            let candidates = inpaint_checked(inpainter, &req)?;
            let depths = candidates
                .iter()
                .map(|c| depth_for(&DepthQuery { view: v, image: c, camera: &target.camera }, depth))
                .collect::<Result<Vec<_>, _>>()?;
            let (selected, score, scores) = if target.mask.is_empty() {
                (0, 1.0, Vec::new())
            } else {
                let scored: Vec<ScoredView<'_>> = candidates.iter().zip(&depths).map(|(c, d)| ScoredView::new(c, d)).collect();
                let scores = score_all(&scored, ScoredView::new(&anchor_img, &anchor_depth), &target.mask, extractor, config.eta)?;
                if config.verification {
                    let mut best = 0;
                    for i in 1..scores.len() {
                        if scores[i].s > scores[best].s {
                            best = i;
                        }
                    }
                    (best, scores[best].s, scores)
                } else {
                    (pick_rng.random_range(0..candidates.len()), 1.0, scores)
                }
            };
            outcomes.push(ViewOutcome { view: v, coverage: Some(prop.coverage), selected, score, candidates: scores });
            let mut candidates = candidates;
            let mut depths = depths;
            accepted.push((v, candidates.swap_remove(selected), depths.swap_remove(selected)));
        }

        for (v, img, d) in accepted {
            work.images.insert(v, img);
            work.depths.insert(v, d);
            if !inpainted.contains(&v) {
                inpainted.push(v);
            }
        }
        let results: Vec<(ViewId, f64)> = outcomes.iter().map(|o| (o.view, o.score)).collect();
        let entry = sampler.record_round(&results)?;

        if let Some(log) = options.replay {
            let expected = log.get(round).ok_or_else(|| PipelineError::ReplayDiverged { round, reason: "log has fewer rounds".to_string() })?;
            if *expected != entry {
                return Err(PipelineError::ReplayDiverged { round, reason: "round differs from the log".to_string() });
            }
        }

        // Refit on the whole inpainted set.
        let mut updated: Vec<ViewId> = sampler.inpainted_set().iter().copied().collect();
        updated.sort_unstable();
        let batch = updated.iter().map(|&id| Ok((work.accepted(id)?, 1.0))).collect::<Result<Vec<_>, PipelineError>>()?;
        scene.set_step_budget(config.scene_steps);
        scene.update(&batch)?;
        let mut losses = Vec::with_capacity(batch.len());
        for (view, _) in &batch {
            let rendered = scene.render(&view.camera)?;
            losses.push((view.id, masked_loss(&rendered, &view.image, &view.mask, config.lambda)?));
        }

        let next = sampler.next_anchor(&graph);
        if let Some(log) = options.replay {
            let logged = log.get(round + 1).map(|e| e.plan.anchor);
            let chosen = match next {
                NextAnchor::Anchor(a) => Some(a),
                NextAnchor::Done(_) => None,
            };
            if logged != chosen {
                return Err(PipelineError::ReplayDiverged { round: round + 1, reason: alloc::format!("next anchor {chosen:?}, log has {logged:?}") });
            }
        }

        let report = RoundReport {
            round,
            anchor: anchor_id,
            adjacent: entry.plan.views[1..].to_vec(),
            outcomes,
            retired: entry.retired.clone(),
            updated,
            losses,
            wall_ms: match (options.clock, started) {
                (Some(c), Some(s)) => Some(c() - s),
                _ => None,
            },
        };
        if let Some(hook) = options.on_round.as_mut() {
            hook(&report, &entry);
        }
        reports.push(report);
        trajectory.push(entry);
    }

    let done = sampler.done().unwrap_or(DoneReason::Stalled);
    Ok(PipelineOutput { graph, reports, trajectory, images: work.images, inpainted, done })
}

/// Checks that every scene update only used views accepted in the same or
/// an earlier round. Returns the first offending `(round, view)`.
pub fn audit_reports(reports: &[RoundReport]) -> Result<(), (usize, ViewId)> {
    let mut accepted = alloc::collections::BTreeSet::new();
    for r in reports {
        accepted.extend(r.outcomes.iter().map(|o| o.view));
        if let Some(&v) = r.updated.iter().find(|v| !accepted.contains(*v)) {
            return Err((r.round, v));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consistency::PatchStatsExtractor;
    use crate::graph::GeometricMatcher;
    use crate::harness::{SceneSpec, generate};
    use crate::metrics::{Psnr, evaluate_scene};
    use crate::scene::ViewBankModel;

    #[test]
    fn defaults_match_reference_hyperparameters() {
        let c = PipelineConfig::default();
        assert_eq!((c.tau, c.k, c.m, c.eta, c.score_threshold, c.lambda), (0.4, 8, 4, 0.7, 0.9, 0.2));
        c.validate().unwrap();
        assert!(PipelineConfig { eta: 1.5, ..c.clone() }.validate().is_err());
        assert!(PipelineConfig { m: 0, ..c }.validate().is_err());
    }

    fn small() -> crate::harness::SyntheticDataset {
        generate(&SceneSpec::orbit_room(48, 36, 6), 1).unwrap()
    }

    #[test]
    fn zero_iterations_is_identity() {
        let ds = small();
        let config = PipelineConfig { iters: 0, ..PipelineConfig::default() };
        let graph = build_perspective_graph(&ds.views, &GeometricMatcher::default(), &config).unwrap();
        let mut bank = ViewBankModel::new();
        let out = run_pipeline(
            &ds.views,
            graph,
            &config,
            Backends { depth: &ds.depth_oracle(), inpainter: &ds.oracle_inpainter(), extractor: &PatchStatsExtractor::default(), scene: &mut bank },
            RunOptions::default(),
        )
        .unwrap();
        assert!(out.reports.is_empty());
        assert_eq!(out.done, DoneReason::RoundCap);
        for v in &ds.views {
            assert_eq!(out.images[&v.id], v.image);
        }
    }

    #[test]
    fn oracle_run_recovers_ground_truth() {
        let ds = small();
        let config = PipelineConfig::default();
        let graph = build_perspective_graph(&ds.views, &GeometricMatcher::default(), &config).unwrap();
        let mut bank = ViewBankModel::new();
        let out = run_pipeline(
            &ds.views,
            graph,
            &config,
            Backends { depth: &ds.depth_oracle(), inpainter: &ds.oracle_inpainter(), extractor: &PatchStatsExtractor::default(), scene: &mut bank },
            RunOptions::default(),
        )
        .unwrap();
        assert_eq!(out.done, DoneReason::Complete);
        audit_reports(&out.reports).unwrap();
        let table = evaluate_scene(&bank, &ds.ground_truth_records()).unwrap();
        assert_eq!(table.mean_psnr, Psnr::Perfect);
    }
}
