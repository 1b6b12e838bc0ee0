//! Two-stage semantic layout.
//!
//! Stage one places topics by projecting their embeddings onto a frozen
//! two-component PCA basis and rings each topic's contents around it. Stage
//! two nudges content nodes toward semantically related foreign topics with a
//! thresholded attractive force, while a spring keeps them near their ring
//! slot. Topic positions are never touched by stage two.

mod pca;

use std::collections::BTreeSet;
use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CanvasState, NodeId, Point};

pub use pca::{fit_pca_basis, PcaBasis};

/// 2π(1 − 1/φ): successive multiples never line up.
pub const GOLDEN_ANGLE: f64 = PI * (3.0 - 2.236_067_977_499_79);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LayoutError {
    #[error("no embeddings to fit")]
    EmptyInput,
    #[error("embedding dimension {0} is too small for a 2D projection")]
    DimensionTooSmall(usize),
    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("cosine similarity of a zero vector")]
    ZeroVector,
    #[error("no layout basis has been fitted")]
    BasisMissing,
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("invalid layout parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutParams {
    /// Cosine similarity a content/topic pair must exceed to attract.
    pub tau: f64,
    pub radial_radius: f64,
    /// Largest displacement of any node in one refinement iteration.
    pub step_max: f64,
    pub iterations: u32,
    pub force_gain: f64,
    pub min_separation: f64,
    /// Half-size of the region topics are fitted into.
    pub canvas_extent: f64,
}

impl Default for LayoutParams {
    fn default() -> Self {
        Self {
            tau: 0.3,
            radial_radius: 160.0,
            step_max: 12.0,
            iterations: 30,
            force_gain: 0.15,
            min_separation: 40.0,
            canvas_extent: 500.0,
        }
    }
}

impl LayoutParams {
    pub fn validate(&self) -> Result<(), LayoutError> {
        let bad = |what: &str| Err(LayoutError::InvalidParams(what.to_owned()));
        if !(0.0..1.0).contains(&self.tau) {
            return bad("tau must lie in [0, 1)");
        }
        for (name, v) in [
            ("radial_radius", self.radial_radius),
            ("step_max", self.step_max),
            ("force_gain", self.force_gain),
            ("min_separation", self.min_separation),
            ("canvas_extent", self.canvas_extent),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be positive"));
            }
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        Ok(())
    }
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, LayoutError> {
    if u.len() != v.len() {
        return Err(LayoutError::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    let nu = pca::dot(u, u).sqrt();
    let nv = pca::dot(v, v).sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(LayoutError::ZeroVector);
    }
    Ok((pca::dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Angular offset of a parent's ring, and the direction a topic is pushed
/// when it lands exactly on a neighbour.
fn golden_offset(id: &NodeId) -> f64 {
    ((id.ordinal() % 1_000_003) as f64 * GOLDEN_ANGLE) % TAU
}

/// Positions for the topics in `new_topic_ids`, projected through the
/// canvas's basis. Every other topic keeps its stored position; a new topic
/// landing within `min_separation` of another is pushed radially away from
/// it until clear.
pub fn project_topics(
    state: &CanvasState,
    new_topic_ids: &BTreeSet<NodeId>,
    params: &LayoutParams,
) -> Result<Vec<(NodeId, Point)>, LayoutError> {
    if new_topic_ids.is_empty() {
        return Ok(Vec::new());
    }
    let basis = state.layout_basis.as_ref().ok_or(LayoutError::BasisMissing)?;
    if let Some(missing) = new_topic_ids.iter().find(|id| state.topic(id).is_none()) {
        return Err(LayoutError::UnknownNode(missing.clone()));
    }

    let mut fixed: Vec<Point> = state
        .topics
        .iter()
        .filter(|t| !new_topic_ids.contains(&t.id))
        .map(|t| t.position)
        .collect();
    let mut placed = Vec::new();
    for topic in state.topics.iter().filter(|t| new_topic_ids.contains(&t.id)) {
        let mut p = basis.project(&topic.embedding);
        separate(&mut p, &fixed, params.min_separation, golden_offset(&topic.id));
        fixed.push(p);
        placed.push((topic.id.clone(), p));
    }
    Ok(placed)
}

fn separate(p: &mut Point, others: &[Point], min_sep: f64, fallback_angle: f64) {
    for _pass in 0..64 {
        let mut moved = false;
        for q in others {
            let dist = p.distance(*q);
            if dist < min_sep {
                let dir = if dist > 1e-9 {
                    (*p - *q) * (1.0 / dist)
                } else {
                    Point::new(fallback_angle.cos(), fallback_angle.sin())
                };
                // A hair beyond min_sep so rounding cannot leave it short.
                *p = *q + dir * (min_sep * (1.0 + 1e-9));
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialPlacement {
    pub id: NodeId,
    pub position: Point,
    pub home_offset: Point,
}

/// Ring slots for the contents in `new_content_ids`. A parent's `k` children
/// (existing and new, in canvas order) sit at angles `2πi/k` plus the
/// parent's golden-angle offset, `radial_radius` away. Only the listed
/// contents receive placements.
pub fn place_content_radial(
    state: &CanvasState,
    new_content_ids: &BTreeSet<NodeId>,
    params: &LayoutParams,
) -> Result<Vec<RadialPlacement>, LayoutError> {
    let mut out = Vec::new();
    for c in state.contents.iter().filter(|c| new_content_ids.contains(&c.id)) {
        let parent = state
            .topic(&c.parent)
            .ok_or_else(|| LayoutError::UnknownNode(c.parent.clone()))?;
        let siblings: Vec<&NodeId> = state.children(&parent.id).map(|s| &s.id).collect();
        let k = siblings.len();
        let i = siblings.iter().position(|s| *s == &c.id).expect("child of its parent");
        let angle = TAU * i as f64 / k as f64 + golden_offset(&parent.id);
        let home_offset = Point::new(angle.cos(), angle.sin()) * params.radial_radius;
        out.push(RadialPlacement {
            id: c.id.clone(),
            position: parent.position + home_offset,
            home_offset,
        });
    }
    if let Some(missing) = new_content_ids.iter().find(|id| state.content(id).is_none()) {
        return Err(LayoutError::UnknownNode((*missing).clone()));
    }
    Ok(out)
}

/// Runs `params.iterations` rounds of attraction on every content node and
/// returns their new positions.
///
/// Per iteration a content `c` at `p` moves by
/// `Σ gain·(sim(c,t) − τ)·(t − p)` over non-parent topics `t` with
/// `sim > τ`, plus `2·gain·(home − p)` toward its ring slot, clamped to
/// `step_max`. A content at home with no attractor does not move at all.
pub fn refine_forces(state: &CanvasState, params: &LayoutParams) -> Vec<(NodeId, Point)> {
    let spring = 2.0 * params.force_gain;
    state
        .contents
        .iter()
        .map(|c| {
            let Some(parent) = state.topic(&c.parent) else {
                return (c.id.clone(), c.position);
            };
            let home = parent.position + c.home_offset;
            let attractors: Vec<(Point, f64)> = state
                .topics
                .iter()
                .filter(|t| t.id != c.parent)
                .filter_map(|t| {
                    let sim = cosine_similarity(&c.embedding, &t.embedding).ok()?;
                    (sim > params.tau).then_some((t.position, params.force_gain * (sim - params.tau)))
                })
                .collect();

            let mut p = c.position;
            for _ in 0..params.iterations {
                let mut step = (home - p) * spring;
                for (t, w) in &attractors {
                    step = step + (*t - p) * *w;
                }
                let len = step.norm();
                if len == 0.0 {
                    continue;
                }
                if len > params.step_max {
                    step = step * (params.step_max / len);
                }
                p = p + step;
            }
            (c.id.clone(), p)
        })
        .collect()
}

/// Full layout pass after nodes were added or re-parented.
///
/// The PCA basis is fitted when the canvas has none and refitted only once
/// the topic count has at least doubled since the last fit; in both cases
/// only the new topics take projected positions. New contents get ring slots,
/// then all contents are refined.
pub fn layout_update(
    state: &CanvasState,
    new_topic_ids: &BTreeSet<NodeId>,
    new_content_ids: &BTreeSet<NodeId>,
    params: &LayoutParams,
) -> Result<CanvasState, LayoutError> {
    layout_update_within(state, new_topic_ids, new_content_ids, params, None)
}

/// [`layout_update`] with refinement limited to the contents in `refine`
/// (all contents when `None`), so scoped commands leave the rest alone.
pub fn layout_update_within(
    state: &CanvasState,
    new_topic_ids: &BTreeSet<NodeId>,
    new_content_ids: &BTreeSet<NodeId>,
    params: &LayoutParams,
    refine: Option<&BTreeSet<NodeId>>,
) -> Result<CanvasState, LayoutError> {
    params.validate()?;
    let mut next = state.clone();

    let needs_fit = match &next.layout_basis {
        None => !next.topics.is_empty(),
        Some(b) => next.topics.len() >= 2 * b.fitted_on,
    };
    if needs_fit {
        let embeddings: Vec<Vec<f64>> = next.topics.iter().map(|t| t.embedding.clone()).collect();
        next.layout_basis = Some(fit_pca_basis(&embeddings, params.canvas_extent)?);
    }

    for (id, p) in project_topics(&next, new_topic_ids, params)? {
        next.topic_mut(&id).expect("projected topic exists").position = p;
    }
    for placement in place_content_radial(&next, new_content_ids, params)? {
        let c = next.content_mut(&placement.id).expect("placed content exists");
        c.position = placement.position;
        c.home_offset = placement.home_offset;
    }
    for (id, p) in refine_forces(&next, params) {
        if refine.is_none_or(|only| only.contains(&id)) {
            next.content_mut(&id).expect("refined content exists").position = p;
        }
    }
    Ok(next)
}
