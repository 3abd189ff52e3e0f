//! End-to-end episode processing and the ablation variants.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::error::{EsecError, Result};
use crate::event_chain::{build_esec, build_predicate_streams, detect_events, entity_infos, ESecMatrix, PredicateStream};
use crate::explanation::{compute_saliency, extract_trace, verbalize, ExplanationTrace};
use crate::model::Episode;
use crate::primitives::{
    decide_by_match_count, segment_primitives, states, DecisionRecord, PrimitiveLibrary, PrimitiveSegment, Priors,
    ReasoningContext, ScoringOptions, SymbolicState, IDLE,
};
use crate::semantics::AffordanceRegistry;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoConfidence,
    NoAffordance,
    NoRoles,
    NoPrimitiveReasoning,
}

impl Variant {
    pub const ALL: [Variant; 5] =
        [Variant::Full, Variant::NoConfidence, Variant::NoAffordance, Variant::NoRoles, Variant::NoPrimitiveReasoning];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoConfidence => "no_confidence",
            Variant::NoAffordance => "no_affordance",
            Variant::NoRoles => "no_roles",
            Variant::NoPrimitiveReasoning => "no_primitive_reasoning",
        }
    }

    pub fn scoring(self) -> ScoringOptions {
        ScoringOptions { use_roles: self != Variant::NoRoles, use_affordances: self != Variant::NoAffordance }
    }

    /// Engine configuration the variant runs with.
    pub fn config(self, cfg: &EngineConfig) -> EngineConfig {
        let mut c = cfg.clone();
        if self == Variant::NoConfidence {
            c.tau_event = 0.0;
        }
        c
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = EsecError;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| EsecError::UnknownVariant(s.to_string()))
    }
}

/// Everything the reasoning layer needs besides the episode.
#[derive(Clone, Debug)]
pub struct Engine {
    pub cfg: EngineConfig,
    pub library: PrimitiveLibrary,
    pub affordances: AffordanceRegistry,
    pub priors: Priors,
}

impl Engine {
    pub fn new(cfg: EngineConfig, library: PrimitiveLibrary, affordances: AffordanceRegistry) -> Self {
        Engine { cfg, library, affordances, priors: Priors::new() }
    }

    pub fn bundled(cfg: EngineConfig) -> Self {
        Engine::new(cfg, PrimitiveLibrary::bundled(), AffordanceRegistry::bundled())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EpisodeRun {
    pub matrix: ESecMatrix,
    #[serde(skip)]
    pub states: Vec<SymbolicState>,
    pub decisions: Vec<DecisionRecord>,
    pub segments: Vec<PrimitiveSegment>,
    pub traces: Vec<ExplanationTrace>,
}

impl EpisodeRun {
    /// Segment label at every event, in event order.
    pub fn event_labels(&self) -> Vec<&str> {
        self.decisions.iter().map(|d| d.label.as_str()).collect()
    }
}

/// Predicate streams, with confidences forced to 1 on every observed slot for `no_confidence`.
pub fn variant_streams(episode: &Episode, cfg: &EngineConfig, variant: Variant) -> Result<Vec<PredicateStream>> {
    let mut streams = build_predicate_streams(episode, cfg)?;
    if variant == Variant::NoConfidence {
        for s in &mut streams {
            for o in &mut s.observations {
                for c in crate::model::Channel::ALL {
                    let label = o.slots.label(c);
                    if !label.is_unk() {
                        o.slots.set(c, label, 1.0);
                    }
                }
            }
        }
    }
    Ok(streams)
}

pub fn extract_matrix(episode: &Episode, cfg: &EngineConfig, variant: Variant) -> Result<ESecMatrix> {
    let cfg = variant.config(cfg);
    let streams = variant_streams(episode, &cfg, variant)?;
    let events = detect_events(&streams, &cfg);
    build_esec(&streams, &events, entity_infos(episode), &cfg)
}

/// Decisions, segments and explanation traces over an event matrix.
pub fn reason(matrix: ESecMatrix, engine: &Engine, variant: Variant) -> Result<EpisodeRun> {
    let cfg = variant.config(&engine.cfg);
    let opts = variant.scoring();
    let affordances = engine.affordances.for_entities(&matrix.entities);
    let states = states(&matrix, &affordances, opts)?;
    let ctx = ReasoningContext { library: &engine.library, priors: &engine.priors, cfg: &cfg, opts };
    let (decisions, segments) = if variant == Variant::NoPrimitiveReasoning {
        let decisions: Vec<DecisionRecord> = states.iter().map(|s| decide_by_match_count(s, &ctx)).collect();
        let labels: Vec<String> = decisions.iter().map(|d| d.label.clone()).collect();
        let segments = crate::primitives::merge_segments(&labels);
        (decisions, segments)
    } else {
        segment_primitives(&states, &ctx)
    };
    let mut decisions = decisions;
    let mut traces = Vec::with_capacity(decisions.len());
    for (d, s) in decisions.iter_mut().zip(&states) {
        let trace = match d.selected.as_deref().and_then(|n| engine.library.get(n)) {
            Some(u) if u.name != IDLE => {
                let sal = compute_saliency(d, s, u, &engine.library, opts);
                let mut trace = extract_trace(&sal, s, cfg.tau_sal);
                let (text, warnings) = verbalize(u, &trace, &sal.binding, s);
                trace.verbal = Some(text);
                trace.warnings = warnings;
                trace.predicted_state_ref = d.predicted_state.as_ref().map(|_| format!("S_hat_{}", s.k + 1));
                d.saliency = Some(sal);
                trace
            }
            _ => ExplanationTrace::empty(s.k, s.event_time),
        };
        traces.push(trace);
    }
    Ok(EpisodeRun { matrix, states, decisions, segments, traces })
}

pub fn run_episode(episode: &Episode, engine: &Engine, variant: Variant) -> Result<EpisodeRun> {
    let matrix = extract_matrix(episode, &engine.cfg, variant)?;
    reason(matrix, engine, variant)
}
