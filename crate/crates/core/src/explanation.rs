//! Saliency over the selected primitive's evidence, thresholded traces and template text.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::model::{Channel, EntityId, Label, Pair};
use crate::primitives::{
    score_detail, Binding, DecisionRecord, PredicateAtom, PrimitiveLibrary, PrimitiveOperator, ScoringOptions,
    Selector, SymbolicState,
};
use crate::semantics::Role;

pub const UNKNOWN_SLOT: &str = "[unknown]";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomWeight {
    pub atom: PredicateAtom,
    pub pair: Pair,
    pub label: Label,
    pub confidence: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Saliency {
    pub primitive: String,
    pub binding: Binding,
    /// Matched precondition atoms with their weights.
    pub atoms: Vec<AtomWeight>,
    /// Event-level weight w_k: mean of matched-atom weights, 0 when nothing matched.
    pub event_weight: f64,
    /// Primitive-level weights ω_u = σ_u.
    pub primitive_weights: BTreeMap<String, f64>,
}

/// Saliency of `selected` at the decision's state; a matched atom's weight is its confidence.
pub fn compute_saliency(
    decision: &DecisionRecord,
    state: &SymbolicState,
    selected: &PrimitiveOperator,
    library: &PrimitiveLibrary,
    opts: ScoringOptions,
) -> Saliency {
    let detail = score_detail(selected, state, library, opts);
    let atoms: Vec<AtomWeight> = detail
        .atoms
        .iter()
        .filter(|a| a.matched)
        .filter_map(|a| {
            a.pair.clone().map(|pair| AtomWeight {
                atom: a.atom.clone(),
                pair,
                label: a.observed,
                confidence: a.confidence,
                weight: a.confidence.clamp(0.0, 1.0),
            })
        })
        .collect();
    let event_weight = if atoms.is_empty() { 0.0 } else { atoms.iter().map(|a| a.weight).sum::<f64>() / atoms.len() as f64 };
    Saliency {
        primitive: selected.name.clone(),
        binding: detail.binding,
        atoms,
        event_weight,
        primitive_weights: decision.scores.clone(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceElement {
    pub event_time: u32,
    pub pair: Pair,
    pub channel: Channel,
    pub label: Label,
    pub confidence: f64,
    pub weight: f64,
    pub atom: PredicateAtom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplanationTrace {
    pub k: usize,
    pub event_time: u32,
    pub selected: Option<String>,
    pub elements: Vec<TraceElement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verbal: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    /// Identifier of the predicted state Ŝ_{k+1} the trace is paired with.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_state_ref: Option<String>,
}

impl ExplanationTrace {
    pub fn empty(k: usize, event_time: u32) -> Self {
        ExplanationTrace { k, event_time, selected: None, elements: Vec::new(), verbal: None, warnings: Vec::new(), predicted_state_ref: None }
    }

    fn keys(&self) -> BTreeSet<(&Pair, Channel)> {
        self.elements.iter().map(|e| (&e.pair, e.channel)).collect()
    }
}

/// Matched atoms with weight ≥ `tau_sal`, ordered by event time, pair, then channel.
pub fn extract_trace(saliency: &Saliency, state: &SymbolicState, tau_sal: f64) -> ExplanationTrace {
    let mut elements: Vec<TraceElement> = saliency
        .atoms
        .iter()
        .filter(|a| a.weight >= tau_sal)
        .map(|a| TraceElement {
            event_time: state.event_time,
            pair: a.pair.clone(),
            channel: a.atom.channel,
            label: a.label,
            confidence: a.confidence,
            weight: a.weight,
            atom: a.atom.clone(),
        })
        .collect();
    elements.sort_by(|a, b| {
        (a.event_time, &a.pair, a.channel).cmp(&(b.event_time, &b.pair, b.channel))
    });
    elements.dedup_by(|a, b| a.event_time == b.event_time && a.pair == b.pair && a.channel == b.channel);
    ExplanationTrace {
        k: state.k,
        event_time: state.event_time,
        selected: Some(saliency.primitive.clone()),
        elements,
        verbal: None,
        warnings: Vec::new(),
        predicted_state_ref: Some(format!("S_hat_{}", state.k + 1)),
    }
}

fn describe_entity(id: &EntityId, state: &SymbolicState) -> String {
    let class = state.class_of(id).unwrap_or(id.as_str());
    match state.role(id) {
        Role::Unassigned => class.to_string(),
        role => format!("{role}/{class}"),
    }
}

fn describe_relation(label: Label) -> &'static str {
    match label {
        Label::T => "in contact with",
        Label::N => "not in contact with",
        Label::Static(_) => match label.as_str() {
            "inside" => "inside",
            "on" => "on",
            "above" => "above",
            "below" => "below",
            _ => "around",
        },
        Label::Dynamic(_) => match label.as_str() {
            "getting_close" => "getting close to",
            "moving_apart" => "moving apart from",
            "stable" => "stable relative to",
            "halting_together" => "halting together with",
            "moving_together" => "moving together with",
            _ => "moving rigidly with",
        },
        Label::Unk => "with unknown relation to",
    }
}

fn render_entity(id: &EntityId, state: &SymbolicState) -> String {
    let class = state.class_of(id).unwrap_or(id.as_str());
    if class == id.as_str() {
        class.to_string()
    } else {
        format!("{class} ({id})")
    }
}

fn slot_entity(slot: &str, u: &PrimitiveOperator, binding: &Binding, state: &SymbolicState) -> Option<EntityId> {
    let bound = |v: &str| binding.get(v).cloned().flatten();
    let by_selector = |role: Role| {
        u.variables.iter().find(|(_, s)| **s == Selector::Role(role)).and_then(|(v, _)| bound(v))
    };
    let bound_with_role = |role: Role| {
        binding.values().flatten().find(|e| state.role(e) == role).cloned()
    };
    match slot {
        "manipulator" => by_selector(Role::Manipulator).or_else(|| bound_with_role(Role::Manipulator)),
        "recipient" => by_selector(Role::Recipient).or_else(|| bound_with_role(Role::Recipient)),
        "tool" => by_selector(Role::Tool).or_else(|| bound_with_role(Role::Tool)),
        "target" => bound("o"),
        _ => None,
    }
}

/// Deterministic slot substitution into the primitive's template. Unresolvable slots
/// render as `[unknown]` and add a warning.
pub fn verbalize(
    u: &PrimitiveOperator,
    trace: &ExplanationTrace,
    binding: &Binding,
    state: &SymbolicState,
) -> (String, Vec<String>) {
    if trace.elements.is_empty() {
        return (format!("Selected {} with no salient supporting evidence above threshold.", u.name), Vec::new());
    }
    let mut warnings = Vec::new();
    let mut out = String::with_capacity(u.template.len() + 64);
    let mut rest = u.template.as_str();
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let Some(close) = rest[open..].find('}') else {
            out.push_str(&rest[open..]);
            rest = "";
            break;
        };
        let slot = &rest[open + 1..open + close];
        let value = match slot {
            "events" => Some(format!("c_{}", trace.k)),
            "relations" => Some(
                trace
                    .elements
                    .iter()
                    .map(|e| {
                        format!(
                            "{} {} {} (confidence {:.2}, event {})",
                            describe_entity(&e.pair.subject, state),
                            describe_relation(e.label),
                            describe_entity(&e.pair.object, state),
                            e.confidence,
                            e.event_time
                        )
                    })
                    .collect::<Vec<_>>()
                    .join("; "),
            ),
            "confidences" => Some(
                trace.elements.iter().map(|e| format!("{:.2}", e.confidence)).collect::<Vec<_>>().join(", "),
            ),
            other => slot_entity(other, u, binding, state).map(|e| render_entity(&e, state)),
        };
        match value {
            Some(v) => out.push_str(&v),
            None => {
                warnings.push(format!("unresolved template slot `{slot}`"));
                out.push_str(UNKNOWN_SLOT);
            }
        }
        rest = &rest[open + close + 1..];
    }
    out.push_str(rest);
    (out, warnings)
}

/// Fraction of adjacent event pairs with the same selection whose traces share a
/// (pair, channel) element; 1.0 when no adjacent pair repeats its selection.
pub fn explanation_consistency(traces: &[ExplanationTrace]) -> f64 {
    let mut eligible = 0usize;
    let mut consistent = 0usize;
    for w in traces.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.selected.is_none() || a.selected != b.selected {
            continue;
        }
        eligible += 1;
        if !a.keys().is_disjoint(&b.keys()) {
            consistent += 1;
        }
    }
    if eligible == 0 {
        1.0
    } else {
        consistent as f64 / eligible as f64
    }
}
