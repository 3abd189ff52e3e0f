//! Primitive library, precondition scoring and the per-event decision loop.
//!
//! A primitive names its participants as variables bound to entities through selectors
//! (role, class, entity id, affordance or any). σ is evaluated for every assignment of
//! distinct entities to variables and the best assignment is kept.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::config::EngineConfig;
use crate::error::{EsecError, Result};
use crate::event_chain::{ESecMatrix, EntityInfo};
use crate::explanation::Saliency;
use crate::model::{Channel, EntityId, Label, Pair, RelationSlots};
use crate::semantics::{infer_column_roles, Affordance, AffordanceVector, ColumnView, Role, RoleAssignment};

pub const IDLE: &str = "idle";
pub const DEFAULT_BETA: f64 = 0.8;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    Role(Role),
    Class(String),
    Entity(EntityId),
    Affordance(Affordance),
    Any,
}

/// `⟨θ, (i, j), r★⟩` over primitive variables; text form `C(m,o)=T`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PredicateAtom {
    pub channel: Channel,
    pub subject: String,
    pub object: String,
    pub value: Label,
}

impl fmt::Display for PredicateAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({},{})={}", self.channel, self.subject, self.object, self.value)
    }
}

impl FromStr for PredicateAtom {
    type Err = EsecError;
    fn from_str(s: &str) -> Result<Self> {
        let bad = |m: &str| EsecError::Library(format!("atom `{s}`: {m}"));
        let (lhs, value) = s.split_once('=').ok_or_else(|| bad("missing `=`"))?;
        let (channel, args) = lhs.trim().split_once('(').ok_or_else(|| bad("missing `(`"))?;
        let args = args.strip_suffix(')').ok_or_else(|| bad("missing `)`"))?;
        let (subject, object) = args.split_once(',').ok_or_else(|| bad("expected two arguments"))?;
        let channel: Channel = channel.trim().parse().map_err(|_| bad("unknown channel"))?;
        let value: Label = value.trim().parse().map_err(|_| bad("unknown label"))?;
        if value.is_unk() || !value.fits(channel) {
            return Err(bad("label does not belong to the channel vocabulary"));
        }
        let (subject, object) = (subject.trim().to_string(), object.trim().to_string());
        if subject == object {
            return Err(bad("subject and object must differ"));
        }
        Ok(PredicateAtom { channel, subject, object, value })
    }
}

impl Serialize for PredicateAtom {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PredicateAtom {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffordanceBias {
    #[serde(default = "default_beta")]
    pub beta: f64,
    pub require: BTreeMap<String, Vec<Affordance>>,
}

fn default_beta() -> f64 {
    DEFAULT_BETA
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrimitiveOperator {
    pub name: String,
    pub variables: BTreeMap<String, Selector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affordance_bias: Option<AffordanceBias>,
    pub pre: Vec<PredicateAtom>,
    #[serde(default)]
    pub post: Vec<PredicateAtom>,
    pub template: String,
}

impl PrimitiveOperator {
    /// Roles the primitive's variables require.
    pub fn role_config(&self) -> Vec<Role> {
        let roles: BTreeSet<Role> = self
            .variables
            .values()
            .filter_map(|s| match s {
                Selector::Role(r) => Some(*r),
                _ => None,
            })
            .collect();
        roles.into_iter().collect()
    }

    fn atoms(&self) -> impl Iterator<Item = &PredicateAtom> {
        self.pre.iter().chain(&self.post)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrimitiveLibrary {
    /// Class selectors substituted for role selectors when roles are disabled.
    #[serde(default)]
    pub role_fallback: BTreeMap<Role, Vec<String>>,
    pub primitives: Vec<PrimitiveOperator>,
}

const BUNDLED_LIBRARY: &str = include_str!("../data/library.json");

impl PrimitiveLibrary {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let lib: PrimitiveLibrary = serde_json::from_str(s).map_err(|e| EsecError::Library(e.to_string()))?;
        lib.validate()?;
        Ok(lib)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn bundled() -> Self {
        Self::from_json_str(BUNDLED_LIBRARY).expect("bundled primitive library is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        for p in &self.primitives {
            if !names.insert(p.name.as_str()) {
                return Err(EsecError::Library(format!("duplicate primitive `{}`", p.name)));
            }
            if p.name == IDLE {
                return Err(EsecError::Library(format!("`{IDLE}` is reserved")));
            }
            if p.pre.is_empty() {
                return Err(EsecError::Library(format!("primitive `{}` has no preconditions", p.name)));
            }
            for atom in p.atoms() {
                for v in [&atom.subject, &atom.object] {
                    if !p.variables.contains_key(v) {
                        return Err(EsecError::Library(format!("primitive `{}`: undeclared variable `{v}` in {atom}", p.name)));
                    }
                }
            }
            if let Some(bias) = &p.affordance_bias {
                if !(0.0..=1.0).contains(&bias.beta) {
                    return Err(EsecError::Library(format!("primitive `{}`: beta {} outside [0,1]", p.name, bias.beta)));
                }
                if let Some(v) = bias.require.keys().find(|v| !p.variables.contains_key(*v)) {
                    return Err(EsecError::Library(format!("primitive `{}`: affordance on undeclared `{v}`", p.name)));
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&PrimitiveOperator> {
        self.primitives.iter().find(|p| p.name == name)
    }

    /// Primitive names in lexicographic order.
    pub fn names(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.primitives.iter().map(|p| p.name.as_str()).collect();
        v.sort();
        v
    }
}

/// Switches that the ablation variants turn off.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScoringOptions {
    pub use_roles: bool,
    pub use_affordances: bool,
}

impl Default for ScoringOptions {
    fn default() -> Self {
        ScoringOptions { use_roles: true, use_affordances: true }
    }
}

/// Event-local decision state `S_k = {c_k, ρ(O), a(O), p_k}`; confidences live in `cells`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolicState {
    pub k: usize,
    pub event_time: u32,
    pub entities: Vec<EntityInfo>,
    pub pairs: Vec<Pair>,
    pub cells: Vec<RelationSlots>,
    pub roles: BTreeMap<EntityId, Role>,
    pub affordances: BTreeMap<EntityId, AffordanceVector>,
    #[serde(default)]
    pub predicted: bool,
}

impl SymbolicState {
    pub fn view(&self) -> ColumnView<'_> {
        ColumnView { pairs: &self.pairs, cells: &self.cells }
    }

    pub fn slots(&self, subject: &EntityId, object: &EntityId) -> Option<&RelationSlots> {
        self.row(subject, object).map(|i| &self.cells[i])
    }

    fn row(&self, subject: &EntityId, object: &EntityId) -> Option<usize> {
        self.pairs.binary_search_by(|p| (&p.subject, &p.object).cmp(&(subject, object))).ok()
    }

    pub fn class_of(&self, id: &EntityId) -> Option<&str> {
        self.entities.iter().find(|e| &e.id == id).map(|e| e.class.as_str())
    }

    pub fn role(&self, id: &EntityId) -> Role {
        self.roles.get(id).copied().unwrap_or(Role::Unassigned)
    }

    /// Label identity of the column, used to detect revisits during look-ahead.
    fn label_signature(&self) -> Vec<[Label; 3]> {
        self.cells.iter().map(|c| c.labels).collect()
    }
}

pub fn make_state(
    matrix: &ESecMatrix,
    k: usize,
    roles: &RoleAssignment,
    affordances: &BTreeMap<EntityId, AffordanceVector>,
) -> Result<SymbolicState> {
    let column = matrix.column(k)?;
    Ok(SymbolicState {
        k,
        event_time: column.event_time,
        entities: matrix.entities.clone(),
        pairs: matrix.pairs.clone(),
        cells: column.cells.clone(),
        roles: roles.roles.clone(),
        affordances: affordances.clone(),
        predicted: false,
    })
}

fn selector_matches(
    sel: &Selector,
    id: &EntityId,
    state: &SymbolicState,
    library: &PrimitiveLibrary,
    opts: ScoringOptions,
) -> bool {
    match sel {
        Selector::Role(r) if opts.use_roles => state.role(id) == *r,
        Selector::Role(r) => {
            let class = state.class_of(id).unwrap_or_default();
            library.role_fallback.get(r).is_some_and(|cs| cs.iter().any(|c| c == class))
        }
        Selector::Class(c) => state.class_of(id) == Some(c.as_str()),
        Selector::Entity(e) => e == id,
        Selector::Affordance(a) => state.affordances.get(id).is_some_and(|v| v.has(*a)),
        Selector::Any => true,
    }
}

pub type Binding = BTreeMap<String, Option<EntityId>>;

/// Every assignment of distinct entities to the primitive's variables. A variable with
/// no eligible entity (or squeezed out by distinctness) stays unbound.
fn bindings(u: &PrimitiveOperator, state: &SymbolicState, library: &PrimitiveLibrary, opts: ScoringOptions) -> Vec<Binding> {
    let vars: Vec<(&String, Vec<Option<EntityId>>)> = u
        .variables
        .iter()
        .map(|(v, sel)| {
            let mut cands: Vec<Option<EntityId>> = state
                .entities
                .iter()
                .filter(|e| selector_matches(sel, &e.id, state, library, opts))
                .map(|e| Some(e.id.clone()))
                .collect();
            cands.push(None);
            (v, cands)
        })
        .collect();
    let mut out = Vec::new();
    let mut current: Vec<Option<EntityId>> = Vec::with_capacity(vars.len());
    fn rec(
        vars: &[(&String, Vec<Option<EntityId>>)],
        current: &mut Vec<Option<EntityId>>,
        out: &mut Vec<Binding>,
    ) {
        if current.len() == vars.len() {
            out.push(vars.iter().zip(current.iter()).map(|((v, _), e)| ((*v).clone(), e.clone())).collect());
            return;
        }
        for cand in &vars[current.len()].1 {
            if cand.is_some() && current.contains(cand) {
                continue;
            }
            current.push(cand.clone());
            rec(vars, current, out);
            current.pop();
        }
    }
    rec(&vars, &mut current, &mut out);
    out
}

/// How one precondition atom fared under a binding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomEvaluation {
    pub atom: PredicateAtom,
    pub pair: Option<Pair>,
    pub observed: Label,
    pub confidence: f64,
    pub matched: bool,
}

impl AtomEvaluation {
    /// The atom's contribution to σ before averaging.
    pub fn contribution(&self) -> f64 {
        if self.matched {
            self.confidence
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreDetail {
    pub sigma: f64,
    pub binding: Binding,
    pub atoms: Vec<AtomEvaluation>,
    pub affordance_factor: f64,
}

fn evaluate_atom(atom: &PredicateAtom, binding: &Binding, state: &SymbolicState) -> AtomEvaluation {
    let bound = |v: &str| binding.get(v).cloned().flatten();
    let pair = match (bound(&atom.subject), bound(&atom.object)) {
        (Some(a), Some(b)) => Some(Pair::new(a, b)),
        _ => None,
    };
    let slots = pair.as_ref().and_then(|p| state.slots(&p.subject, &p.object));
    let observed = slots.map_or(Label::Unk, |s| s.label(atom.channel));
    let confidence = slots.map_or(0.0, |s| s.confidence(atom.channel));
    let matched = !observed.is_unk() && observed == atom.value;
    AtomEvaluation { atom: atom.clone(), pair, observed, confidence, matched }
}

fn affordance_factor(u: &PrimitiveOperator, binding: &Binding, state: &SymbolicState, opts: ScoringOptions) -> f64 {
    let Some(bias) = &u.affordance_bias else {
        return 1.0;
    };
    if !opts.use_affordances {
        return 1.0;
    }
    let mut total = 0usize;
    let mut satisfied = 0usize;
    for (var, required) in &bias.require {
        let vector = binding.get(var).cloned().flatten().and_then(|e| state.affordances.get(&e).copied());
        for a in required {
            total += 1;
            if vector.is_some_and(|v| v.has(*a)) {
                satisfied += 1;
            }
        }
    }
    if total == 0 {
        return 1.0;
    }
    bias.beta + (1.0 - bias.beta) * satisfied as f64 / total as f64
}

/// σ_u with its maximizing binding; ties go to the first binding in enumeration order.
pub fn score_detail(u: &PrimitiveOperator, state: &SymbolicState, library: &PrimitiveLibrary, opts: ScoringOptions) -> ScoreDetail {
    let mut best: Option<ScoreDetail> = None;
    for binding in bindings(u, state, library, opts) {
        let atoms: Vec<AtomEvaluation> = u.pre.iter().map(|a| evaluate_atom(a, &binding, state)).collect();
        let base = atoms.iter().map(AtomEvaluation::contribution).sum::<f64>() / u.pre.len() as f64;
        let factor = affordance_factor(u, &binding, state, opts);
        let sigma = (base * factor).clamp(0.0, 1.0);
        if best.as_ref().is_none_or(|b| sigma > b.sigma) {
            best = Some(ScoreDetail { sigma, binding, atoms, affordance_factor: factor });
        }
    }
    best.expect("at least the all-unbound binding exists")
}

pub fn precondition_score(u: &PrimitiveOperator, state: &SymbolicState, library: &PrimitiveLibrary, opts: ScoringOptions) -> f64 {
    score_detail(u, state, library, opts).sigma
}

/// Raw count of matched precondition atoms under the best binding (confidence ignored).
pub fn match_count(u: &PrimitiveOperator, state: &SymbolicState, library: &PrimitiveLibrary, opts: ScoringOptions) -> usize {
    bindings(u, state, library, opts)
        .iter()
        .map(|b| u.pre.iter().filter(|a| evaluate_atom(a, b, state).matched).count())
        .max()
        .unwrap_or(0)
}

/// Every primitive's σ, keyed by name.
pub fn score_all(library: &PrimitiveLibrary, state: &SymbolicState, opts: ScoringOptions) -> BTreeMap<String, f64> {
    library.primitives.iter().map(|u| (u.name.clone(), precondition_score(u, state, library, opts))).collect()
}

/// `{u : σ_u ≥ τ_feas}`.
pub fn feasible_set(scores: &BTreeMap<String, f64>, tau_feas: f64) -> BTreeMap<String, f64> {
    scores.iter().filter(|(_, &s)| s >= tau_feas).map(|(n, &s)| (n.clone(), s)).collect()
}

pub type Priors = BTreeMap<String, f64>;

fn prior(priors: &Priors, name: &str) -> f64 {
    priors.get(name).copied().unwrap_or(0.0)
}

/// Names ordered by `σ + γψ` descending, then lexicographically.
pub fn rank(scored: &BTreeMap<String, f64>, priors: &Priors, gamma: f64) -> Vec<(String, f64)> {
    let mut v: Vec<(String, f64)> =
        scored.iter().map(|(n, &s)| (n.clone(), s + gamma * prior(priors, n))).collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v
}

/// argmax of `σ_u + γψ_u` over the feasible set; lexicographic name breaks ties.
pub fn select_primitive(feasible: &BTreeMap<String, f64>, priors: &Priors, gamma: f64) -> Option<String> {
    rank(feasible, priors, gamma).into_iter().next().map(|(n, _)| n)
}

/// Ŝ: Post(u) written into the slots named under `binding`, confidence 1, roles re-inferred.
pub fn apply_postconditions(u: &PrimitiveOperator, state: &SymbolicState, binding: &Binding) -> Result<SymbolicState> {
    let mut next = state.clone();
    for atom in &u.post {
        let bound = |v: &str| binding.get(v).cloned().flatten();
        let (Some(a), Some(b)) = (bound(&atom.subject), bound(&atom.object)) else {
            return Err(EsecError::UnresolvedSelector(format!("{atom} in `{}`", u.name)));
        };
        let row = state.row(&a, &b).ok_or_else(|| EsecError::UnresolvedSelector(format!("{atom}: no pair ({a}, {b})")))?;
        next.cells[row].set(atom.channel, atom.value, 1.0);
    }
    if !u.post.is_empty() {
        next.roles = infer_column_roles(&next.entities, &next.view(), Some(&state.view()));
    }
    next.predicted = true;
    Ok(next)
}

fn feasible_on(
    state: &SymbolicState,
    library: &PrimitiveLibrary,
    opts: ScoringOptions,
    cfg: &EngineConfig,
) -> BTreeMap<String, ScoreDetail> {
    library
        .primitives
        .iter()
        .map(|u| (u.name.clone(), score_detail(u, state, library, opts)))
        .filter(|(_, d)| d.sigma >= cfg.tau_feas)
        .collect()
}

/// Best cumulative `σ + γψ` reachable from `state` within `depth` further steps.
fn best_continuation(
    state: &SymbolicState,
    came_from: &str,
    depth: usize,
    visited: &mut Vec<Vec<[Label; 3]>>,
    ctx: &ReasoningContext<'_>,
) -> f64 {
    if depth == 0 {
        return 0.0;
    }
    let mut best = 0.0f64;
    for (name, detail) in feasible_on(state, ctx.library, ctx.opts, ctx.cfg) {
        if name == came_from {
            continue;
        }
        let u = ctx.library.get(&name).expect("scored from the library");
        let Ok(next) = apply_postconditions(u, state, &detail.binding) else {
            continue;
        };
        let sig = next.label_signature();
        if visited.contains(&sig) {
            continue;
        }
        visited.push(sig);
        let value = detail.sigma + ctx.cfg.gamma * prior(ctx.priors, &name)
            + best_continuation(&next, &name, depth - 1, visited, ctx);
        visited.pop();
        best = best.max(value);
    }
    best
}

/// Ranked successors of `selected` from the state it produces.
pub fn lookahead(
    predicted: &SymbolicState,
    selected: &str,
    ctx: &ReasoningContext<'_>,
) -> Vec<(String, f64)> {
    let mut visited = vec![predicted.label_signature()];
    let mut scored = BTreeMap::new();
    for (name, detail) in feasible_on(predicted, ctx.library, ctx.opts, ctx.cfg) {
        if name == selected {
            continue;
        }
        let mut value = detail.sigma + ctx.cfg.gamma * prior(ctx.priors, &name);
        if ctx.cfg.lookahead_depth > 0 {
            let u = ctx.library.get(&name).expect("scored from the library");
            if let Ok(next) = apply_postconditions(u, predicted, &detail.binding) {
                let sig = next.label_signature();
                if visited.contains(&sig) {
                    continue;
                }
                visited.push(sig);
                value += best_continuation(&next, &name, ctx.cfg.lookahead_depth, &mut visited, ctx);
                visited.pop();
            }
        }
        scored.insert(name, value);
    }
    // values already include the prior
    rank(&scored, &Priors::new(), 0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub k: usize,
    pub event_time: u32,
    pub scores: BTreeMap<String, f64>,
    pub feasible: Vec<String>,
    pub selected: Option<String>,
    /// Segment label: the selection, or the inherited label when nothing is feasible.
    pub label: String,
    pub predicted_next: Option<String>,
    pub next_ranking: Vec<(String, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted_state: Option<SymbolicState>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub saliency: Option<Saliency>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimitiveSegment {
    pub label: String,
    /// 1-based inclusive event span.
    pub k_start: usize,
    pub k_end: usize,
}

/// Merges per-event labels into maximal runs.
pub fn merge_segments(labels: &[String]) -> Vec<PrimitiveSegment> {
    let mut out: Vec<PrimitiveSegment> = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        match out.last_mut() {
            Some(seg) if &seg.label == l => seg.k_end = i + 1,
            _ => out.push(PrimitiveSegment { label: l.clone(), k_start: i + 1, k_end: i + 1 }),
        }
    }
    out
}

/// Shared read-only inputs of the decision loop.
#[derive(Clone, Copy)]
pub struct ReasoningContext<'a> {
    pub library: &'a PrimitiveLibrary,
    pub priors: &'a Priors,
    pub cfg: &'a EngineConfig,
    pub opts: ScoringOptions,
}

/// Decision at one event given the previous segment label.
pub fn decide(state: &SymbolicState, previous_label: Option<&str>, ctx: &ReasoningContext<'_>) -> DecisionRecord {
    let details: BTreeMap<String, ScoreDetail> = ctx
        .library
        .primitives
        .iter()
        .map(|u| (u.name.clone(), score_detail(u, state, ctx.library, ctx.opts)))
        .collect();
    let scores: BTreeMap<String, f64> = details.iter().map(|(n, d)| (n.clone(), d.sigma)).collect();
    let feasible = feasible_set(&scores, ctx.cfg.tau_feas);
    let selected = select_primitive(&feasible, ctx.priors, ctx.cfg.gamma);
    let label = selected.clone().or_else(|| previous_label.map(str::to_string)).unwrap_or_else(|| IDLE.to_string());

    let mut predicted_state = None;
    let mut next_ranking = Vec::new();
    if let Some(name) = &selected {
        let u = ctx.library.get(name).expect("selected from the library");
        if let Ok(next) = apply_postconditions(u, state, &details[name].binding) {
            next_ranking = lookahead(&next, name, ctx);
            predicted_state = Some(next);
        }
    }
    DecisionRecord {
        k: state.k,
        event_time: state.event_time,
        scores,
        feasible: feasible.keys().cloned().collect(),
        selected,
        label,
        predicted_next: next_ranking.first().map(|(n, _)| n.clone()),
        next_ranking,
        predicted_state,
        saliency: None,
    }
}

/// Per-column label by raw matched-atom count; no thresholds, no confidences, no post.
pub fn decide_by_match_count(state: &SymbolicState, ctx: &ReasoningContext<'_>) -> DecisionRecord {
    let counts: BTreeMap<String, f64> = ctx
        .library
        .primitives
        .iter()
        .map(|u| (u.name.clone(), match_count(u, state, ctx.library, ctx.opts) as f64))
        .collect();
    let best = rank(&counts, &Priors::new(), 0.0).into_iter().next().filter(|(_, c)| *c > 0.0).map(|(n, _)| n);
    DecisionRecord {
        k: state.k,
        event_time: state.event_time,
        feasible: best.iter().cloned().collect(),
        label: best.clone().unwrap_or_else(|| IDLE.to_string()),
        selected: best,
        scores: counts,
        predicted_next: None,
        next_ranking: Vec::new(),
        predicted_state: None,
        saliency: None,
    }
}

/// States for every event of a matrix.
pub fn states(
    matrix: &ESecMatrix,
    affordances: &BTreeMap<EntityId, AffordanceVector>,
    opts: ScoringOptions,
) -> Result<Vec<SymbolicState>> {
    (1..=matrix.len())
        .map(|k| {
            let roles = if opts.use_roles {
                crate::semantics::infer_roles(matrix, k)?
            } else {
                RoleAssignment::unassigned(matrix.column(k)?.event_time, &matrix.entities)
            };
            make_state(matrix, k, &roles, affordances)
        })
        .collect()
}

/// Left-to-right decision pass and its segmentation Φ.
pub fn segment_primitives(
    states: &[SymbolicState],
    ctx: &ReasoningContext<'_>,
) -> (Vec<DecisionRecord>, Vec<PrimitiveSegment>) {
    let mut decisions: Vec<DecisionRecord> = Vec::with_capacity(states.len());
    for s in states {
        let prev = decisions.last().map(|d| d.label.as_str());
        decisions.push(decide(s, prev, ctx));
    }
    let labels: Vec<String> = decisions.iter().map(|d| d.label.clone()).collect();
    (decisions, merge_segments(&labels))
}
