//! Affordance vectors per entity class and functional roles per event.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{EsecError, Result};
use crate::event_chain::{ESecMatrix, EntityInfo};
use crate::model::{Channel, DynamicRel, EntityId, Label, Pair, RelationSlots, StaticRel};

pub const MANIPULATOR_CLASS: &str = "hand";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Affordance {
    Graspable,
    Pourable,
    Receiving,
    Cuttable,
    Openable,
}

impl Affordance {
    /// Vocabulary order; positions in an [`AffordanceVector`].
    pub const ALL: [Affordance; 5] =
        [Affordance::Graspable, Affordance::Pourable, Affordance::Receiving, Affordance::Cuttable, Affordance::Openable];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Affordance::Graspable => "graspable",
            Affordance::Pourable => "pourable",
            Affordance::Receiving => "receiving",
            Affordance::Cuttable => "cuttable",
            Affordance::Openable => "openable",
        }
    }
}

impl FromStr for Affordance {
    type Err = EsecError;
    fn from_str(s: &str) -> Result<Self> {
        Affordance::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| EsecError::Parse(format!("unknown affordance `{s}`")))
    }
}

/// Multi-hot vector over [`Affordance::ALL`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AffordanceVector(pub [bool; 5]);

impl AffordanceVector {
    pub fn has(&self, a: Affordance) -> bool {
        self.0[a.index()]
    }

    pub fn from_list(list: &[Affordance]) -> Self {
        let mut v = [false; 5];
        for a in list {
            v[a.index()] = true;
        }
        AffordanceVector(v)
    }

    pub fn names(&self) -> Vec<&'static str> {
        Affordance::ALL.iter().filter(|a| self.has(**a)).map(|a| a.as_str()).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AffordanceRegistry {
    class_map: BTreeMap<String, AffordanceVector>,
}

const BUNDLED_REGISTRY: &str = include_str!("../data/affordances.json");

impl AffordanceRegistry {
    /// Parses a `class → [affordance names]` JSON document.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: BTreeMap<String, Vec<String>> = serde_json::from_str(s)?;
        let mut class_map = BTreeMap::new();
        for (class, names) in raw {
            let list = names.iter().map(|n| n.parse()).collect::<Result<Vec<Affordance>>>()?;
            class_map.insert(class, AffordanceVector::from_list(&list));
        }
        Ok(AffordanceRegistry { class_map })
    }

    pub fn bundled() -> Self {
        Self::from_json_str(BUNDLED_REGISTRY).expect("bundled affordance registry is valid")
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.class_map.keys().map(String::as_str)
    }

    /// Registry lookup; unknown classes map to the all-zero vector.
    pub fn assign(&self, class: &str) -> AffordanceVector {
        self.class_map.get(class).copied().unwrap_or_default()
    }

    pub fn for_entities(&self, entities: &[EntityInfo]) -> BTreeMap<EntityId, AffordanceVector> {
        entities.iter().map(|e| (e.id.clone(), self.assign(&e.class))).collect()
    }
}

pub fn assign_affordances(entity_class: &str, registry: &AffordanceRegistry) -> AffordanceVector {
    registry.assign(entity_class)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Manipulator,
    Tool,
    Recipient,
    Support,
    #[serde(rename = "UNASSIGNED")]
    Unassigned,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Manipulator => "manipulator",
            Role::Tool => "tool",
            Role::Recipient => "recipient",
            Role::Support => "support",
            Role::Unassigned => "UNASSIGNED",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = EsecError;
    fn from_str(s: &str) -> Result<Self> {
        [Role::Manipulator, Role::Tool, Role::Recipient, Role::Support, Role::Unassigned]
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| EsecError::Parse(format!("unknown role `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoleAssignment {
    pub event_time: u32,
    pub roles: BTreeMap<EntityId, Role>,
}

impl RoleAssignment {
    pub fn role(&self, id: &EntityId) -> Role {
        self.roles.get(id).copied().unwrap_or(Role::Unassigned)
    }

    pub fn unassigned(event_time: u32, entities: &[EntityInfo]) -> Self {
        RoleAssignment { event_time, roles: entities.iter().map(|e| (e.id.clone(), Role::Unassigned)).collect() }
    }
}

/// Read-only view of one column with pair lookup.
pub struct ColumnView<'a> {
    pub pairs: &'a [Pair],
    pub cells: &'a [RelationSlots],
}

impl ColumnView<'_> {
    pub fn slots(&self, subject: &EntityId, object: &EntityId) -> Option<&RelationSlots> {
        self.pairs
            .binary_search_by(|p| (&p.subject, &p.object).cmp(&(subject, object)))
            .ok()
            .map(|i| &self.cells[i])
    }

    pub fn label(&self, subject: &EntityId, object: &EntityId, channel: Channel) -> Label {
        self.slots(subject, object).map_or(Label::Unk, |s| s.label(channel))
    }
}

fn supported_by(view: &ColumnView<'_>, entities: &[EntityInfo], e: &EntityId) -> bool {
    entities.iter().filter(|x| &x.id != e).any(|x| {
        view.label(&x.id, e, Channel::Static) == Label::Static(StaticRel::On)
            && view.label(&x.id, e, Channel::Contact) == Label::T
            && view.label(&x.id, e, Channel::Dynamic) == Label::Dynamic(DynamicRel::Stable)
    })
}

/// Role rules applied in order manipulator, tool, support, recipient.
pub fn infer_column_roles(
    entities: &[EntityInfo],
    current: &ColumnView<'_>,
    previous: Option<&ColumnView<'_>>,
) -> BTreeMap<EntityId, Role> {
    let manipulators: Vec<&EntityId> =
        entities.iter().filter(|e| e.class == MANIPULATOR_CLASS).map(|e| &e.id).collect();
    let is_tool = |e: &EntityId| {
        manipulators.iter().any(|h| {
            current.label(h, e, Channel::Contact) == Label::T
                && matches!(
                    current.label(h, e, Channel::Dynamic),
                    Label::Dynamic(DynamicRel::MovingTogether | DynamicRel::FixedMovingTogether)
                )
        })
    };
    let held = |e: &EntityId| manipulators.iter().any(|h| current.label(h, e, Channel::Contact) == Label::T);

    let mut roles = BTreeMap::new();
    for e in entities {
        let id = &e.id;
        let role = if e.class == MANIPULATOR_CLASS {
            Role::Manipulator
        } else if is_tool(id) {
            Role::Tool
        } else if supported_by(current, entities, id) && previous.is_none_or(|p| supported_by(p, entities, id)) {
            Role::Support
        } else if entities.iter().filter(|x| &x.id != id && x.class != MANIPULATOR_CLASS).any(|x| {
            (is_tool(&x.id) || held(&x.id))
                && matches!(
                    current.label(&x.id, id, Channel::Static),
                    Label::Static(StaticRel::Inside | StaticRel::On | StaticRel::Above)
                )
        }) {
            Role::Recipient
        } else {
            Role::Unassigned
        };
        roles.insert(id.clone(), role);
    }
    roles
}

/// Roles of every entity at the k-th event (1-based).
pub fn infer_roles(matrix: &ESecMatrix, k: usize) -> Result<RoleAssignment> {
    let column = matrix.column(k)?;
    let current = ColumnView { pairs: &matrix.pairs, cells: &column.cells };
    let previous = (k > 1).then(|| ColumnView { pairs: &matrix.pairs, cells: &matrix.columns[k - 2].cells });
    Ok(RoleAssignment {
        event_time: column.event_time,
        roles: infer_column_roles(&matrix.entities, &current, previous.as_ref()),
    })
}
