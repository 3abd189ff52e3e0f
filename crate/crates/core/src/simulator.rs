//! Synthetic detection streams from declarative manipulation scripts.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EsecError, Result};
use crate::model::{BBox, EntityTrack, Episode, FrameDetection};

/// Primitive labels a script may use.
pub const PRIMITIVE_LABELS: [&str; 7] = ["approach", "grasp", "lift", "tilt", "pour", "release", "cut"];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Canvas {
    pub width: f64,
    pub height: f64,
}

impl Default for Canvas {
    fn default() -> Self {
        Canvas { width: 640.0, height: 480.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntity {
    pub id: String,
    pub class: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

/// Linear displacement `by` spread evenly over `frames` phase frames starting at `start`.
/// `frames` defaults to the rest of the phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Translate {
    pub by: [f64; 2],
    #[serde(default)]
    pub start: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motion {
    Translate(Translate),
    /// Copy the per-frame displacement of another entity.
    Follow(String),
    Hold,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub label: String,
    pub frames: usize,
    #[serde(default)]
    pub motions: BTreeMap<String, Vec<Motion>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeScript {
    pub name: String,
    #[serde(default)]
    pub canvas: Canvas,
    /// The scripted continuation at some phase boundary is one of several plausible ones.
    #[serde(default)]
    pub branching: bool,
    pub entities: Vec<ScriptEntity>,
    pub phases: Vec<Phase>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseSpan {
    pub label: String,
    pub start: u32,
    pub end: u32,
}

/// Per-frame primitive labels of a generated episode; `frames[i]` labels frame `i + 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub episode: String,
    #[serde(default)]
    pub branching: bool,
    pub phases: Vec<PhaseSpan>,
    pub frames: Vec<String>,
}

impl GroundTruth {
    /// Label at a 1-based frame index.
    pub fn label_at(&self, frame: u32) -> Option<&str> {
        frame.checked_sub(1).and_then(|i| self.frames.get(i as usize)).map(String::as_str)
    }

    /// Index of the phase covering `frame`.
    pub fn phase_index(&self, frame: u32) -> Option<usize> {
        self.phases.iter().position(|p| p.start <= frame && frame <= p.end)
    }

    /// Label of the phase after the one covering `frame`, if any.
    pub fn next_label(&self, frame: u32) -> Option<&str> {
        let i = self.phase_index(frame)?;
        self.phases.get(i + 1).map(|p| p.label.as_str())
    }
}

impl EpisodeScript {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn total_frames(&self) -> usize {
        self.phases.iter().map(|p| p.frames).sum()
    }

    /// Every violation of the script invariants; empty when valid.
    pub fn violations(&self, min_phase_frames: usize) -> Vec<String> {
        let mut out = Vec::new();
        if self.name.trim().is_empty() {
            out.push("script name is empty".to_string());
        }
        if !(self.canvas.width > 0.0 && self.canvas.height > 0.0) {
            out.push(format!("canvas {}x{} is not positive", self.canvas.width, self.canvas.height));
        }
        if self.entities.is_empty() {
            out.push("script has no entities".to_string());
        }
        let mut ids = BTreeSet::new();
        for e in &self.entities {
            if !ids.insert(e.id.as_str()) {
                out.push(format!("duplicate entity id `{}`", e.id));
            }
            if e.class.trim().is_empty() {
                out.push(format!("entity `{}` has an empty class", e.id));
            }
            if !e.bbox.is_valid() {
                out.push(format!("entity `{}` has a degenerate box", e.id));
            }
        }
        if self.phases.is_empty() {
            out.push("script has no phases".to_string());
        }
        for (i, p) in self.phases.iter().enumerate() {
            if !PRIMITIVE_LABELS.contains(&p.label.as_str()) {
                out.push(format!("phase {i}: unknown primitive label `{}`", p.label));
            }
            if p.frames < min_phase_frames {
                out.push(format!("phase {i}: {} frames is shorter than the window {min_phase_frames}", p.frames));
            }
            for (id, motions) in &p.motions {
                if !ids.contains(id.as_str()) {
                    out.push(format!("phase {i}: motion for unknown entity `{id}`"));
                }
                for m in motions {
                    match m {
                        Motion::Translate(t) => {
                            let len = t.frames.unwrap_or(p.frames.saturating_sub(t.start));
                            if len == 0 || t.start + len > p.frames {
                                out.push(format!("phase {i}: translate of `{id}` exceeds the phase"));
                            }
                            if !(t.by[0].is_finite() && t.by[1].is_finite()) {
                                out.push(format!("phase {i}: translate of `{id}` is not finite"));
                            }
                        }
                        Motion::Follow(leader) => {
                            if !ids.contains(leader.as_str()) {
                                out.push(format!("phase {i}: `{id}` follows unknown entity `{leader}`"));
                            }
                            if motions.len() > 1 {
                                out.push(format!("phase {i}: `{id}` combines follow with other motions"));
                            }
                        }
                        Motion::Hold => {}
                    }
                }
            }
            if follow_order(p).is_none() {
                out.push(format!("phase {i}: follow directives form a cycle"));
            }
        }
        if out.is_empty() {
            for (frame, id, b) in boxes_outside_canvas(self) {
                out.push(format!("entity `{id}` leaves the canvas at frame {frame}: {:?}", <[f64; 4]>::from(b)));
            }
        }
        out
    }

    pub fn validate(&self, min_phase_frames: usize) -> Result<()> {
        let v = self.violations(min_phase_frames);
        if v.is_empty() {
            Ok(())
        } else {
            Err(EsecError::Script(v))
        }
    }
}

/// Entities of a phase ordered so that every leader precedes its followers; `None` on cycles.
fn follow_order(p: &Phase) -> Option<Vec<String>> {
    let leader_of = |id: &str| -> Option<&str> {
        p.motions.get(id)?.iter().find_map(|m| match m {
            Motion::Follow(l) => Some(l.as_str()),
            _ => None,
        })
    };
    let mut order = Vec::new();
    for id in p.motions.keys() {
        let mut chain = vec![id.as_str()];
        let mut cur = id.as_str();
        while let Some(l) = leader_of(cur) {
            if chain.contains(&l) {
                return None;
            }
            chain.push(l);
            cur = l;
        }
        for c in chain.into_iter().rev() {
            if !order.iter().any(|o: &String| o == c) {
                order.push(c.to_string());
            }
        }
    }
    Some(order)
}

fn own_delta(motions: &[Motion], f: usize, phase_frames: usize) -> (f64, f64) {
    let mut d = (0.0, 0.0);
    for m in motions {
        if let Motion::Translate(t) = m {
            let len = t.frames.unwrap_or(phase_frames.saturating_sub(t.start));
            if len > 0 && f >= t.start && f < t.start + len {
                d.0 += t.by[0] / len as f64;
                d.1 += t.by[1] / len as f64;
            }
        }
    }
    d
}

/// Box of every entity at every frame; the box at frame `t` is the box at `t − 1` plus the
/// displacement scheduled for `t`.
fn trajectories(script: &EpisodeScript) -> BTreeMap<String, Vec<BBox>> {
    let mut current: BTreeMap<String, BBox> = script.entities.iter().map(|e| (e.id.clone(), e.bbox)).collect();
    let mut out: BTreeMap<String, Vec<BBox>> = script.entities.iter().map(|e| (e.id.clone(), Vec::new())).collect();
    for p in &script.phases {
        let order = follow_order(p).unwrap_or_default();
        for f in 0..p.frames {
            let mut deltas: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
            for id in &order {
                let motions = p.motions.get(id).map(Vec::as_slice).unwrap_or(&[]);
                let d = match motions.first() {
                    Some(Motion::Follow(l)) => deltas.get(l.as_str()).copied().unwrap_or((0.0, 0.0)),
                    _ => own_delta(motions, f, p.frames),
                };
                deltas.insert(id.as_str(), d);
            }
            for (id, b) in current.iter_mut() {
                if let Some(&(dx, dy)) = deltas.get(id.as_str()) {
                    *b = b.translated(dx, dy);
                }
                out.get_mut(id).expect("entity trajectory").push(*b);
            }
        }
    }
    out
}

fn boxes_outside_canvas(script: &EpisodeScript) -> Vec<(usize, String, BBox)> {
    const SLACK: f64 = 1e-6;
    let mut out = Vec::new();
    for (id, boxes) in trajectories(script) {
        if let Some((frame, b)) = boxes.iter().enumerate().find(|(_, b)| {
            b.x < -SLACK || b.y < -SLACK || b.right() > script.canvas.width + SLACK || b.bottom() > script.canvas.height + SLACK
        }) {
            out.push((frame, id, *b));
        }
    }
    out
}

/// Clean detection tracks (frames 1..=N, confidence 1.0, no masks) and per-frame ground truth.
///
/// Clean generation is a pure function of the script; the seed is part of the interface so
/// that callers can treat generation and perturbation uniformly.
pub fn generate_episode(script: &EpisodeScript, _seed: u64, min_phase_frames: usize) -> Result<(Episode, GroundTruth)> {
    script.validate(min_phase_frames)?;
    let boxes = trajectories(script);
    let tracks = script
        .entities
        .iter()
        .map(|e| {
            let mut t = EntityTrack::new(e.id.as_str(), e.class.as_str());
            t.frames = boxes[&e.id]
                .iter()
                .enumerate()
                .map(|(f, b)| FrameDetection::new(f as u32 + 1, *b, 1.0))
                .collect();
            t
        })
        .collect();
    let mut phases = Vec::with_capacity(script.phases.len());
    let mut frames = Vec::with_capacity(script.total_frames());
    let mut start = 1u32;
    for p in &script.phases {
        let end = start + p.frames as u32 - 1;
        phases.push(PhaseSpan { label: p.label.clone(), start, end });
        frames.extend(std::iter::repeat_n(p.label.clone(), p.frames));
        start = end + 1;
    }
    Ok((Episode::new(tracks), GroundTruth { episode: script.name.clone(), branching: script.branching, phases, frames }))
}

/// Random valid script with 2–5 entities and 2–6 phases of random motion; labels are random
/// and carry no semantic meaning.
pub fn random_script(seed: u64, min_phase_frames: usize) -> EpisodeScript {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let canvas = Canvas::default();
    let n_entities = rng.random_range(2..=5);
    let classes = ["hand", "cup", "bowl", "knife", "cucumber", "table"];
    let entities: Vec<ScriptEntity> = (0..n_entities)
        .map(|i| {
            let w = rng.random_range(20.0..120.0_f64).round();
            let h = rng.random_range(20.0..120.0_f64).round();
            let x = rng.random_range(0.0..canvas.width - w).round();
            let y = rng.random_range(0.0..canvas.height - h).round();
            ScriptEntity { id: format!("e{i}"), class: classes[rng.random_range(0..classes.len())].to_string(), bbox: BBox::new(x, y, w, h) }
        })
        .collect();
    let mut positions: Vec<BBox> = entities.iter().map(|e| e.bbox).collect();
    let inside = |b: &BBox| b.x >= 0.0 && b.y >= 0.0 && b.right() <= canvas.width && b.bottom() <= canvas.height;
    let n_phases = rng.random_range(2..=6);
    let mut phases = Vec::with_capacity(n_phases);
    for _ in 0..n_phases {
        let frames = rng.random_range(min_phase_frames.max(1)..=min_phase_frames.max(1) + 10);
        let mut motions = BTreeMap::new();
        // (index, displacement) of entities with their own motion this phase
        let mut leaders: Vec<(usize, [f64; 2])> = Vec::new();
        for (i, e) in entities.iter().enumerate() {
            let b = positions[i];
            let choice = rng.random_range(0..4);
            if choice == 1 && !leaders.is_empty() {
                let (l, by) = leaders[rng.random_range(0..leaders.len())];
                let moved = b.translated(by[0], by[1]);
                if inside(&moved) {
                    positions[i] = moved;
                    motions.insert(e.id.clone(), vec![Motion::Follow(entities[l].id.clone())]);
                    continue;
                }
            }
            let by = if choice == 0 {
                [0.0, 0.0]
            } else {
                [
                    rng.random_range(-150.0..150.0_f64).round().clamp(-b.x, canvas.width - b.right()),
                    rng.random_range(-150.0..150.0_f64).round().clamp(-b.y, canvas.height - b.bottom()),
                ]
            };
            let motion = if by == [0.0, 0.0] {
                Motion::Hold
            } else {
                Motion::Translate(Translate { by, start: 0, frames: None })
            };
            positions[i] = b.translated(by[0], by[1]);
            leaders.push((i, by));
            motions.insert(e.id.clone(), vec![motion]);
        }
        let label = PRIMITIVE_LABELS[rng.random_range(0..PRIMITIVE_LABELS.len())].to_string();
        phases.push(Phase { label, frames, motions });
    }
    EpisodeScript { name: format!("random_{seed:04}"), canvas, branching: false, entities, phases }
}

pub fn write_script(script: &EpisodeScript, path: &Path) -> Result<()> {
    let mut s = serde_json::to_string_pretty(script)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

/// Scripts in a directory (`*.json`, sorted by file name).
pub fn load_suite(dir: &Path) -> Result<Vec<EpisodeScript>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && !p.to_string_lossy().ends_with(".gt.json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| EpisodeScript::load(p)).collect()
}

pub use crate::suite::bundled_suite;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validation::validate_episode;

    fn two_phase() -> EpisodeScript {
        EpisodeScript::from_json_str(
            r#"{"name": "ag", "entities": [
                {"id": "hand", "class": "hand", "box": [40, 300, 40, 40]},
                {"id": "cup", "class": "cup", "box": [200, 300, 40, 60]}],
              "phases": [
                {"label": "approach", "frames": 10, "motions": {"hand": [{"translate": {"by": [100, 0]}}]}},
                {"label": "grasp", "frames": 10}]}"#,
        )
        .unwrap()
    }

    #[test]
    fn two_phase_script_generates_tracks_and_labels() {
        let (ep, gt) = generate_episode(&two_phase(), 0, 5).unwrap();
        assert_eq!(ep.frame_range(), Some((1, 20)));
        assert_eq!(gt.frames.len(), 20);
        assert!(gt.frames[..10].iter().all(|l| l == "approach"));
        assert!(gt.frames[10..].iter().all(|l| l == "grasp"));
        let hand = ep.track(&"hand".into()).unwrap();
        assert!((hand.at(10).unwrap().bbox.x - 140.0).abs() < 1e-9);
        assert!((hand.at(20).unwrap().bbox.x - 140.0).abs() < 1e-9);
        assert_eq!((gt.label_at(10), gt.label_at(11), gt.label_at(0)), (Some("approach"), Some("grasp"), None));
        assert!(hand.frames.iter().all(|d| d.confidence == 1.0));
        assert_eq!(gt.next_label(3), Some("grasp"));
        assert_eq!(gt.next_label(15), None);
        assert_eq!(gt.phases[1], PhaseSpan { label: "grasp".into(), start: 11, end: 20 });
        assert!(validate_episode(&ep).is_empty());
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_episode(&two_phase(), 7, 5).unwrap();
        let b = generate_episode(&two_phase(), 7, 5).unwrap();
        assert_eq!(crate::stream::episode_to_string(&a.0), crate::stream::episode_to_string(&b.0));
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn follow_copies_leader_motion_and_subranges_apply() {
        let s = EpisodeScript::from_json_str(
            r#"{"name": "f", "entities": [
                {"id": "hand", "class": "hand", "box": [100, 100, 40, 40]},
                {"id": "cup", "class": "cup", "box": [140, 100, 40, 60]}],
              "phases": [{"label": "lift", "frames": 6, "motions": {
                "hand": [{"translate": {"by": [0, -30], "frames": 1}}, {"translate": {"by": [0, -50], "start": 1}}],
                "cup": [{"follow": "hand"}]}}]}"#,
        )
        .unwrap();
        let (ep, _) = generate_episode(&s, 0, 5).unwrap();
        let cup = ep.track(&"cup".into()).unwrap();
        assert!((cup.at(1).unwrap().bbox.y - 70.0).abs() < 1e-9);
        assert!((cup.at(6).unwrap().bbox.y - 20.0).abs() < 1e-9);
    }

    #[test]
    fn pour_directive_ends_container_above_recipient() {
        let s = EpisodeScript::from_json_str(
            r#"{"name": "p", "entities": [
                {"id": "cup", "class": "cup", "box": [300, 100, 40, 70]},
                {"id": "bowl", "class": "bowl", "box": [100, 360, 80, 40]}],
              "phases": [{"label": "tilt", "frames": 8, "motions": {"cup": [{"translate": {"by": [-190, 200]}}]}}]}"#,
        )
        .unwrap();
        let (ep, _) = generate_episode(&s, 0, 5).unwrap();
        let cup = ep.track(&"cup".into()).unwrap().at(8).unwrap().bbox;
        let bowl = ep.track(&"bowl".into()).unwrap().at(8).unwrap().bbox;
        assert!(cup.center().1 < bowl.center().1);
        assert!(cup.horizontal_overlap(&bowl) > 0.0);
    }

    #[test]
    fn invalid_scripts_list_every_violation() {
        let mut s = two_phase();
        s.phases[0].label = "juggle".into();
        s.phases[1].frames = 2;
        s.phases[1].motions.insert("ghost".into(), vec![Motion::Hold]);
        let v = s.violations(5);
        assert_eq!(v.len(), 3, "{v:?}");
        assert!(matches!(generate_episode(&s, 0, 5), Err(EsecError::Script(_))));

        let mut s = two_phase();
        s.phases[0].motions.insert("hand".into(), vec![Motion::Translate(Translate { by: [900.0, 0.0], start: 0, frames: None })]);
        assert_eq!(s.violations(5).len(), 1);

        let mut s = two_phase();
        s.phases[0].motions.insert("hand".into(), vec![Motion::Follow("cup".into())]);
        s.phases[0].motions.insert("cup".into(), vec![Motion::Follow("hand".into())]);
        assert!(s.violations(5).iter().any(|m| m.contains("cycle")));
    }

    #[test]
    fn random_scripts_are_valid_and_reproducible() {
        for seed in 0..200 {
            let s = random_script(seed, 5);
            assert!(s.violations(5).is_empty(), "seed {seed}: {:?}", s.violations(5));
            assert_eq!(s, random_script(seed, 5));
            let (ep, _) = generate_episode(&s, seed, 5).unwrap();
            assert!(validate_episode(&ep).is_empty());
        }
    }

    #[test]
    fn script_json_round_trips() {
        let s = two_phase();
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(EpisodeScript::from_json_str(&text).unwrap(), s);
    }
}
