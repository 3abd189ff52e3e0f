//! Bundled manipulation scripts: pouring and cutting chains, their sub-chains, and
//! branch-point variants.
//!
//! Every phase after the first opens with a one-frame "kick" so that the relations that
//! characterize it flip at the phase's first frame.

use std::collections::BTreeMap;

use crate::model::BBox;
use crate::simulator::{Canvas, EpisodeScript, Motion, Phase, ScriptEntity, Translate};

const HAND: f64 = 40.0;
/// Horizontal clearance between hand and object at the end of an approach.
const POISE_GAP: f64 = 12.0;
/// Height of the table/board top.
const SURFACE_Y: f64 = 400.0;

fn translate(by: [f64; 2]) -> Motion {
    Motion::Translate(Translate { by, start: 0, frames: None })
}

fn kick(by: [f64; 2]) -> Motion {
    Motion::Translate(Translate { by, start: 0, frames: Some(1) })
}

fn after_kick(by: [f64; 2]) -> Motion {
    Motion::Translate(Translate { by, start: 1, frames: None })
}

fn follow(leader: &str) -> Vec<Motion> {
    vec![Motion::Follow(leader.to_string())]
}

fn phase(label: &str, frames: usize, motions: Vec<(&str, Vec<Motion>)>) -> Phase {
    Phase {
        label: label.to_string(),
        frames,
        motions: motions.into_iter().map(|(id, m)| (id.to_string(), m)).collect(),
    }
}

/// Kick `fraction` of `total` in the first frame, spread the rest over the phase.
fn kicked(total: [f64; 2], fraction: f64) -> Vec<Motion> {
    let k = [total[0] * fraction, total[1] * fraction];
    vec![kick(k), after_kick([total[0] - k[0], total[1] - k[1]])]
}

/// Parameters of a hand–object–target scene on a flat support.
#[derive(Clone, Debug)]
struct SceneParams {
    name: String,
    /// Grasped object class and box size.
    object: (&'static str, f64, f64),
    /// Target (recipient) class and box size.
    target: (&'static str, f64, f64),
    support: &'static str,
    object_x: f64,
    target_x: f64,
    approach: [f64; 2],
    /// Frames of approach, grasp, lift, transport (tilt/cut), pour, release.
    frames: [usize; 6],
    lift_speed: f64,
}

impl SceneParams {
    fn object_box(&self) -> BBox {
        let (_, w, h) = self.object;
        BBox::new(self.object_x, SURFACE_Y - h, w, h)
    }

    fn target_box(&self) -> BBox {
        let (_, w, h) = self.target;
        BBox::new(self.target_x, SURFACE_Y - h, w, h)
    }

    /// Hand box at the end of the approach: left of the object, slightly above its centre.
    fn poised_hand(&self) -> BBox {
        let o = self.object_box();
        let cy = o.center().1 - 12.0;
        BBox::new(o.x - POISE_GAP - HAND, cy - HAND / 2.0, HAND, HAND)
    }

    fn entities(&self) -> Vec<ScriptEntity> {
        let hand = self.poised_hand().translated(-self.approach[0], -self.approach[1]);
        vec![
            ScriptEntity { id: "hand".into(), class: "hand".into(), bbox: hand },
            ScriptEntity { id: "object".into(), class: self.object.0.into(), bbox: self.object_box() },
            ScriptEntity { id: "target".into(), class: self.target.0.into(), bbox: self.target_box() },
            ScriptEntity { id: "support".into(), class: self.support.into(), bbox: BBox::new(0.0, SURFACE_Y, 640.0, 80.0) },
        ]
    }

    fn rise(&self) -> f64 {
        60.0 + self.lift_speed * (self.frames[2] - 1) as f64
    }

    fn approach_phase(&self) -> Phase {
        phase("approach", self.frames[0], vec![("hand", vec![translate(self.approach)])])
    }

    fn grasp_phase(&self) -> Phase {
        phase("grasp", self.frames[1], vec![("hand", vec![kick([POISE_GAP + 4.0, 0.0])])])
    }

    fn lift_phase(&self) -> Phase {
        let rest = self.lift_speed * (self.frames[2] - 1) as f64;
        phase("lift", self.frames[2], vec![("hand", vec![kick([0.0, -60.0]), after_kick([0.0, -rest])]), ("object", follow("hand"))])
    }

    /// Object box after the lift.
    fn lifted(&self) -> BBox {
        self.object_box().translated(0.0, -self.rise())
    }

    fn carry(&self, label: &str, frames: usize, to: BBox) -> Phase {
        let from = self.lifted();
        let total = [to.x - from.x, to.y - from.y];
        phase(label, frames, vec![("hand", kicked(total, 0.35)), ("object", follow("hand"))])
    }

    fn release_phase(&self, frames: usize) -> Phase {
        let rest = 8.0 * (frames - 1) as f64;
        phase("release", frames, vec![("hand", vec![kick([-70.0, -35.0]), after_kick([-rest, -rest])])])
    }
}

/// approach → grasp → lift → tilt → pour → release
fn pour_chain(p: &SceneParams) -> EpisodeScript {
    let t = p.target_box();
    let (_, w, h) = p.object;
    // poured from 18 px below the target's top edge, dropped in by the pour kick
    let pour_at = BBox::new(t.x + (t.w - w) / 2.0, t.y + 18.0 - h, w, h);
    let tilt_end = pour_at.translated(0.0, -40.0);
    let phases = vec![
        p.approach_phase(),
        p.grasp_phase(),
        p.lift_phase(),
        p.carry("tilt", p.frames[3], tilt_end),
        phase("pour", p.frames[4], vec![("hand", vec![kick([0.0, 40.0])]), ("object", follow("hand"))]),
        p.release_phase(p.frames[5]),
    ];
    EpisodeScript { name: p.name.clone(), canvas: Canvas::default(), branching: false, entities: p.entities(), phases }
}

/// approach → grasp → lift → cut → release
fn cut_chain(p: &SceneParams) -> EpisodeScript {
    let t = p.target_box();
    let (_, w, h) = p.object;
    let above = BBox::new(t.x + (t.w - w) / 2.0, t.y - 25.0 - h, w, h);
    let phases = vec![
        p.approach_phase(),
        p.grasp_phase(),
        p.lift_phase(),
        p.carry("cut", p.frames[3], above),
        p.release_phase(p.frames[5]),
    ];
    EpisodeScript { name: p.name.clone(), canvas: Canvas::default(), branching: false, entities: p.entities(), phases }
}

/// Phases `from..to` of `script`, starting from the boxes reached at the end of phase `from − 1`.
fn slice(script: &EpisodeScript, from: usize, to: usize, name: &str) -> EpisodeScript {
    let mut prefix = script.clone();
    prefix.phases.truncate(from);
    let start: BTreeMap<String, BBox> = if from == 0 {
        script.entities.iter().map(|e| (e.id.clone(), e.bbox)).collect()
    } else {
        let (ep, _) = crate::simulator::generate_episode(&prefix, 0, 1).expect("bundled prefix is valid");
        ep.tracks.iter().map(|t| (t.id.as_str().to_string(), t.frames.last().expect("non-empty track").bbox)).collect()
    };
    EpisodeScript {
        name: name.to_string(),
        canvas: script.canvas,
        branching: script.branching,
        entities: script.entities.iter().map(|e| ScriptEntity { bbox: start[&e.id], ..e.clone() }).collect(),
        phases: script.phases[from..to].to_vec(),
    }
}

/// Mirror image about the vertical centre line.
fn mirrored(script: &EpisodeScript, name: &str) -> EpisodeScript {
    let w = script.canvas.width;
    let flip = |m: &Motion| match m {
        Motion::Translate(t) => Motion::Translate(Translate { by: [-t.by[0], t.by[1]], ..t.clone() }),
        other => other.clone(),
    };
    EpisodeScript {
        name: name.to_string(),
        canvas: script.canvas,
        branching: script.branching,
        entities: script
            .entities
            .iter()
            .map(|e| ScriptEntity { bbox: BBox::new(w - e.bbox.x - e.bbox.w, e.bbox.y, e.bbox.w, e.bbox.h), ..e.clone() })
            .collect(),
        phases: script
            .phases
            .iter()
            .map(|p| Phase { motions: p.motions.iter().map(|(id, ms)| (id.clone(), ms.iter().map(flip).collect())).collect(), ..p.clone() })
            .collect(),
    }
}

/// Replace the phase at `index` (and drop everything after it) with a release.
fn released_after(script: &EpisodeScript, p: &SceneParams, index: usize, name: &str) -> EpisodeScript {
    let mut s = script.clone();
    s.name = name.to_string();
    s.branching = true;
    s.phases.truncate(index);
    s.phases.push(p.release_phase(p.frames[5]));
    s
}

const CONTAINERS: [(&str, f64, f64); 4] = [("cup", 40.0, 70.0), ("mug", 44.0, 60.0), ("glass", 36.0, 76.0), ("pitcher", 48.0, 80.0)];
const RECIPIENTS: [(&str, f64, f64); 3] = [("bowl", 80.0, 40.0), ("pot", 90.0, 50.0), ("plate", 100.0, 30.0)];
const FOODS: [(&str, f64, f64); 5] =
    [("cucumber", 100.0, 30.0), ("carrot", 90.0, 24.0), ("bread", 80.0, 40.0), ("apple", 44.0, 40.0), ("tomato", 40.0, 36.0)];

fn pour_params(i: usize) -> SceneParams {
    let container = CONTAINERS[i % CONTAINERS.len()];
    let recipient = RECIPIENTS[i % RECIPIENTS.len()];
    SceneParams {
        name: "scene".into(),
        object: container,
        target: recipient,
        support: "table",
        object_x: 180.0 + 10.0 * (i % 3) as f64,
        target_x: 380.0 + 15.0 * (i % 4) as f64,
        approach: [30.0 + 5.0 * (i % 2) as f64, 100.0 + 10.0 * (i % 3) as f64],
        frames: [10 + i % 3, 7 + i % 2, 6 + i % 2, 8 + i % 3, 6 + i % 2, 7],
        lift_speed: 20.0,
    }
}

fn cut_params(i: usize) -> SceneParams {
    SceneParams {
        name: "scene".into(),
        object: ("knife", 16.0, 70.0),
        target: FOODS[i % FOODS.len()],
        support: if i.is_multiple_of(2) { "board" } else { "table" },
        object_x: 170.0 + 10.0 * (i % 3) as f64,
        target_x: 370.0 + 20.0 * (i % 3) as f64,
        approach: [30.0, 100.0 + 10.0 * (i % 2) as f64],
        frames: [10 + i % 2, 7, 6, 9 + i % 3, 6, 7],
        lift_speed: 20.0,
    }
}

/// The bundled evaluation suite (58 scripts, sorted by name).
pub fn bundled_suite() -> Vec<EpisodeScript> {
    let mut out = Vec::new();
    for i in 0..8 {
        let p = SceneParams { name: format!("pour_{i:02}"), ..pour_params(i) };
        let full = pour_chain(&p);
        if i % 2 == 1 {
            out.push(mirrored(&full, &p.name));
        } else {
            out.push(full);
        }
    }
    for i in 0..6 {
        let p = pour_params(i + 3);
        let full = pour_chain(&p);
        let full = if i % 2 == 0 { full } else { mirrored(&full, "mirror") };
        out.push(slice(&full, 0, 2, &format!("pour_reach_{i:02}")));
        out.push(slice(&full, 0, 4, &format!("pour_carry_{i:02}")));
        out.push(slice(&full, 1, 6, &format!("pour_from_grasp_{i:02}")));
        out.push(slice(&full, 4, 6, &format!("pour_finish_{i:02}")));
    }
    for i in 0..10 {
        let p = SceneParams { name: format!("cut_{i:02}"), ..cut_params(i) };
        let full = cut_chain(&p);
        out.push(if i % 2 == 1 { mirrored(&full, &p.name) } else { full });
    }
    for i in 0..4 {
        let p = cut_params(i + 1);
        let full = cut_chain(&p);
        let full = if i % 2 == 0 { full } else { mirrored(&full, "mirror") };
        out.push(slice(&full, 0, 3, &format!("cut_lift_{i:02}")));
        out.push(slice(&full, 1, 5, &format!("cut_from_grasp_{i:02}")));
    }
    for i in 0..2 {
        let p = pour_params(i + 5);
        let full = pour_chain(&p);
        for (cut_at, label) in [(2, "grasp"), (3, "lift"), (4, "tilt")] {
            let name = format!("branch_{label}_release_{i:02}");
            let s = released_after(&full, &p, cut_at, &name);
            out.push(if i % 2 == 0 { s } else { mirrored(&s, &name) });
        }
    }
    out.sort_by(|a, b| a.name.cmp(&b.name));
    out
}
