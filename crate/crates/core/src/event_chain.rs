//! Per-pair predicate streams and the event-indexed eSEC matrix built from them.

use serde::{Deserialize, Serialize};

use crate::config::{Aggregation, EngineConfig};
use crate::error::{EsecError, Result};
use crate::geometry;
use crate::model::{
    BBox, Channel, EntityId, EntityTrack, Episode, FrameDetection, Label, Pair, RelationObservation, RelationSlots,
};

/// Frame-ordered observations of one ordered pair, one per frame of the episode range.
#[derive(Clone, Debug, PartialEq)]
pub struct PredicateStream {
    pub pair: Pair,
    pub observations: Vec<RelationObservation>,
}

impl PredicateStream {
    pub fn first_frame(&self) -> u32 {
        self.observations.first().map_or(1, |o| o.frame)
    }

    pub fn last_frame(&self) -> u32 {
        self.observations.last().map_or(0, |o| o.frame)
    }

    pub fn at(&self, frame: u32) -> Option<&RelationObservation> {
        let first = self.first_frame();
        frame.checked_sub(first).and_then(|i| self.observations.get(i as usize))
    }

    pub fn slots_at(&self, frame: u32) -> RelationSlots {
        self.at(frame).map_or(RelationSlots::UNKNOWN, |o| o.slots)
    }
}

/// All ordered pairs of distinct entities, lexicographic by (subject, object).
pub fn ordered_pairs(ids: &[EntityId]) -> Vec<Pair> {
    let mut ids = ids.to_vec();
    ids.sort();
    let mut out = Vec::with_capacity(ids.len() * ids.len().saturating_sub(1));
    for a in &ids {
        for b in &ids {
            if a != b {
                out.push(Pair::new(a.clone(), b.clone()));
            }
        }
    }
    out
}

/// Detections of `track` over `frames`, with gaps filled by linear interpolation between
/// the nearest observed frames inside the window (or held at the single nearest one).
/// `None` when fewer than two frames of the window were actually observed.
fn filled_window(track: &EntityTrack, frames: std::ops::RangeInclusive<u32>) -> Option<Vec<FrameDetection>> {
    let observed: Vec<&FrameDetection> = frames.clone().filter_map(|f| track.at(f)).collect();
    if observed.len() < 2 {
        return None;
    }
    let out = frames
        .map(|f| {
            if let Some(d) = track.at(f) {
                return d.clone();
            }
            let prev = observed.iter().rev().find(|d| d.frame < f);
            let next = observed.iter().find(|d| d.frame > f);
            match (prev, next) {
                (Some(p), Some(n)) => {
                    let t = (f - p.frame) as f64 / (n.frame - p.frame) as f64;
                    let lerp = |a: f64, b: f64| a + (b - a) * t;
                    let bbox = BBox::new(
                        lerp(p.bbox.x, n.bbox.x),
                        lerp(p.bbox.y, n.bbox.y),
                        lerp(p.bbox.w, n.bbox.w),
                        lerp(p.bbox.h, n.bbox.h),
                    );
                    FrameDetection::new(f, bbox, p.confidence.min(n.confidence))
                }
                (Some(d), None) | (None, Some(d)) => FrameDetection::new(f, d.bbox, d.confidence),
                (None, None) => unreachable!("at least two observed frames"),
            }
        })
        .collect();
    Some(out)
}

fn observe_pair(ti: &EntityTrack, tj: &EntityTrack, frame: u32, first: u32, cfg: &EngineConfig) -> Result<RelationSlots> {
    let mut slots = RelationSlots::UNKNOWN;
    let (Some(di), Some(dj)) = (ti.at(frame), tj.at(frame)) else {
        return Ok(slots);
    };
    let (si, sj) = (di.confidence, dj.confidence);

    let (c, g) = geometry::estimate_contact(di, dj, cfg)?;
    slots.set(Channel::Contact, c.into(), geometry::relation_confidence(si, sj, g)?);
    let (s, g) = geometry::estimate_static_relation(di, dj, cfg)?;
    slots.set(Channel::Static, s.into(), geometry::relation_confidence(si, sj, g)?);

    let w = cfg.window as u32;
    if frame >= first + w - 1 {
        let range = frame + 1 - w..=frame;
        if let (Some(hi), Some(hj)) = (filled_window(ti, range.clone()), filled_window(tj, range)) {
            let contacts = hi
                .iter()
                .zip(&hj)
                .map(|(a, b)| geometry::estimate_contact(a, b, cfg).map(|(l, _)| Label::from(l)))
                .collect::<Result<Vec<_>>>()?;
            let (d, g) = geometry::estimate_dynamic_relation(&hi, &hj, &contacts, cfg)?;
            slots.set(Channel::Dynamic, d.into(), geometry::relation_confidence(si, sj, g)?);
        }
    }
    Ok(slots)
}

/// One stream per ordered pair covering the episode's full frame range.
pub fn build_predicate_streams(episode: &Episode, cfg: &EngineConfig) -> Result<Vec<PredicateStream>> {
    if episode.tracks.len() < 2 {
        return Err(EsecError::NoPairs);
    }
    let (first, last) = episode.frame_range().ok_or(EsecError::NoPairs)?;
    let ids: Vec<EntityId> = episode.tracks.iter().map(|t| t.id.clone()).collect();
    ordered_pairs(&ids)
        .into_iter()
        .map(|pair| {
            let ti = episode.track(&pair.subject).expect("pair built from episode ids");
            let tj = episode.track(&pair.object).expect("pair built from episode ids");
            let observations = (first..=last)
                .map(|frame| {
                    observe_pair(ti, tj, frame, first, cfg)
                        .map(|slots| RelationObservation { pair: pair.clone(), frame, slots })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PredicateStream { pair, observations })
        })
        .collect()
}

/// Median with the midpoint convention for even counts.
pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Per-channel confidence at `event_time`, aggregated over the window ending there and
/// restricted to frames carrying the same label as `event_time`.
pub fn aggregate_confidence(stream: &PredicateStream, event_time: u32, cfg: &EngineConfig) -> [f64; 3] {
    let current = stream.slots_at(event_time);
    let start = event_time.saturating_sub(cfg.window as u32 - 1).max(stream.first_frame());
    let mut out = [0.0; 3];
    for c in Channel::ALL {
        let label = current.label(c);
        if label.is_unk() {
            continue;
        }
        let mut matching: Vec<f64> = (start..=event_time)
            .filter_map(|f| stream.at(f))
            .filter(|o| o.slots.label(c) == label)
            .map(|o| o.slots.confidence(c))
            .collect();
        out[c.index()] = match cfg.aggregation {
            Aggregation::Median => median(&mut matching),
            Aggregation::Mean if matching.is_empty() => 0.0,
            Aggregation::Mean => matching.iter().sum::<f64>() / matching.len() as f64,
        };
    }
    out
}

fn labels_at(streams: &[PredicateStream], frame: u32) -> Vec<[Label; 3]> {
    streams.iter().map(|s| s.slots_at(frame).labels).collect()
}

/// Confidence-gated event times; the first frame always opens an event.
pub fn detect_events(streams: &[PredicateStream], cfg: &EngineConfig) -> Vec<u32> {
    let Some(first_stream) = streams.first() else {
        return Vec::new();
    };
    let (first, last) = (first_stream.first_frame(), first_stream.last_frame());
    let mut events = vec![first];
    let mut reference = labels_at(streams, first);
    for frame in first + 1..=last {
        let fires = streams.iter().zip(&reference).any(|(s, prev)| {
            let now = s.slots_at(frame).labels;
            let changed: Vec<usize> = (0..3).filter(|&c| now[c] != prev[c]).collect();
            if changed.is_empty() {
                return false;
            }
            let agg = aggregate_confidence(s, frame, cfg);
            changed.iter().any(|&c| agg[c] >= cfg.tau_event)
        });
        if fires {
            events.push(frame);
            reference = labels_at(streams, frame);
        }
    }
    events
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityInfo {
    pub id: EntityId,
    pub class: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ESecColumn {
    pub event_time: u32,
    /// One entry per matrix row, in the matrix's pair order.
    pub cells: Vec<RelationSlots>,
}

impl ESecColumn {
    fn same_labels(&self, other: &ESecColumn) -> bool {
        self.cells.iter().zip(&other.cells).all(|(a, b)| a.labels == b.labels)
    }
}

/// Event-indexed matrix `M = [c_1 … c_K]` with rows in lexicographic pair order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "WireMatrix", try_from = "WireMatrix")]
pub struct ESecMatrix {
    pub entities: Vec<EntityInfo>,
    pub pairs: Vec<Pair>,
    pub columns: Vec<ESecColumn>,
}

#[derive(Serialize, Deserialize)]
struct WireCell {
    pair: [Label; 3],
    conf: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct WireMatrix {
    #[serde(default)]
    entities: Vec<EntityInfo>,
    pairs: Vec<Pair>,
    events: Vec<u32>,
    columns: Vec<Vec<WireCell>>,
}

impl From<ESecMatrix> for WireMatrix {
    fn from(m: ESecMatrix) -> Self {
        WireMatrix {
            events: m.event_times(),
            columns: m
                .columns
                .into_iter()
                .map(|c| c.cells.into_iter().map(|s| WireCell { pair: s.labels, conf: s.confidences }).collect())
                .collect(),
            entities: m.entities,
            pairs: m.pairs,
        }
    }
}

impl TryFrom<WireMatrix> for ESecMatrix {
    type Error = EsecError;
    fn try_from(w: WireMatrix) -> Result<Self> {
        if w.events.len() != w.columns.len() {
            return Err(EsecError::Parse(format!("{} events but {} columns", w.events.len(), w.columns.len())));
        }
        if w.events.windows(2).any(|e| e[0] >= e[1]) {
            return Err(EsecError::Parse("event times must be strictly increasing".into()));
        }
        let mut columns = Vec::with_capacity(w.columns.len());
        for (event_time, cells) in w.events.into_iter().zip(w.columns) {
            if cells.len() != w.pairs.len() {
                return Err(EsecError::Parse(format!("column at {event_time} has {} cells, expected {}", cells.len(), w.pairs.len())));
            }
            let cells = cells
                .into_iter()
                .map(|c| {
                    let slots = RelationSlots { labels: c.pair, confidences: c.conf };
                    if slots.is_consistent() {
                        Ok(slots)
                    } else {
                        Err(EsecError::Parse(format!("inconsistent cell {:?} at event {event_time}", c.pair)))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            columns.push(ESecColumn { event_time, cells });
        }
        Ok(ESecMatrix { entities: w.entities, pairs: w.pairs, columns })
    }
}

impl ESecMatrix {
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn event_times(&self) -> Vec<u32> {
        self.columns.iter().map(|c| c.event_time).collect()
    }

    pub fn row(&self, pair: &Pair) -> Option<usize> {
        self.pairs.binary_search(pair).ok()
    }

    /// 1-based column access.
    pub fn column(&self, k: usize) -> Result<&ESecColumn> {
        if k == 0 || k > self.columns.len() {
            return Err(EsecError::IndexOutOfRange { index: k, len: self.columns.len() });
        }
        Ok(&self.columns[k - 1])
    }

    pub fn class_of(&self, id: &EntityId) -> Option<&str> {
        self.entities.iter().find(|e| &e.id == id).map(|e| e.class.as_str())
    }

    /// Piecewise-constant frame-level labels over `first..=last`, one row per pair.
    pub fn expand(&self, last: u32) -> Vec<(u32, Vec<[Label; 3]>)> {
        let Some(first) = self.columns.first().map(|c| c.event_time) else {
            return Vec::new();
        };
        let mut k = 0;
        (first..=last)
            .map(|frame| {
                while k + 1 < self.columns.len() && self.columns[k + 1].event_time <= frame {
                    k += 1;
                }
                (frame, self.columns[k].cells.iter().map(|s| s.labels).collect())
            })
            .collect()
    }

    /// Streams reproducing the expansion, each frame carrying its column's confidences.
    pub fn expansion_streams(&self, last: u32) -> Vec<PredicateStream> {
        let Some(first) = self.columns.first().map(|c| c.event_time) else {
            return Vec::new();
        };
        self.pairs
            .iter()
            .enumerate()
            .map(|(row, pair)| {
                let mut k = 0;
                let observations = (first..=last)
                    .map(|frame| {
                        while k + 1 < self.columns.len() && self.columns[k + 1].event_time <= frame {
                            k += 1;
                        }
                        RelationObservation { pair: pair.clone(), frame, slots: self.columns[k].cells[row] }
                    })
                    .collect();
                PredicateStream { pair: pair.clone(), observations }
            })
            .collect()
    }
}

/// One column per event time, labels sampled at that frame; consecutive duplicates merged.
pub fn build_esec(
    streams: &[PredicateStream],
    events: &[u32],
    entities: Vec<EntityInfo>,
    cfg: &EngineConfig,
) -> Result<ESecMatrix> {
    if events.is_empty() {
        return Err(EsecError::NoEvents);
    }
    if streams.is_empty() {
        return Err(EsecError::NoPairs);
    }
    let mut columns: Vec<ESecColumn> = Vec::with_capacity(events.len());
    for &t in events {
        let cells = streams
            .iter()
            .map(|s| {
                let labels = s.slots_at(t).labels;
                let agg = aggregate_confidence(s, t, cfg);
                let mut slots = RelationSlots::UNKNOWN;
                for c in Channel::ALL {
                    slots.set(c, labels[c.index()], agg[c.index()]);
                }
                slots
            })
            .collect();
        let column = ESecColumn { event_time: t, cells };
        if columns.last().is_some_and(|prev| prev.same_labels(&column)) {
            continue;
        }
        columns.push(column);
    }
    Ok(ESecMatrix { entities, pairs: streams.iter().map(|s| s.pair.clone()).collect(), columns })
}

pub fn entity_infos(episode: &Episode) -> Vec<EntityInfo> {
    episode.tracks.iter().map(|t| EntityInfo { id: t.id.clone(), class: t.class.clone() }).collect()
}

/// Streams → events → matrix in one call.
pub fn extract(episode: &Episode, cfg: &EngineConfig) -> Result<(Vec<PredicateStream>, ESecMatrix)> {
    let streams = build_predicate_streams(episode, cfg)?;
    let events = detect_events(&streams, cfg);
    let matrix = build_esec(&streams, &events, entity_infos(episode), cfg)?;
    Ok((streams, matrix))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ContactRel, EntityTrack};

    fn cfg() -> EngineConfig {
        EngineConfig::default()
    }

    fn static_track(id: &str, x: f64, frames: u32) -> EntityTrack {
        let mut t = EntityTrack::new(id, "cup");
        for f in 1..=frames {
            t.frames.push(FrameDetection::new(f, BBox::new(x, 100.0, 40.0, 40.0), 0.9));
        }
        t
    }

    fn synthetic(pair: Pair, labels: &[(Label, f64)]) -> PredicateStream {
        let observations = labels
            .iter()
            .enumerate()
            .map(|(k, &(l, p))| {
                let mut slots = RelationSlots::UNKNOWN;
                slots.set(Channel::Contact, l, p);
                RelationObservation { pair: pair.clone(), frame: k as u32 + 1, slots }
            })
            .collect();
        PredicateStream { pair, observations }
    }

    #[test]
    fn stream_counts() {
        let ep = Episode::new(vec![static_track("a", 0.0, 10), static_track("b", 300.0, 10)]);
        let streams = build_predicate_streams(&ep, &cfg()).unwrap();
        assert_eq!(streams.len(), 2);
        assert!(streams.iter().all(|s| s.observations.len() == 10));
        let ep3 = Episode::new(vec![static_track("a", 0.0, 3), static_track("b", 100.0, 3), static_track("c", 200.0, 3)]);
        assert_eq!(build_predicate_streams(&ep3, &cfg()).unwrap().len(), 6);
        assert!(matches!(build_predicate_streams(&Episode::new(vec![static_track("a", 0.0, 3)]), &cfg()), Err(EsecError::NoPairs)));
    }

    #[test]
    fn missing_detection_gives_all_unknown() {
        let mut a = static_track("a", 0.0, 10);
        a.frames.remove(4);
        let ep = Episode::new(vec![a, static_track("b", 300.0, 10)]);
        let streams = build_predicate_streams(&ep, &cfg()).unwrap();
        for s in &streams {
            assert_eq!(s.at(5).unwrap().slots, RelationSlots::UNKNOWN);
            assert_eq!(s.at(6).unwrap().slots.label(Channel::Contact), Label::N);
            // the window over the gap is filled, so motion stays observable
            assert_eq!(s.at(7).unwrap().slots.label(Channel::Dynamic), Label::Dynamic(crate::model::DynamicRel::Stable));
        }
    }

    #[test]
    fn median_conventions() {
        assert_eq!(median(&mut [0.9, 0.8, 0.7]), 0.8);
        assert!((median(&mut [0.6, 1.0]) - 0.8).abs() < 1e-12);
        assert_eq!(median(&mut []), 0.0);
    }

    #[test]
    fn aggregation_restricts_to_matching_labels() {
        let p = Pair::new("a", "b");
        let s = synthetic(p.clone(), &[(Label::N, 0.2), (Label::N, 0.9), (Label::T, 0.6), (Label::N, 0.3), (Label::T, 1.0)]);
        assert!((aggregate_confidence(&s, 5, &cfg())[0] - 0.8).abs() < 1e-12);
        let s = synthetic(p.clone(), &[(Label::T, 0.9), (Label::T, 0.8), (Label::T, 0.7)]);
        assert!((aggregate_confidence(&s, 3, &cfg())[0] - 0.8).abs() < 1e-12);
        let s = synthetic(p, &[(Label::Unk, 0.0); 3]);
        assert_eq!(aggregate_confidence(&s, 3, &cfg()), [0.0; 3]);
    }

    #[test]
    fn event_examples() {
        let p = Pair::new("a", "b");
        let steady = synthetic(p.clone(), &[(Label::N, 0.9); 10]);
        assert_eq!(detect_events(&[steady], &cfg()), vec![1]);

        let mut flip: Vec<(Label, f64)> = vec![(Label::N, 0.9); 6];
        flip.extend([(Label::T, 0.9); 4]);
        assert_eq!(detect_events(&[synthetic(p.clone(), &flip)], &cfg()), vec![1, 7]);

        let mut weak = vec![(Label::N, 0.9); 10];
        weak[6] = (Label::T, 0.3);
        let weak = synthetic(p, &weak);
        assert_eq!(detect_events(std::slice::from_ref(&weak), &cfg()), vec![1]);
        let ungated = EngineConfig { tau_event: 0.0, ..cfg() };
        assert_eq!(detect_events(&[weak], &ungated), vec![1, 7, 8]);
    }

    #[test]
    fn matrix_shape_and_serialization() {
        let ep = Episode::new(vec![static_track("b", 300.0, 6), static_track("a", 0.0, 6), static_track("c", 500.0, 6)]);
        let (_, m) = extract(&ep, &cfg()).unwrap();
        assert_eq!(m.pairs.len(), 6);
        assert!(m.pairs.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(m.event_times(), vec![1, 5]); // dynamic channel becomes observable at the window
        let json = serde_json::to_string(&m).unwrap();
        let back: ESecMatrix = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        assert!(m.column(0).is_err() && m.column(3).is_err());
        assert!(build_esec(&[], &[1], vec![], &cfg()).is_err());
    }

    #[test]
    fn sub_threshold_flips_do_not_change_the_matrix() {
        let p = Pair::new("a", "b");
        let clean = synthetic(p.clone(), &[(Label::N, 0.9); 8]);
        let mut noisy = vec![(Label::N, 0.9); 8];
        noisy[3] = (Label::T, 0.2);
        let noisy = synthetic(p, &noisy);
        let build = |s: PredicateStream| {
            let events = detect_events(std::slice::from_ref(&s), &cfg());
            build_esec(&[s], &events, vec![], &cfg()).unwrap()
        };
        let (a, b) = (build(clean), build(noisy));
        assert_eq!(a.event_times(), b.event_times());
        assert_eq!(a.columns[0].cells[0].labels, b.columns[0].cells[0].labels);
    }

    #[test]
    fn consecutive_duplicate_columns_merge() {
        let p = Pair::new("a", "b");
        let s = synthetic(p, &[(Label::N, 0.9), (Label::N, 0.9), (Label::T, 0.9)]);
        let m = build_esec(&[s], &[1, 2, 3], vec![], &cfg()).unwrap();
        assert_eq!(m.event_times(), vec![1, 3]);
    }

    #[test]
    fn expansion_round_trip_is_idempotent() {
        let p = Pair::new("a", "b");
        let mut labels = vec![(Label::N, 0.9); 5];
        labels.extend([(Label::Contact(ContactRel::Touching), 0.8); 5]);
        let s = synthetic(p, &labels);
        let events = detect_events(std::slice::from_ref(&s), &cfg());
        let m = build_esec(&[s], &events, vec![], &cfg()).unwrap();
        let again_streams = m.expansion_streams(10);
        let again = build_esec(&again_streams, &detect_events(&again_streams, &cfg()), vec![], &cfg()).unwrap();
        assert_eq!(again, m);
        assert_eq!(m.expand(10).len(), 10);
    }
}
