//! Shared domain types: relation vocabularies, entity tracks and per-frame detections.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{EsecError, Result};

/// Relation channel θ of a pairwise relation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    #[serde(rename = "C")]
    Contact,
    #[serde(rename = "S")]
    Static,
    #[serde(rename = "D")]
    Dynamic,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Contact, Channel::Static, Channel::Dynamic];

    pub fn index(self) -> usize {
        match self {
            Channel::Contact => 0,
            Channel::Static => 1,
            Channel::Dynamic => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Contact => "C",
            Channel::Static => "S",
            Channel::Dynamic => "D",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Channel {
    type Err = EsecError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "C" => Ok(Channel::Contact),
            "S" => Ok(Channel::Static),
            "D" => Ok(Channel::Dynamic),
            other => Err(EsecError::Parse(format!("unknown relation channel `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ContactRel {
    /// `T`: the entities touch.
    Touching,
    /// `N`: no contact.
    NotTouching,
}

/// Static spatial relations, declared in priority order (highest first).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StaticRel {
    Inside,
    On,
    Above,
    Below,
    Around,
}

impl StaticRel {
    pub const ALL: [StaticRel; 5] = [
        StaticRel::Inside,
        StaticRel::On,
        StaticRel::Above,
        StaticRel::Below,
        StaticRel::Around,
    ];

    /// Selection priority; larger wins. Strict total order inside ≻ on ≻ above ≻ below ≻ around.
    pub fn priority(self) -> u8 {
        match self {
            StaticRel::Inside => 5,
            StaticRel::On => 4,
            StaticRel::Above => 3,
            StaticRel::Below => 2,
            StaticRel::Around => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DynamicRel {
    GettingClose,
    MovingApart,
    Stable,
    HaltingTogether,
    MovingTogether,
    FixedMovingTogether,
}

impl DynamicRel {
    pub const ALL: [DynamicRel; 6] = [
        DynamicRel::GettingClose,
        DynamicRel::MovingApart,
        DynamicRel::Stable,
        DynamicRel::HaltingTogether,
        DynamicRel::MovingTogether,
        DynamicRel::FixedMovingTogether,
    ];
}

/// A relation label from any channel, or the distinguished `UNK`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Contact(ContactRel),
    Static(StaticRel),
    Dynamic(DynamicRel),
    Unk,
}

impl Label {
    pub const T: Label = Label::Contact(ContactRel::Touching);
    pub const N: Label = Label::Contact(ContactRel::NotTouching);

    /// Channel this label belongs to; `None` for `UNK`, which belongs to no vocabulary.
    pub fn channel(self) -> Option<Channel> {
        match self {
            Label::Contact(_) => Some(Channel::Contact),
            Label::Static(_) => Some(Channel::Static),
            Label::Dynamic(_) => Some(Channel::Dynamic),
            Label::Unk => None,
        }
    }

    pub fn is_unk(self) -> bool {
        matches!(self, Label::Unk)
    }

    /// Whether this label may appear in `channel` (UNK may appear anywhere).
    pub fn fits(self, channel: Channel) -> bool {
        self.channel().is_none_or(|c| c == channel)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Contact(ContactRel::Touching) => "T",
            Label::Contact(ContactRel::NotTouching) => "N",
            Label::Static(StaticRel::Inside) => "inside",
            Label::Static(StaticRel::On) => "on",
            Label::Static(StaticRel::Above) => "above",
            Label::Static(StaticRel::Below) => "below",
            Label::Static(StaticRel::Around) => "around",
            Label::Dynamic(DynamicRel::GettingClose) => "getting_close",
            Label::Dynamic(DynamicRel::MovingApart) => "moving_apart",
            Label::Dynamic(DynamicRel::Stable) => "stable",
            Label::Dynamic(DynamicRel::HaltingTogether) => "halting_together",
            Label::Dynamic(DynamicRel::MovingTogether) => "moving_together",
            Label::Dynamic(DynamicRel::FixedMovingTogether) => "fixed_moving_together",
            Label::Unk => "UNK",
        }
    }

    /// Every label of every channel, excluding UNK.
    pub fn vocabulary() -> Vec<Label> {
        let mut out = vec![Label::T, Label::N];
        out.extend(StaticRel::ALL.iter().map(|&s| Label::Static(s)));
        out.extend(DynamicRel::ALL.iter().map(|&d| Label::Dynamic(d)));
        out
    }
}

impl From<ContactRel> for Label {
    fn from(v: ContactRel) -> Self {
        Label::Contact(v)
    }
}
impl From<StaticRel> for Label {
    fn from(v: StaticRel) -> Self {
        Label::Static(v)
    }
}
impl From<DynamicRel> for Label {
    fn from(v: DynamicRel) -> Self {
        Label::Dynamic(v)
    }
}

impl<L: Into<Label>> From<Option<L>> for Label {
    fn from(v: Option<L>) -> Self {
        v.map_or(Label::Unk, Into::into)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = EsecError;
    fn from_str(s: &str) -> Result<Self> {
        if s == "UNK" {
            return Ok(Label::Unk);
        }
        Label::vocabulary()
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| EsecError::Parse(format!("unknown relation label `{s}`")))
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub String);

impl EntityId {
    pub fn new(s: impl Into<String>) -> Self {
        EntityId(s.into())
    }
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for EntityId {
    fn from(s: &str) -> Self {
        EntityId(s.to_string())
    }
}

/// Ordered entity pair `(o_i, o_j)`, serialized as a two-element array.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(EntityId, EntityId)", into = "(EntityId, EntityId)")]
pub struct Pair {
    pub subject: EntityId,
    pub object: EntityId,
}

impl Pair {
    pub fn new(subject: impl Into<EntityId>, object: impl Into<EntityId>) -> Self {
        Pair { subject: subject.into(), object: object.into() }
    }

    pub fn reversed(&self) -> Pair {
        Pair { subject: self.object.clone(), object: self.subject.clone() }
    }
}

impl From<(EntityId, EntityId)> for Pair {
    fn from((subject, object): (EntityId, EntityId)) -> Self {
        Pair { subject, object }
    }
}

impl From<Pair> for (EntityId, EntityId) {
    fn from(p: Pair) -> Self {
        (p.subject, p.object)
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.subject, self.object)
    }
}

/// Axis-aligned rectangle in pixels, x right / y down; `x, y` is the top-left corner.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl From<[f64; 4]> for BBox {
    fn from([x, y, w, h]: [f64; 4]) -> Self {
        BBox { x, y, w, h }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BBox { x, y, w, h }
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn is_valid(&self) -> bool {
        self.w > 0.0 && self.h > 0.0 && self.x.is_finite() && self.y.is_finite() && self.w.is_finite() && self.h.is_finite()
    }

    /// Length of the overlap of the two horizontal projections (0 when disjoint).
    pub fn horizontal_overlap(&self, other: &BBox) -> f64 {
        (self.right().min(other.right()) - self.x.max(other.x)).max(0.0)
    }

    pub fn vertical_overlap(&self, other: &BBox) -> f64 {
        (self.bottom().min(other.bottom()) - self.y.max(other.y)).max(0.0)
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        self.horizontal_overlap(other) * self.vertical_overlap(other)
    }

    /// Euclidean boundary-to-boundary distance; 0 when the boxes touch or overlap.
    pub fn gap(&self, other: &BBox) -> f64 {
        let dx = (self.x.max(other.x) - self.right().min(other.right())).max(0.0);
        let dy = (self.y.max(other.y) - self.bottom().min(other.bottom())).max(0.0);
        dx.hypot(dy)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> BBox {
        BBox { x: self.x + dx, y: self.y + dy, ..*self }
    }

    pub fn contains_box(&self, other: &BBox, tolerance: f64) -> bool {
        other.x >= self.x - tolerance
            && other.y >= self.y - tolerance
            && other.right() <= self.right() + tolerance
            && other.bottom() <= self.bottom() + tolerance
    }
}

/// Binary mask over the full image raster, row-major.
///
/// Text form (`mask_rle`): `"<width>x<height>:<r0>,<r1>,..."`, alternating run lengths
/// starting with a run of zeros.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != (width as usize) * (height as usize) {
            return Err(EsecError::InvalidGeometry(format!(
                "mask has {} pixels, expected {}x{}",
                bits.len(),
                width,
                height
            )));
        }
        Ok(Mask { width, height, bits })
    }

    /// Filled rectangle, clipped to the raster.
    pub fn from_box(width: u32, height: u32, b: &BBox) -> Self {
        let mut bits = vec![false; width as usize * height as usize];
        let x0 = b.x.max(0.0).floor() as usize;
        let y0 = b.y.max(0.0).floor() as usize;
        let x1 = (b.right().min(width as f64).ceil() as usize).min(width as usize);
        let y1 = (b.bottom().min(height as f64).ceil() as usize).min(height as usize);
        for y in y0..y1 {
            for x in x0..x1 {
                bits[y * width as usize + x] = true;
            }
        }
        Mask { width, height, bits }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn intersection_area(&self, other: &Mask) -> usize {
        if self.width != other.width || self.height != other.height {
            return 0;
        }
        self.bits.iter().zip(&other.bits).filter(|(a, b)| **a && **b).count()
    }

    /// Pixel-center centroid; `None` for an empty mask.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for (i, _) in self.bits.iter().enumerate().filter(|(_, &b)| b) {
            let x = (i % self.width as usize) as f64 + 0.5;
            let y = (i / self.width as usize) as f64 + 0.5;
            sx += x;
            sy += y;
            n += 1;
        }
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }

    /// Tight bounding rectangle of the set pixels.
    pub fn bounding_box(&self) -> Option<BBox> {
        let w = self.width as usize;
        let mut xs = (usize::MAX, 0usize);
        let mut ys = (usize::MAX, 0usize);
        for (i, _) in self.bits.iter().enumerate().filter(|(_, &b)| b) {
            let (x, y) = (i % w, i / w);
            xs = (xs.0.min(x), xs.1.max(x));
            ys = (ys.0.min(y), ys.1.max(y));
        }
        (xs.0 != usize::MAX).then(|| {
            BBox::new(xs.0 as f64, ys.0 as f64, (xs.1 - xs.0 + 1) as f64, (ys.1 - ys.0 + 1) as f64)
        })
    }

    pub fn to_rle(&self) -> String {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0usize;
        for &b in &self.bits {
            if b == current {
                len += 1;
            } else {
                runs.push(len);
                current = b;
                len = 1;
            }
        }
        runs.push(len);
        let body: Vec<String> = runs.iter().map(|r| r.to_string()).collect();
        format!("{}x{}:{}", self.width, self.height, body.join(","))
    }

    pub fn from_rle(s: &str) -> Result<Self> {
        let bad = |m: &str| EsecError::Parse(format!("mask_rle `{s}`: {m}"));
        let (dims, body) = s.split_once(':').ok_or_else(|| bad("missing `:`"))?;
        let (w, h) = dims.split_once('x').ok_or_else(|| bad("dimensions must be WxH"))?;
        let width: u32 = w.trim().parse().map_err(|_| bad("bad width"))?;
        let height: u32 = h.trim().parse().map_err(|_| bad("bad height"))?;
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        let mut value = false;
        for run in body.split(',').filter(|r| !r.trim().is_empty()) {
            let n: usize = run.trim().parse().map_err(|_| bad("bad run length"))?;
            bits.extend(std::iter::repeat_n(value, n));
            value = !value;
        }
        Mask::new(width, height, bits)
    }
}

impl Serialize for Mask {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_rle())
    }
}

impl<'de> Deserialize<'de> for Mask {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Mask::from_rle(&s).map_err(serde::de::Error::custom)
    }
}

/// One entity observed at one frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameDetection {
    pub frame: u32,
    pub bbox: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Mask>,
    pub confidence: f64,
}

impl FrameDetection {
    pub fn new(frame: u32, bbox: BBox, confidence: f64) -> Self {
        FrameDetection { frame, bbox, mask: None, confidence }
    }

    /// Mask centroid when a non-empty mask is present, else the box center.
    pub fn centroid(&self) -> (f64, f64) {
        self.mask.as_ref().and_then(Mask::centroid).unwrap_or_else(|| self.bbox.center())
    }

    /// Region area: mask pixel count when both sides carry masks, else box area.
    pub fn region_area(&self) -> f64 {
        match &self.mask {
            Some(m) => m.area() as f64,
            None => self.bbox.area(),
        }
    }
}

/// One tracked scene entity over an episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityTrack {
    pub id: EntityId,
    pub class: String,
    pub frames: Vec<FrameDetection>,
}

impl EntityTrack {
    pub fn new(id: impl Into<EntityId>, class: impl Into<String>) -> Self {
        EntityTrack { id: id.into(), class: class.into(), frames: Vec::new() }
    }

    /// Detection at `frame`, if observed. Assumes frames are sorted.
    pub fn at(&self, frame: u32) -> Option<&FrameDetection> {
        self.frames.binary_search_by_key(&frame, |d| d.frame).ok().map(|i| &self.frames[i])
    }

    pub fn first_frame(&self) -> Option<u32> {
        self.frames.first().map(|d| d.frame)
    }

    pub fn last_frame(&self) -> Option<u32> {
        self.frames.last().map(|d| d.frame)
    }
}

/// All tracks of one episode, kept sorted by entity id.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub tracks: Vec<EntityTrack>,
}

impl Episode {
    pub fn new(mut tracks: Vec<EntityTrack>) -> Self {
        tracks.sort_by(|a, b| a.id.cmp(&b.id));
        Episode { tracks }
    }

    pub fn track(&self, id: &EntityId) -> Option<&EntityTrack> {
        self.tracks.binary_search_by(|t| t.id.cmp(id)).ok().map(|i| &self.tracks[i])
    }

    /// Inclusive frame range spanned by all tracks together.
    pub fn frame_range(&self) -> Option<(u32, u32)> {
        let first = self.tracks.iter().filter_map(EntityTrack::first_frame).min()?;
        let last = self.tracks.iter().filter_map(EntityTrack::last_frame).max()?;
        Some((first, last))
    }

    pub fn entity_classes(&self) -> Vec<(EntityId, String)> {
        self.tracks.iter().map(|t| (t.id.clone(), t.class.clone())).collect()
    }
}

/// Labels and confidences of the three channels of one pair, indexed by [`Channel::index`].
///
/// Invariant: each label fits its channel, UNK carries confidence 0, confidences lie in [0,1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationSlots {
    pub labels: [Label; 3],
    pub confidences: [f64; 3],
}

impl RelationSlots {
    pub const UNKNOWN: RelationSlots = RelationSlots { labels: [Label::Unk; 3], confidences: [0.0; 3] };

    pub fn label(&self, c: Channel) -> Label {
        self.labels[c.index()]
    }

    pub fn confidence(&self, c: Channel) -> f64 {
        self.confidences[c.index()]
    }

    /// Writes one channel, enforcing the UNK⇒0 rule.
    pub fn set(&mut self, c: Channel, label: Label, confidence: f64) {
        debug_assert!(label.fits(c), "label {label} does not belong to channel {c}");
        self.labels[c.index()] = label;
        self.confidences[c.index()] = if label.is_unk() { 0.0 } else { confidence.clamp(0.0, 1.0) };
    }

    pub fn is_consistent(&self) -> bool {
        Channel::ALL.iter().all(|&c| {
            let (l, p) = (self.label(c), self.confidence(c));
            l.fits(c) && (0.0..=1.0).contains(&p) && (!l.is_unk() || p == 0.0)
        })
    }
}

/// One (pair, frame) observation of all three relation channels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationObservation {
    pub pair: Pair,
    pub frame: u32,
    pub slots: RelationSlots,
}

impl RelationObservation {
    pub fn unknown(pair: Pair, frame: u32) -> Self {
        RelationObservation { pair, frame, slots: RelationSlots::UNKNOWN }
    }

    pub fn contact(&self) -> (Label, f64) {
        (self.slots.label(Channel::Contact), self.slots.confidence(Channel::Contact))
    }

    pub fn static_rel(&self) -> (Label, f64) {
        (self.slots.label(Channel::Static), self.slots.confidence(Channel::Static))
    }

    pub fn dynamic(&self) -> (Label, f64) {
        (self.slots.label(Channel::Dynamic), self.slots.confidence(Channel::Dynamic))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_sets_are_disjoint_and_unk_is_outside() {
        let vocab = Label::vocabulary();
        assert_eq!(vocab.len(), 2 + 5 + 6);
        for (i, a) in vocab.iter().enumerate() {
            assert!(!a.is_unk());
            for b in &vocab[i + 1..] {
                assert_ne!(a.as_str(), b.as_str());
            }
        }
        assert_eq!(Label::Unk.channel(), None);
    }

    #[test]
    fn static_priority_is_strict_total_order() {
        let mut ps: Vec<u8> = StaticRel::ALL.iter().map(|s| s.priority()).collect();
        assert!(ps.windows(2).all(|w| w[0] > w[1]));
        ps.dedup();
        assert_eq!(ps.len(), 5);
        for a in StaticRel::ALL {
            for b in StaticRel::ALL {
                if a != b {
                    assert!((a.priority() > b.priority()) ^ (b.priority() > a.priority()));
                }
            }
        }
    }

    #[test]
    fn label_strings_round_trip() {
        for l in Label::vocabulary().into_iter().chain([Label::Unk]) {
            assert_eq!(l.as_str().parse::<Label>().unwrap(), l);
            let json = serde_json::to_string(&l).unwrap();
            assert_eq!(serde_json::from_str::<Label>(&json).unwrap(), l);
        }
        assert!("touching".parse::<Label>().is_err());
    }

    #[test]
    fn box_gap_and_overlap() {
        let a = BBox::new(0.0, 0.0, 10.0, 10.0);
        let b = BBox::new(13.0, 14.0, 5.0, 5.0);
        assert!((a.gap(&b) - 5.0).abs() < 1e-12);
        assert_eq!(a.intersection_area(&b), 0.0);
        let c = BBox::new(5.0, 5.0, 10.0, 10.0);
        assert_eq!(a.gap(&c), 0.0);
        assert_eq!(a.intersection_area(&c), 25.0);
    }

    #[test]
    fn mask_rle_round_trip_and_geometry() {
        let m = Mask::from_box(8, 6, &BBox::new(2.0, 1.0, 3.0, 2.0));
        assert_eq!(m.area(), 6);
        let back = Mask::from_rle(&m.to_rle()).unwrap();
        assert_eq!(back, m);
        assert_eq!(m.bounding_box().unwrap(), BBox::new(2.0, 1.0, 3.0, 2.0));
        assert_eq!(m.centroid().unwrap(), (3.5, 2.0));
        assert!(Mask::from_rle("4x4:3,2").is_err());
    }

    #[test]
    fn slots_force_unk_confidence_to_zero() {
        let mut s = RelationSlots::UNKNOWN;
        s.set(Channel::Contact, Label::Unk, 0.7);
        assert_eq!(s.confidence(Channel::Contact), 0.0);
        s.set(Channel::Static, Label::Static(StaticRel::On), 0.4);
        assert!(s.is_consistent());
    }
}
