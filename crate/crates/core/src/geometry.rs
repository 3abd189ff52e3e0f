//! Frame-level estimation of contact, static and dynamic relations from boxes and masks.
//!
//! Every estimator returns the selected label (or `None` for UNK) together with a
//! [`SupportScore`] saying how strongly the geometric criterion holds. Relation confidence
//! is then `min(s_i, s_j) · support` for all three channels.

use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::error::{EsecError, Result};
use crate::model::{BBox, ContactRel, DynamicRel, FrameDetection, Label, StaticRel};

/// Detection confidence below which contact evidence is considered unreliable.
pub const MIN_CONTACT_EVIDENCE: f64 = 0.1;
/// Direction agreement needed for `moving_together`.
pub const CO_MOTION_COSINE: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SupportScore(f64);

impl SupportScore {
    pub const ZERO: SupportScore = SupportScore(0.0);
    pub const ONE: SupportScore = SupportScore(1.0);

    /// Clamps into [0,1]; NaN maps to 0.
    pub fn new(v: f64) -> Self {
        if v.is_nan() {
            SupportScore(0.0)
        } else {
            SupportScore(v.clamp(0.0, 1.0))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

fn check_box(d: &FrameDetection) -> Result<()> {
    if d.bbox.is_valid() {
        Ok(())
    } else {
        Err(EsecError::InvalidGeometry(format!("degenerate box {:?} at frame {}", d.bbox, d.frame)))
    }
}

/// `|region_i ∩ region_j| / |region_i|`, using masks when both carry one.
pub fn containment_ratio(inner: &FrameDetection, outer: &FrameDetection) -> Result<f64> {
    if let (Some(mi), Some(mo)) = (&inner.mask, &outer.mask) {
        let area = mi.area();
        if area == 0 {
            return Err(EsecError::InvalidGeometry(format!("empty inner mask at frame {}", inner.frame)));
        }
        return Ok(mi.intersection_area(mo) as f64 / area as f64);
    }
    check_box(inner)?;
    Ok((inner.bbox.intersection_area(&outer.bbox) / inner.bbox.area()).clamp(0.0, 1.0))
}

/// Intersection over the smaller of the two regions.
fn normalized_overlap(a: &FrameDetection, b: &FrameDetection) -> f64 {
    if let (Some(ma), Some(mb)) = (&a.mask, &b.mask) {
        let smaller = ma.area().min(mb.area());
        if smaller == 0 {
            return 0.0;
        }
        return ma.intersection_area(mb) as f64 / smaller as f64;
    }
    a.bbox.intersection_area(&b.bbox) / a.bbox.area().min(b.bbox.area())
}

/// Which static criteria hold for an ordered pair, each with its own support score.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StaticCriteria {
    pub inside: Option<SupportScore>,
    pub on: Option<SupportScore>,
    pub above: Option<SupportScore>,
    pub below: Option<SupportScore>,
    pub around: Option<SupportScore>,
}

impl StaticCriteria {
    pub fn get(&self, rel: StaticRel) -> Option<SupportScore> {
        match rel {
            StaticRel::Inside => self.inside,
            StaticRel::On => self.on,
            StaticRel::Above => self.above,
            StaticRel::Below => self.below,
            StaticRel::Around => self.around,
        }
    }

    /// Highest-priority satisfied relation.
    pub fn select(&self) -> (Option<StaticRel>, SupportScore) {
        StaticRel::ALL
            .iter()
            .find_map(|&r| self.get(r).map(|s| (Some(r), s)))
            .unwrap_or((None, SupportScore::ZERO))
    }
}

pub fn static_criteria(i: &FrameDetection, j: &FrameDetection, cfg: &EngineConfig) -> Result<StaticCriteria> {
    check_box(i)?;
    check_box(j)?;
    let (bi, bj) = (&i.bbox, &j.bbox);
    let tol = cfg.delta_y * (bi.h + bj.h) / 2.0;

    let ratio = containment_ratio(i, j)?;
    let inside = (ratio >= cfg.tau_inside).then(|| SupportScore::new(ratio));

    let x_overlap = bi.horizontal_overlap(bj);
    let vertical_gap = (bi.bottom() - bj.y).abs();
    let on = (x_overlap > 0.0 && vertical_gap <= tol).then(|| {
        let overlap_fraction = x_overlap / bi.w.min(bj.w);
        let closeness = if tol > 0.0 { 1.0 - vertical_gap / tol } else { 1.0 };
        SupportScore::new(overlap_fraction * closeness)
    });

    let (_, yi) = i.centroid();
    let (_, yj) = j.centroid();
    let separation = (yj - yi).abs();
    let vertical_support = || SupportScore::new(if tol > 0.0 { separation / (2.0 * tol) } else { 1.0 });
    let above = (yi + tol <= yj).then(vertical_support);
    let below = (yi >= yj + tol).then(vertical_support);

    let gap = bi.gap(bj);
    let around = (gap <= cfg.adjacency_margin).then(|| SupportScore::new(1.0 - gap / cfg.adjacency_margin));

    Ok(StaticCriteria { inside, on, above, below, around })
}

/// Static relation of `i` with respect to `j` after priority selection; `(None, 0)` is UNK.
pub fn estimate_static_relation(
    det_i: &FrameDetection,
    det_j: &FrameDetection,
    cfg: &EngineConfig,
) -> Result<(Option<StaticRel>, SupportScore)> {
    Ok(static_criteria(det_i, det_j, cfg)?.select())
}

/// Contact from overlap or boundary proximity. Between half the adjacency margin and the
/// full margin, with too little overlap, the pair is `N` with proportionally reduced support.
pub fn estimate_contact(
    det_i: &FrameDetection,
    det_j: &FrameDetection,
    cfg: &EngineConfig,
) -> Result<(Option<ContactRel>, SupportScore)> {
    check_box(det_i)?;
    check_box(det_j)?;
    if det_i.confidence < MIN_CONTACT_EVIDENCE || det_j.confidence < MIN_CONTACT_EVIDENCE {
        return Ok((None, SupportScore::ZERO));
    }
    let overlap = normalized_overlap(det_i, det_j);
    let gap = det_i.bbox.gap(&det_j.bbox);
    let touch_gap = cfg.adjacency_margin / 2.0;
    if overlap >= cfg.contact_overlap || gap <= touch_gap {
        let by_overlap = if cfg.contact_overlap > 0.0 { overlap / cfg.contact_overlap } else { 1.0 };
        let by_gap = 1.0 - gap / touch_gap;
        return Ok((Some(ContactRel::Touching), SupportScore::new(by_overlap.max(by_gap))));
    }
    Ok((Some(ContactRel::NotTouching), SupportScore::new(gap / cfg.adjacency_margin)))
}

/// Motion summary of an aligned pair of windows, distances normalized by the image diagonal.
#[derive(Clone, Debug)]
struct WindowMotion {
    distances: Vec<f64>,
    disp_i: (f64, f64),
    disp_j: (f64, f64),
    relative_disp: f64,
}

fn displacement(track: &[(f64, f64)], from: usize, to: usize, diag: f64) -> (f64, f64) {
    ((track[to].0 - track[from].0) / diag, (track[to].1 - track[from].1) / diag)
}

fn norm(v: (f64, f64)) -> f64 {
    v.0.hypot(v.1)
}

impl WindowMotion {
    fn new(hi: &[FrameDetection], hj: &[FrameDetection], diag: f64) -> Self {
        let ci: Vec<(f64, f64)> = hi.iter().map(FrameDetection::centroid).collect();
        let cj: Vec<(f64, f64)> = hj.iter().map(FrameDetection::centroid).collect();
        let last = ci.len() - 1;
        let distances = ci
            .iter()
            .zip(&cj)
            .map(|(a, b)| (a.0 - b.0).hypot(a.1 - b.1) / diag)
            .collect();
        let disp_i = displacement(&ci, 0, last, diag);
        let disp_j = displacement(&cj, 0, last, diag);
        let relative_disp = norm((disp_i.0 - disp_j.0, disp_i.1 - disp_j.1));
        WindowMotion { distances, disp_i, disp_j, relative_disp }
    }

    fn total_change(&self) -> f64 {
        self.distances[self.distances.len() - 1] - self.distances[0]
    }

    /// Distance at the window's start, middle and end.
    fn checkpoints(&self) -> Vec<f64> {
        let last = self.distances.len() - 1;
        let mut idx = vec![0, last / 2, last];
        idx.dedup();
        idx.into_iter().map(|k| self.distances[k]).collect()
    }
}

/// Monotone trend over the checkpoints with at most one step in the wrong direction.
fn is_trend(checkpoints: &[f64], decreasing: bool) -> bool {
    let steps = checkpoints.len() - 1;
    let wrong = checkpoints
        .windows(2)
        .filter(|w| if decreasing { w[1] >= w[0] } else { w[1] <= w[0] })
        .count();
    wrong <= 1 && wrong < steps.max(2)
}

/// Dynamic relation over aligned windows ending at the current frame.
///
/// Rules are tried in order: fixed_moving_together, moving_together, halting_together,
/// getting_close, moving_apart, stable; otherwise UNK.
pub fn estimate_dynamic_relation(
    history_i: &[FrameDetection],
    history_j: &[FrameDetection],
    contact_history: &[Label],
    cfg: &EngineConfig,
) -> Result<(Option<DynamicRel>, SupportScore)> {
    let w = cfg.window;
    for len in [history_i.len(), history_j.len(), contact_history.len()] {
        if len < w {
            return Err(EsecError::WindowTooShort { got: len, expected: w });
        }
    }
    let hi = &history_i[history_i.len() - w..];
    let hj = &history_j[history_j.len() - w..];
    let contacts = &contact_history[contact_history.len() - w..];
    for d in hi.iter().chain(hj) {
        check_box(d)?;
    }

    let diag = cfg.diagonal();
    let eps = cfg.epsilon_motion;
    let m = WindowMotion::new(hi, hj, diag);
    let (speed_i, speed_j) = (norm(m.disp_i), norm(m.disp_j));
    let both_moving = speed_i > eps && speed_j > eps;
    let change = m.total_change();
    let ratio_to_eps = |v: f64| if eps > 0.0 { v / eps } else { 0.0 };

    if both_moving && contacts.iter().all(|&c| c == Label::T) && m.relative_disp <= eps {
        return Ok((Some(DynamicRel::FixedMovingTogether), SupportScore::new(1.0 - ratio_to_eps(m.relative_disp))));
    }

    if both_moving && change.abs() <= eps {
        let cosine = (m.disp_i.0 * m.disp_j.0 + m.disp_i.1 * m.disp_j.1) / (speed_i * speed_j);
        if cosine >= CO_MOTION_COSINE {
            return Ok((Some(DynamicRel::MovingTogether), SupportScore::new(1.0 - ratio_to_eps(change.abs()))));
        }
    }

    let last = w - 1;
    let half = last / 2;
    if half >= 1 {
        let half_eps = eps * half as f64 / last as f64;
        let cs = |h: &[FrameDetection]| -> Vec<(f64, f64)> { h.iter().map(FrameDetection::centroid).collect() };
        let (ci, cj) = (cs(hi), cs(hj));
        let early = |c: &[(f64, f64)]| norm(displacement(c, 0, half, diag));
        let late = |c: &[(f64, f64)]| norm(displacement(c, last - half, last, diag));
        let (ei, ej, li, lj) = (early(&ci), early(&cj), late(&ci), late(&cj));
        if ei > half_eps && ej > half_eps && li <= half_eps && lj <= half_eps {
            let residual = li.max(lj) / half_eps;
            return Ok((Some(DynamicRel::HaltingTogether), SupportScore::new(1.0 - residual)));
        }
    }

    let trend_support = SupportScore::new(ratio_to_eps(change.abs()) / last as f64);
    let checkpoints = m.checkpoints();
    if -change >= eps && is_trend(&checkpoints, true) {
        return Ok((Some(DynamicRel::GettingClose), trend_support));
    }
    if change >= eps && is_trend(&checkpoints, false) {
        return Ok((Some(DynamicRel::MovingApart), trend_support));
    }
    if change.abs() < eps {
        return Ok((Some(DynamicRel::Stable), SupportScore::new(1.0 - ratio_to_eps(change.abs()))));
    }
    Ok((None, SupportScore::ZERO))
}

/// `min(s_i, s_j) · support`.
pub fn relation_confidence(s_i: f64, s_j: f64, support: SupportScore) -> Result<f64> {
    for (name, v) in [("s_i", s_i), ("s_j", s_j), ("support", support.value())] {
        if !(0.0..=1.0).contains(&v) {
            return Err(EsecError::OutOfRange(format!("{name} = {v} is outside [0,1]")));
        }
    }
    Ok(s_i.min(s_j) * support.value())
}

/// Convenience: axis-aligned box detection at `frame` with confidence `conf`.
pub fn detection(frame: u32, x: f64, y: f64, w: f64, h: f64, conf: f64) -> FrameDetection {
    FrameDetection::new(frame, BBox::new(x, y, w, h), conf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Mask;
    use proptest::prelude::*;

    fn det(x: f64, y: f64, w: f64, h: f64) -> FrameDetection {
        detection(1, x, y, w, h, 1.0)
    }

    fn cfg() -> EngineConfig {
        EngineConfig::default()
    }

    #[test]
    fn containment_examples() {
        let outer = det(0.0, 0.0, 100.0, 100.0);
        assert_eq!(containment_ratio(&det(10.0, 10.0, 20.0, 20.0), &outer).unwrap(), 1.0);
        assert_eq!(containment_ratio(&det(90.0, 90.0, 20.0, 20.0), &outer).unwrap(), 0.25);
        assert_eq!(containment_ratio(&det(200.0, 200.0, 20.0, 20.0), &outer).unwrap(), 0.0);
        assert!(containment_ratio(&det(0.0, 0.0, 0.0, 5.0), &outer).is_err());
    }

    #[test]
    fn containment_prefers_masks() {
        let mut inner = det(0.0, 0.0, 4.0, 4.0);
        let mut outer = det(0.0, 0.0, 4.0, 4.0);
        inner.mask = Some(Mask::from_box(8, 8, &BBox::new(0.0, 0.0, 4.0, 4.0)));
        outer.mask = Some(Mask::from_box(8, 8, &BBox::new(0.0, 0.0, 2.0, 4.0)));
        assert_eq!(containment_ratio(&inner, &outer).unwrap(), 0.5);
    }

    #[test]
    fn nested_boxes_are_inside() {
        let (rel, s) = estimate_static_relation(&det(40.0, 40.0, 20.0, 20.0), &det(0.0, 0.0, 100.0, 100.0), &cfg()).unwrap();
        assert_eq!(rel, Some(StaticRel::Inside));
        assert_eq!(s.value(), 1.0);
    }

    #[test]
    fn resting_box_is_on() {
        let crit = static_criteria(&det(0.0, 40.0, 20.0, 10.0), &det(0.0, 50.0, 40.0, 30.0), &cfg()).unwrap();
        assert!(crit.above.is_some(), "above also holds; priority must pick on");
        let (rel, s) = crit.select();
        assert_eq!(rel, Some(StaticRel::On));
        assert!(s.value() > 0.0);
    }

    #[test]
    fn far_apart_boxes_are_unknown() {
        let (rel, s) = estimate_static_relation(&det(0.0, 200.0, 40.0, 40.0), &det(540.0, 200.0, 40.0, 40.0), &cfg()).unwrap();
        assert_eq!(rel, None);
        assert_eq!(s, SupportScore::ZERO);
    }

    #[test]
    fn degenerate_static_input_errors() {
        assert!(estimate_static_relation(&det(0.0, 0.0, 10.0, 0.0), &det(0.0, 0.0, 5.0, 5.0), &cfg()).is_err());
        assert!(estimate_contact(&det(0.0, 0.0, -1.0, 3.0), &det(0.0, 0.0, 5.0, 5.0), &cfg()).is_err());
    }

    #[test]
    fn contact_examples() {
        // 20x20 overlap of two 40x20 boxes: intersection/smaller = 0.5
        let (rel, s) = estimate_contact(&detection(1, 0.0, 0.0, 40.0, 20.0, 0.9), &detection(1, 20.0, 0.0, 40.0, 20.0, 0.9), &cfg()).unwrap();
        assert_eq!((rel, s.value()), (Some(ContactRel::Touching), 1.0));

        let (rel, s) = estimate_contact(&detection(1, 0.0, 0.0, 40.0, 40.0, 0.9), &detection(1, 240.0, 0.0, 40.0, 40.0, 0.9), &cfg()).unwrap();
        assert_eq!((rel, s.value()), (Some(ContactRel::NotTouching), 1.0));

        let (rel, s) = estimate_contact(&detection(1, 0.0, 0.0, 40.0, 20.0, 0.9), &detection(1, 20.0, 0.0, 40.0, 20.0, 0.05), &cfg()).unwrap();
        assert_eq!((rel, s), (None, SupportScore::ZERO));
    }

    #[test]
    fn contact_in_proximity_band_is_weak_n() {
        let (rel, s) = estimate_contact(&det(0.0, 0.0, 10.0, 10.0), &det(18.0, 0.0, 10.0, 10.0), &cfg()).unwrap();
        assert_eq!(rel, Some(ContactRel::NotTouching));
        assert!((s.value() - 0.8).abs() < 1e-12);
    }

    fn window_from_centroids(points: &[(f64, f64)]) -> Vec<FrameDetection> {
        points
            .iter()
            .enumerate()
            .map(|(k, &(cx, cy))| detection(k as u32 + 1, cx - 10.0, cy - 10.0, 20.0, 20.0, 1.0))
            .collect()
    }

    #[test]
    fn steadily_decreasing_distance_is_getting_close() {
        // diagonal = 800 px, so d = [0.10, 0.08, 0.06, 0.04, 0.02] means 80..16 px
        let j = window_from_centroids(&[(400.0, 200.0); 5]);
        let i = window_from_centroids(&[(320.0, 200.0), (336.0, 200.0), (352.0, 200.0), (368.0, 200.0), (384.0, 200.0)]);
        let contacts = vec![Label::N; 5];
        let (rel, s) = estimate_dynamic_relation(&i, &j, &contacts, &cfg()).unwrap();
        assert_eq!(rel, Some(DynamicRel::GettingClose));
        assert!((s.value() - 1.0).abs() < 1e-9);
        let (rel, _) = estimate_dynamic_relation(&j, &i, &contacts, &cfg()).unwrap();
        assert_eq!(rel, Some(DynamicRel::GettingClose));
    }

    #[test]
    fn static_entities_are_stable() {
        let i = window_from_centroids(&[(100.0, 100.0); 5]);
        let j = window_from_centroids(&[(300.0, 100.0); 5]);
        let (rel, s) = estimate_dynamic_relation(&i, &j, &[Label::N; 5], &cfg()).unwrap();
        assert_eq!(rel, Some(DynamicRel::Stable));
        assert_eq!(s.value(), 1.0);
    }

    #[test]
    fn rigid_transport_in_contact_is_fixed_moving_together() {
        let pts = |x0: f64| (0..5).map(|k| (x0 + 5.0 * k as f64, 200.0)).collect::<Vec<_>>();
        let i = window_from_centroids(&pts(100.0));
        let j = window_from_centroids(&pts(115.0));
        let (rel, s) = estimate_dynamic_relation(&i, &j, &[Label::T; 5], &cfg()).unwrap();
        assert_eq!(rel, Some(DynamicRel::FixedMovingTogether));
        assert_eq!(s.value(), 1.0);
        // same motion without contact falls through to moving_together
        let (rel, _) = estimate_dynamic_relation(&i, &j, &[Label::N; 5], &cfg()).unwrap();
        assert_eq!(rel, Some(DynamicRel::MovingTogether));
    }

    #[test]
    fn joint_stop_is_halting_together() {
        // parallel co-motion would be moving_together (checked first); use orthogonal moves
        let steps = [0.0, 12.0, 24.0, 24.0, 24.0];
        let i: Vec<_> = steps.iter().map(|d| (100.0 + d, 200.0)).collect();
        let j: Vec<_> = steps.iter().map(|d| (300.0, 200.0 + d)).collect();
        let (rel, _) =
            estimate_dynamic_relation(&window_from_centroids(&i), &window_from_centroids(&j), &[Label::N; 5], &cfg())
                .unwrap();
        assert_eq!(rel, Some(DynamicRel::HaltingTogether));
    }

    #[test]
    fn short_window_errors() {
        let i = window_from_centroids(&[(0.0, 0.0); 3]);
        assert!(matches!(
            estimate_dynamic_relation(&i, &i, &[Label::N; 3], &cfg()),
            Err(EsecError::WindowTooShort { got: 3, expected: 5 })
        ));
    }

    #[test]
    fn confidence_examples() {
        assert_eq!(relation_confidence(1.0, 1.0, SupportScore::ONE).unwrap(), 1.0);
        assert!((relation_confidence(0.8, 0.6, SupportScore::new(0.5)).unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(relation_confidence(0.0, 0.9, SupportScore::ONE).unwrap(), 0.0);
        assert!(relation_confidence(1.2, 0.9, SupportScore::ONE).is_err());
    }

    fn arb_box() -> impl Strategy<Value = FrameDetection> {
        (0.0..600.0f64, 0.0..440.0f64, 2.0..120.0f64, 2.0..120.0f64, 0.0..=1.0f64)
            .prop_map(|(x, y, w, h, c)| detection(1, x, y, w, h, c))
    }

    proptest! {
        #[test]
        fn priority_soundness(a in arb_box(), b in arb_box()) {
            let crit = static_criteria(&a, &b, &cfg()).unwrap();
            let (rel, s) = crit.select();
            match rel {
                None => {
                    prop_assert!(StaticRel::ALL.iter().all(|&r| crit.get(r).is_none()));
                    prop_assert_eq!(s, SupportScore::ZERO);
                }
                Some(r) => {
                    prop_assert!(StaticRel::ALL.iter().all(|&o| o.priority() <= r.priority() || crit.get(o).is_none()));
                }
            }
        }

        #[test]
        fn contact_is_symmetric(a in arb_box(), b in arb_box()) {
            let ab = estimate_contact(&a, &b, &cfg()).unwrap();
            let ba = estimate_contact(&b, &a, &cfg()).unwrap();
            prop_assert_eq!(ab.0, ba.0);
            if ab.0.is_none() {
                prop_assert_eq!(ab.1, SupportScore::ZERO);
            }
        }

        #[test]
        fn above_mirrors_below(a in arb_box(), b in arb_box()) {
            let ab = static_criteria(&a, &b, &cfg()).unwrap();
            let ba = static_criteria(&b, &a, &cfg()).unwrap();
            prop_assert_eq!(ab.above.is_some(), ba.below.is_some());
            prop_assert_eq!(ab.below.is_some(), ba.above.is_some());
        }

        #[test]
        fn confidence_is_monotone_and_bounded(si in 0.0..=1.0f64, sj in 0.0..=1.0f64, g in 0.0..=1.0f64, bump in 0.0..=1.0f64) {
            let p = relation_confidence(si, sj, SupportScore::new(g)).unwrap();
            prop_assert!(p <= si.min(sj));
            let up = |v: f64| (v + bump).min(1.0);
            prop_assert!(relation_confidence(up(si), sj, SupportScore::new(g)).unwrap() >= p);
            prop_assert!(relation_confidence(si, up(sj), SupportScore::new(g)).unwrap() >= p);
            prop_assert!(relation_confidence(si, sj, SupportScore::new(up(g))).unwrap() >= p);
        }

        #[test]
        fn estimators_are_deterministic(a in arb_box(), b in arb_box()) {
            prop_assert_eq!(estimate_static_relation(&a, &b, &cfg()).unwrap(), estimate_static_relation(&a, &b, &cfg()).unwrap());
            prop_assert_eq!(estimate_contact(&a, &b, &cfg()).unwrap(), estimate_contact(&a, &b, &cfg()).unwrap());
        }
    }
}
