//! Detection-stream perturbations: dropout, corner jitter, confidence degradation.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EsecError, Result};
use crate::model::{BBox, Episode, EntityTrack, FrameDetection};

/// Smallest box side after jitter, pixels.
pub const MIN_BOX_SIZE: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLevel {
    Clean,
    Low,
    Medium,
    High,
}

impl NoiseLevel {
    pub const ALL: [NoiseLevel; 4] = [NoiseLevel::Clean, NoiseLevel::Low, NoiseLevel::Medium, NoiseLevel::High];

    pub fn as_str(self) -> &'static str {
        match self {
            NoiseLevel::Clean => "clean",
            NoiseLevel::Low => "low",
            NoiseLevel::Medium => "medium",
            NoiseLevel::High => "high",
        }
    }

    pub fn spec(self) -> NoiseSpec {
        let (dropout_prob, jitter_sigma, conf_scale) = match self {
            NoiseLevel::Clean => (0.0, 0.0, 1.0),
            NoiseLevel::Low => (0.05, 0.05, 0.9),
            NoiseLevel::Medium => (0.15, 0.10, 0.7),
            NoiseLevel::High => (0.30, 0.20, 0.5),
        };
        NoiseSpec { level_name: Some(self), dropout_prob, jitter_sigma, conf_scale }
    }
}

impl fmt::Display for NoiseLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoiseLevel {
    type Err = EsecError;

    fn from_str(s: &str) -> Result<Self> {
        NoiseLevel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| EsecError::UnknownLevel(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level_name: Option<NoiseLevel>,
    /// Probability of removing a detection, per (frame, entity).
    pub dropout_prob: f64,
    /// Corner displacement bound as a fraction of the box width/height.
    pub jitter_sigma: f64,
    /// Multiplicative detection-confidence factor.
    pub conf_scale: f64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return Err(EsecError::OutOfRange(format!("dropout_prob {} not in [0, 1]", self.dropout_prob)));
        }
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return Err(EsecError::OutOfRange(format!("jitter_sigma {} must be finite and non-negative", self.jitter_sigma)));
        }
        if !(self.conf_scale > 0.0 && self.conf_scale <= 1.0) {
            return Err(EsecError::OutOfRange(format!("conf_scale {} not in (0, 1]", self.conf_scale)));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.dropout_prob == 0.0 && self.jitter_sigma == 0.0 && self.conf_scale == 1.0
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let spec: NoiseSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

/// 64-bit FNV-1a hash, used to derive per-episode random streams.
pub fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn episode_rng(seed: u64, episode_id: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a(episode_id))
}

fn jitter_box(b: &BBox, sigma: f64, canvas: (f64, f64), rng: &mut ChaCha8Rng) -> BBox {
    let mut draw = |scale: f64| if scale > 0.0 { rng.random_range(-scale..=scale) } else { 0.0 };
    let (sx, sy) = (sigma * b.w, sigma * b.h);
    let (dx1, dy1, dx2, dy2) = (draw(sx), draw(sy), draw(sx), draw(sy));
    let clip = |v: f64, hi: f64| v.clamp(0.0, hi);
    let (mut x1, mut x2) = (clip(b.x + dx1, canvas.0), clip(b.right() + dx2, canvas.0));
    let (mut y1, mut y2) = (clip(b.y + dy1, canvas.1), clip(b.bottom() + dy2, canvas.1));
    if x1 > x2 {
        std::mem::swap(&mut x1, &mut x2);
    }
    if y1 > y2 {
        std::mem::swap(&mut y1, &mut y2);
    }
    let widen = |lo: f64, hi: f64, limit: f64| -> (f64, f64) {
        if hi - lo >= MIN_BOX_SIZE {
            return (lo, hi);
        }
        let mid = ((lo + hi) / 2.0).clamp(MIN_BOX_SIZE / 2.0, limit - MIN_BOX_SIZE / 2.0);
        (mid - MIN_BOX_SIZE / 2.0, mid + MIN_BOX_SIZE / 2.0)
    };
    let (x1, x2) = widen(x1, x2, canvas.0);
    let (y1, y2) = widen(y1, y2, canvas.1);
    BBox::new(x1, y1, x2 - x1, y2 - y1)
}

/// Independently per (frame, entity): drop with `dropout_prob`, displace each box corner
/// uniformly within ±`jitter_sigma`·size (clipped to the canvas, at least 2 px per side,
/// masks discarded), and scale the confidence. Tracks are visited in id order and frames in
/// time order, so the result depends only on (episode, spec, seed, episode id).
pub fn perturb(episode: &Episode, spec: &NoiseSpec, seed: u64, episode_id: &str, canvas: (f64, f64)) -> Episode {
    if spec.is_identity() {
        return episode.clone();
    }
    let mut rng = episode_rng(seed, episode_id);
    let tracks = episode
        .tracks
        .iter()
        .map(|t| {
            let mut out = EntityTrack::new(t.id.clone(), t.class.clone());
            for d in &t.frames {
                let dropped = rng.random::<f64>() < spec.dropout_prob;
                let bbox = if spec.jitter_sigma > 0.0 { jitter_box(&d.bbox, spec.jitter_sigma, canvas, &mut rng) } else { d.bbox };
                if dropped {
                    continue;
                }
                out.frames.push(FrameDetection {
                    frame: d.frame,
                    bbox,
                    mask: if spec.jitter_sigma > 0.0 { None } else { d.mask.clone() },
                    confidence: (d.confidence * spec.conf_scale).clamp(0.0, 1.0),
                });
            }
            out
        })
        .collect();
    Episode::new(tracks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_chain::build_predicate_streams;
    use crate::validation::validate_episode;
    use crate::EngineConfig;

    fn episode() -> Episode {
        let script = crate::suite::bundled_suite().into_iter().find(|s| s.name == "pour_00").unwrap();
        crate::simulator::generate_episode(&script, 0, 5).unwrap().0
    }

    const CANVAS: (f64, f64) = (640.0, 480.0);

    #[test]
    fn levels_parse_and_match_defaults() {
        assert_eq!("medium".parse::<NoiseLevel>().unwrap().spec().dropout_prob, 0.15);
        assert_eq!(NoiseLevel::High.spec().conf_scale, 0.5);
        assert!(NoiseLevel::Clean.spec().is_identity());
        assert!(matches!("extreme".parse::<NoiseLevel>(), Err(EsecError::UnknownLevel(_))));
        for l in NoiseLevel::ALL {
            l.spec().validate().unwrap();
        }
    }

    #[test]
    fn clean_spec_is_identity() {
        let ep = episode();
        assert_eq!(perturb(&ep, &NoiseLevel::Clean.spec(), 3, "pour_00", CANVAS), ep);
    }

    #[test]
    fn total_dropout_leaves_everything_unknown() {
        let ep = episode();
        let spec = NoiseSpec { level_name: None, dropout_prob: 1.0, jitter_sigma: 0.0, conf_scale: 1.0 };
        let out = perturb(&ep, &spec, 1, "pour_00", CANVAS);
        assert!(out.tracks.iter().all(|t| t.frames.is_empty()));
        // the frame range comes from the clean episode; every slot is UNK there
        let mut with_anchor = out.clone();
        with_anchor.tracks[0].frames.push(ep.tracks[0].frames[0].clone());
        let streams = build_predicate_streams(&with_anchor, &EngineConfig::default()).unwrap();
        assert!(streams.iter().all(|s| s.observations.iter().all(|o| o.slots.labels.iter().all(|l| l.is_unk()))));
    }

    #[test]
    fn high_noise_is_reproducible_and_drops_about_the_right_fraction() {
        let ep = episode();
        let spec = NoiseLevel::High.spec();
        let a = perturb(&ep, &spec, 42, "pour_00", CANVAS);
        assert_eq!(a, perturb(&ep, &spec, 42, "pour_00", CANVAS));
        assert_ne!(a, perturb(&ep, &spec, 43, "pour_00", CANVAS));
        let mut slots = 0usize;
        let mut kept = 0usize;
        for seed in 0..20 {
            let out = perturb(&ep, &spec, seed, "pour_00", CANVAS);
            slots += ep.tracks.iter().map(|t| t.frames.len()).sum::<usize>();
            kept += out.tracks.iter().map(|t| t.frames.len()).sum::<usize>();
        }
        assert!(slots >= 1000);
        let dropped = 1.0 - kept as f64 / slots as f64;
        assert!((dropped - 0.3).abs() <= 0.05, "dropout fraction {dropped}");
    }

    #[test]
    fn jittered_boxes_stay_valid_and_in_canvas() {
        let ep = episode();
        let spec = NoiseSpec { level_name: None, dropout_prob: 0.0, jitter_sigma: 2.0, conf_scale: 0.5 };
        let out = perturb(&ep, &spec, 9, "pour_00", CANVAS);
        for t in &out.tracks {
            for d in &t.frames {
                assert!(d.bbox.w >= MIN_BOX_SIZE - 1e-9 && d.bbox.h >= MIN_BOX_SIZE - 1e-9);
                assert!(d.bbox.x >= 0.0 && d.bbox.right() <= CANVAS.0 + 1e-9);
                assert!(d.bbox.y >= 0.0 && d.bbox.bottom() <= CANVAS.1 + 1e-9);
                assert_eq!(d.confidence, 0.5);
            }
        }
        assert!(validate_episode(&out).is_empty());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(NoiseSpec::from_json_str(r#"{"dropout_prob": 1.5, "jitter_sigma": 0, "conf_scale": 1}"#).is_err());
        assert!(NoiseSpec::from_json_str(r#"{"dropout_prob": 0.1, "jitter_sigma": 0, "conf_scale": 0}"#).is_err());
        let s = NoiseSpec::from_json_str(r#"{"level_name": "low", "dropout_prob": 0.1, "jitter_sigma": 0.1, "conf_scale": 0.8}"#).unwrap();
        assert_eq!(s.level_name, Some(NoiseLevel::Low));
    }

    #[test]
    fn episode_streams_differ_by_id() {
        assert_ne!(fnv1a("a"), fnv1a("b"));
        let mut r1 = episode_rng(1, "a");
        let mut r2 = episode_rng(1, "b");
        assert_ne!(r1.random::<u64>(), r2.random::<u64>());
    }
}
