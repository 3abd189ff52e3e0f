//! Detection-stream ingestion: JSON Lines, one record per (frame, entity).
//!
//! ```text
//! {"frame": 3, "id": "cup", "class": "cup", "box": [300, 330, 40, 70], "conf": 0.97}
//! ```
//!
//! `mask_rle` is optional; `keypoints` and any other extra fields are accepted and ignored.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{EsecError, Result};
use crate::model::{BBox, EntityId, EntityTrack, Episode, FrameDetection, Mask};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub frame: u32,
    pub id: String,
    pub class: String,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub conf: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_rle: Option<String>,
}

pub fn read_episode<R: BufRead>(reader: R) -> Result<Episode> {
    let mut tracks: BTreeMap<String, EntityTrack> = BTreeMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DetectionRecord = serde_json::from_str(&line)
            .map_err(|e| EsecError::Parse(format!("line {}: {e}", lineno + 1)))?;
        let mask = rec.mask_rle.as_deref().map(Mask::from_rle).transpose()?;
        let track = tracks
            .entry(rec.id.clone())
            .or_insert_with(|| EntityTrack::new(EntityId::new(rec.id.clone()), rec.class.clone()));
        if track.class != rec.class {
            return Err(EsecError::Parse(format!(
                "line {}: entity `{}` changes class from `{}` to `{}`",
                lineno + 1,
                rec.id,
                track.class,
                rec.class
            )));
        }
        track.frames.push(FrameDetection { frame: rec.frame, bbox: BBox::from(rec.bbox), mask, confidence: rec.conf });
    }
    let mut tracks: Vec<EntityTrack> = tracks.into_values().collect();
    for t in &mut tracks {
        // stable: duplicated frame indices stay visible to validation
        t.frames.sort_by_key(|d| d.frame);
    }
    Ok(Episode::new(tracks))
}

pub fn read_episode_str(s: &str) -> Result<Episode> {
    read_episode(s.as_bytes())
}

/// Records ordered by frame, then entity id.
pub fn episode_records(episode: &Episode) -> Vec<DetectionRecord> {
    let mut out: Vec<DetectionRecord> = episode
        .tracks
        .iter()
        .flat_map(|t| {
            t.frames.iter().map(move |d| DetectionRecord {
                frame: d.frame,
                id: t.id.0.clone(),
                class: t.class.clone(),
                bbox: d.bbox.into(),
                conf: d.confidence,
                mask_rle: d.mask.as_ref().map(Mask::to_rle),
            })
        })
        .collect();
    out.sort_by(|a, b| a.frame.cmp(&b.frame).then_with(|| a.id.cmp(&b.id)));
    out
}

pub fn write_episode<W: Write>(episode: &Episode, mut writer: W) -> Result<()> {
    for rec in episode_records(episode) {
        serde_json::to_writer(&mut writer, &rec)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn episode_to_string(episode: &Episode) -> String {
    let mut buf = Vec::new();
    write_episode(episode, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_records_into_sorted_tracks() {
        let text = r#"{"frame": 2, "id": "cup", "class": "cup", "box": [1, 2, 3, 4], "conf": 0.5}
{"frame": 1, "id": "cup", "class": "cup", "box": [1, 2, 3, 4], "conf": 0.5, "keypoints": [[1,2]]}
{"frame": 1, "id": "hand", "class": "hand", "box": [5, 5, 10, 10], "conf": 1.0}
"#;
        let ep = read_episode_str(text).unwrap();
        assert_eq!(ep.tracks.len(), 2);
        assert_eq!(ep.tracks[0].id.as_str(), "cup");
        assert_eq!(ep.tracks[0].frames.iter().map(|d| d.frame).collect::<Vec<_>>(), vec![1, 2]);
        let again = read_episode_str(&episode_to_string(&ep)).unwrap();
        assert_eq!(again, ep);
    }

    #[test]
    fn class_change_is_rejected() {
        let text = r#"{"frame": 1, "id": "a", "class": "cup", "box": [1, 2, 3, 4], "conf": 0.5}
{"frame": 2, "id": "a", "class": "bowl", "box": [1, 2, 3, 4], "conf": 0.5}"#;
        assert!(read_episode_str(text).is_err());
    }

    #[test]
    fn mask_field_is_decoded() {
        let text = r#"{"frame": 1, "id": "a", "class": "cup", "box": [0, 0, 2, 1], "conf": 0.5, "mask_rle": "4x2:0,2,6"}"#;
        let ep = read_episode_str(text).unwrap();
        let m = ep.tracks[0].frames[0].mask.as_ref().unwrap();
        assert_eq!(m.area(), 2);
    }
}
