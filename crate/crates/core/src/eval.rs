//! Event-level metrics and multi-seed, multi-variant evaluation reports.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{EsecError, Result};
use crate::explanation::explanation_consistency;
use crate::model::Episode;
use crate::noise::{perturb, NoiseLevel};
use crate::pipeline::{run_episode, Engine, EpisodeRun, Variant};
use crate::primitives::{DecisionRecord, PrimitiveSegment};
use crate::simulator::{generate_episode, EpisodeScript, GroundTruth};

/// Correct-over-total counter.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub correct: usize,
    pub total: usize,
}

impl Tally {
    pub fn rate(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }

    fn add(&mut self, other: Tally) {
        self.correct += other.correct;
        self.total += other.total;
    }
}

fn check_episode(predicted: &str, gt: &GroundTruth) -> Result<()> {
    if predicted != gt.episode {
        return Err(EsecError::EpisodeMismatch(format!("predictions for `{predicted}`, ground truth for `{}`", gt.episode)));
    }
    Ok(())
}

fn segment_label(segments: &[PrimitiveSegment], k: usize) -> Option<&str> {
    segments.iter().find(|s| s.k_start <= k && k <= s.k_end).map(|s| s.label.as_str())
}

/// Event k is correct iff the segment label covering k equals the ground truth at t_k.
pub fn evaluate_recognition(episode: &str, segments: &[PrimitiveSegment], events: &[u32], gt: &GroundTruth) -> Result<Tally> {
    check_episode(episode, gt)?;
    let mut tally = Tally::default();
    for (i, &t) in events.iter().enumerate() {
        let truth = gt
            .label_at(t)
            .ok_or_else(|| EsecError::EpisodeMismatch(format!("event at frame {t} lies outside `{}`", gt.episode)))?;
        tally.total += 1;
        if segment_label(segments, i + 1) == Some(truth) {
            tally.correct += 1;
        }
    }
    Ok(tally)
}

/// Scored at every event whose ground-truth phase has a successor.
pub fn evaluate_next_primitive(episode: &str, decisions: &[DecisionRecord], gt: &GroundTruth) -> Result<Tally> {
    check_episode(episode, gt)?;
    let mut tally = Tally::default();
    for d in decisions {
        if gt.label_at(d.event_time).is_none() {
            return Err(EsecError::EpisodeMismatch(format!("event at frame {} lies outside `{}`", d.event_time, gt.episode)));
        }
        if let Some(next) = gt.next_label(d.event_time) {
            tally.total += 1;
            if d.predicted_next.as_deref() == Some(next) {
                tally.correct += 1;
            }
        }
    }
    Ok(tally)
}

/// Metrics of one episode under one (variant, level, seed).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: String,
    pub branching: bool,
    pub recognition: Tally,
    pub next_primitive: Tally,
    pub consistency: f64,
}

pub fn episode_metrics(gt: &GroundTruth, run: &EpisodeRun) -> Result<EpisodeMetrics> {
    let events = run.matrix.event_times();
    Ok(EpisodeMetrics {
        episode: gt.episode.clone(),
        branching: gt.branching,
        recognition: evaluate_recognition(&gt.episode, &run.segments, &events, gt)?,
        next_primitive: evaluate_next_primitive(&gt.episode, &run.decisions, gt)?,
        consistency: explanation_consistency(&run.traces),
    })
}

/// A generated suite episode.
#[derive(Clone, Debug)]
pub struct SuiteEpisode {
    pub episode: Episode,
    pub ground_truth: GroundTruth,
}

pub fn generate_suite(scripts: &[EpisodeScript], min_phase_frames: usize) -> Result<Vec<SuiteEpisode>> {
    let mut out: Vec<SuiteEpisode> = scripts
        .iter()
        .map(|s| generate_episode(s, 0, min_phase_frames).map(|(episode, ground_truth)| SuiteEpisode { episode, ground_truth }))
        .collect::<Result<_>>()?;
    out.sort_by(|a, b| a.ground_truth.episode.cmp(&b.ground_truth.episode));
    Ok(out)
}

/// Mean and sample standard deviation over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedStats {
    pub mean: f64,
    pub std: f64,
    pub per_seed: Vec<f64>,
}

impl SeedStats {
    pub fn from_values(values: Vec<f64>) -> Self {
        let n = values.len();
        let mean = if n == 0 { 0.0 } else { values.iter().sum::<f64>() / n as f64 };
        let std = if n < 2 { 0.0 } else { (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() };
        SeedStats { mean, std, per_seed: values }
    }
}

/// A rate averaged over episodes, with its denominators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    /// Per-seed macro average over episodes, summarized across seeds.
    pub top1: SeedStats,
    /// Episodes contributing to each per-seed average.
    pub episodes: usize,
    /// Scored events per seed (summed over episodes).
    pub events: Vec<usize>,
    pub correct: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantLevelResult {
    pub variant: Variant,
    pub level: NoiseLevel,
    pub top1_recognition: RateSummary,
    /// Over branch-free episodes.
    pub top1_next_primitive: RateSummary,
    /// Over branch-point episodes, reported separately.
    pub top1_next_primitive_branching: RateSummary,
    pub mean_consistency: SeedStats,
    pub episode_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantAggregate {
    pub variant: Variant,
    /// Mean recognition over all evaluated levels.
    pub aggregate_recognition: f64,
    /// Drop relative to the full variant (positive = worse than full).
    pub drop_vs_full: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub suite: String,
    pub episode_count: usize,
    pub branching_episodes: usize,
    pub seeds: Vec<u64>,
    pub variants: Vec<Variant>,
    pub levels: Vec<NoiseLevel>,
    pub results: Vec<VariantLevelResult>,
    pub aggregates: Vec<VariantAggregate>,
}

impl EvalReport {
    pub fn result(&self, variant: Variant, level: NoiseLevel) -> Option<&VariantLevelResult> {
        self.results.iter().find(|r| r.variant == variant && r.level == level)
    }

    pub fn aggregate(&self, variant: Variant) -> Option<&VariantAggregate> {
        self.aggregates.iter().find(|a| a.variant == variant)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Metrics for every (episode, seed) of one variant at one level; sorted by episode id,
/// then seed, regardless of worker scheduling.
pub fn run_variant_level(
    suite: &[SuiteEpisode],
    engine: &Engine,
    variant: Variant,
    level: NoiseLevel,
    seeds: &[u64],
) -> Result<Vec<(u64, EpisodeMetrics)>> {
    let spec = level.spec();
    let canvas = (engine.cfg.canvas_width, engine.cfg.canvas_height);
    let jobs: Vec<(usize, u64)> = (0..suite.len()).flat_map(|i| seeds.iter().map(move |&s| (i, s))).collect();
    let mut out: Vec<(usize, u64, EpisodeMetrics)> = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let e = &suite[i];
            let noisy = perturb(&e.episode, &spec, seed, &e.ground_truth.episode, canvas);
            let run = run_episode(&noisy, engine, variant)?;
            Ok((i, seed, episode_metrics(&e.ground_truth, &run)?))
        })
        .collect::<Result<_>>()?;
    out.sort_by(|a, b| (&a.2.episode, a.1).cmp(&(&b.2.episode, b.1)));
    Ok(out.into_iter().map(|(_, s, m)| (s, m)).collect())
}

fn summarize(metrics: &[(u64, EpisodeMetrics)], seeds: &[u64], pick: impl Fn(&EpisodeMetrics) -> Option<Tally>) -> RateSummary {
    let mut rates = Vec::with_capacity(seeds.len());
    let mut events = Vec::with_capacity(seeds.len());
    let mut correct = Vec::with_capacity(seeds.len());
    let mut episodes = 0;
    for &seed in seeds {
        let mut sum = 0.0;
        let mut n = 0usize;
        let mut tally = Tally::default();
        for (_, m) in metrics.iter().filter(|(s, _)| *s == seed) {
            if let Some(t) = pick(m) {
                if let Some(r) = t.rate() {
                    sum += r;
                    n += 1;
                }
                tally.add(t);
            }
        }
        episodes = n;
        rates.push(if n == 0 { 0.0 } else { sum / n as f64 });
        events.push(tally.total);
        correct.push(tally.correct);
    }
    RateSummary { top1: SeedStats::from_values(rates), episodes, events, correct }
}

pub fn summarize_variant_level(
    metrics: &[(u64, EpisodeMetrics)],
    variant: Variant,
    level: NoiseLevel,
    seeds: &[u64],
    episode_count: usize,
) -> VariantLevelResult {
    let consistency = seeds
        .iter()
        .map(|&seed| {
            let v: Vec<f64> = metrics.iter().filter(|(s, _)| *s == seed).map(|(_, m)| m.consistency).collect();
            if v.is_empty() {
                0.0
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        })
        .collect();
    VariantLevelResult {
        variant,
        level,
        top1_recognition: summarize(metrics, seeds, |m| Some(m.recognition)),
        top1_next_primitive: summarize(metrics, seeds, |m| (!m.branching).then_some(m.next_primitive)),
        top1_next_primitive_branching: summarize(metrics, seeds, |m| m.branching.then_some(m.next_primitive)),
        mean_consistency: SeedStats::from_values(consistency),
        episode_count,
    }
}

/// Every requested (variant, level) pair over the suite; the report is a pure function of
/// the inputs.
pub fn run_ablation(
    suite_name: &str,
    suite: &[SuiteEpisode],
    engine: &Engine,
    variants: &[Variant],
    levels: &[NoiseLevel],
    seeds: &[u64],
) -> Result<EvalReport> {
    if suite.is_empty() {
        return Err(EsecError::Script(vec!["evaluation suite is empty".to_string()]));
    }
    if seeds.is_empty() || variants.is_empty() || levels.is_empty() {
        return Err(EsecError::Config("evaluation needs at least one seed, variant and level".to_string()));
    }
    let mut results = Vec::new();
    for &variant in variants {
        for &level in levels {
            let metrics = run_variant_level(suite, engine, variant, level, seeds)?;
            results.push(summarize_variant_level(&metrics, variant, level, seeds, suite.len()));
        }
    }
    let aggregate_of = |v: Variant| -> f64 {
        let r: Vec<f64> = results.iter().filter(|r| r.variant == v).map(|r| r.top1_recognition.top1.mean).collect();
        r.iter().sum::<f64>() / r.len() as f64
    };
    let full = variants.contains(&Variant::Full).then(|| aggregate_of(Variant::Full));
    let aggregates = variants
        .iter()
        .map(|&v| {
            let a = aggregate_of(v);
            VariantAggregate { variant: v, aggregate_recognition: a, drop_vs_full: full.map(|f| f - a) }
        })
        .collect();
    Ok(EvalReport {
        suite: suite_name.to_string(),
        episode_count: suite.len(),
        branching_episodes: suite.iter().filter(|e| e.ground_truth.branching).count(),
        seeds: seeds.to_vec(),
        variants: variants.to_vec(),
        levels: levels.to_vec(),
        results,
        aggregates,
    })
}

/// Comma-separated list, first occurrences kept in order.
pub fn parse_list<T: std::str::FromStr<Err = EsecError>>(s: &str) -> Result<Vec<T>> {
    let mut seen = BTreeMap::new();
    for (i, part) in s.split(',').map(str::trim).filter(|p| !p.is_empty()).enumerate() {
        seen.entry(part.to_string()).or_insert(i);
    }
    let mut ordered: Vec<(usize, String)> = seen.into_iter().map(|(k, i)| (i, k)).collect();
    ordered.sort();
    ordered.into_iter().map(|(_, p)| p.parse()).collect()
}
