//! Per-event dump of the bundled suite: ground truth, selection and the top scores.
//!
//! `cargo run --example inspect_suite -- [name-filter] [--all]`

use esec::pipeline::{run_episode, Engine, Variant};
use esec::simulator::generate_episode;
use esec::suite::bundled_suite;
use esec::EngineConfig;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let all = args.iter().any(|a| a == "--all");
    let filter = args.iter().find(|a| !a.starts_with("--")).cloned().unwrap_or_default();
    let engine = Engine::bundled(EngineConfig::default());
    let (mut events, mut wrong, mut next_total, mut next_wrong) = (0, 0, 0, 0);
    for script in bundled_suite().iter().filter(|s| s.name.contains(&filter)) {
        let (ep, gt) = generate_episode(script, 0, engine.cfg.window).unwrap();
        let run = run_episode(&ep, &engine, Variant::Full).unwrap();
        let mut lines = Vec::new();
        let mut bad = false;
        for d in &run.decisions {
            let truth = gt.label_at(d.event_time).unwrap();
            let next = gt.next_label(d.event_time);
            let ok = d.label == truth;
            let next_ok = next.is_none() || next == d.predicted_next.as_deref();
            events += 1;
            if !ok {
                wrong += 1;
            }
            if next.is_some() && !script.branching {
                next_total += 1;
                if !next_ok {
                    next_wrong += 1;
                }
            }
            bad |= !ok || (!next_ok && !script.branching);
            let mut top: Vec<(&String, &f64)> = d.scores.iter().collect();
            top.sort_by(|a, b| b.1.total_cmp(a.1).then(a.0.cmp(b.0)));
            let top: Vec<String> = top.iter().take(3).map(|(n, s)| format!("{n}={s:.3}")).collect();
            lines.push(format!(
                "  {}{} k={:<2} t={:<3} gt={:<8} got={:<8} next={:<8} pred={:<8} [{}]",
                if ok { ' ' } else { '!' },
                if next_ok { ' ' } else { '?' },
                d.k,
                d.event_time,
                truth,
                d.label,
                next.unwrap_or("-"),
                d.predicted_next.as_deref().unwrap_or("-"),
                top.join(" ")
            ));
        }
        if bad || all {
            println!("{} ({} events)", script.name, run.decisions.len());
            for l in lines {
                println!("{l}");
            }
        }
    }
    println!("events {events} wrong {wrong}; next-primitive {next_total} wrong {next_wrong}");
}
