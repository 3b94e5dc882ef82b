//! Aggregate latency and budget report over repeated runs.

use std::fmt::Write as _;

use super::config::SimConfig;
use super::runner::{simulate, RunStats, SimError};
use super::scenario::Scenario;
use crate::nn::{ModelGraph, FLASH_BUDGET};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSummary {
    pub n: usize,
    pub mean: f64,
    pub min: u64,
    pub max: u64,
}

pub fn summarize(samples: &[u64]) -> PhaseSummary {
    if samples.is_empty() {
        return PhaseSummary {
            n: 0,
            mean: 0.0,
            min: 0,
            max: 0,
        };
    }
    PhaseSummary {
        n: samples.len(),
        mean: samples.iter().sum::<u64>() as f64 / samples.len() as f64,
        min: *samples.iter().min().expect("nonempty"),
        max: *samples.iter().max().expect("nonempty"),
    }
}

/// Replays the scenario `runs` times.
pub fn bench_runs(
    scenario: &Scenario,
    person: &ModelGraph,
    kws: &ModelGraph,
    cfg: &SimConfig,
    runs: usize,
) -> Result<Vec<RunStats>, SimError> {
    (0..runs)
        .map(|_| simulate(scenario, person, kws, cfg).map(|o| o.stats))
        .collect()
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Per-phase virtual latencies (CSV block) followed by memory and flash
/// budget lines.
pub fn bench_report(runs: &[RunStats], person: &ModelGraph, kws: &ModelGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "runs {}", runs.len());
    let _ = writeln!(out, "phase,n,mean_ms,min_ms,max_ms");
    type Phase = (&'static str, fn(&RunStats) -> &Vec<u64>);
    let phases: [Phase; 4] = [
        ("person_inference", |s| &s.person_inference_ms),
        ("keyword_inference", |s| &s.keyword_inference_ms),
        ("listening", |s| &s.listening_ms),
        ("end_to_end", |s| &s.end_to_end_ms),
    ];
    for (name, get) in phases {
        let all: Vec<u64> = runs.iter().flat_map(|r| get(r).iter().copied()).collect();
        let s = summarize(&all);
        let _ = writeln!(out, "{name},{},{:.3},{},{}", s.n, s.mean, s.min, s.max);
    }
    let dispatches: usize = runs.iter().map(|r| r.dispatches.len()).sum();
    let timeouts: usize = runs.iter().map(|r| r.timeouts).sum();
    let failed: usize = runs
        .iter()
        .map(|r| r.expectations.iter().filter(|e| !e.passed).count())
        .sum();
    let _ = writeln!(
        out,
        "dispatches {dispatches} timeouts {timeouts} failed_expectations {failed}"
    );
    let peak = runs.iter().map(|r| r.arena_peak_bytes).max().unwrap_or(0);
    let capacity = runs.iter().map(|r| r.arena_capacity).max().unwrap_or(0);
    let _ = writeln!(
        out,
        "arena_peak {peak} bytes / capacity {capacity} {}",
        pass(peak <= capacity)
    );
    for (label, g) in [("flash_pd", person), ("flash_kws", kws)] {
        let size = g.flash_size();
        let _ = writeln!(
            out,
            "{label} {size} <= {FLASH_BUDGET} {}",
            pass(size <= FLASH_BUDGET)
        );
    }
    out
}
