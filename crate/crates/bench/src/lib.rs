//! Per-utterance inference latency percentiles.

use std::hint::black_box;
use std::time::Instant;

use conjunct_core::eval::Tagger;
use conjunct_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub p90_ms: f64,
    pub p99_ms: f64,
    pub utterances: usize,
    pub hardware: String,
}

/// Nearest-rank percentile: the `ceil(q·n)`-th smallest value.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    assert!(q > 0.0 && q <= 1.0, "percentile rank {q} outside (0, 1]");
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// CPU architecture, OS and available parallelism.
pub fn hardware_note() -> String {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!(
        "{} {} {} threads",
        std::env::consts::ARCH,
        std::env::consts::OS,
        threads
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatencyOptions {
    /// Untimed calls before measuring, cycling through the corpus.
    pub warmup: usize,
    /// Timed calls per utterance; the median is kept.
    pub repeats: usize,
}

impl Default for LatencyOptions {
    fn default() -> Self {
        LatencyOptions { warmup: 0, repeats: 1 }
    }
}

/// Wall-clock milliseconds per utterance, in corpus order.
pub fn time_utterances<T: Tagger + ?Sized>(
    tagger: &T,
    corpus: &[Vec<String>],
    options: LatencyOptions,
) -> Result<Vec<f64>> {
    if corpus.is_empty() {
        return Err(Error::Argument("latency corpus is empty".into()));
    }
    if options.repeats == 0 {
        return Err(Error::Argument("repeats must be positive".into()));
    }
    for tokens in corpus.iter().cycle().take(options.warmup) {
        black_box(tagger.tag(tokens)?);
    }
    let mut out = Vec::with_capacity(corpus.len());
    let mut runs = Vec::with_capacity(options.repeats);
    for tokens in corpus {
        runs.clear();
        for _ in 0..options.repeats {
            let start = Instant::now();
            black_box(tagger.tag(black_box(tokens))?);
            runs.push(start.elapsed().as_secs_f64() * 1e3);
        }
        runs.sort_by(f64::total_cmp);
        out.push(runs[runs.len() / 2]);
    }
    Ok(out)
}

pub fn report(times_ms: &[f64]) -> LatencyReport {
    let mut sorted = times_ms.to_vec();
    sorted.sort_by(f64::total_cmp);
    LatencyReport {
        p90_ms: nearest_rank(&sorted, 0.90),
        p99_ms: nearest_rank(&sorted, 0.99),
        utterances: sorted.len(),
        hardware: hardware_note(),
    }
}

/// Batch-size-1 latency percentiles over `corpus` after `warmup` untimed calls.
pub fn measure_latency<T: Tagger + ?Sized>(tagger: &T, corpus: &[Vec<String>], warmup: usize) -> Result<LatencyReport> {
    measure_latency_with(tagger, corpus, LatencyOptions { warmup, repeats: 1 })
}

pub fn measure_latency_with<T: Tagger + ?Sized>(
    tagger: &T,
    corpus: &[Vec<String>],
    options: LatencyOptions,
) -> Result<LatencyReport> {
    Ok(report(&time_utterances(tagger, corpus, options)?))
}
