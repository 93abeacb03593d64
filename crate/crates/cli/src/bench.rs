//! Per-tick latency measurement with the mock embedder.

use std::sync::Arc;
use std::time::Instant;

use garde_core::engine::{start_session, Counters, EngineError};
use garde_core::providers::{MockEmbedder, MockProposer};
use garde_core::{EngineConfig, Frame, Instruction};
use serde::Serialize;

/// Latencies of every scoring tick in one stream, in nanoseconds.
#[derive(Debug, Clone)]
pub struct StreamTiming {
    pub tick_ns: Vec<f64>,
    pub counters: Counters,
}

fn frame(i: usize, fps: f64) -> Frame {
    let bytes: Vec<u8> = (i as u64)
        .to_le_bytes()
        .iter()
        .cycle()
        .take(256)
        .copied()
        .collect();
    Frame::with_bytes(i as f64 / fps, bytes)
}

/// Streams `n_frames` synthetic image frames at the segment rate and times
/// each step that produced a score record.
pub fn time_stream(cfg: &EngineConfig, n_frames: usize, seed: u64, dim: usize) -> Result<StreamTiming, EngineError> {
    let q1 = MockProposer::builtin();
    let fixture = q1.fixture("q1").expect("built-in fixture");
    let instruction = Instruction::new(fixture.instruction.clone(), 0.0).map_err(EngineError::Config)?;
    let mut session = start_session(
        cfg.clone(),
        instruction,
        &[],
        &q1,
        Arc::new(MockEmbedder::new(seed, dim)),
    )?;
    let mut tick_ns = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        let f = frame(i, cfg.segment_fps);
        let start = Instant::now();
        let out = session.step(f)?;
        let elapsed = start.elapsed();
        if out.record.is_some() {
            tick_ns.push(elapsed.as_nanos() as f64);
        }
    }
    let counters = session.counters();
    Ok(StreamTiming { tick_ns, counters })
}

/// Per-tick median over `repeats` independent runs of the same stream.
/// A transient stall hits one run at one position, so the median drops it.
pub fn median_latencies(
    cfg: &EngineConfig,
    n_frames: usize,
    seed: u64,
    dim: usize,
    repeats: usize,
) -> Result<Vec<f64>, EngineError> {
    let runs = (0..repeats.max(1))
        .map(|_| time_stream(cfg, n_frames, seed, dim).map(|t| t.tick_ns))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((0..runs[0].len())
        .map(|i| median(&mut runs.iter().map(|r| r[i]).collect::<Vec<_>>()))
        .collect())
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * (sorted.len() - 1) as f64).round() as usize;
    sorted[rank]
}

/// Trend of per-bucket median latency against tick index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    /// Nanoseconds per tick, Theil-Sen estimate over bucket medians.
    pub slope_ns_per_tick: f64,
    pub median_ns: f64,
    /// `|slope| * 1000 / median`: relative change over 1,000 ticks.
    pub relative_per_1000: f64,
    pub buckets: usize,
}

/// Drops `warmup` ticks, splits the rest into buckets of `bucket` ticks and
/// fits the median of each bucket against its centre index.
pub fn fit_slope(tick_ns: &[f64], warmup: usize, bucket: usize) -> Option<SlopeFit> {
    let body = tick_ns.get(warmup..)?;
    let points: Vec<(f64, f64)> = body
        .chunks_exact(bucket)
        .enumerate()
        .map(|(b, chunk)| {
            let centre = warmup as f64 + (b as f64 + 0.5) * bucket as f64;
            (centre, median(&mut chunk.to_vec()))
        })
        .collect();
    if points.len() < 2 {
        return None;
    }
    let mut slopes = Vec::with_capacity(points.len() * (points.len() - 1) / 2);
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            slopes.push((b.1 - a.1) / (b.0 - a.0));
        }
    }
    let slope = median(&mut slopes);
    let median_ns = median(&mut body.to_vec());
    Some(SlopeFit {
        slope_ns_per_tick: slope,
        median_ns,
        relative_per_1000: slope.abs() * 1000.0 / median_ns,
        buckets: points.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub multiplier: usize,
    pub cache: bool,
    pub frames: usize,
    pub ticks: u64,
    pub p50_us: f64,
    pub p90_us: f64,
    pub p99_us: f64,
    pub mean_us: f64,
    pub slope_rel_per_1000_ticks: Option<f64>,
    pub encode_calls: u64,
}

pub const BENCH_BUCKET: usize = 100;

/// Runs the stream at each length multiplier with the cache on and off.
/// Lengths too short to fill the window produce no row.
pub fn bench(cfg: &EngineConfig, base_frames: usize, lengths: &[usize], seed: u64, dim: usize) -> Result<(Vec<BenchRow>, Vec<String>), EngineError> {
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for &m in lengths {
        for cache in [true, false] {
            let c = EngineConfig { cache, ..cfg.clone() };
            let n = base_frames * m;
            let timing = time_stream(&c, n, seed, dim)?;
            if timing.tick_ns.is_empty() {
                warnings.push(format!("a {n}-frame stream never fills the window; no latencies for x{m}"));
                break;
            }
            let mut sorted = timing.tick_ns.clone();
            sorted.sort_by(f64::total_cmp);
            let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
            let warmup = (sorted.len() / 20).min(200);
            rows.push(BenchRow {
                multiplier: m,
                cache,
                frames: n,
                ticks: timing.counters.ticks,
                p50_us: percentile(&sorted, 0.5) / 1e3,
                p90_us: percentile(&sorted, 0.9) / 1e3,
                p99_us: percentile(&sorted, 0.99) / 1e3,
                mean_us: mean / 1e3,
                slope_rel_per_1000_ticks: fit_slope(&timing.tick_ns, warmup, BENCH_BUCKET).map(|f| f.relative_per_1000),
                encode_calls: timing.counters.encode_calls,
            });
        }
    }
    Ok((rows, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_series_has_zero_slope() {
        let xs = vec![5.0; 1000];
        let f = fit_slope(&xs, 0, 100).unwrap();
        assert_eq!(f.slope_ns_per_tick, 0.0);
        assert_eq!(f.relative_per_1000, 0.0);
    }

    #[test]
    fn linear_series_recovers_slope() {
        let xs: Vec<f64> = (0..2000).map(|i| 100.0 + 0.01 * i as f64).collect();
        let f = fit_slope(&xs, 0, 100).unwrap();
        assert!((f.slope_ns_per_tick - 0.01).abs() < 1e-9);
    }

    #[test]
    fn short_stream_yields_no_rows() {
        let (rows, warnings) = bench(&EngineConfig::default(), 1, &[1], 0, 16).unwrap();
        assert!(rows.is_empty());
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn cache_cuts_encodes_by_window_size() {
        let (rows, _) = bench(&EngineConfig::default(), 50, &[1], 0, 16).unwrap();
        let on = rows.iter().find(|r| r.cache).unwrap();
        let off = rows.iter().find(|r| !r.cache).unwrap();
        assert_eq!(on.encode_calls, 50);
        assert_eq!(off.encode_calls, 4 * off.ticks);
    }
}
