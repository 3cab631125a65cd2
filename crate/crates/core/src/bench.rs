//! Per-stage latency statistics for stream runs.

use std::time::Duration;

use serde::{Deserialize, Serialize};

/// Latency summary in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
    pub total_ms: f64,
}

impl LatencyStats {
    /// Percentiles use the nearest-rank rule.
    pub fn from_samples(samples: &[Duration]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut ms: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e3).collect();
        ms.sort_by(f64::total_cmp);
        let total: f64 = ms.iter().sum();
        let rank = |p: f64| ms[((p * ms.len() as f64).ceil() as usize).clamp(1, ms.len()) - 1];
        Self {
            count: ms.len(),
            mean_ms: total / ms.len() as f64,
            p50_ms: rank(0.50),
            p99_ms: rank(0.99),
            max_ms: ms[ms.len() - 1],
            total_ms: total,
        }
    }
}

/// Stage timings of a run. `parse` covers reading and decoding frames, `lift`
/// building local graphs, `merge` integrating them; `fps` is frames over the
/// wall time of the whole loop.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub frames: usize,
    pub parse: LatencyStats,
    pub lift: LatencyStats,
    pub merge: LatencyStats,
    pub wall_ms: f64,
    pub fps: f64,
    pub nodes: usize,
    pub edges: usize,
}

#[derive(Debug, Clone, Default)]
pub struct BenchRecorder {
    parse: Vec<Duration>,
    lift: Vec<Duration>,
    merge: Vec<Duration>,
}

impl BenchRecorder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_parse(&mut self, d: Duration) {
        self.parse.push(d);
    }

    pub fn record_frame(&mut self, lift: Duration, merge: Duration) {
        self.lift.push(lift);
        self.merge.push(merge);
    }

    pub fn finish(&self, wall: Duration, nodes: usize, edges: usize) -> BenchReport {
        let frames = self.merge.len();
        let wall_s = wall.as_secs_f64();
        BenchReport {
            frames,
            parse: LatencyStats::from_samples(&self.parse),
            lift: LatencyStats::from_samples(&self.lift),
            merge: LatencyStats::from_samples(&self.merge),
            wall_ms: wall_s * 1e3,
            fps: if wall_s > 0.0 { frames as f64 / wall_s } else { 0.0 },
            nodes,
            edges,
        }
    }
}
