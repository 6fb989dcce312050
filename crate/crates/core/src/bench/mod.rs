//! Benchmark suites comparing the encrypted system with the plaintext
//! baseline. Numbers are measured on the local machine and reported, never
//! asserted; the only checked quantities are operation counts.

mod arith;
mod set;
mod sort;
mod throughput;

pub use arith::{arith_suite, ArithConfig, ArithReport};
pub use set::{set_suite, x_selectivity_graph, SetConfig, SetReport, SweepRow};
pub use sort::{sort_suite, SortConfig, SortReport, SortRow, REFERENCE_AND_GATES_128, REFERENCE_MB_128};
pub use throughput::{
    throughput_suite, OpRow, ThroughputConfig, ThroughputReport, REFERENCE_GLOBAL_SORT_QPS,
    REFERENCE_SORT_DROP,
};

use std::fmt;
use std::time::Duration;

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Encrypted,
    Baseline,
    Both,
}

impl Mode {
    pub fn encrypted(self) -> bool {
        self != Mode::Baseline
    }

    pub fn baseline(self) -> bool {
        self != Mode::Encrypted
    }
}

/// Latency distribution in microseconds.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Latency {
    pub samples: usize,
    pub mean_us: f64,
    pub p50_us: f64,
    pub p90_us: f64,
    pub p99_us: f64,
    pub max_us: f64,
}

impl Latency {
    pub fn from_samples(samples: &[Duration]) -> Self {
        if samples.is_empty() {
            return Latency::default();
        }
        let mut us: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e6).collect();
        us.sort_by(|a, b| a.total_cmp(b));
        let q = |p: f64| us[((us.len() - 1) as f64 * p).round() as usize];
        Latency {
            samples: us.len(),
            mean_us: us.iter().sum::<f64>() / us.len() as f64,
            p50_us: q(0.5),
            p90_us: q(0.9),
            p99_us: q(0.99),
            max_us: us[us.len() - 1],
        }
    }
}

impl fmt::Display for Latency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "mean {:.1}us p50 {:.1}us p90 {:.1}us p99 {:.1}us (n={})",
            self.mean_us, self.p50_us, self.p90_us, self.p99_us, self.samples
        )
    }
}

/// Where the numbers came from.
#[derive(Clone, Debug, Serialize)]
pub struct HardwareContext {
    pub os: String,
    pub arch: String,
    pub cpus: usize,
    pub debug_build: bool,
}

impl HardwareContext {
    pub fn current() -> Self {
        HardwareContext {
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            debug_build: cfg!(debug_assertions),
        }
    }
}

impl fmt::Display for HardwareContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "hardware: {} {} with {} cpus{}",
            self.os,
            self.arch,
            self.cpus,
            if self.debug_build { ", debug build" } else { "" }
        )
    }
}

fn ratio(a: f64, b: f64) -> Option<f64> {
    (b > 0.0).then(|| a / b)
}
