use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use super::{ratio, HardwareContext, Mode};
use crate::error::Result;
use crate::gc::{
    bitonic_schedule, evaluate, garble, local_sort_circuit, local_sort_evaluator, local_sort_garbler, CircuitCache,
};
use crate::mpc::{ring_sub, RING_MASK};
use crate::transport::{loopback_pair, Channel};

/// Published AND-gate count of a 128-entry sort circuit.
pub const REFERENCE_AND_GATES_128: usize = 446_336;
/// Published size of that circuit in megabytes.
pub const REFERENCE_MB_128: f64 = 9.80;

#[derive(Clone, Debug)]
pub struct SortConfig {
    pub sizes: Vec<usize>,
    /// Random inputs per size checked against plaintext simulation.
    pub samples: usize,
    pub seed: u64,
    pub mode: Mode,
}

impl Default for SortConfig {
    fn default() -> Self {
        SortConfig { sizes: vec![2, 4, 8, 16, 32, 64, 128], samples: 100, seed: 3, mode: Mode::Both }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SortRow {
    pub k: usize,
    pub comparators: usize,
    pub and_gates: usize,
    pub xor_gates: usize,
    pub garbled_bytes: usize,
    /// Both directions of one full local-sort session, OT included.
    pub protocol_bytes: u64,
    pub samples: usize,
    /// Garbled evaluation differed from plaintext circuit simulation.
    pub simulation_mismatches: usize,
    /// Decoded order differed from a plaintext sort.
    pub order_mismatches: usize,
    pub garble_us: Option<f64>,
    pub evaluate_us: Option<f64>,
    pub protocol_us: Option<f64>,
    pub plain_sort_us: Option<f64>,
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SortReport {
    pub rows: Vec<SortRow>,
    pub reference_and_gates_128: usize,
    pub reference_mb_128: f64,
    pub hardware: HardwareContext,
}

fn us(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e6
}

fn one_size(k: usize, cfg: &SortConfig, rng: &mut ChaCha20Rng) -> Result<SortRow> {
    let lc = local_sort_circuit(k, k)?;
    let c = &lc.circuit;
    let mut row = SortRow {
        k,
        comparators: bitonic_schedule(k.next_power_of_two()).len(),
        and_gates: c.and_count(),
        xor_gates: c.xor_count(),
        samples: cfg.samples,
        ..Default::default()
    };
    let (mut g_time, mut e_time, mut p_time) = (0.0, 0.0, 0.0);
    for _ in 0..cfg.samples {
        let scores: Vec<u32> = (0..k).map(|_| rng.gen::<u32>() & RING_MASK).collect();
        let g_shares: Vec<u32> = (0..k).map(|_| rng.gen::<u32>() & RING_MASK).collect();
        let e_shares: Vec<u32> = scores.iter().zip(&g_shares).map(|(s, g)| ring_sub(*s, *g)).collect();
        let masks: Vec<u32> = (0..k).map(|_| rng.gen::<u32>() & RING_MASK).collect();
        let mut g_bits = lc.garbler_bits(&g_shares)?;
        g_bits.extend(lc.mask_bits(&masks)?);
        let e_bits = lc.evaluator_bits(&e_shares)?;
        let want = c.simulate(&g_bits, &e_bits)?;
        if cfg.mode.encrypted() {
            let t = Instant::now();
            let (gc, keys) = garble(c, rng);
            g_time += us(t);
            row.garbled_bytes = gc.byte_len();
            let g_labels = keys.garbler_labels(0, &g_bits)?;
            let pairs = keys.evaluator_pairs();
            let e_labels: Vec<_> = pairs.iter().zip(&e_bits).map(|(p, b)| if *b { p.1 } else { p.0 }).collect();
            let t = Instant::now();
            let got = evaluate(c, &gc, &g_labels, &e_labels)?;
            e_time += us(t);
            row.simulation_mismatches += usize::from(got != want);
        }
        // Unmask and compare with a plaintext descending sort.
        let out: Vec<u32> = lc.decode(&want).iter().zip(&masks).map(|((v, _), m)| v ^ m).collect();
        let mut sorted = scores.clone();
        sorted.sort_by(|a, b| b.cmp(a));
        let positions_ok = lc.decode(&want).iter().zip(&out).all(|((_, p), v)| scores.get(*p) == Some(v));
        row.order_mismatches += usize::from(out != sorted || !positions_ok);
        if cfg.mode.baseline() {
            let t = Instant::now();
            let mut v: Vec<u32> = g_shares.iter().zip(&e_shares).map(|(a, b)| a.wrapping_add(*b) & RING_MASK).collect();
            v.sort_unstable_by(|a, b| b.cmp(a));
            std::hint::black_box(v);
            p_time += us(t);
        }
    }
    if cfg.mode.encrypted() {
        let shares: Vec<u32> = (0..k).map(|_| rng.gen::<u32>() & RING_MASK).collect();
        let (mut c0, mut c1) = loopback_pair("g", "e");
        let (s0, s1) = (ChaCha20Rng::seed_from_u64(rng.gen()), ChaCha20Rng::seed_from_u64(rng.gen()));
        let t = Instant::now();
        std::thread::scope(|sc| -> Result<()> {
            let h = sc.spawn(|| local_sort_evaluator(&mut c1, 1, &shares, &CircuitCache::new(), &mut { s1 }));
            local_sort_garbler(&mut c0, 1, &shares, k, &CircuitCache::new(), &mut { s0 })?;
            h.join().expect("evaluator panicked")?;
            Ok(())
        })?;
        row.protocol_us = Some(us(t));
        row.protocol_bytes = c0.stats().total_bytes();
    }
    let n = cfg.samples.max(1) as f64;
    if cfg.mode.encrypted() && cfg.samples > 0 {
        row.garble_us = Some(g_time / n);
        row.evaluate_us = Some(e_time / n);
    }
    if cfg.mode.baseline() && cfg.samples > 0 {
        row.plain_sort_us = Some(p_time / n);
    }
    row.ratio = row.protocol_us.zip(row.plain_sort_us).and_then(|(e, b)| ratio(e, b));
    Ok(row)
}

pub fn sort_suite(cfg: &SortConfig) -> Result<SortReport> {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let rows = cfg.sizes.iter().map(|k| one_size(*k, cfg, &mut rng)).collect::<Result<Vec<_>>>()?;
    Ok(SortReport {
        rows,
        reference_and_gates_128: REFERENCE_AND_GATES_128,
        reference_mb_128: REFERENCE_MB_128,
        hardware: HardwareContext::current(),
    })
}

impl fmt::Display for SortReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.1}"));
        writeln!(f, "sort suite:")?;
        for r in &self.rows {
            writeln!(
                f,
                "  k={:<4} comparators={:<5} and={:<7} xor={:<7} garbled={:.3}MB session={:.3}MB sim-mismatch={}/{} order-mismatch={} garble {}us eval {}us session {}us plain {}us ratio {}",
                r.k,
                r.comparators,
                r.and_gates,
                r.xor_gates,
                r.garbled_bytes as f64 / 1e6,
                r.protocol_bytes as f64 / 1e6,
                r.simulation_mismatches,
                r.samples,
                r.order_mismatches,
                opt(r.garble_us),
                opt(r.evaluate_us),
                opt(r.protocol_us),
                opt(r.plain_sort_us),
                opt(r.ratio),
            )?;
        }
        if let Some(r) = self.rows.iter().find(|r| r.k == 128) {
            writeln!(
                f,
                "  reference k=128: {} AND gates, {:.2} MB; measured {} AND gates ({:.2}x), {:.2} MB",
                self.reference_and_gates_128,
                self.reference_mb_128,
                r.and_gates,
                r.and_gates as f64 / self.reference_and_gates_128 as f64,
                r.garbled_bytes as f64 / 1e6
            )?;
        }
        writeln!(f, "  {}", self.hardware)
    }
}
