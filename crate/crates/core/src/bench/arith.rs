use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use super::{ratio, HardwareContext, Mode};
use crate::error::Result;
use crate::mpc::{add, mul, rec, shr, triple_gen_cot, MultiplicationTriple, RingMatrix, TripleShape, RING_MASK, SCALAR};
use crate::transport::{loopback_pair, Channel, LoopbackChannel};

#[derive(Clone, Debug)]
pub struct ArithConfig {
    pub cases: usize,
    pub cot_triples: usize,
    pub seed: u64,
    pub mode: Mode,
}

impl Default for ArithConfig {
    fn default() -> Self {
        ArithConfig { cases: 10_000, cot_triples: 1000, seed: 2, mode: Mode::Both }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ArithReport {
    pub cases: usize,
    pub add_mismatches: usize,
    pub mul_mismatches: usize,
    pub cot_triples: usize,
    pub cot_bad_triples: usize,
    /// Whole-vector timings in microseconds.
    pub secure_add_us: Option<f64>,
    pub triple_gen_us: Option<f64>,
    pub secure_mul_us: Option<f64>,
    pub plain_add_us: Option<f64>,
    pub plain_mul_us: Option<f64>,
    pub triple_gen_bytes: u64,
    pub mul_bytes: u64,
    pub add_ratio: Option<f64>,
    pub mul_ratio: Option<f64>,
    pub hardware: Option<HardwareContext>,
}

fn modulus() -> u64 {
    1u64 << 31
}

/// Runs both parties on scoped threads over one loopback pair. Returns
/// both results and the bytes party 0 sent plus received.
fn both<A: Send, B: Send>(
    f0: impl FnOnce(&mut LoopbackChannel) -> A + Send,
    f1: impl FnOnce(&mut LoopbackChannel) -> B + Send,
) -> (A, B, u64) {
    let (mut c0, mut c1) = loopback_pair("p0", "p1");
    let (a, b) = std::thread::scope(|s| {
        let h = s.spawn(|| f1(&mut c1));
        let a = f0(&mut c0);
        (a, h.join().expect("party 1 panicked"))
    });
    (a, b, c0.stats().total_bytes())
}

fn cot_pair(shapes: &[TripleShape], seed: u64) -> Result<(Vec<MultiplicationTriple>, Vec<MultiplicationTriple>, u64)> {
    let (t0, t1, bytes) = both(
        |ch| triple_gen_cot(0, shapes, ch, 1, &mut ChaCha20Rng::seed_from_u64(seed)),
        |ch| triple_gen_cot(1, shapes, ch, 1, &mut ChaCha20Rng::seed_from_u64(seed + 1)),
    );
    Ok((t0?, t1?, bytes))
}

fn us(d: Duration) -> f64 {
    d.as_secs_f64() * 1e6
}

pub fn arith_suite(cfg: &ArithConfig) -> Result<ArithReport> {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let n = cfg.cases;
    let mut a: Vec<u32> = (0..n).map(|_| rng.gen::<u32>() & RING_MASK).collect();
    let mut b: Vec<u32> = (0..n).map(|_| rng.gen::<u32>() & RING_MASK).collect();
    // Boundary values.
    for (i, (x, y)) in [(0, 0), (RING_MASK, 1), (RING_MASK, RING_MASK), (1 << 30, 2)].into_iter().enumerate().take(n) {
        a[i] = x;
        b[i] = y;
    }
    let m = modulus();
    let want_add: Vec<u32> = a.iter().zip(&b).map(|(x, y)| ((*x as u64 + *y as u64) % m) as u32).collect();
    let want_mul: Vec<u32> = a.iter().zip(&b).map(|(x, y)| ((*x as u64 * *y as u64) % m) as u32).collect();
    let mut r = ArithReport { cases: n, cot_triples: cfg.cot_triples, hardware: Some(HardwareContext::current()), ..Default::default() };

    if cfg.mode.baseline() {
        let t = Instant::now();
        let s: Vec<u32> = a.iter().zip(&b).map(|(x, y)| x.wrapping_add(*y) & RING_MASK).collect();
        r.plain_add_us = Some(us(t.elapsed()));
        std::hint::black_box(s);
        let t = Instant::now();
        let p: Vec<u32> = a.iter().zip(&b).map(|(x, y)| x.wrapping_mul(*y) & RING_MASK).collect();
        r.plain_mul_us = Some(us(t.elapsed()));
        std::hint::black_box(p);
    }
    if cfg.mode.encrypted() && n > 0 {
        let am = RingMatrix::new(n, 1, a.clone())?;
        let bm = RingMatrix::new(n, 1, b.clone())?;
        let (a0, a1) = shr(&am, &mut rng);
        let (b0, b1) = shr(&bm, &mut rng);

        let t = Instant::now();
        let s0 = add(&a0, &b0)?;
        let s1 = add(&a1, &b1)?;
        r.secure_add_us = Some(us(t.elapsed()));
        let sum = rec(&s0, &s1)?;
        r.add_mismatches = sum.data.iter().zip(&want_add).filter(|(g, w)| g != w).count();

        let shape = TripleShape::Hadamard { rows: n, cols: 1 };
        let t = Instant::now();
        let (t0, t1, bytes) = cot_pair(&[shape], cfg.seed + 10)?;
        r.triple_gen_us = Some(us(t.elapsed()));
        r.triple_gen_bytes = bytes;
        let t = Instant::now();
        let (c0, c1, bytes) = both(|ch| mul(&a0, &b0, &t0[0], ch, 2), |ch| mul(&a1, &b1, &t1[0], ch, 2));
        r.secure_mul_us = Some(us(t.elapsed()));
        r.mul_bytes = bytes;
        let prod = rec(&c0?, &c1?)?;
        r.mul_mismatches = prod.data.iter().zip(&want_mul).filter(|(g, w)| g != w).count();
    }
    if cfg.mode.encrypted() && cfg.cot_triples > 0 {
        let shapes = vec![SCALAR; cfg.cot_triples];
        let (t0, t1, _) = cot_pair(&shapes, cfg.seed + 20)?;
        r.cot_bad_triples = t0
            .iter()
            .zip(&t1)
            .filter(|(p, q)| {
                let open = |x: &RingMatrix, y: &RingMatrix| (x.data[0] as u64 + y.data[0] as u64) % m;
                let (x, y, z) = (open(&p.x.value, &q.x.value), open(&p.y.value, &q.y.value), open(&p.z.value, &q.z.value));
                x * y % m != z
            })
            .count();
    }
    r.add_ratio = r.secure_add_us.zip(r.plain_add_us).and_then(|(e, b)| ratio(e, b));
    r.mul_ratio = r.secure_mul_us.zip(r.plain_mul_us).and_then(|(e, b)| ratio(e, b));
    Ok(r)
}

impl fmt::Display for ArithReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.1}"));
        writeln!(f, "arith suite: {} cases mod 2^31", self.cases)?;
        writeln!(f, "  add: mismatches {} secure {}us plain {}us ratio {}", self.add_mismatches, opt(self.secure_add_us), opt(self.plain_add_us), opt(self.add_ratio))?;
        writeln!(
            f,
            "  mul: mismatches {} triple gen {}us ({} bytes) online {}us ({} bytes) plain {}us ratio {}",
            self.mul_mismatches,
            opt(self.triple_gen_us),
            self.triple_gen_bytes,
            opt(self.secure_mul_us),
            self.mul_bytes,
            opt(self.plain_mul_us),
            opt(self.mul_ratio)
        )?;
        writeln!(f, "  cot triples: {} checked, {} with Z != XY", self.cot_triples, self.cot_bad_triples)?;
        if let Some(h) = &self.hardware {
            writeln!(f, "  {h}")?;
        }
        Ok(())
    }
}
