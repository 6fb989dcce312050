use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rand::{CryptoRng, RngCore};

use super::garble::{garble, GarbledCircuit, GarblerKeys};
use super::sortnet::{local_sort_circuit, LocalSortCircuit};
use crate::error::Result;

type Key = (usize, usize);

/// Built sort circuits, plus one-shot garblings prepared ahead of time.
/// A pre-garbled circuit is handed out once and then dropped.
#[derive(Default)]
pub struct CircuitCache {
    circuits: Mutex<HashMap<Key, Arc<LocalSortCircuit>>>,
    garbled: Mutex<HashMap<Key, Vec<(GarbledCircuit, GarblerKeys)>>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl CircuitCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn local(&self, k: usize, outputs: usize) -> Result<Arc<LocalSortCircuit>> {
        let key = (k, outputs.min(k));
        if let Some(c) = self.circuits.lock().unwrap().get(&key) {
            return Ok(c.clone());
        }
        let c = Arc::new(local_sort_circuit(key.0, key.1)?);
        Ok(self.circuits.lock().unwrap().entry(key).or_insert(c).clone())
    }

    /// Garbles one full-output circuit for each size.
    pub fn precompute<R: RngCore + CryptoRng>(&self, sizes: &[usize], rng: &mut R) -> Result<()> {
        for &k in sizes {
            let c = self.local(k, k)?;
            let g = garble(&c.circuit, rng);
            self.garbled.lock().unwrap().entry((k, k)).or_default().push(g);
        }
        Ok(())
    }

    pub fn pregarbled(&self, k: usize, outputs: usize) -> usize {
        self.garbled.lock().unwrap().get(&(k, outputs.min(k))).map_or(0, |v| v.len())
    }

    /// A garbling of the `(k, outputs)` circuit, pre-computed when one is
    /// available, else fresh.
    pub fn take<R: RngCore + CryptoRng>(
        &self,
        k: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Result<(Arc<LocalSortCircuit>, GarbledCircuit, GarblerKeys)> {
        let c = self.local(k, outputs)?;
        let key = (k, c.outputs);
        if let Some((g, keys)) = self.garbled.lock().unwrap().get_mut(&key).and_then(|v| v.pop()) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok((c, g, keys));
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let (g, keys) = garble(&c.circuit, rng);
        Ok((c, g, keys))
    }

    /// `(pre-garbled hits, on-demand garblings)`.
    pub fn stats(&self) -> (u64, u64) {
        (self.hits.load(Ordering::Relaxed), self.misses.load(Ordering::Relaxed))
    }
}
