use rand::{CryptoRng, RngCore};

use super::cache::CircuitCache;
use super::garble::{evaluate, garble, GarbledCircuit};
use super::sortnet::{global_sort_circuit, SCORE_BITS};
use crate::crypto::Block;
use crate::error::{Error, Result};
use crate::mpc::RING_MASK;
use crate::ot::{OtExtReceiver, OtExtSender};
use crate::transport::{expect, send_msg, Channel, MsgType};
use crate::wire::{Reader, Writer};

fn labels_payload(labels: &[Block]) -> Vec<u8> {
    let mut w = Writer(Vec::with_capacity(4 + 16 * labels.len()));
    w.u32(labels.len() as u32);
    for l in labels {
        w.u128(l.0);
    }
    w.finish()
}

fn read_labels(payload: &[u8], want: usize) -> Result<Vec<Block>> {
    let mut r = Reader::new(payload);
    let n = r.u32()? as usize;
    if n != want || r.remaining() != 16 * n {
        return Err(Error::protocol(format!("expected {want} labels, got {n}")));
    }
    (0..n).map(|_| Ok(Block(r.u128()?))).collect()
}

/// Garbler (cluster 0) side of a shard's local sort. Returns the
/// per-position masks applied to the evaluator's output scores.
pub fn local_sort_garbler<R: RngCore + CryptoRng>(
    ch: &mut dyn Channel,
    session: u64,
    shares: &[u32],
    outputs: usize,
    cache: &CircuitCache,
    rng: &mut R,
) -> Result<Vec<u32>> {
    let k = shares.len();
    let (lc, gc, keys) = cache.take(k, outputs, rng)?;
    let mut w = Writer::new();
    w.u32(k as u32).u32(lc.outputs as u32).u16(SCORE_BITS as u16);
    send_msg(ch, MsgType::SortInit, session, w.finish())?;
    // Phase 1: circuit and decoding table.
    send_msg(ch, MsgType::CircuitBlob, session, gc.to_bytes())?;
    // Phase 2: garbler's share and position labels.
    let labels = keys.garbler_labels(0, &lc.garbler_bits(shares)?)?;
    send_msg(ch, MsgType::GarblerLabels, session, labels_payload(&labels))?;
    // Phase 3: evaluator's share labels by OT.
    let mut ot = OtExtSender::setup(ch, session, rng)?;
    ot.send_chosen(ch, session, &keys.evaluator_pairs())?;
    // Phase 4: mask labels.
    let masks: Vec<u32> = (0..lc.outputs).map(|_| rng.next_u32() & RING_MASK).collect();
    let labels = keys.garbler_labels(lc.mask_offset(), &lc.mask_bits(&masks)?)?;
    send_msg(ch, MsgType::MaskLabels, session, labels_payload(&labels))?;
    // Phase 5 happens at the evaluator; wait for its acknowledgement.
    let done = expect(ch, MsgType::SortResult)?;
    let mut r = Reader::new(&done.payload);
    if r.u32()? as usize != lc.outputs {
        return Err(Error::protocol("evaluator decoded a different number of outputs"));
    }
    Ok(masks)
}

/// Evaluator (cluster 1) side. Returns `(masked score, position)` for each
/// output, best first.
pub fn local_sort_evaluator<R: RngCore + CryptoRng>(
    ch: &mut dyn Channel,
    session: u64,
    shares: &[u32],
    cache: &CircuitCache,
    rng: &mut R,
) -> Result<Vec<(u32, usize)>> {
    let init = expect(ch, MsgType::SortInit)?;
    let mut r = Reader::new(&init.payload);
    let k = r.u32()? as usize;
    let outputs = r.u32()? as usize;
    let bits = r.u16()? as usize;
    r.end()?;
    if k != shares.len() || bits != SCORE_BITS {
        return Err(Error::protocol(format!(
            "sort header announces {k} entries of {bits} bits, evaluator holds {}",
            shares.len()
        )));
    }
    let lc = cache.local(k, outputs)?;
    let gc = GarbledCircuit::from_bytes(&expect(ch, MsgType::CircuitBlob)?.payload)?;
    let mut g_labels = read_labels(&expect(ch, MsgType::GarblerLabels)?.payload, lc.mask_offset())?;
    let mut ot = OtExtReceiver::setup(ch, session, rng)?;
    let choice = lc.evaluator_bits(shares)?;
    let e_labels = ot.receive_chosen(ch, session, &choice)?;
    let mask_labels = read_labels(&expect(ch, MsgType::MaskLabels)?.payload, lc.outputs * SCORE_BITS)?;
    g_labels.extend(mask_labels);
    let out = evaluate(&lc.circuit, &gc, &g_labels, &e_labels)?;
    let decoded = lc.decode(&out);
    let mut w = Writer::new();
    w.u32(decoded.len() as u32);
    send_msg(ch, MsgType::SortResult, session, w.finish())?;
    Ok(decoded)
}

/// Global sort, garbled by the cluster-1 coordinator over the masked
/// vectors its cluster's evaluators forwarded. `position_bits` is fixed by
/// configuration so it says nothing about the shards' match counts.
pub fn global_sort_garbler<R: RngCore + CryptoRng>(
    ch: &mut dyn Channel,
    session: u64,
    shards: &[Vec<(u32, usize)>],
    outputs: usize,
    position_bits: usize,
    rng: &mut R,
) -> Result<()> {
    let counts: Vec<usize> = shards.iter().map(|s| s.len()).collect();
    let gsc = global_sort_circuit(&counts, outputs, position_bits)?;
    let mut w = Writer::new();
    w.u32s(&counts.iter().map(|c| *c as u32).collect::<Vec<_>>()).u32(gsc.outputs as u32).u16(position_bits as u16);
    send_msg(ch, MsgType::SortInit, session, w.finish())?;
    let (gc, keys) = garble(&gsc.circuit, rng);
    send_msg(ch, MsgType::CircuitBlob, session, gc.to_bytes())?;
    let labels = keys.garbler_labels(0, &gsc.garbler_bits(shards)?)?;
    send_msg(ch, MsgType::GarblerLabels, session, labels_payload(&labels))?;
    let mut ot = OtExtSender::setup(ch, session, rng)?;
    ot.send_chosen(ch, session, &keys.evaluator_pairs())?;
    let done = expect(ch, MsgType::SortResult)?;
    if Reader::new(&done.payload).u32()? as usize != gsc.outputs {
        return Err(Error::protocol("coordinator decoded a different number of outputs"));
    }
    Ok(())
}

/// Global sort evaluator (cluster-0 coordinator) holding the masks its
/// cluster's garblers forwarded. Returns `(position, shard)` best first.
pub fn global_sort_evaluator<R: RngCore + CryptoRng>(
    ch: &mut dyn Channel,
    session: u64,
    masks: &[Vec<u32>],
    position_bits: usize,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    let init = expect(ch, MsgType::SortInit)?;
    let mut r = Reader::new(&init.payload);
    let counts: Vec<usize> = r.u32s()?.into_iter().map(|c| c as usize).collect();
    let outputs = r.u32()? as usize;
    let bits = r.u16()? as usize;
    r.end()?;
    if bits != position_bits {
        return Err(Error::protocol(format!("global sort announces {bits}-bit positions, expected {position_bits}")));
    }
    if counts.len() != masks.len() {
        return Err(Error::protocol("global sort header and masks disagree on shard count"));
    }
    if let Some(j) = counts.iter().zip(masks).position(|(c, m)| *c != m.len()) {
        return Err(Error::MissingShard { shard: j });
    }
    let gsc = global_sort_circuit(&counts, outputs, position_bits)?;
    let gc = GarbledCircuit::from_bytes(&expect(ch, MsgType::CircuitBlob)?.payload)?;
    let g_labels = read_labels(&expect(ch, MsgType::GarblerLabels)?.payload, gsc.circuit.garbler_inputs as usize)?;
    let mut ot = OtExtReceiver::setup(ch, session, rng)?;
    let e_labels = ot.receive_chosen(ch, session, &gsc.evaluator_bits(masks)?)?;
    let out = evaluate(&gsc.circuit, &gc, &g_labels, &e_labels)?;
    let ranking = gsc.decode(&out);
    let mut w = Writer::new();
    w.u32(ranking.len() as u32);
    send_msg(ch, MsgType::SortResult, session, w.finish())?;
    Ok(ranking)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpc::ring_sub;
    use crate::transport::loopback_pair;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn split(v: &[u32], rng: &mut ChaCha20Rng) -> (Vec<u32>, Vec<u32>) {
        let s0: Vec<u32> = v.iter().map(|_| rng.gen::<u32>() & RING_MASK).collect();
        let s1 = v.iter().zip(&s0).map(|(x, a)| ring_sub(*x, *a)).collect();
        (s0, s1)
    }

    /// Runs one shard's local sort; returns (evaluator output, masks).
    fn local(scores: &[u32], outputs: usize, seed: u64) -> (Vec<(u32, usize)>, Vec<u32>) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (s0, s1) = split(scores, &mut rng);
        let (mut c0, mut c1) = loopback_pair("is0", "is1");
        let cache0 = CircuitCache::new();
        let cache1 = CircuitCache::new();
        std::thread::scope(|s| {
            let h = s.spawn(|| {
                let mut r = ChaCha20Rng::seed_from_u64(seed + 1);
                local_sort_evaluator(&mut c1, 9, &s1, &cache1, &mut r).unwrap()
            });
            let mut r = ChaCha20Rng::seed_from_u64(seed + 2);
            let masks = local_sort_garbler(&mut c0, 9, &s0, outputs, &cache0, &mut r).unwrap();
            (h.join().unwrap(), masks)
        })
    }

    fn global(fwd: &[Vec<(u32, usize)>], masks: &[Vec<u32>], outputs: usize) -> Vec<(usize, usize)> {
        let (mut c10, mut c00) = loopback_pair("is10", "is00");
        std::thread::scope(|s| {
            let h = s.spawn(|| {
                let mut r = ChaCha20Rng::seed_from_u64(5);
                global_sort_evaluator(&mut c00, 3, masks, 8, &mut r).unwrap()
            });
            let mut r = ChaCha20Rng::seed_from_u64(6);
            global_sort_garbler(&mut c10, 3, fwd, outputs, 8, &mut r).unwrap();
            h.join().unwrap()
        })
    }

    #[test]
    fn local_sort_over_channel() {
        let (out, masks) = local(&[5, 9, 2], 3, 1);
        assert_eq!(out.iter().map(|o| o.1).collect::<Vec<_>>(), vec![1, 0, 2]);
        assert_eq!(out.iter().zip(&masks).map(|(o, m)| o.0 ^ m).collect::<Vec<_>>(), vec![9, 5, 2]);
    }

    #[test]
    fn three_shards_with_truncation() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let shards: Vec<Vec<u32>> = (0..3).map(|_| (0..40).map(|_| rng.gen_range(1..10_000)).collect()).collect();
        let top = 5;
        let mut fwd = Vec::new();
        let mut masks = Vec::new();
        for (j, s) in shards.iter().enumerate() {
            let (o, m) = local(s, top, 100 + j as u64);
            fwd.push(o);
            masks.push(m);
        }
        let ranking = global(&fwd, &masks, top);
        let got: Vec<u32> = ranking.iter().map(|(i, j)| shards[*j][*i]).collect();
        let mut want: Vec<u32> = shards.iter().flatten().copied().collect();
        want.sort_by(|a, b| b.cmp(a));
        assert_eq!(got, want[..top]);
    }

    #[test]
    fn single_shard_global_equals_local() {
        let scores = [4, 8, 1, 6];
        let (o, m) = local(&scores, 4, 11);
        let ranking = global(&[o.clone()], &[m], 4);
        assert_eq!(ranking.iter().map(|r| r.0).collect::<Vec<_>>(), o.iter().map(|x| x.1).collect::<Vec<_>>());
    }

    #[test]
    fn missing_contribution_is_named() {
        let (mut c10, mut c00) = loopback_pair("is10", "is00");
        let fwd = vec![vec![(1, 0)], vec![(2, 0)]];
        let masks = vec![vec![0], vec![]];
        let masks = &masks;
        let err = std::thread::scope(|s| {
            // The evaluator drops its end on failure so the garbler unblocks.
            let h = s.spawn(move || {
                let mut r = ChaCha20Rng::seed_from_u64(1);
                global_sort_evaluator(&mut c00, 3, masks, 8, &mut r)
            });
            let mut r = ChaCha20Rng::seed_from_u64(2);
            let _ = global_sort_garbler(&mut c10, 3, &fwd, 2, 8, &mut r);
            h.join().unwrap()
        });
        assert!(matches!(err, Err(Error::MissingShard { shard: 1 })));
    }
}
