//! Phase 2: recovering races the single pass could not pair directly.
//!
//! The pass evicts an epoch from the live set as soon as some later
//! access is ordered after it, so a still-later access never meets it
//! again — even when the two are concurrent. Eviction, however, leaves an
//! edge constraint `β ≺ ε`, and those edges are exactly the trail needed
//! to walk back: if `(α, f)` is a candidate concurrent pair, every epoch
//! `γ` evicted at `α` is a candidate partner for `f` too.
//!
//! [`expand`] performs that walk as a worklist over candidate pairs
//! ordered by position. Expansion over-approximates — an epoch reachable
//! through edges may still be ordered before the partner through a chain
//! the edges cannot see — so [`eliminate`] re-checks every candidate
//! against the recorded per-access clocks and keeps exactly the
//! concurrent ones: an epoch `i#k` is concurrent with a later access `f`
//! iff `k` exceeds entry `i` of `f`'s clock (`k` equal to the entry means
//! the access was ordered via a transfer of its final increment).

use std::collections::{BTreeMap, BinaryHeap, HashSet};
use std::cmp::Reverse;

use crate::trace::Pos;
use crate::vclock::{Epoch, VClock};

/// Result of the worklist expansion.
#[derive(Clone, Debug)]
pub struct Expansion {
    /// Candidate concurrent pairs, `(earlier, later)` in worklist order.
    pub pairs: Vec<(Epoch, Epoch)>,
    /// Total pairs ever enqueued (each distinct pair at most once).
    pub enqueued: usize,
}

/// Expands phase-1 pairs through edge constraints.
///
/// Starting from the direct pairs, each popped pair `(α, β)` proposes
/// `(γ, β)` for every `γ ≺ α`; a seen-set guarantees every pair is
/// enqueued at most once, so the worklist processes at most
/// quadratically many pairs.
pub fn expand(conc: &[(Epoch, Epoch)], edges: &BTreeMap<Pos, Vec<Epoch>>) -> Expansion {
    let mut heap: BinaryHeap<Reverse<((Pos, Pos), (Epoch, Epoch))>> = BinaryHeap::new();
    let mut seen: HashSet<(Pos, Pos)> = HashSet::new();
    let mut enqueued = 0usize;
    let push = |heap: &mut BinaryHeap<_>,
                    seen: &mut HashSet<(Pos, Pos)>,
                    enqueued: &mut usize,
                    pair: (Epoch, Epoch)| {
        let key = (pair.0.pos, pair.1.pos);
        if seen.insert(key) {
            heap.push(Reverse((key, pair)));
            *enqueued += 1;
        }
    };

    for &pair in conc {
        push(&mut heap, &mut seen, &mut enqueued, pair);
    }
    let mut pairs = Vec::new();
    while let Some(Reverse((_, (alpha, beta)))) = heap.pop() {
        pairs.push((alpha, beta));
        if let Some(preds) = edges.get(&alpha.pos) {
            for &gamma in preds {
                push(&mut heap, &mut seen, &mut enqueued, (gamma, beta));
            }
        }
    }
    Expansion { pairs, enqueued }
}

/// Keeps the candidates whose earlier epoch is concurrent with the later
/// access, judged against the later access's recorded clock.
pub fn eliminate(pairs: &[(Epoch, Epoch)], clocks: &[Option<VClock>]) -> Vec<(Epoch, Epoch)> {
    pairs
        .iter()
        .filter(|(alpha, beta)| {
            let clock = clocks[beta.pos as usize - 1]
                .as_ref()
                .expect("pair endpoints are recorded accesses");
            alpha.stamp > clock.get(alpha.slot)
        })
        .copied()
        .collect()
}
