//! Pair-reporting race analysis over epochs.
//!
//! Where the flagging pass only marks the later access of a race, this
//! engine keeps, per variable, a set `RW(x)` of *epochs* — compact
//! `thread#stamp` summaries of earlier accesses, with their position and
//! access kind attached. At each access the current epochs split into
//! those concurrent with it (their stamp exceeds the thread's clock entry
//! for their slot) and those ordered before it:
//!
//! * concurrent epochs yield `Conc(x)` pairs — races found in phase 1;
//! * ordered epochs leave `RW(x)` and are recorded as *edge
//!   constraints* `β ≺ ε` in `Edge(x)`, remembering which access
//!   evicted them.
//!
//! Edges are what post-processing ([`crate::postprocess`]) later walks to
//! recover races the single pass could not see directly, and each access
//! can record its thread's clock (`clocks`) so candidate pairs can be
//! re-checked precisely. An epoch ordered at eviction time is ordered
//! before the evictor, so edges are sound happens-before facts — this
//! includes epochs whose stamp exactly equals the clock entry, which are
//! ordered via a reads-from transfer of their final increment.
//!
//! The `optimized` mode cuts `RW(x)` growth differently: reads pair only
//! against write epochs (read-read pairs are not races), collect their
//! pairs against the clock *before* the reads-from join (so the
//! dependency source itself still registers), and never evict write
//! epochs. Each thread then contributes at most one read and one write
//! epoch instead of one access, and the assembled set of racy pairs is
//! unchanged.
//!
//! The engine is exposed both as a one-shot [`shbee_run`] and as a
//! stepwise [`ShbeeEngine`] whose state can be inspected between events.

use std::collections::BTreeMap;

use crate::trace::{Event, MutexId, Op, Pos, Trace, VarId};
use crate::vclock::{AccessKind, Epoch, VClock};

/// Engine configuration.
#[derive(Clone, Copy, Debug)]
pub struct ShbeeOptions {
    /// Restrict read pairing to writes and retain write epochs (smaller
    /// state, same assembled races).
    pub optimized: bool,
    /// Keep per-access clocks and edge constraints for post-processing.
    /// Without them the engine runs in constant-ish memory but only
    /// phase-1 pairs can be reported.
    pub record: bool,
}

impl Default for ShbeeOptions {
    fn default() -> Self {
        ShbeeOptions {
            optimized: false,
            record: true,
        }
    }
}

/// Per-variable analysis state and results.
#[derive(Clone, Debug, Default)]
pub struct VarPairs {
    /// Live access epochs, in position order.
    pub rw: Vec<Epoch>,
    /// Concurrent pairs found during the pass, `(earlier, later)` in
    /// discovery order.
    pub conc: Vec<(Epoch, Epoch)>,
    /// Edge constraints: evictor position to the epochs it evicted (or
    /// ordered past, in optimized mode), in position order.
    pub edges: BTreeMap<Pos, Vec<Epoch>>,
}

/// Final engine output.
#[derive(Clone, Debug)]
pub struct ShbeeRun {
    pub optimized: bool,
    pub vars: BTreeMap<VarId, VarPairs>,
    /// Per-access clocks indexed by `pos - 1` (writes before their
    /// increment, reads after their reads-from join); empty when not
    /// recording.
    pub clocks: Vec<Option<VClock>>,
    /// `(write, read)` dependency race pairs.
    pub wrd_pairs: Vec<(Pos, Pos)>,
    /// High-water mark of simultaneously live clocks and epochs.
    pub peak_state: usize,
}

struct VarState {
    pairs: VarPairs,
    last_write: VClock,
    last_write_slot: u32,
    last_write_pos: Option<Pos>,
}

impl VarState {
    fn new() -> Self {
        VarState {
            pairs: VarPairs::default(),
            last_write: VClock::new(),
            last_write_slot: 0,
            last_write_pos: None,
        }
    }
}

/// The stepwise engine. Feed events in trace order via [`step`].
///
/// [`step`]: ShbeeEngine::step
pub struct ShbeeEngine {
    opts: ShbeeOptions,
    threads: Vec<Option<VClock>>,
    acted: Vec<bool>,
    released: BTreeMap<MutexId, VClock>,
    vars: BTreeMap<VarId, VarState>,
    clocks: Vec<Option<VClock>>,
    clocks_recorded: usize,
    wrd_pairs: Vec<(Pos, Pos)>,
    peak_state: usize,
    threads_seen: usize,
}

impl ShbeeEngine {
    pub fn new(trace: &Trace, opts: ShbeeOptions) -> Self {
        ShbeeEngine {
            opts,
            threads: vec![None; trace.n_threads()],
            acted: vec![false; trace.n_threads()],
            released: BTreeMap::new(),
            vars: BTreeMap::new(),
            clocks: if opts.record {
                vec![None; trace.len()]
            } else {
                Vec::new()
            },
            clocks_recorded: 0,
            wrd_pairs: Vec::new(),
            peak_state: 0,
            threads_seen: 0,
        }
    }

    fn init_thread(&mut self, slot: u32) {
        let entry = &mut self.threads[slot as usize];
        if entry.is_none() {
            let mut c = VClock::new();
            c.set(slot, 1);
            *entry = Some(c);
            self.threads_seen += 1;
        }
    }

    /// Live access epochs for a variable, in position order.
    pub fn var_rw(&self, v: VarId) -> &[Epoch] {
        self.vars.get(&v).map_or(&[], |s| &s.pairs.rw)
    }

    /// Concurrent pairs found so far for a variable.
    pub fn var_conc(&self, v: VarId) -> &[(Epoch, Epoch)] {
        self.vars.get(&v).map_or(&[], |s| &s.pairs.conc)
    }

    /// Edge constraints recorded so far for a variable.
    pub fn var_edges(&self, v: VarId) -> Option<&BTreeMap<Pos, Vec<Epoch>>> {
        self.vars.get(&v).map(|s| &s.pairs.edges)
    }

    /// Number of threads whose clock exists.
    pub fn threads_seen(&self) -> usize {
        self.threads_seen
    }

    /// Processes one event; events must arrive in trace order.
    pub fn step(&mut self, e: &Event) {
        let i = e.thread.0;
        self.init_thread(i);
        self.acted[i as usize] = true;
        match e.op {
            Op::Acquire(m) => {
                if let Some(r) = self.released.get(&m) {
                    let r = r.clone();
                    self.threads[i as usize].as_mut().unwrap().join(&r);
                }
            }
            Op::Release(m) => {
                let c = self.threads[i as usize].as_ref().unwrap().clone();
                self.released.insert(m, c);
                self.threads[i as usize].as_mut().unwrap().inc(i);
            }
            Op::Fork(child) => {
                let mut c = self.threads[i as usize].as_ref().unwrap().clone();
                c.set(child.0, 1);
                if self.threads[child.0 as usize].is_none() {
                    self.threads_seen += 1;
                }
                self.threads[child.0 as usize] = Some(c);
                self.threads[i as usize].as_mut().unwrap().inc(i);
            }
            Op::Join(child) => {
                // Only events of the child order anything before the
                // join; a forked thread that never ran contributes
                // nothing, not even the forker's knowledge.
                if self.acted[child.0 as usize] {
                    let c = self.threads[child.0 as usize].as_ref().unwrap().clone();
                    self.threads[i as usize].as_mut().unwrap().join(&c);
                }
            }
            Op::Write(v) => self.access(e.pos, i, v, AccessKind::Write),
            Op::Read(v) => self.access(e.pos, i, v, AccessKind::Read),
        }

        let live = self.threads.iter().filter(|t| t.is_some()).count()
            + self.released.len()
            + self
                .vars
                .values()
                .map(|s| s.pairs.rw.len() + 1)
                .sum::<usize>()
            + self.clocks_recorded;
        self.peak_state = self.peak_state.max(live);
    }

    fn access(&mut self, pos: Pos, i: u32, v: VarId, kind: AccessKind) {
        let opts = self.opts;
        let vs = self.vars.entry(v).or_insert_with(VarState::new);
        let th = self.threads[i as usize].as_mut().unwrap();
        let eps = Epoch {
            slot: i,
            stamp: th.get(i),
            pos,
            kind,
        };

        if kind == AccessKind::Read {
            if let Some(wp) = vs.last_write_pos {
                if vs.last_write.get(vs.last_write_slot) > th.get(vs.last_write_slot) {
                    self.wrd_pairs.push((wp, pos));
                }
            }
            if opts.optimized {
                // Pair against the clock before the reads-from join, so
                // the dependency source write still registers as a pair.
                for &b in vs.pairs.rw.iter() {
                    if b.is_write() && b.stamp > th.get(b.slot) {
                        vs.pairs.conc.push((b, eps));
                    }
                }
            }
            th.join(&vs.last_write);
        } else if kind == AccessKind::Write && opts.record {
            self.clocks[pos as usize - 1] = Some(th.clone());
            self.clocks_recorded += 1;
        }
        if kind == AccessKind::Read && opts.record {
            self.clocks[pos as usize - 1] = Some(th.clone());
            self.clocks_recorded += 1;
        }

        if !(opts.optimized && kind == AccessKind::Read) {
            for &b in vs.pairs.rw.iter() {
                if b.stamp > th.get(b.slot) {
                    vs.pairs.conc.push((b, eps));
                }
            }
        }

        let mut kept = Vec::with_capacity(vs.pairs.rw.len() + 1);
        let mut evicted = Vec::new();
        for &b in vs.pairs.rw.iter() {
            if b.stamp > th.get(b.slot) {
                kept.push(b);
            } else {
                evicted.push(b);
                if opts.optimized && kind == AccessKind::Read && b.is_write() {
                    kept.push(b);
                }
            }
        }
        if opts.record && !evicted.is_empty() {
            vs.pairs.edges.insert(pos, evicted);
        }
        kept.push(eps);
        vs.pairs.rw = kept;

        debug_assert!(
            vs.pairs.rw.len() <= self.threads_seen * if opts.optimized { 2 } else { 1 },
            "live epoch set exceeded its per-thread bound"
        );

        if kind == AccessKind::Write {
            vs.last_write = th.clone();
            vs.last_write_slot = i;
            vs.last_write_pos = Some(pos);
        }
        th.inc(i);
    }

    pub fn finish(self) -> ShbeeRun {
        ShbeeRun {
            optimized: self.opts.optimized,
            vars: self
                .vars
                .into_iter()
                .map(|(v, s)| (v, s.pairs))
                .collect(),
            clocks: self.clocks,
            wrd_pairs: self.wrd_pairs,
            peak_state: self.peak_state,
        }
    }
}

/// Runs the engine over a whole trace. The trace must be validated.
pub fn shbee_run(trace: &Trace, opts: ShbeeOptions) -> ShbeeRun {
    let mut engine = ShbeeEngine::new(trace, opts);
    for e in trace.events() {
        engine.step(e);
    }
    engine.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::TraceBuilder;

    fn conc_positions(run: &ShbeeRun, v: VarId) -> Vec<(Pos, Pos)> {
        run.vars[&v]
            .conc
            .iter()
            .map(|(a, b)| (a.pos, b.pos))
            .collect()
    }

    fn five_event_trace() -> Trace {
        TraceBuilder::new()
            .write(1, "x")
            .read(1, "x")
            .write(2, "x")
            .read(2, "x")
            .read(3, "x")
            .finish()
    }

    #[test]
    fn unoptimized_pass_finds_direct_pairs_and_edges() {
        let run = shbee_run(&five_event_trace(), ShbeeOptions::default());
        assert_eq!(
            conc_positions(&run, VarId(0)),
            vec![(2, 3), (2, 4), (2, 5), (4, 5)]
        );
        let vp = &run.vars[&VarId(0)];
        assert_eq!(
            vp.rw.iter().map(|e| e.pos).collect::<Vec<_>>(),
            vec![2, 4, 5]
        );
        let edges: Vec<(Pos, Vec<Pos>)> = vp
            .edges
            .iter()
            .map(|(&p, v)| (p, v.iter().map(|e| e.pos).collect()))
            .collect();
        assert_eq!(edges, vec![(2, vec![1]), (4, vec![3])]);
        assert_eq!(run.wrd_pairs, vec![(3, 5)]);
    }

    #[test]
    fn optimized_pass_pairs_reads_with_writes_only() {
        let run = shbee_run(
            &five_event_trace(),
            ShbeeOptions {
                optimized: true,
                record: true,
            },
        );
        assert_eq!(
            conc_positions(&run, VarId(0)),
            vec![(1, 3), (2, 3), (1, 4), (1, 5), (3, 5)]
        );
        // Write epochs are never evicted, so all five accesses stay live.
        let vp = &run.vars[&VarId(0)];
        assert_eq!(
            vp.rw.iter().map(|e| e.pos).collect::<Vec<_>>(),
            vec![1, 2, 3, 4, 5]
        );
        // No read-read pair anywhere.
        for (a, b) in &vp.conc {
            assert!(a.is_write() || b.is_write());
        }
    }

    #[test]
    fn ordered_same_stamp_epoch_is_evicted_with_an_edge() {
        // The reads-from transfer orders the write before the second read
        // with equal stamp and clock entry; the write must leave the live
        // set and the edge must be recorded, or later passes would lose
        // pairs reachable only through it.
        let t = TraceBuilder::new()
            .write(1, "x")
            .read(2, "x")
            .write(3, "x")
            .finish();
        let run = shbee_run(&t, ShbeeOptions::default());
        let vp = &run.vars[&VarId(0)];
        assert_eq!(
            vp.rw.iter().map(|e| e.pos).collect::<Vec<_>>(),
            vec![2, 3]
        );
        assert_eq!(
            vp.edges.get(&2).map(|v| v.iter().map(|e| e.pos).collect::<Vec<_>>()),
            Some(vec![1])
        );
        assert_eq!(conc_positions(&run, VarId(0)), vec![(2, 3)]);
    }

    #[test]
    fn lock_ordered_accesses_produce_edges_not_pairs() {
        let t = TraceBuilder::new()
            .acquire(1, "m")
            .write(1, "x")
            .release(1, "m")
            .acquire(2, "m")
            .write(2, "x")
            .release(2, "m")
            .finish();
        let run = shbee_run(&t, ShbeeOptions::default());
        assert!(conc_positions(&run, VarId(0)).is_empty());
        let vp = &run.vars[&VarId(0)];
        assert_eq!(
            vp.edges.get(&5).map(|v| v.iter().map(|e| e.pos).collect::<Vec<_>>()),
            Some(vec![2])
        );
    }

    #[test]
    fn streaming_mode_drops_clocks_and_edges() {
        let run = shbee_run(
            &five_event_trace(),
            ShbeeOptions {
                optimized: false,
                record: false,
            },
        );
        assert!(run.clocks.is_empty());
        assert!(run.vars[&VarId(0)].edges.is_empty());
        assert_eq!(
            conc_positions(&run, VarId(0)),
            vec![(2, 3), (2, 4), (2, 5), (4, 5)]
        );
    }

    #[test]
    fn recorded_clocks_follow_the_pass() {
        let t = TraceBuilder::new()
            .write(1, "x")
            .write(2, "x")
            .read(2, "x")
            .finish();
        let run = shbee_run(&t, ShbeeOptions::default());
        assert!(run.clocks[0]
            .as_ref()
            .unwrap()
            .eq_extended(&VClock::from_stamps(&[1, 0])));
        assert!(run.clocks[1]
            .as_ref()
            .unwrap()
            .eq_extended(&VClock::from_stamps(&[0, 1])));
        // The read's clock includes its reads-from join.
        assert!(run.clocks[2]
            .as_ref()
            .unwrap()
            .eq_extended(&VClock::from_stamps(&[0, 2])));
    }

    #[test]
    fn epoch_sets_stay_within_thread_bounds() {
        let mut b = TraceBuilder::new();
        for round in 0..4u64 {
            for tid in 1..=3u64 {
                if round % 2 == 0 {
                    b.write(tid, "x");
                } else {
                    b.read(tid, "x");
                }
            }
        }
        let t = b.finish();
        for optimized in [false, true] {
            let mut engine = ShbeeEngine::new(&t, ShbeeOptions {
                optimized,
                record: true,
            });
            let bound = if optimized { 2 * 3 } else { 3 };
            for e in t.events() {
                engine.step(e);
                assert!(engine.var_rw(VarId(0)).len() <= bound);
            }
        }
    }
}
