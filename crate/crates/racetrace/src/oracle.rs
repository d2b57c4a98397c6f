//! Reference oracle: the happens-before relation by explicit closure.
//!
//! The oracle builds every base ordering edge of a trace and takes the
//! transitive closure over bitset rows, then answers reachability,
//! concurrency, and race queries by brute-force enumeration. It shares no
//! machinery with the clock-based analyses, so differential tests can use
//! it as an independent ground truth. Time is cubic and memory quadratic
//! in the trace length; it is meant for short traces.
//!
//! Base edges, all pointing forward in the trace:
//!
//! * **program order** — consecutive events of the same thread;
//! * **write-read dependency** — the last write of a variable before a
//!   read of it (the read's reads-from source);
//! * **release-acquire** — a release of a mutex to a later acquire of it
//!   by another thread, unless an acquire by some third thread intervenes;
//! * **fork** — a fork to every event of the forked thread;
//! * **join** — every event of the joined thread to the join.

use crate::error::Error;
use crate::report::RaceCategory;
use crate::trace::{Op, Pos, Trace, VarId};
use crate::vclock::AccessKind;

/// Largest trace the oracle accepts; beyond this the quadratic bitset
/// matrix stops being a reasonable testing tool.
pub const MAX_ORACLE_EVENTS: usize = 5000;

/// One race found by the oracle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct OracleRace {
    pub first: Pos,
    pub second: Pos,
    pub var: VarId,
    pub category: RaceCategory,
}

/// Precomputed happens-before closure over one trace.
pub struct Oracle<'t> {
    trace: &'t Trace,
    n: usize,
    words: usize,
    reach: Vec<u64>,
}

impl<'t> Oracle<'t> {
    /// Builds the closure. The trace must already be validated.
    pub fn new(trace: &'t Trace) -> Result<Oracle<'t>, Error> {
        let n = trace.len();
        if n > MAX_ORACLE_EVENTS {
            return Err(Error::Config(format!(
                "reference oracle accepts at most {MAX_ORACLE_EVENTS} events, got {n}"
            )));
        }
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut add = |from: Pos, to: Pos| {
            debug_assert!(from < to, "ordering edges must point forward");
            succ[from as usize - 1].push(to as usize - 1);
        };

        let mut last_of_thread: Vec<Option<Pos>> = vec![None; trace.n_threads()];
        let mut last_write: Vec<Option<Pos>> = vec![None; trace.n_vars()];
        for e in trace.events() {
            if let Some(prev) = last_of_thread[e.thread.0 as usize] {
                add(prev, e.pos);
            }
            last_of_thread[e.thread.0 as usize] = Some(e.pos);
            match e.op {
                Op::Write(v) => last_write[v.0 as usize] = Some(e.pos),
                Op::Read(v) => {
                    if let Some(w) = last_write[v.0 as usize] {
                        add(w, e.pos);
                    }
                }
                Op::Release(m) => {
                    for later in trace.events().iter().filter(|f| f.pos > e.pos) {
                        if later.op == Op::Acquire(m) {
                            if later.thread == e.thread {
                                continue;
                            }
                            add(e.pos, later.pos);
                            break;
                        }
                    }
                }
                Op::Fork(child) => {
                    for f in trace.events().iter().filter(|f| f.thread == child) {
                        if f.pos > e.pos {
                            add(e.pos, f.pos);
                        }
                    }
                }
                Op::Join(child) => {
                    for f in trace.events().iter().filter(|f| f.thread == child) {
                        if f.pos < e.pos {
                            add(f.pos, e.pos);
                        }
                    }
                }
                Op::Acquire(_) => {}
            }
        }

        let words = n.div_ceil(64);
        let mut reach = vec![0u64; n * words];
        for i in (0..n).rev() {
            for &j in &succ[i] {
                let (left, right) = reach.split_at_mut(j * words);
                let row_i = &mut left[i * words..(i + 1) * words];
                let row_j = &right[..words];
                for w in 0..words {
                    row_i[w] |= row_j[w];
                }
                row_i[j / 64] |= 1u64 << (j % 64);
            }
        }

        Ok(Oracle {
            trace,
            n,
            words,
            reach,
        })
    }

    /// True if the event at `a` happens strictly before the one at `b`.
    pub fn happens_before(&self, a: Pos, b: Pos) -> bool {
        let (i, j) = (a as usize - 1, b as usize - 1);
        debug_assert!(i < self.n && j < self.n);
        self.reach[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    /// True if neither event happens before the other.
    pub fn concurrent(&self, a: Pos, b: Pos) -> bool {
        a != b && !self.happens_before(a, b) && !self.happens_before(b, a)
    }

    /// Positions of read/write events of `var`, in trace order.
    pub fn accesses(&self, var: VarId) -> Vec<Pos> {
        self.trace
            .events()
            .iter()
            .filter(|e| matches!(e.op.access(), Some((v, _)) if v == var))
            .map(|e| e.pos)
            .collect()
    }

    /// All unordered concurrent access pairs of `var`, including
    /// read-read pairs, as `(earlier, later)` sorted by position.
    pub fn all_conc(&self, var: VarId) -> Vec<(Pos, Pos)> {
        let acc = self.accesses(var);
        let mut out = Vec::new();
        for (i, &a) in acc.iter().enumerate() {
            for &b in &acc[i + 1..] {
                if self.concurrent(a, b) {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// The predicted races of the trace: concurrent write-write and
    /// write-read pairs, plus ordered write-read-dependency pairs where
    /// a read takes its value directly from another thread's write with
    /// no event strictly ordered between the two.
    ///
    /// Pairs are `(earlier, later)` and sorted by position.
    pub fn race_set(&self) -> Vec<OracleRace> {
        let mut out = Vec::new();
        for v in 0..self.trace.n_vars() as u32 {
            let var = VarId(v);
            let acc = self.accesses(var);
            for (i, &a) in acc.iter().enumerate() {
                for &b in &acc[i + 1..] {
                    if !self.concurrent(a, b) {
                        continue;
                    }
                    let writes = self.is_write(a) as u8 + self.is_write(b) as u8;
                    let category = match writes {
                        2 => RaceCategory::WriteWrite,
                        1 => RaceCategory::WriteRead,
                        _ => continue,
                    };
                    out.push(OracleRace {
                        first: a,
                        second: b,
                        var,
                        category,
                    });
                }
            }
            for &(w, r) in &self.wrd_pairs_of(var) {
                out.push(OracleRace {
                    first: w,
                    second: r,
                    var,
                    category: RaceCategory::WriteReadDependency,
                });
            }
        }
        out.sort();
        out
    }

    /// Write-read-dependency races of `var`: `(write, read)` pairs where
    /// the read's reads-from source belongs to another thread and no
    /// event at all is strictly ordered between source and read.
    pub fn wrd_pairs_of(&self, var: VarId) -> Vec<(Pos, Pos)> {
        let mut out = Vec::new();
        let mut last_write: Option<Pos> = None;
        for e in self.trace.events() {
            match e.op {
                Op::Write(v) if v == var => last_write = Some(e.pos),
                Op::Read(v) if v == var => {
                    let Some(w) = last_write else { continue };
                    if self.trace.event(w).thread == e.thread {
                        continue;
                    }
                    debug_assert!(self.happens_before(w, e.pos));
                    let blocked = (1..=self.n as Pos).any(|p| {
                        p != w
                            && p != e.pos
                            && self.happens_before(w, p)
                            && self.happens_before(p, e.pos)
                    });
                    if !blocked {
                        out.push((w, e.pos));
                    }
                }
                _ => {}
            }
        }
        out
    }

    fn is_write(&self, pos: Pos) -> bool {
        matches!(
            self.trace.event(pos).op.access(),
            Some((_, AccessKind::Write))
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::TraceBuilder;

    fn races(t: &Trace) -> Vec<(Pos, Pos, RaceCategory)> {
        Oracle::new(t)
            .unwrap()
            .race_set()
            .into_iter()
            .map(|r| (r.first, r.second, r.category))
            .collect()
    }

    #[test]
    fn unsynchronized_accesses_race() {
        let t = TraceBuilder::new()
            .write(1, "x")
            .write(2, "x")
            .read(2, "x")
            .read(1, "x")
            .finish();
        assert_eq!(
            races(&t),
            vec![
                (1, 2, RaceCategory::WriteWrite),
                (1, 3, RaceCategory::WriteRead),
                (2, 4, RaceCategory::WriteReadDependency),
            ]
        );
    }

    #[test]
    fn reads_from_chain_orders_later_accesses() {
        // The read of y carries the writer's history to the second thread,
        // so the two accesses of x are ordered and race-free.
        let t = TraceBuilder::new()
            .read(1, "x")
            .write(1, "y")
            .read(2, "y")
            .write(2, "x")
            .finish();
        let o = Oracle::new(&t).unwrap();
        assert!(o.happens_before(1, 4));
        let x_races: Vec<_> = races(&t)
            .into_iter()
            .filter(|&(a, _, _)| t.event(a).op.access().unwrap().0 == VarId(0))
            .collect();
        assert!(x_races.is_empty());
        // The y transfer itself is adjacent and cross-thread.
        assert_eq!(races(&t), vec![(2, 3, RaceCategory::WriteReadDependency)]);
    }

    #[test]
    fn lock_sections_order_release_to_acquire() {
        let t = TraceBuilder::new()
            .acquire(1, "m")
            .write(1, "x")
            .release(1, "m")
            .acquire(2, "m")
            .read(2, "x")
            .release(2, "m")
            .finish();
        let o = Oracle::new(&t).unwrap();
        assert!(o.happens_before(3, 4));
        assert!(o.happens_before(2, 5));
        assert!(races(&t).is_empty());
    }

    #[test]
    fn same_thread_reacquire_does_not_block_sync() {
        let t = TraceBuilder::new()
            .acquire(1, "m")
            .release(1, "m")
            .acquire(1, "m")
            .release(1, "m")
            .acquire(2, "m")
            .finish();
        let o = Oracle::new(&t).unwrap();
        // Both releases reach the other thread's acquire.
        assert!(o.happens_before(2, 5));
        assert!(o.happens_before(4, 5));
    }

    #[test]
    fn fork_and_join_order_child_events() {
        let t = TraceBuilder::new()
            .write(1, "x")
            .fork(1, 2)
            .write(2, "x")
            .join(1, 2)
            .read(1, "x")
            .finish();
        let o = Oracle::new(&t).unwrap();
        assert!(o.happens_before(2, 3));
        assert!(o.happens_before(3, 4));
        assert!(o.happens_before(1, 5));
        assert!(races(&t).is_empty());
    }

    #[test]
    fn all_conc_includes_read_read_pairs() {
        let t = TraceBuilder::new()
            .write(1, "x")
            .read(1, "x")
            .read(2, "x")
            .finish();
        let o = Oracle::new(&t).unwrap();
        assert_eq!(o.all_conc(VarId(0)), vec![(2, 3)]);
        // ...but read-read pairs are not races. The read at 3 takes its
        // value from the write at 1 with the read at 2 not ordered between
        // them (it is concurrent with 3), so (1,3) is a dependency race.
        assert_eq!(races(&t), vec![(1, 3, RaceCategory::WriteReadDependency)]);
    }

    #[test]
    fn intermediary_suppresses_dependency_race() {
        // t2's read of x is preceded by its own read of y that synchronizes
        // with an event ordered after the write of x, so an event lies
        // strictly between source and read.
        let t = TraceBuilder::new()
            .write(1, "x")
            .write(1, "y")
            .read(2, "y")
            .read(2, "x")
            .finish();
        let o = Oracle::new(&t).unwrap();
        assert!(o.happens_before(1, 4));
        assert!(o.happens_before(1, 2) && o.happens_before(2, 4));
        let set = races(&t);
        assert!(!set.contains(&(1, 4, RaceCategory::WriteReadDependency)));
        assert_eq!(set, vec![(2, 3, RaceCategory::WriteReadDependency)]);
    }

    #[test]
    fn oracle_rejects_oversized_traces() {
        let mut b = TraceBuilder::new();
        for _ in 0..=MAX_ORACLE_EVENTS {
            b.write(1, "x");
        }
        let t = b.finish();
        assert!(matches!(Oracle::new(&t), Err(Error::Config(_))));
    }
}
