//! Shared-variable prefilter.
//!
//! Accesses to a variable only one thread ever touches cannot race, and
//! in realistic traces most accesses are of that kind. The filter keeps,
//! per variable, only the most recent access while the variable is still
//! thread-local (the *buffered* access), and everything from the first
//! cross-thread access — the sharing point — onward. Synchronization
//! events (acquire/release/fork/join) always pass through, so the
//! ordering skeleton of the trace is untouched.
//!
//! Retained events keep their relative order and their location strings;
//! since locations default to the original decimal position, a filtered
//! trace still reports races in terms of the original coordinates unless
//! explicit locations were provided.
//!
//! This is a lossy prefilter: races whose earlier endpoint was superseded
//! inside the discarded thread-local prefix are gone, and in rare shapes
//! a dropped prefix write was the reads-from source of a retained read,
//! weakening the recovered ordering around the sharing point. The value
//! of the filter is volume — thread-local traffic dominates realistic
//! traces — not exactness at the boundary.

use std::collections::HashMap;

use crate::trace::{Op, Pos, ThreadId, Trace, TraceBuilder, VarId};

/// Applies the filter, renumbering positions but keeping locations.
pub fn filter_shared(trace: &Trace) -> Trace {
    #[derive(Clone)]
    struct VarTrack {
        owner: ThreadId,
        buffered: Option<Pos>,
        shared_at: Option<Pos>,
    }
    let mut track: HashMap<VarId, VarTrack> = HashMap::new();

    for e in trace.events() {
        if let Some((v, _)) = e.op.access() {
            match track.get_mut(&v) {
                None => {
                    track.insert(
                        v,
                        VarTrack {
                            owner: e.thread,
                            buffered: Some(e.pos),
                            shared_at: None,
                        },
                    );
                }
                Some(t) => {
                    if t.shared_at.is_some() {
                        continue;
                    }
                    if t.owner == e.thread {
                        t.buffered = Some(e.pos);
                    } else {
                        t.shared_at = Some(e.pos);
                    }
                }
            }
        }
    }

    let keep = |e: &crate::trace::Event| -> bool {
        match e.op.access() {
            None => true,
            Some((v, _)) => {
                let t = &track[&v];
                match t.shared_at {
                    None => false,
                    Some(sp) => e.pos >= sp || t.buffered == Some(e.pos),
                }
            }
        }
    };

    let mut b = TraceBuilder::new();
    for e in trace.events() {
        if !keep(e) {
            continue;
        }
        let tid = trace.thread_tid(e.thread);
        let loc = e.loc.as_str();
        match e.op {
            Op::Read(v) => b.read_at(tid, trace.var_name(v), loc),
            Op::Write(v) => b.write_at(tid, trace.var_name(v), loc),
            Op::Acquire(m) => b.acquire_at(tid, trace.mutex_name(m), loc),
            Op::Release(m) => b.release_at(tid, trace.mutex_name(m), loc),
            Op::Fork(c) => b.fork_at(tid, trace.thread_tid(c), loc),
            Op::Join(c) => b.join_at(tid, trace.thread_tid(c), loc),
        };
    }
    b.finish()
}
