//! Lock protection analysis: which locks were held at each access.
//!
//! A single pass records, for every read and write, the set of mutexes
//! its thread held at that moment. Reported race pairs are then graded by
//! how the two endpoint locksets relate; because holding a common lock
//! orders two accesses, a reported pair with intersecting locksets is a
//! contradiction and surfaces as an internal error.

use std::collections::{BTreeSet, HashMap};

use crate::error::Error;
use crate::report::LocksetClass;
use crate::trace::{MutexId, Op, Pos, ThreadId, Trace};

/// Per-access lockset snapshots for one trace.
#[derive(Clone, Debug)]
pub struct Locksets {
    /// Indexed by `pos - 1`; `None` for non-access events.
    per_pos: Vec<Option<BTreeSet<MutexId>>>,
}

impl Locksets {
    /// Records the held-lock snapshot at every access of the trace.
    pub fn compute(trace: &Trace) -> Locksets {
        let mut held: HashMap<ThreadId, BTreeSet<MutexId>> = HashMap::new();
        let mut per_pos = vec![None; trace.len()];
        for e in trace.events() {
            match e.op {
                Op::Acquire(m) => {
                    held.entry(e.thread).or_default().insert(m);
                }
                Op::Release(m) => {
                    held.entry(e.thread).or_default().remove(&m);
                }
                Op::Read(_) | Op::Write(_) => {
                    per_pos[e.pos as usize - 1] =
                        Some(held.get(&e.thread).cloned().unwrap_or_default());
                }
                Op::Fork(_) | Op::Join(_) => {}
            }
        }
        Locksets { per_pos }
    }

    /// The lockset snapshot at an access position.
    pub fn at(&self, pos: Pos) -> Option<&BTreeSet<MutexId>> {
        self.per_pos[pos as usize - 1].as_ref()
    }

    /// Grades a reported pair by its endpoint locksets.
    ///
    /// Fails with an internal error if the locksets intersect (such a
    /// pair is lock-ordered and must never be reported) or if either
    /// position is not an access.
    pub fn classify(&self, first: Pos, second: Pos) -> Result<LocksetClass, Error> {
        let get = |pos: Pos| {
            self.at(pos).ok_or_else(|| {
                Error::Internal(format!("position {pos} of a race pair is not an access"))
            })
        };
        let a = get(first)?;
        let b = get(second)?;
        if a.intersection(b).next().is_some() {
            return Err(Error::Internal(format!(
                "reported pair ({first},{second}) holds a common lock"
            )));
        }
        Ok(match (a.is_empty(), b.is_empty()) {
            (true, true) => LocksetClass::BothUnprotected,
            (true, false) => LocksetClass::FirstUnprotected,
            (false, true) => LocksetClass::SecondUnprotected,
            (false, false) => LocksetClass::DisjointLocks,
        })
    }
}
