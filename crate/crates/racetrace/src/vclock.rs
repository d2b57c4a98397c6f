//! Vector clocks over dense thread slots, and the epochs derived from them.
//!
//! A [`VClock`] maps each thread slot to a logical timestamp. Slots the
//! clock has never touched implicitly read as zero, so clocks of different
//! lengths compare as if zero-extended. An [`Epoch`] is the scalar
//! projection `thread#stamp` of a clock at the moment an access happened,
//! tagged with the trace position and access kind so analyses can point
//! back at the concrete event.

use std::fmt;

use serde::Serialize;

/// A vector clock: one logical timestamp per thread slot.
///
/// Missing slots read as zero, so comparisons and joins between clocks of
/// different lengths behave as if the shorter clock were zero-extended.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct VClock {
    stamps: Vec<u32>,
}

impl VClock {
    /// The all-zero clock.
    pub fn new() -> Self {
        VClock::default()
    }

    /// The timestamp for `slot` (zero if the clock never touched it).
    pub fn get(&self, slot: u32) -> u32 {
        self.stamps.get(slot as usize).copied().unwrap_or(0)
    }

    /// Sets the timestamp for `slot`, growing the clock as needed.
    pub fn set(&mut self, slot: u32, stamp: u32) {
        let idx = slot as usize;
        if idx >= self.stamps.len() {
            self.stamps.resize(idx + 1, 0);
        }
        self.stamps[idx] = stamp;
    }

    /// Increments the timestamp for `slot` by one.
    pub fn inc(&mut self, slot: u32) {
        let next = self.get(slot) + 1;
        self.set(slot, next);
    }

    /// Pointwise maximum: `self := self ⊔ other`.
    pub fn join(&mut self, other: &VClock) {
        if other.stamps.len() > self.stamps.len() {
            self.stamps.resize(other.stamps.len(), 0);
        }
        for (i, &s) in other.stamps.iter().enumerate() {
            if s > self.stamps[i] {
                self.stamps[i] = s;
            }
        }
    }

    /// Pointwise less-or-equal with zero extension.
    pub fn le(&self, other: &VClock) -> bool {
        self.stamps
            .iter()
            .enumerate()
            .all(|(i, &s)| s <= other.get(i as u32))
    }

    /// Number of slots with an explicit entry.
    pub fn len(&self) -> usize {
        self.stamps.len()
    }

    /// True if no slot has a nonzero timestamp.
    pub fn is_empty(&self) -> bool {
        self.stamps.iter().all(|&s| s == 0)
    }

    /// The stamps as a slice (trailing slots may be missing; they are zero).
    pub fn stamps(&self) -> &[u32] {
        &self.stamps
    }

    /// Builds a clock from explicit per-slot stamps.
    pub fn from_stamps(stamps: &[u32]) -> Self {
        VClock {
            stamps: stamps.to_vec(),
        }
    }

    /// Equality under zero extension (ignores trailing zero slots).
    pub fn eq_extended(&self, other: &VClock) -> bool {
        let n = self.stamps.len().max(other.stamps.len());
        (0..n as u32).all(|i| self.get(i) == other.get(i))
    }
}

impl fmt::Display for VClock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, s) in self.stamps.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{s}")?;
        }
        write!(f, "]")
    }
}

/// Whether an access reads or writes its variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessKind {
    Read,
    Write,
}

/// A scalar clock projection `slot#stamp` for one access event.
///
/// `pos` is the 1-based trace position the access happened at and `kind`
/// whether it was a read or a write; both ride along so that analyses
/// working on epochs can report concrete events.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Epoch {
    pub slot: u32,
    pub stamp: u32,
    pub pos: u32,
    pub kind: AccessKind,
}

impl Epoch {
    pub fn is_write(&self) -> bool {
        self.kind == AccessKind::Write
    }
}

impl fmt::Display for Epoch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.slot + 1, self.stamp)
    }
}
