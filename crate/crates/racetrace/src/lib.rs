//! Predictive data-race analysis over concurrent execution traces.
//!
//! The input is a linear trace of reads, writes, lock operations, and
//! thread fork/join events, as produced by an instrumented run of a
//! concurrent program. The analyses order the trace's events by the
//! smallest relation that keeps every read paired with the write it took
//! its value from — program order, write to dependent read, release to
//! next acquire, fork to child, child to join — and report accesses to
//! the same variable that this relation leaves unordered. Every reported
//! pair is realizable by some valid reschedule of the same trace, so
//! there are no false positives with respect to the observed run.
//!
//! Three analyses share that ordering but differ in what they keep:
//!
//! * [`shb::shb_run`] — the flagging pass: one vector clock per thread
//!   and two per variable, marking the *later* access of each racy pair
//!   in linear time ([`shb::ShbMode::Flag`]), optionally also detecting
//!   write-read dependency races ([`shb::ShbMode::FlagWrd`]), or keeping
//!   enough history to enumerate all racy pairs exhaustively
//!   ([`shb::ShbMode::RecordAll`] plus [`shb::shball_post`]).
//! * [`shbee::shbee_run`] — the pair-reporting engine: per-variable epoch
//!   sets whose size stays bounded by the thread count, emitting
//!   concurrent pairs directly (phase 1) and edge constraints that
//!   [`postprocess::expand`] and [`postprocess::eliminate`] later turn
//!   into the remaining pairs (phase 2).
//! * [`oracle::Oracle`] — an independent brute-force closure used as
//!   ground truth by the differential test harness in [`check`].
//!
//! [`report`] assembles raw pairs into categorized, deduplicated,
//! optionally lockset-classified reports; [`generator`] produces random
//! valid traces for testing; [`filter`] is a lossy prefilter that keeps
//! only cross-thread variables.
//!
//! ```
//! use racetrace::{shbee_run, reported_races, Dedup, ShbeeOptions, Trace};
//!
//! let t = Trace::parse_str("1,wr,x\n1,wr,x\n2,wr,x\n")?.validate(false)?;
//! let run = shbee_run(&t, ShbeeOptions::default());
//! let races = reported_races(&t, &run, true, None, Dedup::Events)?;
//! let pairs: Vec<_> = races.iter().map(|r| (r.first_pos, r.second_pos)).collect();
//! assert_eq!(pairs, vec![(1, 3), (2, 3)]);
//! # Ok::<(), racetrace::Error>(())
//! ```

pub mod check;
pub mod error;
pub mod filter;
pub mod generator;
pub mod lockset;
pub mod oracle;
pub mod postprocess;
pub mod report;
pub mod shb;
pub mod shbee;
pub mod trace;
pub mod vclock;

/// The narrative guide, mirrored from `book/` so every example in it
/// compiles and runs as a doc-test.
pub mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/traces.md")]
    pub mod traces {}
    #[doc = include_str!("../../../book/src/ordering.md")]
    pub mod ordering {}
    #[doc = include_str!("../../../book/src/flagging.md")]
    pub mod flagging {}
    #[doc = include_str!("../../../book/src/pairs.md")]
    pub mod pairs {}
    #[doc = include_str!("../../../book/src/postprocessing.md")]
    pub mod postprocessing {}
    #[doc = include_str!("../../../book/src/dependency-races.md")]
    pub mod dependency_races {}
    #[doc = include_str!("../../../book/src/locksets.md")]
    pub mod locksets {}
    #[doc = include_str!("../../../book/src/testing.md")]
    pub mod testing {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}

pub use check::{run_check, verify_trace, CheckFailure, CheckReport, Checker};
pub use error::Error;
pub use filter::filter_shared;
pub use generator::{corpus_config, generate, GenConfig, GenWeights};
pub use lockset::Locksets;
pub use oracle::{Oracle, OracleRace, MAX_ORACLE_EVENTS};
pub use postprocess::{eliminate, expand, Expansion};
pub use report::{
    assemble_races, render_json, render_text, reported_races, summarize_locksets, Dedup,
    LocksetClass, LocksetSummary, RaceCategory, ReportedRace, Stats, VarRacePairs,
};
pub use shb::{
    render_flags_json, render_flags_text, shb_run, shball_post, Flag, FlagCats, ShbMode, ShbRun,
};
pub use shbee::{shbee_run, ShbeeEngine, ShbeeOptions, ShbeeRun, VarPairs};
pub use trace::{Event, MutexId, Op, Pos, ThreadId, Trace, TraceBuilder, VarId};
pub use vclock::{AccessKind, Epoch, VClock};
