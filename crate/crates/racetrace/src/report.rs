//! Race reports: categories, assembly, deduplication, and rendering.
//!
//! Analyses produce raw position pairs; [`assemble_races`] turns them into
//! user-facing [`ReportedRace`] records with locations, categories, the
//! phase that found each pair, and optional lockset classification. The
//! text format is one line per race:
//!
//! ```text
//! x main.c:12@1 <-> main.c:20@4 [ww/-/1]
//! ```
//!
//! i.e. variable, both endpoints as `loc@pos`, then category, lockset
//! class (`-` when lockset analysis is off), and phase. The JSON format is
//! a schema-stable array of objects with camelCase keys.

use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

use crate::error::Error;
use crate::lockset::Locksets;
use crate::postprocess::{eliminate, expand};
use crate::shbee::ShbeeRun;
use crate::trace::{Pos, Trace, VarId};
use crate::vclock::Epoch;

/// How a race pair relates the two accesses.
///
/// `WriteWrite` and `WriteRead` pairs are concurrent; a
/// `WriteReadDependency` pair is ordered, but only because the read takes
/// its value from the write, with nothing ordered strictly between the
/// two — flipping them is a feasible reordering that changes the read's
/// value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum RaceCategory {
    #[serde(rename = "wrd")]
    WriteReadDependency,
    #[serde(rename = "ww")]
    WriteWrite,
    #[serde(rename = "wr")]
    WriteRead,
}

impl RaceCategory {
    pub fn label(&self) -> &'static str {
        match self {
            RaceCategory::WriteWrite => "ww",
            RaceCategory::WriteRead => "wr",
            RaceCategory::WriteReadDependency => "wrd",
        }
    }
}

impl fmt::Display for RaceCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Lock protection classes for a reported pair.
///
/// Pairs with overlapping locksets never show up in reports (holding a
/// common lock orders the accesses), so the classes below partition all
/// reported pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum LocksetClass {
    /// First access holds no lock, second holds at least one.
    #[serde(rename = "C1")]
    FirstUnprotected,
    /// Second access holds no lock, first holds at least one.
    #[serde(rename = "C2")]
    SecondUnprotected,
    /// Both hold locks, but disjoint ones.
    #[serde(rename = "C3")]
    DisjointLocks,
    /// Neither access holds any lock.
    #[serde(rename = "unprotected-both")]
    BothUnprotected,
}

impl LocksetClass {
    pub fn label(&self) -> &'static str {
        match self {
            LocksetClass::FirstUnprotected => "C1",
            LocksetClass::SecondUnprotected => "C2",
            LocksetClass::DisjointLocks => "C3",
            LocksetClass::BothUnprotected => "unprotected-both",
        }
    }
}

impl fmt::Display for LocksetClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One reported race pair, normalized so `first_pos < second_pos`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ReportedRace {
    pub first_loc: String,
    pub second_loc: String,
    pub first_pos: Pos,
    pub second_pos: Pos,
    pub variable: String,
    pub category: RaceCategory,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lockset_class: Option<LocksetClass>,
    /// 1 if found during the analysis pass itself, 2 if only by
    /// post-processing.
    pub phase: u8,
}

/// Report deduplication granularity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dedup {
    /// Collapse pairs with the same unordered location pair, variable,
    /// and category; the positionally earliest instance survives.
    Locations,
    /// Keep every distinct event pair.
    Events,
}

/// The per-variable race candidates of a pair-based analysis.
pub struct VarRacePairs {
    pub var: VarId,
    /// Concurrent access pairs that survived post-processing (or the raw
    /// single-pass pairs when post-processing is off).
    pub pairs: Vec<(Epoch, Epoch)>,
    /// Position pairs already present during the single pass, used to
    /// attribute a phase to each reported race.
    pub phase1: HashSet<(Pos, Pos)>,
}

/// Turns raw analysis output into the final deduplicated report.
///
/// Read-read pairs are dropped, dependency pairs win over a concurrent
/// duplicate of the same two events, and the result is sorted by
/// position. With `locksets`, every pair is classified; a pair whose two
/// locksets intersect makes the function fail, since the analyses must
/// never produce one.
pub fn assemble_races(
    trace: &Trace,
    vars: &[VarRacePairs],
    wrd: &[(Pos, Pos)],
    locksets: Option<&Locksets>,
    dedup: Dedup,
) -> Result<Vec<ReportedRace>, Error> {
    let mut raw: Vec<(Pos, Pos, VarId, RaceCategory, u8)> = Vec::new();
    for &(w, r) in wrd {
        let (var, _) = trace
            .event(r)
            .op
            .access()
            .expect("dependency pairs end at a read");
        raw.push((w, r, var, RaceCategory::WriteReadDependency, 1));
    }
    for v in vars {
        for &(a, b) in &v.pairs {
            if !a.is_write() && !b.is_write() {
                continue;
            }
            let (first, second) = if a.pos <= b.pos { (a, b) } else { (b, a) };
            let category = if first.is_write() && second.is_write() {
                RaceCategory::WriteWrite
            } else {
                RaceCategory::WriteRead
            };
            let phase = if v.phase1.contains(&(first.pos, second.pos)) {
                1
            } else {
                2
            };
            raw.push((first.pos, second.pos, v.var, category, phase));
        }
    }

    // Category sorts dependency races first so they win position-level
    // deduplication against a concurrent duplicate of the same events.
    raw.sort();
    let mut seen_pos: HashSet<(Pos, Pos)> = HashSet::new();
    let mut seen_loc: HashSet<(String, String, VarId, RaceCategory)> = HashSet::new();
    let mut out = Vec::new();
    for (first, second, var, category, phase) in raw {
        if !seen_pos.insert((first, second)) {
            continue;
        }
        let first_loc = trace.event(first).loc.clone();
        let second_loc = trace.event(second).loc.clone();
        if dedup == Dedup::Locations {
            let key = if first_loc <= second_loc {
                (first_loc.clone(), second_loc.clone(), var, category)
            } else {
                (second_loc.clone(), first_loc.clone(), var, category)
            };
            if !seen_loc.insert(key) {
                continue;
            }
        }
        let lockset_class = match locksets {
            Some(ls) => Some(ls.classify(first, second)?),
            None => None,
        };
        out.push(ReportedRace {
            first_loc,
            second_loc,
            first_pos: first,
            second_pos: second,
            variable: trace.var_name(var).to_string(),
            category,
            lockset_class,
            phase,
        });
    }
    out.sort_by_key(|r| (r.first_pos, r.second_pos));
    Ok(out)
}

/// Composes a pair-analysis run into the final report: optionally expands
/// and eliminates each variable's pairs, then assembles, classifies, and
/// deduplicates them.
///
/// `post` requires a run that recorded per-access clocks.
pub fn reported_races(
    trace: &Trace,
    run: &ShbeeRun,
    post: bool,
    locksets: Option<&Locksets>,
    dedup: Dedup,
) -> Result<Vec<ReportedRace>, Error> {
    if post && run.clocks.len() != trace.len() {
        return Err(Error::Internal(
            "post-processing needs the recorded per-access clocks".to_string(),
        ));
    }
    let mut vars = Vec::new();
    for (&var, vp) in &run.vars {
        let phase1: HashSet<(Pos, Pos)> = vp.conc.iter().map(|(a, b)| (a.pos, b.pos)).collect();
        let pairs = if post {
            let exp = expand(&vp.conc, &vp.edges);
            eliminate(&exp.pairs, &run.clocks)
        } else {
            vp.conc.clone()
        };
        vars.push(VarRacePairs { var, pairs, phase1 });
    }
    assemble_races(trace, &vars, &run.wrd_pairs, locksets, dedup)
}

/// Renders the one-line-per-race text format.
pub fn render_text(races: &[ReportedRace]) -> String {
    let mut out = String::new();
    for r in races {
        let class = r
            .lockset_class
            .map_or("-".to_string(), |c| c.label().to_string());
        out.push_str(&format!(
            "{} {}@{} <-> {}@{} [{}/{}/{}]\n",
            r.variable, r.first_loc, r.first_pos, r.second_loc, r.second_pos, r.category, class,
            r.phase
        ));
    }
    out
}

/// Renders the schema-stable JSON array.
pub fn render_json(races: &[ReportedRace]) -> String {
    serde_json::to_string_pretty(races).expect("race reports serialize infallibly")
}

/// Counts of reported pairs per lockset class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LocksetSummary {
    pub first_unprotected: usize,
    pub second_unprotected: usize,
    pub disjoint: usize,
    pub both_unprotected: usize,
}

impl LocksetSummary {
    pub fn total(&self) -> usize {
        self.first_unprotected + self.second_unprotected + self.disjoint + self.both_unprotected
    }
}

/// Tallies the lockset classes of a classified report.
pub fn summarize_locksets(races: &[ReportedRace]) -> LocksetSummary {
    let mut s = LocksetSummary::default();
    for r in races {
        match r.lockset_class {
            Some(LocksetClass::FirstUnprotected) => s.first_unprotected += 1,
            Some(LocksetClass::SecondUnprotected) => s.second_unprotected += 1,
            Some(LocksetClass::DisjointLocks) => s.disjoint += 1,
            Some(LocksetClass::BothUnprotected) => s.both_unprotected += 1,
            None => {}
        }
    }
    s
}

impl fmt::Display for LocksetSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "C1={} C2={} C3={} unprotected-both={}",
            self.first_unprotected, self.second_unprotected, self.disjoint, self.both_unprotected
        )
    }
}

/// Run statistics printed to stderr by the command-line tools.
#[derive(Clone, Debug, Default)]
pub struct Stats {
    pub events: usize,
    pub threads: usize,
    pub variables: usize,
    pub mutexes: usize,
    pub phase1_races: usize,
    pub phase2_races: usize,
    pub flagged: Option<usize>,
    pub phase1_secs: f64,
    pub phase2_secs: f64,
}

impl fmt::Display for Stats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "events={} threads={} variables={} mutexes={}",
            self.events, self.threads, self.variables, self.mutexes
        )?;
        if let Some(n) = self.flagged {
            write!(f, " flagged={n}")?;
        }
        write!(
            f,
            " races={}+{} phase1={:.3}s phase2={:.3}s",
            self.phase1_races, self.phase2_races, self.phase1_secs, self.phase2_secs
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::TraceBuilder;
    use crate::vclock::{AccessKind, Epoch};

    fn ep(slot: u32, stamp: u32, pos: Pos, kind: AccessKind) -> Epoch {
        Epoch {
            slot,
            stamp,
            pos,
            kind,
        }
    }

    #[test]
    fn assembles_categories_phases_and_order() {
        let t = TraceBuilder::new()
            .write(1, "x")
            .write(2, "x")
            .read(2, "x")
            .read(1, "x")
            .finish();
        let w1 = ep(0, 1, 1, AccessKind::Write);
        let w2 = ep(1, 1, 2, AccessKind::Write);
        let r3 = ep(1, 2, 3, AccessKind::Read);
        let vars = vec![VarRacePairs {
            var: VarId(0),
            pairs: vec![(w1, w2), (w1, r3)],
            phase1: [(1, 2)].into_iter().collect(),
        }];
        let races = assemble_races(&t, &vars, &[(2, 4)], None, Dedup::Events).unwrap();
        let view: Vec<_> = races
            .iter()
            .map(|r| (r.first_pos, r.second_pos, r.category, r.phase))
            .collect();
        assert_eq!(
            view,
            vec![
                (1, 2, RaceCategory::WriteWrite, 1),
                (1, 3, RaceCategory::WriteRead, 2),
                (2, 4, RaceCategory::WriteReadDependency, 1),
            ]
        );
    }

    #[test]
    fn read_read_pairs_are_dropped() {
        let t = TraceBuilder::new().read(1, "x").read(2, "x").finish();
        let vars = vec![VarRacePairs {
            var: VarId(0),
            pairs: vec![(ep(0, 1, 1, AccessKind::Read), ep(1, 1, 2, AccessKind::Read))],
            phase1: HashSet::new(),
        }];
        let races = assemble_races(&t, &vars, &[], None, Dedup::Events).unwrap();
        assert!(races.is_empty());
    }

    #[test]
    fn dependency_beats_concurrent_duplicate() {
        let t = TraceBuilder::new().write(1, "x").read(2, "x").finish();
        let vars = vec![VarRacePairs {
            var: VarId(0),
            pairs: vec![(ep(0, 1, 1, AccessKind::Write), ep(1, 1, 2, AccessKind::Read))],
            phase1: [(1, 2)].into_iter().collect(),
        }];
        let races = assemble_races(&t, &vars, &[(1, 2)], None, Dedup::Events).unwrap();
        assert_eq!(races.len(), 1);
        assert_eq!(races[0].category, RaceCategory::WriteReadDependency);
    }

    #[test]
    fn location_dedup_keeps_earliest_instance() {
        let t = TraceBuilder::new()
            .write_at(1, "x", "a.c:1")
            .write_at(2, "x", "a.c:2")
            .write_at(1, "x", "a.c:1")
            .finish();
        let w1 = ep(0, 1, 1, AccessKind::Write);
        let w2 = ep(1, 1, 2, AccessKind::Write);
        let w3 = ep(0, 2, 3, AccessKind::Write);
        let vars = vec![VarRacePairs {
            var: VarId(0),
            pairs: vec![(w1, w2), (w2, w3)],
            phase1: HashSet::new(),
        }];
        let all = assemble_races(&t, &vars, &[], None, Dedup::Events).unwrap();
        assert_eq!(all.len(), 2);
        let deduped = assemble_races(&t, &vars, &[], None, Dedup::Locations).unwrap();
        assert_eq!(deduped.len(), 1);
        assert_eq!((deduped[0].first_pos, deduped[0].second_pos), (1, 2));
    }

    #[test]
    fn text_and_json_shapes() {
        let t = TraceBuilder::new()
            .write_at(1, "x", "a.c:1")
            .write_at(2, "x", "b.c:9")
            .finish();
        let vars = vec![VarRacePairs {
            var: VarId(0),
            pairs: vec![(ep(0, 1, 1, AccessKind::Write), ep(1, 1, 2, AccessKind::Write))],
            phase1: [(1, 2)].into_iter().collect(),
        }];
        let races = assemble_races(&t, &vars, &[], None, Dedup::Events).unwrap();
        assert_eq!(render_text(&races), "x a.c:1@1 <-> b.c:9@2 [ww/-/1]\n");
        let json: serde_json::Value = serde_json::from_str(&render_json(&races)).unwrap();
        assert_eq!(
            json,
            serde_json::json!([{
                "firstLoc": "a.c:1",
                "secondLoc": "b.c:9",
                "firstPos": 1,
                "secondPos": 2,
                "variable": "x",
                "category": "ww",
                "phase": 1
            }])
        );
    }
}
