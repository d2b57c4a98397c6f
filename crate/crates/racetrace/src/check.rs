//! Differential verification of every analysis against the reference
//! oracle, over generated traces.
//!
//! [`Checker::verify`] runs the full battery on one trace:
//!
//! * the two-phase pair analysis (both modes) must reproduce the oracle's
//!   concurrent pair sets and race sets exactly;
//! * the exhaustive recording pass must reproduce the concurrent subset;
//! * the flagging pass must flag exactly the events that have a racing
//!   partner, and the dependency pair lists of every analysis must agree
//!   with the oracle's;
//! * stepwise structural invariants: live epoch sets stay within their
//!   per-thread bounds, hold pairwise-concurrent epochs (unoptimized
//!   mode), and contain exactly the accesses with no ordered successor;
//!   edge constraints are sound ordering facts; lockset classification
//!   partitions every report.
//!
//! [`run_check`] sweeps a seed range of generated configurations and, on
//! the first failure, greedily shrinks the trace to a minimal reproducer.
//! The `corrupt` switch deliberately mutilates one engine result so the
//! harness can prove it would catch a regression.

use std::collections::BTreeSet;

use crate::generator::{corpus_config, generate};
use crate::lockset::Locksets;
use crate::oracle::Oracle;
use crate::postprocess::{eliminate, expand};
use crate::report::{reported_races, Dedup, RaceCategory};
use crate::shb::{shb_run, shball_post, ShbMode};
use crate::shbee::{shbee_run, ShbeeEngine, ShbeeOptions};
use crate::trace::{Op, Pos, Trace, VarId};
use crate::vclock::AccessKind;

/// Differential checker; `corrupt` sabotages one engine output so the
/// harness itself can be tested.
#[derive(Clone, Copy, Debug, Default)]
pub struct Checker {
    pub corrupt: bool,
}

type Invariant = Result<(), String>;

fn sorted<T: Ord>(mut v: Vec<T>) -> Vec<T> {
    v.sort();
    v
}

impl Checker {
    /// Runs everything; the trace must validate strictly.
    pub fn verify(&self, t: &Trace) -> Invariant {
        let oracle = Oracle::new(t).map_err(|e| format!("oracle construction: {e}"))?;
        self.differential(t, &oracle)?;
        self.invariants(t, &oracle)
    }

    /// Output equalities between the analyses and the oracle.
    pub fn differential(&self, t: &Trace, oracle: &Oracle) -> Invariant {
        let mut unopt = shbee_run(t, ShbeeOptions::default());
        if self.corrupt {
            for vp in unopt.vars.values_mut() {
                vp.conc.pop();
            }
        }
        let opt = shbee_run(
            t,
            ShbeeOptions {
                optimized: true,
                record: true,
            },
        );

        // Post-processed pair sets equal the oracle's concurrent pairs,
        // variable by variable (unoptimized mode sees read-read pairs too).
        for v in 0..t.n_vars() as u32 {
            let var = VarId(v);
            let got: Vec<(Pos, Pos)> = match unopt.vars.get(&var) {
                None => Vec::new(),
                Some(vp) => {
                    let exp = expand(&vp.conc, &vp.edges);
                    eliminate(&exp.pairs, &unopt.clocks)
                        .iter()
                        .map(|(a, b)| (a.pos, b.pos))
                        .collect()
                }
            };
            let want = oracle.all_conc(var);
            if sorted(got.clone()) != want {
                return Err(format!(
                    "concurrent pairs of '{}' diverge: analysis {:?}, oracle {:?}",
                    t.var_name(var),
                    sorted(got),
                    want
                ));
            }
        }

        // Assembled race reports equal the oracle race set in both modes.
        let want_races: Vec<(Pos, Pos, RaceCategory)> = oracle
            .race_set()
            .into_iter()
            .map(|r| (r.first, r.second, r.category))
            .collect();
        for (name, run) in [("unoptimized", &unopt), ("optimized", &opt)] {
            let races = reported_races(t, run, true, None, Dedup::Events)
                .map_err(|e| format!("{name} assembly: {e}"))?;
            let got: Vec<(Pos, Pos, RaceCategory)> = races
                .iter()
                .map(|r| (r.first_pos, r.second_pos, r.category))
                .collect();
            if sorted(got.clone()) != want_races {
                return Err(format!(
                    "{name} race set diverges: analysis {:?}, oracle {:?}",
                    sorted(got),
                    want_races
                ));
            }
        }

        // The exhaustive recording pass reproduces the concurrent subset.
        let recorded = shb_run(t, ShbMode::RecordAll);
        let mut shball: Vec<(Pos, Pos, RaceCategory)> =
            shball_post(t, &recorded).map_err(|e| format!("recorded pairing: {e}"))?;
        if self.corrupt {
            shball.pop();
        }
        let want_conc: Vec<(Pos, Pos, RaceCategory)> = want_races
            .iter()
            .copied()
            .filter(|&(_, _, c)| c != RaceCategory::WriteReadDependency)
            .collect();
        if sorted(shball) != want_conc {
            return Err("recorded pairing diverges from the oracle's concurrent races".into());
        }

        // Flag sets: exactly the later endpoints of oracle races.
        let later_conc: BTreeSet<Pos> = want_conc.iter().map(|&(_, s, _)| s).collect();
        let later_wrd: BTreeSet<Pos> = want_races
            .iter()
            .filter(|&&(_, _, c)| c == RaceCategory::WriteReadDependency)
            .map(|&(_, s, _)| s)
            .collect();
        let flags_plain: BTreeSet<Pos> = shb_run(t, ShbMode::Flag)
            .flags
            .iter()
            .map(|f| f.pos)
            .collect();
        if flags_plain != later_conc {
            return Err(format!(
                "plain flag set diverges: flags {flags_plain:?}, oracle later endpoints \
                 {later_conc:?}"
            ));
        }
        let with_wrd = shb_run(t, ShbMode::FlagWrd);
        let flags_wrd: BTreeSet<Pos> = with_wrd.flags.iter().map(|f| f.pos).collect();
        let want_wrd_flags: BTreeSet<Pos> = later_conc.union(&later_wrd).copied().collect();
        if flags_wrd != want_wrd_flags {
            return Err(format!(
                "dependency-aware flag set diverges: flags {flags_wrd:?}, expected \
                 {want_wrd_flags:?}"
            ));
        }

        // Dependency pair lists of every analysis agree with the oracle.
        let want_wrd: Vec<(Pos, Pos)> = want_races
            .iter()
            .filter(|&&(_, _, c)| c == RaceCategory::WriteReadDependency)
            .map(|&(f, s, _)| (f, s))
            .collect();
        for (name, got) in [
            ("flagging", &with_wrd.wrd_pairs),
            ("recording", &recorded.wrd_pairs),
            ("pair analysis", &unopt.wrd_pairs),
            ("optimized pair analysis", &opt.wrd_pairs),
        ] {
            if sorted(got.clone()) != want_wrd {
                return Err(format!(
                    "{name} dependency pairs diverge: {:?} vs oracle {:?}",
                    sorted(got.clone()),
                    want_wrd
                ));
            }
        }
        Ok(())
    }

    /// Structural invariants of the engines themselves.
    pub fn invariants(&self, t: &Trace, oracle: &Oracle) -> Invariant {
        let n = t.len();

        // Access index per variable for the membership characterization.
        let mut accesses: Vec<Vec<(Pos, AccessKind)>> = vec![Vec::new(); t.n_vars()];
        for e in t.events() {
            if let Some((v, k)) = e.op.access() {
                accesses[v.0 as usize].push((e.pos, k));
            }
        }

        for optimized in [false, true] {
            let mut engine = ShbeeEngine::new(
                t,
                ShbeeOptions {
                    optimized,
                    record: true,
                },
            );
            for e in t.events() {
                engine.step(e);
                let factor = if optimized { 2 } else { 1 };
                for v in 0..t.n_vars() as u32 {
                    let var = VarId(v);
                    let rw = engine.var_rw(var);
                    if rw.len() > factor * engine.threads_seen() {
                        return Err(format!(
                            "live epoch set of '{}' has {} entries after position {} \
                             (bound {})",
                            t.var_name(var),
                            rw.len(),
                            e.pos,
                            factor * engine.threads_seen()
                        ));
                    }
                    // Membership: exactly the accesses with no ordered
                    // same-variable successor yet (writes are permanent in
                    // optimized mode unless a later write orders them).
                    let live: BTreeSet<Pos> = rw.iter().map(|ep| ep.pos).collect();
                    for &(g, gk) in accesses[v as usize]
                        .iter()
                        .take_while(|&&(p, _)| p <= e.pos)
                    {
                        let evicted = accesses[v as usize]
                            .iter()
                            .take_while(|&&(p, _)| p <= e.pos)
                            .any(|&(h, hk)| {
                                h > g
                                    && oracle.happens_before(g, h)
                                    && !(optimized
                                        && gk == AccessKind::Write
                                        && hk == AccessKind::Read)
                            });
                        if live.contains(&g) == evicted {
                            return Err(format!(
                                "membership of access {g} in '{}' after position {} is {} \
                                 (optimized={optimized})",
                                t.var_name(var),
                                e.pos,
                                !evicted
                            ));
                        }
                    }
                    if !optimized {
                        for (i, a) in rw.iter().enumerate() {
                            for b in &rw[i + 1..] {
                                if !oracle.concurrent(a.pos, b.pos) {
                                    return Err(format!(
                                        "live epochs {} and {} of '{}' are ordered",
                                        a.pos,
                                        b.pos,
                                        t.var_name(var)
                                    ));
                                }
                            }
                        }
                    }
                }
            }
            let run = engine.finish();

            for (var, vp) in &run.vars {
                // Edge constraints are sound ordering facts.
                for (&succ, preds) in &vp.edges {
                    for p in preds {
                        if !oracle.happens_before(p.pos, succ) {
                            return Err(format!(
                                "edge {} before {} of '{}' is not an ordering fact",
                                p.pos,
                                succ,
                                t.var_name(*var)
                            ));
                        }
                    }
                }
                // No pair is enqueued twice, and the worklist stays
                // quadratic.
                let exp = expand(&vp.conc, &vp.edges);
                if exp.enqueued != exp.pairs.len() || exp.enqueued > n * n {
                    return Err("expansion enqueued a pair twice or overflowed".into());
                }
                if optimized {
                    for (a, b) in &vp.conc {
                        if !a.is_write() && !b.is_write() {
                            return Err(format!(
                                "optimized pass paired two reads at {} and {}",
                                a.pos, b.pos
                            ));
                        }
                    }
                    // Optimized direct pairs are concurrent or dependency
                    // races; nothing else.
                    let wrd: BTreeSet<(Pos, Pos)> =
                        oracle.wrd_pairs_of(*var).into_iter().collect();
                    for (a, b) in &vp.conc {
                        if !oracle.concurrent(a.pos, b.pos) && !wrd.contains(&(a.pos, b.pos)) {
                            return Err(format!(
                                "optimized pair ({},{}) of '{}' is ordered and not a \
                                 dependency race",
                                a.pos,
                                b.pos,
                                t.var_name(*var)
                            ));
                        }
                    }
                }
            }
        }

        // Lockset classification succeeds on, and partitions, the report.
        let unopt = shbee_run(t, ShbeeOptions::default());
        let locksets = Locksets::compute(t);
        let races = reported_races(t, &unopt, true, Some(&locksets), Dedup::Events)
            .map_err(|e| format!("lockset classification failed: {e}"))?;
        let classified = races.iter().filter(|r| r.lockset_class.is_some()).count();
        if classified != races.len() {
            return Err("lockset classes do not partition the report".into());
        }

        // Determinism: a second run renders identically.
        let again = shbee_run(t, ShbeeOptions::default());
        let r1 = reported_races(t, &unopt, true, None, Dedup::Events).unwrap();
        let r2 = reported_races(t, &again, true, None, Dedup::Events).unwrap();
        if r1 != r2 {
            return Err("two identical runs produced different reports".into());
        }

        // Wire format round-trips.
        match Trace::parse_str(&t.render()) {
            Ok(back) if back == *t => {}
            _ => return Err("render/parse round trip changed the trace".into()),
        }

        // Truncating trailing releases is repairable back to validity.
        let tail_releases = t
            .events()
            .iter()
            .rev()
            .take_while(|e| matches!(e.op, Op::Release(_)))
            .count();
        if tail_releases > 0 {
            let truncated = rebuild_prefix(t, n - tail_releases);
            if truncated.validate(false).is_ok() {
                return Err("truncated trace should not validate strictly".into());
            }
            match truncated.validate(true) {
                Ok(fixed) => {
                    if fixed.validate(false).is_err() {
                        return Err("repaired trace does not validate strictly".into());
                    }
                }
                Err(e) => return Err(format!("repair failed: {e}")),
            }
        }

        // The prefilter keeps exactly the cross-thread variables and
        // stays valid.
        let filtered = crate::filter::filter_shared(t);
        if filtered.validate(false).is_err() {
            return Err("filtered trace does not validate".into());
        }
        let sync_in = t.events().iter().filter(|e| e.op.access().is_none()).count();
        let sync_out = filtered
            .events()
            .iter()
            .filter(|e| e.op.access().is_none())
            .count();
        if sync_in != sync_out {
            return Err("filter changed synchronization events".into());
        }
        for v in 0..t.n_vars() as u32 {
            let var = VarId(v);
            let threads: BTreeSet<u32> = t
                .events()
                .iter()
                .filter(|e| matches!(e.op.access(), Some((w, _)) if w == var))
                .map(|e| e.thread.0)
                .collect();
            let retained = filtered
                .events()
                .iter()
                .any(|e| matches!(e.op.access(), Some((w, _)) if filtered.var_name(w) == t.var_name(var)));
            if retained != (threads.len() >= 2) {
                return Err(format!(
                    "filter retention of '{}' is wrong (accessing threads: {})",
                    t.var_name(var),
                    threads.len()
                ));
            }
        }

        Ok(())
    }
}

/// Checks one trace with all analyses; `Ok` means every differential
/// equality and structural invariant held.
pub fn verify_trace(t: &Trace) -> Invariant {
    Checker::default().verify(t)
}

/// Summary of a completed sweep.
#[derive(Clone, Copy, Debug, Default)]
pub struct CheckReport {
    pub traces: usize,
    pub events: usize,
}

/// A failing sweep: the seed, the violated property, and a shrunken
/// reproducer in wire format.
#[derive(Clone, Debug)]
pub struct CheckFailure {
    pub seed: u64,
    pub message: String,
    pub csv: String,
}

/// Sweeps generated traces through [`Checker::verify`].
pub fn run_check(
    seeds: std::ops::Range<u64>,
    max_events: u32,
    max_threads: u32,
    corrupt: bool,
) -> Result<CheckReport, CheckFailure> {
    let checker = Checker { corrupt };
    let mut report = CheckReport::default();
    for seed in seeds {
        let cfg = corpus_config(seed, max_events, max_threads);
        let t = generate(&cfg).map_err(|e| CheckFailure {
            seed,
            message: format!("generation failed: {e}"),
            csv: String::new(),
        })?;
        if let Err(message) = checker.verify(&t) {
            let minimal = shrink_failure(&t, checker);
            let message = checker.verify(&minimal).err().unwrap_or(message);
            return Err(CheckFailure {
                seed,
                message,
                csv: minimal.render(),
            });
        }
        report.traces += 1;
        report.events += t.len();
    }
    Ok(report)
}

/// Greedy event-removal shrinking: drop any single event while the trace
/// stays valid and the failure reproduces.
fn shrink_failure(t: &Trace, checker: Checker) -> Trace {
    let mut cur = t.clone();
    loop {
        let mut improved = false;
        for i in 0..cur.len() {
            let cand = rebuild_without(&cur, i);
            if cand.validate(false).is_err() {
                continue;
            }
            if checker.verify(&cand).is_err() {
                cur = cand;
                improved = true;
                break;
            }
        }
        if !improved {
            return cur;
        }
    }
}

fn rebuild_without(t: &Trace, skip: usize) -> Trace {
    rebuild(t, |j| j != skip)
}

fn rebuild_prefix(t: &Trace, len: usize) -> Trace {
    rebuild(t, |j| j < len)
}

fn rebuild(t: &Trace, keep: impl Fn(usize) -> bool) -> Trace {
    let mut b = crate::trace::TraceBuilder::new();
    for (j, e) in t.events().iter().enumerate() {
        if !keep(j) {
            continue;
        }
        let tid = t.thread_tid(e.thread);
        match e.op {
            Op::Read(v) => b.read(tid, t.var_name(v)),
            Op::Write(v) => b.write(tid, t.var_name(v)),
            Op::Acquire(m) => b.acquire(tid, t.mutex_name(m)),
            Op::Release(m) => b.release(tid, t.mutex_name(m)),
            Op::Fork(c) => b.fork(tid, t.thread_tid(c)),
            Op::Join(c) => b.join(tid, t.thread_tid(c)),
        };
    }
    b.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn a_healthy_sweep_passes() {
        let report = run_check(0..300, 20, 4, false).expect("all invariants hold");
        assert_eq!(report.traces, 300);
        assert!(report.events > 0);
    }

    #[test]
    fn a_corrupted_engine_is_caught_and_shrunk() {
        let failure = run_check(0..300, 20, 4, true).expect_err("corruption must be caught");
        assert!(!failure.csv.is_empty());
        let t = Trace::parse_str(&failure.csv).unwrap();
        assert!(t.validate(false).is_ok());
        // The reproducer is minimal: removing any further event loses
        // the failure or validity.
        let checker = Checker { corrupt: true };
        assert!(checker.verify(&t).is_err());
        for i in 0..t.len() {
            let cand = rebuild_without(&t, i);
            if cand.validate(false).is_ok() {
                assert!(checker.verify(&cand).is_ok());
            }
        }
    }

    #[test]
    fn hand_written_racy_and_clean_traces_verify() {
        for csv in [
            "1,wr,x\n2,rd,x\n2,wr,x\n1,rd,x\n",
            "1,acq,m\n1,wr,x\n1,rel,m\n2,acq,m\n2,wr,x\n2,rel,m\n",
            "1,fork,2\n2,wr,x\n1,join,2\n1,rd,x\n",
            "1,wr,x\n1,fork,2\n2,rd,x\n2,wr,y\n1,wr,y\n1,join,2\n",
        ] {
            let t = Trace::parse_str(csv).unwrap().validate(false).unwrap();
            verify_trace(&t).unwrap();
        }
    }
}
