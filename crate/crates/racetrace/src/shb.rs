//! Clock-based race flagging over one linear pass of a trace.
//!
//! Each thread carries a vector clock that advances along program order
//! and absorbs the clocks of releases it acquires after, forks that
//! created it, threads it joins, and — characteristically — the clock of
//! the last write to every variable it reads. That last rule keeps the
//! tracked order inside the set of schedulable reorderings: a read must
//! still observe the same write, so everything the writer knew orders the
//! reader.
//!
//! Per variable the pass keeps write and read history clocks (`slot ->
//! last access stamp`) and the last-write clock used for reads-from
//! transfer. An access is *flagged* when some earlier access of the same
//! variable is not covered by the current thread's clock; the flag labels
//! say what kind of partner raced (`ww`/`rw` at writes, `w` at reads).
//!
//! Three modes trade memory for information:
//!
//! * [`ShbMode::Flag`] — flags only; a flagged event has at least one
//!   concurrent partner access.
//! * [`ShbMode::FlagWrd`] — additionally flags reads whose reads-from
//!   source is another thread's write with nothing ordered in between
//!   (checked against the source stamp before the reads-from join), and
//!   records those `(write, read)` pairs.
//! * [`ShbMode::RecordAll`] — records a full clock per access (writes
//!   before their increment, reads after their reads-from join) so that
//!   [`shball_post`] can reconstruct every concurrent pair exactly; the
//!   dependency pairs are recorded too.

use std::collections::BTreeMap;

use crate::error::Error;
use crate::report::RaceCategory;
use crate::trace::{Op, Pos, Trace, VarId};
use crate::vclock::{AccessKind, VClock};

/// Analysis mode; see the module docs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShbMode {
    Flag,
    FlagWrd,
    RecordAll,
}

/// The race kinds attributed to one flagged event.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FlagCats {
    /// Write racing an earlier write.
    pub ww: bool,
    /// Write racing an earlier read.
    pub rw: bool,
    /// Read racing an earlier write.
    pub w: bool,
    /// Read in a write-read dependency race with its source.
    pub wrd: bool,
}

impl FlagCats {
    pub fn any(&self) -> bool {
        self.ww || self.rw || self.w || self.wrd
    }

    /// The partner kinds as compact letters: `r` for an earlier read,
    /// `w` for an earlier write, plus `wrd` for a dependency race.
    pub fn letters(&self) -> String {
        let mut s = String::new();
        if self.rw {
            s.push('r');
        }
        if self.ww || self.w {
            s.push('w');
        }
        if self.wrd {
            if !s.is_empty() {
                s.push(' ');
            }
            s.push_str("wrd");
        }
        s
    }
}

/// One flagged access.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Flag {
    pub pos: Pos,
    pub var: VarId,
    pub cats: FlagCats,
}

/// Result of one flagging pass.
#[derive(Clone, Debug)]
pub struct ShbRun {
    pub mode: ShbMode,
    pub flags: Vec<Flag>,
    /// `(write, read)` dependency race pairs (empty in [`ShbMode::Flag`]).
    pub wrd_pairs: Vec<(Pos, Pos)>,
    /// Per-access clocks, indexed by `pos - 1` ([`ShbMode::RecordAll`]).
    pub clocks: Option<Vec<Option<VClock>>>,
    /// Final per-variable write history clocks.
    pub write_hist: BTreeMap<VarId, VClock>,
    /// Final per-variable read history clocks.
    pub read_hist: BTreeMap<VarId, VClock>,
    /// High-water mark of simultaneously live clocks, the analysis'
    /// memory footprint in clock units.
    pub peak_clocks: usize,
}

struct VarState {
    write_hist: VClock,
    read_hist: VClock,
    last_write: VClock,
    last_write_slot: u32,
    last_write_pos: Option<Pos>,
}

impl VarState {
    fn new() -> Self {
        VarState {
            write_hist: VClock::new(),
            read_hist: VClock::new(),
            last_write: VClock::new(),
            last_write_slot: 0,
            last_write_pos: None,
        }
    }
}

/// Runs the flagging analysis. The trace must be validated.
pub fn shb_run(trace: &Trace, mode: ShbMode) -> ShbRun {
    let track_wrd = mode != ShbMode::Flag;
    let record = mode == ShbMode::RecordAll;

    let mut threads: Vec<Option<VClock>> = vec![None; trace.n_threads()];
    let mut acted: Vec<bool> = vec![false; trace.n_threads()];
    let mut released: BTreeMap<crate::trace::MutexId, VClock> = BTreeMap::new();
    let mut vars: BTreeMap<VarId, VarState> = BTreeMap::new();
    let mut flags = Vec::new();
    let mut wrd_pairs = Vec::new();
    let mut clocks = if record {
        Some(vec![None; trace.len()])
    } else {
        None
    };
    let mut clocks_recorded = 0usize;
    let mut peak_clocks = 0usize;

    let init = |threads: &mut Vec<Option<VClock>>, slot: u32| {
        let entry = &mut threads[slot as usize];
        if entry.is_none() {
            let mut c = VClock::new();
            c.set(slot, 1);
            *entry = Some(c);
        }
    };

    for e in trace.events() {
        let i = e.thread.0;
        init(&mut threads, i);
        acted[i as usize] = true;
        match e.op {
            Op::Acquire(m) => {
                if let Some(r) = released.get(&m) {
                    let r = r.clone();
                    threads[i as usize].as_mut().unwrap().join(&r);
                }
            }
            Op::Release(m) => {
                let c = threads[i as usize].as_ref().unwrap().clone();
                released.insert(m, c);
                threads[i as usize].as_mut().unwrap().inc(i);
            }
            Op::Fork(child) => {
                let mut c = threads[i as usize].as_ref().unwrap().clone();
                c.set(child.0, 1);
                threads[child.0 as usize] = Some(c);
                threads[i as usize].as_mut().unwrap().inc(i);
            }
            Op::Join(child) => {
                // Only events of the child order anything before the
                // join; a forked thread that never ran contributes
                // nothing, not even the forker's knowledge.
                if acted[child.0 as usize] {
                    let c = threads[child.0 as usize].as_ref().unwrap().clone();
                    threads[i as usize].as_mut().unwrap().join(&c);
                }
            }
            Op::Write(v) => {
                let vs = vars.entry(v).or_insert_with(VarState::new);
                let th = threads[i as usize].as_ref().unwrap();
                let cats = FlagCats {
                    ww: !vs.write_hist.le(th),
                    rw: !vs.read_hist.le(th),
                    ..FlagCats::default()
                };
                if cats.any() {
                    flags.push(Flag {
                        pos: e.pos,
                        var: v,
                        cats,
                    });
                }
                if let Some(cl) = clocks.as_mut() {
                    cl[e.pos as usize - 1] = Some(th.clone());
                    clocks_recorded += 1;
                }
                vs.last_write = th.clone();
                vs.last_write_slot = i;
                vs.last_write_pos = Some(e.pos);
                let stamp = th.get(i);
                vs.write_hist.set(i, stamp);
                threads[i as usize].as_mut().unwrap().inc(i);
            }
            Op::Read(v) => {
                let vs = vars.entry(v).or_insert_with(VarState::new);
                let th = threads[i as usize].as_mut().unwrap();
                let mut cats = FlagCats::default();
                if track_wrd {
                    if let Some(wp) = vs.last_write_pos {
                        // Source stamp not yet covered: the source write is
                        // adjacent in the tracked order (checked before the
                        // reads-from join below absorbs it).
                        if vs.last_write.get(vs.last_write_slot) > th.get(vs.last_write_slot) {
                            cats.wrd = true;
                            wrd_pairs.push((wp, e.pos));
                        }
                    }
                }
                th.join(&vs.last_write);
                if let Some(cl) = clocks.as_mut() {
                    cl[e.pos as usize - 1] = Some(th.clone());
                    clocks_recorded += 1;
                }
                cats.w = !vs.write_hist.le(th);
                if cats.any() {
                    flags.push(Flag {
                        pos: e.pos,
                        var: v,
                        cats,
                    });
                }
                let stamp = th.get(i);
                vs.read_hist.set(i, stamp);
                th.inc(i);
            }
        }
        let live = threads.iter().filter(|t| t.is_some()).count()
            + released.len()
            + 3 * vars.len()
            + clocks_recorded;
        peak_clocks = peak_clocks.max(live);
    }

    ShbRun {
        mode,
        flags,
        wrd_pairs,
        clocks,
        write_hist: vars
            .iter()
            .map(|(&v, s)| (v, s.write_hist.clone()))
            .collect(),
        read_hist: vars
            .iter()
            .map(|(&v, s)| (v, s.read_hist.clone()))
            .collect(),
        peak_clocks,
    }
}

/// Reconstructs every concurrent racing pair from a
/// [`ShbMode::RecordAll`] run.
///
/// For each flagged access `f` it scans all earlier same-variable
/// accesses `e` and keeps `(e, f)` when at least one of the two writes
/// and `e`'s recorded clock is not covered by `f`'s — i.e. the two are
/// concurrent. Dependency pairs are ordered and never show up here; they
/// are reported separately from [`ShbRun::wrd_pairs`].
pub fn shball_post(trace: &Trace, run: &ShbRun) -> Result<Vec<(Pos, Pos, RaceCategory)>, Error> {
    let clocks = run.clocks.as_ref().ok_or_else(|| {
        Error::Internal("pair reconstruction requires a record-all run".to_string())
    })?;
    let mut accesses: BTreeMap<VarId, Vec<(Pos, AccessKind)>> = BTreeMap::new();
    for e in trace.events() {
        if let Some((v, k)) = e.op.access() {
            accesses.entry(v).or_default().push((e.pos, k));
        }
    }
    let mut out = Vec::new();
    for f in &run.flags {
        let f_clock = clocks[f.pos as usize - 1]
            .as_ref()
            .expect("flagged positions are accesses");
        let f_kind = trace.event(f.pos).op.access().expect("flagged").1;
        for &(e_pos, e_kind) in accesses[&f.var].iter().take_while(|&&(p, _)| p < f.pos) {
            if e_kind != AccessKind::Write && f_kind != AccessKind::Write {
                continue;
            }
            let e_clock = clocks[e_pos as usize - 1].as_ref().expect("access");
            if !e_clock.le(f_clock) {
                let category = if e_kind == AccessKind::Write && f_kind == AccessKind::Write {
                    RaceCategory::WriteWrite
                } else {
                    RaceCategory::WriteRead
                };
                out.push((e_pos, f.pos, category));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Renders flagged events one per line: `VAR loc@pos [partners]`.
pub fn render_flags_text(trace: &Trace, run: &ShbRun) -> String {
    let mut out = String::new();
    for f in &run.flags {
        out.push_str(&format!(
            "{} {}@{} [{}]\n",
            trace.var_name(f.var),
            trace.event(f.pos).loc,
            f.pos,
            f.cats.letters()
        ));
    }
    out
}

/// Renders flagged events as a schema-stable JSON array.
pub fn render_flags_json(trace: &Trace, run: &ShbRun) -> String {
    let items: Vec<serde_json::Value> = run
        .flags
        .iter()
        .map(|f| {
            let mut kinds = Vec::new();
            if f.cats.ww {
                kinds.push("ww");
            }
            if f.cats.rw {
                kinds.push("rw");
            }
            if f.cats.w {
                kinds.push("w");
            }
            if f.cats.wrd {
                kinds.push("wrd");
            }
            serde_json::json!({
                "pos": f.pos,
                "loc": trace.event(f.pos).loc,
                "variable": trace.var_name(f.var),
                "kinds": kinds,
            })
        })
        .collect();
    serde_json::to_string_pretty(&items).expect("flag reports serialize infallibly")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::TraceBuilder;

    fn flags_of(run: &ShbRun) -> Vec<(Pos, String)> {
        run.flags
            .iter()
            .map(|f| (f.pos, f.cats.letters()))
            .collect()
    }

    #[test]
    fn flags_carry_partner_kinds() {
        let t = TraceBuilder::new()
            .write(1, "x")
            .read(1, "x")
            .write(2, "x")
            .read(2, "x")
            .read(3, "x")
            .finish();
        let run = shb_run(&t, ShbMode::Flag);
        assert_eq!(
            flags_of(&run),
            vec![
                (3, "rw".to_string()),
                (4, "w".to_string()),
                (5, "w".to_string()),
            ]
        );
        assert!(run.write_hist[&VarId(0)].eq_extended(&VClock::from_stamps(&[1, 1, 0])));
        assert!(run.read_hist[&VarId(0)].eq_extended(&VClock::from_stamps(&[2, 2, 1])));
        assert!(run.wrd_pairs.is_empty());
    }

    #[test]
    fn reads_from_join_orders_readers() {
        // After t2 reads x it inherits t1's history, so its write of y is
        // ordered after t1's and nothing on y is flagged.
        let t = TraceBuilder::new()
            .write(1, "y")
            .write(1, "x")
            .read(2, "x")
            .write(2, "y")
            .finish();
        let run = shb_run(&t, ShbMode::Flag);
        assert!(flags_of(&run).is_empty());
    }

    #[test]
    fn wrd_mode_flags_adjacent_cross_thread_sources() {
        let t = TraceBuilder::new().write(1, "x").read(2, "x").finish();
        let plain = shb_run(&t, ShbMode::Flag);
        assert!(plain.flags.is_empty());
        let wrd = shb_run(&t, ShbMode::FlagWrd);
        assert_eq!(flags_of(&wrd), vec![(2, "wrd".to_string())]);
        assert_eq!(wrd.wrd_pairs, vec![(1, 2)]);
    }

    #[test]
    fn wrd_check_respects_intermediaries() {
        // A lock hand-off between the write and the read orders an event
        // strictly between source and read, so no dependency race.
        let t = TraceBuilder::new()
            .write(1, "x")
            .release(1, "m")
            .acquire(2, "m")
            .read(2, "x")
            .finish();
        let run = shb_run(&t, ShbMode::FlagWrd);
        assert!(run.wrd_pairs.is_empty());
        assert!(run.flags.is_empty());
    }

    #[test]
    fn record_all_reconstructs_concurrent_pairs() {
        let t = TraceBuilder::new()
            .write(1, "x")
            .write(2, "x")
            .read(2, "x")
            .read(1, "x")
            .finish();
        let run = shb_run(&t, ShbMode::RecordAll);
        let pairs = shball_post(&t, &run).unwrap();
        assert_eq!(
            pairs,
            vec![
                (1, 2, RaceCategory::WriteWrite),
                (1, 3, RaceCategory::WriteRead),
            ]
        );
        // The dependency pair is reported from the pass itself.
        assert_eq!(run.wrd_pairs, vec![(2, 4)]);
    }

    #[test]
    fn shball_post_requires_clocks() {
        let t = TraceBuilder::new().write(1, "x").finish();
        let run = shb_run(&t, ShbMode::Flag);
        assert!(matches!(shball_post(&t, &run), Err(Error::Internal(_))));
    }

    #[test]
    fn fork_join_are_synchronizing() {
        let t = TraceBuilder::new()
            .write(1, "x")
            .fork(1, 2)
            .write(2, "x")
            .join(1, 2)
            .write(1, "x")
            .finish();
        let run = shb_run(&t, ShbMode::FlagWrd);
        assert!(run.flags.is_empty());
    }

    #[test]
    fn render_shapes() {
        let t = TraceBuilder::new()
            .write_at(1, "x", "a.c:3")
            .write_at(2, "x", "b.c:7")
            .finish();
        let run = shb_run(&t, ShbMode::Flag);
        assert_eq!(render_flags_text(&t, &run), "x b.c:7@2 [w]\n");
        let v: serde_json::Value = serde_json::from_str(&render_flags_json(&t, &run)).unwrap();
        assert_eq!(v[0]["kinds"], serde_json::json!(["ww"]));
    }
}
