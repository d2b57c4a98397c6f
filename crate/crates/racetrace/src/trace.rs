//! Trace model: events, CSV parsing and rendering, validation, projection.
//!
//! A trace is a finite sequence of events, each performed by one thread.
//! Events carry a 1-based position `pos` (their index in the trace), the
//! acting thread, an operation, and a source location string used in race
//! reports.
//!
//! The CSV wire format is one event per line, `tid,op,target[,loc]`:
//!
//! ```text
//! # comment lines start with '#'; blank lines are skipped
//! 1,wr,x,main.c:12
//! 2,acq,m
//! 2,rd,x
//! 2,rel,m
//! ```
//!
//! `tid` is a decimal thread id, `op` one of `rd`, `wr`, `acq`, `rel`,
//! `fork`, `join`. For accesses the target names a variable, for `acq`/
//! `rel` a mutex, and for `fork`/`join` it is the decimal id of the child
//! thread (which must differ from `tid`). A missing `loc` defaults to the
//! decimal rendering of the event's position. Positions count event lines
//! only; comments and blank lines do not shift them.
//!
//! Threads, variables, and mutexes are interned into dense ids in order of
//! first appearance; a `fork`/`join` target counts as an appearance of the
//! child thread.

use std::collections::HashMap;
use std::fmt;

use crate::error::Error;
use crate::vclock::AccessKind;

/// Dense thread slot, assigned by order of first appearance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ThreadId(pub u32);

/// Dense variable id, assigned by order of first appearance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub u32);

/// Dense mutex id, assigned by order of first appearance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MutexId(pub u32);

/// 1-based index of an event within its trace.
pub type Pos = u32;

/// One trace operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Read(VarId),
    Write(VarId),
    Acquire(MutexId),
    Release(MutexId),
    Fork(ThreadId),
    Join(ThreadId),
}

impl Op {
    /// The accessed variable and kind, for read/write events.
    pub fn access(&self) -> Option<(VarId, AccessKind)> {
        match *self {
            Op::Read(v) => Some((v, AccessKind::Read)),
            Op::Write(v) => Some((v, AccessKind::Write)),
            _ => None,
        }
    }

    fn mnemonic(&self) -> &'static str {
        match self {
            Op::Read(_) => "rd",
            Op::Write(_) => "wr",
            Op::Acquire(_) => "acq",
            Op::Release(_) => "rel",
            Op::Fork(_) => "fork",
            Op::Join(_) => "join",
        }
    }
}

/// One event of a trace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    pub pos: Pos,
    pub thread: ThreadId,
    pub op: Op,
    pub loc: String,
}

/// A validated-or-not sequence of events plus the interning tables that
/// map dense ids back to the names used in the input.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    events: Vec<Event>,
    thread_tids: Vec<u64>,
    var_names: Vec<String>,
    mutex_names: Vec<String>,
}

impl Trace {
    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Number of distinct threads (including fork/join targets).
    pub fn n_threads(&self) -> usize {
        self.thread_tids.len()
    }

    pub fn n_vars(&self) -> usize {
        self.var_names.len()
    }

    pub fn n_mutexes(&self) -> usize {
        self.mutex_names.len()
    }

    /// The external decimal id of a thread slot.
    pub fn thread_tid(&self, t: ThreadId) -> u64 {
        self.thread_tids[t.0 as usize]
    }

    pub fn var_name(&self, v: VarId) -> &str {
        &self.var_names[v.0 as usize]
    }

    pub fn mutex_name(&self, m: MutexId) -> &str {
        &self.mutex_names[m.0 as usize]
    }

    /// The event at 1-based position `pos`.
    pub fn event(&self, pos: Pos) -> &Event {
        &self.events[pos as usize - 1]
    }

    /// The events of one thread, in trace order.
    ///
    /// Positions are preserved from the full trace, so interleaving the
    /// projections of all threads by position reconstructs the trace.
    pub fn project(&self, t: ThreadId) -> Vec<&Event> {
        self.events.iter().filter(|e| e.thread == t).collect()
    }

    /// Parses the CSV wire format. See the module docs for the grammar.
    pub fn parse_str(input: &str) -> Result<Trace, Error> {
        let mut b = TraceBuilder::new();
        for (idx, raw) in input.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() < 3 || fields.len() > 4 {
                return Err(Error::parse(
                    line_no,
                    format!("expected 3 or 4 fields, found {}", fields.len()),
                ));
            }
            let tid: u64 = fields[0]
                .parse()
                .map_err(|_| Error::parse(line_no, format!("invalid thread id '{}'", fields[0])))?;
            let target = fields[2];
            if target.is_empty() {
                return Err(Error::parse(line_no, "empty target"));
            }
            let loc = fields.get(3).map(|s| s.to_string());
            match fields[1] {
                "rd" => {
                    b.push_access(tid, target, AccessKind::Read, loc);
                }
                "wr" => {
                    b.push_access(tid, target, AccessKind::Write, loc);
                }
                "acq" => {
                    b.push_sync(tid, target, true, loc);
                }
                "rel" => {
                    b.push_sync(tid, target, false, loc);
                }
                op @ ("fork" | "join") => {
                    let child: u64 = target.parse().map_err(|_| {
                        Error::parse(line_no, format!("invalid {op} target '{target}'"))
                    })?;
                    if child == tid {
                        return Err(Error::parse(
                            line_no,
                            format!("{op} target equals acting thread {tid}"),
                        ));
                    }
                    b.push_thread_op(tid, child, op == "fork", loc);
                }
                op => return Err(Error::parse(line_no, format!("unknown operation '{op}'"))),
            }
        }
        Ok(b.finish())
    }

    /// Renders the trace in the CSV wire format, one event per line with
    /// the location always spelled out. `parse_str` inverts this exactly.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            let tid = self.thread_tid(e.thread);
            let target = match e.op {
                Op::Read(v) | Op::Write(v) => self.var_name(v).to_string(),
                Op::Acquire(m) | Op::Release(m) => self.mutex_name(m).to_string(),
                Op::Fork(t) | Op::Join(t) => self.thread_tid(t).to_string(),
            };
            out.push_str(&format!("{tid},{},{target},{}\n", e.op.mnemonic(), e.loc));
        }
        out
    }

    /// Checks well-formedness of the synchronization skeleton:
    ///
    /// * a mutex is never acquired while held, and only released by its
    ///   current holder;
    /// * a thread is forked at most once, and not after it already acted;
    /// * a joined thread performs no further events, and is joined once.
    ///
    /// Threads whose first appearance is not a fork target simply exist
    /// from the start (roots); a trace may have several.
    ///
    /// With `repair`, a trace whose only defect is mutexes still held at
    /// the end is fixed up by appending the missing releases (ordered by
    /// holder's thread slot, then acquisition order); anything else is
    /// still an error. The result of a successful repair validates
    /// strictly.
    pub fn validate(&self, repair: bool) -> Result<Trace, Error> {
        // (holder, acquisition pos) per held mutex
        let mut held: HashMap<MutexId, (ThreadId, Pos)> = HashMap::new();
        let mut forked: HashMap<ThreadId, Pos> = HashMap::new();
        let mut joined: HashMap<ThreadId, Pos> = HashMap::new();
        let mut acted: HashMap<ThreadId, Pos> = HashMap::new();

        for e in &self.events {
            let tid = self.thread_tid(e.thread);
            if let Some(&jp) = joined.get(&e.thread) {
                return Err(Error::validation(
                    e.pos,
                    format!("thread {tid} acts after being joined at position {jp}"),
                ));
            }
            match e.op {
                Op::Acquire(m) => {
                    if let Some(&(holder, at)) = held.get(&m) {
                        return Err(Error::validation(
                            e.pos,
                            format!(
                                "mutex '{}' acquired while held by thread {} since position {at}",
                                self.mutex_name(m),
                                self.thread_tid(holder)
                            ),
                        ));
                    }
                    held.insert(m, (e.thread, e.pos));
                }
                Op::Release(m) => match held.get(&m) {
                    None => {
                        return Err(Error::validation(
                            e.pos,
                            format!("mutex '{}' released while not held", self.mutex_name(m)),
                        ));
                    }
                    Some(&(holder, _)) if holder != e.thread => {
                        return Err(Error::validation(
                            e.pos,
                            format!(
                                "mutex '{}' released by thread {tid} but held by thread {}",
                                self.mutex_name(m),
                                self.thread_tid(holder)
                            ),
                        ));
                    }
                    Some(_) => {
                        held.remove(&m);
                    }
                },
                Op::Fork(child) => {
                    if let Some(&fp) = forked.get(&child) {
                        return Err(Error::validation(
                            e.pos,
                            format!(
                                "thread {} forked again (first fork at position {fp})",
                                self.thread_tid(child)
                            ),
                        ));
                    }
                    if let Some(&ap) = acted.get(&child) {
                        return Err(Error::validation(
                            e.pos,
                            format!(
                                "thread {} forked after its first event at position {ap}",
                                self.thread_tid(child)
                            ),
                        ));
                    }
                    forked.insert(child, e.pos);
                }
                Op::Join(child) => {
                    if let Some(&jp) = joined.get(&child) {
                        return Err(Error::validation(
                            e.pos,
                            format!(
                                "thread {} joined again (first join at position {jp})",
                                self.thread_tid(child)
                            ),
                        ));
                    }
                    joined.insert(child, e.pos);
                }
                Op::Read(_) | Op::Write(_) => {}
            }
            acted.entry(e.thread).or_insert(e.pos);
        }

        if held.is_empty() {
            return Ok(self.clone());
        }
        if !repair {
            let (&m, &(_, at)) = held
                .iter()
                .min_by_key(|(_, &(_, at))| at)
                .expect("held is nonempty");
            return Err(Error::validation(
                at,
                format!(
                    "mutex '{}' acquired at position {at} is never released",
                    self.mutex_name(m)
                ),
            ));
        }

        let mut fixed = self.clone();
        let mut pending: Vec<(ThreadId, Pos, MutexId)> = held
            .into_iter()
            .map(|(m, (t, at))| (t, at, m))
            .collect();
        pending.sort();
        for (t, _, m) in pending {
            let pos = fixed.events.len() as Pos + 1;
            fixed.events.push(Event {
                pos,
                thread: t,
                op: Op::Release(m),
                loc: pos.to_string(),
            });
        }
        Ok(fixed)
    }
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Incremental construction of a [`Trace`] with interning by name.
///
/// External thread ids are arbitrary `u64`s; variables and mutexes are
/// named by strings (their namespaces are independent, so `x` may name
/// both a variable and a mutex). Events get consecutive positions starting
/// at 1 and, unless given one, a location equal to the decimal position.
#[derive(Debug, Default)]
pub struct TraceBuilder {
    trace: Trace,
    threads: HashMap<u64, ThreadId>,
    vars: HashMap<String, VarId>,
    mutexes: HashMap<String, MutexId>,
}

impl TraceBuilder {
    pub fn new() -> Self {
        TraceBuilder::default()
    }

    fn thread(&mut self, tid: u64) -> ThreadId {
        if let Some(&t) = self.threads.get(&tid) {
            return t;
        }
        let t = ThreadId(self.trace.thread_tids.len() as u32);
        self.trace.thread_tids.push(tid);
        self.threads.insert(tid, t);
        t
    }

    fn var(&mut self, name: &str) -> VarId {
        if let Some(&v) = self.vars.get(name) {
            return v;
        }
        let v = VarId(self.trace.var_names.len() as u32);
        self.trace.var_names.push(name.to_string());
        self.vars.insert(name.to_string(), v);
        v
    }

    fn mutex(&mut self, name: &str) -> MutexId {
        if let Some(&m) = self.mutexes.get(name) {
            return m;
        }
        let m = MutexId(self.trace.mutex_names.len() as u32);
        self.trace.mutex_names.push(name.to_string());
        self.mutexes.insert(name.to_string(), m);
        m
    }

    fn push(&mut self, tid: u64, op: Op, loc: Option<String>) -> &mut Self {
        let pos = self.trace.events.len() as Pos + 1;
        let thread = self.thread(tid);
        let loc = loc.unwrap_or_else(|| pos.to_string());
        self.trace.events.push(Event {
            pos,
            thread,
            op,
            loc,
        });
        self
    }

    fn push_access(
        &mut self,
        tid: u64,
        var: &str,
        kind: AccessKind,
        loc: Option<String>,
    ) -> &mut Self {
        let v = self.var(var);
        let op = match kind {
            AccessKind::Read => Op::Read(v),
            AccessKind::Write => Op::Write(v),
        };
        self.push(tid, op, loc)
    }

    fn push_sync(&mut self, tid: u64, mutex: &str, acquire: bool, loc: Option<String>) -> &mut Self {
        let m = self.mutex(mutex);
        let op = if acquire { Op::Acquire(m) } else { Op::Release(m) };
        self.push(tid, op, loc)
    }

    fn push_thread_op(&mut self, tid: u64, child: u64, fork: bool, loc: Option<String>) -> &mut Self {
        // Intern the parent first so slot order follows appearance order.
        self.thread(tid);
        let c = self.thread(child);
        let op = if fork { Op::Fork(c) } else { Op::Join(c) };
        self.push(tid, op, loc)
    }

    pub fn read(&mut self, tid: u64, var: &str) -> &mut Self {
        self.push_access(tid, var, AccessKind::Read, None)
    }

    pub fn write(&mut self, tid: u64, var: &str) -> &mut Self {
        self.push_access(tid, var, AccessKind::Write, None)
    }

    pub fn read_at(&mut self, tid: u64, var: &str, loc: &str) -> &mut Self {
        self.push_access(tid, var, AccessKind::Read, Some(loc.to_string()))
    }

    pub fn write_at(&mut self, tid: u64, var: &str, loc: &str) -> &mut Self {
        self.push_access(tid, var, AccessKind::Write, Some(loc.to_string()))
    }

    pub fn acquire(&mut self, tid: u64, mutex: &str) -> &mut Self {
        self.push_sync(tid, mutex, true, None)
    }

    pub fn release(&mut self, tid: u64, mutex: &str) -> &mut Self {
        self.push_sync(tid, mutex, false, None)
    }

    pub fn acquire_at(&mut self, tid: u64, mutex: &str, loc: &str) -> &mut Self {
        self.push_sync(tid, mutex, true, Some(loc.to_string()))
    }

    pub fn release_at(&mut self, tid: u64, mutex: &str, loc: &str) -> &mut Self {
        self.push_sync(tid, mutex, false, Some(loc.to_string()))
    }

    pub fn fork(&mut self, tid: u64, child: u64) -> &mut Self {
        self.push_thread_op(tid, child, true, None)
    }

    pub fn join(&mut self, tid: u64, child: u64) -> &mut Self {
        self.push_thread_op(tid, child, false, None)
    }

    pub fn fork_at(&mut self, tid: u64, child: u64, loc: &str) -> &mut Self {
        self.push_thread_op(tid, child, true, Some(loc.to_string()))
    }

    pub fn join_at(&mut self, tid: u64, child: u64, loc: &str) -> &mut Self {
        self.push_thread_op(tid, child, false, Some(loc.to_string()))
    }

    pub fn finish(&mut self) -> Trace {
        std::mem::take(&mut self.trace)
    }
}
