//! Seeded random generation of valid traces.
//!
//! The generator schedules weighted operations over a fixed thread count,
//! only ever proposing moves that keep the trace valid: mutexes are
//! acquired only when free and released only by their holder, a join
//! target must hold no locks, forks happen before the child's first
//! event. Acquires are budgeted so their matching releases still fit into
//! the requested event count, and any locks still held when the budget
//! runs out are released in a deterministic cleanup tail — the result
//! always has exactly `events` events and validates strictly.
//!
//! Generation is a pure function of the configuration: the same
//! [`GenConfig`] yields byte-identical traces.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::trace::{Trace, TraceBuilder};

/// Relative likelihoods of each operation kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GenWeights {
    pub read: u32,
    pub write: u32,
    pub acquire: u32,
    pub release: u32,
    pub fork: u32,
    pub join: u32,
}

impl Default for GenWeights {
    fn default() -> Self {
        GenWeights {
            read: 4,
            write: 4,
            acquire: 2,
            release: 2,
            fork: 1,
            join: 1,
        }
    }
}

/// Generator configuration.
#[derive(Clone, Copy, Debug)]
pub struct GenConfig {
    pub seed: u64,
    pub threads: u32,
    pub variables: u32,
    pub mutexes: u32,
    /// Exact number of events in the generated trace.
    pub events: u32,
    /// Start only one root thread and bring the others up via forks
    /// (joins become available as usual). Requires at least two threads.
    pub fork_join: bool,
    pub weights: GenWeights,
    /// Allow reads of variables no one has written yet.
    pub allow_fresh_reads: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 0,
            threads: 2,
            variables: 2,
            mutexes: 1,
            events: 20,
            fork_join: false,
            weights: GenWeights::default(),
            allow_fresh_reads: true,
        }
    }
}

const VAR_NAMES: [&str; 6] = ["x", "y", "z", "u", "v", "w"];
const MUTEX_NAMES: [&str; 4] = ["m", "n", "o", "p"];

fn var_name(i: u32) -> String {
    VAR_NAMES
        .get(i as usize)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("v{i}"))
}

fn mutex_name(i: u32) -> String {
    MUTEX_NAMES
        .get(i as usize)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("m{i}"))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Move {
    Read(u64, u32),
    Write(u64, u32),
    Acquire(u64, u32),
    Release(u64, u32),
    Fork(u64, u64),
    Join(u64, u64),
}

/// Generates one valid trace for the configuration.
pub fn generate(cfg: &GenConfig) -> Result<Trace, Error> {
    if cfg.threads == 0 {
        return Err(Error::Config("at least one thread is required".into()));
    }
    if cfg.variables == 0 {
        return Err(Error::Config("at least one variable is required".into()));
    }
    if cfg.fork_join && cfg.threads < 2 {
        return Err(Error::Config(
            "fork/join generation requires at least two threads".into(),
        ));
    }
    let w = cfg.weights;
    if w.read == 0 && w.write == 0 && w.acquire == 0 && w.fork == 0 && w.join == 0 {
        return Err(Error::Config(
            "all schedulable operation weights are zero".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut b = TraceBuilder::new();

    // External thread ids are 1..=threads; with fork_join only thread 1
    // exists at the start.
    let tids: Vec<u64> = (1..=cfg.threads as u64).collect();
    let mut started: Vec<bool> = tids
        .iter()
        .map(|&t| !cfg.fork_join || t == 1)
        .collect();
    let mut dead = vec![false; tids.len()];
    let mut held: Vec<Vec<u32>> = vec![Vec::new(); tids.len()]; // in acquisition order
    let mut mutex_free = vec![true; cfg.mutexes as usize];
    let mut written = vec![false; cfg.variables as usize];
    let mut emitted = 0u32;
    let mut pending_releases = 0u32;

    while emitted + pending_releases < cfg.events {
        let budget = cfg.events - emitted - pending_releases;
        let mut moves: Vec<(u32, Move)> = Vec::new();
        for (i, &tid) in tids.iter().enumerate() {
            if !started[i] || dead[i] {
                continue;
            }
            if w.read > 0 {
                for v in 0..cfg.variables {
                    if cfg.allow_fresh_reads || written[v as usize] {
                        moves.push((w.read, Move::Read(tid, v)));
                    }
                }
            }
            if w.write > 0 {
                for v in 0..cfg.variables {
                    moves.push((w.write, Move::Write(tid, v)));
                }
            }
            if w.acquire > 0 && budget >= 2 {
                for m in 0..cfg.mutexes {
                    if mutex_free[m as usize] {
                        moves.push((w.acquire, Move::Acquire(tid, m)));
                    }
                }
            }
            if w.release > 0 {
                for &m in &held[i] {
                    moves.push((w.release, Move::Release(tid, m)));
                }
            }
            if w.fork > 0 {
                if let Some(j) = started.iter().position(|&s| !s) {
                    moves.push((w.fork, Move::Fork(tid, tids[j])));
                }
            }
            if w.join > 0 {
                for (j, &jt) in tids.iter().enumerate() {
                    if j != i && started[j] && !dead[j] && held[j].is_empty() {
                        moves.push((w.join, Move::Join(tid, jt)));
                    }
                }
            }
        }

        let total: u64 = moves.iter().map(|&(wt, _)| wt as u64).sum();
        if total == 0 {
            return Err(Error::Config(format!(
                "no operation is schedulable after {emitted} events \
                 (weights too restrictive for the configuration)"
            )));
        }
        let mut pick = rng.gen_range(0..total);
        let &(_, mv) = moves
            .iter()
            .find(|&&(wt, _)| {
                if pick < wt as u64 {
                    true
                } else {
                    pick -= wt as u64;
                    false
                }
            })
            .expect("total weight covers all moves");

        match mv {
            Move::Read(t, v) => {
                b.read(t, &var_name(v));
            }
            Move::Write(t, v) => {
                b.write(t, &var_name(v));
                written[v as usize] = true;
            }
            Move::Acquire(t, m) => {
                b.acquire(t, &mutex_name(m));
                let i = (t - 1) as usize;
                held[i].push(m);
                mutex_free[m as usize] = false;
                pending_releases += 1;
            }
            Move::Release(t, m) => {
                b.release(t, &mutex_name(m));
                let i = (t - 1) as usize;
                held[i].retain(|&x| x != m);
                mutex_free[m as usize] = true;
                pending_releases -= 1;
            }
            Move::Fork(t, c) => {
                b.fork(t, c);
                started[(c - 1) as usize] = true;
            }
            Move::Join(t, c) => {
                b.join(t, c);
                dead[(c - 1) as usize] = true;
            }
        }
        emitted += 1;
    }

    // Deterministic cleanup: release whatever is still held, by thread
    // slot then acquisition order.
    for (i, &tid) in tids.iter().enumerate() {
        let locks = std::mem::take(&mut held[i]);
        for m in locks {
            b.release(tid, &mutex_name(m));
        }
    }

    let t = b.finish();
    debug_assert_eq!(t.len(), cfg.events as usize);
    debug_assert!(t.validate(false).is_ok());
    Ok(t)
}

/// A derived configuration for corpus sweeps: deterministic per-seed
/// caps within the given maxima, cycling through weight profiles so
/// lock-heavy, access-heavy, and fork-heavy shapes all occur.
pub fn corpus_config(seed: u64, max_events: u32, max_threads: u32) -> GenConfig {
    let mut mix = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let threads = mix.gen_range(1..=max_threads.max(1));
    let fork_join = threads >= 2 && seed % 2 == 0;
    let weights = match seed % 5 {
        0 => GenWeights::default(),
        1 => GenWeights {
            read: 6,
            write: 2,
            ..GenWeights::default()
        },
        2 => GenWeights {
            read: 2,
            write: 6,
            ..GenWeights::default()
        },
        3 => GenWeights {
            acquire: 5,
            release: 5,
            ..GenWeights::default()
        },
        _ => GenWeights {
            fork: 3,
            join: 3,
            ..GenWeights::default()
        },
    };
    GenConfig {
        seed,
        threads,
        variables: mix.gen_range(1..=2),
        mutexes: mix.gen_range(0..=2),
        events: mix.gen_range(1..=max_events.max(1)),
        fork_join,
        weights,
        allow_fresh_reads: seed % 3 != 1,
    }
}
