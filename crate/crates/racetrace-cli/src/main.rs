//! Command-line front end: analyze traces, print the reference oracle's
//! verdict, sweep generated traces differentially, generate traces, and
//! prefilter them.
//!
//! Reports go to stdout, run statistics to stderr. Exit codes: 0 on
//! success (races found is a successful analysis), 1 when a differential
//! check finds a divergence, 2 for unparsable or invalid traces, 3 for
//! configuration errors.

use std::collections::BTreeMap;
use std::io::Read;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use racetrace::{
    filter_shared, generate, render_flags_json, render_flags_text, render_json, render_text,
    reported_races, run_check, shb_run, shball_post, shbee_run, summarize_locksets,
    assemble_races, Dedup, Epoch, Error, GenConfig, Locksets, Oracle, Pos, ShbMode, ShbeeOptions,
    Stats, Trace, VarId, VarRacePairs,
};

#[derive(Parser)]
#[command(
    name = "racetrace",
    version,
    about = "Predictive data-race analysis over concurrent execution traces"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a race analysis over a trace.
    Analyze(AnalyzeArgs),
    /// Print the reference oracle's race set for a (short) trace.
    Oracle(OracleArgs),
    /// Differentially check all analyses against the oracle on
    /// generated traces.
    Check(CheckArgs),
    /// Generate a random valid trace.
    Gen(GenArgs),
    /// Keep only synchronization and accesses to cross-thread variables.
    Filter(FilterArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Algo {
    /// Linear flagging pass: marks the later access of each racy pair.
    Shb,
    /// Pair-reporting engine with bounded per-variable state.
    Shbee,
    /// Exhaustive pair enumeration from recorded per-access clocks.
    Shball,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DedupArg {
    /// Keep every distinct event pair.
    Events,
    /// Collapse pairs with the same unordered location pair.
    Locations,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Trace file in the CSV wire format; `-` reads stdin.
    #[arg(long)]
    trace: String,
    #[arg(long, value_enum, default_value_t = Algo::Shbee)]
    algo: Algo,
    /// Pair reads only against writes and keep at most one read and one
    /// write epoch per thread (pair engine only).
    #[arg(long)]
    optimize: bool,
    /// Skip phase-2 post-processing; only directly observed pairs are
    /// reported and no per-access clocks are kept.
    #[arg(long)]
    no_post: bool,
    /// Also detect write-read dependency races in the flagging pass.
    #[arg(long)]
    wrd: bool,
    /// Classify each reported race by lock protection.
    #[arg(long)]
    lockset: bool,
    /// Append a summary of races per lockset class.
    #[arg(long)]
    lockset_summary: bool,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Repair a trace whose only defect is mutexes still held at the end.
    #[arg(long)]
    repair: bool,
    #[arg(long, value_enum, default_value_t = DedupArg::Events)]
    dedup: DedupArg,
}

#[derive(Args)]
struct OracleArgs {
    /// Trace file in the CSV wire format; `-` reads stdin.
    #[arg(long)]
    trace: String,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Classify each reported race by lock protection.
    #[arg(long)]
    lockset: bool,
    /// Repair a trace whose only defect is mutexes still held at the end.
    #[arg(long)]
    repair: bool,
}

#[derive(Args)]
struct CheckArgs {
    /// Number of generated traces to verify.
    #[arg(long, default_value_t = 1000)]
    seeds: u64,
    /// First seed of the sweep.
    #[arg(long, default_value_t = 0)]
    start: u64,
    /// Upper bound on events per generated trace.
    #[arg(long, default_value_t = 20)]
    max_events: u32,
    /// Upper bound on threads per generated trace.
    #[arg(long, default_value_t = 4)]
    max_threads: u32,
    /// Deliberately corrupt one engine result to prove the harness
    /// catches regressions.
    #[arg(long, hide = true)]
    self_test_corrupt: bool,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    threads: u32,
    #[arg(long, default_value_t = 2)]
    variables: u32,
    #[arg(long, default_value_t = 1)]
    mutexes: u32,
    #[arg(long, default_value_t = 30)]
    events: u32,
    /// Structure the trace as a fork/join hierarchy rooted in the first
    /// thread.
    #[arg(long)]
    fork_join: bool,
    /// Forbid reading a variable nothing has written yet.
    #[arg(long)]
    no_fresh_reads: bool,
    /// Write the trace here instead of stdout.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct FilterArgs {
    /// Trace file in the CSV wire format; `-` reads stdin.
    #[arg(long)]
    trace: String,
    /// Repair a trace whose only defect is mutexes still held at the end.
    #[arg(long)]
    repair: bool,
    /// Write the filtered trace here instead of stdout.
    #[arg(long)]
    out: Option<String>,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Parse { .. } | Error::Validation { .. } => 2,
                Error::Config(_) | Error::Internal(_) => 3,
            }
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<i32, Error> {
    match cli.cmd {
        Cmd::Analyze(a) => analyze(a),
        Cmd::Oracle(a) => oracle(a),
        Cmd::Check(a) => check(a),
        Cmd::Gen(a) => gen(a),
        Cmd::Filter(a) => filter(a),
    }
}

fn read_trace(path: &str, repair: bool) -> Result<Trace, Error> {
    let text = if path == "-" {
        let mut s = String::new();
        std::io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| Error::Config(format!("reading stdin: {e}")))?;
        s
    } else {
        std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("reading '{path}': {e}")))?
    };
    Trace::parse_str(&text)?.validate(repair)
}

fn write_output(out: Option<&str>, content: &str) -> Result<(), Error> {
    match out {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| Error::Config(format!("writing '{path}': {e}"))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn base_stats(t: &Trace) -> Stats {
    Stats {
        events: t.len(),
        threads: t.n_threads(),
        variables: t.n_vars(),
        mutexes: t.n_mutexes(),
        ..Stats::default()
    }
}

/// Reconstructs a reportable epoch for a bare access position; only the
/// position and access kind matter for assembly.
fn epoch_at(t: &Trace, pos: Pos) -> Epoch {
    let e = t.event(pos);
    let (_, kind) = e.op.access().expect("race endpoints are accesses");
    Epoch {
        slot: e.thread.0,
        stamp: pos,
        pos,
        kind,
    }
}

/// Groups bare position pairs by variable into assembly input, treating
/// all of them as phase-1 findings.
fn var_pairs_of(t: &Trace, pairs: &[(Pos, Pos)]) -> Vec<VarRacePairs> {
    let mut by_var: BTreeMap<VarId, VarRacePairs> = BTreeMap::new();
    for &(a, b) in pairs {
        let (var, _) = t.event(b).op.access().expect("race endpoints are accesses");
        let vp = by_var.entry(var).or_insert_with(|| VarRacePairs {
            var,
            pairs: Vec::new(),
            phase1: Default::default(),
        });
        vp.pairs.push((epoch_at(t, a), epoch_at(t, b)));
        vp.phase1.insert((a, b));
    }
    by_var.into_values().collect()
}

fn analyze(a: AnalyzeArgs) -> Result<i32, Error> {
    let t = read_trace(&a.trace, a.repair)?;
    let mut stats = base_stats(&t);
    let locksets = (a.lockset || a.lockset_summary).then(|| Locksets::compute(&t));
    let dedup = match a.dedup {
        DedupArg::Events => Dedup::Events,
        DedupArg::Locations => Dedup::Locations,
    };

    if a.algo == Algo::Shb {
        if a.optimize {
            return Err(Error::Config(
                "the flagging pass has no optimized variant; use --algo shbee".to_string(),
            ));
        }
        let mode = if a.wrd {
            ShbMode::FlagWrd
        } else {
            ShbMode::Flag
        };
        let t0 = Instant::now();
        let run = shb_run(&t, mode);
        stats.phase1_secs = t0.elapsed().as_secs_f64();
        stats.flagged = Some(run.flags.len());
        match a.format {
            Format::Text => print!("{}", render_flags_text(&t, &run)),
            Format::Json => println!("{}", render_flags_json(&t, &run)),
        }
        eprintln!("{stats}");
        return Ok(0);
    }

    let races = if a.algo == Algo::Shball {
        let t0 = Instant::now();
        let run = shb_run(&t, ShbMode::RecordAll);
        stats.phase1_secs = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let pairs = shball_post(&t, &run)?;
        stats.phase2_secs = t1.elapsed().as_secs_f64();
        let positions: Vec<(Pos, Pos)> = pairs.iter().map(|&(x, y, _)| (x, y)).collect();
        let vars = var_pairs_of(&t, &positions);
        assemble_races(&t, &vars, &run.wrd_pairs, locksets.as_ref(), dedup)?
    } else {
        let t0 = Instant::now();
        let run = shbee_run(
            &t,
            ShbeeOptions {
                optimized: a.optimize,
                record: !a.no_post,
            },
        );
        stats.phase1_secs = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let races = reported_races(&t, &run, !a.no_post, locksets.as_ref(), dedup)?;
        stats.phase2_secs = t1.elapsed().as_secs_f64();
        races
    };

    stats.phase1_races = races.iter().filter(|r| r.phase == 1).count();
    stats.phase2_races = races.iter().filter(|r| r.phase == 2).count();
    match a.format {
        Format::Text => print!("{}", render_text(&races)),
        Format::Json => println!("{}", render_json(&races)),
    }
    if a.lockset_summary {
        println!("{}", summarize_locksets(&races));
    }
    eprintln!("{stats}");
    Ok(0)
}

fn oracle(a: OracleArgs) -> Result<i32, Error> {
    let t = read_trace(&a.trace, a.repair)?;
    let oracle = Oracle::new(&t)?;
    let locksets = a.lockset.then(|| Locksets::compute(&t));
    let mut conc = Vec::new();
    let mut wrd = Vec::new();
    for r in oracle.race_set() {
        if r.category == racetrace::RaceCategory::WriteReadDependency {
            wrd.push((r.first, r.second));
        } else {
            conc.push((r.first, r.second));
        }
    }
    let vars = var_pairs_of(&t, &conc);
    let races = assemble_races(&t, &vars, &wrd, locksets.as_ref(), Dedup::Events)?;
    match a.format {
        Format::Text => print!("{}", render_text(&races)),
        Format::Json => println!("{}", render_json(&races)),
    }
    let mut stats = base_stats(&t);
    stats.phase1_races = races.len();
    eprintln!("{stats}");
    Ok(0)
}

fn check(a: CheckArgs) -> Result<i32, Error> {
    let range = a.start..a.start + a.seeds;
    match run_check(range, a.max_events, a.max_threads, a.self_test_corrupt) {
        Ok(report) => {
            println!(
                "checked {} traces ({} events): all analyses agree with the oracle",
                report.traces, report.events
            );
            Ok(0)
        }
        Err(failure) => {
            println!("divergence at seed {}: {}", failure.seed, failure.message);
            println!("minimal reproducer:");
            print!("{}", failure.csv);
            Ok(1)
        }
    }
}

fn gen(a: GenArgs) -> Result<i32, Error> {
    let cfg = GenConfig {
        seed: a.seed,
        threads: a.threads,
        variables: a.variables,
        mutexes: a.mutexes,
        events: a.events,
        fork_join: a.fork_join,
        allow_fresh_reads: !a.no_fresh_reads,
        ..GenConfig::default()
    };
    let t = generate(&cfg)?;
    write_output(a.out.as_deref(), &t.render())?;
    Ok(0)
}

fn filter(a: FilterArgs) -> Result<i32, Error> {
    let t = read_trace(&a.trace, a.repair)?;
    let filtered = filter_shared(&t);
    write_output(a.out.as_deref(), &filtered.render())?;
    eprintln!(
        "kept {} of {} events across {} of {} variables",
        filtered.len(),
        t.len(),
        filtered.n_vars(),
        t.n_vars()
    );
    Ok(0)
}
