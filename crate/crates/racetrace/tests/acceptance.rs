//! Release gates for the crate: golden fixtures with exactly known
//! output, differential equivalence against the brute-force oracle over
//! a large generated corpus, structural engine invariants over the same
//! corpus, a complexity smoke test, and lockset classification.
//!
//! Each gate prints exactly one PASS or FAIL line (visible with
//! `--nocapture`, or automatically when the test fails); the test
//! panics at the end if any gate failed. Every tolerance is pinned
//! right here in the code.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use racetrace::{
    corpus_config, eliminate, expand, generate, reported_races, shb_run, shball_post, shbee_run,
    summarize_locksets, Checker, Dedup, Epoch, GenConfig, GenWeights, LocksetClass, Locksets,
    Oracle, Pos, RaceCategory, ShbMode, ShbeeOptions, Trace, TraceBuilder, VClock, VarId,
};

type Gate = Result<(), String>;

const CORPUS_SEEDS: u64 = 10_000;
const CORPUS_MAX_EVENTS: u32 = 20;
const CORPUS_MAX_THREADS: u32 = 4;

/// Two unprotected writes by one thread, then a lock-protected write by
/// another; the classic motivating report of one pair per phase.
const INTRO_CSV: &str = "1,wr,x,app.c:10\n1,wr,x,app.c:11\n2,acq,y,app.c:20\n\
                         2,wr,x,app.c:21\n2,rel,y,app.c:22\n";

/// The same program with the second write protected by the same lock:
/// every remaining pair is ordered through the release/acquire chain.
const INTRO_REPAIRED_CSV: &str =
    "1,wr,x\n1,acq,y\n1,wr,x\n1,rel,y\n2,acq,y\n2,wr,x\n2,rel,y\n";

fn parse(csv: &str) -> Trace {
    Trace::parse_str(csv)
        .expect("fixture parses")
        .validate(false)
        .expect("fixture is well-formed")
}

fn positions(pairs: &[(Epoch, Epoch)]) -> Vec<(Pos, Pos)> {
    pairs.iter().map(|(a, b)| (a.pos, b.pos)).collect()
}

fn position_set(pairs: &[(Epoch, Epoch)]) -> BTreeSet<(Pos, Pos)> {
    positions(pairs).into_iter().collect()
}

fn clock_vals(c: &VClock, slots: u32) -> Vec<u32> {
    (0..slots).map(|s| c.get(s)).collect()
}

fn expect<T: PartialEq + std::fmt::Debug>(what: &str, got: T, want: T) -> Gate {
    if got == want {
        Ok(())
    } else {
        Err(format!("{what}: got {got:?}, want {want:?}"))
    }
}

/// Gate 1: hand-checked fixtures with exactly known output, end to end.
fn golden_examples() -> Gate {
    // Three writes of x, the first two by the same thread: the pass
    // itself only pairs the second with the foreign write, and the
    // recorded edge lets post-processing recover the first.
    let ta = parse("1,wr,x\n1,wr,x\n2,wr,x\n");
    let run = shbee_run(&ta, ShbeeOptions::default());
    let vp = &run.vars[&VarId(0)];
    expect("three-write direct pairs", positions(&vp.conc), vec![(2, 3)])?;
    let (a, b) = &vp.conc[0];
    expect(
        "three-write pair epochs (slot#stamp)",
        vec![(a.slot, a.stamp), (b.slot, b.stamp)],
        vec![(0, 2), (1, 1)],
    )?;
    expect(
        "three-write edges",
        vp.edges
            .iter()
            .map(|(s, ps)| (*s, ps.iter().map(|p| p.pos).collect()))
            .collect::<Vec<(Pos, Vec<Pos>)>>(),
        vec![(2, vec![1])],
    )?;
    let exp = expand(&vp.conc, &vp.edges);
    expect(
        "three-write expansion",
        position_set(&exp.pairs),
        [(2, 3), (1, 3)].into_iter().collect(),
    )?;
    expect(
        "three-write elimination keeps both",
        position_set(&eliminate(&exp.pairs, &run.clocks)),
        [(2, 3), (1, 3)].into_iter().collect(),
    )?;
    let races = reported_races(&ta, &run, true, None, Dedup::Events).map_err(|e| e.to_string())?;
    expect(
        "three-write report (pair, category, phase)",
        races
            .iter()
            .map(|r| (r.first_pos, r.second_pos, r.category, r.phase))
            .collect::<Vec<_>>(),
        vec![
            (1, 3, RaceCategory::WriteWrite, 2),
            (2, 3, RaceCategory::WriteWrite, 1),
        ],
    )?;

    // Five accesses of x across three threads with two same-thread
    // write/read chains; the dependency pair (3,5) is ordered yet still
    // a reportable race.
    let tb = parse("1,wr,x\n1,rd,x\n2,wr,x\n2,rd,x\n3,rd,x\n");
    let unopt = shbee_run(&tb, ShbeeOptions::default());
    let vp = &unopt.vars[&VarId(0)];
    expect(
        "five-access direct pairs",
        position_set(&vp.conc),
        [(2, 3), (2, 4), (2, 5), (4, 5)].into_iter().collect(),
    )?;
    expect(
        "five-access edges",
        vp.edges
            .iter()
            .map(|(s, ps)| (*s, ps.iter().map(|p| p.pos).collect()))
            .collect::<Vec<(Pos, Vec<Pos>)>>(),
        vec![(2, vec![1]), (4, vec![3])],
    )?;
    let exp = expand(&vp.conc, &vp.edges);
    expect(
        "five-access expansion",
        position_set(&exp.pairs),
        [
            (1, 3),
            (2, 3),
            (1, 4),
            (2, 4),
            (1, 5),
            (2, 5),
            (3, 5),
            (4, 5),
        ]
        .into_iter()
        .collect(),
    )?;
    let want_races = vec![
        (1, 3, RaceCategory::WriteWrite),
        (1, 4, RaceCategory::WriteRead),
        (1, 5, RaceCategory::WriteRead),
        (2, 3, RaceCategory::WriteRead),
        (3, 5, RaceCategory::WriteReadDependency),
    ];
    let races =
        reported_races(&tb, &unopt, true, None, Dedup::Events).map_err(|e| e.to_string())?;
    expect(
        "five-access report",
        races
            .iter()
            .map(|r| (r.first_pos, r.second_pos, r.category))
            .collect::<Vec<_>>(),
        want_races.clone(),
    )?;
    let opt = shbee_run(
        &tb,
        ShbeeOptions {
            optimized: true,
            record: true,
        },
    );
    let vp = &opt.vars[&VarId(0)];
    expect(
        "five-access optimized direct pairs",
        position_set(&vp.conc),
        [(1, 3), (2, 3), (1, 4), (1, 5), (3, 5)].into_iter().collect(),
    )?;
    expect(
        "five-access optimized live epochs keep everything",
        vp.rw.iter().map(|e| e.pos).collect::<BTreeSet<Pos>>(),
        (1..=5).collect(),
    )?;
    let exp = expand(&vp.conc, &vp.edges);
    expect(
        "five-access optimized expansion is a fixpoint",
        position_set(&exp.pairs),
        position_set(&vp.conc),
    )?;
    let races = reported_races(&tb, &opt, true, None, Dedup::Events).map_err(|e| e.to_string())?;
    expect(
        "five-access optimized report",
        races
            .iter()
            .map(|r| (r.first_pos, r.second_pos, r.category))
            .collect::<Vec<_>>(),
        want_races,
    )?;

    // The flagging pass on the same trace: flagged events and the final
    // history clocks are exactly known.
    let flagged = shb_run(&tb, ShbMode::Flag);
    expect(
        "five-access flags (position, partner letters)",
        flagged
            .flags
            .iter()
            .map(|f| (f.pos, f.cats.letters()))
            .collect::<Vec<_>>(),
        vec![(3, "rw".to_string()), (4, "w".to_string()), (5, "w".to_string())],
    )?;
    expect(
        "five-access write history",
        clock_vals(&flagged.write_hist[&VarId(0)], 3),
        vec![1, 1, 0],
    )?;
    expect(
        "five-access read history",
        clock_vals(&flagged.read_hist[&VarId(0)], 3),
        vec![2, 2, 1],
    )?;
    let recorded = shb_run(&tb, ShbMode::RecordAll);
    let clocks = recorded.clocks.as_ref().expect("recording mode keeps clocks");
    expect(
        "five-access clock recorded at the first read",
        clock_vals(clocks[1].as_ref().expect("position 2 is an access"), 3),
        vec![2, 0, 0],
    )?;

    // Nine events where lock hand-offs chain the first write before the
    // third: expansion proposes the ordered pair, elimination drops it.
    let lock_chain = parse(
        "1,wr,x\n1,acq,y\n1,rel,y\n2,acq,y\n2,rel,y\n2,wr,x\n3,acq,y\n3,rel,y\n3,wr,x\n",
    );
    let run = shbee_run(&lock_chain, ShbeeOptions::default());
    let vp = &run.vars[&VarId(0)];
    expect("lock-chain direct pairs", positions(&vp.conc), vec![(6, 9)])?;
    let (a, b) = &vp.conc[0];
    expect(
        "lock-chain pair epochs (slot#stamp)",
        vec![(a.slot, a.stamp), (b.slot, b.stamp)],
        vec![(1, 2), (2, 2)],
    )?;
    let exp = expand(&vp.conc, &vp.edges);
    expect(
        "lock-chain expansion proposes the first write",
        position_set(&exp.pairs),
        [(6, 9), (1, 9)].into_iter().collect(),
    )?;
    let proposed = exp
        .pairs
        .iter()
        .find(|(a, _)| a.pos == 1)
        .expect("proposed pair present");
    expect(
        "lock-chain proposed epoch (slot#stamp)",
        (proposed.0.slot, proposed.0.stamp),
        (0, 1),
    )?;
    expect(
        "lock-chain clock at the last write",
        clock_vals(run.clocks[8].as_ref().expect("position 9 is an access"), 3),
        vec![2, 1, 2],
    )?;
    expect(
        "lock-chain elimination",
        positions(&eliminate(&exp.pairs, &run.clocks)),
        vec![(6, 9)],
    )?;

    // Oracle race sets of two four-event traces: one with a dependency
    // race and an ordered write/read pair excluded, one where the
    // dependency chain orders the outer accesses entirely.
    // The only ordering edges here leave the second write (its reads at
    // 3 and 4 observe it), so the first write is concurrent with every
    // other access; (2,3) is an ordered same-thread dependency and no
    // race, while (2,4) crosses threads with nothing in between.
    let t = parse("1,wr,x\n2,wr,x\n2,rd,x\n3,rd,x\n");
    let oracle = Oracle::new(&t).map_err(|e| e.to_string())?;
    expect(
        "write-read oracle race set",
        oracle
            .race_set()
            .into_iter()
            .map(|r| (r.first, r.second, r.category))
            .collect::<Vec<_>>(),
        vec![
            (1, 2, RaceCategory::WriteWrite),
            (1, 3, RaceCategory::WriteRead),
            (1, 4, RaceCategory::WriteRead),
            (2, 4, RaceCategory::WriteReadDependency),
        ],
    )?;
    let chain = parse("1,rd,x\n1,wr,y\n2,rd,y\n2,wr,x\n");
    let oracle = Oracle::new(&chain).map_err(|e| e.to_string())?;
    expect(
        "dependency-chain oracle race set",
        oracle
            .race_set()
            .into_iter()
            .map(|r| (r.first, r.second, r.category))
            .collect::<Vec<_>>(),
        vec![(2, 3, RaceCategory::WriteReadDependency)],
    )?;

    // The motivating trace reports one pair per phase; protecting the
    // second write removes every race.
    let intro = parse(INTRO_CSV);
    let run = shbee_run(&intro, ShbeeOptions::default());
    let races =
        reported_races(&intro, &run, true, None, Dedup::Events).map_err(|e| e.to_string())?;
    expect(
        "intro report (pair, category, phase)",
        races
            .iter()
            .map(|r| (r.first_pos, r.second_pos, r.category, r.phase))
            .collect::<Vec<_>>(),
        vec![
            (1, 4, RaceCategory::WriteWrite, 2),
            (2, 4, RaceCategory::WriteWrite, 1),
        ],
    )?;
    let repaired = parse(INTRO_REPAIRED_CSV);
    let oracle = Oracle::new(&repaired).map_err(|e| e.to_string())?;
    expect(
        "repaired intro orders the first write before the foreign one",
        oracle.happens_before(1, 6),
        true,
    )?;
    expect("repaired intro oracle race count", oracle.race_set().len(), 0)?;
    let run = shbee_run(&repaired, ShbeeOptions::default());
    let races =
        reported_races(&repaired, &run, true, None, Dedup::Events).map_err(|e| e.to_string())?;
    expect("repaired intro report", races.len(), 0)?;
    Ok(())
}

fn corpus(seed: u64) -> Result<Trace, String> {
    let cfg = corpus_config(seed, CORPUS_MAX_EVENTS, CORPUS_MAX_THREADS);
    generate(&cfg).map_err(|e| format!("seed {seed}: generation failed: {e}"))
}

/// Gate 2: every analysis output equals the oracle's on generated traces.
fn oracle_equivalence() -> Gate {
    let checker = Checker::default();
    for seed in 0..CORPUS_SEEDS {
        let t = corpus(seed)?;
        let oracle = Oracle::new(&t).map_err(|e| format!("seed {seed}: {e}"))?;
        checker
            .differential(&t, &oracle)
            .map_err(|e| format!("seed {seed}: {e}"))?;
    }
    Ok(())
}

/// Gate 3: structural engine invariants hold stepwise on the same corpus.
fn engine_invariants() -> Gate {
    let checker = Checker::default();
    for seed in 0..CORPUS_SEEDS {
        let t = corpus(seed)?;
        let oracle = Oracle::new(&t).map_err(|e| format!("seed {seed}: {e}"))?;
        checker
            .invariants(&t, &oracle)
            .map_err(|e| format!("seed {seed}: {e}"))?;
    }
    Ok(())
}

/// Gate 4: the streaming pass stays in a linear band when the trace
/// doubles, and exhaustive recording pays for its completeness.
fn complexity_smoke() -> Gate {
    let weights = GenWeights {
        fork: 0,
        join: 0,
        ..GenWeights::default()
    };
    let phase1_time = |events: u32| -> Result<Duration, String> {
        let cfg = GenConfig {
            seed: 42,
            threads: 8,
            variables: 4,
            mutexes: 2,
            events,
            weights,
            ..GenConfig::default()
        };
        let t = generate(&cfg).map_err(|e| e.to_string())?;
        let mut best = Duration::MAX;
        for _ in 0..3 {
            let start = Instant::now();
            let run = shbee_run(
                &t,
                ShbeeOptions {
                    record: false,
                    ..ShbeeOptions::default()
                },
            );
            best = best.min(start.elapsed());
            std::hint::black_box(&run);
        }
        Ok(best)
    };
    let small = phase1_time(100_000)?;
    let large = phase1_time(200_000)?;
    let ratio = large.as_secs_f64() / small.as_secs_f64();
    if !(1.5..=3.0).contains(&ratio) {
        return Err(format!(
            "doubling the trace scaled the pass by {ratio:.2} ({small:.2?} to {large:.2?}), \
             outside the linear band [1.5, 3.0]"
        ));
    }

    // A race-dense trace: one unsynchronized write per thread, then one
    // thread hammers the same variable, so nearly every access races
    // with the seven foreign writes.
    let mut b = TraceBuilder::new();
    for tid in 1..=8u64 {
        b.write(tid, "x");
    }
    for i in 0..(10_000 - 8) {
        if i % 2 == 0 {
            b.write(1, "x");
        } else {
            b.read(1, "x");
        }
    }
    let dense = b.finish();

    let unopt = shbee_run(&dense, ShbeeOptions::default());
    let mut phase2 = Duration::MAX;
    let mut two_phase = Vec::new();
    for _ in 0..3 {
        let start = Instant::now();
        let races =
            reported_races(&dense, &unopt, true, None, Dedup::Events).map_err(|e| e.to_string())?;
        phase2 = phase2.min(start.elapsed());
        two_phase = races;
    }

    let recorded = shb_run(&dense, ShbMode::RecordAll);
    let mut exhaustive = Duration::MAX;
    let mut paired = Vec::new();
    for _ in 0..3 {
        let start = Instant::now();
        let races = shball_post(&dense, &recorded).map_err(|e| e.to_string())?;
        exhaustive = exhaustive.min(start.elapsed());
        paired = races;
    }

    let two_phase: Vec<(Pos, Pos, RaceCategory)> = two_phase
        .iter()
        .map(|r| (r.first_pos, r.second_pos, r.category))
        .collect();
    expect("dense-trace race sets agree across pipelines", paired, two_phase.clone())?;
    if two_phase.len() < 10_000 {
        return Err(format!(
            "dense fixture is not dense: only {} races",
            two_phase.len()
        ));
    }
    if exhaustive < phase2 * 2 {
        return Err(format!(
            "exhaustive pairing ({exhaustive:.2?}) is not at least twice the two-phase \
             post-processing ({phase2:.2?})"
        ));
    }
    Ok(())
}

/// Gate 5: lockset classes label the motivating pair correctly and
/// partition every reported pair over the corpus.
fn lockset_classification() -> Gate {
    let intro = parse(INTRO_CSV);
    let run = shbee_run(&intro, ShbeeOptions::default());
    let locksets = Locksets::compute(&intro);
    let races = reported_races(&intro, &run, true, Some(&locksets), Dedup::Events)
        .map_err(|e| e.to_string())?;
    let pair = races
        .iter()
        .find(|r| (r.first_pos, r.second_pos) == (2, 4))
        .ok_or("intro pair (2,4) missing from the report")?;
    expect(
        "intro pair (2,4) class",
        pair.lockset_class,
        Some(LocksetClass::FirstUnprotected),
    )?;

    let mut total = 0usize;
    for seed in 0..CORPUS_SEEDS {
        let t = corpus(seed)?;
        let run = shbee_run(&t, ShbeeOptions::default());
        let locksets = Locksets::compute(&t);
        let races = reported_races(&t, &run, true, Some(&locksets), Dedup::Events)
            .map_err(|e| format!("seed {seed}: classification failed: {e}"))?;
        let summary = summarize_locksets(&races);
        if summary.total() != races.len() || races.iter().any(|r| r.lockset_class.is_none()) {
            return Err(format!(
                "seed {seed}: classes cover {} of {} reported pairs",
                summary.total(),
                races.len()
            ));
        }
        total += races.len();
    }
    if total == 0 {
        return Err("corpus produced no race pairs to classify".into());
    }
    Ok(())
}

#[test]
fn release_gates() {
    let gates: [(&str, fn() -> Gate, Duration); 5] = [
        ("golden fixtures", golden_examples, Duration::from_secs(1)),
        (
            "oracle equivalence (10000 traces)",
            oracle_equivalence,
            Duration::from_secs(120),
        ),
        (
            "engine invariants (10000 traces)",
            engine_invariants,
            Duration::from_secs(120),
        ),
        ("complexity smoke test", complexity_smoke, Duration::from_secs(60)),
        (
            "lockset classification",
            lockset_classification,
            Duration::from_secs(120),
        ),
    ];
    let mut failed = Vec::new();
    for (name, gate, budget) in gates {
        let start = Instant::now();
        let mut outcome = gate();
        let elapsed = start.elapsed();
        if outcome.is_ok() && elapsed > budget {
            outcome = Err(format!("finished, but took {elapsed:.2?} of a {budget:?} budget"));
        }
        match outcome {
            Ok(()) => println!("PASS {name} ({elapsed:.2?})"),
            Err(e) => {
                println!("FAIL {name}: {e}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "gates failed: {}", failed.join(", "));
}
