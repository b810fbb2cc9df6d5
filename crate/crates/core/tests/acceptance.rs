//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each, and
//! exits nonzero if any fails. Pass criterion numbers as arguments to run a
//! subset: `cargo test -p nlbox --test acceptance -- 3 5`.

use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use nlbox::analysis::{self, chsh_score, estimate_distribution, SplitMix64};
use nlbox::betting::{self, settle, Alphabet, BetVector, Capital, Predicate};
use nlbox::boxes::{Alpha, BoxPair, LocalRule};
use nlbox::learner::{LearnerState, Sample};
use nlbox::protocol::{self, ProtocolConfig, SequenceSource, SwitchSymbol};
use nlbox::vm::{self, ExecBudget, Outcome, TimeBound};

// Pinned tolerances and limits.
const FAIRNESS_BETS: usize = 10_000;
const FACT1_FLAGS: usize = 24;
const FACT1_MAX_TIME: Duration = Duration::from_secs(1);
const DIAGONAL_PROGRAMS: u64 = 200;
const DIAGONAL_M: usize = 4;
const DIAGONAL_LENGTH: usize = 10_000;
const DIAGONAL_MAX_TIME: Duration = Duration::from_secs(600);
const LEARN_TARGETS: u64 = 500;
const LEARN_TRAINING_ROUNDS: u64 = 64;
const LEARN_HELD_OUT: u64 = 1_000;
const E2E_FIRST_HORIZON: u64 = 200;
const E2E_MAX_HORIZON: u64 = 6_400;
const E2E_WINDOW: u64 = 5;
const NEGATIVE_HORIZON: u64 = 400;
const TINY_FUEL: u64 = 3;
const TINY_SCAN_CAP: u64 = 2_000_000;
const CHSH_ROUNDS: u64 = 100_000;
const CHSH_MAX_TIME: Duration = Duration::from_secs(1);
const LLOYD_REL_TOL: f64 = 1e-10;
const LINEARITY_REL_TOL: f64 = 1e-15;

type Check = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Check);

fn q(n: i64, d: i64) -> Capital {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn c1_fairness() -> Check {
    let mut rng = SplitMix64::new(1);
    let mut checked = 0;
    for &k in &[2usize, 4, 6] {
        for _ in 0..FAIRNESS_BETS {
            // k stakes plus an unspent share drawn on a common denominator
            let raw: Vec<u64> = (0..=k).map(|_| rng.next_u64() % 1_000).collect();
            let total = raw.iter().sum::<u64>().max(1) as i64;
            let bet = BetVector::new(raw[..k].iter().map(|&r| q(r as i64, total)).collect())
                .map_err(|e| e.to_string())?;
            let capital = q((rng.next_u64() % 1_000_000) as i64 + 1, (rng.next_u64() % 1_000) as i64 + 1);
            let mut sum = Capital::zero();
            for s in 0..k {
                let after = settle(&capital, &bet, s, k).map_err(|e| e.to_string())?;
                ensure(after >= Capital::zero(), "negative capital")?;
                sum += after;
            }
            ensure(
                sum / BigInt::from(k) == capital,
                format!("mean over outcomes differs from prior capital for k={k}"),
            )?;
            checked += 1;
        }
    }
    Ok(format!("{checked} bets, outcome mean equals prior capital exactly"))
}

fn c2_fact1_growth() -> Check {
    let start = Instant::now();
    let k = 4;
    let alphabet = Alphabet::numeric(k).unwrap();
    let gamma = [0usize, 1];
    // flagged positions 3, 7, 11, ...: symbol 2 or 3; elsewhere anything
    let length = 4 * FACT1_FLAGS + 5;
    let flagged = |n: u64| n % 4 == 3 && n < 4 * FACT1_FLAGS as u64;
    let seq: Vec<usize> = (0..length as u64)
        .map(|n| if flagged(n) { 2 + (n as usize / 4) % 2 } else { (n as usize * 7 + 1) % k })
        .collect();
    let bettor = betting::fact1_bettor(Predicate::native(flagged), &gamma, &alphabet, 0).map_err(|e| e.to_string())?;
    let traj = betting::run_bettor(&bettor, &seq, k);
    let r = (0..length as u64).filter(|&n| flagged(n)).count();
    ensure(r >= 20, "fewer than 20 flagged positions")?;
    let gain = q(k as i64, (k - gamma.len()) as i64);
    let mut expected = Capital::one();
    for _ in 0..r {
        expected *= &gain;
    }
    let elapsed = start.elapsed();
    ensure(traj.last() == Some(&expected), format!("final capital {:?} != {expected}", traj.last()))?;
    ensure(elapsed < FACT1_MAX_TIME, format!("took {elapsed:?}"))?;
    Ok(format!("r={r}, capital = 2^{r} exactly, {elapsed:.2?}"))
}

fn c3_diagonal_bounded() -> Check {
    let start = Instant::now();
    let budget = ExecBudget::default();
    let family = protocol::build_default_family(&budget, DIAGONAL_M, DIAGONAL_PROGRAMS);
    let alphabet = protocol::switch_alphabet(DIAGONAL_M);
    let run = betting::diagonal_sequence(&family, &alphabet, DIAGONAL_LENGTH);
    for w in run.weighted_totals.windows(2) {
        ensure(w[1] <= w[0], "weighted total increased")?;
    }
    for i in 0..family.len() {
        ensure(
            run.peak_capitals[i] <= family.capital_bound(i),
            format!("member {i} exceeded its bound"),
        )?;
    }
    let elapsed = start.elapsed();
    // independent replay of one member per forbidden set, from the first
    // program whose predicate is not constantly 0
    let gammas = protocol::default_gammas(DIAGONAL_M).len();
    let first_live = (0..DIAGONAL_PROGRAMS)
        .find(|&p| vm::run(&vm::enumerate(p), 0, 0, 0, &budget).outcome == Outcome::Halted(1))
        .unwrap() as usize;
    for j in 0..gammas {
        let i = first_live * gammas + j;
        let traj = betting::run_bettor(&family.entries()[i].0, &run.sequence, alphabet.k());
        let bound = family.capital_bound(i);
        ensure(traj.iter().all(|c| c <= &bound), format!("replayed member {i} exceeded its bound"))?;
        ensure(traj.iter().max() == Some(&run.peak_capitals[i]), format!("replay of member {i} disagrees"))?;
    }
    ensure(elapsed < DIAGONAL_MAX_TIME, format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} members, {} positions, all capitals within bound, {elapsed:.1?}",
        family.len(),
        DIAGONAL_LENGTH
    ))
}

fn c4_learner_convergence() -> Check {
    let budget = ExecBudget::default();
    let pairs = [(0u8, 0u8), (0, 1), (1, 0), (1, 1)];
    let mut tested = 0;
    let mut skipped = 0;
    for index in 0..LEARN_TARGETS {
        let target = vm::enumerate(index);
        let total = LEARN_TRAINING_ROUNDS + LEARN_HELD_OUT;
        let within = (0..total).all(|n| {
            pairs
                .iter()
                .all(|&(x, y)| vm::run(&target, x, y, n, &budget).bit().is_some())
        });
        if !within {
            skipped += 1;
            continue;
        }
        let sample = |n: u64| {
            let (x, y) = pairs[(n % 4) as usize];
            Sample {
                x,
                y,
                n,
                b: vm::run(&target, x, y, n, &budget).bit().unwrap(),
            }
        };
        let mut state = LearnerState::default();
        for n in 0..LEARN_TRAINING_ROUNDS {
            state = state.update(sample(n), &budget).map_err(|e| e.to_string())?;
        }
        let (guess, changes) = (state.guess_index(), state.mind_changes());
        ensure(changes <= index + 1, format!("target {index}: {changes} mind changes"))?;
        for n in LEARN_TRAINING_ROUNDS..total {
            state = state.update(sample(n), &budget).map_err(|e| e.to_string())?;
            for &(x, y) in &pairs {
                ensure(
                    state.predict(x, y, n, &budget) == vm::run(&target, x, y, n, &budget).bit(),
                    format!("target {index}: guess {guess} wrong at n={n}, ({x},{y})"),
                )?;
            }
        }
        ensure(state.guess_index() == guess, format!("target {index}: guess refuted on held-out rounds"))?;
        tested += 1;
    }
    Ok(format!(
        "{tested} targets converged and matched {LEARN_HELD_OUT} held-out rounds; {skipped} exceed the budget"
    ))
}

fn e2e(m: usize) -> Result<String, String> {
    let message: Vec<u8> = (0..m).map(|i| [1, 0, 1, 1][i % 4]).collect();
    let pair = BoxPair::pr_vm(ExecBudget::default());
    let mut horizon = E2E_FIRST_HORIZON;
    loop {
        let mut cfg = ProtocolConfig::new(
            message.clone(),
            SequenceSource::Diagonal {
                programs: DIAGONAL_PROGRAMS,
            },
            horizon,
        );
        cfg.window = E2E_WINDOW;
        let run = protocol::run_protocol(&cfg, &pair).map_err(|e| e.to_string())?;
        let p1 = protocol::check_p1(&run.transcript, &pair, &cfg.budget).map_err(|e| e.to_string())?;
        let enough = run.report.usable_rounds.iter().all(|&c| c >= E2E_WINDOW);
        if let (Some(decoded), true, true) = (run.decode.message(), p1.holds, enough) {
            ensure(decoded == message, format!("m={m}: decoded {decoded:?}, sent {message:?}"))?;
            ensure(
                run.report.stabilization_round == p1.from_round,
                format!("m={m}: reported stabilization {:?} vs {:?}", run.report.stabilization_round, p1.from_round),
            )?;
            for r in &run.transcript {
                let truth = pair.query(r.n, r.x_in, r.y_in).map_err(|e| e.to_string())?;
                ensure((r.a_out, r.b_out) == truth, format!("m={m}: unfaithful record at n={}", r.n))?;
            }
            let settle = protocol::rounds_to_settle(&run.transcript, m, E2E_WINDOW).unwrap();
            return Ok(format!(
                "m={m}: decoded {decoded:?} by round {settle} (horizon {horizon}), P1 from round {}, usable {:?}",
                p1.from_round.unwrap(),
                run.report.usable_rounds
            ));
        }
        horizon *= 2;
        if horizon > E2E_MAX_HORIZON {
            return Err(format!(
                "m={m}: no settlement by horizon {E2E_MAX_HORIZON}; p1={}, usable {:?}",
                p1.holds, run.report.usable_rounds
            ));
        }
    }
}

fn c5_end_to_end() -> Check {
    let mut parts = Vec::new();
    for m in [1, 2, 4] {
        parts.push(e2e(m)?);
    }
    Ok(parts.join("; "))
}

fn c6_negative_controls() -> Check {
    // (a) local pair
    let local = BoxPair::local(LocalRule::Copy, LocalRule::Copy);
    let cfg = ProtocolConfig::new(
        vec![1, 0],
        SequenceSource::Diagonal {
            programs: DIAGONAL_PROGRAMS,
        },
        NEGATIVE_HORIZON,
    );
    let run = protocol::run_protocol(&cfg, &local).map_err(|e| e.to_string())?;
    ensure(run.report.usable_rounds.iter().all(|&c| c == 0), "(a) local pair had usable rounds")?;
    ensure(run.decode.message().is_none(), "(a) local pair settled a message")?;
    let p2 = protocol::check_p2(&run.transcript, &local, 2, cfg.window).map_err(|e| e.to_string())?;
    ensure(p2.counts.iter().all(|&c| c == 0) && !p2.pass, "(a) local pair shows dependence")?;

    // (b) the learning rounds never show (1, 1)
    let pr = BoxPair::pr(Alpha::Zero);
    let periodic: Vec<SwitchSymbol> = (0..NEGATIVE_HORIZON as usize)
        .map(|n| SwitchSymbol::from_index([0, 1, 2, 4][n % 4]))
        .collect();
    let cfg = ProtocolConfig::new(vec![1], SequenceSource::Inline { symbols: periodic }, NEGATIVE_HORIZON);
    let run = protocol::run_protocol(&cfg, &pr).map_err(|e| e.to_string())?;
    let guess = vm::enumerate(run.report.final_guess);
    for r in &run.transcript {
        if let SwitchSymbol::Learn { .. } = r.symbol {
            ensure(
                vm::run(&guess, r.x_in, r.y_in, r.n, &cfg.budget).bit() == Some(r.b_out),
                "(b) guess inconsistent with a learning round",
            )?;
        }
    }
    let p1 = protocol::check_p1(&run.transcript, &pr, &cfg.budget).map_err(|e| e.to_string())?;
    ensure(!p1.holds, "(b) P1 passed although (1, 1) was withheld")?;
    let (miss_n, miss_x, miss_y) = p1.first_mismatch.ok_or("(b) no mismatch reported")?;
    ensure((miss_x, miss_y) == (1, 1), "(b) mismatch not on the withheld setting")?;
    let withheld_guess = run.report.final_guess;

    // (c) the assumed budget is too small for B
    let pr_vm = BoxPair::pr_vm(ExecBudget::default());
    let mut cfg = ProtocolConfig::new(
        vec![1, 0],
        SequenceSource::Diagonal {
            programs: DIAGONAL_PROGRAMS,
        },
        NEGATIVE_HORIZON,
    );
    cfg.budget = ExecBudget::new(TimeBound::Linear, 1, 0, TINY_FUEL).unwrap();
    cfg.scan_cap = TINY_SCAN_CAP;
    let run = protocol::run_protocol(&cfg, &pr_vm).map_err(|e| e.to_string())?;
    ensure(run.report.time_assumption_violated, "(c) violation not flagged")?;
    ensure(run.decode.message() != Some(cfg.message.clone()), "(c) message decoded anyway")?;
    let p1 = protocol::check_p1(&run.transcript, &pr_vm, &cfg.budget).map_err(|e| e.to_string())?;
    ensure(!p1.holds, "(c) P1 passed")?;
    Ok(format!(
        "(a) 0 usable rounds; (b) guess #{withheld_guess} fits learning rounds, fails on (1,1) at n={miss_n}; (c) violation flagged, nothing decoded"
    ))
}

fn c7_chsh() -> Check {
    let start = Instant::now();
    let dist = estimate_distribution(&BoxPair::pr(Alpha::Parity), CHSH_ROUNDS, 7).map_err(|e| e.to_string())?;
    let pr_score = chsh_score(&dist).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(pr_score == q(4, 1), format!("PR scored {pr_score}"))?;
    ensure(elapsed < CHSH_MAX_TIME, format!("PR estimate took {elapsed:?}"))?;
    let vm_pr = estimate_distribution(&BoxPair::pr_vm(ExecBudget::default()), 2_000, 3).map_err(|e| e.to_string())?;
    ensure(chsh_score(&vm_pr).map_err(|e| e.to_string())? == q(4, 1), "program-backed PR below 4")?;
    let rules = [LocalRule::Zero, LocalRule::One, LocalRule::Copy, LocalRule::Negate, LocalRule::CopyParity];
    let mut max_local = q(-4, 1);
    for a in rules {
        for b in rules {
            let pair = BoxPair::local(a, b);
            let score = chsh_score(&estimate_distribution(&pair, 10_000, 5).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
            let abs = if score < Capital::zero() { -score.clone() } else { score.clone() };
            ensure(abs <= q(2, 1), format!("local {a:?}/{b:?} scored {score}"))?;
            if abs > max_local {
                max_local = abs;
            }
        }
    }
    Ok(format!("PR = 4 over {CHSH_ROUNDS} rounds in {elapsed:.2?}; max |local| = {max_local}"))
}

fn c8_helpers() -> Check {
    let d = analysis::signaling_distance(1.0, 1000).map_err(|e| e.to_string())?;
    ensure(d == 299_792_458_000.0, format!("distance {d}"))?;
    // independent evaluation: 2 m c^2 / (pi h / 2 pi) = 4 m c^2 / h
    let (c, h) = (299_792_458.0f64, 6.626_070_15e-34f64);
    for mass in [1e-3, 0.5, 1.0, 70.0, 5.97e24] {
        let v = analysis::lloyd_bound(mass).map_err(|e| e.to_string())?;
        let reference = 4.0 * mass * c * c / h;
        ensure(((v - reference) / reference).abs() < LLOYD_REL_TOL, format!("lloyd({mass}) = {v}, expected {reference}"))?;
        let doubled = analysis::lloyd_bound(2.0 * mass).map_err(|e| e.to_string())?;
        ensure(((doubled - 2.0 * v) / v).abs() < LINEARITY_REL_TOL, format!("lloyd not linear at {mass}"))?;
    }
    let one = analysis::lloyd_bound(1.0).unwrap();
    Ok(format!("c*1s*1000 = {d} m; lloyd(1 kg) = {one:.10e} ops/s"))
}

fn main() {
    let criteria: [Criterion; 8] = [
        (1, "fairness", c1_fairness),
        (2, "flag growth", c2_fact1_growth),
        (3, "diagonal boundedness", c3_diagonal_bounded),
        (4, "learner convergence", c4_learner_convergence),
        (5, "end-to-end signaling", c5_end_to_end),
        (6, "negative controls", c6_negative_controls),
        (7, "CHSH values", c7_chsh),
        (8, "helper formulas", c8_helpers),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, check) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id} ({name}): PASS [{secs:.1}s] {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {id} ({name}): FAIL [{secs:.1}s] {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
