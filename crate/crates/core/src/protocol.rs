//! The signaling protocol `P(t, S, m)`.
//!
//! Alice and Bob share a switching sequence `S`. On a learning round `S(n)`
//! names an input pair; both feed it and Bob hands his output to the learner,
//! which converges to his box function `B`. On a signaling round `S(n) = i`
//! Alice feeds bit `i` of her message and Bob feeds an input `y` on which his
//! current guess reads Alice's input, then inverts the guess on his output.

use std::fmt;
use std::path::PathBuf;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::betting::{self, Alphabet, Bettor, Capital, Fact1Mixture, Gamma, Predicate, WeightedBettorFamily};
use crate::boxes::{BoxError, BoxPair, Side};
use crate::learner::{LearnerState, LearnerStatus, Sample, DEFAULT_SCAN_CAP};
use crate::vm::{self, ExecBudget};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("switching sequence has {len} symbols, horizon needs {horizon}")]
    SequenceExhausted { len: usize, horizon: u64 },
    #[error(transparent)]
    Box(#[from] BoxError),
    #[error(transparent)]
    Io(#[from] crate::io::IoError),
}

/// One symbol of the switching sequence. Signal indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchSymbol {
    Learn { x: u8, y: u8 },
    Signal { i: usize },
}

impl SwitchSymbol {
    pub const LEARN_PAIRS: [SwitchSymbol; 4] = [
        SwitchSymbol::Learn { x: 0, y: 0 },
        SwitchSymbol::Learn { x: 0, y: 1 },
        SwitchSymbol::Learn { x: 1, y: 0 },
        SwitchSymbol::Learn { x: 1, y: 1 },
    ];

    /// Position in the alphabet `(0,0) < (0,1) < (1,0) < (1,1) < 1 < ... < m`.
    pub fn to_index(self) -> usize {
        match self {
            SwitchSymbol::Learn { x, y } => 2 * x as usize + y as usize,
            SwitchSymbol::Signal { i } => 3 + i,
        }
    }

    pub fn from_index(index: usize) -> Self {
        if index < 4 {
            SwitchSymbol::Learn {
                x: (index >> 1) as u8,
                y: (index & 1) as u8,
            }
        } else {
            SwitchSymbol::Signal { i: index - 3 }
        }
    }

    pub fn is_valid(self, m: usize) -> bool {
        match self {
            SwitchSymbol::Learn { x, y } => x <= 1 && y <= 1,
            SwitchSymbol::Signal { i } => (1..=m).contains(&i),
        }
    }
}

impl fmt::Display for SwitchSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SwitchSymbol::Learn { x, y } => write!(f, "L {x} {y}"),
            SwitchSymbol::Signal { i } => write!(f, "S {i}"),
        }
    }
}

/// The `4 + m` symbol alphabet of switching sequences.
pub fn switch_alphabet(m: usize) -> Alphabet {
    Alphabet::new((0..4 + m).map(|s| SwitchSymbol::from_index(s).to_string())).expect("labels are distinct")
}

/// Where the switching sequence comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum SequenceSource {
    /// Diagonal sequence against the default family over programs `0..programs`.
    Diagonal {
        #[serde(default = "default_programs")]
        programs: u64,
    },
    File { path: PathBuf },
    Inline { symbols: Vec<SwitchSymbol> },
}

pub const DEFAULT_FAMILY_PROGRAMS: u64 = 200;
pub const DEFAULT_WINDOW: u64 = 5;

fn default_programs() -> u64 {
    DEFAULT_FAMILY_PROGRAMS
}

fn default_window() -> u64 {
    DEFAULT_WINDOW
}

fn default_scan_cap() -> u64 {
    DEFAULT_SCAN_CAP
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    /// The assumed time bound `t` on Bob's box.
    #[serde(default)]
    pub budget: ExecBudget,
    /// Alice's message, one bit per signal index.
    pub message: Vec<u8>,
    pub sequence: SequenceSource,
    pub horizon: u64,
    #[serde(default = "default_window")]
    pub window: u64,
    #[serde(default = "default_scan_cap")]
    pub scan_cap: u64,
}

impl ProtocolConfig {
    pub fn new(message: Vec<u8>, sequence: SequenceSource, horizon: u64) -> Self {
        ProtocolConfig {
            budget: ExecBudget::default(),
            message,
            sequence,
            horizon,
            window: DEFAULT_WINDOW,
            scan_cap: DEFAULT_SCAN_CAP,
        }
    }

    pub fn m(&self) -> usize {
        self.message.len()
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        let bad = |msg: &str| Err(ProtocolError::Config(msg.into()));
        if self.message.is_empty() {
            return bad("message must have at least one bit");
        }
        if self.message.iter().any(|&b| b > 1) {
            return bad("message bits must be 0 or 1");
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if self.window == 0 {
            return bad("window must be at least 1");
        }
        if let SequenceSource::Diagonal { programs: 0 } = self.sequence {
            return bad("diagonal family needs at least one program");
        }
        self.budget
            .validate()
            .map_err(|e| ProtocolError::Config(e.to_string()))
    }

    /// The first `horizon` symbols of the configured sequence.
    pub fn materialize_sequence(&self) -> Result<Vec<SwitchSymbol>, ProtocolError> {
        let m = self.m();
        let seq = match &self.sequence {
            SequenceSource::Diagonal { programs } => {
                let family = build_default_family(&self.budget, m, *programs);
                betting::diagonal_sequence(&family, &switch_alphabet(m), self.horizon as usize)
                    .sequence
                    .into_iter()
                    .map(SwitchSymbol::from_index)
                    .collect()
            }
            SequenceSource::File { path } => crate::io::read_sequence(path)?,
            SequenceSource::Inline { symbols } => symbols.clone(),
        };
        if let Some(bad) = seq.iter().find(|s| !s.is_valid(m)) {
            return Err(ProtocolError::Config(format!("symbol `{bad}` is not valid for m = {m}")));
        }
        Ok(seq)
    }
}

/// The forbidden sets of the default family, in rank order within one program.
pub fn default_gammas(m: usize) -> Vec<Vec<usize>> {
    let learn: Vec<usize> = (0..4).collect();
    let signal: Vec<usize> = (4..4 + m).collect();
    let mut gammas = vec![learn, signal];
    gammas.extend((4..4 + m).map(|s| vec![s]));
    gammas.extend((0..4).map(|s| vec![s]));
    gammas
}

/// Threshold mixtures for every program index `p < programs` (as the
/// predicate `n -> enumerate(p)(0, 0, n)`) crossed with [`default_gammas`].
/// Member `r` in program-major order has weight `2^-(r+1)`.
pub fn build_default_family(budget: &ExecBudget, m: usize, programs: u64) -> WeightedBettorFamily {
    let k = 4 + m;
    let gammas: Vec<Gamma> = default_gammas(m)
        .iter()
        .map(|g| Gamma::new(g, k).expect("default sets are proper"))
        .collect();
    let mut family = WeightedBettorFamily::new();
    let mut weight = BigRational::new(BigInt::one(), BigInt::from(2));
    for p in 0..programs {
        let g = Predicate::program(vm::enumerate(p), *budget);
        for gamma in &gammas {
            let strategy = Fact1Mixture::new(g.clone(), gamma.clone());
            let bettor = Bettor::new(Box::new(strategy), Capital::one()).expect("positive capital");
            family.push(bettor, weight.clone()).expect("positive weight");
            weight /= BigInt::from(2);
        }
    }
    family
}

/// Alice sees the switching symbol and her message, nothing else.
#[derive(Debug, Clone)]
pub struct Alice {
    message: Vec<u8>,
}

impl Alice {
    pub fn new(message: Vec<u8>) -> Self {
        Alice { message }
    }

    pub fn input(&self, symbol: SwitchSymbol) -> u8 {
        match symbol {
            SwitchSymbol::Learn { x, .. } => x,
            SwitchSymbol::Signal { i } => self.message[i - 1],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitEstimate {
    pub bit: Option<u8>,
    pub last_update_round: Option<u64>,
    /// Consecutive usable rounds that decoded the current value.
    pub streak: u64,
    pub settled: bool,
}

/// Latest-wins decoding with a settlement window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeState {
    pub window: u64,
    pub estimates: Vec<BitEstimate>,
}

impl DecodeState {
    pub fn new(m: usize, window: u64) -> Self {
        DecodeState {
            window,
            estimates: vec![BitEstimate::default(); m],
        }
    }

    /// Record bit `i` (0-based) decoded as `bit` in round `n`.
    pub fn record(&mut self, i: usize, bit: u8, n: u64) {
        let e = &mut self.estimates[i];
        if e.bit == Some(bit) {
            e.streak += 1;
        } else {
            e.bit = Some(bit);
            e.streak = 1;
        }
        e.last_update_round = Some(n);
        e.settled = e.streak >= self.window;
    }

    pub fn all_settled(&self) -> bool {
        self.estimates.iter().all(|e| e.settled)
    }

    /// The message, if every bit has settled.
    pub fn message(&self) -> Option<Vec<u8>> {
        if !self.all_settled() {
            return None;
        }
        self.estimates.iter().map(|e| e.bit).collect()
    }
}

/// Bob sees the switching symbol, his own output and his learner.
#[derive(Debug, Clone)]
pub struct Bob {
    budget: ExecBudget,
    learner: LearnerState,
    decode: DecodeState,
    last_change: Option<u64>,
}

impl Bob {
    pub fn new(budget: ExecBudget, scan_cap: u64, m: usize, window: u64) -> Self {
        Bob {
            budget,
            learner: LearnerState::new(scan_cap),
            decode: DecodeState::new(m, window),
            last_change: None,
        }
    }

    pub fn learner(&self) -> &LearnerState {
        &self.learner
    }

    pub fn decode_state(&self) -> &DecodeState {
        &self.decode
    }

    /// `B~(x, y, n)` under the current guess.
    pub fn predict(&self, x: u8, y: u8, n: u64) -> Option<u8> {
        self.learner.predict(x, y, n, &self.budget)
    }

    /// Least `y` on which the current guess reads Alice's input at round `n`.
    pub fn distinguishing_input(&self, n: u64) -> Option<u8> {
        (0..2).find(|&y| {
            let (b0, b1) = (self.predict(0, y, n), self.predict(1, y, n));
            b0.is_some() && b1.is_some() && b0 != b1
        })
    }

    pub fn input(&self, n: u64, symbol: SwitchSymbol) -> u8 {
        match symbol {
            SwitchSymbol::Learn { y, .. } => y,
            SwitchSymbol::Signal { .. } => self.distinguishing_input(n).unwrap_or(0),
        }
    }

    /// Take the round's output. Returns the decoded `(index, bit)`, if any.
    pub fn observe(&mut self, n: u64, symbol: SwitchSymbol, y: u8, b: u8) -> Option<(usize, u8)> {
        match symbol {
            SwitchSymbol::Learn { x, .. } => {
                let before = self.learner.guess_index();
                let learner = std::mem::take(&mut self.learner);
                self.learner = learner
                    .update(Sample { x, y, n, b }, &self.budget)
                    .expect("rounds arrive in increasing order");
                if self.learner.guess_index() != before {
                    self.last_change = Some(n);
                }
                None
            }
            SwitchSymbol::Signal { i } => {
                if self.distinguishing_input(n) != Some(y) {
                    return None;
                }
                let x = (0..2).find(|&x| self.predict(x, y, n) == Some(b))?;
                self.decode.record(i - 1, x, n);
                Some((i, x))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub n: u64,
    pub symbol: SwitchSymbol,
    pub x_in: u8,
    pub y_in: u8,
    pub a_out: u8,
    pub b_out: u8,
    /// Bob's guess at the end of the round.
    pub guess_index: u64,
    pub learner_status: LearnerStatus,
    /// `(signal index, decoded bit)` when Bob decoded this round.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoded: Option<(usize, u8)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct P1P2Report {
    /// Round whose update produced the final guess (0 if it never changed);
    /// `None` if the
    /// learner ran out of class.
    pub stabilization_round: Option<u64>,
    pub final_guess: u64,
    pub mind_changes: u64,
    /// Rounds per signal index on which Bob decoded.
    pub usable_rounds: Vec<u64>,
    /// No program within the scan cap fits Bob's box under the assumed budget.
    pub time_assumption_violated: bool,
}

#[derive(Debug, Clone)]
pub struct ProtocolRun {
    pub transcript: Vec<RoundRecord>,
    pub decode: DecodeState,
    pub report: P1P2Report,
}

pub fn run_protocol(cfg: &ProtocolConfig, pair: &BoxPair) -> Result<ProtocolRun, ProtocolError> {
    cfg.validate()?;
    let s = cfg.materialize_sequence()?;
    run_protocol_on(cfg, pair, &s)
}

/// Run with an explicit switching sequence; `cfg.sequence` is ignored.
pub fn run_protocol_on(cfg: &ProtocolConfig, pair: &BoxPair, s: &[SwitchSymbol]) -> Result<ProtocolRun, ProtocolError> {
    cfg.validate()?;
    if (s.len() as u64) < cfg.horizon {
        return Err(ProtocolError::SequenceExhausted {
            len: s.len(),
            horizon: cfg.horizon,
        });
    }
    let m = cfg.m();
    if let Some(bad) = s.iter().find(|sym| !sym.is_valid(m)) {
        return Err(ProtocolError::Config(format!("symbol `{bad}` is not valid for m = {m}")));
    }
    let alice = Alice::new(cfg.message.clone());
    let mut bob = Bob::new(cfg.budget, cfg.scan_cap, m, cfg.window);
    let mut usable = vec![0u64; m];
    let mut transcript = Vec::with_capacity(cfg.horizon as usize);
    for n in 0..cfg.horizon {
        let symbol = s[n as usize];
        let x = alice.input(symbol);
        let y = bob.input(n, symbol);
        let (a, b) = pair.query(n, x, y)?;
        let decoded = bob.observe(n, symbol, y, b);
        if let Some((i, _)) = decoded {
            usable[i - 1] += 1;
        }
        transcript.push(RoundRecord {
            n,
            symbol,
            x_in: x,
            y_in: y,
            a_out: a,
            b_out: b,
            guess_index: bob.learner().guess_index(),
            learner_status: bob.learner().status(),
            decoded,
        });
    }
    let exhausted = bob.learner().is_exhausted();
    let report = P1P2Report {
        stabilization_round: if exhausted {
            None
        } else {
            Some(bob.last_change.unwrap_or(0))
        },
        final_guess: bob.learner().guess_index(),
        mind_changes: bob.learner().mind_changes(),
        usable_rounds: usable,
        time_assumption_violated: exhausted,
    };
    Ok(ProtocolRun {
        transcript,
        decode: bob.decode.clone(),
        report,
    })
}

/// Rounds elapsed until every bit had settled for the first time, replaying
/// the decodes recorded in the transcript.
pub fn rounds_to_settle(transcript: &[RoundRecord], m: usize, window: u64) -> Option<u64> {
    let mut state = DecodeState::new(m, window);
    for r in transcript {
        if let Some((i, bit)) = r.decoded {
            state.record(i - 1, bit, r.n);
            if state.all_settled() {
                return Some(r.n + 1);
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct P1Verdict {
    pub from_round: Option<u64>,
    pub holds: bool,
    /// First `(n, x, y)` where the final guess and the box disagree.
    pub first_mismatch: Option<(u64, u8, u8)>,
}

/// Does the final guess agree with `B` on all four settings from the
/// stabilization round to the end of the transcript?
pub fn check_p1(transcript: &[RoundRecord], pair: &BoxPair, budget: &ExecBudget) -> Result<P1Verdict, BoxError> {
    let Some(last) = transcript.last() else {
        return Ok(P1Verdict {
            from_round: None,
            holds: false,
            first_mismatch: None,
        });
    };
    if last.learner_status == LearnerStatus::ClassExhausted {
        return Ok(P1Verdict {
            from_round: None,
            holds: false,
            first_mismatch: None,
        });
    }
    let guess = vm::enumerate(last.guess_index);
    let from = transcript
        .iter()
        .rposition(|r| r.guess_index != last.guess_index)
        .map_or(transcript[0].n, |i| transcript[i].n + 1);
    for r in transcript.iter().filter(|r| r.n >= from) {
        for (x, y) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let truth = pair.output(Side::B, x, y, r.n)?;
            if vm::run(&guess, x, y, r.n, budget).bit() != Some(truth) {
                return Ok(P1Verdict {
                    from_round: Some(from),
                    holds: false,
                    first_mismatch: Some((r.n, x, y)),
                });
            }
        }
    }
    Ok(P1Verdict {
        from_round: Some(from),
        holds: true,
        first_mismatch: None,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct P2Verdict {
    /// Per signal index: rounds where `B` itself reads Alice's input.
    pub counts: Vec<u64>,
    pub window: u64,
    pub pass: bool,
}

pub fn check_p2(transcript: &[RoundRecord], pair: &BoxPair, m: usize, window: u64) -> Result<P2Verdict, BoxError> {
    let mut counts = vec![0u64; m];
    for r in transcript {
        if let SwitchSymbol::Signal { i } = r.symbol {
            let mut dependent = false;
            for y in 0..2 {
                if pair.output(Side::B, 0, y, r.n)? != pair.output(Side::B, 1, y, r.n)? {
                    dependent = true;
                    break;
                }
            }
            if dependent && i <= m {
                counts[i - 1] += 1;
            }
        }
    }
    let pass = counts.iter().all(|&c| c >= window);
    Ok(P2Verdict { counts, window, pass })
}
