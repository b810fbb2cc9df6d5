//! The betting game behind resource-bounded randomness.
//!
//! A gambler holding capital `M` splits fractions `d_i` of it over the `k`
//! symbols of the alphabet. When symbol `s` is revealed the capital becomes
//! `M * (1 + k * d_s - sum_i d_i)`: bets on other symbols are lost and the bet
//! on `s` pays `k` to one. All capital arithmetic is exact.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::vm::{self, ExecBudget, Program};

pub type Capital = BigRational;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BettingError {
    #[error("invalid alphabet: {0}")]
    InvalidAlphabet(String),
    #[error("invalid bet: {0}")]
    InvalidBet(String),
    #[error("invalid forbidden set: {0}")]
    InvalidGamma(String),
    #[error("symbol {symbol} outside alphabet of size {k}")]
    SymbolOutOfRange { symbol: usize, k: usize },
}

pub fn rational(num: i64, den: i64) -> Capital {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Ordered finite alphabet; symbols are referred to by position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    labels: Vec<String>,
}

impl Alphabet {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self, BettingError> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() < 2 {
            return Err(BettingError::InvalidAlphabet(format!(
                "need at least two symbols, got {}",
                labels.len()
            )));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(BettingError::InvalidAlphabet(format!("duplicate symbol `{l}`")));
            }
        }
        Ok(Alphabet { labels })
    }

    /// Symbols labelled `0..k`.
    pub fn numeric(k: usize) -> Result<Self, BettingError> {
        Alphabet::new((0..k).map(|i| i.to_string()))
    }

    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, symbol: usize) -> &str {
        &self.labels[symbol]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Fractions of the current capital placed on each symbol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BetVector(Vec<Capital>);

impl BetVector {
    pub fn new(fractions: Vec<Capital>) -> Result<Self, BettingError> {
        if fractions.iter().any(|d| d.is_negative()) {
            return Err(BettingError::InvalidBet("negative fraction".into()));
        }
        let total: Capital = fractions.iter().sum();
        if total > Capital::one() {
            return Err(BettingError::InvalidBet(format!("fractions sum to {total} > 1")));
        }
        Ok(BetVector(fractions))
    }

    pub fn even(k: usize) -> Self {
        BetVector(vec![rational(1, k as i64); k])
    }

    pub fn fractions(&self) -> &[Capital] {
        &self.0
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    /// Multiplier `1 + k * d_s - sum_i d_i` applied when `s` is revealed.
    pub fn factor(&self, outcome: usize) -> Capital {
        let k = BigRational::from_integer(BigInt::from(self.0.len()));
        let total: Capital = self.0.iter().sum();
        Capital::one() + k * &self.0[outcome] - total
    }
}

/// Settle one round of the game.
pub fn settle(capital: &Capital, bet: &BetVector, outcome: usize, k: usize) -> Result<Capital, BettingError> {
    if bet.k() != k {
        return Err(BettingError::InvalidBet(format!(
            "bet covers {} symbols, alphabet has {k}",
            bet.k()
        )));
    }
    if outcome >= k {
        return Err(BettingError::SymbolOutOfRange { symbol: outcome, k });
    }
    // re-validate: the vector may have been built without `new`
    BetVector::new(bet.0.clone())?;
    Ok(capital * bet.factor(outcome))
}

/// What a strategy wagers on the next symbol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Bet {
    /// `1/k` on every symbol; leaves the capital unchanged.
    Even,
    Fractions(Vec<Capital>),
    /// A fraction `stake` of the capital split evenly over the symbols
    /// outside `gamma`, the rest bet evenly.
    Split { stake: Capital, gamma: Gamma },
}

impl Bet {
    /// Capital multipliers per outcome, or `None` for a neutral bet.
    /// Malformed bets are neutral.
    pub fn payoff(self, k: usize) -> Option<Payoff> {
        match self {
            Bet::Even => None,
            Bet::Fractions(f) if f.len() == k => {
                let bet = BetVector::new(f).ok()?;
                Some(Payoff::PerSymbol((0..k).map(|s| bet.factor(s)).collect()))
            }
            Bet::Fractions(_) => None,
            Bet::Split { stake, gamma } => {
                if gamma.k() != k || stake.is_negative() || stake > Capital::one() {
                    return None;
                }
                let inside = Capital::one() - &stake;
                let gain = rational(k as i64, gamma.outside() as i64);
                let outside = &inside + stake * gain;
                Some(Payoff::Split { inside, outside, gamma })
            }
        }
    }

    /// The bet as a fraction per symbol.
    pub fn fractions(&self, k: usize) -> Vec<Capital> {
        match self {
            Bet::Even => BetVector::even(k).0,
            Bet::Fractions(f) => f.clone(),
            Bet::Split { stake, gamma } => {
                let idle = (Capital::one() - stake) / BigInt::from(k);
                let share = stake / BigInt::from(gamma.outside());
                (0..k)
                    .map(|s| if gamma.contains(s) { idle.clone() } else { &idle + &share })
                    .collect()
            }
        }
    }
}

/// Settlement multipliers `1 + k * d_s - sum_i d_i` of a valid bet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payoff {
    PerSymbol(Vec<Capital>),
    /// One multiplier for the symbols in `gamma`, one for the rest.
    Split {
        inside: Capital,
        outside: Capital,
        gamma: Gamma,
    },
}

impl Payoff {
    pub fn factor(&self, outcome: usize) -> &Capital {
        match self {
            Payoff::PerSymbol(f) => &f[outcome],
            Payoff::Split {
                inside,
                outside,
                gamma,
            } => {
                if gamma.contains(outcome) {
                    inside
                } else {
                    outside
                }
            }
        }
    }
}

/// A betting strategy: a function from the revealed prefix to a bet.
///
/// Implementations may keep caches but `bet` must depend on `prefix` alone.
pub trait Strategy: Send {
    fn bet(&mut self, prefix: &[usize], k: usize) -> Bet;

    fn box_clone(&self) -> Box<dyn Strategy>;

    /// Two strategies returning equal keys for `len` bet identically on
    /// every prefix shorter than `len`.
    fn equivalence_key(&mut self, _len: usize) -> Option<String> {
        None
    }

    fn describe(&self) -> String;
}

impl Clone for Box<dyn Strategy> {
    fn clone(&self) -> Self {
        self.box_clone()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EvenStrategy;

impl Strategy for EvenStrategy {
    fn bet(&mut self, _prefix: &[usize], _k: usize) -> Bet {
        Bet::Even
    }
    fn box_clone(&self) -> Box<dyn Strategy> {
        Box::new(*self)
    }
    fn equivalence_key(&mut self, _len: usize) -> Option<String> {
        Some("even".into())
    }
    fn describe(&self) -> String {
        "even".into()
    }
}

/// The same bet at every position.
#[derive(Debug, Clone)]
pub struct FixedStrategy(pub Vec<Capital>);

impl Strategy for FixedStrategy {
    fn bet(&mut self, _prefix: &[usize], _k: usize) -> Bet {
        Bet::Fractions(self.0.clone())
    }
    fn box_clone(&self) -> Box<dyn Strategy> {
        Box::new(self.clone())
    }
    fn describe(&self) -> String {
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        format!("fixed({})", parts.join(","))
    }
}

/// A 0/1 predicate on positions.
#[derive(Clone)]
pub enum Predicate {
    Const(bool),
    Native(Arc<dyn Fn(u64) -> bool + Send + Sync>),
    /// Output bit of a program on `(x, y, n)`; an exhausted clock reads as 0.
    Program {
        program: Program,
        budget: ExecBudget,
        x: u8,
        y: u8,
    },
}

impl Predicate {
    pub fn native(f: impl Fn(u64) -> bool + Send + Sync + 'static) -> Self {
        Predicate::Native(Arc::new(f))
    }

    pub fn program(program: Program, budget: ExecBudget) -> Self {
        Predicate::Program {
            program,
            budget,
            x: 0,
            y: 0,
        }
    }

    pub fn eval(&self, n: u64) -> bool {
        match self {
            Predicate::Const(b) => *b,
            Predicate::Native(f) => f(n),
            Predicate::Program {
                program,
                budget,
                x,
                y,
            } => vm::run(program, *x, *y, n, budget).bit() == Some(1),
        }
    }

    fn describe(&self) -> String {
        match self {
            Predicate::Const(b) => format!("const({})", *b as u8),
            Predicate::Native(_) => "native".into(),
            Predicate::Program { program, .. } => format!("program#{}", program.index()),
        }
    }

    fn comparable(&self) -> bool {
        !matches!(self, Predicate::Native(_))
    }
}

impl fmt::Debug for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

/// Predicate values memoised by position.
#[derive(Debug, Clone)]
struct PredicateTrace {
    predicate: Predicate,
    values: Vec<bool>,
}

impl PredicateTrace {
    fn new(predicate: Predicate) -> Self {
        PredicateTrace {
            predicate,
            values: Vec::new(),
        }
    }

    fn get(&mut self, n: usize) -> bool {
        while self.values.len() <= n {
            let v = self.predicate.eval(self.values.len() as u64);
            self.values.push(v);
        }
        self.values[n]
    }

    fn key(&mut self, len: usize) -> Option<String> {
        if !self.predicate.comparable() {
            return None;
        }
        if len > 0 {
            self.get(len - 1);
        }
        Some(self.values[..len].iter().map(|&b| if b { '1' } else { '0' }).collect())
    }
}

/// Membership mask of a forbidden set `Γ`, checked to be a proper nonempty subset.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Gamma {
    member: Vec<bool>,
}

impl Gamma {
    pub fn new(symbols: &[usize], k: usize) -> Result<Self, BettingError> {
        let mut member = vec![false; k];
        for &s in symbols {
            if s >= k {
                return Err(BettingError::SymbolOutOfRange { symbol: s, k });
            }
            member[s] = true;
        }
        let size = member.iter().filter(|&&m| m).count();
        if size == 0 {
            return Err(BettingError::InvalidGamma("empty".into()));
        }
        if size == k {
            return Err(BettingError::InvalidGamma("equals the whole alphabet".into()));
        }
        Ok(Gamma { member })
    }

    pub fn contains(&self, s: usize) -> bool {
        self.member[s]
    }

    pub fn k(&self) -> usize {
        self.member.len()
    }

    /// `#(Σ \ Γ)`
    pub fn outside(&self) -> usize {
        self.member.iter().filter(|&&m| !m).count()
    }

    pub fn symbols(&self) -> Vec<usize> {
        (0..self.k()).filter(|&s| self.member[s]).collect()
    }

    fn tag(&self) -> String {
        let syms: Vec<String> = self.symbols().iter().map(|s| s.to_string()).collect();
        syms.join("|")
    }
}

/// Waits for positions flagged by `g` and then puts the whole capital on the
/// symbols outside `Γ`. Bets evenly on the first `threshold` positions and
/// wherever `g` is 0.
#[derive(Debug, Clone)]
pub struct Fact1Strategy {
    g: PredicateTrace,
    gamma: Gamma,
    threshold: u64,
}

impl Strategy for Fact1Strategy {
    fn bet(&mut self, prefix: &[usize], k: usize) -> Bet {
        let n = prefix.len();
        debug_assert_eq!(k, self.gamma.k());
        if (n as u64) < self.threshold || !self.g.get(n) {
            Bet::Even
        } else {
            Bet::Split {
                stake: Capital::one(),
                gamma: self.gamma.clone(),
            }
        }
    }
    fn box_clone(&self) -> Box<dyn Strategy> {
        Box::new(self.clone())
    }
    fn equivalence_key(&mut self, len: usize) -> Option<String> {
        let trace = self.g.key(len)?;
        Some(format!("fact1;{};{};{}", self.gamma.tag(), self.threshold, trace))
    }
    fn describe(&self) -> String {
        format!(
            "fact1(g={}, gamma={{{}}}, threshold={})",
            self.g.predicate.describe(),
            self.gamma.tag(),
            self.threshold
        )
    }
}

/// Weight of the copy activated at position `m` in a threshold mixture.
pub fn threshold_weight(m: u64) -> Capital {
    BigRational::new(BigInt::one(), BigInt::from(m + 1) * BigInt::from(m + 2))
}

/// Total weight of the copies not yet active at position `n`.
fn pending_weight(n: u64) -> Capital {
    BigRational::new(BigInt::one(), BigInt::from(n + 2))
}

/// The capital-weighted mixture, over every threshold `m`, of the
/// [`Fact1Strategy`] that waits `m` positions. Copy `m` carries weight
/// `1/((m+1)(m+2))`; the weights sum to one.
///
/// A single all-in copy is wiped out by the first flagged position that lands
/// in `Γ`. The mixture keeps activating fresh copies, so it stays solvent and
/// keeps pressing at every later flagged position.
#[derive(Debug, Clone)]
pub struct Fact1Mixture {
    g: PredicateTrace,
    gamma: Gamma,
    /// Prefix length the running totals below correspond to.
    seen: usize,
    /// Weighted capital of the live, active copies before betting at `seen`.
    active: Capital,
}

impl Fact1Mixture {
    pub fn new(g: Predicate, gamma: Gamma) -> Self {
        Fact1Mixture {
            g: PredicateTrace::new(g),
            gamma,
            seen: 0,
            active: threshold_weight(0),
        }
    }

    fn advance_to(&mut self, prefix: &[usize]) {
        if prefix.len() < self.seen {
            self.seen = 0;
            self.active = threshold_weight(0);
        }
        let k = self.gamma.k();
        while self.seen < prefix.len() {
            let n = self.seen;
            if self.g.get(n) {
                if self.gamma.contains(prefix[n]) {
                    self.active = Capital::zero();
                } else {
                    let gain = rational(k as i64, self.gamma.outside() as i64);
                    self.active = &self.active * gain;
                }
            }
            self.seen += 1;
            self.active += threshold_weight(self.seen as u64);
        }
    }
}

impl Strategy for Fact1Mixture {
    fn bet(&mut self, prefix: &[usize], k: usize) -> Bet {
        let n = prefix.len();
        if !self.g.get(n) {
            return Bet::Even;
        }
        self.advance_to(prefix);
        let capital = &self.active + pending_weight(n as u64);
        debug_assert_eq!(k, self.gamma.k());
        Bet::Split {
            stake: &self.active / capital,
            gamma: self.gamma.clone(),
        }
    }
    fn box_clone(&self) -> Box<dyn Strategy> {
        Box::new(self.clone())
    }
    fn equivalence_key(&mut self, len: usize) -> Option<String> {
        let trace = self.g.key(len)?;
        Some(format!("fact1-mixture;{};{}", self.gamma.tag(), trace))
    }
    fn describe(&self) -> String {
        format!(
            "fact1-mixture(g={}, gamma={{{}}})",
            self.g.predicate.describe(),
            self.gamma.tag()
        )
    }
}

/// A strategy together with its capital.
#[derive(Clone)]
pub struct Bettor {
    strategy: Box<dyn Strategy>,
    capital: Capital,
    initial: Capital,
}

impl fmt::Debug for Bettor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Bettor")
            .field("strategy", &self.strategy.describe())
            .field("capital", &self.capital)
            .field("initial", &self.initial)
            .finish()
    }
}

impl Bettor {
    pub fn new(strategy: Box<dyn Strategy>, initial: Capital) -> Result<Self, BettingError> {
        if !initial.is_positive() {
            return Err(BettingError::InvalidBet("initial capital must be positive".into()));
        }
        Ok(Bettor {
            strategy,
            capital: initial.clone(),
            initial,
        })
    }

    pub fn even() -> Self {
        Bettor::new(Box::new(EvenStrategy), Capital::one()).expect("positive")
    }

    pub fn capital(&self) -> &Capital {
        &self.capital
    }

    pub fn initial(&self) -> &Capital {
        &self.initial
    }

    pub fn describe(&self) -> String {
        self.strategy.describe()
    }

    /// The strategy's bet on the symbol after `prefix`.
    pub fn bet(&mut self, prefix: &[usize], k: usize) -> Bet {
        self.strategy.bet(prefix, k)
    }

    /// Settlement multipliers of the next bet; `None` means neutral.
    pub fn payoff(&mut self, prefix: &[usize], k: usize) -> Option<Payoff> {
        self.strategy.bet(prefix, k).payoff(k)
    }

    /// Bet on the next symbol, reveal `outcome`, and return the new capital.
    pub fn play(&mut self, prefix: &[usize], outcome: usize, k: usize) -> &Capital {
        if let Some(p) = self.payoff(prefix, k) {
            self.capital = &self.capital * p.factor(outcome);
        }
        &self.capital
    }

    fn equivalence_key(&mut self, len: usize) -> Option<String> {
        self.strategy
            .equivalence_key(len)
            .map(|key| format!("{key};{}", self.initial))
    }
}

/// Build the strategy of [`fact1_bettor`].
pub fn fact1_strategy(g: Predicate, gamma: Gamma, threshold: u64) -> Fact1Strategy {
    Fact1Strategy {
        g: PredicateTrace::new(g),
        gamma,
        threshold,
    }
}

/// The winning strategy against sequences that avoid `Γ` wherever `g` fires.
/// The first `threshold` positions are bet evenly.
pub fn fact1_bettor(
    g: Predicate,
    gamma: &[usize],
    alphabet: &Alphabet,
    threshold: u64,
) -> Result<Bettor, BettingError> {
    let gamma = Gamma::new(gamma, alphabet.k())?;
    Bettor::new(Box::new(fact1_strategy(g, gamma, threshold)), Capital::one())
}

/// Capital after each prefix of `sequence`, starting with the initial capital.
pub fn run_bettor(bettor: &Bettor, sequence: &[usize], k: usize) -> Vec<Capital> {
    let mut b = bettor.clone();
    b.capital = b.initial.clone();
    let mut traj = Vec::with_capacity(sequence.len() + 1);
    traj.push(b.capital.clone());
    for n in 0..sequence.len() {
        traj.push(b.play(&sequence[..n], sequence[n], k).clone());
    }
    traj
}

#[derive(Debug, Clone, Default)]
pub struct WeightedBettorFamily {
    entries: Vec<(Bettor, Capital)>,
}

impl WeightedBettorFamily {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bettor: Bettor, weight: Capital) -> Result<(), BettingError> {
        if !weight.is_positive() {
            return Err(BettingError::InvalidBet("family weights must be positive".into()));
        }
        self.entries.push((bettor, weight));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(Bettor, Capital)] {
        &self.entries
    }

    /// `sum_j w_j * M_j(empty)`
    pub fn initial_total(&self) -> Capital {
        self.entries.iter().map(|(b, w)| w * &b.initial).sum()
    }

    /// Largest capital member `i` may reach under the diagonal construction.
    pub fn capital_bound(&self, i: usize) -> Capital {
        self.initial_total() / &self.entries[i].1
    }
}

#[derive(Debug, Clone)]
pub struct DiagonalRun {
    pub sequence: Vec<usize>,
    /// Weighted total capital after each prefix, `0..=length`.
    pub weighted_totals: Vec<Capital>,
    /// Largest capital each family member held along the run.
    pub peak_capitals: Vec<Capital>,
    pub final_capitals: Vec<Capital>,
}

struct Group {
    bettor: Bettor,
    weight: Capital,
    /// `weight * capital`, the group's share of the weighted total.
    weighted: Capital,
    peak: Capital,
    dead: bool,
}

/// Emit `length` symbols, each minimising the weighted total capital of the
/// family after settlement. Ties go to the smallest symbol.
///
/// Members whose strategies report the same equivalence key are settled once
/// with their weights pooled; this changes neither the sequence nor any
/// member's capital.
pub fn diagonal_sequence(family: &WeightedBettorFamily, alphabet: &Alphabet, length: usize) -> DiagonalRun {
    let k = alphabet.k();
    let mut groups: Vec<Group> = Vec::new();
    let mut by_key: HashMap<String, usize> = HashMap::new();
    let mut member_group = Vec::with_capacity(family.len());
    for (bettor, weight) in &family.entries {
        let mut bettor = bettor.clone();
        bettor.capital = bettor.initial.clone();
        let key = bettor.equivalence_key(length);
        match key.as_ref().and_then(|key| by_key.get(key).copied()) {
            Some(g) => {
                groups[g].weight += weight;
                member_group.push(g);
            }
            None => {
                if let Some(key) = key {
                    by_key.insert(key, groups.len());
                }
                member_group.push(groups.len());
                groups.push(Group {
                    bettor,
                    weight: weight.clone(),
                    weighted: Capital::zero(),
                    peak: Capital::zero(),
                    dead: false,
                });
            }
        }
    }
    for g in &mut groups {
        g.weighted = &g.weight * &g.bettor.capital;
        g.peak = g.weighted.clone();
    }

    let mut sequence = Vec::with_capacity(length);
    let mut total = family.initial_total();
    let mut totals = Vec::with_capacity(length + 1);
    totals.push(total.clone());
    let mut live: Vec<(usize, Payoff)> = Vec::new();
    for _ in 0..length {
        live.clear();
        let mut score = vec![Capital::zero(); k];
        for (g, group) in groups.iter_mut().enumerate() {
            if group.dead {
                continue;
            }
            let Some(payoff) = group.bettor.payoff(&sequence, k) else {
                continue;
            };
            // change of the group's weighted capital under each outcome
            match &payoff {
                Payoff::PerSymbol(factors) => {
                    for (acc, f) in score.iter_mut().zip(factors) {
                        *acc += &group.weighted * (f - Capital::one());
                    }
                }
                Payoff::Split {
                    inside,
                    outside,
                    gamma,
                } => {
                    let lose = &group.weighted * (inside - Capital::one());
                    let win = &group.weighted * (outside - Capital::one());
                    for (s, acc) in score.iter_mut().enumerate() {
                        *acc += if gamma.contains(s) { &lose } else { &win };
                    }
                }
            }
            live.push((g, payoff));
        }
        let mut best = 0;
        for s in 1..k {
            if score[s] < score[best] {
                best = s;
            }
        }
        for (g, payoff) in &live {
            let group = &mut groups[*g];
            group.weighted = &group.weighted * payoff.factor(best);
            if group.weighted > group.peak {
                group.peak = group.weighted.clone();
            }
            if group.weighted.is_zero() {
                group.dead = true;
            }
        }
        total += &score[best];
        totals.push(total.clone());
        sequence.push(best);
    }

    let capital = |g: &Group, weighted: &Capital| weighted / &g.weight;
    DiagonalRun {
        sequence,
        weighted_totals: totals,
        peak_capitals: member_group.iter().map(|&g| capital(&groups[g], &groups[g].peak)).collect(),
        final_capitals: member_group
            .iter()
            .map(|&g| capital(&groups[g], &groups[g].weighted))
            .collect(),
    }
}
