//! A four-register counter machine with a clock.
//!
//! Programs are finite instruction sequences. Every sequence whose jump
//! offsets are bounded by its own length is a valid program, and valid
//! programs are numbered by a length-lexicographic order over a per-length
//! instruction alphabet:
//!
//! ```text
//! HALT0 < HALT1 < INC r0..r3 < DECJZ (r, off) < LOADX r0..r3 < LOADY r0..r3 < LOADN r0..r3
//! ```
//!
//! `DECJZ` codes are register-major; within one register the offsets run in
//! zig-zag order `0, -1, 1, -2, 2, ..., -L, L` where `L` is the program
//! length. A program of length `L` therefore draws from `8L + 22` symbols,
//! and the first instruction is the most significant digit.
//!
//! Execution falls off the end (or jumps outside `0..L`) into an implicit
//! `HALT0`. Every executed instruction, halts included, costs one step; a run
//! that would exceed `fuel(n)` steps is reported as [`Outcome::FuelExhausted`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const REGISTERS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VmError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("register {0} out of range (0..{REGISTERS})")]
    InvalidRegister(u8),
    #[error("jump offset {offset} exceeds program length {len}")]
    OffsetOutOfRange { offset: i64, len: usize },
    #[error("program index does not fit in 64 bits")]
    IndexOverflow,
    #[error("invalid budget: {0}")]
    InvalidBudget(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Instruction {
    Halt0,
    Halt1,
    Inc(u8),
    DecJz(u8, i64),
    LoadX(u8),
    LoadY(u8),
    LoadN(u8),
}

fn zigzag(offset: i64) -> u64 {
    if offset >= 0 {
        2 * offset as u64
    } else {
        2 * offset.unsigned_abs() - 1
    }
}

fn unzigzag(code: u64) -> i64 {
    if code.is_multiple_of(2) {
        (code / 2) as i64
    } else {
        -(code.div_ceil(2) as i64)
    }
}

/// Number of distinct instructions available to a program of length `len`.
pub fn alphabet_size(len: usize) -> u64 {
    8 * len as u64 + 22
}

impl Instruction {
    pub fn register(self) -> Option<u8> {
        match self {
            Instruction::Halt0 | Instruction::Halt1 => None,
            Instruction::Inc(r)
            | Instruction::DecJz(r, _)
            | Instruction::LoadX(r)
            | Instruction::LoadY(r)
            | Instruction::LoadN(r) => Some(r),
        }
    }

    pub fn validate(self, len: usize) -> Result<(), VmError> {
        if let Some(r) = self.register() {
            if r as usize >= REGISTERS {
                return Err(VmError::InvalidRegister(r));
            }
        }
        if let Instruction::DecJz(_, offset) = self {
            if offset.unsigned_abs() > len as u64 {
                return Err(VmError::OffsetOutOfRange { offset, len });
            }
        }
        Ok(())
    }

    /// Position of this instruction in the alphabet for programs of length `len`.
    /// The instruction must be valid for that length.
    pub fn code(self, len: usize) -> u64 {
        let span = 2 * len as u64 + 1;
        let loads = 6 + 4 * span;
        match self {
            Instruction::Halt0 => 0,
            Instruction::Halt1 => 1,
            Instruction::Inc(r) => 2 + r as u64,
            Instruction::DecJz(r, o) => 6 + r as u64 * span + zigzag(o),
            Instruction::LoadX(r) => loads + r as u64,
            Instruction::LoadY(r) => loads + 4 + r as u64,
            Instruction::LoadN(r) => loads + 8 + r as u64,
        }
    }

    pub fn from_code(code: u64, len: usize) -> Instruction {
        let span = 2 * len as u64 + 1;
        let loads = 6 + 4 * span;
        debug_assert!(code < alphabet_size(len));
        match code {
            0 => Instruction::Halt0,
            1 => Instruction::Halt1,
            2..=5 => Instruction::Inc((code - 2) as u8),
            c if c < loads => {
                let c = c - 6;
                Instruction::DecJz((c / span) as u8, unzigzag(c % span))
            }
            c => {
                let c = c - loads;
                let r = (c % 4) as u8;
                match c / 4 {
                    0 => Instruction::LoadX(r),
                    1 => Instruction::LoadY(r),
                    _ => Instruction::LoadN(r),
                }
            }
        }
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instruction::Halt0 => write!(f, "HALT0"),
            Instruction::Halt1 => write!(f, "HALT1"),
            Instruction::Inc(r) => write!(f, "INC {r}"),
            Instruction::DecJz(r, o) => write!(f, "DECJZ {r} {o}"),
            Instruction::LoadX(r) => write!(f, "LOADX {r}"),
            Instruction::LoadY(r) => write!(f, "LOADY {r}"),
            Instruction::LoadN(r) => write!(f, "LOADN {r}"),
        }
    }
}

/// Index of the first program of length `len`, or `None` past `u64::MAX`.
pub fn length_offset(len: usize) -> Option<u64> {
    let mut offset = 0u64;
    for l in 0..len {
        offset = offset.checked_add(alphabet_size(l).checked_pow(l as u32)?)?;
    }
    Some(offset)
}

fn block_size(len: usize) -> Option<u64> {
    alphabet_size(len).checked_pow(len as u32)
}

/// Canonical index of an instruction sequence.
pub fn encode(code: &[Instruction]) -> Result<u64, VmError> {
    let len = code.len();
    for instr in code {
        instr.validate(len)?;
    }
    let base = alphabet_size(len);
    let mut rank = 0u64;
    for instr in code {
        rank = rank
            .checked_mul(base)
            .and_then(|r| r.checked_add(instr.code(len)))
            .ok_or(VmError::IndexOverflow)?;
    }
    length_offset(len)
        .and_then(|o| o.checked_add(rank))
        .ok_or(VmError::IndexOverflow)
}

fn locate(index: u64) -> (usize, u64) {
    let mut len = 0;
    let mut start = 0u64;
    loop {
        match block_size(len).and_then(|b| start.checked_add(b)) {
            Some(end) if index >= end => {
                start = end;
                len += 1;
            }
            _ => return (len, index - start),
        }
    }
}

fn digits_of(mut rank: u64, len: usize) -> Vec<u64> {
    let base = alphabet_size(len);
    let mut digits = vec![0; len];
    for d in digits.iter_mut().rev() {
        *d = rank % base;
        rank /= base;
    }
    digits
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Program {
    code: Vec<Instruction>,
    index: u64,
}

impl Program {
    pub fn new(code: Vec<Instruction>) -> Result<Self, VmError> {
        let index = encode(&code)?;
        Ok(Program { code, index })
    }

    pub fn code(&self) -> &[Instruction] {
        &self.code
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn len(&self) -> usize {
        self.code.len()
    }

    pub fn is_empty(&self) -> bool {
        self.code.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for instr in &self.code {
            out.push_str(&instr.to_string());
            out.push('\n');
        }
        out
    }
}

impl Default for Program {
    /// The empty program, index 0; halts immediately with output 0.
    fn default() -> Self {
        Program {
            code: Vec::new(),
            index: 0,
        }
    }
}

/// The `index`-th program of the canonical enumeration.
pub fn enumerate(index: u64) -> Program {
    let (len, rank) = locate(index);
    let code = digits_of(rank, len)
        .into_iter()
        .map(|d| Instruction::from_code(d, len))
        .collect();
    Program { code, index }
}

fn parse_reg(tok: Option<&str>, line: usize) -> Result<u8, VmError> {
    let tok = tok.ok_or_else(|| VmError::Parse {
        line,
        msg: "missing register".into(),
    })?;
    let r: u8 = tok.parse().map_err(|_| VmError::Parse {
        line,
        msg: format!("bad register `{tok}`"),
    })?;
    if r as usize >= REGISTERS {
        return Err(VmError::InvalidRegister(r));
    }
    Ok(r)
}

impl FromStr for Program {
    type Err = VmError;

    /// One instruction per line; `#` starts a comment; blank lines are skipped.
    fn from_str(text: &str) -> Result<Self, VmError> {
        let mut code = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let mut toks = body.split_whitespace();
            let op = toks.next().unwrap_or_default();
            let instr = match op {
                "HALT0" => Instruction::Halt0,
                "HALT1" => Instruction::Halt1,
                "INC" => Instruction::Inc(parse_reg(toks.next(), line)?),
                "LOADX" => Instruction::LoadX(parse_reg(toks.next(), line)?),
                "LOADY" => Instruction::LoadY(parse_reg(toks.next(), line)?),
                "LOADN" => Instruction::LoadN(parse_reg(toks.next(), line)?),
                "DECJZ" => {
                    let r = parse_reg(toks.next(), line)?;
                    let tok = toks.next().ok_or_else(|| VmError::Parse {
                        line,
                        msg: "missing jump offset".into(),
                    })?;
                    let o: i64 = tok.parse().map_err(|_| VmError::Parse {
                        line,
                        msg: format!("bad offset `{tok}`"),
                    })?;
                    Instruction::DecJz(r, o)
                }
                other => {
                    return Err(VmError::Parse {
                        line,
                        msg: format!("unknown opcode `{other}`"),
                    })
                }
            };
            if let Some(extra) = toks.next() {
                return Err(VmError::Parse {
                    line,
                    msg: format!("unexpected token `{extra}`"),
                });
            }
            code.push(instr);
        }
        Program::new(code)
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Growth class of the assumed time bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeBound {
    #[serde(rename = "n")]
    Linear,
    #[serde(rename = "nlogn")]
    NLogN,
    #[serde(rename = "n^2")]
    Quadratic,
    #[serde(rename = "n^3")]
    Cubic,
}

impl TimeBound {
    /// `n log n` uses `n * ceil(log2(n + 1))`.
    pub fn eval(self, n: u64) -> u64 {
        match self {
            TimeBound::Linear => n,
            TimeBound::NLogN => n.saturating_mul(64 - n.leading_zeros() as u64),
            TimeBound::Quadratic => n.saturating_mul(n),
            TimeBound::Cubic => n.saturating_mul(n).saturating_mul(n),
        }
    }
}

/// `fuel(n) = c_fuel * scale * t(n) + d_fuel`, saturating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecBudget {
    pub time: TimeBound,
    #[serde(default = "one")]
    pub scale: u64,
    pub c_fuel: u64,
    pub d_fuel: u64,
}

fn one() -> u64 {
    1
}

impl Default for ExecBudget {
    fn default() -> Self {
        ExecBudget {
            time: TimeBound::Quadratic,
            scale: 1,
            c_fuel: 10,
            d_fuel: 100,
        }
    }
}

impl ExecBudget {
    pub fn new(time: TimeBound, scale: u64, c_fuel: u64, d_fuel: u64) -> Result<Self, VmError> {
        let budget = ExecBudget {
            time,
            scale,
            c_fuel,
            d_fuel,
        };
        budget.validate()?;
        Ok(budget)
    }

    pub fn validate(&self) -> Result<(), VmError> {
        // t(0) = 0 for every growth class, so the additive slack carries fuel(0).
        if self.d_fuel == 0 {
            return Err(VmError::InvalidBudget("d_fuel must be at least 1".into()));
        }
        Ok(())
    }

    pub fn fuel(&self, n: u64) -> u64 {
        self.c_fuel
            .saturating_mul(self.scale)
            .saturating_mul(self.time.eval(n))
            .saturating_add(self.d_fuel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Halted(u8),
    FuelExhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecResult {
    pub outcome: Outcome,
    pub steps: u64,
}

impl ExecResult {
    pub fn bit(&self) -> Option<u8> {
        match self.outcome {
            Outcome::Halted(b) => Some(b),
            Outcome::FuelExhausted => None,
        }
    }
}

/// Result of one run plus how many leading instructions it read.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Execution {
    pub result: ExecResult,
    /// `1 + ` the largest program counter that was executed (0 if none).
    pub touched: usize,
}

/// Proves non-termination by comparing machine states at the same program
/// counter. Checkpoints are taken at steps 0, 1, 2, 4, 8, ...
///
/// Between the checkpoint and the current state, a register's zero test can
/// only flip on a repeated pass if the register drifted and was tested before
/// being reloaded. When no such test exists the segment repeats forever.
struct LoopWatch {
    next_checkpoint: u64,
    pc: usize,
    regs: [u128; REGISTERS],
    armed: bool,
    loaded: u8,
    tested: u8,
    zero_tested: u8,
}

impl LoopWatch {
    fn new() -> Self {
        LoopWatch {
            next_checkpoint: 0,
            pc: 0,
            regs: [0; REGISTERS],
            armed: false,
            loaded: 0,
            tested: 0,
            zero_tested: 0,
        }
    }

    #[inline]
    fn diverges(&mut self, steps: u64, pc: usize, regs: &[u128; REGISTERS]) -> bool {
        if steps == self.next_checkpoint {
            self.pc = pc;
            self.regs = *regs;
            self.armed = true;
            self.loaded = 0;
            self.tested = 0;
            self.zero_tested = 0;
            self.next_checkpoint = if steps == 0 { 1 } else { steps.saturating_mul(2) };
            return false;
        }
        if !self.armed || pc != self.pc {
            return false;
        }
        (0..REGISTERS).all(|r| {
            let bit = 1u8 << r;
            let (now, then) = (regs[r], self.regs[r]);
            !(now != then && self.zero_tested & bit != 0 || now < then && self.tested & bit != 0)
        })
    }

    #[inline]
    fn on_load(&mut self, r: usize) {
        self.loaded |= 1 << r;
    }

    #[inline]
    fn on_test(&mut self, r: usize, zero: bool) {
        let bit = 1u8 << r;
        if self.loaded & bit == 0 {
            self.tested |= bit;
            if zero {
                self.zero_tested |= bit;
            }
        }
    }
}

pub(crate) fn execute(code: &[Instruction], x: u8, y: u8, n: u64, fuel: u64) -> Execution {
    let len = code.len();
    let mut regs = [0u128; REGISTERS];
    let mut pc = 0usize;
    let mut steps = 0u64;
    let mut touched = 0usize;
    let mut watch = LoopWatch::new();
    let done = |bit: u8, steps: u64, touched: usize| Execution {
        result: ExecResult {
            outcome: Outcome::Halted(bit),
            steps,
        },
        touched,
    };
    loop {
        if pc >= len {
            return done(0, steps, touched);
        }
        if steps >= fuel || watch.diverges(steps, pc, &regs) {
            return Execution {
                result: ExecResult {
                    outcome: Outcome::FuelExhausted,
                    steps,
                },
                touched,
            };
        }
        touched = touched.max(pc + 1);
        steps += 1;
        match code[pc] {
            Instruction::Halt0 => return done(0, steps, touched),
            Instruction::Halt1 => return done(1, steps, touched),
            Instruction::Inc(r) => {
                regs[r as usize] += 1;
                pc += 1;
            }
            Instruction::DecJz(r, offset) => {
                let r = r as usize;
                let zero = regs[r] == 0;
                watch.on_test(r, zero);
                if zero {
                    let target = pc as i64 + offset;
                    if target < 0 || target >= len as i64 {
                        return done(0, steps, touched);
                    }
                    pc = target as usize;
                } else {
                    regs[r] -= 1;
                    pc += 1;
                }
            }
            Instruction::LoadX(r) => {
                regs[r as usize] = x as u128;
                watch.on_load(r as usize);
                pc += 1;
            }
            Instruction::LoadY(r) => {
                regs[r as usize] = y as u128;
                watch.on_load(r as usize);
                pc += 1;
            }
            Instruction::LoadN(r) => {
                regs[r as usize] = n as u128;
                watch.on_load(r as usize);
                pc += 1;
            }
        }
    }
}

/// Run `p` on inputs `(x, y, n)` under the budget's fuel for round `n`.
pub fn run(p: &Program, x: u8, y: u8, n: u64, budget: &ExecBudget) -> ExecResult {
    execute(&p.code, x, y, n, budget.fuel(n)).result
}

/// Run with an explicit step limit instead of a budget.
pub fn run_with_fuel(p: &Program, x: u8, y: u8, n: u64, fuel: u64) -> ExecResult {
    execute(&p.code, x, y, n, fuel).result
}

/// Walks the enumeration in index order and can jump over every program
/// that shares a given instruction prefix with the current one.
#[derive(Debug, Clone)]
pub struct EnumCursor {
    digits: Vec<u64>,
    code: Vec<Instruction>,
    index: u64,
    offset: u64,
}

impl EnumCursor {
    pub fn at(index: u64) -> Self {
        let (len, rank) = locate(index);
        let digits = digits_of(rank, len);
        let code = digits
            .iter()
            .map(|&d| Instruction::from_code(d, len))
            .collect();
        EnumCursor {
            digits,
            code,
            index,
            offset: index - rank,
        }
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn code(&self) -> &[Instruction] {
        &self.code
    }

    pub fn program(&self) -> Program {
        Program {
            code: self.code.clone(),
            index: self.index,
        }
    }

    /// Move to the next index.
    pub fn step(&mut self) -> bool {
        let len = self.code.len();
        self.skip_prefix(len)
    }

    /// Move to the least index whose program differs from the current one in
    /// its first `prefix` instructions, staying in index order. Returns false
    /// when the index space (u64) is exhausted.
    pub fn skip_prefix(&mut self, prefix: usize) -> bool {
        let len = self.code.len();
        let base = alphabet_size(len);
        let mut pos = prefix.min(len);
        loop {
            if pos == 0 {
                return self.next_length();
            }
            pos -= 1;
            self.digits[pos] += 1;
            if self.digits[pos] < base {
                break;
            }
        }
        for p in pos + 1..len {
            self.digits[p] = 0;
        }
        for p in pos..len {
            self.code[p] = Instruction::from_code(self.digits[p], len);
        }
        let mut rank = 0u64;
        for &d in &self.digits {
            rank = rank * base + d;
        }
        self.index = self.offset + rank;
        true
    }

    fn next_length(&mut self) -> bool {
        let len = self.code.len();
        let Some(next) = block_size(len).and_then(|b| self.offset.checked_add(b)) else {
            return false;
        };
        if block_size(len + 1).and_then(|b| next.checked_add(b - 1)).is_none() {
            return false;
        }
        let len = len + 1;
        self.offset = next;
        self.index = next;
        self.digits = vec![0; len];
        self.code = vec![Instruction::Halt0; len];
        true
    }
}
