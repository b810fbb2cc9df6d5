//! Deterministic box pairs.
//!
//! A pair is two functions `A(x, y, n)` and `B(x, y, n)` of both parties'
//! inputs and the round number. A pair that is non-local must let at least
//! one side read the other's input on infinitely many rounds.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vm::{self, ExecBudget, Outcome, Program, VmError};

#[derive(Debug, Error)]
pub enum BoxError {
    #[error("box {side} ran out of fuel on (x={x}, y={y}, n={n}); the model's budget is too small")]
    FuelExhausted { side: Side, x: u8, y: u8, n: u64 },
    #[error("input bits must be 0 or 1, got x={x}, y={y}")]
    InvalidInput { x: u8, y: u8 },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("program {path}: {source}")]
    Program { path: PathBuf, source: VmError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    A,
    B,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::A => "A",
            Side::B => "B",
        })
    }
}

/// The shared bit `α(n)` of a deterministic PR pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alpha {
    Zero,
    /// `popcount(n) mod 2`
    Parity,
}

impl Alpha {
    pub fn eval(self, n: u64) -> u8 {
        match self {
            Alpha::Zero => 0,
            Alpha::Parity => (n.count_ones() % 2) as u8,
        }
    }
}

/// One side's output rule in a local pair, as a function of its own input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocalRule {
    Zero,
    One,
    Copy,
    Negate,
    /// Input XOR `popcount(n) mod 2`.
    CopyParity,
}

impl LocalRule {
    pub fn eval(self, input: u8, n: u64) -> u8 {
        match self {
            LocalRule::Zero => 0,
            LocalRule::One => 1,
            LocalRule::Copy => input,
            LocalRule::Negate => input ^ 1,
            LocalRule::CopyParity => input ^ Alpha::Parity.eval(n),
        }
    }
}

pub type BoxFn = Arc<dyn Fn(u8, u8, u64) -> u8 + Send + Sync>;

#[derive(Clone)]
pub enum Model {
    Local { a: LocalRule, b: LocalRule },
    Pr { alpha: Alpha },
    Vm { a: Program, b: Program, budget: ExecBudget },
    Native { a: BoxFn, b: BoxFn },
}

impl fmt::Debug for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Model::Local { a, b } => write!(f, "Local({a:?}, {b:?})"),
            Model::Pr { alpha } => write!(f, "DeterministicPR({alpha:?})"),
            Model::Vm { a, b, .. } => write!(f, "VmBacked(#{}, #{})", a.index(), b.index()),
            Model::Native { .. } => f.write_str("Native"),
        }
    }
}

/// Which inputs each side is declared to read from the other party.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalingProfile {
    pub a_reads_y: bool,
    pub b_reads_x: bool,
}

#[derive(Debug, Clone)]
pub struct BoxPair {
    model: Model,
    profile: SignalingProfile,
}

/// `B = x AND y`: loop on x, then loop on y, then output 1.
pub const AND_PROGRAM: &str = "LOADX 0\nDECJZ 0 -2\nLOADY 0\nDECJZ 0 -4\nHALT1\n";

impl BoxPair {
    /// `a = f(x, n)`, `b = g(y, n)`.
    pub fn local(a: LocalRule, b: LocalRule) -> Self {
        BoxPair {
            model: Model::Local { a, b },
            profile: SignalingProfile {
                a_reads_y: false,
                b_reads_x: false,
            },
        }
    }

    /// `a = α(n)`, `b = α(n) XOR (x AND y)`.
    pub fn pr(alpha: Alpha) -> Self {
        BoxPair {
            model: Model::Pr { alpha },
            profile: SignalingProfile {
                a_reads_y: false,
                b_reads_x: true,
            },
        }
    }

    /// Arbitrary pair given as programs on `(x, y, n)`; the profile is declared
    /// by the caller.
    pub fn vm(a: Program, b: Program, budget: ExecBudget, profile: SignalingProfile) -> Self {
        BoxPair {
            model: Model::Vm { a, b, budget },
            profile,
        }
    }

    /// The PR pair with `α ≡ 0` as programs: A is the empty program.
    pub fn pr_vm(budget: ExecBudget) -> Self {
        let b: Program = AND_PROGRAM.parse().expect("built-in program parses");
        BoxPair::vm(
            Program::default(),
            b,
            budget,
            SignalingProfile {
                a_reads_y: false,
                b_reads_x: true,
            },
        )
    }

    pub fn native(
        a: impl Fn(u8, u8, u64) -> u8 + Send + Sync + 'static,
        b: impl Fn(u8, u8, u64) -> u8 + Send + Sync + 'static,
        profile: SignalingProfile,
    ) -> Self {
        BoxPair {
            model: Model::Native {
                a: Arc::new(a),
                b: Arc::new(b),
            },
            profile,
        }
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn profile(&self) -> SignalingProfile {
        self.profile
    }

    pub fn output(&self, side: Side, x: u8, y: u8, n: u64) -> Result<u8, BoxError> {
        if x > 1 || y > 1 {
            return Err(BoxError::InvalidInput { x, y });
        }
        let bit = match (&self.model, side) {
            (Model::Local { a, .. }, Side::A) => a.eval(x, n),
            (Model::Local { b, .. }, Side::B) => b.eval(y, n),
            (Model::Pr { alpha }, Side::A) => alpha.eval(n),
            (Model::Pr { alpha }, Side::B) => alpha.eval(n) ^ (x & y),
            (Model::Vm { a, b, budget }, side) => {
                let p = if side == Side::A { a } else { b };
                match vm::run(p, x, y, n, budget).outcome {
                    Outcome::Halted(bit) => bit,
                    Outcome::FuelExhausted => return Err(BoxError::FuelExhausted { side, x, y, n }),
                }
            }
            (Model::Native { a, .. }, Side::A) => a(x, y, n) & 1,
            (Model::Native { b, .. }, Side::B) => b(x, y, n) & 1,
        };
        Ok(bit)
    }

    /// `(A(x, y, n), B(x, y, n))`.
    pub fn query(&self, n: u64, x: u8, y: u8) -> Result<(u8, u8), BoxError> {
        Ok((self.output(Side::A, x, y, n)?, self.output(Side::B, x, y, n)?))
    }
}

/// Rounds where one side's output depends on the other side's input.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependenceReport {
    pub horizon: u64,
    /// `n -> y` with `B(0, y, n) != B(1, y, n)`; the least such `y`.
    pub b_on_x: BTreeMap<u64, u8>,
    /// `n -> x` with `A(x, 0, n) != A(x, 1, n)`; the least such `x`.
    pub a_on_y: BTreeMap<u64, u8>,
}

impl DependenceReport {
    /// Re-check every witness against the pair.
    pub fn verify(&self, pair: &BoxPair) -> Result<bool, BoxError> {
        for (&n, &y) in &self.b_on_x {
            if pair.output(Side::B, 0, y, n)? == pair.output(Side::B, 1, y, n)? {
                return Ok(false);
            }
        }
        for (&n, &x) in &self.a_on_y {
            if pair.output(Side::A, x, 0, n)? == pair.output(Side::A, x, 1, n)? {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Exhaustive scan of rounds `0..horizon`.
pub fn dependence_rounds(pair: &BoxPair, horizon: u64) -> Result<DependenceReport, BoxError> {
    let mut report = DependenceReport {
        horizon,
        ..Default::default()
    };
    for n in 0..horizon {
        for y in 0..2 {
            if pair.output(Side::B, 0, y, n)? != pair.output(Side::B, 1, y, n)? {
                report.b_on_x.insert(n, y);
                break;
            }
        }
        for x in 0..2 {
            if pair.output(Side::A, x, 0, n)? != pair.output(Side::A, x, 1, n)? {
                report.a_on_y.insert(n, x);
                break;
            }
        }
    }
    Ok(report)
}

/// Box fixture description, usually read from TOML.
///
/// ```toml
/// model = "vm"
/// a = "alice.prog"
/// b = "bob.prog"
/// b_reads_x = true
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase", deny_unknown_fields)]
pub enum BoxManifest {
    Local {
        a: LocalRule,
        b: LocalRule,
    },
    Pr {
        #[serde(default = "default_alpha")]
        alpha: Alpha,
    },
    Vm {
        /// Program files, relative to the manifest.
        a: PathBuf,
        b: PathBuf,
        #[serde(default)]
        budget: ExecBudget,
        #[serde(default)]
        a_reads_y: bool,
        #[serde(default)]
        b_reads_x: bool,
    },
}

fn default_alpha() -> Alpha {
    Alpha::Zero
}

impl BoxManifest {
    pub fn from_toml(text: &str) -> Result<Self, BoxError> {
        toml::from_str(text).map_err(|e| BoxError::Manifest(e.to_string()))
    }

    /// Build the pair, resolving program paths against `base`.
    pub fn build(&self, base: &Path) -> Result<BoxPair, BoxError> {
        Ok(match self {
            BoxManifest::Local { a, b } => BoxPair::local(*a, *b),
            BoxManifest::Pr { alpha } => BoxPair::pr(*alpha),
            BoxManifest::Vm {
                a,
                b,
                budget,
                a_reads_y,
                b_reads_x,
            } => {
                budget
                    .validate()
                    .map_err(|e| BoxError::Manifest(e.to_string()))?;
                BoxPair::vm(
                    load_program(&base.join(a))?,
                    load_program(&base.join(b))?,
                    *budget,
                    SignalingProfile {
                        a_reads_y: *a_reads_y,
                        b_reads_x: *b_reads_x,
                    },
                )
            }
        })
    }

    pub fn load(path: &Path) -> Result<BoxPair, BoxError> {
        let text = std::fs::read_to_string(path).map_err(|source| BoxError::Io {
            path: path.to_owned(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        BoxManifest::from_toml(&text)?.build(base)
    }
}

pub fn load_program(path: &Path) -> Result<Program, BoxError> {
    let text = std::fs::read_to_string(path).map_err(|source| BoxError::Io {
        path: path.to_owned(),
        source,
    })?;
    text.parse().map_err(|source| BoxError::Program {
        path: path.to_owned(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const PAIRS: [(u8, u8); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];

    #[test]
    fn pr_queries() {
        let pr = BoxPair::pr(Alpha::Zero);
        assert_eq!(pr.query(17, 1, 1).unwrap(), (0, 1));
        assert_eq!(pr.query(17, 0, 0).unwrap(), (0, 0));
        let parity = BoxPair::pr(Alpha::Parity);
        // 3 = 0b11 has even popcount
        assert_eq!(parity.query(3, 1, 1).unwrap(), (0, 1));
        assert_eq!(parity.query(7, 1, 1).unwrap(), (1, 0));
        assert_eq!(parity.query(7, 0, 1).unwrap(), (1, 1));
    }

    #[test]
    fn local_queries() {
        let local = BoxPair::local(LocalRule::Copy, LocalRule::Copy);
        assert_eq!(local.query(4, 1, 0).unwrap(), (1, 0));
        assert!(matches!(local.query(0, 2, 0), Err(BoxError::InvalidInput { .. })));
    }

    #[test]
    fn vm_pr_matches_native() {
        let vm_pair = BoxPair::pr_vm(ExecBudget::default());
        let native = BoxPair::pr(Alpha::Zero);
        for n in 0..200 {
            for (x, y) in PAIRS {
                assert_eq!(vm_pair.query(n, x, y).unwrap(), native.query(n, x, y).unwrap());
            }
        }
    }

    #[test]
    fn vm_fuel_exhaustion_is_an_error() {
        let spin: Program = "DECJZ 0 0".parse().unwrap();
        let pair = BoxPair::vm(
            Program::default(),
            spin,
            ExecBudget::default(),
            SignalingProfile {
                a_reads_y: false,
                b_reads_x: false,
            },
        );
        assert!(matches!(
            pair.query(3, 0, 1),
            Err(BoxError::FuelExhausted { side: Side::B, n: 3, .. })
        ));
    }

    #[test]
    fn pr_dependence_everywhere_with_witness_one() {
        // oracle: direct evaluation of b = x AND y
        let report = dependence_rounds(&BoxPair::pr(Alpha::Zero), 64).unwrap();
        assert_eq!(report.b_on_x.len(), 64);
        assert!(report.b_on_x.values().all(|&y| y == 1));
        assert!(report.a_on_y.is_empty());
        assert!(report.verify(&BoxPair::pr(Alpha::Zero)).unwrap());
    }

    #[test]
    fn local_has_no_dependence() {
        let report = dependence_rounds(&BoxPair::local(LocalRule::Copy, LocalRule::CopyParity), 100).unwrap();
        assert!(report.b_on_x.is_empty() && report.a_on_y.is_empty());
    }

    #[test]
    fn even_round_dependence_fixture() {
        let pair = BoxPair::native(
            |x, _, _| x,
            |x, y, n| if n % 2 == 0 { x ^ y } else { y },
            SignalingProfile {
                a_reads_y: false,
                b_reads_x: true,
            },
        );
        let report = dependence_rounds(&pair, 21).unwrap();
        let evens: Vec<u64> = (0..21).filter(|n| n % 2 == 0).collect();
        assert_eq!(report.b_on_x.keys().copied().collect::<Vec<_>>(), evens);
        assert!(report.b_on_x.values().all(|&y| y == 0));
        assert!(report.verify(&pair).unwrap());
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("b.prog"), AND_PROGRAM).unwrap();
        std::fs::write(dir.path().join("a.prog"), "# always 0\n").unwrap();
        let manifest = "model = \"vm\"\na = \"a.prog\"\nb = \"b.prog\"\nb_reads_x = true\n";
        std::fs::write(dir.path().join("box.toml"), manifest).unwrap();
        let pair = BoxManifest::load(&dir.path().join("box.toml")).unwrap();
        assert_eq!(pair.query(9, 1, 1).unwrap(), (0, 1));
        assert!(pair.profile().b_reads_x);

        let pr = BoxManifest::from_toml("model = \"pr\"\nalpha = \"parity\"").unwrap();
        assert_eq!(pr, BoxManifest::Pr { alpha: Alpha::Parity });
        assert!(BoxManifest::from_toml("model = \"pr\"\nbeta = 1").is_err());
        let local = BoxManifest::from_toml("model = \"local\"\na = \"copy\"\nb = \"negate\"").unwrap();
        assert_eq!(local.build(Path::new(".")).unwrap().query(0, 1, 1).unwrap(), (1, 0));
    }

    fn all_models() -> Vec<BoxPair> {
        let rules = [LocalRule::Zero, LocalRule::One, LocalRule::Copy, LocalRule::Negate, LocalRule::CopyParity];
        let mut pairs = vec![BoxPair::pr(Alpha::Zero), BoxPair::pr(Alpha::Parity), BoxPair::pr_vm(ExecBudget::default())];
        for a in rules {
            for b in rules {
                pairs.push(BoxPair::local(a, b));
            }
        }
        pairs
    }

    #[test]
    fn profiles_are_honest() {
        for pair in all_models() {
            let report = dependence_rounds(&pair, 128).unwrap();
            let p = pair.profile();
            if !p.b_reads_x {
                assert!(report.b_on_x.is_empty(), "{:?}", pair.model());
            }
            if !p.a_reads_y {
                assert!(report.a_on_y.is_empty(), "{:?}", pair.model());
            }
        }
    }

    proptest! {
        #[test]
        fn pr_identity(n in any::<u64>(), parity in any::<bool>()) {
            let pair = BoxPair::pr(if parity { Alpha::Parity } else { Alpha::Zero });
            for (x, y) in PAIRS {
                let (a, b) = pair.query(n, x, y).unwrap();
                prop_assert_eq!(a ^ b, x & y);
            }
        }
    }
}
