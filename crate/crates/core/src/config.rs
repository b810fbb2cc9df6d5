//! Run configuration files (TOML), one per command.
//!
//! Relative paths inside a config are resolved against the directory holding
//! the config file. [`Resolved::rebase`] does that in place, so the resolved
//! config written next to a run's outputs names every input unambiguously.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::betting::{self, Alphabet, Bettor, BettingError, Capital, Fact1Mixture, FixedStrategy, Gamma, Predicate};
use crate::boxes::{self, BoxError, BoxManifest, BoxPair};
use crate::learner::DEFAULT_SCAN_CAP;
use crate::protocol::{ProtocolConfig, SequenceSource, DEFAULT_FAMILY_PROGRAMS};
use crate::vm::{self, ExecBudget};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Box(#[from] BoxError),
    #[error(transparent)]
    Betting(#[from] BettingError),
}

pub trait Resolved: Serialize + DeserializeOwned {
    /// Make relative paths absolute against `base`.
    fn rebase(&mut self, base: &Path);
}

fn rebase_path(path: &mut PathBuf, base: &Path) {
    if path.is_relative() {
        *path = base.join(&*path);
    }
}

/// Read a config and rebase its paths against the file's directory.
pub fn load<T: Resolved>(path: &Path) -> Result<T, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut cfg: T = toml::from_str(&text).map_err(|e| ConfigError::Parse {
        path: path.to_owned(),
        msg: e.to_string(),
    })?;
    let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let base = std::path::absolute(base).map_err(|source| ConfigError::Io {
        path: base.to_owned(),
        source,
    })?;
    cfg.rebase(&base);
    Ok(cfg)
}

pub fn to_toml<T: Serialize>(cfg: &T) -> String {
    toml::to_string(cfg).expect("configs serialize to TOML")
}

/// A box given inline or as a path to a manifest file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoxSpec {
    File(PathBuf),
    Inline(BoxManifest),
}

impl BoxSpec {
    pub fn build(&self) -> Result<BoxPair, BoxError> {
        match self {
            BoxSpec::File(path) => BoxManifest::load(path),
            // paths inside an inline manifest were rebased already
            BoxSpec::Inline(m) => m.build(Path::new("")),
        }
    }

    fn rebase(&mut self, base: &Path) {
        match self {
            BoxSpec::File(path) => rebase_path(path, base),
            BoxSpec::Inline(BoxManifest::Vm { a, b, .. }) => {
                rebase_path(a, base);
                rebase_path(b, base);
            }
            BoxSpec::Inline(_) => {}
        }
    }
}

/// `chsh`: fair-coin inputs into a box pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChshConfig {
    #[serde(default)]
    pub seed: u64,
    pub horizon: u64,
    #[serde(rename = "box")]
    pub pair: BoxSpec,
}

impl Resolved for ChshConfig {
    fn rebase(&mut self, base: &Path) {
        self.pair.rebase(base);
    }
}

/// `protocol`: one run of the signaling protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolRunConfig {
    /// Seconds per round, for the light-distance figure in the summary.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round_seconds: Option<f64>,
    #[serde(rename = "box")]
    pub pair: BoxSpec,
    pub protocol: ProtocolConfig,
}

impl Resolved for ProtocolRunConfig {
    fn rebase(&mut self, base: &Path) {
        self.pair.rebase(base);
        if let SequenceSource::File { path } = &mut self.protocol.sequence {
            rebase_path(path, base);
        }
    }
}

fn default_programs() -> u64 {
    DEFAULT_FAMILY_PROGRAMS
}

/// `diagonal`: a switching sequence against the default bettor family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagonalConfig {
    /// Number of signal indices.
    pub m: usize,
    /// Family members are built from programs `0..programs`.
    #[serde(default = "default_programs")]
    pub programs: u64,
    pub length: usize,
    #[serde(default)]
    pub budget: ExecBudget,
}

impl Resolved for DiagonalConfig {
    fn rebase(&mut self, _base: &Path) {}
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum PredicateSpec {
    Const(bool),
    /// Program of this index in the canonical enumeration.
    Index(u64),
    /// Program file.
    Program(PathBuf),
}

/// One bettor. Symbols are given by their labels (`"L 0 1"`, `"S 2"`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BettorSpec {
    Even,
    /// Fractions per symbol in alphabet order, as `"p/q"` or integers.
    Fixed { fractions: Vec<String> },
    Fact1 {
        gamma: Vec<String>,
        predicate: PredicateSpec,
        #[serde(default)]
        threshold: u64,
        #[serde(default)]
        budget: ExecBudget,
    },
    Mixture {
        gamma: Vec<String>,
        predicate: PredicateSpec,
        #[serde(default)]
        budget: ExecBudget,
    },
}

impl BettorSpec {
    pub fn build(&self, alphabet: &Alphabet) -> Result<Bettor, ConfigError> {
        let gamma_of = |labels: &[String]| -> Result<Gamma, ConfigError> {
            let symbols = labels
                .iter()
                .map(|l| {
                    alphabet
                        .position(l)
                        .ok_or_else(|| ConfigError::Invalid(format!("unknown symbol `{l}`")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Gamma::new(&symbols, alphabet.k())?)
        };
        let predicate_of = |p: &PredicateSpec, budget: &ExecBudget| -> Result<Predicate, ConfigError> {
            budget.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
            Ok(match p {
                PredicateSpec::Const(b) => Predicate::Const(*b),
                PredicateSpec::Index(i) => Predicate::program(vm::enumerate(*i), *budget),
                PredicateSpec::Program(path) => Predicate::program(boxes::load_program(path)?, *budget),
            })
        };
        let strategy: Box<dyn betting::Strategy> = match self {
            BettorSpec::Even => Box::new(betting::EvenStrategy),
            BettorSpec::Fixed { fractions } => {
                let parsed = fractions
                    .iter()
                    .map(|f| {
                        f.trim()
                            .parse::<Capital>()
                            .map_err(|_| ConfigError::Invalid(format!("bad fraction `{f}`")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                if parsed.len() != alphabet.k() {
                    return Err(ConfigError::Invalid(format!(
                        "fixed bet has {} fractions, alphabet has {} symbols",
                        parsed.len(),
                        alphabet.k()
                    )));
                }
                betting::BetVector::new(parsed.clone())?;
                Box::new(FixedStrategy(parsed))
            }
            BettorSpec::Fact1 {
                gamma,
                predicate,
                threshold,
                budget,
            } => Box::new(betting::fact1_strategy(
                predicate_of(predicate, budget)?,
                gamma_of(gamma)?,
                *threshold,
            )),
            BettorSpec::Mixture {
                gamma,
                predicate,
                budget,
            } => Box::new(Fact1Mixture::new(predicate_of(predicate, budget)?, gamma_of(gamma)?)),
        };
        Ok(Bettor::new(strategy, Capital::from_integer(1.into()))?)
    }
}

/// `bettors`: capital trajectories of given bettors along a sequence file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BettorsConfig {
    /// Number of signal indices of the sequence alphabet.
    pub m: usize,
    pub sequence: PathBuf,
    pub bettors: Vec<BettorSpec>,
}

impl Resolved for BettorsConfig {
    fn rebase(&mut self, base: &Path) {
        rebase_path(&mut self.sequence, base);
        for b in &mut self.bettors {
            if let BettorSpec::Fact1 {
                predicate: PredicateSpec::Program(p),
                ..
            }
            | BettorSpec::Mixture {
                predicate: PredicateSpec::Program(p),
                ..
            } = b
            {
                rebase_path(p, base);
            }
        }
    }
}

fn default_scan_cap() -> u64 {
    DEFAULT_SCAN_CAP
}

/// `learn`: learning by enumeration over a sample file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnConfig {
    /// CSV with columns `x,y,n,b`.
    pub samples: PathBuf,
    #[serde(default)]
    pub budget: ExecBudget,
    #[serde(default = "default_scan_cap")]
    pub scan_cap: u64,
}

impl Resolved for LearnConfig {
    fn rebase(&mut self, base: &Path) {
        rebase_path(&mut self.samples, base);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::switch_alphabet;
    use crate::vm::TimeBound;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn protocol_config_resolves_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "s.txt", "L 1 1\nS 1\n");
        let path = write(
            dir.path(),
            "run.toml",
            r#"
round_seconds = 1e-6
box = { model = "pr" }

[protocol]
message = [1, 0]
horizon = 2
sequence = { source = "file", path = "s.txt" }

[protocol.budget]
time = "n"
c_fuel = 4
d_fuel = 50
"#,
        );
        let cfg: ProtocolRunConfig = load(&path).unwrap();
        assert_eq!(cfg.protocol.window, 5);
        assert_eq!(cfg.protocol.budget, ExecBudget::new(TimeBound::Linear, 1, 4, 50).unwrap());
        let SequenceSource::File { path: seq } = &cfg.protocol.sequence else {
            panic!()
        };
        assert!(seq.is_absolute() && seq.ends_with("s.txt"));
        assert_eq!(cfg.protocol.materialize_sequence().unwrap().len(), 2);
        let text = to_toml(&cfg);
        let again: ProtocolRunConfig = toml::from_str(&text).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(dir.path(), "c.toml", "horizon = 5\nbox = { model = \"pr\" }\nsed = 3\n");
        assert!(matches!(load::<ChshConfig>(&path), Err(ConfigError::Parse { .. })));
        let path = write(dir.path(), "d.toml", "m = 2\nlength = 10\n");
        let d: DiagonalConfig = load(&path).unwrap();
        assert_eq!(d.programs, 200);
    }

    #[test]
    fn box_spec_forms() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "b.prog", boxes::AND_PROGRAM);
        write(dir.path(), "a.prog", "");
        write(dir.path(), "pair.toml", "model = \"vm\"\na = \"a.prog\"\nb = \"b.prog\"\nb_reads_x = true\n");
        let by_file = write(dir.path(), "c1.toml", "horizon = 5\nbox = \"pair.toml\"\n");
        let inline = write(
            dir.path(),
            "c2.toml",
            "horizon = 5\n[box]\nmodel = \"vm\"\na = \"a.prog\"\nb = \"b.prog\"\n",
        );
        for p in [by_file, inline] {
            let cfg: ChshConfig = load(&p).unwrap();
            assert_eq!(cfg.pair.build().unwrap().query(0, 1, 1).unwrap(), (0, 1));
        }
    }

    #[test]
    fn bettor_specs_build() {
        let a = switch_alphabet(1);
        let seq = [3, 4, 0];
        let specs: BettorsConfig = toml::from_str(
            r#"
m = 1
sequence = "s.txt"
[[bettors]]
kind = "even"
[[bettors]]
kind = "fixed"
fractions = ["0", "0", "0", "1/2", "1/2"]
[[bettors]]
kind = "fact1"
gamma = ["L 0 0", "L 0 1", "L 1 0", "S 1"]
predicate = { index = 2 }
"#,
        )
        .unwrap();
        let trajs: Vec<Vec<Capital>> = specs
            .bettors
            .iter()
            .map(|s| betting::run_bettor(&s.build(&a).unwrap(), &seq, 5))
            .collect();
        let q = betting::rational;
        assert_eq!(trajs[0], vec![q(1, 1); 4]);
        assert_eq!(trajs[1], vec![q(1, 1), q(5, 2), q(25, 4), q(0, 1)]);
        // index 2 is HALT1: always flagged; the bettor puts everything on L 1 1
        assert_eq!(trajs[2], vec![q(1, 1), q(5, 1), q(0, 1), q(0, 1)]);
        let bad = BettorSpec::Fact1 {
            gamma: vec!["L 2 2".into()],
            predicate: PredicateSpec::Const(true),
            threshold: 0,
            budget: ExecBudget::default(),
        };
        assert!(matches!(bad.build(&a), Err(ConfigError::Invalid(_))));
        let short = BettorSpec::Fixed {
            fractions: vec!["1".into()],
        };
        assert!(short.build(&a).is_err());
    }
}
