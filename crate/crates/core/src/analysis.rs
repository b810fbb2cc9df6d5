//! CHSH statistics, the coin stream, and two physics helpers.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boxes::{BoxError, BoxPair};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("insufficient data: setting (x={x}, y={y}) was never observed")]
    UnobservedSetting { x: u8, y: u8 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// SplitMix64. Each step adds `0x9E3779B97F4A7C15` to the state and returns
/// the state mixed by
///
/// ```text
/// z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
/// z = (z ^ (z >> 27)) * 0x94D049BB133111EB
/// z ^ (z >> 31)
/// ```
///
/// with wrapping 64-bit arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// One round of fair coins: `x` is bit 63 of the next output, `y` bit 62.
    pub fn coin_pair(&mut self) -> (u8, u8) {
        let r = self.next_u64();
        ((r >> 63) as u8, ((r >> 62) & 1) as u8)
    }
}

/// Tallies of `(x, y, a, b)` over a run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    counts: [[[[u64; 2]; 2]; 2]; 2],
    rounds: u64,
}

impl EmpiricalDistribution {
    pub fn record(&mut self, x: u8, y: u8, a: u8, b: u8) {
        self.counts[x as usize][y as usize][a as usize][b as usize] += 1;
        self.rounds += 1;
    }

    pub fn count(&self, x: u8, y: u8, a: u8, b: u8) -> u64 {
        self.counts[x as usize][y as usize][a as usize][b as usize]
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn setting_count(&self, x: u8, y: u8) -> u64 {
        self.counts[x as usize][y as usize].iter().flatten().sum()
    }

    /// `4 * #{rounds with inputs (x, y) and outputs (a, b)} / rounds`.
    pub fn probability(&self, a: u8, b: u8, x: u8, y: u8) -> Option<BigRational> {
        if self.rounds == 0 {
            return None;
        }
        Some(BigRational::new(
            BigInt::from(4 * self.count(x, y, a, b)),
            BigInt::from(self.rounds),
        ))
    }

    /// `E_xy`, the mean of `(-1)^(a XOR b)` over rounds with inputs `(x, y)`.
    pub fn correlator(&self, x: u8, y: u8) -> Result<BigRational, AnalysisError> {
        let total = self.setting_count(x, y);
        if total == 0 {
            return Err(AnalysisError::UnobservedSetting { x, y });
        }
        let mut signed = 0i64;
        for a in 0..2 {
            for b in 0..2 {
                let c = self.count(x, y, a, b) as i64;
                signed += if a == b { c } else { -c };
            }
        }
        Ok(BigRational::new(BigInt::from(signed), BigInt::from(total)))
    }
}

/// `E_00 + E_01 + E_10 - E_11`.
pub fn chsh_score(dist: &EmpiricalDistribution) -> Result<BigRational, AnalysisError> {
    let mut score = BigRational::zero();
    for (x, y) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        let e = dist.correlator(x, y)?;
        if (x, y) == (1, 1) {
            score -= e;
        } else {
            score += e;
        }
    }
    Ok(score)
}

/// Query `pair` on `horizon` rounds of seeded fair-coin inputs.
pub fn estimate_distribution(pair: &BoxPair, horizon: u64, seed: u64) -> Result<EmpiricalDistribution, BoxError> {
    let mut coins = SplitMix64::new(seed);
    let mut dist = EmpiricalDistribution::default();
    for n in 0..horizon {
        let (x, y) = coins.coin_pair();
        let (a, b) = pair.query(n, x, y)?;
        dist.record(x, y, a, b);
    }
    Ok(dist)
}

/// Speed of light in m/s (exact).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Planck constant in J s (exact).
pub const PLANCK: f64 = 6.626_070_15e-34;
pub const REDUCED_PLANCK: f64 = PLANCK / (2.0 * std::f64::consts::PI);

/// Distance `c * T * M` in metres covered by light while `M` rounds of
/// `T` seconds each elapse.
pub fn signaling_distance(round_seconds: f64, rounds: u64) -> Result<f64, AnalysisError> {
    if !(round_seconds.is_finite() && round_seconds > 0.0) {
        return Err(AnalysisError::InvalidArgument(format!(
            "round duration must be positive, got {round_seconds}"
        )));
    }
    Ok(SPEED_OF_LIGHT * round_seconds * rounds as f64)
}

/// Upper bound `2 m c^2 / (pi hbar)` on the operations per second a system of
/// mass `m` kilograms can perform. It bounds the speed of any box
/// implementation, which is what licenses assuming a time bound.
pub fn lloyd_bound(mass_kg: f64) -> Result<f64, AnalysisError> {
    if !(mass_kg.is_finite() && mass_kg >= 0.0) {
        return Err(AnalysisError::InvalidArgument(format!(
            "mass must be non-negative, got {mass_kg}"
        )));
    }
    Ok(2.0 * mass_kg * SPEED_OF_LIGHT * SPEED_OF_LIGHT / (std::f64::consts::PI * REDUCED_PLANCK))
}
