//! Chaotic spreading sequences.
//!
//! A sequence is one frame's worth of chips taken from the orbit of a
//! one-dimensional chaotic map. The same chips serve as the reference and as
//! the spreading code of every data subcarrier in the frame.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Iterations discarded after seeding so that emitted chips follow the
/// invariant distribution of the map.
pub const BURN_IN: usize = 64;

/// Logistic map parameter.
pub const LOGISTIC_R: f64 = 3.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChaosMapKind {
    /// Second-order Chebyshev polynomial, `x -> 1 - 2x²` on `[-1, 1]`.
    #[default]
    Chebyshev2,
    /// `x -> r·x·(1 - x)` with `r = 3.99` on `[0, 1]`.
    Logistic,
    /// Slope-2 tent map `x -> 1 - 2|x - 1/2|` on `[0, 1]`.
    Tent,
}

impl ChaosMapKind {
    pub const ALL: [ChaosMapKind; 3] = [
        ChaosMapKind::Chebyshev2,
        ChaosMapKind::Logistic,
        ChaosMapKind::Tent,
    ];

    pub fn step(self, x: f64) -> f64 {
        match self {
            ChaosMapKind::Chebyshev2 => 1.0 - 2.0 * x * x,
            ChaosMapKind::Logistic => LOGISTIC_R * x * (1.0 - x),
            ChaosMapKind::Tent => 1.0 - 2.0 * (x - 0.5).abs(),
        }
    }

    /// Closed interval the orbit lives in.
    pub fn interval(self) -> (f64, f64) {
        match self {
            ChaosMapKind::Chebyshev2 => (-1.0, 1.0),
            ChaosMapKind::Logistic | ChaosMapKind::Tent => (0.0, 1.0),
        }
    }

    fn fixed_points(self) -> [f64; 2] {
        match self {
            ChaosMapKind::Chebyshev2 => [-1.0, 0.5],
            ChaosMapKind::Logistic => [0.0, 1.0 - 1.0 / LOGISTIC_R],
            ChaosMapKind::Tent => [0.0, 2.0 / 3.0],
        }
    }

    /// True when `x` is a state the orbit cannot leave (or reaches in one
    /// step): a fixed point or an endpoint of the interval.
    fn is_trapped(self, x: f64) -> bool {
        let (lo, hi) = self.interval();
        !(x > lo && x < hi) || self.fixed_points().contains(&x)
    }

    /// Maps a map state to a zero-centred chip amplitude in `[-1, 1]`.
    pub fn chip(self, x: f64) -> f64 {
        match self {
            ChaosMapKind::Chebyshev2 => x,
            ChaosMapKind::Logistic | ChaosMapKind::Tent => 2.0 * x - 1.0,
        }
    }

    /// Affine map of `u ∈ [0, 1)` into the open interval, kept away from the
    /// endpoints.
    fn initial_condition(self, u: f64) -> f64 {
        const MARGIN: f64 = 1e-6;
        let (lo, hi) = self.interval();
        lo + (hi - lo) * (MARGIN + (1.0 - 2.0 * MARGIN) * u)
    }
}

impl std::fmt::Display for ChaosMapKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ChaosMapKind::Chebyshev2 => "chebyshev2",
            ChaosMapKind::Logistic => "logistic",
            ChaosMapKind::Tent => "tent",
        })
    }
}

/// splitmix64 finalizer.
pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic scrambler producing initial conditions from a seed.
struct Scrambler(u64);

impl Scrambler {
    fn next_unit(&mut self) -> f64 {
        self.0 = splitmix64(self.0);
        (self.0 >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn initial_condition(&mut self, map: ChaosMapKind) -> f64 {
        loop {
            let x0 = map.initial_condition(self.next_unit());
            if !map.is_trapped(x0) {
                return x0;
            }
        }
    }
}

/// One frame's reference / spreading chips for one user.
#[derive(Debug, Clone, PartialEq)]
pub struct ChaoticSequence {
    chips: Vec<f64>,
    pub user_id: u32,
    pub seed: u64,
}

impl ChaoticSequence {
    /// Wraps externally supplied chips.
    pub fn from_chips(chips: Vec<f64>) -> Result<Self> {
        if chips.is_empty() {
            return Err(Error::EmptySequence);
        }
        Ok(Self {
            chips,
            user_id: 0,
            seed: 0,
        })
    }

    pub fn with_user(mut self, user_id: u32) -> Self {
        self.user_id = user_id;
        self
    }

    pub fn chips(&self) -> &[f64] {
        &self.chips
    }

    pub fn len(&self) -> usize {
        self.chips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chips.is_empty()
    }

    pub fn mean_square(&self) -> f64 {
        mean_square(&self.chips)
    }

    pub fn energy(&self) -> f64 {
        self.chips.iter().map(|c| c * c).sum()
    }
}

pub(crate) fn mean_square(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// Iterates `map` from `x0`, discarding `burn_in` states and emitting
/// `length` chips, the first of which is the state reached after burn-in.
///
/// Finite precision can drive an orbit exactly onto a fixed point (the tent
/// map collapses to 0 within ~55 doublings); such states are re-seeded from a
/// scrambler keyed by `x0` so the orbit stays chaotic and deterministic.
pub fn orbit(map: ChaosMapKind, x0: f64, burn_in: usize, length: usize) -> Vec<f64> {
    let mut scrambler = Scrambler(x0.to_bits());
    let mut x = if map.is_trapped(x0) {
        scrambler.initial_condition(map)
    } else {
        x0
    };
    let mut advance = |x: f64| {
        let next = map.step(x);
        if map.is_trapped(next) {
            scrambler.initial_condition(map)
        } else {
            next
        }
    };
    for _ in 0..burn_in {
        x = advance(x);
    }
    let mut chips = Vec::with_capacity(length);
    for i in 0..length {
        if i > 0 {
            x = advance(x);
        }
        chips.push(map.chip(x));
    }
    chips
}

/// Generates `length` chips from the orbit selected by `seed`.
pub fn generate_sequence(map: ChaosMapKind, seed: u64, length: usize) -> Result<ChaoticSequence> {
    if length == 0 {
        return Err(Error::EmptySequence);
    }
    let x0 = Scrambler(seed).initial_condition(map);
    Ok(ChaoticSequence {
        chips: orbit(map, x0, BURN_IN, length),
        user_id: 0,
        seed,
    })
}

/// Scales the chips to unit mean square.
pub fn normalize_energy(seq: ChaoticSequence) -> Result<ChaoticSequence> {
    let ms = seq.mean_square();
    if !(ms > 0.0) || !ms.is_finite() {
        return Err(Error::DegenerateSequence);
    }
    let scale = ms.sqrt().recip();
    let chips = seq.chips.iter().map(|c| c * scale).collect();
    Ok(ChaoticSequence { chips, ..seq })
}
