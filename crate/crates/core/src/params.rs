//! Tunable parameters of the hashing scheme and the per-repetition hash coefficients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest universe accepted for either the substring or the folded signature space.
pub const MAX_UNIVERSE: u64 = 1 << 63;

/// All knobs of the normalizer.
///
/// Defaults: n-gram lengths `[3, 5, 7]`, 20 repetitions, pruning ratio 0.2,
/// 4 bins over a `2^32` universe, folded universe `2^32` and prime `2^31 - 1`.
///
/// The prime is deliberately not required to exceed the universe. With the
/// defaults every hashed value is below `2^31`, so only the lower half of the
/// universe (bins 0 and 1) is ever occupied and the upper bins are always
/// filled by densification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LshParams {
    pub charlens: Vec<usize>,
    pub num_repetitions: usize,
    pub alpha: f64,
    pub num_bins: usize,
    pub universe_size: u64,
    pub folded_universe_size: u64,
    pub prime: u64,
    pub seed: u64,
}

impl Default for LshParams {
    fn default() -> Self {
        LshParams {
            charlens: vec![3, 5, 7],
            num_repetitions: 20,
            alpha: 0.2,
            num_bins: 4,
            universe_size: 1 << 32,
            folded_universe_size: 1 << 32,
            prime: (1 << 31) - 1,
            seed: 0,
        }
    }
}

impl LshParams {
    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidParams(msg));

        if self.charlens.is_empty() {
            return invalid("charlens must not be empty".into());
        }
        if self.charlens[0] == 0 {
            return invalid("charlens entries must be at least 1".into());
        }
        if self.charlens.windows(2).any(|w| w[0] >= w[1]) {
            return invalid(format!(
                "charlens must be strictly increasing, got {:?}",
                self.charlens
            ));
        }
        if self.num_repetitions == 0 || self.num_repetitions > u32::MAX as usize {
            return invalid(format!(
                "repetitions must be in [1, 2^32), got {}",
                self.num_repetitions
            ));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return invalid(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        for (name, u) in [
            ("universe size", self.universe_size),
            ("folded universe size", self.folded_universe_size),
        ] {
            if !u.is_power_of_two() || u > MAX_UNIVERSE {
                return invalid(format!(
                    "{name} must be a power of two no larger than 2^63, got {u}"
                ));
            }
        }
        if self.num_bins == 0 || self.num_bins as u64 > self.universe_size {
            return invalid(format!("bin count must be in [1, U], got {}", self.num_bins));
        }
        if !self.universe_size.is_multiple_of(self.num_bins as u64) {
            return invalid(format!(
                "universe size {} is not divisible by bin count {}",
                self.universe_size, self.num_bins
            ));
        }
        if !is_prime(self.prime) {
            return invalid(format!("{} is not prime", self.prime));
        }
        Ok(())
    }

    /// Real-valued pruning threshold `alpha * T`.
    pub fn threshold(&self) -> f64 {
        self.alpha * self.num_repetitions as f64
    }

    pub fn bin_width(&self) -> u64 {
        self.universe_size / self.num_bins as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HashRole {
    /// Maps substring digests into the universe `U`.
    Substring,
    /// Folds the densified bin array into the universe `U'`.
    Fold,
}

/// One member `x -> (a*x + b) mod P` of the 2-universal family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashCoeffs {
    pub a: u64,
    pub b: u64,
    pub role: HashRole,
    pub repetition: usize,
}

impl HashCoeffs {
    /// `((a*x + b) mod prime) mod modulus`, exact in 128-bit arithmetic.
    #[inline]
    pub fn apply(&self, x: u64, prime: u64, modulus: u64) -> u64 {
        let v = (self.a as u128 * x as u128 + self.b as u128) % prime as u128;
        (v % modulus as u128) as u64
    }
}

/// The substring and fold coefficient pairs for every repetition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coefficients {
    substring: Vec<HashCoeffs>,
    fold: Vec<HashCoeffs>,
}

impl Coefficients {
    /// Draws `a ~ [1, U]`, `b ~ [0, U - 1]` for each repetition from a ChaCha stream
    /// keyed by `params.seed`.
    pub fn draw(params: &LshParams) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut substring = Vec::with_capacity(params.num_repetitions);
        let mut fold = Vec::with_capacity(params.num_repetitions);
        for t in 0..params.num_repetitions {
            let u = params.universe_size;
            substring.push(HashCoeffs {
                a: rng.random_range(1..=u),
                b: rng.random_range(0..u),
                role: HashRole::Substring,
                repetition: t,
            });
            let u = params.folded_universe_size;
            fold.push(HashCoeffs {
                a: rng.random_range(1..=u),
                b: rng.random_range(0..u),
                role: HashRole::Fold,
                repetition: t,
            });
        }
        Coefficients { substring, fold }
    }

    /// Rebuilds from an arbitrary list, e.g. one read back from a manifest.
    pub fn from_list(list: &[HashCoeffs], repetitions: usize) -> Result<Self> {
        let mut substring = vec![None; repetitions];
        let mut fold = vec![None; repetitions];
        for c in list {
            let slots = match c.role {
                HashRole::Substring => &mut substring,
                HashRole::Fold => &mut fold,
            };
            let slot = slots.get_mut(c.repetition).ok_or_else(|| {
                Error::InvalidParams(format!(
                    "coefficient for repetition {} but only {} repetitions",
                    c.repetition, repetitions
                ))
            })?;
            if slot.replace(*c).is_some() {
                return Err(Error::InvalidParams(format!(
                    "duplicate {:?} coefficients for repetition {}",
                    c.role, c.repetition
                )));
            }
        }
        let collect = |slots: Vec<Option<HashCoeffs>>, role: HashRole| {
            slots
                .into_iter()
                .enumerate()
                .map(|(t, c)| {
                    c.ok_or_else(|| {
                        Error::InvalidParams(format!(
                            "missing {role:?} coefficients for repetition {t}"
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()
        };
        Ok(Coefficients {
            substring: collect(substring, HashRole::Substring)?,
            fold: collect(fold, HashRole::Fold)?,
        })
    }

    /// Substring then fold pair, repetition by repetition.
    pub fn to_list(&self) -> Vec<HashCoeffs> {
        self.substring
            .iter()
            .zip(&self.fold)
            .flat_map(|(s, f)| [*s, *f])
            .collect()
    }

    pub fn repetitions(&self) -> usize {
        self.substring.len()
    }

    pub fn substring(&self, repetition: usize) -> &HashCoeffs {
        &self.substring[repetition]
    }

    pub fn fold(&self, repetition: usize) -> &HashCoeffs {
        &self.fold[repetition]
    }
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    (a as u128 * b as u128 % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin; these witnesses are exact for all 64-bit inputs.
pub fn is_prime(n: u64) -> bool {
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &p in &WITNESSES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &WITNESSES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}
