//! Ground-truth channel oracle and forward synthesis of observables.
//!
//! The oracle assigns every Fock input `|n>|m>` a success probability
//! `y[n][m]` and an error rate `e[n][m]` (conditioned on success). The
//! default tables follow a coincidence model of the relay: one click per arm,
//! each from either a transmitted photon or a dark count. The decoy bounds do
//! not depend on this model, so arbitrary tables can be installed instead.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoybounds::{Basis, BoundError, Observables, Table3};
use crate::photonsrc::{PhotonSource, SourceKind, SourcePair};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("{name} = {value} is outside its allowed range")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("table entry ({n}, {m}) = {value} is outside [0, 1]")]
    InvalidEntry { n: usize, m: usize, value: f64 },
    #[error("yield and error tables must be square and of equal size")]
    TableShape,
    #[error("table entry ({n}, {m}) is beyond the channel truncation k_max = {k_max}")]
    EntryOutOfBounds { n: usize, m: usize, k_max: usize },
    #[error("source truncation k_max = {source_k_max} exceeds channel k_max = {channel_k_max}")]
    KMaxExceeded {
        source_k_max: usize,
        channel_k_max: usize,
    },
    #[error("{0} must sum to 1")]
    Unnormalized(&'static str),
    #[error("n_pairs must be at least 1")]
    NoPairs,
    #[error(transparent)]
    Observables(#[from] BoundError),
}

/// Per-photon-number truth tables of the relay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel<T> {
    pub eta_a: T,
    pub eta_b: T,
    pub dark: T,
    pub misalign: T,
    y_table: Vec<Vec<T>>,
    e_table: Vec<Vec<T>>,
}

fn param<T: Scalar>(
    name: &'static str,
    value: T,
    lo: T,
    hi: T,
    hi_open: bool,
) -> Result<(), ChannelError> {
    let ok = value >= lo && if hi_open { value < hi } else { value <= hi };
    if ok {
        Ok(())
    } else {
        Err(ChannelError::InvalidParameter {
            name,
            value: value.to_f64().unwrap_or(f64::NAN),
        })
    }
}

/// Default coincidence model truncated at `k_max` photons per arm.
pub fn build_channel<T: Scalar>(
    eta_a: T,
    eta_b: T,
    dark: T,
    misalign: T,
    k_max: usize,
) -> Result<Channel<T>, ChannelError> {
    let one = T::one();
    param("eta_a", eta_a, T::zero(), one, false)?;
    param("eta_b", eta_b, T::zero(), one, false)?;
    param("dark", dark, T::zero(), one, true)?;
    param("misalign", misalign, T::zero(), T::half(), false)?;

    let size = k_max + 1;
    let mut y_table = vec![vec![T::zero(); size]; size];
    let mut e_table = vec![vec![T::zero(); size]; size];
    for n in 0..size {
        // probability that at least one of n photons survives the arm
        let photon_a = one - (one - eta_a).powi(n as i32);
        let click_a = one - (one - dark) * (one - eta_a).powi(n as i32);
        for m in 0..size {
            let photon_b = one - (one - eta_b).powi(m as i32);
            let click_b = one - (one - dark) * (one - eta_b).powi(m as i32);
            let y = click_a * click_b;
            y_table[n][m] = y;
            e_table[n][m] = if n == 0 && m == 0 {
                T::half()
            } else {
                let dark_share = if y > T::zero() {
                    one - photon_a * photon_b / y
                } else {
                    T::zero()
                };
                misalign + (T::half() - misalign) * dark_share
            };
        }
    }
    Ok(Channel {
        eta_a,
        eta_b,
        dark,
        misalign,
        y_table,
        e_table,
    })
}

impl<T: Scalar> Channel<T> {
    /// Channel defined entirely by explicit tables (model parameters set to 0).
    pub fn from_tables(y_table: Vec<Vec<T>>, e_table: Vec<Vec<T>>) -> Result<Self, ChannelError> {
        let size = y_table.len();
        if size == 0
            || e_table.len() != size
            || y_table
                .iter()
                .chain(e_table.iter())
                .any(|row| row.len() != size)
        {
            return Err(ChannelError::TableShape);
        }
        for table in [&y_table, &e_table] {
            for (n, row) in table.iter().enumerate() {
                for (m, &v) in row.iter().enumerate() {
                    check_entry(n, m, v)?;
                }
            }
        }
        Ok(Self {
            eta_a: T::zero(),
            eta_b: T::zero(),
            dark: T::zero(),
            misalign: T::zero(),
            y_table,
            e_table,
        })
    }

    /// Replaces one `(n, m)` entry of both tables.
    pub fn set_entry(&mut self, n: usize, m: usize, y: T, e: T) -> Result<(), ChannelError> {
        if n > self.k_max() || m > self.k_max() {
            return Err(ChannelError::EntryOutOfBounds {
                n,
                m,
                k_max: self.k_max(),
            });
        }
        check_entry(n, m, y)?;
        check_entry(n, m, e)?;
        self.y_table[n][m] = y;
        self.e_table[n][m] = e;
        Ok(())
    }

    pub fn k_max(&self) -> usize {
        self.y_table.len() - 1
    }

    #[inline]
    pub fn y(&self, n: usize, m: usize) -> T {
        self.y_table[n][m]
    }

    #[inline]
    pub fn e(&self, n: usize, m: usize) -> T {
        self.e_table[n][m]
    }

    pub fn y_table(&self) -> &[Vec<T>] {
        &self.y_table
    }

    pub fn e_table(&self) -> &[Vec<T>] {
        &self.e_table
    }

    /// Success probability of a pulse pair drawn from `alice` and `bob`, and
    /// the matching weighted error sum `sum p p e y`.
    pub fn mixed_yield(&self, alice: &PhotonSource<T>, bob: &PhotonSource<T>) -> (T, T) {
        let mut s = T::zero();
        let mut es = T::zero();
        for (n, &pa) in alice.probs.iter().enumerate() {
            if pa == T::zero() {
                continue;
            }
            let mut row_s = T::zero();
            let mut row_es = T::zero();
            for (m, &pb) in bob.probs.iter().enumerate() {
                let y = self.y_table[n][m];
                row_s = row_s + pb * y;
                row_es = row_es + pb * y * self.e_table[n][m];
            }
            s = s + pa * row_s;
            es = es + pa * row_es;
        }
        (s, es)
    }
}

fn check_entry<T: Scalar>(n: usize, m: usize, v: T) -> Result<(), ChannelError> {
    if v >= T::zero() && v <= T::one() {
        Ok(())
    } else {
        Err(ChannelError::InvalidEntry {
            n,
            m,
            value: v.to_f64().unwrap_or(f64::NAN),
        })
    }
}

fn check_k_max<T: Scalar>(
    channel: &Channel<T>,
    sources: &SourcePair<T>,
) -> Result<(), ChannelError> {
    if sources.k_max() > channel.k_max() {
        Err(ChannelError::KMaxExceeded {
            source_k_max: sources.k_max(),
            channel_k_max: channel.k_max(),
        })
    } else {
        Ok(())
    }
}

/// Exact asymptotic observables. The oracle is basis independent, so both
/// bases give the same tables.
pub fn synthesize_observables<T: Scalar>(
    channel: &Channel<T>,
    sources: &SourcePair<T>,
    basis: Basis,
) -> Result<Observables<T>, ChannelError> {
    check_k_max(channel, sources)?;
    let mut yields = [[T::zero(); 3]; 3];
    let mut errors = [[T::zero(); 3]; 3];
    for a in SourceKind::ALL {
        for b in SourceKind::ALL {
            let (s, es) = channel.mixed_yield(sources.alice.get(a), sources.bob.get(b));
            yields[a.index()][b.index()] = s;
            errors[a.index()][b.index()] = if s > T::zero() {
                (es / s).min(T::one())
            } else {
                T::zero()
            };
        }
    }
    Ok(Observables::new(basis, yields, errors, None)?)
}

/// Combined flip probability when Alice flips with `p_a` and Bob with `p_b`.
pub fn combined_flip<T: Scalar>(p_a: T, p_b: T) -> T {
    p_a * (T::one() - p_b) + p_b * (T::one() - p_a)
}

/// Error rates after both parties deliberately flip their bit values with
/// the given probabilities: `E -> E + p (1 - 2E)`.
pub fn apply_bit_flips<T: Scalar>(obs: &Observables<T>, p_a: T, p_b: T) -> Observables<T> {
    let p = combined_flip(p_a, p_b);
    let mut out = obs.clone();
    for i in 0..3 {
        for j in 0..3 {
            if obs.yields[i][j] > T::zero() {
                let e = obs.errors[i][j];
                out.errors[i][j] = e + p * (T::one() - T::two() * e);
            }
        }
    }
    out
}

/// Finite-size run parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRunConfig {
    pub n_pairs: u64,
    /// Alice's choice probabilities over (vacuum, decoy, signal).
    pub probs_alpha: [f64; 3],
    /// Bob's choice probabilities over (vacuum, decoy, signal).
    pub probs_beta: [f64; 3],
    /// Probabilities of (Z, X).
    pub basis_probs: [f64; 2],
    pub seed: u64,
    /// Deliberate bit-flip probabilities (Alice, Bob) applied to X-basis events.
    #[serde(default)]
    pub x_flips: [f64; 2],
}

impl SimRunConfig {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.n_pairs == 0 {
            return Err(ChannelError::NoPairs);
        }
        for (name, probs) in [
            ("probs_alpha", &self.probs_alpha[..]),
            ("probs_beta", &self.probs_beta[..]),
            ("basis_probs", &self.basis_probs[..]),
        ] {
            if probs.iter().any(|p| !(0.0..=1.0).contains(p))
                || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-12
            {
                return Err(ChannelError::Unnormalized(name));
            }
        }
        for &p in &self.x_flips {
            if !(0.0..=0.5).contains(&p) {
                return Err(ChannelError::InvalidParameter {
                    name: "x_flips",
                    value: p,
                });
            }
        }
        Ok(())
    }
}

/// Pulse pairs simulated per shard. Shard `i` draws from its own generator
/// seeded with [`shard_seed`]`(seed, i)`, so tallies do not depend on how
/// shards are scheduled.
pub const SHARD_PAIRS: u64 = 1 << 20;

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed of shard `index`: `splitmix64(seed ^ splitmix64(index))`.
pub fn shard_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Tally {
    pairs: [[[u64; 3]; 3]; 2],
    successes: [[[u64; 3]; 3]; 2],
    errors: [[[u64; 3]; 3]; 2],
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        for b in 0..2 {
            for i in 0..3 {
                for j in 0..3 {
                    self.pairs[b][i][j] += other.pairs[b][i][j];
                    self.successes[b][i][j] += other.successes[b][i][j];
                    self.errors[b][i][j] += other.errors[b][i][j];
                }
            }
        }
        self
    }
}

fn cumulative(probs: &[f64]) -> Vec<f64> {
    probs
        .iter()
        .scan(0.0, |acc, &p| {
            *acc += p;
            Some(*acc)
        })
        .collect()
}

/// First index whose cumulative mass exceeds `u`; `cdf.len()` for the truncated tail.
#[inline]
fn draw_index(cdf: &[f64], u: f64) -> usize {
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len())
}

struct Sampler {
    alpha_cdf: Vec<f64>,
    beta_cdf: Vec<f64>,
    x_basis_prob: f64,
    photon_cdf_a: [Vec<f64>; 3],
    photon_cdf_b: [Vec<f64>; 3],
    y: Vec<Vec<f64>>,
    /// Error probability per basis, after deliberate flips in X.
    e: [Vec<Vec<f64>>; 2],
}

impl Sampler {
    fn run_shard(&self, seed: u64, pairs: u64) -> Tally {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Tally::default();
        let size = self.y.len();
        for _ in 0..pairs {
            let basis = if self.x_basis_prob > 0.0 && rng.random::<f64>() < self.x_basis_prob {
                1
            } else {
                0
            };
            let a = draw_index(&self.alpha_cdf, rng.random::<f64>()).min(2);
            let b = draw_index(&self.beta_cdf, rng.random::<f64>()).min(2);
            t.pairs[basis][a][b] += 1;
            let n = draw_index(&self.photon_cdf_a[a], rng.random::<f64>());
            let m = draw_index(&self.photon_cdf_b[b], rng.random::<f64>());
            if n >= size || m >= size {
                // truncated tail: counted as no detection, matching the exact sums
                continue;
            }
            if rng.random::<f64>() < self.y[n][m] {
                t.successes[basis][a][b] += 1;
                if rng.random::<f64>() < self.e[basis][n][m] {
                    t.errors[basis][a][b] += 1;
                }
            }
        }
        t
    }
}

/// Both bases of a finite-size run.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloRun<T> {
    pub z: Observables<T>,
    pub x: Observables<T>,
}

/// Simulates `cfg.n_pairs` pulse pairs event by event: choose sources and
/// basis, draw photon numbers, then success with probability `y[n][m]` and
/// error with probability `e[n][m]`. Deterministic in `cfg.seed`.
pub fn run_monte_carlo<T: Scalar>(
    channel: &Channel<T>,
    sources: &SourcePair<T>,
    cfg: &SimRunConfig,
) -> Result<MonteCarloRun<T>, ChannelError> {
    cfg.validate()?;
    check_k_max(channel, sources)?;
    let to64 = |v: T| v.to_f64().unwrap_or(f64::NAN);
    let photon_cdfs = |side: &crate::photonsrc::SourceTriple<T>| {
        SourceKind::ALL.map(|k| {
            cumulative(
                &side
                    .get(k)
                    .probs
                    .iter()
                    .map(|&p| to64(p))
                    .collect::<Vec<_>>(),
            )
        })
    };
    let y: Vec<Vec<f64>> = channel
        .y_table
        .iter()
        .map(|r| r.iter().map(|&v| to64(v)).collect())
        .collect();
    let e_z: Vec<Vec<f64>> = channel
        .e_table
        .iter()
        .map(|r| r.iter().map(|&v| to64(v)).collect())
        .collect();
    let flip = combined_flip(cfg.x_flips[0], cfg.x_flips[1]);
    let e_x = e_z
        .iter()
        .map(|r| r.iter().map(|&e| e + flip * (1.0 - 2.0 * e)).collect())
        .collect();
    let sampler = Sampler {
        alpha_cdf: cumulative(&cfg.probs_alpha),
        beta_cdf: cumulative(&cfg.probs_beta),
        x_basis_prob: cfg.basis_probs[1],
        photon_cdf_a: photon_cdfs(&sources.alice),
        photon_cdf_b: photon_cdfs(&sources.bob),
        y,
        e: [e_z, e_x],
    };

    let shards = cfg.n_pairs.div_ceil(SHARD_PAIRS);
    let tally = (0..shards)
        .into_par_iter()
        .map(|i| {
            let pairs = SHARD_PAIRS.min(cfg.n_pairs - i * SHARD_PAIRS);
            sampler.run_shard(shard_seed(cfg.seed, i), pairs)
        })
        .reduce(Tally::default, Tally::merge);

    let build = |basis: Basis, idx: usize| -> Result<Observables<T>, ChannelError> {
        let mut yields: Table3<T> = [[T::zero(); 3]; 3];
        let mut errors: Table3<T> = [[T::zero(); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let n_pairs = tally.pairs[idx][i][j];
                let n_succ = tally.successes[idx][i][j];
                if n_pairs > 0 {
                    yields[i][j] = T::from_u64(n_succ).unwrap() / T::from_u64(n_pairs).unwrap();
                }
                if n_succ > 0 {
                    errors[i][j] = T::from_u64(tally.errors[idx][i][j]).unwrap()
                        / T::from_u64(n_succ).unwrap();
                }
            }
        }
        Ok(Observables::new(
            basis,
            yields,
            errors,
            Some(tally.pairs[idx]),
        )?)
    };
    Ok(MonteCarloRun {
        z: build(Basis::Z, 0)?,
        x: build(Basis::X, 1)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_channel_has_no_errors() {
        let ch = build_channel(0.3f64, 0.2, 0.0, 0.0, 6).unwrap();
        for n in 1..=6 {
            for m in 1..=6 {
                assert_eq!(ch.e(n, m), 0.0);
            }
        }
        assert_eq!(ch.e(0, 0), 0.5);
        assert_eq!(ch.y(0, 3), 0.0);
    }

    #[test]
    fn lossless_channel_always_clicks() {
        let ch = build_channel(1.0f64, 1.0, 0.0, 0.02, 6).unwrap();
        for n in 1..=6 {
            for m in 1..=6 {
                assert_eq!(ch.y(n, m), 1.0);
                assert_eq!(ch.e(n, m), 0.02);
            }
        }
    }

    #[test]
    fn single_photon_yield() {
        let ch = build_channel(0.1f64, 0.1, 0.0, 0.0, 4).unwrap();
        assert!((ch.y(1, 1) - 0.01).abs() < 1e-17);
    }

    #[test]
    fn dark_counts_pull_errors_toward_half() {
        let ch = build_channel(0.1f64, 0.1, 1e-3, 0.01, 4).unwrap();
        assert!((ch.y(0, 0) - 1e-6).abs() < 1e-18);
        assert!(ch.e(1, 1) > 0.01 && ch.e(1, 1) < 0.5);
        assert!((ch.e(0, 2) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(build_channel(1.5f64, 0.1, 0.0, 0.0, 4).is_err());
        assert!(build_channel(0.1f64, 0.1, 1.0, 0.0, 4).is_err());
        assert!(build_channel(0.1f64, 0.1, 0.0, 0.6, 4).is_err());
        let mut ch = build_channel(0.1f64, 0.1, 0.0, 0.0, 4).unwrap();
        assert!(ch.set_entry(5, 0, 0.1, 0.1).is_err());
        assert!(ch.set_entry(1, 1, 1.1, 0.1).is_err());
        ch.set_entry(1, 1, 0.7, 0.2).unwrap();
        assert_eq!((ch.y(1, 1), ch.e(1, 1)), (0.7, 0.2));
        assert_eq!(
            Channel::<f64>::from_tables(vec![vec![0.1; 2]; 2], vec![vec![0.1; 3]; 3]),
            Err(ChannelError::TableShape)
        );
    }

    #[test]
    fn vacuum_pair_sees_only_dark_counts() {
        let ch = build_channel(0.1f64, 0.1, 1e-4, 0.01, 12).unwrap();
        let pair = SourcePair::coherent(0.1, 0.4, 12).unwrap();
        let obs = synthesize_observables(&ch, &pair, Basis::Z).unwrap();
        assert_eq!(obs.s(SourceKind::Vacuum, SourceKind::Vacuum), ch.y(0, 0));
    }

    #[test]
    fn source_truncation_must_fit() {
        let ch = build_channel(0.1f64, 0.1, 0.0, 0.0, 6).unwrap();
        let pair = SourcePair::coherent(0.1, 0.4, 12).unwrap();
        assert!(matches!(
            synthesize_observables(&ch, &pair, Basis::Z),
            Err(ChannelError::KMaxExceeded { .. })
        ));
    }

    #[test]
    fn flips_raise_errors_toward_half() {
        let ch = build_channel(0.1f64, 0.1, 1e-6, 0.01, 12).unwrap();
        let pair = SourcePair::coherent(0.1, 0.4, 12).unwrap();
        let obs = synthesize_observables(&ch, &pair, Basis::X).unwrap();
        assert_eq!(apply_bit_flips(&obs, 0.0, 0.0), obs);
        let flipped = apply_bit_flips(&obs, 0.5, 0.0);
        for i in 0..3 {
            for j in 0..3 {
                assert!((flipped.errors[i][j] - 0.5).abs() < 1e-15);
            }
        }
        assert!((combined_flip(0.1f64, 0.2) - 0.26).abs() < 1e-16);
    }

    #[test]
    fn shard_seeds_differ() {
        let seeds: Vec<u64> = (0..64).map(|i| shard_seed(42, i)).collect();
        let mut uniq = seeds.clone();
        uniq.sort_unstable();
        uniq.dedup();
        assert_eq!(uniq.len(), seeds.len());
        assert_ne!(shard_seed(1, 0), shard_seed(2, 0));
    }

    #[test]
    fn run_config_validation() {
        let mut cfg = SimRunConfig {
            n_pairs: 10,
            probs_alpha: [0.2, 0.3, 0.5],
            probs_beta: [0.2, 0.3, 0.5],
            basis_probs: [0.5, 0.5],
            seed: 1,
            x_flips: [0.0, 0.0],
        };
        assert!(cfg.validate().is_ok());
        cfg.probs_beta = [0.2, 0.3, 0.6];
        assert_eq!(
            cfg.validate(),
            Err(ChannelError::Unnormalized("probs_beta"))
        );
        cfg.probs_beta = [0.2, 0.3, 0.5];
        cfg.n_pairs = 0;
        assert_eq!(cfg.validate(), Err(ChannelError::NoPairs));
    }
}
