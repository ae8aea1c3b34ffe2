//! Three-intensity decoy-state estimates for two-pulse sources.
//!
//! From the nine observed yields `S_ab` (`a`, `b` in `{o, x, y}`) this module
//! derives a lower bound on the yield `s11` of single-photon pairs and an
//! upper bound on their X-basis error rate, optionally minimized over a box
//! of statistical fluctuations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::photonsrc::{check_decoy_condition, PhotonSource, SourceError, SourceKind, SourcePair};
use crate::scalar::{clamp_flagged, Scalar};

/// 3x3 table indexed `[alice][bob]` by [`SourceKind::index`].
pub type Table3<T> = [[T; 3]; 3];

/// Sign (`-1` or `+1`) applied to each cell's deviation in a worst-case search.
pub type Corner = Table3<i8>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error(
        "bound denominator {denominator:e} vanishes; decoy and signal intensities must differ"
    )]
    DegenerateDenominator { denominator: f64 },
    #[error("single-photon yield bound is not positive; no key can be certified")]
    ZeroSingleYield,
    #[error("{side} sources: {source}")]
    Source {
        side: &'static str,
        source: SourceError,
    },
    #[error("{side} sources: decoy condition violated at photon number {k}")]
    DecoyCondition { side: &'static str, k: usize },
    #[error("{side} {which} has zero single- or two-photon probability")]
    VanishingProbability {
        side: &'static str,
        which: &'static str,
    },
    #[error("observable {basis:?}/{alpha}{beta} is required but missing")]
    MissingCell {
        basis: Basis,
        alpha: char,
        beta: char,
    },
    #[error("observable {name} {basis:?}/{alpha}{beta} = {value} is outside [0, 1]")]
    OutOfRange {
        name: &'static str,
        basis: Basis,
        alpha: char,
        beta: char,
        value: f64,
    },
    #[error("expected {expected:?}-basis observables, got {got:?}")]
    WrongBasis { expected: Basis, got: Basis },
    #[error("relative fluctuation bound {0} must lie in [0, 1)")]
    InvalidFluctuation(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

impl Basis {
    pub fn symbol(self) -> char {
        match self {
            Basis::Z => 'Z',
            Basis::X => 'X',
        }
    }
}

/// Observed yields and error rates of the nine two-pulse sources in one basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observables<T> {
    pub basis: Basis,
    pub yields: Table3<T>,
    pub errors: Table3<T>,
    /// Pulse-pair counts `N_ab`, when the data came from a finite run.
    pub counts: Option<Table3<u64>>,
    /// Cells actually observed. The X basis of a single-basis decoy run has no signal rows.
    pub present: Table3<bool>,
}

impl<T: Scalar> Observables<T> {
    pub fn new(
        basis: Basis,
        yields: Table3<T>,
        errors: Table3<T>,
        counts: Option<Table3<u64>>,
    ) -> Result<Self, BoundError> {
        Self::with_presence(basis, yields, errors, counts, [[true; 3]; 3])
    }

    pub fn with_presence(
        basis: Basis,
        yields: Table3<T>,
        errors: Table3<T>,
        counts: Option<Table3<u64>>,
        present: Table3<bool>,
    ) -> Result<Self, BoundError> {
        for a in SourceKind::ALL {
            for b in SourceKind::ALL {
                for (name, table) in [("S", &yields), ("E", &errors)] {
                    let v = table[a.index()][b.index()];
                    if !(v >= T::zero() && v <= T::one()) {
                        return Err(BoundError::OutOfRange {
                            name,
                            basis,
                            alpha: a.symbol(),
                            beta: b.symbol(),
                            value: v.to_f64().unwrap_or(f64::NAN),
                        });
                    }
                }
            }
        }
        Ok(Self {
            basis,
            yields,
            errors,
            counts,
            present,
        })
    }

    #[inline]
    pub fn s(&self, a: SourceKind, b: SourceKind) -> T {
        self.yields[a.index()][b.index()]
    }

    #[inline]
    pub fn e(&self, a: SourceKind, b: SourceKind) -> T {
        self.errors[a.index()][b.index()]
    }

    pub fn n(&self, a: SourceKind, b: SourceKind) -> Option<u64> {
        self.counts.map(|c| c[a.index()][b.index()])
    }

    pub fn is_present(&self, a: SourceKind, b: SourceKind) -> bool {
        self.present[a.index()][b.index()]
    }

    fn require(&self, cells: &[(SourceKind, SourceKind)]) -> Result<(), BoundError> {
        match cells.iter().find(|(a, b)| !self.is_present(*a, *b)) {
            Some((a, b)) => Err(BoundError::MissingCell {
                basis: self.basis,
                alpha: a.symbol(),
                beta: b.symbol(),
            }),
            None => Ok(()),
        }
    }
}

use SourceKind::{Decoy as X, Signal as Y, Vacuum as O};

const S11_CELLS: [(SourceKind, SourceKind); 7] =
    [(O, O), (O, X), (X, O), (O, Y), (Y, O), (X, X), (Y, Y)];

/// Which of the two closed forms the bound used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    /// `K_a <= K_b`
    KaLeKb,
    /// `K_a > K_b`
    KaGeKb,
}

impl Branch {
    pub fn name(self) -> &'static str {
        match self {
            Branch::KaLeKb => "Ka_le_Kb",
            Branch::KaGeKb => "Ka_ge_Kb",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct S11Bound<T> {
    /// Certified lower bound, clamped into `[0, 1]`.
    pub value: T,
    /// Value of the selected branch before clamping.
    pub raw: T,
    pub branch: Branch,
    pub ka: T,
    pub kb: T,
    pub tilde_s0: T,
    pub tilde_s0_prime: T,
    pub clamped: bool,
    /// The other branch's formula on the same data. Diagnostic only: it is
    /// not a certified bound.
    pub alternate: Option<T>,
}

/// Vacuum-related subtractions for the decoy pair (`tilde_s0`) and the
/// signal pair (`tilde_s0_prime`).
pub fn vacuum_corrections<T: Scalar>(obs: &Observables<T>, sources: &SourcePair<T>) -> (T, T) {
    vacuum_corrections_from(&obs.yields, sources)
}

fn vacuum_corrections_from<T: Scalar>(s: &Table3<T>, sources: &SourcePair<T>) -> (T, T) {
    let at = |a: SourceKind, b: SourceKind| s[a.index()][b.index()];
    let a0 = sources.alice.decoy.p(0);
    let b0 = sources.bob.decoy.p(0);
    let a0p = sources.alice.signal.p(0);
    let b0p = sources.bob.signal.p(0);
    let tilde_s0 = a0 * at(O, X) + b0 * at(X, O) - a0 * b0 * at(O, O);
    let tilde_s0_prime = a0p * at(O, Y) + b0p * at(Y, O) - a0p * b0p * at(O, O);
    (tilde_s0, tilde_s0_prime)
}

fn check_side<T: Scalar>(
    side: &'static str,
    decoy: &PhotonSource<T>,
    signal: &PhotonSource<T>,
) -> Result<(), BoundError> {
    let check = check_decoy_condition(decoy, signal)
        .map_err(|source| BoundError::Source { side, source })?;
    if let Some(k) = check.first_violation {
        return Err(BoundError::DecoyCondition { side, k });
    }
    for (which, src) in [("decoy", decoy), ("signal", signal)] {
        if src.p(1) <= T::zero() || src.p(2) <= T::zero() {
            return Err(BoundError::VanishingProbability { side, which });
        }
    }
    Ok(())
}

/// Lower bound on the single-photon-pair yield `s11`.
pub fn s11_lower_bound<T: Scalar>(
    obs: &Observables<T>,
    sources: &SourcePair<T>,
) -> Result<S11Bound<T>, BoundError> {
    obs.require(&S11_CELLS)?;
    check_side("alice", &sources.alice.decoy, &sources.alice.signal)?;
    check_side("bob", &sources.bob.decoy, &sources.bob.signal)?;
    s11_from_yields(&obs.yields, sources)
}

fn s11_from_yields<T: Scalar>(
    s: &Table3<T>,
    sources: &SourcePair<T>,
) -> Result<S11Bound<T>, BoundError> {
    let (a, ap) = (&sources.alice.decoy, &sources.alice.signal);
    let (b, bp) = (&sources.bob.decoy, &sources.bob.signal);
    let (a1, a2, a1p, a2p) = (a.p(1), a.p(2), ap.p(1), ap.p(2));
    let (b1, b2, b1p, b2p) = (b.p(1), b.p(2), bp.p(1), bp.p(2));

    let (tilde_s0, tilde_s0_prime) = vacuum_corrections_from(s, sources);
    let decoy_excess = s[X.index()][X.index()] - tilde_s0;
    let signal_excess = s[Y.index()][Y.index()] - tilde_s0_prime;

    let ka = a1p * b2p / (a1 * b2);
    let kb = a2p * b1p / (a2 * b1);

    let le_branch = || {
        let den = a1p * a1 * (b2p * b1 - b2 * b1p);
        (
            (a1p * b2p * decoy_excess - a1 * b2 * signal_excess) / den,
            den,
        )
    };
    let ge_branch = || {
        let den = b1p * b1 * (a2p * a1 - a1p * a2);
        (
            (a2p * b1p * decoy_excess - a2 * b1 * signal_excess) / den,
            den,
        )
    };

    let (branch, (raw, den), other) = if ka <= kb {
        (Branch::KaLeKb, le_branch(), ge_branch())
    } else {
        (Branch::KaGeKb, ge_branch(), le_branch())
    };
    if den.abs() <= T::degenerate_threshold() {
        return Err(BoundError::DegenerateDenominator {
            denominator: den.to_f64().unwrap_or(f64::NAN),
        });
    }
    let alternate = (other.1.abs() > T::degenerate_threshold()).then_some(other.0);
    let (value, clamped) = clamp_flagged(raw, T::zero(), T::one());
    Ok(S11Bound {
        value,
        raw,
        branch,
        ka,
        kb,
        tilde_s0,
        tilde_s0_prime,
        clamped,
        alternate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct E11Bound<T> {
    /// Upper bound on the single-photon-pair error rate, clamped into `[0, 1]`.
    pub value: T,
    pub raw: T,
    pub clamped: bool,
}

/// Upper bound on the X-basis error rate of single-photon pairs, given a
/// lower bound `s11_x` on their X-basis yield.
pub fn e11x_upper_bound<T: Scalar>(
    obs_x: &Observables<T>,
    s11_x: T,
    sources: &SourcePair<T>,
) -> Result<E11Bound<T>, BoundError> {
    if obs_x.basis != Basis::X {
        return Err(BoundError::WrongBasis {
            expected: Basis::X,
            got: obs_x.basis,
        });
    }
    obs_x.require(&[(O, O), (O, X), (X, O), (X, X)])?;
    if !(s11_x > T::zero()) {
        return Err(BoundError::ZeroSingleYield);
    }
    let (a0, a1) = (sources.alice.decoy.p(0), sources.alice.decoy.p(1));
    let (b0, b1) = (sources.bob.decoy.p(0), sources.bob.decoy.p(1));
    if a1 <= T::zero() || b1 <= T::zero() {
        return Err(BoundError::VanishingProbability {
            side: if a1 <= T::zero() { "alice" } else { "bob" },
            which: "decoy",
        });
    }
    let es = |a, b| obs_x.e(a, b) * obs_x.s(a, b);
    let numerator = es(X, X) - a0 * es(O, X) - b0 * es(X, O) + a0 * b0 * es(O, O);
    let raw = numerator / (a1 * b1 * s11_x);
    let (value, clamped) = clamp_flagged(raw, T::zero(), T::one());
    Ok(E11Bound {
        value,
        raw,
        clamped,
    })
}

/// The Z-basis single-photon-pair yield doubles as the X-basis one: both
/// bases average to the same maximally mixed two-qubit state.
pub fn s11_equal_bases<T: Scalar>(s11_z: T) -> T {
    s11_z
}

/// Per-cell bounds `|delta_ab|` on the relative deviation of observed yields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluctuationSpec<T> {
    pub rel_bounds: Table3<T>,
}

/// Cap applied when a count-derived relative deviation would reach 1.
pub const MAX_REL_DEVIATION: f64 = 0.999;

/// Standard errors per cell used when count-derived intervals are requested without a width.
pub const DEFAULT_N_SIGMA: f64 = 5.0;

impl<T: Scalar> FluctuationSpec<T> {
    pub fn new(rel_bounds: Table3<T>) -> Result<Self, BoundError> {
        for row in &rel_bounds {
            for &v in row {
                if !(v >= T::zero() && v < T::one()) {
                    return Err(BoundError::InvalidFluctuation(
                        v.to_f64().unwrap_or(f64::NAN),
                    ));
                }
            }
        }
        Ok(Self { rel_bounds })
    }

    pub fn zero() -> Self {
        Self {
            rel_bounds: [[T::zero(); 3]; 3],
        }
    }

    pub fn uniform(bound: T) -> Result<Self, BoundError> {
        Self::new([[bound; 3]; 3])
    }

    /// `n_sigma` binomial standard errors relative to the observed yield:
    /// `n_sigma * sqrt((1 - S) / (S N))`. Cells with no successes or no
    /// counts get 0; large values are capped at [`MAX_REL_DEVIATION`].
    ///
    /// This is a modeling convenience, not a composable security statement.
    pub fn from_counts(obs: &Observables<T>, n_sigma: T) -> Self {
        let mut rel = [[T::zero(); 3]; 3];
        let cap = T::lit(MAX_REL_DEVIATION);
        for a in SourceKind::ALL {
            for b in SourceKind::ALL {
                let s = obs.s(a, b);
                let n = obs.n(a, b).unwrap_or(0);
                if s > T::zero() && n > 0 {
                    let n = T::from_u64(n).unwrap();
                    let d = n_sigma * ((T::one() - s) / (s * n)).sqrt();
                    rel[a.index()][b.index()] = d.min(cap);
                }
            }
        }
        Self { rel_bounds: rel }
    }
}

/// Minimal bound over the fluctuation box and the corner that attains it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstCase<T> {
    pub bound: S11Bound<T>,
    pub corner: Corner,
}

/// Minimizes the `s11` bound over all `2^9` assignments
/// `S_ab -> S_ab (1 +/- delta_ab)`.
pub fn worst_case_bound<T: Scalar>(
    obs: &Observables<T>,
    sources: &SourcePair<T>,
    fluct: &FluctuationSpec<T>,
) -> Result<WorstCase<T>, BoundError> {
    obs.require(&S11_CELLS)?;
    check_side("alice", &sources.alice.decoy, &sources.alice.signal)?;
    check_side("bob", &sources.bob.decoy, &sources.bob.signal)?;

    let mut best: Option<WorstCase<T>> = None;
    for mask in 0u32..512 {
        let mut yields = obs.yields;
        let mut corner = [[0i8; 3]; 3];
        for cell in 0..9 {
            let (i, j) = (cell / 3, cell % 3);
            let d = fluct.rel_bounds[i][j];
            let (sign, factor) = if mask & (1 << cell) == 0 {
                (-1, T::one() - d)
            } else {
                (1, T::one() + d)
            };
            yields[i][j] = yields[i][j] * factor;
            corner[i][j] = sign;
        }
        let bound = s11_from_yields(&yields, sources)?;
        if best.as_ref().is_none_or(|b| bound.raw < b.bound.raw) {
            best = Some(WorstCase { bound, corner });
        }
    }
    Ok(best.expect("512 corners evaluated"))
}
