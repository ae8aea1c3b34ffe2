//! Photon-number-diagonal sources and the decoy admissibility condition.
//!
//! A phase-randomized source is fully described by its photon-number
//! distribution `p_k`. Distributions are truncated at `k_max`; the mass that
//! falls beyond the truncation point is carried explicitly in
//! [`PhotonSource::truncation_tail`] and never folded back into the kept
//! probabilities.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SourceError {
    #[error("mean photon number must be finite and non-negative, got {0}")]
    InvalidMean(f64),
    #[error("k_max must be at least 2, got {0}")]
    KMaxTooSmall(usize),
    #[error("truncation tail {tail:e} exceeds tolerance {tolerance:e}; raise k_max")]
    TailTooLarge { tail: f64, tolerance: f64 },
    #[error("probability p_{index} = {value} is outside [0, 1]")]
    ProbabilityOutOfRange { index: usize, value: f64 },
    #[error("probabilities sum to {0}, which exceeds 1")]
    Overnormalized(f64),
    #[error("sources are truncated at different k_max ({0} vs {1})")]
    KMaxMismatch(usize, usize),
    #[error("decoy condition undefined: decoy source has p_{0} = 0")]
    UndefinedRatio(usize),
    #[error("decoy condition violated at photon number {0}")]
    DecoyConditionViolated(usize),
    #[error("decoy mean photon number {decoy} is not below signal mean {signal}")]
    IntensityOrder { decoy: f64, signal: f64 },
}

/// Truncated photon-number distribution of one physical source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonSource<T> {
    pub label: String,
    pub probs: Vec<T>,
    pub mean_photon: T,
    pub truncation_tail: T,
}

impl<T: Scalar> PhotonSource<T> {
    /// Phase-randomized coherent state: Poissonian photon statistics.
    pub fn coherent(mu: T, k_max: usize) -> Result<Self, SourceError> {
        Self::coherent_with_tolerance(mu, k_max, T::tail_tolerance())
    }

    pub fn coherent_with_tolerance(mu: T, k_max: usize, tail_tol: T) -> Result<Self, SourceError> {
        check_mean(mu)?;
        check_k_max(k_max)?;
        let mut probs = Vec::with_capacity(k_max + 1);
        let mut p = (-mu).exp();
        probs.push(p);
        for k in 1..=k_max {
            p = p * mu / T::from_usize(k).unwrap();
            probs.push(p);
        }
        Self::finish(format!("coherent({mu})"), probs, mu, tail_tol)
    }

    /// Heralded parametric down-conversion: thermal statistics
    /// `p_k = mu^k / (1 + mu)^(k + 1)`.
    pub fn thermal(mu: T, k_max: usize) -> Result<Self, SourceError> {
        Self::thermal_with_tolerance(mu, k_max, T::tail_tolerance())
    }

    pub fn thermal_with_tolerance(mu: T, k_max: usize, tail_tol: T) -> Result<Self, SourceError> {
        check_mean(mu)?;
        check_k_max(k_max)?;
        let one = T::one();
        let ratio = mu / (one + mu);
        let mut p = one / (one + mu);
        let mut probs = Vec::with_capacity(k_max + 1);
        probs.push(p);
        for _ in 1..=k_max {
            p = p * ratio;
            probs.push(p);
        }
        Self::finish(format!("thermal({mu})"), probs, mu, tail_tol)
    }

    /// The vacuum source `|0><0|`.
    pub fn vacuum(k_max: usize) -> Result<Self, SourceError> {
        check_k_max(k_max)?;
        let mut probs = vec![T::zero(); k_max + 1];
        probs[0] = T::one();
        Ok(Self {
            label: "vacuum".to_string(),
            probs,
            mean_photon: T::zero(),
            truncation_tail: T::zero(),
        })
    }

    /// Arbitrary distribution given as `p_0..p_kmax`; missing mass becomes the tail.
    pub fn custom(label: impl Into<String>, probs: Vec<T>) -> Result<Self, SourceError> {
        Self::custom_with_tolerance(label, probs, T::tail_tolerance())
    }

    pub fn custom_with_tolerance(
        label: impl Into<String>,
        probs: Vec<T>,
        tail_tol: T,
    ) -> Result<Self, SourceError> {
        check_k_max(probs.len().saturating_sub(1))?;
        for (index, &value) in probs.iter().enumerate() {
            if !(value >= T::zero() && value <= T::one()) {
                return Err(SourceError::ProbabilityOutOfRange {
                    index,
                    value: value.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        let mean = probs
            .iter()
            .enumerate()
            .map(|(k, &p)| T::from_usize(k).unwrap() * p)
            .sum();
        Self::finish(label.into(), probs, mean, tail_tol)
    }

    fn finish(label: String, probs: Vec<T>, mean: T, tail_tol: T) -> Result<Self, SourceError> {
        let total: T = probs.iter().copied().sum();
        let raw_tail = T::one() - total;
        if raw_tail < -T::normalization_tolerance() {
            return Err(SourceError::Overnormalized(
                total.to_f64().unwrap_or(f64::NAN),
            ));
        }
        let tail = raw_tail.max(T::zero());
        if tail > tail_tol {
            return Err(SourceError::TailTooLarge {
                tail: tail.to_f64().unwrap_or(f64::NAN),
                tolerance: tail_tol.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(Self {
            label,
            probs,
            mean_photon: mean,
            truncation_tail: tail,
        })
    }

    pub fn k_max(&self) -> usize {
        self.probs.len() - 1
    }

    /// `p_k`, zero beyond the truncation point.
    #[inline]
    pub fn p(&self, k: usize) -> T {
        self.probs.get(k).copied().unwrap_or_else(T::zero)
    }
}

fn check_mean<T: Scalar>(mu: T) -> Result<(), SourceError> {
    if mu.is_finite() && mu >= T::zero() {
        Ok(())
    } else {
        Err(SourceError::InvalidMean(mu.to_f64().unwrap_or(f64::NAN)))
    }
}

fn check_k_max(k_max: usize) -> Result<(), SourceError> {
    if k_max < 2 {
        Err(SourceError::KMaxTooSmall(k_max))
    } else {
        Ok(())
    }
}

/// Outcome of [`check_decoy_condition`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecoyCheck {
    pub holds: bool,
    /// Smallest photon number at which the ratio chain breaks. `Some(1)` means
    /// `y_2/x_2 < y_1/x_1`.
    pub first_violation: Option<usize>,
}

/// Checks `y_k/x_k >= y_2/x_2 >= y_1/x_1` for every `k >= 2`, where `x` is the
/// decoy and `y` the signal distribution.
pub fn check_decoy_condition<T: Scalar>(
    x: &PhotonSource<T>,
    y: &PhotonSource<T>,
) -> Result<DecoyCheck, SourceError> {
    if x.k_max() != y.k_max() {
        return Err(SourceError::KMaxMismatch(x.k_max(), y.k_max()));
    }
    for k in [1, 2] {
        if x.p(k) <= T::zero() {
            return Err(SourceError::UndefinedRatio(k));
        }
    }
    let eps = T::ratio_epsilon();
    let at_least = |lhs: T, rhs: T| lhs >= rhs - eps * rhs.abs();

    let r1 = y.p(1) / x.p(1);
    let r2 = y.p(2) / x.p(2);
    let violation = if !at_least(r2, r1) {
        Some(1)
    } else {
        (3..=x.k_max()).find(|&k| {
            let (xk, yk) = (x.p(k), y.p(k));
            if xk <= T::zero() {
                // infinite ratio when yk > 0, absent term when yk == 0
                false
            } else {
                !at_least(yk / xk, r2)
            }
        })
    };
    Ok(DecoyCheck {
        holds: violation.is_none(),
        first_violation: violation,
    })
}

/// Which of the three sources on one side emitted a pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SourceKind {
    Vacuum,
    Decoy,
    Signal,
}

impl SourceKind {
    pub const ALL: [SourceKind; 3] = [SourceKind::Vacuum, SourceKind::Decoy, SourceKind::Signal];

    pub fn index(self) -> usize {
        match self {
            SourceKind::Vacuum => 0,
            SourceKind::Decoy => 1,
            SourceKind::Signal => 2,
        }
    }

    /// Single-letter tag used in CSV files: `o`, `x`, `y`.
    pub fn symbol(self) -> char {
        match self {
            SourceKind::Vacuum => 'o',
            SourceKind::Decoy => 'x',
            SourceKind::Signal => 'y',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c {
            'o' => Some(SourceKind::Vacuum),
            'x' => Some(SourceKind::Decoy),
            'y' => Some(SourceKind::Signal),
            _ => None,
        }
    }
}

/// Vacuum, decoy and signal sources of one party.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceTriple<T> {
    pub vacuum: PhotonSource<T>,
    pub decoy: PhotonSource<T>,
    pub signal: PhotonSource<T>,
}

impl<T: Scalar> SourceTriple<T> {
    /// Builds the triple, adding a vacuum source of matching truncation, and
    /// rejects pairs that violate the decoy condition or the intensity order.
    pub fn new(decoy: PhotonSource<T>, signal: PhotonSource<T>) -> Result<Self, SourceError> {
        let check = check_decoy_condition(&decoy, &signal)?;
        if let Some(k) = check.first_violation {
            return Err(SourceError::DecoyConditionViolated(k));
        }
        if !(decoy.mean_photon < signal.mean_photon) {
            return Err(SourceError::IntensityOrder {
                decoy: decoy.mean_photon.to_f64().unwrap_or(f64::NAN),
                signal: signal.mean_photon.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(Self {
            vacuum: PhotonSource::vacuum(decoy.k_max())?,
            decoy,
            signal,
        })
    }

    /// Builds a triple without admissibility checks. Bounds computed from such
    /// a triple carry no guarantee; used for diagnostics and degenerate-input tests.
    pub fn unchecked(decoy: PhotonSource<T>, signal: PhotonSource<T>) -> Result<Self, SourceError> {
        Ok(Self {
            vacuum: PhotonSource::vacuum(decoy.k_max())?,
            decoy,
            signal,
        })
    }

    pub fn get(&self, kind: SourceKind) -> &PhotonSource<T> {
        match kind {
            SourceKind::Vacuum => &self.vacuum,
            SourceKind::Decoy => &self.decoy,
            SourceKind::Signal => &self.signal,
        }
    }

    pub fn k_max(&self) -> usize {
        self.decoy.k_max()
    }
}

/// Alice's and Bob's source triples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourcePair<T> {
    pub alice: SourceTriple<T>,
    pub bob: SourceTriple<T>,
}

impl<T: Scalar> SourcePair<T> {
    pub fn new(alice: SourceTriple<T>, bob: SourceTriple<T>) -> Self {
        Self { alice, bob }
    }

    /// Same triple on both sides.
    pub fn symmetric(triple: SourceTriple<T>) -> Self {
        Self {
            alice: triple.clone(),
            bob: triple,
        }
    }

    /// Coherent decoy/signal on both sides with the same intensities.
    pub fn coherent(mu_x: T, mu_y: T, k_max: usize) -> Result<Self, SourceError> {
        let triple = SourceTriple::new(
            PhotonSource::coherent(mu_x, k_max)?,
            PhotonSource::coherent(mu_y, k_max)?,
        )?;
        Ok(Self::symmetric(triple))
    }

    pub fn k_max(&self) -> usize {
        self.alice.k_max().max(self.bob.k_max())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn coherent_vacuum_limit() {
        let s = PhotonSource::<f64>::coherent(0.0, 10).unwrap();
        assert_eq!(s.probs[0], 1.0);
        assert!(s.probs[1..].iter().all(|&p| p == 0.0));
        assert_eq!(s.truncation_tail, 0.0);
    }

    #[test]
    fn coherent_single_photon_mass() {
        let s = PhotonSource::<f64>::coherent(0.1, 12).unwrap();
        // 0.1 * exp(-0.1), evaluated with mpmath at 30 digits
        assert!((s.probs[1] - 0.090483741803595957316).abs() < 1e-17);
    }

    #[test]
    fn coherent_tail_is_small() {
        let s = PhotonSource::<f64>::coherent(0.4, 12).unwrap();
        let total: f64 = s.probs.iter().sum();
        assert!(total >= 1.0 - 1e-10);
        assert!(s.truncation_tail <= 1e-10);
    }

    #[test]
    fn coherent_rejects_bad_inputs() {
        assert!(matches!(
            PhotonSource::<f64>::coherent(-0.1, 10),
            Err(SourceError::InvalidMean(_))
        ));
        assert!(matches!(
            PhotonSource::<f64>::coherent(0.1, 1),
            Err(SourceError::KMaxTooSmall(1))
        ));
        assert!(matches!(
            PhotonSource::<f64>::coherent(3.0, 4),
            Err(SourceError::TailTooLarge { .. })
        ));
    }

    #[test]
    fn thermal_values() {
        let vac = PhotonSource::<f64>::thermal(0.0, 10).unwrap();
        assert_eq!(vac.probs[0], 1.0);
        let s = PhotonSource::<f64>::thermal(0.1, 40).unwrap();
        assert!((s.probs[1] - 0.1 / (1.1 * 1.1)).abs() < 1e-16);
        let s = PhotonSource::<f64>::thermal(0.5, 60).unwrap();
        assert!(s.probs.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn custom_validation() {
        assert!(PhotonSource::<f64>::custom("c", vec![0.5, 0.3, 0.2]).is_ok());
        assert!(matches!(
            PhotonSource::<f64>::custom("c", vec![0.5, 0.6, 0.2]),
            Err(SourceError::Overnormalized(_))
        ));
        assert!(matches!(
            PhotonSource::<f64>::custom("c", vec![0.5, -0.1, 0.6]),
            Err(SourceError::ProbabilityOutOfRange { index: 1, .. })
        ));
        assert!(matches!(
            PhotonSource::<f64>::custom("c", vec![0.5, 0.3, 0.1]),
            Err(SourceError::TailTooLarge { .. })
        ));
        let s = PhotonSource::<f64>::custom("c", vec![0.5, 0.3, 0.2]).unwrap();
        assert!((s.mean_photon - 0.7).abs() < 1e-15);
    }

    #[test]
    fn decoy_condition_examples() {
        let weak = PhotonSource::<f64>::coherent(0.1, 12).unwrap();
        let strong = PhotonSource::<f64>::coherent(0.4, 12).unwrap();
        assert!(check_decoy_condition(&weak, &strong).unwrap().holds);
        let swapped = check_decoy_condition(&strong, &weak).unwrap();
        assert!(!swapped.holds);
        assert_eq!(swapped.first_violation, Some(1));
        assert!(check_decoy_condition(&weak, &weak).unwrap().holds);
    }

    #[test]
    fn decoy_condition_reports_late_violation() {
        // ratios 1, 1, 1, 0.5: breaks at k = 3
        let x = PhotonSource::<f64>::custom("x", vec![0.4, 0.2, 0.2, 0.2]).unwrap();
        let y = PhotonSource::<f64>::custom("y", vec![0.5, 0.2, 0.2, 0.1]).unwrap();
        let check = check_decoy_condition(&x, &y).unwrap();
        assert_eq!(check.first_violation, Some(3));
    }

    #[test]
    fn decoy_condition_guards_division() {
        let x = PhotonSource::<f64>::custom("x", vec![0.8, 0.0, 0.2]).unwrap();
        let y = PhotonSource::<f64>::custom("y", vec![0.6, 0.3, 0.1]).unwrap();
        assert_eq!(
            check_decoy_condition(&x, &y),
            Err(SourceError::UndefinedRatio(1))
        );
        let short = PhotonSource::<f64>::coherent(0.1, 7).unwrap();
        let long = PhotonSource::<f64>::coherent(0.4, 12).unwrap();
        assert_eq!(
            check_decoy_condition(&short, &long),
            Err(SourceError::KMaxMismatch(7, 12))
        );
    }

    #[test]
    fn triple_rejects_swapped_intensities() {
        let weak = PhotonSource::<f64>::coherent(0.1, 12).unwrap();
        let strong = PhotonSource::<f64>::coherent(0.4, 12).unwrap();
        assert!(SourceTriple::new(weak.clone(), strong.clone()).is_ok());
        assert_eq!(
            SourceTriple::new(strong, weak).unwrap_err(),
            SourceError::DecoyConditionViolated(1)
        );
        let same = PhotonSource::<f64>::coherent(0.2, 12).unwrap();
        assert!(matches!(
            SourceTriple::new(same.clone(), same),
            Err(SourceError::IntensityOrder { .. })
        ));
    }

    #[test]
    fn single_precision_sources() {
        let s = PhotonSource::<f32>::coherent(0.1, 12).unwrap();
        assert!((s.probs[1] - 0.0904837f32).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn coherent_pairs_satisfy_condition(mu in 1e-3f64..0.8, gap in 1e-3f64..0.8, k_max in 2usize..30) {
            let x = PhotonSource::coherent_with_tolerance(mu, k_max, 1.0).unwrap();
            let y = PhotonSource::coherent_with_tolerance(mu + gap, k_max, 1.0).unwrap();
            prop_assert!(check_decoy_condition(&x, &y).unwrap().holds);
        }

        #[test]
        fn thermal_pairs_satisfy_condition(mu in 1e-3f64..0.8, gap in 1e-3f64..0.8, k_max in 2usize..30) {
            let x = PhotonSource::thermal_with_tolerance(mu, k_max, 1.0).unwrap();
            let y = PhotonSource::thermal_with_tolerance(mu + gap, k_max, 1.0).unwrap();
            prop_assert!(check_decoy_condition(&x, &y).unwrap().holds);
        }

        #[test]
        fn mass_is_accounted(mu in 0.0f64..2.0, thermal in any::<bool>()) {
            let s = if thermal {
                PhotonSource::thermal_with_tolerance(mu, 20, 1.0).unwrap()
            } else {
                PhotonSource::coherent_with_tolerance(mu, 20, 1.0).unwrap()
            };
            let total: f64 = s.probs.iter().sum::<f64>() + s.truncation_tail;
            prop_assert!((total - 1.0).abs() <= 1e-12);
        }
    }
}
