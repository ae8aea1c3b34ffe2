//! End-to-end composition: observables to bounds to key rate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channelsim::{apply_bit_flips, synthesize_observables, Channel, ChannelError};
use crate::decoybounds::{
    e11x_upper_bound, s11_equal_bases, s11_lower_bound, worst_case_bound, Basis, BoundError,
    Corner, E11Bound, FluctuationSpec, Observables, S11Bound,
};
use crate::keyrate::{
    keyrate_basis_error, keyrate_decoy, keyrate_single_basis_decoy, KeyRateError, KeyRateInputs,
    KeyRateReport, SingleBasisReading, ZeroReason,
};
use crate::photonsrc::{SourceKind, SourcePair};
use crate::qubitstate::{CodingErrorModel, DeltaReport, PreparationMode, QubitError};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    KeyRate(#[from] KeyRateError),
    #[error(transparent)]
    Coding(#[from] QubitError),
}

/// How statistical fluctuations of the observed yields are accounted for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Fluctuation<T> {
    /// Observed yields are taken as exact.
    #[default]
    None,
    /// Fixed relative bound per cell.
    Fixed(FluctuationSpec<T>),
    /// Bounds derived from the pulse counts of each basis.
    FromCounts { n_sigma: T },
}

impl<T: Scalar> Fluctuation<T> {
    fn spec_for(&self, obs: &Observables<T>) -> Option<FluctuationSpec<T>> {
        match *self {
            Fluctuation::None => None,
            Fluctuation::Fixed(spec) => Some(spec),
            Fluctuation::FromCounts { n_sigma } => Some(FluctuationSpec::from_counts(obs, n_sigma)),
        }
    }
}

/// Default error-correction inefficiency.
pub const DEFAULT_F_EC: f64 = 1.16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions<T> {
    pub mode: PreparationMode,
    pub f_ec: T,
    pub single_basis_decoy: bool,
    pub reading: SingleBasisReading,
    pub fluctuation: Fluctuation<T>,
}

impl<T: Scalar> Default for PipelineOptions<T> {
    fn default() -> Self {
        Self {
            mode: PreparationMode::FlipMixture,
            f_ec: T::lit(DEFAULT_F_EC),
            single_basis_decoy: false,
            reading: SingleBasisReading::IdealFraction,
            fluctuation: Fluctuation::None,
        }
    }
}

/// Deliberate flip probabilities `(alice, bob)` applied to X-basis bit values.
/// Only the flip-mixture preparation flips; angles whose `tan` reaches 1/2
/// admit no such mixture and are left unflipped (their rate is zero anyway).
pub fn x_flip_probabilities<T: Scalar>(
    coding: &CodingErrorModel<T>,
    mode: PreparationMode,
) -> (T, T) {
    match mode {
        PreparationMode::FlipMixture => {
            let p = |theta| CodingErrorModel::flip_probability(theta).unwrap_or(T::zero());
            (p(coding.theta_ax), p(coding.theta_bx))
        }
        PreparationMode::PhaseRandomized => (T::zero(), T::zero()),
    }
}

/// Removes the signal rows and columns, which a single-basis decoy run never
/// sends in X.
pub fn restrict_to_single_basis<T: Scalar>(obs: &Observables<T>) -> Observables<T> {
    let mut out = obs.clone();
    for a in SourceKind::ALL {
        for b in SourceKind::ALL {
            if a == SourceKind::Signal || b == SourceKind::Signal {
                out.present[a.index()][b.index()] = false;
                out.yields[a.index()][b.index()] = T::zero();
                out.errors[a.index()][b.index()] = T::zero();
                if let Some(c) = out.counts.as_mut() {
                    c[a.index()][b.index()] = 0;
                }
            }
        }
    }
    out
}

/// Exact observables as the protocol would record them: deliberate flips
/// raise the X-basis errors, and single-basis runs drop the X signal cells.
pub fn prepare_observables<T: Scalar>(
    channel: &Channel<T>,
    sources: &SourcePair<T>,
    coding: &CodingErrorModel<T>,
    options: &PipelineOptions<T>,
) -> Result<(Observables<T>, Observables<T>), PipelineError> {
    let z = synthesize_observables(channel, sources, Basis::Z)?;
    let x = synthesize_observables(channel, sources, Basis::X)?;
    let (pa, pb) = x_flip_probabilities(coding, options.mode);
    let mut x = apply_bit_flips(&x, pa, pb);
    if options.single_basis_decoy {
        x = restrict_to_single_basis(&x);
    }
    Ok((z, x))
}

/// Every intermediate quantity of one key-rate evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis<T> {
    pub s11_z: S11Bound<T>,
    /// Minimizing corner when the fluctuation box was searched.
    pub worst_case_corner: Option<Corner>,
    pub s11_x: T,
    /// Absent when `s11_x` is not positive.
    pub e11_x: Option<E11Bound<T>>,
    pub deltas: DeltaReport<T>,
    pub report: KeyRateReport<T>,
    /// Same bounds run through the formula that ignores coding errors.
    pub baseline: KeyRateReport<T>,
}

fn bound_with_fluctuation<T: Scalar>(
    obs: &Observables<T>,
    sources: &SourcePair<T>,
    fluctuation: &Fluctuation<T>,
) -> Result<(S11Bound<T>, Option<Corner>), BoundError> {
    match fluctuation.spec_for(obs) {
        None => Ok((s11_lower_bound(obs, sources)?, None)),
        Some(spec) => {
            let wc = worst_case_bound(obs, sources, &spec)?;
            Ok((wc.bound, Some(wc.corner)))
        }
    }
}

/// Runs the decoy bounds and the applicable key-rate formula on recorded data.
pub fn analyze_observables<T: Scalar>(
    obs_z: &Observables<T>,
    obs_x: &Observables<T>,
    sources: &SourcePair<T>,
    coding: &CodingErrorModel<T>,
    options: &PipelineOptions<T>,
) -> Result<Analysis<T>, PipelineError> {
    coding.validate()?;
    if obs_z.basis != Basis::Z {
        return Err(BoundError::WrongBasis {
            expected: Basis::Z,
            got: obs_z.basis,
        }
        .into());
    }
    let (s11_z, worst_case_corner) = bound_with_fluctuation(obs_z, sources, &options.fluctuation)?;
    let s11_x = if options.single_basis_decoy {
        s11_equal_bases(s11_z.value)
    } else {
        bound_with_fluctuation(obs_x, sources, &options.fluctuation)?
            .0
            .value
    };
    let e11_x = if s11_x > T::zero() {
        Some(e11x_upper_bound(obs_x, s11_x, sources)?)
    } else {
        None
    };

    let deltas = DeltaReport::compute(coding, options.mode);
    let inputs = KeyRateInputs {
        s11_z: s11_z.value,
        e11_x: e11_x.map_or(T::half(), |e| e.value),
        signal_yield: obs_z.s(SourceKind::Signal, SourceKind::Signal),
        signal_error: obs_z.e(SourceKind::Signal, SourceKind::Signal),
        delta_report: deltas,
        f_ec: options.f_ec,
        single_basis_decoy: options.single_basis_decoy,
    };
    let mut report = if options.single_basis_decoy {
        keyrate_single_basis_decoy(&inputs, sources, options.reading)?
    } else {
        keyrate_basis_error(&inputs, sources)?
    };
    let mut baseline = keyrate_decoy(&inputs, sources)?;
    if e11_x.is_none() {
        for r in [&mut report, &mut baseline] {
            r.rate = T::zero();
            r.zeroed_reason = Some(ZeroReason::ZeroSingleYield);
        }
    }
    Ok(Analysis {
        s11_z,
        worst_case_corner,
        s11_x,
        e11_x,
        deltas,
        report,
        baseline,
    })
}

/// Synthesizes exact observables from `channel` and analyzes them.
pub fn analyze<T: Scalar>(
    channel: &Channel<T>,
    sources: &SourcePair<T>,
    coding: &CodingErrorModel<T>,
    options: &PipelineOptions<T>,
) -> Result<Analysis<T>, PipelineError> {
    let (z, x) = prepare_observables(channel, sources, coding, options)?;
    analyze_observables(&z, &x, sources, coding, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channelsim::build_channel;

    fn setup() -> (Channel<f64>, SourcePair<f64>) {
        (
            build_channel(0.1, 0.1, 1e-6, 0.01, 12).unwrap(),
            SourcePair::coherent(0.1, 0.4, 12).unwrap(),
        )
    }

    #[test]
    fn ideal_pipeline_is_positive_and_matches_baseline() {
        let (ch, src) = setup();
        let a = analyze(
            &ch,
            &src,
            &CodingErrorModel::ideal(),
            &PipelineOptions::default(),
        )
        .unwrap();
        assert!(a.report.rate > 0.0);
        assert_eq!(a.report, a.baseline);
        assert!(a.worst_case_corner.is_none());
    }

    #[test]
    fn single_basis_drops_signal_cells() {
        let (ch, src) = setup();
        let opts = PipelineOptions {
            single_basis_decoy: true,
            ..PipelineOptions::default()
        };
        let (_, x) = prepare_observables(&ch, &src, &CodingErrorModel::ideal(), &opts).unwrap();
        assert!(!x.is_present(SourceKind::Signal, SourceKind::Decoy));
        assert!(x.is_present(SourceKind::Decoy, SourceKind::Decoy));
        let a = analyze(&ch, &src, &CodingErrorModel::ideal(), &opts).unwrap();
        assert_eq!(a.s11_x, a.s11_z.value);
        assert!(a.report.rate > 0.0);
    }

    #[test]
    fn fluctuation_uses_worst_case() {
        let (ch, src) = setup();
        let base = analyze(
            &ch,
            &src,
            &CodingErrorModel::ideal(),
            &PipelineOptions::default(),
        )
        .unwrap();
        let opts = PipelineOptions {
            fluctuation: Fluctuation::Fixed(FluctuationSpec::uniform(0.01).unwrap()),
            ..PipelineOptions::default()
        };
        let a = analyze(&ch, &src, &CodingErrorModel::ideal(), &opts).unwrap();
        assert!(a.worst_case_corner.is_some());
        assert!(a.s11_z.value < base.s11_z.value);
        assert!(a.report.rate < base.report.rate);
    }

    #[test]
    fn flips_raise_only_x_errors() {
        let (ch, src) = setup();
        let coding = CodingErrorModel::uniform(0.01);
        let (z, x) = prepare_observables(&ch, &src, &coding, &PipelineOptions::default()).unwrap();
        let (z0, x0) = prepare_observables(
            &ch,
            &src,
            &CodingErrorModel::ideal(),
            &PipelineOptions::default(),
        )
        .unwrap();
        assert_eq!(z, z0);
        assert!(
            x.e(SourceKind::Signal, SourceKind::Signal)
                > x0.e(SourceKind::Signal, SourceKind::Signal)
        );
    }
}
