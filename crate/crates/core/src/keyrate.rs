//! Binary entropy, secret-key-rate formulas and intensity optimization.
//!
//! Every rate is expressed per emitted signal pair `y_A y_B`. The
//! basis-error formulas are naturally written per post-selected signal bit;
//! they are multiplied back by `S_yy` so that all variants share one unit and
//! reduce exactly to [`keyrate_decoy`] for perfect preparation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channelsim::Channel;
use crate::photonsrc::{PhotonSource, SourceError, SourcePair, SourceTriple};
use crate::pipeline::{analyze, PipelineOptions};
use crate::qubitstate::{CodingErrorModel, DeltaReport, PreparationMode};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KeyRateError {
    #[error("binary entropy argument {0} is outside [0, 1]")]
    EntropyDomain(f64),
    #[error("{name} = {value} is outside its allowed range")]
    InvalidInput { name: &'static str, value: f64 },
    #[error("intensity grid has no point with mu_x < mu_y")]
    EmptyGrid,
}

/// `H(e) = -e log2 e - (1 - e) log2 (1 - e)`, with `H(0) = H(1) = 0`.
pub fn binary_entropy<T: Scalar>(e: T) -> Result<T, KeyRateError> {
    if !(e >= T::zero() && e <= T::one()) {
        return Err(KeyRateError::EntropyDomain(e.to_f64().unwrap_or(f64::NAN)));
    }
    let term = |p: T| {
        if p > T::zero() {
            -p * p.log2()
        } else {
            T::zero()
        }
    };
    Ok(term(e) + term(T::one() - e))
}

/// Why a rate was forced to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroReason {
    NegativeDelta,
    PhaseFlipHalf,
    NegativeRate,
    ZeroSingleYield,
}

impl ZeroReason {
    pub fn name(self) -> &'static str {
        match self {
            ZeroReason::NegativeDelta => "negative_delta",
            ZeroReason::PhaseFlipHalf => "phase_flip_half",
            ZeroReason::NegativeRate => "negative_rate",
            ZeroReason::ZeroSingleYield => "zero_single_yield",
        }
    }
}

/// Inputs shared by the two-pulse key-rate variants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRateInputs<T> {
    /// Lower bound on the Z-basis single-photon-pair yield.
    pub s11_z: T,
    /// Upper bound on the X-basis single-photon-pair error rate.
    pub e11_x: T,
    /// Observed Z-basis yield of the signal pair, `S_yy`.
    pub signal_yield: T,
    /// Observed Z-basis error rate of the signal pair, `E_yy`.
    pub signal_error: T,
    pub delta_report: DeltaReport<T>,
    /// Error-correction inefficiency `f`.
    pub f_ec: T,
    pub single_basis_decoy: bool,
}

impl<T: Scalar> KeyRateInputs<T> {
    pub fn validate(&self) -> Result<(), KeyRateError> {
        let unit = |name, v: T| {
            if v >= T::zero() && v <= T::one() {
                Ok(())
            } else {
                Err(KeyRateError::InvalidInput {
                    name,
                    value: v.to_f64().unwrap_or(f64::NAN),
                })
            }
        };
        unit("s11_z", self.s11_z)?;
        unit("e11_x", self.e11_x)?;
        unit("signal_yield", self.signal_yield)?;
        unit("signal_error", self.signal_error)?;
        check_f_ec(self.f_ec)
    }
}

fn check_f_ec<T: Scalar>(f_ec: T) -> Result<(), KeyRateError> {
    if f_ec >= T::one() && f_ec <= T::two() {
        Ok(())
    } else {
        Err(KeyRateError::InvalidInput {
            name: "f_ec",
            value: f_ec.to_f64().unwrap_or(f64::NAN),
        })
    }
}

/// Itemized terms of a rate evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateComponents<T> {
    /// Privacy-amplified single-photon term.
    pub gain: T,
    /// Error-correction leakage.
    pub cost: T,
    pub frac_z: T,
    pub frac_x: T,
    /// Phase-flip estimate before clamping at 1/2.
    pub phase_flip_raw: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRateReport<T> {
    pub rate: T,
    /// Phase-flip rate fed to the entropy, at most 1/2.
    pub phase_flip_used: T,
    /// Share of signal-pair detections certified as single-photon pairs.
    pub delta11_z: T,
    pub components: RateComponents<T>,
    pub zeroed_reason: Option<ZeroReason>,
}

fn signal_single_weight<T: Scalar>(sources: &SourcePair<T>) -> T {
    sources.alice.signal.p(1) * sources.bob.signal.p(1)
}

/// Shared tail of every formula:
/// `frac_z * weight * (1 - H(min(phase, 1/2))) - f * leak_scale * H(e_detected)`.
#[allow(clippy::too_many_arguments)]
fn assemble<T: Scalar>(
    weight: T,
    s11: T,
    frac_z: T,
    frac_x: T,
    phase_raw: T,
    leak_scale: T,
    detected_error: T,
    f_ec: T,
    delta11: T,
) -> Result<KeyRateReport<T>, KeyRateError> {
    let phase = phase_raw.min(T::half());
    let cost = f_ec * leak_scale * binary_entropy(detected_error)?;
    let components = |gain| RateComponents {
        gain,
        cost,
        frac_z,
        frac_x,
        phase_flip_raw: phase_raw,
    };
    let zero = |reason, gain| KeyRateReport {
        rate: T::zero(),
        phase_flip_used: phase,
        delta11_z: delta11,
        components: components(gain),
        zeroed_reason: Some(reason),
    };
    if !(s11 > T::zero()) {
        return Ok(zero(ZeroReason::ZeroSingleYield, T::zero()));
    }
    if !(frac_z > T::zero() && frac_x > T::zero()) {
        return Ok(zero(ZeroReason::NegativeDelta, T::zero()));
    }
    let gain = frac_z * weight * s11 * (T::one() - binary_entropy(phase)?);
    let raw = gain - cost;
    if raw > T::zero() {
        Ok(KeyRateReport {
            rate: raw,
            phase_flip_used: phase,
            delta11_z: delta11,
            components: components(gain),
            zeroed_reason: None,
        })
    } else if phase_raw >= T::half() {
        Ok(zero(ZeroReason::PhaseFlipHalf, gain))
    } else {
        Ok(zero(ZeroReason::NegativeRate, gain))
    }
}

fn delta11<T: Scalar>(weight: T, s11: T, signal_yield: T) -> T {
    if signal_yield > T::zero() {
        weight * s11 / signal_yield
    } else {
        T::zero()
    }
}

/// Baseline rate without coding errors:
/// `a1' b1' s11 (1 - H(e11)) - f S_yy H(E_yy)`.
pub fn keyrate_decoy<T: Scalar>(
    inputs: &KeyRateInputs<T>,
    sources: &SourcePair<T>,
) -> Result<KeyRateReport<T>, KeyRateError> {
    inputs.validate()?;
    let w = signal_single_weight(sources);
    assemble(
        w,
        inputs.s11_z,
        T::one(),
        T::one(),
        inputs.e11_x,
        inputs.signal_yield,
        inputs.signal_error,
        inputs.f_ec,
        delta11(w, inputs.s11_z, inputs.signal_yield),
    )
}

/// Rate with basis-dependent coding errors, decoy data in both bases:
/// `S_yy [frac_z D11 (1 - H(e11 / frac_x)) - f H(E_yy)]`.
pub fn keyrate_basis_error<T: Scalar>(
    inputs: &KeyRateInputs<T>,
    sources: &SourcePair<T>,
) -> Result<KeyRateReport<T>, KeyRateError> {
    inputs.validate()?;
    let d = &inputs.delta_report;
    let w = signal_single_weight(sources);
    let phase = if d.frac_x > T::zero() {
        inputs.e11_x / d.frac_x
    } else {
        T::half()
    };
    assemble(
        w,
        inputs.s11_z,
        d.frac_z,
        d.frac_x,
        phase,
        inputs.signal_yield,
        inputs.signal_error,
        inputs.f_ec,
        delta11(w, inputs.s11_z, inputs.signal_yield),
    )
}

/// How the Z-side factor of the single-basis phase-flip divisor is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SingleBasisReading {
    /// Post-selected ideal fraction of the two-pulse Z weight (outlier discount included).
    #[default]
    IdealFraction,
    /// Plain two-pulse Z weight.
    PlainProduct,
}

/// Rate when decoy intensities are used only in Z. The X-basis yield of the
/// ideal sub-source is inferred from Z, which inflates the phase-flip
/// estimate to `e11 / (zfactor * frac_x)`.
pub fn keyrate_single_basis_decoy<T: Scalar>(
    inputs: &KeyRateInputs<T>,
    sources: &SourcePair<T>,
    reading: SingleBasisReading,
) -> Result<KeyRateReport<T>, KeyRateError> {
    inputs.validate()?;
    let d = &inputs.delta_report;
    let z_factor = match reading {
        SingleBasisReading::IdealFraction => d.frac_z,
        SingleBasisReading::PlainProduct => d.delta2_z,
    };
    let divisor = z_factor * d.frac_x;
    let w = signal_single_weight(sources);
    let phase = if divisor > T::zero() {
        inputs.e11_x / divisor
    } else {
        T::half()
    };
    assemble(
        w,
        inputs.s11_z,
        d.frac_z,
        d.frac_x,
        phase,
        inputs.signal_yield,
        inputs.signal_error,
        inputs.f_ec,
        delta11(w, inputs.s11_z, inputs.signal_yield),
    )
}

/// One-way link where only Alice prepares states:
/// `frac_z D1 (1 - H(E_x / (frac_x D1))) - f H(E)`.
pub fn keyrate_single_photon_source<T: Scalar>(
    e_x: T,
    detected_e: T,
    delta1: T,
    coding: &CodingErrorModel<T>,
    mode: PreparationMode,
    f_ec: T,
) -> Result<KeyRateReport<T>, KeyRateError> {
    if !(delta1 > T::zero() && delta1 <= T::one()) {
        return Err(KeyRateError::InvalidInput {
            name: "delta1",
            value: delta1.to_f64().unwrap_or(f64::NAN),
        });
    }
    check_f_ec(f_ec)?;
    let d = DeltaReport::single_sided(coding, mode);
    let phase = if d.frac_x > T::zero() {
        e_x / (d.frac_x * delta1)
    } else {
        T::half()
    };
    if !(e_x >= T::zero() && e_x <= T::one()) {
        return Err(KeyRateError::InvalidInput {
            name: "e_x",
            value: e_x.to_f64().unwrap_or(f64::NAN),
        });
    }
    assemble(
        T::one(),
        delta1,
        d.frac_z,
        d.frac_x,
        phase,
        T::one(),
        detected_e,
        f_ec,
        delta1,
    )
}

/// Which photon statistics the optimizer instantiates at each grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SourceFamily {
    #[default]
    Coherent,
    Thermal,
}

impl SourceFamily {
    pub fn source<T: Scalar>(self, mu: T, k_max: usize) -> Result<PhotonSource<T>, SourceError> {
        match self {
            SourceFamily::Coherent => PhotonSource::coherent(mu, k_max),
            SourceFamily::Thermal => PhotonSource::thermal(mu, k_max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityGrid<T> {
    pub mu_x: Vec<T>,
    pub mu_y: Vec<T>,
}

impl<T: Scalar> IntensityGrid<T> {
    /// `steps` evenly spaced values from `start` to `stop` inclusive.
    pub fn linspace(start: T, stop: T, steps: usize) -> Vec<T> {
        match steps {
            0 => Vec::new(),
            1 => vec![start],
            _ => {
                let span = (stop - start) / T::from_usize(steps - 1).unwrap();
                (0..steps)
                    .map(|i| start + span * T::from_usize(i).unwrap())
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint<T> {
    pub mu_x: T,
    pub mu_y: T,
    /// `None` when the point could not be evaluated; see `error`.
    pub report: Option<KeyRateReport<T>>,
    pub error: Option<String>,
}

impl<T: Scalar> GridPoint<T> {
    pub fn rate(&self) -> T {
        self.report.map_or(T::zero(), |r| r.rate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOutcome<T> {
    pub best: GridPoint<T>,
    /// Every evaluated point with `mu_x < mu_y`, in grid order.
    pub points: Vec<GridPoint<T>>,
}

/// Exhaustive search over `mu_x x mu_y` (pairs with `mu_x >= mu_y` skipped),
/// maximizing the pipeline rate. Ties go to the smaller `mu_y`, then the
/// smaller `mu_x`. Points are evaluated in parallel; the result does not
/// depend on scheduling.
pub fn optimize_intensities<T: Scalar>(
    channel: &Channel<T>,
    coding: &CodingErrorModel<T>,
    grid: &IntensityGrid<T>,
    family: SourceFamily,
    k_max: usize,
    options: &PipelineOptions<T>,
) -> Result<OptimizeOutcome<T>, KeyRateError> {
    let pairs: Vec<(T, T)> = grid
        .mu_x
        .iter()
        .flat_map(|&x| grid.mu_y.iter().map(move |&y| (x, y)))
        .filter(|(x, y)| x < y)
        .collect();
    if pairs.is_empty() {
        return Err(KeyRateError::EmptyGrid);
    }
    let points: Vec<GridPoint<T>> = pairs
        .par_iter()
        .map(|&(mu_x, mu_y)| {
            let evaluated = family
                .source(mu_x, k_max)
                .and_then(|x| Ok((x, family.source(mu_y, k_max)?)))
                .and_then(|(x, y)| SourceTriple::new(x, y))
                .map_err(|e| e.to_string())
                .and_then(|triple| {
                    analyze(channel, &SourcePair::symmetric(triple), coding, options)
                        .map_err(|e| e.to_string())
                });
            match evaluated {
                Ok(analysis) => GridPoint {
                    mu_x,
                    mu_y,
                    report: Some(analysis.report),
                    error: None,
                },
                Err(error) => GridPoint {
                    mu_x,
                    mu_y,
                    report: None,
                    error: Some(error),
                },
            }
        })
        .collect();

    let mut best = &points[0];
    for p in &points[1..] {
        let (r, rb) = (p.rate(), best.rate());
        let better = r > rb
            || (r == rb && (p.mu_y < best.mu_y || (p.mu_y == best.mu_y && p.mu_x < best.mu_x)));
        if better {
            best = p;
        }
    }
    Ok(OptimizeOutcome {
        best: best.clone(),
        points,
    })
}
