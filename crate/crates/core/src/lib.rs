//! Decoy-state key-rate analysis for measurement-device-independent QKD
//! with imperfect, basis-dependent state preparation.
//!
//! The library is generic over the floating-point type through [`Scalar`];
//! the aliases below fix it to `f64` (or `f32` where noted).
//!
//! ```
//! use mdk_core::{analyze, build_channel, CodingErrorModel, PipelineOptions, SourcePair};
//!
//! let channel = build_channel(0.1, 0.1, 1e-6, 0.01, 12).unwrap();
//! let sources = SourcePair::coherent(0.1, 0.4, 12).unwrap();
//! let coding = CodingErrorModel::uniform(0.01);
//! let analysis = analyze(&channel, &sources, &coding, &PipelineOptions::default()).unwrap();
//! assert!(analysis.report.rate > 0.0);
//! ```

pub mod channelsim;
pub mod decoybounds;
pub mod keyrate;
pub mod photonsrc;
pub mod pipeline;
pub mod qubitstate;
pub mod scalar;

pub use channelsim::{
    apply_bit_flips, build_channel, combined_flip, run_monte_carlo, shard_seed,
    synthesize_observables, Channel, ChannelError, MonteCarloRun, SimRunConfig, SHARD_PAIRS,
};
pub use decoybounds::{
    e11x_upper_bound, s11_equal_bases, s11_lower_bound, vacuum_corrections, worst_case_bound,
    Basis, BoundError, Branch, Corner, E11Bound, FluctuationSpec, Observables, S11Bound, Table3,
    WorstCase, DEFAULT_N_SIGMA, MAX_REL_DEVIATION,
};
pub use keyrate::{
    binary_entropy, keyrate_basis_error, keyrate_decoy, keyrate_single_basis_decoy,
    keyrate_single_photon_source, optimize_intensities, GridPoint, IntensityGrid, KeyRateError,
    KeyRateInputs, KeyRateReport, OptimizeOutcome, RateComponents, SingleBasisReading,
    SourceFamily, ZeroReason,
};
pub use photonsrc::{
    check_decoy_condition, DecoyCheck, PhotonSource, SourceError, SourceKind, SourcePair,
    SourceTriple,
};
pub use pipeline::{
    analyze, analyze_observables, prepare_observables, restrict_to_single_basis,
    x_flip_probabilities, Analysis, Fluctuation, PipelineError, PipelineOptions, DEFAULT_F_EC,
};
pub use qubitstate::{
    actual_state, complement_state, decompose_toward, delta_flip, delta_phase_randomized,
    flip_mixture, ideal_fraction, ideal_fraction_flip_expanded,
    ideal_fraction_phase_randomized_expanded, outlier_adjust, two_pulse_delta, BasisDeltas, Bit,
    CodingErrorModel, Complement, Decomposition, DeltaReport, DensityMatrix, PreparationMode,
    QubitError,
};
pub use scalar::Scalar;

pub type PhotonNumberSource = PhotonSource<f64>;
pub type SourceTripleF64 = SourceTriple<f64>;
pub type SourcePairF64 = SourcePair<f64>;
pub type DensityMatrix2 = DensityMatrix<f64>;
pub type CodingErrors = CodingErrorModel<f64>;
pub type Deltas = DeltaReport<f64>;
pub type TwoPulseObservables = Observables<f64>;
pub type S11BoundF64 = S11Bound<f64>;
pub type Fluctuations = FluctuationSpec<f64>;
pub type GroundTruthChannel = Channel<f64>;
pub type KeyRateInputsF64 = KeyRateInputs<f64>;
pub type RateReport = KeyRateReport<f64>;
pub type AnalysisF64 = Analysis<f64>;
pub type Options = PipelineOptions<f64>;

pub type PhotonNumberSourceF32 = PhotonSource<f32>;
pub type TwoPulseObservablesF32 = Observables<f32>;
pub type RateReportF32 = KeyRateReport<f32>;
