//! Single-qubit density operators and the convex decompositions that certify
//! how much of an imperfectly prepared BB84 source behaves like an ideal one.
//!
//! Every state is written in the coordinates of its own coding basis: `|0>`
//! and `|1>` are the two intended basis states of whichever basis (Z or X) is
//! being prepared.

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QubitError {
    #[error("matrix is not Hermitian (off by {0:e})")]
    NotHermitian(f64),
    #[error("trace is {0}, expected 1")]
    BadTrace(f64),
    #[error("matrix has negative eigenvalue {0:e}")]
    NotPositive(f64),
    #[error("target state is not pure (determinant {0:e})")]
    NotPure(f64),
    #[error("probability {0} is outside [0, 1]")]
    InvalidProbability(f64),
    #[error("{name} = {value} is outside its allowed range")]
    OutOfRange { name: &'static str, value: f64 },
}

/// Bit value carried by a prepared qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Bit {
    Zero,
    One,
}

impl Bit {
    pub fn flipped(self) -> Bit {
        match self {
            Bit::Zero => Bit::One,
            Bit::One => Bit::Zero,
        }
    }
}

/// 2x2 Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix<T> {
    m: [[Complex<T>; 2]; 2],
}

impl<T: Scalar> DensityMatrix<T> {
    /// Validates Hermiticity, trace and positivity at [`Scalar::matrix_tolerance`].
    pub fn new(entries: [[Complex<T>; 2]; 2]) -> Result<Self, QubitError> {
        let rho = Self { m: entries };
        rho.validate(T::matrix_tolerance())?;
        Ok(rho)
    }

    pub(crate) fn from_unchecked(entries: [[Complex<T>; 2]; 2]) -> Self {
        Self { m: entries }
    }

    pub fn diagonal(p0: T, p1: T) -> Result<Self, QubitError> {
        let z = Complex::new(T::zero(), T::zero());
        Self::new([
            [Complex::new(p0, T::zero()), z],
            [z, Complex::new(p1, T::zero())],
        ])
    }

    /// `|psi><psi|` for the normalized form of the given amplitudes.
    pub fn pure(amplitudes: [Complex<T>; 2]) -> Self {
        let norm = (amplitudes[0].norm_sqr() + amplitudes[1].norm_sqr()).sqrt();
        let a = [amplitudes[0] / norm, amplitudes[1] / norm];
        let mut m = [[Complex::new(T::zero(), T::zero()); 2]; 2];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i] * a[j].conj();
            }
        }
        // exact Hermitian diagonal
        m[0][0] = Complex::new(m[0][0].re, T::zero());
        m[1][1] = Complex::new(m[1][1].re, T::zero());
        m[1][0] = m[0][1].conj();
        Self { m }
    }

    /// Projector onto basis state `|bit>`.
    pub fn basis(bit: Bit) -> Self {
        match bit {
            Bit::Zero => Self::diagonal(T::one(), T::zero()).unwrap(),
            Bit::One => Self::diagonal(T::zero(), T::one()).unwrap(),
        }
    }

    /// The maximally mixed state `I/2`.
    pub fn maximally_mixed() -> Self {
        Self::diagonal(T::half(), T::half()).unwrap()
    }

    pub fn entries(&self) -> &[[Complex<T>; 2]; 2] {
        &self.m
    }

    pub fn get(&self, row: usize, col: usize) -> Complex<T> {
        self.m[row][col]
    }

    pub fn trace(&self) -> T {
        self.m[0][0].re + self.m[1][1].re
    }

    /// Determinant, treating the matrix as Hermitian.
    pub fn det(&self) -> T {
        self.m[0][0].re * self.m[1][1].re - self.m[0][1].norm_sqr()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> (T, T) {
        let a = self.m[0][0].re;
        let c = self.m[1][1].re;
        let half_gap = (((a - c) * T::half()).powi(2) + self.m[0][1].norm_sqr()).sqrt();
        let mid = (a + c) * T::half();
        (mid - half_gap, mid + half_gap)
    }

    /// `Re tr(self * other)`.
    pub fn overlap(&self, other: &Self) -> T {
        let mut acc = T::zero();
        for i in 0..2 {
            for j in 0..2 {
                acc = acc + (self.m[i][j] * other.m[j][i]).re;
            }
        }
        acc
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        let mut worst = T::zero();
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((self.m[i][j] - other.m[i][j]).norm());
            }
        }
        worst
    }

    pub fn validate(&self, tol: T) -> Result<(), QubitError> {
        let herm = (self.m[0][1] - self.m[1][0].conj())
            .norm()
            .max(self.m[0][0].im.abs())
            .max(self.m[1][1].im.abs());
        if herm > tol {
            return Err(QubitError::NotHermitian(to_f64(herm)));
        }
        if (self.trace() - T::one()).abs() > tol {
            return Err(QubitError::BadTrace(to_f64(self.trace())));
        }
        let (low, _) = self.eigenvalues();
        if low < -tol {
            return Err(QubitError::NotPositive(to_f64(low)));
        }
        Ok(())
    }

    fn combine(a: &Self, wa: T, b: &Self, wb: T) -> [[Complex<T>; 2]; 2] {
        let mut m = a.m;
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] = a.m[i][j] * wa + b.m[i][j] * wb;
            }
        }
        m
    }
}

fn to_f64<T: Scalar>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// State actually emitted when `bit` is intended:
/// `cos(theta)|b> + e^{i delta} sin(theta)|not b>`.
pub fn actual_state<T: Scalar>(theta: T, delta_phase: T, bit: Bit) -> DensityMatrix<T> {
    let main = Complex::new(theta.cos(), T::zero());
    let leak = Complex::from_polar(theta.sin(), delta_phase);
    match bit {
        Bit::Zero => DensityMatrix::pure([main, leak]),
        Bit::One => DensityMatrix::pure([leak, main]),
    }
}

/// `(1 - p) * intended + p * wrong`: the state sent when the intended state is
/// deliberately replaced by the opposite-bit state with probability `p`.
pub fn flip_mixture<T: Scalar>(
    intended: &DensityMatrix<T>,
    wrong: &DensityMatrix<T>,
    p: T,
) -> Result<DensityMatrix<T>, QubitError> {
    if !(p >= T::zero() && p <= T::one()) {
        return Err(QubitError::InvalidProbability(to_f64(p)));
    }
    Ok(DensityMatrix::from_unchecked(DensityMatrix::combine(
        intended,
        T::one() - p,
        wrong,
        p,
    )))
}

/// `rho = delta * target + (1 - delta) * residual` with the largest feasible `delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition<T> {
    pub delta: T,
    /// `None` when `rho` equals the target.
    pub residual: Option<DensityMatrix<T>>,
}

/// Largest weight of the pure state `target` that can be split off `rho`
/// while leaving a positive semidefinite remainder.
///
/// For a 2x2 state and `P = |psi><psi|`,
/// `det(rho - d P) = det(rho) - d <psi_perp|rho|psi_perp>`, so the maximum is
/// `det(rho) / (1 - tr(rho P))`.
pub fn decompose_toward<T: Scalar>(
    rho: &DensityMatrix<T>,
    target: &DensityMatrix<T>,
) -> Result<Decomposition<T>, QubitError> {
    let tol = T::matrix_tolerance();
    target.validate(tol)?;
    if target.det().abs() > tol {
        return Err(QubitError::NotPure(to_f64(target.det())));
    }
    let orthogonal_weight = T::one() - rho.overlap(target);
    let delta = if orthogonal_weight <= tol {
        T::one()
    } else {
        (rho.det().max(T::zero()) / orthogonal_weight)
            .min(T::one())
            .max(T::zero())
    };
    let remaining = T::one() - delta;
    if remaining <= tol {
        return Ok(Decomposition {
            delta: T::one(),
            residual: None,
        });
    }
    let mut m = DensityMatrix::combine(rho, T::one() / remaining, target, -delta / remaining);
    m[0][0] = Complex::new(m[0][0].re, T::zero());
    m[1][1] = Complex::new(m[1][1].re, T::zero());
    let off = (m[0][1] + m[1][0].conj()) * T::half();
    m[0][1] = off;
    m[1][0] = off.conj();
    Ok(Decomposition {
        delta,
        residual: Some(DensityMatrix::from_unchecked(m)),
    })
}

/// `rho_bar = I - rho`, the partner that mixes with `rho` into `I/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Complement<T> {
    pub state: DensityMatrix<T>,
    /// False when `rho_bar` fails the positivity check. Cannot happen for a
    /// valid input; kept as a diagnostic for inputs built without validation.
    pub is_positive: bool,
}

pub fn complement_state<T: Scalar>(rho: &DensityMatrix<T>) -> Complement<T> {
    let m = rho.entries();
    let one = Complex::new(T::one(), T::zero());
    let state =
        DensityMatrix::from_unchecked([[one - m[0][0], -m[0][1]], [-m[1][0], one - m[1][1]]]);
    let is_positive = state.eigenvalues().0 >= -T::matrix_tolerance();
    Complement { state, is_positive }
}

/// Ideal-state weight reachable with deliberate flips at `p = tan(theta)`:
/// `cos^2(theta) (1 - 2 tan(theta))`. Non-positive once `tan(theta) >= 1/2`.
pub fn delta_flip<T: Scalar>(theta: T) -> T {
    let c = theta.cos();
    c * c * (T::one() - T::two() * theta.tan())
}

/// Ideal-state weight in a basis with imperfect phase randomization bounded
/// by `delta_x`: `cos^2(theta) - sin(theta) sin(delta_x) / 2`.
pub fn delta_phase_randomized<T: Scalar>(theta: T, delta_x: T) -> T {
    let c = theta.cos();
    c * c - theta.sin() * delta_x.sin() * T::half()
}

/// Lower bound `d / (2 - d)` on the share of post-selected bits that come
/// from the ideal sub-source. Non-positive weights certify nothing and map to 0.
pub fn ideal_fraction<T: Scalar>(delta: T) -> T {
    let d = delta.max(T::zero());
    d / (T::two() - d)
}

/// [`ideal_fraction`] of [`delta_flip`], expanded as
/// `cos^2 (1 - 2 tan) / (sin^2 + (sin + cos)^2)`.
pub fn ideal_fraction_flip_expanded<T: Scalar>(theta: T) -> T {
    let (s, c) = theta.sin_cos();
    c * c * (T::one() - T::two() * theta.tan()) / (s * s + (s + c) * (s + c))
}

/// [`ideal_fraction`] of [`delta_phase_randomized`], expanded as
/// `(2 cos^2 - sin sin_d) / (4 - 2 cos^2 + sin sin_d)`.
pub fn ideal_fraction_phase_randomized_expanded<T: Scalar>(theta: T, delta_x: T) -> T {
    let c = theta.cos();
    let cross = theta.sin() * delta_x.sin();
    (T::two() * c * c - cross) / (T::lit(4.0) - T::two() * c * c + cross)
}

/// Weight of the two-pulse ideal sub-source, `delta_a * delta_b`, or 0 when
/// either side certifies nothing.
pub fn two_pulse_delta<T: Scalar>(delta_a: T, delta_b: T) -> T {
    if delta_a <= T::zero() || delta_b <= T::zero() {
        T::zero()
    } else {
        delta_a * delta_b
    }
}

/// Discount for a fraction `g` of pulses whose error angles exceed the threshold.
pub fn outlier_adjust<T: Scalar>(frac: T, g: T) -> T {
    (T::one() - g) / (T::one() + g) * frac
}

/// How the preparation is post-processed into a convex mixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PreparationMode {
    /// Deliberate bit flips with probability `tan(theta)` in both bases.
    #[default]
    FlipMixture,
    /// Flips in Z, (imperfect) phase randomization in X.
    PhaseRandomized,
}

/// Threshold angles and outlier fractions describing basis-dependent coding errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodingErrorModel<T> {
    pub theta_az: T,
    pub theta_ax: T,
    pub theta_bz: T,
    pub theta_bx: T,
    pub g_z: T,
    pub g_x: T,
    /// Bound on the phase error of the randomizing operation.
    pub delta_x_max: T,
}

impl<T: Scalar> CodingErrorModel<T> {
    /// Perfect BB84 preparation.
    pub fn ideal() -> Self {
        Self::uniform(T::zero())
    }

    /// Same threshold angle on both sides and bases, no outliers.
    pub fn uniform(theta: T) -> Self {
        Self {
            theta_az: theta,
            theta_ax: theta,
            theta_bz: theta,
            theta_bx: theta,
            g_z: T::zero(),
            g_x: T::zero(),
            delta_x_max: T::zero(),
        }
    }

    /// Angles in `[0, pi/2]`, outlier fractions in `[0, 1)`, phase bound in `[0, pi/2)`.
    pub fn validate(&self) -> Result<(), QubitError> {
        let half_pi = T::FRAC_PI_2();
        for (name, value) in [
            ("theta_az", self.theta_az),
            ("theta_ax", self.theta_ax),
            ("theta_bz", self.theta_bz),
            ("theta_bx", self.theta_bx),
        ] {
            if !(value >= T::zero() && value <= half_pi) {
                return Err(QubitError::OutOfRange {
                    name,
                    value: to_f64(value),
                });
            }
        }
        for (name, value) in [("g_z", self.g_z), ("g_x", self.g_x)] {
            if !(value >= T::zero() && value < T::one()) {
                return Err(QubitError::OutOfRange {
                    name,
                    value: to_f64(value),
                });
            }
        }
        if !(self.delta_x_max >= T::zero() && self.delta_x_max < half_pi) {
            return Err(QubitError::OutOfRange {
                name: "delta_x_max",
                value: to_f64(self.delta_x_max),
            });
        }
        Ok(())
    }

    /// Deliberate flip probability `tan(theta)`, defined only below 1/2.
    pub fn flip_probability(theta: T) -> Option<T> {
        let p = theta.tan();
        (p >= T::zero() && p < T::half()).then_some(p)
    }

    pub fn side_deltas(&self, mode: PreparationMode) -> (BasisDeltas<T>, BasisDeltas<T>) {
        let x_delta = |theta: T| match mode {
            PreparationMode::FlipMixture => delta_flip(theta),
            PreparationMode::PhaseRandomized => delta_phase_randomized(theta, self.delta_x_max),
        };
        (
            BasisDeltas {
                z: delta_flip(self.theta_az),
                x: x_delta(self.theta_ax),
            },
            BasisDeltas {
                z: delta_flip(self.theta_bz),
                x: x_delta(self.theta_bx),
            },
        )
    }
}

/// Single-pulse ideal weights of one party.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisDeltas<T> {
    pub z: T,
    pub x: T,
}

/// All ideal-source weights and fractions entering the key rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport<T> {
    pub alice: BasisDeltas<T>,
    pub bob: BasisDeltas<T>,
    pub delta2_z: T,
    pub delta2_x: T,
    /// Post-selected ideal fraction in Z, outlier discount applied.
    pub frac_z: T,
    /// Post-selected ideal fraction in X, outlier discount applied.
    pub frac_x: T,
    pub mode: PreparationMode,
}

impl<T: Scalar> DeltaReport<T> {
    pub fn compute(coding: &CodingErrorModel<T>, mode: PreparationMode) -> Self {
        let (alice, bob) = coding.side_deltas(mode);
        let delta2_z = two_pulse_delta(alice.z, bob.z);
        let delta2_x = two_pulse_delta(alice.x, bob.x);
        Self {
            alice,
            bob,
            delta2_z,
            delta2_x,
            frac_z: outlier_adjust(ideal_fraction(delta2_z), coding.g_z),
            frac_x: outlier_adjust(ideal_fraction(delta2_x), coding.g_x),
            mode,
        }
    }

    /// Fractions for a one-way link where only Alice prepares states.
    pub fn single_sided(coding: &CodingErrorModel<T>, mode: PreparationMode) -> Self {
        let (alice, _) = coding.side_deltas(mode);
        Self {
            alice,
            bob: BasisDeltas {
                z: T::one(),
                x: T::one(),
            },
            delta2_z: alice.z,
            delta2_x: alice.x,
            frac_z: outlier_adjust(ideal_fraction(alice.z), coding.g_z),
            frac_x: outlier_adjust(ideal_fraction(alice.x), coding.g_x),
            mode,
        }
    }
}
