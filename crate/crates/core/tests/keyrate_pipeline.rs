mod common;

use common::{binary_entropy as h_ref, rel_diff};
use mdk_core::*;
use proptest::prelude::*;

const K: usize = 12;

fn reference_setup(eta: f64) -> (Channel<f64>, SourcePair<f64>) {
    (
        build_channel(eta, eta, 1e-6, 0.01, K).unwrap(),
        SourcePair::coherent(0.1, 0.4, K).unwrap(),
    )
}

fn theta_for_sin2(s2: f64) -> f64 {
    s2.sqrt().asin()
}

fn run(eta: f64, coding: &CodingErrorModel<f64>, options: &PipelineOptions<f64>) -> Analysis<f64> {
    let (ch, src) = reference_setup(eta);
    analyze(&ch, &src, coding, options).unwrap()
}

// Goldens below were evaluated at 40 significant digits by an independent
// arbitrary-precision implementation of the full chain.

#[test]
fn golden_decoy_rate_at_eta_0_1() {
    let a = run(0.1, &CodingErrorModel::ideal(), &PipelineOptions::default());
    assert!(rel_diff(a.s11_z.value, 0.0089950950782554622637) < 1e-12);
    assert!(rel_diff(a.e11_x.unwrap().value, 0.01345505821607116033) < 1e-12);
    assert!(
        rel_diff(a.baseline.rate, 0.0004357466737846942858261222) < 1e-12,
        "{}",
        a.baseline.rate
    );
}

#[test]
fn golden_basis_error_rate_at_eta_0_1() {
    let coding = CodingErrorModel::uniform(theta_for_sin2(1e-4));
    let a = run(0.1, &coding, &PipelineOptions::default());
    assert!(rel_diff(a.e11_x.unwrap().value, 0.039542204582636630424) < 1e-12);
    assert!(
        rel_diff(a.report.rate, 0.0003004742421965488408450717) < 1e-12,
        "{}",
        a.report.rate
    );
}

#[test]
fn golden_single_basis_decoy_rate() {
    let opts = PipelineOptions {
        single_basis_decoy: true,
        ..PipelineOptions::default()
    };
    let a = run(0.1, &CodingErrorModel::uniform(0.01), &opts);
    assert!(
        rel_diff(a.report.rate, 0.0002911049262591415578671294) < 1e-12,
        "{}",
        a.report.rate
    );
}

#[test]
fn golden_single_photon_source_rate() {
    let coding = CodingErrorModel::uniform(0.01);
    let r =
        keyrate_single_photon_source(0.02, 0.02, 0.5, &coding, PreparationMode::FlipMixture, 1.16)
            .unwrap();
    assert!(
        rel_diff(r.rate, 0.1962645532959481564061407) < 1e-12,
        "{}",
        r.rate
    );
}

#[test]
fn binary_entropy_matches_reference() {
    for i in 0..=1000 {
        let p = i as f64 / 1000.0;
        assert!((binary_entropy(p).unwrap() - h_ref(p)).abs() < 1e-15);
    }
    assert!(rel_diff(binary_entropy(0.11).unwrap(), 0.4999159581645279956404996) < 1e-15);
}

#[test]
fn reported_delta11_is_single_photon_share() {
    let a = run(0.1, &CodingErrorModel::ideal(), &PipelineOptions::default());
    let (_, src) = reference_setup(0.1);
    let w = src.alice.signal.p(1) * src.bob.signal.p(1);
    let (ch, _) = reference_setup(0.1);
    let obs = synthesize_observables(&ch, &src, Basis::Z).unwrap();
    let expect = w * a.s11_z.value / obs.s(SourceKind::Signal, SourceKind::Signal);
    assert!(rel_diff(a.report.delta11_z, expect) < 1e-15);
    assert!(a.report.delta11_z > 0.0 && a.report.delta11_z < 1.0);
}

#[test]
fn variants_coincide_without_coding_errors() {
    let base = run(
        0.05,
        &CodingErrorModel::ideal(),
        &PipelineOptions::default(),
    );
    let single = run(
        0.05,
        &CodingErrorModel::ideal(),
        &PipelineOptions {
            single_basis_decoy: true,
            ..PipelineOptions::default()
        },
    );
    assert!(rel_diff(base.report.rate, base.baseline.rate) < 1e-12);
    assert!(rel_diff(single.report.rate, base.baseline.rate) < 1e-12);
    let r = keyrate_single_photon_source(
        0.03,
        0.01,
        1.0,
        &CodingErrorModel::ideal(),
        PreparationMode::FlipMixture,
        1.2,
    )
    .unwrap();
    assert!(rel_diff(r.rate, 1.0 - h_ref(0.03) - 1.2 * h_ref(0.01)) < 1e-12);
}

#[test]
fn swapped_x_preparation_gives_zero_on_clean_data() {
    for eta in [1.0, 0.1, 1e-3] {
        let mut coding = CodingErrorModel::ideal();
        coding.theta_ax = std::f64::consts::FRAC_PI_2;
        let a = run(eta, &coding, &PipelineOptions::default());
        assert_eq!(a.report.rate, 0.0);
        assert_eq!(a.report.zeroed_reason, Some(ZeroReason::NegativeDelta));
        // the detected data stay clean: no deliberate flips are possible here
        assert!(a.e11_x.unwrap().value < 0.05);
        assert!(a.baseline.rate > 0.0);
    }
}

#[test]
fn rate_falls_with_loss() {
    let coding = CodingErrorModel::uniform(0.01);
    let mut last = f64::INFINITY;
    for km in (0..=200).step_by(10) {
        let eta = 10f64.powf(-0.02 * km as f64);
        let r = run(eta, &coding, &PipelineOptions::default()).report.rate;
        assert!(r <= last, "{km} km");
        last = r;
    }
}

#[test]
fn phase_randomization_tolerates_larger_errors() {
    let coding = CodingErrorModel {
        delta_x_max: 0.05,
        ..CodingErrorModel::uniform(theta_for_sin2(1e-2))
    };
    let flip = run(0.1, &coding, &PipelineOptions::default());
    let pr = run(
        0.1,
        &coding,
        &PipelineOptions {
            mode: PreparationMode::PhaseRandomized,
            ..PipelineOptions::default()
        },
    );
    assert!(pr.report.rate > flip.report.rate);
    assert!(pr.report.rate > 0.0);
}

#[test]
fn optimizer_single_point_and_zero_region() {
    let (ch, _) = reference_setup(0.1);
    let grid = IntensityGrid {
        mu_x: vec![0.1],
        mu_y: vec![0.4],
    };
    let out = optimize_intensities(
        &ch,
        &CodingErrorModel::ideal(),
        &grid,
        SourceFamily::Coherent,
        K,
        &PipelineOptions::default(),
    )
    .unwrap();
    assert_eq!((out.best.mu_x, out.best.mu_y), (0.1, 0.4));
    assert!(
        rel_diff(
            out.best.rate(),
            run(0.1, &CodingErrorModel::ideal(), &PipelineOptions::default())
                .report
                .rate
        ) < 1e-15
    );

    let mut swapped = CodingErrorModel::ideal();
    swapped.theta_bx = 1.2;
    let grid = IntensityGrid {
        mu_x: vec![0.05, 0.1],
        mu_y: vec![0.3, 0.5],
    };
    let out = optimize_intensities(
        &ch,
        &swapped,
        &grid,
        SourceFamily::Coherent,
        K,
        &PipelineOptions::default(),
    )
    .unwrap();
    assert_eq!(out.best.rate(), 0.0);
    // all tied at zero: smallest mu_y, then smallest mu_x
    assert_eq!((out.best.mu_x, out.best.mu_y), (0.05, 0.3));

    let empty = IntensityGrid {
        mu_x: vec![0.5],
        mu_y: vec![0.4],
    };
    assert_eq!(
        optimize_intensities(
            &ch,
            &swapped,
            &empty,
            SourceFamily::Coherent,
            K,
            &PipelineOptions::default()
        ),
        Err(KeyRateError::EmptyGrid)
    );
}

#[test]
fn optimizer_golden_grid() {
    let (ch, _) = reference_setup(0.1);
    let grid = IntensityGrid {
        mu_x: IntensityGrid::linspace(0.01, 0.2, 20),
        mu_y: IntensityGrid::linspace(0.1, 0.8, 20),
    };
    let coding = CodingErrorModel::uniform(theta_for_sin2(1e-4));
    let out = optimize_intensities(
        &ch,
        &coding,
        &grid,
        SourceFamily::Coherent,
        K,
        &PipelineOptions::default(),
    )
    .unwrap();
    let again = optimize_intensities(
        &ch,
        &coding,
        &grid,
        SourceFamily::Coherent,
        K,
        &PipelineOptions::default(),
    )
    .unwrap();
    assert_eq!(out, again);
    assert!(out
        .points
        .iter()
        .all(|p| p.mu_x < p.mu_y && (p.error.is_none() || p.mu_y - p.mu_x < 1e-12)));
    assert!(out.points.iter().all(|p| p.rate() <= out.best.rate()));
    let (ix, iy) = (
        grid.mu_x.iter().position(|&v| v == out.best.mu_x).unwrap(),
        grid.mu_y.iter().position(|&v| v == out.best.mu_y).unwrap(),
    );
    assert_eq!((ix, iy), OPTIMIZER_ARGMAX);
    assert!(rel_diff(out.best.rate(), OPTIMIZER_BEST_RATE) < 1e-12);
}

/// Grid indices of the maximum, cross-checked by an independent evaluation.
const OPTIMIZER_ARGMAX: (usize, usize) = (0, 13);
const OPTIMIZER_BEST_RATE: f64 = 0.00045998467392344072661;

fn sweep(theta: f64) -> CodingErrorModel<f64> {
    CodingErrorModel::uniform(theta)
}

fn inputs_from(a: &Analysis<f64>, f_ec: f64) -> KeyRateInputs<f64> {
    let (ch, src) = reference_setup(0.1);
    let obs = synthesize_observables(&ch, &src, Basis::Z).unwrap();
    KeyRateInputs {
        s11_z: a.s11_z.value,
        e11_x: a.e11_x.unwrap().value,
        signal_yield: obs.s(SourceKind::Signal, SourceKind::Signal),
        signal_error: obs.e(SourceKind::Signal, SourceKind::Signal),
        delta_report: a.deltas,
        f_ec,
        single_basis_decoy: false,
    }
}

#[test]
fn monotone_in_every_penalty() {
    let (_, src) = reference_setup(0.1);
    let a = run(0.1, &sweep(0.005), &PipelineOptions::default());
    let base = inputs_from(&a, 1.16);
    let rate = |i: &KeyRateInputs<f64>| keyrate_basis_error(i, &src).unwrap().rate;

    let mut last = f64::INFINITY;
    for k in 0..50 {
        let i = KeyRateInputs {
            e11_x: 0.002 * k as f64,
            ..base
        };
        assert!(rate(&i) <= last);
        last = rate(&i);
    }
    let mut last = f64::INFINITY;
    for k in 0..50 {
        let i = KeyRateInputs {
            signal_error: 0.002 * k as f64,
            ..base
        };
        assert!(rate(&i) <= last);
        last = rate(&i);
    }
    let mut last = f64::INFINITY;
    for k in 0..=20 {
        let i = KeyRateInputs {
            f_ec: 1.0 + 0.05 * k as f64,
            ..base
        };
        assert!(rate(&i) <= last);
        last = rate(&i);
    }
    for field in 0..6 {
        let mut last = f64::INFINITY;
        for k in 0..=40 {
            let mut coding = sweep(0.005);
            let v = 0.012 * k as f64;
            match field {
                0 => coding.theta_az = v,
                1 => coding.theta_ax = v,
                2 => coding.theta_bz = v,
                3 => coding.theta_bx = v,
                4 => coding.g_z = v / 0.5,
                _ => coding.g_x = v / 0.5,
            }
            let i = KeyRateInputs {
                delta_report: DeltaReport::compute(&coding, PreparationMode::FlipMixture),
                ..base
            };
            assert!(rate(&i) <= last, "field {field} step {k}");
            last = rate(&i);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn rate_is_clamped(
        s11 in 0.0..1.0f64,
        e11 in 0.0..1.0f64,
        syy in 1e-6..1.0f64,
        eyy in 0.0..0.5f64,
        theta in 0.0..1.5f64,
        f in 1.0..2.0f64,
    ) {
        let (_, src) = reference_setup(0.1);
        let i = KeyRateInputs {
            s11_z: s11,
            e11_x: e11,
            signal_yield: syy,
            signal_error: eyy,
            delta_report: DeltaReport::compute(&CodingErrorModel::uniform(theta), PreparationMode::FlipMixture),
            f_ec: f,
            single_basis_decoy: false,
        };
        let w = src.alice.signal.p(1) * src.bob.signal.p(1);
        for r in [
            keyrate_decoy(&i, &src).unwrap(),
            keyrate_basis_error(&i, &src).unwrap(),
            keyrate_single_basis_decoy(&i, &src, SingleBasisReading::IdealFraction).unwrap(),
            keyrate_single_basis_decoy(&i, &src, SingleBasisReading::PlainProduct).unwrap(),
        ] {
            prop_assert!(r.rate >= 0.0);
            prop_assert!(r.rate <= w * s11);
            prop_assert!(r.phase_flip_used <= 0.5);
            if r.zeroed_reason.is_some() {
                prop_assert_eq!(r.rate, 0.0);
            }
        }
    }

    #[test]
    fn large_x_angle_on_either_side_forces_zero(
        eta in 1e-4..1.0f64,
        theta in 0.4636476090008061..std::f64::consts::FRAC_PI_2,
        bob_side in any::<bool>(),
        others in 0.0..0.1f64,
    ) {
        let mut coding = CodingErrorModel::uniform(others);
        if bob_side { coding.theta_bx = theta } else { coding.theta_ax = theta }
        let (ch, src) = (build_channel(eta, eta, 1e-6, 0.01, K).unwrap(), SourcePair::coherent(0.1, 0.4, K).unwrap());
        let a = analyze(&ch, &src, &coding, &PipelineOptions::default()).unwrap();
        prop_assert_eq!(a.report.rate, 0.0);
    }
}
