use dampbound::bounds::{
    amplitude_sweep, check_bound_inequality, estimate_ultimate_bound, fit_loglog, BoundConfig, SweepResult, SweepRow,
};
use dampbound::{DampingFamily, DampingOp, ForcingSignal, ModalVector, NormKind, Scheme, SpectralOperator, State, StepperConfig};
use proptest::prelude::*;

fn rows_from(points: &[(f64, f64)]) -> SweepResult<f64> {
    SweepResult::from_rows(
        points
            .iter()
            .enumerate()
            .map(|(i, &(n, m))| SweepRow { amplitude: i as f64 + 1.0, norm_kind: NormKind::Linf, forcing_norm: n, m_hat: Ok(m) })
            .collect(),
    )
}

#[test]
fn unforced_linear_damping_decays() {
    let op = SpectralOperator::<f64>::wave_1d(4).unwrap();
    let g = DampingOp::linear(1.0).unwrap();
    let h = ForcingSignal::zero(4);
    let s0 = State::new(ModalVector::new(vec![0.8, -0.3, 0.5, 0.2]), ModalVector::new(vec![-1.0, 0.4, 0.0, 0.7]), 0.0);
    let cfg = BoundConfig::default().with_t_total(200.0);
    let stepper = StepperConfig::for_operator(&op, Scheme::ImplicitMidpoint);
    let est = estimate_ultimate_bound(&op, &g, &h, &s0, &cfg, &stepper).unwrap();
    assert!(est.m_hat < 1e-3, "{}", est.m_hat);
}

#[test]
fn stationary_sweep_has_slope_two_and_known_intercept() {
    let op = SpectralOperator::<f64>::diagonal(vec![2.0]).unwrap();
    let g = DampingOp::new(DampingFamily::AveragedH, 1.0, 2.0).unwrap();
    let lambda1 = 2.0;
    let amps: Vec<f64> = (0..8).map(|i| 4f64.powi(i)).collect();
    let stepper = StepperConfig::for_operator(&op, Scheme::ImplicitMidpoint);
    let sweep = amplitude_sweep(
        &op,
        &g,
        |k| Ok(ForcingSignal::constant(ModalVector::new(vec![k * lambda1]))),
        |k| State::new(ModalVector::new(vec![k]), ModalVector::new(vec![0.0]), 0.0),
        &amps,
        NormKind::S2,
        &BoundConfig::default().with_t_total(10.0),
        &stepper,
    )
    .unwrap();
    let fit = sweep.fit.clone().unwrap();
    assert!((fit.slope - 2.0).abs() < 1e-6);
    assert!((fit.intercept + lambda1.ln()).abs() < 1e-6);
    let check = check_bound_inequality(&sweep, 2.0);
    assert!(check.holds);
    assert!((check.k_fit - 1.0 / lambda1).abs() < 1e-3);
}

#[test]
fn sweep_rows_grow_with_amplitude() {
    let op = SpectralOperator::<f64>::wave_1d(2).unwrap();
    let g = DampingOp::new(DampingFamily::LocalPower, 1.0, 1.0).unwrap();
    let stepper = StepperConfig::for_operator(&op, Scheme::ImplicitMidpoint);
    let cfg = BoundConfig::default().with_t_total(150.0);
    let sweep = amplitude_sweep(
        &op,
        &g,
        |k| ForcingSignal::sinusoidal(op.mode(1), k, 1.3, 0.0),
        |_| State::zero(2),
        &[0.5, 1.0, 2.0, 4.0, 8.0],
        NormKind::Linf,
        &cfg,
        &stepper,
    )
    .unwrap();
    let m: Vec<f64> = sweep.rows.iter().map(|r| *r.m_hat.as_ref().unwrap()).collect();
    for w in m.windows(2) {
        assert!(w[1] >= w[0] * (1.0 - cfg.window_agreement_tol), "{m:?}");
    }
}

#[test]
fn analytic_antiperiodic_family_pins_the_exponent() {
    // M = k², ‖h‖ = k³
    let pts: Vec<(f64, f64)> = (0..=80).map(|i| 2f64.powi(i)).map(|k| (k * k * k, k * k)).collect();
    let sweep = rows_from(&pts);
    assert!((sweep.fit.clone().unwrap().slope - 2.0 / 3.0).abs() < 1e-12);
    assert!(check_bound_inequality(&sweep, 2.0 / 3.0).holds);
    for e in [0.0, 0.3, 0.5, 2.0 / 3.0 - 0.11] {
        assert!(!check_bound_inequality(&sweep, e).holds, "exponent {e}");
    }
    assert!(check_bound_inequality(&sweep, 4.0).holds);
}

#[test]
fn failed_rows_are_kept_but_not_fitted() {
    let mut sweep = rows_from(&[(1.0, 1.0), (2.0, 4.0), (4.0, 16.0), (8.0, 64.0), (16.0, 256.0), (32.0, 1024.0), (64.0, 4096.0), (128.0, 16384.0)]);
    sweep.rows[7].m_hat = Err("rejected".into());
    let refit = SweepResult::from_rows(sweep.rows.clone());
    assert!(refit.fit.is_err());
    assert_eq!(refit.rows.len(), 8);
}

proptest! {
    #[test]
    fn exact_power_laws_are_recovered(slope in -3.0f64..3.0, intercept in -5.0f64..5.0, n in 2usize..12) {
        let pts: Vec<(f64, f64)> = (0..n).map(|i| {
            let x = 1.5f64.powi(i as i32);
            (x, (intercept + slope * x.ln()).exp())
        }).collect();
        let f = fit_loglog(&pts).unwrap();
        prop_assert!((f.slope - slope).abs() < 1e-12 * (1.0 + slope.abs()) * 10.0);
        prop_assert!((f.intercept - intercept).abs() < 1e-11);
        prop_assert!(f.r_squared >= 0.0 && f.r_squared <= 1.0);
    }

    #[test]
    fn larger_exponents_dominate(
        growth in 0.0f64..3.0,
        noise in proptest::collection::vec(0.5f64..2.0, 8),
        e in 0.0f64..3.0,
        extra in 0.0f64..2.0,
    ) {
        let pts: Vec<(f64, f64)> = noise.iter().enumerate().map(|(i, z)| {
            let n = 3f64.powi(i as i32);
            (n, z * n.powf(growth))
        }).collect();
        let sweep = rows_from(&pts);
        let low = check_bound_inequality(&sweep, e);
        let high = check_bound_inequality(&sweep, e + extra);
        prop_assert!(high.stability <= low.stability * (1.0 + 1e-12));
        if low.holds {
            prop_assert!(high.holds);
        }
    }
}
