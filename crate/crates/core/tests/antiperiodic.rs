use std::f64::consts::PI;

use dampbound::antiperiodic::{
    antiperiodic_trajectory, half_period_map, oracle_forcing, shoot, verify_antiperiodic, JacobianMode, ShootingConfig,
    WarmStart,
};
use dampbound::{DampingFamily, DampingOp, ForcingSignal, ModalVector, Problem, Scheme, SpectralOperator, State, StepperConfig};

fn scalar(u: f64, v: f64) -> State<f64> {
    State::new(ModalVector::new(vec![u]), ModalVector::new(vec![v]), 0.0)
}

/// Exact solution of `u'' + γ u' + λ u = a sin(ω t)` for `γ² < 4λ`.
fn linear_exact(lambda: f64, gamma: f64, a: f64, omega: f64, u0: f64, v0: f64, t: f64) -> (f64, f64) {
    let (dr, di) = (lambda - omega * omega, gamma * omega);
    let den = dr * dr + di * di;
    let (ur, ui) = (a * dr / den, -a * di / den);
    let (c, s) = ((omega * t).cos(), (omega * t).sin());
    let up = ur * s + ui * c;
    let vp = omega * (ur * c - ui * s);
    let (upz, vpz) = (ui, omega * ur);
    let beta = (lambda - gamma * gamma / 4.0).sqrt();
    let big_a = u0 - upz;
    let big_b = (v0 - vpz + gamma / 2.0 * big_a) / beta;
    let e = (-gamma * t / 2.0).exp();
    let (cb, sb) = ((beta * t).cos(), (beta * t).sin());
    let uh = e * (big_a * cb + big_b * sb);
    let vh = e * (-gamma / 2.0 * (big_a * cb + big_b * sb) + beta * (-big_a * sb + big_b * cb));
    (up + uh, vp + vh)
}

#[test]
fn linear_half_period_map_matches_closed_form() {
    let (lambda, gamma, a, omega) = (2.0, 0.7, 1.5, 1.3);
    let op = SpectralOperator::diagonal(vec![lambda]).unwrap();
    let g = DampingOp::linear(gamma).unwrap();
    let h = ForcingSignal::sinusoidal(ModalVector::new(vec![1.0]), a, omega, 0.0).unwrap();
    let p = Problem::new(&op, &g, &h).unwrap();
    let stepper = StepperConfig::for_operator(&op, Scheme::ImplicitMidpoint).with_dt(1e-3);
    let tau = PI / omega;
    for (u0, v0) in [(0.0, 0.0), (1.0, -0.5), (-2.0, 3.0)] {
        let out = half_period_map(&p, &scalar(u0, v0), tau, &stepper).unwrap();
        let (ue, ve) = linear_exact(lambda, gamma, a, omega, u0, v0, tau);
        assert!((out.u.coeffs()[0] - ue).abs() < 1e-6, "u {} vs {ue}", out.u.coeffs()[0]);
        assert!((out.v.coeffs()[0] - ve).abs() < 1e-6, "v {} vs {ve}", out.v.coeffs()[0]);
    }
}

#[test]
fn linear_shooting_finds_the_periodic_response() {
    let (lambda, gamma, a, omega) = (2.0, 0.7, 1.5, 1.3);
    let op = SpectralOperator::diagonal(vec![lambda]).unwrap();
    let g = DampingOp::linear(gamma).unwrap();
    let h = ForcingSignal::sinusoidal(ModalVector::new(vec![1.0]), a, omega, 0.0).unwrap();
    let p = Problem::new(&op, &g, &h).unwrap();
    let stepper = StepperConfig::for_operator(&op, Scheme::ImplicitMidpoint).with_dt(1e-3);
    let res = shoot(&p, &ShootingConfig::new(PI / omega), &stepper).unwrap();
    let den = (lambda - omega * omega).powi(2) + (gamma * omega).powi(2);
    let u_exact = -a * gamma * omega / den;
    let v_exact = omega * a * (lambda - omega * omega) / den;
    assert!((res.state.u.coeffs()[0] - u_exact).abs() < 1e-6);
    assert!((res.state.v.coeffs()[0] - v_exact).abs() < 1e-6);
    assert!(!res.warm_start_used);
}

#[test]
fn unforced_problem_shoots_to_rest() {
    let op = SpectralOperator::<f64>::wave_1d(4).unwrap();
    let g = DampingOp::linear(0.5).unwrap();
    let h = ForcingSignal::zero(4).with_antiperiod(1.7).unwrap();
    let p = Problem::new(&op, &g, &h).unwrap();
    let stepper = StepperConfig::for_operator(&op, Scheme::ImplicitMidpoint);
    let res = shoot(&p, &ShootingConfig::new(1.7), &stepper).unwrap();
    assert!(res.state.u.max_abs() < 1e-9 && res.state.v.max_abs() < 1e-9);
}

#[test]
fn oracle_half_period_flips_the_mode() {
    let op = SpectralOperator::<f64>::wave_1d(4).unwrap();
    let g = DampingOp::new(DampingFamily::LocalPower, 1.0, 2.0).unwrap();
    for (mode, k) in [(1, 1.0), (2, 0.5)] {
        let h = oracle_forcing(&op, &g, mode, k).unwrap();
        let p = Problem::new(&op, &g, &h).unwrap();
        let tau = PI / op.lambda()[mode - 1].sqrt();
        let stepper = StepperConfig::for_operator(&op, Scheme::ImplicitMidpoint).with_dt(1e-3);
        let start = State::new(op.mode(mode).scaled(k), op.zeros(), 0.0);
        let out = half_period_map(&p, &start, tau, &stepper).unwrap();
        let err = (&out.u + &start.u).max_abs().max(out.v.max_abs());
        assert!(err < 1e-6, "mode {mode}: {err}");
    }
}

#[test]
fn shot_orbit_closes_and_has_zero_mean() {
    let op = SpectralOperator::<f64>::wave_1d(6).unwrap();
    let g = DampingOp::new(DampingFamily::AveragedH, 1.0, 1.0).unwrap();
    let omega = 1.4;
    let h = ForcingSignal::odd_harmonics(6, 2.0, omega, 3).unwrap();
    let p = Problem::new(&op, &g, &h).unwrap();
    let stepper = StepperConfig::for_operator(&op, Scheme::ImplicitMidpoint);
    let cfg = ShootingConfig::new(PI / omega);
    let res = shoot(&p, &cfg, &stepper).unwrap();
    assert!(res.residual < cfg.residual_tol);
    let traj = antiperiodic_trajectory(&p, &res.state, cfg.tau, &stepper).unwrap();
    let check = verify_antiperiodic(&op, &traj, cfg.tau);
    let sup = traj.iter().map(|s| op.norm_h(&s.u).unwrap()).fold(0.0, f64::max);
    assert!(check.residual < 10.0 * cfg.residual_tol, "{}", check.residual);
    assert!(check.mean_h_norm < 1e-6 * (1.0 + sup), "{}", check.mean_h_norm);
}

#[test]
fn shifted_forcing_gives_the_negated_orbit() {
    let op = SpectralOperator::<f64>::wave_1d(3).unwrap();
    let g = DampingOp::new(DampingFamily::LocalPower, 1.0, 2.0).unwrap();
    let omega = 1.1;
    let tau = PI / omega;
    let stepper = StepperConfig::for_operator(&op, Scheme::ImplicitMidpoint);
    let solve = |phase: f64| {
        let h = ForcingSignal::sinusoidal(op.mode(1), 1.5, omega, phase).unwrap();
        let p = Problem::new(&op, &g, &h).unwrap();
        shoot(&p, &ShootingConfig::new(tau), &stepper).unwrap().state
    };
    let a = solve(0.0);
    let b = solve(PI);
    let err = (&a.u + &b.u).max_abs().max((&a.v + &b.v).max_abs());
    assert!(err < 1e-7, "{err}");
}

#[test]
fn picard_iteration_is_non_expansive_under_backward_euler() {
    let op = SpectralOperator::<f64>::wave_1d(4).unwrap();
    let g = DampingOp::new(DampingFamily::AveragedH, 1.0, 0.0).unwrap();
    let omega = 0.9;
    let h = ForcingSignal::sinusoidal(op.mode(2), 1.0, omega, 0.0).unwrap();
    let p = Problem::new(&op, &g, &h).unwrap();
    let stepper = StepperConfig::for_operator(&op, Scheme::BackwardEuler).with_dt(0.01);
    let cfg = ShootingConfig {
        jacobian: JacobianMode::PicardOnly,
        warm_start: WarmStart::Never,
        residual_tol: 1e-8,
        max_outer_iter: 400,
        ..ShootingConfig::new(PI / omega)
    };
    let res = shoot(&p, &cfg, &stepper).unwrap();
    for w in res.residual_history.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", res.residual_history);
    }
}

#[test]
fn exact_oracle_trajectory_passes_the_check() {
    let op = SpectralOperator::<f64>::wave_1d(3).unwrap();
    let tau = PI;
    let n = 400;
    let traj: Vec<State<f64>> = (0..=2 * n)
        .map(|i| {
            let t = tau * i as f64 / n as f64;
            State::new(op.mode(1).scaled(t.cos()), op.mode(1).scaled(-t.sin()), t)
        })
        .collect();
    let check = verify_antiperiodic(&op, &traj, tau);
    assert!(check.residual < 1e-12 && check.mean_h_norm < 1e-8);
}
