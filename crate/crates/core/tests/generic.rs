use dampbound::{DampingFamily, DampingOpF32, ForcingSignalF32, Problem, Scheme, SpectralOperatorF32, StateF32, StepperConfigF32};

#[test]
fn single_precision_run_keeps_the_energy_ledger() {
    let op = SpectralOperatorF32::wave_1d(4).unwrap();
    let g = DampingOpF32::new(DampingFamily::LocalPower, 1.0, 2.0).unwrap();
    let h = ForcingSignalF32::sinusoidal(op.mode(1), 2.0, 1.2, 0.0).unwrap();
    let p = Problem::new(&op, &g, &h).unwrap();
    let cfg = StepperConfigF32 { newton_tol: 1e-6, ..StepperConfigF32::for_operator(&op, Scheme::ImplicitMidpoint) };
    let mut s = StateF32::zero(4);
    let (mut work, mut diss) = (0.0f32, 0.0f32);
    for _ in 0..500 {
        let r = p.step_with_ledger(&s, &cfg).unwrap();
        work += r.work;
        diss += r.dissipation;
        s = r.state;
    }
    let e = p.energy(&s).0;
    assert!(e > 0.0 && e.is_finite());
    assert!((e - (work - diss)).abs() < 1e-3 * (1.0 + work));
}
