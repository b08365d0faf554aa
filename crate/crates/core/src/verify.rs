//! Seeded property suite: monotonicity, oddness, certificate soundness,
//! transform round trips, norm ordering, contraction and the energy ledger.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::damping::{random_velocity, Condition, DampingError, DampingFamily, DampingOp, DampingTerm};
use crate::forcing::ForcingSignal;
use crate::integrator::{hilbert_distance, Problem, Scheme, State, StepperConfig};
use crate::linalg;
use crate::spectral::{ModalVector, SpectralOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuiteConfig {
    pub seed: u64,
    pub modes: usize,
    /// Random pairs for the monotonicity check, per damping.
    pub pairs: usize,
    /// Fresh samples per certificate.
    pub certificate_samples: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self { seed: 42, modes: 8, pairs: 1000, certificate_samples: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyOutcome {
    pub name: String,
    pub checks: usize,
    pub violations: usize,
    /// Most adverse normalized margin seen (negative means violated).
    pub worst: f64,
}

impl PropertyOutcome {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.checks > 0
    }
}

struct Tally {
    name: String,
    checks: usize,
    violations: usize,
    worst: f64,
}

impl Tally {
    fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), checks: 0, violations: 0, worst: f64::INFINITY }
    }

    fn record(&mut self, margin: f64, tol: f64) {
        self.checks += 1;
        self.worst = self.worst.min(margin);
        if !(margin >= -tol) {
            self.violations += 1;
        }
    }

    fn finish(self) -> PropertyOutcome {
        PropertyOutcome { name: self.name, checks: self.checks, violations: self.violations, worst: self.worst }
    }
}

type Case = (&'static str, SpectralOperator<f64>, DampingOp<f64>);

fn damping_cases(n: usize) -> Vec<Case> {
    let wave = SpectralOperator::wave_1d(n).expect("valid operator");
    let beam = SpectralOperator::beam_1d(n).expect("valid operator");
    let term = |f, c, a| DampingTerm::new(f, c, a).expect("valid term");
    let op = |f, c, a| DampingOp::new(f, c, a).expect("valid damping");
    vec![
        ("linear", wave.clone(), DampingOp::linear(0.5).expect("valid damping")),
        ("local_power a=2", wave.clone(), op(DampingFamily::LocalPower, 1.0, 2.0)),
        ("local_power a=0.5", wave.clone(), op(DampingFamily::LocalPower, 2.0, 0.5)),
        ("averaged_h a=2", wave.clone(), op(DampingFamily::AveragedH, 1.0, 2.0)),
        ("structural a=1", beam, op(DampingFamily::StructuralAveraged, 1.0, 1.0)),
        (
            "linear + averaged_h a=2",
            wave,
            DampingOp::sum(vec![
                term(DampingFamily::AveragedH, 1.0, 0.0),
                term(DampingFamily::AveragedH, 1.0, 2.0),
            ])
            .expect("valid damping"),
        ),
    ]
}

fn monotonicity(cases: &[Case], cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> PropertyOutcome {
    let mut t = Tally::new("monotonicity");
    for (_, op, g) in cases {
        for _ in 0..cfg.pairs {
            let v = random_velocity::<f64>(rng, cfg.modes, -2.0, 2.0);
            let w = random_velocity::<f64>(rng, cfg.modes, -2.0, 2.0);
            let gv = g.apply(op, &v).expect("dimension");
            let gw = g.apply(op, &w).expect("dimension");
            let dg = &gv - &gw;
            let dv = &v - &w;
            let scale = 1e-300 + (linalg::norm2(gv.coeffs()) + linalg::norm2(gw.coeffs())) * linalg::norm2(dv.coeffs());
            t.record(dg.dot(&dv) / scale, 1e-12);
        }
    }
    t.finish()
}

fn oddness(cases: &[Case], cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> PropertyOutcome {
    let mut t = Tally::new("oddness");
    for (_, op, g) in cases {
        for _ in 0..cfg.pairs {
            let v = random_velocity::<f64>(rng, cfg.modes, -2.0, 2.0);
            let a = g.apply(op, &-&v).expect("dimension");
            let b = -&g.apply(op, &v).expect("dimension");
            t.record(if a == b { 0.0 } else { -1.0 }, 0.0);
        }
    }
    t.finish()
}

fn certificates(cases: &[Case], cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> PropertyOutcome {
    let mut t = Tally::new("certificate soundness");
    for (_, op, g) in cases {
        for cond in [Condition::General, Condition::PowerLike, Condition::AntiPeriodic] {
            let cert = match g.certificate(op, cond) {
                Ok(c) => c,
                Err(DampingError::Inadmissible(_)) => continue,
                Err(_) => {
                    t.record(-1.0, 0.0);
                    continue;
                }
            };
            for _ in 0..cfg.certificate_samples {
                let v = random_velocity::<f64>(rng, cfg.modes, -3.0, 3.0);
                t.record(cert.slack(op, g, &v).expect("dimension"), 1e-9);
            }
        }
    }
    t.finish()
}

fn transforms(cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> PropertyOutcome {
    let mut t = Tally::new("transform round trip");
    let op = SpectralOperator::<f64>::wave_1d(cfg.modes).expect("valid operator");
    for _ in 0..cfg.pairs {
        let m = ModalVector::new((0..cfg.modes).map(|_| rng.gen_range(-10.0..10.0)).collect());
        let back = op.to_modal(&op.to_nodal(&m).expect("dimension")).expect("dimension");
        let err = (&back - &m).max_abs();
        t.record(1e-10 - err, 0.0);
    }
    t.finish()
}

fn norm_ordering(cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> PropertyOutcome {
    let mut t = Tally::new("S2 <= Linf");
    let n = cfg.modes;
    for i in 0..60 {
        let profile = ModalVector::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let amp = 10f64.powf(rng.gen_range(-2.0..2.0));
        let omega = rng.gen_range(0.2..8.0);
        let h = match i % 3 {
            0 => ForcingSignal::sinusoidal(profile, amp, omega, rng.gen_range(0.0..6.0)),
            1 => ForcingSignal::power_of_sine(profile, amp, omega, rng.gen_range(1.0..4.0)),
            _ => ForcingSignal::odd_harmonics(n, amp, omega, 1 + i % 5),
        }
        .expect("valid forcing");
        let s2 = h.s2_norm(50.0).expect("norm");
        let linf = h.linf_norm(50.0).expect("norm");
        t.record((linf - s2) / (1e-300 + linf), 1e-9);
    }
    t.finish()
}

fn contraction(cases: &[Case], cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> PropertyOutcome {
    let mut t = Tally::new("contraction");
    for (_, op, g) in cases {
        let h = ForcingSignal::sinusoidal(op.mode(1), 3.0, 1.3, 0.0).expect("valid forcing");
        let p = Problem::new(op, g, &h).expect("dimension");
        let stepper = StepperConfig::for_operator(op, Scheme::BackwardEuler).with_dt(0.01);
        for _ in 0..5 {
            let mut a = State::new(random_velocity(rng, cfg.modes, -1.0, 1.0), random_velocity(rng, cfg.modes, -1.0, 1.0), 0.0);
            let mut b = State::new(random_velocity(rng, cfg.modes, -1.0, 1.0), random_velocity(rng, cfg.modes, -1.0, 1.0), 0.0);
            let mut d = hilbert_distance(op, &a, &b);
            for _ in 0..100 {
                a = p.step(&a, &stepper).expect("step");
                b = p.step(&b, &stepper).expect("step");
                let next = hilbert_distance(op, &a, &b);
                t.record((d - next) / d, 1e-10);
                d = next;
            }
        }
    }
    t.finish()
}

fn energy_identity(cases: &[Case], cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> PropertyOutcome {
    let mut t = Tally::new("energy identity");
    for (_, op, g) in cases {
        let h = ForcingSignal::sinusoidal(op.mode(2), 2.0, 0.9, 0.3).expect("valid forcing");
        let p = Problem::new(op, g, &h).expect("dimension");
        for scheme in [Scheme::ImplicitMidpoint, Scheme::BackwardEuler] {
            let stepper = StepperConfig::for_operator(op, scheme);
            let mut s = State::new(random_velocity(rng, cfg.modes, -1.0, 1.0), random_velocity(rng, cfg.modes, -1.0, 1.0), 0.0);
            for _ in 0..100 {
                let out = p.step_with_ledger(&s, &stepper).expect("step");
                let e0 = p.energy(&s).0;
                let e1 = p.energy(&out.state).0;
                let defect = (e1 - e0 - (out.work - out.dissipation)) / (1.0 + e0);
                // midpoint balances exactly, backward Euler may only lose energy
                let margin = match scheme {
                    Scheme::ImplicitMidpoint => -defect.abs(),
                    Scheme::BackwardEuler => -defect,
                };
                t.record(margin, 1e-11);
                s = out.state;
            }
        }
    }
    t.finish()
}

/// Runs every property with a generator seeded from `cfg.seed`.
pub fn run_property_suite(cfg: &SuiteConfig) -> Vec<PropertyOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let cases = damping_cases(cfg.modes);
    vec![
        monotonicity(&cases, cfg, &mut rng),
        oddness(&cases, cfg, &mut rng),
        certificates(&cases, cfg, &mut rng),
        transforms(cfg, &mut rng),
        norm_ordering(cfg, &mut rng),
        contraction(&cases, cfg, &mut rng),
        energy_identity(&cases, cfg, &mut rng),
    ]
}

pub fn format_table(outcomes: &[PropertyOutcome]) -> String {
    let mut out = format!("{:<24} {:>8} {:>10} {:>12}  result\n", "property", "checks", "violations", "worst");
    for o in outcomes {
        out.push_str(&format!(
            "{:<24} {:>8} {:>10} {:>12.3e}  {}\n",
            o.name,
            o.checks,
            o.violations,
            o.worst,
            if o.passed() { "PASS" } else { "FAIL" }
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes() {
        let cfg = SuiteConfig { pairs: 50, certificate_samples: 50, modes: 4, ..Default::default() };
        let out = run_property_suite(&cfg);
        assert_eq!(out.len(), 7);
        for o in &out {
            assert!(o.passed(), "{o:?}");
        }
        let table = format_table(&out);
        assert!(table.lines().count() == 8 && !table.contains("FAIL"));
    }

    #[test]
    fn tally_flags_violations() {
        let mut t = Tally::new("x");
        t.record(-0.5, 0.1);
        t.record(0.2, 0.1);
        let o = t.finish();
        assert_eq!((o.checks, o.violations, o.worst), (2, 1, -0.5));
        assert!(!o.passed());
    }
}
