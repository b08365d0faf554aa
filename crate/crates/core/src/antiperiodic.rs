//! Anti-periodic solutions `U(t + τ) = -U(t)` by shooting on the half-period
//! map, and the growth experiments built on them.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{fmt_num, BoundError, SweepResult, SweepRow};
use crate::damping::{DampingError, DampingOp};
use crate::forcing::{ForcingError, ForcingSignal, NormKind};
use crate::integrator::{hilbert_distance, Problem, State, StepError, StepperConfig};
use crate::linalg;
use crate::scalar::Real;
use crate::spectral::{ModalVector, OperatorKind, SpectralOperator};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ShootError {
    #[error("invalid shooting setup: {0}")]
    InvalidConfig(String),
    #[error("shooting did not converge: residual {residual:e} after {iterations} iterations")]
    NotConverged { residual: f64, iterations: usize },
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Forcing(#[from] ForcingError),
    #[error(transparent)]
    Damping(#[from] DampingError),
    #[error(transparent)]
    Bound(#[from] BoundError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMode<T> {
    FiniteDifference { eps: T },
    PicardOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmStart {
    /// Only when the damping vanishes to higher order at zero.
    Auto,
    Always,
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingConfig<T> {
    pub tau: T,
    /// Target for `‖S_τ(U₀) + U₀‖` in the energy norm.
    pub residual_tol: T,
    pub max_outer_iter: usize,
    pub jacobian: JacobianMode<T>,
    pub picard_relaxation: T,
    pub warm_start: WarmStart,
    /// Number of half periods integrated from rest for a warm start.
    pub warm_start_half_periods: usize,
}

impl<T: Real> ShootingConfig<T> {
    pub fn new(tau: T) -> Self {
        Self {
            tau,
            residual_tol: T::lit(1e-9),
            max_outer_iter: 60,
            jacobian: JacobianMode::FiniteDifference { eps: T::lit(1e-6) },
            picard_relaxation: T::one(),
            warm_start: WarmStart::Auto,
            warm_start_half_periods: 40,
        }
    }

    pub fn validate(&self) -> Result<(), ShootError> {
        let bad = |m: &str| Err(ShootError::InvalidConfig(m.into()));
        if !(self.tau > T::zero()) || !self.tau.is_finite() {
            return bad("tau must be positive");
        }
        if !(self.residual_tol > T::zero()) {
            return bad("residual_tol must be positive");
        }
        if self.max_outer_iter == 0 {
            return bad("max_outer_iter must be at least 1");
        }
        if let JacobianMode::FiniteDifference { eps } = self.jacobian {
            if !(eps > T::zero()) {
                return bad("finite-difference eps must be positive");
            }
        }
        if !(self.picard_relaxation > T::zero() && self.picard_relaxation <= T::one()) {
            return bad("picard_relaxation must lie in (0, 1]");
        }
        Ok(())
    }
}

/// The step actually used over `[0, τ]`: `τ / round(τ / dt)`.
pub fn half_period_stepper<T: Real>(tau: T, stepper: &StepperConfig<T>) -> (usize, StepperConfig<T>) {
    let n = (tau / stepper.dt).round().to_usize().unwrap_or(1).max(1);
    (n, stepper.with_dt(tau / T::lit(n as f64)))
}

/// `U(τ)` for the solution starting from `U₀` at `t = 0`.
pub fn half_period_map<T: Real>(
    problem: &Problem<'_, T>,
    u0: &State<T>,
    tau: T,
    stepper: &StepperConfig<T>,
) -> Result<State<T>, StepError> {
    let (n, cfg) = half_period_stepper(tau, stepper);
    let mut s = State { t: T::zero(), ..u0.clone() };
    for _ in 0..n {
        s = problem.step(&s, &cfg)?;
    }
    s.t = tau;
    Ok(s)
}

/// Coordinates `(sqrt(λ) u, v)` in which the energy norm is Euclidean.
struct Scaling<T> {
    root: Vec<T>,
}

impl<T: Real> Scaling<T> {
    fn new(op: &SpectralOperator<T>) -> Self {
        Self { root: op.lambda().iter().map(|l| l.sqrt()).collect() }
    }

    fn to_x(&self, s: &State<T>) -> Vec<T> {
        let n = self.root.len();
        let mut x = Vec::with_capacity(2 * n);
        x.extend(s.u.coeffs().iter().zip(&self.root).map(|(u, r)| *u * *r));
        x.extend_from_slice(s.v.coeffs());
        x
    }

    fn to_state(&self, x: &[T]) -> State<T> {
        let n = self.root.len();
        let u = x[..n].iter().zip(&self.root).map(|(a, r)| *a / *r).collect();
        State::new(ModalVector::new(u), ModalVector::new(x[n..].to_vec()), T::zero())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShootMethod {
    Newton,
    Picard,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShootResult<T> {
    pub state: State<T>,
    pub residual: T,
    pub iterations: usize,
    /// Residual at every iterate, starting with the initial guess.
    pub residual_history: Vec<T>,
    pub warm_start_used: bool,
    /// Method of the last accepted update.
    pub method: ShootMethod,
}

fn check_antiperiodic_forcing<T: Real>(forcing: &ForcingSignal<T>, tau: T) -> Result<(), ShootError> {
    match forcing.declared_antiperiod() {
        Some(t) if (t - tau).abs() <= T::lit(1e-12) * tau => Ok(()),
        Some(t) => Err(ShootError::InvalidConfig(format!("forcing is declared {t}-anti-periodic, not {tau}"))),
        None => forcing.clone().with_antiperiod(tau).map(|_| ()).map_err(ShootError::from),
    }
}

/// Finds `U₀` with `S_τ(U₀) = -U₀` by damped Newton with a finite-difference
/// Jacobian, falling back to the relaxed Picard iteration
/// `U₀ ← (1 - ρ) U₀ - ρ S_τ(U₀)`.
pub fn shoot<T: Real>(
    problem: &Problem<'_, T>,
    cfg: &ShootingConfig<T>,
    stepper: &StepperConfig<T>,
) -> Result<ShootResult<T>, ShootError> {
    let n = problem.op.num_modes();
    shoot_from(problem, cfg, stepper, &State::zero(n))
}

/// As [`shoot`], with an explicit initial guess.
pub fn shoot_from<T: Real>(
    problem: &Problem<'_, T>,
    cfg: &ShootingConfig<T>,
    stepper: &StepperConfig<T>,
    guess: &State<T>,
) -> Result<ShootResult<T>, ShootError> {
    cfg.validate()?;
    stepper.validate()?;
    check_antiperiodic_forcing(problem.forcing, cfg.tau)?;
    let tau = cfg.tau;
    let scaling = Scaling::new(problem.op);

    let warm = match cfg.warm_start {
        WarmStart::Always => true,
        WarmStart::Never => false,
        WarmStart::Auto => !problem.damping.has_linear_part(),
    };
    let mut start = State { t: T::zero(), ..guess.clone() };
    if warm {
        // (-1)^n U(nτ) of the forward run, since h(t + τ) = -h(t) and g is odd
        for _ in 0..cfg.warm_start_half_periods {
            start = half_period_map(problem, &start, tau, stepper)?.negated();
        }
    }

    let flow = |x: &[T]| -> Result<Vec<T>, StepError> {
        Ok(scaling.to_x(&half_period_map(problem, &scaling.to_state(x), tau, stepper)?))
    };
    let resid = |x: &[T], sx: &[T]| -> Vec<T> { x.iter().zip(sx).map(|(a, b)| *a + *b).collect() };

    let mut x = scaling.to_x(&start);
    let mut sx = flow(&x)?;
    let mut r = resid(&x, &sx);
    let mut rn = linalg::norm2(&r);
    let mut history = vec![rn];
    let mut method = ShootMethod::Newton;
    let dim = x.len();
    for iter in 0..cfg.max_outer_iter {
        if rn < cfg.residual_tol {
            return Ok(ShootResult {
                state: scaling.to_state(&x),
                residual: rn,
                iterations: iter,
                residual_history: history,
                warm_start_used: warm,
                method,
            });
        }
        let mut accepted = false;
        if let JacobianMode::FiniteDifference { eps } = cfg.jacobian {
            let h = eps * (T::one() + linalg::norm2(&x));
            let columns = (0..dim)
                .into_par_iter()
                .map(|j| {
                    let mut xp = x.clone();
                    xp[j] = xp[j] + h;
                    let sp = flow(&xp)?;
                    Ok((0..dim).map(|i| (xp[i] + sp[i] - r[i]) / h).collect::<Vec<T>>())
                })
                .collect::<Result<Vec<_>, StepError>>()?;
            let mut jac = vec![T::zero(); dim * dim];
            for (j, col) in columns.iter().enumerate() {
                for i in 0..dim {
                    jac[i * dim + j] = col[i];
                }
            }
            let mut delta: Vec<T> = r.iter().map(|v| -*v).collect();
            if linalg::lu_solve(&mut jac, &mut delta).is_ok() {
                let mut step = T::one();
                while step >= T::lit(1.0 / 1024.0) {
                    let xt: Vec<T> = x.iter().zip(&delta).map(|(a, d)| *a + step * *d).collect();
                    let st = flow(&xt)?;
                    let rt = resid(&xt, &st);
                    let rtn = linalg::norm2(&rt);
                    if rtn <= (T::one() - T::lit(1e-4) * step) * rn {
                        (x, sx, r, rn) = (xt, st, rt, rtn);
                        accepted = true;
                        method = ShootMethod::Newton;
                        break;
                    }
                    step = step * T::lit(0.5);
                }
            }
        }
        if !accepted {
            let rho = cfg.picard_relaxation;
            x = x.iter().zip(&sx).map(|(a, s)| (T::one() - rho) * *a - rho * *s).collect();
            sx = flow(&x)?;
            r = resid(&x, &sx);
            rn = linalg::norm2(&r);
            method = ShootMethod::Picard;
        }
        history.push(rn);
    }
    if rn < cfg.residual_tol {
        return Ok(ShootResult {
            state: scaling.to_state(&x),
            residual: rn,
            iterations: cfg.max_outer_iter,
            residual_history: history,
            warm_start_used: warm,
            method,
        });
    }
    Err(ShootError::NotConverged { residual: rn.as_f64(), iterations: cfg.max_outer_iter })
}

/// Trajectory from `u0` over `[0, 2τ]` on the half-period grid, both endpoints included.
pub fn antiperiodic_trajectory<T: Real>(
    problem: &Problem<'_, T>,
    u0: &State<T>,
    tau: T,
    stepper: &StepperConfig<T>,
) -> Result<Vec<State<T>>, StepError> {
    let (n, cfg) = half_period_stepper(tau, stepper);
    let mut s = State { t: T::zero(), ..u0.clone() };
    let mut out = Vec::with_capacity(2 * n + 1);
    out.push(s.clone());
    for _ in 0..2 * n {
        s = problem.step(&s, &cfg)?;
        out.push(s.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AntiPeriodicCheck<T> {
    /// `max_t dist(U(t + τ), -U(t))`.
    pub residual: T,
    /// `|mean of u over [0, 2τ]|_H`.
    pub mean_h_norm: T,
}

/// Checks anti-periodicity of states sampled on a uniform grid over `[0, 2τ]`.
pub fn verify_antiperiodic<T: Real>(op: &SpectralOperator<T>, trajectory: &[State<T>], tau: T) -> AntiPeriodicCheck<T> {
    if trajectory.len() < 2 {
        return AntiPeriodicCheck { residual: T::zero(), mean_h_norm: T::zero() };
    }
    let t0 = trajectory[0].t;
    let shift = trajectory
        .iter()
        .enumerate()
        .min_by(|a, b| {
            let da = (a.1.t - t0 - tau).abs();
            let db = (b.1.t - t0 - tau).abs();
            da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
        })
        .map(|(i, _)| i)
        .unwrap_or(0)
        .max(1);
    let residual = (0..trajectory.len().saturating_sub(shift))
        .map(|i| hilbert_distance(op, &trajectory[i + shift], &trajectory[i].negated()))
        .fold(T::zero(), T::max);
    // rectangle rule over whole periods is exact for the periodic grid
    let span = (2 * shift).min(trajectory.len());
    let n = op.num_modes();
    let mut mean = vec![T::zero(); n];
    for s in &trajectory[..span] {
        for (m, u) in mean.iter_mut().zip(s.u.coeffs()) {
            *m = *m + *u;
        }
    }
    let count = T::lit(span as f64);
    let mean_h_norm = linalg::norm2(&mean) / count;
    AntiPeriodicCheck { residual, mean_h_norm }
}

/// Forcing for which `u(t) = k cos(sqrt(λ_j) t) φ_j` solves the equation:
/// `h(t) = g(-k sqrt(λ_j) sin(sqrt(λ_j) t) φ_j)`. Requires a single
/// homogeneous damping term, so that `h = -(k sqrt(λ))^{α+1} sin^{α+1} g(φ)`.
pub fn oracle_forcing<T: Real>(
    op: &SpectralOperator<T>,
    g: &DampingOp<T>,
    mode: usize,
    k: T,
) -> Result<ForcingSignal<T>, ShootError> {
    let [term] = g.terms() else {
        return Err(ShootError::InvalidConfig("the oracle family needs a single damping term".into()));
    };
    if mode == 0 || mode > op.num_modes() {
        return Err(ShootError::InvalidConfig(format!("mode {mode} out of range")));
    }
    let root = op.lambda()[mode - 1].sqrt();
    let profile = -&g.apply(op, &op.mode(mode))?;
    let beta = term.alpha() + T::one();
    let amplitude = (k * root).abs().powf(beta) * k.signum();
    Ok(ForcingSignal::power_of_sine(profile, amplitude, root, beta)?.with_antiperiod(T::PI() / root)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AntiPeriodicRow<T> {
    pub amplitude: T,
    pub linf_norm: T,
    pub l2_period_norm: T,
    /// `max Φ` over `[0, 2τ]` along the anti-periodic solution, or the failure.
    pub m_hat: Result<T, String>,
    pub shooting_residual: T,
    pub warm_start_used: bool,
    pub state: Option<State<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AntiPeriodicSweep<T> {
    pub rows: Vec<AntiPeriodicRow<T>>,
    pub sweep: SweepResult<T>,
}

/// Solves for the anti-periodic solution of every `family(k)` and fits
/// `log M` against the chosen forcing norm. The `Linf` fit is restricted to
/// abstract (finite-dimensional, `V = H`) operators.
#[allow(clippy::too_many_arguments)]
pub fn antiperiodic_exponent_sweep<T, F>(
    op: &SpectralOperator<T>,
    g: &DampingOp<T>,
    family: F,
    amplitudes: &[T],
    norm_kind: NormKind,
    cfg: &ShootingConfig<T>,
    stepper: &StepperConfig<T>,
) -> Result<AntiPeriodicSweep<T>, ShootError>
where
    T: Real,
    F: Fn(T) -> Result<ForcingSignal<T>, ShootError> + Sync,
{
    cfg.validate()?;
    match norm_kind {
        NormKind::Linf if op.kind() != OperatorKind::Abstract => {
            return Err(ShootError::InvalidConfig("the sup-norm exponent check needs an abstract operator".into()))
        }
        NormKind::S2 => return Err(ShootError::InvalidConfig("anti-periodic sweeps use linf or l2_period".into())),
        _ => {}
    }
    if amplitudes.iter().any(|a| !(*a > T::zero())) {
        return Err(ShootError::InvalidConfig("amplitudes must be positive".into()));
    }
    let tau = cfg.tau;
    let rows = amplitudes
        .par_iter()
        .map(|&k| -> Result<AntiPeriodicRow<T>, ShootError> {
            let forcing = family(k)?;
            let linf_norm = forcing.linf_norm(tau + tau)?;
            let l2_period_norm = forcing.l2_period_norm(tau)?;
            let problem = Problem::new(op, g, &forcing)?;
            let row = match shoot(&problem, cfg, stepper) {
                Ok(res) => {
                    let traj = antiperiodic_trajectory(&problem, &res.state, tau, stepper)?;
                    let m = traj.iter().map(|s| problem.energy(s).1).fold(T::zero(), T::max);
                    AntiPeriodicRow {
                        amplitude: k,
                        linf_norm,
                        l2_period_norm,
                        m_hat: Ok(m),
                        shooting_residual: res.residual,
                        warm_start_used: res.warm_start_used,
                        state: Some(res.state),
                    }
                }
                Err(ShootError::NotConverged { residual, .. }) => AntiPeriodicRow {
                    amplitude: k,
                    linf_norm,
                    l2_period_norm,
                    m_hat: Err(format!("shooting did not converge (residual {residual:e})")),
                    shooting_residual: T::lit(residual),
                    warm_start_used: false,
                    state: None,
                },
                Err(e) => return Err(e),
            };
            Ok(row)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let sweep_rows = rows
        .iter()
        .map(|r| SweepRow {
            amplitude: r.amplitude,
            norm_kind,
            forcing_norm: if norm_kind == NormKind::Linf { r.linf_norm } else { r.l2_period_norm },
            m_hat: r.m_hat.clone(),
        })
        .collect();
    let sweep = SweepResult::from_rows(sweep_rows);
    let mut rows = rows;
    rows.sort_by(|a, b| a.amplitude.partial_cmp(&b.amplitude).unwrap_or(std::cmp::Ordering::Equal));
    Ok(AntiPeriodicSweep { rows, sweep })
}

/// Columns `amplitude, linf_norm, l2_period_norm, M_hat, shooting_residual, warm_start_used`.
pub fn write_antiperiodic_csv<T: Real, W: Write>(rows: &[AntiPeriodicRow<T>], out: W) -> Result<(), ShootError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| ShootError::Bound(BoundError::Io(e.to_string()));
    w.write_record(["amplitude", "linf_norm", "l2_period_norm", "M_hat", "shooting_residual", "warm_start_used"])
        .map_err(io)?;
    for r in rows {
        let m = r.m_hat.as_ref().map(|m| fmt_num(*m)).unwrap_or_else(|_| "NaN".into());
        w.write_record([
            fmt_num(r.amplitude),
            fmt_num(r.linf_norm),
            fmt_num(r.l2_period_norm),
            m,
            fmt_num(r.shooting_residual),
            r.warm_start_used.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| ShootError::Bound(BoundError::Io(e.to_string())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::damping::DampingFamily;
    use crate::integrator::Scheme;

    fn cubic_n1() -> (SpectralOperator<f64>, DampingOp<f64>) {
        (SpectralOperator::diagonal(vec![1.0]).unwrap(), DampingOp::new(DampingFamily::AveragedH, 1.0, 2.0).unwrap())
    }

    #[test]
    fn oracle_forcing_is_minus_k_cubed_sine_cubed() {
        let (op, g) = cubic_n1();
        let h = oracle_forcing(&op, &g, 1, 2.0).unwrap();
        for t in [0.1, 0.7, 2.0, 4.5] {
            let want = -8.0 * f64::sin(t).powi(3);
            assert!((h.eval(t).unwrap().coeffs()[0] - want).abs() < 1e-12);
        }
        assert_eq!(h.declared_antiperiod(), Some(std::f64::consts::PI));
        let mixed = DampingOp::sum(vec![g.terms()[0], g.terms()[0]]).unwrap();
        assert!(oracle_forcing(&op, &mixed, 1, 1.0).is_err());
    }

    #[test]
    fn zero_forcing_maps_rest_to_rest() {
        let (op, g) = cubic_n1();
        let h = ForcingSignal::zero(1);
        let p = Problem::new(&op, &g, &h).unwrap();
        let stepper = StepperConfig::for_operator(&op, Scheme::ImplicitMidpoint);
        let s = half_period_map(&p, &State::zero(1), std::f64::consts::PI, &stepper).unwrap();
        assert_eq!(s.u.coeffs(), &[0.0]);
        assert_eq!(s.v.coeffs(), &[0.0]);
    }

    #[test]
    fn oracle_solution_is_found() {
        let (op, g) = cubic_n1();
        let h = oracle_forcing(&op, &g, 1, 1.0).unwrap();
        let p = Problem::new(&op, &g, &h).unwrap();
        let stepper = StepperConfig::for_operator(&op, Scheme::ImplicitMidpoint).with_dt(1e-3);
        let res = shoot(&p, &ShootingConfig::new(std::f64::consts::PI), &stepper).unwrap();
        assert!(res.residual < 1e-9);
        assert!((res.state.u.coeffs()[0] - 1.0).abs() < 1e-6, "{:?}", res.state);
        assert!(res.state.v.coeffs()[0].abs() < 1e-6);
        assert!(res.warm_start_used);
    }

    #[test]
    fn verify_detects_constant_trajectory() {
        let op = SpectralOperator::<f64>::diagonal(vec![4.0]).unwrap();
        let s = State::new(ModalVector::new(vec![0.5]), ModalVector::new(vec![1.5]), 0.0);
        let traj: Vec<_> = (0..=20).map(|i| State { t: i as f64 * 0.1, ..s.clone() }).collect();
        let chk = verify_antiperiodic(&op, &traj, 1.0);
        let norm = (4.0 * 0.25 + 2.25f64).sqrt();
        assert!((chk.residual - 2.0 * norm).abs() < 1e-14);
        assert!((chk.mean_h_norm - 0.5).abs() < 1e-14);
    }

    #[test]
    fn rejects_forcing_that_is_not_antiperiodic() {
        let (op, g) = cubic_n1();
        let h = ForcingSignal::constant(op.mode(1));
        let p = Problem::new(&op, &g, &h).unwrap();
        let stepper = StepperConfig::for_operator(&op, Scheme::ImplicitMidpoint);
        assert!(matches!(shoot(&p, &ShootingConfig::new(1.0), &stepper), Err(ShootError::Forcing(_))));
        let mut cfg = ShootingConfig::new(1.0);
        cfg.picard_relaxation = 0.0;
        assert!(matches!(cfg.validate(), Err(ShootError::InvalidConfig(_))));
    }

    #[test]
    fn sup_norm_sweep_needs_abstract_operator() {
        let op = SpectralOperator::<f64>::wave_1d(2).unwrap();
        let g = DampingOp::linear(1.0).unwrap();
        let stepper = StepperConfig::for_operator(&op, Scheme::ImplicitMidpoint);
        let err = antiperiodic_exponent_sweep(
            &op,
            &g,
            |k| oracle_forcing(&op, &g, 1, k),
            &[1.0, 2.0, 4.0, 8.0],
            NormKind::Linf,
            &ShootingConfig::new(std::f64::consts::PI),
            &stepper,
        )
        .unwrap_err();
        assert!(matches!(err, ShootError::InvalidConfig(_)));
    }
}
