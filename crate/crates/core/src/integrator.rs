//! Implicit time stepping for `u'' + A u + g(u') = h(t)` written as the
//! first-order system `U' + 𝒜U = F` on `V × H`.
//!
//! Both schemes reduce each step to one monotone system
//! `(I + a A) w + b g(w) = r`, which is a resolvent evaluation of `𝒜`:
//!
//! * backward Euler: `a = dt²`, `b = dt`, `w = v⁺`
//! * implicit midpoint: `a = dt²/4`, `b = dt/2`, `w = (v + v⁺)/2`

use serde::{Deserialize, Serialize};

use crate::damping::{DampingOp, Weighting};
use crate::forcing::{ForcingError, ForcingSignal};
use crate::linalg;
use crate::scalar::Real;
use crate::spectral::{ModalVector, SpectralError, SpectralOperator};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StepError {
    #[error("invalid stepper configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Forcing(#[from] ForcingError),
    #[error("implicit solve did not converge at t = {t}: residual {residual:e} after {iterations} iterations")]
    NotConverged { t: f64, residual: f64, iterations: usize },
    #[error("operation requires the backward Euler scheme")]
    RequiresBackwardEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    BackwardEuler,
    ImplicitMidpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    FixedPoint,
    ScalarBisection,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperConfig<T> {
    pub dt: T,
    pub scheme: Scheme,
    /// Residual tolerance of the implicit solve, relative to `1 + |r|_H`.
    pub newton_tol: T,
    pub newton_max_iter: usize,
    pub fallback: Fallback,
}

impl<T: Real> StepperConfig<T> {
    /// `dt = min(0.01, 0.1 / sqrt(λ_N))` so the fastest mode is resolved.
    pub fn for_operator(op: &SpectralOperator<T>, scheme: Scheme) -> Self {
        let fastest = *op.lambda().last().expect("operator has modes");
        let dt = T::lit(0.01).min(T::lit(0.1) / fastest.sqrt());
        Self { dt, scheme, newton_tol: T::lit(1e-12), newton_max_iter: 50, fallback: Fallback::FixedPoint }
    }

    pub fn with_dt(mut self, dt: T) -> Self {
        self.dt = dt;
        self
    }

    pub fn validate(&self) -> Result<(), StepError> {
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(StepError::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.newton_tol > T::zero()) {
            return Err(StepError::InvalidConfig("newton_tol must be positive".into()));
        }
        if self.newton_max_iter == 0 {
            return Err(StepError::InvalidConfig("newton_max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct State<T> {
    pub u: ModalVector<T>,
    pub v: ModalVector<T>,
    pub t: T,
}

impl<T: Real> State<T> {
    pub fn new(u: ModalVector<T>, v: ModalVector<T>, t: T) -> Self {
        Self { u, v, t }
    }

    pub fn zero(n: usize) -> Self {
        Self { u: ModalVector::zeros(n), v: ModalVector::zeros(n), t: T::zero() }
    }

    pub fn negated(&self) -> Self {
        Self { u: -&self.u, v: -&self.v, t: self.t }
    }

    /// Flattened `[u; v]`.
    pub fn to_flat(&self) -> Vec<T> {
        self.u.coeffs().iter().chain(self.v.coeffs()).copied().collect()
    }

    pub fn from_flat(flat: &[T], t: T) -> Self {
        let n = flat.len() / 2;
        Self { u: ModalVector::new(flat[..n].to_vec()), v: ModalVector::new(flat[n..].to_vec()), t }
    }
}

/// Energy `E = ½(|v|² + ‖u‖²)` and `Φ = 2E`, with work and dissipation
/// accumulated since the previous record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRecord<T> {
    pub t: T,
    pub energy: T,
    pub phi: T,
    pub work: T,
    pub dissipation: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult<T> {
    pub state: State<T>,
    /// `dt (h, w)` at the scheme's evaluation point.
    pub work: T,
    /// `dt ⟨g(w), w⟩` at the scheme's evaluation point.
    pub dissipation: T,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory<T> {
    pub records: Vec<EnergyRecord<T>>,
    pub states: Vec<State<T>>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("run aborted after {} records: {source}", partial.records.len())]
pub struct RunError<T: Real> {
    pub partial: Trajectory<T>,
    #[source]
    pub source: StepError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub observe_every: usize,
    pub keep_states: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { observe_every: 1, keep_states: false }
    }
}

/// `sqrt(‖u_a − u_b‖_V² + |v_a − v_b|_H²)`.
pub fn hilbert_distance<T: Real>(op: &SpectralOperator<T>, a: &State<T>, b: &State<T>) -> T {
    let du: Vec<T> = a.u.coeffs().iter().zip(b.u.coeffs()).map(|(x, y)| *x - *y).collect();
    let dv: Vec<T> = a.v.coeffs().iter().zip(b.v.coeffs()).map(|(x, y)| *x - *y).collect();
    let nu = op.norm_v_raw(&du);
    (nu * nu + linalg::dot(&dv, &dv)).sqrt()
}

/// `sqrt(‖u‖_V² + |v|_H²)`.
pub fn hilbert_norm<T: Real>(op: &SpectralOperator<T>, s: &State<T>) -> T {
    let nu = op.norm_v_raw(s.u.coeffs());
    (nu * nu + linalg::dot(s.v.coeffs(), s.v.coeffs())).sqrt()
}

/// One damped wave problem: operator, damping and forcing.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a, T> {
    pub op: &'a SpectralOperator<T>,
    pub damping: &'a DampingOp<T>,
    pub forcing: &'a ForcingSignal<T>,
}

impl<'a, T: Real> Problem<'a, T> {
    pub fn new(
        op: &'a SpectralOperator<T>,
        damping: &'a DampingOp<T>,
        forcing: &'a ForcingSignal<T>,
    ) -> Result<Self, StepError> {
        op.check_dim(forcing.dim())?;
        Ok(Self { op, damping, forcing })
    }

    pub fn with_forcing<'b>(&self, forcing: &'b ForcingSignal<T>) -> Problem<'b, T>
    where
        'a: 'b,
    {
        Problem { op: self.op, damping: self.damping, forcing }
    }

    /// `(E, Φ)` with `Φ = 2E` exactly.
    pub fn energy(&self, s: &State<T>) -> (T, T) {
        let nu = self.op.norm_v_raw(s.u.coeffs());
        let phi = linalg::dot(s.v.coeffs(), s.v.coeffs()) + nu * nu;
        (phi / T::lit(2.0), phi)
    }

    fn check_state(&self, s: &State<T>) -> Result<(), StepError> {
        self.op.check_dim(s.u.len())?;
        self.op.check_dim(s.v.len())?;
        Ok(())
    }

    pub fn step(&self, state: &State<T>, cfg: &StepperConfig<T>) -> Result<State<T>, StepError> {
        Ok(self.step_with_ledger(state, cfg)?.state)
    }

    pub fn step_with_ledger(&self, state: &State<T>, cfg: &StepperConfig<T>) -> Result<StepResult<T>, StepError> {
        cfg.validate()?;
        self.check_state(state)?;
        let n = self.op.num_modes();
        let dt = cfg.dt;
        let half = T::lit(0.5);
        let (a, b, t_eval) = match cfg.scheme {
            Scheme::BackwardEuler => (dt * dt, dt, state.t + dt),
            Scheme::ImplicitMidpoint => (dt * dt / T::lit(4.0), dt * half, state.t + dt * half),
        };
        let mut h = vec![T::zero(); n];
        self.forcing.eval_into(t_eval, &mut h)?;
        let lambda = self.op.lambda();
        let u = state.u.coeffs();
        let v = state.v.coeffs();
        let r: Vec<T> = (0..n).map(|k| v[k] + b * (h[k] - lambda[k] * u[k])).collect();
        let w = self.solve_resolvent(a, b, &r, v, cfg, state.t)?;

        let (u_new, v_new): (Vec<T>, Vec<T>) = match cfg.scheme {
            Scheme::BackwardEuler => ((0..n).map(|k| u[k] + dt * w[k]).collect(), w.clone()),
            Scheme::ImplicitMidpoint => (
                (0..n).map(|k| u[k] + dt * w[k]).collect(),
                (0..n).map(|k| w[k] + w[k] - v[k]).collect(),
            ),
        };
        let work = dt * linalg::dot(&h, &w);
        let dissipation = dt * self.damping.dissipation_raw(self.op, &w);
        Ok(StepResult {
            state: State { u: ModalVector::new(u_new), v: ModalVector::new(v_new), t: state.t + dt },
            work,
            dissipation,
        })
    }

    fn residual(&self, a: T, b: T, r: &[T], w: &[T], g: &mut [T], out: &mut [T]) -> T {
        self.damping.apply_into(self.op, w, g);
        let lambda = self.op.lambda();
        for k in 0..w.len() {
            out[k] = w[k] + a * lambda[k] * w[k] + b * g[k] - r[k];
        }
        linalg::norm2(out)
    }

    /// Solves `(I + a A) w + b g(w) = r`.
    fn solve_resolvent(
        &self,
        a: T,
        b: T,
        r: &[T],
        guess: &[T],
        cfg: &StepperConfig<T>,
        t: T,
    ) -> Result<Vec<T>, StepError> {
        let tol = cfg.newton_tol.max(T::lit(16.0) * T::epsilon()) * (T::one() + linalg::norm2(r));
        let scalar = self.damping.scalar_weighting();
        let first = match scalar {
            Some(wt) => self.solve_scalar(a, b, r, wt, tol),
            None => Err(T::infinity()),
        };
        let start = match first {
            Ok(w) => return Ok(w),
            Err(_) => guess.to_vec(),
        };
        match self.solve_newton(a, b, r, &start, tol, cfg.newton_max_iter) {
            Ok(w) => Ok(w),
            Err((w_last, res, iters)) => {
                let fallback = match (cfg.fallback, scalar) {
                    (Fallback::ScalarBisection, Some(wt)) => self.solve_scalar(a, b, r, wt, tol),
                    (Fallback::ScalarBisection, None) => Err(res),
                    (Fallback::FixedPoint, _) => self.solve_fixed_point(a, b, r, &w_last, tol, 20 * cfg.newton_max_iter),
                };
                fallback.map_err(|residual| StepError::NotConverged {
                    t: t.as_f64(),
                    residual: residual.min(res).as_f64(),
                    iterations: iters,
                })
            }
        }
    }

    /// Norm-factored damping: `w_k = r_k / (1 + aλ_k + b d_k G(s))` with
    /// `s = ‖w‖_d` the unique root of an increasing scalar function.
    fn solve_scalar(&self, a: T, b: T, r: &[T], wt: Weighting, tol: T) -> Result<Vec<T>, T> {
        let n = r.len();
        let weights: Vec<T> = match wt {
            Weighting::H => vec![T::one(); n],
            Weighting::H10 => self.op.mu().to_vec(),
        };
        let lambda = self.op.lambda();
        let den = |s: T, k: usize| T::one() + a * lambda[k] + b * weights[k] * self.damping.radial_factor(s);
        let phi = |s: T| -> T { (0..n).map(|k| weights[k] * (r[k] / den(s, k)).powi(2)).sum::<T>().sqrt() };
        let mut lo = T::zero();
        let mut hi = phi(T::zero());
        if hi > T::zero() {
            for _ in 0..200 {
                let mid = (lo + hi) * T::lit(0.5);
                if mid <= lo || mid >= hi {
                    break;
                }
                if mid - phi(mid) > T::zero() {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
        }
        let s = (lo + hi) * T::lit(0.5);
        let w: Vec<T> = (0..n).map(|k| r[k] / den(s, k)).collect();
        let mut g = vec![T::zero(); n];
        let mut res = vec![T::zero(); n];
        let rn = self.residual(a, b, r, &w, &mut g, &mut res);
        if rn <= tol {
            Ok(w)
        } else {
            Err(rn)
        }
    }

    fn solve_newton(
        &self,
        a: T,
        b: T,
        r: &[T],
        start: &[T],
        tol: T,
        max_iter: usize,
    ) -> Result<Vec<T>, (Vec<T>, T, usize)> {
        let n = r.len();
        let lambda = self.op.lambda();
        let mut w = start.to_vec();
        let mut g = vec![T::zero(); n];
        let mut res = vec![T::zero(); n];
        let mut rn = self.residual(a, b, r, &w, &mut g, &mut res);
        let mut trial = vec![T::zero(); n];
        let mut trial_res = vec![T::zero(); n];
        let mut polish = 0;
        for iter in 0..max_iter + 3 {
            let converged = rn <= tol;
            if converged && (polish >= 3 || rn == T::zero()) {
                return Ok(w);
            }
            if !converged && iter >= max_iter {
                return Err((w, rn, iter));
            }
            let mut jac = vec![T::zero(); n * n];
            for k in 0..n {
                jac[k * n + k] = T::one() + a * lambda[k];
            }
            self.damping.add_jacobian(self.op, &w, b, &mut jac);
            let mut delta: Vec<T> = res.iter().map(|x| -*x).collect();
            if linalg::lu_solve(&mut jac, &mut delta).is_err() {
                return if converged { Ok(w) } else { Err((w, rn, iter)) };
            }
            if converged {
                // polishing: accept full steps only while the residual drops
                polish += 1;
                for k in 0..n {
                    trial[k] = w[k] + delta[k];
                }
                let tn = self.residual(a, b, r, &trial, &mut g, &mut trial_res);
                if tn < rn {
                    std::mem::swap(&mut w, &mut trial);
                    std::mem::swap(&mut res, &mut trial_res);
                    rn = tn;
                    continue;
                }
                return Ok(w);
            }
            let mut step = T::one();
            loop {
                for k in 0..n {
                    trial[k] = w[k] + step * delta[k];
                }
                let tn = self.residual(a, b, r, &trial, &mut g, &mut trial_res);
                if tn <= (T::one() - T::lit(1e-4) * step) * rn {
                    std::mem::swap(&mut w, &mut trial);
                    std::mem::swap(&mut res, &mut trial_res);
                    rn = tn;
                    break;
                }
                step = step * T::lit(0.5);
                if step < T::lit(1e-10) {
                    return Err((w, rn, iter));
                }
            }
        }
        if rn <= tol {
            Ok(w)
        } else {
            Err((w, rn, max_iter))
        }
    }

    /// Damped Picard iteration `w ← (I + aA)⁻¹ (r − b g(w))`.
    fn solve_fixed_point(&self, a: T, b: T, r: &[T], start: &[T], tol: T, max_iter: usize) -> Result<Vec<T>, T> {
        let n = r.len();
        let lambda = self.op.lambda();
        let mut w = start.to_vec();
        let mut g = vec![T::zero(); n];
        let mut res = vec![T::zero(); n];
        let mut best = T::infinity();
        let relax = T::lit(0.5);
        for _ in 0..max_iter {
            let rn = self.residual(a, b, r, &w, &mut g, &mut res);
            best = best.min(rn);
            if rn <= tol {
                return Ok(w);
            }
            for k in 0..n {
                let next = (r[k] - b * g[k]) / (T::one() + a * lambda[k]);
                w[k] = (T::one() - relax) * w[k] + relax * next;
            }
        }
        Err(best)
    }

    /// Integrates to `t_final` (rounded to whole steps), calling `observe`
    /// for the initial state and every `observe_every` steps plus the last.
    pub fn run_with<F>(
        &self,
        state0: &State<T>,
        t_final: T,
        cfg: &StepperConfig<T>,
        observe_every: usize,
        mut observe: F,
    ) -> Result<State<T>, (State<T>, StepError)>
    where
        F: FnMut(&EnergyRecord<T>, &State<T>),
    {
        if let Err(e) = cfg.validate().and_then(|_| self.check_state(state0)) {
            return Err((state0.clone(), e));
        }
        if !(t_final > T::zero()) || observe_every == 0 {
            return Err((
                state0.clone(),
                StepError::InvalidConfig("need t_final > 0 and observe_every >= 1".into()),
            ));
        }
        let steps = (t_final / cfg.dt).round().to_usize().unwrap_or(1).max(1);
        let (e0, p0) = self.energy(state0);
        observe(&EnergyRecord { t: state0.t, energy: e0, phi: p0, work: T::zero(), dissipation: T::zero() }, state0);
        let mut state = state0.clone();
        let (mut work, mut diss) = (T::zero(), T::zero());
        for i in 1..=steps {
            let out = match self.step_with_ledger(&state, cfg) {
                Ok(out) => out,
                Err(e) => return Err((state, e)),
            };
            state = out.state;
            work = work + out.work;
            diss = diss + out.dissipation;
            if i % observe_every == 0 || i == steps {
                let (e, p) = self.energy(&state);
                observe(&EnergyRecord { t: state.t, energy: e, phi: p, work, dissipation: diss }, &state);
                work = T::zero();
                diss = T::zero();
            }
        }
        Ok(state)
    }

    pub fn run(
        &self,
        state0: &State<T>,
        t_final: T,
        cfg: &StepperConfig<T>,
        opts: RunOptions,
    ) -> Result<Trajectory<T>, RunError<T>> {
        let mut traj = Trajectory::default();
        let keep = opts.keep_states;
        let res = self.run_with(state0, t_final, cfg, opts.observe_every, |rec, s| {
            traj.records.push(*rec);
            if keep {
                traj.states.push(s.clone());
            }
        });
        match res {
            Ok(_) => Ok(traj),
            Err((_, source)) => Err(RunError { partial: traj, source }),
        }
    }
}

/// Largest per-step ratio `dist_{n+1} / dist_n` of two backward Euler
/// trajectories driven by the same forcing. Steps with `dist_n = 0` are skipped.
pub fn contraction_check<T: Real>(
    problem: &Problem<'_, T>,
    a: &State<T>,
    b: &State<T>,
    t_final: T,
    cfg: &StepperConfig<T>,
) -> Result<T, StepError> {
    if cfg.scheme != Scheme::BackwardEuler {
        return Err(StepError::RequiresBackwardEuler);
    }
    let steps = (t_final / cfg.dt).round().to_usize().unwrap_or(1).max(1);
    let (mut sa, mut sb) = (a.clone(), b.clone());
    let mut dist = hilbert_distance(problem.op, &sa, &sb);
    let mut worst = T::zero();
    for _ in 0..steps {
        sa = problem.step(&sa, cfg)?;
        sb = problem.step(&sb, cfg)?;
        let next = hilbert_distance(problem.op, &sa, &sb);
        if dist > T::zero() {
            worst = worst.max(next / dist);
        }
        dist = next;
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForcedContraction<T> {
    pub initial_distance: T,
    pub final_distance: T,
    /// `Σ dt |h_a − h_b|_H` at the scheme's forcing evaluation times.
    pub forcing_integral: T,
    /// `min_n (dist_0 + Σ_{≤n} dt|h_a − h_b| − dist_n)`.
    pub min_slack: T,
}

/// Discrete form of `|U(t) − Û(t)| <= |U₀ − Û₀| + ∫|F − F̂|` for two
/// backward Euler trajectories with different forcings.
pub fn forced_contraction_check<T: Real>(
    pa: &Problem<'_, T>,
    pb: &Problem<'_, T>,
    a: &State<T>,
    b: &State<T>,
    t_final: T,
    cfg: &StepperConfig<T>,
) -> Result<ForcedContraction<T>, StepError> {
    if cfg.scheme != Scheme::BackwardEuler {
        return Err(StepError::RequiresBackwardEuler);
    }
    let steps = (t_final / cfg.dt).round().to_usize().unwrap_or(1).max(1);
    let (mut sa, mut sb) = (a.clone(), b.clone());
    let d0 = hilbert_distance(pa.op, &sa, &sb);
    let mut integral = T::zero();
    let mut min_slack = T::infinity();
    let mut dist = d0;
    for _ in 0..steps {
        let t_next = sa.t + cfg.dt;
        let diff = &pa.forcing.eval(t_next)? - &pb.forcing.eval(t_next)?;
        integral = integral + cfg.dt * linalg::norm2(diff.coeffs());
        sa = pa.step(&sa, cfg)?;
        sb = pb.step(&sb, cfg)?;
        dist = hilbert_distance(pa.op, &sa, &sb);
        min_slack = min_slack.min(d0 + integral - dist);
    }
    Ok(ForcedContraction { initial_distance: d0, final_distance: dist, forcing_integral: integral, min_slack })
}
