//! Ultimate-bound estimation, amplitude sweeps and growth-exponent fits.
//!
//! The limit superior of `Φ(t) = |u'|² + ‖u‖²` is estimated by the maximum of
//! `Φ` over the tail of a long run. The estimate is only accepted when the
//! tail windows agree with each other and with a run at half the step.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::damping::DampingOp;
use crate::forcing::{ForcingError, ForcingSignal, NormKind};
use crate::integrator::{Problem, State, StepError, StepperConfig};
use crate::scalar::Real;
use crate::spectral::SpectralOperator;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BoundError {
    #[error("invalid bound configuration: {0}")]
    InvalidConfig(String),
    #[error("tail windows disagree: relative spread {spread:e} exceeds {tol:e}")]
    NonStationary { spread: f64, tol: f64 },
    #[error("step refinement changed the estimate from {coarse:e} to {fine:e}")]
    RefinementMismatch { coarse: f64, fine: f64 },
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Forcing(#[from] ForcingError),
    #[error("fit needs {needed} valid rows in the upper half of amplitudes, found {valid}")]
    InsufficientRows { valid: usize, needed: usize },
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConfig<T> {
    /// Total simulated time. `None` means `400 / min(1, Σ c)`.
    pub t_total: Option<T>,
    pub burn_in_fraction: T,
    pub window_count: usize,
    pub window_agreement_tol: T,
    pub dt_refinement_tol: T,
    /// Absolute slack added to both agreement tests so decaying runs pass.
    pub absolute_tol: T,
    pub check_refinement: bool,
}

impl<T: Real> Default for BoundConfig<T> {
    fn default() -> Self {
        Self {
            t_total: None,
            burn_in_fraction: T::lit(0.5),
            window_count: 4,
            window_agreement_tol: T::lit(0.05),
            dt_refinement_tol: T::lit(0.02),
            absolute_tol: T::lit(1e-9),
            check_refinement: true,
        }
    }
}

impl<T: Real> BoundConfig<T> {
    pub fn with_t_total(mut self, t: T) -> Self {
        self.t_total = Some(t);
        self
    }

    pub fn resolved_t_total(&self, g: &DampingOp<T>) -> T {
        self.t_total.unwrap_or_else(|| T::lit(400.0) / g.strength().min(T::one()))
    }

    pub fn validate(&self) -> Result<(), BoundError> {
        let bad = |m: &str| Err(BoundError::InvalidConfig(m.into()));
        if let Some(t) = self.t_total {
            if !(t > T::zero()) || !t.is_finite() {
                return bad("t_total must be positive");
            }
        }
        if !(self.burn_in_fraction > T::zero() && self.burn_in_fraction < T::one()) {
            return bad("burn_in_fraction must lie in (0, 1)");
        }
        if self.window_count < 2 {
            return bad("window_count must be at least 2");
        }
        if !(self.window_agreement_tol > T::zero()) || !(self.dt_refinement_tol > T::zero()) {
            return bad("agreement tolerances must be positive");
        }
        if !(self.absolute_tol >= T::zero()) {
            return bad("absolute_tol must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundEstimate<T> {
    pub m_hat: T,
    pub window_maxima: Vec<T>,
    /// Estimate from the half-step rerun, when it was performed.
    pub refined: Option<T>,
}

fn tail_maxima<T: Real>(
    problem: &Problem<'_, T>,
    state0: &State<T>,
    t_total: T,
    cfg: &BoundConfig<T>,
    stepper: &StepperConfig<T>,
) -> Result<Vec<T>, BoundError> {
    let t0 = state0.t;
    let t_burn = t0 + cfg.burn_in_fraction * t_total;
    let tail = t_total - cfg.burn_in_fraction * t_total;
    let w = cfg.window_count;
    let mut maxima = vec![T::neg_infinity(); w];
    problem
        .run_with(state0, t_total, stepper, 1, |rec, _| {
            if rec.t >= t_burn {
                let pos = ((rec.t - t_burn) / tail * T::lit(w as f64)).floor();
                let idx = pos.to_usize().unwrap_or(0).min(w - 1);
                maxima[idx] = maxima[idx].max(rec.phi);
            }
        })
        .map_err(|(_, e)| e)?;
    if maxima.iter().any(|m| !m.is_finite()) {
        return Err(BoundError::InvalidConfig("a tail window holds no steps; lower dt or raise t_total".into()));
    }
    Ok(maxima)
}

/// Tail-window estimate of `limsup Φ`.
pub fn estimate_ultimate_bound<T: Real>(
    op: &SpectralOperator<T>,
    g: &DampingOp<T>,
    forcing: &ForcingSignal<T>,
    state0: &State<T>,
    cfg: &BoundConfig<T>,
    stepper: &StepperConfig<T>,
) -> Result<BoundEstimate<T>, BoundError> {
    cfg.validate()?;
    let problem = Problem::new(op, g, forcing)?;
    let t_total = cfg.resolved_t_total(g);
    let maxima = tail_maxima(&problem, state0, t_total, cfg, stepper)?;
    let m_hat = maxima.iter().copied().fold(T::zero(), T::max);
    let low = maxima.iter().copied().fold(T::infinity(), T::min);
    if m_hat - low > cfg.window_agreement_tol * m_hat + cfg.absolute_tol {
        return Err(BoundError::NonStationary {
            spread: ((m_hat - low) / m_hat).as_f64(),
            tol: cfg.window_agreement_tol.as_f64(),
        });
    }
    let refined = if cfg.check_refinement {
        let half = stepper.with_dt(stepper.dt * T::lit(0.5));
        let fine = tail_maxima(&problem, state0, t_total, cfg, &half)?.into_iter().fold(T::zero(), T::max);
        if (fine - m_hat).abs() > cfg.dt_refinement_tol * m_hat.max(fine) + cfg.absolute_tol {
            return Err(BoundError::RefinementMismatch { coarse: m_hat.as_f64(), fine: fine.as_f64() });
        }
        Some(fine)
    } else {
        None
    };
    Ok(BoundEstimate { m_hat, window_maxima: maxima, refined })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow<T> {
    pub amplitude: T,
    pub norm_kind: NormKind,
    pub forcing_norm: T,
    /// `Err` carries the reason the row was rejected.
    pub m_hat: Result<T, String>,
}

impl<T: Real> SweepRow<T> {
    pub fn valid(&self) -> Option<(T, T)> {
        match self.m_hat {
            Ok(m) if m > T::zero() && self.forcing_norm > T::zero() && m.is_finite() => Some((self.forcing_norm, m)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit<T> {
    pub slope: T,
    pub intercept: T,
    pub r_squared: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult<T> {
    /// Sorted by amplitude.
    pub rows: Vec<SweepRow<T>>,
    pub fit: Result<LogLogFit<T>, BoundError>,
}

/// Least squares fit of `log y = slope · log x + intercept`.
pub fn fit_loglog<T: Real>(points: &[(T, T)]) -> Option<LogLogFit<T>> {
    if points.len() < 2 {
        return None;
    }
    let n = T::lit(points.len() as f64);
    let logs: Vec<(T, T)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let mx = logs.iter().map(|p| p.0).sum::<T>() / n;
    let my = logs.iter().map(|p| p.1).sum::<T>() / n;
    let sxx = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum::<T>();
    let sxy = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<T>();
    let syy = logs.iter().map(|p| (p.1 - my) * (p.1 - my)).sum::<T>();
    if !(sxx > T::zero()) {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > T::zero() { (sxy * sxy / (sxx * syy)).min(T::one()).max(T::zero()) } else { T::one() };
    Some(LogLogFit { slope, intercept, r_squared })
}

/// Minimum number of valid rows in the upper half for a fit.
pub const MIN_FIT_ROWS: usize = 4;

/// Indices of the upper half (by amplitude) of `rows`.
fn upper_half<T>(rows: &[SweepRow<T>]) -> std::ops::Range<usize> {
    let n = rows.len();
    (n - n.div_ceil(2))..n
}

impl<T: Real> SweepResult<T> {
    /// Sorts rows by amplitude and fits over the valid upper-half rows.
    pub fn from_rows(mut rows: Vec<SweepRow<T>>) -> Self {
        rows.sort_by(|a, b| a.amplitude.partial_cmp(&b.amplitude).unwrap_or(std::cmp::Ordering::Equal));
        let pts: Vec<(T, T)> = rows[upper_half(&rows)].iter().filter_map(SweepRow::valid).collect();
        let fit = if pts.len() < MIN_FIT_ROWS {
            Err(BoundError::InsufficientRows { valid: pts.len(), needed: MIN_FIT_ROWS })
        } else {
            fit_loglog(&pts).ok_or(BoundError::InsufficientRows { valid: 0, needed: MIN_FIT_ROWS })
        };
        Self { rows, fit }
    }
}

/// Runs one bound estimate per amplitude in parallel, starting from
/// `initial(k)`, with forcing `family(k)`.
#[allow(clippy::too_many_arguments)]
pub fn amplitude_sweep<T, F, I>(
    op: &SpectralOperator<T>,
    g: &DampingOp<T>,
    family: F,
    initial: I,
    amplitudes: &[T],
    norm_kind: NormKind,
    cfg: &BoundConfig<T>,
    stepper: &StepperConfig<T>,
) -> Result<SweepResult<T>, BoundError>
where
    T: Real,
    F: Fn(T) -> Result<ForcingSignal<T>, ForcingError> + Sync,
    I: Fn(T) -> State<T> + Sync,
{
    cfg.validate()?;
    stepper.validate()?;
    if amplitudes.len() < MIN_FIT_ROWS {
        return Err(BoundError::InvalidConfig(format!("need at least {MIN_FIT_ROWS} amplitudes")));
    }
    if amplitudes.iter().any(|a| !(*a > T::zero()) || !a.is_finite()) {
        return Err(BoundError::InvalidConfig("amplitudes must be positive".into()));
    }
    let horizon = cfg.resolved_t_total(g);
    let rows = amplitudes
        .par_iter()
        .map(|&k| -> Result<SweepRow<T>, BoundError> {
            let forcing = family(k)?;
            let forcing_norm = forcing.norm(norm_kind, horizon)?;
            let m_hat = estimate_ultimate_bound(op, g, &forcing, &initial(k), cfg, stepper)
                .map(|e| e.m_hat)
                .map_err(|e| e.to_string());
            Ok(SweepRow { amplitude: k, norm_kind, forcing_norm, m_hat })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SweepResult::from_rows(rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck<T> {
    pub exponent: T,
    /// Smallest `K` with `M ≤ K (1 + ‖h‖^e)` on every valid row.
    pub k_fit: T,
    /// Largest growth `K_j / K_i` of the row constant from a weaker to a
    /// stronger forcing within the upper half.
    pub stability: T,
    pub holds: bool,
}

/// Stability threshold for [`check_bound_inequality`].
pub const STABILITY_LIMIT: f64 = 10.0;

/// Tests `M ≤ K (1 + ‖h‖^e)` across a sweep. The bound holds when the
/// row-wise constant does not grow by a factor of 10 or more as the forcing
/// increases over the upper half of the sweep.
pub fn check_bound_inequality<T: Real>(sweep: &SweepResult<T>, exponent: T) -> BoundCheck<T> {
    let row_k = |(n, m): (T, T)| m / (T::one() + n.powf(exponent));
    let k_fit = sweep.rows.iter().filter_map(SweepRow::valid).map(row_k).fold(T::zero(), T::max);
    let mut upper: Vec<(T, T)> = sweep.rows[upper_half(&sweep.rows)].iter().filter_map(SweepRow::valid).collect();
    upper.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut stability = if upper.is_empty() { T::infinity() } else { T::one() };
    let mut running_min = T::infinity();
    for p in upper {
        let k = row_k(p);
        if running_min.is_finite() {
            stability = stability.max(k / running_min);
        }
        running_min = running_min.min(k);
    }
    BoundCheck { exponent, k_fit, stability, holds: stability < T::lit(STABILITY_LIMIT) }
}

pub(crate) fn fmt_num<T: Real>(x: T) -> String {
    format!("{:.16e}", x.as_f64())
}

/// Columns `amplitude, norm_kind, forcing_norm, M_hat, status`.
pub fn write_sweep_csv<T: Real, W: Write>(sweep: &SweepResult<T>, out: W) -> Result<(), BoundError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| BoundError::Io(e.to_string());
    w.write_record(["amplitude", "norm_kind", "forcing_norm", "M_hat", "status"]).map_err(io)?;
    for r in &sweep.rows {
        let (m, status) = match &r.m_hat {
            Ok(m) => (fmt_num(*m), "ok".to_string()),
            Err(e) => ("NaN".to_string(), format!("failed: {e}")),
        };
        w.write_record([fmt_num(r.amplitude), r.norm_kind.as_str().into(), fmt_num(r.forcing_norm), m, status])
            .map_err(io)?;
    }
    w.flush().map_err(|e| BoundError::Io(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub r_squared: Option<f64>,
    pub fit_error: Option<String>,
    pub checks: Vec<BoundCheck<f64>>,
}

impl FitSummary {
    pub fn new<T: Real>(sweep: &SweepResult<T>, exponents: &[T]) -> Self {
        let (slope, intercept, r_squared, fit_error) = match &sweep.fit {
            Ok(f) => (Some(f.slope.as_f64()), Some(f.intercept.as_f64()), Some(f.r_squared.as_f64()), None),
            Err(e) => (None, None, None, Some(e.to_string())),
        };
        let checks = exponents
            .iter()
            .map(|&e| {
                let c = check_bound_inequality(sweep, e);
                BoundCheck {
                    exponent: c.exponent.as_f64(),
                    k_fit: c.k_fit.as_f64(),
                    stability: c.stability.as_f64(),
                    holds: c.holds,
                }
            })
            .collect();
        Self { slope, intercept, r_squared, fit_error, checks }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}
