//! Time-dependent right-hand sides `h(t)` with modal profiles and the norm
//! functionals used to measure forcing size.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::scalar::Real;
use crate::spectral::ModalVector;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ForcingError {
    #[error("profile dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("time {t} outside sampled range [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("invalid samples: {0}")]
    BadSamples(String),
    #[error("invalid forcing parameter: {0}")]
    BadParameter(String),
    #[error("signal is not {tau}-anti-periodic (defect {defect:e})")]
    NotAntiPeriodic { tau: f64, defect: f64 },
    #[error("csv: {0}")]
    Csv(String),
}

/// Which functional measures the size of a forcing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    /// Stepanov norm `sup_t (∫_t^{t+1} |h|²)^{1/2}`.
    S2,
    Linf,
    /// `(∫_0^τ |h|²)^{1/2}` over one anti-period.
    L2Period,
}

impl NormKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NormKind::S2 => "s2",
            NormKind::Linf => "linf",
            NormKind::L2Period => "l2_period",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ForcingKind<T> {
    Zero,
    Constant { profile: ModalVector<T> },
    /// `amplitude sin(ω t + phase) profile`
    Sinusoidal { profile: ModalVector<T>, amplitude: T, omega: T, phase: T },
    /// `amplitude |sin ωt|^β sign(sin ωt) profile`
    PowerOfSine { profile: ModalVector<T>, amplitude: T, omega: T, exponent: T },
    /// Piecewise linear interpolation of samples.
    Sampled { times: Vec<T>, values: Vec<ModalVector<T>> },
    Sum(Vec<ForcingKind<T>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForcingSignal<T> {
    kind: ForcingKind<T>,
    dim: usize,
    declared_antiperiod: Option<T>,
}

fn check_kind<T: Real>(kind: &ForcingKind<T>, dim: usize) -> Result<(), ForcingError> {
    let check_profile = |p: &ModalVector<T>| {
        if p.len() != dim {
            Err(ForcingError::DimensionMismatch { expected: dim, got: p.len() })
        } else if p.coeffs().iter().any(|x| !x.is_finite()) {
            Err(ForcingError::BadParameter("profile has non-finite entries".into()))
        } else {
            Ok(())
        }
    };
    let positive = |name: &str, x: T| {
        if x > T::zero() && x.is_finite() {
            Ok(())
        } else {
            Err(ForcingError::BadParameter(format!("{name} must be positive, got {x}")))
        }
    };
    let finite = |name: &str, x: T| {
        if x.is_finite() {
            Ok(())
        } else {
            Err(ForcingError::BadParameter(format!("{name} must be finite")))
        }
    };
    match kind {
        ForcingKind::Zero => Ok(()),
        ForcingKind::Constant { profile } => check_profile(profile),
        ForcingKind::Sinusoidal { profile, amplitude, omega, phase } => {
            check_profile(profile)?;
            finite("amplitude", *amplitude)?;
            finite("phase", *phase)?;
            positive("omega", *omega)
        }
        ForcingKind::PowerOfSine { profile, amplitude, omega, exponent } => {
            check_profile(profile)?;
            finite("amplitude", *amplitude)?;
            positive("omega", *omega)?;
            positive("exponent", *exponent)
        }
        ForcingKind::Sampled { times, values } => {
            if times.len() < 2 || times.len() != values.len() {
                return Err(ForcingError::BadSamples(format!(
                    "need at least two samples with matching values ({} times, {} values)",
                    times.len(),
                    values.len()
                )));
            }
            if times.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(ForcingError::BadSamples("times must be strictly increasing".into()));
            }
            values.iter().try_for_each(check_profile)
        }
        ForcingKind::Sum(parts) => parts.iter().try_for_each(|p| check_kind(p, dim)),
    }
}

fn add_scaled<T: Real>(out: &mut [T], profile: &ModalVector<T>, s: T) {
    for (o, p) in out.iter_mut().zip(profile.coeffs()) {
        *o = *o + s * *p;
    }
}

fn sampled_range<T: Real>(kind: &ForcingKind<T>) -> Option<(T, T)> {
    match kind {
        ForcingKind::Sampled { times, .. } => Some((times[0], *times.last().unwrap())),
        ForcingKind::Sum(parts) => parts.iter().filter_map(sampled_range).reduce(|a, b| (a.0.max(b.0), a.1.min(b.1))),
        _ => None,
    }
}

fn max_omega<T: Real>(kind: &ForcingKind<T>) -> T {
    match kind {
        ForcingKind::Sinusoidal { omega, .. } | ForcingKind::PowerOfSine { omega, .. } => *omega,
        ForcingKind::Sum(parts) => parts.iter().map(max_omega).fold(T::zero(), T::max),
        _ => T::zero(),
    }
}

impl<T: Real> ForcingKind<T> {
    fn eval_into(&self, t: T, out: &mut [T]) -> Result<(), ForcingError> {
        match self {
            ForcingKind::Zero => {}
            ForcingKind::Constant { profile } => add_scaled(out, profile, T::one()),
            ForcingKind::Sinusoidal { profile, amplitude, omega, phase } => {
                add_scaled(out, profile, *amplitude * (*omega * t + *phase).sin())
            }
            ForcingKind::PowerOfSine { profile, amplitude, omega, exponent } => {
                add_scaled(out, profile, *amplitude * (*omega * t).sin().signed_pow(*exponent))
            }
            ForcingKind::Sampled { times, values } => {
                let (start, end) = (times[0], *times.last().unwrap());
                if !(t >= start && t <= end) {
                    return Err(ForcingError::OutOfRange { t: t.as_f64(), start: start.as_f64(), end: end.as_f64() });
                }
                let i = times.partition_point(|&s| s <= t).clamp(1, times.len() - 1);
                let (t0, t1) = (times[i - 1], times[i]);
                let theta = (t - t0) / (t1 - t0);
                add_scaled(out, &values[i - 1], T::one() - theta);
                add_scaled(out, &values[i], theta);
            }
            ForcingKind::Sum(parts) => {
                for p in parts {
                    p.eval_into(t, out)?;
                }
            }
        }
        Ok(())
    }

    fn scaled(&self, s: T) -> Self {
        match self {
            ForcingKind::Zero => ForcingKind::Zero,
            ForcingKind::Constant { profile } => ForcingKind::Constant { profile: profile.scaled(s) },
            ForcingKind::Sinusoidal { profile, amplitude, omega, phase } => ForcingKind::Sinusoidal {
                profile: profile.clone(),
                amplitude: *amplitude * s,
                omega: *omega,
                phase: *phase,
            },
            ForcingKind::PowerOfSine { profile, amplitude, omega, exponent } => ForcingKind::PowerOfSine {
                profile: profile.clone(),
                amplitude: *amplitude * s,
                omega: *omega,
                exponent: *exponent,
            },
            ForcingKind::Sampled { times, values } => ForcingKind::Sampled {
                times: times.clone(),
                values: values.iter().map(|v| v.scaled(s)).collect(),
            },
            ForcingKind::Sum(parts) => ForcingKind::Sum(parts.iter().map(|p| p.scaled(s)).collect()),
        }
    }
}

impl<T: Real> ForcingSignal<T> {
    pub fn new(kind: ForcingKind<T>, dim: usize) -> Result<Self, ForcingError> {
        check_kind(&kind, dim)?;
        Ok(Self { kind, dim, declared_antiperiod: None })
    }

    pub fn zero(dim: usize) -> Self {
        Self { kind: ForcingKind::Zero, dim, declared_antiperiod: None }
    }

    pub fn constant(profile: ModalVector<T>) -> Self {
        let dim = profile.len();
        Self { kind: ForcingKind::Constant { profile }, dim, declared_antiperiod: None }
    }

    pub fn sinusoidal(profile: ModalVector<T>, amplitude: T, omega: T, phase: T) -> Result<Self, ForcingError> {
        let dim = profile.len();
        Self::new(ForcingKind::Sinusoidal { profile, amplitude, omega, phase }, dim)
    }

    pub fn power_of_sine(profile: ModalVector<T>, amplitude: T, omega: T, exponent: T) -> Result<Self, ForcingError> {
        let dim = profile.len();
        Self::new(ForcingKind::PowerOfSine { profile, amplitude, omega, exponent }, dim)
    }

    /// `Σ_j amplitude/(j+1) sin((2j+1) ω t + 0.7 j) φ_{(j mod N)+1}`: odd
    /// harmonics only, so it is `π/ω`-anti-periodic.
    pub fn odd_harmonics(dim: usize, amplitude: T, omega: T, count: usize) -> Result<Self, ForcingError> {
        if count == 0 {
            return Err(ForcingError::BadParameter("need at least one harmonic".into()));
        }
        let parts = (0..count)
            .map(|j| ForcingKind::Sinusoidal {
                profile: ModalVector::mode(dim, j % dim + 1),
                amplitude: amplitude / T::lit((j + 1) as f64),
                omega: omega * T::lit((2 * j + 1) as f64),
                phase: T::lit(0.7 * j as f64),
            })
            .collect();
        Self::new(ForcingKind::Sum(parts), dim)?.with_antiperiod(T::PI() / omega)
    }

    /// Reads `t, coeff_1, ..., coeff_N` rows (with a header line).
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, ForcingError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut dim = None;
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| ForcingError::Csv(e.to_string()))?;
            let nums = rec
                .iter()
                .map(|s| s.parse::<f64>().map(T::lit))
                .collect::<Result<Vec<T>, _>>()
                .map_err(|e| ForcingError::Csv(format!("row {}: {e}", line + 1)))?;
            if nums.len() < 2 {
                return Err(ForcingError::Csv(format!("row {}: need t and at least one coefficient", line + 1)));
            }
            let d = *dim.get_or_insert(nums.len() - 1);
            if nums.len() - 1 != d {
                return Err(ForcingError::Csv(format!("row {}: ragged row", line + 1)));
            }
            times.push(nums[0]);
            values.push(ModalVector::new(nums[1..].to_vec()));
        }
        let dim = dim.ok_or_else(|| ForcingError::Csv("no data rows".into()))?;
        Self::new(ForcingKind::Sampled { times, values }, dim)
    }

    /// Declares and verifies `h(t + τ) = -h(t)` on a grid over one anti-period.
    pub fn with_antiperiod(mut self, tau: T) -> Result<Self, ForcingError> {
        if !(tau > T::zero()) || !tau.is_finite() {
            return Err(ForcingError::BadParameter(format!("anti-period must be positive, got {tau}")));
        }
        let (start, stop) = match sampled_range(&self.kind) {
            Some((a, b)) => {
                if b - a < tau {
                    return Err(ForcingError::BadSamples("samples do not cover one anti-period".into()));
                }
                (a, (a + tau).min(b - tau))
            }
            None => (T::zero(), tau),
        };
        let steps = 2000;
        let mut defect = T::zero();
        let mut sup = T::zero();
        let mut a = vec![T::zero(); self.dim];
        let mut b = vec![T::zero(); self.dim];
        for i in 0..=steps {
            let t = start + (stop - start) * T::lit(i as f64 / steps as f64);
            a.iter_mut().for_each(|x| *x = T::zero());
            b.iter_mut().for_each(|x| *x = T::zero());
            self.kind.eval_into(t, &mut a)?;
            self.kind.eval_into(t + tau, &mut b)?;
            sup = sup.max(linalg::norm2(&a)).max(linalg::norm2(&b));
            let d: T = a.iter().zip(&b).map(|(x, y)| (*x + *y) * (*x + *y)).sum::<T>().sqrt();
            defect = defect.max(d);
        }
        if defect >= T::lit(1e-9) * (T::one() + sup) {
            return Err(ForcingError::NotAntiPeriodic { tau: tau.as_f64(), defect: defect.as_f64() });
        }
        self.declared_antiperiod = Some(tau);
        Ok(self)
    }

    pub fn kind(&self) -> &ForcingKind<T> {
        &self.kind
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn declared_antiperiod(&self) -> Option<T> {
        self.declared_antiperiod
    }

    pub fn eval(&self, t: T) -> Result<ModalVector<T>, ForcingError> {
        let mut out = vec![T::zero(); self.dim];
        self.kind.eval_into(t, &mut out)?;
        Ok(ModalVector::new(out))
    }

    /// Overwrites `out` with `h(t)`.
    pub fn eval_into(&self, t: T, out: &mut [T]) -> Result<(), ForcingError> {
        out.iter_mut().for_each(|x| *x = T::zero());
        self.kind.eval_into(t, out)
    }

    /// Same signal with every amplitude multiplied by `s`.
    pub fn scaled(&self, s: T) -> Self {
        Self { kind: self.kind.scaled(s), dim: self.dim, declared_antiperiod: self.declared_antiperiod }
    }

    /// A period of the signal when one is known analytically.
    pub fn period(&self) -> Option<T> {
        if let Some(tau) = self.declared_antiperiod {
            return Some(tau + tau);
        }
        match &self.kind {
            ForcingKind::Zero | ForcingKind::Constant { .. } => Some(T::one()),
            ForcingKind::Sinusoidal { omega, .. } | ForcingKind::PowerOfSine { omega, .. } => {
                Some(T::lit(2.0) * T::PI() / *omega)
            }
            _ => None,
        }
    }

    fn grid_step(&self) -> T {
        let w = max_omega(&self.kind);
        let base = if w > T::zero() { T::one().min(T::lit(2.0) * T::PI() / w) } else { T::one() };
        T::lit(1e-3) * base
    }

    fn norm_at(&self, t: T, buf: &mut [T]) -> T {
        buf.iter_mut().for_each(|x| *x = T::zero());
        // callers stay inside the sampled range
        let _ = self.kind.eval_into(t, buf);
        linalg::norm2(buf)
    }

    /// Window start range `[a, b]` over which suprema are searched.
    fn search_range(&self, horizon: T) -> (T, T) {
        match sampled_range(&self.kind) {
            Some((a, b)) => (a, b.min(a + horizon)),
            None => match self.period() {
                Some(p) => (T::zero(), p),
                None => (T::zero(), horizon),
            },
        }
    }

    /// Stepanov norm. Periodic signals are searched over one period; other
    /// signals over window starts in `[0, horizon - 1]`.
    pub fn s2_norm(&self, horizon: T) -> Result<T, ForcingError> {
        if !(horizon >= T::one()) {
            return Err(ForcingError::BadParameter(format!("S2 horizon must be >= 1, got {horizon}")));
        }
        match &self.kind {
            ForcingKind::Zero => return Ok(T::zero()),
            ForcingKind::Constant { profile } => return Ok(linalg::norm2(profile.coeffs())),
            ForcingKind::Sinusoidal { profile, amplitude, omega, .. } => {
                let w = *omega;
                let mean = (T::one() + w.sin().abs() / w) / T::lit(2.0);
                return Ok(amplitude.abs() * linalg::norm2(profile.coeffs()) * mean.sqrt());
            }
            _ => {}
        }
        let (a, b) = self.search_range(horizon);
        let periodic = sampled_range(&self.kind).is_none() && self.period().is_some();
        let last_start = if periodic { b } else { b - T::one() };
        if last_start < a {
            return Err(ForcingError::BadParameter("signal shorter than one unit window".into()));
        }
        let n = (T::one() / self.grid_step()).ceil().to_usize().unwrap_or(1000).max(1);
        let delta = T::one() / T::lit(n as f64);
        let starts = ((last_start - a) / delta).floor().to_usize().unwrap_or(0);
        let mut buf = vec![T::zero(); self.dim];
        let mut prefix = Vec::with_capacity(starts + n + 1);
        prefix.push(T::zero());
        let mut acc = T::zero();
        for i in 0..starts + n {
            let t = a + (T::lit(i as f64) + T::lit(0.5)) * delta;
            let h = self.norm_at(t, &mut buf);
            acc = acc + h * h;
            prefix.push(acc);
        }
        let best = (0..=starts).map(|j| prefix[j + n] - prefix[j]).fold(T::zero(), T::max);
        Ok((best * delta).sqrt())
    }

    /// Supremum norm on a grid over one period (periodic signals) or `[0, horizon]`.
    pub fn linf_norm(&self, horizon: T) -> Result<T, ForcingError> {
        if !(horizon > T::zero()) {
            return Err(ForcingError::BadParameter("horizon must be positive".into()));
        }
        match &self.kind {
            ForcingKind::Zero => return Ok(T::zero()),
            ForcingKind::Constant { profile } => return Ok(linalg::norm2(profile.coeffs())),
            ForcingKind::Sinusoidal { profile, amplitude, .. } | ForcingKind::PowerOfSine { profile, amplitude, .. } => {
                return Ok(amplitude.abs() * linalg::norm2(profile.coeffs()))
            }
            _ => {}
        }
        let (a, b) = self.search_range(horizon);
        let mut buf = vec![T::zero(); self.dim];
        let mut best = T::zero();
        if let ForcingKind::Sampled { times, .. } = &self.kind {
            // piecewise linear: the maximum sits on a sample or the range end
            for &t in times.iter().filter(|&&t| t >= a && t <= b) {
                best = best.max(self.norm_at(t, &mut buf));
            }
            return Ok(best.max(self.norm_at(b, &mut buf)));
        }
        let delta = self.grid_step();
        let steps = ((b - a) / delta).ceil().to_usize().unwrap_or(0);
        for i in 0..=steps {
            let t = (a + T::lit(i as f64) * delta).min(b);
            best = best.max(self.norm_at(t, &mut buf));
        }
        Ok(best)
    }

    /// `(∫_0^τ |h|² dt)^{1/2}`.
    pub fn l2_period_norm(&self, tau: T) -> Result<T, ForcingError> {
        if !(tau > T::zero()) {
            return Err(ForcingError::BadParameter("tau must be positive".into()));
        }
        let two = T::lit(2.0);
        match &self.kind {
            ForcingKind::Zero => return Ok(T::zero()),
            ForcingKind::Constant { profile } => return Ok(linalg::norm2(profile.coeffs()) * tau.sqrt()),
            ForcingKind::Sinusoidal { profile, amplitude, omega, phase } => {
                let (w, p) = (*omega, *phase);
                let int = tau / two - ((two * w * tau + two * p).sin() - (two * p).sin()) / (T::lit(4.0) * w);
                return Ok(amplitude.abs() * linalg::norm2(profile.coeffs()) * int.max(T::zero()).sqrt());
            }
            _ => {}
        }
        let start = sampled_range(&self.kind).map(|r| r.0).unwrap_or(T::zero());
        let n = (tau / self.grid_step()).ceil().to_usize().unwrap_or(0).max(20_000);
        let delta = tau / T::lit(n as f64);
        let mut buf = vec![T::zero(); self.dim];
        let mut acc = T::zero();
        for i in 0..n {
            let h = self.norm_at(start + (T::lit(i as f64) + T::lit(0.5)) * delta, &mut buf);
            acc = acc + h * h;
        }
        Ok((acc * delta).sqrt())
    }

    pub fn norm(&self, kind: NormKind, horizon: T) -> Result<T, ForcingError> {
        match kind {
            NormKind::S2 => self.s2_norm(horizon),
            NormKind::Linf => self.linf_norm(horizon),
            NormKind::L2Period => {
                let tau = self.declared_antiperiod.ok_or_else(|| {
                    ForcingError::BadParameter("L2 period norm needs a declared anti-period".into())
                })?;
                self.l2_period_norm(tau)
            }
        }
    }
}
