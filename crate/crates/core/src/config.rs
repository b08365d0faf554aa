//! TOML experiment configuration with dotted-path overrides and validation.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::antiperiodic::{JacobianMode, ShootingConfig, WarmStart};
use crate::bounds::BoundConfig;
use crate::damping::{DampingFamily, DampingOp, DampingTerm};
use crate::forcing::NormKind;
use crate::integrator::{Fallback, Scheme, StepperConfig};
use crate::spectral::{OperatorKind, SpectralOperator};

/// A configuration problem tied to the offending field.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

fn err<T>(path: &str, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { path: path.into(), message: message.into() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Simulate,
    Sweep,
    Antiperiodic,
    Verify,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorSpec {
    pub kind: OperatorKind,
    pub modes: usize,
    pub length: f64,
    pub lambda: Option<Vec<f64>>,
    pub num_quad: Option<usize>,
}

impl Default for OperatorSpec {
    fn default() -> Self {
        Self { kind: OperatorKind::Wave1D, modes: 8, length: std::f64::consts::PI, lambda: None, num_quad: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub family: DampingFamily,
    pub c: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DampingSpec {
    pub family: DampingFamily,
    pub c: f64,
    pub alpha: f64,
    /// When present, replaces the single term above.
    pub terms: Option<Vec<TermSpec>>,
}

impl Default for DampingSpec {
    fn default() -> Self {
        Self { family: DampingFamily::AveragedH, c: 1.0, alpha: 2.0, terms: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForcingShape {
    Zero,
    Constant,
    /// `amplitude · λ_mode · φ_mode`, balanced by `u = amplitude · φ_mode`.
    Stationary,
    Sinusoidal,
    OddHarmonics,
    /// Forcing whose exact solution is `amplitude · cos(sqrt(λ) t) φ_mode`.
    Oracle,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForcingSpec {
    pub kind: ForcingShape,
    pub mode: usize,
    pub amplitude: f64,
    /// Defaults to `sqrt(λ₁)` times the golden ratio.
    pub omega: Option<f64>,
    pub phase: f64,
    pub harmonics: usize,
    pub csv: Option<PathBuf>,
    pub antiperiod: Option<f64>,
    pub amplitudes: Option<Vec<f64>>,
}

impl Default for ForcingSpec {
    fn default() -> Self {
        Self {
            kind: ForcingShape::Sinusoidal,
            mode: 1,
            amplitude: 1.0,
            omega: None,
            phase: 0.0,
            harmonics: 3,
            csv: None,
            antiperiod: None,
            amplitudes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepperSpec {
    pub scheme: Scheme,
    pub dt: Option<f64>,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub fallback: Fallback,
}

impl Default for StepperSpec {
    fn default() -> Self {
        Self {
            scheme: Scheme::ImplicitMidpoint,
            dt: None,
            newton_tol: 1e-12,
            newton_max_iter: 50,
            fallback: Fallback::FixedPoint,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundSpec {
    pub t_total: Option<f64>,
    pub burn_in_fraction: f64,
    pub window_count: usize,
    pub window_agreement_tol: f64,
    pub dt_refinement_tol: f64,
    pub absolute_tol: f64,
    pub check_refinement: bool,
}

impl Default for BoundSpec {
    fn default() -> Self {
        let d = BoundConfig::<f64>::default();
        Self {
            t_total: d.t_total,
            burn_in_fraction: d.burn_in_fraction,
            window_count: d.window_count,
            window_agreement_tol: d.window_agreement_tol,
            dt_refinement_tol: d.dt_refinement_tol,
            absolute_tol: d.absolute_tol,
            check_refinement: d.check_refinement,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianSpec {
    FiniteDifference,
    PicardOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShootingSpec {
    /// Defaults to the forcing's natural anti-period.
    pub tau: Option<f64>,
    pub residual_tol: f64,
    pub max_outer_iter: usize,
    pub jacobian: JacobianSpec,
    pub fd_eps: f64,
    pub picard_relaxation: f64,
    pub warm_start: WarmStart,
    pub warm_start_half_periods: usize,
    /// Defaults to `linf` on abstract operators and `l2_period` otherwise.
    pub norm_kind: Option<NormKind>,
}

impl Default for ShootingSpec {
    fn default() -> Self {
        Self {
            tau: None,
            residual_tol: 1e-9,
            max_outer_iter: 60,
            jacobian: JacobianSpec::FiniteDifference,
            fd_eps: 1e-6,
            picard_relaxation: 1.0,
            warm_start: WarmStart::Auto,
            warm_start_half_periods: 40,
            norm_kind: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    Zero,
    /// `u = A⁻¹ h(0)`, `v = 0`.
    Stationary,
    /// Start on the anti-periodic orbit found by shooting.
    Antiperiodic,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSpec {
    pub t_final: f64,
    pub observe_every: usize,
    /// Defaults to `stationary` for constant forcings and `zero` otherwise.
    pub initial: Option<InitialState>,
    pub u0: Option<Vec<f64>>,
    pub v0: Option<Vec<f64>>,
}

impl Default for SimulateSpec {
    fn default() -> Self {
        Self { t_final: 50.0, observe_every: 10, initial: None, u0: None, v0: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub norm_kind: NormKind,
    pub check_exponents: Vec<f64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self { norm_kind: NormKind::S2, check_exponents: vec![2.0, 4.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySpec {
    pub modes: usize,
    pub pairs: usize,
    pub certificate_samples: usize,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self { modes: 8, pairs: 1000, certificate_samples: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub operator: OperatorSpec,
    pub damping: DampingSpec,
    pub forcing: ForcingSpec,
    pub stepper: StepperSpec,
    pub bound: BoundSpec,
    pub shooting: ShootingSpec,
    pub simulate: SimulateSpec,
    pub sweep: SweepSpec,
    pub verify: VerifySpec,
}

fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Sets `path = value` in `table`, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let Some((path, raw)) = assignment.split_once('=') else {
        return err(assignment, "override must look like key=value");
    };
    let path = path.trim();
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return err(path, "empty key segment");
    }
    let mut cur = table;
    for k in &keys[..keys.len() - 1] {
        let entry = cur.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => return err(path, format!("`{k}` is not a table")),
        };
    }
    cur.insert(keys[keys.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl ExperimentConfig {
    /// Parses TOML text and applies `key=value` overrides in order.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| ConfigError {
            path: "config".into(),
            message: e.to_string().trim().to_string(),
        })?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let merged = toml::to_string(&table).map_err(|e| ConfigError { path: "config".into(), message: e.to_string() })?;
        toml::from_str(&merged).map_err(|e| ConfigError { path: "config".into(), message: e.to_string().trim().to_string() })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn build_operator(&self) -> Result<SpectralOperator<f64>, ConfigError> {
        let o = &self.operator;
        if o.modes == 0 {
            return err("operator.modes", "must be at least 1");
        }
        if !(o.length > 0.0) || !o.length.is_finite() {
            return err("operator.length", "must be positive");
        }
        let quad = o.num_quad.unwrap_or(4 * o.modes);
        SpectralOperator::with_quadrature(o.kind, o.modes, o.length, o.lambda.clone(), quad).map_err(|e| {
            let path = match e {
                crate::spectral::SpectralError::QuadratureTooCoarse { .. } => "operator.num_quad",
                crate::spectral::SpectralError::BadLength => "operator.length",
                _ => "operator.lambda",
            };
            ConfigError { path: path.into(), message: e.to_string() }
        })
    }

    pub fn build_damping(&self) -> Result<DampingOp<f64>, ConfigError> {
        let d = &self.damping;
        let specs: Vec<(String, TermSpec)> = match &d.terms {
            Some(terms) if terms.is_empty() => return err("damping.terms", "must not be empty"),
            Some(terms) => terms.iter().enumerate().map(|(i, t)| (format!("damping.terms[{i}]"), *t)).collect(),
            None => vec![("damping".into(), TermSpec { family: d.family, c: d.c, alpha: d.alpha })],
        };
        let mut terms = Vec::new();
        for (path, t) in specs {
            if !(t.c > 0.0) || !t.c.is_finite() {
                return err(&format!("{path}.c"), format!("must be positive, got {}", t.c));
            }
            if !(t.alpha >= 0.0) || !t.alpha.is_finite() {
                return err(&format!("{path}.alpha"), format!("must be non-negative, got {}", t.alpha));
            }
            terms.push(DampingTerm::new(t.family, t.c, t.alpha).map_err(|e| ConfigError { path, message: e.to_string() })?);
        }
        DampingOp::sum(terms).map_err(|e| ConfigError { path: "damping".into(), message: e.to_string() })
    }

    pub fn build_stepper(&self, op: &SpectralOperator<f64>) -> Result<StepperConfig<f64>, ConfigError> {
        let s = &self.stepper;
        let mut cfg = StepperConfig::for_operator(op, s.scheme);
        if let Some(dt) = s.dt {
            if !(dt > 0.0) || !dt.is_finite() {
                return err("stepper.dt", "must be positive");
            }
            cfg.dt = dt;
        }
        if !(s.newton_tol > 0.0) {
            return err("stepper.newton_tol", "must be positive");
        }
        if s.newton_max_iter == 0 {
            return err("stepper.newton_max_iter", "must be at least 1");
        }
        cfg.newton_tol = s.newton_tol;
        cfg.newton_max_iter = s.newton_max_iter;
        cfg.fallback = s.fallback;
        Ok(cfg)
    }

    pub fn build_bound(&self) -> Result<BoundConfig<f64>, ConfigError> {
        let b = &self.bound;
        let cfg = BoundConfig {
            t_total: b.t_total,
            burn_in_fraction: b.burn_in_fraction,
            window_count: b.window_count,
            window_agreement_tol: b.window_agreement_tol,
            dt_refinement_tol: b.dt_refinement_tol,
            absolute_tol: b.absolute_tol,
            check_refinement: b.check_refinement,
        };
        cfg.validate().map_err(|e| ConfigError { path: "bound".into(), message: e.to_string() })?;
        Ok(cfg)
    }

    /// Natural anti-period of the configured forcing, if it has one.
    pub fn natural_antiperiod(&self, op: &SpectralOperator<f64>) -> Option<f64> {
        let f = &self.forcing;
        if let Some(t) = self.shooting.tau.or(f.antiperiod) {
            return Some(t);
        }
        match f.kind {
            ForcingShape::Sinusoidal | ForcingShape::OddHarmonics => Some(std::f64::consts::PI / self.omega(op)),
            ForcingShape::Oracle => op.lambda().get(f.mode.max(1) - 1).map(|l| std::f64::consts::PI / l.sqrt()),
            _ => None,
        }
    }

    pub fn omega(&self, op: &SpectralOperator<f64>) -> f64 {
        self.forcing.omega.unwrap_or_else(|| op.lambda()[0].sqrt() * (1.0 + 5f64.sqrt()) / 2.0)
    }

    pub fn build_shooting(&self, op: &SpectralOperator<f64>) -> Result<ShootingConfig<f64>, ConfigError> {
        let s = &self.shooting;
        let Some(tau) = self.natural_antiperiod(op) else {
            return err("shooting.tau", "required for this forcing kind");
        };
        let cfg = ShootingConfig {
            tau,
            residual_tol: s.residual_tol,
            max_outer_iter: s.max_outer_iter,
            jacobian: match s.jacobian {
                JacobianSpec::FiniteDifference => JacobianMode::FiniteDifference { eps: s.fd_eps },
                JacobianSpec::PicardOnly => JacobianMode::PicardOnly,
            },
            picard_relaxation: s.picard_relaxation,
            warm_start: s.warm_start,
            warm_start_half_periods: s.warm_start_half_periods,
        };
        cfg.validate().map_err(|e| ConfigError { path: "shooting".into(), message: e.to_string() })?;
        Ok(cfg)
    }

    pub fn initial_kind(&self) -> InitialState {
        self.simulate.initial.unwrap_or(match self.forcing.kind {
            ForcingShape::Constant | ForcingShape::Stationary => InitialState::Stationary,
            _ => InitialState::Zero,
        })
    }

    /// Checks every section and fills defaults that depend on the operator,
    /// so the result serializes to a self-contained configuration.
    pub fn resolve(&self) -> Result<Self, ConfigError> {
        let op = self.build_operator()?;
        self.build_damping()?;
        let stepper = self.build_stepper(&op)?;
        let bound = self.build_bound()?;
        let f = &self.forcing;
        if f.mode == 0 || f.mode > op.num_modes() {
            return err("forcing.mode", format!("must lie in 1..={}", op.num_modes()));
        }
        if !f.amplitude.is_finite() {
            return err("forcing.amplitude", "must be finite");
        }
        if let Some(w) = f.omega {
            if !(w > 0.0) || !w.is_finite() {
                return err("forcing.omega", "must be positive");
            }
        }
        if f.kind == ForcingShape::OddHarmonics && f.harmonics == 0 {
            return err("forcing.harmonics", "must be at least 1");
        }
        if f.kind == ForcingShape::Csv && f.csv.is_none() {
            return err("forcing.csv", "path required for csv forcing");
        }
        if let Some(a) = &f.amplitudes {
            if a.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                return err("forcing.amplitudes", "must all be positive");
            }
        }
        if !(self.simulate.t_final > 0.0) {
            return err("simulate.t_final", "must be positive");
        }
        if self.simulate.observe_every == 0 {
            return err("simulate.observe_every", "must be at least 1");
        }
        if self.verify.modes == 0 {
            return err("verify.modes", "must be at least 1");
        }
        let mut out = self.clone();
        out.operator.num_quad = Some(op.num_quad());
        out.stepper.dt = Some(stepper.dt);
        out.bound.t_total = Some(bound.resolved_t_total(&self.build_damping()?));
        if matches!(f.kind, ForcingShape::Sinusoidal | ForcingShape::OddHarmonics) {
            out.forcing.omega = Some(self.omega(&op));
        }
        out.simulate.initial = Some(self.initial_kind());
        if self.initial_kind() == InitialState::Antiperiodic {
            out.shooting.tau = Some(self.build_shooting(&op)?.tau);
        }
        if self.experiment == Some(Experiment::Antiperiodic) {
            out.shooting.tau = Some(self.build_shooting(&op)?.tau);
            out.shooting.norm_kind = Some(self.shooting.norm_kind.unwrap_or(if op.kind() == OperatorKind::Abstract {
                NormKind::Linf
            } else {
                NormKind::L2Period
            }));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_empty_text() {
        let c = ExperimentConfig::parse("", &[]).unwrap();
        assert_eq!(c, ExperimentConfig::default());
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let c = ExperimentConfig::parse(
            "[damping]\nalpha = 2.0\n",
            &["damping.alpha=1.5".into(), "operator.kind=beam1d".into(), "forcing.amplitudes=[1, 2]".into()],
        )
        .unwrap();
        assert_eq!(c.damping.alpha, 1.5);
        assert_eq!(c.operator.kind, OperatorKind::Beam1DSimplySupported);
        assert_eq!(c.forcing.amplitudes, Some(vec![1.0, 2.0]));
    }

    #[test]
    fn validation_names_the_field() {
        let c = ExperimentConfig::parse("", &["damping.alpha=-1".into()]).unwrap();
        let e = c.resolve().unwrap_err();
        assert_eq!(e.path, "damping.alpha");
        let e = ExperimentConfig::parse("[damping]\nalpah = 1\n", &[]).unwrap_err();
        assert!(e.message.contains("alpah"), "{e}");
        let c = ExperimentConfig::parse("[[damping.terms]]\nfamily='local_power'\nc=-1\nalpha=1\n", &[]).unwrap();
        assert_eq!(c.resolve().unwrap_err().path, "damping.terms[0].c");
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = ExperimentConfig { experiment: Some(Experiment::Antiperiodic), ..Default::default() };
        let r = c.resolve().unwrap();
        let back = ExperimentConfig::parse(&r.to_toml(), &[]).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.resolve().unwrap(), r);
    }
}
