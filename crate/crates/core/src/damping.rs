//! Monotone damping maps `g` on the modal space, their dissipation pairing and
//! coercivity/growth certificates.
//!
//! A [`DampingOp`] is a finite sum of [`DampingTerm`]s. Each term is odd,
//! monotone and the gradient of a convex potential, so sums keep all three
//! properties.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::scalar::Real;
use crate::spectral::{ModalVector, SpectralError, SpectralOperator, ZKind};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DampingError {
    #[error("invalid damping parameter: {0}")]
    InvalidParameter(String),
    #[error("damping needs at least one term")]
    Empty,
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("condition not admissible for this damping: {0}")]
    Inadmissible(String),
    #[error("no finite certificate on this truncation: {0}")]
    NoCertificate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DampingFamily {
    /// Pointwise `c |u_t|^α u_t`.
    LocalPower,
    /// `c |u_t|_H^α u_t`.
    #[serde(alias = "averaged")]
    AveragedH,
    /// `-c ‖∇u_t‖^α Δu_t`.
    #[serde(alias = "structural")]
    StructuralAveraged,
    /// `c u_t`; normalized to `AveragedH` with `α = 0`.
    LinearViscous,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampingTerm<T> {
    family: DampingFamily,
    c: T,
    alpha: T,
}

impl<T: Real> DampingTerm<T> {
    pub fn new(family: DampingFamily, c: T, alpha: T) -> Result<Self, DampingError> {
        if !(c > T::zero()) || !c.is_finite() {
            return Err(DampingError::InvalidParameter(format!("c must be positive, got {c}")));
        }
        if !(alpha >= T::zero()) || !alpha.is_finite() {
            return Err(DampingError::InvalidParameter(format!("alpha must be >= 0, got {alpha}")));
        }
        Ok(match family {
            DampingFamily::LinearViscous => Self { family: DampingFamily::AveragedH, c, alpha: T::zero() },
            f => Self { family: f, c, alpha },
        })
    }

    pub fn family(&self) -> DampingFamily {
        self.family
    }
    pub fn c(&self) -> T {
        self.c
    }
    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn z_kind(&self) -> ZKind<T> {
        match self.family {
            DampingFamily::LocalPower => ZKind::LalphaPlus2(self.alpha).canonical(),
            DampingFamily::StructuralAveraged => ZKind::H10,
            _ => ZKind::L2,
        }
    }

    /// Linear local damping projects back to `c v` exactly.
    fn is_linear_h(&self) -> bool {
        self.alpha == T::zero() && self.family != DampingFamily::StructuralAveraged
    }
}

/// Which spatial weighting a norm-factored damping uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    H,
    H10,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// `⟨g(v),v⟩ >= γ|v|² - C₁` and `‖g(v)‖_{V'} <= C₂ + K⟨g(v),v⟩`.
    General,
    /// `⟨g(v),v⟩ >= γ‖v‖_Z^{α+2} - C₁` and `‖g(v)‖_{V'} <= C₂ + K‖v‖_Z^{α+1}`.
    PowerLike,
    /// As `PowerLike` with the growth bound measured in `Z'`.
    AntiPeriodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Analytic,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampingCertificate<T> {
    pub condition: Condition,
    pub gamma: T,
    pub c1: T,
    pub k: T,
    pub c2: T,
    /// `L2` for the general condition, which is stated in the `H` norm.
    pub z_kind: ZKind<T>,
    pub alpha: T,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DampingOp<T> {
    terms: Vec<DampingTerm<T>>,
}

// Power-type constants of one term in its own Z space.
struct TermBounds<T> {
    z: ZKind<T>,
    alpha: T,
    gamma_z: T,
    k_vdual: T,
    k_zdual: T,
}

fn golden_min<T: Real>(f: impl Fn(T) -> T, mut lo: T, mut hi: T, iters: usize) -> T {
    let r = T::lit((5f64.sqrt() - 1.0) / 2.0);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..iters {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    (lo + hi) / T::lit(2.0)
}

/// `sup_{s>=0} (s^a - s^b)` for `0 < a < b`.
fn power_gap_sup<T: Real>(a: T, b: T) -> T {
    let s = (a / b).powf((b - a).recip());
    s.powf(a) * (T::one() - a / b)
}

impl<T: Real> DampingOp<T> {
    pub fn new(family: DampingFamily, c: T, alpha: T) -> Result<Self, DampingError> {
        Ok(Self { terms: vec![DampingTerm::new(family, c, alpha)?] })
    }

    pub fn linear(c: T) -> Result<Self, DampingError> {
        Self::new(DampingFamily::LinearViscous, c, T::zero())
    }

    pub fn sum(terms: Vec<DampingTerm<T>>) -> Result<Self, DampingError> {
        if terms.is_empty() {
            return Err(DampingError::Empty);
        }
        Ok(Self { terms })
    }

    pub fn terms(&self) -> &[DampingTerm<T>] {
        &self.terms
    }

    /// Total strength `Σ c`.
    pub fn strength(&self) -> T {
        self.terms.iter().map(|t| t.c).sum()
    }

    /// True when some term is linear, i.e. `g` is strictly coercive at the origin.
    pub fn has_linear_part(&self) -> bool {
        self.terms.iter().any(|t| t.alpha == T::zero())
    }

    /// `Some(w)` when `g(v) = G(‖v‖_w) D_w v` for a diagonal `D_w`, which reduces
    /// the implicit step to a scalar equation.
    pub fn scalar_weighting(&self) -> Option<Weighting> {
        if self.terms.iter().all(|t| t.is_linear_h() || t.family == DampingFamily::AveragedH) {
            Some(Weighting::H)
        } else if self.terms.iter().all(|t| t.family == DampingFamily::StructuralAveraged) {
            Some(Weighting::H10)
        } else {
            None
        }
    }

    /// `G(s) = Σ c_i s^{α_i}` for norm-factored dampings.
    pub(crate) fn radial_factor(&self, s: T) -> T {
        self.terms
            .iter()
            .map(|t| if t.alpha == T::zero() { t.c } else { t.c * s.powf(t.alpha) })
            .sum()
    }

    pub fn apply(&self, op: &SpectralOperator<T>, v: &ModalVector<T>) -> Result<ModalVector<T>, DampingError> {
        op.check_dim(v.len())?;
        let mut out = vec![T::zero(); v.len()];
        self.apply_into(op, v.coeffs(), &mut out);
        Ok(ModalVector::new(out))
    }

    pub fn dissipation(&self, op: &SpectralOperator<T>, v: &ModalVector<T>) -> Result<T, DampingError> {
        op.check_dim(v.len())?;
        Ok(self.dissipation_raw(op, v.coeffs()))
    }

    pub(crate) fn apply_into(&self, op: &SpectralOperator<T>, v: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|x| *x = T::zero());
        let mut nodal: Option<Vec<T>> = None;
        for term in &self.terms {
            let (c, alpha) = (term.c, term.alpha);
            match term.family {
                _ if term.is_linear_h() => {
                    for (o, x) in out.iter_mut().zip(v) {
                        *o = *o + c * *x;
                    }
                }
                DampingFamily::LocalPower => {
                    let f = nodal.get_or_insert_with(|| {
                        let mut f = vec![T::zero(); op.num_quad()];
                        op.to_nodal_into(v, &mut f);
                        f
                    });
                    let p = alpha + T::one();
                    let forced: Vec<T> = f.iter().map(|x| c * x.signed_pow(p)).collect();
                    let mut modal = vec![T::zero(); v.len()];
                    op.to_modal_into(&forced, &mut modal);
                    for (o, m) in out.iter_mut().zip(&modal) {
                        *o = *o + *m;
                    }
                }
                DampingFamily::AveragedH | DampingFamily::LinearViscous => {
                    let factor = c * linalg::norm2(v).powf(alpha);
                    for (o, x) in out.iter_mut().zip(v) {
                        *o = *o + factor * *x;
                    }
                }
                DampingFamily::StructuralAveraged => {
                    let s = op.norm_h10_raw(v);
                    let factor = if alpha == T::zero() { c } else { c * s.powf(alpha) };
                    for ((o, x), mu) in out.iter_mut().zip(v).zip(op.mu()) {
                        *o = *o + factor * *mu * *x;
                    }
                }
            }
        }
    }

    pub(crate) fn dissipation_raw(&self, op: &SpectralOperator<T>, v: &[T]) -> T {
        let mut nodal: Option<Vec<T>> = None;
        let mut total = T::zero();
        for term in &self.terms {
            let p = term.alpha + T::lit(2.0);
            total = total
                + match term.family {
                    _ if term.is_linear_h() => term.c * linalg::dot(v, v),
                    DampingFamily::LocalPower => {
                        let f = nodal.get_or_insert_with(|| {
                            let mut f = vec![T::zero(); op.num_quad()];
                            op.to_nodal_into(v, &mut f);
                            f
                        });
                        term.c * f.iter().map(|x| x.abs().powf(p)).sum::<T>() * op.quad_weight()
                    }
                    DampingFamily::AveragedH | DampingFamily::LinearViscous => {
                        term.c * linalg::norm2(v).powf(p)
                    }
                    DampingFamily::StructuralAveraged => term.c * op.norm_h10_raw(v).powf(p),
                };
        }
        total
    }

    /// Adds `scale * Dg(v)` to the row-major `n x n` matrix `mat`.
    pub(crate) fn add_jacobian(&self, op: &SpectralOperator<T>, v: &[T], scale: T, mat: &mut [T]) {
        let n = v.len();
        let mut nodal: Option<Vec<T>> = None;
        for term in &self.terms {
            let (c, alpha) = (term.c, term.alpha);
            match term.family {
                _ if term.is_linear_h() => {
                    for k in 0..n {
                        mat[k * n + k] = mat[k * n + k] + scale * c;
                    }
                }
                DampingFamily::LocalPower => {
                    let f = nodal.get_or_insert_with(|| {
                        let mut f = vec![T::zero(); op.num_quad()];
                        op.to_nodal_into(v, &mut f);
                        f
                    });
                    let w = op.quad_weight();
                    for (j, fj) in f.iter().enumerate() {
                        let d = scale * w * c * (alpha + T::one()) * fj.abs().powf(alpha);
                        if d == T::zero() {
                            continue;
                        }
                        let row = op.basis_row(j);
                        for k in 0..n {
                            let dk = d * row[k];
                            for l in 0..n {
                                mat[k * n + l] = mat[k * n + l] + dk * row[l];
                            }
                        }
                    }
                }
                DampingFamily::AveragedH | DampingFamily::LinearViscous => {
                    let rho = linalg::norm2(v);
                    if rho == T::zero() {
                        continue;
                    }
                    let base = scale * c * rho.powf(alpha);
                    let rank = base * alpha / (rho * rho);
                    for k in 0..n {
                        mat[k * n + k] = mat[k * n + k] + base;
                        for l in 0..n {
                            mat[k * n + l] = mat[k * n + l] + rank * v[k] * v[l];
                        }
                    }
                }
                DampingFamily::StructuralAveraged => {
                    let s = op.norm_h10_raw(v);
                    let mu = op.mu();
                    if alpha == T::zero() {
                        for k in 0..n {
                            mat[k * n + k] = mat[k * n + k] + scale * c * mu[k];
                        }
                        continue;
                    }
                    if s == T::zero() {
                        continue;
                    }
                    let base = scale * c * s.powf(alpha);
                    let rank = base * alpha / (s * s);
                    for k in 0..n {
                        mat[k * n + k] = mat[k * n + k] + base * mu[k];
                        for l in 0..n {
                            mat[k * n + l] = mat[k * n + l] + rank * mu[k] * v[k] * mu[l] * v[l];
                        }
                    }
                }
            }
        }
    }

    /// Exact `‖g(v)‖_{V'}`.
    pub fn v_dual_norm(&self, op: &SpectralOperator<T>, v: &ModalVector<T>) -> Result<T, DampingError> {
        let g = self.apply(op, v)?;
        Ok(op.norm_v_dual(&g)?)
    }

    /// Upper bound for `‖g(v)‖_{Z'}`, exact for the averaged families. For local
    /// power terms the nodal field `c|f|^α f` is a norm-preserving extension of
    /// the functional, so its `L^{p'}` norm bounds the dual norm on the subspace.
    pub fn z_dual_norm_bound(&self, op: &SpectralOperator<T>, v: &ModalVector<T>) -> Result<T, DampingError> {
        op.check_dim(v.len())?;
        let mut total = T::zero();
        let mut f = vec![T::zero(); op.num_quad()];
        op.to_nodal_into(v.coeffs(), &mut f);
        for term in &self.terms {
            let single = Self { terms: vec![*term] };
            let g = single.apply(op, v)?;
            total = total
                + match term.z_kind() {
                    ZKind::L2 => linalg::norm2(g.coeffs()),
                    ZKind::H10 => op.norm_h10_dual_raw(g.coeffs()),
                    ZKind::LalphaPlus2(alpha) => {
                        let q = (alpha + T::lit(2.0)) / (alpha + T::one());
                        let forced: Vec<T> =
                            f.iter().map(|x| term.c * x.signed_pow(alpha + T::one())).collect();
                        op.nodal_lp(&forced, q)
                    }
                };
        }
        Ok(total)
    }

    fn term_bounds(op: &SpectralOperator<T>, term: &DampingTerm<T>) -> TermBounds<T> {
        let c = term.c;
        let z = term.z_kind();
        let k_vdual = match term.family {
            DampingFamily::LocalPower => c * op.z_sandwich(z).z_over_v,
            DampingFamily::StructuralAveraged => c * op.z_sandwich(ZKind::H10).z_over_v,
            _ => c * op.embedding_p(),
        };
        TermBounds { z, alpha: term.alpha, gamma_z: c, k_vdual, k_zdual: c }
    }

    /// Constants witnessing `condition` on this truncation.
    ///
    /// Power-like conditions use closed forms. The general condition combines
    /// the power bounds with Young splits whose growth constant `K` is chosen
    /// numerically, and the result is checked on `samples` random velocities.
    pub fn certificate(
        &self,
        op: &SpectralOperator<T>,
        condition: Condition,
    ) -> Result<DampingCertificate<T>, DampingError> {
        self.certificate_with_samples(op, condition, 10_000)
    }

    pub fn certificate_with_samples(
        &self,
        op: &SpectralOperator<T>,
        condition: Condition,
        samples: usize,
    ) -> Result<DampingCertificate<T>, DampingError> {
        let bounds: Vec<TermBounds<T>> = self.terms.iter().map(|t| Self::term_bounds(op, t)).collect();
        match condition {
            Condition::PowerLike | Condition::AntiPeriodic => {
                let z = bounds[0].z;
                if let Some(b) = bounds.iter().find(|b| b.z != z) {
                    return Err(DampingError::Inadmissible(format!(
                        "terms measure coercivity in different spaces ({z:?} vs {:?})",
                        b.z
                    )));
                }
                let alpha = bounds.iter().fold(T::zero(), |m, b| m.max(b.alpha));
                let gamma: T = bounds.iter().filter(|b| b.alpha == alpha).map(|b| b.gamma_z).sum();
                let grow = |b: &TermBounds<T>| if condition == Condition::PowerLike { b.k_vdual } else { b.k_zdual };
                let k: T = bounds.iter().map(grow).sum();
                let c2: T = bounds
                    .iter()
                    .filter(|b| b.alpha < alpha)
                    .map(|b| grow(b) * power_gap_sup(b.alpha + T::one(), alpha + T::one()))
                    .sum();
                Ok(DampingCertificate {
                    condition,
                    gamma,
                    c1: T::zero(),
                    k,
                    c2,
                    z_kind: z,
                    alpha,
                    provenance: Provenance::Analytic,
                })
            }
            Condition::General => {
                let two = T::lit(2.0);
                let mut gamma = T::zero();
                let mut c1 = T::zero();
                for b in &bounds {
                    let e = op.z_sandwich(b.z).h_over_z;
                    let a = b.gamma_z * e.powf(-(b.alpha + two));
                    gamma = gamma + a;
                    if b.alpha > T::zero() {
                        let r2 = (two / (b.alpha + two)).powf(two / b.alpha);
                        c1 = c1 + a * r2 * b.alpha / (b.alpha + two);
                    }
                }
                // C₂(K) = Σ sup_s (K_i s^{α+1} - K γ_i s^{α+2})
                let c2_of = |k: T| -> T {
                    bounds
                        .iter()
                        .map(|b| {
                            let ap1 = b.alpha + T::one();
                            let ap2 = b.alpha + two;
                            let s = ap1 * b.k_vdual / (ap2 * k * b.gamma_z);
                            b.k_vdual * s.powf(ap1) / ap2
                        })
                        .sum()
                };
                let scale = bounds.iter().fold(T::zero(), |m, b| m.max(b.k_vdual / b.gamma_z));
                let ln_k = golden_min(
                    |lk: T| {
                        let k = lk.exp();
                        k + c2_of(k)
                    },
                    (scale * T::lit(1e-8)).ln(),
                    (scale * T::lit(1e8)).ln(),
                    200,
                );
                let k = ln_k.exp();
                let c2 = c2_of(k);
                for x in [gamma, c1, k, c2] {
                    if !x.is_finite() {
                        return Err(DampingError::NoCertificate("non-finite constant".into()));
                    }
                }
                let cert = DampingCertificate {
                    condition,
                    gamma,
                    c1,
                    k,
                    c2,
                    z_kind: ZKind::L2,
                    alpha: T::zero(),
                    provenance: Provenance::Sampled,
                };
                let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
                for _ in 0..samples {
                    let v = random_velocity(&mut rng, op.num_modes(), -3.0, 3.0);
                    let slack = cert.slack(op, self, &v)?;
                    if slack < -T::lit(1e-9) {
                        return Err(DampingError::NoCertificate(format!(
                            "sampled violation with normalized slack {slack}"
                        )));
                    }
                }
                Ok(cert)
            }
        }
    }
}

/// Random direction with `|v|_H` log-uniform in `[10^lo, 10^hi]`.
pub(crate) fn random_velocity<T: Real>(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> ModalVector<T> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    let target = 10f64.powf(rng.gen_range(lo..hi));
    ModalVector::new(raw.iter().map(|x| T::lit(x / norm * target)).collect())
}

impl<T: Real> DampingCertificate<T> {
    /// Smaller of the two certified inequalities' slacks, each divided by
    /// `1 + |lhs| + |rhs|`. Non-negative means the certificate holds at `v`.
    pub fn slack(&self, op: &SpectralOperator<T>, g: &DampingOp<T>, v: &ModalVector<T>) -> Result<T, DampingError> {
        let d = g.dissipation(op, v)?;
        let rel = |big: T, small: T| (big - small) / (T::one() + big.abs() + small.abs());
        let two = T::lit(2.0);
        let (coercive, growth) = match self.condition {
            Condition::General => {
                let h = op.norm_h(v)?;
                let lower = self.gamma * h * h - self.c1;
                let gv = g.v_dual_norm(op, v)?;
                (rel(d, lower), rel(self.c2 + self.k * d, gv))
            }
            Condition::PowerLike | Condition::AntiPeriodic => {
                let z = op.norm_z(v, self.z_kind)?;
                let lower = self.gamma * z.powf(self.alpha + two) - self.c1;
                let upper = self.c2 + self.k * z.powf(self.alpha + T::one());
                let gn = if self.condition == Condition::PowerLike {
                    g.v_dual_norm(op, v)?
                } else {
                    g.z_dual_norm_bound(op, v)?
                };
                (rel(d, lower), rel(upper, gn))
            }
        };
        Ok(coercive.min(growth))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::OperatorKind;

    fn wave(n: usize) -> SpectralOperator<f64> {
        SpectralOperator::wave_1d(n).unwrap()
    }

    #[test]
    fn linear_averaged_is_identity() {
        let op = wave(5);
        let g = DampingOp::new(DampingFamily::AveragedH, 1.0, 0.0).unwrap();
        let v = ModalVector::new(vec![0.3, -1.2, 4.0, 0.0, 2.5]);
        assert_eq!(g.apply(&op, &v).unwrap(), v);
    }

    #[test]
    fn linear_viscous_normalizes() {
        let g = DampingOp::<f64>::linear(2.0).unwrap();
        assert_eq!(g.terms()[0].family(), DampingFamily::AveragedH);
        assert_eq!(g.terms()[0].alpha(), 0.0);
    }

    #[test]
    fn structural_on_beam_mode_two() {
        let op = SpectralOperator::<f64>::beam_1d(3).unwrap();
        let g = DampingOp::new(DampingFamily::StructuralAveraged, 1.0, 0.0).unwrap();
        assert_eq!(g.apply(&op, &op.mode(2)).unwrap(), op.mode(2).scaled(4.0));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(DampingOp::new(DampingFamily::LocalPower, 0.0, 1.0).is_err());
        assert!(DampingOp::new(DampingFamily::LocalPower, 1.0, -1.0).is_err());
        assert!(matches!(DampingOp::<f64>::sum(vec![]), Err(DampingError::Empty)));
    }

    #[test]
    fn dissipation_closed_forms() {
        let op = wave(4);
        for fam in [DampingFamily::LocalPower, DampingFamily::AveragedH, DampingFamily::StructuralAveraged] {
            let g = DampingOp::new(fam, 1.5, 1.3).unwrap();
            assert_eq!(g.dissipation(&op, &op.zeros()).unwrap(), 0.0);
        }
        let g = DampingOp::new(DampingFamily::AveragedH, 2.0, 1.0).unwrap();
        let v = ModalVector::new(vec![0.0, 3.0, 0.0, 0.0]);
        assert!((g.dissipation(&op, &v).unwrap() - 54.0).abs() < 1e-12);
    }

    // Independent check: integrate c f⁴ on a fine midpoint grid with the sine
    // series evaluated directly, ten times more nodes than the operator uses.
    fn fine_quadrature(op: &SpectralOperator<f64>, v: &ModalVector<f64>, p: f64) -> f64 {
        let n = 10 * op.num_quad();
        let h = op.length() / n as f64;
        (0..n)
            .map(|j| {
                let x = (j as f64 + 0.5) * h;
                op.eval_at(v, x).unwrap().abs().powf(p) * h
            })
            .sum()
    }

    #[test]
    fn local_power_dissipation_matches_fine_quadrature() {
        let op = wave(6);
        let g = DampingOp::new(DampingFamily::LocalPower, 1.0, 2.0).unwrap();
        for k in [0.5, 1.0, 7.0] {
            let v = op.mode(1).scaled(k);
            let got = g.dissipation(&op, &v).unwrap();
            let want = fine_quadrature(&op, &v, 4.0);
            // closed form k⁴ (2/π)² ∫ sin⁴ = k⁴ (2/π)² 3π/8
            let exact = k.powi(4) * (2.0 / std::f64::consts::PI).powi(2) * 3.0 * std::f64::consts::PI / 8.0;
            assert!(((got - want) / want).abs() < 1e-8);
            assert!(((got - exact) / exact).abs() < 1e-12);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let v: ModalVector<f64> = random_velocity(&mut rng, 6, -1.0, 1.0);
            let got = g.dissipation(&op, &v).unwrap();
            let want = fine_quadrature(&op, &v, 4.0);
            assert!(((got - want) / want).abs() < 1e-8);
        }
    }

    #[test]
    fn dissipation_is_the_pairing() {
        let op = wave(5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for fam in [DampingFamily::LocalPower, DampingFamily::AveragedH, DampingFamily::StructuralAveraged] {
            let g = DampingOp::new(fam, 0.7, 1.5).unwrap();
            for _ in 0..20 {
                let v: ModalVector<f64> = random_velocity(&mut rng, 5, -1.0, 1.0);
                let pairing = g.apply(&op, &v).unwrap().dot(&v);
                let d = g.dissipation(&op, &v).unwrap();
                assert!((pairing - d).abs() <= 1e-12 * (1.0 + d));
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let op = SpectralOperator::<f64>::beam_1d(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = DampingOp::sum(vec![
            DampingTerm::new(DampingFamily::LocalPower, 1.0, 2.0).unwrap(),
            DampingTerm::new(DampingFamily::AveragedH, 0.5, 1.5).unwrap(),
            DampingTerm::new(DampingFamily::StructuralAveraged, 0.3, 1.0).unwrap(),
        ])
        .unwrap();
        let v: ModalVector<f64> = random_velocity(&mut rng, 4, 0.0, 0.5);
        let mut jac = vec![0.0; 16];
        g.add_jacobian(&op, v.coeffs(), 1.0, &mut jac);
        let eps = 1e-6;
        for l in 0..4 {
            let mut vp = v.clone();
            let mut vm = v.clone();
            vp.coeffs_mut()[l] += eps;
            vm.coeffs_mut()[l] -= eps;
            let gp = g.apply(&op, &vp).unwrap();
            let gm = g.apply(&op, &vm).unwrap();
            for k in 0..4 {
                let fd = (gp.coeffs()[k] - gm.coeffs()[k]) / (2.0 * eps);
                assert!((fd - jac[k * 4 + l]).abs() < 1e-5 * (1.0 + fd.abs()), "({k},{l})");
            }
        }
    }

    #[test]
    fn oddness_is_exact() {
        let op = wave(6);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for fam in [DampingFamily::LocalPower, DampingFamily::AveragedH, DampingFamily::StructuralAveraged] {
            let g = DampingOp::new(fam, 1.1, 0.6).unwrap();
            let v: ModalVector<f64> = random_velocity(&mut rng, 6, -1.0, 2.0);
            assert_eq!(g.apply(&op, &-&v).unwrap(), -&g.apply(&op, &v).unwrap());
        }
    }

    #[test]
    fn averaged_certificate_power_like_is_exact() {
        let op = wave(4);
        let g = DampingOp::new(DampingFamily::AveragedH, 1.0, 2.0).unwrap();
        let cert = g.certificate(&op, Condition::PowerLike).unwrap();
        assert_eq!((cert.gamma, cert.c1, cert.k, cert.c2), (1.0, 0.0, 1.0, 0.0));
        assert_eq!(cert.z_kind, ZKind::L2);
        assert_eq!(cert.provenance, Provenance::Analytic);
    }

    #[test]
    fn general_certificate_linear_case() {
        let op = wave(4);
        let g = DampingOp::new(DampingFamily::AveragedH, 1.0, 0.0).unwrap();
        let cert = g.certificate(&op, Condition::General).unwrap();
        assert!((cert.gamma - 1.0).abs() < 1e-14);
        assert_eq!(cert.c1, 0.0);
        // minimizing K + P²/(4K) with P = 1 gives K = 1/2, C₂ = 1/2
        assert!((cert.k - 0.5).abs() < 1e-6);
        assert!((cert.c2 - 0.5).abs() < 1e-6);
        assert_eq!(cert.provenance, Provenance::Sampled);
    }

    #[test]
    fn general_certificate_cubic_local_needs_slack() {
        let op = wave(4);
        let g = DampingOp::new(DampingFamily::LocalPower, 1.0, 2.0).unwrap();
        let cert = g.certificate(&op, Condition::General).unwrap();
        assert!(cert.c1 > 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..10_000 {
            let v: ModalVector<f64> = random_velocity(&mut rng, 4, -3.0, 3.0);
            assert!(cert.slack(&op, &g, &v).unwrap() >= -1e-9);
        }
    }

    #[test]
    fn mixed_spaces_are_inadmissible_for_power_conditions() {
        let op = wave(3);
        let g = DampingOp::sum(vec![
            DampingTerm::new(DampingFamily::LocalPower, 1.0, 2.0).unwrap(),
            DampingTerm::new(DampingFamily::StructuralAveraged, 1.0, 1.0).unwrap(),
        ])
        .unwrap();
        assert!(matches!(g.certificate(&op, Condition::PowerLike), Err(DampingError::Inadmissible(_))));
        assert!(g.certificate(&op, Condition::General).is_ok());
    }

    #[test]
    fn certificates_sound_on_samples() {
        let ops = [
            wave(6),
            SpectralOperator::beam_1d(5).unwrap(),
            SpectralOperator::new(OperatorKind::Wave1D, 5, 0.8, None).unwrap(),
        ];
        let gs = [
            DampingOp::new(DampingFamily::LocalPower, 1.3, 2.0).unwrap(),
            DampingOp::new(DampingFamily::LocalPower, 0.4, 0.5).unwrap(),
            DampingOp::new(DampingFamily::AveragedH, 2.0, 1.0).unwrap(),
            DampingOp::new(DampingFamily::StructuralAveraged, 1.0, 1.0).unwrap(),
            DampingOp::sum(vec![
                DampingTerm::new(DampingFamily::AveragedH, 1.0, 0.0).unwrap(),
                DampingTerm::new(DampingFamily::AveragedH, 1.0, 2.0).unwrap(),
            ])
            .unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for op in &ops {
            for g in &gs {
                for cond in [Condition::General, Condition::PowerLike, Condition::AntiPeriodic] {
                    let cert = g.certificate_with_samples(op, cond, 1000).unwrap();
                    for _ in 0..1000 {
                        let v: ModalVector<f64> = random_velocity(&mut rng, op.num_modes(), -3.0, 3.0);
                        let s = cert.slack(op, g, &v).unwrap();
                        assert!(s >= -1e-9, "{cond:?} {g:?} slack {s}");
                    }
                }
            }
        }
    }
}
