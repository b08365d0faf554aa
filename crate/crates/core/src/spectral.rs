//! Sine-basis Galerkin model of the operator `A` on the interval `(0, L)`.
//!
//! Modal coefficients are taken against the L²-normalized Dirichlet
//! eigenfunctions `φ_k(x) = sqrt(2/L) sin(kπx/L)`. Nodal fields live on the
//! `num_quad` interior nodes `x_j = j L / (num_quad + 1)`, where the sine
//! family is discretely orthonormal for the uniform weight `L / (num_quad + 1)`.
//! That makes `to_modal ∘ to_nodal` the identity on the `N`-mode space and the
//! nodal quadrature of `f²` equal to the Parseval sum.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpectralError {
    #[error("num_modes must be at least 1")]
    NoModes,
    #[error("interval length must be positive and finite")]
    BadLength,
    #[error("eigenvalues must be positive and strictly increasing: {0}")]
    BadLambda(String),
    #[error("lambda override is only accepted for the abstract operator kind")]
    LambdaOverrideNotAllowed,
    #[error("abstract operator requires explicit eigenvalues")]
    MissingLambda,
    #[error("quadrature needs at least {min} nodes, got {num_quad}")]
    QuadratureTooCoarse { num_quad: usize, min: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("Lebesgue exponent parameter alpha must be >= 0")]
    NegativeAlpha,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    /// `-∂ₓₓ` with Dirichlet conditions: `λ_k = μ_k`.
    #[serde(alias = "wave1d")]
    Wave1D,
    /// Simply supported beam `∂ₓ⁴`: `λ_k = μ_k²`.
    #[serde(alias = "beam1d")]
    Beam1DSimplySupported,
    /// User-supplied diagonal system.
    Abstract,
}

/// Intermediate space `V ⊂ Z ⊂ H` used by coercivity and growth conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ZKind<T> {
    /// `L^{α+2}(0, L)`, evaluated by nodal quadrature.
    LalphaPlus2(T),
    L2,
    /// `H¹₀(0, L)`: `sqrt(Σ μ_k c_k²)`.
    H10,
}

impl<T: Real> ZKind<T> {
    /// `L^{0+2}` and `L²` are the same space; fold the former into the latter.
    pub fn canonical(self) -> Self {
        match self {
            ZKind::LalphaPlus2(a) if a == T::zero() => ZKind::L2,
            z => z,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModalVector<T> {
    coeffs: Vec<T>,
}

impl<T: Real> ModalVector<T> {
    pub fn new(coeffs: Vec<T>) -> Self {
        Self { coeffs }
    }

    pub fn zeros(n: usize) -> Self {
        Self { coeffs: vec![T::zero(); n] }
    }

    /// The `k`-th eigenmode `φ_k`, one-based.
    pub fn mode(n: usize, k: usize) -> Self {
        assert!(k >= 1 && k <= n, "mode index {k} outside 1..={n}");
        let mut m = Self::zeros(n);
        m.coeffs[k - 1] = T::one();
        m
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [T] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<T> {
        self.coeffs
    }

    pub fn dot(&self, other: &Self) -> T {
        linalg::dot(&self.coeffs, &other.coeffs)
    }

    pub fn scaled(&self, s: T) -> Self {
        Self::new(self.coeffs.iter().map(|&x| x * s).collect())
    }

    pub fn max_abs(&self) -> T {
        self.coeffs.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }
}

impl<T: Real> From<Vec<T>> for ModalVector<T> {
    fn from(coeffs: Vec<T>) -> Self {
        Self::new(coeffs)
    }
}

impl<T: Real> Add for &ModalVector<T> {
    type Output = ModalVector<T>;
    fn add(self, rhs: Self) -> ModalVector<T> {
        debug_assert_eq!(self.len(), rhs.len());
        ModalVector::new(self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| *a + *b).collect())
    }
}

impl<T: Real> Sub for &ModalVector<T> {
    type Output = ModalVector<T>;
    fn sub(self, rhs: Self) -> ModalVector<T> {
        debug_assert_eq!(self.len(), rhs.len());
        ModalVector::new(self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| *a - *b).collect())
    }
}

impl<T: Real> Neg for &ModalVector<T> {
    type Output = ModalVector<T>;
    fn neg(self) -> ModalVector<T> {
        ModalVector::new(self.coeffs.iter().map(|a| -*a).collect())
    }
}

impl<T: Real> Mul<T> for &ModalVector<T> {
    type Output = ModalVector<T>;
    fn mul(self, s: T) -> ModalVector<T> {
        self.scaled(s)
    }
}

/// Samples of a function at the interior quadrature nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField<T> {
    pub values: Vec<T>,
}

/// Constants with `|m|_H <= h_over_z ‖m‖_Z` and `‖m‖_Z <= z_over_v ‖m‖_V`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZSandwich<T> {
    pub h_over_z: T,
    pub z_over_v: T,
}

#[derive(Debug, Clone)]
pub struct SpectralOperator<T> {
    kind: OperatorKind,
    length: T,
    mu: Vec<T>,
    lambda: Vec<T>,
    embedding_p: T,
    num_quad: usize,
    weight: T,
    nodes: Vec<T>,
    // basis[j * n + k] = φ_{k+1}(x_j)
    basis: Vec<T>,
}

fn check_increasing<T: Real>(values: &[T]) -> Result<(), SpectralError> {
    if let Some(bad) = values.iter().position(|&x| !(x > T::zero()) || !x.is_finite()) {
        return Err(SpectralError::BadLambda(format!("entry {bad} is not a positive finite number")));
    }
    if let Some(i) = values.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(SpectralError::BadLambda(format!("entries {i} and {} are not increasing", i + 1)));
    }
    Ok(())
}

impl<T: Real> SpectralOperator<T> {
    /// Builds the operator with the default quadrature of `4 N` nodes.
    pub fn new(
        kind: OperatorKind,
        num_modes: usize,
        length: T,
        lambda_override: Option<Vec<T>>,
    ) -> Result<Self, SpectralError> {
        Self::with_quadrature(kind, num_modes, length, lambda_override, 4 * num_modes)
    }

    pub fn with_quadrature(
        kind: OperatorKind,
        num_modes: usize,
        length: T,
        lambda_override: Option<Vec<T>>,
        num_quad: usize,
    ) -> Result<Self, SpectralError> {
        if num_modes == 0 {
            return Err(SpectralError::NoModes);
        }
        if !(length > T::zero()) || !length.is_finite() {
            return Err(SpectralError::BadLength);
        }
        if num_quad < 4 * num_modes {
            return Err(SpectralError::QuadratureTooCoarse { num_quad, min: 4 * num_modes });
        }
        // π/L first so that L = π yields exact integer wavenumbers.
        let wave = T::PI() / length;
        let mu: Vec<T> = (1..=num_modes)
            .map(|k| {
                let kk = T::lit(k as f64) * wave;
                kk * kk
            })
            .collect();
        let lambda = match (kind, lambda_override) {
            (OperatorKind::Abstract, Some(l)) => {
                if l.len() != num_modes {
                    return Err(SpectralError::DimensionMismatch { expected: num_modes, got: l.len() });
                }
                check_increasing(&l)?;
                l
            }
            (OperatorKind::Abstract, None) => return Err(SpectralError::MissingLambda),
            (_, Some(_)) => return Err(SpectralError::LambdaOverrideNotAllowed),
            (OperatorKind::Wave1D, None) => mu.clone(),
            (OperatorKind::Beam1DSimplySupported, None) => mu.iter().map(|&m| m * m).collect(),
        };
        let embedding_p = lambda[0].sqrt().recip();

        let m1 = num_quad + 1;
        let weight = length / T::lit(m1 as f64);
        let nodes = (1..=num_quad).map(|j| T::lit(j as f64) * weight).collect();
        let amp = (T::lit(2.0) / length).sqrt();
        let period = 2 * m1;
        let mut basis = vec![T::zero(); num_quad * num_modes];
        for j in 1..=num_quad {
            for k in 1..=num_modes {
                // sin(kπj/(M+1)) with the argument reduced modulo 2π exactly
                let r = (k * j) % period;
                let s = (std::f64::consts::PI * r as f64 / m1 as f64).sin();
                basis[(j - 1) * num_modes + (k - 1)] = amp * T::lit(s);
            }
        }
        Ok(Self { kind, length, mu, lambda, embedding_p, num_quad, weight, nodes, basis })
    }

    /// Wave operator on `(0, π)`.
    pub fn wave_1d(num_modes: usize) -> Result<Self, SpectralError> {
        Self::new(OperatorKind::Wave1D, num_modes, T::PI(), None)
    }

    /// Simply supported beam on `(0, π)`.
    pub fn beam_1d(num_modes: usize) -> Result<Self, SpectralError> {
        Self::new(OperatorKind::Beam1DSimplySupported, num_modes, T::PI(), None)
    }

    /// Diagonal system with the given eigenvalues on `(0, π)`.
    pub fn diagonal(lambda: Vec<T>) -> Result<Self, SpectralError> {
        Self::new(OperatorKind::Abstract, lambda.len(), T::PI(), Some(lambda))
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }
    pub fn num_modes(&self) -> usize {
        self.lambda.len()
    }
    pub fn length(&self) -> T {
        self.length
    }
    pub fn mu(&self) -> &[T] {
        &self.mu
    }
    pub fn lambda(&self) -> &[T] {
        &self.lambda
    }
    pub fn num_quad(&self) -> usize {
        self.num_quad
    }
    /// `P = sup{|u|_H : ‖u‖_V = 1} = λ₁^{-1/2}`.
    pub fn embedding_p(&self) -> T {
        self.embedding_p
    }
    pub fn quad_weight(&self) -> T {
        self.weight
    }
    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn check_dim(&self, got: usize) -> Result<(), SpectralError> {
        if got == self.num_modes() {
            Ok(())
        } else {
            Err(SpectralError::DimensionMismatch { expected: self.num_modes(), got })
        }
    }

    pub fn zeros(&self) -> ModalVector<T> {
        ModalVector::zeros(self.num_modes())
    }

    pub fn mode(&self, k: usize) -> ModalVector<T> {
        ModalVector::mode(self.num_modes(), k)
    }

    pub fn norm_h(&self, m: &ModalVector<T>) -> Result<T, SpectralError> {
        self.check_dim(m.len())?;
        Ok(linalg::norm2(m.coeffs()))
    }

    pub fn norm_v(&self, m: &ModalVector<T>) -> Result<T, SpectralError> {
        self.check_dim(m.len())?;
        Ok(self.norm_v_raw(m.coeffs()))
    }

    pub fn norm_z(&self, m: &ModalVector<T>, z: ZKind<T>) -> Result<T, SpectralError> {
        self.check_dim(m.len())?;
        if let ZKind::LalphaPlus2(a) = z {
            if a < T::zero() {
                return Err(SpectralError::NegativeAlpha);
            }
        }
        Ok(self.norm_z_raw(m.coeffs(), z))
    }

    /// `(m, w)_V = ⟨A m, w⟩`, evaluated literally as that pairing.
    pub fn inner_v(&self, m: &ModalVector<T>, w: &ModalVector<T>) -> Result<T, SpectralError> {
        self.check_dim(w.len())?;
        Ok(self.apply_a(m)?.dot(w))
    }

    pub fn apply_a(&self, m: &ModalVector<T>) -> Result<ModalVector<T>, SpectralError> {
        self.check_dim(m.len())?;
        Ok(ModalVector::new(m.coeffs().iter().zip(&self.lambda).map(|(c, l)| *l * *c).collect()))
    }

    pub fn to_nodal(&self, m: &ModalVector<T>) -> Result<NodalField<T>, SpectralError> {
        self.check_dim(m.len())?;
        let mut values = vec![T::zero(); self.num_quad];
        self.to_nodal_into(m.coeffs(), &mut values);
        Ok(NodalField { values })
    }

    pub fn to_modal(&self, f: &NodalField<T>) -> Result<ModalVector<T>, SpectralError> {
        if f.values.len() != self.num_quad {
            return Err(SpectralError::DimensionMismatch { expected: self.num_quad, got: f.values.len() });
        }
        let mut out = vec![T::zero(); self.num_modes()];
        self.to_modal_into(&f.values, &mut out);
        Ok(ModalVector::new(out))
    }

    /// Direct evaluation of the sine series at an arbitrary point.
    pub fn eval_at(&self, m: &ModalVector<T>, x: T) -> Result<T, SpectralError> {
        self.check_dim(m.len())?;
        let amp = (T::lit(2.0) / self.length).sqrt();
        let wave = T::PI() / self.length;
        Ok(m.coeffs()
            .iter()
            .enumerate()
            .map(|(k, &c)| c * amp * (T::lit((k + 1) as f64) * wave * x).sin())
            .sum())
    }

    /// Norm of `m` in `V'`: `sqrt(Σ m_k² / λ_k)`.
    pub fn norm_v_dual(&self, m: &ModalVector<T>) -> Result<T, SpectralError> {
        self.check_dim(m.len())?;
        Ok(self.norm_v_dual_raw(m.coeffs()))
    }

    /// Embedding constants between `H`, `Z` and `V` on this truncation.
    ///
    /// `L^p` uses discrete Hölder with the total quadrature weight `W` and the
    /// sup bound `|f(x)| <= sqrt(2/L) Σ|c_k|`.
    pub fn z_sandwich(&self, z: ZKind<T>) -> ZSandwich<T> {
        match z.canonical() {
            ZKind::L2 => ZSandwich { h_over_z: T::one(), z_over_v: self.embedding_p },
            ZKind::H10 => {
                let ratio = self
                    .mu
                    .iter()
                    .zip(&self.lambda)
                    .fold(T::zero(), |m, (mu, l)| m.max(*mu / *l));
                ZSandwich { h_over_z: self.mu[0].sqrt().recip(), z_over_v: ratio.sqrt() }
            }
            ZKind::LalphaPlus2(alpha) => {
                let p = alpha + T::lit(2.0);
                let total = self.weight * T::lit(self.num_quad as f64);
                let inv_lambda: T = self.lambda.iter().map(|l| l.recip()).sum();
                let sup = (T::lit(2.0) / self.length).sqrt() * inv_lambda.sqrt();
                ZSandwich {
                    h_over_z: total.powf(T::lit(0.5) - p.recip()),
                    z_over_v: total.powf(p.recip()) * sup,
                }
            }
        }
    }

    pub(crate) fn norm_v_raw(&self, c: &[T]) -> T {
        c.iter().zip(&self.lambda).fold(T::zero(), |s, (x, l)| s + *l * *x * *x).sqrt()
    }

    pub(crate) fn norm_h10_raw(&self, c: &[T]) -> T {
        c.iter().zip(&self.mu).fold(T::zero(), |s, (x, m)| s + *m * *x * *x).sqrt()
    }

    pub(crate) fn norm_v_dual_raw(&self, c: &[T]) -> T {
        c.iter().zip(&self.lambda).fold(T::zero(), |s, (x, l)| s + *x * *x / *l).sqrt()
    }

    pub(crate) fn norm_h10_dual_raw(&self, c: &[T]) -> T {
        c.iter().zip(&self.mu).fold(T::zero(), |s, (x, m)| s + *x * *x / *m).sqrt()
    }

    /// `(Σ_j w |f_j|^p)^{1/p}` over nodal values.
    pub(crate) fn nodal_lp(&self, f: &[T], p: T) -> T {
        let s: T = f.iter().map(|x| x.abs().powf(p)).sum::<T>() * self.weight;
        s.powf(p.recip())
    }

    pub(crate) fn norm_z_raw(&self, c: &[T], z: ZKind<T>) -> T {
        match z {
            ZKind::L2 => linalg::norm2(c),
            ZKind::H10 => self.norm_h10_raw(c),
            ZKind::LalphaPlus2(alpha) => {
                let mut f = vec![T::zero(); self.num_quad];
                self.to_nodal_into(c, &mut f);
                self.nodal_lp(&f, alpha + T::lit(2.0))
            }
        }
    }

    pub(crate) fn to_nodal_into(&self, c: &[T], out: &mut [T]) {
        let n = self.num_modes();
        for (j, o) in out.iter_mut().enumerate() {
            *o = linalg::dot(&self.basis[j * n..(j + 1) * n], c);
        }
    }

    pub(crate) fn to_modal_into(&self, f: &[T], out: &mut [T]) {
        let n = self.num_modes();
        out.iter_mut().for_each(|x| *x = T::zero());
        for (j, &fj) in f.iter().enumerate() {
            let row = &self.basis[j * n..(j + 1) * n];
            for (o, b) in out.iter_mut().zip(row) {
                *o = *o + fj * *b;
            }
        }
        out.iter_mut().for_each(|x| *x = *x * self.weight);
    }

    /// Row `j` of the synthesis matrix: `φ_k(x_j)` for all `k`.
    pub(crate) fn basis_row(&self, j: usize) -> &[T] {
        let n = self.num_modes();
        &self.basis[j * n..(j + 1) * n]
    }
}
