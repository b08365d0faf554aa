//! Small dense kernels. Matrices are row-major `n x n` slices.

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("matrix is numerically singular at pivot column {column}")]
pub struct SingularMatrix {
    pub column: usize,
}

/// Solves `a x = b` in place by LU with partial pivoting; `b` is overwritten by `x`.
pub fn lu_solve<T: Real>(a: &mut [T], b: &mut [T]) -> Result<(), SingularMatrix> {
    let n = b.len();
    debug_assert_eq!(a.len(), n * n);
    let scale = a.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    let tiny = scale * T::epsilon() * T::lit(n.max(1) as f64);
    for col in 0..n {
        let (piv, piv_val) = (col..n)
            .map(|r| (r, a[r * n + col].abs()))
            .fold((col, -T::one()), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(piv_val > tiny) {
            return Err(SingularMatrix { column: col });
        }
        if piv != col {
            for j in 0..n {
                a.swap(col * n + j, piv * n + j);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f == T::zero() {
                continue;
            }
            a[r * n + col] = f;
            for j in col + 1..n {
                let v = a[col * n + j];
                a[r * n + j] = a[r * n + j] - f * v;
            }
            b[r] = b[r] - f * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = b[col];
        for j in col + 1..n {
            s = s - a[col * n + j] * b[j];
        }
        b[col] = s / a[col * n + col];
    }
    Ok(())
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (x, y)| s + *x * *y)
}

#[inline]
pub fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}
