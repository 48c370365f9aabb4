//! Naive loop oracles over logical views.

use super::{Element, EvalError};
use crate::ast::PrimOp;
use crate::layout::View;

fn extents2<T: Element>(a: &View<T>) -> Result<(usize, usize), EvalError> {
    match a.shape().extents()[..] {
        [cols, rows] => Ok((rows, cols)),
        _ => Err(EvalError::NotAnArray),
    }
}

fn add<T: Element>(a: T, b: T) -> T {
    T::apply(PrimOp::Add, a, b)
}

fn mul<T: Element>(a: T, b: T) -> T {
    T::apply(PrimOp::Mul, a, b)
}

/// `sum_j u_j v_j`.
pub fn oracle_dot<T: Element>(u: &View<T>, v: &View<T>) -> Result<T, EvalError> {
    let (u, v) = (u.to_vec(), v.to_vec());
    if u.len() != v.len() || u.is_empty() {
        return Err(EvalError::ExtentMismatch(vec![u.len(), v.len()]));
    }
    Ok((1..u.len()).fold(mul(u[0], v[0]), |acc, j| add(acc, mul(u[j], v[j]))))
}

/// `v_i = sum_j A_ij u_j` for an `n x m` matrix `A`.
pub fn oracle_matvec<T: Element>(a: &View<T>, u: &View<T>) -> Result<Vec<T>, EvalError> {
    let (n, m) = extents2(a)?;
    let u = u.to_vec();
    if u.len() != m {
        return Err(EvalError::ExtentMismatch(vec![m, u.len()]));
    }
    let a = a.to_vec();
    Ok((0..n)
        .map(|i| (1..m).fold(mul(a[i * m], u[0]), |acc, j| add(acc, mul(a[i * m + j], u[j]))))
        .collect())
}

/// `C_ik = sum_j A_ij B_jk`, loops in `(i, k, j)` order; `C` is row-major.
pub fn oracle_matmul<T: Element>(a: &View<T>, b: &View<T>) -> Result<Vec<T>, EvalError> {
    let (n, m) = extents2(a)?;
    let (m2, p) = extents2(b)?;
    if m != m2 {
        return Err(EvalError::ExtentMismatch(vec![m, m2]));
    }
    let (a, b) = (a.to_vec(), b.to_vec());
    let mut c = Vec::with_capacity(n * p);
    for i in 0..n {
        for k in 0..p {
            let mut acc = mul(a[i * m], b[k]);
            for j in 1..m {
                acc = add(acc, mul(a[i * m + j], b[j * p + k]));
            }
            c.push(acc);
        }
    }
    Ok(c)
}
