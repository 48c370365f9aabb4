use crate::ast::{flatten, lam, shift, subdiv, var, Expr, Scope};
use crate::layout::LayoutError;

use super::{consumed_extent, reduction_laws, shape_of, side, RuleError};

/// Splits each array's outer dim into `extent / b` blocks of `b`.
fn blocked(arrays: &[Expr], b: usize, scope: &Scope<'_>) -> Result<Vec<Expr>, RuleError> {
    let extent = consumed_extent(arrays, scope)?;
    arrays
        .iter()
        .map(|x| {
            let dim = shape_of(x, scope)?.rank() - 1;
            if b == 0 || extent % b != 0 {
                return Err(LayoutError::NotDivisible { dim, block: b, extent }.into());
            }
            Ok(subdiv(dim, b, x.clone()))
        })
        .collect()
}

fn bare_binders(n: usize) -> Vec<Expr> {
    (0..n).map(|p| var(0, p)).collect()
}

/// `nzip f xs` to `flatten (nzip (\ys -> nzip f ys) (subdiv xs))`.
pub fn subdivide_map(e: &Expr, b: usize, scope: &Scope<'_>) -> Result<Expr, RuleError> {
    let Expr::NZip(f, xs) = e else { return Err(RuleError::NoMatch) };
    let elem_rank = shape_of(e, scope)?.rank() - 1;
    let arrays = blocked(xs, b, scope)?;
    let inner = Expr::NZip(Box::new(shift(f, 1, 0)), bare_binders(xs.len()));
    Ok(flatten(elem_rank, Expr::NZip(Box::new(lam(xs.len(), inner)), arrays)))
}

/// `rnz r m xs` to `rnz r (\ys -> rnz r m ys) (subdiv xs)`; `r` must be associative.
pub fn subdivide_rnz(e: &Expr, b: usize, scope: &Scope<'_>) -> Result<Expr, RuleError> {
    let Expr::Rnz(r, m, xs) = e else { return Err(RuleError::NoMatch) };
    match reduction_laws(r) {
        Some((true, _)) => {}
        Some(_) => return Err(side("the reduction is not associative")),
        None => return Err(side("cannot establish the laws of the reduction")),
    }
    let arrays = blocked(xs, b, scope)?;
    let inner = Expr::Rnz(Box::new(shift(r, 1, 0)), Box::new(shift(m, 1, 0)), bare_binders(xs.len()));
    Ok(Expr::Rnz(r.clone(), Box::new(lam(xs.len(), inner)), arrays))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{dot, input, mk_rnz, prim_fn, ArrayType, ElemKind, PrimOp, TypeEnv};
    use crate::layout::Shape;

    fn env() -> TypeEnv {
        ["u", "v"]
            .into_iter()
            .map(|n| (n.to_string(), ArrayType::new(ElemKind::Int, Shape::row_major(&[8]).unwrap())))
            .collect()
    }

    #[test]
    fn dot_splits_into_blocks() {
        let env = env();
        let s = Scope::new(&env);
        let out = subdivide_rnz(&dot(input("u"), input("v")), 2, &s).unwrap();
        let expected = mk_rnz(
            prim_fn(PrimOp::Add),
            lam(2, dot(var(0, 0), var(0, 1))),
            vec![subdiv(0, 2, input("u")), subdiv(0, 2, input("v"))],
        )
        .unwrap();
        assert_eq!(out, expected);
        assert_eq!(shape_of(&out, &s).unwrap(), Shape::scalar());
    }

    #[test]
    fn non_associative_reduction_refused() {
        let env = env();
        let s = Scope::new(&env);
        for op in [PrimOp::Sub, PrimOp::Div] {
            let e = mk_rnz(prim_fn(op), prim_fn(PrimOp::Mul), vec![input("u"), input("v")]).unwrap();
            assert!(matches!(subdivide_rnz(&e, 2, &s), Err(RuleError::SideCondition(_))));
        }
    }

    #[test]
    fn indivisible_block_refused() {
        let env = env();
        let s = Scope::new(&env);
        assert!(matches!(
            subdivide_rnz(&dot(input("u"), input("v")), 3, &s),
            Err(RuleError::Layout(LayoutError::NotDivisible { extent: 8, block: 3, .. }))
        ));
    }

    #[test]
    fn map_keeps_its_shape() {
        let env = env();
        let s = Scope::new(&env);
        let e = crate::ast::mk_zip(prim_fn(PrimOp::Add), input("u"), input("v")).unwrap();
        let out = subdivide_map(&e, 4, &s).unwrap();
        assert_eq!(shape_of(&out, &s).unwrap(), Shape::row_major(&[8]).unwrap());
    }
}
