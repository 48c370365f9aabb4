//! Exchange of two directly nested HoFs.
//!
//! The outer HoF binds `x_i` to slices of its arrays `X_i`; its function body
//! is the inner HoF, whose arrays `W_j` are either a bare outer binder or free
//! of outer binders. After the exchange the inner arrays drive the new outer
//! loop: a bare binder `x_i` becomes `flip (X_i)` so the new outer HoF walks
//! the second dimension of `X_i`, and a free `W_j` moves out unchanged.

use crate::ast::{
    alpha_canonicalize, as_lift, flip, lift, map_vars, occurrences, references_level, shift, var, Expr, Lambda,
    Scope,
};

use super::{reduction_laws, shape_of, side, RuleError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairKind {
    MapMap,
    MapRnz,
    RnzMap,
    RnzRnz,
}

struct Hof<'a> {
    reducer: Option<&'a Expr>,
    f: &'a Lambda,
    arrays: &'a [Expr],
}

fn hof(e: &Expr) -> Option<Hof<'_>> {
    match e {
        Expr::NZip(f, xs) => Some(Hof { reducer: None, f: f.as_lambda()?, arrays: xs }),
        Expr::Rnz(r, m, xs) => Some(Hof { reducer: Some(r), f: m.as_lambda()?, arrays: xs }),
        _ => None,
    }
}

/// The kind of the HoF pair rooted at `e`, if `e`'s function body is a HoF.
pub fn pair_kind(e: &Expr) -> Option<PairKind> {
    let outer = hof(e)?;
    let inner = hof(&outer.f.body)?;
    Some(match (outer.reducer.is_some(), inner.reducer.is_some()) {
        (false, false) => PairKind::MapMap,
        (false, true) => PairKind::MapRnz,
        (true, false) => PairKind::RnzMap,
        (true, true) => PairKind::RnzRnz,
    })
}

#[derive(Clone, Copy)]
enum Source {
    Binder(usize),
    Free,
}

fn with_body(l: &Lambda, body: Expr) -> Expr {
    Expr::Lambda(Lambda { arity: l.arity, names: l.names.clone(), body: Box::new(body) })
}

fn build(reducer: Option<Expr>, f: Expr, arrays: Vec<Expr>) -> Expr {
    match reducer {
        Some(r) => Expr::Rnz(Box::new(r), Box::new(f), arrays),
        None => Expr::NZip(Box::new(f), arrays),
    }
}

/// Swaps the HoF at `e` with the HoF forming its function body.
pub fn exchange(e: &Expr, scope: &Scope<'_>) -> Result<Expr, RuleError> {
    let kind = pair_kind(e).ok_or(RuleError::NoMatch)?;
    let outer = hof(e).ok_or(RuleError::NoMatch)?;
    let inner = hof(&outer.f.body).ok_or(RuleError::NoMatch)?;
    let n = outer.f.arity;

    let mut sources = Vec::with_capacity(inner.arrays.len());
    let mut slot_of: Vec<Option<usize>> = vec![None; n];
    for (j, w) in inner.arrays.iter().enumerate() {
        match w {
            Expr::Var(v) if v.up == 0 => {
                if slot_of[v.pos].replace(j).is_some() {
                    return Err(side("an outer binder is zipped twice by the inner HoF"));
                }
                sources.push(Source::Binder(v.pos));
            }
            w if !references_level(w, 0) => sources.push(Source::Free),
            _ => return Err(side("an inner array is computed from an outer binder")),
        }
    }
    for (i, slot) in slot_of.iter().enumerate() {
        if slot.is_some() && occurrences(&outer.f.body, 0, i) != 1 {
            return Err(side("an outer binder is both zipped and used in the inner function"));
        }
    }

    let (new_outer_red, new_inner_red) = match kind {
        PairKind::MapMap => (None, None),
        PairKind::MapRnz => {
            let r = inner.reducer.expect("rnz");
            if references_level(r, 0) {
                return Err(side("the reduction refers to an outer binder"));
            }
            (Some(lift(&shift(r, -1, 0))?), None)
        }
        PairKind::RnzMap => {
            let r1 = outer.reducer.expect("rnz");
            let r = as_lift(r1).ok_or_else(|| side("the outer reduction is not an elementwise lift"))?;
            (None, Some(shift(&r, 1, 0)))
        }
        PairKind::RnzRnz => {
            let (r1, r2) = (outer.reducer.expect("rnz"), inner.reducer.expect("rnz"));
            if references_level(r2, 0) {
                return Err(side("the inner reduction refers to an outer binder"));
            }
            if alpha_canonicalize(r1) != alpha_canonicalize(&shift(r2, -1, 0)) {
                return Err(side("the two reductions differ"));
            }
            match reduction_laws(r1) {
                Some((true, true)) => {}
                Some(_) => return Err(side("the reduction is not associative and commutative")),
                None => return Err(side("cannot establish the laws of the reduction")),
            }
            (Some(r1.clone()), Some(shift(r1, 1, 0)))
        }
    };

    let body = map_vars(&inner.f.body, &mut |depth, v| {
        if v.up == depth {
            match sources[v.pos] {
                Source::Binder(i) => var(depth, i),
                Source::Free => var(depth + 1, v.pos),
            }
        } else if v.up == depth + 1 {
            var(depth, v.pos)
        } else {
            Expr::Var(v)
        }
    });
    let inner_arrays = (0..n)
        .map(|i| match slot_of[i] {
            Some(j) => var(0, j),
            None => shift(&outer.arrays[i], 1, 0),
        })
        .collect();
    let new_inner = build(new_inner_red, with_body(outer.f, body), inner_arrays);

    let mut outer_arrays = Vec::with_capacity(sources.len());
    for (j, src) in sources.iter().enumerate() {
        outer_arrays.push(match *src {
            Source::Binder(i) => {
                let rank = shape_of(&outer.arrays[i], scope)?.rank();
                flip(rank - 2, rank - 1, outer.arrays[i].clone())
            }
            Source::Free => shift(&inner.arrays[j], -1, 0),
        });
    }
    let swapped = build(new_outer_red, with_body(inner.f, new_inner), outer_arrays);

    if kind == PairKind::MapMap {
        let rank = shape_of(e, scope)?.rank();
        return Ok(flip(rank - 2, rank - 1, swapped));
    }
    Ok(swapped)
}

fn exchange_of(kinds: &[PairKind], e: &Expr, scope: &Scope<'_>) -> Result<Expr, RuleError> {
    match pair_kind(e) {
        Some(k) if kinds.contains(&k) => exchange(e, scope),
        _ => Err(RuleError::NoMatch),
    }
}

/// Dyadic-product exchange; the result carries a flip of its two outer dims.
pub fn exchange_map_map(e: &Expr, scope: &Scope<'_>) -> Result<Expr, RuleError> {
    exchange_of(&[PairKind::MapMap], e, scope)
}

/// The map/rnz flip identity in either direction.
pub fn exchange_map_rnz(e: &Expr, scope: &Scope<'_>) -> Result<Expr, RuleError> {
    exchange_of(&[PairKind::MapRnz, PairKind::RnzMap], e, scope)
}

/// Swaps two nested reductions sharing one associative, commutative operator.
pub fn exchange_rnz_rnz(e: &Expr, scope: &Scope<'_>) -> Result<Expr, RuleError> {
    exchange_of(&[PairKind::RnzRnz], e, scope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{dot, input, lam, lam_named, mk_map, mk_rnz, prim, prim_fn, ArrayType, ElemKind, PrimOp, TypeEnv};
    use crate::layout::Shape;
    use crate::rewrite::normalize;

    fn env(pairs: &[(&str, &[usize])]) -> TypeEnv {
        pairs
            .iter()
            .map(|(n, ex)| (n.to_string(), ArrayType::new(ElemKind::Int, Shape::row_major(ex).unwrap())))
            .collect()
    }

    fn matvec() -> Expr {
        mk_map(lam_named(&["r"], dot(var(0, 0), input("u"))), input("A")).unwrap()
    }

    #[test]
    fn matvec_row_form_to_column_form() {
        let env = env(&[("A", &[3, 4]), ("u", &[3])]);
        let out = exchange_map_rnz(&matvec(), &Scope::new(&env)).unwrap();
        // rnz (zip (+)) (\c q -> map (\e -> e*q) c) (flip 0 A) u
        let column = lam(2, mk_map(lam(1, prim(PrimOp::Mul, var(0, 0), var(1, 1))), var(0, 0)).unwrap());
        let expected = mk_rnz(
            lift(&prim_fn(PrimOp::Add)).unwrap(),
            column,
            vec![flip(0, 1, input("A")), input("u")],
        )
        .unwrap();
        assert_eq!(alpha_canonicalize(&out), alpha_canonicalize(&expected));
    }

    #[test]
    fn flip_identity_is_an_involution() {
        let env = env(&[("A", &[3, 4]), ("u", &[3])]);
        let s = Scope::new(&env);
        let once = exchange_map_rnz(&matvec(), &s).unwrap();
        let twice = normalize(&exchange_map_rnz(&once, &s).unwrap());
        assert_eq!(alpha_canonicalize(&twice), alpha_canonicalize(&matvec()));
    }

    #[test]
    fn dyadic_product_flips_its_result() {
        let env = env(&[("u", &[3]), ("v", &[4])]);
        let rows = mk_map(
            lam(1, mk_map(lam(1, prim(PrimOp::Mul, var(1, 0), var(0, 0))), input("u")).unwrap()),
            input("v"),
        )
        .unwrap();
        let s = Scope::new(&env);
        let out = exchange_map_map(&rows, &s).unwrap();
        assert!(matches!(out, Expr::Flip { a: 0, b: 1, .. }));
        assert_eq!(shape_of(&out, &s).unwrap().extents(), vec![3, 4]);
        let Expr::Flip { array: swapped, .. } = &out else { unreachable!() };
        let again = normalize(&flip(0, 1, exchange_map_map(swapped, &s).unwrap()));
        assert_eq!(alpha_canonicalize(&again), alpha_canonicalize(&rows));
    }

    #[test]
    fn rnz_rnz_side_conditions() {
        let env = env(&[("X", &[3, 4])]);
        let s = Scope::new(&env);
        let nested = |outer: PrimOp, inner: PrimOp| {
            mk_rnz(
                prim_fn(outer),
                lam(1, mk_rnz(prim_fn(inner), lam(1, var(0, 0)), vec![var(0, 0)]).unwrap()),
                vec![input("X")],
            )
            .unwrap()
        };
        assert!(exchange_rnz_rnz(&nested(PrimOp::Add, PrimOp::Add), &s).is_ok());
        assert!(exchange_rnz_rnz(&nested(PrimOp::Mul, PrimOp::Mul), &s).is_ok());
        for bad in [PrimOp::Sub, PrimOp::Div] {
            assert!(matches!(exchange_rnz_rnz(&nested(bad, bad), &s), Err(RuleError::SideCondition(_))));
        }
        assert!(matches!(
            exchange_rnz_rnz(&nested(PrimOp::Max, PrimOp::Add), &s),
            Err(RuleError::SideCondition(_))
        ));
        assert_eq!(exchange_rnz_rnz(&matvec(), &s), Err(RuleError::NoMatch));
    }
}
