//! Expression language: variadic map/zip (`NZip`) and reduce-of-zips (`Rnz`)
//! over strided views, scalar primitives, lambdas with nameless binders, and
//! layout nodes.
//!
//! Variables are `(up, pos)` pairs: `up` counts enclosing lambdas outward
//! (0 is the innermost), `pos` selects a parameter of that lambda. Lambda
//! parameter names are kept only as printing hints and are erased by
//! [`alpha_canonicalize`].

mod infer;
pub mod sexp;

use std::fmt;

use thiserror::Error;

pub use infer::{
    element_types, infer_call, infer_in, infer_shape, ArrayType, ElemKind, Scope, Ty, TypeEnv, TypeError,
};

use crate::layout::LayoutOp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PrimOp {
    Add,
    Mul,
    Sub,
    Div,
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpMeta {
    pub op: PrimOp,
    pub associative: bool,
    pub commutative: bool,
}

impl PrimOp {
    pub const ALL: [PrimOp; 6] = [
        PrimOp::Add,
        PrimOp::Mul,
        PrimOp::Sub,
        PrimOp::Div,
        PrimOp::Min,
        PrimOp::Max,
    ];

    pub fn meta(self) -> OpMeta {
        let lawful = !matches!(self, PrimOp::Sub | PrimOp::Div);
        OpMeta { op: self, associative: lawful, commutative: lawful }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            PrimOp::Add => "+",
            PrimOp::Mul => "*",
            PrimOp::Sub => "-",
            PrimOp::Div => "/",
            PrimOp::Min => "min",
            PrimOp::Max => "max",
        }
    }

    pub fn from_symbol(s: &str) -> Option<PrimOp> {
        PrimOp::ALL.into_iter().find(|op| op.symbol() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarRef {
    pub up: usize,
    pub pos: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lambda {
    pub arity: usize,
    /// Printing hints; empty or `arity` long.
    pub names: Vec<String>,
    pub body: Box<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Input(String),
    Const(f64),
    Var(VarRef),
    Lambda(Lambda),
    Apply(Box<Expr>, Vec<Expr>),
    Prim(PrimOp, Vec<Expr>),
    NZip(Box<Expr>, Vec<Expr>),
    Rnz(Box<Expr>, Box<Expr>, Vec<Expr>),
    Subdiv { dim: usize, block: usize, array: Box<Expr> },
    Flatten { dim: usize, array: Box<Expr> },
    Flip { a: usize, b: usize, array: Box<Expr> },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AstError {
    #[error("expected a function value, found {0}")]
    NotAFunction(String),
    #[error("function of arity {expected} applied to {got} arrays")]
    ArityMismatch { expected: usize, got: usize },
    #[error("argument position {pos} out of range for arity {arity}")]
    PositionOutOfRange { pos: usize, arity: usize },
    #[error("a higher-order function needs at least one array")]
    NoArrays,
}

pub fn var(up: usize, pos: usize) -> Expr {
    Expr::Var(VarRef { up, pos })
}

pub fn input(name: &str) -> Expr {
    Expr::Input(name.to_string())
}

pub fn lam(arity: usize, body: Expr) -> Expr {
    Expr::Lambda(Lambda { arity, names: Vec::new(), body: Box::new(body) })
}

pub fn lam_named(names: &[&str], body: Expr) -> Expr {
    Expr::Lambda(Lambda {
        arity: names.len(),
        names: names.iter().map(|s| s.to_string()).collect(),
        body: Box::new(body),
    })
}

pub fn prim(op: PrimOp, a: Expr, b: Expr) -> Expr {
    Expr::Prim(op, vec![a, b])
}

/// The binary primitive as a function value, `\x y -> x op y`.
pub fn prim_fn(op: PrimOp) -> Expr {
    lam(2, prim(op, var(0, 0), var(0, 1)))
}

pub fn identity() -> Expr {
    lam(1, var(0, 0))
}

pub fn subdiv(dim: usize, block: usize, array: Expr) -> Expr {
    Expr::Subdiv { dim, block, array: Box::new(array) }
}

pub fn flatten(dim: usize, array: Expr) -> Expr {
    Expr::Flatten { dim, array: Box::new(array) }
}

pub fn flip(a: usize, b: usize, array: Expr) -> Expr {
    Expr::Flip { a, b, array: Box::new(array) }
}

pub fn layout(op: LayoutOp, array: Expr) -> Expr {
    match op {
        LayoutOp::Subdiv { dim, block } => subdiv(dim, block, array),
        LayoutOp::Flatten { dim } => flatten(dim, array),
        LayoutOp::Flip { a, b } => flip(a, b, array),
    }
}

/// Splits `e` into its outermost chain of layout nodes and the node beneath.
/// The chain is returned in application order (innermost node first).
pub fn peel_layouts(e: &Expr) -> (Vec<LayoutOp>, &Expr) {
    let mut ops = Vec::new();
    let mut cur = e;
    loop {
        match cur {
            Expr::Subdiv { dim, block, array } => {
                ops.push(LayoutOp::Subdiv { dim: *dim, block: *block });
                cur = array;
            }
            Expr::Flatten { dim, array } => {
                ops.push(LayoutOp::Flatten { dim: *dim });
                cur = array;
            }
            Expr::Flip { a, b, array } => {
                ops.push(LayoutOp::Flip { a: *a, b: *b });
                cur = array;
            }
            _ => break,
        }
    }
    ops.reverse();
    (ops, cur)
}

/// Wraps `base` in `chain`, first op innermost.
pub fn wrap_layouts(chain: &[LayoutOp], base: Expr) -> Expr {
    chain.iter().fold(base, |acc, op| layout(*op, acc))
}

pub fn arity_of(f: &Expr) -> Result<usize, AstError> {
    match f {
        Expr::Lambda(l) => Ok(l.arity),
        other => Err(AstError::NotAFunction(other.to_string())),
    }
}

pub fn mk_nzip(f: Expr, arrays: Vec<Expr>) -> Result<Expr, AstError> {
    if arrays.is_empty() {
        return Err(AstError::NoArrays);
    }
    let n = arity_of(&f)?;
    if n != arrays.len() {
        return Err(AstError::ArityMismatch { expected: n, got: arrays.len() });
    }
    Ok(Expr::NZip(Box::new(f), arrays))
}

pub fn mk_map(f: Expr, x: Expr) -> Result<Expr, AstError> {
    mk_nzip(f, vec![x])
}

pub fn mk_zip(f: Expr, x: Expr, y: Expr) -> Result<Expr, AstError> {
    mk_nzip(f, vec![x, y])
}

pub fn mk_rnz(r: Expr, m: Expr, arrays: Vec<Expr>) -> Result<Expr, AstError> {
    if arrays.is_empty() {
        return Err(AstError::NoArrays);
    }
    let ra = arity_of(&r)?;
    if ra != 2 {
        return Err(AstError::ArityMismatch { expected: 2, got: ra });
    }
    let n = arity_of(&m)?;
    if n != arrays.len() {
        return Err(AstError::ArityMismatch { expected: n, got: arrays.len() });
    }
    Ok(Expr::Rnz(Box::new(r), Box::new(m), arrays))
}

/// `reduce r xs` is `rnz r id xs`.
pub fn mk_reduce(r: Expr, x: Expr) -> Result<Expr, AstError> {
    mk_rnz(r, identity(), vec![x])
}

/// `dot u v = rnz (+) (*) u v`.
pub fn dot(u: Expr, v: Expr) -> Expr {
    Expr::Rnz(
        Box::new(prim_fn(PrimOp::Add)),
        Box::new(prim_fn(PrimOp::Mul)),
        vec![u, v],
    )
}

impl Expr {
    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Input(_) | Expr::Const(_) | Expr::Var(_) => Vec::new(),
            Expr::Lambda(l) => vec![&l.body],
            Expr::Apply(f, args) => std::iter::once(f.as_ref()).chain(args).collect(),
            Expr::Prim(_, xs) => xs.iter().collect(),
            Expr::NZip(f, xs) => std::iter::once(f.as_ref()).chain(xs).collect(),
            Expr::Rnz(r, m, xs) => [r.as_ref(), m.as_ref()].into_iter().chain(xs).collect(),
            Expr::Subdiv { array, .. } | Expr::Flatten { array, .. } | Expr::Flip { array, .. } => {
                vec![array]
            }
        }
    }

    pub fn child(&self, i: usize) -> Option<&Expr> {
        self.children().get(i).copied()
    }

    pub fn child_mut(&mut self, i: usize) -> Option<&mut Expr> {
        match self {
            Expr::Input(_) | Expr::Const(_) | Expr::Var(_) => None,
            Expr::Lambda(l) => (i == 0).then_some(l.body.as_mut()),
            Expr::Apply(f, args) | Expr::NZip(f, args) => {
                if i == 0 {
                    Some(f.as_mut())
                } else {
                    args.get_mut(i - 1)
                }
            }
            Expr::Prim(_, xs) => xs.get_mut(i),
            Expr::Rnz(r, m, xs) => match i {
                0 => Some(r.as_mut()),
                1 => Some(m.as_mut()),
                _ => xs.get_mut(i - 2),
            },
            Expr::Subdiv { array, .. } | Expr::Flatten { array, .. } | Expr::Flip { array, .. } => {
                (i == 0).then_some(array.as_mut())
            }
        }
    }

    /// Rebuilds the node with every child replaced by `f(child)`.
    pub fn map_children(&self, mut f: impl FnMut(&Expr) -> Expr) -> Expr {
        match self {
            Expr::Input(_) | Expr::Const(_) | Expr::Var(_) => self.clone(),
            Expr::Lambda(l) => Expr::Lambda(Lambda {
                arity: l.arity,
                names: l.names.clone(),
                body: Box::new(f(&l.body)),
            }),
            Expr::Apply(g, args) => Expr::Apply(Box::new(f(g)), args.iter().map(&mut f).collect()),
            Expr::Prim(op, xs) => Expr::Prim(*op, xs.iter().map(f).collect()),
            Expr::NZip(g, xs) => Expr::NZip(Box::new(f(g)), xs.iter().map(&mut f).collect()),
            Expr::Rnz(r, m, xs) => {
                let r = f(r);
                let m = f(m);
                Expr::Rnz(Box::new(r), Box::new(m), xs.iter().map(f).collect())
            }
            Expr::Subdiv { dim, block, array } => subdiv(*dim, *block, f(array)),
            Expr::Flatten { dim, array } => flatten(*dim, f(array)),
            Expr::Flip { a, b, array } => flip(*a, *b, f(array)),
        }
    }

    pub fn at_path(&self, path: &[usize]) -> Option<&Expr> {
        path.iter().try_fold(self, |e, &i| e.child(i))
    }

    pub fn at_path_mut(&mut self, path: &[usize]) -> Option<&mut Expr> {
        let mut cur = self;
        for &i in path {
            cur = cur.child_mut(i)?;
        }
        Some(cur)
    }

    /// Copy of `self` with the node at `path` replaced.
    pub fn replace_at(&self, path: &[usize], new: Expr) -> Option<Expr> {
        let mut out = self.clone();
        *out.at_path_mut(path)? = new;
        Some(out)
    }

    pub fn is_hof(&self) -> bool {
        matches!(self, Expr::NZip(..) | Expr::Rnz(..))
    }

    pub fn as_lambda(&self) -> Option<&Lambda> {
        match self {
            Expr::Lambda(l) => Some(l),
            _ => None,
        }
    }
}

/// Number of `NZip` and `Rnz` nodes.
pub fn hof_count(e: &Expr) -> usize {
    usize::from(e.is_hof()) + e.children().into_iter().map(hof_count).sum::<usize>()
}

pub fn contains_hof(e: &Expr) -> bool {
    e.is_hof() || e.children().into_iter().any(contains_hof)
}

/// Rewrites every variable occurrence. The callback receives the number of
/// lambdas entered below the starting node and the original reference.
pub fn map_vars(e: &Expr, f: &mut dyn FnMut(usize, VarRef) -> Expr) -> Expr {
    fn go(e: &Expr, depth: usize, f: &mut dyn FnMut(usize, VarRef) -> Expr) -> Expr {
        match e {
            Expr::Var(v) => f(depth, *v),
            Expr::Lambda(l) => Expr::Lambda(Lambda {
                arity: l.arity,
                names: l.names.clone(),
                body: Box::new(go(&l.body, depth + 1, f)),
            }),
            other => other.map_children(|c| go(c, depth, f)),
        }
    }
    go(e, 0, f)
}

/// Visits every variable occurrence with its local lambda depth.
pub fn for_each_var(e: &Expr, f: &mut dyn FnMut(usize, VarRef)) {
    fn go(e: &Expr, depth: usize, f: &mut dyn FnMut(usize, VarRef)) {
        match e {
            Expr::Var(v) => f(depth, *v),
            Expr::Lambda(l) => go(&l.body, depth + 1, f),
            other => other.children().into_iter().for_each(|c| go(c, depth, f)),
        }
    }
    go(e, 0, f)
}

/// Adds `amount` to the `up` of every variable that escapes `cutoff` binder levels.
pub fn shift(e: &Expr, amount: isize, cutoff: usize) -> Expr {
    map_vars(e, &mut |depth, v| {
        if v.up >= depth + cutoff {
            let up = v.up as isize + amount;
            debug_assert!(up >= 0, "negative shift");
            var(up as usize, v.pos)
        } else {
            Expr::Var(v)
        }
    })
}

/// Occurrences of parameter `pos` of the binder `level` levels above `e`.
pub fn occurrences(e: &Expr, level: usize, pos: usize) -> usize {
    let mut n = 0;
    for_each_var(e, &mut |depth, v| {
        if v.up == depth + level && v.pos == pos {
            n += 1;
        }
    });
    n
}

/// Whether `e` refers to any parameter of the binder `level` levels above it.
pub fn references_level(e: &Expr, level: usize) -> bool {
    let mut hit = false;
    for_each_var(e, &mut |depth, v| hit |= v.up == depth + level);
    hit
}

/// Whether `e` has no free variables.
pub fn is_closed(e: &Expr) -> bool {
    let mut closed = true;
    for_each_var(e, &mut |depth, v| closed &= v.up < depth);
    closed
}

/// Substitutes the parameters of a lambda whose body is `body`. The result
/// lives in the lambda's enclosing context.
pub fn instantiate(body: &Expr, args: &[Expr]) -> Expr {
    map_vars(body, &mut |depth, v| {
        if v.up == depth {
            shift(&args[v.pos], depth as isize, 0)
        } else if v.up > depth {
            var(v.up - 1, v.pos)
        } else {
            Expr::Var(v)
        }
    })
}

/// Beta-reduces `(\params -> body) args`, or `None` when an argument that
/// computes an array would be copied into several use sites.
pub fn beta_apply(l: &Lambda, args: &[Expr]) -> Option<Expr> {
    if args.len() != l.arity {
        return None;
    }
    for (pos, arg) in args.iter().enumerate() {
        if contains_hof(arg) && occurrences(&l.body, 0, pos) > 1 {
            return None;
        }
    }
    Some(instantiate(&l.body, args))
}

/// Generalized composition: `g` is inserted before argument `i` of `f`.
/// The result takes `arity(f) + arity(g) - 1` arguments.
pub fn ncomp(i: usize, f: &Expr, g: &Expr) -> Result<Expr, AstError> {
    let fl = f.as_lambda().ok_or_else(|| AstError::NotAFunction(f.to_string()))?;
    let gl = g.as_lambda().ok_or_else(|| AstError::NotAFunction(g.to_string()))?;
    let (n, m) = (fl.arity, gl.arity);
    if i >= n {
        return Err(AstError::PositionOutOfRange { pos: i, arity: n });
    }
    // g's parameters become positions i..i+m of the new lambda, same binder depth.
    let g_body = map_vars(&gl.body, &mut |depth, v| {
        if v.up == depth {
            var(depth, i + v.pos)
        } else {
            Expr::Var(v)
        }
    });
    let args: Vec<Expr> = (0..n)
        .map(|j| match j.cmp(&i) {
            std::cmp::Ordering::Less => var(0, j),
            std::cmp::Ordering::Equal => g_body.clone(),
            std::cmp::Ordering::Greater => var(0, j + m - 1),
        })
        .collect();
    let body = if contains_hof(&g_body) && occurrences(&fl.body, 0, i) > 1 {
        Expr::Apply(Box::new(shift(f, 1, 0)), args)
    } else {
        // rebinding f's parameters at the same depth: no level is removed
        map_vars(&fl.body, &mut |depth, v| {
            if v.up == depth {
                shift(&args[v.pos], depth as isize, 0)
            } else {
                Expr::Var(v)
            }
        })
    };
    let names = if fl.names.len() == n && gl.names.len() == m {
        fl.names[..i]
            .iter()
            .chain(&gl.names)
            .chain(&fl.names[i + 1..])
            .cloned()
            .collect()
    } else {
        Vec::new()
    };
    Ok(Expr::Lambda(Lambda { arity: n + m - 1, names, body: Box::new(body) }))
}

/// Raises `f` to operate elementwise over arrays: `\a1 .. an -> nzip f a1 .. an`.
pub fn lift(f: &Expr) -> Result<Expr, AstError> {
    let n = arity_of(f)?;
    let arrays = (0..n).map(|p| var(0, p)).collect();
    Ok(lam(n, Expr::NZip(Box::new(shift(f, 1, 0)), arrays)))
}

/// Inverse of [`lift`] on its exact output form.
pub fn as_lift(e: &Expr) -> Option<Expr> {
    let l = e.as_lambda()?;
    let Expr::NZip(f, xs) = l.body.as_ref() else {
        return None;
    };
    let bare = xs.len() == l.arity && xs.iter().enumerate().all(|(p, x)| *x == var(0, p));
    if !bare || references_level(f, 0) || arity_of(f).ok()? != l.arity {
        return None;
    }
    Some(shift(f, -1, 0))
}

/// Recognizes `\x y -> x op y`.
pub fn as_prim_fn(e: &Expr) -> Option<PrimOp> {
    let l = e.as_lambda()?;
    match l.body.as_ref() {
        Expr::Prim(op, xs) if l.arity == 2 && xs.as_slice() == [var(0, 0), var(0, 1)] => Some(*op),
        _ => None,
    }
}

/// A reduction function of the form `lift^k (op)`: returns the primitive and `k`.
pub fn reduce_op(r: &Expr) -> Option<(PrimOp, usize)> {
    if let Some(op) = as_prim_fn(r) {
        return Some((op, 0));
    }
    let inner = as_lift(r)?;
    let (op, k) = reduce_op(&inner)?;
    Some((op, k + 1))
}

/// Canonical nameless form: parameter hints erased, flips ordered, identity
/// flips removed. Alpha-equivalent terms canonicalize identically.
pub fn alpha_canonicalize(e: &Expr) -> Expr {
    match e {
        Expr::Lambda(l) => Expr::Lambda(Lambda {
            arity: l.arity,
            names: Vec::new(),
            body: Box::new(alpha_canonicalize(&l.body)),
        }),
        Expr::Flip { a, b, array } => {
            let array = alpha_canonicalize(array);
            if a == b {
                array
            } else {
                flip(*a.min(b), *a.max(b), array)
            }
        }
        Expr::Const(c) if *c == 0.0 => Expr::Const(0.0),
        other => other.map_children(alpha_canonicalize),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&sexp::to_sexp(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn add() -> Expr {
        prim_fn(PrimOp::Add)
    }

    fn mul() -> Expr {
        prim_fn(PrimOp::Mul)
    }

    #[test]
    fn sugar_builds_nzip() {
        let neg = lam(1, prim(PrimOp::Sub, Expr::Const(0.0), var(0, 0)));
        assert_eq!(
            mk_map(neg.clone(), input("v")).unwrap(),
            Expr::NZip(Box::new(neg), vec![input("v")])
        );
        assert_eq!(
            mk_zip(add(), input("u"), input("v")).unwrap(),
            Expr::NZip(Box::new(add()), vec![input("u"), input("v")])
        );
        assert_eq!(
            dot(input("u"), input("v")),
            mk_rnz(add(), mul(), vec![input("u"), input("v")]).unwrap()
        );
        assert!(matches!(
            mk_map(add(), input("v")),
            Err(AstError::ArityMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn ncomp_add_mul() {
        // \x y z -> (x*y)+z
        let c = ncomp(0, &add(), &mul()).unwrap();
        let expected = lam(3, prim(PrimOp::Add, prim(PrimOp::Mul, var(0, 0), var(0, 1)), var(0, 2)));
        assert_eq!(alpha_canonicalize(&c), expected);
        assert_eq!(arity_of(&c).unwrap(), 3);
    }

    #[test]
    fn ncomp_sub_mul_at_one() {
        // \a x y -> a - (x*y)
        let c = ncomp(1, &prim_fn(PrimOp::Sub), &mul()).unwrap();
        let expected = lam(3, prim(PrimOp::Sub, var(0, 0), prim(PrimOp::Mul, var(0, 1), var(0, 2))));
        assert_eq!(alpha_canonicalize(&c), expected);
    }

    #[test]
    fn ncomp_identity_is_neutral() {
        let f = lam(2, prim(PrimOp::Sub, var(0, 1), var(0, 0)));
        for i in 0..2 {
            assert_eq!(alpha_canonicalize(&ncomp(i, &f, &identity()).unwrap()), f);
        }
    }

    #[test]
    fn ncomp_errors() {
        assert!(matches!(
            ncomp(2, &add(), &mul()),
            Err(AstError::PositionOutOfRange { pos: 2, arity: 2 })
        ));
        assert!(matches!(ncomp(0, &input("A"), &mul()), Err(AstError::NotAFunction(_))));
    }

    #[test]
    fn ncomp_keeps_free_variables() {
        // f refers to a variable one level outside itself
        let f = lam(1, prim(PrimOp::Mul, var(0, 0), var(1, 0)));
        let g = lam(2, prim(PrimOp::Add, var(0, 0), var(1, 1)));
        let c = ncomp(0, &f, &g).unwrap();
        let expected = lam(
            2,
            prim(PrimOp::Mul, prim(PrimOp::Add, var(0, 0), var(1, 1)), var(1, 0)),
        );
        assert_eq!(c, expected);
    }

    #[test]
    fn lift_round_trip() {
        let l = lift(&add()).unwrap();
        assert_eq!(arity_of(&l).unwrap(), 2);
        assert_eq!(as_lift(&l), Some(add()));
        assert_eq!(reduce_op(&l), Some((PrimOp::Add, 1)));
        assert_eq!(reduce_op(&lift(&l).unwrap()), Some((PrimOp::Add, 2)));
        assert_eq!(reduce_op(&identity()), None);
        assert!(lift(&input("A")).is_err());
    }

    #[test]
    fn canonical_forms() {
        let x = lam_named(&["x"], var(0, 0));
        let y = lam_named(&["y"], var(0, 0));
        assert_ne!(x, y);
        assert_eq!(alpha_canonicalize(&x), alpha_canonicalize(&y));
        let k1 = lam_named(&["x"], lam_named(&["y"], var(1, 0)));
        let k2 = lam_named(&["x"], lam_named(&["y"], var(0, 0)));
        assert_ne!(alpha_canonicalize(&k1), alpha_canonicalize(&k2));
        let e = flip(1, 0, lam_named(&["q"], var(0, 0)));
        let once = alpha_canonicalize(&e);
        assert_eq!(alpha_canonicalize(&once), once);
    }

    #[test]
    fn instantiate_shifts_under_binders() {
        // (\x -> \y -> x + y) applied to a free variable w (up 0 outside)
        let body = lam(1, prim(PrimOp::Add, var(1, 0), var(0, 0)));
        let out = instantiate(&body, &[var(0, 3)]);
        assert_eq!(out, lam(1, prim(PrimOp::Add, var(1, 3), var(0, 0))));
    }

    #[test]
    fn beta_refuses_array_duplication() {
        let body = Expr::NZip(Box::new(add()), vec![var(0, 0), var(0, 0)]);
        let l = Lambda { arity: 1, names: vec![], body: Box::new(body) };
        let arg = mk_map(identity(), input("v")).unwrap();
        assert!(beta_apply(&l, &[arg]).is_none());
        assert!(beta_apply(&l, &[input("v")]).is_some());
    }

    #[test]
    fn paths() {
        let e = dot(input("u"), input("v"));
        assert_eq!(e.at_path(&[3]), Some(&input("v")));
        let e2 = e.replace_at(&[2], input("w")).unwrap();
        assert_eq!(e2, dot(input("w"), input("v")));
        assert_eq!(hof_count(&e2), 1);
    }
}
