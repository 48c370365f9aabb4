use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use super::{Expr, VarRef};
use crate::layout::{LayoutError, LayoutOp, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElemKind {
    Int,
    Float,
}

impl fmt::Display for ElemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ElemKind::Int => "int",
            ElemKind::Float => "float",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrayType {
    pub kind: ElemKind,
    pub shape: Shape,
}

impl ArrayType {
    pub fn new(kind: ElemKind, shape: Shape) -> Self {
        ArrayType { kind, shape }
    }
}

pub type TypeEnv = BTreeMap<String, ArrayType>;

/// Type of a subterm. Scalars are arrays of rank 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ty {
    Array(Shape),
    Func(usize),
    Unknown,
}

impl Ty {
    pub fn shape(&self) -> Option<&Shape> {
        match self {
            Ty::Array(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("unbound input `{0}`")]
    UnboundInput(String),
    #[error("unbound variable (up {up}, pos {pos})")]
    UnboundVar { up: usize, pos: usize },
    #[error("outer extents disagree: {0:?}")]
    ExtentMismatch(Vec<usize>),
    #[error("expected an array, found a scalar")]
    ScalarWhereArray,
    #[error("expected a scalar, found an array of shape {0}")]
    ArrayWhereScalar(Shape),
    #[error("expected a function value")]
    NotAFunction,
    #[error("unexpected function value")]
    FunctionWhereValue,
    #[error("function of arity {expected} called with {got} arguments")]
    ArityMismatch { expected: usize, got: usize },
    #[error("reduction function maps {from:?} to {to:?}")]
    ReductionShape { from: Vec<usize>, to: Vec<usize> },
    #[error("inputs mix element kinds")]
    KindMismatch,
    #[error("type depends on a binder of unknown type")]
    Unknown,
    #[error(transparent)]
    Layout(#[from] LayoutError),
}

/// Typing context: the input environment plus the types of enclosing binders.
#[derive(Debug, Clone)]
pub struct Scope<'a> {
    pub env: &'a TypeEnv,
    frames: Vec<Vec<Ty>>,
}

impl<'a> Scope<'a> {
    pub fn new(env: &'a TypeEnv) -> Self {
        Scope { env, frames: Vec::new() }
    }

    pub fn push(&mut self, frame: Vec<Ty>) {
        self.frames.push(frame);
    }

    pub fn pop(&mut self) {
        self.frames.pop();
    }

    pub fn depth(&self) -> usize {
        self.frames.len()
    }

    pub fn with_frame(&self, frame: Vec<Ty>) -> Scope<'a> {
        let mut s = self.clone();
        s.push(frame);
        s
    }

    pub fn lookup(&self, v: VarRef) -> Result<Ty, TypeError> {
        let unbound = TypeError::UnboundVar { up: v.up, pos: v.pos };
        let idx = self.frames.len().checked_sub(v.up + 1).ok_or(unbound.clone())?;
        self.frames[idx].get(v.pos).cloned().ok_or(unbound)
    }
}

/// Infers the result type of a closed program over `env`.
pub fn infer_shape(e: &Expr, env: &TypeEnv) -> Result<ArrayType, TypeError> {
    let mut kinds = env.values().map(|t| t.kind);
    let kind = kinds.next().unwrap_or(ElemKind::Float);
    if kinds.any(|k| k != kind) {
        return Err(TypeError::KindMismatch);
    }
    match infer_in(e, &Scope::new(env))? {
        Ty::Array(shape) => Ok(ArrayType { kind, shape }),
        Ty::Func(_) => Err(TypeError::FunctionWhereValue),
        Ty::Unknown => Err(TypeError::Unknown),
    }
}

fn array(ty: Ty) -> Result<Shape, TypeError> {
    match ty {
        Ty::Array(s) if s.is_scalar() => Err(TypeError::ScalarWhereArray),
        Ty::Array(s) => Ok(s),
        Ty::Func(_) => Err(TypeError::FunctionWhereValue),
        Ty::Unknown => Err(TypeError::Unknown),
    }
}

/// Types of the per-element slices handed to a HoF's function, and the
/// common outer extent.
pub fn element_types(
    arrays: &[Expr],
    scope: &Scope<'_>,
) -> Result<(usize, Vec<Ty>), TypeError> {
    let shapes = arrays
        .iter()
        .map(|a| infer_in(a, scope).and_then(array))
        .collect::<Result<Vec<_>, _>>()?;
    let extents: Vec<usize> = shapes.iter().map(|s| s.outermost().unwrap().extent).collect();
    if extents.windows(2).any(|w| w[0] != w[1]) {
        return Err(TypeError::ExtentMismatch(extents));
    }
    let elems = shapes.iter().map(|s| Ty::Array(s.inner())).collect();
    Ok((extents[0], elems))
}

/// Result type of calling the function expression `f` on `args`.
pub fn infer_call(f: &Expr, args: Vec<Ty>, scope: &Scope<'_>) -> Result<Ty, TypeError> {
    match f {
        Expr::Lambda(l) => {
            if l.arity != args.len() {
                return Err(TypeError::ArityMismatch { expected: l.arity, got: args.len() });
            }
            infer_in(&l.body, &scope.with_frame(args))
        }
        Expr::Var(v) => match scope.lookup(*v)? {
            Ty::Unknown => Err(TypeError::Unknown),
            _ => Err(TypeError::NotAFunction),
        },
        _ => Err(TypeError::NotAFunction),
    }
}

fn value(ty: Ty) -> Result<Shape, TypeError> {
    match ty {
        Ty::Array(s) => Ok(s),
        Ty::Func(_) => Err(TypeError::FunctionWhereValue),
        Ty::Unknown => Err(TypeError::Unknown),
    }
}

/// Infers a subterm's type inside `scope`.
pub fn infer_in(e: &Expr, scope: &Scope<'_>) -> Result<Ty, TypeError> {
    match e {
        Expr::Input(name) => scope
            .env
            .get(name)
            .map(|t| Ty::Array(t.shape.clone()))
            .ok_or_else(|| TypeError::UnboundInput(name.clone())),
        Expr::Const(_) => Ok(Ty::Array(Shape::scalar())),
        Expr::Var(v) => scope.lookup(*v),
        Expr::Lambda(l) => Ok(Ty::Func(l.arity)),
        Expr::Apply(f, args) => {
            let tys = args.iter().map(|a| infer_in(a, scope)).collect::<Result<Vec<_>, _>>()?;
            infer_call(f, tys, scope)
        }
        Expr::Prim(_, xs) => {
            for x in xs {
                let s = value(infer_in(x, scope)?)?;
                if !s.is_scalar() {
                    return Err(TypeError::ArrayWhereScalar(s));
                }
            }
            Ok(Ty::Array(Shape::scalar()))
        }
        Expr::NZip(f, arrays) => {
            let (extent, elems) = element_types(arrays, scope)?;
            let res = value(infer_call(f, elems, scope)?)?;
            let mut extents = res.extents();
            extents.push(extent);
            Ok(Ty::Array(Shape::row_major(&extents)?))
        }
        Expr::Rnz(r, m, arrays) => {
            let (_, elems) = element_types(arrays, scope)?;
            let res = value(infer_call(m, elems, scope)?)?;
            let norm = Shape::row_major(&res.extents())?;
            let out = value(infer_call(r, vec![Ty::Array(norm.clone()), Ty::Array(norm.clone())], scope)?)?;
            if out.extents() != norm.extents() {
                return Err(TypeError::ReductionShape { from: norm.extents(), to: out.extents() });
            }
            Ok(Ty::Array(norm))
        }
        Expr::Subdiv { dim, block, array } => apply_layout(LayoutOp::Subdiv { dim: *dim, block: *block }, array, scope),
        Expr::Flatten { dim, array } => apply_layout(LayoutOp::Flatten { dim: *dim }, array, scope),
        Expr::Flip { a, b, array } => apply_layout(LayoutOp::Flip { a: *a, b: *b }, array, scope),
    }
}

fn apply_layout(op: LayoutOp, array: &Expr, scope: &Scope<'_>) -> Result<Ty, TypeError> {
    let s = value(infer_in(array, scope)?)?;
    Ok(Ty::Array(op.apply_logical(&s)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::*;

    fn env(pairs: &[(&str, &[(usize, usize)])]) -> TypeEnv {
        pairs
            .iter()
            .map(|(n, dims)| {
                (n.to_string(), ArrayType::new(ElemKind::Int, Shape::new(dims.to_vec()).unwrap()))
            })
            .collect()
    }

    fn textbook_matvec() -> Expr {
        mk_map(lam_named(&["r"], dot(var(0, 0), input("u"))), input("A")).unwrap()
    }

    #[test]
    fn matvec_types() {
        let (n, m) = (5, 3);
        let env = env(&[("A", &[(m, 1), (n, m)]), ("u", &[(m, 1)])]);
        let t = infer_shape(&textbook_matvec(), &env).unwrap();
        assert_eq!(t.shape, Shape::row_major(&[n]).unwrap());
        assert_eq!(t.kind, ElemKind::Int);
    }

    #[test]
    fn rnz_removes_dimension() {
        let env = env(&[("u", &[(4, 1)]), ("v", &[(4, 1)])]);
        let t = infer_shape(&dot(input("u"), input("v")), &env).unwrap();
        assert!(t.shape.is_scalar());
    }

    #[test]
    fn mismatched_extents() {
        let env = env(&[("u", &[(4, 1)]), ("v", &[(3, 1)])]);
        let e = mk_zip(prim_fn(PrimOp::Add), input("u"), input("v")).unwrap();
        assert!(matches!(infer_shape(&e, &env), Err(TypeError::ExtentMismatch(_))));
    }

    #[test]
    fn lifted_add_keeps_shape() {
        let env = env(&[("x", &[(4, 1)]), ("y", &[(4, 1)])]);
        let e = Expr::Apply(Box::new(lift(&prim_fn(PrimOp::Add)).unwrap()), vec![input("x"), input("y")]);
        assert_eq!(infer_shape(&e, &env).unwrap().shape, Shape::row_major(&[4]).unwrap());
    }

    #[test]
    fn layout_errors_surface() {
        let env = env(&[("u", &[(6, 1)])]);
        assert!(matches!(
            infer_shape(&subdiv(0, 4, input("u")), &env),
            Err(TypeError::Layout(LayoutError::NotDivisible { .. }))
        ));
        assert!(matches!(
            infer_shape(&mk_map(identity(), Expr::Const(1.0)).unwrap(), &env),
            Err(TypeError::ScalarWhereArray)
        ));
        assert!(matches!(infer_shape(&input("B"), &env), Err(TypeError::UnboundInput(_))));
    }

    #[test]
    fn slices_keep_strides() {
        // column view of a row-major 3x2 matrix: flip then map identity-with-copy
        let env = env(&[("A", &[(3, 1), (2, 3)])]);
        let col = flip(0, 1, input("A"));
        let s = Scope::new(&env);
        let (extent, elems) = element_types(&[col], &s).unwrap();
        assert_eq!(extent, 3);
        assert_eq!(elems, vec![Ty::Array(Shape::new(vec![(2, 3)]).unwrap())]);
    }
}
