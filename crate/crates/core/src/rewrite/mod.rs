//! Semantics-preserving rewrites: lambda housekeeping, fusion, exchange of
//! adjacent HoFs, subdivision, and layout normalization.
//!
//! Rules match at a single node. [`apply_rule`] finds every site in preorder
//! and returns one rewritten copy per site. Rules that need shapes receive the
//! typing [`Scope`] of the site, which the traversal builds by pushing the
//! slice types of each HoF's arrays when it enters the HoF's function.

mod exchange;
mod fusion;
mod normalize;
mod subdivide;

use std::fmt;

use thiserror::Error;

use crate::ast::{
    element_types, hof_count, infer_in, reduce_op, AstError, Expr, Scope, Ty, TypeEnv, TypeError,
};
use crate::layout::{LayoutError, Shape};

pub use exchange::{exchange, exchange_map_map, exchange_map_rnz, exchange_rnz_rnz, PairKind};
pub use fusion::{beta_reduce, eta_reduce, fuse_fixpoint, fuse_fixpoint_traced, fuse_map_map, fuse_nzip_nzip, fuse_rnz_nzip};
pub use normalize::{cancel_flips, float_layouts, hoist_layouts, normalize};
pub use subdivide::{subdivide_map, subdivide_rnz};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuleError {
    #[error("pattern does not match")]
    NoMatch,
    #[error("side condition failed: {0}")]
    SideCondition(String),
    #[error("no node at path {0:?}")]
    BadPath(Vec<usize>),
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Ast(#[from] AstError),
}

pub(crate) fn side(msg: impl Into<String>) -> RuleError {
    RuleError::SideCondition(msg.into())
}

/// A named rewrite. Block sizes and argument positions are rule parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    Beta,
    Eta,
    FuseMapMap,
    FuseNzipNzip(usize),
    FuseRnzNzip,
    ExchangeMapMap,
    ExchangeMapRnz,
    ExchangeRnzRnz,
    /// Any adjacent pair; dispatches on the pair kind.
    Exchange,
    SubdivideMap(usize),
    SubdivideRnz(usize),
}

impl Rule {
    pub fn name(&self) -> &'static str {
        match self {
            Rule::Beta => "beta",
            Rule::Eta => "eta",
            Rule::FuseMapMap => "fuse_map_map",
            Rule::FuseNzipNzip(_) => "fuse_nzip_nzip",
            Rule::FuseRnzNzip => "fuse_rnz_nzip",
            Rule::ExchangeMapMap => "exchange_map_map",
            Rule::ExchangeMapRnz => "exchange_map_rnz",
            Rule::ExchangeRnzRnz => "exchange_rnz_rnz",
            Rule::Exchange => "exchange",
            Rule::SubdivideMap(_) => "subdivide_map",
            Rule::SubdivideRnz(_) => "subdivide_rnz",
        }
    }

    /// Looks a rule up by name; `param` is the block size or argument position.
    pub fn from_name(name: &str, param: usize) -> Option<Rule> {
        Some(match name {
            "beta" => Rule::Beta,
            "eta" => Rule::Eta,
            "fuse_map_map" => Rule::FuseMapMap,
            "fuse_nzip_nzip" => Rule::FuseNzipNzip(param),
            "fuse_rnz_nzip" => Rule::FuseRnzNzip,
            "exchange_map_map" => Rule::ExchangeMapMap,
            "exchange_map_rnz" => Rule::ExchangeMapRnz,
            "exchange_rnz_rnz" => Rule::ExchangeRnzRnz,
            "exchange" => Rule::Exchange,
            "subdivide_map" => Rule::SubdivideMap(param),
            "subdivide_rnz" => Rule::SubdivideRnz(param),
            _ => return None,
        })
    }

    pub const NAMES: [&'static str; 11] = [
        "beta",
        "eta",
        "fuse_map_map",
        "fuse_nzip_nzip",
        "fuse_rnz_nzip",
        "exchange_map_map",
        "exchange_map_rnz",
        "exchange_rnz_rnz",
        "exchange",
        "subdivide_map",
        "subdivide_rnz",
    ];

    /// Rewrites the node `e` itself.
    pub fn apply(&self, e: &Expr, scope: &Scope<'_>) -> Result<Expr, RuleError> {
        match *self {
            Rule::Beta => beta_reduce(e),
            Rule::Eta => eta_reduce(e),
            Rule::FuseMapMap => fuse_map_map(e),
            Rule::FuseNzipNzip(i) => fuse_nzip_nzip(e, i),
            Rule::FuseRnzNzip => fuse_rnz_nzip(e),
            Rule::ExchangeMapMap => exchange_map_map(e, scope),
            Rule::ExchangeMapRnz => exchange_map_rnz(e, scope),
            Rule::ExchangeRnzRnz => exchange_rnz_rnz(e, scope),
            Rule::Exchange => exchange(e, scope),
            Rule::SubdivideMap(b) => subdivide_map(e, b, scope),
            Rule::SubdivideRnz(b) => subdivide_rnz(e, b, scope),
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::FuseNzipNzip(i) => write!(f, "{} {i}", self.name()),
            Rule::SubdivideMap(b) | Rule::SubdivideRnz(b) => write!(f, "{} {b}", self.name()),
            _ => f.write_str(self.name()),
        }
    }
}

/// Audit record of one rewrite.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewriteStep {
    pub rule: String,
    pub path: Vec<usize>,
    pub hofs_before: usize,
    pub hofs_after: usize,
}

impl RewriteStep {
    pub fn new(rule: impl Into<String>, path: Vec<usize>, before: &Expr, after: &Expr) -> Self {
        RewriteStep { rule: rule.into(), path, hofs_before: hof_count(before), hofs_after: hof_count(after) }
    }
}

impl fmt::Display for RewriteStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let path: Vec<String> = self.path.iter().map(|p| p.to_string()).collect();
        write!(
            f,
            "(step (rule {}) (path{}{}) (hofs {} {}))",
            self.rule,
            if path.is_empty() { "" } else { " " },
            path.join(" "),
            self.hofs_before,
            self.hofs_after
        )
    }
}

/// Frames to push when descending into each child of `e`; `None` for
/// children that are not lambdas. Unknown binder types become [`Ty::Unknown`].
pub(crate) fn child_frames(e: &Expr, scope: &Scope<'_>) -> Vec<Option<Vec<Ty>>> {
    let unknown = |c: &Expr| c.as_lambda().map(|l| vec![Ty::Unknown; l.arity]);
    let elems = |xs: &[Expr]| element_types(xs, scope).ok().map(|(_, tys)| tys);
    match e {
        Expr::NZip(f, xs) => {
            let mut frames = vec![elems(xs).filter(|_| f.as_lambda().is_some()).or_else(|| unknown(f))];
            frames.extend(xs.iter().map(unknown));
            frames
        }
        Expr::Rnz(r, m, xs) => {
            let slice_tys = elems(xs);
            let acc = slice_tys
                .clone()
                .and_then(|tys| crate::ast::infer_call(m, tys, scope).ok())
                .and_then(|t| t.shape().map(|s| Shape::row_major(&s.extents())))
                .and_then(|s| s.ok())
                .map(|s| vec![Ty::Array(s.clone()), Ty::Array(s)]);
            let mut frames = vec![
                acc.filter(|_| r.as_lambda().is_some()).or_else(|| unknown(r)),
                slice_tys.filter(|_| m.as_lambda().is_some()).or_else(|| unknown(m)),
            ];
            frames.extend(xs.iter().map(unknown));
            frames
        }
        Expr::Apply(f, args) => {
            let tys: Option<Vec<Ty>> = args.iter().map(|a| infer_in(a, scope).ok()).collect();
            let mut frames = vec![tys.filter(|_| f.as_lambda().is_some()).or_else(|| unknown(f))];
            frames.extend(args.iter().map(unknown));
            frames
        }
        other => other.children().into_iter().map(unknown).collect(),
    }
}

/// Visits every node in preorder with its path and typing scope.
pub fn walk(e: &Expr, env: &TypeEnv, visit: &mut dyn FnMut(&Expr, &[usize], &Scope<'_>)) {
    fn go(
        e: &Expr,
        path: &mut Vec<usize>,
        scope: &mut Scope<'_>,
        visit: &mut dyn FnMut(&Expr, &[usize], &Scope<'_>),
    ) {
        visit(e, path, scope);
        let frames = child_frames(e, scope);
        for (i, child) in e.children().into_iter().enumerate() {
            path.push(i);
            match (child, frames.get(i).cloned().flatten()) {
                (Expr::Lambda(l), Some(frame)) => {
                    visit(child, path, scope);
                    scope.push(frame);
                    path.push(0);
                    go(&l.body, path, scope, visit);
                    path.pop();
                    scope.pop();
                }
                _ => go(child, path, scope, visit),
            }
            path.pop();
        }
    }
    let mut scope = Scope::new(env);
    match e {
        Expr::Lambda(l) => {
            visit(e, &[], &scope);
            scope.push(vec![Ty::Unknown; l.arity]);
            go(&l.body, &mut vec![0], &mut scope, visit);
        }
        _ => go(e, &mut Vec::new(), &mut scope, visit),
    }
}

/// The typing scope in effect at `path`.
pub fn scope_at<'a>(e: &Expr, path: &[usize], env: &'a TypeEnv) -> Result<Scope<'a>, RuleError> {
    let mut scope = Scope::new(env);
    let mut cur = e;
    let mut i = 0;
    while i < path.len() {
        let frames = child_frames(cur, &scope);
        let child = cur.child(path[i]).ok_or_else(|| RuleError::BadPath(path.to_vec()))?;
        if let Expr::Lambda(l) = child {
            if i + 1 < path.len() {
                let frame = frames.get(path[i]).cloned().flatten().unwrap_or(vec![Ty::Unknown; l.arity]);
                scope.push(frame);
                cur = &l.body;
                i += 2;
                continue;
            }
        }
        cur = child;
        i += 1;
    }
    Ok(scope)
}

/// Applies `rule` at every matching site, preorder.
pub fn apply_rule(rule: Rule, e: &Expr, env: &TypeEnv) -> Vec<(Expr, RewriteStep)> {
    let mut out = Vec::new();
    walk(e, env, &mut |node, path, scope| {
        if let Ok(new) = rule.apply(node, scope) {
            if let Some(whole) = e.replace_at(path, new) {
                let step = RewriteStep::new(rule.name(), path.to_vec(), e, &whole);
                out.push((whole, step));
            }
        }
    });
    out
}

/// Applies `rule` at exactly `path`.
pub fn rewrite_at(rule: Rule, e: &Expr, path: &[usize], env: &TypeEnv) -> Result<(Expr, RewriteStep), RuleError> {
    let node = e.at_path(path).ok_or_else(|| RuleError::BadPath(path.to_vec()))?;
    let scope = scope_at(e, path, env)?;
    let new = rule.apply(node, &scope)?;
    let whole = e.replace_at(path, new).ok_or_else(|| RuleError::BadPath(path.to_vec()))?;
    let step = RewriteStep::new(rule.name(), path.to_vec(), e, &whole);
    Ok((whole, step))
}

/// Outer extent of every array of a HoF, checking they agree.
pub(crate) fn consumed_extent(arrays: &[Expr], scope: &Scope<'_>) -> Result<usize, RuleError> {
    Ok(element_types(arrays, scope)?.0)
}

pub(crate) fn shape_of(e: &Expr, scope: &Scope<'_>) -> Result<Shape, RuleError> {
    match infer_in(e, scope)? {
        Ty::Array(s) => Ok(s),
        Ty::Func(_) => Err(TypeError::FunctionWhereValue.into()),
        Ty::Unknown => Err(TypeError::Unknown.into()),
    }
}

/// Associativity and commutativity of a reduction function `lift^k op`.
pub(crate) fn reduction_laws(r: &Expr) -> Option<(bool, bool)> {
    reduce_op(r).map(|(op, _)| {
        let m = op.meta();
        (m.associative, m.commutative)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{identity, input, lam, mk_map, prim, var, ArrayType, ElemKind, PrimOp};

    fn env1(name: &str, n: usize) -> TypeEnv {
        let mut env = TypeEnv::new();
        env.insert(name.into(), ArrayType::new(ElemKind::Int, Shape::row_major(&[n]).unwrap()));
        env
    }

    fn neg() -> Expr {
        lam(1, prim(PrimOp::Sub, Expr::Const(0.0), var(0, 0)))
    }

    #[test]
    fn one_result_per_site() {
        let e = mk_map(neg(), mk_map(neg(), mk_map(neg(), input("v")).unwrap()).unwrap()).unwrap();
        let results = apply_rule(Rule::FuseMapMap, &e, &env1("v", 4));
        assert_eq!(results.len(), 2);
        assert_eq!(results[0].1.path, Vec::<usize>::new());
        assert_eq!(results[1].1.path, vec![1]);
        for (r, step) in &results {
            assert_eq!(hof_count(r), 2);
            assert_eq!(step.hofs_before, 3);
        }
    }

    #[test]
    fn nothing_matches_a_constant() {
        for name in Rule::NAMES {
            let rule = Rule::from_name(name, 2).unwrap();
            assert!(apply_rule(rule, &Expr::Const(1.0), &TypeEnv::new()).is_empty());
        }
    }

    #[test]
    fn scope_tracks_binders() {
        let e = mk_map(identity(), input("v")).unwrap();
        let env = env1("v", 4);
        let s = scope_at(&e, &[0, 0], &env).unwrap();
        assert_eq!(s.depth(), 1);
        assert_eq!(s.lookup(crate::ast::VarRef { up: 0, pos: 0 }).unwrap(), Ty::Array(Shape::scalar()));
    }

    #[test]
    fn step_prints_as_sexp() {
        let step = RewriteStep { rule: "fuse_map_map".into(), path: vec![1, 0], hofs_before: 3, hofs_after: 2 };
        assert_eq!(step.to_string(), "(step (rule fuse_map_map) (path 1 0) (hofs 3 2))");
    }
}
