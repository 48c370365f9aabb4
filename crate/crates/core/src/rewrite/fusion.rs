use crate::ast::{beta_apply, ncomp, references_level, shift, Expr, VarRef};

use super::{side, RewriteStep, RuleError};

/// `(\x.. -> body) args` to `body[x := args]`.
pub fn beta_reduce(e: &Expr) -> Result<Expr, RuleError> {
    let Expr::Apply(f, args) = e else { return Err(RuleError::NoMatch) };
    let Expr::Lambda(l) = f.as_ref() else { return Err(RuleError::NoMatch) };
    if l.arity != args.len() {
        return Err(RuleError::NoMatch);
    }
    beta_apply(l, args).ok_or_else(|| side("substitution would duplicate an array computation"))
}

/// `\x.. -> f x..` to `f` when `f` does not mention the parameters.
pub fn eta_reduce(e: &Expr) -> Result<Expr, RuleError> {
    let Expr::Lambda(l) = e else { return Err(RuleError::NoMatch) };
    let Expr::Apply(f, args) = l.body.as_ref() else { return Err(RuleError::NoMatch) };
    let bare = args.len() == l.arity
        && args.iter().enumerate().all(|(p, a)| *a == Expr::Var(VarRef { up: 0, pos: p }));
    if !bare || references_level(f, 0) {
        return Err(RuleError::NoMatch);
    }
    Ok(shift(f, -1, 0))
}

/// `map f (map g xs)` to `map (f . g) xs`.
pub fn fuse_map_map(e: &Expr) -> Result<Expr, RuleError> {
    let Expr::NZip(_, xs) = e else { return Err(RuleError::NoMatch) };
    match xs.as_slice() {
        [Expr::NZip(_, ys)] if ys.len() == 1 => fuse_nzip_nzip(e, 0),
        _ => Err(RuleError::NoMatch),
    }
}

/// Absorbs the nzip at argument `i` of an outer nzip via `ncomp i`.
pub fn fuse_nzip_nzip(e: &Expr, i: usize) -> Result<Expr, RuleError> {
    let Expr::NZip(f, xs) = e else { return Err(RuleError::NoMatch) };
    let Some(Expr::NZip(g, ys)) = xs.get(i) else { return Err(RuleError::NoMatch) };
    let h = ncomp(i, f, g)?;
    let arrays = xs[..i].iter().chain(ys).chain(&xs[i + 1..]).cloned().collect();
    Ok(Expr::NZip(Box::new(h), arrays))
}

/// Absorbs every nzip argument of an rnz into its zip function.
pub fn fuse_rnz_nzip(e: &Expr) -> Result<Expr, RuleError> {
    let Expr::Rnz(r, m, xs) = e else { return Err(RuleError::NoMatch) };
    if !xs.iter().any(|x| matches!(x, Expr::NZip(..))) {
        return Err(RuleError::NoMatch);
    }
    let mut m = m.as_ref().clone();
    let mut arrays = xs.clone();
    // right to left keeps the positions of unprocessed arguments stable
    for i in (0..xs.len()).rev() {
        if let Expr::NZip(g, ys) = &xs[i] {
            m = ncomp(i, &m, g)?;
            arrays.splice(i..=i, ys.iter().cloned());
        }
    }
    Ok(Expr::Rnz(r.clone(), Box::new(m), arrays))
}

fn first_postorder(
    e: &Expr,
    path: &mut Vec<usize>,
    try_at: &mut dyn FnMut(&Expr) -> Option<(&'static str, Expr)>,
) -> Option<(Vec<usize>, &'static str, Expr)> {
    for (i, c) in e.children().into_iter().enumerate() {
        path.push(i);
        if let Some(hit) = first_postorder(c, path, try_at) {
            return Some(hit);
        }
        path.pop();
    }
    try_at(e).map(|(name, new)| (path.clone(), name, new))
}

fn try_fusion(e: &Expr) -> Option<(&'static str, Expr)> {
    if let Ok(new) = fuse_rnz_nzip(e) {
        return Some(("fuse_rnz_nzip", new));
    }
    if let Ok(new) = fuse_map_map(e) {
        return Some(("fuse_map_map", new));
    }
    if let Expr::NZip(_, xs) = e {
        for i in 0..xs.len() {
            if let Ok(new) = fuse_nzip_nzip(e, i) {
                return Some(("fuse_nzip_nzip", new));
            }
        }
    }
    None
}

/// Fuses to a fixed point and returns the audit trail. Innermost sites go
/// first; beta precedes fusion and eta runs last.
pub fn fuse_fixpoint_traced(e: &Expr) -> (Expr, Vec<RewriteStep>) {
    let mut cur = e.clone();
    let mut steps = Vec::new();
    loop {
        let hit = first_postorder(&cur, &mut Vec::new(), &mut |n| beta_reduce(n).ok().map(|x| ("beta", x)))
            .or_else(|| first_postorder(&cur, &mut Vec::new(), &mut try_fusion))
            .or_else(|| first_postorder(&cur, &mut Vec::new(), &mut |n| eta_reduce(n).ok().map(|x| ("eta", x))));
        let Some((path, name, new)) = hit else { break };
        let next = cur.replace_at(&path, new).expect("site path is valid");
        steps.push(RewriteStep::new(name, path, &cur, &next));
        cur = next;
    }
    (cur, steps)
}

pub fn fuse_fixpoint(e: &Expr) -> Expr {
    fuse_fixpoint_traced(e).0
}
