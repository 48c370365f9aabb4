//! Layout normalization. Output layouts move out of HoF functions, input
//! layouts applied to a binder move onto the array the binder slices, and
//! inverse layout pairs cancel. Exchanges expect this form.

use crate::ast::{layout, lift, peel_layouts, reduce_op, wrap_layouts, Expr, Lambda};
use crate::layout::LayoutOp;

/// Removes `flip a b (flip a b x)`, `flip a a x` and `flatten d (subdiv d b x)`.
pub fn cancel_flips(e: &Expr) -> Expr {
    let e = e.map_children(cancel_flips);
    match &e {
        Expr::Flip { a, b, array } if a == b => array.as_ref().clone(),
        Expr::Flip { a, b, array } => match array.as_ref() {
            Expr::Flip { a: c, b: d, array: inner } if (a.min(b), a.max(b)) == (c.min(d), c.max(d)) => {
                inner.as_ref().clone()
            }
            _ => e,
        },
        Expr::Flatten { dim, array } => match array.as_ref() {
            Expr::Subdiv { dim: d, array: inner, .. } if d == dim => inner.as_ref().clone(),
            _ => e,
        },
        _ => e,
    }
}

fn lambda_with(l: &Lambda, body: Expr) -> Expr {
    Expr::Lambda(Lambda { arity: l.arity, names: l.names.clone(), body: Box::new(body) })
}

/// Splits a function body `op (h)` where `h` is computed by a HoF.
fn floatable(body: &Expr) -> Option<(LayoutOp, &Expr)> {
    let (_, base) = peel_layouts(body);
    if !base.is_hof() {
        return None;
    }
    match body {
        Expr::Flip { a, b, array } => Some((LayoutOp::Flip { a: *a, b: *b }, array)),
        Expr::Flatten { dim, array } => Some((LayoutOp::Flatten { dim: *dim }, array)),
        _ => None,
    }
}

/// Moves flips and flattens of a HoF's per-element result outside the HoF.
/// Crossing a reduction lifts the reduction once per removed dimension.
pub fn float_layouts(e: &Expr) -> Expr {
    let e = e.map_children(float_layouts);
    match &e {
        Expr::NZip(f, xs) => {
            let Some(l) = f.as_lambda() else { return e };
            let Some((op, inner)) = floatable(&l.body) else { return e };
            layout(op, Expr::NZip(Box::new(lambda_with(l, inner.clone())), xs.clone()))
        }
        Expr::Rnz(r, m, xs) => {
            let Some(l) = m.as_lambda() else { return e };
            let Some((op, inner)) = floatable(&l.body) else { return e };
            if reduce_op(r).is_none() {
                return e;
            }
            let r = match op {
                LayoutOp::Flatten { .. } => match lift(r) {
                    Ok(lifted) => lifted,
                    Err(_) => return e,
                },
                _ => r.as_ref().clone(),
            };
            layout(op, Expr::Rnz(Box::new(r), Box::new(lambda_with(l, inner.clone())), xs.clone()))
        }
        _ => e,
    }
}

fn collect_chains(e: &Expr, depth: usize, pos: usize, out: &mut Vec<Vec<LayoutOp>>) {
    let (chain, base) = peel_layouts(e);
    if matches!(base, Expr::Var(v) if v.up == depth && v.pos == pos) {
        out.push(chain);
        return;
    }
    match e {
        Expr::Lambda(l) => collect_chains(&l.body, depth + 1, pos, out),
        _ => e.children().into_iter().for_each(|c| collect_chains(c, depth, pos, out)),
    }
}

fn strip_chains(e: &Expr, depth: usize, pos: usize) -> Expr {
    let (_, base) = peel_layouts(e);
    if matches!(base, Expr::Var(v) if v.up == depth && v.pos == pos) {
        return base.clone();
    }
    match e {
        Expr::Lambda(l) => lambda_with(l, strip_chains(&l.body, depth + 1, pos)),
        _ => e.map_children(|c| strip_chains(c, depth, pos)),
    }
}

/// Binder `i` whose every use carries the same layout chain: the chain moves
/// onto array `i`. Layout dims of a slice are below its outer dim, so the
/// same indices address the same dims of the whole array.
fn hoist_in(f: &Expr, xs: &[Expr]) -> Option<(Expr, Vec<Expr>)> {
    let l = f.as_lambda()?;
    let mut body = l.body.as_ref().clone();
    let mut arrays = xs.to_vec();
    let mut changed = false;
    for pos in 0..l.arity {
        let mut chains = Vec::new();
        collect_chains(&body, 0, pos, &mut chains);
        let Some(first) = chains.first() else { continue };
        if first.is_empty() || chains.iter().any(|c| c != first) {
            continue;
        }
        arrays[pos] = wrap_layouts(first, arrays[pos].clone());
        body = strip_chains(&body, 0, pos);
        changed = true;
    }
    changed.then(|| (lambda_with(l, body), arrays))
}

pub fn hoist_layouts(e: &Expr) -> Expr {
    let e = e.map_children(hoist_layouts);
    match &e {
        Expr::NZip(f, xs) => match hoist_in(f, xs) {
            Some((f, xs)) => Expr::NZip(Box::new(f), xs),
            None => e,
        },
        Expr::Rnz(r, m, xs) => match hoist_in(m, xs) {
            Some((m, xs)) => Expr::Rnz(r.clone(), Box::new(m), xs),
            None => e,
        },
        _ => e,
    }
}

/// Hoists, floats and cancels to a fixed point.
pub fn normalize(e: &Expr) -> Expr {
    let mut cur = e.clone();
    loop {
        let next = cancel_flips(&float_layouts(&hoist_layouts(&cur)));
        if next == cur {
            return cur;
        }
        cur = next;
    }
}
