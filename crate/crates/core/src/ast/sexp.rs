//! S-expression program format.
//!
//! ```text
//! ; matrix-vector product
//! (input A ((N,1),(N,N)))
//! (input u ((N,1)))
//! (map (lam (r) (rnz + * r u)) A)
//! ```
//!
//! Shape entries may use size symbols (`N`, `N*N`) bound by the caller.

use std::collections::BTreeMap;
use std::fmt;

use super::{
    arity_of, as_lift, as_prim_fn, identity, lift, mk_nzip, mk_reduce, mk_rnz, ncomp, prim_fn,
    ArrayType, ElemKind, Expr, Lambda, PrimOp, TypeEnv, VarRef,
};
use crate::layout::Shape;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pos {
    line: usize,
    col: usize,
}

#[derive(Debug, Clone)]
enum Sx {
    Atom(String, Pos),
    List(Vec<Sx>, Pos),
}

impl Sx {
    fn pos(&self) -> Pos {
        match self {
            Sx::Atom(_, p) | Sx::List(_, p) => *p,
        }
    }
}

fn err<T>(pos: Pos, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError { line: pos.line, col: pos.col, message: message.into() })
}

fn read_all(src: &str) -> Result<Vec<Sx>, ParseError> {
    let mut stack: Vec<(Vec<Sx>, Pos)> = Vec::new();
    let mut top = Vec::new();
    let mut atom = String::new();
    let mut atom_pos = Pos { line: 1, col: 1 };
    let (mut line, mut col) = (1, 0);
    let mut chars = src.chars().peekable();

    fn flush(atom: &mut String, pos: Pos, stack: &mut [(Vec<Sx>, Pos)], top: &mut Vec<Sx>) {
        if !atom.is_empty() {
            let sx = Sx::Atom(std::mem::take(atom), pos);
            match stack.last_mut() {
                Some((items, _)) => items.push(sx),
                None => top.push(sx),
            }
        }
    }

    while let Some(c) = chars.next() {
        if c == '\n' {
            line += 1;
            col = 0;
        } else {
            col += 1;
        }
        let here = Pos { line, col };
        match c {
            ';' => {
                flush(&mut atom, atom_pos, &mut stack, &mut top);
                while let Some(&n) = chars.peek() {
                    if n == '\n' {
                        break;
                    }
                    chars.next();
                }
            }
            '(' => {
                flush(&mut atom, atom_pos, &mut stack, &mut top);
                stack.push((Vec::new(), here));
            }
            ')' => {
                flush(&mut atom, atom_pos, &mut stack, &mut top);
                let Some((items, p)) = stack.pop() else {
                    return err(here, "unbalanced `)`");
                };
                let sx = Sx::List(items, p);
                match stack.last_mut() {
                    Some((parent, _)) => parent.push(sx),
                    None => top.push(sx),
                }
            }
            c if c.is_whitespace() || c == ',' => flush(&mut atom, atom_pos, &mut stack, &mut top),
            c => {
                if atom.is_empty() {
                    atom_pos = here;
                }
                atom.push(c);
            }
        }
    }
    flush(&mut atom, atom_pos, &mut stack, &mut top);
    if let Some((_, p)) = stack.pop() {
        return err(p, "unclosed `(`");
    }
    Ok(top)
}

/// A parsed program: input declarations and one expression.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub env: TypeEnv,
    pub expr: Expr,
}

/// Binds size symbols such as `N` used inside shapes.
#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    pub sizes: BTreeMap<String, usize>,
    pub kind: Option<ElemKind>,
}

impl ParseOptions {
    pub fn with_size(n: usize) -> Self {
        let mut sizes = BTreeMap::new();
        sizes.insert("N".to_string(), n);
        ParseOptions { sizes, kind: None }
    }

    pub fn kind(mut self, kind: ElemKind) -> Self {
        self.kind = Some(kind);
        self
    }
}

pub fn parse_program(src: &str, opts: &ParseOptions) -> Result<Program, ParseError> {
    let forms = read_all(src)?;
    let mut p = Parser { opts, env: TypeEnv::new(), scopes: Vec::new() };
    let mut expr = None;
    for form in &forms {
        if let Some((name, shape)) = p.declaration(form)? {
            p.declare(&name, shape, form.pos())?;
            continue;
        }
        if expr.is_some() {
            return err(form.pos(), "more than one top-level expression");
        }
        expr = Some(p.expr(form)?);
    }
    match expr {
        Some(expr) => Ok(Program { env: p.env, expr }),
        None => err(Pos { line: 1, col: 1 }, "empty program: expected an expression"),
    }
}

/// Parses a lone expression; inputs must be declared inline.
pub fn parse_expr(src: &str) -> Result<Expr, ParseError> {
    parse_program(src, &ParseOptions::default()).map(|p| p.expr)
}

struct Parser<'o> {
    opts: &'o ParseOptions,
    env: TypeEnv,
    scopes: Vec<Vec<String>>,
}

impl Parser<'_> {
    fn declaration(&self, sx: &Sx) -> Result<Option<(String, Shape)>, ParseError> {
        let Sx::List(items, pos) = sx else { return Ok(None) };
        match items.first() {
            Some(Sx::Atom(head, _)) if head == "input" => {}
            _ => return Ok(None),
        }
        if items.len() != 3 {
            return err(*pos, "expected (input NAME SHAPE)");
        }
        let Sx::Atom(name, _) = &items[1] else {
            return err(items[1].pos(), "input name must be a symbol");
        };
        Ok(Some((name.clone(), self.shape(&items[2])?)))
    }

    fn declare(&mut self, name: &str, shape: Shape, pos: Pos) -> Result<(), ParseError> {
        let ty = ArrayType::new(self.opts.kind.unwrap_or(ElemKind::Float), shape);
        if let Some(prev) = self.env.get(name) {
            if prev != &ty {
                return err(pos, format!("input `{name}` redeclared with a different shape"));
            }
        }
        self.env.insert(name.to_string(), ty);
        Ok(())
    }

    fn size(&self, sx: &Sx) -> Result<usize, ParseError> {
        let Sx::Atom(tok, pos) = sx else {
            return err(sx.pos(), "expected a size");
        };
        tok.split('*').try_fold(1usize, |acc, factor| {
            let v = match factor.parse::<i64>() {
                Ok(v) if v >= 1 => v as usize,
                Ok(v) => return err(*pos, format!("extents and strides must be positive, got {v}")),
                Err(_) => match self.opts.sizes.get(factor) {
                    Some(&v) => v,
                    None => return err(*pos, format!("unbound size symbol `{factor}`")),
                },
            };
            Ok(acc * v)
        })
    }

    fn shape(&self, sx: &Sx) -> Result<Shape, ParseError> {
        let Sx::List(dims, pos) = sx else {
            return err(sx.pos(), "expected a shape ((e,s),...)");
        };
        let mut pairs = Vec::new();
        for d in dims {
            match d {
                Sx::List(es, p) if es.len() == 2 => pairs.push((self.size(&es[0])?, self.size(&es[1])?)),
                _ => return err(d.pos(), "expected an (extent,stride) pair"),
            }
            let _ = pos;
        }
        Shape::new(pairs).or_else(|e| err(*pos, e.to_string()))
    }

    fn nat(&self, sx: &Sx) -> Result<usize, ParseError> {
        match sx {
            Sx::Atom(tok, pos) => tok.parse().or_else(|_| err(*pos, format!("expected a natural number, got `{tok}`"))),
            Sx::List(_, pos) => err(*pos, "expected a natural number"),
        }
    }

    fn lookup(&self, name: &str) -> Option<VarRef> {
        self.scopes
            .iter()
            .rev()
            .enumerate()
            .find_map(|(up, frame)| frame.iter().rposition(|n| n == name).map(|pos| VarRef { up, pos }))
    }

    fn atom(&self, tok: &str, pos: Pos) -> Result<Expr, ParseError> {
        if let Some(v) = self.lookup(tok) {
            return Ok(Expr::Var(v));
        }
        if self.env.contains_key(tok) {
            return Ok(Expr::Input(tok.to_string()));
        }
        if let Some(op) = PrimOp::from_symbol(tok) {
            return Ok(prim_fn(op));
        }
        if tok == "id" {
            return Ok(identity());
        }
        if let Ok(c) = tok.parse::<f64>() {
            return Ok(Expr::Const(c));
        }
        err(pos, format!("unbound name `{tok}`"))
    }

    fn exprs(&mut self, items: &[Sx]) -> Result<Vec<Expr>, ParseError> {
        items.iter().map(|s| self.expr(s)).collect()
    }

    fn expr(&mut self, sx: &Sx) -> Result<Expr, ParseError> {
        let (items, pos) = match sx {
            Sx::Atom(tok, pos) => return self.atom(tok, *pos),
            Sx::List(items, pos) => (items, *pos),
        };
        let Some(head) = items.first() else {
            return err(pos, "empty list");
        };
        let args = &items[1..];
        let ast = |r: Result<Expr, super::AstError>| r.or_else(|e| err(pos, e.to_string()));
        let want = |n: usize, form: &str| -> Result<(), ParseError> {
            if args.len() == n {
                Ok(())
            } else {
                err(pos, format!("`{form}` takes {n} arguments, got {}", args.len()))
            }
        };
        let Sx::Atom(kw, _) = head else {
            let f = self.expr(head)?;
            let xs = self.exprs(args)?;
            return Ok(Expr::Apply(Box::new(f), xs));
        };
        if self.lookup(kw).is_some() {
            return err(pos, format!("`{kw}` is a variable and cannot be applied"));
        }
        match kw.as_str() {
            "input" => {
                let Some((name, shape)) = self.declaration(sx)? else { unreachable!() };
                self.declare(&name, shape, pos)?;
                Ok(Expr::Input(name))
            }
            "const" => {
                want(1, "const")?;
                match &args[0] {
                    Sx::Atom(t, p) => t.parse().map(Expr::Const).or_else(|_| err(*p, "expected a number")),
                    other => err(other.pos(), "expected a number"),
                }
            }
            "lam" => {
                want(2, "lam")?;
                let Sx::List(params, _) = &args[0] else {
                    return err(args[0].pos(), "expected a parameter list");
                };
                let mut names = Vec::new();
                for p in params {
                    match p {
                        Sx::Atom(n, _) => names.push(n.clone()),
                        other => return err(other.pos(), "parameter must be a symbol"),
                    }
                }
                if names.is_empty() {
                    return err(pos, "lambda needs at least one parameter");
                }
                self.scopes.push(names.clone());
                let body = self.expr(&args[1]);
                self.scopes.pop();
                Ok(Expr::Lambda(Lambda { arity: names.len(), names, body: Box::new(body?) }))
            }
            "nzip" | "map" | "zip" => {
                let expected = match kw.as_str() {
                    "map" => Some(1),
                    "zip" => Some(2),
                    _ => None,
                };
                if args.len() < 2 || expected.is_some_and(|n| args.len() != n + 1) {
                    return err(pos, format!("malformed `{kw}`"));
                }
                let f = self.expr(&args[0])?;
                let xs = self.exprs(&args[1..])?;
                ast(mk_nzip(f, xs))
            }
            "rnz" => {
                if args.len() < 3 {
                    return err(pos, "`rnz` takes a reduction, a zip function and arrays");
                }
                let r = self.expr(&args[0])?;
                let m = self.expr(&args[1])?;
                let xs = self.exprs(&args[2..])?;
                ast(mk_rnz(r, m, xs))
            }
            "reduce" => {
                want(2, "reduce")?;
                let r = self.expr(&args[0])?;
                let x = self.expr(&args[1])?;
                ast(mk_reduce(r, x))
            }
            "dot" => {
                want(2, "dot")?;
                let u = self.expr(&args[0])?;
                let v = self.expr(&args[1])?;
                Ok(super::dot(u, v))
            }
            "subdiv" => {
                want(3, "subdiv")?;
                Ok(super::subdiv(self.nat(&args[0])?, self.nat(&args[1])?, self.expr(&args[2])?))
            }
            "flatten" => {
                want(2, "flatten")?;
                Ok(super::flatten(self.nat(&args[0])?, self.expr(&args[1])?))
            }
            "flip" => match args.len() {
                2 => {
                    let d = self.nat(&args[0])?;
                    Ok(super::flip(d, d + 1, self.expr(&args[1])?))
                }
                3 => Ok(super::flip(self.nat(&args[0])?, self.nat(&args[1])?, self.expr(&args[2])?)),
                _ => err(pos, "`flip` takes (flip d a) or (flip d1 d2 a)"),
            },
            "lift" => {
                want(1, "lift")?;
                let f = self.expr(&args[0])?;
                ast(lift(&f))
            }
            "ncomp" => {
                want(3, "ncomp")?;
                let i = self.nat(&args[0])?;
                let f = self.expr(&args[1])?;
                let g = self.expr(&args[2])?;
                ast(ncomp(i, &f, &g))
            }
            sym => {
                if let Some(op) = PrimOp::from_symbol(sym) {
                    want(2, sym)?;
                    return Ok(Expr::Prim(op, self.exprs(args)?));
                }
                let f = self.atom(sym, head.pos())?;
                let xs = self.exprs(args)?;
                if arity_of(&f).is_err() {
                    return err(pos, format!("`{sym}` is not a function"));
                }
                Ok(Expr::Apply(Box::new(f), xs))
            }
        }
    }
}

/// Renders an expression; bound names are reconstructed from hints.
pub fn to_sexp(e: &Expr) -> String {
    let mut out = String::new();
    Printer { scopes: Vec::new() }.expr(e, &mut out);
    out
}

/// Renders input declarations followed by the expression.
pub fn program_to_string(p: &Program) -> String {
    let mut out = String::new();
    for (name, ty) in &p.env {
        out.push_str(&format!("(input {name} {})\n", ty.shape));
    }
    out.push_str(&to_sexp(&p.expr));
    out.push('\n');
    out
}

const DEFAULT_NAMES: [&str; 8] = ["x", "y", "z", "w", "p", "q", "s", "t"];

struct Printer {
    scopes: Vec<Vec<String>>,
}

impl Printer {
    fn visible(&self, name: &str) -> bool {
        self.scopes.iter().any(|f| f.iter().any(|n| n == name))
    }

    fn fresh_names(&self, l: &Lambda) -> Vec<String> {
        let mut names: Vec<String> = Vec::with_capacity(l.arity);
        for p in 0..l.arity {
            let base = l
                .names
                .get(p)
                .cloned()
                .unwrap_or_else(|| DEFAULT_NAMES.get(p).map(|s| s.to_string()).unwrap_or(format!("a{p}")));
            let mut candidate = base.clone();
            let mut k = self.scopes.len();
            while self.visible(&candidate)
                || names.contains(&candidate)
                || PrimOp::from_symbol(&candidate).is_some()
                || is_keyword(&candidate)
            {
                candidate = format!("{base}{k}");
                k += 1;
            }
            names.push(candidate);
        }
        names
    }

    fn list(&mut self, head: &str, items: &[&Expr], out: &mut String) {
        out.push('(');
        out.push_str(head);
        for it in items {
            out.push(' ');
            self.expr(it, out);
        }
        out.push(')');
    }

    fn expr(&mut self, e: &Expr, out: &mut String) {
        if let Some(op) = as_prim_fn(e) {
            out.push_str(op.symbol());
            return;
        }
        if *e == identity() || matches!(e, Expr::Lambda(l) if l.arity == 1 && *l.body == super::var(0, 0)) {
            out.push_str("id");
            return;
        }
        if let Some(f) = as_lift(e) {
            if super::is_closed(&f) {
                self.list("lift", &[&f], out);
                return;
            }
        }
        match e {
            Expr::Input(n) => out.push_str(n),
            Expr::Const(c) => out.push_str(&format_const(*c)),
            Expr::Var(v) => {
                let idx = self.scopes.len().checked_sub(v.up + 1);
                match idx.and_then(|i| self.scopes[i].get(v.pos)) {
                    Some(n) => out.push_str(n),
                    None => out.push_str(&format!("#{}.{}", v.up, v.pos)),
                }
            }
            Expr::Lambda(l) => {
                let names = self.fresh_names(l);
                out.push_str("(lam (");
                out.push_str(&names.join(" "));
                out.push_str(") ");
                self.scopes.push(names);
                self.expr(&l.body, out);
                self.scopes.pop();
                out.push(')');
            }
            Expr::Apply(f, args) => {
                out.push('(');
                self.expr(f, out);
                for a in args {
                    out.push(' ');
                    self.expr(a, out);
                }
                out.push(')');
            }
            Expr::Prim(op, xs) => {
                let items: Vec<&Expr> = xs.iter().collect();
                self.list(op.symbol(), &items, out);
            }
            Expr::NZip(f, xs) => {
                let head = match xs.len() {
                    1 => "map",
                    2 => "zip",
                    _ => "nzip",
                };
                let items: Vec<&Expr> = std::iter::once(f.as_ref()).chain(xs).collect();
                self.list(head, &items, out);
            }
            Expr::Rnz(r, m, xs) => {
                let items: Vec<&Expr> = [r.as_ref(), m.as_ref()].into_iter().chain(xs).collect();
                self.list("rnz", &items, out);
            }
            Expr::Subdiv { dim, block, array } => {
                out.push_str(&format!("(subdiv {dim} {block} "));
                self.expr(array, out);
                out.push(')');
            }
            Expr::Flatten { dim, array } => {
                out.push_str(&format!("(flatten {dim} "));
                self.expr(array, out);
                out.push(')');
            }
            Expr::Flip { a, b, array } => {
                out.push_str(&format!("(flip {a} {b} "));
                self.expr(array, out);
                out.push(')');
            }
        }
    }
}

fn is_keyword(s: &str) -> bool {
    matches!(
        s,
        "input" | "const" | "lam" | "nzip" | "map" | "zip" | "rnz" | "reduce" | "dot" | "subdiv"
            | "flatten" | "flip" | "lift" | "ncomp" | "id"
    )
}

fn format_const(c: f64) -> String {
    if c.fract() == 0.0 && c.abs() < 1e15 {
        format!("{}", c as i64)
    } else {
        format!("{c}")
    }
}
