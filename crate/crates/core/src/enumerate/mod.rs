//! The spine of a linear HoF nest and its rearrangements.
//!
//! A spine lists the HoFs of a program top-down. Every permutation of the
//! spine is reached from its predecessor in SJT order by one adjacent
//! exchange followed by layout normalization.

mod sjt;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ast::sexp::to_sexp;
use crate::ast::{alpha_canonicalize, contains_hof, peel_layouts, Expr, TypeEnv};
use crate::layout::{format_chain, LayoutOp};
use crate::rewrite::{fuse_fixpoint, fuse_fixpoint_traced, normalize, rewrite_at, RewriteStep, Rule, RuleError};

pub use sjt::sjt;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnumError {
    #[error("unsupported shape: {0}")]
    Unsupported(String),
    #[error("no HoF in the program")]
    Empty,
    #[error("spine position {0} has no successor")]
    BadPosition(usize),
    #[error("exchange at spine position {pos} failed: {source}")]
    Blocked { pos: usize, source: RuleError },
    #[error(transparent)]
    Rule(#[from] RuleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntryKind {
    Map,
    Rnz,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpineEntry {
    pub kind: EntryKind,
    pub label: String,
    /// Path of the HoF node from the root.
    pub path: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Spine {
    pub entries: Vec<SpineEntry>,
    /// Layouts wrapping the outermost HoF, application order.
    pub orientation: Vec<LayoutOp>,
}

impl Spine {
    pub fn labels(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.label.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Input names an array expression slices, through enclosing binders.
fn roots(e: &Expr, frames: &[Vec<Vec<String>>]) -> Vec<String> {
    let (_, base) = peel_layouts(e);
    match base {
        Expr::Input(name) => vec![name.clone()],
        Expr::Var(v) => frames
            .len()
            .checked_sub(1 + v.up)
            .and_then(|i| frames[i].get(v.pos))
            .cloned()
            .unwrap_or_default(),
        _ => Vec::new(),
    }
}

pub fn extract_spine(e: &Expr) -> Result<Spine, EnumError> {
    let (orientation, mut cur) = peel_layouts(e);
    let mut path = vec![0; orientation.len()];
    let mut frames: Vec<Vec<Vec<String>>> = Vec::new();
    let mut entries = Vec::new();
    if !cur.is_hof() {
        return Err(if contains_hof(cur) {
            EnumError::Unsupported("the result is not computed by a HoF".into())
        } else {
            EnumError::Empty
        });
    }
    loop {
        let (kind, f, arrays, f_idx) = match cur {
            Expr::NZip(f, xs) => (EntryKind::Map, f, xs, 0),
            Expr::Rnz(_, m, xs) => (EntryKind::Rnz, m, xs, 1),
            _ => unreachable!("spine nodes are HoFs"),
        };
        if arrays.iter().any(contains_hof) {
            return Err(EnumError::Unsupported(format!("unfused HoF argument at {path:?}")));
        }
        let sources: Vec<Vec<String>> = arrays.iter().map(|a| roots(a, &frames)).collect();
        let label = match kind {
            EntryKind::Rnz => "rnz".to_string(),
            EntryKind::Map => {
                let names: BTreeSet<String> = sources.iter().flatten().cloned().collect();
                format!("map{}", names.into_iter().collect::<String>())
            }
        };
        entries.push(SpineEntry { kind, label, path: path.clone() });
        let Some(l) = f.as_lambda() else { break };
        let body = l.body.as_ref();
        if body.is_hof() {
            frames.push(sources);
            path.extend([f_idx, 0]);
            cur = body;
        } else if contains_hof(body) {
            return Err(EnumError::Unsupported(format!("non-linear nesting below {path:?}")));
        } else {
            break;
        }
    }
    Ok(Spine { entries, orientation })
}

/// Every input together with the layout chain it is read through.
pub fn input_layouts(e: &Expr) -> BTreeMap<String, Vec<LayoutOp>> {
    fn go(e: &Expr, out: &mut BTreeMap<String, Vec<LayoutOp>>) {
        let (chain, base) = peel_layouts(e);
        if let Expr::Input(name) = base {
            out.entry(name.clone()).or_insert(chain);
            return;
        }
        e.children().into_iter().for_each(|c| go(c, out));
    }
    let mut out = BTreeMap::new();
    go(e, &mut out);
    out
}

/// Hex prefix of the SHA-256 of the alpha-canonical S-expression.
pub fn canonical_digest(e: &Expr) -> String {
    let h = Sha256::digest(to_sexp(&alpha_canonicalize(e)).as_bytes());
    hex::encode(&h[..8])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub id: String,
    pub labels: Vec<String>,
    /// Source spine index of the entry at each position.
    pub order: Vec<usize>,
    pub expr: Expr,
    pub input_layouts: BTreeMap<String, Vec<LayoutOp>>,
    pub orientation: Vec<LayoutOp>,
    /// Rewrites leading from the source program to `expr`.
    pub steps: Vec<RewriteStep>,
}

impl Variant {
    pub fn from_expr(expr: Expr) -> Result<Variant, EnumError> {
        let spine = extract_spine(&expr)?;
        let labels = spine.labels();
        Ok(Variant {
            id: labels.join(","),
            labels,
            order: (0..spine.len()).collect(),
            input_layouts: input_layouts(&expr),
            orientation: spine.orientation,
            expr,
            steps: Vec::new(),
        })
    }

    fn rebuilt(&self, expr: Expr, order: Vec<usize>, steps: Vec<RewriteStep>) -> Result<Variant, EnumError> {
        let mut v = Variant::from_expr(expr)?;
        v.order = order;
        v.steps = steps;
        Ok(v)
    }

    pub fn spine_string(&self) -> String {
        self.labels.join(",")
    }

    /// Layout chains as `name = chain` joined by `; `, inputs in name order.
    pub fn layouts_string(&self) -> String {
        self.input_layouts
            .iter()
            .map(|(n, c)| format!("{n} = {}", format_chain(n, c)))
            .collect::<Vec<_>>()
            .join("; ")
    }

    pub fn digest(&self) -> String {
        canonical_digest(&self.expr)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}", self.spine_string(), self.layouts_string(), self.digest())
    }
}

/// Exchanges spine entries `i` and `i + 1`, then normalizes layouts.
pub fn swap_adjacent(v: &Variant, i: usize, env: &TypeEnv) -> Result<Variant, EnumError> {
    let spine = extract_spine(&v.expr)?;
    if i + 1 >= spine.len() {
        return Err(EnumError::BadPosition(i));
    }
    let (swapped, step) = rewrite_at(Rule::Exchange, &v.expr, &spine.entries[i].path, env)
        .map_err(|source| EnumError::Blocked { pos: i, source })?;
    let mut order = v.order.clone();
    order.swap(i, i + 1);
    let mut steps = v.steps.clone();
    steps.push(step);
    v.rebuilt(normalize(&swapped), order, steps)
}

/// Reaches `target` from `start` by adjacent swaps in bubble order.
fn reach(start: &Variant, target: &[usize], env: &TypeEnv) -> Result<Variant, EnumError> {
    let mut cur = start.clone();
    for t in 0..target.len() {
        let s = cur.order.iter().position(|&x| x == target[t]).expect("target is a permutation");
        for k in (t..s).rev() {
            cur = swap_adjacent(&cur, k, env)?;
        }
    }
    Ok(cur)
}

/// Entries with equal labels keep their source order.
fn is_representative(order: &[usize], labels: &[String]) -> bool {
    order.iter().enumerate().all(|(p, &a)| order[p + 1..].iter().all(|&b| labels[a] != labels[b] || a < b))
}

#[derive(Debug, Clone)]
pub struct Enumeration {
    pub variants: Vec<Variant>,
    /// Representative permutations no swap sequence could reach.
    pub blocked: usize,
}

/// All rearrangements of `e`'s spine in SJT order. Permutations that only
/// reorder entries with equal labels are identified; the representative keeps
/// those entries in source order.
pub fn enumerate_all(e: &Expr, env: &TypeEnv) -> Result<Enumeration, EnumError> {
    let start = Variant::from_expr(normalize(e))?;
    let n = start.labels.len();
    let labels = start.labels.clone();
    let mut variants: Vec<Variant> = Vec::new();
    let mut seen = BTreeSet::new();
    let mut blocked = 0;
    let mut cur: Option<Variant> = None;
    for (perm, k) in sjt(n) {
        let next = match (&cur, k) {
            (None, None) => Some(start.clone()),
            (Some(c), Some(k)) => swap_adjacent(c, k, env).ok(),
            _ => None,
        };
        let next = next.or_else(|| reach(&start, &perm, env).ok());
        let keep = is_representative(&perm, &labels);
        match &next {
            Some(v) if keep => {
                if seen.insert(v.digest()) {
                    variants.push(v.clone());
                }
            }
            None if keep => blocked += 1,
            _ => {}
        }
        cur = next;
    }
    Ok(Enumeration { variants, blocked })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SubdivMode {
    None,
    /// The innermost reduction once.
    Rnz,
    /// Every map once.
    Maps,
    /// The innermost reduction, then the resulting block reduction again.
    Rnz2,
    /// Every map and the innermost reduction once.
    All,
}

impl SubdivMode {
    pub const NAMES: [&'static str; 5] = ["none", "rnz", "maps", "rnz2", "all"];

    pub fn from_name(s: &str) -> Option<SubdivMode> {
        Some(match s {
            "none" => SubdivMode::None,
            "rnz" => SubdivMode::Rnz,
            "maps" => SubdivMode::Maps,
            "rnz2" => SubdivMode::Rnz2,
            "all" => SubdivMode::All,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            SubdivMode::None => "none",
            SubdivMode::Rnz => "rnz",
            SubdivMode::Maps => "maps",
            SubdivMode::Rnz2 => "rnz2",
            SubdivMode::All => "all",
        }
    }
}

/// Subdivides the spine entry chosen by `pick` and normalizes.
fn subdivide_entry(
    e: &Expr,
    b: usize,
    env: &TypeEnv,
    steps: &mut Vec<RewriteStep>,
    pick: impl Fn(&Spine) -> Option<usize>,
) -> Result<Expr, EnumError> {
    let spine = extract_spine(e)?;
    let i = pick(&spine).ok_or_else(|| EnumError::Unsupported("no spine entry to subdivide".into()))?;
    let entry = &spine.entries[i];
    let rule = match entry.kind {
        EntryKind::Map => Rule::SubdivideMap(b),
        EntryKind::Rnz => Rule::SubdivideRnz(b),
    };
    let (out, step) = rewrite_at(rule, e, &entry.path, env)?;
    steps.push(step);
    Ok(normalize(&out))
}

/// Block sizes for each subdivision step; `None` skips the step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SubdivPlan {
    /// Every map once.
    pub maps: Option<usize>,
    /// The innermost reduction once.
    pub rnz: Option<usize>,
    /// The outer block reduction produced by `rnz`, once more.
    pub rnz_again: Option<usize>,
}

impl SubdivMode {
    pub fn plan(self, b: usize) -> SubdivPlan {
        let on = |yes: bool| yes.then_some(b);
        SubdivPlan {
            maps: on(matches!(self, SubdivMode::Maps | SubdivMode::All)),
            rnz: on(matches!(self, SubdivMode::Rnz | SubdivMode::Rnz2 | SubdivMode::All)),
            rnz_again: on(self == SubdivMode::Rnz2),
        }
    }
}

/// Fuses, normalizes, and applies the subdivisions of `plan`.
pub fn prepare(e: &Expr, plan: &SubdivPlan, env: &TypeEnv) -> Result<(Expr, Vec<RewriteStep>), EnumError> {
    let (fused, mut steps) = fuse_fixpoint_traced(e);
    let mut cur = normalize(&fused);
    if let Some(b) = plan.maps {
        let spine = extract_spine(&cur)?;
        let maps: Vec<String> =
            spine.entries.iter().filter(|x| x.kind == EntryKind::Map).map(|x| x.label.clone()).collect();
        for label in maps {
            cur = subdivide_entry(&cur, b, env, &mut steps, |s| {
                s.entries.iter().position(|x| x.kind == EntryKind::Map && x.label == label)
            })?;
        }
    }
    if let Some(b) = plan.rnz {
        cur = subdivide_entry(&cur, b, env, &mut steps, |s| s.entries.iter().rposition(|x| x.kind == EntryKind::Rnz))?;
        if let Some(b2) = plan.rnz_again {
            cur = subdivide_entry(&cur, b2, env, &mut steps, |s| {
                s.entries.iter().position(|x| x.kind == EntryKind::Rnz)
            })?;
        }
    }
    Ok((cur, steps))
}

fn named(mut v: Variant, id: &str) -> Variant {
    v.id = id.to_string();
    v
}

/// The six matrix-vector variants 1a..2c. Family 1 subdivides the reduction
/// of the row form; family 2 subdivides the map of the column form.
pub fn matvec_family(e: &Expr, b: usize, env: &TypeEnv) -> Result<Vec<Variant>, EnumError> {
    let base = Variant::from_expr(normalize(&fuse_fixpoint(e)))?;
    let kinds: Vec<EntryKind> = extract_spine(&base.expr)?.entries.iter().map(|x| x.kind).collect();
    if kinds != [EntryKind::Map, EntryKind::Rnz] {
        return Err(EnumError::Unsupported("expected a map over a reduction".into()));
    }

    let mut steps = Vec::new();
    let e1 = subdivide_entry(&base.expr, b, env, &mut steps, |_| Some(1))?;
    let mut v1a = Variant::from_expr(e1)?;
    v1a.steps = steps;
    let v1b = swap_adjacent(&v1a, 0, env)?;
    let v1c = swap_adjacent(&v1b, 1, env)?;

    let column = swap_adjacent(&base, 0, env)?;
    let mut steps = column.steps.clone();
    let e2 = subdivide_entry(&column.expr, b, env, &mut steps, |_| Some(1))?;
    let mut v2a = Variant::from_expr(e2)?;
    v2a.steps = steps;
    let v2b = swap_adjacent(&v2a, 0, env)?;
    let v2c = swap_adjacent(&v2b, 1, env)?;

    Ok(vec![
        named(v1a, "1a"),
        named(v1b, "1b"),
        named(v1c, "1c"),
        named(v2a, "2a"),
        named(v2b, "2b"),
        named(v2c, "2c"),
    ])
}
