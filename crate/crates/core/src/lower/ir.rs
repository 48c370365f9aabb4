use std::fmt::{self, Write as _};

use crate::ast::{ElemKind, PrimOp};
use crate::layout::{format_chain, LayoutOp, Shape};

pub type LoopId = usize;
pub type Reg = usize;
pub type ArrayId = usize;

/// `base + Σ stride · index(loop)`, in elements.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Affine {
    pub base: usize,
    pub terms: Vec<(LoopId, usize)>,
}

impl Affine {
    pub fn constant(base: usize) -> Self {
        Affine { base, terms: Vec::new() }
    }

    pub fn plus(&self, l: LoopId, stride: usize) -> Affine {
        let mut a = self.clone();
        if stride != 0 {
            a.terms.push((l, stride));
        }
        a
    }

    pub fn eval(&self, index: &[usize]) -> usize {
        self.terms.iter().fold(self.base, |acc, &(l, s)| acc + s * index[l])
    }
}

impl fmt::Display for Affine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = Vec::new();
        if self.base != 0 || self.terms.is_empty() {
            parts.push(self.base.to_string());
        }
        for &(l, s) in &self.terms {
            parts.push(if s == 1 { format!("i{l}") } else { format!("{s}*i{l}") });
        }
        f.write_str(&parts.join(" + "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Input,
    Output,
    Temp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrayDecl {
    pub name: String,
    pub role: Role,
    /// Buffer length in elements.
    pub len: usize,
    /// Declared strided shape for inputs; row-major for the rest.
    pub shape: Shape,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccStorage {
    Register(Reg),
    Temp(ArrayId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccDecl {
    pub storage: AccStorage,
    pub elems: usize,
    pub op: PrimOp,
}

/// Loop-body statement. Accumulations assign on the first visit, i.e. when
/// every loop in `first` is at index 0, and combine with `op` afterwards.
#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Loop { id: LoopId, extent: usize, body: Vec<Stmt> },
    Load { dst: Reg, array: ArrayId, addr: Affine },
    Const { dst: Reg, value: f64 },
    Bin { dst: Reg, op: PrimOp, a: Reg, b: Reg },
    Store { array: ArrayId, addr: Affine, src: Reg },
    Accumulate { array: ArrayId, addr: Affine, src: Reg, op: PrimOp, first: Vec<LoopId> },
    RegAccumulate { acc: Reg, src: Reg, op: PrimOp, first: Vec<LoopId> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopNest {
    pub kind: ElemKind,
    pub arrays: Vec<ArrayDecl>,
    pub accumulators: Vec<AccDecl>,
    pub body: Vec<Stmt>,
    pub loops: usize,
    pub registers: usize,
    pub output: ArrayId,
    /// Layouts taking the row-major output buffer to the program's result.
    pub orientation: Vec<LayoutOp>,
}

impl LoopNest {
    /// Largest accumulator, in elements; 0 without reductions.
    pub fn acc_elems(&self) -> usize {
        self.accumulators.iter().map(|a| a.elems).max().unwrap_or(0)
    }

    pub fn array_id(&self, name: &str) -> Option<ArrayId> {
        self.arrays.iter().position(|a| a.name == name)
    }

    /// Number of executions of statements satisfying `pred`.
    pub fn dynamic_count(&self, pred: &dyn Fn(&Stmt) -> bool) -> u64 {
        fn go(body: &[Stmt], trips: u64, pred: &dyn Fn(&Stmt) -> bool) -> u64 {
            body.iter()
                .map(|s| match s {
                    Stmt::Loop { extent, body, .. } => go(body, trips * *extent as u64, pred),
                    s if pred(s) => trips,
                    _ => 0,
                })
                .sum()
        }
        go(&self.body, 1, pred)
    }

    /// Stable textual form.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for a in &self.arrays {
            let role = match a.role {
                Role::Input => "input",
                Role::Output => "output",
                Role::Temp => "temp",
            };
            let _ = writeln!(out, "array {} {role} {} {}", a.name, a.len, a.shape);
        }
        for (k, acc) in self.accumulators.iter().enumerate() {
            let place = match acc.storage {
                AccStorage::Register(r) => format!("r{r}"),
                AccStorage::Temp(t) => self.arrays[t].name.clone(),
            };
            let _ = writeln!(out, "acc {k} {place} {} elems {}", acc.op.symbol(), acc.elems);
        }
        let name = &self.arrays[self.output].name;
        let _ = writeln!(out, "result {}", format_chain(name, &self.orientation));
        self.dump_body(&self.body, 0, &mut out);
        out
    }

    fn dump_body(&self, body: &[Stmt], depth: usize, out: &mut String) {
        let pad = "  ".repeat(depth);
        let first = |ls: &[LoopId]| ls.iter().map(|l| format!("i{l}")).collect::<Vec<_>>().join(",");
        for s in body {
            let _ = match s {
                Stmt::Loop { id, extent, body } => {
                    let _ = writeln!(out, "{pad}loop i{id} < {extent}");
                    self.dump_body(body, depth + 1, out);
                    Ok(())
                }
                Stmt::Load { dst, array, addr } => {
                    writeln!(out, "{pad}r{dst} = {}[{addr}]", self.arrays[*array].name)
                }
                Stmt::Const { dst, value } => writeln!(out, "{pad}r{dst} = {value}"),
                Stmt::Bin { dst, op, a, b } => writeln!(out, "{pad}r{dst} = {} r{a} r{b}", op.symbol()),
                Stmt::Store { array, addr, src } => {
                    writeln!(out, "{pad}{}[{addr}] = r{src}", self.arrays[*array].name)
                }
                Stmt::Accumulate { array, addr, src, op, first: f } => writeln!(
                    out,
                    "{pad}{}[{addr}] {}= r{src} first({})",
                    self.arrays[*array].name,
                    op.symbol(),
                    first(f)
                ),
                Stmt::RegAccumulate { acc, src, op, first: f } => {
                    writeln!(out, "{pad}r{acc} {}= r{src} first({})", op.symbol(), first(f))
                }
            };
        }
    }
}
