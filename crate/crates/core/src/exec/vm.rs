//! Register VM for loop nests. Addresses are strength-reduced: every memory
//! statement owns a slot holding its current offset, and each loop bumps the
//! slots it strides. Bounds are checked once, at compile time, from the
//! maximal value of every affine address.

use std::time::Instant;

use thiserror::Error;

use super::{Element, Inputs};
use crate::ast::PrimOp;
use crate::layout::{LayoutError, View};
use crate::lower::{Affine, ArrayId, LoopId, LoopNest, Role, Stmt};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error("missing input `{0}`")]
    MissingInput(String),
    #[error("input `{name}` has extents {got:?}, expected {expected:?}")]
    InputShape { name: String, expected: Vec<usize>, got: Vec<usize> },
    #[error("address {addr} out of bounds for `{name}` of length {len}")]
    OutOfBounds { name: String, addr: usize, len: usize },
    #[error("too many loops ({0}); at most 64")]
    TooManyLoops(usize),
    #[error(transparent)]
    Layout(#[from] LayoutError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Access {
    pub array: ArrayId,
    pub offset: usize,
    pub write: bool,
}

#[derive(Debug, Clone, Copy)]
enum Op<T> {
    /// A leaf loop run as a vector kernel; the scalar form of the same loop
    /// follows and ends just before `skip`.
    Kernel { kernel: u32, skip: u32 },
    /// Resets a loop index; the body starts at the next op.
    Enter { lp: u32 },
    Next { lp: u32, body: u32 },
    Load { dst: u32, arr: u32, slot: u32 },
    Const { dst: u32, value: T },
    Bin { dst: u32, op: PrimOp, a: u32, b: u32 },
    Store { arr: u32, slot: u32, src: u32 },
    Acc { arr: u32, slot: u32, src: u32, op: PrimOp, first: u64 },
    RegAcc { acc: u32, src: u32, op: PrimOp, first: u64 },
}

/// A compiled loop nest.
#[derive(Debug, Clone)]
pub struct Program<T> {
    ops: Vec<Op<T>>,
    slot_base: Vec<usize>,
    extents: Vec<usize>,
    /// Per loop: `(slot, stride)` for every slot the loop advances.
    deltas: Vec<Vec<(u32, usize)>>,
    registers: usize,
    kernels: Vec<Kernel<T>>,
}

struct Compiler<'n, T> {
    nest: &'n LoopNest,
    ops: Vec<Op<T>>,
    slot_base: Vec<usize>,
    extents: Vec<usize>,
    deltas: Vec<Vec<(u32, usize)>>,
    kernels: Vec<Kernel<T>>,
    vectorize: bool,
}

fn mask(first: &[LoopId]) -> u64 {
    first.iter().fold(0, |m, &l| m | 1 << l)
}

impl<T: Element> Compiler<'_, T> {
    fn slot(&mut self, array: ArrayId, addr: &Affine) -> Result<u32, ExecError> {
        let max = addr.terms.iter().fold(addr.base, |acc, &(l, s)| acc + s * (self.extents[l] - 1));
        let decl = &self.nest.arrays[array];
        if max >= decl.len {
            return Err(ExecError::OutOfBounds { name: decl.name.clone(), addr: max, len: decl.len });
        }
        let slot = self.slot_base.len() as u32;
        self.slot_base.push(addr.base);
        for &(l, s) in &addr.terms {
            self.deltas[l].push((slot, s));
        }
        Ok(slot)
    }

    fn body(&mut self, body: &[Stmt]) -> Result<(), ExecError> {
        for s in body {
            let op = match s {
                Stmt::Loop { id, body, .. } => {
                    let leaf = self.vectorize && is_leaf(body);
                    let at = self.ops.len();
                    if leaf {
                        self.ops.push(Op::Kernel { kernel: 0, skip: 0 });
                    }
                    let slots_before = self.slot_base.len() as u32;
                    self.ops.push(Op::Enter { lp: *id as u32 });
                    let start = self.ops.len() as u32;
                    self.body(body)?;
                    self.ops.push(Op::Next { lp: *id as u32, body: start });
                    if leaf {
                        let slots: Vec<u32> = (slots_before..self.slot_base.len() as u32).collect();
                        match Kernel::build(*id, body, &slots, &self.deltas[*id], self.nest.registers) {
                            Some(k) => {
                                self.kernels.push(k);
                                let kernel = self.kernels.len() as u32 - 1;
                                self.ops[at] = Op::Kernel { kernel, skip: self.ops.len() as u32 };
                            }
                            None => {
                                self.ops.remove(at);
                                self.fix_jumps(at);
                            }
                        }
                    }
                    continue;
                }
                Stmt::Load { dst, array, addr } => {
                    Op::Load { dst: *dst as u32, arr: *array as u32, slot: self.slot(*array, addr)? }
                }
                Stmt::Const { dst, value } => Op::Const { dst: *dst as u32, value: T::from_f64(*value) },
                Stmt::Bin { dst, op, a, b } => Op::Bin { dst: *dst as u32, op: *op, a: *a as u32, b: *b as u32 },
                Stmt::Store { array, addr, src } => {
                    Op::Store { arr: *array as u32, slot: self.slot(*array, addr)?, src: *src as u32 }
                }
                Stmt::Accumulate { array, addr, src, op, first } => Op::Acc {
                    arr: *array as u32,
                    slot: self.slot(*array, addr)?,
                    src: *src as u32,
                    op: *op,
                    first: mask(first),
                },
                Stmt::RegAccumulate { acc, src, op, first } => {
                    Op::RegAcc { acc: *acc as u32, src: *src as u32, op: *op, first: mask(first) }
                }
            };
            self.ops.push(op);
        }
        Ok(())
    }
}

fn is_leaf(body: &[Stmt]) -> bool {
    !body.iter().any(|s| matches!(s, Stmt::Loop { .. }))
}

impl<T> Compiler<'_, T> {
    /// Repairs jump targets after removing the op at `at`.
    fn fix_jumps(&mut self, at: usize) {
        for op in &mut self.ops[at..] {
            match op {
                Op::Next { body, .. } if *body as usize > at => *body -= 1,
                Op::Kernel { skip, .. } if *skip as usize > at => *skip -= 1,
                _ => {}
            }
        }
    }
}

fn extents(body: &[Stmt], out: &mut [usize]) {
    for s in body {
        if let Stmt::Loop { id, extent, body } = s {
            out[*id] = *extent;
            extents(body, out);
        }
    }
}

/// Compiles with vector kernels for leaf loops.
pub fn compile<T: Element>(nest: &LoopNest) -> Result<Program<T>, ExecError> {
    compile_with(nest, true)
}

/// Compiles; without `vectorize` every loop runs one scalar op at a time.
pub fn compile_with<T: Element>(nest: &LoopNest, vectorize: bool) -> Result<Program<T>, ExecError> {
    if nest.loops > 64 {
        return Err(ExecError::TooManyLoops(nest.loops));
    }
    let mut ext = vec![1; nest.loops];
    extents(&nest.body, &mut ext);
    let mut c = Compiler {
        nest,
        ops: Vec::new(),
        slot_base: Vec::new(),
        extents: ext,
        deltas: vec![Vec::new(); nest.loops],
        kernels: Vec::new(),
        vectorize,
    };
    c.body(&nest.body)?;
    Ok(Program {
        ops: c.ops,
        slot_base: c.slot_base,
        extents: c.extents,
        deltas: c.deltas,
        registers: nest.registers,
        kernels: c.kernels,
    })
}

impl<T: Element> Program<T> {
    /// Executes over `bufs`, indexed by array id. With `TRACE`, arithmetic is
    /// skipped and every memory access is reported instead.
    fn exec<const TRACE: bool>(&self, bufs: &mut [Vec<T>], sink: &mut dyn FnMut(Access)) {
        let mut regs = vec![T::default(); self.registers.max(1)];
        let mut slots = self.slot_base.clone();
        let mut index = vec![0usize; self.extents.len()];
        // bit l set iff loop l is past its first iteration
        let mut nonzero = 0u64;
        let mut scratch = Scratch::default();
        let mut pc = 0;
        while pc < self.ops.len() {
            match self.ops[pc] {
                Op::Kernel { kernel, skip } => {
                    if !TRACE {
                        let k = &self.kernels[kernel as usize];
                        k.run(self.extents[k.lp], &slots, nonzero, &mut regs, bufs, &mut scratch);
                        pc = skip as usize;
                        continue;
                    }
                }
                Op::Enter { lp } => index[lp as usize] = 0,
                Op::Next { lp, body } => {
                    let l = lp as usize;
                    index[l] += 1;
                    if index[l] < self.extents[l] {
                        for &(s, d) in &self.deltas[l] {
                            slots[s as usize] += d;
                        }
                        nonzero |= 1 << l;
                        pc = body as usize;
                        continue;
                    }
                    let back = self.extents[l] - 1;
                    for &(s, d) in &self.deltas[l] {
                        slots[s as usize] -= d * back;
                    }
                    nonzero &= !(1 << l);
                }
                Op::Load { dst, arr, slot } => {
                    let off = slots[slot as usize];
                    if TRACE {
                        sink(Access { array: arr as usize, offset: off, write: false });
                    } else {
                        // SAFETY: compile() bounded every address by the buffer length
                        regs[dst as usize] = unsafe { *bufs.get_unchecked(arr as usize).get_unchecked(off) };
                    }
                }
                Op::Const { dst, value } => {
                    if !TRACE {
                        regs[dst as usize] = value;
                    }
                }
                Op::Bin { dst, op, a, b } => {
                    if !TRACE {
                        regs[dst as usize] = T::apply(op, regs[a as usize], regs[b as usize]);
                    }
                }
                Op::Store { arr, slot, src } => {
                    let off = slots[slot as usize];
                    if TRACE {
                        sink(Access { array: arr as usize, offset: off, write: true });
                    } else {
                        // SAFETY: as for loads
                        unsafe { *bufs.get_unchecked_mut(arr as usize).get_unchecked_mut(off) = regs[src as usize] };
                    }
                }
                Op::Acc { arr, slot, src, op, first } => {
                    let off = slots[slot as usize];
                    let is_first = nonzero & first == 0;
                    if TRACE {
                        if !is_first {
                            sink(Access { array: arr as usize, offset: off, write: false });
                        }
                        sink(Access { array: arr as usize, offset: off, write: true });
                    } else {
                        // SAFETY: as for loads
                        let cell = unsafe { bufs.get_unchecked_mut(arr as usize).get_unchecked_mut(off) };
                        let v = regs[src as usize];
                        *cell = if is_first { v } else { T::apply(op, *cell, v) };
                    }
                }
                Op::RegAcc { acc, src, op, first } => {
                    if !TRACE {
                        let v = regs[src as usize];
                        let a = &mut regs[acc as usize];
                        *a = if nonzero & first == 0 { v } else { T::apply(op, *a, v) };
                    }
                }
            }
            pc += 1;
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Src {
    Vector(u32),
    Scalar(u32),
    /// Unit-stride run of an array that the kernel never writes.
    Mem { arr: u32, slot: u32 },
}

/// Leaf-loop op over all iterations at once. `stride` is the address step
/// per iteration.
#[derive(Debug, Clone, Copy)]
enum KOp<T> {
    Load { dst: u32, arr: u32, slot: u32, stride: usize },
    /// Loop-invariant load into a register.
    LoadScalar { dst: u32, arr: u32, slot: u32 },
    Const { dst: u32, value: T },
    Bin { dst: u32, op: PrimOp, a: Src, b: Src },
    Store { arr: u32, slot: u32, stride: usize, src: Src },
    Acc { arr: u32, slot: u32, stride: usize, src: Src, op: PrimOp, first: u64 },
    RegAcc { acc: u32, src: Src, op: PrimOp, first: u64 },
}

#[derive(Debug, Clone)]
struct Kernel<T> {
    lp: usize,
    ops: Vec<KOp<T>>,
    vectors: usize,
}

#[derive(Default)]
struct Scratch<T> {
    vectors: Vec<Vec<T>>,
}

impl<T: Element> Kernel<T> {
    /// `slots` are the slots of the loop's memory statements in order.
    /// Returns `None` when an array is both read and written in the loop.
    fn build(lp: LoopId, body: &[Stmt], slots: &[u32], deltas: &[(u32, usize)], registers: usize) -> Option<Self> {
        let stride_of = |slot: u32| deltas.iter().filter(|(s, _)| *s == slot).map(|(_, d)| d).sum::<usize>();
        let mut vector_of: Vec<Option<Src>> = vec![None; registers];
        let mut vectors = 0u32;
        let mut slot_iter = slots.iter().copied();
        let (mut read, mut written) = (Vec::new(), Vec::new());
        let mut ops = Vec::new();
        let mut def = |r: usize, vector_of: &mut Vec<Option<Src>>| {
            let v = vectors;
            vectors += 1;
            vector_of[r] = Some(Src::Vector(v));
            v
        };
        let src = |r: usize, vector_of: &Vec<Option<Src>>| vector_of[r].unwrap_or(Src::Scalar(r as u32));
        for s in body {
            ops.push(match s {
                Stmt::Load { dst, array, .. } => {
                    read.push(*array);
                    let slot = slot_iter.next()?;
                    let stride = stride_of(slot);
                    if stride == 1 {
                        vector_of[*dst] = Some(Src::Mem { arr: *array as u32, slot });
                        continue;
                    }
                    if stride == 0 {
                        vector_of[*dst] = None;
                        KOp::LoadScalar { dst: *dst as u32, arr: *array as u32, slot }
                    } else {
                        let d = def(*dst, &mut vector_of);
                        KOp::Load { dst: d, arr: *array as u32, slot, stride }
                    }
                }
                Stmt::Const { dst, value } => KOp::Const { dst: def(*dst, &mut vector_of), value: T::from_f64(*value) },
                Stmt::Bin { dst, op, a, b } => {
                    let (a, b) = (src(*a, &vector_of), src(*b, &vector_of));
                    KOp::Bin { dst: def(*dst, &mut vector_of), op: *op, a, b }
                }
                Stmt::Store { array, src: r, .. } => {
                    written.push(*array);
                    let slot = slot_iter.next()?;
                    KOp::Store { arr: *array as u32, slot, stride: stride_of(slot), src: src(*r, &vector_of) }
                }
                Stmt::Accumulate { array, src: r, op, first, .. } => {
                    written.push(*array);
                    let slot = slot_iter.next()?;
                    KOp::Acc {
                        arr: *array as u32,
                        slot,
                        stride: stride_of(slot),
                        src: src(*r, &vector_of),
                        op: *op,
                        first: mask(first),
                    }
                }
                Stmt::RegAccumulate { acc, src: r, op, first } => {
                    if vector_of[*acc].is_some() {
                        return None;
                    }
                    KOp::RegAcc { acc: *acc as u32, src: src(*r, &vector_of), op: *op, first: mask(first) }
                }
                Stmt::Loop { .. } => return None,
            });
        }
        if read.iter().any(|a| written.contains(a)) {
            return None;
        }
        // a register accumulated here must not also be read here
        let acc_regs: Vec<u32> = ops
            .iter()
            .filter_map(|op| match op {
                KOp::RegAcc { acc, .. } => Some(*acc),
                _ => None,
            })
            .collect();
        let reads_acc = |s: &Src| matches!(s, Src::Scalar(r) if acc_regs.contains(r));
        let conflict = ops.iter().any(|op| match op {
            KOp::Bin { a, b, .. } => reads_acc(a) || reads_acc(b),
            KOp::Store { src, .. } | KOp::Acc { src, .. } | KOp::RegAcc { src, .. } => reads_acc(src),
            _ => false,
        });
        if conflict {
            return None;
        }
        Some(Kernel { lp, ops, vectors: vectors as usize })
    }

    fn run(&self, n: usize, slots: &[usize], nonzero: u64, regs: &mut [T], bufs: &mut [Vec<T>], sc: &mut Scratch<T>) {
        if sc.vectors.len() < self.vectors {
            sc.vectors.resize_with(self.vectors, Vec::new);
        }
        for v in &mut sc.vectors[..self.vectors] {
            v.resize(n, T::default());
        }
        let bit = 1u64 << self.lp;
        for op in &self.ops {
            // SAFETY (all unchecked accesses): compile() bounded base + stride * (n - 1)
            // by the buffer length, and build() keeps read and written arrays disjoint.
            match *op {
                KOp::Load { dst, arr, slot, stride } => {
                    let buf = &bufs[arr as usize];
                    let base = slots[slot as usize];
                    for (i, o) in sc.vectors[dst as usize].iter_mut().enumerate() {
                        *o = unsafe { *buf.get_unchecked(base + i * stride) };
                    }
                }
                KOp::LoadScalar { dst, arr, slot } => {
                    regs[dst as usize] = unsafe { *bufs[arr as usize].get_unchecked(slots[slot as usize]) };
                }
                KOp::Const { dst, value } => sc.vectors[dst as usize].fill(value),
                KOp::Bin { dst, op, a, b } => {
                    let mut out = std::mem::take(&mut sc.vectors[dst as usize]);
                    let ptr = bufs.as_ptr();
                    let (a, b) = unsafe { (operand(a, n, slots, regs, sc, ptr), operand(b, n, slots, regs, sc, ptr)) };
                    binary(op, a, b, &mut out);
                    sc.vectors[dst as usize] = out;
                }
                KOp::Store { arr, slot, stride, src } => {
                    let base = slots[slot as usize];
                    let x = unsafe { operand(src, n, slots, regs, sc, bufs.as_ptr()) };
                    let buf = &mut bufs[arr as usize];
                    match (x, stride) {
                        (Operand::Vector(v), 1) => unsafe { buf.get_unchecked_mut(base..base + n) }.copy_from_slice(v),
                        _ => {
                            for i in 0..n {
                                unsafe { *buf.get_unchecked_mut(base + i * stride) = x.at(i) };
                            }
                        }
                    }
                }
                KOp::Acc { arr, slot, stride, src, op, first } => {
                    let base = slots[slot as usize];
                    let x = unsafe { operand(src, n, slots, regs, sc, bufs.as_ptr()) };
                    let buf = &mut bufs[arr as usize];
                    // past iteration 0 the first-visit test no longer changes
                    let (first0, later) = (nonzero & first == 0, (nonzero | bit) & first == 0);
                    let cell0 = unsafe { buf.get_unchecked_mut(base) };
                    *cell0 = if first0 { x.at(0) } else { T::apply(op, *cell0, x.at(0)) };
                    if later {
                        for i in 1..n {
                            unsafe { *buf.get_unchecked_mut(base + i * stride) = x.at(i) };
                        }
                    } else if stride == 1 {
                        accumulate(op, unsafe { buf.get_unchecked_mut(base..base + n) }, x, 1);
                    } else {
                        for i in 1..n {
                            let cell = unsafe { buf.get_unchecked_mut(base + i * stride) };
                            *cell = T::apply(op, *cell, x.at(i));
                        }
                    }
                }
                KOp::RegAcc { acc, src, op, first } => {
                    let x = unsafe { operand(src, n, slots, regs, sc, bufs.as_ptr()) };
                    let mut a = regs[acc as usize];
                    let mut start = 0;
                    if nonzero & first == 0 {
                        a = x.at(0);
                        start = 1;
                    }
                    if start < n {
                        a = if (nonzero | bit) & first == 0 { x.at(n - 1) } else { fold(op, a, &x, start, n) };
                    }
                    regs[acc as usize] = a;
                }
            }
        }
    }
}

#[derive(Clone, Copy)]
enum Operand<'a, T> {
    Vector(&'a [T]),
    Scalar(T),
}

impl<T: Copy> Operand<'_, T> {
    #[inline(always)]
    fn at(&self, i: usize) -> T {
        match self {
            Operand::Vector(v) => v[i],
            Operand::Scalar(x) => *x,
        }
    }
}

/// Resolves `s` over `n` iterations.
///
/// # Safety
/// A `Mem` operand must lie within its buffer, and that buffer must not be
/// written while the returned slice is live.
unsafe fn operand<'a, T: Copy>(
    s: Src,
    n: usize,
    slots: &[usize],
    regs: &[T],
    sc: &'a Scratch<T>,
    bufs: *const Vec<T>,
) -> Operand<'a, T> {
    match s {
        Src::Vector(v) => Operand::Vector(&sc.vectors[v as usize]),
        Src::Scalar(r) => Operand::Scalar(regs[r as usize]),
        Src::Mem { arr, slot } => {
            let buf = &*bufs.add(arr as usize);
            Operand::Vector(std::slice::from_raw_parts(buf.as_ptr().add(slots[slot as usize]), n))
        }
    }
}

/// `cells[i] = op(cells[i], x[i])` for `i` in `from..`.
fn accumulate<T: Element>(op: PrimOp, cells: &mut [T], x: Operand<'_, T>, from: usize) {
    #[inline(always)]
    fn go<T: Element>(f: impl Fn(T, T) -> T, cells: &mut [T], x: Operand<'_, T>, from: usize) {
        match x {
            Operand::Vector(v) => {
                for (c, &y) in cells[from..].iter_mut().zip(&v[from..]) {
                    *c = f(*c, y);
                }
            }
            Operand::Scalar(y) => {
                for c in &mut cells[from..] {
                    *c = f(*c, y);
                }
            }
        }
    }
    match op {
        PrimOp::Add => go(|x, y| T::apply(PrimOp::Add, x, y), cells, x, from),
        PrimOp::Mul => go(|x, y| T::apply(PrimOp::Mul, x, y), cells, x, from),
        PrimOp::Sub => go(|x, y| T::apply(PrimOp::Sub, x, y), cells, x, from),
        PrimOp::Div => go(|x, y| T::apply(PrimOp::Div, x, y), cells, x, from),
        PrimOp::Min => go(|x, y| T::apply(PrimOp::Min, x, y), cells, x, from),
        PrimOp::Max => go(|x, y| T::apply(PrimOp::Max, x, y), cells, x, from),
    }
}

/// Elementwise `op`; the match on `op` sits outside the element loop.
fn binary<T: Element>(op: PrimOp, a: Operand<'_, T>, b: Operand<'_, T>, out: &mut [T]) {
    #[inline(always)]
    fn go<T: Element>(f: impl Fn(T, T) -> T, a: Operand<'_, T>, b: Operand<'_, T>, out: &mut [T]) {
        match (a, b) {
            (Operand::Vector(x), Operand::Vector(y)) => {
                for ((o, &x), &y) in out.iter_mut().zip(x).zip(y) {
                    *o = f(x, y);
                }
            }
            (Operand::Vector(x), Operand::Scalar(y)) => {
                for (o, &x) in out.iter_mut().zip(x) {
                    *o = f(x, y);
                }
            }
            (Operand::Scalar(x), Operand::Vector(y)) => {
                for (o, &y) in out.iter_mut().zip(y) {
                    *o = f(x, y);
                }
            }
            (Operand::Scalar(x), Operand::Scalar(y)) => out.fill(f(x, y)),
        }
    }
    match op {
        PrimOp::Add => go(|x, y| T::apply(PrimOp::Add, x, y), a, b, out),
        PrimOp::Mul => go(|x, y| T::apply(PrimOp::Mul, x, y), a, b, out),
        PrimOp::Sub => go(|x, y| T::apply(PrimOp::Sub, x, y), a, b, out),
        PrimOp::Div => go(|x, y| T::apply(PrimOp::Div, x, y), a, b, out),
        PrimOp::Min => go(|x, y| T::apply(PrimOp::Min, x, y), a, b, out),
        PrimOp::Max => go(|x, y| T::apply(PrimOp::Max, x, y), a, b, out),
    }
}

/// Left fold of `x[start..n]` onto `a`, in index order.
fn fold<T: Element>(op: PrimOp, a: T, x: &Operand<'_, T>, start: usize, n: usize) -> T {
    #[inline(always)]
    fn go<T: Element>(f: impl Fn(T, T) -> T, a: T, x: &Operand<'_, T>, start: usize, n: usize) -> T {
        match x {
            Operand::Vector(v) => v[start..n].iter().fold(a, |acc, &y| f(acc, y)),
            Operand::Scalar(y) => (start..n).fold(a, |acc, _| f(acc, *y)),
        }
    }
    match op {
        PrimOp::Add => go(|x, y| T::apply(PrimOp::Add, x, y), a, x, start, n),
        PrimOp::Mul => go(|x, y| T::apply(PrimOp::Mul, x, y), a, x, start, n),
        PrimOp::Sub => go(|x, y| T::apply(PrimOp::Sub, x, y), a, x, start, n),
        PrimOp::Div => go(|x, y| T::apply(PrimOp::Div, x, y), a, x, start, n),
        PrimOp::Min => go(|x, y| T::apply(PrimOp::Min, x, y), a, x, start, n),
        PrimOp::Max => go(|x, y| T::apply(PrimOp::Max, x, y), a, x, start, n),
    }
}

/// A compiled nest bound to its buffers, ready for repeated execution.
pub struct Executable<'n, T> {
    nest: &'n LoopNest,
    program: Program<T>,
    bufs: Vec<Vec<T>>,
}

impl<'n, T: Element> Executable<'n, T> {
    pub fn new(nest: &'n LoopNest, inputs: &Inputs<T>) -> Result<Self, ExecError> {
        let program = compile(nest)?;
        let mut bufs = Vec::with_capacity(nest.arrays.len());
        for decl in &nest.arrays {
            let mut buf = vec![T::default(); decl.len];
            if decl.role == Role::Input {
                let v = inputs.get(&decl.name).ok_or_else(|| ExecError::MissingInput(decl.name.clone()))?;
                let (expected, got) = (decl.shape.extents(), v.shape().extents());
                if expected != got {
                    return Err(ExecError::InputShape { name: decl.name.clone(), expected, got });
                }
                for (o, x) in decl.shape.offsets().zip(v.to_vec()) {
                    buf[o] = x;
                }
            }
            bufs.push(buf);
        }
        Ok(Executable { nest, program, bufs })
    }

    pub fn execute(&mut self) {
        self.program.exec::<false>(&mut self.bufs, &mut |_| {});
    }

    /// The program result: the output buffer seen through the orientation.
    pub fn output(&self) -> Result<View<T>, ExecError> {
        let decl = &self.nest.arrays[self.nest.output];
        let raw = View::new(self.bufs[self.nest.output].clone().into(), 0, decl.shape.clone())?;
        Ok(self.nest.orientation.iter().try_fold(raw, |v, op| v.relayout(*op))?)
    }

    /// Median wall time of `repetitions` runs after one warm-up run.
    pub fn time(&mut self, repetitions: usize) -> f64 {
        self.execute();
        let mut ms: Vec<f64> = (0..repetitions.max(1))
            .map(|_| {
                let t = Instant::now();
                self.execute();
                t.elapsed().as_secs_f64() * 1e3
            })
            .collect();
        ms.sort_by(f64::total_cmp);
        let mid = ms.len() / 2;
        if ms.len() % 2 == 1 {
            ms[mid]
        } else {
            (ms[mid - 1] + ms[mid]) / 2.0
        }
    }
}

/// Executes `nest` once and returns its result.
pub fn run<T: Element>(nest: &LoopNest, inputs: &Inputs<T>) -> Result<View<T>, ExecError> {
    let mut exe = Executable::new(nest, inputs)?;
    exe.execute();
    exe.output()
}

/// Median milliseconds of `repetitions` runs after a warm-up.
pub fn time_variant<T: Element>(nest: &LoopNest, inputs: &Inputs<T>, repetitions: usize) -> Result<f64, ExecError> {
    Ok(Executable::new(nest, inputs)?.time(repetitions))
}

/// Memory accesses of one execution, in order. Register traffic is omitted.
pub fn trace_accesses(nest: &LoopNest, sink: &mut dyn FnMut(Access)) -> Result<(), ExecError> {
    let program = compile::<f64>(nest)?;
    program.exec::<true>(&mut [], sink);
    Ok(())
}
