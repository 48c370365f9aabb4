//! Lowering of a fused, normalized HoF nest to counted loops with affine
//! addressing. Layout nodes only change strides; no data moves for them.
//!
//! Each map-like HoF becomes a loop that slices its target. Each reduction
//! becomes a loop accumulating into its target, which is a register for
//! scalar results and a contiguous temporary for array results. A reduction
//! nested directly in a reduction with the same operator accumulates into
//! the enclosing accumulator.

mod ir;

use thiserror::Error;

use crate::ast::{infer_in, peel_layouts, reduce_op, ElemKind, Expr, Lambda, PrimOp, Scope, Ty, TypeEnv, TypeError};
use crate::layout::{LayoutError, LayoutOp, Shape};

pub use ir::{AccDecl, AccStorage, Affine, ArrayDecl, ArrayId, LoopId, LoopNest, Reg, Role, Stmt};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LowerError {
    #[error("cannot lower: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
}

fn unsupported(msg: impl Into<String>) -> LowerError {
    LowerError::Unsupported(msg.into())
}

/// A strided region of one array, addressed relative to enclosing loops.
#[derive(Debug, Clone)]
struct SymView {
    array: ArrayId,
    addr: Affine,
    shape: Shape,
}

impl SymView {
    fn slice(&self, l: LoopId) -> Result<SymView, LowerError> {
        let outer = self.shape.outermost().ok_or(LayoutError::ScalarSlice)?;
        Ok(SymView { array: self.array, addr: self.addr.plus(l, outer.stride), shape: self.shape.inner() })
    }

    fn relayout(&self, op: LayoutOp) -> Result<SymView, LowerError> {
        Ok(SymView { shape: op.apply(&self.shape)?, ..self.clone() })
    }
}

#[derive(Debug, Clone)]
enum Binding {
    View(SymView),
    Reg(Reg),
}

#[derive(Debug, Clone)]
enum Place {
    Mem(SymView),
    Reg(Reg),
}

/// Where results go. An empty `first` means plain assignment.
#[derive(Debug, Clone)]
struct Target {
    place: Place,
    op: PrimOp,
    first: Vec<LoopId>,
}

impl Target {
    fn slice(&self, l: LoopId) -> Result<Target, LowerError> {
        match &self.place {
            Place::Mem(v) => Ok(Target { place: Place::Mem(v.slice(l)?), ..self.clone() }),
            Place::Reg(_) => Err(unsupported("array result into a scalar accumulator")),
        }
    }

    fn relayout(&self, op: LayoutOp) -> Result<Target, LowerError> {
        match &self.place {
            Place::Mem(v) => Ok(Target { place: Place::Mem(v.relayout(op)?), ..self.clone() }),
            Place::Reg(_) => Err(unsupported("layout of a scalar")),
        }
    }
}

struct Lowerer<'a> {
    arrays: Vec<ArrayDecl>,
    accumulators: Vec<AccDecl>,
    loops: usize,
    registers: usize,
    frames: Vec<Vec<Binding>>,
    scope: Scope<'a>,
}

impl<'a> Lowerer<'a> {
    fn reg(&mut self) -> Reg {
        self.registers += 1;
        self.registers - 1
    }

    fn new_loop(&mut self) -> LoopId {
        self.loops += 1;
        self.loops - 1
    }

    fn fresh_name(&self, stem: &str) -> String {
        let mut name = stem.to_string();
        while self.arrays.iter().any(|a| a.name == name) {
            name.push('_');
        }
        name
    }

    fn add_array(&mut self, stem: &str, role: Role, shape: Shape) -> ArrayId {
        let name = self.fresh_name(stem);
        let len = shape.max_offset() + 1;
        self.arrays.push(ArrayDecl { name, role, len, shape });
        self.arrays.len() - 1
    }

    fn shape(&self, e: &Expr) -> Result<Shape, LowerError> {
        match infer_in(e, &self.scope)? {
            Ty::Array(s) => Ok(s),
            _ => Err(unsupported("function-valued expression")),
        }
    }

    fn bind(&mut self, frame: Vec<Binding>) {
        let types = frame
            .iter()
            .map(|b| match b {
                Binding::View(v) => Ty::Array(v.shape.clone()),
                Binding::Reg(_) => Ty::Array(Shape::scalar()),
            })
            .collect();
        self.scope.push(types);
        self.frames.push(frame);
    }

    fn unbind(&mut self) {
        self.scope.pop();
        self.frames.pop();
    }

    fn lookup(&self, up: usize, pos: usize) -> Result<&Binding, LowerError> {
        self.frames
            .len()
            .checked_sub(up + 1)
            .and_then(|i| self.frames[i].get(pos))
            .ok_or_else(|| unsupported(format!("unbound variable ({up}, {pos})")))
    }

    /// `e` as a region of an existing array, if it is an input or a binder
    /// under layouts.
    fn as_view(&self, e: &Expr) -> Result<Option<SymView>, LowerError> {
        let (chain, base) = peel_layouts(e);
        let view = match base {
            Expr::Input(name) => {
                let id = self
                    .arrays
                    .iter()
                    .position(|a| a.role == Role::Input && &a.name == name)
                    .ok_or_else(|| unsupported(format!("unknown input `{name}`")))?;
                SymView { array: id, addr: Affine::constant(0), shape: self.arrays[id].shape.clone() }
            }
            Expr::Var(v) => match self.lookup(v.up, v.pos)? {
                Binding::View(view) => view.clone(),
                Binding::Reg(_) if chain.is_empty() => return Ok(None),
                Binding::Reg(_) => return Err(unsupported("layout of a scalar")),
            },
            _ => return Ok(None),
        };
        chain.into_iter().try_fold(view, |v, op| v.relayout(op)).map(Some)
    }

    fn array_args(&self, xs: &[Expr]) -> Result<Vec<SymView>, LowerError> {
        xs.iter()
            .map(|x| self.as_view(x)?.ok_or_else(|| unsupported(format!("unfused HoF argument {x}"))))
            .collect()
    }

    fn write(&self, target: &Target, src: Reg, out: &mut Vec<Stmt>) {
        let (op, first) = (target.op, target.first.clone());
        out.push(match &target.place {
            Place::Mem(v) if first.is_empty() => Stmt::Store { array: v.array, addr: v.addr.clone(), src },
            Place::Mem(v) => Stmt::Accumulate { array: v.array, addr: v.addr.clone(), src, op, first },
            Place::Reg(acc) => Stmt::RegAccumulate { acc: *acc, src, op, first },
        });
    }

    fn copy(&mut self, src: &SymView, target: &Target, out: &mut Vec<Stmt>) -> Result<(), LowerError> {
        let Some(outer) = src.shape.outermost() else {
            let r = self.reg();
            out.push(Stmt::Load { dst: r, array: src.array, addr: src.addr.clone() });
            self.write(target, r, out);
            return Ok(());
        };
        let l = self.new_loop();
        let mut body = Vec::new();
        self.copy(&src.slice(l)?, &target.slice(l)?, &mut body)?;
        out.push(Stmt::Loop { id: l, extent: outer.extent, body });
        Ok(())
    }

    fn lambda(f: &Expr) -> Result<&Lambda, LowerError> {
        f.as_lambda().ok_or_else(|| unsupported(format!("HoF function {f} is not a lambda")))
    }

    /// One loop over the outer dim of `xs`, running `f` per slice into `inner`.
    fn hof_loop(
        &mut self,
        f: &Expr,
        xs: &[Expr],
        target: &Target,
        slice_target: bool,
        out: &mut Vec<Stmt>,
    ) -> Result<(), LowerError> {
        let l = Self::lambda(f)?;
        let views = self.array_args(xs)?;
        let extent = views
            .first()
            .and_then(|v| v.shape.outermost())
            .map(|d| d.extent)
            .ok_or_else(|| unsupported("HoF over a scalar"))?;
        let id = self.new_loop();
        let slices = views.iter().map(|v| v.slice(id).map(Binding::View)).collect::<Result<Vec<_>, _>>()?;
        let inner = if slice_target {
            target.slice(id)?
        } else {
            let mut t = target.clone();
            t.first.push(id);
            t
        };
        let mut body = Vec::new();
        self.bind(slices);
        let r = self.lower_into(&l.body, &inner, &mut body);
        self.unbind();
        r?;
        out.push(Stmt::Loop { id, extent, body });
        Ok(())
    }

    fn reduction_op(&self, e: &Expr, r: &Expr) -> Result<PrimOp, LowerError> {
        let (op, depth) = reduce_op(r).ok_or_else(|| unsupported(format!("reduction {r} is not a lifted primitive")))?;
        if depth != self.shape(e)?.rank() {
            return Err(unsupported("reduction lift depth differs from the result rank"));
        }
        Ok(op)
    }

    fn lower_into(&mut self, e: &Expr, target: &Target, out: &mut Vec<Stmt>) -> Result<(), LowerError> {
        if let Some(v) = self.as_view(e)? {
            return self.copy(&v, target, out);
        }
        match e {
            Expr::NZip(f, xs) => self.hof_loop(f, xs, target, true, out),
            Expr::Rnz(r, m, xs) => {
                let op = self.reduction_op(e, r)?;
                if !target.first.is_empty() && target.op == op {
                    return self.hof_loop(m, xs, target, false, out);
                }
                let shape = self.shape(e)?;
                if shape.is_scalar() {
                    let acc = self.reduce_to_register(op, m, xs, out)?;
                    self.write(target, acc, out);
                    return Ok(());
                }
                let dense = Shape::row_major(&shape.extents())?;
                let elems = dense.num_elements();
                let stem = format!("tmp{}", self.accumulators.len());
                let t = self.add_array(&stem, Role::Temp, dense.clone());
                self.accumulators.push(AccDecl { storage: AccStorage::Temp(t), elems, op });
                let view = SymView { array: t, addr: Affine::constant(0), shape: dense };
                let acc = Target { place: Place::Mem(view.clone()), op, first: Vec::new() };
                self.hof_loop(m, xs, &acc, false, out)?;
                self.copy(&view, target, out)
            }
            Expr::Subdiv { .. } | Expr::Flatten { .. } | Expr::Flip { .. } => {
                let (chain, base) = peel_layouts(e);
                // the target seen through the inverse chain, innermost last
                let mut shapes = vec![self.shape(base)?];
                for op in &chain {
                    let next = op.apply_logical(shapes.last().expect("nonempty"))?;
                    shapes.push(next);
                }
                let mut inner = target.clone();
                for (k, op) in chain.iter().enumerate().rev() {
                    let inverse = match *op {
                        LayoutOp::Subdiv { dim, .. } => LayoutOp::Flatten { dim },
                        LayoutOp::Flatten { dim } => LayoutOp::Subdiv { dim, block: shapes[k].dims()[dim].extent },
                        flip @ LayoutOp::Flip { .. } => flip,
                    };
                    inner = inner
                        .relayout(inverse)
                        .map_err(|_| unsupported(format!("result layout {op} is not expressible by strides")))?;
                }
                self.lower_into(base, &inner, out)
            }
            Expr::Apply(f, args) => {
                let l = Self::lambda(f)?;
                let frame = self.arguments(args, out)?;
                self.bind(frame);
                let r = self.lower_into(&l.body, target, out);
                self.unbind();
                r
            }
            _ if self.shape(e)?.is_scalar() => {
                let r = self.lower_scalar(e, out)?;
                self.write(target, r, out);
                Ok(())
            }
            _ => Err(unsupported(format!("array expression {e}"))),
        }
    }

    fn reduce_to_register(&mut self, op: PrimOp, m: &Expr, xs: &[Expr], out: &mut Vec<Stmt>) -> Result<Reg, LowerError> {
        let acc = self.reg();
        self.accumulators.push(AccDecl { storage: AccStorage::Register(acc), elems: 1, op });
        let target = Target { place: Place::Reg(acc), op, first: Vec::new() };
        self.hof_loop(m, xs, &target, false, out)?;
        Ok(acc)
    }

    fn arguments(&mut self, args: &[Expr], out: &mut Vec<Stmt>) -> Result<Vec<Binding>, LowerError> {
        args.iter()
            .map(|a| match self.as_view(a)? {
                Some(v) => Ok(Binding::View(v)),
                None if self.shape(a)?.is_scalar() => Ok(Binding::Reg(self.lower_scalar(a, out)?)),
                None => Err(unsupported(format!("array-valued argument {a}"))),
            })
            .collect()
    }

    fn lower_scalar(&mut self, e: &Expr, out: &mut Vec<Stmt>) -> Result<Reg, LowerError> {
        if let Expr::Var(v) = e {
            if let Binding::Reg(r) = self.lookup(v.up, v.pos)? {
                return Ok(*r);
            }
        }
        if let Some(v) = self.as_view(e)? {
            if !v.shape.is_scalar() {
                return Err(unsupported(format!("{e} is not a scalar")));
            }
            let r = self.reg();
            out.push(Stmt::Load { dst: r, array: v.array, addr: v.addr });
            return Ok(r);
        }
        match e {
            Expr::Const(value) => {
                let r = self.reg();
                out.push(Stmt::Const { dst: r, value: *value });
                Ok(r)
            }
            Expr::Prim(op, xs) => {
                let [a, b] = xs.as_slice() else { return Err(unsupported("primitive arity")) };
                let a = self.lower_scalar(a, out)?;
                let b = self.lower_scalar(b, out)?;
                let r = self.reg();
                out.push(Stmt::Bin { dst: r, op: *op, a, b });
                Ok(r)
            }
            Expr::Apply(f, args) => {
                let l = Self::lambda(f)?;
                let frame = self.arguments(args, out)?;
                self.bind(frame);
                let r = self.lower_scalar(&l.body, out);
                self.unbind();
                r
            }
            Expr::Rnz(r, m, xs) => {
                let op = self.reduction_op(e, r)?;
                self.reduce_to_register(op, m, xs, out)
            }
            _ => Err(unsupported(format!("scalar expression {e}"))),
        }
    }
}

/// Lowers a closed program over the inputs of `env`.
pub fn lower(e: &Expr, env: &TypeEnv) -> Result<LoopNest, LowerError> {
    let mut lw = Lowerer {
        arrays: Vec::new(),
        accumulators: Vec::new(),
        loops: 0,
        registers: 0,
        frames: Vec::new(),
        scope: Scope::new(env),
    };
    for (name, ty) in env {
        lw.arrays.push(ArrayDecl {
            name: name.clone(),
            role: Role::Input,
            len: ty.shape.max_offset() + 1,
            shape: ty.shape.clone(),
        });
    }
    let kind = env.values().next().map(|t| t.kind).unwrap_or(ElemKind::Int);
    let (mut orientation, mut base) = peel_layouts(e);
    if lw.as_view(base)?.is_some() {
        orientation.clear();
        base = e;
    }
    let shape = Shape::row_major(&lw.shape(base)?.extents())?;
    let output = lw.add_array("out", Role::Output, shape.clone());
    let target = Target {
        place: Place::Mem(SymView { array: output, addr: Affine::constant(0), shape }),
        op: PrimOp::Add,
        first: Vec::new(),
    };
    let mut body = Vec::new();
    lw.lower_into(base, &target, &mut body)?;
    if lw.loops > 64 {
        return Err(unsupported("more than 64 loops"));
    }
    Ok(LoopNest {
        kind,
        arrays: lw.arrays,
        accumulators: lw.accumulators,
        body,
        loops: lw.loops,
        registers: lw.registers,
        output,
        orientation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::sexp::{parse_program, ParseOptions};
    use crate::enumerate::{enumerate_all, matvec_family};
    use crate::exec::{evaluate, random_inputs, run, trace_accesses, Access};

    const MATMUL: &str = "(input A ((6,1),(4,6))) (input B ((2,1),(6,2)))
        (map (lam (ra) (map (lam (cb) (rnz + * ra cb)) (flip 0 1 B))) A)";

    fn program(src: &str) -> (Expr, TypeEnv) {
        let p = parse_program(src, &ParseOptions::default()).unwrap();
        (p.expr, p.env)
    }

    #[test]
    fn naive_matmul_dump() {
        let (e, env) = program(MATMUL);
        let n = lower(&e, &env).unwrap();
        let expected = "\
array A input 24 ((6,1),(4,6))
array B input 12 ((2,1),(6,2))
array out output 8 ((2,1),(4,2))
acc 0 r0 + elems 1
result out
loop i0 < 4
  loop i1 < 2
    loop i2 < 6
      r1 = A[6*i0 + i2]
      r2 = B[i1 + 2*i2]
      r3 = * r1 r2
      r0 += r3 first(i2)
    out[2*i0 + i1] = r0
";
        assert_eq!(n.dump(), expected);
        assert_eq!(n.acc_elems(), 1);
    }

    #[test]
    fn dot_trace_interleaves_reads() {
        let (e, env) = program("(input u ((4,1))) (input v ((4,1))) (rnz + * u v)");
        let n = lower(&e, &env).unwrap();
        assert_eq!(n.loops, 1);
        let mut trace = Vec::new();
        trace_accesses(&n, &mut |a| trace.push(a)).unwrap();
        let reads: Vec<(usize, usize)> = trace.iter().filter(|a| !a.write).map(|a| (a.array, a.offset)).collect();
        assert_eq!(reads, vec![(0, 0), (1, 0), (0, 1), (1, 1), (0, 2), (1, 2), (0, 3), (1, 3)]);
        assert_eq!(trace.iter().filter(|a| a.write).count(), 1);
    }

    #[test]
    fn loop_nest_matches_interpreter_on_every_variant() {
        let (e, env) = program(MATMUL);
        let ins = random_inputs::<i64>(&env, 17);
        let expected = evaluate(&e, &ins).unwrap().to_vec();
        let muls = |n: &LoopNest| n.dynamic_count(&|s| matches!(s, Stmt::Bin { op: PrimOp::Mul, .. }));
        for v in enumerate_all(&e, &env).unwrap().variants {
            let n = lower(&v.expr, &env).unwrap();
            assert_eq!(run(&n, &ins).unwrap().to_vec(), expected, "{}", v.spine_string());
            assert_eq!(muls(&n), 48);
        }
    }

    #[test]
    fn matvec_accumulator_sizes() {
        let (e, env) = program("(input A ((6,1),(4,6))) (input u ((6,1))) (map (lam (r) (rnz + * r u)) A)");
        let ins = random_inputs::<i64>(&env, 2);
        let expected = evaluate(&e, &ins).unwrap().to_vec();
        let fam = matvec_family(&e, 2, &env).unwrap();
        let sizes: Vec<usize> = fam
            .iter()
            .map(|v| {
                let n = lower(&v.expr, &env).unwrap();
                assert_eq!(run(&n, &ins).unwrap().to_vec(), expected, "{}", v.id);
                n.acc_elems()
            })
            .collect();
        assert_eq!(sizes[..3], [1, 4, 4]);
    }

    #[test]
    fn array_accumulators_are_traced() {
        let (e, env) = program("(input A ((6,1),(4,6))) (input u ((6,1))) (map (lam (r) (rnz + * r u)) A)");
        let fam = matvec_family(&e, 2, &env).unwrap();
        let n = lower(&fam[1].expr, &env).unwrap();
        let tmp = n.arrays.iter().position(|a| a.role == Role::Temp).unwrap();
        let mut touched = 0;
        trace_accesses(&n, &mut |a: Access| touched += (a.array == tmp) as usize).unwrap();
        assert!(touched > 0);
    }

    #[test]
    fn unfused_input_is_refused() {
        let (e, env) = program("(input u ((4,1))) (map (lam (x) (+ x 1)) (map (lam (x) (* x 2)) u))");
        assert!(matches!(lower(&e, &env), Err(LowerError::Unsupported(_))));
    }
}
