//! Direct recursive interpretation of expressions: the semantic reference
//! that loop nests and rewrites are checked against.

use std::collections::BTreeMap;
use std::rc::Rc;

use thiserror::Error;

use super::Element;
use crate::ast::{Expr, Lambda, VarRef};
use crate::layout::{LayoutError, LayoutOp, View};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unbound input `{0}`")]
    UnboundInput(String),
    #[error("unbound variable (up {up}, pos {pos})")]
    UnboundVar { up: usize, pos: usize },
    #[error("expected a function value")]
    NotAFunction,
    #[error("expected an array value")]
    NotAnArray,
    #[error("function of arity {expected} called with {got} arguments")]
    ArityMismatch { expected: usize, got: usize },
    #[error("outer extents disagree: {0:?}")]
    ExtentMismatch(Vec<usize>),
    #[error("element shapes of one HoF disagree")]
    RaggedResult,
    #[error(transparent)]
    Layout(#[from] LayoutError),
}

pub type Inputs<T> = BTreeMap<String, View<T>>;

#[derive(Clone)]
enum Value<'e, T> {
    Array(View<T>),
    Func(&'e Lambda, Env<'e, T>),
}

struct Frame<'e, T> {
    values: Vec<Value<'e, T>>,
    parent: Env<'e, T>,
}

type Env<'e, T> = Option<Rc<Frame<'e, T>>>;

fn lookup<'e, T: Clone>(env: &Env<'e, T>, v: VarRef) -> Result<Value<'e, T>, EvalError> {
    let unbound = EvalError::UnboundVar { up: v.up, pos: v.pos };
    let mut frame = env.as_ref().ok_or(unbound.clone())?;
    for _ in 0..v.up {
        frame = frame.parent.as_ref().ok_or(unbound.clone())?;
    }
    frame.values.get(v.pos).cloned().ok_or(unbound)
}

fn scalar<T: Element>(v: T) -> View<T> {
    View::from_vec(vec![v], &[]).expect("scalar view")
}

struct Interp<'i, T> {
    inputs: &'i Inputs<T>,
}

impl<'e, T: Element> Interp<'_, T> {
    fn array(&self, e: &'e Expr, env: &Env<'e, T>) -> Result<View<T>, EvalError> {
        match self.eval(e, env)? {
            Value::Array(v) => Ok(v),
            Value::Func(..) => Err(EvalError::NotAnArray),
        }
    }

    fn call(&self, f: Value<'e, T>, args: Vec<Value<'e, T>>) -> Result<View<T>, EvalError> {
        let Value::Func(l, env) = f else { return Err(EvalError::NotAFunction) };
        if l.arity != args.len() {
            return Err(EvalError::ArityMismatch { expected: l.arity, got: args.len() });
        }
        let env = Some(Rc::new(Frame { values: args, parent: env }));
        self.array(&l.body, &env)
    }

    fn slices(&self, arrays: &'e [Expr], env: &Env<'e, T>) -> Result<(usize, Vec<View<T>>), EvalError> {
        let views = arrays.iter().map(|a| self.array(a, env)).collect::<Result<Vec<_>, _>>()?;
        let extents: Vec<usize> = views
            .iter()
            .map(|v| v.shape().outermost().map(|d| d.extent).ok_or(LayoutError::ScalarSlice))
            .collect::<Result<_, _>>()?;
        if extents.windows(2).any(|w| w[0] != w[1]) {
            return Err(EvalError::ExtentMismatch(extents));
        }
        Ok((extents[0], views))
    }

    fn row(views: &[View<T>], i: usize) -> Result<Vec<Value<'e, T>>, EvalError> {
        views.iter().map(|v| Ok(Value::Array(v.outer_slice(i)?))).collect()
    }

    fn eval(&self, e: &'e Expr, env: &Env<'e, T>) -> Result<Value<'e, T>, EvalError> {
        Ok(match e {
            Expr::Input(name) => Value::Array(
                self.inputs.get(name).cloned().ok_or_else(|| EvalError::UnboundInput(name.clone()))?,
            ),
            Expr::Const(c) => Value::Array(scalar(T::from_f64(*c))),
            Expr::Var(v) => lookup(env, *v)?,
            Expr::Lambda(l) => Value::Func(l, env.clone()),
            Expr::Apply(f, args) => {
                let f = self.eval(f, env)?;
                let args = args.iter().map(|a| self.eval(a, env)).collect::<Result<Vec<_>, _>>()?;
                Value::Array(self.call(f, args)?)
            }
            Expr::Prim(op, xs) => {
                let vals = xs
                    .iter()
                    .map(|x| self.array(x, env)?.scalar().ok_or(EvalError::NotAnArray))
                    .collect::<Result<Vec<_>, _>>()?;
                let [a, b] = vals[..] else { return Err(EvalError::ArityMismatch { expected: 2, got: vals.len() }) };
                Value::Array(scalar(T::apply(*op, a, b)))
            }
            Expr::NZip(f, arrays) => {
                let f = self.eval(f, env)?;
                let (extent, views) = self.slices(arrays, env)?;
                let mut data = Vec::new();
                let mut elem: Option<Vec<usize>> = None;
                for i in 0..extent {
                    let r = self.call(f.clone(), Self::row(&views, i)?)?;
                    let ex = r.shape().extents();
                    if elem.get_or_insert_with(|| ex.clone()) != &ex {
                        return Err(EvalError::RaggedResult);
                    }
                    data.extend(r.to_vec());
                }
                let mut extents = elem.unwrap_or_default();
                extents.push(extent);
                Value::Array(View::from_vec(data, &extents)?)
            }
            Expr::Rnz(r, m, arrays) => {
                let r = self.eval(r, env)?;
                let m = self.eval(m, env)?;
                let (extent, views) = self.slices(arrays, env)?;
                let mut acc = self.call(m.clone(), Self::row(&views, 0)?)?;
                for i in 1..extent {
                    let next = self.call(m.clone(), Self::row(&views, i)?)?;
                    acc = self.call(r.clone(), vec![Value::Array(acc), Value::Array(next)])?;
                }
                let extents = acc.shape().extents();
                Value::Array(View::from_vec(acc.to_vec(), &extents)?)
            }
            Expr::Subdiv { dim, block, array } => self.relayout(LayoutOp::Subdiv { dim: *dim, block: *block }, array, env)?,
            Expr::Flatten { dim, array } => self.relayout(LayoutOp::Flatten { dim: *dim }, array, env)?,
            Expr::Flip { a, b, array } => self.relayout(LayoutOp::Flip { a: *a, b: *b }, array, env)?,
        })
    }

    fn relayout(&self, op: LayoutOp, array: &'e Expr, env: &Env<'e, T>) -> Result<Value<'e, T>, EvalError> {
        Ok(Value::Array(self.array(array, env)?.relayout(op)?))
    }
}

/// Evaluates a closed array expression. The result is a view in logical order.
pub fn evaluate<T: Element>(e: &Expr, inputs: &Inputs<T>) -> Result<View<T>, EvalError> {
    Interp { inputs }.array(e, &None)
}
