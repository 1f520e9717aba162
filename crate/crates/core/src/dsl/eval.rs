//! Expression evaluation.
//!
//! Expressions are lowered to a flat stack program with resolved variable
//! slots. The trainer evaluates the same program millions of times per run,
//! so lookups by name happen once at compile time.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ast::{BinOp, Expr, Func, UnaryOp};
use super::EvalError;

/// Per-step feature values keyed by variable name. All values are finite.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, f64>", into = "BTreeMap<String, f64>")]
pub struct Binding(BTreeMap<String, f64>);

impl Binding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: f64) -> Result<(), EvalError> {
        let name = name.into();
        if !value.is_finite() {
            return Err(EvalError::NonFiniteBinding(name));
        }
        self.0.insert(name, value);
        Ok(())
    }

    /// Builder-style insert for literals known to be finite.
    pub fn with(mut self, name: impl Into<String>, value: f64) -> Self {
        self.insert(name, value).expect("finite binding value");
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Values from `self` layered over `base`.
    pub fn over(&self, base: &Binding) -> Binding {
        let mut merged = base.0.clone();
        merged.extend(self.0.iter().map(|(k, v)| (k.clone(), *v)));
        Binding(merged)
    }
}

impl TryFrom<BTreeMap<String, f64>> for Binding {
    type Error = EvalError;

    fn try_from(map: BTreeMap<String, f64>) -> Result<Self, Self::Error> {
        if let Some((name, _)) = map.iter().find(|(_, v)| !v.is_finite()) {
            return Err(EvalError::NonFiniteBinding(name.clone()));
        }
        Ok(Binding(map))
    }
}

impl From<Binding> for BTreeMap<String, f64> {
    fn from(b: Binding) -> Self {
        b.0
    }
}

impl<const N: usize> From<[(&str, f64); N]> for Binding {
    fn from(pairs: [(&str, f64); N]) -> Self {
        pairs
            .into_iter()
            .fold(Binding::new(), |b, (k, v)| b.with(k, v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Push(f64),
    Load(usize),
    Neg,
    Bin(BinOp),
    Min,
    Max,
    Abs,
    Exp,
    Clip,
    /// Pop; jump to target when the popped value is zero.
    JumpIfZero(usize),
    Jump(usize),
}

/// A compiled expression whose variables index into a caller-supplied slice.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledExpr {
    ops: Vec<Op>,
    max_stack: usize,
}

impl CompiledExpr {
    /// Compiles `expr`, resolving each variable to a slot with `resolve`.
    /// Returns the first unresolvable name (in sorted order) as an error.
    pub fn compile(expr: &Expr, resolve: impl Fn(&str) -> Option<usize>) -> Result<Self, EvalError> {
        if let Some(missing) = expr.free_vars().into_iter().find(|v| resolve(v).is_none()) {
            return Err(EvalError::UndefinedVariable(missing));
        }
        let mut ops = Vec::new();
        emit(expr, &resolve, &mut ops);
        let max_stack = stack_depth(&ops);
        Ok(CompiledExpr { ops, max_stack })
    }

    /// Compiles against an ordered schema; slot `i` is `schema[i]`.
    pub fn for_schema(expr: &Expr, schema: &[&str]) -> Result<Self, EvalError> {
        Self::compile(expr, |name| schema.iter().position(|s| *s == name))
    }

    pub fn eval(&self, slots: &[f64]) -> Result<f64, EvalError> {
        let mut stack: Vec<f64> = Vec::with_capacity(self.max_stack);
        let mut pc = 0;
        while pc < self.ops.len() {
            match self.ops[pc] {
                Op::Push(v) => stack.push(v),
                Op::Load(slot) => stack.push(slots[slot]),
                Op::Neg => {
                    let top = stack.last_mut().expect("operand");
                    *top = -*top;
                }
                Op::Bin(op) => {
                    let rhs = stack.pop().expect("operand");
                    let lhs = stack.pop().expect("operand");
                    stack.push(apply_binary(op, lhs, rhs)?);
                }
                Op::Min | Op::Max => {
                    let b = stack.pop().expect("operand");
                    let a = stack.pop().expect("operand");
                    stack.push(if self.ops[pc] == Op::Min { a.min(b) } else { a.max(b) });
                }
                Op::Abs => {
                    let top = stack.last_mut().expect("operand");
                    *top = top.abs();
                }
                Op::Exp => {
                    let top = stack.last_mut().expect("operand");
                    let v = top.exp();
                    if !v.is_finite() {
                        return Err(EvalError::NonFiniteResult("exp overflow".into()));
                    }
                    *top = v;
                }
                Op::Clip => {
                    let hi = stack.pop().expect("operand");
                    let lo = stack.pop().expect("operand");
                    let x = stack.pop().expect("operand");
                    stack.push(x.max(lo).min(hi));
                }
                Op::JumpIfZero(target) => {
                    if stack.pop().expect("operand") == 0.0 {
                        pc = target;
                        continue;
                    }
                }
                Op::Jump(target) => {
                    pc = target;
                    continue;
                }
            }
            pc += 1;
        }
        Ok(stack.pop().expect("program leaves one value"))
    }
}

fn apply_binary(op: BinOp, lhs: f64, rhs: f64) -> Result<f64, EvalError> {
    let bool_val = |b: bool| if b { 1.0 } else { 0.0 };
    let v = match op {
        BinOp::Add => lhs + rhs,
        BinOp::Sub => lhs - rhs,
        BinOp::Mul => lhs * rhs,
        BinOp::Div => {
            if rhs == 0.0 {
                return Err(EvalError::NonFiniteResult("division by zero".into()));
            }
            lhs / rhs
        }
        BinOp::Lt => bool_val(lhs < rhs),
        BinOp::Le => bool_val(lhs <= rhs),
        BinOp::Gt => bool_val(lhs > rhs),
        BinOp::Ge => bool_val(lhs >= rhs),
        BinOp::Eq => bool_val(lhs == rhs),
    };
    if !v.is_finite() {
        return Err(EvalError::NonFiniteResult(format!("overflow in '{}'", op.symbol())));
    }
    Ok(v)
}

fn emit(expr: &Expr, resolve: &impl Fn(&str) -> Option<usize>, ops: &mut Vec<Op>) {
    match expr {
        Expr::Constant(v) => ops.push(Op::Push(*v)),
        Expr::Variable(name) => ops.push(Op::Load(resolve(name).expect("resolved before emit"))),
        Expr::Unary(UnaryOp::Neg, child) => {
            emit(child, resolve, ops);
            ops.push(Op::Neg);
        }
        Expr::Binary(op, lhs, rhs) => {
            emit(lhs, resolve, ops);
            emit(rhs, resolve, ops);
            ops.push(Op::Bin(*op));
        }
        Expr::Call(Func::If, args) => {
            emit(&args[0], resolve, ops);
            let branch = ops.len();
            ops.push(Op::JumpIfZero(usize::MAX));
            emit(&args[1], resolve, ops);
            let skip = ops.len();
            ops.push(Op::Jump(usize::MAX));
            ops[branch] = Op::JumpIfZero(ops.len());
            emit(&args[2], resolve, ops);
            ops[skip] = Op::Jump(ops.len());
        }
        Expr::Call(func, args) => {
            args.iter().for_each(|a| emit(a, resolve, ops));
            ops.push(match func {
                Func::Min => Op::Min,
                Func::Max => Op::Max,
                Func::Abs => Op::Abs,
                Func::Exp => Op::Exp,
                Func::Clip => Op::Clip,
                Func::If => unreachable!(),
            });
        }
    }
}

/// Upper bound on stack usage (branches counted as if both run).
fn stack_depth(ops: &[Op]) -> usize {
    let mut depth: isize = 0;
    let mut max = 0;
    for op in ops {
        depth += match op {
            Op::Push(_) | Op::Load(_) => 1,
            Op::Neg | Op::Abs | Op::Exp | Op::Jump(_) => 0,
            Op::Bin(_) | Op::Min | Op::Max | Op::JumpIfZero(_) => -1,
            Op::Clip => -2,
        };
        max = max.max(depth);
    }
    max.max(1) as usize
}

/// Evaluates `expr` against a named binding.
///
/// Every free variable must be bound, even ones that sit in an untaken
/// `if` branch. Division by zero and overflow are errors.
pub fn evaluate(expr: &Expr, binding: &Binding) -> Result<f64, EvalError> {
    let names: Vec<&str> = binding.0.keys().map(String::as_str).collect();
    let values: Vec<f64> = binding.0.values().copied().collect();
    let program = CompiledExpr::compile(expr, |name| names.binary_search(&name).ok())?;
    program.eval(&values)
}
