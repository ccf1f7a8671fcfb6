use std::collections::HashMap;

use thiserror::Error;

use super::{BinaryOp, Expr, Function, UnaryOp};
use crate::model::{DataPacket, Value};

/// Result of evaluating an expression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scalar {
    Number(f64),
    Bool(bool),
    Missing,
}

impl Scalar {
    /// Booleans become 1/0 when they leave the expression world.
    pub fn to_value(self) -> Value {
        match self {
            Scalar::Number(x) => Value::number(x),
            Scalar::Bool(b) => Value::Number(if b { 1.0 } else { 0.0 }),
            Scalar::Missing => Value::Missing,
        }
    }

    /// True for `Bool(true)` and non-zero numbers.
    pub fn is_truthy(self) -> bool {
        match self {
            Scalar::Bool(b) => b,
            Scalar::Number(x) => x != 0.0,
            Scalar::Missing => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("type error: {0}")]
    Type(String),
    #[error("division by zero")]
    DivideByZero,
    #[error("unknown identifier {0:?}")]
    Unbound(String),
    #[error("result is not finite")]
    NonFinite,
}

/// Variable lookup for evaluation.
pub trait Env {
    fn lookup(&self, name: &str) -> Option<Result<Scalar, EvalError>>;
}

pub(crate) fn value_to_scalar(name: &str, v: &Value) -> Result<Scalar, EvalError> {
    match v {
        Value::Number(x) => Ok(Scalar::Number(*x)),
        Value::Missing => Ok(Scalar::Missing),
        Value::Text(_) | Value::Timestamp(_) => Err(EvalError::Type(format!("{name} is text"))),
    }
}

impl Env for HashMap<String, Value> {
    fn lookup(&self, name: &str) -> Option<Result<Scalar, EvalError>> {
        self.get(name).map(|v| value_to_scalar(name, v))
    }
}

impl Env for HashMap<&str, Scalar> {
    fn lookup(&self, name: &str) -> Option<Result<Scalar, EvalError>> {
        self.get(name).copied().map(Ok)
    }
}

impl Env for DataPacket {
    fn lookup(&self, name: &str) -> Option<Result<Scalar, EvalError>> {
        self.get(name).map(|v| value_to_scalar(name, v))
    }
}

/// Adapts a closure into an [`Env`].
pub struct LookupFn<F>(pub F);

impl<F> Env for LookupFn<F>
where
    F: Fn(&str) -> Option<Scalar>,
{
    fn lookup(&self, name: &str) -> Option<Result<Scalar, EvalError>> {
        (self.0)(name).map(Ok)
    }
}

/// Evaluates with strict Missing propagation; `and`/`or` short-circuit.
pub fn evaluate(expr: &Expr, env: &impl Env) -> Result<Scalar, EvalError> {
    let out = eval(expr, env)?;
    match out {
        Scalar::Number(x) if !x.is_finite() => Err(EvalError::NonFinite),
        other => Ok(other),
    }
}

fn eval(expr: &Expr, env: &impl Env) -> Result<Scalar, EvalError> {
    match expr {
        Expr::Number(x) => Ok(Scalar::Number(*x)),
        Expr::Ident(name) => env.lookup(name).unwrap_or_else(|| Err(EvalError::Unbound(name.clone()))),
        Expr::Unary(op, inner) => {
            let v = eval(inner, env)?;
            match (op, v) {
                (_, Scalar::Missing) => Ok(Scalar::Missing),
                (UnaryOp::Neg, Scalar::Number(x)) => Ok(Scalar::Number(-x)),
                (UnaryOp::Not, Scalar::Bool(b)) => Ok(Scalar::Bool(!b)),
                (UnaryOp::Neg, Scalar::Bool(_)) => Err(EvalError::Type("cannot negate a boolean".into())),
                (UnaryOp::Not, Scalar::Number(_)) => Err(EvalError::Type("'not' needs a boolean".into())),
            }
        }
        Expr::Binary(BinaryOp::And, l, r) => logical(l, r, env, false),
        Expr::Binary(BinaryOp::Or, l, r) => logical(l, r, env, true),
        Expr::Binary(op, l, r) => {
            let lhs = eval(l, env)?;
            let rhs = eval(r, env)?;
            binary(*op, lhs, rhs)
        }
        Expr::Call(func, args) => {
            let mut acc: Option<f64> = None;
            let mut missing = false;
            for arg in args {
                match eval(arg, env)? {
                    Scalar::Number(x) => {
                        acc = Some(match (func, acc) {
                            (_, None) => x,
                            (Function::Max, Some(a)) => a.max(x),
                            (Function::Min, Some(a)) => a.min(x),
                            (Function::Abs, Some(_)) => unreachable!("abs takes one argument"),
                        })
                    }
                    Scalar::Missing => missing = true,
                    Scalar::Bool(_) => return Err(EvalError::Type(format!("{func}() needs numbers"))),
                }
            }
            if missing {
                return Ok(Scalar::Missing);
            }
            let x = acc.expect("arity checked at parse time");
            Ok(Scalar::Number(if *func == Function::Abs { x.abs() } else { x }))
        }
    }
}

/// `and` (`decisive == false`) and `or` (`decisive == true`). A left operand equal to
/// `decisive` settles the result without evaluating the right one.
fn logical(l: &Expr, r: &Expr, env: &impl Env, decisive: bool) -> Result<Scalar, EvalError> {
    let name = if decisive { "or" } else { "and" };
    let check = |v: Scalar| match v {
        Scalar::Number(_) => Err(EvalError::Type(format!("'{name}' needs boolean operands"))),
        other => Ok(other),
    };
    let lhs = check(eval(l, env)?)?;
    if lhs == Scalar::Bool(decisive) {
        return Ok(lhs);
    }
    let rhs = check(eval(r, env)?)?;
    Ok(match (lhs, rhs) {
        (_, Scalar::Bool(b)) if b == decisive => Scalar::Bool(decisive),
        (Scalar::Missing, _) | (_, Scalar::Missing) => Scalar::Missing,
        _ => Scalar::Bool(!decisive),
    })
}

fn binary(op: BinaryOp, lhs: Scalar, rhs: Scalar) -> Result<Scalar, EvalError> {
    use Scalar::*;
    match (lhs, rhs) {
        (Number(a), Number(b)) => Ok(match op {
            BinaryOp::Add => Number(a + b),
            BinaryOp::Sub => Number(a - b),
            BinaryOp::Mul => Number(a * b),
            BinaryOp::Div if b == 0.0 => return Err(EvalError::DivideByZero),
            BinaryOp::Div => Number(a / b),
            BinaryOp::Lt => Bool(a < b),
            BinaryOp::Le => Bool(a <= b),
            BinaryOp::Gt => Bool(a > b),
            BinaryOp::Ge => Bool(a >= b),
            BinaryOp::Eq => Bool(a == b),
            BinaryOp::Ne => Bool(a != b),
            BinaryOp::And | BinaryOp::Or => unreachable!("handled by logical()"),
        }),
        (Bool(a), Bool(b)) => match op {
            BinaryOp::Eq => Ok(Bool(a == b)),
            BinaryOp::Ne => Ok(Bool(a != b)),
            _ => Err(EvalError::Type(format!("'{}' needs numbers", op.symbol()))),
        },
        (Missing, Bool(_)) | (Bool(_), Missing) if !matches!(op, BinaryOp::Eq | BinaryOp::Ne) => {
            Err(EvalError::Type(format!("'{}' needs numbers", op.symbol())))
        }
        (Missing, _) | (_, Missing) => Ok(Missing),
        _ => Err(EvalError::Type(format!("'{}' mixes booleans and numbers", op.symbol()))),
    }
}
