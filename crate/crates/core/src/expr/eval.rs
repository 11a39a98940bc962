use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use super::ast::{BinaryOp, Expr, Func};

/// Evaluation failures. Every variant names the offending subexpression.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound symbol '{0}'")]
    UnboundSymbol(String),
    #[error("division by zero in '{context}'")]
    DivisionByZero { context: String },
    #[error("{function} undefined for argument {argument} in '{context}'")]
    Domain {
        function: String,
        argument: f64,
        context: String,
    },
    #[error("non-finite result in '{context}'")]
    NonFinite { context: String },
}

/// Source of symbol values during evaluation.
pub trait Bindings {
    fn lookup(&self, name: &str) -> Option<f64>;
}

impl Bindings for HashMap<String, f64> {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl Bindings for BTreeMap<String, f64> {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl<F: Fn(&str) -> Option<f64>> Bindings for F {
    fn lookup(&self, name: &str) -> Option<f64> {
        self(name)
    }
}

/// Evaluate `expr` against `env`.
///
/// All symbols are checked for a binding before any arithmetic happens, so an
/// incomplete environment always reports [`EvalError::UnboundSymbol`] (the first
/// missing symbol, left to right) regardless of what the arithmetic would do.
pub fn evaluate<B: Bindings + ?Sized>(expr: &Expr, env: &B) -> Result<f64, EvalError> {
    if let Some(missing) = expr
        .symbols_in_order()
        .into_iter()
        .find(|s| env.lookup(s).is_none())
    {
        return Err(EvalError::UnboundSymbol(missing.to_string()));
    }
    eval_node(expr, env)
}

fn eval_node<B: Bindings + ?Sized>(expr: &Expr, env: &B) -> Result<f64, EvalError> {
    let v = match expr {
        Expr::Number(v) => *v,
        Expr::Pi => std::f64::consts::PI,
        Expr::Symbol(s) => env
            .lookup(s)
            .ok_or_else(|| EvalError::UnboundSymbol(s.clone()))?,
        Expr::Neg(inner) => -eval_node(inner, env)?,
        Expr::Binary { op, lhs, rhs } => {
            let a = eval_node(lhs, env)?;
            let b = eval_node(rhs, env)?;
            match op {
                BinaryOp::Add => a + b,
                BinaryOp::Sub => a - b,
                BinaryOp::Mul => a * b,
                BinaryOp::Div => {
                    if b == 0.0 {
                        return Err(EvalError::DivisionByZero {
                            context: expr.to_string(),
                        });
                    }
                    a / b
                }
                BinaryOp::Pow => {
                    if a == 0.0 && b < 0.0 {
                        return Err(EvalError::DivisionByZero {
                            context: expr.to_string(),
                        });
                    }
                    let r = a.powf(b);
                    if r.is_nan() {
                        return Err(EvalError::Domain {
                            function: "^".into(),
                            argument: a,
                            context: expr.to_string(),
                        });
                    }
                    r
                }
            }
        }
        Expr::Call { func, args } => {
            let x = eval_node(&args[0], env)?;
            let domain = |ok: bool| {
                if ok {
                    Ok(())
                } else {
                    Err(EvalError::Domain {
                        function: func.name().into(),
                        argument: x,
                        context: expr.to_string(),
                    })
                }
            };
            match func {
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Tan => x.tan(),
                Func::Arccos => {
                    domain((-1.0..=1.0).contains(&x))?;
                    x.acos()
                }
                Func::Arcsin => {
                    domain((-1.0..=1.0).contains(&x))?;
                    x.asin()
                }
                Func::Sqrt => {
                    domain(x >= 0.0)?;
                    x.sqrt()
                }
                Func::Abs => x.abs(),
                Func::Min => x.min(eval_node(&args[1], env)?),
                Func::Max => x.max(eval_node(&args[1], env)?),
            }
        }
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite {
            context: expr.to_string(),
        })
    }
}
