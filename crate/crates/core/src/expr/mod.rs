//! The formula language used by model and indicator services.
//!
//! Formulas are plain arithmetic over identifiers: `+ - * / ^`, unary minus,
//! the constant `pi` and the functions `sin cos tan arccos arcsin sqrt abs`
//! (one argument) and `min max` (two arguments). Numbers are `f64`,
//! identifiers are case-sensitive, and angles are radians.
//!
//! ```
//! use decisio_core::expr::{evaluate, parse};
//! use std::collections::HashMap;
//!
//! let cpi = parse("EV / AC").unwrap();
//! let env: HashMap<String, f64> = [("EV".into(), 400.0), ("AC".into(), 500.0)].into();
//! assert_eq!(evaluate(&cpi, &env).unwrap(), 0.8);
//! assert_eq!(cpi.to_string(), "EV / AC");
//! ```

mod ast;
mod eval;
mod parser;

pub use ast::{format, is_identifier, is_reserved, BinaryOp, Expr, Func, SymbolSet, PI_NAME};
pub use eval::{evaluate, Bindings, EvalError};
pub use parser::{parse, ParseError};

/// Symbols referenced by `expr`, excluding `pi`.
pub fn free_variables(expr: &Expr) -> SymbolSet {
    expr.free_variables()
}

impl std::str::FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

// Expressions travel as their canonical source text.
impl serde::Serialize for Expr {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Expr {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse(&text).map_err(serde::de::Error::custom)
    }
}
