use std::collections::BTreeSet;
use std::fmt;

/// Set of identifiers referenced by an expression.
pub type SymbolSet = BTreeSet<String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
        }
    }

    pub(crate) fn precedence(self) -> u8 {
        match self {
            BinaryOp::Add | BinaryOp::Sub => 1,
            BinaryOp::Mul | BinaryOp::Div => 2,
            BinaryOp::Pow => 4,
        }
    }

    pub(crate) fn is_right_assoc(self) -> bool {
        matches!(self, BinaryOp::Pow)
    }
}

/// Built-in functions. Angles are radians.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Arccos,
    Arcsin,
    Sqrt,
    Abs,
    Min,
    Max,
}

impl Func {
    pub const ALL: [Func; 9] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Arccos,
        Func::Arcsin,
        Func::Sqrt,
        Func::Abs,
        Func::Min,
        Func::Max,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Arccos => "arccos",
            Func::Arcsin => "arcsin",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

/// Name of the built-in constant π.
pub const PI_NAME: &str = "pi";

/// Returns true for names that cannot be used as symbols (`pi` and function names).
pub fn is_reserved(name: &str) -> bool {
    name == PI_NAME || Func::from_name(name).is_some()
}

/// Returns true when `name` matches `[A-Za-z_][A-Za-z0-9_]*`.
pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Formula syntax tree. Grouping parentheses are not represented: they only
/// steer parsing, and [`fmt::Display`] re-inserts the ones precedence needs.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    Symbol(String),
    Pi,
    Neg(Box<Expr>),
    Binary {
        op: BinaryOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Call {
        func: Func,
        args: Vec<Expr>,
    },
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Number(v)
    }

    pub fn sym(name: impl Into<String>) -> Expr {
        Expr::Symbol(name.into())
    }

    pub fn negate(inner: Expr) -> Expr {
        Expr::Neg(Box::new(inner))
    }

    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    pub fn call(func: Func, args: Vec<Expr>) -> Expr {
        Expr::Call { func, args }
    }

    /// The identifiers referenced by this expression (`pi` excluded).
    pub fn free_variables(&self) -> SymbolSet {
        let mut out = SymbolSet::new();
        self.visit_symbols(&mut |s| {
            out.insert(s.to_string());
        });
        out
    }

    /// Distinct symbols in left-to-right order of first occurrence.
    pub fn symbols_in_order(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        self.visit_symbols(&mut |s| {
            if !out.contains(&s) {
                out.push(s);
            }
        });
        out
    }

    fn visit_symbols<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Expr::Number(_) | Expr::Pi => {}
            Expr::Symbol(s) => f(s),
            Expr::Neg(inner) => inner.visit_symbols(f),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.visit_symbols(f);
                rhs.visit_symbols(f);
            }
            Expr::Call { args, .. } => args.iter().for_each(|a| a.visit_symbols(f)),
        }
    }

    pub(crate) fn precedence(&self) -> u8 {
        match self {
            Expr::Binary { op, .. } => op.precedence(),
            Expr::Neg(_) => 3,
            _ => 5,
        }
    }
}

/// Canonical rendering: single spaces around binary operators and only the
/// parentheses required to reproduce the same tree when parsed back.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Number(v) => write!(f, "{v}"),
            Expr::Symbol(s) => f.write_str(s),
            Expr::Pi => f.write_str(PI_NAME),
            Expr::Neg(inner) => {
                f.write_str("-")?;
                write_child(f, inner, inner.precedence() < 3)
            }
            Expr::Binary { op, lhs, rhs } => {
                let prec = op.precedence();
                let lhs_parens = if op.is_right_assoc() {
                    lhs.precedence() <= prec
                } else {
                    lhs.precedence() < prec
                };
                let rhs_parens = if op.is_right_assoc() {
                    // the exponent is parsed at unary level, so `2 ^ -x` needs none
                    rhs.precedence() < 3
                } else {
                    rhs.precedence() <= prec
                };
                write_child(f, lhs, lhs_parens)?;
                write!(f, " {} ", op.symbol())?;
                write_child(f, rhs, rhs_parens)
            }
            Expr::Call { func, args } => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

/// Canonical text of an expression.
pub fn format(expr: &Expr) -> String {
    expr.to_string()
}
