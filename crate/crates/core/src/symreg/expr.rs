use std::fmt;

/// One-argument operators. `Neg` is unary minus; the rest render as calls.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl UnaryOp {
    pub const FUNCTIONS: [UnaryOp; 7] = [
        UnaryOp::Sin,
        UnaryOp::Cos,
        UnaryOp::Tan,
        UnaryOp::Exp,
        UnaryOp::Log,
        UnaryOp::Sqrt,
        UnaryOp::Abs,
    ];

    pub fn from_name(name: &str) -> Option<Self> {
        Self::FUNCTIONS.into_iter().find(|op| op.name() == name)
    }

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Tan => "tan",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Abs => "abs",
        }
    }

    pub fn apply(self, v: f64) -> f64 {
        match self {
            UnaryOp::Neg => -v,
            UnaryOp::Sin => v.sin(),
            UnaryOp::Cos => v.cos(),
            UnaryOp::Tan => v.tan(),
            UnaryOp::Exp => v.exp(),
            UnaryOp::Log => v.ln(),
            UnaryOp::Sqrt => v.sqrt(),
            UnaryOp::Abs => v.abs(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 5] = [
        BinaryOp::Add,
        BinaryOp::Sub,
        BinaryOp::Mul,
        BinaryOp::Div,
        BinaryOp::Pow,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "**",
        }
    }

    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => a / b,
            BinaryOp::Pow => a.powf(b),
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinaryOp::Add | BinaryOp::Sub => ADDITIVE,
            BinaryOp::Mul | BinaryOp::Div => MULTIPLICATIVE,
            BinaryOp::Pow => POWER,
        }
    }
}

const ADDITIVE: u8 = 1;
const MULTIPLICATIVE: u8 = 2;
const UNARY: u8 = 3;
const POWER: u8 = 4;
const ATOM: u8 = 5;

/// Expression parse tree. Variables are 1-based (`x1`, `x2`, ...).
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn constant(v: f64) -> Self {
        Expr::Const(v)
    }

    pub fn var(index: usize) -> Self {
        Expr::Var(index)
    }

    pub fn unary(op: UnaryOp, child: Expr) -> Self {
        Expr::Unary(op, Box::new(child))
    }

    pub fn binary(op: BinaryOp, left: Expr, right: Expr) -> Self {
        Expr::Binary(op, Box::new(left), Box::new(right))
    }

    /// Node count of the parse tree; every constant, variable and operator
    /// counts once.
    pub fn size(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Unary(_, c) => 1 + c.size(),
            Expr::Binary(_, a, b) => 1 + a.size() + b.size(),
        }
    }

    /// Depth in nodes; a leaf has depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Unary(_, c) => 1 + c.depth(),
            Expr::Binary(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    /// Largest variable index used, 0 for a variable-free expression.
    pub fn max_var(&self) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(i) => *i,
            Expr::Unary(_, c) => c.max_var(),
            Expr::Binary(_, a, b) => a.max_var().max(b.max_var()),
        }
    }

    /// Subtree at preorder position `index`.
    pub fn node(&self, index: usize) -> Option<&Expr> {
        let mut remaining = index;
        self.node_inner(&mut remaining)
    }

    fn node_inner(&self, remaining: &mut usize) -> Option<&Expr> {
        if *remaining == 0 {
            return Some(self);
        }
        *remaining -= 1;
        match self {
            Expr::Const(_) | Expr::Var(_) => None,
            Expr::Unary(_, c) => c.node_inner(remaining),
            Expr::Binary(_, a, b) => a.node_inner(remaining).or_else(|| b.node_inner(remaining)),
        }
    }

    /// Replaces the subtree at preorder position `index`; returns whether
    /// the position existed.
    pub fn replace_node(&mut self, index: usize, replacement: Expr) -> bool {
        let mut remaining = index;
        let mut replacement = Some(replacement);
        self.replace_inner(&mut remaining, &mut replacement)
    }

    fn replace_inner(&mut self, remaining: &mut usize, replacement: &mut Option<Expr>) -> bool {
        if *remaining == 0 {
            *self = replacement.take().expect("replacement used once");
            return true;
        }
        *remaining -= 1;
        match self {
            Expr::Const(_) | Expr::Var(_) => false,
            Expr::Unary(_, c) => c.replace_inner(remaining, replacement),
            Expr::Binary(_, a, b) => {
                a.replace_inner(remaining, replacement) || b.replace_inner(remaining, replacement)
            }
        }
    }

    /// Rewrites every variable index through `f`.
    pub fn map_vars(&self, f: &mut impl FnMut(usize) -> usize) -> Expr {
        match self {
            Expr::Const(v) => Expr::Const(*v),
            Expr::Var(i) => Expr::Var(f(*i)),
            Expr::Unary(op, c) => Expr::unary(*op, c.map_vars(f)),
            Expr::Binary(op, a, b) => {
                let a = a.map_vars(f);
                let b = b.map_vars(f);
                Expr::binary(*op, a, b)
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Const(v) if v.is_sign_negative() => UNARY,
            Expr::Const(_) | Expr::Var(_) => ATOM,
            Expr::Unary(UnaryOp::Neg, _) => UNARY,
            Expr::Unary(_, _) => ATOM,
            Expr::Binary(op, _, _) => op.precedence(),
        }
    }
}

/// Shortest round-tripping decimal; exponent form for very large or very
/// small magnitudes.
pub fn format_constant(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-5..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, child: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({child})")
    } else {
        write!(f, "{child}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(v) => f.write_str(&format_constant(*v)),
            Expr::Var(i) => write!(f, "x{i}"),
            Expr::Unary(UnaryOp::Neg, c) => {
                f.write_str("-")?;
                // A bare positive literal after '-' would read back as a
                // negative constant.
                let literal = matches!(**c, Expr::Const(v) if !v.is_sign_negative());
                write_child(f, c, literal || c.precedence() < UNARY)
            }
            Expr::Unary(op, c) => write!(f, "{}({c})", op.name()),
            Expr::Binary(op, a, b) => {
                let p = op.precedence();
                let (left_parens, right_parens) = if *op == BinaryOp::Pow {
                    (a.precedence() <= POWER, b.precedence() < UNARY)
                } else {
                    (a.precedence() < p, b.precedence() <= p)
                };
                write_child(f, a, left_parens)?;
                match op {
                    BinaryOp::Add | BinaryOp::Sub => write!(f, " {} ", op.symbol())?,
                    _ => f.write_str(op.symbol())?,
                }
                write_child(f, b, right_parens)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_and_depth() {
        let e = Expr::binary(
            BinaryOp::Mul,
            Expr::unary(UnaryOp::Sin, Expr::binary(BinaryOp::Mul, Expr::Const(1.5), Expr::Var(1))),
            Expr::unary(UnaryOp::Cos, Expr::binary(BinaryOp::Mul, Expr::Const(0.5), Expr::Var(2))),
        );
        assert_eq!(e.size(), 9);
        assert_eq!(e.depth(), 4);
        assert_eq!(e.max_var(), 2);
        assert_eq!(e.to_string(), "sin(1.5*x1)*cos(0.5*x2)");
    }

    #[test]
    fn node_addressing_is_preorder() {
        let mut e = Expr::binary(BinaryOp::Add, Expr::Var(1), Expr::unary(UnaryOp::Sin, Expr::Var(2)));
        assert_eq!(e.node(0), Some(&e.clone()));
        assert_eq!(e.node(1), Some(&Expr::Var(1)));
        assert_eq!(e.node(3), Some(&Expr::Var(2)));
        assert_eq!(e.node(4), None);
        assert!(e.replace_node(2, Expr::Const(3.0)));
        assert_eq!(e.to_string(), "x1 + 3");
        assert!(!e.replace_node(9, Expr::Const(0.0)));
    }

    #[test]
    fn rendering_parenthesizes_only_where_needed() {
        let x = Expr::Var(1);
        let y = Expr::Var(2);
        let sum = Expr::binary(BinaryOp::Add, x.clone(), y.clone());
        assert_eq!(Expr::binary(BinaryOp::Mul, sum.clone(), y.clone()).to_string(), "(x1 + x2)*x2");
        assert_eq!(Expr::binary(BinaryOp::Sub, y.clone(), sum.clone()).to_string(), "x2 - (x1 + x2)");
        assert_eq!(
            Expr::binary(BinaryOp::Pow, Expr::Const(-2.0), x.clone()).to_string(),
            "(-2)**x1"
        );
        assert_eq!(
            Expr::binary(BinaryOp::Pow, x.clone(), Expr::binary(BinaryOp::Pow, y.clone(), x.clone()))
                .to_string(),
            "x1**x2**x1"
        );
        assert_eq!(Expr::unary(UnaryOp::Neg, Expr::Const(2.0)).to_string(), "-(2)");
        assert_eq!(
            Expr::unary(UnaryOp::Neg, Expr::binary(BinaryOp::Pow, x.clone(), Expr::Const(2.0)))
                .to_string(),
            "-x1**2"
        );
    }

    #[test]
    fn constants_render_compactly() {
        assert_eq!(format_constant(2.0), "2");
        assert_eq!(format_constant(0.1), "0.1");
        assert_eq!(format_constant(1e-7), "1e-7");
        assert_eq!(format_constant(2.5e20), "2.5e20");
        assert_eq!(format_constant(2.407303205449004), "2.407303205449004");
    }
}
