//! Constant folding and algebraic identities. Not a CAS: the rewrite set
//! is small, never grows the tree, and never changes a value wherever the
//! original expression is defined.

use super::expr::{BinaryOp, Expr, UnaryOp};

pub fn simplify(expr: &Expr) -> Expr {
    match expr {
        Expr::Const(_) | Expr::Var(_) => expr.clone(),
        Expr::Unary(op, child) => simplify_unary(*op, simplify(child)),
        Expr::Binary(op, a, b) => simplify_binary(*op, simplify(a), simplify(b)),
    }
}

fn is_const(e: &Expr, v: f64) -> bool {
    matches!(e, Expr::Const(c) if *c == v)
}

fn simplify_unary(op: UnaryOp, child: Expr) -> Expr {
    if op == UnaryOp::Neg {
        if let Expr::Unary(UnaryOp::Neg, inner) = child {
            return *inner;
        }
    }
    if let Expr::Const(v) = child {
        let folded = op.apply(v);
        if folded.is_finite() {
            return Expr::Const(folded);
        }
    }
    Expr::unary(op, child)
}

fn simplify_binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
    if let (Expr::Const(x), Expr::Const(y)) = (&a, &b) {
        let folded = op.apply(*x, *y);
        if folded.is_finite() {
            return Expr::Const(folded);
        }
    }
    match op {
        BinaryOp::Add if is_const(&b, 0.0) => a,
        BinaryOp::Add if is_const(&a, 0.0) => b,
        BinaryOp::Sub if is_const(&b, 0.0) => a,
        BinaryOp::Mul if is_const(&b, 1.0) => a,
        BinaryOp::Mul if is_const(&a, 1.0) => b,
        BinaryOp::Mul if is_const(&a, 0.0) || is_const(&b, 0.0) => Expr::Const(0.0),
        BinaryOp::Div if is_const(&b, 1.0) => a,
        BinaryOp::Pow if is_const(&b, 1.0) => a,
        _ => Expr::binary(op, a, b),
    }
}
