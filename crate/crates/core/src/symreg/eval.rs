//! Vectorized evaluation and the R² score.

use thiserror::Error;

use super::expr::Expr;

/// Column-major sample matrix: `columns[j][i]` is variable `x(j+1)` of
/// sample `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    columns: Vec<Vec<f64>>,
    rows: usize,
}

impl Matrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, EvalError> {
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(EvalError::Ragged);
        }
        let columns = (0..width).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        Ok(Self {
            columns,
            rows: rows.len(),
        })
    }

    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self, EvalError> {
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(EvalError::Ragged);
        }
        Ok(Self { columns, rows })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    /// Rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        Matrix {
            columns: self
                .columns
                .iter()
                .map(|c| indices.iter().map(|&i| c[i]).collect())
                .collect(),
            rows: indices.len(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("expression uses x{0} but the data has fewer columns")]
    UnknownVariable(usize),
    #[error("non-finite intermediate value")]
    NonFinite,
    #[error("rows have different lengths")]
    Ragged,
    #[error("length mismatch: {0} predictions for {1} targets")]
    LengthMismatch(usize, usize),
    #[error("need at least two samples")]
    TooFewSamples,
    #[error("targets have zero variance")]
    ZeroVariance,
}

/// Evaluates `expr` on every row. Any non-finite intermediate (a division
/// by zero, a log of a non-positive number, an overflow) invalidates the
/// whole expression.
pub fn evaluate(expr: &Expr, x: &Matrix) -> Result<Vec<f64>, EvalError> {
    let out = match expr {
        Expr::Const(v) => vec![*v; x.rows()],
        Expr::Var(i) => {
            if *i == 0 || *i > x.cols() {
                return Err(EvalError::UnknownVariable(*i));
            }
            x.column(i - 1).to_vec()
        }
        Expr::Unary(op, c) => {
            let mut v = evaluate(c, x)?;
            for value in &mut v {
                *value = op.apply(*value);
            }
            v
        }
        Expr::Binary(op, a, b) => {
            let mut left = evaluate(a, x)?;
            let right = evaluate(b, x)?;
            for (l, r) in left.iter_mut().zip(&right) {
                *l = op.apply(*l, *r);
            }
            left
        }
    };
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(EvalError::NonFinite)
    }
}

/// Coefficient of determination, `1 - SS_res / SS_tot`.
///
/// Summation runs in index order so the result does not depend on how the
/// predictions were computed.
pub fn r2(y: &[f64], y_hat: &[f64]) -> Result<f64, EvalError> {
    if y.len() != y_hat.len() {
        return Err(EvalError::LengthMismatch(y_hat.len(), y.len()));
    }
    if y.len() < 2 {
        return Err(EvalError::TooFewSamples);
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(EvalError::ZeroVariance);
    }
    let ss_res: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum();
    let score = 1.0 - ss_res / ss_tot;
    if score.is_finite() {
        Ok(score)
    } else {
        Err(EvalError::NonFinite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symreg::parse_expression;

    fn eval(s: &str, rows: &[Vec<f64>]) -> Result<Vec<f64>, EvalError> {
        evaluate(&parse_expression(s).unwrap(), &Matrix::from_rows(rows).unwrap())
    }

    #[test]
    fn evaluation_examples() {
        assert_eq!(eval("x1+x2", &[vec![1.0, 2.0]]).unwrap(), [3.0]);
        assert_eq!(eval("sqrt(x1)", &[vec![4.0]]).unwrap(), [2.0]);
        assert_eq!(eval("1/x1", &[vec![1.0], vec![0.0]]), Err(EvalError::NonFinite));
        assert_eq!(eval("log(x1)", &[vec![-1.0]]), Err(EvalError::NonFinite));
        assert_eq!(eval("sqrt(x1)", &[vec![-1.0]]), Err(EvalError::NonFinite));
        assert_eq!(eval("exp(x1)", &[vec![1000.0]]), Err(EvalError::NonFinite));
        assert_eq!(eval("x1**0.5", &[vec![-4.0]]), Err(EvalError::NonFinite));
        assert_eq!(eval("x3", &[vec![1.0, 2.0]]), Err(EvalError::UnknownVariable(3)));
    }

    #[test]
    fn intermediate_overflow_invalidates_even_if_recovered() {
        // exp(1000) overflows even though 0*inf would be NaN anyway; 1/exp(...) would be 0.
        assert_eq!(eval("1/exp(x1)", &[vec![1000.0]]), Err(EvalError::NonFinite));
    }

    #[test]
    fn r2_examples() {
        let y = [0.0, 1.0, 2.0];
        assert_eq!(r2(&y, &y).unwrap(), 1.0);
        assert_eq!(r2(&y, &[1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(r2(&y, &[0.0, 0.0, 0.0]).unwrap(), -1.5);
        assert_eq!(r2(&[1.0, 1.0], &[1.0, 1.0]), Err(EvalError::ZeroVariance));
        assert_eq!(r2(&[1.0], &[1.0]), Err(EvalError::TooFewSamples));
        assert!(r2(&y, &[1.0]).is_err());
    }

    #[test]
    fn matrix_shapes() {
        assert!(Matrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(m.select_rows(&[2, 0]).row(0), [5.0, 6.0]);
        assert_eq!(m.row(1), [3.0, 4.0]);
    }
}
