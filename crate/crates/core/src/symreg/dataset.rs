//! Regression datasets: CSV loading, synthetic generation and the
//! train/test split.

use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use super::eval::Matrix;
use super::SymregError;
use crate::rng::RngStream;

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionDataset {
    x: Matrix,
    y: Vec<f64>,
    train: Vec<usize>,
    test: Vec<usize>,
}

fn invalid(reason: impl Into<String>) -> SymregError {
    SymregError::Dataset(reason.into())
}

impl RegressionDataset {
    /// All rows start in the training split.
    pub fn new(x: Matrix, y: Vec<f64>) -> Result<Self, SymregError> {
        if x.rows() != y.len() {
            return Err(invalid(format!("{} rows but {} targets", x.rows(), y.len())));
        }
        if y.len() < 2 {
            return Err(invalid("need at least two samples"));
        }
        let finite = y.iter().all(|v| v.is_finite())
            && (0..x.cols()).all(|j| x.column(j).iter().all(|v| v.is_finite()));
        if !finite {
            return Err(invalid("non-finite entry"));
        }
        Ok(Self {
            train: (0..y.len()).collect(),
            test: Vec::new(),
            x,
            y,
        })
    }

    /// Reads a CSV whose header is `x1,...,xd,y`.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self, SymregError> {
        let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = csv.headers()?.clone();
        let d = header.len().checked_sub(1).filter(|&d| d > 0).ok_or_else(|| {
            invalid("header must list x1..xd followed by y")
        })?;
        for (j, name) in header.iter().enumerate() {
            let want = if j == d { "y".to_string() } else { format!("x{}", j + 1) };
            if name != want {
                return Err(invalid(format!("column {} is {name:?}, expected {want:?}", j + 1)));
            }
        }
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for (i, record) in csv.records().enumerate() {
            let record = record?;
            let values: Vec<f64> = record
                .iter()
                .map(|v| v.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| invalid(format!("data row {}: {e}", i + 1)))?;
            if values.len() != d + 1 {
                return Err(invalid(format!("data row {}: wrong column count", i + 1)));
            }
            y.push(values[d]);
            rows.push(values[..d].to_vec());
        }
        let x = Matrix::from_rows(&rows).map_err(|e| invalid(e.to_string()))?;
        Self::new(x, y)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self, SymregError> {
        let file = std::fs::File::open(path)
            .map_err(|e| invalid(format!("cannot open {}: {e}", path.display())))?;
        Self::from_csv_reader(std::io::BufReader::new(file))
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), SymregError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.var_count()).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.x.row(i).iter().map(f64::to_string).collect();
            row.push(self.y[i].to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// `n` samples with every variable uniform on `[lo, hi]` and
    /// `y = f(row)`.
    pub fn synthetic(
        n: usize,
        var_count: usize,
        (lo, hi): (f64, f64),
        f: impl Fn(&[f64]) -> f64,
        rng: &mut RngStream,
    ) -> Result<Self, SymregError> {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..var_count).map(|_| rng.gen_range(lo..=hi)).collect())
            .collect();
        let y = rows.iter().map(|r| f(r)).collect();
        let x = Matrix::from_rows(&rows).map_err(|e| invalid(e.to_string()))?;
        Self::new(x, y)
    }

    /// Shuffles the rows and puts `test_fraction` of them in the test split.
    pub fn split(mut self, test_fraction: f64, rng: &mut RngStream) -> Result<Self, SymregError> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(invalid("test fraction must be in [0, 1)"));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(rng);
        let n_test = (self.len() as f64 * test_fraction).round() as usize;
        if self.len() - n_test < 2 {
            return Err(invalid("training split would have fewer than two rows"));
        }
        self.test = idx[..n_test].to_vec();
        self.train = idx[n_test..].to_vec();
        self.test.sort_unstable();
        self.train.sort_unstable();
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn var_count(&self) -> usize {
        self.x.cols()
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn train_indices(&self) -> &[usize] {
        &self.train
    }

    pub fn test_indices(&self) -> &[usize] {
        &self.test
    }

    pub fn train(&self) -> (Matrix, Vec<f64>) {
        self.part(&self.train)
    }

    pub fn test(&self) -> (Matrix, Vec<f64>) {
        self.part(&self.test)
    }

    fn part(&self, idx: &[usize]) -> (Matrix, Vec<f64>) {
        (self.x.select_rows(idx), idx.iter().map(|&i| self.y[i]).collect())
    }
}
