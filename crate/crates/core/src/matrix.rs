/// Dense row-major matrix of activation values, one row per input.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    n_cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn empty(n_cols: usize) -> Self {
        Matrix {
            n_cols,
            data: Vec::new(),
        }
    }

    /// Builds a matrix from rows that all have length `n_cols`.
    ///
    /// Panics if a row has the wrong length.
    pub fn from_rows<R: AsRef<[f64]>>(n_cols: usize, rows: impl IntoIterator<Item = R>) -> Self {
        let mut m = Matrix::empty(n_cols);
        for row in rows {
            m.push_row(row.as_ref());
        }
        m
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.n_cols, "row length must equal column count");
        self.data.extend_from_slice(row);
    }

    pub fn n_rows(&self) -> usize {
        self.data.len().checked_div(self.n_cols).unwrap_or(0)
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n_cols + col]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        // chunks_exact on a zero width would panic
        let width = self.n_cols.max(1);
        self.data.chunks_exact(width)
    }
}
