use super::NnError;

/// Row-major 64-bit matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NnError> {
        if data.len() != rows * cols {
            return Err(NnError::ShapeMismatch(format!(
                "{} values cannot fill a {rows}x{cols} tensor",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        Self {
            rows: 1,
            cols: data.len(),
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn check_same_shape(&self, other: &Tensor2, op: &str) -> Result<(), NnError> {
        if self.shape() != other.shape() {
            return Err(NnError::ShapeMismatch(format!(
                "{op}: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    /// `self (r x k) * other (k x c)`.
    pub fn matmul(&self, other: &Tensor2) -> Result<Tensor2, NnError> {
        if self.cols != other.rows {
            return Err(NnError::ShapeMismatch(format!(
                "matmul: {:?} x {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let mut out = Tensor2::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let a_row = self.row(r);
            let o_row = &mut out.data[r * other.cols..(r + 1) * other.cols];
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self^T (r x k)^T * other (r x c)`, accumulated into `acc (k x c)`.
    pub fn t_matmul_acc(&self, other: &Tensor2, acc: &mut Tensor2) -> Result<(), NnError> {
        if self.rows != other.rows || acc.shape() != (self.cols, other.cols) {
            return Err(NnError::ShapeMismatch(format!(
                "t_matmul: {:?}^T x {:?} into {:?}",
                self.shape(),
                other.shape(),
                acc.shape()
            )));
        }
        for r in 0..self.rows {
            let a_row = self.row(r);
            let b_row = other.row(r);
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let acc_row = &mut acc.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in acc_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(())
    }

    /// `self (r x c) * other (k x c)^T`.
    pub fn matmul_t(&self, other: &Tensor2) -> Result<Tensor2, NnError> {
        if self.cols != other.cols {
            return Err(NnError::ShapeMismatch(format!(
                "matmul_t: {:?} x {:?}^T",
                self.shape(),
                other.shape()
            )));
        }
        let mut out = Tensor2::zeros(self.rows, other.rows);
        for r in 0..self.rows {
            let a_row = self.row(r);
            for k in 0..other.rows {
                let b_row = other.row(k);
                out.data[r * other.rows + k] = a_row.iter().zip(b_row).map(|(a, b)| a * b).sum();
            }
        }
        Ok(out)
    }

    /// Adds a `1 x cols` row to every row.
    pub fn add_row_broadcast(&mut self, row: &Tensor2) -> Result<(), NnError> {
        if row.rows != 1 || row.cols != self.cols {
            return Err(NnError::ShapeMismatch(format!(
                "broadcast {:?} onto {:?}",
                row.shape(),
                self.shape()
            )));
        }
        for r in 0..self.rows {
            for (x, &b) in self.row_mut(r).iter_mut().zip(&row.data) {
                *x += b;
            }
        }
        Ok(())
    }

    /// Accumulates the column sums of `self` into the `1 x cols` tensor `acc`.
    pub fn col_sum_acc(&self, acc: &mut Tensor2) -> Result<(), NnError> {
        if acc.shape() != (1, self.cols) {
            return Err(NnError::ShapeMismatch(format!(
                "col_sum {:?} into {:?}",
                self.shape(),
                acc.shape()
            )));
        }
        for r in 0..self.rows {
            for (a, &x) in acc.data.iter_mut().zip(self.row(r)) {
                *a += x;
            }
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Tensor2) -> Result<(), NnError> {
        self.check_same_shape(other, "add_assign")?;
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn scale(&mut self, k: f64) {
        self.data.iter_mut().for_each(|x| *x *= k);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor2 {
        Tensor2 {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    /// Stacks equally wide tensors vertically.
    pub fn vstack(parts: &[Tensor2]) -> Result<Tensor2, NnError> {
        let cols = parts.first().map_or(0, |p| p.cols);
        if parts.iter().any(|p| p.cols != cols) {
            return Err(NnError::ShapeMismatch("vstack: ragged widths".into()));
        }
        let rows = parts.iter().map(|p| p.rows).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Ok(Tensor2 { rows, cols, data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Tensor2, b: &Tensor2) -> Tensor2 {
        let mut out = Tensor2::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    #[test]
    fn products_agree_with_naive_loops() {
        let a = Tensor2::from_fn(3, 4, |r, c| (r as f64 + 1.0) * 0.5 - c as f64 * 0.3);
        let b = Tensor2::from_fn(4, 2, |r, c| (r * 2 + c) as f64 * 0.1 - 0.2);
        let ab = a.matmul(&b).unwrap();
        let expect = naive(&a, &b);
        for (x, y) in ab.data().iter().zip(expect.data()) {
            assert!((x - y).abs() < 1e-12);
        }

        let bt = Tensor2::from_fn(2, 4, |r, c| b.get(c, r));
        let abt = a.matmul_t(&bt).unwrap();
        assert_eq!(abt.shape(), (3, 2));
        for (x, y) in abt.data().iter().zip(expect.data()) {
            assert!((x - y).abs() < 1e-12);
        }

        let at = Tensor2::from_fn(4, 3, |r, c| a.get(c, r));
        let mut acc = Tensor2::zeros(4, 2);
        let c = Tensor2::from_fn(3, 2, |r, c| (r + c) as f64);
        a.t_matmul_acc(&c, &mut acc).unwrap();
        let expect = naive(&at, &c);
        for (x, y) in acc.data().iter().zip(expect.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_errors() {
        let a = Tensor2::zeros(2, 3);
        assert!(a.matmul(&Tensor2::zeros(2, 3)).is_err());
        assert!(Tensor2::from_vec(2, 2, vec![1.0; 3]).is_err());
        let mut b = Tensor2::zeros(2, 3);
        assert!(b.add_row_broadcast(&Tensor2::zeros(1, 2)).is_err());
    }
}
