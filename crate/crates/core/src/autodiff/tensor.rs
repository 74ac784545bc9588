//! Dense row-major 2-D tensors. Vectors are column tensors (k x 1) or row
//! tensors (1 x k) as the operation requires.

use crate::error::{Error, Result};

/// Element type of tensors: f32 for training, f64 for gradient checking.
pub trait Scalar:
    num_traits::Float
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::fmt::Debug
    + std::fmt::Display
    + Default
    + Copy
    + 'static
{
    fn from_f64(x: f64) -> Self;
    fn into_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(x: f64) -> f32 {
        x as f32
    }
    fn into_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> f64 {
        x
    }
    fn into_f64(self) -> f64 {
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    pub fn new(rows: usize, cols: usize, data: Vec<F>) -> Result<Tensor<F>> {
        if data.len() != rows * cols {
            return Err(Error::Validation(format!(
                "tensor data length {} does not match shape {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Tensor<F> {
        Tensor { rows, cols, data: vec![F::zero(); rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> F) -> Tensor<F> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Tensor { rows, cols, data }
    }

    pub fn scalar(x: F) -> Tensor<F> {
        Tensor { rows: 1, cols: 1, data: vec![x] }
    }

    pub fn column(values: Vec<F>) -> Tensor<F> {
        let rows = values.len();
        Tensor { rows, cols: 1, data: values }
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> F {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: F) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [F] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn item(&self) -> F {
        debug_assert_eq!(self.len(), 1);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn add_assign(&mut self, other: &Tensor<F>) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += *b;
        }
    }

    pub fn scale_assign(&mut self, c: F) {
        for a in self.data.iter_mut() {
            *a *= c;
        }
    }

    pub fn fill(&mut self, v: F) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// `self (m x k) * b (k x n)`.
    pub fn matmul(&self, b: &Tensor<F>) -> Tensor<F> {
        assert_eq!(self.cols, b.rows, "matmul inner dimension mismatch");
        let (m, k, n) = (self.rows, self.cols, b.cols);
        let mut out = Tensor::zeros(m, n);
        for i in 0..m {
            let arow = &self.data[i * k..(i + 1) * k];
            let orow = &mut out.data[i * n..(i + 1) * n];
            for (p, &a) in arow.iter().enumerate() {
                if a == F::zero() {
                    continue;
                }
                let brow = &b.data[p * n..(p + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                    *o += a * bv;
                }
            }
        }
        out
    }

    /// `self (m x k) * b^T` where `b` is `n x k`.
    pub fn matmul_nt(&self, b: &Tensor<F>) -> Tensor<F> {
        assert_eq!(self.cols, b.cols, "matmul_nt inner dimension mismatch");
        let (m, k, n) = (self.rows, self.cols, b.rows);
        let mut out = Tensor::zeros(m, n);
        for i in 0..m {
            let arow = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                let brow = &b.data[j * k..(j + 1) * k];
                let mut acc = F::zero();
                for (&a, &bv) in arow.iter().zip(brow.iter()) {
                    acc = acc + a * bv;
                }
                out.data[i * n + j] = acc;
            }
        }
        out
    }

    /// `self^T * b` where `self` is `m x k` and `b` is `m x n`.
    pub fn matmul_tn(&self, b: &Tensor<F>) -> Tensor<F> {
        assert_eq!(self.rows, b.rows, "matmul_tn inner dimension mismatch");
        let (m, k, n) = (self.rows, self.cols, b.cols);
        let mut out = Tensor::zeros(k, n);
        for p in 0..m {
            let arow = &self.data[p * k..(p + 1) * k];
            let brow = &b.data[p * n..(p + 1) * n];
            for (i, &a) in arow.iter().enumerate() {
                if a == F::zero() {
                    continue;
                }
                let orow = &mut out.data[i * n..(i + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                    *o += a * bv;
                }
            }
        }
        out
    }

    /// Convert element type (f32 <-> f64).
    pub fn cast<G: Scalar>(&self) -> Tensor<G> {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| G::from_f64(x.into_f64())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_variants_agree() {
        let a = Tensor::new(2, 3, vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Tensor::new(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let c = a.matmul(&b);
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);

        // a * b == a * (b^T)^T via matmul_nt
        let bt = Tensor::from_fn(2, 3, |i, j| b.get(j, i));
        let c2 = a.matmul_nt(&bt);
        assert_eq!(c.data(), c2.data());

        // a^T * a via matmul_tn
        let ata = a.matmul_tn(&a);
        let at = Tensor::from_fn(3, 2, |i, j| a.get(j, i));
        let ata2 = at.matmul(&a);
        assert_eq!(ata.data(), ata2.data());
    }

    #[test]
    fn new_checks_length() {
        assert!(Tensor::new(2, 2, vec![1.0f64; 3]).is_err());
    }
}
