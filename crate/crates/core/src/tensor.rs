//! Dense row-major tensors.
//!
//! [`Tensor`] is the universal value type: inputs, activations, parameters,
//! and gradients are all dense n-dimensional arrays of one scalar type. The
//! op set is deliberately small — exactly what the layers and protocols need,
//! with no broadcasting beyond row-vector addition.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Dense n-dimensional array, row-major.
///
/// Invariant: `shape.iter().product() == data.len()`. Tensors are plain
/// values; once built they are only mutated through explicit `*_mut`
/// accessors, so sharing `&Tensor` across threads is safe.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    /// Builds a tensor, checking that `data` fills `shape` exactly.
    pub fn new(shape: &[usize], data: Vec<S>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(Error::dimension(format!(
                "shape {:?} holds {} elements but {} were provided",
                shape,
                expect,
                data.len()
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![S::zero(); n] }
    }

    pub fn full(shape: &[usize], value: S) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; n] }
    }

    /// 1-D tensor from a plain vector.
    pub fn from_vec(data: Vec<S>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    /// 2-D tensor from rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::dimension("rows of unequal length"));
        }
        let data = rows.iter().flatten().copied().collect();
        Tensor::new(&[rows.len(), cols], data)
    }

    pub fn zeros_like(&self) -> Self {
        Tensor::zeros(&self.shape)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    /// Same data, new shape; element count must match.
    pub fn reshaped(mut self, shape: &[usize]) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if expect != self.data.len() {
            return Err(Error::dimension(format!(
                "cannot reshape {} elements into {:?}",
                self.data.len(),
                shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Rows and columns of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[r, c] => Ok((r, c)),
            other => Err(Error::dimension(format!("expected rank-2 tensor, got {other:?}"))),
        }
    }

    pub fn at2(&self, i: usize, j: usize) -> S {
        self.data[i * self.shape[1] + j]
    }

    pub fn at2_mut(&mut self, i: usize, j: usize) -> &mut S {
        &mut self.data[i * self.shape[1] + j]
    }

    /// Row `i` of a rank-2 tensor as a slice.
    pub fn row(&self, i: usize) -> &[S] {
        let c = self.shape[self.shape.len() - 1];
        &self.data[i * c..(i + 1) * c]
    }

    /// Copies row `i` of a rank-2 tensor into a `[1, cols]` tensor.
    pub fn row_tensor(&self, i: usize) -> Tensor<S> {
        let c = self.shape[1];
        Tensor { shape: vec![1, c], data: self.row(i).to_vec() }
    }

    /// Gathers rows by index into a new `[idx.len(), cols]` tensor.
    pub fn gather_rows(&self, idx: &[usize]) -> Result<Tensor<S>> {
        let (_, c) = self.dims2()?;
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Tensor::new(&[idx.len(), c], data)
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        let (m, k) = self.dims2()?;
        let (k2, n) = rhs.dims2()?;
        if k != k2 {
            return Err(Error::dimension(format!(
                "matmul inner dimensions disagree: {m}x{k} by {k2}x{n}"
            )));
        }
        let mut out = vec![S::zero(); m * n];
        for i in 0..m {
            let arow = &self.data[i * k..(i + 1) * k];
            let orow = &mut out[i * n..(i + 1) * n];
            for (p, &a) in arow.iter().enumerate() {
                let brow = &rhs.data[p * n..(p + 1) * n];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o = *o + a * b;
                }
            }
        }
        Tensor::new(&[m, n], out)
    }

    /// `self^T · rhs` without materializing the transpose.
    pub fn matmul_tn(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        let (n0, m) = self.dims2()?;
        let (n1, k) = rhs.dims2()?;
        if n0 != n1 {
            return Err(Error::dimension(format!(
                "matmul_tn outer dimensions disagree: {n0} vs {n1}"
            )));
        }
        let mut out = vec![S::zero(); m * k];
        for r in 0..n0 {
            let arow = &self.data[r * m..(r + 1) * m];
            let brow = &rhs.data[r * k..(r + 1) * k];
            for (i, &a) in arow.iter().enumerate() {
                let orow = &mut out[i * k..(i + 1) * k];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o = *o + a * b;
                }
            }
        }
        Tensor::new(&[m, k], out)
    }

    /// `self · rhs^T` without materializing the transpose.
    pub fn matmul_nt(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        let (m, k) = self.dims2()?;
        let (n, k2) = rhs.dims2()?;
        if k != k2 {
            return Err(Error::dimension(format!(
                "matmul_nt inner dimensions disagree: {k} vs {k2}"
            )));
        }
        let mut out = vec![S::zero(); m * n];
        for i in 0..m {
            let arow = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                let brow = &rhs.data[j * k..(j + 1) * k];
                let mut acc = S::zero();
                for (&a, &b) in arow.iter().zip(brow) {
                    acc = acc + a * b;
                }
                out[i * n + j] = acc;
            }
        }
        Tensor::new(&[m, n], out)
    }

    pub fn transposed(&self) -> Result<Tensor<S>> {
        let (m, n) = self.dims2()?;
        let mut out = vec![S::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Tensor::new(&[n, m], out)
    }

    fn zip_check(&self, rhs: &Tensor<S>, op: &str) -> Result<()> {
        if self.shape != rhs.shape {
            return Err(Error::dimension(format!(
                "{op} on mismatched shapes {:?} vs {:?}",
                self.shape, rhs.shape
            )));
        }
        Ok(())
    }

    pub fn add(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        self.zip_check(rhs, "add")?;
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect();
        Ok(Tensor { shape: self.shape.clone(), data })
    }

    pub fn sub(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        self.zip_check(rhs, "sub")?;
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect();
        Ok(Tensor { shape: self.shape.clone(), data })
    }

    pub fn mul_elem(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        self.zip_check(rhs, "mul_elem")?;
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| a * b).collect();
        Ok(Tensor { shape: self.shape.clone(), data })
    }

    pub fn add_assign(&mut self, rhs: &Tensor<S>) -> Result<()> {
        self.zip_check(rhs, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a = *a + b;
        }
        Ok(())
    }

    pub fn scale(&self, factor: S) -> Tensor<S> {
        let data = self.data.iter().map(|&a| a * factor).collect();
        Tensor { shape: self.shape.clone(), data }
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Tensor<S> {
        let data = self.data.iter().map(|&a| f(a)).collect();
        Tensor { shape: self.shape.clone(), data }
    }

    /// Adds a length-`cols` vector to every row of a rank-2 tensor.
    pub fn add_row_vec(&self, v: &Tensor<S>) -> Result<Tensor<S>> {
        let (rows, cols) = self.dims2()?;
        if v.len() != cols {
            return Err(Error::dimension(format!(
                "row vector of length {} against {} columns",
                v.len(),
                cols
            )));
        }
        let mut out = self.clone();
        for i in 0..rows {
            let row = &mut out.data[i * cols..(i + 1) * cols];
            for (o, &b) in row.iter_mut().zip(&v.data) {
                *o = *o + b;
            }
        }
        Ok(out)
    }

    /// Column sums of a rank-2 tensor as a length-`cols` tensor.
    pub fn col_sum(&self) -> Result<Tensor<S>> {
        let (rows, cols) = self.dims2()?;
        let mut out = vec![S::zero(); cols];
        for i in 0..rows {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o = *o + a;
            }
        }
        Ok(Tensor { shape: vec![cols], data: out })
    }

    pub fn dot(&self, rhs: &Tensor<S>) -> Result<S> {
        self.zip_check(rhs, "dot")?;
        let mut acc = S::zero();
        for (&a, &b) in self.data.iter().zip(&rhs.data) {
            acc = acc + a * b;
        }
        Ok(acc)
    }

    /// Euclidean norm of the flattened data.
    pub fn l2_norm(&self) -> S {
        let mut acc = S::zero();
        for &a in &self.data {
            acc = acc + a * a;
        }
        acc.sqrt()
    }

    pub fn sum(&self) -> S {
        let mut acc = S::zero();
        for &a in &self.data {
            acc = acc + a;
        }
        acc
    }

    pub fn mean(&self) -> S {
        if self.data.is_empty() {
            return S::zero();
        }
        self.sum() / S::from_f(self.data.len() as f64)
    }

    /// Index of the first maximum over the flattened data.
    pub fn argmax_flat(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        best
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// i.i.d. normal draws with the given mean and standard deviation.
///
/// `sigma == 0` returns a constant tensor without consuming RNG state.
pub fn gaussian<S: Scalar>(rng: &mut Rng, shape: &[usize], mean: S, sigma: S) -> Result<Tensor<S>> {
    if sigma < S::zero() {
        return Err(Error::parameter(format!("gaussian sigma must be >= 0, got {sigma}")));
    }
    if sigma == S::zero() {
        return Ok(Tensor::full(shape, mean));
    }
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        data.push(mean + sigma * S::from_f(rng.next_gaussian()));
    }
    Tensor::new(shape, data)
}

/// Uniform draws in `[lo, hi)`.
pub fn uniform<S: Scalar>(rng: &mut Rng, shape: &[usize], lo: S, hi: S) -> Result<Tensor<S>> {
    if hi < lo {
        return Err(Error::parameter(format!("uniform bounds out of order: [{lo}, {hi})")));
    }
    let n: usize = shape.iter().product();
    let span = hi - lo;
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        data.push(lo + span * S::from_f(rng.next_f64()));
    }
    Tensor::new(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(rows: &[&[f64]]) -> Tensor<f64> {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        Tensor::from_rows(&rows).unwrap()
    }

    #[test]
    fn new_rejects_mismatched_shape() {
        assert!(matches!(Tensor::new(&[2, 3], vec![1.0; 5]), Err(Error::Dimension(_))));
    }

    #[test]
    fn matmul_identity_returns_operand() {
        let m = t2(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], &[7.0, 8.0, 9.0]]);
        let mut eye = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            *eye.at2_mut(i, i) = 1.0;
        }
        assert_eq!(eye.matmul(&m).unwrap(), m);
    }

    #[test]
    fn matmul_hand_arithmetic() {
        let a = t2(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = t2(&[&[1.0], &[1.0]]);
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let mut rng = Rng::seed_from(7);
        let a: Tensor<f64> = gaussian(&mut rng, &[5, 7], 0.0, 1.0).unwrap();
        let b: Tensor<f64> = gaussian(&mut rng, &[7, 3], 0.0, 1.0).unwrap();
        let got = a.matmul(&b).unwrap();
        // Naive reference product, independent loop order.
        let mut want = Tensor::zeros(&[5, 3]);
        for i in 0..5 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..7 {
                    acc += a.at2(i, k) * b.at2(k, j);
                }
                *want.at2_mut(i, j) = acc;
            }
        }
        for (g, w) in got.data().iter().zip(want.data()) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_shape_mismatch_errors() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        let b = Tensor::<f64>::zeros(&[4, 2]);
        assert!(matches!(a.matmul(&b), Err(Error::Dimension(_))));
    }

    #[test]
    fn transposed_products_match_explicit_transpose() {
        let mut rng = Rng::seed_from(11);
        let a: Tensor<f64> = gaussian(&mut rng, &[4, 6], 0.0, 1.0).unwrap();
        let b: Tensor<f64> = gaussian(&mut rng, &[4, 5], 0.0, 1.0).unwrap();
        let tn = a.matmul_tn(&b).unwrap();
        let want = a.transposed().unwrap().matmul(&b).unwrap();
        assert_eq!(tn, want);

        let c: Tensor<f64> = gaussian(&mut rng, &[5, 6], 0.0, 1.0).unwrap();
        let nt = a.matmul_nt(&c).unwrap();
        let want = a.matmul(&c.transposed().unwrap()).unwrap();
        assert_eq!(nt, want);
    }

    #[test]
    fn l2_norm_cases() {
        assert_eq!(Tensor::from_vec(vec![0.0, 0.0, 0.0]).l2_norm(), 0.0);
        assert_eq!(Tensor::from_vec(vec![3.0, 4.0]).l2_norm(), 5.0);
        let mut rng = Rng::seed_from(3);
        let v: Tensor<f64> = gaussian(&mut rng, &[100], 0.0, 1.0).unwrap();
        let oracle = v.data().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((v.l2_norm() - oracle).abs() < 1e-12);
    }

    #[test]
    fn gaussian_degenerate_sigma_is_constant() {
        let mut rng = Rng::seed_from(1);
        let t: Tensor<f64> = gaussian(&mut rng, &[4], 0.0, 0.0).unwrap();
        assert_eq!(t.data(), &[0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn gaussian_rejects_negative_sigma() {
        let mut rng = Rng::seed_from(1);
        assert!(matches!(
            gaussian::<f64>(&mut rng, &[4], 0.0, -1.0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn gaussian_moments_match_seed_42() {
        let mut rng = Rng::seed_from(42);
        let t: Tensor<f64> = gaussian(&mut rng, &[100_000], 0.0, 1.0).unwrap();
        let mean = t.mean();
        let var = t.data().iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
            / (t.len() as f64 - 1.0);
        assert!(mean.abs() < 0.02, "sample mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 0.02, "sample std {}", var.sqrt());
    }

    #[test]
    fn gaussian_same_seed_bit_identical() {
        let mut a = Rng::seed_from(9001);
        let mut b = Rng::seed_from(9001);
        let ta: Tensor<f64> = gaussian(&mut a, &[257], 0.5, 2.0).unwrap();
        let tb: Tensor<f64> = gaussian(&mut b, &[257], 0.5, 2.0).unwrap();
        assert_eq!(ta, tb);
    }
}
