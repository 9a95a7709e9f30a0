//! Dense row-major `f64` tensors and the raw kernels the autodiff graph is built on.

use crate::error::{Error, Result};

/// A dense n-dimensional array of `f64` values in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking that `data` fills `shape` exactly.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Dimension(format!(
                "shape {:?} holds {} values but {} were given",
                shape,
                numel,
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; numel],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; numel],
        }
    }

    /// A rank-1 tensor.
    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    /// A rank-2 tensor from row-major data.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    /// A one-element tensor of shape `[1]`.
    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(Error::Contract(format!(
                "item() needs a one-element tensor, got shape {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::Dimension(format!(
                "cannot reshape {:?} into {:?}",
                self.shape, shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Matrix product. A rank-1 right operand is treated as a column vector and
    /// the result is then rank-1 as well.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (m, k) = as_matrix(self)?;
        match rhs.rank() {
            1 => {
                if rhs.shape[0] != k {
                    return Err(mismatch("matmul", &self.shape, &rhs.shape));
                }
                let mut out = vec![0.0; m];
                matvec(&self.data, m, k, &rhs.data, &mut out);
                Ok(Tensor::vector(out))
            }
            2 => {
                let (k2, n) = (rhs.shape[0], rhs.shape[1]);
                if k2 != k {
                    return Err(mismatch("matmul", &self.shape, &rhs.shape));
                }
                let mut out = vec![0.0; m * n];
                for i in 0..m {
                    let row = &self.data[i * k..(i + 1) * k];
                    let out_row = &mut out[i * n..(i + 1) * n];
                    for (p, &a) in row.iter().enumerate() {
                        axpy(a, &rhs.data[p * n..(p + 1) * n], out_row);
                    }
                }
                Tensor::new(vec![m, n], out)
            }
            _ => Err(mismatch("matmul", &self.shape, &rhs.shape)),
        }
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (m, n) = as_matrix(self)?;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Tensor::new(vec![n, m], out)
    }

    /// Concatenates tensors along `axis`. All other dimensions must agree.
    /// Operands with zero elements are skipped, so `concat(a, empty) == a`.
    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        let parts: Vec<&Tensor> = parts.iter().copied().filter(|t| t.numel() > 0).collect();
        let Some(first) = parts.first() else {
            return Ok(Tensor::zeros(&[0]));
        };
        let rank = first.rank();
        if axis >= rank {
            return Err(Error::Dimension(format!(
                "concat axis {axis} out of range for shape {:?}",
                first.shape
            )));
        }
        for p in &parts[1..] {
            let compatible = p.rank() == rank
                && p.shape
                    .iter()
                    .zip(&first.shape)
                    .enumerate()
                    .all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(mismatch("concat", &first.shape, &p.shape));
            }
        }
        let outer: usize = first.shape[..axis].iter().product();
        let inner: usize = first.shape[axis + 1..].iter().product();
        let mut shape = first.shape.clone();
        shape[axis] = parts.iter().map(|p| p.shape[axis]).sum();
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for p in &parts {
                let chunk = p.shape[axis] * inner;
                data.extend_from_slice(&p.data[o * chunk..(o + 1) * chunk]);
            }
        }
        Tensor::new(shape, data)
    }

    /// Splits along `axis` into pieces of the given sizes; the inverse of [`Tensor::concat`].
    pub fn split(&self, axis: usize, sizes: &[usize]) -> Result<Vec<Tensor>> {
        if axis >= self.rank() || sizes.iter().sum::<usize>() != self.shape[axis] {
            return Err(Error::Dimension(format!(
                "cannot split {:?} into {:?} along axis {axis}",
                self.shape, sizes
            )));
        }
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        let full = self.shape[axis] * inner;
        let mut offset = 0;
        let mut out = Vec::with_capacity(sizes.len());
        for &size in sizes {
            let mut shape = self.shape.clone();
            shape[axis] = size;
            let mut data = Vec::with_capacity(outer * size * inner);
            for o in 0..outer {
                let start = o * full + offset * inner;
                data.extend_from_slice(&self.data[start..start + size * inner]);
            }
            out.push(Tensor::new(shape, data)?);
            offset += size;
        }
        Ok(out)
    }
}

fn as_matrix(t: &Tensor) -> Result<(usize, usize)> {
    match t.shape.as_slice() {
        [m, k] => Ok((*m, *k)),
        _ => Err(Error::Dimension(format!(
            "expected a matrix, got shape {:?}",
            t.shape
        ))),
    }
}

pub(crate) fn mismatch(op: &str, a: &[usize], b: &[usize]) -> Error {
    Error::Dimension(format!("{op}: incompatible shapes {a:?} and {b:?}"))
}

/// Dot product with four independent accumulators; the summation order is
/// fixed, so results do not depend on how the loop gets vectorized.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out = W x` for a row-major `rows x cols` matrix.
///
/// Four rows are processed together so each load of `x` is shared; every
/// row still uses the summation order of [`dot`], so results match it bitwise.
#[inline]
pub(crate) fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    let x = &x[..cols];
    let blocks = rows / 4;
    let split = cols - cols % 4;
    for bi in 0..blocks {
        let r0 = bi * 4;
        let w0 = &w[r0 * cols..(r0 + 1) * cols];
        let w1 = &w[(r0 + 1) * cols..(r0 + 2) * cols];
        let w2 = &w[(r0 + 2) * cols..(r0 + 3) * cols];
        let w3 = &w[(r0 + 3) * cols..(r0 + 4) * cols];
        let mut acc = [[0.0f64; 4]; 4];
        let mut c = 0;
        while c < split {
            let xv = [x[c], x[c + 1], x[c + 2], x[c + 3]];
            for (a, row) in acc.iter_mut().zip([w0, w1, w2, w3]) {
                let rv = &row[c..c + 4];
                a[0] += rv[0] * xv[0];
                a[1] += rv[1] * xv[1];
                a[2] += rv[2] * xv[2];
                a[3] += rv[3] * xv[3];
            }
            c += 4;
        }
        for (r, (a, row)) in acc.iter().zip([w0, w1, w2, w3]).enumerate() {
            let mut tail = 0.0;
            for (wi, xi) in row[split..].iter().zip(&x[split..]) {
                tail += wi * xi;
            }
            out[r0 + r] = (a[0] + a[1]) + (a[2] + a[3]) + tail;
        }
    }
    for r in blocks * 4..rows {
        out[r] = dot(&w[r * cols..(r + 1) * cols], x);
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Log-softmax computed as `x - max - ln(sum(exp(x - max)))`.
pub fn log_softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = x.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    x.iter().map(|v| v - lse).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_wrong_length() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn identity_times_b_is_b() {
        let b = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(Tensor::identity(2).matmul(&b).unwrap(), b);
    }

    #[test]
    fn one_by_one_product() {
        let a = Tensor::matrix(1, 1, vec![2.0]).unwrap();
        let b = Tensor::matrix(1, 1, vec![3.0]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data(), &[6.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 2]);
        let msg = a.matmul(&b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
    }

    #[test]
    fn concat_and_split() {
        let a = Tensor::vector(vec![1.0, 2.0]);
        let b = Tensor::vector(vec![3.0]);
        let ab = Tensor::concat(&[&a, &b], 0).unwrap();
        assert_eq!(ab.data(), &[1.0, 2.0, 3.0]);
        let parts = ab.split(0, &[2, 1]).unwrap();
        assert_eq!(parts, vec![a.clone(), b]);
        let empty = Tensor::zeros(&[0]);
        assert_eq!(Tensor::concat(&[&a, &empty], 0).unwrap(), a);
    }

    #[test]
    fn concat_along_columns() {
        let a = Tensor::matrix(2, 1, vec![1.0, 2.0]).unwrap();
        let b = Tensor::matrix(2, 2, vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        let ab = Tensor::concat(&[&a, &b], 1).unwrap();
        assert_eq!(ab.shape(), &[2, 3]);
        assert_eq!(ab.data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        assert_eq!(ab.split(1, &[1, 2]).unwrap(), vec![a, b]);
        assert!(Tensor::concat(&[&Tensor::zeros(&[3, 1]), &Tensor::zeros(&[2, 1])], 1).is_err());
    }

    #[test]
    fn transpose_round_trip() {
        let a = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let t = a.transpose().unwrap();
        assert_eq!(t.shape(), &[3, 2]);
        assert_eq!(t.data(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        assert_eq!(t.transpose().unwrap(), a);
    }

    #[test]
    fn log_softmax_matches_softmax() {
        let x = [0.3, -1.2, 2.5, 0.0];
        let p = softmax(&x);
        for (lp, p) in log_softmax(&x).iter().zip(&p) {
            assert!((lp.exp() - p).abs() < 1e-15);
        }
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
    }
}
