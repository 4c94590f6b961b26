//! Row-major matrix storage and the few dense kernels the network needs.
//! The inner loops are plain slice iteration so the compiler can vectorize.

use super::real::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Real> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![F::ZERO; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [F] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn at(&self, r: usize, c: usize) -> F {
        self.data[r * self.cols + c]
    }

    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut F {
        &mut self.data[r * self.cols + c]
    }

    pub fn as_slice(&self) -> &[F] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn fill(&mut self, value: F) {
        self.data.fill(value);
    }
}

/// Dot product with four independent accumulator streams so the compiler can
/// keep several vector FMAs in flight.
pub fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let mut acc = [F::ZERO; 4];
    let mut i = 0;
    while i + 32 <= n {
        let (pa, pb) = (&a[i..i + 32], &b[i..i + 32]);
        for k in 0..8 {
            acc[0] = pa[k].mul_add(pb[k], acc[0]);
        }
        for k in 8..16 {
            acc[1] = pa[k].mul_add(pb[k], acc[1]);
        }
        for k in 16..24 {
            acc[2] = pa[k].mul_add(pb[k], acc[2]);
        }
        for k in 24..32 {
            acc[3] = pa[k].mul_add(pb[k], acc[3]);
        }
        i += 32;
    }
    let mut tail = F::ZERO;
    while i < n {
        tail = a[i].mul_add(b[i], tail);
        i += 1;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + tail
}

/// out += alpha * v
pub fn axpy<F: Real>(out: &mut [F], alpha: F, v: &[F]) {
    debug_assert_eq!(out.len(), v.len());
    for (o, x) in out.iter_mut().zip(v) {
        *o = x.mul_add(alpha, *o);
    }
}

/// out += M v, four rows at a time so the loads of `v` are shared and four
/// independent FMA chains stay in flight.
pub fn matvec_add<F: Real>(m: &Matrix<F>, v: &[F], out: &mut [F]) {
    debug_assert_eq!(m.cols(), v.len());
    debug_assert_eq!(m.rows(), out.len());
    let cols = m.cols();
    let data = m.as_slice();
    let mut r = 0;
    while r + 4 <= out.len() {
        let base = r * cols;
        let (r0, rest) = data[base..base + 4 * cols].split_at(cols);
        let (r1, rest) = rest.split_at(cols);
        let (r2, r3) = rest.split_at(cols);
        let mut acc = [F::ZERO; 4];
        for k in 0..cols {
            let x = v[k];
            acc[0] = r0[k].mul_add(x, acc[0]);
            acc[1] = r1[k].mul_add(x, acc[1]);
            acc[2] = r2[k].mul_add(x, acc[2]);
            acc[3] = r3[k].mul_add(x, acc[3]);
        }
        out[r] += acc[0];
        out[r + 1] += acc[1];
        out[r + 2] += acc[2];
        out[r + 3] += acc[3];
        r += 4;
    }
    while r < out.len() {
        out[r] += dot(m.row(r), v);
        r += 1;
    }
}

/// out += M^T v, computed as row-wise axpy so access stays contiguous.
pub fn matvec_t_add<F: Real>(m: &Matrix<F>, v: &[F], out: &mut [F]) {
    debug_assert_eq!(m.rows(), v.len());
    debug_assert_eq!(m.cols(), out.len());
    for (r, alpha) in v.iter().enumerate() {
        axpy(out, *alpha, m.row(r));
    }
}

/// out += column `c` of M
pub fn add_column<F: Real>(m: &Matrix<F>, c: usize, out: &mut [F]) {
    debug_assert_eq!(m.rows(), out.len());
    for (r, o) in out.iter_mut().enumerate() {
        *o += m.at(r, c);
    }
}

/// M += u v^T
pub fn outer_add<F: Real>(m: &mut Matrix<F>, u: &[F], v: &[F]) {
    debug_assert_eq!(m.rows(), u.len());
    debug_assert_eq!(m.cols(), v.len());
    for (r, alpha) in u.iter().enumerate() {
        axpy(m.row_mut(r), *alpha, v);
    }
}

/// column `c` of M += u
pub fn column_add<F: Real>(m: &mut Matrix<F>, c: usize, u: &[F]) {
    debug_assert_eq!(m.rows(), u.len());
    let cols = m.cols();
    for (r, alpha) in u.iter().enumerate() {
        m.as_mut_slice()[r * cols + c] += *alpha;
    }
}
