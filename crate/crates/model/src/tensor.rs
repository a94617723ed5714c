//! Flat row-major tensors and the few dense kernels the model needs.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn zeroed(&self) -> Self {
        Self::zeros(&self.shape)
    }
}

/// `c = a·b + beta·c` with `a: m×k`, `b: k×n`, all row-major. `trans_a`
/// reads `a` as stored `k×m`; `trans_b` reads `b` as stored `n×k`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    c: &mut [f64],
    beta: f64,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: slice lengths are checked above and the strides describe
    // exactly those row-major layouts.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `x·W + bias` for `x: rows×k`, `W: k×n`.
pub fn linear(x: &[f64], rows: usize, w: &Tensor, bias: Option<&Tensor>) -> Vec<f64> {
    let (k, n) = (w.shape[0], w.shape[1]);
    let mut out = match bias {
        Some(b) => {
            let mut o = Vec::with_capacity(rows * n);
            for _ in 0..rows {
                o.extend_from_slice(&b.data);
            }
            o
        }
        None => vec![0.0; rows * n],
    };
    gemm(rows, k, n, x, false, &w.data, false, &mut out, 1.0);
    out
}

/// Backward of [`linear`]: accumulates `dW += xᵀ·dy`, `db += Σ dy` and
/// returns `dx = dy·Wᵀ`.
pub fn linear_backward(
    x: &[f64],
    rows: usize,
    w: &Tensor,
    dy: &[f64],
    dw: &mut Tensor,
    db: Option<&mut Tensor>,
) -> Vec<f64> {
    let (k, n) = (w.shape[0], w.shape[1]);
    gemm(k, rows, n, x, true, dy, false, &mut dw.data, 1.0);
    if let Some(db) = db {
        for r in 0..rows {
            for (g, d) in db.data.iter_mut().zip(&dy[r * n..(r + 1) * n]) {
                *g += d;
            }
        }
    }
    let mut dx = vec![0.0; rows * k];
    gemm(rows, n, k, dy, false, &w.data, true, &mut dx, 0.0);
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                c[i * n + j] = (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum();
            }
        }
        c
    }

    fn transpose(r: usize, c: usize, a: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                t[j * r + i] = a[i * c + j];
            }
        }
        t
    }

    #[test]
    fn gemm_all_transpose_combinations() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        let want = naive(m, k, n, &a, &b);
        let at = transpose(m, k, &a);
        let bt = transpose(k, n, &b);
        for (aa, ta) in [(&a, false), (&at, true)] {
            for (bb, tb) in [(&b, false), (&bt, true)] {
                let mut c = vec![0.0; m * n];
                gemm(m, k, n, aa, ta, bb, tb, &mut c, 0.0);
                for (x, y) in c.iter().zip(&want) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }
}
