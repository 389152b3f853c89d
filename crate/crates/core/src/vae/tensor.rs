//! Dense row-major matrices and the few kernels the VAE needs.

use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn uniform(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let data = (0..rows * cols).map(|_| rng.random_range(-scale..=scale)).collect();
        Tensor { rows, cols, data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `out += self · x`
    pub fn matvec_acc(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o += dot(row, x);
        }
    }

    /// `out += selfᵀ · y`
    pub fn matvec_t_acc(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (&yi, row) in y.iter().zip(self.data.chunks_exact(self.cols)) {
            if yi != 0.0 {
                axpy(yi, row, out);
            }
        }
    }

    /// `self += y ⊗ x`
    pub fn outer_acc(&mut self, y: &[f64], x: &[f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        let cols = self.cols;
        for (&yi, row) in y.iter().zip(self.data.chunks_exact_mut(cols)) {
            if yi != 0.0 {
                axpy(yi, x, row);
            }
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        axpy(1.0, &other.data, &mut self.data);
    }

    pub fn add_slice(&mut self, v: &[f64]) {
        axpy(1.0, v, &mut self.data);
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += a · x`
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    out
}

/// `log Σ exp(logits)`
pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernels() {
        let m = Tensor {
            rows: 2,
            cols: 3,
            data: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        };
        let mut out = vec![0.0; 2];
        m.matvec_acc(&[1.0, 0.0, -1.0], &mut out);
        assert_eq!(out, vec![-2.0, -2.0]);
        let mut out = vec![0.0; 3];
        m.matvec_t_acc(&[1.0, 1.0], &mut out);
        assert_eq!(out, vec![5.0, 7.0, 9.0]);
        let mut g = Tensor::zeros(2, 3);
        g.outer_acc(&[1.0, 2.0], &[1.0, 0.0, 3.0]);
        assert_eq!(g.data, vec![1.0, 0.0, 3.0, 2.0, 0.0, 6.0]);
    }

    #[test]
    fn softmax_sums_to_one() {
        for logits in [vec![0.0; 20], vec![1000.0, -1000.0, 3.0], vec![-5.0, 2.5, 0.1, 7.7]] {
            let p = softmax(&logits);
            assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        assert!((log_sum_exp(&[0.0; 20]) - 20f64.ln()).abs() < 1e-15);
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0).is_finite() && sigmoid(800.0) == 1.0);
    }
}
