//! GRU cell with hand-written backward pass.
//!
//! ```text
//! z  = σ(W_z x + U_z h + b_z)
//! r  = σ(W_r x + U_r h + b_r)
//! n  = tanh(W_n x + U_n (r ⊙ h) + b_n)
//! h' = (1 − z) ⊙ n + z ⊙ h
//! ```

use rand::Rng;

use super::tensor::{sigmoid, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct GruWeights {
    pub w_z: Tensor,
    pub u_z: Tensor,
    pub b_z: Tensor,
    pub w_r: Tensor,
    pub u_r: Tensor,
    pub b_r: Tensor,
    pub w_n: Tensor,
    pub u_n: Tensor,
    pub b_n: Tensor,
}

pub(crate) const GRU_TENSOR_NAMES: [&str; 9] = ["w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_n", "u_n", "b_n"];

impl GruWeights {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        GruWeights {
            w_z: Tensor::zeros(hidden, input),
            u_z: Tensor::zeros(hidden, hidden),
            b_z: Tensor::zeros(hidden, 1),
            w_r: Tensor::zeros(hidden, input),
            u_r: Tensor::zeros(hidden, hidden),
            b_r: Tensor::zeros(hidden, 1),
            w_n: Tensor::zeros(hidden, input),
            u_n: Tensor::zeros(hidden, hidden),
            b_n: Tensor::zeros(hidden, 1),
        }
    }

    pub fn uniform(input: usize, hidden: usize, scale: f64, rng: &mut impl Rng) -> Self {
        GruWeights {
            w_z: Tensor::uniform(hidden, input, scale, rng),
            u_z: Tensor::uniform(hidden, hidden, scale, rng),
            b_z: Tensor::uniform(hidden, 1, scale, rng),
            w_r: Tensor::uniform(hidden, input, scale, rng),
            u_r: Tensor::uniform(hidden, hidden, scale, rng),
            b_r: Tensor::uniform(hidden, 1, scale, rng),
            w_n: Tensor::uniform(hidden, input, scale, rng),
            u_n: Tensor::uniform(hidden, hidden, scale, rng),
            b_n: Tensor::uniform(hidden, 1, scale, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.u_z.rows
    }

    pub fn tensors(&self) -> [&Tensor; 9] {
        [
            &self.w_z, &self.u_z, &self.b_z, &self.w_r, &self.u_r, &self.b_r, &self.w_n, &self.u_n, &self.b_n,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 9] {
        [
            &mut self.w_z,
            &mut self.u_z,
            &mut self.b_z,
            &mut self.w_r,
            &mut self.u_r,
            &mut self.b_r,
            &mut self.w_n,
            &mut self.u_n,
            &mut self.b_n,
        ]
    }

    /// One step forward. The returned cache holds everything backward needs.
    pub fn step(&self, x: &[f64], h_prev: &[f64]) -> GruStep {
        let hd = self.hidden();
        let mut z = self.b_z.data.clone();
        self.w_z.matvec_acc(x, &mut z);
        self.u_z.matvec_acc(h_prev, &mut z);
        z.iter_mut().for_each(|v| *v = sigmoid(*v));

        let mut r = self.b_r.data.clone();
        self.w_r.matvec_acc(x, &mut r);
        self.u_r.matvec_acc(h_prev, &mut r);
        r.iter_mut().for_each(|v| *v = sigmoid(*v));

        let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
        let mut n = self.b_n.data.clone();
        self.w_n.matvec_acc(x, &mut n);
        self.u_n.matvec_acc(&rh, &mut n);
        n.iter_mut().for_each(|v| *v = v.tanh());

        let h = (0..hd).map(|i| (1.0 - z[i]) * n[i] + z[i] * h_prev[i]).collect();
        GruStep {
            h_prev: h_prev.to_vec(),
            z,
            r,
            n,
            rh,
            h,
        }
    }

    /// Backward through one step. Accumulates weight gradients into `grad`,
    /// the input gradient into `dx`, and returns the gradient w.r.t. `h_prev`.
    pub fn step_backward(
        &self,
        x: &[f64],
        cache: &GruStep,
        dh: &[f64],
        grad: &mut GruWeights,
        dx: &mut [f64],
    ) -> Vec<f64> {
        let hd = self.hidden();
        let GruStep {
            h_prev, z, r, n, rh, ..
        } = cache;

        let mut dh_prev: Vec<f64> = (0..hd).map(|i| dh[i] * z[i]).collect();
        let da_n: Vec<f64> = (0..hd).map(|i| dh[i] * (1.0 - z[i]) * (1.0 - n[i] * n[i])).collect();
        let da_z: Vec<f64> = (0..hd)
            .map(|i| dh[i] * (h_prev[i] - n[i]) * z[i] * (1.0 - z[i]))
            .collect();

        grad.w_n.outer_acc(&da_n, x);
        grad.u_n.outer_acc(&da_n, rh);
        grad.b_n.add_slice(&da_n);
        self.w_n.matvec_t_acc(&da_n, dx);
        let mut drh = vec![0.0; hd];
        self.u_n.matvec_t_acc(&da_n, &mut drh);
        let da_r: Vec<f64> = (0..hd).map(|i| drh[i] * h_prev[i] * r[i] * (1.0 - r[i])).collect();
        for i in 0..hd {
            dh_prev[i] += drh[i] * r[i];
        }

        grad.w_z.outer_acc(&da_z, x);
        grad.u_z.outer_acc(&da_z, h_prev);
        grad.b_z.add_slice(&da_z);
        self.w_z.matvec_t_acc(&da_z, dx);
        self.u_z.matvec_t_acc(&da_z, &mut dh_prev);

        grad.w_r.outer_acc(&da_r, x);
        grad.u_r.outer_acc(&da_r, h_prev);
        grad.b_r.add_slice(&da_r);
        self.w_r.matvec_t_acc(&da_r, dx);
        self.u_r.matvec_t_acc(&da_r, &mut dh_prev);

        dh_prev
    }
}

/// Activations of one GRU step.
#[derive(Debug, Clone)]
pub struct GruStep {
    pub h_prev: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub n: Vec<f64>,
    pub rh: Vec<f64>,
    pub h: Vec<f64>,
}
