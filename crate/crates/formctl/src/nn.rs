//! Tunable three-layer neural network (input, two sigmoid hidden layers,
//! linear output) with online weight tuning.
//!
//! Layout: the augmented input `X = [1, x_bar] in R^(n1+1)` feeds
//! `V_hat in R^((n1+1) x m1)`; the first hidden activation vector
//! `sigma2_hat = [1, sigmoid(V_hat^T X)] in R^(m1+1)` feeds
//! `Z_hat in R^((m1+1) x m2)`; the second hidden activation
//! `sigma1_hat = [1, sigmoid(Z_hat^T sigma2_hat)] in R^(m2+1)` feeds
//! `W_hat in R^((m2+1) x n2)`, so `y_hat = W_hat^T sigma1_hat`.
//!
//! The activation Jacobians `sigma1'`, `sigma2'` act as `(m+1) x m` maps with
//! a zero row in the bias slot (the leading 1 is constant), which keeps the
//! tuning-law and error-decomposition algebra dimensionally consistent: bias
//! rows of `Z_hat` and `W_hat` receive no Jacobian-mediated update.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// `(dW, dZ, dV)` right-hand sides produced by the tuning laws.
pub type TuningDerivatives = (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>);

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch { context: &'static str, expected: usize, got: usize },
}

/// Sizing rule for the hidden layers given the agent state dimension `n`:
/// `m1 = 3n + 4` neurons in the first hidden layer and `m2 = 2(3n + 4) + 2`
/// in the second suffice to approximate the lumped agent nonlinearity.
pub fn neuron_counts(n: usize) -> (usize, usize) {
    let m1 = 3 * n + 4;
    (m1, 2 * m1 + 2)
}

pub fn sigmoid(s: f64) -> f64 {
    1.0 / (1.0 + (-s).exp())
}

/// Activations and diagonal Jacobian entries captured during a forward pass.
///
/// `sigma2_hat` and `sigma1_hat` carry the leading bias 1; the `*_prime`
/// vectors hold the `sigma(1 - sigma)` entries of the non-bias slots only.
#[derive(Debug, Clone)]
pub struct ActivationBundle {
    pub sigma2_hat: DVector<f64>,
    pub sigma2_prime: DVector<f64>,
    pub sigma1_hat: DVector<f64>,
    pub sigma1_prime: DVector<f64>,
}

/// Per-agent adaptation rates for the W, Z, V tuning laws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningGains {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl TuningGains {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self, String> {
        if !(alpha > 0.0 && beta > 0.0 && gamma > 0.0) {
            return Err(format!(
                "tuning gains must be strictly positive, got ({alpha}, {beta}, {gamma})"
            ));
        }
        Ok(Self { alpha, beta, gamma })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThreeLayerNn {
    n1: usize,
    m1: usize,
    m2: usize,
    n2: usize,
    pub v_hat: DMatrix<f64>,
    pub z_hat: DMatrix<f64>,
    pub w_hat: DMatrix<f64>,
}

impl ThreeLayerNn {
    pub fn zeros(n1: usize, m1: usize, m2: usize, n2: usize) -> Self {
        Self {
            n1,
            m1,
            m2,
            n2,
            v_hat: DMatrix::zeros(n1 + 1, m1),
            z_hat: DMatrix::zeros(m1 + 1, m2),
            w_hat: DMatrix::zeros(m2 + 1, n2),
        }
    }

    /// Seeded initialization: `V_hat`, `Z_hat` uniform in
    /// `[-1/sqrt(fan_in), +1/sqrt(fan_in)]`, `W_hat = 0` so the network
    /// output is zero until tuning moves it.
    pub fn seeded(n1: usize, m1: usize, m2: usize, n2: usize, rng: &mut impl Rng) -> Self {
        let mut nn = Self::zeros(n1, m1, m2, n2);
        let v_scale = 1.0 / ((n1 + 1) as f64).sqrt();
        let z_scale = 1.0 / ((m1 + 1) as f64).sqrt();
        for x in nn.v_hat.iter_mut() {
            *x = rng.gen_range(-v_scale..=v_scale);
        }
        for x in nn.z_hat.iter_mut() {
            *x = rng.gen_range(-z_scale..=z_scale);
        }
        nn
    }

    /// Network sized by the rule of [`neuron_counts`] for an agent with
    /// state dimension `n` (input `3n + 4` before augmentation, output `n`).
    pub fn for_agent(n: usize, rng: &mut impl Rng) -> Self {
        let (m1, m2) = neuron_counts(n);
        Self::seeded(3 * n + 4, m1, m2, n, rng)
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.n1, self.m1, self.m2, self.n2)
    }

    /// Rebuilds a network from column-major weight slices (integrator
    /// interop: the flat ODE state stores the matrices in this form).
    pub fn from_column_slices(
        dims: (usize, usize, usize, usize),
        v: &[f64],
        z: &[f64],
        w: &[f64],
    ) -> Result<Self, NnError> {
        let (n1, m1, m2, n2) = dims;
        if v.len() != (n1 + 1) * m1 {
            return Err(NnError::ShapeMismatch {
                context: "V weight slice",
                expected: (n1 + 1) * m1,
                got: v.len(),
            });
        }
        if z.len() != (m1 + 1) * m2 {
            return Err(NnError::ShapeMismatch {
                context: "Z weight slice",
                expected: (m1 + 1) * m2,
                got: z.len(),
            });
        }
        if w.len() != (m2 + 1) * n2 {
            return Err(NnError::ShapeMismatch {
                context: "W weight slice",
                expected: (m2 + 1) * n2,
                got: w.len(),
            });
        }
        Ok(Self {
            n1,
            m1,
            m2,
            n2,
            v_hat: DMatrix::from_column_slice(n1 + 1, m1, v),
            z_hat: DMatrix::from_column_slice(m1 + 1, m2, z),
            w_hat: DMatrix::from_column_slice(m2 + 1, n2, w),
        })
    }

    pub fn v_fro(&self) -> f64 {
        self.v_hat.norm()
    }

    pub fn z_fro(&self) -> f64 {
        self.z_hat.norm()
    }

    pub fn w_fro(&self) -> f64 {
        self.w_hat.norm()
    }

    /// Forward pass on the raw (un-augmented) input `x_bar in R^n1`.
    pub fn forward(&self, x_bar: &DVector<f64>) -> Result<(DVector<f64>, ActivationBundle), NnError> {
        if x_bar.len() != self.n1 {
            return Err(NnError::ShapeMismatch {
                context: "forward input",
                expected: self.n1,
                got: x_bar.len(),
            });
        }
        let x = augment(x_bar);
        self.forward_augmented(&x)
    }

    /// Forward pass on the already-augmented input `X = [1, x_bar]`.
    pub fn forward_augmented(
        &self,
        x: &DVector<f64>,
    ) -> Result<(DVector<f64>, ActivationBundle), NnError> {
        if x.len() != self.n1 + 1 {
            return Err(NnError::ShapeMismatch {
                context: "forward augmented input",
                expected: self.n1 + 1,
                got: x.len(),
            });
        }
        let pre2 = self.v_hat.tr_mul(x); // V^T X in R^m1
        let (sigma2_hat, sigma2_prime) = activate(&pre2);
        let pre1 = self.z_hat.tr_mul(&sigma2_hat); // Z^T sigma2 in R^m2
        let (sigma1_hat, sigma1_prime) = activate(&pre1);
        let y = self.w_hat.tr_mul(&sigma1_hat);
        Ok((y, ActivationBundle { sigma2_hat, sigma2_prime, sigma1_hat, sigma1_prime }))
    }

    /// Right-hand sides of the weight tuning laws for the current activations,
    /// augmented input `X`, auxiliary error `zeta` and gain `k2`:
    ///
    /// ```text
    /// dW = alpha (k2 (s1 - s1' Z^T s2 - s1' Z^T s2' V^T X) zeta^T - |zeta|_1 W)
    /// dZ = beta  (k2 (s2 - s2' V^T X) (zeta^T W^T s1')           - |zeta|_1 Z)
    /// dV = gamma (k2 X (zeta^T W^T s1' Z^T s2')                  - |zeta|_1 V)
    /// ```
    ///
    /// The `-|zeta|_1 (weight)` terms are the sigma-modification damping.
    pub fn tuning_derivatives(
        &self,
        bundle: &ActivationBundle,
        x: &DVector<f64>,
        zeta: &DVector<f64>,
        k2: f64,
        gains: &TuningGains,
    ) -> Result<TuningDerivatives, NnError> {
        if x.len() != self.n1 + 1 {
            return Err(NnError::ShapeMismatch {
                context: "tuning input",
                expected: self.n1 + 1,
                got: x.len(),
            });
        }
        if zeta.len() != self.n2 {
            return Err(NnError::ShapeMismatch {
                context: "tuning zeta",
                expected: self.n2,
                got: zeta.len(),
            });
        }
        let zeta_norm1 = norm1(zeta);
        let vtx = self.v_hat.tr_mul(x);

        // s1 - s1' Z^T s2 - s1' Z^T s2' V^T X, in R^(m2+1)
        let z_t_s2 = self.z_hat.tr_mul(&bundle.sigma2_hat);
        let z_t_s2p_vtx = self.z_hat.tr_mul(&lift_scaled(&bundle.sigma2_prime, &vtx));
        let w_term = &bundle.sigma1_hat
            - lift_scaled(&bundle.sigma1_prime, &z_t_s2)
            - lift_scaled(&bundle.sigma1_prime, &z_t_s2p_vtx);
        let dw = (outer(&w_term, zeta) * k2 - &self.w_hat * zeta_norm1) * gains.alpha;

        // zeta^T W^T s1' as a column vector in R^m2
        let w_zeta = &self.w_hat * zeta; // R^(m2+1)
        let row_m2 = drop_scaled(&bundle.sigma1_prime, &w_zeta);
        let z_term = &bundle.sigma2_hat - lift_scaled(&bundle.sigma2_prime, &vtx);
        let dz = (outer(&z_term, &row_m2) * k2 - &self.z_hat * zeta_norm1) * gains.beta;

        // zeta^T W^T s1' Z^T s2' as a column vector in R^m1
        let row_m1 = drop_scaled(&bundle.sigma2_prime, &(&self.z_hat * &row_m2));
        let dv = (outer(x, &row_m1) * k2 - &self.v_hat * zeta_norm1) * gains.gamma;

        Ok((dw, dz, dv))
    }

    /// Safety clamp: rescales any weight matrix whose Frobenius norm exceeds
    /// `max_norm` back onto that sphere. The tuning laws already damp weight
    /// drift, so this is off by default and exists for experimentation.
    pub fn clamp_frobenius(&mut self, max_norm: f64) {
        for m in [&mut self.v_hat, &mut self.z_hat, &mut self.w_hat] {
            let norm = m.norm();
            if norm > max_norm {
                *m *= max_norm / norm;
            }
        }
    }

    /// Frobenius-norm snapshot of the weight matrices for export.
    pub fn snapshot(&self) -> WeightSnapshot {
        WeightSnapshot {
            v_hat: MatrixSnapshot::from(&self.v_hat),
            z_hat: MatrixSnapshot::from(&self.z_hat),
            w_hat: MatrixSnapshot::from(&self.w_hat),
        }
    }
}

/// Splits the estimation error `y - y_hat` between an `ideal` reference
/// network and the estimate `hat` (same dimensions, evaluated at the
/// augmented input `x`, with approximation error `epsilon`) into the part
/// linear in the weight differences and the lumped remainder:
///
/// `linear_part` collects the regressor terms
/// `Wt^T (s1 - s1' Z^T s2 - s1' Z^T s2' V^T X) + W^T s1' Zt^T (s2 - s2' V^T X)
///  + W^T s1' Z^T s2' Vt^T X` (tilde = ideal - hat, hats on the regressors),
/// and `eps_bar` is assembled from the exact Taylor remainders so that
/// `linear_part + eps_bar = y - y_hat` holds identically.
pub fn estimation_error_decomposition(
    ideal: &ThreeLayerNn,
    hat: &ThreeLayerNn,
    x: &DVector<f64>,
    epsilon: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>), NnError> {
    if ideal.dims() != hat.dims() {
        return Err(NnError::ShapeMismatch {
            context: "decomposition dims",
            expected: hat.n1,
            got: ideal.n1,
        });
    }
    if epsilon.len() != hat.n2 {
        return Err(NnError::ShapeMismatch {
            context: "decomposition epsilon",
            expected: hat.n2,
            got: epsilon.len(),
        });
    }
    let (_, hb) = hat.forward_augmented(x)?;
    let (_, ib) = ideal.forward_augmented(x)?;

    let w_tilde = &ideal.w_hat - &hat.w_hat;
    let z_tilde = &ideal.z_hat - &hat.z_hat;
    let v_tilde = &ideal.v_hat - &hat.v_hat;

    let vtx_hat = hat.v_hat.tr_mul(x);
    let vtx_ideal = ideal.v_hat.tr_mul(x);
    let sigma2_ideal = &ib.sigma2_hat; // sigma2(V^T X) with bias
    let sigma1_arg_ideal = ideal.z_hat.tr_mul(sigma2_ideal); // Z^T sigma2 in R^m2
    let sigma1_ideal = &ib.sigma1_hat;

    // linear part
    let z_t_s2 = hat.z_hat.tr_mul(&hb.sigma2_hat);
    let z_t_s2p_vtx = hat.z_hat.tr_mul(&lift_scaled(&hb.sigma2_prime, &vtx_hat));
    let w_reg = &hb.sigma1_hat
        - lift_scaled(&hb.sigma1_prime, &z_t_s2)
        - lift_scaled(&hb.sigma1_prime, &z_t_s2p_vtx);
    let z_reg = &hb.sigma2_hat - lift_scaled(&hb.sigma2_prime, &vtx_hat);
    let linear = w_tilde.tr_mul(&w_reg)
        + hat.w_hat.tr_mul(&lift_scaled(&hb.sigma1_prime, &z_tilde.tr_mul(&z_reg)))
        + hat.w_hat.tr_mul(&lift_scaled(
            &hb.sigma1_prime,
            &hat.z_hat.tr_mul(&lift_scaled(&hb.sigma2_prime, &v_tilde.tr_mul(x))),
        ));

    // Exact Taylor remainders:
    // O2 = sigma2(V^T X) - sigma2_hat - sigma2_hat' Vt^T X        in R^(m1+1)
    // O1 = sigma1(Z^T sigma2) - sigma1_hat
    //      - sigma1_hat' (Z^T sigma2 - Z_hat^T sigma2_hat)        in R^(m2+1)
    let o2 = sigma2_ideal - &hb.sigma2_hat - lift_scaled(&hb.sigma2_prime, &v_tilde.tr_mul(x));
    let o1 = sigma1_ideal
        - &hb.sigma1_hat
        - lift_scaled(&hb.sigma1_prime, &(&sigma1_arg_ideal - &z_t_s2));

    // eps_bar = W^T s1' Z_ideal^T O2 + W^T s1' Zt^T s2' V_ideal^T X
    //           + Wt^T s1' Z_ideal^T sigma2_ideal + Wt^T s1' Z^T s2' V^T X
    //           + W_ideal^T O1 + epsilon
    let eps_bar = hat
        .w_hat
        .tr_mul(&lift_scaled(&hb.sigma1_prime, &ideal.z_hat.tr_mul(&o2)))
        + hat.w_hat.tr_mul(&lift_scaled(
            &hb.sigma1_prime,
            &z_tilde.tr_mul(&lift_scaled(&hb.sigma2_prime, &vtx_ideal)),
        ))
        + w_tilde.tr_mul(&lift_scaled(&hb.sigma1_prime, &sigma1_arg_ideal))
        + w_tilde.tr_mul(&lift_scaled(&hb.sigma1_prime, &z_t_s2p_vtx))
        + ideal.w_hat.tr_mul(&o1)
        + epsilon;

    Ok((linear, eps_bar))
}

/// Diagnostic weight/input norm polynomial bounding the lumped remainder:
/// `|eps_bar| <= Gamma * mu` for some unknown constant `Gamma`.
pub fn mu_bound(hat: &ThreeLayerNn, x: &DVector<f64>) -> f64 {
    let w = hat.w_fro();
    let z = hat.z_fro();
    let v = hat.v_fro();
    let xn = x.norm();
    w + w * xn + w * v * xn + w * z * xn + z * v * xn + w * z * v * xn + z + 1.0
}

pub fn norm1(v: &DVector<f64>) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// `X = [1, x_bar]`.
pub fn augment(x_bar: &DVector<f64>) -> DVector<f64> {
    let mut x = DVector::zeros(x_bar.len() + 1);
    x[0] = 1.0;
    x.rows_mut(1, x_bar.len()).copy_from(x_bar);
    x
}

/// Applies the `(m+1) x m` activation Jacobian from the left:
/// `[0; prime .* v]`. The zero bias slot reflects the constant leading 1.
fn lift_scaled(prime: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    debug_assert_eq!(prime.len(), v.len());
    let mut out = DVector::zeros(v.len() + 1);
    for i in 0..v.len() {
        out[i + 1] = prime[i] * v[i];
    }
    out
}

/// Applies the transposed Jacobian: drops the bias slot of `v in R^(m+1)` and
/// scales the rest, giving `prime .* v[1..] in R^m`.
fn drop_scaled(prime: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    debug_assert_eq!(prime.len() + 1, v.len());
    DVector::from_fn(prime.len(), |i, _| prime[i] * v[i + 1])
}

fn outer(a: &DVector<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    a * b.transpose()
}

fn activate(pre: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let mut act = DVector::zeros(pre.len() + 1);
    let mut prime = DVector::zeros(pre.len());
    act[0] = 1.0;
    for i in 0..pre.len() {
        let s = sigmoid(pre[i]);
        act[i + 1] = s;
        prime[i] = s * (1.0 - s);
    }
    (act, prime)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixSnapshot {
    pub rows: usize,
    pub cols: usize,
    /// Row-major entries.
    pub data: Vec<f64>,
    pub frobenius: f64,
}

impl From<&DMatrix<f64>> for MatrixSnapshot {
    fn from(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        Self { rows: m.nrows(), cols: m.ncols(), data, frobenius: m.norm() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightSnapshot {
    pub v_hat: MatrixSnapshot,
    pub z_hat: MatrixSnapshot,
    pub w_hat: MatrixSnapshot,
}
