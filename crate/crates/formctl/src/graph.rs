//! Directed interaction topology and the spectral certificates that back the
//! controller gain conditions.
//!
//! The agent graph is a weighted digraph: `adjacency[(i, j)] = a_ij > 0` means
//! agent `i` receives information from agent `j`. A diagonal pinning vector
//! `b_i >= 0` marks which agents additionally receive the leader state. From
//! these we build the Laplacian `L = D - A` (with `D` the in-degree matrix),
//! solve `q = (L + B)^-1 * 1`, scale `P = diag(1/q_i)` and form
//! `Pi = P(L+B) + (L+B)^T P`. A valid certificate has `q > 0` and `Pi`
//! positive definite; the extreme singular values of `P(L+B)` then give lower
//! bounds for the controller gains.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Relative eigenvalue tolerance for positive-definiteness checks:
/// `lambda_min > PD_REL_TOL * lambda_max`. Scale-free and robust to float noise.
const PD_REL_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("malformed graph: {0}")]
    Malformed(String),
    #[error("no agent is pinned to the leader (all b_i = 0)")]
    NotPinned,
    #[error("graph is not strongly connected and not every agent is reachable from the pinned set")]
    NotStronglyConnected,
    #[error("L + B is numerically singular")]
    SingularSystem,
    #[error("certificate violation: {0}")]
    CertificateViolation(String),
}

/// Weighted directed interaction graph with leader pinning weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDigraph {
    n: usize,
    adjacency: DMatrix<f64>,
    leader_weights: DVector<f64>,
}

impl WeightedDigraph {
    /// Validates shape, zero diagonal, non-negativity and finiteness.
    /// Pinning (some `b_i > 0`) is checked by [`WeightedDigraph::certify`],
    /// not here, so that unpinned graphs can still be built and rejected with
    /// a precise error.
    pub fn new(adjacency: DMatrix<f64>, leader_weights: DVector<f64>) -> Result<Self, GraphError> {
        let n = adjacency.nrows();
        if n == 0 {
            return Err(GraphError::Malformed("graph must have at least one agent".into()));
        }
        if adjacency.ncols() != n {
            return Err(GraphError::Malformed(format!(
                "adjacency must be square, got {}x{}",
                adjacency.nrows(),
                adjacency.ncols()
            )));
        }
        if leader_weights.len() != n {
            return Err(GraphError::Malformed(format!(
                "leader weight vector has length {}, expected {n}",
                leader_weights.len()
            )));
        }
        for i in 0..n {
            if adjacency[(i, i)] != 0.0 {
                return Err(GraphError::Malformed(format!("self-loop at agent {i}")));
            }
            for j in 0..n {
                let a = adjacency[(i, j)];
                if !a.is_finite() || a < 0.0 {
                    return Err(GraphError::Malformed(format!(
                        "adjacency weight a[{i}][{j}] = {a} must be finite and >= 0"
                    )));
                }
            }
            let b = leader_weights[i];
            if !b.is_finite() || b < 0.0 {
                return Err(GraphError::Malformed(format!(
                    "leader weight b[{i}] = {b} must be finite and >= 0"
                )));
            }
        }
        Ok(Self { n, adjacency, leader_weights })
    }

    /// Unit-weight graph from directed edges `(from, to)` plus pinned agents.
    pub fn from_unit_edges(
        n: usize,
        edges: &[(usize, usize)],
        pinned: &[usize],
    ) -> Result<Self, GraphError> {
        let mut a = DMatrix::zeros(n, n);
        for &(from, to) in edges {
            if from >= n || to >= n {
                return Err(GraphError::Malformed(format!("edge ({from}, {to}) out of range")));
            }
            a[(to, from)] = 1.0;
        }
        let mut b = DVector::zeros(n);
        for &i in pinned {
            if i >= n {
                return Err(GraphError::Malformed(format!("pinned agent {i} out of range")));
            }
            b[i] = 1.0;
        }
        Self::new(a, b)
    }

    pub fn n_agents(&self) -> usize {
        self.n
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn leader_weights(&self) -> &DVector<f64> {
        &self.leader_weights
    }

    /// Incoming edge weight `a_ij` (agent `i` listens to agent `j`).
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[(i, j)]
    }

    /// `L = D - A` with `D = diag(sum_j a_ij)`. Every row sums to zero.
    pub fn laplacian(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| {
            if i == j {
                self.adjacency.row(i).sum()
            } else if self.adjacency[(i, j)] > 0.0 {
                -self.adjacency[(i, j)]
            } else {
                0.0
            }
        })
    }

    /// `L + B` with `B = diag(b_i)`.
    pub fn l_plus_b(&self) -> DMatrix<f64> {
        let mut m = self.laplacian();
        for i in 0..n_of(&m) {
            m[(i, i)] += self.leader_weights[i];
        }
        m
    }

    /// Vertices reachable (in the information-flow direction) from `seeds`.
    /// A step goes from `u` to `w` when `a_wu > 0`, i.e. `w` listens to `u`.
    #[allow(clippy::needless_range_loop)]
    fn reach_from(&self, seeds: impl Iterator<Item = usize>, reversed: bool) -> Vec<bool> {
        let mut seen = vec![false; self.n];
        let mut stack: Vec<usize> = seeds.collect();
        for &s in &stack {
            seen[s] = true;
        }
        while let Some(u) = stack.pop() {
            for w in 0..self.n {
                let a = if reversed { self.adjacency[(u, w)] } else { self.adjacency[(w, u)] };
                if a > 0.0 && !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen
    }

    /// True iff every vertex reaches every other vertex along directed edges.
    pub fn is_strongly_connected(&self) -> bool {
        let fwd = self.reach_from(std::iter::once(0), false);
        let bwd = self.reach_from(std::iter::once(0), true);
        fwd.iter().all(|&r| r) && bwd.iter().all(|&r| r)
    }

    /// True iff every agent is reachable from the set of pinned agents, i.e.
    /// the leader roots a spanning tree of the augmented graph.
    pub fn is_leader_rooted(&self) -> bool {
        let pinned: Vec<usize> =
            (0..self.n).filter(|&i| self.leader_weights[i] > 0.0).collect();
        if pinned.is_empty() {
            return false;
        }
        self.reach_from(pinned.into_iter(), false).iter().all(|&r| r)
    }

    /// Builds and verifies the spectral certificates: solves `(L+B) q = 1`,
    /// requires `q > 0`, forms `P = diag(1/q_i)` and the exactly-symmetric
    /// `Pi = P(L+B) + (L+B)^T P`, requires `Pi` positive definite, and records
    /// the non-singular M-matrix checks for `L + B` (non-positive off-diagonal
    /// entries, positive-definite symmetric part) as flags.
    ///
    /// The graph must be pinned and every agent reachable from the pinned set;
    /// strong connectivity is sufficient but not necessary for the numeric
    /// certificates to verify, so it is reported rather than required.
    pub fn certify(&self) -> Result<GraphCertificates, GraphError> {
        if self.leader_weights.iter().all(|&b| b == 0.0) {
            return Err(GraphError::NotPinned);
        }
        let strongly_connected = self.is_strongly_connected();
        if !strongly_connected && !self.is_leader_rooted() {
            return Err(GraphError::NotStronglyConnected);
        }

        let n = self.n;
        let laplacian = self.laplacian();
        let lb = self.l_plus_b();
        let ones = DVector::from_element(n, 1.0);
        let q = lb.clone().lu().solve(&ones).ok_or(GraphError::SingularSystem)?;
        if q.iter().any(|x| !x.is_finite()) {
            return Err(GraphError::SingularSystem);
        }
        let residual = (&lb * &q - &ones).amax();
        if residual > 1e-8 * (1.0 + lb.amax() * q.amax()) {
            return Err(GraphError::SingularSystem);
        }
        if let Some(i) = (0..n).find(|&i| q[i] <= 0.0) {
            return Err(GraphError::CertificateViolation(format!(
                "q[{i}] = {} is not positive",
                q[i]
            )));
        }

        let p_diag = q.map(|qi| 1.0 / qi);
        // pi[(i, j)] = p_i * lb_ij + p_j * lb_ji is symmetric bit-for-bit.
        let pi_matrix = DMatrix::from_fn(n, n, |i, j| {
            p_diag[i] * lb[(i, j)] + p_diag[j] * lb[(j, i)]
        });
        let pi_eigs = pi_matrix.symmetric_eigenvalues();
        let (pi_eig_min, pi_eig_max) = min_max(&pi_eigs);
        if !(pi_eig_min > PD_REL_TOL * pi_eig_max && pi_eig_max > 0.0) {
            return Err(GraphError::CertificateViolation(format!(
                "Pi is not positive definite (eigenvalues in [{pi_eig_min}, {pi_eig_max}])"
            )));
        }

        let m_matrix_offdiag_ok =
            (0..n).all(|i| (0..n).all(|j| i == j || lb[(i, j)] <= 0.0));
        let sym_eigs =
            DMatrix::from_fn(n, n, |i, j| 0.5 * (lb[(i, j)] + lb[(j, i)])).symmetric_eigenvalues();
        let (sym_min, sym_max) = min_max(&sym_eigs);
        let m_matrix_sym_pd = sym_min > PD_REL_TOL * sym_max && sym_max > 0.0;

        let plb = DMatrix::from_fn(n, n, |i, j| p_diag[i] * lb[(i, j)]);
        let singulars = plb.singular_values();
        let (sigma_min_plb, sigma_max_plb) = min_max(&singulars);

        Ok(GraphCertificates {
            laplacian,
            l_plus_b: lb,
            q,
            p_diag,
            pi_matrix,
            pi_eig_min,
            pi_eig_max,
            sigma_min_plb,
            sigma_max_plb,
            strongly_connected,
            m_matrix_offdiag_ok,
            m_matrix_sym_pd,
        })
    }
}

fn n_of(m: &DMatrix<f64>) -> usize {
    m.nrows()
}

fn min_max(v: &DVector<f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in v.iter() {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    (lo, hi)
}

/// Verified spectral data for a pinned interaction graph.
#[derive(Debug, Clone)]
pub struct GraphCertificates {
    pub laplacian: DMatrix<f64>,
    pub l_plus_b: DMatrix<f64>,
    pub q: DVector<f64>,
    pub p_diag: DVector<f64>,
    pub pi_matrix: DMatrix<f64>,
    pub pi_eig_min: f64,
    pub pi_eig_max: f64,
    pub sigma_min_plb: f64,
    pub sigma_max_plb: f64,
    pub strongly_connected: bool,
    pub m_matrix_offdiag_ok: bool,
    pub m_matrix_sym_pd: bool,
}

impl GraphCertificates {
    pub fn gain_thresholds(&self) -> GainThresholds {
        GainThresholds {
            k1_min: 0.5,
            k2_min: (1.0 + self.sigma_max_plb) / self.sigma_min_plb,
            k4_min: self.sigma_max_plb / 2.0,
            sigma_min_plb: self.sigma_min_plb,
            sigma_max_plb: self.sigma_max_plb,
        }
    }
}

/// Lower bounds on the controller gains derived from the certificates.
/// `k3`'s bound depends on the chosen `k2`, so it is exposed as a function.
#[derive(Debug, Clone, Copy)]
pub struct GainThresholds {
    pub k1_min: f64,
    pub k2_min: f64,
    pub k4_min: f64,
    pub sigma_min_plb: f64,
    pub sigma_max_plb: f64,
}

impl GainThresholds {
    pub fn k3_min(&self, k2: f64) -> f64 {
        k2 / (2.0 * self.sigma_min_plb)
    }

    /// Strict-inequality pass/fail for a candidate gain set.
    pub fn check(&self, k1: f64, k2: f64, k3: f64, k4: f64) -> GainCheck {
        GainCheck {
            k1_ok: k1 > self.k1_min,
            k2_ok: k2 > self.k2_min,
            k3_ok: k3 > self.k3_min(k2),
            k4_ok: k4 > self.k4_min,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GainCheck {
    pub k1_ok: bool,
    pub k2_ok: bool,
    pub k3_ok: bool,
    pub k4_ok: bool,
}

impl GainCheck {
    pub fn all_ok(&self) -> bool {
        self.k1_ok && self.k2_ok && self.k3_ok && self.k4_ok
    }
}

/// The five-agent unit-weight graph used by the bundled pentagon scenario:
/// edges 5->1, 1->2, 1->3, 2->3, 3->4, 5->4, 3->5, leader pinned to agent 1.
pub fn pentagon_graph() -> WeightedDigraph {
    WeightedDigraph::from_unit_edges(
        5,
        &[(4, 0), (0, 1), (0, 2), (1, 2), (2, 3), (4, 3), (2, 4)],
        &[0],
    )
    .expect("static graph is well-formed")
}
