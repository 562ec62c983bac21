//! Node momenta `theta^(m)`, the global momentum `theta*` and the per-face
//! momenta `theta~^(J)` with their loads, reflection intensities and
//! essentiality flags.
//!
//! Everything here is linear algebra; the nonlinear equations `h_k = 0`,
//! `H_0 = 0` are evaluated only afterwards, as checks.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::face::FaceLabel;
use crate::hamiltonian::{h, h0};
use crate::linalg::{norm_inf, Matrix};
use crate::matident::{column_without, delete, delete_one};
use crate::netmodel::{Network, TrafficSolution, ValidatedNetwork};

/// Largest `K` for which [`MomentaTable`] materializes every face.
pub const MATERIALIZE_MAX_K: usize = 16;

/// Boundary slack of the essentiality test.
pub const ESSENTIAL_TOLERANCE: f64 = 1e-12;

const CHECK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeMomentum {
    pub m: usize,
    pub theta: Vec<f64>,
    /// `a_ml`, with `a_mm = 1`.
    pub a_row: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaceMomenta {
    pub face: FaceLabel,
    pub theta_tilde: Vec<f64>,
    /// One load per index of the face, in increasing index order.
    pub rho_tilde: Vec<f64>,
    /// Zero off the face.
    pub phi: Vec<f64>,
    /// `alpha_l = rho_l / rho~_l` for `l` in the face, one per index.
    pub alpha: Vec<f64>,
    pub essential: bool,
    /// Essential only within [`ESSENTIAL_TOLERANCE`] of the boundary.
    pub marginal: bool,
}

impl FaceMomenta {
    /// `rho~_l` for a node of the face.
    pub fn rho_tilde_of(&self, l: usize) -> Option<f64> {
        self.face.indices().position(|i| i == l).map(|p| self.rho_tilde[p])
    }
}

fn invariant(cond: bool, what: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Invariant(what()))
    }
}

fn rate_scale(net: &Network) -> f64 {
    net.lambda.iter().chain(&net.mu).sum::<f64>().max(1.0)
}

/// `theta^(m)` from the reduced linear system for `a_m.` and the closed form
/// for `e^{theta_m}`; checked against `a_ml = c_ml / c_mm`, `h_k = 0` for
/// `k != m`, `H_0 = 0` and `e^{-theta_m} = rho_m`.
pub fn node_momentum(m: usize, traffic: &TrafficSolution, net: &ValidatedNetwork) -> Result<NodeMomentum> {
    let k = net.k();
    if m >= k {
        return Err(Error::IndexOutOfRange { index: m, dim: k });
    }
    let b = Matrix::identity(k).sub(&net.routing);
    let reduced = delete_one(&b, m, m);
    let rhs = column_without(&net.routing, m);
    let solved = if k > 1 { reduced.solve(&rhs)? } else { Vec::new() };
    let mut a_row = Vec::with_capacity(k);
    let mut it = solved.into_iter();
    for l in 0..k {
        a_row.push(if l == m { 1.0 } else { it.next().unwrap_or(0.0) });
    }
    for l in 0..k {
        let diff = (a_row[l] - traffic.a[(m, l)]).abs();
        invariant(diff <= CHECK_TOLERANCE * (1.0 + traffic.a[(m, l)].abs()), || {
            format!("a[{m},{l}] = {} disagrees with c_ml/c_mm = {}", a_row[l], traffic.a[(m, l)])
        })?;
    }

    let num = 1.0 - (0..k).map(|l| a_row[l] * net.p(m, l)).sum::<f64>();
    let den: f64 = (0..k).map(|l| a_row[l] * net.lambda[l]).sum();
    if !(num > 0.0 && den > 0.0) {
        return Err(Error::SingularSystem(format!("node {m}: momentum ratio {num}/{den}")));
    }
    let theta_m = (num / den * net.mu[m]).ln();
    let em1 = theta_m.exp_m1();
    let theta: Vec<f64> = (0..k)
        .map(|l| if l == m { theta_m } else { (a_row[l] * em1).ln_1p() })
        .collect();

    let hv = h(&theta, net)?;
    for (i, hi) in hv.iter().enumerate() {
        if i != m {
            invariant(hi.abs() <= CHECK_TOLERANCE, || format!("h_{i}(theta^({m})) = {hi:e}"))?;
        }
    }
    let h0v = h0(&theta, net)?;
    invariant(h0v.abs() <= CHECK_TOLERANCE * rate_scale(net), || format!("H_0(theta^({m})) = {h0v:e}"))?;
    let gap = ((-theta_m).exp() - traffic.rho[m]).abs();
    invariant(gap <= CHECK_TOLERANCE, || format!("e^(-theta^({m})_{m}) differs from rho by {gap:e}"))?;
    Ok(NodeMomentum { m, theta, a_row })
}

/// `theta*_m = -ln rho_m`, cross-checked against the diagonal of the node
/// momenta and `H_0(theta*) = 0`.
pub fn theta_star(traffic: &TrafficSolution, nodes: &[NodeMomentum], net: &Network) -> Result<Vec<f64>> {
    let ts = traffic.theta_star();
    for node in nodes {
        let d = (ts[node.m] - node.theta[node.m]).abs();
        invariant(d <= CHECK_TOLERANCE * (1.0 + ts[node.m].abs()), || {
            format!("theta*_{} = {} but theta^(m)_m = {}", node.m, ts[node.m], node.theta[node.m])
        })?;
    }
    let v = h0(&ts, net)?;
    invariant(v.abs() <= CHECK_TOLERANCE * rate_scale(net), || format!("H_0(theta*) = {v:e}"))?;
    Ok(ts)
}

/// Face loads from `(I - P)_{JJ} x = P_{J,J^c} (rho^{-1} - 1)_{J^c}`,
/// `rho~_l = 1 / (1 + x_l)`.
pub fn face_momenta(face: FaceLabel, traffic: &TrafficSolution, net: &ValidatedNetwork) -> Result<FaceMomenta> {
    let k = net.k();
    if !face.is_subset_of(FaceLabel::full(k)) {
        return Err(Error::IndexOutOfRange { index: 64 - face.bits().leading_zeros() as usize - 1, dim: k });
    }
    let inside = face.to_vec();
    let outside = face.complement(k).to_vec();
    let theta_star = traffic.theta_star();
    let excess: Vec<f64> = traffic.rho.iter().map(|r| 1.0 / r - 1.0).collect();

    let b = Matrix::identity(k).sub(&net.routing);
    let block = delete(&b, &outside, &outside)?;
    let coupling = delete(&net.routing, &outside, &inside)?;
    let rhs = coupling.mul_vec(&outside.iter().map(|&l| excess[l]).collect::<Vec<_>>());
    let x = if inside.is_empty() { Vec::new() } else { block.solve(&rhs)? };

    let mut theta_tilde = theta_star.clone();
    let mut rho_tilde = Vec::with_capacity(inside.len());
    let mut alpha = Vec::with_capacity(inside.len());
    let mut phi = vec![0.0; k];
    let mut essential = true;
    let mut marginal = false;
    for (&l, &xl) in inside.iter().zip(&x) {
        if xl < -ESSENTIAL_TOLERANCE {
            return Err(Error::NegativeFaceLoad { face, value: xl });
        }
        let xl = xl.max(0.0);
        theta_tilde[l] = xl.ln_1p();
        let rt = 1.0 / (1.0 + xl);
        rho_tilde.push(rt);
        alpha.push(traffic.rho[l] / rt);
        let slack = excess[l] - xl;
        phi[l] = slack * traffic.nu[l];
        let tol = ESSENTIAL_TOLERANCE * (1.0 + excess[l]);
        if slack < -tol {
            essential = false;
        } else if slack <= tol {
            marginal = true;
        }
    }
    let hv = h(&theta_tilde, net)?;
    for &l in &inside {
        invariant(hv[l].abs() <= CHECK_TOLERANCE, || format!("h_{l}(theta~^({face})) = {:e}", hv[l]))?;
    }
    Ok(FaceMomenta { face, theta_tilde, rho_tilde, phi, alpha, essential, marginal: essential && marginal })
}

/// Essentiality of the half-axis face `{1..K} \ {m}`:
/// `rho_l^{-1} - 1 >= a_ml (rho_m^{-1} - 1)` for every `l != m`.
pub fn half_axis_check(m: usize, traffic: &TrafficSolution) -> bool {
    let k = traffic.rho.len();
    let em = 1.0 / traffic.rho[m] - 1.0;
    (0..k).filter(|&l| l != m).all(|l| {
        let el = 1.0 / traffic.rho[l] - 1.0;
        el - traffic.a[(m, l)] * em >= -ESSENTIAL_TOLERANCE * (1.0 + el)
    })
}

/// `max |C - I - P^T C|`.
pub fn c_identity_residual(traffic: &TrafficSolution, net: &Network) -> f64 {
    let k = net.k();
    let rhs = Matrix::identity(k).add(&net.routing.transpose().matmul(&traffic.c));
    traffic.c.sub(&rhs).max_abs()
}

/// Node momenta, `theta*` and the face momenta of one network.
#[derive(Debug, Clone, Serialize)]
pub struct MomentaTable {
    pub theta_star: Vec<f64>,
    pub node_momenta: Vec<NodeMomentum>,
    /// Indexed by face bits; `None` when `K` exceeds [`MATERIALIZE_MAX_K`].
    faces: Option<Vec<FaceMomenta>>,
    #[serde(skip)]
    network: ValidatedNetwork,
    #[serde(skip)]
    traffic: TrafficSolution,
}

impl MomentaTable {
    pub fn build(net: &ValidatedNetwork, traffic: &TrafficSolution) -> Result<MomentaTable> {
        let k = net.k();
        let node_momenta = (0..k).map(|m| node_momentum(m, traffic, net)).collect::<Result<Vec<_>>>()?;
        let theta_star = theta_star(traffic, &node_momenta, net)?;
        let faces = if k <= MATERIALIZE_MAX_K {
            let all: Vec<FaceLabel> = FaceLabel::all_faces(k).collect();
            Some(all.into_par_iter().map(|j| face_momenta(j, traffic, net)).collect::<Result<Vec<_>>>()?)
        } else {
            None
        };
        Ok(MomentaTable { theta_star, node_momenta, faces, network: net.clone(), traffic: traffic.clone() })
    }

    pub fn network(&self) -> &ValidatedNetwork {
        &self.network
    }

    pub fn traffic(&self) -> &TrafficSolution {
        &self.traffic
    }

    pub fn k(&self) -> usize {
        self.theta_star.len()
    }

    pub fn is_materialized(&self) -> bool {
        self.faces.is_some()
    }

    /// Face momenta, from the table or computed on demand.
    pub fn face(&self, face: FaceLabel) -> Result<FaceMomenta> {
        match &self.faces {
            Some(all) => all
                .get(face.bits() as usize)
                .cloned()
                .ok_or(Error::IndexOutOfRange { index: face.bits() as usize, dim: all.len() }),
            None => face_momenta(face, &self.traffic, &self.network),
        }
    }

    /// Every face in increasing bit order; errors above `limit` faces.
    pub fn all_faces(&self, limit: u128) -> Result<Vec<FaceMomenta>> {
        let count = 1u128 << self.k();
        if count > limit {
            return Err(Error::TooManyFaces { faces: count, limit });
        }
        match &self.faces {
            Some(all) => Ok(all.clone()),
            None => FaceLabel::all_faces(self.k()).map(|j| self.face(j)).collect(),
        }
    }

    /// `max_J |H_0(theta~^(J))|` over every face.
    pub fn max_face_h0(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for j in FaceLabel::all_faces(self.k()) {
            worst = worst.max(h0(&self.face(j)?.theta_tilde, &self.network)?.abs());
        }
        Ok(worst)
    }
}

/// `|theta~^({1..K} \ {m}) - theta^(m)|_inf`.
pub fn half_axis_consistency(table: &MomentaTable, m: usize) -> Result<f64> {
    let f = table.face(FaceLabel::all_but(table.k(), m))?;
    let node = &table.node_momenta[m];
    Ok(norm_inf(&f.theta_tilde.iter().zip(&node.theta).map(|(a, b)| a - b).collect::<Vec<_>>()))
}
