//! Node functions `h_k`, face Hamiltonians `H_J`, their (sub)gradients and
//! the face-local cost `L_J`.
//!
//! For a momentum `theta`,
//!
//! ```text
//! h_k(theta) = e^{-theta_k} (sum_l (e^{theta_l} - 1) p_kl + 1) - 1
//! H_J(theta) = sum_k (e^{theta_k} - 1) lambda_k
//!            + sum_{k in J} mu_k max(h_k, 0) + sum_{k not in J} mu_k h_k
//! ```
//!
//! and `L_J` is the convex conjugate of `H_J`. [`legendre_face`] evaluates it
//! through the conjugate; [`primal_oracle`] minimizes the original
//! rate expression over arrival, service and routing intensities and is kept
//! independent of the Hamiltonian code so the two can be cross-checked.

mod legendre;
mod oracle;

pub use legendre::{legendre_face, LegendreOptions, LegendreValue};
pub use oracle::{pi, primal_oracle, OracleOptions, OracleValue, PrimalPoint};

use crate::error::{Error, Result};
use crate::face::FaceLabel;
use crate::linalg::Matrix;
use crate::netmodel::Network;

/// Magnitude below which `h_l(theta)` counts as zero and `alpha_l` is free.
pub const KINK_TOLERANCE: f64 = 1e-10;

fn check_dim(theta: &[f64], net: &Network) -> Result<()> {
    if theta.len() != net.k() {
        return Err(Error::DimensionMismatch(format!(
            "momentum has {} entries for a {}-node network",
            theta.len(),
            net.k()
        )));
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("momentum"));
    }
    Ok(())
}

fn exps(theta: &[f64]) -> Result<Vec<f64>> {
    let e: Vec<f64> = theta.iter().map(|t| t.exp()).collect();
    if e.iter().any(|v| !v.is_finite()) || theta.iter().any(|t| (-t).exp().is_infinite()) {
        return Err(Error::Overflow("exp(theta)"));
    }
    Ok(e)
}

/// `h(theta)` for every node.
pub fn h(theta: &[f64], net: &Network) -> Result<Vec<f64>> {
    check_dim(theta, net)?;
    exps(theta)?;
    let k = net.k();
    let em1: Vec<f64> = theta.iter().map(|t| t.exp_m1()).collect();
    let out: Vec<f64> = (0..k)
        .map(|i| {
            let s: f64 = (0..k).map(|l| em1[l] * net.p(i, l)).sum();
            (-theta[i]).exp() * s + (-theta[i]).exp_m1()
        })
        .collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Overflow("h"));
    }
    Ok(out)
}

/// Jacobian of `h`: entry `(k, l)` is `d h_k / d theta_l`.
pub fn grad_h(theta: &[f64], net: &Network) -> Result<Matrix> {
    check_dim(theta, net)?;
    let e = exps(theta)?;
    let k = net.k();
    let mut g = Matrix::zeros(k, k);
    for i in 0..k {
        let inv = 1.0 / e[i];
        let mut diag = net.exit_prob(i);
        for l in 0..k {
            if l != i {
                let w = inv * e[l] * net.p(i, l);
                g[(i, l)] = w;
                diag += e[l] * net.p(i, l);
            }
        }
        g[(i, i)] = -inv * diag;
    }
    if !g.is_finite() {
        return Err(Error::Overflow("grad h"));
    }
    Ok(g)
}

/// Hessians of every `h_k`; each is a sum of `w a a^T` over the exponential
/// terms of `h_k`.
pub(crate) fn hess_h(theta: &[f64], net: &Network) -> Vec<Matrix> {
    let k = net.k();
    (0..k)
        .map(|i| {
            let mut hm = Matrix::zeros(k, k);
            for l in 0..k {
                if l != i && net.p(i, l) > 0.0 {
                    let w = net.p(i, l) * (theta[l] - theta[i]).exp();
                    hm[(l, l)] += w;
                    hm[(i, i)] += w;
                    hm[(l, i)] -= w;
                    hm[(i, l)] -= w;
                }
            }
            hm[(i, i)] += net.exit_prob(i) * (-theta[i]).exp();
            hm
        })
        .collect()
}

/// `H_J(theta)`; the empty face gives `H_0`.
pub fn face_hamiltonian(theta: &[f64], face: FaceLabel, net: &Network) -> Result<f64> {
    let hv = h(theta, net)?;
    let mut total = 0.0;
    for k in 0..net.k() {
        total += theta[k].exp_m1() * net.lambda[k];
        let hk = if face.contains(k) { hv[k].max(0.0) } else { hv[k] };
        total += hk * net.mu[k];
    }
    if !total.is_finite() {
        return Err(Error::Overflow("H_J"));
    }
    Ok(total)
}

pub fn h0(theta: &[f64], net: &Network) -> Result<f64> {
    face_hamiltonian(theta, FaceLabel::EMPTY, net)
}

/// Gradient of `H_0`.
pub fn grad_h0(theta: &[f64], net: &Network) -> Result<Vec<f64>> {
    combine_gradient(theta, net, &vec![1.0; net.k()])
}

fn combine_gradient(theta: &[f64], net: &Network, weights: &[f64]) -> Result<Vec<f64>> {
    let g = grad_h(theta, net)?;
    let k = net.k();
    Ok((0..k)
        .map(|i| {
            theta[i].exp() * net.lambda[i]
                + (0..k).map(|l| weights[l] * g[(l, i)] * net.mu[l]).sum::<f64>()
        })
        .collect())
}

/// The weights forced by the sign of `h_l` for `l` in `J`: `Some(1)` where
/// `h_l > 0`, `Some(0)` where `h_l < 0`, `None` where `alpha_l` is free.
pub fn forced_alpha(theta: &[f64], face: FaceLabel, net: &Network) -> Result<Vec<Option<f64>>> {
    let hv = h(theta, net)?;
    Ok(face
        .indices()
        .map(|l| {
            if hv[l] > KINK_TOLERANCE {
                Some(1.0)
            } else if hv[l] < -KINK_TOLERANCE {
                Some(0.0)
            } else {
                None
            }
        })
        .collect())
}

/// The element of `dH_J(theta)` selected by `alpha` (one weight per index of
/// `J`, in increasing index order).
pub fn subgrad_face(theta: &[f64], face: FaceLabel, alpha: &[f64], net: &Network) -> Result<Vec<f64>> {
    if alpha.len() != face.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} alpha weights for a face of size {}",
            alpha.len(),
            face.len()
        )));
    }
    let forced = forced_alpha(theta, face, net)?;
    let hv = h(theta, net)?;
    let mut weights = vec![1.0; net.k()];
    for ((l, &a), f) in face.indices().zip(alpha).zip(&forced) {
        let hl = hv[l];
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::InvalidAlpha { index: l, alpha: a, h: hl });
        }
        if let Some(fa) = f {
            if (a - fa).abs() > 1e-12 {
                return Err(Error::InvalidAlpha { index: l, alpha: a, h: hl });
            }
        }
        weights[l] = a;
    }
    combine_gradient(theta, net, &weights)
}
