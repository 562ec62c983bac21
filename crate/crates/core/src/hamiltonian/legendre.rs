use serde::{Deserialize, Serialize};

use super::{face_hamiltonian, grad_h, h, hess_h};
use crate::error::{Error, Result};
use crate::face::FaceLabel;
use crate::linalg::{cholesky_solve, dot, norm_inf, Matrix};
use crate::netmodel::Network;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegendreOptions {
    /// Smoothing widths for `max(h, 0)`, visited in order.
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_factor: f64,
    pub max_newton: usize,
    /// `L = +inf` is declared once an iterate leaves this box while the
    /// objective is still improving.
    pub divergence_radius: f64,
}

impl Default for LegendreOptions {
    fn default() -> Self {
        LegendreOptions {
            eps_start: 1.0,
            eps_end: 1e-12,
            eps_factor: 0.1,
            max_newton: 200,
            divergence_radius: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegendreValue {
    /// `+inf` when the supremum diverges.
    pub value: f64,
    /// Maximizer, or the last iterate when `infinite`.
    pub theta: Vec<f64>,
    pub infinite: bool,
}

/// Smoothed `max(h, 0)` and its first two derivatives.
fn softplus(h: f64, eps: f64) -> (f64, f64, f64) {
    let z = h / eps;
    let v = h.max(0.0) + eps * (-z.abs()).exp().ln_1p();
    let s = if z >= 0.0 { 1.0 / (1.0 + (-z).exp()) } else { z.exp() / (1.0 + z.exp()) };
    (v, s, s * (1.0 - s) / eps)
}

struct Smoothed<'a> {
    net: &'a Network,
    face: FaceLabel,
    y: &'a [f64],
}

impl Smoothed<'_> {
    /// `H_{J,eps}(theta) - theta . y`, to be minimized.
    fn value(&self, theta: &[f64], eps: f64) -> Option<f64> {
        let hv = h(theta, self.net).ok()?;
        let mut f = -dot(theta, self.y);
        for k in 0..self.net.k() {
            f += theta[k].exp_m1() * self.net.lambda[k];
            let hk = if self.face.contains(k) { softplus(hv[k], eps).0 } else { hv[k] };
            f += hk * self.net.mu[k];
        }
        f.is_finite().then_some(f)
    }

    fn derivatives(&self, theta: &[f64], eps: f64) -> Option<(Vec<f64>, Matrix)> {
        let k = self.net.k();
        let hv = h(theta, self.net).ok()?;
        let g = grad_h(theta, self.net).ok()?;
        let hs = hess_h(theta, self.net);
        let mut grad: Vec<f64> = (0..k).map(|i| theta[i].exp() * self.net.lambda[i] - self.y[i]).collect();
        let mut hess = Matrix::zeros(k, k);
        for i in 0..k {
            hess[(i, i)] += theta[i].exp() * self.net.lambda[i];
        }
        for l in 0..k {
            let (w1, w2) = if self.face.contains(l) {
                let (_, s1, s2) = softplus(hv[l], eps);
                (s1, s2)
            } else {
                (1.0, 0.0)
            };
            let mu = self.net.mu[l];
            for i in 0..k {
                grad[i] += mu * w1 * g[(l, i)];
                for j in 0..k {
                    hess[(i, j)] += mu * (w1 * hs[l][(i, j)] + w2 * g[(l, i)] * g[(l, j)]);
                }
            }
        }
        (grad.iter().all(|v| v.is_finite()) && hess.is_finite()).then_some((grad, hess))
    }
}

/// Newton direction, regularized until the system is positive definite.
fn newton_step(grad: &[f64], hess: &Matrix) -> Vec<f64> {
    let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
    let scale = hess.max_abs().max(1e-300);
    let mut tau = 0.0;
    loop {
        let mut a = hess.clone();
        for i in 0..a.rows() {
            a[(i, i)] += tau;
        }
        if let Some(d) = cholesky_solve(&a, &rhs) {
            if d.iter().all(|v| v.is_finite()) {
                return d;
            }
        }
        tau = if tau == 0.0 { 1e-12 * scale } else { tau * 10.0 };
        if tau > 1e12 * scale {
            return rhs;
        }
    }
}

enum Stage {
    Converged,
    Stalled,
    Diverged,
}

/// `L_J(y) = sup_theta (theta . y - H_J(theta))`.
///
/// The positive parts are replaced by softplus functions whose width is
/// driven to zero; each smoothed problem is solved by damped Newton from the
/// previous maximizer, and the final value is evaluated with the exact `H_J`.
pub fn legendre_face(y: &[f64], face: FaceLabel, net: &Network, opts: &LegendreOptions) -> Result<LegendreValue> {
    let k = net.k();
    if y.len() != k {
        return Err(Error::DimensionMismatch(format!("target has {} entries, network has {k} nodes", y.len())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("y"));
    }
    let obj = Smoothed { net, face, y };
    let mut theta = vec![0.0; k];
    let mut eps = opts.eps_start;
    let mut last;
    loop {
        last = minimize_stage(&obj, &mut theta, eps, opts);
        if let Stage::Diverged = last {
            return Ok(LegendreValue { value: f64::INFINITY, theta, infinite: true });
        }
        if eps <= opts.eps_end {
            break;
        }
        eps = (eps * opts.eps_factor).max(opts.eps_end);
    }
    let value = dot(&theta, y) - face_hamiltonian(&theta, face, net)?;
    if let Stage::Stalled = last {
        // a stalled line search is acceptable only if no direction still improves
        let (g, _) = obj
            .derivatives(&theta, eps)
            .ok_or_else(|| Error::NoConvergence("derivatives not finite".into()))?;
        if norm_inf(&g) > 1e-6 * (1.0 + norm_inf(y)) {
            return Err(Error::NoConvergence(format!(
                "conjugate search stalled with gradient norm {:.3e}",
                norm_inf(&g)
            )));
        }
    }
    Ok(LegendreValue { value, theta, infinite: false })
}

fn minimize_stage(obj: &Smoothed<'_>, theta: &mut Vec<f64>, eps: f64, opts: &LegendreOptions) -> Stage {
    let Some(mut f) = obj.value(theta, eps) else {
        return Stage::Stalled;
    };
    for _ in 0..opts.max_newton {
        let Some((g, hess)) = obj.derivatives(theta, eps) else {
            return Stage::Stalled;
        };
        let d = newton_step(&g, &hess);
        let slope = dot(&g, &d);
        if -slope <= 1e-24 * (1.0 + f.abs()) || norm_inf(&g) <= 1e-14 * (1.0 + norm_inf(obj.y)) {
            return Stage::Converged;
        }
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-16 {
            let trial: Vec<f64> = theta.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            if let Some(ft) = obj.value(&trial, eps) {
                if ft <= f + 1e-4 * t * slope {
                    accepted = Some((trial, ft));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((next, fnext)) = accepted else {
            return if -slope <= 1e-12 * (1.0 + f.abs()) { Stage::Converged } else { Stage::Stalled };
        };
        let improved = fnext < f;
        *theta = next;
        f = fnext;
        if improved && norm_inf(theta) > opts.divergence_radius {
            return Stage::Diverged;
        }
    }
    Stage::Converged
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mm1() -> Network {
        Network::from_rows(&[1.0], &[2.0], &[vec![0.0]]).unwrap()
    }

    fn tandem() -> Network {
        Network::from_rows(&[1.0, 0.5], &[3.0, 4.0], &[vec![0.0, 0.5], vec![0.0, 0.0]]).unwrap()
    }

    #[test]
    fn mm1_unit_drift() {
        let v = legendre_face(&[1.0], FaceLabel::EMPTY, &mm1(), &LegendreOptions::default()).unwrap();
        assert!(!v.infinite);
        assert!((v.value - 2f64.ln()).abs() < 1e-10, "{}", v.value);
        assert!((v.theta[0] - 2f64.ln()).abs() < 1e-8);
    }

    #[test]
    fn zero_at_law_of_large_numbers_drift() {
        let net = tandem();
        // y = grad H_0(0) = lambda + P^T mu - mu
        let y = [1.0 - 3.0, 0.5 + 0.5 * 3.0 - 4.0];
        let v = legendre_face(&y, FaceLabel::EMPTY, &net, &LegendreOptions::default()).unwrap();
        assert!(v.value.abs() < 1e-12);
    }

    #[test]
    fn boundary_face_values() {
        let opts = LegendreOptions::default();
        let full = FaceLabel::full(1);
        let v = legendre_face(&[0.0], full, &mm1(), &opts).unwrap();
        assert!(v.value.abs() < 1e-12, "{}", v.value);
        // above the arrival rate only the arrival term is active: L = pi(y / lambda) lambda
        let v = legendre_face(&[2.0], full, &mm1(), &opts).unwrap();
        assert!((v.value - (2.0 * 2f64.ln() - 1.0)).abs() < 1e-10, "{}", v.value);
        // drifts between lambda - mu and lambda are free on the boundary
        let v = legendre_face(&[0.5], full, &mm1(), &opts).unwrap();
        assert!(v.value.abs() < 1e-10, "{}", v.value);
    }

    #[test]
    fn divergent_supremum_detected() {
        // no arrivals: theta . y - H_0 grows without bound as theta -> +inf
        let net = Network::from_rows(&[0.0], &[2.0], &[vec![0.0]]).unwrap();
        let v = legendre_face(&[1.0], FaceLabel::EMPTY, &net, &LegendreOptions::default()).unwrap();
        assert!(v.infinite);
        assert_eq!(v.value, f64::INFINITY);
    }
}
