//! Direct minimization of the rate expression over arrival, service and
//! routing intensities.
//!
//! Variables are the service intensities `d_k` and the flows
//! `f_kl = rho_route_kl d_k` on the support of `P`. With `e_k = d_k - sum_l f_kl`
//! (the exit flow) and `a = y + d - sum_k f_k.`, every term becomes a
//! perspective of `pi`:
//!
//! ```text
//! lambda_k pi(a_k / lambda_k)          arrivals
//! mu_k pi(d_k / mu_k)                  service, k not in J
//! mu_k pi(d_k / mu_k) [d_k > mu_k]     service, k in J
//! f ln(f / (p d)) - f + p d            each routing and exit flow
//! ```
//!
//! so the problem is jointly convex. The boundary service term is continuous
//! and once differentiable because `pi(1) = 0`. A log-barrier interior point
//! method is run from random strictly feasible starts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::face::FaceLabel;
use crate::linalg::{cholesky_solve, dot, Matrix};
use crate::netmodel::Network;

/// `pi(u) = u ln u - u + 1` with `pi(0) = 1`; `+inf` for negative `u`.
pub fn pi(u: f64) -> f64 {
    if u < 0.0 {
        f64::INFINITY
    } else if u == 0.0 {
        1.0
    } else {
        u * u.ln() - u + 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub starts: usize,
    pub seed: u64,
    /// Final barrier weight; the duality gap is at most `constraints / t_final`.
    pub t_final: f64,
    pub max_newton: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions { starts: 24, seed: 0x5eed, t_final: 1e12, max_newton: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalPoint {
    pub a: Vec<f64>,
    pub d: Vec<f64>,
    pub rho_route: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleValue {
    pub value: f64,
    pub point: PrimalPoint,
    /// Starts whose final barrier stage converged.
    pub converged_starts: usize,
}

#[derive(Debug, Clone)]
struct Affine {
    coef: Vec<(usize, f64)>,
    constant: f64,
}

impl Affine {
    fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.coef.iter().map(|&(i, c)| c * x[i]).sum::<f64>()
    }

    fn add_grad(&self, g: &mut [f64], w: f64) {
        for &(i, c) in &self.coef {
            g[i] += w * c;
        }
    }

    fn add_outer(&self, other: &Affine, hess: &mut Matrix, w: f64) {
        for &(i, ci) in &self.coef {
            for &(j, cj) in &other.coef {
                hess[(i, j)] += w * ci * cj;
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Term {
    /// `r pi(u / r)`.
    Entropy { u: Affine, r: f64 },
    /// `r pi(u / r)` for `u > r`, zero otherwise.
    Hinge { u: Affine, r: f64 },
    /// `u ln(u / (p v)) - u + p v`.
    Perspective { u: Affine, v: Affine, p: f64 },
}

struct Problem {
    n: usize,
    terms: Vec<Term>,
    /// Affine forms required to stay strictly positive.
    positive: Vec<Affine>,
    /// Variable index of each free `d_k`, or the flows that sum to it.
    d_forms: Vec<Affine>,
    a_forms: Vec<Affine>,
    flow_index: Vec<(usize, usize)>,
}

fn entropy(u: f64, r: f64) -> f64 {
    if u <= 0.0 {
        r
    } else {
        u * (u / r).ln() - u + r
    }
}

impl Problem {
    fn build(y: &[f64], face: FaceLabel, net: &Network) -> Problem {
        let k = net.k();
        let mut n = 0;
        let mut flow_index = Vec::new();
        let mut flow_var = vec![vec![None; k]; k];
        for i in 0..k {
            for l in 0..k {
                if net.p(i, l) > 0.0 {
                    flow_var[i][l] = Some(n);
                    flow_index.push((i, l));
                    n += 1;
                }
            }
        }
        let mut terms = Vec::new();
        let mut positive = Vec::new();
        let mut d_forms = Vec::with_capacity(k);
        for (i, row) in flow_var.iter().enumerate() {
            let outflow: Vec<(usize, f64)> = row.iter().flatten().map(|&v| (v, 1.0)).collect();
            if net.exit_prob(i) > 0.0 {
                let d = Affine { coef: vec![(n, 1.0)], constant: 0.0 };
                let mut exit = d.clone();
                exit.coef.extend(outflow.iter().map(|&(v, _)| (v, -1.0)));
                terms.push(Term::Perspective { u: exit.clone(), v: d.clone(), p: net.exit_prob(i) });
                positive.push(exit);
                d_forms.push(d);
                n += 1;
            } else {
                d_forms.push(Affine { coef: outflow, constant: 0.0 });
            }
        }
        for &(i, l) in &flow_index {
            let f = Affine { coef: vec![(flow_var[i][l].unwrap(), 1.0)], constant: 0.0 };
            terms.push(Term::Perspective { u: f.clone(), v: d_forms[i].clone(), p: net.p(i, l) });
            positive.push(f);
        }
        let mut a_forms = Vec::with_capacity(k);
        for l in 0..k {
            let mut a = d_forms[l].clone();
            a.constant += y[l];
            for row in &flow_var {
                if let Some(v) = row[l] {
                    a.coef.push((v, -1.0));
                }
            }
            terms.push(Term::Entropy { u: a.clone(), r: net.lambda[l] });
            positive.push(a.clone());
            a_forms.push(a);
        }
        for i in 0..k {
            let u = d_forms[i].clone();
            let r = net.mu[i];
            terms.push(if face.contains(i) { Term::Hinge { u, r } } else { Term::Entropy { u, r } });
        }
        Problem { n, terms, positive, d_forms, a_forms, flow_index }
    }

    fn objective(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| match t {
                Term::Entropy { u, r } => entropy(u.eval(x), *r),
                Term::Hinge { u, r } => {
                    let uv = u.eval(x);
                    if uv > *r {
                        entropy(uv, *r)
                    } else {
                        0.0
                    }
                }
                Term::Perspective { u, v, p } => {
                    let (uv, vv) = (u.eval(x), v.eval(x));
                    if uv <= 0.0 {
                        p * vv
                    } else {
                        uv * (uv / (p * vv)).ln() - uv + p * vv
                    }
                }
            })
            .sum()
    }

    /// Barrier objective `t F(x) - sum ln(c_i(x))`, `None` outside the domain.
    fn barrier(&self, x: &[f64], t: f64) -> Option<f64> {
        let mut logs = 0.0;
        for c in &self.positive {
            let v = c.eval(x);
            if v <= 0.0 || !v.is_finite() {
                return None;
            }
            logs += v.ln();
        }
        let f = t * self.objective(x) - logs;
        f.is_finite().then_some(f)
    }

    fn barrier_derivatives(&self, x: &[f64], t: f64) -> (Vec<f64>, Matrix) {
        let mut g = vec![0.0; self.n];
        let mut hm = Matrix::zeros(self.n, self.n);
        for term in &self.terms {
            match term {
                Term::Entropy { u, r } | Term::Hinge { u, r } => {
                    let uv = u.eval(x);
                    if matches!(term, Term::Hinge { .. }) && uv <= *r {
                        continue;
                    }
                    u.add_grad(&mut g, t * (uv / r).ln());
                    u.add_outer(u, &mut hm, t / uv);
                }
                Term::Perspective { u, v, p } => {
                    let (uv, vv) = (u.eval(x), v.eval(x));
                    u.add_grad(&mut g, t * (uv / (p * vv)).ln());
                    v.add_grad(&mut g, t * (p - uv / vv));
                    u.add_outer(u, &mut hm, t / uv);
                    u.add_outer(v, &mut hm, -t / vv);
                    v.add_outer(u, &mut hm, -t / vv);
                    v.add_outer(v, &mut hm, t * uv / (vv * vv));
                }
            }
        }
        for c in &self.positive {
            let v = c.eval(x);
            c.add_grad(&mut g, -1.0 / v);
            c.add_outer(c, &mut hm, 1.0 / (v * v));
        }
        (g, hm)
    }

    /// A strictly feasible point: draw positive arrivals above `y` and a
    /// routing matrix on the support of `P`, then solve for the service
    /// intensities, which stay positive because `(I - rho_route^T)^{-1} >= 0`.
    fn random_start(&self, y: &[f64], net: &Network, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
        let k = net.k();
        let mut route = Matrix::zeros(k, k);
        for i in 0..k {
            let w: Vec<f64> = (0..k).map(|l| net.p(i, l) * rng.random_range(-1.0f64..1.0).exp()).collect();
            let total: f64 = w.iter().sum();
            let q = net.exit_prob(i);
            let exit_w = if q > 0.0 { q * rng.random_range(-1.0f64..1.0).exp() } else { 0.0 };
            let norm = total + exit_w;
            if norm > 0.0 {
                for l in 0..k {
                    route[(i, l)] = w[l] / norm;
                }
            }
        }
        let slack: Vec<f64> = (0..k)
            .map(|l| y[l].min(0.0).abs() + net.lambda[l] * rng.random_range(-1.0f64..1.0).exp())
            .collect();
        let d = Matrix::identity(k).sub(&route.transpose()).solve(&slack).ok()?;
        let mut x = vec![0.0; self.n];
        for (i, form) in self.d_forms.iter().enumerate() {
            if let [(v, _)] = form.coef.as_slice() {
                if net.exit_prob(i) > 0.0 {
                    x[*v] = d[i];
                }
            }
        }
        for (idx, &(i, l)) in self.flow_index.iter().enumerate() {
            x[idx] = route[(i, l)] * d[i];
        }
        self.barrier(&x, 1.0).map(|_| x)
    }

    fn point(&self, x: &[f64], k: usize) -> PrimalPoint {
        let d: Vec<f64> = self.d_forms.iter().map(|f| f.eval(x)).collect();
        let a = self.a_forms.iter().map(|f| f.eval(x)).collect();
        let mut rho_route = Matrix::zeros(k, k);
        for (idx, &(i, l)) in self.flow_index.iter().enumerate() {
            rho_route[(i, l)] = x[idx] / d[i];
        }
        PrimalPoint { a, d, rho_route }
    }

    /// Barrier path from `x`; returns the final point and whether the last
    /// stage met its Newton decrement target.
    fn solve(&self, mut x: Vec<f64>, opts: &OracleOptions) -> (Vec<f64>, bool) {
        let mut t = 1.0;
        loop {
            let ok = self.centre(&mut x, t, opts.max_newton);
            if t >= opts.t_final {
                return (x, ok);
            }
            t = (t * 10.0).min(opts.t_final);
        }
    }

    fn centre(&self, x: &mut Vec<f64>, t: f64, max_newton: usize) -> bool {
        let Some(mut f) = self.barrier(x, t) else {
            return false;
        };
        for _ in 0..max_newton {
            let (g, hm) = self.barrier_derivatives(x, t);
            let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
            let Some(step) = cholesky_solve(&hm, &rhs) else {
                return false;
            };
            let decrement = -dot(&g, &step);
            // the barrier value is `t F`, so this bounds the error in `F` by 1e-10
            let target = 1e-10 * t.max(1.0);
            if decrement / 2.0 <= target {
                return true;
            }
            let mut s = 1.0;
            loop {
                let trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + s * b).collect();
                if let Some(ft) = self.barrier(&trial, t) {
                    if ft < f && ft <= f - 0.25 * s * decrement {
                        *x = trial;
                        f = ft;
                        break;
                    }
                }
                s *= 0.5;
                if s < 1e-14 {
                    return decrement / 2.0 <= 1e4 * target;
                }
            }
        }
        false
    }
}

/// Minimum of the rate expression subject to `y = a + (rho_route^T - I) d`.
///
/// A slow verification path for desk-scale networks. Starts run in parallel;
/// the reduction picks the smallest value, ties broken by start index.
pub fn primal_oracle(y: &[f64], face: FaceLabel, net: &Network, opts: &OracleOptions) -> Result<OracleValue> {
    let k = net.k();
    if y.len() != k {
        return Err(Error::DimensionMismatch(format!("target has {} entries, network has {k} nodes", y.len())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("y"));
    }
    for (name, rates) in [("lambda", &net.lambda), ("mu", &net.mu)] {
        if let Some((index, &value)) = rates.iter().enumerate().find(|(_, &r)| r <= 0.0) {
            return Err(Error::NegativeRate { name, index, value });
        }
    }
    let problem = Problem::build(y, face, net);
    let results: Vec<Option<(f64, Vec<f64>, bool)>> = (0..opts.starts)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(s as u64);
            let x0 = (0..100).find_map(|_| problem.random_start(y, net, &mut rng))?;
            let (x, ok) = problem.solve(x0, opts);
            let v = problem.objective(&x);
            v.is_finite().then_some((v, x, ok))
        })
        .collect();
    let converged_starts = results.iter().flatten().filter(|r| r.2).count();
    let best = results
        .into_iter()
        .flatten()
        .filter(|r| r.2)
        .fold(None::<(f64, Vec<f64>)>, |best, (v, x, _)| match best {
            Some((bv, _)) if bv <= v => best,
            _ => Some((v, x)),
        });
    let Some((value, x)) = best else {
        return Err(Error::NoConvergence(format!("no oracle start converged out of {}", opts.starts)));
    };
    Ok(OracleValue { value, point: problem.point(&x, k), converged_starts })
}
