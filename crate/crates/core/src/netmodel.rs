//! Jackson network specifications, traffic equations and the time-reversed
//! (dual) network.

use std::ops::Deref;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm_inf, Matrix};

/// Raw network parameters `(lambda, mu, P)`.
///
/// Nothing is checked at construction; call [`Network::validate`] before
/// handing the network to the analysis routines. The dual network reuses this
/// type with possibly zero exogenous rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    #[serde(rename = "P")]
    pub routing: Matrix,
}

#[derive(Debug, Clone, Copy)]
pub struct ValidationOptions {
    /// Rates at or below this value are rejected.
    pub rate_floor: f64,
    pub power_iterations: usize,
    pub power_tolerance: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            rate_floor: 1e-300,
            power_iterations: 200,
            power_tolerance: 1e-12,
        }
    }
}

/// Outcome of the shifted power iteration on `(I + P) / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralEstimate {
    /// Collatz-Wielandt bounds on the spectral radius of `P`.
    pub lower: f64,
    pub upper: f64,
    pub iterations: usize,
}

impl Network {
    pub fn new(lambda: Vec<f64>, mu: Vec<f64>, routing: Matrix) -> Self {
        Network {
            lambda,
            mu,
            routing,
        }
    }

    pub fn from_rows(lambda: &[f64], mu: &[f64], routing: &[Vec<f64>]) -> Result<Self> {
        Ok(Network::new(
            lambda.to_vec(),
            mu.to_vec(),
            Matrix::from_rows(routing)?,
        ))
    }

    /// Node count.
    pub fn k(&self) -> usize {
        self.mu.len()
    }

    pub fn p(&self, k: usize, l: usize) -> f64 {
        self.routing[(k, l)]
    }

    /// Probability that a customer served at `k` leaves the network.
    pub fn exit_prob(&self, k: usize) -> f64 {
        (1.0 - self.routing.row(k).iter().sum::<f64>()).max(0.0)
    }

    /// Parses the JSON network format: `{"lambda": [...], "mu": [...], "P": [[...], ...]}`.
    pub fn from_json_str(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            lambda: Vec<f64>,
            mu: Vec<f64>,
            #[serde(rename = "P")]
            p: Vec<Vec<f64>>,
        }
        // serde_json already refuses NaN/Infinity literals; overflowing
        // literals such as 1e400 are caught by the finiteness check below.
        let raw: Raw = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        let routing = Matrix::from_rows(&raw.p).map_err(|_| Error::Parse("ragged P matrix".into()))?;
        let net = Network::new(raw.lambda, raw.mu, routing);
        if !net.lambda.iter().chain(&net.mu).all(|x| x.is_finite()) || !net.routing.is_finite() {
            return Err(Error::Parse("non-finite number in network file".into()));
        }
        Ok(net)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    fn check_shape(&self) -> Result<usize> {
        let k = self.mu.len();
        if k == 0 {
            return Err(Error::DimensionMismatch("network has no nodes".into()));
        }
        if self.lambda.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "lambda has {} entries, mu has {k}",
                self.lambda.len()
            )));
        }
        if self.routing.rows() != k || self.routing.cols() != k {
            return Err(Error::DimensionMismatch(format!(
                "P is {}x{}, expected {k}x{k}",
                self.routing.rows(),
                self.routing.cols()
            )));
        }
        if !self.lambda.iter().chain(&self.mu).all(|x| x.is_finite()) || !self.routing.is_finite() {
            return Err(Error::NonFinite("network parameters"));
        }
        Ok(k)
    }

    /// Checks rates, routing rows, spectral radius and loads.
    pub fn validate(self) -> Result<ValidatedNetwork> {
        self.validate_with(&ValidationOptions::default())
    }

    pub fn validate_with(self, opts: &ValidationOptions) -> Result<ValidatedNetwork> {
        let k = self.check_shape()?;
        for (index, &value) in self.lambda.iter().enumerate() {
            if value <= opts.rate_floor {
                return Err(Error::NegativeRate {
                    name: "lambda",
                    index,
                    value,
                });
            }
        }
        for (index, &value) in self.mu.iter().enumerate() {
            if value <= opts.rate_floor {
                return Err(Error::NegativeRate {
                    name: "mu",
                    index,
                    value,
                });
            }
        }
        check_substochastic(&self.routing)?;

        let est = spectral_radius_estimate(&self.routing, opts.power_iterations, opts.power_tolerance);
        if est.lower >= 1.0 - opts.power_tolerance {
            return Err(Error::NonErgodic(format!(
                "spectral radius of P is at least {}",
                est.lower
            )));
        }
        if est.upper >= 1.0 && !neumann_inverse_is_nonnegative(&self.routing) {
            return Err(Error::NonErgodic(
                "spectral radius of P is not below 1".into(),
            ));
        }

        let traffic = traffic_unchecked(&self)?;
        if traffic.nu.iter().any(|&v| v <= 0.0) {
            return Err(Error::NonErgodic("non-positive throughput".into()));
        }
        if let Some((m, r)) = traffic
            .rho
            .iter()
            .copied()
            .enumerate()
            .find(|&(_, r)| r >= 1.0)
        {
            return Err(Error::NonErgodic(format!("rho[{}] = {r} >= 1", m + 1)));
        }
        debug_assert_eq!(traffic.nu.len(), k);
        Ok(ValidatedNetwork(self))
    }
}

fn check_substochastic(p: &Matrix) -> Result<()> {
    let k = p.rows();
    for i in 0..k {
        for j in 0..k {
            if p[(i, j)] < 0.0 {
                return Err(Error::NegativeRate {
                    name: "P",
                    index: i * k + j,
                    value: p[(i, j)],
                });
            }
        }
        let sum: f64 = p.row(i).iter().sum();
        if sum > 1.0 + 1e-12 {
            return Err(Error::RowSumExceedsOne { row: i + 1, sum });
        }
    }
    Ok(())
}

/// Power iteration on `(I + P) / 2` from the all-ones vector, returning the
/// Collatz-Wielandt bracket on the spectral radius of the nonnegative `P`.
///
/// The shift keeps every iterate strictly positive and makes the Perron
/// root dominant even for periodic `P`.
pub fn spectral_radius_estimate(p: &Matrix, iterations: usize, tol: f64) -> SpectralEstimate {
    let k = p.rows();
    let mut x = vec![1.0; k];
    let mut est = SpectralEstimate {
        lower: 0.0,
        upper: f64::INFINITY,
        iterations: 0,
    };
    for it in 1..=iterations {
        let px = p.mul_vec(&x);
        let y: Vec<f64> = x.iter().zip(&px).map(|(a, b)| 0.5 * (a + b)).collect();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for (yi, xi) in y.iter().zip(&x) {
            let r = yi / xi;
            lo = lo.min(r);
            hi = hi.max(r);
        }
        // ratio bounds for (I+P)/2 map back to P via r -> 2r - 1
        est = SpectralEstimate {
            lower: (2.0 * lo - 1.0).max(0.0),
            upper: 2.0 * hi - 1.0,
            iterations: it,
        };
        if est.upper < 1.0 || est.lower >= 1.0 - tol || hi - lo <= tol {
            break;
        }
        let scale = norm_inf(&y);
        x = y.iter().map(|v| v / scale).collect();
    }
    est
}

/// `rho(P) < 1` iff `I - P` is invertible with a nonnegative inverse.
fn neumann_inverse_is_nonnegative(p: &Matrix) -> bool {
    let k = p.rows();
    match Matrix::identity(k).sub(p).inverse() {
        Ok(inv) => inv.as_slice().iter().all(|&v| v >= -1e-12 && v.is_finite()),
        Err(_) => false,
    }
}

/// A network that passed [`Network::validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ValidatedNetwork(Network);

impl ValidatedNetwork {
    pub fn network(&self) -> &Network {
        &self.0
    }

    pub fn into_inner(self) -> Network {
        self.0
    }

    pub fn solve_traffic(&self) -> Result<TrafficSolution> {
        solve_traffic(self)
    }
}

impl Deref for ValidatedNetwork {
    type Target = Network;

    fn deref(&self) -> &Network {
        &self.0
    }
}

/// Throughputs, loads, `C = (I - P^T)^{-1}` and the ratios `a_ml = c_ml / c_mm`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrafficSolution {
    pub nu: Vec<f64>,
    pub rho: Vec<f64>,
    pub c: Matrix,
    pub a: Matrix,
}

impl TrafficSolution {
    /// `max_k |nu_k - lambda_k - (P^T nu)_k| / max|nu|`.
    pub fn residual(&self, net: &Network) -> f64 {
        let k = net.k();
        let pt_nu = net.routing.transpose().mul_vec(&self.nu);
        let r = (0..k)
            .map(|i| (self.nu[i] - net.lambda[i] - pt_nu[i]).abs())
            .fold(0.0, f64::max);
        r / norm_inf(&self.nu).max(f64::MIN_POSITIVE)
    }

    /// `-ln rho_k`, the global momentum.
    pub fn theta_star(&self) -> Vec<f64> {
        self.rho.iter().map(|r| -r.ln()).collect()
    }
}

/// Solves `nu = lambda + P^T nu` and the companion quantities.
pub fn solve_traffic(net: &ValidatedNetwork) -> Result<TrafficSolution> {
    let sol = traffic_unchecked(net)?;
    let res = sol.residual(net);
    if res > 1e-10 {
        return Err(Error::SingularSystem(format!(
            "traffic residual {res:e} exceeds 1e-10"
        )));
    }
    Ok(sol)
}

/// Traffic equations without the positivity requirements on `lambda`; used
/// for dual networks whose exogenous rates may vanish.
pub fn traffic_unchecked(net: &Network) -> Result<TrafficSolution> {
    let k = net.check_shape()?;
    let i_minus_pt = Matrix::identity(k).sub(&net.routing.transpose());
    let lu = i_minus_pt.lu()?;
    let nu = lu.solve(&net.lambda)?;
    let c = lu.inverse()?;
    let rho: Vec<f64> = nu.iter().zip(&net.mu).map(|(n, m)| n / m).collect();
    let mut a = Matrix::zeros(k, k);
    for m in 0..k {
        let cmm = c[(m, m)];
        if cmm <= 0.0 {
            return Err(Error::SingularSystem(format!("c[{m},{m}] = {cmm}")));
        }
        for l in 0..k {
            a[(m, l)] = if l == m { 1.0 } else { c[(m, l)] / cmm };
        }
    }
    Ok(TrafficSolution { nu, rho, c, a })
}

/// The time-reversed network `(lambda_bar, mu, P_bar)` together with the
/// shared throughputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualNetwork {
    pub network: Network,
    pub nu: Vec<f64>,
}

impl DualNetwork {
    pub fn lambda_bar(&self) -> &[f64] {
        &self.network.lambda
    }

    pub fn p_bar(&self) -> &Matrix {
        &self.network.routing
    }

    pub fn mu(&self) -> &[f64] {
        &self.network.mu
    }

    /// Reverses the dual again; recovers the primal network.
    pub fn dual(&self) -> Network {
        reverse(&self.network, &self.nu)
    }

    pub fn solve_traffic(&self) -> Result<TrafficSolution> {
        traffic_unchecked(&self.network)
    }
}

fn reverse(net: &Network, nu: &[f64]) -> Network {
    let k = net.k();
    let lambda = (0..k).map(|i| nu[i] * net.exit_prob(i)).collect();
    let routing = Matrix::from_fn(k, k, |i, j| nu[j] * net.p(j, i) / nu[i]);
    Network::new(lambda, net.mu.clone(), routing)
}

/// `lambda_bar_k = nu_k (1 - sum_l p_kl)`, `p_bar_kl = nu_l p_lk / nu_k`.
pub fn build_dual(net: &ValidatedNetwork, traffic: &TrafficSolution) -> DualNetwork {
    DualNetwork {
        network: reverse(net, &traffic.nu),
        nu: traffic.nu.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tandem() -> Network {
        Network::from_rows(&[1.0, 0.5], &[3.0, 4.0], &[vec![0.0, 0.5], vec![0.0, 0.0]]).unwrap()
    }

    #[test]
    fn single_node_is_valid() {
        let net = Network::from_rows(&[1.0], &[2.0], &[vec![0.0]]).unwrap();
        let v = net.validate().unwrap();
        let t = v.solve_traffic().unwrap();
        assert_eq!(t.nu, vec![1.0]);
        assert_eq!(t.rho, vec![0.5]);
        assert_eq!(t.c.to_rows(), vec![vec![1.0]]);
        assert_eq!(t.a.to_rows(), vec![vec![1.0]]);
    }

    #[test]
    fn overloaded_single_node_rejected() {
        let net = Network::from_rows(&[2.0], &[1.0], &[vec![0.0]]).unwrap();
        assert!(matches!(net.validate(), Err(Error::NonErgodic(_))));
    }

    #[test]
    fn tandem_traffic() {
        let v = tandem().validate().unwrap();
        let t = v.solve_traffic().unwrap();
        assert!((t.nu[0] - 1.0).abs() < 1e-15 && (t.nu[1] - 1.0).abs() < 1e-15);
        assert!((t.rho[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((t.rho[1] - 0.25).abs() < 1e-15);
        let expect_c = [[1.0, 0.0], [0.5, 1.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((t.c[(i, j)] - expect_c[i][j]).abs() < 1e-15);
            }
        }
        assert!((t.a[(1, 0)] - 0.5).abs() < 1e-15);
        assert_eq!(t.a[(0, 1)], 0.0);
    }

    #[test]
    fn tandem_dual() {
        let v = tandem().validate().unwrap();
        let t = v.solve_traffic().unwrap();
        let d = build_dual(&v, &t);
        assert!((d.lambda_bar()[0] - 0.5).abs() < 1e-15);
        assert!((d.lambda_bar()[1] - 1.0).abs() < 1e-15);
        assert!((d.p_bar()[(1, 0)] - 0.5).abs() < 1e-15);
        assert_eq!(d.p_bar()[(0, 1)], 0.0);
        assert_eq!(d.dual(), *v.network());
    }

    #[test]
    fn mm1_is_self_dual() {
        let v = Network::from_rows(&[1.0], &[2.0], &[vec![0.0]])
            .unwrap()
            .validate()
            .unwrap();
        let t = v.solve_traffic().unwrap();
        let d = build_dual(&v, &t);
        assert_eq!(d.network, *v.network());
    }

    #[test]
    fn validation_errors() {
        let bad_dim = Network::from_rows(&[1.0], &[2.0, 3.0], &[vec![0.0]]).unwrap();
        assert!(matches!(bad_dim.validate(), Err(Error::DimensionMismatch(_))));
        let neg = Network::from_rows(&[-1.0], &[2.0], &[vec![0.0]]).unwrap();
        assert!(matches!(neg.validate(), Err(Error::NegativeRate { name: "lambda", .. })));
        let zero_mu = Network::from_rows(&[1.0], &[0.0], &[vec![0.0]]).unwrap();
        assert!(matches!(zero_mu.validate(), Err(Error::NegativeRate { name: "mu", .. })));
        let row = Network::from_rows(&[1.0, 1.0], &[5.0, 5.0], &[vec![0.6, 0.6], vec![0.0, 0.0]])
            .unwrap();
        assert!(matches!(row.validate(), Err(Error::RowSumExceedsOne { row: 1, .. })));
        // closed loop: spectral radius 1
        let closed = Network::from_rows(&[1.0, 1.0], &[5.0, 5.0], &[vec![0.0, 1.0], vec![1.0, 0.0]])
            .unwrap();
        assert!(matches!(closed.validate(), Err(Error::NonErgodic(_))));
        let tiny = Network::from_rows(&[1e-310], &[1.0], &[vec![0.0]]).unwrap();
        assert!(tiny.validate().is_err());
        let small = Network::from_rows(&[1e-200], &[1.0], &[vec![0.0]]).unwrap();
        assert!(small.validate().is_ok());
    }

    #[test]
    fn periodic_routing_spectral_bracket() {
        let p = Matrix::from_rows(&[vec![0.0, 0.9], vec![0.9, 0.0]]).unwrap();
        let est = spectral_radius_estimate(&p, 200, 1e-12);
        assert!(est.upper < 1.0);
        assert!(est.lower <= 0.9 + 1e-12 && est.upper >= 0.9 - 1e-12);
    }

    #[test]
    fn json_parsing() {
        let net = Network::from_json_str(r#"{"lambda":[1,0.5],"mu":[3,4],"P":[[0,0.5],[0,0]]}"#)
            .unwrap();
        assert_eq!(net, tandem());
        assert!(Network::from_json_str(r#"{"lambda":[1],"mu":[2],"P":[[0,1],[0]]}"#).is_err());
        assert!(Network::from_json_str(r#"{"lambda":[NaN],"mu":[2],"P":[[0]]}"#).is_err());
        assert!(Network::from_json_str(r#"{"lambda":[1e400],"mu":[2],"P":[[0]]}"#).is_err());
        assert!(Network::from_json_str(r#"{"lambda":[1],"mu":[2]}"#).is_err());
        let back = Network::from_json_str(&net.to_json_string()).unwrap();
        assert_eq!(back, net);
    }
}
