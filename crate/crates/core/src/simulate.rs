//! Exact-event simulation of Jackson networks, the product-form stationary
//! law and the checks built on them.
//!
//! Each replica draws from its own ChaCha8 stream (`seed`, stream =
//! replica index), so results do not depend on how replicas are scheduled
//! across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fluid::FluidTrajectory;
use crate::netmodel::{DualNetwork, Network, TrafficSolution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    /// Model time per replica.
    pub horizon: f64,
    /// Scaling parameter; paths are reported as `Q(n t) / n`.
    pub n: u64,
    pub replicas: usize,
    pub initial_state: Vec<u64>,
    /// Number of levels tracked in the occupancy histograms; the last level
    /// collects everything above.
    pub occupancy_levels: usize,
    /// Spacing of the recorded scaled path in scaled time; `None` records nothing.
    pub path_step: Option<f64>,
    pub max_events: u64,
}

impl SimConfig {
    pub fn new(seed: u64, horizon: f64, initial_state: Vec<u64>) -> SimConfig {
        SimConfig {
            seed,
            horizon,
            n: 1,
            replicas: 1,
            initial_state,
            occupancy_levels: 32,
            path_step: None,
            max_events: 1_000_000_000,
        }
    }

    fn check(&self, k: usize) -> Result<()> {
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidTarget(format!("horizon {} must be finite and nonnegative", self.horizon)));
        }
        if self.replicas == 0 || self.n == 0 {
            return Err(Error::InvalidTarget("replicas and n must be positive".into()));
        }
        if self.initial_state.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "initial state has {} entries for K = {k}",
                self.initial_state.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub t: f64,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRecord {
    pub replica: usize,
    pub final_state: Vec<u64>,
    pub events: u64,
    /// Service completions per node.
    pub departures: Vec<u64>,
    /// Time spent at each level, per node.
    pub occupancy: Vec<Vec<f64>>,
    pub elapsed: f64,
    /// `sup_t |Q(n t)/n - q(t)|_inf` against a reference fluid path.
    pub sup_distance: Option<f64>,
    pub path: Option<Vec<PathSample>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub config: SimConfig,
    pub replicas: Vec<ReplicaRecord>,
}

impl SimResult {
    pub fn sup_distances(&self) -> Vec<f64> {
        self.replicas.iter().filter_map(|r| r.sup_distance).collect()
    }

    /// Time-averaged marginal distribution of node `k`.
    pub fn occupancy_fraction(&self, k: usize) -> Vec<f64> {
        let levels = self.config.occupancy_levels;
        let mut acc = vec![0.0; levels];
        let mut total = 0.0;
        for r in &self.replicas {
            for (a, v) in acc.iter_mut().zip(&r.occupancy[k]) {
                *a += v;
                total += v;
            }
        }
        acc.iter().map(|v| v / total).collect()
    }

    /// Service completions per unit time, pooled over replicas.
    pub fn throughputs(&self) -> Vec<f64> {
        let k = self.config.initial_state.len();
        let time: f64 = self.replicas.iter().map(|r| r.elapsed).sum();
        (0..k)
            .map(|i| self.replicas.iter().map(|r| r.departures[i] as f64).sum::<f64>() / time)
            .collect()
    }
}

/// Piecewise-constant scaled state against a piecewise-linear reference.
struct Tracker<'a> {
    reference: &'a FluidTrajectory,
    breaks: Vec<f64>,
    n: f64,
    sup: f64,
}

impl Tracker<'_> {
    /// The state `q` held on scaled times `[s0, s1]`.
    fn hold(&mut self, q: &[u64], s0: f64, s1: f64) {
        let mut check = |s: f64| {
            let r = self.reference.position(s);
            let d = q.iter().zip(&r).fold(0.0f64, |m, (a, b)| m.max((*a as f64 / self.n - b).abs()));
            self.sup = self.sup.max(d);
        };
        check(s0);
        check(s1);
        for &b in &self.breaks {
            if b > s0 && b < s1 {
                check(b);
            }
        }
    }
}

fn run_replica(net: &Network, cfg: &SimConfig, replica: usize, reference: Option<&FluidTrajectory>) -> ReplicaRecord {
    let k = net.k();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(replica as u64);
    let mut q = cfg.initial_state.clone();
    let mut departures = vec![0u64; k];
    let levels = cfg.occupancy_levels.max(1);
    let mut occupancy = vec![vec![0.0; levels]; k];
    let n = cfg.n as f64;
    let mut tracker = reference.map(|r| Tracker { reference: r, breaks: r.breakpoints(), n, sup: 0.0 });
    let mut path = cfg.path_step.map(|_| Vec::new());
    let mut next_sample = 0.0;
    let lambda_total: f64 = net.lambda.iter().sum();
    let mut t = 0.0;
    let mut events = 0u64;

    let mut record = |q: &[u64], t0: f64, t1: f64, occupancy: &mut Vec<Vec<f64>>, next_sample: &mut f64| {
        for i in 0..k {
            occupancy[i][(q[i] as usize).min(levels - 1)] += t1 - t0;
        }
        if let Some(tr) = tracker.as_mut() {
            tr.hold(q, t0 / n, t1 / n);
        }
        if let (Some(p), Some(step)) = (path.as_mut(), cfg.path_step) {
            while *next_sample <= t1 / n {
                p.push(PathSample { t: *next_sample, q: q.iter().map(|&v| v as f64 / n).collect() });
                *next_sample += step;
            }
        }
    };

    while events < cfg.max_events {
        let service_total: f64 = (0..k).filter(|&i| q[i] > 0).map(|i| net.mu[i]).sum();
        let total = lambda_total + service_total;
        let dt = if total > 0.0 { rng.sample::<f64, _>(Exp1) / total } else { f64::INFINITY };
        if t + dt >= cfg.horizon {
            record(&q, t, cfg.horizon, &mut occupancy, &mut next_sample);
            t = cfg.horizon;
            break;
        }
        record(&q, t, t + dt, &mut occupancy, &mut next_sample);
        t += dt;
        events += 1;
        let mut u = rng.random::<f64>() * total;
        let mut handled = false;
        for i in 0..k {
            if u < net.lambda[i] {
                q[i] += 1;
                handled = true;
                break;
            }
            u -= net.lambda[i];
        }
        if !handled {
            let mut server = None;
            for i in (0..k).filter(|&i| q[i] > 0) {
                server = Some(i);
                if u < net.mu[i] {
                    break;
                }
                u -= net.mu[i];
            }
            // rounding can leave u marginally past the last rate
            let i = server.expect("service event with an empty network");
            q[i] -= 1;
            departures[i] += 1;
            let mut v = rng.random::<f64>();
            for l in 0..k {
                if v < net.p(i, l) {
                    q[l] += 1;
                    break;
                }
                v -= net.p(i, l);
            }
        }
    }
    ReplicaRecord {
        replica,
        final_state: q,
        events,
        departures,
        occupancy,
        elapsed: t,
        sup_distance: tracker.map(|tr| tr.sup),
        path,
    }
}

/// Simulates `cfg.replicas` independent copies, in parallel, over
/// `[0, cfg.horizon]`. Any network can be passed, including a dual.
pub fn simulate_ctmc(net: &Network, cfg: &SimConfig) -> Result<SimResult> {
    cfg.check(net.k())?;
    let replicas = (0..cfg.replicas).into_par_iter().map(|r| run_replica(net, cfg, r, None)).collect();
    Ok(SimResult { config: cfg.clone(), replicas })
}

/// `ln prod_k (1 - rho_k) rho_k^{i_k}`.
pub fn stationary_logprob(traffic: &TrafficSolution, state: &[u64]) -> Result<f64> {
    if state.len() != traffic.rho.len() {
        return Err(Error::DimensionMismatch(format!(
            "state has {} entries for K = {}",
            state.len(),
            traffic.rho.len()
        )));
    }
    Ok(traffic.rho.iter().zip(state).map(|(r, &i)| (-r).ln_1p() + i as f64 * r.ln()).sum())
}

/// Simulates the dual network from `floor(n r)` for scaled time `T*` and
/// records the sup distance of each scaled replica to `reference`. The
/// config's horizon and initial state are overwritten.
pub fn lln_check(dual: &DualNetwork, r: &[f64], cfg: &SimConfig, reference: &FluidTrajectory) -> Result<SimResult> {
    let k = dual.network.k();
    let mut cfg = cfg.clone();
    cfg.initial_state = r.iter().map(|v| (v * cfg.n as f64).floor() as u64).collect();
    cfg.horizon = reference.t_star * cfg.n as f64;
    cfg.check(k)?;
    let replicas = (0..cfg.replicas)
        .into_par_iter()
        .map(|i| run_replica(&dual.network, &cfg, i, Some(reference)))
        .collect();
    Ok(SimResult { config: cfg, replicas })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverflowCheck {
    pub level: f64,
    pub n: u64,
    /// `-(1/n) ln P(sum_k Q_k >= n A)` under the stationary law.
    pub value: f64,
    /// `A min_k theta*_k`.
    pub limit: f64,
    pub gap: f64,
    /// Nodes attaining the minimum; more than one means a tie.
    pub argmin: Vec<usize>,
    pub tie: bool,
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `ln P(sum_k Q_k >= m)` for `m = 0..=big_n` with independent geometric
/// marginals. Built node by node from
/// `T_k(m) = sum_{j<m} P(Q_k = j) T_{k-1}(m - j) + P(Q_k >= m)`, a sum of
/// positive terms, so the tail is never formed as a difference.
pub fn log_tail_of_sum(rho: &[f64], big_n: usize) -> Vec<f64> {
    let mut prev: Vec<f64> = (0..=big_n).map(|m| if m == 0 { 0.0 } else { f64::NEG_INFINITY }).collect();
    for &r in rho {
        let (lr, l1) = (r.ln(), (-r).ln_1p());
        let next: Vec<f64> = (0..=big_n)
            .map(|m| {
                let mut acc = m as f64 * lr;
                for j in 0..m {
                    acc = log_add(acc, l1 + j as f64 * lr + prev[m - j]);
                }
                acc
            })
            .collect();
        prev = next;
    }
    prev
}

/// Exact stationary overflow exponent at level `A` and scale `n`, compared
/// with `A min_k theta*_k`. Ties within `1e-12` are flagged instead of
/// resolved.
pub fn overflow_logprob_check(traffic: &TrafficSolution, level: f64, n: u64) -> Result<OverflowCheck> {
    if !(level >= 0.0 && level.is_finite()) || n == 0 {
        return Err(Error::InvalidTarget(format!("level {level} and n {n} must be nonnegative and positive")));
    }
    let big_n = (level * n as f64).ceil() as usize;
    let lt = log_tail_of_sum(&traffic.rho, big_n);
    let value = -lt[big_n] / n as f64;
    let ts = traffic.theta_star();
    let best = ts.iter().cloned().fold(f64::INFINITY, f64::min);
    let argmin: Vec<usize> = (0..ts.len()).filter(|&i| ts[i] - best <= 1e-12 * (1.0 + best)).collect();
    let limit = level * best;
    Ok(OverflowCheck { level, n, value, limit, gap: value - limit, tie: argmin.len() > 1, argmin })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mm1() -> Network {
        Network::from_rows(&[1.0], &[2.0], &[vec![0.0]]).unwrap()
    }

    #[test]
    fn deterministic_replays() {
        let mut cfg = SimConfig::new(9, 50.0, vec![3]);
        cfg.replicas = 4;
        cfg.path_step = Some(1.0);
        let a = simulate_ctmc(&mm1(), &cfg).unwrap();
        let b = simulate_ctmc(&mm1(), &cfg).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.replicas[0].events, 0);
        assert_ne!(a.replicas[0], a.replicas[1]);
    }

    #[test]
    fn tiny_rates_leave_state_unchanged() {
        let net = Network::from_rows(&[1e-9], &[1e-9], &[vec![0.0]]).unwrap();
        let mut cfg = SimConfig::new(1, 1.0, vec![2]);
        cfg.replicas = 8;
        let res = simulate_ctmc(&net, &cfg).unwrap();
        assert!(res.replicas.iter().all(|r| r.final_state == vec![2]));
    }

    #[test]
    fn logprob_examples() {
        let net = mm1().validate().unwrap();
        let t = net.solve_traffic().unwrap();
        assert!((stationary_logprob(&t, &[0]).unwrap() - 0.5f64.ln()).abs() < 1e-15);
        assert!((stationary_logprob(&t, &[100]).unwrap() - 101.0 * 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn geometric_tail_is_exact() {
        let lt = log_tail_of_sum(&[0.5], 10);
        for (m, v) in lt.iter().enumerate() {
            assert!((v - m as f64 * 0.5f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn two_geometrics_tail_matches_brute_force() {
        let (a, b) = (0.3f64, 0.6f64);
        let lt = log_tail_of_sum(&[a, b], 6);
        for m in 0..=6 {
            let mut below = 0.0;
            for i in 0..m {
                for j in 0..m - i {
                    below += (1.0 - a) * a.powi(i as i32) * (1.0 - b) * b.powi(j as i32);
                }
            }
            assert!((lt[m].exp() - (1.0 - below)).abs() < 1e-12);
        }
    }

    #[test]
    fn overflow_zero_level() {
        let net = mm1().validate().unwrap();
        let t = net.solve_traffic().unwrap();
        let c = overflow_logprob_check(&t, 0.0, 10).unwrap();
        assert_eq!(c.value, 0.0);
        assert_eq!(c.limit, 0.0);
    }
}
