//! Invariant suite run against a single network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::face::FaceLabel;
use crate::fluid::{dual_rate_vanishes, path_cost, reverse_to_optimal, solve_dual_fluid};
use crate::hamiltonian::{grad_h0, h0, legendre_face, primal_oracle, LegendreOptions, OracleOptions};
use crate::linalg::Matrix;
use crate::matident::{check_adj_identity, check_c_dominance, check_det_identity, check_tozd, residual_scale};
use crate::momenta::{c_identity_residual, half_axis_check, MomentaTable, MATERIALIZE_MAX_K};
use crate::netmodel::{build_dual, ValidatedNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Fast,
    Full,
}

/// Deliberate corruption used to exercise failure reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Perturbs `c_11` after the traffic solve.
    CorruptC,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub passed: bool,
    pub checks: Vec<CheckOutcome>,
}

struct Runner {
    checks: Vec<CheckOutcome>,
}

impl Runner {
    /// Records `value <= tolerance`; an error counts as a failure.
    fn bound(&mut self, name: &'static str, tolerance: f64, f: impl FnOnce() -> Result<f64>) {
        let outcome = match f() {
            Ok(value) => CheckOutcome {
                name,
                passed: value <= tolerance,
                value,
                tolerance,
                detail: String::new(),
            },
            Err(e) => CheckOutcome { name, passed: false, value: f64::NAN, tolerance, detail: e.to_string() },
        };
        self.checks.push(outcome);
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Runs every invariant of the library against `net`. `Full` adds the primal
/// oracle comparison (for `K <= 3`) and more targets.
pub fn run_checks(net: &ValidatedNetwork, level: Level, fault: Option<Fault>, seed: u64) -> Result<CheckReport> {
    let k = net.k();
    let mut traffic = net.solve_traffic()?;
    if fault == Some(Fault::CorruptC) {
        traffic.c[(0, 0)] += 0.125;
    }
    let mut run = Runner { checks: Vec::new() };

    run.bound("traffic_residual", 1e-10, || Ok(traffic.residual(net)));
    run.bound("c_identity", 1e-10, || Ok(c_identity_residual(&traffic, net)));
    run.bound("c_dominance", 1e-12, || Ok(check_c_dominance(&traffic.c).max(0.0)));

    let b = Matrix::identity(k).sub(&net.routing);
    let scale = residual_scale(&b);
    run.bound("adjugate_identity", 1e-8 * scale, || {
        let mut worst: f64 = 0.0;
        for m in 0..k {
            for l in (0..k).filter(|&l| l != m) {
                worst = worst.max(check_adj_identity(&b, m, l)?);
            }
        }
        Ok(worst)
    });
    run.bound("determinant_identity", 1e-8 * scale, || {
        (0..k).try_fold(0.0f64, |w, l| Ok(w.max(check_det_identity(&b, l)?)))
    });
    run.bound("ratio_identities", 1e-8 * scale, || {
        let mut worst: f64 = 0.0;
        for m in 0..k {
            worst = worst.max(check_tozd(&b, m, None)?);
            for l in (0..k).filter(|&l| l != m) {
                worst = worst.max(check_tozd(&b, m, Some(l))?);
            }
        }
        Ok(worst)
    });

    let dual = build_dual(net, &traffic);
    run.bound("dual_involution", 1e-12, || {
        let back = dual.dual();
        Ok(max_abs_diff(&back.lambda, &net.lambda).max(back.routing.sub(&net.routing).max_abs()))
    });
    run.bound("dual_throughputs", 1e-10, || {
        let t = dual.solve_traffic()?;
        Ok(max_abs_diff(&t.nu, &traffic.nu) / traffic.nu.iter().cloned().fold(1.0, f64::max))
    });

    let table = match MomentaTable::build(net, &traffic) {
        Ok(t) => t,
        Err(e) => {
            run.checks.push(CheckOutcome {
                name: "momenta",
                passed: false,
                value: f64::NAN,
                tolerance: 0.0,
                detail: e.to_string(),
            });
            let passed = false;
            return Ok(CheckReport { passed, checks: run.checks });
        }
    };
    run.bound("theta_star_zero_level", 1e-10, || Ok(h0(&table.theta_star, net)?.abs()));
    run.bound("node_momentum_loads", 1e-10, || {
        Ok(table
            .node_momenta
            .iter()
            .map(|n| ((-n.theta[n.m]).exp() - traffic.rho[n.m]).abs())
            .fold(0.0, f64::max))
    });
    if k <= MATERIALIZE_MAX_K {
        run.bound("face_zero_level", 1e-10, || table.max_face_h0());
    }
    run.bound("half_axis_agreement", 0.0, || {
        let mut mismatches = 0.0;
        for m in 0..k {
            if half_axis_check(m, &traffic) != table.face(FaceLabel::all_but(k, m))?.essential {
                mismatches += 1.0;
            }
        }
        Ok(mismatches)
    });
    run.bound("drift_identity", 1e-10, || {
        let (a, b) = crate::fluid::drift_identity(&table, &dual)?;
        Ok(max_abs_diff(&a, &b))
    });

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut targets: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    targets.push(vec![1.0; k]);
    let extra = if level == Level::Full { 10 } else { 2 };
    for _ in 0..extra {
        targets.push((0..k).map(|_| if rng.random_bool(0.25) { 0.0 } else { rng.random_range(0.1..2.0) }).collect());
    }
    run.bound("cost_identity", 1e-6, || {
        let mut worst: f64 = 0.0;
        for r in &targets {
            let path = reverse_to_optimal(&solve_dual_fluid(r, &table)?, &table)?;
            let c = path_cost(&path, net)?;
            worst = worst.max((c - path.cost).abs() / (1.0 + path.cost.abs()));
        }
        Ok(worst)
    });
    run.bound("dual_rate_vanishes", 1e-5, || {
        targets.iter().try_fold(0.0f64, |w, r| Ok(w.max(dual_rate_vanishes(&solve_dual_fluid(r, &table)?, &dual)?)))
    });

    if level == Level::Full && k <= 3 {
        run.bound("primal_dual_agreement", 1e-3, || {
            let nominal: Vec<f64> = grad_h0(&vec![0.0; k], net)?;
            let mut ys = vec![nominal];
            for _ in 0..3 {
                ys.push((0..k).map(|_| rng.random_range(-1.5..1.5)).collect());
            }
            let mut worst: f64 = 0.0;
            for y in &ys {
                for j in FaceLabel::all_faces(k) {
                    let d = legendre_face(y, j, net, &LegendreOptions::default())?.value;
                    let p = primal_oracle(y, j, net, &OracleOptions::default())?.value;
                    worst = worst.max((d - p).abs() / (1.0 + d.abs()));
                }
            }
            Ok(worst)
        });
    }

    let passed = run.checks.iter().all(|c| c.passed);
    Ok(CheckReport { passed, checks: run.checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::Network;

    fn tandem() -> ValidatedNetwork {
        Network::from_rows(&[1.0, 0.5], &[3.0, 4.0], &[vec![0.0, 0.5], vec![0.0, 0.0]])
            .unwrap()
            .validate()
            .unwrap()
    }

    #[test]
    fn tandem_passes_fast() {
        let r = run_checks(&tandem(), Level::Fast, None, 1).unwrap();
        assert!(r.passed, "{:#?}", r.checks.iter().filter(|c| !c.passed).collect::<Vec<_>>());
    }

    #[test]
    fn corrupted_c_is_named() {
        let r = run_checks(&tandem(), Level::Fast, Some(Fault::CorruptC), 1).unwrap();
        assert!(!r.passed);
        let failed: Vec<_> = r.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
        assert!(failed.contains(&"c_identity"), "{failed:?}");
    }
}
