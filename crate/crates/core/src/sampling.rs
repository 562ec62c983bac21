//! Random networks and matrices for property checks, benches and the
//! `check` command.

use rand::Rng;

use crate::linalg::Matrix;
use crate::netmodel::{traffic_unchecked, Network, ValidatedNetwork};

/// Uniform entries with each row rescaled to a random sum in `(0, max_row_sum]`.
pub fn random_substochastic<R: Rng + ?Sized>(k: usize, max_row_sum: f64, rng: &mut R) -> Matrix {
    let mut p = Matrix::zeros(k, k);
    for i in 0..k {
        let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let target = max_row_sum * (1.0 - rng.random::<f64>());
        for j in 0..k {
            p[(i, j)] = if total > 0.0 { raw[j] / total * target } else { 0.0 };
        }
    }
    p
}

/// Like [`random_substochastic`] but zeroes each entry with probability
/// `sparsity`, so routing graphs with missing links are exercised.
pub fn random_sparse_substochastic<R: Rng + ?Sized>(
    k: usize,
    max_row_sum: f64,
    sparsity: f64,
    rng: &mut R,
) -> Matrix {
    let mut p = random_substochastic(k, max_row_sum, rng);
    for i in 0..k {
        for j in 0..k {
            if rng.random::<f64>() < sparsity {
                p[(i, j)] = 0.0;
            }
        }
    }
    p
}

/// An ergodic network with loads drawn uniformly from `rho_range`.
///
/// Service rates are set from the solved throughputs, so ergodicity holds
/// by construction.
pub fn random_ergodic_network<R: Rng + ?Sized>(
    k: usize,
    rho_range: (f64, f64),
    rng: &mut R,
) -> ValidatedNetwork {
    loop {
        let sparsity = if rng.random::<f64>() < 0.3 { 0.4 } else { 0.0 };
        let routing = random_sparse_substochastic(k, 0.95, sparsity, rng);
        let lambda: Vec<f64> = (0..k).map(|_| 0.2 + 1.8 * rng.random::<f64>()).collect();
        let probe = Network::new(lambda.clone(), vec![1.0; k], routing.clone());
        let Ok(traffic) = traffic_unchecked(&probe) else {
            continue;
        };
        let mu = traffic
            .nu
            .iter()
            .map(|nu| {
                let rho = rho_range.0 + (rho_range.1 - rho_range.0) * rng.random::<f64>();
                nu / rho
            })
            .collect();
        if let Ok(v) = Network::new(lambda, mu, routing).validate() {
            return v;
        }
    }
}

/// Random `n x n` matrix whose determinant and every `(n-1)`-order principal
/// minor exceed `min_minor` in magnitude. Half of the draws are `I - P` for a
/// substochastic `P`, the other half have entries uniform in `[-1, 1]`.
pub fn random_matrix_with_nonzero_minors<R: Rng + ?Sized>(
    n: usize,
    min_minor: f64,
    rng: &mut R,
) -> Matrix {
    loop {
        let b = if rng.random::<bool>() {
            Matrix::identity(n).sub(&random_substochastic(n, 0.95, rng))
        } else {
            Matrix::from_fn(n, n, |_, _| 2.0 * rng.random::<f64>() - 1.0)
        };
        let ok = b.det().abs() >= min_minor
            && (0..n).all(|l| crate::matident::delete_one(&b, l, l).det().abs() >= min_minor);
        if ok {
            return b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sampled_networks_are_ergodic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for k in 1..=6 {
            let net = random_ergodic_network(k, (0.1, 0.9), &mut rng);
            let t = net.solve_traffic().unwrap();
            assert!(t.rho.iter().all(|&r| r > 0.0 && r < 1.0));
        }
    }

    #[test]
    fn substochastic_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_substochastic(5, 0.95, &mut rng);
        for i in 0..5 {
            let s: f64 = p.row(i).iter().sum();
            assert!(s > 0.0 && s <= 0.95 + 1e-15);
        }
    }
}
