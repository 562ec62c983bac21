//! Submatrix deletion, minors and adjugates, plus residual checks of the
//! determinant/adjugate identities that underpin the node momenta.
//!
//! Notation: `B(i|j)` removes row `i` and column `j`; `b_{.l}` is column `l`
//! of `B` without its `l`-th entry and `b_{l.}` is row `l` without its `l`-th
//! entry. All indices are 0-based; sign factors `(-1)^{m+l}` are unchanged by
//! the shift since both indices move by one.

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

/// Cofactor expansion is used up to this size, `det * inverse` beyond it.
pub const COFACTOR_MAX_N: usize = 6;

/// Principal minors below this magnitude are treated as degenerate.
pub const DEGENERATE_MINOR: f64 = 1e-12;

/// Removes the listed rows and columns (0-based), keeping the order of the
/// remaining ones. The result may be rectangular.
pub fn delete(b: &Matrix, rows: &[usize], cols: &[usize]) -> Result<Matrix> {
    for &i in rows {
        if i >= b.rows() {
            return Err(Error::IndexOutOfRange {
                index: i,
                dim: b.rows(),
            });
        }
    }
    for &j in cols {
        if j >= b.cols() {
            return Err(Error::IndexOutOfRange {
                index: j,
                dim: b.cols(),
            });
        }
    }
    let keep_r: Vec<usize> = (0..b.rows()).filter(|i| !rows.contains(i)).collect();
    let keep_c: Vec<usize> = (0..b.cols()).filter(|j| !cols.contains(j)).collect();
    Ok(b.select(&keep_r, &keep_c))
}

/// `B(i|j)`.
pub fn delete_one(b: &Matrix, i: usize, j: usize) -> Matrix {
    let keep_r: Vec<usize> = (0..b.rows()).filter(|&r| r != i).collect();
    let keep_c: Vec<usize> = (0..b.cols()).filter(|&c| c != j).collect();
    b.select(&keep_r, &keep_c)
}

/// `b_{.l}`: column `l` without entry `l`.
pub fn column_without(b: &Matrix, l: usize) -> Vec<f64> {
    (0..b.rows()).filter(|&i| i != l).map(|i| b[(i, l)]).collect()
}

/// `b_{l.}`: row `l` without entry `l`.
pub fn row_without(b: &Matrix, l: usize) -> Vec<f64> {
    (0..b.cols()).filter(|&j| j != l).map(|j| b[(l, j)]).collect()
}

/// Position of index `m` inside `{0..n} \ {l}`; this is the unit vector
/// selector `f_ml`.
pub fn selector(m: usize, l: usize) -> usize {
    debug_assert_ne!(m, l);
    if m < l {
        m
    } else {
        m - 1
    }
}

pub fn determinant(b: &Matrix) -> f64 {
    b.det()
}

fn cofactor(b: &Matrix, i: usize, j: usize) -> f64 {
    let sign = if (i + j).is_multiple_of(2) { 1.0 } else { -1.0 };
    sign * delete_one(b, i, j).det()
}

/// The classical adjoint, `adj(B)_{ij} = (-1)^{i+j} det B(j|i)`.
pub fn adjugate(b: &Matrix) -> Result<Matrix> {
    if !b.is_square() {
        return Err(Error::DimensionMismatch("adjugate of a non-square matrix".into()));
    }
    let n = b.rows();
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    if n == 1 {
        return Ok(Matrix::identity(1));
    }
    if n > COFACTOR_MAX_N {
        let lu = b.lu()?;
        if !lu.is_singular() {
            return Ok(lu.inverse()?.scale(lu.det()));
        }
    }
    Ok(Matrix::from_fn(n, n, |i, j| cofactor(b, j, i)))
}

fn check_index(i: usize, n: usize) -> Result<()> {
    if i >= n {
        Err(Error::IndexOutOfRange { index: i, dim: n })
    } else {
        Ok(())
    }
}

fn require_square(b: &Matrix) -> Result<usize> {
    if b.is_square() {
        Ok(b.rows())
    } else {
        Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            b.rows(),
            b.cols()
        )))
    }
}

/// `| f_ml^T adj(B(l|l)) b_{.l} - (-1)^{m+l+1} det B(l|m) |` for `m != l`.
pub fn check_adj_identity(b: &Matrix, m: usize, l: usize) -> Result<f64> {
    let n = require_square(b)?;
    check_index(m, n)?;
    check_index(l, n)?;
    if m == l {
        return Err(Error::DimensionMismatch("identity needs m != l".into()));
    }
    let adj = adjugate(&delete_one(b, l, l))?;
    let lhs = dot(adj.row(selector(m, l)), &column_without(b, l));
    let sign = if (m + l + 1).is_multiple_of(2) { 1.0 } else { -1.0 };
    let rhs = sign * delete_one(b, l, m).det();
    Ok((lhs - rhs).abs())
}

/// `| b_ll det B(l|l) - b_{l.} adj(B(l|l)) b_{.l} - det B |`.
pub fn check_det_identity(b: &Matrix, l: usize) -> Result<f64> {
    let n = require_square(b)?;
    check_index(l, n)?;
    let sub = delete_one(b, l, l);
    let adj = adjugate(&sub)?;
    let quad = dot(&row_without(b, l), &adj.mul_vec(&column_without(b, l)));
    Ok((b[(l, l)] * sub.det() - quad - b.det()).abs())
}

/// Per-index pieces `u_l = B(l|l)^{-1} b_{.l}` and `b_ll - b_{l.} u_l`.
struct Reduced {
    u: Vec<Vec<f64>>,
    denom: Vec<f64>,
}

fn reduced_systems(b: &Matrix) -> Result<Reduced> {
    let n = b.rows();
    let det_b = b.det();
    if det_b.abs() < DEGENERATE_MINOR {
        return Err(Error::DegenerateMinor { minor: det_b });
    }
    let mut u = Vec::with_capacity(n);
    let mut denom = Vec::with_capacity(n);
    for l in 0..n {
        let sub = delete_one(b, l, l);
        let minor = sub.det();
        if minor.abs() < DEGENERATE_MINOR {
            return Err(Error::DegenerateMinor { minor });
        }
        let ul = if n == 1 {
            Vec::new()
        } else {
            sub.solve(&column_without(b, l))?
        };
        denom.push(b[(l, l)] - dot(&row_without(b, l), &ul));
        u.push(ul);
    }
    Ok(Reduced { u, denom })
}

/// Residual of the two ratio identities between reduced systems.
///
/// With `l` absent this is the single-index identity
/// `s_m / (b_mm - s_m) = sum_{l != m} b_lm [u_l]_{f_ml} / (b_ll - s_l)`
/// where `s_l = b_{l.} u_l`. With `l` given it is the pair identity
/// `-b_mm [u_m]_{f_lm} / D_m = -b_lm / D_l + sum_{k != l, m} b_km [u_k]_{f_lk} / D_k`.
pub fn check_tozd(b: &Matrix, m: usize, l: Option<usize>) -> Result<f64> {
    let n = require_square(b)?;
    check_index(m, n)?;
    if let Some(l) = l {
        check_index(l, n)?;
        if l == m {
            return Err(Error::DimensionMismatch("pair identity needs l != m".into()));
        }
    }
    let red = reduced_systems(b)?;
    match l {
        None => {
            let s_m = b[(m, m)] - red.denom[m];
            let lhs = s_m / red.denom[m];
            let rhs: f64 = (0..n)
                .filter(|&k| k != m)
                .map(|k| b[(k, m)] * red.u[k][selector(m, k)] / red.denom[k])
                .sum();
            Ok((lhs - rhs).abs())
        }
        Some(l) => {
            let lhs = -b[(m, m)] * red.u[m][selector(l, m)] / red.denom[m];
            let rhs = -b[(l, m)] / red.denom[l]
                + (0..n)
                    .filter(|&k| k != l && k != m)
                    .map(|k| b[(k, m)] * red.u[k][selector(l, k)] / red.denom[k])
                    .sum::<f64>();
            Ok((lhs - rhs).abs())
        }
    }
}

/// `max_{m != l} (c_ml - c_mm)`; negative infinity for a 1x1 matrix.
pub fn check_c_dominance(c: &Matrix) -> f64 {
    let n = c.rows();
    let mut worst = f64::NEG_INFINITY;
    for m in 0..n {
        for l in 0..n {
            if l != m {
                worst = worst.max(c[(m, l)] - c[(m, m)]);
            }
        }
    }
    worst
}

/// `max(1, ||B||_inf^n)`, the scale used for residual tolerances.
pub fn residual_scale(b: &Matrix) -> f64 {
    b.norm_inf().powi(b.rows() as i32).max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tandem_b() -> Matrix {
        Matrix::from_rows(&[vec![1.0, -0.5], vec![0.0, 1.0]]).unwrap()
    }

    #[test]
    fn delete_examples() {
        let d = delete(&Matrix::identity(3), &[1], &[1]).unwrap();
        assert_eq!(d, Matrix::identity(2));
        let b = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(delete(&b, &[0], &[1]).unwrap().to_rows(), vec![vec![3.0]]);
        assert_eq!(delete(&tandem_b(), &[1], &[1]).unwrap().to_rows(), vec![vec![1.0]]);
        let rect = delete(&Matrix::identity(3), &[0, 1], &[2]).unwrap();
        assert_eq!((rect.rows(), rect.cols()), (1, 2));
        assert!(matches!(
            delete(&b, &[2], &[0]),
            Err(Error::IndexOutOfRange { index: 2, dim: 2 })
        ));
    }

    #[test]
    fn adjugate_2x2_and_identity() {
        let b = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(
            adjugate(&b).unwrap().to_rows(),
            vec![vec![4.0, -2.0], vec![-3.0, 1.0]]
        );
        assert_eq!(adjugate(&Matrix::identity(4)).unwrap(), Matrix::identity(4));
    }

    #[test]
    fn adjugate_of_singular_matrix() {
        let b = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        let adj = adjugate(&b).unwrap();
        assert!(b.matmul(&adj).max_abs() < 1e-15);
        assert_ne!(adj.max_abs(), 0.0);
    }

    #[test]
    fn identity_residuals_on_identity() {
        let id = Matrix::identity(4);
        for m in 0..4 {
            assert_eq!(check_det_identity(&id, m).unwrap(), 0.0);
            for l in 0..4 {
                if l != m {
                    assert_eq!(check_adj_identity(&id, m, l).unwrap(), 0.0);
                }
            }
        }
    }

    #[test]
    fn tandem_residuals() {
        let b = tandem_b();
        assert!(check_adj_identity(&b, 0, 1).unwrap() <= 1e-12);
        assert!(check_det_identity(&b, 0).unwrap() <= 1e-12);
        assert!(check_tozd(&b, 1, Some(0)).unwrap() <= 1e-12);
        assert!(check_tozd(&b, 0, None).unwrap() <= 1e-12);
    }

    #[test]
    fn diagonal_single_index_identity_is_trivial() {
        let b = Matrix::diag(&[2.0, 3.0, 5.0]);
        for m in 0..3 {
            assert_eq!(check_tozd(&b, m, None).unwrap(), 0.0);
        }
    }

    #[test]
    fn degenerate_minor_detected() {
        let b = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(
            check_tozd(&b, 0, None),
            Err(Error::DegenerateMinor { .. })
        ));
    }

    #[test]
    fn index_errors() {
        let b = tandem_b();
        assert!(check_adj_identity(&b, 2, 0).is_err());
        assert!(check_adj_identity(&b, 0, 0).is_err());
        assert!(check_det_identity(&b, 5).is_err());
        assert!(check_tozd(&b, 0, Some(0)).is_err());
    }

    #[test]
    fn c_dominance_examples() {
        let c = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.5, 1.0]]).unwrap();
        assert_eq!(check_c_dominance(&c), -0.5);
        assert_eq!(check_c_dominance(&Matrix::identity(3)), -1.0);
        assert_eq!(check_c_dominance(&Matrix::identity(1)), f64::NEG_INFINITY);
    }

    #[test]
    fn selector_skips_deleted_index() {
        assert_eq!(selector(0, 2), 0);
        assert_eq!(selector(3, 2), 2);
    }
}
