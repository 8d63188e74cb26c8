//! Singular-value queries on dense matrices.

use nalgebra::DMatrix;

use super::matrix::{norm, Matrix};
use crate::error::{Error, Result};

/// Default relative rank tolerance.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// Singular values in descending order.
pub fn singular_values(m: &Matrix) -> Vec<f64> {
    let mut sv: Vec<f64> = m.to_nalgebra().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// `min_{|x|=1} |Mx|`. Requires `rows >= cols`; zero rows are allowed.
pub fn smallest_singular_value(m: &Matrix) -> Result<f64> {
    if m.rows() < m.cols() {
        return Err(Error::Dimension(format!(
            "smallest singular value needs rows >= cols, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    Ok(singular_values(m).last().copied().unwrap_or(0.0))
}

/// Numerical rank: singular values above `tol * sigma_max`.
pub fn rank(m: &Matrix, tol: f64) -> usize {
    let sv = singular_values(m);
    let Some(&smax) = sv.first() else { return 0 };
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > tol * smax).count()
}

/// Rank of the rows selected by `idx` (empty selection has rank 0).
pub fn rank_of_rows(m: &Matrix, idx: &[usize], tol: f64) -> usize {
    if idx.is_empty() {
        return 0;
    }
    match m.select_rows(idx) {
        Ok(sub) => rank(&sub, tol),
        Err(_) => 0,
    }
}

/// A unit vector in the numerical kernel of `m` using the default tolerance.
pub fn nullspace_vector(m: &Matrix) -> Option<Vec<f64>> {
    nullspace_vector_with_tol(m, DEFAULT_RANK_TOL)
}

/// A unit vector `v` with `|Mv| <= tol * sigma_max` when `rank(m, tol) < cols`.
pub fn nullspace_vector_with_tol(m: &Matrix, tol: f64) -> Option<Vec<f64>> {
    let n = m.cols();
    if rank(m, tol) >= n {
        return None;
    }
    // Pad to at least n rows so the SVD exposes a full right basis.
    let rows = m.rows().max(n);
    let mut a = DMatrix::<f64>::zeros(rows, n);
    for i in 0..m.rows() {
        for j in 0..n {
            a[(i, j)] = m.get(i, j);
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let mut v: Vec<f64> = v_t.row(k).iter().copied().collect();
    let nv = norm(&v);
    if nv == 0.0 {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= nv);
    // Fix the sign so results are reproducible: first nonzero entry positive.
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    Some(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sigma_min_examples() {
        assert_abs_diff_eq!(
            smallest_singular_value(&Matrix::identity(3)).unwrap(),
            1.0,
            epsilon = 1e-14
        );
        let padded = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]).unwrap();
        assert_abs_diff_eq!(
            smallest_singular_value(&padded).unwrap(),
            1.0,
            epsilon = 1e-14
        );
        let pm = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]).unwrap();
        assert_abs_diff_eq!(
            smallest_singular_value(&pm).unwrap(),
            2f64.sqrt(),
            epsilon = 1e-14
        );
        let wide = Matrix::from_rows(&[[1.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(
            smallest_singular_value(&wide),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank(&Matrix::identity(4), DEFAULT_RANK_TOL), 4);
        let prop = Matrix::from_rows(&[[1.0, 1.0], [2.0, 2.0]]).unwrap();
        assert_eq!(rank(&prop, DEFAULT_RANK_TOL), 1);
        let m = Matrix::from_rows(&[[1.0, -1.0], [-2.0, 2.0], [0.0, 0.0]]).unwrap();
        assert_eq!(rank(&m, DEFAULT_RANK_TOL), 1);
        assert_eq!(rank(&Matrix::zeros(3, 2), DEFAULT_RANK_TOL), 0);
    }

    #[test]
    fn nullspace_examples() {
        let v = nullspace_vector(&Matrix::from_rows(&[[1.0, 0.0]]).unwrap()).unwrap();
        assert_abs_diff_eq!(v[0], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(v[1].abs(), 1.0, epsilon = 1e-14);
        assert!(nullspace_vector(&Matrix::identity(2)).is_none());
        let m = Matrix::from_rows(&[[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let v = nullspace_vector(&m).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(v[0], s, epsilon = 1e-12);
        assert_abs_diff_eq!(v[1], -s, epsilon = 1e-12);
        assert_abs_diff_eq!(v[2], 0.0, epsilon = 1e-12);
    }
}
