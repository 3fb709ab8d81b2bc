//! Orthogonal projectors and projection-space similarity (PSS) between the
//! column spaces of two gradient matrices.
//!
//! For `P_a = G_a G_a⁺` and `P_b = G_b G_b⁺`,
//!
//! ```text
//! PSS(G_a, G_b) = tr(P_a P_b) / min(rank G_a, rank G_b)
//! ```
//!
//! which is the mean squared cosine of the principal angles between the two
//! ranges. [`pss_trace`] evaluates it through orthonormal bases,
//! `tr(P_a P_b) = ‖Q_aᵀ Q_b‖²_F`, and [`pss_cross_check`] forms the explicit
//! projectors.

use crate::error::{Error, Result};
use crate::matcore::{self, orthonormal_range_basis, Matrix, RankTolerance};

/// Values outside `[0, 1]` by at most this much are roundoff and get clamped.
pub const CLAMP_SLACK: f64 = 1e-12;

/// Largest row dimension for which [`pss_cross_check`] forms `m x m`
/// projectors.
pub const CROSS_CHECK_MAX_DIM: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct PssResult {
    pub value: f64,
    pub rank_a: usize,
    pub rank_b: usize,
    /// Cosines of the principal angles, non-increasing,
    /// `min(rank_a, rank_b)` of them.
    pub principal_cosines: Vec<f64>,
}

impl PssResult {
    pub fn mean_squared_cosine(&self) -> f64 {
        let n = self.principal_cosines.len() as f64;
        self.principal_cosines.iter().map(|c| c * c).sum::<f64>() / n
    }
}

/// `P = G G⁺`, the orthogonal projector onto `range(g)`.
pub fn projector(g: &Matrix, tol: RankTolerance) -> Result<Matrix> {
    let f = matcore::svd(g)?;
    if f.rank(tol) == 0 {
        return Err(Error::EmptySubspace("projector of a rank-zero matrix".into()));
    }
    let pinv = matcore::pinv_from_factors(&f, tol);
    g.matmul(&pinv)
}

fn clamp_unit(v: f64) -> Result<f64> {
    if v < -CLAMP_SLACK || v > 1.0 + CLAMP_SLACK || v.is_nan() {
        return Err(Error::CosineOutOfRange(v));
    }
    Ok(v.clamp(0.0, 1.0))
}

fn bases(g_a: &Matrix, g_b: &Matrix, tol: RankTolerance) -> Result<(Matrix, Matrix)> {
    if g_a.rows() != g_b.rows() {
        return Err(Error::DimensionMismatch(format!(
            "gradients have {} and {} rows",
            g_a.rows(),
            g_b.rows()
        )));
    }
    let qa = orthonormal_range_basis(g_a, tol)
        .map_err(|e| relabel_empty(e, "first gradient vanished"))?;
    let qb = orthonormal_range_basis(g_b, tol)
        .map_err(|e| relabel_empty(e, "second gradient vanished"))?;
    Ok((qa, qb))
}

fn relabel_empty(e: Error, what: &str) -> Error {
    match e {
        Error::EmptySubspace(_) => Error::EmptySubspace(what.to_string()),
        other => other,
    }
}

fn cosines_from_bases(qa: &Matrix, qb: &Matrix) -> Result<Vec<f64>> {
    let cross = qa.tr_matmul(qb)?;
    let k = qa.cols().min(qb.cols());
    let f = matcore::svd(&cross)?;
    f.s[..k].iter().map(|s| clamp_unit(*s)).collect()
}

/// Cosines of the principal angles between `range(g_a)` and `range(g_b)`:
/// the singular values of `Q_aᵀ Q_b`.
pub fn principal_cosines(g_a: &Matrix, g_b: &Matrix, tol: RankTolerance) -> Result<Vec<f64>> {
    let (qa, qb) = bases(g_a, g_b, tol)?;
    cosines_from_bases(&qa, &qb)
}

/// Projection-space similarity via orthonormal range bases.
pub fn pss_trace(g_a: &Matrix, g_b: &Matrix, tol: RankTolerance) -> Result<PssResult> {
    let (qa, qb) = bases(g_a, g_b, tol)?;
    let (rank_a, rank_b) = (qa.cols(), qb.cols());
    let cross = qa.tr_matmul(&qb)?;
    let fro2: f64 = cross.as_slice().iter().map(|v| v * v).sum();
    let value = clamp_unit(fro2 / rank_a.min(rank_b) as f64)?;
    let principal_cosines = cosines_from_bases(&qa, &qb)?;
    Ok(PssResult {
        value,
        rank_a,
        rank_b,
        principal_cosines,
    })
}

/// The literal quotient `tr(P_a P_b) / min(r_a, r_b)` with explicit
/// projectors. Only for `m <= CROSS_CHECK_MAX_DIM`.
pub fn pss_cross_check(g_a: &Matrix, g_b: &Matrix, tol: RankTolerance) -> Result<f64> {
    if g_a.rows() != g_b.rows() {
        return Err(Error::DimensionMismatch(format!(
            "gradients have {} and {} rows",
            g_a.rows(),
            g_b.rows()
        )));
    }
    let m = g_a.rows();
    if m > CROSS_CHECK_MAX_DIM {
        return Err(Error::DimensionTooLarge(format!(
            "{m} rows exceeds the explicit-projector limit {CROSS_CHECK_MAX_DIM}"
        )));
    }
    let fa = matcore::svd(g_a)?;
    let fb = matcore::svd(g_b)?;
    let (ra, rb) = (fa.rank(tol), fb.rank(tol));
    if ra == 0 || rb == 0 {
        return Err(Error::EmptySubspace("probe gradient vanished".into()));
    }
    let pa = g_a.matmul(&matcore::pinv_from_factors(&fa, tol))?;
    let pb = g_b.matmul(&matcore::pinv_from_factors(&fb, tol))?;
    // tr(P_a P_b) = Σ_ij P_a[i,j] P_b[j,i]
    let mut tr = 0.0;
    for i in 0..m {
        for j in 0..m {
            tr += pa.get(i, j) * pb.get(j, i);
        }
    }
    Ok(tr / ra.min(rb) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Matrix {
        Matrix::new(v.len(), 1, v.to_vec()).unwrap()
    }

    fn tol() -> RankTolerance {
        RankTolerance::default()
    }

    #[test]
    fn projector_examples() {
        let p = projector(&col(&[1.0, 0.0, 0.0]), tol()).unwrap();
        assert_eq!(p, Matrix::diag(&[1.0, 0.0, 0.0]));

        let g = Matrix::from_rows(&[&[2.0, 1.0], &[0.0, 3.0]]).unwrap();
        let p = projector(&g, tol()).unwrap();
        for (a, b) in p.as_slice().iter().zip(Matrix::identity(2).as_slice()) {
            assert!((a - b).abs() < 1e-14);
        }

        let p = projector(&col(&[1.0, 1.0]), tol()).unwrap();
        for v in p.as_slice() {
            assert!((v - 0.5).abs() < 1e-15);
        }
        assert!(matches!(
            projector(&Matrix::zeros(2, 2), tol()),
            Err(Error::EmptySubspace(_))
        ));
    }

    #[test]
    fn forty_five_degrees() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let r = pss_trace(&col(&[1.0, 0.0]), &col(&[h, h]), tol()).unwrap();
        assert!((r.value - 0.5).abs() < 1e-12);
        assert!((r.principal_cosines[0] - h).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_and_identical() {
        let r = pss_trace(&col(&[1.0, 0.0]), &col(&[0.0, 1.0]), tol()).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.principal_cosines, vec![0.0]);

        let g = Matrix::from_rows(&[&[1.0, 2.0], &[0.5, -1.0], &[3.0, 0.0]]).unwrap();
        let r = pss_trace(&g, &g, tol()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shared_axis_plus_orthogonal_pair() {
        let a = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]]).unwrap();
        let b = Matrix::from_rows(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        let r = pss_trace(&a, &b, tol()).unwrap();
        assert!((r.value - 0.5).abs() < 1e-12);
        assert!((r.principal_cosines[0] - 1.0).abs() < 1e-12);
        assert!(r.principal_cosines[1].abs() < 1e-12);
        assert!((pss_cross_check(&a, &b, tol()).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn error_paths() {
        let a = Matrix::identity(3);
        let b = Matrix::identity(2);
        assert!(matches!(pss_trace(&a, &b, tol()), Err(Error::DimensionMismatch(_))));
        let z = Matrix::zeros(3, 2);
        assert!(matches!(pss_trace(&a, &z, tol()), Err(Error::EmptySubspace(_))));
        assert!(matches!(
            principal_cosines(&z, &a, tol()),
            Err(Error::EmptySubspace(_))
        ));
        let big = Matrix::identity(CROSS_CHECK_MAX_DIM + 1);
        assert!(matches!(
            pss_cross_check(&big, &big, tol()),
            Err(Error::DimensionTooLarge(_))
        ));
    }
}
