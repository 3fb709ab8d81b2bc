//! Similarity of two column spaces, and why rescaling or mixing columns
//! does not change it.

use gradsub::matcore::{Matrix, RankTolerance};
use gradsub::subspace::{pss_cross_check, pss_trace};

fn main() -> gradsub::Result<()> {
    let tol = RankTolerance::default();
    let a = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]])?;
    let b = Matrix::from_rows(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]])?;

    let r = pss_trace(&a, &b, tol)?;
    println!("pss(a, b) = {:.6} with ranks {} and {}", r.value, r.rank_a, r.rank_b);
    println!("explicit projectors agree: {:.6}", pss_cross_check(&a, &b, tol)?);

    let mix = Matrix::from_rows(&[&[3.0, 1.0], &[-2.0, 0.5]])?;
    let moved = pss_trace(&a.matmul(&mix)?, &b, tol)?;
    println!("after mixing the columns of a: {:.6}", moved.value);

    let same = pss_trace(&a, &a.scale(1e-6), tol)?;
    println!("pss(a, 1e-6 a) = {:.6}", same.value);
    Ok(())
}
