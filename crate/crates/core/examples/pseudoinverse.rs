//! SVD, numerical rank and the Moore-Penrose pseudoinverse of a
//! rank-deficient matrix.

use gradsub::matcore::{pseudoinverse, rank, svd, Matrix, RankTolerance};

fn main() -> gradsub::Result<()> {
    let a = Matrix::from_rows(&[&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0], &[1.0, 0.0, 1.0], &[0.0, 1.0, 1.0]])?;
    let f = svd(&a)?;
    println!("singular values {:?}", f.s);
    println!("rank {}", rank(&a, RankTolerance::default())?);

    let p = pseudoinverse(&a, RankTolerance::default())?;
    let residual = a.matmul(&p)?.matmul(&a)?.sub(&a)?.frobenius_norm();
    println!("|A A+ A - A| = {residual:.2e}");

    let tiny = Matrix::diag(&[1.0, 1e-14]);
    println!("rank(diag(1, 1e-14)) = {}", rank(&tiny, RankTolerance::default())?);
    println!("with a cutoff of 1e-16: {}", rank(&tiny, RankTolerance::new(1e-16)?)?);
    Ok(())
}
