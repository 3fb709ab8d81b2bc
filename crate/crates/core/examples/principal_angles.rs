//! Principal cosines between two random 3-dimensional subspaces of R^8,
//! and their link to the similarity score.

use gradsub::matcore::{Matrix, RankTolerance};
use gradsub::rng::SeededRng;
use gradsub::subspace::{principal_cosines, pss_trace};

fn random(rng: &mut SeededRng, rows: usize, cols: usize) -> Matrix {
    Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).unwrap()
}

fn main() -> gradsub::Result<()> {
    let mut rng = SeededRng::new(3);
    let tol = RankTolerance::default();
    let a = random(&mut rng, 8, 3);
    let b = random(&mut rng, 8, 3);

    let cos = principal_cosines(&a, &b, tol)?;
    for (i, c) in cos.iter().enumerate() {
        println!("angle {i}: cos {c:.4} ({:.1} degrees)", c.acos().to_degrees());
    }
    let r = pss_trace(&a, &b, tol)?;
    println!("pss {:.6}, mean squared cosine {:.6}", r.value, r.mean_squared_cosine());
    Ok(())
}
