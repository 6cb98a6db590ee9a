//! Orthogonal weight initialization.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

/// Draws a `rows x cols` matrix whose smaller dimension is orthonormal,
/// scaled by `gain`.
///
/// For tall matrices the columns are orthonormal (`W^T W = gain^2 I`), for
/// wide matrices the rows are (`W W^T = gain^2 I`). Uses modified
/// Gram-Schmidt on a Gaussian draw; re-draws degenerate columns, which is a
/// probability-zero event in practice.
pub fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Array2<f64> {
    let transpose = rows < cols;
    let (tall_r, tall_c) = if transpose { (cols, rows) } else { (rows, cols) };

    let mut q = Array2::<f64>::zeros((tall_r, tall_c));
    for j in 0..tall_c {
        loop {
            for i in 0..tall_r {
                q[(i, j)] = rng.sample::<f64, _>(StandardNormal);
            }
            // Orthogonalize against previous columns.
            for k in 0..j {
                let dot: f64 = (0..tall_r).map(|i| q[(i, j)] * q[(i, k)]).sum();
                for i in 0..tall_r {
                    q[(i, j)] -= dot * q[(i, k)];
                }
            }
            let norm: f64 = (0..tall_r).map(|i| q[(i, j)] * q[(i, j)]).sum::<f64>().sqrt();
            if norm > 1e-8 {
                for i in 0..tall_r {
                    q[(i, j)] /= norm;
                }
                break;
            }
        }
    }

    // Keep the result in standard (row-major) layout even on the transposed
    // path: `t().to_owned()` would stay column-major, and a checkpoint
    // round-trip would then change the dot-product summation order.
    let q = if transpose {
        let mut out = Array2::zeros((rows, cols));
        out.assign(&q.t());
        out
    } else {
        q
    };
    q * gain
}
