//! Seeded generators shared by initialization, task synthesis and the CLI.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::Matrix;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Matrix with i.i.d. `N(0, std^2)` entries, filled row-major.
pub fn gaussian_matrix(rng: &mut Rng, rows: usize, cols: usize, std: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * std
        })
        .collect();
    Matrix::from_parts(rows, cols, data)
}

/// The synthetic weight behind `gen:MxN:seed`: entries `N(0, 1/n)`.
///
/// Low-rank tasks use the same routine for their base weight, so an adapter
/// initialized from `gen:MxN:seed` matches `lowrank:M:N:GAP:seed`.
pub fn synthetic_weight(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = seeded(seed);
    gaussian_matrix(&mut rng, rows, cols, 1.0 / crate::math::sqrt(cols.max(1) as f64))
}
