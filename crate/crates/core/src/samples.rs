//! Placement of `θ` samples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::base::{wrap, BasePoint};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// `i / n` in 1D; a `k × k` product grid of `i / k` in 2D with `k = ⌈√n⌉`.
    #[default]
    Grid,
    /// Kronecker (R_d) sequence with a random shift drawn from the seed.
    LowDiscrepancy,
}

/// `n` sample points in dimension `dim`. Grid placement ignores the seed.
pub fn place(placement: Placement, dim: usize, n: usize, seed: u64) -> Vec<BasePoint> {
    match placement {
        Placement::Grid => grid(dim, n),
        Placement::LowDiscrepancy => kronecker(dim, n, seed),
    }
}

pub fn grid(dim: usize, n: usize) -> Vec<BasePoint> {
    if dim == 1 {
        (0..n).map(|i| BasePoint::new1(i as f64 / n as f64)).collect()
    } else {
        let k = (n as f64).sqrt().ceil() as usize;
        let mut out = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in 0..k {
                out.push(BasePoint::new2(i as f64 / k as f64, j as f64 / k as f64));
            }
        }
        out
    }
}

fn kronecker(dim: usize, n: usize, seed: u64) -> Vec<BasePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: [f64; 2] = [rng.gen(), rng.gen()];
    // generalised golden ratio: the positive root of x^{d+1} = x + 1
    let phi: f64 = if dim == 1 { 1.618_033_988_749_895 } else { 1.324_717_957_244_746 };
    let a1 = 1.0 / phi;
    let a2 = 1.0 / (phi * phi);
    (0..n)
        .map(|i| {
            let k = (i + 1) as f64;
            if dim == 1 {
                BasePoint::new1(wrap(shift[0] + k * a1))
            } else {
                BasePoint::new2(wrap(shift[0] + k * a1), wrap(shift[1] + k * a2))
            }
        })
        .collect()
}
