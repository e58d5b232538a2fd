use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Half-width of the square the grid mixture is laid out on.
pub const GRID_HALF_SPAN: f64 = 4.0;

/// Equal-weight mixture of isotropic 2-D Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixtureSpec {
    centers: Array2<f64>,
    sigma: f64,
}

impl GaussianMixtureSpec {
    pub fn new(centers: Array2<f64>, sigma: f64) -> Result<Self> {
        if centers.nrows() == 0 || centers.ncols() != 2 {
            return Err(Error::contract(format!(
                "mixture centers must be M x 2 with M >= 1, got {:?}",
                centers.dim()
            )));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::contract(format!("sigma must be positive, got {sigma}")));
        }
        if centers.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("mixture centers must be finite"));
        }
        Ok(GaussianMixtureSpec { centers, sigma })
    }

    pub fn centers(&self) -> &Array2<f64> {
        &self.centers
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn modes(&self) -> usize {
        self.centers.nrows()
    }

    /// Draws `count` samples from `rng`.
    pub fn sample_with<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Array2<f64> {
        let m = self.modes();
        let mut out = Array2::zeros((count, 2));
        for mut row in out.rows_mut() {
            let c = rng.gen_range(0..m);
            let dx: f64 = rng.sample(StandardNormal);
            let dy: f64 = rng.sample(StandardNormal);
            row[0] = self.centers[[c, 0]] + self.sigma * dx;
            row[1] = self.centers[[c, 1]] + self.sigma * dy;
        }
        out
    }
}

/// `modes` centers on a square grid spanning `[-4, 4]^2` (origin for M = 1).
pub fn make_grid_mixture(modes: usize, sigma: f64) -> Result<GaussianMixtureSpec> {
    let side = (modes as f64).sqrt().round() as usize;
    if modes == 0 || side * side != modes {
        return Err(Error::contract(format!(
            "number of modes must be a positive perfect square, got {modes}"
        )));
    }
    let coord = |i: usize| {
        if side == 1 {
            0.0
        } else {
            -GRID_HALF_SPAN + 2.0 * GRID_HALF_SPAN * i as f64 / (side - 1) as f64
        }
    };
    let mut centers = Array2::zeros((modes, 2));
    for i in 0..side {
        for j in 0..side {
            let row = i * side + j;
            centers[[row, 0]] = coord(i);
            centers[[row, 1]] = coord(j);
        }
    }
    GaussianMixtureSpec::new(centers, sigma)
}

pub fn sample_mixture(mixture: &GaussianMixtureSpec, count: usize, seed: u64) -> Result<Array2<f64>> {
    if count == 0 {
        return Err(Error::contract("sample count must be at least 1"));
    }
    Ok(mixture.sample_with(count, &mut ChaCha8Rng::seed_from_u64(seed)))
}
