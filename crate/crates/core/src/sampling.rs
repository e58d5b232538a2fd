//! Minibatch construction: oversample, then compress with greedy k-center.
//!
//! A [`Sampler`] owns one seeded generator. With both core-set flags off it
//! consumes that generator exactly like [`random_prior_batch`] and
//! [`random_data_batch`], so the two paths agree draw for draw.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::distributions::{Distribution, Uniform};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{greedy_coreset_from, PointSet};
use crate::projection::{DataPool, DEFAULT_PROJECTION_DIM};

/// Uniform prior over the hypercube `[low, high]^dim`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub dim: usize,
    pub low: f64,
    pub high: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            dim: 2,
            low: -1.0,
            high: 1.0,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::contract("prior dimension must be at least 1"));
        }
        if !(self.low.is_finite() && self.high.is_finite() && self.low < self.high) {
            return Err(Error::contract(format!(
                "prior bounds must satisfy low < high, got [{}, {}]",
                self.low, self.high
            )));
        }
        Ok(())
    }
}

/// Which sampling sites use core-set compression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoresetMode {
    Both,
    Prior,
    Target,
    None,
}

impl CoresetMode {
    pub fn flags(self) -> (bool, bool) {
        match self {
            CoresetMode::Both => (true, true),
            CoresetMode::Prior => (true, false),
            CoresetMode::Target => (false, true),
            CoresetMode::None => (false, false),
        }
    }
}

impl fmt::Display for CoresetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoresetMode::Both => "both",
            CoresetMode::Prior => "prior",
            CoresetMode::Target => "target",
            CoresetMode::None => "none",
        })
    }
}

impl FromStr for CoresetMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "both" => Ok(CoresetMode::Both),
            "prior" => Ok(CoresetMode::Prior),
            "target" => Ok(CoresetMode::Target),
            "none" => Ok(CoresetMode::None),
            other => Err(format!("unknown core-set mode `{other}` (expected both, prior, target or none)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub batch_size: usize,
    pub prior_factor: usize,
    pub target_factor: usize,
    pub coreset_prior: bool,
    pub coreset_target: bool,
    /// Dimension of the random projection applied to data embeddings;
    /// `None` selects on raw embeddings.
    pub projection_dim: Option<usize>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            batch_size: 128,
            prior_factor: 4,
            target_factor: 8,
            coreset_prior: true,
            coreset_target: true,
            projection_dim: Some(DEFAULT_PROJECTION_DIM),
        }
    }
}

impl SamplerConfig {
    pub fn with_mode(mut self, mode: CoresetMode) -> Self {
        (self.coreset_prior, self.coreset_target) = mode.flags();
        self
    }

    pub fn mode(&self) -> CoresetMode {
        match (self.coreset_prior, self.coreset_target) {
            (true, true) => CoresetMode::Both,
            (true, false) => CoresetMode::Prior,
            (false, true) => CoresetMode::Target,
            (false, false) => CoresetMode::None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::contract("batch size must be at least 1"));
        }
        if self.prior_factor == 0 || self.target_factor == 0 {
            return Err(Error::contract("oversampling factors must be at least 1"));
        }
        if self.projection_dim == Some(0) {
            return Err(Error::contract("projection dimension must be at least 1"));
        }
        self.prior_factor
            .checked_mul(self.batch_size)
            .and(self.target_factor.checked_mul(self.batch_size))
            .ok_or_else(|| Error::contract("oversampled pool size overflows"))?;
        Ok(())
    }

    /// Number of prior draws per batch.
    pub fn prior_pool_size(&self) -> usize {
        if self.coreset_prior {
            self.prior_factor * self.batch_size
        } else {
            self.batch_size
        }
    }

    /// Number of data rows drawn per batch.
    pub fn target_pool_size(&self) -> usize {
        if self.coreset_target {
            self.target_factor * self.batch_size
        } else {
            self.batch_size
        }
    }
}

fn uniform_points<R: Rng + ?Sized>(prior: &PriorSpec, count: usize, rng: &mut R) -> Array2<f64> {
    let dist = Uniform::new_inclusive(prior.low, prior.high);
    Array2::from_shape_simple_fn((count, prior.dim), || dist.sample(rng))
}

/// Seeded batch source for one training loop.
#[derive(Debug, Clone)]
pub struct Sampler {
    cfg: SamplerConfig,
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(cfg: SamplerConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        Ok(Sampler {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.cfg
    }

    /// `batch_size x dim` prior batch; a core-set of `prior_factor x batch_size`
    /// uniform draws when prior compression is on.
    pub fn prior_batch(&mut self, prior: &PriorSpec) -> Result<Array2<f64>> {
        prior.validate()?;
        let k = self.cfg.batch_size;
        let pool = uniform_points(prior, self.cfg.prior_pool_size(), &mut self.rng);
        if !self.cfg.coreset_prior {
            return Ok(pool);
        }
        let points = PointSet::new(pool)?;
        let first = self.rng.gen_range(0..points.len());
        let sel = greedy_coreset_from(&points, k, first)?;
        points.select_rows(&sel.indices).map(PointSet::into_inner)
    }

    /// Row positions (into `pool`) of the next data batch.
    pub fn data_batch_rows(&mut self, pool: &DataPool) -> Result<Vec<usize>> {
        let k = self.cfg.batch_size;
        let n = self.cfg.target_pool_size();
        if pool.len() < n {
            return Err(Error::PoolExhausted {
                needed: n,
                available: pool.len(),
            });
        }
        let drawn = index::sample(&mut self.rng, pool.len(), n).into_vec();
        if !self.cfg.coreset_target {
            return Ok(drawn);
        }
        let candidates = pool.points().select_rows(&drawn)?;
        let first = self.rng.gen_range(0..n);
        let sel = greedy_coreset_from(&candidates, k, first)?;
        Ok(sel.indices.iter().map(|&i| drawn[i]).collect())
    }

    /// Dataset ids of the next data batch.
    pub fn data_batch(&mut self, pool: &DataPool) -> Result<Vec<u64>> {
        let rows = self.data_batch_rows(pool)?;
        Ok(rows.into_iter().map(|r| pool.ids()[r]).collect())
    }
}

pub fn sample_prior_batch(prior: &PriorSpec, cfg: &SamplerConfig, seed: u64) -> Result<Array2<f64>> {
    Sampler::new(*cfg, seed)?.prior_batch(prior)
}

pub fn sample_data_batch(pool: &DataPool, cfg: &SamplerConfig, seed: u64) -> Result<Vec<u64>> {
    Sampler::new(*cfg, seed)?.data_batch(pool)
}

/// Baseline: `k` i.i.d. uniform prior draws.
pub fn random_prior_batch(prior: &PriorSpec, k: usize, seed: u64) -> Result<Array2<f64>> {
    prior.validate()?;
    if k == 0 {
        return Err(Error::contract("batch size must be at least 1"));
    }
    Ok(uniform_points(prior, k, &mut ChaCha8Rng::seed_from_u64(seed)))
}

/// Baseline: `k` ids drawn uniformly without replacement.
pub fn random_data_batch(ids: &[u64], k: usize, seed: u64) -> Result<Vec<u64>> {
    if k == 0 {
        return Err(Error::contract("batch size must be at least 1"));
    }
    if k > ids.len() {
        return Err(Error::PoolExhausted {
            needed: k,
            available: ids.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(index::sample(&mut rng, ids.len(), k)
        .into_iter()
        .map(|i| ids[i])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::coverage_radius;
    use std::collections::HashSet;

    fn off(k: usize) -> SamplerConfig {
        SamplerConfig {
            batch_size: k,
            ..SamplerConfig::default()
        }
        .with_mode(CoresetMode::None)
    }

    fn scattered_pool(n: usize, seed: u64) -> DataPool {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = Array2::from_shape_simple_fn((n, 2), || rng.gen_range(-5.0..5.0));
        let ids = (0..n as u64).map(|i| 1000 + 3 * i).collect();
        DataPool::new(PointSet::new(pts).unwrap(), ids).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(SamplerConfig::default().validate().is_ok());
        assert!(SamplerConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(SamplerConfig { prior_factor: 0, ..Default::default() }.validate().is_err());
        assert!(SamplerConfig { projection_dim: Some(0), ..Default::default() }.validate().is_err());
        assert!(PriorSpec { low: 1.0, high: 1.0, dim: 2 }.validate().is_err());
        assert!(PriorSpec { dim: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn mode_parsing() {
        for m in [CoresetMode::Both, CoresetMode::Prior, CoresetMode::Target, CoresetMode::None] {
            assert_eq!(m.to_string().parse::<CoresetMode>().unwrap(), m);
            assert_eq!(SamplerConfig::default().with_mode(m).mode(), m);
        }
        assert!("all".parse::<CoresetMode>().is_err());
    }

    #[test]
    fn prior_batch_sizes_and_bounds() {
        let prior = PriorSpec { dim: 3, low: -0.5, high: 2.0 };
        let cfg = SamplerConfig { batch_size: 128, ..Default::default() };
        assert_eq!(cfg.prior_pool_size(), 512);
        let b = sample_prior_batch(&prior, &cfg, 1).unwrap();
        assert_eq!(b.dim(), (128, 3));
        assert!(b.iter().all(|&v| (-0.5..=2.0).contains(&v)));
    }

    #[test]
    fn prior_factor_one_returns_the_whole_draw() {
        let prior = PriorSpec::default();
        let cfg = SamplerConfig { batch_size: 16, prior_factor: 1, ..Default::default() };
        let b = sample_prior_batch(&prior, &cfg, 9).unwrap();
        // Same stream, no oversampling: the core-set is a reordering of the draw.
        let raw = random_prior_batch(&prior, 16, 9).unwrap();
        let key = |a: &Array2<f64>| {
            let mut rows: Vec<Vec<u64>> = a.rows().into_iter().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect();
            rows.sort();
            rows
        };
        assert_eq!(key(&b), key(&raw));
    }

    #[test]
    fn flags_off_matches_random_baseline() {
        let prior = PriorSpec::default();
        let cfg = off(32);
        assert_eq!(
            sample_prior_batch(&prior, &cfg, 44).unwrap(),
            random_prior_batch(&prior, 32, 44).unwrap()
        );
        let pool = scattered_pool(300, 1);
        assert_eq!(
            sample_data_batch(&pool, &cfg, 45).unwrap(),
            random_data_batch(pool.ids(), 32, 45).unwrap()
        );
    }

    #[test]
    fn data_batch_ids_come_from_pool_once() {
        let pool = scattered_pool(1024, 2);
        let cfg = SamplerConfig { batch_size: 128, ..Default::default() };
        assert_eq!(cfg.target_pool_size(), 1024);
        let ids = sample_data_batch(&pool, &cfg, 3).unwrap();
        assert_eq!(ids.len(), 128);
        let set: HashSet<_> = ids.iter().collect();
        assert_eq!(set.len(), 128);
        let all: HashSet<_> = pool.ids().iter().collect();
        assert!(ids.iter().all(|id| all.contains(id)));
    }

    #[test]
    fn target_factor_one_is_a_random_subset() {
        let pool = scattered_pool(50, 3);
        let cfg = SamplerConfig { batch_size: 10, target_factor: 1, ..Default::default() };
        let mut ids = sample_data_batch(&pool, &cfg, 8).unwrap();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 10);
    }

    #[test]
    fn pool_exhausted() {
        let pool = scattered_pool(100, 4);
        let cfg = SamplerConfig { batch_size: 16, ..Default::default() };
        assert!(matches!(
            sample_data_batch(&pool, &cfg, 0),
            Err(Error::PoolExhausted { needed: 128, available: 100 })
        ));
        assert!(random_data_batch(pool.ids(), 101, 0).is_err());
    }

    #[test]
    fn random_batch_examples() {
        let ids: Vec<u64> = (0..20).collect();
        let mut all = random_data_batch(&ids, 20, 5).unwrap();
        all.sort_unstable();
        assert_eq!(all, ids);
        assert_eq!(random_data_batch(&ids, 7, 5).unwrap(), random_data_batch(&ids, 7, 5).unwrap());
        assert_eq!(random_data_batch(&ids, 1, 5).unwrap().len(), 1);
        assert_eq!(random_prior_batch(&PriorSpec::default(), 1, 5).unwrap().dim(), (1, 2));
        assert!(random_prior_batch(&PriorSpec::default(), 0, 5).is_err());
    }

    #[test]
    fn coreset_prior_batch_covers_pool_better() {
        let prior = PriorSpec::default();
        let cfg = SamplerConfig { batch_size: 32, prior_factor: 8, ..Default::default() };
        let mut core_sum = 0.0;
        let mut rand_sum = 0.0;
        for seed in 0..100 {
            // Re-derive the pool the sampler drew to measure coverage over it.
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pool = PointSet::new(uniform_points(&prior, 256, &mut rng)).unwrap();
            let first = rng.gen_range(0..256);
            let sel = greedy_coreset_from(&pool, 32, first).unwrap();
            let batch = sample_prior_batch(&prior, &cfg, seed).unwrap();
            assert_eq!(pool.select_rows(&sel.indices).unwrap().into_inner(), batch);
            core_sum += sel.coverage_radius;

            let subset = index::sample(&mut ChaCha8Rng::seed_from_u64(seed + 1000), 256, 32).into_vec();
            rand_sum += coverage_radius(&pool, &subset).unwrap();
        }
        assert!(core_sum < rand_sum, "core-set {core_sum} vs random {rand_sum}");
    }

    #[test]
    fn coreset_data_batch_hits_every_cluster() {
        // 8 tight clusters; cluster 0 is heavily overrepresented.
        let centers: Vec<[f64; 2]> = (0..8).map(|c| [10.0 * c as f64, 0.0]).collect();
        let mut rows = Vec::new();
        let mut cluster = Vec::new();
        for i in 0..2000 {
            let c = if i < 1650 { 0 } else { 1 + (i % 7) };
            let jitter = (i % 13) as f64 * 1e-3;
            rows.push(vec![centers[c][0] + jitter, centers[c][1] - jitter]);
            cluster.push(c);
        }
        let pool = DataPool::with_row_ids(PointSet::from_rows(&rows).unwrap());
        let cfg = SamplerConfig { batch_size: 8, target_factor: 16, ..Default::default() };
        let random_cfg = cfg.with_mode(CoresetMode::None);
        let (mut core_hits, mut rand_hits) = (0usize, 0usize);
        for seed in 0..100 {
            let hit = |ids: Vec<u64>| ids.iter().map(|&i| cluster[i as usize]).collect::<HashSet<_>>().len();
            let c = hit(sample_data_batch(&pool, &cfg, seed).unwrap());
            let r = hit(sample_data_batch(&pool, &random_cfg, seed).unwrap());
            core_hits += c;
            rand_hits += r;
        }
        assert!(core_hits > rand_hits, "{core_hits} vs {rand_hits}");
    }

    #[test]
    fn sampler_is_deterministic() {
        let pool = scattered_pool(600, 9);
        let cfg = SamplerConfig { batch_size: 64, ..Default::default() };
        let mut a = Sampler::new(cfg, 77).unwrap();
        let mut b = Sampler::new(cfg, 77).unwrap();
        for _ in 0..3 {
            assert_eq!(a.prior_batch(&PriorSpec::default()).unwrap(), b.prior_batch(&PriorSpec::default()).unwrap());
            assert_eq!(a.data_batch(&pool).unwrap(), b.data_batch(&pool).unwrap());
        }
    }
}
