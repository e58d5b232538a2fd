//! Cached embeddings and Gaussian random projections.
//!
//! Binary cache layout (little-endian):
//!
//! ```text
//! magic   b"SGEC"
//! version u32 = 1
//! n       u64
//! d       u32
//! ids     n x u64
//! values  n x d x f32, row-major
//! ```

use std::collections::HashSet;
use std::fs;
use std::io::Read;
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::binio::ByteReader;
use crate::error::{Error, Result};
use crate::geometry::PointSet;

pub const CACHE_MAGIC: [u8; 4] = *b"SGEC";
pub const CACHE_VERSION: u32 = 1;
pub const DEFAULT_PROJECTION_DIM: usize = 32;

/// An `m x d` Gaussian matrix mapping `d`-dimensional vectors to `m`
/// dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    matrix: Array2<f64>,
    seed: u64,
}

impl ProjectionMatrix {
    /// Wraps an explicit matrix (for fixtures such as the identity).
    pub fn from_matrix(matrix: Array2<f64>, seed: u64) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.nrows() > matrix.ncols() {
            return Err(Error::contract(format!(
                "projection must be m x d with 1 <= m <= d, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("projection entries must be finite"));
        }
        Ok(ProjectionMatrix { matrix, seed })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Projects raw row vectors (one per row).
    pub fn apply(&self, rows: &Array2<f64>) -> Result<Array2<f64>> {
        if rows.ncols() != self.input_dim() {
            return Err(Error::contract(format!(
                "vectors have dimension {} but the projection expects {}",
                rows.ncols(),
                self.input_dim()
            )));
        }
        Ok(rows.dot(&self.matrix.t()))
    }
}

/// Draws an `output_dim x input_dim` matrix with i.i.d. N(0, 1/output_dim)
/// entries.
pub fn make_projection(input_dim: usize, output_dim: usize, seed: u64) -> Result<ProjectionMatrix> {
    if output_dim == 0 || output_dim > input_dim {
        return Err(Error::contract(format!(
            "projection output dimension {output_dim} must be in 1..={input_dim}"
        )));
    }
    let std = (1.0 / output_dim as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let matrix = Array2::from_shape_simple_fn((output_dim, input_dim), || normal.sample(&mut rng));
    ProjectionMatrix::from_matrix(matrix, seed)
}

/// Precomputed feature vectors keyed by dataset index.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingCache {
    ids: Vec<u64>,
    vectors: Array2<f32>,
}

impl EmbeddingCache {
    pub fn new(ids: Vec<u64>, vectors: Array2<f32>) -> Result<Self> {
        if ids.len() != vectors.nrows() {
            return Err(Error::contract(format!(
                "{} ids for {} vectors",
                ids.len(),
                vectors.nrows()
            )));
        }
        if ids.is_empty() || vectors.ncols() == 0 {
            return Err(Error::contract("embedding cache must hold at least one 1-d vector"));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        if let Some(dup) = ids.iter().find(|id| !seen.insert(**id)) {
            return Err(Error::contract(format!("duplicate id {dup}")));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("embedding values must be finite"));
        }
        let vectors = vectors.as_standard_layout().into_owned();
        Ok(EmbeddingCache { ids, vectors })
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn vectors(&self) -> &Array2<f32> {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.len();
        let d = self.dim();
        let mut out = Vec::with_capacity(20 + 8 * n + 4 * n * d);
        out.extend_from_slice(&CACHE_MAGIC);
        out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&(d as u32).to_le_bytes());
        for id in &self.ids {
            out.extend_from_slice(&id.to_le_bytes());
        }
        for v in self.vectors.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let magic = r.take("magic", 4)?;
        if magic != CACHE_MAGIC {
            return Err(Error::format("magic", format!("expected \"SGEC\", found {magic:?}")));
        }
        let version = r.u32("version")?;
        if version != CACHE_VERSION {
            return Err(Error::format(
                "version",
                format!("unsupported version {version}, expected {CACHE_VERSION}"),
            ));
        }
        let n = r.u64("n")?;
        let d = r.u32("d")? as u64;
        if n == 0 {
            return Err(Error::format("n", "cache holds no vectors"));
        }
        if d == 0 {
            return Err(Error::format("d", "vector dimension is zero"));
        }
        let ids_len = n.checked_mul(8).ok_or_else(|| Error::format("n", "row count overflows"))?;
        let values_len = n
            .checked_mul(d)
            .and_then(|v| v.checked_mul(4))
            .ok_or_else(|| Error::format("d", "matrix size overflows"))?;
        let ids_bytes = r.take("ids", usize::try_from(ids_len).map_err(|_| Error::format("n", "too large"))?)?;
        let ids: Vec<u64> = ids_bytes
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let value_bytes = r.take(
            "values",
            usize::try_from(values_len).map_err(|_| Error::format("d", "too large"))?,
        )?;
        let values: Vec<f32> = value_bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        if r.remaining() != 0 {
            return Err(Error::format(
                "values",
                format!("{} trailing bytes after the value block", r.remaining()),
            ));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        if let Some(dup) = ids.iter().find(|id| !seen.insert(**id)) {
            return Err(Error::format("ids", format!("duplicate id {dup}")));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::format("values", format!("entry {pos} is not finite")));
        }
        let vectors = Array2::from_shape_vec((n as usize, d as usize), values)
            .map_err(|e| Error::format("values", e.to_string()))?;
        Ok(EmbeddingCache { ids, vectors })
    }

    /// Parses `id,v0,v1,...` rows. A leading header row is skipped when its
    /// first field is not an integer.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut ids = Vec::new();
        let mut values = Vec::new();
        let mut dim: Option<usize> = None;
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::format("csv", e.to_string()))?;
            let Some(first) = rec.get(0) else { continue };
            let id = match first.parse::<u64>() {
                Ok(id) => id,
                Err(_) if line == 0 => continue,
                Err(e) => return Err(Error::format("ids", format!("line {}: {e}", line + 1))),
            };
            let row_dim = rec.len() - 1;
            match dim {
                None => dim = Some(row_dim),
                Some(d) if d != row_dim => {
                    return Err(Error::format(
                        "d",
                        format!("line {} has {row_dim} values, expected {d}", line + 1),
                    ))
                }
                _ => {}
            }
            ids.push(id);
            for field in rec.iter().skip(1) {
                let v = field
                    .parse::<f32>()
                    .map_err(|e| Error::format("values", format!("line {}: {e}", line + 1)))?;
                values.push(v);
            }
        }
        let d = dim.ok_or_else(|| Error::format("n", "no data rows"))?;
        if d == 0 {
            return Err(Error::format("d", "rows carry no values"));
        }
        let vectors = Array2::from_shape_vec((ids.len(), d), values)
            .map_err(|e| Error::format("values", e.to_string()))?;
        EmbeddingCache::new(ids, vectors).map_err(|e| match e {
            Error::Contract(msg) if msg.contains("duplicate") => Error::format("ids", msg),
            Error::Contract(msg) => Error::format("values", msg),
            other => other,
        })
    }

    /// Raw vectors widened to f64, without projection.
    pub fn raw_pool(&self) -> Result<DataPool> {
        let points = PointSet::new(self.vectors.mapv(f64::from))?;
        DataPool::new(points, self.ids.clone())
    }
}

pub fn save_cache(cache: &EmbeddingCache, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, cache.to_bytes())?;
    Ok(())
}

pub fn load_cache(path: impl AsRef<Path>) -> Result<EmbeddingCache> {
    EmbeddingCache::from_bytes(&fs::read(path)?)
}

pub fn import_csv(path: impl AsRef<Path>) -> Result<EmbeddingCache> {
    EmbeddingCache::from_csv_reader(fs::File::open(path)?)
}

/// Points paired with the dataset ids they stand for.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPool {
    points: PointSet,
    ids: Vec<u64>,
}

impl DataPool {
    pub fn new(points: PointSet, ids: Vec<u64>) -> Result<Self> {
        if ids.len() != points.len() {
            return Err(Error::contract(format!(
                "{} ids for {} points",
                ids.len(),
                points.len()
            )));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        if let Some(dup) = ids.iter().find(|id| !seen.insert(**id)) {
            return Err(Error::contract(format!("duplicate id {dup}")));
        }
        Ok(DataPool { points, ids })
    }

    /// Pool whose ids are the row positions `0..n`.
    pub fn with_row_ids(points: PointSet) -> Self {
        let ids = (0..points.len() as u64).collect();
        DataPool { points, ids }
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Projects every cached vector; row `i` of the result is `P v_i` and keeps
/// `ids[i]`.
pub fn project(cache: &EmbeddingCache, proj: &ProjectionMatrix) -> Result<DataPool> {
    if cache.dim() != proj.input_dim() {
        return Err(Error::contract(format!(
            "cache dimension {} does not match projection input {}",
            cache.dim(),
            proj.input_dim()
        )));
    }
    let projected = proj.apply(&cache.vectors.mapv(f64::from))?;
    DataPool::new(PointSet::new(projected)?, cache.ids.clone())
}

/// Builds the selection pool for a cache: projected to `dim` when given and
/// smaller than the cache dimension, raw otherwise.
pub fn pool_for_cache(cache: &EmbeddingCache, dim: Option<usize>, seed: u64) -> Result<DataPool> {
    match dim {
        Some(m) if m < cache.dim() => project(cache, &make_projection(cache.dim(), m, seed)?),
        _ => cache.raw_pool(),
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::pairwise_distance;
    use ndarray::{array, Array1};
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn small_cache() -> EmbeddingCache {
        EmbeddingCache::new(
            vec![10, 3, 7],
            array![
                [1.0, -2.5, 0.125, 3.0],
                [0.0, 0.0, 1e-30, -7.75],
                [f32::MAX, f32::MIN_POSITIVE, -0.0, 42.0]
            ],
        )
        .unwrap()
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let cache = small_cache();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.sgec");
        save_cache(&cache, &path).unwrap();
        let loaded = load_cache(&path).unwrap();
        assert_eq!(loaded.ids(), cache.ids());
        assert!(loaded
            .vectors()
            .iter()
            .zip(cache.vectors())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(loaded.to_bytes(), fs::read(&path).unwrap());
    }

    #[test]
    fn header_layout() {
        let bytes = small_cache().to_bytes();
        assert_eq!(&bytes[0..4], b"SGEC");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 4);
        assert_eq!(u64::from_le_bytes(bytes[20..28].try_into().unwrap()), 10);
        assert_eq!(bytes.len(), 20 + 3 * 8 + 3 * 4 * 4);
    }

    fn field_of(err: Error) -> &'static str {
        match err {
            Error::Format { field, .. } => field,
            other => panic!("expected a format error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_files_name_the_field() {
        let good = small_cache().to_bytes();
        assert_eq!(field_of(EmbeddingCache::from_bytes(&[]).unwrap_err()), "magic");

        let mut bad = good.clone();
        bad[0] = b'X';
        assert_eq!(field_of(EmbeddingCache::from_bytes(&bad).unwrap_err()), "magic");

        let mut bad = good.clone();
        bad[4] = 2;
        assert_eq!(field_of(EmbeddingCache::from_bytes(&bad).unwrap_err()), "version");

        assert_eq!(field_of(EmbeddingCache::from_bytes(&good[..12]).unwrap_err()), "n");
        assert_eq!(field_of(EmbeddingCache::from_bytes(&good[..30]).unwrap_err()), "ids");
        assert_eq!(
            field_of(EmbeddingCache::from_bytes(&good[..good.len() - 1]).unwrap_err()),
            "values"
        );

        let mut long = good.clone();
        long.push(0);
        assert_eq!(field_of(EmbeddingCache::from_bytes(&long).unwrap_err()), "values");

        let mut dup = good.clone();
        dup[28..36].copy_from_slice(&10u64.to_le_bytes());
        assert_eq!(field_of(EmbeddingCache::from_bytes(&dup).unwrap_err()), "ids");

        let mut nan = good;
        let at = 20 + 24;
        nan[at..at + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert_eq!(field_of(EmbeddingCache::from_bytes(&nan).unwrap_err()), "values");
    }

    #[test]
    fn huge_header_counts_do_not_allocate() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"SGEC");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&u64::MAX.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(EmbeddingCache::from_bytes(&bytes).is_err());
    }

    #[test]
    fn csv_import_matches_direct_construction() {
        let text = "id,v0,v1\n5,0.1,-2\n9, 3.25 ,1e-3\n";
        let cache = EmbeddingCache::from_csv_reader(text.as_bytes()).unwrap();
        let direct = EmbeddingCache::new(vec![5, 9], array![[0.1f32, -2.0], [3.25, 1e-3]]).unwrap();
        assert_eq!(cache.to_bytes(), direct.to_bytes());

        let headerless = EmbeddingCache::from_csv_reader("5,0.1,-2\n9,3.25,0.001\n".as_bytes()).unwrap();
        assert_eq!(headerless, direct);
    }

    #[test]
    fn csv_errors() {
        assert!(EmbeddingCache::from_csv_reader("".as_bytes()).is_err());
        assert!(EmbeddingCache::from_csv_reader("1,2\n2,3,4\n".as_bytes()).is_err());
        assert!(EmbeddingCache::from_csv_reader("1,2\n1,3\n".as_bytes()).is_err());
        assert!(EmbeddingCache::from_csv_reader("1,x\n".as_bytes()).is_err());
        assert!(EmbeddingCache::from_csv_reader("1,2\nq,3\n".as_bytes()).is_err());
    }

    #[test]
    fn cache_rejects_bad_contents() {
        assert!(EmbeddingCache::new(vec![1, 1], Array2::zeros((2, 2))).is_err());
        assert!(EmbeddingCache::new(vec![1], array![[f32::NAN]]).is_err());
        assert!(EmbeddingCache::new(vec![1, 2], Array2::zeros((1, 2))).is_err());
    }

    #[test]
    fn projection_is_seeded_and_checked() {
        assert_eq!(make_projection(16, 4, 3).unwrap(), make_projection(16, 4, 3).unwrap());
        assert_ne!(make_projection(16, 4, 3).unwrap(), make_projection(16, 4, 4).unwrap());
        assert!(make_projection(4, 5, 0).is_err());
        assert!(make_projection(4, 0, 0).is_err());
    }

    #[test]
    fn projection_entry_statistics() {
        let p = make_projection(512, 64, 11).unwrap();
        let n = p.matrix().len() as f64;
        let mean = p.matrix().sum() / n;
        let var = p.matrix().mapv(|v| (v - mean) * (v - mean)).sum() / (n - 1.0);
        // 32768 draws: standard error of the mean is 0.125 / 181, of the variance ~1.2e-4.
        assert!(mean.abs() < 5.0 * 0.125 / n.sqrt(), "mean {mean}");
        assert!((var - 1.0 / 64.0).abs() < 5.0 * (2.0f64).sqrt() / 64.0 / n.sqrt(), "var {var}");
    }

    #[test]
    fn identity_projection_preserves_points() {
        let cache = small_cache();
        let id = ProjectionMatrix::from_matrix(Array2::eye(4), 0).unwrap();
        let pool = project(&cache, &id).unwrap();
        assert_eq!(pool.points().view(), cache.vectors().mapv(f64::from).view());
        assert_eq!(pool.ids(), cache.ids());
    }

    #[test]
    fn projection_of_zero_and_basis_vectors() {
        let p = make_projection(6, 3, 21).unwrap();
        let mut vectors = Array2::<f32>::zeros((7, 6));
        for j in 0..6 {
            vectors[[j + 1, j]] = 1.0;
        }
        let cache = EmbeddingCache::new((0..7).collect(), vectors).unwrap();
        let pool = project(&cache, &p).unwrap();
        assert!(pool.points().row(0).iter().all(|&v| v == 0.0));
        for j in 0..6 {
            assert_eq!(pool.points().row(j + 1), p.matrix().column(j).to_vec().as_slice());
        }
    }

    #[test]
    fn projection_dimension_mismatch() {
        let p = make_projection(5, 2, 0).unwrap();
        assert!(matches!(project(&small_cache(), &p), Err(Error::Contract(_))));
    }

    #[test]
    fn jl_distance_ratios_concentrate() {
        let p = make_projection(512, 64, 77).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts = Array2::from_shape_simple_fn((100, 512), || rng.sample::<f64, _>(StandardNormal));
        let proj = p.apply(&pts).unwrap();

        let mut pair_rng = ChaCha8Rng::seed_from_u64(6);
        let ratios: Vec<f64> = (0..100)
            .map(|_| {
                let i = pair_rng.gen_range(0..100);
                let j = (i + pair_rng.gen_range(1..100)) % 100;
                let orig = pairwise_distance(&pts.row(i).to_vec(), &pts.row(j).to_vec()).unwrap();
                let low = pairwise_distance(&proj.row(i).to_vec(), &proj.row(j).to_vec()).unwrap();
                low / orig
            })
            .collect();
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!((0.9..=1.1).contains(&mean), "mean ratio {mean}");

        let mut inside = 0;
        let mut total = 0;
        for i in 0..100 {
            for j in i + 1..100 {
                let orig = pairwise_distance(&pts.row(i).to_vec(), &pts.row(j).to_vec()).unwrap();
                let low = pairwise_distance(&proj.row(i).to_vec(), &proj.row(j).to_vec()).unwrap();
                total += 1;
                if (0.6..=1.4).contains(&(low / orig)) {
                    inside += 1;
                }
            }
        }
        assert!(inside as f64 >= 0.95 * total as f64, "{inside}/{total}");
    }

    proptest! {
        #[test]
        fn projection_is_linear(
            u in prop::collection::vec(-5.0..5.0f64, 12),
            v in prop::collection::vec(-5.0..5.0f64, 12),
            a in -3.0..3.0f64,
            b in -3.0..3.0f64,
            seed: u64,
        ) {
            let p = make_projection(12, 5, seed).unwrap();
            let u = Array1::from(u);
            let v = Array1::from(v);
            let combo = (&u * a + &v * b).insert_axis(ndarray::Axis(0));
            let lhs = p.apply(&combo).unwrap();
            let pu = p.apply(&u.insert_axis(ndarray::Axis(0))).unwrap();
            let pv = p.apply(&v.insert_axis(ndarray::Axis(0))).unwrap();
            let rhs = pu * a + pv * b;
            for (l, r) in lhs.iter().zip(rhs.iter()) {
                prop_assert!((l - r).abs() <= 1e-6 * (1.0 + r.abs()));
            }
        }

        #[test]
        fn cache_bytes_round_trip(
            n in 1usize..6,
            d in 1usize..5,
            seed: u64,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let vectors = Array2::from_shape_simple_fn((n, d), || rng.gen::<f32>() * 200.0 - 100.0);
            let ids: Vec<u64> = (0..n as u64).map(|i| i * 31 + seed % 7).collect();
            let cache = EmbeddingCache::new(ids, vectors).unwrap();
            let bytes = cache.to_bytes();
            let back = EmbeddingCache::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes(), bytes);
        }
    }
}
