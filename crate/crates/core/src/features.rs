//! Region features for premise images and token embeddings for hypotheses.
//!
//! # Feature store layout
//!
//! A store is a manifest file with one JSON record per line,
//! `{"image_id": "...", "path": "relative/file.bin"}`, with paths resolved
//! against the manifest's directory. Each matrix file is:
//!
//! | offset | size  | content                              |
//! |--------|-------|--------------------------------------|
//! | 0      | 4     | magic `b"RFM1"`                      |
//! | 4      | 4     | reserved, zero                       |
//! | 8      | 4     | K (regions), u32 little-endian       |
//! | 12     | 4     | D (feature dims), u32 little-endian  |
//! | 16     | 4·K·D | f32 little-endian, row-major         |

use std::collections::{BTreeSet, HashMap};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const FEATURE_MAGIC: [u8; 4] = *b"RFM1";
const HEADER_LEN: usize = 16;

/// Default region count of a standard bottom-up extractor.
pub const DEFAULT_REGIONS: usize = 36;
/// Default region feature dimension of a standard bottom-up extractor.
pub const DEFAULT_FEATURE_DIM: usize = 2048;

/// K region vectors of dimension D for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionFeatureMatrix {
    pub image_id: String,
    features: Array2<f32>,
}

impl RegionFeatureMatrix {
    pub fn new(image_id: impl Into<String>, features: Array2<f32>) -> Result<Self> {
        let (k, d) = features.dim();
        if k == 0 || d == 0 {
            return Err(Error::Argument(format!("region matrix must be non-empty, got {k}x{d}")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("region matrix contains non-finite entries".into()));
        }
        Ok(RegionFeatureMatrix {
            image_id: image_id.into(),
            features: features.as_standard_layout().into_owned(),
        })
    }

    pub fn features(&self) -> &Array2<f32> {
        &self.features
    }

    pub fn regions(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn to_f64(&self) -> Array2<f64> {
        self.features.mapv(f64::from)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (k, d) = self.features.dim();
        let mut buf = Vec::with_capacity(HEADER_LEN + 4 * k * d);
        buf.extend_from_slice(&FEATURE_MAGIC);
        buf.extend_from_slice(&0u32.to_le_bytes());
        buf.extend_from_slice(&(k as u32).to_le_bytes());
        buf.extend_from_slice(&(d as u32).to_le_bytes());
        for v in self.features.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf
    }

    pub fn from_bytes(image_id: impl Into<String>, bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!("feature file has {} bytes, header needs 16", bytes.len())));
        }
        if bytes[..4] != FEATURE_MAGIC {
            return Err(Error::Format("bad feature file magic".into()));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
        let (k, d) = (word(8), word(12));
        let expected = HEADER_LEN + 4 * k * d;
        if bytes.len() != expected {
            return Err(Error::Format(format!(
                "feature header says {k}x{d} ({expected} bytes) but file has {} bytes",
                bytes.len()
            )));
        }
        let values: Vec<f32> = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let features = Array2::from_shape_vec((k, d), values).map_err(|e| Error::Format(e.to_string()))?;
        RegionFeatureMatrix::new(image_id, features).map_err(|e| Error::Format(e.to_string()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestEntry {
    image_id: String,
    path: PathBuf,
}

/// Read-only, manifest-indexed region feature store.
#[derive(Debug, Clone)]
pub struct FeatureStore {
    root: PathBuf,
    entries: HashMap<String, PathBuf>,
}

impl FeatureStore {
    pub fn open(manifest: impl AsRef<Path>) -> Result<Self> {
        let manifest = manifest.as_ref();
        let file = File::open(manifest).map_err(|e| Error::io(manifest, e))?;
        let root = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut entries = HashMap::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(manifest, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: manifest.to_path_buf(),
                line: idx + 1,
                message: e.to_string(),
            })?;
            entries.insert(entry.image_id, entry.path);
        }
        Ok(FeatureStore { root, entries })
    }

    pub fn contains(&self, image_id: &str) -> bool {
        self.entries.contains_key(image_id)
    }

    pub fn image_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn load(&self, image_id: &str) -> Result<RegionFeatureMatrix> {
        let rel = self
            .entries
            .get(image_id)
            .ok_or_else(|| Error::NotFound(format!("image {image_id:?} not in feature store")))?;
        let path = self.root.join(rel);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        RegionFeatureMatrix::from_bytes(image_id, &bytes)
    }
}

pub fn load_region_features(store: &FeatureStore, image_id: &str) -> Result<RegionFeatureMatrix> {
    store.load(image_id)
}

/// Writes matrices as individual files plus a manifest in `dir`.
pub fn write_feature_store<'a>(
    dir: impl AsRef<Path>,
    matrices: impl IntoIterator<Item = &'a RegionFeatureMatrix>,
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let feat_dir = dir.join("regions");
    fs::create_dir_all(&feat_dir).map_err(|e| Error::io(&feat_dir, e))?;
    let manifest_path = dir.join("manifest.jsonl");
    let manifest = File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let mut manifest = BufWriter::new(manifest);
    for (i, m) in matrices.into_iter().enumerate() {
        let rel = PathBuf::from("regions").join(format!("{i:08}.bin"));
        let path = dir.join(&rel);
        fs::write(&path, m.to_bytes()).map_err(|e| Error::io(&path, e))?;
        let entry = ManifestEntry {
            image_id: m.image_id.clone(),
            path: rel,
        };
        let line = serde_json::to_string(&entry).expect("manifest entries serialize");
        writeln!(manifest, "{line}").map_err(|e| Error::io(&manifest_path, e))?;
    }
    manifest.flush().map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}

/// Standard-normal region features, deterministic in `seed`.
pub fn synth_features(image_id: impl Into<String>, seed: u64, regions: usize, dim: usize) -> Result<RegionFeatureMatrix> {
    if regions == 0 || dim == 0 {
        return Err(Error::Argument(format!("K and D must be positive, got K={regions}, D={dim}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<f32> = (0..regions * dim)
        .map(|_| {
            let x: f64 = StandardNormal.sample(&mut rng);
            x as f32
        })
        .collect();
    RegionFeatureMatrix::new(image_id, Array2::from_shape_vec((regions, dim), values).unwrap())
}

/// Token vectors of a fixed dimension plus a vector for unknown tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Array1<f64>>,
    unknown: Array1<f64>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, vectors: HashMap<String, Array1<f64>>, unknown: Array1<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Argument("embedding dimension must be positive".into()));
        }
        if unknown.len() != dim {
            return Err(Error::Shape(format!("unknown vector has {} dims, table has {dim}", unknown.len())));
        }
        if let Some((tok, v)) = vectors.iter().find(|(_, v)| v.len() != dim) {
            return Err(Error::Shape(format!("vector for {tok:?} has {} dims, table has {dim}", v.len())));
        }
        Ok(EmbeddingTable { dim, vectors, unknown })
    }

    /// Parses the whitespace-separated text format: a token followed by `E`
    /// floats on each line. The unknown vector is the mean of all vectors.
    pub fn load_text(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut vectors = HashMap::new();
        let mut dim = None;
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message,
            };
            let values = parts
                .map(|p| p.parse::<f64>().map_err(|e| parse_err(format!("{p:?}: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            match dim {
                None => dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(parse_err(format!("expected {d} values, found {}", values.len())));
                }
                _ => {}
            }
            vectors.insert(token.to_string(), Array1::from(values));
        }
        let dim = dim.ok_or_else(|| Error::Format(format!("{} holds no vectors", path.display())))?;
        // Sorted order keeps the floating-point sum identical across runs.
        let mut keys: Vec<&String> = vectors.keys().collect();
        keys.sort();
        let mut unknown = Array1::zeros(dim);
        for k in keys {
            unknown += &vectors[k];
        }
        if !vectors.is_empty() {
            unknown /= vectors.len() as f64;
        }
        EmbeddingTable::new(dim, vectors, unknown)
    }

    /// Seeded table over `vocab` with entries uniform in ±0.1; used when no
    /// pretrained vectors are supplied.
    pub fn random<I, S>(vocab: I, dim: usize, seed: u64) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: BTreeSet<String> = vocab.into_iter().map(Into::into).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Uniform::new_inclusive(-0.1, 0.1).unwrap();
        let draw = |rng: &mut ChaCha8Rng| Array1::from_shape_fn(dim, |_| dist.sample(rng));
        let unknown = draw(&mut rng);
        let vectors = tokens.into_iter().map(|t| (t, draw(&mut rng))).collect();
        EmbeddingTable::new(dim, vectors, unknown)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&Array1<f64>> {
        self.vectors.get(token)
    }

    pub fn unknown(&self) -> &Array1<f64> {
        &self.unknown
    }

    pub fn lookup(&self, token: &str) -> &Array1<f64> {
        self.vectors.get(token).unwrap_or(&self.unknown)
    }

    /// Tokens in sorted order.
    pub fn tokens(&self) -> Vec<&str> {
        let mut t: Vec<&str> = self.vectors.keys().map(String::as_str).collect();
        t.sort_unstable();
        t
    }
}

/// Looks up each token, mapping unknown tokens to the unknown vector.
pub fn embed_tokens<S: AsRef<str>>(tokens: &[S], table: &EmbeddingTable) -> Result<Vec<Array1<f64>>> {
    if tokens.is_empty() {
        return Err(Error::Argument("cannot embed an empty token sequence".into()));
    }
    Ok(tokens.iter().map(|t| table.lookup(t.as_ref()).clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn store_returns_exact_matrix() {
        let dir = tempfile::tempdir().unwrap();
        let m = RegionFeatureMatrix::new(
            "img1",
            array![[1.0f32, 2.0, 3.0, 4.0], [-1.5, 0.0, 0.25, 8.0], [9.0, 1e-7, -3.0, 2.5]],
        )
        .unwrap();
        let manifest = write_feature_store(dir.path(), [&m]).unwrap();
        let store = FeatureStore::open(&manifest).unwrap();
        assert_eq!(load_region_features(&store, "img1").unwrap(), m);
        assert!(matches!(store.load("imgX"), Err(Error::NotFound(_))));
    }

    #[test]
    fn header_shape_mismatch_is_format_error() {
        let m = synth_features("a", 3, 2, 3).unwrap();
        let mut bytes = m.to_bytes();
        bytes.truncate(bytes.len() - 4);
        assert!(matches!(RegionFeatureMatrix::from_bytes("a", &bytes), Err(Error::Format(_))));
        let mut bytes = m.to_bytes();
        bytes[0] = b'X';
        assert!(matches!(RegionFeatureMatrix::from_bytes("a", &bytes), Err(Error::Format(_))));
    }

    #[test]
    fn synthetic_features_are_seeded() {
        let a = synth_features("x", 1, 3, 4).unwrap();
        assert_eq!(a.features().dim(), (3, 4));
        assert_eq!(a, synth_features("x", 1, 3, 4).unwrap());
        assert_ne!(a.features(), synth_features("x", 2, 3, 4).unwrap().features());
        assert!(synth_features("x", 1, 0, 4).is_err());
        assert!(synth_features("x", 1, 3, 0).is_err());
    }

    #[test]
    fn synthetic_mean_near_zero() {
        let m = synth_features("x", 11, 100, 1000).unwrap();
        let mean = m.features().iter().map(|&v| f64::from(v)).sum::<f64>() / 1e5;
        assert!(mean.abs() < 0.02, "{mean}");
    }

    fn small_table() -> EmbeddingTable {
        let vectors = HashMap::from([
            ("a".to_string(), array![1.0, 0.0]),
            ("dog".to_string(), array![0.0, 1.0]),
        ]);
        EmbeddingTable::new(2, vectors, array![0.5, 0.5]).unwrap()
    }

    #[test]
    fn embed_lookup_and_unknown() {
        let t = small_table();
        assert_eq!(embed_tokens(&["a", "dog"], &t).unwrap(), vec![array![1.0, 0.0], array![0.0, 1.0]]);
        assert_eq!(embed_tokens(&["zzzq"], &t).unwrap(), vec![array![0.5, 0.5]]);
        let empty: [&str; 0] = [];
        assert!(matches!(embed_tokens(&empty, &t), Err(Error::Argument(_))));
    }

    #[test]
    fn text_table_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("glove.txt");
        fs::write(&path, "the 0.1 0.2 0.3\ndog -1 0 1\n").unwrap();
        let t = EmbeddingTable::load_text(&path).unwrap();
        assert_eq!(t.dim(), 3);
        assert_eq!(t.lookup("dog"), &array![-1.0, 0.0, 1.0]);
        assert!((t.unknown()[0] - (-0.45)).abs() < 1e-12);
        fs::write(&path, "the 0.1 0.2\ndog 1\n").unwrap();
        assert!(matches!(EmbeddingTable::load_text(&path), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn random_table_is_seeded() {
        let a = EmbeddingTable::random(["x", "y"], 4, 9).unwrap();
        assert_eq!(a, EmbeddingTable::random(["y", "x"], 4, 9).unwrap());
        assert_eq!(a.len(), 2);
        assert_eq!(a.unknown().len(), 4);
    }
}
