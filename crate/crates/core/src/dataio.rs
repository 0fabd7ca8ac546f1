//! Dataset ingestion, the binary matrix file format, per-user splits, and
//! the planted-block synthetic generator used by the desk-scale runs.

use std::collections::BTreeSet;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modality::ModalityFeatures;
use crate::numerics::dense::DenseMatrix;
use crate::numerics::rng::SeededRng;
use crate::numerics::scalar::Scalar;

const MATRIX_MAGIC: &[u8; 4] = b"DMMF";

/// Parse `user\titem` interaction lines, 0-indexed decimal. Duplicates
/// collapse; the maximum ids define the universe unless overridden later.
pub fn parse_interactions(text: &str) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let parse = |field: Option<&str>| -> Result<usize> {
            field
                .and_then(|f| f.parse::<usize>().ok())
                .ok_or_else(|| Error::Data(format!("malformed interaction line {}", lineno + 1)))
        };
        let u = parse(parts.next())?;
        let i = parse(parts.next())?;
        if parts.next().is_some() {
            return Err(Error::Data(format!("malformed interaction line {}", lineno + 1)));
        }
        edges.push((u, i));
    }
    edges.sort_unstable();
    edges.dedup();
    Ok(edges)
}

pub fn load_interactions(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    parse_interactions(&text)
}

/// Universe implied by an edge list: the maximum ids plus one. Manifest
/// dimensions override this when present.
pub fn dims_from_edges(edges: &[(usize, usize)]) -> (usize, usize) {
    edges.iter().fold((0, 0), |(u, i), &(eu, ei)| (u.max(eu + 1), i.max(ei + 1)))
}

pub fn write_interactions(path: &Path, edges: &[(usize, usize)]) -> Result<()> {
    let mut out = String::new();
    for &(u, i) in edges {
        out.push_str(&format!("{u}\t{i}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Write a matrix as magic + u32-LE rows + u32-LE cols + row-major f32-LE
/// payload. In 64-bit mode values are narrowed to f32.
pub fn write_matrix<S: Scalar>(path: &Path, m: &DenseMatrix<S>) -> Result<()> {
    let mut buf = Vec::with_capacity(12 + 4 * m.data().len());
    buf.extend_from_slice(MATRIX_MAGIC);
    buf.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    buf.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for v in m.data() {
        buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn load_matrix<S: Scalar>(path: &Path) -> Result<DenseMatrix<S>> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?
        .read_to_end(&mut bytes)?;
    if bytes.len() < 12 || &bytes[..4] != MATRIX_MAGIC {
        return Err(Error::Data(format!("{}: bad matrix file header", path.display())));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = 12 + 4 * rows * cols;
    if bytes.len() != expected {
        return Err(Error::Data(format!(
            "{}: payload is {} bytes, header implies {}",
            path.display(),
            bytes.len() - 12,
            expected - 12
        )));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for chunk in bytes[12..].chunks_exact(4) {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::Data(format!("{}: non-finite payload value", path.display())));
        }
        data.push(S::from_f64(v as f64));
    }
    DenseMatrix::from_vec(rows, cols, data)
}

/// Largest-remainder apportionment of `n` edges over the three splits with
/// a deterministic tie-break (train, then val, then test) and at least one
/// train edge.
fn split_counts(n: usize, ratios: (f64, f64, f64)) -> [usize; 3] {
    let quotas = [n as f64 * ratios.0, n as f64 * ratios.1, n as f64 * ratios.2];
    let mut counts = [0usize; 3];
    let mut fracs = [0.0f64; 3];
    for s in 0..3 {
        counts[s] = quotas[s].floor() as usize;
        fracs[s] = quotas[s] - quotas[s].floor();
    }
    let mut rem = n - counts.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| fracs[b].total_cmp(&fracs[a]).then(a.cmp(&b)));
    for &s in order.iter().cycle().take(3) {
        if rem == 0 {
            break;
        }
        counts[s] += 1;
        rem -= 1;
    }
    if counts[0] == 0 && n > 0 {
        let donor = if counts[1] >= counts[2] { 1 } else { 2 };
        counts[donor] -= 1;
        counts[0] = 1;
    }
    counts
}

/// Per-user stratified split. Every user with at least one edge keeps at
/// least one train edge; the remainder is apportioned to val/test by
/// largest remainder.
pub fn split_dataset(
    edges: &[(usize, usize)],
    ratios: (f64, f64, f64),
    rng: &mut SeededRng,
) -> Result<(Vec<(usize, usize)>, Vec<(usize, usize)>, Vec<(usize, usize)>)> {
    let sum = ratios.0 + ratios.1 + ratios.2;
    if (sum - 1.0).abs() > 1e-9 || ratios.0 <= 0.0 || ratios.1 < 0.0 || ratios.2 < 0.0 {
        return Err(Error::Config(format!("split ratios {ratios:?} must be non-negative and sum to 1")));
    }
    let n_users = edges.iter().map(|&(u, _)| u + 1).max().unwrap_or(0);
    let mut per_user: Vec<Vec<usize>> = vec![Vec::new(); n_users];
    for &(u, i) in edges {
        per_user[u].push(i);
    }
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (u, items) in per_user.iter_mut().enumerate() {
        if items.is_empty() {
            continue;
        }
        items.sort_unstable();
        rng.shuffle(items);
        let [n_train, n_val, _] = split_counts(items.len(), ratios);
        for (pos, &i) in items.iter().enumerate() {
            if pos < n_train {
                train.push((u, i));
            } else if pos < n_train + n_val {
                val.push((u, i));
            } else {
                test.push((u, i));
            }
        }
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok((train, val, test))
}

/// A loaded dataset: splits plus per-modality raw features.
#[derive(Clone, Debug)]
pub struct DatasetBundle<S: Scalar> {
    pub name: String,
    pub n_users: usize,
    pub n_items: usize,
    pub train: Vec<(usize, usize)>,
    pub val: Vec<(usize, usize)>,
    pub test: Vec<(usize, usize)>,
    pub modalities: Vec<ModalityFeatures<S>>,
}

impl<S: Scalar> DatasetBundle<S> {
    /// Hard validation: id ranges, split disjointness, feature shapes.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (split, edges) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for &(u, i) in edges.iter() {
                if u >= self.n_users || i >= self.n_items {
                    return Err(Error::Data(format!(
                        "{split} edge ({u},{i}) outside {}x{}",
                        self.n_users, self.n_items
                    )));
                }
                if !seen.insert((u, i)) {
                    return Err(Error::Data(format!("edge ({u},{i}) appears in more than one split")));
                }
            }
        }
        let mut names = BTreeSet::new();
        for m in &self.modalities {
            if !names.insert(m.name.clone()) {
                return Err(Error::Data(format!("duplicate modality '{}'", m.name)));
            }
            if m.raw.rows() != self.n_items {
                return Err(Error::Data(format!(
                    "modality '{}' has {} rows for {} items",
                    m.name,
                    m.raw.rows(),
                    self.n_items
                )));
            }
            if !m.raw.is_finite() {
                return Err(Error::Data(format!("modality '{}' has non-finite features", m.name)));
            }
        }
        if self.modalities.is_empty() {
            return Err(Error::Data("dataset has no modalities".into()));
        }
        Ok(())
    }

    pub fn modality_names(&self) -> Vec<String> {
        self.modalities.iter().map(|m| m.name.clone()).collect()
    }

    pub fn modality(&self, name: &str) -> Result<&ModalityFeatures<S>> {
        self.modalities
            .iter()
            .find(|m| m.name == name)
            .ok_or_else(|| Error::Config(format!("unknown modality '{name}'")))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModalityEntry {
    pub name: String,
    pub dim: usize,
    pub file: String,
}

/// On-disk description of a dataset directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    pub n_users: usize,
    pub n_items: usize,
    pub train_file: String,
    pub val_file: String,
    pub test_file: String,
    pub modalities: Vec<ModalityEntry>,
}

/// Write a bundle as manifest + split TSVs + one matrix file per modality.
pub fn save_bundle<S: Scalar>(dir: &Path, bundle: &DatasetBundle<S>) -> Result<()> {
    bundle.validate()?;
    fs::create_dir_all(dir)?;
    write_interactions(&dir.join("train.tsv"), &bundle.train)?;
    write_interactions(&dir.join("val.tsv"), &bundle.val)?;
    write_interactions(&dir.join("test.tsv"), &bundle.test)?;
    let mut entries = Vec::new();
    for m in &bundle.modalities {
        let file = format!("features_{}.dmmf", m.name);
        write_matrix(&dir.join(&file), &m.raw)?;
        entries.push(ModalityEntry {
            name: m.name.clone(),
            dim: m.raw.cols(),
            file,
        });
    }
    let manifest = DatasetManifest {
        name: bundle.name.clone(),
        n_users: bundle.n_users,
        n_items: bundle.n_items,
        train_file: "train.tsv".into(),
        val_file: "val.tsv".into(),
        test_file: "test.tsv".into(),
        modalities: entries,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Data(format!("manifest serialization: {e}")))?;
    fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}

/// Load and validate a dataset directory.
pub fn load_bundle<S: Scalar>(dir: &Path) -> Result<DatasetBundle<S>> {
    let manifest_path = dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", manifest_path.display())))?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("manifest: {e}")))?;
    let mut modalities = Vec::new();
    for entry in &manifest.modalities {
        let raw = load_matrix::<S>(&dir.join(&entry.file))?;
        if raw.cols() != entry.dim {
            return Err(Error::Data(format!(
                "modality '{}': file has dim {}, manifest says {}",
                entry.name,
                raw.cols(),
                entry.dim
            )));
        }
        modalities.push(ModalityFeatures::new(&entry.name, raw)?);
    }
    let bundle = DatasetBundle {
        name: manifest.name,
        n_users: manifest.n_users,
        n_items: manifest.n_items,
        train: load_interactions(&dir.join(&manifest.train_file))?,
        val: load_interactions(&dir.join(&manifest.val_file))?,
        test: load_interactions(&dir.join(&manifest.test_file))?,
        modalities,
    };
    bundle.validate()?;
    Ok(bundle)
}

/// Planted-block synthetic dataset description.
#[derive(Clone, Debug)]
pub struct SynthSpec {
    pub n_users: usize,
    pub n_items: usize,
    pub n_blocks: usize,
    /// (name, raw feature dim) per modality.
    pub modalities: Vec<(String, usize)>,
    /// Feature noise scale around the block centroid.
    pub noise: f64,
    pub p_intra: f64,
    pub p_cross: f64,
    pub ratios: (f64, f64, f64),
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_users: 200,
            n_items: 100,
            n_blocks: 2,
            modalities: vec![("v".into(), 64), ("t".into(), 32)],
            noise: 0.1,
            p_intra: 0.3,
            p_cross: 0.01,
            ratios: (0.8, 0.1, 0.1),
        }
    }
}

/// Block id of an index when `total` indices are split into `blocks` groups;
/// the last block absorbs the remainder.
fn block_of(idx: usize, total: usize, blocks: usize) -> usize {
    let size = total / blocks;
    (idx / size.max(1)).min(blocks - 1)
}

/// Generate a planted-block dataset: users and items partition into blocks,
/// intra-block interactions dominate, and each modality's item features are
/// the block centroid plus Gaussian noise, so feature similarity correlates
/// with co-interaction.
pub fn synth_generate<S: Scalar>(spec: &SynthSpec, rng: &mut SeededRng) -> Result<DatasetBundle<S>> {
    if spec.n_blocks == 0 || spec.n_blocks > spec.n_users.min(spec.n_items) {
        return Err(Error::Config(format!(
            "block count {} incompatible with {} users / {} items",
            spec.n_blocks, spec.n_users, spec.n_items
        )));
    }
    if spec.modalities.is_empty() {
        return Err(Error::Config("at least one modality required".into()));
    }
    if spec.modalities.iter().any(|(n, d)| n.is_empty() || *d == 0) {
        return Err(Error::Config("modality specs need a name and a positive dim".into()));
    }
    if !(0.0..=1.0).contains(&spec.p_intra) || !(0.0..=1.0).contains(&spec.p_cross) || spec.noise < 0.0 {
        return Err(Error::Config("probabilities must be in [0,1] and noise non-negative".into()));
    }

    let mut edge_rng = rng.derive(1);
    let mut edges = Vec::new();
    for u in 0..spec.n_users {
        let ub = block_of(u, spec.n_users, spec.n_blocks);
        let mut degree = 0;
        for i in 0..spec.n_items {
            let p = if ub == block_of(i, spec.n_items, spec.n_blocks) {
                spec.p_intra
            } else {
                spec.p_cross
            };
            if edge_rng.uniform() < p {
                edges.push((u, i));
                degree += 1;
            }
        }
        if degree == 0 {
            // force one intra-block interaction so every user is trainable
            let size = spec.n_items / spec.n_blocks;
            let start = ub * size;
            let span = if ub == spec.n_blocks - 1 { spec.n_items - start } else { size };
            edges.push((u, start + edge_rng.uniform_usize(span)));
        }
    }

    let mut feat_rng = rng.derive(2);
    let mut modalities = Vec::new();
    for (name, dim) in &spec.modalities {
        let centroids = feat_rng.gaussian_matrix::<S>(spec.n_blocks, *dim);
        let mut raw = DenseMatrix::zeros(spec.n_items, *dim);
        for i in 0..spec.n_items {
            let b = block_of(i, spec.n_items, spec.n_blocks);
            for (v, &cv) in raw.row_mut(i).iter_mut().zip(centroids.row(b)) {
                *v = cv + S::from_f64(spec.noise * feat_rng.normal());
            }
        }
        modalities.push(ModalityFeatures::new(name, raw)?);
    }

    let mut split_rng = rng.derive(3);
    let (train, val, test) = split_dataset(&edges, spec.ratios, &mut split_rng)?;
    let bundle = DatasetBundle {
        name: "synth".into(),
        n_users: spec.n_users,
        n_items: spec.n_items,
        train,
        val,
        test,
        modalities,
    };
    bundle.validate()?;
    Ok(bundle)
}

/// Resolve a dataset directory from a path that may be the directory itself
/// or its manifest file.
pub fn dataset_dir(path: &Path) -> PathBuf {
    if path.is_file() {
        path.parent().map(Path::to_path_buf).unwrap_or_else(|| path.to_path_buf())
    } else {
        path.to_path_buf()
    }
}
